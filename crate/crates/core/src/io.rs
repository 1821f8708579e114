//! Point ingestion: CSV with optional header and a compact binary format.
//!
//! Binary layout (little endian): the magic `MPKM`, `u32` row count,
//! `u32` dimension, then `n * d` `f64` values in row order.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::PointSet;

pub const MAGIC: &[u8; 4] = b"MPKM";

/// Parse CSV rows of coordinates. A first row that does not parse as numbers is
/// treated as a header.
pub fn read_csv<R: Read>(reader: R) -> Result<PointSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::input(format!("row {}: {e}", i + 1))),
        }
    }
    if rows.is_empty() {
        return Err(Error::input("no points found"));
    }
    PointSet::from_rows(&rows)
}

pub fn write_csv<W: Write>(points: &PointSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = (0..points.dim()).map(|j| format!("x{j}")).collect();
    w.write_record(&header)?;
    for p in points.iter() {
        w.write_record(p.iter().map(|x| format!("{x:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_binary<W: Write>(points: &PointSet, mut writer: W) -> Result<()> {
    let n = u32::try_from(points.len()).map_err(|_| Error::input("too many points for binary format"))?;
    let d = u32::try_from(points.dim()).map_err(|_| Error::input("dimension too large for binary format"))?;
    writer.write_all(MAGIC)?;
    writer.write_all(&n.to_le_bytes())?;
    writer.write_all(&d.to_le_bytes())?;
    for x in points.coords() {
        writer.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut reader: R) -> Result<PointSet> {
    let mut head = [0u8; 12];
    reader.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(Error::input("bad magic, expected MPKM"));
    }
    let n = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
    let mut buf = vec![0u8; n * d * 8];
    reader.read_exact(&mut buf)?;
    let coords = buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
    PointSet::new(d, coords)
}

/// Load by extension: `.bin` is binary, anything else is CSV.
pub fn load(path: &std::path::Path) -> Result<PointSet> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    if path.extension().is_some_and(|e| e == "bin") {
        read_binary(file)
    } else {
        read_csv(file)
    }
}
