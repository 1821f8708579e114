mod common;

use mpkm_core::io::{load, read_binary, read_csv, write_binary, write_csv};

#[test]
fn csv_with_header_round_trips() {
    let p = common::uniform(20, 3, 4.0, 8);
    let mut buf = Vec::new();
    write_csv(&p, &mut buf).unwrap();
    assert!(buf.starts_with(b"x0,x1,x2\n"));
    let q = read_csv(buf.as_slice()).unwrap();
    assert_eq!(p.coords(), q.coords());
    assert_eq!(q.dim(), 3);
}

#[test]
fn csv_without_header() {
    let q = read_csv("1,2\n3, 4\n".as_bytes()).unwrap();
    assert_eq!(q.coords(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn csv_rejects_ragged_and_garbage() {
    assert!(read_csv("1,2\n3\n".as_bytes()).is_err());
    assert!(read_csv("1,2\n3,abc\n".as_bytes()).is_err());
    assert!(read_csv("a,b\n".as_bytes()).is_err());
    assert!(read_csv("1,nan\n".as_bytes()).is_err());
}

#[test]
fn binary_round_trips() {
    let p = common::uniform(17, 5, 3.0, 2);
    let mut buf = Vec::new();
    write_binary(&p, &mut buf).unwrap();
    assert_eq!(&buf[..4], b"MPKM");
    assert_eq!(buf.len(), 12 + 17 * 5 * 8);
    let q = read_binary(buf.as_slice()).unwrap();
    assert_eq!(p.coords(), q.coords());
}

#[test]
fn binary_rejects_bad_magic_and_truncation() {
    let p = common::line(&[0.0, 1.0]);
    let mut buf = Vec::new();
    write_binary(&p, &mut buf).unwrap();
    assert!(read_binary(&buf[..buf.len() - 1]).is_err());
    buf[0] = b'X';
    assert!(read_binary(buf.as_slice()).is_err());
}

#[test]
fn load_dispatches_on_extension() {
    let dir = tempfile::tempdir().unwrap();
    let p = common::uniform(10, 2, 5.0, 4);
    let bin = dir.path().join("p.bin");
    let csv = dir.path().join("p.csv");
    write_binary(&p, std::fs::File::create(&bin).unwrap()).unwrap();
    write_csv(&p, std::fs::File::create(&csv).unwrap()).unwrap();
    assert_eq!(load(&bin).unwrap().coords(), p.coords());
    assert_eq!(load(&csv).unwrap().coords(), p.coords());
    assert!(load(&dir.path().join("missing.csv")).is_err());
}
