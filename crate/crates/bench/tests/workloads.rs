use mpkm_bench::{planted, uniform};

#[test]
fn workloads_are_seeded_and_normalized() {
    let a = uniform(200, 3, 9);
    assert_eq!(a.coords(), uniform(200, 3, 9).coords());
    assert_ne!(a.coords(), uniform(200, 3, 10).coords());
    assert!((a.pairwise_extremes().0 - 1.0).abs() < 1e-12);
    let p = planted(3, 4, 1e6, 2, 1);
    assert_eq!(p.len(), 12);
    assert!((p.pairwise_extremes().0 - 1.0).abs() < 1e-12);
}
