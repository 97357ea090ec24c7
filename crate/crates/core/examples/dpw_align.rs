//! DPW distance and optimal hierarchical warping path between a small "J"
//! shape and a stretched, shifted copy of it. Writes the alignment dump to
//! stdout and compares against the point-wise L1 distance.
//!
//! cargo run --example dpw_align

use warpmatch::dpw::{align, alignment_dump, validate_hipa};
use warpmatch::FeatureMatrix;

fn main() -> warpmatch::Result<()> {
    let s = FeatureMatrix::from_scalar_rows(&[
        [0.0, 0.0, 9.0, 0.0],
        [0.0, 0.0, 9.0, 0.0],
        [9.0, 0.0, 9.0, 0.0],
        [0.0, 9.0, 0.0, 0.0],
    ])?;
    // Shifted right by one, second row duplicated, last row dropped.
    let e = FeatureMatrix::from_scalar_rows(&[
        [0.0, 0.0, 0.0, 9.0],
        [0.0, 0.0, 0.0, 9.0],
        [0.0, 0.0, 0.0, 9.0],
        [0.0, 9.0, 0.0, 9.0],
    ])?;

    let (d, path) = align(&s, &e)?;
    validate_hipa(&path, &s, &e).expect("optimal paths are valid");
    println!("dpw distance {d}, point-wise L1 {}", s.l1_distance(&e)?);
    for r in &path.rows {
        println!("S row {} <-> E row {}: {:?}", r.hs, r.he, r.cols);
    }
    print!("hs,ws,he,we,cost\n{}", alignment_dump(&s, &e, &path)?);
    Ok(())
}
