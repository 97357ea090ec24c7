//! DTW between two scalar sequences, with the recovered warping path.
//!
//! cargo run --example dtw_sequences

use warpmatch::dtw::{dtw, dtw_path};

fn main() -> warpmatch::Result<()> {
    let a: Vec<[f64; 1]> = [0.0, 1.0, 3.0, 3.0, 2.0, 0.0].map(|v| [v]).to_vec();
    let b: Vec<[f64; 1]> = [0.0, 0.0, 1.0, 3.0, 2.0, 1.0, 0.0].map(|v| [v]).to_vec();

    let (d, table) = dtw(&a, &b)?;
    println!("dtw distance: {d}");
    for (i, j) in dtw_path(&table) {
        println!("  a[{i}] = {} <-> b[{j}] = {}", a[i][0], b[j][0]);
    }
    Ok(())
}
