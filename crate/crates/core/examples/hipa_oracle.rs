//! Brute-force check of the DPW dynamic program: enumerate every
//! hierarchical warping path between two tiny random matrices and confirm
//! that the cheapest one costs exactly the DPW distance.
//!
//! cargo run --example hipa_oracle -- [seed]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use warpmatch::dpw::{align, enumerate_hipas, path_cost};
use warpmatch::FeatureMatrix;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> FeatureMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(0..10) as f64).collect();
    FeatureMatrix::new(rows, cols, 1, data).unwrap()
}

fn main() -> warpmatch::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = random(&mut rng, 3, 2);
    let e = random(&mut rng, 2, 3);

    let mut count = 0usize;
    let mut best = f64::INFINITY;
    for p in enumerate_hipas(&s, &e)? {
        best = best.min(path_cost(&s, &e, &p)?);
        count += 1;
    }
    let (d, p) = align(&s, &e)?;
    println!("{count} valid paths, cheapest {best}");
    println!("dpw distance {d}, returned path cost {}", path_cost(&s, &e, &p)?);
    assert!((best - d).abs() < 1e-9);
    Ok(())
}
