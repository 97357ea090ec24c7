//! Pairwise DPW distance table between two sets, serial and on the rayon
//! pool (set RAYON_NUM_THREADS to control workers). Both give identical
//! tables.
//!
//! cargo run --release --example distance_table -- [n] [channels]

use std::time::Instant;

use warpmatch::swim::{dpw_distance_matrix, dpw_distance_matrix_serial};
use warpmatch::synth::{gen_task, SynthConfig};

fn main() -> warpmatch::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let n = args.next().flatten().unwrap_or(30);
    let c = args.next().flatten().unwrap_or(160);
    let task = gen_task(&SynthConfig::new(n, 10, 10, c, 0))?;
    let (seen, emerging) = (task.seen.matrices(), task.emerging.matrices());

    let start = Instant::now();
    let serial = dpw_distance_matrix_serial(&seen, &emerging)?;
    let t_serial = start.elapsed();
    let start = Instant::now();
    let parallel = dpw_distance_matrix(&seen, &emerging)?;
    let t_parallel = start.elapsed();
    assert_eq!(serial, parallel);

    println!("{n}x{n} table of 10x10x{c} matrices");
    println!("serial   {t_serial:?} ({:?} per pair)", t_serial / (n * n) as u32);
    println!("parallel {t_parallel:?} on {} threads", rayon::current_num_threads());
    Ok(())
}
