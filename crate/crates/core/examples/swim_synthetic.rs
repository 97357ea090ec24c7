//! End-to-end unsupervised matching on a synthetic task: SWIM grows the
//! matched set one pair at a time, retraining the adapter each round. Prints
//! tracked accuracy per round and compares the final DPW matching against
//! the point-wise KNN baseline.
//!
//! cargo run --release --example swim_synthetic -- [seed]

use warpmatch::adapter::AdapterParams;
use warpmatch::eval::{knn_baseline, match_topk};
use warpmatch::swim::{run_swim, SwimConfig};
use warpmatch::synth::{gen_task, SynthConfig};

fn main() -> warpmatch::Result<()> {
    env_logger::init();
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let task = gen_task(&SynthConfig::new(20, 10, 10, 8, seed))?;
    let truth = task.truth_indices();

    let raw = match_topk(&task.seen, &task.emerging, &AdapterParams::identity(8, 1, 0)?, 5)?;
    println!("without adaptation: top1 {:.2}", raw.top1);

    let cfg = SwimConfig { seed, ..SwimConfig::default() };
    let out = run_swim(&task.seen.matrices(), &task.emerging.matrices(), &cfg, Some(&truth))?;
    for it in &out.trace.iterations {
        println!(
            "T={:2} n={:2} sloma iters={:2} top1={:.2} top5={:.2}",
            it.t,
            it.n,
            it.sloma.iterations.len(),
            it.top1.unwrap_or(0.0),
            it.top5.unwrap_or(0.0)
        );
    }
    let sum = match_topk(&task.seen, &task.emerging, &out.params, 5)?;
    let knn = knn_baseline(&task.seen, &task.emerging, &out.params, 5)?;
    println!("final: dpw top1 {:.2} top5 {:.2} | l1 top1 {:.2} top5 {:.2}", sum.top1, sum.top5, knn.top1, knn.top5);
    Ok(())
}
