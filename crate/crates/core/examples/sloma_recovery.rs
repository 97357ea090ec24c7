//! SLoMa on correctly paired but modality-shifted matrices: the adapter is
//! retrained along the optimal warping paths until its weights stop moving,
//! and the mean DPW distance collapses.
//!
//! cargo run --release --example sloma_recovery

use warpmatch::adapter::{AdapterParams, TrainConfig};
use warpmatch::sloma::{mean_match_cost, run_sloma_observed, MatchedPairSet, SlomaConfig};
use warpmatch::synth::{gen_task, SynthConfig};

fn main() -> warpmatch::Result<()> {
    let task = gen_task(&SynthConfig {
        warp: 0.0,
        noise: 0.0,
        ..SynthConfig::new(10, 10, 10, 8, 6)
    })?;
    let (seen, emerging) = (task.seen.matrices(), task.emerging.matrices());
    let pairs = MatchedPairSet::new(task.truth_indices().into_iter().enumerate().map(|(l, k)| (k, l)).collect())?;

    let p0 = AdapterParams::identity(8, 16, 6)?;
    let before = mean_match_cost(&seen, &emerging, &pairs, &p0)?;
    let cfg = SlomaConfig {
        max_iters: 5000,
        train: TrainConfig {
            dropout: false,
            ..TrainConfig::default()
        },
        ..SlomaConfig::default()
    };
    let out = run_sloma_observed(&seen, &emerging, &pairs, p0, &cfg, |t, _| {
        if t % 50 == 0 {
            eprintln!("iteration {t}");
        }
    })?;
    for it in out.trace.iterations.iter().step_by(40) {
        println!(
            "t={:4} match_cost={:9.4} loss={:.6} delta={:.2e}",
            it.t, it.match_cost, it.train_loss, it.param_delta
        );
    }
    let after = mean_match_cost(&seen, &emerging, &pairs, &out.params)?;
    println!(
        "mean dpw {before:.3} -> {after:.4} after {} iterations (converged: {})",
        out.trace.iterations.len(),
        out.trace.converged
    );
    Ok(())
}
