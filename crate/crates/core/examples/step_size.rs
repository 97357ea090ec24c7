//! Exploration step size: the same task matched with several values of
//! alpha. Larger steps need fewer outer iterations but commit to more
//! uncertain pairs at once.
//!
//! cargo run --release --example step_size

use std::time::Instant;

use warpmatch::eval::match_topk;
use warpmatch::swim::{run_swim, SwimConfig};
use warpmatch::synth::{gen_task, SynthConfig};

fn main() -> warpmatch::Result<()> {
    let task = gen_task(&SynthConfig::new(20, 10, 10, 8, 1))?;
    let (seen, emerging) = (task.seen.matrices(), task.emerging.matrices());
    println!("alpha,iterations,top1,top5,seconds");
    for alpha in [1, 2, 5, 10, 20] {
        let start = Instant::now();
        let cfg = SwimConfig { alpha, seed: 1, ..SwimConfig::default() };
        let out = run_swim(&seen, &emerging, &cfg, None)?;
        let r = match_topk(&task.seen, &task.emerging, &out.params, 5)?;
        println!(
            "{alpha},{},{},{},{:.1}",
            out.trace.iterations.len(),
            r.top1,
            r.top5,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
