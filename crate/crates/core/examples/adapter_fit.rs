//! Fit the element-wise feature adapter to a known per-channel
//! sigmoid-affine map from element pairs alone, then save it.
//!
//! cargo run --example adapter_fit

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use warpmatch::adapter::{init_adapter, mean_loss, save_checkpoint, PairSet, TrainConfig, Trainer};
use warpmatch::synth::ModalityMap;

fn main() -> warpmatch::Result<()> {
    let c = 4;
    let hidden_map = ModalityMap::random(c, 1.0, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    // Inputs are the shifted elements; targets the originals.
    let mut pairs = PairSet::new(c);
    let mut shifted = vec![0.0; c];
    for _ in 0..500 {
        let x: Vec<f64> = (0..c).map(|_| rng.random_range(0.1..0.9)).collect();
        hidden_map.apply(&x, &mut shifted);
        pairs.push(&shifted, &x)?;
    }

    let mut trainer = Trainer::new(init_adapter(c, 16, 1)?);
    println!("initial loss {:.5}", mean_loss(trainer.params(), &pairs)?);
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        epochs: 200,
        dropout: false,
        ..TrainConfig::default()
    };
    for round in 1..=5 {
        let report = trainer.train(&pairs, &cfg)?;
        println!("round {round}: loss {:.5}", report.final_loss());
    }
    let out = std::env::temp_dir().join("warpmatch-adapter.lfa");
    save_checkpoint(trainer.params(), &out)?;
    println!("saved {} parameters to {}", trainer.params().param_count(), out.display());
    Ok(())
}
