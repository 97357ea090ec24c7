//! Round trips through the on-disk formats: FMX matrices, scalar CSV,
//! dataset manifests and adapter checkpoints.
//!
//! cargo run --example file_formats -- [dir]

use std::path::PathBuf;

use warpmatch::adapter::{init_adapter, load_checkpoint, save_checkpoint};
use warpmatch::io::{load_dataset, load_matrix, save_csv_matrix, save_dataset, save_matrix};
use warpmatch::synth::{gen_task, SynthConfig};
use warpmatch::FeatureMatrix;

fn main() -> warpmatch::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("warpmatch-formats"));
    std::fs::create_dir_all(&dir).expect("output dir");

    let task = gen_task(&SynthConfig::new(4, 5, 6, 3, 1))?;
    let m = &task.seen.entries()[0].matrix;
    save_matrix(m, dir.join("one.fmx"))?;
    assert_eq!(&load_matrix(dir.join("one.fmx"))?, m);

    let scalar = FeatureMatrix::from_scalar_rows(&[[1.0, 2.5], [3.0, 4.0]])?;
    save_csv_matrix(&scalar, dir.join("scalar.csv"))?;
    assert_eq!(load_matrix(dir.join("scalar.csv"))?, scalar);

    save_dataset(&task.seen, dir.join("seen.manifest"), "seen")?;
    let back = load_dataset(dir.join("seen.manifest"))?;
    assert_eq!(back.entries(), task.seen.entries());

    let params = init_adapter(3, 5, 9)?;
    save_checkpoint(&params, dir.join("adapter.lfa"))?;
    let back = load_checkpoint(dir.join("adapter.lfa"))?.expect("trained adapter");
    assert_eq!(back.layers(), params.layers());

    println!("wrote and re-read every format under {}", dir.display());
    Ok(())
}
