use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use warpmatch::adapter::{load_checkpoint, save_checkpoint, AdapterParams};
use warpmatch::config::RunConfig;
use warpmatch::eval::{knn_baseline, match_topk, MatchReport};
use warpmatch::io::{load_dataset, load_matrix, save_dataset};
use warpmatch::swim::run_swim;
use warpmatch::synth::{gen_task, truth_indices};
use warpmatch::{dpw, Dataset, Error, Result};

#[derive(Parser)]
#[command(name = "warpmatch", version, about = "DPW distances and unsupervised cross-modality matching")]
struct Cli {
    /// Worker threads for distance tables.
    #[arg(long, global = true, env = "WARPMATCH_WORKERS")]
    workers: Option<usize>,
    /// Debug logging.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Distances and alignments between two matrix files.
    #[command(subcommand)]
    Dpw(DpwCmd),
    /// Synthetic task generation.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Full unsupervised matching runs.
    #[command(name = "match", subcommand)]
    Match(MatchCmd),
    /// Ranked evaluation of an adapter.
    #[command(subcommand)]
    Eval(EvalCmd),
}

#[derive(Subcommand)]
enum DpwCmd {
    /// Print the DPW distance (or with --l1 the point-wise L1 distance).
    Dist {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        l1: bool,
    },
    /// Write the optimal alignment as `hs,ws,he,we,cost` lines.
    Align {
        a: PathBuf,
        b: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        info!("resolved config:\n{}", cfg.to_text().trim_end());
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Write seen/emerging manifests, FMX files and a truth CSV.
    Gen {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Knn,
}

#[derive(Subcommand)]
enum MatchCmd {
    /// Run SWIM and write assignment, traces, adapter and report.
    Run {
        #[arg(long)]
        seen: PathBuf,
        #[arg(long)]
        emerging: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also evaluate a baseline with the final adapter.
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Dpw,
    L1,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Rank seen items for every emerging item; prints the summary CSV.
    Topk {
        #[arg(long)]
        seen: PathBuf,
        #[arg(long)]
        emerging: PathBuf,
        /// Adapter checkpoint; pass-through when omitted.
        #[arg(long)]
        adapter: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, value_enum, default_value = "dpw")]
        metric: Metric,
        /// Write the full JSON report here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn pass_through(ds: &Dataset) -> Result<AdapterParams> {
    let c = ds.channels().ok_or_else(|| Error::Invalid("empty dataset".into()))?;
    AdapterParams::identity(c, 1, 0)
}

fn write_report(out: &Path, stem: &str, report: &MatchReport) -> Result<()> {
    write(&out.join(format!("{stem}.json")), report.to_json())?;
    write(&out.join(format!("{stem}.csv")), report.summary_csv())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Invalid("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Invalid(e.to_string()))?;
    }
    match cli.cmd {
        Cmd::Dpw(DpwCmd::Dist { a, b, l1 }) => {
            let (a, b) = (load_matrix(&a)?, load_matrix(&b)?);
            let d = if l1 { a.l1_distance(&b)? } else { dpw::dpw_distance(&a, &b)? };
            println!("{d}");
        }
        Cmd::Dpw(DpwCmd::Align { a, b, out }) => {
            let (a, b) = (load_matrix(&a)?, load_matrix(&b)?);
            let (d, path) = dpw::align(&a, &b)?;
            let dump = dpw::alignment_dump(&a, &b, &path)?;
            info!("dpw distance {d}, {} aligned pairs", path.pair_count());
            match out {
                Some(p) => write(&p, dump)?,
                None => print!("{dump}"),
            }
        }
        Cmd::Synth(SynthCmd::Gen { config, out }) => {
            let cfg = config.resolve()?;
            let task = gen_task(&cfg.synth_config())?;
            create_dir(&out)?;
            save_dataset(&task.seen, out.join("seen.manifest"), "seen")?;
            save_dataset(&task.emerging, out.join("emerging.manifest"), "emerging")?;
            let mut truth = String::from("emerging_id,seen_id\n");
            for (e, s) in &task.truth {
                truth.push_str(&format!("{e},{s}\n"));
            }
            write(&out.join("truth.csv"), truth)?;
            write(&out.join("config.resolved"), cfg.to_text())?;
            info!("wrote {} classes to {}", task.seen.len(), out.display());
        }
        Cmd::Match(MatchCmd::Run {
            seen,
            emerging,
            config,
            out,
            baseline,
        }) => {
            let cfg = config.resolve()?;
            let (seen, emerging) = (load_dataset(&seen)?, load_dataset(&emerging)?);
            create_dir(&out)?;
            write(&out.join("config.resolved"), cfg.to_text())?;
            let (sm, em) = (seen.matrices(), emerging.matrices());
            let truth = match truth_indices(&seen, &emerging) {
                Ok(t) if seen.len() == emerging.len() => Some(t),
                _ => {
                    warn!("class ids do not line up across modalities; accuracy tracking disabled");
                    None
                }
            };
            let outcome = run_swim(&sm, &em, &cfg.swim_config(), truth.as_deref())?;

            let mut csv = String::from("emerging_id,seen_id,rank1_distance\n");
            let seen_for = outcome.seen_for_emerging();
            let mut dist_for = vec![0.0; em.len()];
            for (&(_, l), &d) in outcome.assignment.pairs().iter().zip(&outcome.pair_distances) {
                dist_for[l] = d;
            }
            for (l, e) in emerging.entries().iter().enumerate() {
                let s = &seen.entries()[seen_for[l]];
                csv.push_str(&format!("{},{},{}\n", e.class_id, s.class_id, dist_for[l]));
            }
            write(&out.join("assignment.csv"), csv)?;
            write(&out.join("swim_trace.csv"), outcome.trace.to_csv())?;
            write(&out.join("sloma_trace.csv"), outcome.trace.sloma_csv())?;
            save_checkpoint(&outcome.params, out.join("adapter.lfa"))?;

            if truth.is_some() {
                let report = match_topk(&seen, &emerging, &outcome.params, cfg.k)?;
                info!("top1 {} top5 {}", report.top1, report.top5);
                write_report(&out, "report", &report)?;
                if let Some(Baseline::Knn) = baseline {
                    let b = knn_baseline(&seen, &emerging, &outcome.params, cfg.k)?;
                    info!("knn baseline top1 {} top5 {}", b.top1, b.top5);
                    write_report(&out, "baseline_report", &b)?;
                }
            } else if baseline.is_some() {
                warn!("baseline skipped: no ground truth");
            }
        }
        Cmd::Eval(EvalCmd::Topk {
            seen,
            emerging,
            adapter,
            k,
            metric,
            json,
        }) => {
            let (seen, emerging) = (load_dataset(&seen)?, load_dataset(&emerging)?);
            let params = match adapter.map(load_checkpoint).transpose()?.flatten() {
                Some(p) => p,
                None => pass_through(&emerging)?,
            };
            let report = match metric {
                Metric::Dpw => match_topk(&seen, &emerging, &params, k)?,
                Metric::L1 => knn_baseline(&seen, &emerging, &params, k)?,
            };
            print!("{}", report.summary_csv());
            if let Some(p) = json {
                write(&p, report.to_json())?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
