//! Flat `key = value` run configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Unknown
//! keys are errors. Command-line overrides go through [`RunConfig::set`], so
//! file and flag values share one parser.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::adapter::TrainConfig;
use crate::error::{Error, Result};
use crate::sloma::SlomaConfig;
use crate::swim::SwimConfig;
use crate::synth::{ModalityMap, SynthConfig};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    // swim / sloma
    pub alpha: usize,
    pub eps: f64,
    pub max_iters: usize,
    pub hidden: usize,
    // adapter training
    pub learning_rate: f64,
    pub schedule_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub full_batch_limit: usize,
    pub dropout: bool,
    // evaluation
    pub k: usize,
    // synthetic tasks
    pub classes: usize,
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub warp: f64,
    pub map_strength: f64,
    pub noise: f64,
    pub prototypes: usize,
    pub strokes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let swim = SwimConfig::default();
        let train = TrainConfig::default();
        let synth = SynthConfig::new(10, 10, 10, 8, 0);
        RunConfig {
            seed: 0,
            alpha: swim.alpha,
            eps: swim.sloma.eps,
            max_iters: swim.sloma.max_iters,
            hidden: swim.hidden,
            learning_rate: train.learning_rate,
            schedule_decay: train.schedule_decay,
            epochs: train.epochs,
            batch_size: train.batch_size,
            full_batch_limit: train.full_batch_limit,
            dropout: train.dropout,
            k: 5,
            classes: synth.classes,
            rows: synth.rows,
            cols: synth.cols,
            channels: synth.channels,
            warp: synth.warp,
            map_strength: 1.0,
            noise: synth.noise,
            prototypes: synth.prototypes,
            strokes: synth.strokes,
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "alpha",
    "eps",
    "max_iters",
    "hidden",
    "learning_rate",
    "schedule_decay",
    "epochs",
    "batch_size",
    "full_batch_limit",
    "dropout",
    "k",
    "classes",
    "rows",
    "cols",
    "channels",
    "warp",
    "map_strength",
    "noise",
    "prototypes",
    "strokes",
];

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value {value:?} for {key}"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("invalid boolean {value:?} for {key}")),
    }
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::line(path, no as u64 + 1, "expected `key = value`"))?;
            cfg.try_set(key.trim(), value.trim())
                .map_err(|m| Error::line(path, no as u64 + 1, m))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Override one key, e.g. from a `--set key=value` flag.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.try_set(key, value).map_err(Error::Invalid)
    }

    /// Apply `key=value` assignments in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    fn try_set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "seed" => self.seed = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "eps" => self.eps = parse(key, v)?,
            "max_iters" => self.max_iters = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "schedule_decay" => self.schedule_decay = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "full_batch_limit" => self.full_batch_limit = parse(key, v)?,
            "dropout" => self.dropout = parse_bool(key, v)?,
            "k" => self.k = parse(key, v)?,
            "classes" => self.classes = parse(key, v)?,
            "rows" => self.rows = parse(key, v)?,
            "cols" => self.cols = parse(key, v)?,
            "channels" => self.channels = parse(key, v)?,
            "warp" => self.warp = parse(key, v)?,
            "map_strength" => self.map_strength = parse(key, v)?,
            "noise" => self.noise = parse(key, v)?,
            "prototypes" => self.prototypes = parse(key, v)?,
            "strokes" => self.strokes = parse(key, v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Every key with its resolved value, in a form [`RunConfig::parse`]
    /// reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.value(key));
        }
        s
    }

    fn value(&self, key: &str) -> String {
        match key {
            "seed" => self.seed.to_string(),
            "alpha" => self.alpha.to_string(),
            "eps" => self.eps.to_string(),
            "max_iters" => self.max_iters.to_string(),
            "hidden" => self.hidden.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "schedule_decay" => self.schedule_decay.to_string(),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "full_batch_limit" => self.full_batch_limit.to_string(),
            "dropout" => self.dropout.to_string(),
            "k" => self.k.to_string(),
            "classes" => self.classes.to_string(),
            "rows" => self.rows.to_string(),
            "cols" => self.cols.to_string(),
            "channels" => self.channels.to_string(),
            "warp" => self.warp.to_string(),
            "map_strength" => self.map_strength.to_string(),
            "noise" => self.noise.to_string(),
            "prototypes" => self.prototypes.to_string(),
            "strokes" => self.strokes.to_string(),
            _ => unreachable!("KEYS and value() list the same keys"),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            schedule_decay: self.schedule_decay,
            epochs: self.epochs,
            batch_size: self.batch_size,
            full_batch_limit: self.full_batch_limit,
            dropout: self.dropout,
        }
    }

    pub fn swim_config(&self) -> SwimConfig {
        SwimConfig {
            alpha: self.alpha,
            hidden: self.hidden,
            sloma: SlomaConfig {
                eps: self.eps,
                max_iters: self.max_iters,
                train: self.train_config(),
            },
            seed: self.seed,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            warp: self.warp,
            map: ModalityMap::random(self.channels, self.map_strength, seed::derive(self.seed, seed::SYNTH)),
            noise: self.noise,
            prototypes: self.prototypes,
            strokes: self.strokes,
            ..SynthConfig::new(self.classes, self.rows, self.cols, self.channels, self.seed)
        }
    }
}
