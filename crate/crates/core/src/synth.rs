//! Synthetic cross-modality tasks with known ground truth.
//!
//! Each class gets a "glyph": a background element with a few line strokes
//! drawn from a shared pool of stroke prototypes. The emerging copy of a
//! glyph is spatially rewarped with monotone row and column index maps
//! (translation, stretching, compression), passed through a hidden per-channel
//! `sigmoid(scale * x + shift)` map, and perturbed with Gaussian noise.
//! Emerging entries are shuffled, so position carries no label information.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::adapter::sigmoid;
use crate::error::{Error, Result};
use crate::matrix::{Dataset, Entry, FeatureMatrix};
use crate::seed;

/// Hidden modality shift applied to every emerging element.
#[derive(Debug, Clone, PartialEq)]
pub enum ModalityMap {
    Identity,
    /// `e_c = sigmoid(scale[c] * s_c + shift[c])`
    AffineSigmoid { scale: Vec<f64>, shift: Vec<f64> },
}

impl ModalityMap {
    /// Random per-channel map. Slopes are `4 * exp(strength * g)` with `g`
    /// standard normal, so strength 0 gives roughly unit gain around
    /// mid-range; shifts are uniform in `[-strength, strength]` around the
    /// mid-range point.
    pub fn random(channels: usize, strength: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scale = Vec::with_capacity(channels);
        let mut shift = Vec::with_capacity(channels);
        for _ in 0..channels {
            let g: f64 = rng.sample(rand_distr::StandardNormal);
            let a = 4.0 * (strength * g).exp();
            scale.push(a);
            shift.push(-a * 0.5 + rng.random_range(-1.0..1.0) * strength);
        }
        ModalityMap::AffineSigmoid { scale, shift }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        match self {
            ModalityMap::Identity => out.copy_from_slice(x),
            ModalityMap::AffineSigmoid { scale, shift } => {
                for (((o, &v), a), b) in out.iter_mut().zip(x).zip(scale).zip(shift) {
                    *o = sigmoid(a * v + b);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    /// 0 disables spatial warping; 1 is the strongest warp.
    pub warp: f64,
    pub map: ModalityMap,
    pub noise: f64,
    /// Size of the shared stroke prototype pool.
    pub prototypes: usize,
    /// Strokes drawn per glyph.
    pub strokes: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// A task of the given size with moderate warp, a random hidden map of
    /// strength 1 and small noise.
    pub fn new(classes: usize, rows: usize, cols: usize, channels: usize, seed: u64) -> Self {
        SynthConfig {
            classes,
            rows,
            cols,
            channels,
            warp: 0.3,
            map: ModalityMap::random(channels, 1.0, seed::derive(seed, seed::SYNTH)),
            noise: 0.02,
            prototypes: 3,
            strokes: 10,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Invalid("synthetic task needs at least 2 classes".into()));
        }
        if self.rows == 0 || self.cols == 0 || self.channels == 0 {
            return Err(Error::Invalid("synthetic matrix dims must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.warp) {
            return Err(Error::Invalid("warp intensity must be in [0, 1]".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Invalid("noise stddev must be nonnegative".into()));
        }
        if self.prototypes == 0 {
            return Err(Error::Invalid("need at least one stroke prototype".into()));
        }
        if let ModalityMap::AffineSigmoid { scale, shift } = &self.map {
            if scale.len() != self.channels || shift.len() != self.channels {
                return Err(Error::Dimension("modality map width differs from C".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTask {
    pub seen: Dataset,
    pub emerging: Dataset,
    /// `(emerging class id, seen class id)` for every emerging entry.
    pub truth: Vec<(u64, u64)>,
}

impl SynthTask {
    /// For each emerging position, the position of its true seen match.
    pub fn truth_indices(&self) -> Vec<usize> {
        truth_indices(&self.seen, &self.emerging).expect("generator keeps class ids aligned")
    }
}

/// Map each emerging entry to the seen entry with the same class id.
pub fn truth_indices(seen: &Dataset, emerging: &Dataset) -> Result<Vec<usize>> {
    emerging
        .entries()
        .iter()
        .map(|e| {
            seen.position(e.class_id).ok_or_else(|| {
                Error::Invalid(format!("emerging class {} has no seen template", e.class_id))
            })
        })
        .collect()
}

fn element(rng: &mut ChaCha8Rng, channels: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..channels).map(|_| rng.random_range(lo..hi)).collect()
}

fn glyph(cfg: &SynthConfig, background: &[f64], protos: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (h, w, c) = (cfg.rows, cfg.cols, cfg.channels);
    let mut data: Vec<f64> = (0..h * w).flat_map(|_| background.iter().copied()).collect();
    for _ in 0..cfg.strokes {
        let proto = &protos[rng.random_range(0..protos.len())];
        let (r0, c0) = (rng.random_range(0..h), rng.random_range(0..w));
        let (dr, dc): (isize, isize) = match rng.random_range(0..4) {
            0 => (0, 1),
            1 => (1, 0),
            2 => (1, 1),
            _ => (1, -1),
        };
        let len = rng.random_range(2..=h.max(w).max(2));
        let (mut r, mut col) = (r0 as isize, c0 as isize);
        for _ in 0..len {
            if r < 0 || col < 0 || r >= h as isize || col >= w as isize {
                break;
            }
            let at = (r as usize * w + col as usize) * c;
            data[at..at + c].copy_from_slice(proto);
            r += dr;
            col += dc;
        }
    }
    data
}

/// Monotone nondecreasing index map onto `[0, n)`: an initial offset followed
/// by steps of 0 (stretch), 1, or 2 (compress).
pub fn monotone_map(n: usize, warp: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let max_shift = (warp * n as f64 / 4.0).round() as usize;
    let mut at = if max_shift > 0 { rng.random_range(0..=max_shift) } else { 0 };
    let mut map = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            let u: f64 = rng.random();
            let step = if u < warp / 2.0 {
                0
            } else if u < warp {
                2
            } else {
                1
            };
            at += step;
        }
        map.push(at.min(n - 1));
    }
    map
}

/// Generate a seen/emerging task. Deterministic per `cfg.seed`.
pub fn gen_task(cfg: &SynthConfig) -> Result<SynthTask> {
    cfg.validate()?;
    let (h, w, c) = (cfg.rows, cfg.cols, cfg.channels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, seed::SYNTH));
    let background = element(&mut rng, c, 0.05, 0.3);
    let protos: Vec<Vec<f64>> = (0..cfg.prototypes).map(|_| element(&mut rng, c, 0.1, 0.95)).collect();
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::Invalid(e.to_string()))?;

    let mut seen = Vec::with_capacity(cfg.classes);
    let mut emerging = Vec::with_capacity(cfg.classes);
    for class in 0..cfg.classes {
        let mut crng =
            ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, seed::SYNTH_CLASS + class as u64));
        let base = glyph(cfg, &background, &protos, &mut crng);
        let row_map = monotone_map(h, cfg.warp, &mut crng);
        let col_map = monotone_map(w, cfg.warp, &mut crng);
        let mut warped = vec![0.0; h * w * c];
        for r in 0..h {
            for col in 0..w {
                let src = (row_map[r] * w + col_map[col]) * c;
                let dst = (r * w + col) * c;
                cfg.map.apply(&base[src..src + c], &mut warped[dst..dst + c]);
                if cfg.noise > 0.0 {
                    for v in &mut warped[dst..dst + c] {
                        *v += noise.sample(&mut crng);
                    }
                }
            }
        }
        seen.push(Entry {
            class_id: class as u64,
            matrix: FeatureMatrix::new(h, w, c, base)?,
        });
        emerging.push(Entry {
            class_id: class as u64,
            matrix: FeatureMatrix::new(h, w, c, warped)?,
        });
    }
    emerging.shuffle(&mut rng);
    let truth = emerging.iter().map(|e| (e.class_id, e.class_id)).collect();
    Ok(SynthTask {
        seen: Dataset::new("seen", seen)?,
        emerging: Dataset::new("emerging", emerging)?,
        truth,
    })
}
