//! Local feature adapter: a shared-weight perceptron applied to every feature
//! element independently.
//!
//! Each layer is affine followed by a sigmoid. Input and output widths both
//! equal the element channel count `C`. Training minimizes the mean over
//! element pairs of `||adapt(e) - s||^2` with Nadam, using analytic
//! gradients. Dropout (inverted, seeded) is applied to hidden activations
//! during training only.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{FeatureElement, FeatureMatrix};
use crate::seed;

pub const DEFAULT_DROPOUT: f64 = 0.2;

/// Dense layer: `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub outputs: usize,
    pub inputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            outputs,
            inputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// `out = sigmoid(W x + b)`
    #[inline]
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b;
            *o = sigmoid(z);
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Adapter weights plus the flags that control how they are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    layers: Vec<Dense>,
    /// Dropout probability on hidden activations while training.
    pub dropout: f64,
    /// Seed for the training-time dropout and shuffle streams.
    pub seed: u64,
    /// When set, `adapt_*` returns its input unchanged. Cleared by training.
    pub pass_through: bool,
}

/// `C -> hidden -> C` adapter with uniform `±sqrt(6/(fan_in+fan_out))` init.
pub fn init_adapter(channels: usize, hidden: usize, seed: u64) -> Result<AdapterParams> {
    AdapterParams::with_layers(&[channels, hidden, channels], seed)
}

impl AdapterParams {
    /// Layer widths `sizes[0] -> sizes[1] -> ... -> sizes[last]`; the first
    /// and last must agree.
    pub fn with_layers(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Invalid(format!("bad adapter layer sizes {sizes:?}")));
        }
        if sizes[0] != sizes[sizes.len() - 1] {
            return Err(Error::Invalid(
                "adapter input and output widths must both equal C".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, seed::ADAPTER_INIT));
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut l = Dense::zeros(fan_in, fan_out);
                for v in l.weights.iter_mut() {
                    *v = rng.random_range(-limit..limit);
                }
                l
            })
            .collect();
        Ok(AdapterParams {
            layers,
            dropout: DEFAULT_DROPOUT,
            seed,
            pass_through: false,
        })
    }

    /// Pass-through adapter. It keeps a freshly initialized network
    /// underneath, which becomes active once the adapter is trained.
    pub fn identity(channels: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut p = init_adapter(channels, hidden, seed)?;
        p.pass_through = true;
        Ok(p)
    }

    /// Build from explicit layers; used by checkpoint loading and tests.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Invalid("adapter needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Invalid(format!("layer {i} has inconsistent shapes")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("layer {i} has non-finite weights")));
            }
        }
        for w in layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(Error::Invalid("adjacent layer widths disagree".into()));
            }
        }
        if layers[0].inputs != layers[layers.len() - 1].outputs {
            return Err(Error::Invalid("adapter input and output widths differ".into()));
        }
        Ok(AdapterParams {
            layers,
            dropout: DEFAULT_DROPOUT,
            seed: 0,
            pass_through: false,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// `[C, hidden.., C]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.layers[0].inputs];
        v.extend(self.layers.iter().map(|l| l.outputs));
        v
    }

    pub fn channels(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// All weights then biases, layer by layer.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut rest = flat;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            let (b, r) = r.split_at(l.bias.len());
            l.weights.copy_from_slice(w);
            l.bias.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    fn max_width(&self) -> usize {
        self.layer_sizes().into_iter().max().unwrap_or(0)
    }

    fn check_channels(&self, c: usize) -> Result<()> {
        if c != self.channels() {
            return Err(Error::Dimension(format!(
                "adapter expects C={}, got C={c}",
                self.channels()
            )));
        }
        Ok(())
    }

    fn forward_into(&self, x: &[f64], a: &mut Vec<f64>, b: &mut Vec<f64>, out: &mut [f64]) {
        a.clear();
        a.extend_from_slice(x);
        for l in &self.layers {
            b.resize(l.outputs, 0.0);
            l.forward(a, b);
            std::mem::swap(a, b);
        }
        out.copy_from_slice(a);
    }

    pub fn adapt_element(&self, e: &[f64]) -> Result<FeatureElement> {
        if self.pass_through {
            return FeatureElement::new(e.to_vec());
        }
        self.check_channels(e.len())?;
        let mut out = vec![0.0; self.channels()];
        self.forward_into(e, &mut Vec::new(), &mut Vec::new(), &mut out);
        FeatureElement::new(out)
    }

    /// Adapt every element of `m` in place of its position.
    pub fn adapt_matrix(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.pass_through {
            return Ok(m.clone());
        }
        self.check_channels(m.channels())?;
        let (mut a, mut b) = (Vec::with_capacity(self.max_width()), Vec::new());
        m.map_elements(self.channels(), |src, dst| self.forward_into(src, &mut a, &mut b, dst))
    }
}

/// L2 norm of the flattened difference between two adapters' parameters.
pub fn param_delta(a: &AdapterParams, b: &AdapterParams) -> Result<f64> {
    if a.layer_sizes() != b.layer_sizes() {
        return Err(Error::Dimension(format!(
            "adapter shapes differ: {:?} vs {:?}",
            a.layer_sizes(),
            b.layer_sizes()
        )));
    }
    Ok(a.layers
        .iter()
        .zip(&b.layers)
        .flat_map(|(la, lb)| {
            la.weights
                .iter()
                .zip(&lb.weights)
                .chain(la.bias.iter().zip(&lb.bias))
        })
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Element training pairs stored flat: `inputs[i*C..]` should map to
/// `targets[i*C..]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairSet {
    channels: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl PairSet {
    pub fn new(channels: usize) -> Self {
        PairSet {
            channels,
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn from_pairs(pairs: &[(FeatureElement, FeatureElement)]) -> Result<Self> {
        let c = pairs.first().map(|(e, _)| e.channels()).unwrap_or(0);
        let mut set = PairSet::new(c);
        for (e, s) in pairs {
            set.push(e.as_slice(), s.as_slice())?;
        }
        Ok(set)
    }

    pub fn push(&mut self, input: &[f64], target: &[f64]) -> Result<()> {
        if input.len() != self.channels || target.len() != self.channels {
            return Err(Error::Dimension(format!(
                "pair widths {}/{} do not match C={}",
                input.len(),
                target.len(),
                self.channels
            )));
        }
        self.inputs.extend_from_slice(input);
        self.targets.extend_from_slice(target);
        Ok(())
    }

    pub fn len(&self) -> usize {
        if self.channels == 0 {
            0
        } else {
            self.inputs.len() / self.channels
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.channels..(i + 1) * self.channels]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.channels..(i + 1) * self.channels]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Nadam momentum schedule decay.
    pub schedule_decay: f64,
    pub epochs: usize,
    /// Minibatch size used once the pair count exceeds `full_batch_limit`.
    pub batch_size: usize,
    pub full_batch_limit: usize,
    pub dropout: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            schedule_decay: 0.004,
            epochs: 20,
            batch_size: 1024,
            full_batch_limit: 4096,
            dropout: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid("learning rate must be positive".into()));
        }
        if !(self.schedule_decay >= 0.0 && self.schedule_decay.is_finite()) {
            return Err(Error::Invalid("schedule decay must be nonnegative".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Invalid("epochs and batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Nadam state with the Keras-style momentum schedule
/// `mu_t = beta1 * (1 - 0.5 * 0.96^(t * schedule_decay))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Nadam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    m_schedule: f64,
}

impl Nadam {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    pub fn new(params: usize) -> Self {
        Nadam {
            m: vec![0.0; params],
            v: vec![0.0; params],
            step: 0,
            m_schedule: 1.0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, theta: &mut [f64], grad: &[f64], lr: f64, schedule_decay: f64) {
        debug_assert_eq!(theta.len(), grad.len());
        self.step += 1;
        let t = self.step as f64;
        let mu_t = Self::BETA1 * (1.0 - 0.5 * 0.96f64.powf(t * schedule_decay));
        let mu_next = Self::BETA1 * (1.0 - 0.5 * 0.96f64.powf((t + 1.0) * schedule_decay));
        let sched_new = self.m_schedule * mu_t;
        let sched_next = sched_new * mu_next;
        self.m_schedule = sched_new;
        let v_corr = 1.0 - Self::BETA2.powf(t);
        for (((p, &g), m), v) in theta
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            let g_hat = g / (1.0 - sched_new);
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            let m_hat = *m / (1.0 - sched_next);
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            let v_hat = *v / v_corr;
            let m_bar = (1.0 - mu_t) * g_hat + mu_next * m_hat;
            *p -= lr * m_bar / (v_hat.sqrt() + Self::EPSILON);
        }
    }
}

/// Scratch for one sample's forward/backward pass.
struct Workspace {
    acts: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next: Vec<f64>,
}

impl Workspace {
    fn new(p: &AdapterParams) -> Self {
        let sizes = p.layer_sizes();
        Workspace {
            acts: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            masks: sizes.iter().map(|&n| vec![1.0; n]).collect(),
            delta: Vec::new(),
            next: Vec::new(),
        }
    }
}

/// Accumulate `scale * d loss_i / d theta` into `grad` for one pair and
/// return that pair's squared error. `mask` supplies dropout multipliers for
/// hidden layers, already divided by `1 - p`.
fn backprop_one(
    p: &AdapterParams,
    x: &[f64],
    y: &[f64],
    scale: f64,
    mask: Option<&mut dyn FnMut() -> f64>,
    ws: &mut Workspace,
    grad: &mut [f64],
) -> f64 {
    let n_layers = p.layers.len();
    ws.acts[0].copy_from_slice(x);
    let mut mask = mask;
    for (li, l) in p.layers.iter().enumerate() {
        let (lo, hi) = ws.acts.split_at_mut(li + 1);
        l.forward(&lo[li], &mut hi[0]);
        let hidden = li + 1 < n_layers;
        let m = &mut ws.masks[li + 1];
        match (&mut mask, hidden) {
            (Some(draw), true) => {
                for (a, mk) in hi[0].iter_mut().zip(m.iter_mut()) {
                    *mk = draw();
                    *a *= *mk;
                }
            }
            _ => m.iter_mut().for_each(|v| *v = 1.0),
        }
    }
    let out = &ws.acts[n_layers];
    let mut sq = 0.0;
    ws.delta.clear();
    for (o, t) in out.iter().zip(y) {
        let d = o - t;
        sq += d * d;
        // d/dz of (o - t)^2 through the output sigmoid
        ws.delta.push(2.0 * d * o * (1.0 - o) * scale);
    }
    // parameter offsets per layer
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for l in &p.layers {
        offsets.push(off);
        off += l.param_count();
    }
    for li in (0..n_layers).rev() {
        let l = &p.layers[li];
        let input = &ws.acts[li];
        let base = offsets[li];
        let (gw, gb) = grad[base..base + l.param_count()].split_at_mut(l.weights.len());
        for (o, &d) in ws.delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            gb[o] += d;
            for (g, &a) in gw[o * l.inputs..(o + 1) * l.inputs].iter_mut().zip(input) {
                *g += d * a;
            }
        }
        if li == 0 {
            break;
        }
        // delta for the previous layer: (W^T delta) * mask * h (1 - h)
        ws.next.clear();
        ws.next.resize(l.inputs, 0.0);
        for (o, &d) in ws.delta.iter().enumerate() {
            for (n, &w) in ws.next.iter_mut().zip(&l.weights[o * l.inputs..(o + 1) * l.inputs]) {
                *n += w * d;
            }
        }
        let mask = &ws.masks[li];
        for ((n, &a), &mk) in ws.next.iter_mut().zip(input).zip(mask) {
            if mk == 0.0 {
                *n = 0.0;
            } else {
                // stored activation is h * mk
                let h = a / mk;
                *n *= mk * h * (1.0 - h);
            }
        }
        std::mem::swap(&mut ws.delta, &mut ws.next);
    }
    sq
}

/// Mean squared-error loss and its gradient (flattened like
/// [`AdapterParams::flatten`]) over `pairs`, without dropout.
pub fn loss_and_gradient(p: &AdapterParams, pairs: &PairSet) -> Result<(f64, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::Invalid("empty pair set".into()));
    }
    p.check_channels(pairs.channels())?;
    let mut grad = vec![0.0; p.param_count()];
    let mut ws = Workspace::new(p);
    let scale = 1.0 / pairs.len() as f64;
    let mut loss = 0.0;
    for i in 0..pairs.len() {
        loss += backprop_one(p, pairs.input(i), pairs.target(i), scale, None, &mut ws, &mut grad);
    }
    Ok((loss * scale, grad))
}

/// Mean squared error of the current adapter (honouring pass-through).
pub fn mean_loss(p: &AdapterParams, pairs: &PairSet) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Invalid("empty pair set".into()));
    }
    let mut total = 0.0;
    for i in 0..pairs.len() {
        let out = p.adapt_element(pairs.input(i))?;
        total += out
            .as_slice()
            .iter()
            .zip(pairs.target(i))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / pairs.len() as f64)
}

/// Result of one training call.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean loss of each epoch, measured during the epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        *self.epoch_losses.last().unwrap_or(&f64::NAN)
    }
}

/// Adapter plus optimizer state that persists across training calls.
#[derive(Debug, Clone)]
pub struct Trainer {
    params: AdapterParams,
    optimizer: Nadam,
    dropout_rng: ChaCha8Rng,
    shuffle_rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(params: AdapterParams) -> Self {
        let optimizer = Nadam::new(params.param_count());
        let dropout_rng = ChaCha8Rng::seed_from_u64(seed::derive(params.seed, seed::DROPOUT));
        let shuffle_rng = ChaCha8Rng::seed_from_u64(seed::derive(params.seed, seed::SHUFFLE));
        Trainer {
            params,
            optimizer,
            dropout_rng,
            shuffle_rng,
        }
    }

    pub fn params(&self) -> &AdapterParams {
        &self.params
    }

    pub fn into_params(self) -> AdapterParams {
        self.params
    }

    pub fn optimizer(&self) -> &Nadam {
        &self.optimizer
    }

    /// Run `cfg.epochs` epochs over `pairs`. Clears the pass-through flag.
    pub fn train(&mut self, pairs: &PairSet, cfg: &TrainConfig) -> Result<TrainReport> {
        cfg.validate()?;
        if pairs.is_empty() {
            return Err(Error::Invalid("empty pair set".into()));
        }
        self.params.check_channels(pairs.channels())?;
        if !(0.0..1.0).contains(&self.params.dropout) {
            return Err(Error::Invalid("dropout probability must be in [0, 1)".into()));
        }
        self.params.pass_through = false;

        let n = pairs.len();
        let batch = if n <= cfg.full_batch_limit { n } else { cfg.batch_size };
        let mut order: Vec<usize> = (0..n).collect();
        let mut ws = Workspace::new(&self.params);
        let mut grad = vec![0.0; self.params.param_count()];
        let mut theta = self.params.flatten();
        let keep = 1.0 - self.params.dropout;
        let use_dropout = cfg.dropout && self.params.dropout > 0.0;
        let mut losses = Vec::with_capacity(cfg.epochs);

        for epoch in 0..cfg.epochs {
            if batch < n {
                order.shuffle(&mut self.shuffle_rng);
            }
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(batch) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / chunk.len() as f64;
                for &i in chunk {
                    let rng = &mut self.dropout_rng;
                    let mut draw = || if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 };
                    let mask: Option<&mut dyn FnMut() -> f64> =
                        if use_dropout { Some(&mut draw) } else { None };
                    epoch_loss += backprop_one(
                        &self.params,
                        pairs.input(i),
                        pairs.target(i),
                        scale,
                        mask,
                        &mut ws,
                        &mut grad,
                    );
                }
                self.optimizer
                    .update(&mut theta, &grad, cfg.learning_rate, cfg.schedule_decay);
                if theta.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence(format!(
                        "non-finite weights after epoch {epoch}"
                    )));
                }
                self.params.set_flat(&theta)?;
            }
            let epoch_loss = epoch_loss / n as f64;
            if !epoch_loss.is_finite() {
                return Err(Error::Divergence(format!("loss is {epoch_loss} at epoch {epoch}")));
            }
            losses.push(epoch_loss);
        }
        Ok(TrainReport {
            epoch_losses: losses,
        })
    }
}

/// One-shot training from fresh optimizer state.
pub fn train_on_pairs(
    params: &AdapterParams,
    pairs: &PairSet,
    cfg: &TrainConfig,
) -> Result<(AdapterParams, f64)> {
    let mut t = Trainer::new(params.clone());
    let report = t.train(pairs, cfg)?;
    Ok((t.into_params(), report.final_loss()))
}

const LFA_MAGIC: &[u8; 4] = b"LFA1";

/// Checkpoint layout (little-endian): magic `LFA1`, `u32` layer count, then
/// per layer `u32` rows (outputs), `u32` cols (inputs), `rows*cols` f64
/// weights row-major, `rows` f64 biases. A pass-through adapter is written
/// with zero layers.
pub fn encode_checkpoint(p: &AdapterParams) -> Vec<u8> {
    let mut out = LFA_MAGIC.to_vec();
    let layers: &[Dense] = if p.pass_through { &[] } else { &p.layers };
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in layers {
        out.extend_from_slice(&(l.outputs as u32).to_le_bytes());
        out.extend_from_slice(&(l.inputs as u32).to_le_bytes());
        for v in l.weights.iter().chain(&l.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Decode a checkpoint. A zero-layer checkpoint decodes to `None`, meaning
/// the identity adapter.
pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Option<AdapterParams>> {
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(*off..*off + n)
            .ok_or_else(|| Error::bytes(path, bytes.len() as u64, "truncated checkpoint"))?;
        *off += n;
        Ok(s)
    };
    if take(&mut off, 4)? != LFA_MAGIC {
        return Err(Error::bytes(path, 0, "bad magic, expected LFA1"));
    }
    let u32_at = |off: &mut usize| -> Result<usize> {
        Ok(u32::from_le_bytes(take(off, 4)?.try_into().unwrap()) as usize)
    };
    let count = u32_at(&mut off)?;
    if count == 0 {
        if off != bytes.len() {
            return Err(Error::bytes(path, off as u64, "trailing bytes"));
        }
        return Ok(None);
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let at = off as u64;
        let rows = u32_at(&mut off)?;
        let cols = u32_at(&mut off)?;
        if rows == 0 || cols == 0 {
            return Err(Error::bytes(path, at, "layer dims must be positive"));
        }
        let mut vals = Vec::with_capacity(rows * cols + rows);
        for _ in 0..rows * cols + rows {
            let at = off as u64;
            let v = f64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::bytes(path, at, "non-finite weight"));
            }
            vals.push(v);
        }
        let bias = vals.split_off(rows * cols);
        layers.push(Dense {
            outputs: rows,
            inputs: cols,
            weights: vals,
            bias,
        });
    }
    if off != bytes.len() {
        return Err(Error::bytes(path, off as u64, "trailing bytes"));
    }
    AdapterParams::from_layers(layers)
        .map(Some)
        .map_err(|e| Error::bytes(path, 4, e.to_string()))
}

pub fn save_checkpoint(p: &AdapterParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(p)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Option<AdapterParams>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_pairs(rng: &mut ChaCha8Rng, n: usize, c: usize) -> PairSet {
        let mut set = PairSet::new(c);
        for _ in 0..n {
            let x: Vec<f64> = (0..c).map(|_| rng.random_range(0.0..1.0)).collect();
            let y: Vec<f64> = (0..c).map(|_| rng.random_range(0.05..0.95)).collect();
            set.push(&x, &y).unwrap();
        }
        set
    }

    /// Forward pass written out longhand, independent of `Dense::forward`.
    fn reference_forward(p: &AdapterParams, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for l in p.layers() {
            let mut next = Vec::new();
            for o in 0..l.outputs {
                let mut z = l.bias[o];
                for i in 0..l.inputs {
                    z += l.weights[o * l.inputs + i] * a[i];
                }
                next.push(1.0 / (1.0 + (-z).exp()));
            }
            a = next;
        }
        a
    }

    #[test]
    fn init_shapes_and_determinism() {
        let a = init_adapter(160, 400, 1).unwrap();
        assert_eq!(a.layer_sizes(), vec![160, 400, 160]);
        assert_eq!(init_adapter(80, 200, 1).unwrap().layer_sizes(), vec![80, 200, 80]);
        assert_eq!(a, init_adapter(160, 400, 1).unwrap());
        assert_ne!(a, init_adapter(160, 400, 2).unwrap());
        let limit = (6.0f64 / 560.0).sqrt();
        assert!(a.layers()[0].weights.iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn zero_weights_give_one_half() {
        let mut p = init_adapter(3, 4, 0).unwrap();
        p.set_flat(&vec![0.0; p.param_count()]).unwrap();
        let out = p.adapt_element(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(out.as_slice(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn pass_through_and_dimension_checks() {
        let p = AdapterParams::identity(2, 3, 0).unwrap();
        let m = FeatureMatrix::new(2, 2, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]).unwrap();
        assert_eq!(p.adapt_matrix(&m).unwrap(), m);
        let q = init_adapter(3, 3, 0).unwrap();
        assert!(matches!(q.adapt_element(&[1.0]), Err(Error::Dimension(_))));
        assert!(matches!(q.adapt_matrix(&m), Err(Error::Dimension(_))));
    }

    #[test]
    fn forward_matches_reference_and_matrix_is_elementwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = init_adapter(5, 7, 42).unwrap();
        let data: Vec<f64> = (0..3 * 4 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = FeatureMatrix::new(3, 4, 5, data).unwrap();
        let out = p.adapt_matrix(&m).unwrap();
        assert_eq!(out.dims(), m.dims());
        for (r, c) in [(0, 0), (2, 3), (1, 2)] {
            let want = reference_forward(&p, m.element(r, c));
            let got = out.element(r, c);
            for (a, b) in want.iter().zip(got) {
                assert!((a - b).abs() < 1e-15);
            }
            assert_eq!(p.adapt_element(m.element(r, c)).unwrap().as_slice(), got);
        }
    }

    #[test]
    fn param_delta_examples() {
        let a = init_adapter(3, 4, 9).unwrap();
        assert_eq!(param_delta(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        let mut flat = b.flatten();
        flat[5] += 3.0;
        b.set_flat(&flat).unwrap();
        assert!((param_delta(&a, &b).unwrap() - 3.0).abs() < 1e-12);
        let c = init_adapter(3, 5, 9).unwrap();
        assert!(param_delta(&a, &c).is_err());

        let d = init_adapter(3, 4, 10).unwrap();
        let oracle: f64 = a
            .flatten()
            .iter()
            .zip(d.flatten())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((param_delta(&a, &d).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for cfg in 0..10 {
            let c = rng.random_range(1..5);
            let h = rng.random_range(1..6);
            let p = init_adapter(c, h, cfg).unwrap();
            let pairs = random_pairs(&mut rng, 6, c);
            let (_, g) = loss_and_gradient(&p, &pairs).unwrap();
            let theta = p.flatten();
            let step = 1e-5;
            for k in 0..theta.len() {
                let mut q = p.clone();
                let mut t = theta.clone();
                t[k] += step;
                q.set_flat(&t).unwrap();
                let up = mean_loss(&q, &pairs).unwrap();
                t[k] -= 2.0 * step;
                q.set_flat(&t).unwrap();
                let down = mean_loss(&q, &pairs).unwrap();
                let fd = (up - down) / (2.0 * step);
                let rel = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-6);
                assert!(rel <= 1e-4, "param {k}: analytic {} fd {fd}", g[k]);
            }
        }
    }

    #[test]
    fn perfect_pairs_leave_params_unchanged() {
        let p = init_adapter(3, 4, 5).unwrap();
        let mut pairs = PairSet::new(3);
        for x in [[0.1, 0.2, 0.3], [0.9, 0.0, -1.0]] {
            let y = p.adapt_element(&x).unwrap();
            pairs.push(&x, y.as_slice()).unwrap();
        }
        let cfg = TrainConfig {
            dropout: false,
            ..TrainConfig::default()
        };
        let (q, loss) = train_on_pairs(&p, &pairs, &cfg).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(param_delta(&p, &q).unwrap(), 0.0);
    }

    #[test]
    fn single_pair_toy_fits() {
        let p = init_adapter(1, 4, 1).unwrap();
        let mut pairs = PairSet::new(1);
        pairs.push(&[0.3], &[0.8]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            epochs: 2000,
            dropout: false,
            ..TrainConfig::default()
        };
        let (_, loss) = train_on_pairs(&p, &pairs, &cfg).unwrap();
        assert!(loss < 1e-3, "loss {loss}");
    }

    #[test]
    fn loss_is_monotone_without_dropout() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for s in 0..5 {
            let p = init_adapter(4, 6, s).unwrap();
            let pairs = random_pairs(&mut rng, 40, 4);
            let cfg = TrainConfig {
                epochs: 60,
                dropout: false,
                ..TrainConfig::default()
            };
            let report = Trainer::new(p).train(&pairs, &cfg).unwrap();
            for w in report.epoch_losses.windows(2) {
                assert!(w[1] <= w[0] + 1e-15, "{:?}", report.epoch_losses);
            }
        }
    }

    #[test]
    fn training_is_deterministic_with_dropout() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pairs = random_pairs(&mut rng, 30, 3);
        let p = init_adapter(3, 5, 77).unwrap();
        let a = train_on_pairs(&p, &pairs, &TrainConfig::default()).unwrap();
        let b = train_on_pairs(&p, &pairs, &TrainConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn minibatches_kick_in_above_the_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pairs = random_pairs(&mut rng, 50, 2);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 16,
            full_batch_limit: 20,
            dropout: false,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(init_adapter(2, 3, 0).unwrap());
        t.train(&pairs, &cfg).unwrap();
        assert_eq!(t.optimizer().steps(), 3 * 4);
    }

    #[test]
    fn empty_pairs_and_divergence() {
        let p = init_adapter(2, 2, 0).unwrap();
        assert!(train_on_pairs(&p, &PairSet::new(2), &TrainConfig::default()).is_err());
        let mut pairs = PairSet::new(2);
        pairs.push(&[1e308, -1e308], &[0.5, 0.5]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e308,
            dropout: false,
            ..TrainConfig::default()
        };
        let mut huge = p.clone();
        huge.set_flat(&vec![1e300; p.param_count()]).unwrap();
        match train_on_pairs(&huge, &pairs, &cfg) {
            Err(Error::Divergence(_)) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = init_adapter(4, 3, 12).unwrap();
        let bytes = encode_checkpoint(&p);
        let back = decode_checkpoint(&bytes, Path::new("a.lfa")).unwrap().unwrap();
        assert_eq!(back.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   p.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(back.layer_sizes(), p.layer_sizes());
        let id = AdapterParams::identity(4, 3, 0).unwrap();
        assert_eq!(decode_checkpoint(&encode_checkpoint(&id), Path::new("x")).unwrap(), None);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
        assert!(decode_checkpoint(b"LFA2\0\0\0\0", Path::new("x")).is_err());
    }
}
