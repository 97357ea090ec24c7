//! Self-reinforcing local feature matching: alternate
//! match (optimal HiPa per pair under the current adapter), optimize
//! (retrain the adapter on the matched element pairs) and adapt, until the
//! adapter weights stop moving.

use rayon::prelude::*;

use crate::adapter::{param_delta, AdapterParams, PairSet, TrainConfig, Trainer};
use crate::dpw::{self, HiPa};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Potentially matched `(seen index k, emerging index l)` pairs. Emerging
/// indices are distinct; seen indices may repeat.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchedPairSet {
    pairs: Vec<(usize, usize)>,
}

impl MatchedPairSet {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen_l = std::collections::HashSet::new();
        for &(_, l) in &pairs {
            if !seen_l.insert(l) {
                return Err(Error::Invalid(format!("emerging index {l} appears twice")));
            }
        }
        Ok(MatchedPairSet { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn check_bounds(&self, n_seen: usize, n_emerging: usize) -> Result<()> {
        if let Some(&(k, l)) = self.pairs.iter().find(|&&(k, l)| k >= n_seen || l >= n_emerging) {
            return Err(Error::Invalid(format!("pair ({k}, {l}) out of range")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlomaConfig {
    /// Stop once `||w(t) - w(t-1)||_2 <= eps`.
    pub eps: f64,
    pub max_iters: usize,
    pub train: TrainConfig,
}

impl Default for SlomaConfig {
    fn default() -> Self {
        SlomaConfig {
            eps: 1e-3,
            max_iters: 50,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlomaIteration {
    /// 1-based iteration counter.
    pub t: usize,
    /// Mean DPW distance over pairs before this iteration's optimize step.
    pub match_cost: f64,
    /// Final-epoch training loss of the optimize step.
    pub train_loss: f64,
    pub param_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlomaTrace {
    pub iterations: Vec<SlomaIteration>,
    /// Whether the loop stopped on the `eps` criterion (as opposed to
    /// `max_iters`).
    pub converged: bool,
}

impl SlomaTrace {
    /// `t,match_cost,train_loss,param_delta` with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,match_cost,train_loss,param_delta\n");
        for it in &self.iterations {
            s.push_str(&format!(
                "{},{},{},{}\n",
                it.t, it.match_cost, it.train_loss, it.param_delta
            ));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct SlomaOutcome {
    pub params: AdapterParams,
    pub trace: SlomaTrace,
}

/// Optimal HiPa and its cost for each pair, with emerging matrices already
/// adapted.
pub fn match_step(
    seen: &[FeatureMatrix],
    adapted: &[FeatureMatrix],
    pairs: &MatchedPairSet,
) -> Result<Vec<(f64, HiPa)>> {
    pairs
        .pairs()
        .par_iter()
        .map(|&(k, l)| dpw::align(&seen[k], &adapted[l]))
        .collect()
}

/// Training pairs `(raw emerging element, seen element)` along each path.
/// Paths found on adapted matrices carry over to the raw matrices because
/// adaptation keeps every element in place.
pub fn pool_pairs(
    seen: &[FeatureMatrix],
    emerging: &[FeatureMatrix],
    pairs: &MatchedPairSet,
    paths: &[HiPa],
) -> Result<PairSet> {
    let c = seen
        .first()
        .map(FeatureMatrix::channels)
        .ok_or_else(|| Error::Invalid("empty seen set".into()))?;
    let mut set = PairSet::new(c);
    for (&(k, l), p) in pairs.pairs().iter().zip(paths) {
        for ((hs, ws), (he, we)) in p.aligned_pairs() {
            set.push(emerging[l].element(he - 1, we - 1), seen[k].element(hs - 1, ws - 1))?;
        }
    }
    Ok(set)
}

fn adapt_all(params: &AdapterParams, emerging: &[FeatureMatrix], pairs: &MatchedPairSet) -> Result<Vec<FeatureMatrix>> {
    // Only paired matrices are needed; the rest are passed through untouched
    // so indices stay valid.
    let mut wanted = vec![false; emerging.len()];
    for &(_, l) in pairs.pairs() {
        wanted[l] = true;
    }
    emerging
        .par_iter()
        .zip(wanted.par_iter())
        .map(|(m, &w)| if w { params.adapt_matrix(m) } else { Ok(m.clone()) })
        .collect()
}

pub fn run_sloma(
    seen: &[FeatureMatrix],
    emerging: &[FeatureMatrix],
    pairs: &MatchedPairSet,
    params0: AdapterParams,
    cfg: &SlomaConfig,
) -> Result<SlomaOutcome> {
    run_sloma_observed(seen, emerging, pairs, params0, cfg, |_, _| {})
}

/// [`run_sloma`] with a callback invoked after every adapt step with the
/// iteration number and the new adapter.
pub fn run_sloma_observed<F>(
    seen: &[FeatureMatrix],
    emerging: &[FeatureMatrix],
    pairs: &MatchedPairSet,
    params0: AdapterParams,
    cfg: &SlomaConfig,
    mut observe: F,
) -> Result<SlomaOutcome>
where
    F: FnMut(usize, &AdapterParams),
{
    if pairs.is_empty() {
        return Err(Error::Invalid("SLoMa needs at least one matched pair".into()));
    }
    if !(cfg.eps > 0.0) {
        return Err(Error::Invalid("eps must be positive".into()));
    }
    pairs.check_bounds(seen.len(), emerging.len())?;
    cfg.train.validate()?;

    let mut trace = SlomaTrace::default();
    if cfg.max_iters == 0 {
        return Ok(SlomaOutcome {
            params: params0,
            trace,
        });
    }

    let mut trainer = Trainer::new(params0);
    let mut adapted = adapt_all(trainer.params(), emerging, pairs)?;
    for t in 1..=cfg.max_iters {
        let matched = match_step(seen, &adapted, pairs)?;
        let match_cost = matched.iter().map(|(d, _)| d).sum::<f64>() / matched.len() as f64;
        let paths: Vec<HiPa> = matched.into_iter().map(|(_, p)| p).collect();
        let training = pool_pairs(seen, emerging, pairs, &paths)?;

        let before = trainer.params().clone();
        let report = trainer.train(&training, &cfg.train)?;
        let delta = param_delta(&before, trainer.params())?;
        adapted = adapt_all(trainer.params(), emerging, pairs)?;
        observe(t, trainer.params());
        log::debug!(
            "sloma t={t} match_cost={match_cost:.6} loss={:.6} delta={delta:.3e}",
            report.final_loss()
        );
        trace.iterations.push(SlomaIteration {
            t,
            match_cost,
            train_loss: report.final_loss(),
            param_delta: delta,
        });
        if delta <= cfg.eps {
            trace.converged = true;
            break;
        }
    }
    Ok(SlomaOutcome {
        params: trainer.into_params(),
        trace,
    })
}

/// Mean DPW distance over `pairs` with emerging matrices adapted by `params`.
pub fn mean_match_cost(
    seen: &[FeatureMatrix],
    emerging: &[FeatureMatrix],
    pairs: &MatchedPairSet,
    params: &AdapterParams,
) -> Result<f64> {
    let costs: Vec<f64> = pairs
        .pairs()
        .par_iter()
        .map(|&(k, l)| dpw::dpw_distance(&seen[k], &params.adapt_matrix(&emerging[l])?))
        .collect::<Result<_>>()?;
    Ok(costs.iter().sum::<f64>() / costs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::mean_loss;
    use crate::synth::{gen_task, ModalityMap, SynthConfig};

    fn task(map: ModalityMap, warp: f64, n: usize) -> (Vec<FeatureMatrix>, Vec<FeatureMatrix>, MatchedPairSet) {
        let cfg = SynthConfig {
            warp,
            map,
            noise: 0.0,
            ..SynthConfig::new(n, 6, 6, 3, 21)
        };
        let t = gen_task(&cfg).unwrap();
        let pairs = MatchedPairSet::new(t.truth_indices().into_iter().enumerate().map(|(l, k)| (k, l)).collect())
            .unwrap();
        (t.seen.matrices(), t.emerging.matrices(), pairs)
    }

    #[test]
    fn pair_set_rejects_repeated_emerging_indices() {
        assert!(MatchedPairSet::new(vec![(0, 1), (0, 2)]).is_ok());
        assert!(MatchedPairSet::new(vec![(0, 1), (2, 1)]).is_err());
    }

    #[test]
    fn zero_iterations_returns_params_unchanged() {
        let (s, e, pairs) = task(ModalityMap::Identity, 0.0, 3);
        let p0 = AdapterParams::identity(3, 4, 0).unwrap();
        let cfg = SlomaConfig { max_iters: 0, ..SlomaConfig::default() };
        let out = run_sloma(&s, &e, &pairs, p0.clone(), &cfg).unwrap();
        assert_eq!(out.params, p0);
        assert!(out.trace.iterations.is_empty());
    }

    #[test]
    fn already_matched_sets_converge_in_one_iteration() {
        let (s, e, pairs) = task(ModalityMap::Identity, 0.0, 3);
        let p0 = AdapterParams::identity(3, 4, 0).unwrap();
        let cfg = SlomaConfig { eps: 1e9, ..SlomaConfig::default() };
        let out = run_sloma(&s, &e, &pairs, p0, &cfg).unwrap();
        assert_eq!(out.trace.iterations.len(), 1);
        assert!(out.trace.converged);
        assert_eq!(out.trace.iterations[0].match_cost, 0.0);
    }

    #[test]
    fn empty_pairs_and_bad_eps() {
        let (s, e, _) = task(ModalityMap::Identity, 0.0, 2);
        let p0 = AdapterParams::identity(3, 4, 0).unwrap();
        assert!(run_sloma(&s, &e, &MatchedPairSet::default(), p0.clone(), &SlomaConfig::default()).is_err());
        let pairs = MatchedPairSet::new(vec![(0, 0)]).unwrap();
        let cfg = SlomaConfig { eps: 0.0, ..SlomaConfig::default() };
        assert!(run_sloma(&s, &e, &pairs, p0.clone(), &cfg).is_err());
        let oob = MatchedPairSet::new(vec![(5, 0)]).unwrap();
        assert!(run_sloma(&s, &e, &oob, p0, &SlomaConfig::default()).is_err());
    }

    #[test]
    fn affine_shift_is_reduced_and_trace_is_consistent() {
        let map = ModalityMap::random(3, 0.5, 4);
        let (s, e, pairs) = task(map, 0.2, 4);
        let p0 = AdapterParams::identity(3, 8, 1).unwrap();
        let cfg = SlomaConfig {
            max_iters: 8,
            train: TrainConfig { learning_rate: 1e-2, epochs: 50, ..TrainConfig::default() },
            ..SlomaConfig::default()
        };
        let mut observed = Vec::new();
        let out = run_sloma_observed(&s, &e, &pairs, p0.clone(), &cfg, |t, _| observed.push(t)).unwrap();
        let n = out.trace.iterations.len();
        assert!(n >= 1 && n <= 8);
        assert_eq!(observed, (1..=n).collect::<Vec<_>>());
        assert!(out.trace.iterations.windows(2).all(|w| w[0].t < w[1].t));
        let before = mean_match_cost(&s, &e, &pairs, &p0).unwrap();
        let after = mean_match_cost(&s, &e, &pairs, &out.params).unwrap();
        assert!(after < before, "{after} vs {before}");
    }

    #[test]
    fn optimize_step_does_not_increase_objective_on_fixed_paths() {
        let map = ModalityMap::random(3, 0.5, 8);
        let (s, e, pairs) = task(map, 0.2, 3);
        let p0 = crate::adapter::init_adapter(3, 6, 2).unwrap();
        let adapted: Vec<_> = e.iter().map(|m| p0.adapt_matrix(m).unwrap()).collect();
        let paths: Vec<HiPa> = match_step(&s, &adapted, &pairs).unwrap().into_iter().map(|x| x.1).collect();
        let training = pool_pairs(&s, &e, &pairs, &paths).unwrap();
        let before = mean_loss(&p0, &training).unwrap();
        let cfg = TrainConfig { dropout: false, ..TrainConfig::default() };
        let (p1, _) = crate::adapter::train_on_pairs(&p0, &training, &cfg).unwrap();
        assert!(mean_loss(&p1, &training).unwrap() <= before);
    }
}
