//! Self-reinforcing whole image matching: the outer loop that grows the
//! potentially-matched pair set by `alpha` per iteration and reruns SLoMa on
//! it.

use rayon::prelude::*;

use crate::adapter::AdapterParams;
use crate::dpw::dpw_distance;
use crate::error::{Error, Result};
use crate::eval::accuracy_from_distances;
use crate::matrix::FeatureMatrix;
use crate::seed;
use crate::sloma::{run_sloma, MatchedPairSet, SlomaConfig, SlomaTrace};

/// Dense `seen x emerging` distance table, row-major by seen index.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    seen: usize,
    emerging: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(seen: usize, emerging: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != seen * emerging {
            return Err(Error::Dimension(format!(
                "distance table of {} values for {seen}x{emerging}",
                data.len()
            )));
        }
        Ok(DistanceMatrix { seen, emerging, data })
    }

    pub fn seen_len(&self) -> usize {
        self.seen
    }

    pub fn emerging_len(&self) -> usize {
        self.emerging
    }

    /// Distance between seen `i` and emerging `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.emerging + j]
    }

    /// Seen index with the smallest distance to emerging `j`, lowest index on
    /// ties, and that distance.
    pub fn best_seen(&self, j: usize) -> (usize, f64) {
        let mut best = (0, self.get(0, j));
        for i in 1..self.seen {
            let d = self.get(i, j);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

fn check_sets(seen: &[FeatureMatrix], emerging: &[FeatureMatrix]) -> Result<()> {
    if seen.is_empty() || emerging.is_empty() {
        return Err(Error::Invalid("distance table needs nonempty sets".into()));
    }
    let c = seen[0].channels();
    if let Some(m) = seen.iter().chain(emerging).find(|m| m.channels() != c) {
        return Err(Error::Dimension(format!(
            "channel mismatch: {} vs {c}",
            m.channels()
        )));
    }
    Ok(())
}

/// All pairwise DPW distances, evaluated in parallel on the current rayon
/// pool.
pub fn dpw_distance_matrix(seen: &[FeatureMatrix], emerging: &[FeatureMatrix]) -> Result<DistanceMatrix> {
    check_sets(seen, emerging)?;
    let n = emerging.len();
    let data = (0..seen.len() * n)
        .into_par_iter()
        .map(|idx| dpw_distance(&seen[idx / n], &emerging[idx % n]))
        .collect::<Result<Vec<_>>>()?;
    DistanceMatrix::new(seen.len(), n, data)
}

/// Single-threaded [`dpw_distance_matrix`].
pub fn dpw_distance_matrix_serial(seen: &[FeatureMatrix], emerging: &[FeatureMatrix]) -> Result<DistanceMatrix> {
    check_sets(seen, emerging)?;
    let mut data = Vec::with_capacity(seen.len() * emerging.len());
    for s in seen {
        for e in emerging {
            data.push(dpw_distance(s, e)?);
        }
    }
    DistanceMatrix::new(seen.len(), emerging.len(), data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwimConfig {
    /// Exploration step size: pairs added per outer iteration.
    pub alpha: usize,
    pub hidden: usize,
    pub sloma: SlomaConfig,
    pub seed: u64,
}

impl Default for SwimConfig {
    fn default() -> Self {
        SwimConfig {
            alpha: 1,
            hidden: 32,
            sloma: SlomaConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwimIteration {
    /// 1-based outer iteration.
    pub t: usize,
    pub n: usize,
    pub pairs: MatchedPairSet,
    /// Best-DPW distance of each selected pair, in selection order.
    pub pair_distances: Vec<f64>,
    pub sloma: SlomaTrace,
    /// Immediate top-1/top-5 accuracy under the adapter this iteration
    /// produced, when ground truth was supplied.
    pub top1: Option<f64>,
    pub top5: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SwimTrace {
    pub iterations: Vec<SwimIteration>,
}

impl SwimTrace {
    /// `t,n,top1,top5,sloma_iters,converged`; accuracy columns are empty
    /// without ground truth.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from("t,n,top1,top5,sloma_iters,converged\n");
        for it in &self.iterations {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                it.t,
                it.n,
                opt(it.top1),
                opt(it.top5),
                it.sloma.iterations.len(),
                it.sloma.converged
            ));
        }
        s
    }

    /// Every inner iteration as `T,t,match_cost,train_loss,param_delta`.
    pub fn sloma_csv(&self) -> String {
        let mut s = String::from("T,t,match_cost,train_loss,param_delta\n");
        for it in &self.iterations {
            for inner in &it.sloma.iterations {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    it.t, inner.t, inner.match_cost, inner.train_loss, inner.param_delta
                ));
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct SwimOutcome {
    /// The last pair set built; covers every emerging index.
    pub assignment: MatchedPairSet,
    pub pair_distances: Vec<f64>,
    pub params: AdapterParams,
    pub trace: SwimTrace,
}

impl SwimOutcome {
    /// Seen index per emerging index.
    pub fn seen_for_emerging(&self) -> Vec<usize> {
        let mut out = vec![0; self.assignment.len()];
        for &(k, l) in self.assignment.pairs() {
            out[l] = k;
        }
        out
    }
}

/// Greedy build: take the `n` emerging items with the smallest best-seen
/// distance, in increasing order, each paired with its argmin seen item.
pub fn build_pairs(dist: &DistanceMatrix, n: usize) -> (MatchedPairSet, Vec<f64>) {
    let mut best: Vec<(usize, usize, f64)> = (0..dist.emerging_len())
        .map(|j| {
            let (i, d) = dist.best_seen(j);
            (j, i, d)
        })
        .collect();
    // Stable sort keeps lower emerging indices first among equal distances.
    best.sort_by(|a, b| a.2.total_cmp(&b.2));
    best.truncate(n);
    let dists = best.iter().map(|b| b.2).collect();
    let pairs = MatchedPairSet::new(best.into_iter().map(|(j, i, _)| (i, j)).collect())
        .expect("each emerging index is taken once");
    (pairs, dists)
}

fn adapt_all(params: &AdapterParams, emerging: &[FeatureMatrix]) -> Result<Vec<FeatureMatrix>> {
    emerging.par_iter().map(|m| params.adapt_matrix(m)).collect()
}

/// Number of outer iterations for `n` items at step `alpha`.
pub fn iteration_count(n: usize, alpha: usize) -> usize {
    n.div_ceil(alpha)
}

/// Run the outer loop. `truth[j]`, when given, is the seen index that
/// emerging `j` truly matches and enables per-iteration accuracy tracking.
pub fn run_swim(
    seen: &[FeatureMatrix],
    emerging: &[FeatureMatrix],
    cfg: &SwimConfig,
    truth: Option<&[usize]>,
) -> Result<SwimOutcome> {
    let n = emerging.len();
    if seen.len() != n {
        return Err(Error::Dimension(format!(
            "{} seen vs {n} emerging matrices",
            seen.len()
        )));
    }
    if n == 0 {
        return Err(Error::Invalid("SWIM needs at least one matrix per set".into()));
    }
    if cfg.alpha == 0 || cfg.alpha > n {
        return Err(Error::Invalid(format!("alpha must be in [1, {n}], got {}", cfg.alpha)));
    }
    if let Some(t) = truth {
        if t.len() != n || t.iter().any(|&k| k >= n) {
            return Err(Error::Invalid("ground truth must map every emerging index to a seen index".into()));
        }
    }
    check_sets(seen, emerging)?;

    let c = seen[0].channels();
    let mut params = AdapterParams::identity(c, cfg.hidden, seed::derive(cfg.seed, seed::ADAPTER_INIT))?;
    let mut dist = dpw_distance_matrix(seen, &adapt_all(&params, emerging)?)?;
    let mut trace = SwimTrace::default();
    let mut last = (MatchedPairSet::default(), Vec::new());

    for t in 1..=iteration_count(n, cfg.alpha) {
        let n_t = (cfg.alpha * t).min(n);
        let (pairs, pair_distances) = build_pairs(&dist, n_t);
        let out = run_sloma(seen, emerging, &pairs, params, &cfg.sloma)?;
        params = out.params;
        dist = dpw_distance_matrix(seen, &adapt_all(&params, emerging)?)?;
        let (top1, top5) = match truth {
            Some(truth) => {
                let (a, b) = accuracy_from_distances(&dist, truth);
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        log::info!(
            "swim T={t} n={n_t} sloma_iters={} top1={top1:?}",
            out.trace.iterations.len()
        );
        trace.iterations.push(SwimIteration {
            t,
            n: n_t,
            pairs: pairs.clone(),
            pair_distances: pair_distances.clone(),
            sloma: out.trace,
            top1,
            top5,
        });
        last = (pairs, pair_distances);
    }

    Ok(SwimOutcome {
        assignment: last.0,
        pair_distances: last.1,
        params,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::TrainConfig;
    use crate::synth::{gen_task, SynthConfig};

    fn scalar(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::from_scalar_rows(rows).unwrap()
    }

    fn quick() -> SwimConfig {
        SwimConfig {
            hidden: 8,
            sloma: SlomaConfig {
                max_iters: 3,
                train: TrainConfig { epochs: 5, ..TrainConfig::default() },
                ..SlomaConfig::default()
            },
            ..SwimConfig::default()
        }
    }

    #[test]
    fn identical_sets_have_zero_diagonal() {
        let task = gen_task(&SynthConfig::new(4, 5, 5, 2, 3)).unwrap();
        let m = task.seen.matrices();
        let d = dpw_distance_matrix(&m, &m).unwrap();
        for i in 0..4 {
            assert_eq!(d.get(i, i), 0.0);
        }
    }

    #[test]
    fn two_by_two_toy_matches_individual_calls() {
        let s = vec![scalar(&[&[0.0, 1.0], &[2.0, 3.0]]), scalar(&[&[5.0]])];
        let e = vec![scalar(&[&[0.0, 1.0, 1.0]]), scalar(&[&[4.0, 6.0], &[5.0, 5.0]])];
        let d = dpw_distance_matrix(&s, &e).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(d.get(i, j), dpw_distance(&s[i], &e[j]).unwrap());
            }
        }
        // [5] against [0,1,1]: 5+4+4
        assert_eq!(d.get(1, 0), 13.0);
    }

    #[test]
    fn parallel_and_serial_agree() {
        let task = gen_task(&SynthConfig::new(6, 4, 5, 3, 8)).unwrap();
        let (s, e) = (task.seen.matrices(), task.emerging.matrices());
        assert_eq!(
            dpw_distance_matrix(&s, &e).unwrap(),
            dpw_distance_matrix_serial(&s, &e).unwrap()
        );
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let a = vec![FeatureMatrix::zeros(2, 2, 1).unwrap()];
        let b = vec![FeatureMatrix::zeros(2, 2, 2).unwrap()];
        assert!(matches!(dpw_distance_matrix(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn greedy_build_orders_by_best_distance() {
        // 3 seen x 3 emerging; best per emerging: e0 -> (1, 0.5), e1 -> (0, 0.2), e2 -> (0, 0.5)
        let d = DistanceMatrix::new(3, 3, vec![1.0, 0.2, 0.5, 0.5, 0.9, 0.5, 2.0, 0.3, 0.7]).unwrap();
        let (p, dists) = build_pairs(&d, 3);
        assert_eq!(p.pairs(), &[(0, 1), (1, 0), (0, 2)]);
        assert_eq!(dists, vec![0.2, 0.5, 0.5]);
        assert!(dists.windows(2).all(|w| w[0] <= w[1]));
        let (p, _) = build_pairs(&d, 1);
        assert_eq!(p.pairs(), &[(0, 1)]);
    }

    #[test]
    fn iteration_counts_follow_step_size() {
        let task = gen_task(&SynthConfig::new(5, 4, 4, 2, 1)).unwrap();
        let (s, e, truth) = (task.seen.matrices(), task.emerging.matrices(), task.truth_indices());
        for (alpha, iters) in [(1, 5), (2, 3), (5, 1)] {
            let out = run_swim(&s, &e, &SwimConfig { alpha, ..quick() }, Some(&truth)).unwrap();
            assert_eq!(out.trace.iterations.len(), iters);
            assert_eq!(iteration_count(5, alpha), iters);
            let ns: Vec<usize> = out.trace.iterations.iter().map(|i| i.n).collect();
            assert!(ns.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(*ns.last().unwrap(), 5);
            assert_eq!(out.assignment.len(), 5);
            for it in &out.trace.iterations {
                let (a, b) = (it.top1.unwrap(), it.top5.unwrap());
                assert!((0.0..=1.0).contains(&a) && a <= b);
            }
        }
    }

    #[test]
    fn single_item_runs_once() {
        let m = vec![scalar(&[&[0.2, 0.4]])];
        let out = run_swim(&m, &m, &quick(), None).unwrap();
        assert_eq!(out.trace.iterations.len(), 1);
        assert_eq!(out.assignment.pairs(), &[(0, 0)]);
        assert_eq!(out.trace.iterations[0].top1, None);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = vec![scalar(&[&[0.2]]), scalar(&[&[0.4]])];
        assert!(run_swim(&m, &m[..1], &quick(), None).is_err());
        assert!(run_swim(&m, &m, &SwimConfig { alpha: 0, ..quick() }, None).is_err());
        assert!(run_swim(&m, &m, &SwimConfig { alpha: 3, ..quick() }, None).is_err());
    }

    #[test]
    fn deterministic() {
        let task = gen_task(&SynthConfig::new(4, 4, 4, 2, 5)).unwrap();
        let (s, e) = (task.seen.matrices(), task.emerging.matrices());
        let a = run_swim(&s, &e, &quick(), None).unwrap();
        let b = run_swim(&s, &e, &quick(), None).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.params, b.params);
    }
}
