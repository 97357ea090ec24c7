//! Top-k match accuracy, immediate-performance tracking and the point-wise
//! KNN baseline.
//!
//! Each emerging item is matched to the seen items ranked by ascending
//! distance. Ground truth is class id equality, so both datasets must carry
//! the same set of ids. Rank ties go to the lower class id.

use std::collections::BTreeSet;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::AdapterParams;
use crate::error::{Error, Result};
use crate::matrix::{Dataset, FeatureMatrix};
use crate::swim::{dpw_distance_matrix, DistanceMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub class_id: u64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub emerging_id: u64,
    pub ranked: Vec<Ranked>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub metric: String,
    pub k: usize,
    pub top1: f64,
    pub top5: f64,
    pub items: Vec<ItemReport>,
}

impl MatchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }

    /// `metric,value` summary.
    pub fn summary_csv(&self) -> String {
        format!(
            "metric,value\ndistance,{}\nitems,{}\nk,{}\ntop1,{}\ntop5,{}\n",
            self.metric,
            self.items.len(),
            self.k,
            self.top1,
            self.top5
        )
    }
}

fn check_labels(seen: &Dataset, emerging: &Dataset) -> Result<()> {
    if seen.is_empty() {
        return Err(Error::Invalid("seen dataset is empty".into()));
    }
    let a: BTreeSet<u64> = seen.class_ids().into_iter().collect();
    let b: BTreeSet<u64> = emerging.class_ids().into_iter().collect();
    if a != b {
        return Err(Error::Invalid(format!(
            "seen and emerging class id sets differ ({} vs {} ids, {} shared)",
            a.len(),
            b.len(),
            a.intersection(&b).count()
        )));
    }
    Ok(())
}

/// Ranked report from a precomputed `seen x emerging` table. `k > N` is
/// clamped to `N`.
pub fn report_from_distances(
    seen: &Dataset,
    emerging: &Dataset,
    dist: &DistanceMatrix,
    k: usize,
    metric: &str,
) -> Result<MatchReport> {
    check_labels(seen, emerging)?;
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    let n = seen.len();
    if dist.seen_len() != n || dist.emerging_len() != emerging.len() {
        return Err(Error::Dimension("distance table does not match the datasets".into()));
    }
    let k_eff = if k > n {
        warn!("k = {k} exceeds the {n} seen items; using {n}");
        n
    } else {
        k
    };
    let seen_ids = seen.class_ids();
    let (mut hit1, mut hit5) = (0usize, 0usize);
    let mut items = Vec::with_capacity(emerging.len());
    for (j, e) in emerging.entries().iter().enumerate() {
        let mut ranked: Vec<Ranked> = (0..n)
            .map(|i| Ranked {
                class_id: seen_ids[i],
                distance: dist.get(i, j),
            })
            .collect();
        ranked.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.class_id.cmp(&b.class_id)));
        let rank = ranked.iter().position(|r| r.class_id == e.class_id);
        hit1 += usize::from(rank == Some(0));
        hit5 += usize::from(rank.is_some_and(|r| r < 5));
        ranked.truncate(k_eff);
        items.push(ItemReport {
            emerging_id: e.class_id,
            ranked,
        });
    }
    let total = emerging.len().max(1) as f64;
    Ok(MatchReport {
        metric: metric.to_string(),
        k: k_eff,
        top1: hit1 as f64 / total,
        top5: hit5 as f64 / total,
        items,
    })
}

fn adapted(emerging: &Dataset, params: &AdapterParams) -> Result<Vec<FeatureMatrix>> {
    emerging
        .entries()
        .par_iter()
        .map(|e| params.adapt_matrix(&e.matrix))
        .collect()
}

/// Adapt every emerging matrix, rank seen matrices by DPW distance.
pub fn match_topk(seen: &Dataset, emerging: &Dataset, params: &AdapterParams, k: usize) -> Result<MatchReport> {
    check_labels(seen, emerging)?;
    let dist = dpw_distance_matrix(&seen.matrices(), &adapted(emerging, params)?)?;
    report_from_distances(seen, emerging, &dist, k, "dpw")
}

/// Entrywise L1 distances between every seen and adapted emerging matrix.
pub fn l1_distance_matrix(seen: &[FeatureMatrix], emerging: &[FeatureMatrix]) -> Result<DistanceMatrix> {
    let n = emerging.len();
    let data = (0..seen.len() * n)
        .into_par_iter()
        .map(|idx| seen[idx / n].l1_distance(&emerging[idx % n]))
        .collect::<Result<Vec<_>>>()?;
    DistanceMatrix::new(seen.len(), n, data)
}

/// Same pipeline as [`match_topk`] but ranking by point-wise L1 distance.
/// Every matrix must have the same shape.
pub fn knn_baseline(seen: &Dataset, emerging: &Dataset, params: &AdapterParams, k: usize) -> Result<MatchReport> {
    check_labels(seen, emerging)?;
    let dist = l1_distance_matrix(&seen.matrices(), &adapted(emerging, params)?)?;
    report_from_distances(seen, emerging, &dist, k, "l1")
}

/// Top-1 and top-5 accuracy where emerging `j` truly matches seen
/// `truth[j]`. Ties rank the lower seen index first.
pub fn accuracy_from_distances(dist: &DistanceMatrix, truth: &[usize]) -> (f64, f64) {
    let (mut hit1, mut hit5) = (0usize, 0usize);
    for (j, &t) in truth.iter().enumerate() {
        let dt = dist.get(t, j);
        // Items ranked strictly ahead of the truth.
        let ahead = (0..dist.seen_len())
            .filter(|&i| {
                let d = dist.get(i, j);
                d < dt || (d == dt && i < t)
            })
            .count();
        hit1 += usize::from(ahead == 0);
        hit5 += usize::from(ahead < 5);
    }
    let n = truth.len().max(1) as f64;
    (hit1 as f64 / n, hit5 as f64 / n)
}

/// Immediate (top-1, top-5) accuracy of one adapter snapshot.
pub fn track_immediate(
    seen: &[FeatureMatrix],
    emerging: &[FeatureMatrix],
    params: &AdapterParams,
    truth: &[usize],
) -> Result<(f64, f64)> {
    let adapted: Vec<FeatureMatrix> = emerging
        .par_iter()
        .map(|m| params.adapt_matrix(m))
        .collect::<Result<_>>()?;
    let dist = dpw_distance_matrix(seen, &adapted)?;
    Ok(accuracy_from_distances(&dist, truth))
}
