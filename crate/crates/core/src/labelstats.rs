//! Label-distribution statistics.
//!
//! Labels are categorical: before any arithmetic a multiset is remapped so its
//! sorted distinct labels become `0..k`. That makes the variance score depend
//! only on how many labels a client holds and how evenly, never on which ids
//! they happen to carry.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Default logarithm base for [`kl_divergence`].
pub const DEFAULT_LOG_BASE: f64 = 10.0;
/// Default additive smoothing for [`kl_divergence`].
pub const DEFAULT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMultiset {
    labels: Vec<usize>,
    universe: Vec<usize>,
}

impl LabelMultiset {
    /// `universe` is sorted and deduplicated; every label must belong to it.
    pub fn new(labels: Vec<usize>, universe: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("label multiset must be non-empty"));
        }
        let universe: Vec<usize> = universe.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        if let Some(l) = labels.iter().find(|l| universe.binary_search(l).is_err()) {
            return Err(Error::invalid(format!("label {l} outside the universe")));
        }
        Ok(Self { labels, universe })
    }

    /// Multiset whose universe is exactly its own distinct labels.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let universe = labels.clone();
        Self::new(labels, universe)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn universe(&self) -> &[usize] {
        &self.universe
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn distinct(&self) -> BTreeSet<usize> {
        self.labels.iter().copied().collect()
    }
}

/// Maps the sorted distinct labels to `0..k`, keeping multiplicities and order.
pub fn remap_labels(set: &LabelMultiset) -> Vec<usize> {
    let distinct: Vec<usize> = set.distinct().into_iter().collect();
    set.labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("label is in its own distinct set"))
        .collect()
}

/// Population variance of the remapped labels. Zero iff one distinct label.
pub fn label_variance(set: &LabelMultiset) -> f64 {
    let remapped = remap_labels(set);
    let n = remapped.len() as u128;
    let (sum, sum_sq) = remapped.iter().fold((0u128, 0u128), |(s, q), &x| {
        let x = x as u128;
        (s + x, q + x * x)
    });
    // n * sum_sq - sum^2 is an exact integer; divide once.
    let numer = n * sum_sq - sum * sum;
    numer as f64 / (n * n) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    probs: Vec<f64>,
    universe: Vec<usize>,
}

impl LabelDistribution {
    pub fn new(probs: Vec<f64>, universe: Vec<usize>) -> Result<Self> {
        if probs.is_empty() || probs.len() != universe.len() {
            return Err(Error::LengthMismatch {
                left: probs.len(),
                right: universe.len(),
            });
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs, universe })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn universe(&self) -> &[usize] {
        &self.universe
    }

    /// `label,probability` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,probability\n");
        for (l, p) in self.universe.iter().zip(&self.probs) {
            writeln!(out, "{l},{p}").expect("writing to a String");
        }
        out
    }
}

/// Normalized histogram of `set` over its universe.
pub fn label_distribution(set: &LabelMultiset) -> LabelDistribution {
    let mut counts = vec![0usize; set.universe.len()];
    for l in &set.labels {
        counts[set.universe.binary_search(l).expect("validated")] += 1;
    }
    let n = set.labels.len() as f64;
    LabelDistribution {
        probs: counts.into_iter().map(|c| c as f64 / n).collect(),
        universe: set.universe.clone(),
    }
}

pub fn uniform_reference(universe: &[usize]) -> Result<LabelDistribution> {
    if universe.is_empty() {
        return Err(Error::invalid("universe must be non-empty"));
    }
    let universe: Vec<usize> = universe.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let k = universe.len() as f64;
    Ok(LabelDistribution {
        probs: vec![1.0 / k; universe.len()],
        universe,
    })
}

/// `sum_k p_k log(p_k / q_k)` in base `log_base`, after adding `epsilon` to
/// every bin of both distributions and renormalizing.
///
/// With `epsilon = 0` bins where `p_k = 0` contribute nothing and a bin with
/// `p_k > 0 = q_k` makes the divergence infinite.
pub fn kl_divergence(
    p: &LabelDistribution,
    q: &LabelDistribution,
    log_base: f64,
    epsilon: f64,
) -> Result<f64> {
    if p.universe != q.universe {
        return Err(Error::UniverseMismatch);
    }
    if !(log_base.is_finite() && log_base > 1.0) {
        return Err(Error::invalid("log_base must be a finite number > 1"));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::invalid("epsilon must be finite and >= 0"));
    }
    let k = p.probs.len() as f64;
    let norm = 1.0 + k * epsilon;
    let ln_base = log_base.ln();
    let mut total = 0.0;
    for (&pk, &qk) in p.probs.iter().zip(&q.probs) {
        let ps = (pk + epsilon) / norm;
        let qs = (qk + epsilon) / norm;
        if ps > 0.0 {
            total += ps * (ps / qs).ln();
        }
    }
    Ok((total / ln_base).max(0.0))
}

/// KL of the label histogram of `set` from the uniform distribution over its
/// universe, with the default base and smoothing.
pub fn kl_to_uniform(set: &LabelMultiset) -> f64 {
    let p = label_distribution(set);
    let u = uniform_reference(set.universe()).expect("universe is non-empty");
    kl_divergence(&p, &u, DEFAULT_LOG_BASE, DEFAULT_EPSILON).expect("shared universe")
}

/// Upper bound `1 + tau (tau - 1)` on the number of distinct areas among
/// clients carrying `tau` distinct labels.
pub fn area_upper_bound(tau: u64) -> Result<u64> {
    if tau < 1 {
        return Err(Error::invalid("tau must be >= 1"));
    }
    Ok(1 + tau * (tau - 1))
}

/// Label clusters and coverage areas for one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterTopology {
    /// Number of distinct labels across all clients.
    pub q: usize,
    /// Label `k` -> ids of the clients whose shard contains `k`.
    pub cluster_members: BTreeMap<usize, Vec<usize>>,
    /// Client id -> area index `p = q - m + 1`, where `m` is the client's
    /// number of distinct labels. Area 1 holds clients that cover every label.
    pub area_of: BTreeMap<usize, usize>,
}

impl ClusterTopology {
    /// Area index -> member client ids, ascending.
    pub fn areas(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut areas: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (&client, &p) in &self.area_of {
            areas.entry(p).or_default().push(client);
        }
        areas
    }

    pub fn distinct_areas(&self) -> usize {
        self.areas().len()
    }
}

pub fn build_topology(label_sets: &BTreeMap<usize, LabelMultiset>) -> Result<ClusterTopology> {
    if label_sets.is_empty() {
        return Err(Error::invalid("topology needs at least one client"));
    }
    let mut cluster_members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut distinct_counts = BTreeMap::new();
    for (&client, set) in label_sets {
        let distinct = set.distinct();
        for &label in &distinct {
            cluster_members.entry(label).or_default().push(client);
        }
        distinct_counts.insert(client, distinct.len());
    }
    let q = cluster_members.len();
    let area_of = distinct_counts
        .into_iter()
        .map(|(client, m)| (client, q - m + 1))
        .collect();
    Ok(ClusterTopology {
        q,
        cluster_members,
        area_of,
    })
}
