//! Partition planners for the label-skew scenarios.
//!
//! Cases come in three scopes: 1x skews individual clients with a fixed shard,
//! 2x makes every client share one major label that rotates with the round,
//! 3x re-draws every client's label(s) each round. The A variants are
//! single-label shards; the B variants add `minor_count` examples spread over
//! the other labels.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClientDataset, Dataset};
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseId {
    #[serde(rename = "1A")]
    OneA,
    #[serde(rename = "1B")]
    OneB,
    #[serde(rename = "2A")]
    TwoA,
    #[serde(rename = "2B")]
    TwoB,
    #[serde(rename = "3A")]
    ThreeA,
    #[serde(rename = "3B")]
    ThreeB,
    #[serde(rename = "IID")]
    Iid,
    #[serde(rename = "MIXED")]
    Mixed,
}

impl CaseId {
    pub const ALL: [CaseId; 8] = [
        CaseId::OneA,
        CaseId::OneB,
        CaseId::TwoA,
        CaseId::TwoB,
        CaseId::ThreeA,
        CaseId::ThreeB,
        CaseId::Iid,
        CaseId::Mixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseId::OneA => "1A",
            CaseId::OneB => "1B",
            CaseId::TwoA => "2A",
            CaseId::TwoB => "2B",
            CaseId::ThreeA => "3A",
            CaseId::ThreeB => "3B",
            CaseId::Iid => "IID",
            CaseId::Mixed => "MIXED",
        }
    }

    /// Shards with a major label plus minor labels.
    pub fn has_minors(self) -> bool {
        matches!(self, CaseId::OneB | CaseId::TwoB | CaseId::ThreeB)
    }

    /// Shards that are re-drawn every round.
    pub fn is_dynamic(self) -> bool {
        matches!(
            self,
            CaseId::TwoA | CaseId::TwoB | CaseId::ThreeA | CaseId::ThreeB
        )
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CaseId::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown case id {s:?}")))
    }
}

fn default_total() -> usize {
    290
}
fn default_major() -> usize {
    200
}
fn default_minor() -> usize {
    90
}
fn default_n_range() -> [usize; 2] {
    [30, 270]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub id: CaseId,
    #[serde(default = "default_total")]
    pub per_client_total: usize,
    #[serde(default = "default_major")]
    pub major_count: usize,
    #[serde(default = "default_minor")]
    pub minor_count: usize,
    /// Probability that a MIXED client holds a single-label shard.
    #[serde(default)]
    pub p_biased: f64,
    /// Inclusive shard-size range for IID and MIXED clients.
    #[serde(default = "default_n_range")]
    pub n_range: [usize; 2],
}

impl CaseSpec {
    pub fn new(id: CaseId) -> Self {
        Self {
            id,
            per_client_total: default_total(),
            major_count: default_major(),
            minor_count: default_minor(),
            p_biased: 0.0,
            n_range: default_n_range(),
        }
    }

    pub fn mixed(p_biased: f64) -> Self {
        Self {
            p_biased,
            ..Self::new(CaseId::Mixed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_client_total == 0 {
            return Err(Error::invalid("per_client_total must be positive"));
        }
        if self.id.has_minors() && self.major_count + self.minor_count != self.per_client_total {
            return Err(Error::invalid(format!(
                "case {}: major_count + minor_count must equal per_client_total",
                self.id
            )));
        }
        if self.id.has_minors() && self.major_count == 0 {
            return Err(Error::invalid("major_count must be positive"));
        }
        if !(0.0..=1.0).contains(&self.p_biased) {
            return Err(Error::invalid("p_biased must lie in [0, 1]"));
        }
        let [lo, hi] = self.n_range;
        if lo == 0 || lo > hi {
            return Err(Error::invalid("n_range must satisfy 1 <= min <= max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Draw shard examples from the class pools with replacement.
    #[default]
    WithReplacement,
    /// Each pool example is used at most once per round.
    WithoutReplacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionPlan {
    pub case: CaseSpec,
    pub num_clients: usize,
    pub num_rounds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
}

const ROTATION_TAG: u64 = u64::MAX;

impl PartitionPlan {
    pub fn validate(&self) -> Result<()> {
        self.case.validate()?;
        if self.num_clients == 0 {
            return Err(Error::invalid("num_clients must be positive"));
        }
        Ok(())
    }

    /// The shared major label of case 2A/2B at `round`: a seed-shuffled label
    /// order walked round-robin, so any `num_classes` consecutive rounds cover
    /// every label.
    pub fn rotation_label(&self, num_classes: usize, round: usize) -> usize {
        let mut order: Vec<usize> = (0..num_classes).collect();
        order.shuffle(&mut rng::rng_for(self.seed, &[rng::STREAM_PARTITION, ROTATION_TAG]));
        order[(round - 1) % num_classes]
    }

    /// Client shards for global round `round` (1-based). A pure function of
    /// `(self, pool, round)`; static cases return the same shards every round.
    pub fn realize_round(&self, pool: &Arc<Dataset>, round: usize) -> Result<Vec<ClientDataset>> {
        self.validate()?;
        if round == 0 || round > self.num_rounds {
            return Err(Error::invalid(format!(
                "round {round} outside 1..={}",
                self.num_rounds
            )));
        }
        let case = &self.case;
        let num_classes = pool.num_classes();
        if num_classes < 2 && (case.id.has_minors() || matches!(case.id, CaseId::Iid | CaseId::Mixed)) {
            return Err(Error::invalid("case needs at least two classes"));
        }
        let dynamic = case.id.is_dynamic();
        let round_key = if dynamic { round as u64 } else { 0 };
        let mut rng = rng::rng_for(self.seed, &[rng::STREAM_PARTITION, round_key]);
        let shared_label = matches!(case.id, CaseId::TwoA | CaseId::TwoB)
            .then(|| self.rotation_label(num_classes, round));

        let mut sampler = PoolSampler::new(pool, self.sampling, &mut rng);
        (0..self.num_clients)
            .map(|client_id| {
                let wanted = client_labels(case, num_classes, shared_label, &mut rng);
                let indices = sampler.draw(&wanted, &mut rng)?;
                ClientDataset::new(
                    client_id,
                    dynamic.then_some(round),
                    Arc::clone(pool),
                    indices,
                )
            })
            .collect()
    }
}

/// The label of every example a client will hold, in draw order.
fn client_labels(
    case: &CaseSpec,
    num_classes: usize,
    shared_label: Option<usize>,
    rng: &mut SimRng,
) -> Vec<usize> {
    let uniform = |rng: &mut SimRng| rng.random_range(0..num_classes);
    match case.id {
        CaseId::OneA | CaseId::ThreeA => vec![uniform(rng); case.per_client_total],
        CaseId::TwoA => vec![shared_label.expect("rotation label"); case.per_client_total],
        CaseId::OneB | CaseId::TwoB | CaseId::ThreeB => {
            let major = shared_label.unwrap_or_else(|| uniform(rng));
            let mut labels = vec![major; case.major_count];
            // Minors: uniform with replacement over the other labels.
            labels.extend((0..case.minor_count).map(|_| {
                let k = rng.random_range(0..num_classes - 1);
                if k >= major {
                    k + 1
                } else {
                    k
                }
            }));
            labels
        }
        CaseId::Iid => stratified_labels(case, num_classes, rng),
        CaseId::Mixed => {
            if rng.random_bool(case.p_biased) {
                let n = rng.random_range(case.n_range[0]..=case.n_range[1]);
                vec![uniform(rng); n]
            } else {
                stratified_labels(case, num_classes, rng)
            }
        }
    }
}

/// Balanced label counts for a shard of random size in `n_range`; the
/// remainder lands on randomly chosen classes.
fn stratified_labels(case: &CaseSpec, num_classes: usize, rng: &mut SimRng) -> Vec<usize> {
    let n = rng.random_range(case.n_range[0]..=case.n_range[1]);
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.shuffle(rng);
    (0..n).map(|j| order[j % num_classes]).collect()
}

struct PoolSampler {
    pools: Vec<Vec<usize>>,
    cursors: Vec<usize>,
    sampling: Sampling,
}

impl PoolSampler {
    fn new(pool: &Dataset, sampling: Sampling, rng: &mut SimRng) -> Self {
        let mut pools = pool.class_pools();
        if sampling == Sampling::WithoutReplacement {
            for p in &mut pools {
                p.shuffle(rng);
            }
        }
        let cursors = vec![0; pools.len()];
        Self {
            pools,
            cursors,
            sampling,
        }
    }

    fn draw(&mut self, labels: &[usize], rng: &mut SimRng) -> Result<Vec<usize>> {
        let mut need = vec![0usize; self.pools.len()];
        for &l in labels {
            need[l] += 1;
        }
        for (label, (&needed, pool)) in need.iter().zip(&self.pools).enumerate() {
            let available = match self.sampling {
                Sampling::WithReplacement => pool.len(),
                Sampling::WithoutReplacement => pool.len() - self.cursors[label],
            };
            let short = match self.sampling {
                Sampling::WithReplacement => needed > 0 && available == 0,
                Sampling::WithoutReplacement => needed > available,
            };
            if short {
                return Err(Error::InsufficientClassExamples {
                    label,
                    needed,
                    available,
                });
            }
        }
        Ok(labels
            .iter()
            .map(|&l| match self.sampling {
                Sampling::WithReplacement => self.pools[l][rng.random_range(0..self.pools[l].len())],
                Sampling::WithoutReplacement => {
                    let i = self.pools[l][self.cursors[l]];
                    self.cursors[l] += 1;
                    i
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;
    use crate::labelstats::label_variance;
    use std::collections::BTreeSet;

    fn pool() -> Arc<Dataset> {
        Arc::new(synth_dataset(10, 40, 4, 0.1, 11).unwrap())
    }

    fn plan(case: CaseSpec, num_clients: usize) -> PartitionPlan {
        PartitionPlan {
            case,
            num_clients,
            num_rounds: 30,
            seed: 5,
            sampling: Sampling::WithReplacement,
        }
    }

    fn unique(shard: &ClientDataset) -> BTreeSet<usize> {
        shard.labels().into_iter().collect()
    }

    #[test]
    fn case_1a_single_label_shards() {
        let shards = plan(CaseSpec::new(CaseId::OneA), 3).realize_round(&pool(), 1).unwrap();
        assert_eq!(shards.len(), 3);
        for s in &shards {
            assert_eq!(s.len(), 290);
            assert_eq!(unique(s).len(), 1);
            assert_eq!(label_variance(&s.label_multiset()), 0.0);
            assert_eq!(s.round, None);
        }
    }

    #[test]
    fn case_1b_major_and_minor_counts() {
        let shards = plan(CaseSpec::new(CaseId::OneB), 20).realize_round(&pool(), 4).unwrap();
        for s in &shards {
            let hist = s.histogram();
            let major = hist.iter().position(|&c| c >= 200).unwrap();
            assert_eq!(hist[major], 200);
            assert_eq!(hist.iter().sum::<usize>() - hist[major], 90);
        }
    }

    #[test]
    fn case_2a_shares_label_and_rotates() {
        let p = plan(CaseSpec::new(CaseId::TwoA), 5);
        let pool = pool();
        let mut seen = BTreeSet::new();
        for round in 1..=10 {
            let shards = p.realize_round(&pool, round).unwrap();
            let labels: BTreeSet<usize> = shards.iter().flat_map(unique).collect();
            assert_eq!(labels.len(), 1);
            assert!(shards.iter().all(|s| s.round == Some(round)));
            seen.extend(labels);
        }
        assert_eq!(seen, (0..10).collect());
    }

    #[test]
    fn case_2b_major_is_the_rotation_label() {
        let p = plan(CaseSpec::new(CaseId::TwoB), 6);
        let pool = pool();
        let shards = p.realize_round(&pool, 3).unwrap();
        let major = p.rotation_label(10, 3);
        for s in &shards {
            assert_eq!(s.histogram()[major], 200);
        }
    }

    #[test]
    fn case_3a_redraws_each_round() {
        let p = plan(CaseSpec::new(CaseId::ThreeA), 30);
        let pool = pool();
        let r1: Vec<_> = p.realize_round(&pool, 1).unwrap().iter().map(unique).collect();
        let r2: Vec<_> = p.realize_round(&pool, 2).unwrap().iter().map(unique).collect();
        assert!(r1.iter().chain(&r2).all(|u| u.len() == 1));
        assert_ne!(r1, r2);
    }

    #[test]
    fn static_cases_repeat_across_rounds() {
        let pool = pool();
        for id in [CaseId::OneA, CaseId::OneB, CaseId::Iid, CaseId::Mixed] {
            let p = plan(CaseSpec::new(id), 8);
            let a: Vec<_> = p.realize_round(&pool, 1).unwrap().iter().map(|s| s.indices().to_vec()).collect();
            let b: Vec<_> = p.realize_round(&pool, 7).unwrap().iter().map(|s| s.indices().to_vec()).collect();
            assert_eq!(a, b, "{id}");
        }
    }

    #[test]
    fn iid_shards_are_balanced_and_sized() {
        let shards = plan(CaseSpec::new(CaseId::Iid), 50).realize_round(&pool(), 1).unwrap();
        for s in &shards {
            assert!((30..=270).contains(&s.len()));
            let hist = s.histogram();
            let (lo, hi) = (hist.iter().min().unwrap(), hist.iter().max().unwrap());
            assert!(hi - lo <= 1);
            assert!(label_variance(&s.label_multiset()) > 0.0);
        }
    }

    #[test]
    fn mixed_extremes() {
        let pool = pool();
        let all_biased = plan(CaseSpec::mixed(1.0), 40).realize_round(&pool, 1).unwrap();
        assert!(all_biased.iter().all(|s| unique(s).len() == 1));
        let none_biased = plan(CaseSpec::mixed(0.0), 40).realize_round(&pool, 1).unwrap();
        assert!(none_biased.iter().all(|s| unique(s).len() == 10));
    }

    #[test]
    fn without_replacement_runs_out() {
        let mut p = plan(CaseSpec::new(CaseId::OneA), 3);
        p.case.per_client_total = 30;
        p.sampling = Sampling::WithoutReplacement;
        let small = Arc::new(synth_dataset(10, 40, 4, 0.1, 1).unwrap());
        let shards = p.realize_round(&small, 1).unwrap();
        for s in &shards {
            let distinct: BTreeSet<_> = s.indices().iter().collect();
            assert_eq!(distinct.len(), 30);
        }
        p.case.per_client_total = 41;
        let err = p.realize_round(&small, 1).unwrap_err();
        assert!(matches!(err, Error::InsufficientClassExamples { needed: 41, available: 40, .. }));
    }

    #[test]
    fn rejects_bad_plans() {
        let pool = pool();
        let p = plan(CaseSpec::new(CaseId::OneA), 3);
        assert!(p.realize_round(&pool, 0).is_err());
        assert!(p.realize_round(&pool, 31).is_err());
        let mut bad = CaseSpec::new(CaseId::OneB);
        bad.minor_count = 10;
        assert!(bad.validate().is_err());
        assert!(CaseSpec::mixed(1.5).validate().is_err());
        assert!("4C".parse::<CaseId>().is_err());
        assert_eq!("mixed".parse::<CaseId>().unwrap(), CaseId::Mixed);
    }

    #[test]
    fn deterministic() {
        let pool = pool();
        for id in CaseId::ALL {
            let mut case = CaseSpec::new(id);
            case.p_biased = 0.5;
            let p = plan(case, 10);
            let a: Vec<_> = p.realize_round(&pool, 3).unwrap().iter().map(|s| s.indices().to_vec()).collect();
            let b: Vec<_> = p.realize_round(&pool, 3).unwrap().iter().map(|s| s.indices().to_vec()).collect();
            assert_eq!(a, b);
        }
    }
}
