use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::labelstats::label_variance;
use crate::rng::SimRng;

/// A client as seen by the server in one round.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    pub shard: ClientDataset,
    pub label_variance: f64,
    pub eligible: bool,
}

impl ClientState {
    /// Computes the shard's label variance. With `require_variance` the client
    /// is eligible only when that variance is non-zero.
    pub fn new(shard: ClientDataset, require_variance: bool) -> Self {
        let label_variance = label_variance(&shard.label_multiset());
        Self {
            client_id: shard.client_id,
            eligible: !require_variance || label_variance != 0.0,
            label_variance,
            shard,
        }
    }

    pub fn score(&self, mode: ScoreMode) -> f64 {
        match mode {
            ScoreMode::PerExample => self.label_variance / self.shard.len() as f64,
            ScoreMode::Raw => self.label_variance,
        }
    }
}

/// How the label-wise score treats shard size.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// `σ²(L_i) / n_i`.
    #[default]
    PerExample,
    /// `σ²(L_i)` alone.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub round: usize,
    /// Selected client ids in selection order.
    pub selected: Vec<usize>,
    /// Score of each selected client, aligned with `selected`.
    pub scores: Vec<f64>,
    pub effective_n: usize,
}

impl SelectionResult {
    pub fn mean_score(&self) -> f64 {
        if self.scores.is_empty() {
            f64::NAN
        } else {
            self.scores.iter().sum::<f64>() / self.scores.len() as f64
        }
    }
}

/// Uniform sample of `min(n, |clients|)` distinct clients, reported in
/// ascending id order.
pub fn select_random(clients: &[ClientState], n: usize, rng: &mut SimRng) -> Result<SelectionResult> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if clients.is_empty() {
        return Err(Error::invalid("cannot select from an empty client set"));
    }
    let k = n.min(clients.len());
    let mut picked: Vec<&ClientState> = index::sample(rng, clients.len(), k).into_iter().map(|i| &clients[i]).collect();
    picked.sort_by_key(|c| c.client_id);
    Ok(SelectionResult {
        round: 0,
        selected: picked.iter().map(|c| c.client_id).collect(),
        scores: picked.iter().map(|c| c.score(ScoreMode::PerExample)).collect(),
        effective_n: k,
    })
}

/// Greedy label-wise selection: repeatedly take the eligible client with the
/// largest score, ties to the lowest id, until `n` are chosen or none remain.
pub fn select_labelwise(clients: &[ClientState], n: usize, mode: ScoreMode) -> Result<SelectionResult> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let mut pool: Vec<(usize, f64)> = clients
        .iter()
        .filter(|c| c.eligible && c.label_variance != 0.0)
        .map(|c| (c.client_id, c.score(mode)))
        .collect();
    let mut selected = Vec::new();
    let mut scores = Vec::new();
    while selected.len() < n && !pool.is_empty() {
        let mut best = 0;
        for (i, &(id, s)) in pool.iter().enumerate() {
            let (bid, bs) = pool[best];
            if s > bs || (s == bs && id < bid) {
                best = i;
            }
        }
        let (id, s) = pool.swap_remove(best);
        selected.push(id);
        scores.push(s);
    }
    Ok(SelectionResult {
        round: 0,
        effective_n: selected.len(),
        selected,
        scores,
    })
}
