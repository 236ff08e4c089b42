use serde::{Deserialize, Serialize};

use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::model::{backward, sgd_step, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Shard-size weighted mean.
    Weighted,
    /// Plain arithmetic mean.
    Unweighted,
}

fn check_sets(sets: &[&ModelParams]) -> Result<()> {
    let first = sets.first().ok_or_else(|| Error::invalid("nothing to aggregate"))?;
    for s in &sets[1..] {
        first.check_shape(s)?;
    }
    Ok(())
}

/// Element-wise mean, summed in the order given. Callers pass sets in
/// ascending client id order.
pub fn aggregate_unweighted(sets: &[&ModelParams]) -> Result<ModelParams> {
    check_sets(sets)?;
    let mut sum = sets[0].clone();
    for s in &sets[1..] {
        sum.scaled_add(1.0, s);
    }
    sum.scale(1.0 / sets.len() as f64);
    Ok(sum)
}

/// `Σ (n_i / Σn) · M_i`, summed in the order given.
pub fn aggregate_weighted(sets: &[&ModelParams], sizes: &[usize]) -> Result<ModelParams> {
    if sets.len() != sizes.len() {
        return Err(Error::LengthMismatch {
            left: sets.len(),
            right: sizes.len(),
        });
    }
    check_sets(sets)?;
    if sizes.contains(&0) {
        return Err(Error::invalid("aggregation sizes must be positive"));
    }
    let total: usize = sizes.iter().sum();
    let mut sum = sets[0].zeros_like();
    for (s, &n) in sets.iter().zip(sizes) {
        sum.scaled_add(n as f64 / total as f64, s);
    }
    Ok(sum)
}

/// One FedSGD round: every shard contributes its full-batch gradient at
/// `global`; the server takes one SGD step with the size-weighted mean.
pub fn fedsgd_round(global: &ModelParams, shards: &[&ClientDataset], lr: f64) -> Result<ModelParams> {
    if shards.is_empty() {
        return Err(Error::invalid("fedsgd needs at least one shard"));
    }
    let grads = shards
        .iter()
        .map(|shard| {
            let positions: Vec<usize> = (0..shard.len()).collect();
            let (x, y) = shard.gather(&positions);
            backward(global, x.view(), &y).map(|(_, g)| g)
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&ModelParams> = grads.iter().collect();
    let sizes: Vec<usize> = shards.iter().map(|s| s.len()).collect();
    let mean = aggregate_weighted(&refs, &sizes)?;
    sgd_step(global, &mean, lr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;
    use crate::model::{init_params, ArchitectureSpec};
    use std::sync::Arc;

    fn arch() -> ArchitectureSpec {
        ArchitectureSpec::new(vec![3, 4, 2])
    }

    fn filled(v: f64) -> ModelParams {
        let mut p = ModelParams::zeros(&arch()).unwrap();
        p.values_mut().for_each(|x| *x = v);
        p
    }

    #[test]
    fn unweighted_examples() {
        let out = aggregate_unweighted(&[&filled(0.0), &filled(2.0)]).unwrap();
        assert!(out.values().all(|v| v == 1.0));
        let p = init_params(&arch(), 4).unwrap();
        assert_eq!(aggregate_unweighted(&[&p]).unwrap(), p);
        let mean = aggregate_unweighted(&[&p, &p, &p]).unwrap();
        for (a, b) in mean.values().zip(p.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(aggregate_unweighted(&[]).is_err());
        let other = ModelParams::zeros(&ArchitectureSpec::new(vec![3, 5, 2])).unwrap();
        assert!(aggregate_unweighted(&[&p, &other]).is_err());
    }

    #[test]
    fn weighted_examples() {
        let out = aggregate_weighted(&[&filled(0.0), &filled(4.0)], &[1, 3]).unwrap();
        assert!(out.values().all(|v| v == 3.0));
        let p = init_params(&arch(), 4).unwrap();
        assert_eq!(aggregate_weighted(&[&p], &[17]).unwrap(), p);
        assert!(aggregate_weighted(&[&p], &[1, 2]).is_err());
        assert!(aggregate_weighted(&[&p], &[0]).is_err());

        let q = init_params(&arch(), 5).unwrap();
        let r = init_params(&arch(), 6).unwrap();
        let w = aggregate_weighted(&[&p, &q, &r], &[7, 7, 7]).unwrap();
        let u = aggregate_unweighted(&[&p, &q, &r]).unwrap();
        for (a, b) in w.values().zip(u.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fedsgd_single_client_is_full_batch_step() {
        let data = Arc::new(synth_dataset(2, 10, 3, 0.1, 2).unwrap());
        let shard = ClientDataset::whole(0, Arc::clone(&data));
        let p = init_params(&arch(), 1).unwrap();
        let (_, g) = backward(&p, data.features(), data.labels()).unwrap();
        let expected = sgd_step(&p, &g, 0.1).unwrap();
        let got = fedsgd_round(&p, &[&shard], 0.1).unwrap();
        for (a, b) in got.values().zip(expected.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(fedsgd_round(&p, &[&shard], 0.0).unwrap(), p);
        assert!(fedsgd_round(&p, &[], 0.1).is_err());
    }

    #[test]
    fn fedsgd_opposing_gradients_cancel() {
        // At zero params only the output bias has a gradient: (-1/2, 1/2) for a
        // class-0 example and its negation for a class-1 example.
        let data = Arc::new(synth_dataset(2, 1, 3, 0.1, 2).unwrap());
        let a = ClientDataset::new(0, None, Arc::clone(&data), vec![0]).unwrap();
        let b = ClientDataset::new(1, None, Arc::clone(&data), vec![1]).unwrap();
        let p = ModelParams::zeros(&arch()).unwrap();
        assert_ne!(fedsgd_round(&p, &[&a], 0.5).unwrap(), p);
        assert_eq!(fedsgd_round(&p, &[&a, &b], 0.5).unwrap(), p);
    }
}
