use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Gaussian blobs: one random mean per class in `[0.25, 0.75]^feature_dim`,
/// isotropic noise of standard deviation `spread`, clamped into `[0, 1]`.
///
/// Examples are grouped by class, `per_class` each.
pub fn synth_dataset(
    num_classes: usize,
    per_class: usize,
    feature_dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 || per_class == 0 || feature_dim == 0 {
        return Err(Error::invalid(
            "synth_dataset needs num_classes >= 2, per_class >= 1, feature_dim >= 1",
        ));
    }
    if !spread.is_finite() || spread < 0.0 {
        return Err(Error::invalid("spread must be finite and non-negative"));
    }
    let mut rng = rng::rng_for(seed, &[rng::STREAM_SYNTH]);
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..feature_dim).map(|_| rng.random_range(0.25..0.75)).collect())
        .collect();

    let n = num_classes * per_class;
    let mut flat = Vec::with_capacity(n * feature_dim);
    let mut labels = Vec::with_capacity(n);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for &m in mean {
                let noise: f64 = StandardNormal.sample(&mut rng);
                flat.push((m + spread * noise).clamp(0.0, 1.0));
            }
            labels.push(class);
        }
    }
    let features = Array2::from_shape_vec((n, feature_dim), flat).expect("shape is n x feature_dim");
    Dataset::new(features, labels, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_per_class() {
        let d = synth_dataset(10, 100, 16, 0.1, 1).unwrap();
        assert_eq!(d.len(), 1000);
        assert!(d.class_pools().iter().all(|p| p.len() == 100));
        assert_eq!(d.feature_dim(), 16);
    }

    #[test]
    fn deterministic_under_seed() {
        let a = synth_dataset(10, 100, 16, 0.1, 1).unwrap();
        let b = synth_dataset(10, 100, 16, 0.1, 1).unwrap();
        let bits = |d: &Dataset| d.features().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.labels(), b.labels());
        assert_ne!(bits(&a), bits(&synth_dataset(10, 100, 16, 0.1, 2).unwrap()));
    }

    #[test]
    fn zero_spread_collapses_to_means() {
        let d = synth_dataset(3, 5, 4, 0.0, 9).unwrap();
        for pool in d.class_pools() {
            let first = d.row(pool[0]).to_owned();
            assert!(pool.iter().all(|&i| d.row(i) == first));
        }
        assert_ne!(d.row(0), d.row(5));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(synth_dataset(1, 10, 4, 0.1, 0).is_err());
        assert!(synth_dataset(3, 0, 4, 0.1, 0).is_err());
        assert!(synth_dataset(3, 1, 0, 0.1, 0).is_err());
        assert!(synth_dataset(3, 1, 2, -1.0, 0).is_err());
    }
}
