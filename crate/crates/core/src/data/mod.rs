//! Datasets, ingestion and per-round client shards.

mod cifar;
mod idx;
mod partition;
mod synth;

use std::io::{BufRead, Write};
use std::sync::Arc;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;

pub use cifar::{load_cifar10_binary, CIFAR10_RECORD_LEN};
pub use idx::{encode_idx_images, encode_idx_labels, load_idx, load_idx_dir, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use partition::{CaseId, CaseSpec, PartitionPlan, Sampling};
pub use synth::synth_dataset;

use crate::error::{Error, Result};
use crate::labelstats::LabelMultiset;
use crate::rng;

/// One labeled example, owned.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// A pool of labeled examples stored row-major: one row of `features` per example.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.nrows() != labels.len() {
            return Err(Error::CountMismatch {
                images: features.nrows(),
                labels: labels.len(),
            });
        }
        if features.ncols() == 0 || num_classes == 0 {
            return Err(Error::invalid("feature_dim and num_classes must be positive"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        if features.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::invalid("features must be finite and within [0, 1]"));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn from_examples(examples: &[LabeledExample], num_classes: usize) -> Result<Self> {
        let first = examples.first().ok_or(Error::EmptyDataset)?;
        let dim = first.features.len();
        let mut flat = Vec::with_capacity(examples.len() * dim);
        for ex in examples {
            if ex.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: ex.features.len(),
                });
            }
            flat.extend_from_slice(&ex.features);
        }
        let features = Array2::from_shape_vec((examples.len(), dim), flat)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(features, examples.iter().map(|e| e.label).collect(), num_classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn example(&self, i: usize) -> LabeledExample {
        LabeledExample {
            features: self.features.row(i).to_vec(),
            label: self.labels[i],
        }
    }

    pub fn examples(&self) -> impl Iterator<Item = LabeledExample> + '_ {
        (0..self.len()).map(|i| self.example(i))
    }

    /// Indices of the examples of each class, in dataset order.
    pub fn class_pools(&self) -> Vec<Vec<usize>> {
        let mut pools = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            pools[l].push(i);
        }
        pools
    }

    /// Copies the rows at `indices` (repeats allowed) into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        })
    }

    /// Deterministic class-balanced subset of at most `limit` examples.
    ///
    /// Each class contributes `limit / num_classes` examples (capped by its pool),
    /// the remainder going to the lowest class ids that still have examples left.
    pub fn stratified_subset(&self, limit: usize, seed: u64) -> Result<Dataset> {
        if limit >= self.len() {
            return Ok(self.clone());
        }
        let mut rng = rng::rng_for(seed, &[rng::STREAM_SUBSET]);
        let mut pools = self.class_pools();
        for pool in &mut pools {
            pool.shuffle(&mut rng);
        }
        let base = limit / self.num_classes;
        let mut take: Vec<usize> = pools.iter().map(|p| p.len().min(base)).collect();
        let mut left = limit - take.iter().sum::<usize>();
        while left > 0 {
            let before = left;
            for (c, pool) in pools.iter().enumerate() {
                if left > 0 && take[c] < pool.len() {
                    take[c] += 1;
                    left -= 1;
                }
            }
            if before == left {
                break;
            }
        }
        let mut indices: Vec<usize> = pools
            .iter()
            .zip(&take)
            .flat_map(|(pool, &k)| pool[..k].iter().copied())
            .collect();
        indices.sort_unstable();
        self.subset(&indices)
    }

    /// Splits each class into its first `train_per_class` examples and the rest.
    pub fn split_per_class(&self, train_per_class: usize) -> Result<(Dataset, Dataset)> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for pool in self.class_pools() {
            let k = train_per_class.min(pool.len());
            train.extend_from_slice(&pool[..k]);
            test.extend_from_slice(&pool[k..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok((self.subset(&train)?, self.subset(&test)?))
    }

    /// Writes one example per row: `label,f1,f2,...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for (row, label) in self.features.outer_iter().zip(&self.labels) {
            write!(out, "{label}")?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, num_classes: usize) -> Result<Dataset> {
        let mut examples = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Csv { line: n + 1, msg };
            let mut fields = line.split(',');
            let label = fields
                .next()
                .unwrap_or_default()
                .trim()
                .parse::<usize>()
                .map_err(|e| bad(format!("label: {e}")))?;
            let features = fields
                .map(|f| f.trim().parse::<f64>().map_err(|e| bad(format!("feature: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            examples.push(LabeledExample { features, label });
        }
        Dataset::from_examples(&examples, num_classes)
    }
}

/// The shard a client holds at one global round.
///
/// Shards index into a shared pool rather than copying features.
#[derive(Debug, Clone)]
pub struct ClientDataset {
    pub client_id: usize,
    /// `None` for shards that stay fixed across every round.
    pub round: Option<usize>,
    pool: Arc<Dataset>,
    indices: Vec<usize>,
}

impl ClientDataset {
    pub fn new(
        client_id: usize,
        round: Option<usize>,
        pool: Arc<Dataset>,
        indices: Vec<usize>,
    ) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= pool.len()) {
            return Err(Error::invalid(format!("shard index {bad} out of range")));
        }
        Ok(Self {
            client_id,
            round,
            pool,
            indices,
        })
    }

    /// A shard holding every example of `pool`.
    pub fn whole(client_id: usize, pool: Arc<Dataset>) -> Self {
        let indices = (0..pool.len()).collect();
        Self {
            client_id,
            round: None,
            pool,
            indices,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn pool(&self) -> &Dataset {
        &self.pool
    }

    pub fn num_classes(&self) -> usize {
        self.pool.num_classes()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.indices.iter().map(|&i| self.pool.labels()[i]).collect()
    }

    pub fn examples(&self) -> impl Iterator<Item = LabeledExample> + '_ {
        self.indices.iter().map(|&i| self.pool.example(i))
    }

    /// Label multiset over the pool's full label universe.
    pub fn label_multiset(&self) -> LabelMultiset {
        LabelMultiset::new(self.labels(), (0..self.num_classes()).collect())
            .expect("shard labels lie inside the pool universe")
    }

    pub fn histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &i in &self.indices {
            counts[self.pool.labels()[i]] += 1;
        }
        counts
    }

    /// Features and labels of the examples at the given shard positions.
    pub fn gather(&self, positions: &[usize]) -> (Array2<f64>, Vec<usize>) {
        let rows: Vec<usize> = positions.iter().map(|&p| self.indices[p]).collect();
        let x = self.pool.features.select(Axis(0), &rows);
        let y = rows.iter().map(|&r| self.pool.labels()[r]).collect();
        (x, y)
    }

    pub fn to_dataset(&self) -> Dataset {
        self.pool
            .subset(&self.indices)
            .expect("shards are non-empty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> Dataset {
        Dataset::new(
            array![[0.0, 0.5], [1.0, 0.25], [0.5, 0.5], [0.75, 0.0]],
            vec![0, 1, 1, 2],
            3,
        )
        .unwrap()
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(Dataset::new(array![[1.5]], vec![0], 1).is_err());
        assert!(Dataset::new(array![[0.5]], vec![1], 1).is_err());
        assert!(matches!(
            Dataset::new(array![[0.5], [0.1]], vec![0], 1),
            Err(Error::CountMismatch { .. })
        ));
        assert!(matches!(
            Dataset::from_examples(&[], 2),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn class_pools_and_subset() {
        let d = tiny();
        assert_eq!(d.class_pools(), vec![vec![0], vec![1, 2], vec![3]]);
        let s = d.subset(&[3, 3, 0]).unwrap();
        assert_eq!(s.labels(), &[2, 2, 0]);
        assert_eq!(s.row(2).to_vec(), vec![0.0, 0.5]);
    }

    #[test]
    fn csv_round_trip() {
        let d = tiny();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(&buf[..], 3).unwrap();
        assert_eq!(back, d);
        assert!(matches!(
            Dataset::read_csv("1,0.5\nx,0.1\n".as_bytes(), 3),
            Err(Error::Csv { line: 2, .. })
        ));
    }

    #[test]
    fn stratified_subset_balances_classes() {
        let d = synth_dataset(4, 10, 3, 0.1, 3).unwrap();
        let s = d.stratified_subset(10, 1).unwrap();
        let mut counts = [0; 4];
        for &l in s.labels() {
            counts[l] += 1;
        }
        assert_eq!(counts, [3, 3, 2, 2]);
        assert_eq!(s, d.stratified_subset(10, 1).unwrap());
    }

    #[test]
    fn shard_views() {
        let pool = Arc::new(tiny());
        let shard = ClientDataset::new(4, Some(2), pool, vec![1, 2, 2]).unwrap();
        assert_eq!(shard.labels(), vec![1, 1, 1]);
        assert_eq!(shard.histogram(), vec![0, 3, 0]);
        let (x, y) = shard.gather(&[0, 2]);
        assert_eq!(y, vec![1, 1]);
        assert_eq!(x, array![[1.0, 0.25], [0.5, 0.5]]);
        assert_eq!(shard.examples().count(), 3);
    }
}
