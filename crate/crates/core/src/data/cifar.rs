use std::io::Read;

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

const PIXELS: usize = 3072;
/// One label byte followed by 32x32x3 pixel bytes.
pub const CIFAR10_RECORD_LEN: usize = 1 + PIXELS;

/// Decodes concatenated CIFAR-10 binary records (`data_batch_*.bin` layout).
pub fn load_cifar10_binary<R: Read>(mut source: R) -> Result<Dataset> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if bytes.len() % CIFAR10_RECORD_LEN != 0 {
        return Err(Error::RecordLength {
            len: bytes.len(),
            record: CIFAR10_RECORD_LEN,
        });
    }
    let count = bytes.len() / CIFAR10_RECORD_LEN;
    let mut labels = Vec::with_capacity(count);
    let mut flat = Vec::with_capacity(count * PIXELS);
    for record in bytes.chunks_exact(CIFAR10_RECORD_LEN) {
        labels.push(record[0] as usize);
        flat.extend(record[1..].iter().map(|&p| f64::from(p) / 255.0));
    }
    let features =
        Array2::from_shape_vec((count, PIXELS), flat).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Dataset::new(features, labels, 10)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_record() {
        let mut rec = vec![5u8];
        rec.extend((0..PIXELS).map(|i| (i % 256) as u8));
        let d = load_cifar10_binary(&rec[..]).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.labels(), &[5]);
        assert_eq!(d.feature_dim(), 3072);
        assert_eq!(d.row(0)[255], 1.0);
        assert_eq!(d.row(0)[256], 0.0);
    }

    #[test]
    fn bad_lengths() {
        assert!(matches!(load_cifar10_binary(&[][..]), Err(Error::EmptyDataset)));
        let short = vec![0u8; PIXELS];
        let err = load_cifar10_binary(&short[..]).unwrap_err();
        assert!(err.to_string().contains("record length"), "{err}");
    }

    #[test]
    fn label_out_of_range() {
        let mut rec = vec![10u8];
        rec.extend(std::iter::repeat_n(0u8, PIXELS));
        assert!(load_cifar10_binary(&rec[..]).is_err());
    }
}
