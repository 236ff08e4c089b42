//! IDX reader (the MNIST container format). All header integers are big-endian.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    bytes: &'a [u8],
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self) -> Result<u32> {
        let head = self.take(4)?;
        Ok(u32::from_be_bytes([head[0], head[1], head[2], head[3]]))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::TruncatedStream(self.what));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let found = self.u32()?;
        if found != expected {
            return Err(Error::MagicMismatch { expected, found });
        }
        Ok(())
    }
}

/// Decodes an IDX image stream and its label stream. Pixels are scaled by 1/255.
pub fn load_idx<I: Read, L: Read>(mut images: I, mut labels: L) -> Result<Dataset> {
    let mut image_bytes = Vec::new();
    images.read_to_end(&mut image_bytes)?;
    let mut label_bytes = Vec::new();
    labels.read_to_end(&mut label_bytes)?;

    let mut img = Cursor {
        bytes: &image_bytes,
        what: "image stream",
    };
    img.magic(IDX_IMAGES_MAGIC)?;
    let count = img.u32()? as usize;
    let rows = img.u32()? as usize;
    let cols = img.u32()? as usize;
    let pixels = img.take(count * rows * cols)?;

    let mut lab = Cursor {
        bytes: &label_bytes,
        what: "label stream",
    };
    lab.magic(IDX_LABELS_MAGIC)?;
    let label_count = lab.u32()? as usize;
    let raw_labels = lab.take(label_count)?;

    if count != label_count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_count,
        });
    }
    if count == 0 {
        return Err(Error::EmptyDataset);
    }

    let features = Array2::from_shape_vec(
        (count, rows * cols),
        pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
    )
    .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(features, labels, num_classes)
}

/// Loads `{prefix}-images-idx3-ubyte` and `{prefix}-labels-idx1-ubyte` from `dir`.
pub fn load_idx_dir(dir: &Path, prefix: &str) -> Result<Dataset> {
    let open = |name: String| -> Result<BufReader<File>> { Ok(BufReader::new(File::open(dir.join(name))?)) };
    load_idx(
        open(format!("{prefix}-images-idx3-ubyte"))?,
        open(format!("{prefix}-labels-idx1-ubyte"))?,
    )
}

pub fn encode_idx_images(pixels: &[u8], count: usize, rows: usize, cols: usize) -> Vec<u8> {
    assert_eq!(pixels.len(), count * rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for word in [IDX_IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
