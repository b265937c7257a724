use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, RngState};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Contents of an IDX file.
#[derive(Clone, Debug, PartialEq)]
pub enum IdxData {
    /// Rank-3 image file flattened row-major to `N × (rows·cols)`, pixels
    /// divided by 255.
    Images(DenseMatrix),
    Labels(Vec<usize>),
}

pub fn load_idx(path: &Path) -> Result<IdxData> {
    parse_idx(&fs::read(path)?, path)
}

pub fn load_idx_images(path: &Path) -> Result<DenseMatrix> {
    match load_idx(path)? {
        IdxData::Images(m) => Ok(m),
        IdxData::Labels(_) => Err(format_error(path, 0, "expected an image file, found labels")),
    }
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<usize>> {
    match load_idx(path)? {
        IdxData::Labels(l) => Ok(l),
        IdxData::Images(_) => Err(format_error(path, 0, "expected a label file, found images")),
    }
}

fn format_error(path: &Path, offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

pub fn parse_idx(bytes: &[u8], path: &Path) -> Result<IdxData> {
    let be32 = |off: usize| -> Result<u32> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
            .ok_or_else(|| format_error(path, off as u64, "truncated header"))
    };
    let magic = be32(0)?;
    let dims: Vec<usize> = match magic {
        IDX_IMAGES_MAGIC => vec![be32(4)? as usize, be32(8)? as usize, be32(12)? as usize],
        IDX_LABELS_MAGIC => vec![be32(4)? as usize],
        other => {
            return Err(format_error(path, 0, format!("unsupported IDX magic 0x{other:08x}")));
        }
    };
    let header = 4 + 4 * dims.len();
    let payload_len = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let payload = payload_len
        .and_then(|n| bytes.get(header..header.checked_add(n)?))
        .ok_or_else(|| {
            format_error(
                path,
                bytes.len() as u64,
                format!("truncated payload: dimensions {dims:?} need more than {} bytes", bytes.len()),
            )
        })?;
    if bytes.len() != header + payload.len() {
        return Err(format_error(path, (header + payload.len()) as u64, "trailing bytes after payload"));
    }
    Ok(match magic {
        IDX_IMAGES_MAGIC => IdxData::Images(DenseMatrix::from_vec(
            dims[0],
            dims[1] * dims[2],
            payload.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )?),
        _ => IdxData::Labels(payload.iter().map(|&b| usize::from(b)).collect()),
    })
}

/// Threshold at 0.5: pixels strictly above become 1, the rest 0.
pub fn binarize(x: &DenseMatrix) -> DenseMatrix {
    x.map(|v| if v > 0.5 { 1.0 } else { 0.0 })
}

/// Images with optional labels and a per-row visibility mask for
/// semi-supervised training.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub images: DenseMatrix,
    pub labels: Option<Vec<usize>>,
    pub label_mask: Vec<bool>,
}

impl DatasetSplit {
    pub fn new(images: DenseMatrix, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != images.rows() {
                return Err(Error::Dimension(format!(
                    "{} labels for {} images",
                    l.len(),
                    images.rows()
                )));
            }
        }
        let label_mask = vec![labels.is_some(); images.rows()];
        Ok(Self { images, labels, label_mask })
    }

    pub fn len(&self) -> usize {
        self.images.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Label of row `i` if it is visible.
    pub fn visible_label(&self, i: usize) -> Option<usize> {
        match &self.labels {
            Some(l) if self.label_mask[i] => Some(l[i]),
            _ => None,
        }
    }

    pub fn visible_count(&self) -> usize {
        self.label_mask.iter().filter(|&&m| m).count()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            images: self.images.select_rows(rows),
            labels: self.labels.as_ref().map(|l| rows.iter().map(|&i| l[i]).collect()),
            label_mask: rows.iter().map(|&i| self.label_mask[i]).collect(),
        }
    }
}

/// Train, validation and test partitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: DatasetSplit,
    pub valid: DatasetSplit,
    pub test: DatasetSplit,
}

/// Seeded random partition of the pool into disjoint train/valid/test sets.
/// Classes are not balanced.
pub fn make_splits(
    images: &DenseMatrix,
    labels: Option<&[usize]>,
    sizes: (usize, usize, usize),
    rng: &mut RngState,
) -> Result<Splits> {
    let (tr, va, te) = sizes;
    let total = tr.checked_add(va).and_then(|s| s.checked_add(te));
    if total.is_none_or(|t| t > images.rows()) {
        return Err(Error::Config(format!(
            "split sizes {sizes:?} exceed the {} available rows",
            images.rows()
        )));
    }
    let all = DatasetSplit::new(images.clone(), labels.map(<[usize]>::to_vec))?;
    let order = rng.permutation(images.rows());
    Ok(Splits {
        train: all.select(&order[..tr]),
        valid: all.select(&order[tr..tr + va]),
        test: all.select(&order[tr + va..tr + va + te]),
    })
}

/// Keeps labels visible on a uniformly random `⌊keep_fraction · N⌋` rows.
pub fn remove_labels(split: &DatasetSplit, keep_fraction: f64, rng: &mut RngState) -> Result<DatasetSplit> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Config(format!("keep_fraction must lie in (0, 1], got {keep_fraction}")));
    }
    if split.labels.is_none() {
        return Err(Error::Config("cannot remove labels from an unlabeled split".into()));
    }
    let n = split.len();
    let keep = (keep_fraction * n as f64).floor() as usize;
    let mut out = split.clone();
    out.label_mask = vec![false; n];
    for &i in &rng.permutation(n)[..keep] {
        out.label_mask[i] = true;
    }
    Ok(out)
}
