//! Dataset loading and preprocessing.
//!
//! Features are z-scored column-wise over the full dataset (population
//! standard deviation) before the train/test split. Constant columns are
//! mapped to zero. The split puts `round(0.2·M)` rows in the test set after
//! a Fisher–Yates shuffle driven by the split seed.

use std::fs;
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::logistic::synthetic_logistic_data;

pub const WBC_FILE: &str = "breast-cancer-wisconsin.data";
pub const MNIST_IMAGES_FILE: &str = "train-images-idx3-ubyte";
pub const MNIST_LABELS_FILE: &str = "train-labels-idx1-ubyte";
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const TEST_FRACTION: f64 = 0.2;

const WBC_COLUMNS: usize = 11;

/// Per-feature statistics used for z-scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Normalized features, `M × d`.
    pub features: DMatrix<f64>,
    /// Binary labels in `{0, 1}`.
    pub labels: Vec<u8>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub normalization: Normalization,
    /// Rows dropped for missing values.
    pub dropped: usize,
}

impl Dataset {
    /// Normalizes `raw` and splits it with `split_seed`.
    pub fn from_raw(mut raw: DMatrix<f64>, labels: Vec<u8>, split_seed: u64) -> Result<Self> {
        if raw.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: raw.nrows(),
                got: labels.len(),
            });
        }
        if raw.nrows() < 2 {
            return Err(Error::Capacity {
                requested: 2,
                available: raw.nrows(),
            });
        }
        let normalization = zscore(&mut raw);
        let (train, test) = split_indices(labels.len(), split_seed);
        Ok(Self {
            features: raw,
            labels,
            train,
            test,
            normalization,
            dropped: 0,
        })
    }

    /// Logistic data drawn from known weights, for runs without the real files.
    pub fn synthetic_logistic(m: usize, weights: &[f64], seed: u64, split_seed: u64) -> Result<Self> {
        let (features, labels) = synthetic_logistic_data(m, weights, seed);
        Self::from_raw(features, labels, split_seed)
    }

    /// Two Gaussian classes in `inputs` dimensions whose means sit
    /// `separation` apart along a random unit direction. Labels alternate.
    pub fn synthetic_blobs(rows: usize, inputs: usize, separation: f64, seed: u64, split_seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dir: Vec<f64> = (0..inputs).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        dir.iter_mut().for_each(|v| *v /= norm);
        let labels: Vec<u8> = (0..rows).map(|i| (i % 2) as u8).collect();
        let mut raw = DMatrix::zeros(rows, inputs);
        for (i, &l) in labels.iter().enumerate() {
            let shift = (f64::from(l) - 0.5) * separation;
            for j in 0..inputs {
                let z: f64 = rng.sample(StandardNormal);
                raw[(i, j)] = z + shift * dir[j];
            }
        }
        Self::from_raw(raw, labels, split_seed)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn train_features(&self) -> DMatrix<f64> {
        self.features.select_rows(&self.train)
    }

    pub fn test_features(&self) -> DMatrix<f64> {
        self.features.select_rows(&self.test)
    }

    pub fn train_labels(&self) -> Vec<u8> {
        self.train.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn test_labels(&self) -> Vec<u8> {
        self.test.iter().map(|&i| self.labels[i]).collect()
    }
}

/// Z-scores each column in place with the population standard deviation.
pub fn zscore(features: &mut DMatrix<f64>) -> Normalization {
    let m = features.nrows() as f64;
    let mut mean = Vec::with_capacity(features.ncols());
    let mut std = Vec::with_capacity(features.ncols());
    for mut col in features.column_iter_mut() {
        let mu = col.iter().sum::<f64>() / m;
        let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / m;
        let sd = var.sqrt();
        if sd > 0.0 {
            col.apply(|v| *v = (*v - mu) / sd);
        } else {
            col.fill(0.0);
        }
        mean.push(mu);
        std.push(sd);
    }
    Normalization { mean, std }
}

/// Sorted `(train, test)` index lists with `round(0.2·m)` test rows.
pub fn split_indices(m: usize, split_seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_test = (TEST_FRACTION * m as f64).round() as usize;
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let mut test = perm[..n_test].to_vec();
    let mut train = perm[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

/// Parses the UCI breast-cancer file (id, 9 integer features, class 2/4).
/// Rows containing `?` are dropped. Benign (2) maps to 0, malignant (4) to 1.
pub fn load_wbc(path: &Path, split_seed: u64) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut dropped = 0;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != WBC_COLUMNS {
            return Err(Error::Format {
                path: path.into(),
                reason: format!(
                    "line {line_no}: expected {WBC_COLUMNS} columns, found {}",
                    fields.len()
                ),
            });
        }
        if fields.contains(&"?") {
            dropped += 1;
            continue;
        }
        for f in &fields[1..10] {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                path: path.into(),
                line: line_no,
                reason: format!("feature {f:?} is not a number"),
            })?;
            rows.push(v);
        }
        labels.push(match fields[10] {
            "2" => 0,
            "4" => 1,
            other => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: line_no,
                    reason: format!("class label {other:?} is not 2 or 4"),
                })
            }
        });
    }
    let raw = DMatrix::from_row_slice(labels.len(), 9, &rows);
    let mut ds = Dataset::from_raw(raw, labels, split_seed)?;
    ds.dropped = dropped;
    Ok(ds)
}

fn check_magic(path: &Path, got: u32, want: u32) -> Result<()> {
    if got != want {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("bad IDX magic number {got:#010x}, expected {want:#010x}"),
        });
    }
    Ok(())
}

/// Raw IDX image file: `(count, rows·cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let mut r = bytes.as_slice();
    let truncated = |_| Error::Format {
        path: path.into(),
        reason: "truncated IDX header".into(),
    };
    check_magic(path, r.read_u32::<BigEndian>().map_err(truncated)?, IDX_IMAGES_MAGIC)?;
    let n = r.read_u32::<BigEndian>().map_err(truncated)? as usize;
    let rows = r.read_u32::<BigEndian>().map_err(truncated)? as usize;
    let cols = r.read_u32::<BigEndian>().map_err(truncated)? as usize;
    let size = rows * cols;
    if r.len() != n * size {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("expected {} pixel bytes, found {}", n * size, r.len()),
        });
    }
    Ok((n, size, r.to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    let mut r = bytes.as_slice();
    let truncated = |_| Error::Format {
        path: path.into(),
        reason: "truncated IDX header".into(),
    };
    check_magic(path, r.read_u32::<BigEndian>().map_err(truncated)?, IDX_LABELS_MAGIC)?;
    let n = r.read_u32::<BigEndian>().map_err(truncated)? as usize;
    if r.len() != n {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("expected {n} labels, found {}", r.len()),
        });
    }
    Ok(r.to_vec())
}

/// Draws `count` rows uniformly without replacement among those labelled
/// `classes[0]` or `classes[1]`, recoding them to 0 and 1 respectively.
/// The subset and the split both derive from `seed`.
pub fn load_mnist_subset(
    images: &Path,
    labels: &Path,
    classes: [u8; 2],
    count: usize,
    seed: u64,
) -> Result<Dataset> {
    let (n, size, pixels) = read_idx_images(images)?;
    let all_labels = read_idx_labels(labels)?;
    if all_labels.len() != n {
        return Err(Error::Format {
            path: labels.into(),
            reason: format!("{} labels for {n} images", all_labels.len()),
        });
    }
    let eligible: Vec<usize> = (0..n).filter(|&i| classes.contains(&all_labels[i])).collect();
    if count > eligible.len() {
        return Err(Error::Capacity {
            requested: count,
            available: eligible.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut picked: Vec<usize> = sample(&mut rng, eligible.len(), count)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    picked.sort_unstable();
    let raw = DMatrix::from_fn(count, size, |r, c| pixels[picked[r] * size + c] as f64);
    let recoded = picked
        .iter()
        .map(|&i| u8::from(all_labels[i] == classes[1]))
        .collect();
    Dataset::from_raw(raw, recoded, seed)
}
