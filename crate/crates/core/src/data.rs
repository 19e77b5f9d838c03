//! Dataset ingestion and evaluation-split construction.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Sample, Split};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic number at byte 0: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated IDX data: needed {needed} bytes at offset {offset}, only {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("{extra} unexpected trailing bytes after offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{0}")]
    Usage(String),
}

/// Raw contents of an IDX image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        if self.rows * self.cols == 0 {
            0
        } else {
            self.pixels.len() / (self.rows * self.cols)
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let available = self.bytes.len() - self.offset;
        if n > available {
            return Err(DataError::Truncated {
                offset: self.offset,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<(), DataError> {
        let found = self.u32()?;
        if found != expected {
            return Err(DataError::BadMagic { expected, found });
        }
        Ok(())
    }

    fn finish(&self) -> Result<(), DataError> {
        if self.offset != self.bytes.len() {
            return Err(DataError::TrailingBytes {
                offset: self.offset,
                extra: self.bytes.len() - self.offset,
            });
        }
        Ok(())
    }
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages, DataError> {
    let mut cur = Cursor { bytes, offset: 0 };
    cur.magic(IDX_IMAGES_MAGIC)?;
    let count = cur.u32()? as usize;
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let pixels = cur.take(count * rows * cols)?.to_vec();
    cur.finish()?;
    Ok(IdxImages { rows, cols, pixels })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    let mut cur = Cursor { bytes, offset: 0 };
    cur.magic(IDX_LABELS_MAGIC)?;
    let count = cur.u32()? as usize;
    let labels = cur.take(count)?.to_vec();
    cur.finish()?;
    Ok(labels)
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend(IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend((images.count() as u32).to_be_bytes());
    out.extend((images.rows as u32).to_be_bytes());
    out.extend((images.cols as u32).to_be_bytes());
    out.extend(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend(IDX_LABELS_MAGIC.to_be_bytes());
    out.extend((labels.len() as u32).to_be_bytes());
    out.extend(labels);
    out
}

/// Quantizes samples back to bytes (`round(255 · p)`).
pub fn samples_to_idx(samples: &[Sample]) -> (IdxImages, Vec<u8>) {
    let (rows, cols) = samples.first().map_or((0, 0), |s| (s.height, s.width));
    let pixels = samples
        .iter()
        .flat_map(|s| s.pixels.iter().map(|p| (p * 255.0).round() as u8))
        .collect();
    let labels = samples.iter().map(|s| s.label as u8).collect();
    (IdxImages { rows, cols, pixels }, labels)
}

/// Pairs parsed images with labels, scaling bytes to `[0, 1]`.
pub fn samples_from_idx(
    images: &IdxImages,
    labels: &[u8],
    split: Split,
) -> Result<Vec<Sample>, DataError> {
    if images.count() != labels.len() {
        return Err(DataError::CountMismatch {
            images: images.count(),
            labels: labels.len(),
        });
    }
    let d = images.rows * images.cols;
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, &label)| Sample {
            pixels: images.pixels[i * d..(i + 1) * d]
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect(),
            height: images.rows,
            width: images.cols,
            label: label as usize,
            split,
        })
        .collect())
}

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Loads one split from an image file and its label file.
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    split: Split,
) -> Result<Vec<Sample>, DataError> {
    let images = parse_idx_images(&read(images_path)?)?;
    let labels = parse_idx_labels(&read(labels_path)?)?;
    samples_from_idx(&images, &labels, split)
}

/// Train and test splits of a labeled image dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub class_count: usize,
}

impl LabeledDataset {
    /// Reads the four standard MNIST-layout files from `dir`.
    pub fn load_mnist_dir(dir: &Path, name: &str) -> Result<Self, DataError> {
        let train = load_idx(
            &dir.join("train-images-idx3-ubyte"),
            &dir.join("train-labels-idx1-ubyte"),
            Split::Train,
        )?;
        let test = load_idx(
            &dir.join("t10k-images-idx3-ubyte"),
            &dir.join("t10k-labels-idx1-ubyte"),
            Split::Test,
        )?;
        let class_count = train
            .iter()
            .chain(&test)
            .map(|s| s.label + 1)
            .max()
            .unwrap_or(1);
        Ok(LabeledDataset {
            name: name.to_owned(),
            train,
            test,
            class_count,
        })
    }

    /// Average-pools every image by `factor` in both axes.
    pub fn downscaled(&self, factor: usize) -> Result<Self, DataError> {
        let pool = |s: &Sample| downscale(s, factor);
        Ok(LabeledDataset {
            name: self.name.clone(),
            train: self.train.iter().map(pool).collect::<Result<_, _>>()?,
            test: self.test.iter().map(pool).collect::<Result<_, _>>()?,
            class_count: self.class_count,
        })
    }

    pub fn class_counts(&self, split: Split) -> Vec<usize> {
        let samples = match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        };
        let mut counts = vec![0; self.class_count];
        for s in samples {
            counts[s.label] += 1;
        }
        counts
    }
}

pub fn downscale(s: &Sample, factor: usize) -> Result<Sample, DataError> {
    if factor == 0 || s.height % factor != 0 || s.width % factor != 0 {
        return Err(DataError::Usage(format!(
            "cannot pool a {}x{} image by {factor}",
            s.height, s.width
        )));
    }
    let (h, w) = (s.height / factor, s.width / factor);
    let norm = (factor * factor) as f64;
    let mut pixels = vec![0.0; h * w];
    for r in 0..s.height {
        for c in 0..s.width {
            pixels[(r / factor) * w + c / factor] += s.pixels[r * s.width + c];
        }
    }
    for p in &mut pixels {
        *p = (*p / norm).clamp(0.0, 1.0);
    }
    Ok(Sample {
        pixels,
        height: h,
        width: w,
        label: s.label,
        split: s.split,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Merge splits, train on 80 % of the normals, build a test set whose
    /// normal fraction is `tau`.
    P1,
    /// Original splits; train on the normal training samples, test on
    /// the full test split.
    P2,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::P1 => "p1",
            Protocol::P2 => "p2",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSplit {
    pub protocol: Protocol,
    pub normal_classes: BTreeSet<usize>,
    pub tau: Option<f64>,
    pub train_normals: Vec<Sample>,
    pub test_samples: Vec<Sample>,
    pub test_is_anomalous: Vec<bool>,
}

impl ProtocolSplit {
    pub fn test_normals(&self) -> impl Iterator<Item = &Sample> {
        self.test_samples
            .iter()
            .zip(&self.test_is_anomalous)
            .filter(|(_, &a)| !a)
            .map(|(s, _)| s)
    }

    pub fn test_anomalies(&self) -> impl Iterator<Item = &Sample> {
        self.test_samples
            .iter()
            .zip(&self.test_is_anomalous)
            .filter(|(_, &a)| a)
            .map(|(s, _)| s)
    }
}

fn check_classes(ds: &LabeledDataset, normal: &BTreeSet<usize>) -> Result<(), DataError> {
    if normal.is_empty() {
        return Err(DataError::Usage("at least one normal class is required".into()));
    }
    if let Some(c) = normal.iter().find(|&&c| c >= ds.class_count) {
        return Err(DataError::Usage(format!(
            "normal class {c} out of range for {} classes",
            ds.class_count
        )));
    }
    Ok(())
}

pub fn make_protocol2(
    ds: &LabeledDataset,
    normal_classes: &BTreeSet<usize>,
) -> Result<ProtocolSplit, DataError> {
    check_classes(ds, normal_classes)?;
    let train_normals: Vec<Sample> = ds
        .train
        .iter()
        .filter(|s| normal_classes.contains(&s.label))
        .cloned()
        .collect();
    if train_normals.is_empty() {
        return Err(DataError::Usage(format!(
            "no training samples of classes {normal_classes:?}"
        )));
    }
    let test_is_anomalous = ds
        .test
        .iter()
        .map(|s| !normal_classes.contains(&s.label))
        .collect();
    Ok(ProtocolSplit {
        protocol: Protocol::P2,
        normal_classes: normal_classes.clone(),
        tau: None,
        train_normals,
        test_samples: ds.test.clone(),
        test_is_anomalous,
    })
}

/// Number of anomalies so that normals make up `tau` of the test set.
pub fn anomaly_count_for(normal_test: usize, tau: f64) -> usize {
    (normal_test as f64 * (1.0 - tau) / tau).round() as usize
}

pub fn make_protocol1<R: Rng + ?Sized>(
    ds: &LabeledDataset,
    normal_classes: &BTreeSet<usize>,
    tau: f64,
    rng: &mut R,
) -> Result<ProtocolSplit, DataError> {
    check_classes(ds, normal_classes)?;
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(DataError::Usage(format!("tau must lie in (0, 1], got {tau}")));
    }
    let mut merged: Vec<&Sample> = ds.train.iter().chain(&ds.test).collect();
    merged.shuffle(rng);
    let (normals, anomalies): (Vec<&Sample>, Vec<&Sample>) = merged
        .into_iter()
        .partition(|s| normal_classes.contains(&s.label));
    let n_train = normals.len() * 4 / 5;
    if n_train == 0 {
        return Err(DataError::Usage(format!(
            "no samples of classes {normal_classes:?}"
        )));
    }
    let normal_test = &normals[n_train..];
    let n_anom = anomaly_count_for(normal_test.len(), tau);
    if n_anom > anomalies.len() {
        return Err(DataError::Usage(format!(
            "tau = {tau} needs {n_anom} anomalies but only {} are available",
            anomalies.len()
        )));
    }
    let mut test: Vec<(Sample, bool)> = normal_test
        .iter()
        .map(|s| ((*s).clone(), false))
        .chain(anomalies[..n_anom].iter().map(|s| ((*s).clone(), true)))
        .collect();
    test.shuffle(rng);
    let (test_samples, test_is_anomalous) = test.into_iter().unzip();
    Ok(ProtocolSplit {
        protocol: Protocol::P1,
        normal_classes: normal_classes.clone(),
        tau: Some(tau),
        train_normals: normals[..n_train].iter().map(|s| (*s).clone()).collect(),
        test_samples,
        test_is_anomalous,
    })
}

pub const BAR_INTENSITY: f64 = 0.9;
pub const BAR_NOISE: f64 = 0.1;

/// One image: a bright bar on a dark background plus `Uniform[0, 0.1]`
/// noise everywhere. Class 0 bars are horizontal, class 1 vertical.
pub fn bar_image<R: Rng + ?Sized>(side: usize, horizontal: bool, position: usize, rng: &mut R) -> Vec<f64> {
    let mut px = vec![0.0; side * side];
    for i in 0..side {
        let idx = if horizontal {
            position * side + i
        } else {
            i * side + position
        };
        px[idx] = BAR_INTENSITY;
    }
    for p in &mut px {
        *p = (*p + BAR_NOISE * rng.random::<f64>()).min(1.0);
    }
    px
}

/// Two-class synthetic dataset; each split holds `count_per_class`
/// samples of each class.
pub fn make_synthetic_bars<R: Rng + ?Sized>(
    count_per_class: usize,
    side: usize,
    rng: &mut R,
) -> Result<LabeledDataset, DataError> {
    if side < 4 {
        return Err(DataError::Usage(format!("bar images need side >= 4, got {side}")));
    }
    let split = |which: Split, rng: &mut R| -> Vec<Sample> {
        let mut out = Vec::with_capacity(2 * count_per_class);
        for _ in 0..count_per_class {
            for label in 0..2 {
                let pos = rng.random_range(0..side);
                out.push(Sample {
                    pixels: bar_image(side, label == 0, pos, rng),
                    height: side,
                    width: side,
                    label,
                    split: which,
                });
            }
        }
        out
    };
    let train = split(Split::Train, rng);
    let test = split(Split::Test, rng);
    Ok(LabeledDataset {
        name: "bars".into(),
        train,
        test,
        class_count: 2,
    })
}
