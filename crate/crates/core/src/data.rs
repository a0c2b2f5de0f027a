//! Datasets, synthetic generators, IDX ingestion and the IID / EqNIID /
//! UEqNIID partition schemes.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::scalar::Scalar;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad IDX magic {found:#010x} in {path}, expected {expected:#010x}")]
    BadMagic { path: String, expected: u32, found: u32 },
    #[error("truncated IDX file {path}: need {needed} bytes, have {have}")]
    Truncated { path: String, needed: usize, have: usize },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("insufficient samples: {0}")]
    Insufficient(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("partition scheme needs class labels")]
    NotClassification,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets<S> {
    Real(Vec<S>),
    Class { labels: Vec<usize>, num_classes: usize },
}

/// Row-major feature matrix with one target per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<S> {
    features: Vec<S>,
    dim: usize,
    targets: Targets<S>,
}

impl<S: Scalar> Dataset<S> {
    pub fn regression(features: Vec<S>, dim: usize, targets: Vec<S>) -> Result<Self, DataError> {
        Self::new(features, dim, Targets::Real(targets))
    }

    pub fn classification(
        features: Vec<S>,
        dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self, DataError> {
        Self::new(features, dim, Targets::Class { labels, num_classes })
    }

    pub fn new(features: Vec<S>, dim: usize, targets: Targets<S>) -> Result<Self, DataError> {
        if dim == 0 {
            return Err(DataError::Invalid("feature dimension must be positive".into()));
        }
        let n = match &targets {
            Targets::Real(y) => y.len(),
            Targets::Class { labels, num_classes } => {
                if let Some(&label) = labels.iter().find(|&&l| l >= *num_classes) {
                    return Err(DataError::LabelOutOfRange { label, num_classes: *num_classes });
                }
                labels.len()
            }
        };
        if features.len() != n * dim {
            return Err(DataError::Invalid(format!(
                "{} feature values for {n} rows of dimension {dim}",
                features.len()
            )));
        }
        Ok(Self { features, dim, targets })
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn targets(&self) -> &Targets<S> {
        &self.targets
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Class { labels, .. } => Some(labels),
            Targets::Real(_) => None,
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self.targets {
            Targets::Class { num_classes, .. } => Some(num_classes),
            Targets::Real(_) => None,
        }
    }

    /// Rows `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        let targets = match &self.targets {
            Targets::Real(y) => Targets::Real(indices.iter().map(|&i| y[i]).collect()),
            Targets::Class { labels, num_classes } => Targets::Class {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
        };
        Self { features, dim: self.dim, targets }
    }

    /// Random disjoint split into (train, test) with `test_len` test rows.
    pub fn split<R: Rng + ?Sized>(&self, test_len: usize, rng: &mut R) -> Result<(Self, Self), DataError> {
        if test_len >= self.len() {
            return Err(DataError::Insufficient(format!(
                "cannot hold out {test_len} of {} samples",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        let (test, train) = idx.split_at(test_len);
        Ok((self.subset(train), self.subset(test)))
    }
}

/// How training data is spread over terminal holons.
#[derive(Clone, Debug, PartialEq)]
pub enum PartitionScheme {
    /// Uniform random shards whose sizes differ by at most one.
    Iid,
    /// Equal-size shards, each drawn from exactly `labels_per_holon` classes.
    EqNiid { labels_per_holon: usize, samples_per_holon: usize },
    /// Contiguous slices of the label-sorted data with the given sizes.
    UeqNiid { sizes: Vec<usize> },
}

/// Sizes growing linearly (1, 2, ..., n) scaled to sum to at most `total`.
pub fn linear_profile(total: usize, n: usize) -> Vec<usize> {
    let denom = n * (n + 1) / 2;
    let mut sizes: Vec<usize> = (1..=n).map(|i| total * i / denom).collect();
    let used: usize = sizes.iter().sum();
    if let Some(last) = sizes.last_mut() {
        *last += total - used;
    }
    sizes
}

/// Splits `data` into `n_holons` disjoint shards. Leftover samples are
/// discarded.
pub fn partition<S: Scalar, R: Rng + ?Sized>(
    data: &Dataset<S>,
    scheme: &PartitionScheme,
    n_holons: usize,
    rng: &mut R,
) -> Result<Vec<Dataset<S>>, DataError> {
    if n_holons == 0 {
        return Err(DataError::Invalid("need at least one holon".into()));
    }
    let shards: Vec<Vec<usize>> = match scheme {
        PartitionScheme::Iid => {
            if data.len() < n_holons {
                return Err(DataError::Insufficient(format!(
                    "{} samples for {n_holons} holons",
                    data.len()
                )));
            }
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(rng);
            let base = data.len() / n_holons;
            let extra = data.len() % n_holons;
            let mut start = 0;
            (0..n_holons)
                .map(|k| {
                    let len = base + usize::from(k < extra);
                    let shard = idx[start..start + len].to_vec();
                    start += len;
                    shard
                })
                .collect()
        }
        PartitionScheme::EqNiid { labels_per_holon, samples_per_holon } => {
            eq_niid(data, *labels_per_holon, *samples_per_holon, n_holons, rng)?
        }
        PartitionScheme::UeqNiid { sizes } => {
            if sizes.len() != n_holons {
                return Err(DataError::Invalid(format!(
                    "size profile has {} entries for {n_holons} holons",
                    sizes.len()
                )));
            }
            if sizes.contains(&0) {
                return Err(DataError::Invalid("size profile contains an empty shard".into()));
            }
            let labels = data.labels().ok_or(DataError::NotClassification)?;
            let need: usize = sizes.iter().sum();
            if need > data.len() {
                return Err(DataError::Insufficient(format!(
                    "profile needs {need} samples, have {}",
                    data.len()
                )));
            }
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(rng);
            idx.sort_by_key(|&i| labels[i]);
            let mut start = 0;
            sizes
                .iter()
                .map(|&len| {
                    let shard = idx[start..start + len].to_vec();
                    start += len;
                    shard
                })
                .collect()
        }
    };
    Ok(shards.iter().map(|s| data.subset(s)).collect())
}

fn eq_niid<S: Scalar, R: Rng + ?Sized>(
    data: &Dataset<S>,
    labels_per_holon: usize,
    samples_per_holon: usize,
    n_holons: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>, DataError> {
    let labels = data.labels().ok_or(DataError::NotClassification)?;
    let num_classes = data.num_classes().unwrap_or(0);
    let present: Vec<usize> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if labels_per_holon == 0 || labels_per_holon > present.len() {
        return Err(DataError::Insufficient(format!(
            "{labels_per_holon} labels per holon but {} classes present",
            present.len()
        )));
    }
    if samples_per_holon < labels_per_holon {
        return Err(DataError::Insufficient(format!(
            "{samples_per_holon} samples cannot cover {labels_per_holon} labels"
        )));
    }
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        pools[l].push(i);
    }
    for pool in &mut pools {
        pool.shuffle(rng);
    }
    // Labels dealt round-robin over the sorted label list.
    let mut cursor = 0;
    let mut shards = Vec::with_capacity(n_holons);
    for _ in 0..n_holons {
        let chosen: Vec<usize> = (0..labels_per_holon)
            .map(|j| present[(cursor + j) % present.len()])
            .collect();
        cursor = (cursor + labels_per_holon) % present.len();
        let base = samples_per_holon / labels_per_holon;
        let extra = samples_per_holon % labels_per_holon;
        let mut shard = Vec::with_capacity(samples_per_holon);
        for (j, &label) in chosen.iter().enumerate() {
            let take = base + usize::from(j < extra);
            let pool = &mut pools[label];
            if pool.len() < take {
                return Err(DataError::Insufficient(format!(
                    "class {label} has {} samples left, need {take}",
                    pool.len()
                )));
            }
            shard.extend(pool.drain(pool.len() - take..));
        }
        shards.push(shard);
    }
    Ok(shards)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    Regression,
    Classification,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub samples: usize,
    pub dim: usize,
    /// Noise standard deviation (regression targets or blob spread).
    pub noise: f64,
    pub num_classes: usize,
    /// Blob centers are drawn uniformly from `[-separation, separation]^dim`.
    pub separation: f64,
}

impl SyntheticSpec {
    pub fn regression(samples: usize, dim: usize, noise: f64) -> Self {
        Self { kind: SyntheticKind::Regression, samples, dim, noise, num_classes: 0, separation: 0.0 }
    }

    pub fn blobs(samples: usize, dim: usize, num_classes: usize, spread: f64, separation: f64) -> Self {
        Self { kind: SyntheticKind::Classification, samples, dim, noise: spread, num_classes, separation }
    }
}

/// Ground truth behind a synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub enum GroundTruth<S> {
    /// Regression weights followed by the bias.
    Linear(Vec<S>),
    /// Class centers, row-major `num_classes × dim`.
    Centers(Vec<S>),
}

pub fn synthetic_dataset<S: Scalar, R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    rng: &mut R,
) -> Result<(Dataset<S>, GroundTruth<S>), DataError> {
    if spec.samples == 0 || spec.dim == 0 {
        return Err(DataError::Invalid("samples and dim must be positive".into()));
    }
    let mut normal = || -> f64 { StandardNormal.sample(rng) };
    match spec.kind {
        SyntheticKind::Regression => {
            let truth: Vec<f64> = (0..=spec.dim).map(|_| normal()).collect();
            let mut features = Vec::with_capacity(spec.samples * spec.dim);
            let mut targets = Vec::with_capacity(spec.samples);
            for _ in 0..spec.samples {
                let x: Vec<f64> = (0..spec.dim).map(|_| normal()).collect();
                let mut y = truth[spec.dim];
                for (w, xi) in truth.iter().zip(&x) {
                    y += w * xi;
                }
                if spec.noise > 0.0 {
                    y += spec.noise * normal();
                }
                features.extend(x.into_iter().map(S::lit));
                targets.push(S::lit(y));
            }
            let ds = Dataset::regression(features, spec.dim, targets)?;
            Ok((ds, GroundTruth::Linear(truth.into_iter().map(S::lit).collect())))
        }
        SyntheticKind::Classification => {
            if spec.num_classes < 2 {
                return Err(DataError::Invalid("need at least two classes".into()));
            }
            let centers: Vec<f64> = (0..spec.num_classes * spec.dim)
                .map(|_| rng.random_range(-spec.separation..=spec.separation))
                .collect();
            let mut normal = || -> f64 { StandardNormal.sample(rng) };
            let mut features = Vec::with_capacity(spec.samples * spec.dim);
            let mut labels = Vec::with_capacity(spec.samples);
            for i in 0..spec.samples {
                let c = i % spec.num_classes;
                let center = &centers[c * spec.dim..(c + 1) * spec.dim];
                features.extend(center.iter().map(|m| S::lit(m + spec.noise * normal())));
                labels.push(c);
            }
            let ds = Dataset::classification(features, spec.dim, labels, spec.num_classes)?;
            Ok((ds, GroundTruth::Centers(centers.into_iter().map(S::lit).collect())))
        }
    }
}

fn read_u32(bytes: &[u8], at: usize, path: &str) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Truncated { path: path.to_string(), needed: at + 4, have: bytes.len() })
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })
}

/// Parses an IDX image/label pair held in memory. Pixels are scaled to
/// `[0, 1]`; labels must be digits `0..=9`.
pub fn parse_idx<S: Scalar>(images: &[u8], labels: &[u8]) -> Result<Dataset<S>, DataError> {
    const IMG: &str = "images";
    const LBL: &str = "labels";
    let magic = read_u32(images, 0, IMG)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::BadMagic { path: IMG.into(), expected: IDX_IMAGES_MAGIC, found: magic });
    }
    let n = read_u32(images, 4, IMG)? as usize;
    let rows = read_u32(images, 8, IMG)? as usize;
    let cols = read_u32(images, 12, IMG)? as usize;
    let dim = rows * cols;
    let needed = 16 + n * dim;
    if images.len() < needed {
        return Err(DataError::Truncated { path: IMG.into(), needed, have: images.len() });
    }

    let magic = read_u32(labels, 0, LBL)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::BadMagic { path: LBL.into(), expected: IDX_LABELS_MAGIC, found: magic });
    }
    let n_labels = read_u32(labels, 4, LBL)? as usize;
    if n_labels != n {
        return Err(DataError::CountMismatch { images: n, labels: n_labels });
    }
    let needed = 8 + n;
    if labels.len() < needed {
        return Err(DataError::Truncated { path: LBL.into(), needed, have: labels.len() });
    }

    let scale = S::lit(255.0);
    let features = images[16..16 + n * dim].iter().map(|&p| S::from_count(p as usize) / scale).collect();
    let labels = labels[8..8 + n].iter().map(|&l| l as usize).collect();
    Dataset::classification(features, dim.max(1), labels, 10)
}

/// Loads an IDX image/label file pair (the MNIST layout).
pub fn load_idx<S: Scalar>(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset<S>, DataError> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = read_file(ip)?;
    let labels = read_file(lp)?;
    parse_idx(&images, &labels).map_err(|e| match e {
        DataError::BadMagic { path, expected, found } => DataError::BadMagic {
            path: if path == "images" { ip.display().to_string() } else { lp.display().to_string() },
            expected,
            found,
        },
        DataError::Truncated { path, needed, have } => DataError::Truncated {
            path: if path == "images" { ip.display().to_string() } else { lp.display().to_string() },
            needed,
            have,
        },
        other => other,
    })
}
