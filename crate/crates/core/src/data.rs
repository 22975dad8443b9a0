//! Datasets: synthetic generators, CSV ingestion, normalization and splits.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Targets {
    Labels { classes: usize, labels: Vec<usize> },
    Values { dim: usize, values: Vec<Vec<f64>> },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Labels { labels, .. } => labels.len(),
            Targets::Values { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormScheme {
    #[default]
    None,
    Zscore,
    Minmax,
}

/// Per-feature affine map `x ↦ (x − shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scheme: NormScheme,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            scheme: NormScheme::None,
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((v, s), c) in x.iter_mut().zip(&self.shift).zip(&self.scale) {
            *v = (*v - s) / c;
        }
    }

    pub fn invert(&self, x: &mut [f64]) {
        for ((v, s), c) in x.iter_mut().zip(&self.shift).zip(&self.scale) {
            *v = *v * c + s;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    pub targets: Targets,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub normalization: Normalization,
    /// Generating weights, when the data came from [`gen_linear_reg`].
    pub w_star: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, targets: Targets) -> Result<Self> {
        if dim == 0 || !features.len().is_multiple_of(dim) {
            return Err(Error::config(format!(
                "{} feature values do not form rows of width {dim}",
                features.len()
            )));
        }
        let n = features.len() / dim;
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if targets.len() != n {
            return Err(Error::config(format!(
                "{} targets for {n} feature rows",
                targets.len()
            )));
        }
        if let Targets::Labels { classes, labels } = &targets {
            if let Some(bad) = labels.iter().find(|&&l| l >= *classes) {
                return Err(Error::config(format!("label {bad} outside 0..{classes}")));
            }
        }
        Ok(Self {
            features,
            dim,
            targets,
            train: (0..n).collect(),
            test: Vec::new(),
            normalization: Normalization::identity(dim),
            w_star: None,
        })
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

    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        match &self.targets {
            Targets::Labels { labels, .. } => labels[i],
            Targets::Values { .. } => panic!("regression dataset has no labels"),
        }
    }

    pub fn value(&self, i: usize) -> &[f64] {
        match &self.targets {
            Targets::Values { values, .. } => &values[i],
            Targets::Labels { .. } => panic!("classification dataset has no real targets"),
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match &self.targets {
            Targets::Labels { classes, .. } => Some(*classes),
            Targets::Values { .. } => None,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self.targets, Targets::Labels { .. })
    }

    /// Seeded shuffle split; the first `train_fraction` of the permutation is train.
    pub fn split(&mut self, train_fraction: f64, seed: u64) -> Result<()> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::config("train fraction must lie in [0, 1]"));
        }
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((n as f64) * train_fraction).round() as usize;
        let mut train = idx[..n_train].to_vec();
        let mut test = idx[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        self.train = train;
        self.test = test;
        Ok(())
    }

    /// Fits `scheme` on the train split and applies it to every row.
    pub fn normalize(&mut self, scheme: NormScheme) {
        let d = self.dim;
        let rows: Vec<usize> = if self.train.is_empty() {
            (0..self.len()).collect()
        } else {
            self.train.clone()
        };
        let mut norm = Normalization::identity(d);
        norm.scheme = scheme;
        match scheme {
            NormScheme::None => {}
            NormScheme::Zscore => {
                let n = rows.len() as f64;
                for k in 0..d {
                    let mean = rows.iter().map(|&i| self.x(i)[k]).sum::<f64>() / n;
                    let var = rows
                        .iter()
                        .map(|&i| (self.x(i)[k] - mean).powi(2))
                        .sum::<f64>()
                        / n;
                    norm.shift[k] = mean;
                    norm.scale[k] = if var > 0.0 { var.sqrt() } else { 1.0 };
                }
            }
            NormScheme::Minmax => {
                for k in 0..d {
                    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                        let v = self.x(i)[k];
                        (lo.min(v), hi.max(v))
                    });
                    norm.shift[k] = lo;
                    norm.scale[k] = if hi > lo { hi - lo } else { 1.0 };
                }
            }
        }
        for row in self.features.chunks_mut(d) {
            norm.apply(row);
        }
        self.normalization = norm;
    }

    /// Features mapped back through the stored normalization.
    pub fn raw_x(&self, i: usize) -> Vec<f64> {
        let mut x = self.x(i).to_vec();
        self.normalization.invert(&mut x);
        x
    }

    /// Subset view with the given example ids (train = all of them).
    pub fn subset(&self, ids: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(ids.len() * self.dim);
        for &i in ids {
            features.extend_from_slice(self.x(i));
        }
        let targets = match &self.targets {
            Targets::Labels { classes, labels } => Targets::Labels {
                classes: *classes,
                labels: ids.iter().map(|&i| labels[i]).collect(),
            },
            Targets::Values { dim, values } => Targets::Values {
                dim: *dim,
                values: ids.iter().map(|&i| values[i].clone()).collect(),
            },
        };
        Dataset {
            features,
            dim: self.dim,
            targets,
            train: (0..ids.len()).collect(),
            test: Vec::new(),
            normalization: self.normalization.clone(),
            w_star: self.w_star.clone(),
        }
    }
}

/// `k` Gaussian clusters with unit covariance. Adjacent centres are
/// `separation` apart (on a circle in the first two coordinates for `d ≥ 2`,
/// on a line for `d = 1`). Labels are balanced.
pub fn gen_blobs(k: usize, d: usize, n: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if k < 2 || d == 0 {
        return Err(Error::config("gen_blobs needs k >= 2 and d >= 1"));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let mut v = vec![0.0; d];
            if d == 1 {
                v[0] = c as f64 * separation;
            } else {
                let radius = separation / (2.0 * (std::f64::consts::PI / k as f64).sin());
                let angle = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
                v[0] = radius * angle.cos();
                v[1] = radius * angle.sin();
            }
            v
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut rng);
    let mut features = Vec::with_capacity(n * d);
    for &l in &labels {
        for c in &centers[l] {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push(c + z);
        }
    }
    let mut ds = Dataset::new(features, d, Targets::Labels { classes: k, labels })?;
    ds.split(DEFAULT_TRAIN_FRACTION, seed)?;
    Ok(ds)
}

/// `t = ⟨w*, x⟩ + ε` with `x ~ U[-1, 1]^d`, `w* ~ N(0, I)`, `ε ~ N(0, σ²)`.
pub fn gen_linear_reg(d: usize, n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    if d == 0 {
        return Err(Error::config("gen_linear_reg needs d >= 1"));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if noise_sigma < 0.0 {
        return Err(Error::config("noise_sigma must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let noise = Normal::new(0.0, noise_sigma).expect("sigma >= 0");
    let mut features = Vec::with_capacity(n * d);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + noise.sample(&mut rng);
        features.extend_from_slice(&x);
        values.push(vec![t]);
    }
    let mut ds = Dataset::new(features, d, Targets::Values { dim: 1, values })?;
    ds.w_star = Some(w);
    ds.split(DEFAULT_TRAIN_FRACTION, seed)?;
    Ok(ds)
}

/// One-dimensional `t = x + σ(x)·ε` on `x ~ U[-1, 1]`, with `σ = noise_high`
/// for `x ≥ threshold` and `noise_low` below it. A mean predictor is accurate
/// on the left piece only.
pub fn gen_piecewise_reg(n: usize, noise_low: f64, noise_high: f64, threshold: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(noise_low >= 0.0 && noise_high >= 0.0) {
        return Err(Error::config("noise scales must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-1.0..1.0);
        let z: f64 = StandardNormal.sample(&mut rng);
        let sigma = if x >= threshold { noise_high } else { noise_low };
        features.push(x);
        values.push(vec![x + sigma * z]);
    }
    let mut ds = Dataset::new(features, 1, Targets::Values { dim: 1, values })?;
    ds.w_star = Some(vec![1.0]);
    ds.split(DEFAULT_TRAIN_FRACTION, seed)?;
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub target_column: String,
    pub normalize: NormScheme,
    pub task: TaskKind,
    pub train_fraction: f64,
    pub seed: u64,
}

/// Reads a rectangular numeric CSV with a header row. Normalization
/// statistics come from the train split only.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, opts)
}

pub fn read_csv<R: std::io::Read>(reader: R, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let width = header.len();
    let target = header
        .iter()
        .position(|h| h == opts.target_column)
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing target column {:?}", opts.target_column),
        })?;
    let mut features = Vec::new();
    let mut raw_targets = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(row + 2, |p| p.line() as usize);
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric cell {cell:?} in column {:?}", &header[c]),
            })?;
            if c == target {
                raw_targets.push(v);
            } else {
                features.push(v);
            }
        }
    }
    if raw_targets.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let targets = match opts.task {
        TaskKind::Regression => Targets::Values {
            dim: 1,
            values: raw_targets.into_iter().map(|t| vec![t]).collect(),
        },
        TaskKind::Classification => {
            let mut labels = Vec::with_capacity(raw_targets.len());
            for (i, t) in raw_targets.iter().enumerate() {
                if *t < 0.0 || t.fract() != 0.0 {
                    return Err(Error::Parse {
                        line: i + 2,
                        message: format!("class label {t} is not a nonnegative integer"),
                    });
                }
                labels.push(*t as usize);
            }
            let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
            Targets::Labels { classes, labels }
        }
    };
    let mut ds = Dataset::new(features, width - 1, targets)?;
    ds.split(opts.train_fraction, opts.seed)?;
    ds.normalize(opts.normalize);
    Ok(ds)
}
