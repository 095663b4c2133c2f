//! Seeded synthetic datasets for the classification and regression
//! benchmarks.

use std::f64::consts::TAU;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::TrainingSet;

/// Regression targets, ordered by increasing complexity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetFunction {
    /// x²/4 − 1
    Quadratic,
    /// tanh 3x
    Tanh3x,
    /// sin 2x + 0.3x²
    Sin2xQuad,
    /// cos 4x
    Cos4x,
    /// cos 4x · e^(−x²/4)
    DampedCos4x,
    /// sin 5x + cos 2x
    Sin5xCos2x,
}

impl TargetFunction {
    pub const ALL: [TargetFunction; 6] = [
        TargetFunction::Quadratic,
        TargetFunction::Tanh3x,
        TargetFunction::Sin2xQuad,
        TargetFunction::Cos4x,
        TargetFunction::DampedCos4x,
        TargetFunction::Sin5xCos2x,
    ];

    pub fn eval(self, x: f64) -> f64 {
        match self {
            TargetFunction::Quadratic => x * x / 4.0 - 1.0,
            TargetFunction::Tanh3x => (3.0 * x).tanh(),
            TargetFunction::Sin2xQuad => (2.0 * x).sin() + 0.3 * x * x,
            TargetFunction::Cos4x => (4.0 * x).cos(),
            TargetFunction::DampedCos4x => (4.0 * x).cos() * (-x * x / 4.0).exp(),
            TargetFunction::Sin5xCos2x => (5.0 * x).sin() + (2.0 * x).cos(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TargetFunction::Quadratic => "quadratic",
            TargetFunction::Tanh3x => "tanh3x",
            TargetFunction::Sin2xQuad => "sin2x_quad",
            TargetFunction::Cos4x => "cos4x",
            TargetFunction::DampedCos4x => "damped_cos4x",
            TargetFunction::Sin5xCos2x => "sin5x_cos2x",
        }
    }
}

impl fmt::Display for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TargetFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown target function '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub function: Option<TargetFunction>,
    pub sigma: f64,
    pub seed: u64,
}

/// A function sampled on a uniform grid, with and without additive noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub xs: Vec<f64>,
    pub ys_true: Vec<f64>,
    pub ys_noisy: Vec<f64>,
    pub meta: CurveMeta,
}

/// `n` points from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
        .collect()
}

pub const REGRESSION_RANGE: (f64, f64) = (-2.0, 4.0);
pub const REGRESSION_POINTS: usize = 100;
/// Noise levels of the regression benchmark.
pub const REGRESSION_SIGMAS: [f64; 3] = [0.1, 0.25, 1.0];

pub fn gen_regression_curve(
    function: TargetFunction,
    n_points: usize,
    range: (f64, f64),
    sigma: f64,
    seed: u64,
) -> Result<Curve> {
    if n_points < 2 {
        return Err(Error::InvalidArgument(
            "a curve needs at least 2 points".into(),
        ));
    }
    if !(sigma >= 0.0) || !(range.1 > range.0) {
        return Err(Error::InvalidArgument(format!(
            "need sigma ≥ 0 and an increasing range, got σ={sigma}, range={range:?}"
        )));
    }
    let xs = uniform_grid(range.0, range.1, n_points);
    let ys_true: Vec<f64> = xs.iter().map(|&x| function.eval(x)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ys_noisy = ys_true
        .iter()
        .map(|&y| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if sigma == 0.0 {
                y
            } else {
                y + sigma * z
            }
        })
        .collect();
    Ok(Curve {
        xs,
        ys_true,
        ys_noisy,
        meta: CurveMeta {
            function: Some(function),
            sigma,
            seed,
        },
    })
}

impl Curve {
    /// Noisy samples as training pairs, with x copied `width` times into each
    /// input vector (one copy per qubit for the quantum model).
    pub fn training_set(&self, width: usize) -> TrainingSet {
        TrainingSet {
            inputs: self.xs.iter().map(|&x| vec![x; width]).collect(),
            targets: self.ys_noisy.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "y_true", "y_noisy"])?;
        for ((x, t), n) in self.xs.iter().zip(&self.ys_true).zip(&self.ys_noisy) {
            out.write_record([x.to_string(), t.to_string(), n.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, meta: CurveMeta) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let (mut xs, mut ys_true, mut ys_noisy) = (vec![], vec![], vec![]);
        for (i, rec) in rdr.deserialize::<(f64, f64, f64)>().enumerate() {
            let (x, t, n) = rec.map_err(|e| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            xs.push(x);
            ys_true.push(t);
            ys_noisy.push(n);
        }
        Ok(Self {
            xs,
            ys_true,
            ys_noisy,
            meta,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassKind {
    #[serde(rename = "1func")]
    OneFunction,
    #[serde(rename = "3func")]
    ThreeFunction,
}

impl FromStr for ClassKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1func" | "one" => Ok(ClassKind::OneFunction),
            "3func" | "three" => Ok(ClassKind::ThreeFunction),
            _ => Err(Error::InvalidArgument(format!(
                "unknown dataset kind '{s}'"
            ))),
        }
    }
}

impl fmt::Display for ClassKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassKind::OneFunction => "1func",
            ClassKind::ThreeFunction => "3func",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub kind: ClassKind,
    pub n_features: usize,
    /// Noise standard deviation in units of the per-feature signal spread.
    pub noise_level: f64,
    pub seed: u64,
}

/// Feature vectors with binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub meta: DatasetMeta,
}

/// Offset between the class means along every feature.
pub const CLASS_OFFSET: f64 = 0.04;

fn generator(k: usize, u: f64) -> f64 {
    match k {
        0 => u.cos(),
        1 => (2.0 * u).sin(),
        _ => (3.0 * u).cos(),
    }
}

/// Two-class data: feature j of a sample is `g_k(t + φ_j) + c·Δ + noise`, with
/// latent `t` uniform on [0, 2π), class `c ∈ {0, 1}` and the phases φ_j evenly
/// spaced around the circle (rotated by a seeded offset). One-function data
/// always uses `g_0 = cos`; three-function data picks `g_k` per sample from
/// {cos u, sin 2u, cos 3u}.
///
/// Harmonics below the feature count sum to zero over evenly spaced phases,
/// so without noise the feature sum equals `c·Δ·n` exactly and the classes
/// are separable along the all-ones direction.
pub fn gen_classification_set(
    kind: ClassKind,
    n_pairs: usize,
    n_features: usize,
    noise_level: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    gen_classification_set_with_offset(kind, n_pairs, n_features, noise_level, CLASS_OFFSET, seed)
}

/// [`gen_classification_set`] with an explicit class offset Δ.
pub fn gen_classification_set_with_offset(
    kind: ClassKind,
    n_pairs: usize,
    n_features: usize,
    noise_level: f64,
    offset: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if !(offset > 0.0 && offset.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "class offset must be positive, got {offset}"
        )));
    }
    if n_pairs < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    if n_features < 4 {
        return Err(Error::InvalidArgument(format!(
            "need at least 4 features, got {n_features}"
        )));
    }
    if !(noise_level >= 0.0) {
        return Err(Error::InvalidArgument("noise level must be ≥ 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rotation: f64 = rng.random::<f64>() * TAU / n_features as f64;
    let phases: Vec<f64> = (0..n_features)
        .map(|j| rotation + TAU * j as f64 / n_features as f64)
        .collect();
    let mut features = Vec::with_capacity(n_pairs);
    let mut labels = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs {
        let class = (i % 2) as u8;
        let t = rng.random::<f64>() * TAU;
        let k = match kind {
            ClassKind::OneFunction => 0,
            ClassKind::ThreeFunction => rng.random_range(0..3),
        };
        let shift = class as f64 * offset;
        features.push(
            phases
                .iter()
                .map(|p| generator(k, t + p) + shift)
                .collect::<Vec<_>>(),
        );
        labels.push(class);
    }
    if noise_level > 0.0 {
        let scale: Vec<f64> = (0..n_features)
            .map(|j| noise_level * std_dev(features.iter().map(|row| row[j])))
            .collect();
        for row in &mut features {
            for (v, s) in row.iter_mut().zip(&scale) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += s * z;
            }
        }
    }
    Ok(LabeledDataset {
        features,
        labels,
        meta: DatasetMeta {
            kind,
            n_features,
            noise_level,
            seed,
        },
    })
}

fn std_dev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - ones, ones]
    }

    pub fn training_set(&self) -> TrainingSet {
        TrainingSet {
            inputs: self.features.clone(),
            targets: self.labels.iter().map(|&l| l as f64).collect(),
        }
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            meta: self.meta.clone(),
        }
    }

    /// Header `label,x0,x1,…`, one sample per line.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["label".to_string()];
        header.extend((0..self.meta.n_features).map(|j| format!("x{j}")));
        out.write_record(&header)?;
        for (row, label) in self.features.iter().zip(&self.labels) {
            let mut rec = vec![label.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, meta: DatasetMeta) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let width = rdr.headers()?.len();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            if rec.len() != width || width < 2 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {width} fields, found {}", rec.len()),
                });
            }
            let label: u8 = rec[0].trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad label '{}'", &rec[0]),
            })?;
            if label > 1 {
                return Err(Error::Parse {
                    line,
                    message: format!("label {label} not in {{0, 1}}"),
                });
            }
            let row = rec
                .iter()
                .skip(1)
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line,
                    message: e.to_string(),
                })?;
            features.push(row);
            labels.push(label);
        }
        Ok(Self {
            features,
            labels,
            meta: DatasetMeta {
                n_features: width.saturating_sub(1),
                ..meta
            },
        })
    }
}

/// Stratified seeded split into (train, test).
///
/// The training share is `round(fraction · n)`; each class contributes in
/// proportion, so class balance is preserved within one sample per split.
pub fn split(
    dataset: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = dataset.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidArgument(format!(
            "split of {n} samples at {train_fraction} leaves an empty side"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: [Vec<usize>; 2] = [vec![], vec![]];
    for (i, &l) in dataset.labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    for group in &mut by_class {
        group.shuffle(&mut rng);
    }
    let n0 = by_class[0].len();
    let mut take0 = ((n_train as f64) * n0 as f64 / n as f64).round() as usize;
    take0 = take0.min(n0).min(n_train);
    let take1 = (n_train - take0).min(by_class[1].len());
    let take0 = n_train - take1;
    let mut train: Vec<usize> = by_class[0][..take0]
        .iter()
        .chain(&by_class[1][..take1])
        .copied()
        .collect();
    let mut test: Vec<usize> = by_class[0][take0..]
        .iter()
        .chain(&by_class[1][take1..])
        .copied()
        .collect();
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spacing() {
        let c = gen_regression_curve(TargetFunction::Cos4x, 100, (-2.0, 4.0), 0.1, 1).unwrap();
        assert_eq!(c.xs.len(), 100);
        assert_eq!(c.xs[0], -2.0);
        assert_eq!(c.xs[99], 4.0);
        for w in c.xs.windows(2) {
            assert!((w[1] - w[0] - 6.0 / 99.0).abs() < 1e-12);
        }
        assert!((6.0f64 / 99.0 - 0.0606).abs() < 1e-4);
    }

    #[test]
    fn zero_sigma_is_exact_and_seeds_repeat() {
        let c = gen_regression_curve(TargetFunction::Tanh3x, 50, (-2.0, 4.0), 0.0, 1).unwrap();
        assert_eq!(c.ys_true, c.ys_noisy);
        let a = gen_regression_curve(TargetFunction::Cos4x, 50, (-2.0, 4.0), 0.5, 7).unwrap();
        let b = gen_regression_curve(TargetFunction::Cos4x, 50, (-2.0, 4.0), 0.5, 7).unwrap();
        assert_eq!(a, b);
        assert!(gen_regression_curve(TargetFunction::Cos4x, 1, (-2.0, 4.0), 0.5, 7).is_err());
        assert!(gen_regression_curve(TargetFunction::Cos4x, 10, (-2.0, 4.0), -0.5, 7).is_err());
    }

    #[test]
    fn function_names_parse() {
        for f in TargetFunction::ALL {
            assert_eq!(f.name().parse::<TargetFunction>().unwrap(), f);
        }
        assert!("cos5x".parse::<TargetFunction>().is_err());
        assert!("2func".parse::<ClassKind>().is_err());
    }

    #[test]
    fn classification_shapes_and_balance() {
        let d = gen_classification_set(ClassKind::ThreeFunction, 250, 8, 0.05, 3).unwrap();
        assert_eq!(d.len(), 250);
        assert!(d.features.iter().all(|r| r.len() == 8));
        let [a, b] = d.class_counts();
        assert!(a.abs_diff(b) <= 1);
        let d16 = gen_classification_set(ClassKind::OneFunction, 11, 16, 0.2, 3).unwrap();
        assert!(d16.features.iter().all(|r| r.len() == 16));
        let [a, b] = d16.class_counts();
        assert!(a.abs_diff(b) <= 1);
    }

    /// Nearest-centroid rule, written independently of the generator. Every
    /// generator harmonic averages to zero over a uniform latent phase, so the
    /// population centroids are 0 and Δ·1.
    fn nearest_centroid_accuracy(d: &LabeledDataset) -> f64 {
        let dim = d.meta.n_features;
        let centroids = [vec![0.0; dim], vec![CLASS_OFFSET; dim]];
        let correct = d
            .features
            .iter()
            .zip(&d.labels)
            .filter(|(row, &l)| {
                let dist =
                    |c: &Vec<f64>| -> f64 { row.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum() };
                let pred = if dist(&centroids[1]) < dist(&centroids[0]) {
                    1
                } else {
                    0
                };
                pred == l
            })
            .count();
        correct as f64 / d.len() as f64
    }

    #[test]
    fn noiseless_classes_are_centroid_separable() {
        for kind in [ClassKind::OneFunction, ClassKind::ThreeFunction] {
            for n_features in [8, 16] {
                for seed in 0..5 {
                    let d = gen_classification_set(kind, 250, n_features, 0.0, seed).unwrap();
                    assert_eq!(
                        nearest_centroid_accuracy(&d),
                        1.0,
                        "{kind} {n_features} {seed}"
                    );
                }
            }
        }
    }

    #[test]
    fn split_sizes_and_exhaustiveness() {
        let d = gen_classification_set(ClassKind::ThreeFunction, 400, 8, 0.05, 1).unwrap();
        let (train, test) = split(&d, 0.625, 9).unwrap();
        assert_eq!((train.len(), test.len()), (250, 150));
        for part in [&train, &test] {
            let [a, b] = part.class_counts();
            assert!(a.abs_diff(b) <= 1);
        }
        let mut all: Vec<String> = train
            .features
            .iter()
            .chain(&test.features)
            .map(|r| format!("{r:?}"))
            .collect();
        let mut orig: Vec<String> = d.features.iter().map(|r| format!("{r:?}")).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
        assert_eq!(split(&d, 0.625, 9).unwrap(), (train, test));
        assert!(split(&d, 0.0, 1).is_err());
        assert!(split(&d, 0.0001, 1).is_err());
    }

    #[test]
    fn odd_split_keeps_balance() {
        let d = gen_classification_set(ClassKind::OneFunction, 37, 8, 0.1, 2).unwrap();
        let (train, test) = split(&d, 0.6, 4).unwrap();
        assert_eq!(train.len() + test.len(), 37);
        for part in [&train, &test] {
            let [a, b] = part.class_counts();
            assert!(a.abs_diff(b) <= 1);
        }
    }

    #[test]
    fn csv_round_trip() {
        let d = gen_classification_set(ClassKind::OneFunction, 10, 8, 0.1, 2).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = LabeledDataset::read_csv(buf.as_slice(), d.meta.clone()).unwrap();
        assert_eq!(back, d);

        let c = gen_regression_curve(TargetFunction::Quadratic, 20, (-2.0, 4.0), 0.3, 1).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(Curve::read_csv(buf.as_slice(), c.meta.clone()).unwrap(), c);

        let bad = "label,x0\n2,0.5\n";
        assert!(matches!(
            LabeledDataset::read_csv(bad.as_bytes(), d.meta.clone()),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
