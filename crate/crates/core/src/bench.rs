//! Paired CDNN/QDNN studies: the four-factor classification table and the
//! function × noise regression grid that feeds the qualifier corpus.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdnn::build_default_cdnn;
use crate::complexity::{characterize, MetricVector};
use crate::datagen::{
    gen_classification_set_with_offset, gen_regression_curve, split, ClassKind, LabeledDataset,
    TargetFunction, CLASS_OFFSET, REGRESSION_POINTS, REGRESSION_RANGE, REGRESSION_SIGMAS,
};
use crate::error::{Error, Result};
use crate::perfmetrics::{self, confusion, ConfusionMatrix, OutperformanceRecord, Sampled};
use crate::qdnn::QdnnModel;
use crate::qualifier::QualifierCorpusEntry;
use crate::train::{Loss, Task, TrainConfig, Trainable, Trainer, TrainingSet};

/// One classification dataset and the paired training setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassBenchConfig {
    pub kind: ClassKind,
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub noise_level: f64,
    pub class_offset: f64,
    pub qdnn_layers: usize,
    pub cdnn: TrainConfig,
    pub qdnn: TrainConfig,
    pub ensemble: usize,
    pub seed: u64,
}

impl Default for ClassBenchConfig {
    fn default() -> Self {
        Self {
            kind: ClassKind::ThreeFunction,
            n_train: 250,
            n_test: 150,
            n_features: 8,
            noise_level: 0.05,
            class_offset: CLASS_OFFSET,
            qdnn_layers: 2,
            cdnn: TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
            qdnn: TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
            ensemble: 10,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRun {
    pub seed: u64,
    pub cdnn: ConfusionMatrix,
    pub qdnn: ConfusionMatrix,
    pub cdnn_efficiency: f64,
    pub qdnn_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub runs: Vec<ClassRun>,
    pub mean_cdnn: f64,
    pub mean_qdnn: f64,
}

/// Macro precision, with an empty predicted class contributing zero
/// precision instead of being undefined.
pub fn efficiency_or_degenerate(cm: &ConfusionMatrix) -> f64 {
    perfmetrics::classification_efficiency(cm).unwrap_or_else(|_| {
        (0..2)
            .filter(|&j| cm.column_sum(j) > 0)
            .map(|j| cm.counts[j][j] as f64 / cm.column_sum(j) as f64)
            .sum::<f64>()
            / 2.0
    })
}

fn test_matrix<M: Trainable>(model: &M, test: &LabeledDataset) -> Result<ConfusionMatrix> {
    let preds = test
        .features
        .iter()
        .map(|x| model.predict(x).map(|p| (p > 0.5) as u8))
        .collect::<Result<Vec<_>>>()?;
    confusion(&preds, &test.labels)
}

/// Member `k` of the ensemble: a fresh dataset draw and fresh network
/// initializations, all derived from `cfg.seed + k`.
pub fn run_class_member(cfg: &ClassBenchConfig, k: usize) -> Result<ClassRun> {
    let seed = cfg.seed.wrapping_add(k as u64);
    let n = cfg.n_train + cfg.n_test;
    let ds = gen_classification_set_with_offset(
        cfg.kind,
        n,
        cfg.n_features,
        cfg.noise_level,
        cfg.class_offset,
        seed,
    )?;
    let (train, test) = split(&ds, cfg.n_train as f64 / n as f64, seed)?;
    let data = train.training_set();
    let mut c = Trainer::new(
        build_default_cdnn(cfg.n_features, Task::Classification, seed)?,
        TrainConfig { seed, ..cfg.cdnn },
        Loss::Bce,
    )?;
    c.run_epochs(&data, cfg.cdnn.epochs)?;
    let mut q = Trainer::new(
        QdnnModel::build(cfg.n_features, cfg.qdnn_layers, Task::Classification, seed)?,
        TrainConfig { seed, ..cfg.qdnn },
        Loss::Bce,
    )?;
    q.run_epochs(&data, cfg.qdnn.epochs)?;
    let cdnn = test_matrix(c.model(), &test)?;
    let qdnn = test_matrix(q.model(), &test)?;
    Ok(ClassRun {
        seed,
        cdnn_efficiency: efficiency_or_degenerate(&cdnn),
        qdnn_efficiency: efficiency_or_degenerate(&qdnn),
        cdnn,
        qdnn,
    })
}

pub fn run_classification(cfg: &ClassBenchConfig) -> Result<ClassSummary> {
    if cfg.ensemble == 0 || cfg.n_train < 2 || cfg.n_test < 2 {
        return Err(Error::InvalidArgument(
            "need ensemble ≥ 1 and at least 2 train and test samples".into(),
        ));
    }
    let runs = (0..cfg.ensemble)
        .into_par_iter()
        .map(|k| run_class_member(cfg, k))
        .collect::<Result<Vec<_>>>()?;
    let n = runs.len() as f64;
    Ok(ClassSummary {
        mean_cdnn: runs.iter().map(|r| r.cdnn_efficiency).sum::<f64>() / n,
        mean_qdnn: runs.iter().map(|r| r.qdnn_efficiency).sum::<f64>() / n,
        runs,
    })
}

/// One row of the four-factor table: a factor moved from one value to
/// another with the rest held at the base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    pub factor: String,
    pub change: String,
    pub cdnn: (f64, f64),
    pub qdnn: (f64, f64),
    /// (q_to / c_to) / (q_from / c_from) − 1.
    pub ratio_change: f64,
}

pub fn ratio_change(cdnn: (f64, f64), qdnn: (f64, f64)) -> f64 {
    (qdnn.1 / cdnn.1) / (qdnn.0 / cdnn.0) - 1.0
}

/// Factor variations of the table, from → to.
pub fn factor_variations(
    base: &ClassBenchConfig,
) -> Vec<(String, String, ClassBenchConfig, ClassBenchConfig)> {
    let with = |f: &dyn Fn(&mut ClassBenchConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    vec![
        (
            "Number of training pairs".into(),
            "500 pairs -> 50 pairs".into(),
            with(&|c| c.n_train = 500),
            with(&|c| c.n_train = 50),
        ),
        (
            "Data complexity".into(),
            "1 func. -> 3 func.".into(),
            with(&|c| c.kind = ClassKind::OneFunction),
            with(&|c| c.kind = ClassKind::ThreeFunction),
        ),
        (
            "Number of input features".into(),
            "8 feat. -> 16 feat.".into(),
            with(&|c| c.n_features = 8),
            with(&|c| c.n_features = 16),
        ),
        (
            "Noise".into(),
            "0.2σ -> 0.05σ".into(),
            with(&|c| c.noise_level = 0.2),
            with(&|c| c.noise_level = 0.05),
        ),
    ]
}

/// Runs every row; a failing row is reported and the rest continue.
pub fn run_factor_table(base: &ClassBenchConfig) -> Vec<std::result::Result<FactorRow, String>> {
    factor_variations(base)
        .into_iter()
        .map(|(factor, change, from, to)| {
            let a = run_classification(&from).map_err(|e| format!("{factor}: {e}"))?;
            let b = run_classification(&to).map_err(|e| format!("{factor}: {e}"))?;
            let cdnn = (a.mean_cdnn, b.mean_cdnn);
            let qdnn = (a.mean_qdnn, b.mean_qdnn);
            Ok(FactorRow {
                factor,
                change,
                cdnn,
                qdnn,
                ratio_change: ratio_change(cdnn, qdnn),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegBenchConfig {
    pub functions: Vec<TargetFunction>,
    pub sigmas: Vec<f64>,
    pub n_points: usize,
    /// Inputs per sample; x is copied into each (one per qubit).
    pub width: usize,
    pub qdnn_layers: usize,
    pub cdnn: TrainConfig,
    pub qdnn: TrainConfig,
    /// Strictly increasing epochs at which both models are scored.
    pub checkpoints: Vec<usize>,
    pub seed: u64,
}

impl Default for RegBenchConfig {
    fn default() -> Self {
        Self {
            functions: TargetFunction::ALL.to_vec(),
            sigmas: REGRESSION_SIGMAS.to_vec(),
            n_points: REGRESSION_POINTS,
            width: 8,
            qdnn_layers: 2,
            cdnn: TrainConfig {
                epochs: 50,
                learning_rate: 0.01,
                batch_size: 10,
                ..TrainConfig::default()
            },
            qdnn: TrainConfig {
                epochs: 50,
                batch_size: 10,
                ..TrainConfig::default()
            },
            checkpoints: vec![10, 20, 30, 40, 50],
            seed: 7,
        }
    }
}

/// Reference cell: cos 4x at σ = 1 after 50 epochs.
pub fn is_reference_cell(function: TargetFunction, sigma: f64, epoch: usize) -> bool {
    function == TargetFunction::Cos4x && sigma == 1.0 && epoch == 50
}

/// Scores and final predictions of one (function, σ) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegCell {
    pub function: TargetFunction,
    pub sigma: f64,
    pub seed: u64,
    pub metrics: MetricVector,
    pub records: Vec<OutperformanceRecord>,
    pub xs: Vec<f64>,
    pub ys_true: Vec<f64>,
    pub ys_noisy: Vec<f64>,
    pub pred_cdnn: Vec<f64>,
    pub pred_qdnn: Vec<f64>,
}

fn standardize(ys: &[f64]) -> (f64, f64) {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

fn predictions<M: Trainable>(m: &M, data: &TrainingSet, mean: f64, sd: f64) -> Result<Vec<f64>> {
    data.inputs
        .iter()
        .map(|x| m.predict(x).map(|y| mean + sd * y))
        .collect()
}

/// Trains both models on the noisy curve (targets standardized) and scores
/// M_reg against the noiseless curve at every checkpoint.
pub fn run_reg_cell(
    cfg: &RegBenchConfig,
    function: TargetFunction,
    sigma: f64,
    index: usize,
) -> Result<RegCell> {
    if cfg.checkpoints.is_empty() || cfg.checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "checkpoints must be strictly increasing".into(),
        ));
    }
    let seed = cfg.seed.wrapping_add(index as u64);
    let curve = gen_regression_curve(function, cfg.n_points, REGRESSION_RANGE, sigma, seed)?;
    let metrics = characterize(&curve.xs, &curve.ys_noisy)?;
    let (mean, sd) = standardize(&curve.ys_noisy);
    let raw = curve.training_set(cfg.width);
    let data = TrainingSet::new(
        raw.inputs.clone(),
        raw.targets.iter().map(|y| (y - mean) / sd).collect(),
    )?;
    let mut c = Trainer::new(
        build_default_cdnn(cfg.width, Task::Regression, seed)?,
        TrainConfig { seed, ..cfg.cdnn },
        Loss::Mse,
    )?;
    let mut q = Trainer::new(
        QdnnModel::build(cfg.width, cfg.qdnn_layers, Task::Regression, seed)?,
        TrainConfig { seed, ..cfg.qdnn },
        Loss::Mse,
    )?;
    let mut done = 0;
    let mut records = Vec::new();
    let (mut pc, mut pq) = (vec![], vec![]);
    for &cp in &cfg.checkpoints {
        c.run_epochs(&data, cp - done)?;
        q.run_epochs(&data, cp - done)?;
        done = cp;
        pc = predictions(c.model(), &data, mean, sd)?;
        pq = predictions(q.model(), &data, mean, sd)?;
        let truth = Sampled::new(&curve.xs, &curve.ys_true);
        let mc = perfmetrics::m_reg(truth, Sampled::new(&curve.xs, &pc))?;
        let mq = perfmetrics::m_reg(truth, Sampled::new(&curve.xs, &pq))?;
        records.push(OutperformanceRecord::new(
            function.name(),
            sigma,
            seed,
            cp,
            mc,
            mq,
        )?);
    }
    Ok(RegCell {
        function,
        sigma,
        seed,
        metrics,
        records,
        xs: curve.xs,
        ys_true: curve.ys_true,
        ys_noisy: curve.ys_noisy,
        pred_cdnn: pc,
        pred_qdnn: pq,
    })
}

/// Every (function, σ) cell, in parallel. Failed cells are returned as
/// messages so the rest of the grid survives.
pub fn run_regression(cfg: &RegBenchConfig) -> Vec<std::result::Result<RegCell, String>> {
    let cells: Vec<(TargetFunction, f64)> = cfg
        .functions
        .iter()
        .flat_map(|&f| cfg.sigmas.iter().map(move |&s| (f, s)))
        .collect();
    cells
        .par_iter()
        .enumerate()
        .map(|(i, &(f, s))| run_reg_cell(cfg, f, s, i).map_err(|e| format!("{f} σ={s}: {e}")))
        .collect()
}

/// Qualifier corpus entries from finished cells, one per checkpoint.
pub fn corpus_from_cells(cells: &[RegCell]) -> Vec<QualifierCorpusEntry> {
    cells
        .iter()
        .flat_map(|c| {
            c.records
                .iter()
                .filter(|r| r.epoch >= 1)
                .map(move |r| QualifierCorpusEntry {
                    metrics: c.metrics,
                    xi: r.xi,
                    epoch: r.epoch as u32,
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_change_matches_printed_rows() {
        let r = ratio_change((0.6436, 0.4716), (0.8745, 0.8116));
        assert!((r - 0.27).abs() < 0.005);
        let r = ratio_change((0.8378, 0.6290), (0.9678, 0.8704));
        assert!((r - 0.20).abs() < 0.005);
    }

    #[test]
    fn degenerate_efficiency() {
        let cm = ConfusionMatrix::new([[10, 0], [10, 0]]);
        assert_eq!(efficiency_or_degenerate(&cm), 0.25);
        let ok = ConfusionMatrix::new([[65, 6], [9, 70]]);
        assert_eq!(
            efficiency_or_degenerate(&ok),
            perfmetrics::classification_efficiency(&ok).unwrap()
        );
    }

    #[test]
    fn smoke_runs_are_deterministic() {
        let cfg = ClassBenchConfig {
            n_train: 20,
            n_test: 10,
            ensemble: 2,
            cdnn: TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
            qdnn: TrainConfig {
                epochs: 1,
                ..TrainConfig::default()
            },
            ..ClassBenchConfig::default()
        };
        let a = run_classification(&cfg).unwrap();
        assert_eq!(a, run_classification(&cfg).unwrap());
        assert_eq!(a.runs.len(), 2);
        assert!(a.runs.iter().all(|r| r.cdnn.total() == 10));

        let reg = RegBenchConfig {
            functions: vec![TargetFunction::Cos4x],
            sigmas: vec![1.0],
            n_points: 40,
            width: 2,
            qdnn_layers: 1,
            checkpoints: vec![1, 2],
            ..RegBenchConfig::default()
        };
        let cells = run_regression(&reg);
        let cell = cells[0].as_ref().unwrap();
        assert_eq!(cell.records.len(), 2);
        for r in &cell.records {
            assert_eq!(r.xi, r.m_cdnn / r.m_qdnn - 1.0);
        }
        assert_eq!(corpus_from_cells(std::slice::from_ref(cell)).len(), 2);
        assert!(is_reference_cell(TargetFunction::Cos4x, 1.0, 50));
    }
}
