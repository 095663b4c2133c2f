//! DVCS case study: binned cross-section ingestion, noise-rescaled
//! pseudodata, paired CDNN/QDNN form-factor extractions against a pluggable
//! cross-section model, and the per-set outperformance Ξ_DVCS with its
//! t-dependence and matched-control analyses.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdnn::build_default_cdnn;
use crate::complexity::{characterize, MetricVector};
use crate::error::{Error, Result};
use crate::geometry::{
    area_fractions, build_surface, sign_agreement, zero_contour, FieldKind, GridField, ScatterField,
};
use crate::perfmetrics::{self, Sampled};
use crate::qdnn::QdnnModel;
use crate::qualifier::{
    classify_sign, eval_qualifier, fit_qualifier, Favored, FitDiagnostics, QualifierCorpusEntry,
    QualifierTable, DEAD_BAND,
};
use crate::train::{Loss, Task, TrainConfig, Trainable, Trainer, TrainingSet};

/// Exact input header, one point per row.
pub const CSV_HEADER: [&str; 8] = [
    "experiment",
    "E_beam",
    "Q2",
    "xB",
    "t",
    "phi",
    "F",
    "sigma_F",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiPoint {
    /// Degrees in [0, 360).
    pub phi: f64,
    pub f: f64,
    pub sigma_f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub e_beam: f64,
    pub q2: f64,
    pub xb: f64,
    /// Negative, GeV².
    pub t: f64,
}

/// One (E_beam, Q², x_B, t) bin with its φ-distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicSet {
    pub set_id: String,
    pub experiment: String,
    pub kin: Kinematics,
    pub points: Vec<PhiPoint>,
}

impl KinematicSet {
    pub fn phis(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.phi).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.f).collect()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.sigma_f).collect()
    }

    /// Mean of σ_F / |F| over the points.
    pub fn mean_relative_error(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.sigma_f / p.f.abs().max(f64::MIN_POSITIVE))
            .sum::<f64>()
            / self.points.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 4 {
            return Err(Error::InvalidArgument(format!(
                "set {} has {} φ points, need at least 4",
                self.set_id,
                self.points.len()
            )));
        }
        let mut phis = self.phis();
        phis.sort_by(f64::total_cmp);
        if phis.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!(
                "set {} repeats a φ value",
                self.set_id
            )));
        }
        if self.points.iter().any(|p| !(p.sigma_f > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "set {} has a non-positive uncertainty",
                self.set_id
            )));
        }
        Ok(())
    }
}

/// Point counts per experiment tag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub points_per_experiment: BTreeMap<String, usize>,
    pub sets_per_experiment: BTreeMap<String, usize>,
    pub total_points: usize,
}

impl IngestReport {
    pub fn of(sets: &[KinematicSet]) -> Self {
        let mut r = Self::default();
        for s in sets {
            *r.points_per_experiment
                .entry(s.experiment.clone())
                .or_default() += s.points.len();
            *r.sets_per_experiment
                .entry(s.experiment.clone())
                .or_default() += 1;
            r.total_points += s.points.len();
        }
        r
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads the point-per-row CSV and groups rows into kinematic sets keyed by
/// (experiment, E_beam, Q², x_B, t), in order of first appearance.
pub fn ingest_reader<R: Read>(r: R) -> Result<(Vec<KinematicSet>, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut records = rdr.records();
    match records.next() {
        None => return Ok((Vec::new(), IngestReport::default())),
        Some(h) => {
            let h = h.map_err(|e| parse_err(1, e.to_string()))?;
            if h.iter().ne(CSV_HEADER) {
                return Err(parse_err(
                    1,
                    format!("header must be '{}'", CSV_HEADER.join(",")),
                ));
            }
        }
    }
    let mut sets: Vec<KinematicSet> = Vec::new();
    let mut index: BTreeMap<(String, [u64; 4]), usize> = BTreeMap::new();
    let mut per_exp: BTreeMap<String, usize> = BTreeMap::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != CSV_HEADER.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", CSV_HEADER.len(), rec.len()),
            ));
        }
        let experiment = rec[0].trim().to_string();
        if experiment.is_empty() {
            return Err(parse_err(line, "empty experiment tag"));
        }
        let mut v = [0.0; 7];
        for (k, slot) in v.iter_mut().enumerate() {
            let field = rec[k + 1].trim();
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| {
                    parse_err(line, format!("{}: bad number '{field}'", CSV_HEADER[k + 1]))
                })?;
        }
        let [e_beam, q2, xb, t, phi, f, sigma_f] = v;
        if !(sigma_f > 0.0) {
            return Err(parse_err(
                line,
                format!("sigma_F must be positive, got {sigma_f}"),
            ));
        }
        if !(0.0..360.0).contains(&phi) {
            return Err(parse_err(line, format!("phi {phi} outside [0, 360)")));
        }
        let key = (
            experiment.clone(),
            [e_beam.to_bits(), q2.to_bits(), xb.to_bits(), t.to_bits()],
        );
        let at = *index.entry(key).or_insert_with(|| {
            let k = per_exp.entry(experiment.clone()).or_default();
            let id = format!("{experiment}/{k:03}");
            *k += 1;
            sets.push(KinematicSet {
                set_id: id,
                experiment: experiment.clone(),
                kin: Kinematics { e_beam, q2, xb, t },
                points: Vec::new(),
            });
            sets.len() - 1
        });
        let set = &mut sets[at];
        if set.points.iter().any(|p| p.phi == phi) {
            return Err(parse_err(
                line,
                format!("duplicate phi {phi} in set {}", set.set_id),
            ));
        }
        set.points.push(PhiPoint { phi, f, sigma_f });
    }
    let report = IngestReport::of(&sets);
    Ok((sets, report))
}

pub fn ingest(path: impl AsRef<Path>) -> Result<(Vec<KinematicSet>, IngestReport)> {
    ingest_reader(File::open(path)?)
}

pub fn write_sets<W: Write>(sets: &[KinematicSet], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for s in sets {
        for p in &s.points {
            out.write_record([
                s.experiment.clone(),
                s.kin.e_beam.to_string(),
                s.kin.q2.to_string(),
                s.kin.xb.to_string(),
                s.kin.t.to_string(),
                p.phi.to_string(),
                p.f.to_string(),
                p.sigma_f.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Published kinematic coverage and point count of one experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentEnvelope {
    pub tag: &'static str,
    pub e_beam: (f64, f64),
    pub q2: (f64, f64),
    pub minus_t: (f64, f64),
    pub xb: (f64, f64),
    pub n_points: usize,
}

pub const EXPERIMENTS: [ExperimentEnvelope; 4] = [
    ExperimentEnvelope {
        tag: "HallA_E12-06-114",
        e_beam: (4.487, 10.992),
        q2: (2.71, 8.51),
        minus_t: (0.204, 1.373),
        xb: (0.363, 0.617),
        n_points: 1080,
    },
    ExperimentEnvelope {
        tag: "HallA_E07-007",
        e_beam: (3.355, 5.55),
        q2: (1.49, 2.0),
        minus_t: (0.177, 0.363),
        xb: (0.356, 0.361),
        n_points: 404,
    },
    ExperimentEnvelope {
        tag: "HallA_E00-110",
        e_beam: (5.75, 5.75),
        q2: (1.82, 2.37),
        minus_t: (0.171, 0.372),
        xb: (0.336, 0.401),
        n_points: 468,
    },
    ExperimentEnvelope {
        tag: "HallB_e1-DVCS1",
        e_beam: (5.75, 5.75),
        q2: (1.11, 3.77),
        minus_t: (0.11, 0.45),
        xb: (0.126, 0.475),
        n_points: 1933,
    },
];

pub const TOTAL_POINTS: usize = 3885;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ingest: IngestReport,
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.issues.is_empty()
    }
}

fn within(v: f64, (lo, hi): (f64, f64)) -> bool {
    v >= lo - 1e-9 && v <= hi + 1e-9
}

/// Checks set invariants, the kinematic envelopes of tagged experiments and,
/// when `expect_full_corpus` is set, the published per-experiment counts.
pub fn validate_sets(sets: &[KinematicSet], expect_full_corpus: bool) -> ValidationReport {
    let ingest = IngestReport::of(sets);
    let mut issues = Vec::new();
    for s in sets {
        if let Err(e) = s.validate() {
            issues.push(e.to_string());
        }
        let k = &s.kin;
        if !(k.xb > 0.0 && k.xb < 1.0) {
            issues.push(format!("set {}: x_B = {} outside (0, 1)", s.set_id, k.xb));
        }
        if !(k.q2 > 0.0) || !(k.e_beam > 0.0) || !(k.t < 0.0) {
            issues.push(format!(
                "set {}: need E_beam > 0, Q² > 0 and t < 0",
                s.set_id
            ));
        }
        if let Some(env) = EXPERIMENTS.iter().find(|e| e.tag == s.experiment) {
            if !(within(k.e_beam, env.e_beam)
                && within(k.q2, env.q2)
                && within(-k.t, env.minus_t)
                && within(k.xb, env.xb))
            {
                issues.push(format!(
                    "set {} (E={}, Q²={}, x_B={}, t={}) lies outside the {} envelope",
                    s.set_id, k.e_beam, k.q2, k.xb, k.t, env.tag
                ));
            }
        }
    }
    if expect_full_corpus {
        for env in &EXPERIMENTS {
            let got = ingest
                .points_per_experiment
                .get(env.tag)
                .copied()
                .unwrap_or(0);
            if got != env.n_points {
                issues.push(format!(
                    "{}: {got} points, expected {}",
                    env.tag, env.n_points
                ));
            }
        }
        if ingest.total_points != TOTAL_POINTS {
            issues.push(format!(
                "total {} points, expected {TOTAL_POINTS}",
                ingest.total_points
            ));
        }
    }
    ValidationReport { ingest, issues }
}

/// Model-defined form-factor parameters.
pub type CffVector = Vec<f64>;

/// A parametric map from form factors to the φ-differential cross section.
pub trait XsecModel: Send + Sync {
    fn name(&self) -> &str;
    fn n_params(&self) -> usize;
    /// `phi` in degrees.
    fn evaluate(&self, params: &[f64], kin: &Kinematics, phi: f64) -> f64;

    fn initial_guess(&self) -> CffVector {
        vec![1.0; self.n_params()]
    }

    /// Least-squares parameters for the sampled curve, weighted by 1/σ² when
    /// `sigmas` is given. The default is Gauss–Newton with a forward
    /// difference Jacobian.
    fn fit(
        &self,
        kin: &Kinematics,
        phis: &[f64],
        values: &[f64],
        sigmas: Option<&[f64]>,
    ) -> Result<CffVector> {
        let p = self.n_params();
        let w: Vec<f64> = match sigmas {
            Some(s) => s.iter().map(|s| 1.0 / s).collect(),
            None => vec![1.0; phis.len()],
        };
        let mut params = self.initial_guess();
        for _ in 0..100 {
            let resid = DVector::from_fn(phis.len(), |i, _| {
                w[i] * (values[i] - self.evaluate(&params, kin, phis[i]))
            });
            let jac = DMatrix::from_fn(phis.len(), p, |i, k| {
                let h = 1e-6 * params[k].abs().max(1.0);
                let mut q = params.clone();
                q[k] += h;
                w[i] * (self.evaluate(&q, kin, phis[i]) - self.evaluate(&params, kin, phis[i])) / h
            });
            let svd = jac.svd(true, true);
            if svd.rank(1e-10 * svd.singular_values.max()) < p {
                return Err(Error::FitFailed(format!(
                    "{}: rank-deficient Jacobian",
                    self.name()
                )));
            }
            let step = svd
                .solve(&resid, 1e-14)
                .map_err(|e| Error::FitFailed(e.to_string()))?;
            for (q, d) in params.iter_mut().zip(step.iter()) {
                *q += d;
            }
            if step.norm() <= 1e-12 * (1.0 + params.iter().map(|v| v * v).sum::<f64>().sqrt()) {
                return Ok(params);
            }
        }
        Ok(params)
    }
}

/// F = A(kin)·[c0 + c1 cos φ + c2 cos 2φ] with A = 1/(Q²·(1 + |t|)).
///
/// The harmonics make F linear in the parameters, so the fit is an exact
/// linear least-squares solve.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyHarmonic;

impl ToyHarmonic {
    pub fn envelope(kin: &Kinematics) -> f64 {
        1.0 / (kin.q2 * (1.0 + kin.t.abs()))
    }

    fn basis(phi: f64) -> [f64; 3] {
        let r = phi.to_radians();
        [1.0, r.cos(), (2.0 * r).cos()]
    }
}

pub fn toy_xsec(params: &[f64], kin: &Kinematics, phi: f64) -> f64 {
    let b = ToyHarmonic::basis(phi);
    ToyHarmonic::envelope(kin) * (params[0] * b[0] + params[1] * b[1] + params[2] * b[2])
}

impl XsecModel for ToyHarmonic {
    fn name(&self) -> &str {
        "toy-harmonic"
    }

    fn n_params(&self) -> usize {
        3
    }

    fn evaluate(&self, params: &[f64], kin: &Kinematics, phi: f64) -> f64 {
        toy_xsec(params, kin, phi)
    }

    fn fit(
        &self,
        kin: &Kinematics,
        phis: &[f64],
        values: &[f64],
        sigmas: Option<&[f64]>,
    ) -> Result<CffVector> {
        let a = Self::envelope(kin);
        let w = |i: usize| sigmas.map_or(1.0, |s| 1.0 / s[i]);
        let design = DMatrix::from_fn(phis.len(), 3, |i, k| w(i) * a * Self::basis(phis[i])[k]);
        let rhs = DVector::from_fn(phis.len(), |i, _| w(i) * values[i]);
        let svd = design.svd(true, true);
        if phis.len() < 3 || svd.rank(1e-10 * svd.singular_values.max()) < 3 {
            return Err(Error::FitFailed(
                "toy harmonic fit is rank-deficient".into(),
            ));
        }
        let sol = svd
            .solve(&rhs, 1e-14)
            .map_err(|e| Error::FitFailed(e.to_string()))?;
        Ok(sol.iter().copied().collect())
    }
}

/// Replica of a set around a known truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pseudodata {
    pub set: KinematicSet,
    /// Model parameters of F_true.
    pub truth: CffVector,
    pub lambda: f64,
}

impl Pseudodata {
    pub fn f_true(&self, model: &dyn XsecModel, phi: f64) -> f64 {
        model.evaluate(&self.truth, &self.set.kin, phi)
    }
}

/// F_true is the model fitted (σ-weighted) to the real set; each point is
/// redrawn as F_true(φ_i) + λσ_i·N(0, 1) and carries uncertainty λσ_i.
pub fn make_pseudodata(
    set: &KinematicSet,
    model: &dyn XsecModel,
    lambda: f64,
    seed: u64,
) -> Result<Pseudodata> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise scale must be ≥ 0, got {lambda}"
        )));
    }
    let truth = model.fit(&set.kin, &set.phis(), &set.values(), Some(&set.sigmas()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = set
        .points
        .iter()
        .map(|p| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let mean = model.evaluate(&truth, &set.kin, p.phi);
            PhiPoint {
                phi: p.phi,
                f: if lambda == 0.0 {
                    mean
                } else {
                    mean + lambda * p.sigma_f * z
                },
                sigma_f: if lambda == 0.0 {
                    p.sigma_f
                } else {
                    lambda * p.sigma_f
                },
            }
        })
        .collect();
    Ok(Pseudodata {
        set: KinematicSet {
            points,
            ..set.clone()
        },
        truth,
        lambda,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Cdnn,
    Qdnn,
}

/// Training and curve settings for one extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub train: TrainConfig,
    /// Variational blocks of the QDNN.
    pub qdnn_layers: usize,
    /// Points of the dense φ grid the network curve is sampled on.
    pub curve_points: usize,
}

pub const DVCS_FEATURES: usize = 4;

/// (φ − π, 2φ − 2π, sin φ, cos φ), φ in radians. Each network is trained on
/// one set, so the kinematics are constant inputs and are left out.
pub fn dvcs_features(phi: f64) -> Vec<f64> {
    let r = phi.to_radians();
    vec![r - PI, 2.0 * (r - PI), r.sin(), r.cos()]
}

/// Uniform φ grid over the set's measured range.
pub fn curve_grid(set: &KinematicSet, n: usize) -> Vec<f64> {
    let lo = set
        .points
        .iter()
        .map(|p| p.phi)
        .fold(f64::INFINITY, f64::min);
    let hi = set
        .points
        .iter()
        .map(|p| p.phi)
        .fold(f64::NEG_INFINITY, f64::max);
    crate::datagen::uniform_grid(lo, hi, n.max(2))
}

enum Net {
    C(Trainer<crate::cdnn::MlpModel>),
    Q(Trainer<QdnnModel>),
}

impl Net {
    fn run(&mut self, data: &TrainingSet, epochs: usize) -> Result<()> {
        match self {
            Net::C(t) => t.run_epochs(data, epochs),
            Net::Q(t) => t.run_epochs(data, epochs),
        }
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            Net::C(t) => t.model().predict(x),
            Net::Q(t) => t.model().predict(x),
        }
    }
}

/// Trains one network on the set's points (targets scaled by their mean
/// magnitude) and, at each checkpoint epoch, projects the network's φ-curve
/// onto the model's parameters. Checkpoints must be non-decreasing.
pub fn extract_cffs_at(
    pseudo: &KinematicSet,
    model: &dyn XsecModel,
    family: Family,
    cfg: &ExtractionConfig,
    checkpoints: &[usize],
) -> Result<Vec<CffVector>> {
    if checkpoints.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(
            "checkpoints must be non-decreasing".into(),
        ));
    }
    pseudo.validate()?;
    let scale = pseudo.points.iter().map(|p| p.f.abs()).sum::<f64>() / pseudo.points.len() as f64;
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let data = TrainingSet::new(
        pseudo.points.iter().map(|p| dvcs_features(p.phi)).collect(),
        pseudo.points.iter().map(|p| p.f / scale).collect(),
    )?;
    let seed = cfg.train.seed;
    let mut net = match family {
        Family::Cdnn => Net::C(Trainer::new(
            build_default_cdnn(DVCS_FEATURES, Task::Regression, seed)?,
            cfg.train,
            Loss::Mse,
        )?),
        Family::Qdnn => Net::Q(Trainer::new(
            QdnnModel::build(DVCS_FEATURES, cfg.qdnn_layers, Task::Regression, seed)?,
            cfg.train,
            Loss::Mse,
        )?),
    };
    let grid = curve_grid(pseudo, cfg.curve_points);
    let mut done = 0;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &cp in checkpoints {
        net.run(&data, cp - done)?;
        done = cp;
        let curve = grid
            .iter()
            .map(|&phi| net.predict(&dvcs_features(phi)).map(|y| y * scale))
            .collect::<Result<Vec<_>>>()?;
        out.push(model.fit(&pseudo.kin, &grid, &curve, None)?);
    }
    Ok(out)
}

pub fn extract_cffs(
    pseudo: &KinematicSet,
    model: &dyn XsecModel,
    family: Family,
    cfg: &ExtractionConfig,
) -> Result<CffVector> {
    Ok(extract_cffs_at(pseudo, model, family, cfg, &[cfg.train.epochs])?.remove(0))
}

/// Trapezoidal ∫|F_dnn − F_true| dφ, φ in degrees.
pub fn m_dvcs(phis: &[f64], f_dnn: &[f64], f_true: &[f64]) -> Result<f64> {
    if f_dnn.len() != phis.len() || f_true.len() != phis.len() {
        return Err(Error::GridMismatch(format!(
            "{} φ values for curves of length {} and {}",
            phis.len(),
            f_dnn.len(),
            f_true.len()
        )));
    }
    perfmetrics::m_reg(Sampled::new(phis, f_true), Sampled::new(phis, f_dnn))
}

pub fn xi_dvcs(m_cdnn: f64, m_qdnn: f64) -> Result<f64> {
    perfmetrics::xi(m_cdnn, m_qdnn)
}

/// M_DVCS of a parameter vector against the pseudodata truth, on the dense
/// curve grid.
pub fn m_dvcs_of(
    model: &dyn XsecModel,
    pseudo: &Pseudodata,
    cffs: &[f64],
    curve_points: usize,
) -> Result<f64> {
    let grid = curve_grid(&pseudo.set, curve_points);
    let kin = &pseudo.set.kin;
    let fd: Vec<f64> = grid.iter().map(|&p| model.evaluate(cffs, kin, p)).collect();
    let ft: Vec<f64> = grid.iter().map(|&p| pseudo.f_true(model, p)).collect();
    m_dvcs(&grid, &fd, &ft)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub lambdas: Vec<f64>,
    pub ensemble: usize,
    pub cdnn: TrainConfig,
    pub qdnn: TrainConfig,
    pub qdnn_layers: usize,
    /// Epochs at which both networks are evaluated; the last is the final
    /// outcome used for maps and trends. The `epochs` fields of the two
    /// training configs are not consulted.
    pub checkpoints: Vec<usize>,
    pub curve_points: usize,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.5, 1.0, 2.0],
            ensemble: 3,
            cdnn: TrainConfig {
                epochs: 50,
                learning_rate: 0.01,
                ..TrainConfig::default()
            },
            qdnn: TrainConfig {
                epochs: 50,
                learning_rate: 0.05,
                ..TrainConfig::default()
            },
            qdnn_layers: 2,
            checkpoints: vec![10, 30, 50],
            curve_points: 181,
            seed: 2024,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        self.cdnn.validate()?;
        self.qdnn.validate()?;
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::InvalidArgument(
                "noise scales must be non-empty and ≥ 0".into(),
            ));
        }
        if self.ensemble == 0 {
            return Err(Error::InvalidArgument("ensemble size must be ≥ 1".into()));
        }
        if self.checkpoints.is_empty() || self.checkpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "checkpoints must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn final_epoch(&self) -> usize {
        *self.checkpoints.last().unwrap()
    }
}

/// Ensemble result for one (set, λ, checkpoint).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DvcsOutcome {
    pub set_id: String,
    pub experiment: String,
    pub q2: f64,
    pub xb: f64,
    pub t: f64,
    pub lambda: f64,
    pub epoch: usize,
    /// Seeds that trained without diverging.
    pub ensemble_size: usize,
    pub m_dvcs_cdnn: f64,
    pub m_dvcs_qdnn: f64,
    pub xi_dvcs: f64,
    pub qualifier_hat: Option<f64>,
    /// Mean σ_F/F of the real set.
    pub mean_rel_error: f64,
    /// Characteristics of the first replica's φ-distribution, when the set
    /// has enough points.
    pub metrics: Option<MetricVector>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub outcomes: Vec<DvcsOutcome>,
    pub failures: Vec<String>,
}

impl Campaign {
    /// Outcomes at one noise scale and epoch.
    pub fn slice(&self, lambda: f64, epoch: usize) -> Vec<DvcsOutcome> {
        self.outcomes
            .iter()
            .filter(|o| o.lambda == lambda && o.epoch == epoch)
            .cloned()
            .collect()
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one replica; depends on the set id, not its position.
pub fn replica_seed(base: u64, set_id: &str, lambda: f64, member: usize) -> u64 {
    splitmix(
        base ^ splitmix(fnv1a(set_id))
            ^ splitmix(lambda.to_bits()).rotate_left(17)
            ^ splitmix(member as u64 + 1).rotate_left(31),
    )
}

struct Member {
    set: usize,
    lambda: usize,
    result: Result<(Vec<f64>, Vec<f64>, Option<MetricVector>)>,
}

fn run_member(
    set: &KinematicSet,
    model: &dyn XsecModel,
    lambda: f64,
    member: usize,
    cfg: &CampaignConfig,
) -> Result<(Vec<f64>, Vec<f64>, Option<MetricVector>)> {
    let seed = replica_seed(cfg.seed, &set.set_id, lambda, member);
    let pseudo = make_pseudodata(set, model, lambda, seed)?;
    let metrics = if member == 0 && pseudo.set.points.len() >= 32 {
        characterize(&pseudo.set.phis(), &pseudo.set.values()).ok()
    } else {
        None
    };
    let mut ms = Vec::with_capacity(2);
    for (family, train) in [(Family::Cdnn, cfg.cdnn), (Family::Qdnn, cfg.qdnn)] {
        let ecfg = ExtractionConfig {
            train: TrainConfig {
                seed: splitmix(seed ^ family as u64),
                ..train
            },
            qdnn_layers: cfg.qdnn_layers,
            curve_points: cfg.curve_points,
        };
        let cffs = extract_cffs_at(&pseudo.set, model, family, &ecfg, &cfg.checkpoints)?;
        ms.push(
            cffs.iter()
                .map(|c| m_dvcs_of(model, &pseudo, c, cfg.curve_points))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let m_q = ms.pop().unwrap();
    let m_c = ms.pop().unwrap();
    Ok((m_c, m_q, metrics))
}

/// Paired extractions for every (set, λ, ensemble member), in parallel.
/// Both families see the same replica within a member. Ensemble means of M
/// are formed first and Ξ_DVCS from the means. Members whose training
/// diverges are dropped from the means and listed in `failures`.
pub fn run_campaign(
    sets: &[KinematicSet],
    model: &dyn XsecModel,
    cfg: &CampaignConfig,
) -> Result<Campaign> {
    cfg.validate()?;
    if sets.is_empty() {
        return Err(Error::InvalidArgument(
            "campaign needs at least one set".into(),
        ));
    }
    let mut order: Vec<usize> = (0..sets.len()).collect();
    order.sort_by(|&a, &b| sets[a].set_id.cmp(&sets[b].set_id));
    let jobs: Vec<(usize, usize, usize)> = order
        .iter()
        .flat_map(|&s| {
            (0..cfg.lambdas.len()).flat_map(move |l| (0..cfg.ensemble).map(move |m| (s, l, m)))
        })
        .collect();
    let members: Vec<Member> = jobs
        .par_iter()
        .map(|&(s, l, m)| Member {
            set: s,
            lambda: l,
            result: run_member(&sets[s], model, cfg.lambdas[l], m, cfg),
        })
        .collect();

    let mut campaign = Campaign::default();
    let mut grouped: BTreeMap<(usize, usize), Vec<&Member>> = BTreeMap::new();
    for m in &members {
        grouped.entry((m.set, m.lambda)).or_default().push(m);
    }
    for &s in &order {
        let set = &sets[s];
        for l in 0..cfg.lambdas.len() {
            let lambda = cfg.lambdas[l];
            let group = &grouped[&(s, l)];
            let mut ok = Vec::new();
            let mut metrics = None;
            for (k, m) in group.iter().enumerate() {
                match &m.result {
                    Ok(r) => {
                        if k == 0 {
                            metrics = r.2;
                        }
                        ok.push(r);
                    }
                    Err(e) => {
                        let msg = format!("{} λ={lambda} member {k}: {e}", set.set_id);
                        warn!("{msg}");
                        campaign.failures.push(msg);
                    }
                }
            }
            if ok.is_empty() {
                continue;
            }
            for (c, &epoch) in cfg.checkpoints.iter().enumerate() {
                let n = ok.len() as f64;
                let mc = ok.iter().map(|r| r.0[c]).sum::<f64>() / n;
                let mq = ok.iter().map(|r| r.1[c]).sum::<f64>() / n;
                let xi = match xi_dvcs(mc, mq) {
                    Ok(x) => x,
                    Err(e) => {
                        campaign
                            .failures
                            .push(format!("{} λ={lambda} epoch {epoch}: {e}", set.set_id));
                        continue;
                    }
                };
                campaign.outcomes.push(DvcsOutcome {
                    set_id: set.set_id.clone(),
                    experiment: set.experiment.clone(),
                    q2: set.kin.q2,
                    xb: set.kin.xb,
                    t: set.kin.t,
                    lambda,
                    epoch,
                    ensemble_size: ok.len(),
                    m_dvcs_cdnn: mc,
                    m_dvcs_qdnn: mq,
                    xi_dvcs: xi,
                    qualifier_hat: None,
                    mean_rel_error: set.mean_relative_error(),
                    metrics,
                });
            }
        }
        debug!("campaign: finished {}", set.set_id);
    }
    Ok(campaign)
}

/// The qualifier refit on a campaign: one corpus entry per (set, λ,
/// checkpoint) with characteristics, pooled over noise scales.
pub fn dvcs_qualifier_corpus(outcomes: &[DvcsOutcome]) -> Vec<QualifierCorpusEntry> {
    outcomes
        .iter()
        .filter_map(|o| {
            o.metrics.map(|m| QualifierCorpusEntry {
                metrics: m,
                xi: o.xi_dvcs,
                epoch: o.epoch as u32,
            })
        })
        .filter(|e| e.epoch >= 1)
        .collect()
}

/// Refits Ξ̂_DVCS through the same path as the regression qualifier. Centers
/// sit at each metric's zero crossing at the final checkpoint, so that Ξ̂
/// there is the R²-weighted mean of the univariate fits.
pub fn refit_dvcs_qualifier(
    campaign: &Campaign,
    cfg: &CampaignConfig,
) -> Result<(QualifierTable, FitDiagnostics)> {
    let corpus = dvcs_qualifier_corpus(&campaign.outcomes);
    let grid: Vec<u32> = cfg.checkpoints.iter().map(|&c| c as u32).collect();
    let last = cfg.final_epoch() as u32;
    let final_entries: Vec<QualifierCorpusEntry> =
        corpus.iter().filter(|e| e.epoch == last).cloned().collect();
    let centers = crate::qualifier::zero_crossing_centers(&final_entries)?;
    fit_qualifier(&corpus, &grid, centers)
}

/// Stores Ξ̂ on every outcome that carries characteristics.
pub fn attach_qualifier(campaign: &mut Campaign, table: &QualifierTable) {
    for o in &mut campaign.outcomes {
        o.qualifier_hat = o.metrics.map(|m| eval_qualifier(table, &m, o.epoch as f64));
    }
}

/// Ξ_DVCS and Ξ̂_DVCS surfaces for one (λ, epoch) slice of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeMap {
    pub lambda: f64,
    pub epoch: usize,
    pub xi: GridField,
    pub xi_hat: Option<GridField>,
    pub area_positive: f64,
    pub area_negative: f64,
    pub hat_area_positive: Option<f64>,
    pub sign_agreement: Option<f64>,
    pub boundary: Vec<Vec<[f64; 2]>>,
    pub hat_boundary: Vec<Vec<[f64; 2]>>,
}

/// Builds the maps from the outcomes at (λ, epoch). Ξ̂ values inside the
/// qualifier dead band count as zero when signs are compared.
pub fn regime_map(
    campaign: &Campaign,
    lambda: f64,
    epoch: usize,
    resolution: usize,
    smoothing: f64,
) -> Result<RegimeMap> {
    let slice = campaign.slice(lambda, epoch);
    let xi = build_surface(
        &ScatterField::new(
            slice.iter().map(|o| [o.q2, o.xb, o.xi_dvcs]).collect(),
            FieldKind::XiDvcs,
        ),
        resolution,
        smoothing,
    )?;
    let (area_positive, area_negative) = area_fractions(&xi)?;
    let boundary = zero_contour(&xi);
    let with_hat: Vec<[f64; 3]> = slice
        .iter()
        .filter_map(|o| o.qualifier_hat.map(|h| [o.q2, o.xb, h]))
        .collect();
    let (xi_hat, hat_area_positive, sign_agreement, hat_boundary) =
        if with_hat.len() == slice.len() && !slice.is_empty() {
            let g = build_surface(
                &ScatterField::new(with_hat, FieldKind::XiHat),
                resolution,
                smoothing,
            )?
            .map(|v| {
                if classify_sign(v, DEAD_BAND) == Favored::Boundary {
                    0.0
                } else {
                    v
                }
            });
            let agree = sign_agreement(&g, &xi)?;
            let hat_pos = area_fractions(&g)?.0;
            let contour = zero_contour(&g);
            (Some(g), Some(hat_pos), Some(agree), contour)
        } else {
            (None, None, None, Vec::new())
        };
    Ok(RegimeMap {
        lambda,
        epoch,
        xi,
        xi_hat,
        area_positive,
        area_negative,
        hat_area_positive,
        sign_agreement,
        boundary,
        hat_boundary,
    })
}

pub fn write_outcomes<W: Write>(outcomes: &[DvcsOutcome], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "set_id",
        "experiment",
        "Q2",
        "xB",
        "t",
        "lambda",
        "epoch",
        "ensemble_size",
        "m_dvcs_cdnn",
        "m_dvcs_qdnn",
        "xi_dvcs",
        "qualifier_hat",
        "mean_rel_error",
    ])?;
    for o in outcomes {
        out.write_record([
            o.set_id.clone(),
            o.experiment.clone(),
            o.q2.to_string(),
            o.xb.to_string(),
            o.t.to_string(),
            o.lambda.to_string(),
            o.epoch.to_string(),
            o.ensemble_size.to_string(),
            o.m_dvcs_cdnn.to_string(),
            o.m_dvcs_qdnn.to_string(),
            o.xi_dvcs.to_string(),
            o.qualifier_hat.map_or(String::new(), |v| v.to_string()),
            o.mean_rel_error.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Kernel width of the local linear t-trend, GeV².
pub const T_BANDWIDTH: f64 = 0.15;
/// Fewer distinct t values than this give only the raw scatter.
pub const MIN_TREND_SETS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTrend {
    /// (t, Ξ) per set, sorted by t.
    pub raw: Vec<(f64, f64)>,
    /// Smoothed samples, absent when there are too few distinct t values.
    pub smoothed: Option<Vec<(f64, f64)>>,
    pub zero_crossings: Vec<f64>,
}

fn local_linear(xs: &[f64], ys: &[f64], at: f64, h: f64) -> f64 {
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let d = x - at;
        let w = (-0.5 * (d / h).powi(2)).exp();
        s0 += w;
        s1 += w * d;
        s2 += w * d * d;
        t0 += w * y;
        t1 += w * d * y;
    }
    let det = s0 * s2 - s1 * s1;
    if det.abs() <= 1e-12 * s0 * s2.max(f64::MIN_POSITIVE) {
        t0 / s0
    } else {
        (s2 * t0 - s1 * t1) / det
    }
}

/// Ξ_DVCS against t with a Gaussian-kernel local linear smoother.
pub fn t_trend(outcomes: &[DvcsOutcome]) -> TTrend {
    trend_of(outcomes.iter().map(|o| (o.t, o.xi_dvcs)).collect(), 101)
}

fn trend_of(mut raw: Vec<(f64, f64)>, samples: usize) -> TTrend {
    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut distinct: Vec<f64> = raw.iter().map(|p| p.0).collect();
    distinct.dedup();
    if distinct.len() < MIN_TREND_SETS {
        return TTrend {
            raw,
            smoothed: None,
            zero_crossings: Vec::new(),
        };
    }
    let xs: Vec<f64> = raw.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = raw.iter().map(|p| p.1).collect();
    let grid = crate::datagen::uniform_grid(xs[0], *xs.last().unwrap(), samples);
    let smoothed: Vec<(f64, f64)> = grid
        .iter()
        .map(|&t| (t, local_linear(&xs, &ys, t, T_BANDWIDTH)))
        .collect();
    let mut zero_crossings = Vec::new();
    for w in smoothed.windows(2) {
        let ((t0, y0), (t1, y1)) = (w[0], w[1]);
        if y0 == 0.0 {
            zero_crossings.push(t0);
        } else if y0 * y1 < 0.0 {
            zero_crossings.push(t0 + (t1 - t0) * y0 / (y0 - y1));
        }
    }
    if let Some(&(t, y)) = smoothed.last() {
        if y == 0.0 {
            zero_crossings.push(t);
        }
    }
    TTrend {
        raw,
        smoothed: Some(smoothed),
        zero_crossings,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ControlMode {
    /// k equal-count bins of the per-set relative error.
    UncertaintyQuantiles(usize),
    /// The fraction f of sets with the highest local density in the
    /// normalized (Q², x_B) plane.
    DensityTopFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGroup {
    pub label: String,
    pub n_sets: usize,
    pub trend: TTrend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlReport {
    pub groups: Vec<ControlGroup>,
    pub notes: Vec<String>,
}

/// Neighbours used for the local density estimate.
pub const DENSITY_NEIGHBOURS: usize = 5;

pub fn matched_controls(outcomes: &[DvcsOutcome], mode: ControlMode) -> Result<ControlReport> {
    let mut report = ControlReport {
        groups: Vec::new(),
        notes: Vec::new(),
    };
    let push = |label: String, members: Vec<DvcsOutcome>, report: &mut ControlReport| {
        if members.len() < MIN_TREND_SETS {
            report
                .notes
                .push(format!("{label}: {} sets, omitted", members.len()));
        } else {
            report.groups.push(ControlGroup {
                label,
                n_sets: members.len(),
                trend: t_trend(&members),
            });
        }
    };
    match mode {
        ControlMode::UncertaintyQuantiles(k) => {
            if k == 0 {
                return Err(Error::InvalidArgument(
                    "need at least one quantile bin".into(),
                ));
            }
            let mut sorted = outcomes.to_vec();
            sorted.sort_by(|a, b| {
                a.mean_rel_error
                    .total_cmp(&b.mean_rel_error)
                    .then(a.set_id.cmp(&b.set_id))
            });
            let n = sorted.len();
            for b in 0..k {
                let (lo, hi) = (b * n / k, (b + 1) * n / k);
                let members = sorted[lo..hi].to_vec();
                let label = match (members.first(), members.last()) {
                    (Some(a), Some(z)) => format!(
                        "eps bin {}/{k} [{:.3}, {:.3}]",
                        b + 1,
                        a.mean_rel_error,
                        z.mean_rel_error
                    ),
                    _ => format!("eps bin {}/{k} (empty)", b + 1),
                };
                push(label, members, &mut report);
            }
        }
        ControlMode::DensityTopFraction(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "fraction must be in (0, 1], got {f}"
                )));
            }
            let n = outcomes.len();
            let keep = ((f * n as f64).ceil() as usize).min(n);
            let members = if keep == n {
                outcomes.to_vec()
            } else {
                let density = local_density(outcomes);
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| density[b].total_cmp(&density[a]).then(a.cmp(&b)));
                let mut chosen: Vec<usize> = idx[..keep].to_vec();
                chosen.sort_unstable();
                chosen.into_iter().map(|i| outcomes[i].clone()).collect()
            };
            push(format!("densest {:.0}%", 100.0 * f), members, &mut report);
        }
    }
    Ok(report)
}

/// Inverse distance to the k-th neighbour in min–max normalized (Q², x_B).
fn local_density(outcomes: &[DvcsOutcome]) -> Vec<f64> {
    let norm = |v: Vec<f64>| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        v.into_iter().map(|x| (x - lo) / span).collect::<Vec<_>>()
    };
    let q = norm(outcomes.iter().map(|o| o.q2).collect());
    let x = norm(outcomes.iter().map(|o| o.xb).collect());
    let n = outcomes.len();
    (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| ((q[i] - q[j]).powi(2) + (x[i] - x[j]).powi(2)).sqrt())
                .collect();
            if d.is_empty() {
                return 0.0;
            }
            d.sort_by(f64::total_cmp);
            1.0 / (d[(DENSITY_NEIGHBOURS - 1).min(d.len() - 1)] + 1e-12)
        })
        .collect()
}

/// Points per set in the synthetic corpus; each experiment's last set takes
/// the remainder.
pub const SYNTHETIC_SET_SIZE: usize = 36;

/// Schema-valid stand-in for the four experiments: published point counts,
/// kinematics drawn inside each envelope, and toy-model cross sections with
/// relative errors that grow with −t and Q².
pub fn synthetic_corpus(seed: u64) -> Vec<KinematicSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets = Vec::new();
    for env in &EXPERIMENTS {
        let n_sets = env.n_points / SYNTHETIC_SET_SIZE;
        for k in 0..n_sets {
            let m = if k + 1 == n_sets {
                env.n_points - SYNTHETIC_SET_SIZE * (n_sets - 1)
            } else {
                SYNTHETIC_SET_SIZE
            };
            let mut draw = |(lo, hi): (f64, f64)| {
                if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                }
            };
            let kin = Kinematics {
                e_beam: draw(env.e_beam),
                q2: draw(env.q2),
                xb: draw(env.xb),
                t: -draw(env.minus_t),
            };
            let c0 = rng.random_range(0.5..2.0);
            let params = [
                c0,
                -c0 * rng.random_range(0.15..0.45),
                c0 * rng.random_range(0.03..0.15),
            ];
            let eps = 0.03
                + 0.08 * (kin.t.abs() - 0.1) / 1.3
                + 0.012 * (kin.q2 - 1.0)
                + rng.random_range(0.0..0.02);
            let points = (0..m)
                .map(|i| {
                    let phi = (i as f64 + 0.5) * 360.0 / m as f64;
                    let truth = toy_xsec(&params, &kin, phi);
                    let sigma_f = eps * truth.abs() * rng.random_range(0.8..1.2);
                    let z: f64 = StandardNormal.sample(&mut rng);
                    PhiPoint {
                        phi,
                        f: truth + sigma_f * z,
                        sigma_f,
                    }
                })
                .collect();
            sets.push(KinematicSet {
                set_id: format!("{}/{k:03}", env.tag),
                experiment: env.tag.to_string(),
                kin,
                points,
            });
        }
    }
    sets
}

/// Seed of the bundled synthetic corpus.
pub const BUNDLED_CORPUS_SEED: u64 = 3885;

pub fn bundled_corpus() -> Vec<KinematicSet> {
    synthetic_corpus(BUNDLED_CORPUS_SEED)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kin() -> Kinematics {
        Kinematics {
            e_beam: 5.75,
            q2: 2.0,
            xb: 0.36,
            t: -0.3,
        }
    }

    fn toy_set(params: [f64; 3], m: usize) -> KinematicSet {
        let k = kin();
        KinematicSet {
            set_id: "toy/000".into(),
            experiment: "toy".into(),
            kin: k,
            points: (0..m)
                .map(|i| {
                    let phi = (i as f64 + 0.5) * 360.0 / m as f64;
                    let f = toy_xsec(&params, &k, phi);
                    PhiPoint {
                        phi,
                        f,
                        sigma_f: 0.05 * f.abs(),
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn toy_model_properties() {
        let k = kin();
        let flat: Vec<f64> = (0..36)
            .map(|i| toy_xsec(&[1.2, 0.0, 0.0], &k, i as f64 * 10.0))
            .collect();
        assert!(flat.iter().all(|v| (v - flat[0]).abs() < 1e-15));
        let grid: Vec<f64> = (0..360).map(|i| i as f64).collect();
        let vals: Vec<f64> = grid
            .iter()
            .map(|&p| toy_xsec(&[1.0, -0.4, 0.1], &k, p))
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let integral: f64 = vals.iter().map(|v| v - mean).sum();
        assert!(integral.abs() < 1e-10);
    }

    #[test]
    fn toy_fit_recovers_parameters() {
        let set = toy_set([1.3, -0.35, 0.08], 24);
        let p = ToyHarmonic
            .fit(&set.kin, &set.phis(), &set.values(), Some(&set.sigmas()))
            .unwrap();
        for (a, b) in p.iter().zip([1.3, -0.35, 0.08]) {
            assert!((a - b).abs() < 1e-6);
        }
        // Normal equations, solved by hand through nalgebra's LU.
        let a = ToyHarmonic::envelope(&set.kin);
        let x = DMatrix::from_fn(24, 3, |i, k| a * ToyHarmonic::basis(set.points[i].phi)[k]);
        let y = DVector::from_vec(set.values());
        let oracle = (x.transpose() * &x)
            .lu()
            .solve(&(x.transpose() * y))
            .unwrap();
        for k in 0..3 {
            assert!((p[k] - oracle[k]).abs() < 1e-9);
        }
        assert!(ToyHarmonic
            .fit(&set.kin, &[10.0, 10.0, 10.0], &[1.0, 1.0, 1.0], None)
            .is_err());
    }

    /// The generic Gauss–Newton path agrees with the linear solve.
    #[test]
    fn default_fit_matches_linear_fit() {
        struct Generic;
        impl XsecModel for Generic {
            fn name(&self) -> &str {
                "generic"
            }
            fn n_params(&self) -> usize {
                3
            }
            fn evaluate(&self, p: &[f64], kin: &Kinematics, phi: f64) -> f64 {
                toy_xsec(p, kin, phi)
            }
        }
        let set = toy_set([0.9, -0.2, 0.05], 30);
        let p = Generic
            .fit(&set.kin, &set.phis(), &set.values(), None)
            .unwrap();
        for (a, b) in p.iter().zip([0.9, -0.2, 0.05]) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn pseudodata_contract() {
        let set = toy_set([1.0, -0.3, 0.1], 36);
        let p0 = make_pseudodata(&set, &ToyHarmonic, 0.0, 1).unwrap();
        for pt in &p0.set.points {
            assert!((pt.f - p0.f_true(&ToyHarmonic, pt.phi)).abs() < 1e-14);
        }
        let a = make_pseudodata(&set, &ToyHarmonic, 1.0, 9).unwrap();
        assert_eq!(a, make_pseudodata(&set, &ToyHarmonic, 1.0, 9).unwrap());
        let b = make_pseudodata(&set, &ToyHarmonic, 2.0, 9).unwrap();
        assert_eq!(b.set.points[3].sigma_f, 2.0 * set.points[3].sigma_f);
        assert!(make_pseudodata(&set, &ToyHarmonic, -1.0, 9).is_err());
    }

    #[test]
    fn replica_mean_converges() {
        let set = toy_set([1.0, -0.3, 0.1], 12);
        let lambda = 1.5;
        let reps = 1000;
        let mut sums = vec![0.0; 12];
        let mut truth = vec![];
        for s in 0..reps {
            let p = make_pseudodata(&set, &ToyHarmonic, lambda, 1000 + s).unwrap();
            for (acc, pt) in sums.iter_mut().zip(&p.set.points) {
                *acc += pt.f;
            }
            truth = p
                .set
                .points
                .iter()
                .map(|pt| p.f_true(&ToyHarmonic, pt.phi))
                .collect();
        }
        for i in 0..12 {
            let bound = 3.0 * lambda * set.points[i].sigma_f / (reps as f64).sqrt();
            assert!(
                (sums[i] / reps as f64 - truth[i]).abs() < bound,
                "point {i}"
            );
        }
    }

    #[test]
    fn m_dvcs_cases() {
        let phis: Vec<f64> = (0..=360).map(|i| i as f64).collect();
        let a: Vec<f64> = phis.iter().map(|p| p.to_radians().cos()).collect();
        assert_eq!(m_dvcs(&phis, &a, &a).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|v| v + 0.25).collect();
        assert!((m_dvcs(&phis, &b, &a).unwrap() - 90.0).abs() < 1e-9);
        assert!(m_dvcs(&phis[1..], &b, &a).is_err());
        // Gap linear on [0, 180] and on [180, 360], breakpoint on the grid.
        let coarse: Vec<f64> = (0..=8).map(|i| i as f64 * 45.0).collect();
        let gap = |p: f64| {
            if p <= 180.0 {
                p / 180.0
            } else {
                2.0 - p / 180.0
            }
        };
        let zero = vec![0.0; coarse.len()];
        let g: Vec<f64> = coarse.iter().map(|&p| gap(p)).collect();
        let fine: Vec<f64> = (0..=36000).map(|i| i as f64 / 100.0).collect();
        let gf: Vec<f64> = fine.iter().map(|&p| gap(p)).collect();
        let zf = vec![0.0; fine.len()];
        let c = m_dvcs(&coarse, &g, &zero).unwrap();
        let f = m_dvcs(&fine, &gf, &zf).unwrap();
        assert!((c - f).abs() <= 1e-6 * f);
        assert_eq!(xi_dvcs(2.0, 1.0).unwrap(), 1.0);
        assert_eq!(xi_dvcs(1.0, 1.0).unwrap(), 0.0);
    }

    fn small_cfg(epochs: usize) -> ExtractionConfig {
        ExtractionConfig {
            train: TrainConfig {
                epochs,
                learning_rate: 0.02,
                seed: 3,
                ..TrainConfig::default()
            },
            qdnn_layers: 1,
            curve_points: 91,
        }
    }

    #[test]
    fn zero_epoch_extraction_is_the_untrained_projection() {
        let set = toy_set([1.0, -0.3, 0.1], 16);
        let cfg = small_cfg(0);
        for fam in [Family::Cdnn, Family::Qdnn] {
            let a = extract_cffs(&set, &ToyHarmonic, fam, &cfg).unwrap();
            assert_eq!(a, extract_cffs(&set, &ToyHarmonic, fam, &cfg).unwrap());
            assert_eq!(a.len(), 3);
        }
        let staged =
            extract_cffs_at(&set, &ToyHarmonic, Family::Cdnn, &small_cfg(5), &[0, 2, 5]).unwrap();
        assert_eq!(
            staged[0],
            extract_cffs(&set, &ToyHarmonic, Family::Cdnn, &cfg).unwrap()
        );
        assert_eq!(
            staged[2],
            extract_cffs(&set, &ToyHarmonic, Family::Cdnn, &small_cfg(5)).unwrap()
        );
    }

    #[test]
    fn ingest_round_trip_and_errors() {
        let sets = synthetic_corpus(5);
        let mut buf = Vec::new();
        write_sets(&sets, &mut buf).unwrap();
        let (back, report) = ingest_reader(buf.as_slice()).unwrap();
        assert_eq!(back, sets);
        assert_eq!(report.total_points, TOTAL_POINTS);

        let (empty, r) = ingest_reader(&b""[..]).unwrap();
        assert!(empty.is_empty());
        assert_eq!(r.total_points, 0);

        let head = CSV_HEADER.join(",");
        let bad = format!("{head}\nX,5.75,2.0,0.3,-0.2,10,1.0,0.1\nX,5.75,2.0,0.3,-0.2,20,1.0,0\n");
        assert!(matches!(
            ingest_reader(bad.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        let dup =
            format!("{head}\nX,5.75,2.0,0.3,-0.2,10,1.0,0.1\nX,5.75,2.0,0.3,-0.2,10,1.1,0.1\n");
        assert!(matches!(
            ingest_reader(dup.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        let junk = format!("{head}\nX,5.75,abc,0.3,-0.2,10,1.0,0.1\n");
        assert!(matches!(
            ingest_reader(junk.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            ingest_reader("experiment,E,Q2\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn bundled_corpus_matches_published_counts() {
        let sets = bundled_corpus();
        let report = validate_sets(&sets, true);
        assert!(report.ok(), "{:?}", report.issues);
        let counts: Vec<usize> = EXPERIMENTS
            .iter()
            .map(|e| report.ingest.points_per_experiment[e.tag])
            .collect();
        assert_eq!(counts, vec![1080, 404, 468, 1933]);
        assert_eq!(report.ingest.total_points, 3885);
        assert!(sets.iter().all(|s| s.points.len() >= 32));
        let only_first: Vec<KinematicSet> = sets
            .iter()
            .filter(|s| s.experiment == "HallA_E12-06-114")
            .cloned()
            .collect();
        assert_eq!(IngestReport::of(&only_first).total_points, 1080);
    }

    fn outcome(t: f64, xi: f64, eps: f64, q2: f64, xb: f64, id: usize) -> DvcsOutcome {
        DvcsOutcome {
            set_id: format!("s/{id:03}"),
            experiment: "s".into(),
            q2,
            xb,
            t,
            lambda: 1.0,
            epoch: 30,
            ensemble_size: 1,
            m_dvcs_cdnn: 1.0,
            m_dvcs_qdnn: 1.0,
            xi_dvcs: xi,
            qualifier_hat: None,
            mean_rel_error: eps,
            metrics: None,
        }
    }

    #[test]
    fn t_trend_cases() {
        let flat: Vec<DvcsOutcome> = (0..20)
            .map(|i| outcome(-0.1 - 0.07 * i as f64, 0.4, 0.1, 2.0, 0.3, i))
            .collect();
        let tr = t_trend(&flat);
        assert!(tr
            .smoothed
            .as_ref()
            .unwrap()
            .iter()
            .all(|p| (p.1 - 0.4).abs() < 1e-12));
        assert!(tr.zero_crossings.is_empty());

        let lin: Vec<DvcsOutcome> = (0..25)
            .map(|i| {
                let t = -0.05 - 0.06 * i as f64;
                outcome(t, t + 0.8, 0.1, 2.0, 0.3, i)
            })
            .collect();
        let tr = t_trend(&lin);
        assert_eq!(tr.zero_crossings.len(), 1);
        assert!((tr.zero_crossings[0] + 0.8).abs() < 0.05);

        let few: Vec<DvcsOutcome> = (0..4)
            .map(|i| outcome(-0.2 * i as f64 - 0.1, 1.0, 0.1, 2.0, 0.3, i))
            .collect();
        assert!(t_trend(&few).smoothed.is_none());
    }

    #[test]
    fn matched_control_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let outs: Vec<DvcsOutcome> = (0..40)
            .map(|i| {
                let eps = 0.05 * (1 + i % 5) as f64;
                outcome(
                    -rng.random_range(0.1..1.4),
                    3.0 * eps,
                    eps,
                    rng.random_range(1.0..4.0),
                    rng.random_range(0.1..0.6),
                    i,
                )
            })
            .collect();
        let full = t_trend(&outs);
        let one = matched_controls(&outs, ControlMode::UncertaintyQuantiles(1)).unwrap();
        assert_eq!(one.groups[0].trend, full);
        let all = matched_controls(&outs, ControlMode::DensityTopFraction(1.0)).unwrap();
        assert_eq!(all.groups[0].trend, full);
        let bins = matched_controls(&outs, ControlMode::UncertaintyQuantiles(5)).unwrap();
        assert_eq!(bins.groups.len(), 5);
        for g in &bins.groups {
            let s = g.trend.smoothed.as_ref().unwrap();
            let lo = s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let hi = s.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            assert!(hi - lo < 1e-9, "{}", g.label);
        }
        let tiny = matched_controls(&outs, ControlMode::UncertaintyQuantiles(20)).unwrap();
        assert!(tiny.groups.is_empty());
        assert_eq!(tiny.notes.len(), 20);
        let dense = matched_controls(&outs, ControlMode::DensityTopFraction(0.5)).unwrap();
        assert_eq!(dense.groups[0].n_sets, 20);
    }

    #[test]
    fn campaign_invariances() {
        let sets: Vec<KinematicSet> = bundled_corpus().into_iter().step_by(40).collect();
        let cfg = CampaignConfig {
            lambdas: vec![0.5, 2.0],
            ensemble: 1,
            cdnn: TrainConfig {
                epochs: 3,
                learning_rate: 0.01,
                ..TrainConfig::default()
            },
            qdnn: TrainConfig {
                epochs: 3,
                learning_rate: 0.05,
                ..TrainConfig::default()
            },
            checkpoints: vec![1, 3],
            curve_points: 31,
            ..CampaignConfig::default()
        };
        let a = run_campaign(&sets, &ToyHarmonic, &cfg).unwrap();
        assert_eq!(a.outcomes.len(), sets.len() * 2 * 2);
        let mut reversed = sets.clone();
        reversed.reverse();
        assert_eq!(run_campaign(&reversed, &ToyHarmonic, &cfg).unwrap(), a);
        for o in &a.outcomes {
            assert_eq!(o.xi_dvcs, o.m_dvcs_cdnn / o.m_dvcs_qdnn - 1.0);
        }
        // One member, run by hand, equals the ensemble of size one.
        let s = &sets[0];
        let (mc, mq, _) = run_member(s, &ToyHarmonic, 0.5, 0, &cfg).unwrap();
        let o = a
            .outcomes
            .iter()
            .find(|o| o.set_id == s.set_id && o.lambda == 0.5 && o.epoch == 3)
            .unwrap();
        assert_eq!((o.m_dvcs_cdnn, o.m_dvcs_qdnn), (mc[1], mq[1]));
    }
}
