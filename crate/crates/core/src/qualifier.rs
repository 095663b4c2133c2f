//! The composite qualifier Ξ̂: a per-epoch linear predictor of Ξ from the five
//! data characteristics, its published coefficient table, and a refit from
//! measured corpora.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::complexity::{MetricVector, METRIC_NAMES};
use crate::error::{Error, Result};

/// One metric's centering offset and epoch polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualifierRow {
    pub metric: String,
    /// X_j = metric − center.
    pub center: f64,
    /// β_j0, β_j1, … in increasing powers of the epoch.
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QualifierTableRaw")]
pub struct QualifierTable {
    pub version: u32,
    pub alpha: f64,
    pub rows: Vec<QualifierRow>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QualifierTableRaw {
    #[serde(default = "default_version")]
    version: u32,
    alpha: f64,
    rows: Vec<QualifierRow>,
}

fn default_version() -> u32 {
    1
}

impl TryFrom<QualifierTableRaw> for QualifierTable {
    type Error = Error;

    fn try_from(raw: QualifierTableRaw) -> Result<Self> {
        Self::new(raw.alpha, raw.rows).map(|t| Self {
            version: raw.version,
            ..t
        })
    }
}

/// Polynomial degree of the exponentially damped nonlinearity row.
pub const ROW1_DEGREE: usize = 2;
/// Polynomial degree of the other four rows.
pub const ROW_DEGREE: usize = 4;

const TABLE_JSON: &str = include_str!("../data/qualifier_table_v1.json");

impl QualifierTable {
    pub fn new(alpha: f64, rows: Vec<QualifierRow>) -> Result<Self> {
        if rows.len() != 5 {
            return Err(Error::InvalidArgument(format!(
                "a qualifier table has 5 rows, got {}",
                rows.len()
            )));
        }
        for (j, row) in rows.iter().enumerate() {
            let want = if j == 0 {
                ROW1_DEGREE + 1
            } else {
                ROW_DEGREE + 1
            };
            if row.coefficients.len() != want {
                return Err(Error::InvalidArgument(format!(
                    "row {} ({}) needs {want} coefficients, got {}",
                    j + 1,
                    row.metric,
                    row.coefficients.len()
                )));
            }
            if row.metric != METRIC_NAMES[j] {
                return Err(Error::InvalidArgument(format!(
                    "row {} must be '{}', got '{}'",
                    j + 1,
                    METRIC_NAMES[j],
                    row.metric
                )));
            }
            if !row.center.is_finite() || row.coefficients.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "row {} is not finite",
                    j + 1
                )));
            }
        }
        if !alpha.is_finite() {
            return Err(Error::InvalidArgument("alpha is not finite".into()));
        }
        Ok(Self {
            version: 1,
            alpha,
            rows,
        })
    }

    pub fn centers(&self) -> [f64; 5] {
        std::array::from_fn(|j| self.rows[j].center)
    }

    /// Per-metric effective slope at epoch `n`: the factor multiplying X_j.
    pub fn slopes_at(&self, n: f64) -> [f64; 5] {
        std::array::from_fn(|j| {
            let p = horner(&self.rows[j].coefficients, n);
            if j == 0 {
                (-self.alpha * n).exp() * p
            } else {
                p
            }
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn horner(coeffs: &[f64], n: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * n + c)
}

/// The published coefficient table.
pub fn published_table() -> QualifierTable {
    QualifierTable::from_json(TABLE_JSON).expect("bundled qualifier table is valid")
}

/// Ξ̂(n, X) = e^{−αn} Σ_i β_1i n^i X_1 + Σ_{j≥2} Σ_i β_ji n^i X_j.
pub fn eval_qualifier(table: &QualifierTable, metrics: &MetricVector, n: f64) -> f64 {
    let x = metrics.to_array();
    let slopes = table.slopes_at(n);
    (0..5)
        .map(|j| slopes[j] * (x[j] - table.rows[j].center))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Favored {
    Qdnn,
    Cdnn,
    Boundary,
}

/// |Ξ̂| below this counts as on the boundary.
pub const DEAD_BAND: f64 = 1e-9;

pub fn sign_of_qualifier(table: &QualifierTable, metrics: &MetricVector, n: f64) -> Favored {
    classify_sign(eval_qualifier(table, metrics, n), DEAD_BAND)
}

pub fn classify_sign(value: f64, dead_band: f64) -> Favored {
    if value.abs() < dead_band {
        Favored::Boundary
    } else if value > 0.0 {
        Favored::Qdnn
    } else {
        Favored::Cdnn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualifierCorpusEntry {
    pub metrics: MetricVector,
    pub xi: f64,
    pub epoch: u32,
}

/// One univariate regression Ξ ≈ a + s·X_j at a fixed epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRegression {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// R²_j / Σ_k R²_k.
    pub weight: f64,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochDiagnostics {
    pub epoch: u32,
    pub n_entries: usize,
    pub regressions: [MetricRegression; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub epochs: Vec<EpochDiagnostics>,
    /// Degree actually fitted per row (capped by the number of epochs).
    pub degrees: [usize; 5],
    /// RMS of Ξ̂ − Ξ over the corpus entries used in the fit.
    pub rms_residual: f64,
    pub warnings: Vec<String>,
}

/// Minimum distinct corpus entries required at each epoch.
pub const MIN_ENTRIES_PER_EPOCH: usize = 6;

fn univariate(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    if sxx <= (1e-12 * scale).powi(2) * n {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).min(1.0)
    } else {
        0.0
    };
    Some((slope, my - slope * mx, r2))
}

/// Least-squares polynomial of the given degree through (n, y), computed in
/// the scaled variable n / n_max and mapped back to raw powers of n.
fn poly_fit(ns: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>> {
    let scale = ns.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let a = DMatrix::from_fn(ns.len(), degree + 1, |r, c| (ns[r] / scale).powi(c as i32));
    let b = DVector::from_column_slice(ys);
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::FitFailed(e.to_string()))?;
    Ok((0..=degree)
        .map(|i| sol[i] / scale.powi(i as i32))
        .collect())
}

/// Regression-of-regressions refit.
///
/// At each epoch of `epoch_grid`, Ξ is regressed on each centered metric X_j
/// separately, giving a slope s_j and R²_j. The products s_j·w_j with
/// w_j = R²_j / Σ_k R²_k are then fitted across epochs: e^{−αn}·(quadratic)
/// for the nonlinearity row, with α from a least-squares line through
/// ln|s_1 w_1| against n, and quartics for the rest. Polynomial degrees are
/// capped at (number of epochs − 1) and the unused coefficients set to zero.
///
/// The weighted sum of univariate slopes equals the true multivariate
/// response only when the metrics move together along one direction or a
/// single metric varies; `rms_residual` in the diagnostics reports how well
/// the result reproduces the corpus.
pub fn fit_qualifier(
    corpus: &[QualifierCorpusEntry],
    epoch_grid: &[u32],
    centers: [f64; 5],
) -> Result<(QualifierTable, FitDiagnostics)> {
    let mut by_epoch: BTreeMap<u32, Vec<&QualifierCorpusEntry>> = BTreeMap::new();
    for e in corpus {
        if e.epoch == 0 {
            return Err(Error::InvalidArgument("corpus epochs start at 1".into()));
        }
        if !e.xi.is_finite() || !e.metrics.is_finite() {
            return Err(Error::InvalidArgument("corpus entry is not finite".into()));
        }
        if epoch_grid.contains(&e.epoch) {
            by_epoch.entry(e.epoch).or_default().push(e);
        }
    }
    if by_epoch.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 distinct epochs with data, got {}",
            by_epoch.len()
        )));
    }
    if let Some((ep, es)) = by_epoch
        .iter()
        .find(|(_, es)| es.len() < MIN_ENTRIES_PER_EPOCH)
    {
        return Err(Error::InvalidArgument(format!(
            "epoch {ep} has {} entries, need at least {MIN_ENTRIES_PER_EPOCH}",
            es.len()
        )));
    }

    let mut warnings = Vec::new();
    let mut epochs = Vec::new();
    let mut weighted: [Vec<f64>; 5] = Default::default();
    let mut ns = Vec::new();
    for (&epoch, entries) in &by_epoch {
        let y: Vec<f64> = entries.iter().map(|e| e.xi).collect();
        let mut regs = [MetricRegression {
            slope: 0.0,
            intercept: 0.0,
            r2: 0.0,
            weight: 0.0,
            excluded: true,
        }; 5];
        for j in 0..5 {
            let x: Vec<f64> = entries
                .iter()
                .map(|e| e.metrics.to_array()[j] - centers[j])
                .collect();
            match univariate(&x, &y) {
                Some((slope, intercept, r2)) => {
                    regs[j] = MetricRegression {
                        slope,
                        intercept,
                        r2,
                        weight: 0.0,
                        excluded: false,
                    }
                }
                None => {
                    let msg = format!(
                        "epoch {epoch}: {} is constant across the corpus; excluded",
                        METRIC_NAMES[j]
                    );
                    warn!("{msg}");
                    warnings.push(msg);
                }
            }
        }
        let total: f64 = regs.iter().map(|r| r.r2).sum();
        for (j, r) in regs.iter_mut().enumerate() {
            r.weight = if total > 0.0 { r.r2 / total } else { 0.0 };
            weighted[j].push(r.slope * r.weight);
        }
        ns.push(epoch as f64);
        epochs.push(EpochDiagnostics {
            epoch,
            n_entries: entries.len(),
            regressions: regs,
        });
    }

    let max_degree = ns.len() - 1;
    let mut degrees = [0; 5];
    let mut rows = Vec::with_capacity(5);

    // Row 1: exponential envelope, then a quadratic in the undamped factor.
    let ys1 = &weighted[0];
    let logs: Vec<(f64, f64)> = ns
        .iter()
        .zip(ys1)
        .filter(|(_, y)| y.abs() > 0.0)
        .map(|(&n, y)| (n, y.abs().ln()))
        .collect();
    let alpha = if logs.len() >= 2 {
        let line = poly_fit(
            &logs.iter().map(|p| p.0).collect::<Vec<_>>(),
            &logs.iter().map(|p| p.1).collect::<Vec<_>>(),
            1,
        )?;
        -line[1]
    } else {
        0.0
    };
    degrees[0] = ROW1_DEGREE.min(max_degree);
    let undamped: Vec<f64> = ns
        .iter()
        .zip(ys1)
        .map(|(n, y)| y * (alpha * n).exp())
        .collect();
    let mut c1 = poly_fit(&ns, &undamped, degrees[0])?;
    c1.resize(ROW1_DEGREE + 1, 0.0);
    rows.push(QualifierRow {
        metric: METRIC_NAMES[0].into(),
        center: centers[0],
        coefficients: c1,
    });
    for j in 1..5 {
        degrees[j] = ROW_DEGREE.min(max_degree);
        let mut c = poly_fit(&ns, &weighted[j], degrees[j])?;
        c.resize(ROW_DEGREE + 1, 0.0);
        rows.push(QualifierRow {
            metric: METRIC_NAMES[j].into(),
            center: centers[j],
            coefficients: c,
        });
    }
    let table = QualifierTable::new(alpha, rows)?;

    let used: Vec<&&QualifierCorpusEntry> = by_epoch.values().flatten().collect();
    let sq: f64 = used
        .iter()
        .map(|e| (eval_qualifier(&table, &e.metrics, e.epoch as f64) - e.xi).powi(2))
        .sum();
    let rms_residual = (sq / used.len() as f64).sqrt();
    Ok((
        table,
        FitDiagnostics {
            epochs,
            degrees,
            rms_residual,
            warnings,
        },
    ))
}

/// Centering offsets at which each metric's pooled regression line crosses
/// Ξ = 0, so that the sign of each term in Ξ̂ follows its own fitted trend.
/// A metric with no spread or no slope keeps its corpus mean.
pub fn zero_crossing_centers(corpus: &[QualifierCorpusEntry]) -> Result<[f64; 5]> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("empty corpus".into()));
    }
    let y: Vec<f64> = corpus.iter().map(|e| e.xi).collect();
    let mut centers = [0.0; 5];
    for (j, c) in centers.iter_mut().enumerate() {
        let x: Vec<f64> = corpus.iter().map(|e| e.metrics.to_array()[j]).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        *c = match univariate(&x, &y) {
            Some((slope, intercept, _)) if slope != 0.0 && (-intercept / slope).is_finite() => {
                -intercept / slope
            }
            _ => mean,
        };
    }
    Ok(centers)
}

/// RMS difference between two tables' predictions over a corpus.
pub fn prediction_rms(
    a: &QualifierTable,
    b: &QualifierTable,
    corpus: &[QualifierCorpusEntry],
) -> f64 {
    let sq: f64 = corpus
        .iter()
        .map(|e| {
            let n = e.epoch as f64;
            (eval_qualifier(a, &e.metrics, n) - eval_qualifier(b, &e.metrics, n)).powi(2)
        })
        .sum();
    (sq / corpus.len() as f64).sqrt()
}
