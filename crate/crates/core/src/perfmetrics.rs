//! Confusion matrices, classification efficiency, the integrated regression
//! error `M_reg` and the outperformance ratio Ξ.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are the true class, columns the predicted class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn new(counts: [[u64; 2]; 2]) -> Self {
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn column_sum(&self, j: usize) -> u64 {
        self.counts[0][j] + self.counts[1][j]
    }

    pub fn accuracy(&self) -> f64 {
        (self.counts[0][0] + self.counts[1][1]) as f64 / self.total() as f64
    }

    /// Swap the class labels.
    pub fn relabeled(&self) -> Self {
        let c = self.counts;
        Self::new([[c[1][1], c[1][0]], [c[0][1], c[0][0]]])
    }
}

pub fn confusion(preds: &[u8], truth: &[u8]) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: preds.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(truth) {
        if p > 1 || t > 1 {
            return Err(Error::InvalidArgument(format!(
                "labels must be 0 or 1, got pred={p} truth={t}"
            )));
        }
        cm.counts[t as usize][p as usize] += 1;
    }
    Ok(cm)
}

/// Macro-averaged precision: the mean over predicted classes of the fraction
/// of that column that is correct.
pub fn classification_efficiency(cm: &ConfusionMatrix) -> Result<f64> {
    let mut sum = 0.0;
    for j in 0..2 {
        let col = cm.column_sum(j);
        if col == 0 {
            return Err(Error::EmptyPredictedClass(j));
        }
        sum += cm.counts[j][j] as f64 / col as f64;
    }
    Ok(sum / 2.0)
}

/// A function known at sample points.
#[derive(Debug, Clone, Copy)]
pub struct Sampled<'a> {
    pub xs: &'a [f64],
    pub ys: &'a [f64],
}

impl<'a> Sampled<'a> {
    pub fn new(xs: &'a [f64], ys: &'a [f64]) -> Self {
        Self { xs, ys }
    }
}

/// Trapezoidal integral of |y_dnn − y_true| over the shared grid.
pub fn m_reg(truth: Sampled<'_>, dnn: Sampled<'_>) -> Result<f64> {
    if truth.xs.len() != truth.ys.len() || dnn.xs.len() != dnn.ys.len() {
        return Err(Error::GridMismatch("x and y lengths differ".into()));
    }
    if truth.xs != dnn.xs {
        return Err(Error::GridMismatch(format!(
            "curves sampled on different grids ({} vs {} points)",
            truth.xs.len(),
            dnn.xs.len()
        )));
    }
    if truth.xs.len() < 2 {
        return Err(Error::GridMismatch("need at least 2 grid points".into()));
    }
    let gap: Vec<f64> = truth
        .ys
        .iter()
        .zip(dnn.ys)
        .map(|(a, b)| (a - b).abs())
        .collect();
    Ok(truth
        .xs
        .windows(2)
        .zip(gap.windows(2))
        .map(|(x, g)| 0.5 * (x[1] - x[0]) * (g[0] + g[1]))
        .sum())
}

/// Ξ = M_cdnn / M_qdnn − 1; positive when the quantum model is closer.
pub fn xi(m_cdnn: f64, m_qdnn: f64) -> Result<f64> {
    if !(m_qdnn > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "quantum error must be positive, got {m_qdnn}"
        )));
    }
    Ok(m_cdnn / m_qdnn - 1.0)
}

/// One line of the experiment ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutperformanceRecord {
    pub dataset: String,
    pub sigma: f64,
    pub seed: u64,
    pub epoch: usize,
    pub m_cdnn: f64,
    pub m_qdnn: f64,
    pub xi: f64,
}

impl OutperformanceRecord {
    pub fn new(
        dataset: impl Into<String>,
        sigma: f64,
        seed: u64,
        epoch: usize,
        m_cdnn: f64,
        m_qdnn: f64,
    ) -> Result<Self> {
        if !(m_cdnn >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "classical error must be ≥ 0, got {m_cdnn}"
            )));
        }
        Ok(Self {
            dataset: dataset.into(),
            sigma,
            seed,
            epoch,
            m_cdnn,
            m_qdnn,
            xi: xi(m_cdnn, m_qdnn)?,
        })
    }
}

pub fn write_records<W: Write>(records: &[OutperformanceRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<OutperformanceRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        out.push(rec.map_err(|e: csv::Error| Error::Parse {
            line: i + 2,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
