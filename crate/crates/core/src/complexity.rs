//! Five scalar characteristics of a sampled 1-D dataset: nonlinearity,
//! frequency complexity, box-counting dimension, KSG mutual information and
//! spectral-centroid complexity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five characteristics of one dataset, in qualifier order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub nonlinearity: f64,
    pub frequency_complexity: f64,
    pub fractal_dimension: f64,
    pub mutual_information: f64,
    pub fourier_complexity: f64,
}

impl MetricVector {
    pub fn to_array(&self) -> [f64; 5] {
        [
            self.nonlinearity,
            self.frequency_complexity,
            self.fractal_dimension,
            self.mutual_information,
            self.fourier_complexity,
        ]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            nonlinearity: a[0],
            frequency_complexity: a[1],
            fractal_dimension: a[2],
            mutual_information: a[3],
            fourier_complexity: a[4],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

pub const METRIC_NAMES: [&str; 5] = [
    "nonlinearity",
    "frequency_complexity",
    "fractal_dimension",
    "mutual_information",
    "fourier_complexity",
];

fn check_lengths(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample".into()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// 1 − R² of the least-squares line of `ys` on `xs`, clamped to [0, 1].
pub fn nonlinearity(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_lengths(xs, ys)?;
    if xs.len() < 3 {
        return Err(Error::InvalidArgument("need at least 3 points".into()));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all x values are equal".into()));
    }
    if syy <= f64::EPSILON * f64::EPSILON * ys.len() as f64 * my.abs().max(1e-300).powi(2)
        || syy == 0.0
    {
        return Ok(0.0);
    }
    let r2 = sxy * sxy / (sxx * syy);
    Ok((1.0 - r2).clamp(0.0, 1.0))
}

/// Mean-subtracted copy, or `None` when the sequence carries no variation
/// beyond rounding.
fn centered(ys: &[f64]) -> Option<Vec<f64>> {
    let m = mean(ys);
    let c: Vec<f64> = ys.iter().map(|y| y - m).collect();
    let scale = ys.iter().fold(0.0f64, |a, y| a.max(y.abs()));
    let peak = c.iter().fold(0.0f64, |a, y| a.max(y.abs()));
    if scale == 0.0 || peak <= 64.0 * f64::EPSILON * scale {
        None
    } else {
        Some(c)
    }
}

fn power_spectrum(signal: &[f64], len: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    buf.iter().map(|c| c.norm_sqr()).collect()
}

/// Share of the strongest positive-frequency bin a bin must exceed to count
/// as active.
pub const ACTIVE_BIN_FRACTION: f64 = 0.01;

/// Number of positive-frequency bins (1..=n/2) whose power exceeds 1% of the
/// strongest such bin.
pub fn frequency_complexity(ys: &[f64]) -> Result<f64> {
    if ys.len() < 8 {
        return Err(Error::InvalidArgument("need at least 8 points".into()));
    }
    let Some(c) = centered(ys) else {
        return Ok(0.0);
    };
    let power = power_spectrum(&c, c.len());
    let positive = &power[1..=c.len() / 2];
    let peak = positive.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(0.0);
    }
    Ok(positive
        .iter()
        .filter(|&&p| p > ACTIVE_BIN_FRACTION * peak)
        .count() as f64)
}

/// Box sizes 2^-k for k in this range.
pub const BOX_LEVELS: std::ops::RangeInclusive<u32> = 1..=6;

/// Box-counting dimension of the point set after normalizing each axis to
/// [0, 1]. An axis with no spread collapses to 0.
pub fn fractal_dimension(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_lengths(xs, ys)?;
    if xs.len() < 32 {
        return Err(Error::InvalidArgument("need at least 32 points".into()));
    }
    let unit = |v: &[f64]| -> Option<Vec<f64>> {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            Some(v.iter().map(|x| (x - lo) / (hi - lo)).collect())
        } else {
            None
        }
    };
    let (ux, uy) = match (unit(xs), unit(ys)) {
        (None, None) => return Err(Error::Degenerate("all points coincide".into())),
        (a, b) => (
            a.unwrap_or_else(|| vec![0.0; xs.len()]),
            b.unwrap_or_else(|| vec![0.0; ys.len()]),
        ),
    };
    let mut logs = Vec::new();
    for k in BOX_LEVELS {
        let cells = 1u64 << k;
        let idx = |v: f64| ((v * cells as f64) as u64).min(cells - 1);
        let mut boxes: Vec<u64> = ux
            .iter()
            .zip(&uy)
            .map(|(&x, &y)| idx(x) * cells + idx(y))
            .collect();
        boxes.sort_unstable();
        boxes.dedup();
        logs.push(((cells as f64).ln(), (boxes.len() as f64).ln()));
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

pub const KSG_K: usize = 3;
const KSG_JITTER: f64 = 1e-10;
const KSG_JITTER_SEED: u64 = 0x6b73_67;

/// ψ(n) for positive integers.
fn digamma_int(n: usize) -> f64 {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    -EULER_GAMMA + (1..n).map(|k| 1.0 / k as f64).sum::<f64>()
}

/// Normalized ranks in [0, 1]; ties share their mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0;
        for &o in &order[i..=j] {
            r[o] = shared / (n - 1).max(1) as f64;
        }
        i = j + 1;
    }
    r
}

/// Kraskov–Stögbauer–Grassberger estimator (algorithm 1, k = 3, max-norm), in
/// nats, computed on rank-transformed marginals with a deterministic
/// 1e-10-of-range jitter to break ties.
pub fn mutual_information(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_lengths(xs, ys)?;
    let n = xs.len();
    if n < KSG_K + 1 {
        return Err(Error::InvalidArgument(format!(
            "KSG with k={KSG_K} needs at least {} points, got {n}",
            KSG_K + 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(KSG_JITTER_SEED);
    let mut jittered = |v: &[f64]| -> Vec<f64> {
        ranks(v)
            .into_iter()
            .map(|r| r + KSG_JITTER * rng.random_range(-1.0..1.0))
            .collect()
    };
    let (u, w) = (jittered(xs), jittered(ys));
    let mut dist = vec![0.0; n];
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            dist[j] = (u[i] - u[j]).abs().max((w[i] - w[j]).abs());
        }
        dist[i] = f64::INFINITY;
        let mut sorted = dist.clone();
        sorted.select_nth_unstable_by(KSG_K - 1, f64::total_cmp);
        let eps = sorted[KSG_K - 1];
        let nx = (0..n)
            .filter(|&j| j != i && (u[i] - u[j]).abs() < eps)
            .count();
        let ny = (0..n)
            .filter(|&j| j != i && (w[i] - w[j]).abs() < eps)
            .count();
        acc += digamma_int(nx + 1) + digamma_int(ny + 1);
    }
    Ok(digamma_int(KSG_K) + digamma_int(n) - acc / n as f64)
}

/// Length of the zero-padded transform; bins 0..FOURIER_BINS cover the
/// frequencies from zero up to Nyquist.
pub const FOURIER_BINS: usize = 10_000;

/// Power-weighted mean bin index over the non-negative-frequency half of a
/// 2 × 10 000 point zero-padded transform of the mean-subtracted sequence.
/// A flat spectrum sits at 4999.5.
pub fn fourier_complexity(ys: &[f64]) -> Result<f64> {
    if ys.len() < 8 {
        return Err(Error::InvalidArgument("need at least 8 points".into()));
    }
    if ys.len() > FOURIER_BINS {
        return Err(Error::InvalidArgument(format!(
            "at most {FOURIER_BINS} samples supported, got {}",
            ys.len()
        )));
    }
    let Some(c) = centered(ys) else {
        return Ok(0.0);
    };
    let power = power_spectrum(&c, 2 * FOURIER_BINS);
    let half = &power[..FOURIER_BINS];
    let total: f64 = half.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(half
        .iter()
        .enumerate()
        .map(|(k, p)| k as f64 * p)
        .sum::<f64>()
        / total)
}

/// All five metrics. Pairs are sorted by x first, so the result does not
/// depend on the order the points arrive in.
pub fn characterize(xs: &[f64], ys: &[f64]) -> Result<MetricVector> {
    check_lengths(xs, ys)?;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(ys[a].total_cmp(&ys[b])));
    let sx: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let sy: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
    Ok(MetricVector {
        nonlinearity: nonlinearity(&sx, &sy)?,
        frequency_complexity: frequency_complexity(&sy)?,
        fractal_dimension: fractal_dimension(&sx, &sy)?,
        mutual_information: mutual_information(&sx, &sy)?,
        fourier_complexity: fourier_complexity(&sy)?,
    })
}
