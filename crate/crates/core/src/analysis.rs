//! Observables, error metrics, stationarity, positivity and oscillation
//! estimators.

use crate::error::{Error, Result};
use crate::quantum::{ComplexMat, DensityMat};
use num_complex::Complex64;

/// Per-time scalar observables of a density-matrix series.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub rho00: Vec<f64>,
    pub rho11: Vec<f64>,
    pub re_rho10: Vec<f64>,
    pub im_rho10: Vec<f64>,
    pub purity: Vec<f64>,
    /// Smallest eigenvalue.
    pub eig0: Vec<f64>,
    /// Largest eigenvalue.
    pub eig1: Vec<f64>,
}

impl ObservableSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Rebuilds the 2x2 density matrix at index `i`.
    pub fn density_at(&self, i: usize) -> ComplexMat {
        let r10 = Complex64::new(self.re_rho10[i], self.im_rho10[i]);
        ComplexMat::from_rows(&[
            vec![Complex64::new(self.rho00[i], 0.0), r10.conj()],
            vec![r10, Complex64::new(self.rho11[i], 0.0)],
        ])
        .expect("2x2")
    }
}

pub fn observables(times: &[f64], rho: &[DensityMat]) -> Result<ObservableSeries> {
    if times.len() != rho.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: rho.len(),
        });
    }
    let mut out = ObservableSeries {
        times: times.to_vec(),
        ..Default::default()
    };
    for r in rho {
        if r.dim() < 2 {
            return Err(Error::InvalidArgument("need at least two levels".into()));
        }
        let ev = r.eigenvalues();
        out.rho00.push(r[(0, 0)].re);
        out.rho11.push(r[(1, 1)].re);
        out.re_rho10.push(r[(1, 0)].re);
        out.im_rho10.push(r[(1, 0)].im);
        out.purity.push(r.purity());
        out.eig0.push(ev[0]);
        out.eig1.push(*ev.last().unwrap());
    }
    Ok(out)
}

/// Pointwise `|a - b|` and its maximum.
pub fn abs_error(a: &[f64], b: &[f64]) -> Result<(Vec<f64>, f64)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let err: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    let max = err.iter().copied().fold(0.0, f64::max);
    Ok((err, max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub max_abs_err: f64,
    pub err_series: Vec<f64>,
    pub frequency_estimates: Option<(f64, f64)>,
    pub stationary_values: (f64, f64),
}

/// Compares two series on a common grid; frequencies are reported when both
/// series oscillate enough to be estimated.
pub fn compare(times: &[f64], a: &[f64], b: &[f64], window: f64) -> Result<ComparisonReport> {
    if times.len() != a.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: a.len(),
        });
    }
    let (err_series, max_abs_err) = abs_error(a, b)?;
    let fa = dominant_frequency(times, a).ok();
    let fb = dominant_frequency(times, b).ok();
    Ok(ComparisonReport {
        max_abs_err,
        err_series,
        frequency_estimates: fa.zip(fb).map(|(x, y)| (x.omega, y.omega)),
        stationary_values: (
            trailing_mean(times, a, window)?,
            trailing_mean(times, b, window)?,
        ),
    })
}

fn trailing_range(times: &[f64], window: f64) -> Result<usize> {
    let last = *times
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty series".into()))?;
    if !(window >= 0.0) || window >= last - times[0] {
        return Err(Error::InvalidArgument(format!(
            "window {window} must be shorter than the series span {}",
            last - times[0]
        )));
    }
    let start = last - window;
    Ok(times
        .iter()
        .position(|&t| t >= start - 1e-12 * last.abs().max(1.0))
        .unwrap())
}

/// Mean of the samples with `t >= t_end - window`.
pub fn trailing_mean(times: &[f64], series: &[f64], window: f64) -> Result<f64> {
    let i0 = trailing_range(times, window)?;
    let tail = &series[i0..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Stationary iff every sample of the trailing window lies within `tol` of
/// the window mean. Returns the flag and the mean.
pub fn stationarity(times: &[f64], series: &[f64], window: f64, tol: f64) -> Result<(bool, f64)> {
    if times.len() != series.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: series.len(),
        });
    }
    let i0 = trailing_range(times, window)?;
    let tail = &series[i0..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let dev = tail.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
    Ok((dev <= tol, mean))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyEstimate {
    /// Angular frequency.
    pub omega: f64,
    /// Standard error from the scatter of full periods; NaN with fewer than
    /// two full periods.
    pub stderr: f64,
    /// Retained crossing times.
    pub crossings: Vec<f64>,
}

/// Angular frequency from the zero crossings of `series` minus the mean of
/// its trailing half.
pub fn dominant_frequency(times: &[f64], series: &[f64]) -> Result<FrequencyEstimate> {
    if times.len() != series.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: series.len(),
        });
    }
    if times.len() < 4 {
        return Err(Error::NotEstimable("series too short".into()));
    }
    let half = &series[series.len() / 2..];
    let center = half.iter().sum::<f64>() / half.len() as f64;
    dominant_frequency_about(times, series, center)
}

/// As [`dominant_frequency`] with an explicit center line.
pub fn dominant_frequency_about(
    times: &[f64],
    series: &[f64],
    center: f64,
) -> Result<FrequencyEstimate> {
    let mut raw = Vec::new();
    for i in 1..series.len() {
        let a = series[i - 1] - center;
        let b = series[i] - center;
        if (a < 0.0 && b >= 0.0) || (a >= 0.0 && b < 0.0) {
            let f = a / (a - b);
            raw.push(times[i - 1] + f * (times[i] - times[i - 1]));
        }
    }
    let crossings = debounce(&raw);
    if crossings.len() < 3 {
        return Err(Error::NotEstimable(format!(
            "need at least 3 zero crossings, found {}",
            crossings.len()
        )));
    }
    // Half-periods can alternate when the center is slightly off; an odd
    // number of crossings spans whole periods.
    let n = if crossings.len() % 2 == 1 {
        crossings.len()
    } else {
        crossings.len() - 1
    };
    let span = crossings[n - 1] - crossings[0];
    let omega = std::f64::consts::PI * (n - 1) as f64 / span;

    let periods: Vec<f64> = (0..(n - 1) / 2)
        .map(|k| crossings[2 * k + 2] - crossings[2 * k])
        .collect();
    let stderr = if periods.len() >= 2 {
        let m = periods.len() as f64;
        let mean = periods.iter().sum::<f64>() / m;
        let var = periods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (m - 1.0);
        // omega = 2 pi / mean period
        omega * (var / m).sqrt() / mean
    } else {
        f64::NAN
    };
    Ok(FrequencyEstimate {
        omega,
        stderr,
        crossings: crossings[..n].to_vec(),
    })
}

// Noise near the center line produces bursts of crossings. Bursts much
// shorter than the typical spacing collapse to their midpoint when they
// change sign an odd number of times and vanish otherwise.
fn debounce(raw: &[f64]) -> Vec<f64> {
    if raw.len() < 3 {
        return raw.to_vec();
    }
    let mut gaps: Vec<f64> = raw.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let typical = gaps[gaps.len() * 3 / 4];
    let min_gap = 0.25 * typical;
    let mut out = Vec::new();
    let mut i = 0;
    while i < raw.len() {
        let mut j = i;
        while j + 1 < raw.len() && raw[j + 1] - raw[j] < min_gap {
            j += 1;
        }
        if (j - i + 1) % 2 == 1 {
            out.push(0.5 * (raw[i] + raw[j]));
        }
        i = j + 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationFit {
    pub amplitude: f64,
    pub offset: f64,
    pub phase: f64,
}

/// Least-squares fit of `c + a cos(omega t) + b sin(omega t)` over
/// `t0 <= t <= t1`.
pub fn oscillation_amplitude(
    times: &[f64],
    series: &[f64],
    omega: f64,
    t0: f64,
    t1: f64,
) -> Result<OscillationFit> {
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    let mut count = 0;
    for (&t, &y) in times.iter().zip(series) {
        if t < t0 || t > t1 {
            continue;
        }
        let row = [1.0, (omega * t).cos(), (omega * t).sin()];
        for r in 0..3 {
            aty[r] += row[r] * y;
            for c in 0..3 {
                ata[r][c] += row[r] * row[c];
            }
        }
        count += 1;
    }
    if count < 4 {
        return Err(Error::NotEstimable(
            "too few samples in the fit window".into(),
        ));
    }
    let x = solve3(ata, aty).ok_or_else(|| Error::NotEstimable("singular fit".into()))?;
    Ok(OscillationFit {
        amplitude: x[1].hypot(x[2]),
        offset: x[0],
        phase: x[2].atan2(x[1]),
    })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = ((row + 1)..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Eigenvalues below this count as positivity violations.
pub const POSITIVITY_THRESHOLD: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityReport {
    pub min_eigenvalue: f64,
    pub time_of_min: f64,
    pub first_violation: Option<f64>,
}

impl PositivityReport {
    pub fn is_positive(&self) -> bool {
        self.first_violation.is_none()
    }
}

pub fn positivity_report(times: &[f64], rho: &[DensityMat]) -> Result<PositivityReport> {
    if times.len() != rho.len() || times.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: rho.len(),
        });
    }
    let mut min = f64::INFINITY;
    let mut t_min = times[0];
    let mut first = None;
    for (&t, r) in times.iter().zip(rho) {
        let e = r.min_eigenvalue();
        if e < min {
            min = e;
            t_min = t;
        }
        if first.is_none() && e < POSITIVITY_THRESHOLD {
            first = Some(t);
        }
    }
    Ok(PositivityReport {
        min_eigenvalue: min,
        time_of_min: t_min,
        first_violation: first,
    })
}

/// Ratio of the early to the late decay rate of the oscillation envelope.
///
/// The envelope is the peak of `|series - center|` before the first crossing
/// and between consecutive crossings; rates are log-linear fits over the
/// first quarter and the last 40% of the peaks, at least three each. A value
/// above 2 indicates a fast-then-slow relaxation.
pub fn envelope_decay_ratio(times: &[f64], series: &[f64], center: f64) -> Result<f64> {
    let est = dominant_frequency_about(times, series, center)?;
    let mut bounds = vec![f64::NEG_INFINITY];
    bounds.extend_from_slice(&est.crossings);
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        let peak = times
            .iter()
            .zip(series)
            .filter(|(t, _)| **t > a && **t < b)
            .map(|(t, y)| (*t, (y - center).abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1));
        if let Some(p) = peak.filter(|p| p.1 > 0.0) {
            peaks.push(p);
        }
    }
    let n = peaks.len();
    if n < 6 {
        return Err(Error::NotEstimable(format!(
            "need at least 6 envelope peaks, found {n}"
        )));
    }
    let n_early = (n / 4).max(3);
    let n_late = (2 * n / 5).max(3);
    let early_pts = &peaks[..n_early];
    let late_pts = &peaks[n - n_late..];
    let rate = |pts: &[(f64, f64)]| {
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let ml = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
        let num: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1.ln() - ml)).sum();
        let den: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        -num / den
    };
    let early = rate(early_pts);
    let late = rate(late_pts);
    if !(late > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(early / late)
}
