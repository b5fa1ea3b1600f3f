//! Wiener increments, Ornstein–Uhlenbeck paths and their analytic statistics.
//!
//! The Υ-noise has no standalone sampler: it only appears as the increment
//! `dx` returned by [`ou_step`].

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Amplitude `sigma` and inverse correlation time `theta`.
///
/// `sigma = 0` is accepted as the noise-off limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub sigma: f64,
    pub theta: f64,
}

impl NoiseParams {
    pub fn new(sigma: f64, theta: f64) -> Result<Self> {
        let p = Self { sigma, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sigma must be finite and non-negative, got {}",
                self.sigma
            )));
        }
        if !self.theta.is_finite() || self.theta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "theta must be finite and positive, got {}",
                self.theta
            )));
        }
        Ok(())
    }

    /// Stationary OU variance `sigma^2 / (2 theta)`.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.theta)
    }
}

/// Seedable random stream keyed by `(master_seed, stream_index)`.
///
/// Each index selects an independent ChaCha stream of the same key, so
/// distinct indices never overlap and equal pairs replay identically.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self {
            master_seed,
            stream_index,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// One standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// Current value of an OU path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OUState {
    pub value: f64,
}

impl OUState {
    pub fn new(value: f64) -> Self {
        Self { value }
    }
}

/// `dW ~ N(0, dt)`.
pub fn wiener_increment(dt: f64, rng: &mut RngStream) -> Result<f64> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time step must be non-negative, got {dt}"
        )));
    }
    Ok(dt.sqrt() * rng.standard_normal())
}

/// Draws `X_0 ~ N(0, sigma^2 / (2 theta))`.
pub fn ou_init_stationary(params: &NoiseParams, rng: &mut RngStream) -> Result<OUState> {
    params.validate()?;
    Ok(OUState::new(
        params.stationary_variance().sqrt() * rng.standard_normal(),
    ))
}

/// Euler–Maruyama step `dx = -theta x dt + sigma dW`. Returns `(x + dx, dx)`.
#[inline]
pub fn ou_step(x: OUState, dt: f64, dw: f64, params: &NoiseParams) -> (OUState, f64) {
    let dx = -params.theta * x.value * dt + params.sigma * dw;
    (OUState::new(x.value + dx), dx)
}

/// Exact transition over `dt` given a standard normal draw `z`.
pub fn ou_step_exact(x: OUState, dt: f64, z: f64, params: &NoiseParams) -> OUState {
    let decay = (-params.theta * dt).exp();
    let var = params.stationary_variance() * (1.0 - decay * decay);
    OUState::new(x.value * decay + var.sqrt() * z)
}

/// `cov(X_t, X_s)`. With `stationary` the transient term of a fixed start is
/// dropped, leaving `sigma^2/(2 theta) e^{-theta |t - s|}`.
pub fn analytic_ou_cov(t: f64, s: f64, params: &NoiseParams, stationary: bool) -> f64 {
    let v = params.stationary_variance();
    let lagged = (-params.theta * (t - s).abs()).exp();
    if stationary {
        v * lagged
    } else {
        v * (lagged - (-params.theta * (t + s)).exp())
    }
}

/// Smooth part of the Υ-noise covariance, `-(sigma^2 theta / 2) e^{-theta |lag|}`.
pub fn analytic_upsilon_cov_smooth(lag: f64, params: &NoiseParams) -> f64 {
    -0.5 * params.sigma * params.sigma * params.theta * (-params.theta * lag.abs()).exp()
}

/// Weight `sigma^2` of the delta part of the Υ-noise covariance.
pub fn upsilon_delta_weight(params: &NoiseParams) -> f64 {
    params.sigma * params.sigma
}

/// Noise family selector for spectral densities and Redfield coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralKind {
    White,
    OuProcess,
    Upsilon,
}

impl FromStr for SpectralKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(Self::White),
            "ou_process" => Ok(Self::OuProcess),
            "upsilon" => Ok(Self::Upsilon),
            other => Err(Error::InvalidArgument(format!(
                "unknown spectral kind {other:?} (expected white, ou_process or upsilon)"
            ))),
        }
    }
}

pub fn spectral_density(kind: SpectralKind, omega: f64, params: &NoiseParams) -> f64 {
    let s2 = params.sigma * params.sigma;
    let w2 = omega * omega;
    let t2 = params.theta * params.theta;
    match kind {
        SpectralKind::White => s2,
        SpectralKind::OuProcess => s2 / (w2 + t2),
        SpectralKind::Upsilon => s2 * w2 / (w2 + t2),
    }
}

/// Sample autocovariance at `lag_steps`: the series mean is removed and the
/// lagged sum is divided by the number of pairs.
pub fn empirical_autocovariance(series: &[f64], lag_steps: usize) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("empty series".into()));
    }
    if lag_steps >= series.len() {
        return Err(Error::InvalidArgument(format!(
            "lag {lag_steps} must be shorter than the series length {}",
            series.len()
        )));
    }
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let pairs = n - lag_steps;
    let acc: f64 = (0..pairs)
        .map(|i| (series[i] - mean) * (series[i + lag_steps] - mean))
        .sum();
    Ok(acc / pairs as f64)
}

/// Autocovariance at a time lag, rounded to the nearest whole step of `dt`.
pub fn autocovariance_at_lag(series: &[f64], dt: f64, lag: f64) -> Result<f64> {
    if !(dt > 0.0) || !(lag >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0 and lag >= 0, got dt={dt}, lag={lag}"
        )));
    }
    empirical_autocovariance(series, (lag / dt).round() as usize)
}
