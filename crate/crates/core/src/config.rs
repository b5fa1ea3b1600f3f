//! Experiment configuration files.
//!
//! A configuration is a TOML document. Unknown keys are rejected, defaults
//! that depend on `theta` are filled after parsing, and every value is
//! validated by the module that owns it.
//!
//! ```toml
//! driving = ["white", "upsilon"]
//!
//! [system]
//! epsilon = 1.0
//! omega = 2.0
//! coupling_axis = "x"
//!
//! [noise]
//! sigma = 0.7
//! theta = 1.0
//!
//! [ensemble]
//! seed = 7
//! ```

use serde::Deserialize;

use crate::ensemble::EnsembleConfig;
use crate::error::{Error, Result};
use crate::noise::NoiseParams;
use crate::qme::{LindbladSpec, ODEGrid, QmeModel, RedfieldKind, RedfieldModel, RedfieldSpec};
use crate::quantum::{build_hamiltonian, pauli, Axis, ComplexMat, StateVec};
use crate::sse::{validate_driving, IntegratorConfig, SSEDriving};
use crate::Complex64;

/// Default number of trajectories.
pub const DEFAULT_TRAJECTORIES: usize = 20_000;
/// Default number of recorded points per run.
pub const DEFAULT_RECORDS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrivingKind {
    White,
    Upsilon,
    OuHamiltonian,
}

impl DrivingKind {
    pub fn name(self) -> &'static str {
        match self {
            DrivingKind::White => "white",
            DrivingKind::Upsilon => "upsilon",
            DrivingKind::OuHamiltonian => "ou_hamiltonian",
        }
    }

    /// Solver whose mean dynamics the driving unravels.
    pub fn matching_solver(self) -> SolverKind {
        match self {
            DrivingKind::White => SolverKind::Lindblad,
            DrivingKind::Upsilon => SolverKind::RedfieldUpsilon,
            DrivingKind::OuHamiltonian => SolverKind::RedfieldOu,
        }
    }
}

/// How white noise enters the trajectory equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhiteUnraveling {
    /// Jump operator `-iR`; norm-preserving trajectories.
    #[default]
    Unitary,
    /// Jump operator `R` as given.
    Jump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Lindblad,
    RedfieldUpsilon,
    RedfieldOu,
    ClosedUpsilon,
    ClosedXou,
    /// Noise-free Liouvillian.
    Closed,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Lindblad => "lindblad",
            SolverKind::RedfieldUpsilon => "redfield_upsilon",
            SolverKind::RedfieldOu => "redfield_ou",
            SolverKind::ClosedUpsilon => "closed_upsilon",
            SolverKind::ClosedXou => "closed_xou",
            SolverKind::Closed => "closed",
        }
    }

    /// Whether the solver models the given driving on average.
    pub fn pairs_with(self, d: DrivingKind) -> bool {
        matches!(
            (d, self),
            (DrivingKind::White, SolverKind::Lindblad)
                | (DrivingKind::Upsilon, SolverKind::RedfieldUpsilon)
                | (DrivingKind::Upsilon, SolverKind::ClosedUpsilon)
                | (DrivingKind::OuHamiltonian, SolverKind::RedfieldOu)
                | (DrivingKind::OuHamiltonian, SolverKind::ClosedXou)
        )
    }
}

/// Which scalar a check reads from a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    #[default]
    Rho00,
    ReRho10,
    ImRho10,
    Eig0,
}

impl Observable {
    pub fn name(self) -> &'static str {
        match self {
            Observable::Rho00 => "rho00",
            Observable::ReRho10 => "re_rho10",
            Observable::ImRho10 => "im_rho10",
            Observable::Eig0 => "eig0",
        }
    }
}

/// A pass/fail assertion evaluated by `reproduce --check`.
///
/// `series` names refer to a driving (`upsilon`) or a solver name.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// Trailing-window mean within `[lo, hi]`.
    Stationary {
        series: String,
        lo: f64,
        hi: f64,
        window: Option<f64>,
        #[serde(default)]
        observable: Observable,
    },
    /// Largest pointwise difference of two series at most `max`.
    MaxError {
        a: String,
        b: String,
        max: f64,
        #[serde(default)]
        observable: Observable,
    },
    /// Zero-crossing frequency within `rel_tol` of `target`.
    Frequency {
        series: String,
        target: f64,
        rel_tol: f64,
        t0: Option<f64>,
        t1: Option<f64>,
        #[serde(default)]
        observable: Observable,
    },
    /// Strictly increasing frequencies, each step beyond twice the combined
    /// standard error.
    FrequencyOrder {
        series: Vec<String>,
        t0: Option<f64>,
        t1: Option<f64>,
        #[serde(default)]
        observable: Observable,
    },
    /// Fitted oscillation amplitude at `omega` over `[t0, t1]`.
    Amplitude {
        series: String,
        omega: f64,
        t0: f64,
        t1: f64,
        target: f64,
        tol: f64,
        #[serde(default)]
        observable: Observable,
    },
    /// Ratio of early to late envelope decay rates at least `min`.
    EnvelopeRatio {
        series: String,
        min: f64,
        #[serde(default)]
        observable: Observable,
    },
    /// Minimum eigenvalue never below the positivity threshold, or, with
    /// `expect_violation`, at least once below it.
    Positivity {
        series: String,
        #[serde(default)]
        expect_violation: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(DrivingKind),
    Many(Vec<DrivingKind>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    epsilon: f64,
    omega: f64,
    coupling_axis: Option<Axis>,
    /// Rows of `[re, im]` pairs.
    coupling_matrix: Option<Vec<Vec<[f64; 2]>>>,
    initial_state: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    sigma: f64,
    theta: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    dt: Option<f64>,
    t_final: Option<f64>,
    record_stride: Option<usize>,
    renormalize: Option<bool>,
    ito_correction: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    #[serde(alias = "M")]
    trajectories: Option<usize>,
    #[serde(alias = "master_seed")]
    seed: u64,
    workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    kind: SolverKind,
    name: Option<String>,
    #[serde(default)]
    drop_imaginary: bool,
    dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    sigma: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoiseStats {
    paths: Option<usize>,
    max_lag: Option<f64>,
    lags: Option<usize>,
}

/// Settings replaced by the paper-scale profile.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFull {
    dt: Option<f64>,
    t_final: Option<f64>,
    record_stride: Option<usize>,
    trajectories: Option<usize>,
    solver_dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    driving: Option<OneOrMany>,
    #[serde(default)]
    white_unraveling: WhiteUnraveling,
    system: RawSystem,
    noise: RawNoise,
    #[serde(default)]
    integrator: RawIntegrator,
    ensemble: Option<RawEnsemble>,
    #[serde(default)]
    solvers: Vec<RawSolver>,
    sweep: Option<RawSweep>,
    #[serde(default)]
    noise_stats: RawNoiseStats,
    #[serde(default)]
    checks: Vec<Check>,
    full: Option<RawFull>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub epsilon: f64,
    pub omega: f64,
    pub coupling: ComplexMat,
    pub initial_state: StateVec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub name: String,
    pub kind: SolverKind,
    pub drop_imaginary: bool,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseStatsConfig {
    pub paths: usize,
    pub max_lag: f64,
    pub lags: usize,
}

/// A validated experiment with every default resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub noise: NoiseParams,
    pub drivings: Vec<DrivingKind>,
    pub white_unraveling: WhiteUnraveling,
    pub integrator: IntegratorConfig,
    pub ensemble: Option<EnsembleConfig>,
    pub solvers: Vec<SolverConfig>,
    pub sweep: Option<Vec<f64>>,
    pub noise_stats: NoiseStatsConfig,
    pub checks: Vec<Check>,
    raw: RawConfig,
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(field_err(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn finite(field: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(field_err(field, format!("must be finite, got {v}")))
    }
}

fn complex_rows(field: &str, rows: &[Vec<[f64; 2]>]) -> Result<ComplexMat> {
    if rows.len() != 2 || rows.iter().any(|r| r.len() != 2) {
        return Err(field_err(field, "must be a 2x2 matrix of [re, im] pairs"));
    }
    let rows: Vec<Vec<Complex64>> = rows
        .iter()
        .map(|r| r.iter().map(|&[re, im]| Complex64::new(re, im)).collect())
        .collect();
    let m = ComplexMat::from_rows(&rows).map_err(|e| field_err(field, e))?;
    if !m.is_finite() {
        return Err(field_err(field, "entries must be finite"));
    }
    Ok(m)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    resolve(raw, false)
}

/// Reads and parses a configuration file.
pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn resolve(raw: RawConfig, full: bool) -> Result<ExperimentConfig> {
    let s = &raw.system;
    let epsilon = finite("system.epsilon", s.epsilon)?;
    let omega = finite("system.omega", s.omega)?;
    let coupling = match (&s.coupling_axis, &s.coupling_matrix) {
        (Some(axis), None) => pauli(*axis),
        (None, Some(rows)) => complex_rows("system.coupling_matrix", rows)?,
        (None, None) => {
            return Err(field_err(
                "system",
                "one of coupling_axis or coupling_matrix is required",
            ))
        }
        (Some(_), Some(_)) => {
            return Err(field_err(
                "system",
                "coupling_axis and coupling_matrix are mutually exclusive",
            ))
        }
    };
    let initial_state = match &s.initial_state {
        None => StateVec::basis(2, 0),
        Some(amps) => {
            if amps.len() != 2 {
                return Err(field_err("system.initial_state", "must hold 2 amplitudes"));
            }
            let v = StateVec::new(
                amps.iter()
                    .map(|&[re, im]| Complex64::new(re, im))
                    .collect(),
            );
            let n2 = v.norm_sqr();
            if !(n2 > 0.0) || !n2.is_finite() {
                return Err(field_err(
                    "system.initial_state",
                    "must be a finite nonzero vector",
                ));
            }
            v.normalized()
        }
    };

    let noise = NoiseParams {
        sigma: raw.noise.sigma,
        theta: raw.noise.theta,
    };
    if !(noise.sigma >= 0.0) || !noise.sigma.is_finite() {
        return Err(field_err(
            "noise.sigma",
            format!("must be non-negative and finite, got {}", noise.sigma),
        ));
    }
    positive("noise.theta", noise.theta)?;
    let theta = noise.theta;

    let drivings = match &raw.driving {
        None => Vec::new(),
        Some(OneOrMany::One(d)) => vec![*d],
        Some(OneOrMany::Many(v)) => v.clone(),
    };
    for (i, d) in drivings.iter().enumerate() {
        if drivings[..i].contains(d) {
            return Err(field_err("driving", format!("{} listed twice", d.name())));
        }
    }

    let f = if full {
        raw.full.clone().unwrap_or_default()
    } else {
        RawFull::default()
    };
    let it = &raw.integrator;
    let dt = positive("integrator.dt", f.dt.or(it.dt).unwrap_or(1e-4 / theta))?;
    let t_final = positive(
        "integrator.t_final",
        f.t_final.or(it.t_final).unwrap_or(10.0 / theta),
    )?;
    if t_final < dt {
        return Err(field_err("integrator.t_final", "must be at least dt"));
    }
    let n_steps = (t_final / dt).round() as usize;
    let record_stride = match f.record_stride.or(it.record_stride) {
        Some(0) => return Err(field_err("integrator.record_stride", "must be positive")),
        Some(k) => k,
        None => (n_steps / DEFAULT_RECORDS).max(1),
    };
    let integrator = IntegratorConfig {
        dt,
        t_final,
        record_stride,
        renormalize: it.renormalize.unwrap_or(true),
        ito_correction: it.ito_correction.unwrap_or(true),
    };
    let spacing = dt * record_stride as f64;

    let ensemble = match &raw.ensemble {
        None => None,
        Some(e) => {
            let trajectories = f
                .trajectories
                .or(e.trajectories)
                .unwrap_or(DEFAULT_TRAJECTORIES);
            if trajectories < 2 {
                return Err(field_err("ensemble.trajectories", "must be at least 2"));
            }
            let workers = match e.workers {
                Some(0) => return Err(field_err("ensemble.workers", "must be positive")),
                Some(w) => w,
                None => default_workers(),
            };
            Some(EnsembleConfig {
                trajectories,
                master_seed: e.seed,
                workers,
                keep_trajectories: false,
            })
        }
    };

    let mut solvers = Vec::new();
    for (i, sv) in raw.solvers.iter().enumerate() {
        let field = format!("solvers[{i}].dt");
        let sdt = positive(&field, f.solver_dt.or(sv.dt).unwrap_or(1e-3 / theta))?;
        let ratio = (spacing / sdt).round();
        if ratio < 1.0 || (ratio * sdt - spacing).abs() > 1e-9 * spacing {
            return Err(field_err(
                &field,
                format!("{sdt} must divide the record spacing {spacing}"),
            ));
        }
        let name = sv
            .name
            .clone()
            .unwrap_or_else(|| sv.kind.name().to_string());
        if solvers.iter().any(|s: &SolverConfig| s.name == name) {
            return Err(field_err(
                &format!("solvers[{i}].name"),
                format!("{name:?} used twice"),
            ));
        }
        if drivings.iter().any(|d| d.name() == name) {
            return Err(field_err(
                &format!("solvers[{i}].name"),
                format!("{name:?} clashes with a driving name"),
            ));
        }
        solvers.push(SolverConfig {
            name,
            kind: sv.kind,
            drop_imaginary: sv.drop_imaginary,
            dt: sdt,
        });
    }

    let sweep = match &raw.sweep {
        None => None,
        Some(sw) => {
            if sw.sigma.is_empty() {
                return Err(field_err("sweep.sigma", "must not be empty"));
            }
            for (i, &s) in sw.sigma.iter().enumerate() {
                if !(s >= 0.0) || !s.is_finite() {
                    return Err(field_err(
                        &format!("sweep.sigma[{i}]"),
                        format!("must be non-negative and finite, got {s}"),
                    ));
                }
            }
            Some(sw.sigma.clone())
        }
    };

    let ns = &raw.noise_stats;
    let noise_stats = NoiseStatsConfig {
        paths: match ns.paths {
            Some(p) if p < 2 => return Err(field_err("noise_stats.paths", "must be at least 2")),
            Some(p) => p,
            None => 64,
        },
        max_lag: positive("noise_stats.max_lag", ns.max_lag.unwrap_or(3.0 / theta))?,
        lags: match ns.lags {
            Some(0) => return Err(field_err("noise_stats.lags", "must be positive")),
            Some(l) => l,
            None => 30,
        },
    };

    let cfg = ExperimentConfig {
        system: SystemConfig {
            epsilon,
            omega,
            coupling,
            initial_state,
        },
        noise,
        drivings,
        white_unraveling: raw.white_unraveling,
        integrator,
        ensemble,
        solvers,
        sweep,
        noise_stats,
        checks: raw.checks.clone(),
        raw,
    };
    for &d in &cfg.drivings {
        validate_driving(&cfg.driving(d))?;
    }
    for s in &cfg.solvers {
        cfg.solver_model(s)?;
    }
    Ok(cfg)
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

impl ExperimentConfig {
    /// The same experiment at paper scale, using the `[full]` overrides.
    pub fn full_profile(&self) -> Result<ExperimentConfig> {
        let mut cfg = resolve(self.raw.clone(), true)?;
        if let (Some(e), Some(mine)) = (&mut cfg.ensemble, &self.ensemble) {
            e.workers = mine.workers;
            e.master_seed = mine.master_seed;
        }
        Ok(cfg)
    }

    pub fn has_full_profile(&self) -> bool {
        self.raw.full.is_some()
    }

    /// A copy with a different noise intensity.
    pub fn with_sigma(&self, sigma: f64) -> ExperimentConfig {
        let mut cfg = self.clone();
        cfg.noise.sigma = sigma;
        cfg
    }

    pub fn hamiltonian(&self) -> ComplexMat {
        build_hamiltonian(self.system.epsilon, self.system.omega)
    }

    pub fn driving(&self, kind: DrivingKind) -> SSEDriving {
        let r = &self.system.coupling;
        match kind {
            DrivingKind::White => match self.white_unraveling {
                WhiteUnraveling::Unitary => SSEDriving::white_unitary(r, self.noise),
                WhiteUnraveling::Jump => SSEDriving::WhiteNoise(r.clone(), self.noise),
            },
            DrivingKind::Upsilon => SSEDriving::UpsilonOU(r.clone(), self.noise),
            DrivingKind::OuHamiltonian => SSEDriving::HamiltonianOU(r.clone(), self.noise),
        }
    }

    pub fn solver_model(&self, s: &SolverConfig) -> Result<QmeModel> {
        let h = self.hamiltonian();
        let redfield = |kind| {
            RedfieldModel::new(RedfieldSpec {
                h: h.clone(),
                r: self.system.coupling.clone(),
                params: self.noise,
                kind,
                drop_imaginary: s.drop_imaginary,
            })
        };
        Ok(match s.kind {
            SolverKind::Lindblad => {
                let l = match self.white_unraveling {
                    WhiteUnraveling::Unitary => self.system.coupling.scale(-crate::quantum::I),
                    WhiteUnraveling::Jump => self.system.coupling.clone(),
                };
                let rate = self.noise.sigma * self.noise.sigma;
                QmeModel::Lindblad(LindbladSpec::new(h, vec![(l, rate)])?)
            }
            SolverKind::Closed => QmeModel::Lindblad(LindbladSpec::new(h, Vec::new())?),
            SolverKind::RedfieldUpsilon => QmeModel::Redfield(redfield(RedfieldKind::Upsilon)?),
            SolverKind::RedfieldOu => QmeModel::Redfield(redfield(RedfieldKind::OuProcess)?),
            SolverKind::ClosedUpsilon => QmeModel::ClosedUpsilon(redfield(RedfieldKind::Upsilon)?),
            SolverKind::ClosedXou => QmeModel::ClosedXou(redfield(RedfieldKind::OuProcess)?),
        })
    }

    /// Solver grid recording on the trajectory sample times.
    pub fn ode_grid(&self, s: &SolverConfig) -> ODEGrid {
        let spacing = self.integrator.dt * self.integrator.record_stride as f64;
        let every = (spacing / s.dt).round() as usize;
        let t_last = self
            .integrator
            .record_times()
            .last()
            .copied()
            .unwrap_or(0.0);
        ODEGrid {
            dt: s.dt,
            t_final: t_last,
            record_every: every.max(1),
        }
    }

    /// Ensemble settings, or a config error naming the missing table.
    pub fn require_ensemble(&self) -> Result<EnsembleConfig> {
        self.ensemble.ok_or_else(|| {
            field_err(
                "ensemble",
                "table with a seed is required for trajectory runs",
            )
        })
    }
}
