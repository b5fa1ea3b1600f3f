//! Command-line front end.
//!
//! `oqsim <subcommand> --config <path> --out <dir> [--workers N] [--seed S]`
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 numerical
//! failure, 3 failed check under `reproduce --check`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::{
    abs_error, dominant_frequency, envelope_decay_ratio, observables, oscillation_amplitude,
    positivity_report, trailing_mean, ObservableSeries,
};
use crate::config::{
    load_config, parse_config, Check, DrivingKind, ExperimentConfig, Observable, SolverConfig,
};
use crate::ensemble::{run_ensemble, tree_reduce, with_workers, EnsembleConfig, EnsembleResult};
use crate::error::{Error, Result};
use crate::noise::{
    analytic_ou_cov, analytic_upsilon_cov_smooth, ou_init_stationary, ou_step, spectral_density,
    wiener_increment, RngStream, SpectralKind,
};
use crate::qme::QmeSolution;
use crate::quantum::DensityMat;
use crate::table::{emit_table, ensemble_table, qme_table, Table};

/// Bundled scenario configurations.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig-pz-hgen", include_str!("../presets/fig-pz-hgen.toml")),
    (
        "fig-px-hall-a",
        include_str!("../presets/fig-px-hall-a.toml"),
    ),
    (
        "fig-px-hall-b",
        include_str!("../presets/fig-px-hall-b.toml"),
    ),
    (
        "fig-px-hall-c",
        include_str!("../presets/fig-px-hall-c.toml"),
    ),
    (
        "fig-px-hall-d",
        include_str!("../presets/fig-px-hall-d.toml"),
    ),
    (
        "fig-redfield-compare",
        include_str!("../presets/fig-redfield-compare.toml"),
    ),
    ("si-sweep", include_str!("../presets/si-sweep.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[derive(Debug, Parser)]
#[command(
    name = "oqsim",
    version,
    about = "Open quantum system trajectories and master equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Master seed, replacing the configured one.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// OU path statistics and spectral densities.
    NoiseStats(Common),
    /// Trajectory ensembles for every configured driving.
    Simulate(Common),
    /// Every configured master-equation solver.
    Solve(Common),
    /// Trajectory ensembles against their matching solvers.
    Compare(Common),
    /// Simulations and solvers for each sigma of the sweep.
    Sweep(Common),
    /// Runs a bundled preset or a configuration end to end.
    Reproduce {
        #[command(flatten)]
        common: Common,
        /// Preset name: fig-pz-hgen, fig-px-hall-a..d, fig-redfield-compare, si-sweep.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Evaluate the configured checks; exit 3 if any fails.
        #[arg(long)]
        check: bool,
        /// Use the paper-scale settings of the `[full]` table.
        #[arg(long)]
        full: bool,
    },
}

enum Failure {
    Error(Error),
    Checks(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::IntegrationFailure { .. } | Error::NotEstimable(_) | Error::NotApplicable(_) => 2,
        _ => 1,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Err(Failure::Checks(n)) => {
            eprintln!("{n} check(s) failed");
            3
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::NoiseStats(c) => {
            let (cfg, out) = prepare(&c)?;
            noise_stats(&cfg, &out)?;
        }
        Command::Simulate(c) => {
            let (cfg, out) = prepare(&c)?;
            let runs = simulate(&cfg)?;
            write_runs(&out, "simulate", &runs)?;
        }
        Command::Solve(c) => {
            let (cfg, out) = prepare(&c)?;
            let sols = solve(&cfg)?;
            write_solutions(&out, "solve", &sols)?;
        }
        Command::Compare(c) => {
            let (cfg, out) = prepare(&c)?;
            let cfg = with_default_solvers(cfg)?;
            let runs = simulate(&cfg)?;
            let sols = solve(&cfg)?;
            compare(&out, &runs, &sols)?;
        }
        Command::Sweep(c) => {
            let (cfg, out) = prepare(&c)?;
            sweep(&cfg, &out)?;
        }
        Command::Reproduce {
            common,
            preset: name,
            check,
            full,
        } => {
            let mut cfg = match (&name, &common.config) {
                (Some(n), _) => parse_config(preset(n).ok_or_else(|| {
                    let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                    Error::Config(format!(
                        "unknown preset {n:?}; available: {}",
                        names.join(", ")
                    ))
                })?)?,
                (None, Some(p)) => load_config(p)?,
                (None, None) => {
                    return Err(Error::Config("reproduce needs --preset or --config".into()).into())
                }
            };
            if full {
                if !cfg.has_full_profile() {
                    return Err(Error::Config("configuration has no [full] table".into()).into());
                }
                cfg = cfg.full_profile()?;
            }
            apply_overrides(&mut cfg, &common);
            let out = make_out(&common.out)?;
            reproduce(&cfg, &out, check)?;
        }
    }
    Ok(())
}

fn prepare(c: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let path = c
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = load_config(path)?;
    apply_overrides(&mut cfg, c);
    Ok((cfg, make_out(&c.out)?))
}

fn make_out(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir.to_path_buf())
}

fn apply_overrides(cfg: &mut ExperimentConfig, c: &Common) {
    if c.seed.is_none() && c.workers.is_none() {
        return;
    }
    let ens = cfg.ensemble.get_or_insert_with(|| {
        let mut e = EnsembleConfig::new(crate::config::DEFAULT_TRAJECTORIES, 0);
        e.workers = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        e
    });
    if let Some(s) = c.seed {
        ens.master_seed = s;
    }
    if let Some(w) = c.workers {
        ens.workers = w.max(1);
    }
}

fn workers(cfg: &ExperimentConfig) -> usize {
    cfg.ensemble.as_ref().map(|e| e.workers).unwrap_or(1)
}

fn write(out: &Path, file: &str, table: &Table) -> Result<()> {
    let path = out.join(file);
    emit_table(table, &path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn simulate(cfg: &ExperimentConfig) -> Result<Vec<(DrivingKind, EnsembleResult)>> {
    if cfg.drivings.is_empty() {
        return Err(Error::Config("driving: no driving selected".into()));
    }
    let ens = cfg.require_ensemble()?;
    let h = cfg.hamiltonian();
    cfg.drivings
        .iter()
        .map(|&d| {
            let res = run_ensemble(
                &cfg.driving(d),
                &h,
                &cfg.system.initial_state,
                &cfg.integrator,
                &ens,
            )?;
            Ok((d, res))
        })
        .collect()
}

fn solve(cfg: &ExperimentConfig) -> Result<Vec<(SolverConfig, QmeSolution)>> {
    if cfg.solvers.is_empty() {
        return Err(Error::Config("solvers: no solver configured".into()));
    }
    let rho0 = DensityMat::pure(&cfg.system.initial_state);
    with_workers(workers(cfg), || {
        cfg.solvers
            .par_iter()
            .map(|s| {
                let sol = cfg.solver_model(s)?.solve(&rho0, &cfg.ode_grid(s))?;
                Ok((s.clone(), sol))
            })
            .collect::<Result<Vec<_>>>()
    })?
}

fn with_default_solvers(mut cfg: ExperimentConfig) -> Result<ExperimentConfig> {
    if cfg.solvers.is_empty() {
        let spacing = cfg.integrator.dt * cfg.integrator.record_stride as f64;
        let dt = pick_solver_dt(spacing, 1e-3 / cfg.noise.theta);
        for &d in &cfg.drivings {
            let kind = d.matching_solver();
            cfg.solvers.push(SolverConfig {
                name: kind.name().into(),
                kind,
                drop_imaginary: false,
                dt,
            });
        }
    }
    Ok(cfg)
}

/// Largest step not above `target` that divides `spacing`.
fn pick_solver_dt(spacing: f64, target: f64) -> f64 {
    spacing / (spacing / target).ceil().max(1.0)
}

fn write_runs(out: &Path, prefix: &str, runs: &[(DrivingKind, EnsembleResult)]) -> Result<()> {
    for (d, res) in runs {
        write(
            out,
            &format!("{prefix}_{}.csv", d.name()),
            &ensemble_table(res)?,
        )?;
    }
    Ok(())
}

fn write_solutions(out: &Path, prefix: &str, sols: &[(SolverConfig, QmeSolution)]) -> Result<()> {
    for (s, sol) in sols {
        write(out, &format!("{prefix}_{}.csv", s.name), &qme_table(sol)?)?;
    }
    Ok(())
}

const COMPARE_COLUMNS: [&str; 11] = [
    "t",
    "sse_rho00",
    "qme_rho00",
    "err_rho00",
    "sse_re_rho10",
    "qme_re_rho10",
    "err_re_rho10",
    "sse_im_rho10",
    "qme_im_rho10",
    "err_im_rho10",
    "se_rho00",
];

fn compare(
    out: &Path,
    runs: &[(DrivingKind, EnsembleResult)],
    sols: &[(SolverConfig, QmeSolution)],
) -> Result<()> {
    let mut pairs = 0;
    for (d, res) in runs {
        let a = observables(&res.times, &res.rho_mean)?;
        for (s, sol) in sols.iter().filter(|(s, _)| s.kind.pairs_with(*d)) {
            let b = observables(&sol.times, &sol.rho)?;
            if a.len() != b.len() {
                return Err(Error::DimensionMismatch {
                    expected: a.len(),
                    got: b.len(),
                });
            }
            let (e00, m00) = abs_error(&a.rho00, &b.rho00)?;
            let (ere, _) = abs_error(&a.re_rho10, &b.re_rho10)?;
            let (eim, _) = abs_error(&a.im_rho10, &b.im_rho10)?;
            let mut t = Table::new(&COMPARE_COLUMNS);
            for i in 0..a.len() {
                t.push(vec![
                    a.times[i],
                    a.rho00[i],
                    b.rho00[i],
                    e00[i],
                    a.re_rho10[i],
                    b.re_rho10[i],
                    ere[i],
                    a.im_rho10[i],
                    b.im_rho10[i],
                    eim[i],
                    res.se_rho00[i],
                ]);
            }
            write(out, &format!("compare_{}_{}.csv", d.name(), s.name), &t)?;
            println!("{} vs {}: max |d rho00| = {m00:.6}", d.name(), s.name);
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::Config("no driving/solver pair to compare".into()));
    }
    Ok(())
}

fn noise_stats(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let p = cfg.noise;
    p.validate()?;
    let seed = cfg.require_ensemble()?.master_seed;
    let ns = cfg.noise_stats;
    let dt = cfg.integrator.dt;
    let n_steps = cfg.integrator.n_steps();
    let lags: Vec<f64> = (0..=ns.lags)
        .map(|k| ns.max_lag * k as f64 / ns.lags as f64)
        .collect();
    if ns.max_lag >= n_steps as f64 * dt {
        return Err(Error::Config(
            "noise_stats.max_lag: exceeds the path length".into(),
        ));
    }
    let leaf = |i: usize| -> Result<Vec<(f64, f64)>> {
        let mut rng = RngStream::new(seed, i as u64);
        let mut x = ou_init_stationary(&p, &mut rng)?;
        let mut path = Vec::with_capacity(n_steps + 1);
        path.push(x.value);
        for _ in 0..n_steps {
            let dw = wiener_increment(dt, &mut rng)?;
            x = ou_step(x, dt, dw, &p).0;
            path.push(x.value);
        }
        // The stationary mean is known to vanish, so products are not demeaned
        // and short paths stay unbiased.
        Ok(lags
            .iter()
            .map(|&lag| {
                let k = (lag / dt).round() as usize;
                let pairs = path.len() - k;
                let c = (0..pairs).map(|i| path[i] * path[i + k]).sum::<f64>() / pairs as f64;
                (c, c * c)
            })
            .collect())
    };
    let merge = |a: Vec<(f64, f64)>, b: Vec<(f64, f64)>| {
        a.iter()
            .zip(&b)
            .map(|(x, y)| (x.0 + y.0, x.1 + y.1))
            .collect()
    };
    let sums = with_workers(workers(cfg), || tree_reduce(0, ns.paths, &leaf, &merge))??;
    let m = ns.paths as f64;
    let mut t = Table::new(&["lag", "cov", "se", "analytic_ou", "analytic_upsilon_smooth"]);
    for (lag, (s, q)) in lags.iter().zip(&sums) {
        let mean = s / m;
        let se = (((q - m * mean * mean) / (m - 1.0)).max(0.0) / m).sqrt();
        t.push(vec![
            *lag,
            mean,
            se,
            analytic_ou_cov(0.0, *lag, &p, true),
            analytic_upsilon_cov_smooth(*lag, &p),
        ]);
    }
    println!(
        "stationary variance {:.6} (analytic {:.6})",
        sums[0].0 / m,
        p.stationary_variance()
    );
    write(out, "ou_stats.csv", &t)?;

    let mut spec = Table::new(&["omega", "white", "ou_process", "upsilon"]);
    for k in 0..=200 {
        let w = 10.0 * p.theta * k as f64 / 200.0;
        spec.push(vec![
            w,
            spectral_density(SpectralKind::White, w, &p),
            spectral_density(SpectralKind::OuProcess, w, &p),
            spectral_density(SpectralKind::Upsilon, w, &p),
        ]);
    }
    write(out, "spectral.csv", &spec)
}

fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let sigmas = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("sweep: table with a sigma list is required".into()))?;
    // Short runs fall back to their second half.
    let window = (2.0 / cfg.noise.theta).min(0.5 * cfg.integrator.t_final);
    let mut names: Vec<String> = cfg.drivings.iter().map(|d| d.name().to_string()).collect();
    names.extend(cfg.solvers.iter().map(|s| s.name.clone()));
    let mut header = vec!["sigma".to_string()];
    for n in &names {
        header.push(format!("{n}_rho00_tail"));
    }
    for d in &cfg.drivings {
        header.push(format!("{}_se", d.name()));
    }
    let mut summary = Table::new(&header);
    for (k, &s) in sigmas.iter().enumerate() {
        let c = cfg.with_sigma(s);
        let runs = if c.drivings.is_empty() {
            Vec::new()
        } else {
            simulate(&c)?
        };
        let sols = if c.solvers.is_empty() {
            Vec::new()
        } else {
            solve(&c)?
        };
        let prefix = format!("sweep_{k:02}");
        write_runs(out, &prefix, &runs)?;
        write_solutions(out, &prefix, &sols)?;
        let mut row = vec![s];
        for (_, r) in &runs {
            row.push(trailing_mean(&r.times, &r.rho00(), window)?);
        }
        for (_, sol) in &sols {
            row.push(trailing_mean(&sol.times, &sol.rho00(), window)?);
        }
        for (_, r) in &runs {
            row.push(trailing_mean(&r.times, &r.se_rho00, window)?);
        }
        summary.push(row);
    }
    write(out, "sweep_summary.csv", &summary)
}

/// A named density-matrix series available to checks.
struct Series {
    obs: ObservableSeries,
    rho: Vec<DensityMat>,
    se: Option<Vec<f64>>,
}

impl Series {
    fn values(&self, o: Observable) -> &[f64] {
        match o {
            Observable::Rho00 => &self.obs.rho00,
            Observable::ReRho10 => &self.obs.re_rho10,
            Observable::ImRho10 => &self.obs.im_rho10,
            Observable::Eig0 => &self.obs.eig0,
        }
    }
}

fn reproduce(cfg: &ExperimentConfig, out: &Path, check: bool) -> Result<(), Failure> {
    let runs = if cfg.drivings.is_empty() {
        Vec::new()
    } else {
        simulate(cfg)?
    };
    let sols = if cfg.solvers.is_empty() {
        Vec::new()
    } else {
        solve(cfg)?
    };
    write_runs(out, "simulate", &runs)?;
    write_solutions(out, "solve", &sols)?;
    if runs
        .iter()
        .any(|(d, _)| sols.iter().any(|(s, _)| s.kind.pairs_with(*d)))
    {
        compare(out, &runs, &sols)?;
    }
    if cfg.sweep.is_some() {
        sweep(cfg, out)?;
    }
    if !check {
        return Ok(());
    }
    let mut series = BTreeMap::new();
    for (d, r) in &runs {
        series.insert(
            d.name().to_string(),
            Series {
                obs: observables(&r.times, &r.rho_mean)?,
                rho: r.rho_mean.clone(),
                se: Some(r.se_rho00.clone()),
            },
        );
    }
    for (s, sol) in &sols {
        series.insert(
            s.name.clone(),
            Series {
                obs: observables(&sol.times, &sol.rho)?,
                rho: sol.rho.clone(),
                se: None,
            },
        );
    }
    let mut failed = 0;
    for c in &cfg.checks {
        let (ok, msg) = match evaluate(c, &series, cfg.noise.theta) {
            Ok(v) => v,
            Err(e) => (false, format!("{}: {e}", check_label(c))),
        };
        println!("{} {msg}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Failure::Checks(failed));
    }
    Ok(())
}

fn check_label(c: &Check) -> String {
    match c {
        Check::Stationary { series, .. } => format!("stationary {series}"),
        Check::MaxError {
            a, b, observable, ..
        } => format!("max_error {a} vs {b} ({})", observable.name()),
        Check::Frequency { series, .. } => format!("frequency {series}"),
        Check::FrequencyOrder { series, .. } => format!("frequency_order {}", series.join(" < ")),
        Check::Amplitude { series, .. } => format!("amplitude {series}"),
        Check::EnvelopeRatio { series, .. } => format!("envelope_ratio {series}"),
        Check::Positivity { series, .. } => format!("positivity {series}"),
    }
}

/// Index range of `times` inside `[t0, t1]`, open ends meaning the full run.
fn window_indices(times: &[f64], t0: Option<f64>, t1: Option<f64>) -> (usize, usize) {
    let i0 = times.partition_point(|&t| t < t0.unwrap_or(f64::NEG_INFINITY));
    let i1 = times.partition_point(|&t| t <= t1.unwrap_or(f64::INFINITY));
    (i0, i1.max(i0))
}

fn evaluate(c: &Check, all: &BTreeMap<String, Series>, theta: f64) -> Result<(bool, String)> {
    let get = |name: &str| {
        all.get(name)
            .ok_or_else(|| Error::Config(format!("checks: unknown series {name:?}")))
    };
    let label = check_label(c);
    Ok(match c {
        Check::Stationary {
            series,
            lo,
            hi,
            window,
            observable,
        } => {
            let s = get(series)?;
            let w = window.unwrap_or(2.0 / theta);
            let mean = trailing_mean(&s.obs.times, s.values(*observable), w)?;
            let se = match &s.se {
                Some(se) => format!(" (se {:.2e})", trailing_mean(&s.obs.times, se, w)?),
                None => String::new(),
            };
            (
                (*lo..=*hi).contains(&mean),
                format!("{label}: trailing mean {mean:.5}{se} in [{lo}, {hi}]"),
            )
        }
        Check::MaxError {
            a,
            b,
            max,
            observable,
        } => {
            let (sa, sb) = (get(a)?, get(b)?);
            let (_, m) = abs_error(sa.values(*observable), sb.values(*observable))?;
            (m <= *max, format!("{label}: max error {m:.5} <= {max}"))
        }
        Check::Frequency {
            series,
            target,
            rel_tol,
            t0,
            t1,
            observable,
        } => {
            let s = get(series)?;
            let (i0, i1) = window_indices(&s.obs.times, *t0, *t1);
            let f = dominant_frequency(&s.obs.times[i0..i1], &s.values(*observable)[i0..i1])?;
            let ok = (f.omega - target).abs() <= rel_tol * target.abs();
            (
                ok,
                format!("{label}: omega {:.5} within {rel_tol} of {target}", f.omega),
            )
        }
        Check::FrequencyOrder {
            series,
            t0,
            t1,
            observable,
        } => {
            let mut est = Vec::new();
            for n in series {
                let s = get(n)?;
                let (i0, i1) = window_indices(&s.obs.times, *t0, *t1);
                est.push(dominant_frequency(
                    &s.obs.times[i0..i1],
                    &s.values(*observable)[i0..i1],
                )?);
            }
            let ok = est.windows(2).all(|w| {
                let gap = w[1].omega - w[0].omega;
                gap > 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt()
            });
            let vals: Vec<String> = est
                .iter()
                .map(|e| format!("{:.4}+-{:.4}", e.omega, e.stderr))
                .collect();
            (ok, format!("{label}: {}", vals.join(", ")))
        }
        Check::Amplitude {
            series,
            omega,
            t0,
            t1,
            target,
            tol,
            observable,
        } => {
            let s = get(series)?;
            let fit = oscillation_amplitude(&s.obs.times, s.values(*observable), *omega, *t0, *t1)?;
            let ok = (fit.amplitude - target).abs() <= *tol;
            (
                ok,
                format!(
                    "{label}: amplitude {:.5} within {tol} of {target}",
                    fit.amplitude
                ),
            )
        }
        Check::EnvelopeRatio {
            series,
            min,
            observable,
        } => {
            let s = get(series)?;
            let v = s.values(*observable);
            let center = trailing_mean(&s.obs.times, v, 2.0 / theta)?;
            let r = envelope_decay_ratio(&s.obs.times, v, center)?;
            (r >= *min, format!("{label}: ratio {r:.3} >= {min}"))
        }
        Check::Positivity {
            series,
            expect_violation,
        } => {
            let s = get(series)?;
            let rep = positivity_report(&s.obs.times, &s.rho)?;
            let ok = rep.is_positive() != *expect_violation;
            (
                ok,
                format!(
                    "{label}: min eigenvalue {:.3e} at t={:.3}, expected {}",
                    rep.min_eigenvalue,
                    rep.time_of_min,
                    if *expect_violation {
                        "a violation"
                    } else {
                        "none"
                    }
                ),
            )
        }
    })
}
