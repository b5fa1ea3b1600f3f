//! C ABI for `oqsim`.
//!
//! All entry points return an [`OqsimStatus`]; on failure the message is
//! kept per thread and can be read with [`oqsim_last_error`]. Results are
//! opaque handles released with their `_free` function. Density matrices
//! are exchanged as 8 doubles: row-major `(re, im)` pairs.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use oqsim::config::{parse_config, DrivingKind, ExperimentConfig};
use oqsim::ensemble::{run_ensemble, EnsembleResult};
use oqsim::noise::{spectral_density, NoiseParams, SpectralKind};
use oqsim::qme::{gamma_ou, gamma_upsilon, QmeSolution};
use oqsim::quantum::{ComplexMat, DensityMat};
use oqsim::table::{emit_table, ensemble_table, qme_table};
use oqsim::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OqsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    ConstraintViolation = 4,
    IntegrationFailure = 5,
    NotApplicable = 6,
    NotEstimable = 7,
    Config = 8,
    Io = 9,
    OutOfRange = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OqsimDriving {
    White = 0,
    Upsilon = 1,
    OuHamiltonian = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OqsimSpectrum {
    White = 0,
    OuProcess = 1,
    Upsilon = 2,
}

/// Parsed experiment configuration.
pub struct OqsimConfig(ExperimentConfig);

/// Ensemble-averaged trajectory run.
pub struct OqsimEnsemble(EnsembleResult);

/// Master-equation solution.
pub struct OqsimSolution(QmeSolution);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> OqsimStatus {
    match e {
        Error::InvalidArgument(_) => OqsimStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => OqsimStatus::DimensionMismatch,
        Error::ConstraintViolation { .. } => OqsimStatus::ConstraintViolation,
        Error::IntegrationFailure { .. } => OqsimStatus::IntegrationFailure,
        Error::NotApplicable(_) => OqsimStatus::NotApplicable,
        Error::NotEstimable(_) => OqsimStatus::NotEstimable,
        Error::Config(_) => OqsimStatus::Config,
        Error::Io(_) => OqsimStatus::Io,
    }
}

fn fail(status: OqsimStatus, msg: impl Into<String>) -> OqsimStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), OqsimStatus>) -> OqsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            OqsimStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(OqsimStatus::Panic, msg)
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, OqsimStatus>;
}

impl<T> OrStatus<T> for oqsim::Result<T> {
    fn or_status(self) -> Result<T, OqsimStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

unsafe fn borrow<'a, T>(p: *const T) -> Result<&'a T, OqsimStatus> {
    p.as_ref()
        .ok_or_else(|| fail(OqsimStatus::NullPointer, "null handle"))
}

unsafe fn c_str<'a>(p: *const c_char) -> Result<&'a str, OqsimStatus> {
    if p.is_null() {
        return Err(fail(OqsimStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(OqsimStatus::InvalidArgument, "string is not UTF-8"))
}

unsafe fn out_ptr<'a, T>(p: *mut T) -> Result<&'a mut T, OqsimStatus> {
    p.as_mut()
        .ok_or_else(|| fail(OqsimStatus::NullPointer, "null output pointer"))
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize) -> Result<(), OqsimStatus> {
    if dst.is_null() {
        return Err(fail(OqsimStatus::NullPointer, "null output buffer"));
    }
    if len < src.len() {
        return Err(fail(
            OqsimStatus::OutOfRange,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

unsafe fn copy_density(m: &ComplexMat, dst: *mut f64) -> Result<(), OqsimStatus> {
    let flat: Vec<f64> = m.as_slice().iter().flat_map(|z| [z.re, z.im]).collect();
    copy_out(&flat, dst, flat.len())
}

fn params(sigma: f64, theta: f64) -> Result<NoiseParams, OqsimStatus> {
    NoiseParams::new(sigma, theta).or_status()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
#[no_mangle]
pub unsafe extern "C" fn oqsim_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn oqsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parses a TOML configuration.
#[no_mangle]
pub unsafe extern "C" fn oqsim_config_parse(
    text: *const c_char,
    out: *mut *mut OqsimConfig,
) -> OqsimStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let cfg = parse_config(c_str(text)?).or_status()?;
        *out = Box::into_raw(Box::new(OqsimConfig(cfg)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn oqsim_config_free(cfg: *mut OqsimConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Number of `[[solvers]]` entries.
#[no_mangle]
pub unsafe extern "C" fn oqsim_config_solver_count(
    cfg: *const OqsimConfig,
    out: *mut usize,
) -> OqsimStatus {
    guard(|| {
        *out_ptr(out)? = borrow(cfg)?.0.solvers.len();
        Ok(())
    })
}

/// Runs the ensemble configured in `cfg` for one driving.
#[no_mangle]
pub unsafe extern "C" fn oqsim_simulate(
    cfg: *const OqsimConfig,
    driving: OqsimDriving,
    out: *mut *mut OqsimEnsemble,
) -> OqsimStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let cfg = &borrow(cfg)?.0;
        let kind = match driving {
            OqsimDriving::White => DrivingKind::White,
            OqsimDriving::Upsilon => DrivingKind::Upsilon,
            OqsimDriving::OuHamiltonian => DrivingKind::OuHamiltonian,
        };
        let ens = cfg.require_ensemble().or_status()?;
        let res = run_ensemble(
            &cfg.driving(kind),
            &cfg.hamiltonian(),
            &cfg.system.initial_state,
            &cfg.integrator,
            &ens,
        )
        .or_status()?;
        *out = Box::into_raw(Box::new(OqsimEnsemble(res)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn oqsim_ensemble_free(e: *mut OqsimEnsemble) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Number of recorded times.
#[no_mangle]
pub unsafe extern "C" fn oqsim_ensemble_len(
    e: *const OqsimEnsemble,
    out: *mut usize,
) -> OqsimStatus {
    guard(|| {
        *out_ptr(out)? = borrow(e)?.0.times.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn oqsim_ensemble_times(
    e: *const OqsimEnsemble,
    buf: *mut f64,
    len: usize,
) -> OqsimStatus {
    guard(|| copy_out(&borrow(e)?.0.times, buf, len))
}

#[no_mangle]
pub unsafe extern "C" fn oqsim_ensemble_rho00(
    e: *const OqsimEnsemble,
    buf: *mut f64,
    len: usize,
) -> OqsimStatus {
    guard(|| copy_out(&borrow(e)?.0.rho00(), buf, len))
}

/// Standard error of the ensemble `rho00` at every recorded time.
#[no_mangle]
pub unsafe extern "C" fn oqsim_ensemble_se_rho00(
    e: *const OqsimEnsemble,
    buf: *mut f64,
    len: usize,
) -> OqsimStatus {
    guard(|| copy_out(&borrow(e)?.0.se_rho00, buf, len))
}

/// Mean density matrix at record `idx`, written as 8 doubles.
#[no_mangle]
pub unsafe extern "C" fn oqsim_ensemble_rho(
    e: *const OqsimEnsemble,
    idx: usize,
    rho: *mut f64,
) -> OqsimStatus {
    guard(|| {
        let e = &borrow(e)?.0;
        let m = e.rho_mean.get(idx).ok_or_else(|| {
            fail(
                OqsimStatus::OutOfRange,
                format!("record {idx} out of range"),
            )
        })?;
        copy_density(m, rho)
    })
}

#[no_mangle]
pub unsafe extern "C" fn oqsim_ensemble_write_csv(
    e: *const OqsimEnsemble,
    path: *const c_char,
) -> OqsimStatus {
    guard(|| {
        let table = ensemble_table(&borrow(e)?.0).or_status()?;
        emit_table(&table, Path::new(c_str(path)?)).or_status()
    })
}

/// Solves the `index`-th configured solver from the configured initial state.
#[no_mangle]
pub unsafe extern "C" fn oqsim_solve(
    cfg: *const OqsimConfig,
    index: usize,
    out: *mut *mut OqsimSolution,
) -> OqsimStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let cfg = &borrow(cfg)?.0;
        let s = cfg.solvers.get(index).ok_or_else(|| {
            fail(
                OqsimStatus::OutOfRange,
                format!("solver {index} out of range"),
            )
        })?;
        let rho0 = DensityMat::pure(&cfg.system.initial_state);
        let sol = cfg
            .solver_model(s)
            .and_then(|m| m.solve(&rho0, &cfg.ode_grid(s)))
            .or_status()?;
        *out = Box::into_raw(Box::new(OqsimSolution(sol)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn oqsim_solution_free(s: *mut OqsimSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn oqsim_solution_len(
    s: *const OqsimSolution,
    out: *mut usize,
) -> OqsimStatus {
    guard(|| {
        *out_ptr(out)? = borrow(s)?.0.times.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn oqsim_solution_times(
    s: *const OqsimSolution,
    buf: *mut f64,
    len: usize,
) -> OqsimStatus {
    guard(|| copy_out(&borrow(s)?.0.times, buf, len))
}

#[no_mangle]
pub unsafe extern "C" fn oqsim_solution_rho00(
    s: *const OqsimSolution,
    buf: *mut f64,
    len: usize,
) -> OqsimStatus {
    guard(|| copy_out(&borrow(s)?.0.rho00(), buf, len))
}

#[no_mangle]
pub unsafe extern "C" fn oqsim_solution_rho(
    s: *const OqsimSolution,
    idx: usize,
    rho: *mut f64,
) -> OqsimStatus {
    guard(|| {
        let s = &borrow(s)?.0;
        let m = s.rho.get(idx).ok_or_else(|| {
            fail(
                OqsimStatus::OutOfRange,
                format!("record {idx} out of range"),
            )
        })?;
        copy_density(m, rho)
    })
}

#[no_mangle]
pub unsafe extern "C" fn oqsim_solution_write_csv(
    s: *const OqsimSolution,
    path: *const c_char,
) -> OqsimStatus {
    guard(|| {
        let table = qme_table(&borrow(s)?.0).or_status()?;
        emit_table(&table, Path::new(c_str(path)?)).or_status()
    })
}

/// Redfield rate for Υ-noise at Bohr frequency `omega` and time `t`
/// (`t` may be `INFINITY`).
#[no_mangle]
pub unsafe extern "C" fn oqsim_gamma_upsilon(
    omega: f64,
    t: f64,
    sigma: f64,
    theta: f64,
    re: *mut f64,
    im: *mut f64,
) -> OqsimStatus {
    guard(|| {
        let g = gamma_upsilon(omega, t, &params(sigma, theta)?);
        *out_ptr(re)? = g.re;
        *out_ptr(im)? = g.im;
        Ok(())
    })
}

/// Redfield rate for the OU process.
#[no_mangle]
pub unsafe extern "C" fn oqsim_gamma_ou(
    omega: f64,
    t: f64,
    sigma: f64,
    theta: f64,
    re: *mut f64,
    im: *mut f64,
) -> OqsimStatus {
    guard(|| {
        let g = gamma_ou(omega, t, &params(sigma, theta)?);
        *out_ptr(re)? = g.re;
        *out_ptr(im)? = g.im;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn oqsim_spectral_density(
    kind: OqsimSpectrum,
    omega: f64,
    sigma: f64,
    theta: f64,
    out: *mut f64,
) -> OqsimStatus {
    guard(|| {
        let k = match kind {
            OqsimSpectrum::White => SpectralKind::White,
            OqsimSpectrum::OuProcess => SpectralKind::OuProcess,
            OqsimSpectrum::Upsilon => SpectralKind::Upsilon,
        };
        *out_ptr(out)? = spectral_density(k, omega, &params(sigma, theta)?);
        Ok(())
    })
}
