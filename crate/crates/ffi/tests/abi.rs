use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use oqsim_ffi::*;

const CONFIG: &str = r#"
driving = "upsilon"

[system]
epsilon = 0.0
omega = 0.0
coupling_axis = "x"

[noise]
sigma = 0.7
theta = 1.0

[integrator]
t_final = 0.5
record_stride = 100

[ensemble]
trajectories = 64
seed = 5
workers = 1

[[solvers]]
kind = "redfield_upsilon"
"#;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        oqsim_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn parse(text: &str) -> (OqsimStatus, *mut OqsimConfig) {
    let c = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    let st = unsafe { oqsim_config_parse(c.as_ptr(), &mut cfg) };
    (st, cfg)
}

#[test]
fn ensemble_and_solution_round_trip() {
    let (st, cfg) = parse(CONFIG);
    assert_eq!(st, OqsimStatus::Ok, "{}", last_error());
    unsafe {
        let mut ens = ptr::null_mut();
        assert_eq!(
            oqsim_simulate(cfg, OqsimDriving::Upsilon, &mut ens),
            OqsimStatus::Ok
        );
        let mut n = 0usize;
        assert_eq!(oqsim_ensemble_len(ens, &mut n), OqsimStatus::Ok);
        assert_eq!(n, 51);
        let mut t = vec![0.0; n];
        let mut r = vec![0.0; n];
        assert_eq!(
            oqsim_ensemble_times(ens, t.as_mut_ptr(), n),
            OqsimStatus::Ok
        );
        assert_eq!(
            oqsim_ensemble_rho00(ens, r.as_mut_ptr(), n),
            OqsimStatus::Ok
        );
        assert!((t[n - 1] - 0.5).abs() < 1e-12);
        assert_eq!(r[0], 1.0);
        let mut rho = [0.0; 8];
        assert_eq!(
            oqsim_ensemble_rho(ens, n - 1, rho.as_mut_ptr()),
            OqsimStatus::Ok
        );
        assert_eq!(rho[0], r[n - 1]);
        assert!((rho[0] + rho[6] - 1.0).abs() < 1e-12);
        assert_eq!(
            oqsim_ensemble_rho(ens, n, rho.as_mut_ptr()),
            OqsimStatus::OutOfRange
        );
        assert_eq!(
            oqsim_ensemble_times(ens, t.as_mut_ptr(), n - 1),
            OqsimStatus::OutOfRange
        );

        let mut count = 0usize;
        assert_eq!(oqsim_config_solver_count(cfg, &mut count), OqsimStatus::Ok);
        assert_eq!(count, 1);
        let mut sol = ptr::null_mut();
        assert_eq!(oqsim_solve(cfg, 0, &mut sol), OqsimStatus::Ok);
        let mut m = 0usize;
        assert_eq!(oqsim_solution_len(sol, &mut m), OqsimStatus::Ok);
        assert_eq!(m, n);
        let mut q = vec![0.0; m];
        assert_eq!(
            oqsim_solution_rho00(sol, q.as_mut_ptr(), m),
            OqsimStatus::Ok
        );
        assert!(q.iter().zip(&r).all(|(a, b)| (a - b).abs() < 0.2));
        assert_eq!(oqsim_solve(cfg, 1, &mut sol), OqsimStatus::OutOfRange);
        assert!(sol.is_null());

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("e.csv").to_str().unwrap()).unwrap();
        assert_eq!(
            oqsim_ensemble_write_csv(ens, path.as_ptr()),
            OqsimStatus::Ok
        );
        let csv = std::fs::read_to_string(dir.path().join("e.csv")).unwrap();
        assert_eq!(csv.lines().count(), n + 1);

        oqsim_ensemble_free(ens);
        oqsim_config_free(cfg);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let (st, cfg) = parse(&CONFIG.replace("sigma = 0.7", "sigma = -1.0"));
    assert_eq!(st, OqsimStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("noise.sigma"));

    let bad = CONFIG.replace(
        "coupling_axis = \"x\"",
        "coupling_matrix = [[[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]",
    );
    assert_eq!(parse(&bad).0, OqsimStatus::ConstraintViolation);

    unsafe {
        let mut n = 0usize;
        assert_eq!(
            oqsim_ensemble_len(ptr::null(), &mut n),
            OqsimStatus::NullPointer
        );
        assert_eq!(
            oqsim_config_parse(ptr::null(), &mut ptr::null_mut()),
            OqsimStatus::NullPointer
        );
        oqsim_config_free(ptr::null_mut());
        let (mut re, mut im) = (0.0, 0.0);
        assert_eq!(
            oqsim_gamma_upsilon(1.0, 0.0, 0.7, 0.0, &mut re, &mut im),
            OqsimStatus::InvalidArgument
        );
    }
}

#[test]
fn scalar_functions() {
    unsafe {
        let (mut re, mut im) = (0.0, 0.0);
        assert_eq!(
            oqsim_gamma_upsilon(3.0, 0.0, 0.7, 1.0, &mut re, &mut im),
            OqsimStatus::Ok
        );
        assert!((re - 0.245).abs() < 1e-12 && im.abs() < 1e-12);
        let (mut re2, mut im2) = (0.0, 0.0);
        assert_eq!(
            oqsim_gamma_ou(3.0, 2.0, 0.7, 1.0, &mut re2, &mut im2),
            OqsimStatus::Ok
        );
        assert_eq!(
            oqsim_gamma_upsilon(3.0, 2.0, 0.7, 1.0, &mut re, &mut im),
            OqsimStatus::Ok
        );
        assert!((re + re2 - 0.245).abs() < 1e-12 && (im + im2).abs() < 1e-12);
        let mut s = 0.0;
        assert_eq!(
            oqsim_spectral_density(OqsimSpectrum::Upsilon, 1.0, 0.7, 1.0, &mut s),
            OqsimStatus::Ok
        );
        assert!((s - 0.245).abs() < 1e-12);
        let v = CStr::from_ptr(oqsim_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_against_header() {
    let cc = match Command::new("cc").arg("--version").output() {
        Ok(o) if o.status.success() => "cc",
        _ => return,
    };
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("oqsim.h").exists());
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("liboqsim_ffi.a");
    if !lib.exists() {
        eprintln!("static library not found at {}, skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <math.h>
#include <stdio.h>
#include "oqsim.h"

int main(void) {
    double re = 0.0, im = 0.0;
    if (oqsim_gamma_upsilon(2.0, INFINITY, 0.7, 1.0, &re, &im) != OQSIM_STATUS_OK) return 1;
    /* 2 Re Gamma(omega, inf) = sigma^2 omega^2 / (omega^2 + theta^2) */
    if (fabs(2.0 * re - 0.49 * 4.0 / 5.0) > 1e-12) return 2;
    OqsimConfig *cfg = NULL;
    if (oqsim_config_parse("nonsense", &cfg) != OQSIM_STATUS_CONFIG) return 3;
    char msg[256];
    if (oqsim_last_error(msg, sizeof msg) == 0) return 4;
    printf("ok %s\n", oqsim_version());
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
