use std::path::Path;
use std::process::Command;

const BASE: &str = r#"
[system]
epsilon = 1.0
omega = 2.0
coupling_axis = "x"

[noise]
sigma = 0.7
theta = 1.0

[integrator]
t_final = 1.0
record_stride = 100

[ensemble]
trajectories = 40
seed = 9
"#;

fn oqsim(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_oqsim"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let j = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(j).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn noise_off_matches_closed_evolution() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "driving = [\"white\", \"upsilon\", \"ou_hamiltonian\"]\n{}",
        BASE.replace("sigma = 0.7", "sigma = 0.0")
            .replace("trajectories = 40", "trajectories = 2")
    );
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = dir.path().join("out");
    let (code, _, err) = oqsim(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    // Rabi oscillation for H = -(1/2) sz + 2 sx.
    let r = (0.25f64 + 4.0).sqrt();
    for d in ["white", "upsilon", "ou_hamiltonian"] {
        let csv = std::fs::read_to_string(out.join(format!("simulate_{d}.csv"))).unwrap();
        let t = column(&csv, "t");
        let p = column(&csv, "rho00");
        for (t, p) in t.iter().zip(&p) {
            let exact = 1.0 - 4.0 / (r * r) * (r * t).sin().powi(2);
            assert!(
                (p - exact).abs() <= 10.0 * 1e-4,
                "{d} t={t}: {p} vs {exact}"
            );
        }
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &format!("driving = \"upsilon\"\n{BASE}"),
    );
    let mut files = Vec::new();
    for (k, w) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("o{k}"));
        let (code, _, err) = oqsim(&[
            "simulate",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--workers",
            w,
        ]);
        assert_eq!(code, 0, "{err}");
        files.push(std::fs::read(out.join("simulate_upsilon.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let csv = String::from_utf8(files[0].clone()).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "t,rho00,rho11,re_rho10,im_rho10,eig0,eig1,purity,norm_mean,se_rho00,\
         re_c00,im_c00,re_c01,im_c01,re_c10,im_c10,re_c11,im_c11"
    );
    assert_eq!(csv.lines().count(), 102);
}

#[test]
fn seed_flag_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &format!("driving = \"white\"\n{BASE}"),
    );
    let mut files = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(seed);
        let (code, _, _) = oqsim(&[
            "simulate",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(code, 0);
        files.push(std::fs::read(out.join("simulate_white.csv")).unwrap());
    }
    assert_ne!(files[0], files[1]);
}

#[test]
fn compare_emits_both_series_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &format!("driving = \"upsilon\"\n{BASE}"),
    );
    let out = dir.path().join("out");
    let (code, stdout, err) = oqsim(&["compare", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("upsilon vs redfield_upsilon"));
    let csv = std::fs::read_to_string(out.join("compare_upsilon_redfield_upsilon.csv")).unwrap();
    let a = column(&csv, "sse_rho00");
    let b = column(&csv, "qme_rho00");
    let e = column(&csv, "err_rho00");
    for i in 0..a.len() {
        assert!(((a[i] - b[i]).abs() - e[i]).abs() < 1e-10);
    }
}

#[test]
fn solve_and_sweep_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "driving = \"white\"\n{BASE}\n[[solvers]]\nkind = \"lindblad\"\n\n[[solvers]]\nkind = \"closed_xou\"\n\n\
         [sweep]\nsigma = [0.1, 0.7]\n"
    );
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    assert_eq!(oqsim(&["solve", "--config", &cfg, "--out", o]).0, 0);
    let csv = std::fs::read_to_string(out.join("solve_lindblad.csv")).unwrap();
    assert_eq!(csv.lines().count(), 102);
    assert_eq!(oqsim(&["sweep", "--config", &cfg, "--out", o]).0, 0);
    for f in [
        "sweep_00_white.csv",
        "sweep_01_white.csv",
        "sweep_01_closed_xou.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary = std::fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    assert_eq!(column(&summary, "sigma"), vec![0.1, 0.7]);
}

#[test]
fn noise_stats_tables() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{BASE}\n[noise_stats]\npaths = 8\nlags = 4\nmax_lag = 0.5\n");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = dir.path().join("out");
    let (code, _, err) = oqsim(&[
        "noise-stats",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let ou = std::fs::read_to_string(out.join("ou_stats.csv")).unwrap();
    assert_eq!(column(&ou, "lag"), vec![0.0, 0.125, 0.25, 0.375, 0.5]);
    assert_eq!(column(&ou, "analytic_ou")[0], 0.245);
    let spec = std::fs::read_to_string(out.join("spectral.csv")).unwrap();
    assert_eq!(spec.lines().count(), 202);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("out");
    let o = o.to_str().unwrap();

    let bad = write_config(
        dir.path(),
        "bad.toml",
        &BASE.replace("sigma = 0.7", "sigma = -1.0"),
    );
    let (code, _, err) = oqsim(&["simulate", "--config", &bad, "--out", o]);
    assert_eq!(code, 1);
    assert!(err.contains("noise.sigma"), "{err}");

    let typo = write_config(
        dir.path(),
        "typo.toml",
        &BASE.replace("seed = 9", "sed = 9"),
    );
    let (code, _, err) = oqsim(&["simulate", "--config", &typo, "--out", o]);
    assert_eq!(code, 1);
    assert!(err.contains("line"), "{err}");

    let herm = format!(
        "driving = \"upsilon\"\n{}",
        BASE.replace(
            "coupling_axis = \"x\"",
            "coupling_matrix = [[[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]"
        )
    );
    let herm = write_config(dir.path(), "herm.toml", &herm);
    let (code, _, err) = oqsim(&["simulate", "--config", &herm, "--out", o]);
    assert_eq!(code, 1);
    assert!(err.contains("Hermitian"), "{err}");

    assert_eq!(
        oqsim(&["simulate", "--config", "/nonexistent.toml", "--out", o]).0,
        1
    );
    assert_eq!(oqsim(&["reproduce", "--preset", "nope", "--out", o]).0, 1);
    assert_eq!(oqsim(&["frobnicate"]).0, 1);

    // A blown-up linear trajectory is a numerical failure.
    let blow = format!(
        "driving = \"white\"\nwhite_unraveling = \"jump\"\n{}",
        BASE.replace("sigma = 0.7", "sigma = 1e150").replace(
            "record_stride = 100",
            "record_stride = 100\nrenormalize = false"
        )
    );
    let blow = write_config(dir.path(), "blow.toml", &blow);
    assert_eq!(oqsim(&["simulate", "--config", &blow, "--out", o]).0, 2);
}

#[test]
fn reproduce_checks_set_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("out");
    let o = o.to_str().unwrap();
    let pass = format!(
        "driving = \"white\"\n{BASE}\n[[solvers]]\nkind = \"lindblad\"\n\n\
         [[checks]]\nkind = \"max_error\"\na = \"white\"\nb = \"lindblad\"\nmax = 0.5\n\n\
         [[checks]]\nkind = \"positivity\"\nseries = \"lindblad\"\n"
    );
    let cfg = write_config(dir.path(), "pass.toml", &pass);
    let (code, stdout, err) = oqsim(&["reproduce", "--config", &cfg, "--out", o, "--check"]);
    assert_eq!(code, 0, "{stdout}{err}");
    assert_eq!(stdout.matches("PASS").count(), 2);

    let fail = pass.replace("max = 0.5", "max = 0.0");
    let cfg = write_config(dir.path(), "fail.toml", &fail);
    let (code, stdout, _) = oqsim(&["reproduce", "--config", &cfg, "--out", o, "--check"]);
    assert_eq!(code, 3);
    assert!(stdout.contains("FAIL max_error"));

    // Without --check the same run succeeds.
    assert_eq!(oqsim(&["reproduce", "--config", &cfg, "--out", o]).0, 0);
    // --full needs a [full] table.
    assert_eq!(
        oqsim(&["reproduce", "--config", &cfg, "--out", o, "--full"]).0,
        1
    );
}
