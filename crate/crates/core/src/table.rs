//! Comma-separated result tables.
//!
//! Every value is written in plain decimal notation with 12 significant
//! digits, so files are byte-identical whenever the numbers are.

use std::fmt::Write as _;
use std::path::Path;

use crate::analysis::observables;
use crate::ensemble::EnsembleResult;
use crate::error::Result;
use crate::qme::QmeSolution;

/// Leading columns shared by ensemble and solver tables.
pub const BASE_COLUMNS: [&str; 10] = [
    "t",
    "rho00",
    "rho11",
    "re_rho10",
    "im_rho10",
    "eig0",
    "eig1",
    "purity",
    "norm_mean",
    "se_rho00",
];

/// Cross-correlation columns appended for colored driving.
pub const CROSS_COLUMNS: [&str; 8] = [
    "re_c00", "im_c00", "re_c01", "im_c01", "re_c10", "im_c10", "re_c11", "im_c11",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format_sig12(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Decimal representation with 12 significant digits.
pub fn format_sig12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let mut exp = x.abs().log10().floor() as i32;
    // Rounding to 12 digits can carry into the next decade.
    let scaled = x.abs() / 10f64.powi(exp);
    if (scaled * 1e11).round() >= 1e12 {
        exp += 1;
    }
    let decimals = (11 - exp).max(0) as usize;
    let mut s = String::new();
    write!(s, "{:.*}", decimals, x).unwrap();
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s.remove(0);
    }
    s
}

/// Writes `table` to `path`.
pub fn emit_table(table: &Table, path: &Path) -> Result<()> {
    std::fs::write(path, table.to_csv())?;
    Ok(())
}

/// One row per recorded time of an ensemble run.
pub fn ensemble_table(res: &EnsembleResult) -> Result<Table> {
    let colored = res.driving.is_colored();
    let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
    if colored {
        header.extend(CROSS_COLUMNS);
    }
    let mut table = Table::new(&header);
    let obs = observables(&res.times, &res.rho_mean)?;
    for i in 0..obs.len() {
        let mut row = vec![
            obs.times[i],
            obs.rho00[i],
            obs.rho11[i],
            obs.re_rho10[i],
            obs.im_rho10[i],
            obs.eig0[i],
            obs.eig1[i],
            obs.purity[i],
            res.norm_mean[i],
            res.se_rho00[i],
        ];
        if colored {
            let c = &res.cross_corr[i];
            for (r, col) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                row.push(c[(r, col)].re);
                row.push(c[(r, col)].im);
            }
        }
        table.push(row);
    }
    Ok(table)
}

/// Solver output in the same column layout; `norm_mean` holds the trace and
/// `se_rho00` is zero.
pub fn qme_table(sol: &QmeSolution) -> Result<Table> {
    let mut table = Table::new(&BASE_COLUMNS);
    let obs = observables(&sol.times, &sol.rho)?;
    for (i, rho) in sol.rho.iter().enumerate() {
        table.push(vec![
            obs.times[i],
            obs.rho00[i],
            obs.rho11[i],
            obs.re_rho10[i],
            obs.im_rho10[i],
            obs.eig0[i],
            obs.eig1[i],
            obs.purity[i],
            rho.trace().re,
            0.0,
        ]);
    }
    Ok(table)
}
