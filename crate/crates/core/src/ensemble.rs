//! Parallel trajectory ensembles.
//!
//! Trajectory `m` always draws from stream `(master_seed, m)`. Per-trajectory
//! sums are combined by a fixed binary tree over the index range, so the
//! floating-point result does not depend on the number of workers.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::noise::RngStream;
use crate::quantum::{ComplexMat, DensityMat, StateVec, ZERO};
use crate::sse::{propagate_with, IntegratorConfig, SSEDriving, Sample, TrajectoryRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    /// Number of trajectories `M`.
    pub trajectories: usize,
    pub master_seed: u64,
    /// Worker threads; 0 picks the available parallelism.
    pub workers: usize,
    /// Keep every trajectory record in the result.
    pub keep_trajectories: bool,
}

impl EnsembleConfig {
    pub fn new(trajectories: usize, master_seed: u64) -> Self {
        Self {
            trajectories,
            master_seed,
            workers: 0,
            keep_trajectories: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories < 2 {
            return Err(Error::InvalidArgument(format!(
                "ensemble needs at least 2 trajectories, got {}",
                self.trajectories
            )));
        }
        Ok(())
    }
}

/// Averaged time series of an ensemble run.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub rho_mean: Vec<DensityMat>,
    /// `E[X_t |psi_t><psi_t|]`; zero for white noise.
    pub cross_corr: Vec<ComplexMat>,
    /// `E[X_t]`; zero for white noise.
    pub ou_mean: Vec<f64>,
    /// Mean squared norm before rescaling.
    pub norm_mean: Vec<f64>,
    pub norm_se: Vec<f64>,
    pub se_rho00: Vec<f64>,
    pub trajectories: Option<Vec<TrajectoryRecord>>,
    pub trajectory_count: usize,
    pub renormalized: bool,
    pub driving: SSEDriving,
    pub hamiltonian: ComplexMat,
    pub dt: f64,
}

impl EnsembleResult {
    pub fn rho00(&self) -> Vec<f64> {
        self.rho_mean.iter().map(|r| r[(0, 0)].re).collect()
    }
}

// Per-time sums over a contiguous block of trajectories.
struct Acc {
    rho: Vec<Complex64>,
    xrho: Vec<Complex64>,
    x: Vec<f64>,
    norm: Vec<f64>,
    norm2: Vec<f64>,
    r00: Vec<f64>,
    r00sq: Vec<f64>,
    records: Vec<TrajectoryRecord>,
}

impl Acc {
    fn zeros(n_rec: usize, n: usize, colored: bool) -> Self {
        let nn = n * n;
        Self {
            rho: vec![ZERO; n_rec * nn],
            xrho: if colored {
                vec![ZERO; n_rec * nn]
            } else {
                Vec::new()
            },
            x: if colored {
                vec![0.0; n_rec]
            } else {
                Vec::new()
            },
            norm: vec![0.0; n_rec],
            norm2: vec![0.0; n_rec],
            r00: vec![0.0; n_rec],
            r00sq: vec![0.0; n_rec],
            records: Vec::new(),
        }
    }

    fn merge(mut self, mut other: Acc) -> Acc {
        fn add<T: Copy + std::ops::AddAssign>(a: &mut [T], b: &[T]) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        add(&mut self.rho, &other.rho);
        add(&mut self.xrho, &other.xrho);
        add(&mut self.x, &other.x);
        add(&mut self.norm, &other.norm);
        add(&mut self.norm2, &other.norm2);
        add(&mut self.r00, &other.r00);
        add(&mut self.r00sq, &other.r00sq);
        self.records.append(&mut other.records);
        self
    }
}

struct Job<'a> {
    driving: &'a SSEDriving,
    h: &'a ComplexMat,
    psi0: &'a StateVec,
    integ: &'a IntegratorConfig,
    seed: u64,
    keep: bool,
    n_rec: usize,
}

impl Job<'_> {
    fn leaf(&self, index: usize) -> Result<Acc> {
        let n = self.h.dim();
        let nn = n * n;
        let colored = self.driving.is_colored();
        let mut acc = Acc::zeros(self.n_rec, n, colored);
        let mut rec = self.keep.then(|| TrajectoryRecord {
            times: Vec::with_capacity(self.n_rec),
            states: Vec::with_capacity(self.n_rec),
            ou_values: Vec::new(),
            norms_sq: Vec::with_capacity(self.n_rec),
        });
        let mut rng = RngStream::new(self.seed, index as u64);
        let mut visit = |s: Sample<'_>| {
            let j = s.index;
            let rho = &mut acc.rho[j * nn..(j + 1) * nn];
            for r in 0..n {
                for c in 0..n {
                    rho[r * n + c] = s.state[r] * s.state[c].conj();
                }
            }
            if let Some(x) = s.ou_value {
                acc.x[j] = x;
                let xrho = &mut acc.xrho[j * nn..(j + 1) * nn];
                for (dst, src) in xrho.iter_mut().zip(rho.iter()) {
                    *dst = src * x;
                }
            }
            acc.norm[j] = s.norm_sq;
            acc.norm2[j] = s.norm_sq * s.norm_sq;
            let r00 = rho[0].re;
            acc.r00[j] = r00;
            acc.r00sq[j] = r00 * r00;
            if let Some(rec) = rec.as_mut() {
                rec.times.push(s.time);
                rec.states.push(StateVec(s.state.to_vec()));
                if let Some(x) = s.ou_value {
                    rec.ou_values.push(x);
                }
                rec.norms_sq.push(s.norm_sq);
            }
        };
        propagate_with(
            self.driving,
            self.h,
            self.psi0,
            self.integ,
            &mut rng,
            &mut visit,
        )
        .map_err(|e| match e {
            Error::IntegrationFailure { step, reason, .. } => Error::IntegrationFailure {
                step,
                trajectory: Some(index),
                reason,
            },
            other => other,
        })?;
        acc.records.extend(rec);
        Ok(acc)
    }
}

/// Reduces `leaf(lo..hi)` over a fixed binary tree split at the midpoint of
/// each index range. The shape of the tree depends only on `lo..hi`, never on
/// scheduling. On failure the error of the lowest failing index is returned.
pub fn tree_reduce<T, L, M>(lo: usize, hi: usize, leaf: &L, merge: &M) -> Result<T>
where
    T: Send,
    L: Fn(usize) -> Result<T> + Sync,
    M: Fn(T, T) -> T + Sync,
{
    debug_assert!(hi > lo);
    if hi - lo == 1 {
        return leaf(lo);
    }
    let mid = lo + (hi - lo) / 2;
    let (a, b) = rayon::join(
        || tree_reduce(lo, mid, leaf, merge),
        || tree_reduce(mid, hi, leaf, merge),
    );
    Ok(merge(a?, b?))
}

/// Runs `f` on a pool of `workers` threads (0 = available parallelism).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs trajectories `0..M` and averages them.
pub fn run_ensemble(
    driving: &SSEDriving,
    h: &ComplexMat,
    psi0: &StateVec,
    integ: &IntegratorConfig,
    ens: &EnsembleConfig,
) -> Result<EnsembleResult> {
    ens.validate()?;
    run_range(driving, h, psi0, integ, ens, 0, ens.trajectories)
}

/// Runs the trajectory indices `lo..hi` of the stream family `ens.master_seed`.
pub fn run_range(
    driving: &SSEDriving,
    h: &ComplexMat,
    psi0: &StateVec,
    integ: &IntegratorConfig,
    ens: &EnsembleConfig,
    lo: usize,
    hi: usize,
) -> Result<EnsembleResult> {
    if hi <= lo + 1 {
        return Err(Error::InvalidArgument(format!(
            "trajectory range {lo}..{hi} must hold at least 2 trajectories"
        )));
    }
    integ.validate()?;
    let job = Job {
        driving,
        h,
        psi0,
        integ,
        seed: ens.master_seed,
        keep: ens.keep_trajectories,
        n_rec: integ.n_records(),
    };
    let acc = with_workers(ens.workers, || {
        tree_reduce(lo, hi, &|i| job.leaf(i), &|a: Acc, b: Acc| a.merge(b))
    })??;
    Ok(finish(acc, &job, hi - lo))
}

fn finish(acc: Acc, job: &Job<'_>, m: usize) -> EnsembleResult {
    let n = job.h.dim();
    let nn = n * n;
    let inv = 1.0 / m as f64;
    let colored = job.driving.is_colored();
    let mat_at = |buf: &[Complex64], j: usize| {
        let mut out = ComplexMat::zeros(n);
        for (dst, src) in out
            .as_mut_slice()
            .iter_mut()
            .zip(&buf[j * nn..(j + 1) * nn])
        {
            *dst = src * inv;
        }
        out
    };
    let se = |sum: f64, sumsq: f64| {
        let mean = sum * inv;
        let var = ((sumsq - m as f64 * mean * mean) / (m as f64 - 1.0)).max(0.0);
        (var * inv).sqrt()
    };
    let n_rec = job.n_rec;
    EnsembleResult {
        times: job.integ.record_times(),
        rho_mean: (0..n_rec)
            .map(|j| DensityMat::from_mat(mat_at(&acc.rho, j)))
            .collect(),
        cross_corr: (0..n_rec)
            .map(|j| {
                if colored {
                    mat_at(&acc.xrho, j)
                } else {
                    ComplexMat::zeros(n)
                }
            })
            .collect(),
        ou_mean: (0..n_rec)
            .map(|j| if colored { acc.x[j] * inv } else { 0.0 })
            .collect(),
        norm_mean: acc.norm.iter().map(|s| s * inv).collect(),
        norm_se: acc
            .norm
            .iter()
            .zip(&acc.norm2)
            .map(|(&s, &q)| se(s, q))
            .collect(),
        se_rho00: acc
            .r00
            .iter()
            .zip(&acc.r00sq)
            .map(|(&s, &q)| se(s, q))
            .collect(),
        trajectories: job.keep.then_some(acc.records),
        trajectory_count: m,
        renormalized: job.integ.renormalize,
        driving: job.driving.clone(),
        hamiltonian: job.h.clone(),
        dt: job.integ.dt,
    }
}

/// `(1/M) sum_m x_m(t) |psi_m(t)><psi_m(t)|` at recorded index `idx`.
pub fn cross_correlation(records: &[TrajectoryRecord], idx: usize) -> Result<ComplexMat> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidArgument("no trajectory records".into()))?;
    let n = first
        .states
        .get(idx)
        .ok_or_else(|| Error::InvalidArgument(format!("record index {idx} out of range")))?
        .dim();
    let mut acc = ComplexMat::zeros(n);
    for rec in records {
        let x = *rec.ou_values.get(idx).ok_or_else(|| {
            Error::InvalidArgument("cross correlation needs OU values (colored driving)".into())
        })?;
        let psi = &rec.states[idx];
        for r in 0..n {
            for c in 0..n {
                acc[(r, c)] += psi[r] * psi[c].conj() * x;
            }
        }
    }
    Ok(acc.scale_real(1.0 / records.len() as f64))
}

/// Per-time z-scores of `|E||psi||^2 - 1|`.
#[derive(Debug, Clone)]
pub struct MartingaleReport {
    pub z_scores: Vec<f64>,
    pub max_z: f64,
    pub max_deviation: f64,
    pub passed: bool,
}

/// Pass iff every z-score is at most 4. Only defined for linear runs.
pub fn martingale_check(result: &EnsembleResult) -> Result<MartingaleReport> {
    if result.renormalized {
        return Err(Error::NotApplicable(
            "martingale check needs a linear (non-renormalized) run".into(),
        ));
    }
    let mut max_dev: f64 = 0.0;
    let z_scores: Vec<f64> = result
        .norm_mean
        .iter()
        .zip(&result.norm_se)
        .map(|(&m, &se)| {
            let dev = (m - 1.0).abs();
            max_dev = max_dev.max(dev);
            if se > 0.0 {
                dev / se
            } else if dev <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let max_z = z_scores.iter().copied().fold(0.0, f64::max);
    Ok(MartingaleReport {
        passed: max_z <= 4.0,
        z_scores,
        max_z,
        max_deviation: max_dev,
    })
}

/// Two independent halves: indices `0..M/2` and `M/2..M`.
pub fn run_split_halves(
    driving: &SSEDriving,
    h: &ComplexMat,
    psi0: &StateVec,
    integ: &IntegratorConfig,
    ens: &EnsembleConfig,
) -> Result<(EnsembleResult, EnsembleResult)> {
    if ens.trajectories < 4 {
        return Err(Error::InvalidArgument(format!(
            "split halves need at least 4 trajectories, got {}",
            ens.trajectories
        )));
    }
    let mid = ens.trajectories / 2;
    let a = run_range(driving, h, psi0, integ, ens, 0, mid)?;
    let b = run_range(driving, h, psi0, integ, ens, mid, ens.trajectories)?;
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceEstimate {
    /// `max_t |rho00_a(t) - rho00_b(t)|`.
    pub discrepancy: f64,
    /// `0.5 / sqrt(M_half)`, the worst-case standard deviation of a [0, 1]
    /// observable averaged over one half.
    pub predicted: f64,
}

pub fn convergence_estimate(a: &EnsembleResult, b: &EnsembleResult) -> Result<ConvergenceEstimate> {
    if a.times.len() != b.times.len() {
        return Err(Error::DimensionMismatch {
            expected: a.times.len(),
            got: b.times.len(),
        });
    }
    let discrepancy = a
        .rho_mean
        .iter()
        .zip(&b.rho_mean)
        .map(|(x, y)| (x[(0, 0)].re - y[(0, 0)].re).abs())
        .fold(0.0, f64::max);
    let half = a.trajectory_count.min(b.trajectory_count) as f64;
    Ok(ConvergenceEstimate {
        discrepancy,
        predicted: 0.5 / half.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseParams;
    use crate::quantum::{build_hamiltonian, pauli, unitary_step_2x2, Axis};

    fn cfg(t_final: f64, stride: usize) -> IntegratorConfig {
        IntegratorConfig {
            dt: 1e-3,
            t_final,
            record_stride: stride,
            renormalize: true,
            ito_correction: true,
        }
    }

    fn up() -> StateVec {
        StateVec::basis(2, 0)
    }

    #[test]
    fn noiseless_pair_equals_deterministic_evolution() {
        let h = build_hamiltonian(1.0, 2.0);
        let d = SSEDriving::HamiltonianOU(pauli(Axis::X), NoiseParams::new(0.0, 1.0).unwrap());
        let integ = cfg(1.0, 100);
        let res = run_ensemble(&d, &h, &up(), &integ, &EnsembleConfig::new(2, 3)).unwrap();
        let single =
            crate::sse::propagate(&d, &h, &up(), &integ, &mut RngStream::new(3, 0)).unwrap();
        for (rho, psi) in res.rho_mean.iter().zip(&single.states) {
            let exact = crate::quantum::density_from_state(psi);
            assert!(rho.max_abs_diff(&exact) < 1e-15);
        }
        let u = unitary_step_2x2(&h, 1.0);
        assert!((res.rho00().last().unwrap() - u[(0, 0)].norm_sqr()).abs() < 1e-10);
        assert!(res.se_rho00.iter().all(|&s| s < 1e-9));
    }

    #[test]
    fn rejects_tiny_ensembles() {
        let d = SSEDriving::UpsilonOU(pauli(Axis::X), NoiseParams::new(0.7, 1.0).unwrap());
        let e = run_ensemble(
            &d,
            &ComplexMat::zeros(2),
            &up(),
            &cfg(0.1, 10),
            &EnsembleConfig::new(1, 0),
        );
        assert!(matches!(e, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        let h = build_hamiltonian(1.0, 2.0);
        let d = SSEDriving::UpsilonOU(pauli(Axis::Z), NoiseParams::new(0.7, 1.0).unwrap());
        let integ = cfg(0.5, 50);
        let run = |workers| {
            let ens = EnsembleConfig {
                trajectories: 37,
                master_seed: 11,
                workers,
                keep_trajectories: false,
            };
            run_ensemble(&d, &h, &up(), &integ, &ens).unwrap()
        };
        let bits = |r: &EnsembleResult| {
            let mut v: Vec<u64> = Vec::new();
            for m in r.rho_mean.iter().map(|m| m.as_mat()).chain(&r.cross_corr) {
                v.extend(
                    m.as_slice()
                        .iter()
                        .flat_map(|z| [z.re.to_bits(), z.im.to_bits()]),
                );
            }
            v.extend(r.norm_se.iter().chain(&r.se_rho00).map(|x| x.to_bits()));
            v
        };
        let base = bits(&run(1));
        assert_eq!(base, bits(&run(2)));
        assert_eq!(base, bits(&run(8)));
        assert_eq!(base, bits(&run(1)));
    }

    #[test]
    fn averages_are_valid_density_matrices() {
        let h = build_hamiltonian(1.0, 2.0);
        let p = NoiseParams::new(0.7, 1.0).unwrap();
        for d in [
            SSEDriving::white_unitary(&pauli(Axis::X), p),
            SSEDriving::UpsilonOU(pauli(Axis::X), p),
            SSEDriving::HamiltonianOU(pauli(Axis::X), p),
        ] {
            let res =
                run_ensemble(&d, &h, &up(), &cfg(2.0, 100), &EnsembleConfig::new(64, 5)).unwrap();
            for (rho, c) in res.rho_mean.iter().zip(&res.cross_corr) {
                assert!(rho.hermiticity_defect() <= 1e-12);
                assert!((rho.trace().re - 1.0).abs() < 1e-10);
                assert!(rho.min_eigenvalue() >= -1e-10);
                assert!(c.hermiticity_defect() <= 1e-12);
            }
        }
    }

    #[test]
    fn kept_records_reproduce_cross_correlation() {
        let d = SSEDriving::UpsilonOU(pauli(Axis::X), NoiseParams::new(0.7, 1.0).unwrap());
        let ens = EnsembleConfig {
            trajectories: 20,
            master_seed: 9,
            workers: 2,
            keep_trajectories: true,
        };
        let res = run_ensemble(&d, &ComplexMat::zeros(2), &up(), &cfg(0.3, 100), &ens).unwrap();
        let recs = res.trajectories.as_ref().unwrap();
        assert_eq!(recs.len(), 20);
        for idx in 0..res.times.len() {
            let c = cross_correlation(recs, idx).unwrap();
            assert!(c.max_abs_diff(&res.cross_corr[idx]) < 1e-14);
        }
    }

    #[test]
    fn cross_correlation_rules() {
        let white = SSEDriving::WhiteNoise(pauli(Axis::X), NoiseParams::new(0.7, 1.0).unwrap());
        let ens = EnsembleConfig {
            trajectories: 4,
            master_seed: 9,
            workers: 1,
            keep_trajectories: true,
        };
        let res = run_ensemble(&white, &ComplexMat::zeros(2), &up(), &cfg(0.1, 10), &ens).unwrap();
        assert!(cross_correlation(res.trajectories.as_ref().unwrap(), 0).is_err());

        let rec = TrajectoryRecord {
            times: vec![0.0],
            states: vec![up()],
            ou_values: vec![0.0],
            norms_sq: vec![1.0],
        };
        let c = cross_correlation(&[rec.clone(), rec], 0).unwrap();
        assert_eq!(c, ComplexMat::zeros(2));
    }

    #[test]
    fn initial_cross_correlation_vanishes() {
        let d = SSEDriving::UpsilonOU(pauli(Axis::X), NoiseParams::new(0.7, 1.0).unwrap());
        let m = 4000;
        let keep = EnsembleConfig {
            trajectories: m,
            master_seed: 21,
            workers: 0,
            keep_trajectories: true,
        };
        let integ = IntegratorConfig {
            t_final: 1e-3,
            record_stride: 1,
            ..cfg(1e-3, 1)
        };
        let res = run_ensemble(&d, &ComplexMat::zeros(2), &up(), &integ, &keep).unwrap();
        let xs: Vec<f64> = res
            .trajectories
            .unwrap()
            .iter()
            .map(|r| r.ou_values[0])
            .collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / m as f64;
        let se = (var / m as f64).sqrt();
        // psi0 = |0>, so only the 00 entry carries X_0.
        assert!(res.cross_corr[0][(0, 0)].re.abs() < 3.0 * se);
        assert_eq!(res.cross_corr[0][(1, 1)], ZERO);
    }

    #[test]
    fn martingale_requires_linear_mode() {
        let d = SSEDriving::UpsilonOU(pauli(Axis::X), NoiseParams::new(0.7, 1.0).unwrap());
        let res = run_ensemble(
            &d,
            &ComplexMat::zeros(2),
            &up(),
            &cfg(0.1, 10),
            &EnsembleConfig::new(4, 1),
        )
        .unwrap();
        assert!(matches!(
            martingale_check(&res),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn noiseless_linear_norm_is_one() {
        let h = build_hamiltonian(1.0, 2.0);
        let d = SSEDriving::HamiltonianOU(pauli(Axis::X), NoiseParams::new(0.0, 1.0).unwrap());
        let integ = IntegratorConfig {
            renormalize: false,
            ..cfg(1.0, 100)
        };
        let res = run_ensemble(&d, &h, &up(), &integ, &EnsembleConfig::new(4, 1)).unwrap();
        let rep = martingale_check(&res).unwrap();
        assert!(rep.max_deviation < 1e-12);
        assert!(rep.passed);
    }

    #[test]
    fn split_halves_identical_without_noise() {
        let h = build_hamiltonian(1.0, 2.0);
        let d = SSEDriving::UpsilonOU(pauli(Axis::X), NoiseParams::new(0.0, 1.0).unwrap());
        let (a, b) =
            run_split_halves(&d, &h, &up(), &cfg(1.0, 100), &EnsembleConfig::new(8, 2)).unwrap();
        let est = convergence_estimate(&a, &b).unwrap();
        assert_eq!(est.discrepancy, 0.0);
        assert!((est.predicted - 0.25).abs() < 1e-15);
    }

    #[test]
    fn reports_failing_trajectory_index() {
        let l = ComplexMat::identity(2).scale_real(1e150);
        let d = SSEDriving::WhiteNoise(l, NoiseParams::new(0.7, 1.0).unwrap());
        let integ = IntegratorConfig {
            renormalize: false,
            ito_correction: false,
            ..cfg(0.1, 10)
        };
        match run_ensemble(
            &d,
            &ComplexMat::zeros(2),
            &up(),
            &integ,
            &EnsembleConfig::new(6, 0),
        ) {
            Err(Error::IntegrationFailure { trajectory, .. }) => assert_eq!(trajectory, Some(0)),
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
