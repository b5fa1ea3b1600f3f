//! Deterministic master equations: Lindblad, Redfield with time-dependent
//! coefficients, and the closure models of the colored-noise QMEs.

use num_complex::Complex64;

use crate::ensemble::EnsembleResult;
use crate::error::{Error, Result};
use crate::noise::NoiseParams;
use crate::quantum::{
    frequency_components, pauli, Axis, ComplexMat, DensityMat, FrequencyDecomposition, I, ONE,
};
use crate::sse::SSEDriving;

/// `-i [H, rho]`.
pub fn liouvillian(h: &ComplexMat, rho: &ComplexMat) -> ComplexMat {
    (&(h * rho) - &(rho * h)).scale(-I)
}

/// `gamma (L rho L^dagger - {L^dagger L, rho} / 2)`.
pub fn dissipator(l: &ComplexMat, gamma: f64, rho: &ComplexMat) -> ComplexMat {
    let ld = l.adjoint();
    let jump = &(l * rho) * &ld;
    let ldl = &ld * l;
    let anti = &(&ldl * rho) + &(rho * &ldl);
    (&jump - &anti.scale_real(0.5)).scale_real(gamma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LindbladSpec {
    pub h: ComplexMat,
    /// `(L_k, gamma_k)` with `gamma_k >= 0`.
    pub channels: Vec<(ComplexMat, f64)>,
}

impl LindbladSpec {
    pub fn new(h: ComplexMat, channels: Vec<(ComplexMat, f64)>) -> Result<Self> {
        let spec = Self { h, channels };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.h.dim();
        for (k, (l, g)) in self.channels.iter().enumerate() {
            if l.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: l.dim(),
                });
            }
            if !(*g >= 0.0) || !g.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "channel {k}: rate must be finite and non-negative, got {g}"
                )));
            }
        }
        Ok(())
    }
}

/// `-i [H, rho] + sum_k gamma_k (L_k rho L_k^dagger - {L_k^dagger L_k, rho} / 2)`.
pub fn lindblad_rhs(rho: &ComplexMat, spec: &LindbladSpec) -> ComplexMat {
    let mut out = liouvillian(&spec.h, rho);
    for (l, g) in &spec.channels {
        out += &dissipator(l, *g, rho);
    }
    out
}

// e^{(i omega - theta) t}, with the t -> infinity limit 0.
fn damped_phase(omega: f64, t: f64, theta: f64) -> Complex64 {
    let decay = (-theta * t).exp();
    if decay == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::from_polar(decay, omega * t)
    }
}

/// `(sigma^2/2) (1 - theta (e^{(i omega - theta) t} - 1) / (i omega - theta))`.
///
/// `t = f64::INFINITY` gives the asymptotic value.
pub fn gamma_upsilon(omega: f64, t: f64, params: &NoiseParams) -> Complex64 {
    let half = 0.5 * params.sigma * params.sigma;
    let e = damped_phase(omega, t, params.theta);
    let denom = Complex64::new(-params.theta, omega);
    (ONE - (e - ONE) * params.theta / denom) * half
}

/// `(sigma^2 theta / 2) (1 - e^{(i omega - theta) t}) / (theta - i omega)`.
pub fn gamma_ou(omega: f64, t: f64, params: &NoiseParams) -> Complex64 {
    let pref = 0.5 * params.sigma * params.sigma * params.theta;
    let e = damped_phase(omega, t, params.theta);
    (ONE - e) * pref / Complex64::new(params.theta, -omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RedfieldKind {
    /// Coefficients from the Υ-noise correlation.
    Upsilon,
    /// Coefficients from the OU correlation `(sigma^2 theta / 2) e^{-theta tau}`.
    OuProcess,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RedfieldSpec {
    pub h: ComplexMat,
    pub r: ComplexMat,
    pub params: NoiseParams,
    pub kind: RedfieldKind,
    pub drop_imaginary: bool,
}

/// Redfield right-hand sides with the frequency decomposition of `R`
/// precomputed.
#[derive(Debug, Clone)]
pub struct RedfieldModel {
    spec: RedfieldSpec,
    decomposition: FrequencyDecomposition,
    // R(omega)^dagger for each component.
    adjoints: Vec<ComplexMat>,
}

impl RedfieldModel {
    pub fn new(spec: RedfieldSpec) -> Result<Self> {
        spec.params.validate()?;
        let n = spec.h.dim();
        if spec.r.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: spec.r.dim(),
            });
        }
        let defect = spec.r.hermiticity_defect();
        if defect > 1e-12 {
            return Err(Error::ConstraintViolation {
                what: "Redfield coupling R".into(),
                defect,
            });
        }
        let decomposition = frequency_components(&spec.r, &spec.h)?;
        let adjoints = decomposition
            .components
            .iter()
            .map(|(_, m)| m.adjoint())
            .collect();
        Ok(Self {
            spec,
            decomposition,
            adjoints,
        })
    }

    pub fn spec(&self) -> &RedfieldSpec {
        &self.spec
    }

    pub fn decomposition(&self) -> &FrequencyDecomposition {
        &self.decomposition
    }

    fn coefficient(&self, kind: RedfieldKind, omega: f64, t: f64) -> Complex64 {
        let g = match kind {
            RedfieldKind::Upsilon => gamma_upsilon(omega, t, &self.spec.params),
            RedfieldKind::OuProcess => gamma_ou(omega, t, &self.spec.params),
        };
        if self.spec.drop_imaginary {
            Complex64::new(g.re, 0.0)
        } else {
            g
        }
    }

    // S + S^dagger with S = sum_{w, w'} G(w', t) [R(w)^dagger, R(w') rho].
    fn relaxation(&self, kind: RedfieldKind, rho: &ComplexMat, t: f64) -> ComplexMat {
        let n = rho.dim();
        let mut s = ComplexMat::zeros(n);
        for (wp, r_wp) in &self.decomposition.components {
            let g = self.coefficient(kind, *wp, t);
            let r_rho = r_wp * rho;
            for r_w_dag in &self.adjoints {
                let term = &(r_w_dag * &r_rho) - &(&r_rho * r_w_dag);
                s += &term.scale(g);
            }
        }
        &s + &s.adjoint()
    }

    /// `-i[H, rho] - sum (G(w', t) [R(w)^dagger, R(w') rho] + h.c.)` with the
    /// coefficient family of the spec.
    pub fn redfield_rhs(&self, rho: &ComplexMat, t: f64) -> ComplexMat {
        let l = liouvillian(&self.spec.h, rho);
        &l - &self.relaxation(self.spec.kind, rho, t)
    }

    /// Memory correction, `+sum (G_OU(w', t) [R(w)^dagger, R(w') rho] + h.c.)`.
    pub fn closure_correlation_term(&self, rho: &ComplexMat, t: f64) -> ComplexMat {
        self.relaxation(RedfieldKind::OuProcess, rho, t)
    }

    /// Liouvillian plus the Lindblad dissipator `sigma^2 (R rho R - {R^2, rho}/2)`
    /// plus the closure term.
    pub fn closed_upsilon_rhs(&self, rho: &ComplexMat, t: f64) -> ComplexMat {
        let s2 = self.spec.params.sigma * self.spec.params.sigma;
        let mut out = liouvillian(&self.spec.h, rho);
        out += &dissipator(&self.spec.r, s2, rho);
        out += &self.closure_correlation_term(rho, t);
        out
    }

    /// Liouvillian minus the closure term.
    pub fn closed_xou_rhs(&self, rho: &ComplexMat, t: f64) -> ComplexMat {
        &liouvillian(&self.spec.h, rho) - &self.closure_correlation_term(rho, t)
    }
}

/// Deterministic model selector.
#[derive(Debug, Clone)]
pub enum QmeModel {
    Lindblad(LindbladSpec),
    Redfield(RedfieldModel),
    ClosedUpsilon(RedfieldModel),
    ClosedXou(RedfieldModel),
}

impl QmeModel {
    pub fn rhs(&self, rho: &ComplexMat, t: f64) -> ComplexMat {
        match self {
            QmeModel::Lindblad(spec) => lindblad_rhs(rho, spec),
            QmeModel::Redfield(m) => m.redfield_rhs(rho, t),
            QmeModel::ClosedUpsilon(m) => m.closed_upsilon_rhs(rho, t),
            QmeModel::ClosedXou(m) => m.closed_xou_rhs(rho, t),
        }
    }

    pub fn solve(&self, rho0: &DensityMat, grid: &ODEGrid) -> Result<QmeSolution> {
        rk4_propagate(|rho, t| self.rhs(rho, t), rho0, grid)
    }
}

/// Fixed-step grid; every `record_every`-th step is stored, starting at t = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ODEGrid {
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
}

impl ODEGrid {
    pub fn new(dt: f64, t_final: f64) -> Self {
        Self {
            dt,
            t_final,
            record_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ODE dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ODE t_final must be non-negative, got {}",
                self.t_final
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument(
                "record_every must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct QmeSolution {
    pub times: Vec<f64>,
    pub rho: Vec<DensityMat>,
}

impl QmeSolution {
    pub fn rho00(&self) -> Vec<f64> {
        self.rho.iter().map(|r| r[(0, 0)].re).collect()
    }
}

/// Classical RK4. After every step the Hermitian part is kept and the trace
/// is reset to 1 when it drifts by more than 1e-12.
pub fn rk4_propagate<F>(rhs: F, rho0: &DensityMat, grid: &ODEGrid) -> Result<QmeSolution>
where
    F: Fn(&ComplexMat, f64) -> ComplexMat,
{
    grid.validate()?;
    let dt = grid.dt;
    let n_steps = grid.n_steps();
    let mut times = vec![0.0];
    let mut out = vec![rho0.clone()];
    let mut rho = rho0.as_mat().clone();
    for k in 0..n_steps {
        let t = k as f64 * dt;
        let k1 = rhs(&rho, t);
        let y2 = &rho + &k1.scale_real(0.5 * dt);
        let k2 = rhs(&y2, t + 0.5 * dt);
        let y3 = &rho + &k2.scale_real(0.5 * dt);
        let k3 = rhs(&y3, t + 0.5 * dt);
        let y4 = &rho + &k3.scale_real(dt);
        let k4 = rhs(&y4, t + dt);
        let mut incr = &k1 + &k4;
        incr += &(&k2 + &k3).scale_real(2.0);
        rho = (&rho + &incr.scale_real(dt / 6.0)).hermitian_part();
        if !rho.is_finite() {
            return Err(Error::IntegrationFailure {
                step: k + 1,
                trajectory: None,
                reason: "non-finite density matrix".into(),
            });
        }
        let tr = rho.trace().re;
        if (tr - 1.0).abs() > 1e-12 {
            rho = rho.scale_real(1.0 / tr);
        }
        if (k + 1) % grid.record_every == 0 {
            times.push((k + 1) as f64 * dt);
            out.push(DensityMat::from_mat(rho.clone()));
        }
    }
    Ok(QmeSolution { times, rho: out })
}

/// How the `E[X_t]` term of the coherence equation is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanX {
    /// Ensemble estimate `tr E[X_t rho_t]`.
    Empirical,
    /// The stationary law value 0.
    Stationary,
}

/// Residuals of the element-wise open equations at one recorded time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EomResidual {
    pub time: f64,
    pub population: f64,
    pub coherence: Complex64,
    /// Standard errors from per-trajectory residuals, when trajectories were
    /// kept.
    pub se_population: Option<f64>,
    pub se_coherence: Option<(f64, f64)>,
    /// Grid spacing of the central difference.
    pub spacing: f64,
}

fn population_rhs(rho00: f64, rho11: f64, c10: Complex64, p: &NoiseParams) -> f64 {
    p.sigma * p.sigma * (rho11 - rho00) - 2.0 * p.theta * c10.im
}

fn coherence_rhs(rho10: Complex64, c00: f64, mean_x: f64, p: &NoiseParams) -> Complex64 {
    (rho10.conj() - rho10) * (p.sigma * p.sigma) + I * (p.theta * (2.0 * c00 - mean_x))
}

/// Compares central differences of the averaged populations and coherence
/// with the open equations
///
/// `d rho00/dt = sigma^2 (rho11 - rho00) - 2 theta Im E[X rho]_10`,
/// `d rho10/dt = sigma^2 (rho01 - rho10) + i theta (2 E[X rho]_00 - E[X])`,
///
/// which hold for Υ-driving with `H = 0` and `R = sigma_x`.
pub fn pauli_open_eom_residual(
    ens: &EnsembleResult,
    idx: usize,
    mean_x: MeanX,
) -> Result<EomResidual> {
    let p = match &ens.driving {
        SSEDriving::UpsilonOU(r, p) if r.max_abs_diff(&pauli(Axis::X)) <= 1e-12 => *p,
        _ => {
            return Err(Error::InvalidArgument(
                "open equations need Υ-driving with R = sigma_x".into(),
            ))
        }
    };
    if ens.hamiltonian.dim() != 2 || ens.hamiltonian.norm() > 1e-12 {
        return Err(Error::InvalidArgument("open equations need H = 0".into()));
    }
    if idx == 0 || idx + 1 >= ens.times.len() {
        return Err(Error::InvalidArgument(format!(
            "index {idx} needs neighbours on both sides"
        )));
    }
    let h = ens.times[idx + 1] - ens.times[idx];
    let span = ens.times[idx + 1] - ens.times[idx - 1];
    let rho = &ens.rho_mean[idx];
    let c = &ens.cross_corr[idx];
    let mx = match mean_x {
        MeanX::Empirical => c.trace().re,
        MeanX::Stationary => 0.0,
    };
    let d00 = (ens.rho_mean[idx + 1][(0, 0)].re - ens.rho_mean[idx - 1][(0, 0)].re) / span;
    let d10 = (ens.rho_mean[idx + 1][(1, 0)] - ens.rho_mean[idx - 1][(1, 0)]) / span;
    let population = d00 - population_rhs(rho[(0, 0)].re, rho[(1, 1)].re, c[(1, 0)], &p);
    let coherence = d10 - coherence_rhs(rho[(1, 0)], c[(0, 0)].re, mx, &p);

    let (se_population, se_coherence) = match &ens.trajectories {
        Some(recs) => {
            let m = recs.len() as f64;
            let mut pop = Vec::with_capacity(recs.len());
            let mut coh = Vec::with_capacity(recs.len());
            for rec in recs {
                let rho_at = |j: usize| {
                    let s = &rec.states[j];
                    (s[0].norm_sqr(), s[1].norm_sqr(), s[1] * s[0].conj())
                };
                let (a00, a11, a10) = rho_at(idx);
                let (n00, _, n10) = rho_at(idx + 1);
                let (p00, _, p10) = rho_at(idx - 1);
                let x = rec.ou_values[idx];
                // Per-trajectory mean_x enters linearly, so its trajectory
                // value is x |psi|^2 for the empirical choice.
                let mx_m = match mean_x {
                    MeanX::Empirical => x * (a00 + a11),
                    MeanX::Stationary => 0.0,
                };
                pop.push((n00 - p00) / span - population_rhs(a00, a11, a10 * x, &p));
                coh.push((n10 - p10) / span - coherence_rhs(a10, a00 * x, mx_m, &p));
            }
            let sd = |xs: &mut dyn Iterator<Item = f64>| {
                let v: Vec<f64> = xs.collect();
                let mean = v.iter().sum::<f64>() / m;
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
            };
            (
                Some(sd(&mut pop.iter().copied())),
                Some((
                    sd(&mut coh.iter().map(|z| z.re)),
                    sd(&mut coh.iter().map(|z| z.im)),
                )),
            )
        }
        None => (None, None),
    };
    Ok(EomResidual {
        time: ens.times[idx],
        population,
        coherence,
        se_population,
        se_coherence,
        spacing: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{build_hamiltonian, unitary_step_2x2, StateVec};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn p07() -> NoiseParams {
        NoiseParams::new(0.7, 1.0).unwrap()
    }

    fn diag10() -> ComplexMat {
        ComplexMat::diag(&[ONE, c(0.0, 0.0)])
    }

    fn hermitian(n: usize, v: &[f64]) -> ComplexMat {
        let mut m = ComplexMat::zeros(n);
        let mut it = v.iter().copied().cycle();
        for r in 0..n {
            m[(r, r)] = c(it.next().unwrap(), 0.0);
            for col in (r + 1)..n {
                let z = c(it.next().unwrap(), it.next().unwrap());
                m[(r, col)] = z;
                m[(col, r)] = z.conj();
            }
        }
        m
    }

    fn density(n: usize, v: &[f64]) -> ComplexMat {
        let a = hermitian(n, v);
        let pos = &a * &a.adjoint();
        let tr = pos.trace().re;
        pos.scale_real(1.0 / tr)
    }

    fn model(h: ComplexMat, r: ComplexMat, kind: RedfieldKind, drop: bool) -> RedfieldModel {
        RedfieldModel::new(RedfieldSpec {
            h,
            r,
            params: p07(),
            kind,
            drop_imaginary: drop,
        })
        .unwrap()
    }

    #[test]
    fn lindblad_examples() {
        let h = build_hamiltonian(1.0, 2.0);
        let rho = density(2, &[0.3, 0.8, -0.4, 0.2]);
        let spec = LindbladSpec::new(h.clone(), vec![]).unwrap();
        let out = lindblad_rhs(&rho, &spec);
        assert!(out.trace().norm() < 1e-15);
        assert!(out.max_abs_diff(&liouvillian(&h, &rho)) == 0.0);

        let spec = LindbladSpec::new(ComplexMat::zeros(2), vec![(pauli(Axis::X), 0.49)]).unwrap();
        let out = lindblad_rhs(&diag10(), &spec);
        assert!((out[(0, 0)].re + 0.49).abs() < 1e-15);
        assert!(LindbladSpec::new(ComplexMat::zeros(2), vec![(pauli(Axis::X), -0.1)]).is_err());
    }

    #[test]
    fn gamma_examples() {
        let p = p07();
        for w in [-3.0, 0.0, 0.5, 4.0] {
            assert!((gamma_upsilon(w, 0.0, &p) - c(0.245, 0.0)).norm() < 1e-15);
            assert!(gamma_ou(w, 0.0, &p).norm() < 1e-15);
        }
        let g = gamma_upsilon(0.0, 1.0, &p);
        assert!((g.re - 0.245 * (-1.0f64).exp()).abs() < 1e-15 && g.im.abs() < 1e-15);
        let g = gamma_upsilon(4.0, f64::INFINITY, &p);
        assert!((g - c(0.230_588, -0.057_647)).norm() < 1e-6);
        assert!((g.norm() - 0.237_72).abs() < 5e-5);
        assert!((gamma_ou(0.0, f64::INFINITY, &p) - c(0.245, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn redfield_examples() {
        let m = model(
            ComplexMat::zeros(2),
            pauli(Axis::X),
            RedfieldKind::Upsilon,
            false,
        );
        let out = m.redfield_rhs(&diag10(), 0.0);
        assert!((out[(0, 0)].re + 0.49).abs() < 1e-15);
        for t in [0.3, 2.0] {
            let out = m.redfield_rhs(&diag10(), t);
            let expected = 0.49 * (-t).exp() * (0.0 - 1.0);
            assert!((out[(0, 0)].re - expected).abs() < 1e-14);
        }
        let rho = density(2, &[0.3, 0.8, -0.4, 0.2]);
        let out = m.redfield_rhs(&rho, f64::INFINITY);
        assert!(out.norm() < 1e-15, "H = 0: pure Liouvillian at long times");
    }

    #[test]
    fn closure_examples() {
        let m = model(
            ComplexMat::zeros(2),
            pauli(Axis::X),
            RedfieldKind::Upsilon,
            false,
        );
        let rho = density(2, &[0.3, 0.8, -0.4, 0.2]);
        assert!(m.closure_correlation_term(&rho, 0.0).norm() < 1e-15);
        let out = m.closure_correlation_term(&diag10(), f64::INFINITY);
        assert!((out[(0, 0)].re - 0.49).abs() < 1e-15);
        // -gamma_ou(0, t) * 2 (sx rho sx - rho)
        let x = pauli(Axis::X);
        for t in [0.5, 3.0] {
            let g = gamma_ou(0.0, t, &p07()).re;
            let expected = (&(&(&x * &rho) * &x) - &rho).scale_real(-2.0 * g);
            assert!(m.closure_correlation_term(&rho, t).max_abs_diff(&expected) < 1e-15);
        }
    }

    #[test]
    fn closed_models_against_closed_forms() {
        let grid = ODEGrid {
            dt: 1e-3,
            t_final: 10.0,
            record_every: 100,
        };
        let rho0 = DensityMat::from_mat(diag10());
        let m = model(
            ComplexMat::zeros(2),
            pauli(Axis::X),
            RedfieldKind::Upsilon,
            false,
        );

        // d rho00/dt = sigma^2 e^{-theta t} (1 - 2 rho00)
        let ups = QmeModel::ClosedUpsilon(m.clone())
            .solve(&rho0, &grid)
            .unwrap();
        for (t, r) in ups.times.iter().zip(ups.rho00()) {
            let exact = 0.5 * (1.0 + (-0.98 * (1.0 - (-t).exp())).exp());
            assert!((r - exact).abs() < 1e-10);
        }
        let last = *ups.rho00().last().unwrap();
        assert!((last - 0.687_654).abs() < 1e-4);

        // d rho00/dt = sigma^2 (1 - e^{-theta t}) (1 - 2 rho00)
        let xou = QmeModel::ClosedXou(m).solve(&rho0, &grid).unwrap();
        for (t, r) in xou.times.iter().zip(xou.rho00()) {
            let exact = 0.5 * (1.0 + (-0.98 * (t - (1.0 - (-t).exp()))).exp());
            assert!((r - exact).abs() < 1e-10);
        }
        // Zero initial slope: 1 - rho00 ~ (sigma^2 theta / 2) t^2.
        let t1 = xou.times[1];
        let early = 1.0 - xou.rho00()[1];
        assert!(
            early > 0.0 && early < 0.245 * t1 * t1 * 1.01,
            "early drop {early}"
        );
        assert!((xou.rho00().last().unwrap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn commuting_coupling_has_only_zero_frequency() {
        let m = model(
            pauli(Axis::X).scale_real(2.0),
            pauli(Axis::X),
            RedfieldKind::Upsilon,
            false,
        );
        let nonzero: Vec<f64> = m
            .decomposition()
            .components
            .iter()
            .filter(|(_, r)| r.norm() > 1e-12)
            .map(|(w, _)| *w)
            .collect();
        assert_eq!(nonzero, vec![0.0]);
    }

    #[test]
    fn rk4_liouvillian_matches_exact_propagator() {
        let h = build_hamiltonian(1.0, 2.0);
        let spec = LindbladSpec::new(h.clone(), vec![]).unwrap();
        let rho0 = DensityMat::pure(&StateVec::basis(2, 0));
        let grid = ODEGrid {
            dt: 1e-3,
            t_final: 10.0,
            record_every: 1000,
        };
        let sol = QmeModel::Lindblad(spec).solve(&rho0, &grid).unwrap();
        for (t, rho) in sol.times.iter().zip(&sol.rho) {
            let u = unitary_step_2x2(&h, *t);
            let exact = &(&u * rho0.as_mat()) * &u.adjoint();
            assert!(rho.max_abs_diff(&exact) < 1e-8);
        }
    }

    #[test]
    fn rk4_lindblad_decay_and_fourth_order() {
        let spec = LindbladSpec::new(ComplexMat::zeros(2), vec![(pauli(Axis::X), 0.49)]).unwrap();
        let rho0 = DensityMat::from_mat(diag10());
        let sol = rk4_propagate(
            |r, _| lindblad_rhs(r, &spec),
            &rho0,
            &ODEGrid::new(1e-3, 10.0),
        )
        .unwrap();
        for (t, r) in sol.times.iter().zip(sol.rho00()) {
            assert!((r - 0.5 * (1.0 + (-0.98 * t).exp())).abs() < 1e-8);
            assert!(t.is_finite());
        }
        for rho in &sol.rho {
            assert!(rho.min_eigenvalue() >= -1e-10);
            assert!((rho.trace().re - 1.0).abs() <= 1e-10);
            assert!(rho.hermiticity_defect() <= 1e-12);
        }
        // Time-dependent coefficients exercise the stage times.
        let m = model(
            ComplexMat::zeros(2),
            pauli(Axis::X),
            RedfieldKind::Upsilon,
            false,
        );
        let err = |dt: f64| {
            let sol = QmeModel::Redfield(m.clone())
                .solve(&rho0, &ODEGrid::new(dt, 2.0))
                .unwrap();
            let t: f64 = 2.0;
            let exact = 0.5 * (1.0 + (-0.98 * (1.0 - (-t).exp())).exp());
            (sol.rho00().last().unwrap() - exact).abs()
        };
        let ratio = err(0.2) / err(0.1);
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn rk4_reports_blow_up() {
        let rho0 = DensityMat::from_mat(diag10());
        let r = rk4_propagate(|r, _| r.scale_real(1e300), &rho0, &ODEGrid::new(1.0, 10.0));
        assert!(matches!(r, Err(Error::IntegrationFailure { .. })));
    }

    #[test]
    fn drop_imaginary_uses_real_coefficients() {
        let h = build_hamiltonian(1.0, 2.0);
        let full = model(h.clone(), pauli(Axis::Z), RedfieldKind::Upsilon, false);
        let real = model(h, pauli(Axis::Z), RedfieldKind::Upsilon, true);
        let rho = density(2, &[0.3, 0.8, -0.4, 0.2]);
        let a = full.redfield_rhs(&rho, 1.5);
        let b = real.redfield_rhs(&rho, 1.5);
        assert!(a.max_abs_diff(&b) > 1e-6);
        assert!(b.trace().norm() < 1e-14);
    }

    // Collapsed form -([R, Lambda rho] + h.c.) with Lambda = sum G(w') R(w').
    fn collapsed(m: &RedfieldModel, kind: RedfieldKind, rho: &ComplexMat, t: f64) -> ComplexMat {
        let n = rho.dim();
        let mut lambda = ComplexMat::zeros(n);
        for (w, rw) in &m.decomposition().components {
            let g = match kind {
                RedfieldKind::Upsilon => gamma_upsilon(*w, t, &m.spec().params),
                RedfieldKind::OuProcess => gamma_ou(*w, t, &m.spec().params),
            };
            lambda += &rw.scale(g);
        }
        let r = &m.spec().r;
        let s = &(r * &(&lambda * rho)) - &(&(&lambda * rho) * r);
        &liouvillian(&m.spec().h, rho) - &(&s + &s.adjoint())
    }

    fn triple() -> impl Strategy<Value = (ComplexMat, ComplexMat, ComplexMat, f64)> {
        (
            prop::collection::vec(-2.0f64..2.0, 4),
            prop::collection::vec(-2.0f64..2.0, 4),
            prop::collection::vec(-1.0f64..1.0, 4),
            0.0f64..8.0,
        )
            .prop_map(|(h, r, rho, t)| (hermitian(2, &h), hermitian(2, &r), density(2, &rho), t))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn gamma_identities(w in -20.0f64..20.0, t in 0.0f64..30.0, sigma in 0.05f64..3.0, theta in 0.1f64..10.0) {
            let p = NoiseParams::new(sigma, theta).unwrap();
            let half = 0.5 * sigma * sigma;
            let sum = gamma_upsilon(w, t, &p) + gamma_ou(w, t, &p);
            prop_assert!((sum - c(half, 0.0)).norm() <= 1e-12);
            prop_assert!((gamma_upsilon(w, 0.0, &p) - c(half, 0.0)).norm() <= 1e-12);
            prop_assert!((gamma_upsilon(0.0, t, &p) - c(half * (-theta * t).exp(), 0.0)).norm() <= 1e-12);
            let sd = crate::noise::spectral_density(crate::noise::SpectralKind::Upsilon, w, &p);
            prop_assert!((2.0 * gamma_upsilon(w, f64::INFINITY, &p).re - sd).abs() <= 1e-12);
        }

        #[test]
        fn decomposition_identity((h, r, rho, t) in triple()) {
            let m = model(h.clone(), r.clone(), RedfieldKind::Upsilon, false);
            let lhs = m.redfield_rhs(&rho, t);
            let mut rhs = liouvillian(&h, &rho);
            rhs += &dissipator(&r, 0.49, &rho);
            rhs += &m.closure_correlation_term(&rho, t);
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * (1.0 + r.norm().powi(2)));
            prop_assert!(m.closed_upsilon_rhs(&rho, t).max_abs_diff(&lhs) <= 1e-12 * (1.0 + r.norm().powi(2)));
        }

        #[test]
        fn double_sum_matches_collapsed_form((h, r, rho, t) in triple()) {
            for kind in [RedfieldKind::Upsilon, RedfieldKind::OuProcess] {
                let m = model(h.clone(), r.clone(), kind, false);
                let a = m.redfield_rhs(&rho, t);
                let b = collapsed(&m, kind, &rho, t);
                prop_assert!(a.max_abs_diff(&b) <= 1e-12 * (1.0 + r.norm().powi(2) + h.norm()));
            }
            let m = model(h.clone(), r.clone(), RedfieldKind::OuProcess, false);
            prop_assert!(m.redfield_rhs(&rho, t).max_abs_diff(&m.closed_xou_rhs(&rho, t)) <= 1e-13);
        }

        #[test]
        fn right_hand_sides_traceless_and_hermitian((h, r, rho, t) in triple(), drop in any::<bool>()) {
            let m = model(h.clone(), r.clone(), RedfieldKind::Upsilon, drop);
            let lind = LindbladSpec::new(h, vec![(r.clone(), 0.49), (r.scale(c(0.3, 0.7)), 0.2)]).unwrap();
            for out in [m.redfield_rhs(&rho, t), m.closure_correlation_term(&rho, t), lindblad_rhs(&rho, &lind)] {
                let scale = 1.0 + r.norm().powi(2);
                prop_assert!(out.trace().norm() <= 1e-12 * scale);
                prop_assert!(out.hermiticity_defect() <= 1e-12 * scale);
            }
        }
    }
}
