//! Single-trajectory propagators for the three driving models.
//!
//! * [`SSEDriving::WhiteNoise`]: linear SSE with an arbitrary jump operator.
//! * [`SSEDriving::UpsilonOU`]: SSE driven by the derivative of an OU path.
//! * [`SSEDriving::HamiltonianOU`]: Schrödinger equation with the OU value as
//!   a stochastic potential.
//!
//! All variants use the Itô (left-point) convention. The OU path and the state
//! share the same Wiener increment.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::noise::{ou_step, NoiseParams, OUState, RngStream};
use crate::quantum::{unitary_2x2_entries, unitary_step_2x2, ComplexMat, StateVec, I, ZERO};

/// Stochastic driving model.
#[derive(Debug, Clone, PartialEq)]
pub enum SSEDriving {
    /// Jump operator `L`, any matrix.
    WhiteNoise(ComplexMat, NoiseParams),
    /// Hermitian coupling `R` driven by Υ-noise.
    UpsilonOU(ComplexMat, NoiseParams),
    /// Hermitian coupling `R` multiplied by the OU value in the Hamiltonian.
    HamiltonianOU(ComplexMat, NoiseParams),
}

impl SSEDriving {
    /// White-noise driving for a Hermitian coupling `R`, unraveled with the
    /// anti-Hermitian jump operator `L = -iR`.
    ///
    /// The averaged dynamics is the same Lindblad dissipator as for `L = R`,
    /// but each trajectory keeps its norm up to discretization error.
    pub fn white_unitary(r: &ComplexMat, params: NoiseParams) -> Self {
        SSEDriving::WhiteNoise(r.scale(-I), params)
    }

    pub fn params(&self) -> &NoiseParams {
        match self {
            SSEDriving::WhiteNoise(_, p)
            | SSEDriving::UpsilonOU(_, p)
            | SSEDriving::HamiltonianOU(_, p) => p,
        }
    }

    pub fn operator(&self) -> &ComplexMat {
        match self {
            SSEDriving::WhiteNoise(m, _)
            | SSEDriving::UpsilonOU(m, _)
            | SSEDriving::HamiltonianOU(m, _) => m,
        }
    }

    /// Whether an OU path is part of the model.
    pub fn is_colored(&self) -> bool {
        !matches!(self, SSEDriving::WhiteNoise(..))
    }

    pub fn name(&self) -> &'static str {
        match self {
            SSEDriving::WhiteNoise(..) => "white",
            SSEDriving::UpsilonOU(..) => "upsilon",
            SSEDriving::HamiltonianOU(..) => "ou_hamiltonian",
        }
    }
}

/// Fixed-step integration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Record every `record_stride`-th step, starting with t = 0.
    pub record_stride: usize,
    /// Rescale the state to unit norm after each step.
    pub renormalize: bool,
    /// Include the `-(sigma^2/2) L^dagger L` drift. Disabling it breaks the
    /// martingale property and exists only as a negative control.
    pub ito_correction: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            t_final: 10.0,
            record_stride: 100,
            renormalize: true,
            ito_correction: true,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final >= self.dt) || !self.t_final.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "t_final must be at least dt, got t_final={} dt={}",
                self.t_final, self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidArgument(
                "record_stride must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn n_records(&self) -> usize {
        self.n_steps() / self.record_stride + 1
    }

    pub fn record_times(&self) -> Vec<f64> {
        (0..self.n_records())
            .map(|j| (j * self.record_stride) as f64 * self.dt)
            .collect()
    }
}

/// One realization sampled on the recording grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<StateVec>,
    /// Empty for white noise.
    pub ou_values: Vec<f64>,
    /// Squared norm before any rescaling.
    pub norms_sq: Vec<f64>,
}

/// Checks the Hermiticity requirement of the colored variants.
pub fn validate_driving(d: &SSEDriving) -> Result<()> {
    d.params().validate()?;
    let m = d.operator();
    if !m.is_finite() {
        return Err(Error::InvalidArgument(
            "coupling operator has non-finite entries".into(),
        ));
    }
    if d.is_colored() {
        let defect = m.hermiticity_defect();
        if defect > 1e-12 {
            return Err(Error::ConstraintViolation {
                what: "colored-noise coupling R".into(),
                defect,
            });
        }
    }
    Ok(())
}

fn matvec(m: &ComplexMat, psi: &StateVec) -> Vec<Complex64> {
    let mut out = vec![ZERO; psi.dim()];
    m.apply_into(psi.as_slice(), &mut out);
    out
}

/// `psi + (-iH - (sigma^2/2) L^dagger L) psi dt + sigma L psi dW`.
pub fn step_white(
    psi: &StateVec,
    h: &ComplexMat,
    l: &ComplexMat,
    sigma: f64,
    dt: f64,
    dw: f64,
) -> StateVec {
    let ldl = &l.adjoint() * l;
    let hpsi = matvec(h, psi);
    let ldlpsi = matvec(&ldl, psi);
    let lpsi = matvec(l, psi);
    let half = 0.5 * sigma * sigma;
    StateVec(
        (0..psi.dim())
            .map(|i| psi[i] + (-I * hpsi[i] - ldlpsi[i] * half) * dt + lpsi[i] * (sigma * dw))
            .collect(),
    )
}

/// `psi + (-iH - (sigma^2/2) R^2) psi dt + i theta x R psi dt - i sigma R psi dW`,
/// with the OU value advanced by the same `dW`.
pub fn step_upsilon(
    psi: &StateVec,
    x: OUState,
    h: &ComplexMat,
    r: &ComplexMat,
    params: &NoiseParams,
    dt: f64,
    dw: f64,
) -> (StateVec, OUState) {
    let r2 = r * r;
    let hpsi = matvec(h, psi);
    let r2psi = matvec(&r2, psi);
    let rpsi = matvec(r, psi);
    let half = 0.5 * params.sigma * params.sigma;
    let kick = params.theta * x.value * dt - params.sigma * dw;
    let next = (0..psi.dim())
        .map(|i| psi[i] + (-I * hpsi[i] - r2psi[i] * half) * dt + I * rpsi[i] * kick)
        .collect();
    (StateVec(next), ou_step(x, dt, dw, params).0)
}

/// Euler step `psi - i (H + theta x R) psi dt`; `dW` only advances the OU value.
pub fn step_ham_ou(
    psi: &StateVec,
    x: OUState,
    h: &ComplexMat,
    r: &ComplexMat,
    params: &NoiseParams,
    dt: f64,
    dw: f64,
) -> (StateVec, OUState) {
    let g = h + &r.scale_real(params.theta * x.value);
    let gpsi = matvec(&g, psi);
    let next = (0..psi.dim()).map(|i| psi[i] - I * gpsi[i] * dt).collect();
    (StateVec(next), ou_step(x, dt, dw, params).0)
}

/// Same as [`step_ham_ou`] but with the exact 2x2 propagator for frozen `x`.
pub fn step_ham_ou_exact(
    psi: &StateVec,
    x: OUState,
    h: &ComplexMat,
    r: &ComplexMat,
    params: &NoiseParams,
    dt: f64,
    dw: f64,
) -> Result<(StateVec, OUState)> {
    if h.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: h.dim(),
        });
    }
    let g = h + &r.scale_real(params.theta * x.value);
    let u = unitary_step_2x2(&g, dt);
    Ok((StateVec(matvec(&u, psi)), ou_step(x, dt, dw, params).0))
}

/// Source of standard normal draws for the integrator.
pub trait NormalSource {
    fn next_normal(&mut self) -> f64;
}

impl NormalSource for RngStream {
    #[inline]
    fn next_normal(&mut self) -> f64 {
        self.standard_normal()
    }
}

/// Recorded sample handed to a [`TrajectoryVisitor`].
pub struct Sample<'a> {
    pub index: usize,
    pub time: f64,
    pub state: &'a [Complex64],
    pub ou_value: Option<f64>,
    pub norm_sq: f64,
}

/// Receives recorded samples as the trajectory advances.
pub trait TrajectoryVisitor {
    fn visit(&mut self, sample: Sample<'_>);
}

impl<F: FnMut(Sample<'_>)> TrajectoryVisitor for F {
    fn visit(&mut self, sample: Sample<'_>) {
        self(sample)
    }
}

// Precomputed per-step operators.
enum Kernel {
    // psi += drift psi + (sigma dW) noise psi
    White {
        drift: ComplexMat,
        noise: ComplexMat,
        sigma: f64,
    },
    // psi += drift psi + (theta x dt - sigma dW) iR psi
    Upsilon {
        drift: ComplexMat,
        ir: ComplexMat,
    },
    HamOu {
        h: ComplexMat,
        r: ComplexMat,
    },
}

impl Kernel {
    fn new(driving: &SSEDriving, h: &ComplexMat, cfg: &IntegratorConfig) -> Self {
        let mi = -I;
        match driving {
            SSEDriving::WhiteNoise(l, p) => {
                let mut gen = h.scale(mi);
                if cfg.ito_correction {
                    let ldl = &l.adjoint() * l;
                    gen = &gen - &ldl.scale_real(0.5 * p.sigma * p.sigma);
                }
                Kernel::White {
                    drift: gen.scale_real(cfg.dt),
                    noise: l.clone(),
                    sigma: p.sigma,
                }
            }
            SSEDriving::UpsilonOU(r, p) => {
                let mut gen = h.scale(mi);
                if cfg.ito_correction {
                    gen = &gen - &(r * r).scale_real(0.5 * p.sigma * p.sigma);
                }
                Kernel::Upsilon {
                    drift: gen.scale_real(cfg.dt),
                    ir: r.scale(I),
                }
            }
            SSEDriving::HamiltonianOU(r, _) => Kernel::HamOu {
                h: h.clone(),
                r: r.clone(),
            },
        }
    }
}

#[inline]
fn mv2(m: &[Complex64], v: [Complex64; 2]) -> [Complex64; 2] {
    [m[0] * v[0] + m[1] * v[1], m[2] * v[0] + m[3] * v[1]]
}

/// Propagates one trajectory and stores every recorded sample.
pub fn propagate(
    driving: &SSEDriving,
    h: &ComplexMat,
    psi0: &StateVec,
    cfg: &IntegratorConfig,
    rng: &mut RngStream,
) -> Result<TrajectoryRecord> {
    let n_rec = cfg.n_records();
    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(n_rec),
        states: Vec::with_capacity(n_rec),
        ou_values: Vec::with_capacity(if driving.is_colored() { n_rec } else { 0 }),
        norms_sq: Vec::with_capacity(n_rec),
    };
    propagate_with(driving, h, psi0, cfg, rng, &mut |s: Sample<'_>| {
        rec.times.push(s.time);
        rec.states.push(StateVec(s.state.to_vec()));
        if let Some(x) = s.ou_value {
            rec.ou_values.push(x);
        }
        rec.norms_sq.push(s.norm_sq);
    })?;
    Ok(rec)
}

/// Propagates one trajectory, streaming recorded samples to `visitor`.
///
/// The stationary OU initial value is the first draw from `noise`, followed
/// by one draw per step.
pub fn propagate_with<N: NormalSource, V: TrajectoryVisitor + ?Sized>(
    driving: &SSEDriving,
    h: &ComplexMat,
    psi0: &StateVec,
    cfg: &IntegratorConfig,
    noise: &mut N,
    visitor: &mut V,
) -> Result<()> {
    validate_driving(driving)?;
    cfg.validate()?;
    let n = h.dim();
    if h.hermiticity_defect() > 1e-12 * h.norm().max(1.0) {
        return Err(Error::InvalidArgument(
            "Hamiltonian is not Hermitian".into(),
        ));
    }
    if driving.operator().dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: driving.operator().dim(),
        });
    }
    if psi0.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: psi0.dim(),
        });
    }
    if (psi0.norm_sqr() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "initial state must be normalized, |psi0|^2 = {}",
            psi0.norm_sqr()
        )));
    }

    let params = *driving.params();
    let kernel = Kernel::new(driving, h, cfg);
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let n_steps = cfg.n_steps();
    let stride = cfg.record_stride;

    let mut x = if driving.is_colored() {
        let z = noise.next_normal();
        Some(OUState::new(params.stationary_variance().sqrt() * z))
    } else {
        None
    };
    let mut psi = psi0.0.clone();
    let mut tmp = vec![ZERO; n];
    let mut tmp2 = vec![ZERO; n];

    visitor.visit(Sample {
        index: 0,
        time: 0.0,
        state: &psi,
        ou_value: x.map(|s| s.value),
        norm_sq: psi0.norm_sqr(),
    });

    for k in 1..=n_steps {
        let dw = sqrt_dt * noise.next_normal();
        // Left-point value of the OU path for this step.
        let x_left = x.map(|s| s.value).unwrap_or(0.0);
        match &kernel {
            Kernel::White {
                drift,
                noise,
                sigma,
            } => {
                let a = sigma * dw;
                if n == 2 {
                    let v = [psi[0], psi[1]];
                    let d = mv2(drift.as_slice(), v);
                    let l = mv2(noise.as_slice(), v);
                    psi[0] = v[0] + d[0] + l[0] * a;
                    psi[1] = v[1] + d[1] + l[1] * a;
                } else {
                    drift.apply_into(&psi, &mut tmp);
                    noise.apply_into(&psi, &mut tmp2);
                    for i in 0..n {
                        psi[i] += tmp[i] + tmp2[i] * a;
                    }
                }
            }
            Kernel::Upsilon { drift, ir } => {
                let a = params.theta * x_left * dt - params.sigma * dw;
                if n == 2 {
                    let v = [psi[0], psi[1]];
                    let d = mv2(drift.as_slice(), v);
                    let l = mv2(ir.as_slice(), v);
                    psi[0] = v[0] + d[0] + l[0] * a;
                    psi[1] = v[1] + d[1] + l[1] * a;
                } else {
                    drift.apply_into(&psi, &mut tmp);
                    ir.apply_into(&psi, &mut tmp2);
                    for i in 0..n {
                        psi[i] += tmp[i] + tmp2[i] * a;
                    }
                }
            }
            Kernel::HamOu { h, r } => {
                let a = params.theta * x_left;
                if n == 2 {
                    let (he, re) = (h.as_slice(), r.as_slice());
                    let g = [0, 1, 2, 3].map(|j| he[j] + re[j] * a);
                    let u = unitary_2x2_entries(g, dt);
                    let v = [psi[0], psi[1]];
                    let w = mv2(&u, v);
                    psi[0] = w[0];
                    psi[1] = w[1];
                } else {
                    let g = h + &r.scale_real(a);
                    g.apply_into(&psi, &mut tmp);
                    for i in 0..n {
                        psi[i] -= I * tmp[i] * dt;
                    }
                }
            }
        }
        if let Some(s) = x.as_mut() {
            *s = ou_step(*s, dt, dw, &params).0;
        }

        let norm_sq: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if !norm_sq.is_finite() || x.is_some_and(|s| !s.value.is_finite()) {
            return Err(Error::IntegrationFailure {
                step: k,
                trajectory: None,
                reason: "non-finite state".into(),
            });
        }
        if cfg.renormalize {
            if norm_sq <= 0.0 {
                return Err(Error::IntegrationFailure {
                    step: k,
                    trajectory: None,
                    reason: "state collapsed to zero norm".into(),
                });
            }
            let inv = norm_sq.sqrt().recip();
            for z in psi.iter_mut() {
                *z *= inv;
            }
        }
        if k % stride == 0 {
            visitor.visit(Sample {
                index: k / stride,
                time: k as f64 * dt,
                state: &psi,
                ou_value: x.map(|s| s.value),
                norm_sq,
            });
        }
    }
    Ok(())
}
