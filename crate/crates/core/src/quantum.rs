//! Dense complex linear algebra for small Hilbert spaces.
//!
//! Everything here is sized for `n = 2` but works for any dimension. Matrices
//! are stored row-major in a flat `Vec<Complex64>`.

use std::fmt;
use std::ops::{Add, AddAssign, Deref, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Square complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMat {
    n: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for ComplexMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for r in 0..self.n {
            if r > 0 {
                f.write_str(", ")?;
            }
            f.write_str("[")?;
            for c in 0..self.n {
                if c > 0 {
                    f.write_str(", ")?;
                }
                let z = self[(r, c)];
                write!(f, "{}{:+}i", z.re, z.im)?;
            }
            f.write_str("]")?;
        }
        f.write_str("]")
    }
}

impl ComplexMat {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Builds a matrix from rows; every row must have the same length as the
    /// number of rows.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    /// Builds a matrix from real rows.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn diag(values: &[Complex64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for c in 0..n {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `||M - M^dagger||` in the Frobenius norm.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for r in 0..n {
            for c in 0..n {
                acc += (self[(r, c)] - self[(c, r)].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// `(M + M^dagger) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] = (self[(r, c)] + self[(c, r)].conj()) * 0.5;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_dims(self.n, other.n)?;
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self.data[r * n + k];
                if a == ZERO {
                    continue;
                }
                for c in 0..n {
                    out.data[r * n + c] += a * other.data[k * n + c];
                }
            }
        }
        out
    }

    /// `out = M x`.
    pub fn apply_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(out.len(), n);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * n..(r + 1) * n];
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn apply(&self, psi: &StateVec) -> Result<StateVec> {
        check_dims(self.n, psi.dim())?;
        let mut out = vec![ZERO; self.n];
        self.apply_into(psi.as_slice(), &mut out);
        Ok(StateVec(out))
    }

    /// `max |a_ij - b_ij|`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

impl Index<(usize, usize)> for ComplexMat {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.n + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.n + c]
    }
}

// Operator overloads panic on dimension mismatch; the fallible variants are
// `matmul`, `commutator` and friends.
impl Mul for &ComplexMat {
    type Output = ComplexMat;
    fn mul(self, rhs: &ComplexMat) -> ComplexMat {
        assert_eq!(self.n, rhs.n, "matrix dimension mismatch");
        self.mul_unchecked(rhs)
    }
}

impl Add for &ComplexMat {
    type Output = ComplexMat;
    fn add(self, rhs: &ComplexMat) -> ComplexMat {
        assert_eq!(self.n, rhs.n, "matrix dimension mismatch");
        ComplexMat {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ComplexMat {
    type Output = ComplexMat;
    fn sub(self, rhs: &ComplexMat) -> ComplexMat {
        assert_eq!(self.n, rhs.n, "matrix dimension mismatch");
        ComplexMat {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl AddAssign<&ComplexMat> for ComplexMat {
    fn add_assign(&mut self, rhs: &ComplexMat) {
        assert_eq!(self.n, rhs.n, "matrix dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl Neg for &ComplexMat {
    type Output = ComplexMat;
    fn neg(self) -> ComplexMat {
        self.scale_real(-1.0)
    }
}

/// `[A, B] = AB - BA`.
pub fn commutator(a: &ComplexMat, b: &ComplexMat) -> Result<ComplexMat> {
    check_dims(a.n, b.n)?;
    Ok(&(a * b) - &(b * a))
}

/// `{A, B} = AB + BA`.
pub fn anticommutator(a: &ComplexMat, b: &ComplexMat) -> Result<ComplexMat> {
    check_dims(a.n, b.n)?;
    Ok(&(a * b) + &(b * a))
}

/// `|psi><psi|`.
pub fn outer_product(psi: &StateVec) -> ComplexMat {
    outer(psi.as_slice(), psi.as_slice())
}

/// `|a><b|`.
pub fn outer(a: &[Complex64], b: &[Complex64]) -> ComplexMat {
    let n = a.len();
    let mut m = ComplexMat::zeros(n);
    for r in 0..n {
        for c in 0..n {
            m[(r, c)] = a[r] * b[c].conj();
        }
    }
    m
}

/// State vector of complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVec(pub Vec<Complex64>);

impl StateVec {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        Self(amplitudes)
    }

    /// Computational basis vector `|k>` in dimension `n`.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = vec![ZERO; n];
        v[k] = ONE;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr().sqrt();
        Self(self.0.iter().map(|z| z / n).collect())
    }
}

impl Index<usize> for StateVec {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

/// Density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMat(ComplexMat);

impl DensityMat {
    /// Wraps a matrix without checking positivity or trace.
    pub fn from_mat(m: ComplexMat) -> Self {
        Self(m)
    }

    /// Wraps a matrix after checking Hermiticity and unit trace.
    pub fn new(m: ComplexMat) -> Result<Self> {
        let scale = m.norm().max(1.0);
        if m.hermiticity_defect() > 1e-12 * scale {
            return Err(Error::InvalidArgument(format!(
                "density matrix is not Hermitian (defect {:.3e})",
                m.hermiticity_defect()
            )));
        }
        let tr = m.trace();
        if (tr - ONE).norm() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "density matrix trace is {tr}, expected 1"
            )));
        }
        Ok(Self(m))
    }

    pub fn pure(psi: &StateVec) -> Self {
        density_from_state(psi)
    }

    pub fn as_mat(&self) -> &ComplexMat {
        &self.0
    }

    pub fn into_mat(self) -> ComplexMat {
        self.0
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.0.dim() == 2 {
            let (lo, hi) = eigvals_hermitian_2x2(&self.0);
            vec![lo, hi]
        } else {
            hermitian_eigvals(&self.0)
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn purity(&self) -> f64 {
        let n = self.0.dim();
        let mut acc = 0.0;
        for r in 0..n {
            for c in 0..n {
                acc += (self.0[(r, c)] * self.0[(c, r)]).re;
            }
        }
        acc
    }
}

impl Deref for DensityMat {
    type Target = ComplexMat;
    fn deref(&self) -> &ComplexMat {
        &self.0
    }
}

/// `|psi><psi|`; its trace equals `||psi||^2`.
pub fn density_from_state(psi: &StateVec) -> DensityMat {
    DensityMat(outer_product(psi))
}

/// Pauli axis selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::InvalidArgument(format!(
                "unknown Pauli axis {other:?}"
            ))),
        }
    }
}

pub fn pauli(axis: Axis) -> ComplexMat {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let rows = match axis {
        Axis::X => [[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]],
        Axis::Y => [[c(0., 0.), c(0., -1.)], [c(0., 1.), c(0., 0.)]],
        Axis::Z => [[c(1., 0.), c(0., 0.)], [c(0., 0.), c(-1., 0.)]],
    };
    ComplexMat {
        n: 2,
        data: rows.iter().flatten().copied().collect(),
    }
}

/// Two-level Hamiltonian `-(epsilon/2) sigma_z + omega sigma_x`.
pub fn build_hamiltonian(epsilon: f64, omega: f64) -> ComplexMat {
    &pauli(Axis::Z).scale_real(-0.5 * epsilon) + &pauli(Axis::X).scale_real(omega)
}

/// Two-level system parameters plus the Hermitian noise-coupling operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub epsilon: f64,
    pub omega: f64,
    pub coupling: ComplexMat,
}

impl SystemSpec {
    pub fn new(epsilon: f64, omega: f64, coupling: ComplexMat) -> Result<Self> {
        check_dims(2, coupling.dim())?;
        let defect = coupling.hermiticity_defect();
        if defect > 1e-12 {
            return Err(Error::ConstraintViolation {
                what: "noise coupling R".into(),
                defect,
            });
        }
        Ok(Self {
            epsilon,
            omega,
            coupling,
        })
    }

    pub fn hamiltonian(&self) -> ComplexMat {
        build_hamiltonian(self.epsilon, self.omega)
    }
}

/// Closed-form eigenvalues `(low, high)` of a 2x2 Hermitian matrix.
pub fn eigvals_hermitian_2x2(m: &ComplexMat) -> (f64, f64) {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let r = (half * half + b.norm_sqr()).sqrt();
    (mean - r, mean + r)
}

/// Hermitian eigendecomposition.
///
/// `eigvals` are ascending and `unitary` satisfies
/// `M = U^dagger diag(eigvals) U`, i.e. row `k` of `U` is the conjugate of
/// the k-th eigenvector. Each eigenvector is phased so that its first
/// non-negligible component is real and positive.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub eigvals: Vec<f64>,
    pub unitary: ComplexMat,
}

impl Eigen {
    /// The k-th eigenvector (a column of `U^dagger`).
    pub fn eigenvector(&self, k: usize) -> Vec<Complex64> {
        let n = self.unitary.dim();
        (0..n).map(|i| self.unitary[(k, i)].conj()).collect()
    }
}

pub fn eig_hermitian(m: &ComplexMat) -> Result<Eigen> {
    let scale = m.norm().max(1.0);
    let defect = m.hermiticity_defect();
    if defect > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!(
            "eig_hermitian needs a Hermitian matrix (defect {defect:.3e})"
        )));
    }
    let n = m.dim();
    let (vals, mut vecs) = jacobi_eigen(&m.hermitian_part());

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));

    let eigvals: Vec<f64> = order.iter().map(|&k| vals[k]).collect();
    let mut unitary = ComplexMat::zeros(n);
    for (row, &k) in order.iter().enumerate() {
        let col: Vec<Complex64> = (0..n).map(|i| vecs[(i, k)]).collect();
        let pivot = col
            .iter()
            .copied()
            .find(|z| z.norm() > 1e-12)
            .unwrap_or(ONE);
        let phase = pivot.conj() / pivot.norm();
        for i in 0..n {
            let v = col[i] * phase;
            vecs[(i, k)] = v;
            unitary[(row, i)] = v.conj();
        }
    }
    Ok(Eigen { eigvals, unitary })
}

fn hermitian_eigvals(m: &ComplexMat) -> Vec<f64> {
    let (mut vals, _) = jacobi_eigen(&m.hermitian_part());
    vals.sort_by(f64::total_cmp);
    vals
}

/// Cyclic complex Jacobi. Returns unsorted eigenvalues and the matrix whose
/// columns are the eigenvectors.
fn jacobi_eigen(m: &ComplexMat) -> (Vec<f64>, ComplexMat) {
    let n = m.dim();
    let mut a = m.clone();
    let mut v = ComplexMat::identity(n);
    let scale = m.norm();
    if scale == 0.0 {
        return (vec![0.0; n], v);
    }
    for _sweep in 0..64 {
        let off: f64 = (0..n)
            .flat_map(|r| (0..n).filter(move |&c| c != r).map(move |c| (r, c)))
            .map(|(r, c)| a[(r, c)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let phase = apq / mag;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // G acts on the (p, q) plane:
                //   G_pp = c, G_pq = s, G_qp = -s conj(phase), G_qq = c conj(phase)
                // and A <- G^dagger A G zeroes the (p, q) entry.
                let gpp = Complex64::new(c, 0.0);
                let gpq = Complex64::new(s, 0.0);
                let gqp = -phase.conj() * s;
                let gqq = phase.conj() * c;
                // A <- A G (columns p, q)
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * gpp + akq * gqp;
                    a[(k, q)] = akp * gpq + akq * gqq;
                }
                // A <- G^dagger A (rows p, q)
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = gpp.conj() * apk + gqp.conj() * aqk;
                    a[(q, k)] = gpq.conj() * apk + gqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                // V <- V G
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * gpp + vkq * gqp;
                    v[(k, q)] = vkp * gpq + vkq * gqq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)].re).collect(), v)
}

/// `exp(-i G dt)` for a Hermitian 2x2 generator `G`, in closed form.
pub fn unitary_step_2x2(g: &ComplexMat, dt: f64) -> ComplexMat {
    let e = g.as_slice();
    ComplexMat {
        n: 2,
        data: unitary_2x2_entries([e[0], e[1], e[2], e[3]], dt).to_vec(),
    }
}

/// Row-major entries of `exp(-i G dt)` from those of `G`.
#[inline]
pub(crate) fn unitary_2x2_entries(g: [Complex64; 4], dt: f64) -> [Complex64; 4] {
    // G = g0 I + gx sx + gy sy + gz sz
    let g0 = 0.5 * (g[0].re + g[3].re);
    let gz = 0.5 * (g[0].re - g[3].re);
    let gx = 0.5 * (g[1].re + g[2].re);
    let gy = 0.5 * (g[2].im - g[1].im);
    let r = (gx * gx + gy * gy + gz * gz).sqrt();
    let (s, c) = (r * dt).sin_cos();
    // sin(r dt)/r, with the r -> 0 limit dt
    let sinc = if r * dt > 1e-8 { s / r } else { dt };
    let global = Complex64::from_polar(1.0, -g0 * dt);
    let mi = Complex64::new(0.0, -1.0);
    let m00 = Complex64::new(c, 0.0) + mi * sinc * gz;
    let m11 = Complex64::new(c, 0.0) - mi * sinc * gz;
    let m01 = mi * sinc * Complex64::new(gx, -gy);
    let m10 = mi * sinc * Complex64::new(gx, gy);
    [global * m00, global * m01, global * m10, global * m11]
}

/// Spectral decomposition of a coupling operator into Bohr-frequency parts.
#[derive(Debug, Clone)]
pub struct FrequencyDecomposition {
    /// `(omega, R(omega))`, ascending in omega.
    pub components: Vec<(f64, ComplexMat)>,
    pub unitary: ComplexMat,
    pub eigvals: Vec<f64>,
}

impl FrequencyDecomposition {
    pub fn frequencies(&self) -> Vec<f64> {
        self.components.iter().map(|(w, _)| *w).collect()
    }

    /// The component at `omega`, if present within `tol`.
    pub fn component(&self, omega: f64, tol: f64) -> Option<&ComplexMat> {
        self.components
            .iter()
            .find(|(w, _)| (w - omega).abs() <= tol)
            .map(|(_, m)| m)
    }

    /// `sum_omega R(omega)`, which reconstructs R.
    pub fn sum(&self) -> ComplexMat {
        let n = self.unitary.dim();
        self.components
            .iter()
            .fold(ComplexMat::zeros(n), |acc, (_, m)| &acc + m)
    }
}

/// `R(omega) = sum_{E_b - E_a = omega} P_a R P_b` over eigenprojectors of H.
pub fn frequency_components(r: &ComplexMat, h: &ComplexMat) -> Result<FrequencyDecomposition> {
    check_dims(h.dim(), r.dim())?;
    let defect = r.hermiticity_defect();
    if defect > 1e-12 * r.norm().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "coupling operator is not Hermitian (defect {defect:.3e})"
        )));
    }
    let eig = eig_hermitian(h)?;
    let n = h.dim();
    let tol = 1e-9 * h.norm() + 1e-14;

    // Group (near-)degenerate eigenvalues into eigenspaces.
    let mut spaces: Vec<(f64, Vec<usize>)> = Vec::new();
    for (k, &e) in eig.eigvals.iter().enumerate() {
        match spaces.last_mut() {
            Some((e0, members)) if (e - *e0).abs() <= tol => members.push(k),
            _ => spaces.push((e, vec![k])),
        }
    }
    let spaces: Vec<(f64, ComplexMat)> = spaces
        .into_iter()
        .map(|(_, members)| {
            let energy =
                members.iter().map(|&k| eig.eigvals[k]).sum::<f64>() / members.len() as f64;
            let mut proj = ComplexMat::zeros(n);
            for &k in &members {
                let v = eig.eigenvector(k);
                proj += &outer(&v, &v);
            }
            (energy, proj)
        })
        .collect();

    let mut terms: Vec<(f64, ComplexMat)> = Vec::new();
    for (ea, pa) in &spaces {
        for (eb, pb) in &spaces {
            terms.push((eb - ea, &(pa * r) * pb));
        }
    }
    terms.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut components: Vec<(f64, ComplexMat)> = Vec::new();
    for (w, m) in terms {
        match components.last_mut() {
            Some((w0, acc)) if (w - *w0).abs() <= tol => *acc += &m,
            _ => components.push((w, m)),
        }
    }
    // Exact zero gaps for the diagonal blocks.
    for (w, _) in components.iter_mut() {
        if w.abs() <= tol {
            *w = 0.0;
        }
    }
    Ok(FrequencyDecomposition {
        components,
        unitary: eig.unitary,
        eigvals: eig.eigvals,
    })
}
