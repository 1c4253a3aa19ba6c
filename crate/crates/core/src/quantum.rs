//! Dense complex operators, density matrices and generalized Bloch-vector
//! quantities.
//!
//! Bloch vectors are never built explicitly: every Bloch quantity is obtained
//! from Hilbert-Schmidt overlaps via `r1 · r2 = <rho1, rho2> - 1/N`, which holds
//! for any orthonormal traceless Hermitian basis.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

/// Square complex matrix. Hamiltonians are stored in angular-frequency units
/// (rad/s, hbar = 1).
pub type Operator = DMatrix<C64>;

/// Max entry-wise deviation from Hermiticity accepted for a state.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Accepted deviation of the trace from one.
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues in `[-EIGEN_CLAMP, 0)` are treated as zero by matrix functions.
pub const EIGEN_CLAMP: f64 = 1e-10;

const RADICAND_SLACK: f64 = 1e-12;

/// A Hermitian, unit-trace, positive-semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    /// Validates the state invariants at the default tolerances.
    pub fn new(m: Operator) -> Result<Self> {
        Self::with_tolerances(m, HERMITIAN_TOL, TRACE_TOL, EIGEN_CLAMP)
    }

    pub fn with_tolerances(m: Operator, herm_tol: f64, trace_tol: f64, eig_tol: f64) -> Result<Self> {
        check_square(&m)?;
        let dev = hermiticity_defect(&m);
        if dev > herm_tol {
            return Err(Error::InvalidState(format!("not Hermitian (defect {dev:e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > trace_tol || tr.im.abs() > trace_tol {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = min_eigenvalue(&m);
        if min_eig < -eig_tol {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix whose invariants were established by the caller.
    pub(crate) fn from_trusted(m: Operator) -> Self {
        Self(m)
    }

    pub fn from_diagonal(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() {
            return invalid("empty diagonal");
        }
        let v = DVector::from_iterator(probs.len(), probs.iter().map(|&p| C64::new(p, 0.0)));
        Self::new(DMatrix::from_diagonal(&v))
    }

    /// Projector onto the normalized vector `psi`.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if psi.is_empty() || norm == 0.0 {
            return invalid("zero state vector");
        }
        let v = DVector::from_iterator(psi.len(), psi.iter().map(|c| c / norm));
        Ok(Self(&v * v.adjoint()))
    }

    /// `|k><k|` in a `dim`-level space.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return invalid(format!("basis index {k} out of range for dim {dim}"));
        }
        let mut m = Operator::zeros(dim, dim);
        m[(k, k)] = C64::new(1.0, 0.0);
        Ok(Self(m))
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be positive");
        }
        Ok(Self(Operator::identity(dim, dim).map(|c| c / dim as f64)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Operator {
        &self.0
    }

    pub fn into_matrix(self) -> Operator {
        self.0
    }

    /// `Tr rho^2`.
    pub fn purity(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }
}

impl AsRef<Operator> for DensityMatrix {
    fn as_ref(&self) -> &Operator {
        &self.0
    }
}

/// Hermitian adjoint variable of the optimizer. Trace and positivity are
/// unconstrained.
#[derive(Clone, Debug, PartialEq)]
pub struct CoState(Operator);

impl CoState {
    pub fn new(m: Operator) -> Result<Self> {
        check_square(&m)?;
        let scale = m.iter().fold(1.0_f64, |acc, c| acc.max(c.norm()));
        let dev = hermiticity_defect(&m);
        if dev > HERMITIAN_TOL * scale {
            return Err(Error::InvalidState(format!("co-state not Hermitian (defect {dev:e})")));
        }
        Ok(Self(m))
    }

    pub(crate) fn from_trusted(m: Operator) -> Self {
        Self(m)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(Operator::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Operator {
        &self.0
    }

    pub fn into_matrix(self) -> Operator {
        self.0
    }
}

impl AsRef<Operator> for CoState {
    fn as_ref(&self) -> &Operator {
        &self.0
    }
}

fn check_square(m: &Operator) -> Result<()> {
    if m.nrows() == 0 || m.nrows() != m.ncols() {
        return invalid(format!("expected a non-empty square matrix, got {}x{}", m.nrows(), m.ncols()));
    }
    Ok(())
}

fn check_same_dim(a: &Operator, b: &Operator) -> Result<()> {
    if a.shape() != b.shape() {
        return invalid(format!("dimension mismatch: {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

/// Largest entry-wise deviation `|m_ij - conj(m_ji)|`.
pub fn hermiticity_defect(m: &Operator) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0_f64;
    for j in 0..n {
        for i in 0..=j {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn max_abs(m: &Operator) -> f64 {
    m.iter().fold(0.0, |acc, c| acc.max(c.norm()))
}

pub fn identity(n: usize) -> Operator {
    Operator::identity(n, n)
}

/// Eigendecomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn eigh(m: &Operator) -> (DVector<f64>, Operator) {
    let herm = (m + m.adjoint()).map(|c| c * 0.5);
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = Operator::from_columns(&order.iter().map(|&k| eig.eigenvectors.column(k)).collect::<Vec<_>>());
    (values, vectors)
}

pub fn eigenvalues_hermitian(m: &Operator) -> DVector<f64> {
    let herm = (m + m.adjoint()).map(|c| c * 0.5);
    let mut v = herm.symmetric_eigenvalues();
    v.as_mut_slice().sort_by(f64::total_cmp);
    v
}

pub fn min_eigenvalue(m: &Operator) -> f64 {
    eigenvalues_hermitian(m).min()
}

/// Kronecker product with `a` as the slow index.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    a.kronecker(b)
}

/// Reduced state of subsystem `keep` for a state on `dims[0] x dims[1] x ...`
/// (first subsystem slowest).
pub fn partial_trace(rho: &DensityMatrix, dims: &[usize], keep: usize) -> Result<DensityMatrix> {
    if keep >= dims.len() {
        return invalid(format!("subsystem index {keep} out of range for {} subsystems", dims.len()));
    }
    if dims.iter().any(|&d| d == 0) || dims.iter().product::<usize>() != rho.dim() {
        return invalid(format!("subsystem dims {dims:?} do not match state dimension {}", rho.dim()));
    }
    let d_keep = dims[keep];
    let d_before: usize = dims[..keep].iter().product();
    let d_after: usize = dims[keep + 1..].iter().product();
    let m = rho.matrix();
    let mut out = Operator::zeros(d_keep, d_keep);
    for a in 0..d_keep {
        for b in 0..d_keep {
            let mut acc = C64::new(0.0, 0.0);
            for x in 0..d_before {
                for y in 0..d_after {
                    let i = (x * d_keep + a) * d_after + y;
                    let j = (x * d_keep + b) * d_after + y;
                    acc += m[(i, j)];
                }
            }
            out[(a, b)] = acc;
        }
    }
    Ok(DensityMatrix::from_trusted(out))
}

/// Truncated bosonic lowering operator: `<k|a|k+1> = sqrt(k+1)`.
pub fn annihilation(n_levels: usize) -> Result<Operator> {
    if n_levels < 2 {
        return invalid(format!("annihilation operator needs at least 2 levels, got {n_levels}"));
    }
    let mut a = Operator::zeros(n_levels, n_levels);
    for k in 0..n_levels - 1 {
        a[(k, k + 1)] = C64::new(((k + 1) as f64).sqrt(), 0.0);
    }
    Ok(a)
}

pub fn number(n_levels: usize) -> Operator {
    Operator::from_diagonal(&DVector::from_iterator(n_levels, (0..n_levels).map(|k| C64::new(k as f64, 0.0))))
}

/// Thermal state with occupancy `n_th`, renormalized over the kept levels.
pub fn thermal_state(n_levels: usize, n_th: f64) -> Result<DensityMatrix> {
    if n_levels == 0 {
        return invalid("thermal state needs at least one level");
    }
    if !(n_th >= 0.0) || !n_th.is_finite() {
        return invalid(format!("thermal occupancy must be finite and nonnegative, got {n_th}"));
    }
    let q = n_th / (n_th + 1.0);
    let weights: Vec<f64> = (0..n_levels).map(|k| q.powi(k as i32)).collect();
    let z: f64 = weights.iter().sum();
    let diag = DVector::from_iterator(n_levels, weights.iter().map(|w| C64::new(w / z, 0.0)));
    Ok(DensityMatrix::from_trusted(Operator::from_diagonal(&diag)))
}

/// `Tr{a^dagger b}`.
pub fn hs_overlap(a: &Operator, b: &Operator) -> Result<C64> {
    check_same_dim(a, b)?;
    Ok(hs_overlap_unchecked(a, b))
}

pub(crate) fn hs_overlap_unchecked(a: &Operator, b: &Operator) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Generalized Bloch-vector dot product `r1 · r2 = <rho1, rho2> - 1/N`.
pub fn bloch_dot(r1: &DensityMatrix, r2: &DensityMatrix) -> Result<f64> {
    let overlap = hs_overlap(r1.matrix(), r2.matrix())?;
    Ok(overlap.re - 1.0 / r1.dim() as f64)
}

/// `|r| = sqrt(Tr rho^2 - 1/N)`.
pub fn bloch_length(rho: &DensityMatrix) -> Result<f64> {
    let radicand = rho.purity() - 1.0 / rho.dim() as f64;
    if radicand < -RADICAND_SLACK {
        return Err(Error::NumericalConsistency(format!("purity below 1/N by {:e}", -radicand)));
    }
    Ok(radicand.max(0.0).sqrt())
}

/// `Tr{rho obs}` for a Hermitian observable.
pub fn expectation(rho: &DensityMatrix, obs: &Operator) -> Result<f64> {
    check_same_dim(rho.matrix(), obs)?;
    if hermiticity_defect(obs) > HERMITIAN_TOL * max_abs(obs).max(1.0) {
        return invalid("observable is not Hermitian");
    }
    // Tr(rho obs) = sum_ij rho_ij obs_ji = <rho^dagger, obs^T>; rho is Hermitian.
    let value = hs_overlap_unchecked(rho.matrix(), obs);
    if value.im.abs() > 1e-10 * value.re.abs().max(1.0) {
        return Err(Error::NumericalConsistency(format!("expectation value has imaginary part {:e}", value.im)));
    }
    Ok(value.re)
}

fn clamped_spectrum(m: &Operator) -> Result<(DVector<f64>, Operator)> {
    let (mut values, vectors) = eigh(m);
    for v in values.iter_mut() {
        if *v < -EIGEN_CLAMP {
            return Err(Error::InvalidState(format!("eigenvalue {v:e} below clamp window")));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok((values, vectors))
}

fn from_spectrum(values: impl Iterator<Item = f64>, vectors: &Operator) -> Operator {
    let n = vectors.nrows();
    let d = DVector::from_iterator(n, values.map(|v| C64::new(v, 0.0)));
    let scaled = Operator::from_fn(n, n, |i, j| vectors[(i, j)] * d[j]);
    scaled * vectors.adjoint()
}

/// Square root of a positive-semidefinite Hermitian matrix.
pub(crate) fn psd_sqrt(m: &Operator) -> Result<Operator> {
    let (values, vectors) = clamped_spectrum(m)?;
    Ok(from_spectrum(values.iter().map(|v| v.sqrt()), &vectors))
}

/// Eigendecomposition-based square root; eigenvalues in `[-1e-10, 0)` are
/// clamped to zero.
pub fn hermitian_sqrt(rho: &DensityMatrix) -> Result<Operator> {
    psd_sqrt(rho.matrix())
}

/// `E(rho) = Tr{rho ln rho}` with `0 ln 0 = 0`. Nonpositive.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    let (values, _) = clamped_spectrum(rho.matrix())?;
    Ok(values.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum())
}
