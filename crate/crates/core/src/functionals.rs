//! Final-time target functionals, their gradients, and the distance
//! diagnostics used to judge how close a state is to the target.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::quantum::{
    eigenvalues_hermitian, hermitian_sqrt, hs_overlap, hs_overlap_unchecked, von_neumann_entropy, CoState,
    DensityMatrix, Operator,
};

/// Bloch lengths squared below this count as the maximally mixed state.
pub const DEGENERATE_LENGTH2: f64 = 1e-14;
/// `d11 d22 - d12^2` below this counts as parallel Bloch vectors.
pub const PARALLEL_GUARD: f64 = 1e-24;
/// Allowed drift of the arccos argument outside `[-1, 1]`.
pub const ARCCOS_SLACK: f64 = 1e-12;
/// Tolerated negative radicand in the root-type distances.
pub const RADICAND_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FunctionalKind {
    Re,
    Sm,
    Hs,
    Split,
    SplitAdaptive,
}

impl FunctionalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Re => "re",
            Self::Sm => "sm",
            Self::Hs => "hs",
            Self::Split => "split",
            Self::SplitAdaptive => "split-adaptive",
        }
    }

    pub fn is_split(self) -> bool {
        matches!(self, Self::Split | Self::SplitAdaptive)
    }
}

impl fmt::Display for FunctionalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FunctionalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "re" => Self::Re,
            "sm" => Self::Sm,
            "hs" => Self::Hs,
            "split" => Self::Split,
            "split-adaptive" => Self::SplitAdaptive,
            other => return invalid(format!("unknown functional '{other}'")),
        })
    }
}

/// A functional together with its target state and (for the split kinds)
/// angle/length weights.
#[derive(Clone, Debug)]
pub struct FunctionalSpec {
    pub kind: FunctionalKind,
    pub alpha1: f64,
    pub alpha2: f64,
    pub target: DensityMatrix,
}

impl FunctionalSpec {
    /// Weights default to `1/2, 1/2`.
    pub fn new(kind: FunctionalKind, target: DensityMatrix) -> Self {
        Self { kind, alpha1: 0.5, alpha2: 0.5, target }
    }

    pub fn split(alpha1: f64, alpha2: f64, target: DensityMatrix) -> Result<Self> {
        let s = Self { kind: FunctionalKind::Split, alpha1, alpha2, target };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.is_split() {
            if !(self.alpha1 >= 0.0) || !(self.alpha2 >= 0.0) {
                return invalid("split weights must be nonnegative");
            }
            if self.kind == FunctionalKind::Split && !(self.alpha1 + self.alpha2 > 0.0) {
                return invalid("split weights must not both vanish");
            }
        }
        Ok(())
    }

    /// Value of `D` at `rho`.
    pub fn value(&self, rho: &DensityMatrix) -> Result<f64> {
        match self.kind {
            FunctionalKind::Re => d_re(rho, &self.target),
            FunctionalKind::Sm => d_sm(rho, &self.target),
            FunctionalKind::Hs => d_hs(rho, &self.target),
            FunctionalKind::Split | FunctionalKind::SplitAdaptive => d_split(self, rho),
        }
    }
}

fn check_dims(a: &DensityMatrix, b: &DensityMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return invalid(format!("dimension mismatch: {} vs {}", a.dim(), b.dim()));
    }
    Ok(())
}

/// `tau = <rho, target>`, real for Hermitian arguments.
pub fn overlap_tau(rho: &DensityMatrix, target: &DensityMatrix) -> Result<f64> {
    Ok(hs_overlap(rho.matrix(), target.matrix())?.re)
}

pub fn d_re(rho: &DensityMatrix, target: &DensityMatrix) -> Result<f64> {
    Ok(1.0 - overlap_tau(rho, target)?)
}

pub fn d_sm(rho: &DensityMatrix, target: &DensityMatrix) -> Result<f64> {
    let tau = overlap_tau(rho, target)?;
    Ok(1.0 - tau * tau)
}

/// `1/2 Tr (rho1 - rho2)^2`.
pub fn d_hs(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    check_dims(rho1, rho2)?;
    let diff = rho1.matrix() - rho2.matrix();
    Ok(0.5 * diff.iter().map(|z| z.norm_sqr()).sum::<f64>())
}

/// Traceless part `rho - (Tr rho / N) I`, the operator form of the Bloch vector.
fn bloch_part(rho: &Operator) -> Operator {
    let n = rho.nrows();
    let shift = rho.trace().re / n as f64;
    let mut m = rho.clone();
    for i in 0..n {
        m[(i, i)] -= shift;
    }
    m
}

/// Bloch-vector products `d11, d22, d12`, taken between traceless parts so
/// that nearly maximally mixed states do not lose precision to cancellation.
fn bloch_products(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<(f64, f64, f64)> {
    check_dims(rho1, rho2)?;
    let (a, b) = (bloch_part(rho1.matrix()), bloch_part(rho2.matrix()));
    Ok((
        hs_overlap_unchecked(&a, &a).re,
        hs_overlap_unchecked(&b, &b).re,
        hs_overlap_unchecked(&a, &b).re,
    ))
}

fn angle_from(d11: f64, d22: f64, d12: f64) -> Result<Option<f64>> {
    if d11 < DEGENERATE_LENGTH2 || d22 < DEGENERATE_LENGTH2 {
        return Ok(None);
    }
    let c = d12 / (d11 * d22).sqrt();
    if c.abs() > 1.0 + ARCCOS_SLACK {
        return Err(Error::NumericalConsistency(format!("arccos argument {c} outside [-1, 1]")));
    }
    Ok(Some(c.clamp(-1.0, 1.0).acos()))
}

fn length_from(n: usize, d11: f64, d22: f64) -> f64 {
    let n = n as f64;
    let diff = d11.max(0.0).sqrt() - d22.max(0.0).sqrt();
    n / (n - 1.0) * diff * diff
}

/// `theta^2 / pi^2` for the angle `theta` between the Bloch vectors.
pub fn d_angle(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    let (d11, d22, d12) = bloch_products(rho1, rho2)?;
    match angle_from(d11, d22, d12)? {
        Some(theta) => Ok(theta * theta / (PI * PI)),
        None => Err(Error::UndefinedAngle),
    }
}

/// `N/(N-1) (|r1| - |r2|)^2`.
pub fn d_length(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    let (d11, d22, _) = bloch_products(rho1, rho2)?;
    Ok(length_from(rho1.dim(), d11, d22))
}

/// Angle term (when defined) and length term.
fn split_parts(rho: &DensityMatrix, target: &DensityMatrix) -> Result<(Option<f64>, f64)> {
    let (d11, d22, d12) = bloch_products(rho, target)?;
    let angle = angle_from(d11, d22, d12)?.map(|t| t * t / (PI * PI));
    Ok((angle, length_from(rho.dim(), d11, d22)))
}

/// `alpha1 D_angle + alpha2 D_length`, with the angle term counted as zero when
/// either state is maximally mixed. The result still vanishes only for equal
/// states because the length term then carries the mismatch.
pub fn d_split(spec: &FunctionalSpec, rho: &DensityMatrix) -> Result<f64> {
    let (angle, length) = split_parts(rho, &spec.target)?;
    Ok(spec.alpha1 * angle.unwrap_or(0.0) + spec.alpha2 * length)
}

/// Gradient of `D_angle` with respect to the first state.
fn grad_angle(rho: &Operator, target: &Operator, d11: f64, d22: f64, d12: f64) -> Result<Operator> {
    let n = rho.nrows();
    let disc = d11 * d22 - d12 * d12;
    let theta = match angle_from(d11, d22, d12)? {
        Some(t) => t,
        None => return Ok(Operator::zeros(n, n)),
    };
    if disc < PARALLEL_GUARD {
        return Ok(Operator::zeros(n, n));
    }
    let pre = -2.0 / (PI * PI) * theta / disc.sqrt();
    let r = d12 / d11;
    Ok(Operator::from_fn(n, n, |i, j| (target[(i, j)] - rho[(i, j)] * r) * pre))
}

fn grad_length(rho: &Operator, big_n: usize, d11: f64, d22: f64) -> Operator {
    let n = big_n as f64;
    let (s1, s2) = (d11.sqrt(), d22.max(0.0).sqrt());
    let pre = 2.0 * n / (n - 1.0) * (s1 - s2) / s1;
    rho.map(|z| z * pre)
}

/// Gradients of the angle and length terms at `(rho, target)`.
pub fn split_gradients(rho: &DensityMatrix, target: &DensityMatrix) -> Result<(Operator, Operator)> {
    let (d11, d22, d12) = bloch_products(rho, target)?;
    if d11 < DEGENERATE_LENGTH2 {
        return Err(Error::DegenerateState(format!(
            "Bloch vector of the propagated state vanishes (|r|^2 = {d11:e})"
        )));
    }
    Ok((
        grad_angle(rho.matrix(), target.matrix(), d11, d22, d12)?,
        grad_length(rho.matrix(), rho.dim(), d11, d22),
    ))
}

/// Gradient of `D` with respect to the final state.
pub fn gradient(spec: &FunctionalSpec, rho: &DensityMatrix) -> Result<Operator> {
    check_dims(rho, &spec.target)?;
    let trg = spec.target.matrix();
    Ok(match spec.kind {
        FunctionalKind::Re => -trg,
        FunctionalKind::Sm => {
            let tau = overlap_tau(rho, &spec.target)?;
            trg.map(|z| z * (-2.0 * tau))
        }
        FunctionalKind::Hs => rho.matrix() - trg,
        FunctionalKind::Split | FunctionalKind::SplitAdaptive => {
            let (ga, gl) = split_gradients(rho, &spec.target)?;
            ga.map(|z| z * spec.alpha1) + gl.map(|z| z * spec.alpha2)
        }
    })
}

/// Co-state boundary condition `chi(T) = -grad D`.
pub fn costate_seed(spec: &FunctionalSpec, rho_t: &DensityMatrix) -> Result<CoState> {
    spec.validate()?;
    let g = gradient(spec, rho_t)?;
    // symmetrize away rounding so the seed is Hermitian to machine precision
    let seed = Operator::from_fn(g.nrows(), g.ncols(), |i, j| -(g[(i, j)] + g[(j, i)].conj()) * 0.5);
    CoState::new(seed)
}

/// `1/2 || rho1 - rho2 ||_tr`.
pub fn d_trace(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    check_dims(rho1, rho2)?;
    let ev = eigenvalues_hermitian(&(rho1.matrix() - rho2.matrix()));
    Ok(0.5 * ev.iter().map(|l| l.abs()).sum::<f64>())
}

fn root_of_radicand(name: &str, r: f64) -> Result<f64> {
    if r < -RADICAND_SLACK {
        return Err(Error::NumericalConsistency(format!("{name} radicand {r:e} is negative")));
    }
    Ok(r.max(0.0).sqrt())
}

fn frobenius2(m: &Operator) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// `sqrt(1 - Tr sqrt(sqrt(rho1) rho2 sqrt(rho1)))`.
///
/// The root fidelity equals the trace norm of `sqrt(rho1) sqrt(rho2)`, which
/// is attained by the unitary `U` of its polar decomposition. For unit-trace
/// states the radicand is then `1/2 || sqrt(rho1) - sqrt(rho2) U ||_F^2`, which
/// stays accurate when the states nearly coincide.
pub fn d_bures(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    check_dims(rho1, rho2)?;
    let s1 = hermitian_sqrt(rho1)?;
    let s2 = hermitian_sqrt(rho2)?;
    let svd = (&s1 * &s2).svd(true, true);
    let (w, v_t) = (svd.u.expect("left vectors"), svd.v_t.expect("right vectors"));
    // s1 s2 = W S V^dagger, so s2^dagger s1 = V S W^dagger and U = V W^dagger
    // makes s2 U line up with s1
    let u = v_t.adjoint() * w.adjoint();
    let r = 0.5 * frobenius2(&(&s1 - &s2 * u));
    root_of_radicand("Bures", r)
}

/// `sqrt(1 - Tr sqrt(rho1) sqrt(rho2))`, evaluated as
/// `sqrt(1/2 || sqrt(rho1) - sqrt(rho2) ||_F^2)` (identical for unit trace).
pub fn d_hellinger(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    check_dims(rho1, rho2)?;
    let s1 = hermitian_sqrt(rho1)?;
    let s2 = hermitian_sqrt(rho2)?;
    root_of_radicand("Hellinger", 0.5 * frobenius2(&(s1 - s2)))
}

/// Square root of the quantum Jensen-Shannon divergence
/// `S((rho1+rho2)/2) - S(rho1)/2 - S(rho2)/2` with `S = -Tr rho ln rho`.
pub fn d_js(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    check_dims(rho1, rho2)?;
    let mid = (rho1.matrix() + rho2.matrix()).map(|z| z * 0.5);
    let mid = DensityMatrix::from_trusted(mid);
    let e_mid = von_neumann_entropy(&mid)?;
    let r = 0.5 * von_neumann_entropy(rho1)? + 0.5 * von_neumann_entropy(rho2)? - e_mid;
    root_of_radicand("Jensen-Shannon", r)
}

/// All distance measures between a state and a target. Angle and length are
/// `None` when the angle is undefined (a maximally mixed argument); the split
/// value then uses a zero angle term.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceReport {
    pub d_re: f64,
    pub d_sm: f64,
    pub d_hs: f64,
    pub d_angle: Option<f64>,
    pub d_length: f64,
    /// Split value with equal weights `1/2, 1/2`.
    pub d_split: f64,
    pub d_trace: f64,
    pub d_bures: f64,
    pub d_hellinger: f64,
    pub d_js: f64,
}

pub fn distance_report(rho: &DensityMatrix, target: &DensityMatrix) -> Result<DistanceReport> {
    check_dims(rho, target)?;
    let tau = overlap_tau(rho, target)?;
    let (angle, length) = split_parts(rho, target)?;
    Ok(DistanceReport {
        d_re: 1.0 - tau,
        d_sm: 1.0 - tau * tau,
        d_hs: d_hs(rho, target)?,
        d_angle: angle,
        d_length: length,
        d_split: 0.5 * angle.unwrap_or(0.0) + 0.5 * length,
        d_trace: d_trace(rho, target)?,
        d_bures: d_bures(rho, target)?,
        d_hellinger: d_hellinger(rho, target)?,
        d_js: d_js(rho, target)?,
    })
}
