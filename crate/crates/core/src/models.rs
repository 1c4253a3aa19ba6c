//! Concrete systems: a qubit with a controllable decay rate and the two-tone
//! driven optomechanical system in the linearized, rotating frame.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::propagation::{Control, ControlKind, SystemModel};
use crate::quantum::{annihilation, expectation, identity, partial_trace, tensor, thermal_state, DensityMatrix, Operator};

pub const TWO_PI: f64 = 2.0 * PI;

/// Zero-point value of `<X1^2>` for `X1 = (b + b^dagger)/sqrt(2)`.
pub const X1_ZPF: f64 = 0.5;

/// Qubit whose only dynamics is decay `|1> -> |0>` at a controllable rate `u(t)`.
/// Starts in `|1><1|`.
pub fn qubit_decay_model() -> SystemModel {
    let sigma_minus = annihilation(2).expect("two levels");
    SystemModel::new(
        Operator::zeros(2, 2),
        vec![Control { name: "u".into(), kind: ControlKind::DecayRate(sigma_minus) }],
        Vec::new(),
        DensityMatrix::basis(2, 1).expect("qubit basis state"),
        vec![2],
    )
    .expect("qubit model is consistent")
}

/// Parameters of the cavity + mechanical resonator system. Rates in rad/s.
#[derive(Clone, Debug, PartialEq)]
pub struct OptomechParams {
    /// Photon decay rate.
    pub kappa: f64,
    /// Phonon decay rate.
    pub gamma_m: f64,
    /// Thermal occupancy of the mechanical bath.
    pub n_th: f64,
    pub n_cav: usize,
    pub n_res: usize,
    /// Red-sideband (beam-splitter) coupling.
    pub g_minus: f64,
    /// Blue-sideband (two-mode squeezing) coupling.
    pub g_plus: f64,
}

impl OptomechParams {
    /// Couplings derived from the cooperativity and the ratio `G+/G-`.
    pub fn from_cooperativity(
        kappa: f64,
        gamma_m: f64,
        n_th: f64,
        n_cav: usize,
        n_res: usize,
        cooperativity: f64,
        ratio: f64,
    ) -> Result<Self> {
        if !(cooperativity > 0.0) {
            return invalid(format!("cooperativity must be positive, got {cooperativity}"));
        }
        let g_minus = g_from_cooperativity(cooperativity, kappa, gamma_m);
        let p = Self { kappa, gamma_m, n_th, n_cav, n_res, g_minus, g_plus: ratio * g_minus };
        p.validate()?;
        Ok(p)
    }

    /// Small parameter set for CI: Gamma_M raised 100x over the experimental
    /// value so that thermalization completes within about 10^4 steps.
    pub fn desk_scale() -> Self {
        Self::from_cooperativity(TWO_PI * 450e3, TWO_PI * 300.0, 0.5, 3, 12, 10.0, 0.5).expect("valid desk parameters")
    }

    /// Experimental decay rates, `C = 100`, `G+/G- = 0.7`, `n_th = 2`.
    pub fn paper_scale() -> Self {
        Self::from_cooperativity(TWO_PI * 450e3, TWO_PI * 3.0, 2.0, 4, 40, 100.0, 0.7).expect("valid full-size parameters")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !(self.gamma_m > 0.0) {
            return invalid("kappa and gamma_m must be positive");
        }
        if !(self.n_th >= 0.0) {
            return invalid("n_th must be nonnegative");
        }
        if self.n_cav < 2 || self.n_res < 2 {
            return invalid("cavity and resonator need at least two levels each");
        }
        if !(self.g_minus >= 0.0) || !(self.g_plus >= 0.0) {
            return invalid("couplings must be nonnegative");
        }
        if self.g_plus > 0.0 && self.g_plus >= self.g_minus {
            return invalid(format!(
                "G+/G- = {} must be below 1 for a damped steady state",
                self.g_plus / self.g_minus
            ));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 2] {
        [self.n_cav, self.n_res]
    }

    pub fn cooperativity(&self) -> f64 {
        cooperativity(self.g_minus, self.kappa, self.gamma_m)
    }

    /// Constant drive values in track order `[g_minus, g_plus]`.
    pub fn constant_controls(&self) -> [f64; 2] {
        [self.g_minus, self.g_plus]
    }
}

pub const OPTOMECH_TRACKS: [&str; 2] = ["g_minus", "g_plus"];

/// `H = G-(t) H- + G+(t) H+` with `H- = -(d^dag b + b^dag d)` and
/// `H+ = -(d^dag b^dag + b d)`; collapse operators `sqrt(kappa) d`,
/// `sqrt(Gamma_M (n_th+1)) b`, `sqrt(Gamma_M n_th) b^dag`. The cavity starts in
/// its ground state, the resonator in the bath's thermal state.
pub fn optomech_model(p: &OptomechParams) -> Result<SystemModel> {
    p.validate()?;
    let d = tensor(&annihilation(p.n_cav)?, &identity(p.n_res));
    let b = tensor(&identity(p.n_cav), &annihilation(p.n_res)?);
    let (dd, bd) = (d.adjoint(), b.adjoint());
    let h_minus = -(&dd * &b + &bd * &d);
    let h_plus = -(&dd * &bd + &b * &d);

    let scaled = |m: &Operator, rate: f64| m.map(|z| z * rate.sqrt());
    let mut collapse = vec![scaled(&d, p.kappa), scaled(&b, p.gamma_m * (p.n_th + 1.0))];
    if p.n_th > 0.0 {
        collapse.push(scaled(&bd, p.gamma_m * p.n_th));
    }

    let cav_ground = DensityMatrix::basis(p.n_cav, 0)?;
    let res_thermal = thermal_state(p.n_res, p.n_th)?;
    let rho0 = DensityMatrix::new(tensor(cav_ground.matrix(), res_thermal.matrix()))?;

    SystemModel::new(
        Operator::zeros(p.n_cav * p.n_res, p.n_cav * p.n_res),
        vec![
            Control { name: OPTOMECH_TRACKS[0].into(), kind: ControlKind::Hamiltonian(h_minus) },
            Control { name: OPTOMECH_TRACKS[1].into(), kind: ControlKind::Hamiltonian(h_plus) },
        ],
        collapse,
        rho0,
        vec![p.n_cav, p.n_res],
    )
}

/// `C = 4 G-^2 / (kappa Gamma_M)`.
pub fn cooperativity(g_minus: f64, kappa: f64, gamma_m: f64) -> f64 {
    4.0 * g_minus * g_minus / (kappa * gamma_m)
}

/// Inverse of [`cooperativity`]: `G- = sqrt(C kappa Gamma_M) / 2`.
pub fn g_from_cooperativity(c: f64, kappa: f64, gamma_m: f64) -> f64 {
    (c * kappa * gamma_m).sqrt() / 2.0
}

/// `X1^2` on an `n`-level oscillator.
pub fn x1_squared(n_levels: usize) -> Result<Operator> {
    let b = annihilation(n_levels)?;
    let x = (&b + b.adjoint()).map(|z| z / 2f64.sqrt());
    Ok(&x * &x)
}

/// Resonator state obtained by tracing out the cavity.
pub fn resonator_state(rho_joint: &DensityMatrix, p: &OptomechParams) -> Result<DensityMatrix> {
    partial_trace(rho_joint, &p.dims(), 1)
}

/// `<X1^2>` of the resonator.
pub fn x1_variance(rho_joint: &DensityMatrix, p: &OptomechParams) -> Result<f64> {
    let res = resonator_state(rho_joint, p)?;
    let v = expectation(&res, &x1_squared(p.n_res)?)?;
    if !(v > 0.0) {
        return Err(Error::NumericalConsistency(format!("nonpositive quadrature variance {v}")));
    }
    Ok(v)
}

/// `10 log10(<X1^2>_ZPF / <X1^2>)`; positive means squeezed below zero-point.
pub fn squeezing_db(variance: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::NumericalConsistency(format!("nonpositive quadrature variance {variance}")));
    }
    Ok(10.0 * (X1_ZPF / variance).log10())
}

/// Effective cooling rate `sqrt(G-^2 - G+^2)` (zero when `G+ >= G-`).
pub fn effective_cooling_rate(g_minus: f64, g_plus: f64) -> f64 {
    (g_minus * g_minus - g_plus * g_plus).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::{liouville_apply, steady_state};
    use crate::quantum::{hermiticity_defect, max_abs};

    fn small(n_th: f64, g_minus: f64, g_plus: f64) -> OptomechParams {
        OptomechParams { kappa: 2.0, gamma_m: 0.5, n_th, n_cav: 3, n_res: 4, g_minus, g_plus }
    }

    #[test]
    fn control_hamiltonians_are_hermitian_and_h_minus_conserves_number() {
        let p = small(0.5, 0.3, 0.1);
        let m = optomech_model(&p).unwrap();
        let hs: Vec<&Operator> = m
            .controls()
            .iter()
            .map(|c| match &c.kind {
                ControlKind::Hamiltonian(h) => h,
                ControlKind::DecayRate(_) => unreachable!(),
            })
            .collect();
        for h in &hs {
            assert!(hermiticity_defect(h) < 1e-14);
        }
        let d = tensor(&annihilation(3).unwrap(), &identity(4));
        let b = tensor(&identity(3), &annihilation(4).unwrap());
        let n_tot = d.adjoint() * &d + b.adjoint() * &b;
        let comm = hs[0] * &n_tot - &n_tot * hs[0];
        // both terms move one quantum between modes, so even the truncated
        // operators commute with the total number
        assert!(max_abs(&comm) < 1e-14);
        assert_eq!(m.control_names(), vec!["g_minus", "g_plus"]);
    }

    #[test]
    fn undriven_zero_temperature_steady_state_is_ground() {
        let p = small(0.0, 0.0, 0.0);
        let m = optomech_model(&p).unwrap();
        let ss = steady_state(&m, &[0.0, 0.0], 1e-12, 200.0).unwrap();
        assert!((ss.state.matrix()[(0, 0)].re - 1.0).abs() < 1e-10);
        let zero = liouville_apply(&m, &[0.0, 0.0], DensityMatrix::basis(12, 0).unwrap().matrix()).unwrap();
        assert_eq!(max_abs(&zero), 0.0);
    }

    #[test]
    fn parameter_validation() {
        assert!(optomech_model(&small(0.5, 0.3, 0.3)).is_err());
        assert!(optomech_model(&OptomechParams { n_cav: 1, ..small(0.5, 0.3, 0.1) }).is_err());
        assert!(optomech_model(&OptomechParams { kappa: 0.0, ..small(0.5, 0.3, 0.1) }).is_err());
        assert!(optomech_model(&small(-1.0, 0.3, 0.1)).is_err());
    }

    #[test]
    fn cooperativity_relations() {
        let (kappa, gamma) = (TWO_PI * 450e3, TWO_PI * 3.0);
        let g = g_from_cooperativity(100.0, kappa, gamma);
        assert!((g - 36502.008).abs() < 1e-2, "{g}");
        assert!((g / TWO_PI - 5809.5).abs() < 1.0);
        assert!((cooperativity(g, kappa, gamma) - 100.0).abs() < 1e-12);
        let c1 = cooperativity(1.3, 2.0, 0.7);
        let c2 = cooperativity(1.3 * 2f64.sqrt(), 2.0, 0.7);
        assert!((c2 / c1 - 2.0).abs() < 1e-12);
        let desk = OptomechParams::desk_scale();
        assert!((desk.cooperativity() - 10.0).abs() < 1e-12);
        assert!((desk.g_plus / desk.g_minus - 0.5).abs() < 1e-15);
    }

    #[test]
    fn variance_and_squeezing_of_reference_states() {
        let p = OptomechParams { n_res: 40, ..small(2.0, 0.3, 0.1) };
        let ground = DensityMatrix::basis(3 * 40, 0).unwrap();
        let v = x1_variance(&ground, &p).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
        assert!(squeezing_db(v).unwrap().abs() < 1e-12);

        let joint = DensityMatrix::new(tensor(
            DensityMatrix::basis(3, 0).unwrap().matrix(),
            thermal_state(40, 2.0).unwrap().matrix(),
        ))
        .unwrap();
        let v = x1_variance(&joint, &p).unwrap();
        assert!((v - 2.5).abs() < 1e-3);
        assert!((squeezing_db(2.5).unwrap() + 6.9897).abs() < 1e-4);
        assert!(squeezing_db(0.0).is_err());
    }
}
