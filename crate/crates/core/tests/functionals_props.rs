mod common;

use common::*;
use krotov_core::functionals::*;
use krotov_core::quantum::*;
use krotov_core::Error;
use proptest::prelude::*;
use rand::Rng;
use std::f64::consts::PI;

/// Perturbed matrices need not stay positive; the functionals checked by
/// finite differences only use Hermiticity and trace.
fn loose(m: Operator) -> DensityMatrix {
    DensityMatrix::with_tolerances(m, 1e-12, 1e-9, 1.0).unwrap()
}

/// Relative error of the directional derivative against a central difference.
fn directional_error(spec: &FunctionalSpec, rho: &DensityMatrix, delta: &Operator, eps: f64) -> f64 {
    let grad = costate_seed(spec, rho).unwrap().matrix().map(|z| -z);
    let analytic = overlap(&grad, delta).re;
    let plus = spec.value(&loose(rho.matrix() + delta.map(|z| z * eps))).unwrap();
    let minus = spec.value(&loose(rho.matrix() - delta.map(|z| z * eps))).unwrap();
    let fd = (plus - minus) / (2.0 * eps);
    (analytic - fd).abs() / (frobenius(&grad) * frobenius(delta))
}

#[test]
fn costate_seeds_match_central_differences() {
    let mut r = rng(31);
    for n in [2, 4] {
        let mut worst = [0.0f64; 3];
        for _ in 0..100 {
            let (rho, trg) = (random_state(&mut r, n), random_state(&mut r, n));
            let delta = random_traceless(&mut r, n);
            let specs = [
                FunctionalSpec::new(FunctionalKind::Hs, trg.clone()),
                FunctionalSpec::split(1.0, 0.0, trg.clone()).unwrap(),
                FunctionalSpec::split(0.0, 1.0, trg.clone()).unwrap(),
            ];
            for (w, spec) in worst.iter_mut().zip(&specs) {
                let e = directional_error(spec, &rho, &delta, 1e-5);
                // near |r1| = |r2| the length gradient is small and the
                // difference quotient's eps^2 term dominates; that error must
                // then shrink quadratically
                if e >= 1e-6 {
                    let fine = directional_error(spec, &rho, &delta, 1e-6);
                    assert!(fine < 1e-6 && e / fine > 50.0, "N = {n}: {e:e} at 1e-5, {fine:e} at 1e-6");
                    continue;
                }
                *w = w.max(e);
            }
        }
        for (name, w) in ["hs", "angle", "length"].iter().zip(worst) {
            assert!(w < 1e-6, "N = {n}, {name}: relative error {w:e}");
        }
    }
}

#[test]
fn overlap_functional_gradients_are_exact() {
    let mut r = rng(32);
    for _ in 0..20 {
        let (rho, trg) = (random_state(&mut r, 3), random_state(&mut r, 3));
        let delta = random_traceless(&mut r, 3);
        for kind in [FunctionalKind::Re, FunctionalKind::Sm] {
            let spec = FunctionalSpec::new(kind, trg.clone());
            assert!(directional_error(&spec, &rho, &delta, 1e-5) < 1e-8);
        }
        let seed = costate_seed(&FunctionalSpec::new(FunctionalKind::Re, trg.clone()), &rho).unwrap();
        assert_eq!(seed.matrix(), trg.matrix());
    }
}

#[test]
fn hs_seed_vanishes_at_target() {
    let mut r = rng(33);
    let trg = random_state(&mut r, 4);
    let seed = costate_seed(&FunctionalSpec::new(FunctionalKind::Hs, trg.clone()), &trg).unwrap();
    assert_eq!(max_entry(seed.matrix()), 0.0);
    let split = costate_seed(&FunctionalSpec::split(0.5, 0.5, trg.clone()).unwrap(), &trg).unwrap();
    assert!(max_entry(split.matrix()) < 1e-9);
}

#[test]
fn split_seed_rejects_maximally_mixed_state() {
    let spec = FunctionalSpec::split(0.5, 0.5, DensityMatrix::from_diagonal(&[0.6, 0.4]).unwrap()).unwrap();
    let mixed = DensityMatrix::maximally_mixed(2).unwrap();
    assert!(matches!(costate_seed(&spec, &mixed), Err(Error::DegenerateState(_))));
    assert!(matches!(d_angle(&mixed, &spec.target), Err(Error::UndefinedAngle)));
    // the functional value itself stays defined
    assert!((d_split(&spec, &mixed).unwrap() - 0.5 * 2.0 * 0.02).abs() < 1e-15);
}

fn reliable_values(a: &DensityMatrix, b: &DensityMatrix) -> [(&'static str, f64); 8] {
    let half = FunctionalSpec::split(0.5, 0.5, b.clone()).unwrap();
    [
        ("trace", d_trace(a, b).unwrap()),
        ("bures", d_bures(a, b).unwrap()),
        ("hellinger", d_hellinger(a, b).unwrap()),
        ("js", d_js(a, b).unwrap()),
        ("hs", d_hs(a, b).unwrap()),
        ("angle", d_angle(a, b).unwrap()),
        ("length", d_length(a, b).unwrap()),
        ("split", d_split(&half, a).unwrap()),
    ]
}

#[test]
fn reliable_measures_vanish_only_on_equal_states() {
    let mut r = rng(34);
    for n in [2, 3, 4] {
        for _ in 0..1000 {
            let (a, b) = (random_state(&mut r, n), random_state(&mut r, n));
            assert!(max_entry(&(a.matrix() - b.matrix())) > 1e-10);
            let copy = DensityMatrix::new(a.matrix().clone()).unwrap();
            for (name, v) in reliable_values(&a, &copy) {
                assert!((0.0..=1e-9).contains(&v), "N = {n}: {name} on equal states = {v:e}");
            }
            let distinct = reliable_values(&a, &b);
            for (name, v) in distinct {
                if name != "angle" && name != "length" {
                    assert!(v > 1e-9, "N = {n}: {name} on distinct states = {v:e}");
                }
                assert!(v >= 0.0);
            }
            for (name, v) in &distinct[..2] {
                assert!(*v <= 1.0, "{name} = {v}");
            }
            for (name, v) in &distinct[5..] {
                assert!(*v <= 1.0, "{name} = {v}");
            }
        }
    }
}

#[test]
fn reliable_measures_separate_nearby_states() {
    // states differing by 1e-6 in one entry are still told apart
    let a = DensityMatrix::from_diagonal(&[0.5, 0.3, 0.2]).unwrap();
    let b = DensityMatrix::from_diagonal(&[0.5 + 1e-6, 0.3 - 1e-6, 0.2]).unwrap();
    for (name, v) in reliable_values(&a, &b) {
        if name != "angle" && name != "length" && name != "split" && name != "hs" {
            assert!(v > 1e-9, "{name} = {v:e}");
        }
    }
    assert!(d_hs(&a, &b).unwrap() > 0.0);
}

#[test]
fn extreme_pairs_reach_range_ends() {
    let zero = DensityMatrix::basis(3, 0).unwrap();
    let one = DensityMatrix::basis(3, 1).unwrap();
    assert!((d_trace(&zero, &one).unwrap() - 1.0).abs() < 1e-14);
    assert!((d_bures(&zero, &one).unwrap() - 1.0).abs() < 1e-7);
    assert!((d_hellinger(&zero, &one).unwrap() - 1.0).abs() < 1e-7);
    assert!((d_js(&zero, &one).unwrap() - 2f64.ln().sqrt()).abs() < 1e-12);
    let q0 = DensityMatrix::basis(2, 0).unwrap();
    let q1 = DensityMatrix::basis(2, 1).unwrap();
    assert!((d_angle(&q0, &q1).unwrap() - 1.0).abs() < 1e-14);
    assert!((d_length(&q0, &DensityMatrix::maximally_mixed(2).unwrap()).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn bloch_forms_agree_with_explicit_vectors() {
    let mut r = rng(35);
    for n in [2, 3, 4] {
        let basis = gell_mann_basis(n);
        for _ in 0..100 {
            let (a, b) = (random_state(&mut r, n), random_state(&mut r, n));
            let d11 = bloch_dot(&a, &a).unwrap();
            let d22 = bloch_dot(&b, &b).unwrap();
            let d12 = bloch_dot(&a, &b).unwrap();
            assert!((d_hs(&a, &b).unwrap() - 0.5 * (d11 - 2.0 * d12 + d22)).abs() < 1e-12);
            let (va, vb) = (bloch_vector(&a, &basis), bloch_vector(&b, &basis));
            let cos = dot(&va, &vb) / (dot(&va, &va) * dot(&vb, &vb)).sqrt();
            let theta = PI * d_angle(&a, &b).unwrap().sqrt();
            assert!((theta.cos() - cos).abs() < 1e-10);
            let n_f = n as f64;
            let expect = n_f / (n_f - 1.0) * (dot(&va, &va).sqrt() - dot(&vb, &vb).sqrt()).powi(2);
            assert!((d_length(&a, &b).unwrap() - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn report_matches_individual_measures() {
    let mut r = rng(36);
    let (a, b) = (random_state(&mut r, 3), random_state(&mut r, 3));
    let rep = distance_report(&a, &b).unwrap();
    assert_eq!(rep.d_trace, d_trace(&a, &b).unwrap());
    assert_eq!(rep.d_hs, d_hs(&a, &b).unwrap());
    assert_eq!(rep.d_angle, Some(d_angle(&a, &b).unwrap()));
    assert_eq!(rep.d_split, d_split(&FunctionalSpec::split(0.5, 0.5, b.clone()).unwrap(), &a).unwrap());
    let self_rep = distance_report(&a, &a).unwrap();
    assert!((self_rep.d_re - (1.0 - a.purity())).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pure_state_beats_target_under_overlap_functional(beta in 0.5001f64..0.9999) {
        let trg = DensityMatrix::from_diagonal(&[beta, 1.0 - beta]).unwrap();
        let pure = DensityMatrix::basis(2, 0).unwrap();
        prop_assert!(d_re(&pure, &trg).unwrap() < d_re(&trg, &trg).unwrap());
        prop_assert!(d_sm(&pure, &trg).unwrap() < d_sm(&trg, &trg).unwrap());
        prop_assert!(d_hs(&pure, &trg).unwrap() > d_hs(&trg, &trg).unwrap());
    }

    #[test]
    fn reliable_measures_are_symmetric(seed in 0u64..10_000, n in 2usize..5) {
        let mut r = rng(seed);
        let (a, b) = (random_state(&mut r, n), random_state(&mut r, n));
        prop_assert!((d_trace(&a, &b).unwrap() - d_trace(&b, &a).unwrap()).abs() < 1e-13);
        prop_assert!((d_bures(&a, &b).unwrap() - d_bures(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert!((d_js(&a, &b).unwrap() - d_js(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((d_angle(&a, &b).unwrap() - d_angle(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn trace_distance_obeys_triangle_inequality(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let n = r.gen_range(2..5);
        let (a, b, c) = (random_state(&mut r, n), random_state(&mut r, n), random_state(&mut r, n));
        let ab = d_trace(&a, &b).unwrap();
        let bc = d_trace(&b, &c).unwrap();
        let ac = d_trace(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert!(d_bures(&a, &c).unwrap() <= d_bures(&a, &b).unwrap() + d_bures(&b, &c).unwrap() + 1e-9);
    }
}
