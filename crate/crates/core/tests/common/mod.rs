#![allow(dead_code)]

use krotov_core::models::OptomechParams;
use krotov_core::quantum::{DensityMatrix, Operator, C64};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use rand::SeedableRng;
pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut TestRng, n: usize) -> Operator {
    Operator::from_fn(n, n, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

/// Full-rank random state `G G^dagger / Tr` from a complex Ginibre matrix.
pub fn random_state(rng: &mut TestRng, n: usize) -> DensityMatrix {
    let g = gaussian_matrix(rng, n);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    let m = m.map(|z| z / tr);
    DensityMatrix::new(hermitize(&m)).expect("Ginibre state is valid")
}

pub fn random_hermitian(rng: &mut TestRng, n: usize) -> Operator {
    hermitize(&gaussian_matrix(rng, n))
}

/// Random traceless Hermitian matrix with unit Frobenius norm.
pub fn random_traceless(rng: &mut TestRng, n: usize) -> Operator {
    let mut h = random_hermitian(rng, n);
    let shift = h.trace().re / n as f64;
    for i in 0..n {
        h[(i, i)] -= shift;
    }
    let norm = frobenius(&h);
    h.map(|z| z / norm)
}

pub fn hermitize(m: &Operator) -> Operator {
    Operator::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

pub fn frobenius(m: &Operator) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_entry(m: &Operator) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `Tr(a^dagger b)` by explicit index sums.
pub fn overlap(a: &Operator, b: &Operator) -> C64 {
    let n = a.nrows();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)].conj() * b[(i, j)];
        }
    }
    s
}

/// Orthonormal (under `Tr(A B)`) traceless Hermitian basis of size `n^2 - 1`:
/// the symmetric, antisymmetric and diagonal generalized Gell-Mann matrices
/// scaled by `1/sqrt(2)`.
pub fn gell_mann_basis(n: usize) -> Vec<Operator> {
    let s = 0.5f64.sqrt();
    let mut out = Vec::new();
    for j in 0..n {
        for k in j + 1..n {
            let mut sym = Operator::zeros(n, n);
            sym[(j, k)] = C64::new(s, 0.0);
            sym[(k, j)] = C64::new(s, 0.0);
            out.push(sym);
            let mut asym = Operator::zeros(n, n);
            asym[(j, k)] = C64::new(0.0, -s);
            asym[(k, j)] = C64::new(0.0, s);
            out.push(asym);
        }
    }
    for l in 1..n {
        let norm = (1.0 / (l * (l + 1)) as f64).sqrt();
        let mut d = Operator::zeros(n, n);
        for m in 0..l {
            d[(m, m)] = C64::new(norm, 0.0);
        }
        d[(l, l)] = C64::new(-(l as f64) * norm, 0.0);
        out.push(d);
    }
    out
}

/// Bloch coefficients `a_i = Tr(A_i rho)` in the basis above.
pub fn bloch_vector(rho: &DensityMatrix, basis: &[Operator]) -> Vec<f64> {
    basis.iter().map(|a| overlap(a, rho.matrix()).re).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Steady-state `<X1^2>` of the resonator in the untruncated linear theory,
/// from the Lyapunov equation `A S + S A^T + N = 0` for the symmetrized
/// second moments of `v = (d, b, d^dag, b^dag)`.
pub fn lyapunov_x1_variance(p: &OptomechParams) -> f64 {
    let i = C64::new(0.0, 1.0);
    let (gm, gp) = (p.g_minus, p.g_plus);
    let (k2, g2) = (C64::new(-p.kappa / 2.0, 0.0), C64::new(-p.gamma_m / 2.0, 0.0));
    let z = C64::new(0.0, 0.0);
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        k2,       i * gm,   z,         i * gp,
        i * gm,   g2,       i * gp,    z,
        z,        -i * gp,  k2,        -i * gm,
        -i * gp,  z,        -i * gm,   g2,
    ]);
    let mut noise = DMatrix::<C64>::zeros(4, 4);
    noise[(0, 2)] = C64::new(p.kappa / 2.0, 0.0);
    noise[(2, 0)] = noise[(0, 2)];
    noise[(1, 3)] = C64::new(p.gamma_m * (p.n_th + 0.5), 0.0);
    noise[(3, 1)] = noise[(1, 3)];
    let id = DMatrix::<C64>::identity(4, 4);
    let big = id.kronecker(&a) + a.kronecker(&id);
    let rhs = DMatrix::from_iterator(16, 1, noise.iter().map(|z| -z));
    let sol = big.lu().solve(&rhs).expect("stable linear dynamics");
    let s = DMatrix::from_iterator(4, 4, sol.iter().copied());
    let x = (s[(1, 1)] + s[(3, 3)] + s[(1, 3)] + s[(3, 1)]) * 0.5;
    x.re
}
