//! Row-compressed complex matrices for the matrix-free generator products.

use crate::quantum::{Operator, C64};

#[derive(Clone, Debug)]
pub(crate) struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl Csr {
    pub(crate) fn from_dense(m: &Operator) -> Self {
        let n = m.nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if v.re != 0.0 || v.im != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    #[cfg(test)]
    pub(crate) fn nnz(&self) -> usize {
        self.vals.len()
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// `out = scale * self * x` (overwrites `out`).
    pub(crate) fn mul_left(&self, x: &Operator, scale: C64, out: &mut Operator) {
        let n = self.n;
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for j in 0..n {
            let xcol = &xs[j * n..(j + 1) * n];
            let ocol = &mut os[j * n..(j + 1) * n];
            for (i, o) in ocol.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (k, a) in self.row(i) {
                    acc += a * xcol[k];
                }
                *o = acc * scale;
            }
        }
    }

    /// `out += scale * x * self^dagger`.
    pub(crate) fn add_mul_right_adjoint(&self, x: &Operator, scale: C64, out: &mut Operator) {
        let n = self.n;
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for j in 0..n {
            let ocol = &mut os[j * n..(j + 1) * n];
            for (k, a) in self.row(j) {
                let w = a.conj() * scale;
                let xcol = &xs[k * n..(k + 1) * n];
                for (o, xv) in ocol.iter_mut().zip(xcol) {
                    *o += w * xv;
                }
            }
        }
    }
}
