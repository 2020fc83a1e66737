//! Row-compressed complex operators for matrix-free Liouvillian evaluation.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Sparse square operator stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp {
    dim: usize,
    rows: Vec<Vec<(usize, C64)>>,
}

impl SparseOp {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, rows: vec![Vec::new(); dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut op = Self::zeros(dim);
        for i in 0..dim {
            op.rows[i].push((i, C64::new(1.0, 0.0)));
        }
        op
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let dim = m.nrows();
        let mut op = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                let v = m[(i, j)];
                if v != C64::new(0.0, 0.0) {
                    op.rows[i].push((j, v));
                }
            }
        }
        op
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                out.rows[j].push((i, v.conj()));
            }
        }
        out
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            dim: self.dim,
            rows: self.rows.iter().map(|r| r.iter().map(|&(j, v)| (j, v * c)).collect()).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut dense_row = vec![C64::new(0.0, 0.0); self.dim];
        let mut touched = vec![false; self.dim];
        let mut rows = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let mut cols = Vec::new();
            for &(j, v) in self.rows[i].iter().chain(&other.rows[i]) {
                if !touched[j] {
                    touched[j] = true;
                    cols.push(j);
                }
                dense_row[j] += v;
            }
            cols.sort_unstable();
            let mut row = Vec::with_capacity(cols.len());
            for j in cols {
                let v = dense_row[j];
                if v != C64::new(0.0, 0.0) {
                    row.push((j, v));
                }
                dense_row[j] = C64::new(0.0, 0.0);
                touched[j] = false;
            }
            rows.push(row);
        }
        Self { dim: self.dim, rows }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut acc = vec![C64::new(0.0, 0.0); self.dim];
        let mut touched = vec![false; self.dim];
        let mut rows = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let mut cols = Vec::new();
            for &(k, a) in &self.rows[i] {
                for &(j, b) in &other.rows[k] {
                    if !touched[j] {
                        touched[j] = true;
                        cols.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            cols.sort_unstable();
            let mut row = Vec::with_capacity(cols.len());
            for j in cols {
                if acc[j] != C64::new(0.0, 0.0) {
                    row.push((j, acc[j]));
                }
                acc[j] = C64::new(0.0, 0.0);
                touched[j] = false;
            }
            rows.push(row);
        }
        Self { dim: self.dim, rows }
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let dim = self.dim * other.dim;
        let mut rows = vec![Vec::new(); dim];
        for (i, ra) in self.rows.iter().enumerate() {
            for (k, rb) in other.rows.iter().enumerate() {
                let row = &mut rows[i * other.dim + k];
                for &(j, a) in ra {
                    for &(l, b) in rb {
                        row.push((j * other.dim + l, a * b));
                    }
                }
            }
        }
        Self { dim, rows }
    }

    /// out += c · A ρ, with ρ and out stored column-major (dim × dim).
    pub fn left_mul_acc(&self, rho: &[C64], c: C64, out: &mut [C64]) {
        let d = self.dim;
        for col in 0..d {
            let rc = &rho[col * d..(col + 1) * d];
            let oc = &mut out[col * d..(col + 1) * d];
            for (i, row) in self.rows.iter().enumerate() {
                let mut s = C64::new(0.0, 0.0);
                for &(k, v) in row {
                    s += v * rc[k];
                }
                oc[i] += c * s;
            }
        }
    }

    /// out += c · ρ A, column-major.
    pub fn right_mul_acc(&self, rho: &[C64], c: C64, out: &mut [C64]) {
        let d = self.dim;
        // (ρA)[:, j] = Σ_k ρ[:, k] A[k, j]
        for (k, row) in self.rows.iter().enumerate() {
            let rc = &rho[k * d..(k + 1) * d];
            for &(j, v) in row {
                let f = c * v;
                let oc = &mut out[j * d..(j + 1) * d];
                for (o, r) in oc.iter_mut().zip(rc) {
                    *o += f * r;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(dim: usize, seed: u64) -> DMatrix<C64> {
        let mut s = seed;
        DMatrix::from_fn(dim, dim, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5;
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5;
            if a.abs() < 0.2 { C64::new(0.0, 0.0) } else { C64::new(a, b) }
        })
    }

    #[test]
    fn products_match_dense() {
        let a = sample(5, 1);
        let b = sample(5, 2);
        let rho = sample(5, 3);
        let sa = SparseOp::from_dense(&a);
        let sb = SparseOp::from_dense(&b);
        assert!((sa.matmul(&sb).to_dense() - &a * &b).norm() < 1e-12);
        assert!((sa.add(&sb).to_dense() - (&a + &b)).norm() < 1e-12);
        assert!((sa.adjoint().to_dense() - a.adjoint()).norm() < 1e-15);
        assert!((sa.kron(&sb).to_dense() - a.kronecker(&b)).norm() < 1e-12);

        let c = C64::new(0.3, -1.2);
        let mut out = vec![C64::new(0.0, 0.0); 25];
        sa.left_mul_acc(rho.as_slice(), c, &mut out);
        sb.right_mul_acc(rho.as_slice(), c, &mut out);
        let expected = (&a * &rho + &rho * &b) * c;
        let got = DMatrix::from_column_slice(5, 5, &out);
        assert!((got - expected).norm() < 1e-12);
    }
}
