//! LU factorisation with partial pivoting, and random orthogonal matrices.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numkernel::Tensor;

/// Pivots smaller than this (relative to the largest entry) count as singular.
const SINGULAR_TOL: f64 = 1e-13;

/// Packed LU factors of a square matrix, `P·A = L·U`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn factor(a: &Tensor) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Dimension(format!("LU of non-square {:?}", a.shape())));
        }
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let scale = lu.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        for col in 0..n {
            let (pivot_row, pivot_abs) = (col..n)
                .map(|r| (r, lu[r * n + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_abs <= SINGULAR_TOL * scale {
                return Err(Error::Conditioning(format!(
                    "pivot {pivot_abs:e} in column {col} of a {n}x{n} system"
                )));
            }
            if pivot_row != col {
                for c in 0..n {
                    lu.swap(col * n + c, pivot_row * n + c);
                }
                perm.swap(col, pivot_row);
                sign = -sign;
            }
            let p = lu[col * n + col];
            for r in col + 1..n {
                let f = lu[r * n + col] / p;
                lu[r * n + col] = f;
                if f != 0.0 {
                    for c in col + 1..n {
                        lu[r * n + c] -= f * lu[col * n + c];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm, sign })
    }

    pub fn determinant(&self) -> f64 {
        (0..self.n).map(|i| self.lu[i * self.n + i]).product::<f64>() * self.sign
    }

    /// Solves `A X = B` for every column of `b`.
    pub fn solve(&self, b: &Tensor) -> Result<Tensor> {
        let n = self.n;
        if b.rows() != n {
            return Err(Error::Dimension(format!("solve {n}x{n} against {:?}", b.shape())));
        }
        let m = b.cols();
        let mut x = vec![0.0; n * m];
        for (i, &p) in self.perm.iter().enumerate() {
            x[i * m..(i + 1) * m].copy_from_slice(b.row_slice(p));
        }
        // forward substitution with unit lower triangle
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[i * n + k];
                if l != 0.0 {
                    for c in 0..m {
                        x[i * m + c] -= l * x[k * m + c];
                    }
                }
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.lu[i * n + k];
                if u != 0.0 {
                    for c in 0..m {
                        x[i * m + c] -= u * x[k * m + c];
                    }
                }
            }
            let d = self.lu[i * n + i];
            for c in 0..m {
                x[i * m + c] /= d;
            }
        }
        Tensor::new(n, m, x)
    }

    /// Solves `Aᵀ X = B`.
    pub fn solve_transposed(&self, b: &Tensor) -> Result<Tensor> {
        let n = self.n;
        if b.rows() != n {
            return Err(Error::Dimension(format!("solveᵀ {n}x{n} against {:?}", b.shape())));
        }
        let m = b.cols();
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ z = b, Lᵀ w = z, x = Pᵀ w.
        let mut z = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let u = self.lu[k * n + i];
                if u != 0.0 {
                    for c in 0..m {
                        z[i * m + c] -= u * z[k * m + c];
                    }
                }
            }
            let d = self.lu[i * n + i];
            for c in 0..m {
                z[i * m + c] /= d;
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let l = self.lu[k * n + i];
                if l != 0.0 {
                    for c in 0..m {
                        z[i * m + c] -= l * z[k * m + c];
                    }
                }
            }
        }
        let mut x = vec![0.0; n * m];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p * m..(p + 1) * m].copy_from_slice(&z[i * m..(i + 1) * m]);
        }
        Tensor::new(n, m, x)
    }
}

/// Haar-distributed orthogonal matrix with determinant +1, from modified
/// Gram–Schmidt on a Gaussian matrix.
pub fn random_rotation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Tensor {
    loop {
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let mut ok = true;
        for j in 0..n {
            // two passes keep the columns orthogonal to working precision
            let (done, rest) = cols.split_at_mut(j);
            let col = &mut rest[0];
            for _ in 0..2 {
                for prev in done.iter() {
                    let dot: f64 = col.iter().zip(prev).map(|(a, b)| a * b).sum();
                    for (a, b) in col.iter_mut().zip(prev) {
                        *a -= dot * b;
                    }
                }
            }
            let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            cols[j].iter_mut().for_each(|v| *v /= norm);
        }
        if !ok {
            continue;
        }
        let mut data = vec![0.0; n * n];
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                data[i * n + j] = *v;
            }
        }
        let q = Tensor::from_raw(n, n, data);
        let det = Lu::factor(&q).map(|lu| lu.determinant()).unwrap_or(0.0);
        if det < 0.0 {
            // flip the first column
            let mut d = q.to_vec();
            for i in 0..n {
                d[i * n] = -d[i * n];
            }
            return Tensor::from_raw(n, n, d);
        }
        return q;
    }
}

/// `max |QᵀQ − I|` over all entries.
pub fn orthogonality_error(q: &Tensor) -> f64 {
    let qtq = q.transpose().matmul(q).expect("square");
    qtq.max_abs_diff(&Tensor::identity(q.cols()))
}
