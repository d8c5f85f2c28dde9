//! Dense LU factorization with partial pivoting for the small square
//! systems of the kinematics passes.
//!
//! A factorization is computed once per configuration and reused for every
//! right-hand side; [`OpCounter`] records how often each happens.

use nalgebra::{DMatrix, DVector};

/// Pivots smaller than this times `‖A‖_∞` are treated as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("matrix is singular: pivot {pivot:.3e} at column {column} (scale {scale:.3e})")]
pub struct SingularMatrix {
    pub column: usize,
    pub pivot: f64,
    pub scale: f64,
}

/// Bookkeeping of dense linear-algebra work.
///
/// Flop figures use the usual leading-order counts: `⅔n³` per factorization
/// and `2n²` per forward/backward substitution pair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OpCounter {
    pub factorizations: usize,
    pub solves: usize,
    pub flops: f64,
}

impl OpCounter {
    pub fn merge(&mut self, other: &OpCounter) {
        self.factorizations += other.factorizations;
        self.solves += other.solves;
        self.flops += other.flops;
    }
}

#[derive(Debug, Clone)]
pub struct LuFactors {
    /// Row-major `L\U`, unit diagonal of `L` implied.
    lu: Vec<f64>,
    n: usize,
    perm: Vec<usize>,
}

impl LuFactors {
    /// Factor `a` as `PA = LU`.
    pub fn factor(a: &DMatrix<f64>, ops: &mut OpCounter) -> Result<Self, SingularMatrix> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "LU of a non-square matrix");
        let mut lu: Vec<f64> = (0..n * n).map(|k| a[(k / n, k % n)]).collect();
        let scale = lu
            .chunks_exact(n.max(1))
            .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let tol = PIVOT_TOLERANCE * scale.max(f64::MIN_POSITIVE);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot > tol) {
                return Err(SingularMatrix {
                    column: k,
                    pivot,
                    scale,
                });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(p * n + j, k * n + j);
                }
                perm.swap(p, k);
            }
            let (head, tail) = lu.split_at_mut((k + 1) * n);
            let pivot_row = &head[k * n..];
            let d = pivot_row[k];
            for row in tail.chunks_exact_mut(n) {
                let l = row[k] / d;
                row[k] = l;
                for (x, &u) in row[k + 1..].iter_mut().zip(&pivot_row[k + 1..]) {
                    *x -= l * u;
                }
            }
        }
        ops.factorizations += 1;
        ops.flops += 2.0 / 3.0 * (n * n * n) as f64;
        Ok(Self { lu, n, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &DVector<f64>, ops: &mut OpCounter) -> DVector<f64> {
        let n = self.dim();
        let mut x = DVector::from_iterator(n, self.perm.iter().map(|&p| b[p]));
        self.substitute(x.as_mut_slice());
        ops.solves += 1;
        ops.flops += 2.0 * (n * n) as f64;
        x
    }

    /// Overwrite `b` with the solution of `A x = b`.
    pub fn solve_in_place(&self, b: &mut DVector<f64>, ops: &mut OpCounter) {
        let n = self.dim();
        self.solve_slice(b.as_mut_slice());
        ops.solves += 1;
        ops.flops += 2.0 * (n * n) as f64;
    }

    fn solve_slice(&self, b: &mut [f64]) {
        let n = self.dim();
        let mut stack = [0.0; 8];
        let mut heap = Vec::new();
        let x = if n <= stack.len() {
            &mut stack[..n]
        } else {
            heap.resize(n, 0.0);
            &mut heap[..]
        };
        for (xi, &p) in x.iter_mut().zip(&self.perm) {
            *xi = b[p];
        }
        self.substitute(x);
        b.copy_from_slice(x);
    }

    /// Solve `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>, ops: &mut OpCounter) -> DMatrix<f64> {
        let n = self.dim();
        let mut x = DMatrix::zeros(n, b.ncols());
        for (xc, bc) in x
            .as_mut_slice()
            .chunks_exact_mut(n)
            .zip(b.as_slice().chunks_exact(n))
        {
            for (xi, &p) in xc.iter_mut().zip(&self.perm) {
                *xi = bc[p];
            }
            self.substitute(xc);
        }
        ops.solves += b.ncols();
        ops.flops += 2.0 * (n * n * b.ncols()) as f64;
        x
    }

    /// Overwrite `B` with the solution of `A X = B`.
    pub fn solve_matrix_in_place(&self, b: &mut DMatrix<f64>, ops: &mut OpCounter) {
        let n = self.dim();
        for bc in b.as_mut_slice().chunks_exact_mut(n) {
            self.solve_slice(bc);
        }
        ops.solves += b.ncols();
        ops.flops += 2.0 * (n * n * b.ncols()) as f64;
    }

    /// Solve `Aᵀ x = b` with the same factors.
    pub fn solve_transpose(&self, b: &DVector<f64>, ops: &mut OpCounter) -> DVector<f64> {
        let n = self.dim();
        let at = |i: usize, j: usize| self.lu[i * n + j];
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ z = b, Lᵀ y = z, x = Pᵀ y
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= at(k, i) * y[k];
            }
            y[i] = s / at(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= at(k, i) * y[k];
            }
            y[i] = s;
        }
        let mut x = DVector::zeros(n);
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        ops.solves += 1;
        ops.flops += 2.0 * (n * n) as f64;
        x
    }

    fn substitute(&self, x: &mut [f64]) {
        match self.n {
            3 => self.substitute_fixed::<3>(x),
            6 => self.substitute_fixed::<6>(x),
            n => substitute_rows(&self.lu, n, &mut x[..n]),
        }
    }

    fn substitute_fixed<const N: usize>(&self, x: &mut [f64]) {
        substitute_rows(&self.lu[..N * N], N, &mut x[..N]);
    }
}

#[inline(always)]
fn substitute_rows(lu: &[f64], n: usize, x: &mut [f64]) {
    for i in 1..n {
        let mut s = x[i];
        for k in 0..i {
            s -= lu[i * n + k] * x[k];
        }
        x[i] = s;
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= lu[i * n + k] * x[k];
        }
        x[i] = s / lu[i * n + i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 2.0, -1.0, 3.0, //
                4.0, 1.0, 0.5, -2.0, //
                -1.0, 3.0, 2.0, 1.0, //
                2.0, -1.0, 4.0, 0.25,
            ],
        )
    }

    #[test]
    fn solves_match_nalgebra() {
        let a = sample();
        let mut ops = OpCounter::default();
        let lu = LuFactors::factor(&a, &mut ops).unwrap();
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let x = lu.solve(&b, &mut ops);
        assert!((&a * &x - &b).amax() < 1e-13);
        let xt = lu.solve_transpose(&b, &mut ops);
        assert!((a.transpose() * &xt - &b).amax() < 1e-13);
        let bm = DMatrix::from_fn(4, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 1.5));
        let xm = lu.solve_matrix(&bm, &mut ops);
        assert!((&a * &xm - &bm).amax() < 1e-13);
        let mut inplace = bm.clone();
        lu.solve_matrix_in_place(&mut inplace, &mut ops);
        assert_eq!(inplace, xm);
        let reference = a.clone().lu().solve(&b).unwrap();
        assert!((x - reference).amax() < 1e-13);
        assert_eq!(ops.factorizations, 1);
        assert_eq!(ops.solves, 8);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let mut a = sample();
        let r0 = a.row(0).into_owned();
        let r1 = a.row(1).into_owned();
        a.row_mut(3).copy_from(&(r0 * 2.0 - r1));
        let mut ops = OpCounter::default();
        let err = LuFactors::factor(&a, &mut ops).unwrap_err();
        assert!(err.pivot <= PIVOT_TOLERANCE * err.scale);
        assert_eq!(ops.factorizations, 0);
    }

    #[test]
    fn zero_matrix_is_singular() {
        let mut ops = OpCounter::default();
        assert!(LuFactors::factor(&DMatrix::zeros(3, 3), &mut ops).is_err());
    }

    #[test]
    fn flop_bookkeeping() {
        let mut ops = OpCounter::default();
        let lu = LuFactors::factor(&DMatrix::identity(6, 6), &mut ops).unwrap();
        for _ in 0..4 {
            lu.solve(&DVector::zeros(6), &mut ops);
        }
        let n = 6.0_f64;
        assert!((ops.flops - (2.0 / 3.0 * n.powi(3) + 8.0 * n * n)).abs() < 1e-9);
    }
}
