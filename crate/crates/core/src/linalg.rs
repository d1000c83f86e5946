//! Small dense linear algebra: just enough for GP systems with n <= a few hundred.

use crate::scalar::Scalar;

/// Row-major dense square-or-rectangular matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn add_diagonal(&mut self, v: T) {
        for i in 0..self.rows.min(self.cols) {
            let idx = i * self.cols + i;
            self.data[idx] = self.data[idx] + v;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.rows == self.cols && (0..self.rows).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    lower: Matrix<T>,
}

/// Pivot at which factorization broke down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite {
    pub pivot: usize,
}

impl<T: Scalar> Cholesky<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self, NotPositiveDefinite> {
        let n = a.rows();
        assert_eq!(n, a.cols(), "cholesky of non-square matrix");
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let lj = &l.data[j * n..j * n + j];
            let d = a.get(j, j) - dot(lj, lj);
            if !(d > T::zero()) || !d.is_finite() {
                return Err(NotPositiveDefinite { pivot: j });
            }
            let djj = d.sqrt();
            l.set(j, j, djj);
            for i in (j + 1)..n {
                let s = {
                    let (ri, rj) = (&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
                    dot(ri, rj)
                };
                l.set(i, j, (a.get(i, j) - s) / djj);
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in 0..n {
            let row = self.lower.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for (k, &xk) in x.iter().enumerate().skip(i + 1) {
                s = s - self.lower.get(k, i) * xk;
            }
            x[i] = s / self.lower.get(i, i);
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn log_det(&self) -> T {
        let n = self.dim();
        T::lit(2.0) * (0..n).map(|i| self.lower.get(i, i).ln()).sum::<T>()
    }

    /// Dense `A⁻¹` via `L⁻¹`.
    pub fn inverse(&self) -> Matrix<T> {
        let n = self.dim();
        // row j of `mt` is column j of L⁻¹ (zero before index j)
        let mut mt = Matrix::zeros(n, n);
        for j in 0..n {
            let col = &mut mt.data[j * n..(j + 1) * n];
            col[j] = T::one() / self.lower.get(j, j);
            for i in (j + 1)..n {
                let row = self.lower.row(i);
                let s = dot(&row[j..i], &col[j..i]);
                col[i] = -s / row[i];
            }
        }
        // A⁻¹ = L⁻ᵀ L⁻¹, so A⁻¹_ij = Σ_k (L⁻¹)_ki (L⁻¹)_kj
        let mut inv = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let s = dot(&mt.row(i)[i..], &mt.row(j)[i..]);
                inv.set(i, j, s);
                inv.set(j, i, s);
            }
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spd() -> Matrix<f64> {
        Matrix::from_fn(3, 3, |i, j| match (i, j) {
            (0, 0) => 4.0,
            (1, 1) => 5.0,
            (2, 2) => 6.0,
            (0, 1) | (1, 0) => 2.0,
            (1, 2) | (2, 1) => 1.0,
            _ => 0.5,
        })
    }

    #[test]
    fn factor_reconstructs() {
        let a = spd();
        let c = Cholesky::factor(&a).unwrap();
        let l = c.lower();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l.get(i, k) * l.get(j, k)).sum();
                assert_relative_eq!(v, a.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn solve_and_inverse_agree() {
        let a = spd();
        let c = Cholesky::factor(&a).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = c.solve(&b);
        let ax = a.mul_vec(&x);
        for (u, v) in ax.iter().zip(b) {
            assert_relative_eq!(*u, v, epsilon = 1e-12);
        }
        let inv = c.inverse();
        let x2 = inv.mul_vec(&b);
        for (u, v) in x.iter().zip(x2) {
            assert_relative_eq!(*u, v, epsilon = 1e-12);
        }
        // det = 4*(30-1) - 2*(12-0.5) + 0.5*(2-2.5) = 116 - 23 - 0.25
        assert_relative_eq!(c.log_det(), 92.75_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn singular_matrix_reports_pivot() {
        let a = Matrix::from_fn(2, 2, |_, _| 1.0_f64);
        assert_eq!(Cholesky::factor(&a).unwrap_err().pivot, 1);
    }
}
