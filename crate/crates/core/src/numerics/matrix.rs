use std::ops::{Index, IndexMut};

use super::Scalar;
use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Whether an operand of [`Matrix::gemm`] enters the product transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn sum_sq(&self) -> T {
        self.data.iter().map(|&x| x * x).sum()
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|x| *x = *x * s);
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: T, other: &Matrix<T>) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + s * b;
        }
    }

    /// Standard matrix product.
    pub fn matmul(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        Matrix::gemm(
            T::one(),
            self,
            Trans::No,
            other,
            Trans::No,
            T::zero(),
            &mut out,
        );
        Ok(out)
    }

    /// `c = alpha * op(a) * op(b) + beta * c`.
    ///
    /// Panics if the operand shapes disagree; callers inside the crate
    /// construct the shapes themselves.
    pub fn gemm(
        alpha: T,
        a: &Matrix<T>,
        ta: Trans,
        b: &Matrix<T>,
        tb: Trans,
        beta: T,
        c: &mut Matrix<T>,
    ) {
        let (m, ka, rsa, csa) = match ta {
            Trans::No => (a.rows, a.cols, a.cols as isize, 1),
            Trans::Yes => (a.cols, a.rows, 1, a.cols as isize),
        };
        let (kb, n, rsb, csb) = match tb {
            Trans::No => (b.rows, b.cols, b.cols as isize, 1),
            Trans::Yes => (b.cols, b.rows, 1, b.cols as isize),
        };
        assert!(
            ka == kb && c.rows == m && c.cols == n,
            "gemm shape mismatch: ({m}x{ka}) * ({kb}x{n}) into {}x{}",
            c.rows,
            c.cols
        );
        if m == 0 || n == 0 {
            return;
        }
        if ka == 0 {
            c.scale(beta);
            return;
        }
        // SAFETY: strides derived from the owning matrices' shapes, which
        // were checked above; `c` is borrowed mutably so cannot alias.
        unsafe {
            T::gemm_raw(
                m,
                ka,
                n,
                alpha,
                a.data.as_ptr(),
                rsa,
                csa,
                b.data.as_ptr(),
                rsb,
                csb,
                beta,
                c.data.as_mut_ptr(),
                c.cols as isize,
                1,
            );
        }
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[T]) {
        assert_eq!(bias.len(), self.cols);
        for r in self.data.chunks_mut(self.cols.max(1)) {
            for (x, &b) in r.iter_mut().zip(bias) {
                *x = *x + b;
            }
        }
    }

    /// Column sums accumulated into `out`.
    pub fn add_column_sums_into(&self, out: &mut [T]) {
        assert_eq!(out.len(), self.cols);
        for r in self.data.chunks(self.cols.max(1)) {
            for (o, &x) in out.iter_mut().zip(r) {
                *o = *o + x;
            }
        }
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vstack(parts: &[Matrix<T>]) -> Result<Matrix<T>> {
        let cols = parts.first().map_or(0, |p| p.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::Shape(format!(
                    "vstack column mismatch: {} vs {cols}",
                    p.cols
                )));
            }
            rows += p.rows;
            data.extend_from_slice(&p.data);
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| U::lit(x.as_f64())).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn product_by_hand() {
        let a = m(&[&[1., 2.], &[3., 4.]]);
        let b = m(&[&[5., 6.], &[7., 8.]]);
        assert_eq!(a.matmul(&b).unwrap(), m(&[&[19., 22.], &[43., 50.]]));
    }

    #[test]
    fn identity_and_zero() {
        let x = m(&[&[0.3, -1.5], &[2.0, 7.25]]);
        assert_eq!(Matrix::identity(2).matmul(&x).unwrap(), x);
        let z = Matrix::<f64>::zeros(2, 2);
        assert_eq!(z.matmul(&x).unwrap(), z);
    }

    #[test]
    fn mismatched_product_is_shape_error() {
        let a = Matrix::<f64>::zeros(2, 3);
        let b = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::Shape(_))));
        assert!(matches!(
            Matrix::<f64>::from_vec(2, 2, vec![1.0; 3]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn transposed_gemm_matches_explicit_transpose() {
        let a = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.5 - 1.0);
        let b = Matrix::from_fn(3, 2, |i, j| (i as f64) - (j as f64) * 0.25);
        let mut c = Matrix::zeros(4, 2);
        Matrix::gemm(1.0, &a, Trans::Yes, &b, Trans::No, 0.0, &mut c);
        assert_eq!(c, a.transpose().matmul(&b).unwrap());

        let mut d = Matrix::zeros(3, 3);
        Matrix::gemm(1.0, &a, Trans::No, &a, Trans::Yes, 0.0, &mut d);
        assert_eq!(d, a.matmul(&a.transpose()).unwrap());
    }

    #[test]
    fn single_precision_product() {
        let a = Matrix::<f32>::from_vec(2, 2, vec![1., 2., 3., 4.]).unwrap();
        let b = Matrix::<f32>::from_vec(2, 2, vec![5., 6., 7., 8.]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[19., 22., 43., 50.]);
    }
}
