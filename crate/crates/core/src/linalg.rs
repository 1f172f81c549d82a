//! Dense row-major matrices in double precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Wraps row-major `data`, rejecting a wrong length or non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("matrix entry {bad}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_vec(rows.len(), cols, data)
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// Matrix-vector product `self * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Shape(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Standard product `a * b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut c = Matrix::zeros(a.rows, b.cols);
    gemm(
        Op::N(&a.data, a.rows, a.cols),
        Op::N(&b.data, b.rows, b.cols),
        &mut c.data,
        0.0,
    );
    Ok(c)
}

/// A row-major operand, optionally transposed. Dimensions are those of the
/// stored (untransposed) matrix.
#[derive(Clone, Copy)]
pub(crate) enum Op<'a> {
    N(&'a [f64], usize, usize),
    T(&'a [f64], usize, usize),
}

impl Op<'_> {
    /// (rows, cols, row stride, col stride) of the operand as used.
    fn layout(&self) -> (usize, usize, isize, isize) {
        match *self {
            Op::N(_, r, c) => (r, c, c as isize, 1),
            Op::T(_, r, c) => (c, r, 1, c as isize),
        }
    }

    fn ptr(&self) -> *const f64 {
        match *self {
            Op::N(d, r, c) | Op::T(d, r, c) => {
                assert_eq!(d.len(), r * c, "operand length");
                d.as_ptr()
            }
        }
    }
}

/// `c = op(a) * op(b) + beta * c`, with `c` row-major of the product's shape.
pub(crate) fn gemm(a: Op<'_>, b: Op<'_>, c: &mut [f64], beta: f64) {
    let (m, k, rsa, csa) = a.layout();
    let (kb, n, rsb, csb) = b.layout();
    assert_eq!(k, kb, "inner dimensions");
    assert_eq!(c.len(), m * n, "output length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: the layouts above describe in-bounds strided views of slices
    // whose lengths were checked, and `c` does not alias the inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.ptr(),
            rsa,
            csa,
            b.ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                c.set(i, j, s);
            }
        }
        c
    }

    fn random(rng: &mut Prng, r: usize, c: usize) -> Matrix {
        let data = (0..r * c)
            .map(|_| rng.uniform(-1.0, 1.0).unwrap())
            .collect();
        Matrix::from_vec(r, c, data).unwrap()
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = Prng::new(3);
        let m = random(&mut rng, 3, 3);
        assert_eq!(matmul(&Matrix::identity(3), &m).unwrap(), m);
    }

    #[test]
    fn hand_product() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[&[0.0], &[1.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), (2, 1));
        assert_eq!(c.data(), &[2.0, 4.0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Matrix::zeros(5, 7);
        let b = Matrix::zeros(6, 2);
        assert!(matches!(matmul(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn from_vec_rejects_bad_input() {
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn kernel_matches_naive_with_transposes() {
        let mut rng = Prng::new(11);
        let a = random(&mut rng, 7, 5);
        let b = random(&mut rng, 5, 9);
        let reference = naive(&a, &b);
        let c = matmul(&a, &b).unwrap();
        for (x, y) in c.data().iter().zip(reference.data()) {
            assert!((x - y).abs() < 1e-14);
        }
        let at = a.transpose();
        let bt = b.transpose();
        let mut out = vec![0.0; 7 * 9];
        gemm(
            Op::T(at.data(), 5, 7),
            Op::T(bt.data(), 9, 5),
            &mut out,
            0.0,
        );
        for (x, y) in out.iter().zip(reference.data()) {
            assert!((x - y).abs() < 1e-14);
        }
        // beta accumulates
        gemm(Op::N(a.data(), 7, 5), Op::N(b.data(), 5, 9), &mut out, 1.0);
        for (x, y) in out.iter().zip(reference.data()) {
            assert!((x - 2.0 * y).abs() < 1e-13);
        }
    }

    #[test]
    fn associativity_on_random_triples() {
        let mut rng = Prng::new(5);
        for _ in 0..20 {
            let a = random(&mut rng, 4, 6);
            let b = random(&mut rng, 6, 3);
            let c = random(&mut rng, 3, 5);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let scale = left.data().iter().fold(1e-300f64, |m, v| m.max(v.abs()));
            for (x, y) in left.data().iter().zip(right.data()) {
                assert!((x - y).abs() / scale < 1e-10);
            }
        }
    }
}
