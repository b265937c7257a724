use std::fmt;

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseMatrix({}x{})", self.rows, self.cols)?;
        if self.data.len() <= 64 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

/// Whether [`gemm`] should read an operand transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transpose {
    No,
    Yes,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics; an n x 0 matrix yields n empty rows.
        let cols = self.cols;
        (0..self.rows).map(move |i| &self.data[i * cols..(i + 1) * cols])
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let mut out = Self::zeros(self.rows, other.cols);
        gemm(1.0, self, Transpose::No, other, Transpose::No, 0.0, &mut out)?;
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    /// `self += factor · other`.
    pub fn add_scaled(&mut self, other: &Self, factor: f64) -> Result<()> {
        self.check_same_shape(other, "add_scaled")?;
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += factor * y;
        }
        Ok(())
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(Error::Dimension(format!(
                "row vector of length {} added to {} columns",
                bias.len(),
                self.cols
            )));
        }
        for r in 0..self.rows {
            for (x, b) in self.row_mut(r).iter_mut().zip(bias) {
                *x += b;
            }
        }
        Ok(())
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in self.row_iter() {
            for (s, x) in sums.iter_mut().zip(r) {
                *s += x;
            }
        }
        sums
    }

    /// Copies the given rows (in order) into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Copies columns `start..end` into a new matrix.
    pub fn column_block(&self, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= self.cols, "column block out of range");
        Self::from_fn(self.rows, end - start, |i, j| self.get(i, start + j))
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hconcat(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::Dimension(format!(
                "hconcat of {} and {} rows",
                self.rows, other.rows
            )));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Self {
            rows: self.rows,
            cols,
            data,
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn check_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "{op}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

/// `c ← alpha · op(a) · op(b) + beta · c`.
pub fn gemm(
    alpha: f64,
    a: &DenseMatrix,
    ta: Transpose,
    b: &DenseMatrix,
    tb: Transpose,
    beta: f64,
    c: &mut DenseMatrix,
) -> Result<()> {
    let (m, k, rsa, csa) = match ta {
        Transpose::No => (a.rows, a.cols, a.cols as isize, 1),
        Transpose::Yes => (a.cols, a.rows, 1, a.cols as isize),
    };
    let (kb, n, rsb, csb) = match tb {
        Transpose::No => (b.rows, b.cols, b.cols as isize, 1),
        Transpose::Yes => (b.cols, b.rows, 1, b.cols as isize),
    };
    if k != kb || c.rows != m || c.cols != n {
        return Err(Error::Dimension(format!(
            "gemm: op(a) is {m}x{k}, op(b) is {kb}x{n}, c is {}x{}",
            c.rows, c.cols
        )));
    }
    if m == 0 || n == 0 {
        return Ok(());
    }
    if k == 0 {
        if beta == 0.0 {
            c.data.iter_mut().for_each(|x| *x = 0.0);
        } else {
            c.scale(beta);
        }
        return Ok(());
    }
    // SAFETY: dimensions and strides were checked against the backing
    // vectors above; the three buffers do not alias (c is borrowed mutably).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
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
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
        })
    }

    #[test]
    fn gemm_matches_naive_product_with_transposes() {
        let a = DenseMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.5 - 2.0);
        let b = DenseMatrix::from_fn(4, 2, |i, j| ((i + 2 * j) as f64).sin());
        let expect = naive(&a, &b);
        let ab = a.matmul(&b).unwrap();
        for (x, y) in ab.as_slice().iter().zip(expect.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }

        let at = a.transpose();
        let bt = b.transpose();
        let mut c = DenseMatrix::zeros(3, 2);
        gemm(1.0, &at, Transpose::Yes, &bt, Transpose::Yes, 0.0, &mut c).unwrap();
        for (x, y) in c.as_slice().iter().zip(expect.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gemm_accumulates_with_beta() {
        let a = DenseMatrix::filled(2, 2, 1.0);
        let mut c = DenseMatrix::filled(2, 2, 3.0);
        gemm(2.0, &a, Transpose::No, &a, Transpose::No, 1.0, &mut c).unwrap();
        assert_eq!(c.as_slice(), &[7.0; 4]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(matches!(a.matmul(&a), Err(Error::Dimension(_))));
        assert!(DenseMatrix::from_vec(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn empty_shapes() {
        let a = DenseMatrix::zeros(0, 5);
        let b = DenseMatrix::zeros(5, 3);
        assert_eq!(a.matmul(&b).unwrap().shape(), (0, 3));
        let c = DenseMatrix::zeros(4, 0);
        let d = DenseMatrix::zeros(0, 2);
        assert_eq!(c.matmul(&d).unwrap(), DenseMatrix::zeros(4, 2));
        assert_eq!(c.row_iter().count(), 4);
    }

    #[test]
    fn row_helpers() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(a.select_rows(&[2, 0]).as_slice(), &[5.0, 6.0, 1.0, 2.0]);
        assert_eq!(a.column_sums(), vec![9.0, 12.0]);
        assert_eq!(a.column_block(1, 2).as_slice(), &[2.0, 4.0, 6.0]);
        let h = a.hconcat(&a.column_block(0, 1)).unwrap();
        assert_eq!(h.row(1), &[3.0, 4.0, 3.0]);
    }
}
