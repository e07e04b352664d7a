//! Dense column-major matrices and the symmetric-matrix maps used by the
//! basis machinery.

mod decomp;
mod solve;

pub use decomp::{complete_orthonormal, eig_sym, project_psd_mu, svd, SpectralDecomp, Svd};
pub use solve::{Cholesky, Lu};

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::{Error, Result};

/// Dense real matrix stored column by column.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from column-major entries. All entries must be finite.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::DimensionMismatch {
                expected: c,
                found: bad.len(),
            });
        }
        let mut data = Vec::with_capacity(r * c);
        for j in 0..c {
            for row in rows {
                data.push(row[j]);
            }
        }
        Self::from_col_major(r, c, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Outer product `u v^T`.
    pub fn outer(u: &[f64], v: &[f64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Column-major entries.
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
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: rhs.rows,
            });
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for j in 0..rhs.cols {
            let out_col = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for k in 0..self.cols {
                let b = rhs[(k, j)];
                if b == 0.0 {
                    continue;
                }
                let a_col = &self.data[k * self.rows..(k + 1) * self.rows];
                for (o, a) in out_col.iter_mut().zip(a_col) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * rhs` without forming the transpose.
    pub fn tr_matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != rhs.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: rhs.rows,
            });
        }
        Ok(DenseMatrix::from_fn(self.cols, rhs.cols, |i, j| {
            dot(self.col(i), rhs.col(j))
        }))
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.rows];
        for (j, xj) in x.iter().enumerate() {
            if *xj == 0.0 {
                continue;
            }
            for (yi, a) in y.iter_mut().zip(self.col(j)) {
                *yi += a * xj;
            }
        }
        Ok(y)
    }

    /// `self^T x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: x.len(),
            });
        }
        Ok((0..self.cols).map(|j| dot(self.col(j), x)).collect())
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &DenseMatrix) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += value;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|j| (0..j).all(|i| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Leading `r x c` block.
    pub fn top_left(&self, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::from_fn(r, c, |i, j| self[(i, j)])
    }

    /// Copy of columns `0..k`.
    pub fn leading_cols(&self, k: usize) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: k,
            data: self.data[..k * self.rows].to_vec(),
        }
    }

    fn check_same_shape(&self, other: &DenseMatrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

/// Square matrix whose entries are exactly symmetric. Full storage.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(DenseMatrix);

impl SymMatrix {
    /// Accepts only exactly symmetric square matrices.
    pub fn new(m: DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSquare {
                rows: m.rows,
                cols: m.cols,
            });
        }
        if !m.is_symmetric(0.0) {
            return Err(Error::NotSymmetric);
        }
        Ok(SymMatrix(m))
    }

    pub fn zeros(d: usize) -> Self {
        SymMatrix(DenseMatrix::zeros(d, d))
    }

    pub fn identity(d: usize) -> Self {
        SymMatrix(DenseMatrix::identity(d))
    }

    pub fn diag(values: &[f64]) -> Self {
        SymMatrix(DenseMatrix::diag(values))
    }

    /// Mirrors the lower triangle onto the upper one.
    pub fn from_lower(m: &DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSquare {
                rows: m.rows,
                cols: m.cols,
            });
        }
        Ok(SymMatrix(DenseMatrix::from_fn(m.rows, m.cols, |i, j| {
            if i >= j {
                m[(i, j)]
            } else {
                m[(j, i)]
            }
        })))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows
    }

    #[inline]
    pub fn as_dense(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_dense(self) -> DenseMatrix {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.frobenius_norm()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.0.max_abs()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.0.matvec(x)
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.0.add(&other.0).map(SymMatrix)
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.0.sub(&other.0).map(SymMatrix)
    }

    pub fn scaled(&self, alpha: f64) -> SymMatrix {
        SymMatrix(self.0.scaled(alpha))
    }

    pub fn axpy(&mut self, alpha: f64, other: &SymMatrix) -> Result<()> {
        self.0.axpy(alpha, &other.0)
    }

    pub fn add_diagonal(&mut self, value: f64) {
        self.0.add_diagonal(value);
    }

    pub fn with_diagonal_shift(&self, value: f64) -> SymMatrix {
        let mut out = self.clone();
        out.add_diagonal(value);
        out
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(eig_sym(self)?.eigenvalues[0])
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `sqrt(sum a_ij^2)`.
pub fn frobenius_norm(a: &DenseMatrix) -> f64 {
    norm2(a.as_slice())
}

/// The symmetric part `(A + A^T) / 2`.
pub fn symmetrize(a: &DenseMatrix) -> Result<SymMatrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let d = a.rows;
    let mut out = DenseMatrix::zeros(d, d);
    for j in 0..d {
        out[(j, j)] = a[(j, j)];
        for i in j + 1..d {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(SymMatrix(out))
}

/// Column stacking: `(A_11, ..., A_d1, ..., A_1d, ..., A_dd)`.
pub fn vec(a: &DenseMatrix) -> Vec<f64> {
    a.as_slice().to_vec()
}

/// Inverse of [`vec`] for a `rows x cols` target.
pub fn unvec(v: &[f64], rows: usize, cols: usize) -> Result<DenseMatrix> {
    DenseMatrix::from_col_major(rows, cols, v.to_vec())
}

/// Lower-triangular column stacking with doubled off-diagonal entries:
/// `(A_11, 2A_21, ..., 2A_d1, A_22, ..., A_dd)`.
pub fn svec(a: &SymMatrix) -> Vec<f64> {
    let d = a.dim();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for j in 0..d {
        out.push(a[(j, j)]);
        for i in j + 1..d {
            out.push(2.0 * a[(i, j)]);
        }
    }
    out
}

/// Inverse of [`svec`]. The length must be `d(d+1)/2` for some `d`.
pub fn smat(v: &[f64]) -> Result<SymMatrix> {
    let d = sym_dim_from_len(v.len()).ok_or(Error::DimensionMismatch {
        expected: tri_len(libm::floor(libm::sqrt(2.0 * v.len() as f64)) as usize),
        found: v.len(),
    })?;
    let mut m = DenseMatrix::zeros(d, d);
    let mut k = 0;
    for j in 0..d {
        m[(j, j)] = v[k];
        k += 1;
        for i in j + 1..d {
            let x = 0.5 * v[k];
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    Ok(SymMatrix(m))
}

/// `d(d+1)/2`.
#[inline]
pub fn tri_len(d: usize) -> usize {
    d * (d + 1) / 2
}

fn sym_dim_from_len(len: usize) -> Option<usize> {
    let mut d = libm::floor(libm::sqrt(2.0 * len as f64)) as usize;
    while tri_len(d) > len {
        d -= 1;
    }
    while tri_len(d) < len {
        d += 1;
    }
    (tri_len(d) == len).then_some(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn frobenius_examples() {
        assert!((frobenius_norm(&DenseMatrix::identity(2)) - libm::sqrt(2.0)).abs() < 1e-15);
        assert_eq!(frobenius_norm(&DenseMatrix::zeros(3, 3)), 0.0);
        assert_eq!(frobenius_norm(&m(&[&[3.0, 4.0], &[0.0, 0.0]])), 5.0);
    }

    #[test]
    fn symmetrize_examples() {
        let s = symmetrize(&m(&[&[1.0, 2.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(s.as_dense(), &m(&[&[1.0, 1.0], &[1.0, 1.0]]));
        let sym = m(&[&[2.0, -1.0], &[-1.0, 3.0]]);
        assert_eq!(symmetrize(&sym).unwrap().as_dense(), &sym);
        let skew = symmetrize(&m(&[&[0.0, 4.0], &[-4.0, 0.0]])).unwrap();
        assert_eq!(skew.as_dense(), &DenseMatrix::zeros(2, 2));
        assert!(matches!(
            symmetrize(&DenseMatrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn vec_is_column_major() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(vec(&a), [1.0, 3.0, 2.0, 4.0]);
        assert_eq!(unvec(&vec(&a), 2, 2).unwrap(), a);
        assert_eq!(vec(&DenseMatrix::outer(&[1.0, 0.0], &[1.0, 0.0])), [1.0, 0.0, 0.0, 0.0]);
        assert!(unvec(&[1.0, 2.0, 3.0], 2, 2).is_err());
    }

    #[test]
    fn svec_doubles_off_diagonal() {
        let a = SymMatrix::new(m(&[&[1.0, 2.0], &[2.0, 5.0]])).unwrap();
        assert_eq!(svec(&a), [1.0, 4.0, 5.0]);
        assert_eq!(svec(&SymMatrix::identity(3)), [1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(smat(&svec(&a)).unwrap(), a);
        assert!(smat(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn sym_matrix_rejects_asymmetry() {
        assert_eq!(
            SymMatrix::new(m(&[&[1.0, 2.0], &[2.0 + 1e-15, 1.0]])),
            Err(Error::NotSymmetric)
        );
        assert!(DenseMatrix::from_col_major(1, 1, alloc::vec![f64::NAN]).is_err());
    }

    #[test]
    fn matmul_against_hand_product() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(a.matmul(&b).unwrap(), m(&[&[2.0, 1.0], &[4.0, 3.0]]));
        assert_eq!(a.tr_matmul(&b).unwrap(), a.transpose().matmul(&b).unwrap());
        assert_eq!(a.matvec(&[1.0, 1.0]).unwrap(), [3.0, 7.0]);
        assert_eq!(a.tr_matvec(&[1.0, 1.0]).unwrap(), [4.0, 6.0]);
    }
}
