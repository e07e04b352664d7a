use alloc::vec::Vec;

use crate::matrix::{complete_orthonormal, dot, norm2, svd, DenseMatrix};
use crate::{Error, Result};

/// Default relative singular-value cutoff for the numerical rank.
pub const RANK_TOL: f64 = 1e-10;

/// Residual allowed for a data vector, relative to its norm.
pub const SPAN_TOL: f64 = 1e-8;

/// Orthonormal vectors `v_1..v_r` spanning one client's data.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis {
    v: DenseMatrix,
}

impl SubspaceBasis {
    /// Wraps a column-orthonormal `d x r` matrix.
    pub fn new(v: DenseMatrix) -> Result<Self> {
        let r = v.cols();
        if r == 0 || r > v.rows() {
            return Err(Error::OutOfRange {
                what: "r",
                value: r,
                min: 1,
                max: v.rows(),
            });
        }
        let gram = v.tr_matmul(&v)?;
        let mut dev = 0.0f64;
        for j in 0..r {
            for i in 0..r {
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((gram[(i, j)] - target).abs());
            }
        }
        if dev > 1e-10 {
            return Err(Error::Contract(alloc::format!(
                "subspace vectors are not orthonormal (deviation {dev:e})"
            )));
        }
        Ok(SubspaceBasis { v })
    }

    pub fn dim(&self) -> usize {
        self.v.rows()
    }

    pub fn rank(&self) -> usize {
        self.v.cols()
    }

    pub fn vectors(&self) -> &DenseMatrix {
        &self.v
    }

    /// Coordinates `V^T a`.
    pub fn coordinates(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.v.tr_matvec(a)
    }

    /// `||a - V V^T a||`.
    pub fn residual(&self, a: &[f64]) -> Result<f64> {
        let alpha = self.coordinates(a)?;
        let proj = self.v.matvec(&alpha)?;
        let diff: Vec<f64> = a.iter().zip(&proj).map(|(x, p)| x - p).collect();
        Ok(norm2(&diff))
    }

    /// Checks every row of `features` against the span tolerance.
    pub fn check_span(&self, features: &DenseMatrix) -> Result<()> {
        for j in 0..features.rows() {
            let row: Vec<f64> = (0..features.cols()).map(|c| features[(j, c)]).collect();
            let res = self.residual(&row)?;
            if res > SPAN_TOL * norm2(&row) {
                return Err(Error::OutsideSpan {
                    index: j,
                    residual: res,
                });
            }
        }
        Ok(())
    }

    /// `[V, V_perp]`, a `d x d` orthogonal matrix.
    pub fn completed(&self) -> Result<DenseMatrix> {
        complete_orthonormal(&self.v)
    }
}

/// Orthonormal basis of the span of the rows of `features` (`m x d`), with
/// rank decided by `sigma_i > tol * sigma_max`.
pub fn data_subspace_basis(features: &DenseMatrix, tol: f64) -> Result<SubspaceBasis> {
    if features.rows() == 0 || features.max_abs() == 0.0 {
        return Err(Error::EmptyData);
    }
    let dec = svd(&features.transpose())?;
    let smax = dec.sigma[0];
    let r = dec.sigma.iter().take_while(|&&s| s > tol * smax).count();
    let basis = SubspaceBasis::new(dec.u.leading_cols(r))?;
    basis.check_span(features)?;
    Ok(basis)
}

/// Numerical rank of `{vec(v_t v_l^T)}_{t,l <= r}` for the columns of `v`.
/// Outer products of independent vectors are independent, so this is `r^2`.
pub fn outer_product_rank(v: &DenseMatrix) -> Result<usize> {
    let d = v.rows();
    let r = v.cols();
    let mut m = DenseMatrix::zeros(d * d, r * r);
    for l in 0..r {
        for t in 0..r {
            let col = m.col_mut(t + l * r);
            let (vt, vl) = (v.col(t), v.col(l));
            for b in 0..d {
                for a in 0..d {
                    col[a + b * d] = vt[a] * vl[b];
                }
            }
        }
    }
    let s = svd(&m)?.sigma;
    let smax = s.first().copied().unwrap_or(0.0);
    Ok(s.iter().filter(|&&x| x > 1e-10 * smax.max(f64::MIN_POSITIVE)).count())
}

/// Largest `|<v_t, v_l>| - [t = l]` over pairs.
pub fn orthonormality_defect(v: &DenseMatrix) -> f64 {
    let r = v.cols();
    let mut dev = 0.0f64;
    for t in 0..r {
        for l in 0..r {
            let target = if t == l { 1.0 } else { 0.0 };
            dev = dev.max((dot(v.col(t), v.col(l)) - target).abs());
        }
    }
    dev
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn parallel_rows_give_rank_one() {
        let x = DenseMatrix::from_rows(&[&[1.0, 0.0, 0.0], &[2.0, 0.0, 0.0]]).unwrap();
        let b = data_subspace_basis(&x, RANK_TOL).unwrap();
        assert_eq!(b.rank(), 1);
        assert!((b.vectors()[(0, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_axes_in_three_dims() {
        let x = DenseMatrix::from_rows(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]).unwrap();
        let b = data_subspace_basis(&x, RANK_TOL).unwrap();
        assert_eq!(b.rank(), 2);
        b.check_span(&x).unwrap();
        assert!(b.residual(&[0.0, 0.0, 1.0]).unwrap() > 0.99);
    }

    #[test]
    fn planted_rank_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (d, r, m) = (50, 5, 40);
        let g = DenseMatrix::from_fn(d, r, |_, _| StandardNormal.sample(&mut rng));
        let coef = DenseMatrix::from_fn(r, m, |_, _| StandardNormal.sample(&mut rng));
        let x = g.matmul(&coef).unwrap().transpose();
        let b = data_subspace_basis(&x, RANK_TOL).unwrap();
        assert_eq!(b.rank(), r);
        assert!(orthonormality_defect(b.vectors()) < 1e-10);
    }

    #[test]
    fn zero_data_rejected() {
        let x = DenseMatrix::zeros(3, 4);
        assert_eq!(data_subspace_basis(&x, RANK_TOL), Err(Error::EmptyData));
    }

    #[test]
    fn outer_products_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for trial in 0..20 {
            let d = 3 + trial % 4;
            let r = 1 + trial % d;
            let g = DenseMatrix::from_fn(d, r, |_, _| StandardNormal.sample(&mut rng));
            let q = svd(&g).unwrap().u;
            assert_eq!(outer_product_rank(&q).unwrap(), r * r);
        }
    }
}
