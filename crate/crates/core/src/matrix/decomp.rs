//! Jacobi eigen and singular value decompositions.

use alloc::vec;
use alloc::vec::Vec;

use super::{dot, norm2, DenseMatrix, SymMatrix};
use crate::{Error, Result};

const EPS: f64 = f64::EPSILON;

/// `A = Q diag(eigenvalues) Q^T` with eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SpectralDecomp {
    pub eigenvalues: Vec<f64>,
    /// Orthogonal; column `j` pairs with `eigenvalues[j]`.
    pub eigenvectors: DenseMatrix,
}

impl SpectralDecomp {
    /// `Q diag(f(lambda)) Q^T`.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = self.eigenvalues.len();
        let q = &self.eigenvectors;
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = DenseMatrix::zeros(d, d);
        for j in 0..d {
            for i in j..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += q[(i, k)] * mapped[k] * q[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        SymMatrix(out)
    }

    /// `Q diag(f(lambda)) Q^T x` without forming the matrix.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut coords = self.eigenvectors.tr_matvec(x)?;
        for (c, &l) in coords.iter_mut().zip(&self.eigenvalues) {
            *c *= f(l);
        }
        self.eigenvectors.matvec(&coords)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map_eigenvalues(|l| l)
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Fails with [`Error::NoConvergence`] after `100 d` sweeps.
pub fn eig_sym(a: &SymMatrix) -> Result<SpectralDecomp> {
    let d = a.dim();
    let mut m = a.as_dense().clone();
    if !m.is_finite() {
        return Err(Error::NonFinite("eig_sym input"));
    }
    let mut v = DenseMatrix::identity(d);
    let scale = m.frobenius_norm();
    let max_sweeps = 100 * d.max(1);
    let mut converged = scale == 0.0;
    let mut sweep = 0;
    while !converged && sweep < max_sweeps {
        sweep += 1;
        let mut rotated = false;
        for p in 0..d {
            for q in p + 1..d {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                if apq.abs() <= EPS * libm::sqrt((app * aqq).abs()) || apq.abs() <= 1e-300 * scale
                {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..d {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..d {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps: max_sweeps });
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let eigenvectors = DenseMatrix::from_fn(d, d, |i, j| v[(i, order[j])]);
    Ok(SpectralDecomp {
        eigenvalues,
        eigenvectors,
    })
}

/// Frobenius projection onto `{A = A^T, A >= mu I}`: eigenvalues below `mu`
/// are raised to `mu`.
pub fn project_psd_mu(a: &SymMatrix, mu: f64) -> Result<SymMatrix> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("mu must be positive, got {mu}")));
    }
    Ok(eig_sym(a)?.map_eigenvalues(|l| l.max(mu)))
}

/// Thin SVD `A = U diag(sigma) V^T` with `k = min(rows, cols)` triplets,
/// `sigma` descending. `U` and `V` have orthonormal columns.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    /// Sum of the leading `r` rank-one terms.
    pub fn truncated(&self, r: usize) -> DenseMatrix {
        let (rows, cols) = (self.u.rows(), self.v.rows());
        let mut out = DenseMatrix::zeros(rows, cols);
        for t in 0..r.min(self.sigma.len()) {
            let s = self.sigma[t];
            if s == 0.0 {
                continue;
            }
            let u = self.u.col(t);
            let v = self.v.col(t);
            for j in 0..cols {
                let f = s * v[j];
                for (o, ui) in out.col_mut(j).iter_mut().zip(u) {
                    *o += ui * f;
                }
            }
        }
        out
    }
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    if a.cols() > a.rows() {
        let t = svd(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    let (rows, k) = (a.rows(), a.cols());
    let mut w = a.clone();
    let mut v = DenseMatrix::identity(k);
    let max_sweeps = 100 * k.max(1);
    // Columns below this squared norm are roundoff and are not rotated.
    let negligible = {
        let f = EPS * a.frobenius_norm();
        f * f
    };
    let mut converged = false;
    let mut sweep = 0;
    while !converged && sweep < max_sweeps {
        sweep += 1;
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let alpha = dot(w.col(p), w.col(p));
                let beta = dot(w.col(q), w.col(q));
                let gamma = dot(w.col(p), w.col(q));
                if gamma == 0.0
                    || alpha.min(beta) <= negligible
                    || gamma.abs() <= EPS * libm::sqrt(alpha * beta)
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate_cols(&mut w, p, q, c, s);
                rotate_cols(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps: max_sweeps });
    }
    let norms: Vec<f64> = (0..k).map(|j| norm2(w.col(j))).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let sigma_max = norms.iter().copied().fold(0.0, f64::max);
    let mut sigma = Vec::with_capacity(k);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut null_slots = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        let s = norms[j];
        // Columns at roundoff level carry no direction; they are completed below.
        if s > 1e-300 && s >= EPS * 1e-4 * sigma_max {
            sigma.push(s);
            u_cols.push(w.col(j).iter().map(|x| x / s).collect());
        } else {
            sigma.push(s);
            u_cols.push(vec![0.0; rows]);
            null_slots.push(slot);
        }
    }
    let mut u = DenseMatrix::zeros(rows, k);
    for (j, col) in u_cols.iter().enumerate() {
        u.col_mut(j).copy_from_slice(col);
    }
    if !null_slots.is_empty() {
        fill_orthonormal(&mut u, &null_slots);
    }
    let v_sorted = DenseMatrix::from_fn(k, k, |i, j| v[(i, order[j])]);
    Ok(Svd {
        u,
        sigma,
        v: v_sorted,
    })
}

fn rotate_cols(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.rows();
    let data = m.as_mut_slice();
    let (lo, hi) = data.split_at_mut(q * rows);
    let cp = &mut lo[p * rows..(p + 1) * rows];
    let cq = &mut hi[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Replaces the listed columns of `u` with unit vectors orthogonal to all
/// other columns. Each new column comes from the unit vector with the largest
/// residual against the columns placed so far.
fn fill_orthonormal(u: &mut DenseMatrix, slots: &[usize]) {
    let rows = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|j| !slots.contains(j)).collect();
    let mut resid = DenseMatrix::identity(rows);
    for &j in &filled {
        deflate(&mut resid, u.col(j));
    }
    for &slot in slots {
        let Some(best) = (0..rows).max_by(|&a, &b| norm2(resid.col(a)).total_cmp(&norm2(resid.col(b)))) else {
            return;
        };
        let mut e = resid.col(best).to_vec();
        for _ in 0..2 {
            for &j in &filled {
                let c = dot(u.col(j), &e);
                for (x, y) in e.iter_mut().zip(u.col(j)) {
                    *x -= c * y;
                }
            }
        }
        let n = norm2(&e);
        if n < 1e-8 {
            return;
        }
        e.iter_mut().for_each(|x| *x /= n);
        u.col_mut(slot).copy_from_slice(&e);
        deflate(&mut resid, &e);
        filled.push(slot);
    }
}

/// Removes the component along unit vector `q` from every column of `m`.
fn deflate(m: &mut DenseMatrix, q: &[f64]) {
    for c in 0..m.cols() {
        let col = m.col_mut(c);
        let k = dot(col, q);
        for (x, y) in col.iter_mut().zip(q) {
            *x -= k * y;
        }
    }
}

/// Extends `d x r` orthonormal columns to a `d x d` orthogonal matrix whose
/// first `r` columns are the input.
pub fn complete_orthonormal(cols: &DenseMatrix) -> Result<DenseMatrix> {
    let (d, r) = (cols.rows(), cols.cols());
    if r > d {
        return Err(Error::OutOfRange {
            what: "basis size",
            value: r,
            min: 0,
            max: d,
        });
    }
    let mut q = DenseMatrix::zeros(d, d);
    q.as_mut_slice()[..d * r].copy_from_slice(cols.as_slice());
    let slots: Vec<usize> = (r..d).collect();
    fill_orthonormal(&mut q, &slots);
    let filled = (r..d).all(|j| norm2(q.col(j)) > 0.5);
    if !filled {
        return Err(Error::RankDeficient {
            expected: d,
            found: r,
        });
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(d: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let a = DenseMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        crate::matrix::symmetrize(&a).unwrap()
    }

    fn orthogonality_error(q: &DenseMatrix) -> f64 {
        let qtq = q.tr_matmul(q).unwrap();
        qtq.sub(&DenseMatrix::identity(q.cols())).unwrap().max_abs()
    }

    #[test]
    fn eig_of_diagonal_and_identity() {
        let e = eig_sym(&SymMatrix::diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.eigenvalues, [1.0, 2.0, 3.0]);
        let e = eig_sym(&SymMatrix::identity(4)).unwrap();
        assert!(e.eigenvalues.iter().all(|&l| l == 1.0));
        let e = eig_sym(&SymMatrix::zeros(3)).unwrap();
        assert!(e.eigenvalues.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn eig_reconstructs_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [1, 2, 5, 17, 40] {
            let a = random_sym(d, &mut rng);
            let e = eig_sym(&a).unwrap();
            let err = e.reconstruct().sub(&a).unwrap().frobenius_norm();
            assert!(err <= 1e-10 * (1.0 + a.frobenius_norm()), "d={d} err={err}");
            assert!(orthogonality_error(&e.eigenvectors) <= 1e-10);
            assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn psd_projection_examples() {
        let p = project_psd_mu(&SymMatrix::diag(&[2.0, 3.0]), 1.0).unwrap();
        assert!(p.sub(&SymMatrix::diag(&[2.0, 3.0])).unwrap().max_abs_entry() < 1e-14);
        let p = project_psd_mu(&SymMatrix::diag(&[-1.0, 2.0]), 0.5).unwrap();
        assert!(p.sub(&SymMatrix::diag(&[0.5, 2.0])).unwrap().max_abs_entry() < 1e-14);
        assert!(project_psd_mu(&SymMatrix::identity(2), 0.0).is_err());
    }

    #[test]
    fn psd_projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = random_sym(6, &mut rng);
            let once = project_psd_mu(&a, 0.1).unwrap();
            let twice = project_psd_mu(&once, 0.1).unwrap();
            assert!(once.sub(&twice).unwrap().max_abs_entry() <= 1e-12);
            assert!(once.min_eigenvalue().unwrap() >= 0.1 - 1e-12);
        }
    }

    #[test]
    fn svd_examples() {
        let s = svd(&DenseMatrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(s.sigma, [3.0, 1.0]);
        let s = svd(&DenseMatrix::zeros(3, 3)).unwrap();
        assert!(s.sigma.iter().all(|&x| x == 0.0));
        assert!(orthogonality_error(&s.u) < 1e-14);
    }

    #[test]
    fn svd_reconstructs_rectangular_and_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (r, c) in [(4, 4), (7, 3), (3, 7), (12, 12)] {
            let a = DenseMatrix::from_fn(r, c, |_, _| rng.random_range(-2.0..2.0));
            let s = svd(&a).unwrap();
            let err = s.truncated(r.min(c)).sub(&a).unwrap().frobenius_norm();
            assert!(err <= 1e-10 * (1.0 + a.frobenius_norm()));
            assert!(orthogonality_error(&s.u) < 1e-10);
            assert!(orthogonality_error(&s.v) < 1e-10);
            assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
        let u = [1.0, 2.0, 0.0, -1.0];
        let rank_one = DenseMatrix::outer(&u, &[0.5, 0.0, 1.0, 1.0]);
        let s = svd(&rank_one).unwrap();
        assert!(s.sigma[1] < 1e-12);
        assert!(orthogonality_error(&s.u) < 1e-10);
    }

    #[test]
    fn completion_is_orthogonal() {
        let v = DenseMatrix::from_col_major(3, 1, alloc::vec![0.6, 0.8, 0.0]).unwrap();
        let q = complete_orthonormal(&v).unwrap();
        assert_eq!(q.col(0), v.col(0));
        assert!(orthogonality_error(&q) < 1e-14);
    }

    #[test]
    fn completion_of_a_large_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = DenseMatrix::from_fn(60, 45, |_, _| rng.random_range(-1.0..1.0));
        let v = svd(&a).unwrap().u.leading_cols(45);
        let q = complete_orthonormal(&v).unwrap();
        assert_eq!(q.col(44), v.col(44));
        assert!(orthogonality_error(&q) < 1e-12);
    }
}
