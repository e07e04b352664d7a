//! Matrix bases of `R^{d x d}` and of the symmetric space `S^d`, with their
//! coefficient maps.
//!
//! A coefficient grid is a `d x d` matrix `G` with `A = sum_{jl} G_jl B^{jl}`.
//! For bases of `S^d` the elements are indexed by `j >= l`, `B^{lj} := B^{jl}`,
//! and the grid is symmetric with off-diagonal entries holding half the
//! coefficient, so the same all-pairs sum reconstructs `A`. In svec coordinates
//! this is `svec(A) = B~ svec(G)`.

mod subspace;

pub use subspace::{
    data_subspace_basis, orthonormality_defect, outer_product_rank, SubspaceBasis, RANK_TOL,
    SPAN_TOL,
};

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::{eig_sym, smat, svd, svec, tri_len, unvec, vec, DenseMatrix, Lu, SymMatrix};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Space {
    Full,
    Symmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BasisKind {
    /// Unit matrices `E_jl`.
    Standard,
    /// `E_jl + E_lj` for `j >= l` and `E_jl - E_lj` for `j < l`.
    TriangularSym,
    /// PSD basis of `S^d`: `E_jj`, and for `j != l` ones at `(j,l), (l,j),
    /// (j,j), (l,l)`.
    PsdExample,
    /// `q_t q_l^T` for `Q = [V, V_perp]` built from client data.
    DataSubspace,
    /// Arbitrary elements, coefficients by a factorized linear solve.
    General,
}

#[derive(Clone, Debug)]
enum Repr {
    Standard,
    TriangularSym,
    Psd,
    Subspace { q: DenseMatrix, r: usize },
    General(Box<GeneralBasis>),
}

#[derive(Clone, Debug)]
struct GeneralBasis {
    elements: Vec<DenseMatrix>,
    transition: DenseMatrix,
    lu: Lu,
    orthogonal: bool,
    psd: bool,
    max_norm: f64,
}

/// Operator norms of the inverse transition matrix and the largest element
/// norm, the constants behind the coefficient Lipschitz estimates.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Conditioning {
    pub inv_norm_2: f64,
    pub inv_norm_inf: f64,
    pub max_element_norm: f64,
}

/// Lipschitz bounds on the coefficient map given bounds on the Hessian.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CoeffBounds {
    /// Frobenius Lipschitz constant of `x -> h(Hess f(x))`.
    pub frobenius: f64,
    /// Entrywise Lipschitz constant.
    pub entrywise: f64,
}

#[derive(Clone, Debug)]
pub struct MatrixBasis {
    d: usize,
    space: Space,
    repr: Repr,
}

impl MatrixBasis {
    pub fn standard(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(MatrixBasis {
            d,
            space: Space::Full,
            repr: Repr::Standard,
        })
    }

    pub fn triangular_sym(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(MatrixBasis {
            d,
            space: Space::Full,
            repr: Repr::TriangularSym,
        })
    }

    pub fn psd_sym(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(MatrixBasis {
            d,
            space: Space::Symmetric,
            repr: Repr::Psd,
        })
    }

    /// Full basis `q_t q_l^T` of `R^{d x d}` from a data subspace, completed by
    /// an orthonormal complement. Data Hessians have coefficients only in the
    /// leading `r x r` block.
    pub fn subspace(s: &SubspaceBasis) -> Result<Self> {
        let q = s.completed()?;
        Ok(MatrixBasis {
            d: s.dim(),
            space: Space::Full,
            repr: Repr::Subspace { q, r: s.rank() },
        })
    }

    /// Arbitrary elements in index order: `(j, l)` column-major for
    /// [`Space::Full`], lower-triangular column-major for [`Space::Symmetric`].
    pub fn from_elements(space: Space, d: usize, elements: Vec<DenseMatrix>) -> Result<Self> {
        check_dim(d)?;
        let n = match space {
            Space::Full => d * d,
            Space::Symmetric => tri_len(d),
        };
        if elements.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: elements.len(),
            });
        }
        let mut transition = DenseMatrix::zeros(n, n);
        for (c, e) in elements.iter().enumerate() {
            if e.rows() != d || e.cols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: e.rows(),
                });
            }
            let col = match space {
                Space::Full => vec(e),
                Space::Symmetric => {
                    if !e.is_symmetric(0.0) {
                        return Err(Error::NotSymmetric);
                    }
                    svec(&SymMatrix::new(e.clone())?)
                }
            };
            transition.col_mut(c).copy_from_slice(&col);
        }
        let lu = Lu::new(&transition).map_err(|_| Error::RankDeficient {
            expected: n,
            found: numerical_rank(&transition),
        })?;
        let norms: Vec<f64> = elements.iter().map(DenseMatrix::frobenius_norm).collect();
        let max_norm = norms.iter().copied().fold(0.0, f64::max);
        let mut orthogonal = true;
        'outer: for a in 0..n {
            for b in a + 1..n {
                let ip: f64 = crate::matrix::dot(elements[a].as_slice(), elements[b].as_slice());
                if ip.abs() > 1e-10 * norms[a] * norms[b] {
                    orthogonal = false;
                    break 'outer;
                }
            }
        }
        let mut psd = true;
        for e in &elements {
            if !e.is_symmetric(0.0) || SymMatrix::new(e.clone())?.min_eigenvalue()? < -1e-10 {
                psd = false;
                break;
            }
        }
        Ok(MatrixBasis {
            d,
            space,
            repr: Repr::General(Box::new(GeneralBasis {
                elements,
                transition,
                lu,
                orthogonal,
                psd,
                max_norm,
            })),
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn kind(&self) -> BasisKind {
        match self.repr {
            Repr::Standard => BasisKind::Standard,
            Repr::TriangularSym => BasisKind::TriangularSym,
            Repr::Psd => BasisKind::PsdExample,
            Repr::Subspace { .. } => BasisKind::DataSubspace,
            Repr::General(_) => BasisKind::General,
        }
    }

    /// Number of elements, `d^2` or `d(d+1)/2`.
    pub fn len(&self) -> usize {
        match self.space {
            Space::Full => self.d * self.d,
            Space::Symmetric => tri_len(self.d),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Intrinsic dimension `r` of a data-subspace basis.
    pub fn subspace_rank(&self) -> Option<usize> {
        match self.repr {
            Repr::Subspace { r, .. } => Some(r),
            _ => None,
        }
    }

    /// `[V, V_perp]` of a data-subspace basis.
    pub fn rotation(&self) -> Option<&DenseMatrix> {
        match &self.repr {
            Repr::Subspace { q, .. } => Some(q),
            _ => None,
        }
    }

    pub fn is_orthogonal(&self) -> bool {
        match &self.repr {
            Repr::Psd => self.d == 1,
            Repr::General(g) => g.orthogonal,
            _ => true,
        }
    }

    /// `1` when the elements are pairwise orthogonal, `d^2` otherwise.
    pub fn n_b(&self) -> usize {
        if self.is_orthogonal() {
            1
        } else {
            self.d * self.d
        }
    }

    pub fn is_psd(&self) -> bool {
        match &self.repr {
            Repr::Standard | Repr::TriangularSym => self.d == 1,
            Repr::Psd => true,
            Repr::Subspace { .. } => self.d == 1,
            Repr::General(g) => g.psd,
        }
    }

    /// `max_{jl} ||B^{jl}||_F`.
    pub fn max_element_norm(&self) -> f64 {
        let multi = self.d > 1;
        match &self.repr {
            Repr::Standard | Repr::Subspace { .. } => 1.0,
            Repr::TriangularSym => {
                if multi {
                    core::f64::consts::SQRT_2
                } else {
                    1.0
                }
            }
            Repr::Psd => {
                if multi {
                    2.0
                } else {
                    1.0
                }
            }
            Repr::General(g) => g.max_norm,
        }
    }

    /// Element `B^{jl}`. For symmetric spaces `(j, l)` and `(l, j)` name the
    /// same element.
    pub fn element(&self, j: usize, l: usize) -> DenseMatrix {
        let d = self.d;
        assert!(j < d && l < d, "element index out of range");
        let mut e = DenseMatrix::zeros(d, d);
        match &self.repr {
            Repr::Standard => e[(j, l)] = 1.0,
            Repr::TriangularSym => {
                if j >= l {
                    e[(j, l)] = 1.0;
                    e[(l, j)] = 1.0;
                } else {
                    e[(j, l)] = 1.0;
                    e[(l, j)] = -1.0;
                }
            }
            Repr::Psd => {
                e[(j, l)] = 1.0;
                e[(l, j)] = 1.0;
                e[(j, j)] = 1.0;
                e[(l, l)] = 1.0;
            }
            Repr::Subspace { q, .. } => {
                e = DenseMatrix::outer(q.col(j), q.col(l));
            }
            Repr::General(g) => {
                let idx = match self.space {
                    Space::Full => j + l * d,
                    Space::Symmetric => tri_index(j.max(l), j.min(l), d),
                };
                e = g.elements[idx].clone();
            }
        }
        e
    }

    /// Coefficient grid `h(A)`. Symmetric spaces reject non-symmetric `A`.
    pub fn coeffs(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        let d = self.d;
        if a.rows() != d || a.cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: a.rows(),
            });
        }
        if !a.is_finite() {
            return Err(Error::NonFinite("basis coefficients input"));
        }
        if self.space == Space::Symmetric && !a.is_symmetric(1e-12 * (1.0 + a.max_abs())) {
            return Err(Error::NotSymmetric);
        }
        Ok(match &self.repr {
            Repr::Standard => a.clone(),
            Repr::TriangularSym => DenseMatrix::from_fn(d, d, |j, l| {
                if j == l {
                    a[(j, j)]
                } else if j > l {
                    0.5 * (a[(j, l)] + a[(l, j)])
                } else {
                    0.5 * (a[(j, l)] - a[(l, j)])
                }
            }),
            Repr::Psd => {
                let mut g = DenseMatrix::zeros(d, d);
                for j in 0..d {
                    let mut diag = a[(j, j)];
                    for l in 0..d {
                        if l != j {
                            let c = lower(a, j, l);
                            diag -= c;
                            g[(j, l)] = 0.5 * c;
                        }
                    }
                    g[(j, j)] = diag;
                }
                g
            }
            Repr::Subspace { q, .. } => q.tr_matmul(a)?.matmul(q)?,
            Repr::General(gb) => match self.space {
                Space::Full => unvec(&gb.lu.solve(&vec(a))?, d, d)?,
                Space::Symmetric => {
                    let s = SymMatrix::from_lower(a)?;
                    smat(&gb.lu.solve(&svec(&s))?)?.into_dense()
                }
            },
        })
    }

    /// `sum_{jl} G_jl B^{jl}`.
    pub fn reconstruct(&self, g: &DenseMatrix) -> Result<DenseMatrix> {
        let d = self.d;
        if g.rows() != d || g.cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: g.rows(),
            });
        }
        if self.space == Space::Symmetric && !g.is_symmetric(1e-12 * (1.0 + g.max_abs())) {
            return Err(Error::NotSymmetric);
        }
        Ok(match &self.repr {
            Repr::Standard => g.clone(),
            Repr::TriangularSym => DenseMatrix::from_fn(d, d, |j, l| {
                if j == l {
                    g[(j, j)]
                } else if j > l {
                    g[(j, l)] - g[(l, j)]
                } else {
                    g[(l, j)] + g[(j, l)]
                }
            }),
            Repr::Psd => {
                let mut a = DenseMatrix::zeros(d, d);
                for j in 0..d {
                    let mut diag = g[(j, j)];
                    for l in 0..d {
                        if l != j {
                            let c = 2.0 * lower(g, j, l);
                            a[(j, l)] = c;
                            diag += c;
                        }
                    }
                    a[(j, j)] = diag;
                }
                a
            }
            Repr::Subspace { q, .. } => q.matmul(g)?.matmul(&q.transpose())?,
            Repr::General(gb) => match self.space {
                Space::Full => unvec(&gb.transition.matvec(&vec(g))?, d, d)?,
                Space::Symmetric => {
                    let s = SymMatrix::from_lower(g)?;
                    smat(&gb.transition.matvec(&svec(&s))?)?.into_dense()
                }
            },
        })
    }

    /// `sum_{jl} B^{jl}` over all `d^2` index pairs.
    pub fn element_sum(&self) -> Result<DenseMatrix> {
        let ones = DenseMatrix::from_fn(self.d, self.d, |_, _| 1.0);
        self.reconstruct(&ones)
    }

    /// The `N x N` transition matrix with columns `vec(B)` or `svec(B)`.
    pub fn transition_matrix(&self) -> Result<DenseMatrix> {
        if let Repr::General(g) = &self.repr {
            return Ok(g.transition.clone());
        }
        let n = self.len();
        let mut t = DenseMatrix::zeros(n, n);
        for (c, (j, l)) in self.index_pairs().into_iter().enumerate() {
            let e = self.element(j, l);
            let col = match self.space {
                Space::Full => vec(&e),
                Space::Symmetric => svec(&SymMatrix::from_lower(&e)?),
            };
            t.col_mut(c).copy_from_slice(&col);
        }
        Ok(t)
    }

    /// Element indices in transition-matrix column order.
    pub fn index_pairs(&self) -> Vec<(usize, usize)> {
        let d = self.d;
        let mut out = Vec::with_capacity(self.len());
        match self.space {
            Space::Full => {
                for l in 0..d {
                    for j in 0..d {
                        out.push((j, l));
                    }
                }
            }
            Space::Symmetric => {
                for l in 0..d {
                    for j in l..d {
                        out.push((j, l));
                    }
                }
            }
        }
        out
    }

    /// `||B^{-1}||_2`, `||B^{-1}||_inf` and `max ||B^{jl}||_F`.
    pub fn conditioning(&self) -> Result<Conditioning> {
        let r = self.max_element_norm();
        let d = self.d as f64;
        let (inv2, inv_inf) = match &self.repr {
            Repr::Standard => (1.0, 1.0),
            Repr::TriangularSym => (1.0, 1.0),
            Repr::Subspace { q, .. } => {
                // B = Q (x) Q is orthogonal; ||Q^T (x) Q^T||_inf = ||Q^T||_inf^2.
                let qt_inf = (0..self.d)
                    .map(|c| q.col(c).iter().map(|x| x.abs()).sum::<f64>())
                    .fold(0.0, f64::max);
                (1.0, qt_inf * qt_inf)
            }
            Repr::Psd => (psd_inverse_norm_2(self.d), (d + 1.0) / 2.0),
            Repr::General(g) => {
                let inv = g.lu.inverse()?;
                let s = svd(&inv)?.sigma[0];
                (s, inf_norm(&inv))
            }
        };
        Ok(Conditioning {
            inv_norm_2: inv2,
            inv_norm_inf: inv_inf,
            max_element_norm: r,
        })
    }

    /// Coefficient Lipschitz bounds from Hessian bounds `h1` (Frobenius) and
    /// `nu` (entrywise). Symmetric spaces carry the extra `sqrt 2` and `2`
    /// factors of the halved off-diagonal convention.
    pub fn coeff_bounds(&self, h1: f64, nu: f64) -> Result<CoeffBounds> {
        let c = self.conditioning()?;
        Ok(match self.space {
            Space::Full => CoeffBounds {
                frobenius: c.inv_norm_2 * h1,
                entrywise: c.inv_norm_inf * nu,
            },
            Space::Symmetric => CoeffBounds {
                frobenius: core::f64::consts::SQRT_2 * c.inv_norm_2 * h1,
                entrywise: 2.0 * nu * c.inv_norm_inf,
            },
        })
    }

    /// Bound on `max |L_jl|` when every Hessian entry is at most `gamma`.
    pub fn coeff_entry_bound(&self, gamma: f64) -> Result<f64> {
        Ok(2.0 * gamma * self.conditioning()?.inv_norm_inf)
    }

    /// Same basis with element `idx` (transition order) multiplied by `factor`.
    pub fn with_scaled_element(&self, idx: usize, factor: f64) -> Result<Self> {
        let mut elements: Vec<DenseMatrix> = self
            .index_pairs()
            .into_iter()
            .map(|(j, l)| self.element(j, l))
            .collect();
        if idx >= elements.len() {
            return Err(Error::OutOfRange {
                what: "element index",
                value: idx,
                min: 0,
                max: elements.len() - 1,
            });
        }
        elements[idx].scale(factor);
        Self::from_elements(self.space, self.d, elements)
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidParameter("basis dimension must be >= 1".into()));
    }
    Ok(())
}

#[inline]
fn lower(a: &DenseMatrix, j: usize, l: usize) -> f64 {
    if j >= l {
        a[(j, l)]
    } else {
        a[(l, j)]
    }
}

/// Position of `(j, l)`, `j >= l`, in lower-triangular column-major order.
fn tri_index(j: usize, l: usize, d: usize) -> usize {
    l * d - l * l.saturating_sub(1) / 2 + (j - l)
}

fn inf_norm(m: &DenseMatrix) -> f64 {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn numerical_rank(m: &DenseMatrix) -> usize {
    match svd(m) {
        Ok(s) => {
            let smax = s.sigma.first().copied().unwrap_or(0.0);
            s.sigma.iter().filter(|&&x| x > 1e-10 * smax).count()
        }
        Err(_) => 0,
    }
}

/// Spectral norm of the inverse PSD-basis transition map, by power iteration
/// on `B^{-T} B^{-1}` applied in closed form on svec coordinates.
fn psd_inverse_norm_2(d: usize) -> f64 {
    if d == 1 {
        return 1.0;
    }
    let n = tri_len(d);
    let pairs: Vec<(usize, usize)> = {
        let mut p = Vec::with_capacity(n);
        for l in 0..d {
            for j in l..d {
                p.push((j, l));
            }
        }
        p
    };
    let diag_pos: Vec<usize> = (0..d).map(|j| pairs.iter().position(|&p| p == (j, j)).unwrap()).collect();
    // y = B^{-1} x: off-diagonal y_jl = x_jl / 2, diagonal y_jj = x_jj - sum_{l != j} x_jl / 2.
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; n];
        for (k, &(j, l)) in pairs.iter().enumerate() {
            if j == l {
                y[k] += x[k];
            } else {
                y[k] += 0.5 * x[k];
                y[diag_pos[j]] -= 0.5 * x[k];
                y[diag_pos[l]] -= 0.5 * x[k];
            }
        }
        y
    };
    let apply_t = |y: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (k, &(j, l)) in pairs.iter().enumerate() {
            if j == l {
                x[k] += y[k];
            } else {
                x[k] += 0.5 * y[k] - 0.5 * y[diag_pos[j]] - 0.5 * y[diag_pos[l]];
            }
        }
        x
    };
    let mut x: Vec<f64> = (0..n).map(|k| 1.0 + 0.01 * (k % 7) as f64).collect();
    let mut lam = 0.0;
    for _ in 0..5000 {
        let y = apply_t(&apply(&x));
        let nrm = crate::matrix::norm2(&y);
        let next = nrm / crate::matrix::norm2(&x);
        x = y.iter().map(|v| v / nrm).collect();
        if (next - lam).abs() <= 1e-14 * next {
            lam = next;
            break;
        }
        lam = next;
    }
    libm::sqrt(lam)
}

/// Smallest eigenvalue over all elements; `>= 0` for PSD bases.
pub fn min_element_eigenvalue(basis: &MatrixBasis) -> Result<f64> {
    let mut m = f64::INFINITY;
    for (j, l) in basis.index_pairs() {
        let e = basis.element(j, l);
        if !e.is_symmetric(0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        m = m.min(eig_sym(&SymMatrix::new(e)?)?.eigenvalues[0]);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::frobenius_norm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss_mat(rng: &mut ChaCha8Rng, d: usize) -> DenseMatrix {
        DenseMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng))
    }

    fn gauss_sym(rng: &mut ChaCha8Rng, d: usize) -> DenseMatrix {
        let a = gauss_mat(rng, d);
        DenseMatrix::from_fn(d, d, |i, j| if i >= j { a[(i, j)] } else { a[(j, i)] })
    }

    #[test]
    fn tri_index_matches_pairs() {
        for d in 1..7 {
            let b = MatrixBasis::psd_sym(d).unwrap();
            for (k, (j, l)) in b.index_pairs().into_iter().enumerate() {
                assert_eq!(tri_index(j, l, d), k);
            }
        }
    }

    #[test]
    fn standard_coeffs_are_identity() {
        let b = MatrixBasis::standard(2).unwrap();
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(b.coeffs(&a).unwrap(), a);
        let c = b.conditioning().unwrap();
        assert_eq!((c.inv_norm_2, c.inv_norm_inf, c.max_element_norm), (1.0, 1.0, 1.0));
        assert_eq!(b.n_b(), 1);
    }

    #[test]
    fn triangular_examples() {
        let b = MatrixBasis::triangular_sym(2).unwrap();
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 5.0]]).unwrap();
        let g = b.coeffs(&a).unwrap();
        assert_eq!(g, DenseMatrix::from_rows(&[&[1.0, 0.0], &[2.0, 5.0]]).unwrap());
        let skew = DenseMatrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]).unwrap();
        let g = b.coeffs(&skew).unwrap();
        assert_eq!(g, DenseMatrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap());
        // Oracle: solve the transition system directly.
        let t = b.transition_matrix().unwrap();
        let sol = Lu::new(&t).unwrap().solve(&vec(&skew)).unwrap();
        assert_eq!(unvec(&sol, 2, 2).unwrap(), g);
        assert_eq!(b.n_b(), 1);
    }

    #[test]
    fn psd_example_coefficients() {
        let b = MatrixBasis::psd_sym(2).unwrap();
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 5.0]]).unwrap();
        let g = b.coeffs(&a).unwrap();
        // Coefficients c21 = 2, c11 = -1, c22 = 3; the grid halves c21.
        assert_eq!(g[(0, 0)], -1.0);
        assert_eq!(g[(1, 1)], 3.0);
        assert_eq!(g[(1, 0)], 1.0);
        assert_eq!(g[(0, 1)], 1.0);
        let t = b.transition_matrix().unwrap();
        let sol = Lu::new(&t).unwrap().solve(&svec(&SymMatrix::new(a.clone()).unwrap())).unwrap();
        assert!((sol[0] + 1.0).abs() < 1e-14 && (sol[1] - 2.0).abs() < 1e-14 && (sol[2] - 3.0).abs() < 1e-14);
        assert_eq!(b.reconstruct(&g).unwrap(), a);
        let i3 = MatrixBasis::psd_sym(3).unwrap().coeffs(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(i3, DenseMatrix::identity(3));
        assert!(b.is_psd());
        assert!(min_element_eigenvalue(&MatrixBasis::psd_sym(5).unwrap()).unwrap() >= -1e-12);
        assert!(b.coeffs(&DenseMatrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]).unwrap()).is_err());
    }

    #[test]
    fn psd_conditioning_matches_explicit_inverse() {
        for d in 2..6 {
            let b = MatrixBasis::psd_sym(d).unwrap();
            let inv = Lu::new(&b.transition_matrix().unwrap()).unwrap().inverse().unwrap();
            let c = b.conditioning().unwrap();
            assert!((c.inv_norm_inf - inf_norm(&inv)).abs() < 1e-12);
            let s = svd(&inv).unwrap().sigma[0];
            assert!((c.inv_norm_2 - s).abs() < 1e-8 * s, "d={d}: {} vs {s}", c.inv_norm_2);
            assert_eq!(c.max_element_norm, 2.0);
        }
        assert_eq!(MatrixBasis::psd_sym(2).unwrap().conditioning().unwrap().inv_norm_inf, 1.5);
    }

    #[test]
    fn round_trips_all_kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for d in [1usize, 2, 5, 9] {
            let data = DenseMatrix::from_fn(d + 2, d, |_, _| StandardNormal.sample(&mut rng));
            let sub = data_subspace_basis(&data, RANK_TOL).unwrap();
            let bases = [
                MatrixBasis::standard(d).unwrap(),
                MatrixBasis::triangular_sym(d).unwrap(),
                MatrixBasis::psd_sym(d).unwrap(),
                MatrixBasis::subspace(&sub).unwrap(),
            ];
            for b in &bases {
                for _ in 0..50 {
                    let a = match b.space() {
                        Space::Full => gauss_mat(&mut rng, d),
                        Space::Symmetric => gauss_sym(&mut rng, d),
                    };
                    let back = b.reconstruct(&b.coeffs(&a).unwrap()).unwrap();
                    let err = frobenius_norm(&back.sub(&a).unwrap());
                    assert!(err <= 1e-9 * (1.0 + frobenius_norm(&a)), "{:?}", b.kind());
                }
            }
        }
    }

    #[test]
    fn general_basis_agrees_with_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for closed in [
            MatrixBasis::standard(3).unwrap(),
            MatrixBasis::triangular_sym(3).unwrap(),
            MatrixBasis::psd_sym(3).unwrap(),
        ] {
            let elements = closed
                .index_pairs()
                .into_iter()
                .map(|(j, l)| closed.element(j, l))
                .collect();
            let general = MatrixBasis::from_elements(closed.space(), 3, elements).unwrap();
            assert_eq!(general.is_orthogonal(), closed.is_orthogonal());
            assert_eq!(general.is_psd(), closed.is_psd());
            assert_eq!(general.max_element_norm(), closed.max_element_norm());
            let cg = general.conditioning().unwrap();
            let cc = closed.conditioning().unwrap();
            assert!((cg.inv_norm_2 - cc.inv_norm_2).abs() < 1e-8);
            assert!((cg.inv_norm_inf - cc.inv_norm_inf).abs() < 1e-10);
            for _ in 0..20 {
                let a = match closed.space() {
                    Space::Full => gauss_mat(&mut rng, 3),
                    Space::Symmetric => gauss_sym(&mut rng, 3),
                };
                let diff = general.coeffs(&a).unwrap().sub(&closed.coeffs(&a).unwrap()).unwrap();
                assert!(frobenius_norm(&diff) < 1e-12);
                let g = closed.coeffs(&a).unwrap();
                let diff = general.reconstruct(&g).unwrap().sub(&closed.reconstruct(&g).unwrap()).unwrap();
                assert!(frobenius_norm(&diff) < 1e-12);
            }
        }
    }

    #[test]
    fn dependent_elements_rejected() {
        let e = vec![DenseMatrix::identity(1)];
        assert!(MatrixBasis::from_elements(Space::Full, 1, e).is_ok());
        let z = vec![DenseMatrix::zeros(1, 1)];
        assert!(matches!(
            MatrixBasis::from_elements(Space::Full, 1, z),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn scaling_element_doubles_r() {
        let b = MatrixBasis::standard(2).unwrap();
        let s = b.with_scaled_element(1, 2.0).unwrap();
        assert_eq!(s.max_element_norm(), 2.0 * b.max_element_norm());
        assert!(s.is_orthogonal());
    }

    #[test]
    fn orthogonality_flag_matches_gram() {
        let b = MatrixBasis::psd_sym(3).unwrap();
        assert_eq!(b.n_b(), 9);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let data = DenseMatrix::from_fn(2, 4, |_, _| StandardNormal.sample(&mut rng));
        let s = MatrixBasis::subspace(&data_subspace_basis(&data, RANK_TOL).unwrap()).unwrap();
        assert_eq!(s.n_b(), 1);
        assert_eq!(s.subspace_rank(), Some(2));
        let pairs = s.index_pairs();
        for a in 0..pairs.len() {
            for c in a + 1..pairs.len() {
                let ea = s.element(pairs[a].0, pairs[a].1);
                let ec = s.element(pairs[c].0, pairs[c].1);
                assert!(crate::matrix::dot(ea.as_slice(), ec.as_slice()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn subspace_coefficients_of_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let data = DenseMatrix::from_fn(3, 6, |_, _| StandardNormal.sample(&mut rng));
        let sub = data_subspace_basis(&data, RANK_TOL).unwrap();
        let b = MatrixBasis::subspace(&sub).unwrap();
        let v1 = sub.vectors().col(0).to_vec();
        let g = b.coeffs(&DenseMatrix::outer(&v1, &v1)).unwrap();
        for j in 0..6 {
            for l in 0..6 {
                let want = if j == 0 && l == 0 { 1.0 } else { 0.0 };
                assert!((g[(j, l)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn element_sum_counts_symmetric_pairs_twice() {
        let b = MatrixBasis::psd_sym(2).unwrap();
        // B11 + B22 + 2 B21 = [[3, 2], [2, 3]].
        let e = b.element_sum().unwrap();
        assert_eq!(e, DenseMatrix::from_rows(&[&[3.0, 2.0], &[2.0, 3.0]]).unwrap());
    }
}
