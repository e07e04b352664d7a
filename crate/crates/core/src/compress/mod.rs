//! Compression operators on vectors and matrices.
//!
//! A compressor is immutable configuration; every application takes an
//! explicit random generator so concurrent use across clients stays
//! deterministic. Each kind declares its class parameter (contraction `delta`
//! or variance `omega`) for the shape it is applied to, and a bit cost.
//!
//! Natural compression is not defined where the composition with Rank-R is
//! introduced; here it rounds each entry stochastically to one of its two
//! neighbouring signed powers of two (unbiased, `omega = 1/8`).

mod certify;
mod ops;

pub use certify::{certify, Check, CertifyReport};
pub use ops::{
    compose_rank_unbiased, natural_compression, rand_k, random_dithering, rank_r, top_k,
};

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::RngCore;

use crate::matrix::{symmetrize, DenseMatrix, SymMatrix};
use crate::{Error, Result};

/// Norm used by random dithering.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DitherNorm {
    L2,
    Linf,
}

/// Scaling constants `a_i = b_i` of the Rank-R / unbiased composition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RankScaling {
    #[default]
    Unit,
    SqrtSigma,
}

#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum Compressor {
    #[default]
    Identity,
    TopK {
        k: usize,
    },
    RandK {
        k: usize,
    },
    RankR {
        r: usize,
    },
    Dithering {
        levels: u32,
        norm: DitherNorm,
    },
    Natural,
    /// Rank-R compression whose singular vectors pass through two unbiased
    /// vector compressors.
    ComposedRank {
        r: usize,
        left: Box<Compressor>,
        right: Box<Compressor>,
        #[cfg_attr(feature = "serde", serde(default))]
        scaling: RankScaling,
    },
    /// Symmetric inputs get `(C(A) + C(A)^T) / 2`; others pass through `C`.
    Symmetrized {
        inner: Box<Compressor>,
    },
}

/// What a compressor is applied to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Vector(usize),
    /// `d x d` matrix, `d^2` entries.
    Matrix(usize),
    /// Symmetric `d x d` matrix, represented by its `d(d+1)/2` lower
    /// triangular entries.
    Symmetric(usize),
}

impl Shape {
    /// Number of scalar entries the compressor sees.
    pub fn entries(self) -> usize {
        match self {
            Shape::Vector(n) => n,
            Shape::Matrix(d) => d * d,
            Shape::Symmetric(d) => d * (d + 1) / 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CompressorClass {
    /// `E||A - C(A)||^2 <= (1 - delta) ||A||^2`.
    Contractive { delta: f64 },
    /// `E C(A) = A` and `E||C(A)||^2 <= (omega + 1) ||A||^2`.
    Unbiased { omega: f64 },
    Both { delta: f64, omega: f64 },
}

impl CompressorClass {
    pub fn delta(self) -> Option<f64> {
        match self {
            CompressorClass::Contractive { delta } | CompressorClass::Both { delta, .. } => {
                Some(delta)
            }
            CompressorClass::Unbiased { .. } => None,
        }
    }

    pub fn omega(self) -> Option<f64> {
        match self {
            CompressorClass::Unbiased { omega } | CompressorClass::Both { omega, .. } => {
                Some(omega)
            }
            CompressorClass::Contractive { .. } => None,
        }
    }

    pub fn is_unbiased(self) -> bool {
        self.omega().is_some()
    }
}

/// Float width used by the bit-cost model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BitModel {
    pub float_bits: u64,
}

impl Default for BitModel {
    fn default() -> Self {
        BitModel { float_bits: 64 }
    }
}

impl BitModel {
    pub fn floats(self, n: usize) -> u64 {
        self.float_bits * n as u64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BitCost {
    pub payload: u64,
    pub index: u64,
    pub scalar: u64,
}

impl BitCost {
    pub fn total(self) -> u64 {
        self.payload + self.index + self.scalar
    }

    pub fn floats(model: BitModel, n: usize) -> Self {
        BitCost {
            payload: model.floats(n),
            ..Default::default()
        }
    }

    pub fn scalars(model: BitModel, n: usize) -> Self {
        BitCost {
            scalar: model.floats(n),
            ..Default::default()
        }
    }

    pub fn bits(n: u64) -> Self {
        BitCost {
            scalar: n,
            ..Default::default()
        }
    }
}

impl core::ops::Add for BitCost {
    type Output = BitCost;
    fn add(self, o: BitCost) -> BitCost {
        BitCost {
            payload: self.payload + o.payload,
            index: self.index + o.index,
            scalar: self.scalar + o.scalar,
        }
    }
}

impl core::ops::AddAssign for BitCost {
    fn add_assign(&mut self, o: BitCost) {
        *self = *self + o;
    }
}

impl core::iter::Sum for BitCost {
    fn sum<I: Iterator<Item = BitCost>>(iter: I) -> BitCost {
        iter.fold(BitCost::default(), |a, b| a + b)
    }
}

/// `ceil(log2 n)` bits to address one of `n` positions.
pub fn index_bits(n: usize) -> u64 {
    if n <= 1 {
        0
    } else {
        u64::from(usize::BITS - (n - 1).leading_zeros())
    }
}

impl Compressor {
    pub fn symmetrized(inner: Compressor) -> Compressor {
        Compressor::Symmetrized {
            inner: Box::new(inner),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            Compressor::Identity | Compressor::TopK { .. } | Compressor::RankR { .. } => true,
            Compressor::Symmetrized { inner } => inner.is_deterministic(),
            Compressor::ComposedRank { left, right, .. } => {
                left.is_deterministic() && right.is_deterministic()
            }
            _ => false,
        }
    }

    /// Checks parameters against the shape the compressor will see.
    pub fn validate(&self, shape: Shape) -> Result<()> {
        let n = shape.entries();
        match self {
            Compressor::TopK { k } | Compressor::RandK { k } => check_range("K", *k, 1, n),
            Compressor::RankR { r } => {
                let d = matrix_dim(shape, "Rank-R")?;
                check_range("R", *r, 1, d)
            }
            Compressor::Dithering { levels, .. } => {
                if *levels == 0 {
                    return Err(Error::InvalidParameter("dithering needs s >= 1".into()));
                }
                Ok(())
            }
            Compressor::ComposedRank {
                r, left, right, ..
            } => {
                let d = matrix_dim(shape, "composed Rank-R")?;
                check_range("R", *r, 1, d)?;
                for inner in [left, right] {
                    inner.validate(Shape::Vector(d))?;
                    if !inner.class(Shape::Vector(d))?.is_unbiased() {
                        return Err(Error::InvalidParameter(format!(
                            "inner compressor {inner} must be unbiased"
                        )));
                    }
                }
                Ok(())
            }
            Compressor::Symmetrized { inner } => {
                let d = matrix_dim(shape, "symmetrization")?;
                inner.validate(Shape::Matrix(d))
            }
            Compressor::Identity | Compressor::Natural => Ok(()),
        }
    }

    /// Declared class parameters for `shape`.
    pub fn class(&self, shape: Shape) -> Result<CompressorClass> {
        self.validate(shape)?;
        let n = shape.entries() as f64;
        Ok(match self {
            Compressor::Identity => CompressorClass::Both {
                delta: 1.0,
                omega: 0.0,
            },
            Compressor::TopK { k } => CompressorClass::Contractive { delta: *k as f64 / n },
            Compressor::RandK { k } => CompressorClass::Unbiased {
                omega: n / *k as f64 - 1.0,
            },
            Compressor::RankR { r } => CompressorClass::Contractive {
                delta: *r as f64 / matrix_dim(shape, "Rank-R")? as f64,
            },
            Compressor::Dithering { levels, .. } => {
                let s = f64::from(*levels);
                // Per-coordinate variance is at most min(||x||_q^2 / 4s^2,
                // ||x||_q |x_i| / s), and ||x||_inf <= ||x||_2, so both norms
                // share the bound.
                CompressorClass::Unbiased {
                    omega: (n / (s * s)).min(libm::sqrt(n) / s),
                }
            }
            Compressor::Natural => CompressorClass::Unbiased { omega: 0.125 },
            Compressor::ComposedRank {
                r, left, right, ..
            } => {
                let d = matrix_dim(shape, "composed Rank-R")?;
                let w1 = left.omega_for(d)?;
                let w2 = right.omega_for(d)?;
                CompressorClass::Contractive {
                    delta: *r as f64 / (d as f64 * (w1 + 1.0) * (w2 + 1.0)),
                }
            }
            // The inner compressor always sees the full d x d matrix.
            Compressor::Symmetrized { inner } => inner.class(Shape::Matrix(matrix_dim(shape, "symmetrization")?))?,
        })
    }

    fn omega_for(&self, d: usize) -> Result<f64> {
        self.class(Shape::Vector(d))?
            .omega()
            .ok_or_else(|| Error::InvalidParameter(format!("{self} is not unbiased")))
    }

    /// Bits needed to transmit one compressed value of `shape`. All shipped
    /// kinds have data-independent message sizes.
    pub fn bit_cost(&self, shape: Shape, model: BitModel) -> Result<BitCost> {
        self.validate(shape)?;
        let n = shape.entries();
        Ok(match self {
            Compressor::Identity => BitCost::floats(model, n),
            Compressor::TopK { k } | Compressor::RandK { k } => BitCost {
                payload: model.floats(*k),
                index: *k as u64 * index_bits(n),
                scalar: 0,
            },
            Compressor::RankR { r } => {
                let d = matrix_dim(shape, "Rank-R")?;
                BitCost::floats(model, r * (2 * d + 1))
            }
            Compressor::Dithering { levels, .. } => BitCost {
                payload: n as u64 * (1 + index_bits(*levels as usize + 1)),
                index: 0,
                scalar: model.float_bits,
            },
            Compressor::Natural => BitCost {
                payload: 9 * n as u64,
                ..Default::default()
            },
            Compressor::ComposedRank {
                r, left, right, ..
            } => {
                let d = matrix_dim(shape, "composed Rank-R")?;
                let per = BitCost::scalars(model, 1)
                    + left.bit_cost(Shape::Vector(d), model)?
                    + right.bit_cost(Shape::Vector(d), model)?;
                BitCost {
                    payload: per.payload * *r as u64,
                    index: per.index * *r as u64,
                    scalar: per.scalar * *r as u64,
                }
            }
            Compressor::Symmetrized { inner } => {
                inner.bit_cost(Shape::Matrix(matrix_dim(shape, "symmetrization")?), model)?
            }
        })
    }

    /// Compresses a vector. Rank-based kinds are rejected.
    pub fn compress_vec<R: RngCore + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        self.validate(Shape::Vector(x.len()))?;
        match self {
            Compressor::Identity => Ok(x.to_vec()),
            Compressor::TopK { k } => top_k(x, *k),
            Compressor::RandK { k } => rand_k(x, *k, rng),
            Compressor::Dithering { levels, norm } => Ok(random_dithering(x, *levels, *norm, rng)),
            Compressor::Natural => Ok(natural_compression(x, rng)),
            Compressor::RankR { .. }
            | Compressor::ComposedRank { .. }
            | Compressor::Symmetrized { .. } => Err(Error::InvalidParameter(format!(
                "{self} acts on matrices only"
            ))),
        }
    }

    /// Compresses a square matrix, entrywise kinds acting on `vec(A)`.
    pub fn compress_mat<R: RngCore + ?Sized>(
        &self,
        a: &DenseMatrix,
        rng: &mut R,
    ) -> Result<DenseMatrix> {
        if !a.is_square() {
            return Err(Error::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        let d = a.rows();
        self.validate(Shape::Matrix(d))?;
        match self {
            Compressor::RankR { r } => rank_r(a, *r),
            Compressor::ComposedRank {
                r,
                left,
                right,
                scaling,
            } => compose_rank_unbiased(a, *r, left, right, *scaling, rng),
            Compressor::Symmetrized { inner } => {
                let c = inner.compress_mat(a, rng)?;
                if a.is_symmetric(0.0) {
                    Ok(symmetrize(&c)?.into_dense())
                } else {
                    Ok(c)
                }
            }
            _ => {
                let flat = self.compress_vec(a.as_slice(), rng)?;
                DenseMatrix::from_col_major(d, d, flat)
            }
        }
    }

    /// Compresses a symmetric matrix and returns a symmetric result.
    ///
    /// Entrywise kinds act on the `d(d+1)/2` lower-triangular entries with
    /// off-diagonal entries weighted by `sqrt 2`, so the declared class for
    /// [`Shape::Symmetric`] holds in the Frobenius norm. Top-K therefore keeps
    /// the K triangular entries with the largest Frobenius contribution.
    pub fn compress_sym<R: RngCore + ?Sized>(
        &self,
        a: &SymMatrix,
        rng: &mut R,
    ) -> Result<SymMatrix> {
        let d = a.dim();
        self.validate(Shape::Symmetric(d))?;
        match self {
            Compressor::RankR { .. }
            | Compressor::ComposedRank { .. }
            | Compressor::Symmetrized { .. } => {
                let c = self.compress_mat(a.as_dense(), rng)?;
                symmetrize(&c)
            }
            _ => {
                let packed = iso_pack(a);
                let out = self.compress_vec(&packed, rng)?;
                Ok(iso_unpack(&out, d))
            }
        }
    }
}

/// Lower triangle column by column, off-diagonal entries times `sqrt 2`.
/// `||iso_pack(A)|| = ||A||_F`.
pub fn iso_pack(a: &SymMatrix) -> Vec<f64> {
    let d = a.dim();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for j in 0..d {
        out.push(a[(j, j)]);
        for i in j + 1..d {
            out.push(core::f64::consts::SQRT_2 * a[(i, j)]);
        }
    }
    out
}

pub fn iso_unpack(v: &[f64], d: usize) -> SymMatrix {
    let mut m = DenseMatrix::zeros(d, d);
    let mut k = 0;
    for j in 0..d {
        m[(j, j)] = v[k];
        k += 1;
        for i in j + 1..d {
            let x = v[k] / core::f64::consts::SQRT_2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    SymMatrix::new(m).expect("mirrored construction is symmetric")
}

fn check_range(what: &'static str, value: usize, min: usize, max: usize) -> Result<()> {
    if value < min || value > max {
        return Err(Error::OutOfRange {
            what,
            value,
            min,
            max,
        });
    }
    Ok(())
}

fn matrix_dim(shape: Shape, what: &str) -> Result<usize> {
    match shape {
        Shape::Matrix(d) | Shape::Symmetric(d) => Ok(d),
        Shape::Vector(_) => Err(Error::InvalidParameter(format!("{what} needs a matrix"))),
    }
}

impl fmt::Display for Compressor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Compressor::Identity => write!(f, "identity"),
            Compressor::TopK { k } => write!(f, "top-{k}"),
            Compressor::RandK { k } => write!(f, "rand-{k}"),
            Compressor::RankR { r } => write!(f, "rank-{r}"),
            Compressor::Dithering { levels, norm } => {
                let q = match norm {
                    DitherNorm::L2 => "2",
                    DitherNorm::Linf => "inf",
                };
                write!(f, "dither(s={levels},q={q})")
            }
            Compressor::Natural => write!(f, "natural"),
            Compressor::ComposedRank {
                r, left, right, ..
            } => write!(f, "rank-{r}[{left},{right}]"),
            Compressor::Symmetrized { inner } => write!(f, "sym({inner})"),
        }
    }
}

/// Short human-readable label, mostly for reports.
pub fn describe(c: &Compressor) -> String {
    format!("{c}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn index_bits_is_ceil_log2() {
        assert_eq!(index_bits(1), 0);
        assert_eq!(index_bits(2), 1);
        assert_eq!(index_bits(4), 2);
        assert_eq!(index_bits(5), 3);
        assert_eq!(index_bits(100), 7);
        assert_eq!(index_bits(15129), 14);
    }

    #[test]
    fn declared_classes() {
        let m4 = Shape::Matrix(4);
        assert_eq!(
            Compressor::TopK { k: 4 }.class(m4).unwrap(),
            CompressorClass::Contractive { delta: 0.25 }
        );
        assert_eq!(
            Compressor::RandK { k: 1 }.class(Shape::Matrix(2)).unwrap(),
            CompressorClass::Unbiased { omega: 3.0 }
        );
        assert_eq!(
            Compressor::RankR { r: 1 }.class(m4).unwrap(),
            CompressorClass::Contractive { delta: 0.25 }
        );
        let composed = Compressor::ComposedRank {
            r: 1,
            left: Box::new(Compressor::RandK { k: 2 }),
            right: Box::new(Compressor::Identity),
            scaling: RankScaling::Unit,
        };
        // omega_1 = 4/2 - 1 = 1, omega_2 = 0.
        assert_eq!(
            composed.class(m4).unwrap(),
            CompressorClass::Contractive { delta: 1.0 / 8.0 }
        );
        assert!(Compressor::TopK { k: 0 }.class(m4).is_err());
        assert!(Compressor::TopK { k: 17 }.class(m4).is_err());
        assert!(Compressor::RankR { r: 2 }.class(Shape::Vector(4)).is_err());
    }

    #[test]
    fn bit_costs_follow_model() {
        let m = BitModel::default();
        assert_eq!(
            Compressor::TopK { k: 3 }.bit_cost(Shape::Matrix(4), m).unwrap().total(),
            3 * (64 + 4)
        );
        assert_eq!(
            Compressor::RankR { r: 2 }.bit_cost(Shape::Matrix(5), m).unwrap().total(),
            2 * (10 * 64 + 64)
        );
        assert_eq!(
            Compressor::Dithering {
                levels: 4,
                norm: DitherNorm::L2
            }
            .bit_cost(Shape::Vector(16), m)
            .unwrap()
            .total(),
            64 + 16 * (1 + 3)
        );
        assert_eq!(Compressor::Natural.bit_cost(Shape::Vector(10), m).unwrap().total(), 90);
        assert_eq!(
            Compressor::Identity.bit_cost(Shape::Symmetric(3), BitModel { float_bits: 32 }).unwrap().total(),
            6 * 32
        );
    }

    #[test]
    fn top_k_sym_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = Compressor::TopK { k: 1 };
        let out = c.compress_sym(&SymMatrix::diag(&[5.0, 1.0]), &mut rng).unwrap();
        assert_eq!(out, SymMatrix::diag(&[5.0, 0.0]));
        let a = SymMatrix::new(DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, -3.0]]).unwrap()).unwrap();
        let full = Compressor::TopK { k: 3 }.compress_sym(&a, &mut rng).unwrap();
        assert!(full.sub(&a).unwrap().max_abs_entry() < 1e-15);
    }

    #[test]
    fn symmetrized_identity_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 3.0]]).unwrap();
        let c = Compressor::symmetrized(Compressor::Identity);
        assert_eq!(c.compress_mat(&a, &mut rng).unwrap(), a);
        let skew = DenseMatrix::from_rows(&[&[1.0, 2.0], &[0.0, 3.0]]).unwrap();
        assert_eq!(c.compress_mat(&skew, &mut rng).unwrap(), skew);
    }

    #[test]
    fn iso_pack_preserves_norm() {
        let a = SymMatrix::new(DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 5.0]]).unwrap()).unwrap();
        let p = iso_pack(&a);
        assert!((crate::matrix::norm2(&p) - a.frobenius_norm()).abs() < 1e-14);
        assert!(iso_unpack(&p, 2).sub(&a).unwrap().max_abs_entry() < 1e-15);
    }
}
