//! Monte-Carlo checks of the single-step compression inequalities.
//!
//! For a compressor `Q`, step `eta` and points `x, y, z`:
//!
//! * unbiased `Q` with `eta <= 1/(omega+1)`:
//!   `E||z + eta Q(x-z) - y||^2 <= (1-eta)||z-y||^2 + eta||x-y||^2`;
//! * contractive `Q` with `eta = 1`:
//!   `E||z + Q(x-z) - y||^2 <= (1-delta/4)||z-y||^2 + (6/delta - 7/2)||x-y||^2`.
//!
//! The Hessian-learning forms are the same inequalities on coefficient grids
//! (`z = L`, `x = h(grad^2 f_i(y))`, `y = h(grad^2 f_i(z))`), so the checks
//! accept vectors, full matrices and symmetric matrices alike.

use alloc::string::String;
use alloc::vec::Vec;

use crate::compress::{Compressor, Shape};
use crate::matrix::{norm2, DenseMatrix, SymMatrix};
use crate::rng::{Purpose, RngStream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LemmaCheck {
    pub name: String,
    pub samples: usize,
    pub lhs_mean: f64,
    pub lhs_std_err: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `Q(v)` for `v` laid out as `shape` (matrices column-major).
fn apply(c: &Compressor, shape: Shape, v: &[f64], rng: &mut rand_chacha::ChaCha8Rng) -> Result<Vec<f64>> {
    match shape {
        Shape::Vector(_) => c.compress_vec(v, rng),
        Shape::Matrix(d) => Ok(c.compress_mat(&DenseMatrix::from_col_major(d, d, v.to_vec())?, rng)?.into_vec()),
        Shape::Symmetric(d) => {
            let a = SymMatrix::new(DenseMatrix::from_col_major(d, d, v.to_vec())?)?;
            Ok(c.compress_sym(&a, rng)?.into_dense().into_vec())
        }
    }
}

fn flat_len(shape: Shape) -> usize {
    match shape {
        Shape::Vector(n) => n,
        Shape::Matrix(d) | Shape::Symmetric(d) => d * d,
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let r: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
    let n = norm2(&r);
    n * n
}

struct Sampled {
    mean: f64,
    std_err: f64,
}

fn sample_lhs(c: &Compressor, shape: Shape, pts: [&[f64]; 3], eta: f64, samples: usize, seed: u64) -> Result<Sampled> {
    let [z, x, y] = pts;
    let len = flat_len(shape);
    if z.len() != len || x.len() != len || y.len() != len {
        return Err(Error::DimensionMismatch {
            expected: len,
            found: z.len().min(x.len()).min(y.len()),
        });
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }
    let diff: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
    let mut rng = RngStream::server(seed, 0, Purpose::Certify).rng();
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..samples {
        let q = apply(c, shape, &diff, &mut rng)?;
        let next: Vec<f64> = z.iter().zip(&q).map(|(zi, qi)| zi + eta * qi).collect();
        let v = dist2(&next, y);
        sum += v;
        sum2 += v * v;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = if samples > 1 { ((sum2 - m * mean * mean) / (m - 1.0)).max(0.0) } else { 0.0 };
    Ok(Sampled {
        mean,
        std_err: libm::sqrt(var / m),
    })
}

fn verdict(name: String, samples: usize, s: Sampled, rhs: f64) -> LemmaCheck {
    let slack = 1e-12 * (1.0 + rhs.abs());
    LemmaCheck {
        name,
        samples,
        lhs_mean: s.mean,
        lhs_std_err: s.std_err,
        rhs,
        pass: s.mean - 3.0 * s.std_err <= rhs + slack,
    }
}

/// Unbiased form. `eta` defaults to `1/(omega+1)`.
#[allow(clippy::too_many_arguments)]
pub fn check_unbiased(
    c: &Compressor,
    shape: Shape,
    z: &[f64],
    x: &[f64],
    y: &[f64],
    eta: Option<f64>,
    samples: usize,
    seed: u64,
) -> Result<LemmaCheck> {
    let omega = c
        .class(shape)?
        .omega()
        .ok_or_else(|| Error::InvalidParameter(alloc::format!("{c} is not unbiased")))?;
    let eta = eta.unwrap_or(1.0 / (omega + 1.0));
    if !(eta > 0.0 && eta <= 1.0 / (omega + 1.0) + 1e-15) {
        return Err(Error::InvalidParameter(alloc::format!(
            "eta must lie in (0, 1/(omega+1)], got {eta}"
        )));
    }
    let s = sample_lhs(c, shape, [z, x, y], eta, samples, seed)?;
    let rhs = (1.0 - eta) * dist2(z, y) + eta * dist2(x, y);
    Ok(verdict(alloc::format!("unbiased {c} eta={eta:.4}"), samples, s, rhs))
}

/// Contractive form with `eta = 1`.
pub fn check_contractive(
    c: &Compressor,
    shape: Shape,
    z: &[f64],
    x: &[f64],
    y: &[f64],
    samples: usize,
    seed: u64,
) -> Result<LemmaCheck> {
    let delta = c
        .class(shape)?
        .delta()
        .ok_or_else(|| Error::InvalidParameter(alloc::format!("{c} is not contractive")))?;
    let s = sample_lhs(c, shape, [z, x, y], 1.0, samples, seed)?;
    let rhs = (1.0 - delta / 4.0) * dist2(z, y) + (6.0 / delta - 3.5) * dist2(x, y);
    Ok(verdict(alloc::format!("contractive {c} delta={delta:.4}"), samples, s, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::DitherNorm;
    use rand::{Rng, SeedableRng};

    fn gauss(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    #[test]
    fn unbiased_forms_hold() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for c in [
            Compressor::RandK { k: 2 },
            Compressor::Natural,
            Compressor::Dithering { levels: 2, norm: DitherNorm::L2 },
        ] {
            let (z, x, y) = (gauss(8, &mut rng), gauss(8, &mut rng), gauss(8, &mut rng));
            let r = check_unbiased(&c, Shape::Vector(8), &z, &x, &y, None, 4000, 1).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn contractive_forms_hold() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let (z, x, y) = (gauss(16, &mut rng), gauss(16, &mut rng), gauss(16, &mut rng));
        let r = check_contractive(&Compressor::RankR { r: 1 }, Shape::Matrix(4), &z, &x, &y, 10, 1).unwrap();
        assert!(r.pass, "{r:?}");
        let r = check_contractive(&Compressor::TopK { k: 3 }, Shape::Vector(16), &z, &x, &y, 10, 1).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn oversized_step_is_rejected() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let c = Compressor::RandK { k: 1 };
        assert!(check_unbiased(&c, Shape::Vector(4), &v, &v, &v, Some(0.5), 10, 0).is_err());
        assert!(check_contractive(&c, Shape::Vector(4), &v, &v, &v, 10, 0).is_err());
    }

    #[test]
    fn identity_hits_the_bound_exactly() {
        // eta = 1 with Q = I moves z to x, so the left side is ||x - y||^2.
        let (z, x, y) = ([1.0, 0.0], [0.0, 2.0], [3.0, 3.0]);
        let r = check_unbiased(&Compressor::Identity, Shape::Vector(2), &z, &x, &y, None, 5, 0).unwrap();
        assert!((r.lhs_mean - 10.0).abs() < 1e-12 && (r.rhs - 10.0).abs() < 1e-12);
    }
}
