use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::{Compressor, DitherNorm, RankScaling, Shape};
use crate::matrix::{eig_sym, norm2, svd, DenseMatrix, SymMatrix};
use crate::{Error, Result};

/// Keeps the `k` largest-magnitude entries; ties go to the lowest index.
pub fn top_k(x: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if k == 0 || k > n {
        return Err(Error::OutOfRange {
            what: "K",
            value: k,
            min: 1,
            max: n,
        });
    }
    if k == n {
        return Ok(x.to_vec());
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.select_nth_unstable_by(k - 1, |&a, &b| {
        x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b))
    });
    let mut out = vec![0.0; n];
    for &i in &idx[..k] {
        out[i] = x[i];
    }
    Ok(out)
}

/// Keeps a uniform random `k`-subset scaled by `n / k`.
pub fn rand_k<R: RngCore + ?Sized>(x: &[f64], k: usize, rng: &mut R) -> Result<Vec<f64>> {
    let n = x.len();
    if k == 0 || k > n {
        return Err(Error::OutOfRange {
            what: "K",
            value: k,
            min: 1,
            max: n,
        });
    }
    if k == n {
        return Ok(x.to_vec());
    }
    let scale = n as f64 / k as f64;
    let mut out = vec![0.0; n];
    for i in rand::seq::index::sample(&mut RngRef(rng), n, k).into_iter() {
        out[i] = scale * x[i];
    }
    Ok(out)
}

/// `sign(x) ||x||_q xi_s / s` with per-coordinate stochastic level rounding.
pub fn random_dithering<R: RngCore + ?Sized>(
    x: &[f64],
    levels: u32,
    norm: DitherNorm,
    rng: &mut R,
) -> Vec<f64> {
    let nrm = match norm {
        DitherNorm::L2 => norm2(x),
        DitherNorm::Linf => x.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    };
    if nrm == 0.0 {
        return vec![0.0; x.len()];
    }
    let s = f64::from(levels);
    let mut rng = RngRef(rng);
    x.iter()
        .map(|&v| {
            let t = (v.abs() / nrm * s).min(s);
            let lo = libm::floor(t);
            let p = t - lo;
            let level = if p > 0.0 && rng.random::<f64>() < p {
                lo + 1.0
            } else {
                lo
            };
            let mag = nrm * level / s;
            if v < 0.0 {
                -mag
            } else {
                mag
            }
        })
        .collect()
}

/// Unbiased stochastic rounding of each entry to a neighbouring signed
/// power of two.
pub fn natural_compression<R: RngCore + ?Sized>(x: &[f64], rng: &mut R) -> Vec<f64> {
    let mut rng = RngRef(rng);
    x.iter()
        .map(|&v| {
            if v == 0.0 || !v.is_finite() {
                return v;
            }
            let a = v.abs();
            let (frac, exp) = libm::frexp(a);
            let lo = libm::ldexp(0.5, exp);
            let mag = if frac == 0.5 {
                a
            } else {
                let hi = 2.0 * lo;
                if !hi.is_finite() {
                    lo
                } else {
                    let p_up = (a - lo) / lo;
                    if rng.random::<f64>() < p_up {
                        hi
                    } else {
                        lo
                    }
                }
            };
            if v < 0.0 {
                -mag
            } else {
                mag
            }
        })
        .collect()
}

/// Best rank-`r` approximation. Symmetric inputs use the eigendecomposition so
/// the result is symmetric even when singular values tie.
pub fn rank_r(a: &DenseMatrix, r: usize) -> Result<DenseMatrix> {
    let d = a.rows();
    if r == 0 || r > d.min(a.cols()) {
        return Err(Error::OutOfRange {
            what: "R",
            value: r,
            min: 1,
            max: d.min(a.cols()),
        });
    }
    if a.is_square() && a.is_symmetric(0.0) {
        let eig = eig_sym(&SymMatrix::new(a.clone())?)?;
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| {
            eig.eigenvalues[j]
                .abs()
                .total_cmp(&eig.eigenvalues[i].abs())
                .then(i.cmp(&j))
        });
        let mut out = DenseMatrix::zeros(d, d);
        for &t in &order[..r] {
            let lam = eig.eigenvalues[t];
            let u = eig.eigenvectors.col(t);
            for j in 0..d {
                for i in 0..d {
                    out[(i, j)] += lam * u[i] * u[j];
                }
            }
        }
        for j in 0..d {
            for i in j + 1..d {
                let m = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = m;
                out[(j, i)] = m;
            }
        }
        return Ok(out);
    }
    Ok(svd(a)?.truncated(r))
}

/// `sum_{i<=R} sigma_i Q1(a_i u_i) Q2(b_i v_i)^T / (a_i b_i (w1+1)(w2+1))`.
pub fn compose_rank_unbiased<R: RngCore + ?Sized>(
    a: &DenseMatrix,
    r: usize,
    left: &Compressor,
    right: &Compressor,
    scaling: RankScaling,
    rng: &mut R,
) -> Result<DenseMatrix> {
    let d = a.rows();
    let w1 = left.class(Shape::Vector(d))?.omega().ok_or_else(|| {
        Error::InvalidParameter(alloc::format!("{left} is not unbiased"))
    })?;
    let w2 = right.class(Shape::Vector(d))?.omega().ok_or_else(|| {
        Error::InvalidParameter(alloc::format!("{right} is not unbiased"))
    })?;
    let dec = svd(a)?;
    let mut out = DenseMatrix::zeros(d, a.cols());
    for i in 0..r.min(dec.sigma.len()) {
        let sigma = dec.sigma[i];
        if sigma == 0.0 {
            continue;
        }
        let c = match scaling {
            RankScaling::Unit => 1.0,
            RankScaling::SqrtSigma => libm::sqrt(sigma),
        };
        let u: Vec<f64> = dec.u.col(i).iter().map(|v| c * v).collect();
        let v: Vec<f64> = dec.v.col(i).iter().map(|v| c * v).collect();
        let qu = left.compress_vec(&u, rng)?;
        let qv = right.compress_vec(&v, rng)?;
        let coef = sigma / (c * c * (w1 + 1.0) * (w2 + 1.0));
        for (col, &vj) in qv.iter().enumerate() {
            if vj == 0.0 {
                continue;
            }
            for (row, &ui) in qu.iter().enumerate() {
                out[(row, col)] += coef * ui * vj;
            }
        }
    }
    Ok(out)
}

/// Sized adapter so `?Sized` generators work with APIs that require `Rng`.
struct RngRef<'a, R: RngCore + ?Sized>(&'a mut R);

impl<R: RngCore + ?Sized> RngCore for RngRef<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::frobenius_norm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn sq(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum()
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(top_k(&[3.0, -1.0, 2.0], 1).unwrap(), vec![3.0, 0.0, 0.0]);
        assert_eq!(top_k(&[3.0, -1.0, 2.0], 3).unwrap(), vec![3.0, -1.0, 2.0]);
        assert_eq!(top_k(&[1.0, -1.0, 1.0, 1.0], 2).unwrap(), vec![1.0, -1.0, 0.0, 0.0]);
        assert!(top_k(&[1.0], 0).is_err());
        assert!(top_k(&[1.0], 2).is_err());
    }

    #[test]
    fn top_k_contraction_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a = gauss(&mut rng, 16);
            for k in [1usize, 4, 8] {
                let c = top_k(&a, k).unwrap();
                let err: f64 = a.iter().zip(&c).map(|(x, y)| (x - y) * (x - y)).sum();
                assert!(err <= (1.0 - k as f64 / 16.0) * sq(&a) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn rand_k_single_entry_scaled_by_four() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = [1.0, -2.0, 3.0, 0.5];
        for _ in 0..200 {
            let c = rand_k(&a, 1, &mut rng).unwrap();
            let nz: Vec<usize> = (0..4).filter(|&i| c[i] != 0.0).collect();
            assert_eq!(nz.len(), 1);
            assert_eq!(c[nz[0]], 4.0 * a[nz[0]]);
        }
        assert_eq!(rand_k(&a, 4, &mut rng).unwrap(), a.to_vec());
    }

    /// Monte-Carlo mean within 3 sigma per coordinate, plus second moment
    /// within sampling error.
    fn check_unbiased(
        x: &[f64],
        omega: f64,
        draws: usize,
        mut f: impl FnMut(&mut ChaCha8Rng) -> Vec<f64>,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = x.len();
        let mut s1 = vec![0.0; n];
        let mut s2 = vec![0.0; n];
        let mut m2 = 0.0;
        let mut m4 = 0.0;
        for _ in 0..draws {
            let c = f(&mut rng);
            for i in 0..n {
                s1[i] += c[i];
                s2[i] += c[i] * c[i];
            }
            let q = sq(&c);
            m2 += q;
            m4 += q * q;
        }
        let t = draws as f64;
        for i in 0..n {
            let mean = s1[i] / t;
            let var = (s2[i] / t - mean * mean).max(0.0);
            let se = libm::sqrt(var / t);
            assert!((mean - x[i]).abs() <= 3.0 * se + 1e-10 * (1.0 + x[i].abs()), "coord {i}: {mean} vs {}", x[i]);
        }
        let mean2 = m2 / t;
        let se2 = libm::sqrt((m4 / t - mean2 * mean2).max(0.0) / t);
        assert!(mean2 <= (omega + 1.0) * sq(x) + 3.0 * se2 + 1e-12);
    }

    #[test]
    fn rand_k_is_unbiased() {
        let x = [1.0, -2.0, 3.0, 0.5];
        check_unbiased(&x, 3.0, 100_000, |r| rand_k(&x, 1, r).unwrap());
    }

    #[test]
    fn dithering_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(random_dithering(&[0.0; 3], 2, DitherNorm::L2, &mut rng), vec![0.0; 3]);
        // |x_i|/||x|| = 0.6, 0.8 lie on the grid of s = 5.
        let x = [3.0, -4.0];
        let c = random_dithering(&x, 5, DitherNorm::L2, &mut rng);
        assert!((c[0] - 3.0).abs() < 1e-12 && (c[1] + 4.0).abs() < 1e-12);
        let c = random_dithering(&[2.0, -1.0, 0.0, 2.0], 2, DitherNorm::Linf, &mut rng);
        assert_eq!(c, vec![2.0, -1.0, 0.0, 2.0]);
    }

    #[test]
    fn dithering_is_unbiased() {
        let mut g = ChaCha8Rng::seed_from_u64(4);
        let x = gauss(&mut g, 16);
        // min(16/16, 4/4) = 1.
        check_unbiased(&x, 1.0, 100_000, |r| random_dithering(&x, 4, DitherNorm::L2, r));
        check_unbiased(&x, 1.0, 100_000, |r| random_dithering(&x, 4, DitherNorm::Linf, r));
    }

    #[test]
    fn natural_examples_and_unbiasedness() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let exact = [0.0, 1.0, -0.25, 1024.0, -8.0];
        assert_eq!(natural_compression(&exact, &mut rng), exact.to_vec());
        for _ in 0..100 {
            let c = natural_compression(&[3.0], &mut rng)[0];
            assert!(c == 2.0 || c == 4.0);
        }
        let mut g = ChaCha8Rng::seed_from_u64(6);
        let x = gauss(&mut g, 8);
        check_unbiased(&x, 0.125, 100_000, |r| natural_compression(&x, r));
    }

    #[test]
    fn rank_r_examples() {
        let u = [1.0, 2.0, -1.0];
        let v = [0.5, 0.0, 3.0];
        let a = DenseMatrix::outer(&u, &v);
        assert!(frobenius_norm(&rank_r(&a, 1).unwrap().sub(&a).unwrap()) < 1e-12);
        let mut g = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let a = DenseMatrix::from_col_major(4, 4, gauss(&mut g, 16)).unwrap();
            let full = rank_r(&a, 4).unwrap();
            assert!(frobenius_norm(&full.sub(&a).unwrap()) < 1e-10 * (1.0 + frobenius_norm(&a)));
            let s = svd(&a).unwrap().sigma;
            for r in 1..4 {
                let err = frobenius_norm(&rank_r(&a, r).unwrap().sub(&a).unwrap());
                let tail: f64 = s[r..].iter().map(|x| x * x).sum();
                assert!((err * err - tail).abs() < 1e-9 * (1.0 + tail));
                assert!(err * err <= (1.0 - r as f64 / 4.0) * sq(a.as_slice()) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn rank_r_keeps_symmetry_with_tied_singular_values() {
        let a = SymMatrix::diag(&[2.0, -2.0, 1.0]).into_dense();
        let c = rank_r(&a, 1).unwrap();
        assert!(c.is_symmetric(0.0));
        let err = frobenius_norm(&c.sub(&a).unwrap());
        assert!((err * err - 5.0).abs() < 1e-12);
    }

    #[test]
    fn composed_with_identities_is_rank_r() {
        let mut g = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let a = DenseMatrix::from_col_major(4, 4, gauss(&mut g, 16)).unwrap();
            for scaling in [RankScaling::Unit, RankScaling::SqrtSigma] {
                let c = compose_rank_unbiased(
                    &a,
                    2,
                    &Compressor::Identity,
                    &Compressor::Identity,
                    scaling,
                    &mut g,
                )
                .unwrap();
                let r = rank_r(&a, 2).unwrap();
                assert!(frobenius_norm(&c.sub(&r).unwrap()) < 1e-10);
            }
        }
    }

    #[test]
    fn composed_contraction_monte_carlo() {
        let mut g = ChaCha8Rng::seed_from_u64(9);
        let q = Compressor::RandK { k: 2 };
        // omega = 1 for both inner compressors: delta = 1 / (4 * 4).
        let delta = 1.0 / 16.0;
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        let mut sq_terms = Vec::new();
        for _ in 0..1000 {
            let a = DenseMatrix::from_col_major(4, 4, gauss(&mut g, 16)).unwrap();
            let c = compose_rank_unbiased(&a, 1, &q, &q, RankScaling::Unit, &mut g).unwrap();
            let e = frobenius_norm(&c.sub(&a).unwrap());
            lhs += e * e;
            rhs += (1.0 - delta) * sq(a.as_slice());
            sq_terms.push(e * e - (1.0 - delta) * sq(a.as_slice()));
        }
        let t = sq_terms.len() as f64;
        let mean = sq_terms.iter().sum::<f64>() / t;
        let var = sq_terms.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (t - 1.0);
        assert!(lhs <= rhs + 3.0 * libm::sqrt(var * t), "{lhs} vs {rhs}");
    }
}
