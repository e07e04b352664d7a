//! Monte-Carlo certification of declared compressor classes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use super::{Compressor, CompressorClass, Shape};
use crate::matrix::{DenseMatrix, SymMatrix};
use crate::rng::{Purpose, RngStream};
use crate::{Error, Result};

/// One inequality evaluated on one input.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Check {
    pub law: String,
    pub input: String,
    pub statistic: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CertifyReport {
    pub compressor: String,
    pub declared: String,
    pub trials: usize,
    /// Largest `(statistic - bound) / bound` over all checks, floored at 0.
    pub max_violation: f64,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

const RANDOM_INPUTS: usize = 1000;

/// Checks `declared` (or the compressor's own class when `None`) on
/// adversarial and Gaussian inputs of `shape`.
///
/// Deterministic kinds are checked per input with a `1e-12` relative slack.
/// Stochastic kinds draw `trials` compressions of each input and compare the
/// empirical mean against `bound * (1 + 4 / sqrt(trials))`; unbiasedness is
/// checked as `||mean - A||^2 <= 9 tr(Cov) / trials`.
pub fn certify(
    compressor: &Compressor,
    shape: Shape,
    declared: Option<CompressorClass>,
    trials: usize,
    seed: u64,
) -> Result<CertifyReport> {
    if trials < 1000 {
        return Err(Error::InvalidParameter(format!(
            "certification needs at least 1000 trials, got {trials}"
        )));
    }
    let own = compressor.class(shape)?;
    let declared = declared.unwrap_or(own);
    let deterministic = compressor.is_deterministic();
    let n = shape.entries();
    let mut notes = Vec::new();
    if let Compressor::TopK { k } = compressor {
        notes.push(format!("top-k contraction parameter is K/N = {k}/{n}"));
    }

    let mut inputs: Vec<(String, Vec<f64>)> = adversarial(shape);
    let random_count = if deterministic { RANDOM_INPUTS } else { 8 };
    let mut data_rng = RngStream::new(seed, 0, 0, Purpose::Certify).rng();
    for t in 0..random_count {
        let raw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut data_rng)).collect();
        inputs.push((format!("gaussian#{t}"), raw));
    }

    let mut checks = Vec::new();
    let slack = if deterministic {
        1e-12
    } else {
        4.0 / libm::sqrt(trials as f64)
    };
    for (idx, (name, x)) in inputs.iter().enumerate() {
        let draws = if deterministic { 1 } else { trials };
        let mut rng = RngStream::new(seed, 1, idx as u64, Purpose::Certify).rng();
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        let mut err_sum = 0.0;
        let mut out_sum = 0.0;
        let mut mean = vec![0.0; n];
        for _ in 0..draws {
            let c = apply(compressor, shape, x, &mut rng)?;
            let mut e = 0.0;
            let mut o = 0.0;
            for i in 0..n {
                e += (x[i] - c[i]) * (x[i] - c[i]);
                o += c[i] * c[i];
                mean[i] += c[i];
            }
            err_sum += e;
            out_sum += o;
        }
        let t = draws as f64;
        mean.iter_mut().for_each(|m| *m /= t);
        if let Some(delta) = declared.delta() {
            let bound = (1.0 - delta) * norm2;
            checks.push(make_check("contraction", name, err_sum / t, bound, slack, norm2));
        }
        if let Some(omega) = declared.omega() {
            let bound = (omega + 1.0) * norm2;
            checks.push(make_check("second moment", name, out_sum / t, bound, slack, norm2));
            let bias: f64 = mean.iter().zip(x).map(|(m, v)| (m - v) * (m - v)).sum();
            let mean_sq: f64 = mean.iter().map(|m| m * m).sum();
            let trace_cov = if draws > 1 {
                (out_sum / t - mean_sq).max(0.0) * t / (t - 1.0)
            } else {
                0.0
            };
            let bound = 9.0 * trace_cov / t;
            checks.push(make_check("mean", name, bias, bound, 1e-12, norm2));
        }
    }
    let mut max_violation = 0.0f64;
    for c in &checks {
        if c.statistic > c.bound {
            max_violation = max_violation.max((c.statistic - c.bound) / c.bound.max(f64::MIN_POSITIVE));
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(CertifyReport {
        compressor: format!("{compressor}"),
        declared: format!("{declared:?}"),
        trials,
        max_violation,
        pass,
        checks,
        notes,
    })
}

fn make_check(law: &str, input: &str, statistic: f64, bound: f64, slack: f64, scale: f64) -> Check {
    // Absolute floor keeps exact-zero bounds from failing on rounding.
    let limit = bound * (1.0 + slack) + 1e-14 * scale;
    Check {
        law: law.into(),
        input: input.into(),
        statistic,
        bound,
        pass: statistic <= limit,
    }
}

/// Inputs on which sparsifiers and low-rank maps attain their worst ratios.
fn adversarial(shape: Shape) -> Vec<(String, Vec<f64>)> {
    let n = shape.entries();
    let mut out = vec![
        ("all-ones".into(), vec![1.0; n]),
        (
            "alternating".into(),
            (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect(),
        ),
    ];
    let mut spike = vec![0.0; n];
    spike[n - 1] = 1.0;
    out.push(("spike".into(), spike));
    match shape {
        Shape::Matrix(d) => {
            out.push(("identity".into(), DenseMatrix::identity(d).into_vec()));
        }
        Shape::Symmetric(d) => {
            out.push(("identity".into(), super::iso_pack(&SymMatrix::identity(d))));
        }
        Shape::Vector(_) => {}
    }
    out
}

/// Applies the compressor to an input stored in the Frobenius-isometric
/// layout of `shape`.
fn apply(
    c: &Compressor,
    shape: Shape,
    x: &[f64],
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<f64>> {
    match shape {
        Shape::Vector(_) => c.compress_vec(x, rng),
        Shape::Matrix(d) => {
            let a = DenseMatrix::from_col_major(d, d, x.to_vec())?;
            Ok(c.compress_mat(&a, rng)?.into_vec())
        }
        Shape::Symmetric(d) => {
            let a = super::iso_unpack(x, d);
            Ok(super::iso_pack(&c.compress_sym(&a, rng)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::boxed::Box;

    #[test]
    fn identity_passes_with_zero_violation() {
        let r = certify(&Compressor::Identity, Shape::Matrix(3), None, 1000, 1).unwrap();
        assert!(r.pass);
        assert_eq!(r.max_violation, 0.0);
    }

    #[test]
    fn top1_overclaim_fails_on_all_ones() {
        let r = certify(
            &Compressor::TopK { k: 1 },
            Shape::Matrix(2),
            Some(CompressorClass::Contractive { delta: 0.5 }),
            1000,
            2,
        )
        .unwrap();
        assert!(!r.pass);
        let ones = r
            .checks
            .iter()
            .find(|c| c.input == "all-ones")
            .unwrap();
        assert!((ones.statistic - 3.0).abs() < 1e-12);
        assert!((ones.bound - 2.0).abs() < 1e-12);
        assert!(!ones.pass);
        let honest = certify(&Compressor::TopK { k: 1 }, Shape::Matrix(2), None, 1000, 2).unwrap();
        assert!(honest.pass);
    }

    #[test]
    fn rand1_on_four_entries_passes() {
        let r = certify(
            &Compressor::RandK { k: 1 },
            Shape::Matrix(2),
            Some(CompressorClass::Unbiased { omega: 3.0 }),
            1000,
            3,
        )
        .unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn underclaimed_variance_fails() {
        let r = certify(
            &Compressor::RandK { k: 1 },
            Shape::Vector(8),
            Some(CompressorClass::Unbiased { omega: 1.0 }),
            4000,
            4,
        )
        .unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn shipped_classes_certify() {
        let kinds = [
            (Compressor::TopK { k: 3 }, Shape::Symmetric(4)),
            (Compressor::RankR { r: 2 }, Shape::Matrix(4)),
            (Compressor::RankR { r: 1 }, Shape::Symmetric(3)),
            (Compressor::Natural, Shape::Vector(6)),
            (
                Compressor::Dithering {
                    levels: 2,
                    norm: super::super::DitherNorm::L2,
                },
                Shape::Vector(9),
            ),
            (
                Compressor::ComposedRank {
                    r: 1,
                    left: Box::new(Compressor::RandK { k: 2 }),
                    right: Box::new(Compressor::Natural),
                    scaling: super::super::RankScaling::Unit,
                },
                Shape::Matrix(4),
            ),
            (
                Compressor::symmetrized(Compressor::RankR { r: 1 }),
                Shape::Symmetric(3),
            ),
        ];
        for (c, shape) in kinds {
            let r = certify(&c, shape, None, 1000, 5).unwrap();
            assert!(r.pass, "{c}: {:?}", r.checks.iter().find(|c| !c.pass));
        }
    }
}
