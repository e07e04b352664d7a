//! Verification suites: compressor laws, basis algebra, single-step lemmas,
//! Newton equivalence, method invariants and cost accounting.

use std::fmt;

use basiskit_core::algo::lemma::{check_contractive, check_unbiased};
use basiskit_core::algo::{
    build, build_bases, BasisSpec, Bl1, Bl1Config, Bl2Config, Bl3Config, Bl3Option, Common, DianaConfig, Executor,
    GdConfig, HessianTiming, InvariantCheck, Method, MethodConfig, Newton, NewtonConfig,
};
use basiskit_core::basis::{data_subspace_basis, outer_product_rank, MatrixBasis, Space, RANK_TOL};
use basiskit_core::compress::{certify, Compressor, CompressorClass, DitherNorm, Shape};
use basiskit_core::matrix::{svd, Cholesky, DenseMatrix};
use basiskit_core::problem::{synth_lowdim, Problem};
use basiskit_core::rng::{Purpose, RngStream};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dataset::{load_a1a, logistic_problem, A1A_D};
use crate::error::Result;
use crate::harness::check_accounting;

pub type VerifyCheck = InvariantCheck;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub checks: Vec<VerifyCheck>,
    pub pass: bool,
}

impl VerifyReport {
    pub fn new(suite: impl Into<String>, checks: Vec<VerifyCheck>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        VerifyReport {
            suite: suite.into(),
            checks,
            pass,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &VerifyCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let failed = self.failures().count();
        writeln!(
            f,
            "[{}] {}: {} checks, {} failed",
            if self.pass { "PASS" } else { "FAIL" },
            self.suite,
            self.checks.len(),
            failed
        )?;
        for c in self.failures() {
            writeln!(f, "  FAIL {}: measured {:e}, bound {:e}", c.name, c.measured, c.bound)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Compressors,
    Basis,
    Lemmas,
    Newton,
    Invariants,
    Accounting,
    All,
}

pub fn verify(suite: Suite, exec: &dyn Executor) -> Result<Vec<VerifyReport>> {
    Ok(match suite {
        Suite::Compressors => vec![compressor_suite(&[2, 4, 8], 10_000)?],
        Suite::Basis => vec![basis_suite(1000, 100)?],
        Suite::Lemmas => vec![lemma_suite(10_000)?],
        Suite::Newton => vec![newton_suite(exec)?],
        Suite::Invariants => vec![invariants_suite(exec)?],
        Suite::Accounting => vec![accounting_suite(exec)?],
        Suite::All => {
            let mut v = Vec::new();
            for s in [
                Suite::Compressors,
                Suite::Basis,
                Suite::Lemmas,
                Suite::Newton,
                Suite::Invariants,
                Suite::Accounting,
            ] {
                v.extend(verify(s, exec)?);
            }
            v
        }
    })
}

/// Every shipped compressor kind on the shapes it supports at size `d`.
pub fn shipped_compressors(d: usize) -> Vec<(Compressor, Shape)> {
    let half = (d / 2).max(1);
    let vector = [
        Compressor::Identity,
        Compressor::TopK { k: half },
        Compressor::RandK { k: half },
        Compressor::Dithering { levels: 2, norm: DitherNorm::L2 },
        Compressor::Dithering { levels: 2, norm: DitherNorm::Linf },
        Compressor::Natural,
    ];
    let mut out: Vec<(Compressor, Shape)> = vector.iter().cloned().map(|c| (c, Shape::Vector(d))).collect();
    for c in [
        Compressor::TopK { k: d },
        Compressor::RandK { k: d },
        Compressor::RankR { r: 1 },
        Compressor::ComposedRank {
            r: 1,
            left: Box::new(Compressor::RandK { k: half }),
            right: Box::new(Compressor::Natural),
            scaling: Default::default(),
        },
        Compressor::ComposedRank {
            r: half,
            left: Box::new(Compressor::Dithering { levels: 2, norm: DitherNorm::L2 }),
            right: Box::new(Compressor::Dithering { levels: 2, norm: DitherNorm::L2 }),
            scaling: basiskit_core::compress::RankScaling::SqrtSigma,
        },
    ] {
        out.push((c, Shape::Matrix(d)));
    }
    for c in [
        Compressor::TopK { k: d },
        Compressor::RandK { k: d },
        Compressor::Natural,
        Compressor::symmetrized(Compressor::RankR { r: 1 }),
        Compressor::symmetrized(Compressor::TopK { k: d }),
    ] {
        out.push((c, Shape::Symmetric(d)));
    }
    out
}

fn certify_checks(c: &Compressor, shape: Shape, declared: Option<CompressorClass>, trials: usize, seed: u64) -> Result<VerifyCheck> {
    let r = certify(c, shape, declared, trials, seed)?;
    Ok(VerifyCheck {
        name: format!("{} on {:?} as {}", r.compressor, shape, r.declared),
        measured: r.max_violation,
        bound: 0.0,
        pass: r.pass,
    })
}

pub fn compressor_suite(sizes: &[usize], trials: usize) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    for &d in sizes {
        for (k, (c, shape)) in shipped_compressors(d).into_iter().enumerate() {
            checks.push(certify_checks(&c, shape, None, trials, 1000 * d as u64 + k as u64)?);
        }
    }
    Ok(VerifyReport::new("compressors", checks))
}

/// Certifies `c` against a class supplied by the caller instead of its own.
pub fn certify_declared(c: &Compressor, shape: Shape, declared: CompressorClass, trials: usize) -> Result<VerifyReport> {
    Ok(VerifyReport::new("compressors", vec![certify_checks(c, shape, Some(declared), trials, 7)?]))
}

fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn random_orthonormal(d: usize, r: usize, rng: &mut impl Rng) -> Result<DenseMatrix> {
    Ok(svd(&gaussian(d, r, rng))?.u)
}

/// Round trips on `inputs` random matrices per basis kind, spread over
/// `d in {2, 5, 10, 20}`, plus the outer-product rank check on `families`
/// random orthonormal families.
pub fn basis_suite(inputs: usize, families: usize) -> Result<VerifyReport> {
    let mut rng = RngStream::server(1, 0, Purpose::Other(20)).rng();
    let dims = [2usize, 5, 10, 20];
    let per_dim = inputs.div_ceil(dims.len());
    let mut checks = Vec::new();
    for kind in ["standard", "triangular_sym", "psd", "data_subspace"] {
        let mut worst = 0.0f64;
        for &d in &dims {
            let r = (d / 3).max(1);
            let (basis, v) = match kind {
                "standard" => (MatrixBasis::standard(d)?, None),
                "triangular_sym" => (MatrixBasis::triangular_sym(d)?, None),
                "psd" => (MatrixBasis::psd_sym(d)?, None),
                _ => {
                    let v = random_orthonormal(d, r, &mut rng)?;
                    let data = gaussian(3 * r, r, &mut rng).matmul(&v.transpose())?;
                    (MatrixBasis::subspace(&data_subspace_basis(&data, RANK_TOL)?)?, Some(v))
                }
            };
            for _ in 0..per_dim {
                let a = match &v {
                    Some(v) => v.matmul(&gaussian(r, r, &mut rng))?.matmul(&v.transpose())?,
                    None => {
                        let g = gaussian(d, d, &mut rng);
                        if basis.space() == Space::Symmetric {
                            g.add(&g.transpose())?
                        } else {
                            g
                        }
                    }
                };
                let back = basis.reconstruct(&basis.coeffs(&a)?)?;
                worst = worst.max(back.sub(&a)?.max_abs() / (1.0 + a.max_abs()));
            }
        }
        checks.push(VerifyCheck::at_most(format!("{kind}: reconstruct(coeffs(A)) = A"), worst, 1e-9));
    }
    let mut bad = 0usize;
    for _ in 0..families {
        let d = rng.random_range(2..=20usize);
        let r = rng.random_range(1..=d.min(6));
        let v = random_orthonormal(d, r, &mut rng)?;
        if outer_product_rank(&v)? != r * r {
            bad += 1;
        }
    }
    checks.push(VerifyCheck::at_most(
        format!("outer products v_t v_l^T independent ({families} families)"),
        bad as f64,
        0.0,
    ));
    Ok(VerifyReport::new("basis", checks))
}

/// Both single-step inequalities at `samples` draws on Gaussian points.
pub fn lemma_suite(samples: usize) -> Result<VerifyReport> {
    let mut rng = RngStream::server(2, 0, Purpose::Other(21)).rng();
    let mut checks = Vec::new();
    let flat = |shape: Shape| match shape {
        Shape::Vector(n) => n,
        Shape::Matrix(d) | Shape::Symmetric(d) => d * d,
    };
    let point = |shape: Shape, rng: &mut rand_chacha::ChaCha8Rng| -> Result<Vec<f64>> {
        Ok(match shape {
            Shape::Symmetric(d) => {
                let g = gaussian(d, d, rng);
                g.add(&g.transpose())?.into_vec()
            }
            s => (0..flat(s)).map(|_| StandardNormal.sample(rng)).collect(),
        })
    };
    let unbiased = [
        (Compressor::RandK { k: 2 }, Shape::Vector(8)),
        (Compressor::Natural, Shape::Vector(8)),
        (Compressor::Dithering { levels: 3, norm: DitherNorm::L2 }, Shape::Vector(8)),
        (Compressor::RandK { k: 4 }, Shape::Matrix(4)),
        (Compressor::RandK { k: 3 }, Shape::Symmetric(4)),
        (Compressor::Dithering { levels: 2, norm: DitherNorm::Linf }, Shape::Matrix(4)),
    ];
    for (k, (c, shape)) in unbiased.iter().enumerate() {
        let (z, x, y) = (point(*shape, &mut rng)?, point(*shape, &mut rng)?, point(*shape, &mut rng)?);
        let r = check_unbiased(c, *shape, &z, &x, &y, None, samples, k as u64)?;
        checks.push(lemma_check(r));
    }
    let contractive = [
        (Compressor::TopK { k: 3 }, Shape::Vector(8)),
        (Compressor::RankR { r: 1 }, Shape::Matrix(4)),
        (Compressor::TopK { k: 4 }, Shape::Symmetric(4)),
        (Compressor::symmetrized(Compressor::RankR { r: 1 }), Shape::Symmetric(4)),
        (
            Compressor::ComposedRank {
                r: 1,
                left: Box::new(Compressor::Natural),
                right: Box::new(Compressor::Natural),
                scaling: Default::default(),
            },
            Shape::Matrix(4),
        ),
        (
            Compressor::ComposedRank {
                r: 2,
                left: Box::new(Compressor::RandK { k: 2 }),
                right: Box::new(Compressor::RandK { k: 2 }),
                scaling: Default::default(),
            },
            Shape::Matrix(4),
        ),
    ];
    for (k, (c, shape)) in contractive.iter().enumerate() {
        let (z, x, y) = (point(*shape, &mut rng)?, point(*shape, &mut rng)?, point(*shape, &mut rng)?);
        let r = check_contractive(c, *shape, &z, &x, &y, samples, 100 + k as u64)?;
        checks.push(lemma_check(r));
    }
    Ok(VerifyReport::new("lemmas", checks))
}

fn lemma_check(r: basiskit_core::algo::lemma::LemmaCheck) -> VerifyCheck {
    VerifyCheck {
        name: format!("{} ({} samples, mean - 3 se <= rhs)", r.name, r.samples),
        measured: r.lhs_mean - 3.0 * r.lhs_std_err,
        bound: r.rhs,
        pass: r.pass,
    }
}

/// The first `rows` rows of a1a split across `n` clients.
pub fn a1a_subset(rows: usize, n: usize, lambda: f64) -> Result<Problem> {
    logistic_problem(&load_a1a()?.head(rows), n, Some(A1A_D), lambda)
}

fn newton_oracle(p: &Problem, x0: &[f64], rounds: usize) -> Result<Vec<Vec<f64>>> {
    let mut x = x0.to_vec();
    let mut out = vec![x.clone()];
    for _ in 0..rounds {
        let step = Cholesky::new(&p.global_hess(&x)?)?.solve(&p.global_grad(&x)?)?;
        x.iter_mut().zip(&step).for_each(|(a, b)| *a -= b);
        out.push(x.clone());
    }
    Ok(out)
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// BL1 with identity compressors, the standard basis, `alpha = eta = p = 1`
/// and the fresh estimator against classic Newton.
pub fn newton_equivalence(p: &Problem, rounds: usize, exec: &dyn Executor) -> Result<Vec<VerifyCheck>> {
    let x0 = vec![0.0; p.d()];
    let oracle = newton_oracle(p, &x0, rounds)?;
    let cfg = Bl1Config {
        alpha: Some(1.0),
        eta: Some(1.0),
        p: 1.0,
        timing: HessianTiming::Fresh,
        ..Bl1Config::default()
    };
    let mut m = Bl1::new(cfg, p, build_bases(BasisSpec::Standard, p)?, &x0, Common::default())?;
    let mut worst = 0.0f64;
    for x in oracle.iter().skip(1) {
        m.step(p, exec)?;
        worst = worst.max(max_dist(m.iterate(), x));
    }
    Ok(vec![
        VerifyCheck::at_most(format!("BL1 = Newton over {rounds} rounds (max |x_bl1 - x_newton|)"), worst, 1e-8),
        VerifyCheck::at_most("projection inactive (rounds clamped)", m.projection_active_rounds() as f64, 0.0),
    ])
}

/// Subspace-basis Newton against dense Newton, with the per-round upload
/// floats from the analytic cost model and from the counters.
pub fn subspace_saving(p: &Problem, rounds: usize, exec: &dyn Executor) -> Result<(Vec<VerifyCheck>, f64, f64)> {
    let x0 = vec![0.0; p.d()];
    let sub_cfg = NewtonConfig {
        basis: BasisSpec::DataSubspace { tol: RANK_TOL },
        gradient_in_basis: false,
    };
    let mut sub = Newton::new(sub_cfg.clone(), p, build_bases(sub_cfg.basis, p)?, &x0, Common::default())?;
    let dense_cfg = NewtonConfig::default();
    let mut dense = Newton::new(dense_cfg.clone(), p, build_bases(dense_cfg.basis, p)?, &x0, Common::default())?;
    let n = p.n() as f64;
    let per_node = |m: &Newton| -> f64 {
        m.messages()
            .iter()
            .filter(|s| s.dir == basiskit_core::algo::Direction::Up)
            .map(|s| s.floats.iter().sum::<u64>() as f64 / n)
            .sum()
    };
    let (sub_floats, dense_floats) = (per_node(&sub), per_node(&dense));
    let mut worst = 0.0f64;
    let mut accounting = 0.0f64;
    for _ in 0..rounds {
        let cs = sub.step(p, exec)?;
        let cd = dense.step(p, exec)?;
        worst = worst.max(max_dist(sub.iterate(), dense.iterate()));
        accounting += (cs.up().total() as f64 / n / 64.0 - sub_floats).abs();
        accounting += (cd.up().total() as f64 / n / 64.0 - dense_floats).abs();
        for c in check_accounting(&sub.messages(), &cs).into_iter().chain(check_accounting(&dense.messages(), &cd)) {
            if !c.pass {
                accounting += 1.0;
            }
        }
    }
    let checks = vec![
        VerifyCheck::at_most(format!("subspace Newton = dense Newton over {rounds} rounds"), worst, 1e-8),
        VerifyCheck::at_most("counted upload floats equal the analytic cost", accounting, 0.0),
        VerifyCheck::at_least("upload reduction factor", dense_floats / sub_floats, 50.0),
    ];
    Ok((checks, sub_floats, dense_floats))
}

pub fn newton_suite(exec: &dyn Executor) -> Result<VerifyReport> {
    let mut checks = newton_equivalence(&a1a_subset(400, 4, 1e-3)?, 10, exec)?;
    let p = synth_lowdim(100, 10, 4, 50, 1e-3, 4)?;
    let (c, sub, dense) = subspace_saving(&p, 6, exec)?;
    checks.extend(c);
    checks.push(VerifyCheck::at_most("subspace upload floats r^2 + d = 200", (sub - 200.0).abs(), 0.0));
    checks.push(VerifyCheck::at_most("dense upload floats d^2 + d = 10100", (dense - 10100.0).abs(), 0.0));
    Ok(VerifyReport::new("newton", checks))
}

/// Runs `rounds` rounds, keeping the worst value of every invariant.
pub fn track_invariants(m: &mut dyn Method, p: &Problem, rounds: usize, exec: &dyn Executor) -> Result<Vec<VerifyCheck>> {
    let mut worst: Vec<VerifyCheck> = Vec::new();
    for _ in 0..rounds {
        m.step(p, exec)?;
        for c in m.invariants(p)? {
            match worst.iter_mut().find(|w| w.name == c.name) {
                Some(w) => {
                    let gap = |v: &VerifyCheck| (v.measured - v.bound).abs();
                    let worse = match (w.pass, c.pass) {
                        (true, false) => true,
                        (false, true) => false,
                        (true, true) => gap(&c) < gap(w),
                        (false, false) => gap(&c) > gap(w),
                    };
                    if worse {
                        *w = c;
                    }
                }
                None => worst.push(c),
            }
        }
    }
    Ok(worst)
}

fn prefixed(label: &str, checks: Vec<VerifyCheck>) -> impl Iterator<Item = VerifyCheck> + '_ {
    checks.into_iter().map(move |mut c| {
        c.name = format!("{label}: {}", c.name);
        c
    })
}

pub fn invariants_suite(exec: &dyn Executor) -> Result<VerifyReport> {
    let p = synth_lowdim(8, 3, 4, 20, 1e-2, 21)?;
    let x0 = vec![0.0; 8];
    let mut checks = Vec::new();
    let configs = [
        (
            "bl1",
            MethodConfig::Bl1(Bl1Config {
                hessian: Compressor::TopK { k: 8 },
                p: 0.5,
                ..Bl1Config::default()
            }),
        ),
        (
            "bl2",
            MethodConfig::Bl2(Bl2Config {
                hessian: Compressor::TopK { k: 8 },
                model: Compressor::TopK { k: 4 },
                p: 0.5,
                tau: Some(2),
                ..Bl2Config::default()
            }),
        ),
        (
            "bl3 option 2",
            MethodConfig::Bl3(Bl3Config {
                hessian: Compressor::TopK { k: 8 },
                tau: Some(2),
                p: 0.5,
                ..Bl3Config::default()
            }),
        ),
        (
            "bl3 option 1",
            MethodConfig::Bl3(Bl3Config {
                hessian: Compressor::RandK { k: 12 },
                tau: Some(3),
                option: Bl3Option::One,
                ..Bl3Config::default()
            }),
        ),
    ];
    for (label, cfg) in configs {
        let mut m = build(&cfg, &p, &x0, Common { seed: 5, ..Common::default() })?;
        checks.extend(prefixed(label, track_invariants(m.as_mut(), &p, 40, exec)?));
    }
    Ok(VerifyReport::new("invariants", checks))
}

pub fn accounting_suite(exec: &dyn Executor) -> Result<VerifyReport> {
    let p = synth_lowdim(10, 3, 4, 20, 1e-2, 22)?;
    let x0 = vec![0.0; 10];
    let configs = [
        MethodConfig::Bl1(Bl1Config {
            hessian: Compressor::TopK { k: 10 },
            p: 0.5,
            ..Bl1Config::default()
        }),
        MethodConfig::Bl1(Bl1Config {
            basis: BasisSpec::DataSubspace { tol: RANK_TOL },
            hessian: Compressor::RankR { r: 1 },
            gradient_in_basis: true,
            ..Bl1Config::default()
        }),
        MethodConfig::Bl2(Bl2Config {
            hessian: Compressor::RankR { r: 2 },
            model: Compressor::TopK { k: 5 },
            p: 0.5,
            tau: Some(2),
            ..Bl2Config::default()
        }),
        MethodConfig::Bl3(Bl3Config {
            hessian: Compressor::TopK { k: 10 },
            tau: Some(3),
            ..Bl3Config::default()
        }),
        MethodConfig::Newton(NewtonConfig {
            basis: BasisSpec::DataSubspace { tol: RANK_TOL },
            gradient_in_basis: true,
        }),
        MethodConfig::Gd(GdConfig::default()),
        MethodConfig::Diana(DianaConfig::default()),
    ];
    let mut checks = Vec::new();
    for cfg in &configs {
        let mut m = build(cfg, &p, &x0, Common::default())?;
        let mut bad = 0usize;
        let mut total = 0usize;
        for _ in 0..10 {
            let cost = m.step(&p, exec)?;
            for c in check_accounting(&m.messages(), &cost) {
                total += 1;
                if !c.pass {
                    bad += 1;
                }
            }
        }
        checks.push(VerifyCheck::at_most(
            format!("{}: counters match analytic sizes ({total} comparisons)", m.name()),
            bad as f64,
            0.0,
        ));
    }
    Ok(VerifyReport::new("accounting", checks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use basiskit_core::algo::Sequential;

    #[test]
    fn standard_basis_suite_passes() {
        let r = basis_suite(40, 10).unwrap();
        assert!(r.pass, "{r}");
    }

    #[test]
    fn wrong_delta_is_a_failure_entry() {
        let r = certify_declared(&Compressor::TopK { k: 2 }, Shape::Vector(8), CompressorClass::Contractive { delta: 0.9 }, 1000).unwrap();
        assert!(!r.pass);
        assert_eq!(r.failures().count(), 1);
    }

    #[test]
    fn small_compressor_suite_passes() {
        let r = compressor_suite(&[2], 1000).unwrap();
        assert!(r.pass, "{r}");
    }

    #[test]
    fn accounting_matches() {
        let r = accounting_suite(&Sequential).unwrap();
        assert!(r.pass, "{r}");
    }
}
