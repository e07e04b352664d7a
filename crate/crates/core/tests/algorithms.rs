use basiskit_core::algo::{
    build, build_bases, BasisSpec, Bl1, Bl1Config, Bl2, Bl2Config, Bl3, Bl3Config, Bl3Option, Common, Diana,
    DianaConfig, Direction, Gd, GdConfig, HessianTiming, Method, MethodConfig, Newton, NewtonConfig, Sequential,
};
use basiskit_core::compress::{index_bits, Compressor};
use basiskit_core::matrix::{norm2, Cholesky, DenseMatrix};
use basiskit_core::problem::{synth_lowdim, ClientShard, Loss, Problem};
use proptest::prelude::*;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Classic Newton from the global Hessian, independent of any basis code.
fn newton_oracle(p: &Problem, x0: &[f64], rounds: usize) -> Vec<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut out = vec![x.clone()];
    for _ in 0..rounds {
        let h = p.global_hess(&x).unwrap();
        let g = p.global_grad(&x).unwrap();
        let s = Cholesky::new(&h).unwrap().solve(&g).unwrap();
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi -= si;
        }
        out.push(x.clone());
    }
    out
}

fn assert_invariants(m: &dyn Method, p: &Problem) {
    for c in m.invariants(p).unwrap() {
        assert!(c.pass, "round {}: {} measured {} bound {}", m.round(), c.name, c.measured, c.bound);
    }
}

fn exact_bl1(basis: BasisSpec) -> Bl1Config {
    Bl1Config {
        basis,
        alpha: Some(1.0),
        eta: Some(1.0),
        timing: HessianTiming::Fresh,
        ..Bl1Config::default()
    }
}

#[test]
fn bl1_with_identity_compressors_is_newton() {
    let p = synth_lowdim(8, 3, 3, 25, 1e-2, 11).unwrap();
    let x0 = vec![0.0; 8];
    let oracle = newton_oracle(&p, &x0, 8);
    let bases = build_bases(BasisSpec::Standard, &p).unwrap();
    let mut m = Bl1::new(exact_bl1(BasisSpec::Standard), &p, bases, &x0, Common::default()).unwrap();
    for k in 1..=8 {
        m.step(&p, &Sequential).unwrap();
        assert!(dist(m.iterate(), &oracle[k]) < 1e-10, "round {k}");
        assert!(!m.last_projection_active());
        assert_invariants(&m, &p);
    }
}

#[test]
fn newton_step_solves_a_quadratic_at_once() {
    let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[0.5, -1.0], &[3.0, 1.0]]).unwrap();
    let shard = ClientShard::with_targets(0, a, vec![1.0, 0.0, -2.0]).unwrap();
    let p = Problem::new(vec![shard], 0.1, Loss::Squared).unwrap();
    let bases = build_bases(BasisSpec::Standard, &p).unwrap();
    let mut m = Bl1::new(exact_bl1(BasisSpec::Standard), &p, bases, &[5.0, -3.0], Common::default()).unwrap();
    m.step(&p, &Sequential).unwrap();
    assert!(norm2(&p.global_grad(m.iterate()).unwrap()) < 1e-12);
}

#[test]
fn lagged_bl1_converges_with_top_k() {
    let p = synth_lowdim(10, 3, 4, 30, 1e-2, 2).unwrap();
    let x0 = vec![0.0; 10];
    let star = p.newton_reference(&x0, 30).unwrap();
    let cfg = Bl1Config {
        hessian: Compressor::TopK { k: 10 },
        ..Bl1Config::default()
    };
    let bases = build_bases(BasisSpec::Standard, &p).unwrap();
    let mut m = Bl1::new(cfg, &p, bases, &x0, Common::default()).unwrap();
    for _ in 0..60 {
        m.step(&p, &Sequential).unwrap();
        assert_invariants(&m, &p);
    }
    let gap = p.global_value(m.iterate()).unwrap() - star.f_star;
    assert!(gap < 1e-10, "gap {gap}");
}

#[test]
fn bl1_top_k_cost_matches_the_bit_model() {
    let (d, n, k) = (6usize, 3usize, 4usize);
    let p = synth_lowdim(d, 2, n, 12, 1e-2, 5).unwrap();
    let cfg = Bl1Config {
        hessian: Compressor::TopK { k },
        p: 0.5,
        ..Bl1Config::default()
    };
    let bases = build_bases(BasisSpec::Standard, &p).unwrap();
    let mut m = Bl1::new(cfg, &p, bases, &vec![0.0; d], Common::default()).unwrap();
    let per_client = k as u64 * (64 + index_bits(d * d));
    let (mut with_grad, mut without) = (0, 0);
    for _ in 0..30 {
        let cost = m.step(&p, &Sequential).unwrap();
        assert_eq!(cost.tally("hessian", Direction::Up).unwrap().bits.total(), n as u64 * per_client);
        match cost.tally("gradient", Direction::Up) {
            Some(t) => {
                assert_eq!(t.bits.total(), (n * 64 * d) as u64);
                with_grad += 1;
            }
            None => without += 1,
        }
        assert_eq!(cost.tally("coin", Direction::Down).unwrap().bits.total(), n as u64);
        assert_invariants(&m, &p);
    }
    assert!(with_grad > 0 && without > 0);
}

#[test]
fn subspace_newton_is_lossless_and_cheaper() {
    let (d, r, n) = (20usize, 4usize, 3usize);
    let p = synth_lowdim(d, r, n, 30, 1e-3, 9).unwrap();
    let x0 = vec![0.0; d];
    let oracle = newton_oracle(&p, &x0, 6);
    let cfg = NewtonConfig {
        basis: BasisSpec::DataSubspace { tol: 1e-10 },
        gradient_in_basis: false,
    };
    let bases = build_bases(cfg.basis, &p).unwrap();
    assert_eq!(bases.setup_floats, (n * r * d) as u64);
    let mut m = Newton::new(cfg, &p, bases, &x0, Common::default()).unwrap();
    for k in 1..=6 {
        let cost = m.step(&p, &Sequential).unwrap();
        assert!(dist(m.iterate(), &oracle[k]) < 1e-8, "round {k}");
        assert_eq!(cost.up().total(), (n * (r * r + d) * 64) as u64);
    }
    let dense = NewtonConfig::default();
    let b = build_bases(dense.basis, &p).unwrap();
    let mut m = Newton::new(dense, &p, b, &x0, Common::default()).unwrap();
    let cost = m.step(&p, &Sequential).unwrap();
    assert_eq!(cost.up().total(), (n * (d * d + d) * 64) as u64);
}

#[test]
fn gradient_in_basis_is_lossless() {
    let p = synth_lowdim(12, 3, 2, 20, 1e-2, 4).unwrap();
    let x0 = vec![0.1; 12];
    let oracle = newton_oracle(&p, &x0, 4);
    let cfg = NewtonConfig {
        basis: BasisSpec::DataSubspace { tol: 1e-10 },
        gradient_in_basis: true,
    };
    let b = build_bases(cfg.basis, &p).unwrap();
    let mut m = Newton::new(cfg, &p, b, &x0, Common::default()).unwrap();
    for k in 1..=4 {
        let cost = m.step(&p, &Sequential).unwrap();
        assert!(dist(m.iterate(), &oracle[k]) < 1e-8);
        assert_eq!(cost.up().total(), 2 * (9 + 3) * 64);
    }
}

fn bl2_cfg(p: f64, tau: usize) -> Bl2Config {
    Bl2Config {
        hessian: Compressor::TopK { k: 6 },
        model: Compressor::TopK { k: 4 },
        p,
        tau: Some(tau),
        ..Bl2Config::default()
    }
}

#[test]
fn bl2_keeps_invariants_under_partial_participation() {
    let p = synth_lowdim(8, 3, 4, 20, 1e-2, 3).unwrap();
    let x0 = vec![0.0; 8];
    let star = p.newton_reference(&x0, 30).unwrap();
    let b = build_bases(BasisSpec::Standard, &p).unwrap();
    let mut m = Bl2::new(bl2_cfg(0.5, 2), &p, b, &x0, Common::default()).unwrap();
    for _ in 0..200 {
        m.step(&p, &Sequential).unwrap();
        assert_eq!(m.last_participants().len(), 2);
        assert_invariants(&m, &p);
    }
    let gap = p.global_value(m.iterate()).unwrap() - star.f_star;
    assert!(gap < 1e-6, "gap {gap}");
}

#[test]
fn bl2_round_without_participants_changes_nothing_on_clients() {
    let p = synth_lowdim(6, 2, 3, 10, 1e-2, 8).unwrap();
    let b = build_bases(BasisSpec::Standard, &p).unwrap();
    let mut m = Bl2::new(bl2_cfg(1.0, 3), &p, b, &vec![0.0; 6], Common::default()).unwrap();
    m.step(&p, &Sequential).unwrap();
    let before: Vec<_> = (0..3).map(|i| m.client_estimator(&p, i).unwrap()).collect();
    let cost = m.step_with(&p, &Sequential, &[]).unwrap();
    assert_eq!(cost.up().total(), 0);
    for (i, h) in before.iter().enumerate() {
        assert_eq!(&m.client_estimator(&p, i).unwrap(), h);
    }
    assert_invariants(&m, &p);
}

fn bl3_cfg(option: Bl3Option) -> Bl3Config {
    Bl3Config {
        hessian: Compressor::TopK { k: 10 },
        tau: Some(2),
        option,
        ..Bl3Config::default()
    }
}

#[test]
fn bl3_dominance_holds_for_both_options() {
    let p = synth_lowdim(6, 2, 4, 20, 1e-2, 6).unwrap();
    let x0 = vec![0.0; 6];
    let star = p.newton_reference(&x0, 30).unwrap();
    for option in [Bl3Option::Two, Bl3Option::One] {
        let b = build_bases(BasisSpec::Psd, &p).unwrap();
        let mut m = Bl3::new(bl3_cfg(option), &p, b, &x0, Common::default()).unwrap();
        for _ in 0..150 {
            m.step(&p, &Sequential).unwrap();
            assert_invariants(&m, &p);
        }
        let gap = p.global_value(m.iterate()).unwrap() - star.f_star;
        assert!(gap < 1e-6, "{option:?} gap {gap}");
    }
}

#[test]
fn bl3_rejects_non_psd_bases() {
    let p = synth_lowdim(4, 2, 2, 8, 1e-2, 1).unwrap();
    let b = build_bases(BasisSpec::Standard, &p).unwrap();
    assert!(Bl3::new(bl3_cfg(Bl3Option::Two), &p, b, &[0.0; 4], Common::default()).is_err());
}

#[test]
fn gd_decreases_monotonically() {
    let p = synth_lowdim(8, 8, 3, 20, 1e-2, 10).unwrap();
    let mut m = Gd::new(GdConfig::default(), &p, &[0.0; 8], Common::default()).unwrap();
    let mut f = p.global_value(m.iterate()).unwrap();
    for _ in 0..50 {
        m.step(&p, &Sequential).unwrap();
        let next = p.global_value(m.iterate()).unwrap();
        assert!(next <= f + 1e-15);
        f = next;
    }
}

#[test]
fn gd_stays_at_the_minimizer() {
    let p = synth_lowdim(5, 3, 2, 15, 1e-1, 2).unwrap();
    let star = p.newton_reference(&[0.0; 5], 30).unwrap();
    let mut m = Gd::new(GdConfig::default(), &p, &star.x_star, Common::default()).unwrap();
    for _ in 0..5 {
        m.step(&p, &Sequential).unwrap();
    }
    assert!(dist(m.iterate(), &star.x_star) < 1e-12);
}

#[test]
fn diana_with_identity_tracks_gd_and_learns_local_gradients() {
    let p = synth_lowdim(6, 4, 3, 20, 1e-1, 12).unwrap();
    let x0 = [0.0; 6];
    let star = p.newton_reference(&x0, 30).unwrap();
    let mut gd = Gd::new(GdConfig::default(), &p, &x0, Common::default()).unwrap();
    let cfg = DianaConfig {
        compressor: Some(Compressor::Identity),
        alpha: Some(1.0),
        step: Some(gd.step_size()),
    };
    let mut di = Diana::new(cfg, &p, &x0, Common::default()).unwrap();
    for _ in 0..400 {
        gd.step(&p, &Sequential).unwrap();
        di.step(&p, &Sequential).unwrap();
        assert!(dist(gd.iterate(), di.iterate()) < 1e-12);
        assert_invariants(&di, &p);
    }
    for (i, h) in di.shifts().iter().enumerate() {
        let g = p.local_grad(i, &star.x_star).unwrap();
        assert!(dist(h, &g) < 1e-6, "client {i}");
    }
}

#[test]
fn diana_with_dithering_converges() {
    let p = synth_lowdim(9, 4, 3, 20, 1e-1, 13).unwrap();
    let star = p.newton_reference(&[0.0; 9], 30).unwrap();
    let mut m = Diana::new(DianaConfig::default(), &p, &[0.0; 9], Common::default()).unwrap();
    for _ in 0..800 {
        m.step(&p, &Sequential).unwrap();
        assert_invariants(&m, &p);
    }
    assert!(p.global_value(m.iterate()).unwrap() - star.f_star < 1e-6);
}

#[test]
fn fednl_request_runs_as_bl1() {
    let p = synth_lowdim(6, 3, 3, 20, 1e-2, 14).unwrap();
    let x0 = [0.0; 6];
    let star = p.newton_reference(&x0, 30).unwrap();
    let cfg: MethodConfig = MethodConfig::Fednl(Default::default());
    let mut m = build(&cfg, &p, &x0, Common::default()).unwrap();
    assert!(m.name().starts_with("bl1"), "{}", m.name());
    for _ in 0..40 {
        m.step(&p, &Sequential).unwrap();
    }
    assert!(p.global_value(m.iterate()).unwrap() - star.f_star < 1e-10);
}

#[test]
fn seeded_runs_are_reproducible() {
    let p = synth_lowdim(6, 2, 4, 12, 1e-2, 15).unwrap();
    let run = || {
        let b = build_bases(BasisSpec::Standard, &p).unwrap();
        let common = Common { seed: 77, ..Common::default() };
        let mut m = Bl2::new(bl2_cfg(0.5, 2), &p, b, &[0.0; 6], common).unwrap();
        for _ in 0..20 {
            m.step(&p, &Sequential).unwrap();
        }
        m.iterate().to_vec()
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bl2_invariants_hold_for_any_seed(seed in 0u64..1000, tau in 1usize..=4, p_coin in 0.2f64..1.0) {
        let p = synth_lowdim(5, 2, 4, 10, 1e-2, seed).unwrap();
        let b = build_bases(BasisSpec::Standard, &p).unwrap();
        let common = Common { seed, ..Common::default() };
        let mut m = Bl2::new(bl2_cfg(p_coin, tau), &p, b, &[0.0; 5], common).unwrap();
        for _ in 0..15 {
            m.step(&p, &Sequential).unwrap();
            for c in m.invariants(&p).unwrap() {
                prop_assert!(c.pass, "{} {} > {}", c.name, c.measured, c.bound);
            }
        }
    }

    #[test]
    fn bl3_invariants_hold_for_any_seed(seed in 0u64..1000, c in 0.01f64..1.0) {
        let p = synth_lowdim(4, 2, 3, 10, 1e-2, seed).unwrap();
        let b = build_bases(BasisSpec::Psd, &p).unwrap();
        let cfg = Bl3Config { c, tau: Some(2), hessian: Compressor::RandK { k: 4 }, ..Bl3Config::default() };
        let common = Common { seed, ..Common::default() };
        let mut m = Bl3::new(cfg, &p, b, &[0.0; 4], common).unwrap();
        for _ in 0..15 {
            m.step(&p, &Sequential).unwrap();
            for ch in m.invariants(&p).unwrap() {
                prop_assert!(ch.pass, "{} {} vs {}", ch.name, ch.measured, ch.bound);
            }
        }
    }
}
