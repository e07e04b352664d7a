//! Optimization methods as per-round state transitions.
//!
//! Every method implements [`Method`]: one call to [`Method::step`] runs a
//! full round (server broadcast, client work, server aggregation) and returns
//! the bits exchanged. Client work fans out through an [`Executor`]; results
//! are always aggregated in ascending client order, so the floating-point
//! result does not depend on the executor.

mod bl1;
mod bl2;
mod bl3;
mod config;
mod first_order;
pub mod lemma;
mod newton;

pub use bl1::{Bl1, Bl1Config, HessianTiming};
pub use bl2::{Bl2, Bl2Config};
pub use bl3::{Bl3, Bl3Config, Bl3Option};
pub use config::{build, build_bases, fednl_adapter, BasisSpec, BuiltBases, MethodConfig, ShiftInit};
pub use first_order::{Diana, DianaConfig, Gd, GdConfig};
pub use newton::{Newton, NewtonConfig};

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::basis::{MatrixBasis, Space};
use crate::compress::{BitCost, BitModel, Compressor, CompressorClass, Shape};
use crate::matrix::{DenseMatrix, SymMatrix};
use crate::problem::Problem;
use crate::rng::{Purpose, RngStream};
use crate::{Error, Result};

/// Runs independent client jobs. Implementations may run them in any order
/// or concurrently but must run each exactly once.
pub trait Executor: Sync {
    fn run(&self, jobs: &mut [&mut (dyn FnMut() + Send)]);
}

/// Runs jobs one after another on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn run(&self, jobs: &mut [&mut (dyn FnMut() + Send)]) {
        for job in jobs.iter_mut() {
            job();
        }
    }
}

/// Applies `f` to every client state through `exec`, returning the results
/// in client order.
pub fn map_clients<S, T, F>(exec: &dyn Executor, states: &mut [S], f: F) -> Vec<T>
where
    S: Send,
    T: Send,
    F: Fn(usize, &mut S) -> T + Sync,
{
    let mut out: Vec<Option<T>> = (0..states.len()).map(|_| None).collect();
    {
        let f = &f;
        let mut jobs: Vec<Box<dyn FnMut() + Send + '_>> = states
            .iter_mut()
            .zip(out.iter_mut())
            .enumerate()
            .map(|(i, (s, o))| Box::new(move || *o = Some(f(i, s))) as Box<dyn FnMut() + Send + '_>)
            .collect();
        let mut refs: Vec<&mut (dyn FnMut() + Send)> = jobs.iter_mut().map(|b| &mut **b as _).collect();
        exec.run(&mut refs);
    }
    out.into_iter()
        .map(|o| o.expect("executor skipped a client job"))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Direction {
    Up,
    Down,
}

/// Messages of one kind in one round, summed over clients.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MessageTally {
    pub label: &'static str,
    pub dir: Direction,
    pub count: u64,
    pub bits: BitCost,
}

/// Bits exchanged in one round.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RoundCost {
    pub clients: usize,
    pub messages: Vec<MessageTally>,
}

impl RoundCost {
    pub fn new(clients: usize) -> Self {
        RoundCost {
            clients,
            messages: Vec::new(),
        }
    }

    /// Records one message.
    pub fn add(&mut self, label: &'static str, dir: Direction, bits: BitCost) {
        if let Some(m) = self.messages.iter_mut().find(|m| m.label == label && m.dir == dir) {
            m.count += 1;
            m.bits += bits;
        } else {
            self.messages.push(MessageTally {
                label,
                dir,
                count: 1,
                bits,
            });
        }
    }

    pub fn total(&self, dir: Direction) -> BitCost {
        self.messages.iter().filter(|m| m.dir == dir).map(|m| m.bits).sum()
    }

    pub fn up(&self) -> BitCost {
        self.total(Direction::Up)
    }

    pub fn down(&self) -> BitCost {
        self.total(Direction::Down)
    }

    /// Average upload bits per client.
    pub fn up_per_node(&self) -> f64 {
        self.up().total() as f64 / self.clients as f64
    }

    pub fn down_per_node(&self) -> f64 {
        self.down().total() as f64 / self.clients as f64
    }

    pub fn tally(&self, label: &str, dir: Direction) -> Option<&MessageTally> {
        self.messages.iter().find(|m| m.label == label && m.dir == dir)
    }
}

/// When a message is sent, per client.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Trigger {
    /// Every client every round.
    Always,
    /// Every participating client.
    Participant,
    /// Clients whose gradient coin is 1 this round.
    GradientRound,
}

/// Analytic size of one message kind, for one client.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MessageSpec {
    pub label: &'static str,
    pub dir: Direction,
    pub trigger: Trigger,
    /// Per-client sizes in client order; entries differ only when bases do.
    pub bits: Vec<BitCost>,
    /// Number of floats in the message, where that is meaningful.
    pub floats: Vec<u64>,
}

/// One evaluated invariant.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct InvariantCheck {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl InvariantCheck {
    /// Passes when `measured <= bound`.
    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        InvariantCheck {
            name: name.into(),
            measured,
            bound,
            pass: measured <= bound,
        }
    }

    /// Passes when `measured >= bound`.
    pub fn at_least(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        InvariantCheck {
            name: name.into(),
            measured,
            bound,
            pass: measured >= bound,
        }
    }
}

/// Settings shared by all methods.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Common {
    pub seed: u64,
    pub bits: BitModel,
}

/// A method in progress.
pub trait Method: Send {
    fn name(&self) -> String;

    /// Rounds completed.
    fn round(&self) -> u64;

    /// The server's current model `x^k`.
    fn iterate(&self) -> &[f64];

    fn step(&mut self, problem: &Problem, exec: &dyn Executor) -> Result<RoundCost>;

    /// State invariants evaluated against the problem.
    fn invariants(&self, problem: &Problem) -> Result<Vec<InvariantCheck>>;

    /// Analytic message sizes.
    fn messages(&self) -> Vec<MessageSpec>;

    /// One-time bits spent before round 0, summed over clients.
    fn setup_bits(&self) -> u64 {
        0
    }
}

/// Learning rate from the compressor class: `1` for contractive kinds and
/// `1 / (omega + 1)` for unbiased ones.
pub fn default_rate(c: &Compressor, shape: Shape) -> Result<f64> {
    Ok(match c.class(shape)? {
        CompressorClass::Unbiased { omega } => 1.0 / (omega + 1.0),
        _ => 1.0,
    })
}

pub(crate) fn grid_shape(basis: &MatrixBasis) -> Shape {
    match basis.space() {
        Space::Full => Shape::Matrix(basis.dim()),
        Space::Symmetric => Shape::Symmetric(basis.dim()),
    }
}

/// Compresses a coefficient grid in the basis's own space.
pub(crate) fn compress_grid(
    c: &Compressor,
    basis: &MatrixBasis,
    g: &DenseMatrix,
    rng: &mut ChaCha8Rng,
) -> Result<DenseMatrix> {
    match basis.space() {
        Space::Full => c.compress_mat(g, rng),
        Space::Symmetric => Ok(c.compress_sym(&SymMatrix::from_lower(g)?, rng)?.into_dense()),
    }
}

/// Uniform subset of `tau` clients without replacement, ascending.
pub fn sample_participants(n: usize, tau: usize, seed: u64, round: u64) -> Vec<usize> {
    if tau >= n {
        return (0..n).collect();
    }
    let mut rng = RngStream::server(seed, round, Purpose::Participation).rng();
    let mut s = rand::seq::index::sample(&mut rng, n, tau).into_vec();
    s.sort_unstable();
    s
}

pub(crate) fn coin(p: f64, rng: &mut ChaCha8Rng) -> bool {
    rng.random::<f64>() < p
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(alloc::format!("p must lie in (0, 1], got {p}")));
    }
    Ok(())
}

pub(crate) fn check_rate(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidParameter(alloc::format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

pub(crate) fn ensure_finite(v: &[f64], round: u64, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { round, what })
    }
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += alpha * b;
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub(crate) fn mean_of(mats: impl Iterator<Item = DenseMatrix>, d: usize, n: usize) -> Result<DenseMatrix> {
    let mut acc = DenseMatrix::zeros(d, d);
    for m in mats {
        acc.axpy(1.0, &m)?;
    }
    acc.scale(1.0 / n as f64);
    Ok(acc)
}

/// `||A - B||_F / (1 + ||B||_F)`.
pub(crate) fn rel_dist(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    Ok(a.sub(b)?.frobenius_norm() / (1.0 + b.frobenius_norm()))
}

pub(crate) fn rel_vec_dist(a: &[f64], b: &[f64]) -> f64 {
    let diff = sub(a, b);
    crate::matrix::norm2(&diff) / (1.0 + crate::matrix::norm2(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn map_clients_preserves_order() {
        let mut states = vec![1, 2, 3, 4];
        let out = map_clients(&Sequential, &mut states, |i, s| {
            *s *= 10;
            i + *s
        });
        assert_eq!(out, vec![10, 21, 32, 43]);
        assert_eq!(states, vec![10, 20, 30, 40]);
    }

    #[test]
    fn participants_have_fixed_size() {
        for round in 0..50 {
            let s = sample_participants(10, 3, 7, round);
            assert_eq!(s.len(), 3);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&i| i < 10));
        }
        assert_eq!(sample_participants(4, 4, 1, 0), vec![0, 1, 2, 3]);
    }

    #[test]
    fn participation_marginal_is_tau_over_n() {
        let (n, tau, rounds) = (8, 3, 20_000u64);
        let mut hits = [0u64; 8];
        for k in 0..rounds {
            for i in sample_participants(n, tau, 11, k) {
                hits[i] += 1;
            }
        }
        let p = tau as f64 / n as f64;
        let se = libm::sqrt(p * (1.0 - p) / rounds as f64);
        for h in hits {
            assert!((h as f64 / rounds as f64 - p).abs() < 4.0 * se);
        }
    }

    #[test]
    fn round_cost_merges_labels() {
        let mut c = RoundCost::new(2);
        c.add("g", Direction::Up, BitCost::bits(3));
        c.add("g", Direction::Up, BitCost::bits(5));
        c.add("v", Direction::Down, BitCost::bits(1));
        assert_eq!(c.tally("g", Direction::Up).unwrap().count, 2);
        assert_eq!(c.up().total(), 8);
        assert_eq!(c.up_per_node(), 4.0);
        assert_eq!(c.down_per_node(), 0.5);
    }

    #[test]
    fn default_rates_follow_class() {
        assert_eq!(default_rate(&Compressor::TopK { k: 2 }, Shape::Matrix(3)).unwrap(), 1.0);
        let r = default_rate(&Compressor::RandK { k: 3 }, Shape::Matrix(3)).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-15);
    }
}
