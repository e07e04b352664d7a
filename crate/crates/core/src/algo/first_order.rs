//! First-order baselines: gradient descent and DIANA.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    ensure_finite, map_clients, max_abs_diff, Common, Direction, Executor, InvariantCheck,
    MessageSpec, Method, RoundCost, Trigger,
};
use crate::compress::{BitCost, Compressor, DitherNorm, Shape};
use crate::matrix::{eig_sym, norm2};
use crate::problem::Problem;
use crate::rng::{Purpose, RngStream};
use crate::{Error, Result};

/// Largest eigenvalue of `grad^2 f(x0)`.
pub fn smoothness_at(problem: &Problem, x0: &[f64]) -> Result<f64> {
    let eig = eig_sym(&problem.global_hess(x0)?)?;
    Ok(*eig.eigenvalues.last().expect("nonempty spectrum"))
}

#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GdConfig {
    /// Step size; `1 / L` with `L = lambda_max(grad^2 f(x0))` when unset.
    pub step: Option<f64>,
}

#[derive(Debug)]
pub struct Gd {
    step: f64,
    common: Common,
    n: usize,
    x: Vec<f64>,
    round: u64,
}

impl Gd {
    pub fn new(cfg: GdConfig, problem: &Problem, x0: &[f64], common: Common) -> Result<Self> {
        let step = match cfg.step {
            Some(s) => s,
            None => 1.0 / smoothness_at(problem, x0)?,
        };
        super::check_rate("step", step)?;
        Ok(Gd {
            step,
            common,
            n: problem.n(),
            x: x0.to_vec(),
            round: 0,
        })
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }
}

impl Method for Gd {
    fn name(&self) -> String {
        "gd".into()
    }

    fn round(&self) -> u64 {
        self.round
    }

    fn iterate(&self) -> &[f64] {
        &self.x
    }

    fn step(&mut self, problem: &Problem, exec: &dyn Executor) -> Result<RoundCost> {
        let (n, d) = (problem.n(), problem.d());
        let x = &self.x;
        let mut ids: Vec<usize> = (0..n).collect();
        let grads = map_clients(exec, &mut ids, |i, _| problem.local_grad(i, x));
        let mut g = vec![0.0; d];
        let mut cost = RoundCost::new(n);
        let bits = self.common.bits;
        for gi in grads {
            super::axpy(&mut g, 1.0 / n as f64, &gi?);
            cost.add("gradient", Direction::Up, BitCost::floats(bits, d));
            cost.add("model", Direction::Down, BitCost::floats(bits, d));
        }
        super::axpy(&mut self.x, -self.step, &g);
        ensure_finite(&self.x, self.round, "model")?;
        self.round += 1;
        Ok(cost)
    }

    fn invariants(&self, _problem: &Problem) -> Result<Vec<InvariantCheck>> {
        Ok(Vec::new())
    }

    fn messages(&self) -> Vec<MessageSpec> {
        let d = self.x.len();
        let b = BitCost::floats(self.common.bits, d);
        vec![
            MessageSpec {
                label: "gradient",
                dir: Direction::Up,
                trigger: Trigger::Always,
                bits: vec![b; self.n],
                floats: vec![d as u64; self.n],
            },
            MessageSpec {
                label: "model",
                dir: Direction::Down,
                trigger: Trigger::Always,
                bits: vec![b; self.n],
                floats: vec![d as u64; self.n],
            },
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DianaConfig {
    /// Gradient compressor; random dithering with `ceil(sqrt d)` levels when
    /// unset.
    pub compressor: Option<Compressor>,
    /// Shift learning rate; `1 / (omega + 1)` when unset.
    pub alpha: Option<f64>,
    /// Step size; `1 / (L (1 + 6 omega / n))` when unset.
    pub step: Option<f64>,
}

/// Random dithering with `s = ceil(sqrt d)` levels in the 2-norm.
pub fn default_dithering(d: usize) -> Compressor {
    Compressor::Dithering {
        levels: libm::ceil(libm::sqrt(d as f64)) as u32,
        norm: DitherNorm::L2,
    }
}

#[derive(Debug)]
pub struct Diana {
    compressor: Compressor,
    alpha: f64,
    step: f64,
    common: Common,
    shifts: Vec<Vec<f64>>,
    server_shift: Vec<f64>,
    x: Vec<f64>,
    round: u64,
}

impl Diana {
    pub fn new(cfg: DianaConfig, problem: &Problem, x0: &[f64], common: Common) -> Result<Self> {
        let (n, d) = (problem.n(), problem.d());
        let compressor = cfg.compressor.unwrap_or_else(|| default_dithering(d));
        let class = compressor.class(Shape::Vector(d))?;
        let omega = class.omega().ok_or_else(|| {
            Error::InvalidParameter(format!("DIANA needs an unbiased compressor, got {compressor}"))
        })?;
        let alpha = cfg.alpha.unwrap_or(1.0 / (omega + 1.0));
        let step = match cfg.step {
            Some(s) => s,
            None => 1.0 / (smoothness_at(problem, x0)? * (1.0 + 6.0 * omega / n as f64)),
        };
        super::check_rate("alpha", alpha)?;
        super::check_rate("step", step)?;
        Ok(Diana {
            compressor,
            alpha,
            step,
            common,
            shifts: vec![vec![0.0; d]; n],
            server_shift: vec![0.0; d],
            x: x0.to_vec(),
            round: 0,
        })
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn shifts(&self) -> &[Vec<f64>] {
        &self.shifts
    }
}

impl Method for Diana {
    fn name(&self) -> String {
        format!("diana[{}]", self.compressor)
    }

    fn round(&self) -> u64 {
        self.round
    }

    fn iterate(&self) -> &[f64] {
        &self.x
    }

    fn step(&mut self, problem: &Problem, exec: &dyn Executor) -> Result<RoundCost> {
        let (n, d) = (problem.n(), problem.d());
        let k = self.round;
        let seed = self.common.seed;
        let x = &self.x;
        let comp = &self.compressor;
        let alpha = self.alpha;
        let deltas = map_clients(exec, &mut self.shifts, |i, h| -> Result<Vec<f64>> {
            let g = problem.local_grad(i, x)?;
            let diff = super::sub(&g, h);
            let mut rng = RngStream::new(seed, k, i as u64, Purpose::GradientCompressor).rng();
            let delta = comp.compress_vec(&diff, &mut rng)?;
            super::axpy(h, alpha, &delta);
            Ok(delta)
        });
        let bits = self.common.bits;
        let up = self.compressor.bit_cost(Shape::Vector(d), bits)?;
        let mut cost = RoundCost::new(n);
        let mut mean_delta = vec![0.0; d];
        for delta in deltas {
            super::axpy(&mut mean_delta, 1.0 / n as f64, &delta?);
            cost.add("gradient", Direction::Up, up);
            cost.add("model", Direction::Down, BitCost::floats(bits, d));
        }
        let mut g = self.server_shift.clone();
        super::axpy(&mut g, 1.0, &mean_delta);
        super::axpy(&mut self.server_shift, self.alpha, &mean_delta);
        super::axpy(&mut self.x, -self.step, &g);
        ensure_finite(&self.x, k, "model")?;
        self.round += 1;
        Ok(cost)
    }

    fn invariants(&self, _problem: &Problem) -> Result<Vec<InvariantCheck>> {
        let n = self.shifts.len();
        let mut mean = vec![0.0; self.x.len()];
        for h in &self.shifts {
            super::axpy(&mut mean, 1.0 / n as f64, h);
        }
        Ok(vec![
            InvariantCheck::at_most(
                "server shift equals mean client shift",
                max_abs_diff(&self.server_shift, &mean) / (1.0 + norm2(&mean)),
                1e-10,
            ),
            InvariantCheck::at_most(
                "shifts finite",
                if self.shifts.iter().flatten().all(|v| v.is_finite()) { 0.0 } else { 1.0 },
                0.0,
            ),
        ])
    }

    fn messages(&self) -> Vec<MessageSpec> {
        let d = self.x.len();
        let n = self.shifts.len();
        let bits = self.common.bits;
        let up = self.compressor.bit_cost(Shape::Vector(d), bits).unwrap_or_default();
        vec![
            MessageSpec {
                label: "gradient",
                dir: Direction::Up,
                trigger: Trigger::Always,
                bits: vec![up; n],
                floats: vec![up.total().div_ceil(bits.float_bits); n],
            },
            MessageSpec {
                label: "model",
                dir: Direction::Down,
                trigger: Trigger::Always,
                bits: vec![BitCost::floats(bits, d); n],
                floats: vec![d as u64; n],
            },
        ]
    }
}
