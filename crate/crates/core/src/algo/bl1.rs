//! BL1: basis learning with bidirectional compression.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    check_probability, check_rate, coin, compress_grid, default_rate, ensure_finite, grid_shape,
    map_clients, mean_of, rel_dist, rel_vec_dist, sub, BasisSpec, BuiltBases, Common, Direction,
    Executor, InvariantCheck, MessageSpec, Method, RoundCost, ShiftInit, Trigger,
};
use crate::basis::MatrixBasis;
use crate::compress::{BitCost, Compressor, Shape};
use crate::matrix::{eig_sym, symmetrize, DenseMatrix, SpectralDecomp};
use crate::problem::Problem;
use crate::rng::{Purpose, RngStream};
use crate::{Error, Result};

/// Which estimator the server uses in round `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum HessianTiming {
    /// `H^k`, built from messages of rounds before `k`.
    #[default]
    Lagged,
    /// `H^{k+1}`, including this round's messages about `z^k`.
    Fresh,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Bl1Config {
    pub basis: BasisSpec,
    /// Compressor applied to coefficient-grid differences.
    pub hessian: Compressor,
    /// Compressor applied to model differences on the downlink.
    pub model: Compressor,
    /// Hessian learning rate; defaults from the compressor class.
    pub alpha: Option<f64>,
    /// Model learning rate; defaults from the model compressor class.
    pub eta: Option<f64>,
    /// Probability of a full-gradient round.
    pub p: f64,
    pub timing: HessianTiming,
    pub init: ShiftInit,
    /// Send data-gradient coordinates in the data basis (`r` floats) instead
    /// of the raw gradient (`d` floats). Needs data-subspace bases.
    pub gradient_in_basis: bool,
}

impl Default for Bl1Config {
    fn default() -> Self {
        Bl1Config {
            basis: BasisSpec::Standard,
            hessian: Compressor::Identity,
            model: Compressor::Identity,
            alpha: None,
            eta: None,
            p: 1.0,
            timing: HessianTiming::Lagged,
            init: ShiftInit::Hessian,
            gradient_in_basis: false,
        }
    }
}

#[derive(Clone, Debug)]
struct Client {
    l: DenseMatrix,
    h: DenseMatrix,
}

struct Upload {
    grad: Option<Vec<f64>>,
    s_recon: DenseMatrix,
}

#[derive(Debug)]
pub struct Bl1 {
    cfg: Bl1Config,
    alpha: f64,
    eta: f64,
    common: Common,
    bases: Vec<MatrixBasis>,
    setup_floats: u64,
    clients: Vec<Client>,
    h: DenseMatrix,
    x: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
    grad_w: Vec<f64>,
    xi: bool,
    round: u64,
    lambda: f64,
    projection_active_rounds: u64,
    last_projection_active: bool,
}

impl Bl1 {
    pub fn new(cfg: Bl1Config, problem: &Problem, bases: BuiltBases, x0: &[f64], common: Common) -> Result<Self> {
        let (n, d) = (problem.n(), problem.d());
        if x0.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x0.len(),
            });
        }
        if bases.bases.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bases.bases.len(),
            });
        }
        check_probability(cfg.p)?;
        let shape = grid_shape(&bases.bases[0]);
        for b in &bases.bases {
            if b.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: b.dim(),
                });
            }
            if cfg.gradient_in_basis && b.subspace_rank().is_none() {
                return Err(Error::InvalidParameter(
                    "gradient_in_basis needs data-subspace bases".into(),
                ));
            }
        }
        cfg.hessian.validate(shape)?;
        cfg.model.validate(Shape::Vector(d))?;
        let alpha = match cfg.alpha {
            Some(a) => a,
            None => default_rate(&cfg.hessian, shape)?,
        };
        let eta = match cfg.eta {
            Some(e) => e,
            None => default_rate(&cfg.model, Shape::Vector(d))?,
        };
        check_rate("alpha", alpha)?;
        check_rate("eta", eta)?;
        let mut clients = Vec::with_capacity(n);
        for (i, b) in bases.bases.iter().enumerate() {
            let l = match cfg.init {
                ShiftInit::Hessian => b.coeffs(problem.local_data_hess(i, x0)?.as_dense())?,
                ShiftInit::Zero => DenseMatrix::zeros(d, d),
            };
            let h = b.reconstruct(&l)?;
            clients.push(Client { l, h });
        }
        let h = mean_of(clients.iter().map(|c| c.h.clone()), d, n)?;
        Ok(Bl1 {
            alpha,
            eta,
            common,
            setup_floats: bases.setup_floats,
            bases: bases.bases,
            clients,
            h,
            x: x0.to_vec(),
            z: x0.to_vec(),
            w: x0.to_vec(),
            grad_w: problem.global_grad(x0)?,
            xi: true,
            round: 0,
            lambda: problem.lambda(),
            projection_active_rounds: 0,
            last_projection_active: false,
            cfg,
        })
    }

    pub fn config(&self) -> &Bl1Config {
        &self.cfg
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Shared model `z^k`.
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// Server estimator `H^k` of the averaged data Hessian.
    pub fn hessian(&self) -> &DenseMatrix {
        &self.h
    }

    /// Rounds in which `[H]_mu` clamped at least one eigenvalue beyond roundoff.
    pub fn projection_active_rounds(&self) -> u64 {
        self.projection_active_rounds
    }

    pub fn last_projection_active(&self) -> bool {
        self.last_projection_active
    }

    /// Spectral decomposition of `[H]_s + lambda I`, projected at `mu = lambda`.
    fn projected(&self) -> Result<(SpectralDecomp, bool)> {
        let full = symmetrize(&self.h)?.with_diagonal_shift(self.lambda);
        let eig = eig_sym(&full)?;
        // Eigenvalues equal to `lambda` up to roundoff are not clamped in any
        // meaningful sense (rank-deficient data Hessians produce them).
        let top = eig.eigenvalues.last().copied().unwrap_or(0.0).abs();
        let active = eig.eigenvalues[0] < self.lambda - 1e-12 * (1.0 + top);
        Ok((eig, active))
    }

    fn gradient_bits(&self, i: usize) -> BitCost {
        let floats = if self.cfg.gradient_in_basis {
            self.bases[i].subspace_rank().unwrap_or(self.z.len())
        } else {
            self.z.len()
        };
        BitCost::floats(self.common.bits, floats)
    }
}

impl Method for Bl1 {
    fn name(&self) -> String {
        format!("bl1[{}]", self.cfg.hessian)
    }

    fn round(&self) -> u64 {
        self.round
    }

    fn iterate(&self) -> &[f64] {
        &self.x
    }

    fn step(&mut self, problem: &Problem, exec: &dyn Executor) -> Result<RoundCost> {
        let k = self.round;
        let (n, d) = (problem.n(), problem.d());
        let xi = self.xi;
        let seed = self.common.seed;
        let alpha = self.alpha;
        let lambda = self.lambda;
        let in_basis = self.cfg.gradient_in_basis;
        let hessian_c = &self.cfg.hessian;
        let bases = &self.bases;
        let z = &self.z;

        let uploads = map_clients(exec, &mut self.clients, |i, c| -> Result<Upload> {
            let basis = &bases[i];
            let grad = if xi {
                let g = problem.local_grad(i, z)?;
                Some(if in_basis {
                    let r = basis.subspace_rank().unwrap_or(d);
                    let v = basis.rotation().expect("subspace basis").leading_cols(r);
                    let data: Vec<f64> = g.iter().zip(z).map(|(gi, zi)| gi - lambda * zi).collect();
                    let coords = v.tr_matvec(&data)?;
                    let mut back = v.matvec(&coords)?;
                    super::axpy(&mut back, lambda, z);
                    back
                } else {
                    g
                })
            } else {
                None
            };
            let grid = basis.coeffs(problem.local_data_hess(i, z)?.as_dense())?;
            let diff = grid.sub(&c.l)?;
            let mut rng = RngStream::new(seed, k, i as u64, Purpose::HessianCompressor).rng();
            let s = compress_grid(hessian_c, basis, &diff, &mut rng)?;
            c.l.axpy(alpha, &s)?;
            let s_recon = basis.reconstruct(&s)?;
            c.h.axpy(alpha, &s_recon)?;
            Ok(Upload { grad, s_recon })
        });

        let mut cost = RoundCost::new(n);
        let model_bits = self.cfg.model.bit_cost(Shape::Vector(d), self.common.bits)?;
        let mut delta = DenseMatrix::zeros(d, d);
        let mut grad_sum = vec![0.0; d];
        for (i, up) in uploads.into_iter().enumerate() {
            let up = up?;
            let shape = grid_shape(&self.bases[i]);
            cost.add("hessian", Direction::Up, self.cfg.hessian.bit_cost(shape, self.common.bits)?);
            if let Some(g) = &up.grad {
                cost.add("gradient", Direction::Up, self.gradient_bits(i));
                super::axpy(&mut grad_sum, 1.0, g);
            }
            delta.axpy(1.0, &up.s_recon)?;
            cost.add("model", Direction::Down, model_bits);
            cost.add("coin", Direction::Down, BitCost::bits(1));
        }
        delta.scale(alpha / n as f64);

        if self.cfg.timing == HessianTiming::Fresh {
            self.h.axpy(1.0, &delta)?;
        }
        let (eig, active) = self.projected()?;
        let mu = self.lambda;
        let g = if xi {
            self.w.clone_from(&self.z);
            grad_sum.iter_mut().for_each(|v| *v /= n as f64);
            self.grad_w.clone_from(&grad_sum);
            grad_sum
        } else {
            let mut g = eig.apply_fn(|e| e.max(mu), &sub(&self.z, &self.w))?;
            super::axpy(&mut g, 1.0, &self.grad_w);
            g
        };
        let step = eig.apply_fn(|e| 1.0 / e.max(mu), &g)?;
        let x = sub(&self.z, &step);
        ensure_finite(&x, k, "model")?;
        if self.cfg.timing == HessianTiming::Lagged {
            self.h.axpy(1.0, &delta)?;
        }
        if !self.h.is_finite() {
            return Err(Error::Diverged {
                round: k,
                what: "Hessian estimator",
            });
        }
        self.last_projection_active = active;
        if active {
            self.projection_active_rounds += 1;
        }

        let mut rng = RngStream::server(seed, k, Purpose::ModelCompressor).rng();
        let v = self.cfg.model.compress_vec(&sub(&x, &self.z), &mut rng)?;
        super::axpy(&mut self.z, self.eta, &v);
        let mut coin_rng = RngStream::server(seed, k, Purpose::GradientCoin).rng();
        self.xi = coin(self.cfg.p, &mut coin_rng);
        self.x = x;
        self.round += 1;
        Ok(cost)
    }

    fn invariants(&self, problem: &Problem) -> Result<Vec<InvariantCheck>> {
        let (n, d) = (problem.n(), problem.d());
        let mean = mean_of(self.clients.iter().map(|c| c.h.clone()), d, n)?;
        let mut recon = 0.0f64;
        for (c, b) in self.clients.iter().zip(&self.bases) {
            recon = recon.max(rel_dist(&c.h, &b.reconstruct(&c.l)?)?);
        }
        Ok(vec![
            InvariantCheck::at_most("server H equals mean of client H_i", rel_dist(&self.h, &mean)?, 1e-9),
            InvariantCheck::at_most("H_i equals reconstruct(L_i)", recon, 1e-9),
            InvariantCheck::at_most(
                "cached gradient equals grad f(w)",
                rel_vec_dist(&self.grad_w, &problem.global_grad(&self.w)?),
                1e-9,
            ),
        ])
    }

    fn messages(&self) -> Vec<MessageSpec> {
        let bits = self.common.bits;
        let fl = |b: BitCost| b.total().div_ceil(bits.float_bits);
        let hess: Vec<BitCost> = self
            .bases
            .iter()
            .map(|b| self.cfg.hessian.bit_cost(grid_shape(b), bits).unwrap_or_default())
            .collect();
        let grad: Vec<BitCost> = (0..self.bases.len()).map(|i| self.gradient_bits(i)).collect();
        let model = self
            .cfg
            .model
            .bit_cost(Shape::Vector(self.z.len()), bits)
            .unwrap_or_default();
        let n = self.bases.len();
        vec![
            MessageSpec {
                label: "hessian",
                dir: Direction::Up,
                trigger: Trigger::Always,
                floats: hess.iter().map(|&b| fl(b)).collect(),
                bits: hess,
            },
            MessageSpec {
                label: "gradient",
                dir: Direction::Up,
                trigger: Trigger::GradientRound,
                floats: grad.iter().map(|&b| fl(b)).collect(),
                bits: grad,
            },
            MessageSpec {
                label: "model",
                dir: Direction::Down,
                trigger: Trigger::Always,
                floats: vec![fl(model); n],
                bits: vec![model; n],
            },
            MessageSpec {
                label: "coin",
                dir: Direction::Down,
                trigger: Trigger::Always,
                floats: vec![0; n],
                bits: vec![BitCost::bits(1); n],
            },
        ]
    }

    fn setup_bits(&self) -> u64 {
        self.common.bits.floats(self.setup_floats as usize)
    }
}
