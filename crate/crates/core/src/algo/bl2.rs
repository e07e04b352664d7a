//! BL2: bidirectional compression with partial participation.
//!
//! The coefficient grids track the data Hessian `D_i = grad^2 f_i - lambda I`;
//! the regularizer is added back locally on both sides, so the estimator of
//! `grad^2 f_i` is `[H_i]_s + (lambda + l_i) I`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    check_probability, check_rate, coin, compress_grid, default_rate, ensure_finite, grid_shape,
    map_clients, max_abs_diff, mean_of, rel_dist, sample_participants, sub, BasisSpec, BuiltBases,
    Common, Direction, Executor, InvariantCheck, MessageSpec, Method, RoundCost, ShiftInit, Trigger,
};
use crate::basis::MatrixBasis;
use crate::compress::{BitCost, Compressor, Shape};
use crate::matrix::{norm2, symmetrize, Cholesky, DenseMatrix, SymMatrix};
use crate::problem::Problem;
use crate::rng::{Purpose, RngStream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Bl2Config {
    pub basis: BasisSpec,
    pub hessian: Compressor,
    pub model: Compressor,
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    pub p: f64,
    /// Clients per round; all of them when unset.
    pub tau: Option<usize>,
    pub init: ShiftInit,
}

impl Default for Bl2Config {
    fn default() -> Self {
        Bl2Config {
            basis: BasisSpec::Standard,
            hessian: Compressor::Identity,
            model: Compressor::Identity,
            alpha: None,
            eta: None,
            p: 1.0,
            tau: None,
            init: ShiftInit::Hessian,
        }
    }
}

#[derive(Clone, Debug)]
struct Client {
    z: Vec<f64>,
    w: Vec<f64>,
    l: DenseMatrix,
    h: DenseMatrix,
    shift: f64,
    g: Vec<f64>,
    xi: bool,
}

struct Upload {
    s_recon: DenseMatrix,
    shift_delta: f64,
    xi_sent: bool,
    g_delta: Option<Vec<f64>>,
}

/// `([H_i]_s + (lambda + l_i) I) w - grad f_i(w)`.
fn local_g(problem: &Problem, i: usize, h: &DenseMatrix, shift: f64, w: &[f64]) -> Result<Vec<f64>> {
    let est = symmetrize(h)?.with_diagonal_shift(problem.lambda() + shift);
    let mut g = est.matvec(w)?;
    super::axpy(&mut g, -1.0, &problem.local_grad(i, w)?);
    Ok(g)
}

fn shift_at(problem: &Problem, i: usize, h: &DenseMatrix, z: &[f64]) -> Result<f64> {
    Ok(symmetrize(h)?.sub(&problem.local_data_hess(i, z)?)?.frobenius_norm())
}

#[derive(Debug)]
pub struct Bl2 {
    cfg: Bl2Config,
    alpha: f64,
    eta: f64,
    tau: usize,
    common: Common,
    bases: Vec<MatrixBasis>,
    setup_floats: u64,
    clients: Vec<Client>,
    h: DenseMatrix,
    shift: f64,
    g: Vec<f64>,
    x: Vec<f64>,
    round: u64,
    last_participants: Vec<usize>,
}

impl Bl2 {
    pub fn new(cfg: Bl2Config, problem: &Problem, bases: BuiltBases, x0: &[f64], common: Common) -> Result<Self> {
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
        let tau = cfg.tau.unwrap_or(n);
        if tau == 0 || tau > n {
            return Err(Error::OutOfRange {
                what: "tau",
                value: tau,
                min: 1,
                max: n,
            });
        }
        let shape = grid_shape(&bases.bases[0]);
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
            if b.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: b.dim(),
                });
            }
            let l = match cfg.init {
                ShiftInit::Hessian => b.coeffs(problem.local_data_hess(i, x0)?.as_dense())?,
                ShiftInit::Zero => DenseMatrix::zeros(d, d),
            };
            let h = b.reconstruct(&l)?;
            let shift = shift_at(problem, i, &h, x0)?;
            let g = local_g(problem, i, &h, shift, x0)?;
            clients.push(Client {
                z: x0.to_vec(),
                w: x0.to_vec(),
                l,
                h,
                shift,
                g,
                xi: true,
            });
        }
        let h = mean_of(clients.iter().map(|c| c.h.clone()), d, n)?;
        let shift = clients.iter().map(|c| c.shift).sum::<f64>() / n as f64;
        let mut g = vec![0.0; d];
        for c in &clients {
            super::axpy(&mut g, 1.0 / n as f64, &c.g);
        }
        Ok(Bl2 {
            alpha,
            eta,
            tau,
            common,
            setup_floats: bases.setup_floats,
            bases: bases.bases,
            clients,
            h,
            shift,
            g,
            x: x0.to_vec(),
            round: 0,
            last_participants: Vec::new(),
            cfg,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    /// Clients that took part in the last round.
    pub fn last_participants(&self) -> &[usize] {
        &self.last_participants
    }

    /// `[H_i]_s + (lambda + l_i) I` for client `i`.
    pub fn client_estimator(&self, problem: &Problem, i: usize) -> Result<SymMatrix> {
        let c = &self.clients[i];
        Ok(symmetrize(&c.h)?.with_diagonal_shift(problem.lambda() + c.shift))
    }

    /// Runs one round with an explicit participant set (ascending, distinct).
    pub fn step_with(&mut self, problem: &Problem, exec: &dyn Executor, participants: &[usize]) -> Result<RoundCost> {
        let k = self.round;
        let (n, d) = (problem.n(), problem.d());
        let seed = self.common.seed;
        let lambda = problem.lambda();
        if participants.windows(2).any(|w| w[0] >= w[1]) || participants.iter().any(|&i| i >= n) {
            return Err(Error::InvalidParameter("participants must be ascending client ids".into()));
        }

        let est = symmetrize(&self.h)?.with_diagonal_shift(lambda + self.shift);
        let x = Cholesky::new(&est)?.solve(&self.g)?;
        ensure_finite(&x, k, "model")?;

        let mut cost = RoundCost::new(n);
        let model_bits = self.cfg.model.bit_cost(Shape::Vector(d), self.common.bits)?;
        let mut active = vec![false; n];
        for &i in participants {
            active[i] = true;
            let c = &mut self.clients[i];
            let mut rng = RngStream::new(seed, k, i as u64, Purpose::ModelCompressor).rng();
            let v = self.cfg.model.compress_vec(&sub(&x, &c.z), &mut rng)?;
            super::axpy(&mut c.z, self.eta, &v);
            cost.add("model", Direction::Down, model_bits);
        }

        let alpha = self.alpha;
        let p = self.cfg.p;
        let hessian_c = &self.cfg.hessian;
        let bases = &self.bases;
        let active_ref = &active;
        let uploads = map_clients(exec, &mut self.clients, |i, c| -> Result<Option<Upload>> {
            if !active_ref[i] {
                return Ok(None);
            }
            let basis = &bases[i];
            let hz = problem.local_data_hess(i, &c.z)?;
            let grid = basis.coeffs(hz.as_dense())?;
            let mut rng = RngStream::new(seed, k, i as u64, Purpose::HessianCompressor).rng();
            let s = compress_grid(hessian_c, basis, &grid.sub(&c.l)?, &mut rng)?;
            c.l.axpy(alpha, &s)?;
            let s_recon = basis.reconstruct(&s)?;
            c.h.axpy(alpha, &s_recon)?;
            let shift = symmetrize(&c.h)?.sub(&hz)?.frobenius_norm();
            let shift_delta = shift - c.shift;
            c.shift = shift;
            let mut coin_rng = RngStream::new(seed, k, i as u64, Purpose::GradientCoin).rng();
            let xi_next = coin(p, &mut coin_rng);
            let xi_sent = c.xi;
            if xi_sent {
                c.w.clone_from(&c.z);
            }
            let g = local_g(problem, i, &c.h, c.shift, &c.w)?;
            let g_delta = xi_sent.then(|| sub(&g, &c.g));
            c.g = g;
            c.xi = xi_next;
            Ok(Some(Upload {
                s_recon,
                shift_delta,
                xi_sent,
                g_delta,
            }))
        });

        let hess_bits = self.cfg.hessian.bit_cost(grid_shape(&self.bases[0]), self.common.bits)?;
        let inv_n = 1.0 / n as f64;
        for (i, up) in uploads.into_iter().enumerate() {
            let Some(up) = up? else { continue };
            let w = &self.clients[i].w;
            cost.add("hessian", Direction::Up, hess_bits);
            cost.add("shift", Direction::Up, BitCost::scalars(self.common.bits, 1));
            cost.add("coin", Direction::Up, BitCost::bits(1));
            let g_delta = match up.g_delta {
                Some(gd) if up.xi_sent => {
                    cost.add("gradient", Direction::Up, BitCost::floats(self.common.bits, d));
                    gd
                }
                _ => {
                    let mut gd = symmetrize(&up.s_recon)?.matvec(w)?;
                    gd.iter_mut().for_each(|v| *v *= alpha);
                    super::axpy(&mut gd, up.shift_delta, w);
                    gd
                }
            };
            super::axpy(&mut self.g, inv_n, &g_delta);
            self.h.axpy(alpha * inv_n, &up.s_recon)?;
            self.shift += up.shift_delta * inv_n;
        }
        ensure_finite(&self.g, k, "gradient aggregate")?;
        self.x = x;
        self.last_participants = participants.to_vec();
        self.round += 1;
        Ok(cost)
    }
}

impl Method for Bl2 {
    fn name(&self) -> String {
        format!("bl2[{}]", self.cfg.hessian)
    }

    fn round(&self) -> u64 {
        self.round
    }

    fn iterate(&self) -> &[f64] {
        &self.x
    }

    fn step(&mut self, problem: &Problem, exec: &dyn Executor) -> Result<RoundCost> {
        let s = sample_participants(problem.n(), self.tau, self.common.seed, self.round);
        self.step_with(problem, exec, &s)
    }

    fn invariants(&self, problem: &Problem) -> Result<Vec<InvariantCheck>> {
        let (n, d) = (problem.n(), problem.d());
        let lambda = problem.lambda();
        let mut g_rel = 0.0f64;
        let mut shift_err = 0.0f64;
        let mut min_eig = f64::INFINITY;
        let mut recon = 0.0f64;
        let mut g_mean = vec![0.0; d];
        for (i, c) in self.clients.iter().enumerate() {
            let want = local_g(problem, i, &c.h, c.shift, &c.w)?;
            g_rel = g_rel.max(max_abs_diff(&c.g, &want) / (1.0 + norm2(&want)));
            shift_err = shift_err.max((c.shift - shift_at(problem, i, &c.h, &c.z)?).abs());
            min_eig = min_eig.min(self.client_estimator(problem, i)?.min_eigenvalue()?);
            recon = recon.max(rel_dist(&c.h, &self.bases[i].reconstruct(&c.l)?)?);
            super::axpy(&mut g_mean, 1.0 / n as f64, &c.g);
        }
        let h_mean = mean_of(self.clients.iter().map(|c| c.h.clone()), d, n)?;
        let l_mean = self.clients.iter().map(|c| c.shift).sum::<f64>() / n as f64;
        Ok(vec![
            InvariantCheck::at_most("g_i relation", g_rel, 1e-8),
            InvariantCheck::at_most("l_i equals ||[H_i]_s - D_i(z_i)||_F", shift_err, 1e-8),
            InvariantCheck::at_least("lambda_min([H_i]_s + l_i I)", min_eig, lambda - 1e-8),
            InvariantCheck::at_most("H_i equals reconstruct(L_i)", recon, 1e-9),
            InvariantCheck::at_most("server H equals mean H_i", rel_dist(&self.h, &h_mean)?, 1e-8),
            InvariantCheck::at_most(
                "server l equals mean l_i",
                (self.shift - l_mean).abs() / (1.0 + l_mean),
                1e-8,
            ),
            InvariantCheck::at_most(
                "server g equals mean g_i",
                max_abs_diff(&self.g, &g_mean) / (1.0 + norm2(&g_mean)),
                1e-8,
            ),
        ])
    }

    fn messages(&self) -> Vec<MessageSpec> {
        let bits = self.common.bits;
        let n = self.bases.len();
        let d = self.x.len();
        let fl = |b: BitCost| b.total().div_ceil(bits.float_bits);
        let hess: Vec<BitCost> = self
            .bases
            .iter()
            .map(|b| self.cfg.hessian.bit_cost(grid_shape(b), bits).unwrap_or_default())
            .collect();
        let model = self.cfg.model.bit_cost(Shape::Vector(d), bits).unwrap_or_default();
        let spec = |label, dir, trigger, b: BitCost| MessageSpec {
            label,
            dir,
            trigger,
            floats: vec![fl(b); n],
            bits: vec![b; n],
        };
        vec![
            MessageSpec {
                label: "hessian",
                dir: Direction::Up,
                trigger: Trigger::Participant,
                floats: hess.iter().map(|&b| fl(b)).collect(),
                bits: hess,
            },
            spec("shift", Direction::Up, Trigger::Participant, BitCost::scalars(bits, 1)),
            spec("coin", Direction::Up, Trigger::Participant, BitCost::bits(1)),
            spec("gradient", Direction::Up, Trigger::GradientRound, BitCost::floats(bits, d)),
            spec("model", Direction::Down, Trigger::Participant, model),
        ]
    }

    fn setup_bits(&self) -> u64 {
        self.common.bits.floats(self.setup_floats as usize)
    }
}
