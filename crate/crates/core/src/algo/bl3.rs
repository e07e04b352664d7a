//! BL3: a PSD basis of the symmetric matrices keeps every local estimator
//! above the local Hessian.
//!
//! Grids follow the halved off-diagonal convention of [`MatrixBasis`], and
//! `E = sum_{jl} B^{jl}` over all index pairs, so `A_i = recon(L_i) + 2 gamma_i E`
//! and `C_i = 2 gamma_i E`. As in BL2 the grids track the data Hessian and
//! `lambda I` is added on both sides: `g_{i,2} = C_i w_i + grad f_i(w_i) - lambda w_i`
//! and the server solves with `beta A - C + lambda I`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    check_probability, check_rate, coin, compress_grid, default_rate, ensure_finite,
    map_clients, max_abs_diff, mean_of, rel_dist, sample_participants, sub, BasisSpec, BuiltBases,
    Common, Direction, Executor, InvariantCheck, MessageSpec, Method, RoundCost, ShiftInit, Trigger,
};
use crate::basis::{MatrixBasis, Space};
use crate::compress::{BitCost, Compressor, Shape};
use crate::matrix::{norm2, Cholesky, DenseMatrix, SymMatrix};
use crate::problem::Problem;
use crate::rng::{Purpose, RngStream};
use crate::{Error, Result};

/// Where the `beta_i` ratio evaluates the Hessian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Bl3Option {
    /// At the model before this round's update, reusing the last grid.
    #[cfg_attr(feature = "serde", serde(rename = "1"))]
    One,
    /// At the freshly updated model.
    #[default]
    #[cfg_attr(feature = "serde", serde(rename = "2"))]
    Two,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Bl3Config {
    pub basis: BasisSpec,
    pub hessian: Compressor,
    pub model: Compressor,
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    pub p: f64,
    pub tau: Option<usize>,
    /// Floor for `gamma_i`.
    pub c: f64,
    pub option: Bl3Option,
    pub init: ShiftInit,
}

impl Default for Bl3Config {
    fn default() -> Self {
        Bl3Config {
            basis: BasisSpec::Psd,
            hessian: Compressor::Identity,
            model: Compressor::Identity,
            alpha: None,
            eta: None,
            p: 1.0,
            tau: None,
            c: 0.1,
            option: Bl3Option::Two,
            init: ShiftInit::Hessian,
        }
    }
}

#[derive(Clone, Debug)]
struct Client {
    z: Vec<f64>,
    w: Vec<f64>,
    l: DenseMatrix,
    gamma: f64,
    beta: f64,
    /// Model at which `beta` bounds the Hessian ratio.
    beta_point: Vec<f64>,
    a: DenseMatrix,
    c: DenseMatrix,
    g1: Vec<f64>,
    g2: Vec<f64>,
    xi: bool,
    /// `h(D_i(grid_point))`, refreshed whenever the client takes part.
    last_grid: DenseMatrix,
    grid_point: Vec<f64>,
}

struct Upload {
    dl_recon: DenseMatrix,
    dgamma: f64,
    beta: f64,
    xi_sent: bool,
    deltas: Option<(Vec<f64>, Vec<f64>)>,
}

fn gamma_of(l: &DenseMatrix, c: f64) -> f64 {
    c.max(l.max_abs())
}

/// `max_jl (G_jl + 2 gamma) / (L_jl + 2 gamma)`.
fn beta_of(grid: &DenseMatrix, l: &DenseMatrix, gamma: f64, c: f64) -> Result<f64> {
    let mut beta = f64::NEG_INFINITY;
    for (g, lv) in grid.as_slice().iter().zip(l.as_slice()) {
        let den = lv + 2.0 * gamma;
        if den < c * (1.0 - 1e-12) {
            return Err(Error::Contract(format!(
                "beta denominator {den:e} fell below c = {c:e}"
            )));
        }
        beta = beta.max((g + 2.0 * gamma) / den);
    }
    Ok(beta)
}

fn g2_of(problem: &Problem, i: usize, c: &DenseMatrix, w: &[f64]) -> Result<Vec<f64>> {
    let mut g = c.matvec(w)?;
    super::axpy(&mut g, 1.0, &problem.local_data_grad(i, w)?);
    Ok(g)
}

#[derive(Debug)]
pub struct Bl3 {
    cfg: Bl3Config,
    alpha: f64,
    eta: f64,
    tau: usize,
    common: Common,
    bases: Vec<MatrixBasis>,
    sums: Vec<DenseMatrix>,
    setup_floats: u64,
    clients: Vec<Client>,
    betas: Vec<f64>,
    beta: f64,
    a: DenseMatrix,
    c: DenseMatrix,
    g1: Vec<f64>,
    g2: Vec<f64>,
    x: Vec<f64>,
    round: u64,
    last_participants: Vec<usize>,
}

impl Bl3 {
    pub fn new(cfg: Bl3Config, problem: &Problem, bases: BuiltBases, x0: &[f64], common: Common) -> Result<Self> {
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
        if !(cfg.c > 0.0 && cfg.c.is_finite()) {
            return Err(Error::InvalidParameter(format!("c must be positive, got {}", cfg.c)));
        }
        let tau = cfg.tau.unwrap_or(n);
        if tau == 0 || tau > n {
            return Err(Error::OutOfRange {
                what: "tau",
                value: tau,
                min: 1,
                max: n,
            });
        }
        for b in &bases.bases {
            if b.space() != Space::Symmetric || !b.is_psd() {
                return Err(Error::InvalidParameter(
                    "BL3 needs a PSD basis of the symmetric matrices".into(),
                ));
            }
            if b.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: b.dim(),
                });
            }
        }
        let shape = Shape::Symmetric(d);
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

        let sums = bases
            .bases
            .iter()
            .map(|b| b.element_sum())
            .collect::<Result<Vec<_>>>()?;
        let mut clients = Vec::with_capacity(n);
        for (i, b) in bases.bases.iter().enumerate() {
            let grid = b.coeffs(problem.local_data_hess(i, x0)?.as_dense())?;
            let l = match cfg.init {
                ShiftInit::Hessian => grid.clone(),
                ShiftInit::Zero => DenseMatrix::zeros(d, d),
            };
            let gamma = gamma_of(&l, cfg.c);
            let mut a = b.reconstruct(&l)?;
            a.axpy(2.0 * gamma, &sums[i])?;
            let c = sums[i].scaled(2.0 * gamma);
            let beta = beta_of(&grid, &l, gamma, cfg.c)?;
            let g1 = a.matvec(x0)?;
            let g2 = g2_of(problem, i, &c, x0)?;
            clients.push(Client {
                z: x0.to_vec(),
                w: x0.to_vec(),
                l,
                gamma,
                beta,
                beta_point: x0.to_vec(),
                a,
                c,
                g1,
                g2,
                xi: true,
                last_grid: grid,
                grid_point: x0.to_vec(),
            });
        }
        let a = mean_of(clients.iter().map(|c| c.a.clone()), d, n)?;
        let c = mean_of(clients.iter().map(|c| c.c.clone()), d, n)?;
        let mut g1 = vec![0.0; d];
        let mut g2 = vec![0.0; d];
        for cl in &clients {
            super::axpy(&mut g1, 1.0 / n as f64, &cl.g1);
            super::axpy(&mut g2, 1.0 / n as f64, &cl.g2);
        }
        let betas: Vec<f64> = clients.iter().map(|c| c.beta).collect();
        let beta = betas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Bl3 {
            alpha,
            eta,
            tau,
            common,
            setup_floats: bases.setup_floats,
            bases: bases.bases,
            sums,
            clients,
            betas,
            beta,
            a,
            c,
            g1,
            g2,
            x: x0.to_vec(),
            round: 0,
            last_participants: Vec::new(),
            cfg,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn last_participants(&self) -> &[usize] {
        &self.last_participants
    }

    /// `beta A - C + lambda I`.
    pub fn server_hessian(&self, lambda: f64) -> Result<SymMatrix> {
        let mut h = self.a.scaled(self.beta);
        h.axpy(-1.0, &self.c)?;
        Ok(SymMatrix::from_lower(&h)?.with_diagonal_shift(lambda))
    }

    /// `H_i = beta A_i - C_i` for client `i`, estimating the data Hessian.
    pub fn client_estimator(&self, i: usize) -> Result<SymMatrix> {
        let cl = &self.clients[i];
        let mut h = cl.a.scaled(self.beta);
        h.axpy(-1.0, &cl.c)?;
        SymMatrix::from_lower(&h)
    }

    pub fn step_with(&mut self, problem: &Problem, exec: &dyn Executor, participants: &[usize]) -> Result<RoundCost> {
        let k = self.round;
        let (n, d) = (problem.n(), problem.d());
        let seed = self.common.seed;
        if participants.windows(2).any(|w| w[0] >= w[1]) || participants.iter().any(|&i| i >= n) {
            return Err(Error::InvalidParameter("participants must be ascending client ids".into()));
        }
        let mut rhs = self.g1.iter().map(|v| self.beta * v).collect::<Vec<_>>();
        super::axpy(&mut rhs, -1.0, &self.g2);
        let x = Cholesky::new(&self.server_hessian(problem.lambda())?)?.solve(&rhs)?;
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
        let (p, floor, option) = (self.cfg.p, self.cfg.c, self.cfg.option);
        let hessian_c = &self.cfg.hessian;
        let bases = &self.bases;
        let sums = &self.sums;
        let active_ref = &active;
        let uploads = map_clients(exec, &mut self.clients, |i, cl| -> Result<Option<Upload>> {
            if !active_ref[i] {
                return Ok(None);
            }
            let basis = &bases[i];
            let grid = basis.coeffs(problem.local_data_hess(i, &cl.z)?.as_dense())?;
            let mut rng = RngStream::new(seed, k, i as u64, Purpose::HessianCompressor).rng();
            let s = compress_grid(hessian_c, basis, &grid.sub(&cl.l)?, &mut rng)?;
            let dl = s.scaled(alpha);
            cl.l.axpy(1.0, &dl)?;
            let gamma = gamma_of(&cl.l, floor);
            let dgamma = gamma - cl.gamma;
            cl.gamma = gamma;
            let (ratio_grid, point) = match option {
                Bl3Option::One => (&cl.last_grid, cl.grid_point.clone()),
                Bl3Option::Two => (&grid, cl.z.clone()),
            };
            cl.beta = beta_of(ratio_grid, &cl.l, gamma, floor)?;
            cl.beta_point = point;
            let dl_recon = basis.reconstruct(&dl)?;
            cl.a.axpy(1.0, &dl_recon)?;
            cl.a.axpy(2.0 * dgamma, &sums[i])?;
            cl.c.axpy(2.0 * dgamma, &sums[i])?;
            let mut coin_rng = RngStream::new(seed, k, i as u64, Purpose::GradientCoin).rng();
            let xi_next = coin(p, &mut coin_rng);
            let xi_sent = cl.xi;
            if xi_sent {
                cl.w.clone_from(&cl.z);
            }
            let g1 = cl.a.matvec(&cl.w)?;
            let g2 = g2_of(problem, i, &cl.c, &cl.w)?;
            let deltas = xi_sent.then(|| (sub(&g1, &cl.g1), sub(&g2, &cl.g2)));
            cl.g1 = g1;
            cl.g2 = g2;
            cl.xi = xi_next;
            cl.last_grid = grid;
            cl.grid_point.clone_from(&cl.z);
            Ok(Some(Upload {
                dl_recon,
                dgamma,
                beta: cl.beta,
                xi_sent,
                deltas,
            }))
        });

        let bits = self.common.bits;
        let hess_bits = self.cfg.hessian.bit_cost(Shape::Symmetric(d), bits)?;
        let inv_n = 1.0 / n as f64;
        for (i, up) in uploads.into_iter().enumerate() {
            let Some(up) = up? else { continue };
            cost.add("hessian", Direction::Up, hess_bits);
            cost.add("beta", Direction::Up, BitCost::scalars(bits, 1));
            cost.add("gamma", Direction::Up, BitCost::scalars(bits, 1));
            cost.add("coin", Direction::Up, BitCost::bits(1));
            let w = &self.clients[i].w;
            let mut da = up.dl_recon.clone();
            da.axpy(2.0 * up.dgamma, &self.sums[i])?;
            let dc = self.sums[i].scaled(2.0 * up.dgamma);
            let (d1, d2) = match up.deltas {
                Some(pair) if up.xi_sent => {
                    cost.add("gradient", Direction::Up, BitCost::floats(bits, 2 * d));
                    pair
                }
                _ => (da.matvec(w)?, dc.matvec(w)?),
            };
            super::axpy(&mut self.g1, inv_n, &d1);
            super::axpy(&mut self.g2, inv_n, &d2);
            self.a.axpy(inv_n, &da)?;
            self.c.axpy(inv_n, &dc)?;
            self.betas[i] = up.beta;
        }
        self.beta = self.betas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ensure_finite(&self.g1, k, "gradient aggregate")?;
        self.x = x;
        self.last_participants = participants.to_vec();
        self.round += 1;
        Ok(cost)
    }
}

impl Method for Bl3 {
    fn name(&self) -> String {
        format!("bl3[{}]", self.cfg.hessian)
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
        let mut a_err = 0.0f64;
        let mut c_err = 0.0f64;
        let mut floor = f64::INFINITY;
        let mut dominance = f64::INFINITY;
        let mut g_err = 0.0f64;
        let mut g1 = vec![0.0; d];
        let mut g2 = vec![0.0; d];
        for (i, cl) in self.clients.iter().enumerate() {
            let mut a = self.bases[i].reconstruct(&cl.l)?;
            a.axpy(2.0 * cl.gamma, &self.sums[i])?;
            a_err = a_err.max(rel_dist(&cl.a, &a)?);
            c_err = c_err.max(rel_dist(&cl.c, &self.sums[i].scaled(2.0 * cl.gamma))?);
            floor = floor.min(cl.l.as_slice().iter().fold(f64::INFINITY, |m, v| m.min(v + 2.0 * cl.gamma)));
            let gap = self
                .client_estimator(i)?
                .sub(&problem.local_data_hess(i, &cl.beta_point)?)?;
            dominance = dominance.min(gap.min_eigenvalue()?);
            let want1 = cl.a.matvec(&cl.w)?;
            let want2 = g2_of(problem, i, &cl.c, &cl.w)?;
            g_err = g_err
                .max(max_abs_diff(&cl.g1, &want1) / (1.0 + norm2(&want1)))
                .max(max_abs_diff(&cl.g2, &want2) / (1.0 + norm2(&want2)));
            super::axpy(&mut g1, 1.0 / n as f64, &cl.g1);
            super::axpy(&mut g2, 1.0 / n as f64, &cl.g2);
        }
        let a_mean = mean_of(self.clients.iter().map(|c| c.a.clone()), d, n)?;
        let c_mean = mean_of(self.clients.iter().map(|c| c.c.clone()), d, n)?;
        let beta_max = self.clients.iter().map(|c| c.beta).fold(f64::NEG_INFINITY, f64::max);
        let agg = rel_dist(&self.a, &a_mean)?
            .max(rel_dist(&self.c, &c_mean)?)
            .max(max_abs_diff(&self.g1, &g1) / (1.0 + norm2(&g1)))
            .max(max_abs_diff(&self.g2, &g2) / (1.0 + norm2(&g2)));
        let point = match self.cfg.option {
            Bl3Option::One => "z_i^{k-1}",
            Bl3Option::Two => "z_i^k",
        };
        Ok(vec![
            InvariantCheck::at_most("A_i equals sum (L_i + 2 gamma_i) B", a_err, 1e-8),
            InvariantCheck::at_most("C_i equals sum 2 gamma_i B", c_err, 1e-8),
            InvariantCheck::at_least("min (L_i)_jl + 2 gamma_i", floor, self.cfg.c * (1.0 - 1e-12)),
            InvariantCheck::at_most("g_i1 and g_i2 relations", g_err, 1e-8),
            InvariantCheck::at_most("server aggregates equal client means", agg, 1e-8),
            InvariantCheck::at_most("server beta equals max beta_i", (self.beta - beta_max).abs(), 0.0),
            InvariantCheck::at_least(format!("lambda_min(H_i - D_i({point}))"), dominance, -1e-8),
        ])
    }

    fn messages(&self) -> Vec<MessageSpec> {
        let bits = self.common.bits;
        let n = self.bases.len();
        let d = self.x.len();
        let fl = |b: BitCost| b.total().div_ceil(bits.float_bits);
        let spec = |label, dir, trigger, b: BitCost| MessageSpec {
            label,
            dir,
            trigger,
            floats: vec![fl(b); n],
            bits: vec![b; n],
        };
        let hess = self.cfg.hessian.bit_cost(Shape::Symmetric(d), bits).unwrap_or_default();
        let model = self.cfg.model.bit_cost(Shape::Vector(d), bits).unwrap_or_default();
        vec![
            spec("hessian", Direction::Up, Trigger::Participant, hess),
            spec("beta", Direction::Up, Trigger::Participant, BitCost::scalars(bits, 1)),
            spec("gamma", Direction::Up, Trigger::Participant, BitCost::scalars(bits, 1)),
            spec("coin", Direction::Up, Trigger::Participant, BitCost::bits(1)),
            spec("gradient", Direction::Up, Trigger::GradientRound, BitCost::floats(bits, 2 * d)),
            spec("model", Direction::Down, Trigger::Participant, model),
        ]
    }

    fn setup_bits(&self) -> u64 {
        self.common.bits.floats(self.setup_floats as usize)
    }
}
