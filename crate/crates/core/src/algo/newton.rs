//! Distributed Newton with Hessians sent as basis coefficients.
//!
//! With the standard basis each client sends its `d^2` Hessian entries. With a
//! data-subspace basis only the `r x r` block of the grid can be nonzero, so
//! only that block is sent and the step is unchanged.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    ensure_finite, map_clients, sub, BasisSpec, BuiltBases, Common, Direction, Executor,
    InvariantCheck, MessageSpec, Method, RoundCost, Trigger,
};
use crate::basis::{MatrixBasis, Space};
use crate::compress::BitCost;
use crate::matrix::{symmetrize, tri_len, Cholesky, DenseMatrix};
use crate::problem::Problem;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NewtonConfig {
    pub basis: BasisSpec,
    /// Send `r` data-gradient coordinates instead of `d` gradient entries.
    pub gradient_in_basis: bool,
}

#[derive(Debug)]
pub struct Newton {
    cfg: NewtonConfig,
    common: Common,
    bases: Vec<MatrixBasis>,
    setup_floats: u64,
    x: Vec<f64>,
    round: u64,
    last_h: Option<DenseMatrix>,
}

/// Entries a client sends for its coefficient grid.
fn block_len(b: &MatrixBasis) -> usize {
    match (b.subspace_rank(), b.space()) {
        (Some(r), _) => r * r,
        (None, Space::Full) => b.dim() * b.dim(),
        (None, Space::Symmetric) => tri_len(b.dim()),
    }
}

impl Newton {
    pub fn new(cfg: NewtonConfig, problem: &Problem, bases: BuiltBases, x0: &[f64], common: Common) -> Result<Self> {
        if x0.len() != problem.d() {
            return Err(Error::DimensionMismatch {
                expected: problem.d(),
                found: x0.len(),
            });
        }
        if bases.bases.len() != problem.n() {
            return Err(Error::DimensionMismatch {
                expected: problem.n(),
                found: bases.bases.len(),
            });
        }
        if cfg.gradient_in_basis && bases.bases.iter().any(|b| b.subspace_rank().is_none()) {
            return Err(Error::InvalidParameter("gradient_in_basis needs data-subspace bases".into()));
        }
        Ok(Newton {
            cfg,
            common,
            setup_floats: bases.setup_floats,
            bases: bases.bases,
            x: x0.to_vec(),
            round: 0,
            last_h: None,
        })
    }

    /// Server Hessian `(1/n) sum_i recon(G_i) + lambda I` of the last round.
    pub fn last_hessian(&self) -> Option<&DenseMatrix> {
        self.last_h.as_ref()
    }

    fn gradient_floats(&self, b: &MatrixBasis) -> usize {
        match (self.cfg.gradient_in_basis, b.subspace_rank()) {
            (true, Some(r)) => r,
            _ => self.x.len(),
        }
    }
}

impl Method for Newton {
    fn name(&self) -> String {
        format!("newton[{:?}]", self.cfg.basis)
    }

    fn round(&self) -> u64 {
        self.round
    }

    fn iterate(&self) -> &[f64] {
        &self.x
    }

    fn step(&mut self, problem: &Problem, exec: &dyn Executor) -> Result<RoundCost> {
        let (n, d) = (problem.n(), problem.d());
        let lambda = problem.lambda();
        let x = &self.x;
        let in_basis = self.cfg.gradient_in_basis;
        let mut slots: Vec<&MatrixBasis> = self.bases.iter().collect();
        let msgs = map_clients(exec, &mut slots, |i, basis| -> Result<(DenseMatrix, Vec<f64>)> {
            let grid = basis.coeffs(problem.local_data_hess(i, x)?.as_dense())?;
            // The server rebuilds the grid from the transmitted entries only.
            let received = match basis.subspace_rank() {
                Some(r) => {
                    let block = grid.top_left(r, r);
                    DenseMatrix::from_fn(d, d, |j, l| if j < r && l < r { block[(j, l)] } else { 0.0 })
                }
                None => grid,
            };
            let g = problem.local_grad(i, x)?;
            let g = match (in_basis, basis.subspace_rank()) {
                (true, Some(r)) => {
                    let v = basis.rotation().expect("subspace basis").leading_cols(r);
                    let data: Vec<f64> = g.iter().zip(x.iter()).map(|(gi, xi)| gi - lambda * xi).collect();
                    let mut back = v.matvec(&v.tr_matvec(&data)?)?;
                    super::axpy(&mut back, lambda, x);
                    back
                }
                _ => g,
            };
            Ok((basis.reconstruct(&received)?, g))
        });
        let mut cost = RoundCost::new(n);
        let bits = self.common.bits;
        let mut h = DenseMatrix::zeros(d, d);
        let mut g = vec![0.0; d];
        for (i, m) in msgs.into_iter().enumerate() {
            let (hi, gi) = m?;
            h.axpy(1.0, &hi)?;
            super::axpy(&mut g, 1.0, &gi);
            let b = &self.bases[i];
            cost.add("hessian", Direction::Up, BitCost::floats(bits, block_len(b)));
            cost.add("gradient", Direction::Up, BitCost::floats(bits, self.gradient_floats(b)));
            cost.add("model", Direction::Down, BitCost::floats(bits, d));
        }
        h.scale(1.0 / n as f64);
        g.iter_mut().for_each(|v| *v /= n as f64);
        let full = symmetrize(&h)?.with_diagonal_shift(lambda);
        let step = Cholesky::new(&full)?.solve(&g)?;
        let next = sub(&self.x, &step);
        ensure_finite(&next, self.round, "model")?;
        self.x = next;
        self.last_h = Some(full.into_dense());
        self.round += 1;
        Ok(cost)
    }

    fn invariants(&self, _problem: &Problem) -> Result<Vec<InvariantCheck>> {
        Ok(Vec::new())
    }

    fn messages(&self) -> Vec<MessageSpec> {
        let bits = self.common.bits;
        let n = self.bases.len();
        let d = self.x.len();
        let hess: Vec<u64> = self.bases.iter().map(|b| block_len(b) as u64).collect();
        let grad: Vec<u64> = self.bases.iter().map(|b| self.gradient_floats(b) as u64).collect();
        vec![
            MessageSpec {
                label: "hessian",
                dir: Direction::Up,
                trigger: Trigger::Always,
                bits: hess.iter().map(|&f| BitCost::floats(bits, f as usize)).collect(),
                floats: hess,
            },
            MessageSpec {
                label: "gradient",
                dir: Direction::Up,
                trigger: Trigger::Always,
                bits: grad.iter().map(|&f| BitCost::floats(bits, f as usize)).collect(),
                floats: grad,
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

    fn setup_bits(&self) -> u64 {
        self.common.bits.floats(self.setup_floats as usize)
    }
}
