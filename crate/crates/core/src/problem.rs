//! Regularized GLM objectives split across clients.
//!
//! Client `i` holds `f_i(x) = (1/m) sum_j phi(a_ij^T x; b_ij) + (lambda/2)||x||^2`
//! and the global objective is the mean of the `f_i`. The logistic loss is
//! the main case; the squared loss is a test hook with constant Hessians.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::basis::SubspaceBasis;
use crate::matrix::{dot, norm2, Cholesky, DenseMatrix, SymMatrix};
use crate::rng::{Purpose, RngStream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Loss {
    /// `log(1 + exp(-b t))`.
    #[default]
    Logistic,
    /// `(t - b)^2 / 2`.
    Squared,
}

impl Loss {
    #[inline]
    pub fn value(self, t: f64, b: f64) -> f64 {
        match self {
            Loss::Logistic => softplus(-b * t),
            Loss::Squared => 0.5 * (t - b) * (t - b),
        }
    }

    /// `d phi / dt`.
    #[inline]
    pub fn deriv(self, t: f64, b: f64) -> f64 {
        match self {
            Loss::Logistic => -b * sigmoid(-b * t),
            Loss::Squared => t - b,
        }
    }

    /// `d^2 phi / dt^2`; for the logistic loss `s / (1 + s)^2` with
    /// `s = exp(-b t)`.
    #[inline]
    pub fn curvature(self, t: f64, b: f64) -> f64 {
        match self {
            Loss::Logistic => {
                let p = sigmoid(-b * t);
                p * (1.0 - p)
            }
            Loss::Squared => 1.0,
        }
    }
}

/// `log(1 + exp(u))` without overflow.
#[inline]
pub fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + libm::log1p(libm::exp(-u))
    } else {
        libm::log1p(libm::exp(u))
    }
}

/// `1 / (1 + exp(-u))`, branching on the sign of `u`.
#[inline]
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + libm::exp(-u))
    } else {
        let e = libm::exp(u);
        e / (1.0 + e)
    }
}

/// One client's data: rows `a_ij` of an `m x d` matrix and labels `b_ij`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientShard {
    id: usize,
    features: DenseMatrix,
    labels: Vec<f64>,
}

impl ClientShard {
    /// Labels must be `+-1` for the logistic loss; any finite value is
    /// accepted for the squared loss via [`ClientShard::with_targets`].
    pub fn new(id: usize, features: DenseMatrix, labels: Vec<f64>) -> Result<Self> {
        if labels.iter().any(|&b| b != 1.0 && b != -1.0) {
            return Err(Error::InvalidParameter("labels must be +1 or -1".into()));
        }
        Self::with_targets(id, features, labels)
    }

    pub fn with_targets(id: usize, features: DenseMatrix, labels: Vec<f64>) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::InvalidParameter("a client needs at least one row".into()));
        }
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                found: labels.len(),
            });
        }
        if !features.is_finite() || labels.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("client data"));
        }
        Ok(ClientShard {
            id,
            features,
            labels,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn m(&self) -> usize {
        self.features.rows()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn row(&self, j: usize) -> Vec<f64> {
        (0..self.d()).map(|c| self.features[(j, c)]).collect()
    }

    /// `A x` for all rows.
    fn margins(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.features.matvec(x)
    }
}

/// Newton reference solution.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Reference {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub newton_iters: usize,
    pub grad_norm: f64,
}

/// Empirical Hessian smoothness constants, maximized over clients and
/// sampled pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct HessianConstants {
    /// Spectral-norm Lipschitz constant.
    pub h: f64,
    /// Frobenius-norm Lipschitz constant.
    pub h1: f64,
    /// Entrywise Lipschitz constant.
    pub nu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    shards: Vec<ClientShard>,
    lambda: f64,
    loss: Loss,
}

/// The logistic case used throughout.
pub type LogisticProblem = Problem;

impl Problem {
    pub fn new(shards: Vec<ClientShard>, lambda: f64, loss: Loss) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::InvalidParameter("at least one client is required".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let d = shards[0].d();
        for s in &shards {
            if s.d() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: s.d(),
                });
            }
        }
        Ok(Problem {
            shards,
            lambda,
            loss,
        })
    }

    pub fn logistic(shards: Vec<ClientShard>, lambda: f64) -> Result<Self> {
        Self::new(shards, lambda, Loss::Logistic)
    }

    pub fn n(&self) -> usize {
        self.shards.len()
    }

    pub fn d(&self) -> usize {
        self.shards[0].d()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Strong convexity modulus of every `f_i`.
    pub fn mu(&self) -> f64 {
        self.lambda
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn shards(&self) -> &[ClientShard] {
        &self.shards
    }

    pub fn shard(&self, i: usize) -> &ClientShard {
        &self.shards[i]
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("iterate"));
        }
        Ok(())
    }

    pub fn local_value(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        let s = &self.shards[i];
        let t = s.margins(x)?;
        let data: f64 = t
            .iter()
            .zip(s.labels())
            .map(|(&t, &b)| self.loss.value(t, b))
            .sum::<f64>()
            / s.m() as f64;
        Ok(data + 0.5 * self.lambda * dot(x, x))
    }

    pub fn local_grad(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.local_data_grad(i, x)?;
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi += self.lambda * xi;
        }
        Ok(g)
    }

    /// Gradient without the regularizer.
    pub fn local_data_grad(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let s = &self.shards[i];
        let t = s.margins(x)?;
        let inv_m = 1.0 / s.m() as f64;
        let w: Vec<f64> = t
            .iter()
            .zip(s.labels())
            .map(|(&t, &b)| inv_m * self.loss.deriv(t, b))
            .collect();
        s.features.tr_matvec(&w)
    }

    /// `phi''(a_ij^T x)` for every row.
    pub fn local_curvatures(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let s = &self.shards[i];
        let t = s.margins(x)?;
        Ok(t.iter()
            .zip(s.labels())
            .map(|(&t, &b)| self.loss.curvature(t, b))
            .collect())
    }

    /// `(1/m) sum_j phi''_j a_j a_j^T`, the Hessian without `lambda I`.
    pub fn local_data_hess(&self, i: usize, x: &[f64]) -> Result<SymMatrix> {
        let c = self.local_curvatures(i, x)?;
        let s = &self.shards[i];
        let (m, d) = (s.m(), s.d());
        let inv_m = 1.0 / m as f64;
        let a = &s.features;
        let mut scaled = DenseMatrix::zeros(m, d);
        for col in 0..d {
            let src = a.col(col);
            for (o, (v, cj)) in scaled.col_mut(col).iter_mut().zip(src.iter().zip(&c)) {
                *o = v * cj * inv_m;
            }
        }
        let mut h = DenseMatrix::zeros(d, d);
        for q in 0..d {
            for p in q..d {
                let v = dot(a.col(p), scaled.col(q));
                h[(p, q)] = v;
                h[(q, p)] = v;
            }
        }
        SymMatrix::new(h)
    }

    pub fn local_hess(&self, i: usize, x: &[f64]) -> Result<SymMatrix> {
        Ok(self.local_data_hess(i, x)?.with_diagonal_shift(self.lambda))
    }

    /// GLM Hessian coefficients `gamma_tl = (1/m) sum_j phi''_j alpha_jt alpha_jl`
    /// with `alpha_j = V^T a_j`; `V gamma V^T + lambda I` is the local Hessian.
    pub fn glm_hess_coeffs(&self, i: usize, x: &[f64], s: &SubspaceBasis) -> Result<SymMatrix> {
        let shard = &self.shards[i];
        shard_check_span(shard, s)?;
        let c = self.local_curvatures(i, x)?;
        let alpha = shard.features.matmul(s.vectors())?;
        let (m, r) = (shard.m(), s.rank());
        let inv_m = 1.0 / m as f64;
        let mut g = DenseMatrix::zeros(r, r);
        for l in 0..r {
            for t in l..r {
                let mut acc = 0.0;
                for j in 0..m {
                    acc += c[j] * alpha[(j, t)] * alpha[(j, l)];
                }
                g[(t, l)] = acc * inv_m;
                g[(l, t)] = acc * inv_m;
            }
        }
        SymMatrix::new(g)
    }

    pub fn global_value(&self, x: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for i in 0..self.n() {
            acc += self.local_value(i, x)?;
        }
        Ok(acc / self.n() as f64)
    }

    pub fn global_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.d()];
        for i in 0..self.n() {
            for (a, b) in g.iter_mut().zip(self.local_grad(i, x)?) {
                *a += b;
            }
        }
        let inv = 1.0 / self.n() as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        Ok(g)
    }

    pub fn global_hess(&self, x: &[f64]) -> Result<SymMatrix> {
        let d = self.d();
        let mut h = SymMatrix::zeros(d);
        for i in 0..self.n() {
            h.axpy(1.0, &self.local_data_hess(i, x)?)?;
        }
        Ok(h.scaled(1.0 / self.n() as f64).with_diagonal_shift(self.lambda))
    }

    /// Classic Newton from `x0`: `iters` full steps, stopping early once
    /// `||grad|| <= 1e-12`.
    pub fn newton_reference(&self, x0: &[f64], iters: usize) -> Result<Reference> {
        self.check_x(x0)?;
        let mut x = x0.to_vec();
        let mut done = 0;
        let mut g = self.global_grad(&x)?;
        while done < iters && norm2(&g) > 1e-12 {
            let step = Cholesky::new(&self.global_hess(&x)?)?.solve(&g)?;
            for (xi, si) in x.iter_mut().zip(&step) {
                *xi -= si;
            }
            done += 1;
            g = self.global_grad(&x)?;
        }
        Ok(Reference {
            f_star: self.global_value(&x)?,
            grad_norm: norm2(&g),
            x_star: x,
            newton_iters: done,
        })
    }

    /// Samples pairs near `center` and returns the largest observed Hessian
    /// difference ratios over all clients.
    pub fn hessian_constants(
        &self,
        center: &[f64],
        radius: f64,
        samples: usize,
        seed: u64,
    ) -> Result<HessianConstants> {
        self.check_x(center)?;
        let d = self.d();
        let mut rng = RngStream::server(seed, 0, Purpose::Other(1)).rng();
        let mut out = HessianConstants {
            h: 0.0,
            h1: 0.0,
            nu: 0.0,
        };
        for _ in 0..samples {
            let x: Vec<f64> = center
                .iter()
                .map(|c| c + radius * (2.0 * rng.random::<f64>() - 1.0))
                .collect();
            let y: Vec<f64> = center
                .iter()
                .map(|c| c + radius * (2.0 * rng.random::<f64>() - 1.0))
                .collect();
            let dist = norm2(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
            if dist == 0.0 {
                continue;
            }
            for i in 0..self.n() {
                let diff = self.local_data_hess(i, &x)?.sub(&self.local_data_hess(i, &y)?)?;
                let eig = crate::matrix::eig_sym(&diff)?;
                let spec = eig.eigenvalues[0].abs().max(eig.eigenvalues[d - 1].abs());
                out.h = out.h.max(spec / dist);
                out.h1 = out.h1.max(diff.frobenius_norm() / dist);
                out.nu = out.nu.max(diff.max_abs_entry() / dist);
            }
        }
        Ok(out)
    }
}

fn shard_check_span(shard: &ClientShard, s: &SubspaceBasis) -> Result<()> {
    if s.dim() != shard.d() {
        return Err(Error::DimensionMismatch {
            expected: shard.d(),
            found: s.dim(),
        });
    }
    s.check_span(&shard.features)
}

/// Logistic problem whose feature rows lie in a planted `r`-dimensional
/// subspace shared by all clients. Labels follow a planted separator inside
/// the subspace, each flipped with probability `0.1`.
pub fn synth_lowdim(d: usize, r: usize, n: usize, m: usize, lambda: f64, seed: u64) -> Result<Problem> {
    if r == 0 || r > d {
        return Err(Error::OutOfRange {
            what: "r",
            value: r,
            min: 1,
            max: d,
        });
    }
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("n and m must be positive".into()));
    }
    let mut rng = RngStream::server(seed, 0, Purpose::Data).rng();
    let raw = DenseMatrix::from_fn(d, r, |_, _| StandardNormal.sample(&mut rng));
    let v = crate::matrix::svd(&raw)?.u;
    let w_true: Vec<f64> = (0..r).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut shards = Vec::with_capacity(n);
    for i in 0..n {
        let mut crng = RngStream::new(seed, 0, i as u64, Purpose::Data).rng();
        let coef = DenseMatrix::from_fn(m, r, |_, _| StandardNormal.sample(&mut crng));
        let features = coef.matmul(&v.transpose())?;
        let labels = (0..m)
            .map(|j| {
                let score: f64 = (0..r).map(|t| coef[(j, t)] * w_true[t]).sum();
                let clean = if score >= 0.0 { 1.0 } else { -1.0 };
                if crng.random::<f64>() < 0.1 {
                    -clean
                } else {
                    clean
                }
            })
            .collect();
        shards.push(ClientShard::new(i, features, labels)?);
    }
    Problem::logistic(shards, lambda)
}
