use alloc::boxed::Box;
use alloc::vec::Vec;

use super::{Bl1, Bl1Config, Bl2, Bl2Config, Bl3, Bl3Config, Common, Diana, DianaConfig, Gd, GdConfig, Method, Newton, NewtonConfig};
use crate::basis::{data_subspace_basis, MatrixBasis};
use crate::compress::Compressor;
use crate::problem::Problem;
use crate::Result;

/// Per-client basis selection.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum BasisSpec {
    #[default]
    Standard,
    TriangularSym,
    /// PSD basis of the symmetric matrices.
    Psd,
    /// Outer products of an orthonormal basis of the client's data span.
    DataSubspace {
        #[cfg_attr(feature = "serde", serde(default = "default_tol"))]
        tol: f64,
    },
}

#[cfg(feature = "serde")]
fn default_tol() -> f64 {
    crate::basis::RANK_TOL
}

/// Initial Hessian shift `L_i^0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ShiftInit {
    /// Coefficients of the local Hessian at `x^0`.
    #[default]
    Hessian,
    Zero,
}

/// Bases for all clients plus the one-time cost of announcing them.
#[derive(Clone, Debug)]
pub struct BuiltBases {
    pub bases: Vec<MatrixBasis>,
    /// Floats sent once so the server knows every data basis (`r_i d` each).
    pub setup_floats: u64,
}

pub fn build_bases(spec: BasisSpec, problem: &Problem) -> Result<BuiltBases> {
    let d = problem.d();
    let mut bases = Vec::with_capacity(problem.n());
    let mut setup = 0u64;
    for shard in problem.shards() {
        let b = match spec {
            BasisSpec::Standard => MatrixBasis::standard(d)?,
            BasisSpec::TriangularSym => MatrixBasis::triangular_sym(d)?,
            BasisSpec::Psd => MatrixBasis::psd_sym(d)?,
            BasisSpec::DataSubspace { tol } => {
                let s = data_subspace_basis(shard.features(), tol)?;
                setup += (s.rank() * d) as u64;
                MatrixBasis::subspace(&s)?
            }
        };
        bases.push(b);
    }
    Ok(BuiltBases {
        bases,
        setup_floats: setup,
    })
}

/// FedNL with bidirectional compression off: BL1 in the standard basis.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FedNlConfig {
    pub compressor: Compressor,
    pub alpha: Option<f64>,
}

impl Default for FedNlConfig {
    fn default() -> Self {
        FedNlConfig {
            compressor: Compressor::RankR { r: 1 },
            alpha: None,
        }
    }
}

/// FedNL with partial participation: BL2 in the standard basis.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FedNlPpConfig {
    pub compressor: Compressor,
    pub alpha: Option<f64>,
    pub tau: Option<usize>,
}

impl Default for FedNlPpConfig {
    fn default() -> Self {
        FedNlPpConfig {
            compressor: Compressor::RankR { r: 1 },
            alpha: None,
            tau: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum MethodConfig {
    Bl1(Bl1Config),
    Bl2(Bl2Config),
    Bl3(Bl3Config),
    Newton(NewtonConfig),
    Gd(GdConfig),
    Diana(DianaConfig),
    Fednl(FedNlConfig),
    FednlPp(FedNlPpConfig),
}

impl MethodConfig {
    pub fn tag(&self) -> &'static str {
        match self {
            MethodConfig::Bl1(_) => "bl1",
            MethodConfig::Bl2(_) => "bl2",
            MethodConfig::Bl3(_) => "bl3",
            MethodConfig::Newton(_) => "newton",
            MethodConfig::Gd(_) => "gd",
            MethodConfig::Diana(_) => "diana",
            MethodConfig::Fednl(_) => "fednl",
            MethodConfig::FednlPp(_) => "fednl_pp",
        }
    }
}

fn symmetrized_once(c: &Compressor) -> Compressor {
    match c {
        Compressor::Symmetrized { .. } => c.clone(),
        other => Compressor::symmetrized(other.clone()),
    }
}

/// Rewrites FedNL requests as the BL method they are special cases of.
/// Other configurations are returned unchanged.
pub fn fednl_adapter(config: &MethodConfig) -> MethodConfig {
    match config {
        MethodConfig::Fednl(f) => MethodConfig::Bl1(Bl1Config {
            basis: BasisSpec::Standard,
            hessian: symmetrized_once(&f.compressor),
            model: Compressor::Identity,
            alpha: f.alpha,
            eta: Some(1.0),
            p: 1.0,
            ..Bl1Config::default()
        }),
        MethodConfig::FednlPp(f) => MethodConfig::Bl2(Bl2Config {
            basis: BasisSpec::Standard,
            hessian: symmetrized_once(&f.compressor),
            model: Compressor::Identity,
            alpha: f.alpha,
            eta: Some(1.0),
            p: 1.0,
            tau: f.tau,
            ..Bl2Config::default()
        }),
        other => other.clone(),
    }
}

/// Lowers `config` and initializes the method at `x0`.
pub fn build(config: &MethodConfig, problem: &Problem, x0: &[f64], common: Common) -> Result<Box<dyn Method>> {
    Ok(match fednl_adapter(config) {
        MethodConfig::Bl1(c) => {
            let b = build_bases(c.basis, problem)?;
            Box::new(Bl1::new(c, problem, b, x0, common)?)
        }
        MethodConfig::Bl2(c) => {
            let b = build_bases(c.basis, problem)?;
            Box::new(Bl2::new(c, problem, b, x0, common)?)
        }
        MethodConfig::Bl3(c) => {
            let b = build_bases(c.basis, problem)?;
            Box::new(Bl3::new(c, problem, b, x0, common)?)
        }
        MethodConfig::Newton(c) => {
            let b = build_bases(c.basis, problem)?;
            Box::new(Newton::new(c, problem, b, x0, common)?)
        }
        MethodConfig::Gd(c) => Box::new(Gd::new(c, problem, x0, common)?),
        MethodConfig::Diana(c) => Box::new(Diana::new(c, problem, x0, common)?),
        MethodConfig::Fednl(_) | MethodConfig::FednlPp(_) => unreachable!("lowered above"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fednl_lowers_to_bl1_standard_symmetrized() {
        let c = MethodConfig::Fednl(FedNlConfig::default());
        let MethodConfig::Bl1(b) = fednl_adapter(&c) else {
            panic!("expected BL1");
        };
        assert_eq!(b.basis, BasisSpec::Standard);
        assert_eq!(b.hessian, Compressor::symmetrized(Compressor::RankR { r: 1 }));
        assert_eq!(b.p, 1.0);
        assert_eq!(b.model, Compressor::Identity);
    }

    #[test]
    fn fednl_pp_lowers_to_bl2() {
        let c = MethodConfig::FednlPp(FedNlPpConfig {
            tau: Some(2),
            ..Default::default()
        });
        let MethodConfig::Bl2(b) = fednl_adapter(&c) else {
            panic!("expected BL2");
        };
        assert_eq!(b.basis, BasisSpec::Standard);
        assert_eq!(b.tau, Some(2));
    }

    #[test]
    fn adapter_is_idempotent() {
        for c in [
            MethodConfig::Fednl(FedNlConfig::default()),
            MethodConfig::FednlPp(FedNlPpConfig::default()),
            MethodConfig::Gd(GdConfig::default()),
        ] {
            let once = fednl_adapter(&c);
            assert_eq!(fednl_adapter(&once), once);
        }
    }
}
