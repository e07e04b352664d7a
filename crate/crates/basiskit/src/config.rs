//! JSON run configuration.
//!
//! ```json
//! {
//!   "name": "bl1-topk",
//!   "dataset": { "kind": "a1a", "rows": 400 },
//!   "n": 4,
//!   "lambda": 0.001,
//!   "method": { "kind": "bl1", "hessian": { "kind": "top_k", "k": 123 } },
//!   "max_rounds": 200
//! }
//! ```
//!
//! Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use basiskit_core::algo::MethodConfig;
use basiskit_core::problem::{synth_lowdim, Problem};
use serde::{Deserialize, Serialize};

use crate::dataset::{load_a1a, logistic_problem, A1A_D};
use crate::error::{DataError, Result};
use crate::libsvm::read_libsvm;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Libsvm {
        path: PathBuf,
        /// Keep only the first `rows` rows.
        #[serde(default)]
        rows: Option<usize>,
        /// Feature dimension; the largest index in the file when unset.
        #[serde(default)]
        d: Option<usize>,
    },
    /// a1a (`BASISKIT_A1A`) or its bundled stand-in, `d = 123`.
    A1a {
        #[serde(default)]
        rows: Option<usize>,
    },
    /// Features in a planted `r`-dimensional subspace.
    Synth { d: usize, r: usize, m: usize, seed: u64 },
}

fn default_max_rounds() -> u64 {
    200
}
fn default_max_bits() -> f64 {
    1e9
}
fn default_float_bits() -> u64 {
    64
}
fn default_target() -> f64 {
    1e-10
}
fn default_reference_iters() -> usize {
    20
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub dataset: DatasetSpec,
    pub n: usize,
    pub lambda: f64,
    pub method: MethodConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u64,
    /// Stop once cumulative bits per node exceed this.
    #[serde(default = "default_max_bits")]
    pub max_bits_per_node: f64,
    #[serde(default = "default_float_bits")]
    pub float_bits: u64,
    /// Stop once `f(x^k) - f*` is at most this.
    #[serde(default = "default_target")]
    pub target_gap: f64,
    /// Newton steps used to compute `f*`.
    #[serde(default = "default_reference_iters")]
    pub reference_iters: usize,
    /// Count downloads in the bits budget and in plots.
    #[serde(default = "default_true")]
    pub count_download: bool,
    /// Record wall-clock time in `wall_ms`; zero otherwise, which keeps CSVs
    /// byte-identical across runs.
    #[serde(default)]
    pub wall_clock: bool,
    /// Starting point; zero when unset.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(dataset: DatasetSpec, n: usize, lambda: f64, method: MethodConfig) -> Self {
        RunConfig {
            name: None,
            dataset,
            n,
            lambda,
            method,
            seed: 0,
            max_rounds: default_max_rounds(),
            max_bits_per_node: default_max_bits(),
            float_bits: default_float_bits(),
            target_gap: default_target(),
            reference_iters: default_reference_iters(),
            count_download: true,
            wall_clock: false,
            x0: None,
            csv: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| DataError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.method.tag().to_string())
    }

    /// Checks ranges that do not need the dataset; method parameters are
    /// checked when the method is built.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DataError::Config(m).into());
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(1..=64).contains(&self.float_bits) {
            return bad(format!("float_bits must lie in [1, 64], got {}", self.float_bits));
        }
        if !(self.target_gap >= 0.0) {
            return bad("target_gap must be nonnegative".into());
        }
        if !(self.max_bits_per_node > 0.0) {
            return bad("max_bits_per_node must be positive".into());
        }
        let tau = match &self.method {
            MethodConfig::Bl2(c) => c.tau,
            MethodConfig::Bl3(c) => c.tau,
            MethodConfig::FednlPp(c) => c.tau,
            _ => None,
        };
        if let Some(t) = tau {
            if t == 0 || t > self.n {
                return bad(format!("tau must lie in [1, n = {}], got {t}", self.n));
            }
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<Problem> {
        match &self.dataset {
            DatasetSpec::Libsvm { path, rows, d } => {
                let raw = read_libsvm(path)?;
                let raw = match rows {
                    Some(k) => raw.head(*k),
                    None => raw,
                };
                logistic_problem(&raw, self.n, *d, self.lambda)
            }
            DatasetSpec::A1a { rows } => {
                let raw = load_a1a()?;
                let raw = match rows {
                    Some(k) => raw.head(*k),
                    None => raw,
                };
                logistic_problem(&raw, self.n, Some(A1A_D), self.lambda)
            }
            DatasetSpec::Synth { d, r, m, seed } => Ok(synth_lowdim(*d, *r, self.n, *m, self.lambda, *seed)?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"dataset": {"kind": "a1a", "rows": 400}, "n": 4, "lambda": 0.001,
        "method": {"kind": "bl1", "hessian": {"kind": "top_k", "k": 5}}}"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.max_rounds, 200);
        assert_eq!(c.max_bits_per_node, 1e9);
        assert_eq!(c.target_gap, 1e-10);
        assert!(c.count_download);
        assert_eq!(c.display_name(), "bl1");
    }

    #[test]
    fn unknown_keys_fail() {
        let top = MINIMAL.replacen("\"n\"", "\"bogus\": 1, \"n\"", 1);
        assert!(RunConfig::from_json(&top).is_err());
        let nested = MINIMAL.replace("\"k\": 5", "\"k\": 5, \"q\": 1");
        assert!(RunConfig::from_json(&nested).is_err());
        let method = MINIMAL.replace("\"kind\": \"bl1\"", "\"kind\": \"bl1\", \"tau\": 2");
        assert!(RunConfig::from_json(&method).is_err());
    }

    #[test]
    fn ranges_are_checked() {
        assert!(RunConfig::from_json(&MINIMAL.replace("0.001", "0")).is_err());
        let pp = MINIMAL.replace("\"kind\": \"bl1\"", "\"kind\": \"bl2\", \"tau\": 5");
        assert!(RunConfig::from_json(&pp).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        let back = RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }
}
