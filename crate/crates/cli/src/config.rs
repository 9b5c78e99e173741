//! TOML run configuration. See `docs/config.md` for the schema.

use std::path::{Path, PathBuf};

use dualchain::chains::{self, BDParams, BiasFunction};
use dualchain::duals::exact::{self, RationalMatrix};
use dualchain::duals::DualFamily;
use dualchain::Kernel;
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::output;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub chain: ChainConfig,
    #[serde(default)]
    pub dual: DualConfig,
    #[serde(default)]
    pub options: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    Dense,
    Bd,
    Moran,
    MoranMutation,
    BernoulliLaplace,
    WrightFisher,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub kind: ChainKind,
    /// Top state `N`; required for the population models.
    pub n: Option<usize>,
    pub rows: Option<Vec<Vec<f64>>>,
    /// CSV written by `build`, relative to the config file.
    pub matrix_file: Option<PathBuf>,
    pub p: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    pub r: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
    pub a1: Option<f64>,
    pub a2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    #[default]
    Siegmund,
    Ultrametric,
    Hypergeometric,
    Vandermonde,
    Potential,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualConfig {
    #[serde(default)]
    pub family: FamilyName,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// Substochastic `R` for the potential family.
    pub rows: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    pub n_max: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    /// Path length for `simulate`.
    pub length: Option<usize>,
    /// `N` values for `cutoff`.
    pub sweep: Option<Vec<usize>>,
    /// Initial law `π_0`; defaults to the point mass at 0.
    pub start: Option<Vec<f64>>,
    pub series: Option<String>,
}

/// A resolved chain: the kernel, its BD parameters when tridiagonal, and an
/// exact form when the model has one.
pub struct Chain {
    pub kind: ChainKind,
    pub kernel: Kernel,
    pub bd: Option<BDParams>,
    pub exact: Option<RationalMatrix>,
    /// `(a1, a2)` for the affine mutation models.
    pub mutation: Option<(f64, f64)>,
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: Config =
            toml::from_str(&text).map_err(|e| CliError::ConfigParse { path: path.to_path_buf(), message: e.to_string() })?;
        if let Some(f) = &cfg.chain.matrix_file {
            if f.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.chain.matrix_file = Some(base.join(f));
            }
        }
        cfg.validate().map_err(|message| CliError::ConfigParse { path: path.to_path_buf(), message })?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        let c = &self.chain;
        let probs = |name: &str, v: &Option<Vec<f64>>| -> Result<(), String> {
            match v {
                Some(v) if v.iter().any(|x| !(0.0..=1.0).contains(x)) => {
                    Err(format!("chain.{name} has entries outside [0,1]"))
                }
                _ => Ok(()),
            }
        };
        probs("p", &c.p)?;
        probs("q", &c.q)?;
        probs("r", &c.r)?;
        probs("bias", &c.bias)?;
        probs("start", &self.options.start)?;
        if let Some(rows) = &c.rows {
            if rows.iter().flatten().any(|x| !(0.0..=1.0).contains(x)) {
                return Err("chain.rows has entries outside [0,1]".into());
            }
        }
        for (name, v) in [("a1", c.a1), ("a2", c.a2)] {
            if v.is_some_and(|x| !(0.0..=1.0).contains(&x)) {
                return Err(format!("chain.{name} must lie in [0,1]"));
            }
        }
        let need = |cond: bool, msg: &str| if cond { Ok(()) } else { Err(msg.to_string()) };
        match c.kind {
            ChainKind::Dense => need(c.rows.is_some() != c.matrix_file.is_some(), "dense chain needs exactly one of rows, matrix_file"),
            ChainKind::Bd => need(c.p.is_some() && c.q.is_some(), "bd chain needs p and q"),
            ChainKind::Moran => need(c.bias.is_some(), "moran chain needs bias"),
            ChainKind::MoranMutation => {
                need(c.n.is_some() && c.a1.is_some() && c.a2.is_some(), "moran_mutation needs n, a1, a2")
            }
            ChainKind::BernoulliLaplace => need(c.n.is_some(), "bernoulli_laplace needs n"),
            ChainKind::WrightFisher => need(
                c.n.is_some() && (c.bias.is_some() || (c.a1.is_some() && c.a2.is_some())),
                "wright_fisher needs n and either bias or a1, a2",
            ),
        }?;
        let d = &self.dual;
        match d.family {
            FamilyName::Ultrametric => need(d.k.is_some(), "ultrametric dual needs k"),
            FamilyName::Potential => need(d.rows.is_some(), "potential dual needs rows"),
            _ => Ok(()),
        }
    }

    pub fn family(&self) -> CliResult<DualFamily> {
        let d = &self.dual;
        Ok(match d.family {
            FamilyName::Siegmund => DualFamily::Siegmund,
            FamilyName::Ultrametric => DualFamily::Ultrametric {
                k: d.k.unwrap_or(0),
                alpha: d.alpha.unwrap_or(0.0),
                beta: d.beta.unwrap_or(0.0),
            },
            FamilyName::Hypergeometric => DualFamily::Hypergeometric,
            FamilyName::Vandermonde => DualFamily::Vandermonde,
            FamilyName::Potential => {
                let rows = d.rows.as_ref().expect("validated");
                let m = dualchain::kernel::matrix_from_rows(rows).map_err(|e| CliError::module("dual", e))?;
                DualFamily::Potential(m)
            }
        })
    }

    pub fn chain(&self) -> CliResult<Chain> {
        let c = &self.chain;
        let m = |e| CliError::module("chain", e);
        let n_or = |len: usize| c.n.unwrap_or(len.saturating_sub(1));
        let (kernel, bd, exact, mutation) = match c.kind {
            ChainKind::Dense => {
                let matrix = match (&c.rows, &c.matrix_file) {
                    (Some(rows), _) => dualchain::kernel::matrix_from_rows(rows).map_err(m)?,
                    (None, Some(f)) => output::read_matrix(f)?,
                    _ => unreachable!("validated"),
                };
                let kernel = Kernel::stochastic(matrix).map_err(m)?;
                let bd = kernel.is_tridiagonal().then(|| BDParams::from_kernel(&kernel).ok()).flatten();
                (kernel, bd, None, None)
            }
            ChainKind::Bd => {
                let p = c.p.clone().unwrap_or_default();
                let q = c.q.clone().unwrap_or_default();
                let params = match &c.r {
                    Some(r) => BDParams::with_absorbing(p, q, r.clone()),
                    None => {
                        let r = p.iter().zip(&q).map(|(a, b)| 1.0 - a - b).collect();
                        BDParams::with_absorbing(p, q, r)
                    }
                }
                .map_err(m)?;
                (params.kernel(), Some(params), None, None)
            }
            ChainKind::Moran => {
                let bias = BiasFunction::new(c.bias.clone().unwrap_or_default()).map_err(m)?;
                let params = chains::moran_kernel(n_or(bias.values().len()), &bias).map_err(m)?;
                (params.kernel(), Some(params), None, None)
            }
            ChainKind::MoranMutation | ChainKind::BernoulliLaplace => {
                let n = c.n.expect("validated");
                let (a1, a2) = match c.kind {
                    ChainKind::BernoulliLaplace => (1.0, 1.0),
                    _ => (c.a1.unwrap_or(0.0), c.a2.unwrap_or(0.0)),
                };
                let params = chains::moran_kernel(n, &chains::mutation_bias(a1, a2, n).map_err(m)?).map_err(m)?;
                let ex = exact::moran_exact(&exact::mutation_bias_exact(a1, a2, n));
                (Kernel::stochastic(ex.to_f64()).map_err(m)?, Some(params), Some(ex), Some((a1, a2)))
            }
            ChainKind::WrightFisher => {
                let n = c.n.expect("validated");
                match &c.bias {
                    Some(b) => {
                        let bias = BiasFunction::new(b.clone()).map_err(m)?;
                        (chains::wright_fisher_kernel(n, &bias).map_err(m)?, None, None, None)
                    }
                    None => {
                        let (a1, a2) = (c.a1.unwrap_or(0.0), c.a2.unwrap_or(0.0));
                        let ex = exact::wright_fisher_exact(&exact::mutation_bias_exact(a1, a2, n));
                        (Kernel::stochastic(ex.to_f64()).map_err(m)?, None, Some(ex), Some((a1, a2)))
                    }
                }
            }
        };
        Ok(Chain { kind: c.kind, kernel, bd, exact, mutation })
    }

    /// Initial law `π_0` on `0..n`.
    pub fn start(&self, n: usize) -> CliResult<nalgebra::DVector<f64>> {
        match &self.options.start {
            Some(v) if v.len() != n => Err(CliError::ConfigParse {
                path: PathBuf::new(),
                message: format!("options.start has length {}, chain has {n} states", v.len()),
            }),
            Some(v) => Ok(nalgebra::DVector::from_column_slice(v)),
            None => Ok(nalgebra::DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 })),
        }
    }
}
