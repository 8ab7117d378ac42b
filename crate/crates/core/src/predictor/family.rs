//! Predictive distribution families, their negative log densities and
//! gradients.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::{PredictorError, Result};
use crate::stats::{sigmoid, softplus};

/// Lower bound on σ, α and β after the softplus transform.
pub const POSITIVE_FLOOR: f64 = 1e-4;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PredictiveFamily {
    /// Parameters `[μ, σ]`.
    GaussianScalar,
    /// Parameters `[α, β]` (shape, rate).
    GammaScalar,
    /// Parameters `[μ_1..μ_k, σ_1..σ_k]`.
    GaussianDiag { k: usize },
}

impl PredictiveFamily {
    pub fn target_dim(self) -> usize {
        match self {
            PredictiveFamily::GaussianScalar | PredictiveFamily::GammaScalar => 1,
            PredictiveFamily::GaussianDiag { k } => k,
        }
    }

    pub fn n_params(self) -> usize {
        2 * self.target_dim()
    }

    pub fn name(self) -> String {
        match self {
            PredictiveFamily::GaussianScalar => "gaussian".into(),
            PredictiveFamily::GammaScalar => "gamma".into(),
            PredictiveFamily::GaussianDiag { k } => format!("gaussian_diag{k}"),
        }
    }

    /// Maps raw network outputs to distribution parameters.
    pub fn params_from_raw(self, raw: &[f64]) -> Vec<f64> {
        let pos = |r: f64| softplus(r).max(POSITIVE_FLOOR);
        match self {
            PredictiveFamily::GaussianScalar => vec![raw[0], pos(raw[1])],
            PredictiveFamily::GammaScalar => vec![pos(raw[0]), pos(raw[1])],
            PredictiveFamily::GaussianDiag { k } => {
                let mut p = raw[..k].to_vec();
                p.extend(raw[k..2 * k].iter().map(|&r| pos(r)));
                p
            }
        }
    }

    /// Chains a parameter gradient back through [`Self::params_from_raw`].
    /// The floor is treated as a constant, so floored outputs get no gradient.
    pub fn raw_grad(self, raw: &[f64], param_grad: &[f64]) -> Vec<f64> {
        let chain = |r: f64, g: f64| {
            if softplus(r) > POSITIVE_FLOOR {
                g * sigmoid(r)
            } else {
                0.0
            }
        };
        match self {
            PredictiveFamily::GaussianScalar => vec![param_grad[0], chain(raw[1], param_grad[1])],
            PredictiveFamily::GammaScalar => vec![chain(raw[0], param_grad[0]), chain(raw[1], param_grad[1])],
            PredictiveFamily::GaussianDiag { k } => {
                let mut g = param_grad[..k].to_vec();
                g.extend((0..k).map(|j| chain(raw[k + j], param_grad[k + j])));
                g
            }
        }
    }

    fn check(self, params: &[f64], target: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(PredictorError::Shape {
                what: "parameter vector",
                expected: self.n_params(),
                got: params.len(),
            });
        }
        if target.len() != self.target_dim() {
            return Err(PredictorError::Shape {
                what: "target",
                expected: self.target_dim(),
                got: target.len(),
            });
        }
        let k = self.target_dim();
        let positive = match self {
            PredictiveFamily::GammaScalar => &params[..],
            _ => &params[k..],
        };
        if positive.iter().any(|&p| !(p > 0.0)) {
            return Err(PredictorError::Parameter(format!(
                "non-positive scale parameter in {params:?}"
            )));
        }
        if self == PredictiveFamily::GammaScalar && !(target[0] > 0.0) {
            return Err(PredictorError::Support {
                row: String::new(),
                value: target[0],
            });
        }
        Ok(())
    }

    /// Negative log density of `target` in nats.
    pub fn nll(self, params: &[f64], target: &[f64]) -> Result<f64> {
        self.check(params, target)?;
        Ok(self.nll_unchecked(params, target))
    }

    pub(crate) fn nll_unchecked(self, params: &[f64], target: &[f64]) -> f64 {
        match self {
            PredictiveFamily::GaussianScalar => gaussian_nll(params[0], params[1], target[0]),
            PredictiveFamily::GammaScalar => gamma_nll(params[0], params[1], target[0]),
            PredictiveFamily::GaussianDiag { k } => {
                (0..k).map(|j| gaussian_nll(params[j], params[k + j], target[j])).sum()
            }
        }
    }

    /// Negative log density and its gradient with respect to the parameters.
    pub fn nll_grad(self, params: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(params, target)?;
        Ok(self.nll_grad_unchecked(params, target))
    }

    pub(crate) fn nll_grad_unchecked(self, params: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
        match self {
            PredictiveFamily::GaussianScalar => {
                let (v, dm, ds) = gaussian_nll_grad(params[0], params[1], target[0]);
                (v, vec![dm, ds])
            }
            PredictiveFamily::GammaScalar => {
                let (a, b, x) = (params[0], params[1], target[0]);
                let v = gamma_nll(a, b, x);
                (v, vec![-b.ln() + digamma(a) - x.ln(), -a / b + x])
            }
            PredictiveFamily::GaussianDiag { k } => {
                let mut g = vec![0.0; 2 * k];
                let mut total = 0.0;
                for j in 0..k {
                    let (v, dm, ds) = gaussian_nll_grad(params[j], params[k + j], target[j]);
                    total += v;
                    g[j] = dm;
                    g[k + j] = ds;
                }
                (total, g)
            }
        }
    }
}

impl fmt::Display for PredictiveFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for PredictiveFamily {
    type Err = String;

    /// Accepts `gaussian`, `gamma` and `gaussian_diag<k>`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gaussian" | "gaussian_scalar" => Ok(PredictiveFamily::GaussianScalar),
            "gamma" | "gamma_scalar" => Ok(PredictiveFamily::GammaScalar),
            other => other
                .strip_prefix("gaussian_diag")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(|k| PredictiveFamily::GaussianDiag { k })
                .ok_or_else(|| format!("unknown family `{other}` (expected gaussian, gamma or gaussian_diag<k>)")),
        }
    }
}

fn gaussian_nll(mu: f64, sigma: f64, x: f64) -> f64 {
    let z = (x - mu) / sigma;
    HALF_LN_2PI + sigma.ln() + 0.5 * z * z
}

fn gaussian_nll_grad(mu: f64, sigma: f64, x: f64) -> (f64, f64, f64) {
    let r = x - mu;
    let s2 = sigma * sigma;
    (gaussian_nll(mu, sigma, x), -r / s2, 1.0 / sigma - r * r / (s2 * sigma))
}

fn gamma_nll(alpha: f64, beta: f64, x: f64) -> f64 {
    -alpha * beta.ln() + ln_gamma(alpha) - (alpha - 1.0) * x.ln() + beta * x
}

/// Entropy of a Gaussian with standard deviation `sigma`, in nats.
pub fn gaussian_entropy(sigma: f64) -> f64 {
    0.5 + HALF_LN_2PI + sigma.ln()
}
