//! Evaluation-cost models: uniform/linear/periodic synthetic costs, tabular
//! per-candidate costs, scaling by the cost-conversion factor, log-normal
//! estimators for unknown costs, and the budget-to-lambda heuristic.

use serde::{Deserialize, Serialize};

use crate::error::{CaboError, Result};
use crate::mathx::bessel_i0;

/// Shape of the raw (pre-scaling) cost function.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CostKind {
    /// Every evaluation costs 1.
    Uniform,
    /// `(1 + 20 * mean(x)) / 11`, normalized to average about 1 on the cube.
    Linear,
    /// `exp(alpha/d * sum cos(2 pi beta (x_i - x*_i))) / I0(alpha/d)^d`.
    Periodic {
        x_star: Vec<f64>,
        alpha: f64,
        beta: f64,
    },
    /// Per-candidate costs from a benchmark table.
    Table { costs: Vec<f64> },
}

/// A cost model: raw cost shape plus the scaling factor `lambda` that
/// converts costs into objective units.
///
/// Scaling is applied here, once, so acquisition, stopping, and metrics all
/// see identical scaled costs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostModel {
    pub kind: CostKind,
    pub lambda: f64,
}

impl CostModel {
    pub fn new(kind: CostKind, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(CaboError::InvalidArgument(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        if let CostKind::Table { costs } = &kind {
            if costs.iter().any(|&c| !(c > 0.0)) {
                return Err(CaboError::InvalidArgument(
                    "table costs must all be positive".into(),
                ));
            }
        }
        if let CostKind::Periodic { alpha, beta, .. } = &kind {
            if !(*alpha > 0.0) || !(*beta > 0.0) {
                return Err(CaboError::InvalidArgument(
                    "periodic cost needs alpha > 0 and beta > 0".into(),
                ));
            }
        }
        Ok(Self { kind, lambda })
    }

    pub fn uniform(lambda: f64) -> Result<Self> {
        Self::new(CostKind::Uniform, lambda)
    }

    /// Raw cost of evaluating candidate `index` at location `x`.
    pub fn raw(&self, x: &[f64], index: usize) -> f64 {
        match &self.kind {
            CostKind::Uniform => 1.0,
            CostKind::Linear => linear_cost(x),
            CostKind::Periodic {
                x_star,
                alpha,
                beta,
            } => periodic_cost(x, x_star, *alpha, *beta),
            CostKind::Table { costs } => costs[index],
        }
    }

    /// Scaled cost `lambda * raw`.
    pub fn scaled(&self, x: &[f64], index: usize) -> f64 {
        self.lambda * self.raw(x, index)
    }

    /// Scaled costs for a whole candidate set.
    pub fn scaled_all(&self, candidates: &[crate::Point]) -> Vec<f64> {
        candidates
            .iter()
            .enumerate()
            .map(|(i, x)| self.scaled(x, i))
            .collect()
    }
}

/// Linearly increasing cost in the coordinate average.
pub fn linear_cost(x: &[f64]) -> f64 {
    let avg = x.iter().sum::<f64>() / x.len() as f64;
    (1.0 + 20.0 * avg) / 11.0
}

/// Periodic cost, normalized by the Bessel factor so the domain average is
/// approximately 1.
pub fn periodic_cost(x: &[f64], x_star: &[f64], alpha: f64, beta: f64) -> f64 {
    let d = x.len() as f64;
    let phase: f64 = x
        .iter()
        .zip(x_star)
        .map(|(xi, si)| (2.0 * std::f64::consts::PI * beta * (xi - si)).cos())
        .sum();
    ((alpha / d) * phase).exp() / bessel_i0(alpha / d).powi(x.len() as i32)
}

/// Log-normal posterior over costs, aligned with a candidate set.
#[derive(Debug, Clone)]
pub struct LogCostPosterior {
    pub mu_ln_c: Vec<f64>,
    pub sigma_ln_c: Vec<f64>,
}

impl LogCostPosterior {
    pub fn new(mu_ln_c: Vec<f64>, sigma_ln_c: Vec<f64>) -> Result<Self> {
        if mu_ln_c.len() != sigma_ln_c.len() {
            return Err(CaboError::InvalidArgument(
                "log-cost posterior mean/std length mismatch".into(),
            ));
        }
        if sigma_ln_c.iter().any(|&s| s < 0.0) {
            return Err(CaboError::InvalidArgument(
                "log-cost posterior std must be nonnegative".into(),
            ));
        }
        Ok(Self { mu_ln_c, sigma_ln_c })
    }
}

/// How to collapse a log-normal cost posterior into a point estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostEstimator {
    /// `E[1/c]^{-1} = exp(mu - sigma^2/2)`; pairs with LogEIPC-inv.
    Inv,
    /// `E[c] = exp(mu + sigma^2/2)`; pairs with PBGI and LogEIPC-exp.
    Exp,
}

/// Elementwise point estimates of unknown costs under the chosen estimator.
pub fn unknown_cost_estimate(post: &LogCostPosterior, estimator: CostEstimator) -> Vec<f64> {
    post.mu_ln_c
        .iter()
        .zip(&post.sigma_ln_c)
        .map(|(&mu, &sigma)| {
            let half_var = 0.5 * sigma * sigma;
            match estimator {
                CostEstimator::Inv => (mu - half_var).exp(),
                CostEstimator::Exp => (mu + half_var).exp(),
            }
        })
        .collect()
}

/// Budget heuristic `lambda = U / (B - C)` for an expected cost budget `B`
/// and initial-evaluation cost `C`. Also the initializer for the decayed
/// variant's `lambda_0`.
pub fn lambda_for_budget(u: f64, budget: f64, initial_cost: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(CaboError::InvalidArgument(format!(
            "improvement budget U must be positive, got {u}"
        )));
    }
    if budget <= initial_cost {
        return Err(CaboError::BudgetTooSmall {
            budget,
            initial_cost,
        });
    }
    Ok(u / (budget - initial_cost))
}
