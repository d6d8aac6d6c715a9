//! Acquisition scores over a candidate set: expected improvement in linear
//! and log domain, log expected improvement per cost, the Pandora's Box
//! Gittins index with its decayed variant, lower confidence bound, and
//! Thompson sampling.
//!
//! All scores follow the minimization convention: smaller observed values
//! are better, and `incumbent` is the smallest value seen so far.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CaboError, Result};
use crate::gp::{sample_posterior_paths, Dataset, KernelSpec, PosteriorState};
use crate::mathx::{log_norm_pdf, norm_cdf, norm_pdf};
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AcquisitionKind {
    LogEipc,
    Pbgi,
    PbgiD,
    Lcb,
    Ts,
}

impl AcquisitionKind {
    /// Whether the best candidate maximizes (rather than minimizes) the score.
    pub fn maximizing(self) -> bool {
        matches!(self, AcquisitionKind::LogEipc)
    }
}

/// Scores aligned with the candidate set, plus the selected candidate.
///
/// `best_index` is the arg-best restricted to unevaluated candidates, ties
/// broken by lowest index; `None` when everything has been evaluated.
#[derive(Debug, Clone)]
pub struct AcquisitionScore {
    pub kind: AcquisitionKind,
    pub values: Vec<f64>,
    pub best_index: Option<usize>,
}

impl AcquisitionScore {
    pub fn best_value(&self) -> Option<f64> {
        self.best_index.map(|i| self.values[i])
    }
}

fn argbest(values: &[f64], evaluated: &[Option<f64>], maximize: bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if evaluated[i].is_some() {
            continue;
        }
        match best {
            None => best = Some(i),
            Some(b) => {
                let better = if maximize { v > values[b] } else { v < values[b] };
                if better {
                    best = Some(i);
                }
            }
        }
    }
    best
}

fn check_aligned(state: &PosteriorState, costs: &[f64], evaluated: &[Option<f64>]) -> Result<()> {
    if costs.len() != state.len() || evaluated.len() != state.len() {
        return Err(CaboError::InvalidArgument(format!(
            "costs ({}) and evaluated mask ({}) must align with candidates ({})",
            costs.len(),
            evaluated.len(),
            state.len()
        )));
    }
    if costs.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
        return Err(CaboError::InvalidArgument(
            "costs must be positive and finite".into(),
        ));
    }
    Ok(())
}

/// Expected improvement of a Gaussian `N(mu, sigma^2)` below threshold `y`:
/// `E[max(y - f, 0)]`. Total function; `sigma = 0` degenerates to the hinge.
pub fn ei(mu: f64, sigma: f64, y: f64) -> f64 {
    debug_assert!(sigma >= 0.0);
    if sigma == 0.0 {
        return (y - mu).max(0.0);
    }
    let z = (y - mu) / sigma;
    ((y - mu) * norm_cdf(z) + sigma * norm_pdf(z)).max(0.0)
}

/// Crossover below which the linear-domain EI loses too many digits to
/// cancellation and the Mills-ratio expansion takes over.
const LOG_EI_ASYMPTOTIC_Z: f64 = -8.0;

/// `ln EI(mu, sigma, y)`, stable deep out of the money.
///
/// For `z = (y - mu)/sigma < -8` the direct form cancels; the asymptotic
/// expansion `ln sigma + ln phi(z) - 2 ln|z| + ln(1 - 3/z^2 + ...)` is used
/// instead. Returns `-inf` when the improvement is exactly zero.
pub fn log_ei(mu: f64, sigma: f64, y: f64) -> f64 {
    debug_assert!(sigma >= 0.0);
    if sigma == 0.0 {
        let imp = y - mu;
        return if imp > 0.0 { imp.ln() } else { f64::NEG_INFINITY };
    }
    let z = (y - mu) / sigma;
    if z > LOG_EI_ASYMPTOTIC_Z {
        let v = ei(mu, sigma, y);
        if v > 0.0 {
            v.ln()
        } else {
            f64::NEG_INFINITY
        }
    } else {
        let zi = 1.0 / (z * z);
        // h(z) = phi(z)/z^2 * (1 - 3/z^2 + 15/z^4 - 105/z^6 + 945/z^8 - ...).
        let series = (-3.0 + (15.0 + (-105.0 + (945.0 - 10395.0 * zi) * zi) * zi) * zi) * zi;
        sigma.ln() + log_norm_pdf(z) - 2.0 * z.abs().ln() + series.ln_1p()
    }
}

/// Log expected improvement per cost over the candidate set; the best
/// candidate maximizes the score among unevaluated points.
pub fn log_eipc(
    state: &PosteriorState,
    costs: &[f64],
    evaluated: &[Option<f64>],
) -> Result<AcquisitionScore> {
    check_aligned(state, costs, evaluated)?;
    let values: Vec<f64> = (0..state.len())
        .map(|i| log_ei(state.mean[i], state.std[i], state.incumbent) - costs[i].ln())
        .collect();
    let best_index = argbest(&values, evaluated, true);
    Ok(AcquisitionScore {
        kind: AcquisitionKind::LogEipc,
        values,
        best_index,
    })
}

/// Solves `EI(mu, sigma, g) = cost` for the fair value `g` by bisection on a
/// bracket grown geometrically from `[mu - 10 sigma, mu + 10 sigma]`.
pub fn pbgi_index(mu: f64, sigma: f64, cost: f64, bisection_iters: usize) -> Result<f64> {
    if sigma == 0.0 {
        // EI(g) = max(g - mu, 0), so the root is exact.
        return Ok(mu + cost);
    }
    let mut offset = 10.0 * sigma;
    let mut lo = mu - offset;
    let mut hi = mu + offset;
    let mut doublings = 0usize;
    while ei(mu, sigma, lo) >= cost {
        offset *= 2.0;
        lo = mu - offset;
        doublings += 1;
        if doublings > 60 || !lo.is_finite() {
            return Err(CaboError::BracketFailure { doublings });
        }
    }
    let mut offset = 10.0 * sigma;
    while ei(mu, sigma, hi) <= cost {
        offset *= 2.0;
        hi = mu + offset;
        doublings += 1;
        if doublings > 60 || !hi.is_finite() {
            return Err(CaboError::BracketFailure { doublings });
        }
    }
    for _ in 0..bisection_iters {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // bracket exhausted at machine precision
        }
        if ei(mu, sigma, mid) < cost {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Pandora's Box Gittins index score: for unevaluated candidates the fair
/// value `g` solving `EI = cost`, for evaluated candidates the observed
/// value itself. The best candidate minimizes the score.
pub fn pbgi(
    state: &PosteriorState,
    costs: &[f64],
    evaluated: &[Option<f64>],
    bisection_iters: usize,
) -> Result<AcquisitionScore> {
    check_aligned(state, costs, evaluated)?;
    let mut values = Vec::with_capacity(state.len());
    for i in 0..state.len() {
        let v = match evaluated[i] {
            Some(observed) => observed,
            None => pbgi_index(state.mean[i], state.std[i], costs[i], bisection_iters)?,
        };
        values.push(v);
    }
    let best_index = argbest(&values, evaluated, false);
    Ok(AcquisitionScore {
        kind: AcquisitionKind::Pbgi,
        values,
        best_index,
    })
}

/// State of the decayed-lambda PBGI variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PbgiDState {
    pub lambda_current: f64,
    pub halvings: u32,
}

impl PbgiDState {
    pub fn new(lambda_0: f64) -> Result<Self> {
        if !(lambda_0 > 0.0) {
            return Err(CaboError::InvalidArgument(
                "lambda_0 must be positive".into(),
            ));
        }
        Ok(Self {
            lambda_current: lambda_0,
            halvings: 0,
        })
    }

    /// Halves the scale factor when the stopping rule has triggered.
    pub fn step(self, stop_triggered: bool) -> Self {
        if stop_triggered {
            Self {
                lambda_current: 0.5 * self.lambda_current,
                halvings: self.halvings + 1,
            }
        } else {
            self
        }
    }
}

/// Confidence-width schedule `beta_t = 2 log(d t^2 pi^2 / (6 delta))`.
pub fn beta_t(t: usize, dim: usize, delta: f64) -> f64 {
    let t = t as f64;
    let d = dim as f64;
    2.0 * (d * t * t * std::f64::consts::PI.powi(2) / (6.0 * delta)).ln()
}

/// Lower confidence bound `mean - sqrt(beta_t)/scale_down * std`; the best
/// candidate minimizes the score.
pub fn lcb(
    state: &PosteriorState,
    t: usize,
    dim: usize,
    delta: f64,
    scale_down: f64,
    evaluated: &[Option<f64>],
) -> Result<AcquisitionScore> {
    if t < 1 || dim < 1 {
        return Err(CaboError::InvalidArgument(
            "lcb needs t >= 1 and dim >= 1".into(),
        ));
    }
    if evaluated.len() != state.len() {
        return Err(CaboError::InvalidArgument(
            "evaluated mask must align with candidates".into(),
        ));
    }
    let width = beta_t(t, dim, delta).sqrt() / scale_down;
    let values: Vec<f64> = (0..state.len())
        .map(|i| state.mean[i] - width * state.std[i])
        .collect();
    let best_index = argbest(&values, evaluated, false);
    Ok(AcquisitionScore {
        kind: AcquisitionKind::Lcb,
        values,
        best_index,
    })
}

/// Thompson sampling: one joint posterior path; the best candidate minimizes
/// the sampled path among unevaluated points.
pub fn thompson(
    data: &Dataset,
    kernel: &KernelSpec,
    candidates: &Arc<Vec<Point>>,
    evaluated: &[Option<f64>],
    seed: u64,
) -> Result<AcquisitionScore> {
    if evaluated.len() != candidates.len() {
        return Err(CaboError::InvalidArgument(
            "evaluated mask must align with candidates".into(),
        ));
    }
    let path = sample_posterior_paths(data, kernel, candidates, 1, seed)?
        .pop()
        .unwrap();
    let best_index = argbest(&path, evaluated, false);
    Ok(AcquisitionScore {
        kind: AcquisitionKind::Ts,
        values: path,
        best_index,
    })
}
