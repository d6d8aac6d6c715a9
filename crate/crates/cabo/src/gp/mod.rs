//! Gaussian process regression core: Matérn-5/2 prior, noiseless conditioning
//! with jitter escalation, marginal-likelihood hyperparameter fitting, and
//! exact prior/posterior path sampling.

mod fit;
mod kernel;
mod sample;

pub use fit::{fit_hyperparameters, FitBounds};
pub use kernel::{matern52, matern52_deriv, KernelSpec};
pub use sample::{
    estimate_u, sample_posterior_paths, sample_prior_function, PriorSampler, UEstimate,
};

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{CaboError, Result};
use crate::Point;

/// Fixed observation-noise variance added to the kernel diagonal.
pub const NOISE_VARIANCE: f64 = 1e-6;
/// Largest diagonal jitter tried before conditioning gives up.
pub const MAX_JITTER: f64 = 1e-4;

/// Observed data: points in `[0,1]^d` with their objective values.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    points: Vec<Point>,
    values: Vec<f64>,
    standardized: bool,
}

impl Dataset {
    pub fn new(points: Vec<Point>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(CaboError::Dataset(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CaboError::Dataset("non-finite observation value".into()));
        }
        Ok(Self {
            points,
            values,
            standardized: false,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn push(&mut self, point: Point, value: f64) {
        self.points.push(point);
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn set_standardized(&mut self, flag: bool) {
        self.standardized = flag;
    }

    pub fn standardized(&self) -> bool {
        self.standardized
    }

    /// Best (minimum) observed value, if any.
    pub fn incumbent(&self) -> Option<f64> {
        self.values.iter().copied().fold(None, |acc, v| {
            Some(acc.map_or(v, |a: f64| a.min(v)))
        })
    }
}

/// GP posterior evaluated over a candidate set.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    pub candidates: Arc<Vec<Point>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Best observed value so far (`+inf` when nothing has been observed).
    pub incumbent: f64,
    /// Number of observations conditioned on.
    pub t: usize,
}

impl PosteriorState {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Cholesky of `m + jitter*I`, escalating the jitter tenfold from
/// `base_jitter` up to [`MAX_JITTER`].
///
/// Returns the factorization and the jitter actually used.
pub(crate) fn cholesky_with_jitter(
    m: &DMatrix<f64>,
    base_jitter: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = m.nrows();
    let mut jitter = base_jitter;
    loop {
        let mut k = m.clone();
        for i in 0..n {
            k[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(k) {
            return Ok((chol, jitter));
        }
        if jitter >= MAX_JITTER {
            let max_diag = (0..n).map(|i| m[(i, i)]).fold(0.0_f64, f64::max);
            return Err(CaboError::CholeskyFailure {
                max_jitter: jitter,
                condition: max_diag / jitter.max(f64::MIN_POSITIVE),
            });
        }
        jitter *= 10.0;
    }
}

/// Exact GP conditioning on the candidate set.
///
/// Observation noise [`NOISE_VARIANCE`] is added to the diagonal; posterior
/// variances are clamped at zero before the square root.
pub fn posterior(
    data: &Dataset,
    kernel: &KernelSpec,
    candidates: &Arc<Vec<Point>>,
) -> Result<PosteriorState> {
    kernel.validate()?;
    if candidates.is_empty() {
        return Err(CaboError::InvalidArgument("empty candidate set".into()));
    }
    let n_cand = candidates.len();

    if data.is_empty() {
        return Ok(PosteriorState {
            candidates: Arc::clone(candidates),
            mean: vec![kernel.mean_const; n_cand],
            std: vec![kernel.prior_std(); n_cand],
            incumbent: f64::INFINITY,
            t: 0,
        });
    }

    let t = data.len();
    let gram = kernel.gram(data.points());
    let (chol, _) = cholesky_with_jitter(&gram, NOISE_VARIANCE)?;

    let centered = DVector::from_iterator(t, data.values().iter().map(|v| v - kernel.mean_const));
    let alpha = chol.solve(&centered);

    // t x n_cand cross-covariance.
    let k_xc = kernel.cross(data.points(), candidates);
    let mean_off = k_xc.transpose() * &alpha;

    // v = L^{-1} k_xc, so posterior var_i = k_diag - ||v_i||^2.
    let mut v = k_xc;
    chol.l_dirty().solve_lower_triangular_mut(&mut v);

    let mut mean = Vec::with_capacity(n_cand);
    let mut std = Vec::with_capacity(n_cand);
    for i in 0..n_cand {
        mean.push(kernel.mean_const + mean_off[i]);
        let reduction = v.column(i).norm_squared();
        std.push((kernel.k_diag() - reduction).max(0.0).sqrt());
    }

    Ok(PosteriorState {
        candidates: Arc::clone(candidates),
        mean,
        std,
        incumbent: data.incumbent().unwrap(),
        t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid1d(n: usize) -> Arc<Vec<Point>> {
        Arc::new((0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect())
    }

    #[test]
    fn empty_dataset_returns_prior() {
        let kernel = KernelSpec::isotropic(0.1, 2.0, 0.7);
        let cands = grid1d(11);
        let state = posterior(&Dataset::empty(), &kernel, &cands).unwrap();
        assert!(state.mean.iter().all(|&m| m == 0.7));
        assert!(state
            .std
            .iter()
            .all(|&s| (s - 2.0_f64.sqrt()).abs() < 1e-12));
        assert_eq!(state.t, 0);
        assert_eq!(state.incumbent, f64::INFINITY);
    }

    #[test]
    fn noiseless_interpolation_at_observed_points() {
        let kernel = KernelSpec::isotropic(0.2, 1.0, 0.0);
        let data = Dataset::new(vec![vec![0.25], vec![0.75]], vec![-1.0, 0.5]).unwrap();
        let cands = Arc::new(vec![vec![0.25], vec![0.75], vec![0.5]]);
        let state = posterior(&data, &kernel, &cands).unwrap();
        assert!((state.mean[0] + 1.0).abs() <= 1e-4);
        assert!((state.mean[1] - 0.5).abs() <= 1e-4);
        assert!(state.std[0] <= 1e-2);
        assert!(state.std[1] <= 1e-2);
        assert_eq!(state.incumbent, -1.0);
    }

    #[test]
    fn midpoint_matches_hand_rolled_conditioning() {
        // Independent 3x3 closed-form oracle: condition (f(a), f(b)) and
        // predict at the midpoint by direct solves on the joint covariance.
        let kernel = KernelSpec::isotropic(0.3, 1.5, 0.2);
        let (a, b, m) = (0.2, 0.8, 0.5);
        let noise = NOISE_VARIANCE;

        let k = |x: f64, y: f64| kernel.k(&[x], &[y]);
        let k11 = k(a, a) + noise;
        let k12 = k(a, b);
        let k22 = k(b, b) + noise;
        let det = k11 * k22 - k12 * k12;
        // Inverse of the 2x2 data covariance.
        let (i11, i12, i22) = (k22 / det, -k12 / det, k11 / det);
        let (y1, y2) = (-0.4 - 0.2, 0.9 - 0.2); // centered observations
        let (ks1, ks2) = (k(m, a), k(m, b));
        let oracle_mean = 0.2
            + ks1 * (i11 * y1 + i12 * y2)
            + ks2 * (i12 * y1 + i22 * y2);
        let oracle_var = k(m, m)
            - (ks1 * (i11 * ks1 + i12 * ks2) + ks2 * (i12 * ks1 + i22 * ks2));

        let data = Dataset::new(vec![vec![a], vec![b]], vec![-0.4, 0.9]).unwrap();
        let cands = Arc::new(vec![vec![m]]);
        let state = posterior(&data, &kernel, &cands).unwrap();
        assert_relative_eq!(state.mean[0], oracle_mean, epsilon = 1e-8);
        assert_relative_eq!(state.std[0], oracle_var.max(0.0).sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn duplicate_points_survive_via_jitter() {
        let kernel = KernelSpec::isotropic(0.1, 1.0, 0.0);
        let data = Dataset::new(
            vec![vec![0.5], vec![0.5], vec![0.5000000001]],
            vec![0.1, 0.1, 0.1],
        )
        .unwrap();
        let cands = grid1d(5);
        let state = posterior(&data, &kernel, &cands).unwrap();
        assert!(state.std.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(Dataset::new(vec![vec![0.0]], vec![1.0, 2.0]).is_err());
    }
}
