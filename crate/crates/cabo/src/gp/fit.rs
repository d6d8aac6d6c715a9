use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CaboError, Result};
use crate::gp::kernel::KernelSpec;
use crate::gp::{cholesky_with_jitter, Dataset, NOISE_VARIANCE};
use crate::mathx::LN_2PI;

const SQRT5: f64 = 2.23606797749979;
const N_STARTS: usize = 8;
const MAX_ITERS: usize = 60;
const GRAD_TOL: f64 = 1e-5;

/// Box constraints for maximum-marginal-likelihood fitting.
#[derive(Debug, Clone)]
pub struct FitBounds {
    pub lengthscale: (f64, f64),
    pub output_scale: (f64, f64),
    pub mean: (f64, f64),
    /// Fit one lengthscale per input dimension instead of a shared one.
    pub ard: bool,
}

impl Default for FitBounds {
    fn default() -> Self {
        Self {
            lengthscale: (0.01, 10.0),
            output_scale: (1e-4, 1e4),
            mean: (-1e3, 1e3),
            ard: false,
        }
    }
}

impl FitBounds {
    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("lengthscale", self.lengthscale),
            ("output_scale", self.output_scale),
        ] {
            if !(lo > 0.0 && hi > lo) {
                return Err(CaboError::InvalidArgument(format!(
                    "{name} bounds must satisfy 0 < lo < hi"
                )));
            }
        }
        if !(self.mean.0 < self.mean.1) {
            return Err(CaboError::InvalidArgument(
                "mean bounds must satisfy lo < hi".into(),
            ));
        }
        Ok(())
    }
}

/// Log marginal likelihood and its gradient in the packed parameter vector
/// `[log l_1.., log s2, mu]`.
struct LmlEval {
    value: f64,
    grad: Vec<f64>,
}

struct LmlProblem<'a> {
    data: &'a Dataset,
    dim: usize,
    n_ls: usize,
}

impl LmlProblem<'_> {
    fn kernel_of(&self, theta: &[f64]) -> KernelSpec {
        let ls: Vec<f64> = theta[..self.n_ls].iter().map(|t| t.exp()).collect();
        KernelSpec {
            lengthscales: ls,
            output_scale: theta[self.n_ls].exp(),
            mean_const: theta[self.n_ls + 1],
        }
    }

    /// Evaluates the negative LML and gradient; `None` when the kernel matrix
    /// is not factorizable even after jitter escalation.
    fn eval(&self, theta: &[f64]) -> Option<LmlEval> {
        let kernel = self.kernel_of(theta);
        let n = self.data.len();
        let pts = self.data.points();
        let gram = kernel.gram(pts);
        let (chol, jitter) = cholesky_with_jitter(&gram, NOISE_VARIANCE).ok()?;

        let centered = DVector::from_iterator(
            n,
            self.data.values().iter().map(|v| v - kernel.mean_const),
        );
        let alpha = chol.solve(&centered);
        let log_det: f64 = (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
        let lml = -0.5 * centered.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;

        let k_inv = chol.inverse();
        let mut grad = vec![0.0; theta.len()];

        // d/d(log s2): dK = gram (signal part only; the jitter is additive).
        grad[self.n_ls] = 0.5 * (quad_form(&alpha, &gram) - frob_dot(&k_inv, &gram));

        // d/d(log l_i): dK entries = s2 * (5/3)(1 + sqrt5 r) e^{-sqrt5 r} * d_i^2 / l_i^2.
        for li in 0..self.n_ls {
            let mut dk = DMatrix::zeros(n, n);
            for p in 0..n {
                for q in 0..p {
                    let r = kernel.scaled_distance(&pts[p], &pts[q]);
                    let base =
                        kernel.output_scale * (5.0 / 3.0) * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp();
                    let d2 = if self.n_ls == 1 {
                        // Isotropic: sum of squared offsets over all dims.
                        (0..self.dim)
                            .map(|j| (pts[p][j] - pts[q][j]).powi(2))
                            .sum::<f64>()
                    } else {
                        (pts[p][li] - pts[q][li]).powi(2)
                    };
                    let v = base * d2 / (kernel.lengthscales[li] * kernel.lengthscales[li]);
                    dk[(p, q)] = v;
                    dk[(q, p)] = v;
                }
            }
            grad[li] = 0.5 * (quad_form(&alpha, &dk) - frob_dot(&k_inv, &dk));
        }

        // d/d(mu) = 1^T alpha.
        grad[self.n_ls + 1] = alpha.sum();

        let _ = jitter;
        Some(LmlEval { value: lml, grad })
    }
}

fn quad_form(v: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (m * v).dot(v)
}

fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Fits kernel hyperparameters by maximizing the log marginal likelihood with
/// a multi-start bounded quasi-Newton search on log-parameters.
///
/// Deterministic for a given `(data, bounds, seed)` triple.
pub fn fit_hyperparameters(data: &Dataset, bounds: &FitBounds, seed: u64) -> Result<KernelSpec> {
    bounds.validate()?;
    if data.len() < 2 {
        return Err(CaboError::FitFailure(format!(
            "need at least 2 observations, got {}",
            data.len()
        )));
    }
    let dim = data.points()[0].len();
    let n_ls = if bounds.ard { dim } else { 1 };
    let problem = LmlProblem { data, dim, n_ls };

    let lo: Vec<f64> = (0..n_ls)
        .map(|_| bounds.lengthscale.0.ln())
        .chain([bounds.output_scale.0.ln(), bounds.mean.0])
        .collect();
    let hi: Vec<f64> = (0..n_ls)
        .map(|_| bounds.lengthscale.1.ln())
        .chain([bounds.output_scale.1.ln(), bounds.mean.1])
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut all_failed = true;

    for start in 0..N_STARTS {
        let theta0 = if start == 0 {
            heuristic_start(data, &lo, &hi, n_ls)
        } else {
            (0..lo.len())
                .map(|i| rng.random_range(lo[i]..hi[i]))
                .collect()
        };
        if let Some((val, theta)) = bfgs_maximize(&problem, theta0, &lo, &hi) {
            all_failed = false;
            if best.as_ref().is_none_or(|(b, _)| val > *b) {
                best = Some((val, theta));
            }
        }
    }

    match best {
        Some((_, theta)) => Ok(problem.kernel_of(&theta)),
        None if all_failed => {
            let (i, j, d) = closest_pair(data);
            Err(CaboError::FitFailure(format!(
                "kernel matrix singular after jitter escalation; closest points \
                 #{i} and #{j} at distance {d:.3e}"
            )))
        }
        None => unreachable!(),
    }
}

fn heuristic_start(data: &Dataset, lo: &[f64], hi: &[f64], n_ls: usize) -> Vec<f64> {
    let n = data.len();
    let pts = data.points();
    // Median pairwise distance as a lengthscale guess (subsampled for big n).
    let step = (n * n / 2000).max(1);
    let mut dists = Vec::new();
    let mut c = 0usize;
    for i in 0..n {
        for j in 0..i {
            if c % step == 0 {
                let d: f64 = pts[i]
                    .iter()
                    .zip(&pts[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                dists.push(d.max(1e-12));
            }
            c += 1;
        }
    }
    let med = crate::mathx::median(&dists);
    let var = crate::mathx::sample_std(data.values()).powi(2);
    let mean = crate::mathx::mean(data.values());

    let mut theta: Vec<f64> = (0..n_ls).map(|i| med.ln().clamp(lo[i], hi[i])).collect();
    theta.push(var.max(1e-6).ln().clamp(lo[n_ls], hi[n_ls]));
    theta.push(mean.clamp(lo[n_ls + 1], hi[n_ls + 1]));
    theta
}

fn closest_pair(data: &Dataset) -> (usize, usize, f64) {
    let pts = data.points();
    let mut best = (0, 1, f64::INFINITY);
    for i in 0..pts.len() {
        for j in 0..i {
            let d: f64 = pts[i]
                .iter()
                .zip(&pts[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if d < best.2 {
                best = (j, i, d);
            }
        }
    }
    best
}

/// BFGS with backtracking line search and box clamping, maximizing the LML.
/// Returns the best value and parameters, or `None` when no start point in
/// the basin is factorizable.
fn bfgs_maximize(
    problem: &LmlProblem,
    mut x: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
) -> Option<(f64, Vec<f64>)> {
    let dim = x.len();
    clamp_vec(&mut x, lo, hi);
    let mut eval = problem.eval(&x)?;
    let mut h = DMatrix::<f64>::identity(dim, dim);

    for _ in 0..MAX_ITERS {
        // Minimize -LML: gradient of the objective is -grad.
        let g = DVector::from_iterator(dim, eval.grad.iter().map(|v| -v));
        if g.amax() < GRAD_TOL * eval.value.abs().max(1.0) {
            break;
        }
        let mut p = -(&h * &g);
        if p.dot(&g) >= 0.0 {
            h = DMatrix::identity(dim, dim);
            p = -g.clone();
        }

        let mut alpha = 1.0;
        let mut accepted: Option<(Vec<f64>, LmlEval)> = None;
        for _ in 0..25 {
            let mut x_new: Vec<f64> = (0..dim).map(|i| x[i] + alpha * p[i]).collect();
            clamp_vec(&mut x_new, lo, hi);
            let step: Vec<f64> = (0..dim).map(|i| x_new[i] - x[i]).collect();
            if step.iter().all(|s| s.abs() < 1e-14) {
                break;
            }
            if let Some(e_new) = problem.eval(&x_new) {
                let directional: f64 = (0..dim).map(|i| g[i] * step[i]).sum();
                if -e_new.value <= -eval.value + 1e-4 * directional {
                    accepted = Some((x_new, e_new));
                    break;
                }
            }
            alpha *= 0.5;
        }

        let Some((x_new, e_new)) = accepted else {
            break;
        };

        let s = DVector::from_iterator(dim, (0..dim).map(|i| x_new[i] - x[i]));
        let g_new = DVector::from_iterator(dim, e_new.grad.iter().map(|v| -v));
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 {
            // Standard BFGS inverse-Hessian update.
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            h = &h - (&hy * s.transpose() + &s * hy.transpose()) * rho
                + &s * s.transpose() * (rho * rho * yhy + rho);
        }
        x = x_new;
        eval = e_new;
    }

    Some((eval.value, x))
}

fn clamp_vec(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}
