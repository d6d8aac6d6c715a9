use nalgebra::DMatrix;

use crate::error::{CaboError, Result};
use crate::Point;

const SQRT5: f64 = 2.23606797749979;

/// Matérn-5/2 kernel with constant prior mean.
///
/// `output_scale` is the kernel variance (prior variance at any point);
/// `lengthscales` holds either a single isotropic value or one entry per
/// input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub lengthscales: Vec<f64>,
    pub output_scale: f64,
    pub mean_const: f64,
}

impl KernelSpec {
    pub fn isotropic(lengthscale: f64, output_scale: f64, mean_const: f64) -> Self {
        Self {
            lengthscales: vec![lengthscale],
            output_scale,
            mean_const,
        }
    }

    pub fn ard(lengthscales: Vec<f64>, output_scale: f64, mean_const: f64) -> Self {
        Self {
            lengthscales,
            output_scale,
            mean_const,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() || self.lengthscales.iter().any(|&l| !(l > 0.0)) {
            return Err(CaboError::InvalidArgument(
                "lengthscales must be positive".into(),
            ));
        }
        if !(self.output_scale >= 0.0) || !self.output_scale.is_finite() {
            return Err(CaboError::InvalidArgument(
                "output_scale must be finite and nonnegative".into(),
            ));
        }
        if !self.mean_const.is_finite() {
            return Err(CaboError::InvalidArgument("mean_const must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    fn lengthscale_for(&self, dim: usize) -> f64 {
        if self.lengthscales.len() == 1 {
            self.lengthscales[0]
        } else {
            self.lengthscales[dim]
        }
    }

    /// Scaled Euclidean distance `||(x - y) / l||`.
    #[inline]
    pub fn scaled_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        let mut r2 = 0.0;
        for i in 0..x.len() {
            let d = (x[i] - y[i]) / self.lengthscale_for(i);
            r2 += d * d;
        }
        r2.sqrt()
    }

    /// Kernel value between two points.
    #[inline]
    pub fn k(&self, x: &[f64], y: &[f64]) -> f64 {
        self.output_scale * matern52(self.scaled_distance(x, y))
    }

    /// Prior variance at any point.
    #[inline]
    pub fn k_diag(&self) -> f64 {
        self.output_scale
    }

    /// Prior standard deviation.
    #[inline]
    pub fn prior_std(&self) -> f64 {
        self.output_scale.sqrt()
    }

    /// Gram matrix on one point set (no noise on the diagonal).
    pub fn gram(&self, points: &[Point]) -> DMatrix<f64> {
        let n = points.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.output_scale;
            for j in 0..i {
                let v = self.k(&points[i], &points[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// Cross-covariance matrix, `rows x cols`.
    pub fn cross(&self, rows: &[Point], cols: &[Point]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows.len(), cols.len());
        for (i, x) in rows.iter().enumerate() {
            for (j, y) in cols.iter().enumerate() {
                m[(i, j)] = self.k(x, y);
            }
        }
        m
    }
}

/// Matérn-5/2 correlation as a function of the scaled distance.
#[inline]
pub fn matern52(r: f64) -> f64 {
    let a = SQRT5 * r;
    (1.0 + a + 5.0 * r * r / 3.0) * (-a).exp()
}

/// Derivative of [`matern52`] with respect to `r`.
#[inline]
pub fn matern52_deriv(r: f64) -> f64 {
    let a = SQRT5 * r;
    -(5.0 * r / 3.0) * (1.0 + a) * (-a).exp()
}
