//! Scalar math helpers: Gaussian density/CDF, the modified Bessel function
//! `I_0`, and small-sample statistics used by the stopping rules and reports.

pub const LN_2PI: f64 = 1.8378770664093453;
pub const SQRT_2PI: f64 = 2.5066282746310002;

/// Standard normal density.
#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

/// Log of the standard normal density.
#[inline]
pub fn log_norm_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * LN_2PI
}

/// Standard normal CDF via the complementary error function.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Modified Bessel function of the first kind, order zero.
///
/// Power series for small arguments, asymptotic expansion beyond; the
/// crossover at 15 keeps both branches below 1e-12 relative error.
pub fn bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 15.0 {
        // All-positive series: sum_k (x^2/4)^k / (k!)^2.
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            term *= q / ((k * k) as f64);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        sum
    } else {
        // I0(x) ~ e^x / sqrt(2 pi x) * sum_k prod_{j<=k}(2j-1)^2 / (k! (8x)^k),
        // truncated at the smallest term.
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..40 {
            let next = term * ((2 * k - 1) * (2 * k - 1)) as f64 / (k as f64 * 8.0 * x);
            if next >= term {
                break;
            }
            term = next;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        x.exp() / (2.0 * std::f64::consts::PI * x).sqrt() * sum
    }
}

/// Arithmetic mean. Returns NaN on empty input.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample standard deviation (zero for fewer than two samples).
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Standard error of the mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    sample_std(xs) / (xs.len() as f64).sqrt()
}

/// Quantile with linear interpolation between closest ranks.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&q));
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Inter-quartile range: 75th minus 25th percentile.
pub fn iqr(xs: &[f64]) -> f64 {
    quantile(xs, 0.75) - quantile(xs, 0.25)
}
