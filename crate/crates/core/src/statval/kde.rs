//! One-dimensional Gaussian kernel density estimation.

use std::f64::consts::{PI, SQRT_2};

/// Kernel contributions beyond this many bandwidths are taken as exactly 0
/// (density) or 0/1 (CDF). The neglected mass is below 1e-18 per point.
const CUTOFF: f64 = 9.0;

#[derive(Debug, Clone)]
pub struct GaussianKde {
    points: Vec<f64>,
    bandwidth: f64,
}

impl GaussianKde {
    /// `points` must be finite and non-empty; `bandwidth` must be positive.
    pub fn new(mut points: Vec<f64>, bandwidth: f64) -> Self {
        assert!(!points.is_empty(), "KDE needs at least one point");
        assert!(bandwidth > 0.0, "KDE bandwidth must be positive");
        points.sort_by(f64::total_cmp);
        GaussianKde { points, bandwidth }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    fn window(&self, x: f64) -> (usize, usize) {
        let reach = CUTOFF * self.bandwidth;
        let lo = self.points.partition_point(|&p| p < x - reach);
        let hi = self.points.partition_point(|&p| p <= x + reach);
        (lo, hi)
    }

    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.window(x);
        let h = self.bandwidth;
        let sum: f64 = self.points[lo..hi]
            .iter()
            .map(|&p| {
                let u = (x - p) / h;
                (-0.5 * u * u).exp()
            })
            .sum();
        sum / (self.points.len() as f64 * h * (2.0 * PI).sqrt())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.window(x);
        let h = self.bandwidth;
        // points right of the window contribute nothing
        let near: f64 = self.points[lo..hi]
            .iter()
            .map(|&p| std_normal_cdf((x - p) / h))
            .sum();
        (lo as f64 + near) / self.points.len() as f64
    }

    /// Inverts the CDF by bisection until the bracket is narrower than `tol`.
    pub fn quantile(&self, p: f64, tol: f64) -> f64 {
        let pad = 2.0 * CUTOFF * self.bandwidth;
        let (mut lo, mut hi) = (self.min() - pad, self.max() + pad);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Linear-interpolation sample quantile of sorted data.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}

/// Silverman's rule of thumb, `0.9 * min(sd, iqr / 1.34) * n^(-1/5)`.
///
/// Falls back to the standard deviation alone when the IQR is zero, so the
/// result is positive whenever `sd` is.
pub fn silverman_bandwidth(sd: f64, raw_iqr: f64, n: usize) -> f64 {
    let spread = if raw_iqr > 0.0 {
        sd.min(raw_iqr / 1.34)
    } else {
        sd
    };
    0.9 * spread * (n as f64).powf(-0.2)
}
