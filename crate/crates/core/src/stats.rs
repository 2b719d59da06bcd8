//! Small regression helpers.

use crate::error::{Error, Result};

/// Result of a straight-line fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub n: usize,
}

/// Weighted least squares with weights `1 / sigma^2`.
///
/// The slope standard error comes from the weighted covariance, scaled by
/// the reduced chi-square when there are spare degrees of freedom and the
/// fit is worse than the stated errors suggest.
pub fn weighted_line_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() != sigma.len() {
        return Err(Error::Config("fit arrays have different lengths".into()));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientSignal(format!("{} points cannot fix a line", x.len())));
    }
    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    if w.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::InsufficientSignal("non-positive or infinite fit weight".into()));
    }
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let xm = sx / sw;
    let ym = sy / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - xm) * (x - xm)).sum();
    let sxy: f64 = w.iter().zip(x.iter().zip(y)).map(|(w, (x, y))| w * (x - xm) * (y - ym)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientSignal("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let mut var = 1.0 / sxx;
    let dof = x.len() as f64 - 2.0;
    if dof > 0.0 {
        let chi2: f64 = w
            .iter()
            .zip(x.iter().zip(y))
            .map(|(w, (x, y))| w * (y - intercept - slope * x).powi(2))
            .sum();
        var *= (chi2 / dof).max(1.0);
    }
    Ok(LineFit { slope, intercept, slope_stderr: var.sqrt(), n: x.len() })
}

/// Ordinary least squares; the slope error is estimated from the residuals.
pub fn line_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::Config("fit arrays have different lengths".into()));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientSignal(format!("{n} points cannot fix a line")));
    }
    let xm = x.iter().sum::<f64>() / n as f64;
    let ym = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(x, y)| (x - xm) * (y - ym)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientSignal("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let slope_stderr = if n > 2 {
        let rss: f64 = x.iter().zip(y).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (n as f64 - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit { slope, intercept, slope_stderr, n })
}
