//! Ordinary least-squares straight-line fits.

use crate::error::{Result, WmError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub rms: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(WmError::InsufficientData(format!("need at least two paired samples, got {}", x.len().min(y.len()))));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(WmError::InsufficientData("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    Ok(LineFit { slope, intercept, rms })
}

/// Exponential rate of `norms(s)` from a straight-line fit of `ln(norm)`.
pub fn fit_exponential(s: &[f64], norms: &[f64]) -> Result<LineFit> {
    if norms.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(WmError::InsufficientData("exponential fit needs positive finite norms".into()));
    }
    let logs: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    fit_line(s, &logs)
}

/// Observed convergence order from errors at successively halved spacings.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|e| (e[0] / e[1]).log2()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_exponential() {
        let s: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let n: Vec<f64> = s.iter().map(|s| 3.0 * (-0.7 * s).exp()).collect();
        let f = fit_exponential(&s, &n).unwrap();
        assert!((f.slope + 0.7).abs() < 1e-12 && f.rms < 1e-12);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(fit_line(&[1.0], &[2.0]).is_err());
        assert!(fit_line(&[1.0, 1.0], &[2.0, 3.0]).is_err());
        assert!(fit_exponential(&[0.0, 1.0], &[1.0, 0.0]).is_err());
    }
}
