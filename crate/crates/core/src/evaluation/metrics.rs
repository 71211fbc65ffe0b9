use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::prondf::{interval_score, Z_SCORE_95};

/// Predictive mean with an optional variance (absent for deterministic
/// models), in original output units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<T> {
    pub mean: T,
    pub variance: Option<T>,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            context: "metrics",
            expected: b,
            actual: a,
        });
    }
    if a == 0 {
        return Err(Error::InvalidArgument("metrics need at least one prediction".into()));
    }
    Ok(())
}

pub fn mse<T: Real>(means: &[T], targets: &[T]) -> Result<T> {
    check_lengths(means.len(), targets.len())?;
    let sum: T = means.iter().zip(targets).map(|(&m, &y)| (m - y) * (m - y)).sum();
    Ok(sum / T::from_count(targets.len()))
}

/// Mean interval score of the PIs `μ ± 1.96σ`. `preds` holds `(μ, σ)`.
pub fn mean_interval_score<T: Real>(preds: &[(T, T)], targets: &[T], gamma: T) -> Result<T> {
    check_lengths(preds.len(), targets.len())?;
    let mut sum = T::zero();
    for (&(mu, sigma), &y) in preds.iter().zip(targets) {
        if !(sigma > T::zero()) {
            return Err(Error::InvalidArgument(format!("interval score needs σ > 0, got {}", sigma.as_f64())));
        }
        sum = sum + interval_score(y, mu, sigma, gamma);
    }
    Ok(sum / T::from_count(targets.len()))
}

/// Fraction of targets inside `μ ± 1.96σ`.
pub fn coverage95<T: Real>(preds: &[(T, T)], targets: &[T]) -> Result<f64> {
    check_lengths(preds.len(), targets.len())?;
    let z = T::lit(Z_SCORE_95);
    let inside = preds
        .iter()
        .zip(targets)
        .filter(|(&(mu, sigma), &y)| (y - mu).abs() <= z * sigma)
        .count();
    Ok(inside as f64 / targets.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_is: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage95: Option<f64>,
    pub n_test: usize,
}

impl MetricsReport {
    /// Interval metrics are reported only when every prediction carries a
    /// variance. Zero variances are floored at the smallest positive value.
    pub fn from_predictions<T: Real>(preds: &[Prediction<T>], targets: &[T]) -> Result<Self> {
        let means: Vec<T> = preds.iter().map(|p| p.mean).collect();
        let mse = mse(&means, targets)?.as_f64();
        let intervals: Option<Vec<(T, T)>> = preds
            .iter()
            .map(|p| p.variance.map(|v| (p.mean, v.max(T::zero()).sqrt().max(T::min_positive_value()))))
            .collect();
        let (mean_is, coverage95) = match intervals {
            Some(iv) => (
                Some(mean_interval_score(&iv, targets, T::lit(0.05))?.as_f64()),
                Some(coverage95(&iv, targets)?),
            ),
            None => (None, None),
        };
        Ok(Self {
            mse,
            mean_is,
            coverage95,
            n_test: targets.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 5.0);
        assert_eq!(mse(&[0.0, 0.0], &[3.0, 1.0]).unwrap(), 5.0);
        assert!(mse(&[0.0], &[1.0, 2.0]).is_err());
        assert!(mse::<f64>(&[], &[]).is_err());
    }

    #[test]
    fn interval_score_cases() {
        let covered = [(0.0f64, 1.0), (1.0, 2.0)];
        let s = mean_interval_score(&covered, &[0.5, 1.0], 0.05).unwrap();
        assert!((s - 3.92 * 1.5).abs() < 1e-12);
        let wide: Vec<_> = covered.iter().map(|&(m, s)| (m, 10.0 * s)).collect();
        let s10 = mean_interval_score(&wide, &[0.5, 1.0], 0.05).unwrap();
        assert!((s10 - 10.0 * s).abs() < 1e-12);
        // l = 0, u = 1, y = 1.5
        let sigma = 0.5 / 1.96;
        let v: f64 = mean_interval_score(&[(0.5, sigma)], &[1.5], 0.05).unwrap();
        assert!((v - 21.0).abs() < 1e-12);
        assert!(mean_interval_score(&[(0.0, 0.0)], &[0.0], 0.05).is_err());
    }

    #[test]
    fn interval_score_bounds_width() {
        let preds = [(0.0, 1.0), (2.0, 0.5), (-1.0, 0.1)];
        let targets = [5.0, 2.1, 3.0];
        let width = preds.iter().map(|p| 2.0 * 1.96 * p.1).sum::<f64>() / 3.0;
        assert!(mean_interval_score(&preds, &targets, 0.05).unwrap() >= width);
    }

    #[test]
    fn coverage_counts_inside() {
        let preds = [(0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0)];
        assert_eq!(coverage95(&preds, &[0.0, 1.9, -1.96, 2.5]).unwrap(), 0.75);
    }

    #[test]
    fn report_from_predictions() {
        let det = [Prediction { mean: 1.0, variance: None }];
        let r = MetricsReport::from_predictions(&det, &[1.0]).unwrap();
        assert_eq!((r.mse, r.mean_is, r.coverage95, r.n_test), (0.0, None, None, 1));
        let prob = [Prediction { mean: 1.0, variance: Some(4.0) }];
        let r = MetricsReport::from_predictions(&prob, &[1.0]).unwrap();
        assert!((r.mean_is.unwrap() - 3.92 * 2.0).abs() < 1e-12);
        assert_eq!(r.coverage95, Some(1.0));
    }
}
