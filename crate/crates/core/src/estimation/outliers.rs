use serde::{Deserialize, Serialize};

use crate::error::{Result, TarmaError};
use crate::estimation::config::FitResult;

/// Normalised robust weights of a fit with the most down-weighted times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierWeights {
    /// 1-based time of `weights[0]`.
    pub first_time: usize,
    pub weights: Vec<f64>,
    /// 1-based times of the `top_m` smallest weights, smallest first.
    pub flagged: Vec<usize>,
}

/// `w_t = exp(-alpha e_t^2 / (2 sigma^2))`, normalised to sum to one. The
/// `top_m` smallest are flagged; ties go to the larger `|e_t|`, then the
/// earlier time.
pub fn robust_outlier_weights(fit: &FitResult, top_m: usize) -> Result<OutlierWeights> {
    let alpha = fit
        .loss
        .alpha()
        .ok_or_else(|| TarmaError::InvalidArgument("robust weights need a power-divergence fit".into()))?;
    if alpha == 0.0 {
        return Err(TarmaError::UniformWeights);
    }
    let eps = &fit.residuals;
    if top_m > eps.len() {
        return Err(TarmaError::InvalidArgument(format!(
            "top_m {top_m} exceeds the {} available residuals",
            eps.len()
        )));
    }
    let s2 = fit.sigma_hat * fit.sigma_hat;
    let logs: Vec<f64> = eps.iter().map(|e| -alpha * e * e / (2.0 * s2)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        weights[a]
            .total_cmp(&weights[b])
            .then(eps[b].abs().total_cmp(&eps[a].abs()))
            .then(a.cmp(&b))
    });
    let first_time = fit.residual_start;
    Ok(OutlierWeights {
        first_time,
        flagged: order.into_iter().take(top_m).map(|i| i + first_time).collect(),
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{profile_search, FitConfig};
    use crate::loss::LossSpec;
    use crate::model::{contaminate, simulate, ContaminationSpec, InnovationSpec, OutlierKind, TarmaParams};

    fn fitted(alpha: f64) -> FitResult {
        let p = TarmaParams::benchmark_case(1).unwrap();
        let s = simulate(&p, 300, &InnovationSpec::gaussian(1.0, 2), 500).unwrap();
        let cfg = FitConfig::new(1, 1, LossSpec::power_divergence(alpha)).fixed(p.r, p.d);
        profile_search(&s, &cfg).unwrap()
    }

    #[test]
    fn sums_to_one() {
        let w = robust_outlier_weights(&fitted(0.5), 15).unwrap();
        assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(w.flagged.len(), 15);
        let idx: Vec<f64> = w.flagged.iter().map(|t| w.weights[t - w.first_time]).collect();
        assert!(idx.windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn equal_residuals_give_uniform_weights() {
        let mut fit = fitted(0.5);
        let n = fit.residuals.len();
        fit.residuals = vec![0.7; n];
        let w = robust_outlier_weights(&fit, 3).unwrap();
        assert!(w.weights.iter().all(|v| (v - 1.0 / n as f64).abs() < 1e-15));
        assert_eq!(w.flagged, vec![fit.residual_start, fit.residual_start + 1, fit.residual_start + 2]);
    }

    #[test]
    fn ls_fit_is_rejected() {
        assert!(matches!(robust_outlier_weights(&fitted(0.0), 5), Err(TarmaError::UniformWeights)));
        let fit = fitted(0.5);
        assert!(robust_outlier_weights(&fit, fit.residuals.len() + 1).is_err());
    }

    #[test]
    fn finds_injected_additive_outliers() {
        let p = TarmaParams::benchmark_case(1).unwrap();
        let clean = simulate(&p, 300, &InnovationSpec::gaussian(1.0, 17), 500).unwrap();
        let spec = ContaminationSpec::new(OutlierKind::Ao, 0.05, 10.0);
        let (dirty, times) = contaminate(&clean, &spec, 17).unwrap();
        let cfg = FitConfig::new(1, 1, LossSpec::power_divergence(0.5)).fixed(p.r, p.d);
        let fit = profile_search(&dirty, &cfg).unwrap();
        let w = robust_outlier_weights(&fit, 15).unwrap();
        let hits = times.iter().filter(|t| w.flagged.contains(t)).count();
        assert!(hits as f64 >= 0.8 * times.len() as f64, "{hits}/{}", times.len());
    }
}
