use serde::{Deserialize, Serialize};

use crate::error::{Result, TarmaError};
use crate::estimation::{profile_search, FitConfig, FitResult};
use crate::loss::LossSpec;
use crate::model::recursion::{conditional_mean, residuals_from};
use crate::model::TarmaParams;
use crate::series::TimeSeries;

/// Mean absolute percentage error, `100 / h * sum |(a - p) / a|`.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    Ok(mape_sum(actual, predicted)? / actual.len() as f64)
}

/// `100 * sum |(a - p) / a|`, without dividing by the horizon.
pub fn mape_sum(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(TarmaError::Dimension {
            field: "predicted",
            expected: actual.len(),
            got: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(TarmaError::InvalidArgument("MAPE needs at least one point".into()));
    }
    let mut total = 0.0;
    for (i, (a, p)) in actual.iter().zip(predicted).enumerate() {
        if *a == 0.0 {
            return Err(TarmaError::InvalidArgument(format!(
                "actual value at position {} is zero; MAPE undefined",
                i + 1
            )));
        }
        total += ((a - p) / a).abs();
    }
    Ok(100.0 * total)
}

fn check_history(params: &TarmaParams, start: usize, len: usize) -> Result<()> {
    if start < params.p.max(params.d) {
        return Err(TarmaError::InvalidArgument(format!(
            "residual start {start} below max(p, d)"
        )));
    }
    if len <= start {
        return Err(TarmaError::TooShort {
            needed: start + 1,
            got: len,
        });
    }
    Ok(())
}

/// One-step forecasts of `test` with fixed parameters: the forecast of each
/// test point uses every actual observation before it. Residuals start at
/// the 0-based index `start`.
pub fn one_step_forecasts(train: &TimeSeries, test: &TimeSeries, params: &TarmaParams, start: usize) -> Result<Vec<f64>> {
    if test.is_empty() {
        return Err(TarmaError::InvalidArgument("empty test window".into()));
    }
    check_history(params, start, train.len())?;
    let all: Vec<f64> = train.values().iter().chain(test.values()).copied().collect();
    let eps = residuals_from(&all, params, start);
    let n = train.len();
    (0..test.len())
        .map(|i| conditional_mean(&all[..n + i], &eps[..n + i - start], params))
        .collect()
}

/// [`one_step_forecasts`] with the parameters and residual start of `fit`.
pub fn forecast_horizon(train: &TimeSeries, test: &TimeSeries, fit: &FitResult) -> Result<Vec<f64>> {
    one_step_forecasts(train, test, &fit.params, fit.residual_start - 1)
}

/// Multi-step forecasts `1..=horizon` steps past the end of `train`, with
/// future innovations set to zero.
pub fn iterated_forecasts(train: &TimeSeries, params: &TarmaParams, start: usize, horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(TarmaError::InvalidArgument("horizon must be >= 1".into()));
    }
    check_history(params, start, train.len())?;
    let mut x = train.values().to_vec();
    let mut eps = residuals_from(&x, params, start);
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let m = conditional_mean(&x, &eps, params)?;
        x.push(m);
        eps.push(0.0);
        out.push(m);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub mape: Option<f64>,
    pub mape_sum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSelection {
    pub alpha: f64,
    pub mape: f64,
    pub table: Vec<AlphaRow>,
}

/// Fits `base` with every `alpha` on `train`, forecasts `test` one step at a
/// time and keeps the smallest MAPE (ties to the smaller `alpha`).
pub fn select_alpha(train: &TimeSeries, test: &TimeSeries, alphas: &[f64], base: &FitConfig) -> Result<AlphaSelection> {
    if alphas.is_empty() {
        return Err(TarmaError::InvalidArgument("alpha grid is empty".into()));
    }
    let mut table = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut cfg = base.clone();
        cfg.loss = LossSpec::power_divergence(alpha).with_scale(base.loss.scale_policy);
        let row = profile_search(train, &cfg)
            .and_then(|fit| forecast_horizon(train, test, &fit))
            .and_then(|pred| Ok((mape(test.values(), &pred)?, mape_sum(test.values(), &pred)?)));
        table.push(match row {
            Ok((m, s)) => AlphaRow {
                alpha,
                mape: Some(m),
                mape_sum: Some(s),
                error: None,
            },
            Err(e) => AlphaRow {
                alpha,
                mape: None,
                mape_sum: None,
                error: Some(e.to_string()),
            },
        });
    }
    let best = table
        .iter()
        .filter_map(|r| r.mape.map(|m| (r.alpha, m)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
    match best {
        Some((alpha, mape)) => Ok(AlphaSelection { alpha, mape, table }),
        None => Err(TarmaError::AllFailed(format!(
            "every alpha failed; first error: {}",
            table[0].error.clone().unwrap_or_default()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{contaminate, simulate, ContaminationSpec, InnovationSpec, OutlierKind};
    use crate::series::split;

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mape(&[2.0], &[1.0]).unwrap(), 50.0);
        assert!((mape(&[1.0, -2.0], &[1.1, -1.8]).unwrap() - 10.0).abs() < 1e-12);
        assert!((mape_sum(&[1.0, -2.0], &[1.1, -1.8]).unwrap() - 20.0).abs() < 1e-12);
        assert!(mape(&[0.0], &[1.0]).is_err());
        assert!(mape(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mape(&[], &[]).is_err());
    }

    #[test]
    fn zero_model_forecasts_zero() {
        let p = TarmaParams::zeros(1, 1, 0.0, 1);
        let train = TimeSeries::new(vec![0.3, -1.0, 2.0, 0.5]).unwrap();
        let test = TimeSeries::new(vec![1.0, -1.0, 4.0]).unwrap();
        assert_eq!(one_step_forecasts(&train, &test, &p, 1).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn pure_intercept_gating() {
        let mut p = TarmaParams::zeros(1, 1, 0.0, 1);
        p.phi1[0] = 1.0;
        p.phi2[0] = -1.0;
        let train = TimeSeries::new(vec![0.5, -0.2, 0.7]).unwrap();
        let test = TimeSeries::new(vec![-0.4, -0.1, 0.9, 0.2]).unwrap();
        // Lags: 0.7, -0.4, -0.1, 0.9.
        assert_eq!(one_step_forecasts(&train, &test, &p, 1).unwrap(), vec![-1.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn in_sample_identity() {
        let p = TarmaParams::benchmark_case(1).unwrap();
        let s = simulate(&p, 200, &InnovationSpec::gaussian(1.0, 4), 500).unwrap();
        let cfg = FitConfig::new(1, 1, LossSpec::power_divergence(0.5)).fixed(p.r, p.d);
        let fit = profile_search(&s, &cfg).unwrap();
        let (head, last) = split(&s, 1).unwrap();
        let f = forecast_horizon(&head, &last, &fit).unwrap();
        let e = *fit.residuals.last().unwrap();
        assert!((f[0] - (s.values()[199] - e)).abs() < 1e-12);
    }

    #[test]
    fn iterated_matches_one_step_for_first_point() {
        let p = TarmaParams::benchmark_case(2).unwrap();
        let s = simulate(&p, 100, &InnovationSpec::gaussian(1.0, 8), 500).unwrap();
        let (train, test) = split(&s, 5).unwrap();
        let a = one_step_forecasts(&train, &test, &p, 1).unwrap();
        let b = iterated_forecasts(&train, &p, 1, 5).unwrap();
        assert_eq!(a[0], b[0]);
        assert_eq!(b.len(), 5);
        assert!(iterated_forecasts(&train, &p, 1, 0).is_err());
    }

    #[test]
    fn singleton_grid_and_argmin() {
        let p = TarmaParams::benchmark_case(2).unwrap();
        let s = simulate(&p, 212, &InnovationSpec::gaussian(1.0, 5), 500).unwrap();
        let (train, test) = split(&s, 12).unwrap();
        let base = FitConfig::new(1, 1, LossSpec::power_divergence(0.0)).fixed(0.0, 1);
        let one = select_alpha(&train, &test, &[0.4], &base).unwrap();
        assert_eq!(one.alpha, 0.4);
        let many = select_alpha(&train, &test, &[0.0, 0.2, 0.4, 0.6, 0.8], &base).unwrap();
        let brute = many
            .table
            .iter()
            .filter(|r| r.mape.is_some())
            .min_by(|a, b| a.mape.unwrap().total_cmp(&b.mape.unwrap()))
            .unwrap();
        assert_eq!(brute.alpha, many.alpha);
        assert!(select_alpha(&train, &test, &[], &base).is_err());
    }

    #[test]
    fn contaminated_train_prefers_robust_alpha() {
        let p = TarmaParams::benchmark_case(2).unwrap();
        let mut robust = 0;
        let seeds = 11;
        for seed in 0..seeds {
            let s = simulate(&p, 212, &InnovationSpec::gaussian(1.0, 100 + seed), 500).unwrap();
            let (train, test) = split(&s, 12).unwrap();
            let spec = ContaminationSpec::new(OutlierKind::Ao, 0.1, 10.0);
            let (dirty, _) = contaminate(&train, &spec, seed).unwrap();
            let base = FitConfig::new(1, 1, LossSpec::power_divergence(0.0)).fixed(p.r, p.d);
            let sel = select_alpha(&dirty, &test, &[0.0, 0.25, 0.5, 0.75, 1.0], &base).unwrap();
            robust += usize::from(sel.alpha > 0.0);
        }
        assert!(2 * robust > seeds as usize, "{robust}/{seeds}");
    }
}
