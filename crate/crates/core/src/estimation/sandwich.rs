//! Sensitivity and variability matrices, the sandwich covariance and the
//! robust information criterion.

use nalgebra::DMatrix;

use crate::error::{Result, TarmaError};
use crate::estimation::config::{FitResult, HessianMode, Sandwich};
use crate::estimation::irls::Problem;
use crate::loss::{Loss, LossSpec};
use crate::model::recursion::second_derivatives;
use crate::model::TarmaParams;
use crate::series::TimeSeries;

/// Condition numbers above this withhold the covariance.
pub const MAX_CONDITION: f64 = 1e12;

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0f64, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Returns `(H, J, n)` averaged over the objective terms of `problem`.
pub(crate) fn sensitivity_variability(
    problem: &Problem<'_>,
    lambda: &[f64],
    loss: &Loss,
    mode: HessianMode,
) -> (DMatrix<f64>, DMatrix<f64>, usize) {
    let k = problem.layout.len();
    let der = problem.derivatives(lambda);
    let second = match mode {
        HessianMode::Exact => Some(second_derivatives(&problem.params(lambda), &der)),
        HessianMode::GaussNewton => None,
    };
    let n = der.rows();
    let mut h = DMatrix::<f64>::zeros(k, k);
    let mut j = DMatrix::<f64>::zeros(k, k);
    for t in 0..n {
        let e = der.residuals[t];
        let g = der.row(t);
        let psi = loss.psi(e);
        let dpsi = loss.psi_prime(e);
        for a in 0..k {
            for b in 0..k {
                let gg = g[a] * g[b];
                h[(a, b)] += dpsi * gg;
                j[(a, b)] += psi * psi * gg;
            }
        }
        if let Some(s) = &second {
            let block = &s[t * k * k..(t + 1) * k * k];
            for a in 0..k {
                for b in 0..k {
                    h[(a, b)] += psi * block[a * k + b];
                }
            }
        }
    }
    let scale = 1.0 / n as f64;
    (symmetrize(&(h * scale)), symmetrize(&(j * scale)), n)
}

pub(crate) fn sandwich_for(problem: &Problem<'_>, lambda: &[f64], loss: &Loss, mode: HessianMode) -> Result<Sandwich> {
    let (h, j, n) = sensitivity_variability(problem, lambda, loss, mode);
    let cond = condition_number(&h);
    if !(cond <= MAX_CONDITION) {
        return Err(TarmaError::SingularHessian(cond));
    }
    let h_inv = h
        .clone()
        .try_inverse()
        .ok_or(TarmaError::SingularHessian(cond))?;
    let cov = symmetrize(&(&h_inv * &j * &h_inv / n as f64));
    Ok(Sandwich {
        sensitivity: to_rows(&h),
        variability: to_rows(&j),
        covariance: to_rows(&cov),
        condition_number: cond,
        n,
    })
}

/// Sandwich covariance `H^-1 J H^-1 / n` of the coefficient estimates at
/// `params`, with the loss evaluated at scale `sigma` and the residuals
/// started at `max(p, d)`.
pub fn sandwich_covariance(
    series: &TimeSeries,
    params: &TarmaParams,
    loss: &LossSpec,
    sigma: f64,
    mode: HessianMode,
) -> Result<Sandwich> {
    let problem = Problem::new(series.values(), params.p, params.q, params.r, params.d, params.p.max(params.d))?;
    sandwich_for(&problem, &params.lambda(), &loss.at_scale(sigma)?, mode)
}

/// `trace(H^-1 J)` of a fit.
pub fn penalty_trace(fit: &FitResult) -> Result<f64> {
    let s = fit.sandwich()?;
    let h = from_rows(&s.sensitivity);
    let j = from_rows(&s.variability);
    let h_inv = h
        .try_inverse()
        .ok_or(TarmaError::SingularHessian(s.condition_number))?;
    Ok((h_inv * j).trace())
}

/// `2 rho_n + 2 trace(H^-1 J)`.
pub fn model_selection_criterion(fit: &FitResult) -> Result<f64> {
    Ok(2.0 * fit.objective + 2.0 * penalty_trace(fit)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::config::FitConfig;
    use crate::estimation::profile::profile_search;
    use crate::model::{simulate, InnovationSpec};

    /// Textbook heteroskedasticity-robust LS sandwich for a regime-gated
    /// linear regression, written out with plain loops.
    fn gated_ls_sandwich(x: &[f64], r: f64, lam: &[f64], sigma: f64) -> Vec<Vec<f64>> {
        let k = 4;
        let mut xtx = vec![vec![0.0; k]; k];
        let mut meat = vec![vec![0.0; k]; k];
        for t in 1..x.len() {
            let lower = x[t - 1] <= r;
            let z = if lower {
                [1.0, x[t - 1], 0.0, 0.0]
            } else {
                [0.0, 0.0, 1.0, x[t - 1]]
            };
            let fitted: f64 = z.iter().zip(lam).map(|(a, b)| a * b).sum();
            let e = x[t] - fitted;
            for a in 0..k {
                for b in 0..k {
                    xtx[a][b] += z[a] * z[b];
                    meat[a][b] += e * e * z[a] * z[b];
                }
            }
        }
        let inv = DMatrix::from_fn(k, k, |i, j| xtx[i][j]).try_inverse().unwrap();
        let m = DMatrix::from_fn(k, k, |i, j| meat[i][j]);
        // rho = e^2 / (2 sigma^2) + const, so psi = e / sigma^2 and
        // psi' = 1 / sigma^2; the sigma factors cancel in H^-1 J H^-1.
        let _ = sigma;
        let c = &inv * m * &inv;
        (0..k).map(|i| (0..k).map(|j| c[(i, j)]).collect()).collect()
    }

    #[test]
    fn matches_linear_model_sandwich() {
        let mut p = TarmaParams::benchmark_case(1).unwrap();
        p.q = 0;
        p.theta1.clear();
        p.theta2.clear();
        let s = simulate(&p, 500, &InnovationSpec::gaussian(1.0, 31), 500).unwrap();
        let cfg = FitConfig::new(1, 0, LossSpec::power_divergence(0.0)).fixed(p.r, 1);
        let fit = profile_search(&s, &cfg).unwrap();
        let ours = &fit.sandwich.as_ref().unwrap().covariance;
        let oracle = gated_ls_sandwich(s.values(), p.r, &fit.lambda(), fit.sigma_hat);
        for a in 0..4 {
            for b in 0..4 {
                let rel = (ours[a][b] - oracle[a][b]).abs() / oracle[a][a].abs().max(oracle[b][b].abs());
                assert!(rel < 1e-8, "({a},{b}) {} vs {}", ours[a][b], oracle[a][b]);
            }
        }
    }

    #[test]
    fn symmetric_and_psd() {
        for case in 1..=4 {
            let p = TarmaParams::benchmark_case(case).unwrap();
            let s = simulate(&p, 400, &InnovationSpec::gaussian(1.0, case as u64), 500).unwrap();
            let cfg = FitConfig::new(1, 1, LossSpec::power_divergence(0.5)).fixed(0.2, 1);
            let fit = profile_search(&s, &cfg).unwrap();
            let sw = fit.sandwich().unwrap();
            for m in [&sw.sensitivity, &sw.variability, &sw.covariance] {
                for a in 0..6 {
                    for b in 0..6 {
                        assert!((m[a][b] - m[b][a]).abs() < 1e-12);
                    }
                }
            }
            let eig = from_rows(&sw.covariance).symmetric_eigenvalues();
            let max = eig.iter().copied().fold(0.0f64, f64::max);
            assert!(eig.iter().all(|v| *v >= -1e-12 * max));
            let se = fit.std_errors.as_ref().unwrap();
            for (i, v) in se.iter().enumerate() {
                assert_eq!(*v, sw.covariance[i][i].sqrt());
            }
        }
    }

    #[test]
    fn exact_and_gauss_newton_agree_roughly() {
        let p = TarmaParams::benchmark_case(4).unwrap();
        let s = simulate(&p, 2000, &InnovationSpec::gaussian(1.0, 6), 500).unwrap();
        let cfg = FitConfig::new(1, 1, LossSpec::power_divergence(0.3)).fixed(0.2, 1);
        let fit = profile_search(&s, &cfg).unwrap();
        let gn = sandwich_covariance(&s, &fit.params, &fit.loss, fit.sigma_hat, HessianMode::GaussNewton).unwrap();
        let ex = sandwich_covariance(&s, &fit.params, &fit.loss, fit.sigma_hat, HessianMode::Exact).unwrap();
        for i in 0..6 {
            let rel = (gn.covariance[i][i] - ex.covariance[i][i]).abs() / ex.covariance[i][i];
            assert!(rel < 0.3, "{i}: {rel}");
        }
    }

    #[test]
    fn singular_hessian_withholds_covariance() {
        let p = TarmaParams::zeros(1, 1, 0.0, 1);
        let x: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let s = TimeSeries::new(x).unwrap();
        let err = sandwich_covariance(&s, &p, &LossSpec::power_divergence(0.5), 1.0, HessianMode::Exact).unwrap_err();
        assert!(matches!(err, TarmaError::SingularHessian(_)));
    }

    #[test]
    fn penalty_near_parameter_count_for_ls() {
        let p = TarmaParams::benchmark_case(1).unwrap();
        let s = simulate(&p, 2000, &InnovationSpec::gaussian(1.0, 12), 500).unwrap();
        let cfg = FitConfig::new(1, 1, LossSpec::power_divergence(0.0)).fixed(p.r, p.d);
        let fit = profile_search(&s, &cfg).unwrap();
        let tr = penalty_trace(&fit).unwrap();
        assert!((tr - 6.0).abs() < 0.25 * 6.0, "{tr}");
        let crit = model_selection_criterion(&fit).unwrap();
        assert!((crit - 2.0 * fit.objective - 2.0 * tr).abs() < 1e-9);
    }

    #[test]
    fn withheld_covariance_is_an_error() {
        let p = TarmaParams::benchmark_case(1).unwrap();
        let s = simulate(&p, 200, &InnovationSpec::gaussian(1.0, 3), 500).unwrap();
        let cfg = FitConfig::new(1, 1, LossSpec::power_divergence(0.5)).fixed(p.r, p.d);
        let mut fit = profile_search(&s, &cfg).unwrap();
        fit.sandwich = None;
        fit.covariance_error = Some("singular".into());
        assert!(matches!(model_selection_criterion(&fit), Err(TarmaError::CovarianceWithheld(_))));
    }
}
