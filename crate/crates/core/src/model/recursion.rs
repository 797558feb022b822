//! The residual recursion of the TARMA model and its derivatives in lambda.
//!
//! Indices here are 0-based. For a series `x[0..n]` residuals are produced
//! for `i in start..n`; lagged residuals before `start` are zero unless a
//! pre-sample is supplied. The regime indicators depend on `(r, d)` only and
//! are constants as far as lambda-derivatives are concerned.

use crate::error::{Result, TarmaError};
use crate::model::params::{Layout, TarmaParams};
use crate::series::TimeSeries;

/// Default 0-based start index: `max(p, d)`.
pub fn default_start(params: &TarmaParams) -> usize {
    params.p.max(params.d)
}

fn check_len(n: usize, start: usize) -> Result<()> {
    if n <= start {
        return Err(TarmaError::TooShort {
            needed: start + 1,
            got: n,
        });
    }
    Ok(())
}

#[inline]
fn is_lower(x: &[f64], i: usize, params: &TarmaParams) -> bool {
    x[i - params.d] <= params.r
}

/// Residuals `eps_t(eta)` for `t = max(p,d)+1 ..= n` (1-based).
pub fn residuals(series: &TimeSeries, params: &TarmaParams) -> Result<Vec<f64>> {
    params.validate(false)?;
    let start = default_start(params);
    check_len(series.len(), start)?;
    Ok(residuals_from(series.values(), params, start))
}

/// Residuals from `start` with zero pre-sample residuals. Requires
/// `start >= max(p, d)`.
pub fn residuals_from(x: &[f64], params: &TarmaParams, start: usize) -> Vec<f64> {
    residuals_seeded(x, params, start, &[])
}

/// As [`residuals_from`] but with `presample` holding the residuals at
/// `start - presample.len() .. start` (the most recent last). Missing lags
/// are zero.
pub fn residuals_seeded(x: &[f64], params: &TarmaParams, start: usize, presample: &[f64]) -> Vec<f64> {
    debug_assert!(start >= params.p.max(params.d));
    let n = x.len();
    let q = params.q;
    let mut eps = Vec::with_capacity(n.saturating_sub(start));
    let lag = |eps: &[f64], m: usize| -> f64 {
        let k = eps.len();
        if m <= k {
            eps[k - m]
        } else {
            let back = m - k;
            if back <= presample.len() {
                presample[presample.len() - back]
            } else {
                0.0
            }
        }
    };
    for i in start..n {
        let (phi, theta) = if is_lower(x, i, params) {
            (&params.phi1, &params.theta1)
        } else {
            (&params.phi2, &params.theta2)
        };
        let mut mean = phi[0];
        for j in 1..=params.p {
            mean += phi[j] * x[i - j];
        }
        for m in 1..=q {
            mean += theta[m - 1] * lag(&eps, m);
        }
        eps.push(x[i] - mean);
    }
    eps
}

/// Residuals together with their first derivatives in lambda.
#[derive(Debug, Clone)]
pub struct ResidualDerivatives {
    pub residuals: Vec<f64>,
    /// Row-major `residuals.len() x k` Jacobian, `k = 2(1+p+q)`.
    pub jacobian: Vec<f64>,
    pub k: usize,
    /// `true` where the lower regime was active.
    pub lower: Vec<bool>,
}

impl ResidualDerivatives {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.jacobian[t * self.k..(t + 1) * self.k]
    }

    pub fn rows(&self) -> usize {
        self.residuals.len()
    }
}

/// Jacobian of the residuals with respect to lambda, one row per residual.
pub fn residual_jacobian(series: &TimeSeries, params: &TarmaParams) -> Result<ResidualDerivatives> {
    params.validate(false)?;
    let start = default_start(params);
    check_len(series.len(), start)?;
    Ok(jacobian_from(series.values(), params, start))
}

pub fn jacobian_from(x: &[f64], params: &TarmaParams, start: usize) -> ResidualDerivatives {
    let layout = params.layout();
    let k = layout.len();
    let (p, q) = (params.p, params.q);
    let n = x.len();
    let rows = n.saturating_sub(start);
    let mut eps: Vec<f64> = Vec::with_capacity(rows);
    let mut jac = vec![0.0; rows * k];
    let mut lower = Vec::with_capacity(rows);

    for (t, i) in (start..n).enumerate() {
        let lo = is_lower(x, i, params);
        let g = usize::from(!lo);
        let (phi, theta) = if lo {
            (&params.phi1, &params.theta1)
        } else {
            (&params.phi2, &params.theta2)
        };
        let mut mean = phi[0];
        for j in 1..=p {
            mean += phi[j] * x[i - j];
        }
        for m in 1..=q.min(t) {
            mean += theta[m - 1] * eps[t - m];
        }
        eps.push(x[i] - mean);
        lower.push(lo);

        let (done, rest) = jac.split_at_mut(t * k);
        let row = &mut rest[..k];
        // Direct regressor terms of the active regime.
        let po = layout.phi(g);
        row[po] = -1.0;
        for j in 1..=p {
            row[po + j] = -x[i - j];
        }
        let to = layout.theta(g);
        for m in 1..=q.min(t) {
            row[to + m - 1] = -eps[t - m];
        }
        // Propagation through the lagged residuals.
        for m in 1..=q.min(t) {
            let th = theta[m - 1];
            if th != 0.0 {
                let prev = &done[(t - m) * k..(t - m + 1) * k];
                for a in 0..k {
                    row[a] -= th * prev[a];
                }
            }
        }
    }
    ResidualDerivatives {
        residuals: eps,
        jacobian: jac,
        k,
        lower,
    }
}

/// Second derivatives of every residual, row-major `rows x k x k`, computed
/// by differentiating the Jacobian recursion once more.
pub fn second_derivatives(params: &TarmaParams, first: &ResidualDerivatives) -> Vec<f64> {
    let layout: Layout = params.layout();
    let k = first.k;
    let kk = k * k;
    let q = params.q;
    let rows = first.rows();
    let mut hess = vec![0.0; rows * kk];
    for t in 0..rows {
        let g = usize::from(!first.lower[t]);
        let theta = if g == 0 { &params.theta1 } else { &params.theta2 };
        let to = layout.theta(g);
        let (done, rest) = hess.split_at_mut(t * kk);
        let cur = &mut rest[..kk];
        for m in 1..=q.min(t) {
            let th = theta[m - 1];
            let prev_h = &done[(t - m) * kk..(t - m + 1) * kk];
            if th != 0.0 {
                for (c, p) in cur.iter_mut().zip(prev_h) {
                    *c -= th * p;
                }
            }
            // Cross terms from differentiating theta_{g,m} * d eps_{t-m}.
            let a = to + m - 1;
            let dprev = first.row(t - m);
            for b in 0..k {
                cur[a * k + b] -= dprev[b];
                cur[b * k + a] -= dprev[b];
            }
        }
    }
    hess
}

/// One-step-ahead conditional mean of the observation following `history`.
///
/// `residual_history` holds the residuals aligned with the end of
/// `history` (its last element is the residual at the last observation);
/// lags not covered are taken as zero.
pub fn conditional_mean(history: &[f64], residual_history: &[f64], params: &TarmaParams) -> Result<f64> {
    let needed = params.p.max(params.d);
    if history.len() < needed {
        return Err(TarmaError::TooShort {
            needed,
            got: history.len(),
        });
    }
    let n = history.len();
    let lower = history[n - params.d] <= params.r;
    let (phi, theta) = if lower {
        (&params.phi1, &params.theta1)
    } else {
        (&params.phi2, &params.theta2)
    };
    let mut mean = phi[0];
    for j in 1..=params.p {
        mean += phi[j] * history[n - j];
    }
    let rl = residual_history.len();
    for m in 1..=params.q.min(rl) {
        mean += theta[m - 1] * residual_history[rl - m];
    }
    Ok(mean)
}
