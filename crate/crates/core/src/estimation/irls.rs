//! Trimmed least-squares start and the IRLS solver at a fixed `(r, d)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Regime, Result, TarmaError};
use crate::estimation::config::{Convergence, FitConfig, InnerSolver, IrlsPass};
use crate::loss::{m_scale, median, rms_scale, Loss, LossFamily, LossSpec, ScalePolicy};
use crate::model::params::Layout;
use crate::model::recursion::{jacobian_from, residuals_from, ResidualDerivatives};
use crate::model::TarmaParams;
use crate::series::TimeSeries;

/// The data and the fixed part `(p, q, r, d, start)` of one estimation problem.
#[derive(Debug, Clone)]
pub(crate) struct Problem<'a> {
    pub x: &'a [f64],
    pub layout: Layout,
    pub r: f64,
    pub d: usize,
    /// 0-based index of the first residual / objective term.
    pub start: usize,
    /// Objective-term inclusion, one flag per residual.
    pub mask: Option<Vec<bool>>,
}

impl<'a> Problem<'a> {
    pub fn new(x: &'a [f64], p: usize, q: usize, r: f64, d: usize, start: usize) -> Result<Self> {
        if start < p.max(d) {
            return Err(TarmaError::InvalidArgument(format!(
                "start index {start} below max(p, d) = {}",
                p.max(d)
            )));
        }
        if x.len() <= start {
            return Err(TarmaError::TooShort {
                needed: start + 1,
                got: x.len(),
            });
        }
        Ok(Self {
            x,
            layout: Layout::new(p, q),
            r,
            d,
            start,
            mask: None,
        })
    }

    pub fn terms(&self) -> usize {
        self.x.len() - self.start
    }

    pub fn params(&self, lambda: &[f64]) -> TarmaParams {
        TarmaParams::from_lambda(self.layout.p, self.layout.q, lambda, self.r, self.d)
    }

    pub fn residuals(&self, lambda: &[f64]) -> Vec<f64> {
        residuals_from(self.x, &self.params(lambda), self.start)
    }

    pub fn derivatives(&self, lambda: &[f64]) -> ResidualDerivatives {
        jacobian_from(self.x, &self.params(lambda), self.start)
    }

    fn included(&self, t: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[t])
    }

    pub fn objective(&self, loss: &Loss, eps: &[f64]) -> f64 {
        let mut total = 0.0;
        for (t, e) in eps.iter().enumerate() {
            if self.included(t) {
                if !e.is_finite() {
                    return f64::INFINITY;
                }
                total += loss.rho(*e);
            }
        }
        total
    }

    pub fn included_residuals(&self, eps: &[f64]) -> Vec<f64> {
        eps.iter()
            .enumerate()
            .filter(|(t, _)| self.included(*t))
            .map(|(_, e)| *e)
            .collect()
    }

    /// Effective objective terms per regime.
    pub fn regime_counts(&self) -> [usize; 2] {
        let mut c = [0, 0];
        for (t, i) in (self.start..self.x.len()).enumerate() {
            if self.included(t) {
                c[usize::from(self.x[i - self.d] > self.r)] += 1;
            }
        }
        c
    }

    pub fn check_identifiable(&self) -> Result<()> {
        let needed = self.layout.per_regime();
        let counts = self.regime_counts();
        for (g, regime) in [Regime::Lower, Regime::Upper].into_iter().enumerate() {
            if counts[g] < needed {
                return Err(TarmaError::InsufficientRegimeData {
                    regime,
                    got: counts[g],
                    needed,
                });
            }
        }
        Ok(())
    }

    fn scale(&self, policy: ScalePolicy, eps: &[f64]) -> Result<f64> {
        match policy {
            ScalePolicy::Fixed(s) => Ok(s),
            ScalePolicy::Mad | ScalePolicy::Auto => m_scale(&self.included_residuals(eps)),
            ScalePolicy::Rms => rms_scale(&self.included_residuals(eps)),
        }
    }
}

/// Result of an IRLS fit at fixed `(r, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedFit {
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub sigma: f64,
    pub convergence: Convergence,
}

fn regime(layout: &Layout, j: usize) -> Regime {
    if layout.regime_of(j) == 0 {
        Regime::Lower
    } else {
        Regime::Upper
    }
}

/// Pivot below which a column of the unit-diagonal normal matrix counts as
/// linearly dependent on the earlier ones.
const SINGULAR_PIVOT: f64 = 1e-12;

fn solve_normal(a: &[f64], b: &[f64], k: usize, damping: f64, layout: &Layout) -> Result<Vec<f64>> {
    // Rank check of the intercept and AR columns on the correlation form of
    // A. MA columns are left to the damping: at theta = 0 they coincide with
    // the AR columns.
    let diag: Vec<f64> = (0..k).map(|j| a[j * k + j]).collect();
    if let Some(j) = diag.iter().position(|d| !(*d > 0.0)) {
        return Err(TarmaError::SingularNormal {
            regime: regime(layout, j),
        });
    }
    let scale: Vec<f64> = diag.iter().map(|d| d.sqrt()).collect();
    let corr = DMatrix::from_fn(k, k, |i, j| a[i * k + j] / (scale[i] * scale[j]));
    let n_ar = layout.theta(0);
    let mut l = corr.clone();
    for j in 0..n_ar {
        let mut pivot = l[(j, j)];
        for m in 0..j {
            pivot -= l[(j, m)] * l[(j, m)];
        }
        if !(pivot > SINGULAR_PIVOT) {
            return Err(TarmaError::SingularNormal {
                regime: regime(layout, j),
            });
        }
        let root = pivot.sqrt();
        l[(j, j)] = root;
        for i in j + 1..n_ar {
            let mut v = l[(i, j)];
            for m in 0..j {
                v -= l[(i, m)] * l[(j, m)];
            }
            l[(i, j)] = v / root;
        }
    }
    let mut m = corr;
    for j in 0..k {
        m[(j, j)] += damping;
    }
    let rhs = DVector::from_fn(k, |i, _| b[i] / scale[i]);
    let sol = m
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or(TarmaError::SingularNormal {
            regime: regime(layout, k - 1),
        })?;
    Ok((0..k).map(|i| sol[i] / scale[i]).collect())
}

/// Damped Gauss-Newton on `sum w_t e_t(lambda)^2`, accepting a step only when
/// the true objective at `loss` does not increase. A rejected step raises the
/// Marquardt damping tenfold, shortening the step and turning it towards the
/// gradient; an accepted one lowers it tenfold. `weights` already include
/// the objective mask. Returns the accepted objective values.
fn weighted_gauss_newton(
    problem: &Problem<'_>,
    loss: &Loss,
    weights: &[f64],
    lambda: &mut Vec<f64>,
    objective: &mut f64,
    settings: &InnerSolver,
    obj_tol: f64,
) -> Result<Vec<f64>> {
    let k = problem.layout.len();
    let mut accepted = vec![*objective];
    let mut a = vec![0.0; k * k];
    let mut b = vec![0.0; k];
    let mut mu = 0.0f64;
    for _ in 0..settings.max_iters {
        let der = problem.derivatives(lambda);
        a.iter_mut().for_each(|v| *v = 0.0);
        b.iter_mut().for_each(|v| *v = 0.0);
        for (t, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let g = der.row(t);
            let we = w * der.residuals[t];
            for i in 0..k {
                if g[i] == 0.0 {
                    continue;
                }
                let wgi = w * g[i];
                b[i] -= we * g[i];
                for j in i..k {
                    a[i * k + j] += wgi * g[j];
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                a[i * k + j] = a[j * k + i];
            }
        }
        let lam_scale = 1.0 + lambda.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut moved = false;
        let mut last_step = 0.0;
        let before = *objective;
        for _ in 0..=settings.max_rejections {
            let step = solve_normal(&a, &b, k, settings.damping + mu, &problem.layout)?;
            let trial: Vec<f64> = lambda.iter().zip(&step).map(|(l, d)| l + d).collect();
            let obj = problem.objective(loss, &problem.residuals(&trial));
            if obj <= *objective {
                last_step = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                moved = obj < *objective || last_step > 0.0;
                *lambda = trial;
                *objective = obj;
                accepted.push(obj);
                mu = if mu < 1e-5 { 0.0 } else { mu * 0.1 };
                break;
            }
            mu = if mu == 0.0 { 1e-4 } else { mu * 10.0 };
            if step.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= 1e-3 * settings.step_tol * lam_scale {
                break;
            }
        }
        if !moved || last_step <= settings.step_tol * lam_scale || before - *objective <= obj_tol * before.abs() {
            break;
        }
    }
    Ok(accepted)
}

pub(crate) fn fit_problem(problem: &Problem<'_>, config: &FitConfig, init: &[f64]) -> Result<FixedFit> {
    fit_problem_with(problem, &config.loss, config, init)
}

pub(crate) fn fit_problem_with(
    problem: &Problem<'_>,
    loss_spec: &LossSpec,
    config: &FitConfig,
    init: &[f64],
) -> Result<FixedFit> {
    let k = problem.layout.len();
    if init.len() != k {
        return Err(TarmaError::Dimension {
            field: "init",
            expected: k,
            got: init.len(),
        });
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(TarmaError::InvalidArgument("initial lambda is not finite".into()));
    }
    problem.check_identifiable()?;

    let mut lambda = init.to_vec();
    let mut eps = problem.residuals(&lambda);
    if eps.iter().any(|e| !e.is_finite()) {
        return Err(TarmaError::Divergence);
    }
    let mut conv = Convergence::default();
    let mut sigma = problem.scale(loss_spec.effective_scale(), &eps)?;
    let mut objective = f64::NAN;

    for iter in 1..=config.max_irls_iters {
        sigma = problem.scale(loss_spec.effective_scale(), &eps)?;
        let loss = Loss::new(loss_spec.family, sigma)?;
        let start_obj = problem.objective(&loss, &eps);
        if !start_obj.is_finite() {
            return Err(TarmaError::Divergence);
        }
        let weights: Vec<f64> = eps
            .iter()
            .enumerate()
            .map(|(t, e)| if problem.included(t) { loss.weight(*e) } else { 0.0 })
            .collect();
        objective = start_obj;
        let fixed_weights = matches!(loss_spec.family, LossFamily::LeastSquares) || loss_spec.alpha() == Some(0.0);
        // Constant weights make the inner problem the whole fit, so it is
        // solved to the step tolerance.
        let obj_tol = if fixed_weights { 0.0 } else { config.irls_tol };
        let accepted =
            weighted_gauss_newton(problem, &loss, &weights, &mut lambda, &mut objective, &config.inner, obj_tol)?;
        if !objective.is_finite() {
            return Err(TarmaError::Divergence);
        }
        eps = problem.residuals(&lambda);
        conv.iterations = iter;
        conv.passes.push(IrlsPass {
            sigma,
            objective_start: start_obj,
            objective_end: objective,
            inner_steps: accepted.len() - 1,
            accepted,
        });
        let rel = (start_obj - objective).abs() / start_obj.abs().max(f64::MIN_POSITIVE);
        if rel < config.irls_tol || (fixed_weights && conv.passes.len() >= 2) {
            conv.converged = true;
            break;
        }
    }
    Ok(FixedFit {
        lambda,
        objective,
        sigma,
        convergence: conv,
    })
}

/// Marks the `ceil(trim * terms)` objective terms whose observations lie
/// farthest from the series median.
pub(crate) fn trim_mask(x: &[f64], start: usize, trim_fraction: f64) -> Vec<bool> {
    let terms = x.len() - start;
    let n_trim = (trim_fraction * terms as f64).ceil() as usize;
    let mut mask = vec![true; terms];
    if n_trim == 0 {
        return mask;
    }
    let med = median(x);
    let mut order: Vec<usize> = (0..terms).collect();
    // Most extreme first; ties by earlier time.
    order.sort_by(|&a, &b| {
        let da = (x[start + a] - med).abs();
        let db = (x[start + b] - med).abs();
        db.total_cmp(&da).then(a.cmp(&b))
    });
    for &t in order.iter().take(n_trim) {
        mask[t] = false;
    }
    mask
}

pub(crate) fn initial_for(problem: &Problem<'_>, trim_fraction: f64, from: Option<&[f64]>) -> Result<Vec<f64>> {
    let mut trimmed = problem.clone();
    trimmed.mask = Some(trim_mask(problem.x, problem.start, trim_fraction));
    trimmed.check_identifiable()?;
    let k = problem.layout.len();
    let mut lambda = from.map_or_else(|| vec![0.0; k], <[f64]>::to_vec);
    let loss = Loss::new(LossFamily::LeastSquares, 1.0)?;
    let eps = trimmed.residuals(&lambda);
    let mut objective = trimmed.objective(&loss, &eps);
    if !objective.is_finite() {
        lambda = vec![0.0; k];
        objective = trimmed.objective(&loss, &trimmed.residuals(&lambda));
    }
    let weights: Vec<f64> = (0..trimmed.terms())
        .map(|t| if trimmed.included(t) { 1.0 } else { 0.0 })
        .collect();
    weighted_gauss_newton(&trimmed, &loss, &weights, &mut lambda, &mut objective, &InnerSolver::default(), 0.0)?;
    Ok(lambda)
}

/// Least squares on the sample with the most extreme `trim_fraction` of
/// objective terms removed, started from zero coefficients. Trimmed
/// observations still feed the residual recursion.
pub fn initial_estimate(series: &TimeSeries, p: usize, q: usize, r: f64, d: usize, trim_fraction: f64) -> Result<Vec<f64>> {
    if !(0.0..0.5).contains(&trim_fraction) {
        return Err(TarmaError::InvalidArgument(format!(
            "trim_fraction {trim_fraction} outside [0, 0.5)"
        )));
    }
    let problem = Problem::new(series.values(), p, q, r, d, p.max(d))?;
    initial_for(&problem, trim_fraction, None)
}

/// IRLS at fixed `(r, d)` from `init`. The objective sums from
/// `config.start_index` (default `max(p, d)`), not from the profile-search
/// default, so the result is comparable to a stand-alone fit.
pub fn fit_fixed_threshold(series: &TimeSeries, r: f64, d: usize, config: &FitConfig, init: &[f64]) -> Result<FixedFit> {
    config.validate()?;
    let base = config.p.max(d);
    let start = config.start_index.map_or(base, |s| s.max(base));
    let problem = Problem::new(series.values(), config.p, config.q, r, d, start)?;
    fit_problem(&problem, config, init)
}
