use serde::{Deserialize, Serialize};

use crate::error::{Result, TarmaError};
use crate::loss::LossSpec;
use crate::model::TarmaParams;

/// Candidate thresholds for the profile search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdGrid {
    /// Order statistics of `X[t-d]` between two percentiles, at most
    /// `max_points` of them.
    Quantiles { lo: f64, hi: f64, max_points: usize },
    Explicit(Vec<f64>),
    Fixed(f64),
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        ThresholdGrid::Quantiles {
            lo: 0.10,
            hi: 0.90,
            max_points: 100,
        }
    }
}

/// Settings of the damped Gauss-Newton solver used inside each IRLS pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerSolver {
    pub max_iters: usize,
    /// Minimum Marquardt damping: `mu * diag(A)` is added to the normal
    /// matrix `A`.
    pub damping: f64,
    /// Stop when `max|step| <= step_tol * (1 + max|lambda|)`.
    pub step_tol: f64,
    /// Rejected trial steps, each with ten times the damping of the last,
    /// before the solve stops.
    pub max_rejections: usize,
}

impl Default for InnerSolver {
    fn default() -> Self {
        Self {
            max_iters: 100,
            damping: 1e-10,
            step_tol: 1e-10,
            max_rejections: 40,
        }
    }
}

/// How the sensitivity matrix is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    /// Includes the second-derivative recursion of the residuals.
    #[default]
    Exact,
    /// Drops `psi(e) d^2 e / d lambda^2`.
    GaussNewton,
}

/// Where each grid fit starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StartStrategy {
    /// Trimmed-LS start at the first threshold of each delay, then the
    /// previous grid point's estimate.
    #[default]
    WarmStart,
    /// A fresh trimmed-LS start at every grid point.
    TrimmedEach,
}

fn default_p() -> usize {
    1
}
fn default_q() -> usize {
    1
}
fn default_delays() -> Vec<usize> {
    (1..=6).collect()
}
fn default_max_irls() -> usize {
    50
}
fn default_irls_tol() -> f64 {
    1e-8
}
fn default_trim() -> f64 {
    0.10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_q")]
    pub q: usize,
    pub loss: LossSpec,
    #[serde(default)]
    pub threshold_grid: ThresholdGrid,
    #[serde(default = "default_delays")]
    pub delay_set: Vec<usize>,
    #[serde(default = "default_max_irls")]
    pub max_irls_iters: usize,
    #[serde(default = "default_irls_tol")]
    pub irls_tol: f64,
    #[serde(default)]
    pub inner: InnerSolver,
    #[serde(default = "default_trim")]
    pub trim_fraction: f64,
    #[serde(default)]
    pub start: StartStrategy,
    #[serde(default)]
    pub hessian: HessianMode,
    /// 0-based index of the first objective term. Defaults to
    /// `max(p, max delay)` so that every `(r, d)` sums the same terms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_index: Option<usize>,
}

impl FitConfig {
    pub fn new(p: usize, q: usize, loss: LossSpec) -> Self {
        Self {
            p,
            q,
            loss,
            threshold_grid: ThresholdGrid::default(),
            delay_set: default_delays(),
            max_irls_iters: default_max_irls(),
            irls_tol: default_irls_tol(),
            inner: InnerSolver::default(),
            trim_fraction: default_trim(),
            start: StartStrategy::default(),
            hessian: HessianMode::default(),
            start_index: None,
        }
    }

    /// Fixes `(r, d)`.
    pub fn fixed(mut self, r: f64, d: usize) -> Self {
        self.threshold_grid = ThresholdGrid::Fixed(r);
        self.delay_set = vec![d];
        self
    }

    pub fn with_grid(mut self, grid: ThresholdGrid, delays: Vec<usize>) -> Self {
        self.threshold_grid = grid;
        self.delay_set = delays;
        self
    }

    pub fn max_delay(&self) -> usize {
        self.delay_set.iter().copied().max().unwrap_or(1)
    }

    /// 0-based index of the first objective term.
    pub fn objective_start(&self) -> usize {
        let base = self.p.max(self.max_delay());
        self.start_index.map_or(base, |s| s.max(base))
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(0.0..0.5).contains(&self.trim_fraction) {
            return Err(TarmaError::InvalidArgument(format!(
                "trim_fraction {} outside [0, 0.5)",
                self.trim_fraction
            )));
        }
        if !(self.irls_tol > 0.0) || !(self.inner.step_tol > 0.0) || self.inner.damping < 0.0 {
            return Err(TarmaError::InvalidArgument("tolerances must be > 0".into()));
        }
        if self.max_irls_iters == 0 || self.inner.max_iters == 0 {
            return Err(TarmaError::InvalidArgument("iteration limits must be >= 1".into()));
        }
        if self.delay_set.is_empty() || self.delay_set.contains(&0) {
            return Err(TarmaError::InvalidArgument("delay set must be non-empty with d >= 1".into()));
        }
        match &self.threshold_grid {
            ThresholdGrid::Quantiles { lo, hi, max_points } => {
                if !(0.0 <= *lo && lo < hi && *hi <= 1.0) || *max_points == 0 {
                    return Err(TarmaError::InvalidArgument("bad quantile grid".into()));
                }
            }
            ThresholdGrid::Explicit(v) => {
                if v.is_empty() || v.iter().any(|r| !r.is_finite()) {
                    return Err(TarmaError::InvalidArgument("explicit grid must be finite and non-empty".into()));
                }
            }
            ThresholdGrid::Fixed(r) => {
                if !r.is_finite() {
                    return Err(TarmaError::InvalidArgument("fixed threshold is not finite".into()));
                }
            }
        }
        Ok(())
    }
}

/// One point of the profile surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub r: f64,
    pub d: usize,
    /// Profiled objective, absent when the fit at this point failed.
    pub objective: Option<f64>,
    pub sigma: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub lambda: Option<Vec<f64>>,
}

/// One IRLS pass: the scale used, and the objective before and after the
/// weighted Gauss-Newton solve at that scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrlsPass {
    pub sigma: f64,
    pub objective_start: f64,
    pub objective_end: f64,
    pub inner_steps: usize,
    /// Objective after every accepted inner step, starting with
    /// `objective_start`.
    pub accepted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Convergence {
    pub iterations: usize,
    pub converged: bool,
    pub passes: Vec<IrlsPass>,
}

impl Convergence {
    /// Objective at the end of every pass.
    pub fn objective_trace(&self) -> Vec<f64> {
        self.passes.iter().map(|p| p.objective_end).collect()
    }

    /// True when no accepted step ever increased the objective at its scale.
    pub fn is_monotone(&self) -> bool {
        self.passes
            .iter()
            .all(|p| p.accepted.windows(2).all(|w| w[1] <= w[0]) && p.objective_end <= p.objective_start)
    }
}

/// Sandwich covariance of lambda-hat with its ingredients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub sensitivity: Vec<Vec<f64>>,
    pub variability: Vec<Vec<f64>>,
    pub covariance: Vec<Vec<f64>>,
    pub condition_number: f64,
    /// Number of objective terms used to average.
    pub n: usize,
}

impl Sandwich {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.covariance.len())
            .map(|i| self.covariance[i][i].max(0.0).sqrt())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: TarmaParams,
    pub loss: LossSpec,
    /// Minimised objective at `sigma_hat`.
    pub objective: f64,
    pub sigma_hat: f64,
    /// Number of observations in the fitted series.
    pub n_obs: usize,
    /// 1-based time of the first residual.
    pub residual_start: usize,
    pub residuals: Vec<f64>,
    pub irls_weights: Vec<f64>,
    pub coefficient_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sandwich: Option<Sandwich>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance_error: Option<String>,
    pub convergence: Convergence,
    pub profile_table: Vec<ProfileEntry>,
}

impl FitResult {
    pub fn lambda(&self) -> Vec<f64> {
        self.params.lambda()
    }

    pub fn sandwich(&self) -> Result<&Sandwich> {
        self.sandwich.as_ref().ok_or_else(|| {
            TarmaError::CovarianceWithheld(
                self.covariance_error
                    .clone()
                    .unwrap_or_else(|| "not computed".into()),
            )
        })
    }
}
