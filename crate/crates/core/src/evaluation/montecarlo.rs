use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TarmaError};
use crate::estimation::{profile_search, FitConfig, ThresholdGrid};
use crate::loss::LossSpec;
use crate::model::{
    contaminate, contaminate_innovations, simulate, ContaminationSpec, InnovationSpec, OutlierKind, TarmaParams,
    DEFAULT_BURN_IN,
};
use crate::rng::{replication_seed, Purpose};
use crate::series::TimeSeries;

/// A model given either as a reference case number (1 to 4) or in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Case(usize),
    Params(TarmaParams),
}

impl ModelSpec {
    pub fn params(&self) -> Result<TarmaParams> {
        match self {
            ModelSpec::Case(c) => TarmaParams::benchmark_case(*c)
                .ok_or_else(|| TarmaError::InvalidArgument(format!("unknown case {c}; expected 1 to 4"))),
            ModelSpec::Params(p) => {
                p.validate(false)?;
                Ok(p.clone())
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::Case(c) => c.to_string(),
            ModelSpec::Params(_) => "custom".into(),
        }
    }
}

fn default_sigma2() -> f64 {
    1.0
}
fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}
fn default_true() -> bool {
    true
}
fn default_delays() -> Vec<usize> {
    (1..=6).collect()
}

/// How each replication is fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    /// Search `(r, d)` over the grid; when false they are fixed at the truth.
    #[serde(default = "default_true")]
    pub estimate_threshold: bool,
    #[serde(default)]
    pub threshold_grid: ThresholdGrid,
    #[serde(default = "default_delays")]
    pub delay_set: Vec<usize>,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            estimate_threshold: true,
            threshold_grid: ThresholdGrid::default(),
            delay_set: default_delays(),
        }
    }
}

impl FitSettings {
    pub fn config(&self, truth: &TarmaParams, alpha: f64) -> FitConfig {
        let cfg = FitConfig::new(truth.p, truth.q, LossSpec::power_divergence(alpha));
        if self.estimate_threshold {
            cfg.with_grid(self.threshold_grid.clone(), self.delay_set.clone())
        } else {
            cfg.fixed(truth.r, truth.d)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub case: ModelSpec,
    /// `None` runs on clean data.
    #[serde(default)]
    pub contamination: Option<ContaminationSpec>,
    pub alpha_grid: Vec<f64>,
    pub n: Vec<usize>,
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub fit: FitSettings,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        self.case.params()?;
        if self.replications == 0 {
            return Err(TarmaError::InvalidArgument("replications must be >= 1".into()));
        }
        if self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(TarmaError::InvalidArgument(
                "alpha_grid must be non-empty and non-negative".into(),
            ));
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(TarmaError::InvalidArgument("n must be a non-empty list of sizes >= 1".into()));
        }
        if !(self.sigma2 > 0.0) {
            return Err(TarmaError::InvalidArgument("sigma2 must be > 0".into()));
        }
        if let Some(c) = &self.contamination {
            c.validate()?;
        }
        self.fit.config(&self.case.params()?, 0.0).validate()
    }
}

/// Draws one (possibly contaminated) realisation. AO and RO contaminate a
/// clean path; IO shocks enter through the innovations.
pub fn draw_series(
    truth: &TarmaParams,
    n: usize,
    sigma2: f64,
    burn_in: usize,
    contamination: Option<&ContaminationSpec>,
    innovation_seed: u64,
    contamination_seed: u64,
) -> Result<TimeSeries> {
    let base = InnovationSpec::gaussian(sigma2, innovation_seed);
    match contamination {
        None => simulate(truth, n, &base, burn_in),
        Some(c) if c.kind == OutlierKind::Io => simulate(truth, n, &contaminate_innovations(&base, c)?, burn_in),
        Some(c) => {
            let clean = simulate(truth, n, &base, burn_in)?;
            Ok(contaminate(&clean, c, contamination_seed)?.0)
        }
    }
}

/// Series of replication `rep` at size `n`; every alpha is fitted to it.
pub fn replication_series(config: &McConfig, rep: usize, n: usize) -> Result<TimeSeries> {
    let truth = config.case.params()?;
    draw_series(
        &truth,
        n,
        config.sigma2,
        config.burn_in,
        config.contamination.as_ref(),
        replication_seed(config.master_seed, rep as u64, Purpose::Innovations),
        replication_seed(config.master_seed, rep as u64, Purpose::Contamination),
    )
}

/// Per-component mean, squared bias, variance (divisor `R`) and MSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub bias2: Vec<f64>,
    pub variance: Vec<f64>,
    pub mse: Vec<f64>,
}

impl Moments {
    pub fn from_draws(draws: &[Vec<f64>], truth: &[f64]) -> Option<Self> {
        let r = draws.len();
        if r == 0 {
            return None;
        }
        let k = truth.len();
        let rf = r as f64;
        let mean: Vec<f64> = (0..k).map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / rf).collect();
        let variance: Vec<f64> = (0..k)
            .map(|j| draws.iter().map(|d| (d[j] - mean[j]).powi(2)).sum::<f64>() / rf)
            .collect();
        let bias2: Vec<f64> = (0..k).map(|j| (mean[j] - truth[j]).powi(2)).collect();
        let mse = (0..k)
            .map(|j| draws.iter().map(|d| (d[j] - truth[j]).powi(2)).sum::<f64>() / rf)
            .collect();
        Some(Self {
            mean,
            bias2,
            variance,
            mse,
        })
    }

    /// Summed over components.
    pub fn totals(&self) -> (f64, f64, f64) {
        (
            self.bias2.iter().sum(),
            self.variance.iter().sum(),
            self.mse.iter().sum(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCell {
    pub alpha: f64,
    pub n: usize,
    pub successes: usize,
    pub failures: usize,
    /// Squared bias `||mean(eta_hat) - eta_0||^2` over `(lambda, r, d)`.
    pub bias2: Option<f64>,
    /// Sum of the component variances of `eta_hat`.
    pub variance: Option<f64>,
    pub mse: Option<f64>,
    pub bias2_lambda: Option<f64>,
    pub variance_lambda: Option<f64>,
    pub mse_lambda: Option<f64>,
    /// Share of replications with `d_hat = d_0`.
    pub delay_hit_rate: Option<f64>,
    pub median_abs_threshold_error: Option<f64>,
    /// Fewer than two successful replications: variance is 0 by convention.
    pub degenerate: bool,
    pub moments: Option<Moments>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: McConfig,
    pub truth: Vec<f64>,
    pub cells: Vec<McCell>,
}

impl McReport {
    pub fn all_failed(&self) -> bool {
        self.cells.iter().all(|c| c.successes == 0)
    }

    /// Long-format rows `(case, alpha, n, epsilon, k, metric, value)`.
    pub fn long_rows(&self) -> Vec<LongRow> {
        let case = self.config.case.label();
        let (eps, k) = self.config.contamination.as_ref().map_or((0.0, 0.0), |c| (c.epsilon, c.k));
        let mut rows = Vec::new();
        for c in &self.cells {
            let mut push = |metric: &str, value: Option<f64>| {
                rows.push(LongRow {
                    case: case.clone(),
                    alpha: c.alpha,
                    n: c.n,
                    epsilon: eps,
                    k,
                    metric: metric.into(),
                    value,
                })
            };
            push("bias2", c.bias2);
            push("variance", c.variance);
            push("mse", c.mse);
            push("bias2_lambda", c.bias2_lambda);
            push("variance_lambda", c.variance_lambda);
            push("mse_lambda", c.mse_lambda);
            push("successes", Some(c.successes as f64));
            push("failures", Some(c.failures as f64));
        }
        rows
    }
}

/// One row of the long-format CSV outputs. Missing values are empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub case: String,
    pub alpha: f64,
    pub n: usize,
    pub epsilon: f64,
    pub k: f64,
    pub metric: String,
    pub value: Option<f64>,
}

const MAX_ERRORS: usize = 5;

/// Fits every alpha to the same realisation in each replication and
/// aggregates bias and variance per `(alpha, n)`. Failed fits are counted
/// and left out of the moments.
pub fn run_mc_experiment(config: &McConfig) -> Result<McReport> {
    config.validate()?;
    let truth = config.case.params()?;
    let eta0 = truth.eta();
    let k_lambda = truth.layout().len();
    let mut cells = Vec::new();
    for &n in &config.n {
        // outcomes[rep][alpha]
        let outcomes: Vec<Vec<std::result::Result<Vec<f64>, String>>> = (0..config.replications)
            .into_par_iter()
            .map(|rep| match replication_series(config, rep, n) {
                Err(e) => vec![Err(format!("replication {rep}: {e}")); config.alpha_grid.len()],
                Ok(series) => config
                    .alpha_grid
                    .iter()
                    .map(|&alpha| {
                        profile_search(&series, &config.fit.config(&truth, alpha))
                            .map(|f| f.params.eta())
                            .map_err(|e| format!("replication {rep}: {e}"))
                    })
                    .collect(),
            })
            .collect();
        for (a, &alpha) in config.alpha_grid.iter().enumerate() {
            let mut draws = Vec::new();
            let mut errors = Vec::new();
            for rep in &outcomes {
                match &rep[a] {
                    Ok(eta) => draws.push(eta.clone()),
                    Err(e) => {
                        if errors.len() < MAX_ERRORS {
                            errors.push(e.clone());
                        }
                    }
                }
            }
            let moments = Moments::from_draws(&draws, &eta0);
            let lam_moments = Moments::from_draws(
                &draws.iter().map(|d| d[..k_lambda].to_vec()).collect::<Vec<_>>(),
                &eta0[..k_lambda],
            );
            let totals = moments.as_ref().map(Moments::totals);
            let lam_totals = lam_moments.as_ref().map(Moments::totals);
            let (delay_hit_rate, median_abs_threshold_error) = if draws.is_empty() {
                (None, None)
            } else {
                let hits = draws.iter().filter(|d| d[k_lambda + 1] == truth.d as f64).count();
                let mut errs: Vec<f64> = draws.iter().map(|d| (d[k_lambda] - truth.r).abs()).collect();
                errs.sort_by(f64::total_cmp);
                (Some(hits as f64 / draws.len() as f64), Some(crate::loss::median(&errs)))
            };
            if draws.is_empty() {
                log::warn!("every replication failed at alpha = {alpha}, n = {n}");
            }
            cells.push(McCell {
                alpha,
                n,
                successes: draws.len(),
                failures: config.replications - draws.len(),
                bias2: totals.map(|t| t.0),
                variance: totals.map(|t| t.1),
                mse: totals.map(|t| t.2),
                bias2_lambda: lam_totals.map(|t| t.0),
                variance_lambda: lam_totals.map(|t| t.1),
                mse_lambda: lam_totals.map(|t| t.2),
                delay_hit_rate,
                median_abs_threshold_error,
                degenerate: draws.len() < 2,
                moments,
                errors,
            });
        }
    }
    Ok(McReport {
        config: config.clone(),
        truth: eta0,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(case: usize, reps: usize) -> McConfig {
        McConfig {
            case: ModelSpec::Case(case),
            contamination: None,
            alpha_grid: vec![0.0, 0.6],
            n: vec![200],
            replications: reps,
            master_seed: 7,
            sigma2: 1.0,
            burn_in: 500,
            fit: FitSettings {
                estimate_threshold: true,
                threshold_grid: ThresholdGrid::Quantiles {
                    lo: 0.1,
                    hi: 0.9,
                    max_points: 10,
                },
                delay_set: vec![1, 2],
            },
        }
    }

    #[test]
    fn reproducible_and_accounted() {
        let cfg = small(1, 4);
        let a = run_mc_experiment(&cfg).unwrap();
        let b = run_mc_experiment(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for c in &a.cells {
            assert_eq!(c.successes + c.failures, 4);
            assert!(c.bias2.unwrap() >= 0.0 && c.variance.unwrap() >= 0.0);
        }
        assert_eq!(a.long_rows().len(), 2 * 8);
    }

    #[test]
    fn common_random_numbers() {
        let cfg = McConfig {
            contamination: Some(ContaminationSpec::new(OutlierKind::Ao, 0.1, 10.0)),
            ..small(2, 3)
        };
        let s1 = replication_series(&cfg, 2, 200).unwrap();
        let s2 = replication_series(&cfg, 2, 200).unwrap();
        assert_eq!(s1, s2);
        assert_ne!(s1, replication_series(&cfg, 1, 200).unwrap());
    }

    #[test]
    fn mse_decomposes() {
        let draws = vec![vec![1.0, 2.0], vec![1.5, -1.0], vec![0.2, 0.3]];
        let m = Moments::from_draws(&draws, &[0.9, 0.1]).unwrap();
        for j in 0..2 {
            assert!((m.mse[j] - m.bias2[j] - m.variance[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn single_replication_is_degenerate() {
        let cfg = small(1, 1);
        let r = run_mc_experiment(&cfg).unwrap();
        for c in &r.cells {
            assert!(c.degenerate);
            assert_eq!(c.variance, Some(0.0));
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = small(1, 1);
        cfg.alpha_grid.clear();
        assert!(run_mc_experiment(&cfg).is_err());
        let mut cfg = small(1, 1);
        cfg.replications = 0;
        assert!(run_mc_experiment(&cfg).is_err());
        let mut cfg = small(1, 1);
        cfg.case = ModelSpec::Case(9);
        assert!(run_mc_experiment(&cfg).is_err());
    }

    #[test]
    fn json_shape() {
        let cfg: McConfig = serde_json::from_str(
            r#"{"case": 2, "alpha_grid": [0, 0.3, 0.6, 0.9, 1.2, 1.5], "n": [200], "replications": 2,
                "contamination": {"kind": "ao", "epsilon": 0.1, "k": 10}}"#,
        )
        .unwrap();
        assert_eq!(cfg.alpha_grid, vec![0.0, 0.3, 0.6, 0.9, 1.2, 1.5]);
        assert!(cfg.fit.estimate_threshold);
        cfg.validate().unwrap();
    }
}
