use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TarmaError};
use crate::estimation::profile_search;
use crate::evaluation::montecarlo::{draw_series, FitSettings, LongRow, ModelSpec};
use crate::loss::median;
use crate::model::{ContaminationSpec, OutlierKind, Pattern, DEFAULT_BURN_IN};
use crate::rng::{replication_seed, Purpose};

/// Smallest series length accepted for an asymptotic bias curve.
pub const MIN_N_LARGE: usize = 5000;

fn default_cases() -> Vec<ModelSpec> {
    (1..=4).map(ModelSpec::Case).collect()
}
fn default_n_large() -> usize {
    20_000
}
fn default_sign_prob() -> f64 {
    0.95
}
fn default_sigma2() -> f64 {
    1.0
}
fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasCurveConfig {
    #[serde(default = "default_cases")]
    pub cases: Vec<ModelSpec>,
    pub kind: OutlierKind,
    pub epsilons: Vec<f64>,
    pub ks: Vec<f64>,
    pub alphas: Vec<f64>,
    #[serde(default = "default_n_large")]
    pub n_large: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_sign_prob")]
    pub sign_prob: f64,
    #[serde(default)]
    pub pattern: Pattern,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub fit: FitSettings,
}

impl BiasCurveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cases.is_empty() || self.epsilons.is_empty() || self.ks.is_empty() || self.alphas.is_empty() {
            return Err(TarmaError::InvalidArgument(
                "cases, epsilons, ks and alphas must be non-empty".into(),
            ));
        }
        if self.n_large < MIN_N_LARGE {
            return Err(TarmaError::InvalidArgument(format!(
                "n_large {} below the minimum {MIN_N_LARGE}",
                self.n_large
            )));
        }
        if self.alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(TarmaError::InvalidArgument("alphas must be >= 0".into()));
        }
        for c in &self.cases {
            c.params()?;
        }
        for &e in &self.epsilons {
            for &k in &self.ks {
                self.contamination(e, k).validate()?;
            }
        }
        Ok(())
    }

    pub fn contamination(&self, epsilon: f64, k: f64) -> ContaminationSpec {
        ContaminationSpec {
            sign_prob: self.sign_prob,
            pattern: self.pattern,
            ..ContaminationSpec::new(self.kind, epsilon, k)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCell {
    pub case: String,
    pub epsilon: f64,
    pub k: f64,
    pub alpha: f64,
    /// `||eta_hat - eta_0||^2` over `(lambda, r, d)`.
    pub b: Option<f64>,
    pub b_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Median of `b` across cases for one `(epsilon, k, alpha)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasMedian {
    pub epsilon: f64,
    pub k: f64,
    pub alpha: f64,
    pub b: Option<f64>,
    pub b_lambda: Option<f64>,
    pub cases_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCurveReport {
    pub config: BiasCurveConfig,
    pub cells: Vec<BiasCell>,
    pub medians: Vec<BiasMedian>,
}

impl BiasCurveReport {
    pub fn all_failed(&self) -> bool {
        self.cells.iter().all(|c| c.b.is_none())
    }

    pub fn median(&self, epsilon: f64, k: f64, alpha: f64) -> Option<f64> {
        self.medians
            .iter()
            .find(|m| m.epsilon == epsilon && m.k == k && m.alpha == alpha)
            .and_then(|m| m.b)
    }

    pub fn long_rows(&self) -> Vec<LongRow> {
        let n = self.config.n_large;
        let mut rows = Vec::new();
        for c in &self.cells {
            for (metric, value) in [("b", c.b), ("b_lambda", c.b_lambda)] {
                rows.push(LongRow {
                    case: c.case.clone(),
                    alpha: c.alpha,
                    n,
                    epsilon: c.epsilon,
                    k: c.k,
                    metric: metric.into(),
                    value,
                });
            }
        }
        for m in &self.medians {
            for (metric, value) in [("b", m.b), ("b_lambda", m.b_lambda)] {
                rows.push(LongRow {
                    case: "median".into(),
                    alpha: m.alpha,
                    n,
                    epsilon: m.epsilon,
                    k: m.k,
                    metric: metric.into(),
                    value,
                });
            }
        }
        rows
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Squared distance between the fit on one long contaminated realisation
/// and the truth, for every case, `(epsilon, k)` cell and alpha. All cells of
/// a case share the same innovations and contamination draws.
pub fn asymptotic_bias_curve(config: &BiasCurveConfig) -> Result<BiasCurveReport> {
    config.validate()?;
    let mut items = Vec::new();
    for (ci, case) in config.cases.iter().enumerate() {
        for &e in &config.epsilons {
            for &k in &config.ks {
                items.push((ci, case, e, k));
            }
        }
    }
    let blocks: Vec<Vec<BiasCell>> = items
        .par_iter()
        .map(|&(ci, case, epsilon, k)| {
            let truth = case.params().expect("validated");
            let eta0 = truth.eta();
            let kl = truth.layout().len();
            let spec = config.contamination(epsilon, k);
            let series = draw_series(
                &truth,
                config.n_large,
                config.sigma2,
                config.burn_in,
                Some(&spec),
                replication_seed(config.master_seed, ci as u64, Purpose::Innovations),
                replication_seed(config.master_seed, ci as u64, Purpose::Contamination),
            );
            config
                .alphas
                .iter()
                .map(|&alpha| {
                    let fit = series
                        .as_ref()
                        .map_err(|e| e.to_string())
                        .and_then(|s| profile_search(s, &config.fit.config(&truth, alpha)).map_err(|e| e.to_string()));
                    let (b, b_lambda, error) = match fit {
                        Ok(f) => {
                            let eta = f.params.eta();
                            (Some(sq_dist(&eta, &eta0)), Some(sq_dist(&eta[..kl], &eta0[..kl])), None)
                        }
                        Err(e) => (None, None, Some(e)),
                    };
                    BiasCell {
                        case: case.label(),
                        epsilon,
                        k,
                        alpha,
                        b,
                        b_lambda,
                        error,
                    }
                })
                .collect()
        })
        .collect();
    let cells: Vec<BiasCell> = blocks.into_iter().flatten().collect();
    let mut medians = Vec::new();
    for &epsilon in &config.epsilons {
        for &k in &config.ks {
            for &alpha in &config.alphas {
                let sel: Vec<&BiasCell> = cells
                    .iter()
                    .filter(|c| c.epsilon == epsilon && c.k == k && c.alpha == alpha && c.b.is_some())
                    .collect();
                let med = |f: fn(&BiasCell) -> Option<f64>| {
                    let v: Vec<f64> = sel.iter().filter_map(|c| f(c)).collect();
                    (!v.is_empty()).then(|| median(&v))
                };
                medians.push(BiasMedian {
                    epsilon,
                    k,
                    alpha,
                    b: med(|c| c.b),
                    b_lambda: med(|c| c.b_lambda),
                    cases_used: sel.len(),
                });
            }
        }
    }
    Ok(BiasCurveReport {
        config: config.clone(),
        cells,
        medians,
    })
}
