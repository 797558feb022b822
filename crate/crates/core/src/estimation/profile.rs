//! Grid search over `(r, d)` with profiled IRLS fits.

use rayon::prelude::*;

use crate::error::{Result, TarmaError};
use crate::estimation::config::{FitConfig, FitResult, ProfileEntry, StartStrategy, ThresholdGrid};
use crate::estimation::irls::{fit_problem, initial_for, FixedFit, Problem};
use crate::estimation::sandwich::sandwich_for;
use crate::loss::Loss;
use crate::series::TimeSeries;

/// Candidate thresholds for delay `d`, after dropping those that leave fewer
/// than `1 + p + q` objective terms in either regime.
pub fn threshold_candidates(series: &TimeSeries, d: usize, config: &FitConfig) -> Result<Vec<f64>> {
    let x = series.values();
    let start = config.objective_start();
    if x.len() <= start {
        return Err(TarmaError::TooShort {
            needed: start + 1,
            got: x.len(),
        });
    }
    let mut lagged: Vec<f64> = (start..x.len()).map(|i| x[i - d]).collect();
    lagged.sort_by(f64::total_cmp);
    let raw: Vec<f64> = match &config.threshold_grid {
        ThresholdGrid::Quantiles { lo, hi, max_points } => {
            let m = lagged.len();
            let a = (lo * (m - 1) as f64).ceil() as usize;
            let b = ((hi * (m - 1) as f64).floor() as usize).min(m - 1);
            let mut stats: Vec<f64> = if a <= b { lagged[a..=b].to_vec() } else { vec![] };
            stats.dedup();
            if stats.len() > *max_points {
                let len = stats.len();
                let picked: Vec<f64> = if *max_points == 1 {
                    vec![stats[len / 2]]
                } else {
                    (0..*max_points)
                        .map(|i| stats[(i * (len - 1)) / (max_points - 1)])
                        .collect()
                };
                stats = picked;
                stats.dedup();
            }
            stats
        }
        ThresholdGrid::Explicit(v) => {
            let mut v = v.clone();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        }
        ThresholdGrid::Fixed(r) => vec![*r],
    };
    let needed = 1 + config.p + config.q;
    Ok(raw
        .into_iter()
        .filter(|r| {
            let lower = lagged.partition_point(|v| v <= r);
            lower >= needed && lagged.len() - lower >= needed
        })
        .collect())
}

struct Scan {
    entries: Vec<ProfileEntry>,
    fits: Vec<Option<FixedFit>>,
}

fn scan_delay(series: &TimeSeries, d: usize, config: &FitConfig) -> Result<Scan> {
    let thresholds = threshold_candidates(series, d, config)?;
    let start = config.objective_start();
    let k = 2 * (1 + config.p + config.q);
    let fit_at = |r: f64, warm: Option<&[f64]>| -> Result<FixedFit> {
        let problem = Problem::new(series.values(), config.p, config.q, r, d, start)?;
        if let Some(init) = warm {
            if let Ok(f) = fit_problem(&problem, config, init) {
                return Ok(f);
            }
        }
        let init = initial_for(&problem, config.trim_fraction, None)?;
        fit_problem(&problem, config, &init)
    };
    let results: Vec<Result<FixedFit>> = match config.start {
        StartStrategy::WarmStart => {
            let mut out = Vec::with_capacity(thresholds.len());
            let mut prev: Option<Vec<f64>> = None;
            for &r in &thresholds {
                let res = fit_at(r, prev.as_deref());
                if let Ok(f) = &res {
                    prev = Some(f.lambda.clone());
                }
                out.push(res);
            }
            out
        }
        StartStrategy::TrimmedEach => thresholds.par_iter().map(|&r| fit_at(r, None)).collect(),
    };
    let mut entries = Vec::with_capacity(results.len());
    let mut fits = Vec::with_capacity(results.len());
    for (r, res) in thresholds.into_iter().zip(results) {
        match res {
            Ok(f) => {
                debug_assert_eq!(f.lambda.len(), k);
                entries.push(ProfileEntry {
                    r,
                    d,
                    objective: Some(f.objective),
                    sigma: Some(f.sigma),
                    iterations: f.convergence.iterations,
                    converged: f.convergence.converged,
                    error: None,
                    lambda: Some(f.lambda.clone()),
                });
                fits.push(Some(f));
            }
            Err(e) => {
                entries.push(ProfileEntry {
                    r,
                    d,
                    objective: None,
                    sigma: None,
                    iterations: 0,
                    converged: false,
                    error: Some(e.to_string()),
                    lambda: None,
                });
                fits.push(None);
            }
        }
    }
    Ok(Scan { entries, fits })
}

/// Index of the smallest objective; ties go to the smaller `r`, then the
/// smaller `d`.
pub fn profile_argmin(table: &[ProfileEntry]) -> Option<usize> {
    table
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.objective.map(|o| (i, o, e.r, e.d)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)).then(a.3.cmp(&b.3)))
        .map(|(i, ..)| i)
}

/// Profile M-estimation: fits every admissible `(r, d)` and keeps the one with
/// the smallest objective. All grid points share the objective start
/// `config.objective_start()`.
pub fn profile_search(series: &TimeSeries, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let mut delays = config.delay_set.clone();
    delays.sort_unstable();
    delays.dedup();
    let scans: Vec<Result<Scan>> = delays.par_iter().map(|&d| scan_delay(series, d, config)).collect();
    let mut entries = Vec::new();
    let mut fits = Vec::new();
    for s in scans {
        let s = s?;
        entries.extend(s.entries);
        fits.extend(s.fits);
    }
    if entries.is_empty() {
        return Err(TarmaError::EmptyGrid);
    }
    let Some(best) = profile_argmin(&entries) else {
        let first = entries.iter().find_map(|e| e.error.clone()).unwrap_or_default();
        return Err(TarmaError::AllFailed(format!(
            "all {} grid points failed; first error: {first}",
            entries.len()
        )));
    };
    let fit = fits[best].take().expect("successful entry has a fit");
    let (r, d) = (entries[best].r, entries[best].d);
    assemble(series, config, r, d, config.objective_start(), fit, entries)
}

pub(crate) fn assemble(
    series: &TimeSeries,
    config: &FitConfig,
    r: f64,
    d: usize,
    start: usize,
    fit: FixedFit,
    profile_table: Vec<ProfileEntry>,
) -> Result<FitResult> {
    let problem = Problem::new(series.values(), config.p, config.q, r, d, start)?;
    let params = problem.params(&fit.lambda);
    let residuals = problem.residuals(&fit.lambda);
    let loss = Loss::new(config.loss.family, fit.sigma)?;
    let irls_weights = residuals.iter().map(|e| loss.weight(*e)).collect();
    let (sandwich, covariance_error) = match sandwich_for(&problem, &fit.lambda, &loss, config.hessian) {
        Ok(s) => (Some(s), None),
        Err(e) => {
            log::debug!("covariance withheld: {e}");
            (None, Some(e.to_string()))
        }
    };
    let std_errors = sandwich.as_ref().map(|s| s.std_errors());
    Ok(FitResult {
        coefficient_names: params.layout().names(),
        params,
        loss: config.loss,
        objective: fit.objective,
        sigma_hat: fit.sigma,
        n_obs: series.len(),
        residual_start: start + 1,
        residuals,
        irls_weights,
        sandwich,
        std_errors,
        covariance_error,
        convergence: fit.convergence,
        profile_table,
    })
}
