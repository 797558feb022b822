use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TarmaError};
use crate::model::contamination::{ContaminationSpec, Indicator};
use crate::model::params::TarmaParams;
use crate::rng::{self, Rng};
use crate::series::TimeSeries;

pub const DEFAULT_BURN_IN: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InnovationKind {
    Gaussian {
        sigma2: f64,
    },
    /// `(1 - epsilon) N(0, sigma0_sq) + epsilon N(0, sigma1_sq)`.
    GaussianMixture {
        epsilon: f64,
        sigma0_sq: f64,
        sigma1_sq: f64,
    },
}

/// Innovation distribution plus its seed. Gaussian draws come from stream 0
/// of `seed`; mixture labels and IO contamination from streams 1 and 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnovationSpec {
    pub kind: InnovationKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contamination: Option<ContaminationSpec>,
}

impl InnovationSpec {
    pub fn gaussian(sigma2: f64, seed: u64) -> Self {
        Self {
            kind: InnovationKind::Gaussian { sigma2 },
            seed,
            contamination: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            InnovationKind::Gaussian { sigma2 } => {
                if !(sigma2 > 0.0 && sigma2.is_finite()) {
                    return Err(TarmaError::InvalidArgument(format!("sigma2 {sigma2} must be > 0")));
                }
            }
            InnovationKind::GaussianMixture {
                epsilon,
                sigma0_sq,
                sigma1_sq,
            } => {
                if !(0.0..=1.0).contains(&epsilon) {
                    return Err(TarmaError::InvalidArgument(format!("mixture weight {epsilon} outside [0, 1]")));
                }
                if !(sigma0_sq > 0.0 && sigma1_sq > 0.0) {
                    return Err(TarmaError::InvalidArgument("mixture variances must be > 0".into()));
                }
                if sigma0_sq > sigma1_sq {
                    return Err(TarmaError::InvalidArgument(
                        "mixture requires sigma0_sq <= sigma1_sq".into(),
                    ));
                }
            }
        }
        if let Some(c) = &self.contamination {
            c.validate()?;
        }
        Ok(())
    }

    pub fn sampler(&self) -> Result<SpecSampler> {
        self.validate()?;
        Ok(SpecSampler {
            kind: self.kind.clone(),
            draws: rng::stream(self.seed, 0),
            labels: rng::stream(self.seed, 1),
            shocks: self
                .contamination
                .as_ref()
                .map(|c| (c.indicator(), rng::stream(self.seed, 2))),
        })
    }
}

/// Source of innovations for [`simulate_with`].
pub trait InnovationSampler {
    /// Innovation for the next step. `t` is the 1-based time in the returned
    /// series, or `None` during burn-in.
    fn draw(&mut self, t: Option<usize>) -> f64;
}

pub struct SpecSampler {
    kind: InnovationKind,
    draws: Rng,
    labels: Rng,
    shocks: Option<(Indicator, Rng)>,
}

impl InnovationSampler for SpecSampler {
    fn draw(&mut self, t: Option<usize>) -> f64 {
        let z: f64 = self.draws.sample(StandardNormal);
        let mut e = match self.kind {
            InnovationKind::Gaussian { sigma2 } => sigma2.sqrt() * z,
            InnovationKind::GaussianMixture {
                epsilon,
                sigma0_sq,
                sigma1_sq,
            } => {
                let wide = self.labels.random::<f64>() < epsilon;
                if wide {
                    sigma1_sq.sqrt() * z
                } else {
                    sigma0_sq.sqrt() * z
                }
            }
        };
        if let (Some(t), Some((ind, rng))) = (t, self.shocks.as_mut()) {
            if let Some(shift) = ind.next(t, rng) {
                e += shift;
            }
        }
        e
    }
}

/// Simulates `burn_in + n` steps from a zero initial state and returns the
/// last `n` observations.
pub fn simulate(params: &TarmaParams, n: usize, innovations: &InnovationSpec, burn_in: usize) -> Result<TimeSeries> {
    simulate_path(params, n, innovations, burn_in).map(|(s, _)| s)
}

/// As [`simulate`], also returning the realised innovations of the kept segment.
pub fn simulate_path(
    params: &TarmaParams,
    n: usize,
    innovations: &InnovationSpec,
    burn_in: usize,
) -> Result<(TimeSeries, Vec<f64>)> {
    let mut sampler = innovations.sampler()?;
    simulate_with(params, n, &mut sampler, burn_in)
}

pub fn simulate_with(
    params: &TarmaParams,
    n: usize,
    sampler: &mut dyn InnovationSampler,
    burn_in: usize,
) -> Result<(TimeSeries, Vec<f64>)> {
    params.validate(false)?;
    if n == 0 {
        return Err(TarmaError::InvalidArgument("n must be >= 1".into()));
    }
    let total = burn_in + n;
    let mut x = vec![0.0; total];
    let mut e = vec![0.0; total];
    let lag = |v: &[f64], i: usize, j: usize| if i >= j { v[i - j] } else { 0.0 };
    for i in 0..total {
        let t = (i >= burn_in).then(|| i - burn_in + 1);
        e[i] = sampler.draw(t);
        let lower = lag(&x, i, params.d) <= params.r;
        let (phi, theta) = if lower {
            (&params.phi1, &params.theta1)
        } else {
            (&params.phi2, &params.theta2)
        };
        let mut v = phi[0] + e[i];
        for j in 1..=params.p {
            v += phi[j] * lag(&x, i, j);
        }
        for m in 1..=params.q {
            v += theta[m - 1] * lag(&e, i, m);
        }
        if !v.is_finite() {
            return Err(TarmaError::Divergence);
        }
        x[i] = v;
    }
    let series = TimeSeries::new(x.split_off(burn_in))?;
    Ok((series, e.split_off(burn_in)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::recursion::residuals_seeded;

    #[test]
    fn zero_model_is_white_noise() {
        let p = TarmaParams::zeros(1, 1, 0.0, 1);
        let n = 100_000;
        let s = simulate(&p, n, &InnovationSpec::gaussian(1.0, 42), 0).unwrap();
        let mean = s.values().iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "{mean}");
        let var = s.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn deterministic_given_seed() {
        let p = TarmaParams::benchmark_case(1).unwrap();
        let a = simulate(&p, 300, &InnovationSpec::gaussian(1.0, 9), DEFAULT_BURN_IN).unwrap();
        let b = simulate(&p, 300, &InnovationSpec::gaussian(1.0, 9), DEFAULT_BURN_IN).unwrap();
        let c = simulate(&p, 300, &InnovationSpec::gaussian(1.0, 10), DEFAULT_BURN_IN).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 300);
    }

    #[test]
    fn case2_regime_fraction_is_stable() {
        let p = TarmaParams::benchmark_case(2).unwrap();
        let n = 100_000;
        let s = simulate(&p, n, &InnovationSpec::gaussian(1.0, 5), DEFAULT_BURN_IN).unwrap();
        let frac = |v: &[f64]| v.iter().filter(|x| **x > p.r).count() as f64 / v.len() as f64;
        let (a, b) = s.values().split_at(n / 2);
        assert!((frac(a) - frac(b)).abs() < 0.02);
    }

    #[test]
    fn residuals_recover_innovations() {
        for c in 1..=4 {
            let p = TarmaParams::benchmark_case(c).unwrap();
            let (s, e) = simulate_path(&p, 400, &InnovationSpec::gaussian(1.0, c as u64), 0).unwrap();
            let start = 1;
            let r = residuals_seeded(s.values(), &p, start, &e[..start]);
            for (a, b) in r.iter().zip(&e[start..]) {
                assert!((a - b).abs() < 1e-10, "case {c}");
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let p = TarmaParams::benchmark_case(1).unwrap();
        assert!(simulate(&p, 0, &InnovationSpec::gaussian(1.0, 1), 10).is_err());
        assert!(simulate(&p, 5, &InnovationSpec::gaussian(-1.0, 1), 10).is_err());
    }

    #[test]
    fn custom_sampler() {
        struct Ones;
        impl InnovationSampler for Ones {
            fn draw(&mut self, _: Option<usize>) -> f64 {
                1.0
            }
        }
        let p = TarmaParams::zeros(1, 0, 0.0, 1);
        let (s, _) = simulate_with(&p, 3, &mut Ones, 2).unwrap();
        assert_eq!(s.values(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn mixture_variance() {
        let spec = InnovationSpec {
            kind: InnovationKind::GaussianMixture {
                epsilon: 0.1,
                sigma0_sq: 1.0,
                sigma1_sq: 25.0,
            },
            seed: 3,
            contamination: None,
        };
        let p = TarmaParams::zeros(1, 0, 0.0, 1);
        let (_, e) = simulate_path(&p, 100_000, &spec, 0).unwrap();
        let var = e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64;
        // 0.9 * 1 + 0.1 * 25 = 3.4
        assert!((var - 3.4).abs() < 0.1, "{var}");
    }
}
