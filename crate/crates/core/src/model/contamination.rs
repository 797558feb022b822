//! Outlier contamination: additive (AO), replacement (RO) and innovation (IO).
//!
//! Outlier times use 1-based `t`. The magnitude at an outlier time is
//! `(-1)^xi * k` with `P(xi = 1) = sign_prob`, so with the default
//! `sign_prob = 0.95` most shifts are negative.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TarmaError};
use crate::model::simulate::InnovationSpec;
use crate::rng::{self, Rng};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierKind {
    /// `X + Z * (-1)^xi k`.
    Ao,
    /// `(1 - Z) X + Z * (-1)^xi k`.
    Ro,
    /// Shock added to the innovation; propagates through the dynamics.
    Io,
}

/// Temporal structure of the contamination indicator `Z_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// `Z_t = 1` iff `t mod floor(1/epsilon) == 0`.
    #[default]
    EquallySpaced,
    /// `Z_t ~ Bernoulli(epsilon)` independently.
    IidBernoulli,
    /// Two-state Markov chain with stationary `P(Z = 1) = epsilon` that stays
    /// in the outlier state with probability `persistence`; patches last
    /// `1 / (1 - persistence)` steps on average.
    Patchy { persistence: f64 },
}

fn default_sign_prob() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationSpec {
    pub kind: OutlierKind,
    pub epsilon: f64,
    pub k: f64,
    #[serde(default = "default_sign_prob")]
    pub sign_prob: f64,
    #[serde(default)]
    pub pattern: Pattern,
}

impl ContaminationSpec {
    pub fn new(kind: OutlierKind, epsilon: f64, k: f64) -> Self {
        Self {
            kind,
            epsilon,
            k,
            sign_prob: default_sign_prob(),
            pattern: Pattern::EquallySpaced,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(TarmaError::InvalidArgument(format!(
                "epsilon {} outside (0, 1)",
                self.epsilon
            )));
        }
        if !self.k.is_finite() {
            return Err(TarmaError::InvalidArgument("k is not finite".into()));
        }
        if !(0.0..=1.0).contains(&self.sign_prob) {
            return Err(TarmaError::InvalidArgument(format!(
                "sign_prob {} outside [0, 1]",
                self.sign_prob
            )));
        }
        if let Pattern::Patchy { persistence } = self.pattern {
            if !(0.0..1.0).contains(&persistence) {
                return Err(TarmaError::InvalidArgument(format!(
                    "persistence {persistence} outside [0, 1)"
                )));
            }
            if self.entry_probability(persistence) > 1.0 {
                return Err(TarmaError::InvalidArgument(
                    "patchy pattern: epsilon too large for this persistence".into(),
                ));
            }
        }
        Ok(())
    }

    /// Spacing of the equally spaced pattern, `floor(1/epsilon)`.
    pub fn spacing(&self) -> usize {
        // The nudge keeps e.g. 1/0.1 from flooring to 9 after rounding.
        ((1.0 / self.epsilon) + 1e-9).floor() as usize
    }

    fn entry_probability(&self, persistence: f64) -> f64 {
        // Stationarity: eps * (1 - persistence) = (1 - eps) * entry.
        self.epsilon * (1.0 - persistence) / (1.0 - self.epsilon)
    }

    pub(crate) fn indicator(&self) -> Indicator {
        Indicator {
            spec: self.clone(),
            state: false,
        }
    }
}

/// Sequential generator of `Z_t` and the signed shift.
#[derive(Debug, Clone)]
pub(crate) struct Indicator {
    spec: ContaminationSpec,
    state: bool,
}

impl Indicator {
    /// Shift at 1-based time `t`, or `None` when `Z_t = 0`.
    pub(crate) fn next(&mut self, t: usize, rng: &mut Rng) -> Option<f64> {
        let hit = match self.spec.pattern {
            Pattern::EquallySpaced => t % self.spec.spacing() == 0,
            Pattern::IidBernoulli => rng.random::<f64>() < self.spec.epsilon,
            Pattern::Patchy { persistence } => {
                let u = rng.random::<f64>();
                self.state = if t == 1 {
                    u < self.spec.epsilon
                } else if self.state {
                    u < persistence
                } else {
                    u < self.spec.entry_probability(persistence)
                };
                self.state
            }
        };
        if !hit {
            return None;
        }
        let negative = rng.random::<f64>() < self.spec.sign_prob;
        Some(if negative { -self.spec.k } else { self.spec.k })
    }
}

/// Applies AO or RO contamination. Returns the contaminated copy and the
/// 1-based outlier times.
pub fn contaminate(series: &TimeSeries, spec: &ContaminationSpec, seed: u64) -> Result<(TimeSeries, Vec<usize>)> {
    spec.validate()?;
    if spec.kind == OutlierKind::Io {
        return Err(TarmaError::InvalidArgument(
            "innovation outliers are applied during simulation; use contaminate_innovations".into(),
        ));
    }
    let n = series.len();
    if spec.pattern == Pattern::EquallySpaced && spec.spacing() > n {
        return Err(TarmaError::InvalidArgument(format!(
            "epsilon * n < 1: no outlier fits in {n} observations"
        )));
    }
    let mut rng = rng::stream(seed, 0);
    let mut ind = spec.indicator();
    let mut values = series.values().to_vec();
    let mut times = Vec::new();
    for (i, v) in values.iter_mut().enumerate() {
        let t = i + 1;
        if let Some(shift) = ind.next(t, &mut rng) {
            *v = match spec.kind {
                OutlierKind::Ao => *v + shift,
                OutlierKind::Ro => shift,
                OutlierKind::Io => unreachable!(),
            };
            times.push(t);
        }
    }
    let out = TimeSeries::with_timestamps(values, series.timestamps().map(<[String]>::to_vec))?;
    Ok((out, times))
}

/// Wraps `base` so that the simulator adds `(-1)^xi k` to the innovation at
/// contamination times. Signs and indicators come from a separate stream, so
/// the Gaussian draws are the same as those of `base`.
pub fn contaminate_innovations(base: &InnovationSpec, spec: &ContaminationSpec) -> Result<InnovationSpec> {
    spec.validate()?;
    if spec.kind != OutlierKind::Io {
        return Err(TarmaError::InvalidArgument(format!(
            "expected kind io, got {:?}",
            spec.kind
        )));
    }
    let mut out = base.clone();
    out.contamination = Some(spec.clone());
    Ok(out)
}
