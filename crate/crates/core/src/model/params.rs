use serde::{Deserialize, Serialize};

use crate::error::{Result, TarmaError};

/// Parameters of a two-regime TARMA(p, q) model.
///
/// `phi1`/`phi2` hold the intercept followed by the `p` autoregressive
/// coefficients of the lower/upper regime; `theta1`/`theta2` the `q`
/// moving-average coefficients. The lower regime is active when
/// `X[t-d] <= r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TarmaParams {
    pub p: usize,
    pub q: usize,
    pub d: usize,
    pub r: f64,
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
}

/// Layout of the coefficient vector `lambda = (phi1, phi2, theta1, theta2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub p: usize,
    pub q: usize,
}

impl Layout {
    pub fn new(p: usize, q: usize) -> Self {
        Self { p, q }
    }

    /// Length of lambda: `2 (1 + p + q)`.
    pub fn len(&self) -> usize {
        2 * (1 + self.p + self.q)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Offset of `phi_g` (g = 0 lower, 1 upper).
    pub fn phi(&self, regime: usize) -> usize {
        regime * (self.p + 1)
    }

    /// Offset of `theta_g`.
    pub fn theta(&self, regime: usize) -> usize {
        2 * (self.p + 1) + regime * self.q
    }

    /// Coefficients per regime.
    pub fn per_regime(&self) -> usize {
        1 + self.p + self.q
    }

    /// Regime (0 lower, 1 upper) that column `j` of lambda belongs to.
    pub fn regime_of(&self, j: usize) -> usize {
        let ar = 2 * (self.p + 1);
        if j < ar {
            j / (self.p + 1)
        } else {
            (j - ar) / self.q.max(1)
        }
    }

    /// Human-readable coefficient names, e.g. `phi1_0`, `theta2_1`.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        for g in 1..=2 {
            out.extend((0..=self.p).map(|i| format!("phi{g}_{i}")));
        }
        for g in 1..=2 {
            out.extend((1..=self.q).map(|j| format!("theta{g}_{j}")));
        }
        out
    }
}

impl TarmaParams {
    /// The four TARMA(1,1) settings used throughout the Monte Carlo study
    /// (threshold 0.2, delay 1).
    pub fn benchmark_case(case: usize) -> Option<Self> {
        let (phi1, theta1, phi2, theta2) = match case {
            1 => ([0.5, -0.5], -0.5, [0.0, -1.0], 0.5),
            2 => ([0.5, 0.3], 0.6, [1.0, -0.5], -0.4),
            3 => ([2.0, 1.0], 0.5, [-1.5, 1.0], -0.5),
            4 => ([0.6, 0.6], -0.7, [-1.0, 0.4], 0.5),
            _ => return None,
        };
        Some(Self {
            p: 1,
            q: 1,
            d: 1,
            r: 0.2,
            phi1: phi1.to_vec(),
            phi2: phi2.to_vec(),
            theta1: vec![theta1],
            theta2: vec![theta2],
        })
    }

    /// All-zero coefficients.
    pub fn zeros(p: usize, q: usize, r: f64, d: usize) -> Self {
        Self {
            p,
            q,
            d,
            r,
            phi1: vec![0.0; p + 1],
            phi2: vec![0.0; p + 1],
            theta1: vec![0.0; q],
            theta2: vec![0.0; q],
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.p, self.q)
    }

    pub fn lambda(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.layout().len());
        v.extend_from_slice(&self.phi1);
        v.extend_from_slice(&self.phi2);
        v.extend_from_slice(&self.theta1);
        v.extend_from_slice(&self.theta2);
        v
    }

    pub fn from_lambda(p: usize, q: usize, lambda: &[f64], r: f64, d: usize) -> Self {
        let l = Layout::new(p, q);
        assert_eq!(lambda.len(), l.len(), "lambda length");
        Self {
            p,
            q,
            d,
            r,
            phi1: lambda[l.phi(0)..l.phi(0) + p + 1].to_vec(),
            phi2: lambda[l.phi(1)..l.phi(1) + p + 1].to_vec(),
            theta1: lambda[l.theta(0)..l.theta(0) + q].to_vec(),
            theta2: lambda[l.theta(1)..l.theta(1) + q].to_vec(),
        }
    }

    pub fn set_lambda(&mut self, lambda: &[f64]) {
        *self = Self::from_lambda(self.p, self.q, lambda, self.r, self.d);
    }

    /// Full parameter vector `(lambda, r, d)` with `d` as a real coordinate.
    pub fn eta(&self) -> Vec<f64> {
        let mut v = self.lambda();
        v.push(self.r);
        v.push(self.d as f64);
        v
    }

    /// First index whose residual is computable: `max(p, d) + 1` (1-based).
    pub fn first_index(&self) -> usize {
        self.p.max(self.d) + 1
    }

    /// `sum_j max(|theta1_j|, |theta2_j|)`.
    pub fn invertibility_margin(&self) -> f64 {
        self.theta1
            .iter()
            .zip(&self.theta2)
            .map(|(a, b)| a.abs().max(b.abs()))
            .sum()
    }

    /// Checks shapes and finiteness; with `strict_invertibility` also the
    /// sufficient invertibility condition. Without it a failed condition is
    /// logged as a warning only.
    pub fn validate(&self, strict_invertibility: bool) -> Result<&Self> {
        let checks: [(&'static str, usize, usize); 4] = [
            ("phi1", self.p + 1, self.phi1.len()),
            ("phi2", self.p + 1, self.phi2.len()),
            ("theta1", self.q, self.theta1.len()),
            ("theta2", self.q, self.theta2.len()),
        ];
        for (field, expected, got) in checks {
            if expected != got {
                return Err(TarmaError::Dimension {
                    field,
                    expected,
                    got,
                });
            }
        }
        if self.d < 1 {
            return Err(TarmaError::InvalidArgument("delay d must be >= 1".into()));
        }
        if !self.r.is_finite() {
            return Err(TarmaError::InvalidArgument("threshold r is not finite".into()));
        }
        if let Some(i) = self.lambda().iter().position(|v| !v.is_finite()) {
            return Err(TarmaError::NonFinite(i));
        }
        let m = self.invertibility_margin();
        if m >= 1.0 {
            if strict_invertibility {
                return Err(TarmaError::NotInvertible(m));
            }
            log::warn!("invertibility sufficient condition fails (margin {m:.3}); continuing");
        }
        Ok(self)
    }

    /// Additionally bounds the delay by `max_delay`.
    pub fn validate_delay(&self, max_delay: usize) -> Result<()> {
        if self.d > max_delay {
            return Err(TarmaError::InvalidArgument(format!(
                "delay {} exceeds maximum {max_delay}",
                self.d
            )));
        }
        Ok(())
    }
}
