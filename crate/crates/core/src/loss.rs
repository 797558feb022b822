//! Loss functions for M-estimation of the TARMA residuals.
//!
//! All functions take a raw residual `e` and the scale `sigma`. The
//! power-divergence loss with Gaussian reference density `f` is
//!
//! ```text
//! rho(e) = -(f(e)^alpha - 1) / alpha,   f(e) = (2 pi sigma^2)^(-1/2) exp(-e^2 / (2 sigma^2))
//! ```
//!
//! and `-log f(e)` at `alpha = 0`. Both are evaluated through
//! `-expm1(-alpha * L) / alpha` with `L = -log f(e)`, which is exact at
//! `alpha = 0` and free of cancellation for tiny `alpha`. Note `rho(0) != 0`;
//! the constant does not move any minimiser.
//!
//! IRLS weights are `w(e) = sigma^2 psi(e) / e` (continuous at 0), so that
//! `d rho / d lambda = sum_t (w_t / sigma^2) e_t d e_t / d lambda` holds exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TarmaError};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Normal-consistency constant of the MAD.
pub const MAD_CONSTANT: f64 = 0.6745;

pub const DEFAULT_BISQUARE_C: f64 = 4.685;

fn default_bisquare_c() -> f64 {
    DEFAULT_BISQUARE_C
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LossFamily {
    PowerDivergence {
        alpha: f64,
    },
    Bisquare {
        #[serde(default = "default_bisquare_c")]
        c: f64,
    },
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScalePolicy {
    /// [`ScalePolicy::Rms`] when the weights are constant (`alpha = 0` or
    /// least squares), so that the profile over `(r, d)` is the Gaussian
    /// likelihood profile; [`ScalePolicy::Mad`] otherwise.
    #[default]
    Auto,
    /// Normalised MAD of the current residuals, refreshed every IRLS pass.
    Mad,
    /// Root mean square of the current residuals, the Gaussian
    /// maximum-likelihood scale.
    Rms,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    #[serde(flatten)]
    pub family: LossFamily,
    #[serde(default)]
    pub scale_policy: ScalePolicy,
}

impl LossSpec {
    pub fn power_divergence(alpha: f64) -> Self {
        Self {
            family: LossFamily::PowerDivergence { alpha },
            scale_policy: ScalePolicy::Auto,
        }
    }

    pub fn bisquare(c: f64) -> Self {
        Self {
            family: LossFamily::Bisquare { c },
            scale_policy: ScalePolicy::Auto,
        }
    }

    pub fn least_squares() -> Self {
        Self {
            family: LossFamily::LeastSquares,
            scale_policy: ScalePolicy::Auto,
        }
    }

    pub fn with_scale(mut self, policy: ScalePolicy) -> Self {
        self.scale_policy = policy;
        self
    }

    /// `alpha` of the power-divergence family, if that is the family.
    pub fn alpha(&self) -> Option<f64> {
        match self.family {
            LossFamily::PowerDivergence { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// The scale policy with [`ScalePolicy::Auto`] resolved.
    pub fn effective_scale(&self) -> ScalePolicy {
        match self.scale_policy {
            ScalePolicy::Auto if self.is_least_squares() => ScalePolicy::Rms,
            ScalePolicy::Auto => ScalePolicy::Mad,
            other => other,
        }
    }

    /// True when the estimator reduces to least squares.
    pub fn is_least_squares(&self) -> bool {
        match self.family {
            LossFamily::LeastSquares => true,
            LossFamily::PowerDivergence { alpha } => alpha == 0.0,
            LossFamily::Bisquare { .. } => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            LossFamily::PowerDivergence { alpha } if !(alpha >= 0.0 && alpha.is_finite()) => {
                Err(TarmaError::InvalidArgument(format!("alpha {alpha} must be >= 0")))
            }
            LossFamily::Bisquare { c } if !(c > 0.0 && c.is_finite()) => {
                Err(TarmaError::InvalidArgument(format!("bisquare c {c} must be > 0")))
            }
            _ => match self.scale_policy {
                ScalePolicy::Fixed(s) if !(s > 0.0 && s.is_finite()) => {
                    Err(TarmaError::InvalidArgument(format!("fixed scale {s} must be > 0")))
                }
                _ => Ok(()),
            },
        }
    }

    /// Loss evaluator at a fixed scale.
    pub fn at_scale(&self, sigma: f64) -> Result<Loss> {
        Loss::new(self.family, sigma)
    }
}

/// A loss family bound to a scale, with constants precomputed.
#[derive(Debug, Clone, Copy)]
pub struct Loss {
    family: LossFamily,
    sigma2: f64,
    /// `ln(2 pi sigma^2) / 2`.
    log_norm: f64,
    /// `(2 pi sigma^2)^(-alpha/2)` for the power-divergence family.
    pd_const: f64,
}

impl Loss {
    pub fn new(family: LossFamily, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(TarmaError::InvalidArgument(format!("scale {sigma} must be > 0")));
        }
        let sigma2 = sigma * sigma;
        let log_norm = 0.5 * (LN_2PI + sigma2.ln());
        let pd_const = match family {
            LossFamily::PowerDivergence { alpha } => (-alpha * log_norm).exp(),
            _ => 1.0,
        };
        Ok(Self {
            family,
            sigma2,
            log_norm,
            pd_const,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn family(&self) -> LossFamily {
        self.family
    }

    #[inline]
    pub fn rho(&self, e: f64) -> f64 {
        let s = e * e / (2.0 * self.sigma2);
        match self.family {
            LossFamily::PowerDivergence { alpha } if alpha > 0.0 => {
                -(-alpha * (self.log_norm + s)).exp_m1() / alpha
            }
            LossFamily::PowerDivergence { .. } => self.log_norm + s,
            LossFamily::LeastSquares => s,
            LossFamily::Bisquare { c } => {
                let u2 = e * e / (c * c * self.sigma2);
                if u2 >= 1.0 {
                    c * c / 6.0
                } else {
                    let v = 1.0 - u2;
                    c * c / 6.0 * (1.0 - v * v * v)
                }
            }
        }
    }

    /// `d rho / d e`.
    #[inline]
    pub fn psi(&self, e: f64) -> f64 {
        self.weight(e) * e / self.sigma2
    }

    /// `d^2 rho / d e^2`.
    #[inline]
    pub fn psi_prime(&self, e: f64) -> f64 {
        match self.family {
            LossFamily::PowerDivergence { alpha } if alpha > 0.0 => {
                let w = self.weight(e);
                w * (1.0 - alpha * e * e / self.sigma2) / self.sigma2
            }
            LossFamily::PowerDivergence { .. } | LossFamily::LeastSquares => 1.0 / self.sigma2,
            LossFamily::Bisquare { c } => {
                let u2 = e * e / (c * c * self.sigma2);
                if u2 >= 1.0 {
                    0.0
                } else {
                    (1.0 - u2) * (1.0 - 5.0 * u2) / self.sigma2
                }
            }
        }
    }

    /// IRLS weight `sigma^2 psi(e) / e`, extended continuously to `e = 0`.
    #[inline]
    pub fn weight(&self, e: f64) -> f64 {
        match self.family {
            LossFamily::PowerDivergence { alpha } if alpha > 0.0 => {
                self.pd_const * (-alpha * e * e / (2.0 * self.sigma2)).exp()
            }
            LossFamily::PowerDivergence { .. } | LossFamily::LeastSquares => 1.0,
            LossFamily::Bisquare { c } => {
                let u2 = e * e / (c * c * self.sigma2);
                if u2 >= 1.0 {
                    0.0
                } else {
                    (1.0 - u2) * (1.0 - u2)
                }
            }
        }
    }
}

pub fn rho(residual: f64, sigma: f64, spec: &LossSpec) -> Result<f64> {
    Ok(spec.at_scale(sigma)?.rho(residual))
}

pub fn psi(residual: f64, sigma: f64, spec: &LossSpec) -> Result<f64> {
    Ok(spec.at_scale(sigma)?.psi(residual))
}

pub fn irls_weight(residual: f64, sigma: f64, spec: &LossSpec) -> Result<f64> {
    Ok(spec.at_scale(sigma)?.weight(residual))
}

fn median_in_place(v: &mut [f64]) -> f64 {
    v.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn median(values: &[f64]) -> f64 {
    median_in_place(&mut values.to_vec())
}

/// Normalised median absolute deviation, `median|e - median(e)| / 0.6745`.
pub fn m_scale(residuals: &[f64]) -> Result<f64> {
    if residuals.len() < 2 {
        return Err(TarmaError::DegenerateScale);
    }
    let mut buf = residuals.to_vec();
    let med = median_in_place(&mut buf);
    for (b, r) in buf.iter_mut().zip(residuals) {
        *b = (r - med).abs();
    }
    let mad = median_in_place(&mut buf) / MAD_CONSTANT;
    if !(mad > 0.0 && mad.is_finite()) {
        return Err(TarmaError::DegenerateScale);
    }
    Ok(mad)
}

/// Root mean square `sqrt(mean e^2)`, the Gaussian maximum-likelihood
/// scale of zero-mean residuals.
pub fn rms_scale(residuals: &[f64]) -> Result<f64> {
    if residuals.is_empty() {
        return Err(TarmaError::DegenerateScale);
    }
    let s = (residuals.iter().map(|e| e * e).sum::<f64>() / residuals.len() as f64).sqrt();
    if !(s > 0.0 && s.is_finite()) {
        return Err(TarmaError::DegenerateScale);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn families() -> Vec<LossSpec> {
        vec![
            LossSpec::power_divergence(0.0),
            LossSpec::power_divergence(0.3),
            LossSpec::power_divergence(1.0),
            LossSpec::power_divergence(1.5),
            LossSpec::bisquare(DEFAULT_BISQUARE_C),
            LossSpec::least_squares(),
        ]
    }

    #[test]
    fn rho_examples() {
        let pd1 = LossSpec::power_divergence(1.0);
        let at0 = rho(0.0, 1.0, &pd1).unwrap();
        assert!((at0 - (1.0 - (2.0 * std::f64::consts::PI).powf(-0.5))).abs() < 1e-15);
        assert!((at0 - 0.601).abs() < 1e-3);
        assert!((rho(1e3, 1.0, &pd1).unwrap() - 1.0).abs() < 1e-15);
        assert!(rho(1.0, 0.0, &pd1).is_err());
        assert!(rho(1.0, -1.0, &pd1).is_err());
    }

    #[test]
    fn rho_is_continuous_in_alpha() {
        let z = 1.3;
        let small = rho(z, 1.0, &LossSpec::power_divergence(1e-8)).unwrap();
        let ml = rho(z, 1.0, &LossSpec::power_divergence(0.0)).unwrap();
        let c_small = rho(0.0, 1.0, &LossSpec::power_divergence(1e-8)).unwrap();
        let c_ml = rho(0.0, 1.0, &LossSpec::power_divergence(0.0)).unwrap();
        assert!(((small - c_small) - (ml - c_ml)).abs() < 1e-6);
        // Closed form of the ML term.
        assert!((ml - (0.5 * LN_2PI + z * z / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn psi_examples() {
        for spec in families() {
            assert_eq!(psi(0.0, 1.3, &spec).unwrap(), 0.0);
        }
        let pd1 = LossSpec::power_divergence(1.0);
        let peak = psi(1.0, 1.0, &pd1).unwrap();
        for i in 0..=2000 {
            let z = -10.0 + i as f64 * 0.01;
            assert!(psi(z, 1.0, &pd1).unwrap().abs() <= peak + 1e-15);
        }
        assert!(psi(5.0, 1.0, &pd1).unwrap() < peak / 10.0);
    }

    #[test]
    fn psi_matches_finite_differences() {
        let h = 1e-6;
        for spec in families() {
            let loss = spec.at_scale(1.2).unwrap();
            for z in [-2.0, -0.5, 0.7, 3.0] {
                let fd = (loss.rho(z + h) - loss.rho(z - h)) / (2.0 * h);
                let an = loss.psi(z);
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{spec:?} z={z}: {an} vs {fd}");
                let fd2 = (loss.psi(z + h) - loss.psi(z - h)) / (2.0 * h);
                let an2 = loss.psi_prime(z);
                assert!((fd2 - an2).abs() <= 1e-6 * an2.abs().max(1e-3), "{spec:?} z={z}: {an2} vs {fd2}");
            }
        }
    }

    #[test]
    fn weight_examples() {
        let pd1 = LossSpec::power_divergence(1.0);
        let w0 = irls_weight(0.0, 1.0, &pd1).unwrap();
        assert!(w0 >= irls_weight(0.1, 1.0, &pd1).unwrap());
        let ratio = irls_weight(3.0, 1.0, &pd1).unwrap() / w0;
        assert!((ratio - (-4.5f64).exp()).abs() < 1e-15);
        assert!((ratio - 0.0111).abs() < 1e-4);
        let ls = LossSpec::power_divergence(0.0);
        for e in [-100.0, 0.0, 0.3, 7.0] {
            assert_eq!(irls_weight(e, 2.0, &ls).unwrap(), 1.0);
        }
        assert_eq!(irls_weight(0.0, 1.0, &LossSpec::bisquare(4.685)).unwrap(), 1.0);
    }

    #[test]
    fn boundedness_peak_location() {
        for alpha in [0.3, 1.0, 1.5] {
            let sigma = 0.8;
            let loss = LossSpec::power_divergence(alpha).at_scale(sigma).unwrap();
            let (mut best, mut arg) = (0.0, 0.0);
            for i in 0..=200_000 {
                let z = i as f64 * 1e-4;
                let v = loss.psi(z).abs();
                if v > best {
                    best = v;
                    arg = z;
                }
            }
            assert!((arg - sigma / alpha.sqrt()).abs() < 2e-4, "alpha {alpha}: {arg}");
        }
    }

    #[test]
    fn mad_examples() {
        assert!((m_scale(&[-1.0, 0.0, 1.0]).unwrap() - 1.0 / 0.6745).abs() < 1e-12);
        assert!((m_scale(&[-1.0, 0.0, 1.0]).unwrap() - 1.4826).abs() < 1e-4);
        assert!(matches!(m_scale(&[2.0; 5]), Err(TarmaError::DegenerateScale)));
        assert!(m_scale(&[1.0]).is_err());
    }

    #[test]
    fn rms_and_auto_policy() {
        assert!((rms_scale(&[3.0, -4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(rms_scale(&[]).is_err());
        assert!(rms_scale(&[0.0, 0.0]).is_err());
        assert_eq!(LossSpec::power_divergence(0.0).effective_scale(), ScalePolicy::Rms);
        assert_eq!(LossSpec::least_squares().effective_scale(), ScalePolicy::Rms);
        assert_eq!(LossSpec::power_divergence(0.5).effective_scale(), ScalePolicy::Mad);
        assert_eq!(LossSpec::bisquare(4.685).effective_scale(), ScalePolicy::Mad);
        let fixed = LossSpec::power_divergence(0.0).with_scale(ScalePolicy::Fixed(2.0));
        assert_eq!(fixed.effective_scale(), ScalePolicy::Fixed(2.0));
    }

    #[test]
    fn mad_gaussian_consistency() {
        use rand::Rng;
        let mut rng = crate::rng::stream(99, 0);
        let draws: Vec<f64> = (0..100_000).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let s = m_scale(&draws).unwrap();
        assert!((s - 1.0).abs() < 0.02, "{s}");
    }

    #[test]
    fn json_shape() {
        let spec: LossSpec = serde_json::from_str(r#"{"family":"power_divergence","alpha":0.8}"#).unwrap();
        assert_eq!(spec, LossSpec::power_divergence(0.8));
        let b: LossSpec = serde_json::from_str(r#"{"family":"bisquare","scale_policy":{"fixed":2.0}}"#).unwrap();
        assert_eq!(b, LossSpec::bisquare(4.685).with_scale(ScalePolicy::Fixed(2.0)));
        let j = serde_json::to_string(&LossSpec::least_squares()).unwrap();
        assert_eq!(j, r#"{"family":"least_squares","scale_policy":"auto"}"#);
    }

    proptest! {
        #[test]
        fn rho_even_monotone(sigma in 0.1f64..5.0) {
            for spec in families() {
                let loss = spec.at_scale(sigma).unwrap();
                let r0 = loss.rho(0.0);
                let mut prev = r0;
                for i in 0..=1000 {
                    let z = i as f64 * 0.01;
                    let (a, b) = (loss.rho(z), loss.rho(-z));
                    prop_assert_eq!(a, b);
                    prop_assert!(a >= prev - 1e-15);
                    prop_assert!(a >= r0);
                    prev = a;
                }
            }
        }

        #[test]
        fn mad_scale_equivariant(v in prop::collection::vec(-100.0f64..100.0, 3..50), c in 0.01f64..100.0) {
            if let Ok(s) = m_scale(&v) {
                let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
                let sc = m_scale(&scaled).unwrap();
                prop_assert!((sc - c * s).abs() <= 1e-9 * sc.abs());
            }
        }
    }
}
