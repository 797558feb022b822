//! Robust M-estimation for two-regime threshold ARMA (TARMA) models.
//!
//! The crate is organised bottom-up:
//!
//! - [`series`]: CSV loading, log returns, train/test splits.
//! - [`model`]: parameters, the residual recursion and its derivatives,
//!   simulation, and AO/RO/IO contamination.
//! - [`loss`]: the power-divergence, bisquare and least-squares losses and
//!   the MAD scale.
//! - [`estimation`]: trimmed-LS start, IRLS at a fixed threshold, the
//!   profile search over `(r, d)`, sandwich covariance, outlier weights and
//!   the robust information criterion.
//! - [`evaluation`]: Monte Carlo bias/variance, asymptotic bias curves,
//!   one-step forecasting, MAPE and the choice of `alpha`.
//! - [`cli`]: the `tarma` command-line tool.

pub mod cli;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod loss;
pub mod model;
pub mod rng;
pub mod series;

pub use error::{Result, TarmaError};
pub use loss::{LossFamily, LossSpec, ScalePolicy};
pub use model::{ContaminationSpec, InnovationSpec, OutlierKind, TarmaParams};
pub use series::TimeSeries;
