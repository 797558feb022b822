//! TARMA parameters, the residual recursion, simulation and contamination.

pub mod contamination;
pub mod params;
pub mod recursion;
pub mod simulate;

pub use contamination::{contaminate, contaminate_innovations, ContaminationSpec, OutlierKind, Pattern};
pub use params::{Layout, TarmaParams};
pub use recursion::{conditional_mean, residual_jacobian, residuals, ResidualDerivatives};
pub use simulate::{simulate, simulate_path, simulate_with, InnovationKind, InnovationSampler, InnovationSpec, DEFAULT_BURN_IN};
