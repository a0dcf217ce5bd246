//! Estimation of a single period shared by several irregularly sampled,
//! noisy sinusoids, as found in multiband photometry of periodic variable
//! stars.
//!
//! Two estimators are provided:
//!
//! * MGLS ([`mgls_estimate`]): minimizes the Gaussian negative log likelihood
//!   over a frequency grid, with one weighted sinusoid regression per band.
//! * PGLS ([`pgls_estimate`]): adds quadratic penalties that pull the band
//!   amplitudes towards a reference direction and the band phases towards a
//!   common value. Each frequency is solved by block coordinate descent with a
//!   majorization-minimization phase step, and the likelihood profile is used
//!   as a lower bound to skip frequencies that cannot win.
//!
//! [`tuning`] picks the penalty strengths from well-sampled historical curves
//! and [`synth`] simulates test populations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bcd;
pub mod error;
pub mod fit;
pub mod grid;
pub mod io;
pub mod mgls;
pub mod model;
pub mod pruning;
pub mod synth;
pub mod tuning;

pub use bcd::{bcd_fit, BcdResult, BcdSettings};
pub use error::{Error, Result};
pub use fit::{FitDiagnostics, FitResult, Method};
pub use grid::{build_grid, build_grid_capped, FrequencyGrid};
pub use mgls::{mgls_estimate, nll_profile, profile_objectives, solve_band, BandFit, Profile, ProfilePoint};
pub use model::{
    nll, penalty_j1, penalty_j2, pnll, predict, BandSeries, ModelParams, MultibandLightCurve,
    PenaltyConfig,
};
pub use pruning::{pgls_estimate, PglsOptions, PruningStats};
