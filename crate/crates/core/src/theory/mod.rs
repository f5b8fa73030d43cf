//! Mean and mean-square behaviour predicted from input statistics.
//!
//! Everything here builds dense `M² × M²` matrices, so filter lengths are
//! capped at [`MAX_THEORY_TAPS`].

pub mod gaussian;
pub mod linalg;
pub mod moments;
pub mod steady;
pub mod transient;

pub use gaussian::{attractor_moments, build_h_theta, erf, gaussian_moments_case1, gaussian_moments_case2};
pub use moments::{estimate_moments, InputMoments, MAX_THEORY_TAPS};
pub use steady::{
    spectral_radius_f1, stability_bounds, steady_state_mean, steady_state_msd, BetaStar, StabilityBounds, SteadySolver,
    SteadyState,
};
pub use transient::{
    build_variant_matrices, msd, msd_db, transient_curve, transient_step, AttractorForm, TransientState, VariantMatrices,
};
