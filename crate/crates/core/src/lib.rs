//! Sparse system identification with multiband-structured normalized subband
//! adaptive filters (NSAF).
//!
//! The crate is organised bottom-up:
//!
//! - [`filterbank`]: cosine-modulated analysis bank design and subband
//!   decomposition with N-fold decimation.
//! - [`signals`]: sparse target systems, AR(1)/PCM input streams and
//!   SNR-calibrated measurement noise.
//! - [`adaptive`]: NSAF and its l1 / reweighted-l1 zero-attracting variants
//!   (projected and quasi forms), fullband NLMS baselines, the adaptive
//!   intensity parameter and per-sample operation counts.
//! - [`theory`]: the mean-square-deviation model (input moments, Kronecker
//!   covariance recursion, Gaussian moment closures, stability bounds and the
//!   steady-state fixed point).
//! - [`harness`]: Monte-Carlo experiments, theory runs, Gaussianity checks and
//!   file output used by the `saf` command-line tool.

pub mod adaptive;
pub mod error;
pub mod filterbank;
pub mod harness;
pub mod rng;
pub mod signals;
pub mod theory;

pub use error::{Error, Result};

/// dB value emitted in place of `-inf` for an exactly zero MSD.
pub const ZERO_DB_SENTINEL: f64 = -400.0;

/// `10 log10(x)`, mapping zero (or negative round-off) to [`ZERO_DB_SENTINEL`].
pub fn to_db(x: f64) -> f64 {
    if x > 0.0 {
        10.0 * x.log10()
    } else {
        ZERO_DB_SENTINEL
    }
}
