//! Simultaneous four-axis vector magnetometry with NV centers in diamond.
//!
//! The crate covers the full simulated measurement loop:
//!
//! - [`spin_model`]: orientation geometry and ODMR transition frequencies.
//! - [`calibration`]: bias-field fit, sensing-matrix linearization, lock-in slope fits.
//! - [`reconstruction`]: frequency shifts to lab-frame field, linear and exact paths.
//! - [`synth`]: forward simulation of the frequency-multiplexed photoluminescence signal.
//! - [`dsp`]: laser-noise cancellation, filtering, lock-in demodulation, ENBW.
//! - [`sensitivity`]: shot-noise budget and covariance propagation.
//! - [`walsh`]: Walsh-coded simultaneous Ramsey protocol.
//! - [`pipeline`]: calibrate, measure and reconstruct in one call.
//! - [`cli`]: configuration documents and the `nvmag` command set.
//!
//! Runnable walkthroughs live under `examples/`; `cargo run --example pipeline`
//! is the quickest tour.

pub mod calibration;
pub mod cli;
pub mod dsp;
pub mod lm;
pub mod pipeline;
pub mod reconstruction;
pub mod sensitivity;
pub mod spin_model;
pub mod stream;
pub mod synth;
pub mod walsh;

mod serde_vec3;
pub(crate) mod serde_mat;

pub use calibration::{fit_bias, linear_regime_matrix, linearize, SensingMatrix, SlopeCalibration};
pub use spin_model::{
    transition_frequencies, Branch, HamiltonianParams, Line, Orientation, PhysicalConstants,
    TransitionSet,
};
pub use stream::{SampleStream, Unit};

/// Crate version, embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
