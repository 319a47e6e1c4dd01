//! Measurement chain: laser-noise cancellation, filtering, four-channel
//! lock-in demodulation, decimation, notches, ENBW and spectra.

pub mod enbw;
pub mod filter;
pub mod lockin;
pub mod noise_cancel;
pub mod spectrum;

use thiserror::Error;

pub use enbw::enbw;
pub use filter::{apply_filter, FilterKind, FilterSpec};
pub use lockin::{calibrate_from_chirp, demodulate, demodulate_iq, DemodResult, LockinChain};
pub use spectrum::{remove_tones, spectrum, tone_rms, SpectralMethod, Spectrum};
pub use noise_cancel::cancel_laser_noise;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("unstable filter section {section}: pole radius {radius}")]
    UnstableFilter { section: usize, radius: f64 },
    #[error("streams differ in length or sample rate")]
    LengthMismatch,
    #[error("reference mean is zero in window starting at sample {0}")]
    ZeroReference(usize),
    #[error("sample rate {got} does not match the chain's {expected}")]
    RateMismatch { got: f64, expected: f64 },
    #[error("channel {0} has no usable lock-in slope")]
    MissingSlope(usize),
    #[error("empty stream")]
    EmptyStream,
    #[error(transparent)]
    Calibration(#[from] crate::calibration::CalibrationError),
}
