//! The whole simulated measurement in one call: bias fit, linearization,
//! chirp calibration of the lock-in slopes, synthesis, laser-noise
//! cancellation, demodulation, reconstruction, spectra and sensitivity.
//!
//! The measurement run starts `warmup` seconds before t = 0 so the band-pass
//! and high-pass transients have decayed by the time the analysis window
//! `[0, duration)` begins. Only the analysis window is reported.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{
    default_linearize_step, fit_bias_seeded, linearize, BiasFit, CalibrationError, OdmrLineCenters, SensingMatrix,
    SlopeCalibration, DEFAULT_ADDRESSED,
};
use crate::dsp::{
    calibrate_from_chirp, cancel_laser_noise, demodulate, remove_tones, spectrum, tone_rms, DspError, LockinChain,
    SpectralMethod, Spectrum,
};
use crate::reconstruction::{reconstruct_stream, ReconstructionError};
use crate::sensitivity::{empirical_sensitivity, sensitivity_report, NoiseBudget, SensitivityError, SensitivityReport};
use crate::spin_model::{HamiltonianParams, Line, PhysicalConstants};
use crate::stream::SampleStream;
use crate::synth::{
    default_channels, default_coils, synthesize, tune_carriers, Axis, CarrierSweep, ChannelConfig, CoilSignal,
    NoiseModel, SynthConfig, SynthError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Reconstruction(#[from] ReconstructionError),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
}

/// Slope calibration by a carrier chirp with the coils off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChirpCalibration {
    /// Peak-to-peak carrier excursion, Hz.
    pub span: f64,
    /// Settling time at the start offset, s.
    pub hold: f64,
    /// Ramp duration, s.
    pub ramp: f64,
    /// Noise during calibration. Noiseless by default, like an averaged bench calibration.
    pub noise: NoiseModel,
}

impl Default for ChirpCalibration {
    fn default() -> Self {
        Self {
            span: 20e3,
            hold: 0.3,
            ramp: 1.0,
            noise: NoiseModel::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Observed ODMR line centers; the fitted Hamiltonian is used as ground truth.
    pub line_centers: OdmrLineCenters,
    pub addressed: [Line; 4],
    pub channels: [ChannelConfig; 4],
    /// Move each carrier onto its model line center before calibrating.
    pub tune_carriers: bool,
    pub coils: Vec<CoilSignal>,
    /// `duration` is the analysis window; `start_time` is overwritten with `-warmup`.
    pub synth: SynthConfig,
    /// Settling lead-in before the analysis window, s.
    pub warmup: f64,
    pub chain: LockinChain,
    pub calibration: ChirpCalibration,
    /// Use these slopes and phases instead of running the chirp.
    pub slopes: Option<SlopeCalibration>,
    /// Reference subtraction before demodulation.
    pub cancel_laser_noise: bool,
    pub cancel_window: f64,
    pub spectral_method: SpectralMethod,
    pub excess_noise_factor: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            line_centers: OdmrLineCenters::demo(),
            addressed: DEFAULT_ADDRESSED,
            channels: default_channels(),
            tune_carriers: true,
            coils: default_coils(),
            synth: SynthConfig::default(),
            warmup: 2.0,
            chain: LockinChain::default(),
            calibration: ChirpCalibration::default(),
            slopes: None,
            cancel_laser_noise: true,
            cancel_window: 1.0,
            spectral_method: SpectralMethod::Periodogram,
            excess_noise_factor: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if !(self.warmup >= 0.0 && self.warmup.is_finite()) {
            return bad("warmup must be non-negative");
        }
        if !(self.cancel_window > 0.0) {
            return bad("cancel_window must be positive");
        }
        let c = &self.calibration;
        if !(c.span > 0.0 && c.hold >= 0.0 && c.ramp > 0.0) {
            return bad("calibration span and ramp must be positive, hold non-negative");
        }
        for (ch, line) in self.channels.iter().zip(&self.addressed) {
            if ch.line != *line {
                return bad("channel lines must match the addressed lines in order");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToneReport {
    pub axis: Axis,
    pub freq: f64,
    /// Applied RMS amplitude, T.
    pub applied_rms: f64,
    /// Reconstructed RMS amplitude on the same axis, T.
    pub measured_rms: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub fit: BiasFit,
    pub matrix: SensingMatrix,
    pub channels: [ChannelConfig; 4],
    pub slopes: SlopeCalibration,
    /// Δν per channel over the analysis window, Hz.
    pub shifts: [SampleStream; 4],
    /// (Bx, By, Bz) over the analysis window, T.
    pub field: [SampleStream; 3],
    pub spectra: [Spectrum; 3],
    pub tones: Vec<ToneReport>,
    pub enbw: f64,
    pub group_delay: f64,
    pub predicted: SensitivityReport,
    /// std/√(2·ENBW) after removing the coil tones, T/√Hz.
    pub empirical_eta: [f64; 3],
}

/// Samples of `s` at or after t = 0.
fn analysis_window(s: &SampleStream) -> SampleStream {
    let k = ((-s.t0) * s.rate).round().max(0.0) as usize;
    let mut out = s.skip(k);
    out.t0 = 0.0;
    out
}

pub fn run(cfg: &PipelineConfig, seed: u64, consts: &PhysicalConstants) -> Result<PipelineResult, PipelineError> {
    cfg.validate()?;
    let fit = fit_bias_seeded(&cfg.line_centers, consts)?;
    let truth: HamiltonianParams = fit.params;
    let matrix = linearize(&truth, &cfg.addressed, default_linearize_step(consts), consts)?;

    let mut channels = cfg.channels;
    if cfg.tune_carriers {
        tune_carriers(&mut channels, &truth, consts);
    }

    let slopes = match &cfg.slopes {
        Some(s) => *s,
        None => {
            let c = cfg.calibration;
            let sweep = CarrierSweep { span: c.span, hold: c.hold };
            let chirp_cfg = SynthConfig {
                duration: c.hold + c.ramp,
                start_time: 0.0,
                noise: c.noise,
                sweep: Some(sweep),
                ..cfg.synth
            };
            let (pl, _) = synthesize(&truth, &channels, &[], &chirp_cfg, seed ^ 0xC41B_5EED, consts)?;
            calibrate_from_chirp(&pl, &channels, &cfg.chain, &sweep)?
        }
    };

    let run_cfg = SynthConfig {
        duration: cfg.synth.duration + cfg.warmup,
        start_time: -cfg.warmup,
        sweep: None,
        ..cfg.synth
    };
    let (sig, reference) = synthesize(&truth, &channels, &cfg.coils, &run_cfg, seed, consts)?;
    let pl = if cfg.cancel_laser_noise {
        cancel_laser_noise(&sig, &reference, cfg.cancel_window)?
    } else {
        sig
    };
    let demod = demodulate(&pl, &channels, &slopes, &cfg.chain)?;
    let shifts = demod.shifts.clone().map(|s| analysis_window(&s));
    let field = reconstruct_stream(&shifts, &matrix)?;

    let spectra = std::array::from_fn(|j| spectrum(&field[j], cfg.spectral_method));
    let tones = cfg
        .coils
        .iter()
        .map(|c| {
            let measured = tone_rms(&field[c.axis.index()], c.freq);
            ToneReport {
                axis: c.axis,
                freq: c.freq,
                applied_rms: c.rms_amplitude,
                measured_rms: measured,
                relative_error: if c.rms_amplitude > 0.0 { measured / c.rms_amplitude - 1.0 } else { f64::NAN },
            }
        })
        .collect();

    let budget = NoiseBudget {
        i_sig: cfg.synth.pl_mean_current,
        i_ref: cfg.synth.ref_mean_current,
        r_sig: cfg.synth.sig_termination,
        slopes: slopes.slopes,
        bandwidth: demod.enbw,
        excess_noise_factor: cfg.excess_noise_factor,
    };
    let predicted = sensitivity_report(&budget, &matrix, cfg.cancel_laser_noise, consts)?;
    let coil_freqs: Vec<f64> = cfg.coils.iter().map(|c| c.freq).collect();
    let residual = field.clone().map(|s| remove_tones(&s, &coil_freqs));
    let empirical_eta = empirical_sensitivity(&residual, demod.enbw)?;

    Ok(PipelineResult {
        fit,
        matrix,
        channels,
        slopes,
        shifts,
        field,
        spectra,
        tones,
        enbw: demod.enbw,
        group_delay: demod.group_delay,
        predicted,
        empirical_eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_trims_warmup() {
        let s = SampleStream::new((0..30).map(f64::from).collect(), 10.0, crate::stream::Unit::Hertz).with_t0(-2.0);
        let w = analysis_window(&s);
        assert_eq!(w.samples[0], 20.0);
        assert_eq!(w.t0, 0.0);
        assert_eq!(w.len(), 10);
    }

    #[test]
    fn rejects_mismatched_channels() {
        let mut cfg = PipelineConfig::default();
        cfg.channels.swap(0, 1);
        assert!(matches!(cfg.validate(), Err(PipelineError::Config(_))));
    }
}
