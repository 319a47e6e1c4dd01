//! Per-command config documents. Unknown keys are rejected; every field has
//! a default, so `{}` is a valid document for each command.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::calibration::{OdmrLineCenters, SensingMatrix, SlopeCalibration, DEFAULT_ADDRESSED};
use crate::dsp::LockinChain;
use crate::pipeline::{ChirpCalibration, PipelineConfig};
use crate::sensitivity::NoiseBudget;
use crate::spin_model::{HamiltonianParams, Line};
use crate::synth::{default_channels, default_coils, ChannelConfig, CoilSignal, SynthConfig};
use crate::walsh::{RamseyConfig, WalshCode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitBiasConfig {
    pub seed: u64,
    pub line_centers: OdmrLineCenters,
    /// JSON file holding eight line centers in Hz, either `{"frequencies": [...]}`
    /// or a bare array. Takes precedence over `line_centers`.
    pub input: Option<PathBuf>,
    /// Starting point; seeded from the data when absent.
    pub initial_guess: Option<HamiltonianParams>,
}

impl Default for FitBiasConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            line_centers: OdmrLineCenters::demo(),
            input: None,
            initial_guess: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearizeConfig {
    pub seed: u64,
    /// Fitted to obtain the operating point unless `point` is given.
    pub line_centers: OdmrLineCenters,
    pub point: Option<HamiltonianParams>,
    pub addressed: [Line; 4],
    /// Finite-difference field step, T. Defaults to 10 Hz worth of field.
    pub step: Option<f64>,
}

impl Default for LinearizeConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            line_centers: OdmrLineCenters::demo(),
            point: None,
            addressed: DEFAULT_ADDRESSED,
            step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthCmdConfig {
    pub seed: u64,
    pub line_centers: OdmrLineCenters,
    /// Ground-truth Hamiltonian; the fit of `line_centers` when absent.
    pub params: Option<HamiltonianParams>,
    pub channels: [ChannelConfig; 4],
    pub tune_carriers: bool,
    pub coils: Vec<CoilSignal>,
    pub synth: SynthConfig,
    /// Also write `signal.csv` (large).
    pub csv: bool,
}

impl Default for SynthCmdConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            line_centers: OdmrLineCenters::demo(),
            params: None,
            channels: default_channels(),
            tune_carriers: true,
            coils: default_coils(),
            synth: SynthConfig::default(),
            csv: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemodConfig {
    pub seed: u64,
    /// PL voltage stream (NVMS file). Required.
    pub signal: Option<PathBuf>,
    /// Reference voltage stream; enables laser-noise cancellation.
    pub reference: Option<PathBuf>,
    pub cancel_window: f64,
    pub channels: [ChannelConfig; 4],
    pub chain: LockinChain,
    /// Use these slopes instead of running a chirp calibration.
    pub slopes: Option<SlopeCalibration>,
    /// Chirp calibration settings, and the model it runs against.
    pub calibration: ChirpCalibration,
    pub line_centers: OdmrLineCenters,
    pub params: Option<HamiltonianParams>,
    pub tune_carriers: bool,
    pub synth: SynthConfig,
    /// Drop output samples before this time, s.
    pub analysis_start: Option<f64>,
}

impl Default for DemodConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            signal: None,
            reference: None,
            cancel_window: 1.0,
            channels: default_channels(),
            chain: LockinChain::default(),
            slopes: None,
            calibration: ChirpCalibration::default(),
            line_centers: OdmrLineCenters::demo(),
            params: None,
            tune_carriers: true,
            synth: SynthConfig::default(),
            analysis_start: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructMethod {
    #[default]
    Linear,
    /// Exact Hamiltonian inversion per frame.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructConfig {
    pub seed: u64,
    /// Four shift streams (Hz) in addressed-line order. Required.
    pub shifts: Option<[PathBuf; 4]>,
    /// Sensing matrix file as written by `linearize`; otherwise linearized at
    /// the fit of `line_centers`.
    pub matrix: Option<PathBuf>,
    pub line_centers: OdmrLineCenters,
    pub addressed: [Line; 4],
    pub method: ReconstructMethod,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            shifts: None,
            matrix: None,
            line_centers: OdmrLineCenters::demo(),
            addressed: DEFAULT_ADDRESSED,
            method: ReconstructMethod::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineCmdConfig {
    pub seed: u64,
    pub pipeline: PipelineConfig,
    /// Also write the four shift streams.
    pub write_shifts: bool,
}

impl Default for PipelineCmdConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            pipeline: PipelineConfig::default(),
            write_shifts: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityCmdConfig {
    pub seed: u64,
    pub budget: NoiseBudget,
    pub include_reference: bool,
    /// Explicit sensing matrix; otherwise linearized at the fit of `line_centers`.
    pub matrix: Option<SensingMatrix>,
    pub line_centers: OdmrLineCenters,
    pub addressed: [Line; 4],
}

impl Default for SensitivityCmdConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            budget: NoiseBudget::default(),
            include_reference: true,
            matrix: None,
            line_centers: OdmrLineCenters::demo(),
            addressed: DEFAULT_ADDRESSED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalshCmdConfig {
    pub seed: u64,
    pub ramsey: RamseyConfig,
    pub code: WalshCode,
    /// Field projections on the four orientation axes, T.
    pub projections: [f64; 4],
    /// Per-sequence PL noise, PL units.
    pub noise_std: f64,
    pub trials: usize,
    /// Operating point for mapping projections to a lab-frame field.
    pub line_centers: OdmrLineCenters,
    pub addressed: [Line; 4],
}

impl Default for WalshCmdConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            ramsey: RamseyConfig::default(),
            code: WalshCode::default(),
            projections: [1e-9, -2e-9, 0.5e-9, 1.5e-9],
            noise_std: 1e-3,
            trials: 10_000,
            line_centers: OdmrLineCenters::demo(),
            addressed: DEFAULT_ADDRESSED,
        }
    }
}
