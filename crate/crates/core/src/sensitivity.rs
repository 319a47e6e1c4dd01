//! Shot-noise budget, covariance propagation to the lab frame, and empirical
//! sensitivity from zero-signal records.
//!
//! Conventions: Δf is a single-sided bandwidth, SNR = 1 defines the minimum
//! detectable shift, and a bandwidth Δf corresponds to a measurement time
//! T = 1/(2Δf). Sensitivity is η = σ·√T.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{SensingMatrix, DEMO_SLOPES};
use crate::spin_model::PhysicalConstants;
use crate::stream::SampleStream;

#[derive(Debug, Error, PartialEq)]
pub enum SensitivityError {
    #[error("empty stream")]
    EmptyStream,
    #[error("invalid noise budget: {0}")]
    InvalidBudget(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseBudget {
    /// Mean PL photocurrent, A.
    pub i_sig: f64,
    /// Mean reference photocurrent, A.
    pub i_ref: f64,
    /// Signal transimpedance (termination), Ω.
    pub r_sig: f64,
    /// Lock-in slopes, V/Hz.
    pub slopes: [f64; 4],
    /// Single-sided bandwidth, Hz.
    pub bandwidth: f64,
    /// Optional multiplier for technical noise above shot noise. Reported
    /// separately; never folded into the shot-noise figures.
    pub excess_noise_factor: Option<f64>,
}

impl Default for NoiseBudget {
    fn default() -> Self {
        Self {
            i_sig: 24.1e-3,
            i_ref: 30.1e-3,
            r_sig: 300.0,
            slopes: DEMO_SLOPES,
            bandwidth: 0.5,
            excess_noise_factor: None,
        }
    }
}

impl NoiseBudget {
    pub fn validate(&self) -> Result<(), SensitivityError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(self.i_sig) && ok(self.i_ref) && ok(self.r_sig)) {
            return Err(SensitivityError::InvalidBudget("currents and resistance must be positive".into()));
        }
        if !(self.bandwidth >= 0.0 && self.bandwidth.is_finite()) {
            return Err(SensitivityError::InvalidBudget("bandwidth must be non-negative".into()));
        }
        if self.slopes.iter().any(|s| *s == 0.0 || !s.is_finite()) {
            return Err(SensitivityError::InvalidBudget("slopes must be nonzero".into()));
        }
        if let Some(k) = self.excess_noise_factor {
            if !(k >= 1.0 && k.is_finite()) {
                return Err(SensitivityError::InvalidBudget("excess noise factor must be ≥ 1".into()));
            }
        }
        Ok(())
    }

    /// √(1 + I_sig/I_ref): penalty from the reference photodiode's own shot noise.
    pub fn reference_factor(&self) -> f64 {
        (1.0 + self.i_sig / self.i_ref).sqrt()
    }
}

/// Smallest detectable shift per channel (SNR = 1), Hz.
pub fn min_detectable_shift(budget: &NoiseBudget, include_reference: bool, consts: &PhysicalConstants) -> [f64; 4] {
    let v_noise = budget.r_sig * (2.0 * consts.elementary_charge * budget.i_sig * budget.bandwidth).sqrt();
    let f = if include_reference { budget.reference_factor() } else { 1.0 };
    budget.slopes.map(|s| v_noise * f / s.abs())
}

/// Σ_B = A⁺ diag(Δν²) A⁺ᵀ and the per-axis standard deviations.
pub fn propagate_covariance(dnu: &[f64; 4], m: &SensingMatrix) -> (Matrix3<f64>, [f64; 3]) {
    let mut cov = Matrix3::<f64>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            cov[(i, j)] = (0..4).map(|k| m.a_pinv[(i, k)] * m.a_pinv[(j, k)] * dnu[k] * dnu[k]).sum::<f64>();
        }
    }
    let sigma = [cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt(), cov[(2, 2)].sqrt()];
    (cov, sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    /// Hz.
    pub dnu_min: [f64; 4],
    /// T.
    pub sigma_b: [f64; 3],
    /// T/√Hz.
    pub eta: [f64; 3],
    /// T².
    pub covariance_b: [[f64; 3]; 3],
    /// Single-sided bandwidth used, Hz.
    pub bandwidth: f64,
    /// T = 1/(2Δf), s.
    pub measurement_time: f64,
    pub include_reference: bool,
    pub convention: &'static str,
    pub excess_noise_factor: Option<f64>,
    /// η scaled by the excess factor, when one is given.
    pub eta_with_excess: Option<[f64; 3]>,
}

pub const CONVENTION: &str =
    "SNR = 1; single-sided bandwidth Δf; T = 1/(2Δf); η = σ·√T; empirical η = std/√(2·ENBW)";

pub fn sensitivity_report(
    budget: &NoiseBudget,
    m: &SensingMatrix,
    include_reference: bool,
    consts: &PhysicalConstants,
) -> Result<SensitivityReport, SensitivityError> {
    budget.validate()?;
    let dnu = min_detectable_shift(budget, include_reference, consts);
    let (cov, sigma) = propagate_covariance(&dnu, m);
    let t = if budget.bandwidth > 0.0 { 1.0 / (2.0 * budget.bandwidth) } else { f64::INFINITY };
    let eta = if budget.bandwidth > 0.0 { sigma.map(|s| s * t.sqrt()) } else { [0.0; 3] };
    Ok(SensitivityReport {
        dnu_min: dnu,
        sigma_b: sigma,
        eta,
        covariance_b: std::array::from_fn(|i| std::array::from_fn(|j| cov[(i, j)])),
        bandwidth: budget.bandwidth,
        measurement_time: t,
        include_reference,
        convention: CONVENTION,
        excess_noise_factor: budget.excess_noise_factor,
        eta_with_excess: budget.excess_noise_factor.map(|k| eta.map(|e| e * k)),
    })
}

/// Per-axis sensitivity from a zero-signal record: std/√(2·ENBW), T/√Hz.
pub fn empirical_sensitivity(zero_signal_b: &[SampleStream; 3], enbw: f64) -> Result<[f64; 3], SensitivityError> {
    if zero_signal_b.iter().any(|s| s.is_empty()) {
        return Err(SensitivityError::EmptyStream);
    }
    Ok(std::array::from_fn(|i| zero_signal_b[i].std() / (2.0 * enbw).sqrt()))
}
