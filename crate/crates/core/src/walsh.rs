//! Walsh-coded simultaneous Ramsey protocol.
//!
//! Four orientations run Ramsey sequences at once. Each flips the phase of
//! its final π/2 pulse according to its own row of an orthogonal ±1 code over
//! eight sequences, so the per-orientation signals separate on a single
//! detector by correlating the eight integrated PL values with each row.
//! The Ramsey fringe is linearized: a field projection b shifts the
//! integrated PL by ±(⟨S⟩/α)·b.

use nalgebra::{Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::SensingMatrix;
use crate::spin_model::{Line, PhysicalConstants};

#[derive(Debug, Error, PartialEq)]
pub enum WalshError {
    #[error("code rows {0} and {1} are not orthogonal")]
    NotOrthogonal(usize, usize),
    #[error("code row {0} is not balanced")]
    Unbalanced(usize),
    #[error("invalid Ramsey config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalshCode {
    pub codes: [[i8; 8]; 4],
}

impl Default for WalshCode {
    fn default() -> Self {
        Self {
            codes: [
                [1, -1, 1, -1, 1, -1, 1, -1],
                [1, 1, -1, -1, 1, 1, -1, -1],
                [-1, 1, 1, -1, -1, 1, 1, -1],
                [1, 1, 1, 1, -1, -1, -1, -1],
            ],
        }
    }
}

impl WalshCode {
    /// Rows must be ±1, balanced (equal + and −) and pairwise orthogonal.
    pub fn validate(&self) -> Result<(), WalshError> {
        for (i, r) in self.codes.iter().enumerate() {
            if r.iter().any(|v| v.abs() != 1) || r.iter().map(|&v| v as i32).sum::<i32>() != 0 {
                return Err(WalshError::Unbalanced(i));
            }
        }
        for a in 0..4 {
            for b in a + 1..4 {
                let dot: i32 = (0..8).map(|n| (self.codes[a][n] * self.codes[b][n]) as i32).sum();
                if dot != 0 {
                    return Err(WalshError::NotOrthogonal(a, b));
                }
            }
        }
        Ok(())
    }

    fn sign(&self, i: usize, n: usize) -> f64 {
        self.codes[i][n] as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RamseyConfig {
    /// Initialization (optical pumping) time, s.
    pub t_init: f64,
    /// Free precession time, s.
    pub t_sense: f64,
    /// Readout time, s.
    pub t_read: f64,
    /// Field per normalized PL change, T, per orientation.
    pub alphas: [f64; 4],
    /// Mean integrated PL per sequence.
    pub mean_pl: f64,
}

impl Default for RamseyConfig {
    fn default() -> Self {
        Self {
            t_init: 2e-6,
            t_sense: 1e-6,
            t_read: 0.5e-6,
            alphas: [1e-6; 4],
            mean_pl: 1.0,
        }
    }
}

impl RamseyConfig {
    pub fn validate(&self) -> Result<(), WalshError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ![self.t_init, self.t_sense, self.t_read, self.mean_pl].iter().all(|v| ok(*v))
            || !self.alphas.iter().all(|v| ok(*v))
        {
            return Err(WalshError::Config("all times, alphas and mean PL must be positive".into()));
        }
        Ok(())
    }

    /// Full eight-sequence frames per second.
    pub fn frame_rate(&self) -> f64 {
        1.0 / (8.0 * (self.t_init + self.t_sense + self.t_read))
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Integrated PL of the eight sequences.
pub fn encode_sequence(
    cfg: &RamseyConfig,
    code: &WalshCode,
    b: &[f64; 4],
    noise_std: f64,
    rng: &mut ChaCha8Rng,
) -> [f64; 8] {
    std::array::from_fn(|n| {
        let signal: f64 = (0..4).map(|i| code.sign(i, n) * cfg.mean_pl / cfg.alphas[i] * b[i]).sum();
        let noise = if noise_std > 0.0 { noise_std * normal(rng) } else { 0.0 };
        cfg.mean_pl + signal + noise
    })
}

/// ⟨B_i⟩ = (α_i/(8⟨S⟩))·Σ_n sign_i(n)·S_n.
pub fn decode(s: &[f64; 8], cfg: &RamseyConfig, code: &WalshCode) -> [f64; 4] {
    std::array::from_fn(|i| {
        let corr: f64 = (0..8).map(|n| code.sign(i, n) * s[n]).sum();
        cfg.alphas[i] / (8.0 * cfg.mean_pl) * corr
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SequentialEstimate {
    pub estimates: [f64; 4],
    /// Analytic single-estimate noise, T.
    pub noise_std: [f64; 4],
    /// |b_i| / noise_std_i.
    pub snr: [f64; 4],
}

/// Same eight-sequence budget spent two sequences per orientation, one at
/// each final-pulse phase: ⟨B⟩ = (α/(2⟨S⟩))(S₁ − S₂).
pub fn sequential_baseline(cfg: &RamseyConfig, b: &[f64; 4], noise_std: f64, rng: &mut ChaCha8Rng) -> SequentialEstimate {
    let mut est = [0.0; 4];
    for i in 0..4 {
        let k = cfg.mean_pl / cfg.alphas[i] * b[i];
        let mut draw = || if noise_std > 0.0 { noise_std * normal(rng) } else { 0.0 };
        let s1 = cfg.mean_pl + k + draw();
        let s2 = cfg.mean_pl - k + draw();
        est[i] = cfg.alphas[i] / (2.0 * cfg.mean_pl) * (s1 - s2);
    }
    let sd: [f64; 4] = std::array::from_fn(|i| cfg.alphas[i] * noise_std * 2f64.sqrt() / (2.0 * cfg.mean_pl));
    SequentialEstimate {
        estimates: est,
        noise_std: sd,
        snr: std::array::from_fn(|i| if sd[i] > 0.0 { b[i].abs() / sd[i] } else { f64::INFINITY }),
    }
}

/// Analytic noise of one simultaneous decode, T.
pub fn decode_noise_std(cfg: &RamseyConfig, noise_std: f64) -> [f64; 4] {
    cfg.alphas.map(|a| a / (8.0 * cfg.mean_pl) * 8f64.sqrt() * noise_std)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub trials: usize,
    pub mean_simultaneous: [f64; 4],
    pub mean_sequential: [f64; 4],
    pub std_simultaneous: [f64; 4],
    pub std_sequential: [f64; 4],
    /// Analytic per-decode std of the simultaneous scheme.
    pub predicted_std_simultaneous: [f64; 4],
    /// SNR(simultaneous)/SNR(sequential) = std_sequential/std_simultaneous.
    pub snr_ratio: [f64; 4],
    pub frame_rate: f64,
}

/// Repeat both schemes `trials` times with independent noise.
pub fn monte_carlo(
    cfg: &RamseyConfig,
    code: &WalshCode,
    b: &[f64; 4],
    noise_std: f64,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloReport, WalshError> {
    cfg.validate()?;
    code.validate()?;
    if trials < 2 {
        return Err(WalshError::Config("need at least two trials".into()));
    }
    let mut r_sim = ChaCha8Rng::seed_from_u64(seed);
    let mut r_seq = ChaCha8Rng::seed_from_u64(seed);
    r_seq.set_stream(1);
    let mut sim = vec![[0.0; 4]; trials];
    let mut seq = vec![[0.0; 4]; trials];
    for t in 0..trials {
        sim[t] = decode(&encode_sequence(cfg, code, b, noise_std, &mut r_sim), cfg, code);
        seq[t] = sequential_baseline(cfg, b, noise_std, &mut r_seq).estimates;
    }
    let stats = |v: &[[f64; 4]]| -> ([f64; 4], [f64; 4]) {
        let n = v.len() as f64;
        let mean: [f64; 4] = std::array::from_fn(|i| v.iter().map(|x| x[i]).sum::<f64>() / n);
        let sd = std::array::from_fn(|i| (v.iter().map(|x| (x[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        (mean, sd)
    };
    let (m1, s1) = stats(&sim);
    let (m2, s2) = stats(&seq);
    Ok(MonteCarloReport {
        trials,
        mean_simultaneous: m1,
        mean_sequential: m2,
        std_simultaneous: s1,
        std_sequential: s2,
        predicted_std_simultaneous: decode_noise_std(cfg, noise_std),
        snr_ratio: std::array::from_fn(|i| s2[i] / s1[i]),
        frame_rate: cfg.frame_rate(),
    })
}

/// Linear map from decoded axis projections ⟨B_i⟩ (T) to the frequency shifts
/// a [`SensingMatrix`] expects: Δν_i = scale_i·⟨B_i⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionBridge {
    /// Hz/T per channel, sign included.
    pub scale: [f64; 4],
}

impl ProjectionBridge {
    /// γ·s_i with s_i the linear-regime response sign of each addressed line.
    pub fn from_signs(signs: &[f64; 4], consts: &PhysicalConstants) -> Self {
        Self {
            scale: signs.map(|s| s * consts.gyromagnetic_over_h),
        }
    }

    /// Signs from the bias field and addressed branches.
    pub fn for_bias(bias: &Vector3<f64>, addressed: &[Line; 4], consts: &PhysicalConstants) -> Self {
        Self::from_signs(&crate::calibration::linear_regime_signs(bias, addressed), consts)
    }

    pub fn to_lab_field(&self, projections: &[f64; 4], m: &SensingMatrix) -> Vector3<f64> {
        let dnu = Vector4::from_fn(|i, _| self.scale[i] * projections[i]);
        m.a_pinv * dnu
    }
}
