//! Forward simulation of the frequency-multiplexed ODMR signal.
//!
//! Four MW tones, each frequency modulated at its own rate, drive one line
//! per NV orientation. All resulting photoluminescence lands on one detector.
//! The response is quasi-static: at every sample the line centers follow
//! the instantaneous field and the PL dip is read off a fixed lineshape.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::DEFAULT_ADDRESSED;
use crate::spin_model::{line_frequency, HamiltonianParams, Line, PhysicalConstants, SpinError};
use crate::stream::{SampleStream, Unit};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis config: {0}")]
    Config(String),
    #[error(transparent)]
    Spin(#[from] SpinError),
}

fn bad<T>(msg: impl Into<String>) -> Result<T, SynthError> {
    Err(SynthError::Config(msg.into()))
}

/// One MW addressing channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub line: Line,
    /// MW carrier, Hz.
    pub carrier: f64,
    /// FM rate, Hz.
    pub mod_freq: f64,
    /// Peak FM deviation, Hz.
    pub deviation: f64,
    /// Fractional PL dip depth per hyperfine component.
    pub contrast: f64,
    /// FWHM of each hyperfine component, Hz.
    pub linewidth: f64,
}

/// Default four channels, rows (λ⁻, χ⁻, φ⁺, κ⁺).
///
/// Contrasts are chosen so that the lock-in slopes of the default chain land
/// near the demonstration device's measured slopes.
pub fn default_channels() -> [ChannelConfig; 4] {
    let carrier = [2.731e9, 2.862e9, 2.966e9, 3.069e9];
    let mod_freq = [4056.0, 2704.0, 5070.0, 3380.0];
    let deviation = [832e3, 828e3, 775e3, 1178e3];
    let contrast = [0.0099, 0.0105, 0.0120, 0.0273];
    std::array::from_fn(|k| ChannelConfig {
        line: DEFAULT_ADDRESSED[k],
        carrier: carrier[k],
        mod_freq: mod_freq[k],
        deviation: deviation[k],
        contrast: contrast[k],
        linewidth: 1e6,
    })
}

/// Move each carrier onto its line center at `params`.
pub fn tune_carriers(channels: &mut [ChannelConfig; 4], params: &HamiltonianParams, consts: &PhysicalConstants) {
    for ch in channels.iter_mut() {
        ch.carrier = line_frequency(params, ch.line, consts);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// A sinusoidal test field `√2·rms·sin(2πft + phase)` along one lab axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoilSignal {
    pub axis: Axis,
    pub freq: f64,
    /// Tesla RMS.
    pub rms_amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// The three test fields of the demonstration run.
pub fn default_coils() -> Vec<CoilSignal> {
    vec![
        CoilSignal { axis: Axis::X, freq: 67.0, rms_amplitude: 8.12e-9, phase: 0.0 },
        CoilSignal { axis: Axis::Y, freq: 32.0, rms_amplitude: 9.56e-9, phase: 0.0 },
        CoilSignal { axis: Axis::Z, freq: 18.0, rms_amplitude: 9.86e-9, phase: 0.0 },
    ]
}

pub fn coil_field(t: f64, coils: &[CoilSignal]) -> Vector3<f64> {
    let mut b = Vector3::zeros();
    for c in coils {
        b[c.axis.index()] += SQRT_2 * c.rms_amplitude * (2.0 * PI * c.freq * t + c.phase).sin();
    }
    b
}

/// Hyperfine-resolved PL suppression: three equal Lorentzians at
/// −splitting, 0 and +splitting, each of unit peak height.
pub fn lineshape(detuning: f64, linewidth: f64, hyperfine_splitting: f64) -> f64 {
    let half = 0.5 * linewidth;
    let lor = |d: f64| {
        let u = d / half;
        1.0 / (1.0 + u * u)
    };
    lor(detuning - hyperfine_splitting) + lor(detuning) + lor(detuning + hyperfine_splitting)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    #[default]
    Shot,
    ShotLaser,
}

/// Relative laser intensity noise with a 1/f power spectrum.
///
/// One-sided PSD of the fractional intensity fluctuation:
/// `level_at_1khz · (1 kHz / f)` for `corner ≤ f ≤ cutoff`, flat at the
/// corner value below `corner`, zero above `cutoff`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RinProfile {
    /// 1/Hz at 1 kHz.
    pub level_at_1khz: f64,
    pub corner: f64,
    pub cutoff: f64,
}

impl Default for RinProfile {
    fn default() -> Self {
        // 30× the default signal shot noise (amplitude) averaged over 2-6 kHz.
        Self::relative_to_shot(30.0, 24.1e-3, (2e3, 6e3), crate::spin_model::ELEMENTARY_CHARGE)
    }
}

impl RinProfile {
    /// Profile whose band-averaged PSD on a signal of mean current `i_sig`
    /// is `factor²` times that current's shot-noise PSD 2q/I.
    pub fn relative_to_shot(factor: f64, i_sig: f64, band: (f64, f64), q: f64) -> Self {
        let mean_inv_f = (band.1 / band.0).ln() / (band.1 - band.0);
        let level_at_1khz = factor * factor * 2.0 * q / i_sig / (mean_inv_f * 1e3);
        Self {
            level_at_1khz,
            corner: 1.0,
            cutoff: 50e3,
        }
    }

    pub fn psd(&self, f: f64) -> f64 {
        if f <= 0.0 || f > self.cutoff {
            return 0.0;
        }
        self.level_at_1khz * 1e3 / f.max(self.corner)
    }
}

/// Linear MW chirp applied to every carrier, for slope calibration.
///
/// Offset is +span/2 for `hold` seconds, then ramps linearly to −span/2 at the
/// end of the record. Falling MW frequency is equivalent to a rising
/// resonance, so the ramp samples run from −span/2 to +span/2 in resonance
/// shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarrierSweep {
    pub span: f64,
    pub hold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub sample_rate: f64,
    pub duration: f64,
    /// Time of the first sample, s. Negative values give a settling lead-in.
    pub start_time: f64,
    pub hyperfine_splitting: f64,
    pub pl_mean_current: f64,
    pub ref_mean_current: f64,
    pub sig_termination: f64,
    pub ref_termination: f64,
    pub noise: NoiseModel,
    pub laser_rin: RinProfile,
    /// Multiply per-channel transmissions instead of summing dips. Produces
    /// intermodulation tones between channels.
    pub intermodulation: bool,
    pub sweep: Option<CarrierSweep>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: 202_800.0,
            duration: 1.0,
            start_time: 0.0,
            hyperfine_splitting: 2.158e6,
            pl_mean_current: 24.1e-3,
            ref_mean_current: 30.1e-3,
            sig_termination: 300.0,
            ref_termination: 270.0,
            noise: NoiseModel::Shot,
            laser_rin: RinProfile::default(),
            intermodulation: false,
            sweep: None,
        }
    }
}

impl SynthConfig {
    pub fn n_samples(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    pub fn validate(&self, channels: &[ChannelConfig; 4]) -> Result<(), SynthError> {
        let pos = [
            ("sample_rate", self.sample_rate),
            ("duration", self.duration),
            ("pl_mean_current", self.pl_mean_current),
            ("ref_mean_current", self.ref_mean_current),
            ("sig_termination", self.sig_termination),
            ("ref_termination", self.ref_termination),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.hyperfine_splitting >= 0.0) || !self.start_time.is_finite() {
            return bad("hyperfine_splitting must be non-negative and start_time finite");
        }
        let fmax = channels.iter().map(|c| c.mod_freq).fold(0.0, f64::max);
        if self.sample_rate <= 10.0 * fmax {
            return bad(format!(
                "sample_rate {} must exceed 10× the highest modulation frequency {fmax}",
                self.sample_rate
            ));
        }
        for (i, c) in channels.iter().enumerate() {
            let all_pos = [c.carrier, c.mod_freq, c.linewidth]
                .iter()
                .all(|v| *v > 0.0 && v.is_finite());
            if !all_pos || !(c.deviation >= 0.0) || !(c.contrast >= 0.0 && c.contrast < 1.0) {
                return bad(format!("channel {i} has invalid parameters"));
            }
            let ratio = self.sample_rate / c.mod_freq;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio {
                return bad(format!(
                    "channel {i}: modulation frequency {} does not divide the sample rate",
                    c.mod_freq
                ));
            }
            for (j, d) in channels.iter().enumerate() {
                if i != j {
                    if c.line == d.line {
                        return bad(format!("channels {i} and {j} address the same line"));
                    }
                    let r = d.mod_freq / c.mod_freq;
                    if (r - r.round()).abs() < 1e-9 {
                        return bad(format!(
                            "modulation frequency {} is an integer multiple of {}",
                            d.mod_freq, c.mod_freq
                        ));
                    }
                }
            }
        }
        if let Some(s) = self.sweep {
            if !(s.span > 0.0) || !(s.hold >= 0.0 && s.hold < self.duration) {
                return bad("sweep needs span > 0 and 0 ≤ hold < duration");
            }
        }
        Ok(())
    }

    fn sweep_offset(&self, k: usize) -> f64 {
        match self.sweep {
            None => 0.0,
            Some(s) => {
                let t = k as f64 / self.sample_rate;
                if t < s.hold {
                    0.5 * s.span
                } else {
                    let n_ramp = self.n_samples() - (s.hold * self.sample_rate).round() as usize;
                    let j = k - (s.hold * self.sample_rate).round() as usize;
                    let x = if n_ramp > 1 { j as f64 / (n_ramp - 1) as f64 } else { 0.0 };
                    0.5 * s.span - s.span * x
                }
            }
        }
    }
}

/// Independent random streams drawn from one seed.
#[derive(Clone, Copy)]
enum RngStream {
    SignalShot = 0,
    ReferenceShot = 1,
    Laser = 2,
}

fn rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream as u64);
    r
}

/// Gaussian noise with one-sided PSD `psd(f)` (units²/Hz), shaped in the
/// frequency domain.
pub fn colored_noise<F: Fn(f64) -> f64>(n: usize, rate: f64, psd: F, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    for k in 1..n.div_ceil(2) {
        let f = k as f64 * rate / n as f64;
        let sd = (psd(f) * n as f64 * rate / 4.0).sqrt();
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        spec[k] = Complex64::new(re * sd, im * sd);
        spec[n - k] = spec[k].conj();
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    spec.iter().map(|c| c.re / n as f64).collect()
}

/// Synthesize the PL detector voltage and the laser reference voltage.
pub fn synthesize(
    params: &HamiltonianParams,
    channels: &[ChannelConfig; 4],
    coils: &[CoilSignal],
    cfg: &SynthConfig,
    seed: u64,
    consts: &PhysicalConstants,
) -> Result<(SampleStream, SampleStream), SynthError> {
    params.validate()?;
    cfg.validate(channels)?;
    let n = cfg.n_samples();
    let fs = cfg.sample_rate;
    let v_sig = cfg.sig_termination * cfg.pl_mean_current;
    let v_ref = cfg.ref_termination * cfg.ref_mean_current;

    let mut sig = Vec::with_capacity(n);
    for k in 0..n {
        let t = cfg.start_time + k as f64 / fs;
        let p = params.with_field(params.bias_field + coil_field(t, coils));
        let offset = cfg.sweep_offset(k);
        let mut sum = 0.0;
        let mut prod = 1.0;
        for ch in channels {
            let mw = ch.carrier + offset + ch.deviation * (2.0 * PI * ch.mod_freq * t).sin();
            let det = mw - line_frequency(&p, ch.line, consts);
            let dip = ch.contrast * lineshape(det, ch.linewidth, cfg.hyperfine_splitting);
            sum += dip;
            prod *= 1.0 - dip;
        }
        sig.push(v_sig * if cfg.intermodulation { prod } else { 1.0 - sum });
    }
    let mut reference = vec![v_ref; n];

    if cfg.noise == NoiseModel::ShotLaser {
        let rin = colored_noise(n, fs, |f| cfg.laser_rin.psd(f), &mut rng(seed, RngStream::Laser));
        for k in 0..n {
            sig[k] *= 1.0 + rin[k];
            reference[k] *= 1.0 + rin[k];
        }
    }
    if cfg.noise != NoiseModel::None {
        let q = consts.elementary_charge;
        let s_sig = cfg.sig_termination * (q * cfg.pl_mean_current * fs).sqrt();
        let s_ref = cfg.ref_termination * (q * cfg.ref_mean_current * fs).sqrt();
        let mut r1 = rng(seed, RngStream::SignalShot);
        let mut r2 = rng(seed, RngStream::ReferenceShot);
        for v in sig.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut r1);
            *v += s_sig * z;
        }
        for v in reference.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut r2);
            *v += s_ref * z;
        }
    }
    let mk = |samples| SampleStream {
        samples,
        rate: fs,
        unit: Unit::Volts,
        t0: cfg.start_time,
    };
    Ok((mk(sig), mk(reference)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> HamiltonianParams {
        HamiltonianParams::new(Vector3::new(3.54e-3, 1.73e-3, 6.95e-3), 2.8692e9, [-20e3, -60e3, 50e3, 30e3])
    }

    #[test]
    fn coil_examples() {
        assert_eq!(coil_field(0.3, &[]), Vector3::zeros());
        let coils = default_coils();
        assert!(coil_field(0.0, &coils).norm() < 1e-24);
        // RMS over one common period (1 s covers integer cycles of all three).
        let n = 100_000;
        let mut acc = Vector3::zeros();
        for k in 0..n {
            let b = coil_field(k as f64 / n as f64, &coils);
            acc += b.component_mul(&b);
        }
        let rms = (acc / n as f64).map(f64::sqrt);
        for (got, want) in rms.iter().zip([8.12e-9, 9.56e-9, 9.86e-9]) {
            assert!((got / want - 1.0).abs() < 1e-9);
        }
        let c = [CoilSignal { axis: Axis::Y, freq: 5.0, rms_amplitude: 1e-9, phase: PI / 2.0 }];
        assert!((coil_field(0.0, &c).y - SQRT_2 * 1e-9).abs() < 1e-24);
    }

    #[test]
    fn lineshape_symmetry_and_limits() {
        let (w, s) = (1e6, 2.158e6);
        let peak = lineshape(0.0, w, s);
        assert!(peak > 1.0 && peak < 1.2);
        assert!(lineshape(1e12, w, s) < 1e-10);
        assert_eq!(lineshape(s, w, s), lineshape(-s, w, s));
        assert!((lineshape(0.0, w, 1e12) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn unmodulated_on_resonance_is_constant() {
        let mut ch = default_channels();
        let c = PhysicalConstants::default();
        tune_carriers(&mut ch, &params(), &c);
        for x in ch.iter_mut() {
            x.deviation = 0.0;
        }
        let cfg = SynthConfig { duration: 0.01, noise: NoiseModel::None, ..Default::default() };
        let (s, r) = synthesize(&params(), &ch, &[], &cfg, 1, &c).unwrap();
        assert!(s.samples.iter().all(|v| (v - s.samples[0]).abs() < 1e-12));
        assert!(s.samples[0] < 7.23 && s.samples[0] > 6.5);
        assert!(r.samples.iter().all(|v| *v == 270.0 * 30.1e-3));
    }

    #[test]
    fn shot_noise_variance() {
        let mut ch = default_channels();
        for x in ch.iter_mut() {
            x.contrast = 0.0;
        }
        let cfg = SynthConfig::default();
        let (s, _) = synthesize(&params(), &ch, &[], &cfg, 11, &PhysicalConstants::default()).unwrap();
        let var = s.std().powi(2);
        let want = 300.0f64.powi(2) * 2.0 * crate::spin_model::ELEMENTARY_CHARGE * 24.1e-3 * 202_800.0 / 2.0;
        assert!((var / want - 1.0).abs() < 0.05, "{var} vs {want}");
    }

    #[test]
    fn reproducible_per_seed() {
        let ch = default_channels();
        let cfg = SynthConfig { duration: 0.05, noise: NoiseModel::ShotLaser, ..Default::default() };
        let c = PhysicalConstants::default();
        let a = synthesize(&params(), &ch, &default_coils(), &cfg, 5, &c).unwrap();
        let b = synthesize(&params(), &ch, &default_coils(), &cfg, 5, &c).unwrap();
        let d = synthesize(&params(), &ch, &default_coils(), &cfg, 6, &c).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0.samples, d.0.samples);
    }

    #[test]
    fn colored_noise_has_requested_power() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let psd = 1e-6;
        let x = colored_noise(1 << 16, 1000.0, |_| psd, &mut r);
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        // One-sided white PSD over 0..500 Hz.
        assert!((var / (psd * 500.0) - 1.0).abs() < 0.03);
    }

    #[test]
    fn rejects_bad_configs() {
        let c = PhysicalConstants::default();
        let mut ch = default_channels();
        ch[1].mod_freq = 2.0 * ch[0].mod_freq;
        let cfg = SynthConfig { sample_rate: 202_800.0 * 2.0, ..Default::default() };
        assert!(synthesize(&params(), &ch, &[], &cfg, 0, &c).is_err());
        let mut ch = default_channels();
        ch[0].mod_freq = 4057.0;
        assert!(synthesize(&params(), &ch, &[], &SynthConfig::default(), 0, &c).is_err());
        let cfg = SynthConfig { sample_rate: 20_000.0, ..Default::default() };
        assert!(synthesize(&params(), &default_channels(), &[], &cfg, 0, &c).is_err());
    }

    #[test]
    fn sweep_offsets_ramp_after_hold() {
        let cfg = SynthConfig {
            duration: 1.0,
            sample_rate: 1000.0,
            sweep: Some(CarrierSweep { span: 20e3, hold: 0.25 }),
            ..Default::default()
        };
        assert_eq!(cfg.sweep_offset(0), 10e3);
        assert_eq!(cfg.sweep_offset(249), 10e3);
        assert_eq!(cfg.sweep_offset(250), 10e3);
        assert!((cfg.sweep_offset(999) + 10e3).abs() < 1e-9);
    }
}
