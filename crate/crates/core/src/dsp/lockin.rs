//! Four-channel lock-in demodulation of the multiplexed PL signal.
//!
//! Chain per channel: high-pass → mix with √2·sin(2πf t + θ) → band-pass →
//! decimate without averaging → FFT notches → divide by slope.
//!
//! The reference has unit RMS (peak √2). With that normalization a white
//! input of one-sided PSD S leaves the mixer with baseband PSD S, so the
//! shot-noise-limited shift after the chain is R√(2qIΔf)/slope exactly.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use super::filter::{design, fft_notch, FilterKind, FilterSpec};
use super::{enbw, DspError};
use crate::calibration::{calibrate_slopes, line_fit, SlopeCalibration};
use crate::stream::{SampleStream, Unit};
use crate::synth::{CarrierSweep, ChannelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LockinChain {
    pub input_rate: f64,
    pub highpass: FilterSpec,
    pub bandpass: FilterSpec,
    pub decimation: usize,
    pub notch: FilterSpec,
    /// Post-mix filter used instead of the band-pass during chirp calibration,
    /// where the signal of interest is a slow ramp.
    pub calibration_lowpass: FilterSpec,
}

impl Default for LockinChain {
    fn default() -> Self {
        Self {
            input_rate: 202_800.0,
            highpass: FilterSpec::highpass(10, 1690.0),
            bandpass: FilterSpec::bandpass(10, 5.0, 210.0),
            decimation: 75,
            notch: FilterSpec::notch(&[49.0, 50.0, 60.0, 338.0]),
            calibration_lowpass: FilterSpec::lowpass(10, 210.0),
        }
    }
}

impl LockinChain {
    pub fn output_rate(&self) -> f64 {
        self.input_rate / self.decimation as f64
    }

    /// Baseband stages whose noise bandwidth sets the shift noise.
    pub fn baseband_chain(&self) -> Vec<FilterSpec> {
        vec![self.bandpass.clone(), self.notch.clone()]
    }

    pub fn enbw(&self) -> Result<f64, DspError> {
        enbw(&self.baseband_chain(), self.input_rate)
    }

    /// Band-pass group delay at the geometric band center, seconds.
    pub fn group_delay(&self) -> Result<f64, DspError> {
        let bp = design(&self.bandpass, self.input_rate)?;
        let fc = (self.bandpass.edges[0] * self.bandpass.edges[1]).sqrt();
        Ok(bp.group_delay(fc, self.input_rate))
    }

    fn validate(&self, rate: f64) -> Result<(), DspError> {
        if rate != self.input_rate {
            return Err(DspError::RateMismatch {
                got: rate,
                expected: self.input_rate,
            });
        }
        if self.decimation == 0 {
            return Err(DspError::InvalidFilter("decimation must be at least 1".into()));
        }
        if self.highpass.kind != FilterKind::Highpass
            || self.bandpass.kind != FilterKind::Bandpass
            || self.notch.kind != FilterKind::Notch
            || self.calibration_lowpass.kind != FilterKind::Lowpass
        {
            return Err(DspError::InvalidFilter("chain stages have the wrong kinds".into()));
        }
        self.notch.validate(self.output_rate())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemodResult {
    /// Δν per channel, Hz, at the decimated rate.
    pub shifts: [SampleStream; 4],
    /// Single-sided ENBW of the baseband chain, Hz.
    pub enbw: f64,
    /// Band-pass group delay at band center, s.
    pub group_delay: f64,
}

fn mix(x: &[f64], t0: f64, rate: f64, f: f64, phase: f64) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(k, v)| v * SQRT_2 * (2.0 * PI * f * (t0 + k as f64 / rate) + phase).sin())
        .collect()
}

fn decimate(x: &[f64], m: usize) -> Vec<f64> {
    x.iter().step_by(m).copied().collect()
}

/// Full demodulation to frequency shifts.
pub fn demodulate(
    pl: &SampleStream,
    channels: &[ChannelConfig; 4],
    slopes: &SlopeCalibration,
    chain: &LockinChain,
) -> Result<DemodResult, DspError> {
    chain.validate(pl.rate)?;
    for (i, s) in slopes.slopes.iter().enumerate() {
        if *s == 0.0 || !s.is_finite() {
            return Err(DspError::MissingSlope(i));
        }
    }
    let hp = design(&chain.highpass, pl.rate)?.process(&pl.samples);
    let bp = design(&chain.bandpass, pl.rate)?;
    let out_rate = chain.output_rate();
    let shifts: [SampleStream; 4] = std::array::from_fn(|i| {
        let mixed = mix(&hp, pl.t0, pl.rate, channels[i].mod_freq, slopes.phases[i]);
        let mut f = bp.clone();
        f.reset();
        let base = decimate(&f.process(&mixed), chain.decimation);
        let notched = fft_notch(&base, out_rate, &chain.notch.edges, chain.notch.notch_width, chain.notch.block);
        SampleStream {
            samples: notched.iter().map(|v| v / slopes.slopes[i]).collect(),
            rate: out_rate,
            unit: Unit::Hertz,
            t0: pl.t0,
        }
    });
    Ok(DemodResult {
        shifts,
        enbw: chain.enbw()?,
        group_delay: chain.group_delay()?,
    })
}

/// In-phase and quadrature outputs (volts) through the calibration low-pass.
pub fn demodulate_iq(
    pl: &SampleStream,
    channels: &[ChannelConfig; 4],
    chain: &LockinChain,
) -> Result<[(SampleStream, SampleStream); 4], DspError> {
    chain.validate(pl.rate)?;
    let hp = design(&chain.highpass, pl.rate)?.process(&pl.samples);
    let lp = design(&chain.calibration_lowpass, pl.rate)?;
    let out_rate = chain.output_rate();
    let run = |f: f64, phase: f64| {
        let mut l = lp.clone();
        l.reset();
        SampleStream {
            samples: decimate(&l.process(&mix(&hp, pl.t0, pl.rate, f, phase)), chain.decimation),
            rate: out_rate,
            unit: Unit::Volts,
            t0: pl.t0,
        }
    };
    Ok(std::array::from_fn(|i| {
        let f = channels[i].mod_freq;
        (run(f, 0.0), run(f, PI / 2.0))
    }))
}

/// Lock-in phases and slopes from a chirped synthesis run.
///
/// The hold segment is discarded. The phase is set to put the whole ramp
/// response in-phase, so every slope comes out positive.
pub fn calibrate_from_chirp(
    pl: &SampleStream,
    channels: &[ChannelConfig; 4],
    chain: &LockinChain,
    sweep: &CarrierSweep,
) -> Result<SlopeCalibration, DspError> {
    let iq = demodulate_iq(pl, channels, chain)?;
    let skip = (sweep.hold * chain.output_rate()).round() as usize;
    let mut phases = [0.0; 4];
    let projected: [SampleStream; 4] = std::array::from_fn(|i| {
        let (ii, qq) = (iq[i].0.skip(skip), iq[i].1.skip(skip));
        let ki = line_fit(&ii.samples, sweep.span).map_or(0.0, |f| f.0);
        let kq = line_fit(&qq.samples, sweep.span).map_or(0.0, |f| f.0);
        let th = kq.atan2(ki);
        phases[i] = th;
        let (c, s) = (th.cos(), th.sin());
        SampleStream {
            samples: ii.samples.iter().zip(&qq.samples).map(|(a, b)| c * a + s * b).collect(),
            ..ii
        }
    });
    let mut cal = calibrate_slopes(&projected, sweep.span)?;
    cal.phases = phases;
    Ok(cal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chain_enbw_near_203() {
        let e = LockinChain::default().enbw().unwrap();
        assert!((e - 203.0).abs() < 2.0, "{e}");
        assert_eq!(LockinChain::default().output_rate(), 2704.0);
    }

    #[test]
    fn rate_and_slope_checks() {
        let chain = LockinChain::default();
        let ch = crate::synth::default_channels();
        let pl = SampleStream::new(vec![0.0; 1000], 100_000.0, Unit::Volts);
        assert!(matches!(
            demodulate(&pl, &ch, &SlopeCalibration::demo(), &chain),
            Err(DspError::RateMismatch { .. })
        ));
        let pl = SampleStream::new(vec![0.0; 1000], 202_800.0, Unit::Volts);
        let mut s = SlopeCalibration::demo();
        s.slopes[2] = 0.0;
        assert!(matches!(demodulate(&pl, &ch, &s, &chain), Err(DspError::MissingSlope(2))));
    }

    #[test]
    fn pure_tone_gives_rms_amplitude() {
        // A PL component A·sin(2πf t) mixes to a baseband of A/√2 (its RMS).
        let chain = LockinChain::default();
        let ch = crate::synth::default_channels();
        let f = ch[0].mod_freq;
        let n = 202_800;
        let pl = SampleStream::new(
            (0..n).map(|k| 1e-3 * (2.0 * PI * f * k as f64 / 202_800.0).sin()).collect(),
            202_800.0,
            Unit::Volts,
        );
        let iq = demodulate_iq(&pl, &ch, &chain).unwrap();
        let tail = &iq[0].0.samples[2000..];
        let m = tail.iter().sum::<f64>() / tail.len() as f64;
        let hp_gain = design(&chain.highpass, 202_800.0).unwrap().response(f, 202_800.0);
        let want = 1e-3 / SQRT_2 * hp_gain.norm() * hp_gain.arg().cos();
        assert!((m - want).abs() < 1e-3 * 1e-3, "{m} vs {want}");
    }
}
