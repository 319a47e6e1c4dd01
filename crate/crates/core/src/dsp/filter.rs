//! Butterworth IIR filters as cascaded second-order sections, and FFT notches.
//!
//! Designs go analog prototype → frequency transform → bilinear transform
//! with prewarped edges. A bandpass of order N has 2N poles (N per edge),
//! the usual convention for Butterworth bandpass design.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::DspError;
use crate::stream::SampleStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Highpass,
    Lowpass,
    Bandpass,
    /// 1 Hz wide FFT stop bands, one per edge frequency, applied per block.
    Notch,
    /// Ideal passband between two edges. ENBW bookkeeping only.
    BrickWall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// Butterworth order (prototype order for bandpass). Ignored by FFT kinds.
    #[serde(default)]
    pub order: usize,
    /// Hz. One cutoff for high/low-pass, two for bandpass and brick-wall,
    /// any number of centers for notch.
    pub edges: Vec<f64>,
    /// Stop-band width of each notch, Hz.
    #[serde(default = "default_notch_width")]
    pub notch_width: f64,
    /// FFT block length for notches, s.
    #[serde(default = "default_block")]
    pub block: f64,
}

fn default_notch_width() -> f64 {
    1.0
}

fn default_block() -> f64 {
    1.0
}

impl FilterSpec {
    pub fn highpass(order: usize, cutoff: f64) -> Self {
        Self::new(FilterKind::Highpass, order, vec![cutoff])
    }
    pub fn lowpass(order: usize, cutoff: f64) -> Self {
        Self::new(FilterKind::Lowpass, order, vec![cutoff])
    }
    pub fn bandpass(order: usize, lo: f64, hi: f64) -> Self {
        Self::new(FilterKind::Bandpass, order, vec![lo, hi])
    }
    pub fn notch(centers: &[f64]) -> Self {
        Self::new(FilterKind::Notch, 0, centers.to_vec())
    }
    pub fn brick_wall(lo: f64, hi: f64) -> Self {
        Self::new(FilterKind::BrickWall, 0, vec![lo, hi])
    }

    fn new(kind: FilterKind, order: usize, edges: Vec<f64>) -> Self {
        Self {
            kind,
            order,
            edges,
            notch_width: default_notch_width(),
            block: default_block(),
        }
    }

    pub fn validate(&self, rate: f64) -> Result<(), DspError> {
        let nyq = rate / 2.0;
        let err = |m: String| Err(DspError::InvalidFilter(m));
        if self.edges.iter().any(|e| !(e.is_finite() && *e >= 0.0 && *e < nyq)) {
            return err(format!("edges {:?} must lie in [0, {nyq})", self.edges));
        }
        let need = match self.kind {
            FilterKind::Highpass | FilterKind::Lowpass => Some(1),
            FilterKind::Bandpass | FilterKind::BrickWall => Some(2),
            FilterKind::Notch => None,
        };
        if let Some(k) = need {
            if self.edges.len() != k {
                return err(format!("{:?} needs {k} edge(s)", self.kind));
            }
        }
        if matches!(self.kind, FilterKind::Bandpass | FilterKind::BrickWall) && self.edges[0] >= self.edges[1] {
            return err("band edges must be increasing".into());
        }
        if matches!(self.kind, FilterKind::Highpass | FilterKind::Lowpass | FilterKind::Bandpass) {
            if self.order == 0 {
                return err("order must be at least 1".into());
            }
            if self.edges.iter().any(|e| *e <= 0.0) {
                return err("IIR edges must be positive".into());
            }
        }
        if self.kind == FilterKind::Notch && !(self.notch_width > 0.0 && self.block > 0.0) {
            return err("notch width and block must be positive".into());
        }
        Ok(())
    }

    /// Squared magnitude response at `f`.
    pub fn power_gain(&self, f: f64, rate: f64) -> Result<f64, DspError> {
        Ok(match self.kind {
            FilterKind::Notch => {
                if self.edges.iter().any(|c| (f - c).abs() <= 0.5 * self.notch_width) {
                    0.0
                } else {
                    1.0
                }
            }
            FilterKind::BrickWall => {
                if f >= self.edges[0] && f <= self.edges[1] {
                    1.0
                } else {
                    0.0
                }
            }
            _ => design(self, rate)?.response(f, rate).norm_sqr(),
        })
    }
}

/// One biquad: b0 + b1 z⁻¹ + b2 z⁻² over 1 + a1 z⁻¹ + a2 z⁻².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z1: Complex64) -> Complex64 {
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (1.0 + self.a[0] * z1 + self.a[1] * z2)
    }

    /// Largest pole magnitude.
    pub fn pole_radius(&self) -> f64 {
        let (a1, a2) = (self.a[0], self.a[1]);
        let disc = a1 * a1 - 4.0 * a2;
        if disc >= 0.0 {
            let s = disc.sqrt();
            ((-a1 + s) / 2.0).abs().max(((-a1 - s) / 2.0).abs())
        } else {
            a2.abs().sqrt()
        }
    }
}

/// A designed cascade with per-section state (direct form II transposed).
#[derive(Debug, Clone)]
pub struct Sos {
    pub sections: Vec<Biquad>,
    state: Vec<[f64; 2]>,
}

impl Sos {
    pub fn new(sections: Vec<Biquad>) -> Result<Self, DspError> {
        for (i, s) in sections.iter().enumerate() {
            let r = s.pole_radius();
            if !(r < 1.0 + 1e-9) {
                return Err(DspError::UnstableFilter { section: i, radius: r });
            }
        }
        let state = vec![[0.0; 2]; sections.len()];
        Ok(Self { sections, state })
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = [0.0; 2]);
    }

    #[inline]
    pub fn step(&mut self, mut x: f64) -> f64 {
        for (s, w) in self.sections.iter().zip(self.state.iter_mut()) {
            let y = s.b[0] * x + w[0];
            w[0] = s.b[1] * x - s.a[0] * y + w[1];
            w[1] = s.b[2] * x - s.a[1] * y;
            x = y;
        }
        x
    }

    pub fn process(&mut self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.step(v)).collect()
    }

    pub fn response(&self, f: f64, rate: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * f / rate);
        self.sections.iter().map(|s| s.response(z1)).product()
    }

    /// Group delay at `f`, seconds, from the numerical phase derivative.
    pub fn group_delay(&self, f: f64, rate: f64) -> f64 {
        let h = 1e-3 * f.max(1.0);
        let lo = self.response(f - h, rate);
        let hi = self.response(f + h, rate);
        let dphi = (hi / lo).arg();
        -dphi / (2.0 * PI * 2.0 * h)
    }
}

fn bilinear(s: Complex64, rate: f64) -> Complex64 {
    let k = 2.0 * rate;
    (k + s) / (k - s)
}

fn prewarp(f: f64, rate: f64) -> f64 {
    2.0 * rate * (PI * f / rate).tan()
}

/// Group analog poles into conjugate pairs (upper-half-plane representative)
/// and real singletons.
fn prototype_poles(n: usize) -> Vec<Complex64> {
    (1..=n)
        .map(|k| Complex64::from_polar(1.0, PI * (2 * k + n - 1) as f64 / (2 * n) as f64))
        .collect()
}

/// Build sections from digital poles (one representative per conjugate pair,
/// real poles listed individually) and a zero location per pole.
fn sections_from(poles: &[Complex64], zeros: &[f64], rate: f64, f_ref: f64) -> Result<Sos, DspError> {
    let mut complex: Vec<Complex64> = Vec::new();
    let mut real: Vec<f64> = Vec::new();
    for p in poles {
        if p.im.abs() < 1e-12 * p.norm().max(1e-300) {
            real.push(p.re);
        } else if p.im > 0.0 {
            complex.push(*p);
        }
    }
    let mut zs = zeros.iter().copied();
    let mut secs = Vec::new();
    for p in &complex {
        let z1 = zs.next().unwrap_or(-1.0);
        let z2 = zs.next().unwrap_or(-1.0);
        secs.push(Biquad {
            b: [1.0, -(z1 + z2), z1 * z2],
            a: [-2.0 * p.re, p.norm_sqr()],
        });
    }
    for pair in real.chunks(2) {
        let (p1, p2) = (pair[0], *pair.get(1).unwrap_or(&0.0));
        let z1 = zs.next().unwrap_or(-1.0);
        let z2 = if pair.len() == 2 { zs.next().unwrap_or(-1.0) } else { 0.0 };
        secs.push(Biquad {
            b: [1.0, -(z1 + z2), z1 * z2],
            a: [-(p1 + p2), p1 * p2],
        });
    }
    // Unit gain at the reference frequency, section by section.
    let z1 = Complex64::from_polar(1.0, -2.0 * PI * f_ref / rate);
    for s in secs.iter_mut() {
        let g = s.response(z1).norm();
        for b in s.b.iter_mut() {
            *b /= g;
        }
    }
    Sos::new(secs)
}

/// Design the Butterworth cascade for an IIR spec.
pub fn design(spec: &FilterSpec, rate: f64) -> Result<Sos, DspError> {
    spec.validate(rate)?;
    let n = spec.order;
    let proto = prototype_poles(n);
    match spec.kind {
        FilterKind::Lowpass => {
            let wc = prewarp(spec.edges[0], rate);
            let poles: Vec<_> = proto.iter().map(|p| bilinear(p * wc, rate)).collect();
            sections_from(&poles, &vec![-1.0; n], rate, 0.0)
        }
        FilterKind::Highpass => {
            let wc = prewarp(spec.edges[0], rate);
            let poles: Vec<_> = proto.iter().map(|p| bilinear(wc / p, rate)).collect();
            sections_from(&poles, &vec![1.0; n], rate, rate / 2.0)
        }
        FilterKind::Bandpass => {
            let w1 = prewarp(spec.edges[0], rate);
            let w2 = prewarp(spec.edges[1], rate);
            let bw = w2 - w1;
            let w0sq = w1 * w2;
            let mut poles = Vec::with_capacity(2 * n);
            for p in &proto {
                // s² − p·bw·s + w0² = 0
                let b = p * bw;
                let disc = (b * b - 4.0 * w0sq).sqrt();
                for s in [(b + disc) / 2.0, (b - disc) / 2.0] {
                    poles.push(bilinear(s, rate));
                }
            }
            // Keep one of each conjugate pair; analog roots come in conjugate
            // sets across prototype poles, so filter by sign after mapping.
            let mut zeros = Vec::with_capacity(2 * n);
            for _ in 0..n {
                zeros.push(1.0);
                zeros.push(-1.0);
            }
            let f0 = (w0sq.sqrt() / (2.0 * rate)).atan() * rate / PI;
            sections_from(&poles, &zeros, rate, f0)
        }
        FilterKind::Notch | FilterKind::BrickWall => Err(DspError::InvalidFilter(format!(
            "{:?} is not an IIR design",
            spec.kind
        ))),
    }
}

/// Zero FFT bins within ±width/2 of each center, block by block.
pub fn fft_notch(x: &[f64], rate: f64, centers: &[f64], width: f64, block: f64) -> Vec<f64> {
    let blen = ((block * rate).round() as usize).max(1);
    let mut planner = FftPlanner::<f64>::new();
    let mut out = Vec::with_capacity(x.len());
    for chunk in x.chunks(blen) {
        let n = chunk.len();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut buf: Vec<Complex64> = chunk.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fwd.process(&mut buf);
        let df = rate / n as f64;
        for &c in centers {
            let mut hit = false;
            for k in 0..=n / 2 {
                if (k as f64 * df - c).abs() <= 0.5 * width + 1e-9 * df {
                    buf[k] = Complex64::new(0.0, 0.0);
                    if k != 0 {
                        buf[n - k] = Complex64::new(0.0, 0.0);
                    }
                    hit = true;
                }
            }
            if !hit {
                let k = (c / df).round() as usize;
                if k <= n / 2 {
                    buf[k] = Complex64::new(0.0, 0.0);
                    if k != 0 {
                        buf[n - k] = Complex64::new(0.0, 0.0);
                    }
                }
            }
        }
        inv.process(&mut buf);
        out.extend(buf.iter().map(|c| c.re / n as f64));
    }
    out
}

/// Apply one filter stage to a stream. IIR stages start from rest.
pub fn apply_filter(stream: &SampleStream, spec: &FilterSpec) -> Result<SampleStream, DspError> {
    spec.validate(stream.rate)?;
    let samples = match spec.kind {
        FilterKind::Notch => fft_notch(&stream.samples, stream.rate, &spec.edges, spec.notch_width, spec.block),
        FilterKind::BrickWall => {
            return Err(DspError::InvalidFilter("brick-wall filters are for ENBW bookkeeping only".into()))
        }
        _ => design(spec, stream.rate)?.process(&stream.samples),
    };
    Ok(SampleStream { samples, ..stream.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::Unit;

    fn tone(f: f64, rate: f64, secs: f64) -> SampleStream {
        let n = (rate * secs) as usize;
        SampleStream::new((0..n).map(|k| (2.0 * PI * f * k as f64 / rate).sin()).collect(), rate, Unit::Volts)
    }

    fn rms_tail(x: &[f64], from: usize) -> f64 {
        let t = &x[from..];
        (t.iter().map(|v| v * v).sum::<f64>() / t.len() as f64).sqrt()
    }

    #[test]
    fn butterworth_magnitudes_at_cutoff() {
        let rate = 10_000.0;
        for n in [1, 2, 5, 10] {
            let lp = design(&FilterSpec::lowpass(n, 500.0), rate).unwrap();
            assert!((lp.response(500.0, rate).norm() - 0.5f64.sqrt()).abs() < 1e-9);
            assert!((lp.response(0.0, rate).norm() - 1.0).abs() < 1e-12);
            let hp = design(&FilterSpec::highpass(n, 500.0), rate).unwrap();
            assert!((hp.response(500.0, rate).norm() - 0.5f64.sqrt()).abs() < 1e-9);
            assert!((hp.response(5000.0, rate).norm() - 1.0).abs() < 1e-12);
        }
        let bp = design(&FilterSpec::bandpass(10, 5.0, 210.0), 202_800.0).unwrap();
        assert_eq!(bp.sections.len(), 10);
        for f in [5.0, 210.0] {
            assert!((bp.response(f, 202_800.0).norm() - 0.5f64.sqrt()).abs() < 1e-6);
        }
        // Maximally flat passband.
        for f in [18.0, 32.0, 67.0, 100.0] {
            let db = 20.0 * bp.response(f, 202_800.0).norm().log10();
            assert!(db.abs() < 0.1, "{f} Hz: {db} dB");
        }
    }

    #[test]
    fn passband_tone_survives_bandpass() {
        let rate = 20_000.0;
        let x = tone(100.0, rate, 3.0);
        let y = apply_filter(&x, &FilterSpec::bandpass(10, 5.0, 210.0)).unwrap();
        let r = rms_tail(&y.samples, (2.0 * rate) as usize) / rms_tail(&x.samples, 0);
        assert!((20.0 * r.log10()).abs() < 0.1);
    }

    #[test]
    fn notch_kills_bin_centered_tone() {
        let x = tone(50.0, 2704.0, 2.0);
        let y = apply_filter(&x, &FilterSpec::notch(&[49.0, 50.0, 60.0, 338.0])).unwrap();
        let r = rms_tail(&y.samples, 0) / rms_tail(&x.samples, 0);
        assert!(20.0 * r.log10() < -40.0);
        let x = tone(55.0, 2704.0, 2.0);
        let y = apply_filter(&x, &FilterSpec::notch(&[50.0])).unwrap();
        assert!((rms_tail(&y.samples, 0) / rms_tail(&x.samples, 0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stable_even_for_narrow_low_bands() {
        let s = design(&FilterSpec::bandpass(10, 5.0, 210.0), 202_800.0).unwrap();
        assert!(s.sections.iter().all(|b| b.pole_radius() < 1.0));
        let bad = Biquad { b: [1.0, 0.0, 0.0], a: [0.0, 1.5] };
        assert!(matches!(Sos::new(vec![bad]), Err(DspError::UnstableFilter { .. })));
    }

    #[test]
    fn invalid_specs() {
        assert!(FilterSpec::lowpass(4, 6000.0).validate(10_000.0).is_err());
        assert!(FilterSpec::bandpass(4, 200.0, 100.0).validate(10_000.0).is_err());
        assert!(FilterSpec::highpass(0, 100.0).validate(10_000.0).is_err());
    }

    #[test]
    fn group_delay_of_one_pole_pair() {
        // Second-order lowpass well below cutoff: delay ≈ √2/(2π fc).
        let rate = 100_000.0;
        let s = design(&FilterSpec::lowpass(2, 100.0), rate).unwrap();
        let d = s.group_delay(1.0, rate);
        assert!((d / (2f64.sqrt() / (2.0 * PI * 100.0)) - 1.0).abs() < 0.01, "{d}");
    }
}
