//! Spectral estimates for plotting and tone detection.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::stream::SampleStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMethod {
    /// Single rectangular-window periodogram of the whole record.
    #[default]
    Periodogram,
    /// Hann-windowed, 50 % overlapped segment average.
    Welch { segment: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub method: SpectralMethod,
    pub freqs: Vec<f64>,
    /// One-sided PSD, unit²/Hz.
    pub psd: Vec<f64>,
}

impl Spectrum {
    /// Amplitude spectral density, unit/√Hz.
    pub fn asd(&self) -> Vec<f64> {
        self.psd.iter().map(|p| p.sqrt()).collect()
    }

    /// Median PSD over `[lo, hi]`, skipping bins within 1.5 bins of `exclude`.
    pub fn median_psd(&self, lo: f64, hi: f64, exclude: &[f64]) -> f64 {
        let df = if self.freqs.len() > 1 { self.freqs[1] - self.freqs[0] } else { 1.0 };
        let mut v: Vec<f64> = self
            .freqs
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= lo && **f <= hi && exclude.iter().all(|e| (**f - e).abs() > 1.5 * df))
            .map(|(_, p)| *p)
            .collect();
        if v.is_empty() {
            return 0.0;
        }
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    /// Mean PSD over `[lo, hi]`.
    pub fn mean_psd(&self, lo: f64, hi: f64) -> f64 {
        let v: Vec<f64> = self
            .freqs
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| *p)
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }
}

fn one_sided(x: &[f64], window: &[f64], rate: f64) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().zip(window).map(|(v, w)| Complex64::new(v * w, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let wss: f64 = window.iter().map(|w| w * w).sum();
    (0..=n / 2)
        .map(|k| {
            let p = buf[k].norm_sqr() / (rate * wss);
            if k == 0 || (n % 2 == 0 && k == n / 2) {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

pub fn spectrum(x: &SampleStream, method: SpectralMethod) -> Spectrum {
    let n = x.len();
    if n == 0 {
        return Spectrum { method, freqs: vec![], psd: vec![] };
    }
    match method {
        SpectralMethod::Periodogram => {
            let psd = one_sided(&x.samples, &vec![1.0; n], x.rate);
            let freqs = (0..psd.len()).map(|k| k as f64 * x.rate / n as f64).collect();
            Spectrum { method, freqs, psd }
        }
        SpectralMethod::Welch { segment } => {
            let seg = segment.clamp(2, n);
            let win: Vec<f64> = (0..seg).map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / seg as f64).cos()).collect();
            let hop = (seg / 2).max(1);
            let mut acc = vec![0.0; seg / 2 + 1];
            let mut count = 0;
            let mut start = 0;
            while start + seg <= n {
                for (a, p) in acc.iter_mut().zip(one_sided(&x.samples[start..start + seg], &win, x.rate)) {
                    *a += p;
                }
                count += 1;
                start += hop;
            }
            let psd = acc.iter().map(|a| a / count as f64).collect();
            let freqs = (0..=seg / 2).map(|k| k as f64 * x.rate / seg as f64).collect();
            Spectrum { method, freqs, psd }
        }
    }
}

/// RMS amplitude of the component at `f`, by direct projection.
pub fn tone_rms(x: &SampleStream, f: f64) -> f64 {
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let w = 2.0 * PI * f / x.rate;
    let (mut c, mut s) = (0.0, 0.0);
    for (k, v) in x.samples.iter().enumerate() {
        let ph = w * k as f64;
        c += v * ph.cos();
        s += v * ph.sin();
    }
    SQRT_2 * c.hypot(s) / n as f64
}

/// Remove least-squares sinusoids at the given frequencies (and the mean).
pub fn remove_tones(x: &SampleStream, freqs: &[f64]) -> SampleStream {
    let n = x.len();
    let mut y = x.samples.clone();
    let m = y.iter().sum::<f64>() / n.max(1) as f64;
    y.iter_mut().for_each(|v| *v -= m);
    for &f in freqs {
        let w = 2.0 * PI * f / x.rate;
        let (mut cc, mut ss, mut cs, mut yc, mut ys) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (k, v) in y.iter().enumerate() {
            let (s, c) = (w * k as f64).sin_cos();
            cc += c * c;
            ss += s * s;
            cs += c * s;
            yc += v * c;
            ys += v * s;
        }
        let det = cc * ss - cs * cs;
        if det.abs() < 1e-12 * (cc * ss).max(1e-300) {
            continue;
        }
        let a = (yc * ss - ys * cs) / det;
        let b = (ys * cc - yc * cs) / det;
        for (k, v) in y.iter_mut().enumerate() {
            let (s, c) = (w * k as f64).sin_cos();
            *v -= a * c + b * s;
        }
    }
    SampleStream { samples: y, ..x.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::Unit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn tone_amplitude_and_parseval() {
        let rate = 2704.0;
        let x = SampleStream::new(
            (0..2704).map(|k| 3.0 * SQRT_2 * (2.0 * PI * 67.0 * k as f64 / rate + 0.3).sin()).collect(),
            rate,
            Unit::Tesla,
        );
        assert!((tone_rms(&x, 67.0) - 3.0).abs() < 1e-9);
        assert!(tone_rms(&x, 32.0).abs() < 1e-9);
        let sp = spectrum(&x, SpectralMethod::Periodogram);
        let power: f64 = sp.psd.iter().sum::<f64>() * (sp.freqs[1] - sp.freqs[0]);
        assert!((power - 9.0).abs() < 1e-9);
        let r = remove_tones(&x, &[67.0]);
        assert!(r.std() < 1e-9);
    }

    #[test]
    fn white_noise_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = Normal::new(0.0, 1.0).unwrap();
        let rate = 1000.0;
        let x = SampleStream::new((0..100_000).map(|_| d.sample(&mut rng)).collect(), rate, Unit::Volts);
        let w = spectrum(&x, SpectralMethod::Welch { segment: 1000 });
        let level = w.mean_psd(10.0, 490.0);
        assert!((level / (2.0 / rate) - 1.0).abs() < 0.03);
    }
}
