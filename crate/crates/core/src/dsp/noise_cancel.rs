//! Laser intensity noise cancellation with a reference photodiode.

use super::DspError;
use crate::stream::SampleStream;

/// Subtract the scaled AC part of the reference from the signal, window by
/// window: `out = (sig − ⟨sig⟩) − (⟨sig⟩/⟨ref⟩)(ref − ⟨ref⟩)`.
///
/// The output is the AC signal; its DC level is removed.
pub fn cancel_laser_noise(
    signal: &SampleStream,
    reference: &SampleStream,
    window: f64,
) -> Result<SampleStream, DspError> {
    if signal.len() != reference.len() || signal.rate != reference.rate {
        return Err(DspError::LengthMismatch);
    }
    if !(window > 0.0) {
        return Err(DspError::InvalidFilter(format!("window must be positive, got {window}")));
    }
    let w = ((window * signal.rate).round() as usize).max(1);
    let mut out = Vec::with_capacity(signal.len());
    for (start, (s, r)) in signal
        .samples
        .chunks(w)
        .zip(reference.samples.chunks(w))
        .enumerate()
        .map(|(i, p)| (i * w, p))
    {
        let n = s.len() as f64;
        let ms = s.iter().sum::<f64>() / n;
        let mr = r.iter().sum::<f64>() / n;
        let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if mr == 0.0 || mr.abs() <= 1e-12 * scale {
            return Err(DspError::ZeroReference(start));
        }
        let g = ms / mr;
        out.extend(s.iter().zip(r).map(|(a, b)| (a - ms) - g * (b - mr)));
    }
    Ok(SampleStream { samples: out, ..signal.clone() })
}
