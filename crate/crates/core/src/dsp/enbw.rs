//! Equivalent noise bandwidth of a filter chain.

use super::filter::{design, FilterKind, FilterSpec, Sos};
use super::DspError;

/// Single-sided ENBW in Hz: ∫|H|²df / max|H|² over 0..rate/2.
///
/// Integrated by the trapezoid rule on a grid of at least 2¹⁶ points and no
/// coarser than 0.05 Hz, so 1 Hz notches and low band edges are resolved.
pub fn enbw(chain: &[FilterSpec], rate: f64) -> Result<f64, DspError> {
    if chain.is_empty() {
        return Err(DspError::InvalidFilter("empty chain".into()));
    }
    let iir: Vec<Option<Sos>> = chain
        .iter()
        .map(|s| match s.kind {
            FilterKind::Notch | FilterKind::BrickWall => s.validate(rate).map(|_| None),
            _ => design(s, rate).map(Some),
        })
        .collect::<Result<_, _>>()?;
    let nyq = rate / 2.0;
    let n = ((nyq / 0.05).ceil() as usize).max(1 << 16) + 1;
    let df = nyq / (n - 1) as f64;
    let mut integral = 0.0;
    let mut peak = 0.0f64;
    for i in 0..n {
        let f = i as f64 * df;
        let mut g = 1.0;
        for (spec, sos) in chain.iter().zip(&iir) {
            g *= match sos {
                Some(s) => s.response(f, rate).norm_sqr(),
                None => spec.power_gain(f, rate)?,
            };
        }
        peak = peak.max(g);
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        integral += w * g * df;
    }
    if peak == 0.0 {
        return Err(DspError::InvalidFilter("chain blocks every frequency".into()));
    }
    Ok(integral / peak)
}
