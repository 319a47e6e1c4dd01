//! Noise-free synthesized PL with the coils off and the carriers on
//! resonance. Each line sits at an even harmonic of its modulation frequency
//! (the FM response at a line center has no fundamental). Summing the dips
//! keeps the channels separate; multiplying transmissions adds mixing
//! products between them. All four modulation frequencies are multiples of
//! 676 Hz, so every product lands on that grid too.
//!
//! `cargo run --release --example synth_spectrum`

use nvmag::calibration::{fit_bias_seeded, OdmrLineCenters};
use nvmag::dsp::{spectrum, SpectralMethod};
use nvmag::synth::{default_channels, synthesize, tune_carriers, NoiseModel, SynthConfig};
use nvmag::PhysicalConstants;

fn main() {
    let consts = PhysicalConstants::default();
    let params = fit_bias_seeded(&OdmrLineCenters::demo(), &consts).expect("fit").params;
    let mut channels = default_channels();
    tune_carriers(&mut channels, &params, &consts);
    let mut separate: Vec<f64> = Vec::new();
    for intermodulation in [false, true] {
        let cfg = SynthConfig { noise: NoiseModel::None, intermodulation, ..Default::default() };
        let (pl, _) = synthesize(&params, &channels, &[], &cfg, 0, &consts).expect("synth");
        let sp = spectrum(&pl, SpectralMethod::Periodogram);
        let mut lines: Vec<(f64, f64)> = sp
            .freqs
            .iter()
            .zip(&sp.psd)
            .skip(1)
            .filter(|(f, p)| **f < 12_000.0 && p.sqrt() > 1e-6)
            .map(|(f, p)| (*f, p.sqrt()))
            .collect();
        lines.sort_by(|a, b| b.1.total_cmp(&a.1));
        let model = if intermodulation { "product of transmissions" } else { "sum of dips" };
        println!("{model}: mean PL {:.4} V, {} lines above 1 uV RMS below 12 kHz", pl.mean(), lines.len());
        for (f, a) in lines.iter().take(10) {
            let note = if separate.contains(f) { "" } else if intermodulation { "  mixing product" } else { "" };
            println!("  {f:>7.0} Hz  {a:.3e} V RMS{note}");
        }
        if !intermodulation {
            separate = lines.iter().map(|l| l.0).collect();
        }
    }
}
