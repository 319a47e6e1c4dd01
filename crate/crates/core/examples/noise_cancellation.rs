//! Laser intensity noise far above shot noise, removed by scaled reference
//! subtraction. Compares the 2-6 kHz noise floor before and after with the
//! combined shot-noise floor of signal and reference.
//!
//! `cargo run --release --example noise_cancellation`

use nvmag::calibration::{fit_bias_seeded, OdmrLineCenters};
use nvmag::dsp::{cancel_laser_noise, spectrum, SpectralMethod};
use nvmag::synth::{default_channels, synthesize, tune_carriers, NoiseModel, SynthConfig};
use nvmag::PhysicalConstants;

fn main() {
    let consts = PhysicalConstants::default();
    let params = fit_bias_seeded(&OdmrLineCenters::demo(), &consts).expect("fit").params;
    let mut channels = default_channels();
    tune_carriers(&mut channels, &params, &consts);
    let cfg = SynthConfig { noise: NoiseModel::ShotLaser, ..Default::default() };
    let (sig, reference) = synthesize(&params, &channels, &[], &cfg, 3, &consts).expect("synth");
    let clean = cancel_laser_noise(&sig, &reference, 1.0).expect("cancel");

    let q = consts.elementary_charge;
    let shot = cfg.sig_termination.powi(2) * 2.0 * q * cfg.pl_mean_current;
    let combined = shot * (1.0 + cfg.pl_mean_current / cfg.ref_mean_current);
    // Exclude the modulation tones and everything they generate.
    let tones: Vec<f64> = (1..=3)
        .flat_map(|h| channels.iter().map(move |c| h as f64 * c.mod_freq))
        .chain([2028.0, 2366.0, 3042.0, 4732.0, 676.0 * 4.0, 676.0 * 5.0, 676.0 * 6.0, 676.0 * 7.0, 676.0 * 8.0])
        .collect();
    let welch = SpectralMethod::Welch { segment: 4056 };
    let before = spectrum(&sig, welch).median_psd(2e3, 6e3, &tones);
    let after = spectrum(&clean, welch).median_psd(2e3, 6e3, &tones);
    println!("2-6 kHz noise, V/sqrt(Hz):");
    println!("  signal shot floor        {:.3e}", shot.sqrt());
    println!("  combined shot floor      {:.3e}", combined.sqrt());
    println!("  before cancellation      {:.3e}  ({:.1}x signal shot)", before.sqrt(), (before / shot).sqrt());
    println!("  after cancellation       {:.3e}  ({:.2}x combined shot)", after.sqrt(), (after / combined).sqrt());
    println!("  suppression              {:.1}x", (before / after).sqrt());
}
