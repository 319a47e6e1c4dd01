//! Walsh-coded simultaneous Ramsey readout of four orientations on one
//! detector, against the sequential two-sequence scheme with the same
//! number of sequences.
//!
//! `cargo run --release --example walsh_protocol`

use nvmag::calibration::{default_linearize_step, fit_bias_seeded, linearize, OdmrLineCenters, DEFAULT_ADDRESSED};
use nvmag::walsh::{monte_carlo, ProjectionBridge, RamseyConfig, WalshCode};
use nvmag::PhysicalConstants;

fn main() {
    let cfg = RamseyConfig::default();
    let code = WalshCode::default();
    code.validate().expect("orthogonal code");
    let b = [1e-9, -2e-9, 0.5e-9, 1.5e-9];
    let rep = monte_carlo(&cfg, &code, &b, 1e-3, 10_000, 11).expect("monte carlo");
    println!("frame rate {:.0} Hz", rep.frame_rate);
    println!("mean decode (nT)         {:?}", rep.mean_simultaneous.map(|v| (v * 1e12).round() / 1e3));
    println!("std simultaneous (pT)    {:?}", rep.std_simultaneous.map(|v| (v * 1e14).round() / 100.0));
    println!("std sequential (pT)      {:?}", rep.std_sequential.map(|v| (v * 1e14).round() / 100.0));
    println!("SNR ratio                {:?}", rep.snr_ratio.map(|v| (v * 1e3).round() / 1e3));

    let consts = PhysicalConstants::default();
    let point = fit_bias_seeded(&OdmrLineCenters::demo(), &consts).expect("fit").params;
    let m = linearize(&point, &DEFAULT_ADDRESSED, default_linearize_step(&consts), &consts).expect("linearize");
    let bridge = ProjectionBridge::for_bias(&point.bias_field, &DEFAULT_ADDRESSED, &consts);
    let lab = bridge.to_lab_field(&rep.mean_simultaneous, &m) * 1e9;
    println!("lab-frame field (nT)     ({:.3}, {:.3}, {:.3})", lab.x, lab.y, lab.z);
}
