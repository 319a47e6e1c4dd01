//! Shot-noise budget: minimum detectable shifts, lab-frame covariance and
//! per-axis sensitivity, with and without the reference-detector penalty.
//!
//! `cargo run --example sensitivity`

use nvmag::calibration::{default_linearize_step, fit_bias_seeded, linearize, OdmrLineCenters, DEFAULT_ADDRESSED};
use nvmag::sensitivity::{sensitivity_report, NoiseBudget};
use nvmag::PhysicalConstants;

fn main() {
    let consts = PhysicalConstants::default();
    let point = fit_bias_seeded(&OdmrLineCenters::demo(), &consts).expect("fit").params;
    let m = linearize(&point, &DEFAULT_ADDRESSED, default_linearize_step(&consts), &consts).expect("linearize");
    let budget = NoiseBudget { excess_noise_factor: Some(2.75), ..Default::default() };
    for include_reference in [false, true] {
        let r = sensitivity_report(&budget, &m, include_reference, &consts).expect("budget");
        println!("reference penalty included: {include_reference}");
        println!("  min shift (Hz)      {:?}", r.dnu_min.map(|v| (v * 1e4).round() / 1e4));
        println!("  sigma_B (pT)        {:?}", r.sigma_b.map(|v| (v * 1e14).round() / 100.0));
        println!("  eta (pT/sqrt(Hz))   {:?}", r.eta.map(|v| (v * 1e14).round() / 100.0));
        if let Some(e) = r.eta_with_excess {
            println!("  eta x excess factor {:?}", e.map(|v| (v * 1e13).round() / 10.0));
        }
    }
    println!("convention: {}", nvmag::sensitivity::CONVENTION);
}
