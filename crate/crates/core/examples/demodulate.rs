//! Chirp-calibrate the lock-in slopes, then demodulate a 40 Hz field along x
//! and compare each channel's recovered shift with the sensing-matrix
//! prediction.
//!
//! `cargo run --release --example demodulate`

use nvmag::calibration::{default_linearize_step, fit_bias_seeded, linearize, OdmrLineCenters, DEFAULT_ADDRESSED};
use nvmag::dsp::{calibrate_from_chirp, demodulate, tone_rms, LockinChain};
use nvmag::synth::{default_channels, synthesize, tune_carriers, Axis, CarrierSweep, CoilSignal, NoiseModel, SynthConfig};
use nvmag::PhysicalConstants;

fn main() {
    let consts = PhysicalConstants::default();
    let params = fit_bias_seeded(&OdmrLineCenters::demo(), &consts).expect("fit").params;
    let m = linearize(&params, &DEFAULT_ADDRESSED, default_linearize_step(&consts), &consts).expect("linearize");
    let mut channels = default_channels();
    tune_carriers(&mut channels, &params, &consts);
    let chain = LockinChain::default();

    let sweep = CarrierSweep { span: 20e3, hold: 0.3 };
    let chirp = SynthConfig { duration: 1.3, noise: NoiseModel::None, sweep: Some(sweep), ..Default::default() };
    let (ramp, _) = synthesize(&params, &channels, &[], &chirp, 0, &consts).expect("synth");
    let cal = calibrate_from_chirp(&ramp, &channels, &chain, &sweep).expect("calibration");
    println!("slopes (nV/Hz): {:?}", cal.slopes.map(|s| (s * 1e11).round() / 100.0));
    println!("phases (rad):   {:?}", cal.phases.map(|p| (p * 1e3).round() / 1e3));

    let rms = 20e-9;
    let coil = [CoilSignal { axis: Axis::X, freq: 40.0, rms_amplitude: rms, phase: 0.0 }];
    let cfg = SynthConfig { duration: 3.0, start_time: -2.0, noise: NoiseModel::None, ..Default::default() };
    let (pl, _) = synthesize(&params, &channels, &coil, &cfg, 0, &consts).expect("synth");
    let out = demodulate(&pl, &channels, &cal, &chain).expect("demod");
    println!("ENBW {:.2} Hz, band-pass group delay {:.2} ms", out.enbw, out.group_delay * 1e3);
    for i in 0..4 {
        let settled = out.shifts[i].skip(2 * 2704);
        let want = (m.a[(i, 0)] * rms).abs();
        let got = tone_rms(&settled, 40.0);
        println!(
            "{:<8} expected {:6.3} Hz RMS  recovered {:6.3} Hz RMS  ({:+.2} %)",
            DEFAULT_ADDRESSED[i].to_string(),
            want,
            got,
            (got / want - 1.0) * 100.0
        );
    }
}
