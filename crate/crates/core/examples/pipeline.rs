//! Full simulated measurement at the default operating point: calibrate,
//! synthesize 1 s with the three coil tones, demodulate and reconstruct.
//!
//! `cargo run --release --example pipeline [seed]`

use nvmag::pipeline::{run, PipelineConfig};
use nvmag::PhysicalConstants;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let consts = PhysicalConstants::default();
    let t = std::time::Instant::now();
    let r = run(&PipelineConfig::default(), seed, &consts).expect("pipeline");
    println!("ran in {:.2} s (seed {seed})", t.elapsed().as_secs_f64());

    let b = r.fit.params.bias_field * 1e3;
    println!("bias field  ({:.5}, {:.5}, {:.5}) mT", b.x, b.y, b.z);
    println!("slopes      {:?} nV/Hz", r.slopes.slopes.map(|s| (s * 1e9 * 100.0).round() / 100.0));
    println!("ENBW        {:.2} Hz, band-pass group delay {:.2} ms", r.enbw, r.group_delay * 1e3);
    for tone in &r.tones {
        println!(
            "{:?} {:>5.1} Hz  applied {:.3} nT  measured {:.3} nT  ({:+.2} %)",
            tone.axis,
            tone.freq,
            tone.applied_rms * 1e9,
            tone.measured_rms * 1e9,
            tone.relative_error * 100.0
        );
    }
    let pt = |v: [f64; 3]| v.map(|x| (x * 1e14).round() / 100.0);
    println!("predicted η {:?} pT/√Hz", pt(r.predicted.eta));
    println!("empirical η {:?} pT/√Hz", pt(r.empirical_eta));
}
