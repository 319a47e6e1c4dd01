//! Fit the bias field, zero-field splitting and strain shifts to the eight
//! observed ODMR line centers of the demo sensor.
//!
//! `cargo run --example fit_bias`

use nvmag::calibration::{fit_bias_seeded, OdmrLineCenters};
use nvmag::spin_model::Orientation;
use nvmag::PhysicalConstants;

fn main() {
    let consts = PhysicalConstants::default();
    let lines = OdmrLineCenters::demo();
    let t = std::time::Instant::now();
    let fit = fit_bias_seeded(&lines, &consts).expect("fit");
    let p = fit.params;
    println!("fit in {:.1} ms, {} iterations ({:?})", t.elapsed().as_secs_f64() * 1e3, fit.iterations, fit.termination);
    let b = p.bias_field * 1e3;
    println!("B0 = ({:.4}, {:.4}, {:.4}) mT, |B0| = {:.4} mT", b.x, b.y, b.z, b.norm());
    println!("D  = {:.6} GHz", p.zfs_d / 1e9);
    for o in Orientation::ALL {
        println!("Mz[{:<6}] = {:+7.1} kHz", o.name(), p.strain_mz[o.index()] / 1e3);
    }
    println!("residuals (kHz): {:?}", fit.residuals.map(|r| (r / 100.0).round() / 10.0));
    println!("rms residual {:.2} kHz", fit.rms_residual / 1e3);
    println!(
        "Jacobian condition number: {:.3e} with four free strain shifts, {:.3e} with their sum pinned",
        fit.condition_number_full, fit.condition_number_gauge
    );
}
