//! Linear reconstruction against exact Hamiltonian inversion, across field
//! magnitudes from 1 nT to 100 uT.
//!
//! `cargo run --release --example reconstruct_oracle`

use nalgebra::Vector3;
use nvmag::calibration::{default_linearize_step, fit_bias_seeded, linearize, OdmrLineCenters, DEFAULT_ADDRESSED};
use nvmag::reconstruction::{exact_shifts, reconstruct_linear, reconstruct_oracle, ShiftFrame};
use nvmag::PhysicalConstants;

fn main() {
    let consts = PhysicalConstants::default();
    let point = fit_bias_seeded(&OdmrLineCenters::demo(), &consts).expect("fit").params;
    let m = linearize(&point, &DEFAULT_ADDRESSED, default_linearize_step(&consts), &consts).expect("linearize");
    let dir = Vector3::new(0.3, -0.5, 0.8).normalize();
    println!("{:>10}  {:>14}  {:>14}", "|B| (T)", "linear err", "oracle err");
    for mag in [1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4] {
        let b = dir * mag;
        let frame = ShiftFrame::new(exact_shifts(&point, &DEFAULT_ADDRESSED, &b, &consts), 0.0);
        let lin = reconstruct_linear(&frame, &m).b;
        let ora = reconstruct_oracle(&frame, &point, &DEFAULT_ADDRESSED, &consts).expect("oracle").b;
        println!(
            "{mag:>10.0e}  {:>13.4e}%  {:>13.4e}%",
            (lin - b).norm() / mag * 100.0,
            (ora - b).norm() / mag * 100.0
        );
    }

    let frame = ShiftFrame::new(exact_shifts(&point, &DEFAULT_ADDRESSED, &(dir * 1e-8), &consts), 0.0);
    let n = 2000;
    let t = std::time::Instant::now();
    let mut acc = 0.0;
    for _ in 0..n {
        acc += reconstruct_linear(std::hint::black_box(&frame), &m).b.x;
    }
    let t_lin = t.elapsed().as_secs_f64() / n as f64;
    let t = std::time::Instant::now();
    for _ in 0..50 {
        acc += reconstruct_oracle(&frame, &point, &DEFAULT_ADDRESSED, &consts).unwrap().b.x;
    }
    let t_ora = t.elapsed().as_secs_f64() / 50.0;
    std::hint::black_box(acc);
    println!("per frame: linear {:.1} ns, oracle {:.1} us, ratio {:.0}x", t_lin * 1e9, t_ora * 1e6, t_ora / t_lin);
}
