//! Sensing matrix at the fitted operating point, compared with the
//! linear-regime matrix built from the bare orientation axes.
//!
//! `cargo run --example linearize`

use nvmag::calibration::{
    default_linearize_step, fit_bias_seeded, linear_regime_matrix, linear_regime_signs, linearize, OdmrLineCenters,
    DEFAULT_ADDRESSED,
};
use nvmag::PhysicalConstants;

fn main() {
    let consts = PhysicalConstants::default();
    let point = fit_bias_seeded(&OdmrLineCenters::demo(), &consts).expect("fit").params;
    let m = linearize(&point, &DEFAULT_ADDRESSED, default_linearize_step(&consts), &consts).expect("linearize");
    let signs = linear_regime_signs(&point.bias_field, &DEFAULT_ADDRESSED);
    let lin = linear_regime_matrix(&DEFAULT_ADDRESSED, &signs, &consts);

    println!("addressed lines: {}", DEFAULT_ADDRESSED.map(|l| l.to_string()).join(", "));
    println!("A / gamma (rows: lines, columns: x y z){:.5}", m.a_dimensionless(&consts));
    println!("A+ * gamma{:.5}", m.a_pinv_dimensionless(&consts));
    println!("linear-regime signs {signs:?}");
    println!(
        "largest |A - A_lin| / gamma = {:.4}",
        (m.a_dimensionless(&consts) - lin.a_dimensionless(&consts)).abs().max()
    );
    println!("A+ A (should be I3){:.3e}", m.a_pinv * m.a);
}
