//! NV ground-state spin physics.
//!
//! Each of the four crystallographic NV orientations sees the same lab-frame
//! field projected into its own body frame (ẑ along the symmetry axis). The
//! spin-1 Hamiltonian
//!
//! ```text
//! H / h = (D + Mz_i) Sz² + (g_e μ_B / h) B·S
//! ```
//!
//! is diagonalized in closed form and the two transition frequencies from the
//! lowest level are returned. Everything here is a pure function of its inputs.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Electron gyromagnetic ratio over Planck's constant, `g_e μ_B / h`, in Hz/T.
pub const GYROMAGNETIC_OVER_H: f64 = 28.03e9;

/// Elementary charge in coulombs.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Temperature coefficient of the zero-field splitting, Hz/K. Documentation
/// only; temperature is not a model input.
pub const DZFS_DT: f64 = -74e3;

/// Typical room-temperature zero-field splitting, Hz.
pub const NOMINAL_ZFS: f64 = 2.87e9;

#[derive(Debug, Error, PartialEq)]
pub enum SpinError {
    #[error("non-finite Hamiltonian parameter: {0}")]
    NonFinite(&'static str),
    #[error("zero-field splitting must be positive, got {0} Hz")]
    NonPositiveZfs(f64),
    #[error("bias field magnitude {0} T is outside the model's validity domain (< 0.1 T)")]
    FieldTooLarge(f64),
    #[error("unknown transition label {0:?} (expected e.g. \"lambda-\" or \"kappa+\")")]
    BadLine(String),
}

/// Physical constants used by the spin and noise models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConstants {
    /// `g_e μ_B / h` in Hz/T.
    pub gyromagnetic_over_h: f64,
    /// Elementary charge in C.
    pub elementary_charge: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            gyromagnetic_over_h: GYROMAGNETIC_OVER_H,
            elementary_charge: ELEMENTARY_CHARGE,
        }
    }
}

/// The four NV symmetry-axis orientations. Declaration order (λ, χ, φ, κ) is
/// the parameter order used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Lambda,
    Chi,
    Phi,
    Kappa,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [
        Orientation::Lambda,
        Orientation::Chi,
        Orientation::Phi,
        Orientation::Kappa,
    ];

    /// Position in the (λ, χ, φ, κ) parameter order.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Unit vector along the NV symmetry axis in the lab frame
    /// (x̂ ∥ [110], ŷ ∥ [-110], ẑ ∥ [001]).
    pub fn axis(self) -> Vector3<f64> {
        let a = (2.0f64 / 3.0).sqrt();
        let b = (1.0f64 / 3.0).sqrt();
        match self {
            Orientation::Kappa => Vector3::new(a, 0.0, b),
            Orientation::Lambda => Vector3::new(0.0, -a, -b),
            Orientation::Phi => Vector3::new(0.0, a, -b),
            Orientation::Chi => Vector3::new(-a, 0.0, b),
        }
    }

    /// Body-frame transverse basis (x̂_body, ŷ_body). x̂_body is the
    /// normalized projection of lab ẑ onto the plane perpendicular to the axis;
    /// ŷ_body = n̂ × x̂_body.
    pub fn transverse_basis(self) -> (Vector3<f64>, Vector3<f64>) {
        let n = self.axis();
        let z = Vector3::z();
        let x = (z - n * z.dot(&n)).normalize();
        let y = n.cross(&x);
        (x, y)
    }

    pub fn name(self) -> &'static str {
        match self {
            Orientation::Lambda => "lambda",
            Orientation::Chi => "chi",
            Orientation::Phi => "phi",
            Orientation::Kappa => "kappa",
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which line of an orientation's pair: `Minus` is the lower-frequency
/// transition ν⁻, `Plus` the upper ν⁺.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Minus,
    Plus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Minus => -1.0,
            Branch::Plus => 1.0,
        }
    }
}

/// One ODMR line: an orientation and a branch. Serialized as e.g. `"lambda-"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Line {
    pub orientation: Orientation,
    pub branch: Branch,
}

impl Line {
    pub const fn new(orientation: Orientation, branch: Branch) -> Self {
        Self { orientation, branch }
    }
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.branch {
            Branch::Minus => '-',
            Branch::Plus => '+',
        };
        write!(f, "{}{}", self.orientation, s)
    }
}

impl FromStr for Line {
    type Err = SpinError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SpinError::BadLine(s.to_string());
        let (name, sign) = s.split_at(s.len().checked_sub(1).ok_or_else(bad)?);
        let branch = match sign {
            "-" => Branch::Minus,
            "+" => Branch::Plus,
            _ => return Err(bad()),
        };
        let orientation = Orientation::ALL
            .into_iter()
            .find(|o| o.name() == name)
            .ok_or_else(bad)?;
        Ok(Line::new(orientation, branch))
    }
}

impl TryFrom<String> for Line {
    type Error = SpinError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Line> for String {
    fn from(l: Line) -> String {
        l.to_string()
    }
}

/// Static Hamiltonian parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianParams {
    /// Lab-frame bias field, tesla.
    #[serde(with = "crate::serde_vec3")]
    pub bias_field: Vector3<f64>,
    /// Zero-field splitting D, hertz.
    pub zfs_d: f64,
    /// Longitudinal strain/electric couplings Mz per orientation (λ, χ, φ, κ), hertz.
    pub strain_mz: [f64; 4],
}

impl HamiltonianParams {
    pub fn new(bias_field: Vector3<f64>, zfs_d: f64, strain_mz: [f64; 4]) -> Self {
        Self {
            bias_field,
            zfs_d,
            strain_mz,
        }
    }

    /// Same parameters with a different total field.
    pub fn with_field(&self, bias_field: Vector3<f64>) -> Self {
        Self { bias_field, ..*self }
    }

    pub fn validate(&self) -> Result<(), SpinError> {
        if !self.bias_field.iter().all(|v| v.is_finite()) {
            return Err(SpinError::NonFinite("bias_field"));
        }
        if !self.zfs_d.is_finite() {
            return Err(SpinError::NonFinite("zfs_d"));
        }
        if !self.strain_mz.iter().all(|v| v.is_finite()) {
            return Err(SpinError::NonFinite("strain_mz"));
        }
        if self.zfs_d <= 0.0 {
            return Err(SpinError::NonPositiveZfs(self.zfs_d));
        }
        let b = self.bias_field.norm();
        if b >= 0.1 {
            return Err(SpinError::FieldTooLarge(b));
        }
        Ok(())
    }
}

/// Eight transition frequencies in hertz, ordered
/// (κ⁻, λ⁻, φ⁻, χ⁻, χ⁺, φ⁺, λ⁺, κ⁺).
///
/// The order is positional (by orientation and branch), which coincides with
/// ascending frequency for bias fields like the one used in the demonstration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionSet {
    pub frequencies: [f64; 8],
}

impl TransitionSet {
    /// Slot of each line within `frequencies`.
    pub fn slot(line: Line) -> usize {
        use Orientation::*;
        match (line.orientation, line.branch) {
            (Kappa, Branch::Minus) => 0,
            (Lambda, Branch::Minus) => 1,
            (Phi, Branch::Minus) => 2,
            (Chi, Branch::Minus) => 3,
            (Chi, Branch::Plus) => 4,
            (Phi, Branch::Plus) => 5,
            (Lambda, Branch::Plus) => 6,
            (Kappa, Branch::Plus) => 7,
        }
    }

    pub fn from_pairs(pairs: &[(f64, f64); 4]) -> Self {
        let mut frequencies = [0.0; 8];
        for o in Orientation::ALL {
            let (m, p) = pairs[o.index()];
            frequencies[Self::slot(Line::new(o, Branch::Minus))] = m;
            frequencies[Self::slot(Line::new(o, Branch::Plus))] = p;
        }
        Self { frequencies }
    }

    pub fn line(&self, line: Line) -> f64 {
        self.frequencies[Self::slot(line)]
    }

    /// (ν⁻, ν⁺) for one orientation.
    pub fn pair(&self, o: Orientation) -> (f64, f64) {
        (
            self.line(Line::new(o, Branch::Minus)),
            self.line(Line::new(o, Branch::Plus)),
        )
    }
}

/// Express a lab-frame field in the NV body frame of `orient`.
pub fn body_frame_field(lab_field: &Vector3<f64>, orient: Orientation) -> Vector3<f64> {
    let n = orient.axis();
    let (x, y) = orient.transverse_basis();
    Vector3::new(lab_field.dot(&x), lab_field.dot(&y), lab_field.dot(&n))
}

/// Spin-1 Hamiltonian in hertz, basis (|+1⟩, |0⟩, |−1⟩).
///
/// `splitting` is D + Mz; `field_hz` is the body-frame field already
/// multiplied by `g_e μ_B / h`.
pub fn hamiltonian(splitting: f64, field_hz: &Vector3<f64>) -> Matrix3<Complex64> {
    let (bx, by, bz) = (field_hz.x, field_hz.y, field_hz.z);
    // S+ coupling: (bx - i by)/√2 on the upper off-diagonal.
    let up = Complex64::new(bx, -by) * FRAC_1_SQRT_2;
    let dn = up.conj();
    let z = Complex64::new(0.0, 0.0);
    Matrix3::new(
        Complex64::new(splitting + bz, 0.0),
        up,
        z,
        dn,
        z,
        up,
        z,
        dn,
        Complex64::new(splitting - bz, 0.0),
    )
}

/// Eigenvalues of a 3×3 Hermitian matrix in ascending order, via the
/// trigonometric solution of the characteristic cubic.
pub fn hermitian3_eigenvalues(m: &Matrix3<Complex64>) -> [f64; 3] {
    let q = (m[(0, 0)].re + m[(1, 1)].re + m[(2, 2)].re) / 3.0;
    let mut k = *m;
    for i in 0..3 {
        k[(i, i)] -= q;
    }
    let p2: f64 = k.iter().map(|c| c.norm_sqr()).sum::<f64>() / 6.0;
    if p2 == 0.0 {
        return [q; 3];
    }
    let p = p2.sqrt();
    let b = k / Complex64::new(p, 0.0);
    let r = (det3(&b).re / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let mid = q + 2.0 * p * (phi - 2.0 * PI / 3.0).cos();
    let mut e = [lo, mid, hi];
    e.sort_by(f64::total_cmp);
    e
}

fn det3(m: &Matrix3<Complex64>) -> Complex64 {
    m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
        - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
}

/// (ν⁻, ν⁺) for one orientation given its body-frame field in hertz.
pub fn pair_from_body_field(splitting: f64, field_hz: &Vector3<f64>) -> (f64, f64) {
    let transverse = field_hz.x.hypot(field_hz.y);
    // Below this the second-order shift is < 1e-8 Hz; the matrix is diagonal
    // to working precision and the diagonal is used directly.
    if transverse <= 1e-9 * splitting.abs() {
        let a = splitting + field_hz.z;
        let b = splitting - field_hz.z;
        return (a.min(b), a.max(b));
    }
    let e = hermitian3_eigenvalues(&hamiltonian(splitting, field_hz));
    (e[1] - e[0], e[2] - e[0])
}

/// (ν⁻, ν⁺) of a single orientation.
pub fn orientation_transitions(
    params: &HamiltonianParams,
    orient: Orientation,
    consts: &PhysicalConstants,
) -> (f64, f64) {
    let body = body_frame_field(&params.bias_field, orient) * consts.gyromagnetic_over_h;
    pair_from_body_field(params.zfs_d + params.strain_mz[orient.index()], &body)
}

/// Frequency of a single addressed line.
pub fn line_frequency(params: &HamiltonianParams, line: Line, consts: &PhysicalConstants) -> f64 {
    let (m, p) = orientation_transitions(params, line.orientation, consts);
    match line.branch {
        Branch::Minus => m,
        Branch::Plus => p,
    }
}

/// All eight ODMR transition frequencies, using the default constants.
pub fn transition_frequencies(params: &HamiltonianParams) -> Result<TransitionSet, SpinError> {
    transition_frequencies_with(params, &PhysicalConstants::default())
}

pub fn transition_frequencies_with(
    params: &HamiltonianParams,
    consts: &PhysicalConstants,
) -> Result<TransitionSet, SpinError> {
    params.validate()?;
    let mut pairs = [(0.0, 0.0); 4];
    for o in Orientation::ALL {
        pairs[o.index()] = orientation_transitions(params, o, consts);
    }
    Ok(TransitionSet::from_pairs(&pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn demo_params() -> HamiltonianParams {
        HamiltonianParams::new(
            Vector3::new(3.54e-3, 1.73e-3, 6.95e-3),
            2.8692e9,
            [-20e3, -60e3, 50e3, 30e3],
        )
    }

    /// Roots of det(H - E) = E³ - 2dE² + (d² - |b|²)E + d·b⊥² by bisection.
    /// Built from the closed-form characteristic polynomial of the spin-1
    /// Hamiltonian, not from the matrix entries.
    fn char_poly_roots(d: f64, b: &Vector3<f64>) -> [f64; 3] {
        let bt2 = b.x * b.x + b.y * b.y;
        let b2 = bt2 + b.z * b.z;
        let poly = |e: f64| {
            // Evaluated around d to limit cancellation.
            let u = e - d;
            e * u * u - e * b.z * b.z - bt2 * u
        };
        let _ = b2;
        let bisect = |mut lo: f64, mut hi: f64| {
            let mut flo = poly(lo);
            for _ in 0..400 {
                let mid = 0.5 * (lo + hi);
                if mid == lo || mid == hi {
                    break;
                }
                let fm = poly(mid);
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        // Brackets from the Gershgorin-free structure: one root below 0 ... one near d-|bz|, one near d+|bz|.
        let r = b.norm() * 4.0 + 1.0;
        // Scan for sign changes on a coarse grid around the expected roots.
        let mut roots = Vec::new();
        let grid: Vec<f64> = (0..=40000)
            .map(|i| -r + (d + 2.0 * r) * i as f64 / 40000.0)
            .collect();
        for w in grid.windows(2) {
            if (poly(w[0]) < 0.0) != (poly(w[1]) < 0.0) {
                roots.push(bisect(w[0], w[1]));
            }
        }
        assert_eq!(roots.len(), 3, "expected three real roots");
        [roots[0], roots[1], roots[2]]
    }

    #[test]
    fn axes_are_unit_and_tetrahedral() {
        for o in Orientation::ALL {
            assert!((o.axis().norm() - 1.0).abs() < 1e-12);
        }
        for a in Orientation::ALL {
            for b in Orientation::ALL {
                if a != b {
                    let d = a.axis().dot(&b.axis());
                    assert!((d.abs() - 1.0 / 3.0).abs() < 1e-12, "{a}·{b} = {d}");
                }
            }
        }
    }

    #[test]
    fn body_frame_examples() {
        let b0 = 4.2e-3;
        let on_axis = body_frame_field(&(Orientation::Kappa.axis() * b0), Orientation::Kappa);
        assert!(on_axis.x.abs() < 1e-18 && on_axis.y.abs() < 1e-18);
        assert_relative_eq!(on_axis.z, b0, max_relative = 1e-14);

        let zero = body_frame_field(&Vector3::zeros(), Orientation::Lambda);
        assert_eq!(zero, Vector3::zeros());

        // 3.54·√(2/3) + 6.95·√(1/3) mT = 6.902982267 mT
        let lab = Vector3::new(3.54e-3, 1.73e-3, 6.95e-3);
        let k = body_frame_field(&lab, Orientation::Kappa);
        assert!((k.z - 6.902982267e-3).abs() < 1e-12);
        let transverse = (lab - Orientation::Kappa.axis() * k.z).norm();
        assert_relative_eq!(k.x.hypot(k.y), transverse, max_relative = 1e-12);
    }

    #[test]
    fn zero_field_is_degenerate() {
        let p = HamiltonianParams::new(Vector3::zeros(), 2.87e9, [0.0; 4]);
        let t = transition_frequencies(&p).unwrap();
        for f in t.frequencies {
            assert_eq!(f, 2.87e9);
        }
    }

    #[test]
    fn on_axis_zeeman_is_exact() {
        let b = 2.5e-3;
        let p = HamiltonianParams::new(Orientation::Kappa.axis() * b, 2.87e9, [0.0; 4]);
        let (m, pl) = transition_frequencies(&p).unwrap().pair(Orientation::Kappa);
        let g = GYROMAGNETIC_OVER_H * b;
        assert!((m - (2.87e9 - g)).abs() < 1e-5);
        assert!((pl - (2.87e9 + g)).abs() < 1e-5);
        assert!(((pl - m) - 2.0 * g).abs() < 1e-5);
    }

    #[test]
    fn demo_field_reproduces_demo_line_centers() {
        // Demo line centers (GHz) at full precision.
        let expected = [
            2.6825288, 2.7314119, 2.8193495, 2.8622508, 2.9272266, 2.9655093, 3.0351094, 3.0692,
        ];
        let t = transition_frequencies(&demo_params()).unwrap();
        for (f, p) in t.frequencies.iter().zip(expected) {
            assert!((f - p * 1e9).abs() < 0.5e6, "{f} vs {p} GHz");
        }
        assert!(t.frequencies.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn eigenvalues_match_characteristic_polynomial() {
        let p = demo_params();
        for o in Orientation::ALL {
            let d = p.zfs_d + p.strain_mz[o.index()];
            let b = body_frame_field(&p.bias_field, o) * GYROMAGNETIC_OVER_H;
            let e = hermitian3_eigenvalues(&hamiltonian(d, &b));
            let r = char_poly_roots(d, &b);
            for i in 0..3 {
                assert!((e[i] - r[i]).abs() < 1e-3, "{o}: {} vs {}", e[i], r[i]);
            }
        }
    }

    #[test]
    fn transverse_basis_rotation_does_not_change_frequencies() {
        let p = demo_params();
        for o in Orientation::ALL {
            let d = p.zfs_d + p.strain_mz[o.index()];
            let b = body_frame_field(&p.bias_field, o) * GYROMAGNETIC_OVER_H;
            let base = pair_from_body_field(d, &b);
            for k in 1..12 {
                let th = k as f64 * 0.53;
                let (c, s) = (th.cos(), th.sin());
                let rot = Vector3::new(c * b.x - s * b.y, s * b.x + c * b.y, b.z);
                let r = pair_from_body_field(d, &rot);
                assert!((r.0 - base.0).abs() < 1e-6 && (r.1 - base.1).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn second_order_shift_raises_the_mean() {
        let mut p = demo_params();
        p.strain_mz = [0.0; 4];
        let t = transition_frequencies(&p).unwrap();
        for o in Orientation::ALL {
            let (m, pl) = t.pair(o);
            assert!(0.5 * (m + pl) - p.zfs_d >= 0.0);
        }
        let small = p.with_field(p.bias_field * 1e-4);
        let t = transition_frequencies(&small).unwrap();
        for o in Orientation::ALL {
            let (m, pl) = t.pair(o);
            assert!((0.5 * (m + pl) - p.zfs_d).abs() < 1.0);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = demo_params();
        p.zfs_d = f64::NAN;
        assert!(transition_frequencies(&p).is_err());
        let mut p = demo_params();
        p.zfs_d = -1.0;
        assert_eq!(
            transition_frequencies(&p),
            Err(SpinError::NonPositiveZfs(-1.0))
        );
        let p = demo_params().with_field(Vector3::new(0.2, 0.0, 0.0));
        assert!(matches!(
            transition_frequencies(&p),
            Err(SpinError::FieldTooLarge(_))
        ));
    }

    #[test]
    fn line_labels_round_trip() {
        for o in Orientation::ALL {
            for b in [Branch::Minus, Branch::Plus] {
                let l = Line::new(o, b);
                assert_eq!(l.to_string().parse::<Line>().unwrap(), l);
            }
        }
        assert!("sigma+".parse::<Line>().is_err());
        assert!("".parse::<Line>().is_err());
    }

    #[test]
    fn repeated_calls_are_bit_identical() {
        let p = demo_params();
        assert_eq!(
            transition_frequencies(&p).unwrap(),
            transition_frequencies(&p).unwrap()
        );
    }
}
