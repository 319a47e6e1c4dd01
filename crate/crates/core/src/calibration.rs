//! Static calibration: bias fit from ODMR line centers, sensing-matrix
//! linearization, and lock-in slope fits from chirp sweeps.
//!
//! # Gauge
//!
//! The Hamiltonian only depends on the sums D + Mz_i, so D and the four Mz
//! values are not separately identifiable: shifting D by c and every Mz by
//! −c leaves all eight lines unchanged. The fit fixes this by constraining
//! ΣMz = 0 (D is the orientation-averaged splitting). Both the 8-column
//! condition number (singular by construction) and the 7-column, gauge-fixed
//! one are reported.

use nalgebra::{DVector, Matrix3x4, Matrix4x3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{self, LmError, LmSettings, Termination};
use crate::spin_model::{
    line_frequency, transition_frequencies_with, Branch, HamiltonianParams, Line, Orientation,
    PhysicalConstants, SpinError, TransitionSet,
};
use crate::stream::SampleStream;

/// Lines addressed by the four lock-in channels, in (λ, χ, φ, κ) row order.
pub const DEFAULT_ADDRESSED: [Line; 4] = [
    Line::new(Orientation::Lambda, Branch::Minus),
    Line::new(Orientation::Chi, Branch::Minus),
    Line::new(Orientation::Phi, Branch::Plus),
    Line::new(Orientation::Kappa, Branch::Plus),
];

/// Line centers (Hz) of the demonstration device, ordered as [`TransitionSet`].
pub const DEMO_LINE_CENTERS: [f64; 8] = [
    2.682_528_8e9,
    2.731_411_9e9,
    2.819_349_5e9,
    2.862_250_8e9,
    2.927_226_6e9,
    2.965_509_3e9,
    3.035_109_4e9,
    3.069_2e9,
];

/// Lock-in slopes of the demonstration device, V/Hz, (λ, χ, φ, κ).
pub const DEMO_SLOPES: [f64; 4] = [39.5e-9, 42.0e-9, 53.4e-9, 41.6e-9];

/// Default finite-difference step for [`linearize`]: the field that moves a
/// line by 10 Hz.
pub fn default_linearize_step(consts: &PhysicalConstants) -> f64 {
    10.0 / consts.gyromagnetic_over_h
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error("invalid line centers: {0}")]
    InvalidLines(String),
    #[error("fit did not converge: {0}")]
    NonConvergence(LmError),
    #[error("degenerate problem: {0}")]
    Degenerate(String),
    #[error("channel {channel}: poor linearity (slope {slope:.4e} V/Hz, residual {residual:.4e} V)")]
    PoorLinearity { channel: usize, slope: f64, residual: f64 },
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

impl From<LmError> for CalibrationError {
    fn from(e: LmError) -> Self {
        match e {
            LmError::Degenerate { ratio } => {
                CalibrationError::Degenerate(format!("singular value ratio {ratio:.3e}"))
            }
            other => CalibrationError::NonConvergence(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdmrLineCenters {
    /// Hz, ordered (κ⁻, λ⁻, φ⁻, χ⁻, χ⁺, φ⁺, λ⁺, κ⁺).
    pub frequencies: [f64; 8],
}

impl OdmrLineCenters {
    pub fn demo() -> Self {
        Self {
            frequencies: DEMO_LINE_CENTERS,
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let f = &self.frequencies;
        if let Some(v) = f.iter().find(|v| !v.is_finite()) {
            return Err(CalibrationError::InvalidLines(format!("non-finite value {v}")));
        }
        if let Some(v) = f.iter().find(|v| !(2.5e9..3.2e9).contains(*v)) {
            return Err(CalibrationError::InvalidLines(format!(
                "{v} Hz is outside (2.5, 3.2) GHz"
            )));
        }
        if !f.windows(2).all(|w| w[0] < w[1]) {
            return Err(CalibrationError::InvalidLines("not strictly increasing".into()));
        }
        Ok(())
    }

    fn as_set(&self) -> TransitionSet {
        TransitionSet {
            frequencies: self.frequencies,
        }
    }
}

/// Result of [`fit_bias`].
#[derive(Debug, Clone, Serialize)]
pub struct BiasFit {
    pub params: HamiltonianParams,
    /// Model minus observed, Hz, in line order.
    pub residuals: [f64; 8],
    pub rms_residual: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Condition number with D and all four Mz free. Infinite (serialized as
    /// null) or astronomically large because of the D/Mz degeneracy.
    pub condition_number_full: f64,
    /// Condition number with ΣMz = 0 imposed.
    pub condition_number_gauge: f64,
}

/// Parameters as the fit sees them, all in Hz:
/// (γBx, γBy, γBz, D, Mz_λ, Mz_χ, Mz_φ), with Mz_κ = −(Mz_λ + Mz_χ + Mz_φ).
fn pack(p: &HamiltonianParams, g: f64) -> DVector<f64> {
    let mean_mz = p.strain_mz.iter().sum::<f64>() / 4.0;
    let b = p.bias_field * g;
    DVector::from_vec(vec![
        b.x,
        b.y,
        b.z,
        p.zfs_d + mean_mz,
        p.strain_mz[0] - mean_mz,
        p.strain_mz[1] - mean_mz,
        p.strain_mz[2] - mean_mz,
    ])
}

fn unpack(x: &DVector<f64>, g: f64) -> HamiltonianParams {
    HamiltonianParams::new(
        Vector3::new(x[0], x[1], x[2]) / g,
        x[3],
        [x[4], x[5], x[6], -(x[4] + x[5] + x[6])],
    )
}

fn model_lines(p: &HamiltonianParams, consts: &PhysicalConstants) -> [f64; 8] {
    let mut pairs = [(0.0, 0.0); 4];
    for o in Orientation::ALL {
        pairs[o.index()] = crate::spin_model::orientation_transitions(p, o, consts);
    }
    TransitionSet::from_pairs(&pairs).frequencies
}

/// Deterministic starting point: D from the mean line, Mz = 0, and B from the
/// linear-regime inversion of the four splittings.
///
/// Each splitting gives |B·n̂_i| = (ν⁺ − ν⁻)/(2γ). Because Σn̂_i = 0, the true
/// signed projections sum to zero, so the sign pattern is chosen to make the
/// signed sum smallest. The overall sign of B is unobservable from line
/// centers; the convention B·n̂_κ ≥ 0 is used.
pub fn seed_from_lines(observed: &OdmrLineCenters, consts: &PhysicalConstants) -> HamiltonianParams {
    let set = observed.as_set();
    let d = set.frequencies.iter().sum::<f64>() / 8.0;
    let g = consts.gyromagnetic_over_h;
    let mags: Vec<f64> = Orientation::ALL
        .iter()
        .map(|&o| {
            let (m, p) = set.pair(o);
            (p - m) / (2.0 * g)
        })
        .collect();
    let kappa = Orientation::Kappa.index();
    let mut best = (f64::INFINITY, [1.0; 4]);
    for mask in 0..16u32 {
        let signs: [f64; 4] = std::array::from_fn(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 });
        if signs[kappa] < 0.0 {
            continue;
        }
        let s: f64 = (0..4).map(|i| signs[i] * mags[i]).sum();
        if s.abs() < best.0 {
            best = (s.abs(), signs);
        }
    }
    let b = Orientation::ALL
        .iter()
        .fold(Vector3::zeros(), |acc, &o| acc + o.axis() * (best.1[o.index()] * mags[o.index()]))
        * 0.75;
    HamiltonianParams::new(b, d, [0.0; 4])
}

/// Fit (B, D, Mz) to eight observed line centers, seeding from the data.
pub fn fit_bias_seeded(
    observed: &OdmrLineCenters,
    consts: &PhysicalConstants,
) -> Result<BiasFit, CalibrationError> {
    let seed = seed_from_lines(observed, consts);
    fit_bias(observed, &seed, consts)
}

/// Levenberg-Marquardt fit of the Hamiltonian to eight line centers.
///
/// `initial_guess` is projected onto the ΣMz = 0 gauge before fitting.
pub fn fit_bias(
    observed: &OdmrLineCenters,
    initial_guess: &HamiltonianParams,
    consts: &PhysicalConstants,
) -> Result<BiasFit, CalibrationError> {
    observed.validate()?;
    initial_guess.validate()?;
    let g = consts.gyromagnetic_over_h;
    let obs = observed.frequencies;
    let residual = |x: &DVector<f64>| {
        let m = model_lines(&unpack(x, g), consts);
        DVector::from_iterator(8, m.iter().zip(&obs).map(|(a, b)| a - b))
    };
    let x0 = pack(initial_guess, g);
    let steps = DVector::from_iterator(7, x0.iter().map(|v| 1e-6 * v.abs().max(1e3)));

    let j0 = lm::jacobian(&residual, &x0, &steps, 8)?;
    let ratio = lm::singular_ratio(&j0);
    if ratio < 1e-10 {
        return Err(CalibrationError::Degenerate(format!(
            "Jacobian at the starting point has singular value ratio {ratio:.3e}; is the bias field near zero?"
        )));
    }

    let settings = LmSettings {
        absolute_cost: 1e-14,
        ..Default::default()
    };
    let rep = lm::minimize(&residual, x0, &steps, &settings)?;
    let ratio = lm::singular_ratio(&rep.jacobian);
    if ratio < 1e-10 {
        return Err(CalibrationError::Degenerate(format!(
            "Jacobian at the solution has singular value ratio {ratio:.3e}"
        )));
    }
    let params = unpack(&rep.params, g);
    params.validate()?;
    let residuals: [f64; 8] = std::array::from_fn(|k| rep.residuals[k]);
    let rms_residual = (residuals.iter().map(|r| r * r).sum::<f64>() / 8.0).sqrt();
    Ok(BiasFit {
        params,
        residuals,
        rms_residual,
        iterations: rep.iterations,
        termination: rep.termination,
        condition_number_full: condition_full(&params, consts)?,
        condition_number_gauge: 1.0 / ratio,
    })
}

/// Condition number of the Jacobian over (γB, D, Mz_λ, Mz_χ, Mz_φ, Mz_κ).
fn condition_full(p: &HamiltonianParams, consts: &PhysicalConstants) -> Result<f64, CalibrationError> {
    let g = consts.gyromagnetic_over_h;
    let f = |x: &DVector<f64>| {
        let q = HamiltonianParams::new(
            Vector3::new(x[0], x[1], x[2]) / g,
            x[3],
            [x[4], x[5], x[6], x[7]],
        );
        DVector::from_row_slice(&model_lines(&q, consts))
    };
    let b = p.bias_field * g;
    let x = DVector::from_vec(vec![
        b.x,
        b.y,
        b.z,
        p.zfs_d,
        p.strain_mz[0],
        p.strain_mz[1],
        p.strain_mz[2],
        p.strain_mz[3],
    ]);
    let steps = DVector::from_element(8, 1e3);
    let j = lm::jacobian(&f, &x, &steps, 8)?;
    let r = lm::singular_ratio(&j);
    Ok(if r == 0.0 { f64::INFINITY } else { 1.0 / r })
}

/// The 4×3 linear map from lab-frame field to addressed-line shifts, and its
/// Moore-Penrose pseudoinverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingMatrix {
    /// Hz/T, rows in `addressed` order.
    #[serde(with = "crate::serde_mat")]
    pub a: Matrix4x3<f64>,
    /// T/Hz.
    #[serde(with = "crate::serde_mat")]
    pub a_pinv: Matrix3x4<f64>,
    /// Operating point of a numerical linearization; `None` for the
    /// linear-regime (axis-vector) matrix.
    pub linearization_point: Option<HamiltonianParams>,
    pub addressed: [Line; 4],
}

impl SensingMatrix {
    /// Wrap a matrix, computing the pseudoinverse by SVD.
    pub fn from_matrix(
        a: Matrix4x3<f64>,
        addressed: [Line; 4],
        linearization_point: Option<HamiltonianParams>,
    ) -> Result<Self, CalibrationError> {
        let a_pinv = pseudoinverse(&a)?;
        Ok(Self {
            a,
            a_pinv,
            linearization_point,
            addressed,
        })
    }

    /// Wrap an externally supplied matrix pair without recomputation.
    pub fn from_parts(
        a: Matrix4x3<f64>,
        a_pinv: Matrix3x4<f64>,
        addressed: [Line; 4],
        linearization_point: Option<HamiltonianParams>,
    ) -> Self {
        Self {
            a,
            a_pinv,
            linearization_point,
            addressed,
        }
    }

    /// `a` divided by γ.
    pub fn a_dimensionless(&self, consts: &PhysicalConstants) -> Matrix4x3<f64> {
        self.a / consts.gyromagnetic_over_h
    }

    /// `a_pinv` multiplied by γ.
    pub fn a_pinv_dimensionless(&self, consts: &PhysicalConstants) -> Matrix3x4<f64> {
        self.a_pinv * consts.gyromagnetic_over_h
    }
}

/// Moore-Penrose pseudoinverse via SVD, treating σ < 1e-12·σ_max as zero.
/// Fails if the column rank is below 3.
pub fn pseudoinverse(a: &Matrix4x3<f64>) -> Result<Matrix3x4<f64>, CalibrationError> {
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = 1e-12 * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if smax == 0.0 || rank < 3 {
        return Err(CalibrationError::Degenerate(format!(
            "sensing matrix has column rank {rank} < 3"
        )));
    }
    svd.pseudo_inverse(cutoff)
        .map_err(|e| CalibrationError::Degenerate(e.to_string()))
}

/// Central-difference sensing matrix at `point` for the four addressed lines.
pub fn linearize(
    point: &HamiltonianParams,
    addressed: &[Line; 4],
    step: f64,
    consts: &PhysicalConstants,
) -> Result<SensingMatrix, CalibrationError> {
    point.validate()?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(CalibrationError::InvalidSweep(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let mut a = Matrix4x3::zeros();
    for c in 0..3 {
        let mut hi = point.bias_field;
        let mut lo = point.bias_field;
        hi[c] += step;
        lo[c] -= step;
        let width = hi[c] - lo[c];
        let (ph, pl) = (point.with_field(hi), point.with_field(lo));
        for (r, &line) in addressed.iter().enumerate() {
            a[(r, c)] = (line_frequency(&ph, line, consts) - line_frequency(&pl, line, consts)) / width;
        }
    }
    SensingMatrix::from_matrix(a, *addressed, Some(*point))
}

/// Sign of each addressed line's response to a field along its own axis at
/// the given bias: sign(B·n̂) for ν⁺ and −sign(B·n̂) for ν⁻.
pub fn linear_regime_signs(bias: &Vector3<f64>, addressed: &[Line; 4]) -> [f64; 4] {
    std::array::from_fn(|k| {
        let l = addressed[k];
        let proj = bias.dot(&l.orientation.axis());
        let s = if proj >= 0.0 { 1.0 } else { -1.0 };
        s * l.branch.sign()
    })
}

/// The linear-regime matrix γ·(±n̂_i) and its analytic pseudoinverse.
///
/// For four distinct orientations the columns are orthogonal with squared
/// norm 4/3·γ², so A⁺ = (3/4)γ⁻²·Aᵀ.
pub fn linear_regime_matrix(
    addressed: &[Line; 4],
    signs: &[f64; 4],
    consts: &PhysicalConstants,
) -> SensingMatrix {
    let g = consts.gyromagnetic_over_h;
    let mut a = Matrix4x3::zeros();
    for r in 0..4 {
        let n = addressed[r].orientation.axis();
        for c in 0..3 {
            a[(r, c)] = g * signs[r] * n[c];
        }
    }
    let mut distinct: Vec<Orientation> = addressed.iter().map(|l| l.orientation).collect();
    distinct.sort();
    distinct.dedup();
    let a_pinv = if distinct.len() == 4 {
        a.transpose() * (0.75 / (g * g))
    } else {
        // Repeated orientations: fall back to the general inverse.
        pseudoinverse(&a).unwrap_or_else(|_| Matrix3x4::zeros())
    };
    SensingMatrix::from_parts(a, a_pinv, *addressed, None)
}

/// Lock-in slopes and demodulation phases for the four channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeCalibration {
    /// dS/dΔν in V/Hz. Positive: the lock-in output rises as the resonance
    /// moves up in frequency.
    pub slopes: [f64; 4],
    /// RMS deviation from the fitted line, V.
    #[serde(default)]
    pub fit_residual: [f64; 4],
    /// Lock-in reference phases, rad.
    #[serde(default)]
    pub phases: [f64; 4],
}

impl SlopeCalibration {
    pub fn from_slopes(slopes: [f64; 4]) -> Self {
        Self {
            slopes,
            fit_residual: [0.0; 4],
            phases: [0.0; 4],
        }
    }

    pub fn demo() -> Self {
        Self::from_slopes(DEMO_SLOPES)
    }
}

/// Straight-line fit of a demodulated signal against resonance detuning.
///
/// Sample k of each sweep is taken at detuning −span/2 + span·k/(n−1).
pub fn calibrate_slopes(sweeps: &[SampleStream; 4], span: f64) -> Result<SlopeCalibration, CalibrationError> {
    if !(span > 0.0 && span.is_finite()) {
        return Err(CalibrationError::InvalidSweep(format!("span must be positive, got {span}")));
    }
    let mut cal = SlopeCalibration::from_slopes([0.0; 4]);
    for (ch, s) in sweeps.iter().enumerate() {
        let (slope, residual) = line_fit(&s.samples, span)
            .ok_or_else(|| CalibrationError::InvalidSweep(format!("channel {ch} has fewer than 3 samples")))?;
        if slope == 0.0 || !slope.is_finite() || !(residual <= 0.1 * slope.abs() * span) {
            return Err(CalibrationError::PoorLinearity {
                channel: ch,
                slope,
                residual,
            });
        }
        cal.slopes[ch] = slope;
        cal.fit_residual[ch] = residual;
    }
    Ok(cal)
}

/// OLS slope and RMS residual of `y` against evenly spaced x over ±span/2.
pub fn line_fit(y: &[f64], span: f64) -> Option<(f64, f64)> {
    let n = y.len();
    if n < 3 {
        return None;
    }
    let x = |k: usize| -0.5 * span + span * k as f64 / (n - 1) as f64;
    let xm = (0..n).map(x).sum::<f64>() / n as f64;
    let ym = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, v) in y.iter().enumerate() {
        let dx = x(k) - xm;
        sxy += dx * (v - ym);
        sxx += dx * dx;
    }
    let mut slope = sxy / sxx;
    // A slope that moves the line by less than round-off of the data is zero.
    let ymax = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if (slope * span).abs() <= 1e-12 * ymax {
        slope = 0.0;
    }
    let rss: f64 = y
        .iter()
        .enumerate()
        .map(|(k, v)| (v - ym - slope * (x(k) - xm)).powi(2))
        .sum();
    Some((slope, (rss / n as f64).sqrt()))
}

/// Eight model line centers for `params`, validated.
pub fn line_centers(params: &HamiltonianParams, consts: &PhysicalConstants) -> Result<OdmrLineCenters, CalibrationError> {
    Ok(OdmrLineCenters {
        frequencies: transition_frequencies_with(params, consts)?.frequencies,
    })
}

/// Gauge-invariant comparison helper: D + Mz per orientation.
pub fn effective_splittings(p: &HamiltonianParams) -> [f64; 4] {
    std::array::from_fn(|i| p.zfs_d + p.strain_mz[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::Unit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn c() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    fn gauge_params(b: Vector3<f64>, d: f64, mz3: [f64; 3]) -> HamiltonianParams {
        HamiltonianParams::new(b, d, [mz3[0], mz3[1], mz3[2], -(mz3[0] + mz3[1] + mz3[2])])
    }

    #[test]
    fn demo_fit_field_and_splitting() {
        let fit = fit_bias_seeded(&OdmrLineCenters::demo(), &c()).unwrap();
        let b = fit.params.bias_field * 1e3;
        for (got, want) in b.iter().zip([3.54, 1.73, 6.95]) {
            assert!((got - want).abs() <= 0.01, "{got} vs {want} mT");
        }
        assert!((fit.params.zfs_d - 2.8692e9).abs() <= 0.1e6);
        assert!(fit.rms_residual < 20e3);
        assert!(fit.condition_number_full > 1e8 * fit.condition_number_gauge);
    }

    #[test]
    fn self_consistent_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if dir.norm() < 0.2 {
                continue;
            }
            let mut b = dir.normalize() * rng.random_range(2e-3..9e-3);
            if b.dot(&Orientation::Kappa.axis()) < 0.0 {
                b = -b;
            }
            let p = gauge_params(
                b,
                rng.random_range(2.86e9..2.88e9),
                [rng.random_range(-5e4..5e4), rng.random_range(-5e4..5e4), rng.random_range(-5e4..5e4)],
            );
            let obs = match line_centers(&p, &c()) {
                Ok(o) if o.validate().is_ok() => o,
                _ => continue,
            };
            let fit = fit_bias_seeded(&obs, &c()).unwrap();
            assert!((fit.params.zfs_d - p.zfs_d).abs() < 1.0, "D off by {}", fit.params.zfs_d - p.zfs_d);
            assert!((fit.params.bias_field - p.bias_field).norm() < 1e-9);
            assert!(fit.rms_residual < 1.0);
        }
    }

    #[test]
    fn noisy_lines_stay_within_derived_bounds() {
        let truth = gauge_params(Vector3::new(3.54e-3, 1.73e-3, 6.95e-3), 2.8692e9, [-20e3, -60e3, 50e3]);
        let clean = line_centers(&truth, &c()).unwrap();
        let noise = Normal::new(0.0, 10e3).unwrap();
        let mut worst_b = 0.0f64;
        let mut worst_rms = 0.0f64;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut obs = clean;
            for f in obs.frequencies.iter_mut() {
                *f += noise.sample(&mut rng);
            }
            let fit = fit_bias_seeded(&obs, &c()).unwrap();
            worst_b = worst_b.max((fit.params.bias_field - truth.bias_field).abs().max());
            worst_rms = worst_rms.max(fit.rms_residual);
        }
        assert!(worst_b <= 2e-6, "worst B error {worst_b}");
        assert!(worst_rms <= 20e3, "worst rms {worst_rms}");
    }

    #[test]
    fn refit_is_idempotent() {
        let obs = OdmrLineCenters::demo();
        let a = fit_bias_seeded(&obs, &c()).unwrap();
        let b = fit_bias(&obs, &a.params, &c()).unwrap();
        let db = (a.params.bias_field - b.params.bias_field).norm();
        let dd = (a.params.zfs_d - b.params.zfs_d).abs();
        assert!(db < 1e-9 && dd < 1.0, "moved by {db} T, {dd} Hz");
    }

    #[test]
    fn zero_field_start_is_degenerate() {
        // At B = 0 the splittings are kinks in B and the field columns vanish.
        let guess = HamiltonianParams::new(Vector3::zeros(), 2.87e9, [0.0; 4]);
        let r = fit_bias(&OdmrLineCenters::demo(), &guess, &c());
        assert!(matches!(r, Err(CalibrationError::Degenerate(_))), "{r:?}");
    }

    #[test]
    fn rejects_malformed_lines() {
        let mut obs = OdmrLineCenters::demo();
        obs.frequencies.swap(0, 1);
        assert!(matches!(obs.validate(), Err(CalibrationError::InvalidLines(_))));
        let mut obs = OdmrLineCenters::demo();
        obs.frequencies[7] = 3.5e9;
        assert!(obs.validate().is_err());
    }

    #[test]
    fn pseudoinverse_properties_at_demo_point() {
        let fit = fit_bias_seeded(&OdmrLineCenters::demo(), &c()).unwrap();
        let m = linearize(&fit.params, &DEFAULT_ADDRESSED, default_linearize_step(&c()), &c()).unwrap();
        let i3 = m.a_pinv * m.a;
        assert!((i3 - nalgebra::Matrix3::identity()).abs().max() < 1e-9);
        let proj = m.a * m.a_pinv;
        assert!((proj - proj.transpose()).abs().max() < 1e-9);
        // Normal-equations oracle.
        let ne = (m.a.transpose() * m.a).try_inverse().unwrap() * m.a.transpose();
        assert!(((ne - m.a_pinv) * c().gyromagnetic_over_h).abs().max() < 1e-10);
    }

    #[test]
    fn step_size_stability() {
        let fit = fit_bias_seeded(&OdmrLineCenters::demo(), &c()).unwrap();
        let h = default_linearize_step(&c());
        let base = linearize(&fit.params, &DEFAULT_ADDRESSED, h, &c()).unwrap().a;
        for k in [0.5, 2.0] {
            let a = linearize(&fit.params, &DEFAULT_ADDRESSED, h * k, &c()).unwrap().a;
            let rel = ((a - base).abs().max()) / base.abs().max();
            assert!(rel < 1e-6, "step ×{k}: {rel}");
        }
    }

    #[test]
    fn moderate_field_deviation_follows_second_order_bound() {
        // The transverse second-order shift (3/2)(γB⊥)²/D has field gradient
        // 3γ²B⊥/D, so rows deviate from ±γn̂ by at most 3γ|B|/D (relative to γ).
        let g = c().gyromagnetic_over_h;
        let dir = Vector3::new(0.3, -0.5, 0.81).normalize();
        let b = dir * 1e-3;
        let p = HamiltonianParams::new(b, 2.87e9, [0.0; 4]);
        let m = linearize(&p, &DEFAULT_ADDRESSED, default_linearize_step(&c()), &c()).unwrap();
        let lin = linear_regime_matrix(&DEFAULT_ADDRESSED, &linear_regime_signs(&b, &DEFAULT_ADDRESSED), &c());
        let dev = ((m.a - lin.a) / g).abs().max();
        let bound = 3.0 * g * 1e-3 / 2.87e9;
        assert!(dev <= bound * 1.05, "deviation {dev} vs bound {bound}");
        assert!(dev > 0.0);
        // Tenfold smaller field: within 1% of the axis-vector rows.
        let p = HamiltonianParams::new(b * 0.1, 2.87e9, [0.0; 4]);
        let m = linearize(&p, &DEFAULT_ADDRESSED, default_linearize_step(&c()), &c()).unwrap();
        assert!(((m.a - lin.a) / g).abs().max() < 0.01);
    }

    #[test]
    fn linear_regime_identities() {
        let g = c().gyromagnetic_over_h;
        let m = linear_regime_matrix(&DEFAULT_ADDRESSED, &[1.0, -1.0, -1.0, 1.0], &c());
        let r2 = (2.0f64 / 3.0).sqrt();
        let r1 = (1.0f64 / 3.0).sqrt();
        let want = Matrix4x3::new(0.0, -r2, -r1, r2, 0.0, -r1, 0.0, -r2, r1, r2, 0.0, r1);
        assert!((m.a / g - want).abs().max() < 1e-15);
        assert!((m.a_pinv * m.a - nalgebra::Matrix3::identity()).abs().max() < 1e-15);
        let svd = pseudoinverse(&m.a).unwrap();
        assert!(((svd - m.a_pinv) * g * g / g).abs().max() < 1e-12);
        let signs = linear_regime_signs(&Vector3::new(3.54e-3, 1.73e-3, 6.95e-3), &DEFAULT_ADDRESSED);
        assert_eq!(signs, [1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn rank_deficient_matrix_is_rejected() {
        let a = Matrix4x3::new(1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 3.0, 0.0);
        assert!(matches!(pseudoinverse(&a), Err(CalibrationError::Degenerate(_))));
    }

    fn sweep(slope: f64, n: usize, span: f64) -> SampleStream {
        let y = (0..n)
            .map(|k| 1e-3 + slope * (-0.5 * span + span * k as f64 / (n - 1) as f64))
            .collect();
        SampleStream::new(y, 1000.0, Unit::Volts)
    }

    #[test]
    fn slope_recovery_and_flat_sweep() {
        let span = 20e3;
        let s = 39.5e-9;
        let sweeps = [sweep(s, 500, span), sweep(2.0 * s, 500, span), sweep(-s, 500, span), sweep(s, 3, span)];
        let cal = calibrate_slopes(&sweeps, span).unwrap();
        assert!((cal.slopes[0] / s - 1.0).abs() < 1e-6);
        assert!((cal.slopes[1] / (2.0 * s) - 1.0).abs() < 1e-6);
        assert!((cal.slopes[2] / -s - 1.0).abs() < 1e-6);
        let flat = [sweep(0.0, 100, span), sweep(s, 100, span), sweep(s, 100, span), sweep(s, 100, span)];
        match calibrate_slopes(&flat, span) {
            Err(CalibrationError::PoorLinearity { channel: 0, slope, .. }) => assert_eq!(slope, 0.0),
            other => panic!("expected PoorLinearity, got {other:?}"),
        }
    }

    #[test]
    fn sensing_matrix_json_round_trip() {
        let m = linear_regime_matrix(&DEFAULT_ADDRESSED, &[1.0, -1.0, -1.0, 1.0], &c());
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"lambda-\""));
        let back: SensingMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
