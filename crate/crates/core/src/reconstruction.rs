//! From four ODMR frequency shifts to a lab-frame field.
//!
//! The linear path is a 3×4 matrix product per frame. The oracle re-solves
//! the Hamiltonian for the field offset that reproduces the shifted lines and
//! is only used to validate the linear path.

use nalgebra::{DVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::SensingMatrix;
use crate::lm::{self, LmError, LmSettings};
use crate::spin_model::{line_frequency, HamiltonianParams, Line, PhysicalConstants, SpinError};
use crate::stream::{SampleStream, Unit};

/// Shifts larger than this (Hz) are outside the linearization's validity.
pub const SHIFT_LIMIT: f64 = 10e6;

#[derive(Debug, Error)]
pub enum ReconstructionError {
    #[error("streams differ in length or rate")]
    LengthMismatch,
    #[error("expected shift streams in hertz, got {0:?}")]
    UnitMismatch(Unit),
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error("oracle fit failed: {0}")]
    NonConvergence(#[from] LmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftFrame {
    /// Hz, (λ, χ, φ, κ) or whatever order the sensing matrix rows use.
    pub shifts: [f64; 4],
    pub timestamp: f64,
}

impl ShiftFrame {
    pub fn new(shifts: [f64; 4], timestamp: f64) -> Self {
        Self { shifts, timestamp }
    }

    pub fn in_range(&self) -> bool {
        self.shifts.iter().all(|s| s.is_finite() && s.abs() < SHIFT_LIMIT)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldFrame {
    /// Tesla, lab frame.
    #[serde(with = "crate::serde_vec3")]
    pub b: Vector3<f64>,
    pub timestamp: f64,
    /// Set when any input shift exceeded [`SHIFT_LIMIT`].
    pub out_of_range: bool,
}

pub fn reconstruct_linear(shifts: &ShiftFrame, m: &SensingMatrix) -> VectorFieldFrame {
    let b = m.a_pinv * Vector4::from(shifts.shifts);
    VectorFieldFrame {
        b,
        timestamp: shifts.timestamp,
        out_of_range: !shifts.in_range(),
    }
}

/// Exact inverse: the field offset B such that the addressed lines at
/// `point.bias_field + B` sit at their unperturbed frequencies plus `shifts`.
/// D and Mz stay fixed.
pub fn reconstruct_oracle(
    shifts: &ShiftFrame,
    point: &HamiltonianParams,
    addressed: &[Line; 4],
    consts: &PhysicalConstants,
) -> Result<VectorFieldFrame, ReconstructionError> {
    point.validate()?;
    let g = consts.gyromagnetic_over_h;
    let targets: [f64; 4] =
        std::array::from_fn(|k| line_frequency(point, addressed[k], consts) + shifts.shifts[k]);
    let b0 = point.bias_field;
    let residual = |x: &DVector<f64>| {
        let p = point.with_field(b0 + Vector3::new(x[0], x[1], x[2]) / g);
        DVector::from_iterator(4, (0..4).map(|k| line_frequency(&p, addressed[k], consts) - targets[k]))
    };
    let settings = LmSettings {
        // Eigenvalue round-off is ~1e-6 Hz; nothing below that is meaningful.
        absolute_cost: 1e-14,
        ..Default::default()
    };
    let steps = DVector::from_element(3, 10.0);
    let rep = lm::minimize(residual, DVector::zeros(3), &steps, &settings)?;
    Ok(VectorFieldFrame {
        b: Vector3::new(rep.params[0], rep.params[1], rep.params[2]) / g,
        timestamp: shifts.timestamp,
        out_of_range: !shifts.in_range(),
    })
}

/// Apply [`reconstruct_linear`] sample by sample. Returns (Bx, By, Bz) streams in tesla.
pub fn reconstruct_stream(
    shift_streams: &[SampleStream; 4],
    m: &SensingMatrix,
) -> Result<[SampleStream; 3], ReconstructionError> {
    let first = &shift_streams[0];
    for s in shift_streams {
        if s.unit != Unit::Hertz {
            return Err(ReconstructionError::UnitMismatch(s.unit));
        }
        if s.len() != first.len() || s.rate != first.rate || s.t0 != first.t0 {
            return Err(ReconstructionError::LengthMismatch);
        }
    }
    let n = first.len();
    let mut out: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(n));
    for k in 0..n {
        let v = Vector4::new(
            shift_streams[0].samples[k],
            shift_streams[1].samples[k],
            shift_streams[2].samples[k],
            shift_streams[3].samples[k],
        );
        let b = m.a_pinv * v;
        for c in 0..3 {
            out[c].push(b[c]);
        }
    }
    Ok(out.map(|samples| SampleStream {
        samples,
        rate: first.rate,
        unit: Unit::Tesla,
        t0: first.t0,
    }))
}

/// Shifts of the addressed lines produced by a field offset, by full
/// Hamiltonian evaluation. The forward model used by the oracle tests.
pub fn exact_shifts(
    point: &HamiltonianParams,
    addressed: &[Line; 4],
    b_sens: &Vector3<f64>,
    consts: &PhysicalConstants,
) -> [f64; 4] {
    let moved = point.with_field(point.bias_field + b_sens);
    std::array::from_fn(|k| line_frequency(&moved, addressed[k], consts) - line_frequency(point, addressed[k], consts))
}
