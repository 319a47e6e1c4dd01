//! Levenberg-Marquardt least squares with a central-difference Jacobian.
//!
//! Small and dense: the fits in this crate have at most a handful of
//! parameters and residuals, so the damped normal equations are solved
//! directly.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("no convergence after {iterations} iterations (scaled gradient {gradient:.3e})")]
    NonConvergence { iterations: usize, gradient: f64 },
    #[error("residual function returned a non-finite value")]
    NonFinite,
    #[error("Jacobian is rank-deficient (singular value ratio {ratio:.3e})")]
    Degenerate { ratio: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmSettings {
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub max_iterations: usize,
    /// Stop when the relative cost decrease of an accepted step falls below this.
    pub cost_tolerance: f64,
    /// Stop when the cost itself is below this (absolute, residual units squared).
    pub absolute_cost: f64,
    /// Stop when every step component is below this times (|x| + step scale).
    pub step_tolerance: f64,
    /// Scaled gradient below which a capped run still counts as converged.
    pub gradient_tolerance: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 10.0,
            max_iterations: 200,
            cost_tolerance: 1e-12,
            absolute_cost: 0.0,
            step_tolerance: 1e-15,
            gradient_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    CostTolerance,
    AbsoluteCost,
    StepTolerance,
    /// Damping grew without bound: no representable step lowers the cost.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Half the sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub jacobian: DMatrix<f64>,
    pub termination: Termination,
}

/// Central-difference Jacobian. `steps[j]` is the half-width for parameter j.
pub fn jacobian<F>(f: &F, x: &DVector<f64>, steps: &DVector<f64>, m: usize) -> Result<DMatrix<f64>, LmError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let mut j = DMatrix::zeros(m, n);
    let mut xp = x.clone();
    for c in 0..n {
        let h = steps[c];
        xp[c] = x[c] + h;
        let fp = f(&xp);
        xp[c] = x[c] - h;
        let fm = f(&xp);
        xp[c] = x[c];
        // Use the actually representable step width.
        let width = (x[c] + h) - (x[c] - h);
        for r in 0..m {
            j[(r, c)] = (fp[r] - fm[r]) / width;
        }
    }
    if j.iter().all(|v| v.is_finite()) {
        Ok(j)
    } else {
        Err(LmError::NonFinite)
    }
}

/// Ratio of smallest to largest singular value (0 for an all-zero matrix).
pub fn singular_ratio(j: &DMatrix<f64>) -> f64 {
    let sv = j.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

fn scaled_gradient(j: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let g = j.transpose() * r;
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    (0..g.len())
        .map(|c| {
            let cn = j.column(c).norm();
            if cn == 0.0 {
                0.0
            } else {
                g[c].abs() / (cn * rn)
            }
        })
        .fold(0.0, f64::max)
}

/// Minimize ½‖f(x)‖² starting from `x0`.
pub fn minimize<F>(
    f: F,
    x0: DVector<f64>,
    steps: &DVector<f64>,
    settings: &LmSettings,
) -> Result<LmReport, LmError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut x = x0;
    let mut r = f(&x);
    if !r.iter().all(|v| v.is_finite()) {
        return Err(LmError::NonFinite);
    }
    let m = r.len();
    let mut cost = 0.5 * r.norm_squared();
    let mut lambda = settings.initial_damping;
    let mut jac = jacobian(&f, &x, steps, m)?;

    for it in 1..=settings.max_iterations {
        if cost <= settings.absolute_cost {
            return Ok(report(x, r, cost, it - 1, jac, Termination::AbsoluteCost));
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        loop {
            let mut a = jtj.clone();
            for d in 0..a.nrows() {
                // Marquardt scaling, with a floor so dead columns stay solvable.
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= settings.damping_up;
                    if lambda > 1e20 {
                        return Ok(report(x, r, cost, it, jac, Termination::Stalled));
                    }
                    continue;
                }
            };
            let xn = &x + &step;
            let rn = f(&xn);
            let cn = 0.5 * rn.norm_squared();
            if cn.is_finite() && cn < cost {
                let rel = (cost - cn) / cost;
                let small = step
                    .iter()
                    .zip(x.iter().zip(steps.iter()))
                    .all(|(s, (xi, hi))| s.abs() <= settings.step_tolerance * (xi.abs() + hi));
                x = xn;
                r = rn;
                cost = cn;
                lambda /= settings.damping_down;
                jac = jacobian(&f, &x, steps, m)?;
                if rel < settings.cost_tolerance {
                    return Ok(report(x, r, cost, it, jac, Termination::CostTolerance));
                }
                if small {
                    return Ok(report(x, r, cost, it, jac, Termination::StepTolerance));
                }
                break;
            }
            lambda *= settings.damping_up;
            if lambda > 1e20 {
                return Ok(report(x, r, cost, it, jac, Termination::Stalled));
            }
        }
    }
    let gradient = scaled_gradient(&jac, &r);
    if gradient <= settings.gradient_tolerance {
        Ok(report(x, r, cost, settings.max_iterations, jac, Termination::CostTolerance))
    } else {
        Err(LmError::NonConvergence {
            iterations: settings.max_iterations,
            gradient,
        })
    }
}

fn report(
    params: DVector<f64>,
    residuals: DVector<f64>,
    cost: f64,
    iterations: usize,
    jacobian: DMatrix<f64>,
    termination: Termination,
) -> LmReport {
    LmReport {
        params,
        residuals,
        cost,
        iterations,
        jacobian,
        termination,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &DVector<f64>| DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]);
        let rep = minimize(
            f,
            DVector::from_vec(vec![-1.2, 1.0]),
            &DVector::from_element(2, 1e-6),
            &LmSettings::default(),
        )
        .unwrap();
        assert!((rep.params[0] - 1.0).abs() < 1e-6);
        assert!((rep.params[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn exponential_fit_recovers_parameters() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.5 * (-0.7 * t).exp() + 0.3).collect();
        let f = |x: &DVector<f64>| {
            DVector::from_iterator(ts.len(), ts.iter().zip(&ys).map(|(t, y)| x[0] * (-x[1] * t).exp() + x[2] - y))
        };
        let rep = minimize(
            f,
            DVector::from_vec(vec![1.0, 0.2, 0.0]),
            &DVector::from_element(3, 1e-7),
            &LmSettings::default(),
        )
        .unwrap();
        for (got, want) in rep.params.iter().zip([2.5, 0.7, 0.3]) {
            assert!((got - want).abs() < 1e-7, "{got} vs {want}");
        }
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let f = |x: &DVector<f64>| DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]);
        let s = LmSettings {
            max_iterations: 2,
            ..Default::default()
        };
        let err = minimize(f, DVector::from_vec(vec![-1.2, 1.0]), &DVector::from_element(2, 1e-6), &s);
        assert!(matches!(err, Err(LmError::NonConvergence { .. })));
    }

    #[test]
    fn nan_residual_is_rejected() {
        let f = |_: &DVector<f64>| DVector::from_vec(vec![f64::NAN]);
        let err = minimize(f, DVector::from_vec(vec![0.0]), &DVector::from_element(1, 1e-6), &LmSettings::default());
        assert_eq!(err.unwrap_err(), LmError::NonFinite);
    }
}
