//! Damped least squares with minimum-norm steps.
//!
//! Steps are `-sum_i s_i / (s_i^2 + lambda) (u_i . r) v_i` over the SVD of the
//! Jacobian, so directions in the numerical null space (`s_i` below
//! `RANK_CUTOFF * s_max`) never move.

use nalgebra::{DMatrix, DVector};

use crate::phase::fd_jacobian;

const RANK_CUTOFF: f64 = 1e-12;
const MAX_REJECTS: usize = 30;
const MIN_DAMPING: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LmSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub initial_damping: f64,
    pub damping_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LmOutcome {
    pub x: DVector<f64>,
    pub residual_max: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Residual evaluation failed (e.g. trial point is in collision).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Infeasible;

pub(crate) fn minimize<F>(
    mut residual: F,
    x0: DVector<f64>,
    settings: &LmSettings,
) -> Result<LmOutcome, Infeasible>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>, Infeasible>,
{
    let mut x = x0;
    let mut r = residual(&x)?;
    let mut damping = settings.initial_damping;
    let mut iterations = 0;

    while iterations < settings.max_iter {
        if r.amax() <= settings.tol {
            break;
        }
        iterations += 1;
        let jac = fd_jacobian(&mut residual, &x)?;
        let cost = r.norm_squared();
        let mut accepted = false;
        for _ in 0..MAX_REJECTS {
            let step = damped_step(&jac, &r, damping);
            let trial = &x + &step;
            match residual(&trial) {
                Ok(rt) if rt.iter().all(|v| v.is_finite()) && rt.norm_squared() < cost => {
                    x = trial;
                    r = rt;
                    damping = (damping / settings.damping_factor).max(MIN_DAMPING);
                    accepted = true;
                    break;
                }
                _ => damping *= settings.damping_factor,
            }
        }
        log::trace!(
            "lm iteration {iterations}: |r|_max = {:e}, damping = {damping:e}",
            r.amax()
        );
        if !accepted {
            break;
        }
    }

    let residual_max = r.amax();
    Ok(LmOutcome {
        x,
        residual_max,
        iterations,
        converged: residual_max <= settings.tol,
    })
}

fn damped_step(jac: &DMatrix<f64>, r: &DVector<f64>, damping: f64) -> DVector<f64> {
    let svd = jac.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.max();
    let mut step = DVector::zeros(jac.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= RANK_CUTOFF * s_max {
            continue;
        }
        let coef = s / (s * s + damping) * u.column(i).dot(r);
        step -= v_t.row(i).transpose() * coef;
    }
    step
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> LmSettings {
        LmSettings {
            tol: 1e-12,
            max_iter: 100,
            initial_damping: 1e-3,
            damping_factor: 10.0,
        }
    }

    #[test]
    fn solves_rosenbrock_residuals() {
        let out = minimize(
            |x| {
                Ok(DVector::from_vec(vec![
                    10.0 * (x[1] - x[0] * x[0]),
                    1.0 - x[0],
                ]))
            },
            DVector::from_vec(vec![-1.2, 1.0]),
            &settings(),
        )
        .unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-10 && (out.x[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_step_is_minimum_norm() {
        // r depends on x0 + x1 only; the null direction (1, -1) must not move
        let out = minimize(
            |x| Ok(DVector::from_vec(vec![x[0] + x[1] - 2.0])),
            DVector::from_vec(vec![0.0, 0.0]),
            &settings(),
        )
        .unwrap();
        assert!(out.converged);
        assert!((out.x[0] - out.x[1]).abs() < 1e-12);
    }

    #[test]
    fn reports_non_convergence() {
        let mut s = settings();
        s.max_iter = 1;
        let out = minimize(
            |x| {
                Ok(DVector::from_vec(vec![
                    10.0 * (x[1] - x[0] * x[0]),
                    1.0 - x[0],
                ]))
            },
            DVector::from_vec(vec![-1.2, 1.0]),
            &s,
        )
        .unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 1);
    }
}
