//! Simple mechanical systems, augmented potentials, and the solver for
//! relative equilibria of scaling symmetries and central configurations.
//!
//! For `H = 1/2 p^T M^{-1} p + U(q)` and a scaled lift with exponent `c`, a
//! point `(q, p)` is a relative equilibrium with multiplier `xi` iff
//! `d(H - xi J) + (c xi) theta = 0`, which splits into
//!
//! ```text
//! p = M xi_Q(q)
//! dU_xi/dq + (c xi) M xi_Q(q) = 0,      U_xi = U - 1/2 xi^2 I(q)
//! ```
//!
//! where `I(q) = xi_Q(q)^T M xi_Q(q)` is the locked inertia at `xi = 1`. The
//! second equation alone is the central configuration equation.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{self, LmSettings};
use crate::phase::{PhasePoint, ScalarField};
use crate::scaling::{verify_scaling_symmetry, ScalingAction, SymmetryReport};

/// A potential energy on `R^n` with analytic gradient.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, q: &DVector<f64>) -> f64;
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64>;

    /// Homogeneity degree under the uniform dilation, when declared.
    fn degree(&self) -> Option<f64> {
        None
    }

    /// Spatial dimension `d` when the potential is invariant under common
    /// translations of all bodies (coordinates grouped body by body).
    fn translation_dim(&self) -> Option<usize> {
        None
    }

    /// Smallest pairwise separation, for potentials singular at collisions.
    fn min_separation(&self, _q: &DVector<f64>) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanicalError {
    #[error("mass matrix must be square with side {expected}, got {rows}x{cols}")]
    Shape {
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("mass matrix is not symmetric")]
    NotSymmetric,
    #[error("mass matrix is not positive definite")]
    NotPositiveDefinite,
}

/// `H(q, p) = 1/2 p^T M^{-1} p + U(q)` with a constant mass matrix.
#[derive(Clone)]
pub struct SimpleMechanicalSystem {
    mass: DMatrix<f64>,
    mass_inv: DMatrix<f64>,
    potential: Arc<dyn Potential>,
}

impl fmt::Debug for SimpleMechanicalSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimpleMechanicalSystem")
            .field("mass", &self.mass)
            .field("degree", &self.potential.degree())
            .finish_non_exhaustive()
    }
}

impl SimpleMechanicalSystem {
    pub fn new(mass: DMatrix<f64>, potential: Arc<dyn Potential>) -> Result<Self, MechanicalError> {
        let n = potential.dim();
        if mass.nrows() != n || mass.ncols() != n {
            return Err(MechanicalError::Shape {
                expected: n,
                rows: mass.nrows(),
                cols: mass.ncols(),
            });
        }
        let scale = mass.amax().max(1.0);
        if (&mass - mass.transpose()).amax() > 1e-12 * scale {
            return Err(MechanicalError::NotSymmetric);
        }
        let chol = mass
            .clone()
            .cholesky()
            .ok_or(MechanicalError::NotPositiveDefinite)?;
        let mass_inv = chol.inverse();
        Ok(Self {
            mass,
            mass_inv,
            potential,
        })
    }

    /// Block-diagonal mass matrix `diag(m_1 I_d, ..., m_N I_d)`.
    pub fn with_body_masses(
        masses: &[f64],
        d: usize,
        potential: Arc<dyn Potential>,
    ) -> Result<Self, MechanicalError> {
        let diag = DVector::from_iterator(
            masses.len() * d,
            masses.iter().flat_map(|&m| std::iter::repeat_n(m, d)),
        );
        Self::new(DMatrix::from_diagonal(&diag), potential)
    }

    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn mass_inv(&self) -> &DMatrix<f64> {
        &self.mass_inv
    }

    pub fn potential(&self) -> &dyn Potential {
        self.potential.as_ref()
    }

    pub fn kinetic(&self, p: &DVector<f64>) -> f64 {
        0.5 * p.dot(&(&self.mass_inv * p))
    }

    /// Fiber derivative `v -> M v`.
    pub fn legendre(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.mass * v
    }

    /// Rows of the center-of-mass constraint `sum_i m_i q_i = 0`, when the
    /// potential is translation invariant.
    pub fn center_of_mass_rows(&self) -> Option<DMatrix<f64>> {
        let d = self.potential.translation_dim()?;
        let n = self.dim();
        if d == 0 || !n.is_multiple_of(d) {
            return None;
        }
        let mut pattern = DMatrix::zeros(d, n);
        for j in 0..n {
            pattern[(j % d, j)] = 1.0;
        }
        Some(pattern * &self.mass)
    }
}

impl ScalarField for SimpleMechanicalSystem {
    fn value(&self, z: &PhasePoint) -> f64 {
        self.kinetic(&z.p) + self.potential.value(&z.q)
    }

    fn gradient(&self, z: &PhasePoint) -> (DVector<f64>, DVector<f64>) {
        (self.potential.gradient(&z.q), &self.mass_inv * &z.p)
    }

    fn collision_distance(&self, q: &DVector<f64>) -> Option<f64> {
        self.potential.min_separation(q)
    }

    fn kinetic_energy(&self, z: &PhasePoint) -> f64 {
        self.kinetic(&z.p)
    }
}

/// A phase point together with its multiplier and certification data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeEquilibrium {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub xi: f64,
    pub residual_cc: f64,
    pub residual_full: f64,
    pub certified: bool,
    #[serde(default)]
    pub iterations: usize,
}

impl RelativeEquilibrium {
    /// Builds `p = M xi_Q(q)` and evaluates both residuals; certified iff the
    /// full residual is at most `tol`.
    pub fn certify(
        system: &SimpleMechanicalSystem,
        action: &ScalingAction,
        xi: f64,
        q: &DVector<f64>,
        tol: f64,
    ) -> Self {
        let p = momentum_from_config(system, action, xi, q);
        let z = PhasePoint {
            q: q.clone(),
            p: p.clone(),
        };
        let residual_cc = central_config_residual(system, action, xi, q).amax();
        let residual_full = relative_equilibrium_residual(system, action, xi, &z).amax();
        Self {
            q: q.iter().copied().collect(),
            p: p.iter().copied().collect(),
            xi,
            residual_cc,
            residual_full,
            certified: residual_full <= tol,
            iterations: 0,
        }
    }

    pub fn phase_point(&self) -> PhasePoint {
        PhasePoint {
            q: DVector::from_column_slice(&self.q),
            p: DVector::from_column_slice(&self.p),
        }
    }

    pub fn xi_squared(&self) -> f64 {
        self.xi * self.xi
    }
}

/// `I(q) = xi_Q(q)^T M xi_Q(q)` at `xi = 1`.
pub fn locked_inertia(
    system: &SimpleMechanicalSystem,
    action: &ScalingAction,
    q: &DVector<f64>,
) -> f64 {
    let gen = action.generator_config(1.0, q);
    gen.dot(&(system.mass() * &gen))
}

/// `dI/dq = 2 D xi_Q(q)^T M xi_Q(q)`.
pub fn locked_inertia_gradient(
    system: &SimpleMechanicalSystem,
    action: &ScalingAction,
    q: &DVector<f64>,
) -> DVector<f64> {
    let gen = action.generator_config(1.0, q);
    action.generator_jacobian(q).transpose() * (system.mass() * gen) * 2.0
}

/// `U_xi(q) = U(q) - 1/2 xi^2 I(q)`.
pub fn augmented_potential(
    system: &SimpleMechanicalSystem,
    action: &ScalingAction,
    xi: f64,
    q: &DVector<f64>,
) -> f64 {
    system.potential().value(q) - 0.5 * xi * xi * locked_inertia(system, action, q)
}

/// `K_xi(q, p) = 1/2 |p - M xi_Q(q)|^2_{M^{-1}}`.
pub fn augmented_kinetic(
    system: &SimpleMechanicalSystem,
    action: &ScalingAction,
    xi: f64,
    z: &PhasePoint,
) -> f64 {
    system.kinetic(&(&z.p - momentum_from_config(system, action, xi, &z.q)))
}

/// `H_xi = H - xi J`.
pub fn augmented_hamiltonian(
    system: &SimpleMechanicalSystem,
    action: &ScalingAction,
    xi: f64,
    z: &PhasePoint,
) -> f64 {
    system.value(z) - xi * action.momentum(z)
}

/// `p = M xi_Q(q)`.
pub fn momentum_from_config(
    system: &SimpleMechanicalSystem,
    action: &ScalingAction,
    xi: f64,
    q: &DVector<f64>,
) -> DVector<f64> {
    system.legendre(&action.generator_config(xi, q))
}

/// `dU/dq - 1/2 xi^2 dI/dq + (c xi) M xi_Q(q)`; zero exactly at central
/// configurations with multiplier `xi`.
pub fn central_config_residual(
    system: &SimpleMechanicalSystem,
    action: &ScalingAction,
    xi: f64,
    q: &DVector<f64>,
) -> DVector<f64> {
    system.potential().gradient(q) - locked_inertia_gradient(system, action, q) * (0.5 * xi * xi)
        + momentum_from_config(system, action, xi, q) * (action.c * xi)
}

/// Coordinates of `dH_xi + (c xi) theta` on the stacked `(dq, dp)` basis:
/// `(dU/dq - xi D xi_Q^T p + c xi p,  M^{-1} p - xi_Q(q))`.
pub fn relative_equilibrium_residual(
    system: &SimpleMechanicalSystem,
    action: &ScalingAction,
    xi: f64,
    z: &PhasePoint,
) -> DVector<f64> {
    let n = z.dim();
    let dq = system.potential().gradient(&z.q)
        - action.generator_jacobian(&z.q).transpose() * &z.p * xi
        + &z.p * (action.c * xi);
    let dp = system.mass_inv() * &z.p - action.generator_config(xi, &z.q);
    let mut out = DVector::zeros(2 * n);
    out.rows_mut(0, n).copy_from(&dq);
    out.rows_mut(n, n).copy_from(&dp);
    out
}

/// The local-coordinate split of the relative equilibrium equations:
/// `(p - M xi_Q(q), dU_xi/dq + (c xi) M xi_Q(q))`.
pub fn relative_equilibrium_blocks(
    system: &SimpleMechanicalSystem,
    action: &ScalingAction,
    xi: f64,
    z: &PhasePoint,
) -> (DVector<f64>, DVector<f64>) {
    (
        &z.p - momentum_from_config(system, action, xi, &z.q),
        central_config_residual(system, action, xi, &z.q),
    )
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriumError {
    #[error("potential does not declare a homogeneity degree")]
    MissingDegree,
    #[error("locked inertia vanishes")]
    ZeroInertia,
}

/// `xi^2 = -2 U(q) / (q^T M q)` for a homogeneous potential under the uniform
/// dilation with lift exponent `(2 + alpha) / 2`.
pub fn xi_squared_from_config(
    system: &SimpleMechanicalSystem,
    q: &DVector<f64>,
) -> Result<f64, EquilibriumError> {
    system
        .potential()
        .degree()
        .ok_or(EquilibriumError::MissingDegree)?;
    let inertia = q.dot(&(system.mass() * q));
    if inertia == 0.0 {
        return Err(EquilibriumError::ZeroInertia);
    }
    Ok(-2.0 * system.potential().value(q) / inertia)
}

/// How the scale freedom of the central configuration equation is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Solve for `(q, xi)` subject to `I(q) = I0`.
    Inertia(f64),
    /// Hold `xi` fixed and let the size of `q` float.
    FixedXi(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub initial_damping: f64,
    pub damping_factor: f64,
    pub normalization: Normalization,
    /// `None` imposes the center-of-mass rows iff the potential is
    /// translation invariant.
    pub center_of_mass: Option<bool>,
    pub collision_threshold: f64,
    /// Probes for the symmetry gate; 0 skips it.
    pub verify_samples: usize,
    pub verify_seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            initial_damping: 1e-3,
            damping_factor: 10.0,
            normalization: Normalization::Inertia(1.0),
            center_of_mass: None,
            collision_threshold: 1e-6,
            verify_samples: 16,
            verify_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("solver did not converge in {} iterations (residual {:e})", .0.iterations, .0.residual_full)]
    NotConverged(Box<RelativeEquilibrium>),
    #[error("collision: minimum separation {distance:e} below threshold")]
    Collision { distance: f64 },
    #[error("action is not a scaling symmetry of the system")]
    SymmetryFailure(Box<SymmetryReport>),
    #[error("initial configuration has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Solves the central configuration equation from `q0` by damped least
/// squares over `(q, xi)` (or `q` alone with a fixed multiplier).
///
/// The multiplier is reported as `+sqrt(xi^2)`; `-xi` gives the contracting
/// homothetic motion through the same configuration.
pub fn solve_central_configuration(
    system: &SimpleMechanicalSystem,
    action: &ScalingAction,
    q0: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<RelativeEquilibrium, SolveError> {
    let n = system.dim();
    if q0.len() != n {
        return Err(SolveError::DimensionMismatch {
            expected: n,
            found: q0.len(),
        });
    }
    if opts.verify_samples > 0 {
        let report = verify_scaling_symmetry(action, system, opts.verify_samples, opts.verify_seed);
        if !report.passed() {
            return Err(SolveError::SymmetryFailure(Box::new(report)));
        }
    }
    let too_close = |q: &DVector<f64>| {
        system
            .potential()
            .min_separation(q)
            .filter(|&d| !(d > opts.collision_threshold))
    };
    if let Some(distance) = too_close(q0) {
        return Err(SolveError::Collision { distance });
    }

    let com_rows = match opts.center_of_mass {
        Some(false) => None,
        _ => system.center_of_mass_rows(),
    };
    let x0 = match opts.normalization {
        Normalization::Inertia(_) => {
            let xi0 = xi_squared_from_config(system, q0)
                .ok()
                .filter(|x| action.is_uniform_dilation() && *x > 0.0 && x.is_finite())
                .map_or(1.0, f64::sqrt);
            let mut x0 = DVector::zeros(n + 1);
            x0.rows_mut(0, n).copy_from(q0);
            x0[n] = xi0;
            x0
        }
        Normalization::FixedXi(_) => q0.clone(),
    };

    let split = |x: &DVector<f64>| -> (DVector<f64>, f64) {
        match opts.normalization {
            Normalization::Inertia(_) => (x.rows(0, n).into_owned(), x[n]),
            Normalization::FixedXi(xi) => (x.clone(), xi),
        }
    };

    let residual = |x: &DVector<f64>| -> Result<DVector<f64>, lm::Infeasible> {
        let (q, xi) = split(x);
        if too_close(&q).is_some() {
            return Err(lm::Infeasible);
        }
        let mut rows: Vec<f64> = central_config_residual(system, action, xi, &q)
            .iter()
            .copied()
            .collect();
        if let Some(com) = &com_rows {
            rows.extend((com * &q).iter());
        }
        if let Normalization::Inertia(i0) = opts.normalization {
            rows.push(locked_inertia(system, action, &q) - i0);
        }
        Ok(DVector::from_vec(rows))
    };

    let settings = LmSettings {
        tol: opts.tol,
        max_iter: opts.max_iter,
        initial_damping: opts.initial_damping,
        damping_factor: opts.damping_factor,
    };
    let outcome = lm::minimize(residual, x0, &settings).map_err(|_| SolveError::Collision {
        distance: system.potential().min_separation(q0).unwrap_or(0.0),
    })?;

    let (q, xi) = split(&outcome.x);
    let mut re = RelativeEquilibrium::certify(system, action, xi.abs(), &q, opts.tol);
    re.iterations = outcome.iterations;
    re.certified &= outcome.converged;
    log::debug!(
        "central configuration solve: {} iterations, residual {:e}, xi^2 = {}",
        re.iterations,
        re.residual_full,
        re.xi_squared()
    );
    if re.certified {
        Ok(re)
    } else {
        Err(SolveError::NotConverged(Box::new(re)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::fd_gradient;
    use crate::scaling::tests::quadratic_action;
    use proptest::prelude::*;

    /// Pairwise Newtonian potential in `R^3`, written out directly so these
    /// tests do not depend on the model library.
    struct Gravity {
        masses: Vec<f64>,
    }

    impl Potential for Gravity {
        fn dim(&self) -> usize {
            3 * self.masses.len()
        }
        fn value(&self, q: &DVector<f64>) -> f64 {
            let mut u = 0.0;
            for i in 0..self.masses.len() {
                for j in i + 1..self.masses.len() {
                    let r = (q.fixed_rows::<3>(3 * i) - q.fixed_rows::<3>(3 * j)).norm();
                    u -= self.masses[i] * self.masses[j] / r;
                }
            }
            u
        }
        fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
            let mut g = DVector::zeros(q.len());
            for i in 0..self.masses.len() {
                for j in 0..self.masses.len() {
                    if i != j {
                        let d = q.fixed_rows::<3>(3 * i) - q.fixed_rows::<3>(3 * j);
                        let f = d * (self.masses[i] * self.masses[j] / d.norm().powi(3));
                        let mut gi = g.fixed_rows_mut::<3>(3 * i);
                        gi += f;
                    }
                }
            }
            g
        }
        fn degree(&self) -> Option<f64> {
            Some(-1.0)
        }
        fn translation_dim(&self) -> Option<usize> {
            Some(3)
        }
        fn min_separation(&self, q: &DVector<f64>) -> Option<f64> {
            let mut best = f64::INFINITY;
            for i in 0..self.masses.len() {
                for j in i + 1..self.masses.len() {
                    best = best.min((q.fixed_rows::<3>(3 * i) - q.fixed_rows::<3>(3 * j)).norm());
                }
            }
            Some(best)
        }
    }

    fn gravity(masses: &[f64]) -> SimpleMechanicalSystem {
        SimpleMechanicalSystem::with_body_masses(
            masses,
            3,
            Arc::new(Gravity {
                masses: masses.to_vec(),
            }),
        )
        .unwrap()
    }

    fn two_body() -> DVector<f64> {
        DVector::from_vec(vec![0.5, 0.0, 0.0, -0.5, 0.0, 0.0])
    }

    fn unit_triangle() -> DVector<f64> {
        let r = 1.0 / 3f64.sqrt();
        let mut q = DVector::zeros(9);
        for k in 0..3 {
            let a = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
            q[3 * k] = r * a.cos();
            q[3 * k + 1] = r * a.sin();
        }
        q
    }

    #[test]
    fn mass_matrix_validation() {
        let pot: Arc<dyn Potential> = Arc::new(Gravity {
            masses: vec![1.0, 1.0],
        });
        assert!(matches!(
            SimpleMechanicalSystem::new(DMatrix::identity(5, 5), pot.clone()),
            Err(MechanicalError::Shape { .. })
        ));
        let mut m = DMatrix::identity(6, 6);
        m[(0, 1)] = 0.5;
        assert_eq!(
            SimpleMechanicalSystem::new(m, pot.clone()).unwrap_err(),
            MechanicalError::NotSymmetric
        );
        assert_eq!(
            SimpleMechanicalSystem::new(-DMatrix::identity(6, 6), pot).unwrap_err(),
            MechanicalError::NotPositiveDefinite
        );
    }

    #[test]
    fn locked_inertia_examples() {
        let kepler = ScalingAction::kepler(6);
        assert!((locked_inertia(&gravity(&[1.0, 1.0]), &kepler, &two_body()) - 0.5).abs() < 1e-15);
        assert_eq!(
            locked_inertia(&gravity(&[1.0, 1.0]), &kepler, &DVector::zeros(6)),
            0.0
        );
        let k3 = ScalingAction::kepler(9);
        assert!((locked_inertia(&gravity(&[1.0; 3]), &k3, &unit_triangle()) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn augmented_potential_examples() {
        let s = gravity(&[1.0, 1.0]);
        let a = ScalingAction::kepler(6);
        assert!((augmented_potential(&s, &a, 2.0, &two_body()) + 2.0).abs() < 1e-14);
        assert_eq!(
            augmented_potential(&s, &a, 0.0, &two_body()),
            s.potential().value(&two_body())
        );
        let s3 = gravity(&[1.0; 3]);
        let a3 = ScalingAction::kepler(9);
        let val = augmented_potential(&s3, &a3, 6f64.sqrt(), &unit_triangle());
        assert!((val + 6.0).abs() < 1e-13);
    }

    #[test]
    fn momentum_from_config_examples() {
        let s = gravity(&[1.0, 1.0]);
        let a = ScalingAction::kepler(6);
        let p = momentum_from_config(&s, &a, 2.0, &two_body());
        assert_eq!(
            p.rows(0, 3).into_owned(),
            DVector::from_vec(vec![1.0, 0.0, 0.0])
        );
        assert_eq!(
            momentum_from_config(&s, &a, 0.0, &two_body()),
            DVector::zeros(6)
        );

        let planar: Arc<dyn Potential> = Arc::new(Gravity {
            masses: vec![1.0, 2.0],
        });
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]));
        let s = SimpleMechanicalSystem::new(m, planar).unwrap();
        let q = DVector::from_vec(vec![1.0, 0.0, 0.0, -0.5, 0.0, 0.0]);
        let p = momentum_from_config(&s, &a, 1.0, &q);
        assert_eq!(p, DVector::from_vec(vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0]));
    }

    #[test]
    fn central_config_residual_examples() {
        let s3 = gravity(&[1.0; 3]);
        let a3 = ScalingAction::kepler(9);
        let q = unit_triangle();
        assert!(central_config_residual(&s3, &a3, 6f64.sqrt(), &q).amax() < 1e-14);

        let s2 = gravity(&[1.0, 1.0]);
        assert!(
            central_config_residual(&s2, &ScalingAction::kepler(6), 2.0, &two_body()).amax()
                < 1e-15
        );

        // xi^2 = 5 leaves 1/2 q_i per body
        let r = central_config_residual(&s3, &a3, 5f64.sqrt(), &q);
        for body in 0..3 {
            let norm = r.fixed_rows::<3>(3 * body).norm();
            assert!((norm - 0.5 / 3f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn uniform_residual_reduces_to_closed_form() {
        let s3 = gravity(&[1.0, 2.0, 3.0]);
        let a = ScalingAction::uniform(9, 0.3, -1.0);
        let q = DVector::from_vec(vec![0.3, -0.2, 0.1, -0.7, 0.4, 0.0, 0.5, 0.9, -0.3]);
        let xi = 1.7;
        let expected = s3.potential().gradient(&q) - s3.mass() * &q * ((1.0 - a.c) * xi * xi);
        assert!((central_config_residual(&s3, &a, xi, &q) - expected).amax() < 1e-13);
    }

    #[test]
    fn relative_equilibrium_residual_examples() {
        let s = gravity(&[1.0, 1.0]);
        let a = ScalingAction::kepler(6);
        let q = two_body();
        let z = PhasePoint {
            q: q.clone(),
            p: s.mass() * &q * 2.0,
        };
        assert!(relative_equilibrium_residual(&s, &a, 2.0, &z).amax() < 1e-15);

        let z0 = PhasePoint {
            q: q.clone(),
            p: DVector::zeros(6),
        };
        let (mismatch, _) = relative_equilibrium_blocks(&s, &a, 2.0, &z0);
        assert!((mismatch.norm() - (s.mass() * &q * 2.0).norm()).abs() < 1e-15);
        assert!(relative_equilibrium_residual(&s, &a, 2.0, &z0).amax() > 0.5);
    }

    #[test]
    fn xi_squared_examples() {
        let s2 = gravity(&[1.0, 1.0]);
        assert!((xi_squared_from_config(&s2, &two_body()).unwrap() - 4.0).abs() < 1e-14);
        let s3 = gravity(&[1.0; 3]);
        assert!((xi_squared_from_config(&s3, &unit_triangle()).unwrap() - 6.0).abs() < 1e-13);
        let big = unit_triangle() * 2.0;
        assert!((xi_squared_from_config(&s3, &big).unwrap() - 0.75).abs() < 1e-14);
        assert_eq!(
            xi_squared_from_config(&s3, &DVector::zeros(9)),
            Err(EquilibriumError::ZeroInertia)
        );
    }

    #[test]
    fn xi_squared_requires_degree() {
        struct Flat;
        impl Potential for Flat {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, _: &DVector<f64>) -> f64 {
                0.0
            }
            fn gradient(&self, _: &DVector<f64>) -> DVector<f64> {
                DVector::zeros(1)
            }
        }
        let s = SimpleMechanicalSystem::new(DMatrix::identity(1, 1), Arc::new(Flat)).unwrap();
        assert_eq!(
            xi_squared_from_config(&s, &DVector::from_element(1, 1.0)),
            Err(EquilibriumError::MissingDegree)
        );
    }

    #[test]
    fn solver_recovers_lagrange_triangle() {
        let s = gravity(&[1.0; 3]);
        let a = ScalingAction::kepler(9);
        let q0 =
            unit_triangle().map_with_location(|i, _, x| x * if i % 2 == 0 { 1.05 } else { 0.95 });
        let re = solve_central_configuration(&s, &a, &q0, &SolveOptions::default()).unwrap();
        assert!(re.certified);
        assert!((re.xi_squared() - 6.0).abs() < 1e-8, "{}", re.xi_squared());
        assert!(re.iterations <= 30);
    }

    #[test]
    fn solver_reports_non_convergence() {
        let s = gravity(&[1.0; 3]);
        let a = ScalingAction::kepler(9);
        let q0 =
            unit_triangle().map_with_location(|i, _, x| x * if i % 2 == 0 { 1.05 } else { 0.95 });
        let opts = SolveOptions {
            max_iter: 1,
            ..SolveOptions::default()
        };
        match solve_central_configuration(&s, &a, &q0, &opts) {
            Err(SolveError::NotConverged(re)) => {
                assert!(!re.certified);
                assert_eq!(re.iterations, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn solver_rejects_collision_and_bad_symmetry() {
        let s = gravity(&[1.0; 3]);
        let mut q0 = unit_triangle();
        let first = q0.rows(0, 3).into_owned();
        q0.rows_mut(3, 3).copy_from(&first);
        assert!(matches!(
            solve_central_configuration(
                &s,
                &ScalingAction::kepler(9),
                &q0,
                &SolveOptions::default()
            ),
            Err(SolveError::Collision { .. })
        ));
        assert!(matches!(
            solve_central_configuration(
                &s,
                &ScalingAction::uniform(9, 1.0, -1.0),
                &unit_triangle(),
                &SolveOptions::default()
            ),
            Err(SolveError::SymmetryFailure(_))
        ));
    }

    #[test]
    fn argmin_consistency_on_constraint_manifold() {
        let s = gravity(&[1.0; 3]);
        let a = ScalingAction::kepler(9);
        let q0 =
            unit_triangle().map_with_location(|i, _, x| x * if i % 3 == 0 { 1.04 } else { 0.97 });
        let opts = SolveOptions::default();
        let re = solve_central_configuration(&s, &a, &q0, &opts).unwrap();
        let q = DVector::from_column_slice(&re.q);
        let grad = fd_gradient(|x| augmented_potential(&s, &a, re.xi, x), &q).unwrap();
        // tangent space of {I = I0, sum m q = 0}
        let com = s.center_of_mass_rows().unwrap();
        let mut rows = DMatrix::zeros(com.nrows() + 1, q.len());
        rows.rows_mut(0, com.nrows()).copy_from(&com);
        rows.set_row(
            com.nrows(),
            &locked_inertia_gradient(&s, &a, &q).transpose(),
        );
        let proj = DMatrix::identity(q.len(), q.len())
            - rows.transpose() * (&rows * rows.transpose()).try_inverse().unwrap() * &rows;
        assert!((proj * grad).norm() <= 10.0 * opts.tol);
    }

    fn probe_point() -> impl Strategy<Value = (PhasePoint, f64)> {
        (
            prop::collection::vec(-1.0..1.0f64, 9),
            prop::collection::vec(-1.0..1.0f64, 9),
            -2.0..2.0f64,
        )
            .prop_map(|(q, p, xi)| (PhasePoint::from_slices(&q, &p).unwrap(), xi))
            .prop_filter("collision-free", |(z, _)| {
                Gravity {
                    masses: vec![1.0; 3],
                }
                .min_separation(&z.q)
                .unwrap()
                    > 0.1
            })
    }

    proptest! {
        #[test]
        fn augmented_hamiltonian_decomposes((z, xi) in probe_point()) {
            let s = gravity(&[1.0, 2.0, 0.5]);
            let a = ScalingAction::kepler(9);
            let lhs = augmented_hamiltonian(&s, &a, xi, &z);
            let rhs = augmented_kinetic(&s, &a, xi, &z) + augmented_potential(&s, &a, xi, &z.q);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }

        #[test]
        fn residual_is_differential_of_augmented_hamiltonian((z, xi) in probe_point(), c in -0.5..1.5f64) {
            let s = gravity(&[1.0, 2.0, 0.5]);
            let a = ScalingAction::uniform(9, c, -1.0);
            let n = z.dim();
            let mut fd = fd_gradient(
                |w| augmented_hamiltonian(&s, &a, xi, &PhasePoint::from_stacked(w)),
                &z.stacked(),
            ).unwrap();
            let mut theta = fd.rows_mut(0, n);
            theta += &z.p * (c * xi);
            let res = relative_equilibrium_residual(&s, &a, xi, &z);
            prop_assert!((res - &fd).amax() <= 1e-6 * fd.amax().max(1.0));
        }

        #[test]
        fn residual_differential_custom_action(
            q in prop::collection::vec(-1.0..1.0f64, 2),
            p in prop::collection::vec(-1.0..1.0f64, 2),
            xi in -2.0..2.0f64,
        ) {
            struct Bowl;
            impl Potential for Bowl {
                fn dim(&self) -> usize { 2 }
                fn value(&self, q: &DVector<f64>) -> f64 { q[0].powi(4) + q[0] * q[1] + q[1] * q[1] }
                fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
                    DVector::from_vec(vec![4.0 * q[0].powi(3) + q[1], q[0] + 2.0 * q[1]])
                }
            }
            let s = SimpleMechanicalSystem::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]), Arc::new(Bowl)).unwrap();
            let a = quadratic_action(0.7, 0.0);
            let z = PhasePoint::from_slices(&q, &p).unwrap();
            let mut fd = fd_gradient(
                |w| augmented_hamiltonian(&s, &a, xi, &PhasePoint::from_stacked(w)),
                &z.stacked(),
            ).unwrap();
            let mut theta = fd.rows_mut(0, 2);
            theta += &z.p * (a.c * xi);
            let res = relative_equilibrium_residual(&s, &a, xi, &z);
            prop_assert!((res - &fd).amax() <= 1e-6 * fd.amax().max(1.0));
        }

        #[test]
        fn scaling_covariance(lambda in 0.3..3.0f64, xi in 0.5..3.0f64, seed_q in prop::collection::vec(-1.0..1.0f64, 9)) {
            let s = gravity(&[1.0, 2.0, 3.0]);
            let a = ScalingAction::kepler(9);
            let q = DVector::from_vec(seed_q);
            prop_assume!(s.potential().min_separation(&q).unwrap() > 0.1);
            let alpha = -1.0f64;
            let xi2 = xi * xi * lambda.powf(alpha - 2.0);
            let lhs = central_config_residual(&s, &a, xi2.sqrt(), &(&q * lambda));
            let rhs = central_config_residual(&s, &a, xi, &q) * lambda.powf(alpha - 1.0);
            prop_assert!((lhs - &rhs).amax() <= 1e-8 * rhs.amax().max(1.0));
        }
    }
}
