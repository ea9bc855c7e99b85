//! `R+` actions on configuration space and their scaled cotangent lifts.
//!
//! An action `Psi_g` on `Q` is lifted to phase space as
//! `Phi_g(q, p) = (Psi_g(q), g^c DPsi_g(q)^{-T} p)`, which rescales the
//! canonical forms by `g^c`. With a Hamiltonian weight `b` (`H o Phi_g = g^b H`)
//! the pair is a scaling symmetry, and the conformal momentum map of the lift
//! is `J(q, p) = <p, xi_Q(q)>` at `xi = 1`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phase::{
    conformal_vector_field, fd_jacobian, omega_matrix, PhasePoint, ScalarField, TangentVector,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScalingError {
    #[error("group element must be positive, got {0}")]
    NonPositiveGroupElement(f64),
    #[error("configuration Jacobian of the action is singular")]
    SingularJacobian,
    #[error("dimension mismatch: action acts on R^{expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

type ConfigMap = dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync;
type ConfigJacobian = dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync;
type VectorField = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type FieldJacobian = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// A user-supplied action with analytic Jacobians.
///
/// `xi_q` is the generator at `xi = 1`, i.e. `d/dt|0 psi(e^t, q)`.
#[derive(Clone)]
pub struct CustomAction {
    pub dim: usize,
    pub psi: Arc<ConfigMap>,
    pub dpsi: Arc<ConfigJacobian>,
    pub xi_q: Arc<VectorField>,
    pub dxi_q: Arc<FieldJacobian>,
}

impl fmt::Debug for CustomAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomAction")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum ActionKind {
    /// `Psi_g(q)_i = g^{w_i} q_i`.
    Dilation {
        weights: DVector<f64>,
    },
    Custom(CustomAction),
}

/// An `R+` action on `Q` together with the lift exponent `c` and the
/// Hamiltonian weight `b`.
#[derive(Debug, Clone)]
pub struct ScalingAction {
    pub kind: ActionKind,
    pub c: f64,
    pub b: f64,
}

impl ScalingAction {
    pub fn dilation(weights: DVector<f64>, c: f64, b: f64) -> Self {
        Self {
            kind: ActionKind::Dilation { weights },
            c,
            b,
        }
    }

    /// Uniform dilation `q -> g q` on `R^n`.
    pub fn uniform(n: usize, c: f64, b: f64) -> Self {
        Self::dilation(DVector::from_element(n, 1.0), c, b)
    }

    /// Uniform dilation with the Kepler exponents `c = 1/2`, `b = -1`.
    pub fn kepler(n: usize) -> Self {
        Self::uniform(n, 0.5, -1.0)
    }

    pub fn custom(action: CustomAction, c: f64, b: f64) -> Self {
        Self {
            kind: ActionKind::Custom(action),
            c,
            b,
        }
    }

    pub fn with_exponents(mut self, c: f64, b: f64) -> Self {
        self.c = c;
        self.b = b;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ActionKind::Dilation { weights } => weights.len(),
            ActionKind::Custom(custom) => custom.dim,
        }
    }

    pub fn is_uniform_dilation(&self) -> bool {
        matches!(&self.kind, ActionKind::Dilation { weights } if weights.iter().all(|&w| w == 1.0))
    }

    fn check(&self, g: f64, n: usize) -> Result<(), ScalingError> {
        if !(g > 0.0) {
            return Err(ScalingError::NonPositiveGroupElement(g));
        }
        if n != self.dim() {
            return Err(ScalingError::DimensionMismatch {
                expected: self.dim(),
                found: n,
            });
        }
        Ok(())
    }

    /// `Psi_g(q)`.
    pub fn act_config(&self, g: f64, q: &DVector<f64>) -> Result<DVector<f64>, ScalingError> {
        self.check(g, q.len())?;
        Ok(match &self.kind {
            ActionKind::Dilation { weights } => q.zip_map(weights, |qi, w| g.powf(w) * qi),
            ActionKind::Custom(custom) => (custom.psi)(g, q),
        })
    }

    /// `DPsi_g(q)`.
    pub fn config_jacobian(&self, g: f64, q: &DVector<f64>) -> Result<DMatrix<f64>, ScalingError> {
        self.check(g, q.len())?;
        Ok(match &self.kind {
            ActionKind::Dilation { weights } => DMatrix::from_diagonal(&weights.map(|w| g.powf(w))),
            ActionKind::Custom(custom) => (custom.dpsi)(g, q),
        })
    }

    /// Scaled cotangent lift `(Psi_g(q), g^c DPsi_g(q)^{-T} p)`.
    pub fn act_phase(&self, g: f64, z: &PhasePoint) -> Result<PhasePoint, ScalingError> {
        let q = self.act_config(g, &z.q)?;
        let scale = g.powf(self.c);
        let p = match &self.kind {
            ActionKind::Dilation { weights } => {
                z.p.zip_map(weights, |pi, w| scale * pi / g.powf(w))
            }
            ActionKind::Custom(custom) => {
                let jac_t = (custom.dpsi)(g, &z.q).transpose();
                jac_t
                    .lu()
                    .solve(&z.p)
                    .filter(|p| p.iter().all(|x| x.is_finite()))
                    .ok_or(ScalingError::SingularJacobian)?
                    * scale
            }
        };
        Ok(PhasePoint { q, p })
    }

    /// Generator `xi_Q(q)` for the Lie algebra element `xi`.
    pub fn generator_config(&self, xi: f64, q: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            ActionKind::Dilation { weights } => q.component_mul(weights) * xi,
            ActionKind::Custom(custom) => (custom.xi_q)(q) * xi,
        }
    }

    /// `D xi_Q(q)` at `xi = 1`.
    pub fn generator_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        match &self.kind {
            ActionKind::Dilation { weights } => DMatrix::from_diagonal(weights),
            ActionKind::Custom(custom) => (custom.dxi_q)(q),
        }
    }

    /// Infinitesimal generator of the lift:
    /// `(xi_Q(q), (c xi Id - D xi_Q(q)^T) p)`.
    pub fn generator_phase(&self, xi: f64, z: &PhasePoint) -> TangentVector {
        let dq = self.generator_config(xi, &z.q);
        let dxi = self.generator_jacobian(&z.q) * xi;
        let dp = &z.p * (self.c * xi) - dxi.transpose() * &z.p;
        TangentVector { dq, dp }
    }

    /// Momentum map `J(q, p) = <p, xi_Q(q)>` at `xi = 1`; `J_xi = xi J`.
    pub fn momentum(&self, z: &PhasePoint) -> f64 {
        z.p.dot(&self.generator_config(1.0, &z.q))
    }

    /// `J_xi` as a scalar field with analytic gradient.
    pub fn momentum_function(&self, xi: f64) -> MomentumFunction<'_> {
        MomentumFunction { action: self, xi }
    }
}

/// `J_xi(q, p) = xi <p, xi_Q(q)>`.
#[derive(Debug, Clone, Copy)]
pub struct MomentumFunction<'a> {
    action: &'a ScalingAction,
    xi: f64,
}

impl ScalarField for MomentumFunction<'_> {
    fn value(&self, z: &PhasePoint) -> f64 {
        self.xi * self.action.momentum(z)
    }

    fn gradient(&self, z: &PhasePoint) -> (DVector<f64>, DVector<f64>) {
        let dq = self.action.generator_jacobian(&z.q).transpose() * &z.p * self.xi;
        let dp = self.action.generator_config(self.xi, &z.q);
        (dq, dp)
    }
}

/// Lift exponent `(a + b) / 2` making the scaled lift a scaling symmetry when
/// the kinetic energy has weight `a` and the potential weight `b`.
pub fn lift_exponent(a: f64, b: f64) -> f64 {
    0.5 * (a + b)
}

pub const CHECK_SYMPLECTIC: &str = "symplectic";
pub const CHECK_INVARIANCE: &str = "invariance";
pub const CHECK_MOMENTUM: &str = "momentum";
pub const CHECK_SCALING_FUNCTION: &str = "scaling-function";
pub const CHECK_MOMENTUM_INVARIANCE: &str = "momentum-invariance";
pub const CHECK_ACTION_JACOBIAN: &str = "action-jacobian";
pub const CHECK_GENERATOR: &str = "generator";
pub const CHECK_GROUP_LAW: &str = "group-law";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub max_residual: f64,
    pub passed: bool,
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub seed: u64,
    pub samples: usize,
    pub tolerance: f64,
    pub checks: Vec<CheckResult>,
}

impl SymmetryReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn max_residual(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_residual)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub tolerance: f64,
    /// Random group elements are drawn log-uniformly from `[1/g_max, g_max]`;
    /// the first probe always uses `g_max`.
    pub g_max: f64,
    /// Half-width of the box `q, p` are drawn from.
    pub box_size: f64,
    pub xi_max: f64,
    /// Probes closer than this to a collision are redrawn.
    pub min_separation: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            g_max: 2.0,
            box_size: 1.0,
            xi_max: 2.0,
            min_separation: 1e-2,
        }
    }
}

/// Seeded probe generator shared by the verifiers.
pub(crate) struct Prober {
    rng: ChaCha8Rng,
    opts: VerifyOptions,
}

impl Prober {
    pub(crate) fn new(seed: u64, opts: VerifyOptions) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            opts,
        }
    }

    pub(crate) fn vector(&mut self, n: usize) -> DVector<f64> {
        let s = self.opts.box_size;
        DVector::from_fn(n, |_, _| self.rng.gen_range(-s..s))
    }

    pub(crate) fn group_element(&mut self, k: usize) -> f64 {
        if k == 0 {
            self.opts.g_max
        } else {
            let l = self.opts.g_max.ln();
            self.rng.gen_range(-l..l).exp()
        }
    }

    pub(crate) fn xi(&mut self) -> f64 {
        let x = self.opts.xi_max;
        self.rng.gen_range(-x..x)
    }

    /// A phase point at which `field` is finite and away from collisions.
    pub(crate) fn phase_point<F: ScalarField + ?Sized>(
        &mut self,
        n: usize,
        field: &F,
    ) -> PhasePoint {
        loop {
            let z = PhasePoint {
                q: self.vector(n),
                p: self.vector(n),
            };
            let clear = field
                .collision_distance(&z.q)
                .is_none_or(|d| d > self.opts.min_separation);
            if clear && field.value(&z).is_finite() {
                return z;
            }
        }
    }
}

struct Tally {
    name: &'static str,
    max: f64,
    probes: usize,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            max: 0.0,
            probes: 0,
        }
    }

    fn record(&mut self, residual: f64) {
        self.probes += 1;
        // NaN residuals must fail the check
        if residual.is_nan() || residual > self.max {
            self.max = if residual.is_nan() {
                f64::INFINITY
            } else {
                residual
            };
        }
    }

    fn finish(self, tolerance: f64) -> CheckResult {
        CheckResult {
            name: self.name.to_string(),
            max_residual: self.max,
            passed: self.max <= tolerance,
            probes: self.probes,
        }
    }
}

/// Certifies that `(action, hamiltonian)` is a scaling symmetry at seeded
/// random probes. Failures are reported, never returned as errors.
pub fn verify_scaling_symmetry<H: ScalarField + ?Sized>(
    action: &ScalingAction,
    hamiltonian: &H,
    samples: usize,
    seed: u64,
) -> SymmetryReport {
    verify_scaling_symmetry_with(
        action,
        hamiltonian,
        samples,
        seed,
        &VerifyOptions::default(),
    )
}

pub fn verify_scaling_symmetry_with<H: ScalarField + ?Sized>(
    action: &ScalingAction,
    hamiltonian: &H,
    samples: usize,
    seed: u64,
    opts: &VerifyOptions,
) -> SymmetryReport {
    let samples = samples.max(1);
    let n = action.dim();
    let c = action.c;
    let b = action.b;
    let omega = omega_matrix(n);
    let mut prober = Prober::new(seed, opts.clone());

    let mut symplectic = Tally::new(CHECK_SYMPLECTIC);
    let mut invariance = Tally::new(CHECK_INVARIANCE);
    let mut momentum = Tally::new(CHECK_MOMENTUM);
    let mut scaling_fn = Tally::new(CHECK_SCALING_FUNCTION);
    let mut momentum_inv = Tally::new(CHECK_MOMENTUM_INVARIANCE);

    for k in 0..samples {
        let g = prober.group_element(k);
        let xi = prober.xi();
        let z = prober.phase_point(n, hamiltonian);
        let gc = g.powf(c);
        let gb = g.powf(b);

        // (i) A^T Omega A = g^c Omega for the FD Jacobian of Phi_g
        let jac = fd_jacobian(
            |w| {
                action
                    .act_phase(g, &PhasePoint::from_stacked(w))
                    .map(|y| y.stacked())
            },
            &z.stacked(),
        );
        symplectic.record(match jac {
            Ok(a) => (a.transpose() * &omega * &a - &omega * gc).amax() / gc,
            Err(_) => f64::INFINITY,
        });

        let moved = action.act_phase(g, &z);

        // (ii) H o Phi_g = g^b H
        let h = hamiltonian.value(&z);
        invariance.record(match &moved {
            Ok(y) => (hamiltonian.value(y) - gb * h).abs() / (gb * h).abs().max(1.0),
            Err(_) => f64::INFINITY,
        });

        // (iii) X_{J_xi}^{xi c} = xi_M
        let jxi = action.momentum_function(xi);
        let generator = action.generator_phase(xi, &z);
        momentum.record(match conformal_vector_field(&jxi, xi * c, &z) {
            Ok(x) => x.max_abs_diff(&generator) / generator.stacked().amax().max(1.0),
            Err(_) => f64::INFINITY,
        });

        // (iv) dJ(X_J^c) = c J
        let j1 = action.momentum_function(1.0);
        let jz = j1.value(&z);
        let (gq, gp) = j1.gradient(&z);
        let x = action.generator_phase(1.0, &z);
        let rate = gq.dot(&x.dq) + gp.dot(&x.dp);
        scaling_fn.record((rate - c * jz).abs() / jz.abs().max(1.0));

        // (v) J o Phi_g = g^c J
        momentum_inv.record(match &moved {
            Ok(y) => (action.momentum(y) - gc * jz).abs() / (gc * jz).abs().max(1.0),
            Err(_) => f64::INFINITY,
        });
    }

    let tol = opts.tolerance;
    let mut checks = vec![
        symplectic.finish(tol),
        invariance.finish(tol),
        momentum.finish(tol),
        scaling_fn.finish(tol),
        momentum_inv.finish(tol),
    ];
    if let ActionKind::Custom(custom) = &action.kind {
        checks.extend(verify_custom_action(custom, samples, &mut prober, tol));
    }
    SymmetryReport {
        seed,
        samples,
        tolerance: tol,
        checks,
    }
}

/// Cross-checks the analytic Jacobians and generator of a custom action
/// against finite differences, and the group law.
fn verify_custom_action(
    custom: &CustomAction,
    samples: usize,
    prober: &mut Prober,
    tol: f64,
) -> Vec<CheckResult> {
    let n = custom.dim;
    let mut jacobian = Tally::new(CHECK_ACTION_JACOBIAN);
    let mut generator = Tally::new(CHECK_GENERATOR);
    let mut group = Tally::new(CHECK_GROUP_LAW);
    for k in 0..samples {
        let g = prober.group_element(k);
        let h = prober.group_element(k + 1);
        let q = prober.vector(n);

        let fd = fd_jacobian(|x| Ok::<_, ()>((custom.psi)(g, x)), &q).unwrap_or_default();
        let analytic = (custom.dpsi)(g, &q);
        jacobian.record((fd - &analytic).amax() / analytic.amax().max(1.0));

        let fd_xi = fd_jacobian(
            |t| Ok::<_, ()>((custom.psi)(t[0].exp(), &q)),
            &DVector::from_element(1, 0.0),
        )
        .unwrap_or_default();
        let xi_q = (custom.xi_q)(&q);
        let mut res = (fd_xi.column(0) - &xi_q).amax() / xi_q.amax().max(1.0);
        let fd_dxi = fd_jacobian(|x| Ok::<_, ()>((custom.xi_q)(x)), &q).unwrap_or_default();
        let dxi = (custom.dxi_q)(&q);
        res = res.max((fd_dxi - &dxi).amax() / dxi.amax().max(1.0));
        generator.record(res);

        let direct = (custom.psi)(g * h, &q);
        let composed = (custom.psi)(g, &(custom.psi)(h, &q));
        group.record((&direct - composed).amax() / direct.amax().max(1.0));
    }
    vec![
        jacobian.finish(tol),
        generator.finish(tol),
        group.finish(tol),
    ]
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::phase::{canonical_theta, FnField};
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    /// `Psi_g(q) = (g q1, g q2 + (g - g^2) q1^2)`: the uniform dilation
    /// conjugated by `(q1, q2) -> (q1, q2 + q1^2)`.
    pub(crate) fn quadratic_action(c: f64, b: f64) -> ScalingAction {
        ScalingAction::custom(
            CustomAction {
                dim: 2,
                psi: Arc::new(|g, q| v(&[g * q[0], g * q[1] + (g - g * g) * q[0] * q[0]])),
                dpsi: Arc::new(|g, q| {
                    DMatrix::from_row_slice(2, 2, &[g, 0.0, 2.0 * (g - g * g) * q[0], g])
                }),
                xi_q: Arc::new(|q| v(&[q[0], q[1] - q[0] * q[0]])),
                dxi_q: Arc::new(|q| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -2.0 * q[0], 1.0])),
            },
            c,
            b,
        )
    }

    fn kepler_two_body() -> impl ScalarField {
        FnField::new(
            |z: &PhasePoint| {
                let d = (z.q.rows(0, 3) - z.q.rows(3, 3)).norm();
                0.5 * z.p.norm_squared() - 1.0 / d
            },
            |z: &PhasePoint| {
                let r = z.q.rows(0, 3) - z.q.rows(3, 3);
                let f = &r / r.norm().powi(3);
                let mut gq = DVector::zeros(6);
                gq.rows_mut(0, 3).copy_from(&f);
                gq.rows_mut(3, 3).copy_from(&(-f));
                (gq, z.p.clone())
            },
        )
    }

    #[test]
    fn act_config_examples() {
        let a = ScalingAction::uniform(2, 0.5, -1.0);
        assert_eq!(a.act_config(4.0, &v(&[1.0, 0.0])).unwrap(), v(&[4.0, 0.0]));
        assert_eq!(
            a.act_config(1.0, &v(&[3.0, -2.0])).unwrap(),
            v(&[3.0, -2.0])
        );
        let w = ScalingAction::dilation(v(&[1.0, 2.0]), 1.0, 0.0);
        assert_eq!(w.act_config(2.0, &v(&[1.0, 1.0])).unwrap(), v(&[2.0, 4.0]));
        assert_eq!(
            a.act_config(0.0, &v(&[1.0, 0.0])),
            Err(ScalingError::NonPositiveGroupElement(0.0))
        );
        assert_eq!(
            a.act_config(-1.0, &v(&[1.0, 0.0])),
            Err(ScalingError::NonPositiveGroupElement(-1.0))
        );
    }

    #[test]
    fn act_phase_examples() {
        let a = ScalingAction::uniform(2, 0.5, -1.0);
        let z = PhasePoint::from_slices(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        let y = a.act_phase(4.0, &z).unwrap();
        assert_eq!(y.q, v(&[4.0, 0.0]));
        assert_eq!(y.p, v(&[0.5, 0.0]));
        assert_eq!(a.act_phase(1.0, &z).unwrap(), z);

        let w = ScalingAction::dilation(v(&[1.0, 2.0]), 1.0, 0.0);
        let z = PhasePoint::from_slices(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        let y = w.act_phase(2.0, &z).unwrap();
        assert_eq!(y.q, v(&[2.0, 4.0]));
        assert_eq!(y.p, v(&[1.0, 0.5]));
    }

    #[test]
    fn act_phase_singular_jacobian() {
        let degenerate = ScalingAction::custom(
            CustomAction {
                dim: 1,
                psi: Arc::new(|_, q| q.clone()),
                dpsi: Arc::new(|_, _| DMatrix::zeros(1, 1)),
                xi_q: Arc::new(|q| q * 0.0),
                dxi_q: Arc::new(|_| DMatrix::zeros(1, 1)),
            },
            0.0,
            0.0,
        );
        let z = PhasePoint::from_slices(&[1.0], &[1.0]).unwrap();
        assert_eq!(
            degenerate.act_phase(2.0, &z),
            Err(ScalingError::SingularJacobian)
        );
    }

    #[test]
    fn generator_examples() {
        let a = ScalingAction::uniform(2, 0.5, -1.0);
        assert_eq!(a.generator_config(1.0, &v(&[2.0, 3.0])), v(&[2.0, 3.0]));
        assert_eq!(a.generator_config(0.0, &v(&[2.0, 3.0])), v(&[0.0, 0.0]));
        let w = ScalingAction::dilation(v(&[1.0, 2.0]), 1.0, 0.0);
        assert_eq!(w.generator_config(1.0, &v(&[1.0, 1.0])), v(&[1.0, 2.0]));

        let k = ScalingAction::uniform(1, 0.5, -1.0);
        let z = PhasePoint::from_slices(&[2.0], &[4.0]).unwrap();
        let x = k.generator_phase(1.0, &z);
        assert_eq!((x.dq[0], x.dp[0]), (2.0, -2.0));
        assert_eq!(k.generator_phase(0.0, &z), TangentVector::zeros(1));

        let z = PhasePoint::from_slices(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        let x = w.generator_phase(1.0, &z);
        assert_eq!(x.dq, v(&[1.0, 2.0]));
        assert_eq!(x.dp, v(&[0.0, -1.0]));
    }

    #[test]
    fn momentum_examples() {
        let a = ScalingAction::uniform(3, 0.5, -1.0);
        let z = PhasePoint::from_slices(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(a.momentum(&z), 32.0);
        let z0 = PhasePoint::from_slices(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        assert_eq!(a.momentum(&z0), 0.0);
        let w = ScalingAction::dilation(v(&[1.0, 2.0]), 1.0, 0.0);
        let z = PhasePoint::from_slices(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(w.momentum(&z), 3.0);
    }

    #[test]
    fn lift_exponent_examples() {
        assert_eq!(lift_exponent(2.0, -1.0), 0.5);
        assert_eq!(lift_exponent(2.0, 2.0), 2.0);
        assert_eq!(lift_exponent(2.0, -2.0), 0.0);
    }

    #[test]
    fn verifier_accepts_kepler_and_rejects_wrong_exponent() {
        let h = kepler_two_body();
        let good = verify_scaling_symmetry(&ScalingAction::kepler(6), &h, 32, 7);
        assert!(good.passed(), "{good:?}");
        assert!(good.max_residual() <= 1e-8, "{good:?}");

        let bad = verify_scaling_symmetry(&ScalingAction::uniform(6, 1.0, -1.0), &h, 32, 7);
        assert!(!bad.passed());
        assert!(bad.check(CHECK_INVARIANCE).unwrap().max_residual > 0.1);
    }

    #[test]
    fn verifier_accepts_harmonic_oscillator() {
        let h = FnField::new(
            |z: &PhasePoint| 0.5 * z.p.norm_squared() + 0.5 * z.q.norm_squared(),
            |z: &PhasePoint| (z.q.clone(), z.p.clone()),
        );
        let report = verify_scaling_symmetry(&ScalingAction::uniform(1, 2.0, 2.0), &h, 16, 3);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn verifier_is_deterministic() {
        let h = kepler_two_body();
        let a = verify_scaling_symmetry(&ScalingAction::kepler(6), &h, 8, 42);
        let b = verify_scaling_symmetry(&ScalingAction::kepler(6), &h, 8, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn custom_action_self_checks() {
        let a = quadratic_action(1.0, 0.0);
        // free particle; not invariant in general, only the action checks matter here
        let h = FnField::new(
            |z: &PhasePoint| 0.5 * z.p.norm_squared(),
            |z: &PhasePoint| (DVector::zeros(z.dim()), z.p.clone()),
        );
        let report = verify_scaling_symmetry(&a, &h, 16, 1);
        for name in [
            CHECK_SYMPLECTIC,
            CHECK_MOMENTUM,
            CHECK_SCALING_FUNCTION,
            CHECK_MOMENTUM_INVARIANCE,
            CHECK_ACTION_JACOBIAN,
            CHECK_GENERATOR,
            CHECK_GROUP_LAW,
        ] {
            let check = report.check(name).unwrap();
            assert!(check.passed, "{check:?}");
        }
    }

    fn phase_point(n: usize) -> impl Strategy<Value = PhasePoint> {
        (
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(-2.0..2.0f64, n),
        )
            .prop_map(|(q, p)| PhasePoint::from_slices(&q, &p).unwrap())
    }

    proptest! {
        #[test]
        fn group_law(z in phase_point(2), g in 0.2..5.0f64, h in 0.2..5.0f64, c in -1.0..2.0f64) {
            for a in [ScalingAction::dilation(v(&[1.0, 2.0]), c, 0.0), quadratic_action(c, 0.0)] {
                let direct = a.act_phase(g * h, &z).unwrap();
                let composed = a.act_phase(g, &a.act_phase(h, &z).unwrap()).unwrap();
                let scale = direct.stacked().amax().max(1.0);
                prop_assert!((direct.stacked() - composed.stacked()).amax() / scale <= 1e-10);
            }
        }

        #[test]
        fn generator_is_flow_derivative(z in phase_point(2), xi in -2.0..2.0f64, c in -1.0..2.0f64) {
            for a in [ScalingAction::dilation(v(&[1.0, -0.5]), c, 0.0), quadratic_action(c, 0.0)] {
                let fd = fd_jacobian(
                    |t| a.act_phase((t[0] * xi).exp(), &z).map(|y| y.stacked()),
                    &DVector::from_element(1, 0.0),
                ).unwrap();
                let gen = a.generator_phase(xi, &z).stacked();
                prop_assert!((fd.column(0) - &gen).amax() <= 1e-6 * gen.amax().max(1.0));
            }
        }

        #[test]
        fn theta_pulls_back_conformally(
            z in phase_point(2),
            dq in prop::collection::vec(-1.0..1.0f64, 2),
            dp in prop::collection::vec(-1.0..1.0f64, 2),
            g in 0.3..3.0f64,
            c in -1.0..2.0f64,
        ) {
            let tv = TangentVector::from_slices(&dq, &dp).unwrap();
            for a in [ScalingAction::dilation(v(&[1.0, 2.0]), c, 0.0), quadratic_action(c, 0.0)] {
                let jac = fd_jacobian(
                    |w| a.act_phase(g, &PhasePoint::from_stacked(w)).map(|y| y.stacked()),
                    &z.stacked(),
                ).unwrap();
                let pushed = TangentVector::from_stacked(&(jac * tv.stacked()));
                let lhs = canonical_theta(&a.act_phase(g, &z).unwrap(), &pushed).unwrap();
                let rhs = g.powf(c) * canonical_theta(&z, &tv).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1.0));
            }
        }
    }
}
