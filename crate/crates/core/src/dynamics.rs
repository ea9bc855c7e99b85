//! Fixed-step integration of conformal Hamiltonian systems and numerical
//! certification of flow-level identities.
//!
//! The integrator is classical fourth-order Runge-Kutta with a uniform step,
//! so the time-`t` map is a smooth function of the initial state and can be
//! differentiated by finite differences.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibria::RelativeEquilibrium;
use crate::phase::{fd_jacobian, omega_matrix, PhasePoint, ScalarField};
use crate::scaling::{ScalingAction, ScalingError};

pub const DEFAULT_COLLISION_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("step and horizon must be positive (dt = {dt}, t_final = {t_final})")]
    InvalidStep { dt: f64, t_final: f64 },
    #[error("collision at t = {t}: separation {distance:e}")]
    Collision { t: f64, distance: f64 },
    #[error("close encounter at t = {t} not resolved by the step: moved {displacement:e} at separation {distance:e}")]
    UnresolvedEncounter {
        t: f64,
        distance: f64,
        displacement: f64,
    },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("window ends at {t_final} but the homothetic motion blows up at t = {blow_up}")]
    BlowUp { t_final: f64, blow_up: f64 },
    #[error("relative equilibrium is not certified")]
    Uncertified,
    #[error("trajectory is missing {0}")]
    MissingDiagnostics(&'static str),
    #[error("Noether series needs a Hamiltonian trajectory (c = 0), got c = {0}")]
    NotHamiltonian(f64),
    #[error(transparent)]
    Action(#[from] ScalingError),
}

/// Time-stamped states with per-node diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Conformal parameter used to produce the run, when known.
    pub c: Option<f64>,
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub hamiltonian: Vec<f64>,
    pub momentum: Vec<f64>,
    pub kinetic: Vec<f64>,
    /// `int_0^t theta(X_F) = p . dF/dp`, integrated alongside the state.
    pub int_theta: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, PhasePoint::dim)
    }

    pub fn final_state(&self) -> Option<&PhasePoint> {
        self.states.last()
    }

    fn check_diagnostics(&self) -> Result<(), DynamicsError> {
        let n = self.times.len();
        if n == 0 {
            return Err(DynamicsError::MissingDiagnostics("nodes"));
        }
        for (name, len) in [
            ("states", self.states.len()),
            ("H", self.hamiltonian.len()),
            ("J", self.momentum.len()),
            ("K", self.kinetic.len()),
            ("int_theta", self.int_theta.len()),
        ] {
            if len != n {
                return Err(DynamicsError::MissingDiagnostics(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    pub collision_threshold: f64,
    /// Action whose momentum map fills the `J` column; defaults to the
    /// uniform dilation (`J = p . q`).
    pub action: Option<ScalingAction>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            collision_threshold: DEFAULT_COLLISION_THRESHOLD,
            action: None,
        }
    }
}

fn step_count(t_final: f64, dt: f64) -> Result<usize, DynamicsError> {
    if !(dt > 0.0) || !(t_final > 0.0) || !dt.is_finite() || !t_final.is_finite() {
        return Err(DynamicsError::InvalidStep { dt, t_final });
    }
    Ok(((t_final / dt) - 1e-9).ceil().max(1.0) as usize)
}

/// `X_F^c` on the stacked state. An odd-length `z` carries a trailing
/// quadrature slot whose rate is `theta(X_F) = p . dF/dp`.
fn rate<F: ScalarField + ?Sized>(field: &F, c: f64, z: &DVector<f64>) -> DVector<f64> {
    let n = z.len() / 2;
    let point = PhasePoint::from_stacked(&z.rows(0, 2 * n).into_owned());
    let (gq, gp) = field.gradient(&point);
    let mut out = DVector::zeros(z.len());
    out.rows_mut(0, n).copy_from(&gp);
    out.rows_mut(n, n).copy_from(&(&point.p * c - gq));
    if z.len() % 2 == 1 {
        out[2 * n] = point.p.dot(&gp);
    }
    out
}

fn rk4_increment<F: ScalarField + ?Sized>(
    field: &F,
    c: f64,
    z: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let k1 = rate(field, c, z);
    let k2 = rate(field, c, &(z + &k1 * (0.5 * h)));
    let k3 = rate(field, c, &(z + &k2 * (0.5 * h)));
    let k4 = rate(field, c, &(z + &k3 * h));
    (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// RK4 state with Kahan-compensated accumulation of the increments.
struct Stepper {
    z: DVector<f64>,
    carry: DVector<f64>,
}

impl Stepper {
    fn new(z: DVector<f64>) -> Self {
        let carry = DVector::zeros(z.len());
        Self { z, carry }
    }

    fn step<F: ScalarField + ?Sized>(&mut self, field: &F, c: f64, h: f64) {
        let y = rk4_increment(field, c, &self.z, h) - &self.carry;
        let sum = &self.z + &y;
        self.carry = (&sum - &self.z) - y;
        self.z = sum;
    }
}

/// Rejects non-finite states, separations at or below `threshold`, and steps
/// that move `q` by at least half the smaller of the two node separations
/// (such a step can jump across a collision unseen).
fn guard<F: ScalarField + ?Sized>(
    field: &F,
    z: &DVector<f64>,
    prev: Option<&DVector<f64>>,
    t: f64,
    threshold: f64,
) -> Result<(), DynamicsError> {
    if !z.iter().all(|x| x.is_finite()) {
        return Err(DynamicsError::NonFinite { t });
    }
    let n = z.len() / 2;
    let q = z.rows(0, n).into_owned();
    if let Some(distance) = field.collision_distance(&q) {
        if !(distance > threshold) {
            return Err(DynamicsError::Collision { t, distance });
        }
        if let Some(prev) = prev {
            let prev_q = prev.rows(0, n).into_owned();
            let distance = field
                .collision_distance(&prev_q)
                .map_or(distance, |d| d.min(distance));
            let displacement = (&q - &prev_q).norm();
            if displacement >= 0.5 * distance {
                return Err(DynamicsError::UnresolvedEncounter {
                    t,
                    distance,
                    displacement,
                });
            }
        }
    }
    Ok(())
}

pub fn integrate<F: ScalarField + ?Sized>(
    field: &F,
    c: f64,
    z0: &PhasePoint,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory, DynamicsError> {
    integrate_with(field, c, z0, t_final, dt, &IntegrateOptions::default())
}

pub fn integrate_with<F: ScalarField + ?Sized>(
    field: &F,
    c: f64,
    z0: &PhasePoint,
    t_final: f64,
    dt: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory, DynamicsError> {
    let steps = step_count(t_final, dt)?;
    let h = t_final / steps as f64;
    let n = z0.dim();
    let uniform = ScalingAction::uniform(n, 0.0, 0.0);
    let action = opts.action.as_ref().unwrap_or(&uniform);

    let mut traj = Trajectory {
        c: Some(c),
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        hamiltonian: Vec::with_capacity(steps + 1),
        momentum: Vec::with_capacity(steps + 1),
        kinetic: Vec::with_capacity(steps + 1),
        int_theta: Vec::with_capacity(steps + 1),
    };
    let mut augmented = DVector::zeros(2 * n + 1);
    augmented.rows_mut(0, 2 * n).copy_from(&z0.stacked());
    let mut stepper = Stepper::new(augmented);
    for k in 0..=steps {
        let t = k as f64 * h;
        let prev = (k > 0).then(|| {
            let prev = stepper.z.clone();
            stepper.step(field, c, h);
            prev
        });
        guard(
            field,
            &stepper.z,
            prev.as_ref(),
            t,
            opts.collision_threshold,
        )?;
        let point = PhasePoint::from_stacked(&stepper.z.rows(0, 2 * n).into_owned());
        let integral = stepper.z[2 * n];
        traj.times.push(t);
        traj.hamiltonian.push(field.value(&point));
        traj.momentum.push(action.momentum(&point));
        traj.kinetic.push(field.kinetic_energy(&point));
        traj.int_theta.push(integral);
        traj.states.push(point);
    }
    Ok(traj)
}

/// Time-`t` flow map without diagnostics. `t = 0` returns `z0`.
pub fn flow_map<F: ScalarField + ?Sized>(
    field: &F,
    c: f64,
    z0: &PhasePoint,
    t: f64,
    dt: f64,
) -> Result<PhasePoint, DynamicsError> {
    if t == 0.0 {
        return Ok(z0.clone());
    }
    let steps = step_count(t, dt)?;
    let h = t / steps as f64;
    let mut stepper = Stepper::new(z0.stacked());
    for k in 1..=steps {
        let prev = stepper.z.clone();
        stepper.step(field, c, h);
        guard(
            field,
            &stepper.z,
            Some(&prev),
            k as f64 * h,
            DEFAULT_COLLISION_THRESHOLD,
        )?;
    }
    Ok(PhasePoint::from_stacked(&stepper.z))
}

/// Central-difference Jacobian of the time-`t` flow map.
pub fn flow_jacobian<F: ScalarField + ?Sized>(
    field: &F,
    c: f64,
    z0: &PhasePoint,
    t: f64,
    dt: f64,
) -> Result<DMatrix<f64>, DynamicsError> {
    if t == 0.0 {
        return Ok(DMatrix::identity(2 * z0.dim(), 2 * z0.dim()));
    }
    fd_jacobian(
        |w| flow_map(field, c, &PhasePoint::from_stacked(w), t, dt).map(|y| y.stacked()),
        &z0.stacked(),
    )
}

/// Defects of a flow certification run. Entries that were not computed are
/// `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub t: f64,
    pub dt: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conformal_defect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume_defect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_rate_defect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noether_drift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub homothetic_deviation: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

impl FlowReport {
    fn new(t: f64, dt: f64, tolerance: f64) -> Self {
        Self {
            t,
            dt,
            conformal_defect: None,
            volume_defect: None,
            energy_rate_defect: None,
            noether_drift: None,
            homothetic_deviation: None,
            tolerance,
            passed: false,
        }
    }

    pub fn max_defect(&self) -> f64 {
        [
            self.conformal_defect,
            self.volume_defect,
            self.energy_rate_defect,
            self.noether_drift,
            self.homothetic_deviation,
        ]
        .into_iter()
        .flatten()
        .fold(0.0, |acc, x| {
            if x.is_nan() {
                f64::INFINITY
            } else {
                acc.max(x)
            }
        })
    }

    fn settle(mut self) -> Self {
        self.passed = self.max_defect() <= self.tolerance;
        self
    }
}

pub const FLOW_TOLERANCE: f64 = 1e-5;

/// Checks `A^T Omega A = e^{ct} Omega`, `det A = e^{nct}` for the FD flow
/// Jacobian `A`, and the energy-rate law `dF/dt = c p . dF/dp` at every
/// interior node (central time differences).
pub fn verify_conformal_flow<F: ScalarField + ?Sized>(
    field: &F,
    c: f64,
    z0: &PhasePoint,
    t: f64,
    dt: f64,
) -> Result<FlowReport, DynamicsError> {
    let n = z0.dim();
    let jac = flow_jacobian(field, c, z0, t, dt)?;
    let omega = omega_matrix(n);
    let factor = (c * t).exp();
    let mut report = FlowReport::new(t, dt, FLOW_TOLERANCE);
    report.conformal_defect = Some((jac.transpose() * &omega * &jac - &omega * factor).amax());
    report.volume_defect = Some((jac.determinant() - (n as f64 * c * t).exp()).abs());

    let traj = integrate(field, c, z0, t, dt)?;
    let mut worst: f64 = 0.0;
    for k in 1..traj.len().saturating_sub(1) {
        let h = traj.times[k + 1] - traj.times[k - 1];
        let fd_rate = (traj.hamiltonian[k + 1] - traj.hamiltonian[k - 1]) / h;
        let z = &traj.states[k];
        let analytic = c * z.p.dot(&field.gradient(z).1);
        worst = worst.max((fd_rate - analytic).abs());
    }
    report.energy_rate_defect = Some(worst);
    Ok(report.settle())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoetherSeries {
    /// `F(t_k) = J + b H t - c int theta(X_H)`.
    pub values: Vec<f64>,
    pub max_drift: f64,
    /// `max_drift / max(1, |J(0)|, |H(0)|)`.
    pub relative_drift: f64,
}

/// Evaluates the conserved quantity of the Hamiltonian Noether theorem for a
/// scaling symmetry along a Hamiltonian (`c = 0`) trajectory. `J` is
/// recomputed from the states with `action`.
pub fn noether_series(
    action: &ScalingAction,
    traj: &Trajectory,
) -> Result<NoetherSeries, DynamicsError> {
    traj.check_diagnostics()?;
    if let Some(c) = traj.c.filter(|&c| c != 0.0) {
        return Err(DynamicsError::NotHamiltonian(c));
    }
    let values: Vec<f64> = traj
        .states
        .iter()
        .zip(&traj.times)
        .zip(traj.hamiltonian.iter().zip(&traj.int_theta))
        .map(|((z, &t), (&h, &int))| action.momentum(z) + action.b * h * t - action.c * int)
        .collect();
    let f0 = values[0];
    let max_drift = values.iter().map(|v| (v - f0).abs()).fold(0.0, f64::max);
    let scale = 1f64
        .max(action.momentum(&traj.states[0]).abs())
        .max(traj.hamiltonian[0].abs());
    Ok(NoetherSeries {
        values,
        max_drift,
        relative_drift: max_drift / scale,
    })
}

pub const NOETHER_TOLERANCE: f64 = 1e-6;

/// Integrates `hamiltonian` from `z0` and reports the relative drift of the
/// Noether quantity of `action`.
pub fn verify_noether<H: ScalarField + ?Sized>(
    hamiltonian: &H,
    action: &ScalingAction,
    z0: &PhasePoint,
    t_final: f64,
    dt: f64,
) -> Result<FlowReport, DynamicsError> {
    let opts = IntegrateOptions {
        action: Some(action.clone()),
        ..IntegrateOptions::default()
    };
    let traj = integrate_with(hamiltonian, 0.0, z0, t_final, dt, &opts)?;
    let series = noether_series(action, &traj)?;
    let mut report = FlowReport::new(t_final, dt, NOETHER_TOLERANCE);
    report.noether_drift = Some(series.relative_drift);
    Ok(report.settle())
}

/// Largest pointwise gap between the central-difference `dJ/dt` and
/// `-b H + c p . dH/dp` over interior nodes.
pub fn momentum_rate_defect<H: ScalarField + ?Sized>(
    hamiltonian: &H,
    action: &ScalingAction,
    traj: &Trajectory,
) -> Result<f64, DynamicsError> {
    traj.check_diagnostics()?;
    let j: Vec<f64> = traj.states.iter().map(|z| action.momentum(z)).collect();
    let mut worst: f64 = 0.0;
    for k in 1..traj.len().saturating_sub(1) {
        let fd = (j[k + 1] - j[k - 1]) / (traj.times[k + 1] - traj.times[k - 1]);
        let z = &traj.states[k];
        let expected =
            -action.b * hamiltonian.value(z) + action.c * z.p.dot(&hamiltonian.gradient(z).1);
        worst = worst.max((fd - expected).abs());
    }
    Ok(worst)
}

/// Group element carrying a relative equilibrium along its dynamical orbit:
/// `[(c - b) xi t + 1]^{1/(c - b)}`, or `e^{xi t}` when `b = c`.
pub fn homothetic_factor(c: f64, b: f64, xi: f64, t: f64) -> f64 {
    let k = c - b;
    if k == 0.0 {
        (xi * t).exp()
    } else {
        (k * xi * t + 1.0).powf(1.0 / k)
    }
}

/// First time at which the homothetic factor reaches zero or infinity, if any.
pub fn homothetic_blow_up(c: f64, b: f64, xi: f64) -> Option<f64> {
    let k = c - b;
    (k != 0.0 && k * xi < 0.0).then(|| -1.0 / (k * xi))
}

pub const HOMOTHETIC_TOLERANCE: f64 = 1e-6;

/// Integrates the Hamiltonian flow from a certified relative equilibrium and
/// reports the largest relative deviation from `Phi_{eta(t)}(z_e)`.
pub fn verify_homothetic_orbit<H: ScalarField + ?Sized>(
    hamiltonian: &H,
    action: &ScalingAction,
    re: &RelativeEquilibrium,
    t_final: f64,
    dt: f64,
) -> Result<FlowReport, DynamicsError> {
    if !re.certified {
        return Err(DynamicsError::Uncertified);
    }
    if let Some(blow_up) = homothetic_blow_up(action.c, action.b, re.xi) {
        if t_final >= blow_up {
            return Err(DynamicsError::BlowUp { t_final, blow_up });
        }
    }
    let ze = re.phase_point();
    let traj = integrate(hamiltonian, 0.0, &ze, t_final, dt)?;
    let mut worst: f64 = 0.0;
    for (t, z) in traj.times.iter().zip(&traj.states) {
        let eta = homothetic_factor(action.c, action.b, re.xi, *t);
        let predicted = action.act_phase(eta, &ze)?.stacked();
        let dev = (z.stacked() - &predicted).amax() / predicted.amax().max(f64::MIN_POSITIVE);
        worst = worst.max(dev);
    }
    let mut report = FlowReport::new(t_final, dt, HOMOTHETIC_TOLERANCE);
    report.homothetic_deviation = Some(worst);
    Ok(report.settle())
}
