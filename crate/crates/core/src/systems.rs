//! Concrete models: Newtonian n-body, homogeneous power laws, anisotropic
//! Kepler and the damped oscillator, plus the system JSON schema and a few
//! closed-form oracles.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibria::{MechanicalError, Potential, SimpleMechanicalSystem};
use crate::phase::{fd_gradient, PhasePoint, ScalarField};
use crate::scaling::{
    lift_exponent, verify_scaling_symmetry, Prober, ScalingAction, SymmetryReport, VerifyOptions,
};

/// Upper bounds on spec sizes accepted from JSON.
pub const MAX_BODIES: usize = 256;
pub const MAX_DIM: usize = 3;

pub const DEFAULT_SYMMETRY_SAMPLES: usize = 32;
pub const HOMOGENEITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("invalid system spec: {0}")]
    Schema(String),
    #[error("collision: separation {distance:e} below threshold")]
    Collision { distance: f64 },
    #[error("{what} is not homogeneous under the action (spread {spread:e})")]
    NotHomogeneous { what: &'static str, spread: f64 },
    #[error("scaling symmetry verification failed")]
    SymmetryFailure(Box<SymmetryReport>),
    #[error("no sign change of the collinear balance residual")]
    NoBracket,
    #[error(transparent)]
    Mechanical(#[from] MechanicalError),
}

fn schema(msg: impl Into<String>) -> SystemError {
    SystemError::Schema(msg.into())
}

/// `N` point masses in `R^d` with `G = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBodySpec {
    pub masses: Vec<f64>,
    pub dim: usize,
}

impl NBodySpec {
    pub fn new(masses: Vec<f64>, dim: usize) -> Result<Self, SystemError> {
        validate_masses(&masses)?;
        if dim == 0 || dim > MAX_DIM {
            return Err(schema(format!("dim must be in 1..={MAX_DIM}, got {dim}")));
        }
        Ok(Self { masses, dim })
    }

    pub fn bodies(&self) -> usize {
        self.masses.len()
    }

    pub fn config_dim(&self) -> usize {
        self.masses.len() * self.dim
    }
}

fn validate_masses(masses: &[f64]) -> Result<(), SystemError> {
    if masses.is_empty() || masses.len() > MAX_BODIES {
        return Err(schema(format!(
            "need 1..={MAX_BODIES} masses, got {}",
            masses.len()
        )));
    }
    if !masses.iter().all(|m| m.is_finite() && *m > 0.0) {
        return Err(schema("masses must be positive and finite"));
    }
    Ok(())
}

fn body<'a>(q: &'a DVector<f64>, i: usize, d: usize) -> nalgebra::DVectorView<'a, f64> {
    q.rows(i * d, d)
}

fn min_pairwise(q: &DVector<f64>, bodies: usize, d: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..bodies {
        for j in i + 1..bodies {
            best = best.min((body(q, i, d) - body(q, j, d)).norm());
        }
    }
    best
}

/// Value and analytic gradient of `U = -sum_{i<j} m_i m_j / |q_i - q_j|`.
pub fn nbody_potential_and_gradient(
    spec: &NBodySpec,
    q: &DVector<f64>,
    collision_threshold: f64,
) -> Result<(f64, DVector<f64>), SystemError> {
    let d = spec.dim;
    if q.len() != spec.config_dim() {
        return Err(schema(format!(
            "configuration has length {}, expected {}",
            q.len(),
            spec.config_dim()
        )));
    }
    let distance = min_pairwise(q, spec.bodies(), d);
    if !(distance > collision_threshold) && spec.bodies() > 1 {
        return Err(SystemError::Collision { distance });
    }
    let pot = NBodyPotential { spec: spec.clone() };
    Ok((pot.value(q), pot.gradient(q)))
}

#[derive(Debug, Clone)]
pub struct NBodyPotential {
    pub spec: NBodySpec,
}

impl Potential for NBodyPotential {
    fn dim(&self) -> usize {
        self.spec.config_dim()
    }

    fn value(&self, q: &DVector<f64>) -> f64 {
        let (m, d) = (&self.spec.masses, self.spec.dim);
        let mut u = 0.0;
        for i in 0..m.len() {
            for j in i + 1..m.len() {
                u -= m[i] * m[j] / (body(q, i, d) - body(q, j, d)).norm();
            }
        }
        u
    }

    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        let (m, d) = (&self.spec.masses, self.spec.dim);
        let mut g = DVector::zeros(q.len());
        for i in 0..m.len() {
            for j in i + 1..m.len() {
                let r = body(q, i, d) - body(q, j, d);
                let f = &r * (m[i] * m[j] / r.norm().powi(3));
                let mut gi = g.rows_mut(i * d, d);
                gi += &f;
                let mut gj = g.rows_mut(j * d, d);
                gj -= &f;
            }
        }
        g
    }

    fn degree(&self) -> Option<f64> {
        Some(-1.0)
    }

    fn translation_dim(&self) -> Option<usize> {
        Some(self.spec.dim)
    }

    fn min_separation(&self, q: &DVector<f64>) -> Option<f64> {
        (self.spec.bodies() > 1).then(|| min_pairwise(q, self.spec.bodies(), self.spec.dim))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerLawForm {
    /// `U = sum_{i<j} m_i m_j |q_i - q_j|^alpha / alpha`.
    Pairwise,
    /// `U = sum_i m_i |q_i|^alpha / alpha`.
    Central,
}

/// Power-law potential homogeneous of degree `alpha != 0`. `alpha = -1`,
/// pairwise, is the Newtonian potential.
#[derive(Debug, Clone)]
pub struct PowerLawPotential {
    pub masses: Vec<f64>,
    pub dim: usize,
    pub alpha: f64,
    pub form: PowerLawForm,
}

impl PowerLawPotential {
    fn term(&self, r: f64) -> f64 {
        r.powf(self.alpha) / self.alpha
    }

    /// `d/dr (r^alpha / alpha) / r`.
    fn radial(&self, r: f64) -> f64 {
        r.powf(self.alpha - 2.0)
    }
}

impl Potential for PowerLawPotential {
    fn dim(&self) -> usize {
        self.masses.len() * self.dim
    }

    fn value(&self, q: &DVector<f64>) -> f64 {
        let (m, d) = (&self.masses, self.dim);
        match self.form {
            PowerLawForm::Pairwise => {
                let mut u = 0.0;
                for i in 0..m.len() {
                    for j in i + 1..m.len() {
                        u += m[i] * m[j] * self.term((body(q, i, d) - body(q, j, d)).norm());
                    }
                }
                u
            }
            PowerLawForm::Central => (0..m.len())
                .map(|i| m[i] * self.term(body(q, i, d).norm()))
                .sum(),
        }
    }

    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        let (m, d) = (&self.masses, self.dim);
        let mut g = DVector::zeros(q.len());
        match self.form {
            PowerLawForm::Pairwise => {
                for i in 0..m.len() {
                    for j in i + 1..m.len() {
                        let r = body(q, i, d) - body(q, j, d);
                        let f = &r * (m[i] * m[j] * self.radial(r.norm()));
                        let mut gi = g.rows_mut(i * d, d);
                        gi += &f;
                        let mut gj = g.rows_mut(j * d, d);
                        gj -= &f;
                    }
                }
            }
            PowerLawForm::Central => {
                for (i, &mi) in m.iter().enumerate() {
                    let qi = body(q, i, d);
                    let f = qi * (mi * self.radial(qi.norm()));
                    g.rows_mut(i * d, d).copy_from(&f);
                }
            }
        }
        g
    }

    fn degree(&self) -> Option<f64> {
        Some(self.alpha)
    }

    fn translation_dim(&self) -> Option<usize> {
        (self.form == PowerLawForm::Pairwise).then_some(self.dim)
    }

    fn min_separation(&self, q: &DVector<f64>) -> Option<f64> {
        if self.alpha > 0.0 {
            return None;
        }
        match self.form {
            PowerLawForm::Pairwise => {
                (self.masses.len() > 1).then(|| min_pairwise(q, self.masses.len(), self.dim))
            }
            PowerLawForm::Central => Some(
                (0..self.masses.len())
                    .map(|i| body(q, i, self.dim).norm())
                    .fold(f64::INFINITY, f64::min),
            ),
        }
    }
}

type PotentialFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// A user-supplied homogeneous potential, checked numerically on
/// construction.
#[derive(Clone)]
pub struct HomogeneousPotential {
    pub alpha: f64,
    dim: usize,
    u: Arc<PotentialFn>,
    grad: Arc<GradientFn>,
}

impl fmt::Debug for HomogeneousPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HomogeneousPotential")
            .field("alpha", &self.alpha)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl HomogeneousPotential {
    pub fn new(
        alpha: f64,
        dim: usize,
        u: Arc<PotentialFn>,
        grad: Arc<GradientFn>,
    ) -> Result<Self, SystemError> {
        let pot = Self {
            alpha,
            dim,
            u,
            grad,
        };
        let spread = homogeneity_residual(&pot, alpha, 16, 0);
        if !(spread <= HOMOGENEITY_TOLERANCE) {
            return Err(SystemError::NotHomogeneous {
                what: "potential",
                spread,
            });
        }
        Ok(pot)
    }

    /// `U = |q|^2 / 2` on `R^n`.
    pub fn harmonic(dim: usize) -> Self {
        Self {
            alpha: 2.0,
            dim,
            u: Arc::new(|q| 0.5 * q.norm_squared()),
            grad: Arc::new(|q| q.clone()),
        }
    }
}

impl Potential for HomogeneousPotential {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, q: &DVector<f64>) -> f64 {
        (self.u)(q)
    }
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        (self.grad)(q)
    }
    fn degree(&self) -> Option<f64> {
        Some(self.alpha)
    }
}

/// `U(q) = -m (mu q_1^2 + q_2^2)^{-1/2}` on `R^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisotropicKepler {
    pub mu: f64,
    pub mass: f64,
}

impl Potential for AnisotropicKepler {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, q: &DVector<f64>) -> f64 {
        -self.mass / (self.mu * q[0] * q[0] + q[1] * q[1]).sqrt()
    }
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        let s = (self.mu * q[0] * q[0] + q[1] * q[1]).powf(-1.5) * self.mass;
        DVector::from_vec(vec![self.mu * q[0] * s, q[1] * s])
    }
    fn degree(&self) -> Option<f64> {
        Some(-1.0)
    }
    fn min_separation(&self, q: &DVector<f64>) -> Option<f64> {
        Some(q.norm())
    }
}

/// `F = p^2/2 + q^2/2` with conformal parameter `c = -friction`, i.e.
/// `q'' = -friction q' - q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampedOscillator {
    pub friction: f64,
}

impl DampedOscillator {
    pub fn conformal_parameter(&self) -> f64 {
        -self.friction
    }

    /// Closed-form flow for `friction < 2` (under-damped).
    pub fn solution(&self, z0: (f64, f64), t: f64) -> (f64, f64) {
        let m = self.flow_matrix(t);
        (
            m[(0, 0)] * z0.0 + m[(0, 1)] * z0.1,
            m[(1, 0)] * z0.0 + m[(1, 1)] * z0.1,
        )
    }

    /// `exp(t [[0, 1], [-1, -friction]])` for `friction < 2`.
    pub fn flow_matrix(&self, t: f64) -> DMatrix<f64> {
        let g = 0.5 * self.friction;
        let w = (1.0 - g * g).sqrt();
        let e = (-g * t).exp();
        let (s, c) = ((w * t).sin(), (w * t).cos());
        DMatrix::from_row_slice(
            2,
            2,
            &[
                e * (c + g / w * s),
                e * s / w,
                -e * s / w,
                e * (c - g / w * s),
            ],
        )
    }
}

impl ScalarField for DampedOscillator {
    fn value(&self, z: &PhasePoint) -> f64 {
        0.5 * z.p.norm_squared() + 0.5 * z.q.norm_squared()
    }
    fn gradient(&self, z: &PhasePoint) -> (DVector<f64>, DVector<f64>) {
        (z.q.clone(), z.p.clone())
    }
    fn kinetic_energy(&self, z: &PhasePoint) -> f64 {
        0.5 * z.p.norm_squared()
    }
}

/// Max over probes of `|U(g q) - g^alpha U(q)| / max(1, |g^alpha U(q)|)`
/// under the uniform dilation.
pub fn homogeneity_residual<P: Potential + ?Sized>(
    pot: &P,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut prober = Prober::new(seed, VerifyOptions::default());
    let mut worst: f64 = 0.0;
    for k in 0..samples.max(1) {
        let g = prober.group_element(k);
        let q = probe_config(&mut prober, pot);
        let expected = g.powf(alpha) * pot.value(&q);
        let r = (pot.value(&(&q * g)) - expected).abs() / expected.abs().max(1.0);
        worst = if r.is_nan() {
            f64::INFINITY
        } else {
            worst.max(r)
        };
    }
    worst
}

/// Max over probes of the relative error between the analytic gradient and
/// [`fd_gradient`].
pub fn gradient_check<P: Potential + ?Sized>(pot: &P, samples: usize, seed: u64) -> f64 {
    let mut prober = Prober::new(seed, VerifyOptions::default());
    let mut worst: f64 = 0.0;
    for _ in 0..samples.max(1) {
        let q = probe_config(&mut prober, pot);
        let analytic = pot.gradient(&q);
        let r = match fd_gradient(|x| pot.value(x), &q) {
            Ok(fd) => (fd - &analytic).amax() / analytic.amax().max(1.0),
            Err(_) => f64::INFINITY,
        };
        worst = if r.is_nan() {
            f64::INFINITY
        } else {
            worst.max(r)
        };
    }
    worst
}

fn probe_config<P: Potential + ?Sized>(prober: &mut Prober, pot: &P) -> DVector<f64> {
    loop {
        let q = prober.vector(pot.dim());
        if pot.min_separation(&q).is_none_or(|d| d > 0.1) && pot.value(&q).is_finite() {
            return q;
        }
    }
}

/// Weight `a` with `K(DPsi_g v) = g^a K(v)` for `K(v) = v^T M v / 2`.
pub fn measure_kinetic_weight(
    system: &SimpleMechanicalSystem,
    action: &ScalingAction,
    samples: usize,
    seed: u64,
) -> Result<f64, SystemError> {
    let mut prober = Prober::new(seed, VerifyOptions::default());
    let mut weights = Vec::with_capacity(samples);
    for k in 0..samples.max(1) {
        let g = prober.group_element(k);
        let q = prober.vector(system.dim());
        let v = prober.vector(system.dim());
        let moved = action
            .config_jacobian(g, &q)
            .map_err(|e| schema(e.to_string()))?
            * &v;
        let kin = |w: &DVector<f64>| 0.5 * w.dot(&(system.mass() * w));
        weights.push((kin(&moved) / kin(&v)).ln() / g.ln());
    }
    consistent_weight(&weights, "kinetic energy")
}

/// Weight `b` with `U(Psi_g q) = g^b U(q)`.
pub fn measure_potential_weight(
    system: &SimpleMechanicalSystem,
    action: &ScalingAction,
    samples: usize,
    seed: u64,
) -> Result<f64, SystemError> {
    let pot = system.potential();
    let mut prober = Prober::new(seed, VerifyOptions::default());
    let mut weights = Vec::with_capacity(samples);
    for k in 0..samples.max(1) {
        let g = prober.group_element(k);
        let q = probe_config(&mut prober, pot);
        let moved = action
            .act_config(g, &q)
            .map_err(|e| schema(e.to_string()))?;
        weights.push((pot.value(&moved) / pot.value(&q)).ln() / g.ln());
    }
    consistent_weight(&weights, "potential")
}

fn consistent_weight(weights: &[f64], what: &'static str) -> Result<f64, SystemError> {
    let lo = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = hi - lo;
    if !(spread <= HOMOGENEITY_TOLERANCE) {
        return Err(SystemError::NotHomogeneous { what, spread });
    }
    // weights are measured through logarithms; snap to the nearest 1e-9
    Ok((0.5 * (lo + hi) * 1e9).round() / 1e9)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Nbody,
    Homogeneous,
    AnisotropicKepler,
    DampedOscillator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKindSpec {
    Dilation,
}

/// Action fragment of the system schema. Missing exponents are derived:
/// `b` from the potential, `a` measured, `c = (a + b) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    pub kind: ActionKindSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

/// The system JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(rename = "type")]
    pub kind: SystemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<PowerLawForm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionSpec>,
}

impl SystemSpec {
    pub fn nbody(masses: Vec<f64>, dim: usize) -> Self {
        Self {
            kind: SystemKind::Nbody,
            masses: Some(masses),
            dim: Some(dim),
            alpha: None,
            mu: None,
            b: None,
            form: None,
            action: None,
        }
    }

    pub fn damped_oscillator(friction: f64) -> Self {
        Self {
            kind: SystemKind::DampedOscillator,
            masses: None,
            dim: None,
            alpha: None,
            mu: None,
            b: Some(friction),
            form: None,
            action: None,
        }
    }

    /// Length of a configuration vector for this system. Assumes a validated
    /// spec.
    pub fn config_dim(&self) -> usize {
        match self.kind {
            SystemKind::Nbody | SystemKind::Homogeneous => {
                self.masses.as_ref().map_or(0, Vec::len) * self.dim.unwrap_or(0)
            }
            SystemKind::AnisotropicKepler => 2,
            SystemKind::DampedOscillator => 1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("system specs serialize")
    }

    pub fn with_action(mut self, action: ActionSpec) -> Self {
        self.action = Some(action);
        self
    }
}

/// Parses and validates a system spec.
pub fn parse_system_spec(text: &str) -> Result<SystemSpec, SystemError> {
    let spec: SystemSpec = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    validate_spec(&spec)?;
    Ok(spec)
}

fn finite(name: &str, x: f64) -> Result<f64, SystemError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(schema(format!("{name} must be finite")))
    }
}

pub(crate) fn validate_spec(spec: &SystemSpec) -> Result<(), SystemError> {
    let require = |present: bool, field: &str| {
        if present {
            Ok(())
        } else {
            Err(schema(format!(
                "{:?} system requires \"{field}\"",
                spec.kind
            )))
        }
    };
    let forbid = |present: bool, field: &str| {
        if present {
            Err(schema(format!(
                "\"{field}\" is not valid for {:?} systems",
                spec.kind
            )))
        } else {
            Ok(())
        }
    };
    match spec.kind {
        SystemKind::Nbody => {
            require(spec.masses.is_some(), "masses")?;
            require(spec.dim.is_some(), "dim")?;
            forbid(spec.alpha.is_some(), "alpha")?;
            forbid(spec.mu.is_some(), "mu")?;
            forbid(spec.b.is_some(), "b")?;
            forbid(spec.form.is_some(), "form")?;
            NBodySpec::new(
                spec.masses.clone().unwrap_or_default(),
                spec.dim.unwrap_or(0),
            )?;
        }
        SystemKind::Homogeneous => {
            require(spec.masses.is_some(), "masses")?;
            require(spec.dim.is_some(), "dim")?;
            require(spec.alpha.is_some(), "alpha")?;
            forbid(spec.mu.is_some(), "mu")?;
            forbid(spec.b.is_some(), "b")?;
            NBodySpec::new(
                spec.masses.clone().unwrap_or_default(),
                spec.dim.unwrap_or(0),
            )?;
            let alpha = finite("alpha", spec.alpha.unwrap_or(0.0))?;
            if alpha == 0.0 {
                return Err(schema("alpha must be nonzero"));
            }
        }
        SystemKind::AnisotropicKepler => {
            require(spec.mu.is_some(), "mu")?;
            forbid(spec.alpha.is_some(), "alpha")?;
            forbid(spec.b.is_some(), "b")?;
            forbid(spec.form.is_some(), "form")?;
            let mu = finite("mu", spec.mu.unwrap_or(0.0))?;
            if !(mu > 0.0) {
                return Err(schema("mu must be positive"));
            }
            if spec.dim.is_some_and(|d| d != 2) {
                return Err(schema("anisotropic Kepler lives in dim 2"));
            }
            if let Some(m) = &spec.masses {
                validate_masses(m)?;
                if m.len() != 1 {
                    return Err(schema("anisotropic Kepler has exactly one mass"));
                }
            }
        }
        SystemKind::DampedOscillator => {
            require(spec.b.is_some(), "b")?;
            forbid(spec.masses.is_some(), "masses")?;
            forbid(spec.alpha.is_some(), "alpha")?;
            forbid(spec.mu.is_some(), "mu")?;
            forbid(spec.form.is_some(), "form")?;
            forbid(spec.action.is_some(), "action")?;
            if spec.dim.is_some_and(|d| d != 1) {
                return Err(schema("damped oscillator lives in dim 1"));
            }
            finite("b", spec.b.unwrap_or(0.0))?;
        }
    }
    if let Some(action) = &spec.action {
        if let Some(w) = &action.weights {
            if !w.iter().all(|x| x.is_finite()) {
                return Err(schema("action weights must be finite"));
            }
        }
        for (name, x) in [("c", action.c), ("b", action.b)] {
            if let Some(x) = x {
                finite(name, x)?;
            }
        }
    }
    Ok(())
}

/// A constructed model: either a simple mechanical system with its scaling
/// action, or a conformal system without one.
#[derive(Debug, Clone)]
pub enum BuiltSystem {
    Mechanical {
        system: SimpleMechanicalSystem,
        action: ScalingAction,
        kinetic_weight: f64,
    },
    Conformal {
        field: DampedOscillator,
    },
}

impl BuiltSystem {
    pub fn field(&self) -> &dyn ScalarField {
        match self {
            BuiltSystem::Mechanical { system, .. } => system,
            BuiltSystem::Conformal { field } => field,
        }
    }

    /// `c` used when integrating the system's own dynamics.
    pub fn conformal_parameter(&self) -> f64 {
        match self {
            BuiltSystem::Mechanical { .. } => 0.0,
            BuiltSystem::Conformal { field } => field.conformal_parameter(),
        }
    }

    pub fn action(&self) -> Option<&ScalingAction> {
        match self {
            BuiltSystem::Mechanical { action, .. } => Some(action),
            BuiltSystem::Conformal { .. } => None,
        }
    }

    pub fn mechanical(&self) -> Option<(&SimpleMechanicalSystem, &ScalingAction)> {
        match self {
            BuiltSystem::Mechanical { system, action, .. } => Some((system, action)),
            BuiltSystem::Conformal { .. } => None,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BuiltSystem::Mechanical { system, .. } => system.dim(),
            BuiltSystem::Conformal { .. } => 1,
        }
    }
}

/// Builds the model described by `spec` without running the symmetry gate.
pub fn build_system(spec: &SystemSpec) -> Result<BuiltSystem, SystemError> {
    validate_spec(spec)?;
    let system = match spec.kind {
        SystemKind::DampedOscillator => {
            return Ok(BuiltSystem::Conformal {
                field: DampedOscillator {
                    friction: spec.b.unwrap_or(0.0),
                },
            })
        }
        SystemKind::Nbody => {
            let nb = NBodySpec::new(
                spec.masses.clone().unwrap_or_default(),
                spec.dim.unwrap_or(0),
            )?;
            let d = nb.dim;
            let masses = nb.masses.clone();
            let pot = Arc::new(NBodyPotential { spec: nb });
            SimpleMechanicalSystem::with_body_masses(&masses, d, pot)?
        }
        SystemKind::Homogeneous => {
            let masses = spec.masses.clone().unwrap_or_default();
            let d = spec.dim.unwrap_or(0);
            let pot = Arc::new(PowerLawPotential {
                masses: masses.clone(),
                dim: d,
                alpha: spec.alpha.unwrap_or(-1.0),
                form: spec.form.unwrap_or(PowerLawForm::Pairwise),
            });
            SimpleMechanicalSystem::with_body_masses(&masses, d, pot)?
        }
        SystemKind::AnisotropicKepler => {
            let mass = spec.masses.as_ref().map_or(1.0, |m| m[0]);
            let pot = Arc::new(AnisotropicKepler {
                mu: spec.mu.unwrap_or(1.0),
                mass,
            });
            SimpleMechanicalSystem::with_body_masses(&[mass], 2, pot)?
        }
    };
    let n = system.dim();

    let weights = match spec.action.as_ref().and_then(|a| a.weights.clone()) {
        None => DVector::from_element(n, 1.0),
        Some(w) if w.is_empty() => DVector::from_element(n, 1.0),
        Some(w) if w.len() == n => DVector::from_vec(w),
        Some(w) => {
            return Err(schema(format!(
                "action weights have length {}, expected {n}",
                w.len()
            )))
        }
    };
    let mut action = ScalingAction::dilation(weights, 0.0, 0.0);
    let kinetic_weight = measure_kinetic_weight(&system, &action, 8, 0)?;
    let b = match spec.action.as_ref().and_then(|a| a.b) {
        Some(b) => b,
        None => match system.potential().degree() {
            Some(alpha) if action.is_uniform_dilation() => alpha,
            _ => measure_potential_weight(&system, &action, 8, 0)?,
        },
    };
    let c = spec
        .action
        .as_ref()
        .and_then(|a| a.c)
        .unwrap_or_else(|| lift_exponent(kinetic_weight, b));
    action = action.with_exponents(c, b);
    Ok(BuiltSystem::Mechanical {
        system,
        action,
        kinetic_weight,
    })
}

/// Builds the model and certifies its scaling action; a failed certification
/// comes back as [`SystemError::SymmetryFailure`] carrying the report.
pub fn make_system(spec: &SystemSpec) -> Result<BuiltSystem, SystemError> {
    let built = build_system(spec)?;
    if let Some((system, action)) = built.mechanical() {
        let report = verify_scaling_symmetry(action, system, DEFAULT_SYMMETRY_SAMPLES, 0);
        if !report.passed() {
            return Err(SystemError::SymmetryFailure(Box::new(report)));
        }
    }
    Ok(built)
}

/// Interior coordinate `x` of the collinear central configuration with
/// bodies at `0, x, 1` (masses in that order), by bisection to `1e-12`.
///
/// The balance equation is written out directly: after shifting to the
/// center of mass, `xi^2 = -2U/I` and the middle body must satisfy
/// `dU/dq_2 = xi^2/2 m_2 q_2`.
pub fn euler_collinear_oracle(masses: [f64; 3]) -> Result<f64, SystemError> {
    validate_masses(&masses)?;
    let [m1, m2, m3] = masses;
    let balance = |x: f64| {
        let total = m1 + m2 + m3;
        let com = (m2 * x + m3) / total;
        let (a, b, c) = (-com, x - com, 1.0 - com);
        let u = -(m1 * m2 / x + m1 * m3 + m2 * m3 / (1.0 - x));
        let inertia = m1 * a * a + m2 * b * b + m3 * c * c;
        let xi2 = -2.0 * u / inertia;
        let grad = m1 * m2 / (x * x) - m2 * m3 / ((1.0 - x) * (1.0 - x));
        grad - 0.5 * xi2 * m2 * b
    };
    let (mut lo, mut hi) = (1e-9, 1.0 - 1e-9);
    let (f_lo, f_hi) = (balance(lo), balance(hi));
    if !(f_lo.signum() * f_hi.signum() < 0.0) {
        return Err(SystemError::NoBracket);
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        let f_mid = balance(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Equilateral triangle of the given side in `R^dim` (`dim >= 2`), in the
/// plane of the first two axes, with the center of mass at the origin.
pub fn lagrange_triangle(masses: [f64; 3], side: f64, dim: usize) -> DVector<f64> {
    let dim = dim.max(2);
    let r = side / 3f64.sqrt();
    let mut q = DVector::zeros(3 * dim);
    for k in 0..3 {
        let angle = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
        q[k * dim] = r * angle.cos();
        q[k * dim + 1] = r * angle.sin();
    }
    let total: f64 = masses.iter().sum();
    for axis in 0..2 {
        let com = (0..3).map(|k| masses[k] * q[k * dim + axis]).sum::<f64>() / total;
        for k in 0..3 {
            q[k * dim + axis] -= com;
        }
    }
    q
}
