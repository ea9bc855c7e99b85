//! Canonical structure of `T*Q = R^n x R^n` in coordinates.
//!
//! The sign convention is fixed crate-wide: `theta = p dq` and
//! `omega = -d theta = dq ^ dp`, represented on stacked `(dq, dp)` vectors by
//! the block matrix `[[0, I], [-I, 0]]` (see [`omega_matrix`]).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhaseError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("phase space must have dimension n >= 1")]
    Empty,
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("non-finite gradient")]
    NonFiniteGradient,
}

/// A point `(q, p)` of the cotangent bundle in canonical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
}

impl PhasePoint {
    pub fn new(q: DVector<f64>, p: DVector<f64>) -> Result<Self, PhaseError> {
        if q.is_empty() {
            return Err(PhaseError::Empty);
        }
        if q.len() != p.len() {
            return Err(PhaseError::DimensionMismatch {
                expected: q.len(),
                found: p.len(),
            });
        }
        if let Some(index) = q.iter().chain(p.iter()).position(|x| !x.is_finite()) {
            return Err(PhaseError::NonFinite { index });
        }
        Ok(Self { q, p })
    }

    pub fn from_slices(q: &[f64], p: &[f64]) -> Result<Self, PhaseError> {
        Self::new(DVector::from_column_slice(q), DVector::from_column_slice(p))
    }

    /// Builds a point from a stacked `(q, p)` vector of even length.
    ///
    /// No finiteness check is made; this is the hot path for integrators and
    /// finite differences.
    pub fn from_stacked(z: &DVector<f64>) -> Self {
        let n = z.len() / 2;
        Self {
            q: z.rows(0, n).into_owned(),
            p: z.rows(n, n).into_owned(),
        }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.dim();
        let mut z = DVector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(&self.q);
        z.rows_mut(n, n).copy_from(&self.p);
        z
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|x| x.is_finite())
    }
}

/// A tangent vector `(dq, dp)` at some phase point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub dq: DVector<f64>,
    pub dp: DVector<f64>,
}

impl TangentVector {
    pub fn new(dq: DVector<f64>, dp: DVector<f64>) -> Result<Self, PhaseError> {
        if dq.len() != dp.len() {
            return Err(PhaseError::DimensionMismatch {
                expected: dq.len(),
                found: dp.len(),
            });
        }
        Ok(Self { dq, dp })
    }

    pub fn from_slices(dq: &[f64], dp: &[f64]) -> Result<Self, PhaseError> {
        Self::new(
            DVector::from_column_slice(dq),
            DVector::from_column_slice(dp),
        )
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            dq: DVector::zeros(n),
            dp: DVector::zeros(n),
        }
    }

    pub fn from_stacked(v: &DVector<f64>) -> Self {
        let n = v.len() / 2;
        Self {
            dq: v.rows(0, n).into_owned(),
            dp: v.rows(n, n).into_owned(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dq.len()
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.dim();
        let mut v = DVector::zeros(2 * n);
        v.rows_mut(0, n).copy_from(&self.dq);
        v.rows_mut(n, n).copy_from(&self.dp);
        v
    }

    pub fn max_abs_diff(&self, other: &TangentVector) -> f64 {
        (&self.dq - &other.dq)
            .amax()
            .max((&self.dp - &other.dp).amax())
    }
}

/// A real function on phase space together with its gradient.
///
/// Implementors without an analytic gradient may rely on the default, which
/// is a central finite difference of [`ScalarField::value`].
pub trait ScalarField {
    fn value(&self, z: &PhasePoint) -> f64;

    /// `(dF/dq, dF/dp)` at `z`. Non-finite entries signal an invalid point.
    fn gradient(&self, z: &PhasePoint) -> (DVector<f64>, DVector<f64>) {
        fd_phase_gradient(|w| self.value(w), z)
    }

    /// Smallest pairwise body separation at `q`, for systems with collisions.
    fn collision_distance(&self, _q: &DVector<f64>) -> Option<f64> {
        None
    }

    /// Kinetic part of the field. The default `p . dF/dp / 2` is exact for
    /// fields quadratic in the momenta.
    fn kinetic_energy(&self, z: &PhasePoint) -> f64 {
        0.5 * z.p.dot(&self.gradient(z).1)
    }
}

impl<T: ScalarField + ?Sized> ScalarField for &T {
    fn value(&self, z: &PhasePoint) -> f64 {
        (**self).value(z)
    }
    fn gradient(&self, z: &PhasePoint) -> (DVector<f64>, DVector<f64>) {
        (**self).gradient(z)
    }
    fn collision_distance(&self, q: &DVector<f64>) -> Option<f64> {
        (**self).collision_distance(q)
    }
    fn kinetic_energy(&self, z: &PhasePoint) -> f64 {
        (**self).kinetic_energy(z)
    }
}

/// A scalar field built from closures.
pub struct FnField<V, G = fn(&PhasePoint) -> (DVector<f64>, DVector<f64>)> {
    value: V,
    gradient: Option<G>,
}

impl<V> FnField<V>
where
    V: Fn(&PhasePoint) -> f64,
{
    /// Value only; the gradient falls back to finite differences.
    pub fn value_only(value: V) -> Self {
        Self {
            value,
            gradient: None,
        }
    }
}

impl<V, G> FnField<V, G>
where
    V: Fn(&PhasePoint) -> f64,
    G: Fn(&PhasePoint) -> (DVector<f64>, DVector<f64>),
{
    pub fn new(value: V, gradient: G) -> Self {
        Self {
            value,
            gradient: Some(gradient),
        }
    }
}

impl<V, G> ScalarField for FnField<V, G>
where
    V: Fn(&PhasePoint) -> f64,
    G: Fn(&PhasePoint) -> (DVector<f64>, DVector<f64>),
{
    fn value(&self, z: &PhasePoint) -> f64 {
        (self.value)(z)
    }

    fn gradient(&self, z: &PhasePoint) -> (DVector<f64>, DVector<f64>) {
        match &self.gradient {
            Some(g) => g(z),
            None => fd_phase_gradient(|w| (self.value)(w), z),
        }
    }
}

/// The canonical matrix `[[0, I], [-I, 0]]` of size `2n x 2n`.
pub fn omega_matrix(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, n + i)] = 1.0;
        m[(n + i, i)] = -1.0;
    }
    m
}

/// Liouville one-form `theta = p dq` evaluated on `v` at `z`.
pub fn canonical_theta(z: &PhasePoint, v: &TangentVector) -> Result<f64, PhaseError> {
    check_dim(z.dim(), v.dim())?;
    Ok(z.p.dot(&v.dq))
}

/// Canonical two-form `omega = dq ^ dp`.
pub fn canonical_omega(u: &TangentVector, v: &TangentVector) -> Result<f64, PhaseError> {
    check_dim(u.dim(), v.dim())?;
    Ok(u.dq.dot(&v.dp) - u.dp.dot(&v.dq))
}

/// The conformal vector field `X_F^c = (dF/dp, -dF/dq + c p)`.
///
/// It is the unique field with `i_X omega + c theta = dF`; `c = 0` gives the
/// ordinary Hamiltonian vector field.
pub fn conformal_vector_field<F: ScalarField + ?Sized>(
    field: &F,
    c: f64,
    z: &PhasePoint,
) -> Result<TangentVector, PhaseError> {
    let (dq, dp) = field.gradient(z);
    check_dim(z.dim(), dq.len())?;
    check_dim(z.dim(), dp.len())?;
    if !dq.iter().chain(dp.iter()).all(|x| x.is_finite()) {
        return Err(PhaseError::NonFiniteGradient);
    }
    Ok(TangentVector {
        dq: dp,
        dp: -dq + &z.p * c,
    })
}

fn check_dim(expected: usize, found: usize) -> Result<(), PhaseError> {
    if expected != found {
        return Err(PhaseError::DimensionMismatch { expected, found });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FdError {
    #[error("non-finite function value while probing coordinate {index}")]
    NonFinite { index: usize },
}

/// Step used for coordinate `x_i`: `cbrt(eps) * max(1, |x_i|)`.
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Central-difference gradient of `f` at `x`.
pub fn fd_gradient<F>(f: F, x: &DVector<f64>) -> Result<DVector<f64>, FdError>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut grad = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let h = fd_step(x[i]);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(FdError::NonFinite { index: i });
        }
        grad[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Central-difference Jacobian of a vector map, one column per input
/// coordinate, using the same step rule as [`fd_gradient`].
pub fn fd_jacobian<F, E>(mut f: F, x: &DVector<f64>) -> Result<DMatrix<f64>, E>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>, E>,
{
    let mut jac: Option<DMatrix<f64>> = None;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let h = fd_step(x[i]);
        probe[i] = x[i] + h;
        let up = f(&probe)?;
        probe[i] = x[i] - h;
        let down = f(&probe)?;
        probe[i] = x[i];
        let jac = jac.get_or_insert_with(|| DMatrix::zeros(up.len(), x.len()));
        jac.set_column(i, &((up - down) / (2.0 * h)));
    }
    Ok(jac.unwrap_or_else(|| DMatrix::zeros(0, 0)))
}

/// Finite-difference phase-space gradient, NaN-filled if a probe is invalid.
pub fn fd_phase_gradient<F>(f: F, z: &PhasePoint) -> (DVector<f64>, DVector<f64>)
where
    F: Fn(&PhasePoint) -> f64,
{
    let n = z.dim();
    match fd_gradient(|w| f(&PhasePoint::from_stacked(w)), &z.stacked()) {
        Ok(g) => (g.rows(0, n).into_owned(), g.rows(n, n).into_owned()),
        Err(_) => (
            DVector::from_element(n, f64::NAN),
            DVector::from_element(n, f64::NAN),
        ),
    }
}
