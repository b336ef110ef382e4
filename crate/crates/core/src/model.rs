//! Mechanical parameters and the equations of motion of the Ziegler pendulum.
//!
//! The pendulum is a massless rod `OA` (length `l2`) pivoting about `O`, with a
//! second rigid bar `BC` attached at `A`. Point masses sit at `A` (`m2`), `B`
//! (`m1`, at distance `l1` from `A`) and `C` (`m3`, at distance `l3` on the other
//! side). Torsional springs act at `A` (`k1`, on the relative angle `phi1`) and
//! at `O` (`k2`, on the absolute angle `phi2`). A follower force of magnitude `F`
//! acts along `BC`. There is no gravity.
//!
//! Five vector fields are provided:
//!
//! * [`FullField`]: the 4D Lagrange equations in `(phi1, phi2, v1, v2)`;
//! * [`ReducedField`]: the 3D system in `(phi1, v1, v2)`, valid for `k2 = 0`;
//! * [`SeparableField`]: the decoupled form of the reduced system when
//!   `m1 l1 = m3 l3`;
//! * [`PerturbedField`]: the reduced system (with `F = 0`) plus an odd
//!   perturbation that preserves the reversing symmetry;
//! * [`RescaledField`]: the full system after multiplying time by the inertia
//!   determinant, which removes every division.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::VectorField;

/// Lever arm used for the follower-force torque on the `phi2` equation.
///
/// The generalized force listed with the energy expressions uses `l2`, while
/// the right-hand side `r2` of the equations of motion uses `l1`. The two agree
/// whenever `l1 = l2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FollowerLever {
    #[default]
    L1,
    L2,
}

/// The nine mechanical constants plus the lever-arm convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub k1: f64,
    pub k2: f64,
    /// Follower-force magnitude `F` (signed).
    pub force: f64,
    #[serde(default)]
    pub follower_lever: FollowerLever,
}

impl Params {
    /// Parameter set used for the `k2 != 0` numerical experiments:
    /// `m = (1, 1, 3/2)`, `l = (1, 1, 1)`, `k1 = k2 = 1`, `F = 2`.
    pub fn reference() -> Self {
        Params {
            m1: 1.0,
            m2: 1.0,
            m3: 1.5,
            l1: 1.0,
            l2: 1.0,
            l3: 1.0,
            k1: 1.0,
            k2: 1.0,
            force: 2.0,
            follower_lever: FollowerLever::L1,
        }
    }

    /// All masses and lengths one, springs and force off.
    pub fn unit() -> Self {
        Params {
            m1: 1.0,
            m2: 1.0,
            m3: 1.0,
            l1: 1.0,
            l2: 1.0,
            l3: 1.0,
            k1: 0.0,
            k2: 0.0,
            force: 0.0,
            follower_lever: FollowerLever::L1,
        }
    }

    pub fn with_force(mut self, force: f64) -> Self {
        self.force = force;
        self
    }

    pub fn with_springs(mut self, k1: f64, k2: f64) -> Self {
        self.k1 = k1;
        self.k2 = k2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.m1, self.m2, self.m3, self.l1, self.l2, self.l3, self.k1, self.k2, self.force,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::parameter("all parameters must be finite"));
        }
        for (name, v) in [
            ("m1", self.m1),
            ("m2", self.m2),
            ("m3", self.m3),
            ("l1", self.l1),
            ("l2", self.l2),
            ("l3", self.l3),
        ] {
            if v <= 0.0 {
                return Err(Error::parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.k1 < 0.0 || self.k2 < 0.0 {
            return Err(Error::parameter("spring stiffnesses must be non-negative"));
        }
        Ok(())
    }

    /// `m1 l1 l2 - m3 l2 l3`, the coefficient of every `cos phi1` / `sin phi1` term.
    #[inline]
    pub fn coupling(&self) -> f64 {
        self.m1 * self.l1 * self.l2 - self.m3 * self.l2 * self.l3
    }

    /// `m1 l1^2 + m3 l3^2`, the (constant) `A11` entry.
    #[inline]
    pub fn bar_inertia(&self) -> f64 {
        self.m1 * self.l1 * self.l1 + self.m3 * self.l3 * self.l3
    }

    /// `(m1 + m2 + m3) l2^2`.
    #[inline]
    pub fn rod_inertia(&self) -> f64 {
        (self.m1 + self.m2 + self.m3) * self.l2 * self.l2
    }

    #[inline]
    pub fn lever(&self) -> f64 {
        match self.follower_lever {
            FollowerLever::L1 => self.l1,
            FollowerLever::L2 => self.l2,
        }
    }

    /// Whether `m1 l1 = m3 l3` within `1e-12` relative.
    pub fn is_balanced(&self) -> bool {
        let a = self.m1 * self.l1;
        let b = self.m3 * self.l3;
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
    }

    pub(crate) fn require_free_pivot(&self) -> Result<()> {
        if self.k2 != 0.0 {
            return Err(Error::parameter(format!(
                "reduction invalid: the pivot spring must vanish (k2 = {})",
                self.k2
            )));
        }
        Ok(())
    }
}

impl Default for Params {
    fn default() -> Self {
        Params::reference()
    }
}

/// A point of the 4D phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FullState {
    pub phi1: f64,
    pub phi2: f64,
    pub v1: f64,
    pub v2: f64,
}

impl FullState {
    pub const fn new(phi1: f64, phi2: f64, v1: f64, v2: f64) -> Self {
        FullState { phi1, phi2, v1, v2 }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.phi1, self.phi2, self.v1, self.v2]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        FullState::new(a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// Same state with both angles reduced to `[0, 2 pi)`.
    pub fn wrapped(self) -> Self {
        FullState {
            phi1: wrap_angle(self.phi1),
            phi2: wrap_angle(self.phi2),
            ..self
        }
    }

    /// Drops `phi2`.
    pub fn reduce(self) -> ReducedState {
        ReducedState::new(self.phi1, self.v1, self.v2)
    }
}

/// A point of the 3D reduced phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReducedState {
    pub phi1: f64,
    pub v1: f64,
    pub v2: f64,
}

impl ReducedState {
    pub const fn new(phi1: f64, v1: f64, v2: f64) -> Self {
        ReducedState { phi1, v1, v2 }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.phi1, self.v1, self.v2]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        ReducedState::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// The reversing involution `(phi1, v1, v2) -> (-phi1, v1, v2)`.
    pub fn reflect(self) -> Self {
        ReducedState::new(-self.phi1, self.v1, self.v2)
    }

    pub fn lift(self, phi2: f64) -> FullState {
        FullState::new(self.phi1, phi2, self.v1, self.v2)
    }
}

/// Reduces an angle to `[0, 2 pi)`.
pub fn wrap_angle(x: f64) -> f64 {
    let w = x.rem_euclid(std::f64::consts::TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= std::f64::consts::TAU {
        0.0
    } else {
        w
    }
}

/// Inertia coefficients and generalized forces of the Lagrange equations
/// `A11 phi1'' + A12 phi2'' = r1`, `A21 phi1'' + A22 phi2'' = r2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct InertiaAndForce {
    pub A11: f64,
    pub A12: f64,
    pub A21: f64,
    pub A22: f64,
    pub r1: f64,
    pub r2: f64,
}

impl InertiaAndForce {
    /// `A11 A22 - A12 A21`.
    pub fn det(&self) -> f64 {
        self.A11 * self.A22 - self.A12 * self.A21
    }
}

/// Inertia matrix entries `(A11, A12, A22)` at relative angle `phi1`.
#[inline]
pub(crate) fn inertia(p: &Params, phi1: f64) -> (f64, f64, f64) {
    let (m1, m2, m3, l1, l2, l3) = (p.m1, p.m2, p.m3, p.l1, p.l2, p.l3);
    let c = phi1.cos();
    let a11 = m1 * l1 * l1 + m3 * l3 * l3;
    let a12 = m1 * l1 * l1 + m3 * l3 * l3 + m1 * l1 * l2 * c - m3 * l2 * l3 * c;
    let a22 = m1 * l2 * l2 + m1 * l1 * l1 + m2 * l2 * l2 + m3 * l2 * l2 + m3 * l3 * l3
        + 2.0 * m1 * l1 * l2 * c
        - 2.0 * m3 * l2 * l3 * c;
    (a11, a12, a22)
}

#[inline]
pub(crate) fn coefficients(p: &Params, s: &[f64; 4]) -> InertiaAndForce {
    let [phi1, phi2, v1, v2] = *s;
    let (a11, a12, a22) = inertia(p, phi1);
    let sn = phi1.sin();
    let (l1, l2, l3) = (p.l1, p.l2, p.l3);
    let r1 = -p.k1 * phi1 - p.m1 * l1 * l2 * v2 * v2 * sn + p.m3 * l2 * l3 * v2 * v2 * sn;
    let r2 = -p.force * p.lever() * sn - p.k2 * phi2
        + p.m1 * l1 * l2 * v1 * (v1 + 2.0 * v2) * sn
        - p.m3 * l2 * l3 * v1 * (v1 + 2.0 * v2) * sn;
    InertiaAndForce {
        A11: a11,
        A12: a12,
        A21: a12,
        A22: a22,
        r1,
        r2,
    }
}

/// Evaluates the inertia coefficients and generalized forces at `s`.
pub fn inertia_and_force(p: &Params, s: &FullState) -> Result<InertiaAndForce> {
    if !s.is_finite() {
        return Err(Error::domain(format!("non-finite state {s:?}")));
    }
    p.validate()?;
    Ok(coefficients(p, &s.to_array()))
}

/// Solves the 2x2 Lagrange system for `(phi1'', phi2'')`.
#[inline]
fn accelerations(c: &InertiaAndForce) -> (f64, f64) {
    let det = c.det();
    (
        (c.A22 * c.r1 - c.A12 * c.r2) / det,
        (c.A11 * c.r2 - c.A21 * c.r1) / det,
    )
}

/// Time derivative of the full state.
pub fn full_rhs(p: &Params, s: &FullState) -> Result<FullState> {
    let c = inertia_and_force(p, s)?;
    let det = c.det();
    let scale = c.A11 * c.A22;
    if !(det > 1e-12 * scale) {
        return Err(Error::SingularInertia { det });
    }
    let (a1, a2) = accelerations(&c);
    Ok(FullState::new(s.v1, s.v2, a1, a2))
}

/// Time derivative of the reduced state (requires `k2 = 0`).
pub fn reduced_rhs(p: &Params, s: &ReducedState) -> Result<ReducedState> {
    let field = ReducedField::new(*p)?;
    if !s.is_finite() {
        return Err(Error::domain(format!("non-finite state {s:?}")));
    }
    Ok(ReducedState::from_array(field.rhs(&s.to_array())))
}

/// Time derivative of the decoupled system (requires `m1 l1 = m3 l3`, `k2 = 0`).
pub fn separable_rhs(p: &Params, s: &ReducedState) -> Result<ReducedState> {
    let field = SeparableField::new(*p)?;
    if !s.is_finite() {
        return Err(Error::domain(format!("non-finite state {s:?}")));
    }
    Ok(ReducedState::from_array(field.rhs(&s.to_array())))
}

/// Time derivative of the symmetrically perturbed reduced system
/// (requires `F = 0`, `k2 = 0`).
pub fn perturbed_rhs(p: &Params, s: &ReducedState, alpha: f64) -> Result<ReducedState> {
    let field = PerturbedField::new(*p, alpha)?;
    if !s.is_finite() {
        return Err(Error::domain(format!("non-finite state {s:?}")));
    }
    Ok(ReducedState::from_array(field.rhs(&s.to_array())))
}

/// Time derivative of the time-rescaled full system.
pub fn rescaled_rhs(p: &Params, s: &FullState) -> Result<FullState> {
    if !s.is_finite() {
        return Err(Error::domain(format!("non-finite state {s:?}")));
    }
    p.validate()?;
    Ok(FullState::from_array(RescaledField::new(*p).rhs(&s.to_array())))
}

/// The full 4D Lagrange equations.
#[derive(Debug, Clone, Copy)]
pub struct FullField {
    pub params: Params,
}

impl FullField {
    pub fn new(params: Params) -> Result<Self> {
        params.validate()?;
        Ok(FullField { params })
    }
}

impl VectorField<4> for FullField {
    #[inline]
    fn rhs(&self, y: &[f64; 4]) -> [f64; 4] {
        let c = coefficients(&self.params, y);
        let (a1, a2) = accelerations(&c);
        [y[2], y[3], a1, a2]
    }
}

/// The third-order system in `(phi1, v1, v2)` for a free pivot.
#[derive(Debug, Clone, Copy)]
pub struct ReducedField {
    pub params: Params,
}

impl ReducedField {
    pub fn new(params: Params) -> Result<Self> {
        params.validate()?;
        params.require_free_pivot()?;
        Ok(ReducedField { params })
    }
}

#[inline]
fn reduced_accelerations(p: &Params, y: &[f64; 3]) -> (f64, f64) {
    let c = coefficients(p, &[y[0], 0.0, y[1], y[2]]);
    let dv1 = (c.r1 - c.A12 / c.A22 * c.r2) / (c.A11 - c.A12 * c.A21 / c.A22);
    let dv2 = (c.r2 - c.A21 / c.A11 * c.r1) / (c.A22 - c.A12 * c.A21 / c.A11);
    (dv1, dv2)
}

impl VectorField<3> for ReducedField {
    #[inline]
    fn rhs(&self, y: &[f64; 3]) -> [f64; 3] {
        let (dv1, dv2) = reduced_accelerations(&self.params, y);
        [y[1], dv1, dv2]
    }
}

/// Decoupled form of the reduced system for `m1 l1 = m3 l3`.
///
/// The relative angle obeys a one-degree-of-freedom equation and `v2` is
/// slaved to it through `v2' = -phi1'' - k1 phi1 / (m1 l1^2 + m3 l3^2)`.
#[derive(Debug, Clone, Copy)]
pub struct SeparableField {
    pub params: Params,
}

impl SeparableField {
    pub fn new(params: Params) -> Result<Self> {
        params.validate()?;
        params.require_free_pivot()?;
        if !params.is_balanced() {
            return Err(Error::parameter(format!(
                "decoupling requires m1 l1 = m3 l3 (got {} vs {})",
                params.m1 * params.l1,
                params.m3 * params.l3
            )));
        }
        Ok(SeparableField { params })
    }

    /// `phi1''` of the decoupled relative-angle equation.
    ///
    /// With `m1 l1 = m3 l3` the Lagrange equations give
    /// `(F l sin phi1 - k1 phi1) / ((m1 + m2 + m3) l2^2) - k1 phi1 / (m1 l1^2 + m3 l3^2)`.
    #[inline]
    pub fn angle_acceleration(&self, phi1: f64) -> f64 {
        let p = &self.params;
        (p.force * p.lever() * phi1.sin() - p.k1 * phi1) / p.rod_inertia()
            - p.k1 * phi1 / p.bar_inertia()
    }
}

/// The relative-angle equation in the commonly quoted decoupled form
/// `(F l1 sin phi1 - k1 phi1) / ((m1 + m2 + m3) l2^2)`.
///
/// It omits the `-k1 phi1 / (m1 l1^2 + m3 l3^2)` contribution and therefore
/// agrees with [`ReducedField`] only when `k1 = 0`; kept for comparison.
pub fn printed_separable_acceleration(p: &Params, phi1: f64) -> f64 {
    (p.force * p.l1 * phi1.sin() - p.k1 * phi1) / p.rod_inertia()
}

impl VectorField<3> for SeparableField {
    #[inline]
    fn rhs(&self, y: &[f64; 3]) -> [f64; 3] {
        let p = &self.params;
        let acc = self.angle_acceleration(y[0]);
        [y[1], acc, -acc - p.k1 * y[0] / p.bar_inertia()]
    }
}

/// Reduced system with `F = 0` plus the odd perturbation
/// `f1 = -alpha phi1 sin(v2)`, `f2 = alpha phi1 sin(v1)`.
#[derive(Debug, Clone, Copy)]
pub struct PerturbedField {
    pub params: Params,
    pub alpha: f64,
}

impl PerturbedField {
    pub fn new(params: Params, alpha: f64) -> Result<Self> {
        params.validate()?;
        params.require_free_pivot()?;
        if params.force != 0.0 {
            return Err(Error::parameter(format!(
                "the symmetric perturbation assumes F = 0 (got {})",
                params.force
            )));
        }
        if !alpha.is_finite() {
            return Err(Error::parameter("alpha must be finite"));
        }
        Ok(PerturbedField { params, alpha })
    }

    /// `(f1, f2)` at `(phi1, v1, v2)`.
    #[inline]
    pub fn perturbation(&self, phi1: f64, v1: f64, v2: f64) -> (f64, f64) {
        (-self.alpha * phi1 * v2.sin(), self.alpha * phi1 * v1.sin())
    }
}

impl VectorField<3> for PerturbedField {
    #[inline]
    fn rhs(&self, y: &[f64; 3]) -> [f64; 3] {
        let (dv1, dv2) = reduced_accelerations(&self.params, y);
        let (f1, f2) = self.perturbation(y[0], y[1], y[2]);
        [y[1], dv1 + f1, dv2 + f2]
    }
}

/// Full system with time multiplied by `D = A11 A22 - A12 A21`.
#[derive(Debug, Clone, Copy)]
pub struct RescaledField {
    pub params: Params,
}

impl RescaledField {
    pub fn new(params: Params) -> Self {
        RescaledField { params }
    }

    /// The time-rescaling density `D` at `phi1`.
    pub fn density(&self, phi1: f64) -> f64 {
        let (a11, a12, a22) = inertia(&self.params, phi1);
        a11 * a22 - a12 * a12
    }
}

impl VectorField<4> for RescaledField {
    #[inline]
    fn rhs(&self, y: &[f64; 4]) -> [f64; 4] {
        let c = coefficients(&self.params, y);
        let d = c.det();
        [
            y[2] * d,
            y[3] * d,
            c.A22 * c.r1 - c.A12 * c.r2,
            c.A11 * c.r2 - c.A12 * c.r1,
        ]
    }
}
