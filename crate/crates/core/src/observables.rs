//! Energy, the cyclic momentum integral, the Legendre map, and phase-space divergence.

use serde::{Deserialize, Serialize};

use crate::integrator::VectorField;
use crate::model::{coefficients, inertia, FullField, FullState, Params};

/// `(phi1, phi2, p1, p2)` with `p_i = dT/d(phi_i')`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentumState {
    pub phi1: f64,
    pub phi2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl MomentumState {
    pub fn to_array(self) -> [f64; 4] {
        [self.phi1, self.phi2, self.p1, self.p2]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        MomentumState {
            phi1: a[0],
            phi2: a[1],
            p1: a[2],
            p2: a[3],
        }
    }
}

/// Kinetic energy `T`, written out per point mass.
pub fn kinetic_energy(p: &Params, s: &FullState) -> f64 {
    let (m1, m2, m3, l1, l2, l3) = (p.m1, p.m2, p.m3, p.l1, p.l2, p.l3);
    let (w1, w2) = (s.v1, s.v2);
    let c = s.phi1.cos();
    let sum = w1 + w2;
    0.5 * m1 * (w2 * w2 * l2 * l2 + sum * sum * l1 * l1 + 2.0 * l1 * l2 * w2 * sum * c)
        + 0.5 * m2 * w2 * w2 * l2 * l2
        + 0.5 * m3 * (w2 * w2 * l2 * l2 + sum * sum * l3 * l3 - 2.0 * l2 * l3 * w2 * sum * c)
}

/// Spring potential `k1 phi1^2 / 2 + k2 phi2^2 / 2`.
pub fn potential_energy(p: &Params, s: &FullState) -> f64 {
    0.5 * p.k1 * s.phi1 * s.phi1 + 0.5 * p.k2 * s.phi2 * s.phi2
}

/// `H = T + Pi`. Conserved when `F = 0`.
pub fn energy(p: &Params, s: &FullState) -> f64 {
    kinetic_energy(p, s) + potential_energy(p, s)
}

/// `K = dT/d(phi2')`. Conserved when `F = 0` and `k2 = 0`.
pub fn momentum_integral(p: &Params, s: &FullState) -> f64 {
    let (m1, m2, m3, l1, l2, l3) = (p.m1, p.m2, p.m3, p.l1, p.l2, p.l3);
    let (w1, w2) = (s.v1, s.v2);
    let c = s.phi1.cos();
    0.5 * m1 * (2.0 * w2 * l2 * l2 + 2.0 * (w1 + w2) * l1 * l1 + 2.0 * l1 * l2 * c * (w1 + 2.0 * w2))
        + m2 * w2 * l2 * l2
        + 0.5 * m3 * (2.0 * w2 * l2 * l2 + 2.0 * (w1 + w2) * l3 * l3 - 2.0 * l2 * l3 * (w1 + 2.0 * w2) * c)
}

/// Legendre map `p = A(phi1) v`.
pub fn to_momenta(p: &Params, s: &FullState) -> MomentumState {
    let (a11, a12, a22) = inertia(p, s.phi1);
    MomentumState {
        phi1: s.phi1,
        phi2: s.phi2,
        p1: a11 * s.v1 + a12 * s.v2,
        p2: a12 * s.v1 + a22 * s.v2,
    }
}

/// Inverse Legendre map `v = A(phi1)^-1 p`.
pub fn from_momenta(p: &Params, ms: &MomentumState) -> FullState {
    let (a11, a12, a22) = inertia(p, ms.phi1);
    let det = a11 * a22 - a12 * a12;
    FullState {
        phi1: ms.phi1,
        phi2: ms.phi2,
        v1: (a22 * ms.p1 - a12 * ms.p2) / det,
        v2: (a11 * ms.p2 - a12 * ms.p1) / det,
    }
}

/// The equations of motion pushed forward to `(phi1, phi2, p1, p2)`.
///
/// `p' = (dA/dphi1) phi1' v + A v'`, with `v'` from the Lagrange equations.
#[derive(Debug, Clone, Copy)]
pub struct MomentumField {
    pub params: Params,
}

impl VectorField<4> for MomentumField {
    fn rhs(&self, y: &[f64; 4]) -> [f64; 4] {
        let p = &self.params;
        let s = from_momenta(p, &MomentumState::from_array(*y));
        let c = coefficients(p, &s.to_array());
        let det = c.det();
        let a1 = (c.A22 * c.r1 - c.A12 * c.r2) / det;
        let a2 = (c.A11 * c.r2 - c.A12 * c.r1) / det;
        let sn = s.phi1.sin();
        let d_a12 = -p.coupling() * sn;
        let d_a22 = -2.0 * p.coupling() * sn;
        [
            s.v1,
            s.v2,
            d_a12 * s.v1 * s.v2 + c.A11 * a1 + c.A12 * a2,
            (d_a12 * s.v1 + d_a22 * s.v2) * s.v1 + c.A12 * a1 + c.A22 * a2,
        ]
    }
}

/// Central-difference divergence of `field` at `y`, step `1e-6 * max(1, |y_i|)`.
pub fn divergence<F: VectorField<N>, const N: usize>(field: &F, y: &[f64; N]) -> f64 {
    (0..N)
        .map(|i| {
            let h = 1e-6 * y[i].abs().max(1.0);
            let mut plus = *y;
            let mut minus = *y;
            plus[i] += h;
            minus[i] -= h;
            (field.rhs(&plus)[i] - field.rhs(&minus)[i]) / (plus[i] - minus[i])
        })
        .sum()
}

/// Phase-space divergence in Hamiltonian coordinates. Vanishes for every `F`
/// because the follower force depends on the coordinates only.
pub fn hamiltonian_divergence(p: &Params, ms: &MomentumState) -> f64 {
    divergence(&MomentumField { params: *p }, &ms.to_array())
}

/// Phase-space divergence in `(phi1, phi2, v1, v2)`; generically nonzero.
pub fn velocity_divergence(p: &Params, s: &FullState) -> f64 {
    divergence(&FullField { params: *p }, &s.to_array())
}

/// `max |x_i - x_0| / max(|x_0|, floor)` over a series.
pub fn relative_drift(values: &[f64], floor: f64) -> f64 {
    let Some(&x0) = values.first() else {
        return 0.0;
    };
    let scale = x0.abs().max(floor);
    values.iter().map(|x| (x - x0).abs()).fold(0.0, f64::max) / scale
}
