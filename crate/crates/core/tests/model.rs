mod common;

use std::ops::{Add, Mul, Neg, Sub};

use common::*;
use proptest::prelude::*;
use ziegler_core::integrator::integrate;
use ziegler_core::model::printed_separable_acceleration;
use ziegler_core::observables::{energy, kinetic_energy};
use ziegler_core::*;

/// Forward-mode dual number `re + eps * d`.
#[derive(Debug, Clone, Copy)]
struct Dual {
    re: f64,
    d: f64,
}

impl Dual {
    fn constant(re: f64) -> Self {
        Dual { re, d: 0.0 }
    }
    fn variable(re: f64) -> Self {
        Dual { re, d: 1.0 }
    }
    fn sin(self) -> Self {
        Dual {
            re: self.re.sin(),
            d: self.d * self.re.cos(),
        }
    }
    fn cos(self) -> Self {
        Dual {
            re: self.re.cos(),
            d: -self.d * self.re.sin(),
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            re: self.re + o.re,
            d: self.d + o.d,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            re: self.re - o.re,
            d: self.d - o.d,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            re: self.re * o.re,
            d: self.re * o.d + self.d * o.re,
        }
    }
}

impl Mul<Dual> for f64 {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            re: self * o.re,
            d: self * o.d,
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            re: -self.re,
            d: -self.d,
        }
    }
}

/// Kinetic energy from the Cartesian velocities of the three point masses.
///
/// `A = l2 e(phi2)`, `B = A + l1 e(phi1 + phi2)`, `C = A - l3 e(phi1 + phi2)`.
fn cartesian_kinetic(p: &Params, phi1: Dual, phi2: Dual, w1: Dual, w2: Dual) -> Dual {
    let abs = phi1 + phi2;
    let wb = w1 + w2;
    let (s2, c2) = (phi2.sin(), phi2.cos());
    let (sb, cb) = (abs.sin(), abs.cos());
    let va = (-p.l2 * (s2 * w2), p.l2 * (c2 * w2));
    let vb = (va.0 - p.l1 * (sb * wb), va.1 + p.l1 * (cb * wb));
    let vc = (va.0 + p.l3 * (sb * wb), va.1 - p.l3 * (cb * wb));
    let sq = |v: (Dual, Dual)| v.0 * v.0 + v.1 * v.1;
    0.5 * (p.m1 * sq(vb) + p.m2 * sq(va) + p.m3 * sq(vc))
}

/// Lagrange-equation coefficients derived from the Cartesian kinetic energy.
///
/// `A(phi) v' = Q + dT/dphi - (dA/dphi1 * v1) v`, where the follower force
/// acts at `B` along `-e(phi1 + phi2)` and `Q` is its virtual work plus the springs.
fn lagrange_oracle(p: &Params, s: &FullState) -> ([[f64; 2]; 2], [f64; 2]) {
    let t_at = |phi1: Dual, phi2: Dual, w1: f64, w2: f64| {
        cartesian_kinetic(p, phi1, phi2, Dual::constant(w1), Dual::constant(w2))
    };
    let c = Dual::constant;
    // T is a quadratic form in the velocities, so polarization recovers A and A' exactly
    let entries = |phi1: Dual| {
        let t = |w1, w2| t_at(phi1, c(s.phi2), w1, w2);
        let a11 = 2.0 * t(1.0, 0.0);
        let a22 = 2.0 * t(0.0, 1.0);
        let a12 = t(1.0, 1.0) - t(1.0, 0.0) - t(0.0, 1.0);
        (a11, a12, a22)
    };
    let (a11, a12, a22) = entries(Dual::variable(s.phi1));
    let d_t_phi1 = t_at(Dual::variable(s.phi1), c(s.phi2), s.v1, s.v2).d;
    let d_t_phi2 = t_at(c(s.phi1), Dual::variable(s.phi2), s.v1, s.v2).d;
    let q1 = -p.k1 * s.phi1;
    let q2 = -p.force * p.l2 * s.phi1.sin() - p.k2 * s.phi2;
    let r1 = q1 + d_t_phi1 - s.v1 * (a11.d * s.v1 + a12.d * s.v2);
    let r2 = q2 + d_t_phi2 - s.v1 * (a12.d * s.v1 + a22.d * s.v2);
    ([[a11.re, a12.re], [a12.re, a22.re]], [r1, r2])
}

#[test]
fn coefficients_match_cartesian_lagrangian() {
    let mut r = rng(11);
    for _ in 0..500 {
        let mut p = random_params(&mut r);
        p.follower_lever = FollowerLever::L2;
        let s = random_state(&mut r, 4.0, 3.0);
        let c = inertia_and_force(&p, &s).unwrap();
        let (a, rhs) = lagrange_oracle(&p, &s);
        let got = [c.A11, c.A12, c.A21, c.A22, c.r1, c.r2];
        let want = [a[0][0], a[0][1], a[1][0], a[1][1], rhs[0], rhs[1]];
        let scale = want.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        assert!(max_abs_diff(&got, &want) < 1e-12 * scale, "{p:?} {s:?}\n{got:?}\n{want:?}");
    }
}

#[test]
fn default_lever_matches_lagrangian_when_lengths_agree() {
    let mut r = rng(12);
    for _ in 0..100 {
        let mut p = random_params(&mut r);
        p.follower_lever = FollowerLever::L1;
        p.l1 = p.l2;
        let s = random_state(&mut r, 3.0, 2.0);
        let c = inertia_and_force(&p, &s).unwrap();
        let (_, rhs) = lagrange_oracle(&p, &s);
        assert!((c.r2 - rhs[1]).abs() < 1e-12 * (1.0 + rhs[1].abs()));
    }
}

#[test]
fn lever_choice_changes_only_the_force_term() {
    let p1 = Params {
        l1: 0.5,
        ..Params::reference()
    };
    let p2 = Params {
        follower_lever: FollowerLever::L2,
        ..p1
    };
    let s = FullState::new(0.7, 0.2, 0.3, -0.1);
    let (c1, c2) = (inertia_and_force(&p1, &s).unwrap(), inertia_and_force(&p2, &s).unwrap());
    assert_eq!((c1.A11, c1.A12, c1.A22, c1.r1), (c2.A11, c2.A12, c2.A22, c2.r1));
    let expected = -p1.force * (p1.l1 - p1.l2) * s.phi1.sin();
    assert!((c1.r2 - c2.r2 - expected).abs() < 1e-14);
}

#[test]
fn kinetic_energy_matches_cartesian_form() {
    let mut r = rng(13);
    for _ in 0..200 {
        let p = random_params(&mut r);
        let s = random_state(&mut r, 4.0, 3.0);
        let c = Dual::constant;
        let t = cartesian_kinetic(&p, c(s.phi1), c(s.phi2), c(s.v1), c(s.v2)).re;
        assert!((kinetic_energy(&p, &s) - t).abs() < 1e-12 * (1.0 + t));
    }
}

/// Along the flow `dH/dt` equals the power of the follower force.
#[test]
fn energy_rate_equals_follower_power() {
    let mut r = rng(14);
    for _ in 0..100 {
        let p = random_params(&mut r);
        let s = random_state(&mut r, 3.0, 2.0);
        let f = full_rhs(&p, &s).unwrap();
        let h_at = |eps: f64| {
            energy(
                &p,
                &FullState::new(s.phi1 + eps * f.phi1, s.phi2 + eps * f.phi2, s.v1 + eps * f.v1, s.v2 + eps * f.v2),
            )
        };
        let d = |h: f64| (h_at(h) - h_at(-h)) / (2.0 * h);
        let h = 1e-3;
        let richardson = (4.0 * d(h / 2.0) - d(h)) / 3.0;
        let power = -p.force * p.lever() * s.phi1.sin() * s.v2;
        let scale = 1.0 + energy(&p, &s).abs();
        assert!((richardson - power).abs() < 1e-7 * scale, "{richardson} vs {power}");
    }
}

#[test]
fn rescaled_is_density_times_full() {
    let mut r = rng(15);
    for _ in 0..1000 {
        let p = random_params(&mut r);
        let s = random_state(&mut r, 6.0, 5.0);
        let full = full_rhs(&p, &s).unwrap().to_array();
        let resc = rescaled_rhs(&p, &s).unwrap().to_array();
        let d = RescaledField::new(p).density(s.phi1);
        for i in 0..4 {
            let want = d * full[i];
            assert!((resc[i] - want).abs() <= 1e-10 * want.abs().max(1e-300) + 1e-13, "{i}: {} vs {want}", resc[i]);
        }
    }
}

#[test]
fn equilibria_are_shared() {
    let p = Params::reference();
    let rest = FullState::default();
    assert_eq!(full_rhs(&p, &rest).unwrap().to_array(), [0.0; 4]);
    assert_eq!(rescaled_rhs(&p, &rest).unwrap().to_array(), [0.0; 4]);
}

/// Largest distance from the vertices of `a` to the smooth curve through `b`.
///
/// The nearest chord of `b` is located first; the distance is then minimized
/// over the Hermite interpolant on that chord and its neighbours.
fn distance_to_curve<F: VectorField<N>, const N: usize>(
    a: &[[f64; 4]],
    b: &Trajectory<N>,
    field: &F,
) -> f64 {
    let project = |y: &[f64; N]| [y[0], y[1], y[2], y[3]];
    let chord = |x: &[f64; 4], p: [f64; 4], q: [f64; 4]| {
        let d: Vec<f64> = (0..4).map(|i| q[i] - p[i]).collect();
        let len2: f64 = d.iter().map(|v| v * v).sum();
        let t = if len2 > 0.0 {
            ((0..4).map(|i| (x[i] - p[i]) * d[i]).sum::<f64>() / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (0..4).map(|i| (x[i] - p[i] - t * d[i]).powi(2)).sum::<f64>().sqrt()
    };
    let n = b.states.len();
    a.iter()
        .map(|x| {
            let (best, _) = (0..n - 1)
                .map(|i| (i, chord(x, project(&b.states[i]), project(&b.states[i + 1]))))
                .fold((0, f64::INFINITY), |m, c| if c.1 < m.1 { c } else { m });
            let (t0, t1) = (b.times[best.saturating_sub(1)], b.times[(best + 2).min(n - 1)]);
            let dense: Vec<[f64; 4]> = (0..=400)
                .map(|k| project(&b.sample_hermite(field, t0 + (t1 - t0) * k as f64 / 400.0)))
                .collect();
            dense
                .windows(2)
                .map(|w| chord(x, w[0], w[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[test]
fn rescaled_orbit_coincides_with_full_orbit() {
    let p = Params::reference();
    let s0 = FullState::new(std::f64::consts::PI, 0.0, 0.1, 0.1);
    let cfg = IntegratorConfig {
        h_max: 0.02,
        ..IntegratorConfig::default().with_t_max(20.0)
    };
    let full = integrate(&FullField::new(p).unwrap(), s0.to_array(), &cfg, &[]).unwrap();
    // rescaled field plus physical time, dt/dtau = D, to cut the same arc
    let field = RescaledField::new(p);
    let augmented = |y: &[f64; 5]| {
        let f = field.rhs(&[y[0], y[1], y[2], y[3]]);
        [f[0], f[1], f[2], f[3], field.density(y[0])]
    };
    let d_min = field.density(0.0);
    // dt/dtau >= d_min, so tau = 3 reaches physical time 20 with room to spare
    let cfg_r = IntegratorConfig {
        h_max: 0.02 / d_min,
        ..cfg.with_t_max(3.0)
    };
    let mut y0 = [0.0; 5];
    y0[..4].copy_from_slice(&s0.to_array());
    let stop = EventSpec {
        level: 20.0,
        ..EventSpec::new(EventKind::Phi1Zero, 4)
    }
    .terminal_after(1);
    let resc = integrate(&augmented, y0, &cfg_r, &[stop]).unwrap();
    assert_eq!(resc.events.len(), 1);
    let arc: Vec<[f64; 4]> = resc.states.iter().map(|y| [y[0], y[1], y[2], y[3]]).collect();
    let d = distance_to_curve(&full.states, &resc, &augmented)
        .max(distance_to_curve(&arc, &full, &FullField::new(p).unwrap()));
    assert!(d < 1e-5, "orbit distance {d}");
}

#[test]
fn inertia_is_positive_definite() {
    let mut r = rng(16);
    for _ in 0..10_000 {
        let p = random_params(&mut r);
        let phi1 = rand::Rng::random_range(&mut r, 0.0..std::f64::consts::TAU);
        let c = inertia_and_force(&p, &FullState::new(phi1, 0.0, 0.0, 0.0)).unwrap();
        assert!(c.A11 > 0.0);
        assert!(c.A11 * c.A22 - c.A12 * c.A12 > 0.0, "{p:?} at {phi1}");
        assert_eq!(c.A12, c.A21);
    }
}

#[test]
fn free_pivot_dynamics_ignore_phi2() {
    let mut r = rng(17);
    for _ in 0..1000 {
        let mut p = random_params(&mut r);
        p.k2 = 0.0;
        let s = random_state(&mut r, 5.0, 3.0);
        let shift = rand::Rng::random_range(&mut r, -50.0..50.0);
        let a = full_rhs(&p, &s).unwrap();
        let b = full_rhs(&p, &FullState { phi2: s.phi2 + shift, ..s }).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn reduced_matches_full_projection() {
    let mut r = rng(18);
    for _ in 0..500 {
        let mut p = random_params(&mut r);
        p.k2 = 0.0;
        let s = random_state(&mut r, 4.0, 3.0);
        let full = full_rhs(&p, &s).unwrap();
        let red = reduced_rhs(&p, &s.reduce()).unwrap();
        let want = [full.phi1, full.v1, full.v2];
        let got = red.to_array();
        let scale = want.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        assert!(max_abs_diff(&got, &want) < 1e-12 * scale);
    }
}

fn check_reversing_symmetry(f: impl Fn(&ReducedState) -> ReducedState, s: ReducedState) {
    let a = f(&s);
    let b = f(&s.reflect());
    assert_eq!(b.phi1, a.phi1, "phi1 rate at R(s)");
    assert!((b.v1 + a.v1).abs() <= 1e-12 * (1.0 + a.v1.abs()));
    assert!((b.v2 + a.v2).abs() <= 1e-12 * (1.0 + a.v2.abs()));
}

proptest! {
    #[test]
    fn reduced_field_is_reversible(
        phi1 in -6.0..6.0f64, v1 in -5.0..5.0f64, v2 in -5.0..5.0f64,
        k1 in 0.0..5.0f64, force in -4.0..4.0f64, m3 in 0.3..3.0f64,
    ) {
        let p = Params { m3, ..Params::reference() }.with_springs(k1, 0.0).with_force(force);
        check_reversing_symmetry(|s| reduced_rhs(&p, s).unwrap(), ReducedState::new(phi1, v1, v2));
    }

    #[test]
    fn separable_field_is_reversible(
        phi1 in -6.0..6.0f64, v1 in -5.0..5.0f64, v2 in -5.0..5.0f64,
        k1 in 0.0..5.0f64, force in -4.0..4.0f64,
    ) {
        let p = balanced().with_springs(k1, 0.0).with_force(force);
        check_reversing_symmetry(|s| separable_rhs(&p, s).unwrap(), ReducedState::new(phi1, v1, v2));
    }

    #[test]
    fn perturbed_field_is_reversible(
        phi1 in -6.0..6.0f64, v1 in -5.0..5.0f64, v2 in -5.0..5.0f64,
        alpha in -1.0..1.0f64,
    ) {
        let p = free_pivot(1.0, 0.0);
        check_reversing_symmetry(|s| perturbed_rhs(&p, s, alpha).unwrap(), ReducedState::new(phi1, v1, v2));
    }

    #[test]
    fn perturbation_is_odd_in_phi1(phi1 in -6.0..6.0f64, v1 in -5.0..5.0f64, v2 in -5.0..5.0f64) {
        let f = PerturbedField::new(free_pivot(1.0, 0.0), 0.01).unwrap();
        let (a1, a2) = f.perturbation(phi1, v1, v2);
        let (b1, b2) = f.perturbation(-phi1, v1, v2);
        prop_assert_eq!((a1, a2), (-b1, -b2));
    }

    #[test]
    fn separable_agrees_with_reduced(
        phi1 in -6.0..6.0f64, v1 in -5.0..5.0f64, v2 in -5.0..5.0f64,
        k1 in 0.0..5.0f64, force in -4.0..4.0f64, m in 0.3..3.0f64, l in 0.3..2.0f64,
    ) {
        // m1 l1 = m3 l3 with m1 = m, l1 = l, m3 = 2m, l3 = l / 2
        let p = Params { m1: m, l1: l, m3: 2.0 * m, l3: 0.5 * l, ..Params::reference() }
            .with_springs(k1, 0.0)
            .with_force(force);
        let s = ReducedState::new(phi1, v1, v2);
        let a = separable_rhs(&p, &s).unwrap().to_array();
        let b = reduced_rhs(&p, &s).unwrap().to_array();
        let scale = b.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        prop_assert!(max_abs_diff(&a, &b) < 1e-10 * scale, "{:?} vs {:?}", a, b);
    }
}

/// The commonly quoted decoupled equation lacks `-k1 phi1 / A11`; the gap is exactly that term.
#[test]
fn printed_decoupled_equation_misses_spring_term() {
    let mut r = rng(19);
    for _ in 0..200 {
        let k1 = rand::Rng::random_range(&mut r, 0.1..5.0);
        let force = rand::Rng::random_range(&mut r, -3.0..3.0);
        let p = balanced().with_springs(k1, 0.0).with_force(force);
        let s = random_reduced(&mut r, 3.0, 2.0);
        let reduced = reduced_rhs(&p, &s).unwrap().v1;
        let printed = printed_separable_acceleration(&p, s.phi1);
        let gap = printed - reduced;
        let expected = k1 * s.phi1 / p.bar_inertia();
        assert!((gap - expected).abs() < 1e-10 * (1.0 + expected.abs()), "{gap} vs {expected}");
    }
    let p = balanced().with_springs(0.0, 0.0).with_force(1.5);
    let s = ReducedState::new(0.8, 0.3, -0.2);
    let gap = printed_separable_acceleration(&p, s.phi1) - reduced_rhs(&p, &s).unwrap().v1;
    assert!(gap.abs() < 1e-14);
}

#[test]
fn rejects_invalid_inputs() {
    let p = Params::reference();
    assert!(matches!(reduced_rhs(&p, &ReducedState::default()), Err(Error::Parameter(_))));
    assert!(matches!(
        separable_rhs(&free_pivot(1.0, 2.0), &ReducedState::default()),
        Err(Error::Parameter(_))
    ));
    assert!(matches!(
        perturbed_rhs(&free_pivot(1.0, 2.0), &ReducedState::default(), 0.01),
        Err(Error::Parameter(_))
    ));
    let bad = Params { m2: 0.0, ..p };
    assert!(matches!(full_rhs(&bad, &FullState::default()), Err(Error::Parameter(_))));
    assert!(matches!(
        full_rhs(&p, &FullState::new(f64::NAN, 0.0, 0.0, 0.0)),
        Err(Error::Domain(_))
    ));
}
