mod common;

use common::*;
use proptest::prelude::*;
use ziegler_core::integrator::integrate_from;
use ziegler_core::observables::relative_drift;
use ziegler_core::*;

fn harmonic(y: &[f64; 2]) -> [f64; 2] {
    [y[1], -y[0]]
}

#[test]
fn methods_agree_on_pendulum() {
    let p = Params::reference();
    let field = FullField::new(p).unwrap();
    let s0 = [0.6, 0.1, 0.4, -0.3];
    let end = |method| {
        let cfg = IntegratorConfig {
            method,
            ..IntegratorConfig::default().with_tolerances(1e-12, 1e-14).with_t_max(20.0)
        };
        integrate(&field, s0, &cfg, &[]).unwrap().last_state()
    };
    let (a, b) = (end(Method::Dopri5), end(Method::Dop853));
    assert!(max_abs_diff(&a, &b) < 1e-8, "{a:?} vs {b:?}");
}

#[test]
fn dop853_needs_fewer_steps() {
    let cfg = IntegratorConfig::default().with_t_max(50.0);
    let steps = |method| {
        let c = IntegratorConfig { method, ..cfg };
        integrate(&harmonic, [1.0, 0.0], &c, &[]).unwrap().stats.accepted
    };
    assert!(steps(Method::Dop853) < steps(Method::Dopri5));
}

#[test]
fn reduced_energy_drift_over_long_run() {
    let p = free_pivot(1.0, 0.0);
    let cfg = IntegratorConfig::default().with_t_max(1000.0);
    let tr = integrate(&ReducedField::new(p).unwrap(), [0.5, 0.3, 0.5], &cfg, &[]).unwrap();
    let h: Vec<f64> = tr
        .states
        .iter()
        .map(|y| energy(&p, &ReducedState::from_array(*y).lift(0.0)))
        .collect();
    assert!(relative_drift(&h, 1e-12) < 1e-7);
}

#[test]
fn restart_from_midpoint_matches_continuation() {
    let field = FullField::new(Params::reference()).unwrap();
    let cfg = IntegratorConfig::default().with_t_max(10.0);
    let whole = integrate(&field, [0.3, 0.0, 0.2, 0.1], &cfg, &[]).unwrap();
    let half = IntegratorConfig { t_max: 5.0, ..cfg };
    let first = integrate(&field, [0.3, 0.0, 0.2, 0.1], &half, &[]).unwrap();
    let second = integrate_from(&field, 5.0, first.last_state(), &half, &[]).unwrap();
    assert_eq!(second.times[0], 5.0);
    assert!((second.last_time() - 10.0).abs() < 1e-12);
    assert!(max_abs_diff(&second.last_state(), &whole.last_state()) < 1e-8);
}

#[test]
fn restart_on_event_does_not_repeat_it() {
    let cfg = IntegratorConfig::default().with_t_max(20.0);
    let field = ReducedField::new(free_pivot(1.0, 0.0)).unwrap();
    let spec = EventSpec::reduced(EventKind::Phi1Zero);
    let tr = integrate(&field, [0.4, 0.0, 0.2], &cfg, &[spec]).unwrap();
    assert!(tr.events.len() >= 3);
    for w in tr.events.windows(2) {
        let (e, next) = (w[0], w[1]);
        assert!(e.state[0].abs() < cfg.crossing_tol);
        let rest = IntegratorConfig {
            t_max: 20.0 - e.t,
            ..cfg
        };
        let again = integrate_from(&field, e.t, e.state, &rest, &[spec.terminal_after(1)]).unwrap();
        let first = again.events[0];
        assert!((first.t - next.t).abs() < 1e-8, "{} vs {}", first.t, next.t);
        assert_eq!(first.direction, next.direction);
    }
}

#[test]
fn phi2_events_wrap_modulo_two_pi() {
    let p = free_pivot(1.0, 0.0);
    let cfg = IntegratorConfig::default().with_t_max(30.0);
    let tr = integrate(&FullField::new(p).unwrap(), [0.2, 0.0, 0.0, 2.0], &cfg, &[EventSpec::full(EventKind::Phi2ModPi)]).unwrap();
    assert!(tr.events.len() >= 3);
    for e in &tr.events {
        let r = (e.state[1] - std::f64::consts::PI).rem_euclid(std::f64::consts::TAU);
        assert!(r.min(std::f64::consts::TAU - r) < 1e-9, "phi2 = {}", e.state[1]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn harmonic_error_within_tolerance(x0 in -2.0f64..2.0, v0 in -2.0f64..2.0, t in 0.0f64..20.0) {
        let cfg = IntegratorConfig::default().with_t_max(t);
        let y = integrate(&harmonic, [x0, v0], &cfg, &[]).unwrap().last_state();
        let exact = [x0 * t.cos() + v0 * t.sin(), -x0 * t.sin() + v0 * t.cos()];
        prop_assert!(max_abs_diff(&y, &exact) < 1e-8);
    }

    #[test]
    fn reflection_defect_vanishes_on_plane(v1 in -1.0f64..1.0, v2 in -1.0f64..1.0) {
        let field = ReducedField::new(free_pivot(1.0, 0.0)).unwrap();
        let cfg = IntegratorConfig::default().with_t_max(20.0);
        let (_, d) = flow_with_reflection_check(&field, ReducedState::new(0.0, v1, v2), &cfg).unwrap();
        prop_assert!(d <= 2.0 * cfg.rel_tol);
    }

    #[test]
    fn recorded_times_cover_horizon(t in 0.0f64..30.0) {
        let field = FullField::new(Params::reference()).unwrap();
        let tr = integrate(&field, [0.1, 0.0, 0.3, 0.0], &IntegratorConfig::default().with_t_max(t), &[]).unwrap();
        prop_assert_eq!(tr.times[0], 0.0);
        prop_assert!((tr.last_time() - t).abs() <= 1e-12 * (1.0 + t));
        prop_assert!(tr.times.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(tr.times.len(), tr.states.len());
    }
}
