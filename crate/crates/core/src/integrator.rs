//! Adaptive embedded Runge-Kutta integration with coordinate-crossing events.
//!
//! Two Dormand-Prince pairs are available: the classic 5(4) pair and the
//! 8(5,3) pair of Hairer's `DOP853`. Steps are controlled by a PI controller on
//! the RMS error norm. Events are detected by a sign change of
//! `y[index] - level` across an accepted step and refined by re-integrating the
//! bracketing substep with a single RK step (Illinois regula falsi), so no
//! dense output is needed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, FailureReason, Partial};
use crate::model::{Params, ReducedState};

/// An autonomous vector field `y' = f(y)` on `R^N`.
pub trait VectorField<const N: usize>: Sync {
    fn rhs(&self, y: &[f64; N]) -> [f64; N];
}

impl<F, const N: usize> VectorField<N> for F
where
    F: Fn(&[f64; N]) -> [f64; N] + Sync,
{
    #[inline]
    fn rhs(&self, y: &[f64; N]) -> [f64; N] {
        self(y)
    }
}

/// The field `-f`, i.e. `f` followed backwards in time.
#[derive(Debug, Clone, Copy)]
pub struct Reversed<F>(pub F);

impl<F: VectorField<N>, const N: usize> VectorField<N> for Reversed<F> {
    #[inline]
    fn rhs(&self, y: &[f64; N]) -> [f64; N] {
        let mut d = self.0.rhs(y);
        d.iter_mut().for_each(|x| *x = -*x);
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Dormand-Prince 5(4), 7 stages with FSAL.
    Dopri5,
    /// Dormand-Prince 8(5,3), 12 stages.
    #[default]
    Dop853,
}

impl Method {
    fn error_exponent(self) -> f64 {
        match self {
            Method::Dopri5 => 1.0 / 5.0 - BETA * 0.75,
            Method::Dop853 => 1.0 / 8.0 - BETA * 0.2,
        }
    }
}

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Integration horizon; the run covers `[0, t_max]`.
    pub t_max: f64,
    pub max_steps: usize,
    /// Events are refined until the crossed coordinate is within this of its level.
    pub crossing_tol: f64,
    /// A crossing is transversal when the crossed coordinate's rate exceeds this.
    pub transversality: f64,
    /// Store every accepted step (otherwise only the endpoints).
    pub record_states: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Dop853,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            h_init: 1e-3,
            h_min: 1e-14,
            h_max: 0.5,
            t_max: 100.0,
            max_steps: 50_000_000,
            crossing_tol: 1e-10,
            transversality: 1e-6,
            record_states: true,
        }
    }
}

impl IntegratorConfig {
    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn without_states(mut self) -> Self {
        self.record_states = false;
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return bad("step sizes must satisfy 0 < h_min <= h_init <= h_max");
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return bad("t_max must be finite and non-negative");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if !(self.crossing_tol > 0.0 && self.transversality >= 0.0) {
            return bad("crossing_tol must be positive and transversality non-negative");
        }
        Ok(())
    }
}

/// The coordinate planes used for events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// `phi1 = 0`.
    Phi1Zero,
    /// `v1 = 0`.
    V1Zero,
    /// `phi2 = pi (mod 2 pi)`.
    Phi2ModPi,
}

impl EventKind {
    /// Component index in a full `(phi1, phi2, v1, v2)` state.
    pub fn full_index(self) -> usize {
        match self {
            EventKind::Phi1Zero => 0,
            EventKind::Phi2ModPi => 1,
            EventKind::V1Zero => 2,
        }
    }

    /// Component index in a reduced `(phi1, v1, v2)` state, if present.
    pub fn reduced_index(self) -> Option<usize> {
        match self {
            EventKind::Phi1Zero => Some(0),
            EventKind::V1Zero => Some(1),
            EventKind::Phi2ModPi => None,
        }
    }

    fn level(self) -> (f64, Option<f64>) {
        match self {
            EventKind::Phi1Zero | EventKind::V1Zero => (0.0, None),
            EventKind::Phi2ModPi => (std::f64::consts::PI, Some(std::f64::consts::TAU)),
        }
    }
}

/// Which crossing directions are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionFilter {
    #[default]
    Both,
    Increasing,
    Decreasing,
}

impl DirectionFilter {
    fn admits(self, direction: i8) -> bool {
        match self {
            DirectionFilter::Both => true,
            DirectionFilter::Increasing => direction > 0,
            DirectionFilter::Decreasing => direction < 0,
        }
    }
}

/// Crossing of `y[index]` through `level + k * period`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub kind: EventKind,
    pub index: usize,
    pub level: f64,
    pub period: Option<f64>,
    pub filter: DirectionFilter,
    /// Stop the integration once this many events of this spec were recorded.
    pub terminal: Option<usize>,
}

impl EventSpec {
    pub fn new(kind: EventKind, index: usize) -> Self {
        let (level, period) = kind.level();
        EventSpec {
            kind,
            index,
            level,
            period,
            filter: DirectionFilter::Both,
            terminal: None,
        }
    }

    pub fn full(kind: EventKind) -> Self {
        EventSpec::new(kind, kind.full_index())
    }

    /// Panics for kinds without a reduced coordinate (`Phi2ModPi`).
    pub fn reduced(kind: EventKind) -> Self {
        let index = kind
            .reduced_index()
            .expect("event kind has no reduced-state coordinate");
        EventSpec::new(kind, index)
    }

    pub fn terminal_after(mut self, count: usize) -> Self {
        self.terminal = Some(count);
        self
    }

    pub fn with_filter(mut self, filter: DirectionFilter) -> Self {
        self.filter = filter;
        self
    }

    fn nearest_level(&self, x: f64) -> f64 {
        match self.period {
            None => self.level,
            Some(period) => self.level + ((x - self.level) / period).round() * period,
        }
    }

    /// Levels crossed when the coordinate moves from `a` to `b`, in order of traversal.
    fn crossed_levels(&self, a: f64, b: f64) -> Vec<f64> {
        match self.period {
            None => {
                let (ga, gb) = (a - self.level, b - self.level);
                if (ga < 0.0 && gb >= 0.0) || (ga > 0.0 && gb <= 0.0) {
                    vec![self.level]
                } else {
                    vec![]
                }
            }
            Some(period) => {
                // bands [level + k P, level + (k+1) P); a boundary is crossed when the band changes
                let band = |x: f64| ((x - self.level) / period).floor();
                let on_level = |x: f64| (x - self.level).rem_euclid(period) == 0.0;
                let (ka, kb) = (band(a), band(b));
                let mut out = Vec::new();
                if kb > ka {
                    let mut k = ka + 1.0;
                    while k <= kb {
                        out.push(self.level + k * period);
                        k += 1.0;
                    }
                } else if kb < ka {
                    // moving down; starting exactly on a level does not count again
                    let mut k = if on_level(a) { ka - 1.0 } else { ka };
                    while k > kb {
                        out.push(self.level + k * period);
                        k -= 1.0;
                    }
                    if on_level(b) {
                        out.push(b);
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event<const N: usize> {
    pub kind: EventKind,
    pub t: f64,
    #[serde(with = "serde_array")]
    pub state: [f64; N],
    /// Sign of the crossed coordinate's time derivative.
    pub direction: i8,
    /// The crossed coordinate's time derivative at the event.
    pub rate: f64,
}

impl<const N: usize> Event<N> {
    pub fn is_transversal(&self, threshold: f64) -> bool {
        self.rate.abs() > threshold
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<const N: usize> {
    pub times: Vec<f64>,
    #[serde(with = "serde_array_vec")]
    pub states: Vec<[f64; N]>,
    pub events: Vec<Event<N>>,
    pub config: IntegratorConfig,
    pub params: Option<Params>,
    /// The step budget ran out before `t_max`.
    pub truncated: bool,
    pub stats: StepStats,
}

impl<const N: usize> Trajectory<N> {
    fn start(t0: f64, y0: [f64; N], config: IntegratorConfig) -> Self {
        Trajectory {
            times: vec![t0],
            states: vec![y0],
            events: Vec::new(),
            config,
            params: None,
            truncated: false,
            stats: StepStats::default(),
        }
    }

    fn push(&mut self, t: f64, y: [f64; N]) {
        if t > *self.times.last().unwrap() {
            self.times.push(t);
            self.states.push(y);
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last_state(&self) -> [f64; N] {
        *self.states.last().unwrap()
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &Event<N>> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Cubic Hermite interpolation between stored states; derivatives come from `field`.
    pub fn sample_hermite<F: VectorField<N>>(&self, field: &F, t: f64) -> [f64; N] {
        let i = match self
            .times
            .binary_search_by(|x| x.partial_cmp(&t).expect("NaN time"))
        {
            Ok(i) => return self.states[i],
            Err(i) => i,
        };
        if i == 0 {
            return self.states[0];
        }
        if i >= self.times.len() {
            return self.last_state();
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let (y0, y1) = (&self.states[i - 1], &self.states[i]);
        hermite(t0, y0, &field.rhs(y0), t1, y1, &field.rhs(y1), t)
    }
}

/// Cubic Hermite interpolant on `[t0, t1]` evaluated at `t`.
pub fn hermite<const N: usize>(
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    t1: f64,
    y1: &[f64; N],
    f1: &[f64; N],
    t: f64,
) -> [f64; N] {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    std::array::from_fn(|k| h00 * y0[k] + h10 * h * f0[k] + h01 * y1[k] + h11 * h * f1[k])
}

/// A failed integration with everything computed up to the failure.
#[derive(Debug, Clone)]
pub struct IntegrationFailure<const N: usize> {
    pub t: f64,
    pub reason: FailureReason,
    pub partial: Trajectory<N>,
}

impl From<IntegrationFailure<4>> for Error {
    fn from(f: IntegrationFailure<4>) -> Self {
        Error::Integration {
            t: f.t,
            reason: f.reason,
            partial: Some(Box::new(Partial::Full(f.partial))),
        }
    }
}

impl From<IntegrationFailure<3>> for Error {
    fn from(f: IntegrationFailure<3>) -> Self {
        Error::Integration {
            t: f.t,
            reason: f.reason,
            partial: Some(Box::new(Partial::Reduced(f.partial))),
        }
    }
}

/// One accepted step `(t0, y0) -> (t1, y1)`, with `f0 = f(y0)`.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord<const N: usize> {
    pub t0: f64,
    pub y0: [f64; N],
    pub f0: [f64; N],
    pub t1: f64,
    pub y1: [f64; N],
}

/// Step-by-step driver for a single forward integration.
pub struct Stepper<'a, F, const N: usize> {
    field: &'a F,
    method: Method,
    rel_tol: f64,
    abs_tol: f64,
    h_min: f64,
    h_max: f64,
    t: f64,
    y: [f64; N],
    f: [f64; N],
    h: f64,
    fac_old: f64,
    last_rejected: bool,
    pub stats: StepStats,
}

impl<'a, F: VectorField<N>, const N: usize> Stepper<'a, F, N> {
    pub fn new(field: &'a F, t0: f64, y0: [f64; N], cfg: &IntegratorConfig) -> Self {
        let f = field.rhs(&y0);
        Stepper {
            field,
            method: cfg.method,
            rel_tol: cfg.rel_tol,
            abs_tol: cfg.abs_tol,
            h_min: cfg.h_min,
            h_max: cfg.h_max,
            t: t0,
            y: y0,
            f,
            h: cfg.h_init,
            fac_old: 1e-4,
            last_rejected: false,
            stats: StepStats {
                evaluations: 1,
                ..Default::default()
            },
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    /// Replaces the current state (e.g. after renormalizing part of it).
    pub fn reset_state(&mut self, y: [f64; N]) {
        self.y = y;
        self.f = self.field.rhs(&y);
        self.stats.evaluations += 1;
    }

    /// Advances by one accepted step that does not pass `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Result<StepRecord<N>, FailureReason> {
        loop {
            let remaining = t_limit - self.t;
            let clamped = self.h >= remaining;
            let h = if clamped { remaining } else { self.h };
            let (y1, err) = rk_step(self.method, self.field, &self.y, &self.f, h, self.rel_tol, self.abs_tol);
            self.stats.evaluations += self.method.stages();
            if !err.is_finite() || y1.iter().any(|x| !x.is_finite()) {
                // treat overflow as a failed step; shrink aggressively
                self.stats.rejected += 1;
                self.h = h * FAC_MIN;
                if self.h < self.h_min {
                    return Err(FailureReason::NonFinite);
                }
                continue;
            }
            let expo = self.method.error_exponent();
            let fac11 = err.powf(expo);
            if err <= 1.0 {
                let fac = (fac11 / self.fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut h_new = h / fac;
                if self.last_rejected {
                    h_new = h_new.min(h);
                }
                self.fac_old = err.max(1e-4);
                self.last_rejected = false;
                let rec = StepRecord {
                    t0: self.t,
                    y0: self.y,
                    f0: self.f,
                    t1: if clamped { t_limit } else { self.t + h },
                    y1,
                };
                self.t = rec.t1;
                self.y = y1;
                self.f = self.field.rhs(&y1);
                self.stats.evaluations += 1;
                self.stats.accepted += 1;
                // a clamped final step says nothing about the natural step size
                if !clamped || h_new < self.h {
                    self.h = h_new.min(self.h_max);
                }
                return Ok(rec);
            }
            self.stats.rejected += 1;
            self.last_rejected = true;
            self.h = h / (1.0 / FAC_MIN).min(fac11 / SAFETY);
            if self.h < self.h_min {
                return Err(FailureReason::StepUnderflow);
            }
        }
    }

    /// One unchecked RK step of size `h` from `y0` (used to refine events).
    pub fn trial(&self, y0: &[f64; N], f0: &[f64; N], h: f64) -> [f64; N] {
        rk_step(self.method, self.field, y0, f0, h, self.rel_tol, self.abs_tol).0
    }
}

impl Method {
    fn stages(self) -> usize {
        match self {
            Method::Dopri5 => 6,
            Method::Dop853 => 11,
        }
    }
}

/// Locates a crossing of `target` by `y[spec.index]` inside the substep described by `rec`.
///
/// The bracket is `[0, h]` in substep length; each evaluation re-integrates from
/// `rec.y0` with one RK step. Stops once the residual is below `crossing_tol`.
pub fn refine_crossing<F: VectorField<N>, const N: usize>(
    stepper: &Stepper<'_, F, N>,
    rec: &StepRecord<N>,
    spec: &EventSpec,
    target: f64,
    crossing_tol: f64,
) -> (f64, [f64; N]) {
    let h = rec.t1 - rec.t0;
    let g = |y: &[f64; N]| y[spec.index] - target;
    let (mut a, mut ga) = (0.0, g(&rec.y0));
    let (mut b, mut gb) = (h, g(&rec.y1));
    let mut yb = rec.y1;
    if gb.abs() < crossing_tol {
        return (rec.t1, yb);
    }
    let mut ya = rec.y0;
    let mut side = 0i8;
    for _ in 0..200 {
        let mut c = (a * gb - b * ga) / (gb - ga);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let yc = stepper.trial(&rec.y0, &rec.f0, c);
        let gc = g(&yc);
        if gc.abs() < crossing_tol {
            return (rec.t0 + c, yc);
        }
        if (gc < 0.0) == (ga < 0.0) {
            a = c;
            ga = gc;
            ya = yc;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            gb = gc;
            yb = yc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
        if b - a <= 4.0 * f64::EPSILON * (rec.t0.abs() + h) {
            break;
        }
    }
    // bracket collapsed without meeting the tolerance; return the closer end
    if g(&ya).abs() < g(&yb).abs() {
        (rec.t0 + a, ya)
    } else {
        (rec.t0 + b, yb)
    }
}

/// Integrates `field` from `y0` over `[0, cfg.t_max]`, recording `events`.
pub fn integrate<F: VectorField<N>, const N: usize>(
    field: &F,
    y0: [f64; N],
    cfg: &IntegratorConfig,
    events: &[EventSpec],
) -> Result<Trajectory<N>, IntegrationFailure<N>> {
    integrate_from(field, 0.0, y0, cfg, events)
}

/// As [`integrate`], starting the clock at `t0` and ending at `t0 + cfg.t_max`.
pub fn integrate_from<F: VectorField<N>, const N: usize>(
    field: &F,
    t0: f64,
    y0: [f64; N],
    cfg: &IntegratorConfig,
    events: &[EventSpec],
) -> Result<Trajectory<N>, IntegrationFailure<N>> {
    let mut traj = Trajectory::start(t0, y0, *cfg);
    if y0.iter().any(|x| !x.is_finite()) {
        return Err(IntegrationFailure {
            t: t0,
            reason: FailureReason::NonFinite,
            partial: traj,
        });
    }
    for spec in events {
        assert!(spec.index < N, "event index {} out of range", spec.index);
    }
    let t_end = t0 + cfg.t_max;
    let mut counts = vec![0usize; events.len()];
    // a start within `crossing_tol` of a level counts as already past it
    let f_start = field.rhs(&y0);
    let mut start_side: Vec<Option<f64>> = events
        .iter()
        .map(|spec| {
            let x = y0[spec.index];
            let level = spec.nearest_level(x);
            let rate = f_start[spec.index];
            ((x - level).abs() < cfg.crossing_tol && rate != 0.0)
                .then(|| level + rate.signum() * 2.0 * cfg.crossing_tol)
        })
        .collect();
    let mut stepper = Stepper::new(field, t0, y0, cfg);

    while stepper.t() < t_end {
        if stepper.stats.accepted >= cfg.max_steps {
            traj.truncated = true;
            log::debug!("step budget exhausted at t = {}", stepper.t());
            break;
        }
        let rec = match stepper.step(t_end) {
            Ok(rec) => rec,
            Err(reason) => {
                traj.stats = stepper.stats;
                let t = stepper.t();
                if !cfg.record_states {
                    traj.push(t, *stepper.y());
                }
                return Err(IntegrationFailure {
                    t,
                    reason,
                    partial: traj,
                });
            }
        };

        // events inside this step, in time order
        let mut found: Vec<(usize, f64, [f64; N])> = Vec::new();
        for (i, spec) in events.iter().enumerate() {
            let from = start_side[i].take().unwrap_or(rec.y0[spec.index]);
            for target in spec.crossed_levels(from, rec.y1[spec.index]) {
                let (te, ye) = refine_crossing(&stepper, &rec, spec, target, cfg.crossing_tol);
                found.push((i, te, ye));
            }
        }
        found.sort_by(|a, b| a.1.total_cmp(&b.1));
        for (i, te, ye) in found {
            let spec = &events[i];
            let rate = field.rhs(&ye)[spec.index];
            let direction = if rate > 0.0 {
                1
            } else if rate < 0.0 {
                -1
            } else {
                0
            };
            if !spec.filter.admits(direction) {
                continue;
            }
            traj.events.push(Event {
                kind: spec.kind,
                t: te,
                state: ye,
                direction,
                rate,
            });
            counts[i] += 1;
            if spec.terminal.is_some_and(|n| counts[i] >= n) {
                traj.push(te, ye);
                traj.stats = stepper.stats;
                return Ok(traj);
            }
        }
        if cfg.record_states {
            traj.push(rec.t1, rec.y1);
        }
    }
    traj.push(stepper.t(), *stepper.y());
    traj.stats = stepper.stats;
    Ok(traj)
}

/// Runs the stages of `method` for one step. Returns the propagated state and
/// the scaled error norm (`<= 1` means acceptable).
#[inline]
fn rk_step<F: VectorField<N>, const N: usize>(
    method: Method,
    field: &F,
    y: &[f64; N],
    f0: &[f64; N],
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> ([f64; N], f64) {
    match method {
        Method::Dopri5 => dopri5_step(field, y, f0, h, rel_tol, abs_tol),
        Method::Dop853 => dop853_step(field, y, f0, h, rel_tol, abs_tol),
    }
}

#[inline]
fn stage_state<const N: usize>(y: &[f64; N], h: f64, k: &[[f64; N]], a: &[f64]) -> [f64; N] {
    let mut out = *y;
    for (kj, &aj) in k.iter().zip(a) {
        if aj != 0.0 {
            let s = h * aj;
            for i in 0..N {
                out[i] += s * kj[i];
            }
        }
    }
    out
}

mod dp5 {
    pub const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    /// 5th minus 4th order weights (the last entry multiplies `f(y1)`).
    pub const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
}

fn dopri5_step<F: VectorField<N>, const N: usize>(
    field: &F,
    y: &[f64; N],
    f0: &[f64; N],
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> ([f64; N], f64) {
    let mut k = [[0.0; N]; 7];
    k[0] = *f0;
    for s in 1..6 {
        let ys = stage_state(y, h, &k[..s], &dp5::A[s - 1][..s]);
        k[s] = field.rhs(&ys);
    }
    let y1 = stage_state(y, h, &k[..6], &dp5::A[5]);
    k[6] = field.rhs(&y1);
    let mut acc = 0.0;
    for i in 0..N {
        let e: f64 = (0..7).map(|j| dp5::E[j] * k[j][i]).sum::<f64>() * h;
        let sk = abs_tol + rel_tol * y[i].abs().max(y1[i].abs());
        acc += (e / sk).powi(2);
    }
    (y1, (acc / N as f64).sqrt())
}

#[allow(clippy::excessive_precision)]
mod dp8 {
    pub const A: [[f64; 11]; 11] = [
        [5.26001519587677318785587544488e-2, 0., 0., 0., 0., 0., 0., 0., 0., 0., 0.],
        [1.97250569845378994544595329183e-2, 5.91751709536136983633785987549e-2, 0., 0., 0., 0., 0., 0., 0., 0., 0.],
        [2.95875854768068491816892993775e-2, 0., 8.87627564304205475450678981324e-2, 0., 0., 0., 0., 0., 0., 0., 0.],
        [
            2.41365134159266685502369798665e-1,
            0.,
            -8.84549479328286085344864962717e-1,
            9.24834003261792003115737966543e-1,
            0., 0., 0., 0., 0., 0., 0.,
        ],
        [
            3.7037037037037037037037037037e-2,
            0.,
            0.,
            1.70828608729473871279604482173e-1,
            1.25467687566822425016691814123e-1,
            0., 0., 0., 0., 0., 0.,
        ],
        [
            3.7109375e-2,
            0.,
            0.,
            1.70252211019544039314978060272e-1,
            6.02165389804559606850219397283e-2,
            -1.7578125e-2,
            0., 0., 0., 0., 0.,
        ],
        [
            3.70920001185047927108779319836e-2,
            0.,
            0.,
            1.70383925712239993810214054705e-1,
            1.07262030446373284651809199168e-1,
            -1.53194377486244017527936158236e-2,
            8.27378916381402288758473766002e-3,
            0., 0., 0., 0.,
        ],
        [
            6.24110958716075717114429577812e-1,
            0.,
            0.,
            -3.36089262944694129406857109825e0,
            -8.68219346841726006818189891453e-1,
            2.75920996994467083049415600797e1,
            2.01540675504778934086186788979e1,
            -4.34898841810699588477366255144e1,
            0., 0., 0.,
        ],
        [
            4.77662536438264365890433908527e-1,
            0.,
            0.,
            -2.48811461997166764192642586468e0,
            -5.90290826836842996371446475743e-1,
            2.12300514481811942347288949897e1,
            1.52792336328824235832596922938e1,
            -3.32882109689848629194453265587e1,
            -2.03312017085086261358222928593e-2,
            0., 0.,
        ],
        [
            -9.3714243008598732571704021658e-1,
            0.,
            0.,
            5.18637242884406370830023853209e0,
            1.09143734899672957818500254654e0,
            -8.14978701074692612513997267357e0,
            -1.85200656599969598641566180701e1,
            2.27394870993505042818970056734e1,
            2.49360555267965238987089396762e0,
            -3.0467644718982195003823669022e0,
            0.,
        ],
        [
            2.27331014751653820792359768449e0,
            0.,
            0.,
            -1.05344954667372501984066689879e1,
            -2.00087205822486249909675718444e0,
            -1.79589318631187989172765950534e1,
            2.79488845294199600508499808837e1,
            -2.85899827713502369474065508674e0,
            -8.87285693353062954433549289258e0,
            1.23605671757943030647266201528e1,
            6.43392746015763530355970484046e-1,
        ],
    ];

    pub const B: [f64; 12] = [
        5.42937341165687622380535766363e-2,
        0.,
        0.,
        0.,
        0.,
        4.45031289275240888144113950566e0,
        1.89151789931450038304281599044e0,
        -5.8012039600105847814672114227e0,
        3.1116436695781989440891606237e-1,
        -1.52160949662516078556178806805e-1,
        2.01365400804030348374776537501e-1,
        4.47106157277725905176885569043e-2,
    ];

    /// Weights of the embedded 3rd-order estimate on stages 1, 9 and 12.
    pub const BHH: [f64; 3] = [
        0.244094488188976377952755905512e+00,
        0.733846688281611857341361741547e+00,
        0.220588235294117647058823529412e-01,
    ];

    /// 8th minus 5th order weights.
    pub const ER: [f64; 12] = [
        0.1312004499419488073250102996e-01,
        0.,
        0.,
        0.,
        0.,
        -0.1225156446376204440720569753e+01,
        -0.4957589496572501915214079952e+00,
        0.1664377182454986536961530415e+01,
        -0.3503288487499736816886487290e+00,
        0.3341791187130174790297318841e+00,
        0.8192320648511571246570742613e-01,
        -0.2235530786388629525884427845e-01,
    ];
}

fn dop853_step<F: VectorField<N>, const N: usize>(
    field: &F,
    y: &[f64; N],
    f0: &[f64; N],
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> ([f64; N], f64) {
    let mut k = [[0.0; N]; 12];
    k[0] = *f0;
    for s in 1..12 {
        let ys = stage_state(y, h, &k[..s], &dp8::A[s - 1][..s]);
        k[s] = field.rhs(&ys);
    }
    let mut incr = [0.0; N];
    for (kj, &bj) in k.iter().zip(&dp8::B) {
        if bj != 0.0 {
            for i in 0..N {
                incr[i] += bj * kj[i];
            }
        }
    }
    let mut y1 = *y;
    for i in 0..N {
        y1[i] += h * incr[i];
    }
    let (mut err5, mut err3) = (0.0, 0.0);
    for i in 0..N {
        let sk = abs_tol + rel_tol * y[i].abs().max(y1[i].abs());
        let e3 = incr[i] - dp8::BHH[0] * k[0][i] - dp8::BHH[1] * k[8][i] - dp8::BHH[2] * k[11][i];
        let e5: f64 = k.iter().zip(&dp8::ER).map(|(kj, &e)| e * kj[i]).sum();
        err3 += (e3 / sk).powi(2);
        err5 += (e5 / sk).powi(2);
    }
    let mut deno = err5 + 0.01 * err3;
    if deno <= 0.0 {
        deno = 1.0;
    }
    let err = h.abs() * err5 * (1.0 / (deno * N as f64)).sqrt();
    (y1, err)
}

/// Integrates `s0` forward and `R(s0)` backward in time, and measures how far
/// the reflected backward orbit is from the forward one.
///
/// For a reversible field, `t -> R x(-t)` is again a solution, so the backward
/// orbit from `R(s0)`, reflected, must coincide with the forward orbit from
/// `s0`. The defect is the sup-norm mismatch over the union of both step grids,
/// with cubic Hermite interpolation between accepted steps.
pub fn flow_with_reflection_check<F: VectorField<3>>(
    field: &F,
    s0: ReducedState,
    cfg: &IntegratorConfig,
) -> Result<(Trajectory<3>, f64), Error> {
    cfg.validate()?;
    let cfg = IntegratorConfig {
        record_states: true,
        ..*cfg
    };
    let forward = integrate(field, s0.to_array(), &cfg, &[])?;
    let reversed = Reversed(|y: &[f64; 3]| field.rhs(y));
    let backward = integrate(&reversed, s0.reflect().to_array(), &cfg, &[])?;
    let reflect = |y: [f64; 3]| [-y[0], y[1], y[2]];

    let t_end = forward.last_time().min(backward.last_time());
    let mut defect: f64 = 0.0;
    let mut measure = |a: [f64; 3], b: [f64; 3]| {
        let d = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        defect = defect.max(d);
    };
    for (&t, &y) in forward.times.iter().zip(&forward.states) {
        if t <= t_end {
            measure(y, reflect(backward.sample_hermite(&reversed, t)));
        }
    }
    for (&t, &y) in backward.times.iter().zip(&backward.states) {
        if t <= t_end {
            measure(reflect(y), forward.sample_hermite(field, t));
        }
    }
    Ok((forward, defect))
}

mod serde_array {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(a: &[f64; N], s: S) -> Result<S::Ok, S::Error> {
        a.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[f64; N], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into()
            .map_err(|v: Vec<f64>| serde::de::Error::invalid_length(v.len(), &"fixed-size state"))
    }
}

mod serde_array_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(a: &[[f64; N]], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<&[f64]> = a.iter().map(|x| x.as_slice()).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<Vec<[f64; N]>, D::Error> {
        let v = Vec::<Vec<f64>>::deserialize(d)?;
        v.into_iter()
            .map(|x| {
                x.try_into()
                    .map_err(|v: Vec<f64>| serde::de::Error::invalid_length(v.len(), &"fixed-size state"))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn harmonic(y: &[f64; 2]) -> [f64; 2] {
        [y[1], -y[0]]
    }

    fn tight() -> IntegratorConfig {
        IntegratorConfig::default().with_tolerances(1e-10, 1e-12)
    }

    #[test]
    fn harmonic_full_period() {
        for method in [Method::Dopri5, Method::Dop853] {
            let cfg = IntegratorConfig {
                method,
                ..tight().with_t_max(TAU)
            };
            let tr = integrate(&harmonic, [1.0, 0.0], &cfg, &[]).unwrap();
            let y = tr.last_state();
            assert!((tr.last_time() - TAU).abs() < 1e-15);
            assert!((y[0] - 1.0).abs() < 1e-8, "{method:?}: x(2pi) = {}", y[0]);
            assert!(y[1].abs() < 1e-8);
        }
    }

    #[test]
    fn harmonic_first_zero_crossing() {
        for method in [Method::Dopri5, Method::Dop853] {
            let cfg = IntegratorConfig {
                method,
                ..tight().with_t_max(10.0)
            };
            let ev = EventSpec::new(EventKind::Phi1Zero, 0).terminal_after(1);
            let tr = integrate(&harmonic, [1.0, 0.0], &cfg, &[ev]).unwrap();
            assert_eq!(tr.events.len(), 1);
            let e = tr.events[0];
            assert!((e.t - FRAC_PI_2).abs() < 1e-8, "t = {}", e.t);
            assert!(e.state[0].abs() < cfg.crossing_tol);
            assert_eq!(e.direction, -1);
            assert_eq!(tr.last_time(), e.t);
        }
    }

    #[test]
    fn all_crossings_and_direction_filter() {
        let cfg = tight().with_t_max(10.0 * PI + 0.1);
        let ev = EventSpec::new(EventKind::Phi1Zero, 0);
        let tr = integrate(&harmonic, [1.0, 0.0], &cfg, &[ev]).unwrap();
        assert_eq!(tr.events.len(), 10);
        for (n, e) in tr.events.iter().enumerate() {
            let exact = FRAC_PI_2 + n as f64 * PI;
            assert!((e.t - exact).abs() < 1e-8);
        }
        let up = ev.with_filter(DirectionFilter::Increasing);
        let tr = integrate(&harmonic, [1.0, 0.0], &cfg, &[up]).unwrap();
        assert_eq!(tr.events.len(), 5);
        assert!(tr.events.iter().all(|e| e.direction == 1));
    }

    #[test]
    fn periodic_level_crossings() {
        // uniform rotation: phi = t, crossings of pi + 2 pi k
        let rot = |_: &[f64; 2]| [1.0, 0.0];
        let cfg = IntegratorConfig {
            h_max: 10.0,
            h_init: 5.0,
            ..tight().with_t_max(20.0)
        };
        let ev = EventSpec::new(EventKind::Phi2ModPi, 0);
        let tr = integrate(&rot, [0.0, 0.0], &cfg, &[ev]).unwrap();
        let times: Vec<f64> = tr.events.iter().map(|e| e.t).collect();
        assert_eq!(times.len(), 3);
        for (n, t) in times.iter().enumerate() {
            assert!((t - (PI + TAU * n as f64)).abs() < 1e-9);
        }
        // moving backwards
        let back = |_: &[f64; 2]| [-1.0, 0.0];
        let tr = integrate(&back, [0.0, 0.0], &cfg, &[ev]).unwrap();
        assert_eq!(tr.events.len(), 3);
        assert!((tr.events[0].t - PI).abs() < 1e-9);
        assert!(tr.events.iter().all(|e| e.direction == -1));
    }

    #[test]
    fn tolerance_halving_reduces_error() {
        let err_at = |tol: f64| {
            let cfg = IntegratorConfig {
                method: Method::Dopri5,
                ..IntegratorConfig::default().with_tolerances(tol, tol).with_t_max(20.0)
            };
            let y = integrate(&harmonic, [1.0, 0.0], &cfg, &[]).unwrap().last_state();
            ((y[0] - 20f64.cos()).powi(2) + (y[1] + 20f64.sin()).powi(2)).sqrt()
        };
        for tol in [1e-6, 1e-8] {
            let (e1, e2) = (err_at(tol), err_at(tol / 2.0));
            assert!(e2 <= e1 / 2.0 * 1.2, "tol {tol}: {e1} -> {e2}");
        }
    }

    #[test]
    fn zero_horizon_keeps_initial_point() {
        let tr = integrate(&harmonic, [0.3, 0.1], &tight().with_t_max(0.0), &[]).unwrap();
        assert_eq!(tr.times, vec![0.0]);
        assert_eq!(tr.states, vec![[0.3, 0.1]]);
    }

    #[test]
    fn times_strictly_increase() {
        let tr = integrate(&harmonic, [1.0, 0.0], &tight().with_t_max(50.0), &[EventSpec::new(EventKind::V1Zero, 1)])
            .unwrap();
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(tr.times.len(), tr.states.len());
        let (t0, t1) = (tr.times[0], tr.last_time());
        assert!(tr.events.iter().all(|e| e.t >= t0 && e.t <= t1));
    }

    #[test]
    fn truncation_is_reported_not_failed() {
        let cfg = IntegratorConfig {
            max_steps: 10,
            ..tight().with_t_max(100.0)
        };
        let tr = integrate(&harmonic, [1.0, 0.0], &cfg, &[]).unwrap();
        assert!(tr.truncated);
        assert!(tr.last_time() < 100.0);
    }

    #[test]
    fn blow_up_reports_partial_trajectory() {
        // y' = y^2 explodes at t = 1
        let field = |y: &[f64; 1]| [y[0] * y[0]];
        let cfg = IntegratorConfig {
            h_min: 1e-10,
            ..tight().with_t_max(2.0)
        };
        let err = integrate(&field, [1.0], &cfg, &[]).unwrap_err();
        assert!(err.t < 1.0 && err.t > 0.99);
        assert!(err.partial.len() > 10);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = IntegratorConfig {
            h_min: 1.0,
            h_init: 0.1,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = IntegratorConfig {
            rel_tol: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(IntegratorConfig::default().validate().is_ok());
    }

    #[test]
    fn hermite_reproduces_cubic() {
        let y = |t: f64| [t * t * t - 2.0 * t];
        let f = |t: f64| [3.0 * t * t - 2.0];
        let v = hermite(0.5, &y(0.5), &f(0.5), 1.5, &y(1.5), &f(1.5), 1.1);
        assert!((v[0] - y(1.1)[0]).abs() < 1e-14);
    }

    #[test]
    fn crossing_relocation_is_stable() {
        // the same crossing located from two different step sequences
        let ev = EventSpec::new(EventKind::Phi1Zero, 0);
        let a = integrate(&harmonic, [1.0, 0.0], &tight().with_t_max(3.0), &[ev]).unwrap();
        let cfg_b = IntegratorConfig {
            h_max: 0.013,
            ..tight().with_t_max(3.0)
        };
        let b = integrate(&harmonic, [1.0, 0.0], &cfg_b, &[ev]).unwrap();
        let (ea, eb) = (a.events[0], b.events[0]);
        assert!((ea.t - eb.t).abs() * ea.rate.abs() < 2.0 * tight().crossing_tol);
    }
}
