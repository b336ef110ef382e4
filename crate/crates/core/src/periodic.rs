//! Periodic orbits of the reduced system from its reversing symmetry.
//!
//! The reduced field is reversible under `R(phi1, v1, v2) = (-phi1, v1, v2)`:
//! if `x(t)` is a solution so is `R x(-t)`. A solution through the fixed plane
//! `phi1 = 0` at two times `t_a < t_b` is therefore periodic with period
//! `2 (t_b - t_a)`: reflecting the segment between the crossings closes it.
//! [`detect_periodic`] looks for those two crossings and then checks the
//! closure by direct integration over the candidate period.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate, EventKind, EventSpec, IntegratorConfig, VectorField};
use crate::model::{Params, ReducedField, ReducedState};

/// `(U, V)` of the `phi2'` elimination `phi2' = (K - V phi1') / U`, as commonly written.
///
/// `V` equals `A12`. The `U` here lacks the `m3 l3^2` term of `A22`
/// (see [`inertia_gap`]); every quantity derived from it inherits that.
pub fn uv_functions(p: &Params, phi1: f64) -> (f64, f64) {
    let (m1, m2, m3, l1, l2, l3) = (p.m1, p.m2, p.m3, p.l1, p.l2, p.l3);
    let c = phi1.cos();
    let v = m1 * l1 * l1 + m3 * l3 * l3 + m1 * l1 * l2 * c - m3 * l2 * l3 * c;
    let u = m1 * l1 * l1 + m1 * l2 * l2 + m2 * l2 * l2 + m3 * l2 * l2 + 2.0 * m1 * l1 * l2 * c
        - 2.0 * m3 * l2 * l3 * c;
    (u, v)
}

/// `A22 - U`, which is `m3 l3^2` for every angle.
pub fn inertia_gap(p: &Params, phi1: f64) -> f64 {
    let (_, _, a22) = crate::model::inertia(p, phi1);
    a22 - uv_functions(p, phi1).0
}

/// Energy restricted to a level `K` of the momentum integral, as a function of
/// `(phi1, phi1')` after eliminating `phi2'` with [`uv_functions`].
pub fn energy_on_momentum_level(p: &Params, phi1: f64, v1: f64, k: f64) -> f64 {
    let (u, v) = uv_functions(p, phi1);
    let w2 = (k - v * v1) / u;
    let w12 = (k + (u - v) * v1) / u;
    0.5 * p.rod_inertia() * w2 * w2
        + 0.5 * p.bar_inertia() * w12 * w12
        + w2 * w12 * phi1.cos() * p.coupling()
        + 0.5 * p.k1 * phi1 * phi1
}

/// Stationary `phi1'` of [`energy_on_momentum_level`] on the axis `phi1 = 0`.
pub fn critical_v1(p: &Params, k: f64) -> f64 {
    let (u, v) = uv_functions(p, 0.0);
    let rod = p.rod_inertia();
    let bar = p.bar_inertia();
    let c = p.coupling();
    let num = v * k * rod + k * (v - u) * bar + (2.0 * v - u) * k * c;
    let den = v * v * rod + (u - v) * (u - v) * bar - 2.0 * v * (u - v) * c;
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeriodicConfig {
    pub integrator: IntegratorConfig,
    /// How long to search for the two crossings.
    pub horizon: f64,
    /// Largest accepted sup-norm mismatch after one period.
    pub return_tol: f64,
}

impl Default for PeriodicConfig {
    fn default() -> Self {
        PeriodicConfig {
            integrator: IntegratorConfig::default().with_tolerances(1e-12, 1e-14),
            horizon: 500.0,
            return_tol: 1e-6,
        }
    }
}

impl PeriodicConfig {
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    /// First crossing of `phi1 = 0`; the orbit is checked from here.
    pub anchor: ReducedState,
    pub period: f64,
    pub crossing_states: [ReducedState; 2],
    pub crossing_times: [f64; 2],
    pub return_defect: f64,
    /// Transversal `phi1 = 0` crossings in one period, counting the anchor.
    pub crossings_per_period: usize,
    pub params: Params,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum NotPeriodicReason {
    /// Fewer than two crossings of `phi1 = 0` before the horizon.
    NoSecondCrossing { crossings: usize, searched_until: f64 },
    /// The candidate period did not close the orbit.
    DefectTooLarge { period: f64, defect: f64 },
    /// A crossing with `|phi1'|` below the transversality threshold.
    NonTransversal { t: f64, rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NotPeriodicReport {
    pub initial: ReducedState,
    pub reason: NotPeriodicReason,
    pub params: Params,
}

impl NotPeriodicReport {
    /// Crossings seen before giving up (`2` when the rejection came later).
    pub fn crossings(&self) -> usize {
        match self.reason {
            NotPeriodicReason::NoSecondCrossing { crossings, .. } => crossings,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Detection {
    Periodic(PeriodicOrbit),
    #[serde(rename = "not_periodic_within_horizon")]
    NotPeriodic(NotPeriodicReport),
}

impl Detection {
    pub fn orbit(&self) -> Option<&PeriodicOrbit> {
        match self {
            Detection::Periodic(o) => Some(o),
            Detection::NotPeriodic(_) => None,
        }
    }

    pub fn is_periodic(&self) -> bool {
        self.orbit().is_some()
    }

    /// Number of `phi1 = 0` crossings found in the search (capped at 2).
    pub fn crossings(&self) -> usize {
        match self {
            Detection::Periodic(_) => 2,
            Detection::NotPeriodic(r) => r.crossings(),
        }
    }
}

/// Searches for a symmetric periodic orbit of the reduced system through `s0`.
pub fn detect_periodic(p: &Params, s0: ReducedState, cfg: &PeriodicConfig) -> Result<Detection> {
    let field = ReducedField::new(*p)?;
    detect_periodic_with(&field, p, s0, cfg)
}

/// [`detect_periodic`] for any reversible reduced field (`p` is only echoed).
pub fn detect_periodic_with<F: VectorField<3>>(
    field: &F,
    p: &Params,
    s0: ReducedState,
    cfg: &PeriodicConfig,
) -> Result<Detection> {
    cfg.integrator.validate()?;
    if !s0.is_finite() {
        return Err(Error::domain("non-finite initial state"));
    }
    if !(cfg.horizon > 0.0 && cfg.return_tol > 0.0) {
        return Err(Error::Config("horizon and return_tol must be positive".into()));
    }
    let icfg = &cfg.integrator;
    let report = |reason| {
        Ok(Detection::NotPeriodic(NotPeriodicReport {
            initial: s0,
            reason,
            params: *p,
        }))
    };

    let mut y0 = s0.to_array();
    let mut crossings: Vec<(f64, [f64; 3])> = Vec::with_capacity(2);
    if s0.phi1.abs() < icfg.crossing_tol {
        let rate = field.rhs(&y0)[0];
        if rate.abs() <= icfg.transversality {
            return report(NotPeriodicReason::NonTransversal { t: 0.0, rate });
        }
        y0[0] = 0.0;
        crossings.push((0.0, y0));
    }

    let needed = 2 - crossings.len();
    let search = IntegratorConfig {
        t_max: cfg.horizon,
        record_states: false,
        ..*icfg
    };
    let spec = EventSpec::reduced(EventKind::Phi1Zero).terminal_after(needed);
    let traj = integrate(field, y0, &search, &[spec])?;
    for e in &traj.events {
        if !e.is_transversal(icfg.transversality) {
            return report(NotPeriodicReason::NonTransversal { t: e.t, rate: e.rate });
        }
        crossings.push((e.t, e.state));
    }
    if crossings.len() < 2 {
        return report(NotPeriodicReason::NoSecondCrossing {
            crossings: crossings.len(),
            searched_until: traj.last_time(),
        });
    }

    let (ta, anchor) = crossings[0];
    let (tb, second) = crossings[1];
    let period = 2.0 * (tb - ta);

    let check = IntegratorConfig {
        t_max: period,
        record_states: false,
        ..*icfg
    };
    let spec = EventSpec::reduced(EventKind::Phi1Zero);
    let closing = integrate(field, anchor, &check, &[spec])?;
    let end = closing.last_state();
    let defect = end
        .iter()
        .zip(&anchor)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let margin = 1e-3 * period;
    let interior = closing
        .events
        .iter()
        .filter(|e| e.t > margin && e.t < period - margin && e.is_transversal(icfg.transversality))
        .count();

    if !(defect < cfg.return_tol) {
        return report(NotPeriodicReason::DefectTooLarge { period, defect });
    }
    Ok(Detection::Periodic(PeriodicOrbit {
        anchor: ReducedState::from_array(anchor),
        period,
        crossing_states: [ReducedState::from_array(anchor), ReducedState::from_array(second)],
        crossing_times: [ta, tb],
        return_defect: defect,
        crossings_per_period: 1 + interior,
        params: *p,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Axis { min, max, count }
    }

    pub fn centered(center: f64, half_width: f64, count: usize) -> Self {
        Axis::new(center - half_width, center + half_width, count)
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.count <= 1 {
            return 0.5 * (self.min + self.max);
        }
        self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }
}

/// Anchor-plane grid: columns vary `v1`, rows vary `v2`, all at `phi1 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyGridSpec {
    pub v1: Axis,
    pub v2: Axis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Periodic { period: f64, return_defect: f64 },
    NotPeriodic { reason: NotPeriodicReason },
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCell {
    pub v1: f64,
    pub v2: f64,
    pub outcome: CellOutcome,
}

impl FamilyCell {
    pub fn period(&self) -> Option<f64> {
        match self.outcome {
            CellOutcome::Periodic { period, .. } => Some(period),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyGrid {
    pub spec: FamilyGridSpec,
    /// Row-major: `cells[row * v1.count + col]`, row indexing `v2`.
    pub cells: Vec<FamilyCell>,
    pub params: Params,
}

/// Worst period jump along grid rows relative to the row's typical step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub rows_checked: usize,
    /// Largest `jump / (10 * median + floor)` over rows; `<= 1` means continuous.
    pub worst_ratio: f64,
}

impl ContinuityReport {
    pub fn is_continuous(&self) -> bool {
        self.worst_ratio <= 1.0
    }
}

impl FamilyGrid {
    pub fn rows(&self) -> usize {
        self.spec.v2.count
    }

    pub fn cols(&self) -> usize {
        self.spec.v1.count
    }

    pub fn cell(&self, row: usize, col: usize) -> &FamilyCell {
        &self.cells[row * self.cols() + col]
    }

    pub fn periodic_count(&self) -> usize {
        self.cells.iter().filter(|c| c.period().is_some()).count()
    }

    /// Size of the largest 4-connected set of periodic cells.
    pub fn largest_periodic_region(&self) -> usize {
        let (rows, cols) = (self.rows(), self.cols());
        let mut seen = vec![false; rows * cols];
        let mut best = 0;
        for start in 0..rows * cols {
            if seen[start] || self.cells[start].period().is_none() {
                continue;
            }
            let mut stack = vec![start];
            seen[start] = true;
            let mut size = 0;
            while let Some(i) = stack.pop() {
                size += 1;
                let (r, c) = (i / cols, i % cols);
                let mut visit = |j: usize| {
                    if !seen[j] && self.cells[j].period().is_some() {
                        seen[j] = true;
                        stack.push(j);
                    }
                };
                if r > 0 {
                    visit(i - cols);
                }
                if r + 1 < rows {
                    visit(i + cols);
                }
                if c > 0 {
                    visit(i - 1);
                }
                if c + 1 < cols {
                    visit(i + 1);
                }
            }
            best = best.max(size);
        }
        best
    }

    /// Compares each neighbour jump in period along a row with ten times the
    /// row's median jump. `floor` absorbs rows on which the period is flat.
    pub fn row_continuity(&self, floor: f64) -> ContinuityReport {
        let mut worst: f64 = 0.0;
        let mut rows_checked = 0;
        for r in 0..self.rows() {
            let mut diffs: Vec<f64> = (1..self.cols())
                .filter_map(|c| {
                    let a = self.cell(r, c - 1).period()?;
                    let b = self.cell(r, c).period()?;
                    Some((b - a).abs())
                })
                .collect();
            if diffs.len() < 2 {
                continue;
            }
            rows_checked += 1;
            let max = diffs.iter().cloned().fold(0.0, f64::max);
            diffs.sort_by(f64::total_cmp);
            let mid = diffs.len() / 2;
            let median = if diffs.len() % 2 == 0 {
                0.5 * (diffs[mid - 1] + diffs[mid])
            } else {
                diffs[mid]
            };
            worst = worst.max(max / (10.0 * median + floor));
        }
        ContinuityReport {
            rows_checked,
            worst_ratio: worst,
        }
    }
}

/// Runs [`detect_periodic`] on every anchor of the grid (in parallel).
pub fn map_family(p: &Params, grid: &FamilyGridSpec, cfg: &PeriodicConfig) -> Result<FamilyGrid> {
    let field = ReducedField::new(*p)?;
    map_family_with(&field, p, grid, cfg)
}

/// [`map_family`] for any reversible reduced field.
pub fn map_family_with<F: VectorField<3>>(
    field: &F,
    p: &Params,
    grid: &FamilyGridSpec,
    cfg: &PeriodicConfig,
) -> Result<FamilyGrid> {
    cfg.integrator.validate()?;
    if grid.v1.count == 0 || grid.v2.count == 0 {
        return Err(Error::Config("family grid axes must be non-empty".into()));
    }
    let cols = grid.v1.count;
    let cells = (0..grid.v1.count * grid.v2.count)
        .into_par_iter()
        .map(|i| {
            let (v1, v2) = (grid.v1.value(i % cols), grid.v2.value(i / cols));
            let outcome = match detect_periodic_with(field, p, ReducedState::new(0.0, v1, v2), cfg) {
                Ok(Detection::Periodic(o)) => CellOutcome::Periodic {
                    period: o.period,
                    return_defect: o.return_defect,
                },
                Ok(Detection::NotPeriodic(r)) => CellOutcome::NotPeriodic { reason: r.reason },
                Err(e) => CellOutcome::Failed {
                    message: e.to_string(),
                },
            };
            FamilyCell { v1, v2, outcome }
        })
        .collect();
    Ok(FamilyGrid {
        spec: *grid,
        cells,
        params: *p,
    })
}
