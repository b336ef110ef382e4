//! Sections of trajectory projections, point-cloud diagnostics, and parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Partial, Result};
use crate::integrator::{integrate, DirectionFilter, EventKind, EventSpec, IntegratorConfig};
use crate::lyapunov::{mlce, MlceSettings};
use crate::model::{wrap_angle, FullField, FullState, Params, ReducedState};
use crate::periodic::{detect_periodic, Detection, PeriodicConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionPlane {
    /// Projection to `(phi1, v1, v2)` cut by `v1 = 0`; points are `(phi1 mod 2 pi, v2)`.
    V1ZeroInReducedProjection,
    /// Projection to `(phi1, phi2, v1)` cut by `phi2 = pi (mod 2 pi)`; points are `(phi1 mod 2 pi, v1)`.
    Phi2EqualsPi,
}

impl SectionPlane {
    fn event(self) -> EventSpec {
        match self {
            SectionPlane::V1ZeroInReducedProjection => EventSpec::full(EventKind::V1Zero),
            SectionPlane::Phi2EqualsPi => EventSpec::full(EventKind::Phi2ModPi),
        }
    }

    fn project(self, y: &[f64; 4]) -> (f64, f64) {
        let x = wrap_angle(y[0]);
        match self {
            SectionPlane::V1ZeroInReducedProjection => (x, y[3]),
            SectionPlane::Phi2EqualsPi => (x, y[2]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub x: f64,
    pub y: f64,
    pub direction: i8,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionPointSet {
    pub plane: SectionPlane,
    pub points: Vec<SectionPoint>,
    pub initial: FullState,
    pub params: Params,
    pub filter: DirectionFilter,
    /// Largest `|g|` of the cut coordinate over all crossings.
    pub max_residual: f64,
    /// The requested crossing count was reached.
    pub complete: bool,
}

impl SectionPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xy(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.x, p.y)).collect()
    }

    /// Keeps the first `n` points.
    pub fn truncated_to(&self, n: usize) -> SectionPointSet {
        let mut out = self.clone();
        out.points.truncate(n);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SectionConfig {
    /// `t_max` caps the integration when crossings are slow to accumulate.
    pub integrator: IntegratorConfig,
    pub min_crossings: usize,
    pub filter: DirectionFilter,
}

impl Default for SectionConfig {
    fn default() -> Self {
        SectionConfig {
            integrator: IntegratorConfig::default().with_t_max(1e5).without_states(),
            min_crossings: 500,
            filter: DirectionFilter::Both,
        }
    }
}

/// Cuts the projected trajectory through `s0` by `plane`.
///
/// Integration stops after `min_crossings` points or at `integrator.t_max`.
pub fn section(p: &Params, s0: &FullState, cfg: &SectionConfig, plane: SectionPlane) -> Result<SectionPointSet> {
    let field = FullField::new(*p)?;
    if !s0.is_finite() {
        return Err(Error::domain("non-finite initial state"));
    }
    let icfg = IntegratorConfig {
        record_states: false,
        ..cfg.integrator
    };
    let spec = plane.event().with_filter(cfg.filter).terminal_after(cfg.min_crossings.max(1));
    let collect = |events: &[crate::integrator::Event<4>]| {
        let mut set = SectionPointSet {
            plane,
            points: Vec::with_capacity(events.len()),
            initial: *s0,
            params: *p,
            filter: cfg.filter,
            max_residual: 0.0,
            complete: false,
        };
        for e in events {
            let g = match plane {
                SectionPlane::V1ZeroInReducedProjection => e.state[2],
                SectionPlane::Phi2EqualsPi => wrap_angle(e.state[1]) - std::f64::consts::PI,
            };
            set.max_residual = set.max_residual.max(g.abs());
            let (x, y) = plane.project(&e.state);
            set.points.push(SectionPoint {
                x,
                y,
                direction: e.direction,
                t: e.t,
            });
        }
        set.complete = set.points.len() >= cfg.min_crossings;
        set
    };
    match integrate(&field, s0.to_array(), &icfg, &[spec]) {
        Ok(traj) => Ok(collect(&traj.events)),
        Err(fail) => Err(Error::Integration {
            t: fail.t,
            reason: fail.reason,
            partial: Some(Box::new(Partial::Section(collect(&fail.partial.events)))),
        }),
    }
}

/// Result of the nearest-neighbour collinearity test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveTest {
    /// Largest distance of a point to the line through its two nearest neighbours.
    pub max_distance: f64,
    pub diameter: f64,
    /// `max_distance / diameter`.
    pub ratio: f64,
    pub threshold: f64,
    pub passed: bool,
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Tests whether a planar point cloud lies on one-dimensional curves.
///
/// For each point the two nearest other points define a line; the point's
/// distance to that line, maximized over the cloud and divided by the cloud
/// diameter, must stay below `threshold`. Duplicate neighbours fall back to
/// the point-to-neighbour distance.
pub fn curve_test(points: &[(f64, f64)], threshold: f64) -> CurveTest {
    let n = points.len();
    let mut diameter2: f64 = 0.0;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let a = points[i];
        let (mut b1, mut d1) = (usize::MAX, f64::INFINITY);
        let (mut b2, mut d2) = (usize::MAX, f64::INFINITY);
        for (j, &b) in points.iter().enumerate() {
            if j == i {
                continue;
            }
            let d = dist2(a, b);
            diameter2 = diameter2.max(d);
            if d < d1 {
                (b2, d2) = (b1, d1);
                (b1, d1) = (j, d);
            } else if d < d2 {
                (b2, d2) = (j, d);
            }
        }
        if b2 == usize::MAX {
            continue;
        }
        let (p, q) = (points[b1], points[b2]);
        let (dx, dy) = (q.0 - p.0, q.1 - p.1);
        let len = dx.hypot(dy);
        let d = if len > 1e-12 * (1.0 + d2.sqrt()) {
            ((a.0 - p.0) * dy - (a.1 - p.1) * dx).abs() / len
        } else {
            d1.sqrt()
        };
        worst = worst.max(d);
    }
    let diameter = diameter2.sqrt();
    let ratio = if diameter > 0.0 { worst / diameter } else { 0.0 };
    CurveTest {
        max_distance: worst,
        diameter,
        ratio,
        threshold,
        passed: n >= 3 && ratio < threshold,
    }
}

/// Convex hull in counter-clockwise order (Andrew's monotone chain).
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Area enclosed by the convex hull.
pub fn hull_area(points: &[(f64, f64)]) -> f64 {
    let h = convex_hull(points);
    if h.len() < 3 {
        return 0.0;
    }
    let twice: f64 = (0..h.len())
        .map(|i| {
            let (a, b) = (h[i], h[(i + 1) % h.len()]);
            a.0 * b.1 - a.1 * b.0
        })
        .sum();
    0.5 * twice.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Regular,
    Chaotic,
}

/// One swept value and whatever was measured for it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepEntry {
    pub index: usize,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periodic: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossings: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub section_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveTest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hull_area: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    /// Curve test and exponent threshold give the same verdict.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics_agree: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Interval of the swept force in which the second crossing disappears.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceBracket {
    /// Largest force still re-crossing `phi1 = 0`.
    pub lower: f64,
    /// Smallest force that does not.
    pub upper: f64,
    /// Number of re-crossing to non-re-crossing transitions along the sweep grid.
    pub transitions: usize,
    /// Number of transitions back to re-crossing further along the grid.
    pub reentries: usize,
    pub bisections: usize,
}

impl ForceBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: String,
    pub values: Vec<f64>,
    pub entries: Vec<SweepEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critical: Option<ForceBracket>,
    /// Section per entry, for sweeps that compute them.
    #[serde(skip)]
    pub sections: Vec<Option<SectionPointSet>>,
}

impl SweepResult {
    pub fn regimes(&self) -> Vec<Option<Regime>> {
        self.entries.iter().map(|e| e.regime).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForceSweepConfig {
    pub periodic: PeriodicConfig,
    /// Bisect the first transition until the bracket is narrower than this; `0` disables.
    pub refine_width: f64,
}

impl Default for ForceSweepConfig {
    fn default() -> Self {
        ForceSweepConfig {
            periodic: PeriodicConfig::default(),
            refine_width: 0.01,
        }
    }
}

fn recrosses(p: &Params, s0: ReducedState, cfg: &PeriodicConfig) -> Result<(Detection, bool)> {
    let d = detect_periodic(p, s0, cfg)?;
    let second = d.crossings() >= 2;
    Ok((d, second))
}

/// Runs periodic-orbit detection at each force in `f_values` and brackets the
/// first force at which the trajectory stops returning to `phi1 = 0`.
pub fn force_sweep(
    p_base: &Params,
    s0: ReducedState,
    f_values: &[f64],
    cfg: &ForceSweepConfig,
) -> Result<SweepResult> {
    p_base.validate()?;
    p_base.require_free_pivot()?;
    if f_values.is_empty() {
        return Err(Error::Config("force sweep needs at least one value".into()));
    }
    let outcomes: Vec<(SweepEntry, Option<bool>)> = f_values
        .par_iter()
        .enumerate()
        .map(|(index, &f)| {
            let mut entry = SweepEntry {
                index,
                value: f,
                ..Default::default()
            };
            match recrosses(&p_base.with_force(f), s0, &cfg.periodic) {
                Ok((d, second)) => {
                    entry.periodic = Some(d.is_periodic());
                    entry.crossings = Some(d.crossings());
                    entry.period = d.orbit().map(|o| o.period);
                    (entry, Some(second))
                }
                Err(e) => {
                    entry.error = Some(e.to_string());
                    (entry, None)
                }
            }
        })
        .collect();

    let mut transitions = 0;
    let mut reentries = 0;
    let mut first: Option<(f64, f64)> = None;
    for w in outcomes.windows(2) {
        match (w[0].1, w[1].1) {
            (Some(true), Some(false)) => {
                transitions += 1;
                first.get_or_insert((w[0].0.value, w[1].0.value));
            }
            (Some(false), Some(true)) => reentries += 1,
            _ => {}
        }
    }
    let critical = match first {
        None => None,
        Some((mut lo, mut hi)) => {
            let mut bisections = 0;
            while cfg.refine_width > 0.0 && hi - lo >= cfg.refine_width && bisections < 60 {
                let mid = 0.5 * (lo + hi);
                match recrosses(&p_base.with_force(mid), s0, &cfg.periodic) {
                    Ok((_, true)) => lo = mid,
                    Ok((_, false)) => hi = mid,
                    Err(e) => {
                        log::warn!("bisection stopped at F = {mid}: {e}");
                        break;
                    }
                }
                bisections += 1;
            }
            Some(ForceBracket {
                lower: lo,
                upper: hi,
                transitions,
                reentries,
                bisections,
            })
        }
    };
    Ok(SweepResult {
        parameter: "force".into(),
        values: f_values.to_vec(),
        entries: outcomes.into_iter().map(|(e, _)| e).collect(),
        critical,
        sections: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcSweepConfig {
    pub section: SectionConfig,
    /// Integrator for the exponent runs.
    pub integrator: IntegratorConfig,
    pub mlce: MlceSettings,
    pub chi_threshold: f64,
    pub curve_threshold: f64,
}

impl Default for IcSweepConfig {
    fn default() -> Self {
        IcSweepConfig {
            section: SectionConfig::default(),
            integrator: IntegratorConfig::default(),
            mlce: MlceSettings::default(),
            chi_threshold: 0.01,
            curve_threshold: 0.01,
        }
    }
}

impl IcSweepConfig {
    /// Twice the crossings and half the step cap and renormalization interval.
    pub fn refined(&self) -> IcSweepConfig {
        let mut c = *self;
        c.section.min_crossings *= 2;
        c.section.integrator.h_max *= 0.5;
        c.section.integrator.t_max *= 2.0;
        c.integrator.h_max *= 0.5;
        c.mlce.renorm_interval *= 0.5;
        c
    }
}

/// Initial condition `(pi, 0, v1, v2_scale * (n + 1))` for sweep index `n`.
pub fn ic_family(n: usize, v1: f64, v2_step: f64) -> FullState {
    FullState::new(std::f64::consts::PI, 0.0, v1, v2_step * (n as f64 + 1.0))
}

fn classify(p: &Params, s0: &FullState, index: usize, cfg: &IcSweepConfig) -> (SweepEntry, Option<SectionPointSet>) {
    let mut entry = SweepEntry {
        index,
        value: s0.v2,
        ..Default::default()
    };
    let sec = match section(p, s0, &cfg.section, SectionPlane::V1ZeroInReducedProjection) {
        Ok(s) => s,
        Err(e) => {
            entry.error = Some(e.to_string());
            return (entry, None);
        }
    };
    let xy = sec.xy();
    let curve = curve_test(&xy, cfg.curve_threshold);
    entry.section_points = Some(sec.len());
    entry.curve = Some(curve);
    entry.hull_area = Some(hull_area(&xy));
    match mlce(p, s0, &cfg.integrator, &cfg.mlce).and_then(|r| r.final_chi().ok_or_else(|| Error::domain("no exponent"))) {
        Ok(chi) => {
            entry.chi = Some(chi);
            let small = chi < cfg.chi_threshold;
            entry.diagnostics_agree = Some(small == curve.passed);
            entry.regime = Some(if small && curve.passed {
                Regime::Regular
            } else {
                Regime::Chaotic
            });
            if !entry.diagnostics_agree.unwrap_or(true) {
                log::warn!(
                    "index {index}: exponent {chi:.3e} and curve ratio {:.3e} disagree",
                    curve.ratio
                );
            }
        }
        Err(e) => entry.error = Some(e.to_string()),
    }
    (entry, Some(sec))
}

/// Sections and exponents for a list of initial conditions, classified as
/// regular when the exponent is below threshold and the section is a curve.
pub fn ic_sweep(p: &Params, ics: &[FullState], cfg: &IcSweepConfig) -> Result<SweepResult> {
    p.validate()?;
    if ics.is_empty() {
        return Err(Error::Config("initial-condition sweep needs at least one state".into()));
    }
    let results: Vec<(SweepEntry, Option<SectionPointSet>)> = ics
        .par_iter()
        .enumerate()
        .map(|(i, s0)| classify(p, s0, i, cfg))
        .collect();
    let (entries, sections): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(SweepResult {
        parameter: "v2".into(),
        values: ics.iter().map(|s| s.v2).collect(),
        entries,
        critical: None,
        sections,
    })
}
