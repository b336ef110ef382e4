use std::io::Read;
use std::path::Path;

use serde_json::{json, Value};
use ziegler_core::analysis::{curve_test, hull_area, SweepResult};
use ziegler_core::observables::relative_drift;
use ziegler_core::periodic::CellOutcome;
use ziegler_core::{
    detect_periodic, energy, force_sweep, ic_sweep, integrate, map_family, mlce, momentum_integral, section, Error,
    FullField, FullState, LyapunovRecord, Partial, ReducedField, SectionPointSet, Trajectory,
};

use crate::config::{Range, RunConfig, Sweep, System, Task};
use crate::error::CliError;
use crate::output::{num, opt, opt_num, OutDir, RunRecord};

const FULL_HEADER: [&str; 5] = ["t", "phi1", "phi2", "v1", "v2"];
const REDUCED_HEADER: [&str; 4] = ["t", "phi1", "v1", "v2"];

pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let mut out = OutDir::create(out_dir)?;
    let mut record = RunRecord::new(cfg);
    let result = match &cfg.task {
        Task::Simulate { system, initial, events } => simulate(cfg, *system, initial, events, &mut out, &mut record),
        Task::Observe { input } => observe(cfg, input, &mut out, &mut record),
        Task::Periodic { initial, periodic } => {
            let d = detect_periodic(&cfg.params, *initial, periodic)?;
            record.summary = json!({ "periodic": d.is_periodic() });
            out.write_json("periodic.json", &d)
        }
        Task::Mlce { initial, mlce: settings } => match mlce(&cfg.params, initial, &cfg.integrator, settings) {
            Ok(rec) => write_mlce(&rec, &mut out, &mut record),
            Err(e) => salvage(e, &mut out, &mut record, |p, out, record| match p {
                Partial::Lyapunov(rec) => write_mlce(rec, out, record),
                _ => Ok(()),
            }),
        },
        Task::Section { initial, plane, section: scfg } => match section(&cfg.params, initial, scfg, *plane) {
            Ok(s) => write_section("section.csv", &s, &mut out, &mut record),
            Err(e) => salvage(e, &mut out, &mut record, |p, out, record| match p {
                Partial::Section(s) => write_section("section.csv", s, out, record),
                _ => Ok(()),
            }),
        },
        Task::Sweep { sweep } => run_sweep(cfg, sweep, &mut out, &mut record),
    };
    match result {
        Ok(()) => out.finish(cfg, record),
        Err(e) => {
            if record.truncated {
                record.failure = Some(e.to_string());
                out.finish(cfg, record)?;
            }
            Err(e)
        }
    }
}

/// Writes whatever partial result the failure carries, marks the run truncated,
/// and passes the error on.
fn salvage(
    e: Error,
    out: &mut OutDir,
    record: &mut RunRecord,
    write: impl FnOnce(&Partial, &mut OutDir, &mut RunRecord) -> Result<(), CliError>,
) -> Result<(), CliError> {
    if let Some(p) = e.partial() {
        log::warn!("{e}; flushing partial results");
        write(p, out, record)?;
        record.truncated = true;
    }
    Err(e.into())
}

fn simulate(
    cfg: &RunConfig,
    system: System,
    initial: &[f64],
    events: &[ziegler_core::EventKind],
    out: &mut OutDir,
    record: &mut RunRecord,
) -> Result<(), CliError> {
    let specs = RunConfig::event_specs(events, system);
    match system {
        System::Full => {
            let field = FullField::new(cfg.params)?;
            let y0: [f64; 4] = initial.try_into().expect("validated length");
            let res = integrate(&field, y0, &cfg.integrator, &specs).map_err(Error::from);
            finish_trajectory(res, &FULL_HEADER, out, record, |p| match p {
                Partial::Full(t) => Some(t),
                _ => None,
            })
        }
        System::Reduced => {
            let field = ReducedField::new(cfg.params)?;
            let y0: [f64; 3] = initial.try_into().expect("validated length");
            let res = integrate(&field, y0, &cfg.integrator, &specs).map_err(Error::from);
            finish_trajectory(res, &REDUCED_HEADER, out, record, |p| match p {
                Partial::Reduced(t) => Some(t),
                _ => None,
            })
        }
    }
}

fn finish_trajectory<const N: usize>(
    res: ziegler_core::Result<Trajectory<N>>,
    header: &[&str],
    out: &mut OutDir,
    record: &mut RunRecord,
    pick: impl Fn(&Partial) -> Option<&Trajectory<N>>,
) -> Result<(), CliError> {
    match res {
        Ok(traj) => write_trajectory(&traj, header, out, record),
        Err(e) => salvage(e, out, record, |p, out, record| match pick(p) {
            Some(traj) => write_trajectory(traj, header, out, record),
            None => Ok(()),
        }),
    }
}

fn write_trajectory<const N: usize>(
    traj: &Trajectory<N>,
    header: &[&str],
    out: &mut OutDir,
    record: &mut RunRecord,
) -> Result<(), CliError> {
    let rows = traj.times.iter().zip(&traj.states).map(|(t, y)| {
        let mut row = Vec::with_capacity(N + 1);
        row.push(num(*t));
        row.extend(y.iter().map(|x| num(*x)));
        row
    });
    out.write_csv("trajectory.csv", header, rows)?;
    record.events = serde_json::to_value(&traj.events).unwrap_or(Value::Null);
    record.truncated |= traj.truncated;
    if traj.truncated {
        log::warn!("step budget exhausted at t = {}", traj.last_time());
    }
    record.summary = json!({
        "rows": traj.len(),
        "final_time": traj.last_time(),
        "stats": traj.stats,
    });
    Ok(())
}

fn read_input(input: &Path) -> Result<String, CliError> {
    if input.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::io("standard input", e))?;
        Ok(s)
    } else {
        std::fs::read_to_string(input).map_err(|e| CliError::io(input.display(), e))
    }
}

fn observe(cfg: &RunConfig, input: &Path, out: &mut OutDir, record: &mut RunRecord) -> Result<(), CliError> {
    let text = read_input(input)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::config(format!("trajectory input: {e}")))?
        .iter()
        .map(String::from)
        .collect();
    let full = if header == FULL_HEADER {
        true
    } else if header == REDUCED_HEADER {
        false
    } else {
        return Err(CliError::config(format!("unrecognized trajectory header {header:?}")));
    };
    let (mut rows, mut h, mut k) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::config(format!("trajectory input: {e}")))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::config(format!("trajectory row {}: {e}", line + 1)))?;
        let s = if full {
            FullState::new(v[1], v[2], v[3], v[4])
        } else {
            FullState::new(v[1], 0.0, v[2], v[3])
        };
        let (e, m) = (energy(&cfg.params, &s), momentum_integral(&cfg.params, &s));
        h.push(e);
        k.push(m);
        let mut row: Vec<String> = rec.iter().map(String::from).collect();
        row.push(num(e));
        row.push(num(m));
        rows.push(row);
    }
    let mut cols: Vec<&str> = header.iter().map(String::as_str).collect();
    cols.extend(["H", "K"]);
    out.write_csv("observed.csv", &cols, rows)?;
    record.summary = json!({
        "rows": h.len(),
        "relative_drift_H": relative_drift(&h, 1e-12),
        "relative_drift_K": relative_drift(&k, 1e-12),
    });
    Ok(())
}

fn write_mlce(rec: &LyapunovRecord, out: &mut OutDir, record: &mut RunRecord) -> Result<(), CliError> {
    let rows = rec.times.iter().zip(&rec.chi).map(|(t, c)| vec![num(*t), num(*c)]);
    out.write_csv("mlce.csv", &["t", "chi"], rows)?;
    let log = rec
        .times
        .iter()
        .zip(&rec.log_growth)
        .zip(&rec.cumulative)
        .map(|((t, g), c)| vec![num(*t), num(*g), num(*c)]);
    out.write_csv("renorm.csv", &["t", "log_growth", "cumulative"], log)?;
    record.summary = json!({
        "final_chi": rec.final_chi(),
        "final_time": rec.final_time(),
        "last_decade_min": rec.last_decade_min(),
        "seed": rec.seed,
        "initial_tangent": rec.initial_tangent,
        "density_range": rec.density_range,
    });
    Ok(())
}

fn section_rows(s: &SectionPointSet) -> impl Iterator<Item = Vec<String>> + '_ {
    s.points
        .iter()
        .map(|q| vec![num(q.x), num(q.y), q.direction.to_string(), num(q.t)])
}

fn write_section(name: &str, s: &SectionPointSet, out: &mut OutDir, record: &mut RunRecord) -> Result<(), CliError> {
    out.write_csv(name, &["x", "y", "direction", "t"], section_rows(s))?;
    let xy = s.xy();
    record.summary = json!({
        "points": s.len(),
        "complete": s.complete,
        "max_residual": s.max_residual,
        "curve_test": curve_test(&xy, 0.01),
        "hull_area": hull_area(&xy),
    });
    Ok(())
}

fn run_sweep(cfg: &RunConfig, sweep: &Sweep, out: &mut OutDir, record: &mut RunRecord) -> Result<(), CliError> {
    match sweep {
        Sweep::Force { initial, force, config } => {
            let values = Range::values(force)?;
            let r = force_sweep(&cfg.params, *initial, &values, config)?;
            let rows = r.entries.iter().map(|e| {
                vec![
                    e.index.to_string(),
                    num(e.value),
                    opt(e.periodic),
                    opt(e.crossings),
                    opt_num(e.period),
                    e.error.clone().unwrap_or_default(),
                ]
            });
            out.write_csv("sweep.csv", &["index", "force", "periodic", "crossings", "period", "error"], rows)?;
            record.summary = json!({ "critical": r.critical });
            Ok(())
        }
        Sweep::InitialConditions { family, initials, config } => {
            let ics = Sweep::initial_conditions(family, initials)?;
            let r = ic_sweep(&cfg.params, &ics, config)?;
            write_ic_sweep(&r, out, record)
        }
        Sweep::Family { grid, periodic } => {
            let g = map_family(&cfg.params, grid, periodic)?;
            let rows = g.cells.iter().map(|c| {
                let (status, period, defect) = match &c.outcome {
                    CellOutcome::Periodic { period, return_defect } => ("periodic", num(*period), num(*return_defect)),
                    CellOutcome::NotPeriodic { .. } => ("not_periodic_within_horizon", String::new(), String::new()),
                    CellOutcome::Failed { .. } => ("failed", String::new(), String::new()),
                };
                vec![num(c.v1), num(c.v2), status.to_string(), period, defect]
            });
            out.write_csv("family.csv", &["v1", "v2", "status", "period", "return_defect"], rows)?;
            let continuity = g.row_continuity(1e-9);
            record.summary = json!({
                "periodic_cells": g.periodic_count(),
                "largest_periodic_region": g.largest_periodic_region(),
                "continuity": continuity,
                "continuous": continuity.is_continuous(),
            });
            Ok(())
        }
    }
}

fn write_ic_sweep(r: &SweepResult, out: &mut OutDir, record: &mut RunRecord) -> Result<(), CliError> {
    let mut artifacts = Vec::with_capacity(r.entries.len());
    for (i, s) in r.sections.iter().enumerate() {
        match s {
            Some(s) => {
                let name = format!("section_{i:03}.csv");
                out.write_csv(&name, &["x", "y", "direction", "t"], section_rows(s))?;
                artifacts.push(name);
            }
            None => artifacts.push(String::new()),
        }
    }
    let rows = r.entries.iter().zip(&artifacts).map(|(e, a)| {
        vec![
            e.index.to_string(),
            num(e.value),
            opt_num(e.chi),
            opt(e.section_points),
            opt_num(e.curve.map(|c| c.ratio)),
            opt_num(e.hull_area),
            e.regime
                .map(|g| serde_json::to_value(g).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
                .unwrap_or_default(),
            opt(e.diagnostics_agree),
            e.error.clone().unwrap_or_default(),
            a.clone(),
        ]
    });
    out.write_csv(
        "sweep.csv",
        &[
            "index",
            "v2",
            "chi",
            "section_points",
            "curve_ratio",
            "hull_area",
            "regime",
            "diagnostics_agree",
            "error",
            "section_file",
        ],
        rows,
    )?;
    record.summary = json!({
        "regimes": r.regimes(),
        "errors": r.entries.iter().filter(|e| e.error.is_some()).count(),
    });
    Ok(())
}
