//! Run configuration files.
//!
//! A run is described by one JSON document. The `task` object is tagged by
//! `command` and must match the subcommand on the command line. Sidecars
//! written next to the outputs are valid configurations themselves.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ziegler_core::analysis::ic_family;
use ziegler_core::periodic::FamilyGridSpec;
use ziegler_core::{
    EventKind, EventSpec, ForceSweepConfig, FullState, IcSweepConfig, IntegratorConfig, MlceSettings, Params,
    PeriodicConfig, ReducedState, SectionConfig, SectionPlane,
};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub params: Params,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub task: Task,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    #[default]
    Full,
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Task {
    Simulate {
        #[serde(default)]
        system: System,
        /// `(phi1, phi2, v1, v2)` for the full system, `(phi1, v1, v2)` for the reduced one.
        initial: Vec<f64>,
        #[serde(default)]
        events: Vec<EventKind>,
    },
    Observe {
        /// Trajectory CSV to annotate; `-` reads standard input.
        input: PathBuf,
    },
    Periodic {
        initial: ReducedState,
        #[serde(default)]
        periodic: PeriodicConfig,
    },
    Mlce {
        initial: FullState,
        #[serde(default)]
        mlce: MlceSettings,
    },
    Section {
        initial: FullState,
        #[serde(default = "default_plane")]
        plane: SectionPlane,
        #[serde(default)]
        section: SectionConfig,
    },
    Sweep {
        sweep: Sweep,
    },
}

fn default_plane() -> SectionPlane {
    SectionPlane::V1ZeroInReducedProjection
}

/// Evenly spaced values `start, start + step, ...` up to and including `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        if !(self.step > 0.0 && self.start.is_finite() && self.stop >= self.start) {
            return Err(CliError::config("range needs finite start <= stop and a positive step"));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.start + self.step * i as f64).collect())
    }
}

/// Initial conditions `(pi, 0, v1, v2_step * (n + 1))` for `n < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcFamily {
    pub v1: f64,
    pub v2_step: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sweep {
    /// Periodic-orbit detection along a range of follower forces.
    Force {
        initial: ReducedState,
        force: Range,
        #[serde(default)]
        config: ForceSweepConfig,
    },
    /// Section and exponent for a list of initial conditions.
    InitialConditions {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        family: Option<IcFamily>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        initials: Vec<FullState>,
        #[serde(default)]
        config: IcSweepConfig,
    },
    /// Periodic-orbit detection on a grid of anchors on `phi1 = 0`.
    Family {
        grid: FamilyGridSpec,
        #[serde(default)]
        periodic: PeriodicConfig,
    },
}

impl Sweep {
    pub fn initial_conditions(family: &Option<IcFamily>, initials: &[FullState]) -> Result<Vec<FullState>, CliError> {
        match (family, initials.is_empty()) {
            (Some(f), true) => Ok((0..f.count).map(|n| ic_family(n, f.v1, f.v2_step)).collect()),
            (None, false) => Ok(initials.to_vec()),
            _ => Err(CliError::config("give exactly one of `family` and `initials`")),
        }
    }
}

impl Task {
    pub fn command(&self) -> &'static str {
        match self {
            Task::Simulate { .. } => "simulate",
            Task::Observe { .. } => "observe",
            Task::Periodic { .. } => "periodic",
            Task::Mlce { .. } => "mlce",
            Task::Section { .. } => "section",
            Task::Sweep { .. } => "sweep",
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.params.validate()?;
        self.integrator.validate()?;
        if let Task::Simulate { system, initial, events } = &self.task {
            let expected = match system {
                System::Full => 4,
                System::Reduced => 3,
            };
            if initial.len() != expected {
                return Err(CliError::config(format!(
                    "initial state for the {system:?} system needs {expected} components, got {}",
                    initial.len()
                )));
            }
            if *system == System::Reduced && events.iter().any(|k| k.reduced_index().is_none()) {
                return Err(CliError::config("phi2 events need the full system"));
            }
        }
        Ok(())
    }

    /// Event specifications for a simulate task.
    pub fn event_specs(events: &[EventKind], system: System) -> Vec<EventSpec> {
        events
            .iter()
            .map(|&k| match system {
                System::Full => EventSpec::full(k),
                System::Reduced => EventSpec::reduced(k),
            })
            .collect()
    }

    /// Applies `--seed` to every exponent computation in the task.
    pub fn override_seed(&mut self, seed: u64) {
        match &mut self.task {
            Task::Mlce { mlce, .. } => mlce.seed = seed,
            Task::Sweep {
                sweep: Sweep::InitialConditions { config, .. },
            } => config.mlce.seed = seed,
            _ => {}
        }
    }
}
