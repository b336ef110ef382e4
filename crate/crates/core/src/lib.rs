//! Numerical laboratory for the Ziegler pendulum: a planar double pendulum
//! loaded by a follower force.
//!
//! The crate provides the equations of motion in several equivalent forms
//! ([`model`]), an adaptive integrator with crossing events ([`integrator`]),
//! conserved quantities ([`observables`]), symmetric periodic-orbit detection
//! ([`periodic`]), Lyapunov exponents ([`lyapunov`]) and sections and sweeps
//! ([`analysis`]).

pub mod analysis;
pub mod error;
pub mod integrator;
pub mod lyapunov;
pub mod model;
pub mod observables;
pub mod periodic;

pub use analysis::{
    curve_test, force_sweep, hull_area, ic_sweep, section, CurveTest, ForceBracket, ForceSweepConfig, IcSweepConfig,
    Regime, SectionConfig, SectionPlane, SectionPointSet, SweepEntry, SweepResult,
};
pub use error::{Error, FailureReason, Partial, Result};
pub use integrator::{
    flow_with_reflection_check, integrate, DirectionFilter, Event, EventKind, EventSpec, IntegratorConfig, Method,
    Trajectory, VectorField,
};
pub use lyapunov::{chi_vs_seed_stability, jacobian, mlce, LyapunovRecord, MlceSettings};
pub use model::{
    full_rhs, inertia_and_force, perturbed_rhs, reduced_rhs, rescaled_rhs, separable_rhs, FollowerLever, FullField,
    FullState, InertiaAndForce, Params, PerturbedField, ReducedField, ReducedState, RescaledField, SeparableField,
};
pub use observables::{energy, hamiltonian_divergence, momentum_integral, velocity_divergence};
pub use periodic::{detect_periodic, map_family, Detection, FamilyGrid, PeriodicConfig, PeriodicOrbit};
