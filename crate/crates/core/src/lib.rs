//! Pore-scale drying simulator: diffuse-interface two-phase flow through a
//! static particle structure with evaporation and binder migration.

pub mod analysis;
pub mod binder;
pub mod config;
pub mod error;
pub mod flow;
pub mod grid;
pub mod microstructure;
pub mod output;
pub mod phasefield;
pub mod scenarios;
pub mod sim;
pub mod validation;

pub use analysis::{Diagnostics, ProfileSeries};
pub use binder::{BinderParams, BinderState};
pub use config::SimConfig;
pub use error::{Error, Result};
pub use flow::{FlowState, FluidProps, Wall, Walls};
pub use grid::{Boundaries, Grid, ScalarField, SideRule, VectorField};
pub use microstructure::{CoatingData, Microstructure, PackingSpec};
pub use phasefield::{PhaseParams, PhaseState};
pub use scenarios::Scenario;
pub use sim::{run, sweep, RunManifest, Simulation, Termination};
