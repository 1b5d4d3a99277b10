//! Time loop: phase, then flow on the new phase field, then binder.

use std::fs;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    air_at_substrate, binder_ratio, dimensionless_numbers, gradient_slope, x_average, Diagnostics, ProfileSeries,
};
use crate::binder::{indicator, interpolated_concentration, step_binder_subcycled, BinderState};
use crate::config::{DtMode, Initial, Resolved, SimConfig, Structure};
use crate::error::{Error, Result};
use crate::flow::{flow_dt_bound, step_flow_with_stats, FlowState};
use crate::grid::{integrate, Grid, ScalarField};
use crate::microstructure::{
    generate_packing, initialize_state, load_mask, smooth_mask, Microstructure, PackingSpec, Provenance,
};
use crate::output::{write_field_csv, write_vtk};
use crate::phasefield::{equilibrium_profile, phase_dt_bound, PhaseState};

/// Solvent left (relative to the start) at which the film counts as dry.
pub const DRYOUT_FRACTION: f64 = 1e-4;

pub fn build_microstructure(config: &SimConfig, grid: Grid) -> Result<Microstructure> {
    let eps = config.phase.epsilon;
    let film = config.analysis.film_height;
    let from_mask = |solid: Vec<bool>, prov: Provenance| Microstructure::new(smooth_mask(&solid, grid, eps), film, prov);
    match &config.structure {
        Structure::None => Ok(Microstructure::empty(grid, film)),
        Structure::Mask { path } => load_mask(path, grid, eps, film),
        Structure::Packing {
            seed,
            mean_diameter,
            diameter_cv,
            target_chi,
            max_attempts,
        } => generate_packing(
            &PackingSpec {
                seed: *seed,
                mean_diameter: *mean_diameter,
                diameter_cv: *diameter_cv,
                target_chi: *target_chi,
                max_attempts: *max_attempts,
            },
            grid,
            eps,
            film,
        ),
        Structure::Substrate { thickness } => {
            let solid = (0..grid.len()).map(|k| grid.cell_center(k % grid.nx, k / grid.nx).1 < *thickness).collect();
            from_mask(solid, Provenance::None)
        }
        Structure::Channel { wall_thickness } => {
            let w = *wall_thickness;
            let solid = (0..grid.len())
                .map(|k| {
                    let x = grid.cell_center(k % grid.nx, k / grid.nx).0;
                    x < w || x > grid.lx() - w
                })
                .collect();
            from_mask(solid, Provenance::None)
        }
    }
}

/// Per-step outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub dt: f64,
    pub pressure_iterations: usize,
    pub binder_substeps: usize,
}

/// A running simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: SimConfig,
    pub resolved: Resolved,
    pub micro: Microstructure,
    pub phase: PhaseState,
    pub flow: FlowState,
    pub binder: BinderState,
    pub time: f64,
    pub steps: usize,
    pub binder_substeps: usize,
    pub breakthrough: Option<f64>,
    profile0: ProfileSeries,
    solvent0: f64,
    /// False when air already touches the substrate at the start.
    track_breakthrough: bool,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let resolved = config.resolve();
        let grid = config.grid.build()?;
        let micro = build_microstructure(&config, grid)?;
        let bc = config.boundaries.scalar();
        let (phase, binder) = match config.initial {
            Initial::Fill { height } => initialize_state(&micro, resolved.phase, bc, height, resolved.binder.c0)?,
            Initial::Disk { x, y, radius } => {
                let eps = resolved.phase.epsilon;
                let phi = ScalarField::from_fn(grid, |px, py| {
                    equilibrium_profile(radius - ((px - x).powi(2) + (py - y).powi(2)).sqrt(), eps)
                });
                let phase = PhaseState::new(micro.phi_solid.clone(), phi, resolved.phase, bc)?;
                let binder = BinderState::initial(resolved.binder.c0, &indicator(&phase.phi_tilde, &phase.phi_solid));
                (phase, binder)
            }
        };
        let flow = FlowState::settled(grid, resolved.fluid, config.boundaries.walls, &phase)?;
        let i0 = indicator(&phase.phi_tilde, &phase.phi_solid);
        let profile0 = x_average(&interpolated_concentration(&binder, &i0), 0.0);
        let solvent0 = integrate(&i0);
        let track_breakthrough = !air_at_substrate(&phase.phi_tilde, &phase.phi_solid);
        Ok(Self {
            config,
            resolved,
            micro,
            phase,
            flow,
            binder,
            time: 0.0,
            steps: 0,
            binder_substeps: 0,
            breakthrough: None,
            profile0,
            solvent0,
            track_breakthrough,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.phase.grid()
    }

    /// Smallest of the phase and flow stability bounds. The binder
    /// sub-cycles on its own bound.
    pub fn stability_bound(&self) -> f64 {
        let g = self.grid();
        let umax = self.flow.velocity.max_abs();
        phase_dt_bound(&self.resolved.phase, g, umax).min(flow_dt_bound(&self.flow, &self.resolved.phase, g))
    }

    pub fn next_dt(&self) -> Result<f64> {
        let t = &self.config.time;
        let dt = match t.mode {
            DtMode::Fixed => t.dt.expect("validated"),
            DtMode::Auto => t.safety * self.stability_bound(),
        };
        if !dt.is_finite() {
            return Err(Error::Config(
                "no finite stability bound (no physics active); use fixed time stepping".into(),
            ));
        }
        Ok(dt)
    }

    pub fn advance(&mut self, dt: f64) -> Result<StepInfo> {
        let phase = self.phase.step(&self.flow.velocity, dt)?;
        let (flow, pressure_iterations) = step_flow_with_stats(&self.flow, &phase, dt)?;
        let (binder, binder_substeps) =
            step_binder_subcycled(&self.binder, &self.phase, &phase, &flow.velocity, &self.resolved.binder, dt)?;
        self.phase = phase;
        self.flow = flow;
        self.binder = binder;
        self.time += dt;
        self.steps += 1;
        self.binder_substeps += binder_substeps;
        if self.track_breakthrough
            && self.breakthrough.is_none()
            && air_at_substrate(&self.phase.phi_tilde, &self.phase.phi_solid) {
            self.breakthrough = Some(self.time);
        }
        Ok(StepInfo {
            dt,
            pressure_iterations,
            binder_substeps,
        })
    }

    pub fn indicator(&self) -> ScalarField {
        indicator(&self.phase.phi_tilde, &self.phase.phi_solid)
    }

    /// `c~ = cI + (1 - I) c_a`.
    pub fn c_tilde(&self) -> ScalarField {
        interpolated_concentration(&self.binder, &self.indicator())
    }

    pub fn solvent(&self) -> f64 {
        integrate(&self.indicator())
    }

    pub fn initial_solvent(&self) -> f64 {
        self.solvent0
    }

    pub fn binder_total(&self) -> f64 {
        self.binder.total(&self.indicator())
    }

    pub fn binder_error(&self) -> f64 {
        (self.binder_total() - self.binder.total0) / self.binder.total0
    }

    pub fn initial_profile(&self) -> &ProfileSeries {
        &self.profile0
    }

    pub fn time_star(&self) -> f64 {
        self.time / self.config.time_scale()
    }

    /// Normalized vertical binder gradient of the current state.
    pub fn gradient(&self) -> Result<f64> {
        let now = x_average(&self.c_tilde(), self.time);
        let r = binder_ratio(&now, &self.profile0, self.config.analysis.threshold * self.resolved.binder.c0)?;
        gradient_slope(&r, self.config.analysis.film_height)
    }

    pub fn diagnostics(&self) -> Diagnostics {
        let p = &self.resolved;
        let (ca, pe) = match dimensionless_numbers(
            p.fluid.mu2,
            p.phase.kappa,
            p.phase.l_y,
            p.phase.sigma,
            p.binder.diffusivity,
        ) {
            Ok((a, b)) => (Some(a), Some(b)),
            Err(_) => (None, None),
        };
        Diagnostics {
            m: self.gradient().ok(),
            t_breakthrough: self.breakthrough.map(|t| t / self.config.time_scale()),
            ca,
            pe,
        }
    }

    pub fn is_dry(&self) -> bool {
        self.solvent() < DRYOUT_FRACTION * self.solvent0
    }

    /// Stop reason for the current state, checked in the order end time,
    /// dry-out, breakthrough plus grace, step limit.
    pub fn stop_reason(&self) -> Option<Termination> {
        let t = &self.config.time;
        if t.t_end.is_some_and(|te| self.time >= te * (1.0 - 1e-12)) {
            return Some(Termination::EndTime);
        }
        if t.stop_on_dryout && self.is_dry() {
            return Some(Termination::DryOut);
        }
        if t.stop_on_breakthrough {
            if let Some(tb) = self.breakthrough {
                if self.time >= tb * (1.0 + t.grace) {
                    return Some(Termination::Breakthrough);
                }
            }
        }
        if t.max_steps.is_some_and(|n| self.steps >= n) {
            return Some(Termination::StepLimit);
        }
        None
    }

    /// Writes one CSV per field (and optionally a VTK file) for snapshot
    /// `index`. Returns the file names.
    pub fn write_snapshot(&self, dir: &Path, index: usize) -> Result<Vec<String>> {
        let (u, v) = self.flow.velocity.cell_centered();
        let c = self.c_tilde();
        let fields: Vec<(&str, &ScalarField)> = vec![
            ("phi_tilde", &self.phase.phi_tilde),
            ("phi_solid", &self.phase.phi_solid),
            ("c_tilde", &c),
            ("ci", &self.binder.ci),
            ("c_a", &self.binder.c_a),
            ("pressure", &self.flow.pressure),
            ("u", &u),
            ("v", &v),
        ];
        let mut names = Vec::new();
        for (name, f) in &fields {
            let file = format!("{name}_{index:04}.csv");
            write_field_csv(&dir.join(&file), name, self.time, f)?;
            names.push(file);
        }
        if self.config.output.vtk {
            let file = format!("snapshot_{index:04}.vtk");
            write_vtk(&dir.join(&file), self.time, &fields)?;
            names.push(file);
        }
        Ok(names)
    }

    fn record(&self, index: usize, dt: f64, files: Vec<String>) -> SnapshotRecord {
        SnapshotRecord {
            index,
            step: self.steps,
            time: self.time,
            time_star: self.time_star(),
            dt,
            solvent: self.solvent(),
            binder_total: self.binder_total(),
            binder_error: self.binder_error(),
            m: self.gradient().ok(),
            breakthrough: self.breakthrough.is_some(),
            files,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Termination {
    EndTime,
    DryOut,
    Breakthrough,
    StepLimit,
    SolverFailure { step: usize, time: f64, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub index: usize,
    pub step: usize,
    pub time: f64,
    pub time_star: f64,
    pub dt: f64,
    /// Solvent volume `int I`.
    pub solvent: f64,
    pub binder_total: f64,
    /// Relative deviation of the binder total from its initial value.
    pub binder_error: f64,
    pub m: Option<f64>,
    pub breakthrough: bool,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroRecord {
    pub measured_chi: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub config: SimConfig,
    pub resolved: Resolved,
    pub time_scale: f64,
    pub microstructure: MicroRecord,
    pub records: Vec<SnapshotRecord>,
    pub diagnostics: Diagnostics,
    pub steps: usize,
    pub binder_substeps: usize,
    pub wall_clock_s: f64,
    pub termination: Termination,
}

impl RunManifest {
    pub fn failed(&self) -> bool {
        matches!(self.termination, Termination::SolverFailure { .. })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// Runs `config` to its stop rule. Config problems are returned as errors;
/// a solver failure ends the run and is recorded in the manifest. With an
/// output directory, snapshots and `manifest.json` are written there.
pub fn run(config: &SimConfig) -> Result<RunManifest> {
    let start = Instant::now();
    let mut sim = Simulation::new(config.clone())?;
    let dir = config.output.dir.clone();
    if let Some(d) = &dir {
        fs::create_dir_all(d)?;
    }
    let snap = |sim: &Simulation, index: usize, dt: f64| -> Result<SnapshotRecord> {
        let files = match &dir {
            Some(d) => sim.write_snapshot(d, index)?,
            None => Vec::new(),
        };
        Ok(sim.record(index, dt, files))
    };
    let interval = config.time.snapshot_interval;
    let mut records = vec![snap(&sim, 0, 0.0)?];
    let mut next_snap = interval.unwrap_or(f64::INFINITY);
    let mut last_dt = 0.0;
    let mut last_written = sim.steps;
    let termination = loop {
        if let Some(reason) = sim.stop_reason() {
            break reason;
        }
        let mut dt = match sim.next_dt() {
            Ok(dt) => dt,
            Err(e) => return Err(e),
        };
        if let Some(te) = config.time.t_end {
            dt = dt.min(te - sim.time);
        }
        if next_snap.is_finite() && sim.time + dt > next_snap {
            dt = next_snap - sim.time;
        }
        if let Err(e) = sim.advance(dt) {
            warn!("{}: step {} failed: {e}", config.name, sim.steps + 1);
            break Termination::SolverFailure {
                step: sim.steps + 1,
                time: sim.time,
                message: e.to_string(),
            };
        }
        last_dt = dt;
        if sim.time >= next_snap * (1.0 - 1e-12) {
            let index = records.len();
            records.push(snap(&sim, index, dt)?);
            last_written = sim.steps;
            next_snap += interval.expect("finite");
            info!(
                "{}: t* = {:.4}, step {}, binder error {:e}",
                config.name,
                sim.time_star(),
                sim.steps,
                sim.binder_error()
            );
            if let Some(d) = &dir {
                partial_manifest(&sim, &records, start).write(&d.join("manifest.json"))?;
            }
        }
    };
    if last_written != sim.steps {
        let index = records.len();
        records.push(snap(&sim, index, last_dt)?);
    }
    let mut manifest = partial_manifest(&sim, &records, start);
    manifest.termination = termination;
    if let Some(d) = &dir {
        manifest.write(&d.join("manifest.json"))?;
    }
    Ok(manifest)
}

fn partial_manifest(sim: &Simulation, records: &[SnapshotRecord], start: Instant) -> RunManifest {
    RunManifest {
        name: sim.config.name.clone(),
        config: sim.config.clone(),
        resolved: sim.resolved,
        time_scale: sim.config.time_scale(),
        microstructure: MicroRecord {
            measured_chi: sim.micro.measured_chi,
            provenance: sim.micro.provenance.clone(),
        },
        records: records.to_vec(),
        diagnostics: sim.diagnostics(),
        steps: sim.steps,
        binder_substeps: sim.binder_substeps,
        wall_clock_s: start.elapsed().as_secs_f64(),
        termination: Termination::StepLimit,
    }
}

/// Result of one sweep point.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub outcome: std::result::Result<RunManifest, String>,
}

/// Independent runs of `base` with `axis` set to each value. Each run
/// writes to `<out>/<axis>_<value>` when `out` is given; failures are
/// recorded and the sweep continues.
pub fn sweep(base: &SimConfig, axis: &str, values: &[f64], out: Option<&Path>) -> Result<Vec<SweepPoint>> {
    let configs: Vec<(f64, SimConfig)> = values
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            c.set_axis(axis, v)?;
            c.name = format!("{}-{axis}-{v}", base.name);
            c.output.dir = out.map(|d| d.join(format!("{axis}_{v}")));
            Ok((v, c))
        })
        .collect::<Result<_>>()?;
    let points: Vec<SweepPoint> = configs
        .into_par_iter()
        .map(|(value, c)| SweepPoint {
            value,
            outcome: match run(&c) {
                Ok(m) if m.failed() => Err(match &m.termination {
                    Termination::SolverFailure { message, .. } => message.clone(),
                    _ => unreachable!(),
                }),
                Ok(m) => Ok(m),
                Err(e) => Err(e.to_string()),
            },
        })
        .collect();
    if let Some(d) = out {
        fs::create_dir_all(d)?;
        fs::write(d.join(format!("sweep_{axis}.csv")), sweep_csv(axis, &points))?;
    }
    Ok(points)
}

/// Aggregate table: value, m, breakthrough time, termination.
pub fn sweep_csv(axis: &str, points: &[SweepPoint]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    let mut s = format!("{axis},m,t_breakthrough,status\n");
    for p in points {
        match &p.outcome {
            Ok(m) => {
                let status = serde_json::to_value(&m.termination)
                    .ok()
                    .and_then(|v| v.get("reason").and_then(|r| r.as_str()).map(str::to_string))
                    .unwrap_or_default();
                s += &format!(
                    "{},{},{},{status}\n",
                    p.value,
                    opt(m.diagnostics.m),
                    opt(m.diagnostics.t_breakthrough)
                );
            }
            Err(e) => s += &format!("{},,,failed: {}\n", p.value, e.replace(['\n', ','], " ")),
        }
    }
    s
}
