//! Run configuration: a sectioned `key = value` file (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binder::BinderParams;
use crate::error::{Error, Result};
use crate::flow::{FluidProps, Walls};
use crate::grid::{Boundaries, Grid};
use crate::microstructure::{compute_kappa, CoatingData, PackingSpec};
use crate::phasefield::PhaseParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Physical extent [m].
    pub lx: f64,
    pub ly: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::with_extent(self.nx, self.ny, self.lx, self.ly)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    /// Velocity walls; `periodic-x` also makes the scalar fields periodic.
    pub walls: Walls,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        Self {
            walls: Walls::uniform(crate::flow::Wall::NoSlip),
        }
    }
}

impl BoundarySpec {
    pub fn scalar(&self) -> Boundaries {
        if self.walls.is_periodic_x() {
            Boundaries::periodic_x()
        } else {
            Boundaries::noflux()
        }
    }
}

/// Particle structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Structure {
    #[default]
    None,
    /// Segmented P5 PGM image, one pixel per cell.
    Mask { path: PathBuf },
    /// Random disk packing.
    Packing {
        seed: u64,
        mean_diameter: f64,
        diameter_cv: f64,
        target_chi: f64,
        #[serde(default = "default_attempts")]
        max_attempts: usize,
    },
    /// Flat solid layer along the bottom.
    Substrate { thickness: f64 },
    /// Solid side walls of the given thickness.
    Channel { wall_thickness: f64 },
}

fn default_attempts() -> usize {
    400_000
}

impl Structure {
    pub fn packing(spec: &PackingSpec) -> Self {
        Structure::Packing {
            seed: spec.seed,
            mean_diameter: spec.mean_diameter,
            diameter_cv: spec.diameter_cv,
            target_chi: spec.target_chi,
            max_attempts: spec.max_attempts,
        }
    }
}

/// Initial solvent distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Initial {
    /// Solvent below `height`.
    Fill { height: f64 },
    /// Solvent disk.
    Disk { x: f64, y: f64, radius: f64 },
}

/// Multipliers used by the parameter studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Factors {
    pub viscosity: f64,
    pub evaporation: f64,
    pub surface_tension: f64,
}

impl Default for Factors {
    fn default() -> Self {
        Self {
            viscosity: 1.0,
            evaporation: 1.0,
            surface_tension: 1.0,
        }
    }
}

/// Time-scale acceleration: evaporation and binder diffusivity are
/// multiplied by `factor`, solvent viscosity is divided by it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scaling {
    pub factor: f64,
}

impl Default for Scaling {
    fn default() -> Self {
        Self { factor: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DtMode {
    #[default]
    Auto,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeControl {
    #[serde(default)]
    pub mode: DtMode,
    /// Step size in fixed mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Safety factor on the stability bound in auto mode.
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub stop_on_dryout: bool,
    #[serde(default)]
    pub stop_on_breakthrough: bool,
    /// Extra run time after breakthrough, relative to the elapsed time.
    #[serde(default = "default_grace")]
    pub grace: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    /// Time between snapshots; `None` writes only the first and last.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_interval: Option<f64>,
}

fn default_safety() -> f64 {
    0.9
}

fn default_grace() -> f64 {
    0.1
}

impl Default for TimeControl {
    fn default() -> Self {
        Self {
            mode: DtMode::Auto,
            dt: None,
            safety: default_safety(),
            t_end: None,
            stop_on_dryout: false,
            stop_on_breakthrough: false,
            grace: default_grace(),
            max_steps: None,
            snapshot_interval: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Also write legacy VTK files.
    #[serde(default)]
    pub vtk: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    /// Dry-film height: solid fraction and normalized heights refer to it.
    pub film_height: f64,
    /// Profile truncation threshold relative to `c0`.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Reported times are `t / time_scale`; defaults to `1 / kappa`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_scale: Option<f64>,
}

fn default_threshold() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub name: String,
    pub grid: GridSpec,
    pub phase: PhaseParams,
    pub fluid: FluidProps,
    pub binder: BinderParams,
    #[serde(default)]
    pub boundaries: BoundarySpec,
    #[serde(default)]
    pub structure: Structure,
    pub initial: Initial,
    #[serde(default)]
    pub factors: Factors,
    #[serde(default)]
    pub scaling: Scaling,
    /// When present, `kappa` comes from the coating data instead of
    /// `phase.kappa`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coating: Option<CoatingData>,
    #[serde(default)]
    pub time: TimeControl,
    #[serde(default)]
    pub output: OutputSpec,
    pub analysis: AnalysisSpec,
}

/// Parameters after factors and scaling are applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub phase: PhaseParams,
    pub fluid: FluidProps,
    pub binder: BinderParams,
}

/// Registered sweep axes.
pub const SWEEP_AXES: [&str; 6] = ["k_viscosity", "k_evap", "k_surf", "theta", "seed", "c0"];

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads and validates a config file. A relative mask path is taken
    /// relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Structure::Mask { path: mask } = &mut cfg.structure {
            if mask.is_relative() {
                if let Some(dir) = path.parent() {
                    *mask = dir.join(&*mask);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn base_kappa(&self) -> f64 {
        self.coating.as_ref().map(compute_kappa).unwrap_or(self.phase.kappa)
    }

    pub fn resolve(&self) -> Resolved {
        let s = self.scaling.factor;
        let f = self.factors;
        let mut phase = self.phase;
        phase.kappa = self.base_kappa() * f.evaporation * s;
        phase.sigma *= f.surface_tension;
        let mut fluid = self.fluid;
        fluid.mu2 *= f.viscosity / s;
        let mut binder = self.binder;
        binder.diffusivity *= s;
        Resolved { phase, fluid, binder }
    }

    pub fn time_scale(&self) -> f64 {
        if let Some(t) = self.analysis.time_scale {
            return t;
        }
        let k = self.resolve().phase.kappa;
        if k > 0.0 {
            1.0 / k
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        let grid = self.grid.build()?;
        for (name, v) in [
            ("scaling.factor", self.scaling.factor),
            ("factors.viscosity", self.factors.viscosity),
            ("factors.evaporation", self.factors.evaporation),
            ("factors.surface_tension", self.factors.surface_tension),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return cfg(format!("{name} must be > 0, got {v}"));
            }
        }
        if let Some(c) = &self.coating {
            c.validate()?;
        }
        let r = self.resolve();
        r.phase.validate(&grid)?;
        r.fluid.validate()?;
        r.binder.validate()?;
        self.boundaries.walls.validate()?;
        match &self.structure {
            Structure::Mask { path } => {
                if !path.is_file() {
                    return cfg(format!("mask file {} does not exist", path.display()));
                }
            }
            Structure::Packing {
                mean_diameter,
                target_chi,
                ..
            } => {
                if !(*mean_diameter > 0.0) {
                    return cfg(format!("packing mean_diameter must be > 0, got {mean_diameter}"));
                }
                if !(*target_chi > 0.0 && *target_chi < 1.0) {
                    return cfg(format!("packing target_chi must lie in (0, 1), got {target_chi}"));
                }
            }
            Structure::Substrate { thickness } => {
                if !(*thickness > 0.0 && *thickness < grid.ly()) {
                    return cfg(format!("substrate thickness {thickness} outside the domain"));
                }
            }
            Structure::Channel { wall_thickness } => {
                if !(*wall_thickness > 0.0 && 2.0 * wall_thickness < grid.lx()) {
                    return cfg(format!("channel wall thickness {wall_thickness} leaves no channel"));
                }
            }
            Structure::None => {}
        }
        match self.initial {
            Initial::Fill { height } if !(height > 0.0) => {
                return cfg(format!("fill height must be > 0, got {height}"));
            }
            Initial::Disk { radius, .. } if !(radius > 0.0) => {
                return cfg(format!("disk radius must be > 0, got {radius}"));
            }
            _ => {}
        }
        let t = &self.time;
        if t.mode == DtMode::Fixed && !t.dt.is_some_and(|d| d > 0.0) {
            return cfg("fixed time stepping needs dt > 0".into());
        }
        if !(t.safety > 0.0 && t.safety <= 1.0) {
            return cfg(format!("time.safety must lie in (0, 1], got {}", t.safety));
        }
        if let Some(te) = t.t_end {
            if !(te > 0.0) {
                return cfg(format!("t_end must be > 0, got {te}"));
            }
        }
        if t.t_end.is_none() && !t.stop_on_dryout && !t.stop_on_breakthrough && t.max_steps.is_none() {
            return cfg("no stop rule: set t_end, stop_on_dryout, stop_on_breakthrough or max_steps".into());
        }
        if let Some(s) = t.snapshot_interval {
            if !(s > 0.0) {
                return cfg(format!("snapshot_interval must be > 0, got {s}"));
            }
        }
        if !(t.grace >= 0.0) {
            return cfg(format!("grace must be >= 0, got {}", t.grace));
        }
        if !(self.analysis.film_height > 0.0) || !(self.analysis.threshold >= 0.0) {
            return cfg("analysis.film_height must be > 0 and threshold >= 0".into());
        }
        Ok(())
    }

    /// Sets one registered sweep axis.
    pub fn set_axis(&mut self, axis: &str, value: f64) -> Result<()> {
        match axis {
            "k_viscosity" => self.factors.viscosity = value,
            "k_evap" => self.factors.evaporation = value,
            "k_surf" => self.factors.surface_tension = value,
            "theta" => self.phase.theta = value,
            "c0" => self.binder.c0 = value,
            "seed" => match &mut self.structure {
                Structure::Packing { seed, .. } => {
                    if !(value >= 0.0 && value.fract() == 0.0) {
                        return Err(Error::Config(format!("seed must be a non-negative integer, got {value}")));
                    }
                    *seed = value as u64;
                }
                _ => return Err(Error::Config("seed sweep needs a packing structure".into())),
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown sweep axis `{other}` (expected one of {})",
                    SWEEP_AXES.join(", ")
                )))
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{bubble_rise, electrode_drying, ElectrodeOverrides, Preset};

    #[test]
    fn resolve_applies_factors_and_scaling() {
        let mut c = bubble_rise(false).config;
        c.phase.kappa = 2.0;
        c.binder.diffusivity = 1e-9;
        c.factors = Factors {
            viscosity: 10.0,
            evaporation: 3.0,
            surface_tension: 0.5,
        };
        c.scaling.factor = 4.0;
        let r = c.resolve();
        assert_eq!(r.phase.kappa, 2.0 * 3.0 * 4.0);
        assert_eq!(r.phase.sigma, c.phase.sigma * 0.5);
        assert_eq!(r.fluid.mu2, c.fluid.mu2 * 10.0 / 4.0);
        assert_eq!(r.fluid.mu1, c.fluid.mu1);
        assert_eq!(r.binder.diffusivity, 4e-9);
    }

    #[test]
    fn coating_overrides_kappa() {
        let c = electrode_drying(Preset::Coarse, ElectrodeOverrides::default(), false).config;
        assert_eq!(c.base_kappa(), compute_kappa(c.coating.as_ref().unwrap()));
        assert!((c.time_scale() * c.resolve().phase.kappa - 1.0).abs() < 1e-15);
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let c = bubble_rise(false).config;
        let text = c.to_toml_string().unwrap();
        assert_eq!(SimConfig::from_toml_str(&text).unwrap(), c);
        let bad = format!("{text}\n[extra]\nfoo = 1\n");
        assert!(matches!(SimConfig::from_toml_str(&bad), Err(Error::Config(_))));
        let typo = text.replace("mobility", "mobilty");
        assert!(SimConfig::from_toml_str(&typo).is_err());
    }

    #[test]
    fn validation_rejects_bad_runs() {
        let base = bubble_rise(false).config;
        let mut c = base.clone();
        c.time.t_end = None;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base.clone();
        c.time.safety = 0.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.time.mode = DtMode::Fixed;
        assert!(c.validate().is_err());
        c.time.dt = Some(1e-4);
        assert!(c.validate().is_ok());
        let mut c = base.clone();
        c.phase.epsilon = 1e-3;
        assert!(matches!(c.validate(), Err(Error::InvalidParameter(_))));
        let mut c = base.clone();
        c.structure = Structure::Mask {
            path: "/nonexistent/mask.pgm".into(),
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base;
        c.factors.viscosity = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn sweep_axes() {
        let mut c = electrode_drying(Preset::Fine, ElectrodeOverrides::default(), false).config;
        c.set_axis("k_evap", 3.0).unwrap();
        assert_eq!(c.factors.evaporation, 3.0);
        c.set_axis("seed", 7.0).unwrap();
        assert!(matches!(c.structure, Structure::Packing { seed: 7, .. }));
        assert!(c.set_axis("seed", 1.5).is_err());
        assert!(c.set_axis("gravity", 1.0).is_err());
        let mut b = bubble_rise(false).config;
        assert!(b.set_axis("seed", 1.0).is_err());
        for axis in SWEEP_AXES.iter().filter(|a| **a != "seed") {
            b.set_axis(axis, 0.5).unwrap();
        }
    }

    #[test]
    fn load_resolves_relative_mask() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = bubble_rise(false).config;
        let empty = crate::grid::ScalarField::zeros(c.grid.build().unwrap());
        crate::microstructure::write_pgm(
            &dir.path().join("m.pgm"),
            c.grid.nx,
            c.grid.ny,
            &crate::microstructure::mask_pixels(&empty),
        )
        .unwrap();
        c.structure = Structure::Mask { path: "m.pgm".into() };
        let p = dir.path().join("run.toml");
        fs::write(&p, c.to_toml_string().unwrap()).unwrap();
        let back = SimConfig::load(&p).unwrap();
        assert_eq!(back.structure, Structure::Mask {
            path: dir.path().join("m.pgm")
        });
    }
}
