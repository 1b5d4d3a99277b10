//! Canned setups: rising bubble, evaporating capillary, sessile droplet and
//! electrode drying on synthetic packings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::binder::BinderParams;
use crate::config::{AnalysisSpec, BoundarySpec, Factors, GridSpec, Initial, Scaling, SimConfig, Structure, TimeControl};
use crate::error::{Error, Result};
use crate::flow::{FluidProps, Wall, Walls};
use crate::microstructure::CoatingData;
use crate::phasefield::PhaseParams;

/// Properties a scenario is expected to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    BinderConservation,
    BubbleRises,
    ContactAngle,
    PecletContrast,
    Breakthrough,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub config: SimConfig,
    pub checks: Vec<Check>,
}

fn interface_width(g: &GridSpec) -> f64 {
    4.0 * (g.lx / g.nx as f64).max(g.ly / g.ny as f64)
}

/// Radius of the rising bubble.
pub const BUBBLE_RADIUS: f64 = 0.25;

/// Light bubble (`phi_tilde = 1`, carrying the binder) rising through a
/// heavy liquid in a 1 x 2 box.
pub fn bubble_rise(full_scale: bool) -> Scenario {
    let grid = if full_scale {
        GridSpec { nx: 160, ny: 320, lx: 1.0, ly: 2.0 }
    } else {
        GridSpec { nx: 64, ny: 128, lx: 1.0, ly: 2.0 }
    };
    let g = 0.98;
    let time_scale = (BUBBLE_RADIUS / g).sqrt();
    let t_end = 2.83 * time_scale;
    let config = SimConfig {
        name: "bubble".into(),
        grid,
        phase: PhaseParams {
            sigma: 1.96,
            epsilon: interface_width(&grid),
            mobility: 0.02,
            kappa: 0.0,
            theta: 90.0,
            l_y: 2.0,
            ve_override: None,
        },
        fluid: FluidProps {
            rho1: 1000.0,
            rho2: 1.0,
            mu1: 10.0,
            mu2: 0.1,
            g,
            gravity: true,
        },
        binder: BinderParams {
            diffusivity: 0.0,
            separation: 0.9,
            c0: 0.01,
            deposition: false,
        },
        boundaries: BoundarySpec {
            walls: Walls {
                left: Wall::FreeSlip,
                right: Wall::FreeSlip,
                bottom: Wall::NoSlip,
                top: Wall::NoSlip,
            },
        },
        structure: Structure::None,
        initial: Initial::Disk {
            x: 0.5,
            y: 0.5,
            radius: BUBBLE_RADIUS,
        },
        factors: Factors::default(),
        scaling: Scaling::default(),
        coating: None,
        time: TimeControl {
            t_end: Some(t_end),
            snapshot_interval: Some(t_end / 4.0),
            ..TimeControl::default()
        },
        output: Default::default(),
        analysis: AnalysisSpec {
            film_height: 2.0,
            threshold: 1e-3,
            time_scale: Some(time_scale),
        },
    };
    Scenario {
        name: config.name.clone(),
        config,
        checks: vec![Check::BinderConservation, Check::BubbleRises],
    }
}

/// Side length of the capillary domain [m].
pub const CAPILLARY_SIZE: f64 = 56e-6;
/// Evaporation factor of the capillary runs [1/s].
pub const CAPILLARY_KAPPA: f64 = 100.0;

/// Solvent column between two solid walls drying from the top, with the
/// binder diffusivity chosen to give Peclet number `pe`.
pub fn evaporating_capillary(pe: f64, full_scale: bool) -> Result<Scenario> {
    if !(pe > 0.0 && pe.is_finite()) {
        return Err(Error::InvalidParameter(format!("Peclet number must be > 0, got {pe}")));
    }
    let n = if full_scale { 224 } else { 112 };
    let l = CAPILLARY_SIZE;
    let grid = GridSpec { nx: n, ny: n, lx: l, ly: l };
    let kappa = CAPILLARY_KAPPA;
    let config = SimConfig {
        name: format!("capillary-pe{pe}"),
        grid,
        phase: PhaseParams {
            sigma: 1.72e-5,
            epsilon: interface_width(&grid),
            mobility: 30.0,
            kappa,
            theta: 90.0,
            l_y: l,
            ve_override: None,
        },
        fluid: FluidProps {
            rho1: 1.225,
            rho2: 997.0,
            mu1: 1.72e-5,
            mu2: 1e-3,
            g: 9.81,
            gravity: true,
        },
        binder: BinderParams {
            diffusivity: kappa * l * l / pe,
            separation: 0.9,
            c0: 0.01,
            deposition: false,
        },
        boundaries: BoundarySpec::default(),
        structure: Structure::Channel { wall_thickness: 4e-6 },
        initial: Initial::Fill { height: 0.9 * l },
        factors: Factors::default(),
        scaling: Scaling::default(),
        coating: None,
        time: TimeControl {
            t_end: Some(0.85 / kappa),
            snapshot_interval: Some(0.85 / kappa / 10.0),
            stop_on_dryout: true,
            ..TimeControl::default()
        },
        output: Default::default(),
        analysis: AnalysisSpec {
            film_height: l,
            threshold: 1e-3,
            time_scale: None,
        },
    };
    Ok(Scenario {
        name: config.name.clone(),
        config,
        checks: vec![Check::BinderConservation, Check::PecletContrast],
    })
}

/// Thickness of the droplet substrate [m].
pub const SUBSTRATE: f64 = 8e-6;

/// Solvent half-disk on a flat diffuse solid, relaxing to `theta`.
pub fn sessile_droplet(theta: f64, full_scale: bool) -> Scenario {
    let (nx, ny) = if full_scale { (256, 192) } else { (128, 96) };
    let grid = GridSpec { nx, ny, lx: 64e-6, ly: 48e-6 };
    let config = SimConfig {
        name: format!("droplet-{theta}"),
        grid,
        phase: PhaseParams {
            sigma: 1.72e-5,
            epsilon: interface_width(&grid),
            mobility: 30.0,
            kappa: 0.0,
            theta,
            l_y: 48e-6,
            ve_override: None,
        },
        fluid: FluidProps {
            rho1: 1.225,
            rho2: 997.0,
            mu1: 1.72e-5,
            mu2: 1e-3,
            g: 9.81,
            gravity: false,
        },
        binder: BinderParams {
            diffusivity: 0.0,
            separation: 0.9,
            c0: 0.01,
            deposition: false,
        },
        boundaries: BoundarySpec::default(),
        structure: Structure::Substrate { thickness: SUBSTRATE },
        initial: Initial::Disk {
            x: 32e-6,
            y: SUBSTRATE,
            radius: 16e-6,
        },
        factors: Factors::default(),
        scaling: Scaling::default(),
        coating: None,
        time: TimeControl {
            t_end: Some(4e-3),
            snapshot_interval: Some(1e-3),
            ..TimeControl::default()
        },
        output: Default::default(),
        analysis: AnalysisSpec {
            film_height: 48e-6,
            threshold: 1e-3,
            time_scale: Some(1e-3),
        },
    };
    Scenario {
        name: config.name.clone(),
        config,
        checks: vec![Check::ContactAngle],
    }
}

/// Synthetic particle structures standing in for the two coatings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 6 um particles at the lower solid fraction.
    Fine,
    /// 12 um particles at the higher solid fraction.
    Coarse,
}

impl Preset {
    pub fn coating(self) -> CoatingData {
        let (chi, m) = match self {
            Preset::Fine => (0.465, 79.5e-3),
            Preset::Coarse => (0.549, 78.4e-3),
        };
        CoatingData {
            rho_solid: 2062.0,
            chi_solid: chi,
            mass_loading: m,
            rho_solvent: 997.0,
            evaporation_rate: 1e-3,
        }
    }

    pub fn mean_diameter(self) -> f64 {
        match self {
            Preset::Fine => 6e-6,
            Preset::Coarse => 12e-6,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fine" => Ok(Preset::Fine),
            "coarse" => Ok(Preset::Coarse),
            other => Err(Error::Config(format!("unknown preset `{other}` (fine, coarse)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Fine => "fine",
            Preset::Coarse => "coarse",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectrodeOverrides {
    pub k_viscosity: f64,
    /// Multiplier on the 1 g/m^2/s base evaporation rate.
    pub k_evap: f64,
    pub k_surf: f64,
    pub theta: f64,
    pub seed: u64,
}

impl Default for ElectrodeOverrides {
    fn default() -> Self {
        Self {
            k_viscosity: 1.0,
            k_evap: 9.0,
            k_surf: 1.0,
            theta: 90.0,
            seed: 1,
        }
    }
}

pub const ELECTRODE_WIDTH: f64 = 55.0e-6;
pub const ELECTRODE_HEIGHT: f64 = 40.07e-6;
pub const FILM_HEIGHT: f64 = 37.5e-6;
/// Acceleration applied to evaporation, viscosity and diffusivity.
pub const ELECTRODE_SCALING: f64 = 5.0e4;

/// Electrode drying on a synthetic packing with the hard-carbon material
/// data. Desk scale uses a 192 x 144 grid.
pub fn electrode_drying(preset: Preset, overrides: ElectrodeOverrides, full_scale: bool) -> Scenario {
    let (nx, ny) = if full_scale { (608, 448) } else { (192, 144) };
    let grid = GridSpec {
        nx,
        ny,
        lx: ELECTRODE_WIDTH,
        ly: ELECTRODE_HEIGHT,
    };
    let coating = preset.coating();
    let config = SimConfig {
        name: format!("electrode-{preset}"),
        grid,
        phase: PhaseParams {
            sigma: 72.4e-3,
            epsilon: interface_width(&grid),
            mobility: 30.0,
            kappa: 0.0,
            theta: overrides.theta,
            l_y: FILM_HEIGHT,
            ve_override: None,
        },
        fluid: FluidProps {
            rho1: 1.225,
            rho2: 997.0,
            mu1: 1.72e-5,
            mu2: 1.0,
            g: 9.81,
            gravity: true,
        },
        binder: BinderParams {
            diffusivity: 1.12e-16,
            separation: 0.9,
            c0: 0.01,
            deposition: true,
        },
        boundaries: BoundarySpec::default(),
        structure: Structure::Packing {
            seed: overrides.seed,
            mean_diameter: preset.mean_diameter(),
            diameter_cv: 0.3,
            target_chi: coating.chi_solid,
            max_attempts: 400_000,
        },
        initial: Initial::Fill { height: FILM_HEIGHT },
        factors: Factors {
            viscosity: overrides.k_viscosity,
            evaporation: overrides.k_evap,
            surface_tension: overrides.k_surf,
        },
        scaling: Scaling {
            factor: ELECTRODE_SCALING,
        },
        coating: Some(coating),
        time: TimeControl {
            stop_on_dryout: true,
            stop_on_breakthrough: true,
            ..TimeControl::default()
        },
        output: Default::default(),
        analysis: AnalysisSpec {
            film_height: FILM_HEIGHT,
            threshold: 1e-3,
            time_scale: None,
        },
    };
    Scenario {
        name: config.name.clone(),
        config,
        checks: vec![Check::BinderConservation, Check::Breakthrough],
    }
}

/// Names accepted by [`by_name`].
pub const SCENARIO_NAMES: [&str; 8] = [
    "bubble",
    "capillary-pe12.5",
    "capillary-pe0.125",
    "droplet-60",
    "droplet-90",
    "droplet-120",
    "electrode-fine",
    "electrode-coarse",
];

pub fn by_name(name: &str, full_scale: bool) -> Result<Scenario> {
    if name == "bubble" {
        return Ok(bubble_rise(full_scale));
    }
    let parse = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::Config(format!("bad number in scenario name `{name}`")))
    };
    if let Some(pe) = name.strip_prefix("capillary-pe") {
        return evaporating_capillary(parse(pe)?, full_scale).map_err(|e| Error::Config(e.to_string()));
    }
    if let Some(theta) = name.strip_prefix("droplet-") {
        return Ok(sessile_droplet(parse(theta)?, full_scale));
    }
    if let Some(p) = name.strip_prefix("electrode-") {
        return Ok(electrode_drying(p.parse()?, ElectrodeOverrides::default(), full_scale));
    }
    Err(Error::Config(format!(
        "unknown scenario `{name}` (known: {})",
        SCENARIO_NAMES.join(", ")
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microstructure::compute_kappa;

    fn all(full: bool) -> Vec<Scenario> {
        SCENARIO_NAMES.iter().map(|n| by_name(n, full).unwrap()).collect()
    }

    #[test]
    fn every_scenario_is_valid_and_round_trips() {
        for full in [false, true] {
            for s in all(full) {
                s.config.validate().unwrap_or_else(|e| panic!("{}: {e}", s.name));
                let text = s.config.to_toml_string().unwrap();
                let back = SimConfig::from_toml_str(&text).unwrap();
                assert_eq!(back, s.config, "{}", s.name);
            }
        }
    }

    #[test]
    fn construction_is_pure() {
        assert_eq!(all(false), all(false));
    }

    #[test]
    fn bubble_uses_table_values() {
        let c = bubble_rise(false).config;
        assert_eq!((c.grid.nx, c.grid.ny), (64, 128));
        assert_eq!(c.phase.kappa, 0.0);
        assert_eq!(c.binder.diffusivity, 0.0);
        assert_eq!((c.fluid.rho1, c.fluid.rho2, c.fluid.mu1, c.fluid.mu2), (1000.0, 1.0, 10.0, 0.1));
        assert_eq!((c.fluid.g, c.phase.sigma), (0.98, 1.96));
    }

    #[test]
    fn capillary_peclet_presets() {
        for pe in [12.5, 0.125] {
            let c = evaporating_capillary(pe, false).unwrap().config;
            let r = c.resolve();
            let got = r.phase.kappa * c.phase.l_y.powi(2) / r.binder.diffusivity;
            assert!((got - pe).abs() < 1e-12 * pe);
            assert_eq!(c.phase.theta, 90.0);
            assert_eq!(c.phase.sigma, 1.72e-5);
        }
        assert!(evaporating_capillary(0.0, false).is_err());
    }

    #[test]
    fn electrode_grid_and_scaling() {
        let s = electrode_drying(Preset::Coarse, ElectrodeOverrides::default(), false);
        assert_eq!((s.config.grid.nx, s.config.grid.ny), (192, 144));
        let f = electrode_drying(Preset::Coarse, ElectrodeOverrides::default(), true);
        assert_eq!((f.config.grid.nx, f.config.grid.ny), (608, 448));
        let c = &s.config;
        assert_eq!(c.binder.separation, 0.9);
        assert_eq!((c.phase.sigma, c.fluid.mu2), (72.4e-3, 1.0));
        let r = c.resolve();
        // reference evaporation (9 g/m^2/s) reproduces the coating kappa
        assert!((compute_kappa(&CoatingData { evaporation_rate: 9e-3, ..Preset::Coarse.coating() }) - 0.1303).abs() < 5e-5);
        assert!((r.phase.kappa / ELECTRODE_SCALING - 0.1303).abs() < 5e-5);
        assert!((r.fluid.mu2 - 1.0 / ELECTRODE_SCALING).abs() < 1e-18);
        assert!((r.binder.diffusivity - 1.12e-16 * ELECTRODE_SCALING).abs() < 1e-27);
        // the capillary number survives the acceleration
        let ca = |mu: f64, k: f64| mu * k * FILM_HEIGHT / 72.4e-3;
        assert!((ca(r.fluid.mu2, r.phase.kappa) - ca(1.0, r.phase.kappa / ELECTRODE_SCALING)).abs() < 1e-15);
    }

    #[test]
    fn unknown_names_are_config_errors() {
        assert!(by_name("nope", false).unwrap_err().is_config());
        assert!(by_name("electrode-medium", false).unwrap_err().is_config());
        assert!(by_name("capillary-pe-1", false).unwrap_err().is_config());
    }
}
