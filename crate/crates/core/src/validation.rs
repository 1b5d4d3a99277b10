//! Measurements and canned checks shared by the CLI `validate` command and
//! the acceptance suite.

use crate::error::{Error, Result};
use crate::grid::{integrate, integrate_product, ScalarField};
use crate::scenarios::{bubble_rise, evaporating_capillary, sessile_droplet, SUBSTRATE};
use crate::sim::Simulation;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Steps `sim` until its time reaches `t`, shortening the last step.
/// `each` runs after every step; returning an error stops the run.
pub fn advance_to(sim: &mut Simulation, t: f64, mut each: impl FnMut(&Simulation) -> Result<()>) -> Result<()> {
    while sim.time < t * (1.0 - 1e-12) {
        let dt = sim.next_dt()?.min(t - sim.time);
        sim.advance(dt)?;
        each(sim)?;
    }
    Ok(())
}

/// Vertical centroid of the `phi_tilde = 1` phase.
pub fn centroid_y(phi: &ScalarField) -> f64 {
    let g = *phi.grid();
    let y = ScalarField::from_fn(g, |_, y| y);
    integrate_product(phi, &y) / integrate(phi)
}

/// Points where `phi` crosses `level`, interpolated linearly along grid
/// lines between neighbouring cell centres.
pub fn contour_points(phi: &ScalarField, level: f64) -> Vec<(f64, f64)> {
    let g = *phi.grid();
    let mut pts = Vec::new();
    let mut cross = |a: f64, b: f64, pa: (f64, f64), pb: (f64, f64)| {
        if (a - level) * (b - level) < 0.0 {
            let s = (level - a) / (b - a);
            pts.push((pa.0 + s * (pb.0 - pa.0), pa.1 + s * (pb.1 - pa.1)));
        }
    };
    for j in 0..g.ny {
        for i in 0..g.nx {
            let p = phi.get(i, j);
            let c = g.cell_center(i, j);
            if i + 1 < g.nx {
                cross(p, phi.get(i + 1, j), c, g.cell_center(i + 1, j));
            }
            if j + 1 < g.ny {
                cross(p, phi.get(i, j + 1), c, g.cell_center(i, j + 1));
            }
        }
    }
    pts
}

/// Algebraic least-squares circle `(x_c, y_c, R)` through `points`.
pub fn fit_circle(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} points for a circle", points.len())));
    }
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / n, b + p.1 / n));
    // centred coordinates keep the normal equations well conditioned
    let (mut suu, mut svv, mut suv, mut suuu, mut svvv, mut suvv, mut svuu) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (u, v) = (x - mx, y - my);
        suu += u * u;
        svv += v * v;
        suv += u * v;
        suuu += u * u * u;
        svvv += v * v * v;
        suvv += u * v * v;
        svuu += v * u * u;
    }
    let det = suu * svv - suv * suv;
    if det.abs() <= 1e-14 * (suu * svv).max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateFit("collinear contour points".into()));
    }
    let r1 = 0.5 * (suuu + suvv);
    let r2 = 0.5 * (svvv + svuu);
    let uc = (r1 * svv - r2 * suv) / det;
    let vc = (r2 * suu - r1 * suv) / det;
    let r = (uc * uc + vc * vc + (suu + svv) / n).sqrt();
    Ok((mx + uc, my + vc, r))
}

/// Contact angle in degrees, measured through the `phi_tilde = 1` phase,
/// of a sessile cap on a flat wall at height `wall_y`. Uses a circle fit
/// to the 0.5 contour above `wall_y + exclude`.
pub fn contact_angle(phi: &ScalarField, wall_y: f64, exclude: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = contour_points(phi, 0.5)
        .into_iter()
        .filter(|p| p.1 > wall_y + exclude)
        .collect();
    let (_, yc, r) = fit_circle(&pts)?;
    let c = ((wall_y - yc) / r).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

/// Bubble rise: the binder integral stays at its initial value and the
/// bubble centroid rises between consecutive samples.
pub fn check_bubble(full_scale: bool, samples: usize) -> Result<CheckReport> {
    let sc = bubble_rise(full_scale);
    let t_end = sc.config.time.t_end.expect("bubble has an end time");
    let mut sim = Simulation::new(sc.config)?;
    let c0 = sim.resolved.binder.c0;
    let r = crate::scenarios::BUBBLE_RADIUS;
    let sharp = std::f64::consts::PI * r * r * c0;
    let total0 = integrate(&sim.c_tilde());
    let mut worst: f64 = 0.0;
    let mut heights = vec![centroid_y(&sim.phase.phi_tilde)];
    for k in 1..=samples {
        advance_to(&mut sim, t_end * k as f64 / samples as f64, |s| {
            worst = worst.max(((integrate(&s.c_tilde()) - total0) / total0).abs());
            Ok(())
        })?;
        heights.push(centroid_y(&sim.phase.phi_tilde));
    }
    let rises = heights.windows(2).all(|w| w[1] > w[0]);
    let init_ok = ((total0 - sharp) / sharp).abs() <= 0.1;
    Ok(CheckReport {
        name: "bubble conservation".into(),
        passed: worst <= 1e-6 && rises && init_ok,
        detail: format!(
            "initial {total0:.4e} (sharp {sharp:.4e}), max drift {worst:.2e}, centroid {:.4} -> {:.4}, monotone {rises}",
            heights[0],
            heights[samples]
        ),
    })
}

/// Evaporating capillary with deposition: the full binder balance holds
/// after every step until `loss` of the solvent has gone.
pub fn check_capillary(full_scale: bool, loss: f64) -> Result<CheckReport> {
    let mut sc = evaporating_capillary(12.5, full_scale)?;
    sc.config.binder.deposition = true;
    let t_end = 2.0 * sc.config.time.t_end.expect("capillary has an end time");
    let mut sim = Simulation::new(sc.config)?;
    let mut worst: f64 = 0.0;
    let target = (1.0 - loss) * sim.initial_solvent();
    while sim.solvent() > target && sim.time < t_end {
        let dt = sim.next_dt()?;
        sim.advance(dt)?;
        worst = worst.max(sim.binder_error().abs());
    }
    let lost = 1.0 - sim.solvent() / sim.initial_solvent();
    Ok(CheckReport {
        name: "capillary conservation".into(),
        passed: worst <= 1e-10 && lost >= loss,
        detail: format!("max relative error {worst:.2e} over {} steps, solvent lost {:.1}%", sim.steps, 100.0 * lost),
    })
}

/// Max/min ratio of `c~ / c~0` along the centre column, over the wet
/// cells (indicator >= 0.5) of a capillary state.
pub fn wet_contrast(sim: &Simulation, c_ref: &ScalarField) -> Result<f64> {
    let g = *sim.grid();
    let ind = sim.indicator();
    let now = sim.c_tilde();
    let i = g.nx / 2;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for j in 0..g.ny {
        let base = c_ref.get(i, j);
        if sim.phase.phi_solid.get(i, j) >= 0.5 || ind.get(i, j) < 0.5 || base <= 0.0 {
            continue;
        }
        let r = now.get(i, j) / base;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    if !(lo > 0.0 && lo.is_finite()) {
        return Err(Error::EmptyProfile);
    }
    Ok(hi / lo)
}

/// Binder contrast of a capillary run at the given dimensionless times.
pub fn capillary_contrasts(pe: f64, times: &[f64], full_scale: bool) -> Result<Vec<f64>> {
    let mut sc = evaporating_capillary(pe, full_scale)?;
    sc.config.time.t_end = None;
    let mut sim = Simulation::new(sc.config)?;
    let c_ref = sim.c_tilde();
    let scale = sim.config.time_scale();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        advance_to(&mut sim, t * scale, |_| Ok(()))?;
        out.push(wet_contrast(&sim, &c_ref)?);
    }
    Ok(out)
}

/// Droplet relaxed for its configured end time; returns the measured angle.
pub fn droplet_angle(theta: f64, full_scale: bool) -> Result<f64> {
    let sc = sessile_droplet(theta, full_scale);
    let t_end = sc.config.time.t_end.expect("droplet has an end time");
    let eps = sc.config.phase.epsilon;
    let mut sim = Simulation::new(sc.config)?;
    advance_to(&mut sim, t_end, |_| Ok(()))?;
    contact_angle(&sim.phase.phi_tilde, SUBSTRATE, eps)
}
