//! Two-field binder model: solvent-borne binder `cI` and deposited binder
//! `c_a`, advanced by a four-substep split per time step (transport,
//! deficit, deposition, mass correction).

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate, integrate_product, Grid, ScalarField, VectorField};
use crate::phasefield::PhaseState;

/// Below this indicator value the concentration `c = cI / I` is taken as 0.
pub const I_MIN: f64 = 1e-4;

/// Weight integrals below this (relative to the domain area) count as an
/// empty support.
const W_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinderParams {
    /// Binder diffusivity in the solvent [m^2/s].
    pub diffusivity: f64,
    /// Separation factor `f`: share of deposition steered to solid contact.
    pub separation: f64,
    /// Initial concentration in the solvent.
    pub c0: f64,
    #[serde(default = "default_true")]
    pub deposition: bool,
}

fn default_true() -> bool {
    true
}

impl BinderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.diffusivity >= 0.0 && self.diffusivity.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "binder diffusivity must be >= 0, got {}",
                self.diffusivity
            )));
        }
        if !(0.0..=1.0).contains(&self.separation) {
            return Err(Error::InvalidParameter(format!(
                "separation factor must lie in [0, 1], got {}",
                self.separation
            )));
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::InvalidParameter(format!("c0 must be > 0, got {}", self.c0)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinderState {
    /// Binder carried by the solvent, `c * I`.
    pub ci: ScalarField,
    /// Deposited binder.
    pub c_a: ScalarField,
    /// Total binder at the start of the run.
    pub total0: f64,
}

impl BinderState {
    /// `cI = c0 I`, nothing deposited.
    pub fn initial(c0: f64, indicator: &ScalarField) -> Self {
        let ci = indicator.map(|i| c0 * i);
        let total0 = integrate(&ci);
        Self {
            c_a: ScalarField::zeros(*ci.grid()),
            ci,
            total0,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.ci.grid()
    }

    /// `int cI + int (1 - I) c_a`.
    pub fn total(&self, indicator: &ScalarField) -> f64 {
        integrate(&self.ci) + deposited_mass(&self.c_a, indicator)
    }
}

/// Diffuse solvent indicator: the solvent fraction of the fluid times the
/// fluid fraction, so binder never sits inside particles.
pub fn indicator(phi_tilde: &ScalarField, phi_solid: &ScalarField) -> ScalarField {
    phi_tilde.zip_map(phi_solid, |p, s| p * (1.0 - s))
}

/// `c = cI / I` where `I > I_MIN`, else 0.
pub fn concentration(ci: &ScalarField, indicator: &ScalarField) -> ScalarField {
    ci.zip_map(indicator, |m, i| if i > I_MIN { m / i } else { 0.0 })
}

/// `c~ = cI + (1 - I) c_a`.
pub fn interpolated_concentration(state: &BinderState, indicator: &ScalarField) -> ScalarField {
    let g = *state.grid();
    let v = state
        .ci
        .values()
        .iter()
        .zip(state.c_a.values())
        .zip(indicator.values())
        .map(|((ci, ca), i)| ci + (1.0 - i) * ca)
        .collect();
    ScalarField::from_raw(g, v)
}

fn deposited_mass(c_a: &ScalarField, indicator: &ScalarField) -> f64 {
    let air = indicator.map(|i| 1.0 - i);
    integrate_product(&air, c_a)
}

/// Face values of the indicator for the binder fluxes: the arithmetic mean
/// where both cells are wet (`I > I_MIN`), else 0. Wall faces are 0; with
/// `periodic` the first and last column are coupled.
pub fn face_indicator(indicator: &ScalarField, periodic: bool) -> (Vec<f64>, Vec<f64>) {
    let g = *indicator.grid();
    let (nx, ny) = (g.nx, g.ny);
    let wet_mean = |a: f64, b: f64| if a > I_MIN && b > I_MIN { 0.5 * (a + b) } else { 0.0 };
    let mut fx = vec![0.0; g.n_xfaces()];
    for j in 0..ny {
        for i in 1..nx {
            fx[j * (nx + 1) + i] = wet_mean(indicator.get(i - 1, j), indicator.get(i, j));
        }
        if periodic {
            let w = wet_mean(indicator.get(nx - 1, j), indicator.get(0, j));
            fx[j * (nx + 1)] = w;
            fx[j * (nx + 1) + nx] = w;
        }
    }
    let mut fy = vec![0.0; g.n_yfaces()];
    for j in 1..ny {
        for i in 0..nx {
            fy[j * nx + i] = wet_mean(indicator.get(i, j - 1), indicator.get(i, j));
        }
    }
    (fx, fy)
}

/// Largest step for explicit binder diffusion.
pub fn binder_dt_bound(params: &BinderParams, grid: &Grid) -> f64 {
    if params.diffusivity > 0.0 {
        0.2 * grid.min_spacing().powi(2) / params.diffusivity
    } else {
        f64::INFINITY
    }
}

/// `dt * [-I u.grad c + div(I D grad c)]` per cell, in flux form with
/// first-order upwinding: each inflow face contributes
/// `I_f |u_f| (c_nbr - c) / dx`.
pub fn transport_rate(
    ci: &ScalarField,
    indicator: &ScalarField,
    velocity: &VectorField,
    diffusivity: f64,
    periodic: bool,
) -> ScalarField {
    let g = *ci.grid();
    let (nx, ny) = (g.nx, g.ny);
    let c = concentration(ci, indicator);
    let (fx, fy) = face_indicator(indicator, periodic);
    let (dx, dy) = (g.dx, g.dy);
    let (kx, ky) = (diffusivity / (dx * dx), diffusivity / (dy * dy));
    let cv = c.values();
    let mut out = vec![0.0; g.len()];
    out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (i, val) in row.iter_mut().enumerate() {
            let k = j * nx + i;
            let ck = cv[k];
            let mut r = 0.0;
            let west = j * (nx + 1) + i;
            let east = west + 1;
            let wi = if i > 0 { Some(k - 1) } else if periodic { Some(k + nx - 1) } else { None };
            let ei = if i + 1 < nx { Some(k + 1) } else if periodic { Some(k + 1 - nx) } else { None };
            if let Some(n) = wi {
                let (a, u) = (fx[west], velocity.u[west]);
                r += a * (kx * (cv[n] - ck) + u.max(0.0) * (cv[n] - ck) / dx);
            }
            if let Some(n) = ei {
                let (a, u) = (fx[east], velocity.u[east]);
                r += a * (kx * (cv[n] - ck) + (-u).max(0.0) * (cv[n] - ck) / dx);
            }
            if j > 0 {
                let f = k;
                let (a, v) = (fy[f], velocity.v[f]);
                r += a * (ky * (cv[k - nx] - ck) + v.max(0.0) * (cv[k - nx] - ck) / dy);
            }
            if j + 1 < ny {
                let f = k + nx;
                let (a, v) = (fy[f], velocity.v[f]);
                r += a * (ky * (cv[k + nx] - ck) + (-v).max(0.0) * (cv[k + nx] - ck) / dy);
            }
            *val = r;
        }
    });
    ScalarField::from_raw(g, out)
}

/// Substep 1: interim field `(cI)*`, floored at zero. Returns the field and
/// the clipped mass.
pub fn transport_substep(
    state: &BinderState,
    i_old: &ScalarField,
    i_new: &ScalarField,
    velocity: &VectorField,
    params: &BinderParams,
    periodic: bool,
    dt: f64,
) -> Result<(ScalarField, f64)> {
    let g = *state.grid();
    let bound = transport_dt_bound(params, velocity);
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-9) {
        return Err(Error::StabilityViolation {
            what: "binder transport",
            dt,
            bound,
        });
    }
    let rate = transport_rate(&state.ci, i_old, velocity, params.diffusivity, periodic);
    let c = concentration(&state.ci, i_old);
    let mut clipped = 0.0;
    let v: Vec<f64> = state
        .ci
        .values()
        .iter()
        .zip(rate.values())
        .zip(c.values())
        .zip(i_old.values().iter().zip(i_new.values()))
        .map(|(((m, r), c), (io, in_))| {
            let x = m + dt * r + c * (in_ - io);
            if x < 0.0 {
                clipped -= x;
                0.0
            } else {
                x
            }
        })
        .collect();
    let clipped = clipped * g.cell_area();
    if clipped > 0.0 {
        debug!("binder transport clipped {clipped:e} of negative mass");
    }
    let out = ScalarField::from_vec(g, v)?;
    Ok((out, clipped))
}

/// Substep 2: `total0 - int (cI)*`.
pub fn mass_deficit(state: &BinderState, ci_star: &ScalarField) -> f64 {
    state.total0 - integrate(ci_star)
}

/// `w_d = phi (1 - phi) (f phi_s + 1 - f)`.
pub fn deposition_weight(phi_tilde: &ScalarField, phi_solid: &ScalarField, f: f64) -> ScalarField {
    phi_tilde.zip_map(phi_solid, |p, s| p * (1.0 - p) * (f * s + 1.0 - f))
}

/// `w_c = phi (1 - phi) (1 - phi_s)`: the fluid-fluid band inside the pores.
pub fn correction_weight(phi_tilde: &ScalarField, phi_solid: &ScalarField) -> ScalarField {
    phi_tilde.zip_map(phi_solid, |p, s| p * (1.0 - p) * (1.0 - s))
}

/// Substep 3: deposit the part of the deficit not yet held by `c_a`,
/// distributed by `w_d`. The amplitude is never negative, so deposits are
/// irreversible.
pub fn deposition_substep(
    state: &BinderState,
    deficit: f64,
    i_old: &ScalarField,
    phi_tilde: &ScalarField,
    phi_solid: &ScalarField,
    f: f64,
) -> ScalarField {
    let g = *state.grid();
    let w = deposition_weight(phi_tilde, phi_solid, f);
    let wsum = integrate(&w);
    if wsum <= W_FLOOR * g.lx() * g.ly() {
        return state.c_a.clone();
    }
    let wanted = deficit - deposited_mass(&state.c_a, i_old);
    if wanted <= 0.0 {
        if wanted < 0.0 {
            debug!("deposition amplitude clamped at zero (excess {:e})", -wanted);
        }
        return state.c_a.clone();
    }
    let amp = wanted / wsum;
    state.c_a.zip_map(&w, |ca, wd| ca + wd * amp)
}

/// Substep 4: restore `int cI + int (1 - I) c_a = total0` by adding
/// `w_c p` to `(cI)*`. Removal that would turn cells negative floors them
/// and spreads the remainder over the rest of the band.
pub fn lagrange_correction(
    state: &BinderState,
    ci_star: &ScalarField,
    i_new: &ScalarField,
    c_a_new: &ScalarField,
    w_c: &ScalarField,
) -> Result<ScalarField> {
    let g = *state.grid();
    let target = state.total0 - deposited_mass(c_a_new, i_new);
    let mut ci = ci_star.values().to_vec();
    let mut missing = target - integrate(ci_star);
    let tiny = 1e-15 * state.total0.abs().max(f64::MIN_POSITIVE);
    if missing.abs() <= tiny {
        return Ok(ci_star.clone());
    }
    let w = w_c.values();
    let mut open: Vec<bool> = w.iter().map(|&x| x > 0.0).collect();
    for _ in 0..64 {
        let support = ScalarField::from_raw(
            g,
            w.iter().zip(&open).map(|(&x, &o)| if o { x } else { 0.0 }).collect(),
        );
        let wsum = integrate(&support);
        if wsum <= W_FLOOR * g.lx() * g.ly() {
            break;
        }
        let amp = missing / wsum;
        let mut floored = false;
        for (k, m) in ci.iter_mut().enumerate() {
            let wk = support.values()[k];
            if wk == 0.0 {
                continue;
            }
            let next = *m + wk * amp;
            if next < 0.0 {
                *m = 0.0;
                open[k] = false;
                floored = true;
            } else {
                *m = next;
            }
        }
        let field = ScalarField::from_raw(g, ci.clone());
        missing = target - integrate(&field);
        if !floored || missing.abs() <= tiny {
            return Ok(field);
        }
    }
    if missing.abs() <= 1e-10 * state.total0.abs() {
        return Ok(ScalarField::from_raw(g, ci));
    }
    Err(Error::ConservationUnreachable { deficit: missing })
}

/// One full binder step. `before` and `after` are the phase states at the
/// start and end of the step; `velocity` is the field that moved the
/// interface.
pub fn step_binder(
    state: &BinderState,
    before: &PhaseState,
    after: &PhaseState,
    velocity: &VectorField,
    params: &BinderParams,
    dt: f64,
) -> Result<BinderState> {
    let periodic = before.bc.is_periodic_x();
    let i_old = indicator(&before.phi_tilde, &before.phi_solid);
    let i_new = indicator(&after.phi_tilde, &after.phi_solid);
    let (ci_star, _) = transport_substep(state, &i_old, &i_new, velocity, params, periodic, dt)?;
    let deficit = mass_deficit(state, &ci_star);
    let c_a = if params.deposition {
        deposition_substep(state, deficit, &i_old, &after.phi_tilde, &after.phi_solid, params.separation)
    } else {
        state.c_a.clone()
    };
    let w_c = correction_weight(&after.phi_tilde, &after.phi_solid);
    let ci = lagrange_correction(state, &ci_star, &i_new, &c_a, &w_c)?;
    Ok(BinderState {
        ci,
        c_a,
        total0: state.total0,
    })
}

/// Stable transport step for `velocity`: the diffusion bound and `h / |u|`.
pub fn transport_dt_bound(params: &BinderParams, velocity: &VectorField) -> f64 {
    let g = *velocity.grid();
    let mut bound = binder_dt_bound(params, &g);
    let umax = velocity.max_abs();
    if umax > 0.0 {
        bound = bound.min(g.min_spacing() / umax);
    }
    bound
}

/// [`step_binder`] over `dt` in as many equal substeps as the transport
/// bound requires, with the phase field interpolated linearly in between.
/// Returns the new state and the number of substeps.
pub fn step_binder_subcycled(
    state: &BinderState,
    before: &PhaseState,
    after: &PhaseState,
    velocity: &VectorField,
    params: &BinderParams,
    dt: f64,
) -> Result<(BinderState, usize)> {
    let bound = transport_dt_bound(params, velocity);
    let n = if dt <= bound { 1 } else { (dt / bound * (1.0 + 1e-9)).ceil() as usize };
    if n == 1 {
        return Ok((step_binder(state, before, after, velocity, params, dt)?, 1));
    }
    let sub = dt / n as f64;
    let mut cur = state.clone();
    let mut prev = before.clone();
    for k in 1..=n {
        let next = if k == n {
            after.clone()
        } else {
            let s = k as f64 / n as f64;
            before.with_phi(before.phi_tilde.zip_map(&after.phi_tilde, |a, b| a + s * (b - a)))
        };
        cur = step_binder(&cur, &prev, &next, velocity, params, sub)?;
        prev = next;
    }
    Ok((cur, n))
}
