//! Normalised solvent phase field: modified Allen–Cahn evolution with the
//! curvature counter term, evaporation, diffuse-solid weighting and wetting.
//!
//! `phi_tilde` is 1 in solvent and 0 in air. Written out, one explicit step
//! advances
//!
//! ```text
//! dphi/dt = -u.grad(phi)
//!           - (M/h) [ h beta psi' - alpha (div(h grad phi) - h |grad phi| div n) + W ]
//!           - v_e |grad phi|
//! ```
//!
//! with `h = h_fs(1 - phi_s)`, `alpha = sigma eps`, `beta = 18 sigma / eps`
//! and `W` the wetting source from [`wetting_term`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm_grad, Boundaries, Grid, Padded, ScalarField, VectorField};

/// Cells whose solid weight falls below this are frozen.
pub const H_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    /// Fluid–fluid surface energy density [N/m].
    pub sigma: f64,
    /// Interface width parameter [m].
    pub epsilon: f64,
    pub mobility: f64,
    /// Evaporation factor [1/s].
    pub kappa: f64,
    /// Equilibrium contact angle measured through the solvent [deg].
    pub theta: f64,
    /// Film height used to turn `kappa` into a recession speed [m].
    pub l_y: f64,
    /// Replaces `kappa * l_y` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ve_override: Option<f64>,
}

impl PhaseParams {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.sigma >= 0.0) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if self.epsilon < 4.0 * grid.max_spacing() * (1.0 - 1e-12) {
            return bad(format!(
                "epsilon {:e} resolves the interface with fewer than 4 cells (h = {:e})",
                self.epsilon,
                grid.max_spacing()
            ));
        }
        if !(self.mobility >= 0.0) {
            return bad(format!("mobility must be >= 0, got {}", self.mobility));
        }
        if !(self.kappa >= 0.0) {
            return bad(format!("kappa must be >= 0, got {}", self.kappa));
        }
        if !(self.theta > 0.0 && self.theta < 180.0) {
            return bad(format!("contact angle must lie in (0, 180), got {}", self.theta));
        }
        if !(self.l_y > 0.0) {
            return bad(format!("l_y must be > 0, got {}", self.l_y));
        }
        if let Some(v) = self.ve_override {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("ve_override must be >= 0, got {v}"));
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.sigma * self.epsilon
    }

    pub fn beta(&self) -> f64 {
        18.0 * self.sigma / self.epsilon
    }
}

/// Interface recession speed `v_e = kappa * l_y` [m/s].
pub fn evaporation_velocity(params: &PhaseParams) -> f64 {
    params.ve_override.unwrap_or(params.kappa * params.l_y)
}

/// Planar equilibrium profile at signed distance `d` (positive on the
/// solvent side).
pub fn equilibrium_profile(d: f64, epsilon: f64) -> f64 {
    0.5 * (1.0 + (3.0 * d / epsilon).tanh())
}

#[inline]
pub fn h_interp(p: f64) -> f64 {
    p * p * (3.0 - 2.0 * p)
}

#[inline]
pub fn h_interp_deriv(p: f64) -> f64 {
    6.0 * p * (1.0 - p)
}

#[inline]
fn doublewell(p: f64, coef: f64) -> f64 {
    coef * (2.0 * p * p * p - 3.0 * p * p + p)
}

/// `(36 sigma / eps) (2 phi^3 - 3 phi^2 + phi)` per cell.
pub fn doublewell_term(phi_tilde: &ScalarField, params: &PhaseParams) -> ScalarField {
    let coef = 36.0 * params.sigma / params.epsilon;
    phi_tilde.map(|p| doublewell(p, coef))
}

/// Boundary rule used for the static solid field: mirror, or wrap when the
/// fluid fields are periodic in x.
pub fn solid_bc(bc: &Boundaries) -> Boundaries {
    if bc.is_periodic_x() {
        Boundaries::periodic_x()
    } else {
        Boundaries::noflux()
    }
}

pub fn fluid_fraction(phi_solid: &ScalarField) -> ScalarField {
    phi_solid.map(|s| 1.0 - s)
}

/// Diffuse-solid weights derived once from the static solid field.
#[derive(Debug, Clone, PartialEq)]
pub struct SolidWeights {
    /// `h_fs(phi_f)` at cell centres.
    pub h: ScalarField,
    /// Harmonic mean of `h` on vertical faces.
    pub hx: Vec<f64>,
    /// Harmonic mean of `h` on horizontal faces.
    pub hy: Vec<f64>,
    /// `h_fs'(phi_f) |grad phi_f|` at cell centres.
    pub dh_norm: ScalarField,
}

fn harmonic(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s > 0.0 {
        2.0 * a * b / s
    } else {
        0.0
    }
}

impl SolidWeights {
    pub fn new(phi_solid: &ScalarField, bc: &Boundaries) -> Self {
        let g = *phi_solid.grid();
        let sbc = solid_bc(bc);
        let h = phi_solid.map(|s| h_interp(1.0 - s));
        let p = Padded::new(&h, &sbc);
        let mut hx = vec![0.0; g.n_xfaces()];
        for j in 0..g.ny {
            for i in 0..=g.nx {
                hx[j * (g.nx + 1) + i] =
                    harmonic(p.at(i as isize - 1, j as isize), p.at(i as isize, j as isize));
            }
        }
        let mut hy = vec![0.0; g.n_yfaces()];
        for j in 0..=g.ny {
            for i in 0..g.nx {
                hy[j * g.nx + i] =
                    harmonic(p.at(i as isize, j as isize - 1), p.at(i as isize, j as isize));
            }
        }
        let grad_f = norm_grad(phi_solid, &sbc);
        let dh_norm = phi_solid.zip_map(&grad_f, |s, gn| h_interp_deriv(1.0 - s) * gn);
        Self { h, hx, hy, dh_norm }
    }

    #[inline]
    pub fn active(&self, k: usize) -> bool {
        self.h.values()[k] >= H_MIN
    }
}

/// `|grad phi| div(grad phi / |grad phi|)` at cell centres. Unit normals are
/// formed on faces and zeroed where the gradient magnitude is below
/// `1e-8 / max(dx, dy)`.
pub fn curvature_counter_term(phi_tilde: &ScalarField, bc: &Boundaries) -> ScalarField {
    let g = *phi_tilde.grid();
    let p = Padded::new(phi_tilde, bc);
    let g_min = 1e-8 / g.max_spacing();
    let (dx, dy) = (g.dx, g.dy);
    let unit = |a: f64, b: f64| {
        let m = (a * a + b * b).sqrt();
        if m < g_min {
            0.0
        } else {
            a / m
        }
    };
    let mut nxf = vec![0.0; g.n_xfaces()];
    nxf.par_chunks_mut(g.nx + 1).enumerate().for_each(|(j, row)| {
        let j = j as isize;
        for (i, val) in row.iter_mut().enumerate() {
            let i = i as isize;
            let gx = (p.at(i, j) - p.at(i - 1, j)) / dx;
            let gy = 0.25
                * ((p.at(i, j + 1) - p.at(i, j - 1)) + (p.at(i - 1, j + 1) - p.at(i - 1, j - 1)))
                / dy;
            *val = unit(gx, gy);
        }
    });
    let mut nyf = vec![0.0; g.n_yfaces()];
    nyf.par_chunks_mut(g.nx).enumerate().for_each(|(j, row)| {
        let j = j as isize;
        for (i, val) in row.iter_mut().enumerate() {
            let i = i as isize;
            let gy = (p.at(i, j) - p.at(i, j - 1)) / dy;
            let gx = 0.25
                * ((p.at(i + 1, j) - p.at(i - 1, j)) + (p.at(i + 1, j - 1) - p.at(i - 1, j - 1)))
                / dx;
            *val = unit(gy, gx);
        }
    });
    let ng = norm_grad(phi_tilde, bc);
    let w = g.nx;
    let mut out = vec![0.0; g.len()];
    out.par_chunks_mut(w).enumerate().for_each(|(j, row)| {
        for (i, val) in row.iter_mut().enumerate() {
            let div = (nxf[j * (w + 1) + i + 1] - nxf[j * (w + 1) + i]) / dx
                + (nyf[(j + 1) * w + i] - nyf[j * w + i]) / dy;
            *val = ng.values()[j * w + i] * div;
        }
    });
    ScalarField::from_raw(g, out)
}

/// Diffuse wetting source
/// `-h_fs'(phi_f) |grad phi_f| sigma cos(theta) h_ff'(phi)`.
pub fn wetting_term(
    phi_tilde: &ScalarField,
    phi_solid: &ScalarField,
    params: &PhaseParams,
) -> ScalarField {
    let sbc = Boundaries::noflux();
    let grad_f = norm_grad(phi_solid, &sbc);
    let dh = phi_solid.zip_map(&grad_f, |s, gn| h_interp_deriv(1.0 - s) * gn);
    wetting_from_weights(phi_tilde, &dh, params)
}

fn wetting_from_weights(
    phi_tilde: &ScalarField,
    dh_norm: &ScalarField,
    params: &PhaseParams,
) -> ScalarField {
    let c = params.sigma * params.theta.to_radians().cos();
    phi_tilde.zip_map(dh_norm, |p, d| -d * c * h_interp_deriv(p))
}

/// Largest stable explicit step for the phase equation.
pub fn phase_dt_bound(params: &PhaseParams, grid: &Grid, max_speed: f64) -> f64 {
    let h = grid.min_spacing();
    let mut dt = f64::INFINITY;
    let ma = params.mobility * params.alpha();
    if ma > 0.0 {
        dt = dt.min(0.1 * h * h / ma);
    }
    let mb = 36.0 * params.mobility * params.sigma / params.epsilon;
    if mb > 0.0 {
        dt = dt.min(0.5 / mb);
    }
    if max_speed > 0.0 {
        dt = dt.min(0.5 * h / max_speed);
    }
    let ve = evaporation_velocity(params);
    if ve > 0.0 {
        dt = dt.min(0.5 * h / ve);
    }
    dt
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub phi_solid: ScalarField,
    pub phi_tilde: ScalarField,
    pub params: PhaseParams,
    pub bc: Boundaries,
    weights: SolidWeights,
}

impl PhaseState {
    pub fn new(
        phi_solid: ScalarField,
        phi_tilde: ScalarField,
        params: PhaseParams,
        bc: Boundaries,
    ) -> Result<Self> {
        let g = *phi_solid.grid();
        if phi_tilde.grid() != &g {
            return Err(Error::InvalidGrid("phase fields on different grids".into()));
        }
        params.validate(&g)?;
        if phi_solid.values().iter().any(|&s| !(0.0..=1.0).contains(&s)) {
            return Err(Error::InvalidParameter("solid fraction outside [0, 1]".into()));
        }
        if !phi_tilde.all_finite() {
            return Err(Error::NonFinite("phi_tilde".into()));
        }
        let phi_tilde = phi_tilde.map(|p| p.clamp(0.0, 1.0));
        let weights = SolidWeights::new(&phi_solid, &bc);
        Ok(Self {
            phi_solid,
            phi_tilde,
            params,
            bc,
            weights,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.phi_tilde.grid()
    }

    pub fn weights(&self) -> &SolidWeights {
        &self.weights
    }

    pub fn fluid_fraction(&self) -> ScalarField {
        fluid_fraction(&self.phi_solid)
    }

    pub fn with_phi(&self, phi_tilde: ScalarField) -> Self {
        Self {
            phi_tilde,
            ..self.clone()
        }
    }

    /// Time derivative of `phi_tilde` for the given face velocity.
    pub fn rate(&self, velocity: &VectorField) -> ScalarField {
        let g = *self.grid();
        let prm = &self.params;
        let phi = &self.phi_tilde;
        let p = Padded::new(phi, &self.bc);
        let w = &self.weights;
        let cc = curvature_counter_term(phi, &self.bc);
        let wet = wetting_from_weights(phi, &w.dh_norm, prm);
        let dw_coef = 36.0 * prm.sigma / prm.epsilon;
        let alpha = prm.alpha();
        let m = prm.mobility;
        let ve = evaporation_velocity(prm);
        let (dx, dy) = (g.dx, g.dy);
        let nx = g.nx;
        let mut out = vec![0.0; g.len()];
        out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
            let jj = j as isize;
            for (i, val) in row.iter_mut().enumerate() {
                let k = j * nx + i;
                let h = w.h.values()[k];
                if h < H_MIN {
                    continue;
                }
                let ii = i as isize;
                let c = p.at(ii, jj);
                let (l, r, b, t) = (
                    p.at(ii - 1, jj),
                    p.at(ii + 1, jj),
                    p.at(ii, jj - 1),
                    p.at(ii, jj + 1),
                );
                let hl = w.hx[j * (nx + 1) + i];
                let hr = w.hx[j * (nx + 1) + i + 1];
                let hb = w.hy[j * nx + i];
                let ht = w.hy[(j + 1) * nx + i];
                let diff = (hr * (r - c) - hl * (c - l)) / (dx * dx)
                    + (ht * (t - c) - hb * (c - b)) / (dy * dy);
                let bracket = h * doublewell(c, dw_coef) - alpha * (diff - h * cc.values()[k])
                    + wet.values()[k];
                let mut rate = -m / h * bracket;

                let ul = velocity.u[j * (nx + 1) + i];
                let ur = velocity.u[j * (nx + 1) + i + 1];
                let vb = velocity.v[j * nx + i];
                let vt = velocity.v[(j + 1) * nx + i];
                let mut adv = 0.0;
                if ul > 0.0 {
                    adv += ul * (l - c) / dx;
                }
                if ur < 0.0 {
                    adv -= ur * (r - c) / dx;
                }
                if vb > 0.0 {
                    adv += vb * (b - c) / dy;
                }
                if vt < 0.0 {
                    adv -= vt * (t - c) / dy;
                }
                rate += adv;

                if ve > 0.0 {
                    // Godunov upwind |grad phi| for a front moving into the solvent
                    let dxm = (c - l) / dx;
                    let dxp = (r - c) / dx;
                    let dym = (c - b) / dy;
                    let dyp = (t - c) / dy;
                    let gx = dxm.max(0.0).powi(2) + dxp.min(0.0).powi(2);
                    let gy = dym.max(0.0).powi(2) + dyp.min(0.0).powi(2);
                    rate -= ve * (gx + gy).sqrt();
                }
                *val = rate;
            }
        });
        ScalarField::from_raw(g, out)
    }

    /// One explicit Euler step followed by clamping to `[0, 1]`.
    pub fn step(&self, velocity: &VectorField, dt: f64) -> Result<Self> {
        let bound = phase_dt_bound(&self.params, self.grid(), velocity.max_abs());
        if !(dt > 0.0) || dt > bound * (1.0 + 1e-9) {
            return Err(Error::StabilityViolation {
                what: "phase-field",
                dt,
                bound,
            });
        }
        let rate = self.rate(velocity);
        let next = self
            .phi_tilde
            .zip_map(&rate, |p, r| (p + dt * r).clamp(0.0, 1.0));
        if !next.all_finite() {
            return Err(Error::NonFinite("phase-field update".into()));
        }
        Ok(self.with_phi(next))
    }
}

pub fn step_phase(state: &PhaseState, velocity: &VectorField, dt: f64) -> Result<PhaseState> {
    state.step(velocity, dt)
}
