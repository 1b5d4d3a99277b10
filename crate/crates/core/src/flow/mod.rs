//! Diffuse-solid two-phase incompressible flow on the staggered grid.
//!
//! One step is a predictor for the `h`-weighted momentum balance followed
//! by a projection that enforces `div(h u) = 0`. Advection, gravity and the
//! capillary body force are explicit; the viscous term `div(h mu grad u)` is
//! backward Euler so the air viscosity does not limit the step.

mod poisson;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{laplacian, Boundaries, Grid, ScalarField, VectorField};
use crate::phasefield::{PhaseParams, PhaseState, SolidWeights, H_MIN};
use poisson::{jacobi_pcg, max_abs};
pub use poisson::PoissonOperator;

/// Fluid 1 is air (`phi_tilde = 0`), fluid 2 is solvent (`phi_tilde = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidProps {
    pub rho1: f64,
    pub rho2: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// Gravitational acceleration magnitude, acting in -y [m/s^2].
    pub g: f64,
    #[serde(default = "default_true")]
    pub gravity: bool,
}

fn default_true() -> bool {
    true
}

impl FluidProps {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho1", self.rho1), ("rho2", self.rho2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [("mu1", self.mu1), ("mu2", self.mu2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::InvalidParameter(format!("g must be >= 0, got {}", self.g)));
        }
        Ok(())
    }

    pub fn effective_g(&self) -> f64 {
        if self.gravity {
            self.g
        } else {
            0.0
        }
    }
}

pub fn interpolate_density(phi_tilde: &ScalarField, props: &FluidProps) -> ScalarField {
    phi_tilde.map(|p| p * props.rho2 + (1.0 - p) * props.rho1)
}

pub fn interpolate_viscosity(phi_tilde: &ScalarField, props: &FluidProps) -> ScalarField {
    phi_tilde.map(|p| p * props.mu2 + (1.0 - p) * props.mu1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wall {
    NoSlip,
    FreeSlip,
    /// Left and right only, and always as a pair.
    Periodic,
}

impl Wall {
    /// Ghost-value factor for the tangential velocity.
    fn ghost(self) -> f64 {
        match self {
            Wall::NoSlip => -1.0,
            Wall::FreeSlip | Wall::Periodic => 1.0,
        }
    }
}

/// Velocity wall conditions. Normal velocity is always zero on the domain
/// boundary; the rule selects the tangential condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Walls {
    pub left: Wall,
    pub right: Wall,
    pub bottom: Wall,
    pub top: Wall,
}

impl Walls {
    pub fn uniform(w: Wall) -> Self {
        Self {
            left: w,
            right: w,
            bottom: w,
            top: w,
        }
    }

    /// Periodic in x with the given rule on top and bottom.
    pub fn periodic_x(w: Wall) -> Self {
        Self {
            left: Wall::Periodic,
            right: Wall::Periodic,
            bottom: w,
            top: w,
        }
    }

    pub fn is_periodic_x(&self) -> bool {
        self.left == Wall::Periodic
    }

    pub fn validate(&self) -> Result<()> {
        if (self.left == Wall::Periodic) != (self.right == Wall::Periodic) {
            return Err(Error::Config("periodic walls must be set on both left and right".into()));
        }
        if self.top == Wall::Periodic || self.bottom == Wall::Periodic {
            return Err(Error::Config("periodic walls are only supported in x".into()));
        }
        Ok(())
    }
}

impl Default for Walls {
    fn default() -> Self {
        Self::uniform(Wall::NoSlip)
    }
}

fn parse_wall(s: &str) -> Result<Wall> {
    match s.trim() {
        "noslip" => Ok(Wall::NoSlip),
        "freeslip" => Ok(Wall::FreeSlip),
        "periodic" => Ok(Wall::Periodic),
        other => Err(Error::Config(format!("unknown wall rule `{other}`"))),
    }
}

fn wall_name(w: Wall) -> &'static str {
    match w {
        Wall::NoSlip => "noslip",
        Wall::FreeSlip => "freeslip",
        Wall::Periodic => "periodic",
    }
}

impl FromStr for Walls {
    type Err = Error;

    /// `noslip`, `freeslip`, `periodic-x` (no-slip top and bottom), or a
    /// list like `left=periodic,right=periodic,top=freeslip`.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "periodic-x" {
            return Ok(Self::periodic_x(Wall::NoSlip));
        }
        if !s.contains('=') {
            let w = Self::uniform(parse_wall(s)?);
            w.validate()?;
            return Ok(w);
        }
        let mut w = Self::default();
        for part in s.split(',') {
            let (side, rule) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad wall entry `{part}`")))?;
            let rule = parse_wall(rule)?;
            match side.trim() {
                "left" => w.left = rule,
                "right" => w.right = rule,
                "bottom" => w.bottom = rule,
                "top" => w.top = rule,
                other => return Err(Error::Config(format!("unknown side `{other}`"))),
            }
        }
        w.validate()?;
        Ok(w)
    }
}

impl fmt::Display for Walls {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::uniform(self.left) {
            return write!(f, "{}", wall_name(self.left));
        }
        if *self == Self::periodic_x(Wall::NoSlip) {
            return write!(f, "periodic-x");
        }
        write!(
            f,
            "left={},right={},bottom={},top={}",
            wall_name(self.left),
            wall_name(self.right),
            wall_name(self.bottom),
            wall_name(self.top)
        )
    }
}

impl TryFrom<String> for Walls {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Walls> for String {
    fn from(w: Walls) -> String {
        w.to_string()
    }
}

/// Column neighbours with optional wrap-around in x.
#[derive(Debug, Clone, Copy)]
struct Cols {
    nx: usize,
    periodic: bool,
}

impl Cols {
    #[inline]
    fn west(self, i: usize) -> Option<usize> {
        if i > 0 {
            Some(i - 1)
        } else if self.periodic {
            Some(self.nx - 1)
        } else {
            None
        }
    }

    #[inline]
    fn east(self, i: usize) -> Option<usize> {
        if i + 1 < self.nx {
            Some(i + 1)
        } else if self.periodic {
            Some(0)
        } else {
            None
        }
    }

    /// Vertical faces that carry an unknown. With wrap-around, face 0 is
    /// the unknown and face `nx` mirrors it.
    fn faces(self) -> std::ops::Range<usize> {
        if self.periodic {
            0..self.nx
        } else {
            1..self.nx
        }
    }

    /// West neighbour cell of vertical face `i`.
    #[inline]
    fn left_of(self, i: usize) -> usize {
        if i == 0 {
            self.nx - 1
        } else {
            i - 1
        }
    }
}

/// Copies face 0 of every row onto face `nx`.
fn mirror_wrap(u: &mut [f64], nx: usize, periodic: bool) {
    if periodic {
        for row in u.chunks_mut(nx + 1) {
            row[nx] = row[0];
        }
    }
}

/// Capillary body force `K = -phi grad(Phi)` on faces with
/// `Phi = beta psi'(phi) - alpha lap(phi)`. Zero on walls.
pub fn capillary_force(phi_tilde: &ScalarField, params: &PhaseParams, bc: &Boundaries) -> VectorField {
    let g = *phi_tilde.grid();
    let lap = laplacian(phi_tilde, bc);
    let coef = 36.0 * params.sigma / params.epsilon;
    let alpha = params.alpha();
    let pot = phi_tilde.zip_map(&lap, |p, l| {
        coef * (2.0 * p * p * p - 3.0 * p * p + p) - alpha * l
    });
    let (nx, ny) = (g.nx, g.ny);
    let cols = Cols {
        nx,
        periodic: bc.is_periodic_x(),
    };
    let mut out = VectorField::zeros(g);
    for j in 0..ny {
        for i in cols.faces() {
            let l = cols.left_of(i);
            let pf = 0.5 * (phi_tilde.get(l, j) + phi_tilde.get(i, j));
            out.u[j * (nx + 1) + i] = -pf * (pot.get(i, j) - pot.get(l, j)) / g.dx;
        }
    }
    mirror_wrap(&mut out.u, nx, cols.periodic);
    for j in 1..ny {
        for i in 0..nx {
            let pf = 0.5 * (phi_tilde.get(i, j - 1) + phi_tilde.get(i, j));
            out.v[j * nx + i] = -pf * (pot.get(i, j) - pot.get(i, j - 1)) / g.dy;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub velocity: VectorField,
    pub pressure: ScalarField,
    pub props: FluidProps,
    pub walls: Walls,
}

impl FlowState {
    pub fn at_rest(grid: Grid, props: FluidProps, walls: Walls) -> Self {
        Self {
            velocity: VectorField::zeros(grid),
            pressure: ScalarField::zeros(grid),
            props,
            walls,
        }
    }

    /// At rest with the pressure that balances gravity and the capillary
    /// force of `phase`, so the first step does not start with a pressure
    /// shock.
    pub fn settled(grid: Grid, props: FluidProps, walls: Walls, phase: &PhaseState) -> Result<Self> {
        let mut st = Self::at_rest(grid, props, walls);
        st.pressure = balancing_pressure(&st, phase)?;
        Ok(st)
    }

    /// Max-norm of `div(h u)`.
    pub fn max_divergence(&self, phase: &PhaseState) -> f64 {
        max_abs(weighted_divergence(&self.velocity, phase.weights()).values())
    }
}

/// `div(h u)` per cell using the face weights.
pub fn weighted_divergence(vel: &VectorField, w: &SolidWeights) -> ScalarField {
    let g = *vel.grid();
    let nx = g.nx;
    let mut out = vec![0.0; g.len()];
    out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (i, val) in row.iter_mut().enumerate() {
            let a = j * (nx + 1) + i;
            let b = j * nx + i;
            *val = (w.hx[a + 1] * vel.u[a + 1] - w.hx[a] * vel.u[a]) / g.dx
                + (w.hy[b + nx] * vel.v[b + nx] - w.hy[b] * vel.v[b]) / g.dy;
        }
    });
    ScalarField::from_raw(g, out)
}

/// Which faces carry velocity: faces whose two cells and own weight are
/// at least `H_MIN`. Wall faces never do.
#[derive(Debug, Clone)]
pub struct FaceMask {
    pub x: Vec<bool>,
    pub y: Vec<bool>,
}

impl FaceMask {
    pub fn new(grid: &Grid, w: &SolidWeights, periodic: bool) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        let cols = Cols { nx, periodic };
        let h = w.h.values();
        let mut x = vec![false; grid.n_xfaces()];
        for j in 0..ny {
            for i in cols.faces() {
                let f = j * (nx + 1) + i;
                x[f] = w.hx[f] >= H_MIN && h[j * nx + cols.left_of(i)] >= H_MIN && h[j * nx + i] >= H_MIN;
            }
            if periodic {
                x[j * (nx + 1) + nx] = x[j * (nx + 1)];
            }
        }
        let mut y = vec![false; grid.n_yfaces()];
        for j in 1..ny {
            for i in 0..nx {
                let f = j * nx + i;
                y[f] = w.hy[f] >= H_MIN && h[(j - 1) * nx + i] >= H_MIN && h[j * nx + i] >= H_MIN;
            }
        }
        Self { x, y }
    }
}

/// Largest stable step for the explicit parts of the flow update.
pub fn flow_dt_bound(flow: &FlowState, params: &PhaseParams, grid: &Grid) -> f64 {
    let h = grid.min_spacing();
    let mut dt = f64::INFINITY;
    let umax = flow.velocity.max_abs();
    if umax > 0.0 {
        dt = dt.min(0.5 * h / umax);
    }
    if params.sigma > 0.0 {
        let rho = flow.props.rho1 + flow.props.rho2;
        dt = dt.min((rho * h.powi(3) / (4.0 * std::f64::consts::PI * params.sigma)).sqrt());
    }
    let g = flow.props.effective_g();
    if g > 0.0 {
        dt = dt.min((h / g).sqrt());
    }
    dt
}

fn check_periodicity(walls: &Walls, bc: &Boundaries) -> Result<()> {
    if walls.is_periodic_x() != bc.is_periodic_x() {
        return Err(Error::Config(
            "velocity walls and phase-field boundaries disagree on x-periodicity".into(),
        ));
    }
    Ok(())
}

/// Viscous coefficient `h mu` at cell centres and at grid nodes.
struct Viscous {
    cell: ScalarField,
    /// `(nx + 1) * (ny + 1)` node values.
    node: Vec<f64>,
}

impl Viscous {
    fn new(hmu: ScalarField, periodic: bool) -> Self {
        let g = *hmu.grid();
        let (nx, ny) = (g.nx, g.ny);
        let mut node = vec![0.0; (nx + 1) * (ny + 1)];
        for j in 0..=ny {
            for i in 0..=nx {
                let (i0, i1) = if periodic {
                    ((i + nx - 1) % nx, i % nx)
                } else {
                    (i.saturating_sub(1), i.min(nx - 1))
                };
                let (j0, j1) = (j.saturating_sub(1), j.min(ny - 1));
                node[j * (nx + 1) + i] = 0.25
                    * (hmu.get(i0, j0) + hmu.get(i1, j0) + hmu.get(i0, j1) + hmu.get(i1, j1));
            }
        }
        Self { cell: hmu, node }
    }
}

/// Cell field `div(mu grad h)` used by the diffuse no-slip term.
fn div_mu_grad_h(mu: &ScalarField, w: &SolidWeights, cols: Cols) -> ScalarField {
    let g = *mu.grid();
    let (nx, ny) = (g.nx, g.ny);
    let h = &w.h;
    let (cx, cy) = (1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy));
    let mut out = vec![0.0; g.len()];
    for j in 0..ny {
        for i in 0..nx {
            let c = h.get(i, j);
            let m = mu.get(i, j);
            let mut s = 0.0;
            for nb in [cols.west(i), cols.east(i)].into_iter().flatten() {
                s += 0.5 * (m + mu.get(nb, j)) * (h.get(nb, j) - c) * cx;
            }
            if j > 0 {
                s += 0.5 * (m + mu.get(i, j - 1)) * (h.get(i, j - 1) - c) * cy;
            }
            if j + 1 < ny {
                s += 0.5 * (m + mu.get(i, j + 1)) * (h.get(i, j + 1) - c) * cy;
            }
            out[j * nx + i] = s;
        }
    }
    ScalarField::from_raw(g, out)
}

/// Unprojected velocity `u*` from one predictor step.
pub fn momentum_predictor(flow: &FlowState, phase: &PhaseState, dt: f64) -> Result<VectorField> {
    predictor_with_drive(flow, phase, dt, 0.0)
}

/// Predictor with an extra uniform acceleration `drive_x` along x.
pub(crate) fn predictor_with_drive(
    flow: &FlowState,
    phase: &PhaseState,
    dt: f64,
    drive_x: f64,
) -> Result<VectorField> {
    let g = *phase.grid();
    check_periodicity(&flow.walls, &phase.bc)?;
    let bound = flow_dt_bound(flow, &phase.params, &g);
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-9) {
        return Err(Error::StabilityViolation {
            what: "flow",
            dt,
            bound,
        });
    }
    let (nx, ny) = (g.nx, g.ny);
    let (dx, dy) = (g.dx, g.dy);
    let walls = flow.walls;
    let cols = Cols {
        nx,
        periodic: walls.is_periodic_x(),
    };
    let w = phase.weights();
    let mask = FaceMask::new(&g, w, cols.periodic);
    let phi = &phase.phi_tilde;
    let rho = interpolate_density(phi, &flow.props);
    let mu = interpolate_viscosity(phi, &flow.props);
    let hmu = Viscous::new(w.h.zip_map(&mu, |h, m| h * m), cols.periodic);
    let dmh = div_mu_grad_h(&mu, w, cols);
    let cap = if phase.params.sigma > 0.0 {
        capillary_force(phi, &phase.params, &phase.bc)
    } else {
        VectorField::zeros(g)
    };
    let grav = flow.props.effective_g();
    let vel = &flow.velocity;
    let pres = &flow.pressure;

    // u on vertical faces; face i sits between cells l = left_of(i) and i
    let mut diag_u = vec![0.0; g.n_xfaces()];
    let mut rhs_u = vec![0.0; g.n_xfaces()];
    for j in 0..ny {
        let row = j * (nx + 1);
        for i in cols.faces() {
            let f = row + i;
            if !mask.x[f] {
                continue;
            }
            let l = cols.left_of(i);
            let u = vel.u[f];
            let rho_f = 0.5 * (rho.get(l, j) + rho.get(i, j));
            let h_f = w.hx[f];
            let dudx = if u > 0.0 {
                (u - vel.u[row + l]) / dx
            } else {
                (vel.u[f + 1] - u) / dx
            };
            let vbar = 0.25 * (vel.v_at(l, j) + vel.v_at(i, j) + vel.v_at(l, j + 1) + vel.v_at(i, j + 1));
            let dudy = if vbar > 0.0 {
                let below = if j > 0 {
                    vel.u[f - (nx + 1)]
                } else {
                    walls.bottom.ghost() * u
                };
                (u - below) / dy
            } else {
                let above = if j + 1 < ny {
                    vel.u[f + nx + 1]
                } else {
                    walls.top.ghost() * u
                };
                (above - u) / dy
            };
            let adv = u * dudx + vbar * dudy;
            let drag = (-0.5 * (dmh.get(l, j) + dmh.get(i, j))).max(0.0);
            let dp = (pres.get(i, j) - pres.get(l, j)) / dx;
            diag_u[f] = rho_f * h_f / dt + drag;
            rhs_u[f] = rho_f * h_f * (u / dt - adv + drive_x) + h_f * (cap.u[f] - dp);
        }
    }

    // v on horizontal faces
    let mut diag_v = vec![0.0; g.n_yfaces()];
    let mut rhs_v = vec![0.0; g.n_yfaces()];
    for j in 1..ny {
        for i in 0..nx {
            let f = j * nx + i;
            if !mask.y[f] {
                continue;
            }
            let v = vel.v[f];
            let rho_f = 0.5 * (rho.get(i, j - 1) + rho.get(i, j));
            let h_f = w.hy[f];
            let dvdy = if v > 0.0 {
                (v - vel.v[f - nx]) / dy
            } else {
                (vel.v[f + nx] - v) / dy
            };
            let ubar = 0.25
                * (vel.u_at(i, j - 1) + vel.u_at(i + 1, j - 1) + vel.u_at(i, j) + vel.u_at(i + 1, j));
            let dvdx = if ubar > 0.0 {
                let left = match cols.west(i) {
                    Some(l) => vel.v[j * nx + l],
                    None => walls.left.ghost() * v,
                };
                (v - left) / dx
            } else {
                let right = match cols.east(i) {
                    Some(r) => vel.v[j * nx + r],
                    None => walls.right.ghost() * v,
                };
                (right - v) / dx
            };
            let adv = ubar * dvdx + v * dvdy;
            let drag = (-0.5 * (dmh.get(i, j - 1) + dmh.get(i, j))).max(0.0);
            let dp = (pres.get(i, j) - pres.get(i, j - 1)) / dy;
            diag_v[f] = rho_f * h_f / dt + drag;
            rhs_v[f] = rho_f * h_f * (v / dt - adv - grav) + h_f * (cap.v[f] - dp);
        }
    }

    let mut u_star = solve_viscous_u(&g, cols, &mask, &hmu, walls, &diag_u, &rhs_u, &vel.u)?;
    mirror_wrap(&mut u_star, nx, cols.periodic);
    let v_star = solve_viscous_v(&g, cols, &mask, &hmu, walls, &diag_v, &rhs_v, &vel.v)?;
    VectorField::from_parts(g, u_star, v_star)
}

const VISCOUS_TOL: f64 = 1e-10;

/// Five-point system `diag x_f - sum_n c_n x_n = rhs` on faces stored
/// row by row. Neighbours sit at offsets `+1, -1, +row, -row`; couplings
/// across a periodic seam are listed separately. Rows with zero diagonal
/// and no couplings are pinned to zero.
struct FaceSystem {
    diag: Vec<f64>,
    east: Vec<f64>,
    west: Vec<f64>,
    north: Vec<f64>,
    south: Vec<f64>,
    /// `(face, neighbour, coefficient)`.
    seams: Vec<(usize, usize, f64)>,
    row: usize,
}

impl FaceSystem {
    fn new(n: usize, row: usize) -> Self {
        Self {
            diag: vec![0.0; n],
            east: vec![0.0; n],
            west: vec![0.0; n],
            north: vec![0.0; n],
            south: vec![0.0; n],
            seams: Vec::new(),
            row,
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let row = self.row;
        let pad = row + 1;
        let mut xp = Vec::with_capacity(x.len() + 2 * pad);
        xp.resize(pad, 0.0);
        xp.extend_from_slice(x);
        xp.resize(x.len() + 2 * pad, 0.0);
        out.par_chunks_mut(row).enumerate().for_each(|(j, o)| {
            let f0 = j * row;
            let p0 = f0 + pad;
            let xc = &xp[p0..p0 + row];
            let xe = &xp[p0 + 1..p0 + row + 1];
            let xw = &xp[p0 - 1..p0 + row - 1];
            let xn = &xp[p0 + row..p0 + 2 * row];
            let xs = &xp[p0 - row..p0];
            let d = &self.diag[f0..f0 + row];
            let ce = &self.east[f0..f0 + row];
            let cw = &self.west[f0..f0 + row];
            let cn = &self.north[f0..f0 + row];
            let cs = &self.south[f0..f0 + row];
            for i in 0..o.len() {
                o[i] = d[i] * xc[i] - ce[i] * xe[i] - cw[i] * xw[i] - cn[i] * xn[i] - cs[i] * xs[i];
            }
        });
        for &(f, k, c) in &self.seams {
            out[f] -= c * x[k];
        }
    }

    fn solve(&self, rhs: &[f64], guess: &[f64], max_iter: usize) -> Result<Vec<f64>> {
        let mut x: Vec<f64> = guess
            .iter()
            .zip(&self.diag)
            .map(|(&u, &d)| if d > 0.0 { u } else { 0.0 })
            .collect();
        let tol = VISCOUS_TOL * max_abs(rhs);
        if tol == 0.0 {
            return Ok(vec![0.0; rhs.len()]);
        }
        jacobi_pcg(|a, b| self.apply(a, b), &self.diag, rhs, &mut x, tol, max_iter, self.row)?;
        Ok(x)
    }
}

#[allow(clippy::too_many_arguments)]
fn solve_viscous_u(
    g: &Grid,
    cols: Cols,
    mask: &FaceMask,
    hmu: &Viscous,
    walls: Walls,
    diag0: &[f64],
    rhs: &[f64],
    guess: &[f64],
) -> Result<Vec<f64>> {
    let (nx, ny) = (g.nx, g.ny);
    let (cx, cy) = (1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy));
    let w = nx + 1;
    let mut sys = FaceSystem::new(g.n_xfaces(), w);
    for j in 0..ny {
        for i in cols.faces() {
            let f = j * w + i;
            if !mask.x[f] {
                continue;
            }
            let l = cols.left_of(i);
            let e = hmu.cell.get(i, j) * cx;
            let west = hmu.cell.get(l, j) * cx;
            let n = hmu.node[(j + 1) * w + i] * cy;
            let s = hmu.node[j * w + i] * cy;
            let mut d = diag0[f] + e + west + n + s;
            let east_face = if cols.periodic && i + 1 == nx { j * w } else { f + 1 };
            let west_face = j * w + if i == 0 { nx - 1 } else { i - 1 };
            if mask.x[east_face] {
                if east_face == f + 1 {
                    sys.east[f] = e;
                } else {
                    sys.seams.push((f, east_face, e));
                }
            }
            if mask.x[west_face] {
                if west_face + 1 == f {
                    sys.west[f] = west;
                } else {
                    sys.seams.push((f, west_face, west));
                }
            }
            if j + 1 < ny {
                if mask.x[f + w] {
                    sys.north[f] = n;
                }
            } else {
                d -= walls.top.ghost() * n;
            }
            if j > 0 {
                if mask.x[f - w] {
                    sys.south[f] = s;
                }
            } else {
                d -= walls.bottom.ghost() * s;
            }
            sys.diag[f] = d;
        }
    }
    sys.solve(rhs, guess, 10 * g.len() + 100)
}

#[allow(clippy::too_many_arguments)]
fn solve_viscous_v(
    g: &Grid,
    cols: Cols,
    mask: &FaceMask,
    hmu: &Viscous,
    walls: Walls,
    diag0: &[f64],
    rhs: &[f64],
    guess: &[f64],
) -> Result<Vec<f64>> {
    let (nx, ny) = (g.nx, g.ny);
    let (cx, cy) = (1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy));
    let mut sys = FaceSystem::new(g.n_yfaces(), nx);
    for j in 1..ny {
        for i in 0..nx {
            let f = j * nx + i;
            if !mask.y[f] {
                continue;
            }
            let n = hmu.cell.get(i, j) * cy;
            let s = hmu.cell.get(i, j - 1) * cy;
            let e = hmu.node[j * (nx + 1) + i + 1] * cx;
            let west = hmu.node[j * (nx + 1) + i] * cx;
            let mut d = diag0[f] + e + west + n + s;
            if mask.y[f + nx] {
                sys.north[f] = n;
            }
            if mask.y[f - nx] {
                sys.south[f] = s;
            }
            match cols.east(i) {
                Some(r) if mask.y[j * nx + r] => {
                    if r == i + 1 {
                        sys.east[f] = e;
                    } else {
                        sys.seams.push((f, j * nx + r, e));
                    }
                }
                Some(_) => {}
                None => d -= walls.right.ghost() * e,
            }
            match cols.west(i) {
                Some(l) if mask.y[j * nx + l] => {
                    if l + 1 == i {
                        sys.west[f] = west;
                    } else {
                        sys.seams.push((f, j * nx + l, west));
                    }
                }
                Some(_) => {}
                None => d -= walls.left.ghost() * west,
            }
            sys.diag[f] = d;
        }
    }
    sys.solve(rhs, guess, 10 * g.len() + 100)
}

/// Guaranteed residual bound of the pressure solve, relative to the
/// max-norm of the right-hand side.
pub const PROJECTION_TOL: f64 = 1e-8;

/// Outcome of a projection.
#[derive(Debug, Clone)]
pub struct Projection {
    pub velocity: VectorField,
    pub pressure: ScalarField,
    pub iterations: usize,
}

/// Solves `div((h / rho) grad p) = div(h u*) / dt` and corrects
/// `u = u* - (dt / rho) grad p` on open faces. Periodicity in x follows the
/// phase-field boundaries. Within a step `p` is the pressure increment.
pub fn pressure_projection(
    u_star: &VectorField,
    phase: &PhaseState,
    rho: &ScalarField,
    dt: f64,
) -> Result<Projection> {
    let g = *phase.grid();
    if !u_star.all_finite() {
        return Err(Error::NonFinite("intermediate velocity".into()));
    }
    let (nx, ny) = (g.nx, g.ny);
    let cols = Cols {
        nx,
        periodic: phase.bc.is_periodic_x(),
    };
    let w = phase.weights();
    let mask = FaceMask::new(&g, w, cols.periodic);
    let rho_x = |i: usize, j: usize| 0.5 * (rho.get(cols.left_of(i), j) + rho.get(i, j));
    let rho_y = |i: usize, j: usize| 0.5 * (rho.get(i, j - 1) + rho.get(i, j));
    let mut tx = vec![0.0; g.n_xfaces()];
    for j in 0..ny {
        for i in cols.faces() {
            let f = j * (nx + 1) + i;
            if mask.x[f] {
                tx[f] = w.hx[f] / rho_x(i, j) * g.dy / g.dx;
            }
        }
    }
    let mut ty = vec![0.0; g.n_yfaces()];
    for j in 1..ny {
        for i in 0..nx {
            let f = j * nx + i;
            if mask.y[f] {
                ty[f] = w.hy[f] / rho_y(i, j) * g.dx / g.dy;
            }
        }
    }
    let op = PoissonOperator::new(nx, ny, tx, ty, cols.periodic);

    let mut vel = u_star.clone();
    for (u, &m) in vel.u.iter_mut().zip(&mask.x) {
        if !m {
            *u = 0.0;
        }
    }
    for (v, &m) in vel.v.iter_mut().zip(&mask.y) {
        if !m {
            *v = 0.0;
        }
    }
    mirror_wrap(&mut vel.u, nx, cols.periodic);
    let div = weighted_divergence(&vel, w);
    let area = g.cell_area();
    let mut b: Vec<f64> = div.values().iter().map(|d| -d * area / dt).collect();
    op.project_rhs(&mut b);
    let scale = max_abs(&b);
    let mut p = vec![0.0; g.len()];
    let mut iterations = 0;
    if scale > 0.0 {
        iterations = op.solve(&b, &mut p, PROJECTION_TOL * scale, 10 * g.len())?;
    }
    let pressure = ScalarField::from_raw(g, p);
    for j in 0..ny {
        for i in cols.faces() {
            let f = j * (nx + 1) + i;
            if mask.x[f] {
                let dp = pressure.get(i, j) - pressure.get(cols.left_of(i), j);
                vel.u[f] -= dt / rho_x(i, j) * dp / g.dx;
            }
        }
    }
    mirror_wrap(&mut vel.u, nx, cols.periodic);
    for j in 1..ny {
        for i in 0..nx {
            let f = j * nx + i;
            if mask.y[f] {
                vel.v[f] -= dt / rho_y(i, j) * (pressure.get(i, j) - pressure.get(i, j - 1)) / g.dy;
            }
        }
    }
    if !vel.all_finite() {
        return Err(Error::NonFinite("projected velocity".into()));
    }
    Ok(Projection {
        velocity: vel,
        pressure,
        iterations,
    })
}

/// Pressure whose gradient cancels the potential part of the explicit
/// body forces.
pub fn balancing_pressure(flow: &FlowState, phase: &PhaseState) -> Result<ScalarField> {
    let g = *phase.grid();
    check_periodicity(&flow.walls, &phase.bc)?;
    let rho = interpolate_density(&phase.phi_tilde, &flow.props);
    let periodic = flow.walls.is_periodic_x();
    let cols = Cols { nx: g.nx, periodic };
    let mut accel = if phase.params.sigma > 0.0 {
        capillary_force(&phase.phi_tilde, &phase.params, &phase.bc)
    } else {
        VectorField::zeros(g)
    };
    let grav = flow.props.effective_g();
    for j in 0..g.ny {
        for i in cols.faces() {
            accel.u[j * (g.nx + 1) + i] /= 0.5 * (rho.get(cols.left_of(i), j) + rho.get(i, j));
        }
    }
    mirror_wrap(&mut accel.u, g.nx, periodic);
    for j in 1..g.ny {
        for i in 0..g.nx {
            let f = j * g.nx + i;
            accel.v[f] = accel.v[f] / (0.5 * (rho.get(i, j - 1) + rho.get(i, j))) - grav;
        }
    }
    Ok(pressure_projection(&accel, phase, &rho, 1.0)?.pressure)
}

/// Incremental projection step: the predictor carries the previous
/// pressure gradient and the projection adds the increment. Properties are
/// evaluated from the phase field passed in.
pub fn step_flow(flow: &FlowState, phase: &PhaseState, dt: f64) -> Result<FlowState> {
    Ok(step_flow_with_stats(flow, phase, dt)?.0)
}

/// As [`step_flow`], also returning the pressure-solver iteration count.
pub fn step_flow_with_stats(flow: &FlowState, phase: &PhaseState, dt: f64) -> Result<(FlowState, usize)> {
    let u_star = momentum_predictor(flow, phase, dt)?;
    let rho = interpolate_density(&phase.phi_tilde, &flow.props);
    let proj = pressure_projection(&u_star, phase, &rho, dt)?;
    let active = phase.weights();
    let mut pressure = flow.pressure.zip_map(&proj.pressure, |p, dp| p + dp);
    for (k, p) in pressure.values_mut().iter_mut().enumerate() {
        if !active.active(k) {
            *p = 0.0;
        }
    }
    Ok((
        FlowState {
            velocity: proj.velocity,
            pressure,
            props: flow.props,
            walls: flow.walls,
        },
        proj.iterations,
    ))
}
