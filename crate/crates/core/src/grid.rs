//! Uniform Cartesian grid, cell/face field storage and the finite-difference
//! stencils shared by every solver.
//!
//! Layout is staggered (MAC): scalars live at cell centres, the x-velocity on
//! vertical faces and the y-velocity on horizontal faces. Storage is row-major
//! with `i` (x) running fastest. Boundary handling goes through one layer of
//! ghost cells filled according to a [`Boundaries`] rule set.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub x0: f64,
    pub y0: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidGrid(format!(
                "need at least 4x4 cells, got {nx}x{ny}"
            )));
        }
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "cell sizes must be positive, got dx={dx}, dy={dy}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            dx,
            dy,
            x0: 0.0,
            y0: 0.0,
        })
    }

    /// Grid covering `[0, lx] x [0, ly]` with `nx x ny` cells.
    pub fn with_extent(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        Self::new(nx, ny, lx / nx as f64, ly / ny as f64)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn lx(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn ly(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn min_spacing(&self) -> f64 {
        self.dx.min(self.dy)
    }

    pub fn max_spacing(&self) -> f64 {
        self.dx.max(self.dy)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.dx,
            self.y0 + (j as f64 + 0.5) * self.dy,
        )
    }

    /// Centre of the vertical face left of cell `i` (i in 0..=nx).
    pub fn xface_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + i as f64 * self.dx,
            self.y0 + (j as f64 + 0.5) * self.dy,
        )
    }

    /// Centre of the horizontal face below cell `j` (j in 0..=ny).
    pub fn yface_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.dx,
            self.y0 + j as f64 * self.dy,
        )
    }

    pub fn n_xfaces(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn n_yfaces(&self) -> usize {
        self.nx * (self.ny + 1)
    }
}

/// Ghost-cell rule for one side of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SideRule {
    /// Zero normal gradient (mirror ghost).
    NoFlux,
    /// Prescribed value on the boundary face.
    Dirichlet(f64),
    /// Wrap to the opposite side. Only valid on left/right.
    Periodic,
}

/// Boundary rules for a scalar field, one per side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Boundaries {
    pub left: SideRule,
    pub right: SideRule,
    pub bottom: SideRule,
    pub top: SideRule,
}

impl Default for Boundaries {
    fn default() -> Self {
        Self::uniform(SideRule::NoFlux)
    }
}

impl Boundaries {
    pub fn uniform(rule: SideRule) -> Self {
        Self {
            left: rule,
            right: rule,
            bottom: rule,
            top: rule,
        }
    }

    pub fn noflux() -> Self {
        Self::default()
    }

    pub fn periodic_x() -> Self {
        Self {
            left: SideRule::Periodic,
            right: SideRule::Periodic,
            bottom: SideRule::NoFlux,
            top: SideRule::NoFlux,
        }
    }

    pub fn is_periodic_x(&self) -> bool {
        self.left == SideRule::Periodic
    }

    fn validate(self) -> Result<Self> {
        let lp = self.left == SideRule::Periodic;
        let rp = self.right == SideRule::Periodic;
        if lp != rp {
            return Err(Error::Config(
                "periodic rule must be set on both left and right".into(),
            ));
        }
        if self.bottom == SideRule::Periodic || self.top == SideRule::Periodic {
            return Err(Error::Config("periodic rule is only supported in x".into()));
        }
        Ok(self)
    }
}

fn parse_rule(s: &str) -> Result<SideRule> {
    let s = s.trim();
    if s == "noflux" {
        return Ok(SideRule::NoFlux);
    }
    if s == "periodic" || s == "periodic-x" {
        return Ok(SideRule::Periodic);
    }
    if let Some(v) = s.strip_prefix("dirichlet:") {
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad dirichlet value `{v}`")))?;
        return Ok(SideRule::Dirichlet(value));
    }
    Err(Error::Config(format!("unknown boundary rule `{s}`")))
}

fn rule_to_string(r: SideRule) -> String {
    match r {
        SideRule::NoFlux => "noflux".into(),
        SideRule::Periodic => "periodic".into(),
        SideRule::Dirichlet(v) => format!("dirichlet:{v:?}"),
    }
}

impl FromStr for Boundaries {
    type Err = Error;

    /// Accepts `noflux`, `dirichlet:<v>`, `periodic-x`, or a comma separated
    /// per-side list such as `left=noflux,top=dirichlet:0`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "periodic-x" {
            return Ok(Self::periodic_x());
        }
        if !s.contains('=') {
            let rule = parse_rule(s)?;
            if rule == SideRule::Periodic {
                return Err(Error::Config("use `periodic-x` for periodic boundaries".into()));
            }
            return Ok(Self::uniform(rule));
        }
        let mut b = Self::default();
        for part in s.split(',') {
            let (side, rule) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad boundary entry `{part}`")))?;
            let rule = parse_rule(rule)?;
            match side.trim() {
                "left" => b.left = rule,
                "right" => b.right = rule,
                "bottom" => b.bottom = rule,
                "top" => b.top = rule,
                other => return Err(Error::Config(format!("unknown side `{other}`"))),
            }
        }
        b.validate()
    }
}

impl fmt::Display for Boundaries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::default() {
            return write!(f, "noflux");
        }
        if *self == Self::periodic_x() {
            return write!(f, "periodic-x");
        }
        write!(
            f,
            "left={},right={},bottom={},top={}",
            rule_to_string(self.left),
            rule_to_string(self.right),
            rule_to_string(self.bottom),
            rule_to_string(self.top)
        )
    }
}

impl TryFrom<String> for Boundaries {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Boundaries> for String {
    fn from(b: Boundaries) -> String {
        b.to_string()
    }
}

/// Cell-centred scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
        }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("scalar field value at index {k}")));
        }
        Ok(Self { grid, data })
    }

    /// Evaluates `f(x, y)` at every cell centre.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.cell_center(i, j);
                data.push(f(x, y));
            }
        }
        Self { grid, data }
    }

    pub(crate) fn from_raw(grid: Grid, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self { grid, data }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.grid.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let nx = self.grid.nx;
        self.data[j * nx + i] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid.len(), other.grid.len());
        Self::from_raw(
            self.grid,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let nx = self.grid.nx;
        &self.data[j * nx..(j + 1) * nx]
    }
}

/// Face-centred vector field on the staggered grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    /// x-component on vertical faces, `(nx+1) * ny` values.
    pub u: Vec<f64>,
    /// y-component on horizontal faces, `nx * (ny+1)` values.
    pub v: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            u: vec![0.0; grid.n_xfaces()],
            v: vec![0.0; grid.n_yfaces()],
        }
    }

    pub fn from_parts(grid: Grid, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != grid.n_xfaces() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_xfaces(),
                found: u.len(),
            });
        }
        if v.len() != grid.n_yfaces() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_yfaces(),
                found: v.len(),
            });
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("vector field".into()));
        }
        Ok(Self { grid, u, v })
    }

    /// Samples `f(x, y) -> (u, v)` at face centres.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..=grid.nx {
                let (x, y) = grid.xface_center(i, j);
                out.u[j * (grid.nx + 1) + i] = f(x, y).0;
            }
        }
        for j in 0..=grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.yface_center(i, j);
                out.v[j * grid.nx + i] = f(x, y).1;
            }
        }
        out
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn u_at(&self, i: usize, j: usize) -> f64 {
        self.u[j * (self.grid.nx + 1) + i]
    }

    #[inline]
    pub fn v_at(&self, i: usize, j: usize) -> f64 {
        self.v[j * self.grid.nx + i]
    }

    pub fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .chain(&self.v)
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Velocity interpolated to cell centres.
    pub fn cell_centered(&self) -> (ScalarField, ScalarField) {
        let g = self.grid;
        let mut uc = vec![0.0; g.len()];
        let mut vc = vec![0.0; g.len()];
        for j in 0..g.ny {
            for i in 0..g.nx {
                uc[g.idx(i, j)] = 0.5 * (self.u_at(i, j) + self.u_at(i + 1, j));
                vc[g.idx(i, j)] = 0.5 * (self.v_at(i, j) + self.v_at(i, j + 1));
            }
        }
        (ScalarField::from_raw(g, uc), ScalarField::from_raw(g, vc))
    }
}

/// Field copy with one ghost layer, `(nx+2) x (ny+2)`, indexed from -1.
pub struct Padded {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

impl Padded {
    pub fn new(f: &ScalarField, bc: &Boundaries) -> Self {
        let g = f.grid();
        let (nx, ny) = (g.nx, g.ny);
        let w = nx + 2;
        let mut data = vec![0.0; w * (ny + 2)];
        for j in 0..ny {
            data[(j + 1) * w + 1..(j + 1) * w + 1 + nx].copy_from_slice(f.row(j));
        }
        let ghost = |rule: SideRule, inner: f64, wrap: f64| match rule {
            SideRule::NoFlux => inner,
            SideRule::Dirichlet(v) => 2.0 * v - inner,
            SideRule::Periodic => wrap,
        };
        for i in 1..=nx {
            let b = data[w + i];
            data[i] = ghost(bc.bottom, b, b);
            let t = data[ny * w + i];
            data[(ny + 1) * w + i] = ghost(bc.top, t, t);
        }
        for j in 0..ny + 2 {
            let l = data[j * w + 1];
            let r = data[j * w + nx];
            data[j * w] = ghost(bc.left, l, r);
            data[j * w + nx + 1] = ghost(bc.right, r, l);
        }
        Self { nx, ny, data }
    }

    /// Value at cell `(i, j)`, where `i` and `j` may be -1 or n.
    #[inline]
    pub fn at(&self, i: isize, j: isize) -> f64 {
        self.data[((j + 1) as usize) * (self.nx + 2) + (i + 1) as usize]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.nx + 2
    }
}

/// Face gradients using the ghost rule at the domain boundary.
pub fn gradient_bc(f: &ScalarField, bc: &Boundaries) -> VectorField {
    let g = *f.grid();
    let p = Padded::new(f, bc);
    let w = p.width();
    let nx = g.nx;
    let mut out = VectorField::zeros(g);
    out.u
        .par_chunks_mut(nx + 1)
        .enumerate()
        .for_each(|(j, row)| {
            let base = (j + 1) * w;
            for (i, val) in row.iter_mut().enumerate() {
                *val = (p.data[base + i + 1] - p.data[base + i]) / g.dx;
            }
        });
    out.v.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (i, val) in row.iter_mut().enumerate() {
            *val = (p.data[(j + 1) * w + i + 1] - p.data[j * w + i + 1]) / g.dy;
        }
    });
    out
}

/// Face gradients: central differences on interior faces, one-sided
/// (extrapolated) differences on the domain boundary.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = *f.grid();
    let (nx, ny) = (g.nx, g.ny);
    let mut out = VectorField::zeros(g);
    for j in 0..ny {
        let row = f.row(j);
        for i in 1..nx {
            out.u[j * (nx + 1) + i] = (row[i] - row[i - 1]) / g.dx;
        }
        out.u[j * (nx + 1)] = out.u[j * (nx + 1) + 1];
        out.u[j * (nx + 1) + nx] = out.u[j * (nx + 1) + nx - 1];
    }
    for j in 1..ny {
        for i in 0..nx {
            out.v[j * nx + i] = (f.get(i, j) - f.get(i, j - 1)) / g.dy;
        }
    }
    for i in 0..nx {
        out.v[i] = out.v[nx + i];
        out.v[ny * nx + i] = out.v[(ny - 1) * nx + i];
    }
    out
}

/// Face-difference divergence per cell.
pub fn divergence(vf: &VectorField) -> ScalarField {
    let g = *vf.grid();
    let nx = g.nx;
    let mut out = vec![0.0; g.len()];
    out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (i, val) in row.iter_mut().enumerate() {
            let du = vf.u[j * (nx + 1) + i + 1] - vf.u[j * (nx + 1) + i];
            let dv = vf.v[(j + 1) * nx + i] - vf.v[j * nx + i];
            *val = du / g.dx + dv / g.dy;
        }
    });
    ScalarField::from_raw(g, out)
}

/// Five-point Laplacian, evaluated as the divergence of ghost-cell face
/// gradients so that it matches `divergence(gradient_bc(f))` bit for bit.
pub fn laplacian(f: &ScalarField, bc: &Boundaries) -> ScalarField {
    divergence(&gradient_bc(f, bc))
}

/// Midpoint quadrature. Rows are summed independently and then added in
/// row order, so the result does not depend on the thread count.
pub fn integrate(f: &ScalarField) -> f64 {
    let g = f.grid();
    let rows: Vec<f64> = f
        .values()
        .par_chunks(g.nx)
        .map(|r| r.iter().sum::<f64>())
        .collect();
    rows.iter().sum::<f64>() * g.cell_area()
}

/// Integral of a pointwise product without materialising it.
pub fn integrate_product(a: &ScalarField, b: &ScalarField) -> f64 {
    let g = a.grid();
    let rows: Vec<f64> = a
        .values()
        .par_chunks(g.nx)
        .zip(b.values().par_chunks(g.nx))
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x * y).sum::<f64>())
        .collect();
    rows.iter().sum::<f64>() * g.cell_area()
}

/// Cell-centred `|grad f|` from the average of the two adjacent face
/// gradients in each direction.
pub fn norm_grad(f: &ScalarField, bc: &Boundaries) -> ScalarField {
    let grad = gradient_bc(f, bc);
    let g = *f.grid();
    let nx = g.nx;
    let mut out = vec![0.0; g.len()];
    out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (i, val) in row.iter_mut().enumerate() {
            let gx = 0.5 * (grad.u[j * (nx + 1) + i] + grad.u[j * (nx + 1) + i + 1]);
            let gy = 0.5 * (grad.v[j * nx + i] + grad.v[(j + 1) * nx + i]);
            *val = (gx * gx + gy * gy).sqrt();
        }
    });
    ScalarField::from_raw(g, out)
}

/// Arithmetic average of a cell field onto vertical faces; boundary faces
/// take the ghost average.
pub fn average_to_xfaces(f: &ScalarField, bc: &Boundaries) -> Vec<f64> {
    let p = Padded::new(f, bc);
    let g = f.grid();
    let w = p.width();
    let mut out = vec![0.0; g.n_xfaces()];
    for j in 0..g.ny {
        let base = (j + 1) * w;
        for i in 0..=g.nx {
            out[j * (g.nx + 1) + i] = 0.5 * (p.data[base + i] + p.data[base + i + 1]);
        }
    }
    out
}

pub fn average_to_yfaces(f: &ScalarField, bc: &Boundaries) -> Vec<f64> {
    let p = Padded::new(f, bc);
    let g = f.grid();
    let w = p.width();
    let mut out = vec![0.0; g.n_yfaces()];
    for j in 0..=g.ny {
        for i in 0..g.nx {
            out[j * g.nx + i] = 0.5 * (p.data[j * w + i + 1] + p.data[(j + 1) * w + i + 1]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize, h: f64) -> Grid {
        Grid::new(n, n, h, h).unwrap()
    }

    fn interior(g: &Grid) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..g.ny - 1).flat_map(move |j| (1..g.nx - 1).map(move |i| (i, j)))
    }

    #[test]
    fn rejects_tiny_or_degenerate_grids() {
        assert!(Grid::new(3, 8, 1.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 0.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 1.0, -1.0).is_err());
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = grid(8, 0.3);
        let f = ScalarField::constant(g, 3.0);
        assert_eq!(laplacian(&f, &Boundaries::noflux()).max_abs(), 0.0);
    }

    #[test]
    fn laplacian_of_x_squared() {
        let g = grid(10, 1.0);
        let f = ScalarField::from_fn(g, |x, _| x * x);
        let lap = laplacian(&f, &Boundaries::noflux());
        // direct stencil oracle
        for (i, j) in interior(&g) {
            let oracle = f.get(i + 1, j) - 2.0 * f.get(i, j) + f.get(i - 1, j);
            assert!((lap.get(i, j) - oracle).abs() < 1e-12);
            assert!((lap.get(i, j) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_of_linear_is_zero_inside() {
        let g = grid(9, 0.5);
        let f = ScalarField::from_fn(g, |x, y| x + y);
        let lap = laplacian(&f, &Boundaries::noflux());
        for (i, j) in interior(&g) {
            assert!(lap.get(i, j).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_constant_and_linear() {
        let g = grid(7, 0.25);
        let c = gradient(&ScalarField::constant(g, 5.0));
        assert_eq!(c.max_abs(), 0.0);
        let lin = gradient(&ScalarField::from_fn(g, |x, _| 2.0 * x));
        assert!(lin.u.iter().all(|&u| (u - 2.0).abs() < 1e-12));
        assert!(lin.v.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn gradient_of_xy_matches_partials_at_faces() {
        for &n in &[8usize, 16, 32] {
            let h = 1.0 / n as f64;
            let g = grid(n, h);
            let grad = gradient(&ScalarField::from_fn(g, |x, y| x * y));
            let mut err: f64 = 0.0;
            for j in 0..g.ny {
                for i in 0..=g.nx {
                    let (_, y) = g.xface_center(i, j);
                    err = err.max((grad.u_at(i, j) - y).abs());
                }
            }
            for j in 0..=g.ny {
                for i in 0..g.nx {
                    let (x, _) = g.yface_center(i, j);
                    err = err.max((grad.v_at(i, j) - x).abs());
                }
            }
            assert!(err <= 2.0 * h * h, "n={n} err={err}");
        }
    }

    #[test]
    fn divergence_cases() {
        let g = grid(8, 1.0);
        let uniform = VectorField::from_fn(g, |_, _| (1.0, 0.0));
        assert!(divergence(&uniform).max_abs() < 1e-14);
        let vx = VectorField::from_fn(g, |x, _| (x, 0.0));
        let d = divergence(&vx);
        for (i, j) in interior(&g) {
            let oracle = vx.u_at(i + 1, j) - vx.u_at(i, j);
            assert_eq!(d.get(i, j), oracle);
            assert!((d.get(i, j) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn integrate_simple() {
        let g = grid(10, 0.1);
        assert!((integrate(&ScalarField::constant(g, 1.0)) - 1.0).abs() < 1e-12);
        assert_eq!(integrate(&ScalarField::zeros(g)), 0.0);
    }

    #[test]
    fn norm_grad_cases() {
        let g = grid(12, 0.5);
        let bc = Boundaries::noflux();
        assert_eq!(norm_grad(&ScalarField::constant(g, 2.0), &bc).max_abs(), 0.0);
        let n = norm_grad(&ScalarField::from_fn(g, |x, _| x), &bc);
        for (i, j) in interior(&g) {
            assert!((n.get(i, j) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_grad_of_tanh_profile() {
        let n = 128;
        let g = Grid::new(n, 4, 1.0 / n as f64, 1.0 / n as f64).unwrap();
        let w = 0.05;
        let f = ScalarField::from_fn(g, |x, _| 0.5 * (1.0 + ((x - 0.5) / w).tanh()));
        let ng = norm_grad(&f, &Boundaries::noflux());
        let (imax, vmax) = (0..n)
            .map(|i| (i, ng.get(i, 1)))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        let (xpk, _) = g.cell_center(imax, 1);
        assert!((xpk - 0.5).abs() <= g.dx);
        for i in 0..n {
            let (x, _) = g.cell_center(i, 1);
            let exact = 0.5 / w / ((x - 0.5) / w).cosh().powi(2);
            if exact > 0.1 * vmax {
                assert!((ng.get(i, 1) - exact).abs() <= 0.02 * exact, "i={i}");
            }
        }
    }

    #[test]
    fn divergence_theorem_holds_exactly() {
        let g = grid(6, 0.5);
        let f = ScalarField::from_fn(g, |x, y| (3.0 * x).sin() + y * y);
        let grad = gradient(&f);
        let total = integrate(&divergence(&grad));
        let mut flux = 0.0;
        for j in 0..g.ny {
            flux += (grad.u_at(g.nx, j) - grad.u_at(0, j)) * g.dy;
        }
        for i in 0..g.nx {
            flux += (grad.v_at(i, g.ny) - grad.v_at(i, 0)) * g.dx;
        }
        assert!((total - flux).abs() < 1e-12);
    }

    #[test]
    fn boundary_rule_parsing() {
        assert_eq!("noflux".parse::<Boundaries>().unwrap(), Boundaries::noflux());
        assert_eq!(
            "periodic-x".parse::<Boundaries>().unwrap(),
            Boundaries::periodic_x()
        );
        let d: Boundaries = "dirichlet:0.5".parse().unwrap();
        assert_eq!(d.top, SideRule::Dirichlet(0.5));
        let m: Boundaries = "top=dirichlet:0,bottom=noflux".parse().unwrap();
        assert_eq!(m.top, SideRule::Dirichlet(0.0));
        assert_eq!(m.left, SideRule::NoFlux);
        assert!("left=periodic".parse::<Boundaries>().is_err());
        assert!("sideways".parse::<Boundaries>().is_err());
        let s = m.to_string();
        assert_eq!(s.parse::<Boundaries>().unwrap(), m);
    }

    #[test]
    fn dirichlet_and_periodic_ghosts() {
        let g = grid(4, 1.0);
        let f = ScalarField::from_fn(g, |x, _| x);
        let p = Padded::new(&f, &Boundaries::uniform(SideRule::Dirichlet(0.0)));
        // face value between ghost and first cell is the prescribed value
        assert!((0.5 * (p.at(-1, 0) + p.at(0, 0))).abs() < 1e-15);
        let p = Padded::new(&f, &Boundaries::periodic_x());
        assert_eq!(p.at(-1, 2), f.get(3, 2));
        assert_eq!(p.at(4, 2), f.get(0, 2));
        let lap = laplacian(&ScalarField::from_fn(g, |x, _| x), &Boundaries::periodic_x());
        assert!((lap.get(0, 1) - (f.get(1, 1) - 2.0 * f.get(0, 1) + f.get(3, 1))).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn laplacian_equals_div_grad_inside(values in proptest::collection::vec(-5.0f64..5.0, 64)) {
            let g = grid(8, 0.7);
            let f = ScalarField::from_vec(g, values).unwrap();
            let lap = laplacian(&f, &Boundaries::noflux());
            let dg = divergence(&gradient(&f));
            for (i, j) in interior(&g) {
                prop_assert_eq!(lap.get(i, j), dg.get(i, j));
            }
            // with ghost-consistent gradients the identity holds everywhere
            let dgb = divergence(&gradient_bc(&f, &Boundaries::noflux()));
            prop_assert_eq!(lap.values(), dgb.values());
        }

        #[test]
        fn integrate_matches_double_loop(values in proptest::collection::vec(-1.0f64..1.0, 80)) {
            let g = Grid::new(10, 8, 0.3, 0.2).unwrap();
            let f = ScalarField::from_vec(g, values).unwrap();
            let mut total = 0.0;
            for j in 0..g.ny {
                let mut row = 0.0;
                for i in 0..g.nx {
                    row += f.get(i, j);
                }
                total += row;
            }
            prop_assert_eq!(integrate(&f), total * (g.dx * g.dy));
        }
    }
}
