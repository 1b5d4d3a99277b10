//! Variable-coefficient pressure Poisson solver: conjugate gradients
//! preconditioned by one geometric multigrid V-cycle.
//!
//! The operator is stored in integrated (finite-volume) form,
//! `(A p)_c = sum_f t_f (p_c - p_nbr)`, with one transmissibility per face.
//! Boundary faces and blocked faces carry `t = 0`. Cells with no open face
//! are inactive and hold `p = 0`.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Fixed-order dot product: per-row partial sums, then rows in order.
pub(crate) fn dot(a: &[f64], b: &[f64], row: usize) -> f64 {
    let parts: Vec<f64> = a
        .par_chunks(row)
        .zip(b.par_chunks(row))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    parts.iter().sum()
}

pub(crate) fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone)]
struct Level {
    nx: usize,
    ny: usize,
    /// `(nx + 1) * ny` vertical-face transmissibilities.
    tx: Vec<f64>,
    /// `nx * (ny + 1)` horizontal-face transmissibilities.
    ty: Vec<f64>,
    diag: Vec<f64>,
    inv_diag: Vec<f64>,
    /// Face 0 and face `nx` of each row are the same face, coupling the
    /// first and last column.
    periodic: bool,
}

impl Level {
    fn new(nx: usize, ny: usize, tx: Vec<f64>, ty: Vec<f64>, periodic: bool) -> Self {
        let mut diag = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                diag[j * nx + i] = tx[j * (nx + 1) + i]
                    + tx[j * (nx + 1) + i + 1]
                    + ty[j * nx + i]
                    + ty[(j + 1) * nx + i];
            }
        }
        let inv_diag = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
        Self {
            nx,
            ny,
            tx,
            ty,
            diag,
            inv_diag,
            periodic,
        }
    }

    /// Off-diagonal sum for cell `i` of a row. Boundary faces carry zero
    /// transmissibility unless periodic, so the wrapped neighbour is harmless.
    #[inline(always)]
    #[allow(clippy::too_many_arguments)]
    fn row_off(
        cur: &[f64],
        below: Option<&[f64]>,
        above: Option<&[f64]>,
        txr: &[f64],
        tys: &[f64],
        tyn: &[f64],
        i: usize,
    ) -> f64 {
        let nx = cur.len();
        let w = if i > 0 { i - 1 } else { nx - 1 };
        let e = if i + 1 < nx { i + 1 } else { 0 };
        let mut s = txr[i] * cur[w] + txr[i + 1] * cur[e];
        if let Some(r) = below {
            s += tys[i] * r[i];
        }
        if let Some(r) = above {
            s += tyn[i] * r[i];
        }
        s
    }

    fn apply(&self, p: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
            let cur = &p[j * nx..(j + 1) * nx];
            let below = (j > 0).then(|| &p[(j - 1) * nx..j * nx]);
            let above = (j + 1 < ny).then(|| &p[(j + 1) * nx..(j + 2) * nx]);
            let txr = &self.tx[j * (nx + 1)..(j + 1) * (nx + 1)];
            let tys = &self.ty[j * nx..(j + 1) * nx];
            let tyn = &self.ty[(j + 1) * nx..(j + 2) * nx];
            let dr = &self.diag[j * nx..(j + 1) * nx];
            for (i, o) in row.iter_mut().enumerate() {
                *o = dr[i] * cur[i] - Self::row_off(cur, below, above, txr, tys, tyn, i);
            }
        });
    }

    /// One red–black Gauss–Seidel half sweep over cells of the given parity.
    /// Cells of one colour only read cells of the other colour, so the sweep
    /// order within a colour does not matter.
    fn gs_color(&self, x: &mut [f64], b: &[f64], color: usize) {
        let (nx, ny) = (self.nx, self.ny);
        for j in 0..ny {
            let (lo, rest) = x.split_at_mut(j * nx);
            let (cur, hi) = rest.split_at_mut(nx);
            let below = (j > 0).then(|| &lo[(j - 1) * nx..]);
            let above = (j + 1 < ny).then(|| &hi[..nx]);
            let txr = &self.tx[j * (nx + 1)..(j + 1) * (nx + 1)];
            let tys = &self.ty[j * nx..(j + 1) * nx];
            let tyn = &self.ty[(j + 1) * nx..(j + 2) * nx];
            let br = &b[j * nx..(j + 1) * nx];
            let ir = &self.inv_diag[j * nx..(j + 1) * nx];
            let mut i = (j + color) % 2;
            while i < nx {
                if ir[i] > 0.0 {
                    cur[i] = (br[i] + Self::row_off(cur, below, above, txr, tys, tyn, i)) * ir[i];
                }
                i += 2;
            }
        }
    }

    fn smooth_forward(&self, x: &mut [f64], b: &[f64]) {
        self.gs_color(x, b, 0);
        self.gs_color(x, b, 1);
    }

    fn smooth_backward(&self, x: &mut [f64], b: &[f64]) {
        self.gs_color(x, b, 1);
        self.gs_color(x, b, 0);
    }

    fn coarsen(&self) -> Level {
        let (nx, ny) = (self.nx, self.ny);
        let cx = nx.div_ceil(2);
        let cy = ny.div_ceil(2);
        let mut tx = vec![0.0; (cx + 1) * cy];
        let first = if self.periodic { 0 } else { 1 };
        for cj in 0..cy {
            // the fine face at i = 2 ci separates coarse cells ci - 1 and ci
            for ci in first..cx {
                let fi = 2 * ci;
                let mut s = 0.0;
                for fj in [2 * cj, 2 * cj + 1] {
                    if fj < ny {
                        s += self.tx[fj * (nx + 1) + fi];
                    }
                }
                tx[cj * (cx + 1) + ci] = 0.5 * s;
            }
            if self.periodic {
                tx[cj * (cx + 1) + cx] = tx[cj * (cx + 1)];
            }
        }
        let mut ty = vec![0.0; cx * (cy + 1)];
        for cj in 1..cy {
            let fj = 2 * cj;
            for ci in 0..cx {
                let mut s = 0.0;
                for fi in [2 * ci, 2 * ci + 1] {
                    if fi < nx {
                        s += self.ty[fj * nx + fi];
                    }
                }
                ty[cj * cx + ci] = 0.5 * s;
            }
        }
        Level::new(cx, cy, tx, ty, self.periodic)
    }

    fn restrict(&self, r: &[f64], coarse: &Level, out: &mut [f64]) {
        out.fill(0.0);
        for j in 0..self.ny {
            for i in 0..self.nx {
                out[(j / 2) * coarse.nx + i / 2] += r[j * self.nx + i];
            }
        }
    }

    fn prolong_add(&self, e: &[f64], coarse: &Level, x: &mut [f64]) {
        for j in 0..self.ny {
            for i in 0..self.nx {
                let k = j * self.nx + i;
                if self.diag[k] > 0.0 {
                    x[k] += e[(j / 2) * coarse.nx + i / 2];
                }
            }
        }
    }
}

/// Gauss-Seidel sweeps before and after each coarse-grid correction.
const SMOOTH_SWEEPS: usize = 2;

/// Per-level buffers reused across V-cycles.
struct Workspace {
    rhs: Vec<Vec<f64>>,
    x: Vec<Vec<f64>>,
    tmp: Vec<Vec<f64>>,
}

/// Assembled operator plus multigrid hierarchy and connected-component
/// labels used to keep the right-hand side in the range of `A`.
#[derive(Debug, Clone)]
pub struct PoissonOperator {
    levels: Vec<Level>,
    /// Component id per cell, `usize::MAX` for inactive cells.
    component: Vec<usize>,
    n_components: usize,
}

impl PoissonOperator {
    /// `tx`, `ty` are integrated transmissibilities; entries on domain
    /// boundary faces are ignored, except that with `periodic` the left
    /// face of each row is used for the wrap-around face.
    pub fn new(nx: usize, ny: usize, mut tx: Vec<f64>, mut ty: Vec<f64>, periodic: bool) -> Self {
        for j in 0..ny {
            let wrap = if periodic { tx[j * (nx + 1)] } else { 0.0 };
            tx[j * (nx + 1)] = wrap;
            tx[j * (nx + 1) + nx] = wrap;
        }
        for i in 0..nx {
            ty[i] = 0.0;
            ty[ny * nx + i] = 0.0;
        }
        let fine = Level::new(nx, ny, tx, ty, periodic);
        let (component, n_components) = label_components(&fine);
        let mut levels = vec![fine];
        loop {
            let last = levels.last().unwrap();
            if last.nx <= 4 || last.ny <= 4 || levels.len() >= 12 {
                break;
            }
            let c = last.coarsen();
            levels.push(c);
        }
        Self {
            levels,
            component,
            n_components,
        }
    }

    pub fn nx(&self) -> usize {
        self.levels[0].nx
    }

    pub fn ny(&self) -> usize {
        self.levels[0].ny
    }

    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        self.levels[0].apply(p, out);
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.levels[0].diag[k] > 0.0
    }

    /// Removes the per-component mean so that `b` is in the range of `A`.
    pub fn project_rhs(&self, b: &mut [f64]) {
        let mut sum = vec![0.0; self.n_components];
        let mut count = vec![0usize; self.n_components];
        for (k, &c) in self.component.iter().enumerate() {
            if c != usize::MAX {
                sum[c] += b[k];
                count[c] += 1;
            } else {
                b[k] = 0.0;
            }
        }
        for (k, &c) in self.component.iter().enumerate() {
            if c != usize::MAX {
                b[k] -= sum[c] / count[c] as f64;
            }
        }
    }

    fn workspace(&self) -> Workspace {
        let sizes = || self.levels.iter().map(|l| vec![0.0; l.nx * l.ny]).collect();
        Workspace {
            rhs: sizes(),
            x: sizes(),
            tmp: sizes(),
        }
    }

    /// One V-cycle for `A z = b` from a zero guess.
    fn vcycle(&self, b: &[f64], z: &mut [f64], ws: &mut Workspace) {
        ws.rhs[0].copy_from_slice(b);
        self.vcycle_level(0, ws);
        z.copy_from_slice(&ws.x[0]);
    }

    fn vcycle_level(&self, level: usize, ws: &mut Workspace) {
        let lv = &self.levels[level];
        let b = std::mem::take(&mut ws.rhs[level]);
        let mut x = std::mem::take(&mut ws.x[level]);
        x.fill(0.0);
        if level + 1 == self.levels.len() {
            for _ in 0..40 {
                lv.smooth_forward(&mut x, &b);
                lv.smooth_backward(&mut x, &b);
            }
        } else {
            for _ in 0..SMOOTH_SWEEPS {
                lv.smooth_forward(&mut x, &b);
            }
            let r = &mut ws.tmp[level];
            lv.apply(&x, r);
            for (ri, bi) in r.iter_mut().zip(&b) {
                *ri = bi - *ri;
            }
            let coarse = &self.levels[level + 1];
            lv.restrict(&ws.tmp[level], coarse, &mut ws.rhs[level + 1]);
            self.vcycle_level(level + 1, ws);
            lv.prolong_add(&ws.x[level + 1], coarse, &mut x);
            for _ in 0..SMOOTH_SWEEPS {
                lv.smooth_backward(&mut x, &b);
            }
        }
        ws.rhs[level] = b;
        ws.x[level] = x;
    }

    /// Solves `A x = b` from the initial guess in `x`. Converged when the
    /// residual max-norm is at most `tol`.
    pub fn solve(&self, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<usize> {
        let n = b.len();
        let row = self.nx();
        for (k, xv) in x.iter_mut().enumerate() {
            if !self.is_active(k) {
                *xv = 0.0;
            }
        }
        let mut ax = vec![0.0; n];
        self.apply(x, &mut ax);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        if max_abs(&r) <= tol {
            return Ok(0);
        }
        let mut ws = self.workspace();
        let mut z = vec![0.0; n];
        self.vcycle(&r, &mut z, &mut ws);
        let mut p = z.clone();
        let mut rz = dot(&r, &z, row);
        let mut ap = vec![0.0; n];
        for it in 1..=max_iter {
            self.apply(&p, &mut ap);
            let pap = dot(&p, &ap, row);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            x.par_iter_mut()
                .zip(r.par_iter_mut())
                .zip(p.par_iter().zip(ap.par_iter()))
                .for_each(|((xv, rv), (pv, apv))| {
                    *xv += alpha * pv;
                    *rv -= alpha * apv;
                });
            let res = max_abs(&r);
            if res <= tol {
                return Ok(it);
            }
            if !res.is_finite() {
                return Err(Error::NoConvergence {
                    iterations: it,
                    residual: res,
                });
            }
            self.vcycle(&r, &mut z, &mut ws);
            let rz_new = dot(&r, &z, row);
            let beta = rz_new / rz;
            rz = rz_new;
            p.par_iter_mut()
                .zip(z.par_iter())
                .for_each(|(pv, zv)| *pv = zv + beta * *pv);
        }
        self.apply(x, &mut ax);
        let residual = b
            .iter()
            .zip(&ax)
            .fold(0.0f64, |m, (bi, ai)| m.max((bi - ai).abs()));
        if residual <= tol {
            return Ok(max_iter);
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual,
        })
    }
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// definite operator given as a closure. Converged when the residual
/// max-norm is at most `tol`.
pub(crate) fn jacobi_pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    row: usize,
) -> Result<usize> {
    let n = b.len();
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    if max_abs(&r) <= tol {
        return Ok(0);
    }
    let inv: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z, row);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap, row);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        let mut res: f64 = 0.0;
        let mut rz_new = 0.0;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
            res = res.max(r[k].abs());
            z[k] = r[k] * inv[k];
            rz_new += r[k] * z[k];
        }
        if res <= tol {
            return Ok(it);
        }
        if !res.is_finite() {
            break;
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: max_abs(&r),
    })
}

fn label_components(level: &Level) -> (Vec<usize>, usize) {
    let (nx, ny) = (level.nx, level.ny);
    let mut comp = vec![usize::MAX; nx * ny];
    let mut n = 0;
    let mut stack = Vec::new();
    for start in 0..nx * ny {
        if comp[start] != usize::MAX || level.diag[start] <= 0.0 {
            continue;
        }
        comp[start] = n;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (i, j) = (k % nx, k / nx);
            let mut visit = |kk: usize, t: f64| {
                if t > 0.0 && comp[kk] == usize::MAX {
                    comp[kk] = n;
                    stack.push(kk);
                }
            };
            if i > 0 {
                visit(k - 1, level.tx[j * (nx + 1) + i]);
            } else if level.periodic {
                visit(k + nx - 1, level.tx[j * (nx + 1)]);
            }
            if i + 1 < nx {
                visit(k + 1, level.tx[j * (nx + 1) + i + 1]);
            } else if level.periodic {
                visit(k + 1 - nx, level.tx[j * (nx + 1) + nx]);
            }
            if j > 0 {
                visit(k - nx, level.ty[j * nx + i]);
            }
            if j + 1 < ny {
                visit(k + nx, level.ty[(j + 1) * nx + i]);
            }
        }
        n += 1;
    }
    (comp, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_op(nx: usize, ny: usize) -> PoissonOperator {
        PoissonOperator::new(nx, ny, vec![1.0; (nx + 1) * ny], vec![1.0; nx * (ny + 1)], false)
    }

    #[test]
    fn solves_random_consistent_problem() {
        let (nx, ny) = (40, 30);
        let op = uniform_op(nx, ny);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut b: Vec<f64> = (0..nx * ny).map(|_| rng.random_range(-1.0..1.0)).collect();
        op.project_rhs(&mut b);
        let mut x = vec![0.0; nx * ny];
        let its = op.solve(&b, &mut x, 1e-10, 1000).unwrap();
        assert!(its < 40, "{its} iterations");
        let mut ax = vec![0.0; nx * ny];
        op.apply(&x, &mut ax);
        for (a, bb) in ax.iter().zip(&b) {
            assert!((a - bb).abs() <= 1e-10);
        }
    }

    #[test]
    fn handles_jumps_and_blocked_regions() {
        let (nx, ny) = (33, 27);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tx = vec![0.0; (nx + 1) * ny];
        let mut ty = vec![0.0; nx * (ny + 1)];
        let blocked = |i: usize, j: usize| (10..15).contains(&i) && j < 20;
        for j in 0..ny {
            for i in 1..nx {
                let t = if rng.random_bool(0.5) { 1.0 } else { 1e-3 };
                tx[j * (nx + 1) + i] = if blocked(i - 1, j) || blocked(i, j) { 0.0 } else { t };
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                ty[j * nx + i] = if blocked(i, j - 1) || blocked(i, j) { 0.0 } else { 1.0 };
            }
        }
        let op = PoissonOperator::new(nx, ny, tx, ty, false);
        let mut b: Vec<f64> = (0..nx * ny).map(|_| rng.random_range(-1.0..1.0)).collect();
        op.project_rhs(&mut b);
        let mut x = vec![0.0; nx * ny];
        op.solve(&b, &mut x, 1e-9, 10 * nx * ny).unwrap();
        let mut ax = vec![0.0; nx * ny];
        op.apply(&x, &mut ax);
        for (a, bb) in ax.iter().zip(&b) {
            assert!((a - bb).abs() <= 1e-9);
        }
        for j in 0..20 {
            for i in 10..15 {
                assert_eq!(x[j * nx + i], 0.0);
            }
        }
    }

    #[test]
    fn isolated_components_get_their_own_mean_removed() {
        let (nx, ny) = (8, 8);
        let mut tx = vec![1.0; (nx + 1) * ny];
        let ty = vec![1.0; nx * (ny + 1)];
        for j in 0..ny {
            tx[j * (nx + 1) + 4] = 0.0;
        }
        let op = PoissonOperator::new(nx, ny, tx, ty, false);
        let mut b = vec![0.0; nx * ny];
        b[0] = 1.0;
        op.project_rhs(&mut b);
        let left: f64 = (0..ny).flat_map(|j| (0..4).map(move |i| j * nx + i)).map(|k| b[k]).sum();
        let right: f64 = (0..ny).flat_map(|j| (4..8).map(move |i| j * nx + i)).map(|k| b[k]).sum();
        assert!(left.abs() < 1e-15);
        assert_eq!(right, 0.0);
    }

    #[test]
    fn odd_sizes_coarsen() {
        let op = uniform_op(37, 19);
        let mut b = vec![0.0; 37 * 19];
        b[5] = 1.0;
        b[600] = -1.0;
        let mut x = vec![0.0; 37 * 19];
        assert!(op.solve(&b, &mut x, 1e-12, 500).unwrap() < 60);
    }

    #[test]
    fn periodic_rows_wrap() {
        let (nx, ny) = (21, 12);
        let op = PoissonOperator::new(nx, ny, vec![1.0; (nx + 1) * ny], vec![1.0; nx * (ny + 1)], true);
        // p = cos(2 pi x / nx) only depends on x; its discrete Laplacian is
        // (2 - 2 cos(2 pi / nx)) p per cell when the rows wrap
        let k = 2.0 * std::f64::consts::PI / nx as f64;
        let p: Vec<f64> = (0..nx * ny).map(|c| ((c % nx) as f64 * k).cos()).collect();
        let mut b = vec![0.0; nx * ny];
        op.apply(&p, &mut b);
        for (bb, pp) in b.iter().zip(&p) {
            assert!((bb - (2.0 - 2.0 * k.cos()) * pp).abs() < 1e-12);
        }
        let mut x = vec![0.0; nx * ny];
        op.solve(&b, &mut x, 1e-11, 500).unwrap();
        let shift = x[0] - p[0];
        for (xx, pp) in x.iter().zip(&p) {
            assert!((xx - pp - shift).abs() < 1e-8);
        }
    }
}
