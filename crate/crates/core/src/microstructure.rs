//! Particle structures: PGM mask loading, random disk packings, diffuse
//! smoothing, and the coating data behind the evaporation factor.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::binder::{indicator, BinderState};
use crate::error::{Error, Result};
use crate::grid::{Boundaries, Grid, ScalarField};
use crate::phasefield::{equilibrium_profile, PhaseParams, PhaseState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoatingData {
    /// Particle density [kg/m^3].
    pub rho_solid: f64,
    /// Solid volume fraction of the dry coating.
    pub chi_solid: f64,
    /// Area-specific dry weight [kg/m^2].
    pub mass_loading: f64,
    /// Solvent density [kg/m^3].
    pub rho_solvent: f64,
    /// Evaporation rate [kg/m^2/s].
    pub evaporation_rate: f64,
}

impl CoatingData {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("rho_solid", self.rho_solid),
            ("mass_loading", self.mass_loading),
            ("rho_solvent", self.rho_solvent),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.chi_solid > 0.0 && self.chi_solid < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "chi_solid must lie in (0, 1), got {}",
                self.chi_solid
            )));
        }
        if !(self.evaporation_rate >= 0.0 && self.evaporation_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "evaporation rate must be >= 0, got {}",
                self.evaporation_rate
            )));
        }
        Ok(())
    }
}

/// Evaporation factor `kappa = rho_s chi / (rho_solvent M) * r_dot` [1/s].
pub fn compute_kappa(data: &CoatingData) -> f64 {
    data.rho_solid * data.chi_solid / (data.rho_solvent * data.mass_loading) * data.evaporation_rate
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    None,
    Mask { path: PathBuf },
    Packing { seed: u64, mean_diameter: f64, diameter_cv: f64, target_chi: f64, particles: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Microstructure {
    pub phi_solid: ScalarField,
    /// Height of the dry coating; `chi` is measured below it.
    pub film_height: f64,
    pub measured_chi: f64,
    pub provenance: Provenance,
}

impl Microstructure {
    pub fn new(phi_solid: ScalarField, film_height: f64, provenance: Provenance) -> Result<Self> {
        if phi_solid.values().iter().any(|&s| !(0.0..=1.0).contains(&s)) {
            return Err(Error::InvalidParameter("solid fraction outside [0, 1]".into()));
        }
        if !(film_height > 0.0) {
            return Err(Error::InvalidParameter(format!("film height must be > 0, got {film_height}")));
        }
        let measured_chi = coating_fraction(&phi_solid, film_height);
        Ok(Self {
            phi_solid,
            film_height,
            measured_chi,
            provenance,
        })
    }

    /// Particle-free domain.
    pub fn empty(grid: Grid, film_height: f64) -> Self {
        Self {
            phi_solid: ScalarField::zeros(grid),
            film_height,
            measured_chi: 0.0,
            provenance: Provenance::None,
        }
    }

    pub fn recompute_chi(&self) -> f64 {
        coating_fraction(&self.phi_solid, self.film_height)
    }
}

/// Mean of `phi_s` over the rows whose centres lie below `film_height`.
pub fn coating_fraction(phi_solid: &ScalarField, film_height: f64) -> f64 {
    let g = phi_solid.grid();
    let mut sum = 0.0;
    let mut n = 0usize;
    for j in 0..g.ny {
        if g.cell_center(0, j).1 >= film_height {
            break;
        }
        sum += phi_solid.row(j).iter().sum::<f64>();
        n += g.nx;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedFile {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Reads a binary (P5) PGM with 8-bit samples. Returns `(width, height,
/// pixels)` with the first row at the top of the image.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed(path, "truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if tokens[0] != "P5" {
        return Err(malformed(path, format!("expected P5 magic, found `{}`", tokens[0])));
    }
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse().map_err(|_| malformed(path, format!("bad {what} `{s}`")))
    };
    let (w, h, maxval) = (num(&tokens[1], "width")?, num(&tokens[2], "height")?, num(&tokens[3], "maxval")?);
    if maxval == 0 || maxval > 255 {
        return Err(malformed(path, format!("only 8-bit samples are supported, maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = w * h;
    if bytes.len() < pos + need {
        return Err(malformed(path, format!("raster has {} bytes, expected {need}", bytes.len().saturating_sub(pos))));
    }
    Ok((w, h, bytes[pos..pos + need].to_vec()))
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(pixels)?;
    Ok(())
}

/// Thresholds `phi_s` at 0.5 into PGM pixels (white = solid, top row first).
pub fn mask_pixels(phi_solid: &ScalarField) -> Vec<u8> {
    let g = phi_solid.grid();
    let mut px = Vec::with_capacity(g.len());
    for j in (0..g.ny).rev() {
        px.extend(phi_solid.row(j).iter().map(|&s| if s >= 0.5 { 255 } else { 0 }));
    }
    px
}

/// Loads a segmented mask (pixel >= 128 is solid) and smooths it.
pub fn load_mask(path: &Path, grid: Grid, epsilon: f64, film_height: f64) -> Result<Microstructure> {
    let (w, h, px) = read_pgm(path)?;
    if (w, h) != (grid.nx, grid.ny) {
        return Err(malformed(
            path,
            format!("image is {w}x{h} pixels, grid is {}x{}", grid.nx, grid.ny),
        ));
    }
    let mut solid = vec![false; grid.len()];
    for row in 0..h {
        let j = h - 1 - row;
        for i in 0..w {
            solid[j * w + i] = px[row * w + i] >= 128;
        }
    }
    let phi = smooth_mask(&solid, grid, epsilon);
    Microstructure::new(phi, film_height, Provenance::Mask { path: path.to_path_buf() })
}

/// One-dimensional squared distance transform (lower envelope of
/// parabolas) for samples spaced `h` apart.
fn edt_1d(f: &[f64], h: f64, out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    let mut first = None;
    for (q, &fq) in f.iter().enumerate() {
        if fq.is_finite() {
            first = Some(q);
            break;
        }
    }
    let Some(q0) = first else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    v[0] = q0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in q0 + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let xq = q as f64 * h;
        loop {
            let p = v[k];
            let xp = p as f64 * h;
            let s = ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let x = q as f64 * h;
        while z[k + 1] < x {
            k += 1;
        }
        let p = v[k];
        let d = x - p as f64 * h;
        *o = d * d + f[p];
    }
}

/// Squared Euclidean distance from every cell centre to the nearest cell
/// with `feature == true`.
fn squared_distance(feature: &[bool], grid: &Grid) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut tmp = vec![0.0; nx * ny];
    let mut buf = vec![0.0; nx.max(ny)];
    for j in 0..ny {
        let f: Vec<f64> = (0..nx)
            .map(|i| if feature[j * nx + i] { 0.0 } else { f64::INFINITY })
            .collect();
        edt_1d(&f, grid.dx, &mut buf[..nx]);
        tmp[j * nx..(j + 1) * nx].copy_from_slice(&buf[..nx]);
    }
    let mut out = vec![0.0; nx * ny];
    for i in 0..nx {
        let f: Vec<f64> = (0..ny).map(|j| tmp[j * nx + i]).collect();
        edt_1d(&f, grid.dy, &mut buf[..ny]);
        for j in 0..ny {
            out[j * nx + i] = buf[j];
        }
    }
    out
}

/// Diffuse solid field from a binary mask: `phi_s = (1 - tanh(3 d / eps)) / 2`
/// with `d` the signed distance to the mask boundary, positive outside.
/// The boundary sits half a cell from the centres of edge cells.
pub fn smooth_mask(solid: &[bool], grid: Grid, epsilon: f64) -> ScalarField {
    if solid.iter().all(|&s| !s) {
        return ScalarField::zeros(grid);
    }
    if solid.iter().all(|&s| s) {
        return ScalarField::constant(grid, 1.0);
    }
    let fluid: Vec<bool> = solid.iter().map(|&s| !s).collect();
    let to_solid = squared_distance(solid, &grid);
    let to_fluid = squared_distance(&fluid, &grid);
    let half = 0.25 * (grid.dx + grid.dy);
    let v = (0..grid.len())
        .map(|k| {
            let d = if solid[k] {
                -(to_fluid[k].sqrt() - half)
            } else {
                to_solid[k].sqrt() - half
            };
            equilibrium_profile(-d, epsilon)
        })
        .collect();
    ScalarField::from_vec(grid, v).expect("finite smoothing")
}

/// Random sequential adsorption settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackingSpec {
    pub seed: u64,
    /// Mean particle diameter [m].
    pub mean_diameter: f64,
    /// Coefficient of variation of the lognormal diameters.
    pub diameter_cv: f64,
    pub target_chi: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_attempts() -> usize {
    400_000
}

/// Accepted deviation of the smoothed solid fraction from the target.
pub const CHI_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy)]
struct Disk {
    x: f64,
    y: f64,
    r: f64,
}

/// Non-overlapping disks (gap of at least one cell) with lognormal
/// diameters, inside `[0, lx] x [0, film_height]`, until the coating
/// fraction reaches the target. After long runs of rejected placements the
/// diameter scale shrinks by 10% (never below three cells). Particles are
/// then dropped, newest first, while the smoothed fraction overshoots.
pub fn generate_packing(spec: &PackingSpec, grid: Grid, epsilon: f64, film_height: f64) -> Result<Microstructure> {
    if !(spec.target_chi > 0.0 && spec.target_chi < 1.0) {
        return Err(Error::InvalidParameter(format!("target chi must lie in (0, 1), got {}", spec.target_chi)));
    }
    if !(spec.mean_diameter > 0.0) || !(spec.diameter_cv >= 0.0) {
        return Err(Error::InvalidParameter("particle diameters must be positive".into()));
    }
    let h = grid.max_spacing();
    let top = film_height.min(grid.ly() - 2.0 * h - epsilon);
    if top <= 0.0 {
        return Err(Error::InvalidParameter("film height leaves no room for particles".into()));
    }
    let coating_rows = (0..grid.ny).take_while(|&j| grid.cell_center(0, j).1 < film_height).count();
    let coating_cells = (coating_rows * grid.nx) as f64;
    let s2 = (1.0 + spec.diameter_cv * spec.diameter_cv).ln();
    let dist = LogNormal::new(spec.mean_diameter.ln() - 0.5 * s2, s2.sqrt())
        .map_err(|e| Error::InvalidParameter(format!("diameter distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut disks: Vec<Disk> = Vec::new();
    let mut solid = vec![false; grid.len()];
    let mut covered = 0usize;
    let mut scale = 1.0;
    let mut streak = 0usize;
    let min_d = 3.0 * h;
    let hi = spec.target_chi + 0.5 * CHI_TOLERANCE;
    for _ in 0..spec.max_attempts {
        if covered as f64 / coating_cells >= spec.target_chi {
            break;
        }
        if streak > 2000 && scale * spec.mean_diameter > min_d {
            scale *= 0.9;
            streak = 0;
        }
        let d = (dist.sample(&mut rng) * scale).clamp(min_d, 3.0 * spec.mean_diameter);
        let r = 0.5 * d;
        let x = rng.random_range(0.0..grid.lx());
        let y = rng.random_range(0.0..(top - r).max(f64::MIN_POSITIVE));
        streak += 1;
        if y + r > top {
            continue;
        }
        let clear = disks.iter().all(|o| {
            let gap = ((o.x - x).powi(2) + (o.y - y).powi(2)).sqrt() - o.r - r;
            gap >= h
        });
        if !clear {
            continue;
        }
        let cells = raster(&grid, x, y, r);
        let added = cells.iter().filter(|&&k| k / grid.nx < coating_rows).count();
        if (covered + added) as f64 / coating_cells > hi {
            continue;
        }
        for k in cells {
            solid[k] = true;
        }
        covered += added;
        disks.push(Disk { x, y, r });
        streak = 0;
    }
    let mut phi = smooth_mask(&solid, grid, epsilon);
    // the diffuse tails add area around convex particles
    while coating_fraction(&phi, film_height) > hi && disks.len() > 1 {
        let d = disks.pop().expect("nonempty");
        for k in raster(&grid, d.x, d.y, d.r) {
            solid[k] = false;
        }
        phi = smooth_mask(&solid, grid, epsilon);
    }
    let micro = Microstructure::new(
        phi,
        film_height,
        Provenance::Packing {
            seed: spec.seed,
            mean_diameter: spec.mean_diameter,
            diameter_cv: spec.diameter_cv,
            target_chi: spec.target_chi,
            particles: disks.len(),
        },
    )?;
    if (micro.measured_chi - spec.target_chi).abs() > CHI_TOLERANCE {
        return Err(Error::PackingFailed {
            achieved: micro.measured_chi,
            target: spec.target_chi,
        });
    }
    Ok(micro)
}

/// Cells whose centres fall inside the disk.
fn raster(grid: &Grid, x: f64, y: f64, r: f64) -> Vec<usize> {
    let i0 = (((x - r - grid.x0) / grid.dx).floor().max(0.0)) as usize;
    let i1 = ((((x + r - grid.x0) / grid.dx).ceil()) as usize).min(grid.nx);
    let j0 = (((y - r - grid.y0) / grid.dy).floor().max(0.0)) as usize;
    let j1 = ((((y + r - grid.y0) / grid.dy).ceil()) as usize).min(grid.ny);
    let mut out = Vec::new();
    for j in j0..j1 {
        for i in i0..i1 {
            let (cx, cy) = grid.cell_center(i, j);
            if (cx - x).powi(2) + (cy - y).powi(2) <= r * r {
                out.push(j * grid.nx + i);
            }
        }
    }
    out
}

/// Solvent up to `fill_height` (tanh cap), binder `c0` in the solvent.
pub fn initialize_state(
    micro: &Microstructure,
    params: PhaseParams,
    bc: Boundaries,
    fill_height: f64,
    c0: f64,
) -> Result<(PhaseState, BinderState)> {
    let g = *micro.phi_solid.grid();
    let phi = ScalarField::from_fn(g, |_, y| equilibrium_profile(fill_height - y, params.epsilon));
    let phase = PhaseState::new(micro.phi_solid.clone(), phi, params, bc)?;
    let binder = BinderState::initial(c0, &indicator(&phase.phi_tilde, &phase.phi_solid));
    Ok((phase, binder))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hc(chi: f64, m: f64) -> CoatingData {
        CoatingData {
            rho_solid: 2062.0,
            chi_solid: chi,
            mass_loading: m,
            rho_solvent: 997.0,
            evaporation_rate: 9e-3,
        }
    }

    #[test]
    fn kappa_of_reference_coatings() {
        assert!((compute_kappa(&hc(0.465, 79.5e-3)) - 0.1089).abs() < 5e-4);
        assert!((compute_kappa(&hc(0.549, 78.4e-3)) - 0.1303).abs() < 5e-4);
        // independent arithmetic: rho_s chi r / (rho_l M)
        let k = 2062.0 * 0.465 * 9e-3 / (997.0 * 79.5e-3);
        assert!((compute_kappa(&hc(0.465, 79.5e-3)) - k).abs() < 1e-15);
        assert_eq!(compute_kappa(&CoatingData { evaporation_rate: 0.0, ..hc(0.5, 0.08) }), 0.0);
    }

    #[test]
    fn coating_data_validation() {
        assert!(hc(0.5, 0.08).validate().is_ok());
        assert!(hc(1.2, 0.08).validate().is_err());
        assert!(hc(0.5, 0.0).validate().is_err());
    }

    fn brute_distance(feature: &[bool], g: &Grid) -> Vec<f64> {
        (0..g.len())
            .map(|k| {
                let (x, y) = g.cell_center(k % g.nx, k / g.nx);
                (0..g.len())
                    .filter(|&m| feature[m])
                    .map(|m| {
                        let (a, b) = g.cell_center(m % g.nx, m / g.nx);
                        (a - x).powi(2) + (b - y).powi(2)
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn distance_transform_matches_brute_force(
            bits in proptest::collection::vec(prop::bool::weighted(0.15), 13 * 9),
            dy in 0.5f64..2.0,
        ) {
            let g = Grid::new(13, 9, 1.0, dy).unwrap();
            let fast = squared_distance(&bits, &g);
            let slow = brute_distance(&bits, &g);
            for (a, b) in fast.iter().zip(&slow) {
                if b.is_finite() {
                    prop_assert!((a - b).abs() < 1e-9 * (1.0 + b));
                } else {
                    prop_assert!(a.is_infinite());
                }
            }
        }
    }

    #[test]
    fn half_plane_mask_smooths_to_tanh() {
        let g = Grid::new(8, 40, 1.0, 1.0).unwrap();
        let solid: Vec<bool> = (0..g.len()).map(|k| k / g.nx < 20).collect();
        let phi = smooth_mask(&solid, g, 4.0);
        for j in 0..g.ny {
            let y = g.cell_center(0, j).1;
            let want = 0.5 * (1.0 - (3.0 * (y - 20.0) / 4.0).tanh());
            assert!((phi.get(3, j) - want).abs() < 1e-12, "row {j}");
        }
        // boundary line sits between rows 19 and 20
        assert!(phi.get(0, 19) > 0.5 && phi.get(0, 20) < 0.5);
    }

    #[test]
    fn pgm_round_trip_and_orientation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let g = Grid::new(20, 16, 1.0, 1.0).unwrap();
        // solid disk in the lower-left quadrant
        let solid: Vec<bool> = (0..g.len())
            .map(|k| {
                let (x, y) = g.cell_center(k % g.nx, k / g.nx);
                (x - 6.0).powi(2) + (y - 5.0).powi(2) < 16.0
            })
            .collect();
        let sharp = ScalarField::from_vec(g, solid.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect()).unwrap();
        write_pgm(&path, g.nx, g.ny, &mask_pixels(&sharp)).unwrap();
        let m = load_mask(&path, g, 4.0, 16.0).unwrap();
        assert!(m.phi_solid.get(6, 5) > 0.9);
        assert!(m.phi_solid.get(15, 12) < 0.01);
        assert_eq!(m.provenance, Provenance::Mask { path: path.clone() });
        // thresholded diffuse field agrees with the mask away from the band
        let mut agree = 0;
        let mut total = 0;
        for k in 0..g.len() {
            let (x, y) = g.cell_center(k % g.nx, k / g.nx);
            let r = ((x - 6.0).powi(2) + (y - 5.0).powi(2)).sqrt();
            if (r - 4.0).abs() > 4.0 {
                total += 1;
                agree += usize::from((m.phi_solid.values()[k] >= 0.5) == solid[k]);
            }
        }
        assert!(agree as f64 >= 0.99 * total as f64);
    }

    #[test]
    fn pgm_errors() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(4, 4, 1.0, 1.0).unwrap();
        let p = dir.path().join("bad.pgm");
        fs::write(&p, b"P2\n4 4\n255\n").unwrap();
        assert!(matches!(load_mask(&p, g, 4.0, 4.0), Err(Error::MalformedFile { .. })));
        fs::write(&p, b"P5\n4 4\n255\n\x00\x00").unwrap();
        assert!(matches!(load_mask(&p, g, 4.0, 4.0), Err(Error::MalformedFile { .. })));
        write_pgm(&p, 3, 4, &[0; 12]).unwrap();
        assert!(matches!(load_mask(&p, g, 4.0, 4.0), Err(Error::MalformedFile { .. })));
        fs::write(&p, b"P5\n# comment\n4 4\n255\n\xff\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00").unwrap();
        let m = load_mask(&p, g, 4.0, 4.0).unwrap();
        // top-left pixel is the top-left cell
        assert!(m.phi_solid.get(0, 3) > m.phi_solid.get(0, 0));
    }

    fn desk_grid() -> Grid {
        Grid::with_extent(96, 72, 55e-6, 40.07e-6).unwrap()
    }

    #[test]
    fn packing_hits_target_and_respects_gap() {
        let g = desk_grid();
        let eps = 4.0 * g.max_spacing();
        let spec = PackingSpec {
            seed: 7,
            mean_diameter: 6e-6,
            diameter_cv: 0.3,
            target_chi: 0.465,
            max_attempts: 400_000,
        };
        let m = generate_packing(&spec, g, eps, 37.5e-6).unwrap();
        assert!((m.measured_chi - 0.465).abs() <= CHI_TOLERANCE);
        assert!((m.recompute_chi() - m.measured_chi).abs() < 1e-15);
        // nothing solid within two cells of the top
        for j in g.ny - 2..g.ny {
            assert!(m.phi_solid.row(j).iter().all(|&s| s < 1e-2));
        }
        let again = generate_packing(&spec, g, eps, 37.5e-6).unwrap();
        assert_eq!(again.phi_solid, m.phi_solid);
        let other = generate_packing(&PackingSpec { seed: 8, ..spec }, g, eps, 37.5e-6).unwrap();
        assert_ne!(other.phi_solid, m.phi_solid);
    }

    #[test]
    fn coarse_packing_reaches_dense_target() {
        let g = desk_grid();
        let spec = PackingSpec {
            seed: 3,
            mean_diameter: 12e-6,
            diameter_cv: 0.3,
            target_chi: 0.549,
            max_attempts: 400_000,
        };
        let m = generate_packing(&spec, g, 4.0 * g.max_spacing(), 37.5e-6).unwrap();
        assert!((m.measured_chi - 0.549).abs() <= CHI_TOLERANCE);
    }

    #[test]
    fn exhausted_attempts_fail_to_pack() {
        let g = desk_grid();
        let spec = PackingSpec {
            seed: 1,
            mean_diameter: 2e-6,
            diameter_cv: 0.0,
            target_chi: 0.3,
            max_attempts: 10,
        };
        let err = generate_packing(&spec, g, 4.0 * g.max_spacing(), 37.5e-6).unwrap_err();
        assert!(matches!(err, Error::PackingFailed { target, .. } if target == 0.3));
    }

    #[test]
    fn initial_state_fills_to_the_line() {
        let g = Grid::with_extent(16, 64, 16.0, 64.0).unwrap();
        let micro = Microstructure::empty(g, 40.0);
        let params = PhaseParams {
            sigma: 1.0,
            epsilon: 4.0,
            mobility: 1.0,
            kappa: 0.0,
            theta: 90.0,
            l_y: 40.0,
            ve_override: None,
        };
        let (phase, binder) = initialize_state(&micro, params, Boundaries::noflux(), 40.0, 0.02).unwrap();
        assert!(phase.phi_tilde.get(0, 0) > 0.999);
        assert!(phase.phi_tilde.get(0, 63) < 1e-3);
        let solvent: f64 = crate::grid::integrate(&phase.phi_tilde);
        assert!((solvent / 16.0 - 40.0).abs() < 0.05);
        assert!((binder.total0 - 0.02 * solvent).abs() < 1e-12);
    }
}
