//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Runs everything at desk scale. `POREDRY_ACCEPTANCE=quick` skips the
//! electrode sweeps (criteria 7 to 10); `POREDRY_ACCEPTANCE_STRICT=1`
//! makes any failure a nonzero exit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use poredry::binder::{step_binder, transport_dt_bound};
use poredry::microstructure::compute_kappa;
use poredry::scenarios::{bubble_rise, electrode_drying, ElectrodeOverrides, Preset};
use poredry::validation::{capillary_contrasts, check_bubble, check_capillary, droplet_angle};
use poredry::{
    run, BinderParams, BinderState, Boundaries, Grid, PhaseParams, PhaseState, RunManifest, ScalarField,
    Termination, VectorField,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BINDER_STEP_TOL: f64 = 1e-12;
const BINDER_STEPS: usize = 200;
const ANGLE_TOL_DEG: f64 = 5.0;
const CONTRAST_TIMES: [f64; 3] = [0.2719, 0.625, 0.8103];

struct Outcome {
    passed: Option<bool>,
    detail: String,
}

impl Outcome {
    fn check(passed: bool, detail: String) -> Self {
        Self {
            passed: Some(passed),
            detail,
        }
    }

    fn skipped(why: &str) -> Self {
        Self {
            passed: None,
            detail: why.into(),
        }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Self::check(false, format!("error: {e}"))
    }
}

struct Suite {
    failed: usize,
}

impl Suite {
    fn report(&mut self, n: usize, name: &str, budget_s: f64, f: impl FnOnce() -> Outcome) {
        let t0 = Instant::now();
        let mut o = f();
        let secs = t0.elapsed().as_secs_f64();
        if o.passed == Some(true) && secs > budget_s {
            o.passed = Some(false);
            o.detail.push_str("; over the runtime budget");
        }
        let tag = match o.passed {
            Some(true) => "PASS",
            Some(false) => {
                self.failed += 1;
                "FAIL"
            }
            None => "SKIP",
        };
        println!("criterion {n:>2} {tag} {name}: {} [{secs:.1} s of {budget_s:.0} s]", o.detail);
    }
}

/// Monolithic reference: assemble the upwind convection-diffusion operator
/// on `c` once, face by face, as a sparse matrix, then march
/// `cI += dt A c` with `c = cI / I`.
struct Oracle {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Oracle {
    fn assemble(g: &Grid, ind: &[f64], u: &[f64], v: &[f64], d: f64) -> Self {
        let n = g.len();
        let mut rows = vec![BTreeMap::<usize, f64>::new(); n];
        let mut face = |l: usize, r: usize, a: f64, k: f64, vel: f64, h: f64| {
            let mut add = |row: usize, col: usize, x: f64| *rows[row].entry(col).or_insert(0.0) += x;
            add(l, r, a * k);
            add(l, l, -a * k);
            add(r, l, a * k);
            add(r, r, -a * k);
            if vel > 0.0 {
                add(r, l, a * vel / h);
                add(r, r, -a * vel / h);
            } else if vel < 0.0 {
                add(l, r, -a * vel / h);
                add(l, l, a * vel / h);
            }
        };
        let (kx, ky) = (d / (g.dx * g.dx), d / (g.dy * g.dy));
        for j in 0..g.ny {
            for i in 1..g.nx {
                let (l, r) = (g.idx(i - 1, j), g.idx(i, j));
                let a = 0.5 * (ind[l] + ind[r]);
                face(l, r, a, kx, u[j * (g.nx + 1) + i], g.dx);
            }
        }
        for j in 1..g.ny {
            for i in 0..g.nx {
                let (l, r) = (g.idx(i, j - 1), g.idx(i, j));
                let a = 0.5 * (ind[l] + ind[r]);
                face(l, r, a, ky, v[j * g.nx + i], g.dy);
            }
        }
        Self {
            rows: rows.into_iter().map(|m| m.into_iter().collect()).collect(),
        }
    }

    fn step(&self, ci: &[f64], ind: &[f64], dt: f64) -> Vec<f64> {
        let c: Vec<f64> = ci.iter().zip(ind).map(|(m, i)| m / i).collect();
        self.rows
            .iter()
            .zip(ci)
            .map(|(row, m)| m + dt * row.iter().map(|&(col, a)| a * c[col]).sum::<f64>())
            .collect()
    }

    fn max_row_sum(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.iter().map(|x| x.1.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Random static indicator in [0.2, 1] and a velocity whose flux `I_f u_f`
/// comes from a stream function vanishing on the walls.
fn random_instance(seed: u64) -> (Grid, Vec<f64>, Vec<f64>, Vec<f64>) {
    let g = Grid::with_extent(32, 32, 1.0, 1.0).unwrap();
    let (nx, ny) = (g.nx, g.ny);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ind: Vec<f64> = (0..g.len()).map(|_| rng.random_range(0.2..1.0)).collect();
    let mut psi = vec![0.0; (nx + 1) * (ny + 1)];
    for j in 1..ny {
        for i in 1..nx {
            psi[j * (nx + 1) + i] = rng.random_range(-1.0..1.0);
        }
    }
    let node = |i: usize, j: usize| psi[j * (nx + 1) + i];
    let mut u = vec![0.0; g.n_xfaces()];
    for j in 0..ny {
        for i in 1..nx {
            let a = 0.5 * (ind[g.idx(i - 1, j)] + ind[g.idx(i, j)]);
            u[j * (nx + 1) + i] = (node(i, j + 1) - node(i, j)) / g.dy / a;
        }
    }
    let mut v = vec![0.0; g.n_yfaces()];
    for j in 1..ny {
        for i in 0..nx {
            let a = 0.5 * (ind[g.idx(i, j - 1)] + ind[g.idx(i, j)]);
            v[j * nx + i] = -(node(i + 1, j) - node(i, j)) / g.dx / a;
        }
    }
    (g, ind, u, v)
}

fn binder_against_oracle() -> poredry::Result<Outcome> {
    let (g, ind, u, v) = random_instance(7);
    let d = 0.05;
    let oracle = Oracle::assemble(&g, &ind, &u, &v, d);
    let min_i = ind.iter().copied().fold(f64::INFINITY, f64::min);

    let phase = PhaseState::new(
        ScalarField::zeros(g),
        ScalarField::from_vec(g, ind.clone())?,
        PhaseParams {
            sigma: 0.0,
            epsilon: 4.0 * g.dx,
            mobility: 0.0,
            kappa: 0.0,
            theta: 90.0,
            l_y: 1.0,
            ve_override: None,
        },
        Boundaries::noflux(),
    )?;
    let vel = VectorField::from_parts(g, u, v)?;
    let params = BinderParams {
        diffusivity: d,
        separation: 0.5,
        c0: 1.0,
        deposition: false,
    };
    let dt = (0.5 * min_i / oracle.max_row_sum()).min(0.5 * transport_dt_bound(&params, &vel));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let c_init: Vec<f64> = ind.iter().map(|i| i * rng.random_range(0.5..1.5)).collect();
    let mut state = BinderState::initial(1.0, &phase.phi_tilde);
    state.ci = ScalarField::from_vec(g, c_init.clone())?;
    state.total0 = poredry::grid::integrate(&state.ci);
    let mut reference = c_init;
    let mut worst: f64 = 0.0;
    for _ in 0..BINDER_STEPS {
        state = step_binder(&state, &phase, &phase, &vel, &params, dt)?;
        reference = oracle.step(&reference, &ind, dt);
        let diff = state
            .ci
            .values()
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(diff);
    }
    let peak = reference.iter().copied().fold(0.0, f64::max);
    Ok(Outcome::check(
        worst <= BINDER_STEP_TOL,
        format!("max |cI - oracle| {worst:.2e} over {BINDER_STEPS} steps (peak cI {peak:.3}, dt {dt:.2e})"),
    ))
}

fn kappas() -> Outcome {
    let fine = compute_kappa(&poredry::CoatingData {
        evaporation_rate: 9e-3,
        ..Preset::Fine.coating()
    });
    let coarse = compute_kappa(&poredry::CoatingData {
        evaporation_rate: 9e-3,
        ..Preset::Coarse.coating()
    });
    let (a, b) = (format!("{fine:.4}"), format!("{coarse:.4}"));
    Outcome::check(a == "0.1089" && b == "0.1303", format!("fine {fine:.6} -> {a}, coarse {coarse:.6} -> {b}"))
}

fn contrasts() -> poredry::Result<Outcome> {
    let hi = capillary_contrasts(12.5, &CONTRAST_TIMES, false)?;
    let lo = capillary_contrasts(0.125, &CONTRAST_TIMES, false)?;
    let ok = hi.iter().zip(&lo).all(|(a, b)| a > b);
    let pairs: Vec<String> = CONTRAST_TIMES
        .iter()
        .zip(hi.iter().zip(&lo))
        .map(|(t, (a, b))| format!("t*={t}: {a:.4} vs {b:.4}"))
        .collect();
    Ok(Outcome::check(ok, format!("Pe 12.5 vs 0.125 {}", pairs.join(", "))))
}

fn droplet(theta: f64) -> Outcome {
    match droplet_angle(theta, false) {
        Ok(a) => Outcome::check(
            (a - theta).abs() <= ANGLE_TOL_DEG,
            format!("measured {a:.2} deg for {theta} deg"),
        ),
        Err(e) => Outcome::error(e),
    }
}

/// Electrode runs keyed by a label, computed once and shared.
#[derive(Default)]
struct Electrode {
    runs: BTreeMap<String, Result<RunManifest, String>>,
}

impl Electrode {
    fn get(&mut self, preset: Preset, o: ElectrodeOverrides) -> Result<&RunManifest, String> {
        let key = format!(
            "{preset} kv={} ke={} ks={}",
            o.k_viscosity, o.k_evap, o.k_surf
        );
        self.runs
            .entry(key.clone())
            .or_insert_with(|| {
                let t0 = Instant::now();
                let sc = electrode_drying(preset, o, false);
                let r = run(&sc.config).map_err(|e| e.to_string()).and_then(|m| match &m.termination {
                    Termination::SolverFailure { message, .. } => Err(message.clone()),
                    _ => Ok(m),
                });
                eprintln!("  electrode {key}: {:.0} s", t0.elapsed().as_secs_f64());
                r
            })
            .as_ref()
            .map_err(|e| format!("{key}: {e}"))
    }

    fn m(&mut self, preset: Preset, o: ElectrodeOverrides) -> Result<f64, String> {
        let run = self.get(preset, o)?;
        run.diagnostics.m.ok_or_else(|| "no gradient".into())
    }

    fn breakthrough(&mut self, o: ElectrodeOverrides) -> Result<f64, String> {
        let run = self.get(Preset::Coarse, o)?;
        run.diagnostics
            .t_breakthrough
            .ok_or_else(|| format!("no breakthrough (stopped on {:?})", run.termination))
    }
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

fn with(f: impl FnOnce(&mut ElectrodeOverrides)) -> ElectrodeOverrides {
    let mut o = ElectrodeOverrides::default();
    f(&mut o);
    o
}

fn series(
    el: &mut Electrode,
    values: &[f64],
    mut one: impl FnMut(&mut Electrode, f64) -> Result<f64, String>,
    label: &str,
    what: &str,
) -> Outcome {
    let mut out = Vec::new();
    for &v in values {
        match one(el, v) {
            Ok(x) => out.push(x),
            Err(e) => return Outcome::check(false, e),
        }
    }
    let text: Vec<String> = values.iter().zip(&out).map(|(v, x)| format!("{label}={v}: {x:.4}")).collect();
    Outcome::check(strictly_increasing(&out), format!("{what} {}", text.join(", ")))
}

fn csv_bytes(dir: &Path) -> std::io::Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "csv") {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p)?);
        }
    }
    Ok(out)
}

fn determinism() -> Result<Outcome, Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let mut files = Vec::new();
    for threads in [1, 2] {
        let mut config = bubble_rise(false).config;
        let dir = tmp.path().join(format!("t{threads}"));
        config.output.dir = Some(dir.clone());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        pool.install(|| run(&config))?;
        files.push(csv_bytes(&dir)?);
    }
    let same = files[0] == files[1] && !files[0].is_empty();
    Ok(Outcome::check(
        same,
        format!("{} snapshot files, byte-identical under 1 and 2 threads: {same}", files[0].len()),
    ))
}

fn main() {
    let quick = std::env::var("POREDRY_ACCEPTANCE").is_ok_and(|v| v == "quick");
    let strict = std::env::var("POREDRY_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut s = Suite { failed: 0 };

    s.report(1, "bubble binder conservation", 300.0, || {
        check_bubble(false, 20).map_or_else(Outcome::error, |r| Outcome::check(r.passed, r.detail))
    });
    s.report(2, "binder step vs monolithic oracle", 10.0, || {
        binder_against_oracle().unwrap_or_else(Outcome::error)
    });
    s.report(3, "capillary conservation with deposition", 600.0, || {
        check_capillary(false, 0.8).map_or_else(Outcome::error, |r| Outcome::check(r.passed, r.detail))
    });
    s.report(4, "Peclet contrast ordering", 900.0, || contrasts().unwrap_or_else(Outcome::error));
    s.report(5, "evaporation factor of both coatings", 1.0, kappas);
    for theta in [60.0, 90.0, 120.0] {
        s.report(6, &format!("droplet angle {theta}"), 300.0, || droplet(theta));
    }

    let mut el = Electrode::default();
    let skip = "skipped (POREDRY_ACCEPTANCE=quick)";
    s.report(7, "m rises with evaporation rate", 1800.0, || {
        if quick {
            return Outcome::skipped(skip);
        }
        series(&mut el, &[3.0, 6.0, 9.0], |el, k| el.m(Preset::Coarse, with(|o| o.k_evap = k)), "k_evap", "m")
    });
    s.report(8, "breakthrough delayed by viscosity", 1800.0, || {
        if quick {
            return Outcome::skipped(skip);
        }
        series(&mut el, &[1.0, 10.0, 50.0], |el, k| el.breakthrough(with(|o| o.k_viscosity = k)), "k_visc", "t*_b")
    });
    s.report(9, "m drops at low surface tension", 1200.0, || {
        if quick {
            return Outcome::skipped(skip);
        }
        series(
            &mut el,
            &[1.0 / 50.0, 1.0],
            |el, k| el.m(Preset::Coarse, with(|o| o.k_surf = k)),
            "k_surf",
            "m",
        )
    });
    s.report(10, "fine coating keeps a smaller gradient", 1200.0, || {
        if quick {
            return Outcome::skipped(skip);
        }
        let fine = el.m(Preset::Fine, ElectrodeOverrides::default());
        let coarse = el.m(Preset::Coarse, ElectrodeOverrides::default());
        match (fine, coarse) {
            (Ok(f), Ok(c)) => Outcome::check(f < c, format!("m fine {f:.4}, coarse {c:.4}")),
            (Err(e), _) | (_, Err(e)) => Outcome::check(false, e),
        }
    });
    s.report(11, "thread-count determinism", 300.0, || {
        determinism().unwrap_or_else(|e| Outcome::error(e))
    });

    println!("{} criteria failed", s.failed);
    if strict && s.failed > 0 {
        std::process::exit(1);
    }
}
