//! Snapshot files: one CSV per field with `#` header rows, plus an optional
//! legacy VTK writer.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

/// Writes `x,y,value` rows, preceded by header rows naming the field, the
/// time and the grid.
pub fn write_field_csv(path: &Path, name: &str, time: f64, field: &ScalarField) -> Result<()> {
    let g = field.grid();
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# field={name}")?;
    writeln!(w, "# time={time:e}")?;
    writeln!(w, "# nx={} ny={} dx={:e} dy={:e} x0={:e} y0={:e}", g.nx, g.ny, g.dx, g.dy, g.x0, g.y0)?;
    writeln!(w, "x,y,value")?;
    for j in 0..g.ny {
        for (i, v) in field.row(j).iter().enumerate() {
            let (x, y) = g.cell_center(i, j);
            writeln!(w, "{x:e},{y:e},{v:e}")?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub name: String,
    pub time: f64,
    pub field: ScalarField,
}

/// Reads a file written by [`write_field_csv`].
pub fn read_field_csv(path: &Path) -> Result<FieldSnapshot> {
    let bad = |reason: String| Error::MalformedFile {
        path: path.display().to_string(),
        reason,
    };
    let reader = BufReader::new(fs::File::open(path)?);
    let mut name = None;
    let mut time = None;
    let mut dims: Option<(usize, usize, f64, f64, f64, f64)> = None;
    let mut values = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if let Some(h) = line.strip_prefix("# ") {
            for kv in h.split_whitespace() {
                let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("bad header `{h}`")))?;
                let num = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("bad number `{v}`")));
                match k {
                    "field" => name = Some(v.to_string()),
                    "time" => time = Some(num(v)?),
                    "nx" | "ny" | "dx" | "dy" | "x0" | "y0" => {
                        let d = dims.get_or_insert((0, 0, 0.0, 0.0, 0.0, 0.0));
                        match k {
                            "nx" => d.0 = num(v)? as usize,
                            "ny" => d.1 = num(v)? as usize,
                            "dx" => d.2 = num(v)?,
                            "dy" => d.3 = num(v)?,
                            "x0" => d.4 = num(v)?,
                            _ => d.5 = num(v)?,
                        }
                    }
                    _ => {}
                }
            }
            continue;
        }
        if line == "x,y,value" || line.is_empty() {
            continue;
        }
        let v = line
            .rsplit(',')
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| bad(format!("bad row `{line}`")))?;
        values.push(v);
    }
    let (nx, ny, dx, dy, x0, y0) = dims.ok_or_else(|| bad("missing grid header".into()))?;
    let mut grid = Grid::new(nx, ny, dx, dy)?;
    grid.x0 = x0;
    grid.y0 = y0;
    let field = ScalarField::from_vec(grid, values)?;
    Ok(FieldSnapshot {
        name: name.ok_or_else(|| bad("missing field header".into()))?,
        time: time.ok_or_else(|| bad("missing time header".into()))?,
        field,
    })
}

/// Legacy VTK structured-points file with one scalar array per field.
pub fn write_vtk(path: &Path, time: f64, fields: &[(&str, &ScalarField)]) -> Result<()> {
    let Some((_, first)) = fields.first() else {
        return Err(Error::InvalidParameter("no fields to write".into()));
    };
    let g = first.grid();
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "poredry snapshot t={time:e}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} 1", g.nx, g.ny)?;
    writeln!(w, "ORIGIN {:e} {:e} 0", g.x0 + 0.5 * g.dx, g.y0 + 0.5 * g.dy)?;
    writeln!(w, "SPACING {:e} {:e} 1", g.dx, g.dy)?;
    writeln!(w, "POINT_DATA {}", g.len())?;
    for (name, f) in fields {
        if f.grid() != g {
            return Err(Error::InvalidGrid(format!("field {name} is on a different grid")));
        }
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in f.values() {
            writeln!(w, "{v:e}")?;
        }
    }
    w.flush()?;
    Ok(())
}
