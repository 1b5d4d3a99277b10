//! Diagnostics: horizontal profiles, binder ratio and gradient, breakthrough
//! time and dimensionless groups.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSeries {
    pub y: Vec<f64>,
    pub values: Vec<f64>,
    pub time: f64,
}

impl ProfileSeries {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Largest over smallest value.
    pub fn contrast(&self) -> f64 {
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Normalized vertical binder gradient.
    pub m: Option<f64>,
    /// Breakthrough time scaled by the evaporation factor.
    pub t_breakthrough: Option<f64>,
    pub ca: Option<f64>,
    pub pe: Option<f64>,
}

/// Row means of `field`, bottom row first.
pub fn x_average(field: &ScalarField, time: f64) -> ProfileSeries {
    let g = field.grid();
    let (y, values) = (0..g.ny)
        .map(|j| {
            let row = field.row(j);
            (g.cell_center(0, j).1, row.iter().sum::<f64>() / row.len() as f64)
        })
        .unzip();
    ProfileSeries { y, values, time }
}

/// `R(y) = p_end / p_0`, cut above the last row where `p_end > threshold`
/// and skipping rows where `p_0 <= threshold`.
pub fn binder_ratio(p_end: &ProfileSeries, p_0: &ProfileSeries, threshold: f64) -> Result<ProfileSeries> {
    if p_end.y != p_0.y {
        return Err(Error::DimensionMismatch {
            expected: p_0.len(),
            found: p_end.len(),
        });
    }
    let last = p_end.values.iter().rposition(|&v| v > threshold).ok_or(Error::EmptyProfile)?;
    let (y, values): (Vec<f64>, Vec<f64>) = (0..=last)
        .filter(|&j| p_0.values[j] > threshold)
        .map(|j| (p_end.y[j], p_end.values[j] / p_0.values[j]))
        .unzip();
    if y.is_empty() {
        return Err(Error::EmptyProfile);
    }
    Ok(ProfileSeries {
        y,
        values,
        time: p_end.time,
    })
}

/// Least-squares slope of `R` against `y / film_height`.
pub fn gradient_slope(r: &ProfileSeries, film_height: f64) -> Result<f64> {
    let n = r.len();
    if n < 3 {
        return Err(Error::DegenerateFit(format!("{n} points, need at least 3")));
    }
    let yh: Vec<f64> = r.y.iter().map(|y| y / film_height).collect();
    let my = yh.iter().sum::<f64>() / n as f64;
    let mr = r.values.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (y, v) in yh.iter().zip(&r.values) {
        sxy += (y - my) * (v - mr);
        sxx += (y - my) * (y - my);
    }
    if sxx <= f64::EPSILON * my * my * n as f64 || sxx == 0.0 {
        return Err(Error::DegenerateFit("all heights identical".into()));
    }
    Ok(sxy / sxx)
}

/// True once any pore cell of the bottom row (`phi_s < 0.5`) holds air.
pub fn air_at_substrate(phi_tilde: &ScalarField, phi_solid: &ScalarField) -> bool {
    phi_tilde
        .row(0)
        .iter()
        .zip(phi_solid.row(0))
        .any(|(&p, &s)| s < 0.5 && p < 0.5)
}

/// First snapshot time at which air reaches the substrate.
pub fn breakthrough_time<'a>(
    history: impl IntoIterator<Item = (f64, &'a ScalarField)>,
    phi_solid: &ScalarField,
) -> Option<f64> {
    history
        .into_iter()
        .find(|(_, phi)| air_at_substrate(phi, phi_solid))
        .map(|(t, _)| t)
}

/// `Ca = mu kappa l_y / sigma` and `Pe = kappa l_y^2 / D`.
pub fn dimensionless_numbers(mu: f64, kappa: f64, l_y: f64, sigma: f64, diffusivity: f64) -> Result<(f64, f64)> {
    if sigma == 0.0 {
        return Err(Error::DivisionByZero("capillary number with zero surface tension"));
    }
    if diffusivity == 0.0 {
        return Err(Error::DivisionByZero("Peclet number with zero diffusivity"));
    }
    Ok((mu * kappa * l_y / sigma, kappa * l_y * l_y / diffusivity))
}
