//! Discrete differential operators, quadrature and the density/phase maps.
//!
//! Periodic axes wrap; reflecting axes use a mirrored ghost cell (zero normal
//! derivative), so a reflecting wall carries no flux.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::ConfigSpace;

/// Absolute clamp applied before taking `log rho`: `rho -> max(rho, LOG_FLOOR * max rho)`.
pub const LOG_FLOOR: f64 = 1e-300;

/// Relative density floor below which cells are treated as nodes.
pub const RELATIVE_FLOOR: f64 = 1e-12;

/// Central-difference gradient at cell centres.
pub fn gradient(f: &ScalarField) -> VectorField {
    let space = f.space();
    let v = f.values();
    let components = (0..space.dim())
        .map(|axis| {
            let h = space.spacing(axis);
            (0..space.len())
                .map(|k| {
                    let fwd = space.neighbor(k, axis, true).map_or(v[k], |j| v[j]);
                    let bwd = space.neighbor(k, axis, false).map_or(v[k], |j| v[j]);
                    (fwd - bwd) / (2.0 * h)
                })
                .collect()
        })
        .collect();
    VectorField::from_raw(space.clone(), components)
}

/// One-dimensional second difference along `axis`.
pub fn axis_laplacian(f: &ScalarField, axis: usize) -> Vec<f64> {
    let space = f.space();
    let v = f.values();
    let h2 = space.spacing(axis).powi(2);
    (0..space.len())
        .map(|k| {
            let fwd = space.neighbor(k, axis, true).map_or(v[k], |j| v[j]);
            let bwd = space.neighbor(k, axis, false).map_or(v[k], |j| v[j]);
            (fwd - 2.0 * v[k] + bwd) / h2
        })
        .collect()
}

/// Standard `2·dim + 1`-point Laplacian.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let space = f.space();
    let mut out = vec![0.0; space.len()];
    for axis in 0..space.dim() {
        for (o, d) in out.iter_mut().zip(axis_laplacian(f, axis)) {
            *o += d;
        }
    }
    ScalarField::from_raw(space.clone(), out)
}

/// Forward difference `(f[j + e_a] - f[j]) / h_a` on every link. Wall links on
/// reflecting grids are zero.
pub fn forward_difference(f: &ScalarField) -> VectorField {
    let space = f.space();
    let v = f.values();
    let components = (0..space.dim())
        .map(|axis| {
            let h = space.spacing(axis);
            (0..space.len())
                .map(|k| space.neighbor(k, axis, true).map_or(0.0, |j| (v[j] - v[k]) / h))
                .collect()
        })
        .collect();
    VectorField::from_raw(space.clone(), components)
}

/// Midpoint-rule integral of raw cell values.
pub fn integrate(space: &ConfigSpace, values: &[f64]) -> f64 {
    values.iter().sum::<f64>() * space.cell_volume()
}

/// Rescale a non-negative field to unit discrete integral.
pub fn normalize_density(rho: &ScalarField) -> Result<ScalarField> {
    if let Some(v) = rho.values().iter().find(|v| **v < 0.0) {
        return Err(Error::DegenerateDensity(format!("negative value {v}")));
    }
    let mass = rho.integral();
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::DegenerateDensity(format!("total mass {mass}")));
    }
    let out = rho.map(|v| v / mass);
    // A second pass absorbs the rounding of the first division.
    let again = out.integral();
    Ok(out.map(|v| v / again))
}

/// `log rho` with the floor clamp `max(rho, 1e-300 · max rho)`.
pub fn clamped_log(rho: &ScalarField) -> ScalarField {
    let floor = LOG_FLOOR * rho.max().max(f64::MIN_POSITIVE);
    rho.map(|v| v.max(floor).ln())
}

/// `sqrt(rho)` under the same clamp as [`clamped_log`].
pub fn clamped_sqrt(rho: &ScalarField) -> ScalarField {
    let floor = LOG_FLOOR * rho.max().max(f64::MIN_POSITIVE);
    rho.map(|v| v.max(floor).sqrt())
}

/// Entropy field `S = phi + log rho^{1/2}`.
pub fn entropy_field(rho: &ScalarField, phi: &ScalarField) -> Result<ScalarField> {
    clamped_log(rho).zip_map(phi, |l, p| p + 0.5 * l)
}

/// Phase `phi = S - log rho^{1/2}`.
pub fn phase_field(rho: &ScalarField, entropy: &ScalarField) -> Result<ScalarField> {
    clamped_log(rho).zip_map(entropy, |l, s| s - 0.5 * l)
}
