//! Initial states, potentials and closed-form references.

use crate::calculus::{axis_laplacian, normalize_density};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::ConfigSpace;
use crate::manifold::ManifoldState;
use crate::params::PhysicalParams;

fn check_len(space: &ConfigSpace, v: &[f64]) -> Result<()> {
    if v.len() == space.dim() {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            expected: space.dim(),
            got: v.len(),
        })
    }
}

/// Normalized product Gaussian with per-axis `variance`; minimum-image distances
/// on periodic grids.
pub fn gaussian_density(space: &ConfigSpace, center: &[f64], variance: &[f64]) -> Result<ScalarField> {
    check_len(space, center)?;
    check_len(space, variance)?;
    if variance.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidParams {
            field: "variance",
            reason: "must be positive".into(),
        });
    }
    let rho = ScalarField::from_fn(space, |x| {
        let e: f64 = (0..x.len())
            .map(|a| space.displacement(a, center[a], x[a]).powi(2) / (2.0 * variance[a]))
            .sum();
        (-e).exp()
    });
    normalize_density(&rho)
}

/// Gaussian packet with phase `phi = Σ_a p_a (x_a - c_a) / eta`.
pub fn gaussian_packet(
    space: &ConfigSpace,
    center: &[f64],
    variance: &[f64],
    momentum: &[f64],
    eta: f64,
) -> Result<ManifoldState> {
    check_len(space, momentum)?;
    let rho = gaussian_density(space, center, variance)?;
    let phi = ScalarField::from_fn(space, |x| {
        (0..x.len()).map(|a| momentum[a] * (x[a] - center[a])).sum::<f64>() / eta
    });
    ManifoldState::new(rho, phi, 0.0)
}

/// Uniform density with `phi = Σ_a k_a (x_a - lower_a)`.
pub fn plane_wave(space: &ConfigSpace, wavenumber: &[f64]) -> Result<ManifoldState> {
    check_len(space, wavenumber)?;
    let phi = ScalarField::from_fn(space, |x| {
        (0..x.len()).map(|a| wavenumber[a] * (x[a] - space.lower()[a])).sum()
    });
    ManifoldState::normalized(ScalarField::constant(space, 1.0), phi, 0.0)
}

pub fn uniform_state(space: &ConfigSpace) -> Result<ManifoldState> {
    ManifoldState::normalized(ScalarField::constant(space, 1.0), ScalarField::zeros(space), 0.0)
}

/// `V = Σ_a m_a omega^2 (x_a - c_a)^2 / 2`.
pub fn harmonic_potential(space: &ConfigSpace, params: &PhysicalParams, omega: f64, center: &[f64]) -> ScalarField {
    ScalarField::from_fn(space, |x| {
        (0..x.len())
            .map(|a| 0.5 * params.axis_mass(a) * omega * omega * (x[a] - center[a]).powi(2))
            .sum()
    })
}

/// `V = Σ_a slope_a x_a`.
pub fn linear_potential(space: &ConfigSpace, slope: &[f64]) -> ScalarField {
    ScalarField::from_fn(space, |x| x.iter().zip(slope).map(|(x, s)| x * s).sum())
}

/// Free-packet variance `s0^2 (1 + (eta t / 2 m s0^2)^2)`.
pub fn free_packet_variance(s0_sq: f64, eta: f64, mass: f64, t: f64) -> f64 {
    s0_sq * (1.0 + (eta * t / (2.0 * mass * s0_sq)).powi(2))
}

/// Density of a free packet released from a real Gaussian of variance `s0_sq`
/// at `center` with momentum `p` (1D, grid-normalized).
pub fn free_packet_density(
    space: &ConfigSpace,
    center: f64,
    s0_sq: f64,
    momentum: f64,
    params: &PhysicalParams,
    t: f64,
) -> Result<ScalarField> {
    let m = params.axis_mass(0);
    gaussian_density(
        space,
        &[center + momentum * t / m],
        &[free_packet_variance(s0_sq, params.eta(), m, t)],
    )
}

/// Coherent-state density in a harmonic well: variance `eta / 2 m omega`,
/// centre `x0 cos(omega t)` (1D, released at rest).
pub fn coherent_density(
    space: &ConfigSpace,
    x0: f64,
    omega: f64,
    params: &PhysicalParams,
    t: f64,
) -> Result<ScalarField> {
    let m = params.axis_mass(0);
    gaussian_density(space, &[x0 * (omega * t).cos()], &[params.eta() / (2.0 * m * omega)])
}

/// Initial coherent state released at rest from `x0`.
pub fn coherent_state(space: &ConfigSpace, params: &PhysicalParams, omega: f64, x0: f64) -> Result<ManifoldState> {
    let m = params.axis_mass(0);
    gaussian_packet(space, &[x0], &[params.eta() / (2.0 * m * omega)], &[0.0], params.eta())
}

fn apply_hamiltonian(space: &ConfigSpace, params: &PhysicalParams, v: &[f64], shift: f64, x: &[f64]) -> Vec<f64> {
    let eta = params.eta();
    let f = ScalarField::from_raw(space.clone(), x.to_vec());
    let mut out: Vec<f64> = x.iter().zip(v).map(|(x, v)| (v - shift) * x).collect();
    for axis in 0..space.dim() {
        let c = eta * eta / (2.0 * params.axis_mass(axis));
        for (o, l) in out.iter_mut().zip(axis_laplacian(&f, axis)) {
            *o -= c * l;
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients for a symmetric positive-definite operator.
fn conjugate_gradient(op: impl Fn(&[f64]) -> Vec<f64>, b: &[f64], x0: &[f64], tol: f64) -> Vec<f64> {
    let mut x = x0.to_vec();
    let ax = op(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = tol * tol * dot(b, b);
    for _ in 0..10 * b.len() {
        if rr <= target {
            break;
        }
        let ap = op(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

/// Ground state of the grid Hamiltonian `-Σ_a (eta^2/2m_a) laplacian_a + V`
/// (the operator whose Madelung form is the coupled flow) by inverse
/// iteration. Returns the state (`phi = 0`) and its eigenvalue.
pub fn discrete_ground_state(
    space: &ConfigSpace,
    params: &PhysicalParams,
    v: &ScalarField,
) -> Result<(ManifoldState, f64)> {
    space.require_same(v.space())?;
    let eta = params.eta();
    let kinetic_scale: f64 = (0..space.dim())
        .map(|a| eta * eta / (2.0 * params.axis_mass(a) * space.extent(a).powi(2)))
        .sum();
    let shift = v.min() - kinetic_scale;
    let vv = v.values();
    let op = |x: &[f64]| apply_hamiltonian(space, params, vv, shift, x);
    let mut x = vec![1.0; space.len()];
    let norm = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|e| *e /= norm);
    let mut energy = f64::INFINITY;
    for _ in 0..500 {
        let y = conjugate_gradient(op, &x, &x, 1e-14);
        let norm = dot(&y, &y).sqrt();
        x = y.into_iter().map(|e| e / norm).collect();
        let hx = op(&x);
        let e = dot(&x, &hx) + shift;
        let residual: f64 = hx
            .iter()
            .zip(&x)
            .map(|(h, x)| (h - (e - shift) * x).powi(2))
            .sum::<f64>()
            .sqrt();
        let converged = (e - energy).abs() <= 1e-15 * e.abs().max(kinetic_scale) && residual < 1e-12 * (e - shift);
        energy = e;
        if converged {
            break;
        }
    }
    let sign = if x.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let rho = ScalarField::from_raw(space.clone(), x.iter().map(|e| (sign * e).powi(2)).collect());
    Ok((ManifoldState::normalized(rho, ScalarField::zeros(space), 0.0)?, energy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;

    #[test]
    fn gaussian_density_moments() {
        let space = ConfigSpace::line(20.0, 400, Boundary::Periodic).unwrap();
        let rho = gaussian_density(&space, &[1.0], &[0.8]).unwrap();
        assert!((rho.integral() - 1.0).abs() < 1e-14);
        assert!((crate::metrics::center_of_mass(&rho)[0] - 1.0).abs() < 1e-10);
        assert!((crate::metrics::variance(&rho)[0] - 0.8).abs() < 1e-8);
        assert!(gaussian_density(&space, &[0.0], &[-1.0]).is_err());
        assert!(gaussian_density(&space, &[0.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn free_packet_variance_doubles_at_spreading_time() {
        assert!((free_packet_variance(1.0, 1.0, 1.0, 2.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ground_state_of_periodic_free_box_is_uniform() {
        let space = ConfigSpace::line(10.0, 64, Boundary::Periodic).unwrap();
        let p = PhysicalParams::simple(&space, 1.0, 1.0, 1.0).unwrap();
        let (st, e) = discrete_ground_state(&space, &p, &ScalarField::zeros(&space)).unwrap();
        assert!(e.abs() < 1e-12);
        for r in st.rho().values() {
            assert!((r - 0.1).abs() < 1e-10);
        }
    }

    #[test]
    fn oscillator_ground_energy_in_two_dimensions() {
        let space = ConfigSpace::new(vec![12.0, 12.0], vec![96, 96], Boundary::Periodic, vec![1.0, 1.0]).unwrap();
        let p = PhysicalParams::simple(&space, 1.0, 1.0, 1.0).unwrap();
        let v = harmonic_potential(&space, &p, 1.0, &[0.0, 0.0]);
        let (_, e) = discrete_ground_state(&space, &p, &v).unwrap();
        assert!((e - 1.0).abs() < 2e-3, "{e}");
    }
}
