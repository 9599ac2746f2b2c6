//! Coupled evolution of the density `rho` and the phase `phi`.
//!
//! With `R = sqrt(rho)` and the link angle `theta_f = h_a g_f`,
//! `g_f = D⁺phi - beta A_f`, the grid energy is
//!
//! ```text
//! E_h = Σ_links dV (eta^2 / 2m_a h_a^2) R_k R_j 2(1 - cos theta_f)
//!     + Σ_links dV (mu_a eta^2 / 2 m_a^2) (D⁺R)^2
//!     + Σ_cells dV rho V
//! ```
//!
//! which tends to `∫ rho [(eta^2/2m) g^2 + (mu eta^2/8m^2)(∂ log rho)^2 + V]`.
//! The evolution is the Hamiltonian flow of `E_h`:
//! `eta dV rho' = dE_h/dphi`, `eta dV phi' = -dE_h/drho`, i.e. a flux-form
//! continuity equation and the phase equation with the quantum potential
//! `laplacian(R) / R`. `E_h` is conserved exactly in continuous time, and for
//! `mu = m` the flow is the Madelung form of the link-phase grid Schrodinger
//! equation.

use crate::calculus::{axis_laplacian, clamped_log, normalize_density};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorPotential};
use crate::grid::ConfigSpace;
use crate::params::PhysicalParams;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldState {
    rho: ScalarField,
    phi: ScalarField,
    time: f64,
}

impl ManifoldState {
    /// `rho` must integrate to one within `1e-10`.
    pub fn new(rho: ScalarField, phi: ScalarField, time: f64) -> Result<Self> {
        rho.space().require_same(phi.space())?;
        if let Some(i) = rho.values().iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::NonFinite { index: i });
        }
        if let Some(i) = phi.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        let mass = rho.integral();
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::DegenerateDensity(format!("density integrates to {mass}")));
        }
        Ok(Self { rho, phi, time })
    }

    /// Normalize `rho` first.
    pub fn normalized(rho: ScalarField, phi: ScalarField, time: f64) -> Result<Self> {
        Self::new(normalize_density(&rho)?, phi, time)
    }

    pub fn rho(&self) -> &ScalarField {
        &self.rho
    }

    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn space(&self) -> &ConfigSpace {
        self.rho.space()
    }

    /// Entropy field `S = phi + log rho^{1/2}`.
    pub fn entropy(&self) -> ScalarField {
        let l = clamped_log(&self.rho);
        ScalarField::from_raw(
            self.space().clone(),
            l.values().iter().zip(self.phi.values()).map(|(l, p)| p + 0.5 * l).collect(),
        )
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub current_term: f64,
    pub osmotic_term: f64,
    pub potential_term: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub const CSV_HEADER: &'static str = "t,current,osmotic,potential,total";

    pub fn csv_row(&self, t: f64) -> String {
        format!(
            "{t},{},{},{},{}",
            self.current_term, self.osmotic_term, self.potential_term, self.total
        )
    }
}

fn check_inputs(
    state: &ManifoldState,
    params: &PhysicalParams,
    v: &ScalarField,
    a: Option<&VectorPotential>,
) -> Result<()> {
    let space = state.space();
    space.require_same(v.space())?;
    if let Some(a) = a {
        space.require_same(a.space())?;
    }
    params.validate(space)
}

/// Midpoint-rule energy of the link discretization.
pub fn energy(
    state: &ManifoldState,
    params: &PhysicalParams,
    v: &ScalarField,
    potential: Option<&VectorPotential>,
) -> Result<EnergyBreakdown> {
    check_inputs(state, params, v, potential)?;
    Ok(energy_unchecked(state.space(), state.rho.values(), state.phi(), params, v, potential))
}

fn energy_unchecked(
    space: &ConfigSpace,
    rho: &[f64],
    phi: &ScalarField,
    params: &PhysicalParams,
    v: &ScalarField,
    potential: Option<&VectorPotential>,
) -> EnergyBreakdown {
    let dv = space.cell_volume();
    let eta = params.eta();
    let theta = link_angles(phi, params.beta(), potential);
    let sq = amplitudes(rho);
    let (mut current, mut osmotic) = (0.0, 0.0);
    for (axis, ta) in theta.iter().enumerate() {
        let m = params.axis_mass(axis);
        let mu = params.axis_osmotic_mass(axis);
        let h2 = space.spacing(axis).powi(2);
        let (mut c, mut o) = (0.0, 0.0);
        for k in 0..space.len() {
            if let Some(j) = space.neighbor(k, axis, true) {
                c += sq[k] * sq[j] * 2.0 * (1.0 - ta[k].cos());
                o += (sq[j] - sq[k]).powi(2);
            }
        }
        current += c * eta * eta / (2.0 * m * h2);
        osmotic += o * mu * eta * eta / (2.0 * m * m * h2);
    }
    let potential_term: f64 = rho.iter().zip(v.values()).map(|(r, v)| r * v).sum::<f64>() * dv;
    let (current, osmotic) = (current * dv, osmotic * dv);
    EnergyBreakdown {
        current_term: current,
        osmotic_term: osmotic,
        potential_term,
        total: current + osmotic + potential_term,
    }
}

fn amplitudes(rho: &[f64]) -> Vec<f64> {
    rho.iter().map(|r| r.max(0.0).sqrt()).collect()
}

/// Relative amplitude below which a cell counts as a node.
pub const NODE_AMPLITUDE: f64 = 1e-100;

/// `NODE_AMPLITUDE · max R`. Ratios `R_j / R_k` are taken against
/// `max(R_k, floor)`. The floor only guards exact zeros: a larger one freezes
/// tail phases at `-V/eta`, and mass later moving into the tail inherits them.
pub fn amplitude_floor(sq: &[f64]) -> f64 {
    let max = sq.iter().fold(0.0f64, |a, b| a.max(*b));
    NODE_AMPLITUDE * max.max(f64::MIN_POSITIVE)
}

/// Link angles `theta_f = h_a g_f`; zero on reflecting-wall links.
pub fn link_angles(phi: &ScalarField, beta: f64, potential: Option<&VectorPotential>) -> Vec<Vec<f64>> {
    let space = phi.space();
    let v = phi.values();
    (0..space.dim())
        .map(|axis| {
            let h = space.spacing(axis);
            (0..space.len())
                .map(|k| match space.neighbor(k, axis, true) {
                    Some(j) => v[j] - v[k] - beta * h * potential.map_or(0.0, |a| a.link(axis, k)),
                    None => 0.0,
                })
                .collect()
        })
        .collect()
}

/// `Σ_a (mu_a eta^2 / 2 m_a^2) laplacian_a(sqrt rho) / sqrt rho`, with the
/// denominator clamped at [`amplitude_floor`].
pub fn quantum_potential(rho: &ScalarField, params: &PhysicalParams) -> ScalarField {
    let space = rho.space();
    let sq = ScalarField::from_raw(space.clone(), amplitudes(rho.values()));
    let floor = amplitude_floor(sq.values());
    let eta = params.eta();
    let mut out = vec![0.0; space.len()];
    for axis in 0..space.dim() {
        let m = params.axis_mass(axis);
        let c = params.axis_osmotic_mass(axis) * eta * eta / (2.0 * m * m);
        if c == 0.0 {
            continue;
        }
        for (k, l) in axis_laplacian(&sq, axis).into_iter().enumerate() {
            out[k] += c * l / sq[k].max(floor);
        }
    }
    ScalarField::from_raw(space.clone(), out)
}

/// `-dE_current/drho / dV`: `Σ_a (eta^2 / 2m_a h_a^2)` times the amplitude-weighted
/// mean of `2(1 - cos theta)` over the two links adjacent along each axis.
fn kinetic_density(space: &ConfigSpace, sq: &[f64], theta: &[Vec<f64>], params: &PhysicalParams) -> Vec<f64> {
    let eta = params.eta();
    let floor = amplitude_floor(sq);
    let mut out = vec![0.0; space.len()];
    for (axis, ta) in theta.iter().enumerate() {
        let c = eta * eta / (2.0 * params.axis_mass(axis) * space.spacing(axis).powi(2));
        for (k, o) in out.iter_mut().enumerate() {
            let fwd = space
                .neighbor(k, axis, true)
                .map_or(0.0, |j| sq[j] * 2.0 * (1.0 - ta[k].cos()));
            let back = space
                .neighbor(k, axis, false)
                .map_or(0.0, |p| sq[p] * 2.0 * (1.0 - ta[p].cos()));
            *o += c * (fwd + back) / (2.0 * sq[k].max(floor));
        }
    }
    out
}

fn phase_rate_with(
    space: &ConfigSpace,
    sq: &[f64],
    phi: &[f64],
    q: &[f64],
    params: &PhysicalParams,
    v: &[f64],
    potential: Option<&VectorPotential>,
) -> Vec<f64> {
    let phi = ScalarField::from_raw(space.clone(), phi.to_vec());
    let theta = link_angles(&phi, params.beta(), potential);
    let eta = params.eta();
    kinetic_density(space, sq, &theta, params)
        .iter()
        .zip(v)
        .zip(q)
        .map(|((k, v), q)| -(k + v - q) / eta)
        .collect()
}

/// `phi'` from the phase equation at fixed `rho`.
pub fn phase_rate(
    state: &ManifoldState,
    params: &PhysicalParams,
    v: &ScalarField,
    potential: Option<&VectorPotential>,
) -> Result<ScalarField> {
    check_inputs(state, params, v, potential)?;
    let q = quantum_potential(&state.rho, params);
    let sq = amplitudes(state.rho.values());
    Ok(ScalarField::from_raw(
        state.space().clone(),
        phase_rate_with(state.space(), &sq, state.phi.values(), q.values(), params, v.values(), potential),
    ))
}

/// Probability current through every link, `(eta / m_a h_a) R_k R_j sin theta_f`.
pub fn link_currents(
    space: &ConfigSpace,
    rho: &[f64],
    theta: &[Vec<f64>],
    params: &PhysicalParams,
) -> Vec<Vec<f64>> {
    let sq = amplitudes(rho);
    theta
        .iter()
        .enumerate()
        .map(|(axis, ta)| {
            let c = params.diffusion(axis) / space.spacing(axis);
            (0..space.len())
                .map(|k| space.neighbor(k, axis, true).map_or(0.0, |j| c * sq[k] * sq[j] * ta[k].sin()))
                .collect()
        })
        .collect()
}

fn rho_rate(space: &ConfigSpace, rho: &[f64], theta: &[Vec<f64>], params: &PhysicalParams) -> Vec<f64> {
    let mut out = vec![0.0; space.len()];
    for (axis, fa) in link_currents(space, rho, theta, params).iter().enumerate() {
        let h = space.spacing(axis);
        for k in 0..space.len() {
            if let Some(j) = space.neighbor(k, axis, true) {
                out[k] -= fa[k] / h;
                out[j] += fa[k] / h;
            }
        }
    }
    out
}

fn rk4<F: Fn(&[f64]) -> Vec<f64>>(y: &[f64], dt: f64, f: F) -> Vec<f64> {
    let k1 = f(y);
    let y2: Vec<f64> = y.iter().zip(&k1).map(|(y, k)| y + 0.5 * dt * k).collect();
    let k2 = f(&y2);
    let y3: Vec<f64> = y.iter().zip(&k2).map(|(y, k)| y + 0.5 * dt * k).collect();
    let k3 = f(&y3);
    let y4: Vec<f64> = y.iter().zip(&k3).map(|(y, k)| y + dt * k).collect();
    let k4 = f(&y4);
    (0..y.len())
        .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Advance `phi` by `dt` at fixed `rho` (classical RK4).
pub fn phase_step(
    state: &ManifoldState,
    params: &PhysicalParams,
    v: &ScalarField,
    dt: f64,
    potential: Option<&VectorPotential>,
) -> Result<ScalarField> {
    check_inputs(state, params, v, potential)?;
    check_dt(dt)?;
    let space = state.space();
    let q = quantum_potential(&state.rho, params);
    let sq = amplitudes(state.rho.values());
    let out = rk4(state.phi.values(), dt, |phi| {
        phase_rate_with(space, &sq, phi, q.values(), params, v.values(), potential)
    });
    ScalarField::new(space.clone(), out)
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTimeStep(dt))
    }
}

/// Largest stable `dt` for [`coupled_step`].
///
/// Combines the dispersive frequency `Σ_a (eta/2m_a)(mu_a/m_a)^{1/2} 4/h_a^2` of
/// the linearized flow (the split step is stable for `omega dt < 2`) with the
/// advective rate `Σ_a |v_a| / h_a` over links away from nodes (RK4
/// imaginary-axis bound `2 sqrt 2`).
pub fn coupled_dt_max(
    state: &ManifoldState,
    params: &PhysicalParams,
    potential: Option<&VectorPotential>,
) -> f64 {
    let space = state.space();
    let theta = link_angles(&state.phi, params.beta(), potential);
    let sq = amplitudes(state.rho.values());
    let floor = amplitude_floor(&sq);
    let eta = params.eta();
    let (mut disp, mut adv) = (0.0, 0.0);
    for (axis, ta) in theta.iter().enumerate() {
        let m = params.axis_mass(axis);
        let mu = params.axis_osmotic_mass(axis);
        let h = space.spacing(axis);
        disp += eta / (2.0 * m) * (mu / m).sqrt() * 4.0 / (h * h);
        let smax = (0..space.len())
            .filter_map(|k| space.neighbor(k, axis, true).map(|j| (k, j)))
            .filter(|(k, j)| sq[*k] > floor && sq[*j] > floor)
            .fold(0.0f64, |acc, (k, _)| acc.max(ta[k].sin().abs()));
        adv += smax * eta / (m * h * h);
    }
    let mut dt = f64::INFINITY;
    if disp > 0.0 {
        dt = dt.min(0.95 * 2.0 / disp);
    }
    if adv > 0.0 {
        dt = dt.min(0.95 * 2.0 * std::f64::consts::SQRT_2 / adv);
    }
    dt
}

/// One symmetric split step: `rho` for `dt/2`, `phi` for `dt`, `rho` for `dt/2`.
/// `v` and `potential` are taken as the values at the middle of the step.
pub fn coupled_step(
    state: &ManifoldState,
    params: &PhysicalParams,
    v: &ScalarField,
    dt: f64,
    potential: Option<&VectorPotential>,
) -> Result<ManifoldState> {
    check_inputs(state, params, v, potential)?;
    check_dt(dt)?;
    let dt_max = coupled_dt_max(state, params, potential);
    if dt > dt_max {
        return Err(Error::Unstable { dt, dt_max });
    }
    Ok(split_step(state, params, v, dt, potential))
}

fn split_step(
    state: &ManifoldState,
    params: &PhysicalParams,
    v: &ScalarField,
    dt: f64,
    potential: Option<&VectorPotential>,
) -> ManifoldState {
    let space = state.space();
    let theta = link_angles(&state.phi, params.beta(), potential);
    let rho_half = rk4(state.rho.values(), 0.5 * dt, |r| rho_rate(space, r, &theta, params));
    let q = quantum_potential(&ScalarField::from_raw(space.clone(), rho_half.clone()), params);
    let sq = amplitudes(&rho_half);
    let phi = rk4(state.phi.values(), dt, |p| {
        phase_rate_with(space, &sq, p, q.values(), params, v.values(), potential)
    });
    let phi = ScalarField::from_raw(space.clone(), phi);
    let theta = link_angles(&phi, params.beta(), potential);
    let rho = rk4(&rho_half, 0.5 * dt, |r| rho_rate(space, r, &theta, params));
    let negative: f64 = rho.iter().filter(|r| **r < 0.0).map(|r| -r).sum::<f64>() * space.cell_volume();
    if negative > 0.0 {
        log::debug!("coupled step: negative density mass {negative:.3e} left in place");
    }
    ManifoldState {
        rho: ScalarField::from_raw(space.clone(), rho),
        phi,
        time: state.time + dt,
    }
}

/// Run `steps` coupled steps under static potentials, returning every
/// `stride`-th state (including the initial and the final one).
pub fn coupled_evolve(
    state: &ManifoldState,
    params: &PhysicalParams,
    v: &ScalarField,
    potential: Option<&VectorPotential>,
    dt: f64,
    steps: usize,
    stride: usize,
) -> Result<Vec<ManifoldState>> {
    let stride = stride.max(1);
    let mut out = vec![state.clone()];
    let mut s = state.clone();
    for n in 1..=steps {
        s = coupled_step(&s, params, v, dt, potential)?;
        if n % stride == 0 || n == steps {
            out.push(s.clone());
        }
    }
    Ok(out)
}

/// Energy audit of a trajectory under possibly time-dependent potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRateReport {
    /// `(t, E, dE/dt by central differences, imposed rate)` at interior samples.
    pub rows: Vec<(f64, f64, f64, f64)>,
    /// `max |numeric - imposed| / max(max |imposed|, |E_0| / duration)`.
    pub max_relative_mismatch: f64,
}

/// Imposed rate `∫ rho dV/dt - eta beta Σ_links dV J_f dA_f/dt`, with `J_f` the
/// link current of [`link_currents`] (`rho v` in the continuum).
pub fn imposed_energy_rate(
    state: &ManifoldState,
    params: &PhysicalParams,
    v_dot: &ScalarField,
    potential: Option<&VectorPotential>,
    potential_dot: Option<&VectorPotential>,
) -> Result<f64> {
    let space = state.space();
    space.require_same(v_dot.space())?;
    let dv = space.cell_volume();
    let rho = state.rho.values();
    let mut rate: f64 = rho.iter().zip(v_dot.values()).map(|(r, v)| r * v).sum::<f64>() * dv;
    if let Some(a_dot) = potential_dot {
        space.require_same(a_dot.space())?;
        let theta = link_angles(&state.phi, params.beta(), potential);
        let currents = link_currents(space, rho, &theta, params);
        let em: f64 = currents
            .iter()
            .enumerate()
            .map(|(axis, ja)| ja.iter().enumerate().map(|(k, j)| j * a_dot.link(axis, k)).sum::<f64>())
            .sum();
        rate -= params.eta() * params.beta() * em * dv;
    }
    Ok(rate)
}

/// Compare the numerical `dE/dt` along `trajectory` with the imposed rate.
/// `potentials[k]` are `(V, A)` at the time of `trajectory[k]`.
pub fn energy_rate_audit(
    trajectory: &[ManifoldState],
    params: &PhysicalParams,
    potentials: &[(ScalarField, Option<VectorPotential>)],
) -> Result<EnergyRateReport> {
    if trajectory.len() != potentials.len() || trajectory.len() < 3 {
        return Err(Error::LengthMismatch {
            expected: trajectory.len().max(3),
            got: potentials.len(),
        });
    }
    let energies = trajectory
        .iter()
        .zip(potentials)
        .map(|(s, (v, a))| energy(s, params, v, a.as_ref()).map(|e| e.total))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for k in 1..trajectory.len() - 1 {
        let span = trajectory[k + 1].time - trajectory[k - 1].time;
        let numeric = (energies[k + 1] - energies[k - 1]) / span;
        let (v0, a0) = &potentials[k - 1];
        let (v1, a1) = &potentials[k + 1];
        let v_dot = v1.zip_map(v0, |a, b| (a - b) / span)?;
        let a_dot = match (a0, a1) {
            (Some(a0), Some(a1)) => Some(VectorPotential::from_links(
                a1.links().zip_map(a0.links(), |x, y| (x - y) / span)?,
            )),
            _ => None,
        };
        let imposed =
            imposed_energy_rate(&trajectory[k], params, &v_dot, potentials[k].1.as_ref(), a_dot.as_ref())?;
        rows.push((trajectory[k].time, energies[k], numeric, imposed));
    }
    let duration = trajectory.last().unwrap().time - trajectory[0].time;
    let scale = rows
        .iter()
        .map(|r| r.3.abs())
        .fold(energies[0].abs() / duration, f64::max);
    let max_relative_mismatch = rows
        .iter()
        .map(|r| (r.2 - r.3).abs() / scale)
        .fold(0.0, f64::max);
    Ok(EnergyRateReport {
        rows,
        max_relative_mismatch,
    })
}

/// Residual of the classical Hamilton-Jacobi equation for `S_HJ = eta phi`,
/// `eta phi' + (eta^2/2m) g^2 + V` (kinetic term as in the grid energy), evaluated at the midpoint of two
/// consecutive states with `phi'` by finite differences. Returns the
/// `rho`-weighted L2 norm.
pub fn hamilton_jacobi_residual(
    before: &ManifoldState,
    after: &ManifoldState,
    params: &PhysicalParams,
    v: &ScalarField,
    potential: Option<&VectorPotential>,
) -> Result<f64> {
    check_inputs(before, params, v, potential)?;
    before.space().require_same(after.space())?;
    let dt = after.time - before.time;
    check_dt(dt)?;
    let space = before.space();
    let mid = |a: &ScalarField, b: &ScalarField| {
        ScalarField::from_raw(
            space.clone(),
            a.values().iter().zip(b.values()).map(|(x, y)| 0.5 * (x + y)).collect(),
        )
    };
    let rho = mid(&before.rho, &after.rho);
    let phi = mid(&before.phi, &after.phi);
    let theta = link_angles(&phi, params.beta(), potential);
    let kin = kinetic_density(space, &amplitudes(rho.values()), &theta, params);
    let eta = params.eta();
    let sum: f64 = (0..space.len())
        .map(|k| {
            let r = eta * (after.phi[k] - before.phi[k]) / dt + kin[k] + v[k];
            rho[k].max(0.0) * r * r
        })
        .sum();
    Ok((sum * space.cell_volume()).sqrt())
}

/// `rho`-weighted L2 norm of the quantum-potential term.
pub fn quantum_potential_norm(rho: &ScalarField, params: &PhysicalParams) -> f64 {
    let q = quantum_potential(rho, params);
    (rho.values().iter().zip(q.values()).map(|(r, q)| r * q * q).sum::<f64>() * rho.space().cell_volume())
        .sqrt()
}

/// Change units by `kappa`: `phi' = kappa phi` and the parameter map of
/// [`PhysicalParams::regraduate`].
pub fn regraduate(
    state: &ManifoldState,
    params: &PhysicalParams,
    kappa: f64,
) -> Result<(ManifoldState, PhysicalParams)> {
    let p = params.regraduate(kappa)?;
    Ok((
        ManifoldState {
            rho: state.rho.clone(),
            phi: state.phi.map(|v| kappa * v),
            time: state.time,
        },
        p,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use crate::states;
    use std::f64::consts::PI;

    fn line(n: usize, l: f64) -> ConfigSpace {
        ConfigSpace::line(l, n, Boundary::Periodic).unwrap()
    }

    fn params(space: &ConfigSpace, mu_over_m: f64) -> PhysicalParams {
        PhysicalParams::simple(space, 1.0, mu_over_m, 1.0).unwrap()
    }

    #[test]
    fn gaussian_osmotic_energy() {
        let space = line(1024, 40.0);
        let s2 = 1.5;
        let st = states::gaussian_packet(&space, &[0.0], &[s2], &[0.0], 1.0).unwrap();
        let p = params(&space, 2.0);
        let e = energy(&st, &p, &ScalarField::zeros(&space), None).unwrap();
        let want = 2.0 / (8.0 * s2);
        assert!(((e.total - want) / want).abs() < 1e-4, "{e:?}");
        assert_eq!(e.current_term, 0.0);
        assert_eq!(e.total, e.current_term + e.osmotic_term + e.potential_term);
    }

    #[test]
    fn plane_wave_current_energy_and_dispersion() {
        let space = line(128, 10.0);
        let k = 2.0 * PI * 3.0 / 10.0;
        let st = states::plane_wave(&space, &[k]).unwrap();
        let p = params(&space, 1.0);
        let v = ScalarField::zeros(&space);
        let e = energy(&st, &p, &v, None).unwrap();
        let h = space.spacing(0);
        // grid dispersion 2(1 - cos kh)/h^2 = k^2 (1 + O(k^2 h^2))
        let grid_k2 = 2.0 * (1.0 - (k * h).cos()) / (h * h);
        assert!((e.current_term - grid_k2 / 2.0).abs() < 1e-12, "{}", e.current_term);
        assert!(((e.current_term - k * k / 2.0) / (k * k / 2.0)).abs() < (k * h).powi(2) / 12.0 + 1e-9);
        assert!(e.osmotic_term.abs() < 1e-20);
        let rate = phase_rate(&st, &p, &v, None).unwrap();
        for r in rate.values() {
            assert!((r + grid_k2 / 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn uniform_state_is_frozen() {
        let space = line(64, 8.0);
        let st = ManifoldState::normalized(ScalarField::constant(&space, 1.0), ScalarField::constant(&space, 0.3), 0.0)
            .unwrap();
        let p = params(&space, 1.0);
        let v = ScalarField::zeros(&space);
        let rate = phase_rate(&st, &p, &v, None).unwrap();
        assert!(rate.values().iter().all(|r| *r == 0.0));
        let next = coupled_step(&st, &p, &v, 1e-3, None).unwrap();
        assert_eq!(next.rho(), st.rho());
    }

    #[test]
    fn ground_state_phase_rotates_uniformly() {
        let space = line(512, 16.0);
        let p = params(&space, 1.0);
        let v = states::harmonic_potential(&space, &p, 1.0, &[0.0]);
        let (st, e0) = states::discrete_ground_state(&space, &p, &v).unwrap();
        assert!(((e0 - 0.5) / 0.5).abs() < 1e-4, "{e0}");
        let e = energy(&st, &p, &v, None).unwrap();
        assert!(((e.total - e0) / e0).abs() < 1e-10);
        let rate = phase_rate(&st, &p, &v, None).unwrap();
        for (k, r) in rate.values().iter().enumerate() {
            if st.rho()[k] > 1e-12 * st.rho().max() {
                assert!((r + e0).abs() < 1e-6, "{k} {r}");
            }
        }
    }

    #[test]
    fn coupled_step_conserves_mass_and_energy() {
        let space = line(256, 24.0);
        let st = states::gaussian_packet(&space, &[-1.0], &[1.0], &[0.0], 1.0).unwrap();
        let p = params(&space, 1.0);
        let v = states::harmonic_potential(&space, &p, 0.5, &[0.0]);
        let dt = 0.3 * coupled_dt_max(&st, &p, None);
        let traj = coupled_evolve(&st, &p, &v, None, dt, 400, 400).unwrap();
        let last = traj.last().unwrap();
        assert!((last.rho().integral() - 1.0).abs() < 1e-12);
        let e0 = energy(&st, &p, &v, None).unwrap().total;
        let e1 = energy(last, &p, &v, None).unwrap().total;
        assert!(((e1 - e0) / e0).abs() < 1e-6, "{e0} {e1}");
    }

    #[test]
    fn unstable_dt_is_rejected() {
        let space = line(128, 16.0);
        let st = states::gaussian_packet(&space, &[0.0], &[1.0], &[0.0], 1.0).unwrap();
        let p = params(&space, 1.0);
        let v = ScalarField::zeros(&space);
        let dt_max = coupled_dt_max(&st, &p, None);
        match coupled_step(&st, &p, &v, 2.0 * dt_max, None) {
            Err(Error::Unstable { dt_max: m, .. }) => assert_eq!(m, dt_max),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn regraduation_identity_and_masses() {
        let space = line(32, 4.0);
        let st = states::gaussian_packet(&space, &[0.0], &[0.3], &[1.0], 1.0).unwrap();
        let p = PhysicalParams::from_energy_constants(&space, 1.0, 4.0, 1.0, 0.0).unwrap();
        let (s1, p1) = regraduate(&st, &p, 1.0).unwrap();
        assert_eq!(s1, st);
        assert_eq!(p1.osmotic_masses(), p.osmotic_masses());
        let (s2, p2) = regraduate(&st, &p, p.linearizing_kappa().unwrap()).unwrap();
        assert!(p2.is_linear());
        assert_eq!(s2.phi()[3], 0.5 * st.phi()[3]);
    }

    #[test]
    fn quantum_potential_scales_with_eta_squared() {
        let space = line(256, 20.0);
        let st = states::gaussian_packet(&space, &[0.0], &[1.0], &[0.0], 1.0).unwrap();
        let p = params(&space, 1.0);
        let n1 = quantum_potential_norm(st.rho(), &p);
        let n2 = quantum_potential_norm(st.rho(), &p.with_eta(0.5).unwrap());
        assert!((n1 / n2 - 4.0).abs() < 1e-12);
        assert_eq!(quantum_potential_norm(st.rho(), &p.with_osmotic_ratio(0.0).unwrap()), 0.0);
    }

    #[test]
    fn linear_ramp_energy_rate() {
        let space = line(256, 32.0);
        let p = params(&space, 1.0);
        let st = states::gaussian_packet(&space, &[1.0], &[1.0], &[0.0], 1.0).unwrap();
        let eps = 0.05;
        let dt = 0.3 * coupled_dt_max(&st, &p, None);
        let mut traj = vec![st.clone()];
        let mut pots = vec![(ScalarField::zeros(&space), None)];
        let mut s = st;
        for n in 0..200 {
            let t_mid = (n as f64 + 0.5) * dt;
            let v_mid = ScalarField::from_fn(&space, |x| eps * t_mid * x[0]);
            s = coupled_step(&s, &p, &v_mid, dt, None).unwrap();
            let t = s.time();
            traj.push(s.clone());
            pots.push((ScalarField::from_fn(&space, |x| eps * t * x[0]), None));
        }
        let report = energy_rate_audit(&traj, &p, &pots).unwrap();
        for (_, _, numeric, imposed) in &report.rows {
            assert!((numeric - imposed).abs() < 0.02 * imposed.abs());
        }
        assert!(report.max_relative_mismatch < 1e-3, "{}", report.max_relative_mismatch);
    }
}
