//! Reference wave-function solvers.
//!
//! Convention: `i eta Psi' = (eta^2/2m)(-i∇ - beta A)^2 Psi + V Psi`. On the grid
//! the covariant Laplacian uses link phases `U_k = exp(-i beta h A_k)`:
//! `(U_k Psi_{k+1} - 2 Psi_k + conj(U_{k-1}) Psi_{k-1}) / h^2`, which makes
//! `Psi -> e^{i beta chi} Psi`, `A -> A + D⁺chi` an exact symmetry.

use num_complex::Complex64;

use crate::calculus::{axis_laplacian, RELATIVE_FLOOR};
use crate::error::{Error, Result};
use crate::field::{ComplexField, ScalarField, VectorPotential};
use crate::grid::{Boundary, ConfigSpace};
use crate::manifold::ManifoldState;
use crate::params::PhysicalParams;

const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    psi: ComplexField,
    time: f64,
}

impl WaveFunction {
    /// `∫ |Psi|^2` must be one within `1e-10`.
    pub fn new(psi: ComplexField, time: f64) -> Result<Self> {
        let n = psi.norm_sq();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::DegenerateDensity(format!("wave function norm {n}")));
        }
        Ok(Self { psi, time })
    }

    pub fn normalized(psi: ComplexField, time: f64) -> Result<Self> {
        let n = psi.norm_sq();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::VanishingWavefunction);
        }
        let s = 1.0 / n.sqrt();
        let psi = ComplexField::new(psi.space().clone(), psi.values().iter().map(|v| v * s).collect())?;
        Ok(Self { psi, time })
    }

    pub fn psi(&self) -> &ComplexField {
        &self.psi
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn space(&self) -> &ConfigSpace {
        self.psi.space()
    }

    pub fn density(&self) -> ScalarField {
        self.psi.modulus_sq()
    }

    pub fn norm_sq(&self) -> f64 {
        self.psi.norm_sq()
    }
}

/// `Psi = sqrt(rho) exp(i phi)`.
pub fn to_wavefunction(state: &ManifoldState) -> WaveFunction {
    let values = state
        .rho()
        .values()
        .iter()
        .zip(state.phi().values())
        .map(|(r, p)| Complex64::from_polar(r.max(0.0).sqrt(), *p))
        .collect();
    WaveFunction {
        psi: ComplexField::from_raw(state.space().clone(), values),
        time: state.time(),
    }
}

/// `rho = |Psi|^2` and `phi = arg Psi`, unwrapped.
///
/// Cells are visited in storage order (axis 0 outermost, starting at the
/// origin cell). Each cell is unwrapped against one already-visited
/// neighbour: one step back along the last axis whose index is nonzero.
/// Cells with `|Psi|^2 < 1e-12 max |Psi|^2` inherit that neighbour's phase.
pub fn from_wavefunction(w: &WaveFunction) -> Result<ManifoldState> {
    let space = w.space();
    let psi = w.psi.values();
    let rho: Vec<f64> = psi.iter().map(|v| v.norm_sqr()).collect();
    let max = rho.iter().fold(0.0f64, |a, b| a.max(*b));
    if !(max > 0.0) {
        return Err(Error::VanishingWavefunction);
    }
    let floor = RELATIVE_FLOOR * max;
    let mut phi = vec![0.0; space.len()];
    for k in 0..space.len() {
        let reference = (0..space.dim())
            .rev()
            .find(|a| space.axis_index(k, *a) > 0)
            .map(|a| phi[k - space.stride(a)]);
        phi[k] = match reference {
            None => {
                if rho[k] >= floor {
                    psi[k].arg()
                } else {
                    0.0
                }
            }
            Some(r) if rho[k] >= floor => r + wrap(psi[k].arg() - r),
            Some(r) => r,
        };
    }
    ManifoldState::new(
        ScalarField::new(space.clone(), rho)?,
        ScalarField::new(space.clone(), phi)?,
        w.time,
    )
}

fn wrap(d: f64) -> f64 {
    d - std::f64::consts::TAU * (d / std::f64::consts::TAU).round()
}

/// `Psi' = e^{i beta chi} Psi`, `A' = A + D⁺chi`.
pub fn gauge_transform(
    w: &WaveFunction,
    potential: &VectorPotential,
    chi: &ScalarField,
    beta: f64,
) -> Result<(WaveFunction, VectorPotential)> {
    w.space().require_same(chi.space())?;
    let values = w
        .psi
        .values()
        .iter()
        .zip(chi.values())
        .map(|(p, c)| p * Complex64::from_polar(1.0, beta * c))
        .collect();
    Ok((
        WaveFunction {
            psi: ComplexField::new(w.space().clone(), values)?,
            time: w.time,
        },
        potential.gauge_shift(chi)?,
    ))
}

/// Link phase `exp(-i beta h A)` of every forward link along `axis`.
fn link_phases(space: &ConfigSpace, axis: usize, beta: f64, potential: Option<&VectorPotential>) -> Vec<Complex64> {
    let h = space.spacing(axis);
    (0..space.len())
        .map(|k| match potential {
            Some(a) if beta != 0.0 => Complex64::from_polar(1.0, -beta * h * a.link(axis, k)),
            _ => Complex64::new(1.0, 0.0),
        })
        .collect()
}

/// `H Psi` for `H = -Σ_a (eta^2/2m_a) covariant_laplacian_a + V`.
pub fn apply_hamiltonian(
    w: &WaveFunction,
    params: &PhysicalParams,
    v: &ScalarField,
    potential: Option<&VectorPotential>,
) -> Result<Vec<Complex64>> {
    let space = w.space();
    space.require_same(v.space())?;
    if let Some(a) = potential {
        space.require_same(a.space())?;
    }
    let psi = w.psi.values();
    let eta = params.eta();
    let mut out: Vec<Complex64> = psi.iter().zip(v.values()).map(|(p, v)| p * v).collect();
    for axis in 0..space.dim() {
        let u = link_phases(space, axis, params.beta(), potential);
        let c = eta * eta / (2.0 * params.axis_mass(axis) * space.spacing(axis).powi(2));
        for k in 0..space.len() {
            let mut lap = Complex64::new(0.0, 0.0);
            if let Some(j) = space.neighbor(k, axis, true) {
                lap += u[k] * psi[j] - psi[k];
            }
            if let Some(p) = space.neighbor(k, axis, false) {
                lap += u[p].conj() * psi[p] - psi[k];
            }
            out[k] -= c * lap;
        }
    }
    Ok(out)
}

/// `<Psi|H|Psi>`.
pub fn energy_expectation(
    w: &WaveFunction,
    params: &PhysicalParams,
    v: &ScalarField,
    potential: Option<&VectorPotential>,
) -> Result<f64> {
    let hpsi = apply_hamiltonian(w, params, v, potential)?;
    let s: Complex64 = w.psi.values().iter().zip(&hpsi).map(|(p, h)| p.conj() * h).sum();
    Ok(s.re * w.space().cell_volume())
}

fn thomas(lower: &[Complex64], diag: &[Complex64], upper: &[Complex64], rhs: &[Complex64]) -> Vec<Complex64> {
    let n = diag.len();
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / m } else { Complex64::new(0.0, 0.0) };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    x
}

/// Cyclic tridiagonal solve (Sherman-Morrison). `top_right` is `M[0][n-1]`,
/// `bottom_left` is `M[n-1][0]`.
fn cyclic_thomas(
    lower: &[Complex64],
    diag: &[Complex64],
    upper: &[Complex64],
    top_right: Complex64,
    bottom_left: Complex64,
    rhs: &[Complex64],
) -> Vec<Complex64> {
    let n = diag.len();
    let gamma = -diag[0];
    let mut b = diag.to_vec();
    b[0] -= gamma;
    b[n - 1] -= bottom_left * top_right / gamma;
    let x = thomas(lower, &b, upper, rhs);
    let mut u = vec![Complex64::new(0.0, 0.0); n];
    u[0] = gamma;
    u[n - 1] = bottom_left;
    let z = thomas(lower, &b, upper, &u);
    let fact = (x[0] + top_right * x[n - 1] / gamma) / (Complex64::new(1.0, 0.0) + z[0] + top_right * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(x, z)| x - fact * z).collect()
}

/// Crank-Nicolson update of one grid line for `h_line = -c covariant_laplacian + v`.
/// `u[i]` is the phase of the link from entry `i` to `i + 1` (last entry: the
/// periodic seam link).
fn cn_line(line: &[Complex64], u: &[Complex64], v: Option<&[f64]>, c: f64, dt_over_eta: f64, periodic: bool) -> Vec<Complex64> {
    let n = line.len();
    let i = Complex64::new(0.0, 1.0);
    let half = 0.5 * dt_over_eta;
    let zero = Complex64::new(0.0, 0.0);
    // H entries
    let mut hd = vec![zero; n];
    let mut hu = vec![zero; n];
    let mut hl = vec![zero; n];
    for k in 0..n {
        let links = if periodic { 2.0 } else { (k > 0) as u8 as f64 + (k + 1 < n) as u8 as f64 };
        hd[k] = Complex64::new(c * links + v.map_or(0.0, |v| v[k]), 0.0);
        if k + 1 < n {
            hu[k] = -c * u[k];
            hl[k + 1] = -c * u[k].conj();
        }
    }
    let (corner_tr, corner_bl) = if periodic {
        (-c * u[n - 1].conj(), -c * u[n - 1])
    } else {
        (zero, zero)
    };
    // rhs = (1 - i dt H / 2 eta) psi
    let rhs: Vec<Complex64> = (0..n)
        .map(|k| {
            let mut hpsi = hd[k] * line[k];
            if k + 1 < n {
                hpsi += hu[k] * line[k + 1];
            }
            if k > 0 {
                hpsi += hl[k] * line[k - 1];
            }
            if periodic && k == 0 {
                hpsi += corner_tr * line[n - 1];
            }
            if periodic && k == n - 1 {
                hpsi += corner_bl * line[0];
            }
            line[k] - i * half * hpsi
        })
        .collect();
    let diag: Vec<Complex64> = hd.iter().map(|d| 1.0 + i * half * d).collect();
    let upper: Vec<Complex64> = hu.iter().map(|x| i * half * x).collect();
    let lower: Vec<Complex64> = hl.iter().map(|x| i * half * x).collect();
    if periodic {
        cyclic_thomas(&lower, &diag, &upper, i * half * corner_tr, i * half * corner_bl, &rhs)
    } else {
        thomas(&lower, &diag, &upper, &rhs)
    }
}

fn line_starts(space: &ConfigSpace, axis: usize) -> Vec<usize> {
    (0..space.len()).filter(|k| space.axis_index(*k, axis) == 0).collect()
}

fn sweep_axis(
    space: &ConfigSpace,
    psi: &mut [Complex64],
    axis: usize,
    params: &PhysicalParams,
    v: Option<&[f64]>,
    dt: f64,
    potential: Option<&VectorPotential>,
) {
    let n = space.points()[axis];
    let stride = space.stride(axis);
    let u_all = link_phases(space, axis, params.beta(), potential);
    let c = params.eta() * params.eta() / (2.0 * params.axis_mass(axis) * space.spacing(axis).powi(2));
    let periodic = space.boundary() == Boundary::Periodic;
    for start in line_starts(space, axis) {
        let idx: Vec<usize> = (0..n).map(|i| start + i * stride).collect();
        let line: Vec<Complex64> = idx.iter().map(|k| psi[*k]).collect();
        let u: Vec<Complex64> = idx.iter().map(|k| u_all[*k]).collect();
        let vl: Option<Vec<f64>> = v.map(|v| idx.iter().map(|k| v[*k]).collect());
        let out = cn_line(&line, &u, vl.as_deref(), c, dt / params.eta(), periodic);
        for (k, o) in idx.iter().zip(out) {
            psi[*k] = o;
        }
    }
}

fn kick(psi: &mut [Complex64], v: &[f64], dt_over_eta: f64) {
    for (p, v) in psi.iter_mut().zip(v) {
        *p *= Complex64::from_polar(1.0, -v * dt_over_eta);
    }
}

fn check_step(
    w: &WaveFunction,
    params: &PhysicalParams,
    v: &ScalarField,
    dt: f64,
    potential: Option<&VectorPotential>,
) -> Result<()> {
    let space = w.space();
    space.require_same(v.space())?;
    if let Some(a) = potential {
        space.require_same(a.space())?;
    }
    params.validate(space)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidTimeStep(dt));
    }
    Ok(())
}

/// One norm-preserving step of the linear equation.
///
/// In 1D this is Crank-Nicolson on the full Hamiltonian (cyclic tridiagonal
/// solve on periodic grids), which also conserves `<H>` exactly. In higher
/// dimensions: half potential kick, Crank-Nicolson sweeps over the axes with
/// `dt/2` each in forward then reverse order, half kick.
pub fn unitary_step(
    w: &WaveFunction,
    params: &PhysicalParams,
    v: &ScalarField,
    dt: f64,
    potential: Option<&VectorPotential>,
) -> Result<WaveFunction> {
    check_step(w, params, v, dt, potential)?;
    let space = w.space();
    let mut psi = w.psi.values().to_vec();
    if space.dim() == 1 {
        sweep_axis(space, &mut psi, 0, params, Some(v.values()), dt, potential);
    } else {
        let de = dt / params.eta();
        kick(&mut psi, v.values(), 0.5 * de);
        for axis in 0..space.dim() {
            sweep_axis(space, &mut psi, axis, params, None, 0.5 * dt, potential);
        }
        for axis in (0..space.dim()).rev() {
            sweep_axis(space, &mut psi, axis, params, None, 0.5 * dt, potential);
        }
        kick(&mut psi, v.values(), 0.5 * de);
    }
    Ok(WaveFunction {
        psi: ComplexField::from_raw(space.clone(), psi),
        time: w.time + dt,
    })
}

/// Extra potential `Σ_a (eta^2/2m_a)(1 - mu_a/m_a) laplacian_a|Psi| / |Psi|`, with
/// `|Psi|` clamped as in [`crate::manifold::amplitude_floor`].
/// `None` when every coefficient vanishes.
pub fn nonlinear_potential(psi: &ComplexField, params: &PhysicalParams) -> Option<ScalarField> {
    let space = psi.space();
    let eta = params.eta();
    let coeffs: Vec<f64> = (0..space.dim())
        .map(|a| {
            let m = params.axis_mass(a);
            eta * eta / (2.0 * m) * (1.0 - params.axis_osmotic_mass(a) / m)
        })
        .collect();
    if coeffs.iter().all(|c| *c == 0.0) {
        return None;
    }
    let amp = ScalarField::from_raw(space.clone(), psi.values().iter().map(|v| v.norm()).collect());
    let floor = crate::manifold::amplitude_floor(amp.values());
    let mut out = vec![0.0; space.len()];
    for (axis, c) in coeffs.iter().enumerate() {
        if *c == 0.0 {
            continue;
        }
        for (k, l) in axis_laplacian(&amp, axis).into_iter().enumerate() {
            out[k] += c * l / amp[k].max(floor);
        }
    }
    Some(ScalarField::from_raw(space.clone(), out))
}

/// One step of the nonlinear family: half kick by [`nonlinear_potential`],
/// [`unitary_step`], half kick recomputed from the updated amplitude. With
/// `mu = m` the kicks are skipped and the result is exactly [`unitary_step`].
pub fn nonlinear_step(
    w: &WaveFunction,
    params: &PhysicalParams,
    v: &ScalarField,
    dt: f64,
    potential: Option<&VectorPotential>,
) -> Result<WaveFunction> {
    check_step(w, params, v, dt, potential)?;
    let de = dt / params.eta();
    let Some(q) = nonlinear_potential(&w.psi, params) else {
        return unitary_step(w, params, v, dt, potential);
    };
    let mut psi = w.psi.values().to_vec();
    kick(&mut psi, q.values(), 0.5 * de);
    let mid = WaveFunction {
        psi: ComplexField::from_raw(w.space().clone(), psi),
        time: w.time,
    };
    let mut out = unitary_step(&mid, params, v, dt, potential)?;
    if let Some(q) = nonlinear_potential(&out.psi, params) {
        kick(out.psi.values_mut(), q.values(), 0.5 * de);
    }
    Ok(out)
}

/// Run `steps` steps of `unitary_step` or `nonlinear_step` (chosen from the
/// masses), returning every `stride`-th state plus the initial and final ones.
pub fn evolve(
    w: &WaveFunction,
    params: &PhysicalParams,
    v: &ScalarField,
    potential: Option<&VectorPotential>,
    dt: f64,
    steps: usize,
    stride: usize,
) -> Result<Vec<WaveFunction>> {
    let stride = stride.max(1);
    let mut out = vec![w.clone()];
    let mut s = w.clone();
    for n in 1..=steps {
        s = nonlinear_step(&s, params, v, dt, potential)?;
        if n % stride == 0 || n == steps {
            out.push(s.clone());
        }
    }
    Ok(out)
}
