//! Deterministic transport of `rho` under the entropic drift.
//!
//! Fluxes live on the links between neighbouring cells. The drift on a link is
//! `b_f = (eta/m)(D⁺S - beta A_f)`, and the drift-diffusion flux uses the
//! exponentially fitted (Scharfetter-Gummel) form
//!
//! `F_f = (D/h) [B(-P) rho_k - B(P) rho_j]`, `P = b_f h / D`, `B(x) = x / (e^x - 1)`,
//!
//! with `D = eta/2m`. It reduces to centred diffusion when `P -> 0` and to
//! upwinded advection when `|P|` is large, and it vanishes identically on
//! `rho ∝ exp(2S)`. Time stepping is Heun's method.

use crate::calculus::{clamped_log, gradient};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField, VectorPotential};
use crate::grid::ConfigSpace;
use crate::kernel::gaussian_step_moments;
use crate::metrics::{center_of_mass, variance};
use crate::params::PhysicalParams;

/// Drift, osmotic and current velocities at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityDecomposition {
    pub drift_b: VectorField,
    pub osmotic_u: VectorField,
    pub current_v: VectorField,
}

/// `b = (eta/m)(grad S - beta A)`, `u = -(eta/2m) grad log rho`, `v = b + u`.
pub fn velocity_fields(
    rho: &ScalarField,
    entropy: &ScalarField,
    params: &PhysicalParams,
    potential: Option<&VectorPotential>,
) -> Result<VelocityDecomposition> {
    rho.space().require_same(entropy.space())?;
    params.validate(rho.space())?;
    let drift_b = gaussian_step_moments(entropy, params, 1.0, potential)?.drift;
    let grad_log = gradient(&clamped_log(rho));
    let space = rho.space();
    let osmotic_u = VectorField::new(
        space.clone(),
        (0..space.dim())
            .map(|a| {
                let c = -0.5 * params.diffusion(a);
                grad_log.component(a).iter().map(|g| c * g).collect()
            })
            .collect(),
    )?;
    let current_v = drift_b.zip_map(&osmotic_u, |b, u| b + u)?;
    Ok(VelocityDecomposition {
        drift_b,
        osmotic_u,
        current_v,
    })
}

/// Drift `b_f` on every forward link; zero on reflecting-wall links.
pub fn link_drift(
    entropy: &ScalarField,
    params: &PhysicalParams,
    potential: Option<&VectorPotential>,
) -> Vec<Vec<f64>> {
    let space = entropy.space();
    let s = entropy.values();
    (0..space.dim())
        .map(|axis| {
            let h = space.spacing(axis);
            let c = params.diffusion(axis);
            (0..space.len())
                .map(|k| match space.neighbor(k, axis, true) {
                    Some(j) => c * ((s[j] - s[k]) / h - params.beta() * potential.map_or(0.0, |a| a.link(axis, k))),
                    None => 0.0,
                })
                .collect()
        })
        .collect()
}

/// Bernoulli function `x / (e^x - 1)`.
fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - 0.5 * x + x * x / 12.0
    } else {
        x / x.exp_m1()
    }
}

/// Link coefficients of the linear operator: on link `k -> j`, the flux per
/// unit cell size is `out[k] rho_k - back[k] rho_j`.
#[derive(Debug, Clone)]
struct LinkOperator {
    out: Vec<Vec<f64>>,
    back: Vec<Vec<f64>>,
}

impl LinkOperator {
    fn new(space: &ConfigSpace, drift: &[Vec<f64>], params: &PhysicalParams) -> Self {
        let mut out = Vec::with_capacity(space.dim());
        let mut back = Vec::with_capacity(space.dim());
        for (axis, b) in drift.iter().enumerate() {
            let h = space.spacing(axis);
            let d = 0.5 * params.diffusion(axis);
            let c = d / (h * h);
            let (mut o, mut w) = (vec![0.0; space.len()], vec![0.0; space.len()]);
            for k in 0..space.len() {
                if space.neighbor(k, axis, true).is_some() {
                    let p = b[k] * h / d;
                    o[k] = c * bernoulli(-p);
                    w[k] = c * bernoulli(p);
                }
            }
            out.push(o);
            back.push(w);
        }
        Self { out, back }
    }

    fn apply(&self, space: &ConfigSpace, rho: &[f64]) -> Vec<f64> {
        let mut rate = vec![0.0; rho.len()];
        for axis in 0..space.dim() {
            let (o, w) = (&self.out[axis], &self.back[axis]);
            for k in 0..rho.len() {
                if let Some(j) = space.neighbor(k, axis, true) {
                    let flow = o[k] * rho[k] - w[k] * rho[j];
                    rate[k] -= flow;
                    rate[j] += flow;
                }
            }
        }
        rate
    }

    /// Largest outflow rate of any cell; forward Euler (and hence Heun) keeps
    /// `rho >= 0` for `dt <= 1 / max_rate`.
    fn max_rate(&self, space: &ConfigSpace) -> f64 {
        let mut diag = vec![0.0; space.len()];
        for axis in 0..space.dim() {
            for k in 0..space.len() {
                if let Some(j) = space.neighbor(k, axis, true) {
                    diag[k] += self.out[axis][k];
                    diag[j] += self.back[axis][k];
                }
            }
        }
        diag.into_iter().fold(0.0, f64::max)
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTimeStep(dt))
    }
}

fn check_inputs(
    rho: &ScalarField,
    entropy: &ScalarField,
    params: &PhysicalParams,
    potential: Option<&VectorPotential>,
) -> Result<()> {
    rho.space().require_same(entropy.space())?;
    if let Some(a) = potential {
        rho.space().require_same(a.space())?;
    }
    params.validate(rho.space())
}

/// Stability bound of [`fp_step`].
pub fn fp_dt_max(entropy: &ScalarField, params: &PhysicalParams, potential: Option<&VectorPotential>) -> f64 {
    let space = entropy.space();
    let op = LinkOperator::new(space, &link_drift(entropy, params, potential), params);
    let rate = op.max_rate(space);
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

/// Clip negative cells, rescale to `mass`, and log what was removed.
fn clip_and_renormalize(space: &ConfigSpace, mut values: Vec<f64>, mass: f64) -> ScalarField {
    let dv = space.cell_volume();
    let clipped: f64 = values.iter().filter(|v| **v < 0.0).map(|v| -v * dv).sum();
    if clipped > 0.0 {
        log::debug!("clipped {clipped:.3e} of negative mass");
        values.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    let now: f64 = values.iter().sum::<f64>() * dv;
    if now > 0.0 && (clipped > 0.0 || (now - mass).abs() > 0.0) {
        let s = mass / now;
        values.iter_mut().for_each(|v| *v *= s);
    }
    ScalarField::from_raw(space.clone(), values)
}

fn heun(rho: &[f64], dt: f64, rate: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let k1 = rate(rho);
    let y1: Vec<f64> = rho.iter().zip(&k1).map(|(r, k)| r + dt * k).collect();
    let k2 = rate(&y1);
    rho.iter()
        .zip(k1.iter().zip(&k2))
        .map(|(r, (a, b))| r + 0.5 * dt * (a + b))
        .collect()
}

/// One Heun step of the drift-diffusion equation. Errors with the bound when
/// `dt > dt_max`.
pub fn fp_step(
    rho: &ScalarField,
    entropy: &ScalarField,
    params: &PhysicalParams,
    dt: f64,
    potential: Option<&VectorPotential>,
) -> Result<ScalarField> {
    check_inputs(rho, entropy, params, potential)?;
    check_dt(dt)?;
    let space = rho.space();
    let op = LinkOperator::new(space, &link_drift(entropy, params, potential), params);
    let rate = op.max_rate(space);
    let dt_max = if rate > 0.0 { 1.0 / rate } else { f64::INFINITY };
    if dt > dt_max {
        return Err(Error::Unstable { dt, dt_max });
    }
    let next = heun(rho.values(), dt, |r| op.apply(space, r));
    Ok(clip_and_renormalize(space, next, rho.integral()))
}

/// Logarithmic mean `(a - b) / (ln a - ln b)`, the link density of the
/// continuity form.
fn log_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let r = a / b;
    if (r - 1.0).abs() < 1e-6 {
        let x = r - 1.0;
        b * (1.0 + x / 2.0 - x * x / 12.0)
    } else {
        (a - b) / r.ln()
    }
}

/// Rate `-div(v rho)` of the continuity form, with
/// `v_f = (eta/m)(D⁺phi - beta A_f)`, `phi = S - log rho^{1/2}` taken from the
/// current `rho`, and the logarithmic mean as link density.
fn continuity_rate(space: &ConfigSpace, rho: &[f64], entropy: &[f64], drift_scale: &[f64], beta_a: &[Vec<f64>]) -> Vec<f64> {
    let max = rho.iter().fold(0.0f64, |a, b| a.max(*b));
    let floor = crate::calculus::LOG_FLOOR * max.max(f64::MIN_POSITIVE);
    let phi: Vec<f64> = rho
        .iter()
        .zip(entropy)
        .map(|(r, s)| s - 0.5 * r.max(floor).ln())
        .collect();
    let mut rate = vec![0.0; rho.len()];
    for axis in 0..space.dim() {
        let h = space.spacing(axis);
        for k in 0..rho.len() {
            if let Some(j) = space.neighbor(k, axis, true) {
                let v = drift_scale[axis] * ((phi[j] - phi[k]) / h - beta_a[axis][k]);
                let flux = v * log_mean(rho[j].max(0.0), rho[k].max(0.0)) / h;
                rate[k] -= flux;
                rate[j] += flux;
            }
        }
    }
    rate
}

/// Stability bound used by [`continuity_step`]: `1 / Σ_a (2D/h^2 + max|b|/h)`
/// (centred-diffusion plus advection rate).
pub fn continuity_dt_max(entropy: &ScalarField, params: &PhysicalParams, potential: Option<&VectorPotential>) -> f64 {
    let space = entropy.space();
    let drift = link_drift(entropy, params, potential);
    let rate: f64 = (0..space.dim())
        .map(|a| {
            let h = space.spacing(a);
            let bmax = drift[a].iter().fold(0.0f64, |m, b| m.max(b.abs()));
            params.diffusion(a) / (h * h) + bmax / h
        })
        .sum();
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

/// One Heun step of `d rho/dt = -div(v rho)` (the same physics as [`fp_step`],
/// written with the current velocity).
pub fn continuity_step(
    rho: &ScalarField,
    entropy: &ScalarField,
    params: &PhysicalParams,
    dt: f64,
    potential: Option<&VectorPotential>,
) -> Result<ScalarField> {
    check_inputs(rho, entropy, params, potential)?;
    check_dt(dt)?;
    let dt_max = continuity_dt_max(entropy, params, potential);
    if dt > dt_max {
        return Err(Error::Unstable { dt, dt_max });
    }
    let space = rho.space();
    let scale: Vec<f64> = (0..space.dim()).map(|a| params.diffusion(a)).collect();
    let beta_a: Vec<Vec<f64>> = (0..space.dim())
        .map(|a| match potential {
            Some(p) => p.links().component(a).iter().map(|x| params.beta() * x).collect(),
            None => vec![0.0; space.len()],
        })
        .collect();
    let next = heun(rho.values(), dt, |r| {
        continuity_rate(space, r, entropy.values(), &scale, &beta_a)
    });
    Ok(clip_and_renormalize(space, next, rho.integral()))
}

/// L2 norm of the discrete right-hand side of the drift-diffusion equation.
pub fn stationarity_residual(
    rho: &ScalarField,
    entropy: &ScalarField,
    params: &PhysicalParams,
    potential: Option<&VectorPotential>,
) -> Result<f64> {
    check_inputs(rho, entropy, params, potential)?;
    let space = rho.space();
    let op = LinkOperator::new(space, &link_drift(entropy, params, potential), params);
    let rate = op.apply(space, rho.values());
    Ok((rate.iter().map(|r| r * r).sum::<f64>() * space.cell_volume()).sqrt())
}

/// Run `steps` steps of [`fp_step`], keeping `(t, rho)` every `stride` steps
/// (plus the initial and final ones).
pub fn fp_evolve(
    rho: &ScalarField,
    entropy: &ScalarField,
    params: &PhysicalParams,
    potential: Option<&VectorPotential>,
    dt: f64,
    steps: usize,
    stride: usize,
) -> Result<Vec<(f64, ScalarField)>> {
    let stride = stride.max(1);
    let mut out = vec![(0.0, rho.clone())];
    let mut r = rho.clone();
    for n in 1..=steps {
        r = fp_step(&r, entropy, params, dt, potential)?;
        if n % stride == 0 || n == steps {
            out.push((n as f64 * dt, r.clone()));
        }
    }
    Ok(out)
}

/// One row of the density time series.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub t: f64,
    pub mass: f64,
    pub variance: Vec<f64>,
    pub center: Vec<f64>,
}

impl MomentRow {
    pub fn from_density(t: f64, rho: &ScalarField) -> Self {
        Self {
            t,
            mass: rho.integral(),
            variance: variance(rho),
            center: center_of_mass(rho),
        }
    }
}

/// CSV with columns `t,mass,var0,..,com0,..`.
pub fn time_series_csv(rows: &[MomentRow]) -> String {
    let dim = rows.first().map_or(0, |r| r.variance.len());
    let mut out = String::from("t,mass");
    for a in 0..dim {
        out.push_str(&format!(",var{a}"));
    }
    for a in 0..dim {
        out.push_str(&format!(",com{a}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{:.12e},{:.15e}", r.t, r.mass));
        for v in r.variance.iter().chain(&r.center) {
            out.push_str(&format!(",{v:.15e}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use crate::states::gaussian_density;

    fn line(l: f64, n: usize) -> (ConfigSpace, PhysicalParams) {
        let s = ConfigSpace::line(l, n, Boundary::Periodic).unwrap();
        let p = PhysicalParams::simple(&s, 1.0, 1.0, 1.0).unwrap();
        (s, p)
    }

    #[test]
    fn bernoulli_is_smooth_at_zero() {
        assert!((bernoulli(1e-7) - bernoulli(-1e-7) + 1e-7).abs() < 1e-15);
        assert!((bernoulli(1e-5) - 1e-5 / 1e-5f64.exp_m1()).abs() < 1e-14);
        assert!((bernoulli(2.0) - bernoulli(-2.0) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn uniform_state_is_stationary() {
        let (s, p) = line(10.0, 64);
        let rho = ScalarField::constant(&s, 0.1);
        let flat = ScalarField::zeros(&s);
        let next = fp_step(&rho, &flat, &p, 1e-3, None).unwrap();
        for v in next.values() {
            assert!((v - 0.1).abs() < 1e-12);
        }
        assert!(stationarity_residual(&rho, &flat, &p, None).unwrap() < 1e-14);
    }

    #[test]
    fn gaussian_velocities() {
        let (s, p) = line(20.0, 400);
        let rho = gaussian_density(&s, &[1.0], &[0.5]).unwrap();
        let v = velocity_fields(&rho, &ScalarField::zeros(&s), &p, None).unwrap();
        for (k, u) in v.osmotic_u.component(0).iter().enumerate().skip(100).take(200) {
            let x = s.coordinate(0, k);
            assert!((u - 0.5 * (x - 1.0) / 0.5).abs() < 1e-3, "{x} {u}");
        }
        for k in 0..s.len() {
            let (b, u, c) = (v.drift_b.component(0)[k], v.osmotic_u.component(0)[k], v.current_v.component(0)[k]);
            assert_eq!(c, b + u);
        }
    }

    #[test]
    fn constant_potential_gives_constant_drift() {
        let (s, p) = line(10.0, 50);
        let p = p.with_beta(1.0).unwrap();
        let a = VectorPotential::constant(&s, &[0.7]).unwrap();
        let v = velocity_fields(&ScalarField::constant(&s, 0.1), &ScalarField::zeros(&s), &p, Some(&a)).unwrap();
        assert!(v.drift_b.component(0).iter().all(|b| (b + 0.7).abs() < 1e-14));
        assert!(v.osmotic_u.component(0).iter().all(|u| *u == 0.0));
    }

    #[test]
    fn equilibrium_has_vanishing_residual() {
        let (s, p) = line(10.0, 128);
        let entropy = ScalarField::from_fn(&s, |x| 0.6 * (2.0 * std::f64::consts::PI * x[0] / 10.0).sin());
        let rho = crate::calculus::normalize_density(&entropy.map(|v| (2.0 * v).exp())).unwrap();
        let r = stationarity_residual(&rho, &entropy, &p, None).unwrap();
        let norm = (rho.values().iter().map(|v| v * v).sum::<f64>() * s.cell_volume()).sqrt();
        assert!(r <= 1e-6 * norm, "{r}");
        let g = gaussian_density(&s, &[0.0], &[0.5]).unwrap();
        assert!(stationarity_residual(&g, &ScalarField::zeros(&s), &p, None).unwrap() > 1e-3);
    }

    #[test]
    fn step_rejects_large_dt_and_conserves_mass() {
        let (s, p) = line(10.0, 100);
        let entropy = ScalarField::from_fn(&s, |x| x[0].cos());
        let rho = gaussian_density(&s, &[0.0], &[1.0]).unwrap();
        let dt_max = fp_dt_max(&entropy, &p, None);
        match fp_step(&rho, &entropy, &p, 1.01 * dt_max, None) {
            Err(Error::Unstable { dt_max: m, .. }) => assert_eq!(m, dt_max),
            other => panic!("{other:?}"),
        }
        let mut r = rho;
        for _ in 0..200 {
            r = fp_step(&r, &entropy, &p, 0.9 * dt_max, None).unwrap();
            assert!((r.integral() - 1.0).abs() < 1e-12);
            assert!(r.values().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn linear_entropy_moves_center_at_drift_speed() {
        let (s, p) = line(40.0, 400);
        // S = k x away from the seam; the packet never reaches it.
        let k = 0.5;
        let entropy = ScalarField::from_fn(&s, |x| k * x[0]);
        let rho = gaussian_density(&s, &[-5.0], &[1.0]).unwrap();
        let dt = 0.5 * fp_dt_max(&entropy, &p, None);
        let steps = (4.0 / dt).round() as usize;
        let out = fp_evolve(&rho, &entropy, &p, None, dt, steps, steps).unwrap();
        let (t, last) = out.last().unwrap();
        let moved = center_of_mass(last)[0] + 5.0;
        assert!((moved / t - k).abs() < 0.01 * k, "{}", moved / t);
    }

    #[test]
    fn continuity_form_matches_drift_diffusion_form() {
        let (s, p) = line(12.0, 192);
        let entropy = ScalarField::from_fn(&s, |x| 0.4 * (2.0 * std::f64::consts::PI * x[0] / 12.0).cos());
        let rho = gaussian_density(&s, &[0.5], &[0.8]).unwrap();
        let dt = 0.5 * fp_dt_max(&entropy, &p, None).min(continuity_dt_max(&entropy, &p, None));
        let (mut a, mut b) = (rho.clone(), rho);
        for _ in 0..(0.5 / dt) as usize {
            a = fp_step(&a, &entropy, &p, dt, None).unwrap();
            b = continuity_step(&b, &entropy, &p, dt, None).unwrap();
        }
        let d = crate::metrics::l1_distance(&a, &b).unwrap();
        assert!(d < 1e-3, "{d}");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let (s, _) = line(10.0, 20);
        let rho = ScalarField::constant(&s, 0.1);
        let text = time_series_csv(&[MomentRow::from_density(0.0, &rho), MomentRow::from_density(1.0, &rho)]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,mass,var0,com0");
        assert_eq!(lines.len(), 3);
    }
}
