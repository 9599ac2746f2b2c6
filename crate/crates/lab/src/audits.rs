//! Gauge, classical-limit and maximum-entropy audits of a scenario.

use std::path::Path;
use std::time::Instant;

use entropic_core::ensemble::{self, Ensemble};
use entropic_core::fokker_planck;
use entropic_core::kernel::{self, StepConstraints};
use entropic_core::manifold::{self, ManifoldState};
use entropic_core::metrics::{l2_distance, psi_distance_mod_phase};
use entropic_core::schrodinger::{self, WaveFunction};
use entropic_core::{ScalarField, VectorPotential};

use crate::error::{LabError, Result};
use crate::report::{Artifacts, Check, Summary};
use crate::scenario::{ChiSpec, Engine, Scenario};

/// Largest tolerated trajectory gap between gauge-related runs.
pub const GAUGE_TOL: f64 = 1e-8;
pub const ETA_SCALING_TOL: f64 = 0.1;
pub const MU_SCALING_TOL: f64 = 0.1;
pub const FLUCTUATION_TOL: f64 = 0.05;
/// Residual at `mu = 0` relative to the unscaled one.
pub const MU_ZERO_TOL: f64 = 1e-3;
pub const GIBBS_GAP_TOL: f64 = 1e-9;

fn finish(out: &Artifacts, mut summary: Summary, start: Instant) -> Result<Summary> {
    summary.elapsed_seconds = start.elapsed().as_secs_f64();
    out.summary(&summary)?;
    for c in &summary.checks {
        log::info!("{}", c.line());
    }
    Ok(summary)
}

fn base_summary(s: &Scenario, command: &str) -> Summary {
    let mut summary = Summary::new(command, s.name());
    summary.engine = Some(s.engine().name().into());
    summary.seed = Some(s.seed());
    summary.dt = Some(s.dt());
    summary
}

fn shifted(a: Option<VectorPotential>, chi: &ScalarField) -> entropic_core::Result<VectorPotential> {
    match a {
        Some(a) => a.gauge_shift(chi),
        None => Ok(VectorPotential::pure_gauge(chi)),
    }
}

/// Evolve the scenario and its gauge transform by `chi` side by side.
pub fn gauge_check(s: &Scenario, chi: &ChiSpec, root: &Path) -> Result<Summary> {
    let start = Instant::now();
    let out = Artifacts::create(root.join(format!("{}-gauge", s.name())))?;
    out.text("scenario.toml", &s.echo())?;
    let chi = chi.build(&s.space, Path::new(""), "--chi")?;
    let p = &s.params;
    let beta = p.beta();
    if beta == 0.0 {
        log::warn!("beta = 0: the vector potential decouples and the check is trivial");
    }
    let dt = s.dt();
    let ctx = |what: &str| format!("gauge check: {what}");
    let mut rows = Vec::new();
    let phase = |w: &WaveFunction| -> Result<WaveFunction> {
        let a = VectorPotential::zeros(&s.space);
        schrodinger::gauge_transform(w, &a, &chi, beta)
            .map(|(w, _)| w)
            .map_err(|e| LabError::Engine { context: ctx("transform"), source: e })
    };
    let engine_err = |what: &str| {
        let c = ctx(what);
        move |e| LabError::Engine { context: c, source: e }
    };
    match s.engine() {
        Engine::Coupled | Engine::Schrodinger | Engine::Nonlinear => {
            let st = s.initial_state().clone();
            let phi_g = st.phi().zip_map(&chi, |f, c| f + beta * c).map_err(engine_err("phase"))?;
            let st_g = ManifoldState::new(st.rho().clone(), phi_g, 0.0).map_err(engine_err("phase"))?;
            let (mut x, mut y) = (st.clone(), st_g);
            let mut wx = schrodinger::to_wavefunction(&st);
            let mut wy = phase(&wx)?;
            for n in 1..=s.steps() {
                let t = (n as f64 - 0.5) * dt;
                let (v, a) = (s.potential_at(t), s.vector_potential_at(t));
                let a_g = shifted(a.clone(), &chi).map_err(engine_err("shift"))?;
                let (rho_x, rho_y, psi_x, psi_y);
                if s.engine() == Engine::Coupled {
                    x = manifold::coupled_step(&x, p, &v, dt, a.as_ref()).map_err(engine_err("step"))?;
                    y = manifold::coupled_step(&y, p, &v, dt, Some(&a_g)).map_err(engine_err("step"))?;
                    (rho_x, rho_y) = (x.rho().clone(), y.rho().clone());
                    psi_x = schrodinger::to_wavefunction(&x);
                    psi_y = schrodinger::to_wavefunction(&y);
                } else {
                    let step = |w: &WaveFunction, a: Option<&VectorPotential>| {
                        if s.engine() == Engine::Schrodinger {
                            schrodinger::unitary_step(w, p, &v, dt, a)
                        } else {
                            schrodinger::nonlinear_step(w, p, &v, dt, a)
                        }
                    };
                    wx = step(&wx, a.as_ref()).map_err(engine_err("step"))?;
                    wy = step(&wy, Some(&a_g)).map_err(engine_err("step"))?;
                    (rho_x, rho_y) = (wx.density(), wy.density());
                    (psi_x, psi_y) = (wx.clone(), wy.clone());
                }
                if n % s.stride() == 0 || n == s.steps() {
                    let d_rho = l2_distance(&rho_x, &rho_y).map_err(engine_err("distance"))?;
                    let aligned = phase(&psi_x)?;
                    let d_psi = psi_distance_mod_phase(aligned.psi(), psi_y.psi()).map_err(engine_err("distance"))?;
                    rows.push(vec![n as f64 * dt, d_rho, d_psi]);
                }
            }
            out.table("gauge.csv", &["t", "rho_l2", "psi_l2"], &rows)?;
        }
        Engine::FokkerPlanck => {
            let entropy = s.entropy();
            let entropy_g = entropy.zip_map(&chi, |e, c| e + beta * c).map_err(engine_err("entropy"))?;
            let mut x = s.initial_state().rho().clone();
            let mut y = x.clone();
            for n in 1..=s.steps() {
                let t = (n as f64 - 0.5) * dt;
                let a = s.vector_potential_at(t);
                let a_g = shifted(a.clone(), &chi).map_err(engine_err("shift"))?;
                x = fokker_planck::fp_step(&x, entropy, p, dt, a.as_ref()).map_err(engine_err("step"))?;
                y = fokker_planck::fp_step(&y, &entropy_g, p, dt, Some(&a_g)).map_err(engine_err("step"))?;
                if n % s.stride() == 0 || n == s.steps() {
                    rows.push(vec![n as f64 * dt, l2_distance(&x, &y).map_err(engine_err("distance"))?]);
                }
            }
            out.table("gauge.csv", &["t", "rho_l2"], &rows)?;
        }
        Engine::Ensemble => {
            return Err(LabError::Usage(
                "gauge-check runs the coupled, schrodinger, nonlinear or fokker-planck engines".into(),
            ))
        }
    }
    let mut summary = base_summary(s, "gauge-check");
    let worst = |col: usize| rows.iter().map(|r| r[col]).fold(0.0, f64::max);
    summary.metric("rho_l2", worst(1));
    summary.check(Check::at_most("gauge_rho_l2", worst(1), GAUGE_TOL, "worst density L2 between the runs"));
    if rows.first().is_some_and(|r| r.len() > 2) {
        summary.metric("psi_l2", worst(2));
        summary.check(Check::at_most(
            "gauge_psi_l2",
            worst(2),
            GAUGE_TOL,
            "worst wave-function L2 after the exp(i beta chi) alignment",
        ));
    }
    finish(&out, summary, start)
}

/// Classical Hamilton-Jacobi residual of one short coupled step at fixed
/// `rho` and fixed `S = eta phi`.
fn hj_residual(s: &Scenario, p: &entropic_core::PhysicalParams) -> Result<f64> {
    let st = s.initial_state();
    let scale = s.params.eta() / p.eta();
    let state = ManifoldState::new(st.rho().clone(), st.phi().map(|f| f * scale), 0.0)
        .map_err(|e| LabError::Engine { context: "classical limit".into(), source: e })?;
    let v = s.static_potential();
    let a = s.static_vector_potential();
    let dt = 1e-2 * manifold::coupled_dt_max(&state, p, a);
    let next = manifold::coupled_step(&state, p, v, dt, a)
        .map_err(|e| LabError::Engine { context: "classical limit step".into(), source: e })?;
    manifold::hamilton_jacobi_residual(&state, &next, p, v, a)
        .map_err(|e| LabError::Engine { context: "classical limit residual".into(), source: e })
}

/// Worst per-axis ratio of the one-step displacement variance to `(eta/m) dt`.
fn fluctuation_ratio(s: &Scenario, p: &entropic_core::PhysicalParams, walkers: usize) -> Result<f64> {
    let space = &s.space;
    let centre: Vec<f64> = (0..space.dim()).map(|a| space.lower()[a] + 0.5 * space.extent(a)).collect();
    let positions: Vec<f64> = (0..walkers).flat_map(|_| centre.iter().copied()).collect();
    let dt = s.dt();
    let err = |e| LabError::Engine { context: "classical limit ensemble".into(), source: e };
    let e = Ensemble::new(space, positions, dt, s.seed()).map_err(err)?;
    let next = ensemble::step_ensemble(&e, s.entropy(), p, s.static_vector_potential()).map_err(err)?;
    let mut worst: f64 = 1.0;
    for a in 0..space.dim() {
        let x: Vec<f64> = next.coordinates(a).iter().map(|x| space.displacement(a, centre[a], *x)).collect();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let ratio = var / (p.diffusion(a) * dt);
        if (ratio - 1.0).abs() > (worst - 1.0).abs() {
            worst = ratio;
        }
    }
    Ok(worst)
}

/// Sweep `eta` (and optionally `mu/m`) at fixed density and classical action.
pub fn classical_limit(s: &Scenario, eta_factors: &[f64], mu_ratios: &[f64], walkers: usize, root: &Path) -> Result<Summary> {
    let start = Instant::now();
    if eta_factors.iter().chain(mu_ratios).any(|f| !(f.is_finite() && *f >= 0.0)) || eta_factors.contains(&0.0) {
        return Err(LabError::Usage("sweep factors must be finite; eta factors positive, mu ratios non-negative".into()));
    }
    let out = Artifacts::create(root.join(format!("{}-classical", s.name())))?;
    out.text("scenario.toml", &s.echo())?;
    let mut summary = base_summary(s, "classical-limit");
    let r1 = hj_residual(s, &s.params)?;
    summary.metric("residual_reference", r1);
    let param_err = |e| LabError::Engine { context: "classical limit parameters".into(), source: e };
    let mut rows = Vec::new();
    let mut eta_worst: f64 = 0.0;
    let mut fluct_worst: f64 = 0.0;
    for f in eta_factors {
        let p = s.params.with_eta(s.params.eta() * f).map_err(param_err)?;
        let r = hj_residual(s, &p)?;
        let ratio = r / (r1 * f * f);
        let fl = fluctuation_ratio(s, &p, walkers)?;
        eta_worst = eta_worst.max((ratio - 1.0).abs());
        fluct_worst = fluct_worst.max((fl - 1.0).abs());
        rows.push(vec![0.0, *f, r, ratio, fl]);
    }
    let mut mu_worst: f64 = 0.0;
    let mut mu_zero = None;
    let mu0 = s.config.params.mu_over_m;
    for m in mu_ratios {
        let p = s.params.with_osmotic_ratio(*m).map_err(param_err)?;
        let r = hj_residual(s, &p)?;
        let fl = fluctuation_ratio(s, &p, walkers)?;
        fluct_worst = fluct_worst.max((fl - 1.0).abs());
        let ratio = if *m == 0.0 {
            mu_zero = Some(r / r1);
            r / r1
        } else {
            let ratio = r / (r1 * m / mu0);
            mu_worst = mu_worst.max((ratio - 1.0).abs());
            ratio
        };
        rows.push(vec![1.0, *m, r, ratio, fl]);
    }
    out.table(
        "classical_limit.csv",
        &["sweep", "factor", "residual", "scaled_ratio", "fluctuation_ratio"],
        &rows,
    )?;
    summary.check(Check::at_most(
        "eta_residual_scaling",
        eta_worst,
        ETA_SCALING_TOL,
        "worst |r(f eta) / (f^2 r(eta)) - 1|",
    ));
    summary.check(Check::at_most(
        "fluctuation_scaling",
        fluct_worst,
        FLUCTUATION_TOL,
        "worst |Var(dx) / ((eta/m) dt) - 1|",
    ));
    if mu_ratios.iter().any(|m| *m > 0.0) {
        summary.check(Check::at_most(
            "mu_residual_scaling",
            mu_worst,
            MU_SCALING_TOL,
            "worst |r(mu) / ((mu/mu0) r(mu0)) - 1|",
        ));
    }
    if let Some(z) = mu_zero {
        summary.check(Check::at_most("mu_zero_residual", z, MU_ZERO_TOL, "r(mu = 0) / r(mu0)"));
    }
    finish(&out, summary, start)
}

/// Exact kernel at the box centre for the scenario's `dt`, audited by random
/// constrained perturbations.
pub fn maxent_audit(s: &Scenario, trials: usize, root: &Path) -> Result<Summary> {
    let start = Instant::now();
    if trials == 0 {
        return Err(LabError::Usage("--trials must be positive".into()));
    }
    let out = Artifacts::create(root.join(format!("{}-maxent", s.name())))?;
    out.text("scenario.toml", &s.echo())?;
    let space = &s.space;
    let p = &s.params;
    let dt = s.dt();
    let centre: Vec<usize> = space.points().iter().map(|n| n / 2).collect();
    let source = space.flat_index(&centre);
    let a = s.static_vector_potential();
    let mut constraints = StepConstraints::alpha(p.alpha_for_dt(dt));
    if a.is_some() {
        constraints = constraints.with_beta(p.beta());
    }
    let err = |what: &'static str| move |e| LabError::Engine { context: format!("maxent audit: {what}"), source: e };
    let k = kernel::build_exact_kernel(s.entropy(), source, &constraints, a).map_err(err("kernel"))?;
    out.text("kernel.csv", &k.to_csv())?;
    let report = kernel::gibbs_optimality_certificate(s.entropy(), &k, trials, s.seed()).map_err(err("certificate"))?;
    out.text("certificate.txt", &(report.summary_line() + "\n"))?;
    let g = kernel::gaussian_step_moments(s.entropy(), p, dt, a).map_err(err("moments"))?;
    let mean = k.mean_step();
    let cov = k.step_covariance();
    let mut summary = base_summary(s, "maxent-audit");
    for axis in 0..space.dim() {
        summary.metric(&format!("mean_step{axis}"), mean[axis]);
        summary.metric(&format!("gaussian_mean_step{axis}"), g.drift.component(axis)[source]);
        summary.metric(&format!("step_variance{axis}"), cov[axis][axis]);
        summary.metric(&format!("gaussian_step_variance{axis}"), g.cov_per_axis[axis]);
    }
    summary.metric("trials", trials as f64);
    summary.metric("skipped", report.skipped as f64);
    summary.check(Check::at_most(
        "gibbs_gap",
        report.max_gap,
        GIBBS_GAP_TOL,
        "largest objective gain of a constrained perturbation over the exact kernel",
    ));
    summary.check(Check::at_most(
        "skipped_trials",
        report.skipped as f64,
        (trials - 1) as f64,
        "perturbations that could not be projected onto the constraints",
    ));
    finish(&out, summary, start)
}
