//! Scenario execution and artifact emission.

use std::path::Path;
use std::time::Instant;

use entropic_core::ensemble::{self, Ensemble};
use entropic_core::fokker_planck::{self, MomentRow};
use entropic_core::manifold::{self, ManifoldState};
use entropic_core::metrics::{self, l1_distance, l2_distance};
use entropic_core::schrodinger::{self, WaveFunction};
use entropic_core::{ScalarField, VectorPotential};

use crate::error::{LabError, Result};
use crate::report::{snapshot_name, Artifacts, Check, Summary};
use crate::scenario::{Engine, Scenario};

/// Fraction of the explicit stability bound used for sub-stepping references.
const SUBSTEP_FRACTION: f64 = 0.9;

/// Snapshot bookkeeping shared by all engines.
struct Recorder<'a> {
    out: &'a Artifacts,
    times: Vec<Vec<f64>>,
    moments: Vec<MomentRow>,
    max_mass_error: f64,
}

impl<'a> Recorder<'a> {
    fn new(out: &'a Artifacts) -> Self {
        Self {
            out,
            times: Vec::new(),
            moments: Vec::new(),
            max_mass_error: 0.0,
        }
    }

    fn snapshot(&mut self, step: usize, t: f64, rho: &ScalarField, psi: Option<&WaveFunction>) -> Result<()> {
        let index = self.times.len();
        self.out.scalar(&snapshot_name("rho", index), rho)?;
        if let Some(w) = psi {
            self.out.complex(&snapshot_name("psi", index), w.psi())?;
        }
        self.times.push(vec![index as f64, step as f64, t]);
        let row = MomentRow::from_density(t, rho);
        self.max_mass_error = self.max_mass_error.max((row.mass - 1.0).abs());
        self.moments.push(row);
        Ok(())
    }

    fn finish(self) -> Result<f64> {
        self.out.table("times.csv", &["index", "step", "t"], &self.times)?;
        self.out.text("moments.csv", &fokker_planck::time_series_csv(&self.moments))?;
        Ok(self.max_mass_error)
    }
}

fn is_snapshot(n: usize, s: &Scenario) -> bool {
    n % s.stride() == 0 || n == s.steps()
}

/// Run the scenario's engine, writing into `root/<name>`.
pub fn run(s: &Scenario, root: &Path, command: &str) -> Result<Summary> {
    let start = Instant::now();
    let out = Artifacts::create(root.join(s.name()))?;
    out.text("scenario.toml", &s.echo())?;
    let snapshots = out.path("snapshots");
    std::fs::create_dir_all(&snapshots).map_err(|e| LabError::io(snapshots, e))?;
    let mut summary = Summary::new(command, s.name());
    summary.engine = Some(s.engine().name().into());
    summary.seed = Some(s.seed());
    summary.dt = Some(s.dt());
    summary.steps = Some(s.steps());
    summary.walkers = s.walkers().filter(|_| s.engine() == Engine::Ensemble);
    log::info!(
        "running `{}` with the {} engine: {} steps of dt = {:.6e}",
        s.name(),
        s.engine().name(),
        s.steps(),
        s.dt()
    );
    let mut rec = Recorder::new(&out);
    match s.engine() {
        Engine::Coupled => run_coupled(s, &mut rec, &mut summary)?,
        Engine::Schrodinger | Engine::Nonlinear => run_wave(s, &mut rec, &mut summary)?,
        Engine::FokkerPlanck => run_fokker_planck(s, &mut rec, &mut summary)?,
        Engine::Ensemble => run_ensemble(s, &mut rec, &mut summary, &out)?,
    }
    let mass_error = rec.finish()?;
    summary.metric("max_mass_error", mass_error);
    if let Some(tol) = s.checks().mass {
        summary.check(Check::at_most("mass", mass_error, tol, "largest |mass - 1| over the snapshots"));
    }
    summary.elapsed_seconds = start.elapsed().as_secs_f64();
    out.summary(&summary)?;
    for c in &summary.checks {
        log::info!("{}", c.line());
    }
    Ok(summary)
}

fn mid_potentials(s: &Scenario, n: usize) -> (ScalarField, Option<VectorPotential>) {
    let t = (n as f64 - 0.5) * s.dt();
    (s.potential_at(t), s.vector_potential_at(t))
}

/// Energy rows plus the static-potential drift check.
fn energy_checks(s: &Scenario, energies: &[Vec<f64>], out: &Artifacts, summary: &mut Summary) -> Result<()> {
    out.table("energy.csv", &["t", "total"], energies)?;
    let e0 = energies[0][1];
    let last = energies.last().unwrap()[1];
    let drift = energies
        .iter()
        .map(|r| (r[1] - e0).abs())
        .fold(0.0, f64::max)
        / e0.abs().max(f64::MIN_POSITIVE);
    summary.metric("energy_initial", e0);
    summary.metric("energy_final", last);
    summary.metric("energy_relative_drift", drift);
    if let Some(tol) = s.checks().energy_drift {
        let note = if s.is_static() {
            "max |E(t) - E(0)| / |E(0)| over the snapshots"
        } else {
            "max |E(t) - E(0)| / |E(0)|; potentials are time dependent"
        };
        summary.check(Check::at_most("energy_drift", drift, tol, note));
    }
    if let Some(c) = s.checks().energy {
        let err = (last - c.expected).abs() / c.expected.abs().max(f64::MIN_POSITIVE);
        summary.metric("energy_relative_error", err);
        summary.check(Check::at_most("energy", err, c.rel_tol, &format!("final energy vs expected {}", c.expected)));
    }
    Ok(())
}

fn reference_check(s: &Scenario, rows: &[Vec<f64>], what: &str, out: &Artifacts, summary: &mut Summary) -> Result<()> {
    if rows.is_empty() {
        return Ok(());
    }
    out.table("reference.csv", &["t", "rho_l2"], rows)?;
    let worst = rows.iter().map(|r| r[1]).fold(0.0, f64::max);
    summary.metric("reference_rho_l2", worst);
    if let Some(tol) = s.checks().reference_l2 {
        summary.check(Check::at_most("reference_l2", worst, tol, &format!("density L2 to {what}, worst snapshot")));
    }
    Ok(())
}

fn run_coupled(s: &Scenario, rec: &mut Recorder, summary: &mut Summary) -> Result<()> {
    let p = &s.params;
    let dt = s.dt();
    let with_reference = s.checks().reference_l2.is_some();
    let audit_rate = !s.is_static() || s.checks().energy_rate.is_some();
    let mut st = s.initial_state().clone();
    let mut w = schrodinger::to_wavefunction(&st);
    let potentials_at = |t: f64| (s.potential_at(t), s.vector_potential_at(t));
    let energy_of = |st: &ManifoldState| -> Result<f64> {
        let (v, a) = potentials_at(st.time());
        s.err_context(manifold::energy(st, p, &v, a.as_ref()), "energy").map(|e| e.total)
    };
    let mut energies = vec![vec![0.0, energy_of(&st)?]];
    let mut reference = Vec::new();
    rec.snapshot(0, 0.0, st.rho(), Some(&w))?;
    let mut window: Vec<(ManifoldState, (ScalarField, Option<VectorPotential>))> = vec![(st.clone(), potentials_at(0.0))];
    let mut audit = Vec::new();
    for n in 1..=s.steps() {
        let (v, a) = mid_potentials(s, n);
        st = s.err_context(manifold::coupled_step(&st, p, &v, dt, a.as_ref()), &format!("coupled step {n}"))?;
        if with_reference {
            w = s.err_context(schrodinger::nonlinear_step(&w, p, &v, dt, a.as_ref()), "reference step")?;
        }
        if audit_rate {
            window.push((st.clone(), potentials_at(st.time())));
            if window.len() == 3 {
                let (traj, pots): (Vec<_>, Vec<_>) = window.iter().cloned().unzip();
                let r = s.err_context(manifold::energy_rate_audit(&traj, p, &pots), "energy audit")?;
                audit.extend(r.rows.iter().map(|(t, e, num, imp)| vec![*t, *e, *num, *imp]));
                window.remove(0);
            }
        }
        if is_snapshot(n, s) {
            rec.snapshot(n, st.time(), st.rho(), Some(&schrodinger::to_wavefunction(&st)))?;
            energies.push(vec![st.time(), energy_of(&st)?]);
            if with_reference {
                let d = s.err_context(l2_distance(st.rho(), &w.density()), "reference distance")?;
                reference.push(vec![st.time(), d]);
            }
        }
    }
    energy_checks(s, &energies, rec.out, summary)?;
    let oracle = if p.is_linear() {
        "the unitary solver"
    } else {
        "the nonlinear wave-function solver"
    };
    reference_check(s, &reference, oracle, rec.out, summary)?;
    if !audit.is_empty() {
        rec.out.table("energy_audit.csv", &["t", "energy", "numeric_rate", "imposed_rate"], &audit)?;
        let duration = s.steps() as f64 * dt;
        let scale = audit.iter().map(|r| r[3].abs()).fold(energies[0][1].abs() / duration, f64::max);
        let mismatch = audit.iter().map(|r| (r[2] - r[3]).abs() / scale).fold(0.0, f64::max);
        summary.metric("energy_rate_mismatch", mismatch);
        if let Some(tol) = s.checks().energy_rate {
            summary.check(Check::at_most(
                "energy_rate",
                mismatch,
                tol,
                "max |dE/dt - imposed| / max(|imposed|, |E0|/T)",
            ));
        }
    }
    Ok(())
}

fn run_wave(s: &Scenario, rec: &mut Recorder, summary: &mut Summary) -> Result<()> {
    let p = &s.params;
    let dt = s.dt();
    let linear = s.engine() == Engine::Schrodinger;
    let with_reference = s.checks().reference_l2.is_some();
    let mut w = schrodinger::to_wavefunction(s.initial_state());
    let mut st = s.initial_state().clone();
    let energy_of = |w: &WaveFunction| -> Result<f64> {
        let (v, a) = (s.potential_at(w.time()), s.vector_potential_at(w.time()));
        if linear {
            s.err_context(schrodinger::energy_expectation(w, p, &v, a.as_ref()), "energy")
        } else {
            let st = s.err_context(schrodinger::from_wavefunction(w), "energy")?;
            s.err_context(manifold::energy(&st, p, &v, a.as_ref()), "energy").map(|e| e.total)
        }
    };
    let mut energies = vec![vec![0.0, energy_of(&w)?]];
    let mut reference = Vec::new();
    rec.snapshot(0, 0.0, &w.density(), Some(&w))?;
    for n in 1..=s.steps() {
        let (v, a) = mid_potentials(s, n);
        let next = if linear {
            schrodinger::unitary_step(&w, p, &v, dt, a.as_ref())
        } else {
            schrodinger::nonlinear_step(&w, p, &v, dt, a.as_ref())
        };
        w = s.err_context(next, &format!("step {n}"))?;
        if with_reference {
            st = s.err_context(manifold::coupled_step(&st, p, &v, dt, a.as_ref()), "reference step")?;
        }
        if is_snapshot(n, s) {
            let rho = w.density();
            rec.snapshot(n, w.time(), &rho, Some(&w))?;
            energies.push(vec![w.time(), energy_of(&w)?]);
            if with_reference {
                let d = s.err_context(l2_distance(&rho, st.rho()), "reference distance")?;
                reference.push(vec![w.time(), d]);
            }
        }
    }
    energy_checks(s, &energies, rec.out, summary)?;
    reference_check(s, &reference, "the coupled solver", rec.out, summary)
}

/// Advance `rho` by `dt` in explicit sub-steps below `dt_max`.
fn substep(
    rho: &ScalarField,
    dt: f64,
    dt_max: f64,
    step: impl Fn(&ScalarField, f64) -> entropic_core::Result<ScalarField>,
) -> entropic_core::Result<ScalarField> {
    let n = (dt / (SUBSTEP_FRACTION * dt_max)).ceil().max(1.0) as usize;
    let h = dt / n as f64;
    let mut r = rho.clone();
    for _ in 0..n {
        r = step(&r, h)?;
    }
    Ok(r)
}

fn run_fokker_planck(s: &Scenario, rec: &mut Recorder, summary: &mut Summary) -> Result<()> {
    let p = &s.params;
    let dt = s.dt();
    let entropy = s.entropy();
    let with_reference = s.checks().reference_l2.is_some();
    let mut rho = s.initial_state().rho().clone();
    let mut other = rho.clone();
    let mut reference = Vec::new();
    rec.snapshot(0, 0.0, &rho, None)?;
    for n in 1..=s.steps() {
        let (_, a) = mid_potentials(s, n);
        rho = s.err_context(fokker_planck::fp_step(&rho, entropy, p, dt, a.as_ref()), &format!("step {n}"))?;
        if with_reference {
            let bound = fokker_planck::continuity_dt_max(entropy, p, a.as_ref());
            other = s.err_context(
                substep(&other, dt, bound, |r, h| fokker_planck::continuity_step(r, entropy, p, h, a.as_ref())),
                "reference step",
            )?;
        }
        if is_snapshot(n, s) {
            let t = n as f64 * dt;
            rec.snapshot(n, t, &rho, None)?;
            if with_reference {
                reference.push(vec![t, s.err_context(l2_distance(&rho, &other), "reference distance")?]);
            }
        }
    }
    reference_check(s, &reference, "the continuity-form solver", rec.out, summary)
}

fn run_ensemble(s: &Scenario, rec: &mut Recorder, summary: &mut Summary, out: &Artifacts) -> Result<()> {
    let p = &s.params;
    let dt = s.dt();
    let entropy = s.entropy();
    let walkers = s.walkers().expect("validated");
    let mut e = s.err_context(Ensemble::sample(s.initial_state().rho(), walkers, dt, s.seed()), "sampling")?;
    let mut fp = s.initial_state().rho().clone();
    let with_reference = s.checks().ensemble_bound_factor.is_some();
    let mut rows = Vec::new();
    let mut previous = e.clone();
    rec.snapshot(0, 0.0, &ensemble::estimate_density(&e), None)?;
    for n in 1..=s.steps() {
        let (_, a) = mid_potentials(s, n);
        previous = e;
        e = s.err_context(ensemble::step_ensemble(&previous, entropy, p, a.as_ref()), &format!("step {n}"))?;
        if with_reference {
            let bound = fokker_planck::fp_dt_max(entropy, p, a.as_ref());
            fp = s.err_context(
                substep(&fp, dt, bound, |r, h| fokker_planck::fp_step(r, entropy, p, h, a.as_ref())),
                "reference step",
            )?;
        }
        if is_snapshot(n, s) {
            let hist = ensemble::estimate_density(&e);
            rec.snapshot(n, e.time(), &hist, None)?;
            if with_reference {
                let d = s.err_context(l1_distance(&hist, &fp), "reference distance")?;
                let bound = metrics::multinomial_l1_bound(walkers, metrics::occupied_cells(&hist));
                rows.push(vec![e.time(), d, bound]);
            }
        }
    }
    let dim = s.space.dim();
    let header: Vec<String> = (0..dim).map(|a| format!("x{a}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let samples: Vec<Vec<f64>> = e.positions().chunks(dim).map(<[f64]>::to_vec).collect();
    out.table("samples.csv", &header, &samples)?;
    let forward = s.err_context(ensemble::empirical_forward_drift(&previous, &e), "forward drift")?;
    let backward = s.err_context(ensemble::empirical_backward_drift(&previous, &e), "backward drift")?;
    out.text("drift_forward.csv", &forward.to_csv())?;
    out.text("drift_backward.csv", &backward.to_csv())?;
    if let (Some(factor), Some(last)) = (s.checks().ensemble_bound_factor, rows.last()) {
        out.table("reference.csv", &["t", "rho_l1", "multinomial_bound"], &rows)?;
        summary.metric("reference_rho_l1", last[1]);
        summary.metric("multinomial_bound", last[2]);
        summary.check(Check::at_most(
            "ensemble_vs_fokker_planck",
            last[1],
            factor * last[2],
            &format!("final histogram L1 to Fokker-Planck vs {factor} x multinomial bound from W and occupied cells"),
        ));
    }
    Ok(())
}
