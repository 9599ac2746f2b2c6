//! Exact maximum-entropy transition kernels on the grid.
//!
//! A kernel row for source `x` is
//! `P(x'|x) = exp[S(x') - alpha/2 · dl^2(x', x) - beta · dx^a A_a(x)] / zeta`,
//! with `dl^2 = gamma_ab dx^a dx^b` and `dx` the minimum-image displacement.
//! Rows are dense over the grid and truncated where the exponent falls
//! [`TRUNCATION`] log-units below its maximum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::calculus::gradient;
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField, VectorPotential};
use crate::grid::{Boundary, ConfigSpace};
use crate::params::PhysicalParams;

/// Exponent range kept in a kernel row.
pub const TRUNCATION: f64 = 45.0;

/// Probability allowed on the half-box shell before a periodic kernel counts as
/// wrapping around the box.
pub const LOCALIZATION_TOL: f64 = 1e-10;

const ALPHA_BRACKET: f64 = 10.0;
const ALPHA_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepDrive {
    /// Expected squared metric step `<dl^2>`; `alpha` is solved for.
    TargetStepSq(f64),
    Alpha(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConstraints {
    pub drive: StepDrive,
    /// Multiplier `beta` of the `<dx^a A_a> = C` constraint, when present.
    pub beta: Option<f64>,
}

impl StepConstraints {
    pub fn alpha(alpha: f64) -> Self {
        Self {
            drive: StepDrive::Alpha(alpha),
            beta: None,
        }
    }

    pub fn target(step_sq: f64) -> Self {
        Self {
            drive: StepDrive::TargetStepSq(step_sq),
            beta: None,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelDirection {
    /// `P(x'|x)`: distribution over destinations given the source.
    Forward,
    /// `P(x|x')`: distribution over sources given the destination.
    Reverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    space: ConfigSpace,
    anchor: usize,
    direction: KernelDirection,
    probs: Vec<f64>,
    log_zeta: f64,
    alpha: f64,
    beta: f64,
    potential_at_anchor: Option<Vec<f64>>,
}

impl TransitionKernel {
    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    /// Source cell of a forward row, destination cell of a reverse row.
    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn direction(&self) -> KernelDirection {
        self.direction
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `log zeta`, with `zeta = ∫ dx' exp[...]` on the grid.
    pub fn log_zeta(&self) -> f64 {
        self.log_zeta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn potential_at_anchor(&self) -> Option<&[f64]> {
        self.potential_at_anchor.as_deref()
    }

    /// Step `x' - x` associated with cell `j`.
    pub fn step(&self, j: usize) -> Vec<f64> {
        (0..self.space.dim())
            .map(|a| match self.direction {
                KernelDirection::Forward => self.space.cell_offset(a, self.anchor, j),
                KernelDirection::Reverse => self.space.cell_offset(a, j, self.anchor),
            })
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean_step(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.space.dim()];
        for (j, p) in self.support() {
            for (ma, da) in m.iter_mut().zip(self.step(j)) {
                *ma += p * da;
            }
        }
        m
    }

    /// Central second moments `<(dx^a - <dx^a>)(dx^b - <dx^b>)>`.
    pub fn step_covariance(&self) -> Vec<Vec<f64>> {
        let dim = self.space.dim();
        let mean = self.mean_step();
        let mut c = vec![vec![0.0; dim]; dim];
        for (j, p) in self.support() {
            let d = self.step(j);
            for a in 0..dim {
                for b in 0..dim {
                    c[a][b] += p * (d[a] - mean[a]) * (d[b] - mean[b]);
                }
            }
        }
        c
    }

    /// `<dl^2>` under this row.
    pub fn mean_step_sq(&self) -> f64 {
        self.support()
            .map(|(j, p)| p * self.space.metric_step_sq(&self.step(j)))
            .sum()
    }

    /// `<dx^a A_a(x)>`, the value `C` of the EM constraint.
    pub fn em_constraint(&self) -> Option<f64> {
        let a = self.potential_at_anchor.as_ref()?;
        Some(
            self.support()
                .map(|(j, p)| p * self.step(j).iter().zip(a).map(|(d, aa)| d * aa).sum::<f64>())
                .sum(),
        )
    }

    fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(j, p)| (j, *p))
    }

    /// CSV rows `destination,probability` over the support.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("destination,probability\n");
        for (j, p) in self.support() {
            out.push_str(&format!("{j},{p}\n"));
        }
        out
    }
}

/// Relative-entropy objective `-Σ P log(P / gamma^{1/2}) + Σ P S` of a row of
/// cell probabilities (converted to densities with the cell volume).
pub fn entropy_objective(space: &ConfigSpace, entropy: &ScalarField, probs: &[f64]) -> f64 {
    let reference = space.cell_volume() * space.metric_volume_factor();
    probs
        .iter()
        .zip(entropy.values())
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, s)| -p * (p / reference).ln() + p * s)
        .sum()
}

struct RowWeights {
    probs: Vec<f64>,
    log_zeta: f64,
}

fn exponents(
    space: &ConfigSpace,
    entropy: &[f64],
    source: usize,
    alpha: f64,
    em: Option<(f64, &[f64])>,
) -> Vec<f64> {
    let dim = space.dim();
    let mut dx = vec![0.0; dim];
    (0..space.len())
        .map(|j| {
            for (a, d) in dx.iter_mut().enumerate() {
                *d = space.cell_offset(a, source, j);
            }
            let mut e = entropy[j] - 0.5 * alpha * space.metric_step_sq(&dx);
            if let Some((beta, a_src)) = em {
                e -= beta * dx.iter().zip(a_src).map(|(d, a)| d * a).sum::<f64>();
            }
            e
        })
        .collect()
}

fn row_weights(
    space: &ConfigSpace,
    entropy: &[f64],
    source: usize,
    alpha: f64,
    em: Option<(f64, &[f64])>,
) -> RowWeights {
    let e = exponents(space, entropy, source, alpha, em);
    let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = e
        .iter()
        .map(|v| if *v < max - TRUNCATION { 0.0 } else { (v - max).exp() })
        .collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    RowWeights {
        probs,
        log_zeta: max + (total * space.cell_volume()).ln(),
    }
}

fn mean_step_sq_at(
    space: &ConfigSpace,
    entropy: &[f64],
    source: usize,
    alpha: f64,
    em: Option<(f64, &[f64])>,
) -> f64 {
    let w = row_weights(space, entropy, source, alpha, em);
    let dim = space.dim();
    let mut dx = vec![0.0; dim];
    w.probs
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(j, p)| {
            for (a, d) in dx.iter_mut().enumerate() {
                *d = space.cell_offset(a, source, j);
            }
            p * space.metric_step_sq(&dx)
        })
        .sum()
}

fn shell_mass(space: &ConfigSpace, source: usize, probs: &[f64]) -> f64 {
    if space.boundary() != Boundary::Periodic {
        return 0.0;
    }
    probs
        .iter()
        .enumerate()
        .filter(|(j, p)| {
            **p > 0.0
                && (0..space.dim()).any(|a| {
                    let h = space.spacing(a);
                    let reach = (space.points()[a] / 2) as f64 * h - h;
                    space.cell_offset(a, source, *j).abs() >= reach - 1e-9 * h
                })
        })
        .map(|(_, p)| p)
        .sum()
}

fn potential_at(a: Option<&VectorPotential>, cell: usize) -> Option<Vec<f64>> {
    a.map(|a| a.centered().at(cell))
}

fn check_inputs(entropy: &ScalarField, source: usize) -> Result<()> {
    if source >= entropy.space().len() {
        return Err(Error::Unsupported(format!("source index {source} out of range")));
    }
    if !entropy.is_finite() {
        return Err(Error::NonFinite {
            index: entropy.values().iter().position(|v| !v.is_finite()).unwrap_or(0),
        });
    }
    Ok(())
}

/// Build the exact kernel row for `source`.
pub fn build_exact_kernel(
    entropy: &ScalarField,
    source: usize,
    constraints: &StepConstraints,
    potential: Option<&VectorPotential>,
) -> Result<TransitionKernel> {
    check_inputs(entropy, source)?;
    let space = entropy.space();
    if let Some(a) = potential {
        space.require_same(a.space())?;
    }
    let beta = constraints.beta.unwrap_or(0.0);
    let a_src = if constraints.beta.is_some() {
        potential_at(potential, source).or_else(|| Some(vec![0.0; space.dim()]))
    } else {
        None
    };
    let em = a_src.as_deref().map(|a| (beta, a));
    let alpha = match constraints.drive {
        StepDrive::Alpha(alpha) => alpha,
        StepDrive::TargetStepSq(t) => solve_alpha_with(entropy, source, t, em)?,
    };
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidMultiplier(format!("alpha must be positive, got {alpha}")));
    }
    let w = row_weights(space, entropy.values(), source, alpha, em);
    let shell = shell_mass(space, source, &w.probs);
    if shell > LOCALIZATION_TOL {
        return Err(Error::KernelNotLocalized { alpha, mass: shell });
    }
    Ok(TransitionKernel {
        space: space.clone(),
        anchor: source,
        direction: KernelDirection::Forward,
        probs: w.probs,
        log_zeta: w.log_zeta,
        alpha,
        beta,
        potential_at_anchor: a_src,
    })
}

/// Solve `d log zeta / d alpha = -<dl^2>/2 = -target/2` for `alpha` by bisection
/// on `log alpha` over `[log(D/target) - 10, log(D/target) + 10]`.
pub fn solve_alpha(entropy: &ScalarField, source: usize, target_step_sq: f64) -> Result<f64> {
    solve_alpha_with(entropy, source, target_step_sq, None)
}

/// As [`solve_alpha`], including the EM term `beta · dx^a A_a(source)`.
pub fn solve_alpha_with(
    entropy: &ScalarField,
    source: usize,
    target_step_sq: f64,
    em: Option<(f64, &[f64])>,
) -> Result<f64> {
    check_inputs(entropy, source)?;
    let space = entropy.space();
    let floor = (0..space.dim())
        .map(|a| space.spacing(a).powi(2) / space.sigma_sq()[a])
        .fold(f64::INFINITY, f64::min);
    if !(target_step_sq.is_finite() && target_step_sq >= floor) {
        return Err(Error::StepBelowGridFloor {
            target: target_step_sq,
            floor,
        });
    }
    let center = (space.dim() as f64 / target_step_sq).ln();
    let moment = |log_alpha: f64| mean_step_sq_at(space, entropy.values(), source, log_alpha.exp(), em);
    let (mut lo, mut hi) = (center - ALPHA_BRACKET, center + ALPHA_BRACKET);
    let (m_lo, m_hi) = (moment(lo), moment(hi));
    // <dl^2> decreases with alpha
    if !(m_hi <= target_step_sq && target_step_sq <= m_lo) {
        return Err(Error::Unbracketable {
            target: target_step_sq,
            min: m_hi,
            max: m_lo,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let m = moment(mid);
        if ((m - target_step_sq) / target_step_sq).abs() < 1e-3 * ALPHA_REL_TOL {
            return Ok(mid.exp());
        }
        if m > target_step_sq {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// First and second moments of the short-step Gaussian limit.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMoments {
    /// Expected displacement `b dt` per cell.
    pub drift: VectorField,
    /// Fluctuation variance `(eta/m_a) dt` per axis.
    pub cov_per_axis: Vec<f64>,
}

/// Drift `(eta/m_a)(∂_a S - beta A_a) dt` and covariance `(eta/m_a) dt`.
pub fn gaussian_step_moments(
    entropy: &ScalarField,
    params: &PhysicalParams,
    dt: f64,
    potential: Option<&VectorPotential>,
) -> Result<StepMoments> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidTimeStep(dt));
    }
    let space = entropy.space();
    let grad = gradient(entropy);
    let a_c = potential.map(|a| a.centered());
    let components = (0..space.dim())
        .map(|axis| {
            let d = params.diffusion(axis) * dt;
            grad.component(axis)
                .iter()
                .enumerate()
                .map(|(k, g)| {
                    let a = a_c.as_ref().map_or(0.0, |a| a.component(axis)[k]);
                    d * (g - params.beta() * a)
                })
                .collect()
        })
        .collect();
    Ok(StepMoments {
        drift: VectorField::new(space.clone(), components)?,
        cov_per_axis: (0..space.dim()).map(|a| params.diffusion(a) * dt).collect(),
    })
}

/// Every forward row of the kernel, sharing one spatially constant `alpha`.
#[derive(Debug, Clone)]
pub struct ForwardOperator {
    rows: Vec<TransitionKernel>,
}

impl ForwardOperator {
    pub fn build(
        entropy: &ScalarField,
        alpha: f64,
        beta: Option<f64>,
        potential: Option<&VectorPotential>,
    ) -> Result<Self> {
        let constraints = StepConstraints {
            drive: StepDrive::Alpha(alpha),
            beta,
        };
        let rows = (0..entropy.space().len())
            .into_par_iter()
            .map(|src| build_exact_kernel(entropy, src, &constraints, potential))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    pub fn row(&self, source: usize) -> &TransitionKernel {
        &self.rows[source]
    }

    pub fn space(&self) -> &ConfigSpace {
        self.rows[0].space()
    }

    /// Chapman-Kolmogorov step `rho'(x') = Σ_x P(x'|x) rho(x)`.
    pub fn pushforward(&self, rho: &ScalarField) -> Result<ScalarField> {
        self.space().require_same(rho.space())?;
        let mut out = vec![0.0; rho.len()];
        for (src, row) in self.rows.iter().enumerate() {
            let w = rho[src];
            if w == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(&row.probs) {
                *o += w * p;
            }
        }
        ScalarField::new(self.space().clone(), out)
    }
}

/// Bayes reverse kernel `P(x|x') = rho(x) P(x'|x) / rho'(x')` for the fixed
/// destination `x'`, where `rho'` is the one-step pushforward of `rho`.
pub fn bayes_reverse_kernel(
    forward: &ForwardOperator,
    rho: &ScalarField,
    destination: usize,
) -> Result<TransitionKernel> {
    let space = forward.space();
    space.require_same(rho.space())?;
    let joint: Vec<f64> = forward
        .rows
        .iter()
        .enumerate()
        .map(|(src, row)| row.probs[destination] * rho[src])
        .collect();
    let pushed: f64 = joint.iter().sum();
    if !(pushed > 0.0) {
        return Err(Error::ZeroPushforward { index: destination });
    }
    let template = forward.row(destination);
    Ok(TransitionKernel {
        space: space.clone(),
        anchor: destination,
        direction: KernelDirection::Reverse,
        probs: joint.iter().map(|j| j / pushed).collect(),
        log_zeta: pushed.ln(),
        alpha: template.alpha,
        beta: template.beta,
        potential_at_anchor: None,
    })
}

/// Backward drift field `b*(x') = <x' - x>_{x'} / dt` from the reverse kernels.
pub fn reverse_drift(forward: &ForwardOperator, rho: &ScalarField, dt: f64) -> Result<VectorField> {
    let space = forward.space();
    let means = (0..space.len())
        .into_par_iter()
        .map(|d| bayes_reverse_kernel(forward, rho, d).map(|k| k.mean_step()))
        .collect::<Result<Vec<_>>>()?;
    let components = (0..space.dim())
        .map(|a| means.iter().map(|m| m[a] / dt).collect())
        .collect();
    VectorField::new(space.clone(), components)
}

/// Outcome of the Gibbs-inequality audit of a kernel row.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub trials: usize,
    pub skipped: usize,
    /// Largest `S[P~] - S[P]` over accepted trials (`-inf` if none).
    pub max_gap: f64,
    pub tolerance: f64,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.max_gap <= self.tolerance && self.skipped < self.trials
    }

    pub fn summary_line(&self) -> String {
        format!(
            "trials={} skipped={} max_gap={:.3e} tolerance={:.1e} status={}",
            self.trials,
            self.skipped,
            self.max_gap,
            self.tolerance,
            if self.passed() { "pass" } else { "fail" }
        )
    }
}

/// Tuning of the perturbation projector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateConfig {
    pub trials: usize,
    pub amplitude: f64,
    pub seed: u64,
    pub max_iterations: usize,
    pub constraint_tol: f64,
    pub gap_tol: f64,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            amplitude: 0.1,
            seed: 0,
            max_iterations: 50,
            constraint_tol: 1e-10,
            gap_tol: 1e-9,
        }
    }
}

/// Random constrained perturbations of `kernel`; none may raise the objective.
pub fn gibbs_optimality_certificate(
    entropy: &ScalarField,
    kernel: &TransitionKernel,
    trials: usize,
    seed: u64,
) -> Result<CertificateReport> {
    gibbs_optimality_certificate_with(
        entropy,
        kernel,
        &CertificateConfig {
            trials,
            seed,
            ..CertificateConfig::default()
        },
    )
}

pub fn gibbs_optimality_certificate_with(
    entropy: &ScalarField,
    kernel: &TransitionKernel,
    config: &CertificateConfig,
) -> Result<CertificateReport> {
    if kernel.direction != KernelDirection::Forward {
        return Err(Error::Unsupported("certificate needs a forward kernel".into()));
    }
    kernel.space.require_same(entropy.space())?;
    let base = entropy_objective(&kernel.space, entropy, &kernel.probs);
    let gaps: Vec<Option<f64>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(trial as u64);
            let candidate: Vec<f64> = kernel
                .probs
                .iter()
                .map(|p| {
                    if *p > 0.0 {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        p * (config.amplitude * g).exp()
                    } else {
                        0.0
                    }
                })
                .collect();
            project_onto_constraints(kernel, candidate, config)
                .map(|q| entropy_objective(&kernel.space, entropy, &q) - base)
        })
        .collect();
    let skipped = gaps.iter().filter(|g| g.is_none()).count();
    let max_gap = gaps.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CertificateReport {
        trials: config.trials,
        skipped,
        max_gap,
        tolerance: config.gap_tol,
    })
}

/// Restore normalization and the kernel's moment constraints on a candidate
/// row by alternating exponential tilts. `None` when the constraints cannot be
/// met within the iteration budget.
pub fn project_onto_constraints(
    kernel: &TransitionKernel,
    mut q: Vec<f64>,
    config: &CertificateConfig,
) -> Option<Vec<f64>> {
    let space = &kernel.space;
    let features = constraint_features(kernel);
    let targets: Vec<f64> = features
        .iter()
        .map(|f| kernel.probs.iter().zip(f).map(|(p, x)| p * x).sum())
        .collect();
    let scales: Vec<f64> = features
        .iter()
        .zip(&targets)
        .map(|(f, t)| {
            let rms = kernel.probs.iter().zip(f).map(|(p, x)| p * x * x).sum::<f64>().sqrt();
            t.abs().max(rms).max(f64::MIN_POSITIVE)
        })
        .collect();
    debug_assert_eq!(q.len(), space.len());
    normalize(&mut q)?;
    for _ in 0..config.max_iterations {
        let converged = features.iter().zip(&targets).zip(&scales).all(|((f, t), s)| {
            let m: f64 = q.iter().zip(f).map(|(p, x)| p * x).sum();
            ((m - t) / s).abs() < config.constraint_tol
        });
        if converged {
            return Some(q);
        }
        for (f, t) in features.iter().zip(&targets) {
            q = tilt_to_match(&q, f, *t)?;
        }
    }
    None
}

fn constraint_features(kernel: &TransitionKernel) -> Vec<Vec<f64>> {
    let space = &kernel.space;
    let mut out = vec![(0..space.len())
        .map(|j| space.metric_step_sq(&kernel.step(j)))
        .collect::<Vec<f64>>()];
    if let Some(a) = &kernel.potential_at_anchor {
        out.push(
            (0..space.len())
                .map(|j| kernel.step(j).iter().zip(a).map(|(d, aa)| d * aa).sum())
                .collect(),
        );
    }
    out
}

fn normalize(q: &mut [f64]) -> Option<()> {
    let total: f64 = q.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    for v in q.iter_mut() {
        *v /= total;
    }
    Some(())
}

/// Find `lambda` with `<f>_{q exp(-lambda f)} = target`; returns the tilted, normalized row.
fn tilt_to_match(q: &[f64], feature: &[f64], target: f64) -> Option<Vec<f64>> {
    let support: Vec<(f64, f64)> = q
        .iter()
        .zip(feature)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, f)| (p.ln(), *f))
        .collect();
    let (fmin, fmax) = support
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, f)| (lo.min(*f), hi.max(*f)));
    if !(fmin < target && target < fmax) {
        return None;
    }
    let moments = |lambda: f64| {
        let max = support
            .iter()
            .map(|(lp, f)| lp - lambda * f)
            .fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (lp, f) in &support {
            let w = (lp - lambda * f - max).exp();
            z += w;
            m1 += w * f;
            m2 += w * f * f;
        }
        let mean = m1 / z;
        (mean, (m2 / z - mean * mean).max(0.0))
    };
    // the tilted mean decreases monotonically in lambda
    let (mut lo, mut hi) = (-1.0, 1.0);
    while moments(lo).0 < target {
        lo *= 2.0;
        if lo < -1e12 {
            return None;
        }
    }
    while moments(hi).0 > target {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    let mut lambda = 0.0f64.clamp(lo, hi);
    for _ in 0..200 {
        let (mean, var) = moments(lambda);
        let err = mean - target;
        if err.abs() <= 1e-15 * target.abs().max(fmax - fmin) {
            break;
        }
        if err > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let newton = if var > 0.0 { lambda + err / var } else { f64::NAN };
        lambda = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-16 * lambda.abs().max(1.0) {
            break;
        }
    }
    let mut out: Vec<f64> = q
        .iter()
        .zip(feature)
        .map(|(p, f)| if *p > 0.0 { p.ln() - lambda * f } else { f64::NEG_INFINITY })
        .collect();
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for v in out.iter_mut() {
        *v = if v.is_finite() { (*v - max).exp() } else { 0.0 };
    }
    normalize(&mut out)?;
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;

    fn line(n: usize, l: f64) -> ConfigSpace {
        ConfigSpace::line(l, n, Boundary::Periodic).unwrap()
    }

    #[test]
    fn uniform_entropy_gives_centered_gaussian() {
        let space = line(128, 128.0);
        let s = ScalarField::constant(&space, 0.3);
        let alpha = 1.0 / 9.0; // std 3 cells
        let k = build_exact_kernel(&s, 40, &StepConstraints::alpha(alpha), None).unwrap();
        assert!((k.total() - 1.0).abs() < 1e-12);
        assert!(k.mean_step()[0].abs() < 1e-12);
        // discrete Gaussian variance equals the continuum one to exp(-2 pi^2 * 9)
        assert!((k.step_covariance()[0][0] - 9.0).abs() < 1e-10);
        for j in 0..128 {
            let d = space.cell_offset(0, 40, j);
            let want = (-0.5 * alpha * d * d).exp() / (2.0 * std::f64::consts::PI * 9.0).sqrt();
            if (0.5 * alpha * d * d) < TRUNCATION {
                assert!((k.probs()[j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_entropy_shifts_mean_by_drift() {
        let space = line(256, 256.0);
        let slope = 0.05;
        // linear S with a wrap far from the source; only the local slope matters
        let s = ScalarField::from_fn(&space, |x| slope * x[0]);
        let src = 128;
        for std in [1.0f64, 2.0, 4.0] {
            let alpha = 1.0 / (std * std);
            let k = build_exact_kernel(&s, src, &StepConstraints::alpha(alpha), None).unwrap();
            let want = slope / alpha;
            assert!((k.mean_step()[0] - want).abs() < 0.02 * want, "std {std}");
        }
    }

    #[test]
    fn constant_potential_shifts_mean_against_a() {
        let space = line(128, 64.0);
        let s = ScalarField::zeros(&space);
        let a = VectorPotential::constant(&space, &[0.4]).unwrap();
        let alpha = 2.0;
        let beta = 0.5;
        let k = build_exact_kernel(&s, 10, &StepConstraints::alpha(alpha).with_beta(beta), Some(&a))
            .unwrap();
        let want = -(1.0 / alpha) * beta * 0.4;
        assert!((k.mean_step()[0] - want).abs() < 1e-3 * want.abs());
        assert!((k.em_constraint().unwrap() - want * 0.4).abs() < 1e-3 * (want * 0.4).abs());
    }

    #[test]
    fn broad_kernel_is_not_localized() {
        let space = line(32, 32.0);
        let s = ScalarField::zeros(&space);
        let err = build_exact_kernel(&s, 0, &StepConstraints::alpha(0.01), None).unwrap_err();
        assert!(matches!(err, Error::KernelNotLocalized { .. }));
    }

    #[test]
    fn solve_alpha_hits_target_and_scales() {
        let space = line(256, 256.0);
        let s = ScalarField::from_fn(&space, |x| 0.5 * (x[0] / 40.0).sin());
        let src = 100;
        let t = 16.0;
        let alpha = solve_alpha(&s, src, t).unwrap();
        let k = build_exact_kernel(&s, src, &StepConstraints::alpha(alpha), None).unwrap();
        assert!(((k.mean_step_sq() - t) / t).abs() < 1e-8);
        assert!((alpha - 1.0 / t).abs() < 0.02 / t);
        let alpha2 = solve_alpha(&s, src, 2.0 * t).unwrap();
        assert!((alpha / alpha2 - 2.0).abs() < 0.04);
        let via_target = build_exact_kernel(&s, src, &StepConstraints::target(t), None).unwrap();
        assert!((via_target.alpha() - alpha).abs() < 1e-12 * alpha);
    }

    #[test]
    fn solve_alpha_rejects_degenerate_targets() {
        let space = line(64, 64.0);
        let s = ScalarField::zeros(&space);
        assert!(matches!(solve_alpha(&s, 0, 0.5), Err(Error::StepBelowGridFloor { .. })));
        assert!(matches!(solve_alpha(&s, 0, 1e6), Err(Error::Unbracketable { .. })));
    }

    #[test]
    fn step_sq_decreases_with_alpha() {
        let space = ConfigSpace::new(vec![48.0, 48.0], vec![48, 48], Boundary::Periodic, vec![1.0, 1.0])
            .unwrap();
        let s = ScalarField::from_fn(&space, |x| 0.2 * (x[0] / 7.0).cos() + 0.1 * x[1] / 48.0);
        let mut last = f64::INFINITY;
        for alpha in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let k = build_exact_kernel(&s, 300, &StepConstraints::alpha(alpha), None).unwrap();
            assert!((k.total() - 1.0).abs() < 1e-12);
            let m = k.mean_step_sq();
            assert!(m < last);
            last = m;
        }
    }

    #[test]
    fn gaussian_moments_closed_forms() {
        let space = line(64, 8.0);
        let p = PhysicalParams::simple(&space, 1.0, 1.0, 1.0).unwrap();
        let m = gaussian_step_moments(&ScalarField::zeros(&space), &p, 0.1, None).unwrap();
        assert!(m.drift.component(0).iter().all(|v| *v == 0.0));
        assert!((m.cov_per_axis[0] - 0.1).abs() < 1e-15);
        let k = 0.7;
        let m = gaussian_step_moments(&ScalarField::from_fn(&space, |x| k * x[0]), &p, 0.1, None)
            .unwrap();
        for j in 1..63 {
            assert!((m.drift.component(0)[j] - 0.1 * k).abs() < 1e-12);
        }
        assert!(gaussian_step_moments(&ScalarField::zeros(&space), &p, 0.0, None).is_err());
    }

    #[test]
    fn reverse_kernel_of_uniform_density_is_reflected_forward() {
        let space = line(64, 64.0);
        let s = ScalarField::zeros(&space);
        let op = ForwardOperator::build(&s, 0.25, None, None).unwrap();
        let rho = ScalarField::constant(&space, 1.0 / 64.0);
        let rev = bayes_reverse_kernel(&op, &rho, 20).unwrap();
        let fwd = op.row(20);
        assert!((rev.total() - 1.0).abs() < 1e-12);
        for j in 0..64 {
            // P(x|x') at x = x' + d equals P(x'+d | x') by symmetry
            assert!((rev.probs()[j] - fwd.probs()[j]).abs() < 1e-15);
        }
        assert!((rev.mean_step()[0] + fwd.mean_step()[0]).abs() < 1e-12);
    }

    #[test]
    fn reverse_kernel_joint_consistency() {
        let space = line(48, 48.0);
        let s = ScalarField::from_fn(&space, |x| 0.3 * (x[0] * 0.2).sin());
        let op = ForwardOperator::build(&s, 0.3, None, None).unwrap();
        let rho = crate::calculus::normalize_density(&ScalarField::from_fn(&space, |x| {
            (-(x[0] - 2.0).powi(2) / 30.0).exp()
        }))
        .unwrap();
        let pushed = op.pushforward(&rho).unwrap();
        assert!((pushed.integral() - 1.0).abs() < 1e-12);
        for d in [0usize, 10, 24, 40] {
            let rev = bayes_reverse_kernel(&op, &rho, d).unwrap();
            assert!((rev.total() - 1.0).abs() < 1e-12);
            for x in 0..48 {
                let lhs = op.row(x).probs()[d] * rho[x];
                let rhs = rev.probs()[x] * pushed[d];
                assert!((lhs - rhs).abs() < 1e-14 * pushed[d].max(1e-300) + 1e-300);
            }
        }
    }

    #[test]
    fn zero_pushforward_is_an_error() {
        let space = line(64, 64.0);
        let s = ScalarField::zeros(&space);
        let op = ForwardOperator::build(&s, 4.0, None, None).unwrap();
        let mut v = vec![0.0; 64];
        v[0] = 1.0;
        let rho = ScalarField::new(space, v).unwrap();
        assert!(matches!(
            bayes_reverse_kernel(&op, &rho, 32),
            Err(Error::ZeroPushforward { index: 32 })
        ));
    }

    #[test]
    fn identity_perturbation_has_zero_gap() {
        let space = line(96, 96.0);
        let s = ScalarField::from_fn(&space, |x| 0.4 * (x[0] / 9.0).sin());
        let k = build_exact_kernel(&s, 30, &StepConstraints::alpha(0.2), None).unwrap();
        let cfg = CertificateConfig {
            trials: 4,
            amplitude: 0.0,
            ..CertificateConfig::default()
        };
        let r = gibbs_optimality_certificate_with(&s, &k, &cfg).unwrap();
        assert_eq!(r.skipped, 0);
        assert!(r.max_gap.abs() < 1e-14, "{}", r.max_gap);
        assert_eq!(
            entropy_objective(&space, &s, k.probs()) - entropy_objective(&space, &s, k.probs()),
            0.0
        );
    }

    #[test]
    fn unprojected_perturbation_can_beat_the_kernel_but_is_not_counted() {
        let space = line(96, 96.0);
        let s = ScalarField::zeros(&space);
        let k = build_exact_kernel(&s, 48, &StepConstraints::alpha(0.5), None).unwrap();
        // widen the row: raises entropy but violates <dl^2>
        let mut wide: Vec<f64> = k.probs().iter().map(|p| p.powf(0.8)).collect();
        let total: f64 = wide.iter().sum();
        wide.iter_mut().for_each(|p| *p /= total);
        let base = entropy_objective(&space, &s, k.probs());
        assert!(entropy_objective(&space, &s, &wide) > base);
        let projected = project_onto_constraints(&k, wide, &CertificateConfig::default()).unwrap();
        assert!(entropy_objective(&space, &s, &projected) - base <= 1e-9);
        // a candidate concentrated on the source cannot reach <dl^2> > 0
        let mut point = vec![0.0; 96];
        point[48] = 1.0;
        assert!(project_onto_constraints(&k, point, &CertificateConfig::default()).is_none());
    }

    #[test]
    fn certificate_passes_with_em_constraint() {
        let space = line(96, 96.0);
        let s = ScalarField::from_fn(&space, |x| 0.3 * (x[0] / 11.0).cos());
        let a = VectorPotential::from_fn(&space, |x, _| 0.2 + 0.05 * x[0] / 48.0);
        let k = build_exact_kernel(&s, 50, &StepConstraints::alpha(0.3).with_beta(0.7), Some(&a))
            .unwrap();
        let r = gibbs_optimality_certificate(&s, &k, 200, 7).unwrap();
        assert!(r.passed(), "{}", r.summary_line());
        assert_eq!(r.skipped, 0);
    }
}
