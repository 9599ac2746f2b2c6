//! Declarative scenario files (TOML) and their validation.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use entropic_core::manifold::{self, ManifoldState};
use entropic_core::{fokker_planck, states};
use entropic_core::{Boundary, ConfigSpace, PhysicalParams, ScalarField, VectorField, VectorPotential};
use serde::{Deserialize, Serialize};

use crate::error::{Context, LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Ensemble,
    FokkerPlanck,
    Coupled,
    Schrodinger,
    Nonlinear,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Ensemble => "ensemble",
            Engine::FokkerPlanck => "fokker-planck",
            Engine::Coupled => "coupled",
            Engine::Schrodinger => "schrodinger",
            Engine::Nonlinear => "nonlinear",
        }
    }

    /// Engines that evolve a phase alongside the density.
    pub fn has_phase(self) -> bool {
        matches!(self, Engine::Coupled | Engine::Schrodinger | Engine::Nonlinear)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryConfig {
    #[default]
    Periodic,
    Reflecting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub extents: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<usize>>,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_sq: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub particle_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub mu_over_m: f64,
    #[serde(default = "one")]
    pub eta: f64,
    #[serde(default)]
    pub beta: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self {
            masses: None,
            mu_over_m: 1.0,
            eta: 1.0,
            beta: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Gaussian {
        #[serde(skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        /// Standard deviation per axis.
        #[serde(skip_serializing_if = "Option::is_none")]
        width: Option<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        momentum: Option<Vec<f64>>,
    },
    PlaneWave {
        wavenumber: Vec<f64>,
    },
    Uniform,
    /// Ground state of the grid Hamiltonian with the static potential.
    GroundState,
    File {
        rho: PathBuf,
        #[serde(skip_serializing_if = "Option::is_none")]
        phi: Option<PathBuf>,
    },
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Gaussian {
            center: None,
            width: None,
            momentum: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    #[default]
    None,
    Harmonic {
        omega: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    Linear {
        slope: Vec<f64>,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorPotentialConfig {
    #[default]
    None,
    Constant {
        value: Vec<f64>,
    },
    PureGauge {
        chi: String,
    },
    File {
        path: PathBuf,
    },
}

/// Entropy field driving the ensemble and Fokker-Planck engines.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EntropyConfig {
    #[default]
    Zero,
    Linear {
        slope: Vec<f64>,
    },
    /// `amplitude · Σ_a sin(2π (x_a - lower_a) / L_a)`.
    Sine {
        amplitude: f64,
    },
    /// `curvature · Σ_a x_a² / 2`.
    Quadratic {
        curvature: f64,
    },
    /// `phi + log(rho)/2` of the initial state.
    FromInitial,
    File {
        path: PathBuf,
    },
}

/// Linear ramps `V(t) = (1 + v_ramp t) V`, `A(t) = (1 + a_ramp t) A`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeDependence {
    #[serde(default)]
    pub v_ramp: f64,
    #[serde(default)]
    pub a_ramp: f64,
}

impl TimeDependence {
    pub fn is_static(&self) -> bool {
        self.v_ramp == 0.0 && self.a_ramp == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub engine: Engine,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub walkers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyCheck {
    pub expected: f64,
    pub rel_tol: f64,
}

/// Declared checks; a run exits 0 iff all of them pass.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    /// Largest `|mass - 1|` over the snapshots.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    /// Largest relative energy drift over the run (static potentials).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_drift: Option<f64>,
    /// Mismatch of the energy-rate audit (time-dependent potentials).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_rate: Option<f64>,
    /// Final energy against a known value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyCheck>,
    /// Density L2 distance to the reference solver at every snapshot.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_l2: Option<f64>,
    /// Ensemble runs: density L1 to Fokker-Planck over the multinomial bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble_bound_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub space: SpaceConfig,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub vector_potential: VectorPotentialConfig,
    #[serde(default)]
    pub entropy: EntropyConfig,
    #[serde(default, skip_serializing_if = "TimeDependence::is_static")]
    pub time_dependence: TimeDependence,
    pub run: RunConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
}

fn one() -> f64 {
    1.0
}

fn default_steps() -> usize {
    1000
}

fn default_name() -> String {
    "scenario".into()
}

pub const DEFAULT_POINTS: usize = 256;
/// Fraction of the stability bound used when `run.dt` is omitted.
pub const DEFAULT_DT_FRACTION: f64 = 0.5;
pub const DEFAULT_SNAPSHOTS: usize = 10;

/// Gauge function given as `sin:<amplitude>`, `quad:<coefficient>` or `file:<path>`.
#[derive(Debug, Clone, PartialEq)]
pub enum ChiSpec {
    /// `a · Σ_a sin(2π (x_a - lower_a) / L_a)`.
    Sine(f64),
    /// `c · Σ_a x_a²`.
    Quadratic(f64),
    File(PathBuf),
}

impl FromStr for ChiSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| format!("expected `sin:<a>`, `quad:<c>` or `file:<path>`, got `{s}`"))?;
        let number = || arg.parse::<f64>().map_err(|e| format!("`{arg}`: {e}"));
        match kind {
            "sin" => Ok(ChiSpec::Sine(number()?)),
            "quad" => Ok(ChiSpec::Quadratic(number()?)),
            "file" => Ok(ChiSpec::File(PathBuf::from(arg))),
            other => Err(format!("unknown gauge function kind `{other}`")),
        }
    }
}

impl ChiSpec {
    pub fn build(&self, space: &ConfigSpace, base_dir: &Path, field: &str) -> Result<ScalarField> {
        Ok(match self {
            ChiSpec::Sine(a) => ScalarField::from_fn(space, |x| {
                (0..x.len())
                    .map(|k| {
                        let u = (x[k] - space.lower()[k]) / space.extent(k);
                        a * (2.0 * std::f64::consts::PI * u).sin()
                    })
                    .sum()
            }),
            ChiSpec::Quadratic(c) => ScalarField::from_fn(space, |x| c * x.iter().map(|v| v * v).sum::<f64>()),
            ChiSpec::File(p) => read_scalar(space, &base_dir.join(p), field)?,
        })
    }
}

/// A validated scenario with every default resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Configuration as it will be echoed: defaults filled in.
    pub config: ScenarioConfig,
    pub space: ConfigSpace,
    pub params: PhysicalParams,
    pub base_dir: PathBuf,
    initial: ManifoldState,
    v0: ScalarField,
    a0: Option<VectorPotential>,
    entropy: ScalarField,
}

/// Read and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let config: ScenarioConfig = toml::from_str(&text).map_err(|e| LabError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let s = resolve(config, &base)?;
    log::info!("resolved scenario `{}`:\n{}", s.config.name, s.echo());
    Ok(s)
}

/// Parse scenario text; relative file references resolve against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<Scenario> {
    let config: ScenarioConfig = toml::from_str(text).map_err(|e| LabError::Parse {
        path: PathBuf::from("<inline>"),
        message: e.to_string(),
    })?;
    resolve(config, base_dir)
}

fn check_len<T>(field: &str, v: &[T], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(LabError::invalid(field, format!("expected {dim} entries, got {}", v.len())));
    }
    Ok(())
}

fn check_positive(field: &str, v: &[f64]) -> Result<()> {
    match v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        Some(x) => Err(LabError::invalid(field, format!("must be positive, got {x}"))),
        None => Ok(()),
    }
}

fn check_finite(field: &str, v: &[f64]) -> Result<()> {
    match v.iter().find(|x| !x.is_finite()) {
        Some(x) => Err(LabError::invalid(field, format!("must be finite, got {x}"))),
        None => Ok(()),
    }
}

fn read_scalar(space: &ConfigSpace, path: &Path, field: &str) -> Result<ScalarField> {
    if !path.exists() {
        return Err(LabError::invalid(field, format!("file {} does not exist", path.display())));
    }
    let f = ScalarField::read_csv(path).map_err(|e| LabError::invalid(field, e.to_string()))?;
    space
        .require_same(f.space())
        .map_err(|_| LabError::invalid(field, "grid does not match `space`"))?;
    Ok(f)
}

fn build_space(c: &mut SpaceConfig) -> Result<ConfigSpace> {
    let dim = c.extents.len();
    if dim == 0 || dim > entropic_core::grid::MAX_DIM {
        return Err(LabError::invalid("space.extents", format!("need 1 to 3 axes, got {dim}")));
    }
    check_positive("space.extents", &c.extents)?;
    let points = c.points.get_or_insert_with(|| vec![DEFAULT_POINTS; dim]).clone();
    check_len("space.points", &points, dim)?;
    if let Some(n) = points.iter().find(|n| **n < 3) {
        return Err(LabError::invalid("space.points", format!("need at least 3 points per axis, got {n}")));
    }
    let sigma_sq = c.sigma_sq.get_or_insert_with(|| vec![1.0; dim]).clone();
    check_len("space.sigma_sq", &sigma_sq, dim)?;
    check_positive("space.sigma_sq", &sigma_sq)?;
    let lower = c
        .lower
        .get_or_insert_with(|| c.extents.iter().map(|l| -0.5 * l).collect())
        .clone();
    check_len("space.lower", &lower, dim)?;
    check_finite("space.lower", &lower)?;
    let particle_dim = *c.particle_dim.get_or_insert(dim);
    let boundary = match c.boundary {
        BoundaryConfig::Periodic => Boundary::Periodic,
        BoundaryConfig::Reflecting => Boundary::Reflecting,
    };
    ConfigSpace::with_layout(c.extents.clone(), points, lower, boundary, sigma_sq, particle_dim)
        .map_err(|e| LabError::invalid("space", e.to_string()))
}

fn build_params(c: &mut ParamsConfig, space: &ConfigSpace) -> Result<PhysicalParams> {
    let masses = c.masses.get_or_insert_with(|| vec![1.0; space.particles()]).clone();
    check_len("params.masses", &masses, space.particles())?;
    check_positive("params.masses", &masses)?;
    if !(c.mu_over_m.is_finite() && c.mu_over_m >= 0.0) {
        return Err(LabError::invalid("params.mu_over_m", format!("must be non-negative, got {}", c.mu_over_m)));
    }
    check_positive("params.eta", &[c.eta])?;
    check_finite("params.beta", &[c.beta])?;
    PhysicalParams::from_masses(space, &masses, c.mu_over_m, c.eta, c.beta).map_err(|e| match e {
        entropic_core::Error::InvalidParams { field, reason } => LabError::invalid(format!("params.{field}"), reason),
        other => LabError::invalid("params", other.to_string()),
    })
}

fn build_potential(c: &mut PotentialConfig, space: &ConfigSpace, params: &PhysicalParams, base: &Path) -> Result<ScalarField> {
    let dim = space.dim();
    Ok(match c {
        PotentialConfig::None => ScalarField::zeros(space),
        PotentialConfig::Harmonic { omega, center } => {
            check_positive("potential.omega", &[*omega])?;
            let center = center.get_or_insert_with(|| vec![0.0; dim]);
            check_len("potential.center", center, dim)?;
            check_finite("potential.center", center)?;
            states::harmonic_potential(space, params, *omega, center)
        }
        PotentialConfig::Linear { slope } => {
            check_len("potential.slope", slope, dim)?;
            check_finite("potential.slope", slope)?;
            states::linear_potential(space, slope)
        }
        PotentialConfig::File { path } => read_scalar(space, &base.join(path), "potential.path")?,
    })
}

fn build_vector_potential(c: &VectorPotentialConfig, space: &ConfigSpace, base: &Path) -> Result<Option<VectorPotential>> {
    Ok(match c {
        VectorPotentialConfig::None => None,
        VectorPotentialConfig::Constant { value } => {
            check_len("vector_potential.value", value, space.dim())?;
            check_finite("vector_potential.value", value)?;
            Some(VectorPotential::constant(space, value).map_err(|e| LabError::invalid("vector_potential.value", e.to_string()))?)
        }
        VectorPotentialConfig::PureGauge { chi } => {
            let spec: ChiSpec = chi.parse().map_err(|e| LabError::invalid("vector_potential.chi", e))?;
            Some(VectorPotential::pure_gauge(&spec.build(space, base, "vector_potential.chi")?))
        }
        VectorPotentialConfig::File { path } => {
            let path = base.join(path);
            if !path.exists() {
                return Err(LabError::invalid("vector_potential.path", format!("file {} does not exist", path.display())));
            }
            let links = VectorField::read_csv(&path).map_err(|e| LabError::invalid("vector_potential.path", e.to_string()))?;
            space
                .require_same(links.space())
                .map_err(|_| LabError::invalid("vector_potential.path", "grid does not match `space`"))?;
            Some(VectorPotential::from_links(links))
        }
    })
}

fn build_initial(
    c: &mut InitialConfig,
    space: &ConfigSpace,
    params: &PhysicalParams,
    v0: &ScalarField,
    base: &Path,
) -> Result<ManifoldState> {
    let dim = space.dim();
    match c {
        InitialConfig::Gaussian { center, width, momentum } => {
            let center = center.get_or_insert_with(|| vec![0.0; dim]).clone();
            let width = width.get_or_insert_with(|| vec![1.0; dim]).clone();
            let momentum = momentum.get_or_insert_with(|| vec![0.0; dim]).clone();
            check_len("initial.center", &center, dim)?;
            check_finite("initial.center", &center)?;
            check_len("initial.width", &width, dim)?;
            check_positive("initial.width", &width)?;
            check_len("initial.momentum", &momentum, dim)?;
            check_finite("initial.momentum", &momentum)?;
            let var: Vec<f64> = width.iter().map(|w| w * w).collect();
            states::gaussian_packet(space, &center, &var, &momentum, params.eta())
                .map_err(|e| LabError::invalid("initial", e.to_string()))
        }
        InitialConfig::PlaneWave { wavenumber } => {
            check_len("initial.wavenumber", wavenumber, dim)?;
            check_finite("initial.wavenumber", wavenumber)?;
            states::plane_wave(space, wavenumber).map_err(|e| LabError::invalid("initial", e.to_string()))
        }
        InitialConfig::Uniform => states::uniform_state(space).map_err(|e| LabError::invalid("initial", e.to_string())),
        InitialConfig::GroundState => states::discrete_ground_state(space, params, v0)
            .map(|(s, _)| s)
            .map_err(|e| LabError::invalid("initial", e.to_string())),
        InitialConfig::File { rho, phi } => {
            let rho = read_scalar(space, &base.join(rho), "initial.rho")?;
            let phi = match phi {
                Some(p) => read_scalar(space, &base.join(p), "initial.phi")?,
                None => ScalarField::zeros(space),
            };
            ManifoldState::normalized(rho, phi, 0.0).map_err(|e| LabError::invalid("initial.rho", e.to_string()))
        }
    }
}

fn build_entropy(c: &EntropyConfig, space: &ConfigSpace, initial: &ManifoldState, base: &Path) -> Result<ScalarField> {
    let dim = space.dim();
    Ok(match c {
        EntropyConfig::Zero => ScalarField::zeros(space),
        EntropyConfig::Linear { slope } => {
            check_len("entropy.slope", slope, dim)?;
            check_finite("entropy.slope", slope)?;
            ScalarField::from_fn(space, |x| x.iter().zip(slope.iter()).map(|(x, s)| x * s).sum())
        }
        EntropyConfig::Sine { amplitude } => {
            check_finite("entropy.amplitude", &[*amplitude])?;
            ChiSpec::Sine(*amplitude).build(space, base, "entropy")?
        }
        EntropyConfig::Quadratic { curvature } => {
            check_finite("entropy.curvature", &[*curvature])?;
            ChiSpec::Quadratic(0.5 * curvature).build(space, base, "entropy")?
        }
        EntropyConfig::FromInitial => initial.entropy(),
        EntropyConfig::File { path } => read_scalar(space, &base.join(path), "entropy.path")?,
    })
}

fn check_tolerance(field: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(t) if !(t.is_finite() && t > 0.0) => Err(LabError::invalid(field, format!("must be positive, got {t}"))),
        _ => Ok(()),
    }
}

fn resolve(mut config: ScenarioConfig, base: &Path) -> Result<Scenario> {
    let space = build_space(&mut config.space)?;
    let params = build_params(&mut config.params, &space)?;
    let v0 = build_potential(&mut config.potential, &space, &params, base)?;
    let a0 = build_vector_potential(&config.vector_potential, &space, base)?;
    let initial = build_initial(&mut config.initial, &space, &params, &v0, base)?;
    let entropy = build_entropy(&config.entropy, &space, &initial, base)?;
    check_finite("time_dependence.v_ramp", &[config.time_dependence.v_ramp])?;
    check_finite("time_dependence.a_ramp", &[config.time_dependence.a_ramp])?;

    let run = &mut config.run;
    let engine = run.engine;
    if run.steps == 0 {
        return Err(LabError::invalid("run.steps", "must be positive"));
    }
    match run.stride {
        Some(0) => return Err(LabError::invalid("run.stride", "must be positive")),
        None => run.stride = Some((run.steps / DEFAULT_SNAPSHOTS).max(1)),
        _ => {}
    }
    match (engine, run.walkers) {
        (Engine::Ensemble, None) => return Err(LabError::invalid("run.walkers", "required by the ensemble engine")),
        (_, Some(0)) => return Err(LabError::invalid("run.walkers", "must be positive")),
        _ => {}
    }
    let dt_max = match engine {
        Engine::Ensemble | Engine::FokkerPlanck => fokker_planck::fp_dt_max(&entropy, &params, a0.as_ref()),
        _ => manifold::coupled_dt_max(&initial, &params, a0.as_ref()),
    };
    match run.dt {
        Some(dt) if !(dt.is_finite() && dt > 0.0) => {
            return Err(LabError::invalid("run.dt", format!("must be positive, got {dt}")));
        }
        // The wave-function solvers are implicit; the bound only applies to the explicit engines.
        Some(dt) if matches!(engine, Engine::Coupled | Engine::FokkerPlanck) && dt > dt_max => {
            return Err(LabError::invalid(
                "run.dt",
                format!("{dt} exceeds the stability bound {dt_max:.6e} for the {} engine", engine.name()),
            ));
        }
        Some(_) => {}
        None => run.dt = Some(DEFAULT_DT_FRACTION * dt_max),
    }

    let checks = &config.checks;
    check_tolerance("checks.mass", checks.mass)?;
    check_tolerance("checks.energy_drift", checks.energy_drift)?;
    check_tolerance("checks.energy_rate", checks.energy_rate)?;
    check_tolerance("checks.reference_l2", checks.reference_l2)?;
    check_tolerance("checks.ensemble_bound_factor", checks.ensemble_bound_factor)?;
    if let Some(e) = checks.energy {
        check_finite("checks.energy.expected", &[e.expected])?;
        check_tolerance("checks.energy.rel_tol", Some(e.rel_tol))?;
    }
    if checks.ensemble_bound_factor.is_some() && engine != Engine::Ensemble {
        return Err(LabError::invalid("checks.ensemble_bound_factor", "only applies to the ensemble engine"));
    }
    if checks.energy_rate.is_some() && engine != Engine::Coupled {
        return Err(LabError::invalid("checks.energy_rate", "only applies to the coupled engine"));
    }
    if (checks.energy_drift.is_some() || checks.energy_rate.is_some() || checks.energy.is_some()) && !engine.has_phase() {
        return Err(LabError::invalid("checks", format!("energy checks need a phase; the {} engine has none", engine.name())));
    }
    if engine == Engine::Coupled && !params.is_linear() {
        log::info!(
            "notice: mu/m = {} != 1; the coupled run is compared against the nonlinear wave-function solver",
            config.params.mu_over_m
        );
    }
    if engine == Engine::Schrodinger && !params.is_linear() {
        log::warn!("the schrodinger engine is linear; mu/m = {} is ignored", config.params.mu_over_m);
    }
    if !engine.has_phase() && config.potential != PotentialConfig::None {
        log::warn!("the {} engine is driven by `entropy`; `potential` is ignored", engine.name());
    }

    Ok(Scenario {
        config,
        space,
        params,
        base_dir: base.to_path_buf(),
        initial,
        v0,
        a0,
        entropy,
    })
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn engine(&self) -> Engine {
        self.config.run.engine
    }

    pub fn dt(&self) -> f64 {
        self.config.run.dt.expect("resolved")
    }

    pub fn steps(&self) -> usize {
        self.config.run.steps
    }

    pub fn stride(&self) -> usize {
        self.config.run.stride.expect("resolved")
    }

    pub fn seed(&self) -> u64 {
        self.config.run.seed
    }

    pub fn walkers(&self) -> Option<usize> {
        self.config.run.walkers
    }

    pub fn checks(&self) -> &ChecksConfig {
        &self.config.checks
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.config.run.seed = seed;
    }

    /// Switch engines, re-resolving engine-dependent defaults. Checks that do not
    /// apply to the new engine are dropped.
    pub fn with_engine(&self, engine: Engine, walkers: Option<usize>) -> Result<Scenario> {
        let mut config = self.config.clone();
        if engine != self.engine() {
            // Phase engines share one stability bound, the density engines another.
            if engine.has_phase() != self.engine().has_phase() {
                config.run.dt = None;
            }
            let checks = &mut config.checks;
            if engine != Engine::Ensemble {
                checks.ensemble_bound_factor = None;
            }
            if engine != Engine::Coupled {
                checks.energy_rate = None;
            }
            if !engine.has_phase() {
                checks.energy_drift = None;
                checks.energy = None;
            }
            if engine == Engine::Ensemble {
                checks.reference_l2 = None;
            }
        }
        config.run.engine = engine;
        if walkers.is_some() {
            config.run.walkers = walkers;
        }
        resolve(config, &self.base_dir)
    }

    pub fn initial_state(&self) -> &ManifoldState {
        &self.initial
    }

    pub fn entropy(&self) -> &ScalarField {
        &self.entropy
    }

    pub fn static_potential(&self) -> &ScalarField {
        &self.v0
    }

    pub fn static_vector_potential(&self) -> Option<&VectorPotential> {
        self.a0.as_ref()
    }

    pub fn is_static(&self) -> bool {
        self.config.time_dependence.is_static()
    }

    pub fn potential_at(&self, t: f64) -> ScalarField {
        let r = self.config.time_dependence.v_ramp;
        if r == 0.0 {
            self.v0.clone()
        } else {
            self.v0.map(|v| (1.0 + r * t) * v)
        }
    }

    pub fn vector_potential_at(&self, t: f64) -> Option<VectorPotential> {
        let r = self.config.time_dependence.a_ramp;
        self.a0.as_ref().map(|a| if r == 0.0 { a.clone() } else { a.scale(1.0 + r * t) })
    }

    /// The resolved configuration as TOML.
    pub fn echo(&self) -> String {
        toml::to_string(&self.config).expect("scenario config serializes")
    }

    /// Context string for engine errors.
    pub fn context(&self, what: &str) -> String {
        format!("scenario `{}` ({} engine): {what}", self.name(), self.engine().name())
    }

    pub fn err_context<T>(&self, r: entropic_core::Result<T>, what: &str) -> Result<T> {
        r.context(|| self.context(what))
    }
}
