use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use entropic_lab::compare::{self, RunArtifacts};
use entropic_lab::report::{output_root, Artifacts, Summary};
use entropic_lab::scenario::{load_scenario, ChiSpec, Engine, Scenario};
use entropic_lab::{audits, run, LabError};

/// Entropic dynamics laboratory: run scenarios, compare runs, audit invariants.
///
/// Outputs go to `$EDLAB_OUT_DIR` (default `./edlab-out`) unless `--out` is given.
/// Exit codes: 0 all checks pass, 1 a check failed or a run aborted, 2 usage or
/// configuration error.
#[derive(Debug, Parser)]
#[command(name = "edlab", version)]
struct Cli {
    /// Output root directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the scenario's engine.
    Evolve {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the scenario with the walker ensemble.
    Ensemble {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        walkers: Option<usize>,
    },
    /// Compare two run directories snapshot by snapshot.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Metrics: rho_l1, rho_l2, psi_l2, variance, com, energy, ks.
        #[arg(long, value_delimiter = ',', default_value = "rho_l2")]
        metrics: Vec<String>,
        /// Tolerance override `metric=value`; repeatable.
        #[arg(long = "tol", value_parser = parse_override)]
        tolerances: Vec<(String, f64)>,
    },
    /// Evolve the scenario and its gauge transform side by side.
    GaugeCheck {
        config: PathBuf,
        /// Gauge function: `sin:<a>`, `quad:<c>` or `file:<path>`.
        #[arg(long)]
        chi: ChiSpec,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Scaling of the Hamilton-Jacobi residual and fluctuations with eta and mu.
    ClassicalLimit {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.25")]
        eta_sweep: Vec<f64>,
        /// Values of mu/m; empty to skip.
        #[arg(long, value_delimiter = ',')]
        mu_sweep: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        walkers: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Gibbs-inequality audit of the exact kernel at the box centre.
    MaxentAudit {
        config: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected metric=value, got `{s}`"))?;
    let v: f64 = v.parse().map_err(|e| format!("`{v}`: {e}"))?;
    Ok((k.to_string(), v))
}

fn scenario(path: &Path, seed: Option<u64>) -> Result<Scenario, LabError> {
    let mut s = load_scenario(path)?;
    if let Some(seed) = seed {
        log::info!("seed overridden: {seed}");
        s.set_seed(seed);
    }
    Ok(s)
}

fn execute(cli: Cli) -> Result<Summary, LabError> {
    let root = cli.out.unwrap_or_else(output_root);
    match cli.command {
        Command::Evolve { config, seed } => run::run(&scenario(&config, seed)?, &root, "evolve"),
        Command::Ensemble { config, seed, walkers } => {
            let base = scenario(&config, seed)?;
            let mut s = base.with_engine(Engine::Ensemble, walkers)?;
            if base.engine() != Engine::Ensemble {
                s.config.name = format!("{}-ensemble", base.name());
            }
            run::run(&s, &root, "ensemble")
        }
        Command::Compare { a, b, metrics, tolerances } => {
            let (ra, rb) = (RunArtifacts::open(&a)?, RunArtifacts::open(&b)?);
            let report = compare::compare(&ra, &rb, &metrics, &tolerances)?;
            let name = |p: &Path| p.file_name().map_or("run".into(), |n| n.to_string_lossy().into_owned());
            let label = format!("compare-{}-vs-{}", name(&a), name(&b));
            let out = Artifacts::create(root.join(&label))?;
            let mut summary = Summary::new("compare", &label);
            compare::write_report(&report, &out, &mut summary)?;
            Ok(summary)
        }
        Command::GaugeCheck { config, chi, seed } => audits::gauge_check(&scenario(&config, seed)?, &chi, &root),
        Command::ClassicalLimit {
            config,
            eta_sweep,
            mu_sweep,
            walkers,
            seed,
        } => audits::classical_limit(&scenario(&config, seed)?, &eta_sweep, &mu_sweep, walkers, &root),
        Command::MaxentAudit { config, trials, seed } => audits::maxent_audit(&scenario(&config, seed)?, trials, &root),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(summary) => {
            for c in &summary.checks {
                println!("{}", c.line());
            }
            println!("{}: {}", summary.scenario, if summary.passed { "pass" } else { "fail" });
            ExitCode::from(summary.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
