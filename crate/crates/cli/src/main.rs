use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use demand_learning::harness::output::write_json;
use demand_learning::harness::{
    emit_results, pac_certify, run_checks, run_sweep, summarize_sweep, PacSpec, RunOptions,
    SweepConfig,
};
use demand_learning::linear_learner::LinearBeliefs;
use demand_learning::ode::{
    default_initial_grid, estimate_contraction, integrate, ContractionEstimate, ContractionOptions,
};
use demand_learning::Error;

/// Exit status when `--check` finds a failing criterion or `validate` finds
/// a curve outside the admissible class.
const CHECK_FAILED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "demand-learning",
    version,
    about = "Pricing experiments with a misspecified linear learner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write sweep.csv, summary.json and histograms.
    Run(RunArgs),
    /// Check every family curve for an increasing hazard rate.
    Validate(FamilyArgs),
    /// Integrate the mean-field ODE and estimate contraction rates.
    Ode(OdeArgs),
}

#[derive(Args)]
struct FamilyArgs {
    /// TOML sweep configuration.
    #[arg(long)]
    config: PathBuf,
    /// Multiplies the number of family points.
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Write per-period trace CSVs under <out>/traces.
    #[arg(long)]
    trace: bool,
    /// Certify, e.g. `mu=0.05,lambda=0.1,trials=1000`.
    #[arg(long)]
    pac: Option<String>,
    /// Apply the configured acceptance windows; exit 2 on failure.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct OdeArgs {
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long, default_value = "ode")]
    out: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 20.0)]
    tau_end: f64,
    /// Keep every n-th trajectory row.
    #[arg(long, default_value_t = 10)]
    every: usize,
    /// Accuracy levels for the τ(μ) table.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.1,0.03,0.01,0.003,0.001"
    )]
    mu: Vec<f64>,
    /// Starting beliefs `beta0,beta1`; defaults to the slowest grid start.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    initial: Option<Vec<f64>>,
}

fn load(args: &FamilyArgs) -> Result<SweepConfig, Error> {
    let config = SweepConfig::from_file(&args.config)?;
    match args.scale {
        Some(s) => config.scaled(s),
        None => Ok(config),
    }
}

fn install_workers(workers: Option<usize>) -> Result<(), Error> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<ExitCode, Error> {
    let mut config = load(&args.family)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(flag) = &args.pac {
        config.pac = Some(PacSpec::parse_flag(flag)?);
    }
    config.validate()?;
    install_workers(args.workers)?;

    let options = RunOptions {
        workers: args.workers,
        trace_dir: args.trace.then(|| args.out.join("traces")),
    };
    log::info!(
        "sweeping {} family point(s), seed {}",
        config.family.len(),
        config.seed
    );
    let result = run_sweep(&config, &options)?;
    let summary = summarize_sweep(&config, &result)?;

    let mut certificates = Vec::new();
    if let Some(pac) = &config.pac {
        let curves: Vec<_> = config
            .family
            .curves()?
            .into_iter()
            .map(|p| p.curve)
            .collect();
        certificates.push(pac_certify(
            &curves,
            &config.linear,
            config.n_buyers,
            pac,
            config.seed,
        )?);
    }
    let written = emit_results(&args.out, &result, &summary, &certificates)?;

    for (label, stats) in summary.learners() {
        println!(
            "{label:>10}  mean {:+.5}  variance {:.5}  n {}",
            stats.mean, stats.variance, stats.n_points
        );
    }
    for cert in &certificates {
        println!(
            "       pac  T {}  failure rate {:.4}  upper bound {:.4}  certified {}",
            cert.t_used, cert.empirical_failure_rate, cert.upper_bound, cert.passed
        );
    }
    for path in &written {
        log::info!("wrote {}", path.display());
    }

    if args.check {
        let outcomes = run_checks(&summary, &certificates, &config.check);
        for o in &outcomes {
            println!("{o}");
        }
        if outcomes.iter().any(|o| !o.passed) {
            return Ok(ExitCode::from(CHECK_FAILED));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(args: FamilyArgs) -> Result<ExitCode, Error> {
    let config = load(&args)?;
    let mut all_ihr = true;
    println!("index,sigma,is_ihr,lipschitz_estimate,b_star,q_star,profit_star");
    for point in config.family.curves()? {
        let curve = &point.curve;
        let report = curve.validate_ihr(curve.support_width() * 1e-4)?;
        all_ihr &= report.is_ihr;
        let opt = curve.optimal_price(1e-10).ok();
        let field = |f: fn(&demand_learning::demand::OptimalPoint) -> f64| {
            opt.as_ref().map(|o| f(o).to_string()).unwrap_or_default()
        };
        println!(
            "{},{},{},{},{},{},{}",
            point.index,
            point.sigma.map(|s| s.to_string()).unwrap_or_default(),
            report.is_ihr,
            report.lipschitz_estimate,
            field(|o| o.b_star),
            field(|o| o.q_star),
            field(|o| o.profit_star),
        );
    }
    Ok(if all_ihr {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(CHECK_FAILED)
    })
}

#[derive(Serialize)]
struct ContractionRecord {
    index: usize,
    sigma: Option<f64>,
    estimate: ContractionEstimate,
    trajectory_start: LinearBeliefs,
}

fn ode(args: OdeArgs) -> Result<ExitCode, Error> {
    let config = load(&args.family)?;
    let initial = match args.initial.as_deref() {
        Some(&[b0, b1]) => Some(LinearBeliefs::new(b0, b1)),
        Some(_) => return Err(Error::Config("--initial takes beta0,beta1".into())),
        None => None,
    };
    let options = ContractionOptions {
        dt: args.dt,
        ..ContractionOptions::default()
    };
    std::fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let mut records = Vec::new();
    for point in config.family.curves()? {
        let grid = default_initial_grid(&point.curve)?;
        let estimate = estimate_contraction(&point.curve, &grid, &args.mu, options)?;
        let start = initial.unwrap_or_else(|| {
            estimate
                .tau_table
                .last()
                .expect("nonempty accuracy grid")
                .initial
        });
        let traj = integrate(start, &point.curve, args.tau_end, args.dt)?;
        let path = args.out.join(format!("ode_{}.csv", point.index));
        write_csv(&path, |w| traj.write_csv(w, args.every))?;
        println!(
            "curve {}: b* {:.5}  c_hat {:.5}  b(tau_end) {:.5}",
            point.index,
            estimate.b_star,
            estimate.c_hat,
            traj.final_price()
        );
        records.push(ContractionRecord {
            index: point.index,
            sigma: point.sigma,
            estimate,
            trajectory_start: start,
        });
    }
    write_json(&args.out.join("contraction.json"), &records)?;
    Ok(ExitCode::SUCCESS)
}

fn write_csv(
    path: &Path,
    body: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
) -> Result<(), Error> {
    let io = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    body(&mut w).map_err(io)?;
    std::io::Write::flush(&mut w).map_err(io)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate(args) => validate(args),
        Command::Ode(args) => ode(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
