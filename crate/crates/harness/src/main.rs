//! Command-line front end: instance generation, batch seeded trials, and
//! instance-complexity lower bounds.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use glucb::algo::run_glucb_traced;
use glucb::complexity::{sample_lower_bound, solve_hg};
use glucb::env::{format_real, read_instance_file, write_instance_file, RngStream};
use glucb_harness::{
    config_from_file, default_delta, default_gamma, default_lambda, default_max_steps,
    default_omega, default_r, default_s, default_sigma, records_to_csv, run_experiment,
    stats_to_json, Algo, ExperimentConfig, GeneratorSpec, InstanceSource, RadiusModeConfig,
    INSTANCE_STREAM_INDEX,
};

#[derive(Parser)]
#[command(
    name = "glucb",
    version,
    about = "Best-arm identification in linear bandits: generators, batch trials, lower bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance file.
    Gen(GenArgs),
    /// Run seeded Monte-Carlo trials and write per-trial CSV plus a summary.
    Run(Box<RunArgs>),
    /// Compute the instance-dependent sample-complexity lower bound.
    LowerBound(LowerBoundArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Dataset family: soare | sphere | crowded | three-arm.
    dataset: String,

    /// Ambient dimension (soare, sphere).
    #[arg(long)]
    d: Option<usize>,

    /// Number of arms (sphere, crowded).
    #[arg(long)]
    k: Option<usize>,

    /// Probe angle in radians (soare, three-arm).
    #[arg(long)]
    omega: Option<f64>,

    /// Parameter interpolation weight (sphere).
    #[arg(long)]
    gamma: Option<f64>,

    /// Angular jitter of the crowd (crowded).
    #[arg(long)]
    sigma: Option<f64>,

    /// Gaussian reward noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    noise_std: f64,

    /// Seed for the random generators (sphere, crowded).
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output path for the instance file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Algorithm: glucb | static.
    #[arg(long)]
    algo: Option<String>,

    /// Confidence radius: det-based | simple.
    #[arg(long)]
    radius_mode: Option<String>,

    #[arg(long)]
    delta: Option<f64>,

    /// Noise scale R.
    #[arg(long)]
    r: Option<f64>,

    /// Bound S on the parameter norm.
    #[arg(long)]
    s: Option<f64>,

    /// Ridge parameter lambda.
    #[arg(long)]
    lambda: Option<f64>,

    #[arg(long)]
    trials: Option<u64>,

    #[arg(long)]
    master_seed: Option<u64>,

    #[arg(long)]
    max_steps: Option<u64>,

    /// Instance file to run on (alternative to --dataset).
    #[arg(long)]
    instance: Option<PathBuf>,

    /// Generator name (alternative to --instance): soare | sphere | crowded | three-arm.
    #[arg(long)]
    dataset: Option<String>,

    #[arg(long)]
    d: Option<usize>,

    #[arg(long)]
    k: Option<usize>,

    #[arg(long)]
    omega: Option<f64>,

    #[arg(long)]
    gamma: Option<f64>,

    #[arg(long)]
    sigma: Option<f64>,

    /// Comma-separated simplex weights for the static baseline.
    #[arg(long)]
    static_weights: Option<String>,

    /// Worker threads for trial execution.
    #[arg(long)]
    workers: Option<usize>,

    /// Per-trial CSV output path (summary goes to <out>.summary.json).
    #[arg(long)]
    out: PathBuf,

    /// Per-step trace CSV (requires --trials 1).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct LowerBoundArgs {
    /// Instance file.
    #[arg(long)]
    instance: PathBuf,

    #[arg(long, default_value_t = 0.05)]
    delta: f64,

    /// Relative duality-gap tolerance for the solver.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,

    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<glucb::Error> for CliError {
    fn from(e: glucb::Error) -> Self {
        match e {
            glucb::Error::InvalidArgument(_)
            | glucb::Error::DimensionMismatch { .. }
            | glucb::Error::ArmIndexOutOfRange { .. } => CliError::Usage(e.to_string()),
            glucb::Error::Io(_) | glucb::Error::Parse(_) | glucb::Error::ConstructionFailed(_) => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Run(args) => cmd_run(*args),
        Command::LowerBound(args) => cmd_lower_bound(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn generator_spec(
    dataset: &str,
    d: Option<usize>,
    k: Option<usize>,
    omega: Option<f64>,
    gamma: Option<f64>,
    sigma: Option<f64>,
) -> Result<GeneratorSpec, CliError> {
    let need = |opt: Option<usize>, flag: &str| {
        opt.ok_or_else(|| usage(format!("dataset '{dataset}' requires --{flag}")))
    };
    match dataset {
        "soare" => Ok(GeneratorSpec::Soare {
            d: need(d, "d")?,
            omega: omega.unwrap_or_else(default_omega),
        }),
        "sphere" => Ok(GeneratorSpec::Sphere {
            d: need(d, "d")?,
            k: need(k, "k")?,
            gamma: gamma.unwrap_or_else(default_gamma),
        }),
        "crowded" => Ok(GeneratorSpec::Crowded {
            k: need(k, "k")?,
            sigma: sigma.unwrap_or_else(default_sigma),
        }),
        "three-arm" => Ok(GeneratorSpec::ThreeArm {
            omega: omega.ok_or_else(|| usage("dataset 'three-arm' requires --omega"))?,
        }),
        other => Err(usage(format!(
            "unknown dataset '{other}' (expected soare | sphere | crowded | three-arm)"
        ))),
    }
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    let spec = generator_spec(
        &args.dataset,
        args.d,
        args.k,
        args.omega,
        args.gamma,
        args.sigma,
    )?;
    let mut rng = RngStream::new(args.seed, INSTANCE_STREAM_INDEX);
    let instance = spec.build(&mut rng)?.with_noise_std(args.noise_std)?;
    write_instance_file(&instance, &args.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "wrote {} ({} arms, d = {}, delta_min = {})",
        args.out.display(),
        instance.k(),
        instance.d(),
        format_real(instance.delta_min())
    );
    Ok(())
}

fn parse_algo(text: &str) -> Result<Algo, CliError> {
    match text {
        "glucb" => Ok(Algo::Glucb),
        "static" => Ok(Algo::Static),
        other => Err(usage(format!("unknown algo '{other}'"))),
    }
}

fn parse_radius_mode(text: &str) -> Result<RadiusModeConfig, CliError> {
    match text {
        "det-based" => Ok(RadiusModeConfig::DetBased),
        "simple" => Ok(RadiusModeConfig::Simple),
        other => Err(usage(format!("unknown radius mode '{other}'"))),
    }
}

fn merge_config(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let base = match &args.config {
        Some(path) => Some(config_from_file(path)?),
        None => None,
    };

    let instance_source = if let Some(path) = &args.instance {
        if args.dataset.is_some() {
            return Err(usage("--instance and --dataset are mutually exclusive"));
        }
        Some(InstanceSource::File(path.clone()))
    } else if let Some(dataset) = &args.dataset {
        Some(InstanceSource::Generator(generator_spec(
            dataset, args.d, args.k, args.omega, args.gamma, args.sigma,
        )?))
    } else {
        None
    };

    let static_weights = match &args.static_weights {
        Some(text) => Some(
            text.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| usage(format!("bad static weight '{s}'")))
                })
                .collect::<Result<Vec<f64>, CliError>>()?,
        ),
        None => None,
    };

    let mut config = match base {
        Some(config) => config,
        None => ExperimentConfig {
            algo: Algo::Glucb,
            radius_mode: RadiusModeConfig::DetBased,
            delta: default_delta(),
            r: default_r(),
            s: default_s(),
            lambda: default_lambda(),
            trials: 100,
            master_seed: 0,
            max_steps: default_max_steps(),
            instance_source: instance_source.clone().ok_or_else(|| {
                usage("an instance is required: pass --instance, --dataset, or --config")
            })?,
            static_weights: None,
        },
    };

    if let Some(text) = &args.algo {
        config.algo = parse_algo(text)?;
    }
    if let Some(text) = &args.radius_mode {
        config.radius_mode = parse_radius_mode(text)?;
    }
    if let Some(v) = args.delta {
        config.delta = v;
    }
    if let Some(v) = args.r {
        config.r = v;
    }
    if let Some(v) = args.s {
        config.s = v;
    }
    if let Some(v) = args.lambda {
        config.lambda = v;
    }
    if let Some(v) = args.trials {
        config.trials = v;
    }
    if let Some(v) = args.master_seed {
        config.master_seed = v;
    }
    if let Some(v) = args.max_steps {
        config.max_steps = v;
    }
    if let Some(source) = instance_source {
        config.instance_source = source;
    }
    if static_weights.is_some() {
        config.static_weights = static_weights;
    }
    config.validate().map_err(CliError::from)?;
    Ok(config)
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let config = merge_config(&args)?;
    if args.trace.is_some() && config.trials != 1 {
        return Err(usage("--trace requires --trials 1"));
    }
    let workers = args.workers.unwrap_or_else(num_threads);
    let (records, stats) = run_experiment(&config, workers)?;

    if let Some(trace_path) = &args.trace {
        let instance = config.resolve_instance()?;
        let params = config.confidence_params()?;
        let mut rng = RngStream::new(config.master_seed, 0);
        let (_, trace) = run_glucb_traced(&instance, &params, &mut rng, config.max_steps)?;
        let mut out = String::from("t,h,l,c,beta,max_advantage\n");
        for step in &trace {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                step.t,
                step.h,
                step.l,
                step.c,
                format_real(step.beta),
                format_real(step.max_advantage)
            ));
        }
        std::fs::write(trace_path, out).map_err(|e| CliError::Runtime(e.to_string()))?;
    }

    std::fs::write(&args.out, records_to_csv(&records))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let summary_path = PathBuf::from(format!("{}.summary.json", args.out.display()));
    std::fs::write(&summary_path, stats_to_json(&stats))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "{} trials: mean_tau = {:.1}, stderr = {:.1}, error_rate = {}, non_terminated = {}",
        stats.trials, stats.mean_tau, stats.stderr_tau, stats.error_rate, stats.non_termination_count
    );
    Ok(())
}

fn cmd_lower_bound(args: LowerBoundArgs) -> Result<(), CliError> {
    if !(args.delta > 0.0 && args.delta < 0.15) {
        return Err(usage(format!(
            "delta must lie in (0, 0.15), got {}",
            args.delta
        )));
    }
    let instance = read_instance_file(&args.instance)?;
    let result = solve_hg(&instance, args.tol, args.max_iter)?;
    let bound = sample_lower_bound(result.h_g, args.delta)?;
    let weights: Vec<String> = result
        .w_star
        .as_slice()
        .iter()
        .map(|w| format_real(*w))
        .collect();
    println!("{{");
    println!("  \"h_g\": {},", format_real(result.h_g));
    println!("  \"w_star\": [{}],", weights.join(", "));
    println!("  \"fw_gap\": {},", format_real(result.fw_gap));
    println!("  \"iterations\": {},", result.iterations);
    println!("  \"converged\": {},", result.converged);
    println!("  \"delta\": {},", format_real(args.delta));
    println!("  \"sample_lower_bound\": {}", format_real(bound));
    println!("}}");
    if !result.converged {
        return Err(CliError::Runtime(format!(
            "lower-bound solver did not reach tolerance {} (fw_gap = {})",
            args.tol, result.fw_gap
        )));
    }
    Ok(())
}

fn num_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}
