use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pairdp::harness::{stability_experiment, to_json, StabilityConfig, TRule, REPORT_VERSION};
use pairdp::optimizer::Solution;
use pairdp::privacy::{calibrate, CalibrationMethod, NoiseScale};
use pairdp::rng::derive_seed;
use pairdp::stability::{estimate_uas, ReplacementSource, StabilityMethod, StabilityProbe, StabilityReport, Trainer, UasEstimate};
use pairdp::{
    beta_statistics, dp_pairwise_gd, empirical_risk, exact_minimize, gen_synthetic, load_dataset, run_experiment, Bounds,
    ConstantSource, Dataset, Descriptor, ExperimentConfig, LossKind, PairwiseLoss, PrivacyBudget, Result, SolverConfig,
    SyntheticKind, TrainConfig,
};

#[derive(Parser)]
#[command(name = "pairdp", version, about = "Differentially private pairwise learning by gradient perturbation")]
struct Cli {
    /// Worker threads (defaults to RAYON_NUM_THREADS or the core count).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the calibrated noise scale σ.
    Calibrate {
        #[arg(long = "G")]
        g: f64,
        #[arg(long = "T")]
        t: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value = "ma")]
        method: CalibrationMethod,
    },
    /// Train one private model.
    Train(TrainArgs),
    /// Sampled elastic-stability statistics on a synthetic dataset.
    Stability(StabilityArgs),
    /// Run an experiment grid from a config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a stability sweep from a config file.
    StabilitySweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct LossArgs {
    #[arg(long, default_value = "ranking")]
    loss: LossKind,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Constant set used for σ and the step size.
    #[arg(long, default_value = "published")]
    constants: ConstantSource,
    /// Parameter-ball radius for worst-case constants.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// CSV file with header x0,...,x{d-1},y.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// Synthetic data as `kind,n,d`.
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    x_max: f64,
    #[arg(long, default_value_t = 1.0)]
    y_max: f64,
    #[command(flatten)]
    loss: LossArgs,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
    /// Iterations; defaults to ⌈3·ln(nε/√p)⌉.
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long, default_value = "ma")]
    method: CalibrationMethod,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    project: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StabilityArgs {
    /// Synthetic data as `kind,n,d`.
    #[arg(long)]
    synthetic: String,
    #[command(flatten)]
    loss: LossArgs,
    #[arg(long, default_value = "retrain")]
    method: StabilityMethod,
    /// Defaults to min(n, 30).
    #[arg(long)]
    removals: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pairs: usize,
    /// Single-record replacements for the argument-stability estimate.
    #[arg(long, default_value_t = 0)]
    replacements: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrainOutput {
    version: &'static str,
    data_source: String,
    n: usize,
    dim: usize,
    seed: u64,
    noise_seed: u64,
    loss: LossKind,
    lambda: f64,
    constants: pairdp::LossConstants,
    eps: f64,
    delta: f64,
    iterations: usize,
    noise: NoiseScale,
    eta: f64,
    projection_radius: Option<f64>,
    theta_priv: Vec<f64>,
    empirical_risk: f64,
    empirical_min: f64,
    excess_empirical_risk: f64,
    risk_trace: Vec<f64>,
    grad_norm_trace: Vec<f64>,
}

#[derive(Serialize)]
struct StabilityOutput {
    version: &'static str,
    kind: SyntheticKind,
    dim: usize,
    seed: u64,
    loss: LossKind,
    lambda: f64,
    report: StabilityReport,
    uas: Option<UasEstimate>,
}

fn parse_synthetic(arg: &str) -> Result<(SyntheticKind, usize, usize)> {
    let parts: Vec<&str> = arg.split(',').map(str::trim).collect();
    let bad = || pairdp::Error::InvalidArgument(format!("expected `kind,n,d`, got {arg:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let kind = parts[0].parse()?;
    let n = parts[1].parse().map_err(|_| bad())?;
    let d = parts[2].parse().map_err(|_| bad())?;
    Ok((kind, n, d))
}

fn build_loss(args: &LossArgs, bounds: Bounds) -> Result<PairwiseLoss> {
    PairwiseLoss::builtin(args.loss, args.lambda, bounds, args.radius, args.constants)
}

fn csv_dim(path: &Path) -> Result<usize> {
    let text = fs::read_to_string(path)?;
    let header = text.lines().next().unwrap_or("");
    let cols = header.split(',').count();
    if cols < 2 {
        return Err(pairdp::Error::Parse {
            path: path.to_path_buf(),
            row: 0,
            msg: "header needs at least one feature column and y".into(),
        });
    }
    Ok(cols - 1)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = to_json(value)?;
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let bounds = Bounds {
        x_max: args.x_max,
        y_max: args.y_max,
    };
    let (d, source): (Dataset, String) = match (&args.data, &args.synthetic) {
        (Some(path), _) => {
            let dim = csv_dim(path)?;
            (load_dataset(path, Descriptor { dim, bounds })?, path.display().to_string())
        }
        (None, Some(arg)) => {
            let (kind, n, dim) = parse_synthetic(arg)?;
            let raw = gen_synthetic(kind, n, dim, args.seed)?;
            (Dataset::with_seed(raw.samples().to_vec(), bounds, Some(args.seed))?, format!("synthetic:{arg}"))
        }
        (None, None) => unreachable!("clap requires one data source"),
    };
    let loss = build_loss(&args.loss, bounds)?;
    let p = loss.param_len(d.dim());
    let t = args.t.unwrap_or_else(|| TRule::LogNEps.iterations(3.0, 0, d.len(), args.eps, p));
    let noise = calibrate(args.method, loss.constants().g, t, d.len(), PrivacyBudget::new(args.eps, args.delta)?)?;
    let noise_seed = derive_seed(args.seed, &[1]);
    let mut cfg = TrainConfig::new(t, noise, noise_seed);
    cfg.project = args.project;
    let result = dp_pairwise_gd(&loss, &d, &cfg)?;
    let solution: Solution = exact_minimize(&loss, &d, &SolverConfig::default(), &vec![0.0; p])?;
    let risk = empirical_risk(&loss, result.theta_priv.as_slice(), &d)?;
    let out = TrainOutput {
        version: REPORT_VERSION,
        data_source: source,
        n: d.len(),
        dim: d.dim(),
        seed: args.seed,
        noise_seed,
        loss: loss.kind(),
        lambda: loss.lambda(),
        constants: *loss.constants(),
        eps: args.eps,
        delta: args.delta,
        iterations: t,
        noise,
        eta: result.eta,
        projection_radius: args.project,
        theta_priv: result.theta_priv.as_slice().to_vec(),
        empirical_risk: risk,
        empirical_min: solution.value,
        excess_empirical_risk: risk - solution.value,
        risk_trace: result.risk_trace,
        grad_norm_trace: result.grad_norm_trace,
    };
    emit(&out, args.out.as_deref())
}

fn stability(args: &StabilityArgs) -> Result<()> {
    let (kind, n, dim) = parse_synthetic(&args.synthetic)?;
    let d = gen_synthetic(kind, n, dim, args.seed)?;
    let loss = build_loss(&args.loss, Bounds::UNIT)?;
    let probe = StabilityProbe {
        removals: args.removals.unwrap_or(n.min(30)),
        pairs: args.pairs,
        seed: args.seed,
    };
    let solver = SolverConfig::default();
    let report = beta_statistics(&loss, &d, args.method, &probe, &solver)?;
    let uas = if args.replacements > 0 {
        Some(estimate_uas(
            &loss,
            &d,
            &Trainer::Exact(solver),
            ReplacementSource::Resample,
            args.replacements,
            args.seed,
        )?)
    } else {
        None
    };
    let out = StabilityOutput {
        version: REPORT_VERSION,
        kind,
        dim,
        seed: args.seed,
        loss: loss.kind(),
        lambda: loss.lambda(),
        report,
        uas,
    };
    emit(&out, args.out.as_deref())
}

fn run(cli: Cli) -> Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| pairdp::Error::InvalidArgument(e.to_string()))?;
    }
    match &cli.command {
        Command::Calibrate {
            g,
            t,
            n,
            eps,
            delta,
            method,
        } => {
            let s = calibrate(*method, *g, *t, *n, PrivacyBudget::new(*eps, *delta)?)?;
            println!("{}", s.sigma);
            Ok(())
        }
        Command::Train(args) => train(args),
        Command::Stability(args) => stability(args),
        Command::Experiment { config, out } => {
            let cfg = ExperimentConfig::from_json(&fs::read_to_string(config)?)?;
            emit(&run_experiment(&cfg)?, out.as_deref())
        }
        Command::StabilitySweep { config, out } => {
            let cfg: StabilityConfig = serde_json::from_str(&fs::read_to_string(config)?)?;
            emit(&stability_experiment(&cfg)?, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
