//! `deepcal`: dataset generation, surrogate training, calibration, pricing,
//! Greeks, and benchmarking for GARCH-family option models.
//!
//! Every subcommand that writes an output file also writes
//! `<out>.manifest.json` next to it, echoing the effective configuration so
//! a run can be reproduced from its artifacts alone. Exit codes: 0 success,
//! 2 configuration error, 3 numeric failure, 4 data failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use deepcal_core::{
    calibrate, generate_training_set, greeks, implied_vol, ingest_chain, load_network,
    load_training_set, otm_value, price_chain_mcs, price_mcs, save_network, save_training_set,
    CalibrateOptions, CalibrationBounds, Error, Model, Network, OptionKind, ParameterRanges,
    PricerSpec, PricingRequest, QuoteSpec, Result, RiskNeutralParams, TrainOptions,
};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "deepcal",
    version,
    about = "GARCH option pricing with Monte Carlo and neural surrogates"
)]
struct Cli {
    /// Cap the worker thread count (default: logical cores). Results do not
    /// depend on this value.
    #[arg(long, global = true, env = "DEEPCAL_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Price a Halton sample of the parameter box and write a training set.
    GenData(GenDataArgs),
    /// Fit a feedforward network to a training set by Levenberg-Marquardt.
    Train(TrainArgs),
    /// Fit model parameters to an out-of-the-money option chain.
    Calibrate(CalibrateArgs),
    /// Price one European option.
    Price(PriceArgs),
    /// Finite-difference Greeks of one European option.
    Greeks(GreeksArgs),
    /// Time batch chain pricing, surrogate versus Monte Carlo.
    Benchmark(BenchmarkArgs),
    /// Emit plot-ready prices and implied vols for one maturity slice.
    PlotData(PlotDataArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PricerChoice {
    /// Trained network surrogate.
    Ann,
    /// Monte Carlo simulation.
    Mcs,
}

impl PricerChoice {
    fn name(self) -> &'static str {
        match self {
            PricerChoice::Ann => "ann",
            PricerChoice::Mcs => "mcs",
        }
    }
}

fn parse_model(s: &str) -> std::result::Result<Model, String> {
    s.parse::<Model>().map_err(|e| e.to_string())
}

fn parse_kind(s: &str) -> std::result::Result<OptionKind, String> {
    s.parse::<OptionKind>().map_err(|e| e.to_string())
}

#[derive(clap::Args, Debug)]
struct GenDataArgs {
    #[arg(long, value_parser = parse_model)]
    model: Model,
    #[arg(long, value_parser = parse_kind)]
    kind: OptionKind,
    /// Number of Halton points to price (skipped points are not replaced).
    #[arg(long)]
    n: usize,
    /// Monte Carlo paths per price.
    #[arg(long)]
    paths: usize,
    #[arg(long)]
    seed: u64,
    /// First Halton index, for extending an existing set without overlap.
    #[arg(long, default_value_t = 1)]
    start_index: u64,
    /// Named sampling box: "pricing" or "calibration".
    #[arg(long, default_value = "pricing")]
    profile: String,
    /// Ranges file overriding --profile (key = lo, hi lines).
    #[arg(long)]
    ranges: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct TrainArgs {
    /// Training set written by gen-data.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV of (epoch, mse) rows; epoch 0 is the initial error.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    max_epochs: usize,
    /// Stop early at this training MSE.
    #[arg(long)]
    target_mse: Option<f64>,
    /// Weight initialization seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "20,20,20")]
    hidden: Vec<usize>,
}

#[derive(clap::Args, Debug)]
struct CalibrateArgs {
    /// Option chain CSV (date,spot,rate,strike,maturity_days,kind,bid,ask).
    #[arg(long)]
    chain: PathBuf,
    #[arg(long, value_parser = parse_model)]
    model: Model,
    #[arg(long, value_enum)]
    pricer: PricerChoice,
    /// Call-surface network (required with --pricer ann).
    #[arg(long)]
    call_net: Option<PathBuf>,
    /// Put-surface network (required with --pricer ann).
    #[arg(long)]
    put_net: Option<PathBuf>,
    /// Monte Carlo paths per objective evaluation (--pricer mcs).
    #[arg(long, default_value_t = 20_000)]
    paths: usize,
    /// Simulation seed shared by every objective evaluation (--pricer mcs).
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Parameter box: "training-box", "extended", or a ranges file path.
    #[arg(long, default_value = "training-box")]
    bounds: String,
    /// Explicit start point (kappa,psi,gamma,theta,sigma0[,alpha,lp,lm]);
    /// replaces the Halton multi-start.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    initial: Option<Vec<f64>>,
    /// Halton start points when --initial is absent.
    #[arg(long, default_value_t = 5)]
    starts: usize,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct PriceArgs {
    #[arg(long, value_parser = parse_model)]
    model: Model,
    #[arg(long, value_enum)]
    pricer: PricerChoice,
    #[arg(long, value_parser = parse_kind)]
    kind: OptionKind,
    /// Forward moneyness K e^{-r tau} / S0.
    #[arg(long)]
    moneyness: f64,
    /// Maturity in years.
    #[arg(long)]
    tau: f64,
    /// Model parameters kappa,psi,gamma,theta,sigma0[,alpha,lp,lm].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    params: Vec<f64>,
    /// Network for the requested kind (--pricer ann); only the net matching
    /// --kind is evaluated.
    #[arg(long)]
    call_net: Option<PathBuf>,
    #[arg(long)]
    put_net: Option<PathBuf>,
    #[arg(long, default_value_t = 20_000)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Spot level for a dollar price on top of the relative one.
    #[arg(long)]
    spot: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct GreeksArgs {
    #[arg(long, value_parser = parse_model)]
    model: Model,
    #[arg(long, value_enum, default_value = "ann")]
    pricer: PricerChoice,
    #[arg(long, value_parser = parse_kind)]
    kind: OptionKind,
    #[arg(long)]
    spot: f64,
    #[arg(long)]
    strike: f64,
    /// Maturity in years.
    #[arg(long)]
    tau: f64,
    /// Continuously compounded annual rate.
    #[arg(long, allow_hyphen_values = true)]
    rate: f64,
    /// Model parameters kappa,psi,gamma,theta,sigma0[,alpha,lp,lm].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    params: Vec<f64>,
    /// Network for the requested kind (--pricer ann); only the net matching
    /// --kind is evaluated.
    #[arg(long)]
    call_net: Option<PathBuf>,
    #[arg(long)]
    put_net: Option<PathBuf>,
    #[arg(long, default_value_t = 20_000)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct BenchmarkArgs {
    /// Option chain CSV; its quotes define the pricing workload.
    #[arg(long)]
    chain: PathBuf,
    #[arg(long, value_parser = parse_model)]
    model: Model,
    /// Model parameters kappa,psi,gamma,theta,sigma0[,alpha,lp,lm].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    params: Vec<f64>,
    #[arg(long)]
    call_net: PathBuf,
    #[arg(long)]
    put_net: PathBuf,
    #[arg(long, default_value_t = 20_000)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct PlotDataArgs {
    #[arg(long)]
    chain: PathBuf,
    #[arg(long, value_parser = parse_model)]
    model: Model,
    #[arg(long, value_enum)]
    pricer: PricerChoice,
    /// Model parameters kappa,psi,gamma,theta,sigma0[,alpha,lp,lm].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    params: Vec<f64>,
    #[arg(long)]
    call_net: Option<PathBuf>,
    #[arg(long)]
    put_net: Option<PathBuf>,
    #[arg(long, default_value_t = 20_000)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Maturity slice to emit, in trading days.
    #[arg(long)]
    maturity_days: u32,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();

    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code(&e));
    }

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Error::InvalidParams("--threads must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))
}

/// Exit code for an error: 2 for configuration problems, 3 for numeric
/// failures, 4 for data problems (unreadable, malformed, or empty inputs).
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParams(_) | Error::DimensionMismatch { .. } => 2,
        Error::Domain(_)
        | Error::InversionFailure(_)
        | Error::NonFiniteLoss(_)
        | Error::Numeric(_) => 3,
        Error::Parse { .. }
        | Error::MalformedFile { .. }
        | Error::UnsupportedVersion { .. }
        | Error::EmptyChain(_)
        | Error::Io { .. } => 4,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Price(args) => cmd_price(args),
        Command::Greeks(args) => cmd_greeks(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::PlotData(args) => cmd_plot_data(args),
    }
}

fn write_text(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Write `<out>.manifest.json` echoing the effective configuration of the
/// run that produced `out`. Contains no timestamps or host details, so
/// reruns of the same configuration produce the same manifest.
fn write_manifest(out: &Path, command: &str, config: serde_json::Value) -> Result<()> {
    let manifest = json!({
        "tool": "deepcal",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
    });
    let path = manifest_path(out);
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::MalformedFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    text.push('\n');
    write_text(&path, &text)
}

fn manifest_path(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest.json", out.display()))
}

fn path_json(p: &Path) -> serde_json::Value {
    json!(p.display().to_string())
}

fn opt_path_json(p: &Option<PathBuf>) -> serde_json::Value {
    match p {
        Some(p) => path_json(p),
        None => serde_json::Value::Null,
    }
}

fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let ranges = match &args.ranges {
        Some(path) => ParameterRanges::from_file(path)?,
        None => ParameterRanges::profile(&args.profile).ok_or_else(|| {
            Error::InvalidParams(format!(
                "unknown profile {:?}; use \"pricing\", \"calibration\", or --ranges",
                args.profile
            ))
        })?,
    };

    let started = Instant::now();
    let set = generate_training_set(
        args.model,
        args.kind,
        args.n,
        &ranges,
        args.paths,
        args.seed,
        args.start_index,
    )?;
    save_training_set(&set, &args.out)?;

    let kept = set.samples.len();
    let skipped = set.meta.skipped;
    println!(
        "generated {kept} samples ({skipped} of {} points skipped as unpriceable, {:.1}%) in {:.1}s -> {}",
        args.n,
        100.0 * skipped as f64 / args.n.max(1) as f64,
        started.elapsed().as_secs_f64(),
        args.out.display()
    );

    write_manifest(
        &args.out,
        "gen-data",
        json!({
            "model": args.model.name(),
            "kind": args.kind.name(),
            "n": args.n,
            "paths": args.paths,
            "seed": args.seed,
            "start_index": args.start_index,
            "ranges": ranges,
            "out": path_json(&args.out),
        }),
    )
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let set = load_training_set(&args.data)?;
    let mut sizes = Vec::with_capacity(args.hidden.len() + 2);
    sizes.push(set.input_dim());
    sizes.extend_from_slice(&args.hidden);
    sizes.push(1);

    let mut net = Network::with_topology(&sizes, args.seed)?;
    let opts = TrainOptions {
        max_epochs: args.max_epochs,
        target_mse: args.target_mse,
        ..TrainOptions::default()
    };

    let started = Instant::now();
    let report = deepcal_core::train_lm(&mut net, &set.samples, &opts)?;
    save_network(&net, &args.out)?;

    if let Some(trace) = &args.trace {
        let mut csv = String::from("epoch,mse\n");
        for (epoch, mse) in report.mse_trace.iter().enumerate() {
            csv.push_str(&format!("{epoch},{mse:?}\n"));
        }
        write_text(trace, &csv)?;
    }

    println!(
        "trained {:?} on {} samples: mse {:?} at epoch {} ({}) in {:.1}s -> {}",
        sizes,
        set.samples.len(),
        report.best_mse,
        report.best_epoch,
        report.stop,
        started.elapsed().as_secs_f64(),
        args.out.display()
    );

    write_manifest(
        &args.out,
        "train",
        json!({
            "data": path_json(&args.data),
            "out": path_json(&args.out),
            "trace": opt_path_json(&args.trace),
            "max_epochs": args.max_epochs,
            "target_mse": args.target_mse,
            "seed": args.seed,
            "hidden": args.hidden,
        }),
    )
}

/// Load the networks for a surrogate pricer. `kind` restricts the
/// requirement to the net that will actually be evaluated (single-contract
/// commands); chain commands need both sides of the splice.
fn load_nets(
    call: &Option<PathBuf>,
    put: &Option<PathBuf>,
    kind: Option<OptionKind>,
) -> Result<(Network, Network)> {
    let loaded = |p: &Option<PathBuf>| p.as_ref().map(load_network).transpose();
    let (call_net, put_net) = (loaded(call)?, loaded(put)?);
    match (call_net, put_net, kind) {
        (Some(c), Some(p), _) => Ok((c, p)),
        (Some(c), None, Some(OptionKind::Call)) => Ok((c.clone(), c)),
        (None, Some(p), Some(OptionKind::Put)) => Ok((p.clone(), p)),
        (_, _, Some(k)) => Err(Error::InvalidParams(format!(
            "--pricer ann needs the {} network for --kind {}",
            k.name(),
            k.name()
        ))),
        _ => Err(Error::InvalidParams(
            "--pricer ann needs --call-net and --put-net".into(),
        )),
    }
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let chain = ingest_chain(&args.chain)?;

    let bounds = match CalibrationBounds::profile(&args.bounds, args.model) {
        Some(b) => b,
        None => {
            let ranges = ParameterRanges::from_file(&args.bounds)?;
            CalibrationBounds::from_ranges(args.model, &ranges)?
        }
    };

    let opts = CalibrateOptions {
        starts: args.starts,
        max_iters: args.max_iters,
        ..CalibrateOptions::default()
    };

    let nets;
    let pricer = match args.pricer {
        PricerChoice::Ann => {
            nets = load_nets(&args.call_net, &args.put_net, None)?;
            PricerSpec::Ann {
                call: &nets.0,
                put: &nets.1,
            }
        }
        PricerChoice::Mcs => PricerSpec::Mcs {
            n_paths: args.paths,
            seed: args.seed,
        },
    };

    let started = Instant::now();
    let result = calibrate(
        &chain,
        args.model,
        &pricer,
        args.initial.as_deref(),
        &bounds,
        &opts,
    )?;

    write_text(&args.out, &calibration_csv(args.model, &result.params, result.rel_rmse)?)?;

    println!(
        "calibrated {} to {} quotes: rel-RMSE {:.6} after {} iterations \
         (converged: {}, start {}, clamped {}, unpriceable {}) in {:.1}s -> {}",
        args.model,
        result.n_quotes,
        result.rel_rmse,
        result.iterations,
        result.converged,
        result.start_index,
        result.clamped_quotes,
        result.failed_quotes,
        started.elapsed().as_secs_f64(),
        args.out.display()
    );

    write_manifest(
        &args.out,
        "calibrate",
        json!({
            "chain": path_json(&args.chain),
            "model": args.model.name(),
            "pricer": args.pricer.name(),
            "call_net": opt_path_json(&args.call_net),
            "put_net": opt_path_json(&args.put_net),
            "paths": args.paths,
            "seed": args.seed,
            "bounds": args.bounds,
            "initial": args.initial,
            "starts": args.starts,
            "max_iters": args.max_iters,
            "out": path_json(&args.out),
        }),
    )
}

/// One-row result CSV. Columns hold the variance recursion in its
/// `xi`/`zeta` form (xi = gamma psi / (1 + psi), zeta = gamma / (1 + psi)),
/// which is how fitted parameters are usually quoted.
fn calibration_csv(model: Model, params: &[f64], rel_rmse: f64) -> Result<String> {
    let p = RiskNeutralParams::from_slice(model, params)?;
    let mut csv = String::new();
    match model {
        Model::Duan => {
            csv.push_str("theta,kappa,xi,zeta,sigma0,rel_rmse\n");
            csv.push_str(&format!(
                "{:?},{:?},{:?},{:?},{:?},{:?}\n",
                p.theta(),
                p.kappa(),
                p.xi(),
                p.zeta(),
                p.sigma0(),
                rel_rmse
            ));
        }
        Model::Cts => {
            csv.push_str("theta,kappa,xi,zeta,sigma0,alpha,lambda_plus,lambda_minus,rel_rmse\n");
            csv.push_str(&format!(
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                p.theta(),
                p.kappa(),
                p.xi(),
                p.zeta(),
                p.sigma0(),
                params[5],
                params[6],
                params[7],
                rel_rmse
            ));
        }
    }
    Ok(csv)
}

fn cmd_price(args: PriceArgs) -> Result<()> {
    check_param_dim(args.model, &args.params)?;

    let rel_price = match args.pricer {
        PricerChoice::Ann => {
            let (call_net, put_net) = load_nets(&args.call_net, &args.put_net, Some(args.kind))?;
            let net = match args.kind {
                OptionKind::Call => &call_net,
                OptionKind::Put => &put_net,
            };
            let mut x = Vec::with_capacity(args.model.input_dim());
            x.push(args.moneyness);
            x.push(args.tau);
            x.extend_from_slice(&args.params);
            if net.clamp_input(&mut x)? {
                log::warn!("inputs outside the training box were clamped to its faces");
            }
            net.forward(&x)?.exp()
        }
        PricerChoice::Mcs => {
            let params = RiskNeutralParams::from_slice(args.model, &args.params)?;
            price_mcs(
                &params,
                &PricingRequest {
                    moneyness: args.moneyness,
                    tau: args.tau,
                    n_paths: args.paths,
                    seed: args.seed,
                    kind: args.kind,
                },
            )?
        }
    };

    let dollar = args.spot.map(|s| s * rel_price);
    match dollar {
        Some(d) => println!(
            "{} {}: V/S0 = {:?}, V = {:?}",
            args.model,
            args.kind.name(),
            rel_price,
            d
        ),
        None => println!("{} {}: V/S0 = {:?}", args.model, args.kind.name(), rel_price),
    }

    if let Some(out) = &args.out {
        let mut csv = String::from("model,pricer,kind,moneyness,tau,rel_price,dollar_price\n");
        csv.push_str(&format!(
            "{},{},{},{:?},{:?},{:?},{:?}\n",
            args.model.name(),
            args.pricer.name(),
            args.kind.name(),
            args.moneyness,
            args.tau,
            rel_price,
            dollar.unwrap_or(f64::NAN)
        ));
        write_text(out, &csv)?;
        write_manifest(
            out,
            "price",
            json!({
                "model": args.model.name(),
                "pricer": args.pricer.name(),
                "kind": args.kind.name(),
                "moneyness": args.moneyness,
                "tau": args.tau,
                "params": args.params,
                "call_net": opt_path_json(&args.call_net),
                "put_net": opt_path_json(&args.put_net),
                "paths": args.paths,
                "seed": args.seed,
                "spot": args.spot,
                "out": path_json(out),
            }),
        )?;
    }
    Ok(())
}

fn cmd_greeks(args: GreeksArgs) -> Result<()> {
    check_param_dim(args.model, &args.params)?;

    let nets;
    let pricer = match args.pricer {
        PricerChoice::Ann => {
            nets = load_nets(&args.call_net, &args.put_net, Some(args.kind))?;
            PricerSpec::Ann {
                call: &nets.0,
                put: &nets.1,
            }
        }
        PricerChoice::Mcs => {
            log::warn!(
                "Monte Carlo Greeks share one seed across bumps, but second \
                 differences (gamma) can still be noisy at low path counts"
            );
            PricerSpec::Mcs {
                n_paths: args.paths,
                seed: args.seed,
            }
        }
    };

    let report = greeks(
        args.model,
        args.spot,
        args.strike,
        args.tau,
        args.rate,
        &args.params,
        args.kind,
        &pricer,
    )?;

    println!(
        "{} {} @ S={:?} K={:?} tau={:?} r={:?}",
        args.model,
        args.kind.name(),
        args.spot,
        args.strike,
        args.tau,
        args.rate
    );
    println!("price {:?}", report.price);
    println!("delta {:?}", report.delta);
    println!("gamma {:?}", report.gamma);
    println!("theta {:?}  (dV/dtau per year of remaining maturity)", report.theta);
    println!("rho   {:?}", report.rho);

    if let Some(out) = &args.out {
        let mut csv = String::from("kind,price,delta,gamma,theta,rho,h_spot,h_tau,h_rate\n");
        csv.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            args.kind.name(),
            report.price,
            report.delta,
            report.gamma,
            report.theta,
            report.rho,
            report.h_spot,
            report.h_tau,
            report.h_rate
        ));
        write_text(out, &csv)?;
        write_manifest(
            out,
            "greeks",
            json!({
                "model": args.model.name(),
                "pricer": args.pricer.name(),
                "kind": args.kind.name(),
                "spot": args.spot,
                "strike": args.strike,
                "tau": args.tau,
                "rate": args.rate,
                "params": args.params,
                "call_net": opt_path_json(&args.call_net),
                "put_net": opt_path_json(&args.put_net),
                "paths": args.paths,
                "seed": args.seed,
                "out": path_json(out),
            }),
        )?;
    }
    Ok(())
}

const BENCHMARK_CSV_HEADER: &str = "pricer,quotes,seconds\n";

fn cmd_benchmark(args: BenchmarkArgs) -> Result<()> {
    check_param_dim(args.model, &args.params)?;

    let chain = match ingest_chain(&args.chain) {
        Ok(chain) => chain,
        // An empty workload is a valid benchmark input: report nothing.
        Err(Error::EmptyChain(reason)) => {
            log::info!("empty chain ({reason}); writing an empty table");
            write_text(&args.out, BENCHMARK_CSV_HEADER)?;
            return write_manifest(&args.out, "benchmark", benchmark_config(&args));
        }
        Err(e) => return Err(e),
    };

    let call_net = load_network(&args.call_net)?;
    let put_net = load_network(&args.put_net)?;
    let ann = PricerSpec::Ann {
        call: &call_net,
        put: &put_net,
    };

    let n = chain.quotes.len();
    let rn = RiskNeutralParams::from_slice(args.model, &args.params)?;
    let specs: Vec<QuoteSpec> = chain
        .quotes
        .iter()
        .map(|q| {
            Ok(QuoteSpec {
                moneyness: chain.forward_moneyness(q),
                steps: deepcal_core::steps_for_tau(q.tau())?,
                kind: q.kind,
            })
        })
        .collect::<Result<_>>()?;

    let mcs_start = Instant::now();
    let mcs_prices = price_chain_mcs(&rn, &specs, args.paths, args.seed)?;
    let mcs_seconds = mcs_start.elapsed().as_secs_f64();

    let ann_start = Instant::now();
    let mut ann_sum = 0.0;
    for q in &chain.quotes {
        let v = otm_value(args.model, chain.forward_moneyness(q), q.tau(), &args.params, &ann)?;
        ann_sum += v.value.exp();
    }
    let ann_seconds = ann_start.elapsed().as_secs_f64();

    let mcs_sum: f64 = mcs_prices.iter().sum();
    log::info!(
        "mean relative price: mcs {:?}, ann {:?}",
        mcs_sum / n as f64,
        ann_sum / n as f64
    );

    let mut csv = String::from(BENCHMARK_CSV_HEADER);
    csv.push_str(&format!("mcs,{n},{mcs_seconds:?}\n"));
    csv.push_str(&format!("ann,{n},{ann_seconds:?}\n"));
    write_text(&args.out, &csv)?;

    println!(
        "{} quotes: mcs {:.4}s, ann {:.4}s ({:.1}x) -> {}",
        n,
        mcs_seconds,
        ann_seconds,
        mcs_seconds / ann_seconds,
        args.out.display()
    );

    write_manifest(&args.out, "benchmark", benchmark_config(&args))
}

fn benchmark_config(args: &BenchmarkArgs) -> serde_json::Value {
    json!({
        "chain": path_json(&args.chain),
        "model": args.model.name(),
        "params": args.params,
        "call_net": path_json(&args.call_net),
        "put_net": path_json(&args.put_net),
        "paths": args.paths,
        "seed": args.seed,
        "out": path_json(&args.out),
    })
}

fn cmd_plot_data(args: PlotDataArgs) -> Result<()> {
    check_param_dim(args.model, &args.params)?;
    let chain = ingest_chain(&args.chain)?;

    let mut quotes: Vec<_> = chain
        .quotes
        .iter()
        .filter(|q| q.maturity_days == args.maturity_days)
        .collect();
    if quotes.is_empty() {
        return Err(Error::EmptyChain(format!(
            "no quotes at maturity {} days in {}",
            args.maturity_days,
            args.chain.display()
        )));
    }
    quotes.sort_by(|a, b| a.strike.total_cmp(&b.strike));

    let nets;
    let pricer = match args.pricer {
        PricerChoice::Ann => {
            nets = load_nets(&args.call_net, &args.put_net, None)?;
            PricerSpec::Ann {
                call: &nets.0,
                put: &nets.1,
            }
        }
        PricerChoice::Mcs => PricerSpec::Mcs {
            n_paths: args.paths,
            seed: args.seed,
        },
    };

    let mut csv = String::from("strike,kind,mid,model_price,iv_market,iv_model\n");
    for q in &quotes {
        let mid = q.mid();
        let m = chain.forward_moneyness(q);
        let v = otm_value(args.model, m, q.tau(), &args.params, &pricer)?;
        let model_price = if v.failed {
            f64::NAN
        } else {
            chain.spot * v.value.exp()
        };
        let iv = |price: f64| {
            if !price.is_finite() {
                return f64::NAN;
            }
            implied_vol(q.kind, price, chain.spot, q.strike, chain.rate, q.tau())
                .unwrap_or(f64::NAN)
        };
        csv.push_str(&format!(
            "{:?},{},{:?},{:?},{:?},{:?}\n",
            q.strike,
            q.kind.name(),
            mid,
            model_price,
            iv(mid),
            iv(model_price)
        ));
    }
    write_text(&args.out, &csv)?;
    println!(
        "{} quotes at {} days -> {}",
        quotes.len(),
        args.maturity_days,
        args.out.display()
    );

    write_manifest(
        &args.out,
        "plot-data",
        json!({
            "chain": path_json(&args.chain),
            "model": args.model.name(),
            "pricer": args.pricer.name(),
            "params": args.params,
            "call_net": opt_path_json(&args.call_net),
            "put_net": opt_path_json(&args.put_net),
            "paths": args.paths,
            "seed": args.seed,
            "maturity_days": args.maturity_days,
            "out": path_json(&args.out),
        }),
    )
}

fn check_param_dim(model: Model, params: &[f64]) -> Result<()> {
    if params.len() != model.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.param_dim(),
            got: params.len(),
        });
    }
    Ok(())
}
