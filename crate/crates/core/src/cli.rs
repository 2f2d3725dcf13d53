//! Command-line front end.
//!
//! Every subcommand accepts `--config FILE`, a flat TOML table whose keys are
//! flag names (`pairs = 100`, `x0 = [0.0, 1.0]`, `svg = true`). File values
//! are applied only for flags absent from the command line.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{format_reports, run_bench, BenchOptions, Scale};
use crate::bounds::{composition_factor, mean_var_bounds, mismatch_bounds, BoundInputs};
use crate::data::{dataset_to_string, generate_pairs, read_dataset, GenConfig, NoiseSpec};
use crate::domain::{BoxDomain, ParamVec, StateVec};
use crate::error::{check_dim, FlowError, Result};
use crate::net::{load_model, save_model, Activation, AdamConfig, Network, NetworkSpec};
use crate::rng::Rng;
use crate::rollout::{predict, trajectory_csv, DeltaSchedule};
use crate::systems::{integrate_trajectory, CascadeParams, SystemDef, SystemId, ORACLE_STEP};
use crate::train::{train, write_loss_history, TrainConfig};
use crate::uq::{mc_statistics, reference_statistics, uq_statistics, Density, RuleSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "flowmap", version, about = "Learn flow maps of parameterized ODEs and quantify parameter uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample training pairs from a benchmark system.
    #[command(after_help = "Output: CSV with '# key = value' metadata lines, then the header \
                            delta,x_in_1..x_in_d,alpha_1..alpha_l,x_out_1..x_out_d")]
    Generate(GenerateArgs),
    /// Train a residual network on a pair file.
    #[command(after_help = "Writes the model as JSON. The optional loss file has columns epoch,loss[,val_loss].")]
    Train(TrainArgs),
    /// Roll a trained model forward from one initial state.
    #[command(after_help = "Output CSV columns: t,x_1..x_d")]
    Predict(PredictArgs),
    /// Mean and variance of model predictions over a parameter box.
    #[command(after_help = "Output CSV columns: t,mean_1..mean_d,var_1..var_d and, unless --no-reference, \
                            ref_mean_1..ref_mean_d,ref_var_1..ref_var_d,err_mean,err_var")]
    Uq(UqArgs),
    /// Evaluate the composition error bounds.
    Bound(BoundArgs),
    /// Run the end-to-end benchmark cases.
    #[command(after_help = "Writes per example exN_loss.csv (epoch,loss), exN_traj_error.csv (t,linf,l2), \
                            exN_uq.csv (see uq), exN_bounds.csv (n,C,mean_bound,var_bound,linf_error,mean_error,var_error), \
                            ex4_response.csv (I,model_e3,reference_e3,model_drift) and summary.csv \
                            (example,metric,value,limit,pass).")]
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// linear-scalar, linear-2d, oscillator or cell-cascade
    #[arg(long)]
    system: SystemId,
    #[arg(long)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of additive Gaussian noise on both pair ends
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    max_lag: f64,
    /// Parameter box as comma-separated lo:hi (or a single fixed value) per parameter
    #[arg(long)]
    alpha_box: Option<String>,
    /// Output file; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Hidden layers and width, e.g. 3,40
    #[arg(long, default_value = "3,40")]
    spec: String,
    #[arg(long, default_value = "tanh")]
    activation: Activation,
    /// Squash the increment with tanh
    #[arg(long)]
    output_tanh: bool,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long, default_value_t = 30)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.0)]
    validation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated initial state
    #[arg(long, allow_hyphen_values = true)]
    x0: String,
    /// Comma-separated parameters
    #[arg(long, allow_hyphen_values = true)]
    alpha: String,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct UqArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    system: SystemId,
    #[arg(long, allow_hyphen_values = true)]
    x0: String,
    /// gl:N, gl:NxN.. (one count per random parameter) or mc:SAMPLES
    #[arg(long, default_value = "gl:5")]
    rule: RuleSpec,
    /// Parameter box as comma-separated lo:hi or fixed values; `reduced:I` for
    /// the four-parameter cascade study at input I; system default when absent
    #[arg(long, allow_hyphen_values = true)]
    alpha_box: Option<String>,
    #[arg(long)]
    steps: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the true-system reference columns
    #[arg(long)]
    no_reference: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long)]
    n: usize,
    #[arg(long = "L")]
    lipschitz: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0.0)]
    ct: f64,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    ct_tilde: Option<f64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated example ids
    #[arg(long, default_value = "1,2,3,4")]
    examples: String,
    #[arg(long, default_value = "desk")]
    scale: Scale,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    /// Also render SVG line charts
    #[arg(long)]
    svg: bool,
    /// Override the number of training pairs
    #[arg(long)]
    pairs: Option<usize>,
    /// Override the number of epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the initial state of every selected example
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
}

/// Exit code for an error: 1 for bad input, 2 for failures while running.
pub fn exit_code(err: &FlowError) -> i32 {
    match err {
        FlowError::Diverged { .. }
        | FlowError::NonFiniteState { .. }
        | FlowError::BoundOverflow { .. }
        | FlowError::EmptyBatch => EXIT_RUNTIME,
        FlowError::Io { source, .. } if source.kind() != std::io::ErrorKind::NotFound => EXIT_RUNTIME,
        _ => EXIT_INVALID,
    }
}

pub fn parse_list(what: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| FlowError::invalid(format!("{what}: '{}' is not a number", s.trim())))
        })
        .collect()
}

/// `lo:hi` or a fixed value per dimension; `reduced:I` for the cascade study box.
pub fn parse_box(text: &str) -> Result<BoxDomain> {
    if let Some(rest) = text.strip_prefix("reduced:") {
        let input: f64 = rest
            .trim()
            .parse()
            .map_err(|_| FlowError::invalid(format!("reduced box input '{rest}' is not a number")))?;
        return Ok(CascadeParams::reduced_box((input, input)));
    }
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for part in text.split(',') {
        let (a, b) = part.split_once(':').unwrap_or((part, part));
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| FlowError::invalid(format!("box entry '{part}': expected lo:hi or a number")))
        };
        lo.push(parse(a)?);
        hi.push(parse(b)?);
    }
    BoxDomain::new(lo, hi)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| FlowError::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| FlowError::io("<stdout>", e)),
    }
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let def = SystemDef::new(a.system);
    let mut cfg = GenConfig::for_system(a.system, a.pairs, a.seed);
    cfg.noise = NoiseSpec { sigma: a.sigma };
    cfg.idelta = BoxDomain::interval(0.0, a.max_lag)?;
    if let Some(b) = &a.alpha_box {
        cfg.ialpha = parse_box(b)?;
        check_dim("parameter box", def.l, cfg.ialpha.dim())?;
    }
    let ds = generate_pairs(&cfg)?;
    emit(a.out.as_deref(), &dataset_to_string(&ds))
}

fn parse_spec(text: &str, d: usize, l: usize) -> Result<NetworkSpec> {
    let bad = || FlowError::invalid(format!("--spec '{text}': expected LAYERS,WIDTH such as 3,40"));
    let (m, n) = text.split_once(',').ok_or_else(bad)?;
    let m: usize = m.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    let spec = NetworkSpec::new(d, l, m, n);
    spec.validate()?;
    Ok(spec)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let ds = read_dataset(&a.data)?;
    let spec = parse_spec(&a.spec, ds.d, ds.l)?
        .with_activation(a.activation)
        .with_output_tanh(a.output_tanh);
    let net = Network::init(spec, &mut Rng::new(a.seed).substream("init"))?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        adam: AdamConfig {
            lr: a.lr,
            ..AdamConfig::default()
        },
        seed: a.seed,
        validation_fraction: a.validation,
        log_every: (a.epochs / 20).max(1),
    };
    let (net, report) = train(net, &ds, &cfg)?;
    save_model(&net, &a.out)?;
    if let Some(p) = &a.loss_csv {
        write_loss_history(&report, p)?;
    }
    log::info!(
        "final loss {:.3e} after {} epochs ({:.1} s)",
        report.final_loss,
        a.epochs,
        report.wall_seconds
    );
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let net = load_model(&a.model)?;
    let spec = net.spec();
    let x0 = parse_list("--x0", &a.x0)?;
    check_dim("--x0 (state dimension of the model)", spec.d, x0.len())?;
    let alpha = parse_list("--alpha", &a.alpha)?;
    check_dim("--alpha (parameter dimension of the model)", spec.l, alpha.len())?;
    let sched = DeltaSchedule::uniform(a.delta, a.steps)?;
    let traj = predict(&net, &StateVec::new(x0), &ParamVec::new(alpha), &sched)?;
    emit(a.out.as_deref(), &trajectory_csv(&traj))
}

fn cmd_uq(a: UqArgs) -> Result<()> {
    let net = load_model(&a.model)?;
    let def = SystemDef::new(a.system);
    check_dim("model state dimension", def.d, net.spec().d)?;
    check_dim("model parameter dimension", def.l, net.spec().l)?;
    let x0 = parse_list("--x0", &a.x0)?;
    check_dim("--x0 (state dimension of the model)", def.d, x0.len())?;
    let x0 = StateVec::new(x0);
    let domain = match &a.alpha_box {
        Some(b) => parse_box(b)?,
        None => def.default_ialpha.clone(),
    };
    check_dim("--alpha-box", def.l, domain.dim())?;
    let sched = DeltaSchedule::uniform(a.delta, a.steps)?;
    let times = sched.times();
    let model_eval = |alpha: &ParamVec| predict(&net, &x0, alpha, &sched);
    let (stats, reference) = match &a.rule {
        RuleSpec::GaussLegendre(_) => {
            let rule = a.rule.quadrature(&domain)?;
            let stats = uq_statistics(model_eval, &rule)?;
            let reference = if a.no_reference {
                None
            } else {
                Some(reference_statistics(&def, &x0, &rule, &times)?)
            };
            (stats, reference)
        }
        RuleSpec::MonteCarlo(n) => {
            let density = Density::UniformBox(domain);
            let rng = Rng::new(a.seed);
            let stats = mc_statistics(model_eval, &density, *n, &rng)?;
            let reference = if a.no_reference {
                None
            } else {
                // same draws as the model statistics
                let oracle = |alpha: &ParamVec| integrate_trajectory(&def, &x0, alpha, &times, 1.0 / ORACLE_STEP);
                Some(mc_statistics(oracle, &density, *n, &rng)?)
            };
            (stats, reference)
        }
    };
    emit(a.out.as_deref(), &stats.to_csv(reference.as_ref())?)
}

/// Labeled table printed by `bound`.
pub fn bound_report(inp: &BoundInputs, mismatch: bool) -> Result<String> {
    let c = composition_factor(inp.n, inp.lipschitz, inp.delta)?;
    let (mean, var) = mean_var_bounds(inp)?;
    let mut rows = vec![
        ("n", inp.n.to_string()),
        ("L", inp.lipschitz.to_string()),
        ("Delta", inp.delta.to_string()),
        ("eps", inp.sup_error.to_string()),
        ("C(n, L, Delta)", c.to_string()),
        ("mean bound", mean.to_string()),
        ("variance bound", var.to_string()),
    ];
    if mismatch {
        let (m, v) = mismatch_bounds(inp)?;
        rows.push(("mismatch mean bound", m.to_string()));
        rows.push(("mismatch variance bound", v.to_string()));
    }
    Ok(rows.iter().map(|(k, v)| format!("{k:<24} {v}\n")).collect())
}

fn cmd_bound(a: BoundArgs) -> Result<()> {
    let given = [a.gamma, a.eta, a.ct_tilde];
    let mismatch = given.iter().any(Option::is_some);
    if mismatch && !given.iter().all(Option::is_some) {
        return Err(FlowError::invalid("--gamma, --eta and --ct-tilde must be given together"));
    }
    let inp = BoundInputs {
        n: a.n,
        lipschitz: a.lipschitz,
        delta: a.delta,
        sup_error: a.eps,
        ct: a.ct,
        ct_tilde: a.ct_tilde.unwrap_or(0.0),
        gamma: a.gamma.unwrap_or(0.0),
        eta: a.eta.unwrap_or(0.0),
    };
    inp.validate()?;
    emit(None, &bound_report(&inp, mismatch)?)
}

fn cmd_bench(a: BenchArgs) -> Result<bool> {
    let examples = a
        .examples
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u8>()
                .map_err(|_| FlowError::invalid(format!("--examples: '{s}' is not an example id")))
        })
        .collect::<Result<Vec<_>>>()?;
    let opts = BenchOptions {
        scale: a.scale,
        seed: a.seed,
        out_dir: a.out.clone(),
        svg: a.svg,
        pairs: a.pairs,
        epochs: a.epochs,
        x0: a.x0.as_deref().map(|s| parse_list("--x0", s)).transpose()?,
    };
    let reports = run_bench(&examples, &opts)?;
    eprint!("{}", format_reports(&reports));
    eprintln!("summary written to {}", a.out.join("summary.csv").display());
    Ok(reports.iter().all(|r| r.passed()))
}

/// Splices values from a `--config` file into `args` for flags not given.
pub fn apply_config(mut args: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = if let Some(p) = args[pos].strip_prefix("--config=") {
        let p = p.to_string();
        args.remove(pos);
        p
    } else {
        if pos + 1 >= args.len() {
            return Err(FlowError::invalid("--config needs a file path"));
        }
        args.remove(pos);
        args.remove(pos)
    };
    let text = fs::read_to_string(&path).map_err(|e| FlowError::io(&path, e))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| FlowError::invalid(format!("config {path}: {}", e.message())))?;
    let sub = args
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map(|i| i + 1)
        .ok_or_else(|| FlowError::invalid("--config given without a subcommand"))?;

    let mut extra = Vec::new();
    for (key, value) in &table {
        let flag = format!("--{}", key.replace('_', "-"));
        if args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}="))) {
            continue;
        }
        let scalar = |v: &toml::Value| -> Result<String> {
            match v {
                toml::Value::String(s) => Ok(s.clone()),
                toml::Value::Integer(i) => Ok(i.to_string()),
                toml::Value::Float(f) => Ok(f.to_string()),
                _ => Err(FlowError::invalid(format!("config key '{key}': unsupported value"))),
            }
        };
        match value {
            toml::Value::Boolean(true) => extra.push(flag),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                let joined = items.iter().map(scalar).collect::<Result<Vec<_>>>()?.join(",");
                extra.push(format!("{flag}={joined}"));
            }
            v => extra.push(format!("{flag}={}", scalar(v)?)),
        }
    }
    args.splice(sub + 1..sub + 1, extra);
    Ok(args)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("FLOWMAP_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| FlowError::invalid(format!("FLOWMAP_THREADS='{v}' must be a positive integer")))?;
        // a pool may already exist when embedded; keep it then
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run(args: Vec<String>) -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let result = configure_threads().and_then(|()| apply_config(args));
    let args = match result {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(a).map(|()| true),
        Command::Train(a) => cmd_train(a).map(|()| true),
        Command::Predict(a) => cmd_predict(a).map(|()| true),
        Command::Uq(a) => cmd_uq(a).map(|()| true),
        Command::Bound(a) => cmd_bound(a).map(|()| true),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_INVALID,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
