//! `softclik` command-line tool: dataset generation, operator training,
//! evaluation, and closed-loop runs.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use softclik::cc_model::CcModel;
use softclik::clik::{export_trajectory, run_clik, ClikConfig, ExportFormat};
use softclik::dataset::{self, Dataset, GenerateOptions};
use softclik::neuralop::OperatorNet;
use softclik::tasks::{TaskKind, TaskSpec};
use softclik::trainer::{self, evaluate, load_checkpoint, save_checkpoint, standardization};
use softclik::{GainMatrix, ShapeModel};

use config::{parse_list, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "softclik", version, about = "Shape-space closed-loop inverse kinematics for soft robots")]
struct Cli {
    /// TOML configuration; command-line flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Log progress (repeat for more detail). `RUST_LOG` overrides this.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample actuations, solve the rod, and write a dataset.
    Generate(GenerateArgs),
    /// Train the operator network on a dataset.
    Train(TrainArgs),
    /// Report test-split metrics for a checkpoint.
    Eval(EvalArgs),
    /// Run closed-loop inverse kinematics and write CSV and SVG outputs.
    Run(RunArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Number of samples.
    #[arg(long)]
    n: Option<usize>,
    /// Arclength nodes per sample.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    ns: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "dataset.bin")]
    out: PathBuf,
    /// Actuation bounds `lo,hi` applied to every fiber.
    #[arg(long = "box", value_name = "LO,HI", allow_hyphen_values = true)]
    bounds: Option<String>,
    /// Worker threads (defaults to `SOFTCLIK_THREADS` or all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Also write the samples as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "model.ckpt")]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "batch-size", alias = "batch")]
    batch_size: Option<usize>,
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long = "lr-final")]
    lr_final: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Loss history CSV (default `<out>.history.csv`).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Split seed; must match the one used for training.
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluate on every sample instead of the test split.
    #[arg(long)]
    all: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// `cc` or `neural`.
    #[arg(long)]
    model: Option<String>,
    /// `pos_fixed`, `pos_opt`, `dist_fixed` or `dist_opt`.
    #[arg(long)]
    task: Option<String>,
    /// Target point `x,y` (cc) or `x,y,z` (neural).
    #[arg(long, allow_hyphen_values = true)]
    target: Option<String>,
    /// Body coordinate for the fixed-point tasks.
    #[arg(long)]
    sbar: Option<f64>,
    /// Gain: one value for `k·I`, or the diagonal.
    #[arg(long = "K", alias = "gain", allow_hyphen_values = true)]
    gain: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tend: Option<f64>,
    /// Initial actuation (defaults to zero).
    #[arg(long, allow_hyphen_values = true)]
    q0: Option<String>,
    /// Damped-least-squares factor; 0 gives a plain solve.
    #[arg(long)]
    damping: Option<f64>,
    /// Do not clamp neural runs to the training box.
    #[arg(long)]
    no_clamp: bool,
    /// Constant-curvature segment length.
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output prefix: writes `<out>.csv`, `<out>.svg` and `<out>.resolved.toml`.
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<softclik::Error> for Failure {
    fn from(e: softclik::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn usage<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> CmdResult {
    let mut cfg = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(Failure::Runtime(anyhow!("config file not found: {}", path.display())));
            }
            usage(RunConfig::load(path))?
        }
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Generate(a) => generate(&mut cfg, a),
        Command::Train(a) => train(&mut cfg, a),
        Command::Eval(a) => eval(&mut cfg, a),
        Command::Run(a) => run(&mut cfg, a),
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn env_threads() -> Result<Option<usize>, Failure> {
    match std::env::var("SOFTCLIK_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Usage(anyhow!("SOFTCLIK_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    if !path.exists() {
        return Err(Failure::Runtime(anyhow!("dataset not found: {}", path.display())));
    }
    Ok(Dataset::load(path).with_context(|| format!("cannot load dataset {}", path.display()))?)
}

fn load_net(path: &Path) -> Result<OperatorNet, Failure> {
    if !path.exists() {
        return Err(Failure::Runtime(anyhow!("checkpoint not found: {}", path.display())));
    }
    Ok(load_checkpoint(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?)
}

fn generate(cfg: &mut RunConfig, a: GenerateArgs) -> CmdResult {
    if let Some(n) = a.n {
        cfg.dataset.n = n;
    }
    if let Some(ns) = a.ns {
        cfg.dataset.n_s = ns as usize;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(b) = &a.bounds {
        let v = usage(parse_list(b))?;
        if v.len() != 2 {
            return Err(Failure::Usage(anyhow!("--box expects `lo,hi`, got `{b}`")));
        }
        let m = cfg.dataset.box_lo.len();
        cfg.dataset.box_lo = vec![v[0]; m];
        cfg.dataset.box_hi = vec![v[1]; m];
    }
    if a.workers.is_some() {
        cfg.dataset.workers = a.workers;
    }
    if cfg.dataset.n == 0 {
        return Err(Failure::Usage(anyhow!("--n must be positive")));
    }
    if cfg.dataset.n_s < 2 {
        return Err(Failure::Usage(anyhow!("need at least two arclength nodes, got {}", cfg.dataset.n_s)));
    }
    let params = usage(cfg.rod.params())?;
    let bounds = usage(cfg.dataset.bounds())?;
    let workers = match (cfg.dataset.workers, env_threads()?) {
        (Some(w), Some(e)) => Some(w.min(e)),
        (w, e) => w.or(e),
    };
    let opts = GenerateOptions { n: cfg.dataset.n, n_s: cfg.dataset.n_s, seed: cfg.seed, tol: cfg.dataset.tol, workers };

    let start = Instant::now();
    let (ds, report) = dataset::generate(&params, &bounds, &opts)?;
    let wall = start.elapsed().as_secs_f64();
    ds.save(&a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    if let Some(csv) = &a.csv {
        ds.export_csv(csv).with_context(|| format!("cannot write {}", csv.display()))?;
    }
    let text = format!(
        "requested={}\nstored={}\nfailed_solves={}\ndropped_slots={}\nwall_time_s={wall:.3}\n",
        report.requested, report.stored, report.failed_solves, report.dropped_slots
    );
    let report_path = sidecar(&a.out, ".report.txt");
    std::fs::write(&report_path, &text).with_context(|| format!("cannot write {}", report_path.display()))?;
    cfg.echo(&sidecar(&a.out, ".resolved.toml"))?;
    print!("{text}");
    Ok(())
}

fn train(cfg: &mut RunConfig, a: TrainArgs) -> CmdResult {
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.lr0 {
        cfg.train.lr0 = v;
    }
    if let Some(v) = a.lr_final {
        cfg.train.lr_final = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let mut tc = cfg.train.config(cfg.seed);
    usage(tc.validate().map_err(anyhow::Error::from))?;
    let bounds = usage(cfg.dataset.bounds())?;

    let ds = load_dataset(&a.data)?;
    let (train_set, val_set, test_set) = usage(
        dataset::split(&ds, cfg.dataset.fractions, cfg.seed).context("invalid split fractions"),
    )?;
    log::info!("split: {} train, {} validation, {} test", train_set.len(), val_set.len(), test_set.len());
    let net = usage(
        OperatorNet::three_fiber(&bounds, standardization(&train_set), cfg.seed).context("cannot build network"),
    )?;
    tc.checkpoint_path = Some(a.out.clone());
    let (best, history) = trainer::train(net, &train_set, &val_set, &tc)?;
    save_checkpoint(&best, &a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    let history_path = a.history.unwrap_or_else(|| sidecar(&a.out, ".history.csv"));
    history.save_csv(&history_path).with_context(|| format!("cannot write {}", history_path.display()))?;
    cfg.echo(&sidecar(&a.out, ".resolved.toml"))?;

    println!("best_epoch={}", history.best_epoch);
    println!("best_val_mse={}", history.best_val_mse());
    if !test_set.is_empty() {
        let m = evaluate(&best, &test_set)?;
        println!("test_mse={}", m.mse);
        println!("test_l2_relative={}", m.l2_relative);
    }
    Ok(())
}

fn eval(cfg: &mut RunConfig, a: EvalArgs) -> CmdResult {
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let net = load_net(&a.checkpoint)?;
    let ds = load_dataset(&a.data)?;
    let test = if a.all {
        ds
    } else {
        usage(dataset::split(&ds, cfg.dataset.fractions, cfg.seed).context("invalid split fractions"))?.2
    };
    let m = evaluate(&net, &test)?;
    println!("samples={}", test.len());
    println!("mse={}", m.mse);
    println!("mse_physical={}", m.mse_physical);
    println!("l2_relative={}", m.l2_relative);
    Ok(())
}

fn run(cfg: &mut RunConfig, a: RunArgs) -> CmdResult {
    let c = &mut cfg.clik;
    if let Some(v) = a.model {
        c.model = v;
    }
    if let Some(g) = &a.gain {
        c.gain = usage(parse_list(g))?;
    }
    if let Some(v) = a.dt {
        c.dt = v;
    }
    if let Some(v) = a.tend {
        c.t_end = v;
    }
    if let Some(q) = &a.q0 {
        c.q0 = Some(usage(parse_list(q))?);
    }
    if let Some(v) = a.damping {
        c.damping = v;
    }
    if a.no_clamp {
        c.clamp = false;
    }
    if let Some(v) = a.length {
        c.cc_length = v;
    }
    let t = &mut cfg.task;
    if let Some(v) = a.task {
        t.kind = v;
    }
    if let Some(v) = &a.target {
        t.target = Some(usage(parse_list(v))?);
    }
    if let Some(v) = a.sbar {
        t.s_bar = v;
    }

    let kind: TaskKind = usage(cfg.task.kind.parse::<TaskKind>().map_err(anyhow::Error::from))?;
    let target = match &cfg.task.target {
        Some(v) => DVector::from_vec(v.clone()),
        None => return Err(Failure::Usage(anyhow!("a target point is required (--target)"))),
    };

    let (model, train_box): (Box<dyn ShapeModel>, _) = match cfg.clik.model.as_str() {
        "cc" => (Box::new(usage(CcModel::new(cfg.clik.cc_length).context("invalid cc_length"))?), None),
        "neural" => {
            let Some(path) = &a.checkpoint else {
                return Err(Failure::Usage(anyhow!("the neural model needs --checkpoint")));
            };
            let net = load_net(path)?;
            let bounds = match net.train_box.clone() {
                Some(b) => b,
                None => usage(cfg.dataset.bounds())?,
            };
            (Box::new(net), Some(bounds))
        }
        other => return Err(Failure::Usage(anyhow!("unknown model `{other}` (expected `cc` or `neural`)"))),
    };
    let m = model.actuation_dim();
    if target.len() != model.ambient_dim() {
        return Err(Failure::Usage(anyhow!(
            "target has {} coordinates but the {} model lives in {} dimensions",
            target.len(),
            cfg.clik.model,
            model.ambient_dim()
        )));
    }
    let spec = TaskSpec::square(kind, target, Some(cfg.task.s_bar), m).map_err(|e| {
        Failure::Usage(anyhow!(
            "{e}. Task `{kind}` on the {} model ({m} actuator(s)) cannot be inverted; pick a task whose dimension equals {m}",
            cfg.clik.model
        ))
    })?;
    let p = spec.dim();

    let gain = match cfg.clik.gain.as_slice() {
        [k] => GainMatrix::scalar(p, *k),
        diag if diag.len() == p => GainMatrix::diagonal(diag),
        diag => {
            return Err(Failure::Usage(anyhow!("gain has {} entries; give one or {p}", diag.len())));
        }
    };
    let mut cc = ClikConfig::new(usage(gain.context("invalid gain"))?);
    cc.dt = cfg.clik.dt;
    cc.t_end = cfg.clik.t_end;
    cc.damping = cfg.clik.damping;
    cc.cond_warn = cfg.clik.cond_warn;
    cc.snapshot_every = cfg.clik.snapshot_every;
    if cfg.clik.clamp {
        cc.clamp = train_box;
    }
    usage(cc.validate().map_err(anyhow::Error::from))?;

    let q0 = match &cfg.clik.q0 {
        Some(v) if v.len() == m => DVector::from_vec(v.clone()),
        Some(v) => return Err(Failure::Usage(anyhow!("q0 has {} entries; the model has {m} actuator(s)", v.len()))),
        None => DVector::zeros(m),
    };

    let traj = run_clik(&spec, model.as_ref(), &q0, &cc)?;
    let csv = sidecar(&a.out, ".csv");
    let svg = sidecar(&a.out, ".svg");
    export_trajectory(&traj, &csv, ExportFormat::Csv).with_context(|| format!("cannot write {}", csv.display()))?;
    export_trajectory(&traj, &svg, ExportFormat::Svg).with_context(|| format!("cannot write {}", svg.display()))?;
    cfg.echo(&sidecar(&a.out, ".resolved.toml"))?;

    let q_end = traj.final_actuation().expect("trajectory has the initial state");
    println!("steps={}", traj.len() - 1);
    println!("initial_error={}", traj.errors[0]);
    println!("final_error={}", traj.errors[traj.len() - 1]);
    println!("final_q={}", q_end.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
    Ok(())
}
