use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use clifford_check::{report_csv, report_table, run_all, run_suite, CheckConfig, Suite};
use clifford_cli::bench::{self, Op};
use clifford_cli::manifest::{beside, RunManifest};
use clifford_cli::plot::{self, Kind, Table};
use clifford_cli::{CmdResult, Failure, EXIT_DIVERGED, EXIT_OK, EXIT_PROPERTY};
use clifford_core::algebra::CL20_PRODUCT;
use clifford_core::datagen::{gen_advection2d, gen_maxwell3d, read_clf, write_clf, AdvectionParams, MaxwellParams, VelocityLaw};
use clifford_core::layers::Dtype;
use clifford_core::models::{
    check_compatible, curve_csv, evaluate, load_model, load_trainer, save_checkpoint, windows, Family, IdentityModel,
    Metrics, Predictor, Surrogate, SurrogateConfig, TrainConfig, Trainer, ZeroModel, CHECKPOINT_META, CHECKPOINT_OPTIMIZER,
    CHECKPOINT_PARAMS, ROLLOUT_STEPS,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Clifford-algebra layers, toy PDE data and neural surrogates.
#[derive(Parser)]
#[command(name = "clifford", version)]
struct Cli {
    /// Worker threads for data generation and layers.
    #[arg(long, env = "CLIFFORD_THREADS", default_value_t = 1, global = true)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a trajectory dataset as a CLF1 file.
    Gen(GenArgs),
    /// Train a surrogate on a dataset.
    Train(TrainArgs),
    /// Print metrics of a checkpoint or baseline as JSON.
    Eval(EvalArgs),
    /// Run the property suites.
    Check(CheckArgs),
    /// Time a core kernel.
    Bench(BenchArgs),
    /// Render a CSV table as SVG.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Pde {
    Advection2d,
    Maxwell3d,
}

#[derive(Clone, Copy, ValueEnum)]
enum Velocity {
    Constant,
    SolidRotation,
}

#[derive(Clone, Copy, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    pde: Pde,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    traj: Option<usize>,
    /// Stored frames per trajectory.
    #[arg(long)]
    steps: Option<usize>,
    /// Frame spacing (advection) or leapfrog step (maxwell).
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    velocity: Option<Velocity>,
    #[arg(long)]
    max_speed: Option<f64>,
    #[arg(long)]
    blobs: Option<usize>,
    /// Leapfrog steps between stored maxwell frames.
    #[arg(long)]
    substeps: Option<usize>,
    #[arg(long)]
    min_sources: Option<usize>,
    #[arg(long)]
    max_sources: Option<usize>,
    /// Storage precision; the generator default when absent.
    #[arg(long, value_enum)]
    dtype: Option<DtypeArg>,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON file with any of the training and architecture keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint directory.
    #[arg(long)]
    out: PathBuf,
    /// Continue from a checkpoint directory.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<usize>>,
    #[arg(long)]
    history: Option<usize>,
    #[arg(long)]
    kernel: Option<usize>,
    #[arg(long)]
    norm_groups: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    valid_frac: Option<f64>,
    #[arg(long)]
    warmup_frac: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint directory, or `identity` / `zero` for the baselines.
    #[arg(long)]
    ckpt: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "onestep,scalar,vector,rollout")]
    metrics: Vec<String>,
    /// History length of the baselines.
    #[arg(long, default_value_t = 2)]
    history: usize,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Also write the JSON here, with a manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// algebra, transforms, layers, grad or all.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write per-property results as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Flip the sign of one Cl(2,0) product-table entry (0..16).
    #[arg(long)]
    flip_sign: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    op: String,
    #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
    size: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Line,
    Bar,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Line chart for a numeric first column, bars otherwise, unless set.
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long)]
    log_y: bool,
    #[arg(long)]
    title: Option<String>,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CmdResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn cmd_gen(a: GenArgs) -> CmdResult<i32> {
    let (mut set, config, seed) = match a.pde {
        Pde::Advection2d => {
            let d = AdvectionParams::default();
            let p = AdvectionParams {
                grid: a.grid.unwrap_or(d.grid),
                trajectories: a.traj.unwrap_or(d.trajectories),
                steps: a.steps.unwrap_or(d.steps),
                dt: a.dt.unwrap_or(d.dt),
                velocity: match a.velocity {
                    None => d.velocity,
                    Some(Velocity::Constant) => VelocityLaw::Constant,
                    Some(Velocity::SolidRotation) => VelocityLaw::SolidRotation,
                },
                max_speed: a.max_speed.unwrap_or(d.max_speed),
                blobs: a.blobs.unwrap_or(d.blobs),
                seed: a.seed,
            };
            (gen_advection2d(&p)?, serde_json::to_value(&p)?, p.seed)
        }
        Pde::Maxwell3d => {
            if a.velocity.is_some() || a.max_speed.is_some() || a.blobs.is_some() {
                return Err(Failure::usage("velocity options apply to advection2d only"));
            }
            let d = MaxwellParams::default();
            let p = MaxwellParams {
                grid: a.grid.unwrap_or(d.grid),
                trajectories: a.traj.unwrap_or(d.trajectories),
                steps: a.steps.unwrap_or(d.steps),
                substeps: a.substeps.unwrap_or(d.substeps),
                dt: a.dt,
                min_sources: a.min_sources.unwrap_or(d.min_sources),
                max_sources: a.max_sources.unwrap_or(d.max_sources),
                seed: a.seed,
                ..d
            };
            (gen_maxwell3d(&p)?, serde_json::to_value(&p)?, p.seed)
        }
    };
    if let Some(dt) = a.dtype {
        set.dtype = match dt {
            DtypeArg::F32 => Dtype::F32,
            DtypeArg::F64 => Dtype::F64,
        };
    }
    let mut m = RunManifest::start("gen", json!({ "generator": set.provenance.generator, "params": config, "dtype": set.dtype }), Some(seed));
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_clf(&a.out, &set)?;
    m.output(&a.out);
    m.write(&beside(&a.out))?;
    println!(
        "wrote {} trajectories × {} steps on a {:?} grid to {}",
        set.trajectories,
        set.steps,
        set.dims,
        a.out.display()
    );
    Ok(EXIT_OK)
}

/// Keys accepted in a `--config` file; flags take precedence.
#[derive(Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    family: Option<Family>,
    blocks: Option<usize>,
    channels: Option<usize>,
    modes: Option<Vec<usize>>,
    history: Option<usize>,
    kernel: Option<usize>,
    norm_groups: Option<usize>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    warmup_frac: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    adam_eps: Option<f64>,
    valid_frac: Option<f64>,
    seed: Option<u64>,
}

impl TrainArgs {
    fn architecture_flags(&self) -> bool {
        self.config.is_some()
            || self.family.is_some()
            || self.blocks.is_some()
            || self.channels.is_some()
            || self.modes.is_some()
            || self.history.is_some()
            || self.kernel.is_some()
            || self.norm_groups.is_some()
            || self.lr.is_some()
            || self.batch.is_some()
            || self.seed.is_some()
            || self.valid_frac.is_some()
            || self.warmup_frac.is_some()
    }
}

fn effective_config(a: &TrainArgs, set: &clifford_core::datagen::TrajectorySet) -> CmdResult<(SurrogateConfig, TrainConfig)> {
    let file: TrainFile = match &a.config {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| Failure::io(format!("{}: {e}", p.display())))?;
            serde_json::from_slice(&bytes).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?
        }
        None => TrainFile::default(),
    };
    let family = match &a.family {
        Some(s) => Family::parse(s)?,
        None => file.family.unwrap_or(Family::Cfno),
    };
    let mut m = SurrogateConfig::desk(family, set.signature, &set.dims, set.packing.mapped_blades());
    m.data_channels = set.channels;
    let pick = |flag: Option<usize>, file: Option<usize>, dflt: usize| flag.or(file).unwrap_or(dflt);
    m.blocks = pick(a.blocks, file.blocks, m.blocks);
    m.channels = pick(a.channels, file.channels, m.channels);
    m.history = pick(a.history, file.history, m.history);
    m.kernel = pick(a.kernel, file.kernel, m.kernel);
    m.norm_groups = pick(a.norm_groups, file.norm_groups, m.norm_groups);
    if let Some(modes) = a.modes.clone().or(file.modes) {
        m.modes = if modes.len() == 1 { vec![modes[0]; m.dims.len()] } else { modes };
    }
    m.validate()?;
    let d = TrainConfig::default();
    let t = TrainConfig {
        epochs: pick(a.epochs, file.epochs, d.epochs),
        batch_size: pick(a.batch, file.batch_size, d.batch_size),
        lr: a.lr.or(file.lr).unwrap_or(d.lr),
        warmup_frac: a.warmup_frac.or(file.warmup_frac).unwrap_or(d.warmup_frac),
        beta1: file.beta1.unwrap_or(d.beta1),
        beta2: file.beta2.unwrap_or(d.beta2),
        adam_eps: file.adam_eps.unwrap_or(d.adam_eps),
        valid_frac: a.valid_frac.or(file.valid_frac).unwrap_or(d.valid_frac),
        seed: a.seed.or(file.seed).unwrap_or(d.seed),
    };
    if t.batch_size == 0 || !(t.lr >= 0.0 && t.lr.is_finite()) || !(0.0..1.0).contains(&t.valid_frac) {
        return Err(Failure::usage("batch must be positive, lr finite and ≥ 0, valid fraction in [0, 1)"));
    }
    Ok((m, t))
}

fn save_outputs(out: &Path, tr: &Trainer, m: &mut RunManifest) -> CmdResult<()> {
    save_checkpoint(out, tr)?;
    write_file(&out.join("curve.csv"), curve_csv(&tr.curve))?;
    m.outputs.clear();
    for f in [CHECKPOINT_META, CHECKPOINT_PARAMS, CHECKPOINT_OPTIMIZER, "curve.csv"] {
        m.output(&out.join(f));
    }
    Ok(())
}

fn checkpoint_inputs(m: &mut RunManifest, dir: &Path) -> CmdResult<()> {
    for f in [CHECKPOINT_META, CHECKPOINT_PARAMS, CHECKPOINT_OPTIMIZER] {
        m.input(&dir.join(f))?;
    }
    Ok(())
}

fn metrics_json(m: &Metrics) -> serde_json::Value {
    json!({
        "onestep": m.smse_onestep,
        "scalar": m.smse_scalar,
        "vector": m.smse_vector,
        "rollout": m.smse_rollout,
    })
}

fn cmd_train(a: TrainArgs) -> CmdResult<i32> {
    let set = read_clf(&a.data)?;
    let mut tr = match &a.resume {
        Some(dir) => {
            if a.architecture_flags() {
                return Err(Failure::usage("--resume keeps the saved configuration; only --epochs may change"));
            }
            let mut tr = load_trainer(dir)?;
            check_compatible(&tr.model.config, &set)?;
            if let Some(e) = a.epochs {
                if e < tr.epoch {
                    return Err(Failure::usage(format!("checkpoint already ran {} epochs", tr.epoch)));
                }
                tr.cfg.epochs = e;
            }
            tr
        }
        None => {
            let (mcfg, tcfg) = effective_config(&a, &set)?;
            Trainer::new(Surrogate::new(mcfg, tcfg.seed)?, tcfg, &set)?
        }
    };
    let config = json!({ "model": tr.model.config, "train": tr.cfg, "resumed_at_epoch": a.resume.as_ref().map(|_| tr.epoch) });
    let mut m = RunManifest::start("train", config, Some(tr.cfg.seed));
    m.input(&a.data)?;
    if let Some(dir) = &a.resume {
        checkpoint_inputs(&mut m, dir)?;
    }
    eprintln!(
        "{:?}: {} parameters, {} train / {} valid trajectories, {} epochs × {} steps",
        tr.model.config.family,
        tr.model.parameter_count(),
        tr.train_idx.len(),
        tr.valid_idx.len(),
        tr.cfg.epochs,
        tr.batches_per_epoch()
    );
    save_outputs(&a.out, &tr, &mut m)?;
    while tr.epoch < tr.cfg.epochs {
        match tr.run_epoch(&set) {
            Ok(row) if tr.valid_idx.is_empty() || row.valid_smse.is_finite() => {
                eprintln!("epoch {} step {} train {:.4e} valid {:.4e}", tr.epoch, row.step, row.train_smse, row.valid_smse);
                save_outputs(&a.out, &tr, &mut m)?;
            }
            Ok(row) => {
                m.status = format!("diverged: validation SMSE {} after step {}", row.valid_smse, row.step);
                m.write(&a.out.join("manifest.json"))?;
                return Err(Failure {
                    code: EXIT_DIVERGED,
                    message: format!("validation SMSE is not finite after step {}; last finite checkpoint kept", row.step),
                });
            }
            Err(e) => {
                save_outputs(&a.out, &tr, &mut m)?;
                m.status = format!("diverged: {e}");
                m.write(&a.out.join("manifest.json"))?;
                return Err(e.into());
            }
        }
    }
    let trajs = if tr.valid_idx.is_empty() { &tr.train_idx } else { &tr.valid_idx };
    let metrics = match evaluate(&tr.model, &set, trajs, tr.cfg.batch_size) {
        Ok(metrics) => metrics,
        Err(e) => {
            m.status = format!("evaluation failed: {e}");
            m.write(&a.out.join("manifest.json"))?;
            return Err(e.into());
        }
    };
    let path = a.out.join("metrics.json");
    write_file(&path, serde_json::to_string_pretty(&json!({ "trajectories": trajs, "metrics": metrics_json(&metrics) }))?)?;
    m.output(&path);
    m.write(&a.out.join("manifest.json"))?;
    println!("final one-step SMSE {:.6e}", metrics.smse_onestep);
    println!("final rollout SMSE {:.6e}", metrics.smse_rollout);
    Ok(EXIT_OK)
}

fn cmd_eval(a: EvalArgs) -> CmdResult<i32> {
    const NAMES: [&str; 4] = ["onestep", "scalar", "vector", "rollout"];
    if let Some(bad) = a.metrics.iter().find(|s| !NAMES.contains(&s.as_str())) {
        return Err(Failure::usage(format!("unknown metric `{bad}`, expected {}", NAMES.join(","))));
    }
    let set = read_clf(&a.data)?;
    let model: Box<dyn Predictor> = match a.ckpt.as_str() {
        "identity" => Box::new(IdentityModel { history: a.history }),
        "zero" => Box::new(ZeroModel { history: a.history }),
        dir => {
            let model = load_model(Path::new(dir))?;
            check_compatible(&model.config, &set)?;
            Box::new(model)
        }
    };
    let trajs: Vec<usize> = (0..set.trajectories).collect();
    let all = metrics_json(&evaluate(model.as_ref(), &set, &trajs, a.batch)?);
    let mut picked = serde_json::Map::new();
    for name in NAMES.iter().filter(|n| a.metrics.iter().any(|s| s == *n)) {
        picked.insert(name.to_string(), all[name].clone());
    }
    let out = json!({
        "model": a.ckpt,
        "data": a.data.display().to_string(),
        "trajectories": set.trajectories,
        "windows_per_trajectory": windows(&set, model.history()),
        "rollout_steps": ROLLOUT_STEPS,
        "metrics": picked,
    });
    let text = serde_json::to_string_pretty(&out)?;
    println!("{text}");
    if let Some(path) = &a.out {
        let mut m = RunManifest::start("eval", json!({ "ckpt": a.ckpt, "metrics": a.metrics, "history": a.history, "batch": a.batch }), None);
        m.input(&a.data)?;
        if !matches!(a.ckpt.as_str(), "identity" | "zero") {
            checkpoint_inputs(&mut m, Path::new(&a.ckpt))?;
        }
        write_file(path, format!("{text}\n"))?;
        m.output(path);
        m.write(&beside(path))?;
    }
    Ok(EXIT_OK)
}

fn cmd_check(a: CheckArgs) -> CmdResult<i32> {
    let mut cfg = CheckConfig::with_seed(a.seed);
    if let Some(t) = a.flip_sign {
        if t >= CL20_PRODUCT.len() {
            return Err(Failure::usage(format!("--flip-sign must be below {}", CL20_PRODUCT.len())));
        }
        cfg = cfg.with_flipped_sign(t);
    }
    let props = if a.suite == "all" {
        run_all(&cfg)
    } else {
        let s = Suite::parse(&a.suite)
            .ok_or_else(|| Failure::usage(format!("unknown suite `{}`, expected algebra|transforms|layers|grad|all", a.suite)))?;
        run_suite(s, &cfg)
    };
    print!("{}", report_table(&props));
    if let Some(path) = &a.csv {
        let m0 = RunManifest::start("check", json!({ "suite": a.suite, "flip_sign": a.flip_sign }), Some(a.seed));
        write_file(path, report_csv(&props))?;
        let mut m = m0;
        m.output(path);
        m.write(&beside(path))?;
    }
    let failed = props.iter().filter(|p| !p.passed()).count();
    println!("{} properties, {failed} failing", props.len());
    Ok(if failed == 0 { EXIT_OK } else { EXIT_PROPERTY })
}

fn cmd_bench(a: BenchArgs) -> CmdResult<i32> {
    let op = Op::parse(&a.op)?;
    let mut csv = format!("{}\n", bench::CSV_HEADER);
    for &size in &a.size {
        csv.push_str(&bench::run(op, size, a.reps, a.seed)?.csv_row());
        csv.push('\n');
    }
    print!("{csv}");
    if let Some(path) = &a.out {
        let mut m = RunManifest::start("bench", json!({ "op": a.op, "size": a.size, "reps": a.reps }), Some(a.seed));
        write_file(path, &csv)?;
        m.output(path);
        m.write(&beside(path))?;
    }
    Ok(EXIT_OK)
}

fn cmd_plot(a: PlotArgs) -> CmdResult<i32> {
    let mut m = RunManifest::start("plot", json!({ "kind": a.kind.map(|k| matches!(k, KindArg::Bar)).map(|b| if b { "bar" } else { "line" }), "log_y": a.log_y }), None);
    m.input(&a.input)?;
    let table = Table::read(&a.input)?;
    let kind = a.kind.map(|k| match k {
        KindArg::Line => Kind::Line,
        KindArg::Bar => Kind::Bar,
    });
    let title = a.title.clone().unwrap_or_else(|| a.input.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default());
    write_file(&a.out, plot::render(&table, kind, a.log_y, &title)?)?;
    m.output(&a.out);
    m.write(&beside(&a.out))?;
    Ok(EXIT_OK)
}

fn main() {
    let cli = Cli::parse();
    if cli.threads == 0 {
        eprintln!("error: --threads must be positive");
        std::process::exit(clifford_cli::EXIT_USAGE);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .expect("global thread pool is built once");
    let result = match cli.cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Check(a) => cmd_check(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(f) => {
            eprintln!("error: {f}");
            std::process::exit(f.code);
        }
    }
}
