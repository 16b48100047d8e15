use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;

use bvr_core::episode::{read_log, verify_log, write_log};
use bvr_core::harness::{evaluate, train, PolicySpec, RunManifest, BASELINES};
use bvr_core::mdp::EnvSettings;
use bvr_core::rainbow::load_checkpoint;
use bvr_core::service::{CheckpointRegistry, Server, ServerContext, SessionStore};
use bvr_core::{BvrError, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "bvr", version, about = "BVR air-combat agent: train, evaluate, serve live matches, verify replays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Self-play training run.
    Train(TrainArgs),
    /// Zero-noise tournament of one checkpoint against opponents.
    Eval(EvalArgs),
    /// Live human-vs-agent match server.
    Serve(ServeArgs),
    /// Inspect, export or re-simulate an episode log.
    Replay(ReplayArgs),
    /// Print the resolved configuration as TOML.
    Config(ConfigArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Continue from the latest checkpoint in --out.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma-separated baseline names or checkpoint files.
    #[arg(long, value_delimiter = ',', default_value = "straight-flier,pure-cap,aggressive-commit")]
    opponents: Vec<String>,
    #[arg(long, default_value_t = 200)]
    matches: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    #[arg(long)]
    static_dir: Option<PathBuf>,
    #[arg(long)]
    tick_hz: Option<f64>,
    /// Time compression factor: 1, 2 or 4.
    #[arg(long)]
    compression: Option<u32>,
    /// Session transcripts and episode logs go here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    log: PathBuf,
    /// Re-simulate the log and require every line to match.
    #[arg(long)]
    verify: bool,
    /// Write the log as plain JSONL (or gzip for a .gz path).
    #[arg(long)]
    export: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Defaults are printed when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, BvrError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn run_train(a: TrainArgs) -> Result<(), BvrError> {
    let mut cfg = load_config(Some(&a.config))?;
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(s) = a.steps {
        cfg.train.total_steps = s;
    }
    if let Some(w) = a.workers {
        cfg.train.workers = w;
    }
    cfg.validate()?;
    let summary = train(&cfg, &a.out, a.resume)?;
    log::info!(
        "trained {} env steps, {} episodes, {} learner steps; final checkpoint {}",
        summary.env_steps,
        summary.episodes,
        summary.learner_steps,
        summary.final_checkpoint.display()
    );
    Ok(())
}

fn policy_spec(name: &str) -> Result<PolicySpec, BvrError> {
    if let Some(b) = PolicySpec::baseline(name) {
        return Ok(b);
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(BvrError::InvalidConfig(format!(
            "opponent {name:?} is neither a checkpoint file nor one of {}",
            BASELINES.join(", ")
        )));
    }
    let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    Ok(PolicySpec::checkpoint(stem, load_checkpoint(path)?))
}

fn run_eval(a: EvalArgs) -> Result<(), BvrError> {
    let cfg = load_config(a.config.as_deref())?;
    let subject = policy_spec(&a.checkpoint.to_string_lossy())?;
    let opponents = a.opponents.iter().map(|o| policy_spec(o)).collect::<Result<Vec<_>, _>>()?;
    let table = evaluate(&subject, &opponents, a.matches, a.seed, &EnvSettings::from(&cfg), a.workers)?;
    std::fs::create_dir_all(&a.out).map_err(|e| BvrError::path_io(&a.out, e))?;
    let csv = a.out.join("eval.csv");
    std::fs::write(&csv, table.to_csv()).map_err(|e| BvrError::path_io(&csv, e))?;
    let json = a.out.join("eval.json");
    std::fs::write(&json, serde_json::to_string_pretty(&table)?).map_err(|e| BvrError::path_io(&json, e))?;
    let mut manifest = RunManifest::new("eval", &cfg, vec![a.seed]);
    manifest.add_artifact("eval.csv");
    manifest.add_artifact("eval.json");
    manifest.write(&a.out)?;
    for r in &table.rows {
        log::info!(
            "{} vs {}: {}W {}L {}D over {} matches",
            table.subject,
            r.opponent,
            r.wins,
            r.losses,
            r.draws,
            r.matches
        );
    }
    Ok(())
}

fn run_serve(a: ServeArgs) -> Result<(), BvrError> {
    let mut cfg = load_config(a.config.as_deref())?;
    let s = &mut cfg.service;
    if let Some(p) = a.port {
        s.port = p;
    }
    if let Some(d) = a.checkpoint_dir {
        s.checkpoint_dir = d.to_string_lossy().into_owned();
    }
    if let Some(d) = a.static_dir {
        s.static_dir = Some(d.to_string_lossy().into_owned());
    }
    if let Some(t) = a.tick_hz {
        s.tick_hz = t;
    }
    if let Some(c) = a.compression {
        s.compression = c;
    }
    if let Some(o) = a.out {
        s.out_dir = o.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    let registry = CheckpointRegistry::from_dir(Path::new(&cfg.service.checkpoint_dir))?;
    let addr = format!("0.0.0.0:{}", cfg.service.port);
    let ctx = ServerContext {
        config: cfg.service.clone(),
        settings: EnvSettings::from(&cfg),
        registry,
        sessions: SessionStore::new(),
    };
    let server = Server::bind(&addr, ctx)?;
    log::info!(
        "serving on ws://{} with opponents: {}",
        server.local_addr()?,
        server.context().registry.ids().collect::<Vec<_>>().join(", ")
    );
    server.run(&AtomicBool::new(false))
}

fn run_replay(a: ReplayArgs) -> Result<(), BvrError> {
    if a.verify {
        let report = verify_log(&a.log)?;
        println!("OK: {} ticks bit-identical", report.ticks);
    }
    if let Some(dest) = &a.export {
        let records = read_log(&a.log)?;
        write_log(dest, &records)?;
        log::info!("exported {} ticks to {}", records.len(), dest.display());
    }
    if !a.verify && a.export.is_none() {
        let records = read_log(&a.log)?;
        let last = records.last().expect("read_log rejects empty logs");
        println!(
            "{} ticks, sim_time {:.1} s, outcome {}",
            records.len(),
            last.sim_time,
            last.outcome.as_str()
        );
    }
    Ok(())
}

fn run_config(a: ConfigArgs) -> Result<(), BvrError> {
    let cfg = load_config(a.config.as_deref())?;
    cfg.validate()?;
    print!("{}", cfg.to_toml_string());
    Ok(())
}

fn exit_code(e: &BvrError) -> u8 {
    match e {
        BvrError::ConfigParse { .. } | BvrError::InvalidConfig(_) => 2,
        BvrError::PathIo { path, .. } if path.extension().is_some_and(|x| x == "config" || x == "toml") => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Serve(a) => run_serve(a),
        Command::Replay(a) => run_replay(a),
        Command::Config(a) => run_config(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
