//! Command-line interface: scene generation, single-scan registration,
//! trajectory experiments, and trajectory evaluation.
//!
//! Exit codes: 0 success, 2 per-scan failures occurred (run completed),
//! 3 fatal error (bad input or config).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lpicp::features::{extract_features, MapIndex};
use lpicp::localizability::LocalizabilityRecord;
use lpicp::optimizer::{register, Method};

use lpicp_harness::config::HarnessConfig;
use lpicp_harness::io::{
    fmt_f64, parse_pose_arg, read_cloud, read_trajectory_csv, write_cloud,
};
use lpicp_harness::metrics::ate_report;
use lpicp_harness::reports::emit_reports;
use lpicp_harness::scene::{generate_scene, SceneKind, SceneSpec};
use lpicp_harness::{run_trajectory, ExperimentConfig};

#[derive(Parser)]
#[command(name = "lpicp", about = "Localizability-aware point cloud registration toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic scene tools.
    Scene {
        #[command(subcommand)]
        command: SceneCommand,
    },
    /// Register one scan against a map.
    Register(RegisterArgs),
    /// Run a registration experiment along a ground-truth trajectory.
    Run(RunArgs),
    /// Evaluate an estimated trajectory against ground truth.
    Eval(EvalArgs),
}

#[derive(Subcommand)]
enum SceneCommand {
    /// Generate a scene map cloud (and optionally its spec file).
    Gen(SceneGenArgs),
}

#[derive(Args)]
struct SceneGenArgs {
    /// plane | corridor | tunnel | cuberoom | openterrain | lshape
    #[arg(long)]
    kind: SceneKind,
    /// Principal extent in meters (kind-specific default otherwise).
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    height: Option<f64>,
    /// Surface sampling density, points per square meter.
    #[arg(long, default_value_t = 25.0)]
    density: f64,
    /// Gaussian noise along surface normals, meters.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output cloud path (.xyz or .ply).
    #[arg(long)]
    out: PathBuf,
    /// Also write the scene spec as TOML for later `run` use.
    #[arg(long)]
    spec_out: Option<PathBuf>,
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    scan: PathBuf,
    /// Initial estimate "alpha,beta,gamma,tx,ty,tz" (radians, meters).
    #[arg(long, default_value = "0,0,0,0,0,0")]
    x0: String,
    #[arg(long, default_value = "lpicp")]
    method: Method,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report directory.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Scene spec file (TOML, as written by `scene gen --spec-out`).
    #[arg(long)]
    scene: PathBuf,
    /// Ground-truth trajectory CSV "t, alpha, beta, gamma, tx, ty, tz".
    #[arg(long)]
    traj: PathBuf,
    #[arg(long, default_value = "lpicp")]
    method: Method,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    est: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 50)]
    align_n: usize,
    /// Timestamp association tolerance in seconds.
    #[arg(long, default_value_t = 1e-6)]
    assoc_tol: f64,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(3)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<HarnessConfig, String> {
    match path {
        Some(p) => HarnessConfig::load(p).map_err(|e| e.to_string()),
        None => Ok(HarnessConfig::default()),
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Scene {
            command: SceneCommand::Gen(args),
        } => scene_gen(args),
        Command::Register(args) => do_register(args),
        Command::Run(args) => do_run(args),
        Command::Eval(args) => do_eval(args),
    }
}

fn scene_gen(args: SceneGenArgs) -> Result<ExitCode, String> {
    let mut spec = SceneSpec::for_kind(args.kind);
    if let Some(l) = args.length {
        spec.length = l;
    }
    if let Some(w) = args.width {
        spec.width = w;
    }
    if let Some(h) = args.height {
        spec.height = h;
    }
    spec.density = args.density;
    spec.sigma = args.sigma;
    spec.seed = args.seed;
    spec.validate()?;

    let scene = generate_scene(&spec);
    write_cloud(&scene.map, &args.out).map_err(|e| e.to_string())?;
    println!("wrote {} points to {}", scene.map.len(), args.out.display());
    if let Some(spec_path) = args.spec_out {
        let text = toml::to_string_pretty(&spec).map_err(|e| e.to_string())?;
        fs::write(&spec_path, text).map_err(|e| e.to_string())?;
        println!("wrote scene spec to {}", spec_path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn do_register(args: RegisterArgs) -> Result<ExitCode, String> {
    let config = load_config(&args.config)?;
    let pipeline = config.pipeline(args.method);

    let map_cloud = read_cloud(&args.map).map_err(|e| e.to_string())?;
    let map_index = MapIndex::build(&map_cloud, &pipeline.features).map_err(|e| e.to_string())?;
    let scan_cloud = read_cloud(&args.scan).map_err(|e| e.to_string())?;
    let features = extract_features(&scan_cloud, &pipeline.features).map_err(|e| e.to_string())?;
    let x0 = parse_pose_arg(&args.x0)?;

    let result = register(&features, &map_index, &x0, &pipeline).map_err(|e| e.to_string())?;
    let p = &result.pose;
    println!(
        "pose: {}, {}, {}, {}, {}, {}",
        fmt_f64(p.alpha),
        fmt_f64(p.beta),
        fmt_f64(p.gamma),
        fmt_f64(p.tx),
        fmt_f64(p.ty),
        fmt_f64(p.tz)
    );
    println!(
        "converged: {} after {} iterations ({} soft, {} hard constraints)",
        result.converged, result.iterations, result.n_soft, result.n_hard
    );

    if let Some(dir) = &args.report {
        fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        let mut text = String::new();
        text.push_str(&format!(
            "pose: {}, {}, {}, {}, {}, {}\n",
            fmt_f64(p.alpha),
            fmt_f64(p.beta),
            fmt_f64(p.gamma),
            fmt_f64(p.tx),
            fmt_f64(p.ty),
            fmt_f64(p.tz)
        ));
        text.push_str(&format!("converged: {}\n", result.converged));
        text.push_str(&format!("iterations: {}\n", result.iterations));
        text.push_str(&format!("soft_constraints: {}\n", result.n_soft));
        text.push_str(&format!("hard_constraints: {}\n", result.n_hard));
        for event in &result.events {
            text.push_str(&format!("event: {event:?}\n"));
        }
        if let Some(failure) = &result.failure {
            text.push_str(&format!("failure: {failure:?}\n"));
        }
        fs::write(dir.join("registration.txt"), text).map_err(|e| e.to_string())?;
        let mut jsonl = String::new();
        if let Some(report) = &result.report {
            let record = LocalizabilityRecord::from_report(0, report);
            jsonl.push_str(&serde_json::to_string(&record).map_err(|e| e.to_string())?);
            jsonl.push('\n');
        }
        fs::write(dir.join("localizability.jsonl"), jsonl).map_err(|e| e.to_string())?;
    }

    if result.failure.is_some() {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn do_run(args: RunArgs) -> Result<ExitCode, String> {
    let config = load_config(&args.config)?;
    let spec_text = fs::read_to_string(&args.scene)
        .map_err(|e| format!("cannot read scene spec '{}': {e}", args.scene.display()))?;
    let spec: SceneSpec = toml::from_str(&spec_text)
        .map_err(|e| format!("cannot parse scene spec '{}': {e}", args.scene.display()))?;
    spec.validate()?;
    let scene = generate_scene(&spec);
    let gt = read_trajectory_csv(&args.traj).map_err(|e| e.to_string())?;

    let experiment: ExperimentConfig = config.experiment(args.method);
    let report = run_trajectory(&scene, &gt, &experiment).map_err(|e| e.to_string())?;
    let files = emit_reports(&report, &args.report).map_err(|e| e.to_string())?;
    for f in &files {
        println!("wrote {}", f.display());
    }
    match &report.ate {
        Some(ate) => println!("ate_rmse_m: {}", fmt_f64(ate.rmse)),
        None => println!("ate_rmse_m: n/a"),
    }
    if report.failures > 0 {
        eprintln!("{} scan(s) failed", report.failures);
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn do_eval(args: EvalArgs) -> Result<ExitCode, String> {
    let est = read_trajectory_csv(&args.est).map_err(|e| e.to_string())?;
    let gt = read_trajectory_csv(&args.gt).map_err(|e| e.to_string())?;
    let report = ate_report(&est, &gt, args.align_n, args.assoc_tol).map_err(|e| e.to_string())?;
    println!("ate_rmse_m: {}", fmt_f64(report.rmse));
    println!(
        "ate_axis_rmse_m: {} {} {}",
        fmt_f64(report.per_axis[0]),
        fmt_f64(report.per_axis[1]),
        fmt_f64(report.per_axis[2])
    );
    println!("associated_poses: {}", report.n_associated);
    Ok(ExitCode::SUCCESS)
}
