//! Command-line front end: scenario runs, mode/sample-count comparisons,
//! parameter sweeps, SDF training and log re-rendering.
//!
//! Every command is deterministic for a fixed seed; artifacts are written
//! atomically (temp file + rename) and the effective configuration is always
//! serialized next to the outputs. Exit codes: 0 clean run, 2 a barrier was
//! violated during the episode, 1 any other failure.

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

use br_mppi::geometry::{self, Activation, ShapeDescriptor, TrainConfig};
use br_mppi::render::{render_svg, render_svg_parts, RenderInput};
use br_mppi::scenario::{self, ScenarioConfig};
use br_mppi::sim;

#[derive(Parser)]
#[command(name = "br-mppi", version, about = "Barrier-rate guided MPPI scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario file path or builtin name (slalom, narrow_gap, hexagon_si,
    /// corridor_pq).
    #[arg(long)]
    scenario: String,
    /// Override a config key, e.g. `--set mppi.samples=2000` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (default: $BR_MPPI_OUT or ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override (shorthand for --set mppi.seed=N).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write trajectory/metrics/SVG artifacts.
    Run(RunArgs),
    /// Compare modes and sample counts over a seed range.
    Compare(CompareArgs),
    /// Sweep one config key over a list of values.
    Sweep(SweepArgs),
    /// Train a robot-body SDF model and write it to disk.
    TrainSdf(TrainSdfArgs),
    /// Re-render the SVG from logged artifacts.
    Render(RenderArgs),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma-separated controller modes.
    #[arg(long, default_value = "br,vanilla")]
    modes: String,
    /// Comma-separated sample counts.
    #[arg(long = "k-list", default_value = "1000")]
    k_list: String,
    /// Number of seeds per cell (0..seeds-1, offset by the base seed).
    #[arg(long, default_value_t = 10)]
    seeds: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Dotted config key to sweep.
    #[arg(long)]
    key: String,
    /// Comma-separated values.
    #[arg(long)]
    values: String,
    /// Number of seeds per value.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
}

#[derive(Args)]
struct TrainSdfArgs {
    /// Shape spec: `point`, `circle:R`, `rectangle:HX,HY`, `hexagon:R`.
    #[arg(long)]
    shape: String,
    #[arg(long, default_value_t = 5000)]
    samples: usize,
    /// Sampling band width around the shape (meters).
    #[arg(long, default_value_t = 0.5)]
    band: f64,
    /// Layer sizes, comma separated (input 2, output 1).
    #[arg(long, default_value = "2,64,64,1")]
    arch: String,
    #[arg(long, default_value = "tanh")]
    activation: String,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lambda_eikonal: f64,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also dump the training dataset as CSV.
    #[arg(long, default_value_t = false)]
    dump_dataset: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Scenario file path or builtin name (the effective config of the run).
    #[arg(long)]
    scenario: String,
    /// Trajectory CSV produced by `run`.
    #[arg(long)]
    log: PathBuf,
    /// Optional snapshots CSV produced by `run`.
    #[arg(long)]
    snapshots: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::TrainSdf(args) => cmd_train_sdf(args),
        Command::Render(args) => cmd_render(args),
    }
}

fn out_dir(explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        std::env::var_os("BR_MPPI_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
    })
}

fn load_scenario(args: &ScenarioArgs) -> anyhow::Result<ScenarioConfig> {
    let base = if Path::new(&args.scenario).exists() {
        ScenarioConfig::load(Path::new(&args.scenario))?
    } else {
        scenario::builtin(&args.scenario)?
    };
    let mut overrides: Vec<(String, String)> = Vec::new();
    for pair in &args.overrides {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{pair}`"))?;
        overrides.push((k.to_string(), v.to_string()));
    }
    if let Some(seed) = args.seed {
        overrides.push(("mppi.seed".into(), seed.to_string()));
    }
    Ok(base.with_overrides(&overrides)?)
}

/// Write bytes atomically: temp file in the target directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".tmp.{}.{}",
        std::process::id(),
        path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact")
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<i32> {
    let cfg = load_scenario(&args.scenario)?;
    let dir = out_dir(&args.scenario.out);
    let log = sim::run_episode(&cfg)?;
    let metrics = sim::compute_metrics(&log);

    write_atomic(&dir.join("config.toml"), cfg.to_toml().as_bytes())?;
    let mut csv = Vec::new();
    sim::write_csv(&log, &mut csv)?;
    write_atomic(&dir.join("trajectory.csv"), &csv)?;
    let mut mtext = Vec::new();
    sim::write_metrics(&metrics, &mut mtext)?;
    write_atomic(&dir.join("metrics.toml"), &mtext)?;
    write_atomic(&dir.join("trajectory.svg"), render_svg(&log).as_bytes())?;
    if cfg.episode.snapshot_stride > 0 {
        let mut snaps = Vec::new();
        sim::write_snapshots_csv(&log, &mut snaps)?;
        write_atomic(&dir.join("snapshots.csv"), &snaps)?;
    }

    println!(
        "{}: success={} steps={} path_length={:.3} min_h={:.4} violations={} wall={:.2}s",
        args.scenario.scenario,
        metrics.success,
        log.steps(),
        metrics.path_length,
        metrics.min_h,
        metrics.violation_steps,
        metrics.wall_time_s
    );
    Ok(if metrics.violation_steps > 0 { 2 } else { 0 })
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> anyhow::Result<Vec<T>> {
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| anyhow!("bad {what} entry `{s}`")))
        .collect()
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<i32> {
    let cfg = load_scenario(&args.scenario)?;
    let dir = out_dir(&args.scenario.out);
    let modes: Vec<String> = parse_list(&args.modes, "mode")?;
    let k_list: Vec<usize> = parse_list(&args.k_list, "k")?;
    let base_seed = cfg.mppi.seed;

    let mut rows = String::from("scenario,mode,k,seed,success,steps_to_goal,path_length,min_h,violation_steps\n");
    let mut aggregate = String::from("mode,k,success_rate,violation_rate,mean_steps_to_goal\n");
    for mode in &modes {
        for &k in &k_list {
            let mut successes = 0u64;
            let mut violated = 0u64;
            let mut steps_sum = 0usize;
            let mut steps_n = 0usize;
            for s in 0..args.seeds {
                let cell = cfg.with_overrides(&[
                    ("mppi.mode".into(), mode.clone()),
                    ("mppi.samples".into(), k.to_string()),
                    ("mppi.seed".into(), (base_seed + s).to_string()),
                ])?;
                let log = sim::run_episode(&cell)?;
                let m = sim::compute_metrics(&log);
                successes += m.success as u64;
                violated += (m.violation_steps > 0) as u64;
                if let Some(st) = m.steps_to_goal {
                    steps_sum += st;
                    steps_n += 1;
                }
                rows.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    args.scenario.scenario,
                    mode,
                    k,
                    base_seed + s,
                    m.success,
                    m.steps_to_goal.map(|v| v as i64).unwrap_or(-1),
                    m.path_length,
                    m.min_h,
                    m.violation_steps
                ));
                eprintln!(
                    "compare {mode} k={k} seed={}: success={} violations={} wall={:.1}s",
                    base_seed + s,
                    m.success,
                    m.violation_steps,
                    m.wall_time_s
                );
            }
            let rate = successes as f64 / args.seeds as f64;
            let vrate = violated as f64 / args.seeds as f64;
            let mean_steps =
                if steps_n > 0 { steps_sum as f64 / steps_n as f64 } else { -1.0 };
            aggregate.push_str(&format!("{mode},{k},{rate},{vrate},{mean_steps}\n"));
        }
    }
    write_atomic(&dir.join("compare.csv"), rows.as_bytes())?;
    write_atomic(&dir.join("compare_aggregate.csv"), aggregate.as_bytes())?;
    print!("{aggregate}");
    Ok(0)
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<i32> {
    let cfg = load_scenario(&args.scenario)?;
    let dir = out_dir(&args.scenario.out);
    let values: Vec<String> = args.values.split(',').map(|s| s.trim().to_string()).collect();
    let base_seed = cfg.mppi.seed;
    let mut rows = format!("{},seed,success,steps_to_goal,path_length,min_h,violation_steps\n", args.key);
    for value in &values {
        for s in 0..args.seeds {
            let cell = cfg.with_overrides(&[
                (args.key.clone(), value.clone()),
                ("mppi.seed".into(), (base_seed + s).to_string()),
            ])?;
            let log = sim::run_episode(&cell)?;
            let m = sim::compute_metrics(&log);
            rows.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                value,
                base_seed + s,
                m.success,
                m.steps_to_goal.map(|v| v as i64).unwrap_or(-1),
                m.path_length,
                m.min_h,
                m.violation_steps
            ));
            eprintln!(
                "sweep {}={} seed={}: success={} violations={}",
                args.key,
                value,
                base_seed + s,
                m.success,
                m.violation_steps
            );
        }
    }
    write_atomic(&dir.join("sweep.csv"), rows.as_bytes())?;
    print!("{rows}");
    Ok(0)
}

fn parse_shape(spec: &str) -> anyhow::Result<ShapeDescriptor> {
    let (kind, params) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "point" => Ok(ShapeDescriptor::Point),
        "circle" => Ok(ShapeDescriptor::Circle { radius: params.parse()? }),
        "rectangle" => {
            let (a, b) = params
                .split_once(',')
                .ok_or_else(|| anyhow!("rectangle needs HX,HY"))?;
            Ok(ShapeDescriptor::Rectangle { half_x: a.parse()?, half_y: b.parse()? })
        }
        "hexagon" => Ok(ShapeDescriptor::Hexagon { circumradius: params.parse()? }),
        other => Err(anyhow!("unknown shape `{other}`")),
    }
}

fn cmd_train_sdf(args: TrainSdfArgs) -> anyhow::Result<i32> {
    let shape = parse_shape(&args.shape)?;
    let dir = out_dir(&args.out);
    let arch: Vec<usize> = parse_list(&args.arch, "arch")?;
    let activation = Activation::parse(&args.activation)
        .ok_or_else(|| anyhow!("unknown activation `{}`", args.activation))?;
    let cfg = TrainConfig {
        lambda_eikonal: args.lambda_eikonal,
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        batch_size: args.batch_size,
        rng_seed: args.seed,
    };
    let dataset = geometry::sample_training_set(&shape, args.samples, args.band, args.seed);
    let t0 = std::time::Instant::now();
    let (model, report) = geometry::network::train_sdf(&dataset, &cfg, &arch, activation)?;
    let train_s = t0.elapsed().as_secs_f64();

    // Held-out evaluation on a fresh sample stream.
    let held_out = geometry::sample_training_set(&shape, 1000, args.band, args.seed + 1);
    let mut abs_err = 0.0;
    let mut eik_err = 0.0;
    let mut eik_n = 0usize;
    for (p, d) in &held_out.samples {
        abs_err += (model.eval(*p) - d).abs();
        if d.abs() < 0.3 {
            let g = model.gradient(*p);
            eik_err += (g[0].hypot(g[1]) - 1.0).abs();
            eik_n += 1;
        }
    }
    abs_err /= held_out.samples.len() as f64;
    eik_err /= eik_n.max(1) as f64;

    let mut bytes = Vec::new();
    model.write(&mut bytes)?;
    write_atomic(&dir.join("model.sdf"), &bytes)?;
    let report_text = format!(
        "shape = \"{}\"\nactivation = \"{}\"\ndistance_loss = {}\neikonal_loss = {}\nheld_out_mae = {}\nheld_out_eikonal = {}\n",
        args.shape,
        activation.name(),
        report.distance_loss,
        report.eikonal_loss,
        abs_err,
        eik_err
    );
    write_atomic(&dir.join("train_report.toml"), report_text.as_bytes())?;
    if args.dump_dataset {
        let mut csv = Vec::new();
        dataset.write_csv(&mut csv)?;
        write_atomic(&dir.join("dataset.csv"), &csv)?;
    }
    println!(
        "trained {} in {train_s:.1}s: held-out mae={abs_err:.4} m, eikonal dev={eik_err:.4}",
        args.shape
    );
    Ok(0)
}

fn cmd_render(args: RenderArgs) -> anyhow::Result<i32> {
    let cfg = if Path::new(&args.scenario).exists() {
        ScenarioConfig::load(Path::new(&args.scenario))?
    } else {
        scenario::builtin(&args.scenario)?
    };
    let n = cfg.build_model()?.state_dim();
    let text = std::fs::read_to_string(&args.log)
        .with_context(|| format!("reading {}", args.log.display()))?;
    let states = sim::read_states_csv(&text, n)?;
    let snapshots = match &args.snapshots {
        Some(path) => sim::read_snapshots_csv(&std::fs::read_to_string(path)?)?,
        None => Vec::new(),
    };
    let svg = render_svg_parts(&RenderInput { config: &cfg, states: &states, snapshots: &snapshots });
    let dir = out_dir(&args.out);
    write_atomic(&dir.join("render.svg"), svg.as_bytes())?;
    println!("rendered {} states to {}", states.len(), dir.join("render.svg").display());
    Ok(0)
}
