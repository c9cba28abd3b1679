//! `teleframe` command line. [`run_cli`] is the whole program; `main` only
//! wires it to the process streams and exit code.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on bad flags.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use teleframe::frames::{build_frame, ControlFrame, FrameKind};
use teleframe::metrics::{combined_objective, frame_diagnostics, write_combined_csv, CombinedMeasure, FrameDiagnostics, TrialOutcome};
use teleframe::operator::{default_operator, run_episode};
use teleframe::scenarios::{ScenarioKind, TIME_LIMIT};
use teleframe::scene::Scene;
use teleframe::sim::TICK_HZ;
use teleframe::trial::{MetricsReport, TrialLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "teleframe", version, about = "Control frames for camera-based teleoperation")]
pub struct Cli {
    /// Output format for stdout.
    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print frame matrices and alignment diagnostics for a scene.
    Frames(FramesArgs),
    /// Run seeded synthetic-operator trials and write one JSONL log per seed.
    Simulate(SimulateArgs),
    /// Combine trial logs into a CSV with the combined objective measure.
    Report(ReportArgs),
    /// Recompute the metrics of a trial log.
    Replay(ReplayArgs),
    /// Serve live sessions over WebSocket.
    Serve(ServeArgs),
    /// Write a default scene file.
    Scene(SceneArgs),
}

#[derive(Debug, Args)]
pub struct FramesArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Only this frame kind; all kinds otherwise.
    #[arg(long)]
    pub frame: Option<FrameKind>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scene file; the default scene for --scenario when omitted.
    #[arg(long, required_unless_present = "scenario")]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<ScenarioKind>,
    /// Frame the robot actually uses; the scene's frame when omitted.
    #[arg(long)]
    pub frame: Option<FrameKind>,
    /// Frame the operator believes in: a frame kind, or `aligned` for the actual frame.
    #[arg(long, default_value = "aligned")]
    pub operator: String,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Operator input noise, m/s.
    #[arg(long, default_value_t = 0.0)]
    pub noise_std: f64,
    /// Operator reaction delay, ticks.
    #[arg(long, default_value_t = 0)]
    pub delay_ticks: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub logs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Where session logs go; `$TELEFRAME_LOG_DIR` or ./logs by default.
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    #[arg(long, default_value = "pick_place")]
    pub scenario: ScenarioKind,
    /// Camera heading about world up, degrees (pick-and-place only).
    #[arg(long, allow_hyphen_values = true)]
    pub camera_yaw_deg: Option<f64>,
    /// Camera tilt, degrees; negative looks down (pick-and-place only).
    #[arg(long, allow_hyphen_values = true)]
    pub camera_pitch_deg: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

type Failure = Box<dyn std::error::Error>;

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Diagnostics go to `err`.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match &cli.command {
        Command::Frames(a) => frames(a, cli.format, out),
        Command::Simulate(a) => simulate(a, cli.format, out),
        Command::Report(a) => report(a, cli.format, out),
        Command::Replay(a) => replay(a, cli.format, out),
        Command::Serve(a) => serve(a),
        Command::Scene(a) => scene(a, out),
    }
}

fn load_scene(path: &Path) -> Result<Scene, Failure> {
    Scene::load(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

/// Rounds away float noise so tables never show `-0.000`.
fn clean(x: f64) -> f64 {
    if x.abs() < 5e-9 {
        0.0
    } else {
        x
    }
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct FrameEntry {
    kind: FrameKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    frame: Option<ControlFrame>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<FrameDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn frames(a: &FramesArgs, format: Format, out: &mut dyn Write) -> Result<(), Failure> {
    let scene = load_scene(&a.scene)?;
    let kinds: Vec<FrameKind> = a.frame.map_or_else(|| FrameKind::ALL.to_vec(), |k| vec![k]);
    let sim = teleframe::sim::Simulation::new(&scene, scene.seed)?;
    let (eef, _) = sim.eef_world();
    let constraint = scene.whiteboard.as_ref().map(|b| b.plane());
    let entries: Vec<FrameEntry> = kinds
        .iter()
        .map(|&kind| match build_frame(kind, &scene, scene.device, Some(&eef)) {
            Ok(frame) => match frame_diagnostics(&frame, &scene, constraint.as_ref()) {
                Ok(d) => FrameEntry { kind, frame: Some(frame), diagnostics: Some(d), error: None },
                Err(e) => FrameEntry { kind, frame: Some(frame), diagnostics: None, error: Some(e.to_string()) },
            },
            Err(e) => FrameEntry { kind, frame: None, diagnostics: None, error: Some(e.to_string()) },
        })
        .collect();
    if a.frame.is_some() {
        if let Some(e) = &entries[0].error {
            return Err(format!("{}: {e}", entries[0].kind).into());
        }
    }
    if format == Format::Json {
        return print_json(out, &entries);
    }
    for e in &entries {
        writeln!(out, "{}", e.kind)?;
        if let Some(f) = &e.frame {
            let labels = ["x", "y", "z"];
            for (i, c) in f.columns.iter().enumerate() {
                let v = c.vec();
                writeln!(out, "  d_{}     [{:+.5}, {:+.5}, {:+.5}]", labels[i], clean(v.x), clean(v.y), clean(v.z))?;
            }
            if let Some(w) = &f.wheel_axis {
                let v = w.vec();
                writeln!(out, "  wheel   [{:+.5}, {:+.5}, {:+.5}]", clean(v.x), clean(v.y), clean(v.z))?;
            }
        }
        if let Some(d) = &e.diagnostics {
            let deg = |x: f64| clean(x.to_degrees());
            writeln!(out, "  misalignment_total      {:.3} deg", deg(d.misalignment_total))?;
            writeln!(
                out,
                "  roll / pitch / yaw      {:.3} / {:.3} / {:.3} deg",
                deg(d.misalignment_rpy[0]),
                deg(d.misalignment_rpy[1]),
                deg(d.misalignment_rpy[2])
            )?;
            writeln!(out, "  weighted_misalignment   {:.3} deg", deg(d.weighted_misalignment))?;
            writeln!(out, "  naturalness_angle       {:.3} deg", deg(d.naturalness_angle))?;
            if let Some(r) = d.semantics_residual {
                writeln!(out, "  semantics_residual      {r:.3e}")?;
            }
        }
        if let Some(err) = &e.error {
            writeln!(out, "  unavailable: {err}")?;
        }
    }
    Ok(())
}

/// Log file name for one simulated trial.
pub fn log_file_name(scenario: ScenarioKind, frame: FrameKind, seed: u64) -> String {
    format!("{}-{}-seed{seed:06}.jsonl", scenario.name(), frame.name())
}

#[derive(Debug, Serialize)]
struct TrialSummary {
    seed: u64,
    file: PathBuf,
    metrics: MetricsReport,
}

fn simulate(a: &SimulateArgs, format: Format, out: &mut dyn Write) -> Result<(), Failure> {
    let mut scene = match (&a.scene, a.scenario) {
        (Some(p), _) => load_scene(p)?,
        (None, Some(kind)) => Scene::default_for(kind),
        (None, None) => unreachable!("clap requires one of them"),
    };
    if let Some(kind) = a.scenario {
        if kind != scene.scenario {
            return Err(format!("--scenario {} does not match the scene's {}", kind.name(), scene.scenario.name()).into());
        }
    }
    if let Some(k) = a.frame {
        scene.frame = k;
    }
    let belief = match a.operator.as_str() {
        "aligned" => scene.frame,
        name => name.parse::<FrameKind>().map_err(|e| format!("--operator: {e}"))?,
    };
    let mut model = default_operator(&scene, belief)?;
    model.noise_std = a.noise_std;
    model.reaction_delay = a.delay_ticks;
    model.validate()?;
    std::fs::create_dir_all(&a.out)?;

    let max_ticks = (TIME_LIMIT * TICK_HZ as f64) as u64 + 1;
    let seeds: Vec<u64> = (0..a.trials).map(|i| a.seed.wrapping_add(i)).collect();
    let results: Vec<Result<TrialSummary, String>> = seeds
        .par_iter()
        .map(|&seed| {
            let log = run_episode(&scene, scene.frame, &model, seed, max_ticks).map_err(|e| format!("seed {seed}: {e}"))?;
            let file = a.out.join(log_file_name(scene.scenario, scene.frame, seed));
            log.save(&file).map_err(|e| format!("{}: {e}", file.display()))?;
            Ok(TrialSummary { seed, file, metrics: log.metrics.expect("finished log") })
        })
        .collect();
    let summaries = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    if format == Format::Json {
        return print_json(out, &summaries);
    }
    writeln!(out, "{:>8}  {:<10} {:>6} {:>9} {:>10} {:>6}", "seed", "outcome", "ticks", "time_s", "path_m", "error")?;
    for s in &summaries {
        let m = &s.metrics;
        writeln!(
            out,
            "{:>8}  {:<10} {:>6} {:>9.3} {:>10.4} {:>6.3}",
            s.seed,
            format!("{:?}", m.outcome).to_lowercase(),
            m.ticks,
            m.time_s,
            m.path_length_m,
            m.error_score
        )?;
    }
    Ok(())
}

/// Reads every `*.jsonl` log under `dir`, in file name order.
pub fn read_logs(dir: &Path) -> Result<Vec<(PathBuf, TrialLog)>, Failure> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(format!("no .jsonl logs in {}", dir.display()).into());
    }
    paths
        .into_iter()
        .map(|p| TrialLog::load(&p).map(|log| (p.clone(), log)).map_err(|e| format!("{}: {e}", p.display()).into()))
        .collect()
}

/// One outcome per log: the seed is the participant, the frame the condition.
pub fn outcomes_from_logs(logs: &[(PathBuf, TrialLog)]) -> Vec<TrialOutcome> {
    logs.iter()
        .map(|(_, log)| {
            let m = log.recompute_metrics();
            TrialOutcome {
                participant: log.header.seed.to_string(),
                condition: log.header.scene.frame.name().to_string(),
                time_s: m.time_s,
                error: m.error_score,
            }
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct ConditionSummary {
    condition: String,
    trials: usize,
    mean_time_s: f64,
    mean_error: f64,
    mean_relative_combined: f64,
}

fn summarize(measure: &CombinedMeasure) -> Vec<ConditionSummary> {
    let mut names: Vec<&str> = measure.rows.iter().map(|r| r.condition.as_str()).collect();
    names.sort();
    names.dedup();
    names
        .into_iter()
        .map(|c| {
            let rows: Vec<_> = measure.rows.iter().filter(|r| r.condition == c).collect();
            let n = rows.len() as f64;
            ConditionSummary {
                condition: c.to_string(),
                trials: rows.len(),
                mean_time_s: rows.iter().map(|r| r.time_s).sum::<f64>() / n,
                mean_error: rows.iter().map(|r| r.error).sum::<f64>() / n,
                mean_relative_combined: rows.iter().map(|r| r.relative_combined).sum::<f64>() / n,
            }
        })
        .collect()
}

fn report(a: &ReportArgs, format: Format, out: &mut dyn Write) -> Result<(), Failure> {
    let logs = read_logs(&a.logs)?;
    let measure = combined_objective(&outcomes_from_logs(&logs))?;
    let file = std::fs::File::create(&a.out).map_err(|e| format!("{}: {e}", a.out.display()))?;
    write_combined_csv(&measure, std::io::BufWriter::new(file))?;
    let summary = summarize(&measure);
    if format == Format::Json {
        #[derive(Serialize)]
        struct Report<'a> {
            csv: &'a Path,
            rows: usize,
            degenerate_columns: &'a [String],
            conditions: Vec<ConditionSummary>,
        }
        return print_json(
            out,
            &Report { csv: &a.out, rows: measure.rows.len(), degenerate_columns: &measure.degenerate_columns, conditions: summary },
        );
    }
    writeln!(out, "{:<16} {:>6} {:>10} {:>10} {:>12}", "condition", "trials", "time_s", "error", "relative")?;
    for s in &summary {
        writeln!(
            out,
            "{:<16} {:>6} {:>10.3} {:>10.4} {:>+12.4}",
            s.condition, s.trials, s.mean_time_s, s.mean_error, s.mean_relative_combined
        )?;
    }
    for c in &measure.degenerate_columns {
        writeln!(out, "note: column {c} is constant and contributes 0")?;
    }
    writeln!(out, "wrote {}", a.out.display())?;
    Ok(())
}

fn replay(a: &ReplayArgs, format: Format, out: &mut dyn Write) -> Result<(), Failure> {
    let log = TrialLog::load(&a.log).map_err(|e| format!("{}: {e}", a.log.display()))?;
    let metrics = log.recompute_metrics();
    if let Some(stored) = &log.metrics {
        if *stored != metrics {
            return Err("recomputed metrics differ from the stored metrics line".into());
        }
    }
    if format == Format::Json {
        return print_json(out, &metrics);
    }
    writeln!(out, "scenario        {}", metrics.scenario.name())?;
    writeln!(out, "frame           {}", log.header.scene.frame)?;
    writeln!(out, "seed            {}", log.header.seed)?;
    writeln!(out, "outcome         {}", format!("{:?}", metrics.outcome).to_lowercase())?;
    writeln!(out, "ticks           {}", metrics.ticks)?;
    writeln!(out, "time_s          {:.3}", metrics.time_s)?;
    writeln!(out, "path_length_m   {:.4}", metrics.path_length_m)?;
    writeln!(out, "collisions      {}", metrics.collisions)?;
    writeln!(out, "halts           {}", metrics.halts)?;
    writeln!(out, "errors          {}", metrics.errors)?;
    if let Some(t) = &metrics.trajectory {
        writeln!(out, "trajectory      {:.4} (accuracy {:.4}, incompleteness {:.4})", t.total, t.accuracy, t.incompleteness)?;
    }
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<(), Failure> {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let scene = match &a.scene {
        Some(p) => load_scene(p)?,
        None => Scene::pick_place_default(),
    };
    let mut config = teleframe_server::ServerConfig::new(a.port, scene);
    if let Some(dir) = &a.log_dir {
        config.log_dir = dir.clone();
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let server = teleframe_server::Server::bind(config.clone()).await?;
        eprintln!("listening on ws://{} (logs in {})", server.local_addr()?, config.log_dir.display());
        server.run().await
    })?;
    Ok(())
}

fn scene(a: &SceneArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let scene = match (a.scenario, a.camera_yaw_deg, a.camera_pitch_deg) {
        (ScenarioKind::PickPlace, None, None) => Scene::pick_place_default(),
        (ScenarioKind::PickPlace, yaw, pitch) => {
            Scene::pick_place_with_camera(yaw.unwrap_or(135.0).to_radians(), pitch.unwrap_or(-35.0).to_radians())
        }
        (ScenarioKind::Tracing, None, None) => Scene::tracing_default(),
        (ScenarioKind::Tracing, _, _) => return Err("camera angles only apply to the pick_place scene".into()),
    };
    scene.validate()?;
    let json = scene.to_json_pretty();
    match &a.out {
        Some(p) => std::fs::write(p, json + "\n")?,
        None => writeln!(out, "{json}")?,
    }
    Ok(())
}
