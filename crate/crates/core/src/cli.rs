//! Command-line front end: headless runs, scene rendering and the session
//! server.
//!
//! Exit codes: 0 success, 2 configuration or usage, 3 bad input, 4 empty
//! profile, 5 internal failure, 6 port already in use.

use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::clustering::{ClusterSelection, SelectionPolicy};
use crate::config::{load_config, PipelineConfig};
use crate::error::Error;
use crate::io::write_replay;
use crate::pipeline::{create_run_dir, run, RunRecord, SourceSpec};
use crate::server::{serve, AppState, DEFAULT_CLUSTER_POINT_CAP};
use crate::synth::{render_frame, scenes, NoiseSpec, SceneFile};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_EMPTY_PROFILE: u8 = 4;
pub const EXIT_INTERNAL: u8 = 5;
pub const EXIT_PORT_BUSY: u8 = 6;

#[derive(Debug, Parser)]
#[command(name = "inspect", version, about = "Inspection path planning from depth frames")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan inspection targets from frames or a scene.
    Run(RunArgs),
    /// Render a scene into a replay directory.
    Render(RenderArgs),
    /// Serve the session API over a run directory.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Pipeline config (JSON); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replay directory holding `frames/`.
    #[arg(long, conflicts_with = "scene", required_unless_present = "scene")]
    pub frames: Option<PathBuf>,
    /// Scene file, or the name of a bundled scene.
    #[arg(long)]
    pub scene: Option<String>,
    /// Noise seed for scene sources.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory that receives `run-NNNN/`.
    #[arg(long)]
    pub out: PathBuf,
    /// Cluster ids (comma separated), `largest` or `interactive`.
    #[arg(long)]
    pub select: Option<String>,
    /// Refuse to suspend for an operator selection.
    #[arg(long)]
    pub headless: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Scene file, or the name of a bundled scene.
    #[arg(long)]
    pub scene: String,
    /// Directory that receives `frames/`.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of frames.
    #[arg(long, default_value_t = 1)]
    pub frames: usize,
    /// `none`, `strobe`, or a noise spec file; defaults to the scene's noise.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// A run directory or a directory of runs.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Most points returned by the clusters endpoint.
    #[arg(long, default_value_t = DEFAULT_CLUSTER_POINT_CAP)]
    pub point_cap: usize,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config { .. } => EXIT_CONFIG,
        Error::InvalidArgument(_)
        | Error::Parse { .. }
        | Error::Io { .. }
        | Error::Image { .. }
        | Error::InsufficientFrames { .. } => EXIT_INPUT,
        Error::EmptyProfile(_) => EXIT_EMPTY_PROFILE,
        _ => EXIT_INTERNAL,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(exit_code(&e), e.to_string())
    }
}

/// Loads a scene file, or a bundled scene by name.
pub fn load_scene(arg: &str) -> Result<SceneFile, Error> {
    let path = Path::new(arg);
    if path.exists() {
        let scene: SceneFile = crate::pipeline::read_json(path)?;
        scene.scene.validate()?;
        scene.camera.intrinsics.validate()?;
        scene.noise.validate()?;
        return Ok(scene);
    }
    scenes::all()
        .into_iter()
        .find(|(name, _)| *name == arg)
        .map(|(_, s)| s)
        .ok_or_else(|| {
            let names: Vec<&str> = scenes::all().iter().map(|(n, _)| *n).collect();
            Error::invalid(format!("`{arg}` is neither a scene file nor a bundled scene ({})", names.join(", ")))
        })
}

fn parse_noise(arg: &str) -> Result<NoiseSpec, Error> {
    match arg {
        "none" => Ok(NoiseSpec::none()),
        "strobe" => Ok(NoiseSpec::strobe()),
        path => {
            let noise: NoiseSpec = crate::pipeline::read_json(Path::new(path))?;
            noise.validate()?;
            Ok(noise)
        }
    }
}

/// Parses `--select`: `largest`, `interactive`, or comma-separated ids.
pub fn parse_selection(arg: &str) -> Result<ClusterSelection, Error> {
    match arg.trim() {
        "largest" => Ok(ClusterSelection::Policy(SelectionPolicy::Largest)),
        "interactive" => Ok(ClusterSelection::Policy(SelectionPolicy::Interactive)),
        "" => Ok(ClusterSelection::Ids(Vec::new())),
        list => list
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map(ClusterSelection::Ids)
            .map_err(|_| Error::config("--select", format!("expected ids, `largest` or `interactive`, got `{arg}`"))),
    }
}

fn color_enabled() -> bool {
    std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty()) && std::io::stdout().is_terminal()
}

/// The per-run summary table.
pub fn summary_table(record: &RunRecord, color: bool) -> String {
    let c = &record.counts;
    let opt = |v: Option<usize>| v.map_or("-".to_string(), |v| v.to_string());
    let headers = ["Number of points", "Sampling time", "Object profile points", "Final targets generated"];
    let values = [
        c.downsampled.to_string(),
        format!("{:.1} ms", record.sampling_ms()),
        opt(c.profile),
        opt(c.targets),
    ];
    let widths: Vec<usize> = headers.iter().zip(&values).map(|(h, v)| h.len().max(v.len())).collect();
    let row = |cells: Vec<String>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let head = row(headers.iter().map(|s| s.to_string()).collect());
    let rule = widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-");
    let head = if color { format!("\x1b[1m{head}\x1b[0m") } else { head };
    format!("{head}\n{rule}\n{}\n", row(values.to_vec()))
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut config = match &args.config {
        Some(p) => load_config(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(sel) = &args.select {
        config.cluster_selection = parse_selection(sel)?;
    }
    let interactive = config.cluster_selection == ClusterSelection::Policy(SelectionPolicy::Interactive);
    if args.headless && interactive {
        return Err(Failure::new(
            EXIT_CONFIG,
            "config error at `cluster_selection`: interactive selection cannot run headless",
        ));
    }
    let spec = match (&args.frames, &args.scene) {
        (Some(dir), _) => SourceSpec::Replay { dir: dir.clone() },
        (None, Some(scene)) => SourceSpec::Scene {
            scene: load_scene(scene)?,
            seed: args.seed,
        },
        (None, None) => return Err(Failure::new(EXIT_CONFIG, "one of --frames or --scene is required")),
    };
    let mut source = spec.open()?;
    let (_, dir) = create_run_dir(&args.out)?;
    let record = run(source.as_mut(), &config, Some(spec), &dir)?;
    print!("{}", summary_table(&record, color_enabled()));
    println!("run: {}", dir.display());
    match &record.plan {
        Some(p) => println!("plan: {}", dir.join(&p.file).display()),
        None => println!(
            "awaiting selection: {} clusters; serve with `inspect serve --run {}`",
            record.counts.clusters,
            dir.display()
        ),
    }
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<(), Failure> {
    if args.frames == 0 {
        return Err(Failure::new(EXIT_CONFIG, "--frames must be at least 1"));
    }
    let scene = load_scene(&args.scene)?;
    let noise = match &args.noise {
        Some(n) => parse_noise(n)?,
        None => scene.noise.clone(),
    };
    let frames = (0..args.frames)
        .map(|i| render_frame(&scene.scene, &scene.camera, &noise, args.seed, i))
        .collect::<Result<Vec<_>, _>>()?;
    write_replay(&args.out, &frames)?;
    let valid: Vec<usize> = frames.iter().map(|f| f.depth.valid_count()).collect();
    println!("rendered {} frames to {} (valid pixels {valid:?})", frames.len(), args.out.join("frames").display());
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<(), Failure> {
    if !args.run.is_dir() {
        return Err(Failure::new(EXIT_INPUT, format!("{}: not a directory", args.run.display())));
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new(EXIT_INTERNAL, e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", args.port))
            .await
            .map_err(|e| {
                let code = if e.kind() == std::io::ErrorKind::AddrInUse { EXIT_PORT_BUSY } else { EXIT_INTERNAL };
                Failure::new(code, format!("cannot bind port {}: {e}", args.port))
            })?;
        let addr = listener.local_addr().map_err(|e| Failure::new(EXIT_INTERNAL, e.to_string()))?;
        println!("listening on http://{addr}");
        std::io::stdout().flush().ok();
        let shutdown = async {
            tokio::signal::ctrl_c().await.ok();
        };
        serve(listener, AppState::new(args.run, args.point_cap), shutdown)
            .await
            .map_err(|e| Failure::new(EXIT_INTERNAL, e.to_string()))
    })
}

/// Runs a parsed command; returns the process exit code.
pub fn execute(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Render(a) => cmd_render(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::StageCounts;

    #[test]
    fn selection_arguments() {
        assert_eq!(parse_selection("0, 2").unwrap(), ClusterSelection::Ids(vec![0, 2]));
        assert_eq!(parse_selection("largest").unwrap(), ClusterSelection::Policy(SelectionPolicy::Largest));
        assert_eq!(parse_selection("").unwrap(), ClusterSelection::Ids(vec![]));
        assert_eq!(exit_code(&parse_selection("first").unwrap_err()), EXIT_CONFIG);
    }

    #[test]
    fn exit_codes_follow_the_root_error() {
        assert_eq!(exit_code(&Error::EmptyProfile("x".into()).at_stage("profile")), EXIT_EMPTY_PROFILE);
        assert_eq!(exit_code(&Error::invalid("x").at_stage("select")), EXIT_INPUT);
        assert_eq!(exit_code(&Error::config("voxel", "x")), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::DegenerateHull("x".into())), EXIT_INTERNAL);
    }

    #[test]
    fn table_has_the_four_columns() {
        let record = RunRecord {
            run_id: "1".into(),
            config: PipelineConfig::default(),
            source: None,
            camera: crate::geom::Vec3::ZERO,
            selected_ids: None,
            slice: None,
            counts: StageCounts {
                downsampled: 795,
                profile: Some(28),
                targets: Some(14),
                ..Default::default()
            },
            timings_ms: [("sample".to_string(), 3.0), ("merge".to_string(), 0.5)].into(),
            plan: None,
        };
        let plain = summary_table(&record, false);
        let lines: Vec<&str> = plain.lines().collect();
        assert_eq!(
            lines[0].split(" | ").map(str::trim).collect::<Vec<_>>(),
            ["Number of points", "Sampling time", "Object profile points", "Final targets generated"]
        );
        assert_eq!(lines[2].split(" | ").map(str::trim).collect::<Vec<_>>(), ["795", "3.5 ms", "28", "14"]);
        assert!(!plain.contains('\x1b'));
        assert!(summary_table(&record, true).contains("\x1b[1m"));
    }

    #[test]
    fn bundled_scenes_load_by_name() {
        assert_eq!(load_scene("sphere").unwrap(), scenes::sphere());
        assert_eq!(exit_code(&load_scene("teapot").unwrap_err()), EXIT_INPUT);
    }
}
