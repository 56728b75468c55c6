use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use earsim_core::config::EngineConfig;
use earsim_core::engine::Engine;
use earsim_core::harness::{evaluate_scorecard, run_scenario, suite_files, RunOptions, Scenario};
use earsim_core::ontology::world_library;
use earsim_core::protocol::server::{serve, ServeOptions};
use earsim_core::scene::parse_scene;

#[derive(Parser)]
#[command(name = "earsim", version, about = "Artificial ear simulator and controller harness")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario file, or every scenario in a directory.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Pace frames by the wall clock.
        #[arg(long)]
        realtime: bool,
        /// Directory for event logs.
        #[arg(long, default_value = "earsim-logs")]
        log: PathBuf,
    },
    /// Judge the capability scorecard from a directory of run logs.
    Scorecard {
        log_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the wire protocol for one scene.
    Serve {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Step frames as fast as possible instead of in real time.
        #[arg(long)]
        fast: bool,
    },
    /// Check a scene file.
    Validate { scene: PathBuf },
}

enum Failure {
    Expectation(String),
    Input(String),
}

fn input<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Input(e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<Option<EngineConfig>, Failure> {
    path.map(EngineConfig::load).transpose().map_err(input)
}

fn run(
    scenario: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    realtime: bool,
    log: &Path,
) -> Result<(), Failure> {
    let config = load_config(config)?;
    let files = if scenario.is_dir() {
        suite_files(scenario).map_err(input)?
    } else {
        vec![scenario.to_path_buf()]
    };
    let scenarios = files
        .iter()
        .map(|f| Scenario::load(f))
        .collect::<Result<Vec<_>, _>>()
        .map_err(input)?;
    let mut failed = Vec::new();
    for s in &scenarios {
        let result = run_scenario(s, config.as_ref(), seed, RunOptions { realtime }).map_err(input)?;
        let path = result.write(log).map_err(input)?;
        let unmet: Vec<String> = result
            .meta
            .expectations
            .iter()
            .filter(|e| !e.met)
            .map(|e| format!("#{} {} (count {})", e.index, e.kind, e.count))
            .collect();
        if unmet.is_empty() {
            println!("ok    {} -> {}", s.name, path.display());
        } else {
            println!("FAIL  {} -> {}: {}", s.name, path.display(), unmet.join(", "));
            failed.push(s.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Expectation(format!("unmet expectations in {}", failed.join(", "))))
    }
}

fn scorecard(log_dir: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let card = evaluate_scorecard(log_dir).map_err(input)?;
    let report = card.to_markdown();
    print!("{report}");
    if let Some(out) = out {
        std::fs::write(out, &report).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    }
    if card.all_in_scope_pass() {
        Ok(())
    } else {
        Err(Failure::Expectation("some in-scope items did not pass".into()))
    }
}

fn read_scene(path: &Path, config: &EngineConfig) -> Result<earsim_core::scene::AuditoryScene, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    parse_scene(&text, &world_library(&config.ear.channel_centers())).map_err(input)
}

fn serve_scene(scene: &Path, listen: &str, config: Option<&Path>, seed: u64, fast: bool) -> Result<(), Failure> {
    let config = load_config(config)?.unwrap_or_default();
    let scene = read_scene(scene, &config)?;
    let engine = Engine::new(scene, &config, seed).map_err(input)?;
    let handle = serve(listen, engine, ServeOptions { realtime: !fast }).map_err(input)?;
    eprintln!("listening on {}", handle.local_addr());
    handle.wait();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Run {
            scenario,
            config,
            seed,
            realtime,
            log,
        } => run(scenario, config.as_deref(), *seed, *realtime, log),
        Cmd::Scorecard { log_dir, out } => scorecard(log_dir, out.as_deref()),
        Cmd::Serve {
            scene,
            listen,
            config,
            seed,
            fast,
        } => serve_scene(scene, listen, config.as_deref(), *seed, *fast),
        Cmd::Validate { scene } => read_scene(scene, &EngineConfig::default()).map(|s| {
            println!("ok: {} sources over {} s", s.sources.len(), s.duration_s);
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Expectation(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
