//! Controller harness: scripted scenarios, mock cognition clients and the capability scorecard.

mod agent;
mod scorecard;

pub use agent::{AgentRole, AgentSpec, MockAgent};
pub use scorecard::{
    decay_windows, evaluate_scorecard, switch_sequence, DecayWindow, Scorecard, Verdict, VerdictKind, ITEM_IDS,
};

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::config::{ConfigError, EngineConfig};
use crate::engine::{Engine, EngineError};
use crate::ontology::world_library;
use crate::protocol::{encode, AckMessage, Command, CommandMessage, EventMessage, Message, Session};
use crate::scene::{parse_scene, AuditoryScene, SceneError};

/// The only client id the harness uses.
const HARNESS_CLIENT: u64 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario {path}: {source}")]
    Scenario {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("scenario `{0}`: {1}")]
    Invalid(String, String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Scene given either by path (relative to the scenario file) or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneRef {
    Path(String),
    Inline(AuditoryScene),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedCommand {
    pub t: f64,
    pub cmd: Command,
    #[serde(default)]
    pub args: Map<String, Value>,
}

/// A count of log messages that must (or must not) appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    /// Event kind (`SOUND`, `FOUND`, ...) or `ACK`.
    pub kind: String,
    /// Dotted paths into the message and the JSON value each must equal.
    #[serde(default, rename = "where")]
    pub filter: Map<String, Value>,
    /// Inclusive time window.
    #[serde(default)]
    pub from: Option<f64>,
    #[serde(default)]
    pub to: Option<f64>,
    /// Dotted paths that must be present and non-null on every match.
    #[serde(default)]
    pub require: Vec<String>,
    #[serde(default = "one")]
    pub min: usize,
    #[serde(default)]
    pub max: Option<usize>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub scene: SceneRef,
    #[serde(default)]
    pub config: EngineConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub agent: Option<AgentSpec>,
    #[serde(default)]
    pub commands: Vec<TimedCommand>,
    #[serde(default)]
    pub expectations: Vec<Expectation>,
    /// Scorecard items this scenario provides evidence for.
    #[serde(default)]
    pub covers: Vec<String>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut s: Scenario = serde_json::from_str(&text).map_err(|source| HarnessError::Scenario {
            path: path.display().to_string(),
            source,
        })?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    /// Loads and validates the scene the scenario plays.
    pub fn resolve_scene(&self) -> Result<AuditoryScene, HarnessError> {
        let library = world_library(&self.config.ear.channel_centers());
        let scene = match &self.scene {
            SceneRef::Inline(scene) => parse_scene(&scene.to_text(), &library)?,
            SceneRef::Path(p) => {
                let path = self.base_dir.as_deref().unwrap_or(Path::new(".")).join(p);
                let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
                parse_scene(&text, &library)?
            }
        };
        if let Some(c) = self.commands.iter().find(|c| !(c.t >= 0.0 && c.t <= scene.duration_s)) {
            return Err(HarnessError::Invalid(
                self.name.clone(),
                format!("command {} at t={} is outside the scene", c.cmd.name(), c.t),
            ));
        }
        Ok(scene)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub realtime: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationResult {
    pub index: usize,
    pub kind: String,
    pub count: usize,
    pub met: bool,
}

/// Everything the scorecard needs to judge a run without re-reading inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scenario: String,
    pub seed: u64,
    pub covers: Vec<String>,
    pub config: EngineConfig,
    pub scene: AuditoryScene,
    pub expectations: Vec<ExpectationResult>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub log: Vec<Message>,
    pub meta: RunMeta,
}

impl RunResult {
    /// The log as newline-terminated JSON lines.
    pub fn log_text(&self) -> String {
        let mut out = String::new();
        for m in &self.log {
            out.push_str(&encode(m));
            out.push('\n');
        }
        out
    }

    /// Writes `<dir>/<name>.jsonl` and `<dir>/<name>.meta.json`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, HarnessError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let log_path = dir.join(format!("{}.jsonl", self.meta.scenario));
        let meta_path = dir.join(format!("{}.meta.json", self.meta.scenario));
        std::fs::write(&log_path, self.log_text()).map_err(io_err(&log_path))?;
        let meta = serde_json::to_string_pretty(&self.meta).expect("meta serializes");
        std::fs::write(&meta_path, meta).map_err(io_err(&meta_path))?;
        Ok(log_path)
    }
}

pub const DEFAULT_SEED: u64 = 7;

/// Plays a scenario against a fresh engine on a virtual clock.
pub fn run_scenario(
    scenario: &Scenario,
    config_override: Option<&EngineConfig>,
    seed: Option<u64>,
    options: RunOptions,
) -> Result<RunResult, HarnessError> {
    let config = config_override.unwrap_or(&scenario.config).clone();
    config.validate()?;
    let scene = scenario.resolve_scene()?;
    let seed = seed.or(scenario.seed).unwrap_or(DEFAULT_SEED);
    let mut engine = Engine::new(scene.clone(), &config, seed)?;
    let mut session = Session::new(HARNESS_CLIENT);
    let mut agent = scenario.agent.as_ref().map(MockAgent::new);
    let mut script: Vec<&TimedCommand> = scenario.commands.iter().collect();
    script.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut script = script.into_iter().peekable();
    let mut log: Vec<Message> = Vec::new();
    let mut seq = 0u64;
    let mut queue: Vec<(Command, Map<String, Value>)> = agent.as_mut().map(|a| a.start()).unwrap_or_default();
    let start = Instant::now();

    let mut send = |engine: &mut Engine, session: &mut Session, log: &mut Vec<Message>, cmd, args| -> AckMessage {
        seq += 1;
        let msg = CommandMessage { seq, cmd, args };
        log.push(Message::Command(msg.clone()));
        let ack = session.handle(engine, &msg);
        log.push(Message::Ack(ack.clone()));
        ack
    };

    while let Some(t) = engine.next_frame_time() {
        if options.realtime {
            let target = Duration::from_secs_f64(t);
            if let Some(wait) = target.checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        let events: Vec<EventMessage> = engine.step().unwrap_or_default();
        for e in &events {
            log.push(Message::Event(e.clone()));
        }
        if let Some(a) = agent.as_mut() {
            for e in &events {
                queue.extend(a.on_event(e));
            }
            queue.extend(a.tick(t));
        }
        while let Some(c) = script.next_if(|c| c.t <= t + 1e-9) {
            queue.push((c.cmd, c.args.clone()));
        }
        for (cmd, args) in std::mem::take(&mut queue) {
            let ack = send(&mut engine, &mut session, &mut log, cmd, args.clone());
            if let Some(a) = agent.as_mut() {
                a.on_ack(cmd, &args, &ack);
            }
        }
    }

    let expectations: Vec<ExpectationResult> = scenario
        .expectations
        .iter()
        .enumerate()
        .map(|(index, ex)| {
            let count = count_matches(&log, ex);
            ExpectationResult {
                index,
                kind: ex.kind.clone(),
                count,
                met: count >= ex.min && ex.max.is_none_or(|m| count <= m),
            }
        })
        .collect();
    let passed = expectations.iter().all(|e| e.met);
    Ok(RunResult {
        log,
        meta: RunMeta {
            scenario: scenario.name.clone(),
            seed,
            covers: scenario.covers.clone(),
            config,
            scene,
            expectations,
            passed,
        },
    })
}

/// Looks up a dotted path (`heard.speech.words`) in a JSON value.
pub fn lookup<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(value, |v, key| match v {
        Value::Object(m) => m.get(key),
        Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get(i)),
        _ => None,
    })
}

fn count_matches(log: &[Message], ex: &Expectation) -> usize {
    log.iter()
        .filter_map(|m| match m {
            Message::Event(e) if serde_json::to_value(e.kind).ok()?.as_str()? == ex.kind => {
                Some((e.t, serde_json::to_value(e).ok()?))
            }
            Message::Ack(a) if ex.kind == "ACK" => Some((a.t, serde_json::to_value(a).ok()?)),
            _ => None,
        })
        .filter(|(t, v)| {
            ex.from.is_none_or(|f| *t >= f)
                && ex.to.is_none_or(|to| *t <= to)
                && ex.filter.iter().all(|(k, want)| lookup(v, k) == Some(want))
                && ex.require.iter().all(|k| lookup(v, k).is_some_and(|x| !x.is_null()))
        })
        .count()
}

/// Reads a log written by [`RunResult::write`].
pub fn read_log(path: &Path) -> Result<Vec<Message>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| HarnessError::Scenario {
                path: path.display().to_string(),
                source,
            })
        })
        .collect()
}

pub fn read_meta(path: &Path) -> Result<RunMeta, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Scenario {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the log to any sink, one message per line.
pub fn write_log<W: Write>(log: &[Message], mut out: W) -> std::io::Result<()> {
    for m in log {
        writeln!(out, "{}", encode(m))?;
    }
    Ok(())
}

/// Scenario files (`*.json`) in a directory, sorted by name.
pub fn suite_files(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}
