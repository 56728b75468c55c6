use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::protocol::{AckMessage, Command, EventKind, EventMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    NameListener,
    VigilanceOperator,
    HeadTurner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub role: AgentRole,
    /// name_listener: the listener's name, loaded permanently.
    #[serde(default)]
    pub name: Option<String>,
    /// name_listener: seconds to stay on the interrupting stream before refocusing.
    #[serde(default = "default_dwell")]
    pub dwell_s: f64,
    /// name_listener: world bearing of the speaker to attend first.
    #[serde(default)]
    pub attend_azimuth_deg: Option<f64>,
    /// name_listener: words to load for the conversation being followed.
    #[serde(default)]
    pub vocabulary: Vec<String>,
    /// vigilance_operator: patterns to watch for.
    #[serde(default)]
    pub patterns: Vec<String>,
    #[serde(default)]
    pub permanent: bool,
}

fn default_dwell() -> f64 {
    3.0
}

type Outgoing = Vec<(Command, Map<String, Value>)>;

fn args(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

/// A scripted stand-in for a cognitive architecture.
#[derive(Debug, Clone)]
pub struct MockAgent {
    spec: AgentSpec,
    focused: Option<String>,
    switched_at: Option<f64>,
    refocused: bool,
    turned: bool,
}

impl MockAgent {
    pub fn new(spec: &AgentSpec) -> Self {
        MockAgent {
            spec: spec.clone(),
            focused: None,
            switched_at: None,
            refocused: false,
            turned: false,
        }
    }

    pub fn role(&self) -> AgentRole {
        self.spec.role
    }

    /// Commands sent once before the first frame.
    pub fn start(&mut self) -> Outgoing {
        let mut out = Outgoing::new();
        match self.spec.role {
            AgentRole::NameListener => {
                out.push((Command::Subscribe, Map::new()));
                if let Some(name) = &self.spec.name {
                    out.push((
                        Command::ListAdd,
                        args(json!({"list": "long_term", "pattern": name, "permanent": true})),
                    ));
                }
                if !self.spec.vocabulary.is_empty() {
                    out.push((
                        Command::ListAdd,
                        args(json!({"list": "short_term_primary", "patterns": self.spec.vocabulary})),
                    ));
                }
            }
            AgentRole::VigilanceOperator => {
                if !self.spec.patterns.is_empty() {
                    out.push((
                        Command::Vigilance,
                        args(json!({"patterns": self.spec.patterns, "permanent": self.spec.permanent})),
                    ));
                }
            }
            AgentRole::HeadTurner => out.push((Command::Subscribe, Map::new())),
        }
        out
    }

    pub fn on_event(&mut self, e: &EventMessage) -> Outgoing {
        let mut out = Outgoing::new();
        let Some(heard) = &e.heard else {
            return out;
        };
        match self.spec.role {
            AgentRole::NameListener => {
                if self.focused.is_none() && e.kind == EventKind::Sound && heard.speech.is_some() {
                    let world = heard.heading_deg + heard.azimuth_deg;
                    let wanted = self
                        .spec
                        .attend_azimuth_deg
                        .is_none_or(|a| crate::scene::wrap_deg(world - a).abs() <= 20.0);
                    if wanted {
                        self.focused = Some(heard.stream_id.clone());
                        out.push((Command::ListenPrimary, args(json!({"stream_id": heard.stream_id}))));
                    }
                } else if e.kind == EventKind::Interrupt
                    && e.reason.as_deref() == Some("name")
                    && self.switched_at.is_none()
                    && self.focused.as_deref().is_some_and(|f| f != heard.stream_id)
                {
                    self.switched_at = Some(e.t);
                    out.push((Command::ListenPrimary, args(json!({"stream_id": heard.stream_id}))));
                }
            }
            AgentRole::VigilanceOperator => {}
            AgentRole::HeadTurner => {
                if !self.turned && e.kind == EventKind::Sound {
                    self.turned = true;
                    out.push((
                        Command::TurnHead,
                        args(json!({"mode": "absolute", "deg": crate::scene::wrap_deg(heard.heading_deg + heard.azimuth_deg)})),
                    ));
                }
            }
        }
        out
    }

    /// Called once per frame after events; drives time-based behaviour.
    pub fn tick(&mut self, now: f64) -> Outgoing {
        match (self.spec.role, self.switched_at) {
            (AgentRole::NameListener, Some(at)) if !self.refocused && now - at >= self.spec.dwell_s => {
                self.refocused = true;
                vec![(Command::ListenPrimary, args(json!({"refocus": true})))]
            }
            _ => Vec::new(),
        }
    }

    pub fn on_ack(&mut self, cmd: Command, _args: &Map<String, Value>, ack: &AckMessage) {
        // a focus request on a stream that died before the command arrived: try again on the next report
        if cmd == Command::ListenPrimary && !ack.is_ok() && self.switched_at.is_none() {
            self.focused = None;
        }
    }
}
