//! The ear's single timeline: renders each frame of a scene, runs scene
//! analysis and attention, and serialises commands from cognition between frames.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::attention::{
    AlarmMetrics, AttentionError, AttentionState, Candidate, ListKind, Pattern, Refocus, TurnMode,
};
use crate::config::{ConfigError, EngineConfig};
use crate::frontend::{
    apply_sensitivity, features_from, mix_frame, source_contributions, InterauralFeatures, Sensitivity,
};
use crate::localization::localize_with;
use crate::ontology::{builtin_ontology, world_library, OntologyRegistry};
use crate::protocol::{AckMessage, Command, CommandMessage, EventKind, EventMessage};
use crate::scene::{validate_scene, AuditoryScene, SceneError};
use crate::segregation::{
    identify_stream, segregate_window, track_streams, ListeningContext, ObservedFrame, TrackPoint, Tracker,
    WordGate,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Identifies a cognition client for subscriptions.
pub type ClientId = u64;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineMetrics {
    pub frames: u64,
    pub streams: u64,
    pub events: u64,
    pub alarms: AlarmMetrics,
}

pub struct Engine {
    config: EngineConfig,
    scene: AuditoryScene,
    library: OntologyRegistry,
    registry: OntologyRegistry,
    tracker: Tracker,
    attention: AttentionState,
    window: VecDeque<ObservedFrame>,
    frame_count: u64,
    frame: u64,
    now: f64,
    rng: ChaCha8Rng,
    next_event: u64,
    streams: u64,
    subscribers: BTreeSet<ClientId>,
}

/// Index of the first frame at or after `t`; tolerant of rounding so a token on a
/// frame boundary lands in exactly one frame.
fn frame_of(t: f64, hop: f64) -> u64 {
    (t / hop - 1e-6).ceil().max(0.0) as u64
}

impl Engine {
    /// Builds an ear for `scene`. The scene is checked against the world's sound
    /// library; the ear itself only knows the programmed templates.
    pub fn new(scene: AuditoryScene, config: &EngineConfig, seed: u64) -> Result<Engine, EngineError> {
        config.validate()?;
        let config = config.effective();
        let centers = config.ear.channel_centers();
        let library = world_library(&centers);
        let violations = validate_scene(&scene, &library);
        if !violations.is_empty() {
            return Err(SceneError::Semantic(violations).into());
        }
        let registry = builtin_ontology(&centers);
        let known_alarms: Vec<String> = registry
            .templates()
            .filter(|t| t.category.is_under("Mechanical/Alarms"))
            .map(|t| t.id.0.clone())
            .collect();
        let frame_count = scene.frame_times().count() as u64;
        Ok(Engine {
            tracker: Tracker::new(config.segregation.clone(), centers),
            attention: AttentionState::new(config.attention.clone(), known_alarms, seed ^ 0x5eed_a77e),
            window: VecDeque::new(),
            frame_count,
            frame: 0,
            now: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_event: 0,
            streams: 0,
            subscribers: BTreeSet::new(),
            config,
            scene,
            library,
            registry,
        })
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn scene(&self) -> &AuditoryScene {
        &self.scene
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn registry(&self) -> &OntologyRegistry {
        &self.registry
    }

    pub fn attention(&self) -> &AttentionState {
        &self.attention
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn is_finished(&self) -> bool {
        self.frame >= self.frame_count
    }

    pub fn frame_hop(&self) -> f64 {
        self.scene.frame_hop_s
    }

    /// Time of the next frame, if any remain.
    pub fn next_frame_time(&self) -> Option<f64> {
        (!self.is_finished()).then(|| self.frame as f64 * self.scene.frame_hop_s)
    }

    pub fn metrics(&self) -> EngineMetrics {
        EngineMetrics {
            frames: self.frame,
            streams: self.streams,
            events: self.next_event,
            alarms: self.attention.alarms.metrics,
        }
    }

    pub fn has_subscribers(&self) -> bool {
        !self.subscribers.is_empty()
    }

    pub fn is_subscribed(&self, client: ClientId) -> bool {
        self.subscribers.contains(&client)
    }

    /// Forgets a disconnected client.
    pub fn drop_client(&mut self, client: ClientId) {
        self.subscribers.remove(&client);
    }

    fn number(&mut self, mut events: Vec<EventMessage>) -> Vec<EventMessage> {
        for e in &mut events {
            self.next_event += 1;
            e.event_id = format!("e{}", self.next_event);
        }
        events
    }

    /// Advances one frame. Returns `None` once the scene is over.
    pub fn step(&mut self) -> Option<Vec<EventMessage>> {
        if self.is_finished() {
            return None;
        }
        let index = self.frame;
        let t = index as f64 * self.scene.frame_hop_s;
        self.frame += 1;
        self.now = t;
        let heading = self.attention.head.heading_at(t);
        let ear = &self.config.ear;
        let bg = self.scene.background_db;

        let contribs = source_contributions(&self.scene, &self.library, ear, heading, t);
        let mut frame = mix_frame(t, bg, ear, &contribs);
        if ear.sensitivity != Sensitivity::Normal {
            frame = apply_sensitivity(&frame, ear);
        }
        let features = features_from(&frame, &contribs);
        self.window.push_back(ObservedFrame { frame, features });
        while self.window.len() > self.config.segregation.window_frames {
            self.window.pop_front();
        }
        let frames: Vec<ObservedFrame> = self.window.iter().cloned().collect();
        let seg = segregate_window(&frames, ear, &self.config.segregation);
        let update = track_streams(&mut self.tracker, &seg, t, heading, bg, &self.registry);
        self.streams += update.born.len() as u64;

        // Symbolic payloads (words, speaker, alarm/station tags) travel with
        // whichever scene source dominates the stream's cells.
        let newest = seg.assignments.last().cloned().unwrap_or_default();
        let hop = self.scene.frame_hop_s;
        let mut powers: BTreeMap<String, f64> = BTreeMap::new();
        for (label, stream_id) in &update.assignments {
            let mut votes: BTreeMap<usize, f64> = BTreeMap::new();
            for (ch, a) in newest.iter().enumerate() {
                if *a != Some(*label) {
                    continue;
                }
                if let Some(c) = contribs
                    .iter()
                    .max_by(|a, b| a.mean_power(ch).total_cmp(&b.mean_power(ch)))
                {
                    *votes.entry(c.source).or_insert(0.0) += c.mean_power(ch);
                }
            }
            let source = votes
                .into_iter()
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(s, _)| &self.scene.sources[s]);
            let cluster = &seg.clusters[*label];
            let cue = InterauralFeatures {
                t,
                itd_s: cluster.itd_s,
                ild_db: Vec::new(),
                summed_loudness_db: 0.0,
                channel_itd_s: Vec::new(),
            };
            let estimate = localize_with(&cue, ear, &self.config.localization, &mut self.rng);
            let Some(track) = self.tracker.get_mut(stream_id) else {
                continue;
            };
            track.azimuth_track.push_back(TrackPoint {
                t,
                heading_deg: heading,
                estimate,
            });
            while track.azimuth_track.len() > self.config.segregation.history_len {
                track.azimuth_track.pop_front();
            }
            track.pending_words.clear();
            if let Some(src) = source {
                track.pending_words = src
                    .words_between(t - 2.0 * hop, t + hop)
                    .into_iter()
                    .filter(|(_, onset)| frame_of(*onset, hop) == index)
                    .collect();
                if let Some(sp) = &src.speech {
                    track.speaker = Some((sp.speaker_id.clone(), sp.sex));
                }
                track.is_alarm_like |= src.is_alarm;
                if src.station.is_some() {
                    track.station_tag = src.station.clone();
                }
            }
            powers.insert(stream_id.clone(), 10f64.powf(track.loudness_db / 10.0));
        }

        let explicit = self
            .attention
            .focused()
            .filter(|id| powers.contains_key(*id))
            .map(str::to_string);
        let focused = explicit.or_else(|| {
            powers
                .iter()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(id, _)| id.clone())
        });
        let total: f64 = powers.values().sum();
        let (loaded, permanent) = self.attention.lists.words();
        let context = ListeningContext {
            ear,
            localization: &self.config.localization,
            background_db: bg,
        };
        let new_occurrence: BTreeSet<&String> = update.new_occurrence.iter().collect();
        let mut candidates = Vec::new();
        for (_, stream_id) in &update.assignments {
            let Some(track) = self.tracker.get(stream_id) else {
                continue;
            };
            let own = powers[stream_id];
            let others = total - own;
            let margin = 10f64.powf(-self.config.segregation.intelligibility_margin_db / 10.0);
            let is_focused = focused.as_deref() == Some(stream_id.as_str());
            let gate = WordGate {
                focused: is_focused,
                intelligible: others <= 0.0 || own > others * margin,
                loaded: &loaded,
                permanent: &permanent,
            };
            let heard = identify_stream(track, &self.registry, &gate, &context);
            candidates.push(Candidate {
                occurrence: track.occurrence,
                new_occurrence: new_occurrence.contains(stream_id),
                focused: is_focused,
                heard,
            });
        }
        for c in &candidates {
            if let Some(track) = self.tracker.get_mut(&c.heard.stream_id) {
                track
                    .speech_matches
                    .extend(c.heard.words().map(|m| (m.w.clone(), m.t)));
            }
        }

        let subscribed = self.has_subscribers();
        let mut events = self.attention.evaluate_frame(&candidates, t, subscribed);
        for ended in &update.ended {
            self.attention.stream_ended(&ended.stream_id);
            let mut e = EventMessage::new(EventKind::StreamEnded, t);
            e.stream_id = Some(ended.stream_id.clone());
            events.push(e);
        }
        Some(self.number(events))
    }

    /// Applies one command at the current engine time.
    pub fn handle_command(&mut self, client: ClientId, msg: &CommandMessage) -> AckMessage {
        let t = self.now;
        match self.dispatch(client, msg) {
            Ok(payload) => AckMessage::ok(msg.seq, t, payload),
            Err(e) => AckMessage::error(Some(msg.seq), t, e.code(), e.to_string()),
        }
    }

    fn dispatch(&mut self, client: ClientId, msg: &CommandMessage) -> Result<Option<Value>, AttentionError> {
        let args = &msg.args;
        match msg.cmd {
            Command::CurrentSound => Ok(self
                .attention
                .current_sounds()
                .iter()
                .max_by(|a, b| a.loudness_db.total_cmp(&b.loudness_db))
                .map(|h| json!({ "heard": h }))),
            Command::Subscribe => {
                self.subscribers.insert(client);
                Ok(None)
            }
            Command::Unsubscribe => {
                self.subscribers.remove(&client);
                Ok(None)
            }
            Command::ListenPrimary => {
                if let Some(stream) = args.get("stream_id") {
                    let id = stream
                        .as_str()
                        .ok_or_else(|| bad("stream_id must be a string"))?
                        .to_string();
                    let alive = self.tracker.is_live(&id);
                    self.attention.focus(&id, alive)?;
                    return Ok(Some(json!({ "focus": id, "stack": self.attention.focus_stack })));
                }
                if args.get("refocus").and_then(Value::as_bool) == Some(true) {
                    return Ok(Some(match self.attention.refocus_previous() {
                        Refocus::Focused(id) => json!({ "focus": id, "stack": self.attention.focus_stack }),
                        Refocus::EmptyStack => json!({
                            "focus": self.attention.focused(),
                            "stack": self.attention.focus_stack,
                            "notice": "focus stack empty"
                        }),
                    }));
                }
                for noise in string_list(args, "noise")? {
                    let p = Pattern::resolve(&noise, &self.registry);
                    self.attention.load_target(p, ListKind::Ignored, false)?;
                }
                self.load(args, ListKind::ShortTermPrimary)
            }
            Command::ListenSecondary => self.load(args, ListKind::ShortTermSecondary),
            Command::Vigilance => self.load(args, ListKind::LongTerm),
            Command::TakeInterrupts => {
                let allow = self.patterns(args)?;
                self.attention.set_interrupt_lists(Some(false), allow, Vec::new());
                Ok(None)
            }
            Command::IgnoreInterrupts => {
                let deny = self.patterns(args)?;
                let all = deny.is_empty() || args.get("all").and_then(Value::as_bool) == Some(true);
                self.attention.set_interrupt_lists(all.then_some(true), Vec::new(), deny);
                Ok(None)
            }
            Command::ListAdd => {
                let list = list_arg(args)?.ok_or_else(|| bad("missing `list`"))?;
                self.load(args, list)
            }
            Command::ListRemove => {
                let list = list_arg(args)?.ok_or_else(|| bad("missing `list`"))?;
                let text = str_arg(args, "pattern")?;
                let pattern = Pattern::resolve(text, &self.registry);
                let removed = self.attention.remove_target(list, &pattern)?;
                Ok(Some(json!({ "entry_id": removed.entry_id })))
            }
            Command::ListQuery => {
                let list = list_arg(args)?;
                Ok(Some(json!({ "entries": self.attention.list_targets(list) })))
            }
            Command::TurnHead => {
                let mode: TurnMode = match args.get("mode") {
                    None => TurnMode::Relative,
                    Some(v) => serde_json::from_value(v.clone()).map_err(|_| bad("mode must be absolute or relative"))?,
                };
                let deg = args
                    .get("deg")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| bad("missing numeric `deg`"))?;
                let turn = self.attention.turn_head(mode, deg, msg.seq)?;
                Ok(Some(json!({ "target_deg": crate::scene::wrap_deg(turn.target_deg), "eta_s": turn.eta_s })))
            }
        }
    }

    fn patterns(&self, args: &Map<String, Value>) -> Result<Vec<Pattern>, AttentionError> {
        let mut texts = string_list(args, "patterns")?;
        if let Some(v) = args.get("pattern") {
            texts.push(v.as_str().ok_or_else(|| bad("pattern must be a string"))?.to_string());
        }
        Ok(texts.iter().map(|t| Pattern::resolve(t, &self.registry)).collect())
    }

    fn load(&mut self, args: &Map<String, Value>, list: ListKind) -> Result<Option<Value>, AttentionError> {
        let permanent = match args.get("permanent") {
            None => false,
            Some(v) => v.as_bool().ok_or_else(|| bad("permanent must be a boolean"))?,
        };
        let patterns = self.patterns(args)?;
        if patterns.is_empty() {
            return Err(bad("missing `pattern`"));
        }
        let mut ids = Vec::new();
        for p in patterns {
            ids.push(self.attention.load_target(p, list, permanent)?);
        }
        Ok(Some(if ids.len() == 1 {
            json!({ "entry_id": ids[0] })
        } else {
            json!({ "entry_ids": ids })
        }))
    }
}

fn bad(msg: &str) -> AttentionError {
    AttentionError::BadRequest(msg.to_string())
}

fn str_arg<'a>(args: &'a Map<String, Value>, key: &str) -> Result<&'a str, AttentionError> {
    args.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| AttentionError::BadRequest(format!("missing string `{key}`")))
}

fn string_list(args: &Map<String, Value>, key: &str) -> Result<Vec<String>, AttentionError> {
    match args.get(key) {
        None => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| AttentionError::BadRequest(format!("`{key}` must hold strings")))
            })
            .collect(),
        Some(_) => Err(AttentionError::BadRequest(format!("`{key}` must be a list"))),
    }
}

fn list_arg(args: &Map<String, Value>) -> Result<Option<ListKind>, AttentionError> {
    match args.get("list") {
        None => Ok(None),
        Some(v) => v
            .as_str()
            .and_then(ListKind::parse)
            .map(Some)
            .ok_or_else(|| AttentionError::BadRequest(format!("unknown list {v}"))),
    }
}
