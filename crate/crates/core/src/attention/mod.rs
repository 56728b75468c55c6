//! The preprocessor's attention state: target lists with decay, the focus
//! stack, interrupts, the alarm pipeline and head control. Turns per-frame
//! stream reports into the events cognition receives.

mod alarms;
mod head;
mod heard;
mod targets;

pub use alarms::{alarm_type, AlarmConfig, AlarmMetrics, AlarmPipeline};
pub use head::{HeadState, HeadTurn, TurnMode};
pub use heard::{CategoryReport, HeardObject, Novelty, SpeechReport, WordMatch};
pub use targets::{
    activation_at, recognition_latency, recognition_probability, EntryView, ListKind, Pattern, TargetEntry,
    TargetLists,
};

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{ErrorCode, EventKind, EventMessage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionConfig {
    /// Non-permanent entries allowed across both short-term lists.
    pub capacity: usize,
    pub short_term_half_life_s: f64,
    pub long_term_half_life_s: f64,
    /// Logistic midpoint and slope mapping activation to recognition probability.
    pub threshold: f64,
    pub slope: f64,
    pub base_latency_s: f64,
    pub latency_gain_s: f64,
    /// dB above background that captures attention on its own.
    pub exogenous_threshold_db: f64,
    pub turn_rate_dps: f64,
    /// Longest gap between current-sound reports for a live stream.
    pub report_interval_s: f64,
    pub alarms: AlarmConfig,
    /// No decay and no recognition misses.
    pub super_ear: bool,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            capacity: 32,
            short_term_half_life_s: 300.0,
            long_term_half_life_s: 3600.0,
            threshold: 0.3,
            slope: 0.1,
            base_latency_s: 0.2,
            latency_gain_s: 0.8,
            exogenous_threshold_db: 60.0,
            turn_rate_dps: 200.0,
            report_interval_s: 1.0,
            alarms: AlarmConfig::default(),
            super_ear: false,
        }
    }
}

impl AttentionConfig {
    pub fn half_life(&self, list_kind: ListKind) -> f64 {
        match list_kind {
            ListKind::ShortTermPrimary | ListKind::ShortTermSecondary => self.short_term_half_life_s,
            ListKind::LongTerm => self.long_term_half_life_s,
            ListKind::Ignored => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttentionError {
    #[error("short-term lists are full ({0} entries)")]
    CapacityFull(usize),
    #[error("`{0}` is not on that list")]
    NotFound(String),
    #[error("stream `{0}` is not alive")]
    DeadStream(String),
    #[error("{0}")]
    BadRequest(String),
}

impl AttentionError {
    pub fn code(&self) -> ErrorCode {
        match self {
            AttentionError::CapacityFull(_) => ErrorCode::CapacityFull,
            AttentionError::NotFound(_) => ErrorCode::NotFound,
            AttentionError::DeadStream(_) => ErrorCode::DeadStream,
            AttentionError::BadRequest(_) => ErrorCode::BadRequest,
        }
    }
}

/// One stream report offered to attention for a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub heard: HeardObject,
    pub occurrence: u32,
    /// The stream was born, revived or resumed sounding this frame.
    pub new_occurrence: bool,
    /// The stream holds the listener's focus (explicit or implicit).
    pub focused: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Scheduled {
    due: f64,
    order: u64,
    event: EventMessage,
}

#[derive(Debug, Clone, PartialEq)]
struct LastReport {
    t: f64,
    category: String,
    occurrence: u32,
}

#[derive(Debug, Clone)]
pub struct AttentionState {
    pub config: AttentionConfig,
    pub lists: TargetLists,
    pub ignore_interrupts: bool,
    pub interrupt_allow: Vec<Pattern>,
    pub interrupt_deny: Vec<Pattern>,
    /// Last element is the current focus.
    pub focus_stack: Vec<String>,
    pub head: HeadState,
    pub alarms: AlarmPipeline,
    now: f64,
    rng: ChaCha8Rng,
    scheduled: Vec<Scheduled>,
    next_order: u64,
    drawn: BTreeSet<(String, String)>,
    interrupted: BTreeSet<String>,
    reports: BTreeMap<String, LastReport>,
    current: Vec<HeardObject>,
}

/// Result of refocusing.
#[derive(Debug, Clone, PartialEq)]
pub enum Refocus {
    Focused(String),
    /// The stack had nothing to return to; state is unchanged.
    EmptyStack,
}

impl AttentionState {
    pub fn new(config: AttentionConfig, known_alarm_types: impl IntoIterator<Item = String>, seed: u64) -> Self {
        let head = HeadState::new(0.0, config.turn_rate_dps);
        let alarms = AlarmPipeline::new(config.alarms.clone(), known_alarm_types);
        AttentionState {
            config,
            lists: TargetLists::default(),
            ignore_interrupts: false,
            interrupt_allow: Vec::new(),
            interrupt_deny: Vec::new(),
            focus_stack: Vec::new(),
            head,
            alarms,
            now: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            scheduled: Vec::new(),
            next_order: 0,
            drawn: BTreeSet::new(),
            interrupted: BTreeSet::new(),
            reports: BTreeMap::new(),
            current: Vec::new(),
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn load_target(
        &mut self,
        pattern: Pattern,
        list_kind: ListKind,
        permanent: bool,
    ) -> Result<String, AttentionError> {
        if pattern.text().trim().is_empty() {
            return Err(AttentionError::BadRequest("empty pattern".into()));
        }
        let phase: f64 = self.rng.random();
        let now = self.now;
        let id = self
            .lists
            .load(pattern, list_kind, permanent, now, phase, self.config.capacity)?;
        self.lists.decay_step(now, &self.config);
        Ok(id)
    }

    pub fn remove_target(&mut self, list_kind: ListKind, pattern: &Pattern) -> Result<TargetEntry, AttentionError> {
        self.lists.remove(list_kind, pattern)
    }

    pub fn list_targets(&self, list_kind: Option<ListKind>) -> Vec<EntryView> {
        self.lists.list(list_kind, self.now)
    }

    pub fn decay_step(&mut self, now: f64) {
        self.now = self.now.max(now);
        self.lists.decay_step(self.now, &self.config);
    }

    /// Recognition probability of an entry at the current time.
    pub fn entry_probability(&self, entry_id: &str) -> Option<f64> {
        self.lists
            .get(entry_id)
            .map(|e| recognition_probability(e.activation, &self.config))
    }

    pub fn focused(&self) -> Option<&str> {
        self.focus_stack.last().map(String::as_str)
    }

    /// Moves focus to a live stream, remembering the previous focus.
    pub fn focus(&mut self, stream_id: &str, alive: bool) -> Result<(), AttentionError> {
        if !alive {
            return Err(AttentionError::DeadStream(stream_id.to_string()));
        }
        if self.focused() != Some(stream_id) {
            self.focus_stack.push(stream_id.to_string());
        }
        Ok(())
    }

    pub fn refocus_previous(&mut self) -> Refocus {
        if self.focus_stack.len() < 2 {
            return Refocus::EmptyStack;
        }
        self.focus_stack.pop();
        Refocus::Focused(self.focus_stack.last().cloned().unwrap_or_default())
    }

    /// Drops a stream that has ended from the focus stack and report bookkeeping.
    pub fn stream_ended(&mut self, stream_id: &str) {
        self.focus_stack.retain(|s| s != stream_id);
        self.focus_stack.dedup();
        self.reports.remove(stream_id);
    }

    /// Starts a head turn; any in-flight turn is cancelled. Events follow on later frames.
    pub fn turn_head(&mut self, mode: TurnMode, degrees: f64, cause_seq: u64) -> Result<HeadTurn, AttentionError> {
        if !degrees.is_finite() {
            return Err(AttentionError::BadRequest("degrees must be finite".into()));
        }
        let now = self.now;
        let (turn, preempted) = self.head.start_turn(mode, degrees, now, cause_seq);
        if let Some(old) = preempted {
            let mut e = EventMessage::new(EventKind::HeadCancelled, now);
            e.cause_seq = Some(old.cause_seq);
            self.schedule(now, e);
        }
        Ok(turn)
    }

    pub fn set_interrupt_lists(&mut self, ignore_all: Option<bool>, allow: Vec<Pattern>, deny: Vec<Pattern>) {
        if let Some(flag) = ignore_all {
            self.ignore_interrupts = flag;
        }
        for p in allow {
            self.interrupt_deny.retain(|d| d != &p);
            if !self.interrupt_allow.contains(&p) {
                self.interrupt_allow.push(p);
            }
        }
        for p in deny {
            self.interrupt_allow.retain(|a| a != &p);
            if !self.interrupt_deny.contains(&p) {
                self.interrupt_deny.push(p);
            }
        }
    }

    /// Heard objects from the latest frame that were not suppressed.
    pub fn current_sounds(&self) -> &[HeardObject] {
        &self.current
    }

    fn schedule(&mut self, due: f64, event: EventMessage) {
        self.scheduled.push(Scheduled {
            due,
            order: self.next_order,
            event,
        });
        self.next_order += 1;
    }

    fn release_due(&mut self, now: f64) -> Vec<EventMessage> {
        let (mut due, later): (Vec<_>, Vec<_>) = std::mem::take(&mut self.scheduled)
            .into_iter()
            .partition(|s| s.due <= now && s.event.t < now);
        self.scheduled = later;
        due.sort_by(|a, b| a.due.total_cmp(&b.due).then(a.order.cmp(&b.order)));
        due.into_iter()
            .map(|s| {
                let mut e = s.event;
                e.t = now;
                e
            })
            .collect()
    }

    fn interrupt_allowed(&self, heard: &HeardObject) -> bool {
        if self.interrupt_deny.iter().any(|p| p.matches(heard)) {
            return false;
        }
        !self.ignore_interrupts || self.interrupt_allow.iter().any(|p| p.matches(heard))
    }

    /// Draws recognition for one probe of an entry; schedules FOUND on success.
    fn probe(&mut self, entry_index: usize, key: String, probe_t: f64, heard: &HeardObject) {
        let (entry_id, list_kind, activation) = {
            let e = &self.lists.entries()[entry_index];
            (e.entry_id.clone(), e.list_kind, e.activation)
        };
        if !self.drawn.insert((entry_id.clone(), key)) {
            return;
        }
        let p = recognition_probability(activation, &self.config);
        let hit = if self.config.super_ear {
            p >= 0.5
        } else {
            self.lists.entries_mut()[entry_index].next_draw() < p
        };
        if !hit {
            return;
        }
        let due = probe_t + recognition_latency(activation, &self.config);
        let mut e = EventMessage::new(EventKind::Found, self.now).with_heard(heard.clone());
        e.matched_entry = Some(entry_id);
        e.list_kind = Some(list_kind);
        self.schedule(due, e);
    }

    /// Advances attention to `now` and turns this frame's candidates into events.
    ///
    /// `subscribed` says whether anyone listens to the current-sound feed.
    /// Events caused by earlier commands or frames are released first.
    pub fn evaluate_frame(&mut self, candidates: &[Candidate], now: f64, subscribed: bool) -> Vec<EventMessage> {
        self.decay_step(now);
        let mut events = self.release_due(now);
        if let Some(turn) = self.head.step(now) {
            let mut e = EventMessage::new(EventKind::HeadDone, now);
            e.cause_seq = Some(turn.cause_seq);
            events.push(e);
        }
        self.current.clear();

        for cand in candidates {
            let heard = &cand.heard;
            if !self.alarms.on_station(heard) {
                if cand.new_occurrence {
                    self.alarms.note_off_station();
                }
                continue;
            }
            if self.lists.is_ignored(heard) {
                continue;
            }
            self.current.push(heard.clone());

            for i in 0..self.lists.entries().len() {
                let entry = &self.lists.entries()[i];
                if entry.list_kind == ListKind::Ignored || !entry.pattern.matches(heard) {
                    continue;
                }
                match entry.pattern.clone() {
                    Pattern::Word(w) => {
                        let tokens: Vec<f64> = heard
                            .words()
                            .filter(|m| m.w.to_lowercase() == w)
                            .map(|m| m.t)
                            .collect();
                        for t in tokens {
                            self.probe(i, format!("{}|{w}@{t}", heard.stream_id), t, heard);
                        }
                    }
                    _ => {
                        let key = format!("{}#{}", heard.stream_id, cand.occurrence);
                        self.probe(i, key, heard.onset_s, heard);
                    }
                }
            }

            if !heard.is_alarm_like && self.interrupt_allowed(heard) {
                let (_, permanent) = self.lists.words();
                let mut reasons: Vec<(String, &str)> = Vec::new();
                if !cand.focused {
                    for m in heard.words() {
                        if permanent.contains(&m.w.to_lowercase()) {
                            reasons.push((format!("{}|{}@{}", heard.stream_id, m.w, m.t), "name"));
                        }
                    }
                }
                let occurrence = format!("{}#{}", heard.stream_id, cand.occurrence);
                if heard.loudness_db >= self.config.exogenous_threshold_db {
                    reasons.push((format!("{occurrence}/loud"), "loud"));
                }
                if self.interrupt_allow.iter().any(|p| p.matches(heard)) {
                    reasons.push((format!("{occurrence}/listed"), "listed"));
                }
                for (key, reason) in reasons {
                    if self.interrupted.insert(key) {
                        let mut e = EventMessage::new(EventKind::Interrupt, now).with_heard(heard.clone());
                        e.reason = Some(reason.to_string());
                        events.push(e);
                    }
                }
            }

            if heard.is_alarm_like && cand.new_occurrence {
                self.alarms.submit(heard.clone(), now);
            }

            if subscribed {
                let due = match self.reports.get(&heard.stream_id) {
                    None => true,
                    Some(last) => {
                        now - last.t >= self.config.report_interval_s
                            || last.category != heard.category.id.0
                            || last.occurrence != cand.occurrence
                    }
                };
                let mut shown = heard.clone();
                if !cand.focused {
                    if let Some(s) = shown.speech.as_mut() {
                        s.words.clear();
                    }
                }
                let has_words = shown.words().next().is_some();
                if due || has_words {
                    self.reports.insert(
                        heard.stream_id.clone(),
                        LastReport {
                            t: now,
                            category: heard.category.id.0.clone(),
                            occurrence: cand.occurrence,
                        },
                    );
                    events.push(EventMessage::new(EventKind::Sound, now).with_heard(shown));
                }
            }
        }

        for heard in self.alarms.flush(now) {
            if self.lists.is_ignored(&heard) {
                continue;
            }
            events.push(EventMessage::new(EventKind::Alarm, now).with_heard(heard));
        }
        events
    }
}
