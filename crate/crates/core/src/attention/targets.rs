use serde::{Deserialize, Serialize};

use crate::ontology::{CategoryId, OntologyRegistry, TemplateId};

use super::{AttentionConfig, AttentionError, HeardObject};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ListKind {
    ShortTermPrimary,
    ShortTermSecondary,
    LongTerm,
    Ignored,
}

impl ListKind {
    pub fn is_short_term(self) -> bool {
        matches!(self, ListKind::ShortTermPrimary | ListKind::ShortTermSecondary)
    }

    pub fn parse(text: &str) -> Option<ListKind> {
        serde_json::from_value(serde_json::Value::String(text.to_string())).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Pattern {
    Template(TemplateId),
    Category(CategoryId),
    /// Stored lower-case.
    Word(String),
}

impl Pattern {
    /// Templates win over categories; anything the ontology does not know is a word.
    pub fn resolve(text: &str, registry: &OntologyRegistry) -> Pattern {
        let template = TemplateId::from(text);
        if registry.template(&template).is_some() {
            Pattern::Template(template)
        } else if registry.contains(text) {
            Pattern::Category(CategoryId::from(text))
        } else {
            Pattern::Word(text.to_lowercase())
        }
    }

    pub fn text(&self) -> &str {
        match self {
            Pattern::Template(t) => &t.0,
            Pattern::Category(c) => &c.0,
            Pattern::Word(w) => w,
        }
    }

    /// Whether the heard object is an instance of this pattern (words: any matched word).
    pub fn matches(&self, heard: &HeardObject) -> bool {
        match self {
            Pattern::Template(t) => heard.template.as_ref() == Some(t),
            Pattern::Category(c) => heard.category.id.is_under(&c.0),
            Pattern::Word(w) => heard.words().any(|m| m.w.to_lowercase() == *w),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEntry {
    pub entry_id: String,
    pub pattern: Pattern,
    pub list_kind: ListKind,
    pub permanent: bool,
    pub load_time: f64,
    pub activation: f64,
    /// Offset of this entry's low-discrepancy recognition sequence.
    #[serde(skip)]
    pub(crate) phase: f64,
    #[serde(skip)]
    pub(crate) draws: u64,
}

impl TargetEntry {
    /// Next recognition draw in [0, 1): a golden-ratio sequence from a seeded offset,
    /// so hit rates over many probes track the recognition probability closely.
    pub(crate) fn next_draw(&mut self) -> f64 {
        let u = (self.phase + self.draws as f64 * GOLDEN).fract();
        self.draws += 1;
        u
    }
}

/// Activation of a loaded pattern `age` seconds after loading.
pub fn activation_at(age: f64, half_life_s: f64) -> f64 {
    if half_life_s.is_infinite() {
        return 1.0;
    }
    (-(std::f64::consts::LN_2 / half_life_s) * age.max(0.0)).exp()
}

pub fn recognition_probability(activation: f64, config: &AttentionConfig) -> f64 {
    1.0 / (1.0 + (-(activation - config.threshold) / config.slope).exp())
}

pub fn recognition_latency(activation: f64, config: &AttentionConfig) -> f64 {
    config.base_latency_s + config.latency_gain_s * (1.0 - activation)
}

/// A listed entry as reported to cognition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryView {
    pub entry_id: String,
    pub pattern: String,
    pub list_kind: ListKind,
    pub permanent: bool,
    pub activation: f64,
    pub age_s: f64,
}

/// The long-term, short-term (primary/secondary) and ignored lists.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetLists {
    entries: Vec<TargetEntry>,
    next_id: u64,
}

impl TargetLists {
    pub fn entries(&self) -> &[TargetEntry] {
        &self.entries
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [TargetEntry] {
        &mut self.entries
    }

    pub fn get(&self, entry_id: &str) -> Option<&TargetEntry> {
        self.entries.iter().find(|e| e.entry_id == entry_id)
    }

    pub fn short_term_load(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.list_kind.is_short_term() && !e.permanent)
            .count()
    }

    /// Adds a pattern to a list. A pattern already on that list keeps its id
    /// and is reloaded (activation back to 1).
    pub fn load(
        &mut self,
        pattern: Pattern,
        list_kind: ListKind,
        permanent: bool,
        now: f64,
        phase: f64,
        capacity: usize,
    ) -> Result<String, AttentionError> {
        if let Some(e) = self
            .entries
            .iter_mut()
            .find(|e| e.list_kind == list_kind && e.pattern == pattern)
        {
            e.load_time = now;
            e.activation = 1.0;
            e.permanent |= permanent;
            return Ok(e.entry_id.clone());
        }
        if list_kind.is_short_term() && !permanent && self.short_term_load() >= capacity {
            return Err(AttentionError::CapacityFull(capacity));
        }
        self.next_id += 1;
        let entry_id = format!("t{}", self.next_id);
        self.entries.push(TargetEntry {
            entry_id: entry_id.clone(),
            pattern,
            list_kind,
            permanent,
            load_time: now,
            activation: 1.0,
            phase,
            draws: 0,
        });
        Ok(entry_id)
    }

    pub fn remove(&mut self, list_kind: ListKind, pattern: &Pattern) -> Result<TargetEntry, AttentionError> {
        match self
            .entries
            .iter()
            .position(|e| e.list_kind == list_kind && &e.pattern == pattern)
        {
            Some(i) => Ok(self.entries.remove(i)),
            None => Err(AttentionError::NotFound(pattern.text().to_string())),
        }
    }

    pub fn list(&self, list_kind: Option<ListKind>, now: f64) -> Vec<EntryView> {
        self.entries
            .iter()
            .filter(|e| list_kind.is_none_or(|k| k == e.list_kind))
            .map(|e| EntryView {
                entry_id: e.entry_id.clone(),
                pattern: e.pattern.text().to_string(),
                list_kind: e.list_kind,
                permanent: e.permanent,
                activation: e.activation,
                age_s: now - e.load_time,
            })
            .collect()
    }

    pub fn is_ignored(&self, heard: &HeardObject) -> bool {
        self.entries
            .iter()
            .any(|e| e.list_kind == ListKind::Ignored && e.pattern.matches(heard))
    }

    /// Lower-case words on any non-ignored list, and the permanent subset.
    pub fn words(&self) -> (std::collections::BTreeSet<String>, std::collections::BTreeSet<String>) {
        let mut loaded = std::collections::BTreeSet::new();
        let mut permanent = std::collections::BTreeSet::new();
        for e in &self.entries {
            if let (Pattern::Word(w), false) = (&e.pattern, e.list_kind == ListKind::Ignored) {
                loaded.insert(w.clone());
                if e.permanent {
                    permanent.insert(w.clone());
                }
            }
        }
        (loaded, permanent)
    }

    /// Recomputes activations at `now`; permanent entries stay at 1.
    pub fn decay_step(&mut self, now: f64, config: &AttentionConfig) {
        for e in &mut self.entries {
            e.activation = if e.permanent || config.super_ear {
                1.0
            } else {
                activation_at(now - e.load_time, config.half_life(e.list_kind))
            };
        }
    }
}
