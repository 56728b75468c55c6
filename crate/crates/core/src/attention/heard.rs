use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ontology::{CategoryId, TemplateId};
use crate::scene::Sex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub id: CategoryId,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Novelty {
    KnownType,
    NewType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordMatch {
    pub w: String,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechReport {
    pub speaker_id: String,
    pub sex: Sex,
    pub words: Vec<WordMatch>,
}

/// The ear's structured report of one perceived sound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeardObject {
    pub id: String,
    pub stream_id: String,
    pub category: CategoryReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateId>,
    /// Relative to the head; add `heading_deg` for a world bearing.
    pub azimuth_deg: f64,
    pub azimuth_sigma_deg: f64,
    pub heading_deg: f64,
    pub front_back_resolved: bool,
    /// `None` when the sound's nominal level is unknown.
    pub distance_m: Option<f64>,
    pub onset_s: f64,
    pub duration_s: f64,
    pub repetition: bool,
    /// dB above background.
    pub loudness_db: f64,
    pub centroid_hz: f64,
    pub doppler_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speech: Option<SpeechReport>,
    #[serde(default)]
    pub modifiers: BTreeMap<String, String>,
    pub novelty: Novelty,
    pub consolidation_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station_tag: Option<String>,
    #[serde(default)]
    pub is_alarm_like: bool,
}

impl HeardObject {
    pub fn words(&self) -> impl Iterator<Item = &WordMatch> {
        self.speech.iter().flat_map(|s| s.words.iter())
    }
}
