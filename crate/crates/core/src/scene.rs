//! Scripted auditory scenes: the ground truth that the ear listens to.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{OntologyRegistry, TemplateId};

const SPEECH_CATEGORY: &str = "HumanMade/Speech";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t_s: f64,
    pub azimuth_deg: f64,
    pub distance_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Repeat {
    pub period_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delivery {
    Normal,
    Whisper,
    Shout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordToken {
    pub w: String,
    /// Relative to the start of each occurrence of the source.
    pub onset_s: f64,
    pub dur_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechPayload {
    pub speaker_id: String,
    pub sex: Sex,
    pub delivery: Delivery,
    pub words: Vec<WordToken>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundSource {
    pub id: String,
    pub template: TemplateId,
    pub onset_s: f64,
    pub duration_s: f64,
    pub level_db_at_1m: f64,
    pub repeat: Option<Repeat>,
    pub trajectory: Vec<Keyframe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speech: Option<SpeechPayload>,
    #[serde(default)]
    pub is_alarm: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditoryScene {
    pub duration_s: f64,
    pub background_db: f64,
    pub sample_rate_hz: f64,
    pub frame_hop_s: f64,
    pub sources: Vec<SoundSource>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceState {
    pub active: bool,
    pub azimuth_deg: f64,
    pub distance_m: f64,
    pub level_at_ear_db: f64,
    /// Rate of change of distance; positive when receding.
    pub radial_velocity_mps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub source_id: Option<String>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.source_id {
            Some(id) => write!(f, "source `{id}`: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scene: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Semantic(Vec<Violation>),
    #[error("unknown source `{0}`")]
    UnknownSource(String),
}

/// Wraps an angle in degrees into [-180, 180).
pub fn wrap_deg(a: f64) -> f64 {
    let w = (a + 180.0).rem_euclid(360.0) - 180.0;
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Level of a source at `distance_m` under free-field inverse-square spreading.
pub fn level_at_distance(level_db_at_1m: f64, distance_m: f64) -> f64 {
    level_db_at_1m - 20.0 * distance_m.log10()
}

impl SoundSource {
    /// Start time of the occurrence covering `t`, if the source is sounding then.
    pub fn occurrence_start(&self, t: f64) -> Option<f64> {
        if t < self.onset_s {
            return None;
        }
        let since = t - self.onset_s;
        match self.repeat {
            None => (since < self.duration_s).then_some(self.onset_s),
            Some(Repeat { period_s }) => {
                let k = (since / period_s).floor();
                let start = self.onset_s + k * period_s;
                (t - start < self.duration_s).then_some(start)
            }
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        self.occurrence_start(t).is_some()
    }

    /// Azimuth, distance and radial velocity along the trajectory at scene time `t`.
    pub fn position_at(&self, t: f64) -> (f64, f64, f64) {
        let kf = &self.trajectory;
        let Some(first) = kf.first() else {
            return (0.0, 1.0, 0.0);
        };
        if kf.len() == 1 || t <= first.t_s {
            return (wrap_deg(first.azimuth_deg), first.distance_m, 0.0);
        }
        let last = kf[kf.len() - 1];
        if t >= last.t_s {
            return (wrap_deg(last.azimuth_deg), last.distance_m, 0.0);
        }
        let i = kf.windows(2).position(|w| t >= w[0].t_s && t < w[1].t_s).unwrap_or(0);
        let (a, b) = (kf[i], kf[i + 1]);
        let span = b.t_s - a.t_s;
        let u = (t - a.t_s) / span;
        let arc = wrap_deg(b.azimuth_deg - a.azimuth_deg);
        let azimuth = wrap_deg(a.azimuth_deg + u * arc);
        let distance = a.distance_m + u * (b.distance_m - a.distance_m);
        let velocity = (b.distance_m - a.distance_m) / span;
        (azimuth, distance, velocity)
    }

    pub fn state_at(&self, t: f64) -> SourceState {
        let (azimuth_deg, distance_m, radial_velocity_mps) = self.position_at(t);
        SourceState {
            active: self.is_active(t),
            azimuth_deg,
            distance_m,
            level_at_ear_db: level_at_distance(self.level_db_at_1m, distance_m),
            radial_velocity_mps,
        }
    }

    /// Word tokens sounding at any point in `[from, to]`, with absolute onsets.
    pub fn words_between(&self, from: f64, to: f64) -> Vec<(String, f64)> {
        let Some(speech) = &self.speech else {
            return Vec::new();
        };
        let mut out = Vec::new();
        // occurrences that may overlap the interval
        let starts: Vec<f64> = match self.repeat {
            None => vec![self.onset_s],
            Some(Repeat { period_s }) => {
                let k0 = ((from - self.onset_s - self.duration_s) / period_s).floor().max(0.0) as u64;
                let k1 = ((to - self.onset_s) / period_s).floor().max(0.0) as u64;
                (k0..=k1).map(|k| self.onset_s + k as f64 * period_s).collect()
            }
        };
        for start in starts {
            for w in &speech.words {
                let on = start + w.onset_s;
                let off = on + w.dur_s;
                if on <= to && off >= from {
                    out.push((w.w.clone(), on));
                }
            }
        }
        out
    }
}

impl AuditoryScene {
    pub fn source(&self, id: &str) -> Option<&SoundSource> {
        self.sources.iter().find(|s| s.id == id)
    }

    pub fn source_state_at(&self, source_id: &str, t: f64) -> Result<SourceState, SceneError> {
        self.source(source_id)
            .map(|s| s.state_at(t))
            .ok_or_else(|| SceneError::UnknownSource(source_id.to_string()))
    }

    /// Frame timestamps `k * frame_hop` covering `[0, duration]`.
    pub fn frame_times(&self) -> impl Iterator<Item = f64> + '_ {
        let n = (self.duration_s / self.frame_hop_s + 1e-9).floor() as u64;
        (0..=n).map(move |k| k as f64 * self.frame_hop_s)
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}

/// Parses and validates a scene document against a sound library.
pub fn parse_scene(text: &str, library: &OntologyRegistry) -> Result<AuditoryScene, SceneError> {
    let scene: AuditoryScene = serde_json::from_str(text).map_err(|e| SceneError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let violations = validate_scene(&scene, library);
    if violations.is_empty() {
        Ok(scene)
    } else {
        Err(SceneError::Semantic(violations))
    }
}

/// Every type invariant the scene breaks; empty when valid.
pub fn validate_scene(scene: &AuditoryScene, library: &OntologyRegistry) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut scene_err = |m: String| {
        out.push(Violation {
            source_id: None,
            message: m,
        })
    };
    if !(scene.duration_s > 0.0) {
        scene_err(format!("duration_s must be > 0, got {}", scene.duration_s));
    }
    if !(scene.sample_rate_hz >= 8000.0) {
        scene_err(format!("sample_rate_hz must be >= 8000, got {}", scene.sample_rate_hz));
    }
    if !(scene.frame_hop_s > 0.0) {
        scene_err(format!("frame_hop_s must be > 0, got {}", scene.frame_hop_s));
    }
    if !scene.background_db.is_finite() {
        scene_err("background_db must be finite".into());
    }

    for (i, a) in scene.sources.iter().enumerate() {
        if let Some(j) = scene.sources[..i].iter().position(|b| b.id == a.id) {
            out.push(Violation {
                source_id: Some(a.id.clone()),
                message: format!("sources[{j}] and sources[{i}] share id `{}`", a.id),
            });
        }
    }

    for s in &scene.sources {
        let mut v = |m: String| {
            out.push(Violation {
                source_id: Some(s.id.clone()),
                message: m,
            })
        };
        let template = library.template(&s.template);
        if template.is_none() {
            v(format!("unknown template `{}`", s.template));
        }
        if !(s.onset_s >= 0.0) {
            v(format!("onset_s must be >= 0, got {}", s.onset_s));
        }
        if !(s.duration_s > 0.0) {
            v(format!("duration_s must be > 0, got {}", s.duration_s));
        }
        if !s.level_db_at_1m.is_finite() {
            v("level_db_at_1m must be finite".into());
        }
        match s.repeat {
            None => {
                if s.onset_s + s.duration_s > scene.duration_s + 1e-9 {
                    v(format!(
                        "onset + duration ({}) exceeds scene duration ({})",
                        s.onset_s + s.duration_s,
                        scene.duration_s
                    ));
                }
            }
            Some(Repeat { period_s }) => {
                if !(period_s > 0.0) {
                    v(format!("repeat period must be > 0, got {period_s}"));
                } else if period_s < s.duration_s {
                    v(format!("repeat period {period_s} shorter than duration {}", s.duration_s));
                }
            }
        }
        if s.trajectory.is_empty() {
            v("trajectory needs at least one keyframe".into());
        }
        for w in s.trajectory.windows(2) {
            if !(w[1].t_s > w[0].t_s) {
                v(format!("keyframe times not increasing at t = {}", w[1].t_s));
            }
        }
        for k in &s.trajectory {
            if !(k.distance_m > 0.0) {
                v(format!("distance must be > 0 at t = {}", k.t_s));
            }
            if !(-180.0..180.0).contains(&k.azimuth_deg) {
                v(format!("azimuth {} outside [-180, 180)", k.azimuth_deg));
            }
        }
        if let Some(speech) = &s.speech {
            if let Some(t) = template {
                if !t.category.is_under(SPEECH_CATEGORY) {
                    v("speech on non-speech category".into());
                }
            }
            for w in &speech.words {
                if !(w.onset_s >= 0.0) || !(w.dur_s > 0.0) || w.onset_s + w.dur_s > s.duration_s + 1e-9 {
                    v(format!("word `{}` lies outside the source duration", w.w));
                }
            }
            let mut sorted: Vec<&WordToken> = speech.words.iter().collect();
            sorted.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));
            for p in sorted.windows(2) {
                if p[1].onset_s < p[0].onset_s + p[0].dur_s {
                    v(format!("words `{}` and `{}` overlap", p[0].w, p[1].w));
                }
            }
        }
    }
    out
}
