//! Sound categories and matchable sound templates.
//!
//! The registry holds a four-rooted taxonomy (`Natural`, `HumanMade`,
//! `Mechanical`, `Miscellaneous`) plus spectral templates that the ear can
//! recognise. Classification is cosine similarity between filterbank energy
//! profiles, scaled down when the temporal envelope disagrees.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bands::log_spaced_centers;

/// Id of the reserved category every unmatched sound falls into.
pub const UNKNOWN_CATEGORY: &str = "Miscellaneous/Unknown";

/// Valid first path elements.
pub const ROOTS: [&str; 4] = ["Natural", "HumanMade", "Mechanical", "Miscellaneous"];

pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.75;
pub const ENVELOPE_MISMATCH_FACTOR: f64 = 0.8;

const SIGNATURE_TOLERANCE: f64 = 1e-6;
const TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub String);

impl CategoryId {
    pub fn unknown() -> Self {
        CategoryId(UNKNOWN_CATEGORY.to_string())
    }

    pub fn is_unknown(&self) -> bool {
        self.0 == UNKNOWN_CATEGORY
    }

    /// True when `self` equals `ancestor` or lies beneath it in the taxonomy.
    pub fn is_under(&self, ancestor: &str) -> bool {
        self.0 == ancestor
            || (self.0.starts_with(ancestor) && self.0.as_bytes().get(ancestor.len()) == Some(&b'/'))
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CategoryId {
    fn from(s: &str) -> Self {
        CategoryId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateId(pub String);

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TemplateId {
    fn from(s: &str) -> Self {
        TemplateId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Envelope {
    Impulsive,
    Sustained,
    Periodic,
    Repeating,
}

impl Envelope {
    /// Envelopes whose sound restarts after silence.
    pub fn recurs(self) -> bool {
        matches!(self, Envelope::Periodic | Envelope::Repeating)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundCategory {
    pub id: CategoryId,
    pub path: Vec<String>,
    #[serde(default)]
    pub feature_slots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundTemplate {
    pub id: TemplateId,
    pub category: CategoryId,
    pub spectral_signature: Vec<f64>,
    pub envelope: Envelope,
    pub nominal_level_db: f64,
    #[serde(default)]
    pub modifiers: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub category: CategoryId,
    /// Best-matching template, absent when the result is Unknown.
    pub template: Option<TemplateId>,
    pub confidence: f64,
}

impl Classification {
    pub fn unknown() -> Self {
        Classification {
            category: CategoryId::unknown(),
            template: None,
            confidence: 0.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OntologyError {
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("malformed signature: {0}")]
    MalformedSignature(String),
    #[error("duplicate id `{0}`")]
    Duplicate(String),
    #[error("invalid category path: {0}")]
    InvalidPath(String),
    #[error("the Unknown category is reserved and cannot be removed")]
    ReservedCategory,
    #[error("nominal level must be finite")]
    NonFiniteLevel,
    #[error("ontology document: {0}")]
    Document(String),
}

/// On-disk form of a registry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OntologyDocument {
    pub channels: usize,
    #[serde(default = "default_threshold")]
    pub match_threshold: f64,
    pub categories: Vec<SoundCategory>,
    #[serde(default)]
    pub templates: Vec<SoundTemplate>,
}

fn default_threshold() -> f64 {
    DEFAULT_MATCH_THRESHOLD
}

#[derive(Debug, Clone)]
pub struct OntologyRegistry {
    channels: usize,
    match_threshold: f64,
    categories: BTreeMap<CategoryId, SoundCategory>,
    templates: BTreeMap<TemplateId, SoundTemplate>,
    next_template: u64,
}

impl OntologyRegistry {
    /// Empty registry holding only the reserved Unknown category.
    pub fn new(channels: usize) -> Self {
        let mut categories = BTreeMap::new();
        categories.insert(
            CategoryId::unknown(),
            SoundCategory {
                id: CategoryId::unknown(),
                path: vec!["Miscellaneous".into(), "Unknown".into()],
                feature_slots: Vec::new(),
            },
        );
        OntologyRegistry {
            channels,
            match_threshold: DEFAULT_MATCH_THRESHOLD,
            categories,
            templates: BTreeMap::new(),
            next_template: 0,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn match_threshold(&self) -> f64 {
        self.match_threshold
    }

    pub fn set_match_threshold(&mut self, threshold: f64) {
        self.match_threshold = threshold;
    }

    pub fn contains(&self, id: &str) -> bool {
        self.categories.contains_key(&CategoryId(id.to_string()))
    }

    pub fn category(&self, id: &CategoryId) -> Option<&SoundCategory> {
        self.categories.get(id)
    }

    pub fn categories(&self) -> impl Iterator<Item = &SoundCategory> {
        self.categories.values()
    }

    pub fn template(&self, id: &TemplateId) -> Option<&SoundTemplate> {
        self.templates.get(id)
    }

    pub fn templates(&self) -> impl Iterator<Item = &SoundTemplate> {
        self.templates.values()
    }

    pub fn template_count(&self) -> usize {
        self.templates.len()
    }

    /// Adds a category given its taxonomy path. Its id is the path joined by `/`.
    pub fn register_category<S: AsRef<str>>(
        &mut self,
        path: &[S],
        feature_slots: &[S],
    ) -> Result<CategoryId, OntologyError> {
        let path: Vec<String> = path.iter().map(|s| s.as_ref().to_string()).collect();
        match path.first() {
            None => return Err(OntologyError::InvalidPath("empty path".into())),
            Some(root) if !ROOTS.contains(&root.as_str()) => {
                return Err(OntologyError::InvalidPath(format!("unknown root `{root}`")))
            }
            _ => {}
        }
        let id = CategoryId(path.join("/"));
        if self.categories.contains_key(&id) {
            return Err(OntologyError::Duplicate(id.0));
        }
        self.categories.insert(
            id.clone(),
            SoundCategory {
                id: id.clone(),
                path,
                feature_slots: feature_slots.iter().map(|s| s.as_ref().to_string()).collect(),
            },
        );
        Ok(id)
    }

    pub fn remove_category(&mut self, id: &CategoryId) -> Result<SoundCategory, OntologyError> {
        if id.is_unknown() {
            return Err(OntologyError::ReservedCategory);
        }
        let removed = self
            .categories
            .remove(id)
            .ok_or_else(|| OntologyError::UnknownCategory(id.0.clone()))?;
        self.templates.retain(|_, t| &t.category != id);
        Ok(removed)
    }

    /// Registers a template under a freshly generated id.
    pub fn register_template(
        &mut self,
        category: &CategoryId,
        signature: Vec<f64>,
        envelope: Envelope,
        nominal_level_db: f64,
        modifiers: BTreeMap<String, String>,
    ) -> Result<TemplateId, OntologyError> {
        let id = loop {
            self.next_template += 1;
            let candidate = TemplateId(format!("tpl-{:04}", self.next_template));
            if !self.templates.contains_key(&candidate) {
                break candidate;
            }
        };
        self.insert_template(SoundTemplate {
            id: id.clone(),
            category: category.clone(),
            spectral_signature: signature,
            envelope,
            nominal_level_db,
            modifiers,
        })?;
        Ok(id)
    }

    /// Registers a template whose id is chosen by the caller.
    pub fn insert_template(&mut self, template: SoundTemplate) -> Result<(), OntologyError> {
        if !self.categories.contains_key(&template.category) {
            return Err(OntologyError::UnknownCategory(template.category.0.clone()));
        }
        self.check_signature(&template.spectral_signature)?;
        if !template.nominal_level_db.is_finite() {
            return Err(OntologyError::NonFiniteLevel);
        }
        if self.templates.contains_key(&template.id) {
            return Err(OntologyError::Duplicate(template.id.0.clone()));
        }
        self.templates.insert(template.id.clone(), template);
        Ok(())
    }

    fn check_signature(&self, signature: &[f64]) -> Result<(), OntologyError> {
        if signature.len() != self.channels {
            return Err(OntologyError::MalformedSignature(format!(
                "expected {} channels, got {}",
                self.channels,
                signature.len()
            )));
        }
        if signature.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(OntologyError::MalformedSignature(
                "entries must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = signature.iter().sum();
        if (sum - 1.0).abs() > SIGNATURE_TOLERANCE {
            return Err(OntologyError::MalformedSignature(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    /// Scores `observed` against one template. `None` envelope means "not observed".
    pub fn score(&self, template: &SoundTemplate, observed: &[f64], envelope: Option<Envelope>) -> f64 {
        let sim = cosine_similarity(observed, &template.spectral_signature);
        match envelope {
            Some(e) if e != template.envelope => sim * ENVELOPE_MISMATCH_FACTOR,
            _ => sim,
        }
    }

    /// Best-matching category for an observed energy profile.
    ///
    /// Ties go to the lexicographically smallest template id. A best score
    /// below the match threshold yields Unknown with confidence 0.
    pub fn classify(&self, observed: &[f64], envelope: Option<Envelope>) -> Classification {
        if observed.len() != self.channels {
            return Classification::unknown();
        }
        let mut best: Option<(&SoundTemplate, f64)> = None;
        for template in self.templates.values() {
            let s = self.score(template, observed, envelope);
            match best {
                Some((_, b)) if s <= b + TIE_EPSILON => {}
                _ => best = Some((template, s)),
            }
        }
        match best {
            Some((t, s)) if s >= self.match_threshold => Classification {
                category: t.category.clone(),
                template: Some(t.id.clone()),
                confidence: s.clamp(0.0, 1.0),
            },
            _ => Classification::unknown(),
        }
    }

    pub fn to_document(&self) -> OntologyDocument {
        OntologyDocument {
            channels: self.channels,
            match_threshold: self.match_threshold,
            categories: self
                .categories
                .values()
                .filter(|c| !c.id.is_unknown())
                .cloned()
                .collect(),
            templates: self.templates.values().cloned().collect(),
        }
    }

    pub fn from_document(doc: OntologyDocument) -> Result<Self, OntologyError> {
        let mut reg = OntologyRegistry::new(doc.channels);
        reg.match_threshold = doc.match_threshold;
        for c in doc.categories {
            if c.id.is_unknown() {
                continue;
            }
            let id = reg.register_category(&c.path, &c.feature_slots)?;
            if id != c.id {
                return Err(OntologyError::Document(format!(
                    "category id `{}` does not match its path `{}`",
                    c.id, id
                )));
            }
        }
        for t in doc.templates {
            reg.insert_template(t)?;
        }
        Ok(reg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("ontology serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, OntologyError> {
        let doc: OntologyDocument =
            serde_json::from_str(text).map_err(|e| OntologyError::Document(e.to_string()))?;
        Self::from_document(doc)
    }

    /// Copy of this registry restricted to templates accepted by `keep`.
    pub fn filtered(&self, keep: impl Fn(&SoundTemplate) -> bool) -> Self {
        let mut reg = self.clone();
        reg.templates.retain(|_, t| keep(t));
        reg
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Scales a non-negative profile to unit sum. All-zero input stays zero.
pub fn normalize(profile: &[f64]) -> Vec<f64> {
    let sum: f64 = profile.iter().sum();
    if sum > 0.0 {
        profile.iter().map(|v| v / sum).collect()
    } else {
        vec![0.0; profile.len()]
    }
}

/// One spectral peak: Gaussian in log-frequency.
#[derive(Debug, Clone, Copy)]
pub struct Peak {
    pub center_hz: f64,
    /// Standard deviation in natural-log frequency units.
    pub width: f64,
    pub weight: f64,
}

/// Evaluates a sum of log-frequency Gaussians at the given centres, normalised to unit sum.
pub fn signature_from_peaks(peaks: &[Peak], centers: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = centers
        .iter()
        .map(|f| {
            peaks
                .iter()
                .map(|p| {
                    let d = (f / p.center_hz).ln() / p.width;
                    p.weight * (-0.5 * d * d).exp()
                })
                .sum()
        })
        .collect();
    normalize(&raw)
}

struct BuiltinCategory {
    path: &'static [&'static str],
    slots: &'static [&'static str],
}

const fn cat(path: &'static [&'static str], slots: &'static [&'static str]) -> BuiltinCategory {
    BuiltinCategory { path, slots }
}

const BUILTIN_CATEGORIES: &[BuiltinCategory] = &[
    cat(&["Natural"], &[]),
    cat(&["Natural", "Mammals"], &[]),
    cat(&["Natural", "Mammals", "Dog"], &["type of sound (bark, growl)"]),
    cat(&["Natural", "Mammals", "Horse"], &[]),
    cat(&["Natural", "Birds"], &["type", "action (flapping wings, call)"]),
    cat(&["Natural", "Insects"], &["type"]),
    cat(&["Natural", "LeavesWind"], &[]),
    cat(&["Natural", "FluidSounds"], &["type (dripping, droplets, flushing)"]),
    cat(&["Natural", "Water"], &[]),
    cat(&["Natural", "Fire"], &["snow, rain, thunder"]),
    cat(&["Natural", "Rocks"], &[]),
    cat(&["HumanMade"], &[]),
    cat(
        &["HumanMade", "Speech"],
        &["speaker", "volume", "gender", "emotional tone", "words"],
    ),
    cat(&["HumanMade", "Singing"], &[]),
    cat(&["HumanMade", "Whistling"], &[]),
    cat(&["HumanMade", "RetchingSpitting"], &[]),
    cat(&["HumanMade", "Vocalizations"], &["type (gasping, yelling, whimpering, moaning)"]),
    cat(
        &["HumanMade", "Breathing"],
        &["type (breathing, blowing nose, sneezing, coughing)"],
    ),
    cat(&["HumanMade", "Footsteps"], &["terrain"]),
    cat(&["HumanMade", "GettingHit"], &["implement"]),
    cat(&["HumanMade", "Heartbeat"], &[]),
    cat(&["Mechanical"], &[]),
    cat(&["Mechanical", "Alarms"], &[]),
    cat(&["Mechanical", "Tapping"], &["pace", "material tapped"]),
    cat(&["Mechanical", "Clicks"], &["type (click, dong, ding)"]),
    cat(&["Mechanical", "Creaking"], &["source (chair, fence)"]),
    cat(&["Mechanical", "Dragging"], &[]),
    cat(
        &["Mechanical", "Gunfire"],
        &["distance", "caliber", "rate of fire", "direction"],
    ),
    cat(&["Mechanical", "Grenade"], &[]),
    cat(&["Mechanical", "GearRustling"], &[]),
    cat(&["Mechanical", "MagazineChanges"], &[]),
    cat(
        &["Mechanical", "Vehicles"],
        &["speed", "direction", "distance", "horn", "type of vehicle"],
    ),
    cat(&["Mechanical", "Explosions"], &["size", "distance", "direction"]),
    cat(&["Miscellaneous"], &[]),
    cat(&["Miscellaneous", "Sha"], &[]),
    cat(&["Miscellaneous", "Music"], &["standard musical features"]),
];

struct BuiltinTemplate {
    id: &'static str,
    category: &'static str,
    envelope: Envelope,
    level: f64,
    modifiers: &'static [(&'static str, &'static str)],
    /// (centre, width, weight) with centre and width in default-bank channel units.
    peaks: &'static [(f64, f64, f64)],
}

const PROGRAMMED_TEMPLATES: &[BuiltinTemplate] = &[
    BuiltinTemplate {
        id: "dog_bark",
        category: "Natural/Mammals/Dog",
        envelope: Envelope::Impulsive,
        level: 85.0,
        modifiers: &[("type of sound (bark, growl)", "bark")],
        peaks: &[(13.0, 1.5, 1.0), (20.0, 1.5, 0.4)],
    },
    BuiltinTemplate {
        id: "dog_growl",
        category: "Natural/Mammals/Dog",
        envelope: Envelope::Sustained,
        level: 70.0,
        modifiers: &[("type of sound (bark, growl)", "growl")],
        peaks: &[(7.0, 1.5, 1.0)],
    },
    BuiltinTemplate {
        id: "horse_neigh",
        category: "Natural/Mammals/Horse",
        envelope: Envelope::Sustained,
        level: 85.0,
        modifiers: &[],
        peaks: &[(15.0, 2.0, 1.0), (24.0, 1.5, 0.3)],
    },
    BuiltinTemplate {
        id: "bird_call",
        category: "Natural/Birds",
        envelope: Envelope::Periodic,
        level: 70.0,
        modifiers: &[("action (flapping wings, call)", "call")],
        peaks: &[(27.0, 1.2, 1.0)],
    },
    BuiltinTemplate {
        id: "wind_leaves",
        category: "Natural/LeavesWind",
        envelope: Envelope::Sustained,
        level: 55.0,
        modifiers: &[],
        peaks: &[(20.0, 4.0, 1.0)],
    },
    BuiltinTemplate {
        id: "dripping",
        category: "Natural/FluidSounds",
        envelope: Envelope::Repeating,
        level: 50.0,
        modifiers: &[("type (dripping, droplets, flushing)", "dripping")],
        peaks: &[(24.0, 1.2, 1.0), (11.0, 1.2, 0.5)],
    },
    BuiltinTemplate {
        id: "footsteps_grass",
        category: "HumanMade/Footsteps",
        envelope: Envelope::Repeating,
        level: 60.0,
        modifiers: &[("terrain", "grass")],
        peaks: &[(10.0, 2.0, 1.0), (22.0, 2.0, 0.5)],
    },
    BuiltinTemplate {
        id: "speech_female",
        category: "HumanMade/Speech",
        envelope: Envelope::Sustained,
        level: 60.0,
        modifiers: &[],
        peaks: &[(18.0, 1.8, 1.0)],
    },
    BuiltinTemplate {
        id: "speech_male",
        category: "HumanMade/Speech",
        envelope: Envelope::Sustained,
        level: 60.0,
        modifiers: &[],
        peaks: &[(9.0, 1.8, 1.0)],
    },
    BuiltinTemplate {
        id: "pump_alarm",
        category: "Mechanical/Alarms",
        envelope: Envelope::Periodic,
        level: 90.0,
        modifiers: &[],
        peaks: &[(22.0, 1.2, 1.0)],
    },
    BuiltinTemplate {
        id: "fire_alarm",
        category: "Mechanical/Alarms",
        envelope: Envelope::Periodic,
        level: 95.0,
        modifiers: &[],
        peaks: &[(25.0, 1.0, 1.0), (16.0, 1.0, 0.5)],
    },
    BuiltinTemplate {
        id: "pressure_alarm",
        category: "Mechanical/Alarms",
        envelope: Envelope::Periodic,
        level: 90.0,
        modifiers: &[],
        peaks: &[(19.0, 1.0, 1.0), (29.0, 1.0, 0.6)],
    },
    BuiltinTemplate {
        id: "o2_alarm",
        category: "Mechanical/Alarms",
        envelope: Envelope::Periodic,
        level: 90.0,
        modifiers: &[],
        peaks: &[(14.0, 1.0, 1.0), (26.0, 1.0, 0.6)],
    },
    BuiltinTemplate {
        id: "bilge_alarm",
        category: "Mechanical/Alarms",
        envelope: Envelope::Periodic,
        level: 90.0,
        modifiers: &[],
        peaks: &[(17.0, 1.0, 1.0), (5.0, 1.0, 0.6)],
    },
    BuiltinTemplate {
        id: "gunfire_rifle",
        category: "Mechanical/Gunfire",
        envelope: Envelope::Impulsive,
        level: 140.0,
        modifiers: &[("caliber", "5.56 mm")],
        peaks: &[(12.0, 3.0, 1.0)],
    },
    BuiltinTemplate {
        id: "truck",
        category: "Mechanical/Vehicles",
        envelope: Envelope::Sustained,
        level: 90.0,
        modifiers: &[("type of vehicle", "truck")],
        peaks: &[(4.0, 2.5, 1.0)],
    },
    BuiltinTemplate {
        id: "vehicle_horn",
        category: "Mechanical/Vehicles",
        envelope: Envelope::Sustained,
        level: 100.0,
        modifiers: &[("horn", "yes")],
        // centred on 1 kHz
        peaks: &[(16.2917, 1.5, 1.0)],
    },
    BuiltinTemplate {
        id: "music",
        category: "Miscellaneous/Music",
        envelope: Envelope::Sustained,
        level: 70.0,
        modifiers: &[],
        peaks: &[
            (10.0, 1.5, 1.0),
            (16.0, 1.5, 0.8),
            (22.0, 1.5, 0.6),
        ],
    },
    BuiltinTemplate {
        id: "heartbeat",
        category: "HumanMade/Heartbeat",
        envelope: Envelope::Periodic,
        level: 40.0,
        modifiers: &[],
        peaks: &[(1.0, 1.5, 1.0)],
    },
];

/// Sounds that exist in the world but that the ear has not been programmed with.
const UNPROGRAMMED_TEMPLATES: &[BuiltinTemplate] = &[BuiltinTemplate {
    id: "novel_alarm",
    category: "Mechanical/Alarms",
    envelope: Envelope::Periodic,
    level: 90.0,
    modifiers: &[],
    peaks: &[(30.0, 0.8, 1.0), (21.0, 0.8, 0.7)],
}];

/// Converts default-bank channel units (32 channels, 100 Hz to 8 kHz) to Hz-based peaks.
fn resolve_peaks(peaks: &[(f64, f64, f64)]) -> Vec<Peak> {
    let step = 80f64.ln() / 31.0;
    peaks
        .iter()
        .map(|&(channel, width, weight)| Peak {
            center_hz: 100.0 * (step * channel).exp(),
            width: width * step,
            weight,
        })
        .collect()
}

fn add_builtin_templates(reg: &mut OntologyRegistry, set: &[BuiltinTemplate], centers: &[f64]) {
    for t in set {
        let template = SoundTemplate {
            id: TemplateId(t.id.to_string()),
            category: CategoryId(t.category.to_string()),
            spectral_signature: signature_from_peaks(&resolve_peaks(t.peaks), centers),
            envelope: t.envelope,
            nominal_level_db: t.level,
            modifiers: t
                .modifiers
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        };
        reg.insert_template(template).expect("builtin template is valid");
    }
}

/// Built-in taxonomy and programmed templates for a filterbank with the given centres.
pub fn builtin_ontology(centers: &[f64]) -> OntologyRegistry {
    let mut reg = OntologyRegistry::new(centers.len());
    for c in BUILTIN_CATEGORIES {
        reg.register_category(c.path, c.slots)
            .expect("builtin category is valid");
    }
    add_builtin_templates(&mut reg, PROGRAMMED_TEMPLATES, centers);
    reg
}

/// Built-in ontology on the default 32-channel bank.
pub fn load_builtin_ontology() -> OntologyRegistry {
    builtin_ontology(&log_spaced_centers(32, 100.0, 8000.0))
}

/// Everything that can sound in a scene: the programmed templates plus sounds
/// the ear does not know about.
pub fn world_library(centers: &[f64]) -> OntologyRegistry {
    let mut reg = builtin_ontology(centers);
    add_builtin_templates(&mut reg, UNPROGRAMMED_TEMPLATES, centers);
    reg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn narrow(channels: usize, center: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..channels)
            .map(|i| {
                let d = i as f64 - center as f64;
                (-0.5 * d * d / 1.5f64.powi(2)).exp()
            })
            .collect();
        normalize(&raw)
    }

    #[test]
    fn builtin_has_dog_with_sound_type_slot() {
        let reg = load_builtin_ontology();
        let dog = reg.category(&"Natural/Mammals/Dog".into()).unwrap();
        assert_eq!(dog.path, ["Natural", "Mammals", "Dog"]);
        assert!(dog.feature_slots.iter().any(|s| s == "type of sound (bark, growl)"));
    }

    #[test]
    fn builtin_gunfire_slots() {
        let reg = load_builtin_ontology();
        let g = reg.category(&"Mechanical/Gunfire".into()).unwrap();
        assert_eq!(g.feature_slots, ["distance", "caliber", "rate of fire", "direction"]);
    }

    #[test]
    fn builtin_covers_appendix_rows() {
        let reg = load_builtin_ontology();
        for id in [
            "Natural/Mammals/Horse",
            "Natural/Birds",
            "Natural/Insects",
            "Natural/LeavesWind",
            "Natural/FluidSounds",
            "Natural/Water",
            "Natural/Fire",
            "Natural/Rocks",
            "HumanMade/Speech",
            "HumanMade/Singing",
            "HumanMade/Whistling",
            "HumanMade/Breathing",
            "HumanMade/Footsteps",
            "HumanMade/GettingHit",
            "HumanMade/Heartbeat",
            "Mechanical/Alarms",
            "Mechanical/Tapping",
            "Mechanical/Clicks",
            "Mechanical/Creaking",
            "Mechanical/Dragging",
            "Mechanical/Grenade",
            "Mechanical/GearRustling",
            "Mechanical/MagazineChanges",
            "Mechanical/Vehicles",
            "Mechanical/Explosions",
            "Miscellaneous/Music",
            "Miscellaneous/Sha",
        ] {
            assert!(reg.contains(id), "missing {id}");
        }
        assert!(reg.contains(UNKNOWN_CATEGORY));
        assert!(reg.categories().all(|c| ROOTS.contains(&c.path[0].as_str())));
    }

    #[test]
    fn unknown_is_not_removable() {
        let mut reg = load_builtin_ontology();
        assert_eq!(
            reg.remove_category(&CategoryId::unknown()),
            Err(OntologyError::ReservedCategory)
        );
        assert!(reg.contains(UNKNOWN_CATEGORY));
    }

    #[test]
    fn register_round_trip() {
        let mut reg = load_builtin_ontology();
        let before = reg.template_count();
        let sig = narrow(32, 12);
        let mods: BTreeMap<_, _> = [("type".to_string(), "bark".to_string())].into();
        let id = reg
            .register_template(&"Natural/Mammals/Dog".into(), sig.clone(), Envelope::Impulsive, 80.0, mods.clone())
            .unwrap();
        assert_eq!(reg.template_count(), before + 1);
        let t = reg.template(&id).unwrap();
        assert_eq!(t.spectral_signature, sig);
        assert_eq!(t.envelope, Envelope::Impulsive);
        assert_eq!(t.nominal_level_db, 80.0);
        assert_eq!(t.modifiers, mods);
    }

    #[test]
    fn register_rejects_unknown_category() {
        let mut reg = load_builtin_ontology();
        let err = reg
            .register_template(&"Natural/Dragons".into(), narrow(32, 3), Envelope::Sustained, 80.0, BTreeMap::new())
            .unwrap_err();
        assert!(matches!(err, OntologyError::UnknownCategory(_)));
    }

    #[test]
    fn register_rejects_unnormalized_or_wrong_length() {
        let mut reg = load_builtin_ontology();
        let half: Vec<f64> = narrow(32, 5).iter().map(|v| v * 0.5).collect();
        let err = reg
            .register_template(&"Natural/Mammals/Dog".into(), half, Envelope::Impulsive, 80.0, BTreeMap::new())
            .unwrap_err();
        assert!(matches!(err, OntologyError::MalformedSignature(_)));
        let err = reg
            .register_template(&"Natural/Mammals/Dog".into(), narrow(16, 5), Envelope::Impulsive, 80.0, BTreeMap::new())
            .unwrap_err();
        assert!(matches!(err, OntologyError::MalformedSignature(_)));
    }

    #[test]
    fn builtin_templates_self_match() {
        let reg = load_builtin_ontology();
        for t in reg.templates() {
            let c = reg.classify(&t.spectral_signature, Some(t.envelope));
            assert_eq!(c.category, t.category, "{}", t.id);
            assert_eq!(c.template.as_ref(), Some(&t.id));
            assert!(c.confidence >= 0.99);
        }
    }

    fn brute_force_cosine(a: &[f64], b: &[f64]) -> f64 {
        let mut dot = 0.0;
        let mut aa = 0.0;
        let mut bb = 0.0;
        for i in 0..a.len() {
            dot += a[i] * b[i];
            aa += a[i] * a[i];
            bb += b[i] * b[i];
        }
        dot / (aa.sqrt() * bb.sqrt())
    }

    #[test]
    fn white_noise_is_unknown() {
        let reg = load_builtin_ontology();
        let flat = vec![1.0 / 32.0; 32];
        for t in reg.templates() {
            let s = brute_force_cosine(&flat, &t.spectral_signature);
            assert!(s < DEFAULT_MATCH_THRESHOLD, "{} scores {s}", t.id);
        }
        let c = reg.classify(&flat, None);
        assert!(c.category.is_unknown());
        assert_eq!(c.confidence, 0.0);
    }

    fn disjoint_pair() -> (OntologyRegistry, Vec<f64>, Vec<f64>) {
        let band = |center: usize| -> Vec<f64> {
            let mut v = vec![0.0; 32];
            for (i, w) in [(center - 1, 1.0), (center, 2.0), (center + 1, 1.0)] {
                v[i] = w / 4.0;
            }
            v
        };
        let mut reg = OntologyRegistry::new(32);
        reg.register_category(&["Natural", "Birds"], &[]).unwrap();
        reg.register_category(&["Mechanical", "Clicks"], &[]).unwrap();
        let a = band(5);
        let b = band(25);
        for (id, cat, sig) in [("a_low", "Natural/Birds", &a), ("b_high", "Mechanical/Clicks", &b)] {
            reg.insert_template(SoundTemplate {
                id: id.into(),
                category: cat.into(),
                spectral_signature: sig.clone(),
                envelope: Envelope::Sustained,
                nominal_level_db: 70.0,
                modifiers: BTreeMap::new(),
            })
            .unwrap();
        }
        (reg, a, b)
    }

    #[test]
    fn disjoint_mixture_ties_to_smallest_id_below_self_match() {
        let (mut reg, a, b) = disjoint_pair();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * x + 0.5 * y).collect();
        let sa = brute_force_cosine(&mix, &a);
        let sb = brute_force_cosine(&mix, &b);
        // equal-norm disjoint halves score 1/sqrt(2) against each template
        assert!((sa - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((sa - sb).abs() < 1e-12);

        // below the default threshold the mixture is not recognised at all
        assert!(reg.classify(&mix, None).category.is_unknown());

        reg.set_match_threshold(0.7);
        let c = reg.classify(&mix, None);
        assert_eq!(c.template, Some(TemplateId::from("a_low")));
        assert_eq!(c.category, CategoryId::from("Natural/Birds"));
        let self_match = reg.classify(&a, None).confidence;
        assert!(c.confidence < self_match);
        assert!((c.confidence - sa).abs() < 1e-12);
    }

    #[test]
    fn empty_registry_always_unknown() {
        let reg = OntologyRegistry::new(32);
        let c = reg.classify(&narrow(32, 10), None);
        assert!(c.category.is_unknown());
        assert_eq!(c.confidence, 0.0);
    }

    #[test]
    fn wrong_length_observation_is_unknown() {
        let reg = load_builtin_ontology();
        assert!(reg.classify(&[0.5, 0.5], None).category.is_unknown());
    }

    #[test]
    fn envelope_mismatch_scales_score() {
        let reg = load_builtin_ontology();
        let t = reg.template(&"speech_male".into()).unwrap();
        let matched = reg.score(t, &t.spectral_signature, Some(Envelope::Sustained));
        let mismatched = reg.score(t, &t.spectral_signature, Some(Envelope::Impulsive));
        assert!((mismatched - ENVELOPE_MISMATCH_FACTOR * matched).abs() < 1e-12);
    }

    #[test]
    fn novel_alarm_is_outside_the_programmed_set() {
        let centers = log_spaced_centers(32, 100.0, 8000.0);
        let world = world_library(&centers);
        let ear = builtin_ontology(&centers);
        let novel = world.template(&"novel_alarm".into()).unwrap();
        assert!(ear.template(&novel.id).is_none());
        assert!(ear.classify(&novel.spectral_signature, None).category.is_unknown());
    }

    #[test]
    fn document_round_trip() {
        let reg = load_builtin_ontology();
        let back = OntologyRegistry::from_json(&reg.to_json()).unwrap();
        assert_eq!(back.to_document().categories, reg.to_document().categories);
        assert_eq!(back.to_document().templates, reg.to_document().templates);
    }

    #[test]
    fn is_under_respects_segment_boundaries() {
        let dog = CategoryId::from("Natural/Mammals/Dog");
        assert!(dog.is_under("Natural"));
        assert!(dog.is_under("Natural/Mammals"));
        assert!(dog.is_under("Natural/Mammals/Dog"));
        assert!(!dog.is_under("Natural/Mam"));
    }
}
