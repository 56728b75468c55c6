use std::collections::BTreeSet;

use crate::attention::{CategoryReport, HeardObject, Novelty, SpeechReport, WordMatch};
use crate::bands::shift_profile;
use crate::frontend::EarConfig;
use crate::localization::{
    distance_estimate, mirror_front_back, resolve_front_back, FrontBack, LocalizationConfig,
};
use crate::ontology::{Classification, OntologyRegistry};

use super::{SegregationConfig, StreamTrack};

/// Which word templates a stream may match this frame.
#[derive(Debug, Clone, Copy)]
pub struct WordGate<'a> {
    /// The stream holds the listener's focus.
    pub focused: bool,
    /// The stream is loud enough against its competitors to be understood.
    pub intelligible: bool,
    /// Every loaded word (lower-case), permanent or not.
    pub loaded: &'a BTreeSet<String>,
    /// Permanent words (lower-case); these get through even unattended.
    pub permanent: &'a BTreeSet<String>,
}

impl WordGate<'_> {
    pub fn admits(&self, word: &str) -> bool {
        let w = word.to_lowercase();
        self.permanent.contains(&w) || (self.focused && self.intelligible && self.loaded.contains(&w))
    }
}

/// Listening conditions needed to turn a track into a report.
#[derive(Debug, Clone, Copy)]
pub struct ListeningContext<'a> {
    pub ear: &'a EarConfig,
    pub localization: &'a LocalizationConfig,
    pub background_db: f64,
}

/// Classifies a profile, searching small spectral shifts to undo Doppler.
///
/// Returns the classification and the shift (channels, observed relative to
/// template) that produced it. Equal scores prefer the smallest shift.
pub fn classify_with_doppler(
    registry: &OntologyRegistry,
    profile: &[f64],
    config: &SegregationConfig,
) -> (Classification, f64) {
    let steps = if config.doppler_scan_step > 0.0 {
        (config.doppler_scan_channels / config.doppler_scan_step).round() as i64
    } else {
        0
    };
    let mut best = (registry.classify(profile, None), 0.0);
    for i in 1..=steps {
        for s in [i as f64 * config.doppler_scan_step, -(i as f64) * config.doppler_scan_step] {
            let c = registry.classify(&shift_profile(profile, -s), None);
            if c.confidence > best.0.confidence + 1e-9 {
                best = (c, s);
            }
        }
    }
    if best.0.category.is_unknown() {
        best.1 = 0.0;
    }
    best
}

/// Builds the heard-object report for a live track.
pub fn identify_stream(
    track: &StreamTrack,
    registry: &OntologyRegistry,
    words: &WordGate,
    context: &ListeningContext,
) -> HeardObject {
    let history: Vec<(f64, f64)> = track
        .azimuth_track
        .iter()
        .map(|p| (p.heading_deg, p.estimate.azimuth_deg))
        .collect();
    let resolution = resolve_front_back(&history, context.localization.min_turn_deg);
    let (mut azimuth, sigma, heading) = match track.azimuth_track.back() {
        Some(p) => (p.estimate.azimuth_deg, p.estimate.azimuth_sigma_deg, p.heading_deg),
        None => (track.cluster_azimuth_deg, context.localization.sigma_side_deg, 0.0),
    };
    if resolution.verdict == FrontBack::Rear {
        azimuth = mirror_front_back(azimuth);
    }

    let template = track.category.template.as_ref().and_then(|id| registry.template(id));
    let emphasis = if azimuth.abs() <= context.ear.front_sector_deg {
        context.ear.front_emphasis_db
    } else {
        0.0
    };
    let observed_level = track.loudness_db + context.background_db - emphasis;
    let (distance_m, _) = distance_estimate(observed_level, template.map(|t| t.nominal_level_db));

    let speech = track.speaker.as_ref().map(|(speaker_id, sex)| SpeechReport {
        speaker_id: speaker_id.clone(),
        sex: *sex,
        words: track
            .pending_words
            .iter()
            .filter(|(w, _)| words.admits(w))
            .map(|(w, t)| WordMatch { w: w.clone(), t: *t })
            .collect(),
    });

    let unknown = track.category.category.is_unknown() || track.category.confidence < registry.match_threshold();
    HeardObject {
        id: format!("h{}", track.number),
        stream_id: track.stream_id.clone(),
        category: CategoryReport {
            id: track.category.category.clone(),
            confidence: track.category.confidence,
        },
        template: track.category.template.clone(),
        azimuth_deg: azimuth,
        azimuth_sigma_deg: sigma,
        heading_deg: heading,
        front_back_resolved: resolution.resolved(),
        distance_m,
        onset_s: track.occurrence_start,
        duration_s: track.last_update - track.occurrence_start,
        repetition: track.repetition_seen,
        loudness_db: track.loudness_db,
        centroid_hz: track.spectral_centroid,
        doppler_ratio: track.doppler_ratio,
        speech,
        modifiers: template.map(|t| t.modifiers.clone()).unwrap_or_default(),
        novelty: if unknown { Novelty::NewType } else { Novelty::KnownType },
        consolidation_count: 1,
        station_tag: track.station_tag.clone(),
        is_alarm_like: track.is_alarm_like,
    }
}
