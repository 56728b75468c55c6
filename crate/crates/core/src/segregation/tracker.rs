use std::collections::VecDeque;

use crate::bands::{geometric_centroid, shift_profile};
use crate::frontend::power_to_db;
use crate::localization::{fold_signed, mirror_front_back, LocalizationEstimate};
use crate::ontology::{cosine_similarity, normalize, Classification, OntologyRegistry};
use crate::scene::{wrap_deg, Sex};

use super::identify::classify_with_doppler;
use super::{Cluster, Segregation, SegregationConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackPoint {
    pub t: f64,
    pub heading_deg: f64,
    pub estimate: LocalizationEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamTrack {
    pub stream_id: String,
    /// Sequence number behind `stream_id`; also names the stream's heard object.
    pub number: u64,
    pub birth: f64,
    pub last_update: f64,
    /// Start of the current occurrence (a track may sound several times).
    pub occurrence_start: f64,
    pub occurrence: u32,
    pub azimuth_track: VecDeque<TrackPoint>,
    /// Latest front-folded relative azimuth of the matched cluster.
    pub cluster_azimuth_deg: f64,
    pub world_front_deg: f64,
    pub world_rear_deg: f64,
    pub itd_s: f64,
    pub spectral_centroid: f64,
    pub birth_centroid: f64,
    pub signature_estimate: Vec<f64>,
    pub latest_profile: Vec<f64>,
    /// dB above background.
    pub loudness_db: f64,
    pub doppler_ratio: f64,
    /// Best Doppler-correcting shift (channels) found while classifying.
    pub doppler_shift: f64,
    pub category: Classification,
    pub speech_matches: Vec<(String, f64)>,
    pub repetition_seen: bool,
    pub is_alarm_like: bool,
    pub station_tag: Option<String>,
    /// Speaker identity carried by the source's speech payload.
    pub speaker: Option<(String, Sex)>,
    /// Word tokens that arrived with this update, before any gating.
    pub pending_words: Vec<(String, f64)>,
    pub updates: u64,
    pub closed_at: Option<f64>,
}

impl StreamTrack {
    fn predicted_distance(&self, cluster_azimuth: f64, heading: f64) -> f64 {
        let front = fold_signed(self.world_front_deg - heading);
        let rear = fold_signed(self.world_rear_deg - heading);
        wrap_deg(cluster_azimuth - front)
            .abs()
            .min(wrap_deg(cluster_azimuth - rear).abs())
    }

    fn signature_distance(&self, cluster: &Cluster) -> f64 {
        1.0 - cosine_similarity(&self.signature_estimate, &normalize(&cluster.profile))
    }

    pub fn latest_estimate(&self) -> Option<&LocalizationEstimate> {
        self.azimuth_track.back().map(|p| &p.estimate)
    }

    pub fn is_alive(&self) -> bool {
        self.closed_at.is_none()
    }
}

/// Stream bookkeeping across frames. Owned by a single engine timeline.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub config: SegregationConfig,
    centers: Vec<f64>,
    next_number: u64,
    pub live: Vec<StreamTrack>,
    /// Recently closed tracks, kept for revival.
    pub closed: Vec<StreamTrack>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackUpdate {
    /// (cluster label, stream id) for every cluster placed on a track this frame.
    pub assignments: Vec<(usize, String)>,
    pub born: Vec<String>,
    pub revived: Vec<String>,
    /// Streams that started a new occurrence this frame (births included).
    pub new_occurrence: Vec<String>,
    pub ended: Vec<StreamTrack>,
}

impl Tracker {
    pub fn new(config: SegregationConfig, centers: Vec<f64>) -> Self {
        Tracker {
            config,
            centers,
            next_number: 1,
            live: Vec::new(),
            closed: Vec::new(),
        }
    }

    pub fn get(&self, stream_id: &str) -> Option<&StreamTrack> {
        self.live.iter().find(|t| t.stream_id == stream_id)
    }

    pub fn get_mut(&mut self, stream_id: &str) -> Option<&mut StreamTrack> {
        self.live.iter_mut().find(|t| t.stream_id == stream_id)
    }

    pub fn is_live(&self, stream_id: &str) -> bool {
        self.get(stream_id).is_some()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    fn birth(&mut self, cluster: &Cluster, t: f64, heading: f64, background_db: f64) -> StreamTrack {
        let number = self.next_number;
        self.next_number += 1;
        let centroid = geometric_centroid(&cluster.profile, &self.centers).unwrap_or(0.0);
        StreamTrack {
            stream_id: format!("s{number}"),
            number,
            birth: t,
            last_update: t,
            occurrence_start: t,
            occurrence: 1,
            azimuth_track: VecDeque::new(),
            cluster_azimuth_deg: cluster.azimuth_deg,
            world_front_deg: wrap_deg(heading + cluster.azimuth_deg),
            world_rear_deg: wrap_deg(heading + mirror_front_back(cluster.azimuth_deg)),
            itd_s: cluster.itd_s,
            spectral_centroid: centroid,
            birth_centroid: centroid,
            signature_estimate: normalize(&cluster.profile),
            latest_profile: cluster.profile.clone(),
            loudness_db: power_to_db(cluster.latest_power()) - background_db,
            doppler_ratio: 1.0,
            doppler_shift: 0.0,
            category: Classification::unknown(),
            speech_matches: Vec::new(),
            repetition_seen: false,
            is_alarm_like: false,
            station_tag: None,
            speaker: None,
            pending_words: Vec::new(),
            updates: 0,
            closed_at: None,
        }
    }
}

fn update_track(
    track: &mut StreamTrack,
    cluster: &Cluster,
    t: f64,
    heading: f64,
    background_db: f64,
    registry: &OntologyRegistry,
    config: &SegregationConfig,
    centers: &[f64],
) -> bool {
    let new_occurrence = track.updates > 0 && t - track.last_update > config.occurrence_gap_s;
    if new_occurrence {
        track.occurrence += 1;
        track.occurrence_start = t;
        track.repetition_seen = true;
    }
    track.last_update = t;
    track.updates += 1;
    track.cluster_azimuth_deg = cluster.azimuth_deg;
    track.world_front_deg = wrap_deg(heading + cluster.azimuth_deg);
    track.world_rear_deg = wrap_deg(heading + mirror_front_back(cluster.azimuth_deg));
    track.itd_s = cluster.itd_s;
    track.latest_profile = cluster.profile.clone();
    track.loudness_db = power_to_db(cluster.latest_power()) - background_db;
    let fresh = normalize(&cluster.profile);
    let a = if track.updates == 1 { 1.0 } else { config.signature_smoothing };
    track.signature_estimate = track
        .signature_estimate
        .iter()
        .zip(&fresh)
        .map(|(old, new)| (1.0 - a) * old + a * new)
        .collect();
    if let Some(c) = geometric_centroid(&cluster.profile, centers) {
        track.spectral_centroid = c;
    }
    let due = track.updates <= 5 || track.updates.is_multiple_of(config.reclassify_every.max(1)) || new_occurrence;
    if due {
        let (class, shift) = classify_with_doppler(registry, &track.signature_estimate, config);
        track.category = class;
        track.doppler_shift = shift;
        if track.category.category.is_under("Mechanical/Alarms") {
            track.is_alarm_like = true;
        }
    }
    track.doppler_ratio = estimate_doppler(track, registry, centers);
    new_occurrence
}

/// Places this frame's clusters on tracks: continues, revives or births streams,
/// and closes tracks that have been silent longer than the expiry window.
pub fn track_streams(
    tracker: &mut Tracker,
    segregation: &Segregation,
    t: f64,
    head_heading_deg: f64,
    background_db: f64,
    registry: &OntologyRegistry,
) -> TrackUpdate {
    let config = tracker.config.clone();
    let mut update = TrackUpdate::default();

    let (expired, live): (Vec<_>, Vec<_>) = std::mem::take(&mut tracker.live)
        .into_iter()
        .partition(|tr| t - tr.last_update > config.expiry_s);
    tracker.live = live;
    for mut tr in expired {
        tr.closed_at = Some(t);
        update.ended.push(tr.clone());
        tracker.closed.push(tr);
    }
    tracker.closed.retain(|tr| t - tr.last_update <= config.revival_s);

    let clusters: Vec<&Cluster> = segregation.current().collect();
    let gate = |tr: &StreamTrack, c: &Cluster| -> Option<f64> {
        let d_az = tr.predicted_distance(c.azimuth_deg, head_heading_deg);
        let d_sig = tr.signature_distance(c);
        let sig_gate = config.gate_cosine + config.gate_doppler_widening * tr.doppler_ratio.ln().abs();
        (d_az <= config.gate_azimuth_deg && d_sig <= sig_gate)
            .then(|| d_az / config.gate_azimuth_deg + d_sig / sig_gate)
    };

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ci, c) in clusters.iter().enumerate() {
        for (ti, tr) in tracker.live.iter().enumerate() {
            if let Some(cost) = gate(tr, c) {
                pairs.push((cost, ci, ti));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut cluster_done = vec![false; clusters.len()];
    let mut track_done = vec![false; tracker.live.len()];
    let centers = tracker.centers.clone();
    for (_, ci, ti) in pairs {
        if cluster_done[ci] || track_done[ti] {
            continue;
        }
        cluster_done[ci] = true;
        track_done[ti] = true;
        let tr = &mut tracker.live[ti];
        if update_track(tr, clusters[ci], t, head_heading_deg, background_db, registry, &config, &centers) {
            update.new_occurrence.push(tr.stream_id.clone());
        }
        update.assignments.push((clusters[ci].label, tr.stream_id.clone()));
    }

    for (ci, c) in clusters.iter().enumerate() {
        if cluster_done[ci] {
            continue;
        }
        let revival = tracker
            .closed
            .iter()
            .enumerate()
            .filter(|(_, tr)| {
                tr.category
                    .template
                    .as_ref()
                    .and_then(|id| registry.template(id))
                    .is_some_and(|tpl| tpl.envelope.recurs())
            })
            .filter_map(|(i, tr)| gate(tr, c).map(|cost| (cost, i)))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let mut tr = match revival {
            Some((_, i)) => {
                let mut tr = tracker.closed.remove(i);
                tr.closed_at = None;
                tr.occurrence += 1;
                tr.occurrence_start = t;
                tr.repetition_seen = true;
                update.revived.push(tr.stream_id.clone());
                tr
            }
            None => {
                let tr = tracker.birth(c, t, head_heading_deg, background_db);
                update.born.push(tr.stream_id.clone());
                tr
            }
        };
        // a revived track must not count the silence as a within-track gap
        tr.last_update = t;
        update_track(&mut tr, c, t, head_heading_deg, background_db, registry, &config, &centers);
        update.new_occurrence.push(tr.stream_id.clone());
        update.assignments.push((c.label, tr.stream_id.clone()));
        tracker.live.push(tr);
    }
    update
}

/// Observed/emitted frequency ratio of a track.
///
/// With a known template this is the observed centroid over the template's
/// centroid (both restricted to the observed band); otherwise it is the drift
/// of the centroid since the track was born. Fewer than five updates give 1.
pub fn estimate_doppler(track: &StreamTrack, registry: &OntologyRegistry, centers: &[f64]) -> f64 {
    if track.updates < 5 {
        return 1.0;
    }
    let template = track.category.template.as_ref().and_then(|id| registry.template(id));
    let ratio = match template {
        Some(tpl) => {
            let observed = &track.signature_estimate;
            let step = (centers[1] / centers[0]).ln();
            let expected: Vec<f64> = shift_profile(&tpl.spectral_signature, track.doppler_shift)
                .into_iter()
                .zip(observed)
                .map(|(e, o)| if *o > 0.0 { e } else { 0.0 })
                .collect();
            match (
                geometric_centroid(observed, centers),
                geometric_centroid(&expected, centers),
            ) {
                (Some(o), Some(e)) => o / e * (track.doppler_shift * step).exp(),
                _ => 1.0,
            }
        }
        None if track.birth_centroid > 0.0 => track.spectral_centroid / track.birth_centroid,
        None => 1.0,
    };
    if ratio.is_finite() && ratio > 0.0 {
        ratio
    } else {
        1.0
    }
}
