//! Auditory scene analysis: grouping cochleagram cells into streams, keeping
//! stream identity across time, and naming what each stream is.

mod cluster;
mod identify;
mod tracker;

pub use cluster::{segregate_window, Cluster, ObservedFrame, Segregation};
pub use identify::{classify_with_doppler, identify_stream, ListeningContext, WordGate};
pub use tracker::{estimate_doppler, track_streams, StreamTrack, TrackPoint, TrackUpdate, Tracker};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegregationConfig {
    /// A cell is active when its louder ear is this far above background.
    pub active_db: f64,
    /// Azimuth jump (deg) that splits a run of active channels into two segments.
    pub split_azimuth_deg: f64,
    pub azimuth_scale_deg: f64,
    pub spectral_scale_channels: f64,
    pub onset_scale_s: f64,
    pub max_clusters: usize,
    /// Below this best silhouette the window is treated as one group.
    pub min_silhouette: f64,
    /// Feature-space diameter under which all segments form a single cluster.
    pub single_cluster_spread: f64,
    pub window_frames: usize,
    pub gate_azimuth_deg: f64,
    pub gate_cosine: f64,
    /// Extra cosine-distance allowance per unit of |ln doppler_ratio|.
    pub gate_doppler_widening: f64,
    pub expiry_s: f64,
    /// Closed tracks of recurring templates may be revived within this span.
    pub revival_s: f64,
    /// Silence longer than this, followed by sound on the same track, is a new occurrence.
    pub occurrence_gap_s: f64,
    pub signature_smoothing: f64,
    /// Doppler correction search range and step, in channels.
    pub doppler_scan_channels: f64,
    pub doppler_scan_step: f64,
    pub reclassify_every: u64,
    /// Focused-stream intelligibility margin against competing streams.
    pub intelligibility_margin_db: f64,
    /// Localisation history used for front/back decisions.
    pub history_len: usize,
}

impl Default for SegregationConfig {
    fn default() -> Self {
        SegregationConfig {
            active_db: 6.0,
            split_azimuth_deg: 25.0,
            azimuth_scale_deg: 20.0,
            spectral_scale_channels: 16.0,
            onset_scale_s: 1.0,
            max_clusters: 5,
            min_silhouette: 0.5,
            single_cluster_spread: 1.2,
            window_frames: 3,
            gate_azimuth_deg: 25.0,
            gate_cosine: 0.4,
            gate_doppler_widening: 4.0,
            expiry_s: 1.0,
            revival_s: 10.0,
            occurrence_gap_s: 0.25,
            signature_smoothing: 0.3,
            doppler_scan_channels: 0.4,
            doppler_scan_step: 0.05,
            reclassify_every: 10,
            intelligibility_margin_db: 6.0,
            history_len: 64,
        }
    }
}
