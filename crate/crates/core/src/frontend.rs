//! The ear: renders a scene into per-ear filterbank energies and derives the
//! interaural cues (time and level differences) that later stages consume.
//!
//! Rendering happens in the feature domain. Each active source contributes its
//! template's spectral signature scaled to its level at the ear, tilted by the
//! interaural level difference, and tagged with its interaural time difference.
//! Sources quieter than `min_gate_db` above the background floor are inaudible;
//! total energy per channel never exceeds `max_gate_db` above it.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bands::{log_spaced_centers, ratio_to_channel_shift, shift_profile};
use crate::ontology::OntologyRegistry;
use crate::scene::{wrap_deg, AuditoryScene};

/// Largest head-shadow level difference, approached at high frequency.
const ILD_MAX_DB: f64 = 20.0;
/// Frequency at which head shadow reaches half of [`ILD_MAX_DB`].
const ILD_HALF_HZ: f64 = 1500.0;

const NOTCH_DEPTH_DB: f64 = 40.0;
const AGED_MAX_LOSS_DB: f64 = 30.0;
const AGED_KNEE_HZ: f64 = 1000.0;
const AGED_TOP_HZ: f64 = 8000.0;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "lowercase")]
pub enum Sensitivity {
    /// Flat response.
    #[default]
    Normal,
    /// No loss below 1 kHz, rising linearly to 30 dB of loss at 8 kHz.
    Aged,
    /// Flat response with a 40 dB notch at one channel.
    Damaged { notch_channel: usize },
    /// Caller-supplied attenuation per channel, in dB (positive = quieter).
    Custom { offsets_db: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EarConfig {
    pub head_radius_m: f64,
    pub speed_of_sound_mps: f64,
    pub sensitivity: Sensitivity,
    pub front_emphasis_db: f64,
    /// Half-width of the emphasised front sector.
    pub front_sector_deg: f64,
    pub min_gate_db: f64,
    pub max_gate_db: f64,
    pub channels: usize,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Default for EarConfig {
    fn default() -> Self {
        EarConfig {
            head_radius_m: 0.0875,
            speed_of_sound_mps: 343.0,
            sensitivity: Sensitivity::Normal,
            front_emphasis_db: 3.0,
            front_sector_deg: 60.0,
            min_gate_db: 10.0,
            max_gate_db: 130.0,
            channels: 32,
            low_hz: 100.0,
            high_hz: 8000.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EarConfigError {
    #[error("min_gate_db ({0}) must be below max_gate_db ({1})")]
    Gates(f64, f64),
    #[error("need at least 8 channels, got {0}")]
    TooFewChannels(usize),
    #[error("channel range {0}..{1} Hz is not increasing")]
    Range(f64, f64),
    #[error("head radius and speed of sound must be positive")]
    Geometry,
    #[error("sensitivity: {0}")]
    Sensitivity(String),
}

impl EarConfig {
    pub fn validate(&self) -> Result<(), EarConfigError> {
        if !(self.min_gate_db < self.max_gate_db) {
            return Err(EarConfigError::Gates(self.min_gate_db, self.max_gate_db));
        }
        if self.channels < 8 {
            return Err(EarConfigError::TooFewChannels(self.channels));
        }
        if !(self.low_hz > 0.0 && self.high_hz > self.low_hz) {
            return Err(EarConfigError::Range(self.low_hz, self.high_hz));
        }
        if !(self.head_radius_m > 0.0 && self.speed_of_sound_mps > 0.0) {
            return Err(EarConfigError::Geometry);
        }
        match &self.sensitivity {
            Sensitivity::Damaged { notch_channel } if *notch_channel >= self.channels => Err(
                EarConfigError::Sensitivity(format!("notch channel {notch_channel} out of range")),
            ),
            Sensitivity::Custom { offsets_db } if offsets_db.len() != self.channels => {
                Err(EarConfigError::Sensitivity(format!(
                    "{} offsets for {} channels",
                    offsets_db.len(),
                    self.channels
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn channel_centers(&self) -> Vec<f64> {
        log_spaced_centers(self.channels, self.low_hz, self.high_hz)
    }

    /// Largest physically possible |ITD|, reached at ±90°.
    pub fn max_itd_s(&self) -> f64 {
        self.head_radius_m / self.speed_of_sound_mps * (std::f64::consts::FRAC_PI_2 + 1.0)
    }

    /// Attenuation in dB per channel (non-negative means quieter).
    pub fn sensitivity_offsets(&self) -> Vec<f64> {
        let centers = self.channel_centers();
        match &self.sensitivity {
            Sensitivity::Normal => vec![0.0; self.channels],
            Sensitivity::Aged => centers
                .iter()
                .map(|&f| {
                    if f <= AGED_KNEE_HZ {
                        0.0
                    } else {
                        AGED_MAX_LOSS_DB * ((f - AGED_KNEE_HZ) / (AGED_TOP_HZ - AGED_KNEE_HZ)).min(1.0)
                    }
                })
                .collect(),
            Sensitivity::Damaged { notch_channel } => (0..self.channels)
                .map(|i| if i == *notch_channel { NOTCH_DEPTH_DB } else { 0.0 })
                .collect(),
            Sensitivity::Custom { offsets_db } => offsets_db.clone(),
        }
    }
}

/// Folds a relative azimuth onto the front hemisphere: |θ| in [0, 90].
pub fn fold_to_front(relative_azimuth_deg: f64) -> f64 {
    let a = wrap_deg(relative_azimuth_deg).abs();
    if a > 90.0 {
        180.0 - a
    } else {
        a
    }
}

/// Spherical-head interaural time difference. Positive means the right ear leads.
///
/// Rear azimuths mirror onto the front, so a source at 150° produces the
/// same ITD as one at 30°.
pub fn itd_model(relative_azimuth_deg: f64, config: &EarConfig) -> f64 {
    let theta = fold_to_front(relative_azimuth_deg).to_radians();
    let magnitude = config.head_radius_m / config.speed_of_sound_mps * (theta + theta.sin());
    let side = wrap_deg(relative_azimuth_deg);
    if side > 0.0 {
        magnitude
    } else if side < 0.0 && side != -180.0 {
        -magnitude
    } else {
        0.0
    }
}

/// Head-shadow scale k(f): grows monotonically with frequency.
pub fn ild_scale(channel_center_hz: f64) -> f64 {
    ILD_MAX_DB * channel_center_hz / (channel_center_hz + ILD_HALF_HZ)
}

/// Interaural level difference (right minus left, dB) at one channel.
pub fn ild_model(relative_azimuth_deg: f64, channel_center_hz: f64, _config: &EarConfig) -> f64 {
    let a = wrap_deg(relative_azimuth_deg);
    if a == 0.0 || a == -180.0 {
        return 0.0;
    }
    ild_scale(channel_center_hz) * a.to_radians().sin()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CochleagramFrame {
    pub t: f64,
    pub background_db: f64,
    pub left_db: Vec<f64>,
    pub right_db: Vec<f64>,
}

impl CochleagramFrame {
    pub fn silent(t: f64, background_db: f64, channels: usize) -> Self {
        CochleagramFrame {
            t,
            background_db,
            left_db: vec![background_db; channels],
            right_db: vec![background_db; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.left_db.len()
    }

    /// Power above the background floor in channel `ch`, averaged over both ears.
    pub fn excess_power(&self, ch: usize) -> f64 {
        let floor = db_to_power(self.background_db);
        let l = (db_to_power(self.left_db[ch]) - floor).max(0.0);
        let r = (db_to_power(self.right_db[ch]) - floor).max(0.0);
        0.5 * (l + r)
    }

    /// Loudest ear in `ch`, in dB above background.
    pub fn level_above_background(&self, ch: usize) -> f64 {
        self.left_db[ch].max(self.right_db[ch]) - self.background_db
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterauralFeatures {
    pub t: f64,
    /// Energy-weighted mean ITD of audible sources (s, positive = right ear leads).
    pub itd_s: f64,
    /// Right minus left, dB per channel.
    pub ild_db: Vec<f64>,
    /// Total energy above background, in dB.
    pub summed_loudness_db: f64,
    /// Per-channel ITD of the strongest component in that channel, 0 where no source sounds.
    pub channel_itd_s: Vec<f64>,
}

/// One audible source's contribution to a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceContribution {
    /// Index into `scene.sources`.
    pub source: usize,
    pub relative_azimuth_deg: f64,
    pub itd_s: f64,
    pub level_at_ear_db: f64,
    pub doppler_ratio: f64,
    pub left_power: Vec<f64>,
    pub right_power: Vec<f64>,
}

impl SourceContribution {
    pub fn mean_power(&self, ch: usize) -> f64 {
        (self.left_power[ch] * self.right_power[ch]).sqrt()
    }
}

pub fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn power_to_db(p: f64) -> f64 {
    10.0 * p.log10()
}

/// Observed/emitted frequency ratio for a moving source and a still listener.
pub fn doppler_ratio(radial_velocity_mps: f64, speed_of_sound_mps: f64) -> f64 {
    speed_of_sound_mps / (speed_of_sound_mps + radial_velocity_mps)
}

/// Per-source channel powers for every active source that passes the audibility gate.
pub fn source_contributions(
    scene: &AuditoryScene,
    library: &OntologyRegistry,
    config: &EarConfig,
    head_heading_deg: f64,
    t: f64,
) -> Vec<SourceContribution> {
    let centers = config.channel_centers();
    let gate = scene.background_db + config.min_gate_db;
    let mut out = Vec::new();
    for (index, source) in scene.sources.iter().enumerate() {
        let state = source.state_at(t);
        if !state.active || state.level_at_ear_db < gate {
            continue;
        }
        let Some(template) = library.template(&source.template) else {
            continue;
        };
        let relative = wrap_deg(state.azimuth_deg - head_heading_deg);
        let ratio = doppler_ratio(state.radial_velocity_mps, config.speed_of_sound_mps);
        let signature = if ratio == 1.0 {
            template.spectral_signature.clone()
        } else {
            shift_profile(&template.spectral_signature, ratio_to_channel_shift(ratio, &centers))
        };
        let emphasis = if relative.abs() <= config.front_sector_deg {
            config.front_emphasis_db
        } else {
            0.0
        };
        let base = state.level_at_ear_db + emphasis;
        let mut left_power = Vec::with_capacity(centers.len());
        let mut right_power = Vec::with_capacity(centers.len());
        for (ch, &f) in centers.iter().enumerate() {
            let share = signature.get(ch).copied().unwrap_or(0.0);
            if share <= 0.0 {
                left_power.push(0.0);
                right_power.push(0.0);
                continue;
            }
            let half_ild = 0.5 * ild_model(relative, f, config);
            let db = base + 10.0 * share.log10();
            left_power.push(db_to_power(db - half_ild));
            right_power.push(db_to_power(db + half_ild));
        }
        out.push(SourceContribution {
            source: index,
            relative_azimuth_deg: relative,
            itd_s: itd_model(relative, config),
            level_at_ear_db: state.level_at_ear_db,
            doppler_ratio: ratio,
            left_power,
            right_power,
        });
    }
    out
}

/// Sums contributions over the background floor and applies the upper clamp.
pub fn mix_frame(
    t: f64,
    background_db: f64,
    config: &EarConfig,
    contributions: &[SourceContribution],
) -> CochleagramFrame {
    let floor = db_to_power(background_db);
    let ceiling = background_db + config.max_gate_db;
    let mut frame = CochleagramFrame::silent(t, background_db, config.channels);
    for ch in 0..config.channels {
        let mut l = floor;
        let mut r = floor;
        for c in contributions {
            l += c.left_power[ch];
            r += c.right_power[ch];
        }
        // clamp below too: the dB round trip of the bare floor can land an ulp under it
        frame.left_db[ch] = power_to_db(l).clamp(background_db, ceiling);
        frame.right_db[ch] = power_to_db(r).clamp(background_db, ceiling);
    }
    frame
}

pub fn render_frame(
    scene: &AuditoryScene,
    library: &OntologyRegistry,
    config: &EarConfig,
    head_heading_deg: f64,
    t: f64,
) -> CochleagramFrame {
    let contributions = source_contributions(scene, library, config, head_heading_deg, t);
    mix_frame(t, scene.background_db, config, &contributions)
}

/// Interaural cues of a rendered frame given the contributions that produced it.
pub fn features_from(
    frame: &CochleagramFrame,
    contributions: &[SourceContribution],
) -> InterauralFeatures {
    let channels = frame.channels();
    let mut weight = 0.0;
    let mut weighted = 0.0;
    for c in contributions {
        let w = db_to_power(c.level_at_ear_db);
        weight += w;
        weighted += w * c.itd_s;
    }
    let itd_s = if weight > 0.0 { weighted / weight } else { 0.0 };
    // per channel the cross-correlation peak sits at the lag of the strongest component
    let channel_itd_s = (0..channels)
        .map(|ch| {
            contributions
                .iter()
                .filter(|c| c.mean_power(ch) > 0.0)
                .max_by(|a, b| a.mean_power(ch).total_cmp(&b.mean_power(ch)))
                .map_or(0.0, |c| c.itd_s)
        })
        .collect();
    let ild_db = (0..channels).map(|ch| frame.right_db[ch] - frame.left_db[ch]).collect();
    let excess: f64 = (0..channels).map(|ch| frame.excess_power(ch)).sum();
    let summed_loudness_db = if excess > 0.0 {
        (power_to_db(excess) - frame.background_db).max(0.0)
    } else {
        0.0
    };
    InterauralFeatures {
        t: frame.t,
        itd_s,
        ild_db,
        summed_loudness_db,
        channel_itd_s,
    }
}

pub fn interaural_features(
    scene: &AuditoryScene,
    library: &OntologyRegistry,
    config: &EarConfig,
    head_heading_deg: f64,
    t: f64,
) -> InterauralFeatures {
    let contributions = source_contributions(scene, library, config, head_heading_deg, t);
    let frame = mix_frame(t, scene.background_db, config, &contributions);
    features_from(&frame, &contributions)
}

/// Lowers each channel by the configured hearing loss, never below the background floor.
pub fn apply_sensitivity(frame: &CochleagramFrame, config: &EarConfig) -> CochleagramFrame {
    let offsets = config.sensitivity_offsets();
    let floor = frame.background_db;
    let adjust = |v: &Vec<f64>| -> Vec<f64> {
        v.iter()
            .zip(&offsets)
            .map(|(e, off)| if *off == 0.0 { *e } else { (e - off).max(floor) })
            .collect()
    };
    CochleagramFrame {
        t: frame.t,
        background_db: floor,
        left_db: adjust(&frame.left_db),
        right_db: adjust(&frame.right_db),
    }
}

/// Writes frames as `t,ear,ch0..chN-1` rows, preceded by a header row.
pub fn write_frames_csv<W: Write>(frames: &[CochleagramFrame], mut out: W) -> io::Result<()> {
    let channels = frames.first().map_or(0, |f| f.channels());
    write!(out, "t,ear")?;
    for ch in 0..channels {
        write!(out, ",ch{ch}")?;
    }
    writeln!(out)?;
    for f in frames {
        for (ear, values) in [("left", &f.left_db), ("right", &f.right_db)] {
            write!(out, "{},{}", f.t, ear)?;
            for v in values {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::{load_builtin_ontology, SoundTemplate};
    use crate::scene::{Keyframe, SoundSource};
    use std::collections::BTreeMap;

    fn cfg() -> EarConfig {
        EarConfig::default()
    }

    fn source_at(id: &str, template: &str, azimuth: f64, distance: f64, level: f64) -> SoundSource {
        SoundSource {
            id: id.into(),
            template: template.into(),
            onset_s: 0.0,
            duration_s: 10.0,
            level_db_at_1m: level,
            repeat: None,
            trajectory: vec![Keyframe {
                t_s: 0.0,
                azimuth_deg: azimuth,
                distance_m: distance,
            }],
            speech: None,
            is_alarm: false,
            station: None,
        }
    }

    fn scene(sources: Vec<SoundSource>) -> AuditoryScene {
        AuditoryScene {
            duration_s: 10.0,
            background_db: 20.0,
            sample_rate_hz: 16000.0,
            frame_hop_s: 0.05,
            sources,
        }
    }

    #[test]
    fn itd_zero_ahead() {
        assert_eq!(itd_model(0.0, &cfg()), 0.0);
        assert_eq!(itd_model(-180.0, &cfg()), 0.0);
    }

    #[test]
    fn itd_at_ninety_matches_closed_form() {
        let expected = 0.0875 / 343.0 * (std::f64::consts::PI / 2.0 + 1.0);
        assert!((itd_model(90.0, &cfg()) - expected).abs() < 1e-12);
        assert!((itd_model(90.0, &cfg()) - 6.558_153_894_884_939e-4).abs() < 1e-15);
    }

    #[test]
    fn itd_rear_mirrors_front() {
        let c = cfg();
        assert!((itd_model(150.0, &c) - itd_model(30.0, &c)).abs() < 1e-15);
        assert!((itd_model(-120.0, &c) - itd_model(-60.0, &c)).abs() < 1e-15);
    }

    #[test]
    fn ild_grows_with_frequency() {
        let c = cfg();
        assert!(ild_model(60.0, 4000.0, &c) > ild_model(60.0, 500.0, &c));
        for f in c.channel_centers() {
            assert_eq!(ild_model(0.0, f, &c), 0.0);
            assert_eq!(ild_model(-40.0, f, &c), -ild_model(40.0, f, &c));
        }
    }

    #[test]
    fn empty_scene_sits_at_background() {
        let reg = load_builtin_ontology();
        let f = render_frame(&scene(vec![]), &reg, &cfg(), 0.0, 1.0);
        assert!(f.left_db.iter().chain(&f.right_db).all(|&e| e == 20.0));
    }

    #[test]
    fn quiet_source_is_gated() {
        let reg = load_builtin_ontology();
        // 25 dB at 1 m = 5 dB above the 20 dB floor
        let quiet = scene(vec![source_at("hum", "truck", 20.0, 1.0, 25.0)]);
        let silent = scene(vec![]);
        assert_eq!(
            render_frame(&quiet, &reg, &cfg(), 0.0, 1.0),
            render_frame(&silent, &reg, &cfg(), 0.0, 1.0)
        );
    }

    fn single_channel_registry(channel: usize) -> OntologyRegistry {
        let mut reg = load_builtin_ontology();
        let mut sig = vec![0.0; 32];
        sig[channel] = 1.0;
        reg.insert_template(SoundTemplate {
            id: "tone".into(),
            category: "Mechanical/Alarms".into(),
            spectral_signature: sig,
            envelope: crate::ontology::Envelope::Sustained,
            nominal_level_db: 100.0,
            modifiers: BTreeMap::new(),
        })
        .unwrap();
        reg
    }

    #[test]
    fn loud_source_clamps_exactly() {
        let reg = single_channel_registry(12);
        let loud = scene(vec![source_at("blast", "tone", 0.0, 1.0, 20.0 + 140.0)]);
        let f = render_frame(&loud, &reg, &cfg(), 0.0, 1.0);
        assert_eq!(f.left_db[12], 150.0);
        assert_eq!(f.right_db[12], 150.0);
        assert!(f.left_db.iter().chain(&f.right_db).all(|&e| (20.0..=150.0).contains(&e)));
    }

    #[test]
    fn single_front_source_has_no_interaural_difference() {
        let reg = load_builtin_ontology();
        let s = scene(vec![source_at("dog", "dog_bark", 0.0, 2.0, 85.0)]);
        let feat = interaural_features(&s, &reg, &cfg(), 0.0, 1.0);
        assert_eq!(feat.itd_s, 0.0);
        assert!(feat.ild_db.iter().all(|d| d.abs() < 1e-9));
    }

    #[test]
    fn side_source_itd() {
        let reg = load_builtin_ontology();
        let s = scene(vec![source_at("dog", "dog_bark", 90.0, 2.0, 85.0)]);
        let feat = interaural_features(&s, &reg, &cfg(), 0.0, 1.0);
        assert!((feat.itd_s - 6.558_153_894_884_939e-4).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair_cancels() {
        let reg = load_builtin_ontology();
        let s = scene(vec![
            source_at("a", "dog_bark", -30.0, 2.0, 80.0),
            source_at("b", "speech_male", 30.0, 2.0, 80.0),
        ]);
        let feat = interaural_features(&s, &reg, &cfg(), 0.0, 1.0);
        // equal levels: weights equal, ITDs equal and opposite
        assert!(feat.itd_s.abs() < 1e-15);
    }

    #[test]
    fn heading_is_subtracted() {
        let reg = load_builtin_ontology();
        let s = scene(vec![source_at("dog", "dog_bark", 60.0, 2.0, 85.0)]);
        let feat = interaural_features(&s, &reg, &cfg(), 60.0, 1.0);
        assert_eq!(feat.itd_s, 0.0);
    }

    #[test]
    fn normal_preset_is_identity() {
        let reg = load_builtin_ontology();
        let s = scene(vec![source_at("dog", "dog_bark", 30.0, 2.0, 85.0)]);
        let f = render_frame(&s, &reg, &cfg(), 0.0, 1.0);
        assert_eq!(apply_sensitivity(&f, &cfg()), f);
    }

    #[test]
    fn aged_preset_cuts_highs() {
        let c = EarConfig {
            sensitivity: Sensitivity::Aged,
            ..cfg()
        };
        let offsets = c.sensitivity_offsets();
        let centers = c.channel_centers();
        let low_max = centers.iter().zip(&offsets).filter(|(f, _)| **f < 1000.0).map(|(_, o)| *o).fold(0.0, f64::max);
        let high_min = centers.iter().zip(&offsets).filter(|(f, _)| **f > 2000.0).map(|(_, o)| *o).fold(f64::MAX, f64::min);
        assert_eq!(low_max, 0.0);
        assert!(high_min > low_max);
        assert!((offsets[31] - 30.0).abs() < 1e-9);
    }

    #[test]
    fn damaged_notch_floors_channel() {
        let reg = single_channel_registry(10);
        let c = EarConfig {
            sensitivity: Sensitivity::Damaged { notch_channel: 10 },
            ..cfg()
        };
        // 35 dB above floor in the notch channel, removed entirely by a 40 dB notch
        let s = scene(vec![source_at("t", "tone", 0.0, 1.0, 52.0)]);
        let f = apply_sensitivity(&render_frame(&s, &reg, &c, 0.0, 1.0), &c);
        assert_eq!(f.left_db[10], 20.0);
        assert_eq!(f.right_db[10], 20.0);
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let bad = EarConfig { channels: 4, ..cfg() };
        assert_eq!(bad.validate(), Err(EarConfigError::TooFewChannels(4)));
        let bad = EarConfig { min_gate_db: 140.0, ..cfg() };
        assert!(matches!(bad.validate(), Err(EarConfigError::Gates(..))));
    }

    #[test]
    fn csv_dump_shape() {
        let reg = load_builtin_ontology();
        let s = scene(vec![]);
        let frames: Vec<_> = [0.0, 0.05].iter().map(|&t| render_frame(&s, &reg, &cfg(), 0.0, t)).collect();
        let mut buf = Vec::new();
        write_frames_csv(&frames, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("t,ear,ch0,"));
        assert_eq!(lines[1].split(',').count(), 34);
        assert!(lines[2].starts_with("0,right,"));
    }
}
