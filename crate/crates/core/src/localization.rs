//! Azimuth and coarse distance from interaural cues.
//!
//! Azimuth comes from numerically inverting the spherical-head ITD model, which
//! only ever yields a front-hemisphere answer. Human-like error is injected here
//! (not at rendering) as a zero-mean Gaussian whose width depends on the sector:
//! tight straight ahead, wide at the sides. Front/back ambiguity is settled
//! separately by watching how estimates move while the head turns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::frontend::{EarConfig, InterauralFeatures};
use crate::scene::wrap_deg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizationConfig {
    pub sigma_front_deg: f64,
    pub sigma_side_deg: f64,
    /// σ is `sigma_front_deg` up to this |azimuth| ...
    pub front_limit_deg: f64,
    /// ... and `sigma_side_deg` from this |azimuth| onward, linear in between.
    pub side_limit_deg: f64,
    /// Errors larger than this many σ are redrawn.
    pub truncate_sigmas: f64,
    /// Disables error injection.
    pub noise_free: bool,
    /// Smallest head rotation that can disambiguate front from back.
    pub min_turn_deg: f64,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        LocalizationConfig {
            sigma_front_deg: 2.0,
            sigma_side_deg: 20.0,
            front_limit_deg: 30.0,
            side_limit_deg: 90.0,
            truncate_sigmas: 2.0,
            noise_free: false,
            min_turn_deg: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceConfidence {
    Coarse,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationEstimate {
    pub azimuth_deg: f64,
    pub azimuth_sigma_deg: f64,
    pub distance_m: Option<f64>,
    pub distance_confidence: DistanceConfidence,
    pub front_back_resolved: bool,
}

/// Localisation uncertainty for a source at `azimuth_deg`.
pub fn sector_sigma(azimuth_deg: f64, config: &LocalizationConfig) -> f64 {
    let a = wrap_deg(azimuth_deg).abs();
    if a <= config.front_limit_deg {
        config.sigma_front_deg
    } else if a >= config.side_limit_deg {
        config.sigma_side_deg
    } else {
        let u = (a - config.front_limit_deg) / (config.side_limit_deg - config.front_limit_deg);
        config.sigma_front_deg + u * (config.sigma_side_deg - config.sigma_front_deg)
    }
}

/// Front-hemisphere azimuth (deg, signed) whose model ITD equals `itd_s`.
///
/// Returns `None` when |itd| exceeds the physical maximum.
pub fn invert_itd(itd_s: f64, ear: &EarConfig) -> Option<f64> {
    let scale = ear.head_radius_m / ear.speed_of_sound_mps;
    let target = itd_s.abs();
    if target > ear.max_itd_s() * (1.0 + 1e-12) {
        return None;
    }
    let (mut lo, mut hi) = (0.0f64, std::f64::consts::FRAC_PI_2);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if scale * (mid + mid.sin()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((0.5 * (lo + hi)).to_degrees().copysign(itd_s))
}

fn truncated_error<R: Rng + ?Sized>(sigma: f64, cutoff: f64, rng: &mut R) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive");
    loop {
        let e: f64 = normal.sample(rng);
        if e.abs() <= cutoff * sigma {
            return e;
        }
    }
}

pub fn localize_with<R: Rng + ?Sized>(
    features: &InterauralFeatures,
    ear: &EarConfig,
    config: &LocalizationConfig,
    rng: &mut R,
) -> LocalizationEstimate {
    let (clean, sigma) = match invert_itd(features.itd_s, ear) {
        Some(a) => (a, sector_sigma(a, config)),
        None => (90f64.copysign(features.itd_s), config.sigma_side_deg),
    };
    let azimuth = if config.noise_free {
        clean
    } else {
        clean + truncated_error(sigma, config.truncate_sigmas, rng)
    };
    LocalizationEstimate {
        azimuth_deg: wrap_deg(azimuth),
        azimuth_sigma_deg: sigma,
        distance_m: None,
        distance_confidence: DistanceConfidence::Unknown,
        front_back_resolved: false,
    }
}

/// Estimates azimuth from the frame's ITD, with error drawn from a generator seeded by `seed`.
pub fn localize(
    features: &InterauralFeatures,
    ear: &EarConfig,
    config: &LocalizationConfig,
    seed: u64,
) -> LocalizationEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    localize_with(features, ear, config, &mut rng)
}

/// Reflects a relative azimuth through the interaural axis (30° <-> 150°).
pub fn mirror_front_back(relative_deg: f64) -> f64 {
    wrap_deg(180.0 - relative_deg)
}

/// Signed counterpart of the frontend's fold: 150° -> 30°, -150° -> -30°.
pub fn fold_signed(relative_deg: f64) -> f64 {
    let a = wrap_deg(relative_deg);
    if a > 90.0 {
        180.0 - a
    } else if a < -90.0 {
        -180.0 - a
    } else {
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrontBack {
    Unresolved,
    Front,
    Rear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontBackResolution {
    pub verdict: FrontBack,
    /// Head-independent azimuth under the chosen hypothesis (front if unresolved).
    pub world_azimuth_deg: f64,
}

impl FrontBackResolution {
    pub fn resolved(&self) -> bool {
        self.verdict != FrontBack::Unresolved
    }
}

fn circular_mean_and_spread(angles: &[f64]) -> (f64, f64) {
    let (s, c) = angles.iter().fold((0.0, 0.0), |(s, c), a| {
        let r = a.to_radians();
        (s + r.sin(), c + r.cos())
    });
    let mean = s.atan2(c).to_degrees();
    let spread = angles
        .iter()
        .map(|a| wrap_deg(a - mean).powi(2))
        .sum::<f64>()
        / angles.len() as f64;
    (wrap_deg(mean), spread)
}

/// Decides whether a stationary source lies in front or behind from
/// `(head heading, front-assumed relative azimuth)` observations.
///
/// Under the correct hypothesis the implied world azimuth stays put while the
/// head turns; under the wrong one it drifts by twice the turn.
pub fn resolve_front_back(history: &[(f64, f64)], min_turn_deg: f64) -> FrontBackResolution {
    let front: Vec<f64> = history.iter().map(|&(h, a)| wrap_deg(h + a)).collect();
    let fallback = FrontBackResolution {
        verdict: FrontBack::Unresolved,
        world_azimuth_deg: if front.is_empty() { 0.0 } else { circular_mean_and_spread(&front).0 },
    };
    if history.len() < 2 {
        return fallback;
    }
    let h0 = history[0].0;
    let offsets: Vec<f64> = history.iter().map(|&(h, _)| wrap_deg(h - h0)).collect();
    let span = offsets.iter().cloned().fold(f64::MIN, f64::max) - offsets.iter().cloned().fold(f64::MAX, f64::min);
    if span < min_turn_deg {
        return fallback;
    }
    let rear: Vec<f64> = history
        .iter()
        .map(|&(h, a)| wrap_deg(h + mirror_front_back(a)))
        .collect();
    let (front_mean, front_spread) = circular_mean_and_spread(&front);
    let (rear_mean, rear_spread) = circular_mean_and_spread(&rear);
    if rear_spread < front_spread {
        FrontBackResolution {
            verdict: FrontBack::Rear,
            world_azimuth_deg: rear_mean,
        }
    } else {
        FrontBackResolution {
            verdict: FrontBack::Front,
            world_azimuth_deg: front_mean,
        }
    }
}

/// Inverse-square range from an observed level and the template's level at 1 m.
pub fn distance_estimate(observed_level_db: f64, nominal_level_db: Option<f64>) -> (Option<f64>, DistanceConfidence) {
    match nominal_level_db {
        Some(nominal) => (
            Some(10f64.powf((nominal - observed_level_db) / 20.0)),
            DistanceConfidence::Coarse,
        ),
        None => (None, DistanceConfidence::Unknown),
    }
}
