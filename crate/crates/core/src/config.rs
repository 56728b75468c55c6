use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::AttentionConfig;
use crate::frontend::{EarConfig, EarConfigError};
use crate::localization::LocalizationConfig;
use crate::segregation::SegregationConfig;

/// Everything tunable about one ear. Every field has a default, so `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EngineConfig {
    pub ear: EarConfig,
    pub localization: LocalizationConfig,
    pub segregation: SegregationConfig,
    pub attention: AttentionConfig,
    /// Turns off decay, localisation error and recognition misses.
    pub super_ear: bool,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error(transparent)]
    Ear(#[from] EarConfigError),
    #[error("{0}")]
    Invalid(String),
}

impl EngineConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: EngineConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.ear.validate()?;
        let a = &self.attention;
        let positive = [
            ("attention.short_term_half_life_s", a.short_term_half_life_s),
            ("attention.long_term_half_life_s", a.long_term_half_life_s),
            ("attention.slope", a.slope),
            ("attention.turn_rate_dps", a.turn_rate_dps),
            ("attention.alarms.rate_window_s", a.alarms.rate_window_s),
            ("segregation.expiry_s", self.segregation.expiry_s),
            ("segregation.azimuth_scale_deg", self.segregation.azimuth_scale_deg),
            ("segregation.spectral_scale_channels", self.segregation.spectral_scale_channels),
            ("segregation.onset_scale_s", self.segregation.onset_scale_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.segregation.window_frames == 0 {
            return Err(ConfigError::Invalid("segregation.window_frames must be >= 1".into()));
        }
        if a.alarms.rate_cap == 0 {
            return Err(ConfigError::Invalid("attention.alarms.rate_cap must be >= 1".into()));
        }
        Ok(())
    }

    /// The configuration actually run: super-ear mode switches off the modelled fallibility.
    pub fn effective(&self) -> EngineConfig {
        let mut c = self.clone();
        if c.super_ear {
            c.localization.noise_free = true;
            c.attention.super_ear = true;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(EngineConfig::from_json("{}").unwrap(), EngineConfig::default());
    }

    #[test]
    fn partial_override() {
        let c = EngineConfig::from_json(r#"{"super_ear": true, "attention": {"capacity": 4}}"#).unwrap();
        assert_eq!(c.attention.capacity, 4);
        assert_eq!(c.attention.short_term_half_life_s, 300.0);
        let e = c.effective();
        assert!(e.localization.noise_free && e.attention.super_ear);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(EngineConfig::from_json(r#"{"attention": {"slope": 0}}"#).is_err());
        assert!(EngineConfig::from_json("[").is_err());
    }
}
