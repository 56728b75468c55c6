use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{HeardObject, Novelty};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlarmConfig {
    pub consolidation_window_s: f64,
    pub rate_cap: usize,
    pub rate_window_s: f64,
    pub soft_watermark: usize,
    /// Station this ear serves; alarms tagged for another station are dropped.
    pub own_station: Option<String>,
    /// Alarms quieter than this (dB above background) are treated as another station's.
    pub station_min_loudness_db: f64,
}

impl Default for AlarmConfig {
    fn default() -> Self {
        AlarmConfig {
            consolidation_window_s: 2.0,
            rate_cap: 30,
            rate_window_s: 60.0,
            soft_watermark: 15,
            own_station: None,
            station_min_loudness_db: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmMetrics {
    pub submitted: u64,
    pub delivered: u64,
    /// Alarms merged into an earlier report of the same type.
    pub consolidated: u64,
    /// Reports that had to wait for the rate cap.
    pub deferred: u64,
    pub off_station: u64,
    /// Deliveries made while the trailing-window count was above the soft watermark.
    pub over_soft_watermark: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct Bucket {
    key: String,
    opened: f64,
    heard: HeardObject,
}

#[derive(Debug, Clone, PartialEq)]
struct Ready {
    order: u64,
    heard: HeardObject,
    waited: bool,
}

/// Station filtering, consolidation, novelty, prioritisation and rate limiting of alarms.
#[derive(Debug, Clone, PartialEq)]
pub struct AlarmPipeline {
    pub config: AlarmConfig,
    pub known_types: BTreeSet<String>,
    buckets: Vec<Bucket>,
    ready: Vec<Ready>,
    log: VecDeque<f64>,
    next_order: u64,
    pub metrics: AlarmMetrics,
}

/// The consolidation and novelty key of an alarm report.
pub fn alarm_type(heard: &HeardObject) -> String {
    match &heard.template {
        Some(t) if heard.novelty == Novelty::KnownType => t.0.clone(),
        // unrecognised alarms are told apart by pitch, in quarter-octave bins
        _ => format!("unknown@{}", (heard.centroid_hz.max(1.0).log2() * 4.0).round() as i64),
    }
}

impl AlarmPipeline {
    pub fn new(config: AlarmConfig, known_types: impl IntoIterator<Item = String>) -> Self {
        AlarmPipeline {
            config,
            known_types: known_types.into_iter().collect(),
            buckets: Vec::new(),
            ready: Vec::new(),
            log: VecDeque::new(),
            next_order: 0,
            metrics: AlarmMetrics::default(),
        }
    }

    /// Whether a report belongs to this ear's station.
    pub fn on_station(&self, heard: &HeardObject) -> bool {
        if let (Some(own), Some(tag)) = (&self.config.own_station, &heard.station_tag) {
            if own != tag {
                return false;
            }
        }
        !(heard.is_alarm_like && heard.loudness_db < self.config.station_min_loudness_db)
    }

    pub fn note_off_station(&mut self) {
        self.metrics.off_station += 1;
    }

    /// Accepts one alarm occurrence.
    pub fn submit(&mut self, heard: HeardObject, now: f64) {
        self.metrics.submitted += 1;
        let key = alarm_type(&heard);
        let window = self.config.consolidation_window_s;
        if let Some(b) = self
            .buckets
            .iter_mut()
            .find(|b| b.key == key && now - b.opened < window)
        {
            b.heard.consolidation_count += 1;
            b.heard.loudness_db = b.heard.loudness_db.max(heard.loudness_db);
            self.metrics.consolidated += 1;
            return;
        }
        self.buckets.push(Bucket {
            key,
            opened: now,
            heard,
        });
    }

    fn trailing_count(&self, now: f64) -> usize {
        // closed window: a delivery exactly one window ago still counts
        self.log.iter().filter(|&&t| t >= now - self.config.rate_window_s).count()
    }

    /// Closes consolidation windows and releases what the rate cap allows, most urgent first.
    pub fn flush(&mut self, now: f64) -> Vec<HeardObject> {
        let window = self.config.consolidation_window_s;
        let (closing, open): (Vec<_>, Vec<_>) = std::mem::take(&mut self.buckets)
            .into_iter()
            .partition(|b| now - b.opened >= window);
        self.buckets = open;
        for b in closing {
            let mut heard = b.heard;
            if heard.novelty == Novelty::NewType || !self.known_types.contains(&b.key) {
                heard.novelty = Novelty::NewType;
            }
            self.known_types.insert(b.key);
            self.ready.push(Ready {
                order: self.next_order,
                heard,
                waited: false,
            });
            self.next_order += 1;
        }
        self.ready.sort_by(|a, b| {
            let rank = |r: &Ready| (r.heard.novelty != Novelty::NewType) as u8;
            rank(a)
                .cmp(&rank(b))
                .then(b.heard.loudness_db.total_cmp(&a.heard.loudness_db))
                .then(a.order.cmp(&b.order))
        });
        while self.log.front().is_some_and(|&t| t < now - self.config.rate_window_s) {
            self.log.pop_front();
        }
        let mut out = Vec::new();
        while !self.ready.is_empty() && self.trailing_count(now) < self.config.rate_cap {
            let r = self.ready.remove(0);
            if self.trailing_count(now) >= self.config.soft_watermark {
                self.metrics.over_soft_watermark += 1;
            }
            self.log.push_back(now);
            self.metrics.delivered += 1;
            out.push(r.heard);
        }
        for r in &mut self.ready {
            if !r.waited {
                r.waited = true;
                self.metrics.deferred += 1;
            }
        }
        out
    }

    pub fn pending(&self) -> usize {
        self.buckets.len() + self.ready.len()
    }
}
