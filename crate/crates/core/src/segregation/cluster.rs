use crate::frontend::{CochleagramFrame, EarConfig, InterauralFeatures};
use crate::localization::invert_itd;

use super::SegregationConfig;

/// A rendered frame together with its interaural cues.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedFrame {
    pub frame: CochleagramFrame,
    pub features: InterauralFeatures,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub label: usize,
    /// Front-folded azimuth implied by the cluster's ITD.
    pub azimuth_deg: f64,
    pub itd_s: f64,
    pub centroid_channel: f64,
    /// Time of the earliest window frame the cluster occupies.
    pub onset_s: f64,
    pub cells: usize,
    /// Active cells in the newest frame of the window.
    pub latest_cells: usize,
    /// Excess power per channel in the newest frame.
    pub profile: Vec<f64>,
    /// Excess power per channel summed over the window.
    pub window_profile: Vec<f64>,
}

impl Cluster {
    pub fn latest_power(&self) -> f64 {
        self.profile.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Segregation {
    pub clusters: Vec<Cluster>,
    /// `assignments[frame][channel]`: cluster label, or `None` for the null (background) cluster.
    pub assignments: Vec<Vec<Option<usize>>>,
}

impl Segregation {
    /// Clusters present in the newest frame.
    pub fn current(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.iter().filter(|c| c.latest_cells > 0)
    }

    pub fn is_silent(&self) -> bool {
        self.clusters.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Segment {
    frame: usize,
    lo: usize,
    hi: usize,
    weight: f64,
    point: [f64; 3],
}

fn channel_azimuth(itd_s: f64, ear: &EarConfig) -> f64 {
    invert_itd(itd_s, ear).unwrap_or(90f64.copysign(itd_s))
}

fn segments_of(frames: &[ObservedFrame], ear: &EarConfig, config: &SegregationConfig) -> Vec<Segment> {
    let t0 = frames.first().map_or(0.0, |f| f.frame.t);
    let mut out = Vec::new();
    for (fi, of) in frames.iter().enumerate() {
        let frame = &of.frame;
        let mut run: Option<(usize, f64)> = None;
        let n = frame.channels();
        let close = |lo: usize, hi: usize, out: &mut Vec<Segment>| {
            let (mut p, mut az, mut ch) = (0.0, 0.0, 0.0);
            for c in lo..hi {
                let w = frame.excess_power(c).max(f64::MIN_POSITIVE);
                p += w;
                az += w * channel_azimuth(of.features.channel_itd_s[c], ear);
                ch += w * c as f64;
            }
            out.push(Segment {
                frame: fi,
                lo,
                hi,
                weight: (hi - lo) as f64,
                point: [
                    az / p / config.azimuth_scale_deg,
                    ch / p / config.spectral_scale_channels,
                    (frame.t - t0) / config.onset_scale_s,
                ],
            });
        };
        for c in 0..n {
            let active = frame.level_above_background(c) >= config.active_db;
            let az = channel_azimuth(of.features.channel_itd_s[c], ear);
            match (run, active) {
                (None, true) => run = Some((c, az)),
                (Some((lo, prev)), true) => {
                    if (az - prev).abs() > config.split_azimuth_deg {
                        close(lo, c, &mut out);
                        run = Some((c, az));
                    } else {
                        run = Some((lo, az));
                    }
                }
                (Some((lo, _)), false) => {
                    close(lo, c, &mut out);
                    run = None;
                }
                (None, false) => {}
            }
        }
        if let Some((lo, _)) = run {
            close(lo, n, &mut out);
        }
    }
    out
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn kmeans(segs: &[Segment], k: usize) -> Vec<usize> {
    // farthest-first seeding from the heaviest segment
    let first = segs
        .iter()
        .enumerate()
        .fold(0, |best, (i, s)| if s.weight > segs[best].weight { i } else { best });
    let mut centers = vec![segs[first].point];
    while centers.len() < k {
        let mut far = (0, -1.0);
        for (i, s) in segs.iter().enumerate() {
            let d = centers.iter().map(|c| dist(&s.point, c)).fold(f64::MAX, f64::min);
            if d > far.1 {
                far = (i, d);
            }
        }
        centers.push(segs[far.0].point);
    }
    let mut labels = vec![usize::MAX; segs.len()];
    for _ in 0..50 {
        let mut changed = false;
        for (i, s) in segs.iter().enumerate() {
            let mut best = (0, f64::MAX);
            for (j, c) in centers.iter().enumerate() {
                let d = dist(&s.point, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            if labels[i] != best.0 {
                labels[i] = best.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (j, c) in centers.iter_mut().enumerate() {
            let mut acc = [0.0; 3];
            let mut w = 0.0;
            for (s, _) in segs.iter().zip(&labels).filter(|(_, &l)| l == j) {
                for d in 0..3 {
                    acc[d] += s.weight * s.point[d];
                }
                w += s.weight;
            }
            if w > 0.0 {
                *c = acc.map(|v| v / w);
            }
        }
    }
    labels
}

/// Cell-weighted silhouette: a segment of `w` cells counts as `w` coincident points.
fn silhouette(segs: &[Segment], labels: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    let mut weight = 0.0;
    for (i, si) in segs.iter().enumerate() {
        let mut sum = vec![0.0; k];
        let mut count = vec![0.0; k];
        for (j, sj) in segs.iter().enumerate() {
            let w = if i == j { sj.weight - 1.0 } else { sj.weight };
            sum[labels[j]] += w * dist(&si.point, &sj.point);
            count[labels[j]] += w;
        }
        let own = labels[i];
        let a = if count[own] > 0.0 { sum[own] / count[own] } else { 0.0 };
        let b = (0..k)
            .filter(|&c| c != own && count[c] > 0.0)
            .map(|c| sum[c] / count[c])
            .fold(f64::MAX, f64::min);
        let s = if b == f64::MAX || a.max(b) == 0.0 {
            0.0
        } else {
            (b - a) / a.max(b)
        };
        total += si.weight * s;
        weight += si.weight;
    }
    if weight > 0.0 {
        total / weight
    } else {
        0.0
    }
}

fn choose_labels(segs: &[Segment], config: &SegregationConfig) -> Vec<usize> {
    let n = segs.len();
    let mut spread: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            spread = spread.max(dist(&segs[i].point, &segs[j].point));
        }
    }
    if n < 2 || spread < config.single_cluster_spread {
        return vec![0; n];
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for k in 2..=config.max_clusters.min(n) {
        let labels = kmeans(segs, k);
        if (0..k).any(|c| !labels.contains(&c)) {
            continue;
        }
        let s = silhouette(segs, &labels, k);
        if best.as_ref().is_none_or(|(b, _)| s > *b + 1e-12) {
            best = Some((s, labels));
        }
    }
    match best {
        Some((s, labels)) if s >= config.min_silhouette => labels,
        _ => vec![0; n],
    }
}

/// Groups the active cells of a window of frames into clusters.
///
/// Cells below the activity threshold belong to the null cluster. Windows
/// shorter than the configured length are accepted; the result is simply
/// based on less evidence.
pub fn segregate_window(frames: &[ObservedFrame], ear: &EarConfig, config: &SegregationConfig) -> Segregation {
    let mut assignments: Vec<Vec<Option<usize>>> =
        frames.iter().map(|f| vec![None; f.frame.channels()]).collect();
    let segs = segments_of(frames, ear, config);
    if segs.is_empty() {
        return Segregation {
            clusters: Vec::new(),
            assignments,
        };
    }
    let raw = choose_labels(&segs, config);
    // relabel by first appearance so output order is stable
    let mut order: Vec<usize> = Vec::new();
    for &l in &raw {
        if !order.contains(&l) {
            order.push(l);
        }
    }
    let labels: Vec<usize> = raw.iter().map(|l| order.iter().position(|o| o == l).unwrap()).collect();

    let newest = frames.len() - 1;
    let channels = frames[newest].frame.channels();
    let mut clusters: Vec<Cluster> = (0..order.len())
        .map(|label| Cluster {
            label,
            azimuth_deg: 0.0,
            itd_s: 0.0,
            centroid_channel: 0.0,
            onset_s: f64::MAX,
            cells: 0,
            latest_cells: 0,
            profile: vec![0.0; channels],
            window_profile: vec![0.0; channels],
        })
        .collect();
    let mut itd_acc = vec![(0.0, 0.0, 0.0, 0.0); clusters.len()];
    for (seg, &label) in segs.iter().zip(&labels) {
        let of = &frames[seg.frame];
        let c = &mut clusters[label];
        c.onset_s = c.onset_s.min(of.frame.t);
        for ch in seg.lo..seg.hi {
            assignments[seg.frame][ch] = Some(label);
            let p = of.frame.excess_power(ch);
            c.cells += 1;
            c.window_profile[ch] += p;
            let acc = &mut itd_acc[label];
            if seg.frame == newest {
                c.latest_cells += 1;
                c.profile[ch] += p;
                acc.0 += p;
                acc.1 += p * of.features.channel_itd_s[ch];
            }
            acc.2 += p;
            acc.3 += p * of.features.channel_itd_s[ch];
        }
    }
    for (c, acc) in clusters.iter_mut().zip(&itd_acc) {
        c.itd_s = if acc.0 > 0.0 {
            acc.1 / acc.0
        } else if acc.2 > 0.0 {
            acc.3 / acc.2
        } else {
            0.0
        };
        c.azimuth_deg = channel_azimuth(c.itd_s, ear);
        let total: f64 = c.window_profile.iter().sum();
        c.centroid_channel = if total > 0.0 {
            c.window_profile.iter().enumerate().map(|(i, p)| i as f64 * p).sum::<f64>() / total
        } else {
            0.0
        };
    }
    Segregation { clusters, assignments }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{features_from, mix_frame, source_contributions};
    use crate::ontology::{world_library, TemplateId};
    use crate::scene::{AuditoryScene, Keyframe, SoundSource};

    fn source(id: &str, template: &str, az: f64, level: f64) -> SoundSource {
        SoundSource {
            id: id.into(),
            template: TemplateId::from(template),
            onset_s: 0.0,
            duration_s: 10.0,
            level_db_at_1m: level,
            repeat: None,
            trajectory: vec![Keyframe {
                t_s: 0.0,
                azimuth_deg: az,
                distance_m: 1.0,
            }],
            speech: None,
            is_alarm: false,
            station: None,
        }
    }

    fn scene(sources: Vec<SoundSource>) -> AuditoryScene {
        AuditoryScene {
            duration_s: 10.0,
            background_db: 30.0,
            sample_rate_hz: 16000.0,
            frame_hop_s: 0.02,
            sources,
        }
    }

    /// Renders the window and returns it with the dominant source per active cell.
    fn window(scene: &AuditoryScene) -> (Vec<ObservedFrame>, Vec<Vec<Option<usize>>>) {
        let ear = EarConfig::default();
        let lib = world_library(&ear.channel_centers());
        let cfg = SegregationConfig::default();
        let mut frames = Vec::new();
        let mut truth = Vec::new();
        for k in 0..3 {
            let t = 1.0 + k as f64 * scene.frame_hop_s;
            let contribs = source_contributions(scene, &lib, &ear, 0.0, t);
            let frame = mix_frame(t, scene.background_db, &ear, &contribs);
            let features = features_from(&frame, &contribs);
            truth.push(
                (0..frame.channels())
                    .map(|ch| {
                        if frame.level_above_background(ch) < cfg.active_db {
                            return None;
                        }
                        contribs
                            .iter()
                            .max_by(|a, b| a.mean_power(ch).total_cmp(&b.mean_power(ch)))
                            .map(|c| c.source)
                    })
                    .collect(),
            );
            frames.push(ObservedFrame { frame, features });
        }
        (frames, truth)
    }

    fn accuracy(seg: &Segregation, truth: &[Vec<Option<usize>>]) -> f64 {
        // majority source per cluster, then fraction of active cells agreeing
        let mut votes = std::collections::BTreeMap::new();
        for (a, t) in seg.assignments.iter().flatten().zip(truth.iter().flatten()) {
            if let (Some(c), Some(s)) = (a, t) {
                *votes.entry((*c, *s)).or_insert(0usize) += 1;
            }
        }
        let (mut hits, mut total) = (0, 0);
        for c in 0..seg.clusters.len() {
            let best = votes.iter().filter(|((cc, _), _)| *cc == c).map(|(_, n)| *n).max().unwrap_or(0);
            hits += best;
        }
        total += truth.iter().flatten().filter(|t| t.is_some()).count();
        hits as f64 / total as f64
    }

    #[test]
    fn single_source_one_cluster() {
        let (frames, _) = window(&scene(vec![source("a", "dog_growl", 20.0, 70.0)]));
        let seg = segregate_window(&frames, &EarConfig::default(), &SegregationConfig::default());
        assert_eq!(seg.clusters.len(), 1);
        assert!(seg.clusters[0].latest_cells > 0);
    }

    #[test]
    fn silence_only_null() {
        let (frames, _) = window(&scene(vec![]));
        let seg = segregate_window(&frames, &EarConfig::default(), &SegregationConfig::default());
        assert!(seg.is_silent());
        assert!(seg.assignments.iter().flatten().all(|a| a.is_none()));
    }

    #[test]
    fn two_disjoint_sources_two_clusters() {
        // roughly 500 Hz and 4 kHz
        let s = scene(vec![
            source("low", "speech_male", -40.0, 75.0),
            source("high", "bird_call", 40.0, 75.0),
        ]);
        let (frames, truth) = window(&s);
        let seg = segregate_window(&frames, &EarConfig::default(), &SegregationConfig::default());
        assert_eq!(seg.clusters.len(), 2);
        let acc = accuracy(&seg, &truth);
        assert!(acc >= 0.9, "accuracy {acc}");
        let mut az: Vec<f64> = seg.clusters.iter().map(|c| c.azimuth_deg).collect();
        az.sort_by(f64::total_cmp);
        assert!((az[0] + 40.0).abs() < 3.0 && (az[1] - 40.0).abs() < 3.0, "{az:?}");
    }

    #[test]
    fn multi_peak_source_stays_whole() {
        let (frames, _) = window(&scene(vec![source("a", "fire_alarm", 10.0, 80.0)]));
        let seg = segregate_window(&frames, &EarConfig::default(), &SegregationConfig::default());
        assert_eq!(seg.clusters.len(), 1);
    }

    #[test]
    fn deterministic() {
        let s = scene(vec![
            source("a", "truck", -60.0, 80.0),
            source("b", "pump_alarm", 0.0, 70.0),
            source("c", "bird_call", 60.0, 70.0),
        ]);
        let (frames, _) = window(&s);
        let cfg = SegregationConfig::default();
        let a = segregate_window(&frames, &EarConfig::default(), &cfg);
        let b = segregate_window(&frames, &EarConfig::default(), &cfg);
        assert_eq!(a, b);
        assert_eq!(a.clusters.len(), 3);
    }
}
