use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{read_log, read_meta, HarnessError, RunMeta};
use crate::attention::{activation_at, recognition_probability, HeardObject, ListKind, Novelty};
use crate::frontend::{apply_sensitivity, mix_frame, source_contributions, Sensitivity};
use crate::localization::{mirror_front_back, sector_sigma};
use crate::ontology::{builtin_ontology, world_library};
use crate::protocol::{AckMessage, Command, CommandMessage, EventKind, EventMessage, Message};
use crate::scene::{wrap_deg, AuditoryScene, SoundSource};

/// Every capability id of the scorecard, in table order.
pub const ITEM_IDS: [&str; 19] = [
    "1a", "1b", "1c", "1d", "2a", "2b", "2c", "2d", "2e", "2f", "2g", "3a", "3b", "3c", "4a", "4b", "4c", "5a", "5b",
];

/// Speaker-related capabilities are inference the ear does not attempt.
const OUT_OF_SCOPE: [&str; 3] = ["3a", "3b", "3c"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub item: String,
    pub verdict: VerdictKind,
    /// `<log file>:<line>` pointers to the messages the verdict rests on.
    pub evidence: Vec<String>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub items: Vec<Verdict>,
}

impl Scorecard {
    pub fn get(&self, item: &str) -> Option<&Verdict> {
        self.items.iter().find(|v| v.item == item)
    }

    pub fn all_in_scope_pass(&self) -> bool {
        self.items.iter().all(|v| match v.verdict {
            VerdictKind::Pass => true,
            VerdictKind::NotApplicable => OUT_OF_SCOPE.contains(&v.item.as_str()),
            VerdictKind::Fail => false,
        })
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| item | verdict | detail | evidence |\n|---|---|---|---|\n");
        for v in &self.items {
            let verdict = match v.verdict {
                VerdictKind::Pass => "pass",
                VerdictKind::Fail => "fail",
                VerdictKind::NotApplicable => "not_applicable",
            };
            let evidence = v.evidence.iter().take(3).cloned().collect::<Vec<_>>().join(", ");
            let _ = writeln!(out, "| {} | {} | {} | {} |", v.item, verdict, v.detail.replace('|', "/"), evidence);
        }
        out
    }
}

/// One scenario's log, ready for checking.
struct Run {
    file: String,
    meta: RunMeta,
    log: Vec<Message>,
}

impl Run {
    fn pointer(&self, index: usize) -> String {
        format!("{}:{}", self.file, index + 1)
    }

    fn events(&self) -> impl Iterator<Item = (usize, &EventMessage)> {
        self.log.iter().enumerate().filter_map(|(i, m)| match m {
            Message::Event(e) => Some((i, e)),
            _ => None,
        })
    }

    fn heard(&self, kind: EventKind) -> impl Iterator<Item = (usize, &EventMessage, &HeardObject)> {
        self.events()
            .filter(move |(_, e)| e.kind == kind)
            .filter_map(|(i, e)| e.heard.as_ref().map(|h| (i, e, h)))
    }

    /// Commands paired with their acks, in log order.
    fn exchanges(&self) -> Vec<(usize, &CommandMessage, &AckMessage)> {
        let mut out = Vec::new();
        for (i, m) in self.log.iter().enumerate() {
            if let (Message::Command(c), Some(Message::Ack(a))) = (m, self.log.get(i + 1)) {
                out.push((i + 1, c, a));
            }
        }
        out
    }
}

struct Outcome {
    verdict: VerdictKind,
    evidence: Vec<String>,
    detail: String,
}

fn pass(evidence: Vec<String>, detail: impl Into<String>) -> Outcome {
    Outcome {
        verdict: VerdictKind::Pass,
        evidence,
        detail: detail.into(),
    }
}

fn fail(evidence: Vec<String>, detail: impl Into<String>) -> Outcome {
    Outcome {
        verdict: VerdictKind::Fail,
        evidence,
        detail: detail.into(),
    }
}

fn not_applicable(detail: impl Into<String>) -> Outcome {
    Outcome {
        verdict: VerdictKind::NotApplicable,
        evidence: Vec::new(),
        detail: detail.into(),
    }
}

fn judge(ok: bool, evidence: Vec<String>, detail: String) -> Outcome {
    if ok {
        pass(evidence, detail)
    } else {
        fail(evidence, detail)
    }
}

/// Judges every capability from the logs in `dir`.
pub fn evaluate_scorecard(dir: &Path) -> Result<Scorecard, HarnessError> {
    let mut runs = Vec::new();
    let mut metas: Vec<_> = std::fs::read_dir(dir)
        .map_err(|source| HarnessError::Io {
            path: dir.display().to_string(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".meta.json"))
        .collect();
    metas.sort();
    for meta_path in metas {
        let meta = read_meta(&meta_path)?;
        let file = format!("{}.jsonl", meta.scenario);
        let log = read_log(&dir.join(&file))?;
        runs.push(Run { file, meta, log });
    }
    Ok(score_runs(&runs))
}

fn score_runs(runs: &[Run]) -> Scorecard {
    let items = ITEM_IDS
        .iter()
        .map(|&item| {
            let covering: Vec<&Run> = runs.iter().filter(|r| r.meta.covers.iter().any(|c| c == item)).collect();
            let outcome = if OUT_OF_SCOPE.contains(&item) {
                not_applicable("speaker-related inference is outside the ear's scope")
            } else if covering.is_empty() {
                not_applicable("no scenario covers this item")
            } else {
                let results: Vec<Outcome> = covering.iter().map(|r| check(item, r)).collect();
                merge(results)
            };
            Verdict {
                item: item.to_string(),
                verdict: outcome.verdict,
                evidence: outcome.evidence,
                detail: outcome.detail,
            }
        })
        .collect();
    Scorecard { items }
}

/// Any failure fails the item; otherwise any pass passes it.
fn merge(results: Vec<Outcome>) -> Outcome {
    let worst = if results.iter().any(|r| r.verdict == VerdictKind::Fail) {
        VerdictKind::Fail
    } else if results.iter().any(|r| r.verdict == VerdictKind::Pass) {
        VerdictKind::Pass
    } else {
        VerdictKind::NotApplicable
    };
    let chosen: Vec<&Outcome> = results.iter().filter(|r| r.verdict == worst).collect();
    Outcome {
        verdict: worst,
        evidence: chosen.iter().flat_map(|r| r.evidence.iter().cloned()).take(6).collect(),
        detail: chosen.iter().map(|r| r.detail.as_str()).collect::<Vec<_>>().join("; "),
    }
}

fn check(item: &str, run: &Run) -> Outcome {
    match item {
        "1a" => check_binaural(run),
        "1b" => check_frequency(run),
        "1c" => check_front(run),
        "1d" => check_sensitivity(run),
        "2a" => check_ambient(run),
        "2b" => check_lock_on(run),
        "2c" => check_found(run, ListKind::ShortTermPrimary),
        "2d" => check_found(run, ListKind::ShortTermSecondary),
        "2e" => check_decay(run),
        "2f" => check_follow(run),
        "2g" => check_doppler(run),
        "4a" => check_name(run),
        "4b" => check_focus_only(run),
        "4c" => check_switch(run),
        "5a" => check_alarm_ids(run),
        "5b" => check_novelty(run),
        _ => not_applicable("no check"),
    }
}

/// Error of a report against a true world bearing, forgiving front/back while unresolved.
fn azimuth_error(h: &HeardObject, truth_world: f64) -> f64 {
    let rel_truth = wrap_deg(truth_world - h.heading_deg);
    let direct = wrap_deg(h.azimuth_deg - rel_truth).abs();
    if h.front_back_resolved {
        direct
    } else {
        direct.min(wrap_deg(mirror_front_back(h.azimuth_deg) - rel_truth).abs())
    }
}

/// The scene source a report most plausibly describes: the active one nearest in bearing.
fn truth_for<'a>(scene: &'a AuditoryScene, h: &HeardObject, t: f64) -> Option<&'a SoundSource> {
    scene
        .sources
        .iter()
        .filter(|s| s.is_active(t))
        .min_by(|a, b| {
            azimuth_error(h, a.state_at(t).azimuth_deg).total_cmp(&azimuth_error(h, b.state_at(t).azimuth_deg))
        })
}

fn fraction(ok: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        ok as f64 / total as f64
    }
}

fn check_binaural(run: &Run) -> Outcome {
    let (mut ok, mut total, mut evidence) = (0, 0, Vec::new());
    for (i, e, h) in run.heard(EventKind::Sound) {
        let Some(src) = truth_for(&run.meta.scene, h, e.t) else { continue };
        let rel = wrap_deg(src.state_at(e.t).azimuth_deg - h.heading_deg);
        if rel.abs() < 15.0 || (180.0 - rel.abs()) < 15.0 {
            continue;
        }
        total += 1;
        if rel.signum() == h.azimuth_deg.signum() {
            ok += 1;
            if evidence.len() < 3 {
                evidence.push(run.pointer(i));
            }
        }
    }
    let f = fraction(ok, total);
    judge(
        total > 0 && f >= 0.95,
        evidence,
        format!("{ok}/{total} lateral reports on the correct side"),
    )
}

fn check_frequency(run: &Run) -> Outcome {
    let ear = &run.meta.config.ear;
    let centers = ear.channel_centers();
    let library = world_library(&centers);
    let covers_range = ear.low_hz <= 100.0 && ear.high_hz >= 8000.0;
    let (mut ok, mut total, mut evidence) = (0, 0, Vec::new());
    for (i, e, h) in run.heard(EventKind::Sound) {
        let Some(src) = truth_for(&run.meta.scene, h, e.t) else { continue };
        let Some(template) = library.template(&src.template) else { continue };
        let mass: f64 = template.spectral_signature.iter().sum();
        if mass <= 0.0 {
            continue;
        }
        let log_centroid: f64 = template
            .spectral_signature
            .iter()
            .zip(&centers)
            .map(|(w, f)| w * f.log2())
            .sum::<f64>()
            / mass;
        total += 1;
        // within a third of an octave of where the sound really is
        if (h.centroid_hz.max(1.0).log2() - log_centroid).abs() <= 1.0 / 3.0 {
            ok += 1;
            if evidence.len() < 3 {
                evidence.push(run.pointer(i));
            }
        }
    }
    let f = fraction(ok, total);
    judge(
        covers_range && total > 0 && f >= 0.9,
        evidence,
        format!(
            "{ok}/{total} reports place energy within 1/3 octave; bank {:.0}-{:.0} Hz",
            ear.low_hz, ear.high_hz
        ),
    )
}

fn check_front(run: &Run) -> Outcome {
    let mut front = Vec::new();
    let mut side = Vec::new();
    let mut evidence = Vec::new();
    for (i, e, h) in run.heard(EventKind::Sound) {
        let Some(src) = truth_for(&run.meta.scene, h, e.t) else { continue };
        let rel = wrap_deg(src.state_at(e.t).azimuth_deg - h.heading_deg).abs();
        if rel <= 30.0 {
            front.push(h.azimuth_sigma_deg);
            if evidence.is_empty() {
                evidence.push(run.pointer(i));
            }
        } else if (60.0..=120.0).contains(&rel) {
            side.push(h.azimuth_sigma_deg);
            if evidence.len() < 2 {
                evidence.push(run.pointer(i));
            }
        }
    }
    if front.is_empty() || side.is_empty() {
        return fail(evidence, "needs reports from both the front and the sides");
    }
    let worst_front = front.iter().cloned().fold(0.0, f64::max);
    let best_side = side.iter().cloned().fold(f64::INFINITY, f64::min);
    judge(
        worst_front < best_side,
        evidence,
        format!("front sigma <= {worst_front:.1} deg, side sigma >= {best_side:.1} deg"),
    )
}

/// Whether a source would leave any trace in the cochleagram, sounding alone.
fn renders_audibly(run: &Run, src_index: usize) -> bool {
    let config = &run.meta.config;
    let scene = &run.meta.scene;
    let src = &scene.sources[src_index];
    let library = world_library(&config.ear.channel_centers());
    let alone = AuditoryScene {
        sources: vec![src.clone()],
        ..scene.clone()
    };
    let t = src.onset_s + 0.5 * src.duration_s;
    let contribs = source_contributions(&alone, &library, &config.ear, 0.0, t);
    let frame = apply_sensitivity(&mix_frame(t, scene.background_db, &config.ear, &contribs), &config.ear);
    (0..frame.channels()).any(|ch| frame.level_above_background(ch) >= config.segregation.active_db)
}

fn check_sensitivity(run: &Run) -> Outcome {
    if run.meta.config.ear.sensitivity == Sensitivity::Normal {
        return not_applicable("run uses the normal sensitivity curve");
    }
    let scene = &run.meta.scene;
    let mut heard_sources = BTreeSet::new();
    let mut evidence = Vec::new();
    for (i, e, h) in run.heard(EventKind::Sound) {
        if let Some(src) = truth_for(scene, h, e.t) {
            if azimuth_error(h, src.state_at(e.t).azimuth_deg) <= 20.0 && heard_sources.insert(src.id.clone()) {
                evidence.push(run.pointer(i));
            }
        }
    }
    let mut agree = true;
    let (mut audible, mut inaudible) = (0, 0);
    let mut detail = Vec::new();
    for (k, src) in scene.sources.iter().enumerate() {
        let oracle = renders_audibly(run, k);
        let detected = heard_sources.contains(&src.id);
        if oracle {
            audible += 1;
        } else {
            inaudible += 1;
        }
        agree &= oracle == detected;
        detail.push(format!("{} expected {} heard {}", src.id, oracle, detected));
    }
    judge(agree && audible > 0 && inaudible > 0, evidence, detail.join(", "))
}

fn check_ambient(run: &Run) -> Outcome {
    let loc = &run.meta.config.localization;
    let (mut located, mut named, mut distanced, mut with_distance, mut total) = (0, 0, 0, 0, 0);
    let mut evidence = Vec::new();
    for (i, e, h) in run.heard(EventKind::Sound) {
        let Some(src) = truth_for(&run.meta.scene, h, e.t) else { continue };
        let state = src.state_at(e.t);
        total += 1;
        let rel = wrap_deg(state.azimuth_deg - h.heading_deg);
        let bound = loc.truncate_sigmas * sector_sigma(rel, loc) + 1.0;
        if azimuth_error(h, state.azimuth_deg) <= bound {
            located += 1;
        }
        if h.template.as_ref() == Some(&src.template) {
            named += 1;
            if evidence.len() < 3 {
                evidence.push(run.pointer(i));
            }
        }
        if let Some(d) = h.distance_m {
            with_distance += 1;
            if d / state.distance_m <= 2.0 && state.distance_m / d <= 2.0 {
                distanced += 1;
            }
        }
    }
    let ok = total > 0
        && fraction(located, total) >= 0.9
        && fraction(named, total) >= 0.8
        && with_distance > 0
        && fraction(distanced, with_distance) >= 0.8;
    judge(
        ok,
        evidence,
        format!("{total} reports: {located} within sector bound, {named} correctly named, {distanced}/{with_distance} distances within 2x"),
    )
}

/// Explicit focus over time as told by the command acks: (t, stream id).
fn focus_changes(run: &Run) -> Vec<(usize, f64, String)> {
    let mut out = Vec::new();
    for (i, c, a) in run.exchanges() {
        if c.cmd != Command::ListenPrimary || !a.is_ok() {
            continue;
        }
        if let Some(Value::String(id)) = a.payload.as_ref().and_then(|p| p.get("focus")) {
            out.push((i, a.t, id.clone()));
        }
    }
    out
}

fn focus_at(changes: &[(usize, f64, String)], index: usize) -> Option<&str> {
    changes.iter().rev().find(|(i, _, _)| *i < index).map(|(_, _, id)| id.as_str())
}

fn word_reports(run: &Run) -> Vec<(usize, f64, String, Vec<(String, f64)>)> {
    run.heard(EventKind::Sound)
        .filter_map(|(i, e, h)| {
            let words: Vec<(String, f64)> = h.words().map(|m| (m.w.clone(), m.t)).collect();
            (!words.is_empty()).then(|| (i, e.t, h.stream_id.clone(), words))
        })
        .collect()
}

fn check_lock_on(run: &Run) -> Outcome {
    let changes = focus_changes(run);
    let Some((first_index, focus_t, target)) = changes.first().cloned() else {
        return fail(Vec::new(), "listener never locked on to a stream");
    };
    let reports = word_reports(run);
    let Some(speaker) = run.meta.scene.sources.iter().find(|s| s.speech.is_some()) else {
        return fail(Vec::new(), "scene has no speaker");
    };
    let end = run.meta.scene.duration_s;
    let expected: Vec<(String, f64)> = speaker
        .words_between(focus_t + 0.1, end)
        .into_iter()
        .filter(|(_, t)| *t > focus_t + 0.1 && *t < end - 0.1)
        .collect();
    let delivered: BTreeSet<(String, i64)> = reports
        .iter()
        .filter(|(i, _, id, _)| *i > first_index && *id == target)
        .flat_map(|(_, _, _, words)| words.iter().map(|(w, t)| (w.to_lowercase(), (t * 1000.0).round() as i64)))
        .collect();
    let got = expected
        .iter()
        .filter(|(w, t)| delivered.contains(&(w.to_lowercase(), (t * 1000.0).round() as i64)))
        .count();
    let strays = reports.iter().filter(|(i, _, id, _)| *i > first_index && *id != target).count();
    let ended = run
        .events()
        .any(|(_, e)| e.kind == EventKind::StreamEnded && e.stream_id.as_deref() == Some(&target) && e.t < end - 1.5);
    let coverage = fraction(got, expected.len());
    judge(
        !expected.is_empty() && coverage >= 0.9 && strays == 0 && !ended,
        vec![run.pointer(first_index)],
        format!(
            "stream {target}: {got}/{} words followed, {strays} stray word reports, lost: {ended}",
            expected.len()
        ),
    )
}

/// Entry ids handed out by load commands, with the list they went to and when.
fn loaded_entries(run: &Run) -> BTreeMap<String, (ListKind, f64)> {
    let mut out = BTreeMap::new();
    for (_, c, a) in run.exchanges() {
        let list = match c.cmd {
            Command::ListenPrimary => Some(ListKind::ShortTermPrimary),
            Command::ListenSecondary => Some(ListKind::ShortTermSecondary),
            Command::Vigilance => Some(ListKind::LongTerm),
            Command::ListAdd => c.args.get("list").and_then(Value::as_str).and_then(ListKind::parse),
            _ => None,
        };
        let (Some(list), Some(p)) = (list, &a.payload) else { continue };
        let ids = p
            .get("entry_id")
            .into_iter()
            .chain(p.get("entry_ids").and_then(Value::as_array).into_iter().flatten());
        for id in ids.filter_map(Value::as_str) {
            out.entry(id.to_string()).or_insert((list, a.t));
        }
    }
    out
}

fn check_found(run: &Run, list: ListKind) -> Outcome {
    let loaded = loaded_entries(run);
    let mut evidence = Vec::new();
    let mut found = 0;
    let mut orphans = 0;
    for (i, e, _) in run.heard(EventKind::Found) {
        let Some(entry) = &e.matched_entry else {
            orphans += 1;
            continue;
        };
        match loaded.get(entry) {
            Some((kind, t)) if *t <= e.t => {
                if *kind == list && e.list_kind == Some(list) {
                    found += 1;
                    if evidence.len() < 3 {
                        evidence.push(run.pointer(i));
                    }
                }
            }
            _ => orphans += 1,
        }
    }
    judge(
        found > 0 && orphans == 0,
        evidence,
        format!("{found} FOUND events from the list, {orphans} without a prior load"),
    )
}

/// Probe windows: word tokens grouped where onsets are less than a minute apart.
fn probe_windows(src: &SoundSource, end: f64) -> Vec<Vec<(String, f64)>> {
    let mut tokens = src.words_between(0.0, end);
    tokens.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut windows: Vec<Vec<(String, f64)>> = Vec::new();
    for tok in tokens {
        match windows.last_mut() {
            Some(w) if tok.1 - w.last().map_or(0.0, |x| x.1) < 60.0 => w.push(tok),
            _ => windows.push(vec![tok]),
        }
    }
    windows
}

/// Per-window FOUND rate and latency for one entry and word.
pub struct DecayWindow {
    pub start: f64,
    pub probes: usize,
    pub rate: f64,
    pub mean_latency: f64,
    pub model_rate: f64,
}

pub fn decay_windows(
    meta: &RunMeta,
    log: &[Message],
    entry: &str,
    word: &str,
    load_t: f64,
    list: ListKind,
) -> Vec<DecayWindow> {
    let cfg = &meta.config.attention;
    let half_life = cfg.half_life(list);
    let mut hits: BTreeMap<i64, f64> = BTreeMap::new();
    for m in log {
        let Message::Event(e) = m else { continue };
        if e.kind != EventKind::Found || e.matched_entry.as_deref() != Some(entry) {
            continue;
        }
        if let Some(h) = &e.heard {
            if let Some(t) = h.words().filter(|w| w.w.eq_ignore_ascii_case(word)).map(|w| w.t).reduce(f64::min) {
                hits.entry((t * 1000.0).round() as i64).or_insert(e.t - t);
            }
        }
    }
    let mut out = Vec::new();
    for src in meta.scene.sources.iter().filter(|s| s.speech.is_some()) {
        for window in probe_windows(src, meta.scene.duration_s) {
            let probes: Vec<f64> = window
                .iter()
                .filter(|(w, _)| w.eq_ignore_ascii_case(word))
                .map(|(_, t)| *t)
                .collect();
            if probes.is_empty() {
                continue;
            }
            let latencies: Vec<f64> = probes
                .iter()
                .filter_map(|t| hits.get(&((t * 1000.0).round() as i64)).copied())
                .collect();
            let model_rate = probes
                .iter()
                .map(|t| recognition_probability(activation_at(t - load_t, half_life), cfg))
                .sum::<f64>()
                / probes.len() as f64;
            out.push(DecayWindow {
                start: probes[0],
                probes: probes.len(),
                rate: latencies.len() as f64 / probes.len() as f64,
                mean_latency: if latencies.is_empty() {
                    f64::NAN
                } else {
                    latencies.iter().sum::<f64>() / latencies.len() as f64
                },
                model_rate,
            });
        }
    }
    out.sort_by(|a, b| a.start.total_cmp(&b.start));
    out
}

fn check_decay(run: &Run) -> Outcome {
    if run.meta.config.super_ear || run.meta.config.attention.super_ear {
        return not_applicable("decay is disabled in super-ear mode");
    }
    let mut decaying = None;
    let mut permanent = None;
    for (i, c, a) in run.exchanges() {
        let Some(id) = a.payload.as_ref().and_then(|p| p.get("entry_id")).and_then(Value::as_str) else {
            continue;
        };
        let word = c.args.get("pattern").and_then(Value::as_str).unwrap_or_default().to_string();
        let perm = c.args.get("permanent").and_then(Value::as_bool) == Some(true);
        let list = match c.cmd {
            Command::ListenPrimary => ListKind::ShortTermPrimary,
            Command::ListenSecondary => ListKind::ShortTermSecondary,
            Command::Vigilance => ListKind::LongTerm,
            Command::ListAdd => match c.args.get("list").and_then(Value::as_str).and_then(ListKind::parse) {
                Some(l) => l,
                None => continue,
            },
            _ => continue,
        };
        let slot = if perm { &mut permanent } else { &mut decaying };
        if slot.is_none() {
            *slot = Some((i, id.to_string(), word, a.t, list));
        }
    }
    let Some((i, entry, word, load_t, list)) = decaying else {
        return fail(Vec::new(), "no decaying entry was loaded");
    };
    let windows = decay_windows(&run.meta, &run.log, &entry, &word, load_t, list);
    if windows.len() < 2 {
        return fail(vec![run.pointer(i)], "needs at least two probe windows");
    }
    let rates_fall = windows.windows(2).all(|w| w[1].rate < w[0].rate);
    let latency_rises = windows.windows(2).all(|w| w[1].mean_latency > w[0].mean_latency);
    let near_model = windows.iter().all(|w| (w.rate - w.model_rate).abs() <= 0.03);
    let mut perm_ok = true;
    let mut perm_detail = String::new();
    if let Some((_, pentry, pword, pload, plist)) = permanent {
        let pw = decay_windows(&run.meta, &run.log, &pentry, &pword, pload, plist);
        let hi = pw.iter().map(|w| w.rate).fold(f64::MIN, f64::max);
        let lo = pw.iter().map(|w| w.rate).fold(f64::MAX, f64::min);
        perm_ok = !pw.is_empty() && hi - lo < 0.01;
        perm_detail = format!("; permanent `{pword}` spread {:.1} pts", 100.0 * (hi - lo));
    }
    let summary = windows
        .iter()
        .map(|w| {
            format!(
                "t={:.0}: {:.1}% (model {:.1}%), {:.2}s over {}",
                w.start,
                100.0 * w.rate,
                100.0 * w.model_rate,
                w.mean_latency,
                w.probes
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    judge(
        rates_fall && latency_rises && near_model && perm_ok,
        vec![run.pointer(i)],
        format!("{summary}{perm_detail}"),
    )
}

fn check_follow(run: &Run) -> Outcome {
    let scene = &run.meta.scene;
    let loc = &run.meta.config.localization;
    let mut per_source: BTreeMap<String, Vec<(String, bool)>> = BTreeMap::new();
    let mut evidence = Vec::new();
    for (i, e, h) in run.heard(EventKind::Sound) {
        let Some(src) = truth_for(scene, h, e.t) else { continue };
        let truth = src.state_at(e.t).azimuth_deg;
        let rel = wrap_deg(truth - h.heading_deg);
        let bound = loc.truncate_sigmas * sector_sigma(rel, loc) + 5.0;
        per_source
            .entry(src.id.clone())
            .or_default()
            .push((h.stream_id.clone(), azimuth_error(h, truth) <= bound));
        if evidence.len() < 3 {
            evidence.push(run.pointer(i));
        }
    }
    let moved = scene.sources.iter().any(|s| s.trajectory.len() > 1)
        || run.events().any(|(_, e)| e.kind == EventKind::HeadDone);
    let mut ok = moved && !per_source.is_empty();
    let mut detail = Vec::new();
    for (src, reports) in &per_source {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (id, _) in reports {
            *counts.entry(id.as_str()).or_default() += 1;
        }
        let main = counts.values().max().copied().unwrap_or(0);
        let accurate = reports.iter().filter(|(_, a)| *a).count();
        let kept = fraction(main, reports.len());
        let acc = fraction(accurate, reports.len());
        ok &= kept >= 0.9 && acc >= 0.9;
        detail.push(format!("{src}: one stream for {:.0}%, on bearing {:.0}%", 100.0 * kept, 100.0 * acc));
    }
    judge(ok, evidence, detail.join(", "))
}

fn check_doppler(run: &Run) -> Outcome {
    let scene = &run.meta.scene;
    let c = run.meta.config.ear.speed_of_sound_mps;
    let (mut ok, mut named, mut total) = (0, 0, 0);
    let mut evidence = Vec::new();
    for (i, e, h) in run.heard(EventKind::Sound) {
        let Some(src) = truth_for(scene, h, e.t) else { continue };
        let state = src.state_at(e.t);
        if state.radial_velocity_mps.abs() < 5.0 || e.t - src.onset_s < 0.5 {
            continue;
        }
        total += 1;
        let truth = c / (c + state.radial_velocity_mps);
        if (h.doppler_ratio - truth).abs() <= 0.1 * truth {
            ok += 1;
            if evidence.len() < 3 {
                evidence.push(run.pointer(i));
            }
        }
        if h.template.as_ref() == Some(&src.template) {
            named += 1;
        }
    }
    judge(
        total > 0 && fraction(ok, total) >= 0.8 && fraction(named, total) >= 0.8,
        evidence,
        format!("{ok}/{total} moving reports within 10% of the true ratio, {named} named correctly"),
    )
}

fn check_name(run: &Run) -> Outcome {
    let changes = focus_changes(run);
    let mut evidence = Vec::new();
    for (i, e, h) in run.heard(EventKind::Interrupt) {
        if e.reason.as_deref() != Some("name") {
            continue;
        }
        let unattended = focus_at(&changes, i) != Some(h.stream_id.as_str());
        if unattended && h.words().next().is_some() {
            evidence.push(run.pointer(i));
        }
    }
    let n = evidence.len();
    judge(n > 0, evidence, format!("{n} name interrupts from unattended streams"))
}

fn check_focus_only(run: &Run) -> Outcome {
    let changes = focus_changes(run);
    let Some(first) = changes.first().map(|c| c.0) else {
        return fail(Vec::new(), "no explicit focus");
    };
    let reports: Vec<_> = word_reports(run).into_iter().filter(|r| r.0 > first).collect();
    let stray: Vec<String> = reports
        .iter()
        .filter(|(i, _, id, _)| focus_at(&changes, *i) != Some(id.as_str()))
        .map(|(i, ..)| run.pointer(*i))
        .collect();
    let evidence = if stray.is_empty() {
        reports.iter().take(3).map(|r| run.pointer(r.0)).collect()
    } else {
        stray.clone()
    };
    judge(
        !reports.is_empty() && stray.is_empty(),
        evidence,
        format!("{} word reports after focusing, {} from unfocused streams", reports.len(), stray.len()),
    )
}

/// The ordered milestones of a name-triggered switch and refocus, as log indices.
pub fn switch_sequence(log: &[Message]) -> Result<[usize; 5], String> {
    let find_from = |start: usize, pred: &dyn Fn(&Message) -> bool| -> Option<usize> {
        log.iter().enumerate().skip(start).find(|(_, m)| pred(m)).map(|(i, _)| i)
    };
    let ack_focus = |m: &Message| -> Option<String> {
        match m {
            Message::Ack(a) if a.is_ok() => a
                .payload
                .as_ref()
                .and_then(|p| p.get("focus"))
                .and_then(Value::as_str)
                .map(str::to_string),
            _ => None,
        }
    };
    let words_from = |m: &Message, id: &str| -> bool {
        matches!(m, Message::Event(e) if e.kind == EventKind::Sound
            && e.heard.as_ref().is_some_and(|h| h.stream_id == id && h.words().next().is_some()))
    };
    let original_at = find_from(0, &|m| ack_focus(m).is_some()).ok_or("no initial focus")?;
    let original = ack_focus(&log[original_at]).unwrap_or_default();
    let interrupt = find_from(original_at, &|m| {
        matches!(m, Message::Event(e) if e.kind == EventKind::Interrupt && e.reason.as_deref() == Some("name")
            && e.heard.as_ref().is_some_and(|h| h.stream_id != original))
    })
    .ok_or("no name interrupt from another stream")?;
    let Message::Event(ie) = &log[interrupt] else { unreachable!() };
    let other = ie.stream_id.clone().unwrap_or_default();
    let switched = find_from(interrupt, &|m| ack_focus(m).as_deref() == Some(other.as_str())).ok_or("no switch")?;
    let heard_other = find_from(switched, &|m| words_from(m, &other)).ok_or("no words from the new stream")?;
    let back = find_from(heard_other, &|m| ack_focus(m).as_deref() == Some(original.as_str()))
        .ok_or("no refocus on the original stream")?;
    let heard_back = find_from(back, &|m| words_from(m, &original)).ok_or("no words after refocus")?;
    Ok([interrupt, switched, heard_other, back, heard_back])
}

fn check_switch(run: &Run) -> Outcome {
    match switch_sequence(&run.log) {
        Ok(steps) => pass(
            steps.iter().map(|&i| run.pointer(i)).collect(),
            "interrupt, switch, new-stream words, refocus, original-stream words",
        ),
        Err(why) => fail(Vec::new(), why),
    }
}

fn alarm_key(h: &HeardObject) -> String {
    h.template
        .as_ref()
        .map(|t| t.0.clone())
        .unwrap_or_else(|| crate::attention::alarm_type(h))
}

fn check_alarm_ids(run: &Run) -> Outcome {
    let mut ids_by_type: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut evidence = Vec::new();
    for (i, _, h) in run.heard(EventKind::Alarm) {
        if ids_by_type.entry(alarm_key(h)).or_default().insert(h.id.clone()) {
            evidence.push(run.pointer(i));
        }
    }
    let mut owners: BTreeMap<&String, &String> = BTreeMap::new();
    let mut clash = false;
    for (ty, ids) in &ids_by_type {
        for id in ids {
            clash |= owners.insert(id, ty).is_some_and(|other| other != ty);
        }
    }
    let scene_types: BTreeSet<String> = run
        .meta
        .scene
        .sources
        .iter()
        .filter(|s| s.is_alarm && s.station.is_none())
        .map(|s| s.template.0.clone())
        .collect();
    let programmed = builtin_ontology(&run.meta.config.ear.channel_centers());
    let delivered_known: BTreeSet<&String> = ids_by_type.keys().collect();
    let missing: Vec<&String> = scene_types
        .iter()
        .filter(|t| programmed.template(&(*t).as_str().into()).is_some() && !delivered_known.contains(t))
        .collect();
    judge(
        !ids_by_type.is_empty() && !clash && missing.is_empty(),
        evidence,
        format!(
            "{} alarm types delivered, ids shared across types: {clash}, missing: {missing:?}",
            ids_by_type.len()
        ),
    )
}

fn check_novelty(run: &Run) -> Outcome {
    let programmed = builtin_ontology(&run.meta.config.ear.channel_centers());
    let (mut new, mut known, mut wrong) = (0, 0, 0);
    let mut evidence = Vec::new();
    for (i, _, h) in run.heard(EventKind::Alarm) {
        // alarms arrive after consolidation, often once the source has fallen silent
        let Some(src) = truth_for(&run.meta.scene, h, h.onset_s) else { continue };
        let is_programmed = programmed.template(&src.template).is_some();
        let expected = if is_programmed {
            Novelty::KnownType
        } else {
            Novelty::NewType
        };
        if h.novelty == expected {
            if is_programmed {
                known += 1;
            } else {
                new += 1;
            }
            evidence.push(run.pointer(i));
        } else {
            wrong += 1;
        }
    }
    judge(
        new > 0 && known > 0 && wrong == 0,
        evidence,
        format!("{new} new_type and {known} known_type alarms correct, {wrong} wrong"),
    )
}
