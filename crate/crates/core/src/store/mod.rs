//! Event-sourced annotation store.
//!
//! Every mutation is an [`Event`] appended to a JSON-lines log; the in-memory
//! state is a fold over the log, so reopening a store replays to an identical
//! state.

mod sampler;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{
    cost_per_tp, devset_metrics, expected_human_workload, required_corpus_size, CostParams, DevSet, DevsetEvaluation,
    Money,
};
use crate::gateway::{LabelLine, LabeledResult, Usage};
use crate::pattern::{quad_key, CandidateInstance, QuadKey, PREP};

pub use sampler::{Admission, SamplerState, VerbQuota};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Llm,
    Extrapolated,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Human => "human",
            Source::Llm => "llm",
            Source::Extrapolated => "extrapolated",
        }
    }
}

impl FromStr for Source {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "human" => Ok(Source::Human),
            "llm" => Ok(Source::Llm),
            "extrapolated" => Ok(Source::Extrapolated),
            _ => Err(format!("unknown source {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub candidate_id: String,
    pub label: bool,
    pub annotator: String,
    pub timestamp: DateTime<Utc>,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Candidate {
        candidate: CandidateInstance,
    },
    Label {
        record: AnnotationRecord,
    },
    Skip {
        candidate_id: String,
        annotator: String,
        timestamp: DateTime<Utc>,
    },
    Retract {
        candidate_id: String,
        source: Source,
        timestamp: DateTime<Utc>,
    },
    Usage {
        usage: Usage,
    },
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown candidate {0}")]
    NotFound(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Which candidate the queue offers next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueueMode {
    /// Frequency-ordered verbs under per-class quotas.
    #[default]
    Diverse,
    /// Every unlabeled candidate in insertion order (development sets).
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreConfig {
    #[serde(default = "default_cap")]
    pub cap_per_class: usize,
    #[serde(default)]
    pub mode: QueueMode,
}

fn default_cap() -> usize {
    5
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            cap_per_class: default_cap(),
            mode: QueueMode::Diverse,
        }
    }
}

/// The folded state. Two stores replaying the same log compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreState {
    pub candidates: IndexMap<String, CandidateInstance>,
    by_verb: BTreeMap<String, Vec<String>>,
    /// Human records per candidate, oldest first, tagged with a sequence.
    human: BTreeMap<String, Vec<(u64, AnnotationRecord)>>,
    pub llm: BTreeMap<String, AnnotationRecord>,
    pub extrapolated: BTreeMap<String, AnnotationRecord>,
    pub skipped: BTreeSet<String>,
    pub sampler: SamplerState,
    pub llm_usage: Usage,
    seq: u64,
}

fn verb_of(c: &CandidateInstance) -> String {
    c.verb_lemma().unwrap_or_default()
}

fn prep_of(c: &CandidateInstance) -> String {
    c.capture(PREP).map(|p| p.form.to_lowercase()).unwrap_or_default()
}

impl StoreState {
    fn new(cap: usize) -> Self {
        StoreState {
            candidates: IndexMap::new(),
            by_verb: BTreeMap::new(),
            human: BTreeMap::new(),
            llm: BTreeMap::new(),
            extrapolated: BTreeMap::new(),
            skipped: BTreeSet::new(),
            sampler: SamplerState::new(cap),
            llm_usage: Usage::default(),
            seq: 0,
        }
    }

    fn apply(&mut self, event: &Event) {
        self.seq += 1;
        match event {
            Event::Candidate { candidate } => {
                if self.candidates.contains_key(&candidate.candidate_id) {
                    return;
                }
                let verb = verb_of(candidate);
                self.sampler.note_candidate(&verb);
                self.by_verb
                    .entry(verb)
                    .or_default()
                    .push(candidate.candidate_id.clone());
                self.candidates
                    .insert(candidate.candidate_id.clone(), candidate.clone());
            }
            Event::Label { record } => match record.source {
                Source::Human => {
                    let id = &record.candidate_id;
                    self.human
                        .entry(id.clone())
                        .or_default()
                        .push((self.seq, record.clone()));
                    self.skipped.remove(id);
                    if let Some(c) = self.candidates.get(id) {
                        let verb = verb_of(c);
                        self.rebuild_verb(&verb);
                    }
                }
                Source::Llm => {
                    self.llm.insert(record.candidate_id.clone(), record.clone());
                }
                Source::Extrapolated => {
                    self.extrapolated.insert(record.candidate_id.clone(), record.clone());
                }
            },
            Event::Skip { candidate_id, .. } => {
                self.skipped.insert(candidate_id.clone());
            }
            Event::Retract {
                candidate_id, source, ..
            } => match source {
                Source::Llm => {
                    self.llm.remove(candidate_id);
                }
                Source::Extrapolated => {
                    self.extrapolated.remove(candidate_id);
                }
                Source::Human => {
                    self.human.remove(candidate_id);
                    if let Some(c) = self.candidates.get(candidate_id) {
                        let verb = verb_of(c);
                        self.rebuild_verb(&verb);
                    }
                }
            },
            Event::Usage { usage } => self.llm_usage += *usage,
        }
    }

    fn rebuild_verb(&mut self, verb: &str) {
        let mut labeled: Vec<(u64, String, bool)> = self
            .by_verb
            .get(verb)
            .into_iter()
            .flatten()
            .filter_map(|id| {
                let (seq, rec) = self.human.get(id)?.last()?;
                Some((*seq, prep_of(&self.candidates[id]), rec.label))
            })
            .collect();
        labeled.sort_by_key(|(seq, _, _)| *seq);
        self.sampler
            .rebuild_verb(verb, labeled.iter().map(|(_, p, l)| (p.as_str(), *l)));
    }

    pub fn human_label(&self, id: &str) -> Option<&AnnotationRecord> {
        self.human.get(id).and_then(|h| h.last()).map(|(_, r)| r)
    }

    pub fn human_history(&self, id: &str) -> Vec<&AnnotationRecord> {
        self.human.get(id).into_iter().flatten().map(|(_, r)| r).collect()
    }

    /// The record that decides a candidate's label: human, then
    /// extrapolated, then model.
    pub fn effective(&self, id: &str) -> Option<&AnnotationRecord> {
        self.human_label(id)
            .or_else(|| self.extrapolated.get(id))
            .or_else(|| self.llm.get(id))
    }

    pub fn human_count(&self) -> usize {
        self.human.len()
    }
}

/// Candidates sharing a 4-tuple and the human labels seen on them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct QuadEntry {
    pub candidates: Vec<String>,
    pub human_positive: Vec<String>,
    pub human_negative: Vec<String>,
}

impl QuadEntry {
    pub fn is_conflicted(&self) -> bool {
        !self.human_positive.is_empty() && !self.human_negative.is_empty()
    }

    /// The single human class, if exactly one was observed.
    pub fn class(&self) -> Option<bool> {
        match (self.human_positive.is_empty(), self.human_negative.is_empty()) {
            (false, true) => Some(true),
            (true, false) => Some(false),
            _ => None,
        }
    }
}

pub type QuadIndex = BTreeMap<QuadKey, QuadEntry>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Conflict {
    pub quad: QuadKey,
    pub human_positive: Vec<String>,
    pub human_negative: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExtrapolationReport {
    pub added: Vec<AnnotationRecord>,
    /// Extrapolated labels withdrawn because their quad became conflicted,
    /// changed class, or the candidate got a human label.
    pub retracted: Vec<String>,
    pub conflicts: Vec<Conflict>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportFilter {
    #[serde(default)]
    pub label: Option<bool>,
    #[serde(default)]
    pub sources: Option<BTreeSet<Source>>,
}

impl ExportFilter {
    /// Parse `human+positive`, `extrapolated`, `llm,human`, `negative`, `all`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut f = ExportFilter::default();
        for tok in text.split(['+', ',', ' ']).map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "all" => {}
                "positive" | "true" => f.label = Some(true),
                "negative" | "false" => f.label = Some(false),
                other => {
                    f.sources.get_or_insert_with(BTreeSet::new).insert(other.parse()?);
                }
            }
        }
        Ok(f)
    }

    fn accepts(&self, r: &AnnotationRecord) -> bool {
        self.label.is_none_or(|l| l == r.label) && self.sources.as_ref().is_none_or(|s| s.contains(&r.source))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportLine {
    pub candidate_id: String,
    pub sentence_id: String,
    pub text: String,
    pub verb: Option<String>,
    pub dobj: Option<String>,
    pub prep: Option<String>,
    pub pobj: Option<String>,
    pub positions: BTreeMap<String, usize>,
    pub label: bool,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportCount {
    pub label: bool,
    pub source: Source,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Export {
    pub lines: Vec<ExportLine>,
    pub counts: Vec<ExportCount>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub mode: QueueMode,
    pub cap_per_class: usize,
    pub candidates: usize,
    pub human_labeled: usize,
    pub human_positive: usize,
    pub human_negative: usize,
    pub skipped: usize,
    pub extrapolated: usize,
    pub llm: usize,
    /// Verbs in queue order.
    pub verbs: Vec<VerbQuota>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostProjection {
    /// Model labels scored against human labels.
    pub evaluation: DevsetEvaluation,
    pub cost_per_tp: Option<Money>,
    pub tp_required: u64,
    pub corpus_size: Option<u64>,
    pub human_workload: Option<u64>,
}

struct LogWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

pub struct Store {
    state: StoreState,
    config: StoreConfig,
    log: Option<LogWriter>,
}

impl Store {
    pub fn in_memory(config: StoreConfig) -> Self {
        Store {
            state: StoreState::new(config.cap_per_class),
            config,
            log: None,
        }
    }

    /// Replay the log at `path` (created if missing) and append to it.
    pub fn open(path: impl AsRef<Path>, config: StoreConfig) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let mut state = StoreState::new(config.cap_per_class);
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: Event = serde_json::from_str(&line).map_err(|source| StoreError::Corrupt {
                    path: path.clone(),
                    line: i + 1,
                    source,
                })?;
                state.apply(&event);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(Store {
            state,
            config,
            log: Some(LogWriter {
                path,
                out: BufWriter::new(file),
            }),
        })
    }

    pub fn state(&self) -> &StoreState {
        &self.state
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    fn record(&mut self, events: &[Event]) -> Result<(), StoreError> {
        if let Some(log) = &mut self.log {
            let io = |source| StoreError::Io {
                path: log.path.clone(),
                source,
            };
            for e in events {
                let line = serde_json::to_string(e).expect("events serialize");
                log.out.write_all(line.as_bytes()).map_err(io)?;
                log.out.write_all(b"\n").map_err(io)?;
            }
            log.out.flush().map_err(io)?;
        }
        for e in events {
            self.state.apply(e);
        }
        Ok(())
    }

    /// Add candidates not yet present; returns how many were new.
    pub fn add_candidates(
        &mut self,
        candidates: impl IntoIterator<Item = CandidateInstance>,
    ) -> Result<usize, StoreError> {
        let mut seen = BTreeSet::new();
        let events: Vec<Event> = candidates
            .into_iter()
            .filter(|c| !self.state.candidates.contains_key(&c.candidate_id) && seen.insert(c.candidate_id.clone()))
            .map(|candidate| Event::Candidate { candidate })
            .collect();
        self.record(&events)?;
        Ok(events.len())
    }

    pub fn candidate(&self, id: &str) -> Option<&CandidateInstance> {
        self.state.candidates.get(id)
    }

    fn open_for_queue(&self, id: &str) -> bool {
        self.state.human_label(id).is_none() && !self.state.skipped.contains(id)
    }

    /// Next candidate for human review, or `None` when the queue is empty.
    pub fn sample_next(&self) -> Option<&CandidateInstance> {
        match self.config.mode {
            QueueMode::Sequential => self
                .state
                .candidates
                .values()
                .find(|c| self.open_for_queue(&c.candidate_id)),
            QueueMode::Diverse => {
                let sampler = &self.state.sampler;
                for quota in sampler.order() {
                    if !quota.is_open(sampler.cap) {
                        continue;
                    }
                    for id in &self.state.by_verb[&quota.verb] {
                        let c = &self.state.candidates[id];
                        if self.open_for_queue(id) && quota.accepts(&prep_of(c), sampler.cap) {
                            return Some(c);
                        }
                    }
                }
                None
            }
        }
    }

    pub fn submit_label(&mut self, id: &str, label: bool, annotator: &str) -> Result<AnnotationRecord, StoreError> {
        self.submit_label_at(id, label, annotator, Utc::now())
    }

    pub fn submit_label_at(
        &mut self,
        id: &str,
        label: bool,
        annotator: &str,
        timestamp: DateTime<Utc>,
    ) -> Result<AnnotationRecord, StoreError> {
        if !self.state.candidates.contains_key(id) {
            return Err(StoreError::NotFound(id.to_string()));
        }
        let record = AnnotationRecord {
            candidate_id: id.to_string(),
            label,
            annotator: annotator.to_string(),
            timestamp,
            source: Source::Human,
        };
        self.record(&[Event::Label { record: record.clone() }])?;
        Ok(record)
    }

    pub fn skip(&mut self, id: &str, annotator: &str) -> Result<(), StoreError> {
        if !self.state.candidates.contains_key(id) {
            return Err(StoreError::NotFound(id.to_string()));
        }
        self.record(&[Event::Skip {
            candidate_id: id.to_string(),
            annotator: annotator.to_string(),
            timestamp: Utc::now(),
        }])
    }

    /// Store model labels; unknown candidates are an error and nothing is
    /// written.
    pub fn import_llm_labels(&mut self, lines: &[LabelLine], usage: Option<Usage>) -> Result<usize, StoreError> {
        if let Some(bad) = lines
            .iter()
            .find(|l| !self.state.candidates.contains_key(&l.candidate_id))
        {
            return Err(StoreError::NotFound(bad.candidate_id.clone()));
        }
        let now = Utc::now();
        let mut events: Vec<Event> = lines
            .iter()
            .map(|l| Event::Label {
                record: AnnotationRecord {
                    candidate_id: l.candidate_id.clone(),
                    label: l.label,
                    annotator: format!("{}#{}", l.model_id, l.prompt_id),
                    timestamp: now,
                    source: Source::Llm,
                },
            })
            .collect();
        if let Some(usage) = usage {
            events.push(Event::Usage { usage });
        }
        self.record(&events)?;
        Ok(lines.len())
    }

    pub fn quad_index(&self) -> QuadIndex {
        let mut index = QuadIndex::new();
        for (id, c) in &self.state.candidates {
            let Ok(quad) = quad_key(c) else { continue };
            let entry = index.entry(quad).or_default();
            entry.candidates.push(id.clone());
            match self.state.human_label(id).map(|r| r.label) {
                Some(true) => entry.human_positive.push(id.clone()),
                Some(false) => entry.human_negative.push(id.clone()),
                None => {}
            }
        }
        index
    }

    pub fn conflicts(&self) -> Vec<Conflict> {
        self.quad_index()
            .into_iter()
            .filter(|(_, e)| e.is_conflicted())
            .map(|(quad, e)| Conflict {
                quad,
                human_positive: e.human_positive,
                human_negative: e.human_negative,
            })
            .collect()
    }

    /// Propagate human labels to every unlabeled candidate sharing a
    /// 4-tuple with exactly one observed human class. Human records are
    /// never touched; running twice adds nothing.
    pub fn extrapolate(&mut self, annotator: &str) -> Result<ExtrapolationReport, StoreError> {
        let now = Utc::now();
        let mut report = ExtrapolationReport::default();
        let mut events = Vec::new();
        for (quad, entry) in self.quad_index() {
            let class = entry.class();
            for id in &entry.candidates {
                let existing = self.state.extrapolated.get(id).map(|r| r.label);
                let wanted = if self.state.human_label(id).is_some() {
                    None
                } else {
                    class
                };
                if existing == wanted {
                    continue;
                }
                if existing.is_some() {
                    report.retracted.push(id.clone());
                    events.push(Event::Retract {
                        candidate_id: id.clone(),
                        source: Source::Extrapolated,
                        timestamp: now,
                    });
                }
                if let Some(label) = wanted {
                    let record = AnnotationRecord {
                        candidate_id: id.clone(),
                        label,
                        annotator: annotator.to_string(),
                        timestamp: now,
                        source: Source::Extrapolated,
                    };
                    report.added.push(record.clone());
                    events.push(Event::Label { record });
                }
            }
            if entry.is_conflicted() {
                report.conflicts.push(Conflict {
                    quad,
                    human_positive: entry.human_positive,
                    human_negative: entry.human_negative,
                });
            }
        }
        self.record(&events)?;
        Ok(report)
    }

    /// One line per labeled candidate, using its deciding record.
    pub fn export(&self, filter: &ExportFilter) -> Export {
        let mut lines = Vec::new();
        let mut counts: BTreeMap<(bool, Source), usize> = BTreeMap::new();
        for (id, c) in &self.state.candidates {
            let Some(r) = self.state.effective(id) else { continue };
            if !filter.accepts(r) {
                continue;
            }
            *counts.entry((r.label, r.source)).or_default() += 1;
            let form = |name: &str| c.capture(name).map(|cap| cap.form.clone());
            lines.push(ExportLine {
                candidate_id: id.clone(),
                sentence_id: c.sentence_id.clone(),
                text: c.text.clone(),
                verb: form(crate::pattern::VERB),
                dobj: form(crate::pattern::DOBJ),
                prep: form(PREP),
                pobj: form(crate::pattern::POBJ),
                positions: c.captures.iter().map(|(n, cap)| (n.clone(), cap.index)).collect(),
                label: r.label,
                source: r.source,
            });
        }
        Export {
            lines,
            counts: counts
                .into_iter()
                .map(|((label, source), count)| ExportCount { label, source, count })
                .collect(),
        }
    }

    pub fn progress(&self) -> Progress {
        let s = &self.state;
        let human: Vec<bool> = s
            .human
            .keys()
            .filter_map(|id| s.human_label(id))
            .map(|r| r.label)
            .collect();
        Progress {
            mode: self.config.mode,
            cap_per_class: self.config.cap_per_class,
            candidates: s.candidates.len(),
            human_labeled: human.len(),
            human_positive: human.iter().filter(|&&l| l).count(),
            human_negative: human.iter().filter(|&&l| !l).count(),
            skipped: s.skipped.len(),
            extrapolated: s.extrapolated.len(),
            llm: s.llm.len(),
            verbs: s.sampler.order().into_iter().cloned().collect(),
        }
    }

    /// Score model labels against human labels and project the cost of
    /// reaching `tp_required` positives.
    pub fn cost_projection(&self, params: &CostParams, tp_required: u64) -> CostProjection {
        let s = &self.state;
        let gold = DevSet::new(
            s.human
                .keys()
                .filter_map(|id| s.human_label(id))
                .map(|r| (r.candidate_id.clone(), r.label)),
        );
        let predicted: Vec<LabeledResult> = gold
            .gold
            .keys()
            .filter_map(|id| s.llm.get(id))
            .map(|r| LabeledResult {
                candidate_id: r.candidate_id.clone(),
                label: r.label,
                explanation: None,
                raw: String::new(),
            })
            .collect();
        let evaluation =
            devset_metrics(&gold, &predicted, &s.llm_usage, 0).expect("predictions restricted to gold ids");
        let m = &evaluation.metrics;
        CostProjection {
            cost_per_tp: cost_per_tp(m, params).ok(),
            tp_required,
            corpus_size: required_corpus_size(m.devset_size, m.tp, tp_required).ok(),
            human_workload: m.precision().and_then(|p| expected_human_workload(tp_required, p).ok()),
            evaluation,
        }
    }
}
