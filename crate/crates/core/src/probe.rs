//! Verb-substitution probe: ask whether the direct object of a confirmed
//! caused-motion sentence is moving, ask again with the verb replaced by
//! "throw", and sort the answer pair into YY / NY / XN.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::Sentence;
use crate::gateway::{call_with_backoff, Backend, ChatRequest, ClassifyOptions, Usage};
use crate::pattern::{CandidateInstance, DOBJ, VERB};
use crate::pool::bounded_map;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
    Unparsed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub verdict: Verdict,
    pub raw: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeClass {
    YY,
    NY,
    XN,
}

impl OutcomeClass {
    pub const ALL: [OutcomeClass; 3] = [OutcomeClass::YY, OutcomeClass::NY, OutcomeClass::XN];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub class: OutcomeClass,
    pub first_unparsed: bool,
    pub second_unparsed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProbeError {
    #[error("candidate {candidate_id} has no \"{capture}\" capture")]
    MissingCapture { candidate_id: String, capture: String },
    #[error("candidate {candidate_id}: capture index {index} outside the sentence")]
    BadIndex { candidate_id: String, index: usize },
}

/// Form of "throw" matching a verb's language-specific tag. The flag is set
/// when the tag is not a verb tag and the base form was used.
pub fn inflect_throw(xpos: &str) -> (&'static str, bool) {
    match xpos {
        "VB" | "VBP" => ("throw", false),
        "VBZ" => ("throws", false),
        "VBD" => ("threw", false),
        "VBG" => ("throwing", false),
        "VBN" => ("thrown", false),
        _ => ("throw", true),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Questions {
    pub q1: String,
    pub q2: String,
    pub original: String,
    pub substituted: String,
    pub object: String,
    pub inflection_fallback: bool,
}

fn question(sentence: &str, object: &str) -> String {
    format!("In the sentence \"{sentence}\", is {object} moving, yes or no?")
}

/// Head noun plus its determiner and possessive dependents.
fn object_phrase(s: &Sentence, head: usize) -> String {
    let children = s.children_table();
    let mut keep = vec![head];
    let mut stack: Vec<usize> = children[head]
        .iter()
        .copied()
        .filter(|&c| {
            matches!(
                s.tokens[c - 1].deprel.as_str(),
                "det" | "poss" | "nmod:poss" | "det:poss"
            )
        })
        .collect();
    while let Some(t) = stack.pop() {
        keep.push(t);
        stack.extend(children[t].iter().copied());
    }
    keep.sort_unstable();
    let mut out = String::new();
    for (i, &t) in keep.iter().enumerate() {
        let tok = &s.tokens[t - 1];
        out.push_str(&tok.form);
        if let Some(&next) = keep.get(i + 1) {
            if tok.space_after || next != t + 1 {
                out.push(' ');
            }
        }
    }
    out
}

fn match_case(model: &str, form: &str) -> String {
    if model.chars().next().is_some_and(char::is_uppercase) {
        let mut c = form.chars();
        c.next()
            .map(|f| f.to_uppercase().chain(c).collect())
            .unwrap_or_default()
    } else {
        form.to_string()
    }
}

pub fn build_questions(c: &CandidateInstance) -> Result<Questions, ProbeError> {
    let get = |name: &str| {
        c.capture(name).ok_or_else(|| ProbeError::MissingCapture {
            candidate_id: c.candidate_id.clone(),
            capture: name.to_string(),
        })
    };
    let (verb, dobj) = (get(VERB)?, get(DOBJ)?);
    let s = &c.sentence;
    for index in [verb.index, dobj.index] {
        if index == 0 || index > s.len() {
            return Err(ProbeError::BadIndex {
                candidate_id: c.candidate_id.clone(),
                index,
            });
        }
    }
    let verb_tok = &s.tokens[verb.index - 1];
    let (form, inflection_fallback) = inflect_throw(&verb_tok.xpos);
    let substituted = s
        .replace_token(verb.index, &match_case(&verb_tok.form, form))
        .expect("index checked")
        .detokenize();
    let original = s.detokenize();
    let object = object_phrase(s, dobj.index);
    Ok(Questions {
        q1: question(&original, &object),
        q2: question(&substituted, &object),
        original,
        substituted,
        object,
        inflection_fallback,
    })
}

pub fn parse_answer(text: &str) -> Answer {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap());
    let verdict = match re.find(text).map(|m| m.as_str().to_lowercase()) {
        Some(w) if w == "yes" => Verdict::Yes,
        Some(_) => Verdict::No,
        None => Verdict::Unparsed,
    };
    Answer {
        verdict,
        raw: text.to_string(),
    }
}

pub fn classify_outcome(a1: Verdict, a2: Verdict) -> ProbeOutcome {
    let class = match (a1, a2) {
        (Verdict::Yes, Verdict::Yes) => OutcomeClass::YY,
        (_, Verdict::Yes) => OutcomeClass::NY,
        _ => OutcomeClass::XN,
    };
    ProbeOutcome {
        class,
        first_unparsed: a1 == Verdict::Unparsed,
        second_unparsed: a2 == Verdict::Unparsed,
    }
}

/// Audit trail of one probed instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub candidate_id: String,
    pub verb: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub questions: Option<Questions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<(Answer, Answer)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<ProbeOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub yy: usize,
    pub ny: usize,
    pub xn: usize,
}

impl OutcomeCounts {
    pub fn get(&self, class: OutcomeClass) -> usize {
        match class {
            OutcomeClass::YY => self.yy,
            OutcomeClass::NY => self.ny,
            OutcomeClass::XN => self.xn,
        }
    }

    fn bump(&mut self, class: OutcomeClass) {
        match class {
            OutcomeClass::YY => self.yy += 1,
            OutcomeClass::NY => self.ny += 1,
            OutcomeClass::XN => self.xn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.yy + self.ny + self.xn
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Percentages {
    pub yy: f64,
    pub ny: f64,
    pub xn: f64,
}

impl Percentages {
    pub fn sum(&self) -> f64 {
        self.yy + self.ny + self.xn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    pub model_id: String,
    pub instances: usize,
    pub unresolved: usize,
    pub counts: OutcomeCounts,
    /// Over resolved instances, two decimals. All zero when nothing resolved.
    pub percentages: Percentages,
    pub first_unparsed: usize,
    pub second_unparsed: usize,
    pub inflection_fallbacks: usize,
    pub per_verb: BTreeMap<String, OutcomeCounts>,
    pub top_yy: Vec<(String, usize)>,
    pub top_ny: Vec<(String, usize)>,
    pub usage: Usage,
    pub notes: Vec<String>,
}

const UNPARSED_NOTE: &str = "unparsed first answer followed by yes counts as NY; unparsed second answer counts as XN";

#[derive(Clone)]
pub struct ProbeOptions {
    pub calls: ClassifyOptions,
    /// Length of the per-verb YY and NY rankings.
    pub top_k: usize,
    pub system: Option<String>,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            calls: ClassifyOptions::default(),
            top_k: 10,
            system: None,
        }
    }
}

pub struct ProbeRun {
    pub report: ProbeReport,
    /// In input order.
    pub records: Vec<ProbeRecord>,
}

fn probe_one(
    backend: &dyn Backend,
    model_id: &str,
    c: &CandidateInstance,
    opts: &ProbeOptions,
) -> (ProbeRecord, Usage) {
    let mut record = ProbeRecord {
        candidate_id: c.candidate_id.clone(),
        verb: c.verb_lemma().unwrap_or_default().to_lowercase(),
        questions: None,
        answers: None,
        outcome: None,
        error: None,
    };
    let mut usage = Usage::default();
    let questions = match build_questions(c) {
        Ok(q) => q,
        Err(e) => {
            record.error = Some(e.to_string());
            return (record, usage);
        }
    };
    let mut ask = |q: &str| {
        let req = ChatRequest::new(model_id, opts.system.clone(), q);
        call_with_backoff(backend, &req, &opts.calls).map(|reply| {
            usage += reply.usage(&req);
            parse_answer(&reply.text)
        })
    };
    let answers = ask(&questions.q1).and_then(|a1| ask(&questions.q2).map(|a2| (a1, a2)));
    match answers {
        Ok((a1, a2)) => {
            record.outcome = Some(classify_outcome(a1.verdict, a2.verdict));
            record.answers = Some((a1, a2));
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record.questions = Some(questions);
    (record, usage)
}

fn top(per_verb: &BTreeMap<String, OutcomeCounts>, class: OutcomeClass, k: usize) -> Vec<(String, usize)> {
    let mut v: Vec<(String, usize)> = per_verb
        .iter()
        .map(|(verb, c)| (verb.clone(), c.get(class)))
        .filter(|(_, n)| *n > 0)
        .collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(k);
    v
}

fn percent(n: usize, total: usize) -> f64 {
    (n as f64 * 10000.0 / total as f64).round() / 100.0
}

/// Aggregate records into a report. Independent of record order.
pub fn summarize(model_id: &str, records: &[ProbeRecord], usage: Usage, top_k: usize) -> ProbeReport {
    let mut counts = OutcomeCounts::default();
    let mut per_verb: BTreeMap<String, OutcomeCounts> = BTreeMap::new();
    let (mut unresolved, mut first_unparsed, mut second_unparsed, mut fallbacks) = (0, 0, 0, 0);
    for r in records {
        if r.questions.as_ref().is_some_and(|q| q.inflection_fallback) {
            fallbacks += 1;
        }
        let Some(o) = r.outcome else {
            unresolved += 1;
            continue;
        };
        counts.bump(o.class);
        per_verb.entry(r.verb.clone()).or_default().bump(o.class);
        first_unparsed += o.first_unparsed as usize;
        second_unparsed += o.second_unparsed as usize;
    }
    let resolved = counts.total();
    let percentages = if resolved == 0 {
        Percentages::default()
    } else {
        Percentages {
            yy: percent(counts.yy, resolved),
            ny: percent(counts.ny, resolved),
            xn: percent(counts.xn, resolved),
        }
    };
    ProbeReport {
        family: None,
        model_id: model_id.to_string(),
        instances: records.len(),
        unresolved,
        counts,
        percentages,
        first_unparsed,
        second_unparsed,
        inflection_fallbacks: fallbacks,
        top_yy: top(&per_verb, OutcomeClass::YY, top_k),
        top_ny: top(&per_verb, OutcomeClass::NY, top_k),
        per_verb,
        usage,
        notes: vec![UNPARSED_NOTE.to_string()],
    }
}

/// Two independent calls per instance; instances run concurrently.
pub fn run_probe(
    backend: &dyn Backend,
    model_id: &str,
    instances: &[CandidateInstance],
    opts: &ProbeOptions,
) -> ProbeRun {
    let done = bounded_map(instances, opts.calls.concurrency, |c| {
        probe_one(backend, model_id, c, opts)
    });
    let usage = done.iter().map(|(_, u)| *u).sum();
    let records: Vec<ProbeRecord> = done.into_iter().map(|(r, _)| r).collect();
    ProbeRun {
        report: summarize(model_id, &records, usage, opts.top_k),
        records,
    }
}

/// Aligned text table, one row per report.
pub fn render_table(reports: &[ProbeReport]) -> String {
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            [
                r.family.clone().unwrap_or_else(|| "-".into()),
                r.model_id.clone(),
                format!("{:.2}", r.percentages.yy),
                format!("{:.2}", r.percentages.ny),
                format!("{:.2}", r.percentages.xn),
            ]
        })
        .collect();
    let header = ["Family", "Model", "YY", "NY", "XN"].map(String::from);
    let mut widths = header.clone().map(|h| h.len());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in std::iter::once(&header).chain(&rows) {
        let line = format!(
            "{:<w0$}  {:<w1$}  {:>w2$}  {:>w3$}  {:>w4$}",
            row[0],
            row[1],
            row[2],
            row[3],
            row[4],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3],
            w4 = widths[4]
        );
        writeln!(out, "{}", line.trim_end()).unwrap();
    }
    out
}
