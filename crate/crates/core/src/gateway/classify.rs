use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{Backend, BackendError, ChatReply, ChatRequest, RateLimiter};
use super::parse::{parse_reply, LabeledResult};
use super::prompt::{render_prompt, FewShot, PromptSpec, RenderError};
use super::Usage;
use crate::pattern::CandidateInstance;
use crate::pool::bounded_map;

#[derive(Clone)]
pub struct ClassifyOptions {
    /// Re-issues of a batch's missing ids.
    pub missing_retries: usize,
    /// Retries of a call failing with a transient error.
    pub transport_retries: usize,
    /// First backoff pause; doubled on each further retry.
    pub backoff: Duration,
    /// Batches in flight at once.
    pub concurrency: usize,
    pub limiter: Option<Arc<RateLimiter>>,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            missing_retries: 2,
            transport_retries: 3,
            backoff: Duration::from_millis(500),
            concurrency: 4,
            limiter: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("candidate {0} appears twice")]
    DuplicateCandidate(String),
    #[error("vote rounds cover different candidates")]
    MismatchedRounds,
    #[error("vote needs an odd number of rounds, got {0}")]
    EvenVote(usize),
}

/// Labels, unresolved ids, usage and a log of what went wrong.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyOutcome {
    /// In input order.
    pub results: Vec<LabeledResult>,
    pub unresolved: Vec<String>,
    pub usage: Usage,
    /// Backend failures that gave up on a batch.
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ClassifyOutcome {
    pub fn is_complete(&self) -> bool {
        self.unresolved.is_empty()
    }
}

/// One line of classification output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelLine {
    pub candidate_id: String,
    pub label: bool,
    #[serde(default)]
    pub explanation: Option<String>,
    pub model_id: String,
    pub prompt_id: u32,
}

impl LabelLine {
    pub fn from_result(r: &LabeledResult, spec: &PromptSpec) -> Self {
        LabelLine {
            candidate_id: r.candidate_id.clone(),
            label: r.label,
            explanation: r.explanation.clone(),
            model_id: spec.model_id.clone(),
            prompt_id: spec.id,
        }
    }

    pub fn to_result(&self) -> LabeledResult {
        LabeledResult {
            candidate_id: self.candidate_id.clone(),
            label: self.label,
            explanation: self.explanation.clone(),
            raw: String::new(),
        }
    }
}

pub(crate) fn call_with_backoff(
    backend: &dyn Backend,
    req: &ChatRequest,
    opts: &ClassifyOptions,
) -> Result<ChatReply, BackendError> {
    let mut attempt = 0;
    loop {
        if let Some(l) = &opts.limiter {
            l.acquire();
        }
        match backend.complete(req) {
            Ok(reply) => return Ok(reply),
            Err(e) if e.is_transient() && attempt < opts.transport_retries => {
                let pause = opts.backoff * 2u32.pow(attempt as u32);
                log::warn!("transient backend error ({e}); retrying in {pause:?}");
                std::thread::sleep(pause);
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

#[derive(Default)]
struct BatchResult {
    results: Vec<LabeledResult>,
    usage: Usage,
    errors: Vec<String>,
    warnings: Vec<String>,
}

fn run_batch(
    backend: &dyn Backend,
    spec: &PromptSpec,
    shots: &[FewShot],
    batch: &[CandidateInstance],
    opts: &ClassifyOptions,
) -> Result<BatchResult, RenderError> {
    let mut out = BatchResult::default();
    let mut pending: Vec<&CandidateInstance> = batch.iter().collect();
    let mut retries = 0;
    loop {
        let items: Vec<CandidateInstance> = pending.iter().map(|c| (*c).clone()).collect();
        let payload = render_prompt(spec, shots, &items)?;
        let req = ChatRequest::new(spec.model_id.clone(), payload.system, payload.user);
        let reply = match call_with_backoff(backend, &req, opts) {
            Ok(r) => r,
            Err(e) => {
                out.errors
                    .push(format!("batch starting at {}: {e}", pending[0].candidate_id));
                return Ok(out);
            }
        };
        out.usage += reply.usage(&req);
        let expected: BTreeSet<String> = pending.iter().map(|c| c.candidate_id.clone()).collect();
        match parse_reply(spec.input_format, &reply.text, &expected) {
            Ok(parsed) => {
                for id in &parsed.foreign {
                    out.warnings.push(format!("reply labeled unknown id {id}"));
                }
                out.results.extend(parsed.results);
                pending.retain(|c| parsed.missing.contains(&c.candidate_id));
            }
            Err(e) => out.warnings.push(format!("unparseable reply: {e}")),
        }
        if pending.is_empty() || retries == opts.missing_retries {
            return Ok(out);
        }
        retries += 1;
    }
}

/// One labeling pass: chunk, call, parse, re-issue missing ids.
fn single_pass(
    backend: &dyn Backend,
    spec: &PromptSpec,
    shots: &[FewShot],
    candidates: &[CandidateInstance],
    opts: &ClassifyOptions,
) -> Result<ClassifyOutcome, ClassifyError> {
    let batches: Vec<&[CandidateInstance]> = candidates.chunks(spec.batch_size).collect();
    let done = bounded_map(&batches, opts.concurrency, |b| run_batch(backend, spec, shots, b, opts));
    let mut by_id: BTreeMap<String, LabeledResult> = BTreeMap::new();
    let mut outcome = ClassifyOutcome::default();
    for batch in done {
        let batch = batch?;
        outcome.usage += batch.usage;
        outcome.errors.extend(batch.errors);
        outcome.warnings.extend(batch.warnings);
        for r in batch.results {
            by_id.insert(r.candidate_id.clone(), r);
        }
    }
    for c in candidates {
        match by_id.remove(&c.candidate_id) {
            Some(r) => outcome.results.push(r),
            None => outcome.unresolved.push(c.candidate_id.clone()),
        }
    }
    Ok(outcome)
}

/// Label candidates with a prompt. With `vote_k > 1` the whole pass runs
/// `vote_k` times and labels are decided by majority.
pub fn classify(
    backend: &dyn Backend,
    spec: &PromptSpec,
    shots: &[FewShot],
    candidates: &[CandidateInstance],
    opts: &ClassifyOptions,
) -> Result<ClassifyOutcome, ClassifyError> {
    spec.validate()?;
    let mut seen = BTreeSet::new();
    for c in candidates {
        if !seen.insert(c.candidate_id.as_str()) {
            return Err(ClassifyError::DuplicateCandidate(c.candidate_id.clone()));
        }
    }
    if candidates.is_empty() {
        return Ok(ClassifyOutcome::default());
    }
    // surface shot and format problems before any call is made
    render_prompt(spec, shots, &candidates[..1])?;

    if spec.vote_k == 1 {
        return single_pass(backend, spec, shots, candidates, opts);
    }
    let rounds: Vec<ClassifyOutcome> = (0..spec.vote_k)
        .map(|_| single_pass(backend, spec, shots, candidates, opts))
        .collect::<Result<_, _>>()?;
    let mut outcome = ClassifyOutcome::default();
    let mut votes: BTreeMap<&str, Vec<&LabeledResult>> = BTreeMap::new();
    for round in &rounds {
        outcome.usage += round.usage;
        outcome.errors.extend(round.errors.iter().cloned());
        outcome.warnings.extend(round.warnings.iter().cloned());
        for r in &round.results {
            votes.entry(r.candidate_id.as_str()).or_default().push(r);
        }
    }
    let need = spec.vote_k / 2 + 1;
    for c in candidates {
        let ballots = votes.get(c.candidate_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let yes = ballots.iter().filter(|r| r.label).count();
        let no = ballots.len() - yes;
        let label = if yes >= need {
            Some(true)
        } else if no >= need {
            Some(false)
        } else {
            None
        };
        match label {
            Some(label) => {
                let mut r = (*ballots.iter().find(|r| r.label == label).unwrap()).clone();
                r.label = label;
                outcome.results.push(r);
            }
            None => outcome.unresolved.push(c.candidate_id.clone()),
        }
    }
    Ok(outcome)
}

/// Per-candidate majority over `k` rounds, each covering the same ids.
/// Output follows the order of the first round.
pub fn majority_vote(rounds: &[Vec<LabeledResult>]) -> Result<Vec<LabeledResult>, ClassifyError> {
    if rounds.len().is_multiple_of(2) {
        return Err(ClassifyError::EvenVote(rounds.len()));
    }
    let ids = |round: &[LabeledResult]| -> BTreeSet<String> { round.iter().map(|r| r.candidate_id.clone()).collect() };
    let first = ids(&rounds[0]);
    if rounds.iter().any(|r| r.len() != rounds[0].len() || ids(r) != first) {
        return Err(ClassifyError::MismatchedRounds);
    }
    let index: Vec<BTreeMap<&str, &LabeledResult>> = rounds
        .iter()
        .map(|r| r.iter().map(|x| (x.candidate_id.as_str(), x)).collect())
        .collect();
    Ok(rounds[0]
        .iter()
        .map(|r| {
            let ballots: Vec<&LabeledResult> = index.iter().map(|m| m[r.candidate_id.as_str()]).collect();
            let yes = ballots.iter().filter(|b| b.label).count();
            let label = yes * 2 > rounds.len();
            (*ballots.iter().find(|b| b.label == label).unwrap()).clone()
        })
        .collect())
}
