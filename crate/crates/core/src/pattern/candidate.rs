use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DOBJ, POBJ, PREP, VERB};
use crate::conllu::Sentence;

/// One captured node of a match.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Capture {
    /// 1-based index of the matched token.
    pub index: usize,
    /// Surface form, covering a multiword unit when the parse marks one.
    pub form: String,
    pub lemma: String,
    /// Inclusive token range covered by `form`.
    pub span: (usize, usize),
}

/// A pattern match in one sentence.
///
/// Carries its parsed sentence so downstream stages (prompt rendering,
/// probing, highlighting) never need to join back against the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "CandidateLine", try_from = "CandidateLine")]
pub struct CandidateInstance {
    pub candidate_id: String,
    pub sentence_id: String,
    pub text: String,
    pub captures: BTreeMap<String, Capture>,
    pub sentence: Sentence,
}

/// JSON-lines form of a candidate: the caused-motion slots are flattened to
/// top-level strings for readability; `captures` stays authoritative.
#[derive(Serialize, Deserialize)]
struct CandidateLine {
    candidate_id: String,
    sentence_id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    verb: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dobj: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prep: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pobj: Option<String>,
    #[serde(default)]
    positions: BTreeMap<String, usize>,
    captures: BTreeMap<String, Capture>,
    sentence: Sentence,
}

impl From<CandidateInstance> for CandidateLine {
    fn from(c: CandidateInstance) -> Self {
        let form = |name: &str| c.captures.get(name).map(|cap| cap.form.clone());
        CandidateLine {
            verb: form(VERB),
            dobj: form(DOBJ),
            prep: form(PREP),
            pobj: form(POBJ),
            positions: c.captures.iter().map(|(n, cap)| (n.clone(), cap.index)).collect(),
            candidate_id: c.candidate_id,
            sentence_id: c.sentence_id,
            text: c.text,
            captures: c.captures,
            sentence: c.sentence,
        }
    }
}

impl TryFrom<CandidateLine> for CandidateInstance {
    type Error = String;

    fn try_from(line: CandidateLine) -> Result<Self, String> {
        let n = line.sentence.len();
        let mut seen = std::collections::BTreeSet::new();
        for (name, cap) in &line.captures {
            if cap.index == 0 || cap.index > n {
                return Err(format!(
                    "capture {name} index {} outside sentence of {n} tokens",
                    cap.index
                ));
            }
            if !seen.insert(cap.index) {
                return Err(format!("capture {name} reuses token {}", cap.index));
            }
        }
        Ok(CandidateInstance {
            candidate_id: line.candidate_id,
            sentence_id: line.sentence_id,
            text: line.text,
            captures: line.captures,
            sentence: line.sentence,
        })
    }
}

impl CandidateInstance {
    pub fn capture(&self, name: &str) -> Option<&Capture> {
        self.captures.get(name)
    }

    /// Lower-cased verb lemma, used to group candidates.
    pub fn verb_lemma(&self) -> Option<String> {
        self.capture(VERB).map(|c| c.lemma.to_lowercase())
    }

    /// Surface text from the first to the last captured token.
    pub fn capture_substring(&self) -> String {
        let start = self.captures.values().map(|c| c.span.0).min();
        let end = self.captures.values().map(|c| c.span.1).max();
        match (start, end) {
            (Some(s), Some(e)) => self.sentence.detokenize_range(s, e).0,
            _ => String::new(),
        }
    }

    /// `[start, end)` byte ranges of each capture within `text`.
    pub fn highlight_spans(&self) -> BTreeMap<String, (usize, usize)> {
        let (_, offsets) = self.sentence.detokenize_with_offsets();
        self.captures
            .iter()
            .filter_map(|(name, cap)| {
                let start = offsets.get(cap.span.0.checked_sub(1)?)?.0;
                let end = offsets.get(cap.span.1.checked_sub(1)?)?.1;
                Some((name.clone(), (start, end)))
            })
            .collect()
    }
}

/// ⟨verb, direct object, preposition, prepositional object⟩, case-folded.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QuadKey {
    pub verb: String,
    pub dobj: String,
    pub prep: String,
    pub pobj: String,
}

impl std::fmt::Display for QuadKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.verb, self.dobj, self.prep, self.pobj)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("candidate {candidate_id} has no \"{capture}\" capture")]
pub struct MissingCapture {
    pub candidate_id: String,
    pub capture: String,
}

/// Lemmas of verb and both objects plus the (possibly multiword) preposition.
pub fn quad_key(c: &CandidateInstance) -> Result<QuadKey, MissingCapture> {
    let get = |name: &str| {
        c.capture(name).ok_or_else(|| MissingCapture {
            candidate_id: c.candidate_id.clone(),
            capture: name.to_string(),
        })
    };
    let (verb, dobj, prep, pobj) = (get(VERB)?, get(DOBJ)?, get(PREP)?, get(POBJ)?);
    let fold = |s: &str| s.trim().to_lowercase();
    Ok(QuadKey {
        verb: fold(&verb.lemma),
        dobj: fold(&dobj.lemma),
        prep: fold(&prep.form),
        pobj: fold(&pobj.lemma),
    })
}
