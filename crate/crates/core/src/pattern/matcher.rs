use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use super::{CandidateInstance, Capture, Pattern};
use crate::conllu::Sentence;

/// Stable identifier for a match: hash of the sentence id and the captured
/// token indices.
pub fn candidate_id(sentence_id: &str, captures: &BTreeMap<String, Capture>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(sentence_id.as_bytes());
    for (name, cap) in captures {
        hasher.update([0x1f]);
        hasher.update(name.as_bytes());
        hasher.update(b"=");
        hasher.update(cap.index.to_string().as_bytes());
    }
    hex::encode(&hasher.finalize()[..12])
}

struct Search<'a> {
    pattern: &'a Pattern,
    sentence: &'a Sentence,
    children: Vec<Vec<usize>>,
    assignment: Vec<usize>,
    used: Vec<bool>,
    found: BTreeSet<Vec<usize>>,
}

impl Search<'_> {
    fn step(&mut self, depth: usize) {
        if depth == self.pattern.plan.len() {
            let key = self
                .pattern
                .captures
                .iter()
                .map(|&(_, node)| self.assignment[node])
                .collect();
            self.found.insert(key);
            return;
        }
        let step = &self.pattern.plan[depth];
        let candidates: Vec<usize> = match &step.parent {
            None => (1..=self.sentence.len()).collect(),
            Some((parent, _)) => self.children[self.assignment[*parent]].clone(),
        };
        for tok in candidates {
            if self.used[tok] {
                continue;
            }
            let token = &self.sentence.tokens[tok - 1];
            if let Some((_, rels)) = &step.parent {
                if !rels.is_empty() && !rels.iter().any(|r| r == &token.deprel) {
                    continue;
                }
            }
            if !self.pattern.constraints[step.node].accepts(token) {
                continue;
            }
            self.assignment[step.node] = tok;
            let adjacent = step
                .adjacency
                .iter()
                .all(|&(l, r)| self.assignment[l] + 1 == self.assignment[r]);
            if !adjacent {
                continue;
            }
            self.used[tok] = true;
            self.step(depth + 1);
            self.used[tok] = false;
        }
        self.assignment[step.node] = 0;
    }
}

impl Pattern {
    /// Every distinct capture assignment satisfying the pattern, ordered by
    /// captured token indices.
    pub fn find_matches(&self, sentence: &Sentence) -> Vec<CandidateInstance> {
        if sentence.is_empty() {
            return Vec::new();
        }
        let mut search = Search {
            pattern: self,
            sentence,
            children: sentence.children_table(),
            assignment: vec![0; self.constraints.len()],
            used: vec![false; sentence.len() + 1],
            found: BTreeSet::new(),
        };
        search.step(0);
        let text = sentence.detokenize();
        search
            .found
            .into_iter()
            .map(|indices| {
                let captures: BTreeMap<String, Capture> = self
                    .captures
                    .iter()
                    .zip(indices)
                    .map(|((name, _), idx)| (name.clone(), self.capture(sentence, idx)))
                    .collect();
                CandidateInstance {
                    candidate_id: candidate_id(&sentence.id, &captures),
                    sentence_id: sentence.id.clone(),
                    text: text.clone(),
                    captures,
                    sentence: sentence.clone(),
                }
            })
            .collect()
    }

    /// Capture for a token, widened over contiguous multiword dependents.
    fn capture(&self, sentence: &Sentence, index: usize) -> Capture {
        let token = &sentence.tokens[index - 1];
        let mut members: Vec<usize> = sentence
            .children(index)
            .filter(|c| self.multiword.contains(&c.deprel))
            .map(|c| c.index)
            .collect();
        members.push(index);
        members.sort_unstable();
        let (start, end) = (members[0], *members.last().unwrap());
        if members.len() > 1 && end - start + 1 == members.len() {
            let forms: Vec<&str> = members.iter().map(|&i| sentence.tokens[i - 1].form.as_str()).collect();
            let lemmas: Vec<&str> = members
                .iter()
                .map(|&i| sentence.tokens[i - 1].lemma_or_form())
                .collect();
            Capture {
                index,
                form: forms.join(" "),
                lemma: lemmas.join(" "),
                span: (start, end),
            }
        } else {
            Capture {
                index,
                form: token.form.clone(),
                lemma: token.lemma_or_form().to_string(),
                span: (index, index),
            }
        }
    }
}
