use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// Quota bookkeeping for one verb.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbQuota {
    pub verb: String,
    /// Candidates in the pool with this verb.
    pub frequency: usize,
    pub positives: usize,
    pub negatives: usize,
    pub positive_preps: BTreeSet<String>,
    pub negative_preps: BTreeSet<String>,
    /// A label arrived for a class whose quota was already full.
    pub closed: bool,
}

impl VerbQuota {
    fn count(&self, label: bool) -> usize {
        if label {
            self.positives
        } else {
            self.negatives
        }
    }

    fn preps(&self, label: bool) -> &BTreeSet<String> {
        if label {
            &self.positive_preps
        } else {
            &self.negative_preps
        }
    }

    fn open(&self, label: bool, cap: usize) -> bool {
        self.count(label) < cap
    }

    /// Whether a candidate with `prep` may still be shown for this verb.
    pub fn accepts(&self, prep: &str, cap: usize) -> bool {
        !self.closed
            && [true, false]
                .iter()
                .any(|&l| self.open(l, cap) && !self.preps(l).contains(prep))
    }

    /// Whether any candidate could still be shown.
    pub fn is_open(&self, cap: usize) -> bool {
        !self.closed && (self.open(true, cap) || self.open(false, cap))
    }
}

/// Per-verb quotas: at most `cap` positives and `cap` negatives per verb,
/// each with a distinct preposition, visited from the most frequent verb
/// down.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerState {
    pub cap: usize,
    pub verbs: BTreeMap<String, VerbQuota>,
}

/// How a human-labeled candidate entered the quotas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Counted,
    /// Preposition already used for this verb and class.
    DuplicatePreposition,
    /// Class already full; the verb is closed.
    Overflow,
    /// Verb was closed before this label.
    Closed,
}

impl SamplerState {
    pub fn new(cap: usize) -> Self {
        SamplerState {
            cap,
            verbs: BTreeMap::new(),
        }
    }

    pub fn note_candidate(&mut self, verb: &str) {
        let q = self.verbs.entry(verb.to_string()).or_insert_with(|| VerbQuota {
            verb: verb.to_string(),
            ..VerbQuota::default()
        });
        q.frequency += 1;
    }

    /// Verbs by descending pool frequency, ties alphabetically.
    pub fn order(&self) -> Vec<&VerbQuota> {
        let mut v: Vec<&VerbQuota> = self.verbs.values().collect();
        v.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.verb.cmp(&b.verb)));
        v
    }

    pub fn accepts(&self, verb: &str, prep: &str) -> bool {
        self.verbs.get(verb).is_some_and(|q| q.accepts(prep, self.cap))
    }

    /// Recompute one verb from its current human labels, oldest first.
    pub fn rebuild_verb<'a>(
        &mut self,
        verb: &str,
        labels: impl IntoIterator<Item = (&'a str, bool)>,
    ) -> Vec<Admission> {
        let cap = self.cap;
        let q = self.verbs.entry(verb.to_string()).or_insert_with(|| VerbQuota {
            verb: verb.to_string(),
            ..VerbQuota::default()
        });
        q.positives = 0;
        q.negatives = 0;
        q.positive_preps.clear();
        q.negative_preps.clear();
        q.closed = false;
        labels
            .into_iter()
            .map(|(prep, label)| {
                if q.closed {
                    return Admission::Closed;
                }
                if !q.open(label, cap) {
                    q.closed = true;
                    return Admission::Overflow;
                }
                if q.preps(label).contains(prep) {
                    return Admission::DuplicatePreposition;
                }
                if label {
                    q.positives += 1;
                    q.positive_preps.insert(prep.to_string());
                } else {
                    q.negatives += 1;
                    q.negative_preps.insert(prep.to_string());
                }
                Admission::Counted
            })
            .collect()
    }

    /// Counters within caps and preposition sets matching counters.
    pub fn check_invariants(&self) -> Result<(), String> {
        for q in self.verbs.values() {
            if q.positives > self.cap || q.negatives > self.cap {
                return Err(format!("verb {} exceeds cap: {}/{}", q.verb, q.positives, q.negatives));
            }
            if q.positive_preps.len() != q.positives || q.negative_preps.len() != q.negatives {
                return Err(format!("verb {} repeats a preposition within a class", q.verb));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotas_fill_and_close() {
        let mut s = SamplerState::new(2);
        s.note_candidate("put");
        let admissions = s.rebuild_verb(
            "put",
            [
                ("on", true),
                ("on", true),
                ("in", true),
                ("at", false),
                ("by", true),
                ("to", false),
            ],
        );
        assert_eq!(
            admissions,
            vec![
                Admission::Counted,
                Admission::DuplicatePreposition,
                Admission::Counted,
                Admission::Counted,
                Admission::Overflow,
                Admission::Closed
            ]
        );
        assert!(s.verbs["put"].closed);
        assert!(!s.accepts("put", "under"));
        s.check_invariants().unwrap();
    }

    #[test]
    fn preposition_used_in_both_classes_is_not_offered() {
        let mut s = SamplerState::new(5);
        s.note_candidate("put");
        s.rebuild_verb("put", [("on", true), ("on", false)]);
        assert!(!s.accepts("put", "on"));
        assert!(s.accepts("put", "in"));
    }

    #[test]
    fn order_by_frequency() {
        let mut s = SamplerState::new(5);
        for _ in 0..3 {
            s.note_candidate("laugh");
        }
        for _ in 0..100 {
            s.note_candidate("put");
        }
        let order: Vec<&str> = s.order().iter().map(|q| q.verb.as_str()).collect();
        assert_eq!(order, vec!["put", "laugh"]);
    }
}
