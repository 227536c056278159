#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use cxg_core::conllu::{Sentence, Token};
use cxg_core::pattern::{Adjacency, EdgeSpec, NodeSpec, PatternSpec};
use rand::seq::SliceRandom;
use rand::Rng;

pub const UPOS: &[&str] = &["VERB", "NOUN", "ADP", "DET", "PRON"];
pub const DEPRELS: &[&str] = &["dobj", "prep", "pobj", "det", "nsubj"];
pub const LEMMAS: &[&str] = &["put", "Put", "cup", "on", "the", "table"];

/// Random single-rooted tree over 1..=max_len tokens drawn from a tiny
/// vocabulary so that random patterns hit often.
pub fn random_sentence<R: Rng>(rng: &mut R, id: usize, max_len: usize) -> Sentence {
    let len = rng.gen_range(1..=max_len);
    let mut order: Vec<usize> = (1..=len).collect();
    order.shuffle(rng);
    let mut heads = vec![0; len + 1];
    for (k, &t) in order.iter().enumerate().skip(1) {
        heads[t] = order[rng.gen_range(0..k)];
    }
    let tokens = (1..=len)
        .map(|i| {
            let lemma = *LEMMAS.choose(rng).unwrap();
            Token {
                index: i,
                form: lemma.to_string(),
                lemma: lemma.to_string(),
                upos: UPOS.choose(rng).unwrap().to_string(),
                xpos: "_".into(),
                head: heads[i],
                deprel: if heads[i] == 0 {
                    "ROOT".into()
                } else {
                    DEPRELS.choose(rng).unwrap().to_string()
                },
                space_after: true,
            }
        })
        .collect();
    Sentence {
        id: format!("s{id}"),
        source: "random".into(),
        tokens,
    }
}

fn some_of<R: Rng>(rng: &mut R, pool: &[&str]) -> Vec<String> {
    if rng.gen_bool(0.5) {
        return Vec::new();
    }
    let n = rng.gen_range(1..=2);
    pool.choose_multiple(rng, n).map(|s| s.to_string()).collect()
}

/// Random tree-shaped pattern with 2..=4 nodes.
pub fn random_pattern<R: Rng>(rng: &mut R) -> PatternSpec {
    let n = rng.gen_range(2..=4);
    let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let nodes = names
        .iter()
        .map(|name| NodeSpec {
            name: name.clone(),
            upos: some_of(rng, UPOS),
            lemma: if rng.gen_bool(0.2) {
                vec![LEMMAS.choose(rng).unwrap().to_uppercase()]
            } else {
                Vec::new()
            },
            deprel: if rng.gen_bool(0.15) {
                some_of(rng, DEPRELS)
            } else {
                Vec::new()
            },
        })
        .collect();
    let edges = (1..n)
        .map(|c| EdgeSpec {
            parent: names[rng.gen_range(0..c)].clone(),
            child: names[c].clone(),
            deprel: some_of(rng, DEPRELS),
        })
        .collect();
    let adjacency = if rng.gen_bool(0.3) {
        let mut pair = names.choose_multiple(rng, 2);
        vec![Adjacency {
            left: pair.next().unwrap().clone(),
            right: pair.next().unwrap().clone(),
        }]
    } else {
        Vec::new()
    };
    let mut captures: Vec<String> = names.iter().filter(|_| rng.gen_bool(0.7)).cloned().collect();
    if captures.is_empty() {
        captures.push(names[0].clone());
    }
    PatternSpec {
        name: None,
        captures,
        nodes,
        edges,
        adjacency,
    }
}

fn node_ok(n: &NodeSpec, t: &Token) -> bool {
    let lemma = if t.lemma.is_empty() || t.lemma == "_" {
        &t.form
    } else {
        &t.lemma
    };
    (n.upos.is_empty() || n.upos.contains(&t.upos))
        && (n.lemma.is_empty() || n.lemma.iter().any(|l| l.to_lowercase() == lemma.to_lowercase()))
        && (n.deprel.is_empty() || n.deprel.contains(&t.deprel))
}

/// Every injective node-to-token assignment checked against every
/// constraint, projected onto the captures.
pub fn brute_force(spec: &PatternSpec, s: &Sentence) -> BTreeSet<BTreeMap<String, usize>> {
    let k = spec.nodes.len();
    let len = s.tokens.len();
    let index_of = |name: &str| spec.nodes.iter().position(|n| n.name == name).unwrap();
    let mut out = BTreeSet::new();
    let mut assignment = vec![1usize; k];
    if len == 0 {
        return out;
    }
    loop {
        let distinct = assignment.iter().collect::<BTreeSet<_>>().len() == k;
        let ok = distinct
            && spec
                .nodes
                .iter()
                .zip(&assignment)
                .all(|(n, &t)| node_ok(n, &s.tokens[t - 1]))
            && spec.edges.iter().all(|e| {
                let child = &s.tokens[assignment[index_of(&e.child)] - 1];
                child.head == assignment[index_of(&e.parent)]
                    && (e.deprel.is_empty() || e.deprel.contains(&child.deprel))
            })
            && spec
                .adjacency
                .iter()
                .all(|a| assignment[index_of(&a.left)] + 1 == assignment[index_of(&a.right)]);
        if ok {
            out.insert(
                spec.captures
                    .iter()
                    .map(|c| (c.clone(), assignment[index_of(c)]))
                    .collect(),
            );
        }
        // odometer over 1..=len
        let mut i = 0;
        loop {
            if i == k {
                return out;
            }
            assignment[i] += 1;
            if assignment[i] <= len {
                break;
            }
            assignment[i] = 1;
            i += 1;
        }
    }
}

pub fn matched(found: &[cxg_core::CandidateInstance]) -> BTreeSet<BTreeMap<String, usize>> {
    found
        .iter()
        .map(|c| c.captures.iter().map(|(n, cap)| (n.clone(), cap.index)).collect())
        .collect()
}

/// (past form, lemma, motion verb for the scripted mock)
pub const PROBE_VERBS: &[(&str, &str, bool)] = &[
    ("threw", "throw", true),
    ("flung", "fling", true),
    ("tossed", "toss", true),
    ("kicked", "kick", true),
    ("pushed", "push", true),
    ("sneezed", "sneeze", false),
    ("laughed", "laugh", false),
    ("coughed", "cough", false),
    ("whistled", "whistle", false),
    ("blinked", "blink", false),
];

const NOUNS: &[&str] = &["ball", "foam", "cat", "napkin", "cork", "leaf"];
const PATHS: &[(&str, &str)] = &[
    ("off", "table"),
    ("into", "lake"),
    ("across", "room"),
    ("over", "fence"),
];

/// `n` synthetic caused-motion instances cycling through [`PROBE_VERBS`].
pub fn probe_instances(n: usize) -> Vec<(cxg_core::CandidateInstance, bool)> {
    (0..n)
        .map(|i| {
            let (form, lemma, motion) = PROBE_VERBS[i % PROBE_VERBS.len()];
            let (prep, pobj) = PATHS[i % PATHS.len()];
            let mut c = cxg_core::samples::simple_candidate(
                &format!("p{i}"),
                (form, lemma),
                NOUNS[i % NOUNS.len()],
                prep,
                pobj,
            );
            c.candidate_id = format!("p{i}");
            (c, motion)
        })
        .collect()
}

/// `quads` single-class quads plus `conflicted` mixed ones, each with two
/// labeled and two unlabeled members.
pub fn quad_store(quads: usize, conflicted: usize) -> (cxg_core::store::Store, BTreeMap<String, Option<bool>>) {
    let mut s = cxg_core::store::Store::in_memory(cxg_core::store::StoreConfig::default());
    let mut expected = BTreeMap::new();
    let mut cands = Vec::new();
    for q in 0..quads {
        for k in 0..4 {
            cands.push({
                let verb = format!("verb{q}");
                let mut c = cxg_core::samples::simple_candidate(
                    &format!("q{q}-{k}"),
                    (&format!("{verb}ed"), &verb),
                    "cup",
                    "on",
                    "table",
                );
                c.candidate_id = format!("q{q}-{k}");
                c
            });
        }
    }
    s.add_candidates(cands).unwrap();
    for q in 0..quads {
        let mixed = q < conflicted;
        let class = q % 2 == 0;
        s.submit_label(&format!("q{q}-0"), class, "ann").unwrap();
        s.submit_label(&format!("q{q}-1"), if mixed { !class } else { class }, "ann")
            .unwrap();
        for k in 2..4 {
            expected.insert(format!("q{q}-{k}"), (!mixed).then_some(class));
        }
    }
    (s, expected)
}
