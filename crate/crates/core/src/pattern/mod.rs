//! Declarative dependency-subtree patterns.
//!
//! A [`PatternSpec`] names a set of nodes with token constraints, the
//! head/dependent edges between them (which must form a tree), pairs of nodes
//! that must be string-adjacent, and the nodes to report. [`compile`] checks
//! the spec and produces a [`Pattern`] that enumerates every match in a
//! sentence.

mod candidate;
mod matcher;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use candidate::{quad_key, CandidateInstance, Capture, MissingCapture, QuadKey};
pub use matcher::candidate_id;

pub const VERB: &str = "verb";
pub const DOBJ: &str = "dobj";
pub const PREP: &str = "prep";
pub const POBJ: &str = "pobj";

/// Capture names of the caused-motion presets, in reporting order.
pub const CMC_CAPTURES: [&str; 4] = [VERB, DOBJ, PREP, POBJ];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub captures: Vec<String>,
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub adjacency: Vec<Adjacency>,
}

/// Token constraints for one node. An empty list means "anything".
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub upos: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lemma: Vec<String>,
    /// Relation of the token to its own head.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deprel: Vec<String>,
}

/// `child` must be a direct dependent of `parent` via one of `deprel`
/// (any relation when empty).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub parent: String,
    pub child: String,
    #[serde(default)]
    pub deprel: Vec<String>,
}

/// `right` must be the token immediately after `left`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    pub left: String,
    pub right: String,
}

impl PatternSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, PatternError> {
        toml::from_str(text).map_err(|e| PatternError::Syntax(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("pattern specs always serialize")
    }

    fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }
}

/// The caused-motion subtree over spaCy/ClearNLP labels.
pub fn cmc_pattern() -> PatternSpec {
    PatternSpec::from_toml_str(include_str!("../../data/cmc.toml")).expect("bundled preset parses")
}

/// The caused-motion subtree over Universal Dependencies labels.
pub fn cmc_pattern_ud() -> PatternSpec {
    PatternSpec::from_toml_str(include_str!("../../data/cmc-ud.toml")).expect("bundled preset parses")
}

/// A bundled preset compiled against its own label inventory: `cmc`
/// (spaCy/ClearNLP) or `cmc-ud`.
pub fn preset(name: &str) -> Option<Pattern> {
    let (spec, inventory) = match name {
        "cmc" => (cmc_pattern(), LabelInventory::clear_nlp()),
        "cmc-ud" => (cmc_pattern_ud(), LabelInventory::universal()),
        _ => return None,
    };
    Some(compile(&spec, &inventory).expect("bundled preset compiles"))
}

/// The caused-motion matcher over spaCy/ClearNLP labels.
pub fn cmc() -> Pattern {
    preset("cmc").unwrap()
}

/// Relation labels a parser is expected to produce, plus the labels that glue
/// multiword function words together (`out of`, `off of`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelInventory {
    pub name: String,
    pub labels: BTreeSet<String>,
    #[serde(default)]
    pub multiword: Vec<String>,
}

impl LabelInventory {
    pub fn clear_nlp() -> Self {
        Self::from_toml_str(include_str!("../../data/labels-clearnlp.toml")).expect("bundled inventory parses")
    }

    pub fn universal() -> Self {
        Self::from_toml_str(include_str!("../../data/labels-ud.toml")).expect("bundled inventory parses")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, PatternError> {
        toml::from_str(text).map_err(|e| PatternError::Syntax(e.to_string()))
    }

    /// Known label, accepting language-specific subtypes (`nmod:poss`).
    pub fn contains(&self, label: &str) -> bool {
        self.labels.contains(label)
            || label
                .split_once(':')
                .map(|(base, _)| self.labels.contains(base))
                .unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Issue {
    NoNodes,
    EmptyName,
    DuplicateNode(String),
    DanglingEdge {
        parent: String,
        child: String,
        missing: String,
    },
    DanglingAdjacency {
        left: String,
        right: String,
        missing: String,
    },
    UnknownCapture(String),
    MultipleParents(String),
    SelfEdge(String),
    /// Nodes not reachable from the single root of the edge set.
    Disconnected(Vec<String>),
    MultipleRoots(Vec<String>),
    Cycle,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::NoNodes => write!(f, "pattern declares no nodes"),
            Issue::EmptyName => write!(f, "node with empty name"),
            Issue::DuplicateNode(n) => write!(f, "duplicate node name \"{n}\""),
            Issue::DanglingEdge { parent, child, missing } => {
                write!(f, "edge {parent} -> {child} references undeclared node \"{missing}\"")
            }
            Issue::DanglingAdjacency { left, right, missing } => {
                write!(f, "adjacency {left} . {right} references undeclared node \"{missing}\"")
            }
            Issue::UnknownCapture(n) => write!(f, "capture \"{n}\" is not a declared node"),
            Issue::MultipleParents(n) => write!(f, "node \"{n}\" has more than one parent"),
            Issue::SelfEdge(n) => write!(f, "node \"{n}\" is its own parent"),
            Issue::Disconnected(ns) => write!(f, "nodes not connected to the tree: {}", ns.join(", ")),
            Issue::MultipleRoots(ns) => write!(f, "edge set has several roots: {}", ns.join(", ")),
            Issue::Cycle => write!(f, "edge set contains a cycle"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("invalid pattern: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Issue>),
    #[error("pattern syntax: {0}")]
    Syntax(String),
}

#[derive(Debug, Clone, Default)]
pub(crate) struct NodeConstraint {
    upos: Vec<String>,
    lemma: Vec<String>,
    deprel: Vec<String>,
}

impl NodeConstraint {
    pub(crate) fn accepts(&self, t: &crate::conllu::Token) -> bool {
        (self.upos.is_empty() || self.upos.iter().any(|u| u == &t.upos))
            && (self.lemma.is_empty() || {
                let lemma = t.lemma_or_form().to_lowercase();
                self.lemma.contains(&lemma)
            })
            && (self.deprel.is_empty() || self.deprel.iter().any(|d| d == &t.deprel))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PlanStep {
    pub node: usize,
    /// Parent node (already placed earlier in the plan) and allowed relations.
    pub parent: Option<(usize, Vec<String>)>,
    /// Adjacency pairs `(left, right)` whose later endpoint is this step.
    pub adjacency: Vec<(usize, usize)>,
}

/// A validated, immutable pattern ready for matching.
#[derive(Debug, Clone)]
pub struct Pattern {
    spec: PatternSpec,
    pub(crate) constraints: Vec<NodeConstraint>,
    pub(crate) plan: Vec<PlanStep>,
    pub(crate) captures: Vec<(String, usize)>,
    pub(crate) multiword: Vec<String>,
    warnings: Vec<String>,
}

impl Pattern {
    pub fn spec(&self) -> &PatternSpec {
        &self.spec
    }

    /// Labels the inventory did not know about.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn capture_names(&self) -> impl Iterator<Item = &str> {
        self.captures.iter().map(|(n, _)| n.as_str())
    }
}

fn validate(spec: &PatternSpec) -> Result<(usize, Vec<Option<usize>>), Vec<Issue>> {
    let mut issues = Vec::new();
    if spec.nodes.is_empty() {
        return Err(vec![Issue::NoNodes]);
    }
    let mut seen = BTreeSet::new();
    for n in &spec.nodes {
        if n.name.is_empty() {
            issues.push(Issue::EmptyName);
        } else if !seen.insert(n.name.as_str()) {
            issues.push(Issue::DuplicateNode(n.name.clone()));
        }
    }
    let mut parent_of: Vec<Option<usize>> = vec![None; spec.nodes.len()];
    for e in &spec.edges {
        let p = spec.node_index(&e.parent);
        let c = spec.node_index(&e.child);
        for (name, idx) in [(&e.parent, p), (&e.child, c)] {
            if idx.is_none() {
                issues.push(Issue::DanglingEdge {
                    parent: e.parent.clone(),
                    child: e.child.clone(),
                    missing: name.clone(),
                });
            }
        }
        if let (Some(p), Some(c)) = (p, c) {
            if p == c {
                issues.push(Issue::SelfEdge(e.child.clone()));
            } else if parent_of[c].is_some() {
                issues.push(Issue::MultipleParents(e.child.clone()));
            } else {
                parent_of[c] = Some(p);
            }
        }
    }
    for a in &spec.adjacency {
        for name in [&a.left, &a.right] {
            if spec.node_index(name).is_none() {
                issues.push(Issue::DanglingAdjacency {
                    left: a.left.clone(),
                    right: a.right.clone(),
                    missing: name.clone(),
                });
            }
        }
    }
    for c in &spec.captures {
        if spec.node_index(c).is_none() {
            issues.push(Issue::UnknownCapture(c.clone()));
        }
    }
    if !issues.is_empty() {
        return Err(issues);
    }

    let roots: Vec<usize> = (0..spec.nodes.len()).filter(|&i| parent_of[i].is_none()).collect();
    if roots.is_empty() {
        return Err(vec![Issue::Cycle]);
    }
    if roots.len() > 1 {
        // several parentless nodes: report everything not under the first one
        let reach = reachable(roots[0], &parent_of);
        let loose: Vec<String> = (0..spec.nodes.len())
            .filter(|i| !reach.contains(i))
            .map(|i| spec.nodes[i].name.clone())
            .collect();
        return Err(vec![Issue::Disconnected(loose)]);
    }
    let reach = reachable(roots[0], &parent_of);
    if reach.len() != spec.nodes.len() {
        return Err(vec![Issue::Cycle]);
    }
    Ok((roots[0], parent_of))
}

fn reachable(root: usize, parent_of: &[Option<usize>]) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([root]);
    let mut queue = VecDeque::from([root]);
    while let Some(n) = queue.pop_front() {
        for (c, p) in parent_of.iter().enumerate() {
            if *p == Some(n) && seen.insert(c) {
                queue.push_back(c);
            }
        }
    }
    seen
}

/// Validate a spec and build the matching plan. Labels missing from
/// `inventory` produce warnings, not errors.
pub fn compile(spec: &PatternSpec, inventory: &LabelInventory) -> Result<Pattern, PatternError> {
    let (root, parent_of) = validate(spec).map_err(PatternError::Invalid)?;

    let mut warnings = Vec::new();
    let mut check_label = |label: &str, what: String| {
        if !inventory.contains(label) {
            let msg = format!(
                "{what}: relation \"{label}\" is not in the {} inventory",
                inventory.name
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    };
    for n in &spec.nodes {
        for d in &n.deprel {
            check_label(d, format!("node {}", n.name));
        }
    }
    let mut edge_rel: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for e in &spec.edges {
        for d in &e.deprel {
            check_label(d, format!("edge {} -> {}", e.parent, e.child));
        }
        let c = spec.node_index(&e.child).expect("validated");
        edge_rel.insert(c, e.deprel.clone());
    }

    // breadth-first from the root so every node's parent is placed first
    let mut order = Vec::with_capacity(spec.nodes.len());
    let mut queue = VecDeque::from([root]);
    while let Some(n) = queue.pop_front() {
        order.push(n);
        for (c, p) in parent_of.iter().enumerate() {
            if *p == Some(n) {
                queue.push_back(c);
            }
        }
    }
    let position: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let adjacency: Vec<(usize, usize)> = spec
        .adjacency
        .iter()
        .map(|a| (spec.node_index(&a.left).unwrap(), spec.node_index(&a.right).unwrap()))
        .collect();
    let plan = order
        .iter()
        .map(|&n| PlanStep {
            node: n,
            parent: parent_of[n].map(|p| (p, edge_rel.get(&n).cloned().unwrap_or_default())),
            adjacency: adjacency
                .iter()
                .copied()
                .filter(|&(l, r)| position[&l].max(position[&r]) == position[&n])
                .collect(),
        })
        .collect();

    let constraints = spec
        .nodes
        .iter()
        .map(|n| NodeConstraint {
            upos: n.upos.clone(),
            lemma: n.lemma.iter().map(|l| l.to_lowercase()).collect(),
            deprel: n.deprel.clone(),
        })
        .collect();
    let captures = spec
        .captures
        .iter()
        .map(|c| (c.clone(), spec.node_index(c).unwrap()))
        .collect();

    Ok(Pattern {
        spec: spec.clone(),
        constraints,
        plan,
        captures,
        multiword: inventory.multiword.clone(),
        warnings,
    })
}
