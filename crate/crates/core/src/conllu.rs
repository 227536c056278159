//! CoNLL-U ingestion and the sentence model the rest of the toolkit runs on.
//!
//! Only the columns the pipeline needs are kept: form, lemma, both POS tags,
//! head, relation and the `SpaceAfter=No` flag from MISC. Multiword-token
//! ranges (`1-2`) and empty nodes (`1.1`) are skipped.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    /// Index of the governor, 0 for the root.
    pub head: usize,
    pub deprel: String,
    #[serde(default = "default_space_after")]
    pub space_after: bool,
}

fn default_space_after() -> bool {
    true
}

impl Token {
    /// Lemma, falling back to the surface form when the column was `_`.
    pub fn lemma_or_form(&self) -> &str {
        if self.lemma.is_empty() || self.lemma == "_" {
            &self.form
        } else {
            &self.lemma
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    #[serde(default)]
    pub source: String,
    pub tokens: Vec<Token>,
}

/// Why a sentence is not a single-rooted dependency tree.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructureProblem {
    #[error("token indices are not contiguous: expected {expected}, found {found}")]
    NonContiguous { expected: usize, found: usize },
    #[error("token {token} has head {head} outside the sentence")]
    HeadOutOfRange { token: usize, head: usize },
    #[error("token {0} is its own head")]
    SelfLoop(usize),
    #[error("token {0} has an empty form")]
    EmptyForm(usize),
    #[error("no root token")]
    NoRoot,
    #[error("multiple roots: {0:?}")]
    MultipleRoots(Vec<usize>),
    #[error("cycle through token {0}")]
    Cycle(usize),
}

#[derive(Debug, Error)]
pub enum ConlluError {
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    Columns { line: usize, found: usize },
    #[error("line {line}: invalid {column} value {value:?}")]
    Field {
        line: usize,
        column: &'static str,
        value: String,
    },
    #[error("sentence {id}: {problem}")]
    Structure { id: String, problem: StructureProblem },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundsError {
    pub index: usize,
    pub len: usize,
}

impl std::error::Error for BoundsError {}

impl fmt::Display for BoundsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "token index {} out of range 1..={}", self.index, self.len)
    }
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token at a 1-based index.
    pub fn token(&self, index: usize) -> Option<&Token> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    pub fn root(&self) -> Option<usize> {
        self.tokens.iter().find(|t| t.head == 0).map(|t| t.index)
    }

    /// Dependents of each token, indexed by 0..=n (slot 0 holds the root).
    pub fn children_table(&self) -> Vec<Vec<usize>> {
        let mut table = vec![Vec::new(); self.tokens.len() + 1];
        for t in &self.tokens {
            if t.head <= self.tokens.len() {
                table[t.head].push(t.index);
            }
        }
        table
    }

    pub fn children(&self, index: usize) -> impl Iterator<Item = &Token> + '_ {
        self.tokens.iter().filter(move |t| t.head == index)
    }

    pub fn validate(&self) -> Result<(), StructureProblem> {
        let n = self.tokens.len();
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i + 1 {
                return Err(StructureProblem::NonContiguous {
                    expected: i + 1,
                    found: t.index,
                });
            }
            if t.form.is_empty() {
                return Err(StructureProblem::EmptyForm(t.index));
            }
            if t.head > n {
                return Err(StructureProblem::HeadOutOfRange {
                    token: t.index,
                    head: t.head,
                });
            }
            if t.head == t.index {
                return Err(StructureProblem::SelfLoop(t.index));
            }
        }
        if n == 0 {
            return Ok(());
        }
        let roots: Vec<usize> = self.tokens.iter().filter(|t| t.head == 0).map(|t| t.index).collect();
        match roots.len() {
            0 => return Err(StructureProblem::NoRoot),
            1 => {}
            _ => return Err(StructureProblem::MultipleRoots(roots)),
        }
        for t in &self.tokens {
            let mut cur = t.index;
            let mut steps = 0;
            while cur != 0 {
                if steps > n {
                    return Err(StructureProblem::Cycle(t.index));
                }
                cur = self.tokens[cur - 1].head;
                steps += 1;
            }
        }
        Ok(())
    }

    /// Surface text. Forms are joined by single spaces except after tokens
    /// marked `SpaceAfter=No`.
    pub fn detokenize(&self) -> String {
        self.detokenize_with_offsets().0
    }

    /// Surface text plus the `[start, end)` byte offsets of every token.
    pub fn detokenize_with_offsets(&self) -> (String, Vec<(usize, usize)>) {
        self.detokenize_range(1, self.tokens.len())
    }

    /// Surface text of the inclusive 1-based token range `[from, to]`.
    pub fn detokenize_range(&self, from: usize, to: usize) -> (String, Vec<(usize, usize)>) {
        let mut text = String::new();
        let mut offsets = Vec::new();
        let slice = if from == 0 || from > to || to > self.tokens.len() {
            &self.tokens[0..0]
        } else {
            &self.tokens[from - 1..to]
        };
        for (i, t) in slice.iter().enumerate() {
            let start = text.len();
            text.push_str(&t.form);
            offsets.push((start, text.len()));
            if t.space_after && i + 1 < slice.len() {
                text.push(' ');
            }
        }
        (text, offsets)
    }

    /// Copy of the sentence with the form at `index` replaced. Lemma and tags
    /// are left as they were.
    pub fn replace_token(&self, index: usize, new_form: &str) -> Result<Sentence, BoundsError> {
        if index == 0 || index > self.tokens.len() {
            return Err(BoundsError {
                index,
                len: self.tokens.len(),
            });
        }
        let mut out = self.clone();
        out.tokens[index - 1].form = new_form.to_string();
        Ok(out)
    }
}

/// What to do with sentences that parse but are not well-formed trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Fail on the first malformed tree.
    Strict,
    /// Log and skip malformed trees.
    #[default]
    Lenient,
}

/// Streaming reader yielding one [`Sentence`] per CoNLL-U block.
pub struct ConlluReader<R> {
    lines: std::io::Lines<R>,
    source: String,
    mode: ParseMode,
    line_no: usize,
    block_no: usize,
    skipped: Vec<(String, StructureProblem)>,
    done: bool,
}

impl<R: BufRead> ConlluReader<R> {
    pub fn new(reader: R, source: impl Into<String>, mode: ParseMode) -> Self {
        ConlluReader {
            lines: reader.lines(),
            source: source.into(),
            mode,
            line_no: 0,
            block_no: 0,
            skipped: Vec::new(),
            done: false,
        }
    }

    /// Sentences dropped in lenient mode, with the reason.
    pub fn skipped(&self) -> &[(String, StructureProblem)] {
        &self.skipped
    }

    fn read_block(&mut self) -> Result<Option<Sentence>, ConlluError> {
        let mut id: Option<String> = None;
        let mut tokens = Vec::new();
        let mut seen_any = false;
        loop {
            let line = match self.lines.next() {
                Some(line) => line?,
                None => {
                    self.done = true;
                    break;
                }
            };
            self.line_no += 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                if seen_any {
                    break;
                }
                continue;
            }
            seen_any = true;
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((key, value)) = comment.split_once('=') {
                    if key.trim() == "sent_id" {
                        id = Some(value.trim().to_string());
                    }
                }
                continue;
            }
            if let Some(token) = parse_token_line(line, self.line_no)? {
                tokens.push(token);
            }
        }
        if tokens.is_empty() {
            return Ok(None);
        }
        self.block_no += 1;
        let id = id.unwrap_or_else(|| format!("{}#{}", self.source, self.block_no));
        Ok(Some(Sentence {
            id,
            source: self.source.clone(),
            tokens,
        }))
    }
}

impl<R: BufRead> Iterator for ConlluReader<R> {
    type Item = Result<Sentence, ConlluError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            let sentence = match self.read_block() {
                Ok(Some(s)) => s,
                Ok(None) => continue,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            };
            match sentence.validate() {
                Ok(()) => return Some(Ok(sentence)),
                Err(problem) => match self.mode {
                    ParseMode::Strict => {
                        self.done = true;
                        return Some(Err(ConlluError::Structure {
                            id: sentence.id,
                            problem,
                        }));
                    }
                    ParseMode::Lenient => {
                        log::warn!("skipping sentence {}: {}", sentence.id, problem);
                        self.skipped.push((sentence.id, problem));
                    }
                },
            }
        }
        None
    }
}

fn parse_token_line(line: &str, line_no: usize) -> Result<Option<Token>, ConlluError> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 10 {
        return Err(ConlluError::Columns {
            line: line_no,
            found: cols.len(),
        });
    }
    let id = cols[0];
    if id.contains('-') || id.contains('.') {
        return Ok(None);
    }
    let index: usize = id.parse().map_err(|_| ConlluError::Field {
        line: line_no,
        column: "ID",
        value: id.to_string(),
    })?;
    let head: usize = cols[6].parse().map_err(|_| ConlluError::Field {
        line: line_no,
        column: "HEAD",
        value: cols[6].to_string(),
    })?;
    let space_after = !cols[9].split('|').any(|item| item == "SpaceAfter=No");
    Ok(Some(Token {
        index,
        form: cols[1].to_string(),
        lemma: cols[2].to_string(),
        upos: cols[3].to_string(),
        xpos: cols[4].to_string(),
        head,
        deprel: cols[7].to_string(),
        space_after,
    }))
}

/// Parse a whole CoNLL-U stream.
pub fn parse_conllu<R: BufRead>(reader: R, source: &str, mode: ParseMode) -> Result<Vec<Sentence>, ConlluError> {
    ConlluReader::new(reader, source, mode).collect()
}

pub fn parse_conllu_str(text: &str, source: &str, mode: ParseMode) -> Result<Vec<Sentence>, ConlluError> {
    parse_conllu(text.as_bytes(), source, mode)
}

fn or_underscore(s: &str) -> &str {
    if s.is_empty() {
        "_"
    } else {
        s
    }
}

/// Write sentences back out as CoNLL-U. FEATS and DEPS are emitted as `_`.
pub fn write_conllu<W: Write>(sentences: &[Sentence], mut out: W) -> std::io::Result<()> {
    for s in sentences {
        writeln!(out, "# sent_id = {}", s.id)?;
        writeln!(out, "# text = {}", s.detokenize())?;
        for t in &s.tokens {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t_\t{}\t{}\t_\t{}",
                t.index,
                t.form,
                or_underscore(&t.lemma),
                or_underscore(&t.upos),
                or_underscore(&t.xpos),
                t.head,
                or_underscore(&t.deprel),
                if t.space_after { "_" } else { "SpaceAfter=No" }
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn to_conllu_string(sentences: &[Sentence]) -> String {
    let mut buf = Vec::new();
    write_conllu(sentences, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("forms are UTF-8")
}
