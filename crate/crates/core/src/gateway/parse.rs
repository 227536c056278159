use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::InputFormat;

/// One classification decision returned by the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledResult {
    pub candidate_id: String,
    pub label: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    /// The reply line this result was read from.
    #[serde(default)]
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedLine {
    pub line: usize,
    pub text: String,
}

/// Everything recovered from one reply.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParsedReply {
    pub results: Vec<LabeledResult>,
    pub missing: BTreeSet<String>,
    /// Ids the reply mentions that were not asked for.
    pub foreign: Vec<String>,
    pub duplicates: Vec<String>,
    pub skipped: Vec<SkippedLine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("reply contains no parseable line ({} skipped)", skipped.len())]
    Unparseable { skipped: Vec<SkippedLine> },
}

/// Contents of the first triple-backtick block, without its language tag, or
/// the whole text when there is none.
pub fn extract_code_block(text: &str) -> &str {
    let Some(open) = text.find("```") else {
        return text;
    };
    let after = &text[open + 3..];
    let body = match after.find('\n') {
        Some(nl) => &after[nl + 1..],
        None => after,
    };
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

fn parse_label(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

fn parse_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

struct Collector<'a> {
    expected: &'a BTreeSet<String>,
    seen: BTreeSet<String>,
    out: ParsedReply,
}

impl<'a> Collector<'a> {
    fn new(expected: &'a BTreeSet<String>) -> Self {
        Collector {
            expected,
            seen: BTreeSet::new(),
            out: ParsedReply::default(),
        }
    }

    fn skip(&mut self, line: usize, text: &str) {
        self.out.skipped.push(SkippedLine {
            line,
            text: text.to_string(),
        });
    }

    fn push(&mut self, id: String, label: bool, explanation: Option<String>, raw: &str) {
        if !self.expected.contains(&id) {
            log::warn!("reply labels unknown id {id}");
            self.out.foreign.push(id);
        } else if !self.seen.insert(id.clone()) {
            self.out.duplicates.push(id);
        } else {
            self.out.results.push(LabeledResult {
                candidate_id: id,
                label,
                explanation,
                raw: raw.to_string(),
            });
        }
    }

    fn object(&mut self, line: usize, raw: &str, obj: &serde_json::Map<String, Value>) {
        let id = obj.get("id").and_then(parse_id);
        let label = obj.get("label").and_then(parse_label);
        match (id, label) {
            (Some(id), Some(label)) => {
                let explanation = obj.get("explanation").and_then(Value::as_str).map(str::to_string);
                self.push(id, label, explanation, raw);
            }
            _ => self.skip(line, raw),
        }
    }

    fn finish(mut self) -> Result<ParsedReply, ParseError> {
        let nothing = self.out.results.is_empty() && self.out.foreign.is_empty() && self.out.duplicates.is_empty();
        if nothing {
            return Err(ParseError::Unparseable {
                skipped: self.out.skipped,
            });
        }
        self.out.missing = self.expected.difference(&self.seen).cloned().collect();
        Ok(self.out)
    }
}

/// Read a JSON-lines classification reply. A JSON array in place of lines is
/// accepted too.
pub fn parse_response(text: &str, expected: &BTreeSet<String>) -> Result<ParsedReply, ParseError> {
    let block = extract_code_block(text);
    let mut c = Collector::new(expected);
    if let Ok(Value::Array(items)) = serde_json::from_str::<Value>(block.trim()) {
        for (i, item) in items.iter().enumerate() {
            let raw = item.to_string();
            match item.as_object() {
                Some(obj) => c.object(i + 1, &raw, obj),
                None => c.skip(i + 1, &raw),
            }
        }
        return c.finish();
    }
    for (i, raw) in block.lines().enumerate() {
        let trimmed = raw.trim().trim_end_matches(',');
        if trimmed.is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(trimmed) {
            Ok(Value::Object(obj)) => c.object(i + 1, trimmed, &obj),
            _ => c.skip(i + 1, trimmed),
        }
    }
    c.finish()
}

/// Read a CSV reply with an `id` and a `label` column.
pub fn parse_csv_response(text: &str, expected: &BTreeSet<String>) -> Result<ParsedReply, ParseError> {
    let block = extract_code_block(text);
    let mut c = Collector::new(expected);
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(block.as_bytes());
    let headers: Vec<String> = match reader.headers() {
        Ok(h) => h.iter().map(|s| s.to_ascii_lowercase()).collect(),
        Err(_) => return c.finish(),
    };
    let id_col = headers.iter().position(|h| h == "id");
    let label_col = headers.iter().position(|h| h == "label");
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let Ok(rec) = rec else {
            c.skip(line, "");
            continue;
        };
        let raw = rec.iter().collect::<Vec<_>>().join(",");
        let id = id_col.and_then(|k| rec.get(k)).filter(|s| !s.is_empty());
        let label = label_col
            .and_then(|k| rec.get(k))
            .and_then(|s| parse_label(&Value::from(s)));
        match (id, label) {
            (Some(id), Some(label)) => c.push(id.to_string(), label, None, &raw),
            _ => c.skip(line, &raw),
        }
    }
    c.finish()
}

/// Parse with the reader matching the prompt's output contract.
pub fn parse_reply(format: InputFormat, text: &str, expected: &BTreeSet<String>) -> Result<ParsedReply, ParseError> {
    match format {
        InputFormat::Csv => parse_csv_response(text, expected),
        _ => parse_response(text, expected),
    }
}

/// A fenced reply labeling each id, in the shape the prompts ask for.
pub fn format_reply(format: InputFormat, labels: &[(String, bool)]) -> String {
    let mut out = String::new();
    match format {
        InputFormat::Csv => {
            out.push_str("```csv\nid,label\n");
            for (id, label) in labels {
                out.push_str(&format!("{id},{}\n", if *label { "True" } else { "False" }));
            }
        }
        _ => {
            out.push_str("```jsonl\n");
            for (id, label) in labels {
                let obj = serde_json::json!({ "id": id, "label": label.to_string() });
                out.push_str(&obj.to_string());
                out.push('\n');
            }
        }
    }
    out.push_str("```");
    out
}
