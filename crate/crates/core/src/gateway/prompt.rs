use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pattern::{CandidateInstance, DOBJ, POBJ, PREP, VERB};

const CATALOG: &str = include_str!("../../data/prompts.toml");
const FEW_SHOTS: &str = include_str!("../../data/few_shots.toml");

/// How shots and batch items are serialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InputFormat {
    #[serde(rename = "csv")]
    Csv,
    #[serde(rename = "jsonl")]
    Jsonl,
    #[serde(rename = "jsonl+explanations")]
    JsonlExplanations,
    #[serde(rename = "tuple-only")]
    TupleOnly,
    #[serde(rename = "substring")]
    Substring,
    #[serde(rename = "sentence+tuple")]
    SentenceTuple,
    #[serde(rename = "sentence+substring")]
    SentenceSubstring,
}

impl InputFormat {
    pub const ALL: [InputFormat; 7] = [
        InputFormat::Csv,
        InputFormat::Jsonl,
        InputFormat::JsonlExplanations,
        InputFormat::TupleOnly,
        InputFormat::Substring,
        InputFormat::SentenceTuple,
        InputFormat::SentenceSubstring,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InputFormat::Csv => "csv",
            InputFormat::Jsonl => "jsonl",
            InputFormat::JsonlExplanations => "jsonl+explanations",
            InputFormat::TupleOnly => "tuple-only",
            InputFormat::Substring => "substring",
            InputFormat::SentenceTuple => "sentence+tuple",
            InputFormat::SentenceSubstring => "sentence+substring",
        }
    }

    pub fn wants_explanations(self) -> bool {
        self == InputFormat::JsonlExplanations
    }

    fn has_sentence(self) -> bool {
        !matches!(self, InputFormat::TupleOnly | InputFormat::Substring)
    }

    fn has_tuple(self) -> bool {
        matches!(self, InputFormat::TupleOnly | InputFormat::SentenceTuple)
    }

    fn has_substring(self) -> bool {
        matches!(self, InputFormat::Substring | InputFormat::SentenceSubstring)
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        InputFormat::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown input format {s:?}"))
    }
}

/// Order in which shots are listed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShotLayout {
    /// All positives under one header, then all negatives.
    Grouped,
    /// One list, positive and negative in turn.
    #[default]
    Alternating,
}

/// A complete prompt configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    pub instruction: String,
    pub input_format: InputFormat,
    #[serde(default)]
    pub shot_layout: ShotLayout,
    pub shots_per_class: usize,
    pub batch_size: usize,
    pub model_id: String,
    #[serde(default = "one")]
    pub vote_k: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch of {got} exceeds batch size {max}")]
    BatchTooLarge { got: usize, max: usize },
    #[error("{needed} {class} shots required, {available} available")]
    NotEnoughShots {
        class: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("shot {0} has no explanation but the format requires one")]
    MissingExplanation(usize),
    #[error("candidate {candidate_id} lacks the {capture} capture needed by {format}")]
    MissingCapture {
        candidate_id: String,
        capture: &'static str,
        format: InputFormat,
    },
    #[error("invalid prompt spec {id}: {reason}")]
    InvalidSpec { id: u32, reason: String },
    #[error("no preset prompt {0}")]
    UnknownPreset(u32),
}

impl PromptSpec {
    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |reason: &str| RenderError::InvalidSpec {
            id: self.id,
            reason: reason.to_string(),
        };
        if self.batch_size == 0 {
            return Err(bad("batch_size must be at least 1"));
        }
        if self.vote_k == 0 || self.vote_k.is_multiple_of(2) {
            return Err(bad("vote_k must be odd"));
        }
        if self.model_id.trim().is_empty() {
            return Err(bad("model_id is empty"));
        }
        Ok(())
    }
}

/// A labeled example shown to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShot {
    pub sentence: String,
    pub verb: String,
    pub dobj: String,
    pub prep: String,
    pub pobj: String,
    pub label: bool,
    #[serde(default)]
    pub explanation: String,
}

impl FewShot {
    /// Stand-in for the verb-to-object substring: shots carry no parse, so
    /// the structured fields are joined.
    fn substring(&self) -> String {
        [&self.verb, &self.dobj, &self.prep, &self.pobj]
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Deserialize)]
struct CatalogFile {
    text: Texts,
    output: std::collections::BTreeMap<String, String>,
    preset: Vec<PresetRow>,
}

#[derive(Debug, Clone, Deserialize)]
struct Texts {
    system: String,
    instruction_short: String,
    instruction_long: String,
    positive_header: String,
    negative_header: String,
    shots_header: String,
    shots_header_explained: String,
    batch_header: String,
}

#[derive(Deserialize)]
struct PresetRow {
    id: u32,
    #[serde(default)]
    system: bool,
    instruction: String,
    input_format: InputFormat,
    shot_layout: ShotLayout,
    shots_per_class: usize,
    batch_size: usize,
    model_id: String,
    vote_k: usize,
    #[serde(default)]
    change: Option<String>,
    #[serde(default)]
    inferred: bool,
}

/// One bundled preset with its provenance notes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Preset {
    pub spec: PromptSpec,
    /// What changed relative to an earlier preset.
    pub change: Option<String>,
    /// Parameters reconstructed from a shared description rather than stated.
    pub inferred: bool,
}

struct Catalog {
    texts: Texts,
    outputs: Vec<(InputFormat, String)>,
    presets: Vec<Preset>,
}

fn catalog() -> &'static Catalog {
    static CELL: OnceLock<Catalog> = OnceLock::new();
    CELL.get_or_init(|| {
        let file: CatalogFile = toml::from_str(CATALOG).expect("bundled prompt catalog is valid");
        let outputs = file
            .output
            .iter()
            .map(|(k, v)| (k.parse().expect("known format"), v.clone()))
            .collect();
        let presets = file
            .preset
            .into_iter()
            .map(|row| {
                let instruction = match row.instruction.as_str() {
                    "short" => file.text.instruction_short.clone(),
                    _ => file.text.instruction_long.clone(),
                };
                Preset {
                    spec: PromptSpec {
                        id: row.id,
                        system_prompt: row.system.then(|| file.text.system.clone()),
                        instruction,
                        input_format: row.input_format,
                        shot_layout: row.shot_layout,
                        shots_per_class: row.shots_per_class,
                        batch_size: row.batch_size,
                        model_id: row.model_id,
                        vote_k: row.vote_k,
                    },
                    change: row.change,
                    inferred: row.inferred,
                }
            })
            .collect();
        Catalog {
            texts: file.text,
            outputs,
            presets,
        }
    })
}

/// All bundled presets, ordered by id.
pub fn presets() -> &'static [Preset] {
    &catalog().presets
}

pub fn preset(id: u32) -> Result<PromptSpec, RenderError> {
    presets()
        .iter()
        .find(|p| p.spec.id == id)
        .map(|p| p.spec.clone())
        .ok_or(RenderError::UnknownPreset(id))
}

/// The bundled example sentences, positives first.
pub fn bundled_shots() -> Vec<FewShot> {
    #[derive(Deserialize)]
    struct File {
        shot: Vec<FewShot>,
    }
    let file: File = toml::from_str(FEW_SHOTS).expect("bundled few-shots are valid");
    file.shot
}

/// The output-format sentence for a format and batch size.
pub fn output_instruction(format: InputFormat, n: usize) -> String {
    let template = catalog()
        .outputs
        .iter()
        .find(|(f, _)| *f == format)
        .map(|(_, t)| t.as_str())
        .unwrap_or_default();
    template.replace("{n}", &n.to_string())
}

/// System and user text for one call. The shot and batch lines are kept
/// alongside the assembled text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payload {
    pub system: Option<String>,
    pub user: String,
    pub shot_lines: Vec<String>,
    pub batch_lines: Vec<String>,
}

struct Fields {
    id: String,
    sentence: String,
    verb: String,
    dobj: String,
    prep: String,
    pobj: String,
    substring: String,
    explanation: String,
    label: Option<bool>,
}

fn json_line(format: InputFormat, f: &Fields) -> String {
    let mut parts: Vec<(&str, String)> = vec![("id", f.id.clone())];
    if format.has_sentence() {
        parts.push(("sentence", f.sentence.clone()));
    }
    if format.has_tuple() {
        parts.push(("verb", f.verb.clone()));
        parts.push(("direct object", f.dobj.clone()));
        parts.push(("preposition", f.prep.clone()));
        parts.push(("prepositional object", f.pobj.clone()));
    }
    if format.has_substring() {
        parts.push(("string", f.substring.clone()));
    }
    if let Some(label) = f.label {
        if format.wants_explanations() {
            parts.push(("explanation", f.explanation.clone()));
        }
        parts.push(("label", label.to_string()));
    }
    let body: Vec<String> = parts
        .iter()
        .map(|(k, v)| {
            format!(
                "{}: {}",
                serde_json::Value::from(*k),
                serde_json::Value::from(v.as_str())
            )
        })
        .collect();
    format!("{{{}}}", body.join(", "))
}

fn csv_row(values: &[&str]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(values).expect("in-memory write");
    let bytes = w.into_inner().expect("in-memory flush");
    String::from_utf8(bytes).expect("utf-8 input").trim_end().to_string()
}

fn line(format: InputFormat, f: &Fields) -> String {
    match format {
        InputFormat::Csv => match f.label {
            Some(l) => csv_row(&[&f.id, &f.sentence, if l { "True" } else { "False" }]),
            None => csv_row(&[&f.id, &f.sentence]),
        },
        _ => json_line(format, f),
    }
}

fn shot_fields(i: usize, shot: &FewShot) -> Fields {
    Fields {
        id: format!("example-{}", i + 1),
        sentence: shot.sentence.clone(),
        verb: shot.verb.clone(),
        dobj: shot.dobj.clone(),
        prep: shot.prep.clone(),
        pobj: shot.pobj.clone(),
        substring: shot.substring(),
        explanation: shot.explanation.clone(),
        label: Some(shot.label),
    }
}

fn candidate_fields(format: InputFormat, c: &CandidateInstance) -> Result<Fields, RenderError> {
    let get = |name: &'static str| -> Result<String, RenderError> {
        match c.capture(name) {
            Some(cap) => Ok(if name == PREP {
                cap.form.to_lowercase()
            } else {
                cap.lemma.clone()
            }),
            None if format.has_tuple() => Err(RenderError::MissingCapture {
                candidate_id: c.candidate_id.clone(),
                capture: name,
                format,
            }),
            None => Ok(String::new()),
        }
    };
    Ok(Fields {
        id: c.candidate_id.clone(),
        sentence: c.text.clone(),
        verb: get(VERB)?,
        dobj: get(DOBJ)?,
        prep: get(PREP)?,
        pobj: get(POBJ)?,
        substring: c.capture_substring(),
        explanation: String::new(),
        label: None,
    })
}

/// Pick `k` shots of each class in catalog order, laid out as requested.
fn select_shots(spec: &PromptSpec, shots: &[FewShot]) -> Result<(Vec<FewShot>, Vec<FewShot>), RenderError> {
    let k = spec.shots_per_class;
    let pos: Vec<FewShot> = shots.iter().filter(|s| s.label).take(k).cloned().collect();
    let neg: Vec<FewShot> = shots.iter().filter(|s| !s.label).take(k).cloned().collect();
    let available = |label: bool| shots.iter().filter(|s| s.label == label).count();
    if pos.len() < k {
        return Err(RenderError::NotEnoughShots {
            class: "positive",
            needed: k,
            available: available(true),
        });
    }
    if neg.len() < k {
        return Err(RenderError::NotEnoughShots {
            class: "negative",
            needed: k,
            available: available(false),
        });
    }
    Ok((pos, neg))
}

/// Build the system and user text for one batch. Deterministic.
pub fn render_prompt(
    spec: &PromptSpec,
    shots: &[FewShot],
    batch: &[CandidateInstance],
) -> Result<Payload, RenderError> {
    spec.validate()?;
    if batch.is_empty() {
        return Err(RenderError::EmptyBatch);
    }
    if batch.len() > spec.batch_size {
        return Err(RenderError::BatchTooLarge {
            got: batch.len(),
            max: spec.batch_size,
        });
    }
    let format = spec.input_format;
    let (pos, neg) = select_shots(spec, shots)?;
    if format.wants_explanations() {
        if let Some(i) = pos.iter().chain(&neg).position(|s| s.explanation.trim().is_empty()) {
            return Err(RenderError::MissingExplanation(i));
        }
    }
    let texts = &catalog().texts;
    let k = spec.shots_per_class;

    let ordered: Vec<&FewShot> = match spec.shot_layout {
        ShotLayout::Grouped => pos.iter().chain(&neg).collect(),
        ShotLayout::Alternating => pos.iter().zip(&neg).flat_map(|(p, n)| [p, n]).collect(),
    };
    let shot_lines: Vec<String> = ordered
        .iter()
        .enumerate()
        .map(|(i, s)| line(format, &shot_fields(i, s)))
        .collect();
    let batch_lines: Vec<String> = batch
        .iter()
        .map(|c| candidate_fields(format, c).map(|f| line(format, &f)))
        .collect::<Result<_, _>>()?;

    let csv_header = |labeled: bool| match (format, labeled) {
        (InputFormat::Csv, true) => Some("id,sentence,label".to_string()),
        (InputFormat::Csv, false) => Some("id,sentence".to_string()),
        _ => None,
    };

    let mut sections: Vec<String> = vec![spec.instruction.clone()];
    if k > 0 {
        match spec.shot_layout {
            ShotLayout::Grouped => {
                for (header, lines) in [
                    (&texts.positive_header, &shot_lines[..k]),
                    (&texts.negative_header, &shot_lines[k..]),
                ] {
                    let mut block = vec![header.replace("{k}", &k.to_string())];
                    block.extend(csv_header(true));
                    block.extend(lines.iter().cloned());
                    sections.push(block.join("\n"));
                }
            }
            ShotLayout::Alternating => {
                let header = if format.wants_explanations() {
                    &texts.shots_header_explained
                } else {
                    &texts.shots_header
                };
                let mut block = vec![header.replace("{n}", &(2 * k).to_string())];
                block.extend(csv_header(true));
                block.extend(shot_lines.iter().cloned());
                sections.push(block.join("\n"));
            }
        }
    }
    let mut block = vec![texts.batch_header.clone()];
    block.extend(csv_header(false));
    block.extend(batch_lines.iter().cloned());
    sections.push(block.join("\n"));
    sections.push(output_instruction(format, batch.len()));

    Ok(Payload {
        system: spec.system_prompt.clone(),
        user: sections.join("\n\n"),
        shot_lines,
        batch_lines,
    })
}

/// The items of the batch section of a rendered user text, as JSON objects.
/// Mock backends use this to answer without knowing the prompt.
pub fn batch_items(user: &str) -> Vec<serde_json::Map<String, serde_json::Value>> {
    let header = &catalog().texts.batch_header;
    let Some(start) = user.find(header.as_str()) else {
        return Vec::new();
    };
    let section = user[start + header.len()..].trim_start_matches(['\r', '\n']);
    let section = section.split("\n\n").next().unwrap_or("");
    if section.trim_start().starts_with('{') {
        return section
            .lines()
            .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
            .filter_map(|v| v.as_object().cloned())
            .collect();
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(section.as_bytes());
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(_) => return Vec::new(),
    };
    reader
        .records()
        .filter_map(Result::ok)
        .map(|rec| {
            headers
                .iter()
                .zip(rec.iter())
                .map(|(h, v)| (h.to_string(), serde_json::Value::from(v)))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;

    fn candidates(n: usize) -> Vec<CandidateInstance> {
        let pattern = crate::pattern::cmc();
        let base = pattern.find_matches(&samples::sneezed_foam()).remove(0);
        (0..n)
            .map(|i| {
                let mut c = base.clone();
                c.candidate_id = format!("c{i:02}");
                c
            })
            .collect()
    }

    #[test]
    fn eighteen_presets() {
        let ps = presets();
        assert_eq!(ps.len(), 18);
        for (i, p) in ps.iter().enumerate() {
            assert_eq!(p.spec.id as usize, i + 1);
            p.spec.validate().unwrap();
        }
        assert_eq!(preset(12).unwrap().batch_size, 10);
        assert_eq!(preset(18).unwrap().vote_k, 3);
        assert!(preset(1).unwrap().system_prompt.is_none());
        assert!(presets()[12].inferred);
        assert!(preset(19).is_err());
    }

    #[test]
    fn ten_bundled_shots() {
        let shots = bundled_shots();
        assert_eq!(shots.len(), 10);
        assert_eq!(shots.iter().filter(|s| s.label).count(), 5);
        assert!(shots.iter().all(|s| !s.explanation.is_empty()));
    }

    #[test]
    fn preset_12_sections() {
        let spec = preset(12).unwrap();
        let payload = render_prompt(&spec, &bundled_shots(), &candidates(10)).unwrap();
        assert_eq!(payload.shot_lines.len(), 10);
        assert_eq!(payload.batch_lines.len(), 10);
        assert!(payload.user.contains("Label all 10 sentences."));
        assert!(payload.user.contains("jsonl codeblock"));
        assert!(payload.system.is_some());
        // alternating classes
        let labels: Vec<bool> = payload.shot_lines.iter().map(|l| l.ends_with("\"true\"}")).collect();
        assert_eq!(
            labels,
            [true, false, true, false, true, false, true, false, true, false]
        );
        assert!(payload.shot_lines[0].contains("\"explanation\""));
        assert_eq!(batch_items(&payload.user).len(), 10);
    }

    #[test]
    fn no_shots_single_item() {
        let mut spec = preset(12).unwrap();
        spec.shots_per_class = 0;
        let payload = render_prompt(&spec, &[], &candidates(1)).unwrap();
        assert!(payload.shot_lines.is_empty());
        assert_eq!(payload.batch_lines.len(), 1);
        assert!(!payload.user.contains("examples"));
    }

    #[test]
    fn contract_errors() {
        let spec = preset(12).unwrap();
        assert_eq!(
            render_prompt(&spec, &bundled_shots(), &candidates(11)),
            Err(RenderError::BatchTooLarge { got: 11, max: 10 })
        );
        assert_eq!(
            render_prompt(&spec, &bundled_shots(), &[]),
            Err(RenderError::EmptyBatch)
        );
        let mut shots = bundled_shots();
        shots[0].explanation.clear();
        assert_eq!(
            render_prompt(&spec, &shots, &candidates(1)),
            Err(RenderError::MissingExplanation(0))
        );
        // fifteen asks for more shots than are bundled
        assert!(matches!(
            render_prompt(&preset(15).unwrap(), &bundled_shots(), &candidates(1)),
            Err(RenderError::NotEnoughShots { needed: 10, .. })
        ));
    }

    #[test]
    fn grouped_csv_layout() {
        let spec = preset(1).unwrap();
        let payload = render_prompt(&spec, &bundled_shots(), &candidates(3)).unwrap();
        assert!(payload
            .user
            .contains("Here are 5 positive examples:\nid,sentence,label\n"));
        assert!(payload.user.contains("Here are 5 negative examples:"));
        assert!(payload.shot_lines[0].ends_with(",True"));
        assert!(payload.shot_lines[5].ends_with(",False"));
        assert!(payload.user.contains("csv codeblock"));
        let items = batch_items(&payload.user);
        assert_eq!(items.len(), 3);
        assert_eq!(items[2]["id"], "c02");
    }

    #[test]
    fn tuple_and_substring_formats() {
        let cands = candidates(1);
        let payload = render_prompt(&preset(6).unwrap(), &bundled_shots(), &cands).unwrap();
        assert_eq!(
            payload.batch_lines[0],
            r#"{"id": "c00", "verb": "sneeze", "direct object": "foam", "preposition": "off", "prepositional object": "cappuccino"}"#
        );
        let payload = render_prompt(&preset(9).unwrap(), &bundled_shots(), &cands).unwrap();
        assert!(payload.batch_lines[0].contains(r#""string": "sneezed the foam off her cappuccino""#));
        assert!(payload.batch_lines[0].contains(r#""sentence": "She sneezed the foam off her cappuccino.""#));
    }

    #[test]
    fn rendering_is_deterministic() {
        let spec = preset(17).unwrap();
        let a = render_prompt(&spec, &bundled_shots(), &candidates(7)).unwrap();
        let b = render_prompt(&spec, &bundled_shots(), &candidates(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spec_validation() {
        let mut spec = preset(12).unwrap();
        spec.vote_k = 2;
        assert!(spec.validate().is_err());
        spec.vote_k = 1;
        spec.batch_size = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn input_format_names_round_trip() {
        for f in InputFormat::ALL {
            assert_eq!(f.as_str().parse::<InputFormat>().unwrap(), f);
            let json = serde_json::to_string(&f).unwrap();
            assert_eq!(json, format!("\"{}\"", f.as_str()));
        }
    }
}
