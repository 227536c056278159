//! Offline backends for tests and dry runs.

use serde_json::{Map, Value};

use super::backend::{Backend, BackendError, ChatReply, ChatRequest};
use super::parse::format_reply;
use super::prompt::{batch_items, InputFormat};

/// Verb forms the motion-list mock treats as describing motion.
pub const MOTION_FORMS: &[&str] = &[
    "throw", "throws", "threw", "throwing", "thrown", "fling", "flings", "flung", "flinging", "toss", "tosses",
    "tossed", "tossing", "push", "pushes", "pushed", "pushing", "kick", "kicks", "kicked", "kicking", "put", "puts",
    "putting", "drag", "drags", "dragged", "dragging", "shove", "shoves", "shoved", "shoving",
];

/// Any word of `text` is a motion verb form.
pub fn mentions_motion(text: &str) -> bool {
    text.split(|c: char| !c.is_alphanumeric())
        .any(|w| MOTION_FORMS.contains(&w.to_lowercase().as_str()))
}

/// Labels every batch item with a rule and replies in the format the prompt
/// asks for.
pub struct LabelingBackend<F> {
    rule: F,
}

impl<F> LabelingBackend<F>
where
    F: Fn(&Map<String, Value>) -> bool + Send + Sync,
{
    pub fn new(rule: F) -> Self {
        LabelingBackend { rule }
    }
}

/// Reply labeling the batch items of `user` as `rule` decides.
pub fn reply_for(user: &str, rule: impl Fn(&Map<String, Value>) -> bool) -> String {
    let format = if user.contains("csv codeblock") {
        InputFormat::Csv
    } else {
        InputFormat::Jsonl
    };
    let labels: Vec<(String, bool)> = batch_items(user)
        .iter()
        .filter_map(|item| {
            let id = match item.get("id")? {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            Some((id, rule(item)))
        })
        .collect();
    format_reply(format, &labels)
}

impl<F> Backend for LabelingBackend<F>
where
    F: Fn(&Map<String, Value>) -> bool + Send + Sync,
{
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, BackendError> {
        Ok(ChatReply::text(reply_for(&req.user, &self.rule)))
    }
}

fn item_text(item: &Map<String, Value>) -> String {
    ["sentence", "string", "verb"]
        .iter()
        .filter_map(|k| item.get(*k).and_then(Value::as_str))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Motion-list rule for both uses: classification items are positive when
/// their text mentions a motion verb; free questions get "Yes." when the
/// quoted sentence does and "No." otherwise.
pub struct MotionListBackend;

impl Backend for MotionListBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, BackendError> {
        if !batch_items(&req.user).is_empty() {
            return Ok(ChatReply::text(reply_for(&req.user, |item| {
                mentions_motion(&item_text(item))
            })));
        }
        let quoted = req.user.split('"').nth(1).unwrap_or(&req.user);
        Ok(ChatReply::text(if mentions_motion(quoted) { "Yes." } else { "No." }))
    }
}

/// Always the same text.
pub struct ConstantBackend(pub String);

impl Backend for ConstantBackend {
    fn complete(&self, _req: &ChatRequest) -> Result<ChatReply, BackendError> {
        Ok(ChatReply::text(self.0.clone()))
    }
}

/// Mock backend by name: `all-true`, `all-false`, `motion-list`, or
/// `constant:<text>`.
pub fn named(name: &str) -> Option<Box<dyn Backend>> {
    match name {
        "all-true" => Some(Box::new(LabelingBackend::new(|_: &Map<String, Value>| true))),
        "all-false" => Some(Box::new(LabelingBackend::new(|_: &Map<String, Value>| false))),
        "motion-list" => Some(Box::new(MotionListBackend)),
        _ => name
            .strip_prefix("constant:")
            .map(|t| Box::new(ConstantBackend(t.to_string())) as Box<dyn Backend>),
    }
}
