//! Prompt rendering, backends, reply parsing and batch classification.

pub mod backend;
mod classify;
pub mod mock;
mod parse;
mod prompt;
mod usage;

pub use backend::{
    Backend, BackendError, ChatReply, ChatRequest, FnBackend, HttpBackend, HttpConfig, RateLimiter, RecordingBackend,
    ReplayBackend, Transcript,
};
pub(crate) use classify::call_with_backoff;
pub use classify::{classify, majority_vote, ClassifyError, ClassifyOptions, ClassifyOutcome, LabelLine};
pub use parse::{
    extract_code_block, format_reply, parse_csv_response, parse_reply, parse_response, LabeledResult, ParseError,
    ParsedReply, SkippedLine,
};
pub use prompt::{
    batch_items, bundled_shots, output_instruction, preset, presets, render_prompt, FewShot, InputFormat, Payload,
    Preset, PromptSpec, RenderError, ShotLayout,
};
pub use usage::{estimate_tokens, Usage};
