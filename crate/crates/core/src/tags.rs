//! The structured output grammar: one `<think>...</think>` block followed
//! by one `<response>...</response>` block, nothing else but whitespace.
//!
//! Parsing is strict on purpose. The format reward is binary, so any
//! ambiguity here would leak straight into the training signal.

use serde::{Deserialize, Serialize};

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const RESPONSE_OPEN: &str = "<response>";
pub const RESPONSE_CLOSE: &str = "</response>";

/// A system turn split into its private reasoning and the visible reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedOutput {
    pub think: String,
    pub response: String,
    /// The original model output, kept for reward computation and logs.
    pub raw: String,
    /// False when the raw text failed the grammar and `response` is a
    /// fallback copy of the raw text.
    pub format_ok: bool,
}

impl TaggedOutput {
    /// Wraps raw text that did not parse; the whole text becomes the
    /// response so a rollout can still continue.
    pub fn fallback(raw: &str) -> Self {
        TaggedOutput {
            think: String::new(),
            response: raw.trim().to_string(),
            raw: raw.to_string(),
            format_ok: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("missing <think> block")]
    MissingThink,
    #[error("missing <response> block")]
    MissingResponse,
    #[error("duplicate tag {0}")]
    DuplicateTag(&'static str),
    #[error("tags out of order")]
    WrongOrder,
    #[error("non-whitespace text outside tags")]
    TextOutsideTags,
    #[error("empty response body")]
    EmptyResponse,
}

fn positions(haystack: &str, needle: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(i) = haystack[from..].find(needle) {
        out.push(from + i);
        from += i + needle.len();
    }
    out
}

/// Parses `text` against the strict grammar. Errors name the first
/// violated rule; `format_reward` maps any error to 0.
pub fn parse_tagged_output(text: &str) -> Result<TaggedOutput, FormatError> {
    let think_open = positions(text, THINK_OPEN);
    let think_close = positions(text, THINK_CLOSE);
    let resp_open = positions(text, RESPONSE_OPEN);
    let resp_close = positions(text, RESPONSE_CLOSE);

    // `<think>` is a prefix match of nothing else here, but `</think>`
    // substring-matches inside `</think>` only; `<response>` never
    // collides with `<think>`. Counting is safe.
    if think_open.is_empty() || think_close.is_empty() {
        return Err(FormatError::MissingThink);
    }
    if resp_open.is_empty() || resp_close.is_empty() {
        return Err(FormatError::MissingResponse);
    }
    if think_open.len() > 1 {
        return Err(FormatError::DuplicateTag(THINK_OPEN));
    }
    if think_close.len() > 1 {
        return Err(FormatError::DuplicateTag(THINK_CLOSE));
    }
    if resp_open.len() > 1 {
        return Err(FormatError::DuplicateTag(RESPONSE_OPEN));
    }
    if resp_close.len() > 1 {
        return Err(FormatError::DuplicateTag(RESPONSE_CLOSE));
    }

    let (to, tc, ro, rc) = (think_open[0], think_close[0], resp_open[0], resp_close[0]);
    if !(to < tc && tc < ro && ro < rc) {
        return Err(FormatError::WrongOrder);
    }

    let before = &text[..to];
    let between = &text[tc + THINK_CLOSE.len()..ro];
    let after = &text[rc + RESPONSE_CLOSE.len()..];
    if !before.trim().is_empty() || !between.trim().is_empty() || !after.trim().is_empty() {
        return Err(FormatError::TextOutsideTags);
    }

    let think = text[to + THINK_OPEN.len()..tc].trim().to_string();
    let response = text[ro + RESPONSE_OPEN.len()..rc].trim().to_string();
    if response.is_empty() {
        return Err(FormatError::EmptyResponse);
    }

    Ok(TaggedOutput {
        think,
        response,
        raw: text.to_string(),
        format_ok: true,
    })
}
