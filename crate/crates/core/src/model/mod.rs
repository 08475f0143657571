//! Black-box models queried by the miners.
//!
//! [`ModelClient`] is what the miners call: it receives the concrete retained
//! mask, the matching source texts and the fixed context. Scripted and
//! validity-assignment clients answer from a table keyed by mask. Remote and
//! replayed models go through [`RagModel`], which renders a [`RagPrompt`] and
//! hands a [`ChatRequest`] to a [`ChatModel`].

mod remote;
mod transcript;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Context, SourceMask};

pub use remote::{HttpChatModel, RemoteConfig};
pub use transcript::{request_hash, RecordingChatModel, TranscriptEntry, TranscriptReplay};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("scripted model has no output for retained set {0}")]
    Unscripted(SourceMask),
    #[error("mask width {found} does not match model width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("request to {endpoint} failed with HTTP {status}: {body}")]
    Http {
        endpoint: String,
        status: u16,
        body: String,
    },
    #[error("request to {endpoint} failed: {message}")]
    Transport { endpoint: String, message: String },
    #[error("malformed response from {endpoint}: {message}")]
    MalformedResponse { endpoint: String, message: String },
    #[error("no recorded response for request {0}")]
    ReplayMiss(String),
    #[error("transcript error: {0}")]
    Transcript(String),
    #[error("{0}")]
    Other(String),
}

/// One inference request as seen by a [`ModelClient`].
#[derive(Debug, Clone, Copy)]
pub struct ModelInput<'a> {
    /// Canonical mask of the sources actually kept in the prompt.
    pub retained: SourceMask,
    pub sources: &'a [&'a str],
    pub context: &'a Context,
}

/// The model `M`: maps retained sources plus fixed context to output text.
///
/// Implementations must tolerate concurrent calls.
pub trait ModelClient: Send + Sync {
    fn infer(&self, input: &ModelInput<'_>) -> Result<String, ModelError>;
}

impl<T: ModelClient + ?Sized> ModelClient for &T {
    fn infer(&self, input: &ModelInput<'_>) -> Result<String, ModelError> {
        (**self).infer(input)
    }
}

impl<T: ModelClient + ?Sized> ModelClient for Box<T> {
    fn infer(&self, input: &ModelInput<'_>) -> Result<String, ModelError> {
        (**self).infer(input)
    }
}

impl<T: ModelClient + ?Sized> ModelClient for std::sync::Arc<T> {
    fn infer(&self, input: &ModelInput<'_>) -> Result<String, ModelError> {
        (**self).infer(input)
    }
}

/// Table-driven model keyed by the concrete retained mask.
#[derive(Debug, Clone)]
pub struct ScriptedModel {
    width: usize,
    outputs: HashMap<u64, String>,
    default: Option<String>,
}

impl ScriptedModel {
    pub fn new(width: usize) -> Self {
        ScriptedModel {
            width,
            outputs: HashMap::new(),
            default: None,
        }
    }

    /// Scripts every one of the `2^width` retained sets from a function.
    pub fn from_fn(width: usize, mut f: impl FnMut(SourceMask) -> String) -> Self {
        assert!(width <= 24, "from_fn materializes 2^width outputs");
        let mut model = ScriptedModel::new(width);
        for bits in 0..(1u64 << width) {
            let mask = SourceMask::from_raw(bits, width);
            model.outputs.insert(bits, f(mask));
        }
        model
    }

    pub fn with_output(mut self, retained: SourceMask, output: impl Into<String>) -> Self {
        self.insert(retained, output);
        self
    }

    pub fn insert(&mut self, retained: SourceMask, output: impl Into<String>) {
        assert_eq!(retained.width(), self.width, "mask width mismatch");
        self.outputs.insert(retained.bits(), output.into());
    }

    /// Output for any retained set not listed explicitly.
    pub fn with_default(mut self, output: impl Into<String>) -> Self {
        self.default = Some(output.into());
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

impl ModelClient for ScriptedModel {
    fn infer(&self, input: &ModelInput<'_>) -> Result<String, ModelError> {
        if input.retained.width() != self.width {
            return Err(ModelError::WidthMismatch {
                expected: self.width,
                found: input.retained.width(),
            });
        }
        self.outputs
            .get(&input.retained.bits())
            .or(self.default.as_ref())
            .cloned()
            .ok_or(ModelError::Unscripted(input.retained))
    }
}

/// Marks which lattice nodes satisfy the predicate; answers `"1"` or `"0"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityAssignment {
    width: usize,
    satisfied: Vec<bool>,
}

impl ValidityAssignment {
    pub fn new(width: usize, satisfied: impl IntoIterator<Item = SourceMask>) -> Self {
        let mut assignment = ValidityAssignment {
            width,
            satisfied: vec![false; 1 << width],
        };
        for mask in satisfied {
            assert_eq!(mask.width(), width, "mask width mismatch");
            assignment.satisfied[mask.bits() as usize] = true;
        }
        assignment
    }

    /// Bit `i` of `table` decides node `i`; only meaningful for `width <= 6`.
    pub fn from_table(width: usize, table: u64) -> Self {
        assert!(width <= 6, "a u64 table covers at most 64 nodes");
        ValidityAssignment {
            width,
            satisfied: (0..1u64 << width).map(|i| table >> i & 1 == 1).collect(),
        }
    }

    pub fn from_fn(width: usize, f: impl Fn(SourceMask) -> bool) -> Self {
        ValidityAssignment {
            width,
            satisfied: (0..1u64 << width)
                .map(|b| f(SourceMask::from_raw(b, width)))
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_satisfied(&self, mask: SourceMask) -> bool {
        self.satisfied[mask.bits() as usize]
    }

    pub fn satisfied(&self) -> impl Iterator<Item = SourceMask> + '_ {
        self.satisfied
            .iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(|(b, _)| SourceMask::from_raw(b as u64, self.width))
    }
}

impl ModelClient for ValidityAssignment {
    fn infer(&self, input: &ModelInput<'_>) -> Result<String, ModelError> {
        if input.retained.width() != self.width {
            return Err(ModelError::WidthMismatch {
                expected: self.width,
                found: input.retained.width(),
            });
        }
        Ok(if self.is_satisfied(input.retained) { "1" } else { "0" }.to_string())
    }
}

/// Wraps a client and counts the calls that reach it, per concrete mask.
#[derive(Debug)]
pub struct CountingClient<C> {
    inner: C,
    calls: AtomicUsize,
    per_mask: Mutex<HashMap<u64, usize>>,
}

impl<C> CountingClient<C> {
    pub fn new(inner: C) -> Self {
        CountingClient {
            inner,
            calls: AtomicUsize::new(0),
            per_mask: Mutex::new(HashMap::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Calls beyond the first for each distinct concrete input.
    pub fn duplicate_calls(&self) -> usize {
        self.per_mask
            .lock()
            .unwrap()
            .values()
            .map(|c| c.saturating_sub(1))
            .sum()
    }

    pub fn distinct_inputs(&self) -> usize {
        self.per_mask.lock().unwrap().len()
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }
}

impl<C: ModelClient> ModelClient for CountingClient<C> {
    fn infer(&self, input: &ModelInput<'_>) -> Result<String, ModelError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        *self
            .per_mask
            .lock()
            .unwrap()
            .entry(input.retained.bits())
            .or_insert(0) += 1;
        self.inner.infer(input)
    }
}

/// Prompt given to a retrieval-augmented model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RagPrompt {
    pub instructions: String,
    pub sources: Vec<String>,
    pub question: String,
}

impl RagPrompt {
    pub const NO_SOURCES: &'static str = "(no sources provided)";

    /// The user turn: numbered sources, then the question.
    pub fn user_message(&self) -> String {
        let mut out = String::from("Sources:\n");
        if self.sources.is_empty() {
            out.push_str(Self::NO_SOURCES);
            out.push('\n');
        }
        for (i, source) in self.sources.iter().enumerate() {
            let _ = writeln!(out, "Source {}: {}", i + 1, source);
        }
        let _ = write!(out, "\nQuestion: {}", self.question);
        out
    }

    pub fn to_messages(&self) -> Vec<ChatMessage> {
        vec![
            ChatMessage::system(self.instructions.clone()),
            ChatMessage::user(self.user_message()),
        ]
    }
}

pub fn assemble_prompt(retained_sources: &[&str], context: &Context) -> RagPrompt {
    RagPrompt {
        instructions: context.instructions.clone(),
        sources: retained_sources.iter().map(|s| s.to_string()).collect(),
        question: context.question.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// Body of an OpenAI-compatible chat-completions request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Anything that completes a chat request: HTTP endpoints, replays, test doubles.
pub trait ChatModel: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ModelError>;
}

impl<T: ChatModel + ?Sized> ChatModel for &T {
    fn complete(&self, request: &ChatRequest) -> Result<String, ModelError> {
        (**self).complete(request)
    }
}

impl<T: ChatModel + ?Sized> ChatModel for std::sync::Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ModelError> {
        (**self).complete(request)
    }
}

impl<T: ChatModel + ?Sized> ChatModel for Box<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ModelError> {
        (**self).complete(request)
    }
}

/// Chat model backed by a closure; used for judges and simulated readers in tests.
pub struct FnChatModel<F>(pub F);

impl<F> ChatModel for FnChatModel<F>
where
    F: Fn(&ChatRequest) -> Result<String, ModelError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<String, ModelError> {
        (self.0)(request)
    }
}

/// Request parameters shared by every prompt sent through a [`RagModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSettings {
    pub model: String,
    #[serde(default)]
    pub temperature: f32,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ChatSettings {
    pub fn new(model: impl Into<String>) -> Self {
        ChatSettings {
            model: model.into(),
            temperature: 0.0,
            seed: None,
        }
    }

    pub fn request(&self, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            messages,
            temperature: self.temperature,
            seed: self.seed,
        }
    }
}

/// Retrieval-augmented model: renders a prompt per node and asks a chat model.
pub struct RagModel<C> {
    chat: C,
    settings: ChatSettings,
}

impl<C: ChatModel> RagModel<C> {
    pub fn new(chat: C, settings: ChatSettings) -> Self {
        RagModel { chat, settings }
    }

    pub fn request_for(&self, sources: &[&str], context: &Context) -> ChatRequest {
        self.settings
            .request(assemble_prompt(sources, context).to_messages())
    }

    pub fn chat(&self) -> &C {
        &self.chat
    }
}

impl<C: ChatModel> ModelClient for RagModel<C> {
    fn infer(&self, input: &ModelInput<'_>) -> Result<String, ModelError> {
        let request = self.request_for(input.sources, input.context);
        self.chat.complete(&request)
    }
}
