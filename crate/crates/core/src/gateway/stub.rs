//! Deterministic offline substitutes for the remote models.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{ChatModel, ChatRequest, Embedder, GatewayError};

/// Character-trigram hashing embedder.
///
/// The text is lowercased, whitespace runs are collapsed to one space, and a
/// single space is added at both ends. Every window of three characters is
/// hashed with 64-bit FNV-1a over its UTF-8 bytes and adds 1.0 to bucket
/// `hash % dimension`. The count vector is then L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dimension: usize,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    pub fn embed_sync(&self, text: &str) -> Vec<f64> {
        let mut padded = String::with_capacity(text.len() + 2);
        padded.push(' ');
        for word in text.split_whitespace() {
            if padded.len() > 1 {
                padded.push(' ');
            }
            padded.extend(word.chars().flat_map(char::to_lowercase));
        }
        padded.push(' ');

        let chars: Vec<char> = padded.chars().collect();
        let mut counts = vec![0.0f64; self.dimension];
        let mut buf = [0u8; 12];
        for window in chars.windows(3) {
            let mut len = 0;
            for c in window {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            let bucket = (fnv1a(&buf[..len]) % self.dimension as u64) as usize;
            counts[bucket] += 1.0;
        }
        let norm = counts.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            counts.iter_mut().for_each(|v| *v /= norm);
        }
        counts
    }
}

#[async_trait]
impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    async fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        Ok(self.embed_sync(text))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptedFailure {
    Transport,
    Timeout,
    Status(u16),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptedReply {
    Reply(String),
    Fail(ScriptedFailure),
}

/// One canned exchange. `when` is a substring that must occur in the system
/// or user prompt; absent means any request matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    #[serde(flatten)]
    pub reply: ScriptedReply,
}

impl ScriptEntry {
    pub fn any(reply: impl Into<String>) -> Self {
        Self {
            when: None,
            reply: ScriptedReply::Reply(reply.into()),
        }
    }

    pub fn when(needle: impl Into<String>, reply: impl Into<String>) -> Self {
        Self {
            when: Some(needle.into()),
            reply: ScriptedReply::Reply(reply.into()),
        }
    }

    pub fn fail(failure: ScriptedFailure) -> Self {
        Self {
            when: None,
            reply: ScriptedReply::Fail(failure),
        }
    }

    fn matches(&self, request: &ChatRequest) -> bool {
        match &self.when {
            None => true,
            Some(needle) => {
                request.system_prompt.contains(needle.as_str())
                    || request.user_prompt.contains(needle.as_str())
            }
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct ScriptFile {
    entries: Vec<ScriptEntry>,
}

#[derive(Debug, Default)]
struct ScriptState {
    queue: VecDeque<ScriptEntry>,
    requests: Vec<ChatRequest>,
}

/// Chat double that answers from a queue of `(matcher, reply)` pairs.
///
/// Each request consumes the first queued entry that matches it. A request
/// nothing matches fails with [`GatewayError::Unscripted`]. Clones share the
/// same queue and request log.
#[derive(Debug, Clone, Default)]
pub struct ScriptedChat {
    state: Arc<Mutex<ScriptState>>,
}

impl ScriptedChat {
    pub fn new(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        let chat = Self::default();
        chat.extend(entries);
        chat
    }

    /// Loads `{"entries": [...]}` from a JSON file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            GatewayError::InvalidRequest(format!("cannot read script {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let file: ScriptFile = serde_json::from_str(text)
            .map_err(|e| GatewayError::InvalidRequest(format!("bad chat script: {e}")))?;
        Ok(Self::new(file.entries))
    }

    pub fn push(&self, entry: ScriptEntry) {
        self.lock().queue.push_back(entry);
    }

    pub fn extend(&self, entries: impl IntoIterator<Item = ScriptEntry>) {
        self.lock().queue.extend(entries);
    }

    /// Every request received so far, in arrival order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.lock().requests.clone()
    }

    pub fn remaining(&self) -> usize {
        self.lock().queue.len()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ScriptState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[async_trait]
impl ChatModel for ScriptedChat {
    async fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut state = self.lock();
        state.requests.push(request.clone());
        let pos = state
            .queue
            .iter()
            .position(|e| e.matches(request))
            .ok_or(GatewayError::Unscripted)?;
        let entry = state.queue.remove(pos).expect("position is in range");
        match entry.reply {
            ScriptedReply::Reply(text) => Ok(text),
            ScriptedReply::Fail(ScriptedFailure::Transport) => {
                Err(GatewayError::Transport("scripted transport failure".into()))
            }
            ScriptedReply::Fail(ScriptedFailure::Timeout) => Err(GatewayError::Timeout(Duration::ZERO)),
            ScriptedReply::Fail(ScriptedFailure::Status(status)) => Err(GatewayError::Provider {
                status,
                message: "scripted failure".into(),
            }),
        }
    }
}
