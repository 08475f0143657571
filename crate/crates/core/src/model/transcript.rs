//! Record/replay of chat requests as JSON lines.
//!
//! Each line is `{"request_hash": .., "request": .., "response_text": ..}`
//! where the hash is the SHA-256 of the request's canonical JSON encoding.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatModel, ChatRequest, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_hash: String,
    pub request: ChatRequest,
    pub response_text: String,
}

pub fn request_hash(request: &ChatRequest) -> String {
    let canonical = serde_json::to_vec(request).expect("chat requests always serialize");
    hex::encode(Sha256::digest(&canonical))
}

/// Serves recorded completions; any unrecorded request is an error.
#[derive(Debug, Default)]
pub struct TranscriptReplay {
    responses: HashMap<String, String>,
}

impl TranscriptReplay {
    pub fn from_entries(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        TranscriptReplay {
            responses: entries
                .into_iter()
                .map(|e| (e.request_hash, e.response_text))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let file = File::open(path)
            .map_err(|e| ModelError::Transcript(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ModelError::Transcript(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(&line).map_err(|e| {
                ModelError::Transcript(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl ChatModel for TranscriptReplay {
    fn complete(&self, request: &ChatRequest) -> Result<String, ModelError> {
        let hash = request_hash(request);
        self.responses
            .get(&hash)
            .cloned()
            .ok_or(ModelError::ReplayMiss(hash))
    }
}

/// Passes requests through and keeps one entry per distinct request.
pub struct RecordingChatModel<C> {
    inner: C,
    entries: Mutex<Vec<TranscriptEntry>>,
    seen: Mutex<HashMap<String, usize>>,
}

impl<C: ChatModel> RecordingChatModel<C> {
    pub fn new(inner: C) -> Self {
        RecordingChatModel {
            inner,
            entries: Mutex::new(Vec::new()),
            seen: Mutex::new(HashMap::new()),
        }
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().unwrap().clone()
    }

    /// Writes entries sorted by hash so re-recording is diff-stable.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut entries = self.entries();
        entries.sort_by(|a, b| a.request_hash.cmp(&b.request_hash));
        let io = |e: std::io::Error| ModelError::Transcript(format!("{}: {e}", path.display()));
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        for entry in entries {
            let line = serde_json::to_string(&entry).expect("entries serialize");
            writeln!(out, "{line}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

impl<C: ChatModel> ChatModel for RecordingChatModel<C> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ModelError> {
        let response = self.inner.complete(request)?;
        let hash = request_hash(request);
        let mut seen = self.seen.lock().unwrap();
        if !seen.contains_key(&hash) {
            let mut entries = self.entries.lock().unwrap();
            seen.insert(hash.clone(), entries.len());
            entries.push(TranscriptEntry {
                request_hash: hash,
                request: request.clone(),
                response_text: response.clone(),
            });
        }
        Ok(response)
    }
}
