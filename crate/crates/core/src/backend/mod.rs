//! Chat-completion backends and the recording session wrapper.

mod http;
pub mod oracle;
mod scripted;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::prompts::{Prompt, TemplateId};
use crate::world::{SceneSnapshot, WorldState};

pub use http::{HttpBackend, HttpConfig};
pub use oracle::OracleBackend;
pub use scripted::ScriptedBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Planner,
    Perceiver,
    Verifier,
}

/// One model call. Perceiver calls carry the scene they look at.
#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub role: Role,
    pub prompt: &'a Prompt,
    pub scene: Option<&'a WorldState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub enum BackendError {
    #[error("transcript exhausted at exchange {0}")]
    TranscriptExhausted(usize),
    #[error("transcript mismatch: expected {expected}, got {got}")]
    TranscriptMismatch { expected: String, got: String },
    #[error("http error{}: {message}", status.map(|s| format!(" {s}")).unwrap_or_default())]
    Http { status: Option<u16>, message: String },
    #[error("backend misconfigured: {0}")]
    Config(String),
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub role: Role,
    pub template: TemplateId,
    pub fingerprint: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images: Option<SceneSnapshot>,
    pub response: String,
    /// Wall-clock seconds; kept out of rollout logs so they stay reproducible.
    #[serde(skip)]
    pub latency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// Prompt text must match byte for byte.
    #[default]
    Exact,
    /// Template id and slot digest must match.
    Pattern,
}

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub fingerprint: String,
    pub role: Role,
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
    pub mode: MatchMode,
}

impl Transcript {
    pub fn from_exchanges(exchanges: &[ChatExchange], mode: MatchMode) -> Self {
        let entries = exchanges
            .iter()
            .map(|e| TranscriptEntry {
                fingerprint: e.fingerprint.clone(),
                role: e.role,
                prompt: e.prompt.clone(),
                response: e.response.clone(),
            })
            .collect();
        Self { entries, mode }
    }

    pub fn load(path: &Path, mode: MatchMode) -> std::io::Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
            })?;
            entries.push(entry);
        }
        Ok(Self { entries, mode })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

/// Backend handle for one episode. Records every exchange in order and
/// buffers the ones not yet attached to a log event.
#[derive(Clone)]
pub struct ChatSession {
    backend: Arc<dyn ChatBackend>,
    state: Arc<Mutex<SessionState>>,
}

#[derive(Default)]
struct SessionState {
    all: Vec<ChatExchange>,
    pending: Vec<ChatExchange>,
}

impl ChatSession {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self { backend, state: Arc::default() }
    }

    pub fn ask(&self, role: Role, prompt: &Prompt, scene: Option<&WorldState>) -> Result<String, BackendError> {
        let start = Instant::now();
        let response = self.backend.complete(&ChatRequest { role, prompt, scene })?;
        let exchange = ChatExchange {
            role,
            template: prompt.template,
            fingerprint: prompt.fingerprint(),
            prompt: prompt.text.clone(),
            images: scene.map(WorldState::snapshot),
            response: response.clone(),
            latency: start.elapsed().as_secs_f64(),
        };
        let mut st = self.state.lock().unwrap_or_else(|p| p.into_inner());
        st.all.push(exchange.clone());
        st.pending.push(exchange);
        Ok(response)
    }

    /// Exchanges since the previous drain.
    pub fn drain(&self) -> Vec<ChatExchange> {
        std::mem::take(&mut self.state.lock().unwrap_or_else(|p| p.into_inner()).pending)
    }

    pub fn exchanges(&self) -> Vec<ChatExchange> {
        self.state.lock().unwrap_or_else(|p| p.into_inner()).all.clone()
    }

    pub fn transcript(&self, mode: MatchMode) -> Transcript {
        Transcript::from_exchanges(&self.exchanges(), mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts;

    struct Echo;
    impl ChatBackend for Echo {
        fn complete(&self, r: &ChatRequest<'_>) -> Result<String, BackendError> {
            Ok(format!("echo {}", r.prompt.slots[0]))
        }
    }

    #[test]
    fn session_records_and_drains() {
        let s = ChatSession::new(Arc::new(Echo));
        s.ask(Role::Planner, &prompts::classify_action("Open the door"), None).unwrap();
        s.ask(Role::Planner, &prompts::classify_action("Look"), None).unwrap();
        assert_eq!(s.drain().len(), 2);
        assert!(s.drain().is_empty());
        assert_eq!(s.exchanges().len(), 2);
        assert_eq!(s.transcript(MatchMode::Exact).entries[1].response, "echo Look");
    }

    #[test]
    fn transcript_file_round_trip() {
        let s = ChatSession::new(Arc::new(Echo));
        s.ask(Role::Verifier, &prompts::question_type("What?\n\"quoted\""), None).unwrap();
        let t = s.transcript(MatchMode::Pattern);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        t.save(&path).unwrap();
        assert_eq!(Transcript::load(&path, MatchMode::Pattern).unwrap(), t);
    }
}
