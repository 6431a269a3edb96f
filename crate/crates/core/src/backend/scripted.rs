use std::sync::Mutex;

use super::{BackendError, ChatBackend, ChatRequest, MatchMode, Transcript};

/// Replays a transcript in order. Calls are serialized internally.
pub struct ScriptedBackend {
    transcript: Transcript,
    cursor: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(transcript: Transcript) -> Self {
        Self { transcript, cursor: Mutex::new(0) }
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        let mut cursor = self.cursor.lock().unwrap_or_else(|p| p.into_inner());
        let Some(entry) = self.transcript.entries.get(*cursor) else {
            return Err(BackendError::TranscriptExhausted(*cursor));
        };
        let fingerprint = request.prompt.fingerprint();
        let matches = match self.transcript.mode {
            MatchMode::Exact => entry.prompt == request.prompt.text,
            MatchMode::Pattern => entry.fingerprint == fingerprint,
        };
        if !matches {
            return Err(BackendError::TranscriptMismatch { expected: entry.fingerprint.clone(), got: fingerprint });
        }
        *cursor += 1;
        Ok(entry.response.clone())
    }
}
