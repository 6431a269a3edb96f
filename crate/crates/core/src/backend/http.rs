use std::time::Duration;

use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatRequest, Role};

/// OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub retries: u32,
    /// First retry delay; doubles on every further attempt.
    pub backoff: Duration,
}

impl HttpConfig {
    /// Reads `REPLAN_HTTP_ENDPOINT`, `REPLAN_HTTP_KEY` and `REPLAN_HTTP_MODEL`.
    pub fn from_env() -> Result<Self, BackendError> {
        let endpoint = std::env::var("REPLAN_HTTP_ENDPOINT")
            .map_err(|_| BackendError::Config("REPLAN_HTTP_ENDPOINT is not set".into()))?;
        Ok(Self {
            endpoint,
            api_key: std::env::var("REPLAN_HTTP_KEY").ok(),
            model: std::env::var("REPLAN_HTTP_MODEL").unwrap_or_else(|_| "gpt-4".into()),
            timeout: Duration::from_secs(120),
            retries: 3,
            backoff: Duration::from_millis(500),
        })
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn body(&self, request: &ChatRequest<'_>) -> Value {
        let mut content = vec![json!({"type": "text", "text": request.prompt.text})];
        // No renderer: the perceiver gets the scene as structured text.
        if let (Role::Perceiver, Some(scene)) = (request.role, request.scene) {
            let snapshot = serde_json::to_string(&scene.snapshot()).unwrap_or_default();
            content.push(json!({"type": "text", "text": format!("Scene state: {snapshot}")}));
        }
        json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, (bool, BackendError)> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| (true, BackendError::Http { status: None, message: e.to_string() }))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let retry = status == 429 || status >= 500;
            let message = resp.body_mut().read_to_string().unwrap_or_default();
            return Err((retry, BackendError::Http { status: Some(status), message }));
        }
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| (false, BackendError::Http { status: Some(status), message: e.to_string() }))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| (false, BackendError::Http { status: Some(status), message: "response has no message content".into() }))
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        let body = self.body(request);
        let mut delay = self.config.backoff;
        let mut tries = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((true, e)) if tries < self.config.retries => {
                    log::warn!("chat request failed ({e}), retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    tries += 1;
                }
                Err((_, e)) => return Err(e),
            }
        }
    }
}
