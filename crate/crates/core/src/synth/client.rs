//! Model clients for the synthesis pipeline: a table-driven mock and a
//! chat-completion HTTP client.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pipeline stage a request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Necessity,
    Order,
    Rewrite,
    Trajectory,
    Adjudicate,
    Curate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Necessity,
        Stage::Order,
        Stage::Rewrite,
        Stage::Trajectory,
        Stage::Adjudicate,
        Stage::Curate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Necessity => "necessity",
            Stage::Order => "order",
            Stage::Rewrite => "rewrite",
            Stage::Trajectory => "trajectory",
            Stage::Adjudicate => "adjudicate",
            Stage::Curate => "curate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRequest {
    pub stage: Stage,
    /// Identifies the conversation, e.g. a question id plus candidate index.
    pub key: String,
    pub system: String,
    pub prompt: String,
    /// Earlier turns or records the completion should condition on.
    pub context: Vec<String>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClientError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("environment variable {0} is not set")]
    MissingToken(String),
    #[error("script has no response for {stage:?} '{key}'")]
    ScriptExhausted { stage: Stage, key: String },
}

pub trait ModelClient: Sync {
    fn submit(&self, request: &ClientRequest) -> Result<String, ClientError>;

    /// Whether the pipeline must avoid concurrent submissions.
    fn single_flight(&self) -> bool {
        false
    }
}

/// A scripted response: either completion text or a simulated failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scripted {
    Reply(String),
    Timeout,
}

/// Deterministic mock: each `(stage, key)` has a queue of responses consumed
/// in order. A cursor is kept per key, so concurrent keys do not interact.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    table: BTreeMap<(Stage, String), Vec<Scripted>>,
    cursors: Mutex<HashMap<(Stage, String), usize>>,
}

impl ScriptedClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, stage: Stage, key: impl Into<String>, response: Scripted) {
        self.table.entry((stage, key.into())).or_default().push(response);
    }

    pub fn reply(&mut self, stage: Stage, key: impl Into<String>, text: impl Into<String>) {
        self.push(stage, key, Scripted::Reply(text.into()));
    }

    /// Number of requests served so far for `(stage, key)`.
    pub fn served(&self, stage: Stage, key: &str) -> usize {
        let cursors = self.cursors.lock().expect("cursor lock");
        cursors.get(&(stage, key.to_string())).copied().unwrap_or(0)
    }
}

impl ModelClient for ScriptedClient {
    fn submit(&self, request: &ClientRequest) -> Result<String, ClientError> {
        let id = (request.stage, request.key.clone());
        let exhausted = || ClientError::ScriptExhausted {
            stage: request.stage,
            key: request.key.clone(),
        };
        let queue = self.table.get(&id).ok_or_else(exhausted)?;
        let n = {
            let mut cursors = self.cursors.lock().expect("cursor lock");
            let c = cursors.entry(id).or_insert(0);
            let n = *c;
            *c += 1;
            n
        };
        match queue.get(n).ok_or_else(exhausted)? {
            Scripted::Reply(text) => Ok(text.clone()),
            Scripted::Timeout => Err(ClientError::Timeout),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteConfig {
    /// Base URL; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_secs: u64,
    /// Extra attempts after a failed request.
    pub retries: u32,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "glm-4.5v".into(),
            temperature: 0.0,
            token_env: "TIRLAB_API_KEY".into(),
            timeout_secs: 60,
            retries: 2,
        }
    }
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: String,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: Vec<Message<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

/// Client for an OpenAI-style chat-completion endpoint.
pub struct RemoteClient {
    config: RemoteConfig,
    token: String,
    http: reqwest::blocking::Client,
}

impl RemoteClient {
    pub fn new(config: RemoteConfig) -> Result<Self, ClientError> {
        let token =
            std::env::var(&config.token_env).map_err(|_| ClientError::MissingToken(config.token_env.clone()))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self { config, token, http })
    }

    fn body<'a>(&'a self, request: &ClientRequest) -> ChatBody<'a> {
        let mut messages = vec![Message {
            role: "system",
            content: request.system.clone(),
        }];
        for (i, c) in request.context.iter().enumerate() {
            let role = if i % 2 == 0 { "assistant" } else { "user" };
            messages.push(Message {
                role,
                content: c.clone(),
            });
        }
        messages.push(Message {
            role: "user",
            content: request.prompt.clone(),
        });
        ChatBody {
            model: &self.config.model,
            messages,
            temperature: self.config.temperature,
        }
    }

    fn attempt(&self, body: &ChatBody<'_>) -> Result<String, ClientError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let resp = self
            .http
            .post(url)
            .bearer_auth(&self.token)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    ClientError::Timeout
                } else {
                    ClientError::Transport(e.to_string())
                }
            })?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(ClientError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let reply: ChatReply = resp.json().map_err(|e| ClientError::Malformed(e.to_string()))?;
        reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ClientError::Malformed("no completion text".into()))
    }
}

fn retryable(e: &ClientError) -> bool {
    match e {
        ClientError::Timeout | ClientError::Transport(_) => true,
        ClientError::Status { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

impl ModelClient for RemoteClient {
    fn submit(&self, request: &ClientRequest) -> Result<String, ClientError> {
        let body = self.body(request);
        let mut last = None;
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(200 << (attempt - 1).min(5)));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if retryable(&e) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn single_flight(&self) -> bool {
        true
    }
}
