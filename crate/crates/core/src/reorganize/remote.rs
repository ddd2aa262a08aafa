//! Chat-completion client for the remote backend.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{SceneTree, TaskSpec};

use super::{parse_goal_response, prompt_messages, BackendConfig, GoalTree, ReorganizeError};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "SCENE_FOREST_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self { role: role.to_string(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

enum Attempt {
    Transport(String),
    Invalid(String),
}

pub struct RemoteClient {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    max_retries: u32,
}

impl RemoteClient {
    pub fn from_config(config: &BackendConfig) -> Result<Self, ReorganizeError> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_seconds)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            endpoint: config.endpoint_url.clone().unwrap_or_default(),
            model: config.model_name.clone().unwrap_or_default(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            max_retries: config.max_retries,
        })
    }

    /// Sends one request and returns the first message's content.
    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String, ReorganizeError> {
        let request = ChatRequest { model: self.model.clone(), messages: messages.to_vec(), temperature: 0.0 };
        let mut call = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = call.send_json(&request).map_err(|e| ReorganizeError::BackendError(e.to_string()))?;
        let status = response.status();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ReorganizeError::BackendError(e.to_string()))?;
        if !status.is_success() {
            return Err(ReorganizeError::BackendError(format!("HTTP {status}: {body}")));
        }
        let json: Value = serde_json::from_str(&body)
            .map_err(|e| ReorganizeError::BackendError(format!("response is not JSON: {e}")))?;
        first_message_content(&json)
            .map(str::to_string)
            .ok_or_else(|| ReorganizeError::BackendError("response has no message content".into()))
    }

    /// Asks the model for a goal tree, re-prompting with the validation
    /// failure when the answer breaks conservation or tree shape.
    pub fn reorganize(&self, tree: &SceneTree, task: &TaskSpec) -> Result<GoalTree, ReorganizeError> {
        let (system, user) = prompt_messages(tree, task);
        let mut messages = vec![ChatMessage::new("system", system), ChatMessage::new("user", user)];
        let registry = tree.registry();
        let mut failures = Vec::new();

        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                log::warn!("remote attempt {attempt} failed: {}", failure_text(failures.last()));
            }
            let content = match self.complete(&messages) {
                Ok(content) => content,
                Err(e) => {
                    failures.push(Attempt::Transport(e.to_string()));
                    std::thread::sleep(Duration::from_millis(100 * u64::from(attempt + 1)));
                    continue;
                }
            };
            let checked = parse_goal_response(&content, &registry)
                .map_err(|e| e.to_string())
                .and_then(|goal| GoalTree::conserving(tree, goal.into_tree()).map_err(|p| p.join("; ")));
            match checked {
                Ok(goal) => return Ok(goal),
                Err(problem) => {
                    messages.push(ChatMessage::new("assistant", content));
                    messages.push(ChatMessage::new(
                        "user",
                        format!("That tree is not valid: {problem}. Reply again with a corrected TREE ... END block."),
                    ));
                    failures.push(Attempt::Invalid(problem));
                }
            }
        }

        match failures.last() {
            Some(Attempt::Transport(e)) => Err(ReorganizeError::BackendError(e.clone())),
            _ => Err(ReorganizeError::InvalidGoal {
                diagnostics: failures
                    .iter()
                    .filter_map(|f| match f {
                        Attempt::Invalid(p) => Some(p.clone()),
                        Attempt::Transport(_) => None,
                    })
                    .collect(),
            }),
        }
    }
}

fn failure_text(attempt: Option<&Attempt>) -> &str {
    match attempt {
        Some(Attempt::Transport(e)) | Some(Attempt::Invalid(e)) => e,
        None => "",
    }
}

/// `choices[0].message.content`, or a bare `message.content`.
fn first_message_content(json: &Value) -> Option<&str> {
    json.pointer("/choices/0/message/content")
        .or_else(|| json.pointer("/message/content"))
        .and_then(Value::as_str)
}
