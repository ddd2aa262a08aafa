//! Task-driven reorganization of a scene tree into a goal tree.
//!
//! Two backends produce goal trees: a deterministic rule engine for the
//! structured task kinds, and a remote chat-completion model for anything.
//! Both go through the same gate: the goal must hold exactly the initial
//! object ids, keep the same root, and be a valid tree.

mod constraints;
mod prompt;
mod remote;
mod rules;

use std::collections::BTreeSet;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ObjectId, ObjectInstance, SceneTree, TaskKind, TaskSpec};
use crate::parser::{resolve_reference, ParseError};
use crate::tree::{validate_tree, Violation};

pub use constraints::{check_physical_constraints, ConstraintKind, ConstraintViolation, PhysicalConstraintReport};
pub use prompt::{
    parse_goal_response, prompt_messages, serialize_tree, serialize_tree_prompt, task_line, GoalParseError, PREAMBLE,
    PROMPT_VERSION,
};
pub use remote::{ChatMessage, ChatRequest, RemoteClient, API_KEY_ENV};
pub use rules::{
    goal_condition_holds, rule_group_by_material, rule_stack_all, rule_stack_object, rule_unstack_all, stacking_order,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReorganizeError {
    #[error("task {0:?} is not supported by the rule backend")]
    UnsupportedTask(String),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
    #[error("backend error: {0}")]
    BackendError(String),
    #[error("invalid goal tree: {}", .diagnostics.join("; "))]
    InvalidGoal { diagnostics: Vec<String> },
    #[error("input tree is invalid: {0:?}")]
    InvalidInput(Vec<Violation>),
}

/// A goal tree: same ids and root as the tree it was derived from, and valid.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalTree(SceneTree);

impl GoalTree {
    /// Checks conservation against `initial` and tree validity.
    pub fn conserving(initial: &SceneTree, candidate: SceneTree) -> Result<Self, Vec<String>> {
        let mut problems: Vec<String> = validate_tree(&candidate).iter().map(ToString::to_string).collect();
        let before: BTreeSet<&ObjectId> = initial.ids().collect();
        let after: BTreeSet<&ObjectId> = candidate.ids().collect();
        for missing in before.difference(&after) {
            problems.push(format!("object {missing} is missing"));
        }
        for extra in after.difference(&before) {
            problems.push(format!("object {extra} was not in the scene"));
        }
        if initial.root() != candidate.root() {
            problems.push(format!("root changed from {} to {}", initial.root(), candidate.root()));
        }
        if problems.is_empty() {
            Ok(Self(candidate))
        } else {
            Err(problems)
        }
    }

    pub(crate) fn from_valid(tree: SceneTree) -> Self {
        debug_assert!(validate_tree(&tree).is_empty());
        Self(tree)
    }

    pub fn into_tree(self) -> SceneTree {
        self.0
    }
}

impl Deref for GoalTree {
    type Target = SceneTree;

    fn deref(&self) -> &SceneTree {
        &self.0
    }
}

impl AsRef<SceneTree> for GoalTree {
    fn as_ref(&self) -> &SceneTree {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Rule,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub backend: Backend,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub timeout_seconds: f64,
    pub max_retries: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self::rule()
    }
}

impl BackendConfig {
    pub fn rule() -> Self {
        Self { backend: Backend::Rule, endpoint_url: None, model_name: None, timeout_seconds: 60.0, max_retries: 2 }
    }

    pub fn remote(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            backend: Backend::Remote,
            endpoint_url: Some(endpoint_url.into()),
            model_name: Some(model_name.into()),
            ..Self::rule()
        }
    }

    pub fn validate(&self) -> Result<(), ReorganizeError> {
        if !(self.timeout_seconds.is_finite() && self.timeout_seconds > 0.0) {
            return Err(ReorganizeError::InvalidConfig("timeout_seconds must be positive".into()));
        }
        if self.backend == Backend::Remote {
            if self.endpoint_url.as_deref().is_none_or(str::is_empty) {
                return Err(ReorganizeError::InvalidConfig("remote backend needs endpoint_url".into()));
            }
            if self.model_name.as_deref().is_none_or(str::is_empty) {
                return Err(ReorganizeError::InvalidConfig("remote backend needs model_name".into()));
            }
        }
        Ok(())
    }
}

/// Maps a prompt onto a task kind.
///
/// Recognized phrasings: "stack all", "stack the <object>", "unstack",
/// "unstack all", "group by material". Anything else is free text. The
/// object in "stack the <object>" is resolved like a caption noun phrase.
pub fn parse_task(prompt: &str, registry: &[ObjectInstance]) -> Result<TaskSpec, ParseError> {
    let normalized = prompt
        .trim()
        .trim_end_matches(['.', '!', '?'])
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    let kind = match normalized.as_str() {
        "stack all" => TaskKind::StackAll,
        "unstack" | "unstack all" => TaskKind::UnstackAll,
        "group by material" => TaskKind::GroupByMaterial,
        other => match other.strip_prefix("stack ") {
            Some(phrase) if phrase.starts_with("the ") => TaskKind::StackObject(resolve_reference(phrase, registry)?),
            _ => TaskKind::FreeText(prompt.to_string()),
        },
    };
    Ok(TaskSpec::new(kind, prompt))
}

/// Produces a goal tree for `task` using the configured backend.
pub fn reorganize(tree: &SceneTree, task: &TaskSpec, config: &BackendConfig) -> Result<GoalTree, ReorganizeError> {
    let violations = validate_tree(tree);
    if !violations.is_empty() {
        return Err(ReorganizeError::InvalidInput(violations));
    }
    config.validate()?;
    match config.backend {
        Backend::Rule => match &task.kind {
            TaskKind::StackAll => Ok(rule_stack_all(tree)),
            TaskKind::UnstackAll => Ok(rule_unstack_all(tree)),
            TaskKind::GroupByMaterial => Ok(rule_group_by_material(tree)),
            TaskKind::StackObject(target) => rule_stack_object(tree, target),
            TaskKind::FreeText(text) => Err(ReorganizeError::UnsupportedTask(text.clone())),
        },
        Backend::Remote => RemoteClient::from_config(config)?.reorganize(tree, task),
    }
}
