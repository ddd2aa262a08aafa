//! End-to-end run for one scene: captions → tree → goal → verified plan.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{load_scene_record, DatasetError};
use crate::model::{Plan, SceneRecord, SceneTree, SpatialTriplet, TaskSpec};
use crate::parser::{parse_caption, Caption, ParseDiagnostic, ParseError};
use crate::planner::{execute_plan, plan_moves};
use crate::reorganize::{
    check_physical_constraints, goal_condition_holds, parse_task, reorganize, serialize_tree, BackendConfig,
    ReorganizeError,
};
use crate::tree::{build_tree, to_dot, Violation};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("caption {caption}: {error}")]
    Caption { caption: usize, error: ParseError },
    #[error("task: {0}")]
    Task(ParseError),
    #[error("scene tree is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Tree(Vec<Violation>),
    #[error(transparent)]
    Reorganize(#[from] ReorganizeError),
    #[error("plan verification failed: {0}")]
    PlanFailed(String),
    #[error("{path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Dataset(DatasetError::Io { .. }) | PipelineError::Output { .. } => 2,
            PipelineError::Dataset(_) => 3,
            PipelineError::Caption { .. } | PipelineError::Task(_) => 4,
            PipelineError::Reorganize(ReorganizeError::UnsupportedTask(_)) => 5,
            PipelineError::Reorganize(ReorganizeError::BackendError(_)) => 6,
            PipelineError::Tree(_) => 7,
            PipelineError::Reorganize(ReorganizeError::InvalidGoal { .. }) => 8,
            PipelineError::Reorganize(_) => 8,
            PipelineError::PlanFailed(_) => 9,
        }
    }

    /// Caption character span, for parse failures.
    pub fn span(&self) -> Option<std::ops::Range<usize>> {
        match self {
            PipelineError::Caption { error, .. } | PipelineError::Task(error) => Some(error.span()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub parse_ms: f64,
    pub build_ms: f64,
    pub reorganize_ms: f64,
    pub plan_ms: f64,
    pub verify_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineResult {
    pub scene_id: String,
    pub task: TaskSpec,
    pub initial_tree: String,
    pub goal_tree: String,
    pub plan: Vec<String>,
    pub staged_moves: usize,
    pub diagnostics: Vec<String>,
    pub timings: StageTimings,
}

/// The typed outputs alongside the serializable summary.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub result: PipelineResult,
    pub initial: SceneTree,
    pub goal: SceneTree,
    pub plan: Plan,
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

/// Triplets from the captions, or from the cached parse when the record
/// has no caption text. Relations repeated across captions are kept once.
pub fn scene_triplets(record: &SceneRecord) -> Result<(Vec<SpatialTriplet>, Vec<ParseDiagnostic>), PipelineError> {
    let mut triplets: Vec<SpatialTriplet> = Vec::new();
    let mut diagnostics = Vec::new();
    let mut parsed_any = false;
    for (index, text) in record.captions.iter().enumerate() {
        let Ok(caption) = Caption::new(text.as_str()) else { continue };
        parsed_any = true;
        let output = parse_caption(&caption, &record.objects).map_err(|error| PipelineError::Caption { caption: index, error })?;
        diagnostics.extend(output.diagnostics);
        for t in output.triplets {
            if !triplets.contains(&t) {
                triplets.push(t);
            }
        }
    }
    if !parsed_any {
        triplets = record.triplets.clone().unwrap_or_default();
    }
    Ok((triplets, diagnostics))
}

pub fn run_pipeline(record: &SceneRecord, task_prompt: &str, config: &BackendConfig) -> Result<PipelineOutcome, PipelineError> {
    let started = Instant::now();
    let mut timings = StageTimings::default();
    let mut diagnostics = Vec::new();

    let stage = Instant::now();
    let (triplets, parse_notes) = scene_triplets(record)?;
    diagnostics.extend(parse_notes.iter().map(ToString::to_string));
    let task = parse_task(task_prompt, &record.objects).map_err(PipelineError::Task)?;
    timings.parse_ms = ms_since(stage);

    let stage = Instant::now();
    let initial = build_tree(&triplets, &record.objects, None).into_result().map_err(PipelineError::Tree)?;
    timings.build_ms = ms_since(stage);

    let stage = Instant::now();
    let goal = reorganize(&initial, &task, config)?.into_tree();
    timings.reorganize_ms = ms_since(stage);
    if !goal_condition_holds(&initial, &goal, &task) && !matches!(task.kind, crate::model::TaskKind::FreeText(_)) {
        diagnostics.push(format!("warning: goal tree does not meet the end condition of {:?}", task.kind));
    }
    for v in check_physical_constraints(&goal).violations {
        diagnostics.push(format!("advisory: {:?} {} above {}", v.kind, v.above, v.below));
    }

    let stage = Instant::now();
    let trace = plan_moves(&initial, &goal).map_err(|e| PipelineError::PlanFailed(e.to_string()))?;
    timings.plan_ms = ms_since(stage);

    let stage = Instant::now();
    let reached = execute_plan(&initial, &trace.plan).map_err(|e| PipelineError::PlanFailed(e.to_string()))?;
    if reached != goal {
        return Err(PipelineError::PlanFailed("executing the plan does not reach the goal".into()));
    }
    timings.verify_ms = ms_since(stage);
    timings.total_ms = ms_since(started);

    let result = PipelineResult {
        scene_id: record.scene_id.clone(),
        task,
        initial_tree: serialize_tree(&initial),
        goal_tree: serialize_tree(&goal),
        plan: trace.plan.moves.iter().map(ToString::to_string).collect(),
        staged_moves: trace.staged_moves,
        diagnostics,
        timings,
    };
    Ok(PipelineOutcome { result, initial, goal, plan: trace.plan })
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), PipelineError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| PipelineError::Output { path, source })
}

/// Writes the tree texts, plan, DOT figures and `result.json` into `dir`.
pub fn write_outputs(outcome: &PipelineOutcome, dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|source| PipelineError::Output { path: dir.to_path_buf(), source })?;
    write_file(dir, "initial.tree.txt", &outcome.result.initial_tree)?;
    write_file(dir, "goal.tree.txt", &outcome.result.goal_tree)?;
    write_file(dir, "plan.txt", &outcome.plan.to_string())?;
    write_file(dir, "initial.dot", &to_dot(&outcome.initial))?;
    write_file(dir, "goal.dot", &to_dot(&outcome.goal))?;
    let json = serde_json::to_string_pretty(&outcome.result).expect("pipeline results serialize") + "\n";
    write_file(dir, "result.json", &json)
}

/// Loads, runs and writes one scene.
pub fn run_scene_file(scene: &Path, task_prompt: &str, config: &BackendConfig, out: &Path) -> Result<PipelineOutcome, PipelineError> {
    let record = load_scene_record(scene)?;
    let outcome = run_pipeline(&record, task_prompt, config)?;
    write_outputs(&outcome, out)?;
    Ok(outcome)
}
