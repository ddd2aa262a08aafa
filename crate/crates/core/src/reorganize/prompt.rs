//! Text form of scene trees for language-model prompts and responses.
//!
//! ```text
//! TREE
//! table_1 [material=wood, mass=12000, fragility=low, transparency=opaque]
//!   book_1 [material=paper, mass=300, fragility=low, transparency=opaque]
//! END
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use thiserror::Error;

use crate::model::{ObjectId, ObjectInstance, SceneTree, TaskSpec};

use super::GoalTree;

pub const PROMPT_VERSION: &str = "1";

/// Fixed instructions sent ahead of every tree.
pub const PREAMBLE: &str = "\
You are planning for a robotic arm that cannot see its surroundings. \
Everything it knows about the table is the tree below.
Each line of the tree is one object followed by its attributes. \
An object indented two spaces deeper than the line above it rests on that object; \
the first line is the support surface.
Use only the objects listed in the tree and their attributes to decide how they should be arranged.
Every object must appear exactly once in your answer: do not add, drop, rename or repeat objects, \
and keep the same support surface as the first line.
Answer with the final arrangement in the same format, starting with a line TREE and ending with a line END.
";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GoalParseError {
    #[error("response contains no TREE ... END block")]
    NoTreeBlock,
    #[error("line {line}: {detail}")]
    MalformedIndentation { line: usize, detail: String },
    #[error("object {0} is missing from the tree")]
    MissingObject(ObjectId),
    #[error("object {0} appears more than once")]
    DuplicateObject(ObjectId),
    #[error("unknown object {0:?}")]
    UnknownId(String),
}

/// The `TREE` ... `END` block: pre-order, children by id, two spaces per level.
pub fn serialize_tree(tree: &SceneTree) -> String {
    let mut out = String::from("TREE\n");
    for (id, depth) in tree.preorder() {
        let a = &tree.nodes()[id].attributes;
        let _ = writeln!(
            out,
            "{:indent$}{} [material={}, mass={}, fragility={}, transparency={}]",
            "",
            id,
            a.material,
            a.mass_grams,
            a.fragility,
            a.transparency,
            indent = depth * 2
        );
    }
    out.push_str("END\n");
    out
}

pub fn task_line(task: &TaskSpec) -> String {
    format!("TASK: {}\n", task.raw_prompt.trim())
}

/// System and user message bodies; their concatenation is
/// [`serialize_tree_prompt`].
pub fn prompt_messages(tree: &SceneTree, task: &TaskSpec) -> (String, String) {
    (PREAMBLE.to_string(), serialize_tree(tree) + &task_line(task))
}

pub fn serialize_tree_prompt(tree: &SceneTree, task: &TaskSpec) -> String {
    let (system, user) = prompt_messages(tree, task);
    system + &user
}

/// Reads the first tree block out of a model response and checks it
/// against the registry.
///
/// Bracketed attributes on each line are ignored; the registry is the
/// source of attributes. Conservation (unknown, duplicate, missing ids) is
/// checked before indentation structure.
pub fn parse_goal_response(text: &str, registry: &[ObjectInstance]) -> Result<GoalTree, GoalParseError> {
    let lines: Vec<&str> = text.lines().map(|l| l.trim_end()).collect();
    let start = lines.iter().position(|l| l.trim() == "TREE").ok_or(GoalParseError::NoTreeBlock)?;
    let len = lines[start + 1..].iter().position(|l| l.trim() == "END").ok_or(GoalParseError::NoTreeBlock)?;
    let body = &lines[start + 1..start + 1 + len];

    let known: BTreeMap<&str, &ObjectInstance> = registry.iter().map(|o| (o.id.as_str(), o)).collect();
    let mut entries: Vec<(usize, usize, ObjectId)> = Vec::with_capacity(body.len());
    let mut seen: BTreeSet<ObjectId> = BTreeSet::new();
    for (offset, line) in body.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = start + offset + 2;
        let indent = line.len() - line.trim_start_matches(' ').len();
        let name = line.trim_start().split(|c: char| c.is_whitespace() || c == '[').next().unwrap_or("");
        let Some(obj) = known.get(name) else {
            return Err(GoalParseError::UnknownId(name.to_string()));
        };
        if !seen.insert(obj.id.clone()) {
            return Err(GoalParseError::DuplicateObject(obj.id.clone()));
        }
        entries.push((line_no, indent, obj.id.clone()));
    }
    if let Some(missing) = registry.iter().find(|o| !seen.contains(&o.id)) {
        return Err(GoalParseError::MissingObject(missing.id.clone()));
    }

    let mut stack: Vec<&ObjectId> = Vec::new();
    let mut parent = BTreeMap::new();
    for (i, (line, indent, id)) in entries.iter().enumerate() {
        let malformed = |detail: String| GoalParseError::MalformedIndentation { line: *line, detail };
        if indent % 2 != 0 {
            return Err(malformed(format!("odd indentation of {indent} spaces")));
        }
        let depth = indent / 2;
        if i == 0 && depth != 0 {
            return Err(malformed("first object must be unindented".into()));
        }
        if i > 0 && depth == 0 {
            return Err(malformed(format!("second unindented object {id}")));
        }
        if depth > stack.len() {
            return Err(malformed(format!("{id} is at depth {depth} below a node at depth {}", stack.len() - 1)));
        }
        stack.truncate(depth);
        if let Some(p) = stack.last() {
            parent.insert(id.clone(), (*p).clone());
        }
        stack.push(id);
    }
    let Some((_, _, root)) = entries.first() else {
        return Err(GoalParseError::NoTreeBlock);
    };

    let nodes = registry.iter().map(|o| (o.id.clone(), o.clone())).collect();
    let tree = SceneTree::new(root.clone(), nodes, parent).expect("indentation encodes a tree");
    Ok(GoalTree::from_valid(tree))
}
