//! Pick-and-place planning between two scene trees.
//!
//! Only clear objects (nothing resting on them) can be picked. The greedy
//! planner settles objects bottom-up: an object is settled when it and all
//! of its supports already sit on their goal parents, and settled objects
//! are never touched again. Unsettled objects that block others are staged
//! on the root. Each object is staged at most once and placed at most once,
//! so plans have at most `2n` moves.

use std::collections::hash_map::Entry;
use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::model::{MoveAction, ObjectId, Plan, SceneTree};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("trees hold different objects: {0}")]
    IdMismatch(String),
    #[error("trees have different roots: {initial} vs {goal}")]
    RootMismatch { initial: ObjectId, goal: ObjectId },
    #[error("search explored more than {0} states")]
    SearchBudgetExceeded(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("step {step}: {object} cannot be moved onto itself")]
    SelfMove { step: usize, object: ObjectId },
    #[error("step {step}: unknown object {id}")]
    UnknownId { step: usize, id: ObjectId },
    #[error("step {step}: {object} is the support surface and cannot be picked")]
    PickRoot { step: usize, object: ObjectId },
    #[error("step {step}: {object} is not clear ({blocker} rests on it)")]
    PickNotClear { step: usize, object: ObjectId, blocker: ObjectId },
    #[error("step {step}: {destination} rests on {object}")]
    CycleCreated { step: usize, object: ObjectId, destination: ObjectId },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanTrace {
    pub plan: Plan,
    #[serde(skip)]
    pub intermediate_states: Vec<SceneTree>,
    /// Moves that park an object on the root to unblock others.
    pub staged_moves: usize,
}

fn check_comparable(initial: &SceneTree, goal: &SceneTree) -> Result<(), PlanError> {
    if initial.root() != goal.root() {
        return Err(PlanError::RootMismatch { initial: initial.root().clone(), goal: goal.root().clone() });
    }
    let a: BTreeSet<&ObjectId> = initial.ids().collect();
    let b: BTreeSet<&ObjectId> = goal.ids().collect();
    if a != b {
        let only_initial: Vec<&str> = a.difference(&b).map(|i| i.as_str()).collect();
        let only_goal: Vec<&str> = b.difference(&a).map(|i| i.as_str()).collect();
        return Err(PlanError::IdMismatch(format!(
            "only in initial [{}], only in goal [{}]",
            only_initial.join(", "),
            only_goal.join(", ")
        )));
    }
    Ok(())
}

/// Non-root objects whose parent differs between the two trees.
pub fn diff_trees(initial: &SceneTree, goal: &SceneTree) -> Result<BTreeSet<ObjectId>, PlanError> {
    check_comparable(initial, goal)?;
    Ok(initial.non_root_ids().filter(|id| initial.parent(id) != goal.parent(id)).cloned().collect())
}

fn settled_set(current: &SceneTree, goal: &SceneTree) -> BTreeSet<ObjectId> {
    let mut settled = BTreeSet::new();
    for (id, _) in current.preorder() {
        let ok = match current.parent(id) {
            None => true,
            Some(p) => settled.contains(p) && goal.parent(id) == Some(p),
        };
        if ok {
            settled.insert(id.clone());
        }
    }
    settled
}

fn goal_depth(goal: &SceneTree, id: &ObjectId) -> usize {
    goal.ancestors(id).count()
}

/// Greedy plan from `initial` to `goal`; see the module docs for the rules.
pub fn plan_moves(initial: &SceneTree, goal: &SceneTree) -> Result<PlanTrace, PlanError> {
    check_comparable(initial, goal)?;
    let mut current = initial.clone();
    let mut plan = Plan::default();
    let mut states = Vec::new();
    let mut staged_moves = 0;

    loop {
        let settled = settled_set(&current, goal);
        if settled.len() == current.len() {
            break;
        }
        let open: Vec<&ObjectId> =
            current.non_root_ids().filter(|id| !settled.contains(*id) && current.is_clear(id)).collect();

        let placeable = open
            .iter()
            .filter(|id| goal.parent(id).is_some_and(|p| settled.contains(p)))
            .min_by_key(|id| (goal_depth(goal, id), **id));
        let step = match placeable {
            Some(id) => MoveAction::new((*id).clone(), goal.parent(id).expect("non-root").clone()),
            None => {
                let blocker = open
                    .iter()
                    .filter(|id| current.parent(id) != Some(current.root()))
                    .min_by_key(|id| (std::cmp::Reverse(current.ancestors(id).count()), **id))
                    .expect("an unsettled tree always has a clear blocker off the root");
                staged_moves += 1;
                MoveAction::new((*blocker).clone(), current.root().clone())
            }
        };
        current.reparent_unchecked(&step.object, &step.destination);
        states.push(current.clone());
        plan.moves.push(step);
    }
    Ok(PlanTrace { plan, intermediate_states: states, staged_moves })
}

/// Applies moves in order, checking each pick and placement.
///
/// Moving an object onto its current parent is a legal no-op.
pub fn execute_plan(tree: &SceneTree, plan: &Plan) -> Result<SceneTree, ExecError> {
    let mut current = tree.clone();
    for (step, m) in plan.moves.iter().enumerate() {
        if m.object == m.destination {
            return Err(ExecError::SelfMove { step, object: m.object.clone() });
        }
        for id in [&m.object, &m.destination] {
            if !current.contains(id) {
                return Err(ExecError::UnknownId { step, id: id.clone() });
            }
        }
        if m.object == *current.root() {
            return Err(ExecError::PickRoot { step, object: m.object.clone() });
        }
        if let Some(blocker) = current.children(&m.object).first() {
            return Err(ExecError::PickNotClear { step, object: m.object.clone(), blocker: blocker.clone() });
        }
        if current.is_in_subtree(&m.destination, &m.object) {
            return Err(ExecError::CycleCreated { step, object: m.object.clone(), destination: m.destination.clone() });
        }
        current.reparent_unchecked(&m.object, &m.destination);
    }
    Ok(current)
}

const NO_PARENT: u8 = u8::MAX;

/// Shortest plan by breadth-first search over every reachable arrangement.
///
/// Moves are generated in (object id, destination id) order, so among
/// shortest plans the first one found is returned. `node_limit` caps the
/// number of distinct states stored.
pub fn optimal_plan_bfs(initial: &SceneTree, goal: &SceneTree, node_limit: usize) -> Result<Plan, PlanError> {
    check_comparable(initial, goal)?;
    let ids: Vec<&ObjectId> = initial.ids().collect();
    assert!(ids.len() < NO_PARENT as usize, "too many objects for exhaustive search");
    let index: HashMap<&ObjectId, u8> = ids.iter().enumerate().map(|(i, id)| (*id, i as u8)).collect();
    let encode = |tree: &SceneTree| -> Vec<u8> {
        ids.iter().map(|id| tree.parent(id).map_or(NO_PARENT, |p| index[p])).collect()
    };
    let start = encode(initial);
    let target = encode(goal);

    // per state: (predecessor index, move)
    let mut states: Vec<Vec<u8>> = vec![start.clone()];
    let mut back: Vec<(usize, (u8, u8))> = vec![(usize::MAX, (0, 0))];
    let mut seen: HashMap<Vec<u8>, usize> = HashMap::from([(start, 0)]);
    let mut queue = VecDeque::from([0usize]);
    let mut found = (states[0] == target).then_some(0);

    while let (None, Some(current)) = (found, queue.pop_front()) {
        let state = states[current].clone();
        let mut has_child = vec![false; ids.len()];
        for &p in &state {
            if p != NO_PARENT {
                has_child[p as usize] = true;
            }
        }
        for object in 0..ids.len() {
            if state[object] == NO_PARENT || has_child[object] {
                continue;
            }
            for dest in 0..ids.len() {
                if dest == object || state[object] == dest as u8 {
                    continue;
                }
                let mut next = state.clone();
                next[object] = dest as u8;
                if let Entry::Vacant(slot) = seen.entry(next.clone()) {
                    if states.len() >= node_limit {
                        return Err(PlanError::SearchBudgetExceeded(node_limit));
                    }
                    slot.insert(states.len());
                    let done = next == target;
                    states.push(next);
                    back.push((current, (object as u8, dest as u8)));
                    queue.push_back(states.len() - 1);
                    if done {
                        found = Some(states.len() - 1);
                        break;
                    }
                }
            }
            if found.is_some() {
                break;
            }
        }
    }

    let mut cursor = found.ok_or(PlanError::SearchBudgetExceeded(node_limit))?;
    let mut moves = Vec::new();
    while back[cursor].0 != usize::MAX {
        let (prev, (object, dest)) = back[cursor];
        moves.push(MoveAction::new(ids[object as usize].clone(), ids[dest as usize].clone()));
        cursor = prev;
    }
    moves.reverse();
    Ok(Plan { moves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::test_support::{id, tree};
    use crate::tree::validate_tree;

    fn mv(o: &str, d: &str) -> MoveAction {
        MoveAction::new(id(o), id(d))
    }

    #[test]
    fn diff_examples() {
        let a = tree(&[("book_1", "table_1"), ("cup_1", "book_1")]);
        assert!(diff_trees(&a, &a).unwrap().is_empty());
        let b = tree(&[("cup_1", "table_1"), ("book_1", "cup_1")]);
        assert_eq!(diff_trees(&a, &b).unwrap(), BTreeSet::from([id("book_1"), id("cup_1")]));
        let c = tree(&[("book_1", "table_1"), ("cup_1", "table_1")]);
        assert_eq!(diff_trees(&a, &c).unwrap(), BTreeSet::from([id("cup_1")]));
    }

    #[test]
    fn diff_mismatches() {
        let a = tree(&[("book_1", "table_1")]);
        let b = tree(&[("cup_1", "table_1")]);
        assert!(matches!(diff_trees(&a, &b), Err(PlanError::IdMismatch(_))));
        let desk = crate::tree::build_tree(
            &[crate::tree::test_support::on("book_1", "desk_1")],
            &[crate::tree::test_support::obj("desk_1"), crate::tree::test_support::obj("book_1")],
            None,
        )
        .into_result()
        .unwrap();
        assert!(matches!(diff_trees(&a, &desk), Err(PlanError::RootMismatch { .. })));
    }

    #[test]
    fn identical_trees_need_no_moves() {
        let a = tree(&[("book_1", "table_1"), ("cup_1", "book_1")]);
        let trace = plan_moves(&a, &a).unwrap();
        assert!(trace.plan.is_empty());
        assert!(optimal_plan_bfs(&a, &a, 1000).unwrap().is_empty());
    }

    #[test]
    fn single_clear_move() {
        let initial = tree(&[("a_1", "table_1"), ("b_1", "table_1")]);
        let goal = tree(&[("a_1", "table_1"), ("b_1", "a_1")]);
        assert_eq!(plan_moves(&initial, &goal).unwrap().plan.moves, vec![mv("b_1", "a_1")]);
    }

    #[test]
    fn swap_two() {
        let initial = tree(&[("book_1", "table_1"), ("cup_1", "book_1")]);
        let goal = tree(&[("cup_1", "table_1"), ("book_1", "cup_1")]);
        let trace = plan_moves(&initial, &goal).unwrap();
        assert_eq!(trace.plan.moves, vec![mv("cup_1", "table_1"), mv("book_1", "cup_1")]);
        assert_eq!(trace.intermediate_states.len(), 2);
        assert_eq!(trace.intermediate_states.last().unwrap(), &goal);
        assert_eq!(optimal_plan_bfs(&initial, &goal, 10_000).unwrap().len(), 2);
    }

    #[test]
    fn staging_unblocks_misplaced_support() {
        // a sits on c but belongs on the table, b already rests on a
        let initial = tree(&[("c_1", "table_1"), ("a_1", "c_1"), ("b_1", "a_1")]);
        let goal = tree(&[("c_1", "table_1"), ("a_1", "table_1"), ("b_1", "a_1")]);
        let trace = plan_moves(&initial, &goal).unwrap();
        assert_eq!(trace.plan.moves, vec![mv("b_1", "table_1"), mv("a_1", "table_1"), mv("b_1", "a_1")]);
        assert_eq!(trace.staged_moves, 1);
        assert_eq!(execute_plan(&initial, &trace.plan).unwrap(), goal);
        for state in &trace.intermediate_states {
            assert!(validate_tree(state).is_empty());
        }
    }

    #[test]
    fn reverse_three_stack() {
        let initial = tree(&[("a_1", "table_1"), ("b_1", "a_1"), ("c_1", "b_1")]);
        let goal = tree(&[("c_1", "table_1"), ("b_1", "c_1"), ("a_1", "b_1")]);
        let optimal = optimal_plan_bfs(&initial, &goal, 100_000).unwrap();
        assert_eq!(optimal.len(), 3);
        assert_eq!(execute_plan(&initial, &optimal).unwrap(), goal);
        assert_eq!(plan_moves(&initial, &goal).unwrap().plan.len(), 3);
    }

    #[test]
    fn execution_errors() {
        let t = tree(&[("book_1", "table_1")]);
        assert_eq!(execute_plan(&t, &Plan { moves: vec![mv("book_1", "table_1")] }).unwrap(), t);

        let t = tree(&[("book_1", "table_1"), ("cup_1", "book_1")]);
        assert!(matches!(
            execute_plan(&t, &Plan { moves: vec![mv("book_1", "cup_1")] }),
            Err(ExecError::PickNotClear { step: 0, .. })
        ));
        assert!(matches!(execute_plan(&t, &Plan { moves: vec![mv("cup_1", "cup_1")] }), Err(ExecError::SelfMove { .. })));
        assert!(matches!(execute_plan(&t, &Plan { moves: vec![mv("vase_1", "cup_1")] }), Err(ExecError::UnknownId { .. })));
        assert!(matches!(execute_plan(&t, &Plan { moves: vec![mv("table_1", "cup_1")] }), Err(ExecError::PickRoot { .. })));

        let t = tree(&[("a_1", "table_1"), ("b_1", "a_1")]);
        assert!(matches!(execute_plan(&t, &Plan { moves: vec![mv("a_1", "b_1")] }), Err(ExecError::PickNotClear { .. })));
        let fixed = execute_plan(&t, &Plan { moves: vec![mv("b_1", "table_1"), mv("a_1", "b_1")] }).unwrap();
        assert_eq!(fixed.parent(&id("a_1")), Some(&id("b_1")));
    }

    #[test]
    fn bfs_budget() {
        let initial = tree(&[("a_1", "table_1"), ("b_1", "a_1"), ("c_1", "b_1")]);
        let goal = tree(&[("c_1", "table_1"), ("b_1", "c_1"), ("a_1", "b_1")]);
        assert_eq!(optimal_plan_bfs(&initial, &goal, 3), Err(PlanError::SearchBudgetExceeded(3)));
    }
}
