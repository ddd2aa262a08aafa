use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::model::{Material, ObjectId, ObjectInstance, SceneTree, TaskKind, TaskSpec};

use super::{check_physical_constraints, GoalTree, ReorganizeError};

/// Bottom-to-top stacking order: sturdier first, then heavier, then by id.
pub fn stacking_order(a: &ObjectInstance, b: &ObjectInstance) -> Ordering {
    a.attributes
        .fragility
        .cmp(&b.attributes.fragility)
        .then_with(|| b.attributes.mass_grams.value().total_cmp(&a.attributes.mass_grams.value()))
        .then_with(|| a.id.cmp(&b.id))
}

fn sorted_for_stacking<'a>(tree: &'a SceneTree, ids: impl IntoIterator<Item = &'a ObjectId>) -> Vec<&'a ObjectId> {
    let mut objects: Vec<&ObjectInstance> = ids.into_iter().map(|id| &tree.nodes()[id]).collect();
    objects.sort_by(|a, b| stacking_order(a, b));
    objects.into_iter().map(|o| &o.id).collect()
}

fn chain_onto(parent: &mut BTreeMap<ObjectId, ObjectId>, base: &ObjectId, chain: &[&ObjectId]) {
    let mut below = base;
    for &id in chain {
        parent.insert(id.clone(), below.clone());
        below = id;
    }
}

fn with_parents(tree: &SceneTree, parent: BTreeMap<ObjectId, ObjectId>) -> GoalTree {
    let goal = SceneTree::new(tree.root().clone(), tree.nodes().clone(), parent)
        .expect("rule output forms a valid tree");
    GoalTree::from_valid(goal)
}

/// Everything in one chain on the root, ordered by [`stacking_order`].
pub fn rule_stack_all(tree: &SceneTree) -> GoalTree {
    let order = sorted_for_stacking(tree, tree.non_root_ids());
    let mut parent = BTreeMap::new();
    chain_onto(&mut parent, tree.root(), &order);
    with_parents(tree, parent)
}

pub fn rule_unstack_all(tree: &SceneTree) -> GoalTree {
    let parent = tree.non_root_ids().map(|id| (id.clone(), tree.root().clone())).collect();
    with_parents(tree, parent)
}

/// One stack per material on the root, each ordered by [`stacking_order`].
pub fn rule_group_by_material(tree: &SceneTree) -> GoalTree {
    let mut groups: BTreeMap<Material, Vec<&ObjectId>> = BTreeMap::new();
    for id in tree.non_root_ids() {
        groups.entry(tree.nodes()[id].attributes.material).or_default().push(id);
    }
    let mut parent = BTreeMap::new();
    for members in groups.into_values() {
        let order = sorted_for_stacking(tree, members);
        chain_onto(&mut parent, tree.root(), &order);
    }
    with_parents(tree, parent)
}

/// Restacks the target's stack into one chain with the target on top.
///
/// The stack is the subtree of the root child that holds the target; its
/// other members go below the target in [`stacking_order`]. Other stacks are
/// left as they are.
pub fn rule_stack_object(tree: &SceneTree, target: &ObjectId) -> Result<GoalTree, ReorganizeError> {
    if !tree.contains(target) {
        return Err(ReorganizeError::InvalidTask(format!("{target} is not in the scene")));
    }
    if target == tree.root() {
        return Err(ReorganizeError::InvalidTask(format!("{target} is the support surface")));
    }
    let base = stack_base(tree, target);
    let members: Vec<&ObjectId> = tree.subtree(base).into_iter().filter(|id| *id != target).collect();
    let mut order = sorted_for_stacking(tree, members);
    order.push(target);

    let mut parent = tree.parent_map().clone();
    chain_onto(&mut parent, tree.root(), &order);
    Ok(with_parents(tree, parent))
}

/// The root child whose subtree holds `id`.
fn stack_base<'a>(tree: &'a SceneTree, id: &'a ObjectId) -> &'a ObjectId {
    let mut current = id;
    while let Some(p) = tree.parent(current) {
        if p == tree.root() {
            break;
        }
        current = p;
    }
    current
}

fn is_chain(tree: &SceneTree, from: &ObjectId) -> bool {
    tree.subtree(from).iter().all(|id| tree.children(id).len() <= 1)
}

/// Whether `goal` meets the end condition of a structured task, judged
/// against the tree it was derived from. Free text always returns false.
pub fn goal_condition_holds(initial: &SceneTree, goal: &SceneTree, task: &TaskSpec) -> bool {
    let root = goal.root();
    match &task.kind {
        TaskKind::StackAll => {
            goal.children(root).len() <= 1
                && is_chain(goal, root)
                && check_physical_constraints(goal).violations.is_empty()
        }
        TaskKind::UnstackAll => goal.non_root_ids().all(|id| goal.parent(id) == Some(root)),
        TaskKind::GroupByMaterial => {
            let mut seen = BTreeSet::new();
            goal.children(root).iter().all(|base| {
                let members = goal.subtree(base);
                let material = goal.nodes()[base].attributes.material;
                is_chain(goal, base)
                    && members.iter().all(|m| goal.nodes()[*m].attributes.material == material)
                    && seen.insert(material)
            }) && check_physical_constraints(goal).violations.is_empty()
        }
        TaskKind::StackObject(target) => {
            if !goal.contains(target) || target == root || !initial.contains(target) {
                return false;
            }
            let initial_base = stack_base(initial, target);
            let goal_base = stack_base(goal, target);
            let initial_members: BTreeSet<&ObjectId> = initial.subtree(initial_base).into_iter().collect();
            let goal_members: BTreeSet<&ObjectId> = goal.subtree(goal_base).into_iter().collect();
            let others_untouched = initial
                .children(initial.root())
                .iter()
                .filter(|b| *b != initial_base)
                .all(|b| initial.subtree(b).iter().all(|id| goal.parent(id) == initial.parent(id)));
            goal.is_clear(target) && is_chain(goal, goal_base) && initial_members == goal_members && others_untouched
        }
        TaskKind::FreeText(_) => false,
    }
}
