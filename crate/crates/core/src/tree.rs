//! Scene-tree construction from triplets, validation, and DOT export.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::model::{ObjectId, ObjectInstance, SceneTree, SpatialTriplet};

/// Labels that identify a support surface when inferring the root.
pub const SURFACE_LABELS: &[&str] = &["table", "desk", "shelf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ViolationKind {
    Cycle,
    MultipleParents,
    UnknownId,
    SelfSupport,
    NoRoot,
    DuplicateId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl Violation {
    fn new(kind: ViolationKind, detail: impl Into<String>) -> Self {
        Self { kind, detail: detail.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct BuildReport {
    pub tree: Option<SceneTree>,
    pub violations: Vec<Violation>,
}

impl BuildReport {
    pub fn is_success(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    pub fn into_result(self) -> Result<SceneTree, Vec<Violation>> {
        match self.tree {
            Some(tree) if self.violations.is_empty() => Ok(tree),
            _ => Err(self.violations),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("unknown object id {0}")]
    UnknownId(ObjectId),
}

/// Builds a scene tree: each triplet `(s, _, o)` becomes `parent(s) = o`.
///
/// Objects never named as a subject hang directly off the root. Without a
/// `root_hint`, the root is the unique never-a-subject object with a surface
/// label, or failing that the unique never-a-subject object.
pub fn build_tree(
    triplets: &[SpatialTriplet],
    objects: &[ObjectInstance],
    root_hint: Option<&ObjectId>,
) -> BuildReport {
    let mut violations = Vec::new();
    let mut nodes: BTreeMap<ObjectId, ObjectInstance> = BTreeMap::new();
    for obj in objects {
        if nodes.insert(obj.id.clone(), obj.clone()).is_some() {
            violations.push(Violation::new(ViolationKind::DuplicateId, format!("object id {} declared twice", obj.id)));
        }
    }

    let mut parent: BTreeMap<ObjectId, ObjectId> = BTreeMap::new();
    for t in triplets {
        if t.subject == t.support {
            violations.push(Violation::new(ViolationKind::SelfSupport, format!("{} rests on itself", t.subject)));
            continue;
        }
        let mut known = true;
        for id in [&t.subject, &t.support] {
            if !nodes.contains_key(id) {
                violations.push(Violation::new(ViolationKind::UnknownId, format!("{id} in {t} is not a declared object")));
                known = false;
            }
        }
        if !known {
            continue;
        }
        match parent.get(&t.subject) {
            Some(existing) if *existing != t.support => violations.push(Violation::new(
                ViolationKind::MultipleParents,
                format!("{} rests on both {} and {}", t.subject, existing, t.support),
            )),
            Some(_) => {}
            None => {
                parent.insert(t.subject.clone(), t.support.clone());
            }
        }
    }

    if let Some(path) = detect_cycle(triplets) {
        violations.push(Violation::new(ViolationKind::Cycle, format_path(&path)));
    }

    let root = match root_hint {
        Some(hint) if !nodes.contains_key(hint) => {
            violations.push(Violation::new(ViolationKind::UnknownId, format!("root hint {hint} is not a declared object")));
            None
        }
        Some(hint) if parent.contains_key(hint) => {
            violations.push(Violation::new(
                ViolationKind::NoRoot,
                format!("root hint {hint} rests on {}", parent[hint]),
            ));
            None
        }
        Some(hint) => Some(hint.clone()),
        None => infer_root(&nodes, &parent, &mut violations),
    };

    if !violations.is_empty() {
        return BuildReport { tree: None, violations };
    }
    let Some(root) = root else {
        return BuildReport { tree: None, violations };
    };

    for id in nodes.keys() {
        if *id != root && !parent.contains_key(id) {
            parent.insert(id.clone(), root.clone());
        }
    }

    match SceneTree::new(root, nodes, parent) {
        Ok(tree) => BuildReport { tree: Some(tree), violations },
        Err(found) => BuildReport { tree: None, violations: found },
    }
}

fn infer_root(
    nodes: &BTreeMap<ObjectId, ObjectInstance>,
    parent: &BTreeMap<ObjectId, ObjectId>,
    violations: &mut Vec<Violation>,
) -> Option<ObjectId> {
    let candidates: Vec<&ObjectInstance> = nodes.values().filter(|o| !parent.contains_key(&o.id)).collect();
    let surfaces: Vec<&ObjectInstance> = candidates
        .iter()
        .copied()
        .filter(|o| SURFACE_LABELS.contains(&o.label.trim().to_lowercase().as_str()))
        .collect();
    let pool = if surfaces.is_empty() { &candidates } else { &surfaces };
    match pool.as_slice() {
        [only] => Some(only.id.clone()),
        [] => {
            violations.push(Violation::new(ViolationKind::NoRoot, "every object rests on another object"));
            None
        }
        many => {
            let ids: Vec<String> = many.iter().map(|o| o.id.to_string()).collect();
            violations.push(Violation::new(
                ViolationKind::NoRoot,
                format!("ambiguous root candidates: {}", ids.join(", ")),
            ));
            None
        }
    }
}

fn format_path(path: &[ObjectId]) -> String {
    path.iter().map(ObjectId::as_str).collect::<Vec<_>>().join("→")
}

/// Checks every tree invariant; returns one violation per breach.
pub fn validate_tree(tree: &SceneTree) -> Vec<Violation> {
    let mut violations = Vec::new();
    let nodes = tree.nodes();
    let parent = tree.parent_map();
    let root = tree.root();

    for (key, obj) in nodes {
        if *key != obj.id {
            violations.push(Violation::new(ViolationKind::UnknownId, format!("node key {key} holds object {}", obj.id)));
        }
    }
    if !nodes.contains_key(root) {
        violations.push(Violation::new(ViolationKind::NoRoot, format!("root {root} is not a node")));
    }
    for (child, p) in parent {
        if !nodes.contains_key(child) {
            violations.push(Violation::new(ViolationKind::UnknownId, format!("{child} has a parent but is not a node")));
        }
        if !nodes.contains_key(p) {
            violations.push(Violation::new(ViolationKind::UnknownId, format!("{child} rests on unknown {p}")));
        }
        if child == p {
            violations.push(Violation::new(ViolationKind::SelfSupport, format!("{child} rests on itself")));
        }
    }
    if let Some(p) = parent.get(root) {
        if walk_up(parent, root).1 {
            violations.push(Violation::new(ViolationKind::Cycle, format!("root {root} lies on a support cycle")));
        } else {
            violations.push(Violation::new(
                ViolationKind::MultipleParents,
                format!("root {root} rests on {p}"),
            ));
        }
    }

    // Walk every other node up to the root; record each distinct cycle and
    // each orphaned top once.
    let mut reported_cycles: BTreeSet<ObjectId> = BTreeSet::new();
    let mut reported_orphans: BTreeSet<ObjectId> = BTreeSet::new();
    for id in nodes.keys().filter(|id| *id != root) {
        if parent.get(id) == Some(id) {
            continue;
        }
        let (path, cyclic) = walk_up(parent, id);
        let last = path.last().expect("walk includes start");
        if cyclic {
            let start = path.iter().position(|n| n == last).unwrap();
            let cycle_min = path[start..path.len() - 1].iter().min().unwrap().clone();
            if cycle_min != *root && reported_cycles.insert(cycle_min.clone()) {
                let members: Vec<ObjectId> = path[start..].to_vec();
                violations.push(Violation::new(ViolationKind::Cycle, format_path(&members)));
            }
        } else if last != root && nodes.contains_key(last) && reported_orphans.insert(last.clone()) {
            violations.push(Violation::new(
                ViolationKind::NoRoot,
                format!("{last} is not connected to root {root}"),
            ));
        }
    }
    violations
}

/// Follows parent pointers from `start`; the bool is true when the walk
/// revisits a node, in which case the repeated node closes the path.
fn walk_up(parent: &BTreeMap<ObjectId, ObjectId>, start: &ObjectId) -> (Vec<ObjectId>, bool) {
    let mut seen = BTreeSet::new();
    let mut path = vec![start.clone()];
    seen.insert(start.clone());
    let mut cursor = start;
    while let Some(next) = parent.get(cursor) {
        path.push(next.clone());
        if !seen.insert(next.clone()) {
            return (path, true);
        }
        cursor = next;
    }
    (path, false)
}

/// Shortest cycle in the subject→support digraph, reported from its
/// lexicographically least node and closed by repeating it.
pub fn detect_cycle(triplets: &[SpatialTriplet]) -> Option<Vec<ObjectId>> {
    let mut edges: BTreeMap<&ObjectId, BTreeSet<&ObjectId>> = BTreeMap::new();
    for t in triplets {
        edges.entry(&t.subject).or_default().insert(&t.support);
    }
    let mut best: Option<Vec<ObjectId>> = None;
    for &start in edges.keys() {
        if best.as_ref().is_some_and(|b| b.len() <= 2) {
            break;
        }
        // BFS from start back to start; neighbours visited in id order
        let mut prev: BTreeMap<&ObjectId, &ObjectId> = BTreeMap::new();
        let mut queue = VecDeque::from([start]);
        let mut closing = None;
        'search: while let Some(node) = queue.pop_front() {
            for &next in edges.get(node).into_iter().flatten() {
                if next == start {
                    closing = Some(node);
                    break 'search;
                }
                if !prev.contains_key(next) {
                    prev.insert(next, node);
                    queue.push_back(next);
                }
            }
        }
        let Some(mut node) = closing else { continue };
        let mut path = vec![start.clone()];
        while node != start {
            path.push(node.clone());
            node = prev[node];
        }
        path.push(start.clone());
        path.reverse();
        if best.as_ref().is_none_or(|b| path.len() < b.len()) {
            best = Some(path);
        }
    }
    best
}

/// Number of edges from the root to `id`.
pub fn depth(tree: &SceneTree, id: &ObjectId) -> Result<usize, TreeError> {
    if !tree.contains(id) {
        return Err(TreeError::UnknownId(id.clone()));
    }
    Ok(tree.ancestors(id).count())
}

/// Non-root objects with nothing resting on them.
pub fn clear_objects(tree: &SceneTree) -> BTreeSet<ObjectId> {
    tree.non_root_ids().filter(|id| tree.is_clear(id)).cloned().collect()
}

/// Graphviz digraph with support edges drawn parent → child.
pub fn to_dot(tree: &SceneTree) -> String {
    let mut out = String::from("digraph scene {\n    rankdir=BT;\n    node [shape=box];\n");
    for (id, _) in tree.preorder() {
        let obj = &tree.nodes()[id];
        let _ = writeln!(
            out,
            "    \"{}\" [label=\"{}\\n[{}, {}]\"];",
            id, id, obj.attributes.material, obj.attributes.mass_grams
        );
    }
    for (child, parent) in tree.edges() {
        let _ = writeln!(out, "    \"{parent}\" -> \"{child}\";");
    }
    out.push_str("}\n");
    out
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::model::SpatialPredicate;

    #[test]
    fn book_on_table() {
        let t = SpatialTriplet::new(id("book_1"), SpatialPredicate::OnTopOf, id("table_1")).unwrap();
        let report = build_tree(&[t], &[obj("table_1"), obj("book_1")], None);
        let tree = report.into_result().unwrap();
        assert_eq!(tree.root(), &id("table_1"));
        assert_eq!(tree.children(&id("table_1")), &[id("book_1")]);
    }

    #[test]
    fn empty_triplets_single_node() {
        let tree = build_tree(&[], &[obj("table_1")], None).into_result().unwrap();
        assert_eq!(tree.len(), 1);
        assert!(tree.parent_map().is_empty());
    }

    #[test]
    fn two_cycle_is_reported_with_path() {
        let report = build_tree(&[on("a_1", "b_1"), on("b_1", "a_1")], &[obj("a_1"), obj("b_1"), obj("table_1")], None);
        assert!(!report.is_success());
        let cycle = report.violations.iter().find(|v| v.kind == ViolationKind::Cycle).unwrap();
        assert_eq!(cycle.detail, "a_1→b_1→a_1");
        assert!(!report.has(ViolationKind::MultipleParents));
    }

    #[test]
    fn conflicting_supports() {
        let report = build_tree(
            &[on("cup_1", "book_1"), on("cup_1", "plate_1")],
            &[obj("table_1"), obj("book_1"), obj("plate_1"), obj("cup_1")],
            None,
        );
        assert!(report.has(ViolationKind::MultipleParents));
        assert!(!report.has(ViolationKind::Cycle));
    }

    #[test]
    fn repeated_identical_support_is_fine() {
        let report = build_tree(
            &[on("cup_1", "table_1"), on("cup_1", "table_1")],
            &[obj("table_1"), obj("cup_1")],
            None,
        );
        assert!(report.is_success());
    }

    #[test]
    fn unknown_and_self_support() {
        let report = build_tree(&[on("cup_1", "vase_1")], &[obj("table_1"), obj("cup_1")], None);
        assert!(report.has(ViolationKind::UnknownId));
        let bad = SpatialTriplet { subject: id("cup_1"), predicate: SpatialPredicate::On, support: id("cup_1") };
        let report = build_tree(&[bad], &[obj("table_1"), obj("cup_1")], None);
        assert!(report.has(ViolationKind::SelfSupport));
    }

    #[test]
    fn duplicate_object_ids() {
        let report = build_tree(&[], &[obj("table_1"), obj("table_1")], None);
        assert!(report.has(ViolationKind::DuplicateId));
    }

    #[test]
    fn root_inference() {
        // no surface label, two free objects
        let report = build_tree(&[], &[obj("box_1"), obj("crate_1")], None);
        assert!(report.has(ViolationKind::NoRoot));
        // unique never-a-subject object without a surface label
        let tree = build_tree(&[on("box_1", "crate_1")], &[obj("box_1"), obj("crate_1")], None)
            .into_result()
            .unwrap();
        assert_eq!(tree.root(), &id("crate_1"));
        // surface label wins over other free objects, which attach to it
        let tree = build_tree(&[], &[obj("pen_1"), obj("desk_1")], None).into_result().unwrap();
        assert_eq!(tree.root(), &id("desk_1"));
        assert_eq!(tree.parent(&id("pen_1")), Some(&id("desk_1")));
        // two surfaces
        let report = build_tree(&[], &[obj("desk_1"), obj("table_1")], None);
        assert!(report.has(ViolationKind::NoRoot));
        // hint resolves it
        let tree = build_tree(&[], &[obj("desk_1"), obj("table_1")], Some(&id("desk_1"))).into_result().unwrap();
        assert_eq!(tree.root(), &id("desk_1"));
        // hint that rests on something
        let report = build_tree(&[on("desk_1", "table_1")], &[obj("desk_1"), obj("table_1")], Some(&id("desk_1")));
        assert!(report.has(ViolationKind::NoRoot));
    }

    #[test]
    fn unmentioned_supports_attach_to_root() {
        let tree = tree(&[("cup_1", "tray_1")]);
        assert_eq!(tree.parent(&id("tray_1")), Some(&id("table_1")));
        assert_eq!(tree.parent(&id("cup_1")), Some(&id("tray_1")));
    }

    #[test]
    fn detect_cycle_examples() {
        assert_eq!(detect_cycle(&[on("a_1", "b_1"), on("b_1", "c_1")]), None);
        assert_eq!(detect_cycle(&[]), None);
        assert_eq!(
            detect_cycle(&[on("a_1", "b_1"), on("b_1", "a_1")]),
            Some(vec![id("a_1"), id("b_1"), id("a_1")])
        );
        // shortest wins over the lexicographically earlier long cycle
        let t = [on("a_1", "b_1"), on("b_1", "c_1"), on("c_1", "a_1"), on("x_1", "y_1"), on("y_1", "x_1")];
        assert_eq!(detect_cycle(&t), Some(vec![id("x_1"), id("y_1"), id("x_1")]));
        // equal length: least start
        let t = [on("d_1", "c_1"), on("c_1", "d_1"), on("b_1", "e_1"), on("e_1", "b_1")];
        assert_eq!(detect_cycle(&t), Some(vec![id("b_1"), id("e_1"), id("b_1")]));
    }

    #[test]
    fn validate_valid_stack() {
        let t = tree(&[("book_1", "table_1"), ("cup_1", "book_1")]);
        assert!(validate_tree(&t).is_empty());
    }

    #[test]
    fn validate_root_with_parent() {
        let t = tree(&[("book_1", "table_1")]);
        let mut parent = t.parent_map().clone();
        parent.insert(id("table_1"), id("book_1"));
        let broken = SceneTree::from_parts_unchecked(id("table_1"), t.nodes().clone(), parent);
        let v = validate_tree(&broken);
        assert!(v.iter().any(|v| v.kind == ViolationKind::Cycle));

        let t = tree(&[("book_1", "table_1")]);
        let mut nodes = t.nodes().clone();
        nodes.insert(id("floor_1"), obj("floor_1"));
        let mut parent = t.parent_map().clone();
        parent.insert(id("table_1"), id("floor_1"));
        let broken = SceneTree::from_parts_unchecked(id("table_1"), nodes, parent);
        let v = validate_tree(&broken);
        assert!(v.iter().any(|v| v.kind == ViolationKind::MultipleParents));
    }

    #[test]
    fn validate_unreachable_node() {
        let t = tree(&[("book_1", "table_1")]);
        let mut nodes = t.nodes().clone();
        nodes.insert(id("cup_1"), obj("cup_1"));
        let broken = SceneTree::from_parts_unchecked(id("table_1"), nodes, t.parent_map().clone());
        let v = validate_tree(&broken);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::NoRoot);
    }

    #[test]
    fn validate_detached_cycle() {
        let t = tree(&[("a_1", "table_1"), ("b_1", "table_1")]);
        let mut parent = t.parent_map().clone();
        parent.insert(id("a_1"), id("b_1"));
        parent.insert(id("b_1"), id("a_1"));
        let broken = SceneTree::from_parts_unchecked(id("table_1"), t.nodes().clone(), parent);
        let v = validate_tree(&broken);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].kind, ViolationKind::Cycle);
    }

    #[test]
    fn depth_and_clear() {
        let t = tree(&[("book_1", "table_1"), ("cup_1", "book_1")]);
        assert_eq!(depth(&t, &id("table_1")).unwrap(), 0);
        assert_eq!(depth(&t, &id("cup_1")).unwrap(), 2);
        assert!(matches!(depth(&t, &id("vase_1")), Err(TreeError::UnknownId(_))));
        assert_eq!(clear_objects(&t), BTreeSet::from([id("cup_1")]));

        let t = tree(&[("a_1", "table_1"), ("b_1", "table_1")]);
        assert_eq!(clear_objects(&t), BTreeSet::from([id("a_1"), id("b_1")]));
        let t = tree(&[]);
        assert!(clear_objects(&t).is_empty());
    }

    #[test]
    fn dot_output_is_stable() {
        let t = tree(&[("book_1", "table_1"), ("cup_1", "book_1")]);
        let dot = to_dot(&t);
        assert_eq!(dot, to_dot(&t.clone()));
        assert_eq!(
            dot,
            "digraph scene {\n    rankdir=BT;\n    node [shape=box];\n    \"table_1\" [label=\"table_1\\n[wood, 100]\"];\n    \"book_1\" [label=\"book_1\\n[wood, 100]\"];\n    \"cup_1\" [label=\"cup_1\\n[wood, 100]\"];\n    \"table_1\" -> \"book_1\";\n    \"book_1\" -> \"cup_1\";\n}\n"
        );
    }
}
