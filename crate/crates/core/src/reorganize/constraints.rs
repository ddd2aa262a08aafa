use std::cmp::Ordering;

use serde::Serialize;

use crate::model::{ObjectId, SceneTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConstraintKind {
    FragileBelowHeavier,
    MassInversion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstraintViolation {
    pub kind: ConstraintKind,
    pub above: ObjectId,
    pub below: ObjectId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PhysicalConstraintReport {
    pub violations: Vec<ConstraintViolation>,
}

/// Flags every (below, above) pair on a support path whose order breaks the
/// stacking rule: a more fragile object underneath, or among equally
/// fragile objects a heavier one on top. The support surface is never
/// part of a pair. Advisory only.
pub fn check_physical_constraints(tree: &SceneTree) -> PhysicalConstraintReport {
    let mut violations = Vec::new();
    for (above, _) in tree.preorder() {
        if above == tree.root() {
            continue;
        }
        let top = &tree.nodes()[above].attributes;
        for below in tree.ancestors(above).filter(|b| *b != tree.root()) {
            let under = &tree.nodes()[below].attributes;
            let kind = match under.fragility.cmp(&top.fragility) {
                Ordering::Greater => Some(ConstraintKind::FragileBelowHeavier),
                Ordering::Equal if top.mass_grams.value() > under.mass_grams.value() => {
                    Some(ConstraintKind::MassInversion)
                }
                _ => None,
            };
            if let Some(kind) = kind {
                violations.push(ConstraintViolation { kind, above: above.clone(), below: below.clone() });
            }
        }
    }
    PhysicalConstraintReport { violations }
}
