//! Tabletop scene trees from spatial captions.
//!
//! Captions such as "The cup is on top of the book." are parsed into
//! `(subject, predicate, support)` triplets ([`parser`]), assembled into a
//! rooted support hierarchy ([`tree`]), reorganized to satisfy a task
//! ([`reorganize`]), and turned into a pick-and-place plan ([`planner`]).
//! [`dataset`] handles scene-record files and synthetic scenes, and
//! [`pipeline`] ties the stages together for the command-line tool.

pub mod dataset;
pub mod model;
pub mod parser;
pub mod pipeline;
pub mod planner;
pub mod reorganize;
pub mod tree;

pub use model::{
    canonicalize_id, AttributeSet, Fragility, Material, MoveAction, ObjectId, ObjectInstance, Plan, SceneRecord,
    SceneTree, SpatialPredicate, SpatialTriplet, TaskKind, TaskSpec, Transparency,
};
