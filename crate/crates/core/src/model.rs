//! Shared domain types: object identity, attributes, spatial triplets,
//! scene trees, tasks and plans.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid label {0:?}: no alphanumeric characters")]
    InvalidLabel(String),
    #[error("invalid object id {0:?}: expected [a-z][a-z0-9_]*")]
    InvalidId(String),
    #[error("ordinal must be positive")]
    ZeroOrdinal,
    #[error("mass must be positive and finite, got {0}")]
    InvalidMass(f64),
    #[error("unknown {domain} value {value:?}")]
    UnknownToken { domain: &'static str, value: String },
    #[error("unknown predicate {0:?}")]
    UnknownPredicate(String),
    #[error("triplet subject and support are both {0}")]
    SelfSupport(ObjectId),
}

/// Lowercase object identifier matching `[a-z][a-z0-9_]*`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ObjectId(String);

impl ObjectId {
    pub fn new(id: impl Into<String>) -> Result<Self, ModelError> {
        let id = id.into();
        let mut chars = id.chars();
        let valid = matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
            && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
        if valid {
            Ok(Self(id))
        } else {
            Err(ModelError::InvalidId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Trailing `_<n>` ordinal, if the id carries one.
    pub fn ordinal(&self) -> Option<u32> {
        let (_, tail) = self.0.rsplit_once('_')?;
        tail.parse().ok()
    }
}

impl TryFrom<String> for ObjectId {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<ObjectId> for String {
    fn from(id: ObjectId) -> Self {
        id.0
    }
}

impl FromStr for ObjectId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for ObjectId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Builds the canonical id `<label>_<ordinal>` for a detected object.
///
/// The label is lowercased and every run of non-alphanumeric characters
/// becomes a single underscore. A label starting with a digit is prefixed
/// with `obj_` so the result stays a valid [`ObjectId`].
pub fn canonicalize_id(label: &str, ordinal: u32) -> Result<ObjectId, ModelError> {
    if ordinal == 0 {
        return Err(ModelError::ZeroOrdinal);
    }
    let mut stem = String::with_capacity(label.len());
    for c in label.trim().chars().flat_map(char::to_lowercase) {
        if c.is_ascii_alphanumeric() {
            stem.push(c);
        } else if !stem.is_empty() && !stem.ends_with('_') {
            stem.push('_');
        }
    }
    while stem.ends_with('_') {
        stem.pop();
    }
    if stem.is_empty() {
        return Err(ModelError::InvalidLabel(label.to_string()));
    }
    if stem.starts_with(|c: char| c.is_ascii_digit()) {
        stem.insert_str(0, "obj_");
    }
    ObjectId::new(format!("{stem}_{ordinal}"))
}

macro_rules! token_enum {
    ($(#[$meta:meta])* $name:ident, $domain:literal { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = ModelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(ModelError::UnknownToken { domain: $domain, value: other.to_string() }),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

token_enum!(
    /// How delicate an object is. Ordered `Low < Medium < High`.
    Fragility, "fragility" {
        Low => "low",
        Medium => "medium",
        High => "high",
    }
);

token_enum!(
    Material, "material" {
        Wood => "wood",
        Metal => "metal",
        Glass => "glass",
        Plastic => "plastic",
        Ceramic => "ceramic",
        Paper => "paper",
        Fabric => "fabric",
        Other => "other",
    }
);

token_enum!(
    Transparency, "transparency" {
        Opaque => "opaque",
        Translucent => "translucent",
        Transparent => "transparent",
    }
);

/// Strictly positive, finite mass in grams.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Mass(f64);

impl Mass {
    pub fn grams(value: f64) -> Result<Self, ModelError> {
        if value.is_finite() && value > 0.0 {
            Ok(Self(value))
        } else {
            Err(ModelError::InvalidMass(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Mass {
    /// Integral masses print without a fractional part; everything else
    /// uses the shortest round-trip decimal.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Mass {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.fract() == 0.0 && self.0 < 9.0e15 {
            serializer.serialize_u64(self.0 as u64)
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Mass {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = f64::deserialize(deserializer)?;
        Mass::grams(raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeSet {
    pub fragility: Fragility,
    pub mass_grams: Mass,
    pub material: Material,
    pub transparency: Transparency,
}

impl AttributeSet {
    pub fn new(
        fragility: Fragility,
        mass_grams: f64,
        material: Material,
        transparency: Transparency,
    ) -> Result<Self, ModelError> {
        Ok(Self {
            fragility,
            mass_grams: Mass::grams(mass_grams)?,
            material,
            transparency,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: ObjectId,
    pub label: String,
    #[serde(flatten)]
    pub attributes: AttributeSet,
}

impl ObjectInstance {
    pub fn new(id: ObjectId, label: impl Into<String>, attributes: AttributeSet) -> Result<Self, ModelError> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(ModelError::InvalidLabel(label));
        }
        Ok(Self { id, label, attributes })
    }
}

/// The two supported spatial relations. Both mean "rests on".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialPredicate {
    On,
    OnTopOf,
}

impl SpatialPredicate {
    pub fn as_str(self) -> &'static str {
        match self {
            SpatialPredicate::On => "on",
            SpatialPredicate::OnTopOf => "on_top_of",
        }
    }

    pub fn phrase(self) -> &'static str {
        match self {
            SpatialPredicate::On => "on",
            SpatialPredicate::OnTopOf => "on top of",
        }
    }
}

impl FromStr for SpatialPredicate {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "on" => Ok(SpatialPredicate::On),
            "on_top_of" => Ok(SpatialPredicate::OnTopOf),
            other => Err(ModelError::UnknownPredicate(other.to_string())),
        }
    }
}

impl fmt::Display for SpatialPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `subject` rests on `support`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpatialTriplet {
    pub subject: ObjectId,
    pub predicate: SpatialPredicate,
    pub support: ObjectId,
}

impl SpatialTriplet {
    pub fn new(subject: ObjectId, predicate: SpatialPredicate, support: ObjectId) -> Result<Self, ModelError> {
        if subject == support {
            return Err(ModelError::SelfSupport(subject));
        }
        Ok(Self { subject, predicate, support })
    }
}

impl fmt::Display for SpatialTriplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.predicate, self.support)
    }
}

/// Rooted support hierarchy: the root is the support surface and every
/// other node rests on exactly one parent.
///
/// Values built through [`SceneTree::new`] always satisfy the tree
/// invariants. [`SceneTree::from_parts_unchecked`] exists for inspecting
/// broken inputs with [`crate::tree::validate_tree`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTree {
    root: ObjectId,
    nodes: BTreeMap<ObjectId, ObjectInstance>,
    parent: BTreeMap<ObjectId, ObjectId>,
    children: BTreeMap<ObjectId, Vec<ObjectId>>,
}

impl SceneTree {
    /// Builds a tree, returning every invariant breach on failure.
    pub fn new(
        root: ObjectId,
        nodes: BTreeMap<ObjectId, ObjectInstance>,
        parent: BTreeMap<ObjectId, ObjectId>,
    ) -> Result<Self, Vec<crate::tree::Violation>> {
        let tree = Self::from_parts_unchecked(root, nodes, parent);
        let violations = crate::tree::validate_tree(&tree);
        if violations.is_empty() {
            Ok(tree)
        } else {
            Err(violations)
        }
    }

    pub fn from_parts_unchecked(
        root: ObjectId,
        nodes: BTreeMap<ObjectId, ObjectInstance>,
        parent: BTreeMap<ObjectId, ObjectId>,
    ) -> Self {
        let mut children: BTreeMap<ObjectId, Vec<ObjectId>> = BTreeMap::new();
        // parent is iterated in id order, so each child list comes out sorted
        for (child, p) in &parent {
            children.entry(p.clone()).or_default().push(child.clone());
        }
        Self { root, nodes, parent, children }
    }

    /// A tree holding only the support surface.
    pub fn single(root: ObjectInstance) -> Self {
        let id = root.id.clone();
        let mut nodes = BTreeMap::new();
        nodes.insert(id.clone(), root);
        Self::from_parts_unchecked(id, nodes, BTreeMap::new())
    }

    pub fn root(&self) -> &ObjectId {
        &self.root
    }

    pub fn root_object(&self) -> &ObjectInstance {
        &self.nodes[&self.root]
    }

    pub fn contains(&self, id: &ObjectId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn get(&self, id: &ObjectId) -> Option<&ObjectInstance> {
        self.nodes.get(id)
    }

    pub fn parent(&self, id: &ObjectId) -> Option<&ObjectId> {
        self.parent.get(id)
    }

    /// Children of `id` in lexicographic order.
    pub fn children(&self, id: &ObjectId) -> &[ObjectId] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_clear(&self, id: &ObjectId) -> bool {
        self.children(id).is_empty()
    }

    pub fn nodes(&self) -> &BTreeMap<ObjectId, ObjectInstance> {
        &self.nodes
    }

    pub fn parent_map(&self) -> &BTreeMap<ObjectId, ObjectId> {
        &self.parent
    }

    pub fn ids(&self) -> impl Iterator<Item = &ObjectId> {
        self.nodes.keys()
    }

    pub fn non_root_ids(&self) -> impl Iterator<Item = &ObjectId> {
        self.nodes.keys().filter(move |id| **id != self.root)
    }

    pub fn objects(&self) -> impl Iterator<Item = &ObjectInstance> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Ancestors of `id` from its parent down to the root.
    pub fn ancestors<'a>(&'a self, id: &ObjectId) -> impl Iterator<Item = &'a ObjectId> + 'a {
        let mut cursor = self.parent.get(id);
        std::iter::from_fn(move || {
            let current = cursor?;
            cursor = self.parent.get(current);
            Some(current)
        })
        .take(self.nodes.len())
    }

    /// `(id, depth)` pairs in pre-order with children in id order.
    pub fn preorder(&self) -> Vec<(&ObjectId, usize)> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(&self.root, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            out.push((id, depth));
            for child in self.children(id).iter().rev() {
                stack.push((child, depth + 1));
            }
        }
        out
    }

    /// Parent/child pairs in pre-order.
    pub fn edges(&self) -> Vec<(&ObjectId, &ObjectId)> {
        self.preorder()
            .into_iter()
            .filter_map(|(id, _)| self.parent.get(id).map(|p| (id, p)))
            .collect()
    }

    pub fn subtree<'a>(&'a self, id: &'a ObjectId) -> Vec<&'a ObjectId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(current) = stack.pop() {
            out.push(current);
            stack.extend(self.children(current).iter().rev());
        }
        out
    }

    pub fn is_in_subtree(&self, candidate: &ObjectId, subtree_root: &ObjectId) -> bool {
        candidate == subtree_root || self.ancestors(candidate).any(|a| a == subtree_root)
    }

    /// Moves `id` (and its subtree) onto `new_parent` without validation.
    pub(crate) fn reparent_unchecked(&mut self, id: &ObjectId, new_parent: &ObjectId) {
        if let Some(old) = self.parent.insert(id.clone(), new_parent.clone()) {
            if let Some(siblings) = self.children.get_mut(&old) {
                siblings.retain(|c| c != id);
                if siblings.is_empty() {
                    self.children.remove(&old);
                }
            }
        }
        let siblings = self.children.entry(new_parent.clone()).or_default();
        let pos = siblings.binary_search(id).unwrap_or_else(|p| p);
        siblings.insert(pos, id.clone());
    }

    /// Object instances in id order, root included.
    pub fn registry(&self) -> Vec<ObjectInstance> {
        self.nodes.values().cloned().collect()
    }
}

/// Structured task kinds understood by the rule backend, plus free text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    StackAll,
    StackObject(ObjectId),
    UnstackAll,
    GroupByMaterial,
    FreeText(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub raw_prompt: String,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, raw_prompt: impl Into<String>) -> Self {
        Self { kind, raw_prompt: raw_prompt.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MoveAction {
    pub object: ObjectId,
    pub destination: ObjectId,
}

impl MoveAction {
    pub fn new(object: ObjectId, destination: ObjectId) -> Self {
        Self { object, destination }
    }
}

impl fmt::Display for MoveAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MOVE {} ONTO {}", self.object, self.destination)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub moves: Vec<MoveAction>,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    /// Reads the `MOVE <object> ONTO <destination>` line format.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut moves = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["MOVE", object, "ONTO", destination] => {
                    moves.push(MoveAction::new(ObjectId::new(*object)?, ObjectId::new(*destination)?));
                }
                _ => return Err(ModelError::InvalidId(line.to_string())),
            }
        }
        Ok(Self { moves })
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.moves {
            writeln!(f, "{m}")?;
        }
        Ok(())
    }
}

/// One dataset item: annotated objects and captions for a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub objects: Vec<ObjectInstance>,
    pub captions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triplets: Option<Vec<SpatialTriplet>>,
}
