//! Scene-record files, caption rendering, and synthetic scene generation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{
    canonicalize_id, AttributeSet, Fragility, Material, ObjectId, ObjectInstance, SceneRecord, SceneTree,
    SpatialPredicate, SpatialTriplet, Transparency,
};
use crate::parser::{resolve_reference, RESERVED_WORDS};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("domain error: {0}")]
    Domain(String),
}

fn schema(msg: impl Into<String>) -> DatasetError {
    DatasetError::Schema(msg.into())
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, key: &str, ctx: &str) -> Result<&'a Value, DatasetError> {
    obj.get(key).ok_or_else(|| schema(format!("{ctx}: missing field \"{key}\"")))
}

fn str_field<'a>(obj: &'a serde_json::Map<String, Value>, key: &str, ctx: &str) -> Result<&'a str, DatasetError> {
    field(obj, key, ctx)?.as_str().ok_or_else(|| schema(format!("{ctx}: \"{key}\" must be a string")))
}

fn parse_token<T: std::str::FromStr>(value: &str, ctx: &str) -> Result<T, DatasetError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| DatasetError::Domain(format!("{ctx}: {e}")))
}

fn parse_object(value: &Value, index: usize) -> Result<ObjectInstance, DatasetError> {
    let ctx = format!("objects[{index}]");
    let obj = value.as_object().ok_or_else(|| schema(format!("{ctx} must be an object")))?;
    let id = ObjectId::new(str_field(obj, "id", &ctx)?).map_err(|e| schema(format!("{ctx}: {e}")))?;
    let label = str_field(obj, "label", &ctx)?;
    let mass = field(obj, "mass_grams", &ctx)?
        .as_f64()
        .ok_or_else(|| schema(format!("{ctx}: \"mass_grams\" must be a number")))?;
    let attributes = AttributeSet::new(
        parse_token(str_field(obj, "fragility", &ctx)?, &ctx)?,
        mass,
        parse_token(str_field(obj, "material", &ctx)?, &ctx)?,
        parse_token(str_field(obj, "transparency", &ctx)?, &ctx)?,
    )
    .map_err(|e| DatasetError::Domain(format!("{ctx}: {e}")))?;
    ObjectInstance::new(id, label, attributes).map_err(|e| schema(format!("{ctx}: {e}")))
}

fn parse_triplet(value: &Value, index: usize) -> Result<SpatialTriplet, DatasetError> {
    let ctx = format!("triplets[{index}]");
    let obj = value.as_object().ok_or_else(|| schema(format!("{ctx} must be an object")))?;
    let id = |key: &str| -> Result<ObjectId, DatasetError> {
        ObjectId::new(str_field(obj, key, &ctx)?).map_err(|e| schema(format!("{ctx}: {e}")))
    };
    let predicate: SpatialPredicate = parse_token(str_field(obj, "predicate", &ctx)?, &ctx)?;
    SpatialTriplet::new(id("subject")?, predicate, id("support")?).map_err(|e| schema(format!("{ctx}: {e}")))
}

/// Parses and checks a scene record from JSON text.
pub fn parse_scene_record(text: &str) -> Result<SceneRecord, DatasetError> {
    let root: Value = serde_json::from_str(text).map_err(|e| schema(format!("invalid JSON: {e}")))?;
    let obj = root.as_object().ok_or_else(|| schema("record must be a JSON object"))?;
    let scene_id = str_field(obj, "scene_id", "record")?.to_string();
    let objects = field(obj, "objects", "record")?
        .as_array()
        .ok_or_else(|| schema("\"objects\" must be an array"))?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_object(v, i))
        .collect::<Result<Vec<_>, _>>()?;
    let captions = field(obj, "captions", "record")?
        .as_array()
        .ok_or_else(|| schema("\"captions\" must be an array"))?
        .iter()
        .map(|v| v.as_str().map(str::to_string).ok_or_else(|| schema("captions must be strings")))
        .collect::<Result<Vec<_>, _>>()?;
    let triplets = match obj.get("triplets") {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) => {
            Some(items.iter().enumerate().map(|(i, v)| parse_triplet(v, i)).collect::<Result<Vec<_>, _>>()?)
        }
        Some(_) => return Err(schema("\"triplets\" must be an array")),
    };

    let mut ids = BTreeSet::new();
    for o in &objects {
        if !ids.insert(&o.id) {
            return Err(schema(format!("duplicate object id {}", o.id)));
        }
    }
    for t in triplets.iter().flatten() {
        for end in [&t.subject, &t.support] {
            if !ids.contains(end) {
                return Err(schema(format!("triplet {t} references undeclared object {end}")));
            }
        }
    }
    Ok(SceneRecord { scene_id, objects, captions, triplets })
}

pub fn load_scene_record(path: &Path) -> Result<SceneRecord, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    parse_scene_record(&text)
}

pub fn scene_record_json(record: &SceneRecord) -> String {
    let mut text = serde_json::to_string_pretty(record).expect("scene records always serialize");
    text.push('\n');
    text
}

pub fn save_scene_record(path: &Path, record: &SceneRecord) -> Result<(), DatasetError> {
    fs::write(path, scene_record_json(record)).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
}

/// Caption text plus any notes about how it was produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedCaption {
    pub text: String,
    pub warnings: Vec<String>,
}

/// Name an object by label when that reads back unambiguously, else by id.
fn caption_name(tree: &SceneTree, registry: &[ObjectInstance], id: &ObjectId) -> String {
    let label = tree.nodes()[id].label.trim().to_lowercase();
    let plain = !label.is_empty()
        && label.split_whitespace().all(|w| {
            !RESERVED_WORDS.contains(&w) && w.chars().all(|c| c.is_alphanumeric() || c == '-' || c == '\'')
        });
    if plain && resolve_reference(&format!("the {label}"), registry).as_ref() == Ok(id) {
        label
    } else {
        id.to_string()
    }
}

/// One "on top of" sentence per support edge, in pre-order.
pub fn render_caption(tree: &SceneTree) -> RenderedCaption {
    let registry = tree.registry();
    let mut names = BTreeMap::new();
    let mut sentences = Vec::new();
    for (child, parent) in tree.edges() {
        let mut name = |id: &ObjectId| names.entry(id.clone()).or_insert_with(|| caption_name(tree, &registry, id)).clone();
        sentences.push(format!("The {} is on top of the {}.", name(child), name(parent)));
    }
    let warnings = if sentences.is_empty() {
        vec![format!("scene rooted at {} has no support relations", tree.root())]
    } else {
        Vec::new()
    };
    RenderedCaption { text: sentences.join(" "), warnings }
}

/// Sampling distribution for one object class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub label: String,
    pub fragility: Vec<(Fragility, f64)>,
    pub material: Vec<(Material, f64)>,
    pub transparency: Vec<(Transparency, f64)>,
    /// Inclusive range; masses are drawn uniformly and rounded to whole grams.
    pub mass_grams: (f64, f64),
}

impl LabelSpec {
    fn simple(label: &str, fragility: Fragility, material: Material, transparency: Transparency, mass: (f64, f64)) -> Self {
        Self {
            label: label.to_string(),
            fragility: vec![(fragility, 1.0)],
            material: vec![(material, 1.0)],
            transparency: vec![(transparency, 1.0)],
            mass_grams: mass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    /// Inclusive bounds on the number of objects placed on the surface.
    pub object_count_range: (usize, usize),
    pub label_vocabulary: Vec<LabelSpec>,
    pub max_stack_height: usize,
    pub surface: LabelSpec,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        use Fragility::*;
        use Material::*;
        use Transparency::*;
        let mixed = |label: &str, fragility: Vec<(Fragility, f64)>, material: Vec<(Material, f64)>, mass| LabelSpec {
            label: label.to_string(),
            fragility,
            material,
            transparency: vec![(Opaque, 1.0)],
            mass_grams: mass,
        };
        Self {
            seed: 0,
            object_count_range: (2, 7),
            max_stack_height: 4,
            surface: LabelSpec::simple("table", Low, Wood, Opaque, (12000.0, 12000.0)),
            label_vocabulary: vec![
                LabelSpec::simple("book", Low, Paper, Opaque, (150.0, 900.0)),
                LabelSpec::simple("notebook", Low, Paper, Opaque, (80.0, 300.0)),
                mixed("cup", vec![(Medium, 0.6), (High, 0.4)], vec![(Ceramic, 0.7), (Plastic, 0.3)], (150.0, 350.0)),
                mixed("plate", vec![(Medium, 0.5), (High, 0.5)], vec![(Ceramic, 0.8), (Plastic, 0.2)], (200.0, 600.0)),
                mixed("bowl", vec![(Medium, 0.7), (Low, 0.3)], vec![(Ceramic, 0.6), (Wood, 0.4)], (150.0, 500.0)),
                LabelSpec { transparency: vec![(Transparent, 0.8), (Translucent, 0.2)], ..LabelSpec::simple("glass", High, Glass, Transparent, (120.0, 400.0)) },
                LabelSpec::simple("vase", High, Ceramic, Opaque, (300.0, 1500.0)),
                LabelSpec::simple("pen", Low, Plastic, Opaque, (8.0, 30.0)),
                mixed("box", vec![(Low, 1.0)], vec![(Wood, 0.5), (Paper, 0.5)], (100.0, 1200.0)),
                LabelSpec { transparency: vec![(Translucent, 0.5), (Opaque, 0.5)], ..LabelSpec::simple("bottle", Medium, Plastic, Translucent, (30.0, 1100.0)) },
                LabelSpec::simple("can", Low, Metal, Opaque, (15.0, 400.0)),
                LabelSpec::simple("towel", Low, Fabric, Opaque, (100.0, 500.0)),
                LabelSpec::simple("tray", Low, Metal, Opaque, (300.0, 1200.0)),
                LabelSpec::simple("lamp", Medium, Other, Opaque, (500.0, 2500.0)),
            ],
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), String> {
        let (min, max) = self.object_count_range;
        if min > max {
            return Err(format!("object_count_range min {min} exceeds max {max}"));
        }
        if self.label_vocabulary.is_empty() {
            return Err("label vocabulary is empty".into());
        }
        if self.max_stack_height == 0 {
            return Err("max_stack_height must be positive".into());
        }
        for spec in self.label_vocabulary.iter().chain([&self.surface]) {
            let (lo, hi) = spec.mass_grams;
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(format!("{}: bad mass range", spec.label));
            }
            if spec.fragility.is_empty() || spec.material.is_empty() || spec.transparency.is_empty() {
                return Err(format!("{}: empty attribute distribution", spec.label));
            }
            canonicalize_id(&spec.label, 1).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, weighted: &[(T, f64)]) -> T {
    match WeightedIndex::new(weighted.iter().map(|(_, w)| *w)) {
        Ok(dist) => weighted[dist.sample(rng)].0,
        Err(_) => weighted[0].0,
    }
}

fn sample_attributes(rng: &mut ChaCha8Rng, spec: &LabelSpec) -> AttributeSet {
    let (lo, hi) = spec.mass_grams;
    let mass = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let mass = mass.round().max(1.0);
    AttributeSet::new(pick(rng, &spec.fragility), mass, pick(rng, &spec.material), pick(rng, &spec.transparency))
        .expect("validated mass range")
}

/// Random scene tree as sampled by the generator, before captioning.
pub fn generate_tree(config: &GeneratorConfig, index: u64) -> SceneTree {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index);

    let root_id = canonicalize_id(&config.surface.label, 1).expect("validated surface label");
    let root = ObjectInstance::new(root_id.clone(), config.surface.label.clone(), sample_attributes(&mut rng, &config.surface))
        .expect("validated surface label");

    let (min, max) = config.object_count_range;
    let count = rng.gen_range(min..=max);
    let mut ordinals: BTreeMap<ObjectId, u32> = BTreeMap::new();
    let mut placed: Vec<(ObjectId, usize)> = Vec::with_capacity(count);
    let mut nodes = BTreeMap::from([(root_id.clone(), root)]);
    let mut parent = BTreeMap::new();
    for _ in 0..count {
        let spec = config.label_vocabulary.choose(&mut rng).expect("non-empty vocabulary");
        let stem = canonicalize_id(&spec.label, 1).expect("validated label");
        let ordinal = ordinals.entry(stem).and_modify(|n| *n += 1).or_insert(1);
        let mut id = canonicalize_id(&spec.label, *ordinal).expect("validated label");
        if id == root_id {
            *ordinal += 1;
            id = canonicalize_id(&spec.label, *ordinal).expect("validated label");
        }
        let attributes = sample_attributes(&mut rng, spec);

        let supports: Vec<(&ObjectId, usize)> = std::iter::once((&root_id, 0))
            .chain(placed.iter().map(|(i, d)| (i, *d)))
            .filter(|(_, d)| *d < config.max_stack_height)
            .collect();
        let (support, depth) = *supports.choose(&mut rng).expect("root is always available");
        let support = support.clone();

        nodes.insert(id.clone(), ObjectInstance::new(id.clone(), spec.label.clone(), attributes).expect("label"));
        parent.insert(id.clone(), support);
        placed.push((id, depth + 1));
    }
    SceneTree::new(root_id, nodes, parent).expect("generator builds valid trees")
}

/// Deterministic in `(config.seed, index)`; `scene_id` is `scene_<index>`.
pub fn generate_synthetic_scene(config: &GeneratorConfig, index: u64) -> SceneRecord {
    let tree = generate_tree(config, index);
    let caption = render_caption(&tree);
    let triplets = tree
        .edges()
        .into_iter()
        .map(|(child, parent)| SpatialTriplet::new(child.clone(), SpatialPredicate::OnTopOf, parent.clone()).expect("tree edge"))
        .collect();
    let mut objects = vec![tree.root_object().clone()];
    objects.extend(tree.non_root_ids().map(|id| tree.nodes()[id].clone()));
    SceneRecord {
        scene_id: format!("scene_{index:04}"),
        objects,
        captions: if caption.text.is_empty() { Vec::new() } else { vec![caption.text] },
        triplets: Some(triplets),
    }
}

/// Writes `count` generated records as `<scene_id>.json` under `dir`.
pub fn write_synthetic_dataset(config: &GeneratorConfig, count: u64, dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    fs::create_dir_all(dir).map_err(|source| DatasetError::Io { path: dir.to_path_buf(), source })?;
    (0..count)
        .map(|index| {
            let record = generate_synthetic_scene(config, index);
            let path = dir.join(format!("{}.json", record.scene_id));
            save_scene_record(&path, &record).map(|_| path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_caption, Caption};
    use crate::tree::build_tree;
    use crate::tree::test_support::{obj, tree};

    const MINIMAL: &str = r#"{"scene_id": "scene_0000",
        "objects": [{"id": "table_1", "label": "table", "fragility": "low", "mass_grams": 12000,
                     "material": "wood", "transparency": "opaque"}],
        "captions": [""]}"#;

    #[test]
    fn minimal_record() {
        let record = parse_scene_record(MINIMAL).unwrap();
        assert_eq!(record.objects.len(), 1);
        assert_eq!(record.triplets, None);
    }

    #[test]
    fn schema_and_domain_errors() {
        let extra = MINIMAL.replace(r#""captions""#, r#""extra": 1, "captions""#);
        assert!(parse_scene_record(&extra).is_ok(), "unknown fields are ignored");

        let table = r#"{"id": "table_1", "label": "table", "fragility": "low", "mass_grams": 12000, "material": "wood", "transparency": "opaque"}"#;
        let duplicated = format!(r#"{{"scene_id": "s", "objects": [{table}, {table}], "captions": []}}"#);
        assert!(matches!(parse_scene_record(&duplicated), Err(DatasetError::Schema(_))));

        let negative = MINIMAL.replace("12000", "-3");
        assert!(matches!(parse_scene_record(&negative), Err(DatasetError::Domain(_))));
        let bad_material = MINIMAL.replace("wood", "granite");
        assert!(matches!(parse_scene_record(&bad_material), Err(DatasetError::Domain(_))));
        let missing = MINIMAL.replace(r#""label": "table", "#, "");
        assert!(matches!(parse_scene_record(&missing), Err(DatasetError::Schema(_))));
        let wrong_type = MINIMAL.replace("12000", "\"heavy\"");
        assert!(matches!(parse_scene_record(&wrong_type), Err(DatasetError::Schema(_))));
        assert!(matches!(parse_scene_record("[1, 2"), Err(DatasetError::Schema(_))));

        let dangling = MINIMAL.replace(
            r#""captions": [""]"#,
            r#""captions": [], "triplets": [{"subject": "cup_1", "predicate": "on", "support": "table_1"}]"#,
        );
        assert!(matches!(parse_scene_record(&dangling), Err(DatasetError::Schema(_))));
        let bad_predicate = MINIMAL.replace(
            r#""captions": [""]"#,
            r#""captions": [], "triplets": [{"subject": "table_1", "predicate": "under", "support": "table_1"}]"#,
        );
        assert!(matches!(parse_scene_record(&bad_predicate), Err(DatasetError::Domain(_))));
    }

    #[test]
    fn missing_file_is_io() {
        assert!(matches!(load_scene_record(Path::new("/nonexistent/scene.json")), Err(DatasetError::Io { .. })));
    }

    #[test]
    fn book_caption() {
        let mut book = obj("book_1");
        book.label = "book".into();
        let t = build_tree(&[crate::tree::test_support::on("book_1", "table_1")], &[obj("table_1"), book], None)
            .into_result()
            .unwrap();
        let caption = render_caption(&t);
        assert_eq!(caption.text, "The book is on top of the table.");
        assert!(caption.warnings.is_empty());
    }

    #[test]
    fn root_only_caption_warns() {
        let caption = render_caption(&tree(&[]));
        assert_eq!(caption.text, "");
        assert_eq!(caption.warnings.len(), 1);
    }

    #[test]
    fn preorder_sentences_and_duplicate_labels() {
        let t = tree(&[("box_1", "table_1"), ("bowl_1", "box_1")]);
        assert_eq!(render_caption(&t).text, "The box is on top of the table. The bowl is on top of the box.");

        // "a" is an article, so the id is used
        let t = tree(&[("a_1", "table_1")]);
        assert_eq!(render_caption(&t).text, "The a_1 is on top of the table.");

        let t = tree(&[("cup_1", "table_1"), ("cup_2", "cup_1")]);
        let caption = render_caption(&t);
        assert_eq!(caption.text, "The cup_1 is on top of the table. The cup_2 is on top of the cup_1.");
        let parsed = parse_caption(&Caption::new(caption.text).unwrap(), &t.registry()).unwrap();
        let rebuilt = build_tree(&parsed.triplets, &t.registry(), None).into_result().unwrap();
        assert_eq!(rebuilt, t);
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let config = GeneratorConfig::default();
        config.validate().unwrap();
        assert_eq!(generate_synthetic_scene(&config, 0), generate_synthetic_scene(&config, 0));
        assert_ne!(generate_synthetic_scene(&config, 0), generate_synthetic_scene(&config, 1));
        for index in 0..50 {
            let record = generate_synthetic_scene(&config, index);
            let report = build_tree(record.triplets.as_deref().unwrap(), &record.objects, None);
            assert!(report.is_success(), "{:?}", report.violations);
            let tree = report.into_result().unwrap();
            let n = tree.len() - 1;
            assert!((config.object_count_range.0..=config.object_count_range.1).contains(&n));
            assert!(tree.ids().all(|id| tree.ancestors(id).count() <= config.max_stack_height));
        }
        let ids: BTreeSet<String> = (0..600).map(|i| generate_synthetic_scene(&config, i).scene_id).collect();
        assert_eq!(ids.len(), 600);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let record = generate_synthetic_scene(&GeneratorConfig::default(), 7);
        let path = dir.path().join("scene.json");
        save_scene_record(&path, &record).unwrap();
        assert_eq!(load_scene_record(&path).unwrap(), record);
    }

    #[test]
    fn config_validation() {
        let mut config = GeneratorConfig { object_count_range: (5, 2), ..GeneratorConfig::default() };
        assert!(config.validate().is_err());
        config.object_count_range = (1, 2);
        config.label_vocabulary.clear();
        assert!(config.validate().is_err());
    }
}
