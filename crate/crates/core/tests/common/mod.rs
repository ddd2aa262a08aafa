//! Random scenes and independent reference implementations for the
//! integration tests. Nothing here calls into the planner or the
//! constraint checker of the library; the oracles are written from the
//! definitions so they can catch mistakes there.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use scene_forest::{
    canonicalize_id, AttributeSet, Fragility, Material, ObjectId, ObjectInstance, Plan, SceneTree, Transparency,
};

/// Labels drawn for random objects. Repeats are common on purpose so
/// captions have to fall back to ids, and "red cup" overlaps "cup".
pub const LABELS: &[&str] = &["cup", "book", "plate", "glass", "box", "red cup", "vase", "can", "towel", "bottle"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_attributes(rng: &mut ChaCha8Rng) -> AttributeSet {
    let mass = if rng.gen_bool(0.8) {
        f64::from(rng.gen_range(1..5000u32))
    } else {
        f64::from(rng.gen_range(1..40000u32)) / 8.0
    };
    AttributeSet::new(
        *Fragility::ALL.choose(rng).unwrap(),
        mass,
        *Material::ALL.choose(rng).unwrap(),
        *Transparency::ALL.choose(rng).unwrap(),
    )
    .unwrap()
}

/// `n` non-root objects with labels from [`LABELS`] plus a `table_1` root.
pub fn random_objects(rng: &mut ChaCha8Rng, n: usize) -> Vec<ObjectInstance> {
    let table = AttributeSet::new(Fragility::Low, 12000.0, Material::Wood, Transparency::Opaque).unwrap();
    let mut objects = vec![ObjectInstance::new(ObjectId::new("table_1").unwrap(), "table", table).unwrap()];
    let mut counts: HashMap<&str, u32> = HashMap::new();
    for _ in 0..n {
        let label = *LABELS.choose(rng).unwrap();
        let ordinal = counts.entry(label).and_modify(|c| *c += 1).or_insert(1);
        let id = canonicalize_id(label, *ordinal).unwrap();
        objects.push(ObjectInstance::new(id, label, random_attributes(rng)).unwrap());
    }
    objects
}

/// Random support structure over `objects` (first entry is the root):
/// each object, in shuffled order, rests on the root or on one placed earlier.
pub fn random_arrangement(rng: &mut ChaCha8Rng, objects: &[ObjectInstance]) -> SceneTree {
    let root = objects[0].id.clone();
    let mut order: Vec<&ObjectInstance> = objects[1..].iter().collect();
    order.shuffle(rng);
    let mut placed = vec![root.clone()];
    let mut parent = BTreeMap::new();
    for o in order {
        // bias toward the root so both tall stacks and flat scenes occur
        let support = if rng.gen_bool(0.3) { root.clone() } else { placed.choose(rng).unwrap().clone() };
        parent.insert(o.id.clone(), support);
        placed.push(o.id.clone());
    }
    let nodes = objects.iter().map(|o| (o.id.clone(), o.clone())).collect();
    SceneTree::new(root, nodes, parent).unwrap()
}

pub fn random_tree(rng: &mut ChaCha8Rng, max_objects: usize) -> SceneTree {
    let n = rng.gen_range(0..=max_objects);
    let objects = random_objects(rng, n);
    random_arrangement(rng, &objects)
}

/// Initial and goal arrangements of the same objects.
pub fn random_pair(rng: &mut ChaCha8Rng, max_objects: usize) -> (SceneTree, SceneTree) {
    let n = rng.gen_range(1..=max_objects);
    let objects = random_objects(rng, n);
    (random_arrangement(rng, &objects), random_arrangement(rng, &objects))
}

/// Same tree with every mass multiplied by `factor`.
pub fn scale_masses(tree: &SceneTree, factor: f64) -> SceneTree {
    let nodes = tree
        .nodes()
        .iter()
        .map(|(id, o)| {
            let a = o.attributes;
            let scaled = AttributeSet::new(a.fragility, a.mass_grams.value() * factor, a.material, a.transparency).unwrap();
            (id.clone(), ObjectInstance::new(id.clone(), o.label.clone(), scaled).unwrap())
        })
        .collect();
    SceneTree::new(tree.root().clone(), nodes, tree.parent_map().clone()).unwrap()
}

/// Tree text with the attribute brackets removed: ids and indentation only.
pub fn structure(text: &str) -> String {
    text.lines().map(|l| l.split(" [").next().unwrap()).collect::<Vec<_>>().join("\n")
}

/// Parent map of a tree as plain strings.
pub fn parents(tree: &SceneTree) -> BTreeMap<String, String> {
    tree.parent_map().iter().map(|(c, p)| (c.to_string(), p.to_string())).collect()
}

/// Applies a plan move by move on a bare parent map, failing on any move
/// that picks an object with something on it, picks the root, or places an
/// object onto itself or something resting on it.
pub fn replay(tree: &SceneTree, plan: &Plan) -> Result<BTreeMap<String, String>, String> {
    let root = tree.root().to_string();
    let mut parent = parents(tree);
    for (step, m) in plan.moves.iter().enumerate() {
        let (x, d) = (m.object.to_string(), m.destination.to_string());
        if x == root {
            return Err(format!("step {step}: picks the root"));
        }
        if !parent.contains_key(&x) || (d != root && !parent.contains_key(&d)) {
            return Err(format!("step {step}: unknown id"));
        }
        if let Some((blocker, _)) = parent.iter().find(|(_, p)| **p == x) {
            return Err(format!("step {step}: {x} is under {blocker}"));
        }
        // x is clear, so the only way to make a cycle is d == x
        if d == x {
            return Err(format!("step {step}: self move"));
        }
        parent.insert(x, d);
    }
    Ok(parent)
}

/// Shortest move count between two parent maps by breadth-first search.
/// A move picks an object nothing rests on and puts it on any other node
/// that is not resting on it (directly or indirectly).
pub fn bfs_distance(initial: &SceneTree, goal: &SceneTree) -> usize {
    let root = initial.root().to_string();
    let ids: Vec<String> = initial.non_root_ids().map(ToString::to_string).collect();
    let index = |s: &str| if s == root { ids.len() } else { ids.iter().position(|i| i == s).unwrap() };
    let encode = |t: &SceneTree| -> Vec<usize> { ids.iter().map(|i| index(t.parent_map()[&ObjectId::new(i.as_str()).unwrap()].as_str())).collect() };
    let start = encode(initial);
    let target = encode(goal);
    let n = ids.len();

    let mut seen: HashMap<Vec<usize>, usize> = HashMap::from([(start.clone(), 0)]);
    let mut queue = VecDeque::from([start]);
    while let Some(state) = queue.pop_front() {
        let dist = seen[&state];
        if state == target {
            return dist;
        }
        for x in 0..n {
            if state.contains(&x) {
                continue;
            }
            for d in 0..=n {
                if d == x || d == state[x] {
                    continue;
                }
                // walk down from d toward the root; if we meet x, d rests on x
                let mut cur = d;
                let mut above_x = false;
                while cur != n {
                    if cur == x {
                        above_x = true;
                        break;
                    }
                    cur = state[cur];
                }
                if above_x {
                    continue;
                }
                let mut next = state.clone();
                next[x] = d;
                if !seen.contains_key(&next) {
                    seen.insert(next.clone(), dist + 1);
                    queue.push_back(next);
                }
            }
        }
    }
    unreachable!("every arrangement of the same objects is reachable")
}

/// Pairs (below, above) on some support path, root excluded, that break
/// the stacking order: more fragile underneath, or same fragility and
/// heavier on top.
pub fn stacking_breaches(tree: &SceneTree) -> Vec<(String, String)> {
    let root = tree.root();
    let mut out = Vec::new();
    for (above, o) in tree.nodes() {
        let mut cur = tree.parent(above);
        while let Some(below) = cur {
            if below == root {
                break;
            }
            let u = &tree.nodes()[below].attributes;
            let a = &o.attributes;
            let fragile_rank = |f: Fragility| Fragility::ALL.iter().position(|x| *x == f).unwrap();
            let (fu, fa) = (fragile_rank(u.fragility), fragile_rank(a.fragility));
            if fu > fa || (fu == fa && a.mass_grams.value() > u.mass_grams.value()) {
                out.push((below.to_string(), above.to_string()));
            }
            cur = tree.parent(below);
        }
    }
    out
}
