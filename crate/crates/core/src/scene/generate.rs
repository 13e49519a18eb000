//! Deterministic synthetic LoD scenes.
//!
//! Trees grow by expanding a random frontier node at a time, so branches end
//! up with very different depths and sizes. Interior nodes have at least two
//! children, drawn from a truncated discrete power law: most have a handful
//! and a few have dozens. Every Gaussian attribute is snapped to the `f32` grid so scenes
//! survive the 32-bit streaming layout unchanged.

use std::collections::VecDeque;

use nalgebra::{Quaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::camera::Camera;
use super::gaussian::{Aabb, Gaussian};
use super::tree::{LodTree, NodeId};
use crate::error::{Error, Result};

/// Probability that a node gets no children at all.
const LEAF_PROBABILITY: f64 = 0.25;
/// Tail exponent of the child-count power law.
const TAIL_EXPONENT: f64 = 1.1;
const ROOT_SCALE: f64 = 8.0;
/// Random placements tried (halving the scale each time) before a child is
/// centred on its parent.
const PLACEMENT_ATTEMPTS: u32 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenParams {
    pub seed: u64,
    pub node_budget: usize,
    pub max_children: usize,
    pub depth_limit: usize,
    pub shrink_factor: f64,
}

impl GenParams {
    pub fn new(seed: u64, node_budget: usize) -> Self {
        Self {
            seed,
            node_budget,
            ..Self::default()
        }
    }
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            seed: 0,
            node_budget: 1000,
            max_children: 32,
            depth_limit: 24,
            shrink_factor: 0.5,
        }
    }
}

pub fn gen_synthetic_tree(params: &GenParams) -> Result<LodTree> {
    if params.node_budget < 1 {
        return Err(Error::Param("node_budget must be at least 1".into()));
    }
    if params.node_budget > u32::MAX as usize {
        return Err(Error::Param("node_budget exceeds the 32-bit node id space".into()));
    }
    if params.max_children < 1 {
        return Err(Error::Param("max_children must be at least 1".into()));
    }
    if params.depth_limit < 1 {
        return Err(Error::Param("depth_limit must be at least 1".into()));
    }
    if !(params.shrink_factor > 0.0 && params.shrink_factor < 1.0) {
        return Err(Error::Param(format!(
            "shrink_factor {} must lie in (0, 1)",
            params.shrink_factor
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let root = Gaussian {
        mean: Vector3::zeros(),
        scale: quantize_vec(Vector3::new(
            ROOT_SCALE * rng.gen_range(0.7..1.0),
            ROOT_SCALE * rng.gen_range(0.7..1.0),
            ROOT_SCALE * rng.gen_range(0.7..1.0),
        )),
        rotation: random_rotation(&mut rng),
        opacity: quantize(rng.gen_range(0.4..0.9)),
        color: quantize_vec(Vector3::new(rng.gen(), rng.gen(), rng.gen())),
    };

    // Creation-order storage; renumbered to BFS order at the end.
    let mut gaussians = vec![root];
    let mut parents: Vec<Option<usize>> = vec![None];
    let mut depths = vec![0usize];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut frontier = vec![0usize];

    while gaussians.len() < params.node_budget && !frontier.is_empty() {
        let pick = rng.gen_range(0..frontier.len());
        let parent = frontier.swap_remove(pick);
        if depths[parent] + 1 >= params.depth_limit {
            continue;
        }
        // The last open node always branches so the tree cannot die out
        // before reaching its budget.
        let k =
            child_count(&mut rng, params.max_children, !frontier.is_empty()).min(params.node_budget - gaussians.len());
        let parent_box = Aabb::enclosing(&gaussians[parent]);
        for _ in 0..k {
            let child = make_child(&mut rng, &gaussians[parent], &parent_box, params.shrink_factor);
            let id = gaussians.len();
            gaussians.push(child);
            parents.push(Some(parent));
            depths.push(depths[parent] + 1);
            children.push(Vec::new());
            children[parent].push(id);
            frontier.push(id);
        }
    }

    let mut order = Vec::with_capacity(gaussians.len());
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        order.push(i);
        queue.extend(children[i].iter().copied());
    }
    let mut new_id = vec![0u32; gaussians.len()];
    for (new, &old) in order.iter().enumerate() {
        new_id[old] = new as u32;
    }
    let parts = order
        .iter()
        .map(|&old| (gaussians[old], parents[old].map(|p| NodeId(new_id[p]))))
        .collect();
    LodTree::from_parts(parts)
}

fn child_count(rng: &mut ChaCha8Rng, max_children: usize, allow_leaf: bool) -> usize {
    if allow_leaf && rng.gen_bool(LEAF_PROBABILITY) {
        return 0;
    }
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let k = 1.0 + u.powf(-1.0 / TAIL_EXPONENT).floor();
    (k.min(max_children as f64) as usize).clamp(2.min(max_children), max_children)
}

fn make_child(rng: &mut ChaCha8Rng, parent: &Gaussian, parent_box: &Aabb, shrink: f64) -> Gaussian {
    let limit = parent.max_scale() * shrink;
    let mut scale = Vector3::new(
        limit * rng.gen_range(0.6..1.0),
        limit * rng.gen_range(0.6..1.0),
        limit * rng.gen_range(0.6..1.0),
    );
    let rotation = random_rotation(rng);
    let opacity = quantize(rng.gen_range(0.35..0.95));
    let jitter = Vector3::new(
        rng.gen_range(-0.2..0.2),
        rng.gen_range(-0.2..0.2),
        rng.gen_range(-0.2..0.2),
    );
    let color = quantize_vec((parent.color + jitter).map(|c| c.clamp(0.0, 1.0)));

    for attempt in 0.. {
        let mut q = quantize_vec(scale);
        while q.max() > limit {
            q = quantize_vec(q * (1.0 - 1e-6));
        }
        let mut g = Gaussian {
            mean: parent.mean,
            scale: q,
            rotation,
            opacity,
            color,
        };
        // Deep in the tree boxes reach f32 resolution and random placement
        // can stop fitting; a child centred on its parent always fits.
        if attempt >= PLACEMENT_ATTEMPTS {
            return g;
        }
        let extent = Aabb::enclosing(&g);
        let half = (extent.max - extent.min) * 0.5;
        let lo = parent_box.min + half;
        let hi = parent_box.max - half;
        if (0..3).all(|i| lo[i] < hi[i]) {
            g.mean = quantize_vec(Vector3::from_fn(|i, _| rng.gen_range(lo[i]..hi[i])));
            if parent_box.contains(&Aabb::enclosing(&g)) {
                return g;
            }
        }
        scale *= 0.5;
    }
    unreachable!("placement loop always returns")
}

/// Uniformly distributed unit quaternion (Shoemake), snapped to `f32`.
fn random_rotation(rng: &mut ChaCha8Rng) -> Quaternion<f64> {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let u3: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = Quaternion::new(b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin());
    Quaternion::from(q.coords.map(quantize))
}

fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

fn quantize_vec(v: Vector3<f64>) -> Vector3<f64> {
    v.map(quantize)
}

/// Camera on a sphere around the scene root looking at its centre.
///
/// `azimuth`/`elevation` are in radians; `distance` is in multiples of the
/// root's largest 3σ half-extent.
pub fn orbit_camera(tree: &LodTree, azimuth: f64, elevation: f64, distance: f64, size: u32) -> Camera {
    let root = tree.node(tree.root());
    let centre = root.aabb.center();
    let radius = 3.0 * root.gaussian.max_scale();
    let dir = Vector3::new(
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
        elevation.cos() * azimuth.cos(),
    );
    let eye = centre + dir * (distance * radius);
    let up = if elevation.cos().abs() < 1e-6 {
        Vector3::z()
    } else {
        Vector3::y()
    };
    Camera::look_at(
        eye,
        centre,
        up,
        size as f64,
        size,
        size,
        0.05 * radius,
        (distance + 2.0) * radius * 2.0,
    )
}

/// A seeded camera somewhere around the scene, sometimes inside it, sometimes
/// looking partly away.
pub fn random_camera(tree: &LodTree, rng: &mut impl Rng, size: u32) -> Camera {
    let root = tree.node(tree.root());
    let centre = root.aabb.center();
    let radius = 3.0 * root.gaussian.max_scale();
    let dir = Vector3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let dir = if dir.norm() < 1e-3 {
        Vector3::z()
    } else {
        dir.normalize()
    };
    let eye = centre + dir * radius * rng.gen_range(0.3..3.0);
    let target = centre
        + Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ) * radius;
    let up = if (target - eye).normalize().cross(&Vector3::y()).norm() < 1e-3 {
        Vector3::z()
    } else {
        Vector3::y()
    };
    Camera::look_at(
        eye,
        target,
        up,
        size as f64 * rng.gen_range(0.6..1.5),
        size,
        size,
        0.01 * radius,
        10.0 * radius,
    )
}
