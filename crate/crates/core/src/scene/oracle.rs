use super::camera::{frustum_test, projected_size, Camera, FrustumTest};
use super::gaussian::{Aabb, Gaussian};
use super::tree::{LodTree, NodeId};

/// How the reference search treated one visited node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Visit {
    Pruned,
    Selected,
    Refined,
}

/// The LoD decision for a single node, shared by every search path so that
/// all of them agree bit for bit: frustum first, then "fine enough or leaf".
/// A projected size equal to `epsilon` counts as fine enough.
pub fn lod_decision(gaussian: &Gaussian, aabb: &Aabb, is_leaf: bool, camera: &Camera, epsilon: f64) -> Visit {
    if frustum_test(aabb, camera) == FrustumTest::Outside {
        Visit::Pruned
    } else if is_leaf || projected_size(gaussian, aabb, camera) <= epsilon {
        Visit::Selected
    } else {
        Visit::Refined
    }
}

pub fn classify(tree: &LodTree, nid: NodeId, camera: &Camera, epsilon: f64) -> Visit {
    let node = tree.node(nid);
    lod_decision(&node.gaussian, &node.aabb, node.is_leaf(), camera, epsilon)
}

/// Exhaustive top-down reference search. Returns the cut sorted by nid.
pub fn oracle_cut(tree: &LodTree, camera: &Camera, epsilon: f64) -> Vec<NodeId> {
    let mut cut = Vec::new();
    walk(tree, tree.root(), camera, epsilon, |nid, visit| {
        if visit == Visit::Selected {
            cut.push(nid);
        }
    });
    cut.sort_unstable();
    cut
}

/// Runs the reference search below `start` (inclusive), calling `on_visit`
/// for every node whose decision is evaluated.
pub fn walk(tree: &LodTree, start: NodeId, camera: &Camera, epsilon: f64, mut on_visit: impl FnMut(NodeId, Visit)) {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let mut stack = vec![start];
    while let Some(nid) = stack.pop() {
        let visit = classify(tree, nid, camera, epsilon);
        on_visit(nid, visit);
        if visit == Visit::Refined {
            stack.extend(tree.node(nid).children.iter().rev().copied());
        }
    }
}
