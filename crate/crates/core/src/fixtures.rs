//! Small hand-built scenes with known LoD behaviour.
//!
//! Every fixture is viewed by [`fixture_camera`]: a camera at the origin
//! looking down +z with a 200×200 image and 100 px focal length.

use nalgebra::{Quaternion, Vector3};

use crate::scene::{Camera, Gaussian, LodTree, NodeId};

pub fn fixture_camera() -> Camera {
    Camera {
        position: Vector3::zeros(),
        orientation: Quaternion::identity(),
        focal: 100.0,
        width: 200,
        height: 200,
        near: 0.1,
        far: 200.0,
    }
}

/// Isotropic Gaussian snapped to the `f32` grid so fixtures survive the
/// binary layout unchanged.
fn iso(mean: [f64; 3], scale: f64) -> Gaussian {
    Gaussian {
        mean: Vector3::from(mean).map(|v| v as f32 as f64),
        scale: Vector3::repeat(scale as f32 as f64),
        rotation: Quaternion::identity(),
        opacity: 0.8f32 as f64,
        color: Vector3::new(0.8, 0.4, 0.2).map(|v| v as f32 as f64),
    }
}

fn build(spec: &[([f64; 3], f64, Option<u32>)]) -> LodTree {
    LodTree::from_parts(spec.iter().map(|&(m, s, p)| (iso(m, s), p.map(NodeId))).collect())
        .expect("fixture is a valid tree")
}

/// `n` nodes, each the only child of the previous one.
pub fn chain(n: usize) -> LodTree {
    let spec: Vec<_> = (0..n)
        .map(|i| {
            (
                [0.0, 0.0, 10.0],
                0.9f64.powi(i as i32),
                i.checked_sub(1).map(|p| p as u32),
            )
        })
        .collect();
    build(&spec)
}

/// A root with `k` leaf children.
pub fn fan(k: usize) -> LodTree {
    let mut spec = vec![([0.0, 0.0, 10.0], 1.0, None)];
    spec.extend((0..k).map(|_| ([0.0, 0.0, 10.0], 0.3, Some(0))));
    build(&spec)
}

/// Three-level scene: root 0 with children 1, 2, 3; node 1 has leaves 4, 5;
/// node 2 has leaves 6, 7, 8; node 3 has leaves 9, 10.
///
/// Nodes 1 and 3 sit close to the camera, node 2 far away, so with
/// [`FIGURE_EPSILON`] node 2 is fine enough while nodes 1 and 3 must be
/// refined: the cut is `{2, 4, 5, 9, 10}`.
pub fn figure_tree() -> LodTree {
    build(&[
        ([0.0, 0.0, 25.0], 10.0, None),
        ([-2.0, 0.0, 6.0], 1.0, Some(0)),
        ([0.0, 0.0, 50.0], 1.0, Some(0)),
        ([2.0, 0.0, 6.0], 1.0, Some(0)),
        ([-2.5, 0.0, 6.0], 0.3, Some(1)),
        ([-1.5, 0.0, 6.0], 0.3, Some(1)),
        ([-0.5, 0.0, 50.0], 0.3, Some(2)),
        ([0.0, 0.0, 50.0], 0.3, Some(2)),
        ([0.5, 0.0, 50.0], 0.3, Some(2)),
        ([1.5, 0.0, 6.0], 0.3, Some(3)),
        ([2.5, 0.0, 6.0], 0.3, Some(3)),
    ])
}

/// LoD threshold (pixels) used with [`figure_tree`].
pub const FIGURE_EPSILON: f64 = 20.0;

/// Root R (0) with children X (1), Y (2), Z (3); X carries a 4-node chain
/// (4..=7) and Z a 3-node chain (8..=10). With `tau_s = 4` this partitions
/// into the top subtree {R, X, Y, Z} and two independent child subtrees.
pub fn two_branch() -> LodTree {
    build(&[
        ([0.0, 0.0, 20.0], 4.0, None),
        ([-3.0, 0.0, 20.0], 1.0, Some(0)),
        ([0.0, 0.0, 20.0], 1.0, Some(0)),
        ([3.0, 0.0, 20.0], 1.0, Some(0)),
        ([-3.0, 0.0, 20.0], 0.8, Some(1)),
        ([-3.0, 0.0, 20.0], 0.6, Some(4)),
        ([-3.0, 0.0, 20.0], 0.4, Some(5)),
        ([-3.0, 0.0, 20.0], 0.2, Some(6)),
        ([3.0, 0.0, 20.0], 0.8, Some(3)),
        ([3.0, 0.0, 20.0], 0.6, Some(8)),
        ([3.0, 0.0, 20.0], 0.4, Some(9)),
    ])
}
