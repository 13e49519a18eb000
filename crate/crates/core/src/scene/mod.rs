//! Canonical LoD scene model: Gaussians, boxes, camera, tree, generator,
//! reference search and the text file formats.

mod camera;
mod gaussian;
mod generate;
pub mod io;
mod oracle;
mod tree;

pub use camera::{frustum_test, projected_size, Camera, FrustumTest};
pub use gaussian::{round_down_f32, round_up_f32, Aabb, Gaussian, QUAT_NORM_TOLERANCE};
pub use generate::{gen_synthetic_tree, orbit_camera, random_camera, GenParams};
pub use oracle::{classify, lod_decision, oracle_cut, walk, Visit};
pub use tree::{LodNode, LodTree, NodeId};
