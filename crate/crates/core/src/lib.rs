//! Level-of-detail search over hierarchical Gaussian scenes.
//!
//! The crate is organised bottom-up:
//!
//! * [`scene`] holds the canonical LoD tree, the pinhole camera, the LoD
//!   selection predicate and the exhaustive reference search ([`scene::oracle_cut`]).
//! * [`sltree`] partitions a tree into size-bounded subtrees stored in DFS
//!   order with skip offsets, and reads/writes the `SLT1` streaming layout.
//! * [`traversal`] runs the streaming subtree search on a worker pool and
//!   reports workload balance.
//! * [`splat`] rasterises a cut with either the per-pixel blender or the
//!   2×2 group blender, and compares images.
//! * [`simarch`] is a cycle-approximate model of the LoD-search and splatting
//!   hardware with DRAM/SRAM traffic and relative energy accounting.

pub mod error;
pub mod fixtures;
pub mod scene;
pub mod simarch;
pub mod sltree;
pub mod splat;
mod stats;
pub mod traversal;

pub use error::{Error, Result};
pub use scene::{Aabb, Camera, Gaussian, LodNode, LodTree, NodeId};
pub use sltree::{SlTree, SubtreeId};
pub use traversal::Cut;
