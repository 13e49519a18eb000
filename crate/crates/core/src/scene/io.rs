//! `lodscene/1` scene documents and camera documents (JSON).
//!
//! Quaternions are written `[w, x, y, z]`. Boxes are never stored; they are
//! recomputed from the Gaussians on load.

use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::camera::Camera;
use super::gaussian::Gaussian;
use super::tree::{LodTree, NodeId};
use crate::error::{Error, Result};

pub const SCENE_FORMAT: &str = "lodscene/1";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    format: String,
    nodes: Vec<NodeDoc>,
    root: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    nid: u32,
    parent: Option<u32>,
    mean: [f64; 3],
    scale: [f64; 3],
    rot: [f64; 4],
    opacity: f64,
    color: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraDoc {
    pos: [f64; 3],
    rot: [f64; 4],
    focal: f64,
    width: u32,
    height: u32,
    near: f64,
    far: f64,
}

fn quat_to_array(q: &Quaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

fn quat_from_array(a: [f64; 4]) -> Quaternion<f64> {
    Quaternion::new(a[0], a[1], a[2], a[3])
}

pub fn scene_to_string(tree: &LodTree) -> String {
    let doc = SceneDoc {
        format: SCENE_FORMAT.to_string(),
        root: tree.root().0,
        nodes: tree
            .nodes()
            .iter()
            .map(|n| NodeDoc {
                nid: n.nid.0,
                parent: n.parent.map(|p| p.0),
                mean: n.gaussian.mean.into(),
                scale: n.gaussian.scale.into(),
                rot: quat_to_array(&n.gaussian.rotation),
                opacity: n.gaussian.opacity,
                color: n.gaussian.color.into(),
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("scene serialisation cannot fail")
}

pub fn scene_from_str(text: &str) -> Result<LodTree> {
    let doc: SceneDoc = serde_json::from_str(text).map_err(Error::from_json)?;
    if doc.format != SCENE_FORMAT {
        return Err(Error::Scene(format!(
            "unsupported format {:?}, expected {SCENE_FORMAT:?}",
            doc.format
        )));
    }
    let n = doc.nodes.len();
    let mut slots: Vec<Option<(Gaussian, Option<NodeId>)>> = vec![None; n];
    for node in doc.nodes {
        let nid = NodeId(node.nid);
        let slot = slots
            .get_mut(nid.idx())
            .ok_or_else(|| Error::node(nid, format!("nid out of range for {n} nodes")))?;
        if slot.is_some() {
            return Err(Error::node(nid, "duplicate nid"));
        }
        let g = Gaussian {
            mean: Vector3::from(node.mean),
            scale: Vector3::from(node.scale),
            rotation: quat_from_array(node.rot),
            opacity: node.opacity,
            color: Vector3::from(node.color),
        };
        // Range checks come before tree assembly so the error names the node
        // carrying the bad attribute.
        g.check().map_err(|m| Error::node(nid, m))?;
        *slot = Some((g, node.parent.map(NodeId)));
    }
    let parts: Vec<_> = slots.into_iter().map(|s| s.expect("dense nids")).collect();
    let tree = LodTree::from_parts(parts)?;
    if tree.root().0 != doc.root {
        return Err(Error::Scene(format!(
            "root field says {} but the parentless node is {}",
            doc.root,
            tree.root()
        )));
    }
    Ok(tree)
}

pub fn save_scene(path: impl AsRef<Path>, tree: &LodTree) -> Result<()> {
    fs::write(path, scene_to_string(tree))?;
    Ok(())
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<LodTree> {
    scene_from_str(&fs::read_to_string(path)?)
}

pub fn camera_to_string(camera: &Camera) -> String {
    let doc = CameraDoc {
        pos: camera.position.into(),
        rot: quat_to_array(&camera.orientation),
        focal: camera.focal,
        width: camera.width,
        height: camera.height,
        near: camera.near,
        far: camera.far,
    };
    serde_json::to_string_pretty(&doc).expect("camera serialisation cannot fail")
}

pub fn camera_from_str(text: &str) -> Result<Camera> {
    let doc: CameraDoc = serde_json::from_str(text).map_err(Error::from_json)?;
    let camera = Camera {
        position: Vector3::from(doc.pos),
        orientation: quat_from_array(doc.rot),
        focal: doc.focal,
        width: doc.width,
        height: doc.height,
        near: doc.near,
        far: doc.far,
    };
    camera.validate()?;
    Ok(camera)
}

pub fn save_camera(path: impl AsRef<Path>, camera: &Camera) -> Result<()> {
    fs::write(path, camera_to_string(camera))?;
    Ok(())
}

pub fn load_camera(path: impl AsRef<Path>) -> Result<Camera> {
    camera_from_str(&fs::read_to_string(path)?)
}
