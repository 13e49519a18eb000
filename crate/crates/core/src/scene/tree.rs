use std::fmt;

use serde::{Deserialize, Serialize};

use super::gaussian::{Aabb, Gaussian};
use crate::error::{Error, Result};

/// Dense node identifier; `nodes[nid]` of the owning [`LodTree`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LodNode {
    pub nid: NodeId,
    pub gaussian: Gaussian,
    pub aabb: Aabb,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

impl LodNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Canonical LoD hierarchy: one Gaussian per node, any number of children.
#[derive(Clone, Debug, PartialEq)]
pub struct LodTree {
    nodes: Vec<LodNode>,
    root: NodeId,
}

impl LodTree {
    /// Builds and validates a tree from `(gaussian, parent)` pairs indexed by
    /// nid. Children keep ascending-nid order; boxes are recomputed.
    pub fn from_parts(parts: Vec<(Gaussian, Option<NodeId>)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Scene("tree has no nodes".into()));
        }
        if parts.len() > u32::MAX as usize {
            return Err(Error::Scene("too many nodes".into()));
        }
        let n = parts.len();
        let mut nodes: Vec<LodNode> = parts
            .into_iter()
            .enumerate()
            .map(|(i, (gaussian, parent))| LodNode {
                nid: NodeId(i as u32),
                aabb: Aabb::enclosing(&gaussian),
                gaussian,
                parent,
                children: Vec::new(),
            })
            .collect();

        let mut root = None;
        for i in 0..n {
            let nid = NodeId(i as u32);
            match nodes[i].parent {
                None => {
                    if let Some(prev) = root {
                        return Err(Error::node(nid, format!("second root (first root is {prev})")));
                    }
                    root = Some(nid);
                }
                Some(p) if p.idx() >= n => {
                    return Err(Error::node(nid, format!("parent {p} does not exist")));
                }
                Some(p) if p == nid => return Err(Error::node(nid, "node is its own parent")),
                Some(p) => nodes[p.idx()].children.push(nid),
            }
        }
        let root = root.ok_or_else(|| Error::Scene("tree has no root (cycle)".into()))?;
        let tree = Self { nodes, root };
        tree.validate()?;
        Ok(tree)
    }

    /// Full invariant scan: reachability/acyclicity, Gaussian ranges, child
    /// box containment and strictly shrinking child scale.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.nid.idx() != i {
                return Err(Error::node(node.nid, format!("stored at index {i}")));
            }
            node.gaussian.check().map_err(|m| Error::node(node.nid, m))?;
            for &c in &node.children {
                let child = self
                    .nodes
                    .get(c.idx())
                    .ok_or_else(|| Error::node(node.nid, format!("child {c} does not exist")))?;
                if child.parent != Some(node.nid) {
                    return Err(Error::node(
                        c,
                        format!("parent link does not point back to {}", node.nid),
                    ));
                }
                if !node.aabb.contains(&child.aabb) {
                    return Err(Error::node(c, format!("box not inside parent {} box", node.nid)));
                }
                if child.gaussian.max_scale() >= node.gaussian.max_scale() {
                    return Err(Error::node(
                        c,
                        format!("max scale not smaller than parent {} max scale", node.nid),
                    ));
                }
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![self.root];
        let mut count = 0;
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id.idx()], true) {
                return Err(Error::node(id, "reached twice (cycle)"));
            }
            count += 1;
            stack.extend(self.nodes[id.idx()].children.iter().copied());
        }
        if count != n {
            let orphan = seen.iter().position(|s| !s).unwrap_or(0);
            return Err(Error::node(NodeId(orphan as u32), "not reachable from the root"));
        }
        Ok(())
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, nid: NodeId) -> &LodNode {
        &self.nodes[nid.idx()]
    }

    pub fn nodes(&self) -> &[LodNode] {
        &self.nodes
    }

    pub fn gaussians(&self) -> Vec<Gaussian> {
        self.nodes.iter().map(|n| n.gaussian).collect()
    }

    /// True when `a` is a proper ancestor of `b`.
    pub fn is_ancestor(&self, a: NodeId, b: NodeId) -> bool {
        let mut cur = self.node(b).parent;
        while let Some(p) = cur {
            if p == a {
                return true;
            }
            cur = self.node(p).parent;
        }
        false
    }

    pub fn depth(&self, nid: NodeId) -> usize {
        let mut d = 0;
        let mut cur = self.node(nid).parent;
        while let Some(p) = cur {
            d += 1;
            cur = self.node(p).parent;
        }
        d
    }

    pub fn height(&self) -> usize {
        let mut depth = vec![0usize; self.len()];
        let mut best = 0;
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            let d = depth[id.idx()];
            best = best.max(d);
            for &c in &self.node(id).children {
                depth[c.idx()] = d + 1;
                stack.push(c);
            }
        }
        best + 1
    }

    pub fn leaves(&self) -> impl Iterator<Item = &LodNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }
}
