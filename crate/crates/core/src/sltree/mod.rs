//! Size-bounded subtree forest built from a [`LodTree`].
//!
//! Each subtree stores its nodes in depth-first order. A record's
//! `remaining` count lets a traversal jump over everything beneath it in one
//! step, and boundary records carry the contiguous SID range of the subtrees
//! holding their other children.

mod io;
mod partition;

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Aabb, Gaussian, LodTree, NodeId};

pub use io::{
    deserialize, read_sltree, serialize, subtree_offset, write_sltree, GAUSSIAN_RECORD_BYTES, HEADER_BYTES, MAGIC,
    NODE_RECORD_BYTES, SUBTREE_DESCRIPTOR_BYTES, VERSION,
};
pub use partition::{initial_partition, merge_subtrees, ProvisionalSubtree};

/// Dense subtree identifier, assigned breadth-first over the subtree graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubtreeId(pub u32);

impl SubtreeId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SubtreeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubtreeRecord {
    pub nid: NodeId,
    pub aabb: Aabb,
    /// Number of this node's descendants stored in the same subtree, all of
    /// which immediately follow it.
    pub remaining: u16,
    pub child_sid_first: Option<SubtreeId>,
    pub child_sid_count: u16,
    /// Some children live in other subtrees.
    pub is_boundary: bool,
    /// The node has no children at all in the LoD tree.
    pub is_leaf: bool,
}

impl SubtreeRecord {
    pub fn child_sids(&self) -> impl Iterator<Item = SubtreeId> {
        let first = self.child_sid_first.map_or(0, |s| s.0);
        (first..first + self.child_sid_count as u32).map(SubtreeId)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subtree {
    pub sid: SubtreeId,
    pub records: Vec<SubtreeRecord>,
    /// LoD-tree parent shared by every forest root; `None` for the top subtree.
    pub parent_node: Option<NodeId>,
}

impl Subtree {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlTree {
    tau_s: usize,
    root_sid: SubtreeId,
    subtrees: Vec<Subtree>,
    /// `(sid, slot)` indexed by nid.
    node_index: Vec<(SubtreeId, u16)>,
    /// Gaussian payloads indexed by nid.
    gaussians: Vec<Gaussian>,
}

/// Subtree size distributions before and after merging.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub tau_s: usize,
    pub initial_sizes: Vec<usize>,
    pub final_sizes: Vec<usize>,
}

impl PartitionStats {
    pub fn initial_mean_std(&self) -> (f64, f64) {
        mean_std(&self.initial_sizes)
    }

    pub fn final_mean_std(&self) -> (f64, f64) {
        mean_std(&self.final_sizes)
    }
}

/// Population mean and standard deviation of subtree sizes.
pub fn mean_std(values: &[usize]) -> (f64, f64) {
    let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
    crate::stats::mean_std(&v)
}

pub fn build_sltree(tree: &LodTree, tau_s: usize) -> Result<SlTree> {
    build_sltree_with_stats(tree, tau_s).map(|(st, _)| st)
}

pub fn build_sltree_with_stats(tree: &LodTree, tau_s: usize) -> Result<(SlTree, PartitionStats)> {
    check_tau(tau_s)?;
    let initial = initial_partition(tree, tau_s);
    let initial_sizes = initial.iter().map(ProvisionalSubtree::size).collect();
    let merged = merge_subtrees(initial, tau_s);
    let final_sizes = merged.iter().map(ProvisionalSubtree::size).collect();
    let st = assemble(tree, tau_s, merged)?;
    Ok((
        st,
        PartitionStats {
            tau_s,
            initial_sizes,
            final_sizes,
        },
    ))
}

/// Builds the forest from the BFS grouping alone, skipping the merge pass.
pub fn build_sltree_unmerged(tree: &LodTree, tau_s: usize) -> Result<SlTree> {
    check_tau(tau_s)?;
    assemble(tree, tau_s, initial_partition(tree, tau_s))
}

fn check_tau(tau_s: usize) -> Result<()> {
    if tau_s < 1 || tau_s > u16::MAX as usize {
        return Err(Error::Param(format!("tau_s {tau_s} must lie in [1, {}]", u16::MAX)));
    }
    Ok(())
}

/// Orders each group depth-first, numbers groups breadth-first with each
/// boundary node's child groups consecutive, and validates the result.
pub fn assemble(tree: &LodTree, tau_s: usize, groups: Vec<ProvisionalSubtree>) -> Result<SlTree> {
    let n = tree.len();
    let mut group_of = vec![usize::MAX; n];
    for (g, group) in groups.iter().enumerate() {
        for &nid in &group.nodes {
            if group_of[nid.idx()] != usize::MAX {
                return Err(Error::node(nid, "assigned to two subtrees"));
            }
            group_of[nid.idx()] = g;
        }
    }
    if let Some(missing) = group_of.iter().position(|&g| g == usize::MAX) {
        return Err(Error::node(NodeId(missing as u32), "not assigned to any subtree"));
    }

    // Depth-first order inside each group.
    let orders: Vec<Vec<NodeId>> = groups
        .iter()
        .enumerate()
        .map(|(g, group)| {
            let mut order = Vec::with_capacity(group.size());
            let mut stack: Vec<NodeId> = group.roots.iter().rev().copied().collect();
            while let Some(nid) = stack.pop() {
                order.push(nid);
                stack.extend(tree.node(nid).children.iter().rev().filter(|c| group_of[c.idx()] == g));
            }
            order
        })
        .collect();

    let mut children_of: HashMap<NodeId, Vec<usize>> = HashMap::new();
    let mut top = None;
    for (g, group) in groups.iter().enumerate() {
        match group.parent_node {
            Some(p) => children_of.entry(p).or_default().push(g),
            None => top = Some(g),
        }
    }
    let top = top.ok_or_else(|| Error::Scene("no subtree holds the root".into()))?;

    let mut sid_of = vec![u32::MAX; groups.len()];
    let mut by_sid = Vec::with_capacity(groups.len());
    sid_of[top] = 0;
    by_sid.push(top);
    let mut cursor = 0;
    while cursor < by_sid.len() {
        let g = by_sid[cursor];
        cursor += 1;
        for nid in &orders[g] {
            if let Some(kids) = children_of.get(nid) {
                for &k in kids {
                    sid_of[k] = by_sid.len() as u32;
                    by_sid.push(k);
                }
            }
        }
    }
    if by_sid.len() != groups.len() {
        return Err(Error::Scene(
            "some subtrees are unreachable from the top subtree".into(),
        ));
    }

    let mut node_index = vec![(SubtreeId(0), 0u16); n];
    let mut subtrees = Vec::with_capacity(groups.len());
    for (sid, &g) in by_sid.iter().enumerate() {
        let sid = SubtreeId(sid as u32);
        let order = &orders[g];
        if order.len() > tau_s {
            return Err(Error::subtree(
                sid,
                format!("size {} exceeds tau_s {tau_s}", order.len()),
            ));
        }
        for (slot, nid) in order.iter().enumerate() {
            node_index[nid.idx()] = (sid, slot as u16);
        }
        let mut remaining = vec![0u16; order.len()];
        for slot in (0..order.len()).rev() {
            let node = tree.node(order[slot]);
            remaining[slot] = node
                .children
                .iter()
                .filter(|c| group_of[c.idx()] == g)
                .map(|c| remaining[node_index[c.idx()].1 as usize] + 1)
                .sum();
        }
        let records = order
            .iter()
            .zip(&remaining)
            .map(|(&nid, &rem)| {
                let node = tree.node(nid);
                let kids = children_of.get(&nid).map_or(&[][..], Vec::as_slice);
                if kids.len() > u16::MAX as usize {
                    return Err(Error::node(nid, "more than 65535 child subtrees"));
                }
                Ok(SubtreeRecord {
                    nid,
                    aabb: node.aabb,
                    remaining: rem,
                    child_sid_first: kids.first().map(|&k| SubtreeId(sid_of[k])),
                    child_sid_count: kids.len() as u16,
                    is_boundary: !kids.is_empty(),
                    is_leaf: node.is_leaf(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        subtrees.push(Subtree {
            sid,
            records,
            parent_node: groups[g].parent_node,
        });
    }

    let st = SlTree {
        tau_s,
        root_sid: SubtreeId(0),
        subtrees,
        node_index,
        gaussians: tree.gaussians(),
    };
    st.validate()?;
    st.validate_against(tree)?;
    Ok(st)
}

impl SlTree {
    pub(crate) fn from_raw(
        tau_s: usize,
        root_sid: SubtreeId,
        subtrees: Vec<Subtree>,
        gaussians: Vec<Gaussian>,
    ) -> Result<Self> {
        let mut node_index = vec![(SubtreeId(u32::MAX), 0u16); gaussians.len()];
        for st in &subtrees {
            for (slot, rec) in st.records.iter().enumerate() {
                let entry = node_index
                    .get_mut(rec.nid.idx())
                    .ok_or_else(|| Error::subtree(st.sid, format!("node {} out of range", rec.nid)))?;
                if entry.0 .0 != u32::MAX {
                    return Err(Error::node(rec.nid, "stored in two subtrees"));
                }
                *entry = (st.sid, slot as u16);
            }
        }
        let st = Self {
            tau_s,
            root_sid,
            subtrees,
            node_index,
            gaussians,
        };
        st.validate()?;
        Ok(st)
    }

    pub fn tau_s(&self) -> usize {
        self.tau_s
    }

    pub fn root_sid(&self) -> SubtreeId {
        self.root_sid
    }

    pub fn subtrees(&self) -> &[Subtree] {
        &self.subtrees
    }

    pub fn subtree(&self, sid: SubtreeId) -> &Subtree {
        &self.subtrees[sid.idx()]
    }

    pub fn len(&self) -> usize {
        self.subtrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtrees.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.gaussians.len()
    }

    pub fn locate(&self, nid: NodeId) -> (SubtreeId, usize) {
        let (sid, slot) = self.node_index[nid.idx()];
        (sid, slot as usize)
    }

    pub fn gaussian(&self, nid: NodeId) -> &Gaussian {
        &self.gaussians[nid.idx()]
    }

    pub fn gaussians(&self) -> &[Gaussian] {
        &self.gaussians
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.subtrees.iter().map(Subtree::len).collect()
    }

    /// Structural checks that need no LoD tree: size bounds, node partition,
    /// properly nested skip spans, boundary flags and child SID ranges.
    pub fn validate(&self) -> Result<()> {
        let count = self.subtrees.len();
        if count == 0 {
            return Err(Error::Scene("SLTree has no subtrees".into()));
        }
        if self.root_sid.idx() >= count {
            return Err(Error::subtree(self.root_sid, "root sid out of range"));
        }
        let mut seen = vec![false; self.gaussians.len()];
        for (i, st) in self.subtrees.iter().enumerate() {
            let sid = st.sid;
            if sid.idx() != i {
                return Err(Error::subtree(sid, format!("stored at index {i}")));
            }
            let size = st.records.len();
            if size < 1 || size > self.tau_s {
                return Err(Error::subtree(sid, format!("size {size} outside [1, {}]", self.tau_s)));
            }
            if (sid == self.root_sid) != st.parent_node.is_none() {
                return Err(Error::subtree(sid, "only the root subtree may lack a parent node"));
            }
            if let Some(p) = st.parent_node {
                let (psid, pslot) = *self
                    .node_index
                    .get(p.idx())
                    .ok_or_else(|| Error::subtree(sid, format!("parent node {p} out of range")))?;
                let prec = self
                    .subtrees
                    .get(psid.idx())
                    .and_then(|s| s.records.get(pslot as usize));
                let covered = prec.is_some_and(|r| r.nid == p && r.child_sids().any(|c| c == sid));
                if !covered {
                    return Err(Error::subtree(
                        sid,
                        format!("not in the child range of parent node {p}"),
                    ));
                }
            }
            let mut open: Vec<usize> = Vec::new();
            for (slot, rec) in st.records.iter().enumerate() {
                let nid = rec.nid;
                match seen.get_mut(nid.idx()) {
                    None => return Err(Error::subtree(sid, format!("node {nid} out of range"))),
                    Some(s) if *s => return Err(Error::node(nid, "stored twice")),
                    Some(s) => *s = true,
                }
                if self.node_index[nid.idx()] != (sid, slot as u16) {
                    return Err(Error::node(nid, "node index disagrees with storage"));
                }
                let end = slot + rec.remaining as usize;
                if end >= size {
                    return Err(Error::node(nid, format!("skip span runs past subtree {sid}")));
                }
                while open.last().is_some_and(|&e| e < slot) {
                    open.pop();
                }
                if open.last().is_some_and(|&e| end > e) {
                    return Err(Error::node(nid, "skip span not nested in its ancestor's span"));
                }
                open.push(end);
                if (rec.child_sid_count > 0) != rec.is_boundary {
                    return Err(Error::node(nid, "boundary flag disagrees with child range"));
                }
                if rec.is_boundary != rec.child_sid_first.is_some() {
                    return Err(Error::node(nid, "child range has no start"));
                }
                if rec.is_leaf && (rec.is_boundary || rec.remaining > 0) {
                    return Err(Error::node(nid, "leaf record has descendants"));
                }
                for c in rec.child_sids() {
                    let child = self
                        .subtrees
                        .get(c.idx())
                        .ok_or_else(|| Error::node(nid, format!("child subtree {c} out of range")))?;
                    if child.parent_node != Some(nid) || c <= sid {
                        return Err(Error::node(
                            nid,
                            format!("child subtree {c} does not hang off this node"),
                        ));
                    }
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::node(NodeId(missing as u32), "not stored in any subtree"));
        }
        Ok(())
    }

    /// Checks the forest against the tree it claims to encode: payloads,
    /// leaf flags, exact `remaining` counts and hierarchical preservation.
    pub fn validate_against(&self, tree: &LodTree) -> Result<()> {
        if tree.len() != self.gaussians.len() {
            return Err(Error::Scene(format!(
                "SLTree has {} nodes, tree has {}",
                self.gaussians.len(),
                tree.len()
            )));
        }
        for node in tree.nodes() {
            let nid = node.nid;
            let (sid, slot) = self.locate(nid);
            let st = self.subtree(sid);
            let rec = &st.records[slot];
            if rec.aabb != node.aabb || self.gaussians[nid.idx()] != node.gaussian {
                return Err(Error::node(nid, "payload differs from the tree"));
            }
            if rec.is_leaf != node.is_leaf() {
                return Err(Error::node(nid, "leaf flag differs from the tree"));
            }
            let mut in_subtree = 0usize;
            let mut external = Vec::new();
            for &c in &node.children {
                let (csid, cslot) = self.locate(c);
                if csid == sid {
                    if !(slot < cslot && cslot <= slot + rec.remaining as usize) {
                        return Err(Error::node(c, "stored outside its parent's skip span"));
                    }
                } else {
                    external.push(csid);
                }
            }
            for i in slot + 1..=slot + rec.remaining as usize {
                if !tree.is_ancestor(nid, st.records[i].nid) {
                    return Err(Error::node(
                        st.records[i].nid,
                        format!("inside the span of non-ancestor {nid}"),
                    ));
                }
                in_subtree += 1;
            }
            if in_subtree != rec.remaining as usize {
                return Err(Error::node(nid, "remaining count is wrong"));
            }
            for csid in external {
                if !rec.child_sids().any(|s| s == csid) {
                    return Err(Error::node(
                        nid,
                        format!("child subtree {csid} outside the child range"),
                    ));
                }
            }
            match node.parent {
                Some(p) if self.locate(p).0 != sid => {
                    if st.parent_node != Some(p) {
                        return Err(Error::node(nid, "forest root does not share the subtree's parent node"));
                    }
                }
                None if sid != self.root_sid => {
                    return Err(Error::node(nid, "tree root outside the root subtree"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// DRAM byte range of subtree `sid` in the `SLT1` layout.
    pub fn byte_range(&self, sid: SubtreeId) -> Range<usize> {
        let start = subtree_offset(self.tau_s, self.subtrees.len(), sid);
        start..start + self.tau_s * NODE_RECORD_BYTES
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{chain, figure_tree, two_branch};
    use crate::scene::{gen_synthetic_tree, GenParams};

    #[test]
    fn single_node_tree() {
        let st = build_sltree(&chain(1), 32).unwrap();
        assert_eq!(st.len(), 1);
        let rec = &st.subtree(SubtreeId(0)).records[0];
        assert_eq!(rec.remaining, 0);
        assert!(!rec.is_boundary && rec.is_leaf);
        assert_eq!(rec.child_sid_count, 0);
    }

    #[test]
    fn chain_records() {
        let st = build_sltree(&chain(10), 4).unwrap();
        assert_eq!(st.sizes(), vec![4, 4, 2]);
        let top = st.subtree(SubtreeId(0));
        let rem: Vec<u16> = top.records.iter().map(|r| r.remaining).collect();
        assert_eq!(rem, vec![3, 2, 1, 0]);
        assert_eq!(top.records[3].child_sid_first, Some(SubtreeId(1)));
        assert_eq!(top.records[3].child_sid_count, 1);
    }

    #[test]
    fn figure_tree_partition() {
        let t = figure_tree();
        let (st, stats) = build_sltree_with_stats(&t, 4).unwrap();
        // Before merging every leaf below the top subtree is its own subtree.
        assert_eq!(stats.initial_sizes, vec![4, 1, 1, 1, 1, 1, 1, 1]);
        assert_eq!(stats.final_sizes, vec![4, 2, 3, 2]);
        // The top subtree parents the subtrees holding the children of 1 and 3.
        let top = st.subtree(st.root_sid());
        let rec = |n: u32| top.records.iter().find(|r| r.nid == NodeId(n)).unwrap();
        for parent in [1, 2, 3] {
            let r = rec(parent);
            assert!(r.is_boundary);
            assert_eq!(r.child_sid_count, 1);
            let child = st.subtree(r.child_sid_first.unwrap());
            assert_eq!(child.parent_node, Some(NodeId(parent)));
        }
        // Merged singletons under node 2 become one multi-root forest.
        let under_two = st.subtree(rec(2).child_sid_first.unwrap());
        let roots: Vec<u32> = under_two.records.iter().map(|r| r.nid.0).collect();
        assert_eq!(roots, vec![6, 7, 8]);
        assert!(under_two.records.iter().all(|r| r.remaining == 0));
    }

    #[test]
    fn two_branch_layout() {
        let st = build_sltree(&two_branch(), 4).unwrap();
        assert_eq!(st.sizes(), vec![4, 4, 3]);
        let top: Vec<u32> = st.subtree(SubtreeId(0)).records.iter().map(|r| r.nid.0).collect();
        assert_eq!(top, vec![0, 1, 2, 3]);
        assert_eq!(st.subtree(SubtreeId(1)).parent_node, Some(NodeId(1)));
        assert_eq!(st.subtree(SubtreeId(2)).parent_node, Some(NodeId(3)));
    }

    #[test]
    fn generated_partition_covers_every_node() {
        let t = gen_synthetic_tree(&GenParams::new(5, 3000)).unwrap();
        for tau in [1, 2, 4, 8, 32, 100] {
            let st = build_sltree(&t, tau).unwrap();
            let mut all: Vec<u32> = st
                .subtrees()
                .iter()
                .flat_map(|s| s.records.iter().map(|r| r.nid.0))
                .collect();
            all.sort_unstable();
            assert_eq!(all, (0..t.len() as u32).collect::<Vec<_>>());
        }
    }

    #[test]
    fn sids_are_breadth_first_and_ranges_contiguous() {
        let t = gen_synthetic_tree(&GenParams::new(9, 2000)).unwrap();
        let st = build_sltree(&t, 8).unwrap();
        let mut expected_next = 1u32;
        for s in st.subtrees() {
            for r in &s.records {
                if let Some(first) = r.child_sid_first {
                    assert_eq!(first.0, expected_next);
                    expected_next += r.child_sid_count as u32;
                }
            }
        }
        assert_eq!(expected_next as usize, st.len());
    }

    #[test]
    fn rejects_bad_tau() {
        assert!(matches!(build_sltree(&chain(3), 0), Err(Error::Param(_))));
        assert!(matches!(build_sltree(&chain(3), 70_000), Err(Error::Param(_))));
    }

    #[test]
    fn corrupted_forest_is_rejected() {
        let t = figure_tree();
        let st = build_sltree(&t, 4).unwrap();
        let mut bad = st.clone();
        bad.subtrees[0].records[0].remaining = 9;
        assert!(bad.validate().is_err());
        let mut bad = st.clone();
        bad.subtrees[0].records[1].child_sid_count = 0;
        assert!(bad.validate().is_err());
        let mut bad = st;
        bad.subtrees[1].records[0].aabb.min.x -= 1.0;
        assert!(matches!(bad.validate_against(&t), Err(Error::NodeInvariant { .. })));
    }
}
