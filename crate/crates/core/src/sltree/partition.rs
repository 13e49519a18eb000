use std::collections::VecDeque;

use crate::scene::{LodTree, NodeId};

/// A group of nodes that will become one subtree: a forest whose roots all
/// share `parent_node` in the LoD tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProvisionalSubtree {
    pub parent_node: Option<NodeId>,
    /// Forest roots in sibling order.
    pub roots: Vec<NodeId>,
    /// Member nodes in collection order.
    pub nodes: Vec<NodeId>,
}

impl ProvisionalSubtree {
    pub fn size(&self) -> usize {
        self.nodes.len()
    }
}

/// BFS grouping: starting from each pending root, collect nodes breadth-first
/// until exactly `tau_s` are taken; uncollected children of collected nodes
/// become new roots, queued FIFO.
pub fn initial_partition(tree: &LodTree, tau_s: usize) -> Vec<ProvisionalSubtree> {
    assert!(tau_s >= 1, "tau_s must be at least 1");
    let mut out = Vec::new();
    let mut roots = VecDeque::from([tree.root()]);
    while let Some(root) = roots.pop_front() {
        let mut nodes = Vec::with_capacity(tau_s);
        let mut frontier = VecDeque::from([root]);
        while nodes.len() < tau_s {
            let Some(nid) = frontier.pop_front() else { break };
            nodes.push(nid);
            frontier.extend(tree.node(nid).children.iter().copied());
        }
        roots.extend(frontier);
        out.push(ProvisionalSubtree {
            parent_node: tree.node(root).parent,
            roots: vec![root],
            nodes,
        });
    }
    out
}

/// Single greedy pass: a subtree joins the running group when it hangs off
/// the same parent node, holds at most `tau_s / 2` nodes, and the group would
/// stay within `tau_s`. Otherwise the group is emitted and restarts at it.
pub fn merge_subtrees(provisional: Vec<ProvisionalSubtree>, tau_s: usize) -> Vec<ProvisionalSubtree> {
    let mut out = Vec::with_capacity(provisional.len());
    let mut running: Option<ProvisionalSubtree> = None;
    for s in provisional {
        match running.as_mut() {
            Some(group)
                if group.parent_node == s.parent_node && 2 * s.size() <= tau_s && s.size() + group.size() <= tau_s =>
            {
                group.roots.extend(s.roots);
                group.nodes.extend(s.nodes);
            }
            _ => {
                if let Some(done) = running.replace(s) {
                    out.push(done);
                }
            }
        }
    }
    out.extend(running);
    out
}
