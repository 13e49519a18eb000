//! Corpus builders and independent checkers shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sltree::scene::{gen_synthetic_tree, lod_decision, orbit_camera, random_camera, GenParams, Visit};
use sltree::{Camera, LodTree, NodeId, SlTree, SubtreeId};

/// Node budget of corpus scene `i` out of `n`, log-spaced over `[lo, hi]`.
pub fn log_budget(i: usize, n: usize, lo: f64, hi: f64) -> usize {
    let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
    (lo * (hi / lo).powf(t)).round() as usize
}

pub fn scene(seed: u64, budget: usize) -> LodTree {
    gen_synthetic_tree(&GenParams::new(seed, budget)).expect("generator parameters are valid")
}

/// Half orbit views of the whole scene, half free cameras that may sit inside
/// it or look partly away.
pub fn cameras(tree: &LodTree, seed: u64, count: usize, size: u32) -> Vec<Camera> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            if k % 2 == 0 {
                let az = rng.gen_range(0.0..std::f64::consts::TAU);
                let el = rng.gen_range(-0.6..0.6);
                let dist = rng.gen_range(1.1..4.0);
                orbit_camera(tree, az, el, dist, size)
            } else {
                random_camera(tree, &mut rng, size)
            }
        })
        .collect()
}

/// Recursive reference search over the pointer tree, independent of both
/// the library's stack walk and the subtree layout.
pub fn naive_cut(tree: &LodTree, camera: &Camera, epsilon: f64) -> Vec<NodeId> {
    fn go(tree: &LodTree, nid: NodeId, camera: &Camera, epsilon: f64, out: &mut Vec<NodeId>) {
        let node = tree.node(nid);
        match lod_decision(&node.gaussian, &node.aabb, node.is_leaf(), camera, epsilon) {
            Visit::Pruned => {}
            Visit::Selected => out.push(nid),
            Visit::Refined => {
                for &c in &node.children {
                    go(tree, c, camera, epsilon, out);
                }
            }
        }
    }
    let mut out = Vec::new();
    go(tree, tree.root(), camera, epsilon, &mut out);
    out.sort_unstable();
    out
}

/// No selected node is an ancestor of another.
pub fn is_antichain(tree: &LodTree, cut: &[NodeId]) -> bool {
    let set: HashSet<NodeId> = cut.iter().copied().collect();
    cut.iter().all(|&n| {
        let mut p = tree.node(n).parent;
        while let Some(a) = p {
            if set.contains(&a) {
                return false;
            }
            p = tree.node(a).parent;
        }
        true
    })
}

/// Along every root-to-leaf path the first node that is not refined decides
/// coverage: a selected node is the path's only cut member, a pruned one
/// leaves the path uncovered.
pub fn covers_visible_leaves(tree: &LodTree, cut: &[NodeId], camera: &Camera, epsilon: f64) -> bool {
    let set: HashSet<NodeId> = cut.iter().copied().collect();
    tree.leaves().all(|leaf| {
        let mut path = vec![leaf.nid];
        let mut p = leaf.parent;
        while let Some(a) = p {
            path.push(a);
            p = tree.node(a).parent;
        }
        path.reverse();
        let decider = path.iter().find_map(|&n| {
            let node = tree.node(n);
            match lod_decision(&node.gaussian, &node.aabb, node.is_leaf(), camera, epsilon) {
                Visit::Refined => None,
                v => Some((n, v)),
            }
        });
        let hits: Vec<NodeId> = path.iter().copied().filter(|n| set.contains(n)).collect();
        match decider {
            Some((n, Visit::Selected)) => hits == [n],
            _ => hits.is_empty(),
        }
    })
}

/// Checks an SLTree against its source tree without trusting the library's
/// own validators. Returns the first violated property.
pub fn check_partition(tree: &LodTree, st: &SlTree, tau: usize) -> Result<(), String> {
    let mut owner: Vec<Option<(SubtreeId, usize)>> = vec![None; tree.len()];
    for (k, sub) in st.subtrees().iter().enumerate() {
        if sub.sid != SubtreeId(k as u32) {
            return Err(format!("subtree {k} carries sid {}", sub.sid));
        }
        if sub.records.is_empty() || sub.records.len() > tau {
            return Err(format!("subtree {k} has {} records", sub.records.len()));
        }
        for (slot, rec) in sub.records.iter().enumerate() {
            let o = &mut owner[rec.nid.idx()];
            if o.is_some() {
                return Err(format!("node {} stored twice", rec.nid.0));
            }
            *o = Some((sub.sid, slot));
        }
    }
    if let Some(n) = owner.iter().position(Option::is_none) {
        return Err(format!("node {n} not stored"));
    }
    let owner: Vec<(SubtreeId, usize)> = owner.into_iter().map(Option::unwrap).collect();

    let root_sid = owner[tree.root().idx()].0;
    if root_sid != st.root_sid() || owner[tree.root().idx()].1 != 0 {
        return Err("tree root is not slot 0 of the root subtree".into());
    }
    for sub in st.subtrees() {
        // A subtree is a forest of siblings sharing `parent_node`; walking
        // the top-level spans must tile it exactly.
        let mut tops = Vec::new();
        let mut slot = 0;
        while slot < sub.records.len() {
            tops.push(slot);
            slot += sub.records[slot].remaining as usize + 1;
        }
        if slot != sub.records.len() {
            return Err(format!("top-level spans of subtree {} overrun", sub.sid));
        }
        for &t in &tops {
            let parent = tree.node(sub.records[t].nid).parent;
            if parent != sub.parent_node || parent.is_some_and(|p| owner[p.idx()].0 == sub.sid) {
                return Err(format!(
                    "subtree {} has a top-level node with the wrong parent",
                    sub.sid
                ));
            }
        }
        if sub.parent_node.is_none() && tops.len() != 1 {
            return Err("the root subtree holds more than one top-level node".into());
        }
        for (slot, rec) in sub.records.iter().enumerate() {
            let node = tree.node(rec.nid);
            if rec.aabb != node.aabb || rec.is_leaf != node.is_leaf() {
                return Err(format!("record of node {} disagrees with the tree", rec.nid.0));
            }
            if !tops.contains(&slot) {
                let p = node.parent.ok_or("nested record without parent")?;
                let (ps, pslot) = owner[p.idx()];
                if ps != sub.sid || pslot >= slot {
                    return Err(format!("node {} detached from its parent", rec.nid.0));
                }
            }
            let end = slot + 1 + rec.remaining as usize;
            if end > sub.records.len() {
                return Err(format!("span of node {} overruns", rec.nid.0));
            }
            let inside: Vec<NodeId> = descendants_in(tree, rec.nid, sub.sid, &owner);
            if inside.len() != rec.remaining as usize
                || !sub.records[slot + 1..end].iter().all(|r| inside.contains(&r.nid))
            {
                return Err(format!("span of node {} is not its in-subtree descendants", rec.nid.0));
            }
            let mut outside: Vec<SubtreeId> = node
                .children
                .iter()
                .filter(|c| owner[c.idx()].0 != sub.sid)
                .map(|c| owner[c.idx()].0)
                .collect();
            outside.sort_unstable();
            outside.dedup();
            let listed: Vec<SubtreeId> = rec.child_sids().collect();
            if outside != listed || rec.is_boundary != !outside.is_empty() {
                return Err(format!(
                    "child subtrees of node {} are {listed:?}, expected {outside:?}",
                    rec.nid.0
                ));
            }
        }
    }
    Ok(())
}

fn descendants_in(tree: &LodTree, nid: NodeId, sid: SubtreeId, owner: &[(SubtreeId, usize)]) -> Vec<NodeId> {
    let mut out = Vec::new();
    let mut stack: Vec<NodeId> = tree.node(nid).children.clone();
    while let Some(n) = stack.pop() {
        if owner[n.idx()].0 == sid {
            out.push(n);
            stack.extend(tree.node(n).children.iter().copied());
        }
    }
    out
}
