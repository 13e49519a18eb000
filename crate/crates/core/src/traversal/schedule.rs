//! Reproducible worker schedules for workload-balance measurements.
//!
//! Time is counted in record visits: a worker that picks up a subtree is busy
//! for as many ticks as it examines records, and the subtrees it enqueues
//! become available when it finishes.

use std::collections::VecDeque;

use super::{check_args, traverse_subtree, Cut, WorkloadStats};
use crate::error::Result;
use crate::scene::{Camera, NodeId};
use crate::sltree::{SlTree, SubtreeId};

struct Running {
    finish: u64,
    children: Vec<SubtreeId>,
}

/// FIFO list scheduling on `workers` virtual workers. Idle workers are
/// served lowest index first; tasks finishing on the same tick release their
/// children in worker order.
pub fn schedule_dynamic(
    sltree: &SlTree,
    camera: &Camera,
    epsilon: f64,
    workers: usize,
) -> Result<(Cut, WorkloadStats)> {
    check_args(epsilon, workers)?;
    let mut queue = VecDeque::from([sltree.root_sid()]);
    let mut slots: Vec<Option<Running>> = (0..workers).map(|_| None).collect();
    let mut stats = WorkloadStats {
        per_worker_visited: vec![0; workers],
        subtrees_processed: vec![0; workers],
        nodes_touched_total: 0,
        nodes_in_tree: sltree.node_count(),
    };
    let mut selected = Vec::new();
    let mut now = 0u64;
    loop {
        for (w, slot) in slots.iter_mut().enumerate() {
            if slot.is_some() {
                continue;
            }
            let Some(sid) = queue.pop_front() else { break };
            let mut children = Vec::new();
            let cost = traverse_subtree(sltree, sid, camera, epsilon, |n| selected.push(n), |c| children.push(c));
            stats.per_worker_visited[w] += cost;
            stats.subtrees_processed[w] += 1;
            stats.nodes_touched_total += cost;
            *slot = Some(Running {
                finish: now + cost as u64,
                children,
            });
        }
        let Some(next) = slots.iter().flatten().map(|r| r.finish).min() else {
            break;
        };
        now = next;
        for slot in slots.iter_mut() {
            if slot.as_ref().is_some_and(|r| r.finish == now) {
                queue.extend(slot.take().expect("checked above").children);
            }
        }
    }
    Ok((Cut::from_unsorted(selected), stats))
}

/// The subtrees hanging directly off the root subtree, each with every
/// subtree below it, in SID order.
pub fn top_level_groups(sltree: &SlTree) -> Vec<Vec<SubtreeId>> {
    let children = |sid: SubtreeId| -> Vec<SubtreeId> {
        sltree
            .subtree(sid)
            .records
            .iter()
            .flat_map(|r| r.child_sids())
            .collect()
    };
    children(sltree.root_sid())
        .into_iter()
        .map(|top| {
            let mut group = vec![top];
            let mut i = 0;
            while i < group.len() {
                group.extend(children(group[i]));
                i += 1;
            }
            group
        })
        .collect()
}

/// Static baseline: worker 0 searches the root subtree, then top-level
/// group `i` (see [`top_level_groups`]) belongs to worker `i mod workers`
/// for the whole frame.
pub fn schedule_static(sltree: &SlTree, camera: &Camera, epsilon: f64, workers: usize) -> Result<(Cut, WorkloadStats)> {
    check_args(epsilon, workers)?;
    let mut owner = vec![0usize; sltree.len()];
    for (i, group) in top_level_groups(sltree).iter().enumerate() {
        for sid in group {
            owner[sid.idx()] = i % workers;
        }
    }
    let mut stats = WorkloadStats {
        per_worker_visited: vec![0; workers],
        subtrees_processed: vec![0; workers],
        nodes_touched_total: 0,
        nodes_in_tree: sltree.node_count(),
    };
    let mut selected: Vec<NodeId> = Vec::new();
    let mut queue = VecDeque::from([sltree.root_sid()]);
    while let Some(sid) = queue.pop_front() {
        let cost = traverse_subtree(
            sltree,
            sid,
            camera,
            epsilon,
            |n| selected.push(n),
            |c| queue.push_back(c),
        );
        let w = owner[sid.idx()];
        stats.per_worker_visited[w] += cost;
        stats.subtrees_processed[w] += 1;
        stats.nodes_touched_total += cost;
    }
    Ok((Cut::from_unsorted(selected), stats))
}
