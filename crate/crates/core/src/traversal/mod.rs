//! Streaming LoD search over an [`SlTree`].
//!
//! Workers pull subtree ids from a shared FIFO queue, scan the subtree's
//! records linearly and push the child ranges of boundary nodes that need
//! refinement. The cut is sorted at the end, so it never depends on the
//! interleaving.

mod schedule;

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{lod_decision, projected_size, Camera, LodTree, NodeId, Visit};
use crate::sltree::{SlTree, SubtreeId};
use crate::stats::mean_std;

pub use schedule::{schedule_dynamic, schedule_static, top_level_groups};

/// The selected node set for one view, sorted by nid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub selected: Vec<NodeId>,
    /// Per-node blend weight, parallel to `selected`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl Cut {
    pub fn from_unsorted(mut selected: Vec<NodeId>) -> Self {
        selected.sort_unstable();
        Self {
            selected,
            weights: None,
        }
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn contains(&self, nid: NodeId) -> bool {
        self.selected.binary_search(&nid).is_ok()
    }

    pub fn with_weights(mut self, tree: &LodTree, camera: &Camera, epsilon: f64) -> Self {
        self.weights = Some(interpolation_weights(tree, &self.selected, camera, epsilon));
        self
    }
}

/// Blend weight of each selected node against its parent:
/// `clamp((p_parent - eps) / (p_parent - p_node), 0, 1)`, where `p` is the
/// projected size. Roots, leaves and degenerate ratios get 1.
pub fn interpolation_weights(tree: &LodTree, selected: &[NodeId], camera: &Camera, epsilon: f64) -> Vec<f64> {
    selected
        .iter()
        .map(|&nid| {
            let node = tree.node(nid);
            let Some(parent) = node.parent else { return 1.0 };
            if node.is_leaf() {
                return 1.0;
            }
            let pn = tree.node(parent);
            let pp = projected_size(&pn.gaussian, &pn.aabb, camera);
            let p = projected_size(&node.gaussian, &node.aabb, camera);
            let w = (pp - epsilon) / (pp - p);
            if w.is_finite() {
                w.clamp(0.0, 1.0)
            } else {
                1.0
            }
        })
        .collect()
}

/// Scans one subtree from slot 0, skipping the span of every node that is
/// pruned or selected. Returns the number of records examined.
pub fn traverse_subtree(
    sltree: &SlTree,
    sid: SubtreeId,
    camera: &Camera,
    epsilon: f64,
    mut emit: impl FnMut(NodeId),
    mut enqueue: impl FnMut(SubtreeId),
) -> usize {
    let records = &sltree.subtree(sid).records;
    let mut slot = 0;
    let mut visited = 0;
    while slot < records.len() {
        let rec = &records[slot];
        visited += 1;
        match lod_decision(sltree.gaussian(rec.nid), &rec.aabb, rec.is_leaf, camera, epsilon) {
            Visit::Pruned => slot += rec.remaining as usize + 1,
            Visit::Selected => {
                emit(rec.nid);
                slot += rec.remaining as usize + 1;
            }
            Visit::Refined => {
                rec.child_sids().for_each(&mut enqueue);
                slot += 1;
            }
        }
    }
    visited
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadStats {
    pub per_worker_visited: Vec<usize>,
    pub subtrees_processed: Vec<usize>,
    pub nodes_touched_total: usize,
    pub nodes_in_tree: usize,
}

impl WorkloadStats {
    pub fn workers(&self) -> usize {
        self.per_worker_visited.len()
    }

    /// Population mean and standard deviation of per-worker visits.
    pub fn mean_std(&self) -> (f64, f64) {
        let v: Vec<f64> = self.per_worker_visited.iter().map(|&x| x as f64).collect();
        mean_std(&v)
    }

    /// Standard deviation over mean; 0 when nothing was visited.
    pub fn variation(&self) -> f64 {
        let (mean, std) = self.mean_std();
        if mean > 0.0 {
            std / mean
        } else {
            0.0
        }
    }

    pub fn max_load(&self) -> usize {
        self.per_worker_visited.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadReport {
    pub workers: usize,
    pub mean: f64,
    pub stddev: f64,
    pub max: usize,
    /// Max over mean worker load; 1 when nothing was visited.
    pub imbalance: f64,
    pub touched: usize,
    pub total: usize,
    /// Fraction of the tree an exhaustive search would touch that this one did.
    pub touched_ratio: f64,
    pub per_worker: Vec<usize>,
}

pub fn workload_report(stats: &WorkloadStats) -> WorkloadReport {
    let (mean, stddev) = stats.mean_std();
    let max = stats.max_load();
    WorkloadReport {
        workers: stats.workers(),
        mean,
        stddev,
        max,
        imbalance: if mean > 0.0 { max as f64 / mean } else { 1.0 },
        touched: stats.nodes_touched_total,
        total: stats.nodes_in_tree,
        touched_ratio: if stats.nodes_in_tree > 0 {
            stats.nodes_touched_total as f64 / stats.nodes_in_tree as f64
        } else {
            0.0
        },
        per_worker: stats.per_worker_visited.clone(),
    }
}

struct QueueState {
    pending: VecDeque<SubtreeId>,
    busy: usize,
}

/// Parallel search with `workers` OS threads sharing one FIFO subtree queue.
///
/// The cut is identical for every worker count. How visits split across
/// workers depends on thread timing; use [`schedule_dynamic`] for a
/// reproducible split.
pub fn traverse(sltree: &SlTree, camera: &Camera, epsilon: f64, workers: usize) -> Result<(Cut, WorkloadStats)> {
    check_args(epsilon, workers)?;
    let state = Mutex::new(QueueState {
        pending: VecDeque::from([sltree.root_sid()]),
        busy: 0,
    });
    let wake = Condvar::new();

    let results: Vec<(Vec<NodeId>, usize, usize)> = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut emitted = Vec::new();
                    let mut visited = 0;
                    let mut processed = 0;
                    let mut children = Vec::new();
                    loop {
                        let sid = {
                            let mut q = state.lock().expect("queue lock poisoned");
                            loop {
                                if let Some(sid) = q.pending.pop_front() {
                                    q.busy += 1;
                                    break Some(sid);
                                }
                                if q.busy == 0 {
                                    break None;
                                }
                                q = wake.wait(q).expect("queue lock poisoned");
                            }
                        };
                        let Some(sid) = sid else {
                            wake.notify_all();
                            break;
                        };
                        visited +=
                            traverse_subtree(sltree, sid, camera, epsilon, |n| emitted.push(n), |c| children.push(c));
                        processed += 1;
                        let mut q = state.lock().expect("queue lock poisoned");
                        q.pending.extend(children.drain(..));
                        q.busy -= 1;
                        drop(q);
                        wake.notify_all();
                    }
                    (emitted, visited, processed)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("traversal worker panicked"))
            .collect()
    });

    let mut selected = Vec::new();
    let mut stats = WorkloadStats {
        nodes_in_tree: sltree.node_count(),
        ..WorkloadStats::default()
    };
    for (emitted, visited, processed) in results {
        selected.extend(emitted);
        stats.per_worker_visited.push(visited);
        stats.subtrees_processed.push(processed);
        stats.nodes_touched_total += visited;
    }
    Ok((Cut::from_unsorted(selected), stats))
}

pub(crate) fn check_args(epsilon: f64, workers: usize) -> Result<()> {
    if workers < 1 {
        return Err(Error::Param("workers must be at least 1".into()));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Param(format!("epsilon {epsilon} must be positive")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{chain, figure_tree, fixture_camera, FIGURE_EPSILON};
    use crate::scene::oracle_cut;
    use crate::sltree::build_sltree;

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }

    #[test]
    fn single_visible_leaf() {
        let st = build_sltree(&chain(1), 4).unwrap();
        let mut out = Vec::new();
        let n = traverse_subtree(&st, SubtreeId(0), &fixture_camera(), 1.0, |x| out.push(x), |_| panic!());
        assert_eq!((n, out), (1, ids(&[0])));
    }

    #[test]
    fn fine_root_skips_everything() {
        let st = build_sltree(&chain(10), 4).unwrap();
        let mut out = Vec::new();
        let n = traverse_subtree(&st, SubtreeId(0), &fixture_camera(), 1e6, |x| out.push(x), |_| panic!());
        assert_eq!((n, out), (1, ids(&[0])));
    }

    #[test]
    fn figure_top_subtree() {
        let st = build_sltree(&figure_tree(), 4).unwrap();
        let mut out = Vec::new();
        let mut queued = Vec::new();
        let n = traverse_subtree(
            &st,
            SubtreeId(0),
            &fixture_camera(),
            FIGURE_EPSILON,
            |x| out.push(x),
            |s| queued.push(s),
        );
        assert_eq!(n, 4);
        assert_eq!(out, ids(&[2]));
        let parents: Vec<_> = queued.iter().map(|&s| st.subtree(s).parent_node.unwrap().0).collect();
        assert_eq!(parents, vec![1, 3]);
    }

    #[test]
    fn figure_cut_matches_oracle() {
        let t = figure_tree();
        let st = build_sltree(&t, 4).unwrap();
        let cam = fixture_camera();
        for workers in [1, 2, 8] {
            let (cut, stats) = traverse(&st, &cam, FIGURE_EPSILON, workers).unwrap();
            assert_eq!(cut.selected, ids(&[2, 4, 5, 9, 10]));
            assert_eq!(cut.selected, oracle_cut(&t, &cam, FIGURE_EPSILON));
            // Top subtree (4) plus the two leaf pairs; the subtree under node 2 is never read.
            assert_eq!(stats.nodes_touched_total, 8);
            assert_eq!(stats.subtrees_processed.iter().sum::<usize>(), 3);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let st = build_sltree(&chain(3), 4).unwrap();
        assert!(traverse(&st, &fixture_camera(), 1.0, 0).is_err());
        assert!(traverse(&st, &fixture_camera(), 0.0, 1).is_err());
    }

    #[test]
    fn report_arithmetic() {
        let stats = WorkloadStats {
            per_worker_visited: vec![10, 30],
            subtrees_processed: vec![1, 1],
            nodes_touched_total: 40,
            nodes_in_tree: 100,
        };
        let r = workload_report(&stats);
        assert_eq!((r.mean, r.stddev, r.imbalance, r.touched_ratio), (20.0, 10.0, 1.5, 0.4));
        let equal = WorkloadStats {
            per_worker_visited: vec![7; 4],
            ..stats
        };
        assert_eq!(workload_report(&equal).stddev, 0.0);
    }

    #[test]
    fn weights_lie_in_unit_interval() {
        let t = figure_tree();
        let cam = fixture_camera();
        let cut = Cut::from_unsorted(oracle_cut(&t, &cam, FIGURE_EPSILON)).with_weights(&t, &cam, FIGURE_EPSILON);
        let w = cut.weights.unwrap();
        // Node 2 is the only interior selection; the rest are leaves.
        assert!(w[0] > 0.0 && w[0] <= 1.0);
        assert!(w[1..].iter().all(|&x| x == 1.0));
    }
}
