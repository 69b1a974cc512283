use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::dataset::ProcessedDataset;
use crate::metric::{combined_distance, reference_distance, weighted_distance, QueryPoint};
use crate::scalar::Scalar;

use super::{check_query, cmp_hit, IndexError, SearchHit};

pub const DEFAULT_LEAF_SIZE: usize = 16;

/// A ball: every record below this node lies within `radius` of the pivot
/// record under the reference metric.
#[derive(Debug, Clone, PartialEq)]
pub struct BallNode<T> {
    /// Dataset position of the pivot record.
    pub pivot: usize,
    pub radius: T,
    /// Arena indices of the two children; `None` for leaves.
    pub children: Option<(usize, usize)>,
    /// Dataset positions, ascending by id. Empty for internal nodes.
    pub members: Vec<usize>,
}

impl<T> BallNode<T> {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Pivot-based ball tree. Nodes live in an arena in pre-order; the root is
/// node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BallTree<T> {
    dataset: ProcessedDataset<T>,
    nodes: Vec<BallNode<T>>,
    leaf_size: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Weighted distance evaluations; at most one per record.
    pub distance_evals: usize,
    pub nodes_visited: usize,
    pub nodes_pruned: usize,
}

struct Task {
    members: Vec<usize>,
    parent: Option<(usize, bool)>,
}

fn farthest<T: Scalar>(members: &[usize], dist: &[T]) -> (usize, T) {
    // members are in id order; strict `>` keeps the lower id on ties
    let mut best = (members[0], dist[0]);
    for (&m, &d) in members.iter().zip(dist).skip(1) {
        if d > best.1 {
            best = (m, d);
        }
    }
    best
}

impl<T: Scalar> BallTree<T> {
    /// Builds the tree deterministically.
    ///
    /// Each node starts from the lowest-id member, takes the member farthest
    /// from it as pivot `p1`, the member farthest from `p1` as `p2`, and sends
    /// every member to the nearer of the two (ties to `p1`). A split that
    /// leaves one side empty falls back to halving by id.
    pub fn build(dataset: ProcessedDataset<T>, leaf_size: usize) -> Result<Self, IndexError> {
        if dataset.is_empty() {
            return Err(IndexError::EmptyDataset);
        }
        if leaf_size == 0 {
            return Err(IndexError::InvalidLeafSize);
        }
        let schema = dataset.schema();
        let records = dataset.records();
        let d_ref = |a: usize, b: usize| reference_distance(schema, &records[a], &records[b]);

        let mut all: Vec<usize> = (0..records.len()).collect();
        all.sort_by_key(|&p| records[p].id);

        let mut nodes: Vec<BallNode<T>> = Vec::new();
        let mut stack = vec![Task {
            members: all,
            parent: None,
        }];
        let mut buf: Vec<T> = Vec::new();
        while let Some(Task { members, parent }) = stack.pop() {
            let index = nodes.len();
            if let Some((p, right)) = parent {
                let children = nodes[p].children.get_or_insert((0, 0));
                if right {
                    children.1 = index;
                } else {
                    children.0 = index;
                }
            }

            let seed = members[0];
            buf.clear();
            buf.extend(members.iter().map(|&m| d_ref(seed, m)));
            let (p1, _) = farthest(&members, &buf);
            buf.clear();
            buf.extend(members.iter().map(|&m| d_ref(p1, m)));
            let (p2, radius) = farthest(&members, &buf);

            if members.len() <= leaf_size {
                nodes.push(BallNode {
                    pivot: p1,
                    radius,
                    children: None,
                    members,
                });
                continue;
            }

            let mut left = Vec::new();
            let mut right = Vec::new();
            for (&m, &d1) in members.iter().zip(&buf) {
                if d1 <= d_ref(p2, m) {
                    left.push(m);
                } else {
                    right.push(m);
                }
            }
            if left.is_empty() || right.is_empty() {
                let mid = members.len() / 2;
                left = members[..mid].to_vec();
                right = members[mid..].to_vec();
            }
            nodes.push(BallNode {
                pivot: p1,
                radius,
                children: Some((0, 0)),
                members: Vec::new(),
            });
            // left is popped first so the arena stays in pre-order
            stack.push(Task {
                members: right,
                parent: Some((index, true)),
            });
            stack.push(Task {
                members: left,
                parent: Some((index, false)),
            });
        }
        Ok(BallTree {
            dataset,
            nodes,
            leaf_size,
        })
    }

    pub(crate) fn from_raw_parts(dataset: ProcessedDataset<T>, nodes: Vec<BallNode<T>>, leaf_size: usize) -> Self {
        BallTree {
            dataset,
            nodes,
            leaf_size,
        }
    }

    pub fn dataset(&self) -> &ProcessedDataset<T> {
        &self.dataset
    }

    pub fn into_dataset(self) -> ProcessedDataset<T> {
        self.dataset
    }

    pub fn nodes(&self) -> &[BallNode<T>] {
        &self.nodes
    }

    pub fn root(&self) -> &BallNode<T> {
        &self.nodes[0]
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn depth(&self) -> usize {
        let mut depth = 0;
        let mut stack = vec![(0usize, 1usize)];
        while let Some((i, d)) = stack.pop() {
            depth = depth.max(d);
            if let Some((l, r)) = self.nodes[i].children {
                stack.push((l, d + 1));
                stack.push((r, d + 1));
            }
        }
        depth
    }

    /// Positions of every record under node `i`.
    pub fn subtree_members(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![i];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            out.extend_from_slice(&node.members);
            if let Some((l, r)) = node.children {
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }

    /// Recomputes every radius bound and leaf membership. Returns a
    /// description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.dataset.len();
        let mut seen = vec![false; n];
        let schema = self.dataset.schema();
        let tol = T::of(1e-9);
        for (i, node) in self.nodes.iter().enumerate() {
            if node.radius < T::zero() {
                return Err(format!("node {i} has negative radius"));
            }
            if node.is_leaf() {
                if node.members.is_empty() || node.members.len() > self.leaf_size {
                    return Err(format!("leaf {i} has {} members", node.members.len()));
                }
                for &m in &node.members {
                    if std::mem::replace(&mut seen[m], true) {
                        return Err(format!("record at {m} is in two leaves"));
                    }
                }
            }
            let pivot = self.dataset.record(node.pivot);
            for m in self.subtree_members(i) {
                let d = reference_distance(schema, pivot, self.dataset.record(m));
                if d > node.radius + tol {
                    return Err(format!("node {i}: member at {m} lies {d} from pivot, radius {}", node.radius));
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(m) => Err(format!("record at {m} is in no leaf")),
            None => Ok(()),
        }
    }

    pub fn knn_search(&self, query: &QueryPoint<T>, k: usize) -> Result<Vec<SearchHit<T>>, IndexError> {
        self.knn_search_with_stats(query, k).map(|(hits, _)| hits)
    }

    /// Depth-first search, nearer pivot first. A node is skipped when
    /// `d_w(q, pivot) - sqrt(w_max) * radius` exceeds the current k-th
    /// distance; this is sound because `d_w <= sqrt(w_max) * d_ref`.
    pub fn knn_search_with_stats(
        &self,
        query: &QueryPoint<T>,
        k: usize,
    ) -> Result<(Vec<SearchHit<T>>, SearchStats), IndexError> {
        check_query(&self.dataset, query, k)?;
        let records = self.dataset.records();
        let scale = query.max_weight().sqrt();
        let mut stats = SearchStats::default();
        let mut memo: Vec<T> = vec![T::nan(); records.len()];
        let mut best: BinaryHeap<Candidate<T>> = BinaryHeap::with_capacity(k + 1);

        let mut eval = |pos: usize, stats: &mut SearchStats, best: &mut BinaryHeap<Candidate<T>>| -> T {
            let cached = memo[pos];
            if !cached.is_nan() {
                return cached;
            }
            let d = weighted_distance(query, &records[pos]);
            memo[pos] = d;
            stats.distance_evals += 1;
            let cand = Candidate {
                distance: d,
                id: records[pos].id,
                pos,
            };
            if best.len() < k {
                best.push(cand);
            } else if best.peek().is_some_and(|worst| cand < *worst) {
                best.pop();
                best.push(cand);
            }
            d
        };

        let root_d = eval(self.nodes[0].pivot, &mut stats, &mut best);
        let mut stack: Vec<(usize, T)> = vec![(0, root_d)];
        while let Some((i, pivot_d)) = stack.pop() {
            let node = &self.nodes[i];
            if best.len() == k {
                let worst = best.peek().map(|c| c.distance).unwrap_or(T::infinity());
                let reach = scale * node.radius;
                let bound = pivot_d - reach;
                if bound > worst + T::prune_slack(pivot_d + reach) {
                    stats.nodes_pruned += 1;
                    continue;
                }
            }
            stats.nodes_visited += 1;
            match node.children {
                None => {
                    for &m in &node.members {
                        eval(m, &mut stats, &mut best);
                    }
                }
                Some((l, r)) => {
                    let dl = eval(self.nodes[l].pivot, &mut stats, &mut best);
                    let dr = eval(self.nodes[r].pivot, &mut stats, &mut best);
                    if dr < dl {
                        stack.push((l, dl));
                        stack.push((r, dr));
                    } else {
                        stack.push((r, dr));
                        stack.push((l, dl));
                    }
                }
            }
        }

        let mut found = best.into_vec();
        found.sort();
        let hits = found
            .into_iter()
            .map(|c| SearchHit {
                id: c.id,
                distance: c.distance,
                breakdown: combined_distance(query, &records[c.pos]),
            })
            .collect();
        Ok((hits, stats))
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate<T> {
    distance: T,
    id: u64,
    pos: usize,
}

impl<T: Scalar> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Candidate<T> {}

impl<T: Scalar> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_hit((self.distance, self.id), (other.distance, other.id))
    }
}
