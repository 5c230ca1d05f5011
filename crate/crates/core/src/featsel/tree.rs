//! Depth-limited least-squares regression trees with exact split search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A split sends `x[feature] <= threshold` left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        /// Squared-error reduction achieved by this split.
        gain: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn splits(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split {
                feature,
                threshold,
                gain,
                ..
            } => Some((*feature, *threshold, *gain)),
            Node::Leaf { .. } => None,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Column-major training view with each column's row order presorted once.
pub(crate) struct TrainingData<'a> {
    pub columns: &'a [Vec<f64>],
    pub sorted: &'a [Vec<u32>],
}

/// Fits one tree to `target` (the current residuals). Returns the tree and the
/// leaf index each row landed in.
pub(crate) fn fit_tree(
    data: &TrainingData<'_>,
    target: &[f64],
    max_depth: usize,
    min_leaf: usize,
) -> (RegressionTree, Vec<f64>) {
    let n = target.len();
    let mut node_of = vec![0u32; n];
    let mut nodes: Vec<Node> = vec![Node::Leaf { value: 0.0 }];
    let mut sums = vec![target.iter().sum::<f64>()];
    let mut counts = vec![n];
    let mut sq = vec![target.iter().map(|r| r * r).sum::<f64>()];
    let mut active: Vec<usize> = vec![0];

    for _depth in 0..max_depth {
        if active.is_empty() {
            break;
        }
        // slot[node] = position in `active`, or usize::MAX.
        let mut slot = vec![usize::MAX; nodes.len()];
        for (k, &a) in active.iter().enumerate() {
            slot[a] = k;
        }

        let per_feature: Vec<Vec<Option<Candidate>>> = (0..data.columns.len())
            .into_par_iter()
            .map(|f| best_splits_for_feature(data, f, target, &node_of, &slot, &active, &sums, &counts, min_leaf))
            .collect();

        let mut next_active = Vec::new();
        for (k, &node) in active.iter().enumerate() {
            // Feature order is the reduction order: ties keep the lowest feature index.
            let mut best: Option<Candidate> = None;
            for cands in &per_feature {
                if let Some(c) = cands[k] {
                    if best.is_none_or(|b| c.gain > b.gain) {
                        best = Some(c);
                    }
                }
            }
            let min_gain = 1e-12 * sq[node] + f64::MIN_POSITIVE;
            let Some(best) = best.filter(|b| b.gain > min_gain) else {
                continue;
            };
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            sums.extend([0.0, 0.0]);
            counts.extend([0, 0]);
            sq.extend([0.0, 0.0]);
            nodes[node] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                gain: best.gain,
                left,
                right,
            };
            next_active.push(node);
        }
        if next_active.is_empty() {
            break;
        }

        let col_of: Vec<Option<(usize, f64, usize, usize)>> = nodes
            .iter()
            .map(|nd| match nd {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => Some((*feature, *threshold, *left, *right)),
                Node::Leaf { .. } => None,
            })
            .collect();
        for i in 0..n {
            let cur = node_of[i] as usize;
            if let Some((f, thr, l, r)) = col_of[cur] {
                let child = if data.columns[f][i] <= thr { l } else { r };
                node_of[i] = child as u32;
                sums[child] += target[i];
                counts[child] += 1;
                sq[child] += target[i] * target[i];
            }
        }
        active = next_active
            .iter()
            .flat_map(|&p| match nodes[p] {
                Node::Split { left, right, .. } => [left, right],
                Node::Leaf { .. } => unreachable!(),
            })
            .collect();
    }

    for (i, node) in nodes.iter_mut().enumerate() {
        if let Node::Leaf { value } = node {
            *value = if counts[i] > 0 {
                sums[i] / counts[i] as f64
            } else {
                0.0
            };
        }
    }
    let fitted = node_of
        .iter()
        .map(|&k| match nodes[k as usize] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("rows end in leaves"),
        })
        .collect();
    (RegressionTree { nodes }, fitted)
}

#[allow(clippy::too_many_arguments)]
fn best_splits_for_feature(
    data: &TrainingData<'_>,
    f: usize,
    target: &[f64],
    node_of: &[u32],
    slot: &[usize],
    active: &[usize],
    sums: &[f64],
    counts: &[usize],
    min_leaf: usize,
) -> Vec<Option<Candidate>> {
    let col = &data.columns[f];
    let k = active.len();
    let mut left_sum = vec![0.0; k];
    let mut left_cnt = vec![0usize; k];
    let mut last = vec![f64::NAN; k];
    let mut best: Vec<Option<Candidate>> = vec![None; k];
    for &i in &data.sorted[f] {
        let i = i as usize;
        let node = node_of[i] as usize;
        let s = match slot.get(node) {
            Some(&s) if s != usize::MAX => s,
            _ => continue,
        };
        let v = col[i];
        let nl = left_cnt[s];
        let total = counts[node];
        if nl >= min_leaf && total - nl >= min_leaf && v > last[s] {
            let sl = left_sum[s];
            let st = sums[node];
            let sr = st - sl;
            let nr = total - nl;
            let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - st * st / total as f64;
            if best[s].is_none_or(|b| gain > b.gain) {
                let lo = last[s];
                let mut threshold = lo + (v - lo) / 2.0;
                if threshold >= v {
                    threshold = lo;
                }
                best[s] = Some(Candidate {
                    gain,
                    feature: f,
                    threshold,
                });
            }
        }
        left_sum[s] += target[i];
        left_cnt[s] += 1;
        last[s] = v;
    }
    best
}

/// Presorted row order for each column (ties by row index).
pub(crate) fn presort(columns: &[Vec<f64>]) -> Vec<Vec<u32>> {
    columns
        .par_iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..col.len() as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect()
}
