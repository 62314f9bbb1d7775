//! Leaf-wise regression trees grown on binned features.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::binning::BinnedMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` (equivalently bin `<= bin`) go left.
    Split {
        feature: usize,
        bin: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Where non-finite values go.
        default_left: bool,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree { nodes: vec![TreeNode::Leaf { value }] }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    pub fn root_split(&self) -> Option<(usize, usize)> {
        match self.nodes.first() {
            Some(TreeNode::Split { feature, bin, .. }) => Some((*feature, *bin)),
            _ => None,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right, default_left, .. } => {
                    let v = x[*feature];
                    let go_left = if v.is_nan() { *default_left } else { v <= *threshold };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn predict_binned(&self, binned: &BinnedMatrix, row: usize) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, bin, left, right, .. } => {
                    i = if binned.get(row, *feature) <= *bin { *left } else { *right };
                }
            }
        }
    }
}

/// Growth limits for one tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowParams {
    pub num_leaves: usize,
    pub min_data_in_leaf: usize,
    pub l2: f64,
    pub feature_fraction: f64,
}

/// Gradient, Hessian and row count accumulated per bin, flattened over features.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
    pub count: Vec<u32>,
}

/// Offsets of each feature's bins inside a flattened histogram.
pub(crate) fn bin_offsets(binned: &BinnedMatrix) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(binned.n_features() + 1);
    let mut acc = 0;
    for f in 0..binned.n_features() {
        offsets.push(acc);
        acc += binned.n_bins(f);
    }
    offsets.push(acc);
    offsets
}

impl Histogram {
    fn zeros(len: usize) -> Self {
        Histogram { grad: vec![0.0; len], hess: vec![0.0; len], count: vec![0; len] }
    }

    /// Accumulates `rows` for the listed features.
    pub fn build(
        binned: &BinnedMatrix,
        offsets: &[usize],
        features: &[usize],
        rows: &[usize],
        grad: &[f64],
        hess: &[f64],
    ) -> Self {
        let mut h = Histogram::zeros(*offsets.last().unwrap());
        for &f in features {
            let col = binned.column(f);
            let off = offsets[f];
            for &r in rows {
                let b = off + col[r] as usize;
                h.grad[b] += grad[r];
                h.hess[b] += hess[r];
                h.count[b] += 1;
            }
        }
        h
    }

    /// `self - other` over the listed features' bins.
    pub fn subtract(&self, other: &Histogram, offsets: &[usize], features: &[usize]) -> Histogram {
        let mut h = Histogram::zeros(self.grad.len());
        for &f in features {
            for b in offsets[f]..offsets[f + 1] {
                h.grad[b] = self.grad[b] - other.grad[b];
                h.hess[b] = self.hess[b] - other.hess[b];
                h.count[b] = self.count[b] - other.count[b];
            }
        }
        h
    }
}

/// Best split of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub gain: f64,
    pub feature: usize,
    pub bin: usize,
}

/// `G_L²/(H_L+λ) + G_R²/(H_R+λ) - G²/(H+λ)`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, l2: f64) -> f64 {
    let g = gl + gr;
    let h = hl + hr;
    gl * gl / (hl + l2) + gr * gr / (hr + l2) - g * g / (h + l2)
}

/// Scans every (feature, bin) threshold. Ties keep the lowest feature, then
/// the lowest bin.
fn best_split(
    hist: &Histogram,
    offsets: &[usize],
    features: &[usize],
    totals: (f64, f64, u32),
    params: &GrowParams,
) -> Option<SplitCandidate> {
    let (g, h, n) = totals;
    let min = params.min_data_in_leaf.max(1) as u32;
    let mut best: Option<SplitCandidate> = None;
    for &f in features {
        let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0u32);
        for b in offsets[f]..offsets[f + 1] - 1 {
            gl += hist.grad[b];
            hl += hist.hess[b];
            nl += hist.count[b];
            if nl < min {
                continue;
            }
            if n - nl < min {
                break;
            }
            let gain = split_gain(gl, hl, g - gl, h - hl, params.l2);
            if gain > best.map_or(0.0, |s| s.gain) {
                best = Some(SplitCandidate { gain, feature: f, bin: b - offsets[f] });
            }
        }
    }
    best
}

struct Leaf {
    node: usize,
    rows: Vec<usize>,
    hist: Histogram,
    totals: (f64, f64, u32),
    split: Option<SplitCandidate>,
}

fn totals_of(rows: &[usize], grad: &[f64], hess: &[f64]) -> (f64, f64, u32) {
    let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &r| (g + grad[r], h + hess[r]));
    (g, h, rows.len() as u32)
}

/// Grows one tree best-first over `rows`.
///
/// The leaf with the largest positive gain is split next until `num_leaves`
/// is reached or no admissible split improves the objective. The smaller
/// child's histogram is built directly and its sibling's by subtraction from
/// the parent. Leaf values are `-G / (H + λ)`.
pub fn grow_tree<R: Rng + ?Sized>(
    binned: &BinnedMatrix,
    grad: &[f64],
    hess: &[f64],
    rows: &[usize],
    params: &GrowParams,
    rng: &mut R,
) -> Tree {
    let n_features = binned.n_features();
    let features: Vec<usize> = if params.feature_fraction < 1.0 {
        let k = ((params.feature_fraction * n_features as f64).ceil() as usize).clamp(1, n_features);
        let mut f = rand::seq::index::sample(rng, n_features, k).into_vec();
        f.sort_unstable();
        f
    } else {
        (0..n_features).collect()
    };
    let offsets = bin_offsets(binned);
    let leaf_value = |t: (f64, f64, u32)| -t.0 / (t.1 + params.l2) + 0.0;

    let root_totals = totals_of(rows, grad, hess);
    if rows.is_empty() {
        return Tree::leaf(0.0);
    }
    let root_hist = Histogram::build(binned, &offsets, &features, rows, grad, hess);
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut leaves = vec![Leaf {
        node: 0,
        rows: rows.to_vec(),
        split: best_split(&root_hist, &offsets, &features, root_totals, params),
        hist: root_hist,
        totals: root_totals,
    }];

    while leaves.len() < params.num_leaves.max(1) {
        let mut pick: Option<usize> = None;
        for (i, leaf) in leaves.iter().enumerate() {
            if let Some(s) = leaf.split {
                if pick.is_none_or(|p| s.gain > leaves[p].split.unwrap().gain) {
                    pick = Some(i);
                }
            }
        }
        let Some(pick) = pick else { break };
        let parent = leaves.remove(pick);
        let split = parent.split.unwrap();
        let col = binned.column(split.feature);
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            parent.rows.iter().partition(|&&r| (col[r] as usize) <= split.bin);

        let (small, large, small_is_left) = if left_rows.len() <= right_rows.len() {
            (left_rows, right_rows, true)
        } else {
            (right_rows, left_rows, false)
        };
        let small_hist = Histogram::build(binned, &offsets, &features, &small, grad, hess);
        let large_hist = parent.hist.subtract(&small_hist, &offsets, &features);
        let small_totals = totals_of(&small, grad, hess);
        let large_totals = totals_of(&large, grad, hess);

        let left_node = nodes.len();
        let right_node = left_node + 1;
        nodes.push(TreeNode::Leaf { value: 0.0 });
        nodes.push(TreeNode::Leaf { value: 0.0 });
        nodes[parent.node] = TreeNode::Split {
            feature: split.feature,
            bin: split.bin,
            threshold: binned.threshold(split.feature, split.bin),
            left: left_node,
            right: right_node,
            default_left: true,
        };
        let (small_node, large_node) = if small_is_left { (left_node, right_node) } else { (right_node, left_node) };
        let mut children = [
            Leaf {
                node: small_node,
                split: best_split(&small_hist, &offsets, &features, small_totals, params),
                rows: small,
                hist: small_hist,
                totals: small_totals,
            },
            Leaf {
                node: large_node,
                split: best_split(&large_hist, &offsets, &features, large_totals, params),
                rows: large,
                hist: large_hist,
                totals: large_totals,
            },
        ];
        if !small_is_left {
            children.swap(0, 1);
        }
        leaves.extend(children);
    }

    for leaf in &leaves {
        nodes[leaf.node] = TreeNode::Leaf { value: leaf_value(leaf.totals) };
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::super::binning::bin_features;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(num_leaves: usize, min_data: usize) -> GrowParams {
        GrowParams { num_leaves, min_data_in_leaf: min_data, l2: 0.0, feature_fraction: 1.0 }
    }

    #[test]
    fn zero_gradients_give_a_zero_leaf() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 4) as f64]).collect();
        let b = bin_features(&rows, 255).unwrap();
        let idx: Vec<usize> = (0..20).collect();
        let t = grow_tree(&b, &[0.0; 20], &[1.0; 20], &idx, &params(31, 1), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(t, Tree::leaf(0.0));
    }

    #[test]
    fn two_clusters_split_at_the_gap() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).chain((0..10).map(|i| 5.0 + i as f64 * 0.1)).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let grad: Vec<f64> = (0..20).map(|i| if i < 10 { -1.0 } else { 1.0 }).collect();
        let b = bin_features(&rows, 255).unwrap();
        let idx: Vec<usize> = (0..20).collect();
        let t = grow_tree(&b, &grad, &[1.0; 20], &idx, &params(2, 1), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.root_split(), Some((0, 9)));
        assert!(t.predict(&[0.5]) > 0.0 && t.predict(&[5.5]) < 0.0);
    }

    #[test]
    fn leaf_budget_is_respected() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![((i * 7) % 50) as f64, ((i * 13) % 31) as f64]).collect();
        let grad: Vec<f64> = (0..200).map(|i| (((i * 17) % 23) as f64 - 11.0) / 3.0).collect();
        let b = bin_features(&rows, 64).unwrap();
        let idx: Vec<usize> = (0..200).collect();
        for leaves in [2, 3, 7] {
            let t = grow_tree(&b, &grad, &[1.0; 200], &idx, &params(leaves, 1), &mut ChaCha8Rng::seed_from_u64(0));
            assert!(t.n_leaves() <= leaves);
        }
        let t = grow_tree(&b, &grad, &[1.0; 200], &idx, &params(200, 60), &mut ChaCha8Rng::seed_from_u64(0));
        // every leaf must hold at least 60 rows, so at most 3 leaves
        assert!(t.n_leaves() <= 3);
    }

    #[test]
    fn binned_and_raw_prediction_agree() {
        let rows: Vec<Vec<f64>> = (0..150).map(|i| vec![((i * 7) % 50) as f64 * 0.3, ((i * 13) % 31) as f64]).collect();
        let grad: Vec<f64> = (0..150).map(|i| (((i * 17) % 23) as f64 - 11.0) / 3.0).collect();
        let b = bin_features(&rows, 16).unwrap();
        let idx: Vec<usize> = (0..150).collect();
        let t = grow_tree(&b, &grad, &[1.0; 150], &idx, &params(8, 5), &mut ChaCha8Rng::seed_from_u64(0));
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(t.predict(row), t.predict_binned(&b, r));
        }
    }

    #[test]
    fn subtraction_matches_direct_construction_on_dyadic_gradients() {
        let rows: Vec<Vec<f64>> = (0..300).map(|i| vec![((i * 7) % 50) as f64, ((i * 13) % 31) as f64, (i % 5) as f64]).collect();
        let b = bin_features(&rows, 32).unwrap();
        let grad: Vec<f64> = (0..300).map(|i| ((i * 29) % 17) as f64 * 0.25 - 2.0).collect();
        let hess: Vec<f64> = (0..300).map(|i| 0.5 + ((i * 3) % 4) as f64 * 0.125).collect();
        let offsets = bin_offsets(&b);
        let features = [0, 1, 2];
        let all: Vec<usize> = (0..300).collect();
        let (left, right): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&r| b.get(r, 1) <= 10);
        let parent = Histogram::build(&b, &offsets, &features, &all, &grad, &hess);
        let l = Histogram::build(&b, &offsets, &features, &left, &grad, &hess);
        let r = Histogram::build(&b, &offsets, &features, &right, &grad, &hess);
        assert_eq!(parent.subtract(&l, &offsets, &features), r);
    }
}
