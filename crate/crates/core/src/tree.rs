//! CART regression trees: exact and histogram split search minimizing
//! post-split variance, leaf means, and cost-complexity pruning.
//!
//! The growth engine here is shared with the ensembles: bagged trees reuse
//! it with restricted rows/features, Extra Trees with random thresholds,
//! and boosting with the regularized gain and leaf weights.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::scalar::Scalar;

pub const TREE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Exact,
    Histogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Minimum samples per child; under squared loss this is exactly the
    /// hessian sum, so the CART and boosting meanings coincide.
    pub min_child_weight: usize,
    pub split_mode: SplitMode,
    /// Equal-frequency bins, rebuilt per node.
    pub histogram_bins: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: 6, min_child_weight: 1, split_mode: SplitMode::Exact, histogram_bins: 256 }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::InvalidParam("max_depth must be at least 1".into()));
        }
        if self.min_child_weight < 1 {
            return Err(Error::InvalidParam("min_child_weight must be at least 1".into()));
        }
        if self.histogram_bins < 2 {
            return Err(Error::InvalidParam("histogram_bins must be at least 2".into()));
        }
        Ok(())
    }
}

/// Split convention: `x <= threshold` goes left, fixed for serialization
/// stability and reproducible predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub enum Node<S: Scalar> {
    Split {
        feature: usize,
        threshold: S,
        left: u32,
        right: u32,
        n: usize,
        /// Prediction if this subtree were collapsed; the leaf mean (or
        /// regularized weight) over the node's samples.
        value: S,
        /// Sum of squared residuals around the node mean.
        sse: S,
        gain: S,
    },
    Leaf {
        value: S,
        n: usize,
        sse: S,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct RegressionTree<S: Scalar> {
    pub version: u32,
    n_features: usize,
    nodes: Vec<Node<S>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate<S> {
    pub feature: usize,
    pub threshold: S,
    /// SSE(parent) - SSE(left) - SSE(right) for CART; the regularized gain
    /// for boosting-grown trees.
    pub gain: S,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafInfo<S> {
    /// Region id: position of the leaf in node order.
    pub id: usize,
    pub value: S,
    pub n: usize,
    pub sse: S,
}

impl<S: Scalar> RegressionTree<S> {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn nodes(&self) -> &[Node<S>] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn leaves(&self) -> Vec<LeafInfo<S>> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { value, n, sse } => Some((*value, *n, *sse)),
                Node::Split { .. } => None,
            })
            .enumerate()
            .map(|(id, (value, n, sse))| LeafInfo { id, value, n, sse })
            .collect()
    }

    /// Number of split levels on the deepest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk<S: Scalar>(nodes: &[Node<S>], idx: usize) -> usize {
            match &nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// Total training SSE: the sum of leaf SSEs.
    pub fn training_sse(&self) -> S {
        self.leaves().iter().map(|l| l.sse).sum()
    }

    pub fn predict(&self, x: &[S]) -> Result<S> {
        if x.len() != self.n_features {
            return Err(Error::SchemaMismatch { expected: self.n_features, got: x.len() });
        }
        Ok(self.predict_row(x))
    }

    pub(crate) fn predict_row(&self, x: &[S]) -> S {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value, .. } => return *value,
                Node::Split { feature, threshold, left, right, .. } => {
                    idx = if x[*feature] <= *threshold { *left as usize } else { *right as usize };
                }
            }
        }
    }

    pub fn predict_batch(&self, matrix: &FeatureMatrix<S>) -> Result<Vec<S>> {
        if matrix.n_features() != self.n_features {
            return Err(Error::SchemaMismatch { expected: self.n_features, got: matrix.n_features() });
        }
        Ok((0..matrix.n_rows()).map(|i| self.predict_row(matrix.row(i))).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let tree: Self = serde_json::from_str(json)?;
        if tree.version != TREE_FORMAT_VERSION {
            return Err(Error::InvalidParam(format!(
                "unsupported tree format version {}",
                tree.version
            )));
        }
        Ok(tree)
    }
}

// ---------------------------------------------------------------------------
// Growth engine
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum GainKind {
    /// Post-split variance reduction: G_L²/N_L + G_R²/N_R - G²/N.
    CartSse,
    /// Regularized boosting gain:
    /// (G_L²/(N_L+λ) + G_R²/(N_R+λ) - G²/(N+λ)) / 2.
    Regularized,
}

pub(crate) struct GrowSpec<'a, S: Scalar> {
    pub cols: &'a [Vec<S>],
    pub targets: &'a [S],
    pub rows: Vec<u32>,
    pub features: &'a [usize],
    pub max_depth: usize,
    pub max_leaves: usize,
    pub leafwise: bool,
    pub min_child_weight: usize,
    pub split_mode: SplitMode,
    pub bins: usize,
    pub lambda: S,
    pub gamma: S,
    pub gain_kind: GainKind,
    /// Draw one uniform random threshold per candidate feature instead of
    /// scanning (Extra Trees).
    pub random_thresholds: bool,
    pub parallel: bool,
}

struct NodeStats<S> {
    n: usize,
    sum: S,
    sumsq: S,
}

impl<S: Scalar> NodeStats<S> {
    fn collect(targets: &[S], rows: &[u32]) -> Self {
        let mut sum = S::zero();
        let mut sumsq = S::zero();
        for &r in rows {
            let y = targets[r as usize];
            sum += y;
            sumsq += y * y;
        }
        Self { n: rows.len(), sum, sumsq }
    }

    fn sse(&self) -> S {
        (self.sumsq - self.sum * self.sum / S::from_count(self.n)).max(S::zero())
    }

    fn leaf_value(&self, lambda: S) -> S {
        self.sum / (S::from_count(self.n) + lambda)
    }
}

#[allow(clippy::too_many_arguments)]
fn split_gain<S: Scalar>(kind: GainKind, lambda: S, gl: S, nl: usize, gr: S, nr: usize, g: S, n: usize) -> S {
    match kind {
        GainKind::CartSse => {
            gl * gl / S::from_count(nl) + gr * gr / S::from_count(nr) - g * g / S::from_count(n)
        }
        GainKind::Regularized => {
            let half = S::from_f64(0.5);
            half * (gl * gl / (S::from_count(nl) + lambda) + gr * gr / (S::from_count(nr) + lambda)
                - g * g / (S::from_count(n) + lambda))
        }
    }
}

struct Grower<'a, S: Scalar> {
    cols: &'a [Vec<S>],
    targets: &'a [S],
    features: &'a [usize],
    min_child_weight: usize,
    split_mode: SplitMode,
    bins: usize,
    lambda: S,
    gamma: S,
    gain_kind: GainKind,
    random_thresholds: bool,
    parallel: bool,
}

impl<'a, S: Scalar> Grower<'a, S> {
    /// A split is admissible when both children carry `min_child_weight`
    /// samples and its gain is positive and at least gamma.
    fn admissible(&self, gain: S) -> bool {
        gain.is_finite() && gain > S::zero() && gain >= self.gamma
    }

    fn find_best_split(
        &self,
        rows: &[u32],
        stats: &NodeStats<S>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Option<SplitCandidate<S>> {
        if rows.len() < 2 * self.min_child_weight {
            return None;
        }

        let per_feature: Vec<Option<(S, S)>> = if self.random_thresholds {
            // thresholds are drawn sequentially so the stream does not
            // depend on evaluation order
            let rng = rng.expect("random thresholds need a generator");
            let thresholds: Vec<Option<S>> =
                self.features.iter().map(|&f| self.draw_threshold(rows, f, rng)).collect();
            self.features
                .iter()
                .zip(thresholds)
                .map(|(&f, t)| t.and_then(|t| self.eval_fixed_threshold(rows, f, t, stats)))
                .collect()
        } else if self.parallel && rows.len() >= 4096 && self.features.len() > 1 {
            self.features.par_iter().map(|&f| self.scan_feature(rows, f, stats)).collect()
        } else {
            self.features.iter().map(|&f| self.scan_feature(rows, f, stats)).collect()
        };

        // sequential reduction; strictly-greater keeps the lowest feature
        // index on gain ties
        let mut best: Option<SplitCandidate<S>> = None;
        for (&feature, result) in self.features.iter().zip(per_feature) {
            if let Some((threshold, gain)) = result {
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(SplitCandidate { feature, threshold, gain });
                }
            }
        }
        best
    }

    /// Uniform threshold strictly inside the node's value range, or `None`
    /// when the feature is constant at this node.
    fn draw_threshold(&self, rows: &[u32], feature: usize, rng: &mut ChaCha8Rng) -> Option<S> {
        let col = &self.cols[feature];
        let mut min = S::infinity();
        let mut max = S::neg_infinity();
        for &r in rows {
            let v = col[r as usize];
            if v < min {
                min = v;
            }
            if v > max {
                max = v;
            }
        }
        if min >= max {
            return None;
        }
        for _ in 0..8 {
            let u: f64 = rng.random();
            let t = min + (max - min) * S::from_f64(u);
            if t > min && t < max {
                return Some(t);
            }
        }
        None
    }

    fn eval_fixed_threshold(
        &self,
        rows: &[u32],
        feature: usize,
        threshold: S,
        stats: &NodeStats<S>,
    ) -> Option<(S, S)> {
        let col = &self.cols[feature];
        let mut gl = S::zero();
        let mut nl = 0usize;
        for &r in rows {
            if col[r as usize] <= threshold {
                gl += self.targets[r as usize];
                nl += 1;
            }
        }
        let nr = stats.n - nl;
        if nl < self.min_child_weight || nr < self.min_child_weight {
            return None;
        }
        let gain = split_gain(self.gain_kind, self.lambda, gl, nl, stats.sum - gl, nr, stats.sum, stats.n);
        self.admissible(gain).then_some((threshold, gain))
    }

    /// Scan sorted feature values. Exact mode evaluates every distinct
    /// value boundary; histogram mode only the equal-frequency bin edges.
    /// With bins >= distinct values the two paths are identical.
    fn scan_feature(&self, rows: &[u32], feature: usize, stats: &NodeStats<S>) -> Option<(S, S)> {
        let col = &self.cols[feature];
        let mut pairs: Vec<(S, S)> = rows
            .iter()
            .map(|&r| (col[r as usize], self.targets[r as usize]))
            .collect();
        // stable sort: equal feature values keep row order, so prefix sums
        // are reproducible
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("matrix values are finite"));
        let n = pairs.len();
        if pairs[0].0 == pairs[n - 1].0 {
            return None;
        }

        let candidates = match self.split_mode {
            SplitMode::Exact => None,
            SplitMode::Histogram => {
                let mut distinct = 1usize;
                for i in 1..n {
                    if pairs[i].0 != pairs[i - 1].0 {
                        distinct += 1;
                    }
                }
                if distinct <= self.bins {
                    None
                } else {
                    let mut cands: Vec<S> = Vec::with_capacity(self.bins);
                    for b in 1..self.bins {
                        let pos = b * n / self.bins;
                        if pos == 0 {
                            continue;
                        }
                        let v = pairs[pos - 1].0;
                        if v == pairs[n - 1].0 {
                            break;
                        }
                        if cands.last() != Some(&v) {
                            cands.push(v);
                        }
                    }
                    Some(cands)
                }
            }
        };

        let mut best: Option<(S, S)> = None;
        let mut gl = S::zero();
        let mut ci = 0usize;
        for i in 0..n - 1 {
            gl += pairs[i].1;
            let v = pairs[i].0;
            if v == pairs[i + 1].0 {
                continue;
            }
            if let Some(cands) = &candidates {
                while ci < cands.len() && cands[ci] < v {
                    ci += 1;
                }
                if ci >= cands.len() {
                    break;
                }
                if cands[ci] != v {
                    continue;
                }
            }
            let nl = i + 1;
            let nr = n - nl;
            if nl < self.min_child_weight || nr < self.min_child_weight {
                continue;
            }
            let gain =
                split_gain(self.gain_kind, self.lambda, gl, nl, stats.sum - gl, nr, stats.sum, stats.n);
            if self.admissible(gain) && best.is_none_or(|(_, bg)| gain > bg) {
                best = Some((v, gain));
            }
        }
        best
    }

    fn partition(&self, rows: Vec<u32>, feature: usize, threshold: S) -> (Vec<u32>, Vec<u32>) {
        let col = &self.cols[feature];
        let mut left = Vec::new();
        let mut right = Vec::new();
        for r in rows {
            if col[r as usize] <= threshold {
                left.push(r);
            } else {
                right.push(r);
            }
        }
        (left, right)
    }
}

pub(crate) fn grow_tree<S: Scalar>(spec: GrowSpec<'_, S>, mut rng: Option<&mut ChaCha8Rng>) -> RegressionTree<S> {
    debug_assert!(!spec.rows.is_empty());
    let grower = Grower {
        cols: spec.cols,
        targets: spec.targets,
        features: spec.features,
        min_child_weight: spec.min_child_weight,
        split_mode: spec.split_mode,
        bins: spec.bins,
        lambda: spec.lambda,
        gamma: spec.gamma,
        gain_kind: spec.gain_kind,
        random_thresholds: spec.random_thresholds,
        parallel: spec.parallel,
    };
    let mut nodes = Vec::new();
    if spec.leafwise {
        grow_leafwise(&grower, &mut nodes, spec.rows, spec.max_leaves, &mut rng);
    } else {
        grow_depthwise(&grower, &mut nodes, spec.rows, 0, spec.max_depth, &mut rng);
    }
    RegressionTree { version: TREE_FORMAT_VERSION, n_features: spec.cols.len(), nodes }
}

fn leaf_node<S: Scalar>(stats: &NodeStats<S>, lambda: S) -> Node<S> {
    Node::Leaf { value: stats.leaf_value(lambda), n: stats.n, sse: stats.sse() }
}

fn grow_depthwise<S: Scalar>(
    grower: &Grower<'_, S>,
    nodes: &mut Vec<Node<S>>,
    rows: Vec<u32>,
    depth: usize,
    max_depth: usize,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> u32 {
    let stats = NodeStats::collect(grower.targets, &rows);
    let candidate = if depth < max_depth {
        grower.find_best_split(&rows, &stats, rng.as_deref_mut())
    } else {
        None
    };
    let idx = nodes.len() as u32;
    match candidate {
        None => {
            nodes.push(leaf_node(&stats, grower.lambda));
            idx
        }
        Some(c) => {
            nodes.push(Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                left: 0,
                right: 0,
                n: stats.n,
                value: stats.leaf_value(grower.lambda),
                sse: stats.sse(),
                gain: c.gain,
            });
            let (left_rows, right_rows) = grower.partition(rows, c.feature, c.threshold);
            let left = grow_depthwise(grower, nodes, left_rows, depth + 1, max_depth, rng);
            let right = grow_depthwise(grower, nodes, right_rows, depth + 1, max_depth, rng);
            match &mut nodes[idx as usize] {
                Node::Split { left: l, right: r, .. } => {
                    *l = left;
                    *r = right;
                }
                Node::Leaf { .. } => unreachable!(),
            }
            idx
        }
    }
}

fn grow_leafwise<S: Scalar>(
    grower: &Grower<'_, S>,
    nodes: &mut Vec<Node<S>>,
    rows: Vec<u32>,
    max_leaves: usize,
    rng: &mut Option<&mut ChaCha8Rng>,
) {
    struct Open<S> {
        node: usize,
        rows: Vec<u32>,
        candidate: Option<SplitCandidate<S>>,
        seq: usize,
    }

    let stats = NodeStats::collect(grower.targets, &rows);
    let root_candidate = grower.find_best_split(&rows, &stats, rng.as_deref_mut());
    nodes.push(leaf_node(&stats, grower.lambda));
    let mut open = vec![Open { node: 0, rows, candidate: root_candidate, seq: 0 }];
    let mut next_seq = 1usize;
    let mut n_leaves = 1usize;

    while n_leaves < max_leaves {
        // best gain first; creation order breaks ties deterministically
        let mut pick: Option<usize> = None;
        for (i, o) in open.iter().enumerate() {
            let Some(c) = &o.candidate else { continue };
            let better = match pick {
                None => true,
                Some(j) => {
                    let b = open[j].candidate.as_ref().expect("picked has candidate");
                    c.gain > b.gain || (c.gain == b.gain && o.seq < open[j].seq)
                }
            };
            if better {
                pick = Some(i);
            }
        }
        let Some(pick) = pick else { break };
        let Open { node, rows, candidate, .. } = open.swap_remove(pick);
        let c = candidate.expect("picked has candidate");

        let (left_rows, right_rows) = grower.partition(rows, c.feature, c.threshold);
        let left_stats = NodeStats::collect(grower.targets, &left_rows);
        let right_stats = NodeStats::collect(grower.targets, &right_rows);
        let left_idx = nodes.len();
        nodes.push(leaf_node(&left_stats, grower.lambda));
        let right_idx = nodes.len();
        nodes.push(leaf_node(&right_stats, grower.lambda));

        let (n, value, sse) = match &nodes[node] {
            Node::Leaf { value, n, sse } => (*n, *value, *sse),
            Node::Split { .. } => unreachable!("open leaves are leaves"),
        };
        nodes[node] = Node::Split {
            feature: c.feature,
            threshold: c.threshold,
            left: left_idx as u32,
            right: right_idx as u32,
            n,
            value,
            sse,
            gain: c.gain,
        };
        n_leaves += 1;

        let left_candidate = grower.find_best_split(&left_rows, &left_stats, rng.as_deref_mut());
        open.push(Open { node: left_idx, rows: left_rows, candidate: left_candidate, seq: next_seq });
        next_seq += 1;
        let right_candidate = grower.find_best_split(&right_rows, &right_stats, rng.as_deref_mut());
        open.push(Open { node: right_idx, rows: right_rows, candidate: right_candidate, seq: next_seq });
        next_seq += 1;
    }
}

// ---------------------------------------------------------------------------
// Public CART operations
// ---------------------------------------------------------------------------

/// Best admissible split over the whole matrix, or `None` when no split has
/// positive gain or the node is too small to produce two admissible
/// children. Ties break to the lowest feature index, then lowest threshold.
pub fn best_split<S: Scalar>(
    matrix: &FeatureMatrix<S>,
    features: &[usize],
    params: &TreeParams,
) -> Result<Option<SplitCandidate<S>>> {
    params.validate()?;
    if matrix.n_rows() == 0 {
        return Err(Error::Empty("best_split requires rows"));
    }
    let cols = matrix.columns();
    let rows: Vec<u32> = (0..matrix.n_rows() as u32).collect();
    let grower = Grower {
        cols: &cols,
        targets: &matrix.targets,
        features,
        min_child_weight: params.min_child_weight,
        split_mode: params.split_mode,
        bins: params.histogram_bins,
        lambda: S::zero(),
        gamma: S::zero(),
        gain_kind: GainKind::CartSse,
        random_thresholds: false,
        parallel: true,
    };
    let stats = NodeStats::collect(&matrix.targets, &rows);
    Ok(grower.find_best_split(&rows, &stats, None))
}

/// Grow a CART tree: greedy depth-first growth until max_depth,
/// min_child_weight, or no positive-gain split remains; leaves store the
/// region means.
pub fn fit_tree<S: Scalar>(matrix: &FeatureMatrix<S>, params: &TreeParams) -> Result<RegressionTree<S>> {
    params.validate()?;
    if matrix.n_rows() == 0 {
        return Err(Error::Empty("fit_tree requires at least one row"));
    }
    let cols = matrix.columns();
    let features: Vec<usize> = (0..matrix.n_features()).collect();
    let rows: Vec<u32> = (0..matrix.n_rows() as u32).collect();
    Ok(grow_tree(
        GrowSpec {
            cols: &cols,
            targets: &matrix.targets,
            rows,
            features: &features,
            max_depth: params.max_depth,
            max_leaves: usize::MAX,
            leafwise: false,
            min_child_weight: params.min_child_weight,
            split_mode: params.split_mode,
            bins: params.histogram_bins,
            lambda: S::zero(),
            gamma: S::zero(),
            gain_kind: GainKind::CartSse,
            random_thresholds: false,
            parallel: true,
        },
        None,
    ))
}

/// Route a feature vector to its leaf mean.
pub fn predict_tree<S: Scalar>(tree: &RegressionTree<S>, x: &[S]) -> Result<S> {
    tree.predict(x)
}

// ---------------------------------------------------------------------------
// Cost-complexity pruning
// ---------------------------------------------------------------------------

/// Subtree leaf-SSE sum and leaf count per node.
fn subtree_aggregates<S: Scalar>(nodes: &[Node<S>]) -> Vec<(S, usize)> {
    fn walk<S: Scalar>(nodes: &[Node<S>], idx: usize, out: &mut Vec<(S, usize)>) -> (S, usize) {
        let agg = match &nodes[idx] {
            Node::Leaf { sse, .. } => (*sse, 1),
            Node::Split { left, right, .. } => {
                let l = walk(nodes, *left as usize, out);
                let r = walk(nodes, *right as usize, out);
                (l.0 + r.0, l.1 + r.1)
            }
        };
        out[idx] = agg;
        agg
    }
    let mut out = vec![(S::zero(), 0usize); nodes.len()];
    walk(nodes, 0, &mut out);
    out
}

/// Rebuild a tree, collapsing every node in `collapse` (and everything
/// below it) into a leaf.
fn collapse_nodes<S: Scalar>(tree: &RegressionTree<S>, collapse: &[bool]) -> RegressionTree<S> {
    fn copy<S: Scalar>(src: &[Node<S>], idx: usize, collapse: &[bool], dst: &mut Vec<Node<S>>) -> u32 {
        let out_idx = dst.len() as u32;
        match &src[idx] {
            Node::Leaf { value, n, sse } => {
                dst.push(Node::Leaf { value: *value, n: *n, sse: *sse });
            }
            Node::Split { value, n, sse, feature, threshold, gain, left, right } => {
                if collapse[idx] {
                    dst.push(Node::Leaf { value: *value, n: *n, sse: *sse });
                } else {
                    dst.push(Node::Split {
                        feature: *feature,
                        threshold: *threshold,
                        left: 0,
                        right: 0,
                        n: *n,
                        value: *value,
                        sse: *sse,
                        gain: *gain,
                    });
                    let l = copy(src, *left as usize, collapse, dst);
                    let r = copy(src, *right as usize, collapse, dst);
                    match &mut dst[out_idx as usize] {
                        Node::Split { left, right, .. } => {
                            *left = l;
                            *right = r;
                        }
                        Node::Leaf { .. } => unreachable!(),
                    }
                }
            }
        }
        out_idx
    }
    let mut nodes = Vec::new();
    copy(&tree.nodes, 0, collapse, &mut nodes);
    RegressionTree { version: tree.version, n_features: tree.n_features, nodes }
}

/// The nested weakest-link sequence from the full tree down to the root.
fn weakest_link_sequence<S: Scalar>(tree: &RegressionTree<S>) -> Vec<RegressionTree<S>> {
    let mut sequence = vec![tree.clone()];
    loop {
        let current = sequence.last().expect("sequence starts non-empty");
        if matches!(current.nodes[0], Node::Leaf { .. }) {
            break;
        }
        let aggregates = subtree_aggregates(&current.nodes);
        // link strength: collapsing node t costs (SSE(t) - SSE_subtree(t))
        // spread over the leaves it removes
        let mut min_g: Option<S> = None;
        let mut gs = vec![None; current.nodes.len()];
        for (idx, node) in current.nodes.iter().enumerate() {
            if let Node::Split { sse, .. } = node {
                let (sub_sse, sub_leaves) = aggregates[idx];
                let g = (*sse - sub_sse) / S::from_count(sub_leaves - 1);
                gs[idx] = Some(g);
                if min_g.is_none_or(|m| g < m) {
                    min_g = Some(g);
                }
            }
        }
        let min_g = min_g.expect("internal node exists");
        let collapse: Vec<bool> = gs.iter().map(|g| *g == Some(min_g)).collect();
        sequence.push(collapse_nodes(current, &collapse));
    }
    sequence
}

/// Cost-complexity pruning: the subtree minimizing
/// `C_alpha = sum of leaf SSE + alpha * leaf count`, selected over the
/// weakest-link sequence. Ties favor the smaller tree.
pub fn prune_ccp<S: Scalar>(tree: &RegressionTree<S>, alpha: S) -> Result<RegressionTree<S>> {
    if alpha < S::zero() || !alpha.is_finite() {
        return Err(Error::InvalidParam("alpha must be nonnegative and finite".into()));
    }
    let sequence = weakest_link_sequence(tree);
    let mut best: Option<(S, usize, usize)> = None; // (cost, leaves, index)
    for (i, candidate) in sequence.iter().enumerate() {
        let leaves = candidate.n_leaves();
        let cost = candidate.training_sse() + alpha * S::from_count(leaves);
        let better = match &best {
            None => true,
            Some((bc, bl, _)) => cost < *bc || (cost == *bc && leaves < *bl),
        };
        if better {
            best = Some((cost, leaves, i));
        }
    }
    let (_, _, idx) = best.expect("sequence non-empty");
    Ok(sequence.into_iter().nth(idx).expect("index in range"))
}
