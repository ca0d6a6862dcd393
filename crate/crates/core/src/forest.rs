//! Bagged tree ensembles with averaged prediction: Random Forest
//! (bootstrap rows plus per-tree feature subsampling) and Extra Trees
//! (random cut points on the full row set).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::scalar::Scalar;
use crate::tree::{grow_tree, GainKind, GrowSpec, RegressionTree, TreeParams};
use crate::util::{derive_seed, sample_with_replacement, sample_without_replacement};

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestKind {
    RandomForest,
    ExtraTrees,
}

impl ForestKind {
    pub fn label(&self) -> &'static str {
        match self {
            ForestKind::RandomForest => "random_forest",
            ForestKind::ExtraTrees => "extra_trees",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub kind: ForestKind,
    pub n_trees: usize,
    /// Row fraction per tree (Random Forest only). Rows are drawn with
    /// replacement unless `bootstrap` is off.
    pub subsample: f64,
    /// Draw rows with replacement. Off gives a without-replacement sample;
    /// with subsample = 1.0 that is the plain full-sample mode.
    pub bootstrap: bool,
    /// Fix the bootstrap size at floor(0.632 n) regardless of `subsample`.
    pub exact_632: bool,
    pub colsample_bytree: f64,
    pub tree: TreeParams,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            kind: ForestKind::RandomForest,
            n_trees: 40,
            subsample: 0.9,
            bootstrap: true,
            exact_632: false,
            colsample_bytree: 0.8,
            tree: TreeParams { max_depth: 12, ..TreeParams::default() },
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        self.tree.validate()?;
        if self.n_trees < 1 {
            return Err(Error::InvalidParam("n_trees must be at least 1".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::InvalidParam("subsample must be in (0, 1]".into()));
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return Err(Error::InvalidParam("colsample_bytree must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Bagged ensemble: B trees, each with its feature subset, combined by the
/// arithmetic mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct BaggedEnsemble<S: Scalar> {
    pub version: u32,
    pub params: ForestParams,
    pub schema_hash: u64,
    n_features: usize,
    feature_subsets: Vec<Vec<usize>>,
    trees: Vec<RegressionTree<S>>,
}

/// Train a bagged ensemble. Trees are independent and train in parallel
/// with per-tree generators derived from the master seed, so the schedule
/// cannot change the result.
pub fn fit_forest<S: Scalar>(matrix: &FeatureMatrix<S>, params: &ForestParams) -> Result<BaggedEnsemble<S>> {
    params.validate()?;
    let n = matrix.n_rows();
    if n == 0 {
        return Err(Error::Empty("fit_forest requires training rows"));
    }
    let p = matrix.n_features();
    let cols = matrix.columns();
    let n_feature_sample = ((params.colsample_bytree * p as f64).ceil() as usize).clamp(1, p);

    let fitted: Vec<(Vec<usize>, RegressionTree<S>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, b as u64));
            let features: Vec<usize> = sample_without_replacement(&mut rng, p, n_feature_sample)
                .into_iter()
                .map(|f| f as usize)
                .collect();
            let rows = match params.kind {
                ForestKind::RandomForest => {
                    let count = if params.exact_632 {
                        ((0.632 * n as f64).floor() as usize).max(1)
                    } else {
                        ((params.subsample * n as f64).floor() as usize).max(1)
                    };
                    if params.bootstrap {
                        sample_with_replacement(&mut rng, n, count)
                    } else {
                        sample_without_replacement(&mut rng, n, count)
                    }
                }
                // Extra Trees uses the full row set; its randomness lives in
                // the cut points
                ForestKind::ExtraTrees => (0..n as u32).collect(),
            };
            let tree = grow_tree(
                GrowSpec {
                    cols: &cols,
                    targets: &matrix.targets,
                    rows,
                    features: &features,
                    max_depth: params.tree.max_depth,
                    max_leaves: usize::MAX,
                    leafwise: false,
                    min_child_weight: params.tree.min_child_weight,
                    split_mode: params.tree.split_mode,
                    bins: params.tree.histogram_bins,
                    lambda: S::zero(),
                    gamma: S::zero(),
                    gain_kind: GainKind::CartSse,
                    random_thresholds: params.kind == ForestKind::ExtraTrees,
                    parallel: false,
                },
                (params.kind == ForestKind::ExtraTrees).then_some(&mut rng),
            );
            (features, tree)
        })
        .collect();

    let (feature_subsets, trees): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    Ok(BaggedEnsemble {
        version: FOREST_FORMAT_VERSION,
        params: params.clone(),
        schema_hash: matrix.schema.schema_hash(),
        n_features: p,
        feature_subsets,
        trees,
    })
}

impl<S: Scalar> BaggedEnsemble<S> {
    pub fn kind(&self) -> ForestKind {
        self.params.kind
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[RegressionTree<S>] {
        &self.trees
    }

    pub fn feature_subsets(&self) -> &[Vec<usize>] {
        &self.feature_subsets
    }

    /// Arithmetic mean of the tree outputs.
    pub fn predict(&self, x: &[S]) -> Result<S> {
        if x.len() != self.n_features {
            return Err(Error::SchemaMismatch { expected: self.n_features, got: x.len() });
        }
        Ok(self.predict_row(x))
    }

    pub(crate) fn predict_row(&self, x: &[S]) -> S {
        let sum: S = self.trees.iter().map(|t| t.predict_row(x)).sum();
        sum / S::from_count(self.trees.len())
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
        let model: Self = serde_json::from_str(json)?;
        if model.version != FOREST_FORMAT_VERSION {
            return Err(Error::InvalidParam(format!(
                "unsupported ensemble format version {}",
                model.version
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureSchema;
    use crate::tree::{fit_tree, Node};

    fn matrix(cols: &[&[f64]], y: &[f64]) -> FeatureMatrix<f64> {
        let catalog = ["hour", "snowfall", "temperature", "rainfall"];
        let schema = FeatureSchema::from_names(&catalog[..cols.len()]).unwrap();
        let n = y.len();
        let mut data = Vec::with_capacity(n * cols.len());
        for i in 0..n {
            for col in cols {
                data.push(col[i]);
            }
        }
        FeatureMatrix { schema, data, targets: y.to_vec(), row_ids: (0..n as u64).collect() }
    }

    fn noisy_matrix(n: usize) -> FeatureMatrix<f64> {
        let a: Vec<f64> = (0..n).map(|i| (i % 17) as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 13) as f64).collect();
        let c: Vec<f64> = (0..n).map(|i| ((i * 3) % 5) as f64).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 2.0 * a[i] + b[i] * b[i] * 0.3 - c[i] + ((i * 31) % 11) as f64 * 0.5)
            .collect();
        matrix(&[&a, &b, &c], &y)
    }

    #[test]
    fn full_sample_single_tree_matches_cart() {
        let m = noisy_matrix(60);
        let params = ForestParams {
            kind: ForestKind::RandomForest,
            n_trees: 1,
            subsample: 1.0,
            bootstrap: false,
            exact_632: false,
            colsample_bytree: 1.0,
            tree: TreeParams { max_depth: 4, min_child_weight: 2, ..TreeParams::default() },
            seed: 3,
        };
        let forest = fit_forest(&m, &params).unwrap();
        let cart = fit_tree(&m, &params.tree).unwrap();
        for i in 0..m.n_rows() {
            assert_eq!(forest.predict(m.row(i)).unwrap(), cart.predict(m.row(i)).unwrap());
        }
    }

    #[test]
    fn ensemble_prediction_is_the_mean() {
        // three constant stumps predicting 10, 20, 30 average to 20
        let make = |c: f64| {
            let m = matrix(&[&[0.0, 1.0]], &[c, c]);
            fit_tree(&m, &TreeParams::default()).unwrap()
        };
        let ensemble = BaggedEnsemble {
            version: FOREST_FORMAT_VERSION,
            params: ForestParams::default(),
            schema_hash: 0,
            n_features: 1,
            feature_subsets: vec![vec![0]; 3],
            trees: vec![make(10.0), make(20.0), make(30.0)],
        };
        assert_eq!(ensemble.predict(&[0.5]).unwrap(), 20.0);
    }

    #[test]
    fn prediction_matches_per_tree_average() {
        let m = noisy_matrix(80);
        let params = ForestParams { n_trees: 7, seed: 11, ..ForestParams::default() };
        let forest = fit_forest(&m, &params).unwrap();
        let x = m.row(5);
        let manual: f64 =
            forest.trees().iter().map(|t| t.predict(x).unwrap()).sum::<f64>() / forest.n_trees() as f64;
        assert!((forest.predict(x).unwrap() - manual).abs() < 1e-12);
    }

    #[test]
    fn fixed_seed_serializes_identically() {
        let m = noisy_matrix(50);
        for kind in [ForestKind::RandomForest, ForestKind::ExtraTrees] {
            let params = ForestParams { kind, n_trees: 5, seed: 42, ..ForestParams::default() };
            let a = fit_forest(&m, &params).unwrap().to_json().unwrap();
            let b = fit_forest(&m, &params).unwrap().to_json().unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn extra_trees_thresholds_strictly_inside_node_range() {
        let m = noisy_matrix(64);
        let params = ForestParams {
            kind: ForestKind::ExtraTrees,
            n_trees: 12,
            colsample_bytree: 1.0,
            tree: TreeParams { max_depth: 5, min_child_weight: 1, ..TreeParams::default() },
            seed: 9,
            ..ForestParams::default()
        };
        let forest = fit_forest(&m, &params).unwrap();
        let cols = m.columns();

        fn check(nodes: &[Node<f64>], idx: usize, rows: &[u32], cols: &[Vec<f64>]) {
            if let Node::Split { feature, threshold, left, right, .. } = &nodes[idx] {
                let values: Vec<f64> = rows.iter().map(|&r| cols[*feature][r as usize]).collect();
                let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(*threshold > min && *threshold < max, "threshold {threshold} not in ({min}, {max})");
                let (l, r): (Vec<u32>, Vec<u32>) =
                    rows.iter().partition(|&&r| cols[*feature][r as usize] <= *threshold);
                check(nodes, *left as usize, &l, cols);
                check(nodes, *right as usize, &r, cols);
            }
        }
        for tree in forest.trees() {
            let rows: Vec<u32> = (0..m.n_rows() as u32).collect();
            check(tree.nodes(), 0, &rows, &cols);
        }
    }

    #[test]
    fn feature_subsets_differ_across_trees() {
        let m = noisy_matrix(40);
        let params = ForestParams {
            n_trees: 8,
            colsample_bytree: 0.5,
            seed: 5,
            ..ForestParams::default()
        };
        let forest = fit_forest(&m, &params).unwrap();
        let first = &forest.feature_subsets()[0];
        assert!(
            forest.feature_subsets().iter().any(|s| s != first),
            "at least two trees should draw different feature subsets"
        );
        for subset in forest.feature_subsets() {
            assert_eq!(subset.len(), 2); // ceil(0.5 * 3)
            assert!(subset.iter().all(|f| *f < 3));
        }
    }

    #[test]
    fn exact_632_mode_uses_that_many_rows() {
        let m = noisy_matrix(100);
        let params = ForestParams {
            exact_632: true,
            n_trees: 2,
            tree: TreeParams { max_depth: 1, ..TreeParams::default() },
            seed: 1,
            ..ForestParams::default()
        };
        let forest = fit_forest(&m, &params).unwrap();
        for tree in forest.trees() {
            match tree.nodes()[0] {
                Node::Split { n, .. } | Node::Leaf { n, .. } => assert_eq!(n, 63),
            }
        }
    }

    #[test]
    fn empty_input_errors() {
        let m = matrix(&[&[]], &[]);
        assert!(fit_forest(&m, &ForestParams::default()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = noisy_matrix(30);
        let params = ForestParams { n_trees: 3, seed: 2, ..ForestParams::default() };
        let forest = fit_forest(&m, &params).unwrap();
        let back = BaggedEnsemble::<f64>::from_json(&forest.to_json().unwrap()).unwrap();
        assert_eq!(back, forest);
    }
}
