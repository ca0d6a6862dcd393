//! Gradient-boosted regression trees with squared loss: pseudo-residual
//! fitting, shrinkage, L2 regularization, a minimum-gain gate, histogram
//! splits, depth-wise and leaf-wise growth, early stopping and gain-based
//! feature importance.
//!
//! With squared loss the hessians are identically 1, so leaf weights reduce
//! to `sum(residuals) / (count + lambda)` and the regularized split gain to
//! `(G_L^2/(N_L+l) + G_R^2/(N_R+l) - G^2/(N+l)) / 2`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::metrics::{mean, rmse};
use crate::scalar::Scalar;
use crate::tree::{grow_tree, GainKind, GrowSpec, Node, RegressionTree, SplitMode};
use crate::util::{derive_seed, sample_without_replacement};

pub const GBT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Growth {
    /// Grow every branch to `max_depth`.
    Depthwise,
    /// Repeatedly split the open leaf with the largest gain until
    /// `max_leaves`.
    Leafwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub num_rounds: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum split gain; candidates below it are not made.
    pub gamma: f64,
    pub growth: Growth,
    pub max_depth: usize,
    pub max_leaves: usize,
    pub min_child_weight: usize,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub split_mode: SplitMode,
    pub histogram_bins: usize,
    /// Stop when validation RMSE has not improved for this many rounds.
    pub early_stopping_patience: usize,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            num_rounds: 200,
            learning_rate: 0.1,
            lambda: 1.0,
            gamma: 0.0,
            growth: Growth::Depthwise,
            max_depth: 6,
            max_leaves: 64,
            min_child_weight: 20,
            subsample: 1.0,
            colsample_bytree: 1.0,
            split_mode: SplitMode::Histogram,
            histogram_bins: 256,
            early_stopping_patience: 50,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidParam("learning_rate must be in (0, 1]".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidParam("lambda must be nonnegative".into()));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidParam("gamma must be nonnegative".into()));
        }
        if self.num_rounds < 1 {
            return Err(Error::InvalidParam("num_rounds must be at least 1".into()));
        }
        if self.max_depth < 1 {
            return Err(Error::InvalidParam("max_depth must be at least 1".into()));
        }
        if self.max_leaves < 2 {
            return Err(Error::InvalidParam("max_leaves must be at least 2".into()));
        }
        if self.min_child_weight < 1 {
            return Err(Error::InvalidParam("min_child_weight must be at least 1".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::InvalidParam("subsample must be in (0, 1]".into()));
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return Err(Error::InvalidParam("colsample_bytree must be in (0, 1]".into()));
        }
        if self.early_stopping_patience < 1 {
            return Err(Error::InvalidParam("early_stopping_patience must be at least 1".into()));
        }
        if self.histogram_bins < 2 {
            return Err(Error::InvalidParam("histogram_bins must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct RoundLog<S: Scalar> {
    pub round: usize,
    pub train_rmse: S,
    pub valid_rmse: Option<S>,
}

/// A fitted boosted model. `trees` holds the first `best_round` trees;
/// the log covers every round actually trained, including those discarded
/// by early stopping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct BoostedModel<S: Scalar> {
    pub version: u32,
    pub params: GbtParams,
    pub base_score: S,
    pub best_round: usize,
    pub schema_hash: u64,
    n_features: usize,
    trees: Vec<RegressionTree<S>>,
    pub log: Vec<RoundLog<S>>,
}

/// Fit by gradient boosting: each round grows one tree on the current
/// pseudo-residuals and advances predictions by `learning_rate` times the
/// leaf weights. With a validation set, training stops once its RMSE has
/// not improved for `early_stopping_patience` rounds and `best_round` is
/// the argmin of the validation log.
pub fn fit_gbt<S: Scalar>(
    train: &FeatureMatrix<S>,
    valid: Option<&FeatureMatrix<S>>,
    params: &GbtParams,
) -> Result<BoostedModel<S>> {
    params.validate()?;
    let n = train.n_rows();
    if n == 0 {
        return Err(Error::Empty("fit_gbt requires training rows"));
    }
    if let Some(v) = valid {
        if v.schema != train.schema {
            return Err(Error::SchemaMismatch { expected: train.n_features(), got: v.n_features() });
        }
    }
    // an empty validation set means no early stopping
    let valid = valid.filter(|v| v.n_rows() > 0);

    let p = train.n_features();
    let cols = train.columns();
    let eta = S::from_f64(params.learning_rate);
    let lambda = S::from_f64(params.lambda);
    let gamma = S::from_f64(params.gamma);
    let n_row_sample = ((params.subsample * n as f64).floor() as usize).max(1);
    let n_col_sample = ((params.colsample_bytree * p as f64).ceil() as usize).clamp(1, p);
    let all_features: Vec<usize> = (0..p).collect();

    let base_score = mean(&train.targets);
    let mut pred_train = vec![base_score; n];
    let mut pred_valid: Option<Vec<S>> = valid.map(|v| vec![base_score; v.n_rows()]);

    let mut trees: Vec<RegressionTree<S>> = Vec::new();
    let mut log: Vec<RoundLog<S>> = Vec::new();
    let mut best: Option<(S, usize)> = None;
    let mut rounds_since_best = 0usize;

    for round in 1..=params.num_rounds {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, round as u64));
        let residuals: Vec<S> =
            train.targets.iter().zip(&pred_train).map(|(&y, &f)| y - f).collect();

        let rows: Vec<u32> = if params.subsample < 1.0 {
            sample_without_replacement(&mut rng, n, n_row_sample)
        } else {
            (0..n as u32).collect()
        };
        let features: Vec<usize> = if params.colsample_bytree < 1.0 {
            sample_without_replacement(&mut rng, p, n_col_sample)
                .into_iter()
                .map(|f| f as usize)
                .collect()
        } else {
            all_features.clone()
        };

        let tree = grow_tree(
            GrowSpec {
                cols: &cols,
                targets: &residuals,
                rows,
                features: &features,
                max_depth: match params.growth {
                    Growth::Depthwise => params.max_depth,
                    Growth::Leafwise => usize::MAX,
                },
                max_leaves: match params.growth {
                    Growth::Depthwise => usize::MAX,
                    Growth::Leafwise => params.max_leaves,
                },
                leafwise: params.growth == Growth::Leafwise,
                min_child_weight: params.min_child_weight,
                split_mode: params.split_mode,
                bins: params.histogram_bins,
                lambda,
                gamma,
                gain_kind: GainKind::Regularized,
                random_thresholds: false,
                parallel: true,
            },
            None,
        );

        for (i, pred) in pred_train.iter_mut().enumerate() {
            *pred += eta * tree.predict_row(train.row(i));
        }
        let train_rmse = rmse(&pred_train, &train.targets)?;
        let valid_rmse = match (valid, pred_valid.as_mut()) {
            (Some(v), Some(pv)) => {
                for (i, pred) in pv.iter_mut().enumerate() {
                    *pred += eta * tree.predict_row(v.row(i));
                }
                Some(rmse(pv, &v.targets)?)
            }
            _ => None,
        };
        log.push(RoundLog { round, train_rmse, valid_rmse });
        trees.push(tree);

        if let Some(vr) = valid_rmse {
            if best.is_none_or(|(b, _)| vr < b) {
                best = Some((vr, round));
                rounds_since_best = 0;
            } else {
                rounds_since_best += 1;
                if rounds_since_best >= params.early_stopping_patience {
                    break;
                }
            }
        }
    }

    let best_round = match best {
        Some((_, round)) => round,
        None => trees.len(),
    };
    trees.truncate(best_round);

    Ok(BoostedModel {
        version: GBT_FORMAT_VERSION,
        params: params.clone(),
        base_score,
        best_round,
        schema_hash: train.schema.schema_hash(),
        n_features: p,
        trees,
        log,
    })
}

impl<S: Scalar> BoostedModel<S> {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[RegressionTree<S>] {
        &self.trees
    }

    /// base_score + learning_rate * sum of tree outputs, clamped at zero
    /// from below (durations are nonnegative).
    pub fn predict(&self, x: &[S]) -> Result<S> {
        if x.len() != self.n_features {
            return Err(Error::SchemaMismatch { expected: self.n_features, got: x.len() });
        }
        Ok(self.predict_row(x))
    }

    pub(crate) fn predict_row(&self, x: &[S]) -> S {
        let eta = S::from_f64(self.params.learning_rate);
        let mut acc = self.base_score;
        for tree in &self.trees {
            acc += eta * tree.predict_row(x);
        }
        acc.max(S::zero())
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
        if model.version != GBT_FORMAT_VERSION {
            return Err(Error::InvalidParam(format!(
                "unsupported model format version {}",
                model.version
            )));
        }
        Ok(model)
    }

    /// Training log CSV: `round,train_rmse,valid_rmse`.
    pub fn write_training_log<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["round", "train_rmse", "valid_rmse"])?;
        for entry in &self.log {
            wtr.write_record([
                entry.round.to_string(),
                entry.train_rmse.to_string(),
                entry.valid_rmse.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceEntry {
    pub feature: usize,
    pub gain: f64,
    pub splits: u64,
    /// Fraction of the total gain; shares sum to 1 over used features.
    pub share: f64,
}

/// Per-feature total realized split gain (and split count) across the kept
/// trees. Features that never split do not appear.
pub fn feature_importance<S: Scalar>(model: &BoostedModel<S>) -> Vec<ImportanceEntry> {
    let mut gains = vec![0.0f64; model.n_features];
    let mut splits = vec![0u64; model.n_features];
    for tree in model.trees() {
        for node in tree.nodes() {
            if let Node::Split { feature, gain, .. } = node {
                gains[*feature] += gain.as_f64();
                splits[*feature] += 1;
            }
        }
    }
    let total: f64 = gains.iter().sum();
    (0..model.n_features)
        .filter(|&f| splits[f] > 0)
        .map(|f| ImportanceEntry {
            feature: f,
            gain: gains[f],
            splits: splits[f],
            share: if total > 0.0 { gains[f] / total } else { 0.0 },
        })
        .collect()
}
