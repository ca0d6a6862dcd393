//! Model configuration plumbing and step-wise grid search: within a step
//! all combinations are scored by validation RMSE, the winners are fixed
//! and the next step searches conditioned on them.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boost::{fit_gbt, BoostedModel, GbtParams, Growth};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::forest::{fit_forest, BaggedEnsemble, ForestKind, ForestParams};
use crate::metrics::rmse;
use crate::scalar::Scalar;
use crate::tree::{fit_tree, RegressionTree, SplitMode, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cart,
    RandomForest,
    ExtraTrees,
    GbtDepthwise,
    GbtLeafwise,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Cart,
        ModelKind::RandomForest,
        ModelKind::ExtraTrees,
        ModelKind::GbtDepthwise,
        ModelKind::GbtLeafwise,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Cart => "cart",
            ModelKind::RandomForest => "random_forest",
            ModelKind::ExtraTrees => "extra_trees",
            ModelKind::GbtDepthwise => "gbt_depthwise",
            ModelKind::GbtLeafwise => "gbt_leafwise",
        }
    }

    pub fn parse(label: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label() == label)
            .ok_or_else(|| Error::InvalidParam(format!("unknown model kind `{label}`")))
    }
}

/// A trainable model configuration; the uniform surface the grid search and
/// the harness set parameters on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum ModelConfig {
    Cart(TreeParams),
    Forest(ForestParams),
    Gbt(GbtParams),
}

impl ModelConfig {
    pub fn for_kind(kind: ModelKind, seed: u64) -> Self {
        match kind {
            ModelKind::Cart => ModelConfig::Cart(TreeParams { max_depth: 12, min_child_weight: 20, ..TreeParams::default() }),
            ModelKind::RandomForest => {
                ModelConfig::Forest(ForestParams { kind: ForestKind::RandomForest, seed, ..ForestParams::default() })
            }
            ModelKind::ExtraTrees => ModelConfig::Forest(ForestParams {
                kind: ForestKind::ExtraTrees,
                colsample_bytree: 0.8,
                seed,
                ..ForestParams::default()
            }),
            ModelKind::GbtDepthwise => ModelConfig::Gbt(GbtParams { growth: Growth::Depthwise, seed, ..GbtParams::default() }),
            ModelKind::GbtLeafwise => ModelConfig::Gbt(GbtParams { growth: Growth::Leafwise, seed, ..GbtParams::default() }),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Cart(_) => ModelKind::Cart,
            ModelConfig::Forest(p) => match p.kind {
                ForestKind::RandomForest => ModelKind::RandomForest,
                ForestKind::ExtraTrees => ModelKind::ExtraTrees,
            },
            ModelConfig::Gbt(p) => match p.growth {
                Growth::Depthwise => ModelKind::GbtDepthwise,
                Growth::Leafwise => ModelKind::GbtLeafwise,
            },
        }
    }

    /// Set a named parameter. Integer-valued fields round the value;
    /// unknown names for the model kind are an error.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let as_usize = || value.round() as usize;
        let bad = || Error::InvalidParam(format!("parameter `{key}` does not apply to this model"));
        match self {
            ModelConfig::Cart(p) => match key {
                "max_depth" => p.max_depth = as_usize(),
                "min_child_weight" => p.min_child_weight = as_usize(),
                "histogram_bins" => p.histogram_bins = as_usize(),
                _ => return Err(bad()),
            },
            ModelConfig::Forest(p) => match key {
                "n_trees" => p.n_trees = as_usize(),
                "subsample" => p.subsample = value,
                "colsample_bytree" => p.colsample_bytree = value,
                "max_depth" => p.tree.max_depth = as_usize(),
                "min_child_weight" => p.tree.min_child_weight = as_usize(),
                "histogram_bins" => p.tree.histogram_bins = as_usize(),
                "seed" => p.seed = value.round() as u64,
                _ => return Err(bad()),
            },
            ModelConfig::Gbt(p) => match key {
                "num_rounds" => p.num_rounds = as_usize(),
                "learning_rate" => p.learning_rate = value,
                "lambda" => p.lambda = value,
                "gamma" => p.gamma = value,
                "max_depth" => p.max_depth = as_usize(),
                "max_leaves" => p.max_leaves = as_usize(),
                "min_child_weight" => p.min_child_weight = as_usize(),
                "subsample" => p.subsample = value,
                "colsample_bytree" => p.colsample_bytree = value,
                "early_stopping_patience" => p.early_stopping_patience = as_usize(),
                "histogram_bins" => p.histogram_bins = as_usize(),
                "seed" => p.seed = value.round() as u64,
                _ => return Err(bad()),
            },
        }
        Ok(())
    }

    pub fn set_split_mode(&mut self, mode: SplitMode) {
        match self {
            ModelConfig::Cart(p) => p.split_mode = mode,
            ModelConfig::Forest(p) => p.tree.split_mode = mode,
            ModelConfig::Gbt(p) => p.split_mode = mode,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ModelConfig::Cart(_) => {}
            ModelConfig::Forest(p) => p.seed = seed,
            ModelConfig::Gbt(p) => p.seed = seed,
        }
    }

    pub fn train<S: Scalar>(
        &self,
        train: &FeatureMatrix<S>,
        valid: Option<&FeatureMatrix<S>>,
    ) -> Result<TrainedModel<S>> {
        Ok(match self {
            ModelConfig::Cart(p) => TrainedModel::Cart(fit_tree(train, p)?),
            ModelConfig::Forest(p) => TrainedModel::Forest(fit_forest(train, p)?),
            ModelConfig::Gbt(p) => TrainedModel::Gbt(fit_gbt(train, valid, p)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub enum TrainedModel<S: Scalar> {
    Cart(RegressionTree<S>),
    Forest(BaggedEnsemble<S>),
    Gbt(BoostedModel<S>),
}

impl<S: Scalar> TrainedModel<S> {
    pub fn predict(&self, x: &[S]) -> Result<S> {
        match self {
            TrainedModel::Cart(m) => m.predict(x),
            TrainedModel::Forest(m) => m.predict(x),
            TrainedModel::Gbt(m) => m.predict(x),
        }
    }

    pub fn predict_batch(&self, matrix: &FeatureMatrix<S>) -> Result<Vec<S>> {
        match self {
            TrainedModel::Cart(m) => m.predict_batch(matrix),
            TrainedModel::Forest(m) => m.predict_batch(matrix),
            TrainedModel::Gbt(m) => m.predict_batch(matrix),
        }
    }

    /// Trees in the fitted model (1 for CART).
    pub fn n_trees(&self) -> usize {
        match self {
            TrainedModel::Cart(_) => 1,
            TrainedModel::Forest(m) => m.n_trees(),
            TrainedModel::Gbt(m) => m.n_trees(),
        }
    }
}

/// One step of the step-wise search: the parameters searched jointly with
/// their candidate lists, in enumeration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStep {
    pub params: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub steps: Vec<GridStep>,
}

impl ParamGrid {
    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::InvalidParam("grid has no steps".into()));
        }
        for step in &self.steps {
            if step.params.is_empty() {
                return Err(Error::InvalidParam("grid step has no parameters".into()));
            }
            for (name, values) in &step.params {
                if values.is_empty() {
                    return Err(Error::InvalidParam(format!("empty candidate list for `{name}`")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridCell {
    pub step: usize,
    pub settings: Vec<(String, f64)>,
    pub valid_rmse: Option<f64>,
    pub error: Option<String>,
    /// Matched the winner's RMSE but was not first in enumeration order.
    pub tie_with_winner: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSearchResult {
    pub best: ModelConfig,
    pub best_rmse: f64,
    pub cells: Vec<GridCell>,
}

impl GridSearchResult {
    /// Results table CSV: `step,settings,valid_rmse,error,tie`.
    pub fn write_cells_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["step", "settings", "valid_rmse", "error", "tie"])?;
        for cell in &self.cells {
            let settings = cell
                .settings
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(";");
            wtr.write_record([
                cell.step.to_string(),
                settings,
                cell.valid_rmse.map(|v| v.to_string()).unwrap_or_default(),
                cell.error.clone().unwrap_or_default(),
                if cell.tie_with_winner { "tie".into() } else { String::new() },
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn cartesian(step: &GridStep) -> Vec<Vec<(String, f64)>> {
    let mut combos: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for (name, values) in &step.params {
        let mut next = Vec::with_capacity(combos.len() * values.len());
        for combo in &combos {
            for v in values {
                let mut c = combo.clone();
                c.push((name.clone(), *v));
                next.push(c);
            }
        }
        combos = next;
    }
    combos
}

/// Step-wise grid search. Within a step every combination trains on the
/// training matrix and is scored by RMSE on the validation matrix; training
/// errors are recorded per cell and skipped. Ties go to the first cell in
/// enumeration order.
pub fn grid_search<S: Scalar>(
    base: ModelConfig,
    grid: &ParamGrid,
    train: &FeatureMatrix<S>,
    valid: &FeatureMatrix<S>,
) -> Result<GridSearchResult> {
    grid.validate()?;
    let mut current = base;
    let mut cells = Vec::new();
    let mut best_rmse = f64::NAN;

    for (step_idx, step) in grid.steps.iter().enumerate() {
        let combos = cartesian(step);
        type CellOutcome = (Vec<(String, f64)>, std::result::Result<f64, String>);
        let evaluated: Vec<CellOutcome> = combos
            .into_par_iter()
            .map(|settings| {
                let outcome = (|| -> Result<f64> {
                    let mut config = current.clone();
                    for (key, value) in &settings {
                        config.set(key, *value)?;
                    }
                    let model = config.train(train, Some(valid))?;
                    let preds = model.predict_batch(valid)?;
                    Ok(rmse(&preds, &valid.targets)?.as_f64())
                })();
                (settings, outcome.map_err(|e| e.to_string()))
            })
            .collect();

        let mut winner: Option<(usize, f64)> = None;
        for (i, (_, outcome)) in evaluated.iter().enumerate() {
            if let Ok(score) = outcome {
                if winner.is_none_or(|(_, best)| *score < best) {
                    winner = Some((i, *score));
                }
            }
        }
        let (win_idx, win_rmse) = winner.ok_or_else(|| {
            Error::InvalidParam(format!("every cell of step {step_idx} failed to train"))
        })?;

        for (i, (settings, outcome)) in evaluated.iter().enumerate() {
            cells.push(GridCell {
                step: step_idx,
                settings: settings.clone(),
                valid_rmse: outcome.as_ref().ok().copied(),
                error: outcome.as_ref().err().cloned(),
                tie_with_winner: i != win_idx && outcome.as_ref().ok() == Some(&win_rmse),
            });
        }

        for (key, value) in &evaluated[win_idx].0 {
            current.set(key, *value)?;
        }
        best_rmse = win_rmse;
    }

    Ok(GridSearchResult { best: current, best_rmse, cells })
}
