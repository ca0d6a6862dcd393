//! Evaluation harness: the long-term six-model comparison against the
//! naive baseline, the short-term sliding-window sweep (one model per test
//! hour and lookback), and the short-vs-long comparison.

use std::io::Write;
use std::time::Instant;

use chrono::{Datelike, Duration, NaiveDateTime, Timelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boost::{feature_importance, fit_gbt, GbtParams};
use crate::error::{Error, Result};
use crate::features::{assemble_features, datetime_split, FeatureMatrix, FeatureSchema};
use crate::forest::{fit_forest, ForestKind, ForestParams};
use crate::grid::TrainedModel;
use crate::metrics::rmse;
use crate::naive::fit_naive;
use crate::tree::{fit_tree, TreeParams};
use crate::trips::EnrichedTrip;
use crate::util::derive_seed;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitWindows {
    pub train_start: NaiveDateTime,
    /// Exclusive.
    pub train_end: NaiveDateTime,
    pub test_start: NaiveDateTime,
    /// Exclusive.
    pub test_end: NaiveDateTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongtermConfig {
    pub windows: SplitWindows,
    pub schema: FeatureSchema,
    pub cart: TreeParams,
    pub rf: ForestParams,
    pub et: ForestParams,
    pub gbt_depthwise: GbtParams,
    pub gbt_leafwise: GbtParams,
    pub seed: u64,
}

impl LongtermConfig {
    /// Desk-scale defaults. Per-model seeds derive from the master seed so
    /// the models draw independent streams.
    pub fn desk_default(windows: SplitWindows, seed: u64) -> Self {
        Self {
            windows,
            schema: FeatureSchema::longterm(),
            cart: TreeParams { max_depth: 12, min_child_weight: 20, ..TreeParams::default() },
            rf: ForestParams {
                kind: ForestKind::RandomForest,
                n_trees: 40,
                subsample: 0.9,
                colsample_bytree: 0.8,
                tree: TreeParams { max_depth: 12, min_child_weight: 5, ..TreeParams::default() },
                seed: derive_seed(seed, 1),
                ..ForestParams::default()
            },
            et: ForestParams {
                kind: ForestKind::ExtraTrees,
                n_trees: 40,
                subsample: 1.0,
                colsample_bytree: 0.8,
                tree: TreeParams { max_depth: 14, min_child_weight: 5, ..TreeParams::default() },
                seed: derive_seed(seed, 2),
                ..ForestParams::default()
            },
            gbt_depthwise: GbtParams {
                num_rounds: 200,
                early_stopping_patience: 25,
                seed: derive_seed(seed, 3),
                ..GbtParams::default()
            },
            gbt_leafwise: GbtParams {
                growth: crate::boost::Growth::Leafwise,
                max_leaves: 64,
                num_rounds: 200,
                early_stopping_patience: 25,
                seed: derive_seed(seed, 4),
                ..GbtParams::default()
            },
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub rmse: f64,
    pub train_seconds: f64,
    pub n_trees: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub model: String,
    pub feature: String,
    pub gain: f64,
    pub splits: u64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongtermReport {
    pub rows: Vec<ModelRow>,
    pub importance: Vec<ImportanceRow>,
    pub n_train: usize,
    pub n_test: usize,
}

impl LongtermReport {
    pub fn row(&self, model: &str) -> Option<&ModelRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    /// Table CSV: `model,rmse,train_seconds,n_trees`. With `zero_times` the
    /// hardware-bound wall times are written as 0 so reruns are
    /// byte-identical.
    pub fn write_report_csv<W: Write>(&self, w: W, zero_times: bool) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["model", "rmse", "train_seconds", "n_trees"])?;
        for row in &self.rows {
            wtr.write_record([
                row.model.clone(),
                row.rmse.to_string(),
                if zero_times { "0".into() } else { format!("{:.3}", row.train_seconds) },
                row.n_trees.map(|n| n.to_string()).unwrap_or_default(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Importance CSV: `model,feature,gain,splits,share`.
    pub fn write_importance_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["model", "feature", "gain", "splits", "share"])?;
        for row in &self.importance {
            wtr.write_record([
                row.model.clone(),
                row.feature.clone(),
                row.gain.to_string(),
                row.splits.to_string(),
                row.share.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Train the naive baseline, CART, Random Forest, Extra Trees and both
/// boosted variants on the train window and report test RMSE, wall time
/// and tree counts. The boosted models early-stop against the evaluation
/// window, mirroring the study's protocol.
pub fn longterm_eval(trips: &[EnrichedTrip], cfg: &LongtermConfig) -> Result<LongtermReport> {
    let w = &cfg.windows;
    let (train, test, _) =
        datetime_split(trips, (w.train_start, w.train_end), (w.test_start, w.test_end))?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty("long-term evaluation needs trips in both windows"));
    }

    let mut rows = Vec::with_capacity(6);

    // naive baseline works on zoned trips, not the matrix
    let started = Instant::now();
    let naive = fit_naive(&train)?;
    let naive_seconds = started.elapsed().as_secs_f64();
    let mut preds = Vec::with_capacity(test.len());
    let mut targets = Vec::with_capacity(test.len());
    for trip in &test {
        preds.push(naive.predict_trip(trip)?.0);
        targets.push(trip.record.trip_duration);
    }
    rows.push(ModelRow {
        model: "naive".into(),
        rmse: rmse(&preds, &targets)?,
        train_seconds: naive_seconds,
        n_trees: None,
    });

    let train_matrix: FeatureMatrix<Real> = assemble_features(&train, &cfg.schema)?;
    let test_matrix: FeatureMatrix<Real> = assemble_features(&test, &cfg.schema)?;
    let score = |preds: &[Real]| -> Result<f64> { rmse(preds, &test_matrix.targets) };

    let started = Instant::now();
    let cart = fit_tree(&train_matrix, &cfg.cart)?;
    let cart_seconds = started.elapsed().as_secs_f64();
    rows.push(ModelRow {
        model: "cart".into(),
        rmse: score(&cart.predict_batch(&test_matrix)?)?,
        train_seconds: cart_seconds,
        n_trees: Some(1),
    });

    for (name, params) in [("random_forest", &cfg.rf), ("extra_trees", &cfg.et)] {
        let started = Instant::now();
        let forest = fit_forest(&train_matrix, params)?;
        let seconds = started.elapsed().as_secs_f64();
        rows.push(ModelRow {
            model: name.into(),
            rmse: score(&forest.predict_batch(&test_matrix)?)?,
            train_seconds: seconds,
            n_trees: Some(forest.n_trees()),
        });
    }

    let mut importance = Vec::new();
    for (name, params) in [("gbt_depthwise", &cfg.gbt_depthwise), ("gbt_leafwise", &cfg.gbt_leafwise)] {
        let started = Instant::now();
        let model = fit_gbt(&train_matrix, Some(&test_matrix), params)?;
        let seconds = started.elapsed().as_secs_f64();
        rows.push(ModelRow {
            model: name.into(),
            rmse: score(&model.predict_batch(&test_matrix)?)?,
            train_seconds: seconds,
            n_trees: Some(model.n_trees()),
        });
        for entry in feature_importance(&model) {
            importance.push(ImportanceRow {
                model: name.into(),
                feature: cfg.schema.features[entry.feature].name.clone(),
                gain: entry.gain,
                splits: entry.splits,
                share: entry.share,
            });
        }
    }

    Ok(LongtermReport { rows, importance, n_train: train.len(), n_test: test.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShorttermConfig {
    /// First test hour; must be hour-aligned.
    pub test_start: NaiveDateTime,
    pub n_hours: usize,
    /// Lookbacks 1..=L, in hours of training data.
    pub lookbacks: usize,
    pub schema: FeatureSchema,
    pub gbt: GbtParams,
    pub seed: u64,
}

impl ShorttermConfig {
    pub fn desk_default(test_start: NaiveDateTime, n_hours: usize, lookbacks: usize, seed: u64) -> Self {
        Self {
            test_start,
            n_hours,
            lookbacks,
            schema: FeatureSchema::shortterm(),
            // long-term-tuned boosting defaults scaled to tiny windows
            gbt: GbtParams {
                num_rounds: 200,
                learning_rate: 0.15,
                max_depth: 3,
                min_child_weight: 25,
                early_stopping_patience: 40,
                ..GbtParams::default()
            },
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub hour_index: usize,
    pub weekday: u8,
    pub hour: u8,
    pub lookback: usize,
    pub rmse: Option<f64>,
    pub train_seconds: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// The test-hour x lookback RMSE matrix, hour-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMatrix {
    pub test_start: NaiveDateTime,
    pub n_hours: usize,
    pub lookbacks: usize,
    pub cells: Vec<SweepCell>,
}

impl SweepMatrix {
    pub fn get(&self, hour_index: usize, lookback: usize) -> &SweepCell {
        &self.cells[hour_index * self.lookbacks + (lookback - 1)]
    }

    pub fn row(&self, hour_index: usize) -> &[SweepCell] {
        &self.cells[hour_index * self.lookbacks..(hour_index + 1) * self.lookbacks]
    }

    /// Matrix CSV: `hour_index,weekday,hour,lookback,rmse,train_seconds`.
    pub fn write_csv<W: Write>(&self, w: W, zero_times: bool) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["hour_index", "weekday", "hour", "lookback", "rmse", "train_seconds"])?;
        for cell in &self.cells {
            wtr.write_record([
                cell.hour_index.to_string(),
                cell.weekday.to_string(),
                cell.hour.to_string(),
                cell.lookback.to_string(),
                cell.rmse.map(|v| v.to_string()).unwrap_or_default(),
                if zero_times { "0".into() } else { format!("{:.4}", cell.train_seconds) },
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

/// For each test hour and lookback i, train a boosted model on the trips
/// with pickup in `[hour - i, hour)` and evaluate RMSE on `[hour, hour+1)`.
/// Hours with an empty train or test set are marked missing. Cells run in
/// parallel with per-cell seeds; assembly is order-independent.
pub fn shortterm_sweep(trips: &[EnrichedTrip], cfg: &ShorttermConfig) -> Result<SweepMatrix> {
    if cfg.n_hours == 0 || cfg.lookbacks == 0 {
        return Err(Error::InvalidParam("sweep needs at least one hour and one lookback".into()));
    }
    let range_start = cfg.test_start - Duration::hours(cfg.lookbacks as i64);
    let range_end = cfg.test_start + Duration::hours(cfg.n_hours as i64);
    let in_range: Vec<EnrichedTrip> = trips
        .iter()
        .filter(|t| t.record.pickup_datetime >= range_start && t.record.pickup_datetime < range_end)
        .cloned()
        .collect();
    let matrix: FeatureMatrix<Real> = assemble_features(&in_range, &cfg.schema)?;

    // bucket row indices per hour offset; windows then select rows in the
    // caller's trip order, matching what a datetime split would produce
    let n_buckets = cfg.lookbacks + cfg.n_hours;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n_buckets];
    for (i, trip) in in_range.iter().enumerate() {
        let offset = (trip.record.pickup_datetime - range_start).num_seconds() / 3600;
        buckets[offset as usize].push(i);
    }
    let rows_for = |from_bucket: usize, to_bucket: usize| -> Vec<usize> {
        let mut rows: Vec<usize> = buckets[from_bucket..to_bucket].concat();
        rows.sort_unstable();
        rows
    };

    let total_cells = cfg.n_hours * cfg.lookbacks;
    let cells: Vec<Result<SweepCell>> = (0..total_cells)
        .into_par_iter()
        .map(|cell_index| {
            let hour_index = cell_index / cfg.lookbacks;
            let lookback = cell_index % cfg.lookbacks + 1;
            let hour_start = cfg.test_start + Duration::hours(hour_index as i64);
            let weekday = hour_start.weekday().num_days_from_monday() as u8;
            let hour = hour_start.hour() as u8;

            let hour_bucket = cfg.lookbacks + hour_index;
            let train_rows = rows_for(hour_bucket - lookback, hour_bucket);
            let test_rows = rows_for(hour_bucket, hour_bucket + 1);
            let (n_train, n_test) = (train_rows.len(), test_rows.len());
            if n_train == 0 || n_test == 0 {
                return Ok(SweepCell {
                    hour_index,
                    weekday,
                    hour,
                    lookback,
                    rmse: None,
                    train_seconds: 0.0,
                    n_train,
                    n_test,
                });
            }
            let train_matrix = matrix.select_rows(&train_rows);
            let test_matrix = matrix.select_rows(&test_rows);
            let mut params = cfg.gbt.clone();
            params.seed = derive_seed(cfg.seed, cell_index as u64);
            let started = Instant::now();
            let model = fit_gbt(&train_matrix, Some(&test_matrix), &params)?;
            let train_seconds = started.elapsed().as_secs_f64();
            let preds = model.predict_batch(&test_matrix)?;
            Ok(SweepCell {
                hour_index,
                weekday,
                hour,
                lookback,
                rmse: Some(rmse(&preds, &test_matrix.targets)?),
                train_seconds,
                n_train,
                n_test,
            })
        })
        .collect();

    let cells: Vec<SweepCell> = cells.into_iter().collect::<Result<_>>()?;
    Ok(SweepMatrix { test_start: cfg.test_start, n_hours: cfg.n_hours, lookbacks: cfg.lookbacks, cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Short,
    Long,
    Tie,
    Missing,
}

impl Winner {
    pub fn label(&self) -> &'static str {
        match self {
            Winner::Short => "short",
            Winner::Long => "long",
            Winner::Tie => "tie",
            Winner::Missing => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub hour_index: usize,
    pub weekday: u8,
    pub hour: u8,
    pub long_rmse: Option<f64>,
    pub best_short_rmse: Option<f64>,
    pub best_lookback: Option<usize>,
    pub winner: Winner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekdayWins {
    pub weekday: u8,
    pub short_wins: usize,
    pub long_wins: usize,
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    pub weekday_wins: Vec<WeekdayWins>,
}

impl Comparison {
    /// Comparison CSV:
    /// `hour_index,weekday,hour,long_rmse,best_short_rmse,best_lookback,winner`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "hour_index",
            "weekday",
            "hour",
            "long_rmse",
            "best_short_rmse",
            "best_lookback",
            "winner",
        ])?;
        for row in &self.rows {
            wtr.write_record([
                row.hour_index.to_string(),
                row.weekday.to_string(),
                row.hour.to_string(),
                row.long_rmse.map(|v| v.to_string()).unwrap_or_default(),
                row.best_short_rmse.map(|v| v.to_string()).unwrap_or_default(),
                row.best_lookback.map(|v| v.to_string()).unwrap_or_default(),
                row.winner.label().to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Per test hour, compare the long-term model's RMSE with the best
/// short-term cell; aggregate win counts per weekday. Both sides must be
/// computed on the same test hours.
pub fn compare_short_long(
    sweep: &SweepMatrix,
    trips: &[EnrichedTrip],
    long_model: &TrainedModel<Real>,
    long_schema: &FeatureSchema,
) -> Result<Comparison> {
    let mut rows = Vec::with_capacity(sweep.n_hours);
    let mut wins = vec![WeekdayWins { weekday: 0, short_wins: 0, long_wins: 0, ties: 0 }; 7];
    for (d, w) in wins.iter_mut().enumerate() {
        w.weekday = d as u8;
    }

    for hour_index in 0..sweep.n_hours {
        let hour_start = sweep.test_start + Duration::hours(hour_index as i64);
        let hour_end = hour_start + Duration::hours(1);
        let test: Vec<&EnrichedTrip> = trips
            .iter()
            .filter(|t| t.record.pickup_datetime >= hour_start && t.record.pickup_datetime < hour_end)
            .collect();

        let sweep_row = sweep.row(hour_index);
        let sweep_has_test = sweep_row.iter().any(|c| c.n_test > 0);
        if sweep_has_test != !test.is_empty() {
            return Err(Error::InvalidParam(format!(
                "hour sets differ: sweep and trips disagree about test hour {hour_index}"
            )));
        }

        let long_rmse = if test.is_empty() {
            None
        } else {
            let owned: Vec<EnrichedTrip> = test.iter().map(|t| (*t).clone()).collect();
            let matrix: FeatureMatrix<Real> = assemble_features(&owned, long_schema)?;
            let preds = long_model.predict_batch(&matrix)?;
            Some(rmse(&preds, &matrix.targets)?)
        };

        let mut best_short: Option<(f64, usize)> = None;
        for cell in sweep_row {
            if let Some(r) = cell.rmse {
                if best_short.is_none_or(|(b, _)| r < b) {
                    best_short = Some((r, cell.lookback));
                }
            }
        }

        let weekday = sweep_row[0].weekday;
        let winner = match (long_rmse, best_short) {
            (Some(l), Some((s, _))) => {
                if s < l {
                    wins[weekday as usize].short_wins += 1;
                    Winner::Short
                } else if l < s {
                    wins[weekday as usize].long_wins += 1;
                    Winner::Long
                } else {
                    wins[weekday as usize].ties += 1;
                    Winner::Tie
                }
            }
            _ => Winner::Missing,
        };
        rows.push(CompareRow {
            hour_index,
            weekday,
            hour: sweep_row[0].hour,
            long_rmse,
            best_short_rmse: best_short.map(|(r, _)| r),
            best_lookback: best_short.map(|(_, l)| l),
            winner,
        });
    }

    Ok(Comparison { rows, weekday_wins: wins })
}
