//! Error type shared across the pipeline and the training core.

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("weather table does not cover {} trip date(s): {}", .0.len(), fmt_dates(.0))]
    WeatherGap(Vec<NaiveDate>),

    #[error("coordinate ({lon:.5}, {lat:.5}) outside zone grid")]
    OutOfGrid { lon: f64, lat: f64 },

    #[error("graph load failed: {0}")]
    GraphLoad(String),

    #[error("unroutable point ({lon:.5}, {lat:.5}): no graph node within snap radius")]
    Unroutable { lon: f64, lat: f64 },

    #[error("no route from node {from} to node {to}")]
    NoRoute { from: u64, to: u64 },

    #[error("cannot extract features from an empty route")]
    EmptyRoute,

    #[error("feature vector has {got} entries, model expects {expected}")]
    SchemaMismatch { expected: usize, got: usize },

    #[error("missing feature value for row {row}, column `{column}`")]
    MissingFeature { row: u64, column: String },

    #[error("non-finite feature value for row {row}, column `{column}`")]
    NonFinite { row: u64, column: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("train and test date ranges overlap")]
    OverlappingRanges,
}

fn fmt_dates(dates: &[NaiveDate]) -> String {
    let shown: Vec<String> = dates.iter().take(5).map(|d| d.to_string()).collect();
    if dates.len() > 5 {
        format!("{}, ...", shown.join(", "))
    } else {
        shown.join(", ")
    }
}
