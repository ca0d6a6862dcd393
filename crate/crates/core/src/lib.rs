//! Travel-time prediction engine: trip ingestion and cleaning, free-flow
//! routing features, CART regression trees with cost-complexity pruning,
//! bagged and boosted ensembles, a grid-search and evaluation harness
//! (long-term model comparison plus the short-term sliding-window study),
//! and a deterministic synthetic city for desk-scale runs.
//!
//! The numeric core — [`features::FeatureMatrix`], [`tree`], [`forest`],
//! [`boost`], [`metrics`] — is generic over [`Scalar`] (`f32` or `f64`);
//! the data pipeline works in the [`Real`] alias.
//!
//! ```
//! use chrono::NaiveDate;
//! use tripcast_core::boost::{fit_gbt, GbtParams};
//! use tripcast_core::features::{assemble_features, FeatureSchema};
//! use tripcast_core::routing::route_trips;
//! use tripcast_core::synth::{generate_city, generate_trips, generate_weather, CityConfig};
//! use tripcast_core::trips::{assign_zones, enrich, join_weather, ZoneGrid};
//! use tripcast_core::{Matrix, Result};
//!
//! # fn main() -> Result<()> {
//! let config = CityConfig { rows: 6, cols: 5, min_route_miles: 0.2, ..CityConfig::default() };
//! let (graph, surface) = generate_city(&config)?;
//! let start = NaiveDate::from_ymd_opt(2016, 6, 6).unwrap();
//! let end = NaiveDate::from_ymd_opt(2016, 6, 8).unwrap();
//!
//! let mut trips = enrich(generate_trips(&graph, &surface, &config, 400, start, end)?);
//! join_weather(&mut trips, &generate_weather(&config, start, end))?;
//! let (min, max) = graph.bounding_box();
//! let grid = ZoneGrid::new(min.lon - 0.01, min.lat - 0.01, max.lon + 0.01, max.lat + 0.01, 0.005)?;
//! assign_zones(&mut trips, &grid)?;
//! route_trips(&graph, &mut trips, 0.25)?;
//!
//! let matrix: Matrix = assemble_features(&trips, &FeatureSchema::longterm())?;
//! let params = GbtParams { num_rounds: 10, ..GbtParams::default() };
//! let model = fit_gbt(&matrix, None, &params)?;
//! assert!(model.predict(matrix.row(0))? >= 0.0);
//! # Ok(())
//! # }
//! ```

pub mod boost;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod grid;
pub mod metrics;
pub mod naive;
pub mod routing;
pub mod scalar;
pub mod synth;
pub mod tree;
pub mod trips;
pub mod util;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar for the pipeline.
pub type Real = f64;
/// Feature matrix over the default scalar.
pub type Matrix = features::FeatureMatrix<Real>;
/// CART regression tree over the default scalar.
pub type Tree = tree::RegressionTree<Real>;
/// Bagged ensemble over the default scalar.
pub type Forest = forest::BaggedEnsemble<Real>;
/// Boosted model over the default scalar.
pub type Boosted = boost::BoostedModel<Real>;
