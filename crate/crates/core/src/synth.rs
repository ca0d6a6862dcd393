//! Deterministic synthetic-city generator: a grid road graph with named
//! streets, a weekday-by-hour congestion surface with a midday/midweek low
//! speed region, daily weather, and trip records drawn on the graph. The
//! desk-scale stand-in for the real trip dataset.

use chrono::{Datelike, Duration, NaiveDate};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::routing::{route_between_nodes, GeoPoint, RoadGraph};
use crate::trips::{TripRecord, WeatherDay};
use crate::util::{derive_seed, fnv1a};

/// A dated speed shock: an extra multiplier on `[start_hour, end_hour)` of
/// one day, for the short-vs-long-term comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockConfig {
    pub date: NaiveDate,
    pub start_hour: u8,
    pub end_hour: u8,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityConfig {
    /// East-west streets (grid rows).
    pub rows: usize,
    /// North-south avenues (grid columns).
    pub cols: usize,
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub spacing_deg: f64,
    pub street_speed_mph: f64,
    pub avenue_speed_mph: f64,
    /// Depth of the midday/midweek speed depression, in (0, 1); 0 gives a
    /// flat surface.
    pub congestion_depth: f64,
    pub congestion_day_width: f64,
    pub congestion_hour_width: f64,
    pub snow_dates: Vec<NaiveDate>,
    pub snow_multiplier: f64,
    pub shock: Option<ShockConfig>,
    /// Gaussian noise on durations, seconds; truncated at three sigma so
    /// generated trips always satisfy the default cleaning rules.
    pub noise_sigma: f64,
    /// Resample O/D pairs until the routed distance reaches this floor.
    pub min_route_miles: f64,
    pub seed: u64,
}

impl Default for CityConfig {
    fn default() -> Self {
        Self {
            rows: 30,
            cols: 12,
            origin_lon: -73.99,
            origin_lat: 40.72,
            spacing_deg: 0.0025,
            street_speed_mph: 16.0,
            avenue_speed_mph: 22.0,
            congestion_depth: 0.45,
            congestion_day_width: 1.6,
            congestion_hour_width: 4.5,
            snow_dates: Vec::new(),
            snow_multiplier: 0.55,
            shock: None,
            noise_sigma: 40.0,
            min_route_miles: 1.3,
            seed: 7,
        }
    }
}

impl CityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::InvalidParam("city grid must be at least 2x2".into()));
        }
        if self.street_speed_mph <= 0.0 || self.avenue_speed_mph <= 0.0 {
            return Err(Error::InvalidParam("speeds must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.congestion_depth) {
            return Err(Error::InvalidParam("congestion_depth must be in [0, 1)".into()));
        }
        if !(self.snow_multiplier > 0.0 && self.snow_multiplier <= 1.0) {
            return Err(Error::InvalidParam("snow_multiplier must be in (0, 1]".into()));
        }
        if let Some(shock) = &self.shock {
            if !(shock.multiplier > 0.0 && shock.multiplier <= 1.0) {
                return Err(Error::InvalidParam("shock multiplier must be in (0, 1]".into()));
            }
            if shock.start_hour >= shock.end_hour || shock.end_hour > 24 {
                return Err(Error::InvalidParam("shock hour window is empty or out of range".into()));
            }
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidParam("noise_sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

/// 7x24 speed multipliers in (0, 1]; durations divide by the multiplier, so
/// the midday/midweek minimum is the congestion peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedSurface {
    pub multipliers: Vec<Vec<f64>>,
}

impl SpeedSurface {
    pub fn at(&self, weekday: u8, hour: u8) -> f64 {
        self.multipliers[weekday as usize][hour as usize]
    }
}

fn surface_multiplier(cfg: &CityConfig, weekday: usize, hour: usize) -> f64 {
    let day_term = (-(((weekday as f64 - 2.0) / cfg.congestion_day_width).powi(2))).exp();
    let hour_term = (-(((hour as f64 - 13.0) / cfg.congestion_hour_width).powi(2))).exp();
    1.0 - cfg.congestion_depth * day_term * hour_term
}

/// Build the road graph and the congestion surface. Streets run east-west
/// at `street_speed_mph`, avenues north-south at `avenue_speed_mph`; every
/// segment is bidirectional. Deterministic for a fixed config.
pub fn generate_city(cfg: &CityConfig) -> Result<(RoadGraph, SpeedSurface)> {
    cfg.validate()?;
    let node_id = |r: usize, c: usize| (r * cfg.cols + c) as u64 + 1;
    let point = |r: usize, c: usize| GeoPoint {
        lon: cfg.origin_lon + c as f64 * cfg.spacing_deg,
        lat: cfg.origin_lat + r as f64 * cfg.spacing_deg,
    };
    let mut nodes = Vec::with_capacity(cfg.rows * cfg.cols);
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            nodes.push((node_id(r, c), point(r, c)));
        }
    }
    let mut edges = Vec::new();
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            if c + 1 < cfg.cols {
                let miles = crate::routing::haversine_miles(point(r, c), point(r, c + 1));
                let street = format!("Street {r}");
                edges.push((node_id(r, c), node_id(r, c + 1), miles, cfg.street_speed_mph, street.clone()));
                edges.push((node_id(r, c + 1), node_id(r, c), miles, cfg.street_speed_mph, street));
            }
            if r + 1 < cfg.rows {
                let miles = crate::routing::haversine_miles(point(r, c), point(r + 1, c));
                let avenue = format!("Avenue {c}");
                edges.push((node_id(r, c), node_id(r + 1, c), miles, cfg.avenue_speed_mph, avenue.clone()));
                edges.push((node_id(r + 1, c), node_id(r, c), miles, cfg.avenue_speed_mph, avenue));
            }
        }
    }
    let graph = RoadGraph::from_parts(nodes, edges)?;
    let multipliers = (0..7)
        .map(|d| (0..24).map(|h| surface_multiplier(cfg, d, h)).collect())
        .collect();
    Ok((graph, SpeedSurface { multipliers }))
}

/// Daily weather covering `[start, end]` inclusive, a pure function of the
/// date: snow days carry the configured snowfall, other fields vary
/// deterministically.
pub fn generate_weather(cfg: &CityConfig, start: NaiveDate, end: NaiveDate) -> Vec<WeatherDay> {
    let mut days = Vec::new();
    let mut date = start;
    while date <= end {
        let jitter = fnv1a(date.to_string().as_bytes());
        let snow = cfg.snow_dates.contains(&date);
        let day_of_year = date.ordinal() as f64;
        let seasonal = 55.0 + 20.0 * (std::f64::consts::TAU * (day_of_year - 105.0) / 365.25).sin();
        days.push(WeatherDay {
            date,
            snowfall: if snow { 8.0 } else { 0.0 },
            snow_depth: if snow { 6.0 } else { 0.0 },
            rainfall: ((jitter >> 8) % 30) as f64 / 100.0,
            temperature: if snow {
                28.0 + (jitter % 5) as f64
            } else {
                seasonal + (jitter % 90) as f64 / 10.0 - 4.5
            },
        });
        date += Duration::days(1);
    }
    days
}

/// Daytime-weighted pickup profile with a healthy night floor.
const HOUR_WEIGHTS: [f64; 24] = [
    0.55, 0.45, 0.42, 0.40, 0.42, 0.55, 0.80, 1.10, 1.30, 1.20, 1.10, 1.15, 1.25, 1.25, 1.15,
    1.15, 1.25, 1.45, 1.50, 1.35, 1.15, 0.95, 0.80, 0.65,
];

fn sample_hour(rng: &mut ChaCha8Rng) -> u32 {
    let total: f64 = HOUR_WEIGHTS.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (h, w) in HOUR_WEIGHTS.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return h as u32;
        }
    }
    23
}

fn generate_chunk(
    graph: &RoadGraph,
    surface: &SpeedSurface,
    cfg: &CityConfig,
    count: usize,
    start: NaiveDate,
    n_days: i64,
    seed: u64,
) -> Result<Vec<TripRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = if cfg.noise_sigma > 0.0 {
        Some(Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::InvalidParam(e.to_string()))?)
    } else {
        None
    };
    let n_nodes = graph.n_nodes();
    let mut trips = Vec::with_capacity(count);
    for _ in 0..count {
        // O/D pair: resample until the route is long enough (bounded)
        let mut chosen = None;
        for _ in 0..100 {
            let o = rng.random_range(0..n_nodes);
            let d = rng.random_range(0..n_nodes);
            if o == d {
                continue;
            }
            match route_between_nodes(graph, o, d) {
                Ok(route) if route.total_miles >= cfg.min_route_miles => {
                    chosen = Some((o, d, route));
                    break;
                }
                Ok(_) => continue,
                Err(Error::NoRoute { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        let (o, d, route) =
            chosen.ok_or_else(|| Error::InvalidParam("could not sample a routable O/D pair".into()))?;

        let date = start + Duration::days(rng.random_range(0..n_days));
        let hour = sample_hour(&mut rng);
        let minute = rng.random_range(0..60u32);
        let second = rng.random_range(0..60u32);
        let pickup = date.and_hms_opt(hour, minute, second).expect("valid time");
        let weekday = pickup.weekday().num_days_from_monday() as u8;

        let mut factor = surface.at(weekday, hour as u8);
        if cfg.snow_dates.contains(&date) {
            factor *= cfg.snow_multiplier;
        }
        if let Some(shock) = &cfg.shock {
            if date == shock.date && (shock.start_hour as u32..shock.end_hour as u32).contains(&hour) {
                factor *= shock.multiplier;
            }
        }

        let noise = match &normal {
            Some(dist) => {
                let raw = dist.sample(&mut rng);
                raw.clamp(-3.0 * cfg.noise_sigma, 3.0 * cfg.noise_sigma)
            }
            None => 0.0,
        };
        let duration = (route.total_secs / factor + noise).max(1.0);
        let vendor_id = rng.random_range(1..=2u8);
        let passenger_count = rng.random_range(1..=4u32);

        let op = graph.node_point(o);
        let dp = graph.node_point(d);
        trips.push(TripRecord {
            id: 0, // assigned after assembly
            vendor_id,
            pickup_datetime: pickup,
            dropoff_datetime: pickup + Duration::seconds(duration.round() as i64),
            passenger_count,
            pickup_longitude: op.lon,
            pickup_latitude: op.lat,
            dropoff_longitude: dp.lon,
            dropoff_latitude: dp.lat,
            trip_duration: duration,
            trip_distance: route.total_miles,
        });
    }
    Ok(trips)
}

/// Generate exactly `n` trips over `[start, end]` inclusive. True duration
/// is the free-flow route duration divided by the congestion (and snow and
/// shock) multipliers, plus truncated Gaussian noise, floored at one
/// second. Chunks draw from seeds derived per chunk, so the parallel
/// schedule cannot change the output.
pub fn generate_trips(
    graph: &RoadGraph,
    surface: &SpeedSurface,
    cfg: &CityConfig,
    n: usize,
    start: NaiveDate,
    end: NaiveDate,
) -> Result<Vec<TripRecord>> {
    cfg.validate()?;
    if end < start {
        return Err(Error::InvalidParam("trip date range ends before it starts".into()));
    }
    let n_days = (end - start).num_days() + 1;
    const CHUNK: usize = 1024;
    let n_chunks = n.div_ceil(CHUNK);
    let chunks: Vec<Result<Vec<TripRecord>>> = (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let count = CHUNK.min(n - k * CHUNK);
            generate_chunk(graph, surface, cfg, count, start, n_days, derive_seed(cfg.seed, k as u64 + 1))
        })
        .collect();
    let mut trips = Vec::with_capacity(n);
    for chunk in chunks {
        trips.extend(chunk?);
    }
    for (i, trip) in trips.iter_mut().enumerate() {
        trip.id = i as u64 + 1;
    }
    Ok(trips)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trips::{clean_trips, CleaningRules};

    fn june(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2016, 6, d).unwrap()
    }

    #[test]
    fn degenerate_grid_is_rejected() {
        let cfg = CityConfig { rows: 1, cols: 5, ..CityConfig::default() };
        assert!(generate_city(&cfg).is_err());
    }

    #[test]
    fn zero_depth_gives_a_flat_surface() {
        let cfg = CityConfig { congestion_depth: 0.0, ..CityConfig::default() };
        let (_, surface) = generate_city(&cfg).unwrap();
        for d in 0..7 {
            for h in 0..24 {
                assert_eq!(surface.at(d, h), 1.0);
            }
        }
    }

    #[test]
    fn default_surface_minimum_is_midweek_midday() {
        let cfg = CityConfig::default();
        let (_, surface) = generate_city(&cfg).unwrap();
        let min_cell = surface.at(2, 13);
        for d in 0..7 {
            for h in 0..24 {
                assert!(surface.at(d, h) >= min_cell);
                if h <= 4 {
                    // night cells sit well above the midday depression
                    assert!(surface.at(d, h) > min_cell);
                }
            }
        }
        assert!(min_cell < 0.6 && min_cell > 0.0);
    }

    #[test]
    fn grid_edge_count_matches_formula() {
        let cfg = CityConfig { rows: 10, cols: 10, ..CityConfig::default() };
        let (graph, _) = generate_city(&cfg).unwrap();
        assert_eq!(graph.n_nodes(), 100);
        assert_eq!(graph.n_edges(), 360);
    }

    fn small(rows: usize, cols: usize) -> CityConfig {
        // small grids cannot host the default minimum route length
        CityConfig { rows, cols, min_route_miles: 0.2, ..CityConfig::default() }
    }

    #[test]
    fn same_seed_is_identical() {
        let cfg = small(6, 5);
        let (graph_a, surface_a) = generate_city(&cfg).unwrap();
        let (graph_b, surface_b) = generate_city(&cfg).unwrap();
        assert_eq!(surface_a, surface_b);
        let trips_a = generate_trips(&graph_a, &surface_a, &cfg, 300, june(1), june(7)).unwrap();
        let trips_b = generate_trips(&graph_b, &surface_b, &cfg, 300, june(1), june(7)).unwrap();
        assert_eq!(trips_a, trips_b);
    }

    #[test]
    fn exact_trip_count() {
        let cfg = small(6, 5);
        let (graph, surface) = generate_city(&cfg).unwrap();
        let trips = generate_trips(&graph, &surface, &cfg, 2500, june(1), june(3)).unwrap();
        assert_eq!(trips.len(), 2500);
        // ids are consecutive from 1
        assert_eq!(trips[0].id, 1);
        assert_eq!(trips.last().unwrap().id, 2500);
    }

    #[test]
    fn noise_free_flat_duration_equals_routed_free_flow() {
        let cfg = CityConfig {
            congestion_depth: 0.0,
            noise_sigma: 0.0,
            ..CityConfig::default()
        };
        let (graph, surface) = generate_city(&cfg).unwrap();
        let trips = generate_trips(&graph, &surface, &cfg, 50, june(6), june(6)).unwrap();
        for t in &trips {
            let o = graph.snap(GeoPoint { lon: t.pickup_longitude, lat: t.pickup_latitude }, 0.01).unwrap();
            let d = graph.snap(GeoPoint { lon: t.dropoff_longitude, lat: t.dropoff_latitude }, 0.01).unwrap();
            let route = route_between_nodes(&graph, o, d).unwrap();
            assert_eq!(t.trip_duration, route.total_secs);
            assert_eq!(t.trip_distance, route.total_miles);
        }
    }

    #[test]
    fn snow_halving_doubles_durations() {
        let base_cfg = CityConfig {
            congestion_depth: 0.0,
            noise_sigma: 0.0,
            snow_multiplier: 0.5,
            ..CityConfig::default()
        };
        let snow_cfg = CityConfig { snow_dates: vec![june(6)], ..base_cfg.clone() };
        let (graph, surface) = generate_city(&base_cfg).unwrap();
        let dry = generate_trips(&graph, &surface, &base_cfg, 80, june(6), june(6)).unwrap();
        let snowy = generate_trips(&graph, &surface, &snow_cfg, 80, june(6), june(6)).unwrap();
        for (a, b) in dry.iter().zip(&snowy) {
            // same seed, same O/D and time; only the multiplier differs
            assert_eq!(a.pickup_datetime, b.pickup_datetime);
            assert!((b.trip_duration - 2.0 * a.trip_duration).abs() < 1e-9);
        }
    }

    #[test]
    fn shock_window_slows_only_those_hours() {
        let base = CityConfig { congestion_depth: 0.0, noise_sigma: 0.0, ..CityConfig::default() };
        let shocked = CityConfig {
            shock: Some(ShockConfig { date: june(6), start_hour: 10, end_hour: 14, multiplier: 0.5 }),
            ..base.clone()
        };
        let (graph, surface) = generate_city(&base).unwrap();
        let plain = generate_trips(&graph, &surface, &base, 200, june(6), june(6)).unwrap();
        let hit = generate_trips(&graph, &surface, &shocked, 200, june(6), june(6)).unwrap();
        for (a, b) in plain.iter().zip(&hit) {
            let hour = a.hour();
            if (10..14).contains(&hour) {
                assert!((b.trip_duration - 2.0 * a.trip_duration).abs() < 1e-9);
            } else {
                assert_eq!(a.trip_duration, b.trip_duration);
            }
        }
    }

    #[test]
    fn default_config_survives_cleaning_untouched() {
        let cfg = CityConfig::default();
        let (graph, surface) = generate_city(&cfg).unwrap();
        let trips = generate_trips(&graph, &surface, &cfg, 4000, june(1), june(14)).unwrap();
        let n = trips.len();
        let (kept, report) = clean_trips(trips, &CleaningRules::default()).unwrap();
        assert_eq!(kept.len(), n, "rejects: {:?}", report);
        assert_eq!(report.rejected(), 0);
    }

    #[test]
    fn min_route_floor_is_respected() {
        let cfg = CityConfig::default();
        let (graph, surface) = generate_city(&cfg).unwrap();
        let trips = generate_trips(&graph, &surface, &cfg, 500, june(1), june(2)).unwrap();
        for t in &trips {
            assert!(t.trip_distance >= cfg.min_route_miles);
        }
    }
}
