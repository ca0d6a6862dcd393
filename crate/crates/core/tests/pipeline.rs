//! End-to-end library checks on generated cities: the descriptive
//! statistics recover what the generator put in.

use chrono::NaiveDate;

use tripcast_core::features::{assemble_features, pearson_correlation, speed_heatmap, FeatureSchema};
use tripcast_core::routing::route_trips;
use tripcast_core::synth::{generate_city, generate_trips, generate_weather, CityConfig};
use tripcast_core::trips::{assign_zones, enrich, join_weather, EnrichedTrip, TripRecord, ZoneGrid};
use tripcast_core::Matrix;

fn june(d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 6, d).unwrap()
}

fn build(cfg: &CityConfig, n: usize, from: NaiveDate, to: NaiveDate) -> (Vec<TripRecord>, Vec<EnrichedTrip>) {
    let (graph, surface) = generate_city(cfg).unwrap();
    let records = generate_trips(&graph, &surface, cfg, n, from, to).unwrap();
    let weather = generate_weather(cfg, from, to);
    let mut trips = enrich(records.clone());
    join_weather(&mut trips, &weather).unwrap();
    let (min, max) = graph.bounding_box();
    let grid =
        ZoneGrid::new(min.lon - 0.005, min.lat - 0.005, max.lon + 0.005, max.lat + 0.005, 0.005).unwrap();
    assign_zones(&mut trips, &grid).unwrap();
    route_trips(&graph, &mut trips, 0.25).unwrap();
    (records, trips)
}

#[test]
fn heatmap_recovers_the_low_speed_region() {
    // moderate noise so the congestion surface shows through cleanly
    let cfg = CityConfig { noise_sigma: 10.0, ..CityConfig::default() };
    let (records, _) = build(&cfg, 25_000, june(6), june(19));
    let heatmap = speed_heatmap(&records);
    let midday = heatmap.get(2, 13).expect("midweek midday cell populated");
    for weekday in 0..7 {
        for hour in [2u8, 3, 4] {
            if let Some(night) = heatmap.get(weekday, hour) {
                assert!(
                    midday < night,
                    "midday-midweek {midday:.2} mph must sit below night cell ({weekday},{hour}) {night:.2}"
                );
            }
        }
    }
}

#[test]
fn routed_distance_tracks_reported_distance() {
    let cfg = CityConfig::default();
    let (_, trips) = build(&cfg, 8_000, june(6), june(12));
    let schema = FeatureSchema::longterm();
    let matrix: Matrix = assemble_features(&trips, &schema).unwrap();
    let correlations = pearson_correlation(&matrix).unwrap();
    // the generator routes trips on the graph, so the routed duration is
    // strongly tied to the target
    let c = correlations.by_name("osrm_duration", "trip_duration").unwrap();
    assert!(c > 0.9, "osrm_duration vs trip_duration correlation {c:.3}");

    // and the reported distance is the routed distance itself
    let mut dist_pairs: Vec<(f64, f64)> = trips
        .iter()
        .map(|t| (t.route.as_ref().unwrap().osrm_distance, t.record.trip_distance))
        .collect();
    let n = dist_pairs.len() as f64;
    let mean_a = dist_pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_b = dist_pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (a, b) in dist_pairs.drain(..) {
        cov += (a - mean_a) * (b - mean_b);
        var_a += (a - mean_a) * (a - mean_a);
        var_b += (b - mean_b) * (b - mean_b);
    }
    let r = cov / (var_a.sqrt() * var_b.sqrt());
    assert!(r > 0.9, "osrm_distance vs trip_distance correlation {r:.3}");
}

#[test]
fn snow_days_join_and_slow_the_city() {
    let cfg = CityConfig {
        snow_dates: vec![june(8)],
        snow_multiplier: 0.6,
        noise_sigma: 0.0,
        congestion_depth: 0.0,
        ..CityConfig::default()
    };
    let (records, trips) = build(&cfg, 6_000, june(6), june(10));
    // weather joined the configured snowfall on the snow day
    for trip in &trips {
        let w = trip.weather.unwrap();
        if trip.record.pickup_datetime.date() == june(8) {
            assert_eq!(w.snowfall, 8.0);
        } else {
            assert_eq!(w.snowfall, 0.0);
        }
    }
    // and the snow day is visibly slower
    let mean_speed = |day: NaiveDate| {
        let speeds: Vec<f64> = records
            .iter()
            .filter(|t| t.pickup_datetime.date() == day)
            .map(|t| t.speed_mph())
            .collect();
        speeds.iter().sum::<f64>() / speeds.len() as f64
    };
    let dry = mean_speed(june(7));
    let snowy = mean_speed(june(8));
    assert!(
        snowy < dry * 0.7,
        "snow day mean speed {snowy:.2} should sit well below the dry day {dry:.2}"
    );
}

#[test]
fn f32_pipeline_smoke() {
    // the numeric core is scalar-generic; run a small fit end to end in f32
    let cfg = CityConfig { rows: 8, cols: 6, min_route_miles: 0.2, noise_sigma: 5.0, ..CityConfig::default() };
    let (_, trips) = build(&cfg, 800, june(6), june(8));
    let schema = FeatureSchema::longterm();
    let matrix = assemble_features::<f32>(&trips, &schema).unwrap();
    let params = tripcast_core::tree::TreeParams { max_depth: 5, min_child_weight: 3, ..Default::default() };
    let tree = tripcast_core::tree::fit_tree(&matrix, &params).unwrap();
    let preds = tree.predict_batch(&matrix).unwrap();
    let score = tripcast_core::metrics::rmse(&preds, &matrix.targets).unwrap();
    assert!(score.is_finite() && score >= 0.0);

    let gbt = tripcast_core::boost::GbtParams {
        num_rounds: 10,
        min_child_weight: 3,
        ..Default::default()
    };
    let model = tripcast_core::boost::fit_gbt(&matrix, None, &gbt).unwrap();
    assert!(model.predict(matrix.row(0)).unwrap() >= 0.0_f32);
}
