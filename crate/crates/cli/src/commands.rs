//! Subcommand implementations. Every artifact goes through the manifest
//! writer; every upstream read names the missing artifact on failure.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDateTime;

use tripcast_core::boost::Growth;
use tripcast_core::eval::{
    compare_short_long, longterm_eval, shortterm_sweep, LongtermConfig, ShorttermConfig, SweepMatrix,
};
use tripcast_core::features::{
    assemble_features, pearson_correlation, read_matrix, speed_heatmap, write_matrix, FeatureSchema,
};
use tripcast_core::forest::ForestKind;
use tripcast_core::grid::{grid_search, ModelConfig, ModelKind};
use tripcast_core::metrics::rmse;
use tripcast_core::routing::{
    extract_route_features, fastest_route, load_graph, read_route_features, route_trips, write_edges,
    write_nodes, write_route_features, GeoPoint, RoadGraph,
};
use tripcast_core::synth::{generate_city, generate_trips, generate_weather};
use tripcast_core::trips::{
    assign_zones, clean_trips, enrich, join_weather, parse_trips, read_enriched, read_weather,
    write_enriched, write_trips, write_weather, EnrichedTrip, TripRecord, TripSchema, ZoneGrid,
    DATETIME_FMT,
};
use tripcast_core::{Matrix, Real};

use crate::config::{parse_date, parse_datetime, RunConfig};
use crate::manifest::{read_artifact, write_artifact};
use crate::model_io::{SavedModel, MODEL_FORMAT_VERSION};

pub struct Ctx {
    pub config: RunConfig,
    pub config_hash: String,
    pub single_thread: bool,
}

impl Ctx {
    pub fn new(config: RunConfig, single_thread: bool) -> Self {
        let config_hash = config.config_hash();
        Self { config, config_hash, single_thread }
    }

    fn write(&self, command: &str, path: &Path, bytes: &[u8]) -> Result<()> {
        write_artifact(path, bytes, command, self.config.seed, &self.config_hash)?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn to_bytes<F>(f: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> tripcast_core::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn synth(ctx: &Ctx) -> Result<()> {
    let config = &ctx.config;
    let city = config.city_config()?;
    let start = parse_date(&config.synth.start_date)?;
    let end = parse_date(&config.synth.end_date)?;
    let (graph, surface) = generate_city(&city)?;
    println!(
        "generated city: {} nodes, {} directed edges, seed {}",
        graph.n_nodes(),
        graph.n_edges(),
        city.seed
    );
    let weather = generate_weather(&city, start, end);
    let trips = generate_trips(&graph, &surface, &city, config.synth.n_trips, start, end)?;
    println!("generated {} trips over {} days", trips.len(), (end - start).num_days() + 1);

    ctx.write("synth", &config.artifact("nodes.csv"), &to_bytes(|w| write_nodes(w, &graph))?)?;
    ctx.write("synth", &config.artifact("edges.csv"), &to_bytes(|w| write_edges(w, &graph))?)?;
    ctx.write("synth", &config.artifact("weather.csv"), &to_bytes(|w| write_weather(w, &weather))?)?;
    ctx.write("synth", &config.artifact("trips.csv"), &to_bytes(|w| write_trips(w, &trips))?)?;
    Ok(())
}

fn load_road_graph(config: &RunConfig) -> Result<RoadGraph> {
    let nodes = config.artifact("nodes.csv");
    let edges = config.artifact("edges.csv");
    read_artifact(&nodes)?;
    read_artifact(&edges)?;
    Ok(load_graph(&nodes, &edges)?)
}

fn zone_grid(config: &RunConfig) -> Result<ZoneGrid> {
    let z = &config.zones;
    if let (Some(min_lon), Some(min_lat), Some(max_lon), Some(max_lat)) =
        (z.min_lon, z.min_lat, z.max_lon, z.max_lat)
    {
        return Ok(ZoneGrid::new(min_lon, min_lat, max_lon, max_lat, z.cell_size)?);
    }
    // derive the box from the road graph, padded by one cell
    let graph = load_road_graph(config)
        .context("zone bounds not configured and no graph to derive them from")?;
    let (min, max) = graph.bounding_box();
    Ok(ZoneGrid::new(
        min.lon - z.cell_size,
        min.lat - z.cell_size,
        max.lon + z.cell_size,
        max.lat + z.cell_size,
        z.cell_size,
    )?)
}

pub fn ingest(ctx: &Ctx) -> Result<()> {
    let config = &ctx.config;
    let trips_bytes = read_artifact(&config.artifact("trips.csv"))?;
    // explicitly configured zone bounds double as the study bounding box:
    // rows outside it are skipped at parse time
    let z = &config.zones;
    let bounding_box = match (z.min_lon, z.min_lat, z.max_lon, z.max_lat) {
        (Some(min_lon), Some(min_lat), Some(max_lon), Some(max_lat)) => {
            Some(ZoneGrid::new(min_lon, min_lat, max_lon, max_lat, z.cell_size)?)
        }
        _ => None,
    };
    let schema = TripSchema { bounding_box, ..TripSchema::default() };
    let (records, parse_report) = parse_trips(trips_bytes.as_slice(), &schema)?;
    println!(
        "parsed {} rows: {} records, {} skipped",
        parse_report.data_rows, parse_report.parsed, parse_report.skipped
    );
    ctx.write(
        "ingest",
        &config.artifact("parse_rejects.csv"),
        &to_bytes(|w| parse_report.write_rejects_csv(w))?,
    )?;

    let (kept, rejection) = clean_trips(records, &config.cleaning)?;
    println!(
        "cleaning kept {} of {} ({} min_duration, {} max_duration, {} max_speed)",
        rejection.kept, rejection.input, rejection.min_duration, rejection.max_duration, rejection.max_speed
    );
    ctx.write(
        "ingest",
        &config.artifact("rejects_summary.csv"),
        &to_bytes(|w| rejection.write_summary_csv(w))?,
    )?;
    ctx.write(
        "ingest",
        &config.artifact("rejects_detail.csv"),
        &to_bytes(|w| rejection.write_detail_csv(w))?,
    )?;

    let weather_bytes = read_artifact(&config.artifact("weather.csv"))?;
    let weather = read_weather(weather_bytes.as_slice())?;
    let mut enriched = enrich(kept);
    join_weather(&mut enriched, &weather)?;
    let grid = zone_grid(config)?;
    assign_zones(&mut enriched, &grid)?;
    println!("joined weather and assigned zones ({} x {} grid)", grid.n_rows(), grid.n_cols());

    ctx.write("ingest", &config.artifact("cleaned.csv"), &to_bytes(|w| write_enriched(w, &enriched))?)?;
    Ok(())
}

fn load_cleaned(config: &RunConfig) -> Result<Vec<EnrichedTrip>> {
    let bytes = read_artifact(&config.artifact("cleaned.csv"))?;
    Ok(read_enriched(bytes.as_slice())?)
}

/// Cleaned trips with their route features attached from the batch CSV.
fn load_featured_trips(config: &RunConfig) -> Result<Vec<EnrichedTrip>> {
    let mut trips = load_cleaned(config)?;
    let bytes = read_artifact(&config.artifact("route_features.csv"))?;
    let routes = read_route_features(bytes.as_slice())?;
    for trip in &mut trips {
        let id = trip.record.id;
        trip.route = Some(
            routes
                .get(&id)
                .cloned()
                .with_context(|| format!("route_features.csv has no row for trip {id}"))?,
        );
    }
    Ok(trips)
}

pub fn features(ctx: &Ctx) -> Result<()> {
    let config = &ctx.config;
    let mut trips = load_cleaned(config)?;
    let graph = load_road_graph(config)?;
    route_trips(&graph, &mut trips, config.routing.snap_radius_miles)?;
    println!("routed {} trips", trips.len());
    ctx.write(
        "features",
        &config.artifact("route_features.csv"),
        &to_bytes(|w| write_route_features(w, &trips))?,
    )?;

    let schema = config.feature_schema()?;
    let matrix: Matrix = assemble_features(&trips, &schema)?;
    let pickups: Vec<NaiveDateTime> = trips.iter().map(|t| t.record.pickup_datetime).collect();
    println!("assembled {} x {} matrix ({} schema)", matrix.n_rows(), matrix.n_features(), config.schema.kind);
    ctx.write(
        "features",
        &config.artifact("matrix.csv"),
        &to_bytes(|w| write_matrix(w, &matrix, &pickups))?,
    )?;
    ctx.write(
        "features",
        &config.artifact("matrix.schema.json"),
        serde_json::to_string_pretty(&schema)?.as_bytes(),
    )?;

    let correlations = pearson_correlation(&matrix)?;
    ctx.write(
        "features",
        &config.artifact("correlations.csv"),
        &to_bytes(|w| correlations.write_csv(w))?,
    )?;
    let records: Vec<TripRecord> = trips.iter().map(|t| t.record.clone()).collect();
    let heatmap = speed_heatmap(&records);
    ctx.write("features", &config.artifact("speed_heatmap.csv"), &to_bytes(|w| heatmap.write_csv(w))?)?;
    Ok(())
}

fn load_matrix(config: &RunConfig) -> Result<(Matrix, Vec<NaiveDateTime>, FeatureSchema)> {
    let schema_bytes = read_artifact(&config.artifact("matrix.schema.json"))?;
    let schema: FeatureSchema = serde_json::from_slice(&schema_bytes)?;
    let matrix_bytes = read_artifact(&config.artifact("matrix.csv"))?;
    let (matrix, pickups) = read_matrix::<Real, _>(matrix_bytes.as_slice(), &schema)?;
    Ok((matrix, pickups, schema))
}

fn split_matrix(
    matrix: &Matrix,
    pickups: &[NaiveDateTime],
    windows: &tripcast_core::eval::SplitWindows,
) -> (Matrix, Matrix) {
    let train_rows: Vec<usize> = (0..matrix.n_rows())
        .filter(|&i| pickups[i] >= windows.train_start && pickups[i] < windows.train_end)
        .collect();
    let test_rows: Vec<usize> = (0..matrix.n_rows())
        .filter(|&i| pickups[i] >= windows.test_start && pickups[i] < windows.test_end)
        .collect();
    (matrix.select_rows(&train_rows), matrix.select_rows(&test_rows))
}

fn model_config_for(config: &RunConfig, kind: ModelKind) -> Result<ModelConfig> {
    Ok(match kind {
        ModelKind::Cart => ModelConfig::Cart(config.tree_params()?),
        ModelKind::RandomForest => ModelConfig::Forest(config.forest_params(ForestKind::RandomForest)?),
        ModelKind::ExtraTrees => ModelConfig::Forest(config.forest_params(ForestKind::ExtraTrees)?),
        ModelKind::GbtDepthwise => ModelConfig::Gbt(config.gbt_params(Growth::Depthwise)?),
        ModelKind::GbtLeafwise => ModelConfig::Gbt(config.gbt_params(Growth::Leafwise)?),
    })
}

pub fn train(ctx: &Ctx) -> Result<()> {
    let config = &ctx.config;
    let (matrix, pickups, schema) = load_matrix(config)?;
    let windows = config.split_windows()?;
    let (train_matrix, valid_matrix) = split_matrix(&matrix, &pickups, &windows);
    if train_matrix.n_rows() == 0 {
        bail!("no rows fall inside the training window");
    }
    let kind = config.model_kind(&config.train.model)?;
    let model_config = model_config_for(config, kind)?;
    println!(
        "training {} on {} rows ({} validation rows)",
        kind.label(),
        train_matrix.n_rows(),
        valid_matrix.n_rows()
    );
    let valid = (valid_matrix.n_rows() > 0).then_some(&valid_matrix);
    let trained = model_config.train(&train_matrix, valid)?;
    if let Some(valid) = valid {
        let score = rmse(&trained.predict_batch(valid)?, &valid.targets)?;
        println!("validation rmse {:.3} ({} trees)", score, trained.n_trees());
    }

    if let tripcast_core::grid::TrainedModel::Gbt(model) = &trained {
        ctx.write(
            "train",
            &config.model_path(&format!("{}.training_log", kind.label())).with_extension("csv"),
            &to_bytes(|w| model.write_training_log(w))?,
        )?;
    }
    let saved = SavedModel {
        version: MODEL_FORMAT_VERSION,
        kind: kind.label().to_string(),
        seed: config.seed,
        config_hash: ctx.config_hash.clone(),
        schema,
        model: trained,
    };
    ctx.write("train", &config.model_path(kind.label()), saved.to_json()?.as_bytes())?;
    Ok(())
}

pub fn tune(ctx: &Ctx) -> Result<()> {
    let config = &ctx.config;
    let (matrix, pickups, _) = load_matrix(config)?;
    let windows = config.split_windows()?;
    let (train_matrix, valid_matrix) = split_matrix(&matrix, &pickups, &windows);
    if train_matrix.n_rows() == 0 || valid_matrix.n_rows() == 0 {
        bail!("tuning needs rows in both the training and validation windows");
    }
    let kind = config.model_kind(&config.tune.model)?;
    let base = model_config_for(config, kind)?;
    let grid = config.param_grid()?;
    println!(
        "tuning {} over {} step(s) on {} train / {} validation rows",
        kind.label(),
        grid.steps.len(),
        train_matrix.n_rows(),
        valid_matrix.n_rows()
    );
    let result = grid_search(base, &grid, &train_matrix, &valid_matrix)?;
    println!("best validation rmse {:.3}", result.best_rmse);
    ctx.write("tune", &config.report_path("tune_cells.csv"), &to_bytes(|w| result.write_cells_csv(w))?)?;
    ctx.write(
        "tune",
        &config.report_path("tune_best.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "model": kind.label(),
            "best_rmse": result.best_rmse,
            "params": result.best,
        }))?
        .as_bytes(),
    )?;
    Ok(())
}

fn longterm_config(config: &RunConfig) -> Result<LongtermConfig> {
    Ok(LongtermConfig {
        windows: config.split_windows()?,
        schema: config.feature_schema()?,
        cart: config.tree_params()?,
        rf: config.forest_params(ForestKind::RandomForest)?,
        et: config.forest_params(ForestKind::ExtraTrees)?,
        gbt_depthwise: config.gbt_params(Growth::Depthwise)?,
        gbt_leafwise: config.gbt_params(Growth::Leafwise)?,
        seed: config.seed,
    })
}

pub fn eval_long(ctx: &Ctx) -> Result<()> {
    let config = &ctx.config;
    let trips = load_featured_trips(config)?;
    let eval_config = longterm_config(config)?;
    let report = longterm_eval(&trips, &eval_config)?;
    for row in &report.rows {
        println!(
            "{:<16} rmse {:>10.3}  train {:>8.2}s  trees {}",
            row.model,
            row.rmse,
            row.train_seconds,
            row.n_trees.map(|n| n.to_string()).unwrap_or_else(|| "-".into())
        );
    }
    ctx.write(
        "eval-long",
        &config.report_path("longterm.csv"),
        &to_bytes(|w| report.write_report_csv(w, ctx.single_thread))?,
    )?;
    ctx.write(
        "eval-long",
        &config.report_path("importance.csv"),
        &to_bytes(|w| report.write_importance_csv(w))?,
    )?;
    Ok(())
}

pub fn eval_short(ctx: &Ctx) -> Result<()> {
    let config = &ctx.config;
    let trips = load_featured_trips(config)?;
    let sweep_config = ShorttermConfig {
        test_start: parse_datetime(&config.eval_short.test_start)?,
        n_hours: config.eval_short.hours,
        lookbacks: config.eval_short.lookbacks,
        schema: FeatureSchema::shortterm(),
        gbt: config.gbt_params(Growth::Depthwise)?,
        seed: config.seed,
    };
    let mut sweep = shortterm_sweep(&trips, &sweep_config)?;
    if ctx.single_thread {
        // wall times are hardware-bound; drop them in reproducibility mode
        for cell in &mut sweep.cells {
            cell.train_seconds = 0.0;
        }
    }
    let trained = sweep.cells.iter().filter(|c| c.rmse.is_some()).count();
    println!(
        "swept {} test hours x {} lookbacks: {} models trained, {} cells missing",
        sweep.n_hours,
        sweep.lookbacks,
        trained,
        sweep.cells.len() - trained
    );
    ctx.write(
        "eval-short",
        &config.report_path("shortterm.csv"),
        &to_bytes(|w| sweep.write_csv(w, ctx.single_thread))?,
    )?;
    ctx.write("eval-short", &config.report_path("shortterm.meta.json"), sweep.to_json()?.as_bytes())?;
    Ok(())
}

pub fn compare(ctx: &Ctx, model_file: Option<PathBuf>) -> Result<()> {
    let config = &ctx.config;
    let meta_bytes = read_artifact(&config.report_path("shortterm.meta.json"))?;
    let sweep = SweepMatrix::from_json(std::str::from_utf8(&meta_bytes)?)?;
    let model_path = model_file.unwrap_or_else(|| config.model_path(&config.train.model));
    let saved = SavedModel::load(&model_path)?;
    let trips = load_featured_trips(config)?;
    let comparison = compare_short_long(&sweep, &trips, &saved.model, &saved.schema)?;
    for wins in &comparison.weekday_wins {
        if wins.short_wins + wins.long_wins + wins.ties > 0 {
            println!(
                "weekday {}: short wins {}, long wins {}, ties {}",
                wins.weekday, wins.short_wins, wins.long_wins, wins.ties
            );
        }
    }
    ctx.write("compare", &config.report_path("comparison.csv"), &to_bytes(|w| comparison.write_csv(w))?)?;
    Ok(())
}

fn parse_queries(bytes: &[u8]) -> Result<Vec<EnrichedTrip>> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .with_context(|| format!("query file is missing column `{name}`"))
    };
    let dt_c = col("pickup_datetime")?;
    let plon_c = col("pickup_longitude")?;
    let plat_c = col("pickup_latitude")?;
    let dlon_c = col("dropoff_longitude")?;
    let dlat_c = col("dropoff_latitude")?;
    let vendor_c = headers.iter().position(|h| h.trim() == "vendor_id");
    let pass_c = headers.iter().position(|h| h.trim() == "passenger_count");

    let mut queries = Vec::new();
    for (row_number, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row_number as u64 + 2;
        let get = |i: usize| -> Result<&str> {
            record.get(i).with_context(|| format!("query line {line}: short row"))
        };
        let num = |i: usize| -> Result<f64> {
            get(i)?
                .trim()
                .parse()
                .with_context(|| format!("query line {line}: bad numeric field"))
        };
        let pickup = NaiveDateTime::parse_from_str(get(dt_c)?.trim(), DATETIME_FMT)
            .with_context(|| format!("query line {line}: bad pickup_datetime"))?;
        let record = TripRecord {
            id: line,
            vendor_id: vendor_c.map(|c| record.get(c).unwrap_or("1").trim().parse()).transpose()?.unwrap_or(1),
            pickup_datetime: pickup,
            dropoff_datetime: pickup,
            passenger_count: pass_c.map(|c| record.get(c).unwrap_or("1").trim().parse()).transpose()?.unwrap_or(1),
            pickup_longitude: num(plon_c)?,
            pickup_latitude: num(plat_c)?,
            dropoff_longitude: num(dlon_c)?,
            dropoff_latitude: num(dlat_c)?,
            trip_duration: 0.0,
            trip_distance: 0.0,
        };
        queries.push(EnrichedTrip::new(record));
    }
    Ok(queries)
}

pub fn predict(ctx: &Ctx, model_file: Option<PathBuf>, input: &Path, output: &Path) -> Result<()> {
    let config = &ctx.config;
    let model_path = model_file.unwrap_or_else(|| config.model_path(&config.train.model));
    let saved = SavedModel::load(&model_path)?;
    let query_bytes = read_artifact(input)?;
    let mut queries = parse_queries(&query_bytes)?;
    println!("predicting {} queries with {} ({})", queries.len(), saved.kind, model_path.display());

    let graph = load_road_graph(config)?;
    let needs_route = saved.schema.names().iter().any(|n| {
        matches!(*n, "osrm_distance" | "osrm_duration" | "total_steps" | "total_turns" | "total_left" | "main_street" | "main_street_ratio")
    });
    if needs_route {
        for trip in &mut queries {
            let r = &trip.record;
            let route = fastest_route(
                &graph,
                GeoPoint { lon: r.pickup_longitude, lat: r.pickup_latitude },
                GeoPoint { lon: r.dropoff_longitude, lat: r.dropoff_latitude },
                config.routing.snap_radius_miles,
            )?;
            trip.route = Some(extract_route_features(&graph, &route)?);
        }
    }
    let needs_weather = saved
        .schema
        .names()
        .iter()
        .any(|n| matches!(*n, "snowfall" | "snow_depth" | "rainfall" | "temperature"));
    if needs_weather {
        let weather_bytes = read_artifact(&config.artifact("weather.csv"))?;
        let weather = read_weather(weather_bytes.as_slice())?;
        join_weather(&mut queries, &weather)?;
    }

    let mut buf = Vec::new();
    {
        let mut wtr = csv::Writer::from_writer(&mut buf);
        wtr.write_record(["row_id", "predicted_duration"])
            .context("writing prediction header")?;
        for trip in &queries {
            let x: Vec<Real> = saved.schema.extract_row(trip)?;
            let pred = saved.model.predict(&x)?;
            wtr.write_record([trip.record.id.to_string(), pred.to_string()])
                .context("writing prediction row")?;
        }
        wtr.flush()?;
    }
    ctx.write("predict", output, &buf)?;
    Ok(())
}
