//! Trip record ingestion: TLC-format CSV parsing, cleaning rules, daily
//! weather join and zone assignment for the naive baseline.
//!
//! Parsing never coerces bad fields: a row that fails to parse is counted,
//! recorded with its line number and skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::routing::RouteFeatures;

pub const DATETIME_FMT: &str = "%Y-%m-%d %H:%M:%S";

/// One taxi trip as read from a TLC-format file. `id` is the 1-based line
/// number of the row in its source file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub id: u64,
    pub vendor_id: u8,
    pub pickup_datetime: NaiveDateTime,
    pub dropoff_datetime: NaiveDateTime,
    pub passenger_count: u32,
    pub pickup_longitude: f64,
    pub pickup_latitude: f64,
    pub dropoff_longitude: f64,
    pub dropoff_latitude: f64,
    /// Target variable, seconds.
    pub trip_duration: f64,
    /// Meter-reported distance, miles.
    pub trip_distance: f64,
}

impl TripRecord {
    /// Weekday of the pickup, Monday = 0.
    pub fn weekday(&self) -> u8 {
        self.pickup_datetime.weekday().num_days_from_monday() as u8
    }

    /// Hour of the pickup, 0-23.
    pub fn hour(&self) -> u8 {
        self.pickup_datetime.hour() as u8
    }

    /// Mean speed in miles per hour.
    pub fn speed_mph(&self) -> f64 {
        self.trip_distance / (self.trip_duration / 3600.0)
    }
}

/// Daily weather observation; the weather service data carries averages per
/// day only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherDay {
    pub date: NaiveDate,
    pub snowfall: f64,
    pub snow_depth: f64,
    pub rainfall: f64,
    pub temperature: f64,
}

/// Rectangular lat/lon grid standing in for the zipcode polygons of the
/// naive baseline. Cell ids are row-major and stable across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneGrid {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
    pub cell_size: f64,
}

impl ZoneGrid {
    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64, cell_size: f64) -> Result<Self> {
        if !(min_lon < max_lon && min_lat < max_lat) || cell_size <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "degenerate zone grid: lon [{min_lon}, {max_lon}], lat [{min_lat}, {max_lat}], cell {cell_size}"
            )));
        }
        Ok(Self { min_lon, min_lat, max_lon, max_lat, cell_size })
    }

    pub fn n_cols(&self) -> u32 {
        ((self.max_lon - self.min_lon) / self.cell_size).ceil().max(1.0) as u32
    }

    pub fn n_rows(&self) -> u32 {
        ((self.max_lat - self.min_lat) / self.cell_size).ceil().max(1.0) as u32
    }

    /// Cell id for an in-box coordinate. Points on the max edge fall into
    /// the last row/column so every in-box point maps to exactly one cell.
    pub fn cell(&self, lon: f64, lat: f64) -> Result<u32> {
        if lon < self.min_lon || lon > self.max_lon || lat < self.min_lat || lat > self.max_lat {
            return Err(Error::OutOfGrid { lon, lat });
        }
        let col = (((lon - self.min_lon) / self.cell_size) as u32).min(self.n_cols() - 1);
        let row = (((lat - self.min_lat) / self.cell_size) as u32).min(self.n_rows() - 1);
        Ok(row * self.n_cols() + col)
    }
}

/// Cleaning thresholds. Defaults: 10 s minimum, 3 h maximum, 60 mph speed
/// cap (the cap is configurable; the posted limit in the study area is 50).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleaningRules {
    pub min_duration: f64,
    pub max_duration: f64,
    pub max_speed: f64,
}

impl Default for CleaningRules {
    fn default() -> Self {
        Self { min_duration: 10.0, max_duration: 10_800.0, max_speed: 60.0 }
    }
}

impl CleaningRules {
    pub fn validate(&self) -> Result<()> {
        if self.min_duration >= self.max_duration {
            return Err(Error::InvalidParam(format!(
                "min_duration {} must be below max_duration {}",
                self.min_duration, self.max_duration
            )));
        }
        if self.max_speed <= 0.0 {
            return Err(Error::InvalidParam("max_speed must be positive".into()));
        }
        Ok(())
    }
}

/// Column mapping for trip files. Column names default to the TLC names;
/// the delimiter is configurable. When `trip_duration` is `None` the
/// duration is derived from the two timestamps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripSchema {
    pub delimiter: u8,
    pub vendor_id: String,
    pub pickup_datetime: String,
    pub dropoff_datetime: String,
    pub passenger_count: String,
    pub pickup_longitude: String,
    pub pickup_latitude: String,
    pub dropoff_longitude: String,
    pub dropoff_latitude: String,
    pub trip_duration: Option<String>,
    pub trip_distance: String,
    /// Optional bounding box; rows outside it are skipped and counted,
    /// mirroring the restriction of the study to one borough.
    pub bounding_box: Option<ZoneGrid>,
}

impl Default for TripSchema {
    fn default() -> Self {
        Self {
            delimiter: b',',
            vendor_id: "vendor_id".into(),
            pickup_datetime: "pickup_datetime".into(),
            dropoff_datetime: "dropoff_datetime".into(),
            passenger_count: "passenger_count".into(),
            pickup_longitude: "pickup_longitude".into(),
            pickup_latitude: "pickup_latitude".into(),
            dropoff_longitude: "dropoff_longitude".into(),
            dropoff_latitude: "dropoff_latitude".into(),
            trip_duration: Some("trip_duration".into()),
            trip_distance: "trip_distance".into(),
            bounding_box: None,
        }
    }
}

/// Outcome of a parse run: parsed row count plus every rejected line with
/// its reason.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParseReport {
    pub data_rows: usize,
    pub parsed: usize,
    pub skipped: usize,
    pub rejects: Vec<ParseReject>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParseReject {
    pub line: u64,
    pub reason: String,
}

impl ParseReport {
    pub fn write_rejects_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["line", "reason"])?;
        for r in &self.rejects {
            wtr.write_record([r.line.to_string(), r.reason.clone()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

struct ColumnIndex {
    vendor_id: usize,
    pickup_datetime: usize,
    dropoff_datetime: usize,
    passenger_count: usize,
    pickup_longitude: usize,
    pickup_latitude: usize,
    dropoff_longitude: usize,
    dropoff_latitude: usize,
    trip_duration: Option<usize>,
    trip_distance: usize,
}

fn find_column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

impl ColumnIndex {
    fn resolve(headers: &csv::StringRecord, schema: &TripSchema) -> Result<Self> {
        Ok(Self {
            vendor_id: find_column(headers, &schema.vendor_id)?,
            pickup_datetime: find_column(headers, &schema.pickup_datetime)?,
            dropoff_datetime: find_column(headers, &schema.dropoff_datetime)?,
            passenger_count: find_column(headers, &schema.passenger_count)?,
            pickup_longitude: find_column(headers, &schema.pickup_longitude)?,
            pickup_latitude: find_column(headers, &schema.pickup_latitude)?,
            dropoff_longitude: find_column(headers, &schema.dropoff_longitude)?,
            dropoff_latitude: find_column(headers, &schema.dropoff_latitude)?,
            trip_duration: match &schema.trip_duration {
                Some(name) => Some(find_column(headers, name)?),
                None => None,
            },
            trip_distance: find_column(headers, &schema.trip_distance)?,
        })
    }
}

fn parse_row(record: &csv::StringRecord, line: u64, idx: &ColumnIndex, schema: &TripSchema) -> std::result::Result<TripRecord, String> {
    fn field<'a>(record: &'a csv::StringRecord, i: usize, name: &str) -> std::result::Result<&'a str, String> {
        record.get(i).ok_or_else(|| format!("missing field `{name}`"))
    }
    fn num(record: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<f64, String> {
        let raw = field(record, i, name)?;
        raw.trim().parse::<f64>().map_err(|_| format!("unparseable {name} `{raw}`"))
    }
    fn datetime(record: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<NaiveDateTime, String> {
        let raw = field(record, i, name)?;
        NaiveDateTime::parse_from_str(raw.trim(), DATETIME_FMT)
            .map_err(|_| format!("unparseable {name} `{raw}`"))
    }

    let vendor_raw = field(record, idx.vendor_id, "vendor_id")?;
    let vendor_id = vendor_raw
        .trim()
        .parse::<u8>()
        .ok()
        .filter(|v| *v == 1 || *v == 2)
        .ok_or_else(|| format!("unparseable vendor_id `{vendor_raw}`"))?;

    let pickup_datetime = datetime(record, idx.pickup_datetime, "pickup_datetime")?;
    let dropoff_datetime = datetime(record, idx.dropoff_datetime, "dropoff_datetime")?;
    let passenger_raw = field(record, idx.passenger_count, "passenger_count")?;
    let passenger_count = passenger_raw
        .trim()
        .parse::<u32>()
        .map_err(|_| format!("unparseable passenger_count `{passenger_raw}`"))?;
    let pickup_longitude = num(record, idx.pickup_longitude, "pickup_longitude")?;
    let pickup_latitude = num(record, idx.pickup_latitude, "pickup_latitude")?;
    let dropoff_longitude = num(record, idx.dropoff_longitude, "dropoff_longitude")?;
    let dropoff_latitude = num(record, idx.dropoff_latitude, "dropoff_latitude")?;
    let trip_distance = num(record, idx.trip_distance, "trip_distance")?;

    let elapsed = (dropoff_datetime - pickup_datetime).num_seconds() as f64;
    let trip_duration = match idx.trip_duration {
        Some(i) => {
            let d = num(record, i, "trip_duration")?;
            // the reported duration and the timestamp difference must agree
            if (d - elapsed).abs() > 1.0 {
                return Err(format!(
                    "trip_duration {d} disagrees with timestamps ({elapsed} s)"
                ));
            }
            d
        }
        None => elapsed,
    };

    if let Some(bbox) = &schema.bounding_box {
        let inside = |lon, lat| bbox.cell(lon, lat).is_ok();
        if !inside(pickup_longitude, pickup_latitude) || !inside(dropoff_longitude, dropoff_latitude) {
            return Err("coordinates outside configured bounding box".into());
        }
    }

    Ok(TripRecord {
        id: line,
        vendor_id,
        pickup_datetime,
        dropoff_datetime,
        passenger_count,
        pickup_longitude,
        pickup_latitude,
        dropoff_longitude,
        dropoff_latitude,
        trip_duration,
        trip_distance,
    })
}

/// Parse a character-separated trip file. The file must have a header row;
/// a configured column that is absent from the header is a configuration
/// error naming that column.
pub fn parse_trips<R: Read>(reader: R, schema: &TripSchema) -> Result<(Vec<TripRecord>, ParseReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx = ColumnIndex::resolve(&headers, schema)?;

    let mut trips = Vec::new();
    let mut report = ParseReport::default();
    for (row_number, record) in rdr.records().enumerate() {
        // header is line 1, first data row is line 2
        let line = row_number as u64 + 2;
        report.data_rows += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                report.skipped += 1;
                report.rejects.push(ParseReject { line, reason: e.to_string() });
                continue;
            }
        };
        match parse_row(&record, line, &idx, schema) {
            Ok(trip) => {
                report.parsed += 1;
                trips.push(trip);
            }
            Err(reason) => {
                report.skipped += 1;
                report.rejects.push(ParseReject { line, reason });
            }
        }
    }
    Ok((trips, report))
}

pub fn parse_trips_path(path: &Path, schema: &TripSchema) -> Result<(Vec<TripRecord>, ParseReport)> {
    let file = std::fs::File::open(path)?;
    parse_trips(std::io::BufReader::new(file), schema)
}

/// Write trips in the same TLC format `parse_trips` reads. Coordinates are
/// written at the documented 5-decimal precision; other numeric fields use
/// the shortest round-trippable representation so parse -> write -> parse
/// is exact.
pub fn write_trips<W: Write>(w: W, trips: &[TripRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "vendor_id",
        "pickup_datetime",
        "dropoff_datetime",
        "passenger_count",
        "pickup_longitude",
        "pickup_latitude",
        "dropoff_longitude",
        "dropoff_latitude",
        "trip_distance",
        "trip_duration",
    ])?;
    for t in trips {
        wtr.write_record([
            t.vendor_id.to_string(),
            t.pickup_datetime.format(DATETIME_FMT).to_string(),
            t.dropoff_datetime.format(DATETIME_FMT).to_string(),
            t.passenger_count.to_string(),
            format!("{:.5}", t.pickup_longitude),
            format!("{:.5}", t.pickup_latitude),
            format!("{:.5}", t.dropoff_longitude),
            format!("{:.5}", t.dropoff_latitude),
            t.trip_distance.to_string(),
            t.trip_duration.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Cleaning rule a trip violated. A trip violating several rules is
/// attributed to the first in this order; the filtering outcome itself is
/// order-independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CleaningRule {
    MinDuration,
    MaxDuration,
    MaxSpeed,
}

impl CleaningRule {
    pub fn label(&self) -> &'static str {
        match self {
            CleaningRule::MinDuration => "min_duration",
            CleaningRule::MaxDuration => "max_duration",
            CleaningRule::MaxSpeed => "max_speed",
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RejectionReport {
    pub input: usize,
    pub kept: usize,
    pub min_duration: usize,
    pub max_duration: usize,
    pub max_speed: usize,
    /// (trip id = source line, rule) per rejected trip.
    pub details: Vec<(u64, CleaningRule)>,
}

impl RejectionReport {
    pub fn rejected(&self) -> usize {
        self.min_duration + self.max_duration + self.max_speed
    }

    pub fn count(&self, rule: CleaningRule) -> usize {
        match rule {
            CleaningRule::MinDuration => self.min_duration,
            CleaningRule::MaxDuration => self.max_duration,
            CleaningRule::MaxSpeed => self.max_speed,
        }
    }

    /// Summary CSV: `rule,count`.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["rule", "count"])?;
        wtr.write_record(["min_duration", &self.min_duration.to_string()])?;
        wtr.write_record(["max_duration", &self.max_duration.to_string()])?;
        wtr.write_record(["max_speed", &self.max_speed.to_string()])?;
        wtr.write_record(["kept", &self.kept.to_string()])?;
        wtr.flush()?;
        Ok(())
    }

    /// Detail CSV: `line,rule` per rejected trip.
    pub fn write_detail_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["line", "rule"])?;
        for (line, rule) in &self.details {
            wtr.write_record([line.to_string(), rule.label().to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn violated_rule(trip: &TripRecord, rules: &CleaningRules) -> Option<CleaningRule> {
    if trip.trip_duration < rules.min_duration {
        Some(CleaningRule::MinDuration)
    } else if trip.trip_duration > rules.max_duration {
        Some(CleaningRule::MaxDuration)
    } else if trip.speed_mph() > rules.max_speed {
        Some(CleaningRule::MaxSpeed)
    } else {
        None
    }
}

/// Remove trips with untrustworthy values. Pure filter: kept + rejected
/// always partitions the input.
pub fn clean_trips(trips: Vec<TripRecord>, rules: &CleaningRules) -> Result<(Vec<TripRecord>, RejectionReport)> {
    rules.validate()?;
    let mut report = RejectionReport { input: trips.len(), ..Default::default() };
    let mut kept = Vec::with_capacity(trips.len());
    for trip in trips {
        match violated_rule(&trip, rules) {
            None => kept.push(trip),
            Some(rule) => {
                match rule {
                    CleaningRule::MinDuration => report.min_duration += 1,
                    CleaningRule::MaxDuration => report.max_duration += 1,
                    CleaningRule::MaxSpeed => report.max_speed += 1,
                }
                report.details.push((trip.id, rule));
            }
        }
    }
    report.kept = kept.len();
    Ok((kept, report))
}

/// A trip as it moves through the enrichment stages. Weather, zones and
/// route features start out unset and are filled in by the join steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedTrip {
    pub record: TripRecord,
    pub weather: Option<WeatherDay>,
    pub pickup_zone: Option<u32>,
    pub dropoff_zone: Option<u32>,
    pub route: Option<RouteFeatures>,
}

impl EnrichedTrip {
    pub fn new(record: TripRecord) -> Self {
        Self { record, weather: None, pickup_zone: None, dropoff_zone: None, route: None }
    }
}

pub fn enrich(records: Vec<TripRecord>) -> Vec<EnrichedTrip> {
    records.into_iter().map(EnrichedTrip::new).collect()
}

/// Read a weather CSV with columns `date,snowfall,snow_depth,rainfall,temperature`.
pub fn read_weather<R: Read>(reader: R) -> Result<Vec<WeatherDay>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| find_column(&headers, name);
    let (d, sf, sd, rf, t) = (
        col("date")?,
        col("snowfall")?,
        col("snow_depth")?,
        col("rainfall")?,
        col("temperature")?,
    );
    let mut days = Vec::new();
    let mut seen = BTreeSet::new();
    for record in rdr.records() {
        let record = record?;
        let get = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::InvalidParam("short weather row".into()))
        };
        let date = NaiveDate::parse_from_str(get(d)?.trim(), "%Y-%m-%d")
            .map_err(|e| Error::InvalidParam(format!("bad weather date: {e}")))?;
        if !seen.insert(date) {
            return Err(Error::InvalidParam(format!("duplicate weather date {date}")));
        }
        let parse = |i: usize, name: &str| -> Result<f64> {
            get(i)?.trim().parse::<f64>().map_err(|_| Error::InvalidParam(format!("bad weather {name}")))
        };
        let day = WeatherDay {
            date,
            snowfall: parse(sf, "snowfall")?,
            snow_depth: parse(sd, "snow_depth")?,
            rainfall: parse(rf, "rainfall")?,
            temperature: parse(t, "temperature")?,
        };
        if day.snowfall < 0.0 || day.snow_depth < 0.0 || day.rainfall < 0.0 {
            return Err(Error::InvalidParam(format!("negative precipitation on {date}")));
        }
        days.push(day);
    }
    Ok(days)
}

pub fn read_weather_path(path: &Path) -> Result<Vec<WeatherDay>> {
    let file = std::fs::File::open(path)?;
    read_weather(std::io::BufReader::new(file))
}

pub fn write_weather<W: Write>(w: W, days: &[WeatherDay]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["date", "snowfall", "snow_depth", "rainfall", "temperature"])?;
    for d in days {
        wtr.write_record([
            d.date.to_string(),
            d.snowfall.to_string(),
            d.snow_depth.to_string(),
            d.rainfall.to_string(),
            d.temperature.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Attach the pickup-date weather to every trip. Fails listing every
/// uncovered date; there is no silent default.
pub fn join_weather(trips: &mut [EnrichedTrip], weather: &[WeatherDay]) -> Result<()> {
    let by_date: BTreeMap<NaiveDate, &WeatherDay> = weather.iter().map(|w| (w.date, w)).collect();
    let mut missing = BTreeSet::new();
    for trip in trips.iter() {
        let date = trip.record.pickup_datetime.date();
        if !by_date.contains_key(&date) {
            missing.insert(date);
        }
    }
    if !missing.is_empty() {
        return Err(Error::WeatherGap(missing.into_iter().collect()));
    }
    for trip in trips.iter_mut() {
        let date = trip.record.pickup_datetime.date();
        trip.weather = Some(**by_date.get(&date).expect("coverage checked"));
    }
    Ok(())
}

/// Attach pickup and dropoff cell ids. Deterministic for a fixed grid; an
/// out-of-box coordinate is an error echoing the coordinate.
pub fn assign_zones(trips: &mut [EnrichedTrip], grid: &ZoneGrid) -> Result<()> {
    for trip in trips.iter_mut() {
        let r = &trip.record;
        trip.pickup_zone = Some(grid.cell(r.pickup_longitude, r.pickup_latitude)?);
        trip.dropoff_zone = Some(grid.cell(r.dropoff_longitude, r.dropoff_latitude)?);
    }
    Ok(())
}

const ENRICHED_HEADER: [&str; 16] = [
    "trip_id",
    "vendor_id",
    "pickup_datetime",
    "dropoff_datetime",
    "passenger_count",
    "pickup_longitude",
    "pickup_latitude",
    "dropoff_longitude",
    "dropoff_latitude",
    "trip_distance",
    "trip_duration",
    "pickup_zone",
    "dropoff_zone",
    "snowfall",
    "snow_depth",
    "rainfall",
];

/// Write the cleaned/enriched intermediate artifact (zones and weather
/// joined, routes not yet attached).
pub fn write_enriched<W: Write>(w: W, trips: &[EnrichedTrip]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = ENRICHED_HEADER.to_vec();
    header.push("temperature");
    wtr.write_record(&header)?;
    for t in trips {
        let r = &t.record;
        let weather = t.weather.ok_or(Error::MissingFeature { row: r.id, column: "snowfall".into() })?;
        let pz = t.pickup_zone.ok_or(Error::MissingFeature { row: r.id, column: "pickup_zone".into() })?;
        let dz = t.dropoff_zone.ok_or(Error::MissingFeature { row: r.id, column: "dropoff_zone".into() })?;
        wtr.write_record([
            r.id.to_string(),
            r.vendor_id.to_string(),
            r.pickup_datetime.format(DATETIME_FMT).to_string(),
            r.dropoff_datetime.format(DATETIME_FMT).to_string(),
            r.passenger_count.to_string(),
            format!("{:.5}", r.pickup_longitude),
            format!("{:.5}", r.pickup_latitude),
            format!("{:.5}", r.dropoff_longitude),
            format!("{:.5}", r.dropoff_latitude),
            r.trip_distance.to_string(),
            r.trip_duration.to_string(),
            pz.to_string(),
            dz.to_string(),
            weather.snowfall.to_string(),
            weather.snow_depth.to_string(),
            weather.rainfall.to_string(),
            weather.temperature.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read the artifact written by [`write_enriched`].
pub fn read_enriched<R: Read>(reader: R) -> Result<Vec<EnrichedTrip>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| find_column(&headers, name);
    let idx: Vec<usize> = ENRICHED_HEADER
        .iter()
        .chain(std::iter::once(&"temperature"))
        .map(|n| col(n))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let get = |k: usize| -> Result<&str> {
            record.get(idx[k]).ok_or_else(|| Error::InvalidParam("short enriched row".into()))
        };
        let parse_f = |k: usize| -> Result<f64> {
            get(k)?.trim().parse().map_err(|_| Error::InvalidParam(format!("bad field `{}`", ENRICHED_HEADER.get(k).unwrap_or(&"temperature"))))
        };
        let parse_dt = |k: usize| -> Result<NaiveDateTime> {
            NaiveDateTime::parse_from_str(get(k)?.trim(), DATETIME_FMT)
                .map_err(|e| Error::InvalidParam(format!("bad datetime: {e}")))
        };
        let pickup_datetime = parse_dt(2)?;
        let record_out = TripRecord {
            id: get(0)?.trim().parse().map_err(|_| Error::InvalidParam("bad trip_id".into()))?,
            vendor_id: get(1)?.trim().parse().map_err(|_| Error::InvalidParam("bad vendor_id".into()))?,
            pickup_datetime,
            dropoff_datetime: parse_dt(3)?,
            passenger_count: get(4)?.trim().parse().map_err(|_| Error::InvalidParam("bad passenger_count".into()))?,
            pickup_longitude: parse_f(5)?,
            pickup_latitude: parse_f(6)?,
            dropoff_longitude: parse_f(7)?,
            dropoff_latitude: parse_f(8)?,
            trip_distance: parse_f(9)?,
            trip_duration: parse_f(10)?,
        };
        out.push(EnrichedTrip {
            record: record_out,
            weather: Some(WeatherDay {
                date: pickup_datetime.date(),
                snowfall: parse_f(13)?,
                snow_depth: parse_f(14)?,
                rainfall: parse_f(15)?,
                temperature: parse_f(16)?,
            }),
            pickup_zone: Some(get(11)?.trim().parse().map_err(|_| Error::InvalidParam("bad pickup_zone".into()))?),
            dropoff_zone: Some(get(12)?.trim().parse().map_err(|_| Error::InvalidParam("bad dropoff_zone".into()))?),
            route: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trip(id: u64, duration: f64, distance: f64) -> TripRecord {
        let pickup = NaiveDate::from_ymd_opt(2016, 6, 7).unwrap().and_hms_opt(7, 15, 0).unwrap();
        TripRecord {
            id,
            vendor_id: 1,
            pickup_datetime: pickup,
            dropoff_datetime: pickup + chrono::Duration::seconds(duration as i64),
            passenger_count: 1,
            pickup_longitude: -73.98,
            pickup_latitude: 40.75,
            dropoff_longitude: -73.97,
            dropoff_latitude: 40.76,
            trip_duration: duration,
            trip_distance: distance,
        }
    }

    const HEADER: &str = "vendor_id,pickup_datetime,dropoff_datetime,passenger_count,pickup_longitude,pickup_latitude,dropoff_longitude,dropoff_latitude,trip_distance,trip_duration";

    fn good_row(duration: u64) -> String {
        let pickup = NaiveDate::from_ymd_opt(2016, 6, 7).unwrap().and_hms_opt(8, 0, 0).unwrap();
        let dropoff = pickup + chrono::Duration::seconds(duration as i64);
        format!(
            "2,{},{},1,-73.98000,40.75000,-73.97000,40.76000,2.1,{}",
            pickup.format(DATETIME_FMT),
            dropoff.format(DATETIME_FMT),
            duration
        )
    }

    #[test]
    fn parses_direct_field_mapping() {
        let data = format!("{HEADER}\n{}\n", good_row(600));
        let (trips, report) = parse_trips(data.as_bytes(), &TripSchema::default()).unwrap();
        assert_eq!(trips.len(), 1);
        assert_eq!(report.skipped, 0);
        assert_eq!(trips[0].trip_duration, 600.0);
        assert_eq!(trips[0].trip_distance, 2.1);
        assert_eq!(trips[0].id, 2);
    }

    #[test]
    fn skips_non_numeric_longitude() {
        let bad = good_row(600).replace("-73.98000", "abc");
        let data = format!("{HEADER}\n{}\n{}\n", good_row(600), bad);
        let (trips, report) = parse_trips(data.as_bytes(), &TripSchema::default()).unwrap();
        assert_eq!(trips.len(), 1);
        assert_eq!(report.skipped, 1);
        assert_eq!(report.rejects[0].line, 3);
        assert!(report.rejects[0].reason.contains("pickup_longitude"));
    }

    #[test]
    fn hundred_rows_three_malformed() {
        let mut lines = vec![HEADER.to_string()];
        for i in 0..100u64 {
            // lines 17, 42, 77 (1-based file lines) are malformed
            let line_no = i + 2;
            if line_no == 17 {
                lines.push(good_row(600).replace("-73.98000", "west"));
            } else if line_no == 42 {
                lines.push(good_row(600).replace("2016-06-07 08:00:00", "not-a-date"));
            } else if line_no == 77 {
                lines.push(good_row(600).replacen("2,", "9,", 1)); // vendor outside {1,2}
            } else {
                lines.push(good_row(300 + i));
            }
        }
        let data = lines.join("\n");
        let (trips, report) = parse_trips(data.as_bytes(), &TripSchema::default()).unwrap();
        assert_eq!(trips.len(), 97);
        assert_eq!(report.skipped, 3);
        let reject_lines: Vec<u64> = report.rejects.iter().map(|r| r.line).collect();
        assert_eq!(reject_lines, vec![17, 42, 77]);
    }

    #[test]
    fn missing_column_is_config_error() {
        let data = "a,b\n1,2\n";
        let err = parse_trips(data.as_bytes(), &TripSchema::default()).unwrap_err();
        match err {
            Error::MissingColumn(name) => assert_eq!(name, "vendor_id"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn header_only_file_is_empty_with_no_warnings() {
        let data = format!("{HEADER}\n");
        let (trips, report) = parse_trips(data.as_bytes(), &TripSchema::default()).unwrap();
        assert!(trips.is_empty());
        assert_eq!(report.skipped, 0);
    }

    #[test]
    fn duration_timestamp_disagreement_is_rejected() {
        let row = good_row(600).replace(",600", ",700");
        let data = format!("{HEADER}\n{row}\n");
        let (trips, report) = parse_trips(data.as_bytes(), &TripSchema::default()).unwrap();
        assert!(trips.is_empty());
        assert_eq!(report.skipped, 1);
        assert!(report.rejects[0].reason.contains("disagrees"));
    }

    #[test]
    fn duration_derived_when_column_absent() {
        let schema = TripSchema { trip_duration: None, ..TripSchema::default() };
        let header = HEADER.replace(",trip_duration", "");
        let row = good_row(600);
        let row = row.rsplit_once(',').unwrap().0.to_string();
        let data = format!("{header}\n{row}\n");
        let (trips, _) = parse_trips(data.as_bytes(), &schema).unwrap();
        assert_eq!(trips[0].trip_duration, 600.0);
    }

    #[test]
    fn cleaning_examples_from_the_rules() {
        let rules = CleaningRules::default();
        // 5 s -> min duration
        assert_eq!(violated_rule(&trip(1, 5.0, 0.1), &rules), Some(CleaningRule::MinDuration));
        // 600 s over 12 mi -> 72 mph -> speed
        assert_eq!(violated_rule(&trip(2, 600.0, 12.0), &rules), Some(CleaningRule::MaxSpeed));
        // 3600 s over 10 mi -> 10 mph -> kept
        assert_eq!(violated_rule(&trip(3, 3600.0, 10.0), &rules), None);
        // > 3 h -> max duration
        assert_eq!(violated_rule(&trip(4, 10_801.0, 5.0), &rules), Some(CleaningRule::MaxDuration));
    }

    #[test]
    fn rejection_counts_partition_input() {
        let trips = vec![
            trip(1, 5.0, 0.1),
            trip(2, 600.0, 12.0),
            trip(3, 3600.0, 10.0),
            trip(4, 12_000.0, 5.0),
            trip(5, 2.0, 9.0), // violates min duration and speed; attributed to min duration
        ];
        let (kept, report) = clean_trips(trips, &CleaningRules::default()).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(report.min_duration, 2);
        assert_eq!(report.max_duration, 1);
        assert_eq!(report.max_speed, 1);
        assert_eq!(report.kept + report.rejected(), report.input);
    }

    #[test]
    fn cleaning_is_idempotent() {
        let trips = vec![trip(1, 5.0, 0.1), trip(2, 600.0, 2.0), trip(3, 3600.0, 10.0)];
        let (kept, _) = clean_trips(trips, &CleaningRules::default()).unwrap();
        let first = kept.clone();
        let (again, report) = clean_trips(kept, &CleaningRules::default()).unwrap();
        assert_eq!(again, first);
        assert_eq!(report.rejected(), 0);
    }

    #[test]
    fn weather_join_attaches_pickup_date_values() {
        let day = WeatherDay {
            date: NaiveDate::from_ymd_opt(2016, 1, 23).unwrap(),
            snowfall: 26.6,
            snow_depth: 20.0,
            rainfall: 0.0,
            temperature: 28.0,
        };
        let mut t = trip(1, 600.0, 2.0);
        t.pickup_datetime = day.date.and_hms_opt(9, 0, 0).unwrap();
        t.dropoff_datetime = t.pickup_datetime + chrono::Duration::seconds(600);
        let mut enriched = enrich(vec![t]);
        join_weather(&mut enriched, &[day]).unwrap();
        assert_eq!(enriched[0].weather.unwrap().snowfall, 26.6);
    }

    #[test]
    fn weather_gap_names_missing_date() {
        let mut enriched = enrich(vec![trip(1, 600.0, 2.0)]);
        let off_date = WeatherDay {
            date: NaiveDate::from_ymd_opt(2016, 6, 8).unwrap(),
            snowfall: 0.0,
            snow_depth: 0.0,
            rainfall: 0.0,
            temperature: 70.0,
        };
        let err = join_weather(&mut enriched, &[off_date]).unwrap_err();
        match err {
            Error::WeatherGap(dates) => {
                assert_eq!(dates, vec![NaiveDate::from_ymd_opt(2016, 6, 7).unwrap()]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn all_zero_weather_joins_zeros() {
        let day = WeatherDay {
            date: NaiveDate::from_ymd_opt(2016, 6, 7).unwrap(),
            snowfall: 0.0,
            snow_depth: 0.0,
            rainfall: 0.0,
            temperature: 0.0,
        };
        let mut enriched = enrich(vec![trip(1, 600.0, 2.0)]);
        join_weather(&mut enriched, &[day]).unwrap();
        let w = enriched[0].weather.unwrap();
        assert_eq!((w.snowfall, w.snow_depth, w.rainfall, w.temperature), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn zone_grid_corner_and_offsets() {
        let grid = ZoneGrid::new(-74.0, 40.7, -73.9, 40.8, 0.005).unwrap();
        // box corner -> cell 0
        assert_eq!(grid.cell(-74.0, 40.7).unwrap(), 0);
        // two points 2 * cell_size apart on the lon axis differ by 2 cells
        let a = grid.cell(-73.9990, 40.7001).unwrap();
        let b = grid.cell(-73.9990 + 2.0 * 0.005, 40.7001).unwrap();
        assert_eq!(b - a, 2);
        // just outside -> error echoing the point
        let err = grid.cell(-74.0001, 40.7).unwrap_err();
        match err {
            Error::OutOfGrid { lon, .. } => assert_eq!(lon, -74.0001),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn max_edge_maps_into_last_cell() {
        let grid = ZoneGrid::new(0.0, 0.0, 1.0, 1.0, 0.25).unwrap();
        assert_eq!(grid.cell(1.0, 1.0).unwrap(), grid.n_rows() * grid.n_cols() - 1);
    }

    #[test]
    fn trips_round_trip_through_csv() {
        let trips = vec![trip(2, 600.0, 2.1), trip(3, 301.0, 0.62)];
        let mut buf = Vec::new();
        write_trips(&mut buf, &trips).unwrap();
        let (parsed, report) = parse_trips(buf.as_slice(), &TripSchema::default()).unwrap();
        assert_eq!(report.skipped, 0);
        assert_eq!(parsed, trips);
        // and the serialized form is stable
        let mut buf2 = Vec::new();
        write_trips(&mut buf2, &parsed).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn enriched_round_trip() {
        let day = WeatherDay {
            date: NaiveDate::from_ymd_opt(2016, 6, 7).unwrap(),
            snowfall: 0.0,
            snow_depth: 0.0,
            rainfall: 0.12,
            temperature: 71.0,
        };
        let mut enriched = enrich(vec![trip(2, 600.0, 2.0)]);
        join_weather(&mut enriched, &[day]).unwrap();
        let grid = ZoneGrid::new(-74.0, 40.7, -73.9, 40.8, 0.005).unwrap();
        assign_zones(&mut enriched, &grid).unwrap();
        let mut buf = Vec::new();
        write_enriched(&mut buf, &enriched).unwrap();
        let back = read_enriched(buf.as_slice()).unwrap();
        assert_eq!(back, enriched);
    }
}
