//! Feature assembly and the descriptive statistics used during data
//! analysis: the model-ready feature matrix, pairwise correlations, the
//! weekday-by-hour speed heatmap and date-based splits.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trips::{EnrichedTrip, TripRecord};
use crate::util::fnv1a;

pub const TARGET_NAME: &str = "trip_duration";
pub const SCHEMA_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

/// Every feature the pipeline can derive from an enriched trip, with its
/// kind. `main_street` is the only categorical one.
const CATALOG: [(&str, FeatureKind); 16] = [
    ("vendor_id", FeatureKind::Numeric),
    ("passenger_count", FeatureKind::Numeric),
    ("weekday", FeatureKind::Numeric),
    ("hour", FeatureKind::Numeric),
    ("pickup_longitude", FeatureKind::Numeric),
    ("pickup_latitude", FeatureKind::Numeric),
    ("dropoff_longitude", FeatureKind::Numeric),
    ("dropoff_latitude", FeatureKind::Numeric),
    ("osrm_distance", FeatureKind::Numeric),
    ("osrm_duration", FeatureKind::Numeric),
    ("total_steps", FeatureKind::Numeric),
    ("total_turns", FeatureKind::Numeric),
    ("total_left", FeatureKind::Numeric),
    ("main_street", FeatureKind::Categorical),
    ("main_street_ratio", FeatureKind::Numeric),
    ("snowfall", FeatureKind::Numeric),
];
const EXTRA_WEATHER: [&str; 3] = ["snow_depth", "rainfall", "temperature"];

fn catalog_kind(name: &str) -> Option<FeatureKind> {
    if EXTRA_WEATHER.contains(&name) {
        return Some(FeatureKind::Numeric);
    }
    CATALOG.iter().find(|(n, _)| *n == name).map(|(_, k)| *k)
}

/// Ordered feature schema plus the target name. Construction rejects
/// duplicate names and a target among the features; dropped features are
/// kept on an exclusion list so the persisted descriptor records them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u32,
    pub features: Vec<FeatureSpec>,
    #[serde(default)]
    pub excluded: Vec<String>,
    pub target: String,
    /// Encode `main_street` as a hashed integer instead of dropping it.
    pub hash_main_street: bool,
}

impl FeatureSchema {
    pub fn from_names(names: &[&str]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut features = Vec::with_capacity(names.len());
        for name in names {
            if *name == TARGET_NAME {
                return Err(Error::InvalidParam("target cannot be a feature".into()));
            }
            if !seen.insert(*name) {
                return Err(Error::InvalidParam(format!("duplicate feature `{name}`")));
            }
            let kind = catalog_kind(name)
                .ok_or_else(|| Error::InvalidParam(format!("unknown feature `{name}`")))?;
            features.push(FeatureSpec { name: name.to_string(), kind });
        }
        Ok(Self {
            version: SCHEMA_FORMAT_VERSION,
            features,
            excluded: Vec::new(),
            target: TARGET_NAME.to_string(),
            hash_main_street: false,
        })
    }

    /// The 11-feature schema of the long-term study: weekday, hour, the four
    /// coordinates, the kept route features and the two weather columns with
    /// visible impact. vendor_id, passenger_count, the three redundant turn
    /// counts and the low-impact weather columns are dropped.
    pub fn longterm() -> Self {
        Self::full()
            .without(&[
                "vendor_id",
                "passenger_count",
                "total_steps",
                "total_turns",
                "total_left",
                "snow_depth",
                "rainfall",
            ])
            .expect("static schema")
    }

    /// Short-term schema: the long-term features minus weekday and all
    /// weather columns.
    pub fn shortterm() -> Self {
        Self::longterm().without(&["weekday", "snowfall", "temperature"]).expect("static schema")
    }

    /// Every numeric feature the pipeline produces (main_street stays out of
    /// the numeric matrix unless hashing is enabled).
    pub fn full() -> Self {
        let names: Vec<&str> = CATALOG
            .iter()
            .filter(|(_, k)| *k == FeatureKind::Numeric)
            .map(|(n, _)| *n)
            .chain(EXTRA_WEATHER.iter().copied())
            .collect();
        Self::from_names(&names).expect("static schema")
    }

    /// Drop the named features (the short-term exclusions, importance-based
    /// drops and similar); they move onto the exclusion list.
    pub fn without(&self, names: &[&str]) -> Result<Self> {
        for name in names {
            if !self.features.iter().any(|f| f.name == *name) {
                return Err(Error::InvalidParam(format!("cannot exclude unknown feature `{name}`")));
            }
        }
        let mut out = self.clone();
        out.features.retain(|f| !names.contains(&f.name.as_str()));
        out.excluded.extend(names.iter().map(|n| n.to_string()));
        Ok(out)
    }

    /// Append catalog features (e.g. reintroducing `vendor_id`).
    pub fn with(&self, names: &[&str]) -> Result<Self> {
        let mut out = self.clone();
        for name in names {
            if out.features.iter().any(|f| f.name == *name) {
                return Err(Error::InvalidParam(format!("duplicate feature `{name}`")));
            }
            let kind = catalog_kind(name)
                .ok_or_else(|| Error::InvalidParam(format!("unknown feature `{name}`")))?;
            out.features.push(FeatureSpec { name: name.to_string(), kind });
            out.excluded.retain(|e| e != name);
        }
        Ok(out)
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Stable hash of the schema layout, recorded in serialized models.
    pub fn schema_hash(&self) -> u64 {
        let mut repr = String::new();
        for f in &self.features {
            repr.push_str(&f.name);
            repr.push(match f.kind {
                FeatureKind::Numeric => 'n',
                FeatureKind::Categorical => 'c',
            });
            repr.push(';');
        }
        repr.push_str(&self.target);
        if self.hash_main_street {
            repr.push('#');
        }
        fnv1a(repr.as_bytes())
    }

    /// Extract this schema's feature vector from a trip. `None` means a
    /// required value is missing (weather or route not joined yet).
    pub fn extract_row(&self, trip: &EnrichedTrip) -> Result<Vec<f64>> {
        self.features
            .iter()
            .map(|f| {
                feature_value(trip, &f.name, self.hash_main_street).ok_or(Error::MissingFeature {
                    row: trip.record.id,
                    column: f.name.clone(),
                })
            })
            .collect()
    }
}

fn feature_value(trip: &EnrichedTrip, name: &str, hash_main_street: bool) -> Option<f64> {
    let r = &trip.record;
    match name {
        "vendor_id" => Some(r.vendor_id as f64),
        "passenger_count" => Some(r.passenger_count as f64),
        "weekday" => Some(r.weekday() as f64),
        "hour" => Some(r.hour() as f64),
        "pickup_longitude" => Some(r.pickup_longitude),
        "pickup_latitude" => Some(r.pickup_latitude),
        "dropoff_longitude" => Some(r.dropoff_longitude),
        "dropoff_latitude" => Some(r.dropoff_latitude),
        "osrm_distance" => trip.route.as_ref().map(|f| f.osrm_distance),
        "osrm_duration" => trip.route.as_ref().map(|f| f.osrm_duration),
        "total_steps" => trip.route.as_ref().map(|f| f.total_steps as f64),
        "total_turns" => trip.route.as_ref().map(|f| f.total_turns as f64),
        "total_left" => trip.route.as_ref().map(|f| f.total_left as f64),
        "main_street" => {
            if hash_main_street {
                trip.route.as_ref().map(|f| (fnv1a(f.main_street.as_bytes()) % 1024) as f64)
            } else {
                None
            }
        }
        "main_street_ratio" => trip.route.as_ref().map(|f| f.main_street_ratio),
        "snowfall" => trip.weather.map(|w| w.snowfall),
        "snow_depth" => trip.weather.map(|w| w.snow_depth),
        "rainfall" => trip.weather.map(|w| w.rainfall),
        "temperature" => trip.weather.map(|w| w.temperature),
        _ => None,
    }
}

/// Row-major numeric matrix with its column schema and the target vector.
/// No NaN or infinity survives assembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct FeatureMatrix<S: Scalar> {
    pub schema: FeatureSchema,
    pub data: Vec<S>,
    pub targets: Vec<S>,
    pub row_ids: Vec<u64>,
}

impl<S: Scalar> FeatureMatrix<S> {
    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn row(&self, i: usize) -> &[S] {
        let p = self.n_features();
        &self.data[i * p..(i + 1) * p]
    }

    /// Column-major copy for split search.
    pub fn columns(&self) -> Vec<Vec<S>> {
        let (n, p) = (self.n_rows(), self.n_features());
        let mut cols = vec![Vec::with_capacity(n); p];
        for i in 0..n {
            let row = self.row(i);
            for (j, col) in cols.iter_mut().enumerate() {
                col.push(row[j]);
            }
        }
        cols
    }

    /// New matrix with the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let p = self.n_features();
        let mut data = Vec::with_capacity(rows.len() * p);
        let mut targets = Vec::with_capacity(rows.len());
        let mut row_ids = Vec::with_capacity(rows.len());
        for &i in rows {
            data.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
            row_ids.push(self.row_ids[i]);
        }
        Self { schema: self.schema.clone(), data, targets, row_ids }
    }
}

/// Assemble the feature matrix from enriched trips. Pure: identical inputs
/// give bit-identical matrices. A missing or non-finite value is an error
/// naming the row and column.
pub fn assemble_features<S: Scalar>(trips: &[EnrichedTrip], schema: &FeatureSchema) -> Result<FeatureMatrix<S>> {
    let p = schema.len();
    let mut data = Vec::with_capacity(trips.len() * p);
    let mut targets = Vec::with_capacity(trips.len());
    let mut row_ids = Vec::with_capacity(trips.len());
    for trip in trips {
        let row = schema.extract_row(trip)?;
        for (value, spec) in row.iter().zip(&schema.features) {
            if !value.is_finite() {
                return Err(Error::NonFinite { row: trip.record.id, column: spec.name.clone() });
            }
            data.push(S::from_f64(*value));
        }
        let y = trip.record.trip_duration;
        if !y.is_finite() {
            return Err(Error::NonFinite { row: trip.record.id, column: TARGET_NAME.into() });
        }
        targets.push(S::from_f64(y));
        row_ids.push(trip.record.id);
    }
    Ok(FeatureMatrix { schema: schema.clone(), data, targets, row_ids })
}

/// Matrix CSV: `row_id,pickup_datetime,<features...>,trip_duration`. The
/// pickup datetime rides along so date-based splits work downstream; it is
/// not a feature column.
pub fn write_matrix<S: Scalar, W: Write>(w: W, matrix: &FeatureMatrix<S>, pickups: &[NaiveDateTime]) -> Result<()> {
    if pickups.len() != matrix.n_rows() {
        return Err(Error::LengthMismatch { left: pickups.len(), right: matrix.n_rows() });
    }
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["row_id".to_string(), "pickup_datetime".to_string()];
    header.extend(matrix.schema.names().iter().map(|s| s.to_string()));
    header.push(matrix.schema.target.clone());
    wtr.write_record(&header)?;
    for (i, pickup) in pickups.iter().enumerate() {
        let mut record = vec![
            matrix.row_ids[i].to_string(),
            pickup.format(crate::trips::DATETIME_FMT).to_string(),
        ];
        record.extend(matrix.row(i).iter().map(|v| v.to_string()));
        record.push(matrix.targets[i].to_string());
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read a matrix CSV written by [`write_matrix`], validating it against the
/// sidecar schema.
pub fn read_matrix<S: Scalar, R: Read>(reader: R, schema: &FeatureSchema) -> Result<(FeatureMatrix<S>, Vec<NaiveDateTime>)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut expected = vec!["row_id".to_string(), "pickup_datetime".to_string()];
    expected.extend(schema.names().iter().map(|s| s.to_string()));
    expected.push(schema.target.clone());
    let got: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
    if got != expected {
        return Err(Error::InvalidParam(format!(
            "matrix header does not match schema: expected {expected:?}, got {got:?}"
        )));
    }
    let p = schema.len();
    let mut data = Vec::new();
    let mut targets = Vec::new();
    let mut row_ids = Vec::new();
    let mut pickups = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let get = |i: usize| record.get(i).ok_or_else(|| Error::InvalidParam("short matrix row".into()));
        row_ids.push(get(0)?.trim().parse::<u64>().map_err(|_| Error::InvalidParam("bad row_id".into()))?);
        pickups.push(
            NaiveDateTime::parse_from_str(get(1)?.trim(), crate::trips::DATETIME_FMT)
                .map_err(|e| Error::InvalidParam(format!("bad pickup_datetime: {e}")))?,
        );
        for j in 0..p {
            let v: f64 = get(2 + j)?.trim().parse().map_err(|_| Error::InvalidParam("bad matrix value".into()))?;
            data.push(S::from_f64(v));
        }
        let y: f64 = get(2 + p)?.trim().parse().map_err(|_| Error::InvalidParam("bad target value".into()))?;
        targets.push(S::from_f64(y));
    }
    Ok((FeatureMatrix { schema: schema.clone(), data, targets, row_ids }, pickups))
}

/// Pairwise Pearson correlations over the feature columns plus the target.
/// Zero-variance columns are reported as undefined rather than 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    values: Vec<Option<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.names.len() + j]
    }

    pub fn by_name(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        self.get(i, j)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["feature".to_string()];
        header.extend(self.names.clone());
        wtr.write_record(&header)?;
        for (i, name) in self.names.iter().enumerate() {
            let mut record = vec![name.clone()];
            for j in 0..self.names.len() {
                record.push(self.get(i, j).map(|v| v.to_string()).unwrap_or_default());
            }
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn pearson_correlation<S: Scalar>(matrix: &FeatureMatrix<S>) -> Result<CorrelationMatrix> {
    let n = matrix.n_rows();
    if n < 2 {
        return Err(Error::InvalidParam("correlation requires at least 2 rows".into()));
    }
    let mut names: Vec<String> = matrix.schema.names().iter().map(|s| s.to_string()).collect();
    names.push(matrix.schema.target.clone());

    let mut cols = matrix.columns();
    cols.push(matrix.targets.clone());
    let k = cols.len();

    let means: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64)
        .collect();
    let centered: Vec<Vec<f64>> = cols
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|v| v.as_f64() - m).collect())
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();

    let mut values = vec![None; k * k];
    for i in 0..k {
        for j in i..k {
            let value = if norms[i] == 0.0 || norms[j] == 0.0 {
                None
            } else if i == j {
                Some(1.0)
            } else {
                let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                Some((dot / (norms[i] * norms[j])).clamp(-1.0, 1.0))
            };
            values[i * k + j] = value;
            values[j * k + i] = value;
        }
    }
    Ok(CorrelationMatrix { names, values })
}

/// 7x24 matrix of median speeds (mph) by weekday and pickup hour. Cells
/// with no trips stay `None`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeedHeatmap {
    pub cells: Vec<Vec<Option<f64>>>,
}

impl SpeedHeatmap {
    pub fn get(&self, weekday: u8, hour: u8) -> Option<f64> {
        self.cells[weekday as usize][hour as usize]
    }

    /// Long-format CSV: `weekday,hour,median_speed_mph` with an empty value
    /// for missing cells.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["weekday", "hour", "median_speed_mph"])?;
        for (d, row) in self.cells.iter().enumerate() {
            for (h, cell) in row.iter().enumerate() {
                wtr.write_record([
                    d.to_string(),
                    h.to_string(),
                    cell.map(|v| v.to_string()).unwrap_or_default(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

pub fn speed_heatmap(trips: &[TripRecord]) -> SpeedHeatmap {
    let mut buckets: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); 24]; 7];
    for t in trips {
        if t.trip_duration > 0.0 && t.trip_distance >= 0.0 {
            buckets[t.weekday() as usize][t.hour() as usize].push(t.speed_mph());
        }
    }
    let cells = buckets
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|mut cell| if cell.is_empty() { None } else { Some(median(&mut cell)) })
                .collect()
        })
        .collect();
    SpeedHeatmap { cells }
}

/// Membership by pickup date, inclusive on both ends of each range. Trips
/// outside both ranges are dropped and counted.
pub fn temporal_split(
    trips: Vec<EnrichedTrip>,
    train: (NaiveDate, NaiveDate),
    test: (NaiveDate, NaiveDate),
) -> Result<(Vec<EnrichedTrip>, Vec<EnrichedTrip>, usize)> {
    if train.0 > train.1 || test.0 > test.1 {
        return Err(Error::InvalidParam("date range start after end".into()));
    }
    if train.0 <= test.1 && test.0 <= train.1 {
        return Err(Error::OverlappingRanges);
    }
    let mut train_set = Vec::new();
    let mut test_set = Vec::new();
    let mut dropped = 0usize;
    for trip in trips {
        let date = trip.record.pickup_datetime.date();
        if date >= train.0 && date <= train.1 {
            train_set.push(trip);
        } else if date >= test.0 && date <= test.1 {
            test_set.push(trip);
        } else {
            dropped += 1;
        }
    }
    Ok((train_set, test_set, dropped))
}

/// Membership by pickup datetime in half-open windows `[start, end)`. The
/// hour-granular variant used by the evaluation harness.
pub fn datetime_split(
    trips: &[EnrichedTrip],
    train: (NaiveDateTime, NaiveDateTime),
    test: (NaiveDateTime, NaiveDateTime),
) -> Result<(Vec<EnrichedTrip>, Vec<EnrichedTrip>, usize)> {
    if train.0 >= train.1 || test.0 >= test.1 {
        return Err(Error::InvalidParam("empty datetime window".into()));
    }
    if train.0 < test.1 && test.0 < train.1 {
        return Err(Error::OverlappingRanges);
    }
    let mut train_set = Vec::new();
    let mut test_set = Vec::new();
    let mut dropped = 0usize;
    for trip in trips {
        let t = trip.record.pickup_datetime;
        if t >= train.0 && t < train.1 {
            train_set.push(trip.clone());
        } else if t >= test.0 && t < test.1 {
            test_set.push(trip.clone());
        } else {
            dropped += 1;
        }
    }
    Ok((train_set, test_set, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::RouteFeatures;
    use crate::trips::WeatherDay;

    fn enriched(id: u64, weekday_date: (u32, u32), hour: u32) -> EnrichedTrip {
        let pickup = NaiveDate::from_ymd_opt(2016, weekday_date.0, weekday_date.1)
            .unwrap()
            .and_hms_opt(hour, 15, 0)
            .unwrap();
        let record = TripRecord {
            id,
            vendor_id: 1,
            pickup_datetime: pickup,
            dropoff_datetime: pickup + chrono::Duration::seconds(600),
            passenger_count: 1,
            pickup_longitude: -73.98,
            pickup_latitude: 40.75,
            dropoff_longitude: -73.97,
            dropoff_latitude: 40.76,
            trip_duration: 600.0,
            trip_distance: 2.0,
        };
        let mut t = EnrichedTrip::new(record);
        t.weather = Some(WeatherDay {
            date: pickup.date(),
            snowfall: 0.0,
            snow_depth: 0.0,
            rainfall: 0.0,
            temperature: 70.0,
        });
        t.route = Some(RouteFeatures {
            osrm_distance: 2.1,
            osrm_duration: 480.0,
            total_steps: 3,
            total_turns: 2,
            total_left: 1,
            main_street: "Broadway".into(),
            main_street_ratio: 0.6,
        });
        t.pickup_zone = Some(0);
        t.dropoff_zone = Some(1);
        t
    }

    #[test]
    fn longterm_schema_is_the_expected_eleven() {
        let schema = FeatureSchema::longterm();
        assert_eq!(schema.len(), 11);
        assert_eq!(
            schema.names(),
            vec![
                "weekday",
                "hour",
                "pickup_longitude",
                "pickup_latitude",
                "dropoff_longitude",
                "dropoff_latitude",
                "osrm_distance",
                "osrm_duration",
                "main_street_ratio",
                "snowfall",
                "temperature"
            ]
        );
        for dropped in ["vendor_id", "passenger_count", "total_steps", "total_left", "total_turns"] {
            assert!(schema.index_of(dropped).is_none(), "{dropped} should be dropped");
        }
    }

    #[test]
    fn shortterm_excludes_weekday_and_weather() {
        let schema = FeatureSchema::shortterm();
        assert_eq!(schema.len(), 8);
        assert!(schema.index_of("weekday").is_none());
        assert!(schema.index_of("snowfall").is_none());
        assert!(schema.index_of("temperature").is_none());
        assert!(schema.index_of("hour").is_some());
    }

    #[test]
    fn weekday_hour_encoding() {
        // 2016-06-07 is a Tuesday
        let trips = vec![enriched(1, (6, 7), 7)];
        let m: FeatureMatrix<f64> = assemble_features(&trips, &FeatureSchema::longterm()).unwrap();
        let row = m.row(0);
        assert_eq!(row[m.schema.index_of("weekday").unwrap()], 1.0);
        assert_eq!(row[m.schema.index_of("hour").unwrap()], 7.0);
    }

    #[test]
    fn matrix_shape_and_target_length() {
        let trips = vec![enriched(1, (6, 7), 7), enriched(2, (6, 8), 9), enriched(3, (6, 9), 11)];
        let m: FeatureMatrix<f64> = assemble_features(&trips, &FeatureSchema::longterm()).unwrap();
        assert_eq!(m.n_rows(), 3);
        assert_eq!(m.n_features(), 11);
        assert_eq!(m.data.len(), 33);
        assert_eq!(m.targets.len(), 3);
    }

    #[test]
    fn missing_route_is_an_error_naming_row_and_column() {
        let mut t = enriched(17, (6, 7), 7);
        t.route = None;
        let err = assemble_features::<f64>(&[t], &FeatureSchema::longterm()).unwrap_err();
        match err {
            Error::MissingFeature { row, column } => {
                assert_eq!(row, 17);
                assert_eq!(column, "osrm_distance");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn assembly_is_pure() {
        let trips = vec![enriched(1, (6, 7), 7), enriched(2, (6, 8), 9)];
        let a: FeatureMatrix<f64> = assemble_features(&trips, &FeatureSchema::longterm()).unwrap();
        let b: FeatureMatrix<f64> = assemble_features(&trips, &FeatureSchema::longterm()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn correlation_hand_values() {
        // x = (1, 2, 3) and z = (6, 4, 2) are perfectly anti-correlated
        let schema = FeatureSchema::from_names(&["hour", "snowfall"]).unwrap();
        let m = FeatureMatrix::<f64> {
            schema,
            data: vec![1.0, 6.0, 2.0, 4.0, 3.0, 2.0],
            targets: vec![2.0, 4.0, 6.0], // y = 2x
            row_ids: vec![1, 2, 3],
        };
        let c = pearson_correlation(&m).unwrap();
        assert_eq!(c.by_name("hour", "hour"), Some(1.0));
        assert!((c.by_name("hour", "snowfall").unwrap() + 1.0).abs() < 1e-12);
        assert!((c.by_name("hour", "trip_duration").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_is_undefined_not_zero() {
        let schema = FeatureSchema::from_names(&["hour", "snowfall"]).unwrap();
        let m = FeatureMatrix::<f64> {
            schema,
            data: vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0],
            targets: vec![1.0, 2.0, 3.0],
            row_ids: vec![1, 2, 3],
        };
        let c = pearson_correlation(&m).unwrap();
        assert_eq!(c.by_name("snowfall", "hour"), None);
        assert_eq!(c.by_name("snowfall", "snowfall"), None);
        assert_eq!(c.by_name("hour", "hour"), Some(1.0));
    }

    #[test]
    fn correlation_needs_two_rows() {
        let schema = FeatureSchema::from_names(&["hour"]).unwrap();
        let m = FeatureMatrix::<f64> { schema, data: vec![1.0], targets: vec![1.0], row_ids: vec![1] };
        assert!(pearson_correlation(&m).is_err());
    }

    #[test]
    fn heatmap_single_trip_and_median_of_two() {
        // Monday 2016-06-06, 08:xx, 10 miles in 1 hour
        let mut a = enriched(1, (6, 6), 8).record;
        a.trip_duration = 3600.0;
        a.trip_distance = 10.0;
        let hm = speed_heatmap(&[a.clone()]);
        assert_eq!(hm.get(0, 8), Some(10.0));
        assert_eq!(hm.get(0, 9), None);
        assert_eq!(hm.get(1, 8), None);

        let mut b = a.clone();
        b.trip_distance = 20.0;
        let hm = speed_heatmap(&[a, b]);
        assert_eq!(hm.get(0, 8), Some(15.0));
    }

    #[test]
    fn temporal_split_boundaries_inclusive() {
        let june = |d| NaiveDate::from_ymd_opt(2016, 6, d).unwrap();
        let trips = vec![enriched(1, (6, 20), 8), enriched(2, (6, 21), 8), enriched(3, (6, 1), 8)];
        let (train, test, dropped) =
            temporal_split(trips, (june(2), june(20)), (june(21), june(30))).unwrap();
        assert_eq!(train.len(), 1);
        assert_eq!(train[0].record.id, 1);
        assert_eq!(test.len(), 1);
        assert_eq!(test[0].record.id, 2);
        assert_eq!(dropped, 1);
    }

    #[test]
    fn overlapping_ranges_error() {
        let june = |d| NaiveDate::from_ymd_opt(2016, 6, d).unwrap();
        let err = temporal_split(vec![], (june(1), june(21)), (june(21), june(30))).unwrap_err();
        assert!(matches!(err, Error::OverlappingRanges));
    }

    #[test]
    fn matrix_rejects_a_mismatched_schema() {
        let trips = vec![enriched(1, (6, 7), 7)];
        let m: FeatureMatrix<f64> = assemble_features(&trips, &FeatureSchema::longterm()).unwrap();
        let pickups = vec![trips[0].record.pickup_datetime];
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m, &pickups).unwrap();
        let err = read_matrix::<f64, _>(buf.as_slice(), &FeatureSchema::shortterm()).unwrap_err();
        assert!(matches!(err, Error::InvalidParam(_)));
    }

    #[test]
    fn matrix_csv_round_trip() {
        let trips = vec![enriched(1, (6, 7), 7), enriched(2, (6, 8), 9)];
        let schema = FeatureSchema::longterm();
        let m: FeatureMatrix<f64> = assemble_features(&trips, &schema).unwrap();
        let pickups: Vec<NaiveDateTime> = trips.iter().map(|t| t.record.pickup_datetime).collect();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m, &pickups).unwrap();
        let (back, back_pickups) = read_matrix::<f64, _>(buf.as_slice(), &schema).unwrap();
        assert_eq!(back, m);
        assert_eq!(back_pickups, pickups);
    }

    #[test]
    fn schema_hash_tracks_layout() {
        assert_ne!(FeatureSchema::longterm().schema_hash(), FeatureSchema::shortterm().schema_hash());
        assert_eq!(FeatureSchema::longterm().schema_hash(), FeatureSchema::longterm().schema_hash());
    }

    #[test]
    fn exclusions_are_recorded_and_reinstatable() {
        let schema = FeatureSchema::longterm();
        assert!(schema.excluded.iter().any(|e| e == "vendor_id"));
        assert!(FeatureSchema::shortterm().excluded.iter().any(|e| e == "weekday"));
        let with_vendor = schema.with(&["vendor_id"]).unwrap();
        assert!(with_vendor.index_of("vendor_id").is_some());
        assert!(!with_vendor.excluded.iter().any(|e| e == "vendor_id"));
    }

    #[test]
    fn hashed_main_street_is_available_behind_the_flag() {
        let trip = enriched(1, (6, 7), 7);
        let mut schema = FeatureSchema::longterm().with(&["main_street"]).unwrap();
        // without the flag the categorical column has no numeric value
        assert!(schema.extract_row(&trip).is_err());
        schema.hash_main_street = true;
        let row = schema.extract_row(&trip).unwrap();
        let hashed = row[schema.index_of("main_street").unwrap()];
        assert!((0.0..1024.0).contains(&hashed));
        assert_eq!(hashed.fract(), 0.0);
    }
}
