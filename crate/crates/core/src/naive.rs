//! Naive baseline: mean trip duration keyed by origin zone, destination
//! zone, weekday and hour, with a fixed fallback chain for unseen keys.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trips::EnrichedTrip;

#[derive(Debug, Clone, Copy, Default)]
struct MeanAcc {
    sum: f64,
    n: u64,
}

impl MeanAcc {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }
}

/// Fallback level used for a prediction, from the full key down to the
/// global mean. The order is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FallbackLevel {
    FullKey,
    ZonePair,
    WeekdayHour,
    Global,
}

#[derive(Debug, Clone)]
pub struct NaiveModel {
    full: HashMap<(u32, u32, u8, u8), MeanAcc>,
    zone_pair: HashMap<(u32, u32), MeanAcc>,
    weekday_hour: HashMap<(u8, u8), MeanAcc>,
    global: f64,
    pub n_train: usize,
}

/// Fit the baseline from zoned training trips. Every stored mean derives
/// from at least one trip.
pub fn fit_naive(trips: &[EnrichedTrip]) -> Result<NaiveModel> {
    if trips.is_empty() {
        return Err(Error::Empty("fit_naive requires training trips"));
    }
    let mut full: HashMap<(u32, u32, u8, u8), MeanAcc> = HashMap::new();
    let mut zone_pair: HashMap<(u32, u32), MeanAcc> = HashMap::new();
    let mut weekday_hour: HashMap<(u8, u8), MeanAcc> = HashMap::new();
    let mut global = MeanAcc::default();
    for trip in trips {
        let pz = trip.pickup_zone.ok_or(Error::MissingFeature {
            row: trip.record.id,
            column: "pickup_zone".into(),
        })?;
        let dz = trip.dropoff_zone.ok_or(Error::MissingFeature {
            row: trip.record.id,
            column: "dropoff_zone".into(),
        })?;
        let (weekday, hour) = (trip.record.weekday(), trip.record.hour());
        let y = trip.record.trip_duration;
        full.entry((pz, dz, weekday, hour)).or_default().push(y);
        zone_pair.entry((pz, dz)).or_default().push(y);
        weekday_hour.entry((weekday, hour)).or_default().push(y);
        global.push(y);
    }
    Ok(NaiveModel { full, zone_pair, weekday_hour, global: global.mean(), n_train: trips.len() })
}

impl NaiveModel {
    /// Mean duration for the key, falling back to (zones), then
    /// (weekday, hour), then the global mean.
    pub fn predict(&self, pickup_zone: u32, dropoff_zone: u32, weekday: u8, hour: u8) -> (f64, FallbackLevel) {
        if let Some(acc) = self.full.get(&(pickup_zone, dropoff_zone, weekday, hour)) {
            return (acc.mean(), FallbackLevel::FullKey);
        }
        if let Some(acc) = self.zone_pair.get(&(pickup_zone, dropoff_zone)) {
            return (acc.mean(), FallbackLevel::ZonePair);
        }
        if let Some(acc) = self.weekday_hour.get(&(weekday, hour)) {
            return (acc.mean(), FallbackLevel::WeekdayHour);
        }
        (self.global, FallbackLevel::Global)
    }

    pub fn predict_trip(&self, trip: &EnrichedTrip) -> Result<(f64, FallbackLevel)> {
        let pz = trip.pickup_zone.ok_or(Error::MissingFeature {
            row: trip.record.id,
            column: "pickup_zone".into(),
        })?;
        let dz = trip.dropoff_zone.ok_or(Error::MissingFeature {
            row: trip.record.id,
            column: "dropoff_zone".into(),
        })?;
        Ok(self.predict(pz, dz, trip.record.weekday(), trip.record.hour()))
    }
}
