//! Synthetic accident records with a planted two-regime structure.
//!
//! A row's regime is a fixed function of its weather and road features.
//! Short-regime durations sit well below 164 minutes and long-regime ones
//! well above, each lognormal around a feature-dependent median, so a
//! classifier can recover the regime and each branch has its own trend.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::RawAccidentRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub rows: usize,
    pub seed: u64,
    /// Chance that a nullable cell outside the regime-defining columns is
    /// left empty.
    pub missing_rate: f64,
    pub state: String,
    pub source_tag: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            rows: 20_000,
            seed: 42,
            missing_rate: 0.01,
            state: "TX".into(),
            source_tag: "Source1".into(),
        }
    }
}

const WIND_DIRECTIONS: [&str; 18] = [
    "N", "NNE", "NE", "ENE", "E", "ESE", "SE", "SSE", "S", "SSW", "SW", "WSW", "W", "WNW", "NW", "NNW", "Calm",
    "Variable",
];
const DRY_WEATHER: [&str; 5] = ["Fair", "Clear", "Cloudy", "Mostly Cloudy", "Partly Cloudy"];
const WET_WEATHER: [&str; 3] = ["Light Rain", "Rain", "Heavy Rain"];
/// Indices into the POI flag array.
const JUNCTION: usize = 4;
const CROSSING: usize = 2;
const TRAFFIC_SIGNAL: usize = 11;
const POI_RATES: [f64; 13] = [0.02, 0.01, 0.10, 0.01, 0.15, 0.01, 0.02, 0.005, 0.05, 0.05, 0.01, 0.20, 0.0];

/// The planted regime: true = long.
pub fn is_long_regime(precip: f64, wind_chill: f64, distance: f64, junction: bool, signal: bool, night: bool) -> bool {
    precip > 0.1 || wind_chill < 55.0 || (distance > 1.2 && !signal) || (junction && night)
}

pub fn generate(spec: &SynthSpec) -> Vec<RawAccidentRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let start = NaiveDate::from_ymd_opt(2016, 2, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let span = (NaiveDate::from_ymd_opt(2021, 12, 31).unwrap().and_hms_opt(12, 0, 0).unwrap() - start).num_seconds();
    let noise = Normal::<f64>::new(0.0, 0.05).unwrap();
    let temp_dist = Normal::<f64>::new(68.0, 16.0).unwrap();
    let wind_dist = Normal::<f64>::new(8.0, 5.0).unwrap();
    let pressure_dist = Normal::<f64>::new(29.9, 0.25).unwrap();
    let distance_dist = Exp::<f64>::new(1.0 / 0.8).unwrap();
    let precip_dist = Exp::<f64>::new(1.0 / 0.15).unwrap();

    (0..spec.rows)
        .map(|i| {
            let temp: f64 = temp_dist.sample(&mut rng).clamp(-5.0, 110.0);
            let wind: f64 = wind_dist.sample(&mut rng).abs();
            let wind_chill: f64 = if temp < 50.0 { temp - 0.7 * wind } else { temp };
            let humidity: f64 = rng.random_range(15.0..100.0);
            let pressure: f64 = pressure_dist.sample(&mut rng);
            let raining = rng.random_bool(0.2);
            let precip = if raining { precip_dist.sample(&mut rng) } else { 0.0 };
            let visibility = if raining || rng.random_bool(0.1) { rng.random_range(0.5..10.0) } else { 10.0 };
            let distance: f64 = distance_dist.sample(&mut rng);
            let poi: [bool; 13] = POI_RATES.map(|p| rng.random_bool(p));
            let night = rng.random_bool(0.3);
            let weather = if raining {
                WET_WEATHER[rng.random_range(0..WET_WEATHER.len())]
            } else {
                DRY_WEATHER[rng.random_range(0..DRY_WEATHER.len())]
            };
            let wind_dir = WIND_DIRECTIONS[rng.random_range(0..WIND_DIRECTIONS.len())];

            // Coarse enough that every distinct value gets its own histogram bin.
            let (wind_chill, precip, distance) = (wind_chill.round(), round2(precip.min(2.0)), round1(distance));
            let long = is_long_regime(precip, wind_chill, distance, poi[JUNCTION], poi[TRAFFIC_SIGNAL], night);
            let median = if long {
                (480.0 - 3.0 * humidity + 120.0 * precip.min(1.0) + 2.0 * (55.0 - wind_chill).max(0.0) + 10.0 * distance.min(6.0))
                    .clamp(225.0, 600.0)
            } else {
                (30.0 + 0.6 * humidity + 8.0 * distance.min(4.0) + 15.0 * f64::from(u8::from(poi[CROSSING])))
                    .clamp(35.0, 110.0)
            };
            let minutes = median * noise.sample(&mut rng).exp();
            let t0 = start + Duration::seconds(rng.random_range(0..span));
            let t1 = t0 + Duration::seconds((minutes * 60.0).round() as i64);

            let mut rec = RawAccidentRecord::new(format!("S-{}", i + 1), t0, t1);
            let mut keep = || !rng.random_bool(spec.missing_rate);
            rec.source_tag = Some(spec.source_tag.clone());
            rec.state = Some(spec.state.clone());
            rec.severity = Some(if long { 3 } else { 2 });
            rec.distance_mi = Some(distance);
            rec.temperature_f = keep().then_some(round1(temp));
            rec.wind_chill_f = Some(wind_chill);
            rec.humidity_pct = keep().then_some(humidity.round());
            rec.pressure_in = keep().then_some(round2(pressure));
            rec.visibility_mi = keep().then_some(round1(visibility));
            rec.wind_direction = keep().then(|| wind_dir.to_string());
            rec.wind_speed_mph = keep().then_some(round1(wind));
            rec.precipitation_in = Some(precip);
            rec.weather_condition = keep().then(|| weather.to_string());
            for (slot, &flag) in rec.poi.iter_mut().zip(&poi) {
                *slot = Some(flag);
            }
            let tw = if night { "Night" } else { "Day" };
            rec.twilight[0] = Some(tw.to_string());
            for slot in &mut rec.twilight[1..] {
                *slot = keep().then(|| tw.to_string());
            }
            rec
        })
        .collect()
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}
fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Timestamps a synthetic record can carry; exposed for tests.
pub fn date_range() -> (NaiveDateTime, NaiveDateTime) {
    (
        NaiveDate::from_ymd_opt(2016, 2, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
        NaiveDate::from_ymd_opt(2021, 12, 31).unwrap().and_hms_opt(23, 59, 59).unwrap(),
    )
}
