//! Loading and normalizing the input datasets.
//!
//! Loaders that describe individual events (crimes, lots, properties,
//! listings) skip malformed records and count them; a dataset whose skip
//! fraction exceeds the configured tolerance fails as a whole. Unit
//! geometries and their attribute tables are strict: any malformed row is an
//! error.

mod categories;
mod crimes;
mod dedup;
mod hours;
mod listings;
mod lots;
mod properties;
mod units;

pub use categories::{map_categories, BusinessType, CategoryMap, UnknownBusinessType};
pub use crimes::{load_crimes, parse_timestamp, CrimeCategory, CrimeEvent, CrimeSuper};
pub use dedup::{dedup_businesses, merge_duplicates, name_similarity, normalize_name, Business, DedupConfig, DedupOutput, MergeRecord};
pub use hours::{parse_hours, DayHours, HoursError, WeeklySchedule, MINUTES_PER_DAY, MINUTES_PER_WEEK};
pub use listings::{load_listings, ListingKey, RawListing, Source};
pub use lots::{load_lots, LandLot, Zoning};
pub use properties::{load_properties, PropertyRecord};
pub use units::{load_geounits, GeoUnit, PopulationFilter, UnitLevel};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{dataset}: line {line}: {message}")]
    Malformed { dataset: String, line: u64, message: String },
    #[error("{dataset}: invalid geometry for feature {feature}: {source}")]
    Geometry {
        dataset: String,
        feature: String,
        #[source]
        source: GeometryError,
    },
    #[error("{dataset}: {message}")]
    Invalid { dataset: String, message: String },
    #[error("{dataset}: {} id(s) do not match any unit geometry: {}", ids.len(), ids.join(", "))]
    UnmatchedIds { dataset: String, ids: Vec<String> },
    #[error("{dataset}: skipped {skipped} of {total} records, above the {:.2}% tolerance", max_fraction * 100.0)]
    TooManySkips { dataset: String, skipped: usize, total: usize, max_fraction: f64 },
}

impl IngestError {
    pub(crate) fn malformed(dataset: &str, line: u64, message: impl Into<String>) -> Self {
        IngestError::Malformed { dataset: dataset.to_string(), line, message: message.into() }
    }

    pub(crate) fn invalid(dataset: &str, message: impl Into<String>) -> Self {
        IngestError::Invalid { dataset: dataset.to_string(), message: message.into() }
    }
}

/// A record dropped during loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub line: u64,
    pub reason: String,
}

/// Per-dataset accounting of what was read, kept and dropped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub dataset: String,
    pub total: usize,
    pub loaded: usize,
    pub skipped: Vec<SkippedRecord>,
    pub warnings: Vec<String>,
}

impl LoadReport {
    pub fn new(dataset: &str) -> Self {
        LoadReport { dataset: dataset.to_string(), ..Default::default() }
    }

    pub(crate) fn skip(&mut self, line: u64, reason: impl Into<String>) {
        let reason = reason.into();
        log::debug!("{}: skipping line {line}: {reason}", self.dataset);
        self.skipped.push(SkippedRecord { line, reason });
    }

    pub(crate) fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        log::warn!("{}: {message}", self.dataset);
        self.warnings.push(message);
    }

    pub fn skip_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.skipped.len() as f64 / self.total as f64
        }
    }

    /// Fails when more than `max_fraction` of the records were skipped.
    pub fn check_skips(&self, max_fraction: f64) -> Result<(), IngestError> {
        if self.skip_fraction() > max_fraction {
            return Err(IngestError::TooManySkips {
                dataset: self.dataset.clone(),
                skipped: self.skipped.len(),
                total: self.total,
                max_fraction,
            });
        }
        Ok(())
    }
}

/// Lowercases and collapses every run of non-alphanumeric characters into a
/// single space.
pub(crate) fn normalize_label(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.trim().chars() {
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(c.to_lowercase());
        } else {
            pending_space = true;
        }
    }
    out
}

/// Reads a GeoJSON property as a string, accepting numbers as well.
pub(crate) fn property_string(props: Option<&geojson::JsonObject>, key: &str) -> Option<String> {
    match props?.get(key)? {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

pub(crate) fn property_f64(props: Option<&geojson::JsonObject>, key: &str) -> Option<f64> {
    match props?.get(key)? {
        serde_json::Value::Number(n) => n.as_f64(),
        serde_json::Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Converts GeoJSON Polygon/MultiPolygon coordinates into validated polygons.
pub(crate) fn polygons_from_geojson(
    value: &geojson::Value,
) -> Result<Vec<crate::geometry::GeoPolygon>, GeometryError> {
    use crate::geometry::{GeoPoint, GeoPolygon};
    fn ring(coords: &[Vec<f64>]) -> Result<Vec<GeoPoint>, GeometryError> {
        coords
            .iter()
            .map(|c| {
                let lon = c.first().copied().unwrap_or(f64::NAN);
                let lat = c.get(1).copied().unwrap_or(f64::NAN);
                GeoPoint::new(lon, lat)
            })
            .collect()
    }
    fn polygon(rings: &[Vec<Vec<f64>>]) -> Result<GeoPolygon, GeometryError> {
        let Some((outer, holes)) = rings.split_first() else {
            return Err(GeometryError::TooFewVertices(0));
        };
        GeoPolygon::new(ring(outer)?, holes.iter().map(|h| ring(h)).collect::<Result<_, _>>()?)
    }
    match value {
        geojson::Value::Polygon(rings) => Ok(vec![polygon(rings)?]),
        geojson::Value::MultiPolygon(polys) => polys.iter().map(|p| polygon(p)).collect(),
        _ => Err(GeometryError::TooFewVertices(0)),
    }
}
