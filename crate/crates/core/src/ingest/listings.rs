use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use super::{parse_hours, DayHours, IngestError, LoadReport, WeeklySchedule};
use crate::geometry::GeoPoint;

/// Listing provider. Three independent sources are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    A,
    B,
    C,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Source::A => "A",
            Source::B => "B",
            Source::C => "C",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ListingKey {
    pub source: Source,
    pub source_id: String,
}

impl fmt::Display for ListingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.source, self.source_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawListing {
    pub key: ListingKey,
    pub name: String,
    pub location: GeoPoint,
    pub raw_categories: Vec<String>,
    pub hours_text: Option<DayHours>,
    /// Parsed `hours_text`; absent when the text is missing or unparseable.
    pub schedule: Option<WeeklySchedule>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum HoursValue {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum IdValue {
    Text(String),
    Number(serde_json::Number),
}

#[derive(Deserialize)]
struct ListingLine {
    source: Source,
    source_id: IdValue,
    name: String,
    lat: f64,
    lon: f64,
    #[serde(default)]
    raw_categories: Vec<String>,
    #[serde(default)]
    hours: Option<std::collections::BTreeMap<String, HoursValue>>,
}

/// Reads `listings.jsonl`: one JSON object per line with
/// `source, source_id, name, lat, lon, raw_categories, hours`. Blank lines are
/// ignored. Unparseable hours keep the listing but drop its schedule.
pub fn load_listings<R: Read>(reader: R) -> Result<(Vec<RawListing>, LoadReport), IngestError> {
    const DATASET: &str = "listings";
    let mut report = LoadReport::new(DATASET);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = k as u64 + 1;
        let text = line.map_err(|e| IngestError::malformed(DATASET, line_no, e.to_string()))?;
        if text.trim().is_empty() {
            continue;
        }
        report.total += 1;
        let parsed: ListingLine = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => {
                report.skip(line_no, e.to_string());
                continue;
            }
        };
        let location = match GeoPoint::new(parsed.lon, parsed.lat) {
            Ok(p) => p,
            Err(e) => {
                report.skip(line_no, e.to_string());
                continue;
            }
        };
        let source_id = match parsed.source_id {
            IdValue::Text(s) => s,
            IdValue::Number(n) => n.to_string(),
        };
        let key = ListingKey { source: parsed.source, source_id };
        if !seen.insert(key.clone()) {
            report.skip(line_no, format!("duplicate listing key {key}"));
            continue;
        }
        let hours_text: Option<DayHours> = parsed.hours.map(|h| {
            h.into_iter()
                .map(|(day, v)| {
                    let entries = match v {
                        HoursValue::One(s) => vec![s],
                        HoursValue::Many(v) => v,
                    };
                    (day, entries)
                })
                .collect()
        });
        let schedule = match &hours_text {
            Some(h) => match parse_hours(h) {
                Ok(s) => Some(s),
                Err(e) => {
                    report.warn(format!("line {line_no}: {key}: {e}; hours dropped"));
                    None
                }
            },
            None => None,
        };
        out.push(RawListing {
            key,
            name: parsed.name,
            location,
            raw_categories: parsed.raw_categories,
            hours_text,
            schedule,
        });
    }
    report.loaded = out.len();
    Ok((out, report))
}
