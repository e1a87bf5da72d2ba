use std::io::Read;

use chrono::{DateTime, Datelike, Duration, FixedOffset, LocalResult, NaiveDateTime, TimeZone, Timelike};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::{normalize_label, IngestError, LoadReport, MINUTES_PER_DAY};
use crate::geometry::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrimeCategory {
    Homicide,
    Sexual,
    Robbery,
    Assault,
    Burglary,
    Theft,
    MotorTheft,
    Arson,
    Vandalism,
    DisorderlyConduct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrimeSuper {
    Violent,
    NonViolent,
}

impl CrimeSuper {
    pub fn name(self) -> &'static str {
        match self {
            CrimeSuper::Violent => "violent",
            CrimeSuper::NonViolent => "non_violent",
        }
    }
}

impl CrimeCategory {
    pub const ALL: [CrimeCategory; 10] = [
        CrimeCategory::Homicide,
        CrimeCategory::Sexual,
        CrimeCategory::Robbery,
        CrimeCategory::Assault,
        CrimeCategory::Burglary,
        CrimeCategory::Theft,
        CrimeCategory::MotorTheft,
        CrimeCategory::Arson,
        CrimeCategory::Vandalism,
        CrimeCategory::DisorderlyConduct,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CrimeCategory::Homicide => "Homicide",
            CrimeCategory::Sexual => "Sexual",
            CrimeCategory::Robbery => "Robbery",
            CrimeCategory::Assault => "Assault",
            CrimeCategory::Burglary => "Burglary",
            CrimeCategory::Theft => "Theft",
            CrimeCategory::MotorTheft => "Motor Theft",
            CrimeCategory::Arson => "Arson",
            CrimeCategory::Vandalism => "Vandalism",
            CrimeCategory::DisorderlyConduct => "Disorderly Conduct",
        }
    }

    pub fn super_category(self) -> CrimeSuper {
        match self {
            CrimeCategory::Homicide | CrimeCategory::Sexual | CrimeCategory::Robbery | CrimeCategory::Assault => {
                CrimeSuper::Violent
            }
            _ => CrimeSuper::NonViolent,
        }
    }

    /// Case, spacing and punctuation insensitive ("motor_theft", "Motor Theft").
    pub fn parse(raw: &str) -> Option<Self> {
        let key = normalize_label(raw);
        CrimeCategory::ALL
            .into_iter()
            .find(|c| normalize_label(c.label()) == key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrimeEvent {
    pub id: String,
    /// Local wall-clock time with the zone offset in force at that instant.
    pub when: DateTime<FixedOffset>,
    pub location: GeoPoint,
    pub category: CrimeCategory,
}

impl CrimeEvent {
    pub fn super_category(&self) -> CrimeSuper {
        self.category.super_category()
    }

    /// Minutes since Monday 00:00 local time.
    pub fn minute_of_week(&self) -> u32 {
        let local = self.when.naive_local();
        local.weekday().num_days_from_monday() * MINUTES_PER_DAY + local.hour() * 60 + local.minute()
    }
}

/// Parses an ISO-8601 timestamp. Timestamps carrying an offset are converted
/// into `tz`; naive timestamps are read as wall-clock time in `tz`. Wall-clock
/// times inside a daylight-saving gap are moved forward by one hour and
/// ambiguous ones resolve to the earlier instant.
pub fn parse_timestamp(raw: &str, tz: Tz) -> Option<DateTime<FixedOffset>> {
    let raw = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.with_timezone(&tz).fixed_offset());
    }
    let naive = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())?;
    let resolved = match tz.from_local_datetime(&naive) {
        LocalResult::Single(dt) => dt,
        LocalResult::Ambiguous(early, _) => early,
        LocalResult::None => tz.from_local_datetime(&(naive + Duration::hours(1))).earliest()?,
    };
    Some(resolved.fixed_offset())
}

#[derive(Deserialize)]
struct CrimeRow {
    id: String,
    datetime: String,
    lat: String,
    lon: String,
    category: String,
}

/// Reads `crimes.csv` (`id, datetime, lat, lon, category`).
pub fn load_crimes<R: Read>(reader: R, tz: Tz) -> Result<(Vec<CrimeEvent>, LoadReport), IngestError> {
    const DATASET: &str = "crimes";
    let mut report = LoadReport::new(DATASET);
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| IngestError::malformed(DATASET, 1, e.to_string()))?.clone();
    let mut out = Vec::new();
    for rec in rdr.records() {
        report.total += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.skip(e.position().map_or(0, |p| p.line()), e.to_string());
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let row: CrimeRow = match rec.deserialize(Some(&headers)) {
            Ok(r) => r,
            Err(e) => {
                report.skip(line, e.to_string());
                continue;
            }
        };
        let location = match (row.lat.parse::<f64>(), row.lon.parse::<f64>()) {
            (Ok(lat), Ok(lon)) => match GeoPoint::new(lon, lat) {
                Ok(p) => p,
                Err(e) => {
                    report.skip(line, e.to_string());
                    continue;
                }
            },
            _ => {
                report.skip(line, "unparseable coordinate");
                continue;
            }
        };
        let Some(when) = parse_timestamp(&row.datetime, tz) else {
            report.skip(line, format!("unparseable datetime {:?}", row.datetime));
            continue;
        };
        let Some(category) = CrimeCategory::parse(&row.category) else {
            report.skip(line, format!("unknown crime category {:?}", row.category));
            continue;
        };
        out.push(CrimeEvent { id: row.id, when, location, category });
    }
    report.loaded = out.len();
    Ok((out, report))
}
