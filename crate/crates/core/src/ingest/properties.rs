use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{IngestError, LoadReport};
use crate::geometry::GeoPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyRecord {
    pub id: String,
    pub location: GeoPoint,
    pub residential: bool,
    pub last_sale_date: NaiveDate,
}

impl PropertyRecord {
    /// Years between the last sale and `on`, with 365.25-day years.
    pub fn tenure_years(&self, on: NaiveDate) -> f64 {
        (on - self.last_sale_date).num_days() as f64 / 365.25
    }
}

#[derive(Deserialize)]
struct PropertyRow {
    id: String,
    lat: String,
    lon: String,
    residential: String,
    last_sale_date: String,
}

fn parse_flag(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "t" | "yes" | "y" => Some(true),
        "0" | "false" | "f" | "no" | "n" => Some(false),
        _ => None,
    }
}

/// Reads `properties.csv` (`id, lat, lon, residential, last_sale_date`).
/// Sales dated after `ingest_date` are skipped.
pub fn load_properties<R: Read>(reader: R, ingest_date: NaiveDate) -> Result<(Vec<PropertyRecord>, LoadReport), IngestError> {
    const DATASET: &str = "properties";
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
        let row: PropertyRow = match rec.deserialize(Some(&headers)) {
            Ok(r) => r,
            Err(e) => {
                report.skip(line, e.to_string());
                continue;
            }
        };
        let location = match (row.lat.parse::<f64>(), row.lon.parse::<f64>()) {
            (Ok(lat), Ok(lon)) => GeoPoint::new(lon, lat),
            _ => {
                report.skip(line, "unparseable coordinate");
                continue;
            }
        };
        let location = match location {
            Ok(p) => p,
            Err(e) => {
                report.skip(line, e.to_string());
                continue;
            }
        };
        let Some(residential) = parse_flag(&row.residential) else {
            report.skip(line, format!("bad residential flag {:?}", row.residential));
            continue;
        };
        let last_sale_date = match NaiveDate::parse_from_str(&row.last_sale_date, "%Y-%m-%d") {
            Ok(d) if d <= ingest_date => d,
            Ok(d) => {
                report.skip(line, format!("sale date {d} is after the ingestion date {ingest_date}"));
                continue;
            }
            Err(_) => {
                report.skip(line, format!("unparseable date {:?}", row.last_sale_date));
                continue;
            }
        };
        out.push(PropertyRecord { id: row.id, location, residential, last_sale_date });
    }
    report.loaded = out.len();
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_and_validates() {
        let csv = "id,lat,lon,residential,last_sale_date\n\
                   1,39.95,-75.16,1,2010-06-01\n\
                   2,39.95,-75.16,0,2012-01-31\n\
                   3,39.95,-75.16,1,2030-01-01\n\
                   4,39.95,-75.16,1,2010-13-01\n";
        let today = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
        let (props, report) = load_properties(csv.as_bytes(), today).unwrap();
        assert_eq!(props.len(), 2);
        assert!(props[0].residential && !props[1].residential);
        assert_eq!(report.skipped.iter().map(|s| s.line).collect::<Vec<_>>(), vec![4, 5]);
    }

    #[test]
    fn tenure_in_years() {
        let p = PropertyRecord {
            id: "x".into(),
            location: GeoPoint::new(0.0, 0.0).unwrap(),
            residential: true,
            last_sale_date: NaiveDate::from_ymd_opt(2012, 1, 1).unwrap(),
        };
        let t = p.tenure_years(NaiveDate::from_ymd_opt(2016, 1, 1).unwrap());
        assert!((t - 1461.0 / 365.25).abs() < 1e-12);
        assert!((t - 4.0).abs() < 1e-12);
    }
}
