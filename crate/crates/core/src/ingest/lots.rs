use std::str::FromStr;

use geojson::GeoJson;
use serde::{Deserialize, Serialize};

use super::{normalize_label, polygons_from_geojson, property_f64, property_string, IngestError, LoadReport};
use crate::geometry::{GeoPoint, Region};

/// Zoning designations after merging the two commercial and three
/// residential source categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zoning {
    Commercial,
    Residential,
    MixedUse,
    Industrial,
    Vacant,
    Transportation,
    Water,
    Park,
    Civic,
    Recreation,
    Culture,
    Cemetery,
}

impl Zoning {
    pub fn name(self) -> &'static str {
        match self {
            Zoning::Commercial => "commercial",
            Zoning::Residential => "residential",
            Zoning::MixedUse => "mixed_use",
            Zoning::Industrial => "industrial",
            Zoning::Vacant => "vacant",
            Zoning::Transportation => "transportation",
            Zoning::Water => "water",
            Zoning::Park => "park",
            Zoning::Civic => "civic",
            Zoning::Recreation => "recreation",
            Zoning::Culture => "culture",
            Zoning::Cemetery => "cemetery",
        }
    }
}

impl FromStr for Zoning {
    type Err = String;
    fn from_str(raw: &str) -> Result<Self, Self::Err> {
        let z = match normalize_label(raw).as_str() {
            "commercial" | "commercial business" | "commercial consumer" => Zoning::Commercial,
            "residential"
            | "residential low density"
            | "residential medium density"
            | "residential high density"
            | "residential low"
            | "residential medium"
            | "residential high" => Zoning::Residential,
            "mixed use" | "commercial residential mixed" => Zoning::MixedUse,
            "industrial" => Zoning::Industrial,
            "vacant" => Zoning::Vacant,
            "transportation" => Zoning::Transportation,
            "water" => Zoning::Water,
            "park" | "park open space" | "parks open space" => Zoning::Park,
            "civic" | "civic institution" => Zoning::Civic,
            "recreation" => Zoning::Recreation,
            "culture" | "culture amusement" => Zoning::Culture,
            "cemetery" => Zoning::Cemetery,
            _ => return Err(format!("unknown zoning code {raw:?}")),
        };
        Ok(z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandLot {
    pub id: String,
    /// Lot centroid.
    pub location: GeoPoint,
    pub area_m2: f64,
    pub zoning: Zoning,
}

/// Reads lots from a GeoJSON FeatureCollection with properties
/// `{id, zoning, area_m2?}`. Polygon features are reduced to their centroid;
/// Point features must carry `area_m2`. Line numbers in the report are
/// 1-based feature positions.
pub fn load_lots(geojson_text: &str) -> Result<(Vec<LandLot>, LoadReport), IngestError> {
    const DATASET: &str = "lots";
    let mut report = LoadReport::new(DATASET);
    let gj: GeoJson = geojson_text.parse().map_err(|e: geojson::Error| IngestError::invalid(DATASET, e.to_string()))?;
    let GeoJson::FeatureCollection(fc) = gj else {
        return Err(IngestError::invalid(DATASET, "expected a FeatureCollection"));
    };
    let mut out = Vec::with_capacity(fc.features.len());
    for (k, feature) in fc.features.iter().enumerate() {
        let line = k as u64 + 1;
        report.total += 1;
        let props = feature.properties.as_ref();
        let Some(id) = property_string(props, "id") else {
            report.skip(line, "missing id");
            continue;
        };
        let zoning = match property_string(props, "zoning").map(|z| z.parse::<Zoning>()) {
            Some(Ok(z)) => z,
            Some(Err(e)) => {
                report.skip(line, e);
                continue;
            }
            None => {
                report.skip(line, "missing zoning");
                continue;
            }
        };
        let Some(geometry) = feature.geometry.as_ref() else {
            report.skip(line, "missing geometry");
            continue;
        };
        let attr_area = property_f64(props, "area_m2").filter(|a| *a > 0.0);
        let (location, area_m2) = match &geometry.value {
            geojson::Value::Point(c) => {
                let Some(area) = attr_area else {
                    report.skip(line, "point lot without area_m2");
                    continue;
                };
                match GeoPoint::new(c.first().copied().unwrap_or(f64::NAN), c.get(1).copied().unwrap_or(f64::NAN)) {
                    Ok(p) => (p, area),
                    Err(e) => {
                        report.skip(line, e.to_string());
                        continue;
                    }
                }
            }
            value => match polygons_from_geojson(value) {
                Ok(parts) => {
                    let region = Region::new(parts);
                    let area = attr_area.unwrap_or_else(|| region.planar_area_m2());
                    match region.centroid() {
                        Some(c) if area > 0.0 => (c, area),
                        _ => {
                            report.skip(line, "lot has zero area");
                            continue;
                        }
                    }
                }
                Err(e) => {
                    report.skip(line, e.to_string());
                    continue;
                }
            },
        };
        out.push(LandLot { id, location, area_m2, zoning });
    }
    report.loaded = out.len();
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zoning_merges() {
        assert_eq!("commercial consumer".parse::<Zoning>(), Ok(Zoning::Commercial));
        assert_eq!("Commercial Business".parse::<Zoning>(), Ok(Zoning::Commercial));
        assert_eq!("Residential Medium Density".parse::<Zoning>(), Ok(Zoning::Residential));
        assert_eq!("Commercial / Residential Mixed".parse::<Zoning>(), Ok(Zoning::MixedUse));
        assert_eq!("mixed_use".parse::<Zoning>(), Ok(Zoning::MixedUse));
        assert!("spaceport".parse::<Zoning>().is_err());
    }

    #[test]
    fn loads_polygon_and_point_lots() {
        let text = r#"{"type":"FeatureCollection","features":[
          {"type":"Feature","properties":{"id":"a","zoning":"commercial consumer"},
           "geometry":{"type":"Polygon","coordinates":[[[-75.16,39.95],[-75.159,39.95],[-75.159,39.951],[-75.16,39.951],[-75.16,39.95]]]}},
          {"type":"Feature","properties":{"id":7,"zoning":"vacant","area_m2":250},
           "geometry":{"type":"Point","coordinates":[-75.15,39.94]}},
          {"type":"Feature","properties":{"id":"c","zoning":"moon base","area_m2":10},
           "geometry":{"type":"Point","coordinates":[-75.15,39.94]}}
        ]}"#;
        let (lots, report) = load_lots(text).unwrap();
        assert_eq!(lots.len(), 2);
        assert_eq!(lots[0].zoning, Zoning::Commercial);
        assert!((lots[0].location.lon() + 75.1595).abs() < 1e-9);
        assert!(lots[0].area_m2 > 9000.0 && lots[0].area_m2 < 10000.0);
        assert_eq!(lots[1].id, "7");
        assert_eq!(lots[1].area_m2, 250.0);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].line, 3);
        assert!(report.skipped[0].reason.contains("moon base"));
    }
}
