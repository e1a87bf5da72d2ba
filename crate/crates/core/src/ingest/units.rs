use std::collections::{BTreeSet, HashMap};
use std::io::Read;

use geojson::GeoJson;
use serde::{Deserialize, Serialize};

use super::{normalize_label, polygons_from_geojson, property_f64, property_string, IngestError, LoadReport};
use crate::geometry::Region;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitLevel {
    Block,
    BlockGroup,
}

impl UnitLevel {
    pub fn name(self) -> &'static str {
        match self {
            UnitLevel::Block => "block",
            UnitLevel::BlockGroup => "block_group",
        }
    }

    fn parse(raw: &str) -> Option<Self> {
        match normalize_label(raw).as_str() {
            "block" => Some(UnitLevel::Block),
            "block group" | "blockgroup" => Some(UnitLevel::BlockGroup),
            _ => None,
        }
    }
}

/// Minimum population for a unit to enter the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationFilter {
    pub block_min: u64,
    pub block_group_min: u64,
}

impl Default for PopulationFilter {
    fn default() -> Self {
        PopulationFilter { block_min: 25, block_group_min: 400 }
    }
}

impl PopulationFilter {
    pub fn passes(&self, level: UnitLevel, population: u64) -> bool {
        match level {
            UnitLevel::Block => population >= self.block_min,
            UnitLevel::BlockGroup => population >= self.block_group_min,
        }
    }
}

/// A census block or block group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoUnit {
    pub id: String,
    pub level: UnitLevel,
    pub region: Region,
    pub area_m2: f64,
    pub population: u64,
    pub per_capita_income: Option<f64>,
    /// Population shares in the seven income-to-poverty-line brackets,
    /// poorest first.
    pub poverty_brackets: Option<[f64; 7]>,
    /// Whether the unit passes the population filter.
    pub included: bool,
}

impl AsRef<Region> for GeoUnit {
    fn as_ref(&self) -> &Region {
        &self.region
    }
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader)
}

fn column(headers: &csv::StringRecord, name: &str, dataset: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| IngestError::malformed(dataset, 1, format!("missing column {name}")))
}

/// Joins unit geometries with population and ACS tables.
///
/// Units missing from the population table get population 0 (and so fail the
/// filter) with a warning. Table rows naming an unknown unit are collected
/// and reported together as [`IngestError::UnmatchedIds`].
pub fn load_geounits<P: Read, A: Read>(
    geojson_text: &str,
    population_csv: P,
    acs_csv: A,
    filter: PopulationFilter,
) -> Result<(Vec<GeoUnit>, LoadReport), IngestError> {
    const DATASET: &str = "geounits";
    let mut report = LoadReport::new(DATASET);
    let gj: GeoJson = geojson_text.parse().map_err(|e: geojson::Error| IngestError::invalid(DATASET, e.to_string()))?;
    let GeoJson::FeatureCollection(fc) = gj else {
        return Err(IngestError::invalid(DATASET, "expected a FeatureCollection"));
    };
    let mut units = Vec::with_capacity(fc.features.len());
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for (k, feature) in fc.features.iter().enumerate() {
        let line = k as u64 + 1;
        report.total += 1;
        let props = feature.properties.as_ref();
        let id = property_string(props, "id").ok_or_else(|| IngestError::malformed(DATASET, line, "feature without id"))?;
        let level = property_string(props, "level")
            .and_then(|l| UnitLevel::parse(&l))
            .ok_or_else(|| IngestError::malformed(DATASET, line, format!("feature {id}: missing or unknown level")))?;
        let geometry = feature
            .geometry
            .as_ref()
            .ok_or_else(|| IngestError::malformed(DATASET, line, format!("feature {id}: no geometry")))?;
        let parts = polygons_from_geojson(&geometry.value).map_err(|source| IngestError::Geometry {
            dataset: DATASET.into(),
            feature: id.clone(),
            source,
        })?;
        let region = Region::new(parts);
        let area_m2 = property_f64(props, "area_m2").unwrap_or_else(|| region.planar_area_m2());
        if !(area_m2 > 0.0) {
            return Err(IngestError::malformed(DATASET, line, format!("feature {id}: area must be positive")));
        }
        if by_id.insert(id.clone(), units.len()).is_some() {
            return Err(IngestError::malformed(DATASET, line, format!("duplicate unit id {id}")));
        }
        units.push(GeoUnit {
            id,
            level,
            region,
            area_m2,
            population: 0,
            per_capita_income: None,
            poverty_brackets: None,
            included: false,
        });
    }

    // Population
    const POP: &str = "population";
    let mut rdr = csv_reader(population_csv);
    let mut seen_pop = vec![false; units.len()];
    let mut unmatched = BTreeSet::new();
    let headers = rdr.headers().map_err(|e| IngestError::malformed(POP, 1, e.to_string()))?.clone();
    if !headers.is_empty() {
        let (id_col, pop_col) = (column(&headers, "id", POP)?, column(&headers, "population", POP)?);
        for rec in rdr.records() {
            let rec = rec.map_err(|e| IngestError::malformed(POP, e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let id = rec.get(id_col).unwrap_or_default();
            let pop: u64 = rec
                .get(pop_col)
                .unwrap_or_default()
                .parse()
                .map_err(|_| IngestError::malformed(POP, line, format!("bad population {:?}", rec.get(pop_col))))?;
            match by_id.get(id) {
                Some(&k) => {
                    units[k].population = pop;
                    seen_pop[k] = true;
                }
                None => {
                    unmatched.insert(id.to_string());
                }
            }
        }
    }
    if !unmatched.is_empty() {
        return Err(IngestError::UnmatchedIds { dataset: POP.into(), ids: unmatched.into_iter().collect() });
    }
    let missing = seen_pop.iter().filter(|s| !**s).count();
    if missing == units.len() && !units.is_empty() {
        report.warn("population table is empty; every unit fails the population filter");
    } else if missing > 0 {
        report.warn(format!("{missing} unit(s) have no population row and are treated as unpopulated"));
    }

    // ACS income and poverty brackets
    const ACS: &str = "acs";
    let mut rdr = csv_reader(acs_csv);
    let headers = rdr.headers().map_err(|e| IngestError::malformed(ACS, 1, e.to_string()))?.clone();
    if !headers.is_empty() {
        let id_col = column(&headers, "id", ACS)?;
        let inc_col = column(&headers, "per_capita_income", ACS)?;
        let bracket_cols: Vec<usize> =
            (1..=7).map(|q| column(&headers, &format!("b{q}"), ACS)).collect::<Result<_, _>>()?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| IngestError::malformed(ACS, e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let id = rec.get(id_col).unwrap_or_default();
            let Some(&k) = by_id.get(id) else {
                unmatched.insert(id.to_string());
                continue;
            };
            if units[k].level != UnitLevel::BlockGroup {
                report.warn(format!("acs row for block {id} ignored; economic data applies to block groups"));
                continue;
            }
            let parse_opt = |s: &str| -> Result<Option<f64>, IngestError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(Some)
                        .ok_or_else(|| IngestError::malformed(ACS, line, format!("bad number {s:?}")))
                }
            };
            units[k].per_capita_income = parse_opt(rec.get(inc_col).unwrap_or_default())?;
            let raw: Vec<Option<f64>> =
                bracket_cols.iter().map(|&c| parse_opt(rec.get(c).unwrap_or_default())).collect::<Result<_, _>>()?;
            if raw.iter().all(Option::is_some) {
                let mut b = [0.0; 7];
                for (slot, v) in b.iter_mut().zip(&raw) {
                    *slot = v.expect("checked above");
                }
                let sum: f64 = b.iter().sum();
                if b.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > 1e-6 {
                    return Err(IngestError::malformed(ACS, line, format!("brackets for {id} sum to {sum}, expected 1")));
                }
                units[k].poverty_brackets = Some(b);
            } else if raw.iter().any(Option::is_some) {
                return Err(IngestError::malformed(ACS, line, format!("partial bracket row for {id}")));
            }
        }
    }
    if !unmatched.is_empty() {
        return Err(IngestError::UnmatchedIds { dataset: ACS.into(), ids: unmatched.into_iter().collect() });
    }

    for u in &mut units {
        u.included = filter.passes(u.level, u.population);
    }
    report.loaded = units.len();
    Ok((units, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(id: &str, level: &str, x: f64) -> String {
        format!(
            r#"{{"type":"Feature","properties":{{"id":"{id}","level":"{level}"}},"geometry":{{"type":"Polygon","coordinates":[[[{x},39.95],[{x1},39.95],[{x1},39.951],[{x},39.951],[{x},39.95]]]}}}}"#,
            x1 = x + 0.001
        )
    }

    fn collection(features: &[String]) -> String {
        format!(r#"{{"type":"FeatureCollection","features":[{}]}}"#, features.join(","))
    }

    const ACS_HEADER: &str = "id,per_capita_income,b1,b2,b3,b4,b5,b6,b7\n";

    #[test]
    fn population_thresholds() {
        let gj = collection(&[square("b1", "block", -75.16), square("g1", "block_group", -75.15), square("g2", "block_group", -75.14)]);
        let pop = "id,population\nb1,24\ng1,400\ng2,399\n";
        let acs = format!("{ACS_HEADER}g1,21000,0.1,0.1,0.1,0.1,0.1,0.1,0.4\n");
        let (units, _) = load_geounits(&gj, pop.as_bytes(), acs.as_bytes(), PopulationFilter::default()).unwrap();
        assert!(!units[0].included, "block with 24 people is excluded");
        assert!(units[1].included, "block group with 400 people is included");
        assert!(!units[2].included);
        assert_eq!(units[1].per_capita_income, Some(21000.0));
        assert!(units[1].poverty_brackets.is_some());
        assert!(units[0].area_m2 > 0.0);
    }

    #[test]
    fn empty_population_file_flags_all() {
        let gj = collection(&[square("b1", "block", -75.16), square("b2", "block", -75.15)]);
        let (units, report) = load_geounits(&gj, &b""[..], ACS_HEADER.as_bytes(), PopulationFilter::default()).unwrap();
        assert!(units.iter().all(|u| !u.included));
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn unmatched_ids_are_listed() {
        let gj = collection(&[square("b1", "block", -75.16)]);
        let pop = "id,population\nb1,30\nzz,5\naa,7\n";
        let err = load_geounits(&gj, pop.as_bytes(), ACS_HEADER.as_bytes(), PopulationFilter::default()).unwrap_err();
        match err {
            IngestError::UnmatchedIds { ids, .. } => assert_eq!(ids, vec!["aa", "zz"]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_rows_report_line() {
        let gj = collection(&[square("b1", "block", -75.16)]);
        let pop = "id,population\nb1,lots\n";
        let err = load_geounits(&gj, pop.as_bytes(), ACS_HEADER.as_bytes(), PopulationFilter::default()).unwrap_err();
        assert!(matches!(err, IngestError::Malformed { line: 2, .. }), "{err}");

        let gj = collection(&[square("g1", "block_group", -75.16)]);
        let acs = format!("{ACS_HEADER}g1,1,0.5,0.5,0.5,0,0,0,0\n");
        let err = load_geounits(&gj, "id,population\ng1,500\n".as_bytes(), acs.as_bytes(), PopulationFilter::default()).unwrap_err();
        assert!(matches!(err, IngestError::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn multipolygon_and_area_attribute() {
        let gj = r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"id":"m","level":"block","area_m2":1234.5},
          "geometry":{"type":"MultiPolygon","coordinates":[
            [[[0,0],[0.001,0],[0.001,0.001],[0,0.001],[0,0]]],
            [[[0.01,0],[0.011,0],[0.011,0.001],[0.01,0.001],[0.01,0]]]]}}]}"#;
        let (units, _) = load_geounits(gj, "id,population\nm,100\n".as_bytes(), ACS_HEADER.as_bytes(), PopulationFilter::default()).unwrap();
        assert_eq!(units[0].region.parts().len(), 2);
        assert_eq!(units[0].area_m2, 1234.5);
    }

    #[test]
    fn invalid_geometry_is_an_error() {
        let gj = r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"id":"x","level":"block"},
          "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,1],[1,0],[0,1],[0,0]]]}}]}"#;
        let err = load_geounits(gj, &b""[..], &b""[..], PopulationFilter::default()).unwrap_err();
        assert!(matches!(err, IngestError::Geometry { .. }));
    }
}
