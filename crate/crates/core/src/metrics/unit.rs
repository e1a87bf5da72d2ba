use std::io::Write;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::geometry::{assign_points, GeoPoint};
use crate::ingest::{GeoUnit, LandLot, UnitLevel, Zoning};
use crate::table::opt;

/// Weights on the seven poverty brackets, poorest first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 7]", into = "[f64; 7]")]
pub struct PovertyWeights([f64; 7]);

impl Default for PovertyWeights {
    fn default() -> Self {
        PovertyWeights([1.0, 5.0 / 6.0, 4.0 / 6.0, 3.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0, 0.0])
    }
}

impl TryFrom<[f64; 7]> for PovertyWeights {
    type Error = MetricsError;
    fn try_from(w: [f64; 7]) -> Result<Self, Self::Error> {
        PovertyWeights::new(w)
    }
}

impl From<PovertyWeights> for [f64; 7] {
    fn from(w: PovertyWeights) -> Self {
        w.0
    }
}

impl PovertyWeights {
    /// Weights must start at 1, end at 0 and never increase.
    pub fn new(w: [f64; 7]) -> Result<Self, MetricsError> {
        let monotone = w.windows(2).all(|p| p[0] >= p[1]);
        if w[0] != 1.0 || w[6] != 0.0 || !monotone {
            return Err(MetricsError::BadWeights);
        }
        Ok(PovertyWeights(w))
    }

    pub fn values(&self) -> &[f64; 7] {
        &self.0
    }
}

/// Weighted sum of bracket proportions; 1 when everyone is in the poorest
/// bracket and 0 when everyone is in the top one.
pub fn poverty_index(brackets: &[f64; 7], weights: &PovertyWeights) -> Result<f64, MetricsError> {
    let sum: f64 = brackets.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || brackets.iter().any(|p| *p < 0.0) {
        return Err(MetricsError::BracketSum(sum));
    }
    Ok(brackets.iter().zip(weights.0.iter()).map(|(p, w)| p * w).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandUseProps {
    pub vacant_prop: f64,
    /// Commercial area over commercial plus residential area; absent when
    /// neither is present.
    pub comres_prop: Option<f64>,
    pub mixeduse_prop: f64,
}

/// Area-weighted land-use shares over a set of lots. `None` when the lots
/// have no area at all.
pub fn landuse_props<'a>(lots: impl IntoIterator<Item = &'a LandLot>) -> Option<LandUseProps> {
    let (mut total, mut vacant, mut commercial, mut residential, mut mixed) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for lot in lots {
        total += lot.area_m2;
        match lot.zoning {
            Zoning::Vacant => vacant += lot.area_m2,
            Zoning::Commercial => commercial += lot.area_m2,
            Zoning::Residential => residential += lot.area_m2,
            Zoning::MixedUse => mixed += lot.area_m2,
            _ => {}
        }
    }
    if !(total > 0.0) {
        return None;
    }
    let comres = commercial + residential;
    Some(LandUseProps {
        vacant_prop: vacant / total,
        comres_prop: (comres > 0.0).then(|| commercial / comres),
        mixeduse_prop: mixed / total,
    })
}

/// Persons per square kilometer.
pub fn population_density(unit: &GeoUnit) -> Option<f64> {
    (unit.area_m2 > 0.0).then(|| unit.population as f64 / (unit.area_m2 / 1e6))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitMetrics {
    pub unit_id: String,
    pub level: UnitLevel,
    pub included: bool,
    pub population: u64,
    pub area_m2: f64,
    pub population_density: Option<f64>,
    pub per_capita_income: Option<f64>,
    pub poverty: Option<f64>,
    pub vacant_prop: Option<f64>,
    pub comres_prop: Option<f64>,
    pub mixeduse_prop: Option<f64>,
}

/// Indices of the points inside each unit. Each level is assigned
/// separately, so a point counts once for its block and once for its block
/// group.
pub fn points_per_unit(points: &[GeoPoint], units: &[GeoUnit]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); units.len()];
    for level in [UnitLevel::Block, UnitLevel::BlockGroup] {
        let members: Vec<usize> = (0..units.len()).filter(|&k| units[k].level == level).collect();
        if members.is_empty() {
            continue;
        }
        let regions: Vec<&GeoUnit> = members.iter().map(|&k| &units[k]).collect();
        for (p, slot) in assign_points(points, &regions).into_iter().enumerate() {
            if let Some(local) = slot {
                out[members[local]].push(p);
            }
        }
    }
    out
}

/// Metrics for every unit, in input order. Lots are attributed to the unit
/// of each level that contains their centroid.
pub fn compute_unit_metrics(
    units: &[GeoUnit],
    lots: &[LandLot],
    weights: &PovertyWeights,
) -> Result<Vec<UnitMetrics>, MetricsError> {
    let lot_points: Vec<_> = lots.iter().map(|l| l.location).collect();
    let lots_of_unit = points_per_unit(&lot_points, units);
    units
        .iter()
        .zip(&lots_of_unit)
        .map(|(u, lot_ids)| {
            let land = landuse_props(lot_ids.iter().map(|&i| &lots[i]));
            let poverty = u.poverty_brackets.as_ref().map(|b| poverty_index(b, weights)).transpose()?;
            Ok(UnitMetrics {
                unit_id: u.id.clone(),
                level: u.level,
                included: u.included,
                population: u.population,
                area_m2: u.area_m2,
                population_density: population_density(u),
                per_capita_income: u.per_capita_income,
                poverty,
                vacant_prop: land.map(|l| l.vacant_prop),
                comres_prop: land.and_then(|l| l.comres_prop),
                mixeduse_prop: land.map(|l| l.mixeduse_prop),
            })
        })
        .collect()
}

pub const UNIT_METRICS_COLUMNS: [&str; 11] = [
    "unit_id",
    "level",
    "included",
    "population",
    "area_m2",
    "population_density",
    "per_capita_income",
    "poverty",
    "vacant_prop",
    "comres_prop",
    "mixeduse_prop",
];

/// One row per unit; absent values are empty fields.
pub fn write_unit_metrics_csv<W: Write>(out: W, rows: &[UnitMetrics]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(UNIT_METRICS_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.unit_id.clone(),
            r.level.name().to_string(),
            u8::from(r.included).to_string(),
            r.population.to_string(),
            r.area_m2.to_string(),
            opt(r.population_density),
            opt(r.per_capita_income),
            opt(r.poverty),
            opt(r.vacant_prop),
            opt(r.comres_prop),
            opt(r.mixeduse_prop),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GeoPoint, GeoPolygon, Region};
    use proptest::prelude::*;

    fn lot(zoning: Zoning, area: f64) -> LandLot {
        LandLot { id: "l".into(), location: GeoPoint::new(0.0, 0.0).unwrap(), area_m2: area, zoning }
    }

    #[test]
    fn poverty_endpoints() {
        let w = PovertyWeights::default();
        let mut top = [0.0; 7];
        top[6] = 1.0;
        assert_eq!(poverty_index(&top, &w).unwrap(), 0.0);
        let mut bottom = [0.0; 7];
        bottom[0] = 1.0;
        assert_eq!(poverty_index(&bottom, &w).unwrap(), 1.0);
    }

    #[test]
    fn poverty_mixed() {
        // 0.1 * (1 + 5/6 + 4/6 + 3/6 + 2/6 + 1/6) + 0.4 * 0 = 0.1 * 3.5
        let p = [0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.4];
        assert!((poverty_index(&p, &PovertyWeights::default()).unwrap() - 0.35).abs() < 1e-12);
    }

    #[test]
    fn poverty_rejects_bad_sum() {
        assert!(matches!(poverty_index(&[0.5; 7], &PovertyWeights::default()), Err(MetricsError::BracketSum(_))));
    }

    #[test]
    fn weights_validated() {
        assert!(PovertyWeights::new([1.0, 0.9, 0.8, 0.85, 0.2, 0.1, 0.0]).is_err());
        assert!(PovertyWeights::new([0.9, 0.8, 0.7, 0.6, 0.2, 0.1, 0.0]).is_err());
        assert!(PovertyWeights::new([1.0, 1.0, 0.5, 0.5, 0.5, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn landuse_examples() {
        let none_vacant = landuse_props(&[lot(Zoning::Residential, 50.0)]).unwrap();
        assert_eq!(none_vacant.vacant_prop, 0.0);

        let even = landuse_props(&[lot(Zoning::Residential, 40.0), lot(Zoning::Commercial, 40.0)]).unwrap();
        assert_eq!(even.comres_prop, Some(0.5));

        let p = landuse_props(&[lot(Zoning::Vacant, 30.0), lot(Zoning::Residential, 70.0)]).unwrap();
        assert!((p.vacant_prop - 0.3).abs() < 1e-12);
        assert_eq!(p.comres_prop, Some(0.0));
        assert_eq!(p.mixeduse_prop, 0.0);

        let park_only = landuse_props(&[lot(Zoning::Park, 10.0)]).unwrap();
        assert_eq!(park_only.comres_prop, None);
        assert!(landuse_props(std::iter::empty()).is_none());
    }

    fn unit(pop: u64, area: f64) -> GeoUnit {
        let poly = GeoPolygon::rectangle(GeoPoint::new(0.0, 0.0).unwrap(), GeoPoint::new(0.01, 0.01).unwrap()).unwrap();
        GeoUnit {
            id: "u".into(),
            level: UnitLevel::BlockGroup,
            region: Region::new(vec![poly]),
            area_m2: area,
            population: pop,
            per_capita_income: None,
            poverty_brackets: None,
            included: true,
        }
    }

    #[test]
    fn density_examples() {
        assert_eq!(population_density(&unit(0, 1e6)), Some(0.0));
        assert_eq!(population_density(&unit(1000, 1e6)), Some(1000.0));
        // 0.05 square miles = 0.05 * 1609.344^2 m^2
        let area = 0.05 * 1609.344f64.powi(2);
        assert!((area - 129_499.4).abs() < 0.1);
        let d = population_density(&unit(400, area)).unwrap();
        assert!((d - 3088.8).abs() < 0.1, "{d}");
        assert_eq!(population_density(&unit(10, 0.0)), None);
    }

    #[test]
    fn unit_metrics_attribute_lots_by_centroid() {
        let mut u = unit(500, 1e6);
        u.poverty_brackets = Some([0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.4]);
        let inside = |z, a| LandLot { id: "x".into(), location: GeoPoint::new(0.005, 0.005).unwrap(), area_m2: a, zoning: z };
        let outside = LandLot { id: "y".into(), location: GeoPoint::new(0.5, 0.5).unwrap(), area_m2: 99.0, zoning: Zoning::Vacant };
        let lots = vec![inside(Zoning::Vacant, 30.0), inside(Zoning::Residential, 70.0), outside];
        let m = compute_unit_metrics(&[u], &lots, &PovertyWeights::default()).unwrap();
        assert!((m[0].vacant_prop.unwrap() - 0.3).abs() < 1e-12);
        assert!((m[0].poverty.unwrap() - 0.35).abs() < 1e-12);
        let mut buf = Vec::new();
        write_unit_metrics_csv(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("unit_id,level,included,population,area_m2,population_density"));
        assert!(text.contains("u,block_group,1,500,1000000,500,,0.35"));
    }

    fn brackets() -> impl Strategy<Value = [f64; 7]> {
        proptest::collection::vec(0.0..1.0f64, 7).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>().max(1e-9);
            let mut b = [0.0; 7];
            for (slot, x) in b.iter_mut().zip(&v) {
                *slot = x / s;
            }
            b
        })
    }

    proptest! {
        #[test]
        fn poverty_in_unit_interval(b in brackets()) {
            let p = poverty_index(&b, &PovertyWeights::default()).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p));
        }

        #[test]
        fn vacant_plus_mixed_at_most_one(areas in proptest::collection::vec((0usize..12, 0.1..500.0f64), 1..40)) {
            let zones = [Zoning::Commercial, Zoning::Residential, Zoning::MixedUse, Zoning::Industrial, Zoning::Vacant,
                Zoning::Transportation, Zoning::Water, Zoning::Park, Zoning::Civic, Zoning::Recreation, Zoning::Culture, Zoning::Cemetery];
            let lots: Vec<LandLot> = areas.iter().map(|&(z, a)| lot(zones[z], a)).collect();
            let p = landuse_props(&lots).unwrap();
            prop_assert!(p.vacant_prop + p.mixeduse_prop <= 1.0 + 1e-12);
            if let Some(c) = p.comres_prop {
                prop_assert!((0.0..=1.0).contains(&c));
            }
        }
    }
}
