use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{excess_hours, landuse_props, Consensus, LandUseProps};
use crate::geometry::{GeoPoint, GeometryError, SpatialIndex};
use crate::ingest::{Business, BusinessType, LandLot, PropertyRecord};
use crate::table::opt;

/// Indexed business, property and lot data for radius queries.
pub struct VibrancySources<'a> {
    businesses: &'a [Business],
    business_index: SpatialIndex,
    residential: Vec<&'a PropertyRecord>,
    property_index: SpatialIndex,
    lots: &'a [LandLot],
    lot_index: SpatialIndex,
    reference_date: NaiveDate,
}

impl<'a> VibrancySources<'a> {
    pub fn new(businesses: &'a [Business], properties: &'a [PropertyRecord], lots: &'a [LandLot], reference_date: NaiveDate) -> Self {
        let residential: Vec<&PropertyRecord> = properties.iter().filter(|p| p.residential).collect();
        VibrancySources {
            businesses,
            business_index: SpatialIndex::build(businesses.iter().map(|b| b.location).collect()),
            property_index: SpatialIndex::build(residential.iter().map(|p| p.location).collect()),
            residential,
            lots,
            lot_index: SpatialIndex::build(lots.iter().map(|l| l.location).collect()),
            reference_date,
        }
    }

    pub fn businesses(&self) -> &'a [Business] {
        self.businesses
    }

    pub fn business_index(&self) -> &SpatialIndex {
        &self.business_index
    }

    pub fn businesses_within(&self, center: GeoPoint, radius_m: f64) -> Result<Vec<usize>, GeometryError> {
        self.business_index.radius_query(center, radius_m)
    }

    /// Mean tenure of residential properties in range.
    pub fn tenure_within(&self, center: GeoPoint, radius_m: f64) -> Result<Option<f64>, GeometryError> {
        let (mut sum, mut n) = (0.0, 0usize);
        self.property_index.for_each_within(center, radius_m, |i| {
            sum += self.residential[i].tenure_years(self.reference_date);
            n += 1;
        })?;
        Ok((n > 0).then(|| sum / n as f64))
    }

    /// Land-use shares of lots whose centroid is in range.
    pub fn landuse_within(&self, center: GeoPoint, radius_m: f64) -> Result<Option<LandUseProps>, GeometryError> {
        let idx = self.lot_index.radius_query(center, radius_m)?;
        Ok(landuse_props(idx.iter().map(|&i| &self.lots[i])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VibrancyAtLocation {
    pub center: GeoPoint,
    pub radius_m: f64,
    pub window: String,
    /// Businesses of each type in range, indexed by `BusinessType::index`.
    pub counts: [u32; 10],
    /// Mean excess open hours of each type in range.
    pub excess_hours: [Option<f64>; 10],
    pub tenure_years: Option<f64>,
}

impl VibrancyAtLocation {
    pub fn count(&self, ty: BusinessType) -> u32 {
        self.counts[ty.index()]
    }

    pub fn excess(&self, ty: BusinessType) -> Option<f64> {
        self.excess_hours[ty.index()]
    }
}

pub fn vibrancy_at(
    sources: &VibrancySources<'_>,
    center: GeoPoint,
    radius_m: f64,
    consensus: &Consensus,
) -> Result<VibrancyAtLocation, GeometryError> {
    let mut counts = [0u32; 10];
    let mut sums = [0.0; 10];
    let mut n = [0u32; 10];
    sources.business_index.for_each_within(center, radius_m, |i| {
        let b = &sources.businesses[i];
        for &ty in &b.types {
            counts[ty.index()] += 1;
            if let Some(e) = excess_hours(b, ty, consensus) {
                sums[ty.index()] += e;
                n[ty.index()] += 1;
            }
        }
    })?;
    let mut excess = [None; 10];
    for k in 0..10 {
        if n[k] > 0 {
            excess[k] = Some(sums[k] / n[k] as f64);
        }
    }
    Ok(VibrancyAtLocation {
        center,
        radius_m,
        window: consensus.window.name.clone(),
        counts,
        excess_hours: excess,
        tenure_years: sources.tenure_within(center, radius_m)?,
    })
}

/// One row per labelled location.
pub fn write_vibrancy_csv<W: Write>(out: W, rows: &[(String, VibrancyAtLocation)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["label", "lon", "lat", "radius_m", "window"].iter().map(|s| s.to_string()).collect();
    header.extend(BusinessType::ALL.iter().map(|t| format!("count_{}", t.name())));
    header.extend(BusinessType::ALL.iter().map(|t| format!("excess_{}", t.name())));
    header.push("tenure_years".into());
    w.write_record(&header)?;
    for (label, v) in rows {
        let mut rec = vec![
            label.clone(),
            v.center.lon().to_string(),
            v.center.lat().to_string(),
            v.radius_m.to_string(),
            v.window.clone(),
        ];
        rec.extend(v.counts.iter().map(|c| c.to_string()));
        rec.extend(v.excess_hours.iter().map(|e| opt(*e)));
        rec.push(opt(v.tenure_years));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LocalProjection;
    use crate::ingest::{ListingKey, Source, WeeklySchedule, Zoning};
    use crate::metrics::{consensus_hours, TimeWindow};
    use std::collections::BTreeSet;

    fn origin() -> GeoPoint {
        GeoPoint::new(-75.16, 39.95).unwrap()
    }

    fn at(x: f64, y: f64) -> GeoPoint {
        LocalProjection::new(origin()).to_point(x, y).unwrap()
    }

    fn business(id: u32, p: GeoPoint, types: &[BusinessType], hours: Option<u32>) -> Business {
        let key = ListingKey { source: Source::B, source_id: id.to_string() };
        Business {
            id: key.to_string(),
            location: p,
            canonical_name: format!("b{id}"),
            types: types.iter().copied().collect(),
            schedule: hours.map(|h| WeeklySchedule::from_spans([(0, h * 60)])),
            provenance: BTreeSet::from([key]),
        }
    }

    #[test]
    fn counts_excess_and_tenure() {
        let bs = vec![
            business(1, at(10.0, 0.0), &[BusinessType::Cafe, BusinessType::Restaurant], Some(60)),
            business(2, at(0.0, 30.0), &[BusinessType::Cafe], Some(40)),
            business(3, at(0.0, 49.0), &[BusinessType::Gym], None),
            business(4, at(80.0, 0.0), &[BusinessType::Cafe], Some(20)),
        ];
        let date = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).unwrap();
        let props = vec![
            PropertyRecord { id: "p1".into(), location: at(5.0, 5.0), residential: true, last_sale_date: date(2010, 1, 1) },
            PropertyRecord { id: "p2".into(), location: at(-5.0, 5.0), residential: false, last_sale_date: date(1990, 1, 1) },
        ];
        let lots = vec![
            LandLot { id: "v".into(), location: at(1.0, 1.0), area_m2: 30.0, zoning: Zoning::Vacant },
            LandLot { id: "r".into(), location: at(2.0, 1.0), area_m2: 70.0, zoning: Zoning::Residential },
        ];
        let src = VibrancySources::new(&bs, &props, &lots, date(2020, 1, 1));
        let c = consensus_hours(&bs, &TimeWindow::whole_week());
        assert_eq!(c.get(BusinessType::Cafe), Some(40.0));
        let v = vibrancy_at(&src, origin(), 50.0, &c).unwrap();
        assert_eq!(v.count(BusinessType::Cafe), 2);
        assert_eq!(v.count(BusinessType::Restaurant), 1);
        assert_eq!(v.count(BusinessType::Gym), 1);
        assert_eq!(v.count(BusinessType::Retail), 0);
        // Cafe excesses +20 and 0 average to 10.
        assert!((v.excess(BusinessType::Cafe).unwrap() - 10.0).abs() < 1e-9);
        assert_eq!(v.excess(BusinessType::Restaurant), Some(0.0));
        assert_eq!(v.excess(BusinessType::Gym), None);
        let tenure = v.tenure_years.unwrap();
        assert!((tenure - 3652.0 / 365.25).abs() < 1e-9);
        let land = src.landuse_within(origin(), 50.0).unwrap().unwrap();
        assert!((land.vacant_prop - 0.3).abs() < 1e-12);

        let mut buf = Vec::new();
        write_vibrancy_csv(&mut buf, &[("here".into(), v)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().starts_with("label,lon,lat,radius_m,window,count_cafe"));
    }

    #[test]
    fn tenure_averages_years_since_sale() {
        let date = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).unwrap();
        let props: Vec<PropertyRecord> = [2018, 2016, 2014]
            .iter()
            .enumerate()
            .map(|(i, &y)| PropertyRecord {
                id: format!("p{i}"),
                location: at(10.0 * i as f64, 0.0),
                residential: true,
                last_sale_date: date(y, 1, 1),
            })
            .collect();
        let src = VibrancySources::new(&[], &props, &[], date(2020, 1, 1));
        let tenure = src.tenure_within(origin(), 50.0).unwrap().unwrap();
        assert!((tenure - (730.0 + 1461.0 + 2191.0) / 3.0 / 365.25).abs() < 1e-12);
        assert!((tenure - 4.0).abs() < 0.01);
    }

    #[test]
    fn empty_neighbourhood() {
        let src = VibrancySources::new(&[], &[], &[], NaiveDate::from_ymd_opt(2020, 1, 1).unwrap());
        let c = consensus_hours(&[], &TimeWindow::whole_week());
        let v = vibrancy_at(&src, origin(), 50.0, &c).unwrap();
        assert_eq!(v.counts, [0; 10]);
        assert_eq!(v.tenure_years, None);
        assert!(vibrancy_at(&src, origin(), 0.0, &c).is_err());
    }
}
