use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bonferroni, locate_extreme_crime, paired_t, percentile};
use crate::geometry::{assign_points, distance_m, GeoPoint, GeometryError, SpatialIndex};
use crate::ingest::{BusinessType, CrimeEvent, CrimeSuper, GeoUnit, UnitLevel};
use crate::metrics::{consensus_hours, hours_in_window, vibrancy_at, Consensus, TimeWindow, VibrancySources};
use crate::table::opt;

pub const FAMILY_HIGH_LOW_BUSINESS: &str = "high_low_business";
pub const FAMILY_HIGH_LOW_LANDUSE: &str = "high_low_landuse";
pub const FAMILY_OPEN_HOURS: &str = "open_hours";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchingConfig {
    pub radius_m: f64,
    pub grid_m: f64,
    pub min_separation_m: f64,
    pub hours_radius_m: f64,
    pub hours_min_separation_m: f64,
    pub short_percentile: f64,
    pub long_percentile: f64,
    pub alpha: f64,
    pub business_level: UnitLevel,
    pub landuse_level: UnitLevel,
    pub hours_level: UnitLevel,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        MatchingConfig {
            radius_m: 50.0,
            grid_m: 10.0,
            min_separation_m: 100.0,
            hours_radius_m: 70.0,
            hours_min_separation_m: 140.0,
            short_percentile: 25.0,
            long_percentile: 75.0,
            alpha: 0.05,
            business_level: UnitLevel::Block,
            landuse_level: UnitLevel::BlockGroup,
            hours_level: UnitLevel::BlockGroup,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CrimeType {
    Violent,
    NonViolent,
    All,
}

impl CrimeType {
    pub fn name(self) -> &'static str {
        match self {
            CrimeType::Violent => "violent",
            CrimeType::NonViolent => "non_violent",
            CrimeType::All => "all",
        }
    }

    fn admits(self, s: CrimeSuper) -> bool {
        match self {
            CrimeType::Violent => s == CrimeSuper::Violent,
            CrimeType::NonViolent => s == CrimeSuper::NonViolent,
            CrimeType::All => true,
        }
    }
}

/// Two locations in one unit. In the high/low study `hi` is the
/// high-crime location; in the hours study it is the longer-open business.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationPair {
    pub study: String,
    pub unit_id: String,
    pub label: String,
    pub crime_type: String,
    pub window: String,
    pub hi: GeoPoint,
    pub lo: GeoPoint,
    pub separation_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPairReport {
    pub study: String,
    pub measure: String,
    pub crime_type: String,
    pub window: String,
    pub n: usize,
    pub mean_diff: Option<f64>,
    pub t: Option<f64>,
    pub p_raw: Option<f64>,
    pub m: usize,
    pub significant: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub reports: Vec<MatchedPairReport>,
    pub pairs: Vec<LocationPair>,
}

/// Ordered cells of one report family keyed by (measure, crime type, window).
struct Family {
    study: &'static str,
    keys: Vec<(String, &'static str, String)>,
    slot: HashMap<(String, &'static str, String), usize>,
    diffs: Vec<Vec<f64>>,
}

impl Family {
    fn new(study: &'static str, measures: &[String], crimes: &[CrimeType], windows: &[TimeWindow]) -> Self {
        let mut f = Family { study, keys: Vec::new(), slot: HashMap::new(), diffs: Vec::new() };
        for m in measures {
            for c in crimes {
                for w in windows {
                    let key = (m.clone(), c.name(), w.name.clone());
                    f.slot.insert(key.clone(), f.keys.len());
                    f.keys.push(key);
                    f.diffs.push(Vec::new());
                }
            }
        }
        f
    }

    fn push(&mut self, measure: &str, crime: CrimeType, window: &str, d: f64) {
        let i = self.slot[&(measure.to_string(), crime.name(), window.to_string())];
        self.diffs[i].push(d);
    }

    fn finish(self, alpha: f64) -> Vec<MatchedPairReport> {
        let tests: Vec<_> = self.diffs.iter().map(|d| paired_t(d)).collect();
        let (flags, m) = bonferroni(&tests.iter().map(|t| t.p).collect::<Vec<_>>(), alpha);
        self.keys
            .into_iter()
            .zip(tests)
            .zip(flags)
            .map(|(((measure, crime, window), t), significant)| MatchedPairReport {
                study: self.study.to_string(),
                measure,
                crime_type: crime.to_string(),
                window,
                n: t.n,
                mean_diff: (t.n > 0).then_some(t.mean),
                t: t.t,
                p_raw: t.p,
                m,
                significant: significant && !t.degenerate,
                degenerate: t.degenerate,
            })
            .collect()
    }
}

fn crime_index(crimes: &[CrimeEvent], ty: CrimeType, window: &TimeWindow) -> SpatialIndex {
    SpatialIndex::build(
        crimes
            .iter()
            .filter(|c| ty.admits(c.super_category()) && window.contains_minute(c.minute_of_week()))
            .map(|c| c.location)
            .collect(),
    )
}

fn units_at(units: &[GeoUnit], level: UnitLevel) -> Vec<&GeoUnit> {
    let mut v: Vec<&GeoUnit> = units.iter().filter(|u| u.level == level && u.included).collect();
    v.sort_by(|a, b| a.id.cmp(&b.id));
    v
}

fn pairs_for(
    units: &[&GeoUnit],
    idx: &SpatialIndex,
    cfg: &MatchingConfig,
    crime: CrimeType,
    window: &TimeWindow,
) -> Result<Vec<LocationPair>, GeometryError> {
    let found: Vec<Option<LocationPair>> = units
        .par_iter()
        .map(|u| {
            let e = locate_extreme_crime(&u.region, idx, cfg.radius_m, cfg.grid_m, cfg.min_separation_m)?;
            Ok(e.map(|e| LocationPair {
                study: String::new(),
                unit_id: u.id.clone(),
                label: String::new(),
                crime_type: crime.name().into(),
                window: window.name.clone(),
                hi: e.hi,
                lo: e.lo,
                separation_m: e.separation_m,
            }))
        })
        .collect::<Result<_, GeometryError>>()?;
    Ok(found.into_iter().flatten().collect())
}

const HIGH_LOW_CRIMES: [CrimeType; 2] = [CrimeType::Violent, CrimeType::NonViolent];
const LANDUSE_MEASURES: [&str; 4] = ["vacant_prop", "mixeduse_prop", "comres_prop", "tenure_years"];

/// High-crime versus low-crime locations within units, compared on business
/// vibrancy (counts and excess hours) and on land use and tenure.
/// Differences are low minus high.
pub fn study_high_low(
    units: &[GeoUnit],
    crimes: &[CrimeEvent],
    sources: &VibrancySources<'_>,
    windows: &[TimeWindow],
    cfg: &MatchingConfig,
) -> Result<StudyOutput, GeometryError> {
    let consensus: Vec<Consensus> = windows.iter().map(|w| consensus_hours(sources.businesses(), w)).collect();
    let mut business_measures: Vec<String> = BusinessType::ALL.iter().map(|t| format!("count_{}", t.name())).collect();
    business_measures.extend(BusinessType::ALL.iter().map(|t| format!("excess_hours_{}", t.name())));
    let landuse_measures: Vec<String> = LANDUSE_MEASURES.iter().map(|s| s.to_string()).collect();
    let mut business = Family::new(FAMILY_HIGH_LOW_BUSINESS, &business_measures, &HIGH_LOW_CRIMES, windows);
    let mut landuse = Family::new(FAMILY_HIGH_LOW_LANDUSE, &landuse_measures, &HIGH_LOW_CRIMES, windows);
    let business_units = units_at(units, cfg.business_level);
    let landuse_units = units_at(units, cfg.landuse_level);
    let mut pairs = Vec::new();

    for crime in HIGH_LOW_CRIMES {
        for (w, cons) in windows.iter().zip(&consensus) {
            let idx = crime_index(crimes, crime, w);

            let found = pairs_for(&business_units, &idx, cfg, crime, w)?;
            let measured: Vec<_> = found
                .par_iter()
                .map(|p| Ok((vibrancy_at(sources, p.hi, cfg.radius_m, cons)?, vibrancy_at(sources, p.lo, cfg.radius_m, cons)?)))
                .collect::<Result<_, GeometryError>>()?;
            for (hi, lo) in &measured {
                for ty in BusinessType::ALL {
                    let (ch, cl) = (hi.count(ty), lo.count(ty));
                    if ch > 0 || cl > 0 {
                        business.push(&format!("count_{}", ty.name()), crime, &w.name, f64::from(cl) - f64::from(ch));
                    }
                    if let (Some(eh), Some(el)) = (hi.excess(ty), lo.excess(ty)) {
                        business.push(&format!("excess_hours_{}", ty.name()), crime, &w.name, el - eh);
                    }
                }
            }
            pairs.extend(found.into_iter().map(|mut p| {
                p.study = FAMILY_HIGH_LOW_BUSINESS.into();
                p
            }));

            let found = pairs_for(&landuse_units, &idx, cfg, crime, w)?;
            let measured: Vec<_> = found
                .par_iter()
                .map(|p| {
                    let r = cfg.radius_m;
                    Ok((
                        sources.landuse_within(p.hi, r)?,
                        sources.landuse_within(p.lo, r)?,
                        sources.tenure_within(p.hi, r)?,
                        sources.tenure_within(p.lo, r)?,
                    ))
                })
                .collect::<Result<_, GeometryError>>()?;
            for (lh, ll, th, tl) in measured {
                if let (Some(h), Some(l)) = (lh, ll) {
                    landuse.push("vacant_prop", crime, &w.name, l.vacant_prop - h.vacant_prop);
                    landuse.push("mixeduse_prop", crime, &w.name, l.mixeduse_prop - h.mixeduse_prop);
                    if let (Some(ch), Some(cl)) = (h.comres_prop, l.comres_prop) {
                        landuse.push("comres_prop", crime, &w.name, cl - ch);
                    }
                }
                if let (Some(h), Some(l)) = (th, tl) {
                    landuse.push("tenure_years", crime, &w.name, l - h);
                }
            }
            pairs.extend(found.into_iter().map(|mut p| {
                p.study = FAMILY_HIGH_LOW_LANDUSE.into();
                p
            }));
        }
    }
    let mut reports = business.finish(cfg.alpha);
    reports.extend(landuse.finish(cfg.alpha));
    Ok(StudyOutput { reports, pairs })
}

const HOURS_CRIMES: [CrimeType; 3] = [CrimeType::Violent, CrimeType::NonViolent, CrimeType::All];

/// Businesses open shorter than the low percentile of their type versus
/// those open longer than the high percentile, paired within units and
/// compared on surrounding crime. Differences are short minus long.
pub fn study_hours(
    units: &[GeoUnit],
    crimes: &[CrimeEvent],
    sources: &VibrancySources<'_>,
    windows: &[TimeWindow],
    cfg: &MatchingConfig,
) -> Result<StudyOutput, GeometryError> {
    let businesses = sources.businesses();
    let whole = TimeWindow::whole_week();
    let hours: Vec<Option<f64>> =
        businesses.iter().map(|b| b.schedule.as_ref().map(|s| hours_in_window(s, &whole))).collect();
    let cutoffs: Vec<Option<(f64, f64)>> = BusinessType::ALL
        .iter()
        .map(|&ty| {
            let h: Vec<f64> =
                businesses.iter().zip(&hours).filter(|(b, _)| b.has_type(ty)).filter_map(|(_, h)| *h).collect();
            Some((percentile(&h, cfg.short_percentile)?, percentile(&h, cfg.long_percentile)?))
        })
        .collect();

    let level_units = units_at(units, cfg.hours_level);
    let locations: Vec<GeoPoint> = businesses.iter().map(|b| b.location).collect();
    let unit_of = assign_points(&locations, &level_units);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); level_units.len()];
    for (b, u) in unit_of.iter().enumerate() {
        if let Some(u) = u {
            members[*u].push(b);
        }
    }

    let mut pairs = Vec::new();
    for (u, unit) in level_units.iter().enumerate() {
        for ty in BusinessType::ALL {
            let Some((short_cut, long_cut)) = cutoffs[ty.index()] else { continue };
            let of_type = |pred: &dyn Fn(f64) -> bool| -> Vec<usize> {
                let mut v: Vec<usize> = members[u]
                    .iter()
                    .copied()
                    .filter(|&b| businesses[b].has_type(ty) && hours[b].map_or(false, |h| pred(h)))
                    .collect();
                v.sort_by(|&a, &b| businesses[a].id.cmp(&businesses[b].id));
                v
            };
            let long = of_type(&|h| h > long_cut);
            let short = of_type(&|h| h < short_cut);
            let mut best: Option<(usize, usize, f64)> = None;
            for &l in &long {
                for &s in &short {
                    let d = distance_m(businesses[l].location, businesses[s].location);
                    if d >= cfg.hours_min_separation_m && best.map_or(true, |(_, _, bd)| d > bd) {
                        best = Some((l, s, d));
                    }
                }
            }
            if let Some((l, s, d)) = best {
                pairs.push(LocationPair {
                    study: FAMILY_OPEN_HOURS.into(),
                    unit_id: unit.id.clone(),
                    label: ty.name().into(),
                    crime_type: String::new(),
                    window: String::new(),
                    hi: businesses[l].location,
                    lo: businesses[s].location,
                    separation_m: d,
                });
            }
        }
    }

    let measures: Vec<String> = BusinessType::ALL.iter().map(|t| t.name().to_string()).collect();
    let mut family = Family::new(FAMILY_OPEN_HOURS, &measures, &HOURS_CRIMES, windows);
    for crime in HOURS_CRIMES {
        for w in windows {
            let idx = crime_index(crimes, crime, w);
            for p in &pairs {
                let long = idx.count_within(p.hi, cfg.hours_radius_m)? as f64;
                let short = idx.count_within(p.lo, cfg.hours_radius_m)? as f64;
                family.push(&p.label, crime, &w.name, short - long);
            }
        }
    }
    Ok(StudyOutput { reports: family.finish(cfg.alpha), pairs })
}

pub const REPORT_COLUMNS: [&str; 10] =
    ["study", "measure", "crime_type", "window", "n", "mean_diff", "t", "p_raw", "m", "significant"];

pub fn write_reports_csv<W: Write>(out: W, rows: &[MatchedPairReport]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.study.clone(),
            r.measure.clone(),
            r.crime_type.clone(),
            r.window.clone(),
            r.n.to_string(),
            opt(r.mean_diff),
            opt(r.t),
            opt(r.p_raw),
            r.m.to_string(),
            u8::from(r.significant).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pairs_csv<W: Write>(out: W, rows: &[LocationPair]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["study", "unit_id", "label", "crime_type", "window", "hi_lon", "hi_lat", "lo_lon", "lo_lat", "separation_m"])?;
    for p in rows {
        w.write_record([
            p.study.clone(),
            p.unit_id.clone(),
            p.label.clone(),
            p.crime_type.clone(),
            p.window.clone(),
            p.hi.lon().to_string(),
            p.hi.lat().to_string(),
            p.lo.lon().to_string(),
            p.lo.lat().to_string(),
            p.separation_m.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
