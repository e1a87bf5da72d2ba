//! Seeded synthetic cities with planted relationships, written in the
//! ingest file formats together with a ground-truth sidecar.

mod names;
pub mod rng;
mod write;

pub use names::{business_name, category_rows, hours_text, noisy_name, raw_category, sample_hours, unique_token, HoursProfile, NameNoise};
pub use rng::SplitMix64;
pub use write::{write_city, FILES};

use chrono::{Duration, NaiveDate};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::geometry::{GeoPoint, GeoPolygon, LocalProjection, Region};
use crate::ingest::{
    parse_hours, parse_timestamp, BusinessType, CategoryMap, CrimeCategory, CrimeEvent, CrimeSuper, GeoUnit, LandLot,
    ListingKey, PopulationFilter, PropertyRecord, RawListing, Source, UnitLevel, Zoning, MINUTES_PER_DAY,
    MINUTES_PER_WEEK,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrimeCoefficients {
    pub intercept: f64,
    pub population: f64,
    pub per_capita_income: f64,
    pub poverty: f64,
}

impl CrimeCoefficients {
    fn mean(&self, pop: f64, income: f64, poverty: f64) -> f64 {
        self.intercept + self.population * pop + self.per_capita_income * income + self.poverty * poverty
    }
}

impl Default for CrimeCoefficients {
    fn default() -> Self {
        CrimeCoefficients { intercept: 10.0, population: 0.1, per_capita_income: -0.0002, poverty: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedExtra {
    /// Index of the block group in row-major order.
    pub unit_index: usize,
    pub violent: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrimeModel {
    pub violent: CrimeCoefficients,
    pub non_violent: CrimeCoefficients,
    pub noise_sd: f64,
    /// Fraction of a block's crimes drawn around its hotspot.
    pub hotspot_share: f64,
    pub hotspot_sd_m: f64,
    pub weekday_evening_share: f64,
    pub weekend_night_share: f64,
    pub extra: Vec<PlantedExtra>,
}

impl Default for CrimeModel {
    fn default() -> Self {
        CrimeModel {
            violent: CrimeCoefficients::default(),
            non_violent: CrimeCoefficients { intercept: 20.0, population: 0.2, per_capita_income: -0.0003, poverty: 30.0 },
            noise_sd: 3.0,
            hotspot_share: 0.7,
            hotspot_sd_m: 20.0,
            weekday_evening_share: 0.3,
            weekend_night_share: 0.2,
            extra: vec![PlantedExtra { unit_index: 37, violent: 50 }],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VacancyRule {
    /// Vacant lots only farther than `near_m` from every hotspot.
    FarFromHotspots,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    /// Block groups per side.
    pub grid: usize,
    pub unit_m: f64,
    pub blocks_per_side: usize,
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub timezone: String,
    pub start_date: NaiveDate,
    pub weeks: u32,
    pub reference_date: NaiveDate,
    pub population_base: f64,
    pub population_sd: f64,
    pub income_mean: f64,
    pub income_sd: f64,
    pub crime: CrimeModel,
    pub vacancy: VacancyRule,
    pub vacancy_near_m: f64,
    pub vacant_share: f64,
    pub lot_m: f64,
    pub properties_per_block: f64,
    pub businesses_per_block: f64,
    pub hours_share: f64,
    pub planted_gyms: bool,
    pub planted_nightlife: bool,
    pub listing_jitter_m: f64,
    pub source_rates: [f64; 3],
    pub name_noise: NameNoise,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 1,
            grid: 20,
            unit_m: 300.0,
            blocks_per_side: 2,
            origin_lon: -75.25,
            origin_lat: 39.9,
            timezone: "America/New_York".into(),
            start_date: NaiveDate::from_ymd_opt(2019, 1, 7).expect("valid date"),
            weeks: 52,
            reference_date: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            population_base: 800.0,
            population_sd: 200.0,
            income_mean: 30_000.0,
            income_sd: 8_000.0,
            crime: CrimeModel::default(),
            vacancy: VacancyRule::FarFromHotspots,
            vacancy_near_m: 75.0,
            vacant_share: 0.35,
            lot_m: 30.0,
            properties_per_block: 10.0,
            businesses_per_block: 6.0,
            hours_share: 0.6,
            planted_gyms: true,
            planted_nightlife: true,
            listing_jitter_m: 15.0,
            source_rates: [0.8, 0.5, 0.6],
            name_noise: NameNoise::default(),
        }
    }
}

impl SynthSpec {
    /// Planted city with the given seed.
    pub fn planted(seed: u64) -> Self {
        SynthSpec { seed, ..Default::default() }
    }

    /// No relationship between crime and anything else.
    pub fn null(seed: u64) -> Self {
        let flat = CrimeCoefficients { intercept: 100.0, population: 0.0, per_capita_income: 0.0, poverty: 0.0 };
        SynthSpec {
            seed,
            crime: CrimeModel {
                violent: flat,
                non_violent: CrimeCoefficients { intercept: 200.0, ..flat },
                noise_sd: 10.0,
                hotspot_share: 0.0,
                extra: Vec::new(),
                ..Default::default()
            },
            vacancy: VacancyRule::Uniform,
            vacant_share: 0.15,
            planted_gyms: false,
            planted_nightlife: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("unit_m", self.unit_m),
            ("lot_m", self.lot_m),
            ("listing_jitter_m", self.listing_jitter_m + 1.0),
            ("vacancy_near_m", self.vacancy_near_m + 1.0),
        ];
        for (k, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{k} must be positive"));
            }
        }
        if self.grid == 0 || self.blocks_per_side == 0 || self.weeks == 0 {
            return Err("grid, blocks_per_side and weeks must be positive".into());
        }
        if self.timezone.parse::<Tz>().is_err() {
            return Err(format!("unknown timezone {:?}", self.timezone));
        }
        for (k, p) in [
            ("hotspot_share", self.crime.hotspot_share),
            ("vacant_share", self.vacant_share),
            ("hours_share", self.hours_share),
            ("weekday_evening_share", self.crime.weekday_evening_share),
            ("weekend_night_share", self.crime.weekend_night_share),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{k} must be in [0, 1]"));
            }
        }
        if self.crime.weekday_evening_share + self.crime.weekend_night_share > 1.0 {
            return Err("window shares exceed 1".into());
        }
        if self.crime.extra.iter().any(|e| e.unit_index >= self.grid * self.grid) {
            return Err("planted extra crimes refer to a missing unit".into());
        }
        Ok(())
    }

    pub fn block_m(&self) -> f64 {
        self.unit_m / self.blocks_per_side as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthCounts {
    pub block_groups: usize,
    pub blocks: usize,
    pub block_groups_included: usize,
    pub blocks_included: usize,
    pub crimes: usize,
    /// Crimes in the margin ring outside every unit.
    pub margin_crimes: usize,
    pub violent: usize,
    pub non_violent: usize,
    pub lots: usize,
    pub properties: usize,
    pub listings: usize,
    pub businesses: usize,
    pub businesses_with_hours: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub block_id: String,
    pub lon: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraTruth {
    pub unit_id: String,
    pub violent: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub timezone: String,
    pub reference_date: NaiveDate,
    pub counts: TruthCounts,
    pub violent: CrimeCoefficients,
    pub non_violent: CrimeCoefficients,
    pub extra_crimes: Vec<ExtraTruth>,
    pub hotspots: Vec<Hotspot>,
    pub vacancy: VacancyRule,
    pub planted_gyms: bool,
    pub planted_nightlife: bool,
    /// Listing keys of each planted business, in business order.
    pub listing_groups: Vec<Vec<String>>,
}

/// A generated city in memory, using the same types ingest produces.
#[derive(Debug, Clone)]
pub struct City {
    pub units: Vec<GeoUnit>,
    pub lots: Vec<LandLot>,
    pub lot_polygons: Vec<GeoPolygon>,
    pub crimes: Vec<CrimeEvent>,
    pub crime_stamps: Vec<String>,
    pub properties: Vec<PropertyRecord>,
    pub listings: Vec<RawListing>,
    pub category_map: CategoryMap,
    pub truth: GroundTruth,
    pub spec: SynthSpec,
}

struct Planned {
    location: (f64, f64),
    types: Vec<BusinessType>,
    profile: Option<HoursProfile>,
}

fn inside(rng: &mut SplitMix64, center: (f64, f64), sd: f64, lo: (f64, f64), side: f64) -> (f64, f64) {
    for _ in 0..32 {
        let p = (center.0 + sd * rng.normal(), center.1 + sd * rng.normal());
        if p.0 > lo.0 + 0.5 && p.0 < lo.0 + side - 0.5 && p.1 > lo.1 + 0.5 && p.1 < lo.1 + side - 0.5 {
            return p;
        }
    }
    (rng.range(lo.0 + 0.5, lo.0 + side - 0.5), rng.range(lo.1 + 0.5, lo.1 + side - 0.5))
}

fn brackets(rng: &mut SplitMix64) -> [f64; 7] {
    let theta = rng.uniform();
    let mut b = [0.0; 7];
    for (q, slot) in b.iter_mut().enumerate() {
        let tilt = theta * (6 - q) as f64 + (1.0 - theta) * q as f64 + 0.5;
        *slot = rng.range(0.2, 1.0) * tilt;
    }
    let s: f64 = b.iter().sum();
    b.iter_mut().for_each(|v| *v /= s);
    b
}

const BACKGROUND_MIX: [(BusinessType, f64); 10] = [
    (BusinessType::Restaurant, 0.25),
    (BusinessType::Retail, 0.25),
    (BusinessType::Cafe, 0.10),
    (BusinessType::Convenience, 0.08),
    (BusinessType::Institution, 0.10),
    (BusinessType::Pharmacy, 0.04),
    (BusinessType::Liquor, 0.04),
    (BusinessType::Lodging, 0.03),
    (BusinessType::Nightlife, 0.06),
    (BusinessType::Gym, 0.05),
];

fn pick_type(rng: &mut SplitMix64) -> BusinessType {
    let mut u = rng.uniform();
    for (ty, w) in BACKGROUND_MIX {
        if u < w {
            return ty;
        }
        u -= w;
    }
    BusinessType::Retail
}

fn crime_minute(rng: &mut SplitMix64, spec: &SynthSpec) -> u32 {
    let u = rng.uniform();
    if u < spec.crime.weekday_evening_share {
        let day = rng.below(5) as u32;
        day * MINUTES_PER_DAY + 18 * 60 + rng.below(6 * 60) as u32
    } else if u < spec.crime.weekday_evening_share + spec.crime.weekend_night_share {
        let day = 5 + rng.below(2) as u32;
        day * MINUTES_PER_DAY + rng.below(4 * 60) as u32
    } else {
        rng.below(u64::from(MINUTES_PER_WEEK)) as u32
    }
}

fn make_crime(
    rng: &mut SplitMix64,
    spec: &SynthSpec,
    tz: Tz,
    cats: &[CrimeCategory],
    k: usize,
    location: GeoPoint,
) -> Result<(CrimeEvent, String), String> {
    let minute = crime_minute(rng, spec);
    let week = rng.below(u64::from(spec.weeks)) as i64;
    let naive = spec.start_date.and_hms_opt(0, 0, 0).expect("midnight")
        + Duration::days(week * 7)
        + Duration::minutes(i64::from(minute));
    let stamp = naive.format("%Y-%m-%dT%H:%M:%S").to_string();
    let when = parse_timestamp(&stamp, tz).ok_or_else(|| format!("unparseable generated time {stamp}"))?;
    let category = cats[rng.below(cats.len() as u64) as usize];
    Ok((CrimeEvent { id: format!("c{k:07}"), when, location, category }, stamp))
}

fn categories_of(s: CrimeSuper) -> Vec<CrimeCategory> {
    use CrimeCategory::*;
    [Homicide, Sexual, Robbery, Assault, Burglary, Theft, MotorTheft, Arson, Vandalism, DisorderlyConduct]
        .into_iter()
        .filter(|c| c.super_category() == s)
        .collect()
}

/// Generates a city. Identical specs give identical cities.
pub fn generate_city(spec: &SynthSpec) -> Result<City, String> {
    spec.validate()?;
    let tz: Tz = spec.timezone.parse().map_err(|_| format!("unknown timezone {:?}", spec.timezone))?;
    let mut root = SplitMix64::new(spec.seed);
    let mut rng_units = root.fork();
    let mut rng_crimes = root.fork();
    let mut rng_lots = root.fork();
    let mut rng_props = root.fork();
    let mut rng_biz = root.fork();
    let mut rng_list = root.fork();

    let origin = GeoPoint::new(spec.origin_lon, spec.origin_lat).map_err(|e| e.to_string())?;
    let proj = LocalProjection::new(origin);
    let pt = |x: f64, y: f64| proj.to_point(x, y).expect("city coordinates stay on the globe");
    let rect = |x: f64, y: f64, w: f64| {
        GeoPolygon::rectangle(pt(x, y), pt(x + w, y + w)).expect("rectangle is valid")
    };
    let filter = PopulationFilter::default();
    let n = spec.grid;
    let bps = spec.blocks_per_side;
    let b = spec.block_m();
    let hot_rel = 0.73 * b;
    let city_m = n as f64 * spec.unit_m;

    // Units, economics and hotspots.
    let mut units = Vec::new();
    let mut bg_info = Vec::new();
    let mut hotspots_xy: Vec<(String, (f64, f64))> = Vec::new();
    for r in 0..n {
        for c in 0..n {
            let (x0, y0) = (c as f64 * spec.unit_m, r as f64 * spec.unit_m);
            let id = format!("bg-{r:03}-{c:03}");
            let pop = (spec.population_base + spec.population_sd * rng_units.normal()).round().max(0.0) as u64;
            let income = (spec.income_mean + spec.income_sd * rng_units.normal()).max(5_000.0);
            let br = brackets(&mut rng_units);
            let region = Region::new(vec![rect(x0, y0, spec.unit_m)]);
            let area = region.planar_area_m2();
            units.push(GeoUnit {
                id: id.clone(),
                level: UnitLevel::BlockGroup,
                region,
                area_m2: area,
                population: pop,
                per_capita_income: Some(income),
                poverty_brackets: Some(br),
                included: filter.passes(UnitLevel::BlockGroup, pop),
            });
            let mut shares: Vec<f64> = (0..bps * bps).map(|_| rng_units.range(0.8, 1.2)).collect();
            let total: f64 = shares.iter().sum();
            shares.iter_mut().for_each(|s| *s /= total);
            let mut left = pop;
            let mut blocks = Vec::new();
            for k in 0..bps * bps {
                let (i, j) = (k / bps, k % bps);
                let bx = x0 + j as f64 * b;
                let by = y0 + i as f64 * b;
                let bpop = if k + 1 == bps * bps { left } else { ((pop as f64 * shares[k]).round() as u64).min(left) };
                left -= bpop;
                let bid = format!("b-{r:03}-{c:03}-{k}");
                let region = Region::new(vec![rect(bx, by, b)]);
                let area = region.planar_area_m2();
                units.push(GeoUnit {
                    id: bid.clone(),
                    level: UnitLevel::Block,
                    region,
                    area_m2: area,
                    population: bpop,
                    per_capita_income: None,
                    poverty_brackets: None,
                    included: filter.passes(UnitLevel::Block, bpop),
                });
                let jitter = 0.05 * b;
                let hx = bx + hot_rel + rng_units.range(-jitter, jitter);
                let hy = by + hot_rel + rng_units.range(-jitter, jitter);
                hotspots_xy.push((bid, (hx, hy)));
                blocks.push((bx, by, hotspots_xy.len() - 1));
            }
            let poverty = crate::metrics::poverty_index(&br, &crate::metrics::PovertyWeights::default()).expect("brackets sum to one");
            bg_info.push((id, pop as f64, income, poverty, blocks));
        }
    }

    // Crimes.
    let mut crimes = Vec::new();
    let mut stamps = Vec::new();
    let extra_truth: Vec<ExtraTruth> =
        spec.crime.extra.iter().map(|e| ExtraTruth { unit_id: bg_info[e.unit_index].0.clone(), violent: e.violent }).collect();
    for (u, (_, pop, income, poverty, blocks)) in bg_info.iter().enumerate() {
        for s in [CrimeSuper::Violent, CrimeSuper::NonViolent] {
            let coef = if s == CrimeSuper::Violent { &spec.crime.violent } else { &spec.crime.non_violent };
            let mean = coef.mean(*pop, *income, *poverty);
            let mut count = (mean + spec.crime.noise_sd * rng_crimes.normal()).round().max(0.0) as u32;
            if s == CrimeSuper::Violent {
                count += spec.crime.extra.iter().filter(|e| e.unit_index == u).map(|e| e.violent).sum::<u32>();
            }
            let cats = categories_of(s);
            for _ in 0..count {
                let (bx, by, h) = blocks[rng_crimes.below(blocks.len() as u64) as usize];
                let (x, y) = if rng_crimes.bernoulli(spec.crime.hotspot_share) {
                    inside(&mut rng_crimes, hotspots_xy[h].1, spec.crime.hotspot_sd_m, (bx, by), b)
                } else {
                    (rng_crimes.range(bx + 0.5, bx + b - 0.5), rng_crimes.range(by + 0.5, by + b - 0.5))
                };
                let (event, stamp) = make_crime(&mut rng_crimes, spec, tz, &cats, crimes.len(), pt(x, y))?;
                crimes.push(event);
                stamps.push(stamp);
            }
        }
    }

    // Background crimes in the margin ring, at the city's background density.
    let in_city = crimes.len();
    let background = in_city as f64 * (1.0 - spec.crime.hotspot_share) / (city_m * city_m);
    let violent_share = crimes.iter().filter(|c| c.super_category() == CrimeSuper::Violent).count() as f64 / in_city.max(1) as f64;
    let n_margin = rng_crimes.poisson(background * ((city_m + 2.0 * b).powi(2) - city_m * city_m)) as usize;
    while crimes.len() < in_city + n_margin {
        let (x, y) = (rng_crimes.range(-b, city_m + b), rng_crimes.range(-b, city_m + b));
        if (0.0..=city_m).contains(&x) && (0.0..=city_m).contains(&y) {
            continue;
        }
        let s = if rng_crimes.bernoulli(violent_share) { CrimeSuper::Violent } else { CrimeSuper::NonViolent };
        let (event, stamp) = make_crime(&mut rng_crimes, spec, tz, &categories_of(s), crimes.len(), pt(x, y))?;
        crimes.push(event);
        stamps.push(stamp);
    }

    // Lots on a parcel grid over the city and a one-block margin.
    let hot_only: Vec<(f64, f64)> = hotspots_xy.iter().map(|(_, p)| *p).collect();
    let near_hotspot = |x: f64, y: f64, d: f64| hot_only.iter().any(|h| (h.0 - x).powi(2) + (h.1 - y).powi(2) <= d * d);
    let mut lots = Vec::new();
    let mut lot_polygons = Vec::new();
    let per_side = ((city_m + 2.0 * b) / spec.lot_m).floor() as usize;
    for i in 0..per_side {
        for j in 0..per_side {
            let (x, y) = (-b + j as f64 * spec.lot_m, -b + i as f64 * spec.lot_m);
            let (cx, cy) = (x + spec.lot_m / 2.0, y + spec.lot_m / 2.0);
            let vacant = match spec.vacancy {
                VacancyRule::Uniform => rng_lots.bernoulli(spec.vacant_share),
                VacancyRule::FarFromHotspots => {
                    let v = rng_lots.bernoulli(spec.vacant_share);
                    v && !near_hotspot(cx, cy, spec.vacancy_near_m)
                }
            };
            let zoning = if vacant {
                Zoning::Vacant
            } else {
                let u = rng_lots.uniform();
                if u < 0.6 {
                    Zoning::Residential
                } else if u < 0.8 {
                    Zoning::Commercial
                } else if u < 0.9 {
                    Zoning::MixedUse
                } else {
                    [Zoning::Park, Zoning::Civic, Zoning::Industrial, Zoning::Transportation][rng_lots.below(4) as usize]
                }
            };
            let poly = rect(x, y, spec.lot_m);
            lots.push(LandLot {
                id: format!("lot-{:07}", lots.len()),
                location: poly.centroid(),
                area_m2: crate::geometry::planar_area_m2(&poly),
                zoning,
            });
            lot_polygons.push(poly);
        }
    }

    // Properties.
    let extent = (city_m + 2.0 * b).powi(2);
    let n_props = rng_props.poisson(spec.properties_per_block * extent / (b * b)) as usize;
    let first_day = NaiveDate::from_ymd_opt(1975, 1, 1).expect("valid date");
    let span = (spec.reference_date - first_day).num_days().max(1) as u64;
    let properties: Vec<PropertyRecord> = (0..n_props)
        .map(|k| {
            let (x, y) = (rng_props.range(-b, city_m + b), rng_props.range(-b, city_m + b));
            PropertyRecord {
                id: format!("p{k:07}"),
                location: pt(x, y),
                residential: rng_props.bernoulli(0.85),
                last_sale_date: first_day + Duration::days(rng_props.below(span) as i64),
            }
        })
        .collect();

    // Businesses.
    let mut planned = Vec::new();
    let n_bg_biz = rng_biz.poisson(spec.businesses_per_block * extent / (b * b)) as usize;
    for _ in 0..n_bg_biz {
        let ty = pick_type(&mut rng_biz);
        let mut types = vec![ty];
        if ty == BusinessType::Restaurant && rng_biz.bernoulli(0.1) {
            types.push(BusinessType::Nightlife);
        }
        let profile = rng_biz.bernoulli(spec.hours_share).then_some(if ty == BusinessType::Nightlife {
            HoursProfile::LateLong
        } else {
            HoursProfile::Typical
        });
        let profile = match profile {
            Some(HoursProfile::LateLong) if rng_biz.bernoulli(0.6) => Some(HoursProfile::Typical),
            p => p,
        };
        let location = (rng_biz.range(-b, city_m + b), rng_biz.range(-b, city_m + b));
        planned.push(Planned { location, types, profile });
    }
    for (_, _, _, _, blocks) in &bg_info {
        if spec.planted_gyms {
            for &(bx, by, h) in blocks {
                let j = 0.04 * b;
                let quiet = (bx + 0.13 * b + rng_biz.range(-j, j), by + 0.13 * b + rng_biz.range(-j, j));
                planned.push(Planned { location: quiet, types: vec![BusinessType::Gym], profile: Some(HoursProfile::Long) });
                let hot = hotspots_xy[h].1;
                let busy = (hot.0 + rng_biz.range(-j, j), hot.1 + rng_biz.range(-j, j));
                planned.push(Planned { location: busy, types: vec![BusinessType::Gym], profile: Some(HoursProfile::Short) });
            }
        }
        if spec.planted_nightlife {
            let (bx, by, _) = blocks[0];
            let (_, _, h) = blocks[blocks.len() - 1];
            let hot = hotspots_xy[h].1;
            let j = 5.0;
            planned.push(Planned {
                location: (hot.0 + rng_biz.range(-j, j), hot.1 + rng_biz.range(-j, j)),
                types: vec![BusinessType::Nightlife],
                profile: Some(HoursProfile::LateLong),
            });
            planned.push(Planned {
                location: (bx + 0.25 * b + rng_biz.range(-j, j), by + 0.25 * b + rng_biz.range(-j, j)),
                types: vec![BusinessType::Nightlife],
                profile: Some(HoursProfile::LateShort),
            });
        }
    }

    // Listings.
    let mut listings = Vec::new();
    let mut groups = Vec::new();
    let mut next_id = [1000u64, 1, 500_000];
    let mut with_hours = 0usize;
    for (k, p) in planned.iter().enumerate() {
        let name = business_name(k, p.types[0], &mut rng_list);
        let hours = p.profile.map(|pr| sample_hours(pr, &mut rng_list));
        if hours.is_some() {
            with_hours += 1;
        }
        let mut sources: Vec<Source> = [Source::A, Source::B, Source::C]
            .into_iter()
            .zip(spec.source_rates)
            .filter_map(|(s, rate)| rng_list.bernoulli(rate).then_some(s))
            .collect();
        if sources.is_empty() {
            sources.push(Source::A);
        }
        let carrier = rng_list.below(sources.len() as u64) as usize;
        let mut keys = Vec::new();
        for (si, &source) in sources.iter().enumerate() {
            let slot = match source {
                Source::A => 0,
                Source::B => 1,
                Source::C => 2,
            };
            let source_id = match source {
                Source::B => format!("b{:06}", next_id[slot]),
                _ => next_id[slot].to_string(),
            };
            next_id[slot] += 1 + rng_list.below(3);
            let r = spec.listing_jitter_m * rng_list.uniform().sqrt();
            let a = std::f64::consts::TAU * rng_list.uniform();
            let location = pt(p.location.0 + r * a.cos(), p.location.1 + r * a.sin());
            let hours_text = hours.clone().filter(|_| si == carrier || rng_list.bernoulli(0.5));
            let schedule = hours_text.as_ref().map(|h| parse_hours(h).expect("generated hours parse"));
            let key = ListingKey { source, source_id };
            keys.push(key.to_string());
            listings.push(RawListing {
                key,
                name: noisy_name(&name, &spec.name_noise, &mut rng_list),
                location,
                raw_categories: p.types.iter().map(|&t| raw_category(source, t).to_string()).collect(),
                hours_text,
                schedule,
            });
        }
        groups.push(keys);
    }

    let mut category_map = CategoryMap::new();
    for (raw, ty) in category_rows() {
        category_map.insert(&raw, ty);
    }

    let counts = TruthCounts {
        block_groups: n * n,
        blocks: n * n * bps * bps,
        block_groups_included: units.iter().filter(|u| u.level == UnitLevel::BlockGroup && u.included).count(),
        blocks_included: units.iter().filter(|u| u.level == UnitLevel::Block && u.included).count(),
        crimes: crimes.len(),
        margin_crimes: n_margin,
        violent: crimes.iter().filter(|c| c.super_category() == CrimeSuper::Violent).count(),
        non_violent: crimes.iter().filter(|c| c.super_category() == CrimeSuper::NonViolent).count(),
        lots: lots.len(),
        properties: properties.len(),
        listings: listings.len(),
        businesses: planned.len(),
        businesses_with_hours: with_hours,
    };
    let truth = GroundTruth {
        seed: spec.seed,
        timezone: spec.timezone.clone(),
        reference_date: spec.reference_date,
        counts,
        violent: spec.crime.violent,
        non_violent: spec.crime.non_violent,
        extra_crimes: extra_truth,
        hotspots: hotspots_xy
            .iter()
            .map(|(id, (x, y))| {
                let p = pt(*x, *y);
                Hotspot { block_id: id.clone(), lon: p.lon(), lat: p.lat() }
            })
            .collect(),
        vacancy: spec.vacancy,
        planted_gyms: spec.planted_gyms,
        planted_nightlife: spec.planted_nightlife,
        listing_groups: groups,
    };
    Ok(City {
        units,
        lots,
        lot_polygons,
        crimes,
        crime_stamps: stamps,
        properties,
        listings,
        category_map,
        truth,
        spec: spec.clone(),
    })
}

/// Random listings with planted duplicates over a square of `side_m`
/// meters. Returns the listings and, for each, the index of the business it
/// describes.
pub fn planted_listings(seed: u64, businesses: usize, side_m: f64, noise: &NameNoise, jitter_m: f64) -> (Vec<RawListing>, Vec<usize>) {
    let mut rng = SplitMix64::new(seed);
    let proj = LocalProjection::new(GeoPoint::new(-75.2, 39.95).expect("valid origin"));
    let mut listings = Vec::new();
    let mut truth = Vec::new();
    let mut next = [0u64; 3];
    for k in 0..businesses {
        let ty = pick_type(&mut rng);
        let name = business_name(k, ty, &mut rng);
        let (x, y) = (rng.range(0.0, side_m), rng.range(0.0, side_m));
        let copies = 1 + rng.below(3) as usize;
        let mut sources = vec![Source::A, Source::B, Source::C];
        for c in 0..copies {
            let s = sources.remove(rng.below(sources.len() as u64) as usize);
            let slot = usize::from(s == Source::B) + 2 * usize::from(s == Source::C);
            next[slot] += 1;
            let r = jitter_m * rng.uniform().sqrt();
            let a = std::f64::consts::TAU * rng.uniform();
            let hours = (c == 0 && rng.bernoulli(0.4)).then(|| sample_hours(HoursProfile::Typical, &mut rng));
            listings.push(RawListing {
                key: ListingKey { source: s, source_id: format!("{}", next[slot]) },
                name: noisy_name(&name, noise, &mut rng),
                location: proj.to_point(x + r * a.cos(), y + r * a.sin()).expect("on the globe"),
                raw_categories: vec![raw_category(s, ty).to_string()],
                schedule: hours.as_ref().map(|h| parse_hours(h).expect("generated hours parse")),
                hours_text: hours,
            });
            truth.push(k);
        }
    }
    (listings, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec { grid: 4, crime: CrimeModel { extra: vec![PlantedExtra { unit_index: 5, violent: 50 }], ..Default::default() }, ..SynthSpec::planted(9) }
    }

    #[test]
    fn deterministic() {
        let a = generate_city(&small()).unwrap();
        let b = generate_city(&small()).unwrap();
        assert_eq!(a.crime_stamps, b.crime_stamps);
        assert_eq!(a.listings, b.listings);
        assert_eq!(a.truth, b.truth);
        let c = generate_city(&SynthSpec { seed: 10, ..small() }).unwrap();
        assert_ne!(a.crime_stamps, c.crime_stamps);
    }

    #[test]
    fn crimes_outside_units_are_margin_crimes() {
        let city = generate_city(&small()).unwrap();
        let bgs: Vec<&GeoUnit> = city.units.iter().filter(|u| u.level == UnitLevel::BlockGroup).collect();
        let mut outside = 0;
        for c in &city.crimes {
            match bgs.iter().filter(|u| u.region.contains(c.location)).count() {
                0 => outside += 1,
                k => assert_eq!(k, 1),
            }
        }
        assert!(outside > 0);
        assert_eq!(outside, city.truth.counts.margin_crimes);
        assert_eq!(city.truth.counts.crimes, city.crimes.len());
        assert_eq!(city.truth.counts.block_groups, 16);
        assert_eq!(city.truth.counts.blocks, 64);
        assert_eq!(city.truth.hotspots.len(), 64);
        assert_eq!(city.truth.extra_crimes[0].unit_id, "bg-001-001");
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate_city(&SynthSpec { grid: 0, ..small() }).is_err());
        assert!(generate_city(&SynthSpec { timezone: "Mars/Olympus".into(), ..small() }).is_err());
        assert!(generate_city(&SynthSpec { vacant_share: 1.5, ..small() }).is_err());
    }

    #[test]
    fn planted_listing_truth_lines_up() {
        let (l, t) = planted_listings(3, 200, 1000.0, &NameNoise::default(), 15.0);
        assert_eq!(l.len(), t.len());
        assert!(l.len() > 200);
        let keys: std::collections::BTreeSet<_> = l.iter().map(|x| x.key.clone()).collect();
        assert_eq!(keys.len(), l.len());
    }
}
