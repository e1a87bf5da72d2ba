use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::IngestError;

/// The ten business types listings are mapped onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusinessType {
    Cafe,
    Convenience,
    Gym,
    Institution,
    Liquor,
    Lodging,
    Nightlife,
    Pharmacy,
    Restaurant,
    Retail,
}

impl BusinessType {
    pub const ALL: [BusinessType; 10] = [
        BusinessType::Cafe,
        BusinessType::Convenience,
        BusinessType::Gym,
        BusinessType::Institution,
        BusinessType::Liquor,
        BusinessType::Lodging,
        BusinessType::Nightlife,
        BusinessType::Pharmacy,
        BusinessType::Restaurant,
        BusinessType::Retail,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            BusinessType::Cafe => "cafe",
            BusinessType::Convenience => "convenience",
            BusinessType::Gym => "gym",
            BusinessType::Institution => "institution",
            BusinessType::Liquor => "liquor",
            BusinessType::Lodging => "lodging",
            BusinessType::Nightlife => "nightlife",
            BusinessType::Pharmacy => "pharmacy",
            BusinessType::Restaurant => "restaurant",
            BusinessType::Retail => "retail",
        }
    }
}

impl fmt::Display for BusinessType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("unknown business type {0:?}")]
pub struct UnknownBusinessType(pub String);

impl FromStr for BusinessType {
    type Err = UnknownBusinessType;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        BusinessType::ALL
            .into_iter()
            .find(|t| t.name() == key)
            .ok_or_else(|| UnknownBusinessType(s.to_string()))
    }
}

fn category_key(raw: &str) -> String {
    super::normalize_label(raw).replace(' ', "_")
}

/// Raw source category to business type(s). Keys are case and punctuation
/// insensitive (`"Meal Takeaway"` and `meal_takeaway` are the same key).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryMap {
    map: BTreeMap<String, BTreeSet<BusinessType>>,
}

const DEFAULT_MAPPINGS: &[(&str, BusinessType)] = {
    use BusinessType::*;
    &[
        ("cafe", Cafe),
        ("cafes", Cafe),
        ("coffee", Cafe),
        ("coffee_shop", Cafe),
        ("coffeeshops", Cafe),
        ("coffee_tea", Cafe),
        ("bakery", Cafe),
        ("bakeries", Cafe),
        ("tea_room", Cafe),
        ("convenience_store", Convenience),
        ("convenience", Convenience),
        ("gas_station", Convenience),
        ("gym", Gym),
        ("gyms", Gym),
        ("fitness", Gym),
        ("fitness_center", Gym),
        ("yoga", Gym),
        ("bank", Institution),
        ("banks", Institution),
        ("post_office", Institution),
        ("church", Institution),
        ("place_of_worship", Institution),
        ("museum", Institution),
        ("school", Institution),
        ("university", Institution),
        ("library", Institution),
        ("police", Institution),
        ("fire_station", Institution),
        ("hospital", Institution),
        ("city_hall", Institution),
        ("liquor_store", Liquor),
        ("beer_wine_spirits", Liquor),
        ("lodging", Lodging),
        ("hotel", Lodging),
        ("hotels", Lodging),
        ("motel", Lodging),
        ("hostel", Lodging),
        ("bed_breakfast", Lodging),
        ("bar", Nightlife),
        ("bars", Nightlife),
        ("pub", Nightlife),
        ("pubs", Nightlife),
        ("night_club", Nightlife),
        ("nightlife", Nightlife),
        ("lounge", Nightlife),
        ("pharmacy", Pharmacy),
        ("drugstore", Pharmacy),
        ("drugstores", Pharmacy),
        ("restaurant", Restaurant),
        ("restaurants", Restaurant),
        ("meal_takeaway", Restaurant),
        ("meal_delivery", Restaurant),
        ("food", Restaurant),
        ("pizza", Restaurant),
        ("store", Retail),
        ("shopping", Retail),
        ("clothing_store", Retail),
        ("shoe_store", Retail),
        ("book_store", Retail),
        ("electronics_store", Retail),
        ("furniture_store", Retail),
        ("hardware_store", Retail),
        ("jewelry_store", Retail),
        ("department_store", Retail),
        ("grocery_or_supermarket", Retail),
        ("supermarket", Retail),
        ("florist", Retail),
    ]
};

impl CategoryMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Built-in table covering the common place categories of the major
    /// listing providers.
    pub fn builtin() -> Self {
        let mut m = CategoryMap::new();
        for (raw, ty) in DEFAULT_MAPPINGS {
            m.insert(raw, *ty);
        }
        m
    }

    pub fn insert(&mut self, raw: &str, ty: BusinessType) {
        self.map.entry(category_key(raw)).or_default().insert(ty);
    }

    pub fn get(&self, raw: &str) -> Option<&BTreeSet<BusinessType>> {
        self.map.get(&category_key(raw))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Rows of (raw_category, business_type) in key order.
    pub fn rows(&self) -> impl Iterator<Item = (&str, BusinessType)> {
        self.map.iter().flat_map(|(k, v)| v.iter().map(move |t| (k.as_str(), *t)))
    }

    /// Reads a `raw_category,business_type` CSV with a header row. Several
    /// rows may share a raw category.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, IngestError> {
        const DATASET: &str = "category_map";
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| IngestError::malformed(DATASET, 1, e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| IngestError::malformed(DATASET, 1, format!("missing column {name}")))
        };
        let (raw_col, type_col) = (col("raw_category")?, col("business_type")?);
        let mut map = CategoryMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                IngestError::malformed(DATASET, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let raw = &rec[raw_col];
            let ty: BusinessType = rec[type_col]
                .parse()
                .map_err(|e: UnknownBusinessType| IngestError::malformed(DATASET, line, e.to_string()))?;
            map.insert(raw, ty);
        }
        Ok(map)
    }
}

/// Maps raw categories to business types. Any category missing from the map
/// contributes [`BusinessType::Institution`], the catch-all type, and is
/// returned in the second component so callers can warn. The result is never
/// empty.
pub fn map_categories(raw: &[String], map: &CategoryMap) -> (BTreeSet<BusinessType>, Vec<String>) {
    let mut types = BTreeSet::new();
    let mut unmapped = Vec::new();
    for r in raw {
        match map.get(r) {
            Some(ts) => types.extend(ts.iter().copied()),
            None => {
                unmapped.push(r.clone());
                types.insert(BusinessType::Institution);
            }
        }
    }
    if types.is_empty() {
        types.insert(BusinessType::Institution);
    }
    (types, unmapped)
}
