//! Multi-source business record linkage.
//!
//! Two records match when their normalized names have token-set Jaccard
//! similarity at or above a threshold and they lie within a distance gate.
//! Businesses are the connected components of that relation, so the result
//! does not depend on input order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use super::{map_categories, BusinessType, CategoryMap, ListingKey, RawListing, WeeklySchedule};
use crate::geometry::{GeoPoint, SpatialIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    pub name_similarity: f64,
    pub max_distance_m: f64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig { name_similarity: 0.7, max_distance_m: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Business {
    /// Smallest contributing listing key, e.g. `A:1234`.
    pub id: String,
    pub location: GeoPoint,
    pub canonical_name: String,
    pub types: BTreeSet<BusinessType>,
    pub schedule: Option<WeeklySchedule>,
    pub provenance: BTreeSet<ListingKey>,
}

impl Business {
    pub fn has_type(&self, ty: BusinessType) -> bool {
        self.types.contains(&ty)
    }

    fn from_listing(listing: &RawListing, map: &CategoryMap) -> (Self, Vec<String>) {
        let (types, unmapped) = map_categories(&listing.raw_categories, map);
        let business = Business {
            id: listing.key.to_string(),
            location: listing.location,
            canonical_name: listing.name.clone(),
            types,
            schedule: listing.schedule.clone(),
            provenance: BTreeSet::from([listing.key.clone()]),
        };
        (business, unmapped)
    }

    fn first_key(&self) -> &ListingKey {
        self.provenance.first().expect("provenance is never empty")
    }
}

/// One matched pair that caused a merge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub left: String,
    pub right: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupOutput {
    pub businesses: Vec<Business>,
    pub merges: Vec<MergeRecord>,
    /// Raw categories absent from the category map, with listing counts.
    pub unmapped_categories: BTreeMap<String, usize>,
}

/// Case-folds, strips diacritics and punctuation, and splits into tokens.
pub fn normalize_name(name: &str) -> BTreeSet<String> {
    let cleaned: String = name
        .nfkd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Token-set Jaccard similarity of two names after normalization. Names with
/// no tokens are never similar.
pub fn name_similarity(a: &str, b: &str) -> f64 {
    jaccard(&normalize_name(a), &normalize_name(b))
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Keeps the smaller index as root so roots are canonical.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

/// Merges matching businesses. Members of a merged business contribute the
/// union of their types and provenance; the location is the provenance-
/// weighted mean of member locations; the name is that of the member with the
/// smallest listing key; the schedule is the one with the most open minutes
/// (ties go to the smaller key).
pub fn merge_duplicates(mut records: Vec<Business>, cfg: &DedupConfig) -> (Vec<Business>, Vec<MergeRecord>) {
    records.sort_by(|a, b| a.first_key().cmp(b.first_key()));
    let tokens: Vec<BTreeSet<String>> = records.iter().map(|r| normalize_name(&r.canonical_name)).collect();
    let index = SpatialIndex::build(records.iter().map(|r| r.location).collect());
    let mut sets = DisjointSet::new(records.len());
    let mut merges = Vec::new();
    for i in 0..records.len() {
        let near = index
            .radius_query(records[i].location, cfg.max_distance_m)
            .expect("dedup distance is validated positive");
        for j in near.into_iter().filter(|&j| j > i) {
            if jaccard(&tokens[i], &tokens[j]) >= cfg.name_similarity {
                merges.push(MergeRecord { left: records[i].id.clone(), right: records[j].id.clone() });
                if sets.union(i, j) {
                    log::debug!("merged {} with {}", records[i].id, records[j].id);
                }
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..records.len() {
        let root = sets.find(i);
        groups.entry(root).or_default().push(i);
    }

    let mut out = Vec::with_capacity(groups.len());
    for members in groups.into_values() {
        if members.len() == 1 {
            out.push(records[members[0]].clone());
            continue;
        }
        let first = &records[members[0]];
        let mut types = BTreeSet::new();
        let mut provenance = BTreeSet::new();
        let (mut lon, mut lat, mut weight) = (0.0, 0.0, 0.0);
        let mut schedule: Option<&WeeklySchedule> = None;
        for &m in &members {
            let r = &records[m];
            types.extend(r.types.iter().copied());
            provenance.extend(r.provenance.iter().cloned());
            let w = r.provenance.len() as f64;
            lon += w * r.location.lon();
            lat += w * r.location.lat();
            weight += w;
            if let Some(s) = &r.schedule {
                if schedule.is_none_or(|best| s.total_minutes() > best.total_minutes()) {
                    schedule = Some(s);
                }
            }
        }
        out.push(Business {
            id: first.id.clone(),
            location: GeoPoint::new(lon / weight, lat / weight).expect("mean of valid points is valid"),
            canonical_name: first.canonical_name.clone(),
            types,
            schedule: schedule.cloned(),
            provenance,
        });
    }
    out.sort_by(|a, b| a.first_key().cmp(b.first_key()));
    merges.sort_by(|a, b| (&a.left, &a.right).cmp(&(&b.left, &b.right)));
    (out, merges)
}

/// Maps categories for every listing, then merges duplicates across sources.
pub fn dedup_businesses(listings: &[RawListing], map: &CategoryMap, cfg: &DedupConfig) -> DedupOutput {
    let mut unmapped_categories = BTreeMap::new();
    let records: Vec<Business> = listings
        .iter()
        .map(|l| {
            let (b, unmapped) = Business::from_listing(l, map);
            for u in unmapped {
                *unmapped_categories.entry(u).or_insert(0) += 1;
            }
            b
        })
        .collect();
    if !unmapped_categories.is_empty() {
        log::warn!(
            "{} raw categories are not in the category map and were mapped to institution",
            unmapped_categories.len()
        );
    }
    let (businesses, merges) = merge_duplicates(records, cfg);
    DedupOutput { businesses, merges, unmapped_categories }
}
