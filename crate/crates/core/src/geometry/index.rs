use std::collections::HashMap;

use super::{distance_m, BoundingBox, GeoPoint, GeometryError, Region, METERS_PER_DEGREE};

type CellKey = (i32, i32);

/// Relative and absolute padding applied to query boxes so the cell scan is
/// always a superset of the exact haversine disk.
const BOX_PAD_REL: f64 = 1.01;
const BOX_PAD_ABS_DEG: f64 = 1e-9;

fn cell_of(p: GeoPoint, cell_deg: f64) -> CellKey {
    (
        ((p.lon() + 180.0) / cell_deg).floor() as i32,
        ((p.lat() + 90.0) / cell_deg).floor() as i32,
    )
}

/// Uniform lon/lat grid over a fixed point set. Read-only after build; the
/// bucket contents depend only on input order, so builds are reproducible.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<GeoPoint>,
    cell_deg: f64,
    cells: HashMap<CellKey, Vec<u32>>,
}

impl SpatialIndex {
    /// Builds with a cell size chosen from the extent and density of the
    /// points (about four points per occupied cell).
    pub fn build(points: Vec<GeoPoint>) -> Self {
        let cell_deg = match BoundingBox::of_points(&points) {
            Some(b) => {
                let extent = (b.max_lon - b.min_lon).max(1e-6) * (b.max_lat - b.min_lat).max(1e-6);
                (extent / (points.len() as f64 / 4.0).max(1.0)).sqrt().clamp(1e-5, 1.0)
            }
            None => 1.0,
        };
        Self::with_cell_deg(points, cell_deg)
    }

    pub fn with_cell_deg(points: Vec<GeoPoint>, cell_deg: f64) -> Self {
        assert!(cell_deg > 0.0 && cell_deg.is_finite(), "cell size must be positive");
        assert!(points.len() < u32::MAX as usize, "index holds at most u32::MAX points");
        let mut cells: HashMap<CellKey, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(cell_of(*p, cell_deg)).or_default().push(i as u32);
        }
        SpatialIndex { points, cell_deg, cells }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[GeoPoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> GeoPoint {
        self.points[i]
    }

    /// Indices of every point within `radius_m` (inclusive) of `center`, in
    /// ascending order.
    pub fn radius_query(&self, center: GeoPoint, radius_m: f64) -> Result<Vec<usize>, GeometryError> {
        let mut out = Vec::new();
        self.for_each_within(center, radius_m, |i| out.push(i))?;
        out.sort_unstable();
        Ok(out)
    }

    pub fn count_within(&self, center: GeoPoint, radius_m: f64) -> Result<usize, GeometryError> {
        let mut n = 0;
        self.for_each_within(center, radius_m, |_| n += 1)?;
        Ok(n)
    }

    /// Calls `f` with the index of each point within the radius, in no
    /// particular order.
    pub fn for_each_within(
        &self,
        center: GeoPoint,
        radius_m: f64,
        mut f: impl FnMut(usize),
    ) -> Result<(), GeometryError> {
        if !(radius_m > 0.0) || !radius_m.is_finite() {
            return Err(GeometryError::NonPositiveRadius(radius_m));
        }
        if self.points.is_empty() {
            return Ok(());
        }
        let mut visit = |idx: &[u32]| {
            for &i in idx {
                let i = i as usize;
                if distance_m(center, self.points[i]) <= radius_m {
                    f(i);
                }
            }
        };

        let dlat = radius_m / METERS_PER_DEGREE * BOX_PAD_REL + BOX_PAD_ABS_DEG;
        let lat_lo = center.lat() - dlat;
        let lat_hi = center.lat() + dlat;
        let full_lon = lat_hi >= 90.0 || lat_lo <= -90.0 || {
            let max_abs = lat_lo.abs().max(lat_hi.abs());
            dlat / max_abs.to_radians().cos() >= 180.0
        };
        let mut lon_ranges: Vec<(f64, f64)> = Vec::with_capacity(2);
        if full_lon {
            lon_ranges.push((-180.0, 180.0));
        } else {
            let max_abs = lat_lo.abs().max(lat_hi.abs());
            let dlon = dlat / max_abs.to_radians().cos() + BOX_PAD_ABS_DEG;
            let (lo, hi) = (center.lon() - dlon, center.lon() + dlon);
            lon_ranges.push((lo.max(-180.0), hi.min(180.0)));
            if lo < -180.0 {
                lon_ranges.push((lo + 360.0, 180.0));
            }
            if hi > 180.0 {
                lon_ranges.push((-180.0, hi - 360.0));
            }
        }

        let j_lo = ((lat_lo.max(-90.0) + 90.0) / self.cell_deg).floor() as i32;
        let j_hi = ((lat_hi.min(90.0) + 90.0) / self.cell_deg).floor() as i32;
        for (lon_lo, lon_hi) in lon_ranges {
            let i_lo = ((lon_lo + 180.0) / self.cell_deg).floor() as i32;
            let i_hi = ((lon_hi + 180.0) / self.cell_deg).floor() as i32;
            let span = (i_hi - i_lo + 1) as u64 * (j_hi - j_lo + 1) as u64;
            if span > self.cells.len() as u64 {
                for (&(i, j), idx) in &self.cells {
                    if (i_lo..=i_hi).contains(&i) && (j_lo..=j_hi).contains(&j) {
                        visit(idx);
                    }
                }
            } else {
                for i in i_lo..=i_hi {
                    for j in j_lo..=j_hi {
                        if let Some(idx) = self.cells.get(&(i, j)) {
                            visit(idx);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Grid over region bounding boxes for point-in-polygon lookups.
#[derive(Debug, Clone)]
pub struct PolygonIndex {
    bboxes: Vec<Option<BoundingBox>>,
    areas: Vec<f64>,
    cell_deg: f64,
    cells: HashMap<CellKey, Vec<u32>>,
}

impl PolygonIndex {
    pub fn build<R: AsRef<Region>>(regions: &[R]) -> Self {
        let bboxes: Vec<Option<BoundingBox>> = regions.iter().map(|r| r.as_ref().bbox()).collect();
        let areas = regions.iter().map(|r| r.as_ref().planar_area_m2()).collect();
        let mut sides: Vec<f64> = bboxes
            .iter()
            .flatten()
            .map(|b| (b.max_lon - b.min_lon).max(b.max_lat - b.min_lat))
            .collect();
        sides.sort_by(f64::total_cmp);
        let cell_deg = sides.get(sides.len() / 2).copied().unwrap_or(1.0).clamp(1e-5, 1.0);
        let mut cells: HashMap<CellKey, Vec<u32>> = HashMap::new();
        for (k, bbox) in bboxes.iter().enumerate() {
            let Some(b) = bbox else { continue };
            let lo = cell_of(GeoPoint::new(b.min_lon, b.min_lat).expect("valid bbox"), cell_deg);
            let hi = cell_of(GeoPoint::new(b.max_lon, b.max_lat).expect("valid bbox"), cell_deg);
            for i in lo.0..=hi.0 {
                for j in lo.1..=hi.1 {
                    cells.entry((i, j)).or_default().push(k as u32);
                }
            }
        }
        PolygonIndex { bboxes, areas, cell_deg, cells }
    }

    /// Every region whose polygons contain `p`, in ascending index order.
    pub fn containing<R: AsRef<Region>>(&self, regions: &[R], p: GeoPoint) -> Vec<usize> {
        let Some(candidates) = self.cells.get(&cell_of(p, self.cell_deg)) else {
            return Vec::new();
        };
        candidates
            .iter()
            .map(|&k| k as usize)
            .filter(|&k| self.bboxes[k].is_some_and(|b| b.contains(p)) && regions[k].as_ref().contains(p))
            .collect()
    }

    /// The containing region with the smallest area; ties go to the lower
    /// index. Collisions are logged.
    pub fn locate<R: AsRef<Region>>(&self, regions: &[R], p: GeoPoint) -> Option<usize> {
        let hits = self.containing(regions, p);
        if hits.len() > 1 {
            log::debug!("point ({}, {}) lies in {} overlapping regions", p.lon(), p.lat(), hits.len());
        }
        hits.into_iter()
            .min_by(|&a, &b| self.areas[a].total_cmp(&self.areas[b]).then(a.cmp(&b)))
    }
}

/// Maps each point to the index of the region containing it, or `None`.
pub fn assign_points<R: AsRef<Region> + Sync>(points: &[GeoPoint], regions: &[R]) -> Vec<Option<usize>> {
    use rayon::prelude::*;
    let index = PolygonIndex::build(regions);
    points.par_iter().map(|p| index.locate(regions, *p)).collect()
}
