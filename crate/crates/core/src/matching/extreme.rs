use serde::{Deserialize, Serialize};

use crate::geometry::{distance_m, GeoPoint, GeometryError, LocalProjection, Region, SpatialIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremes {
    pub hi: GeoPoint,
    pub lo: GeoPoint,
    pub hi_count: usize,
    pub lo_count: usize,
    pub separation_m: f64,
}

struct Grid {
    proj: LocalProjection,
    x0: f64,
    y0: f64,
    rows: usize,
    cols: usize,
    /// Position in `points` of each (row, col) cell inside the region.
    slot: Vec<Option<u32>>,
    points: Vec<GeoPoint>,
    xy: Vec<(f64, f64)>,
}

impl Grid {
    fn new(region: &Region, grid_m: f64) -> Option<Grid> {
        let bbox = region.bbox()?;
        let proj = LocalProjection::new(bbox.center());
        let (x0, y0) = proj.to_xy(GeoPoint::new(bbox.min_lon, bbox.min_lat).expect("bbox corner is valid"));
        let (x1, y1) = proj.to_xy(GeoPoint::new(bbox.max_lon, bbox.max_lat).expect("bbox corner is valid"));
        let cols = ((x1 - x0) / grid_m).ceil().max(1.0) as usize;
        let rows = ((y1 - y0) / grid_m).ceil().max(1.0) as usize;
        let mut grid = Grid { proj, x0, y0, rows, cols, slot: vec![None; rows * cols], points: Vec::new(), xy: Vec::new() };
        for row in 0..rows {
            for col in 0..cols {
                let x = x0 + (col as f64 + 0.5) * grid_m;
                let y = y0 + (row as f64 + 0.5) * grid_m;
                if let Ok(p) = proj.to_point(x, y) {
                    if region.contains(p) {
                        grid.slot[row * cols + col] = Some(grid.points.len() as u32);
                        grid.points.push(p);
                        grid.xy.push((x, y));
                    }
                }
            }
        }
        Some(grid)
    }
}

/// Cell centers of a square grid over the region's bounding box clipped to
/// the region, in scan order: rows from south to north, columns from west
/// to east.
pub fn candidate_grid(region: &Region, grid_m: f64) -> Vec<GeoPoint> {
    Grid::new(region, grid_m).map(|g| g.points).unwrap_or_default()
}

fn reach_of(region: &Region) -> Option<(GeoPoint, f64)> {
    let bbox = region.bbox()?;
    let center = bbox.center();
    let ne = GeoPoint::new(bbox.max_lon, bbox.max_lat).ok()?;
    let sw = GeoPoint::new(bbox.min_lon, bbox.min_lat).ok()?;
    let nw = GeoPoint::new(bbox.min_lon, bbox.max_lat).ok()?;
    let se = GeoPoint::new(bbox.max_lon, bbox.min_lat).ok()?;
    let reach = [ne, sw, nw, se].iter().map(|c| distance_m(center, *c)).fold(0.0, f64::max) + 1.0;
    Some((center, reach))
}

/// Relative slack of the planar pre-test; pairs inside the slack band are
/// settled by great-circle distance.
const PLANAR_SLACK: f64 = 1e-3;

/// Crimes within `radius_m` of every candidate, by scattering each nearby
/// crime onto the cells it reaches.
fn candidate_counts(grid: &Grid, region: &Region, crimes: &SpatialIndex, radius_m: f64, grid_m: f64) -> Result<(Vec<usize>, usize), GeometryError> {
    let mut counts = vec![0usize; grid.points.len()];
    let mut inside = 0usize;
    let Some((center, reach)) = reach_of(region) else { return Ok((counts, 0)) };
    let polar = region.bbox().map_or(true, |b| b.max_lat.abs().max(b.min_lat.abs()) > 80.0);
    let outer = radius_m * (1.0 + PLANAR_SLACK);
    let inner2 = (radius_m * (1.0 - PLANAR_SLACK)).powi(2);
    let outer2 = outer * outer;
    crimes.for_each_within(center, reach + radius_m, |i| {
        let crime = crimes.point(i);
        if region.contains(crime) {
            inside += 1;
        }
        if polar {
            for (k, c) in grid.points.iter().enumerate() {
                if distance_m(*c, crime) <= radius_m {
                    counts[k] += 1;
                }
            }
            return;
        }
        let (cx, cy) = grid.proj.to_xy(crime);
        let span = |lo: f64, hi: f64, origin: f64, n: usize| {
            let a = ((lo - origin) / grid_m - 0.5).ceil().max(0.0);
            let b = ((hi - origin) / grid_m - 0.5).floor().min(n as f64 - 1.0);
            (a as i64, b as i64)
        };
        let (c0, c1) = span(cx - outer, cx + outer, grid.x0, grid.cols);
        let (r0, r1) = span(cy - outer, cy + outer, grid.y0, grid.rows);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let Some(k) = grid.slot[row as usize * grid.cols + col as usize] else { continue };
                let k = k as usize;
                let (x, y) = grid.xy[k];
                let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                if d2 <= inner2 || (d2 <= outer2 && distance_m(grid.points[k], crime) <= radius_m) {
                    counts[k] += 1;
                }
            }
        }
    })?;
    Ok((counts, inside))
}

/// Highest- and lowest-frequency grid candidates of a unit, where frequency
/// counts the indexed crimes within `radius_m`. Ties go to the first
/// candidate in scan order. `None` when the unit holds no crime, all
/// candidates tie, or the two locations are closer than `min_separation_m`.
pub fn locate_extreme_crime(
    region: &Region,
    crimes: &SpatialIndex,
    radius_m: f64,
    grid_m: f64,
    min_separation_m: f64,
) -> Result<Option<Extremes>, GeometryError> {
    if !(grid_m > 0.0) || !grid_m.is_finite() {
        return Err(GeometryError::NonPositiveRadius(grid_m));
    }
    if !(radius_m > 0.0) || !radius_m.is_finite() {
        return Err(GeometryError::NonPositiveRadius(radius_m));
    }
    let Some(grid) = Grid::new(region, grid_m) else { return Ok(None) };
    let (counts, inside) = candidate_counts(&grid, region, crimes, radius_m, grid_m)?;
    if inside == 0 || counts.is_empty() {
        return Ok(None);
    }
    let mut hi = 0;
    let mut lo = 0;
    for (i, &n) in counts.iter().enumerate() {
        if n > counts[hi] {
            hi = i;
        }
        if n < counts[lo] {
            lo = i;
        }
    }
    let separation_m = distance_m(grid.points[hi], grid.points[lo]);
    if counts[hi] == counts[lo] || separation_m < min_separation_m {
        return Ok(None);
    }
    Ok(Some(Extremes {
        hi: grid.points[hi],
        lo: grid.points[lo],
        hi_count: counts[hi],
        lo_count: counts[lo],
        separation_m,
    }))
}
