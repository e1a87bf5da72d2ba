use serde::{Deserialize, Serialize};

use super::{GeoPoint, GeometryError, LocalProjection};

/// Axis-aligned box in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BoundingBox {
    pub fn of_points<'a>(points: impl IntoIterator<Item = &'a GeoPoint>) -> Option<Self> {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        let mut bbox = BoundingBox {
            min_lon: first.lon(),
            min_lat: first.lat(),
            max_lon: first.lon(),
            max_lat: first.lat(),
        };
        for p in iter {
            bbox.min_lon = bbox.min_lon.min(p.lon());
            bbox.min_lat = bbox.min_lat.min(p.lat());
            bbox.max_lon = bbox.max_lon.max(p.lon());
            bbox.max_lat = bbox.max_lat.max(p.lat());
        }
        Some(bbox)
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            min_lon: self.min_lon.min(other.min_lon),
            min_lat: self.min_lat.min(other.min_lat),
            max_lon: self.max_lon.max(other.max_lon),
            max_lat: self.max_lat.max(other.max_lat),
        }
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lon() >= self.min_lon && p.lon() <= self.max_lon && p.lat() >= self.min_lat && p.lat() <= self.max_lat
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint::new(
            (self.min_lon + self.max_lon) / 2.0,
            (self.min_lat + self.max_lat) / 2.0,
        )
        .expect("midpoint of valid coordinates is valid")
    }
}

/// A validated polygon: closed exterior ring plus optional holes. Rings are
/// closed (first vertex repeated last), have at least four vertices and do
/// not self-intersect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolygonRings", into = "PolygonRings")]
pub struct GeoPolygon {
    exterior: Vec<GeoPoint>,
    holes: Vec<Vec<GeoPoint>>,
    bbox: BoundingBox,
}

#[derive(Serialize, Deserialize)]
struct PolygonRings {
    exterior: Vec<GeoPoint>,
    holes: Vec<Vec<GeoPoint>>,
}

impl TryFrom<PolygonRings> for GeoPolygon {
    type Error = GeometryError;
    fn try_from(rings: PolygonRings) -> Result<Self, Self::Error> {
        GeoPolygon::new(rings.exterior, rings.holes)
    }
}

impl From<GeoPolygon> for PolygonRings {
    fn from(p: GeoPolygon) -> Self {
        PolygonRings { exterior: p.exterior, holes: p.holes }
    }
}

impl GeoPolygon {
    pub fn new(exterior: Vec<GeoPoint>, holes: Vec<Vec<GeoPoint>>) -> Result<Self, GeometryError> {
        validate_ring(&exterior)?;
        for hole in &holes {
            validate_ring(hole)?;
        }
        let bbox = BoundingBox::of_points(&exterior).expect("validated ring is non-empty");
        Ok(GeoPolygon { exterior, holes, bbox })
    }

    /// Axis-aligned rectangle; convenient for gridded units.
    pub fn rectangle(min: GeoPoint, max: GeoPoint) -> Result<Self, GeometryError> {
        let corner = |lon, lat| GeoPoint::new(lon, lat);
        let ring = vec![
            corner(min.lon(), min.lat())?,
            corner(max.lon(), min.lat())?,
            corner(max.lon(), max.lat())?,
            corner(min.lon(), max.lat())?,
            corner(min.lon(), min.lat())?,
        ];
        GeoPolygon::new(ring, Vec::new())
    }

    pub fn exterior(&self) -> &[GeoPoint] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<GeoPoint>] {
        &self.holes
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    fn rings(&self) -> impl Iterator<Item = &[GeoPoint]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(Vec::as_slice))
    }

    /// Even-odd containment over all rings. Points on any edge (exterior or
    /// hole) count as inside.
    pub fn contains(&self, p: GeoPoint) -> bool {
        if !self.bbox().contains(p) {
            return false;
        }
        let (px, py) = (p.lon(), p.lat());
        let mut inside = false;
        for ring in self.rings() {
            for edge in ring.windows(2) {
                let (ax, ay) = (edge[0].lon(), edge[0].lat());
                let (bx, by) = (edge[1].lon(), edge[1].lat());
                if on_segment(px, py, ax, ay, bx, by) {
                    return true;
                }
                if (ay > py) != (by > py) {
                    let x_cross = ax + (py - ay) * (bx - ax) / (by - ay);
                    if px < x_cross {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }

    /// Mean of the exterior vertices (closing vertex excluded).
    pub fn vertex_centroid(&self) -> GeoPoint {
        let open = &self.exterior[..self.exterior.len() - 1];
        let n = open.len() as f64;
        let lon = open.iter().map(|p| p.lon()).sum::<f64>() / n;
        let lat = open.iter().map(|p| p.lat()).sum::<f64>() / n;
        GeoPoint::new(lon, lat).expect("mean of valid coordinates is valid")
    }

    /// Area-weighted centroid of the exterior ring, falling back to the
    /// vertex mean for degenerate rings.
    pub fn centroid(&self) -> GeoPoint {
        let proj = LocalProjection::new(self.vertex_centroid());
        let xy: Vec<(f64, f64)> = self.exterior.iter().map(|p| proj.to_xy(*p)).collect();
        let mut a2 = 0.0;
        let (mut cx, mut cy) = (0.0, 0.0);
        for w in xy.windows(2) {
            let cross = w[0].0 * w[1].1 - w[1].0 * w[0].1;
            a2 += cross;
            cx += (w[0].0 + w[1].0) * cross;
            cy += (w[0].1 + w[1].1) * cross;
        }
        if a2.abs() < 1e-9 {
            return proj.origin();
        }
        proj.to_point(cx / (3.0 * a2), cy / (3.0 * a2))
            .unwrap_or_else(|_| proj.origin())
    }
}

fn on_segment(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    if cross.abs() > 1e-14 {
        return false;
    }
    px >= ax.min(bx) && px <= ax.max(bx) && py >= ay.min(by) && py <= ay.max(by)
}

fn validate_ring(ring: &[GeoPoint]) -> Result<(), GeometryError> {
    if ring.len() < 4 {
        return Err(GeometryError::TooFewVertices(ring.len()));
    }
    if ring.first() != ring.last() {
        return Err(GeometryError::OpenRing);
    }
    let segments = ring.len() - 1;
    for i in 0..segments {
        for j in (i + 1)..segments {
            let adjacent = j == i + 1 || (i == 0 && j == segments - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(ring[i], ring[i + 1], ring[j], ring[j + 1]) {
                return Err(GeometryError::SelfIntersection(i, j));
            }
        }
    }
    Ok(())
}

fn orientation(a: GeoPoint, b: GeoPoint, c: GeoPoint) -> f64 {
    (b.lon() - a.lon()) * (c.lat() - a.lat()) - (b.lat() - a.lat()) * (c.lon() - a.lon())
}

fn segments_intersect(p1: GeoPoint, p2: GeoPoint, q1: GeoPoint, q2: GeoPoint) -> bool {
    let d1 = orientation(q1, q2, p1);
    let d2 = orientation(q1, q2, p2);
    let d3 = orientation(p1, p2, q1);
    let d4 = orientation(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let touches = |d: f64, a: GeoPoint, b: GeoPoint, p: GeoPoint| {
        d == 0.0 && on_segment(p.lon(), p.lat(), a.lon(), a.lat(), b.lon(), b.lat())
    };
    touches(d1, q1, q2, p1) || touches(d2, q1, q2, p2) || touches(d3, p1, p2, q1) || touches(d4, p1, p2, q2)
}

fn ring_area_m2(ring: &[GeoPoint], proj: &LocalProjection) -> f64 {
    let xy: Vec<(f64, f64)> = ring.iter().map(|p| proj.to_xy(*p)).collect();
    let twice: f64 = xy.windows(2).map(|w| w[0].0 * w[1].1 - w[1].0 * w[0].1).sum();
    (twice / 2.0).abs()
}

/// Shoelace area after an equirectangular projection about the vertex
/// centroid, holes subtracted.
pub fn planar_area_m2(polygon: &GeoPolygon) -> f64 {
    let proj = LocalProjection::new(polygon.vertex_centroid());
    let outer = ring_area_m2(&polygon.exterior, &proj);
    let holes: f64 = polygon.holes.iter().map(|h| ring_area_m2(h, &proj)).sum();
    (outer - holes).max(0.0)
}

/// One or more polygons sharing an identifier (a MultiPolygon feature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    parts: Vec<GeoPolygon>,
}

impl Region {
    pub fn new(parts: Vec<GeoPolygon>) -> Self {
        Region { parts }
    }

    pub fn parts(&self) -> &[GeoPolygon] {
        &self.parts
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        self.parts.iter().any(|poly| poly.contains(p))
    }

    pub fn bbox(&self) -> Option<BoundingBox> {
        self.parts.iter().map(GeoPolygon::bbox).reduce(|a, b| a.union(&b))
    }

    pub fn planar_area_m2(&self) -> f64 {
        self.parts.iter().map(planar_area_m2).sum()
    }

    /// Centroid of the largest part.
    pub fn centroid(&self) -> Option<GeoPoint> {
        self.parts
            .iter()
            .max_by(|a, b| planar_area_m2(a).total_cmp(&planar_area_m2(b)))
            .map(GeoPolygon::centroid)
    }
}

impl AsRef<Region> for Region {
    fn as_ref(&self) -> &Region {
        self
    }
}
