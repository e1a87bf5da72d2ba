//! Geographic primitives: WGS84 points, polygons, great-circle distance and
//! the spatial indices used for radius queries and point-in-polygon assignment.

mod index;
mod polygon;

pub use index::{assign_points, PolygonIndex, SpatialIndex};
pub use polygon::{planar_area_m2, BoundingBox, GeoPolygon, Region};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Meters spanned by one degree of latitude on the mean sphere.
pub const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("coordinate out of range: lon {lon}, lat {lat}")]
    CoordinateOutOfRange { lon: f64, lat: f64 },
    #[error("ring has {0} vertices, at least 4 are required")]
    TooFewVertices(usize),
    #[error("ring is not closed (first vertex differs from last)")]
    OpenRing,
    #[error("ring self-intersects between segments {0} and {1}")]
    SelfIntersection(usize, usize),
    #[error("query radius must be positive and finite, got {0}")]
    NonPositiveRadius(f64),
}

/// A WGS84 position in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint", into = "RawPoint")]
pub struct GeoPoint {
    lon: f64,
    lat: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPoint {
    lon: f64,
    lat: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = GeometryError;
    fn try_from(raw: RawPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lon, raw.lat)
    }
}

impl From<GeoPoint> for RawPoint {
    fn from(p: GeoPoint) -> Self {
        RawPoint { lon: p.lon, lat: p.lat }
    }
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeometryError> {
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(GeometryError::CoordinateOutOfRange { lon, lat });
        }
        Ok(GeoPoint { lon, lat })
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }
}

/// Haversine great-circle distance in meters.
pub fn distance_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Equirectangular projection to meters about a fixed origin. Accurate at
/// city scale; used for areas and for laying out candidate grids.
#[derive(Debug, Clone, Copy)]
pub struct LocalProjection {
    origin: GeoPoint,
    meters_per_deg_lon: f64,
}

impl LocalProjection {
    pub fn new(origin: GeoPoint) -> Self {
        LocalProjection {
            origin,
            meters_per_deg_lon: METERS_PER_DEGREE * origin.lat.to_radians().cos(),
        }
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn to_xy(&self, p: GeoPoint) -> (f64, f64) {
        (
            (p.lon - self.origin.lon) * self.meters_per_deg_lon,
            (p.lat - self.origin.lat) * METERS_PER_DEGREE,
        )
    }

    /// Inverse of [`to_xy`](Self::to_xy). Fails only when the result leaves
    /// the valid coordinate range.
    pub fn to_point(&self, x: f64, y: f64) -> Result<GeoPoint, GeometryError> {
        GeoPoint::new(
            self.origin.lon + x / self.meters_per_deg_lon,
            self.origin.lat + y / METERS_PER_DEGREE,
        )
    }
}
