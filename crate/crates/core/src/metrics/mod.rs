//! Per-unit economic and land-use measures and per-location business
//! vibrancy measures.

mod hours;
mod unit;
mod vibrancy;

pub use hours::{consensus_hours, excess_hours, hours_in_window, write_consensus_csv, Consensus, TimeWindow};
pub use unit::{compute_unit_metrics, points_per_unit, landuse_props, population_density, poverty_index, write_unit_metrics_csv, LandUseProps, PovertyWeights, UnitMetrics};
pub use vibrancy::{vibrancy_at, write_vibrancy_csv, VibrancyAtLocation, VibrancySources};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("poverty brackets sum to {0}, expected 1 within 1e-6")]
    BracketSum(f64),
    #[error("poverty weights must be non-increasing from 1 to 0")]
    BadWeights,
}
