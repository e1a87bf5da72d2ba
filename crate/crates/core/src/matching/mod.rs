//! Within-unit matched-pairs studies.

mod extreme;
mod stats;
mod study;

pub use extreme::{candidate_grid, locate_extreme_crime, Extremes};
pub use stats::{bonferroni, paired_t, percentile, PairedT};
pub use study::{
    study_high_low, study_hours, write_pairs_csv, write_reports_csv, CrimeType, LocationPair, MatchedPairReport,
    MatchingConfig, StudyOutput, FAMILY_HIGH_LOW_BUSINESS, FAMILY_HIGH_LOW_LANDUSE, FAMILY_OPEN_HOURS,
};
