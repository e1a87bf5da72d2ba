//! The run configuration file.
//!
//! A single TOML document holds every tunable. Relative paths resolve against
//! the directory containing the file. `key=value` overrides address nested
//! keys with dots, for example `matching.radius_m=60`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use vibrancy_core::ingest::{DedupConfig, PopulationFilter};
use vibrancy_core::matching::MatchingConfig;
use vibrancy_core::metrics::{PovertyWeights, TimeWindow};
use vibrancy_core::regression::{HuberConfig, ModelSpec};

use crate::CliError;

pub const DEFAULT_FILE: &str = "vibrancy.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub geounits: PathBuf,
    pub population: PathBuf,
    pub acs: PathBuf,
    pub lots: PathBuf,
    pub crimes: PathBuf,
    pub properties: PathBuf,
    pub listings: PathBuf,
    /// The built-in mapping is used when absent.
    pub category_map: Option<PathBuf>,
}

impl Default for Inputs {
    fn default() -> Self {
        Inputs {
            geounits: "geounits.geojson".into(),
            population: "population.csv".into(),
            acs: "acs.csv".into(),
            lots: "lots.geojson".into(),
            crimes: "crimes.csv".into(),
            properties: "properties.csv".into(),
            listings: "listings.jsonl".into(),
            category_map: None,
        }
    }
}

impl Inputs {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.geounits,
            &mut self.population,
            &mut self.acs,
            &mut self.lots,
            &mut self.crimes,
            &mut self.properties,
            &mut self.listings,
        ] {
            *p = base.join(&*p);
        }
        if let Some(p) = &mut self.category_map {
            *p = base.join(&*p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSettings {
    /// Largest tolerated fraction of skipped records per dataset.
    pub max_skip_fraction: f64,
}

impl Default for IngestSettings {
    fn default() -> Self {
        IngestSettings { max_skip_fraction: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressSettings {
    pub specs: Vec<ModelSpec>,
}

impl Default for RegressSettings {
    fn default() -> Self {
        RegressSettings { specs: vec![ModelSpec::Pop, ModelSpec::PopIncomePoverty] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub timezone: String,
    /// Date against which ownership tenure is measured.
    pub reference_date: NaiveDate,
    pub output_dir: PathBuf,
    pub poverty_weights: PovertyWeights,
    pub inputs: Inputs,
    pub filters: PopulationFilter,
    pub ingest: IngestSettings,
    pub dedup: DedupConfig,
    pub huber: HuberConfig,
    pub regress: RegressSettings,
    pub matching: MatchingConfig,
    pub windows: Vec<TimeWindow>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            timezone: "America/New_York".into(),
            reference_date: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            output_dir: "out".into(),
            poverty_weights: PovertyWeights::default(),
            inputs: Inputs::default(),
            filters: PopulationFilter::default(),
            ingest: IngestSettings::default(),
            dedup: DedupConfig::default(),
            huber: HuberConfig::default(),
            regress: RegressSettings::default(),
            matching: MatchingConfig::default(),
            windows: TimeWindow::defaults(),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Parses TOML text, applies overrides and validates. Paths stay as
    /// written.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: toml::Table = text.parse().map_err(|e| usage(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(doc).try_into().map_err(|e| usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the file, or uses defaults when `path` is the default name and
    /// no such file exists. Relative paths then resolve against the file's
    /// directory.
    pub fn load(path: &Path, overrides: &[String], must_exist: bool) -> Result<Self, CliError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && !must_exist => String::new(),
            Err(e) => return Err(usage(format!("cannot read config {}: {e}", path.display()))),
        };
        let mut cfg = Self::from_toml(&text, overrides)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.inputs.resolve(&base);
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn tz(&self) -> Tz {
        self.timezone.parse().expect("validated")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.timezone.parse::<Tz>().map_err(|_| usage(format!("unknown timezone {:?}", self.timezone)))?;
        let m = &self.matching;
        for (name, v) in [
            ("matching.radius_m", m.radius_m),
            ("matching.grid_m", m.grid_m),
            ("matching.hours_radius_m", m.hours_radius_m),
            ("dedup.max_distance_m", self.dedup.max_distance_m),
            ("huber.k", self.huber.k),
            ("huber.mad_factor", self.huber.mad_factor),
            ("huber.tol", self.huber.tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(usage(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("matching.min_separation_m", m.min_separation_m), ("matching.hours_min_separation_m", m.hours_min_separation_m)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(usage(format!("{name} must not be negative, got {v}")));
            }
        }
        if self.huber.max_iter == 0 {
            return Err(usage("huber.max_iter must be positive"));
        }
        if !(self.dedup.name_similarity > 0.0 && self.dedup.name_similarity <= 1.0) {
            return Err(usage("dedup.name_similarity must lie in (0, 1]"));
        }
        if !(m.alpha > 0.0 && m.alpha < 1.0) {
            return Err(usage("matching.alpha must lie in (0, 1)"));
        }
        if !(0.0 <= m.short_percentile && m.short_percentile < m.long_percentile && m.long_percentile <= 100.0) {
            return Err(usage("matching percentiles must satisfy 0 <= short < long <= 100"));
        }
        if !(0.0..=1.0).contains(&self.ingest.max_skip_fraction) {
            return Err(usage("ingest.max_skip_fraction must lie in [0, 1]"));
        }
        if self.regress.specs.is_empty() {
            return Err(usage("regress.specs must not be empty"));
        }
        if self.windows.is_empty() {
            return Err(usage("at least one time window is required"));
        }
        let mut names = BTreeSet::new();
        for w in &self.windows {
            if w.name.is_empty() || !names.insert(w.name.as_str()) {
                return Err(usage(format!("window names must be unique and non-empty: {:?}", w.name)));
            }
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies one `dotted.key=value` override. Values parse as TOML and fall
/// back to plain strings.
pub fn apply_override(doc: &mut toml::Table, raw: &str) -> Result<(), CliError> {
    let (key, value) = raw.split_once('=').ok_or_else(|| usage(format!("override {raw:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(usage(format!("override {raw:?} has an empty key")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut table = doc;
    for p in parents {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| usage(format!("override {raw:?}: {p} is not a table")))?;
    }
    table.insert(last.to_string(), parse_value(value.trim()));
    Ok(())
}
