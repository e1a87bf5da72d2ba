//! Pipeline stages and their on-disk outputs.
//!
//! Every stage writes into its own directory under the output directory and
//! finishes by writing `manifest.json`, which records a hash of the
//! configuration the stage depends on (including its upstream stages) and a
//! digest of each file it wrote. A stage refuses to run when an upstream
//! manifest is missing or was produced under a different configuration.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use vibrancy_core::ingest::{
    dedup_businesses, load_crimes, load_geounits, load_lots, load_listings, load_properties, Business, CategoryMap, CrimeEvent,
    GeoUnit, IngestError, LandLot, LoadReport, PropertyRecord, UnitLevel,
};
use vibrancy_core::matching::{
    study_high_low, study_hours, write_pairs_csv, write_reports_csv, MatchedPairReport, FAMILY_HIGH_LOW_BUSINESS,
    FAMILY_HIGH_LOW_LANDUSE, FAMILY_OPEN_HOURS,
};
use vibrancy_core::metrics::{compute_unit_metrics, consensus_hours, write_consensus_csv, write_unit_metrics_csv, UnitMetrics, VibrancySources};
use vibrancy_core::regression::{
    association_report, count_crimes, excess_crime, write_association_csv, write_excess_csv, ModelSpec, RegressionFit,
};
use vibrancy_core::synth::{generate_city, write_city, SynthSpec};

use crate::config::{RunConfig, DEFAULT_FILE};
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Metrics,
    Regress,
    Match,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Metrics => "metrics",
            Stage::Regress => "regress",
            Stage::Match => "match",
            Stage::Report => "report",
        }
    }

    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Metrics | Stage::Match => &[Stage::Ingest],
            Stage::Regress => &[Stage::Ingest, Stage::Metrics],
            Stage::Report => &[Stage::Ingest, Stage::Metrics, Stage::Regress, Stage::Match],
        }
    }

    fn settings(self, cfg: &RunConfig) -> serde_json::Value {
        match self {
            Stage::Ingest => json!({
                "inputs": cfg.inputs,
                "timezone": cfg.timezone,
                "reference_date": cfg.reference_date,
                "filters": cfg.filters,
                "ingest": cfg.ingest,
                "dedup": cfg.dedup,
            }),
            Stage::Metrics => json!({ "poverty_weights": cfg.poverty_weights, "windows": cfg.windows }),
            Stage::Regress => json!({ "huber": cfg.huber, "regress": cfg.regress }),
            Stage::Match => json!({ "matching": cfg.matching, "windows": cfg.windows, "reference_date": cfg.reference_date }),
            Stage::Report => json!({}),
        }
    }

    /// Hash of everything this stage's outputs depend on.
    pub fn config_hash(self, cfg: &RunConfig) -> String {
        let mut h = Sha256::new();
        h.update(self.name());
        h.update(self.settings(cfg).to_string());
        for up in self.upstream() {
            h.update(up.config_hash(cfg));
        }
        hex::encode(h.finalize())
    }

    pub fn dir(self, cfg: &RunConfig) -> PathBuf {
        cfg.output_dir.join(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    pub upstream: BTreeMap<String, String>,
    /// File name to SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
}

fn data(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    data(format!("{}: {e}", path.display()))
}

fn ingest_err(e: IngestError) -> CliError {
    data(e.to_string())
}

fn digest(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Checks that every upstream stage ran under the current configuration.
pub fn require_upstream(stage: Stage, cfg: &RunConfig) -> Result<(), CliError> {
    for &up in stage.upstream() {
        let path = up.dir(cfg).join(MANIFEST);
        let Ok(text) = fs::read_to_string(&path) else {
            return Err(data(format!(
                "missing upstream stage `{}`: no {} found; run `vibrancy {}` first",
                up.name(),
                path.display(),
                up.name()
            )));
        };
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| data(format!("upstream stage `{}`: unreadable manifest: {e}", up.name())))?;
        if manifest.config_hash != up.config_hash(cfg) {
            return Err(data(format!(
                "upstream stage `{}` is stale: it ran under a different configuration; rerun `vibrancy {}`",
                up.name(),
                up.name()
            )));
        }
        for (file, want) in &manifest.files {
            let p = up.dir(cfg).join(file);
            if !p.is_file() || &digest(&p)? != want {
                return Err(data(format!(
                    "upstream stage `{}` is incomplete: {} is missing or changed; rerun `vibrancy {}`",
                    up.name(),
                    p.display(),
                    up.name()
                )));
            }
        }
    }
    Ok(())
}

/// Collects a stage's files and seals them with a manifest.
struct StageWriter {
    stage: Stage,
    dir: PathBuf,
    files: Vec<String>,
}

impl StageWriter {
    fn new(stage: Stage, cfg: &RunConfig) -> Result<Self, CliError> {
        let dir = stage.dir(cfg);
        let _ = fs::remove_file(dir.join(MANIFEST));
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(StageWriter { stage, dir, files: Vec::new() })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        self.files.push(name.to_string());
        File::create(&path).map(BufWriter::new).map_err(|e| io_err(&path, e))
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut BufWriter<File>) -> csv::Result<()>) -> Result<(), CliError> {
        let mut out = self.create(name)?;
        write(&mut out).map_err(|e| io_err(&self.dir.join(name), e))?;
        out.flush().map_err(|e| io_err(&self.dir.join(name), e))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut out = self.create(name)?;
        serde_json::to_writer_pretty(&mut out, value).map_err(|e| io_err(&self.dir.join(name), e))?;
        out.write_all(b"\n").and_then(|_| out.flush()).map_err(|e| io_err(&self.dir.join(name), e))
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let mut out = self.create(name)?;
        out.write_all(body.as_bytes()).and_then(|_| out.flush()).map_err(|e| io_err(&self.dir.join(name), e))
    }

    fn finish(self, cfg: &RunConfig) -> Result<PathBuf, CliError> {
        let mut files = BTreeMap::new();
        for f in &self.files {
            files.insert(f.clone(), digest(&self.dir.join(f))?);
        }
        let upstream = self.stage.upstream().iter().map(|u| (u.name().to_string(), u.config_hash(cfg))).collect();
        let manifest = Manifest { stage: self.stage.name().into(), config_hash: self.stage.config_hash(cfg), upstream, files };
        let path = self.dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok(self.dir)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| io_err(path, e))
}

/// The normalized datasets produced by ingest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub units: Vec<GeoUnit>,
    pub crimes: Vec<CrimeEvent>,
    pub lots: Vec<LandLot>,
    pub properties: Vec<PropertyRecord>,
    pub businesses: Vec<Business>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub datasets: Vec<LoadReport>,
    pub block_groups: usize,
    pub block_groups_included: usize,
    pub blocks: usize,
    pub blocks_included: usize,
    pub listings: usize,
    pub businesses: usize,
    pub businesses_with_hours: usize,
    pub merges: usize,
    pub unmapped_categories: BTreeMap<String, usize>,
}

fn open_input(path: &Path, dataset: &str) -> Result<File, CliError> {
    File::open(path).map_err(|e| data(format!("cannot open {dataset} input {}: {e}", path.display())))
}

fn read_input(path: &Path, dataset: &str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| data(format!("cannot read {dataset} input {}: {e}", path.display())))
}

pub fn load_bundle(cfg: &RunConfig) -> Result<Bundle, CliError> {
    read_json(&Stage::Ingest.dir(cfg).join("bundle.json"))
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<IngestReport, CliError> {
    let inp = &cfg.inputs;
    let geo = read_input(&inp.geounits, "geounits")?;
    let (units, unit_report) =
        load_geounits(&geo, open_input(&inp.population, "population")?, open_input(&inp.acs, "acs")?, cfg.filters).map_err(ingest_err)?;
    let (crimes, crime_report) = load_crimes(open_input(&inp.crimes, "crimes")?, cfg.tz()).map_err(ingest_err)?;
    let (lots, lot_report) = load_lots(&read_input(&inp.lots, "lots")?).map_err(ingest_err)?;
    let (properties, property_report) =
        load_properties(open_input(&inp.properties, "properties")?, cfg.reference_date).map_err(ingest_err)?;
    let (listings, listing_report) = load_listings(open_input(&inp.listings, "listings")?).map_err(ingest_err)?;
    let map = match &inp.category_map {
        Some(p) => CategoryMap::from_csv(open_input(p, "category_map")?).map_err(ingest_err)?,
        None => CategoryMap::builtin(),
    };
    let dedup = dedup_businesses(&listings, &map, &cfg.dedup);
    if dedup.businesses.is_empty() {
        log::warn!("no businesses after deduplication ({} listings read)", listings.len());
    }
    let level_count = |level: UnitLevel, included: bool| {
        units.iter().filter(|u| u.level == level && (u.included || !included)).count()
    };
    let report = IngestReport {
        datasets: vec![unit_report, crime_report, lot_report, property_report, listing_report],
        block_groups: level_count(UnitLevel::BlockGroup, false),
        block_groups_included: level_count(UnitLevel::BlockGroup, true),
        blocks: level_count(UnitLevel::Block, false),
        blocks_included: level_count(UnitLevel::Block, true),
        listings: listings.len(),
        businesses: dedup.businesses.len(),
        businesses_with_hours: dedup.businesses.iter().filter(|b| b.schedule.is_some()).count(),
        merges: dedup.merges.len(),
        unmapped_categories: dedup.unmapped_categories.clone(),
    };

    let mut w = StageWriter::new(Stage::Ingest, cfg)?;
    w.json("ingest_report.json", &report)?;
    for r in &report.datasets {
        if let Err(e) = r.check_skips(cfg.ingest.max_skip_fraction) {
            return Err(data(format!("{e} (see {})", w.dir.join("ingest_report.json").display())));
        }
    }
    w.csv("dedup_log.csv", |out| {
        let mut c = csv::Writer::from_writer(out);
        c.write_record(["left", "right"])?;
        for m in &dedup.merges {
            c.write_record([&m.left, &m.right])?;
        }
        c.flush()?;
        Ok(())
    })?;
    let bundle = Bundle { units, crimes, lots, properties, businesses: dedup.businesses };
    let mut out = w.create("bundle.json")?;
    serde_json::to_writer(&mut out, &bundle).map_err(|e| data(e.to_string()))?;
    out.flush().map_err(|e| data(e.to_string()))?;
    w.finish(cfg)?;
    Ok(report)
}

pub fn cmd_metrics(cfg: &RunConfig) -> Result<Vec<UnitMetrics>, CliError> {
    require_upstream(Stage::Metrics, cfg)?;
    let bundle = load_bundle(cfg)?;
    let metrics = compute_unit_metrics(&bundle.units, &bundle.lots, &cfg.poverty_weights).map_err(|e| data(e.to_string()))?;
    let consensus: Vec<_> = cfg.windows.iter().map(|win| consensus_hours(&bundle.businesses, win)).collect();
    let mut w = StageWriter::new(Stage::Metrics, cfg)?;
    w.csv("unit_metrics.csv", |out| write_unit_metrics_csv(out, &metrics))?;
    w.csv("consensus_hours.csv", |out| write_consensus_csv(out, &consensus))?;
    w.json("unit_metrics.json", &metrics)?;
    w.finish(cfg)?;
    Ok(metrics)
}

/// File-name form of a model spec tag.
pub fn spec_slug(spec: ModelSpec) -> String {
    spec.tag().replace('+', "_")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub spec: ModelSpec,
    pub outcome: String,
    pub fit: RegressionFit,
}

pub fn cmd_regress(cfg: &RunConfig) -> Result<Vec<FitSummary>, CliError> {
    require_upstream(Stage::Regress, cfg)?;
    let bundle = load_bundle(cfg)?;
    let metrics: Vec<UnitMetrics> = read_json(&Stage::Metrics.dir(cfg).join("unit_metrics.json"))?;
    if metrics.len() != bundle.units.len() {
        return Err(data("metrics do not line up with the ingested units; rerun `vibrancy metrics`"));
    }
    let counts = count_crimes(&bundle.units, &bundle.crimes, None);
    let mut w = StageWriter::new(Stage::Regress, cfg)?;
    let mut fits = Vec::new();
    for &spec in &cfg.regress.specs {
        let res = excess_crime(&metrics, &counts, spec, &cfg.huber).map_err(|e| CliError::Numerical(format!("excess crime ({spec}): {e}")))?;
        let assoc = association_report(&metrics, &counts, Some(&res), &cfg.huber);
        let slug = spec_slug(spec);
        w.csv(&format!("excess_crime_{slug}.csv"), |out| write_excess_csv(out, &res.rows))?;
        w.csv(&format!("association_{slug}.csv"), |out| write_association_csv(out, &assoc))?;
        fits.push(FitSummary { spec, outcome: "violent".into(), fit: res.violent_fit });
        fits.push(FitSummary { spec, outcome: "non_violent".into(), fit: res.nonviolent_fit });
    }
    w.csv("coefficients.csv", |out| {
        let mut c = csv::Writer::from_writer(out);
        c.write_record(["spec", "outcome", "term", "coefficient", "std_error", "scale", "iterations", "converged"])?;
        for f in &fits {
            for (k, name) in f.fit.names.iter().enumerate() {
                c.write_record([
                    f.spec.tag().to_string(),
                    f.outcome.clone(),
                    name.clone(),
                    f.fit.coefficients[k].to_string(),
                    f.fit.std_errors[k].to_string(),
                    f.fit.scale.to_string(),
                    f.fit.iterations.to_string(),
                    u8::from(f.fit.converged).to_string(),
                ])?;
            }
        }
        c.flush()?;
        Ok(())
    })?;
    w.json("fits.json", &fits)?;
    w.finish(cfg)?;
    Ok(fits)
}

pub const FAMILY_FILES: [(&str, &str); 3] = [
    (FAMILY_HIGH_LOW_BUSINESS, "high_low_business.csv"),
    (FAMILY_HIGH_LOW_LANDUSE, "high_low_landuse.csv"),
    (FAMILY_OPEN_HOURS, "open_hours.csv"),
];

pub fn cmd_match(cfg: &RunConfig) -> Result<Vec<MatchedPairReport>, CliError> {
    require_upstream(Stage::Match, cfg)?;
    let bundle = load_bundle(cfg)?;
    let sources = VibrancySources::new(&bundle.businesses, &bundle.properties, &bundle.lots, cfg.reference_date);
    let geometry = |e: vibrancy_core::geometry::GeometryError| data(e.to_string());
    let a = study_high_low(&bundle.units, &bundle.crimes, &sources, &cfg.windows, &cfg.matching).map_err(geometry)?;
    let b = study_hours(&bundle.units, &bundle.crimes, &sources, &cfg.windows, &cfg.matching).map_err(geometry)?;
    let reports: Vec<MatchedPairReport> = a.reports.into_iter().chain(b.reports).collect();
    let pairs: Vec<_> = a.pairs.into_iter().chain(b.pairs).collect();
    let mut w = StageWriter::new(Stage::Match, cfg)?;
    for (family, file) in FAMILY_FILES {
        let rows: Vec<MatchedPairReport> = reports.iter().filter(|r| r.study == family).cloned().collect();
        w.csv(file, |out| write_reports_csv(out, &rows))?;
    }
    w.csv("pairs.csv", |out| write_pairs_csv(out, &pairs))?;
    w.json("reports.json", &reports)?;
    w.finish(cfg)?;
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub family: String,
    pub cells: usize,
    pub tested: usize,
    pub significant: Vec<MatchedPairReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ingest: IngestReport,
    pub fits: Vec<FitSummary>,
    pub families: Vec<FamilySummary>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn summary_markdown(s: &RunSummary) -> String {
    let mut md = String::from("# Run summary\n\n## Ingest\n\n");
    let i = &s.ingest;
    md += &format!(
        "- block groups: {} ({} included)\n- blocks: {} ({} included)\n- listings: {}\n- businesses: {} ({} with hours, {} merges)\n",
        i.block_groups, i.block_groups_included, i.blocks, i.blocks_included, i.listings, i.businesses, i.businesses_with_hours, i.merges
    );
    for d in &i.datasets {
        md += &format!("- {}: {} of {} records loaded, {} skipped\n", d.dataset, d.loaded, d.total, d.skipped.len());
    }
    md += "\n## Excess crime models\n\n| spec | outcome | term | coefficient | std error |\n|---|---|---|---|---|\n";
    for f in &s.fits {
        for (k, name) in f.fit.names.iter().enumerate() {
            md += &format!("| {} | {} | {} | {:.6} | {:.6} |\n", f.spec, f.outcome, name, f.fit.coefficients[k], f.fit.std_errors[k]);
        }
    }
    md += "\n## Matched pairs\n";
    for fam in &s.families {
        md += &format!("\n### {}\n\n{} of {} cells tested, {} significant after Bonferroni.\n", fam.family, fam.tested, fam.cells, fam.significant.len());
        if !fam.significant.is_empty() {
            md += "\n| measure | crime type | window | n | mean diff | t |\n|---|---|---|---|---|---|\n";
            for r in &fam.significant {
                md += &format!("| {} | {} | {} | {} | {} | {} |\n", r.measure, r.crime_type, r.window, r.n, fmt_opt(r.mean_diff), fmt_opt(r.t));
            }
        }
    }
    md
}

pub fn cmd_report(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    require_upstream(Stage::Report, cfg)?;
    let ingest: IngestReport = read_json(&Stage::Ingest.dir(cfg).join("ingest_report.json"))?;
    let reports: Vec<MatchedPairReport> = read_json(&Stage::Match.dir(cfg).join("reports.json"))?;
    let fits: Vec<FitSummary> = read_json(&Stage::Regress.dir(cfg).join("fits.json"))?;
    let families = FAMILY_FILES
        .iter()
        .map(|(family, _)| {
            let rows: Vec<&MatchedPairReport> = reports.iter().filter(|r| r.study == *family).collect();
            FamilySummary {
                family: family.to_string(),
                cells: rows.len(),
                tested: rows.iter().filter(|r| r.p_raw.is_some()).count(),
                significant: rows.iter().filter(|r| r.significant).map(|r| (*r).clone()).collect(),
            }
        })
        .collect();
    let summary = RunSummary { ingest, fits, families };
    let mut w = StageWriter::new(Stage::Report, cfg)?;
    w.json("summary.json", &summary)?;
    w.text("summary.md", &summary_markdown(&summary))?;
    w.finish(cfg)?;
    Ok(summary)
}

/// Generates a synthetic city into `dir` together with a run configuration
/// that points at it.
pub fn cmd_synth(spec: &SynthSpec, dir: &Path) -> Result<PathBuf, CliError> {
    let city = generate_city(spec).map_err(CliError::Usage)?;
    write_city(&city, dir).map_err(|e| io_err(dir, e))?;
    let mut cfg = RunConfig { timezone: spec.timezone.clone(), reference_date: spec.reference_date, ..RunConfig::default() };
    cfg.inputs.category_map = Some("category_map.csv".into());
    let path = dir.join(DEFAULT_FILE);
    fs::write(&path, cfg.to_toml()).map_err(|e| io_err(&path, e))?;
    Ok(path)
}
