use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{huber_fit, Design, HuberConfig, RegressionError, RegressionFit};
use crate::ingest::{CrimeEvent, CrimeSuper, GeoUnit, UnitLevel};
use crate::metrics::{points_per_unit, TimeWindow, UnitMetrics};
use crate::table::opt;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrimeCounts {
    pub violent: u32,
    pub non_violent: u32,
}

impl CrimeCounts {
    pub fn get(&self, s: CrimeSuper) -> u32 {
        match s {
            CrimeSuper::Violent => self.violent,
            CrimeSuper::NonViolent => self.non_violent,
        }
    }
}

/// Crimes per unit by containment at each unit's level, optionally
/// restricted to a window.
pub fn count_crimes(units: &[GeoUnit], crimes: &[CrimeEvent], window: Option<&TimeWindow>) -> Vec<CrimeCounts> {
    let kept: Vec<&CrimeEvent> =
        crimes.iter().filter(|c| window.map_or(true, |w| w.contains_minute(c.minute_of_week()))).collect();
    let points: Vec<_> = kept.iter().map(|c| c.location).collect();
    points_per_unit(&points, units)
        .iter()
        .map(|members| {
            let violent = members.iter().filter(|&&k| kept[k].super_category() == CrimeSuper::Violent).count() as u32;
            CrimeCounts { violent, non_violent: members.len() as u32 - violent }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelSpec {
    #[serde(rename = "pop")]
    Pop,
    #[serde(rename = "pop+income+poverty")]
    PopIncomePoverty,
}

impl ModelSpec {
    pub fn tag(self) -> &'static str {
        match self {
            ModelSpec::Pop => "pop",
            ModelSpec::PopIncomePoverty => "pop+income+poverty",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim() {
            "pop" => Some(ModelSpec::Pop),
            "pop+income+poverty" => Some(ModelSpec::PopIncomePoverty),
            _ => None,
        }
    }

    fn predictors(self, m: &UnitMetrics) -> Option<Vec<f64>> {
        let pop = m.population as f64;
        match self {
            ModelSpec::Pop => Some(vec![pop]),
            ModelSpec::PopIncomePoverty => Some(vec![pop, m.per_capita_income?, m.poverty?]),
        }
    }

    fn names(self) -> Vec<&'static str> {
        match self {
            ModelSpec::Pop => vec!["population"],
            ModelSpec::PopIncomePoverty => vec!["population", "per_capita_income", "poverty"],
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessCrime {
    pub unit_id: String,
    pub excess_violent: f64,
    pub excess_nonviolent: f64,
    pub spec: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessCrimeResult {
    pub spec: ModelSpec,
    pub rows: Vec<ExcessCrime>,
    pub violent_fit: RegressionFit,
    pub nonviolent_fit: RegressionFit,
    /// Included units dropped for missing predictors.
    pub excluded: Vec<String>,
}

/// Residual crime after robustly regressing out the spec's predictors.
/// `metrics` and `counts` are aligned. Only block groups enter the fit; units
/// failing the population filter produce no row.
pub fn excess_crime(
    metrics: &[UnitMetrics],
    counts: &[CrimeCounts],
    spec: ModelSpec,
    cfg: &HuberConfig,
) -> Result<ExcessCrimeResult, RegressionError> {
    assert_eq!(metrics.len(), counts.len());
    let mut rows = Vec::new();
    let mut preds: Vec<Vec<f64>> = Vec::new();
    let mut excluded = Vec::new();
    for (i, m) in metrics.iter().enumerate() {
        if !m.included || m.level != UnitLevel::BlockGroup {
            continue;
        }
        match spec.predictors(m) {
            Some(p) => {
                rows.push(i);
                preds.push(p);
            }
            None => excluded.push(m.unit_id.clone()),
        }
    }
    if !excluded.is_empty() {
        log::info!("excess crime ({spec}): {} units lack predictors and are excluded", excluded.len());
    }
    let n = rows.len();
    let columns: Vec<(String, Vec<f64>)> = spec
        .names()
        .into_iter()
        .enumerate()
        .map(|(j, name)| (name.to_string(), preds.iter().map(|p| p[j]).collect()))
        .collect();
    let mut design = Design::with_intercept(n, columns.clone());
    if let Err(RegressionError::RankDeficient { columns: bad }) = super::wls(&design, &vec![0.0; n], &vec![1.0; n]) {
        log::warn!("excess crime ({spec}): dropping collinear predictors {}", bad.join(", "));
        let kept = columns.into_iter().filter(|(name, _)| !bad.contains(name)).collect();
        design = Design::with_intercept(n, kept);
    }
    let yv: Vec<f64> = rows.iter().map(|&i| f64::from(counts[i].violent)).collect();
    let yn: Vec<f64> = rows.iter().map(|&i| f64::from(counts[i].non_violent)).collect();
    let (violent_fit, nonviolent_fit) = rayon::join(|| huber_fit(&design, &yv, cfg), || huber_fit(&design, &yn, cfg));
    let (violent_fit, nonviolent_fit) = (violent_fit?, nonviolent_fit?);
    let out = rows
        .iter()
        .enumerate()
        .map(|(k, &i)| ExcessCrime {
            unit_id: metrics[i].unit_id.clone(),
            excess_violent: violent_fit.residuals[k],
            excess_nonviolent: nonviolent_fit.residuals[k],
            spec,
        })
        .collect();
    Ok(ExcessCrimeResult { spec, rows: out, violent_fit, nonviolent_fit, excluded })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Predictor {
    PopCount,
    PopDensity,
    Income,
    Poverty,
    VacantProp,
    MixedUseProp,
    ComresProp,
}

impl Predictor {
    pub const ALL: [Predictor; 7] = [
        Predictor::PopCount,
        Predictor::PopDensity,
        Predictor::Income,
        Predictor::Poverty,
        Predictor::VacantProp,
        Predictor::MixedUseProp,
        Predictor::ComresProp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predictor::PopCount => "pop_count",
            Predictor::PopDensity => "pop_density",
            Predictor::Income => "per_capita_income",
            Predictor::Poverty => "poverty",
            Predictor::VacantProp => "vacant_prop",
            Predictor::MixedUseProp => "mixeduse_prop",
            Predictor::ComresProp => "comres_prop",
        }
    }

    fn value(self, m: &UnitMetrics) -> Option<f64> {
        match self {
            Predictor::PopCount => Some(m.population as f64),
            Predictor::PopDensity => m.population_density,
            Predictor::Income => m.per_capita_income,
            Predictor::Poverty => m.poverty,
            Predictor::VacantProp => m.vacant_prop,
            Predictor::MixedUseProp => m.mixeduse_prop,
            Predictor::ComresProp => m.comres_prop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Violent,
    NonViolent,
    ExcessViolent,
    ExcessNonViolent,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [Outcome::Violent, Outcome::NonViolent, Outcome::ExcessViolent, Outcome::ExcessNonViolent];

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Violent => "violent",
            Outcome::NonViolent => "non_violent",
            Outcome::ExcessViolent => "excess_violent",
            Outcome::ExcessNonViolent => "excess_non_violent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationRow {
    pub predictor: Predictor,
    pub outcome: Outcome,
    pub r: Option<f64>,
    pub t: Option<f64>,
    pub n: usize,
    /// Why r and t are missing or unreliable.
    pub flag: Option<String>,
}

pub const MIN_ASSOCIATION_N: usize = 10;

/// Robust simple regressions of each outcome on each predictor over the
/// included block groups. Excess outcomes need `excess`.
pub fn association_report(
    metrics: &[UnitMetrics],
    counts: &[CrimeCounts],
    excess: Option<&ExcessCrimeResult>,
    cfg: &HuberConfig,
) -> Vec<AssociationRow> {
    assert_eq!(metrics.len(), counts.len());
    let by_id: HashMap<&str, &ExcessCrime> =
        excess.map(|e| e.rows.iter().map(|r| (r.unit_id.as_str(), r)).collect()).unwrap_or_default();
    let outcomes: Vec<Outcome> =
        Outcome::ALL.into_iter().filter(|o| excess.is_some() || matches!(o, Outcome::Violent | Outcome::NonViolent)).collect();
    let cells: Vec<(Predictor, Outcome)> =
        Predictor::ALL.iter().flat_map(|&p| outcomes.iter().map(move |&o| (p, o))).collect();
    cells
        .par_iter()
        .map(|&(predictor, outcome)| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (m, c) in metrics.iter().zip(counts) {
                if !m.included || m.level != UnitLevel::BlockGroup {
                    continue;
                }
                let y = match outcome {
                    Outcome::Violent => Some(f64::from(c.violent)),
                    Outcome::NonViolent => Some(f64::from(c.non_violent)),
                    Outcome::ExcessViolent => by_id.get(m.unit_id.as_str()).map(|e| e.excess_violent),
                    Outcome::ExcessNonViolent => by_id.get(m.unit_id.as_str()).map(|e| e.excess_nonviolent),
                };
                if let (Some(x), Some(y)) = (predictor.value(m), y) {
                    xs.push(x);
                    ys.push(y);
                }
            }
            let n = xs.len();
            let mut row = AssociationRow { predictor, outcome, r: None, t: None, n, flag: None };
            if n < MIN_ASSOCIATION_N {
                row.flag = Some("insufficient_n".into());
                return row;
            }
            let design = Design::with_intercept(n, vec![(predictor.name().to_string(), xs)]);
            match huber_fit(&design, &ys, cfg) {
                Ok(fit) => {
                    row.r = Some(fit.r);
                    row.t = Some(fit.slope_t);
                    if !fit.converged {
                        row.flag = Some("not_converged".into());
                    }
                }
                Err(e) => row.flag = Some(format!("degenerate: {e}")),
            }
            row
        })
        .collect()
}

pub fn write_excess_csv<W: Write>(out: W, rows: &[ExcessCrime]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["unit_id", "spec", "excess_violent", "excess_nonviolent"])?;
    for r in rows {
        w.write_record([r.unit_id.clone(), r.spec.tag().into(), r.excess_violent.to_string(), r.excess_nonviolent.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_association_csv<W: Write>(out: W, rows: &[AssociationRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["predictor", "outcome", "r", "t", "n", "flag"])?;
    for r in rows {
        w.write_record([
            r.predictor.name().to_string(),
            r.outcome.name().to_string(),
            opt(r.r),
            opt(r.t),
            r.n.to_string(),
            r.flag.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::UnitLevel;
    use crate::synth::SplitMix64;

    fn metric(id: usize, pop: u64) -> UnitMetrics {
        UnitMetrics {
            unit_id: format!("u{id:04}"),
            level: UnitLevel::BlockGroup,
            included: true,
            population: pop,
            area_m2: 90_000.0,
            population_density: Some(pop as f64 / 0.09),
            per_capita_income: None,
            poverty: None,
            vacant_prop: None,
            comres_prop: None,
            mixeduse_prop: None,
        }
    }

    #[test]
    fn identical_units_have_zero_residuals() {
        let ms: Vec<UnitMetrics> = (0..20).map(|i| metric(i, 800)).collect();
        let cs = vec![CrimeCounts { violent: 7, non_violent: 12 }; 20];
        let res = excess_crime(&ms, &cs, ModelSpec::Pop, &HuberConfig::default()).unwrap();
        assert_eq!(res.rows.len(), 20);
        assert!(res.rows.iter().all(|r| r.excess_violent.abs() < 1e-9 && r.excess_nonviolent.abs() < 1e-9));
        assert_eq!(res.violent_fit.coefficient("population"), None);
        let mut varied = ms.clone();
        varied[0].population = 801;
        let res = excess_crime(&varied, &cs, ModelSpec::Pop, &HuberConfig::default()).unwrap();
        assert!(res.rows.iter().all(|r| r.excess_violent.abs() < 1e-9 && r.excess_nonviolent.abs() < 1e-9));
    }

    #[test]
    fn planted_extra_crimes_recovered() {
        let mut rng = SplitMix64::new(21);
        let ms: Vec<UnitMetrics> = (0..300).map(|i| metric(i, 400 + rng.below(2000))).collect();
        let mut cs: Vec<CrimeCounts> = ms
            .iter()
            .map(|m| CrimeCounts {
                violent: (0.1 * m.population as f64 + 2.0 * rng.normal()).round().max(0.0) as u32,
                non_violent: (0.2 * m.population as f64 + 3.0 * rng.normal()).round().max(0.0) as u32,
            })
            .collect();
        cs[17].violent += 50;
        let mut excluded = ms.clone();
        excluded[3].included = false;
        let res = excess_crime(&excluded, &cs, ModelSpec::Pop, &HuberConfig::default()).unwrap();
        assert_eq!(res.rows.len(), 299);
        assert!(res.rows.iter().all(|r| r.unit_id != "u0003"));
        let r17 = res.rows.iter().find(|r| r.unit_id == "u0017").unwrap();
        assert!((r17.excess_violent - 50.0).abs() < 8.0, "{}", r17.excess_violent);
        assert!((res.violent_fit.coefficient("population").unwrap() - 0.1).abs() < 0.01);
    }

    #[test]
    fn association_flags_small_n_and_exact_lines() {
        let ms: Vec<UnitMetrics> = (0..30).map(|i| metric(i, 100 + 10 * i as u64)).collect();
        let cs: Vec<CrimeCounts> =
            ms.iter().map(|m| CrimeCounts { violent: (m.population / 10) as u32, non_violent: 500 - (m.population / 10) as u32 }).collect();
        let rows = association_report(&ms, &cs, None, &HuberConfig::default());
        assert_eq!(rows.len(), 14);
        let get = |p, o| rows.iter().find(|r| r.predictor == p && r.outcome == o).unwrap();
        assert!((get(Predictor::PopCount, Outcome::Violent).r.unwrap() - 1.0).abs() < 1e-12);
        assert!((get(Predictor::PopCount, Outcome::NonViolent).r.unwrap() + 1.0).abs() < 1e-12);
        let income = get(Predictor::Income, Outcome::Violent);
        assert_eq!(income.n, 0);
        assert_eq!(income.flag.as_deref(), Some("insufficient_n"));
        let mut buf = Vec::new();
        write_association_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("predictor,outcome,r,t,n,flag\npop_count,violent,1,"));
    }

    #[test]
    fn independent_noise_uncorrelated() {
        let mut rng = SplitMix64::new(99);
        let ms: Vec<UnitMetrics> = (0..1000)
            .map(|i| {
                let mut m = metric(i, 400 + rng.below(1000));
                m.poverty = Some(rng.uniform());
                m
            })
            .collect();
        let cs: Vec<CrimeCounts> =
            (0..1000).map(|_| CrimeCounts { violent: rng.poisson(8.0) as u32, non_violent: rng.poisson(20.0) as u32 }).collect();
        for row in association_report(&ms, &cs, None, &HuberConfig::default()) {
            if row.predictor == Predictor::Poverty {
                assert!(row.r.unwrap().abs() < 0.1, "{row:?}");
            }
        }
    }
}
