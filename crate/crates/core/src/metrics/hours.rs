use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ingest::{Business, BusinessType, WeeklySchedule, MINUTES_PER_DAY};

/// A named subset of the week. A window without a schedule is the whole week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub name: String,
    #[serde(default)]
    pub schedule: Option<WeeklySchedule>,
}

impl TimeWindow {
    pub fn whole_week() -> Self {
        TimeWindow { name: "whole_week".into(), schedule: None }
    }

    /// Monday through Friday, 18:00 to midnight.
    pub fn weekday_evenings() -> Self {
        let spans = (0..5).map(|d| (d * MINUTES_PER_DAY + 18 * 60, (d + 1) * MINUTES_PER_DAY));
        TimeWindow { name: "weekday_evenings".into(), schedule: Some(WeeklySchedule::from_spans(spans)) }
    }

    /// Saturday and Sunday, midnight to 04:00.
    pub fn weekend_nights() -> Self {
        let spans = (5..7).map(|d| (d * MINUTES_PER_DAY, d * MINUTES_PER_DAY + 4 * 60));
        TimeWindow { name: "weekend_nights".into(), schedule: Some(WeeklySchedule::from_spans(spans)) }
    }

    pub fn defaults() -> Vec<TimeWindow> {
        vec![Self::whole_week(), Self::weekday_evenings(), Self::weekend_nights()]
    }

    pub fn contains_minute(&self, minute: u32) -> bool {
        self.schedule.as_ref().map_or(true, |s| s.contains_minute(minute))
    }

    pub fn total_hours(&self) -> f64 {
        self.schedule.as_ref().map_or(168.0, |s| s.total_hours())
    }
}

/// Open hours of `schedule` that fall inside `window`.
pub fn hours_in_window(schedule: &WeeklySchedule, window: &TimeWindow) -> f64 {
    match &window.schedule {
        None => schedule.total_hours(),
        Some(w) => schedule.overlap_minutes(w) as f64 / 60.0,
    }
}

/// Mean in-window open hours per business type, over businesses with a
/// known schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consensus {
    pub window: TimeWindow,
    pub hours: [Option<f64>; 10],
    pub counts: [usize; 10],
}

impl Consensus {
    pub fn get(&self, ty: BusinessType) -> Option<f64> {
        self.hours[ty.index()]
    }
}

/// One row per window and business type.
pub fn write_consensus_csv<W: Write>(out: W, rows: &[Consensus]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window", "business_type", "businesses", "consensus_hours"])?;
    for c in rows {
        for ty in BusinessType::ALL {
            w.write_record([
                c.window.name.clone(),
                ty.name().to_string(),
                c.counts[ty.index()].to_string(),
                crate::table::opt(c.get(ty)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn consensus_hours(businesses: &[Business], window: &TimeWindow) -> Consensus {
    let mut sums = [0.0; 10];
    let mut counts = [0usize; 10];
    for b in businesses {
        let Some(s) = &b.schedule else { continue };
        let h = hours_in_window(s, window);
        for ty in &b.types {
            sums[ty.index()] += h;
            counts[ty.index()] += 1;
        }
    }
    let mut hours = [None; 10];
    for k in 0..10 {
        if counts[k] > 0 {
            hours[k] = Some(sums[k] / counts[k] as f64);
        }
    }
    Consensus { window: window.clone(), hours, counts }
}

/// In-window hours above the type's consensus. `None` without a schedule
/// or when the business lacks the type.
pub fn excess_hours(b: &Business, ty: BusinessType, consensus: &Consensus) -> Option<f64> {
    if !b.has_type(ty) {
        return None;
    }
    let s = b.schedule.as_ref()?;
    Some(hours_in_window(s, &consensus.window) - consensus.get(ty)?)
}
