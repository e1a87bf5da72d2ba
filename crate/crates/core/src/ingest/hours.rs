use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MINUTES_PER_DAY: u32 = 1_440;
pub const MINUTES_PER_WEEK: u32 = 7 * MINUTES_PER_DAY;

/// Raw opening hours keyed by day name ("mon".."sun"), each a list of
/// `HH:MM-HH:MM` spans or the word `closed`.
pub type DayHours = BTreeMap<String, Vec<String>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HoursError {
    #[error("unknown day {0:?}")]
    UnknownDay(String),
    #[error("unparseable hours token {0:?}")]
    BadToken(String),
}

/// Open intervals on the week, in minutes from Monday 00:00. Intervals are
/// half-open, sorted, disjoint and non-adjacent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<(u32, u32)>", into = "Vec<(u32, u32)>")]
pub struct WeeklySchedule {
    intervals: Vec<(u32, u32)>,
}

impl From<Vec<(u32, u32)>> for WeeklySchedule {
    fn from(v: Vec<(u32, u32)>) -> Self {
        WeeklySchedule::from_spans(v)
    }
}

impl From<WeeklySchedule> for Vec<(u32, u32)> {
    fn from(s: WeeklySchedule) -> Self {
        s.intervals
    }
}

impl WeeklySchedule {
    pub fn empty() -> Self {
        WeeklySchedule::default()
    }

    pub fn full_week() -> Self {
        WeeklySchedule { intervals: vec![(0, MINUTES_PER_WEEK)] }
    }

    /// Normalizes arbitrary `(start, end)` spans. Spans longer than a week are
    /// clamped to a week and anything past the end of the week wraps to
    /// Monday. Empty spans are
    /// dropped and overlapping or touching spans are merged.
    pub fn from_spans(spans: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut pieces = Vec::new();
        for (start, end) in spans {
            let len = end.saturating_sub(start).min(MINUTES_PER_WEEK);
            let start = start % MINUTES_PER_WEEK;
            if len == 0 {
                continue;
            }
            let stop = start + len;
            if stop <= MINUTES_PER_WEEK {
                pieces.push((start, stop));
            } else {
                pieces.push((start, MINUTES_PER_WEEK));
                pieces.push((0, stop - MINUTES_PER_WEEK));
            }
        }
        pieces.sort_unstable();
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(pieces.len());
        for (s, e) in pieces {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        WeeklySchedule { intervals: merged }
    }

    pub fn intervals(&self) -> &[(u32, u32)] {
        &self.intervals
    }

    pub fn total_minutes(&self) -> u32 {
        self.intervals.iter().map(|(s, e)| e - s).sum()
    }

    pub fn total_hours(&self) -> f64 {
        self.total_minutes() as f64 / 60.0
    }

    pub fn contains_minute(&self, minute: u32) -> bool {
        self.intervals.iter().any(|&(s, e)| minute >= s && minute < e)
    }

    /// Minutes open during `other`.
    pub fn overlap_minutes(&self, other: &WeeklySchedule) -> u32 {
        let (mut i, mut j, mut total) = (0, 0, 0);
        while i < self.intervals.len() && j < other.intervals.len() {
            let (a0, a1) = self.intervals[i];
            let (b0, b1) = other.intervals[j];
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if hi > lo {
                total += hi - lo;
            }
            if a1 < b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        total
    }
}

fn day_index(key: &str) -> Option<u32> {
    let k = key.trim().to_ascii_lowercase();
    let idx = match k.as_str() {
        "mon" | "monday" => 0,
        "tue" | "tues" | "tuesday" => 1,
        "wed" | "wednesday" => 2,
        "thu" | "thur" | "thurs" | "thursday" => 3,
        "fri" | "friday" => 4,
        "sat" | "saturday" => 5,
        "sun" | "sunday" => 6,
        _ => return None,
    };
    Some(idx)
}

fn parse_clock(token: &str) -> Option<u32> {
    let (h, m) = token.trim().split_once(':')?;
    if h.is_empty() || h.len() > 2 || m.len() != 2 {
        return None;
    }
    let h: u32 = h.parse().ok()?;
    let m: u32 = m.parse().ok()?;
    if m >= 60 || h > 24 || (h == 24 && m != 0) {
        return None;
    }
    Some(h * 60 + m)
}

/// Parses per-day hour strings into a weekly schedule. A span whose end is
/// earlier than its start runs past midnight into the next day (Sunday wraps
/// to Monday). A span with equal start and end is open for 24 hours. Days
/// that are absent or `closed` contribute nothing.
pub fn parse_hours(hours: &DayHours) -> Result<WeeklySchedule, HoursError> {
    let mut spans = Vec::new();
    for (day, entries) in hours {
        let d = day_index(day).ok_or_else(|| HoursError::UnknownDay(day.clone()))?;
        let base = d * MINUTES_PER_DAY;
        for entry in entries {
            let entry = entry.trim();
            if entry.is_empty() || entry.eq_ignore_ascii_case("closed") {
                continue;
            }
            let (open, close) = entry
                .split_once('-')
                .ok_or_else(|| HoursError::BadToken(entry.to_string()))?;
            let open = parse_clock(open).ok_or_else(|| HoursError::BadToken(entry.to_string()))?;
            let close = parse_clock(close).ok_or_else(|| HoursError::BadToken(entry.to_string()))?;
            if open == MINUTES_PER_DAY {
                return Err(HoursError::BadToken(entry.to_string()));
            }
            let len = if close > open {
                close - open
            } else {
                close + MINUTES_PER_DAY - open
            };
            spans.push((base + open, base + open + len));
        }
    }
    Ok(WeeklySchedule::from_spans(spans))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hours(pairs: &[(&str, &[&str])]) -> DayHours {
        pairs
            .iter()
            .map(|(d, v)| (d.to_string(), v.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    #[test]
    fn monday_nine_to_five() {
        let s = parse_hours(&hours(&[("mon", &["09:00-17:00"])])).unwrap();
        assert_eq!(s.intervals(), &[(540, 1020)]);
        assert_eq!(s.total_minutes(), 480);
    }

    #[test]
    fn saturday_overnight() {
        let s = parse_hours(&hours(&[("sat", &["22:00-02:00"])])).unwrap();
        // Saturday 22:00 = 5*1440 + 1320; Sunday 02:00 = 6*1440 + 120.
        assert_eq!(s.intervals(), &[(8520, 8760)]);
        assert_eq!(s.total_minutes(), 240);
    }

    #[test]
    fn sunday_overnight_wraps_to_monday() {
        let s = parse_hours(&hours(&[("sun", &["22:00-02:00"])])).unwrap();
        assert_eq!(s.intervals(), &[(0, 120), (9960, 10080)]);
        assert_eq!(s.total_minutes(), 240);
    }

    #[test]
    fn all_closed() {
        let days = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];
        let h: DayHours = days.iter().map(|d| (d.to_string(), vec!["closed".to_string()])).collect();
        let s = parse_hours(&h).unwrap();
        assert!(s.intervals().is_empty());
        assert_eq!(s.total_minutes(), 0);
    }

    #[test]
    fn overlapping_spans_merge() {
        let s = parse_hours(&hours(&[("mon", &["09:00-12:00", "11:00-14:00", "14:00-15:00"])])).unwrap();
        assert_eq!(s.intervals(), &[(540, 900)]);
    }

    #[test]
    fn full_day_forms() {
        let a = parse_hours(&hours(&[("tue", &["00:00-24:00"])])).unwrap();
        let b = parse_hours(&hours(&[("tue", &["00:00-00:00"])])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total_minutes(), 1440);
    }

    #[test]
    fn bad_tokens() {
        assert!(matches!(parse_hours(&hours(&[("mon", &["9am-5pm"])])), Err(HoursError::BadToken(_))));
        assert!(matches!(parse_hours(&hours(&[("mon", &["25:00-26:00"])])), Err(HoursError::BadToken(_))));
        assert!(matches!(parse_hours(&hours(&[("funday", &["09:00-10:00"])])), Err(HoursError::UnknownDay(_))));
    }

    #[test]
    fn overlap_with_window() {
        let s = parse_hours(&hours(&[("mon", &["17:00-23:00"])])).unwrap();
        let evenings = WeeklySchedule::from_spans((0..5).map(|d| (d * 1440 + 1080, d * 1440 + 1440)));
        assert_eq!(s.overlap_minutes(&evenings), 300);
    }

    proptest! {
        #[test]
        fn spans_normalize_to_disjoint_sorted(spans in proptest::collection::vec((0u32..10080, 0u32..3000), 0..30)) {
            let spans: Vec<(u32, u32)> = spans.into_iter().map(|(s, len)| (s, s + len)).collect();
            let sched = WeeklySchedule::from_spans(spans.clone());
            let iv = sched.intervals();
            for w in iv.windows(2) {
                prop_assert!(w[0].1 < w[1].0);
            }
            for &(s, e) in iv {
                prop_assert!(s < e && e <= MINUTES_PER_WEEK);
            }
            prop_assert!(sched.total_minutes() <= MINUTES_PER_WEEK);
            // Minute-level oracle.
            let mut open = vec![false; MINUTES_PER_WEEK as usize];
            for (s, e) in spans {
                for m in s..e {
                    open[(m % MINUTES_PER_WEEK) as usize] = true;
                }
            }
            for (m, &o) in open.iter().enumerate() {
                prop_assert_eq!(sched.contains_minute(m as u32), o);
            }
        }

        #[test]
        fn overlap_matches_minute_count(a in proptest::collection::vec((0u32..10080, 1u32..600), 0..10),
                                        b in proptest::collection::vec((0u32..10080, 1u32..600), 0..10)) {
            let sa = WeeklySchedule::from_spans(a.into_iter().map(|(s, l)| (s, s + l)));
            let sb = WeeklySchedule::from_spans(b.into_iter().map(|(s, l)| (s, s + l)));
            let brute = (0..MINUTES_PER_WEEK).filter(|&m| sa.contains_minute(m) && sb.contains_minute(m)).count() as u32;
            prop_assert_eq!(sa.overlap_minutes(&sb), brute);
        }
    }
}
