//! Stations, forecast cases and rolling training windows.

mod io;
mod synthetic;

use std::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ensemble_stats, EnsembleLayout};

pub use io::{load_csv, read_cases, read_stations, write_cases, write_csv, write_stations};
pub use synthetic::{generate_synthetic, StationType, SynthConfig};

/// An observation site with planar coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRecord {
    pub station_id: String,
    pub x: f64,
    pub y: f64,
}

/// One ensemble forecast and its verifying observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastCase {
    /// Index into [`Dataset::stations`].
    pub station: usize,
    pub date: NaiveDate,
    pub members: Vec<f64>,
    pub observation: f64,
}

impl ForecastCase {
    pub fn ensemble_mean(&self) -> f64 {
        self.members.iter().sum::<f64>() / self.members.len() as f64
    }

    /// Ensemble mean and standard deviation (divisor `M − 1`).
    pub fn mean_and_sd(&self) -> (f64, f64) {
        match ensemble_stats(&self.members) {
            Ok((m, v)) => (m, v.sqrt()),
            Err(_) => (self.ensemble_mean(), 0.0),
        }
    }

    /// Forecast error of the ensemble mean, `f̄ − x`.
    pub fn error(&self) -> f64 {
        self.ensemble_mean() - self.observation
    }
}

/// Immutable, validated collection of forecast cases.
///
/// Stations are sorted by id, so station index order equals id order. Cases
/// are sorted by (station, date); each station's cases form a contiguous run.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    stations: Vec<StationRecord>,
    cases: Vec<ForecastCase>,
    by_station: Vec<Range<usize>>,
    layout: EnsembleLayout,
    dates: Vec<NaiveDate>,
}

/// Case content keyed by station id, used to assemble a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub station_id: String,
    pub date: NaiveDate,
    pub members: Vec<f64>,
    pub observation: f64,
}

impl Dataset {
    pub fn new(mut stations: Vec<StationRecord>, records: Vec<CaseRecord>, layout: EnsembleLayout) -> Result<Self> {
        let mut problems = Vec::new();
        stations.sort_by(|a, b| a.station_id.cmp(&b.station_id));
        for w in stations.windows(2) {
            if w[0].station_id == w[1].station_id {
                problems.push(format!("duplicate station '{}'", w[0].station_id));
            }
        }
        for s in &stations {
            if !(s.x.is_finite() && s.y.is_finite()) {
                problems.push(format!("station '{}' has non-finite coordinates", s.station_id));
            }
        }
        let m = layout.n_members();
        let mut cases = Vec::with_capacity(records.len());
        for (k, r) in records.into_iter().enumerate() {
            let Ok(station) = stations.binary_search_by(|s| s.station_id.as_str().cmp(&r.station_id)) else {
                problems.push(format!("case {k}: unknown station '{}'", r.station_id));
                continue;
            };
            if r.members.len() != m {
                problems.push(format!("case {k}: {} members, layout has {m}", r.members.len()));
                continue;
            }
            if !(r.observation.is_finite() && r.observation >= 0.0) {
                problems.push(format!("case {k}: invalid observation {}", r.observation));
                continue;
            }
            if r.members.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
                problems.push(format!("case {k}: negative or non-finite member forecast"));
                continue;
            }
            cases.push(ForecastCase {
                station,
                date: r.date,
                members: r.members,
                observation: r.observation,
            });
        }
        cases.sort_by_key(|a| (a.station, a.date));
        for w in cases.windows(2) {
            if w[0].station == w[1].station && w[0].date == w[1].date {
                problems.push(format!(
                    "duplicate case for station '{}' on {}",
                    stations[w[0].station].station_id, w[0].date
                ));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Ingestion {
                path: "<dataset>".into(),
                problems,
            });
        }
        Ok(Self::assemble(stations, cases, layout))
    }

    fn assemble(stations: Vec<StationRecord>, cases: Vec<ForecastCase>, layout: EnsembleLayout) -> Self {
        let mut by_station = vec![0..0; stations.len()];
        let mut start = 0;
        while start < cases.len() {
            let s = cases[start].station;
            let end = start + cases[start..].iter().take_while(|c| c.station == s).count();
            by_station[s] = start..end;
            start = end;
        }
        let mut dates: Vec<NaiveDate> = cases.iter().map(|c| c.date).collect();
        dates.sort();
        dates.dedup();
        Dataset {
            stations,
            cases,
            by_station,
            layout,
            dates,
        }
    }

    pub fn stations(&self) -> &[StationRecord] {
        &self.stations
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn station_index(&self, id: &str) -> Option<usize> {
        self.stations.binary_search_by(|s| s.station_id.as_str().cmp(id)).ok()
    }

    pub fn station_id(&self, index: usize) -> &str {
        &self.stations[index].station_id
    }

    pub fn layout(&self) -> &EnsembleLayout {
        &self.layout
    }

    pub fn n_members(&self) -> usize {
        self.layout.n_members()
    }

    /// All cases, sorted by (station, date).
    pub fn cases(&self) -> &[ForecastCase] {
        &self.cases
    }

    /// Cases of one station in date order.
    pub fn station_cases(&self, station: usize) -> &[ForecastCase] {
        &self.cases[self.by_station[station].clone()]
    }

    /// Offset of a station's first case in [`Dataset::cases`].
    pub fn station_offset(&self, station: usize) -> usize {
        self.by_station[station].start
    }

    pub fn case(&self, station: usize, date: NaiveDate) -> Option<&ForecastCase> {
        let run = self.station_cases(station);
        run.binary_search_by(|c| c.date.cmp(&date)).ok().map(|i| &run[i])
    }

    /// Distinct dates carrying at least one case, ascending.
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn date_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        Some((*self.dates.first()?, *self.dates.last()?))
    }

    /// Cases of a station dated inside `[from, to]`.
    pub fn station_cases_between(&self, station: usize, from: NaiveDate, to: NaiveDate) -> &[ForecastCase] {
        let run = self.station_cases(station);
        let lo = run.partition_point(|c| c.date < from);
        let hi = run.partition_point(|c| c.date <= to);
        &run[lo..hi.max(lo)]
    }

    /// Case-index range of the station's rolling window before `target`.
    pub fn window_range(&self, station: usize, target: NaiveDate, spec: &WindowSpec) -> Range<usize> {
        let range = self.by_station[station].clone();
        let run = &self.cases[range.clone()];
        let end = run.partition_point(|c| c.date < target);
        let mut start = end.saturating_sub(spec.length);
        if let Some(max_age) = spec.max_age_days {
            let oldest = target - chrono::Days::new(u64::from(max_age));
            start = start.max(run.partition_point(|c| c.date < oldest));
        }
        range.start + start..range.start + end
    }

    /// The station's rolling-window cases before `target`.
    pub fn window_cases(&self, station: usize, target: NaiveDate, spec: &WindowSpec) -> &[ForecastCase] {
        &self.cases[self.window_range(station, target, spec)]
    }
}

/// Length of a rolling training window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Number of most recent available forecast cases (dates) to use.
    pub length: usize,
    /// Optionally drop dates older than this many days before the target.
    pub max_age_days: Option<u32>,
}

impl WindowSpec {
    pub fn new(length: usize) -> Self {
        WindowSpec {
            length,
            max_age_days: None,
        }
    }

    pub fn with_max_age(mut self, days: u32) -> Self {
        self.max_age_days = Some(days);
        self
    }
}

/// Which dates a rolling window is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowScope {
    /// Dates on which the station has a case.
    Station(usize),
    /// Dates on which any station has a case.
    All,
}

/// The most recent available dates strictly before a target date.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RollingWindow {
    pub target_date: NaiveDate,
    pub length: usize,
    pub dates: Vec<NaiveDate>,
}

impl RollingWindow {
    /// True when fewer than `length` dates were available.
    pub fn is_short(&self) -> bool {
        self.dates.len() < self.length
    }
}

/// The `n` most recent available dates before `target`, skipping gaps.
pub fn rolling_window(ds: &Dataset, scope: WindowScope, target: NaiveDate, spec: &WindowSpec) -> Result<RollingWindow> {
    if spec.length == 0 {
        return Err(Error::domain("window length must be at least 1"));
    }
    let dates: Vec<NaiveDate> = match scope {
        WindowScope::Station(s) => {
            if s >= ds.n_stations() {
                return Err(Error::domain(format!("station index {s} out of range")));
            }
            ds.window_cases(s, target, spec).iter().map(|c| c.date).collect()
        }
        WindowScope::All => {
            let end = ds.dates.partition_point(|d| *d < target);
            let mut start = end.saturating_sub(spec.length);
            if let Some(max_age) = spec.max_age_days {
                let oldest = target - chrono::Days::new(u64::from(max_age));
                start = start.max(ds.dates.partition_point(|d| *d < oldest));
            }
            ds.dates[start..end].to_vec()
        }
    };
    if dates.is_empty() {
        return Err(Error::EmptyWindow(format!("no data before {target}")));
    }
    Ok(RollingWindow {
        target_date: target,
        length: spec.length,
        dates,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn day(n: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2014, 1, 1).unwrap() + chrono::Days::new(n)
    }

    pub(crate) fn toy(stations: usize, days: &[u64], members: usize) -> Dataset {
        let st: Vec<StationRecord> = (0..stations)
            .map(|i| StationRecord {
                station_id: format!("S{i:02}"),
                x: i as f64,
                y: 0.0,
            })
            .collect();
        let mut recs = Vec::new();
        for i in 0..stations {
            for &d in days {
                let base = 3.0 + i as f64 + (d as f64 * 0.7).sin();
                recs.push(CaseRecord {
                    station_id: format!("S{i:02}"),
                    date: day(d),
                    members: (0..members).map(|k| base + 0.1 * k as f64).collect(),
                    observation: base + 0.5,
                });
            }
        }
        Dataset::new(st, recs, EnsembleLayout::exchangeable(members)).unwrap()
    }

    #[test]
    fn window_daily() {
        let days: Vec<u64> = (0..100).collect();
        let ds = toy(1, &days, 2);
        let w = rolling_window(&ds, WindowScope::Station(0), day(100), &WindowSpec::new(80)).unwrap();
        assert_eq!(w.dates.first(), Some(&day(20)));
        assert_eq!(w.dates.last(), Some(&day(99)));
        assert!(!w.is_short());
    }

    #[test]
    fn window_short_history() {
        let days: Vec<u64> = (0..10).collect();
        let ds = toy(1, &days, 2);
        let w = rolling_window(&ds, WindowScope::Station(0), day(10), &WindowSpec::new(80)).unwrap();
        assert_eq!(w.dates.len(), 10);
        assert!(w.is_short());
        assert!(matches!(
            rolling_window(&ds, WindowScope::Station(0), day(0), &WindowSpec::new(80)),
            Err(Error::EmptyWindow(_))
        ));
    }

    #[test]
    fn window_skips_gaps() {
        let ds = toy(2, &[1, 2, 5, 6], 2);
        for scope in [WindowScope::Station(1), WindowScope::All] {
            let w = rolling_window(&ds, scope, day(7), &WindowSpec::new(3)).unwrap();
            assert_eq!(w.dates, vec![day(2), day(5), day(6)]);
        }
        // calendar cut-off drops the stale date
        let w = rolling_window(&ds, WindowScope::Station(0), day(7), &WindowSpec::new(3).with_max_age(3)).unwrap();
        assert_eq!(w.dates, vec![day(5), day(6)]);
    }

    #[test]
    fn window_never_reaches_target() {
        let ds = toy(3, &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9], 2);
        for t in 1..12 {
            for n in 1..12 {
                for s in 0..3 {
                    let w = rolling_window(&ds, WindowScope::Station(s), day(t), &WindowSpec::new(n)).unwrap();
                    assert!(w.dates.iter().all(|d| *d < day(t)));
                    assert!(w.dates.len() <= n);
                }
            }
        }
    }

    #[test]
    fn rejects_invalid_cases() {
        let st = vec![StationRecord {
            station_id: "A".into(),
            x: 0.0,
            y: 0.0,
        }];
        let rec = |obs: f64, d: u64| CaseRecord {
            station_id: "A".into(),
            date: day(d),
            members: vec![1.0, 2.0],
            observation: obs,
        };
        let err = Dataset::new(st.clone(), vec![rec(-1.0, 0)], EnsembleLayout::exchangeable(2)).unwrap_err();
        assert!(matches!(err, Error::Ingestion { .. }));
        let err = Dataset::new(st.clone(), vec![rec(1.0, 0), rec(2.0, 0)], EnsembleLayout::exchangeable(2)).unwrap_err();
        assert!(err.to_string().contains("duplicate case"));
        let unknown = CaseRecord {
            station_id: "B".into(),
            ..rec(1.0, 1)
        };
        assert!(Dataset::new(st, vec![unknown], EnsembleLayout::exchangeable(2)).is_err());
    }

    #[test]
    fn lookup_helpers() {
        let ds = toy(3, &[0, 2, 4], 3);
        assert_eq!(ds.station_index("S01"), Some(1));
        assert_eq!(ds.case(2, day(2)).unwrap().station, 2);
        assert!(ds.case(2, day(3)).is_none());
        assert_eq!(ds.station_cases_between(0, day(1), day(4)).len(), 2);
        assert_eq!(ds.dates().len(), 3);
    }
}
