//! Station distance functions and nearest-station selection.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ForecastCase};
use crate::error::{Error, Result};

/// Right-continuous empirical CDF, `F̂(x) = #{v ≤ x} / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut sorted: Vec<f64> = values.into_iter().collect();
        if sorted.is_empty() {
            return Err(Error::domain("empirical CDF of an empty sample"));
        }
        if sorted.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("empirical CDF of non-finite values"));
        }
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= x) as f64 / self.sorted.len() as f64
    }

    /// Smallest sample value `v` with `F̂(v) ≥ j / (levels + 1)`, for `1 ≤ j ≤ levels`.
    ///
    /// Computed in integer arithmetic so that level boundaries are exact.
    pub fn quantile_at_level(&self, j: usize, levels: usize) -> f64 {
        debug_assert!(j >= 1 && j <= levels);
        let n = self.sorted.len();
        let k = (j * n).div_ceil(levels + 1);
        self.sorted[k.max(1) - 1]
    }

    /// Quantiles at the equidistant levels `1/(N+1), …, N/(N+1)`.
    pub fn equidistant_quantiles(&self, levels: usize) -> Vec<f64> {
        (1..=levels).map(|j| self.quantile_at_level(j, levels)).collect()
    }
}

/// Empirical CDF of ensemble-mean forecast errors `f̄ − x` at a station over `dates`.
pub fn forecast_error_cdf(ds: &Dataset, station: usize, dates: &[NaiveDate]) -> Result<EmpiricalCdf> {
    let cases = cases_on(ds, station, dates);
    if cases.is_empty() {
        return Err(Error::domain(format!(
            "station '{}' has no cases on the reference dates",
            ds.station_id(station)
        )));
    }
    EmpiricalCdf::new(cases.iter().map(|c| c.error()))
}

fn cases_on<'a>(ds: &'a Dataset, station: usize, dates: &[NaiveDate]) -> Vec<&'a ForecastCase> {
    ds.station_cases(station)
        .iter()
        .filter(|c| dates.binary_search(&c.date).is_ok())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistanceKind {
    /// Euclidean distance of station coordinates.
    Location,
    /// Mean absolute difference of observation CDFs on `S`.
    Climatology,
    /// Mean absolute difference of forecast-error CDFs on `S′`.
    ForecastError,
    /// Sum of the climatology and forecast-error distances.
    Combined,
    /// Sum over common dates of the distance between (mean, sd) pairs.
    EnsembleStats,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 5] = [
        DistanceKind::Location,
        DistanceKind::Climatology,
        DistanceKind::ForecastError,
        DistanceKind::Combined,
        DistanceKind::EnsembleStats,
    ];

    pub fn needs_reference(self) -> bool {
        self != DistanceKind::Location
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = DistanceKind::ALL.iter().position(|k| k == self).unwrap_or(0) + 1;
        write!(f, "d{i}")
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "d1" | "d1_location" | "location" => DistanceKind::Location,
            "d2" | "d2_climatology" | "climatology" => DistanceKind::Climatology,
            "d3" | "d3_forecast_error" | "forecast_error" => DistanceKind::ForecastError,
            "d4" | "d4_combined" | "combined" => DistanceKind::Combined,
            "d5" | "d5_ensemble_stats" | "ensemble_stats" => DistanceKind::EnsembleStats,
            other => return Err(Error::Config(format!("unknown distance kind '{other}'"))),
        })
    }
}

/// Regular grid `start, start+step, …, end` (inclusive).
pub fn regular_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step).round() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSpec {
    pub kind: DistanceKind,
    /// Evaluation points for observation CDFs.
    pub grid_s: Vec<f64>,
    /// Evaluation points for forecast-error CDFs.
    pub grid_s_prime: Vec<f64>,
    /// Reference dates `T`, sorted and distinct.
    pub reference_dates: Vec<NaiveDate>,
}

impl DistanceSpec {
    /// Default grids `S = {0, 0.5, …, 15}` and `S′ = {−10, −9.5, …, 10}`.
    pub fn new(kind: DistanceKind) -> Self {
        DistanceSpec {
            kind,
            grid_s: regular_grid(0.0, 15.0, 0.5),
            grid_s_prime: regular_grid(-10.0, 10.0, 0.5),
            reference_dates: Vec::new(),
        }
    }

    pub fn with_reference_dates(mut self, mut dates: Vec<NaiveDate>) -> Self {
        dates.sort();
        dates.dedup();
        self.reference_dates = dates;
        self
    }

    /// Use every dataset date inside `[from, to]` as reference date.
    pub fn with_reference_period(self, ds: &Dataset, from: NaiveDate, to: NaiveDate) -> Self {
        let dates = ds.dates().iter().copied().filter(|d| *d >= from && *d <= to).collect();
        self.with_reference_dates(dates)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("S", &self.grid_s), ("S'", &self.grid_s_prime)] {
            if g.is_empty() || g.windows(2).any(|w| !(w[0] < w[1])) || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("grid {name} must be nonempty and strictly increasing")));
            }
        }
        if self.kind.needs_reference() && self.reference_dates.is_empty() {
            return Err(Error::domain(format!("distance {} needs reference dates", self.kind)));
        }
        Ok(())
    }
}

/// Per-station summaries over the reference dates.
struct Profile {
    xy: (f64, f64),
    obs_cdf: Vec<f64>,
    err_cdf: Vec<f64>,
    /// (date, mean, sd) in date order.
    stats: Vec<(NaiveDate, f64, f64)>,
}

fn profile(spec: &DistanceSpec, ds: &Dataset, station: usize) -> Result<Profile> {
    let st = &ds.stations()[station];
    let mut p = Profile {
        xy: (st.x, st.y),
        obs_cdf: Vec::new(),
        err_cdf: Vec::new(),
        stats: Vec::new(),
    };
    let cases = cases_on(ds, station, &spec.reference_dates);
    match spec.kind {
        DistanceKind::Location => {}
        DistanceKind::EnsembleStats => {
            p.stats = cases
                .iter()
                .map(|c| {
                    let (m, s) = c.mean_and_sd();
                    (c.date, m, s)
                })
                .collect();
        }
        _ => {
            if cases.is_empty() {
                return Err(Error::domain(format!(
                    "station '{}' has no cases on the reference dates",
                    st.station_id
                )));
            }
            let obs = EmpiricalCdf::new(cases.iter().map(|c| c.observation))?;
            let err = EmpiricalCdf::new(cases.iter().map(|c| c.error()))?;
            p.obs_cdf = spec.grid_s.iter().map(|&x| obs.eval(x)).collect();
            p.err_cdf = spec.grid_s_prime.iter().map(|&x| err.eval(x)).collect();
        }
    }
    Ok(p)
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn pair_distance(kind: DistanceKind, a: &Profile, b: &Profile) -> Result<f64> {
    let d2 = || mean_abs_diff(&a.obs_cdf, &b.obs_cdf);
    let d3 = || mean_abs_diff(&a.err_cdf, &b.err_cdf);
    Ok(match kind {
        DistanceKind::Location => (a.xy.0 - b.xy.0).hypot(a.xy.1 - b.xy.1),
        DistanceKind::Climatology => d2(),
        DistanceKind::ForecastError => d3(),
        DistanceKind::Combined => d2() + d3(),
        DistanceKind::EnsembleStats => {
            let (mut i, mut j, mut total, mut common) = (0, 0, 0.0, 0usize);
            while i < a.stats.len() && j < b.stats.len() {
                let (da, ma, sa) = a.stats[i];
                let (db, mb, sb) = b.stats[j];
                match da.cmp(&db) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        total += (ma - mb).hypot(sa - sb);
                        common += 1;
                        i += 1;
                        j += 1;
                    }
                }
            }
            if common == 0 {
                return Err(Error::domain("no common reference dates for ensemble-statistics distance"));
            }
            total
        }
    })
}

/// Distance between stations `i` and `j`.
pub fn distance(spec: &DistanceSpec, ds: &Dataset, i: usize, j: usize) -> Result<f64> {
    spec.validate()?;
    if i.max(j) >= ds.n_stations() {
        return Err(Error::domain("station index out of range"));
    }
    if i == j {
        return Ok(0.0);
    }
    pair_distance(spec.kind, &profile(spec, ds, i)?, &profile(spec, ds, j)?)
}

/// Symmetric station-by-station distance table with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    station_ids: Vec<String>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Build from a lower triangle: `rows[i]` holds `d(i, 0..i)`.
    pub fn from_lower_triangle(station_ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = station_ids.len();
        if rows.len() != n || rows.iter().enumerate().any(|(i, r)| r.len() != i) {
            return Err(Error::domain("lower triangle shape does not match station count"));
        }
        let mut values = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::domain(format!("invalid distance {v} between stations {i} and {j}")));
                }
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Ok(DistanceMatrix { station_ids, values })
    }

    pub fn len(&self) -> usize {
        self.station_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.station_ids.is_empty()
    }

    pub fn station_ids(&self) -> &[String] {
        &self.station_ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// Number of distinct off-diagonal pairs.
    pub fn n_pairs(&self) -> usize {
        let n = self.len();
        n * n.saturating_sub(1) / 2
    }

    /// Check the station order against a dataset.
    pub fn check_matches(&self, ds: &Dataset) -> Result<()> {
        let same = self.len() == ds.n_stations() && self.station_ids.iter().zip(ds.stations()).all(|(a, b)| *a == b.station_id);
        if same {
            Ok(())
        } else {
            Err(Error::Structural("distance matrix stations do not match the dataset".into()))
        }
    }

    /// CSV: header `station_id,<ids…>`, then row `i` holds `id_i, d(i,0), …, d(i,i−1)`.
    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
        let mut header = vec!["station_id".to_string()];
        header.extend(self.station_ids.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.station_ids[i].clone()];
            row.extend((0..i).map(|j| self.get(i, j).to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<distances>", e))?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let header = r.headers()?.clone();
        if header.get(0) != Some("station_id") {
            return Err(Error::domain("distance file must start with 'station_id'"));
        }
        let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::with_capacity(ids.len());
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.get(0) != ids.get(i).map(String::as_str) {
                return Err(Error::domain(format!("distance row {} has unexpected station id", i + 1)));
            }
            let vals = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| Error::domain(format!("bad distance value '{v}'"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(vals);
        }
        Self::from_lower_triangle(ids, &rows)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.write(std::fs::File::create(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::read(std::fs::File::open(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Fill the full matrix in parallel; the result does not depend on scheduling.
pub fn distance_matrix(spec: &DistanceSpec, ds: &Dataset) -> Result<DistanceMatrix> {
    spec.validate()?;
    let profiles = (0..ds.n_stations())
        .into_par_iter()
        .map(|s| profile(spec, ds, s))
        .collect::<Result<Vec<_>>>()?;
    let rows = (0..ds.n_stations())
        .into_par_iter()
        .map(|i| (0..i).map(|j| pair_distance(spec.kind, &profiles[i], &profiles[j])).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let ids = ds.stations().iter().map(|s| s.station_id.clone()).collect();
    DistanceMatrix::from_lower_triangle(ids, &rows)
}

/// The `l` closest stations to `i`, starting with `i` itself.
///
/// Remaining stations are ordered by distance, ties by station index (which
/// equals id order), so the selection for `l` is a prefix of that for `l + 1`.
pub fn nearest_stations(matrix: &DistanceMatrix, i: usize, l: usize) -> Result<Vec<usize>> {
    let n = matrix.len();
    if i >= n {
        return Err(Error::domain(format!("station index {i} out of range")));
    }
    if l == 0 || l > n {
        return Err(Error::domain(format!("L = {l} outside 1..={n}")));
    }
    let row = matrix.row(i);
    let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    others.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    let mut out = Vec::with_capacity(l);
    out.push(i);
    out.extend(others.into_iter().take(l - 1));
    Ok(out)
}
