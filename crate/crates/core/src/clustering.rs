//! Quantile features and k-means grouping of stations per training window.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, WindowSpec};
use crate::error::{Error, Result};
use crate::similarity::EmpiricalCdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Quantiles of the windowed observations.
    Climatology,
    /// Quantiles of the windowed ensemble-mean errors.
    ForecastErrors,
    /// Observation quantiles followed by error quantiles.
    Combined,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Climatology => "fs1",
            FeatureKind::ForecastErrors => "fs2",
            FeatureKind::Combined => "fs3",
        })
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "fs1" | "fs1_climatology" | "climatology" => FeatureKind::Climatology,
            "fs2" | "fs2_forecast_errors" | "forecast_errors" => FeatureKind::ForecastErrors,
            "fs3" | "fs3_combined" | "combined" => FeatureKind::Combined,
            other => return Err(Error::Config(format!("unknown feature set '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    /// Total number of features `N`.
    pub n_features: usize,
}

impl FeatureSpec {
    pub fn new(kind: FeatureKind, n_features: usize) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::domain("feature count must be at least 1"));
        }
        Ok(FeatureSpec { kind, n_features })
    }

    /// `(N₁, N₂)`: counts of observation and error quantiles.
    pub fn split(&self) -> (usize, usize) {
        match self.kind {
            FeatureKind::Climatology => (self.n_features, 0),
            FeatureKind::ForecastErrors => (0, self.n_features),
            FeatureKind::Combined => {
                let n1 = self.n_features.div_ceil(2);
                (n1, self.n_features - n1)
            }
        }
    }
}

/// Feature rows for the stations that had data in the window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    /// Station indices, ascending, aligned with `rows`.
    pub stations: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
    /// Stations left out because their window was empty.
    pub excluded: Vec<usize>,
}

/// Quantile features of each station's rolling window ending before `target`.
pub fn extract_features(spec: &FeatureSpec, ds: &Dataset, target: NaiveDate, window: &WindowSpec) -> Result<FeatureMatrix> {
    if spec.n_features == 0 {
        return Err(Error::domain("feature count must be at least 1"));
    }
    let (n1, n2) = spec.split();
    let mut out = FeatureMatrix {
        stations: Vec::new(),
        rows: Vec::new(),
        excluded: Vec::new(),
    };
    for s in 0..ds.n_stations() {
        let cases = ds.window_cases(s, target, window);
        if cases.is_empty() {
            out.excluded.push(s);
            continue;
        }
        let mut row = Vec::with_capacity(spec.n_features);
        if n1 > 0 {
            row.extend(EmpiricalCdf::new(cases.iter().map(|c| c.observation))?.equidistant_quantiles(n1));
        }
        if n2 > 0 {
            row.extend(EmpiricalCdf::new(cases.iter().map(|c| c.error()))?.equidistant_quantiles(n2));
        }
        out.stations.push(s);
        out.rows.push(row);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KmeansConfig {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
}

impl KmeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KmeansConfig {
            k,
            seed,
            restarts: 10,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    /// Cluster label per row; clusters are numbered by their first member.
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances.
    pub objective: f64,
    /// Objective after each assignment step of the winning restart.
    pub history: Vec<f64>,
    pub restart: usize,
}

impl Clustering {
    /// Row indices of each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp<R: Rng>(x: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![x[rng.random_range(0..x.len())].clone()];
    let mut d2: Vec<f64> = x.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = x.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..x.len())
        };
        centroids.push(x[pick].clone());
        for (i, p) in x.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    objective: f64,
    history: Vec<f64>,
}

fn lloyd(x: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Run {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = x[0].len();
    let mut centroids = kmeans_pp(x, k, &mut rng);
    let mut labels = vec![usize::MAX; x.len()];
    let mut history = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for (i, p) in x.iter().enumerate() {
            let current = labels[i];
            let mut best = if current < k { current } else { 0 };
            let mut best_d = sq_dist(p, &centroids[best]);
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(p, centroid);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if best != current {
                labels[i] = best;
                changed = true;
            }
        }
        // Empty clusters take the point farthest from its centroid.
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let far = (0..x.len())
                .filter(|&i| sizes[labels[i]] > 1)
                .max_by(|&a, &b| {
                    sq_dist(&x[a], &centroids[labels[a]])
                        .total_cmp(&sq_dist(&x[b], &centroids[labels[b]]))
                        .then(b.cmp(&a))
                })
                .expect("k does not exceed the number of points");
            sizes[labels[far]] -= 1;
            sizes[c] = 1;
            labels[far] = c;
            centroids[c] = x[far].clone();
            changed = true;
        }
        let objective: f64 = x.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum();
        debug_assert!(history.last().is_none_or(|&prev: &f64| objective <= prev * (1.0 + 1e-12) + 1e-300));
        history.push(objective);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &l) in x.iter().zip(&labels) {
            sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            centroids[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
        }
    }
    let objective: f64 = x.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum();
    if history.last() != Some(&objective) {
        history.push(objective);
    }
    Run {
        labels,
        centroids,
        objective,
        history,
    }
}

/// Best-of-restarts Lloyd k-means with k-means++ seeding.
///
/// Restart `r` uses seed `seed + r`; the winner is the lowest objective,
/// then the lowest restart index, so results do not depend on scheduling.
pub fn kmeans(features: &[Vec<f64>], config: &KmeansConfig) -> Result<Clustering> {
    let (k, p) = (config.k, features.len());
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if k > p {
        return Err(Error::domain(format!("k = {k} exceeds the number of stations ({p})")));
    }
    let dim = features[0].len();
    if features.iter().any(|r| r.len() != dim || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::domain("features must be finite rows of equal length"));
    }
    if k == p {
        return Ok(Clustering {
            k,
            labels: (0..p).collect(),
            centroids: features.to_vec(),
            objective: 0.0,
            history: vec![0.0],
            restart: 0,
        });
    }
    let runs: Vec<Run> = (0..config.restarts.max(1))
        .into_par_iter()
        .map(|r| lloyd(features, k, config.seed.wrapping_add(r as u64), config.max_iter))
        .collect();
    let (restart, best) = runs
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.objective.total_cmp(&b.objective).then(i.cmp(j)))
        .expect("at least one restart");
    // Relabel clusters in order of first appearance.
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for &l in &best.labels {
        if map[l] == usize::MAX {
            map[l] = next;
            next += 1;
        }
    }
    let mut centroids = vec![Vec::new(); k];
    for (old, &new) in map.iter().enumerate() {
        centroids[new] = best.centroids[old].clone();
    }
    Ok(Clustering {
        k,
        labels: best.labels.iter().map(|&l| map[l]).collect(),
        centroids,
        objective: best.objective,
        history: best.history,
        restart,
    })
}

/// Station clusters valid for one verification date.
#[derive(Debug, Clone, PartialEq)]
pub struct StationClusters {
    pub target_date: NaiveDate,
    /// Clustered station indices, ascending.
    pub stations: Vec<usize>,
    /// Cluster label per entry of `stations`.
    pub labels: Vec<usize>,
    /// Stations without data in the window.
    pub excluded: Vec<usize>,
    pub clustering: Clustering,
}

impl StationClusters {
    /// Station indices of each cluster, ascending.
    pub fn pools(&self) -> Vec<Vec<usize>> {
        self.clustering
            .members()
            .into_iter()
            .map(|rows| rows.into_iter().map(|r| self.stations[r]).collect())
            .collect()
    }

    pub fn label_of(&self, station: usize) -> Option<usize> {
        self.stations.binary_search(&station).ok().map(|i| self.labels[i])
    }

    /// CSV `station_id,cluster_id`.
    pub fn write_csv<W: Write>(&self, ds: &Dataset, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["station_id", "cluster_id"])?;
        for (&s, &l) in self.stations.iter().zip(&self.labels) {
            w.write_record([ds.station_id(s).to_string(), l.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<clusters>", e))?;
        Ok(())
    }
}

/// Features from the window ending before `target`, then k-means.
pub fn cluster_per_window(
    spec: &FeatureSpec,
    ds: &Dataset,
    target: NaiveDate,
    window: &WindowSpec,
    config: &KmeansConfig,
) -> Result<StationClusters> {
    let fm = extract_features(spec, ds, target, window)?;
    if fm.rows.is_empty() {
        return Err(Error::EmptyWindow(format!("no station has data before {target}")));
    }
    let clustering = kmeans(&fm.rows, config)?;
    Ok(StationClusters {
        target_date: target,
        stations: fm.stations,
        labels: clustering.labels.clone(),
        excluded: fm.excluded,
        clustering,
    })
}

/// Fraction of items on which two labelings agree after greedily matching
/// clusters by overlap.
pub fn partition_agreement(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 1.0;
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut overlap = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        overlap[x][y] += 1;
    }
    let mut used_a = vec![false; ka];
    let mut used_b = vec![false; kb];
    let mut matched = 0;
    loop {
        let mut best: Option<(usize, usize, usize)> = None;
        for i in (0..ka).filter(|&i| !used_a[i]) {
            for j in (0..kb).filter(|&j| !used_b[j]) {
                if overlap[i][j] > 0 && best.is_none_or(|(_, _, v)| overlap[i][j] > v) {
                    best = Some((i, j, overlap[i][j]));
                }
            }
        }
        let Some((i, j, v)) = best else { break };
        used_a[i] = true;
        used_b[j] = true;
        matched += v;
    }
    matched as f64 / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::{day, toy};
    use crate::dataset::{CaseRecord, StationRecord};
    use crate::model::EnsembleLayout;
    use proptest::prelude::*;

    #[test]
    fn split_rule() {
        let s = |n| FeatureSpec::new(FeatureKind::Combined, n).unwrap().split();
        assert_eq!(s(5), (3, 2));
        assert_eq!(s(24), (12, 12));
        assert_eq!(s(1), (1, 0));
        assert!(FeatureSpec::new(FeatureKind::Combined, 0).is_err());
    }

    fn obs_dataset(obs: &[&[f64]]) -> Dataset {
        let st = (0..obs.len())
            .map(|i| StationRecord {
                station_id: format!("S{i}"),
                x: 0.0,
                y: 0.0,
            })
            .collect();
        let mut recs = Vec::new();
        for (i, series) in obs.iter().enumerate() {
            for (d, &o) in series.iter().enumerate() {
                recs.push(CaseRecord {
                    station_id: format!("S{i}"),
                    date: day(d as u64),
                    members: vec![o + 1.0, o + 1.0],
                    observation: o,
                });
            }
        }
        Dataset::new(st, recs, EnsembleLayout::exchangeable(2)).unwrap()
    }

    #[test]
    fn quantile_features() {
        let ds = obs_dataset(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]]);
        let w = WindowSpec::new(80);
        let f1 = extract_features(&FeatureSpec::new(FeatureKind::Climatology, 1).unwrap(), &ds, day(10), &w).unwrap();
        assert_eq!(f1.rows[0], vec![2.0]);
        let f3 = extract_features(&FeatureSpec::new(FeatureKind::Climatology, 3).unwrap(), &ds, day(10), &w).unwrap();
        assert_eq!(f3.rows[1], vec![1.0, 2.0, 3.0]);
        let fc = extract_features(&FeatureSpec::new(FeatureKind::Combined, 5).unwrap(), &ds, day(10), &w).unwrap();
        // three observation quantiles, then two error quantiles (errors are all +1)
        assert_eq!(fc.rows[1], vec![1.0, 2.0, 3.0, 1.0, 1.0]);
    }

    #[test]
    fn empty_window_excluded() {
        let ds = obs_dataset(&[&[1.0, 2.0, 3.0], &[]]);
        let fm = extract_features(
            &FeatureSpec::new(FeatureKind::ForecastErrors, 2).unwrap(),
            &ds,
            day(5),
            &WindowSpec::new(10),
        )
        .unwrap();
        assert_eq!(fm.stations, vec![0]);
        assert_eq!(fm.excluded, vec![1]);
        let c = cluster_per_window(
            &FeatureSpec::new(FeatureKind::ForecastErrors, 2).unwrap(),
            &ds,
            day(5),
            &WindowSpec::new(10),
            &KmeansConfig::new(1, 0),
        )
        .unwrap();
        assert_eq!(c.label_of(1), None);
        assert!(cluster_per_window(
            &FeatureSpec::new(FeatureKind::ForecastErrors, 2).unwrap(),
            &ds,
            day(0),
            &WindowSpec::new(10),
            &KmeansConfig::new(1, 0)
        )
        .is_err());
    }

    #[test]
    fn separated_points() {
        let x: Vec<Vec<f64>> = [0.0, 0.1, 10.0, 10.1].iter().map(|&v| vec![v]).collect();
        let c = kmeans(&x, &KmeansConfig::new(2, 5)).unwrap();
        assert_eq!(c.labels, vec![0, 0, 1, 1]);
        assert!((c.objective - 0.01).abs() < 1e-12);
    }

    #[test]
    fn degenerate_k() {
        let x: Vec<Vec<f64>> = (0..6).map(|v| vec![v as f64, (v * v) as f64]).collect();
        assert_eq!(kmeans(&x, &KmeansConfig::new(6, 1)).unwrap().labels, (0..6).collect::<Vec<_>>());
        assert_eq!(kmeans(&x, &KmeansConfig::new(1, 1)).unwrap().labels, vec![0; 6]);
        assert!(kmeans(&x, &KmeansConfig::new(7, 1)).is_err());
        assert!(kmeans(&x, &KmeansConfig::new(0, 1)).is_err());
    }

    #[test]
    fn duplicate_points_keep_clusters_nonempty() {
        let x = vec![vec![1.0]; 5];
        let c = kmeans(&x, &KmeansConfig::new(3, 2)).unwrap();
        let sizes: Vec<usize> = c.members().iter().map(Vec::len).collect();
        assert!(sizes.iter().all(|&s| s > 0), "{sizes:?}");
        assert_eq!(c.objective, 0.0);
    }

    #[test]
    fn agreement() {
        assert_eq!(partition_agreement(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert_eq!(partition_agreement(&[0, 0, 1, 1], &[0, 0, 0, 1]), 0.75);
    }

    #[test]
    fn pools_cover_clustered_stations() {
        let days: Vec<u64> = (0..30).collect();
        let ds = toy(5, &days, 3);
        let spec = FeatureSpec::new(FeatureKind::Climatology, 4).unwrap();
        let c = cluster_per_window(&spec, &ds, day(30), &WindowSpec::new(20), &KmeansConfig::new(2, 3)).unwrap();
        let mut all: Vec<usize> = c.pools().concat();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        let mut buf = Vec::new();
        c.write_csv(&ds, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 6);
    }

    fn points() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 4..30)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn objective_never_increases(x in points(), k in 1usize..4, seed in 0u64..1000) {
            let k = k.min(x.len());
            let c = kmeans(&x, &KmeansConfig::new(k, seed)).unwrap();
            for w in c.history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
            let recomputed: f64 = x.iter().zip(&c.labels).map(|(p, &l)| sq_dist(p, &c.centroids[l])).sum();
            prop_assert!((recomputed - c.objective).abs() <= 1e-9 * (1.0 + c.objective));
            prop_assert!(c.members().iter().all(|m| !m.is_empty()));
        }

        #[test]
        fn deterministic(x in points(), seed in 0u64..1000) {
            let cfg = KmeansConfig::new(3.min(x.len()), seed);
            prop_assert_eq!(kmeans(&x, &cfg).unwrap(), kmeans(&x, &cfg).unwrap());
        }

        #[test]
        fn feature_blocks_monotone(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let series: Vec<Vec<f64>> = (0..3).map(|_| (0..15).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
            let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
            let ds = obs_dataset(&refs);
            let spec = FeatureSpec::new(FeatureKind::Combined, 7).unwrap();
            let fm = extract_features(&spec, &ds, day(20), &WindowSpec::new(10)).unwrap();
            for row in &fm.rows {
                prop_assert!(row[..4].windows(2).all(|w| w[0] <= w[1]));
                prop_assert!(row[4..].windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
