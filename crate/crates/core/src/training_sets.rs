//! Station pools and pooled training sets for each verification date.

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_per_window, FeatureSpec, KmeansConfig, StationClusters};
use crate::dataset::{Dataset, ForecastCase, WindowSpec};
use crate::error::{Error, Result};
use crate::similarity::{nearest_stations, DistanceMatrix};

/// How the training data of a station are selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// All stations pooled into one training set.
    Regional,
    /// Each station trained on its own history.
    Local,
    /// Each station pooled with its `l − 1` most similar stations.
    Distance { l: usize },
    /// Stations grouped by k-means on windowed features; one pool per cluster.
    Cluster { features: FeatureSpec, k: usize },
}

impl Regime {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Regime::Distance { l: 0 } => Err(Error::Config("L must be at least 1".into())),
            Regime::Cluster { k: 0, .. } => Err(Error::Config("k must be at least 1".into())),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regime::Regional => "regional",
            Regime::Local => "local",
            Regime::Distance { .. } => "distance",
            Regime::Cluster { .. } => "cluster",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Regional | Regime::Local => f.write_str(self.name()),
            Regime::Distance { l } => write!(f, "distance(L={l})"),
            Regime::Cluster { features, k } => write!(f, "cluster({}, N={}, k={k})", features.kind, features.n_features),
        }
    }
}

/// Identifies a chain of fits across dates, used for warm starts and fallbacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PoolKey {
    All,
    /// Keyed by a station index; for clusters, the smallest member.
    Station(usize),
}

impl PoolKey {
    pub fn label(&self, ds: &Dataset) -> String {
        match self {
            PoolKey::All => "all".into(),
            PoolKey::Station(s) => ds.station_id(*s).to_string(),
        }
    }
}

/// Stations whose windows are pooled, and the stations predicted from the fit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool {
    pub key: PoolKey,
    /// Pooled stations, ascending.
    pub stations: Vec<usize>,
    /// Stations that receive this pool's coefficients, ascending.
    pub targets: Vec<usize>,
}

/// Inputs needed to form pools beyond the regime itself.
#[derive(Debug, Clone, Copy)]
pub struct Pooling<'a> {
    pub regime: Regime,
    /// Required for the distance regime.
    pub distances: Option<&'a DistanceMatrix>,
    /// Seed and restarts for the cluster regime.
    pub kmeans_seed: u64,
    pub kmeans_restarts: usize,
}

impl<'a> Pooling<'a> {
    pub fn new(regime: Regime) -> Self {
        Pooling {
            regime,
            distances: None,
            kmeans_seed: 0,
            kmeans_restarts: 10,
        }
    }

    pub fn with_distances(mut self, m: &'a DistanceMatrix) -> Self {
        self.distances = Some(m);
        self
    }

    pub fn with_kmeans(mut self, seed: u64, restarts: usize) -> Self {
        self.kmeans_seed = seed;
        self.kmeans_restarts = restarts;
        self
    }
}

/// Pools for one verification date.
#[derive(Debug, Clone, PartialEq)]
pub struct DatePools {
    pub date: NaiveDate,
    pub pools: Vec<Pool>,
    /// The clustering used, for the cluster regime.
    pub clusters: Option<StationClusters>,
}

/// Form the station pools valid on `date`.
///
/// Clusters are computed from the windows ending before `date`. Stations
/// without window data cannot be clustered and receive no pool, except for
/// `k = 1` where every station belongs to the single cluster.
pub fn pools_for_date(pooling: &Pooling, ds: &Dataset, date: NaiveDate, window: &WindowSpec) -> Result<DatePools> {
    pooling.regime.validate()?;
    let n = ds.n_stations();
    let all: Vec<usize> = (0..n).collect();
    let mut clusters = None;
    let pools = match pooling.regime {
        Regime::Regional => vec![Pool {
            key: PoolKey::All,
            stations: all.clone(),
            targets: all,
        }],
        Regime::Local => all
            .iter()
            .map(|&s| Pool {
                key: PoolKey::Station(s),
                stations: vec![s],
                targets: vec![s],
            })
            .collect(),
        Regime::Distance { l } => {
            let m = pooling
                .distances
                .ok_or_else(|| Error::Config("distance regime needs a distance matrix".into()))?;
            m.check_matches(ds)?;
            all.iter()
                .map(|&s| {
                    let mut stations = nearest_stations(m, s, l)?;
                    stations.sort_unstable();
                    Ok(Pool {
                        key: PoolKey::Station(s),
                        stations,
                        targets: vec![s],
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        Regime::Cluster { features, k } => {
            if k > n {
                return Err(Error::domain(format!("k = {k} exceeds the number of stations ({n})")));
            }
            let mut cfg = KmeansConfig::new(k, pooling.kmeans_seed);
            cfg.restarts = pooling.kmeans_restarts;
            // Stations without window data shrink the clusterable set.
            let clusterable = n - (0..n).filter(|&s| ds.window_range(s, date, window).is_empty()).count();
            cfg.k = k.min(clusterable.max(1));
            let sc = cluster_per_window(&features, ds, date, window, &cfg)?;
            let mut pools: Vec<Pool> = sc
                .pools()
                .into_iter()
                .map(|stations| Pool {
                    key: PoolKey::Station(stations[0]),
                    targets: stations.clone(),
                    stations,
                })
                .collect();
            if k == 1 {
                pools[0] = Pool {
                    key: PoolKey::Station(0),
                    stations: all.clone(),
                    targets: all,
                };
            }
            clusters = Some(sc);
            pools
        }
    };
    Ok(DatePools { date, pools, clusters })
}

/// Pooled cases for one pool and date, as indices into [`Dataset::cases`].
///
/// Ordered by station, then date.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSet {
    pub date: NaiveDate,
    pub case_indices: Vec<usize>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.case_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.case_indices.is_empty()
    }

    pub fn cases<'d>(&self, ds: &'d Dataset) -> Vec<&'d ForecastCase> {
        self.case_indices.iter().map(|&i| &ds.cases()[i]).collect()
    }
}

/// Union of the pooled stations' rolling windows before `date`.
pub fn training_set(ds: &Dataset, stations: &[usize], date: NaiveDate, window: &WindowSpec) -> TrainingSet {
    TrainingSet {
        date,
        case_indices: stations.iter().flat_map(|&s| ds.window_range(s, date, window)).collect(),
    }
}

/// Training set for the pool that predicts `station` on `date`.
pub fn build(pooling: &Pooling, ds: &Dataset, station: usize, date: NaiveDate, window: &WindowSpec) -> Result<TrainingSet> {
    let dp = pools_for_date(pooling, ds, date, window)?;
    let pool = dp
        .pools
        .iter()
        .find(|p| p.targets.binary_search(&station).is_ok())
        .ok_or_else(|| Error::EstimationSkipped(format!("station '{}' has no pool on {date}", ds.station_id(station))))?;
    let ts = training_set(ds, &pool.stations, date, window);
    if ts.is_empty() {
        return Err(Error::EstimationSkipped(format!(
            "empty training set for '{}' on {date}",
            ds.station_id(station)
        )));
    }
    Ok(ts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::FeatureKind;
    use crate::dataset::tests::{day, toy};
    use crate::similarity::{distance_matrix, DistanceKind, DistanceSpec};

    fn daily(stations: usize, days: u64) -> Dataset {
        let d: Vec<u64> = (0..days).collect();
        toy(stations, &d, 3)
    }

    #[test]
    fn regional_pools_everything() {
        let ds = daily(3, 100);
        let ts = build(&Pooling::new(Regime::Regional), &ds, 1, day(90), &WindowSpec::new(80)).unwrap();
        assert_eq!(ts.len(), 240);
        assert!(ts.cases(&ds).iter().all(|c| c.date < day(90)));
    }

    #[test]
    fn degenerate_regimes() {
        let ds = daily(4, 40);
        let w = WindowSpec::new(20);
        let m = distance_matrix(&DistanceSpec::new(DistanceKind::Location), &ds).unwrap();
        let local = Pooling::new(Regime::Local);
        let dist1 = Pooling::new(Regime::Distance { l: 1 }).with_distances(&m);
        let fs = FeatureSpec::new(FeatureKind::Climatology, 4).unwrap();
        let k_all = Pooling::new(Regime::Cluster { features: fs, k: 4 });
        let k_one = Pooling::new(Regime::Cluster { features: fs, k: 1 });
        let regional = Pooling::new(Regime::Regional);
        for s in 0..4 {
            let a = build(&local, &ds, s, day(30), &w).unwrap();
            assert_eq!(build(&dist1, &ds, s, day(30), &w).unwrap(), a);
            assert_eq!(build(&k_all, &ds, s, day(30), &w).unwrap(), a);
            assert_eq!(
                build(&k_one, &ds, s, day(30), &w).unwrap(),
                build(&regional, &ds, s, day(30), &w).unwrap()
            );
        }
        let dp = pools_for_date(&k_all, &ds, day(30), &w).unwrap();
        let keys: Vec<PoolKey> = dp.pools.iter().map(|p| p.key).collect();
        assert_eq!(keys, (0..4).map(PoolKey::Station).collect::<Vec<_>>());
    }

    #[test]
    fn distance_pool_size() {
        let ds = toy(5, &[0, 1, 2, 3, 5, 6, 8], 2);
        let m = distance_matrix(&DistanceSpec::new(DistanceKind::Location), &ds).unwrap();
        let w = WindowSpec::new(4);
        let p = Pooling::new(Regime::Distance { l: 3 }).with_distances(&m);
        let ts = build(&p, &ds, 0, day(7), &w).unwrap();
        let expected: usize = nearest_stations(&m, 0, 3)
            .unwrap()
            .iter()
            .map(|&s| ds.window_range(s, day(7), &w).len())
            .sum();
        assert_eq!(ts.len(), expected);
        assert!(build(&Pooling::new(Regime::Distance { l: 3 }), &ds, 0, day(7), &w).is_err());
    }

    #[test]
    fn empty_history_is_skipped() {
        let ds = daily(2, 10);
        let err = build(&Pooling::new(Regime::Local), &ds, 0, day(0), &WindowSpec::new(5)).unwrap_err();
        assert!(matches!(err, Error::EstimationSkipped(_)));
        assert!(Regime::Distance { l: 0 }.validate().is_err());
    }

    #[test]
    fn no_leakage() {
        let ds = daily(3, 30);
        let fs = FeatureSpec::new(FeatureKind::ForecastErrors, 3).unwrap();
        for regime in [Regime::Regional, Regime::Local, Regime::Cluster { features: fs, k: 2 }] {
            for t in 1..32 {
                let dp = pools_for_date(&Pooling::new(regime), &ds, day(t), &WindowSpec::new(7)).unwrap();
                for pool in &dp.pools {
                    let ts = training_set(&ds, &pool.stations, day(t), &WindowSpec::new(7));
                    assert!(ts.cases(&ds).iter().all(|c| c.date < day(t)));
                }
            }
        }
    }
}
