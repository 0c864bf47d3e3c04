//! End-to-end runs: load, pool, fit, predict, verify, and sweep.
//!
//! Run configuration keys (flat `key = value`):
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `stations`, `cases` | required | input CSV paths |
//! | `regime` | `regional` | `regional`, `local`, `distance` or `cluster` |
//! | `variant` | `simplified` | `simplified`, `lag_ignoring` or `full` |
//! | `n` | 80 | rolling window length (cases) |
//! | `max_age_days` | unset | drop window cases older than this |
//! | `L`, `distance` | 10, `d4` | distance regime |
//! | `k`, `N`, `features` | 5, 24, `fs2` | cluster regime |
//! | `alpha` | `2/53` | central-interval level |
//! | `objective` | `crps` | or `log_score` |
//! | `seed`, `restarts` | 0, 10 | k-means and rank tie seeds |
//! | `reference_start/end` | first `n` dates | distance reference period |
//! | `verify_start/end` | after the reference period | verification period |
//! | `distance_cache` | unset | distance matrix CSV, read if present, else written |
//! | `nonnegative_location` | false | constrain location coefficients to be non-negative |
//! | `pit_bins`, `tolerance`, `max_iter`, `workers` | 18, 1e-8, 5000, all cores | |
//!
//! Sweeps take comma-separated `grid_n`, `grid_L`, `grid_k`, `grid_N`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;

use crate::clustering::{FeatureKind, FeatureSpec};
use crate::config::{parse_real, KeyValues};
use crate::dataset::{load_csv, Dataset, WindowSpec};
use crate::distributions::TnParams;
use crate::error::{Error, Result};
use crate::estimation::{fit_sequence, predictive, FitConfig, FitSequence, FitStatus, Objective};
use crate::model::{build_formulation, ModelFormulation, Variant};
use crate::similarity::{distance_matrix, DistanceKind, DistanceMatrix, DistanceSpec};
use crate::training_sets::{Pooling, Regime};
use crate::verification::{ensemble_report, report, RankHistogram, VerificationReport, DEFAULT_ALPHA, DEFAULT_PIT_BINS};

/// Process exit code for an error: 2 configuration, 3 data, 4 estimation.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Structural(_) => 2,
        Error::Ingestion { .. } | Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::EmptyWindow(_) => 3,
        Error::InvalidCoefficients(_) | Error::EstimationSkipped(_) => 4,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegimeKind {
    Regional,
    Local,
    Distance,
    Cluster,
}

impl std::str::FromStr for RegimeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "regional" => RegimeKind::Regional,
            "local" => RegimeKind::Local,
            "distance" | "distance_semi_local" => RegimeKind::Distance,
            "cluster" | "cluster_semi_local" => RegimeKind::Cluster,
            other => return Err(Error::Config(format!("unknown regime '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub stations: PathBuf,
    pub cases: PathBuf,
    pub regime: RegimeKind,
    pub variant: Variant,
    pub window: WindowSpec,
    pub l: usize,
    pub distance: DistanceKind,
    pub k: usize,
    pub n_features: usize,
    pub features: FeatureKind,
    pub alpha: f64,
    pub objective: Objective,
    pub seed: u64,
    pub restarts: usize,
    pub pit_bins: usize,
    pub tolerance: f64,
    pub max_iter: usize,
    pub nonnegative_location: bool,
    pub reference: (Option<NaiveDate>, Option<NaiveDate>),
    pub verify: (Option<NaiveDate>, Option<NaiveDate>),
    pub distance_cache: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl RunConfig {
    /// Defaults for everything but the input paths.
    pub fn new(stations: impl Into<PathBuf>, cases: impl Into<PathBuf>) -> Self {
        RunConfig {
            stations: stations.into(),
            cases: cases.into(),
            regime: RegimeKind::Regional,
            variant: Variant::Simplified,
            window: WindowSpec::new(80),
            l: 10,
            distance: DistanceKind::Combined,
            k: 5,
            n_features: 24,
            features: FeatureKind::ForecastErrors,
            alpha: DEFAULT_ALPHA,
            objective: Objective::Crps,
            seed: 0,
            restarts: 10,
            pit_bins: DEFAULT_PIT_BINS,
            tolerance: 1e-8,
            max_iter: 5000,
            nonnegative_location: false,
            reference: (None, None),
            verify: (None, None),
            distance_cache: None,
            workers: None,
        }
    }

    /// Parse keys; relative paths are resolved against `base`.
    pub fn from_key_values(kv: &KeyValues, base: &Path) -> Result<Self> {
        let path = |key: &str| -> Result<PathBuf> { Ok(base.join(kv.require::<String>(key)?)) };
        let date = |key: &str| -> Result<Option<NaiveDate>> {
            kv.raw(key)
                .map(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| Error::Config(format!("key '{key}': bad date '{s}'"))))
                .transpose()
        };
        let mut c = RunConfig::new(path("stations")?, path("cases")?);
        c.regime = kv.get_or("regime", c.regime)?;
        c.variant = kv.get_or("variant", c.variant)?;
        c.window = WindowSpec {
            length: kv.get_or("n", c.window.length)?,
            max_age_days: kv.get("max_age_days")?,
        };
        c.l = kv.get_or("L", c.l)?;
        c.distance = kv.get_or("distance", c.distance)?;
        c.k = kv.get_or("k", c.k)?;
        c.n_features = kv.get_or("N", c.n_features)?;
        c.features = kv.get_or("features", c.features)?;
        if let Some(a) = kv.raw("alpha") {
            c.alpha = parse_real(a)?;
        }
        c.objective = kv.get_or("objective", c.objective)?;
        c.seed = kv.get_or("seed", c.seed)?;
        c.restarts = kv.get_or("restarts", c.restarts)?;
        c.pit_bins = kv.get_or("pit_bins", c.pit_bins)?;
        c.tolerance = kv.get_or("tolerance", c.tolerance)?;
        c.max_iter = kv.get_or("max_iter", c.max_iter)?;
        c.nonnegative_location = kv.get_or("nonnegative_location", false)?;
        c.reference = (date("reference_start")?, date("reference_end")?);
        c.verify = (date("verify_start")?, date("verify_end")?);
        c.distance_cache = kv.get::<String>("distance_cache")?.map(|p| base.join(p));
        c.workers = kv.get("workers")?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.window.length == 0 {
            return bad("n must be at least 1");
        }
        if self.regime == RegimeKind::Distance && self.l == 0 {
            return bad("L must be at least 1");
        }
        if self.regime == RegimeKind::Cluster && (self.k == 0 || self.n_features == 0) {
            return bad("k and N must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.tolerance > 0.0) || self.max_iter == 0 || self.pit_bins == 0 || self.restarts == 0 {
            return bad("tolerance, max_iter, pit_bins and restarts must be positive");
        }
        if self.variant == Variant::Custom {
            return bad("the custom variant is only available through the library");
        }
        Ok(())
    }

    pub fn regime(&self) -> Result<Regime> {
        Ok(match self.regime {
            RegimeKind::Regional => Regime::Regional,
            RegimeKind::Local => Regime::Local,
            RegimeKind::Distance => Regime::Distance { l: self.l },
            RegimeKind::Cluster => Regime::Cluster {
                features: FeatureSpec::new(self.features, self.n_features)?,
                k: self.k,
            },
        })
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            objective: self.objective,
            tolerance: self.tolerance,
            max_iter: self.max_iter,
            nonnegative_location: self.nonnegative_location,
            ..FitConfig::default()
        }
    }

    /// Reference dates: the configured period, or the first `n` dates.
    pub fn reference_dates(&self, ds: &Dataset) -> Vec<NaiveDate> {
        match self.reference {
            (None, None) => ds.dates().iter().take(self.window.length).copied().collect(),
            (from, to) => ds
                .dates()
                .iter()
                .copied()
                .filter(|d| from.is_none_or(|f| *d >= f) && to.is_none_or(|t| *d <= t))
                .collect(),
        }
    }

    /// Verification dates: the configured period, or every date after the reference dates.
    pub fn verification_dates(&self, ds: &Dataset) -> Vec<NaiveDate> {
        let (from, to) = self.verify;
        let after = if from.is_none() {
            self.reference_dates(ds).last().copied()
        } else {
            None
        };
        ds.dates()
            .iter()
            .copied()
            .filter(|d| from.is_none_or(|f| *d >= f) && to.is_none_or(|t| *d <= t) && after.is_none_or(|a| *d > a))
            .collect()
    }

    pub fn distance_spec(&self, ds: &Dataset) -> DistanceSpec {
        DistanceSpec::new(self.distance).with_reference_dates(self.reference_dates(ds))
    }
}

/// Cached matrix if the cache exists and matches, else computed (and cached).
pub fn load_or_compute_distances(config: &RunConfig, ds: &Dataset) -> Result<DistanceMatrix> {
    if let Some(path) = &config.distance_cache {
        if path.exists() {
            let m = DistanceMatrix::read_file(path)?;
            m.check_matches(ds)?;
            return Ok(m);
        }
    }
    let m = distance_matrix(&config.distance_spec(ds), ds)?;
    if let Some(path) = &config.distance_cache {
        write_atomic(path, |w| m.write(w))?;
    }
    Ok(m)
}

/// A scored forecast case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub station: usize,
    pub date: NaiveDate,
    pub params: TnParams,
    pub observation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub regime: String,
    pub variant: String,
    pub n: usize,
    pub l: Option<usize>,
    pub k: Option<usize>,
    pub n_features: Option<usize>,
    pub kind: Option<String>,
    pub mean_crps: f64,
    pub mae: f64,
    pub coverage: f64,
    pub mean_width: f64,
    pub n_cases: usize,
    /// Share of fits that reused preceding coefficients.
    pub fallback_rate: f64,
    /// Share of predicted cases that used reused coefficients.
    pub fallback_case_rate: f64,
    /// Verification cases left without a usable fit.
    pub unpredicted: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub formulation: ModelFormulation,
    pub sequence: FitSequence,
    pub predictions: Vec<Prediction>,
    pub report: VerificationReport,
    pub summary: SummaryRow,
}

impl RunOutput {
    /// CSV `station_id,date,location,scale,obs`.
    pub fn write_predictions<W: Write>(&self, ds: &Dataset, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["station_id", "date", "location", "scale", "obs"])?;
        for p in &self.predictions {
            w.write_record([
                ds.station_id(p.station).to_string(),
                p.date.to_string(),
                p.params.location.to_string(),
                p.params.scale.to_string(),
                p.observation.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<predictions>", e))?;
        Ok(())
    }

    /// Write fits, predictions, reports, histogram and clusters under `dir`.
    pub fn write_dir(&self, ds: &Dataset, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("fits.csv"), |w| self.sequence.write_csv(ds, w))?;
        write_atomic(&dir.join("predictions.csv"), |w| self.write_predictions(ds, w))?;
        write_atomic(&dir.join("report.json"), |w| self.report.write_json(w))?;
        write_atomic(&dir.join("report.csv"), |w| self.report.write_csv(w))?;
        write_atomic(&dir.join("pit_hist.csv"), |w| self.report.write_histogram_csv(w))?;
        write_atomic(&dir.join("summary.json"), |w| Ok(serde_json::to_writer_pretty(w, &self.summary)?))?;
        if !self.sequence.clusters.is_empty() {
            let cdir = dir.join("clusters");
            fs::create_dir_all(&cdir).map_err(|e| Error::io(&cdir, e))?;
            for c in &self.sequence.clusters {
                write_atomic(&cdir.join(format!("{}.csv", c.target_date)), |w| c.write_csv(ds, w))?;
            }
        }
        Ok(())
    }
}

/// Fit over the verification dates and score the held-out observations.
pub fn run(config: &RunConfig, ds: &Dataset) -> Result<RunOutput> {
    config.validate()?;
    let regime = config.regime()?;
    let formulation = build_formulation(config.variant, ds.layout())?;
    let dates = config.verification_dates(ds);
    if dates.is_empty() {
        return Err(Error::Config("the verification period contains no dates".into()));
    }
    let matrix = match regime {
        Regime::Distance { .. } => Some(load_or_compute_distances(config, ds)?),
        _ => None,
    };
    let mut pooling = Pooling::new(regime).with_kmeans(config.seed, config.restarts);
    if let Some(m) = &matrix {
        pooling = pooling.with_distances(m);
    }
    let sequence = fit_sequence(&pooling, &formulation, ds, &dates, &config.window, &config.fit_config())?;
    let mut predictions = Vec::new();
    let mut fallback_cases = 0;
    for f in sequence.fits.iter().filter(|f| f.result.is_usable()) {
        for &s in &f.pool.targets {
            if let Some(c) = ds.case(s, f.date) {
                predictions.push(Prediction {
                    station: s,
                    date: f.date,
                    params: predictive(&formulation, &f.result.coefficients, &c.members)?,
                    observation: c.observation,
                });
                fallback_cases += usize::from(f.result.status == FitStatus::FallbackUsed);
            }
        }
    }
    predictions.sort_by_key(|p| (p.date, p.station));
    let total_cases = dates
        .iter()
        .map(|d| (0..ds.n_stations()).filter(|&s| ds.case(s, *d).is_some()).count())
        .sum::<usize>();
    if predictions.is_empty() {
        return Err(Error::EstimationSkipped(format!(
            "no usable fit on any of {} verification dates ({} failed fits)",
            dates.len(),
            sequence.count(FitStatus::Failed)
        )));
    }
    let params: Vec<TnParams> = predictions.iter().map(|p| p.params).collect();
    let obs: Vec<f64> = predictions.iter().map(|p| p.observation).collect();
    let mut rep = report(&params, &obs, config.alpha, config.pit_bins)?;
    rep.metadata.insert("fallback_rate".into(), sequence.fallback_rate().to_string());
    if config.regime == RegimeKind::Distance && config.distance == DistanceKind::EnsembleStats {
        rep.metadata
            .insert("d5_dates".into(), "common reference dates only, unnormalized".into());
    }
    let summary = SummaryRow {
        regime: regime.name().into(),
        variant: config.variant.to_string(),
        n: config.window.length,
        l: (config.regime == RegimeKind::Distance).then_some(config.l),
        k: (config.regime == RegimeKind::Cluster).then_some(config.k),
        n_features: (config.regime == RegimeKind::Cluster).then_some(config.n_features),
        kind: match config.regime {
            RegimeKind::Distance => Some(config.distance.to_string()),
            RegimeKind::Cluster => Some(config.features.to_string()),
            _ => None,
        },
        mean_crps: rep.mean_crps,
        mae: rep.mae,
        coverage: rep.coverage,
        mean_width: rep.mean_width,
        n_cases: rep.n_cases,
        fallback_rate: sequence.fallback_rate(),
        fallback_case_rate: fallback_cases as f64 / predictions.len() as f64,
        unpredicted: total_cases - predictions.len(),
    };
    Ok(RunOutput {
        formulation,
        sequence,
        predictions,
        report: rep,
        summary,
    })
}

/// Raw-ensemble scores over the verification dates.
pub fn raw_ensemble(config: &RunConfig, ds: &Dataset) -> Result<(VerificationReport, RankHistogram)> {
    let dates = config.verification_dates(ds);
    let cases: Vec<_> = ds.cases().iter().filter(|c| dates.binary_search(&c.date).is_ok()).collect();
    let members: Vec<&[f64]> = cases.iter().map(|c| c.members.as_slice()).collect();
    let obs: Vec<f64> = cases.iter().map(|c| c.observation).collect();
    ensemble_report(&members, &obs, config.alpha, config.seed)
}

/// One cell of a tuning sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub l: usize,
    pub k: usize,
    pub n_features: usize,
    /// `ok`, `partial` (some fits failed) or `failed`.
    pub status: String,
    pub summary: Option<SummaryRow>,
    pub message: String,
}

/// Values for each swept key; unset keys keep the base value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepGrid {
    pub n: Vec<usize>,
    pub l: Vec<usize>,
    pub k: Vec<usize>,
    pub n_features: Vec<usize>,
}

impl SweepGrid {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        Ok(SweepGrid {
            n: kv.get_list("grid_n")?.unwrap_or_default(),
            l: kv.get_list("grid_L")?.unwrap_or_default(),
            k: kv.get_list("grid_k")?.unwrap_or_default(),
            n_features: kv.get_list("grid_N")?.unwrap_or_default(),
        })
    }

    pub fn cells(&self, base: &RunConfig) -> Vec<RunConfig> {
        let or = |v: &Vec<usize>, d: usize| if v.is_empty() { vec![d] } else { v.clone() };
        let mut out = Vec::new();
        for &n in &or(&self.n, base.window.length) {
            for &l in &or(&self.l, base.l) {
                for &k in &or(&self.k, base.k) {
                    for &nf in &or(&self.n_features, base.n_features) {
                        let mut c = base.clone();
                        c.window.length = n;
                        c.l = l;
                        c.k = k;
                        c.n_features = nf;
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

/// Run every grid cell; failures are recorded, not raised.
pub fn sweep(base: &RunConfig, grid: &SweepGrid, ds: &Dataset) -> Vec<SweepRow> {
    grid.cells(base)
        .into_iter()
        .map(|c| {
            let mut row = SweepRow {
                n: c.window.length,
                l: c.l,
                k: c.k,
                n_features: c.n_features,
                status: "failed".into(),
                summary: None,
                message: String::new(),
            };
            match run(&c, ds) {
                Ok(out) => {
                    let failed = out.sequence.count(FitStatus::Failed);
                    row.status = if failed == 0 { "ok" } else { "partial" }.into();
                    if failed > 0 {
                        row.message = format!("{failed} failed fits");
                    }
                    row.summary = Some(out.summary);
                }
                Err(e) => row.message = e.to_string(),
            }
            row
        })
        .collect()
}

/// Long-format CSV, one row per cell.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "n",
        "L",
        "k",
        "N",
        "status",
        "mean_crps",
        "mae",
        "coverage",
        "mean_width",
        "n_cases",
        "fallback_rate",
        "message",
    ])?;
    for r in rows {
        let s = r.summary.as_ref();
        let num = |f: fn(&SummaryRow) -> f64| s.map_or(String::new(), |s| f(s).to_string());
        w.write_record([
            r.n.to_string(),
            r.l.to_string(),
            r.k.to_string(),
            r.n_features.to_string(),
            r.status.clone(),
            num(|s| s.mean_crps),
            num(|s| s.mae),
            num(|s| s.coverage),
            num(|s| s.mean_width),
            s.map_or(String::new(), |s| s.n_cases.to_string()),
            num(|s| s.fallback_rate),
            r.message.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<sweep>", e))?;
    Ok(())
}

/// Read a predictions CSV written by [`RunOutput::write_predictions`].
pub fn read_predictions(path: &Path) -> Result<(Vec<TnParams>, Vec<f64>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Ingestion {
            path: path.display().to_string(),
            problems: vec![format!("missing column '{name}'")],
        })
    };
    let (li, si, oi) = (col("location")?, col("scale")?, col("obs")?);
    let mut params = Vec::new();
    let mut obs = Vec::new();
    let mut problems = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| rec.get(i).and_then(|v| v.trim().parse::<f64>().ok());
        match (num(li), num(si), num(oi)) {
            (Some(l), Some(s), Some(o)) => match TnParams::new(l, s) {
                Ok(p) => {
                    params.push(p);
                    obs.push(o);
                }
                Err(e) => problems.push(format!("row {}: {e}", line + 2)),
            },
            _ => problems.push(format!("row {}: unparsable number", line + 2)),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Ingestion {
            path: path.display().to_string(),
            problems,
        });
    }
    Ok((params, obs))
}

/// Load the dataset named by a run configuration.
pub fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    load_csv(&config.stations, &config.cases)
}

/// Write through a temporary sibling file, then rename into place.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<fs::File>) -> Result<()>,
{
    let tmp = path.with_extension("partial");
    let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = std::io::BufWriter::new(file);
    write(&mut w)?;
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, write_csv, StationType, SynthConfig};
    use crate::model::EnsembleLayout;

    fn setup(dir: &Path) -> RunConfig {
        let cfg = SynthConfig::new(6, 60, EnsembleLayout::exchangeable(6), vec![StationType::new("a")], 3);
        let ds = generate_synthetic(&cfg, 3).unwrap();
        write_csv(&ds, dir.join("stations.csv"), dir.join("cases.csv")).unwrap();
        let mut c = RunConfig::new(dir.join("stations.csv"), dir.join("cases.csv"));
        c.window.length = 20;
        c
    }

    #[test]
    fn keys_and_defaults() {
        let kv = KeyValues::parse("stations = s.csv\ncases = c.csv\nregime = cluster\nk = 3\nalpha = 2/53\nverify_start = 2014-01-01\n")
            .unwrap();
        let c = RunConfig::from_key_values(&kv, Path::new("/data")).unwrap();
        assert_eq!(c.stations, PathBuf::from("/data/s.csv"));
        assert_eq!(c.regime, RegimeKind::Cluster);
        assert_eq!(c.window.length, 80);
        assert_eq!(c.n_features, 24);
        assert!((c.alpha - 2.0 / 53.0).abs() < 1e-17);
        assert!(c.verify.0.is_some());
        let bad = KeyValues::parse("stations = s\ncases = c\nregime = global\n").unwrap();
        assert_eq!(exit_code(&RunConfig::from_key_values(&bad, Path::new(".")).unwrap_err()), 2);
        let missing = KeyValues::parse("cases = c\n").unwrap();
        assert!(RunConfig::from_key_values(&missing, Path::new(".")).is_err());
    }

    #[test]
    fn run_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = setup(dir.path());
        let ds = load_dataset(&c).unwrap();
        c.regime = RegimeKind::Cluster;
        c.k = 2;
        c.n_features = 4;
        let out = run(&c, &ds).unwrap();
        assert_eq!(out.summary.n_cases + out.summary.unpredicted, 6 * 40);
        out.write_dir(&ds, &dir.path().join("out")).unwrap();
        for f in [
            "fits.csv",
            "predictions.csv",
            "report.json",
            "report.csv",
            "pit_hist.csv",
            "summary.json",
        ] {
            assert!(dir.path().join("out").join(f).exists(), "{f}");
        }
        assert_eq!(fs::read_dir(dir.path().join("out/clusters")).unwrap().count(), 40);
        // rerun is identical
        assert_eq!(run(&c, &ds).unwrap().summary, out.summary);
    }

    #[test]
    fn distance_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = setup(dir.path());
        let ds = load_dataset(&c).unwrap();
        c.regime = RegimeKind::Distance;
        c.l = 2;
        c.distance_cache = Some(dir.path().join("d.csv"));
        let a = run(&c, &ds).unwrap();
        assert!(dir.path().join("d.csv").exists());
        let b = run(&c, &ds).unwrap();
        assert_eq!(a.summary, b.summary);
    }

    #[test]
    fn sweep_records_failures() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = setup(dir.path());
        let ds = load_dataset(&c).unwrap();
        c.regime = RegimeKind::Local;
        let grid = SweepGrid {
            n: vec![2, 20],
            ..Default::default()
        };
        let rows = sweep(&c, &grid, &ds);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].status, "failed");
        assert_eq!(rows[1].status, "ok");
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
