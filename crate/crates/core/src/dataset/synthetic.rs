//! Synthetic multi-station ensemble data with a known generative truth.
//!
//! Observations are drawn from the simplified truncated-normal model itself,
//! `x ~ N₀(slope·f̄ − bias, noise + spread·S²)`, using the generated
//! ensemble's own mean and variance. Member spread is set from the type's
//! dispersion factor, the ratio of ensemble spread to predictive standard
//! deviation; a factor below one yields an underdispersive ensemble.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{CaseRecord, Dataset, StationRecord};
use crate::config::KeyValues;
use crate::distributions::{tn_quantile, TnParams};
use crate::error::{Error, Result};
use crate::model::{ensemble_stats, EmosCoefficients, EnsembleLayout};

/// One class of stations sharing climate and forecast-error behaviour.
#[derive(Debug, Clone, PartialEq)]
pub struct StationType {
    pub name: String,
    /// Typical wind speed (m/s) of the forecast signal.
    pub climate: f64,
    /// Amount by which the ensemble mean over-forecasts.
    pub bias: f64,
    /// True coefficient on the ensemble mean.
    pub slope: f64,
    /// True scale intercept `b₀`.
    pub noise: f64,
    /// True scale slope `b₁`.
    pub spread: f64,
    /// Ensemble spread relative to the true predictive standard deviation.
    pub dispersion: f64,
}

impl StationType {
    pub fn new(name: impl Into<String>) -> Self {
        StationType {
            name: name.into(),
            climate: 5.0,
            bias: 0.0,
            slope: 1.0,
            noise: 1.0,
            spread: 1.0,
            dispersion: 0.6,
        }
    }

    /// Generative coefficients in simplified-model form (`a₁` multiplies `f̄`).
    pub fn true_coefficients(&self) -> EmosCoefficients {
        EmosCoefficients {
            intercept: -self.bias,
            group_coeffs: vec![self.slope],
            scale_intercept: self.noise,
            scale_slope: self.spread,
        }
    }

    /// Typical member standard deviation `u` solving `u = d·√(b₀ + b₁u²)`.
    fn member_sd(&self) -> f64 {
        let d2 = self.dispersion * self.dispersion;
        (d2 * self.noise / (1.0 - d2 * self.spread)).sqrt()
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("type '{}': {what}", self.name)));
        if !(self.climate > 0.0) {
            return bad("climate must be positive");
        }
        if !(self.noise > 0.0) || self.spread < 0.0 {
            return bad("noise must be positive and spread non-negative");
        }
        if !(self.dispersion > 0.0) || self.dispersion * self.dispersion * self.spread >= 1.0 {
            return bad("dispersion must be positive with dispersion²·spread < 1");
        }
        if ![self.bias, self.slope].iter().all(|v| v.is_finite()) {
            return bad("bias and slope must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub stations: usize,
    pub days: usize,
    pub start_date: NaiveDate,
    pub layout: EnsembleLayout,
    /// Station `i` has type `types[i % types.len()]`.
    pub types: Vec<StationType>,
    /// Probability of dropping a case, to create gaps.
    pub missing_rate: f64,
    /// Day-to-day autocorrelation of the weather signal.
    pub persistence: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(stations: usize, days: usize, layout: EnsembleLayout, types: Vec<StationType>, seed: u64) -> Self {
        SynthConfig {
            stations,
            days,
            start_date: NaiveDate::from_ymd_opt(2013, 10, 1).expect("valid date"),
            layout,
            types,
            missing_rate: 0.0,
            persistence: 0.7,
            seed,
        }
    }

    /// Build from flat keys.
    ///
    /// Required: `stations`, `days`, `seed`. Ensemble shape: `layout = glameps`,
    /// or `members = M`, or `subensembles`/`control`/`perturbed`/`lagged`.
    /// Types: `types = <count or comma-separated names>` with per-type keys
    /// `climate_<t>`, `bias_<t>`, `slope_<t>`, `noise_<t>`, `spread_<t>`,
    /// `dispersion_<t>`. Optional: `start_date`, `missing_rate`, `persistence`.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let stations = kv.require("stations")?;
        let days = kv.require("days")?;
        let seed = kv.require("seed")?;
        let layout = match kv.raw("layout") {
            Some("glameps") => EnsembleLayout::glameps(),
            Some(other) if other != "regular" => return Err(Error::Config(format!("unknown layout '{other}'"))),
            _ => {
                if let Some(m) = kv.get::<usize>("members")? {
                    EnsembleLayout::exchangeable(m)
                } else {
                    let subs: usize = kv.get_or("subensembles", 1)?;
                    let names: Vec<String> = (0..subs).map(|i| format!("S{}", i + 1)).collect();
                    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                    EnsembleLayout::regular(
                        &refs,
                        kv.get_or("control", false)?,
                        kv.get_or("perturbed", 8)?,
                        kv.get_or("lagged", 0)?,
                    )
                }
            }
        };
        let names: Vec<String> = match kv.raw("types") {
            None => vec!["t0".into()],
            Some(v) => match v.parse::<usize>() {
                Ok(n) => (0..n).map(|i| format!("t{i}")).collect(),
                Err(_) => kv.get_list::<String>("types")?.unwrap_or_default(),
            },
        };
        let mut types = Vec::with_capacity(names.len());
        for name in names {
            let d = StationType::new(name.clone());
            types.push(StationType {
                climate: kv.get_or(&format!("climate_{name}"), d.climate)?,
                bias: kv.get_or(&format!("bias_{name}"), d.bias)?,
                slope: kv.get_or(&format!("slope_{name}"), d.slope)?,
                noise: kv.get_or(&format!("noise_{name}"), d.noise)?,
                spread: kv.get_or(&format!("spread_{name}"), d.spread)?,
                dispersion: kv.get_or(&format!("dispersion_{name}"), d.dispersion)?,
                name,
            });
        }
        let mut cfg = SynthConfig::new(stations, days, layout, types, seed);
        if let Some(s) = kv.raw("start_date") {
            cfg.start_date = NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| Error::Config(format!("bad start_date '{s}'")))?;
        }
        cfg.missing_rate = kv.get_or("missing_rate", 0.0)?;
        cfg.persistence = kv.get_or("persistence", cfg.persistence)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stations == 0 || self.days == 0 {
            return Err(Error::Config("stations and days must be positive".into()));
        }
        if self.layout.n_members() < 2 {
            return Err(Error::Config("at least two ensemble members are required".into()));
        }
        if self.types.is_empty() {
            return Err(Error::Config("at least one station type is required".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Config("missing_rate must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.persistence) {
            return Err(Error::Config("persistence must lie in [0, 1)".into()));
        }
        self.types.iter().try_for_each(StationType::validate)
    }

    /// Type index of station `i` (in station-id order).
    pub fn type_of(&self, station: usize) -> usize {
        station % self.types.len()
    }

    pub fn station_id(station: usize) -> String {
        format!("ST{station:04}")
    }
}

/// Unit-variance AR(1) path.
fn ar1_path<R: Rng>(rng: &mut R, len: usize, rho: f64) -> Vec<f64> {
    let innov = (1.0 - rho * rho).sqrt();
    let mut v: f64 = StandardNormal.sample(rng);
    (0..len)
        .map(|_| {
            let out = v;
            let e: f64 = StandardNormal.sample(rng);
            v = rho * v + innov * e;
            out
        })
        .collect()
}

/// Generate a dataset; identical `(config, seed)` gives a bit-identical result.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = config.layout.n_members();
    let regional = ar1_path(&mut rng, config.days, config.persistence);
    let mut stations = Vec::with_capacity(config.stations);
    let mut records = Vec::new();
    for i in 0..config.stations {
        let ty = &config.types[config.type_of(i)];
        let tidx = config.type_of(i) as f64;
        stations.push(StationRecord {
            station_id: SynthConfig::station_id(i),
            x: 100.0 * tidx + 100.0 * rng.random::<f64>(),
            y: 100.0 * rng.random::<f64>(),
        });
        let local = ar1_path(&mut rng, config.days, config.persistence);
        let base_sd = ty.member_sd();
        for t in 0..config.days {
            let g = 0.5 * regional[t] + 0.75f64.sqrt() * local[t];
            let center = ty.climate * (0.35 * g - 0.35 * 0.35 / 2.0).exp();
            let xi: f64 = StandardNormal.sample(&mut rng);
            let sd = base_sd * (0.3 * xi - 0.045).exp();
            let members: Vec<f64> = (0..m)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    (center + sd * e).max(0.0)
                })
                .collect();
            let (mean, var) = ensemble_stats(&members)?;
            let truth = TnParams::new(ty.slope * mean - ty.bias, (ty.noise + ty.spread * var).sqrt())?;
            let u: f64 = rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12);
            let obs = tn_quantile(&truth, u)?;
            let keep = rng.random::<f64>() >= config.missing_rate;
            if keep {
                records.push(CaseRecord {
                    station_id: SynthConfig::station_id(i),
                    date: config.start_date + chrono::Days::new(t as u64),
                    members,
                    observation: obs,
                });
            }
        }
    }
    Dataset::new(stations, records, config.layout.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig::new(20, 200, EnsembleLayout::exchangeable(8), vec![StationType::new("a")], seed)
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_synthetic(&small(3), 3).unwrap();
        let b = generate_synthetic(&small(3), 3).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&small(3), 4).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.cases().len(), 20 * 200);
        assert_eq!(a.n_members(), 8);
    }

    #[test]
    fn missing_rate_creates_gaps() {
        let mut cfg = small(1);
        cfg.missing_rate = 0.2;
        let ds = generate_synthetic(&cfg, 1).unwrap();
        let frac = ds.cases().len() as f64 / 4000.0;
        assert!((frac - 0.8).abs() < 0.03, "{frac}");
    }

    #[test]
    fn from_keys() {
        let kv = KeyValues::parse(
            "stations = 6\ndays = 30\nseed = 11\nlayout = glameps\ntypes = coast, inland\nbias_coast = 1.5\ndispersion_inland = 0.4\n",
        )
        .unwrap();
        let cfg = SynthConfig::from_key_values(&kv).unwrap();
        assert_eq!(cfg.layout.n_members(), 52);
        assert_eq!(cfg.types.len(), 2);
        assert_eq!(cfg.types[0].bias, 1.5);
        assert_eq!(cfg.types[1].dispersion, 0.4);
        let ds = generate_synthetic(&cfg, cfg.seed).unwrap();
        assert_eq!(ds.cases().len(), 180);
    }

    #[test]
    fn config_errors() {
        let missing_seed = KeyValues::parse("stations = 6\ndays = 30\n").unwrap();
        assert!(matches!(SynthConfig::from_key_values(&missing_seed), Err(Error::Config(_))));
        let bad = KeyValues::parse("stations = 6\ndays = 30\nseed=1\ntypes=1\ndispersion_t0 = 2\nspread_t0 = 1\n").unwrap();
        assert!(SynthConfig::from_key_values(&bad).is_err());
        let mut cfg = small(1);
        cfg.stations = 0;
        assert!(generate_synthetic(&cfg, 1).is_err());
    }
}
