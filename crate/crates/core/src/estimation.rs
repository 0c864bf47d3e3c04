//! Minimum-score estimation of EMOS coefficients over training sets.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::StationClusters;
use crate::dataset::{Dataset, ForecastCase, WindowSpec};
use crate::distributions::{crps_gradient_unchecked, log_score_gradient_unchecked, TnParams};
use crate::error::{Error, Result};
use crate::model::{ensemble_stats, EmosCoefficients, ModelFormulation};
use crate::optim::{minimize, BfgsOptions};
use crate::training_sets::{pools_for_date, training_set, Pool, PoolKey, Pooling};

/// Lower bound on the squared predictive scale inside the objective.
pub const SCALE2_FLOOR: f64 = 1e-6;

/// Smallest starting value of the square-root scale parameters, so that a
/// start at `b = 0` is not a stationary point.
const MIN_START_ROOT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Objective {
    #[default]
    Crps,
    LogScore,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Crps => "crps",
            Objective::LogScore => "log_score",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "crps" => Ok(Objective::Crps),
            "log_score" | "logs" | "ml" => Ok(Objective::LogScore),
            other => Err(Error::Config(format!("unknown objective '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub objective: Objective,
    /// Convergence threshold on the objective improvement per iteration.
    pub tolerance: f64,
    pub max_iter: usize,
    pub warm_start: Option<EmosCoefficients>,
    /// Starting point when there is no warm start; the formulation default if unset.
    pub default_init: Option<EmosCoefficients>,
    /// Constrain `a₀…a_m` to be non-negative (squared reparameterization).
    pub nonnegative_location: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            objective: Objective::Crps,
            tolerance: 1e-8,
            max_iter: 5000,
            warm_start: None,
            default_init: None,
            nonnegative_location: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    FallbackUsed,
    Failed,
}

impl fmt::Display for FitStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitStatus::Converged => "converged",
            FitStatus::FallbackUsed => "fallback_used",
            FitStatus::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub n_cases: usize,
    /// Share of training cases whose squared scale sits at the floor.
    pub floor_fraction: f64,
    /// Objective at the (last tried) starting point.
    pub initial_objective: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coefficients: EmosCoefficients,
    pub objective: f64,
    pub status: FitStatus,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    /// Whether the coefficients may be used for prediction.
    pub fn is_usable(&self) -> bool {
        self.status != FitStatus::Failed
    }
}

/// Predictive distribution with the squared scale floored at [`SCALE2_FLOOR`].
pub fn predictive(formulation: &ModelFormulation, coeffs: &EmosCoefficients, forecast: &[f64]) -> Result<TnParams> {
    coeffs.validate(formulation.n_groups())?;
    let x = formulation.predictors(forecast)?;
    let (_, var) = ensemble_stats(forecast)?;
    let location = coeffs.intercept + coeffs.group_coeffs.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>();
    let scale2 = (coeffs.scale_intercept + coeffs.scale_slope * var).max(SCALE2_FLOOR);
    TnParams::new(location, scale2.sqrt())
}

/// Training data in the optimizer's scaled coordinates.
///
/// Predictor columns are divided by their root mean square and the ensemble
/// variance by its mean, which keeps the Hessian well conditioned whether
/// the link uses group sums or the ensemble mean.
struct Design {
    m: usize,
    x: Vec<f64>,
    var: Vec<f64>,
    obs: Vec<f64>,
    col_scale: Vec<f64>,
    var_scale: f64,
    /// Location parameters enter squared.
    nonneg: bool,
}

impl Design {
    fn new(formulation: &ModelFormulation, cases: &[&ForecastCase]) -> Result<Self> {
        let m = formulation.n_groups();
        let n = cases.len();
        let mut x = Vec::with_capacity(n * m);
        let mut var = Vec::with_capacity(n);
        let mut obs = Vec::with_capacity(n);
        for c in cases {
            x.extend(formulation.predictors(&c.members)?);
            var.push(ensemble_stats(&c.members)?.1);
            obs.push(c.observation);
        }
        let col_scale: Vec<f64> = (0..m)
            .map(|k| {
                let rms = ((0..n).map(|i| x[i * m + k].powi(2)).sum::<f64>() / n.max(1) as f64).sqrt();
                if rms > 0.0 && rms.is_finite() {
                    rms
                } else {
                    1.0
                }
            })
            .collect();
        for row in x.chunks_mut(m.max(1)) {
            row.iter_mut().zip(&col_scale).for_each(|(v, s)| *v /= s);
        }
        let mean_var = var.iter().sum::<f64>() / n.max(1) as f64;
        let var_scale = if mean_var > 0.0 { mean_var } else { 1.0 };
        var.iter_mut().for_each(|v| *v /= var_scale);
        Ok(Design {
            m,
            x,
            var,
            obs,
            col_scale,
            var_scale,
            nonneg: false,
        })
    }

    fn len(&self) -> usize {
        self.obs.len()
    }

    fn to_params(&self, c: &EmosCoefficients) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.m + 3);
        u.push(c.intercept);
        u.extend(c.group_coeffs.iter().zip(&self.col_scale).map(|(a, s)| a * s));
        if self.nonneg {
            u.iter_mut().for_each(|v| *v = v.max(0.0).sqrt().max(MIN_START_ROOT));
        }
        u.push(c.scale_intercept.max(0.0).sqrt().max(MIN_START_ROOT));
        u.push((c.scale_slope.max(0.0) * self.var_scale).sqrt().max(MIN_START_ROOT));
        u
    }

    fn location_coeffs(&self, u: &[f64]) -> Vec<f64> {
        u[..=self.m].iter().map(|&v| if self.nonneg { v * v } else { v }).collect()
    }

    fn to_coefficients(&self, u: &[f64]) -> EmosCoefficients {
        let m = self.m;
        let a = self.location_coeffs(u);
        EmosCoefficients {
            intercept: a[0],
            group_coeffs: a[1..].iter().zip(&self.col_scale).map(|(v, s)| v / s).collect(),
            scale_intercept: u[m + 1] * u[m + 1],
            scale_slope: u[m + 2] * u[m + 2] / self.var_scale,
        }
    }

    /// Mean score and its gradient; returns the value and the floored count.
    fn eval(&self, u: &[f64], grad: Option<&mut [f64]>, objective: Objective) -> (f64, usize) {
        let m = self.m;
        let (c0, c1) = (u[m + 1], u[m + 2]);
        let mut total = 0.0;
        let mut floored = 0;
        let mut g = vec![0.0; m + 3];
        let a = self.location_coeffs(u);
        for i in 0..self.len() {
            let row = &self.x[i * m..(i + 1) * m];
            let mu = a[0] + a[1..].iter().zip(row).map(|(a, v)| a * v).sum::<f64>();
            let raw = c0 * c0 + c1 * c1 * self.var[i];
            let at_floor = !(raw >= SCALE2_FLOOR);
            let sigma = if at_floor { SCALE2_FLOOR.sqrt() } else { raw.sqrt() };
            floored += usize::from(at_floor);
            let p = TnParams {
                location: mu,
                scale: sigma,
            };
            let (v, d_mu, d_sigma) = match objective {
                Objective::Crps => crps_gradient_unchecked(&p, self.obs[i]),
                Objective::LogScore => log_score_gradient_unchecked(&p, self.obs[i]),
            };
            total += v;
            g[0] += d_mu;
            g[1..=m].iter_mut().zip(row).for_each(|(gk, xk)| *gk += d_mu * xk);
            if !at_floor {
                g[m + 1] += d_sigma * c0 / sigma;
                g[m + 2] += d_sigma * c1 * self.var[i] / sigma;
            }
        }
        if self.nonneg {
            g[..=m].iter_mut().zip(u).for_each(|(gk, v)| *gk *= 2.0 * v);
        }
        let n = self.len() as f64;
        if let Some(out) = grad {
            out.iter_mut().zip(&g).for_each(|(o, v)| *o = v / n);
        }
        let mean = total / n;
        (if mean.is_finite() { mean } else { f64::INFINITY }, floored)
    }
}

/// Mean score of the predictive distributions over the cases.
///
/// Invalid coefficients give `+∞`.
pub fn mean_objective(
    formulation: &ModelFormulation,
    coeffs: &EmosCoefficients,
    cases: &[&ForecastCase],
    objective: Objective,
) -> Result<f64> {
    if cases.is_empty() {
        return Err(Error::domain("mean objective over an empty training set"));
    }
    if coeffs.validate(formulation.n_groups()).is_err() {
        return Ok(f64::INFINITY);
    }
    let design = Design::new(formulation, cases)?;
    let mut u = design.to_params(coeffs);
    // exact square roots, without the starting-point guard
    u[design.m + 1] = coeffs.scale_intercept.sqrt();
    u[design.m + 2] = (coeffs.scale_slope * design.var_scale).sqrt();
    Ok(design.eval(&u, None, objective).0)
}

struct Attempt {
    coefficients: EmosCoefficients,
    objective: f64,
    ok: bool,
    diagnostics: FitDiagnostics,
}

fn attempt(design: &Design, init: &EmosCoefficients, config: &FitConfig) -> Attempt {
    let u0 = design.to_params(init);
    let initial = design.eval(&u0, None, config.objective).0;
    let out = minimize(
        |u, g| design.eval(u, Some(g), config.objective).0,
        &u0,
        &BfgsOptions {
            tolerance: config.tolerance,
            max_iter: config.max_iter,
        },
    );
    let coefficients = design.to_coefficients(&out.x);
    let floor_fraction = design.eval(&out.x, None, config.objective).1 as f64 / design.len() as f64;
    let mut problems = Vec::new();
    if !out.value.is_finite() {
        problems.push("non-finite objective".to_string());
    }
    if !out.converged {
        problems.push(format!("no convergence in {} iterations", out.iterations));
    }
    if floor_fraction > 0.5 {
        problems.push(format!("scale at floor for {:.0}% of cases", 100.0 * floor_fraction));
    }
    if let Err(e) = coefficients.validate(design.m) {
        problems.push(e.to_string());
    }
    Attempt {
        ok: problems.is_empty(),
        objective: out.value,
        diagnostics: FitDiagnostics {
            iterations: out.iterations,
            gradient_norm: out.gradient_norm,
            n_cases: design.len(),
            floor_fraction,
            initial_objective: initial,
            message: problems.join("; "),
        },
        coefficients,
    }
}

fn fallback(formulation: &ModelFormulation, cases: &[&ForecastCase], config: &FitConfig, mut diagnostics: FitDiagnostics) -> FitResult {
    let default = || config.default_init.clone().unwrap_or_else(|| formulation.default_coefficients());
    match &config.warm_start {
        Some(w) => {
            let objective = if cases.is_empty() {
                f64::NAN
            } else {
                mean_objective(formulation, w, cases, config.objective).unwrap_or(f64::INFINITY)
            };
            diagnostics.message = format!("fallback to preceding coefficients: {}", diagnostics.message);
            FitResult {
                coefficients: w.clone(),
                objective,
                status: FitStatus::FallbackUsed,
                diagnostics,
            }
        }
        None => FitResult {
            coefficients: default(),
            objective: f64::NAN,
            status: FitStatus::Failed,
            diagnostics,
        },
    }
}

/// Minimize the mean score over the training cases.
///
/// Starts from the warm start if given, else the default initialization; a
/// failed warm-started fit is retried from the default. When every attempt
/// fails, or the training set has fewer cases than parameters, the warm
/// start is returned as `FallbackUsed`, or `Failed` without one.
pub fn fit(formulation: &ModelFormulation, cases: &[&ForecastCase], config: &FitConfig) -> Result<FitResult> {
    if !(config.tolerance > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    if cases.len() < formulation.n_params() {
        let diagnostics = FitDiagnostics {
            n_cases: cases.len(),
            message: format!("{} cases for {} parameters", cases.len(), formulation.n_params()),
            ..Default::default()
        };
        return Ok(fallback(formulation, cases, config, diagnostics));
    }
    let design = Design {
        nonneg: config.nonnegative_location,
        ..Design::new(formulation, cases)?
    };
    let default = config.default_init.clone().unwrap_or_else(|| formulation.default_coefficients());
    let mut inits = Vec::new();
    if let Some(w) = &config.warm_start {
        inits.push(w.clone());
    }
    if config.warm_start.as_ref() != Some(&default) {
        inits.push(default);
    }
    let mut last = None;
    for init in &inits {
        let a = attempt(&design, init, config);
        if a.ok {
            return Ok(FitResult {
                coefficients: a.coefficients,
                objective: a.objective,
                status: FitStatus::Converged,
                diagnostics: a.diagnostics,
            });
        }
        last = Some(a);
    }
    let a = last.expect("at least one start");
    let mut out = fallback(formulation, cases, config, a.diagnostics);
    if out.status == FitStatus::Failed && a.coefficients.validate(design.m).is_ok() {
        out.coefficients = a.coefficients;
        out.objective = a.objective;
    }
    Ok(out)
}

/// One pool's fit on one date.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedFit {
    pub date: NaiveDate,
    pub pool: Pool,
    pub n_cases: usize,
    pub result: FitResult,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitSequence {
    pub fits: Vec<DatedFit>,
    pub clusters: Vec<StationClusters>,
    /// Dates on which no pool could be formed, with the reason.
    pub skipped_dates: Vec<(NaiveDate, String)>,
}

impl FitSequence {
    pub fn count(&self, status: FitStatus) -> usize {
        self.fits.iter().filter(|f| f.result.status == status).count()
    }

    /// Share of fits that reused preceding coefficients.
    pub fn fallback_rate(&self) -> f64 {
        if self.fits.is_empty() {
            return 0.0;
        }
        self.count(FitStatus::FallbackUsed) as f64 / self.fits.len() as f64
    }

    /// CSV `date,pool_id,status,a0,…,am,b0,b1,objective`.
    pub fn write_csv<W: Write>(&self, ds: &Dataset, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let m = self.fits.first().map_or(1, |f| f.result.coefficients.group_coeffs.len());
        let mut header = vec!["date".to_string(), "pool_id".into(), "status".into()];
        header.extend((0..=m).map(|k| format!("a{k}")));
        header.extend(["b0".into(), "b1".into(), "objective".into()]);
        w.write_record(&header)?;
        for f in &self.fits {
            let c = &f.result.coefficients;
            let mut row = vec![
                f.date.to_string(),
                f.pool.key.label(ds),
                f.result.status.to_string(),
                c.intercept.to_string(),
            ];
            row.extend(c.group_coeffs.iter().map(f64::to_string));
            row.extend([
                c.scale_intercept.to_string(),
                c.scale_slope.to_string(),
                f.result.objective.to_string(),
            ]);
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<fits>", e))?;
        Ok(())
    }
}

/// Fit every pool on every date in order.
///
/// Each pool's chain (see [`PoolKey`]) is warm-started from its last
/// successful coefficients, which also serve as the fallback. Pools within
/// a date are fitted concurrently; results do not depend on scheduling.
pub fn fit_sequence(
    pooling: &Pooling,
    formulation: &ModelFormulation,
    ds: &Dataset,
    dates: &[NaiveDate],
    window: &WindowSpec,
    config: &FitConfig,
) -> Result<FitSequence> {
    if dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("verification dates must be strictly increasing"));
    }
    let mut chain: BTreeMap<PoolKey, EmosCoefficients> = BTreeMap::new();
    let mut seq = FitSequence::default();
    for &date in dates {
        let dp = match pools_for_date(pooling, ds, date, window) {
            Ok(dp) => dp,
            Err(Error::EmptyWindow(msg)) => {
                seq.skipped_dates.push((date, msg));
                continue;
            }
            Err(e) => return Err(e),
        };
        let fits = dp
            .pools
            .into_par_iter()
            .map(|pool| {
                let ts = training_set(ds, &pool.stations, date, window);
                let cases = ts.cases(ds);
                let cfg = FitConfig {
                    warm_start: chain.get(&pool.key).cloned(),
                    ..config.clone()
                };
                let result = fit(formulation, &cases, &cfg)?;
                Ok(DatedFit {
                    date,
                    n_cases: cases.len(),
                    pool,
                    result,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for f in &fits {
            if f.result.status == FitStatus::Converged {
                chain.insert(f.pool.key, f.result.coefficients.clone());
            }
        }
        seq.fits.extend(fits);
        seq.clusters.extend(dp.clusters);
    }
    Ok(seq)
}
