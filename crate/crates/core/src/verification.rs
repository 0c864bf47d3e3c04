//! Scores, calibration histograms and uniformity tests.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::distributions::{ensemble_crps, tn_cdf, tn_crps, tn_quantile, TnParams};
use crate::error::{Error, Result};

/// Central-interval level whose nominal coverage matches a 52-member ensemble range.
pub const DEFAULT_ALPHA: f64 = 2.0 / 53.0;
pub const DEFAULT_PIT_BINS: usize = 18;

/// Predictive CDF at the observation; exactly zero at `obs = 0`.
pub fn pit(p: &TnParams, obs: f64) -> Result<f64> {
    if obs < 0.0 || !obs.is_finite() {
        return Err(Error::domain(format!("observation {obs} outside [0, ∞)")));
    }
    if obs == 0.0 {
        p.validate()?;
        return Ok(0.0);
    }
    tn_cdf(p, obs)
}

/// Rank of `obs` among `members ∪ {obs}`, in `1..=M+1`.
///
/// Ties are broken uniformly at random using `tie_seed`.
pub fn verification_rank(members: &[f64], obs: f64, tie_seed: u64) -> usize {
    let below = members.iter().filter(|&&m| m < obs).count();
    let ties = members.iter().filter(|&&m| m == obs).count();
    if ties == 0 {
        return below + 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tie_seed);
    below + 1 + rng.random_range(0..=ties)
}

/// Equal-tailed central interval `(q(α/2), q(1 − α/2))`.
pub fn central_interval(p: &TnParams, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    Ok((tn_quantile(p, alpha / 2.0)?, tn_quantile(p, 1.0 - alpha / 2.0)?))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("alpha = {alpha} outside (0, 1)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub mean_crps: f64,
    /// Mean absolute error of the median.
    pub mae: f64,
    /// Percent of observations inside the central interval.
    pub coverage: f64,
    pub mean_width: f64,
    pub n_cases: usize,
    pub alpha: f64,
    /// Equal-width PIT histogram, or verification-rank counts for raw ensembles.
    pub pit_bins: Vec<usize>,
    pub metadata: BTreeMap<String, String>,
}

impl VerificationReport {
    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    /// One summary row: `mean_crps,mae,coverage,mean_width,n_cases,alpha`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["mean_crps", "mae", "coverage", "mean_width", "n_cases", "alpha"])?;
        w.write_record([
            self.mean_crps.to_string(),
            self.mae.to_string(),
            self.coverage.to_string(),
            self.mean_width.to_string(),
            self.n_cases.to_string(),
            self.alpha.to_string(),
        ])?;
        w.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }

    /// Histogram table `bin,lower,upper,count` over `[0, 1]`.
    pub fn write_histogram_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_histogram(&self.pit_bins, writer)
    }
}

fn write_histogram<W: Write>(bins: &[usize], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bin", "lower", "upper", "count"])?;
    let b = bins.len() as f64;
    for (i, c) in bins.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            (i as f64 / b).to_string(),
            ((i + 1) as f64 / b).to_string(),
            c.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<histogram>", e))?;
    Ok(())
}

/// Counts of PIT values in `bins` equal-width bins on `[0, 1]`.
pub fn pit_histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut out = vec![0; bins.max(1)];
    for &u in values {
        let i = ((u * bins as f64).floor() as usize).min(bins - 1);
        out[i] += 1;
    }
    out
}

struct CaseScores {
    crps: f64,
    abs_err: f64,
    covered: bool,
    width: f64,
    pit: f64,
}

/// Scores of predictive distributions against their observations.
pub fn report(predictions: &[TnParams], observations: &[f64], alpha: f64, pit_bins: usize) -> Result<VerificationReport> {
    if predictions.is_empty() {
        return Err(Error::domain("verification needs at least one case"));
    }
    if predictions.len() != observations.len() {
        return Err(Error::domain("predictions and observations differ in length"));
    }
    if pit_bins == 0 {
        return Err(Error::domain("at least one PIT bin is required"));
    }
    check_alpha(alpha)?;
    let scores = predictions
        .par_iter()
        .zip(observations)
        .map(|(p, &x)| {
            let (lo, hi) = central_interval(p, alpha)?;
            Ok(CaseScores {
                crps: tn_crps(p, x)?,
                abs_err: (tn_quantile(p, 0.5)? - x).abs(),
                covered: lo <= x && x <= hi,
                width: hi - lo,
                pit: pit(p, x)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = scores.len() as f64;
    let pits: Vec<f64> = scores.iter().map(|s| s.pit).collect();
    let mut metadata = BTreeMap::new();
    metadata.insert("zero_observation_pit".into(), "0 (not randomized)".into());
    metadata.insert(
        "zero_observations".into(),
        observations.iter().filter(|&&x| x == 0.0).count().to_string(),
    );
    Ok(VerificationReport {
        mean_crps: scores.iter().map(|s| s.crps).sum::<f64>() / n,
        mae: scores.iter().map(|s| s.abs_err).sum::<f64>() / n,
        coverage: 100.0 * scores.iter().filter(|s| s.covered).count() as f64 / n,
        mean_width: scores.iter().map(|s| s.width).sum::<f64>() / n,
        n_cases: scores.len(),
        alpha,
        pit_bins: pit_histogram(&pits, pit_bins),
        metadata,
    })
}

/// Mean absolute error of the predictive quantile at level `tau`.
pub fn quantile_mae(predictions: &[TnParams], observations: &[f64], tau: f64) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != observations.len() {
        return Err(Error::domain("need aligned, nonempty predictions and observations"));
    }
    let errs = predictions
        .par_iter()
        .zip(observations)
        .map(|(p, &x)| Ok((tn_quantile(p, tau)? - x).abs()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Verification rank counts, `M + 1` bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankHistogram {
    pub bins: Vec<usize>,
}

impl RankHistogram {
    pub fn total(&self) -> usize {
        self.bins.iter().sum()
    }

    /// Both end bins exceed `factor` times the mean bin count.
    pub fn is_u_shaped(&self, factor: f64) -> bool {
        let mean = self.total() as f64 / self.bins.len() as f64;
        let (first, last) = (self.bins[0] as f64, self.bins[self.bins.len() - 1] as f64);
        first > factor * mean && last > factor * mean
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["rank", "count"])?;
        for (i, c) in self.bins.iter().enumerate() {
            w.write_record([(i + 1).to_string(), c.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<ranks>", e))?;
        Ok(())
    }
}

/// Empirical quantile of sorted members with plotting positions `k/(M+1)`,
/// linear between order statistics and constant beyond the extremes.
pub fn ensemble_quantile(sorted: &[f64], tau: f64) -> f64 {
    let m = sorted.len();
    let pos = tau * (m + 1) as f64;
    if pos <= 1.0 {
        return sorted[0];
    }
    if pos >= m as f64 {
        return sorted[m - 1];
    }
    let k = pos.floor() as usize;
    let frac = pos - k as f64;
    sorted[k - 1] + frac * (sorted[k] - sorted[k - 1])
}

fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

/// Scores of the raw ensemble, treating members as an empirical distribution.
///
/// Case `i` breaks rank ties with seed `tie_seed + i`.
pub fn ensemble_report(members: &[&[f64]], observations: &[f64], alpha: f64, tie_seed: u64) -> Result<(VerificationReport, RankHistogram)> {
    if members.is_empty() || members.len() != observations.len() {
        return Err(Error::domain("need aligned, nonempty ensembles and observations"));
    }
    check_alpha(alpha)?;
    let m = members[0].len();
    if m == 0 || members.iter().any(|e| e.len() != m) {
        return Err(Error::domain("ensembles must share a positive member count"));
    }
    let rows = members
        .par_iter()
        .zip(observations)
        .enumerate()
        .map(|(i, (e, &x))| {
            let mut sorted = e.to_vec();
            sorted.sort_by(f64::total_cmp);
            let (lo, hi) = (
                ensemble_quantile(&sorted, alpha / 2.0),
                ensemble_quantile(&sorted, 1.0 - alpha / 2.0),
            );
            Ok((
                ensemble_crps(e, x)?,
                (median(&sorted) - x).abs(),
                lo <= x && x <= hi,
                hi - lo,
                verification_rank(e, x, tie_seed.wrapping_add(i as u64)),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len() as f64;
    let mut bins = vec![0; m + 1];
    rows.iter().for_each(|r| bins[r.4 - 1] += 1);
    let mut metadata = BTreeMap::new();
    metadata.insert("pit_bins".into(), "verification rank counts".into());
    metadata.insert("tie_seed".into(), tie_seed.to_string());
    metadata.insert("interval".into(), "member quantiles at plotting positions k/(M+1)".into());
    let rep = VerificationReport {
        mean_crps: rows.iter().map(|r| r.0).sum::<f64>() / n,
        mae: rows.iter().map(|r| r.1).sum::<f64>() / n,
        coverage: 100.0 * rows.iter().filter(|r| r.2).count() as f64 / n,
        mean_width: rows.iter().map(|r| r.3).sum::<f64>() / n,
        n_cases: rows.len(),
        alpha,
        pit_bins: bins.clone(),
        metadata,
    };
    Ok((rep, RankHistogram { bins }))
}

/// Result of a goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

impl TestOutcome {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// One-sample Kolmogorov–Smirnov test against U(0, 1), asymptotic p-value.
pub fn ks_uniform(values: &[f64]) -> Result<TestOutcome> {
    if values.is_empty() {
        return Err(Error::domain("KS test of an empty sample"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &u)| ((i + 1) as f64 / n - u).max(u - i as f64 / n))
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    Ok(TestOutcome {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
    })
}

/// `P(K > λ)` for the Kolmogorov distribution.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson χ² test of equal expected counts.
pub fn chi_square_uniform(counts: &[usize]) -> Result<TestOutcome> {
    if counts.len() < 2 {
        return Err(Error::domain("χ² test needs at least two bins"));
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::domain("χ² test of empty counts"));
    }
    let expected = total as f64 / counts.len() as f64;
    let stat = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum::<f64>();
    let dist = ChiSquared::new((counts.len() - 1) as f64).map_err(|e| Error::domain(e.to_string()))?;
    Ok(TestOutcome {
        statistic: stat,
        p_value: 1.0 - dist.cdf(stat),
    })
}
