//! Truncated normal distribution with cut-off at zero, and its scoring rules.
//!
//! Every quantity that divides by `Φ(μ/σ)` is computed through tail ratios
//! built on `erfcx`, so the functions stay accurate when the location lies
//! many scales below zero and `Φ(μ/σ)` itself underflows.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{self, FRAC_1_SQRT_PI};
use crate::quadrature;

/// Below this standardized location the direct `Φ(α)` ratios are replaced
/// by their `erfcx` forms.
const TAIL_SWITCH: f64 = -5.0;

/// Location and scale of a zero-truncated normal `N₀(μ, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TnParams {
    /// Location of the underlying normal; any sign.
    pub location: f64,
    /// Scale of the underlying normal; strictly positive.
    pub scale: f64,
}

impl TnParams {
    pub fn new(location: f64, scale: f64) -> Result<Self> {
        let p = TnParams { location, scale };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.location.is_finite() {
            return Err(Error::domain(format!("non-finite location {}", self.location)));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::domain(format!("scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }

    /// Standardized location `μ/σ`.
    fn alpha(&self) -> f64 {
        self.location / self.scale
    }
}

/// Policy for log scores of observations outside the support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OutOfSupport {
    /// Return `+∞`, which keeps mean scores well-defined as a penalty.
    #[default]
    Infinite,
    /// Return a domain error.
    Error,
}

/// Tail ratios at a point `y ≥ 0`: `R = Φ(−z)/Φ(α)` and `Q = φ(z)/Φ(α)`.
#[derive(Debug, Clone, Copy)]
struct Ratios {
    z: f64,
    alpha: f64,
    r: f64,
    q: f64,
    /// `Φ(√2·α) / (√π·Φ(α)²)`
    k: f64,
    /// inverse Mills ratio `φ(α)/Φ(α)`
    lambda: f64,
}

impl Ratios {
    fn at(p: &TnParams, y: f64) -> Self {
        let alpha = p.alpha();
        let z = (y - p.location) / p.scale;
        if alpha >= TAIL_SWITCH {
            let phi_a = normal::cdf(alpha);
            Ratios {
                z,
                alpha,
                r: normal::cdf(-z) / phi_a,
                q: normal::pdf(z) / phi_a,
                k: normal::cdf(SQRT_2 * alpha) * FRAC_1_SQRT_PI / (phi_a * phi_a),
                lambda: normal::pdf(alpha) / phi_a,
            }
        } else {
            // here z ≥ −α > 5, so both erfcx arguments are positive
            let ea = normal::erfcx(-alpha * FRAC_1_SQRT_2);
            let ez = normal::erfcx(z * FRAC_1_SQRT_2);
            // exp(−(z² − α²)/2) with z² − α² = y(y − 2μ)/σ²
            let damp = (-0.5 * y * (y - 2.0 * p.location) / (p.scale * p.scale)).exp();
            Ratios {
                z,
                alpha,
                r: ez / ea * damp,
                q: (2.0 / PI).sqrt() * damp / ea,
                k: 2.0 * normal::erfcx(-alpha) * FRAC_1_SQRT_PI / (ea * ea),
                lambda: (2.0 / PI).sqrt() / ea,
            }
        }
    }
}

fn check_point(x: f64) -> Result<()> {
    if x.is_nan() {
        return Err(Error::domain("NaN argument"));
    }
    Ok(())
}

/// Density of `N₀(μ, σ²)` at `x`; zero below the cut-off.
pub fn tn_pdf(p: &TnParams, x: f64) -> Result<f64> {
    p.validate()?;
    check_point(x)?;
    if !x.is_finite() {
        return Err(Error::domain(format!("non-finite argument {x}")));
    }
    if x < 0.0 {
        return Ok(0.0);
    }
    if p.alpha() < TAIL_SWITCH {
        return Ok(Ratios::at(p, x).q / p.scale);
    }
    let z = (x - p.location) / p.scale;
    Ok((normal::ln_pdf(z) - p.scale.ln() - normal::ln_cdf(p.alpha())).exp())
}

/// Survival function `1 − F(x)` for `x ≥ 0`.
fn survival(p: &TnParams, x: f64) -> f64 {
    let alpha = p.alpha();
    let z = (x - p.location) / p.scale;
    if alpha >= TAIL_SWITCH {
        if z < 0.0 {
            1.0 - (normal::cdf(z) - normal::cdf(-alpha)) / normal::cdf(alpha)
        } else {
            normal::cdf(-z) / normal::cdf(alpha)
        }
    } else {
        Ratios::at(p, x).r
    }
    .clamp(0.0, 1.0)
}

fn cdf_unchecked(p: &TnParams, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    let alpha = p.alpha();
    let z = (x - p.location) / p.scale;
    if alpha >= TAIL_SWITCH && z < 0.0 {
        ((normal::cdf(z) - normal::cdf(-alpha)) / normal::cdf(alpha)).clamp(0.0, 1.0)
    } else {
        1.0 - survival(p, x)
    }
}

/// Distribution function of `N₀(μ, σ²)`. Exactly zero at and below the cut-off.
pub fn tn_cdf(p: &TnParams, x: f64) -> Result<f64> {
    p.validate()?;
    check_point(x)?;
    Ok(cdf_unchecked(p, x))
}

/// Quantile of `N₀(μ, σ²)` at level `tau ∈ (0, 1)`.
///
/// Uses the analytic inverse and falls back to bisection on the CDF when the
/// composition loses precision (far-negative `μ/σ`).
pub fn tn_quantile(p: &TnParams, tau: f64) -> Result<f64> {
    p.validate()?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain(format!("quantile level must lie in (0,1), got {tau}")));
    }
    let alpha = p.alpha();
    let analytic = if alpha >= 0.0 {
        let u = tau * normal::cdf(alpha) + normal::cdf(-alpha);
        p.location + p.scale * normal::quantile(u)
    } else {
        // upper-tail form: Φ(−z) = (1 − τ)·Φ(α)
        let ln_u = (1.0 - tau).ln() + normal::ln_cdf(alpha);
        if ln_u > -700.0 {
            p.location - p.scale * normal::quantile(ln_u.exp())
        } else {
            f64::NAN
        }
    };
    if analytic.is_finite() && analytic >= 0.0 {
        let err = cdf_unchecked(p, analytic) - tau;
        if err.abs() <= 1e-12 {
            return Ok(analytic);
        }
    }
    Ok(bisect_quantile(p, tau))
}

fn bisect_quantile(p: &TnParams, tau: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = p.location.max(0.0) + p.scale;
    while cdf_unchecked(p, hi) < tau {
        hi = 2.0 * hi + p.scale;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf_unchecked(p, mid) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn check_obs(obs: f64) -> Result<()> {
    if !obs.is_finite() {
        return Err(Error::domain(format!("non-finite observation {obs}")));
    }
    if obs < 0.0 {
        return Err(Error::domain(format!("negative observation {obs}")));
    }
    Ok(())
}

/// Closed-form CRPS of `N₀(μ, σ²)` against a non-negative observation.
///
/// With `z = (y − μ)/σ`, `α = μ/σ` and `p = Φ(α)`:
/// `σ·[ z·(1 − 2Φ(−z)/p) + 2φ(z)/p − Φ(√2α)/(√π·p²) ]`.
pub fn tn_crps(p: &TnParams, obs: f64) -> Result<f64> {
    p.validate()?;
    check_obs(obs)?;
    Ok(crps_unchecked(p, obs))
}

pub(crate) fn crps_unchecked(p: &TnParams, obs: f64) -> f64 {
    let t = Ratios::at(p, obs);
    let c = t.z * (1.0 - 2.0 * t.r) + 2.0 * t.q - t.k;
    (p.scale * c).max(0.0)
}

/// CRPS together with its partial derivatives with respect to location and scale.
pub fn tn_crps_gradient(p: &TnParams, obs: f64) -> Result<(f64, f64, f64)> {
    p.validate()?;
    check_obs(obs)?;
    Ok(crps_gradient_unchecked(p, obs))
}

pub(crate) fn crps_gradient_unchecked(p: &TnParams, obs: f64) -> (f64, f64, f64) {
    let t = Ratios::at(p, obs);
    let c = t.z * (1.0 - 2.0 * t.r) + 2.0 * t.q - t.k;
    let c_z = 1.0 - 2.0 * t.r;
    let c_alpha = 2.0 * t.lambda * (t.z * t.r - t.q - t.lambda + t.k);
    let d_loc = c_alpha - c_z;
    let d_scale = c - t.z * c_z - t.alpha * c_alpha;
    ((p.scale * c).max(0.0), d_loc, d_scale)
}

/// CRPS by numerical integration of `∫ (F(y) − 1{y ≥ obs})² dy`.
///
/// Independent of the closed form; used to certify it.
pub fn tn_crps_quadrature(p: &TnParams, obs: f64) -> Result<f64> {
    p.validate()?;
    check_obs(obs)?;
    let mu_plus = p.location.max(0.0);
    let upper = obs.max(mu_plus) + 40.0 * p.scale;
    // scale of the mass near zero when μ ≪ 0 (roughly exponential with mean σ/|α|)
    let eff = p.scale / p.alpha().abs().max(1.0);
    let mut breaks = vec![obs, mu_plus];
    let mut step = eff / 64.0;
    while step < upper {
        breaks.push(step);
        breaks.push(obs + step);
        breaks.push(p.location + step);
        breaks.push(p.location - step);
        step *= 2.0;
    }
    for k in -8..=8 {
        breaks.push(p.location + k as f64 * p.scale);
    }
    let integrand = |y: f64| {
        if y < obs {
            let f = cdf_unchecked(p, y);
            f * f
        } else {
            let s = survival(p, y);
            s * s
        }
    };
    Ok(quadrature::integrate(integrand, 0.0, upper, &breaks, 1e-11))
}

/// Negative log density at the observation.
///
/// Observations below the cut-off score `+∞` (see [`tn_log_score_with`] for
/// the strict variant).
pub fn tn_log_score(p: &TnParams, obs: f64) -> Result<f64> {
    tn_log_score_with(p, obs, OutOfSupport::Infinite)
}

pub fn tn_log_score_with(p: &TnParams, obs: f64, policy: OutOfSupport) -> Result<f64> {
    p.validate()?;
    if !obs.is_finite() {
        return Err(Error::domain(format!("non-finite observation {obs}")));
    }
    if obs < 0.0 {
        return match policy {
            OutOfSupport::Infinite => Ok(f64::INFINITY),
            OutOfSupport::Error => Err(Error::domain(format!("observation {obs} outside the support [0, ∞)"))),
        };
    }
    Ok(log_score_unchecked(p, obs))
}

pub(crate) fn log_score_unchecked(p: &TnParams, obs: f64) -> f64 {
    let z = (obs - p.location) / p.scale;
    p.scale.ln() - normal::ln_pdf(z) + normal::ln_cdf(p.alpha())
}

/// Log score and its partial derivatives with respect to location and scale.
pub(crate) fn log_score_gradient_unchecked(p: &TnParams, obs: f64) -> (f64, f64, f64) {
    let z = (obs - p.location) / p.scale;
    let alpha = p.alpha();
    let lambda = normal::inv_mills(alpha);
    let value = log_score_unchecked(p, obs);
    let d_loc = (lambda - z) / p.scale;
    let d_scale = (1.0 - z * z - alpha * lambda) / p.scale;
    (value, d_loc, d_scale)
}

/// CRPS of the empirical distribution of an ensemble.
///
/// `E|X − x| − ½·E|X − X′|` with `X` uniform over the members; the pairwise
/// term is evaluated on sorted members in `O(M log M)`.
pub fn ensemble_crps(members: &[f64], obs: f64) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::domain("empty ensemble"));
    }
    if !obs.is_finite() || members.iter().any(|m| !m.is_finite()) {
        return Err(Error::domain("non-finite ensemble member or observation"));
    }
    let m = members.len() as f64;
    let mut sorted = members.to_vec();
    sorted.sort_by(f64::total_cmp);
    let abs_err = sorted.iter().map(|x| (x - obs).abs()).sum::<f64>() / m;
    let spread = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - m - 1.0) * x)
        .sum::<f64>()
        * 2.0
        / (m * m);
    Ok((abs_err - 0.5 * spread).max(0.0))
}
