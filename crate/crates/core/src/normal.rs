//! Standard normal special functions with tail-safe variants.
//!
//! `erfc` comes from `libm`. The quantile starts from the `statrs` inverse
//! error function and is polished with Halley steps on the accurate CDF. The
//! scaled complementary error function `erfcx(x) = exp(x²)·erfc(x)` is
//! evaluated here so that ratios of far-tail probabilities never underflow.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use statrs::function::erf::erfc_inv;

pub(crate) const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
pub(crate) const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Natural log of the standard normal CDF, accurate deep in the lower tail.
pub fn ln_cdf(x: f64) -> f64 {
    if x < -5.0 {
        (0.5 * erfcx(-x * FRAC_1_SQRT_2)).ln() - 0.5 * x * x
    } else if x < 0.0 {
        cdf(x).ln()
    } else {
        (-cdf(-x)).ln_1p()
    }
}

/// Standard normal quantile.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    // work in the lower tail, where Φ is accurate to full relative precision
    let (q, sign) = if p > 0.5 { (1.0 - p, -1.0) } else { (p, 1.0) };
    let mut x = -SQRT_2 * erfc_inv(2.0 * q);
    for _ in 0..3 {
        let dens = pdf(x);
        if !(dens > 0.0) {
            break;
        }
        let e = (cdf(x) - q) / dens;
        let step = e / (1.0 + 0.5 * x * e);
        if !step.is_finite() {
            break;
        }
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    sign * x
}

/// Scaled complementary error function `exp(x²)·erfc(x)`.
///
/// Only non-negative arguments are needed by this crate; negative arguments
/// use the reflection `2·exp(x²) − erfcx(−x)` and overflow for `x < −26`.
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 5.0 {
        return (x * x).exp() * libm::erfc(x);
    }
    // Laplace continued fraction, evaluated bottom-up:
    // erfc(x) = exp(-x²)/√π · 1/(x + (1/2)/(x + (2/2)/(x + (3/2)/(x + ...))))
    let mut tail = x;
    for k in (1..=60).rev() {
        tail = x + (k as f64 * 0.5) / tail;
    }
    FRAC_1_SQRT_PI / tail
}

/// Inverse Mills ratio `φ(x)/Φ(x)`.
pub fn inv_mills(x: f64) -> f64 {
    if x < -5.0 {
        (2.0 / PI).sqrt() / erfcx(-x * FRAC_1_SQRT_2)
    } else {
        pdf(x) / cdf(x)
    }
}

/// `ln φ(x)`.
pub fn ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

#[cfg(test)]
mod tests {
    use super::*;

    // Values from standard normal tables (Abramowitz & Stegun 26.2, high-precision reprints).
    const CDF_TABLE: &[(f64, f64)] = &[
        (0.0, 0.5),
        (0.5, 0.691_462_461_274_013_1),
        (1.0, 0.841_344_746_068_542_9),
        (1.96, 0.975_002_104_851_779_6),
        (3.0, 0.998_650_101_968_369_9),
        (-1.0, 0.158_655_253_931_457_05),
        (-3.0, 1.349_898_031_630_094_6e-3),
        (-5.0, 2.866_515_718_791_939e-7),
        (-10.0, 7.619_853_024_160_527e-24),
        (-20.0, 2.753_624_118_606_233_6e-89),
    ];

    #[test]
    fn cdf_matches_table() {
        for &(x, want) in CDF_TABLE {
            let got = cdf(x);
            assert!(((got - want) / want).abs() < 1e-12, "Φ({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn quantile_matches_table() {
        for &(x, p) in CDF_TABLE.iter().filter(|(x, _)| x.abs() <= 5.0) {
            let got = quantile(p);
            let tol = 1e-12 * x.abs().max(1.0);
            assert!((got - x).abs() < tol, "Φ⁻¹({p}) = {got}, want {x}");
        }
        assert!((quantile(0.75) - 0.674_489_750_196_081_7).abs() < 1e-12);
    }

    #[test]
    fn erfcx_branches_agree() {
        // continued fraction vs direct product where both are accurate
        for x in [5.0f64, 6.0, 8.0, 12.0, 20.0] {
            let direct = (x * x).exp() * libm::erfc(x);
            let cf = erfcx(x);
            assert!(((cf - direct) / direct).abs() < 1e-12, "x={x}: {cf} vs {direct}");
        }
        // large-x asymptote 1/(x√π)
        let x = 1e4;
        assert!((erfcx(x) * x / FRAC_1_SQRT_PI - 1.0).abs() < 1e-8);
    }

    #[test]
    fn ln_cdf_deep_tail() {
        // ln Φ(-40) ≈ -804.6084420137538
        assert!((ln_cdf(-40.0) + 804.608_442_013_753_8).abs() < 1e-9);
        for &(x, p) in CDF_TABLE {
            assert!((ln_cdf(x) - p.ln()).abs() < 1e-11);
        }
    }

    #[test]
    fn inv_mills_is_continuous_at_switch() {
        let a = inv_mills(-5.0 - 1e-9);
        let b = inv_mills(-5.0 + 1e-9);
        assert!((a - b).abs() < 1e-7);
    }
}
