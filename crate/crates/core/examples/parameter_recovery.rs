//! Fit the simplified model to data generated from known coefficients.

use std::time::Instant;

use semilocal_emos::dataset::{generate_synthetic, ForecastCase, StationType, SynthConfig};
use semilocal_emos::estimation::{fit, FitConfig, Objective};
use semilocal_emos::model::{build_formulation, EnsembleLayout, Variant};

fn main() -> semilocal_emos::Result<()> {
    let ty = StationType {
        bias: 0.5,
        slope: 1.1,
        noise: 0.8,
        spread: 1.3,
        ..StationType::new("a")
    };
    let cfg = SynthConfig::new(50, 200, EnsembleLayout::exchangeable(8), vec![ty.clone()], 42);
    let ds = generate_synthetic(&cfg, 42)?;
    let form = build_formulation(Variant::Simplified, ds.layout())?;
    let cases: Vec<&ForecastCase> = ds.cases().iter().collect();
    let truth = ty.true_coefficients();
    println!(
        "truth     a0 {:+.4}  a1 {:.4}  b0 {:.4}  b1 {:.4}",
        truth.intercept, truth.group_coeffs[0], truth.scale_intercept, truth.scale_slope
    );

    for objective in [Objective::Crps, Objective::LogScore] {
        let t = Instant::now();
        let r = fit(
            &form,
            &cases,
            &FitConfig {
                objective,
                ..FitConfig::default()
            },
        )?;
        let c = &r.coefficients;
        println!(
            "{:<9} a0 {:+.4}  a1 {:.4}  b0 {:.4}  b1 {:.4}  ({}, {} iterations, {:.0?})",
            objective.to_string(),
            c.intercept,
            c.group_coeffs[0],
            c.scale_intercept,
            c.scale_slope,
            r.status,
            r.diagnostics.iterations,
            t.elapsed()
        );
    }
    Ok(())
}
