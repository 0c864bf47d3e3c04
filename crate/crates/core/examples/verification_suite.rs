//! PIT and rank histograms, coverage and uniformity tests for calibrated and raw forecasts.

use semilocal_emos::dataset::{generate_synthetic, StationType, SynthConfig};
use semilocal_emos::estimation::predictive;
use semilocal_emos::model::{build_formulation, EnsembleLayout, Variant};
use semilocal_emos::verification::{chi_square_uniform, ensemble_report, ks_uniform, pit, report, DEFAULT_ALPHA, DEFAULT_PIT_BINS};

fn bars(counts: &[usize]) -> String {
    let max = *counts.iter().max().unwrap_or(&1) as f64;
    counts
        .iter()
        .map(|&c| [' ', '.', ':', '-', '=', '#'][(5.0 * c as f64 / max).round() as usize])
        .collect()
}

fn main() -> semilocal_emos::Result<()> {
    let ty = StationType::new("a");
    let ds = generate_synthetic(&SynthConfig::new(50, 200, EnsembleLayout::glameps(), vec![ty.clone()], 5), 5)?;
    let form = build_formulation(Variant::Simplified, ds.layout())?;
    let truth = ty.true_coefficients();
    let params = ds
        .cases()
        .iter()
        .map(|c| predictive(&form, &truth, &c.members))
        .collect::<semilocal_emos::Result<Vec<_>>>()?;
    let obs: Vec<f64> = ds.cases().iter().map(|c| c.observation).collect();

    let rep = report(&params, &obs, DEFAULT_ALPHA, DEFAULT_PIT_BINS)?;
    let pits = params
        .iter()
        .zip(&obs)
        .map(|(p, &y)| pit(p, y))
        .collect::<semilocal_emos::Result<Vec<_>>>()?;
    let ks = ks_uniform(&pits)?;
    println!(
        "true model   crps {:.4}  coverage {:.1}%  width {:.2}  KS p {:.3}",
        rep.mean_crps, rep.coverage, rep.mean_width, ks.p_value
    );
    println!("  PIT   |{}|", bars(&rep.pit_bins));

    let members: Vec<&[f64]> = ds.cases().iter().map(|c| c.members.as_slice()).collect();
    let (raw, ranks) = ensemble_report(&members, &obs, DEFAULT_ALPHA, 0)?;
    let chi = chi_square_uniform(&ranks.bins)?;
    println!(
        "raw ensemble crps {:.4}  coverage {:.1}%  width {:.2}  chi2 p {:.1e}",
        raw.mean_crps, raw.coverage, raw.mean_width, chi.p_value
    );
    println!(
        "  ranks |{}| ({} bins, U-shaped: {})",
        bars(&ranks.bins),
        ranks.bins.len(),
        ranks.is_u_shaped(1.5)
    );
    Ok(())
}
