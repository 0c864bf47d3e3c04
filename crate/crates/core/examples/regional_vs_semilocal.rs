//! Compare training-set regimes on stations of three different types.

use semilocal_emos::clustering::FeatureKind;
use semilocal_emos::dataset::{generate_synthetic, StationType, SynthConfig, WindowSpec};
use semilocal_emos::model::EnsembleLayout;
use semilocal_emos::pipeline::{raw_ensemble, run, RegimeKind, RunConfig};
use semilocal_emos::similarity::DistanceKind;

fn main() -> semilocal_emos::Result<()> {
    let types = [(1.5, 0.9, 0.5, 1.0, 4.0), (-1.0, 1.1, 1.5, 0.5, 6.0), (0.0, 0.7, 0.8, 1.5, 5.0)]
        .iter()
        .enumerate()
        .map(|(i, &(bias, slope, noise, spread, climate))| StationType {
            bias,
            slope,
            noise,
            spread,
            climate,
            dispersion: 0.5,
            ..StationType::new(format!("t{i}"))
        })
        .collect();
    let ds = generate_synthetic(&SynthConfig::new(60, 200, EnsembleLayout::exchangeable(8), types, 7), 7)?;

    let base = RunConfig {
        window: WindowSpec::new(80),
        ..RunConfig::new("", "")
    };
    let (raw, _) = raw_ensemble(&base, &ds)?;
    println!("{:<22} {:>7} {:>7} {:>9} {:>7}", "regime", "crps", "mae", "coverage", "width");
    println!(
        "{:<22} {:>7.4} {:>7.4} {:>8.1}% {:>7.3}",
        "raw ensemble", raw.mean_crps, raw.mae, raw.coverage, raw.mean_width
    );

    let runs = [
        (
            "regional",
            RunConfig {
                regime: RegimeKind::Regional,
                ..base.clone()
            },
        ),
        (
            "local",
            RunConfig {
                regime: RegimeKind::Local,
                ..base.clone()
            },
        ),
        (
            "distance d1 L=10",
            RunConfig {
                regime: RegimeKind::Distance,
                distance: DistanceKind::Location,
                l: 10,
                ..base.clone()
            },
        ),
        (
            "distance d4 L=10",
            RunConfig {
                regime: RegimeKind::Distance,
                distance: DistanceKind::Combined,
                l: 10,
                ..base.clone()
            },
        ),
        (
            "cluster fs2 k=3",
            RunConfig {
                regime: RegimeKind::Cluster,
                features: FeatureKind::ForecastErrors,
                k: 3,
                ..base.clone()
            },
        ),
        (
            "cluster fs3 k=3",
            RunConfig {
                regime: RegimeKind::Cluster,
                features: FeatureKind::Combined,
                k: 3,
                ..base.clone()
            },
        ),
    ];
    for (name, cfg) in &runs {
        let r = run(cfg, &ds)?.report;
        println!(
            "{name:<22} {:>7.4} {:>7.4} {:>8.1}% {:>7.3}",
            r.mean_crps, r.mae, r.coverage, r.mean_width
        );
    }
    Ok(())
}
