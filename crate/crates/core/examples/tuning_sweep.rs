//! Sweep the window length and neighbourhood size for the distance regime.

use semilocal_emos::dataset::{generate_synthetic, StationType, SynthConfig};
use semilocal_emos::model::EnsembleLayout;
use semilocal_emos::pipeline::{sweep, write_sweep_csv, RegimeKind, RunConfig, SweepGrid};
use semilocal_emos::similarity::DistanceKind;

fn main() -> semilocal_emos::Result<()> {
    let types = vec![
        StationType {
            bias: 1.0,
            ..StationType::new("a")
        },
        StationType {
            slope: 0.8,
            noise: 1.5,
            ..StationType::new("b")
        },
    ];
    let ds = generate_synthetic(&SynthConfig::new(24, 160, EnsembleLayout::exchangeable(8), types, 12), 12)?;
    let mut base = RunConfig::new("", "");
    base.regime = RegimeKind::Distance;
    base.distance = DistanceKind::ForecastError;
    // keep the verification period fixed across window lengths
    base.verify = (Some(ds.dates()[100]), None);
    base.reference = (None, Some(ds.dates()[99]));
    let grid = SweepGrid {
        n: vec![20, 50, 80],
        l: vec![1, 4, 12, 24],
        ..SweepGrid::default()
    };
    let rows = sweep(&base, &grid, &ds);
    write_sweep_csv(&rows, std::io::stdout())?;
    Ok(())
}
