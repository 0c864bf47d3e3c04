//! Cluster stations by windowed features and compare with their true types.

use semilocal_emos::clustering::{cluster_per_window, partition_agreement, FeatureKind, FeatureSpec, KmeansConfig};
use semilocal_emos::dataset::{generate_synthetic, StationType, SynthConfig, WindowSpec};
use semilocal_emos::model::EnsembleLayout;

fn main() -> semilocal_emos::Result<()> {
    let types = vec![
        StationType {
            bias: 1.5,
            climate: 4.0,
            ..StationType::new("a")
        },
        StationType {
            bias: -1.0,
            climate: 6.0,
            ..StationType::new("b")
        },
        StationType {
            bias: 0.0,
            climate: 9.0,
            ..StationType::new("c")
        },
    ];
    let cfg = SynthConfig::new(30, 120, EnsembleLayout::exchangeable(8), types, 21);
    let ds = generate_synthetic(&cfg, 21)?;
    let truth: Vec<usize> = (0..ds.n_stations()).map(|s| cfg.type_of(s)).collect();
    let target = ds.dates()[100];
    let window = WindowSpec::new(80);

    for kind in [FeatureKind::Climatology, FeatureKind::ForecastErrors, FeatureKind::Combined] {
        let spec = FeatureSpec::new(kind, 24)?;
        let sc = cluster_per_window(&spec, &ds, target, &window, &KmeansConfig::new(3, 1))?;
        let sizes: Vec<usize> = sc.pools().iter().map(Vec::len).collect();
        let c = &sc.clustering;
        println!(
            "{kind}: sizes {sizes:?}, objective {:.3} after {} iterations (restart {}), agreement with types {:.2}",
            c.objective,
            c.history.len(),
            c.restart,
            partition_agreement(&sc.labels, &truth)
        );
    }
    Ok(())
}
