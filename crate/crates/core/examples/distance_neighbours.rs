//! Station distances under each similarity measure and the resulting neighbourhoods.

use semilocal_emos::dataset::{generate_synthetic, StationType, SynthConfig};
use semilocal_emos::model::EnsembleLayout;
use semilocal_emos::similarity::{distance_matrix, nearest_stations, DistanceKind, DistanceSpec};

fn main() -> semilocal_emos::Result<()> {
    let types = vec![
        StationType {
            bias: 1.0,
            ..StationType::new("a")
        },
        StationType {
            bias: -1.0,
            climate: 7.0,
            ..StationType::new("b")
        },
    ];
    let cfg = SynthConfig::new(16, 150, EnsembleLayout::exchangeable(10), types, 3);
    let ds = generate_synthetic(&cfg, 3)?;
    let reference = ds.dates()[..100].to_vec();

    for kind in DistanceKind::ALL {
        let spec = DistanceSpec::new(kind).with_reference_dates(reference.clone());
        let m = distance_matrix(&spec, &ds)?;
        let near = nearest_stations(&m, 0, 5)?;
        let same_type = near.iter().filter(|&&s| cfg.type_of(s) == cfg.type_of(0)).count();
        let ids: Vec<&str> = near.iter().map(|&s| ds.station_id(s)).collect();
        println!("{kind}: {} ({same_type}/5 share the type of {})", ids.join(" "), ds.station_id(0));
    }
    Ok(())
}
