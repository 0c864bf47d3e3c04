//! Generate a heterogeneous synthetic dataset and write it as CSV.
//!
//! Usage: `cargo run --example synthetic_data -- [out_dir]`

use semilocal_emos::dataset::{generate_synthetic, write_csv, StationType, SynthConfig};
use semilocal_emos::model::EnsembleLayout;

fn main() -> semilocal_emos::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synthetic".into());
    let windy = StationType {
        climate: 8.0,
        bias: -1.0,
        slope: 1.1,
        ..StationType::new("coast")
    };
    let calm = StationType {
        climate: 3.0,
        bias: 0.8,
        slope: 0.8,
        noise: 0.5,
        ..StationType::new("valley")
    };
    let mut cfg = SynthConfig::new(30, 365, EnsembleLayout::glameps(), vec![windy, calm], 17);
    cfg.missing_rate = 0.02;
    let ds = generate_synthetic(&cfg, cfg.seed)?;

    std::fs::create_dir_all(&out).map_err(|e| semilocal_emos::Error::Io {
        path: out.clone().into(),
        source: e,
    })?;
    let dir = std::path::Path::new(&out);
    write_csv(&ds, dir.join("stations.csv"), dir.join("cases.csv"))?;

    let (first, last) = ds.date_range().expect("non-empty");
    println!(
        "{} stations, {} cases, {} members in {} groups",
        ds.n_stations(),
        ds.cases().len(),
        ds.n_members(),
        ds.layout().subensembles().len()
    );
    println!("{first} .. {last} -> {}", dir.display());
    for s in [0, 1] {
        let cases = ds.station_cases(s);
        let obs = cases.iter().map(|c| c.observation).sum::<f64>() / cases.len() as f64;
        let err = cases.iter().map(|c| c.error()).sum::<f64>() / cases.len() as f64;
        println!(
            "{} ({}): mean obs {obs:.2}, mean error {err:+.2}",
            ds.station_id(s),
            cfg.types[cfg.type_of(s)].name
        );
    }
    Ok(())
}
