use proptest::prelude::*;
use semilocal_emos::dataset::{generate_synthetic, load_csv, write_csv, StationType, SynthConfig};
use semilocal_emos::model::EnsembleLayout;
use semilocal_emos::similarity::{distance_matrix, DistanceKind, DistanceMatrix, DistanceSpec};

#[test]
fn glameps_layout_survives_csv() {
    let mut cfg = SynthConfig::new(4, 12, EnsembleLayout::glameps(), vec![StationType::new("a")], 8);
    cfg.missing_rate = 0.2;
    let ds = generate_synthetic(&cfg, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (s, c) = (dir.path().join("s.csv"), dir.path().join("c.csv"));
    write_csv(&ds, &s, &c).unwrap();
    let back = load_csv(&s, &c).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.layout().subensembles().len(), 4);
}

#[test]
fn distance_matrix_file_round_trip() {
    let cfg = SynthConfig::new(6, 40, EnsembleLayout::exchangeable(4), vec![StationType::new("a")], 1);
    let ds = generate_synthetic(&cfg, 1).unwrap();
    let spec = DistanceSpec::new(DistanceKind::EnsembleStats).with_reference_dates(ds.dates().to_vec());
    let m = distance_matrix(&spec, &ds).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d5.csv");
    m.write_file(&p).unwrap();
    assert_eq!(DistanceMatrix::read_file(&p).unwrap(), m);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn load_after_write_is_identity(stations in 1usize..6, days in 1usize..30, members in 2usize..7, missing in 0.0f64..0.5, seed in 0u64..500) {
        let mut cfg = SynthConfig::new(stations, days, EnsembleLayout::exchangeable(members), vec![StationType::new("a")], seed);
        cfg.missing_rate = missing;
        let Ok(ds) = generate_synthetic(&cfg, seed) else { return Ok(()); };
        let dir = tempfile::tempdir().unwrap();
        let (s, c) = (dir.path().join("s.csv"), dir.path().join("c.csv"));
        write_csv(&ds, &s, &c).unwrap();
        prop_assert_eq!(load_csv(&s, &c).unwrap(), ds);
    }
}
