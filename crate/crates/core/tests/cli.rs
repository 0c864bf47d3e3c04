use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn emos(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emos"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn synth(dir: &Path) {
    let out = emos(
        dir,
        &[
            "synth",
            "--set",
            "stations=8",
            "--set",
            "days=90",
            "--set",
            "members=6",
            "--set",
            "seed=4",
            "--set",
            "types=2",
            "--out",
            "data",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    fs::write(
        dir.join("run.cfg"),
        "# test run\nstations = data/stations.csv\ncases = data/cases.csv\nn = 30\n",
    )
    .unwrap();
}

#[test]
fn synth_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = emos(dir.path(), &["synth", "--set", "stations=3", "--set", "days=10", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn run_regimes_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    for (regime, extra) in [("regional", "k=1"), ("local", "k=1"), ("distance", "L=3"), ("cluster", "k=2")] {
        let out = emos(
            d,
            &[
                "run",
                "-c",
                "run.cfg",
                "--set",
                &format!("regime={regime}"),
                "--set",
                extra,
                "--set",
                "N=6",
                "--out",
                regime,
            ],
        );
        assert!(out.status.success(), "{regime}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("crps"));
        let preds = fs::read_to_string(d.join(regime).join("predictions.csv")).unwrap();
        assert!(preds.starts_with("station_id,date,location,scale,obs"));
        let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join(regime).join("report.json")).unwrap()).unwrap();
        assert!(report["mean_crps"].as_f64().unwrap() > 0.0);
    }
    assert!(d.join("cluster/clusters").is_dir());

    let out = emos(
        d,
        &[
            "verify",
            "-c",
            "run.cfg",
            "--predictions",
            "regional/predictions.csv",
            "--out",
            "ver",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ranks = fs::read_to_string(d.join("ver/rank_hist.csv")).unwrap();
    assert_eq!(ranks.lines().count(), 1 + 7);
}

#[test]
fn distances_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let out = emos(d, &["distances", "-c", "run.cfg", "--set", "distance=d3", "--out", "m/d3.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = fs::read_to_string(d.join("m/d3.csv")).unwrap();
    assert_eq!(m.lines().count(), 9);

    let out = emos(
        d,
        &[
            "sweep",
            "-c",
            "run.cfg",
            "--set",
            "regime=distance",
            "--set",
            "grid_L=1,4",
            "--set",
            "grid_n=2,30",
            "--out",
            "sw",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = fs::read_to_string(d.join("sw/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 5);
    assert!(sweep.contains(",failed,") && sweep.contains(",ok,"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    assert_eq!(
        emos(d, &["run", "-c", "run.cfg", "--set", "regime=nowhere", "--out", "o"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        emos(d, &["run", "-c", "run.cfg", "--set", "cases=missing.csv", "--out", "o"])
            .status
            .code(),
        Some(3)
    );
    fs::write(d.join("data/bad.csv"), "station_id,date,obs,m1\nST0000,2013-10-01,-1,2\n").unwrap();
    assert_eq!(
        emos(d, &["run", "-c", "run.cfg", "--set", "cases=data/bad.csv", "--out", "o"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        emos(d, &["run", "-c", "run.cfg", "--set", "n=2", "--set", "regime=local", "--out", "o"])
            .status
            .code(),
        Some(4)
    );
}
