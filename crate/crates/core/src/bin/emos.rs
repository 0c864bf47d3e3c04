use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semilocal_emos::config::KeyValues;
use semilocal_emos::dataset::{generate_synthetic, write_csv, SynthConfig};
use semilocal_emos::pipeline::{
    exit_code, load_dataset, load_or_compute_distances, raw_ensemble, read_predictions, run, sweep, write_atomic, write_sweep_csv,
    RunConfig, SweepGrid,
};
use semilocal_emos::verification::{ks_uniform, pit, report};
use semilocal_emos::{Error, Result};

#[derive(Parser)]
#[command(name = "emos", version, about = "Truncated-normal EMOS with semi-local training sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key-value configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a key, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory or file.
    #[arg(long, short)]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (stations.csv, cases.csv).
    Synth(Common),
    /// Compute a station distance matrix CSV.
    Distances(Common),
    /// Fit, predict and verify over the verification period.
    Run(Common),
    /// Run a grid over n, L, k and N.
    Sweep(Common),
    /// Score a predictions CSV and the raw ensemble.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
}

impl Common {
    fn load(&self) -> Result<(KeyValues, PathBuf)> {
        let (mut kv, base) = match &self.config {
            Some(p) => (KeyValues::from_file(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
            None => (KeyValues::default(), PathBuf::new()),
        };
        for s in &self.set {
            kv.set_override(s)?;
        }
        Ok((kv, base))
    }

    fn run_config(&self) -> Result<RunConfig> {
        let (kv, base) = self.load()?;
        let mut c = RunConfig::from_key_values(&kv, &base)?;
        c.workers = self.workers.or(c.workers);
        if let Some(w) = c.workers {
            rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build_global()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(c)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).map_err(|e| Error::Io {
            path: self.out.clone(),
            source: e,
        })?;
        Ok(&self.out)
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(c) => {
            let (kv, _) = c.load()?;
            let cfg = SynthConfig::from_key_values(&kv)?;
            let ds = generate_synthetic(&cfg, cfg.seed)?;
            let dir = c.out_dir()?;
            write_csv(&ds, dir.join("stations.csv"), dir.join("cases.csv"))?;
            eprintln!("{} stations, {} cases -> {}", ds.n_stations(), ds.cases().len(), dir.display());
        }
        Command::Distances(c) => {
            let mut cfg = c.run_config()?;
            cfg.distance_cache = None;
            let ds = load_dataset(&cfg)?;
            let m = load_or_compute_distances(&cfg, &ds)?;
            if let Some(parent) = c.out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::Io {
                    path: parent.to_path_buf(),
                    source: e,
                })?;
            }
            write_atomic(&c.out, |w| m.write(w))?;
        }
        Command::Run(c) => {
            let cfg = c.run_config()?;
            let ds = load_dataset(&cfg)?;
            let out = run(&cfg, &ds)?;
            out.write_dir(&ds, c.out_dir()?)?;
            let s = &out.summary;
            println!(
                "crps {:.4}  mae {:.4}  coverage {:.1}%  width {:.3}  cases {}  fallback {:.3}",
                s.mean_crps, s.mae, s.coverage, s.mean_width, s.n_cases, s.fallback_rate
            );
        }
        Command::Sweep(c) => {
            let cfg = c.run_config()?;
            let (kv, _) = c.load()?;
            let grid = SweepGrid::from_key_values(&kv)?;
            let ds = load_dataset(&cfg)?;
            let rows = sweep(&cfg, &grid, &ds);
            write_atomic(&c.out_dir()?.join("sweep.csv"), |w| write_sweep_csv(&rows, w))?;
            let failed = rows.iter().filter(|r| r.status == "failed").count();
            println!("{} cells, {failed} failed", rows.len());
        }
        Command::Verify { common: c, predictions } => {
            let cfg = c.run_config()?;
            let dir = c.out_dir()?;
            if let Some(p) = predictions {
                let (params, obs) = read_predictions(&p)?;
                let mut rep = report(&params, &obs, cfg.alpha, cfg.pit_bins)?;
                let pits: Vec<f64> = params.iter().zip(&obs).map(|(p, &o)| pit(p, o)).collect::<Result<_>>()?;
                let ks = ks_uniform(&pits)?;
                rep.metadata.insert("ks_statistic".into(), ks.statistic.to_string());
                rep.metadata.insert("ks_p_value".into(), ks.p_value.to_string());
                write_atomic(&dir.join("report.json"), |w| rep.write_json(w))?;
                write_atomic(&dir.join("pit_hist.csv"), |w| rep.write_histogram_csv(w))?;
                println!(
                    "postprocessed: crps {:.4}  coverage {:.1}%  ks p {:.3}",
                    rep.mean_crps, rep.coverage, ks.p_value
                );
            }
            let ds = load_dataset(&cfg)?;
            let (rep, ranks) = raw_ensemble(&cfg, &ds)?;
            write_atomic(&dir.join("raw_report.json"), |w| rep.write_json(w))?;
            write_atomic(&dir.join("rank_hist.csv"), |w| ranks.write_csv(w))?;
            println!("raw ensemble: crps {:.4}  coverage {:.1}%", rep.mean_crps, rep.coverage);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
