use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use susacer::approximator::read_checkpoint;
use susacer::harness::emit::{self, Band};
use susacer::harness::{self, RunConfig};
use susacer::{verify, Error, Result};

#[derive(Parser)]
#[command(name = "susacer", version, about = "Actor-critic with stochastically sustained actions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write run.csv, run.json and params.bin.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra `key=value` overrides, applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate saved parameters with the greedy per-step policy.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an E0 x TE grid over several seeds and report mean ± sd.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![2.0, 4.0, 8.0])]
        e0: Vec<f64>,
        /// Decay horizons; defaults to the config's TE.
        #[arg(long, value_delimiter = ',')]
        te: Vec<f64>,
        /// Number of seeds, numbered from 0.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Also run the per-step baseline.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the numerical oracles and print a pass/fail table.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Machine-readable report.
        #[arg(long, default_value = "verify_report.json")]
        report: PathBuf,
    },
    /// Plot learning curves; several inputs are averaged into a mean ± sd band.
    Plot {
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "mean return")]
        label: String,
        #[arg(long, default_value = "Learning curve")]
        title: String,
    },
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for kv in overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {kv:?} is not key=value")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.finalize()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            overrides,
        } => {
            let mut cfg = load_config(config.as_deref(), &overrides)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if out.is_some() {
                cfg.out = out;
            }
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
            cfg.out = Some(dir.clone());
            let record = harness::train(&cfg)?;
            emit::write_record(&record, &dir)?;
            std::fs::write(dir.join("config.txt"), cfg.to_text())?;
            println!(
                "seed {}  final {:.4}  AULC {:.4}  -> {}",
                record.seed,
                record.final_score,
                record.aulc,
                dir.display()
            );
            Ok(true)
        }
        Command::Eval {
            config,
            params,
            episodes,
            seed,
        } => {
            let mut cfg = load_config(config.as_deref(), &[])?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let ckpt = read_checkpoint(&params)?;
            let returns = harness::evaluate(&ckpt.actor, &cfg, episodes.unwrap_or(cfg.eval_episodes))?;
            for (i, r) in returns.iter().enumerate() {
                println!("episode {}: {r:.6}", i + 1);
            }
            println!("mean: {:.6}", returns.iter().sum::<f64>() / returns.len() as f64);
            Ok(true)
        }
        Command::Sweep {
            config,
            e0,
            te,
            seeds,
            baseline,
            threads,
            out,
            overrides,
        } => {
            let cfg = load_config(config.as_deref(), &overrides)?;
            let tes = if te.is_empty() { vec![cfg.agent.schedule.te] } else { te };
            let seeds: Vec<u64> = (0..seeds).collect();
            let table = harness::sweep(
                &cfg,
                &e0,
                &tes,
                &seeds,
                baseline,
                threads.unwrap_or_else(harness::default_threads),
            )?;
            let md = table.to_markdown();
            print!("{md}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("table.md"), &md)?;
                let mut bands = Vec::new();
                for cell in table.cells.iter().chain(&table.baseline) {
                    let runs: Vec<_> = cell.records.iter().map(|r| r.evals.clone()).collect();
                    bands.push(Band::from_runs(&cell.label(), &runs)?);
                    for r in &cell.records {
                        let name = format!("{}_seed{}.csv", cell.label().replace([' ', '='], "_"), r.seed);
                        emit::write_csv(&r.evals, &dir.join(name))?;
                    }
                }
                std::fs::write(dir.join("curves.svg"), emit::svg_plot(&bands, &table.env)?)?;
                std::fs::write(
                    dir.join("table.json"),
                    serde_json::to_string_pretty(&table).map_err(Error::from)?,
                )?;
            }
            Ok(true)
        }
        Command::Verify { seed, report } => {
            let rep = verify::run_all(seed)?;
            print!("{}", rep.table());
            std::fs::write(&report, serde_json::to_string_pretty(&rep).map_err(Error::from)?)?;
            let ok = rep.all_passed();
            println!("{}", if ok { "all checks passed" } else { "some checks FAILED" });
            Ok(ok)
        }
        Command::Plot {
            inputs,
            out,
            label,
            title,
        } => {
            let runs = inputs.iter().map(|p| emit::read_csv(p)).collect::<Result<Vec<_>>>()?;
            let band = Band::from_runs(&label, &runs)?;
            std::fs::write(&out, emit::svg_plot(&[band], &title)?)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
