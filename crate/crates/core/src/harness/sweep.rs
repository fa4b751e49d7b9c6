use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{train, RunConfig, RunRecord};
use crate::acer::Algorithm;
use crate::{Error, Result};

/// Runs independent configurations, using up to `threads` worker threads.
/// Results come back in input order and do not depend on `threads`.
pub fn run_many(configs: &[RunConfig], threads: usize) -> Result<Vec<RunRecord>> {
    let threads = threads.clamp(1, configs.len().max(1));
    let next = Mutex::new(0usize);
    let results: Mutex<Vec<Option<Result<RunRecord>>>> = Mutex::new(configs.iter().map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("work counter");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(cfg) = configs.get(i) else { break };
                let r = train(cfg);
                results.lock().expect("results")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results")
        .into_iter()
        .map(|r| r.expect("every run finished"))
        .collect()
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub algorithm: Algorithm,
    pub e0: f64,
    pub te: f64,
    pub seeds: Vec<u64>,
    pub final_mean: f64,
    pub final_sd: f64,
    pub aulc_mean: f64,
    pub aulc_sd: f64,
    pub records: Vec<RunRecord>,
}

impl SweepCell {
    /// Summarises the runs of one configuration across seeds.
    pub fn from_records(records: Vec<RunRecord>) -> Result<Self> {
        let first = records.first().ok_or(Error::Empty("sweep cell"))?;
        let agent = &first.config.agent;
        let finals: Vec<f64> = records.iter().map(|r| r.final_score).collect();
        let aulcs: Vec<f64> = records.iter().map(|r| r.aulc).collect();
        let (final_mean, final_sd) = mean_sd(&finals);
        let (aulc_mean, aulc_sd) = mean_sd(&aulcs);
        Ok(Self {
            algorithm: agent.algorithm,
            e0: agent.schedule.e0,
            te: agent.schedule.te,
            seeds: records.iter().map(|r| r.seed).collect(),
            final_mean,
            final_sd,
            aulc_mean,
            aulc_sd,
            records,
        })
    }

    pub fn label(&self) -> String {
        match self.algorithm {
            Algorithm::Acer => "ACER".into(),
            Algorithm::SusAcer => format!("SusACER E0={} TE={}", self.e0, self.te),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub env: String,
    /// Cells of the `E0 x TE` grid, E0-major.
    pub cells: Vec<SweepCell>,
    /// Per-step baseline, when requested.
    pub baseline: Option<SweepCell>,
}

impl SweepTable {
    /// Index of the grid cell with the largest mean AULC.
    pub fn best(&self) -> Option<usize> {
        (0..self.cells.len()).max_by(|&a, &b| self.cells[a].aulc_mean.total_cmp(&self.cells[b].aulc_mean))
    }

    /// Markdown table: one row per cell with mean ± sd of the final score and
    /// the AULC; the best-AULC grid cell is bold.
    pub fn to_markdown(&self) -> String {
        let best = self.best();
        let mut out = format!(
            "## {}\n\n| algorithm | E0 | TE | seeds | final | AULC |\n|---|---|---|---|---|---|\n",
            self.env
        );
        let row = |c: &SweepCell, bold: bool| {
            let cell = |m: f64, s: f64| {
                let txt = format!("{m:.3} ± {s:.3}");
                if bold {
                    format!("**{txt}**")
                } else {
                    txt
                }
            };
            format!(
                "| {} | {} | {} | {} | {} | {} |\n",
                match c.algorithm {
                    Algorithm::Acer => "ACER",
                    Algorithm::SusAcer => "SusACER",
                },
                c.e0,
                c.te,
                c.seeds.len(),
                cell(c.final_mean, c.final_sd),
                cell(c.aulc_mean, c.aulc_sd)
            )
        };
        for (i, c) in self.cells.iter().enumerate() {
            out.push_str(&row(c, Some(i) == best));
        }
        if let Some(b) = &self.baseline {
            out.push_str(&row(b, false));
        }
        out
    }
}

/// Runs the Cartesian `E0 x TE` grid over `seeds` on top of `base`, plus the
/// per-step baseline when `with_baseline` is set.
pub fn sweep(
    base: &RunConfig,
    e0s: &[f64],
    tes: &[f64],
    seeds: &[u64],
    with_baseline: bool,
    threads: usize,
) -> Result<SweepTable> {
    if e0s.is_empty() || tes.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep grid needs at least one E0, TE and seed".into()));
    }
    let mut groups: Vec<Vec<RunConfig>> = Vec::new();
    for &e0 in e0s {
        for &te in tes {
            let mut cfg = base.clone();
            cfg.agent.algorithm = Algorithm::SusAcer;
            cfg.agent.schedule.e0 = e0;
            cfg.agent.schedule.te = te;
            groups.push(with_seeds(&cfg, seeds)?);
        }
    }
    if with_baseline {
        let mut cfg = base.clone();
        cfg.agent.algorithm = Algorithm::Acer;
        groups.push(with_seeds(&cfg, seeds)?);
    }
    let flat: Vec<RunConfig> = groups.iter().flatten().cloned().collect();
    let mut records = run_many(&flat, threads)?.into_iter();
    let mut cells = Vec::new();
    for g in &groups {
        cells.push(SweepCell::from_records(records.by_ref().take(g.len()).collect())?);
    }
    let baseline = if with_baseline { cells.pop() } else { None };
    Ok(SweepTable {
        env: base.env.clone(),
        cells,
        baseline,
    })
}

fn with_seeds(cfg: &RunConfig, seeds: &[u64]) -> Result<Vec<RunConfig>> {
    seeds
        .iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.seed = seed;
            c.out = None;
            c.finalize()?;
            Ok(c)
        })
        .collect()
}
