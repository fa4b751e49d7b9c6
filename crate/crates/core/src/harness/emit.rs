//! CSV learning curves and SVG band plots.

use std::fmt::Write as _;
use std::path::Path;

use super::{EvalEntry, RunRecord};
use crate::{Error, Result};

/// Writes `step, mean_return, ep1..epK`, one row per evaluation.
pub fn write_csv(evals: &[EvalEntry], path: &Path) -> Result<()> {
    let k = evals.first().map_or(0, |e| e.returns.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["step".to_string(), "mean_return".to_string()];
    header.extend((1..=k).map(|i| format!("ep{i}")));
    w.write_record(&header)?;
    for e in evals {
        if e.returns.len() != k {
            return Err(Error::Format(format!("evaluation at step {} has {} episodes, expected {k}", e.step, e.returns.len())));
        }
        let mut row = vec![e.step.to_string(), e.mean_return.to_string()];
        row.extend(e.returns.iter().map(|r| r.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<EvalEntry>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() < 2 || &header[0] != "step" || &header[1] != "mean_return" {
        return Err(Error::Format(format!("unexpected CSV header {header:?}")));
    }
    for (i, h) in header.iter().skip(2).enumerate() {
        if h != format!("ep{}", i + 1) {
            return Err(Error::Format(format!("unexpected CSV column {h:?}")));
        }
    }
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Format(format!("bad number {s:?}"))) };
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(EvalEntry {
                step: rec[0].parse().map_err(|_| Error::Format(format!("bad step {:?}", &rec[0])))?,
                mean_return: num(&rec[1])?,
                returns: rec.iter().skip(2).map(num).collect::<Result<_>>()?,
            })
        })
        .collect()
}

/// Writes `run.csv` and `run.json` into `dir`.
pub fn write_record(record: &RunRecord, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&record.evals, &dir.join("run.csv"))?;
    std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(record)?)?;
    Ok(())
}

/// Mean ± sd learning curve across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub label: String,
    pub steps: Vec<u64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Band {
    /// Per-evaluation mean and sample sd of `mean_return` across runs that
    /// share evaluation steps.
    pub fn from_runs(label: &str, runs: &[Vec<EvalEntry>]) -> Result<Self> {
        let first = runs.first().ok_or(Error::Empty("learning curves"))?;
        if first.is_empty() {
            return Err(Error::Empty("learning curve"));
        }
        let steps: Vec<u64> = first.iter().map(|e| e.step).collect();
        if runs.iter().any(|r| r.iter().map(|e| e.step).ne(steps.iter().copied())) {
            return Err(Error::Format("runs disagree on evaluation steps".into()));
        }
        let n = runs.len() as f64;
        let mut mean = Vec::with_capacity(steps.len());
        let mut sd = Vec::with_capacity(steps.len());
        for i in 0..steps.len() {
            let m = runs.iter().map(|r| r[i].mean_return).sum::<f64>() / n;
            let v = if runs.len() > 1 {
                runs.iter().map(|r| (r[i].mean_return - m).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            mean.push(m);
            sd.push(v.sqrt());
        }
        Ok(Self {
            label: label.to_string(),
            steps,
            mean,
            sd,
        })
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Learning curves as a standalone SVG: a line per band with a shaded ± sd
/// region. Output depends only on the inputs.
pub fn svg_plot(bands: &[Band], title: &str) -> Result<String> {
    if bands.is_empty() || bands.iter().any(|b| b.steps.is_empty()) {
        return Err(Error::Empty("plot data"));
    }
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 50.0);
    let x_max = bands.iter().flat_map(|b| &b.steps).copied().max().unwrap_or(0).max(1) as f64;
    let x_min = bands.iter().flat_map(|b| &b.steps).copied().min().unwrap_or(0) as f64;
    let lo = bands
        .iter()
        .flat_map(|b| b.mean.iter().zip(&b.sd).map(|(m, s)| m - s))
        .fold(f64::INFINITY, f64::min);
    let hi = bands
        .iter()
        .flat_map(|b| b.mean.iter().zip(&b.sd).map(|(m, s)| m + s))
        .fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NonFinite("plot values".into()));
    }
    let (lo, hi) = if hi - lo < 1e-9 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let span_x = (x_max - x_min).max(1.0);
    let px = |x: f64| left + (x - x_min) / span_x * (w - left - right);
    let py = |y: f64| top + (hi - y) / (hi - lo) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{left:.1} {top:.1} V{:.1} H{:.1}" fill="none" stroke="black"/>"#,
        h - bottom,
        w - right
    );
    for i in 0..=4 {
        let y = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{y:.2}</text>"#,
            left - 6.0,
            py(y) + 4.0
        );
        let x = x_min + span_x * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{x:.0}</text>"#,
            px(x),
            h - bottom + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">environment steps</text>"#,
        (left + w - right) / 2.0,
        h - 12.0
    );
    for (k, b) in bands.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut band = String::new();
        for (i, step) in b.steps.iter().enumerate() {
            let _ = write!(band, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, px(*step as f64), py(b.mean[i] + b.sd[i]));
        }
        for (i, step) in b.steps.iter().enumerate().rev() {
            let _ = write!(band, "L{:.2} {:.2} ", px(*step as f64), py(b.mean[i] - b.sd[i]));
        }
        let _ = writeln!(s, r#"<path d="{}Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band);
        let line: Vec<String> = b
            .steps
            .iter()
            .zip(&b.mean)
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x as f64), py(*y)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = top + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            left + 10.0,
            escape(&b.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
