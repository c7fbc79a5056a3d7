//! Per-run output files and the paired comparison table.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use qoshare::sim::{FrameMetrics, RunSummary};
use qoshare::NetworkTopology;
use serde::Serialize;

pub const FRAMES_FILE: &str = "frames.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_ECHO_FILE: &str = "config-echo.toml";
pub const SOLVER_FILE: &str = "solver.csv";

pub const FRAME_COLUMNS: [&str; 10] = [
    "frame",
    "client",
    "class",
    "arrivals",
    "service",
    "backlog",
    "delivery_ratio",
    "qos_met",
    "expected_service",
    "utility",
];

/// `<out>/<scenario>/<policy>/seed-<seed>`.
pub fn run_dir(out: &Path, scenario: &str, policy: &str, seed: u64) -> PathBuf {
    out.join(scenario).join(policy).join(format!("seed-{seed}"))
}

/// One row per (frame, client, class), then a row with client = class = -1
/// holding the frame's total utility.
pub fn write_frames(
    path: &Path,
    header: &str,
    topo: &NetworkTopology,
    frames: &[FrameMetrics],
) -> anyhow::Result<()> {
    let mut file = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(file, "# {header}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(FRAME_COLUMNS)?;
    for f in frames {
        let frame = f.frame.to_string();
        for p in 0..topo.pair_count() {
            let (client, class) = topo.pair_of(p);
            w.write_record([
                frame.as_str(),
                &client.to_string(),
                &class.to_string(),
                &f.arrivals[p].to_string(),
                &f.service[p].to_string(),
                &f.backlog[p].to_string(),
                &f.delivery_ratio[p].to_string(),
                if f.qos_met[p] { "1" } else { "0" },
                &f.expected_service[p].to_string(),
                "",
            ])?;
        }
        w.write_record([frame.as_str(), "-1", "-1", "", "", "", "", "", "", &f.utility.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-frame solver trace: objective, gap and iteration count.
pub fn write_solver_trace(path: &Path, frames: &[FrameMetrics]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["frame", "objective", "gap", "iterations", "reached_tolerance", "min_slack"])?;
    for f in frames {
        let slack = f.min_slack.map(|s| s.to_string()).unwrap_or_default();
        match &f.solver {
            Some(s) => w.write_record([
                f.frame.to_string(),
                s.objective.to_string(),
                s.gap.to_string(),
                s.iterations.to_string(),
                s.reached_tolerance.to_string(),
                slack,
            ])?,
            None => w.write_record([f.frame.to_string(), String::new(), String::new(), String::new(), String::new(), slack])?,
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RunReport<'a> {
    pub scenario: &'a str,
    pub policy: &'a str,
    pub delay_unit: &'static str,
    #[serde(flatten)]
    pub summary: &'a RunSummary,
}

pub fn write_summary(path: &Path, report: &RunReport<'_>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

type Key = (i64, i64, i64);
type FrameTable = (Vec<Key>, HashMap<Key, Vec<String>>);

fn read_frames(path: &Path) -> anyhow::Result<FrameTable> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(FRAME_COLUMNS) {
        bail!("{}: unexpected columns {:?}", path.display(), headers);
    }
    let mut order = Vec::new();
    let mut rows = HashMap::new();
    for rec in r.records() {
        let rec = rec?;
        let key = (rec[0].parse()?, rec[1].parse()?, rec[2].parse()?);
        let values = rec.iter().skip(3).map(str::to_string).collect();
        if rows.insert(key, values).is_some() {
            bail!("{}: duplicate row {key:?}", path.display());
        }
        order.push(key);
    }
    Ok((order, rows))
}

fn frames_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(FRAMES_FILE)
    } else {
        p.to_path_buf()
    }
}

/// Joins two runs on (frame, client, class). For every metric the table has
/// the A value, the B value and B − A. Rows present in only one run are an
/// error.
pub fn compare_runs<W: Write>(a: &Path, b: &Path, out: W) -> anyhow::Result<usize> {
    let (order, rows_a) = read_frames(&frames_path(a))?;
    let (_, rows_b) = read_frames(&frames_path(b))?;
    if rows_a.len() != rows_b.len() {
        bail!("runs differ in length: {} vs {} rows", rows_a.len(), rows_b.len());
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["frame".to_string(), "client".into(), "class".into()];
    for m in &FRAME_COLUMNS[3..] {
        header.extend([format!("{m}_a"), format!("{m}_b"), format!("{m}_diff")]);
    }
    w.write_record(&header)?;
    for key in &order {
        let va = &rows_a[key];
        let vb = rows_b
            .get(key)
            .with_context(|| format!("row {key:?} missing from {}", b.display()))?;
        let mut rec = vec![key.0.to_string(), key.1.to_string(), key.2.to_string()];
        for (x, y) in va.iter().zip(vb) {
            let diff = match (x.parse::<f64>(), y.parse::<f64>()) {
                (Ok(x), Ok(y)) => (y - x).to_string(),
                _ => String::new(),
            };
            rec.extend([x.clone(), y.clone(), diff]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(order.len())
}
