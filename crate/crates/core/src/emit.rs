//! File emission: summary CSV, per-trial JSONL traces, and an SVG regret chart.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::analysis::{ExperimentSummary, Metric};
use crate::engine::{ExperimentOutput, TraceEmission};
use crate::error::{Error, Result};
use crate::protocol::{fmt_f64, RoundRecord};

pub const SUMMARY_HEADER: [&str; 13] = [
    "T", "t", "metric", "mean", "stderr", "q10", "q90", "learner", "attacker", "B", "C", "kappa",
    "seed",
];

/// One parsed row of a summary CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub horizon: u64,
    pub t: u64,
    pub metric: Metric,
    pub mean: f64,
    pub stderr: f64,
    pub q10: f64,
    pub q90: f64,
    pub learner: String,
    pub attacker: String,
    pub budget: Option<u64>,
    pub contamination: Option<f64>,
    pub kappa: Option<f64>,
    pub seed: u64,
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

pub fn write_summary_csv(path: impl AsRef<Path>, summaries: &[ExperimentSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for s in summaries {
        for r in &s.rows {
            w.write_record([
                s.horizon.to_string(),
                r.t.to_string(),
                r.metric.to_string(),
                fmt_f64(r.mean),
                fmt_f64(r.stderr),
                fmt_f64(r.q10),
                fmt_f64(r.q90),
                s.learner.clone(),
                s.attacker.clone(),
                opt(s.budget, |b| b.to_string()),
                opt(s.contamination, fmt_f64),
                opt(s.kappa, fmt_f64),
                s.seed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn field(rec: &csv::StringRecord, i: usize) -> Result<&str> {
    rec.get(i)
        .ok_or_else(|| Error::Parse(format!("missing column `{}`", SUMMARY_HEADER[i])))
}

fn num<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    let s = field(rec, i)?;
    s.parse()
        .map_err(|_| Error::Parse(format!("bad `{}` value `{s}`", SUMMARY_HEADER[i])))
}

fn opt_num<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<Option<T>> {
    if field(rec, i)?.is_empty() {
        Ok(None)
    } else {
        num(rec, i).map(Some)
    }
}

pub fn read_summary_csv(path: impl AsRef<Path>) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(SUMMARY_HEADER) {
        return Err(Error::Parse("unexpected summary header".into()));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(CsvRow {
                horizon: num(&rec, 0)?,
                t: num(&rec, 1)?,
                metric: field(&rec, 2)?.parse()?,
                mean: num(&rec, 3)?,
                stderr: num(&rec, 4)?,
                q10: num(&rec, 5)?,
                q90: num(&rec, 6)?,
                learner: field(&rec, 7)?.to_string(),
                attacker: field(&rec, 8)?.to_string(),
                budget: opt_num(&rec, 9)?,
                contamination: opt_num(&rec, 10)?,
                kappa: opt_num(&rec, 11)?,
                seed: num(&rec, 12)?,
            })
        })
        .collect()
}

pub fn write_trace(path: impl AsRef<Path>, trace: &[RoundRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in trace {
        writeln!(w, "{}", rec.to_jsonl())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<RoundRecord>> {
    BufReader::new(File::open(path)?)
        .lines()
        .map(|line| RoundRecord::from_jsonl(&line?))
        .collect()
}

/// Mean pseudo-regret against `t` as a bare SVG polyline chart.
pub fn regret_svg(summary: &ExperimentSummary) -> String {
    let series = summary.series(Metric::PseudoRegret);
    let (w, h, pad) = (640.0, 400.0, 40.0);
    let t_max = series.iter().map(|p| p.0).max().unwrap_or(1).max(1) as f64;
    let y_max = series.iter().map(|p| p.1).fold(0.0, f64::max).max(1e-12);
    let points: Vec<String> = series
        .iter()
        .map(|&(t, y)| {
            let x = pad + (w - 2.0 * pad) * t as f64 / t_max;
            let y = h - pad - (h - 2.0 * pad) * y / y_max;
            format!("{x:.2},{y:.2}")
        })
        .collect();
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n",
            "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
            "<line x1=\"{p}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
            "<line x1=\"{p}\" y1=\"{p}\" x2=\"{p}\" y2=\"{b}\" stroke=\"black\"/>\n",
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{pts}\"/>\n",
            "<text x=\"{p}\" y=\"20\" font-size=\"14\">{l} vs {a}: mean pseudo-regret (max {ym:.1}) vs t (max {tm})</text>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        p = pad,
        b = h - pad,
        r = w - pad,
        pts = points.join(" "),
        l = summary.learner,
        a = summary.attacker,
        ym = y_max,
        tm = t_max,
    )
}

/// Writes `summary.csv`, one `trace_trial<N>.jsonl` per trial when traces are
/// kept, and optionally `regret.svg`. Returns the written paths.
pub fn emit(
    dir: impl AsRef<Path>,
    output: &ExperimentOutput,
    emission: TraceEmission,
    chart: bool,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let summary = dir.join("summary.csv");
    write_summary_csv(&summary, std::slice::from_ref(&output.summary))?;
    written.push(summary);
    if emission == TraceEmission::Full {
        for r in &output.results {
            let trace = r
                .trace
                .as_ref()
                .ok_or_else(|| Error::Protocol(format!("trial {} kept no trace", r.trial_id)))?;
            let path = dir.join(format!("trace_trial{}.jsonl", r.trial_id));
            write_trace(&path, trace)?;
            written.push(path);
        }
    }
    if chart {
        let path = dir.join("regret.svg");
        fs::write(&path, regret_svg(&output.summary))?;
        written.push(path);
    }
    Ok(written)
}
