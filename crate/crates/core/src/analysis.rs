//! Cross-trial aggregation and scaling-law fits.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::emit::CsvRow;
use crate::engine::{ExperimentConfig, TrialResult};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    PseudoRegret,
    SampledRegret,
    Verifications,
    Contamination,
    AttackCount,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::PseudoRegret,
        Metric::SampledRegret,
        Metric::Verifications,
        Metric::Contamination,
        Metric::AttackCount,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::PseudoRegret => "pseudo_regret",
            Metric::SampledRegret => "sampled_regret",
            Metric::Verifications => "verifications",
            Metric::Contamination => "contamination",
            Metric::AttackCount => "attack_count",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown metric `{s}`")))
    }
}

/// Cross-trial statistics of one metric at one checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub t: u64,
    pub metric: Metric,
    pub mean: f64,
    pub stderr: f64,
    pub q10: f64,
    pub q90: f64,
}

/// Summary rows plus the labels that identify the experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub horizon: u64,
    pub learner: String,
    pub attacker: String,
    pub budget: Option<u64>,
    pub contamination: Option<f64>,
    pub kappa: Option<f64>,
    pub seed: u64,
    pub rows: Vec<SummaryRow>,
}

impl ExperimentSummary {
    pub fn new(config: &ExperimentConfig, rows: Vec<SummaryRow>) -> Self {
        Self {
            horizon: config.horizon,
            learner: config.learner.key().to_string(),
            attacker: config.attacker.key().to_string(),
            budget: config
                .learner
                .verification_budget()
                .or(config.verification_budget),
            contamination: config.contamination_budget,
            kappa: config.learner.kappa(),
            seed: config.seed,
            rows,
        }
    }

    pub fn row(&self, t: u64, metric: Metric) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.t == t && r.metric == metric)
    }

    /// The summary row of `metric` at the horizon.
    pub fn final_row(&self, metric: Metric) -> Option<&SummaryRow> {
        self.row(self.horizon, metric)
    }

    /// `(t, mean)` series of one metric.
    pub fn series(&self, metric: Metric) -> Vec<(u64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| (r.t, r.mean))
            .collect()
    }
}

/// Interpolated quantile of sorted data (linear between order statistics).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let w = pos - lo as f64;
            if lo == hi {
                sorted[lo]
            } else {
                sorted[lo] + w * (sorted[hi] - sorted[lo])
            }
        }
    }
}

/// Mean and standard error of the mean; the error is 0 for a single value.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn metric_value(s: &crate::engine::Snapshot, m: Metric) -> f64 {
    match m {
        Metric::PseudoRegret => s.pseudo_regret,
        Metric::SampledRegret => s.sampled_regret,
        Metric::Verifications => s.verifications as f64,
        Metric::Contamination => s.contamination,
        Metric::AttackCount => s.attack_count as f64,
    }
}

/// Per-checkpoint mean, standard error and 10/90 quantiles of every metric.
pub fn summarize(trials: &[TrialResult]) -> Result<Vec<SummaryRow>> {
    let first = trials
        .first()
        .ok_or_else(|| Error::param("trials", "nothing to summarize"))?;
    if trials
        .iter()
        .any(|r| r.snapshots.len() != first.snapshots.len())
    {
        return Err(Error::Parse(
            "trials have different checkpoint grids".into(),
        ));
    }
    let mut rows = Vec::with_capacity(first.snapshots.len() * Metric::ALL.len());
    let mut values = Vec::with_capacity(trials.len());
    for (i, snap) in first.snapshots.iter().enumerate() {
        for metric in Metric::ALL {
            values.clear();
            values.extend(trials.iter().map(|r| metric_value(&r.snapshots[i], metric)));
            let (mean, stderr) = mean_stderr(&values);
            values.sort_by(f64::total_cmp);
            rows.push(SummaryRow {
                t: snap.t,
                metric,
                mean,
                stderr,
                q10: quantile(&values, 0.1),
                q90: quantile(&values, 0.9),
            });
        }
    }
    Ok(rows)
}

/// Least-squares fit of `y = a + b ln T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub a: f64,
    pub b: f64,
    pub rms_residual: f64,
    pub r_squared: f64,
}

pub fn fit_log_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if points
        .iter()
        .any(|&(t, y)| t.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || !y.is_finite())
    {
        return Err(Error::Fit("T must be positive and y finite".into()));
    }
    let mut ts: Vec<f64> = points.iter().map(|p| p.0).collect();
    ts.sort_by(f64::total_cmp);
    if ts.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Fit("duplicated T".into()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let x_bar = xs.iter().sum::<f64>() / n;
    let y_bar = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_bar).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(points)
        .map(|(x, p)| (x - x_bar) * (p.1 - y_bar))
        .sum();
    let b = sxy / sxx;
    let a = y_bar - b * x_bar;
    let ss_res: f64 = xs
        .iter()
        .zip(points)
        .map(|(x, p)| (p.1 - a - b * x).powi(2))
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - y_bar).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(ScalingFit {
        a,
        b,
        rms_residual: (ss_res / n).sqrt(),
        r_squared,
    })
}

/// Fires when growth is closer to linear than logarithmic:
/// `y_max / T_max ≥ 0.5 · y_mid / T_mid` on the points sorted by `T`.
pub fn grows_linearly(points: &[(f64, f64)]) -> bool {
    if points.len() < 2 {
        return false;
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (t_max, y_max) = sorted[sorted.len() - 1];
    let (t_mid, y_mid) = sorted[(sorted.len() - 1) / 2];
    y_max / t_max >= 0.5 * y_mid / t_mid
}

/// `regret(t)/t ≥ 0.25 Δ_max` at every checkpoint in the upper half of the grid.
pub fn linear_regret(series: &[(u64, f64)], max_gap: f64) -> bool {
    if series.is_empty() {
        return false;
    }
    let mut sorted = series.to_vec();
    sorted.sort_by_key(|p| p.0);
    let upper = &sorted[sorted.len() / 2..];
    upper.iter().all(|&(t, r)| r / t as f64 >= 0.25 * max_gap)
}

/// Series a report was fitted over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitAxis {
    /// Final values of runs with different horizons.
    Horizons,
    /// Checkpoints `t ≥ 10` of a single run.
    Checkpoints,
}

/// Log-scaling fit of one metric for one (learner, attacker, B, C, κ) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub learner: String,
    pub attacker: String,
    pub budget: Option<u64>,
    pub contamination: Option<f64>,
    pub kappa: Option<f64>,
    pub metric: Metric,
    pub axis: FitAxis,
    pub points: Vec<(f64, f64)>,
    pub fit: ScalingFit,
    /// `y_last / y_first` over the sorted points.
    pub growth_ratio: f64,
    pub linear: bool,
}

/// Groups summary rows and fits `metric` against `ln T`. Groups with at least
/// three horizons are fitted on their final values; single-run groups on
/// their own checkpoint curve.
pub fn scaling_reports(rows: &[CsvRow], metric: Metric) -> Result<Vec<ScalingReport>> {
    type Key = (String, String, Option<u64>, Option<u64>, Option<u64>);
    let mut groups: BTreeMap<Key, Vec<&CsvRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == metric) {
        let key = (
            r.learner.clone(),
            r.attacker.clone(),
            r.budget,
            r.contamination.map(f64::to_bits),
            r.kappa.map(f64::to_bits),
        );
        groups.entry(key).or_default().push(r);
    }
    let mut reports = Vec::with_capacity(groups.len());
    for ((learner, attacker, budget, contamination, kappa), members) in groups {
        let mut horizons: Vec<u64> = members.iter().map(|r| r.horizon).collect();
        horizons.sort_unstable();
        horizons.dedup();
        let (axis, mut points): (FitAxis, Vec<(f64, f64)>) = if horizons.len() >= 3 {
            let finals = horizons
                .iter()
                .map(|&h| {
                    let ys: Vec<f64> = members
                        .iter()
                        .filter(|r| r.horizon == h && r.t == h)
                        .map(|r| r.mean)
                        .collect();
                    (h as f64, ys.iter().sum::<f64>() / ys.len().max(1) as f64)
                })
                .collect();
            (FitAxis::Horizons, finals)
        } else {
            let h = horizons[horizons.len() - 1];
            let curve = members
                .iter()
                .filter(|r| r.horizon == h && r.t >= 10)
                .map(|r| (r.t as f64, r.mean))
                .collect();
            (FitAxis::Checkpoints, curve)
        };
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let fit = fit_log_scaling(&points)
            .map_err(|e| Error::Fit(format!("{learner} vs {attacker}: {e}")))?;
        let growth_ratio = points[points.len() - 1].1 / points[0].1;
        reports.push(ScalingReport {
            learner,
            attacker,
            budget,
            contamination: contamination.map(f64::from_bits),
            kappa: kappa.map(f64::from_bits),
            metric,
            axis,
            linear: grows_linearly(&points),
            points,
            fit,
            growth_ratio,
        });
    }
    Ok(reports)
}
