//! Scenario-level metrics, interval aggregation, smoothing and the
//! agent-comparison table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::{Event, EventRecord, RewardSpec};
use crate::error::{Error, Result};
use crate::level::Level;

/// The four per-scenario metrics tracked everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    TreeScore,
    Correct,
    Wrong,
    Gather,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::TreeScore,
        MetricKind::Correct,
        MetricKind::Wrong,
        MetricKind::Gather,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::TreeScore => "tree_score",
            MetricKind::Correct => "isTreeCorrectlyAnswered",
            MetricKind::Wrong => "isTreeWronglyAnswered",
            MetricKind::Gather => "isAdditionalDataRequested",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub tree_score: f64,
    /// Fraction of attempted levels answered correctly.
    pub is_correct: f64,
    pub is_wrong: f64,
    /// Fraction of attempted levels with at least one gather.
    pub gather_rate: f64,
    pub levels_attempted: usize,
    pub corrects: usize,
    pub wrongs: usize,
    pub gathers: usize,
}

impl ScenarioMetrics {
    pub fn get(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::TreeScore => self.tree_score,
            MetricKind::Correct => self.is_correct,
            MetricKind::Wrong => self.is_wrong,
            MetricKind::Gather => self.gather_rate,
        }
    }
}

/// Scores one scenario's event log. Rates are over the levels the scenario
/// reached; a level left by running out of credits is attempted but neither
/// correct nor wrong.
pub fn scenario_metrics(events: &[EventRecord], rewards: &RewardSpec) -> Result<ScenarioMetrics> {
    if events.is_empty() {
        return Err(Error::InvalidArgument("empty scenario event log".into()));
    }
    let mut levels: Vec<Level> = Vec::new();
    let mut gathered_levels: Vec<Level> = Vec::new();
    let (mut corrects, mut wrongs, mut gathers) = (0usize, 0usize, 0usize);
    for e in events {
        if !levels.contains(&e.level) {
            levels.push(e.level);
        }
        match e.event {
            Event::Correct => corrects += 1,
            Event::Wrong => wrongs += 1,
            Event::Gathered | Event::IllegalGather => {
                gathers += 1;
                if !gathered_levels.contains(&e.level) {
                    gathered_levels.push(e.level);
                }
            }
        }
    }
    let attempted = levels.len();
    let rate = |k: usize| k as f64 / attempted as f64;
    Ok(ScenarioMetrics {
        tree_score: corrects as f64 * rewards.correct + wrongs as f64 * rewards.wrong + gathers as f64 * rewards.gather,
        is_correct: rate(corrects),
        is_wrong: rate(wrongs),
        gather_rate: rate(gathered_levels.len()),
        levels_attempted: attempted,
        corrects,
        wrongs,
        gathers,
    })
}

/// Mean and population standard deviation. `(NaN, NaN)` for no data.
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let values: Vec<f64> = values.into_iter().collect();
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub metric: MetricKind,
    pub mean: f64,
    pub std: f64,
}

/// Mean and std of every metric over a set of scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub stats: Vec<MetricStat>,
}

impl MetricSummary {
    pub fn from_scenarios(scenarios: &[ScenarioMetrics]) -> Self {
        let stats = MetricKind::ALL
            .iter()
            .map(|&metric| {
                let (mean, std) = mean_std(scenarios.iter().map(|s| s.get(metric)));
                MetricStat { metric, mean, std }
            })
            .collect();
        MetricSummary {
            n: scenarios.len(),
            stats,
        }
    }

    pub fn mean(&self, metric: MetricKind) -> f64 {
        self.stat(metric).map_or(f64::NAN, |s| s.mean)
    }

    pub fn std(&self, metric: MetricKind) -> f64 {
        self.stat(metric).map_or(f64::NAN, |s| s.std)
    }

    fn stat(&self, metric: MetricKind) -> Option<&MetricStat> {
        self.stats.iter().find(|s| s.metric == metric)
    }

    /// CSV with columns `metric,mean,std,n`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "mean", "std", "n"])?;
        for s in &self.stats {
            w.write_record([
                s.metric.name().to_string(),
                fmt_num(s.mean),
                fmt_num(s.std),
                self.n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One line of a metric log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    /// End of the interval, in environment steps.
    pub step: u64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

/// Groups step-tagged scenarios into `[k*interval, (k+1)*interval)` buckets
/// and reports mean and population std per metric. Empty buckets emit no rows.
pub fn aggregate_intervals(items: &[(u64, ScenarioMetrics)], interval: u64) -> Vec<IntervalRow> {
    let interval = interval.max(1);
    let mut buckets: BTreeMap<u64, Vec<&ScenarioMetrics>> = BTreeMap::new();
    for (step, m) in items {
        buckets.entry(step / interval).or_default().push(m);
    }
    let mut rows = Vec::new();
    for (bucket, scenarios) in buckets {
        for metric in MetricKind::ALL {
            let (mean, std) = mean_std(scenarios.iter().map(|s| s.get(metric)));
            rows.push(IntervalRow {
                step: (bucket + 1) * interval,
                metric: metric.name().to_string(),
                mean,
                std,
            });
        }
    }
    rows
}

/// Writes a metric log with columns `step,metric,mean,std`.
pub fn write_metric_log<W: Write>(out: W, rows: &[IntervalRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "metric", "mean", "std"])?;
    for r in rows {
        w.write_record([r.step.to_string(), r.metric.clone(), fmt_num(r.mean), fmt_num(r.std)])?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.6}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SmoothKind {
    /// Trailing mean over `ceil(fraction * len)` points.
    RunningAverage { fraction: f64 },
    /// Gaussian kernel with `sigma = fraction * len`, cut at 3 sigma and
    /// renormalized where it runs off the ends.
    Gaussian { fraction: f64 },
}

impl SmoothKind {
    pub const RUNNING_10: SmoothKind = SmoothKind::RunningAverage { fraction: 0.10 };
    pub const GAUSSIAN_5: SmoothKind = SmoothKind::Gaussian { fraction: 0.05 };
}

pub fn smooth(series: &[f64], kind: SmoothKind) -> Vec<f64> {
    let n = series.len();
    if n == 0 {
        return Vec::new();
    }
    match kind {
        SmoothKind::RunningAverage { fraction } => {
            let window = ((fraction * n as f64).ceil() as usize).max(1);
            // prefix sums of deviations from the first point keep a constant
            // series exactly constant
            let base = series[0];
            let mut prefix = Vec::with_capacity(n + 1);
            prefix.push(0.0);
            for x in series {
                prefix.push(prefix.last().unwrap() + (x - base));
            }
            (0..n)
                .map(|i| {
                    let lo = (i + 1).saturating_sub(window);
                    base + (prefix[i + 1] - prefix[lo]) / (i + 1 - lo) as f64
                })
                .collect()
        }
        SmoothKind::Gaussian { fraction } => {
            let sigma = fraction * n as f64;
            if sigma <= 0.0 {
                return series.to_vec();
            }
            let radius = (3.0 * sigma).floor() as usize;
            let weights: Vec<f64> = (0..=radius)
                .map(|d| (-(d as f64).powi(2) / (2.0 * sigma * sigma)).exp())
                .collect();
            (0..n)
                .map(|i| {
                    let lo = i.saturating_sub(radius);
                    let hi = (i + radius).min(n - 1);
                    let (mut acc, mut norm) = (0.0, 0.0);
                    for (j, x) in series.iter().enumerate().take(hi + 1).skip(lo) {
                        let w = weights[i.abs_diff(j)];
                        acc += w * (x - series[i]);
                        norm += w;
                    }
                    series[i] + acc / norm
                })
                .collect()
        }
    }
}

/// Mean tree score, mean correct, wrong and gather rates of one group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonValues {
    pub mts: f64,
    pub mca: f64,
    pub mwa: f64,
    pub mad: f64,
}

impl ComparisonValues {
    pub fn from_scenarios(scenarios: &[ScenarioMetrics]) -> Option<Self> {
        if scenarios.is_empty() {
            return None;
        }
        let s = MetricSummary::from_scenarios(scenarios);
        Some(ComparisonValues {
            mts: s.mean(MetricKind::TreeScore),
            mca: s.mean(MetricKind::Correct),
            mwa: s.mean(MetricKind::Wrong),
            mad: s.mean(MetricKind::Gather),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub n_scenarios: usize,
    /// `None` renders as N/A.
    pub values: Option<ComparisonValues>,
}

impl ComparisonRow {
    pub fn new(label: impl Into<String>, scenarios: &[ScenarioMetrics]) -> Self {
        ComparisonRow {
            label: label.into(),
            n_scenarios: scenarios.len(),
            values: ComparisonValues::from_scenarios(scenarios),
        }
    }
}

/// One row per group, in the given order.
pub fn comparison_table<L: AsRef<str>>(groups: &[(L, Vec<ScenarioMetrics>)]) -> Vec<ComparisonRow> {
    groups
        .iter()
        .map(|(label, s)| ComparisonRow::new(label.as_ref(), s))
        .collect()
}

const NA: &str = "N/A";

pub fn write_comparison_csv<W: Write>(out: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["agent", "scenarios", "M.T.S", "M.C.A", "M.W.A", "M.A.D"])?;
    for r in rows {
        let cells: [String; 4] = match r.values {
            Some(v) => [v.mts, v.mca, v.mwa, v.mad].map(|x| format!("{x:.4}")),
            None => [NA; 4].map(String::from),
        };
        let mut rec = vec![r.label.clone(), r.n_scenarios.to_string()];
        rec.extend(cells);
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width table with four decimals per cell.
pub fn render_comparison_text(rows: &[ComparisonRow]) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5) + 2;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}{:>9}{:>9}{:>9}{:>9}",
        "Agent", "M.T.S", "M.C.A", "M.W.A", "M.A.D"
    );
    for r in rows {
        match r.values {
            Some(v) => {
                let _ = writeln!(
                    s,
                    "{:<width$}{:>9.4}{:>9.4}{:>9.4}{:>9.4}",
                    r.label, v.mts, v.mca, v.mwa, v.mad
                );
            }
            None => {
                let _ = writeln!(s, "{:<width$}{NA:>9}{NA:>9}{NA:>9}{NA:>9}", r.label);
            }
        }
    }
    s
}
