use std::fmt;
use std::io::Write;

use serde::Serialize;

use super::{derive_confusion, ConfusionSpec, JudgementSource};
use crate::error::{Error, Result};
use crate::level::Level;

/// Published per-class validation metrics of a level's classifier.
#[derive(Clone, Copy, Debug)]
pub struct EnablerClassRow {
    pub label: &'static str,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

const fn row(label: &'static str, precision: f64, recall: f64, f1: f64, support: u64) -> EnablerClassRow {
    EnablerClassRow {
        label,
        precision,
        recall,
        f1,
        support,
    }
}

static LEVEL_1: [EnablerClassRow; 2] = [
    row("informative", 0.8665, 0.7730, 0.8171, 1855),
    row("not informative", 0.7832, 0.8731, 0.8257, 1742),
];
static LEVEL_2: [EnablerClassRow; 4] = [
    row("affected individuals", 0.4667, 0.5109, 0.4878, 137),
    row("infrastructure and utility damage", 0.8486, 0.8930, 0.8702, 766),
    row("other relevant information", 0.9158, 0.8814, 0.8983, 506),
    row("rescue and volunteering efforts", 0.7476, 0.6906, 0.7179, 446),
];
static LEVEL_3: [EnablerClassRow; 2] = [
    row("little or no damage", 0.6438, 0.7148, 0.6775, 263),
    row("severe damage", 0.8188, 0.7652, 0.7911, 443),
];
static LEVEL_4: [EnablerClassRow; 2] = [
    row("no damage", 1.0000, 1.0000, 1.0000, 29856),
    row("major damage", 0.9985, 0.9938, 0.9961, 12355),
];
static LEVEL_5: [EnablerClassRow; 2] = [
    row("building no damage", 0.7475, 0.7244, 0.7358, 1974),
    row("building destroyed", 0.7176, 0.4724, 0.5698, 1232),
];

/// Validation metrics of the classifier feeding `level`.
pub fn enabler_table(level: Level) -> &'static [EnablerClassRow] {
    match level.id() {
        1 => &LEVEL_1,
        2 => &LEVEL_2,
        3 => &LEVEL_3,
        4 => &LEVEL_4,
        _ => &LEVEL_5,
    }
}

/// Confusion specs for all five levels calibrated to [`enabler_table`]:
/// priors from supports, diagonal from recalls, off-diagonal mass fitted to
/// the published precisions where the level has room for it.
pub fn calibrated_levels() -> Vec<ConfusionSpec> {
    Level::all()
        .map(|level| {
            let table = enabler_table(level);
            let recalls: Vec<f64> = table.iter().map(|r| r.recall).collect();
            let supports: Vec<u64> = table.iter().map(|r| r.support).collect();
            let precisions: Vec<f64> = table.iter().map(|r| r.precision).collect();
            derive_confusion(level, &recalls, &supports)
                .and_then(|spec| spec.fit_precisions(&precisions))
                .expect("published tables produce valid specs")
        })
        .collect()
}

/// Per-class precision, recall and F1 from (truth, prediction) pairs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassificationMetrics {
    pub n_classes: usize,
    /// `counts[truth][predicted]`
    pub counts: Vec<Vec<u64>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<u64>,
    pub accuracy: f64,
}

impl ClassificationMetrics {
    pub fn from_pairs(n_classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut counts = vec![vec![0u64; n_classes]; n_classes];
        for (truth, pred) in pairs {
            counts[truth][pred] += 1;
        }
        let total: u64 = counts.iter().flatten().sum();
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let support: Vec<u64> = counts.iter().map(|row| row.iter().sum()).collect();
        let predicted: Vec<u64> = (0..n_classes).map(|j| counts.iter().map(|row| row[j]).sum()).collect();
        let recall: Vec<f64> = (0..n_classes).map(|i| ratio(counts[i][i], support[i])).collect();
        let precision: Vec<f64> = (0..n_classes).map(|j| ratio(counts[j][j], predicted[j])).collect();
        let f1 = precision
            .iter()
            .zip(&recall)
            .map(|(p, r)| if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
            .collect();
        let correct: u64 = (0..n_classes).map(|i| counts[i][i]).sum();
        ClassificationMetrics {
            n_classes,
            accuracy: ratio(correct, total),
            counts,
            precision,
            recall,
            f1,
            support,
        }
    }

    /// Row-normalized empirical confusion matrix.
    pub fn confusion_rates(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter()
                    .map(|c| if s == 0 { 0.0 } else { *c as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassCalibration {
    pub class: usize,
    pub label: &'static str,
    pub target_recall: f64,
    pub empirical_recall: f64,
    /// Published precision when the spec carries one, else the implied one.
    pub target_precision: f64,
    pub implied_precision: f64,
    pub empirical_precision: f64,
    pub empirical_f1: f64,
}

impl ClassCalibration {
    pub fn recall_deviation(&self) -> f64 {
        (self.empirical_recall - self.target_recall).abs()
    }

    pub fn precision_deviation(&self) -> f64 {
        (self.empirical_precision - self.target_precision).abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub level: Level,
    pub n: usize,
    pub classes: Vec<ClassCalibration>,
    /// Largest absolute gap between empirical and specified confusion rates.
    pub confusion_linf: f64,
    pub metrics: ClassificationMetrics,
}

impl CalibrationReport {
    pub fn max_recall_deviation(&self) -> f64 {
        self.classes
            .iter()
            .map(ClassCalibration::recall_deviation)
            .fold(0.0, f64::max)
    }

    pub fn max_precision_deviation(&self) -> f64 {
        self.classes
            .iter()
            .map(ClassCalibration::precision_deviation)
            .fold(0.0, f64::max)
    }

    pub fn write_csv_rows<W: Write>(&self, out: &mut csv::Writer<W>) -> Result<()> {
        for c in &self.classes {
            out.write_record([
                self.level.to_string(),
                c.class.to_string(),
                c.label.to_string(),
                self.n.to_string(),
                format!("{:.6}", c.target_recall),
                format!("{:.6}", c.empirical_recall),
                format!("{:.6}", c.recall_deviation()),
                format!("{:.6}", c.target_precision),
                format!("{:.6}", c.implied_precision),
                format!("{:.6}", c.empirical_precision),
                format!("{:.6}", c.precision_deviation()),
                format!("{:.6}", c.empirical_f1),
            ])?;
        }
        Ok(())
    }

    pub const CSV_HEADER: [&'static str; 12] = [
        "level",
        "class",
        "label",
        "n",
        "target_recall",
        "empirical_recall",
        "recall_abs_dev",
        "target_precision",
        "implied_precision",
        "empirical_precision",
        "precision_abs_dev",
        "empirical_f1",
    ];
}

impl fmt::Display for CalibrationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "Level {} (n = {}, confusion L-inf = {:.4})",
            self.level, self.n, self.confusion_linf
        )?;
        writeln!(
            f,
            "  {:<36} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "class", "rec*", "rec", "prec*", "prec~", "prec", "f1"
        )?;
        for c in &self.classes {
            writeln!(
                f,
                "  {:<36} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                c.label,
                c.target_recall,
                c.empirical_recall,
                c.target_precision,
                c.implied_precision,
                c.empirical_precision,
                c.empirical_f1
            )?;
        }
        Ok(())
    }
}

/// Draws `n` records of `spec.level` from `source` and compares the
/// argmax classifier they encode against the spec's targets.
pub fn calibration_report<S: JudgementSource + ?Sized>(
    source: &mut S,
    spec: &ConfusionSpec,
    n: usize,
) -> Result<CalibrationReport> {
    if n < 1000 {
        return Err(Error::InvalidArgument(format!("calibration needs n >= 1000, got {n}")));
    }
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let record = source.draw(spec.level)?;
        pairs.push((record.label, record.predicted_class()));
    }
    let metrics = ClassificationMetrics::from_pairs(spec.n_classes(), pairs);
    let implied = spec.implied_precisions();
    let targets = spec.precisions.clone().unwrap_or_else(|| implied.clone());
    let labels = spec.level.spec().class_labels;
    let classes = (0..spec.n_classes())
        .map(|i| ClassCalibration {
            class: i,
            label: labels[i],
            target_recall: spec.recalls[i],
            empirical_recall: metrics.recall[i],
            target_precision: targets[i],
            implied_precision: implied[i],
            empirical_precision: metrics.precision[i],
            empirical_f1: metrics.f1[i],
        })
        .collect();
    let confusion_linf = metrics
        .confusion_rates()
        .iter()
        .zip(&spec.confusion)
        .flat_map(|(emp, tgt)| emp.iter().zip(tgt).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    Ok(CalibrationReport {
        level: spec.level,
        n,
        classes,
        confusion_linf,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judgement::{SynthConfig, SyntheticSource};

    #[test]
    fn metrics_from_pairs() {
        let m = ClassificationMetrics::from_pairs(2, [(0, 0), (0, 1), (1, 1), (1, 1)]);
        assert_eq!(m.recall, vec![0.5, 1.0]);
        assert_eq!(m.precision, vec![1.0, 2.0 / 3.0]);
        assert_eq!(m.support, vec![2, 2]);
        assert!((m.accuracy - 0.75).abs() < 1e-12);
        assert!((m.f1[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_spec_reports_perfect_metrics() {
        let specs: Vec<_> = Level::all().map(ConfusionSpec::identity_uniform).collect();
        let mut source = SyntheticSource::new(specs.clone(), SynthConfig::default()).unwrap();
        let report = calibration_report(&mut source, &specs[0], 2000).unwrap();
        for c in &report.classes {
            assert_eq!(c.empirical_precision, 1.0);
            assert_eq!(c.empirical_recall, 1.0);
        }
        assert_eq!(report.confusion_linf, 0.0);
    }

    #[test]
    fn small_n_rejected() {
        let specs: Vec<_> = Level::all().map(ConfusionSpec::identity_uniform).collect();
        let mut source = SyntheticSource::new(specs.clone(), SynthConfig::default()).unwrap();
        assert!(calibration_report(&mut source, &specs[0], 999).is_err());
    }

    #[test]
    fn calibrated_levels_match_tables() {
        let specs = calibrated_levels();
        assert_eq!(specs.len(), 5);
        let l1 = &specs[0];
        assert!((l1.priors[0] - 1855.0 / 3597.0).abs() < 1e-12);
        assert_eq!(l1.recalls, vec![0.7730, 0.8731]);
        for spec in &specs[..4] {
            let targets = spec.precisions.as_ref().unwrap();
            for (p, t) in spec.implied_precisions().iter().zip(targets) {
                assert!((p - t).abs() < 0.01, "level {}: {p} vs {t}", spec.level);
            }
        }
    }
}
