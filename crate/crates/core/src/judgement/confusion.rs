use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::level::Level;

const STOCHASTIC_TOL: f64 = 1e-9;

/// Per-level error model: class priors and a row-stochastic confusion matrix
/// whose row `i` is the distribution of the predicted class given true class `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionSpec {
    pub level: Level,
    pub priors: Vec<f64>,
    pub recalls: Vec<f64>,
    /// Reference precisions the spec was calibrated against, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precisions: Option<Vec<f64>>,
    pub confusion: Vec<Vec<f64>>,
}

impl ConfusionSpec {
    pub fn new(level: Level, priors: Vec<f64>, confusion: Vec<Vec<f64>>) -> Result<Self> {
        let recalls = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| row.get(i).copied().unwrap_or(f64::NAN))
            .collect();
        let spec = ConfusionSpec {
            level,
            priors,
            recalls,
            precisions: None,
            confusion,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Perfect classifier with the given priors.
    pub fn identity(level: Level, priors: Vec<f64>) -> Result<Self> {
        let n = level.n_classes();
        let confusion = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        ConfusionSpec::new(level, priors, confusion)
    }

    /// Uniform priors, perfect classifier.
    pub fn identity_uniform(level: Level) -> Self {
        let n = level.n_classes();
        ConfusionSpec::identity(level, vec![1.0 / n as f64; n]).expect("uniform identity is valid")
    }

    /// Never predicts the true class; wrong mass is spread uniformly.
    pub fn always_wrong_uniform(level: Level) -> Self {
        let n = level.n_classes();
        let off = 1.0 / (n - 1) as f64;
        let confusion = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { off }).collect())
            .collect();
        ConfusionSpec::new(level, vec![1.0 / n as f64; n], confusion).expect("valid by construction")
    }

    pub fn n_classes(&self) -> usize {
        self.priors.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.level.n_classes();
        let bad = |msg: String| Err(Error::InvalidSpec(format!("level {}: {msg}", self.level)));
        if self.priors.len() != n || self.recalls.len() != n || self.confusion.len() != n {
            return bad(format!("expected {n} classes"));
        }
        if self.priors.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("prior outside [0, 1]".into());
        }
        let prior_sum: f64 = self.priors.iter().sum();
        if (prior_sum - 1.0).abs() > STOCHASTIC_TOL {
            return bad(format!("priors sum to {prior_sum}"));
        }
        for (i, row) in self.confusion.iter().enumerate() {
            if row.len() != n {
                return bad(format!("row {i} has {} entries", row.len()));
            }
            if row.iter().any(|p| !(0.0..=1.0 + STOCHASTIC_TOL).contains(p)) {
                return bad(format!("row {i} has an entry outside [0, 1]"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return bad(format!("row {i} sums to {sum}"));
            }
            if (row[i] - self.recalls[i]).abs() > STOCHASTIC_TOL {
                return bad(format!("diagonal {i} differs from recall"));
            }
        }
        if let Some(p) = &self.precisions {
            if p.len() != n {
                return bad("precision target length".into());
            }
        }
        Ok(())
    }

    /// P(true = i, predicted = j).
    pub fn joint(&self) -> Vec<Vec<f64>> {
        self.confusion
            .iter()
            .zip(&self.priors)
            .map(|(row, prior)| row.iter().map(|c| c * prior).collect())
            .collect()
    }

    /// Precision of each class under this model: P(true = j | predicted = j).
    /// A class that is never predicted reports 0.
    pub fn implied_precisions(&self) -> Vec<f64> {
        let joint = self.joint();
        (0..self.n_classes())
            .map(|j| {
                let predicted: f64 = joint.iter().map(|row| row[j]).sum();
                if predicted > 0.0 {
                    joint[j][j] / predicted
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Top-1 accuracy, `sum_i prior_i * recall_i`.
    pub fn accuracy(&self) -> f64 {
        self.priors.iter().zip(&self.recalls).map(|(p, r)| p * r).sum()
    }

    /// Redistributes off-diagonal mass so the implied precisions hit
    /// `targets`, leaving priors and recalls untouched.
    ///
    /// Binary levels have no freedom (each row has a single off-diagonal
    /// cell), so only the targets are recorded. Larger levels use iterative
    /// proportional fitting of the off-diagonal joint mass to the row totals
    /// `prior_i (1 - recall_i)` and the column totals implied by the targets.
    pub fn fit_precisions(mut self, targets: &[f64]) -> Result<Self> {
        let n = self.n_classes();
        if targets.len() != n {
            return Err(Error::InvalidSpec(format!(
                "level {}: {} precision targets for {n} classes",
                self.level,
                targets.len()
            )));
        }
        self.precisions = Some(targets.to_vec());
        if n <= 2 {
            return Ok(self);
        }
        if targets.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::InvalidSpec(format!(
                "level {}: precision targets must be in (0, 1]",
                self.level
            )));
        }

        let row_totals: Vec<f64> = (0..n).map(|i| self.priors[i] * (1.0 - self.recalls[i])).collect();
        let mut col_totals: Vec<f64> = (0..n)
            .map(|j| {
                let hit = self.priors[j] * self.recalls[j];
                hit / targets[j] - hit
            })
            .collect();
        // Published precisions are rounded; rescale so both margins agree.
        let row_sum: f64 = row_totals.iter().sum();
        let col_sum: f64 = col_totals.iter().sum();
        if col_sum <= 0.0 || row_sum <= 0.0 {
            return Ok(self);
        }
        col_totals.iter_mut().for_each(|c| *c *= row_sum / col_sum);

        let mut off = self.joint();
        for (i, row) in off.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for _ in 0..10_000 {
            for (row, total) in off.iter_mut().zip(&row_totals) {
                let sum: f64 = row.iter().sum();
                if sum > 0.0 {
                    row.iter_mut().for_each(|x| *x *= total / sum);
                }
            }
            let mut worst = 0.0f64;
            for j in 0..n {
                let sum: f64 = off.iter().map(|row| row[j]).sum();
                if sum > 0.0 {
                    worst = worst.max((sum - col_totals[j]).abs());
                    off.iter_mut().for_each(|row| row[j] *= col_totals[j] / sum);
                }
            }
            if worst < 1e-14 {
                break;
            }
        }
        // Final row pass so rows are exact; columns are then within the
        // convergence tolerance.
        for (row, total) in off.iter_mut().zip(&row_totals) {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter_mut().for_each(|x| *x *= total / sum);
            }
        }

        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            if self.priors[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                self.confusion[i][j] = if i == j {
                    self.recalls[i]
                } else {
                    off[i][j] / self.priors[i]
                };
            }
        }
        self.validate()?;
        Ok(self)
    }
}

/// Builds a confusion model from per-class recalls and supports. The prior
/// is the support share; row `i` keeps `recall_i` on the diagonal and splits
/// `1 - recall_i` over the other classes in proportion to their priors.
pub fn derive_confusion(level: Level, recalls: &[f64], supports: &[u64]) -> Result<ConfusionSpec> {
    let n = level.n_classes();
    if recalls.len() != n || supports.len() != n {
        return Err(Error::InvalidSpec(format!(
            "level {level} needs {n} recalls and supports, got {} and {}",
            recalls.len(),
            supports.len()
        )));
    }
    if let Some(i) = supports.iter().position(|&s| s == 0) {
        return Err(Error::InvalidSpec(format!("level {level}: class {i} has zero support")));
    }
    if recalls.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::InvalidSpec(format!("level {level}: recall outside [0, 1]")));
    }
    let total: u64 = supports.iter().sum();
    let priors: Vec<f64> = supports.iter().map(|&s| s as f64 / total as f64).collect();

    let confusion = (0..n)
        .map(|i| {
            let others: f64 = 1.0 - priors[i];
            (0..n)
                .map(|j| {
                    if i == j {
                        recalls[i]
                    } else {
                        (1.0 - recalls[i]) * priors[j] / others
                    }
                })
                .collect()
        })
        .collect();

    let spec = ConfusionSpec {
        level,
        priors,
        recalls: recalls.to_vec(),
        precisions: None,
        confusion,
    };
    spec.validate()?;
    Ok(spec)
}

/// On-disk form: all per-level specs in one JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionSpecFile {
    pub levels: Vec<ConfusionSpec>,
}

impl ConfusionSpecFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: ConfusionSpecFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        file.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for level in Level::all() {
            let found = self.levels.iter().filter(|s| s.level == level).count();
            if found != 1 {
                return Err(Error::InvalidSpec(format!(
                    "expected one spec for level {level}, found {found}"
                )));
            }
        }
        self.levels.iter().try_for_each(ConfusionSpec::validate)
    }

    pub fn get(&self, level: Level) -> &ConfusionSpec {
        self.levels
            .iter()
            .find(|s| s.level == level)
            .expect("validated to contain every level")
    }
}
