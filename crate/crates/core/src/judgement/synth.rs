use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{argmax, ConfusionSpec, JudgementRecord, JudgementSource, Split};
use crate::error::{Error, Result};
use crate::level::Level;

/// Dirichlet concentrations for synthetic confidence vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Concentration on the predicted class.
    pub alpha_hit: f64,
    /// Concentration on every other class.
    pub alpha_miss: f64,
    /// Concentration on the true class when the prediction is wrong. Equal
    /// to `alpha_miss` makes confidence magnitude carry no information about
    /// correctness.
    pub alpha_truth_on_miss: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            alpha_hit: 8.0,
            alpha_miss: 1.0,
            alpha_truth_on_miss: 4.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        if !(finite_pos(self.alpha_hit) && finite_pos(self.alpha_miss) && finite_pos(self.alpha_truth_on_miss)) {
            return Err(Error::InvalidArgument(
                "concentrations must be finite and positive".into(),
            ));
        }
        if self.alpha_hit <= self.alpha_miss || self.alpha_hit <= self.alpha_truth_on_miss {
            return Err(Error::InvalidArgument(
                "alpha_hit must exceed alpha_miss and alpha_truth_on_miss".into(),
            ));
        }
        Ok(())
    }
}

fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // rounding fallthrough: last class with positive weight
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    Gamma::new(shape, 1.0).expect("validated positive shape").sample(rng)
}

/// Draws one record: truth from the priors, prediction from the confusion
/// row, then a Dirichlet confidence vector whose argmax is forced onto the
/// predicted class.
pub fn sample_synthetic<R: Rng + ?Sized>(
    spec: &ConfusionSpec,
    cfg: &SynthConfig,
    rng: &mut R,
    record_id: String,
) -> JudgementRecord {
    let n = spec.n_classes();
    let truth = categorical(rng, &spec.priors);
    let predicted = categorical(rng, &spec.confusion[truth]);

    let mut conf: Vec<f64> = (0..n)
        .map(|k| {
            let alpha = if k == predicted {
                cfg.alpha_hit
            } else if k == truth {
                cfg.alpha_truth_on_miss
            } else {
                cfg.alpha_miss
            };
            gamma(rng, alpha)
        })
        .collect();
    let total: f64 = conf.iter().sum();
    if total > 0.0 && total.is_finite() {
        conf.iter_mut().for_each(|c| *c /= total);
    } else {
        conf.iter_mut()
            .enumerate()
            .for_each(|(k, c)| *c = if k == predicted { 1.0 } else { 0.0 });
    }
    let top = argmax(&conf);
    if top != predicted {
        conf.swap(top, predicted);
    }
    // swapping can leave an exact tie at a lower index
    if argmax(&conf) != predicted {
        conf[predicted] = f64::min(1.0, conf[predicted] + f64::EPSILON);
    }

    JudgementRecord {
        level: spec.level,
        record_id,
        confidences: conf,
        label: truth,
        split: Split::Val,
        payload: None,
    }
}

/// Endless record stream driven by one confusion spec per level.
#[derive(Clone, Debug)]
pub struct SyntheticSource {
    specs: Vec<ConfusionSpec>,
    cfg: SynthConfig,
    split: Split,
    rng: ChaCha8Rng,
    drawn: u64,
}

impl SyntheticSource {
    /// `specs` must hold exactly one spec per level.
    pub fn new(specs: Vec<ConfusionSpec>, cfg: SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let mut ordered = Vec::with_capacity(specs.len());
        for level in Level::all() {
            let spec = specs
                .iter()
                .find(|s| s.level == level)
                .ok_or_else(|| Error::InvalidSpec(format!("missing spec for level {level}")))?;
            spec.validate()?;
            ordered.push(spec.clone());
        }
        Ok(SyntheticSource {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            specs: ordered,
            cfg,
            split: Split::Val,
            drawn: 0,
        })
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Same specs and concentrations with an independent random stream.
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut cfg = self.cfg.clone();
        cfg.seed = seed;
        SyntheticSource {
            specs: self.specs.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
            split: self.split,
            drawn: 0,
        }
    }

    pub fn spec(&self, level: Level) -> &ConfusionSpec {
        &self.specs[level.index()]
    }

    pub fn specs(&self) -> &[ConfusionSpec] {
        &self.specs
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

impl JudgementSource for SyntheticSource {
    fn draw(&mut self, level: Level) -> Result<JudgementRecord> {
        self.drawn += 1;
        let id = format!("syn-{}-L{}-{:09}", self.cfg.seed, level.id(), self.drawn);
        let mut record = sample_synthetic(&self.specs[level.index()], &self.cfg, &mut self.rng, id);
        record.split = self.split;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judgement::derive_confusion;

    fn lvl(id: u8) -> Level {
        Level::new(id).unwrap()
    }

    #[test]
    fn argmax_matches_prediction_every_draw() {
        // with alpha_truth_on_miss == alpha_miss the predicted class can be
        // read back only through the forced argmax
        let spec = derive_confusion(lvl(2), &[0.5109, 0.8930, 0.8814, 0.6906], &[137, 766, 506, 446]).unwrap();
        let cfg = SynthConfig {
            alpha_hit: 1.2,
            alpha_miss: 1.0,
            alpha_truth_on_miss: 1.0,
            seed: 9,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut hits = 0usize;
        let n = 20_000;
        for i in 0..n {
            let r = sample_synthetic(&spec, &cfg, &mut rng, i.to_string());
            r.validate().unwrap();
            let s: f64 = r.confidences.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            hits += usize::from(r.predicted_class() == r.label);
        }
        // top-1 accuracy tracks the spec even with weak concentrations
        let acc = hits as f64 / n as f64;
        assert!((acc - spec.accuracy()).abs() < 0.015, "{acc}");
    }

    #[test]
    fn huge_concentration_is_one_hot() {
        let spec = ConfusionSpec::identity_uniform(lvl(2));
        let cfg = SynthConfig {
            alpha_hit: 1e9,
            alpha_miss: 1.0,
            alpha_truth_on_miss: 1.0,
            seed: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..200 {
            let r = sample_synthetic(&spec, &cfg, &mut rng, i.to_string());
            assert!(r.confidences[r.label] > 1.0 - 1e-6);
        }
    }

    #[test]
    fn level_four_recall_monte_carlo() {
        let spec = derive_confusion(lvl(4), &[1.0, 0.9938], &[29856, 12355]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = SynthConfig::default();
        let (mut hits, mut total) = (0usize, 0usize);
        for i in 0..100_000 {
            let r = sample_synthetic(&spec, &cfg, &mut rng, i.to_string());
            if r.label == 0 {
                total += 1;
                hits += usize::from(r.predicted_class() == 0);
            }
        }
        let recall = hits as f64 / total as f64;
        assert!((recall - 1.0).abs() <= 0.005, "{recall}");
    }

    #[test]
    fn same_seed_same_stream() {
        let specs: Vec<_> = Level::all().map(ConfusionSpec::identity_uniform).collect();
        let cfg = SynthConfig {
            seed: 42,
            ..Default::default()
        };
        let mut a = SyntheticSource::new(specs.clone(), cfg.clone()).unwrap();
        let mut b = SyntheticSource::new(specs, cfg).unwrap();
        for level in Level::all().cycle().take(50) {
            assert_eq!(a.draw(level).unwrap(), b.draw(level).unwrap());
        }
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig::default().validate().is_ok());
        let bad = SynthConfig {
            alpha_hit: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(SyntheticSource::new(vec![], SynthConfig::default()).is_err());
    }
}
