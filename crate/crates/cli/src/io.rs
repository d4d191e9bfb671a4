use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dmlab_core::judgement::Split;
use dmlab_core::metrics::ScenarioMetrics;
use dmlab_core::source::{SourceConfig, SpecChoice};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Config file contents, or defaults when no file is given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
        None => Ok(T::default()),
    }
}

pub fn out_dir(out: Option<&Path>, default: &str) -> Result<PathBuf> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Writes the effective configuration next to the outputs.
pub fn echo_config<T: Serialize>(dir: &Path, config: &T) -> Result<()> {
    let mut w = create(&dir.join("config.json"))?;
    serde_json::to_writer_pretty(&mut w, config)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// `calibrated`, `identity`, a records `.jsonl` file or a source config
/// `.json` file.
pub fn parse_source(arg: &str, reshuffle: bool) -> Result<SourceConfig> {
    match arg {
        "calibrated" => Ok(SourceConfig::synthetic(SpecChoice::Calibrated, 0)),
        "identity" => Ok(SourceConfig::synthetic(SpecChoice::Identity, 0)),
        p if p.ends_with(".jsonl") => Ok(SourceConfig::Dataset {
            path: p.into(),
            split: Split::Val,
            reshuffle,
        }),
        p if p.ends_with(".json") => {
            let text = fs::read_to_string(p).with_context(|| format!("reading source config {p}"))?;
            Ok(serde_json::from_str(&text).with_context(|| format!("parsing source config {p}"))?)
        }
        other => bail!(
            "unrecognized source {other:?}; expected calibrated, identity, a .jsonl dataset or a .json source config"
        ),
    }
}

pub fn parse_spec_choice(arg: &str) -> SpecChoice {
    match arg {
        "calibrated" => SpecChoice::Calibrated,
        "identity" => SpecChoice::Identity,
        path => SpecChoice::File(path.into()),
    }
}

/// One line of a per-scenario CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: usize,
    pub tree_score: f64,
    pub is_correct: f64,
    pub is_wrong: f64,
    pub gather_rate: f64,
    pub levels_attempted: usize,
    pub corrects: usize,
    pub wrongs: usize,
    pub gathers: usize,
}

impl ScenarioRow {
    fn new(scenario: usize, m: &ScenarioMetrics) -> Self {
        ScenarioRow {
            scenario,
            tree_score: m.tree_score,
            is_correct: m.is_correct,
            is_wrong: m.is_wrong,
            gather_rate: m.gather_rate,
            levels_attempted: m.levels_attempted,
            corrects: m.corrects,
            wrongs: m.wrongs,
            gathers: m.gathers,
        }
    }

    fn metrics(&self) -> ScenarioMetrics {
        ScenarioMetrics {
            tree_score: self.tree_score,
            is_correct: self.is_correct,
            is_wrong: self.is_wrong,
            gather_rate: self.gather_rate,
            levels_attempted: self.levels_attempted,
            corrects: self.corrects,
            wrongs: self.wrongs,
            gathers: self.gathers,
        }
    }
}

pub fn write_scenarios(path: &Path, scenarios: &[ScenarioMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for (i, m) in scenarios.iter().enumerate() {
        w.serialize(ScenarioRow::new(i, m))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scenarios(path: &Path) -> Result<Vec<ScenarioMetrics>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for row in r.deserialize::<ScenarioRow>() {
        out.push(row.with_context(|| format!("reading {}", path.display()))?.metrics());
    }
    Ok(out)
}
