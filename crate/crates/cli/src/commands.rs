use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use dmlab_core::a2c::{evaluate, train as train_a2c, Checkpoint, SamplingAgent, TrainConfig};
use dmlab_core::agents::{run_benchmark, run_scenarios, EpisodeRun};
use dmlab_core::env::{EnvConfig, EpisodeMode, RewardSpec, ScenarioEnv};
use dmlab_core::judgement::{
    calibration_report, load_dataset, write_jsonl, JudgementRecord, JudgementSource, Split, SynthConfig,
    SyntheticSource,
};
use dmlab_core::metrics::{
    comparison_table, render_comparison_text, write_comparison_csv, write_metric_log, MetricKind,
};
use dmlab_core::source::{stream_seed, SourceConfig, SpecChoice};
use dmlab_core::tuner::{run_grid, write_trials_csv, GridSpec};
use dmlab_core::Level;
use dmlab_service::report::{comparison_groups, participants};
use dmlab_service::store::{read_log, replay};
use dmlab_service::{Service, ServiceConfig};
use serde::{Deserialize, Serialize};

use crate::io::{
    create, echo_config, load_config, out_dir, parse_source, parse_spec_choice, read_scenarios, write_scenarios,
};
use crate::{BenchmarkArgs, EvalArgs, GridArgs, ReportArgs, ServeArgs, SynthArgs, TrainArgs};

/// Confidence bands for the gather-frequency table.
const GATHER_BANDS: [(f64, f64); 3] = [(0.0, 0.6), (0.6, 0.9), (0.9, 1.000_001)];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthFile {
    pub specs: SpecChoice,
    pub synth: SynthConfig,
    /// Level ids to write; empty means all five.
    pub levels: Vec<u8>,
    pub n_per_level: usize,
    /// Share of each level written to the validation split.
    pub val_fraction: f64,
}

impl Default for SynthFile {
    fn default() -> Self {
        SynthFile {
            specs: SpecChoice::Calibrated,
            synth: SynthConfig::default(),
            levels: Vec::new(),
            n_per_level: 10_000,
            val_fraction: 0.2,
        }
    }
}

/// Keeps every record it hands out.
struct Recording<S> {
    inner: S,
    drawn: Vec<JudgementRecord>,
}

impl<S: JudgementSource> JudgementSource for Recording<S> {
    fn draw(&mut self, level: Level) -> dmlab_core::Result<JudgementRecord> {
        let r = self.inner.draw(level)?;
        self.drawn.push(r.clone());
        Ok(r)
    }
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg: SynthFile = load_config(a.common.config.as_deref())?;
    if let Some(l) = &a.levels {
        cfg.levels = if l == "all" {
            Vec::new()
        } else {
            l.split(',')
                .map(|s| s.trim().parse::<u8>().with_context(|| format!("bad level id {s:?}")))
                .collect::<Result<_>>()?
        };
    }
    if let Some(n) = a.n {
        cfg.n_per_level = n;
    }
    if let Some(s) = &a.specs {
        cfg.specs = parse_spec_choice(s);
    }
    if let Some(seed) = a.common.seed {
        cfg.synth.seed = seed;
    }
    ensure!(cfg.n_per_level > 0, "n_per_level must be positive");
    ensure!((0.0..1.0).contains(&cfg.val_fraction), "val_fraction must be in [0, 1)");
    let levels: Vec<Level> = if cfg.levels.is_empty() {
        Level::all().collect()
    } else {
        cfg.levels
            .iter()
            .map(|&id| Level::new(id))
            .collect::<dmlab_core::Result<_>>()?
    };
    let dir = out_dir(a.common.out.as_deref(), "out/synth")?;
    echo_config(&dir, &cfg)?;

    let base = SyntheticSource::new(cfg.specs.load()?, cfg.synth.clone())?;
    let n_val = (cfg.n_per_level as f64 * cfg.val_fraction).round() as usize;
    let n_train = cfg.n_per_level - n_val;
    let mut train_src = Recording {
        inner: base.reseeded(stream_seed(cfg.synth.seed, 0)).with_split(Split::Train),
        drawn: Vec::new(),
    };
    let mut val_src = base.reseeded(stream_seed(cfg.synth.seed, 1)).with_split(Split::Val);

    let mut csv_out = csv::Writer::from_writer(create(&dir.join("calibration.csv"))?);
    csv_out.write_record(dmlab_core::judgement::CalibrationReport::CSV_HEADER)?;
    let mut text = String::new();
    let mut records = Vec::new();
    for &level in &levels {
        if n_train >= 1000 {
            let report = calibration_report(&mut train_src, base.spec(level), n_train)?;
            report.write_csv_rows(&mut csv_out)?;
            text.push_str(&report.to_string());
            text.push('\n');
        } else {
            log::warn!("level {level}: {n_train} training records is too few for a calibration report");
            for _ in 0..n_train {
                train_src.draw(level)?;
            }
        }
        records.append(&mut train_src.drawn);
        for _ in 0..n_val {
            records.push(val_src.draw(level)?);
        }
    }
    csv_out.flush()?;
    fs::write(dir.join("calibration.txt"), text)?;
    write_jsonl(create(&dir.join("records.jsonl"))?, &records)?;
    log::info!(
        "wrote {} records to {}",
        records.len(),
        dir.join("records.jsonl").display()
    );
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkFile {
    pub source: SourceConfig,
    pub n_scenarios: usize,
    pub mode: EpisodeMode,
    pub rewards: RewardSpec,
}

impl Default for BenchmarkFile {
    fn default() -> Self {
        BenchmarkFile {
            source: SourceConfig::default(),
            n_scenarios: 10_000,
            mode: EpisodeMode::ContinueThrough,
            rewards: RewardSpec::default(),
        }
    }
}

fn write_run(dir: &Path, run: &EpisodeRun) -> Result<()> {
    run.summary().write_csv(create(&dir.join("metrics.csv"))?)?;
    write_scenarios(&dir.join("scenarios.csv"), &run.scenarios)?;
    Ok(())
}

fn print_summary(label: &str, run: &EpisodeRun) {
    let s = run.summary();
    println!(
        "{label}: {} scenarios, tree score {:.4} +- {:.4}, correct {:.4}, wrong {:.4}, gather {:.4}",
        s.n,
        s.mean(MetricKind::TreeScore),
        s.std(MetricKind::TreeScore),
        s.mean(MetricKind::Correct),
        s.mean(MetricKind::Wrong),
        s.mean(MetricKind::Gather),
    );
}

fn seeded(source: SourceConfig, seed: Option<u64>) -> SourceConfig {
    match seed {
        Some(s) => source.with_seed(s),
        None => source,
    }
}

pub fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let mut cfg: BenchmarkFile = load_config(a.common.config.as_deref())?;
    if let Some(s) = &a.source {
        cfg.source = parse_source(s, true)?;
    }
    cfg.source = seeded(cfg.source, a.common.seed);
    if let Some(n) = a.n {
        cfg.n_scenarios = n;
    }
    if let Some(m) = a.mode {
        cfg.mode = m.into();
    }
    let dir = out_dir(a.common.out.as_deref(), "out/benchmark")?;
    echo_config(&dir, &cfg)?;
    let source = cfg.source.factory()?.open(0);
    let run = run_benchmark(source, cfg.mode, cfg.rewards.clone(), cfg.n_scenarios)?;
    write_run(&dir, &run)?;
    print_summary("benchmark", &run);
    Ok(())
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainFile {
    pub source: SourceConfig,
    /// Periodic evaluation stream; defaults to a held-out stream of `source`.
    pub eval_source: Option<SourceConfig>,
    pub train: TrainConfig,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainFile = load_config(a.common.config.as_deref())?;
    if let Some(s) = &a.source {
        cfg.source = parse_source(s, true)?;
    }
    let t = &mut cfg.train;
    if let Some(seed) = a.common.seed {
        t.seed = seed;
    }
    if let Some(v) = a.total_steps {
        t.total_steps = v;
    }
    if let Some(v) = a.gamma {
        t.gamma = v;
    }
    if let Some(v) = a.ent_coef {
        t.ent_coef = v;
    }
    if let Some(v) = a.lr {
        t.learning_rate = v;
    }
    if let Some(v) = a.n_envs {
        t.n_envs = v;
    }
    if let Some(v) = a.eval_interval {
        t.eval_interval = v;
    }
    if let Some(v) = a.eval_episodes {
        t.eval_episodes = v;
    }
    if let Some(m) = a.mode {
        t.env.mode = m.into();
    }
    t.validate()?;
    let dir = out_dir(a.common.out.as_deref(), "out/train")?;
    echo_config(&dir, &cfg)?;

    let seed = cfg.train.seed;
    let factory = cfg.source.factory()?;
    let sources: Vec<_> = (0..cfg.train.n_envs as u64)
        .map(|i| factory.open(stream_seed(seed, 1 + 2 * i)))
        .collect();
    let eval_source = match &cfg.eval_source {
        Some(e) => e.factory()?.open(stream_seed(seed, 2)),
        None => factory.open(stream_seed(seed, 2)),
    };
    let eval_source = (cfg.train.eval_interval > 0).then_some(eval_source);
    let started = std::time::Instant::now();
    let outcome = train_a2c(&cfg.train, sources, eval_source)?;
    log::info!(
        "trained {} steps ({} updates, {} scenarios) in {:.1?}{}",
        outcome.steps,
        outcome.updates,
        outcome.episodes.len(),
        started.elapsed(),
        if outcome.stopped_early { ", stopped early" } else { "" }
    );
    Checkpoint::new(&cfg.train, &outcome.model, outcome.steps).save(dir.join("checkpoint.json"))?;
    write_metric_log(
        create(&dir.join("train_metrics.csv"))?,
        &outcome.train_log(cfg.train.log_interval),
    )?;
    write_metric_log(create(&dir.join("eval_metrics.csv"))?, &outcome.eval_log())?;
    if let Some(last) = outcome.evals.last() {
        println!(
            "step {}: greedy tree score {:.4}, correct {:.4}",
            last.step,
            last.summary.mean(MetricKind::TreeScore),
            last.summary.mean(MetricKind::Correct)
        );
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalFile {
    pub checkpoint: Option<PathBuf>,
    pub source: SourceConfig,
    pub n_scenarios: usize,
    /// Defaults to the mode the checkpoint was trained in.
    pub mode: Option<EpisodeMode>,
    pub stochastic: bool,
    pub seed: u64,
}

impl Default for EvalFile {
    fn default() -> Self {
        EvalFile {
            checkpoint: None,
            source: SourceConfig::default(),
            n_scenarios: 1000,
            mode: None,
            stochastic: false,
            seed: 0,
        }
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = if path.is_dir() {
        path.join("checkpoint.json")
    } else {
        path.to_path_buf()
    };
    Checkpoint::load(&file).with_context(|| format!("loading checkpoint {}", file.display()))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut cfg: EvalFile = load_config(a.common.config.as_deref())?;
    if let Some(c) = a.checkpoint {
        cfg.checkpoint = Some(c);
    }
    if let Some(s) = &a.source {
        cfg.source = parse_source(s, true)?;
    }
    if let Some(seed) = a.common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = a.n {
        cfg.n_scenarios = n;
    }
    if let Some(m) = a.mode {
        cfg.mode = Some(m.into());
    }
    cfg.stochastic |= a.stochastic;
    let Some(path) = cfg.checkpoint.clone() else {
        bail!("eval needs --checkpoint");
    };
    let ckpt = load_checkpoint(&path)?;
    let model = ckpt.model()?;
    let dir = out_dir(a.common.out.as_deref(), "out/eval")?;
    echo_config(&dir, &cfg)?;

    let env_cfg = EnvConfig {
        mode: cfg.mode.unwrap_or(ckpt.config.env.mode),
        ..ckpt.config.env.clone()
    };
    let source = cfg.source.with_seed(stream_seed(cfg.seed, 3)).factory()?.open(0);
    let mut env = ScenarioEnv::new(source, env_cfg);
    let run = if cfg.stochastic {
        run_scenarios(&mut env, &mut SamplingAgent::new(&model, cfg.seed), cfg.n_scenarios)?
    } else {
        evaluate(&model, &mut env, cfg.n_scenarios)?
    };
    write_run(&dir, &run)?;
    let mut w = csv::Writer::from_writer(create(&dir.join("gather_bands.csv"))?);
    w.write_record(["band_lo", "band_hi", "steps", "gather_frequency"])?;
    for (lo, hi) in GATHER_BANDS {
        let steps = run
            .traces
            .iter()
            .filter(|t| t.max_confidence >= lo && t.max_confidence < hi)
            .count();
        let freq = run
            .gather_frequency(lo, hi)
            .map(|f| format!("{f:.6}"))
            .unwrap_or_default();
        w.write_record([format!("{lo}"), format!("{}", hi.min(1.0)), steps.to_string(), freq])?;
    }
    w.flush()?;
    print_summary("eval", &run);
    Ok(())
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GridFile {
    pub source: SourceConfig,
    pub grid: GridSpec,
}

pub fn gridsearch(a: GridArgs) -> Result<()> {
    let mut cfg: GridFile = load_config(a.common.config.as_deref())?;
    if let Some(s) = &a.source {
        cfg.source = parse_source(s, true)?;
    }
    let g = &mut cfg.grid;
    if let Some(seed) = a.common.seed {
        g.combo_seed = seed;
    }
    if let Some(v) = a.n_combos {
        g.n_combos = v;
    }
    if let Some(v) = a.seeds_per_combo {
        g.seeds_per_combo = v;
    }
    if let Some(v) = a.steps_per_trial {
        g.steps_per_trial = v;
    }
    if let Some(v) = a.holdout {
        g.holdout_episodes = v;
    }
    if let Some(v) = a.parallelism {
        g.parallelism = v;
    }
    g.validate()?;
    let dir = out_dir(a.common.out.as_deref(), "out/gridsearch")?;
    echo_config(&dir, &cfg)?;

    let report = run_grid(&cfg.grid, &cfg.source.factory()?)?;
    write_trials_csv(create(&dir.join("trials.csv"))?, &report.trials)?;
    let mut w = csv::Writer::from_writer(create(&dir.join("combos.csv"))?);
    w.write_record(["combo_id", "gamma", "ent_coef", "lr", "mean_reward", "n_ok"])?;
    for r in &report.combos {
        w.write_record([
            r.combo.combo_id.to_string(),
            r.combo.gamma.to_string(),
            r.combo.ent_coef.to_string(),
            r.combo.learning_rate.to_string(),
            format!("{:.6}", r.mean_reward),
            r.n_ok.to_string(),
        ])?;
    }
    w.flush()?;
    let mut best = create(&dir.join("best.json"))?;
    serde_json::to_writer_pretty(&mut best, &report.best)?;
    best.write_all(b"\n")?;
    best.flush()?;
    match &report.best {
        Some(b) => println!(
            "best combo {}: gamma {}, ent_coef {}, lr {} -> mean tree score {:.4} over {} seeds",
            b.combo.combo_id, b.combo.gamma, b.combo.ent_coef, b.combo.learning_rate, b.mean_reward, b.n_ok
        ),
        None => bail!("every trial failed"),
    }
    Ok(())
}

pub fn report(a: ReportArgs) -> Result<()> {
    let dir = out_dir(a.common.out.as_deref(), "out/report")?;
    echo_config(
        &dir,
        &serde_json::json!({
            "groups": a.groups,
            "service_log": a.service_log,
            "rl": a.rl,
        }),
    )?;
    let mut groups = Vec::new();
    for g in &a.groups {
        let Some((label, path)) = g.split_once('=') else {
            bail!("--group expects LABEL=path, got {g:?}");
        };
        groups.push((label.to_string(), read_scenarios(Path::new(path))?));
    }
    if let Some(path) = &a.service_log {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let records = replay(&read_log(BufReader::new(file))?)?;
        let people = participants(&records, &RewardSpec::default())?;
        groups.extend(comparison_groups(&people, None));
    }
    if let Some(path) = &a.rl {
        groups.push(("RL Agent".to_string(), read_scenarios(path)?));
    }
    ensure!(
        !groups.is_empty(),
        "nothing to report; pass --group, --service-log or --rl"
    );
    let rows = comparison_table(&groups);
    write_comparison_csv(create(&dir.join("comparison.csv"))?, &rows)?;
    let text = render_comparison_text(&rows);
    fs::write(dir.join("comparison.txt"), &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeFile {
    pub dataset: Option<PathBuf>,
    pub addr: SocketAddr,
    pub data_dir: PathBuf,
    pub media_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub rl_scenarios: usize,
    pub seed: u64,
}

impl Default for ServeFile {
    fn default() -> Self {
        ServeFile {
            dataset: None,
            addr: ([127, 0, 0, 1], 8080).into(),
            data_dir: PathBuf::from("service-data"),
            media_dir: None,
            checkpoint: None,
            rl_scenarios: 1000,
            seed: 0,
        }
    }
}

pub fn serve(a: ServeArgs) -> Result<()> {
    let mut cfg: ServeFile = load_config(a.common.config.as_deref())?;
    if let Some(v) = a.dataset {
        cfg.dataset = Some(v);
    }
    if let Some(v) = a.addr {
        cfg.addr = v;
    }
    if let Some(v) = a.data_dir {
        cfg.data_dir = v;
    }
    if let Some(v) = a.media_dir {
        cfg.media_dir = Some(v);
    }
    if let Some(v) = a.checkpoint {
        cfg.checkpoint = Some(v);
    }
    if let Some(v) = a.rl_scenarios {
        cfg.rl_scenarios = v;
    }
    if let Some(v) = a.common.seed {
        cfg.seed = v;
    }
    let Some(dataset) = cfg.dataset.clone() else {
        bail!("serve needs --dataset");
    };
    let dir = a.common.out.clone().unwrap_or_else(|| cfg.data_dir.clone());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    echo_config(&dir, &cfg)?;

    let pool = Arc::new(load_dataset(&dataset).with_context(|| format!("loading {}", dataset.display()))?);
    let rl_baseline = match &cfg.checkpoint {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let model = ckpt.model()?;
            let sampler = pool.sampler(
                Split::Val,
                stream_seed(cfg.seed, 4),
                dmlab_core::judgement::Exhaustion::Reshuffle,
            );
            let mut env = ScenarioEnv::new(sampler, ckpt.config.env.clone());
            let run = evaluate(&model, &mut env, cfg.rl_scenarios)?;
            print_summary("RL baseline", &run);
            Some(run.scenarios)
        }
        None => None,
    };
    let service = Service::open(
        pool,
        ServiceConfig {
            seed: cfg.seed,
            data_dir: Some(cfg.data_dir.clone()),
            rl_baseline,
            ..Default::default()
        },
    )?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(dmlab_service::serve(cfg.addr, Arc::new(service), cfg.media_dir.clone()))?;
    Ok(())
}
