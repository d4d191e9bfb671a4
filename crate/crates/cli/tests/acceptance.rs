//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails that is not a known, documented gap.

use std::io::Cursor;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use dmlab_core::a2c::{
    clip_grad_norm, evaluate, global_norm, loss, loss_and_grad, train, ActorCritic, Batch, LossConfig,
    MaskedCategorical, TrainConfig,
};
use dmlab_core::agents::{run_benchmark, EpisodeRun};
use dmlab_core::env::{ActionMask, EnvConfig, EpisodeMode, Event, RewardSpec, ScenarioEnv};
use dmlab_core::judgement::{
    calibrated_levels, calibration_report, JudgementPool, JudgementRecord, JudgementSource, SynthConfig,
    SyntheticSource,
};
use dmlab_core::metrics::{
    comparison_table, render_comparison_text, ComparisonRow, ComparisonValues, MetricKind, ScenarioMetrics,
};
use dmlab_core::source::{stream_seed, SourceConfig, SpecChoice};
use dmlab_core::tuner::{read_trials_csv, run_grid, write_trials_csv, GridSpec};
use dmlab_core::{Level, GATHER_SLOT, N_SLOTS};
use dmlab_service::report::{build_report, comparison_groups, participants};
use dmlab_service::store::{read_log, replay};
use dmlab_service::{Service, ServiceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria expected to fail, with the reason recorded in the decisions ledger.
const KNOWN_RED: &[&str] = &["calibration"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("reward_algebra", reward_algebra),
        ("calibration", calibration),
        ("benchmark_band", benchmark_band),
        ("a2c_correctness", a2c_correctness),
        ("learning_signal", learning_signal),
        ("gather_rationality", gather_rationality),
        ("metrics_fidelity", metrics_fidelity),
        ("tuner", tuner),
    ];
    let mut unexpected = Vec::new();
    for (name, check) in criteria {
        let started = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let tag = match (result.pass, KNOWN_RED.contains(&name)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known gap)",
            (false, false) => {
                unexpected.push(name);
                "FAIL"
            }
        };
        println!("{tag} {name} [{:.1?}]: {}", started.elapsed(), result.detail);
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

fn synthetic(specs: SpecChoice, seed: u64) -> SyntheticSource {
    let specs = specs.load().unwrap();
    SyntheticSource::new(
        specs,
        SynthConfig {
            seed,
            ..Default::default()
        },
    )
    .unwrap()
}

// Random valid actions in both modes; the reward must equal the event algebra.
fn reward_algebra() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    for i in 0..10_000u64 {
        let mode = if i % 2 == 0 {
            EpisodeMode::TerminateOnWrong
        } else {
            EpisodeMode::ContinueThrough
        };
        let mut env = ScenarioEnv::new(synthetic(SpecChoice::Calibrated, i), EnvConfig::with_mode(mode));
        env.reset().unwrap();
        loop {
            let mask = env.valid_actions().unwrap();
            let valid: Vec<usize> = mask.valid_slots().collect();
            let slot = valid[rng.random_range(0..valid.len())];
            if env.step(slot).unwrap().episode_done {
                break;
            }
        }
        let state = env.state().unwrap();
        let count = |f: fn(Event) -> bool| state.events.iter().filter(|e| f(e.event)).count() as f64;
        let expected = count(|e| e == Event::Correct) - 5.0 * count(|e| e == Event::Wrong) - count(Event::is_gather);
        if state.accumulated_reward != expected {
            mismatches += 1;
        }
    }
    let mut perfect = 0;
    for mode in [EpisodeMode::TerminateOnWrong, EpisodeMode::ContinueThrough] {
        let run = run_benchmark(synthetic(SpecChoice::Identity, 5), mode, RewardSpec::default(), 500).unwrap();
        perfect += run
            .scenarios
            .iter()
            .filter(|s| s.tree_score == 5.0 && s.gathers == 0)
            .count();
    }
    let elapsed = started.elapsed();
    outcome(
        mismatches == 0 && perfect == 1000 && elapsed < Duration::from_secs(10),
        format!(
            "10000 random episodes, {mismatches} mismatches; {perfect}/1000 perfect scenarios score 5; {elapsed:.1?}"
        ),
    )
}

/// (recall, precision) per class, as published.
fn published() -> [Vec<(f64, f64)>; 5] {
    [
        vec![(0.7730, 0.8665), (0.8731, 0.7832)],
        vec![(0.5109, 0.4667), (0.8930, 0.8486), (0.8814, 0.9158), (0.6906, 0.7476)],
        vec![(0.7148, 0.6438), (0.7652, 0.8188)],
        vec![(1.0000, 1.0000), (0.9938, 0.9985)],
        vec![(0.7244, 0.7475), (0.4724, 0.7176)],
    ]
}

fn calibration() -> Outcome {
    let started = Instant::now();
    let specs = calibrated_levels();
    let mut source = synthetic(SpecChoice::Calibrated, 2024);
    let mut worst_recall: f64 = 0.0;
    let mut failing = Vec::new();
    for (spec, table) in specs.iter().zip(published()) {
        let report = calibration_report(&mut source, spec, 100_000).unwrap();
        let mut ok = true;
        for (c, (recall, precision)) in report.classes.iter().zip(&table) {
            let dr = (c.empirical_recall - recall).abs();
            let dp = (c.empirical_precision - precision).abs();
            worst_recall = worst_recall.max(dr);
            ok &= dr <= 0.01 && dp <= 0.03;
            if dp > 0.03 {
                failing.push(format!(
                    "L{} class {} precision {:.4} vs {:.4}",
                    spec.level, c.class, c.empirical_precision, precision
                ));
            }
        }
        if !ok && !failing.iter().any(|f| f.starts_with(&format!("L{}", spec.level))) {
            failing.push(format!("L{} recall", spec.level));
        }
    }
    let elapsed = started.elapsed();
    outcome(
        failing.is_empty() && elapsed < Duration::from_secs(30),
        format!(
            "n=100000 per level, max recall dev {worst_recall:.4}; {}; {elapsed:.1?}",
            if failing.is_empty() {
                "all precisions within 0.03".to_string()
            } else {
                failing.join(", ")
            }
        ),
    )
}

fn benchmark_band() -> Outcome {
    let n = 10_000;
    let source = synthetic(SpecChoice::Calibrated, 77);
    let run = run_benchmark(source, EpisodeMode::ContinueThrough, RewardSpec::default(), n).unwrap();
    let scores: Vec<f64> = run.scenarios.iter().map(|s| s.tree_score).collect();
    let correct = run.summary().mean(MetricKind::Correct);

    // Each level is answered once; correct with probability sum_i prior_i * recall_i.
    let accs: Vec<f64> = calibrated_levels()
        .iter()
        .map(|s| {
            s.priors
                .iter()
                .zip(&s.confusion)
                .enumerate()
                .map(|(i, (p, row))| p * row[i])
                .sum()
        })
        .collect();
    let mean_oracle: f64 = accs.iter().map(|a| 6.0 * a - 5.0).sum();
    let var_oracle: f64 = accs.iter().map(|a| 36.0 * a * (1.0 - a)).sum();
    let correct_oracle = accs.iter().sum::<f64>() / 5.0;

    let nf = n as f64;
    let mean = scores.iter().sum::<f64>() / nf;
    let var = scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    let m4 = scores.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
    let mean_se = (var / nf).sqrt();
    let var_se = ((m4 - var * var) / nf).sqrt();
    let pass = (correct - 0.82).abs() <= 0.05
        && (mean - mean_oracle).abs() <= 4.0 * mean_se
        && (var - var_oracle).abs() <= 4.0 * var_se
        && (correct - correct_oracle).abs() <= 0.01;
    outcome(
        pass,
        format!(
            "correct {correct:.4} (band 0.82+-0.05, oracle {correct_oracle:.4}); tree score mean {mean:.4} vs {mean_oracle:.4} (se {mean_se:.4}), std {:.4} vs {:.4}",
            var.sqrt(),
            var_oracle.sqrt()
        ),
    )
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize) -> Batch {
    let mut batch = Batch::default();
    for _ in 0..n {
        let level = Level::new(rng.random_range(1..=5)).unwrap();
        let credits = rng.random_range(0..=5);
        let mask = ActionMask::for_level(level, credits);
        let valid: Vec<usize> = mask.valid_slots().collect();
        let mut obs: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..1.0)).collect();
        obs[4..].iter_mut().for_each(|x| *x = 0.0);
        obs[4 + level.index()] = 1.0;
        batch.obs.push(obs);
        batch.actions.push(valid[rng.random_range(0..valid.len())]);
        batch.masks.push(mask);
        batch.returns.push(rng.random_range(-5.0..5.0));
        batch.advantages.push(rng.random_range(-3.0..3.0));
    }
    batch
}

fn a2c_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = LossConfig::default();
    let h = 1e-5;
    let mut worst_rel: f64 = 0.0;
    let mut checked = 0;
    for trial in 0..3 {
        let model = ActorCritic::new(9, &[16, 16], trial);
        let batch = random_batch(&mut rng, 16);
        let (_, grads) = loss_and_grad(&model, &batch, &cfg).unwrap();
        for (i, &g) in grads.iter().enumerate() {
            let mut up = model.clone();
            up.params_mut()[i] += h;
            let mut down = model.clone();
            down.params_mut()[i] -= h;
            let fd = (loss(&up, &batch, &cfg).unwrap() - loss(&down, &batch, &cfg).unwrap()) / (2.0 * h);
            let scale = fd.abs().max(g.abs());
            // below this scale the central difference itself is noise
            if scale > 1e-6 {
                worst_rel = worst_rel.max((fd - g).abs() / scale);
                checked += 1;
            }
        }
    }

    let logits = [0.3, -1.2, 2.0, 0.7, 5.0];
    let mask = ActionMask([true, false, true, false, false]);
    let dist = MaskedCategorical::new(&logits, &mask).unwrap();
    let mut counts = [0usize; N_SLOTS];
    for _ in 0..1_000_000 {
        counts[dist.sample(&mut rng)] += 1;
    }
    let masked_draws = counts[1] + counts[3] + counts[GATHER_SLOT];

    let mut worst_clip: f64 = 0.0;
    for _ in 0..100 {
        let mut g: Vec<f64> = (0..1000).map(|_| rng.random_range(-10.0..10.0)).collect();
        clip_grad_norm(&mut g, 1.0);
        worst_clip = worst_clip.max((global_norm(&g) - 1.0).abs());
    }
    outcome(
        worst_rel < 1e-4 && masked_draws == 0 && worst_clip <= 1e-9,
        format!(
            "max finite-difference rel err {worst_rel:.2e} over {checked} params; {masked_draws} masked draws in 1e6; clipped norm err {worst_clip:.1e}"
        ),
    )
}

/// The default-configuration policy trained once for 2e6 steps on the
/// calibrated stream, evaluated greedily on a held-out stream, plus the
/// benchmark on that same stream.
struct Trained {
    rl: EpisodeRun,
    bench: EpisodeRun,
    elapsed: Duration,
}

fn trained() -> &'static Trained {
    static TRAINED: OnceLock<Trained> = OnceLock::new();
    TRAINED.get_or_init(|| {
        let started = Instant::now();
        let cfg = TrainConfig::default();
        let factory = SourceConfig::synthetic(SpecChoice::Calibrated, 0).factory().unwrap();
        let out = train(
            &cfg,
            vec![factory.open(stream_seed(cfg.seed, 1))],
            None::<SyntheticSource>,
        )
        .unwrap();
        let n_eval = 5000;
        let eval_stream = || factory.open(stream_seed(cfg.seed, 2));
        let mut env = ScenarioEnv::new(eval_stream(), cfg.env.clone());
        let rl = evaluate(&out.model, &mut env, n_eval).unwrap();
        let bench = run_benchmark(eval_stream(), cfg.env.mode, cfg.env.rewards.clone(), n_eval).unwrap();
        Trained {
            rl,
            bench,
            elapsed: started.elapsed(),
        }
    })
}

fn learning_signal() -> Outcome {
    let t = trained();
    let (rl, b) = (t.rl.summary(), t.bench.summary());
    let calibrated_ok = rl.mean(MetricKind::Correct) >= b.mean(MetricKind::Correct)
        && rl.mean(MetricKind::TreeScore) > b.mean(MetricKind::TreeScore);

    let started = Instant::now();
    let cfg = TrainConfig {
        total_steps: 100_000,
        ..TrainConfig::default()
    };
    let factory = SourceConfig::synthetic(SpecChoice::Identity, 0).factory().unwrap();
    let out = train(&cfg, vec![factory.open(1)], None::<SyntheticSource>).unwrap();
    let mut env = ScenarioEnv::new(factory.open(2), cfg.env.clone());
    let id_acc = evaluate(&out.model, &mut env, 1000)
        .unwrap()
        .summary()
        .mean(MetricKind::Correct);
    let elapsed = t.elapsed + started.elapsed();
    outcome(
        calibrated_ok && id_acc >= 0.98 && elapsed < Duration::from_secs(1800),
        format!(
            "2e6 steps in {:.0?}: RL correct {:.4} tree {:.4} vs benchmark correct {:.4} tree {:.4} over {} scenarios; identity accuracy {id_acc:.4} after 1e5 steps",
            t.elapsed,
            rl.mean(MetricKind::Correct),
            rl.mean(MetricKind::TreeScore),
            b.mean(MetricKind::Correct),
            b.mean(MetricKind::TreeScore),
            rl.n
        ),
    )
}

fn gather_rationality() -> Outcome {
    let rl = &trained().rl;
    let low = rl.gather_frequency(0.0, 0.6);
    let high = rl.gather_frequency(0.9, 1.01);
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    outcome(
        rl.scenarios.len() >= 1000 && matches!((low, high), (Some(l), Some(h)) if l > h),
        format!(
            "gather frequency {} at max confidence < 0.6 vs {} above 0.9, over {} scenarios",
            fmt(low),
            fmt(high),
            rl.scenarios.len()
        ),
    )
}

/// Two victims and one volunteer. The first victim plays a perfect scenario
/// and a correct-then-wrong one; the second plays one scenario gathering
/// twice at level 1 and once at level 3, all correct; the volunteer fails
/// level 1. A fourth, unfinished session must not count.
const HAND_LOG: &str = r#"{"v":1,"type":"session_created","session_id":"a","role":"victim","created_at":1,"sampler_seed":1}
{"v":1,"type":"session_created","session_id":"b","role":"victim","created_at":2,"sampler_seed":2}
{"v":1,"type":"session_created","session_id":"c","role":"volunteer","created_at":3,"sampler_seed":3}
{"v":1,"type":"session_created","session_id":"d","role":"stakeholder","created_at":4,"sampler_seed":4}
{"v":1,"type":"action","session_id":"a","scenario_index":0,"is_training":true,"level":1,"slot":0,"event":"Wrong","reward":-5.0,"record_id":"t"}
{"v":1,"type":"scenario_completed","session_id":"a","scenario_index":0,"is_training":true}
{"v":1,"type":"action","session_id":"a","scenario_index":1,"is_training":false,"level":1,"slot":0,"event":"Correct","reward":1.0,"record_id":"r1"}
{"v":1,"type":"action","session_id":"a","scenario_index":1,"is_training":false,"level":2,"slot":0,"event":"Correct","reward":1.0,"record_id":"r2"}
{"v":1,"type":"action","session_id":"a","scenario_index":1,"is_training":false,"level":3,"slot":0,"event":"Correct","reward":1.0,"record_id":"r3"}
{"v":1,"type":"action","session_id":"a","scenario_index":1,"is_training":false,"level":4,"slot":0,"event":"Correct","reward":1.0,"record_id":"r4"}
{"v":1,"type":"action","session_id":"a","scenario_index":1,"is_training":false,"level":5,"slot":0,"event":"Correct","reward":1.0,"record_id":"r5"}
{"v":1,"type":"scenario_completed","session_id":"a","scenario_index":1,"is_training":false}
{"v":1,"type":"action","session_id":"a","scenario_index":2,"is_training":false,"level":1,"slot":0,"event":"Correct","reward":1.0,"record_id":"r6"}
{"v":1,"type":"action","session_id":"a","scenario_index":2,"is_training":false,"level":2,"slot":1,"event":"Wrong","reward":-5.0,"record_id":"r7"}
{"v":1,"type":"scenario_completed","session_id":"a","scenario_index":2,"is_training":false}
{"v":1,"type":"session_finished","session_id":"a","finished_at":10}
{"v":1,"type":"action","session_id":"b","scenario_index":1,"is_training":false,"level":1,"slot":4,"event":"Gathered","reward":-1.0,"record_id":"s1"}
{"v":1,"type":"action","session_id":"b","scenario_index":1,"is_training":false,"level":1,"slot":4,"event":"Gathered","reward":-1.0,"record_id":"s2"}
{"v":1,"type":"action","session_id":"b","scenario_index":1,"is_training":false,"level":1,"slot":0,"event":"Correct","reward":1.0,"record_id":"s3"}
{"v":1,"type":"action","session_id":"b","scenario_index":1,"is_training":false,"level":2,"slot":0,"event":"Correct","reward":1.0,"record_id":"s4"}
{"v":1,"type":"action","session_id":"b","scenario_index":1,"is_training":false,"level":3,"slot":4,"event":"Gathered","reward":-1.0,"record_id":"s5"}
{"v":1,"type":"action","session_id":"b","scenario_index":1,"is_training":false,"level":3,"slot":0,"event":"Correct","reward":1.0,"record_id":"s6"}
{"v":1,"type":"action","session_id":"b","scenario_index":1,"is_training":false,"level":4,"slot":0,"event":"Correct","reward":1.0,"record_id":"s7"}
{"v":1,"type":"action","session_id":"b","scenario_index":1,"is_training":false,"level":5,"slot":0,"event":"Correct","reward":1.0,"record_id":"s8"}
{"v":1,"type":"scenario_completed","session_id":"b","scenario_index":1,"is_training":false}
{"v":1,"type":"session_finished","session_id":"b","finished_at":11}
{"v":1,"type":"action","session_id":"c","scenario_index":1,"is_training":false,"level":1,"slot":1,"event":"Wrong","reward":-5.0,"record_id":"u1"}
{"v":1,"type":"scenario_completed","session_id":"c","scenario_index":1,"is_training":false}
{"v":1,"type":"session_finished","session_id":"c","finished_at":12}
{"v":1,"type":"action","session_id":"d","scenario_index":1,"is_training":false,"level":1,"slot":0,"event":"Correct","reward":1.0,"record_id":"w1"}
"#;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

fn metrics_fidelity() -> Outcome {
    let mut problems = Vec::new();

    // Hand-computed per scenario (tree, correct, wrong, gather):
    // a1 (5, 1, 0, 0); a2 (-4, 1/2, 1/2, 0); b1 (2, 1, 0, 2/5); c1 (-5, 0, 1, 0).
    let records = replay(&read_log(Cursor::new(HAND_LOG)).unwrap()).unwrap();
    let people = participants(&records, &RewardSpec::default()).unwrap();
    let groups = comparison_groups(&people, None);
    let rows = comparison_table(&groups);
    let expect: [(&str, usize, Option<[f64; 4]>); 7] = [
        ("Stakeholder", 0, None),
        ("Stakeholder (Most Scenarios Completed)", 0, None),
        ("Volunteer", 1, Some([-5.0, 0.0, 1.0, 0.0])),
        ("Volunteer (Most Scenarios Completed)", 1, Some([-5.0, 0.0, 1.0, 0.0])),
        ("Victim", 3, Some([1.0, 2.5 / 3.0, 0.5 / 3.0, 0.4 / 3.0])),
        ("Victim (Most Scenarios Completed)", 2, Some([0.5, 0.75, 0.25, 0.0])),
        ("All (Collective)", 4, Some([-0.5, 2.5 / 4.0, 1.5 / 4.0, 0.1])),
    ];
    let mut got: Vec<&ComparisonRow> = rows.iter().collect();
    got.sort_by_key(|r| expect.iter().position(|e| e.0 == r.label).unwrap_or(usize::MAX));
    if got.len() != expect.len() {
        problems.push(format!("{} rows, expected {}", got.len(), expect.len()));
    }
    for (row, (label, n, values)) in got.iter().zip(&expect) {
        let matches = row.label == *label
            && row.n_scenarios == *n
            && match (row.values, values) {
                (None, None) => true,
                (Some(v), Some(e)) => {
                    close(v.mts, e[0]) && close(v.mca, e[1]) && close(v.mwa, e[2]) && close(v.mad, e[3])
                }
                _ => false,
            };
        if !matches {
            problems.push(format!("row {label}: {row:?}"));
        }
    }
    let text = render_comparison_text(&rows);
    let header: Vec<&str> = text.lines().next().unwrap_or("").split_whitespace().collect();
    if header != ["Agent", "M.T.S", "M.C.A", "M.W.A", "M.A.D"] {
        problems.push(format!("header {header:?}"));
    }
    if !text.contains("N/A") {
        problems.push("empty role not rendered as N/A".into());
    }
    // the published aggregate-human row renders with four decimals
    let published_row = ComparisonRow {
        label: "All (Collective)".into(),
        n_scenarios: 1,
        values: Some(ComparisonValues {
            mts: -1.0651,
            mca: 0.6334,
            mwa: 0.3301,
            mad: 0.1042,
        }),
    };
    let line = render_comparison_text(&[published_row])
        .lines()
        .nth(1)
        .unwrap_or("")
        .to_string();
    if line.split_whitespace().collect::<Vec<_>>() != ["All", "(Collective)", "-1.0651", "0.6334", "0.3301", "0.1042"] {
        problems.push(format!("published row renders as {line:?}"));
    }

    // Random sessions through the service; its served scores must equal the
    // metrics module applied to its own log, bit for bit.
    let (served, compared) = service_round_trip();
    if served != compared.0 {
        problems.push("service scores differ from replayed metrics".into());
    }
    if !compared.1 {
        problems.push("service report differs from the offline report".into());
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!(
                "hand log rows match; {} served scenarios equal replayed metrics bit-exactly",
                served.len()
            )
        } else {
            problems.join("; ")
        },
    )
}

fn service_round_trip() -> (Vec<ScenarioMetrics>, (Vec<ScenarioMetrics>, bool)) {
    let mut source = synthetic(SpecChoice::Calibrated, 9);
    let mut records: Vec<JudgementRecord> = Vec::new();
    for level in Level::all() {
        for _ in 0..40 {
            records.push(source.draw(level).unwrap());
        }
    }
    let pool = Arc::new(JudgementPool::from_records(records));
    let service = Service::open(
        pool,
        ServiceConfig {
            seed: 4,
            ..Default::default()
        },
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut served = Vec::new();
    for (i, role) in ["victim", "volunteer", "stakeholder", "victim", "volunteer"]
        .iter()
        .enumerate()
    {
        let id = service.create_session(role).unwrap().session_id;
        // tutorial plus 2..=5 scored scenarios
        let target = 2 + i % 4;
        let mut scored = 0;
        while scored < target {
            let item = service.next_item(&id).unwrap();
            let options: Vec<usize> = item.options.iter().filter(|o| o.available).map(|o| o.action).collect();
            let action = options[rng.random_range(0..options.len())];
            let resp = service.submit_action(&id, action).unwrap();
            if let Some(m) = resp.scenario_metrics {
                if !item.is_training {
                    served.push(m);
                    scored += 1;
                }
            }
        }
        service.finish_session(&id).unwrap();
    }
    let logged = service.records().unwrap();
    let mut replayed = Vec::new();
    for r in &logged {
        replayed.extend(r.scored_metrics(&RewardSpec::default()).unwrap());
    }
    let people = participants(&logged, &RewardSpec::default()).unwrap();
    let offline = build_report(&comparison_groups(&people, None));
    let live = service.comparison_report(None).unwrap();
    (served, (replayed, offline == live))
}

fn tuner() -> Outcome {
    let spec = GridSpec {
        n_combos: 2,
        seeds_per_combo: 2,
        steps_per_trial: 5000,
        holdout_episodes: 100,
        parallelism: 2,
        combo_seed: 1,
        ..Default::default()
    };
    let factory = SourceConfig::synthetic(SpecChoice::Calibrated, 0).factory().unwrap();
    let first = run_grid(&spec, &factory).unwrap();
    let second = run_grid(&spec, &factory).unwrap();
    let mut buf = Vec::new();
    write_trials_csv(&mut buf, &first.trials).unwrap();
    let back = read_trials_csv(buf.as_slice()).unwrap();
    let all_ok = first.trials.len() == 4 && first.trials.iter().all(|t| t.mean_reward.is_some());
    let ranked: Vec<usize> = first.combos.iter().map(|c| c.combo.combo_id).collect();
    outcome(
        all_ok && first == second && back == first.trials && first.best.is_some(),
        format!(
            "{} trials, identical across runs: {}; csv round trip: {}; best combo {:?} of {ranked:?}",
            first.trials.len(),
            first == second,
            back == first.trials,
            first.best.as_ref().map(|b| b.combo.combo_id)
        ),
    )
}
