//! Acceptance criteria for the debiasing pipeline. Runs every check, prints one
//! `PASS`/`FAIL` line per criterion and exits non-zero if any fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use covada::classifier::Loss;
use covada::config::{ConverterSpec, ExperimentConfig, Mode};
use covada::harness::{self, Medians};
use covada::metrics::{self, EvalBatch, GapOptions};
use covada::partition::split_by_confidence;
use rand::seq::SliceRandom;

use common::*;

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

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(0x5eed);
    let opts = GapOptions::default();
    let mut worst: f64 = 0.0;
    let mut checked_tpr = 0;
    for i in 0..1000 {
        let raw = random_batch(&mut r, 4, 3, 200);
        let batch = EvalBatch::new(
            raw.emotions.clone(),
            raw.truth.clone(),
            raw.pred.clone(),
            raw.groups.clone(),
        )
        .unwrap();
        worst = worst.max((metrics::macro_f1(&batch) - oracle_macro_f1(&raw)).abs());
        worst = worst.max((metrics::dp_gap(&batch).unwrap() - oracle_dp_gap(&raw)).abs());
        match (metrics::tpr_gap(&batch, opts), oracle_tpr_gap(&raw)) {
            (Ok(g), Some(o)) => {
                worst = worst.max((g.value - o).abs());
                checked_tpr += 1;
            }
            (Err(_), None) => {}
            (got, want) => return outcome(false, format!("batch {i}: {got:?} vs oracle {want:?}")),
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-12 && elapsed < Duration::from_secs(10),
        format!("max |diff| {worst:.2e} over 1000 batches ({checked_tpr} with defined TPR cells), {elapsed:.2?}"),
    )
}

fn hand_anchors() -> Outcome {
    let groups: Vec<String> = (0..20).map(|i| if i < 10 { "a" } else { "b" }.to_string()).collect();
    let truth = vec![vec![true]; 20];
    let pred = (0..20).map(|i| vec![i < 9 || (10..17).contains(&i)]).collect();
    let batch = EvalBatch::new(vec!["x".into()], truth, pred, groups).unwrap();
    let tpr = metrics::tpr_gap(&batch, GapOptions::default()).unwrap().value;

    let groups: Vec<String> = (0..4).map(|i| if i < 2 { "a" } else { "b" }.to_string()).collect();
    let pred = (0..4).map(|i| vec![i < 2]).collect();
    let batch = EvalBatch::new(vec!["x".into()], vec![vec![true]; 4], pred, groups).unwrap();
    let dp = metrics::dp_gap(&batch).unwrap();

    let tpr_expected = (0.9f64 - 0.7).abs();
    outcome(
        tpr == tpr_expected && (tpr - 0.2).abs() <= f64::EPSILON && dp == 0.5,
        format!("tpr_gap({{0.9, 0.7}}) = {tpr:?}, dp_gap = {dp:?}"),
    )
}

fn gradient_suite() -> Outcome {
    let mut r = rng(0x9a0d);
    let losses = [Loss::Ce, Loss::Gce { q: 0.3 }, Loss::Gce { q: 0.7 }, Loss::Gce { q: 1.0 }];
    let mut worst: f64 = 0.0;
    let mut limit: f64 = 0.0;
    for _ in 0..100 {
        let (params, x, y) = random_network(&mut r);
        for loss in losses {
            let analytic = params.loss_gradient(&x, &y, loss, None).unwrap().1.flatten();
            let numeric = numeric_gradient(&params, &x, &y, loss, 1e-6);
            worst = worst.max(max_relative_error(&analytic, &numeric, 1e-6));
        }
        let (ce, ce_grad) = params.loss_gradient(&x, &y, Loss::Ce, None).unwrap();
        let (gce, gce_grad) = params.loss_gradient(&x, &y, Loss::Gce { q: 1e-4 }, None).unwrap();
        limit = limit.max((ce - gce).abs());
        for (a, b) in ce_grad.flatten().iter().zip(gce_grad.flatten()) {
            limit = limit.max((a - b).abs());
        }
    }
    outcome(
        worst <= 1e-4 && limit <= 1e-3,
        format!("max relative error {worst:.2e} on 100 networks x 4 losses; GCE(q=1e-4) vs CE {limit:.2e}"),
    )
}

fn partition_suite() -> Outcome {
    let mut r = rng(0x9a27);
    for i in 0..500 {
        let (table, membership) = random_partition_instance(&mut r);
        let ratio = random_ratio(&mut r);
        let result = split_by_confidence(&table, &membership, ratio).unwrap();
        if let Err(e) = check_partition(&table, &membership, ratio, &result) {
            return outcome(false, format!("instance {i}: {e}"));
        }
        let mut shuffled = membership.clone();
        for ids in &mut shuffled.per_emotion {
            ids.shuffle(&mut r);
        }
        let again = split_by_confidence(&table, &shuffled, ratio).unwrap();
        if again != result {
            return outcome(false, format!("instance {i}: result depends on member order"));
        }
    }
    outcome(true, "500 random instances: disjoint, exhaustive, ordered, sized, order-invariant")
}

struct Benchmark {
    modes: Vec<(Mode, Medians, Duration)>,
    noisy_full: Medians,
    noisy_mild: Medians,
}

fn benchmark() -> Benchmark {
    let run = |mode: Mode, converter: ConverterSpec| {
        let mut config = ExperimentConfig::benchmark(mode);
        config.converter = Some(converter);
        let start = Instant::now();
        let records = harness::run(&config).unwrap();
        (harness::medians(&records), start.elapsed())
    };
    let modes = Mode::ALL
        .iter()
        .map(|&m| {
            let (med, t) = run(m, ConverterSpec::SyntheticSwap);
            (m, med, t)
        })
        .collect();
    Benchmark {
        modes,
        noisy_full: run(Mode::Covada, ConverterSpec::NoisySwap { leak: 1.0, sigma: 0.0 }).0,
        noisy_mild: run(Mode::Covada, ConverterSpec::NoisySwap { leak: 0.2, sigma: 0.1 }).0,
    }
}

impl Benchmark {
    fn get(&self, mode: Mode) -> (Medians, Duration) {
        let (_, m, t) = self.modes.iter().find(|(x, _, _)| *x == mode).unwrap();
        (*m, *t)
    }
}

fn debiasing_effect(b: &Benchmark) -> Outcome {
    let (erm, t_erm) = b.get(Mode::Erm);
    let (co, t_co) = b.get(Mode::Covada);
    let elapsed = t_erm + t_co;
    let tpr_ratio = co.tpr_gap / erm.tpr_gap;
    let dp_ratio = co.dp_gap / erm.dp_gap;
    outcome(
        tpr_ratio <= 0.8
            && dp_ratio <= 0.85
            && co.macro_f1 >= erm.macro_f1 - 0.03
            && elapsed < Duration::from_secs(180),
        format!(
            "erm f1/tpr/dp {:.3}/{:.3}/{:.3}, covada {:.3}/{:.3}/{:.3}; tpr x{tpr_ratio:.3}, dp x{dp_ratio:.3}; {elapsed:.1?}",
            erm.macro_f1, erm.tpr_gap, erm.dp_gap, co.macro_f1, co.tpr_gap, co.dp_gap
        ),
    )
}

fn mode_ordering(b: &Benchmark) -> Outcome {
    let (co, _) = b.get(Mode::Covada);
    let best = b.modes.iter().all(|(_, m, _)| co.tpr_gap <= m.tpr_gap);
    let summary: Vec<String> = b
        .modes
        .iter()
        .map(|(mode, m, _)| format!("{mode} {:.3}", m.tpr_gap))
        .collect();
    outcome(best, format!("median tpr_gap: {}", summary.join(", ")))
}

fn converter_sensitivity(b: &Benchmark) -> Outcome {
    let (swap, _) = b.get(Mode::Covada);
    let f1_drop = swap.macro_f1 - b.noisy_full.macro_f1;
    let tpr_shift = b.noisy_mild.tpr_gap - swap.tpr_gap;
    outcome(
        f1_drop >= 0.02 && tpr_shift.abs() <= 0.02,
        format!("noisy_swap(1,0) f1 drop {f1_drop:+.3}; noisy_swap(0.2,0.1) tpr_gap shift {tpr_shift:+.3}"),
    )
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::benchmark(Mode::Covada);
    config.seeds = vec![1, 2];
    let path = dir.path().join("config.toml");
    std::fs::write(&path, config.to_toml()).unwrap();
    let run = |out: &Path| {
        Command::new(env!("CARGO_BIN_EXE_covada"))
            .arg("run")
            .arg("--config")
            .arg(&path)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap()
            .success()
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    if !run(&a) || !run(&b) {
        return outcome(false, "covada run exited with an error");
    }
    for name in ["results.csv", "per_emotion.csv", "scatter.csv"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        if x != y {
            return outcome(false, format!("{name} differs between runs"));
        }
    }
    outcome(true, "results.csv, per_emotion.csv and scatter.csv byte-identical across two runs")
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    report("metric oracle equivalence", metric_oracle());
    report("hand-check anchors", hand_anchors());
    report("gradient suite", gradient_suite());
    report("partition suite", partition_suite());
    let bench = benchmark();
    report("debiasing effect", debiasing_effect(&bench));
    report("mode ordering", mode_ordering(&bench));
    report("converter sensitivity", converter_sensitivity(&bench));
    report("determinism", cli_determinism());
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
