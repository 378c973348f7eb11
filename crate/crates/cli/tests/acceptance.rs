//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Environment:
//! - `ACCEPTANCE_STRICT=1` exits non-zero when any criterion fails.
//! - `ACCEPTANCE_ITERATIONS=N` trains criteria 3, 6 and 8 for N iterations
//!   instead of 3000; from 30000 on, criterion 3 uses the 1e-3 target.

use std::process::{Command, ExitCode};
use std::time::Instant;

use spectral_rnn::bench::{run_bench, BenchConfig};
use spectral_rnn::commands::{mackey_pairs, TrainPlan, HELD_OUT_SEED};
use spectral_rnn::config::{CellArg, Domain, LossArg, ModelOptions, TrainOptions};
use spectral_rnn_core::cells::CellKind;
use spectral_rnn_core::data::{mackey_glass, mackey_glass_with_history, MackeyConfig};
use spectral_rnn_core::gradcheck::check_gradient;
use spectral_rnn_core::model::{Frontend, LossDomain, Model, ModelSpec};
use spectral_rnn_core::rng::uniform;
use spectral_rnn_core::spectral::{istft, stft, WindowSpec};
use spectral_rnn_core::train::{evaluate, MetricsRow};
use spectral_rnn_core::{RealSeries, Rng};

const ITERATIONS: usize = 3000;
const LONG_RUN: usize = 30_000;
const HELD_OUT: usize = 50;
const SEEDS: [u64; 3] = [0, 1, 2];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn round_trip() -> Outcome {
    let start = Instant::now();
    let ws = WindowSpec::new(128, 32, 0.5).unwrap();
    let (n, t) = (1024, 128);
    let (mut interior, mut overall) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let x = RealSeries::univariate(uniform(&mut Rng::new(seed), -1.0, 1.0, n).unwrap());
        let y = istft(&stft(&x, &ws).unwrap(), &ws, n).unwrap();
        let peak = x.max_abs();
        for (i, (a, b)) in x.data().iter().zip(y.data()).enumerate() {
            let e = (a - b).abs() / peak;
            overall = overall.max(e);
            if (t..=n - t).contains(&i) {
                interior = interior.max(e);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        interior <= 1e-6 && overall <= 1e-3 && secs < 1.0,
        format!("interior {interior:.2e} <= 1e-6, overall {overall:.2e} <= 1e-3, {secs:.3} s < 1 s"),
    )
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let x = mackey_glass(&MackeyConfig {
        t_end: 120.0,
        seed: 11,
        ..MackeyConfig::default()
    })
    .unwrap();
    let (ctx, tgt) = (x.slice(1000, 1032).unwrap(), x.slice(1032, 1064).unwrap());
    let mut worst = 0.0f64;
    let mut scalars = 0;
    for (i, cell) in [CellKind::Gru, CellKind::Basic, CellKind::ComplexGru].into_iter().enumerate() {
        let spec = ModelSpec {
            cell,
            hidden: 8,
            n_features: 1,
            frontend: Frontend::Spectral {
                window: WindowSpec::new(16, 8, 0.5).unwrap(),
                keep: None,
            },
        };
        let model = Model::init(spec, &mut Rng::new(i as u64)).unwrap();
        let (_, _, g) = model.loss_and_gradients(&ctx, &tgt, LossDomain::Time).unwrap();
        let analytic = model.flat_gradient(&g);
        let f = |p: &[f64]| {
            let mut m = model.clone();
            m.set_flat_params(p)?;
            Ok(m.loss_pass(&ctx, &tgt, LossDomain::Time)?.loss)
        };
        let report = check_gradient(f, &model.flat_params(), &analytic, 1e-6).unwrap();
        worst = worst.max(report.max_error);
        scalars += analytic.len();
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-5 && secs < 120.0,
        format!("{scalars} scalars over 3 cells incl. sigma, worst rel. error {worst:.2e} <= 1e-5, {secs:.1} s"),
    )
}

struct Run {
    mse: f64,
    log: Vec<MetricsRow>,
    secs: f64,
}

fn iterations() -> usize {
    std::env::var("ACCEPTANCE_ITERATIONS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|n| *n >= 100)
        .unwrap_or(ITERATIONS)
}

fn train_run(model: ModelOptions, loss: LossArg, seed: u64, held_out: &[(RealSeries, RealSeries)]) -> Run {
    let opts = TrainOptions {
        iterations: Some(iterations()),
        seed: Some(seed),
        loss: Some(loss),
        ..TrainOptions::default()
    };
    let start = Instant::now();
    let mut plan = TrainPlan::resolve(&model, &opts).unwrap();
    let mut log = Vec::new();
    let trained = plan.run(|row| log.push(*row)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    Run {
        mse: evaluate(&trained, held_out).unwrap(),
        log,
        secs,
    }
}

fn lowpass() -> ModelOptions {
    ModelOptions {
        domain: Some(Domain::Stft),
        window_size: Some(128),
        step: Some(64),
        lowpass: Some(4),
        hidden: Some(64),
        ..ModelOptions::default()
    }
}

fn window_down() -> ModelOptions {
    ModelOptions {
        domain: Some(Domain::Window),
        window_size: Some(64),
        downsample: Some(32),
        hidden: Some(64),
        ..ModelOptions::default()
    }
}

/// First recorded loss over the mean of the last 100.
fn loss_ratio(log: &[MetricsRow]) -> f64 {
    let tail = &log[log.len() - 100..];
    log[0].loss / (tail.iter().map(|r| r.loss).sum::<f64>() / tail.len() as f64)
}

fn reproduction(run: &Run) -> Outcome {
    let ratio = loss_ratio(&run.log);
    let n = run.log.len();
    let (target, budget) = if n >= LONG_RUN { (1e-3, f64::INFINITY) } else { (5e-3, 900.0) };
    outcome(
        run.mse <= target && ratio >= 10.0 && run.secs <= budget,
        format!(
            "{n} iterations, held-out mse {:.3e} <= {target:.0e}, loss ratio {ratio:.1} >= 10, {:.0} s",
            run.mse, run.secs
        ),
    )
}

fn param_counts() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_spectral-rnn"))
        .args(["info", "--all"])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let weights = |name: &str| -> f64 {
        text.lines()
            .find(|l| l.split(',').next() == Some(name))
            .and_then(|l| l.split(',').nth(5))
            .and_then(|w| w.parse().ok())
            .unwrap_or(f64::NAN)
    };
    let checks = [
        ("time-GRU", 13e3, 0.05),
        ("STFT-GRU", 46e3, 0.05),
        ("STFT-GRU-lowpass", 14e3, 0.05),
        ("STFT-cgRNN", 23e3, 0.10),
    ];
    let mut pass = out.status.success();
    let mut parts = Vec::new();
    for (name, target, tol) in checks {
        let w = weights(name);
        let dev = (w - target).abs() / target;
        pass &= dev <= tol;
        parts.push(format!("{name} {w} ({:+.1}%)", 100.0 * (w - target) / target));
    }
    outcome(pass, parts.join(", "))
}

fn speedup() -> Outcome {
    let rows = run_bench(&BenchConfig::default()).unwrap();
    let time = &rows[0];
    let stft = rows.iter().find(|r| r.pipeline == "STFT-GRU").unwrap();
    outcome(
        stft.speedup >= 4.0,
        format!(
            "time-GRU {:.1} ms ({} steps), STFT-GRU {:.1} ms ({} steps), speedup {:.1} >= 4",
            time.ms_per_iter, time.cell_steps, stft.ms_per_iter, stft.cell_steps, stft.speedup
        ),
    )
}

fn ablation(time: &Run, freq: &Run) -> Outcome {
    let ratio = freq.mse / time.mse;
    outcome(
        ratio >= 10.0,
        format!(
            "frequency loss {:.3e} vs time loss {:.3e}, ratio {ratio:.1} >= 10",
            freq.mse, time.mse
        ),
    )
}

fn invariants() -> Outcome {
    let cfg = MackeyConfig::default();
    let ones = vec![1.0; cfg.delay_steps().unwrap()];
    let eq = mackey_glass_with_history(&cfg, &ones).unwrap();
    let equilibrium = eq.data().iter().all(|v| v.to_bits() == 1.0f64.to_bits());

    let sim = |s| mackey_glass(&MackeyConfig { seed: s, ..cfg.clone() }).unwrap();
    let simulation = sim(5) == sim(5);

    let short = |cell: Option<CellArg>| {
        let model = ModelOptions {
            cell,
            lowpass: Some(4),
            ..ModelOptions::default()
        };
        let opts = TrainOptions {
            iterations: Some(20),
            seed: Some(3),
            ..TrainOptions::default()
        };
        let mut plan = TrainPlan::resolve(&model, &opts).unwrap();
        let mut log = Vec::new();
        let m = plan.run(|r| log.push((r.iteration, r.lr, r.loss, r.time_mse))).unwrap();
        let ctx = sim(8).slice(0, 2560).unwrap();
        (log, plan.checkpoint_of(&m).to_bytes(), m.forecast(&ctx, 300).unwrap())
    };
    let training = [None, Some(CellArg::Cgru)].into_iter().all(|c| short(c) == short(c));
    outcome(
        equilibrium && simulation && training,
        format!(
            "constant warm-up bit-exact: {equilibrium}, simulation repeatable: {simulation}, training/checkpoint/forecast repeatable: {training}"
        ),
    )
}

fn ordering(low: &[f64], down: &[f64]) -> Outcome {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (l, d) = (mean(low), mean(down));
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join("/");
    outcome(
        l <= d,
        format!(
            "lowpass mean {l:.3e} [{}] <= window-down mean {d:.3e} [{}]",
            fmt(low),
            fmt(down)
        ),
    )
}

fn main() -> ExitCode {
    let held_out = mackey_pairs(HELD_OUT_SEED, HELD_OUT).unwrap();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("criterion {n} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };

    report(1, "stft/istft round trip", round_trip());
    report(2, "full-pipeline gradients", gradients());

    let low: Vec<Run> = SEEDS
        .iter()
        .map(|&s| train_run(lowpass(), LossArg::Time, s, &held_out))
        .collect();
    report(3, "desk-scale lowpass training", reproduction(&low[0]));
    report(4, "parameter counts", param_counts());
    report(5, "windowing speedup", speedup());
    let freq = train_run(lowpass(), LossArg::Freq, SEEDS[0], &held_out);
    report(6, "frequency-loss ablation", ablation(&low[0], &freq));
    report(7, "equilibrium and determinism", invariants());
    let down: Vec<f64> = SEEDS
        .iter()
        .map(|&s| train_run(window_down(), LossArg::Time, s, &held_out).mse)
        .collect();
    let low_mse: Vec<f64> = low.iter().map(|r| r.mse).collect();
    report(8, "lowpass vs downsampling", ordering(&low_mse, &down));

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria pass",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failing: {failed:?}");
    }
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && !failed.is_empty() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
