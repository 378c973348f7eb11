//! Subcommands of the `spectral-rnn` binary.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use spectral_rnn_core::data::{
    mackey_glass, make_windows, split_half, Dataset, ForecastTask, MackeyConfig, MackeyDataset, PairDataset,
};
use spectral_rnn_core::model::{Model, ModelSpec, Normalization};
use spectral_rnn_core::train::{evaluate, mse_time, train_from, Clock, MetricsRow, TrainConfig};
use spectral_rnn_core::{RealSeries, Rng};

use crate::bench::{run_bench, BenchConfig};
use crate::checkpoint::Checkpoint;
use crate::config::{variant_name, CellArg, ConfigFile, ModelOptions, TrainOptions};
use crate::csvio::{fmt_f64, load_csv, save_csv, MetricsWriter};
use crate::error::{CliError, Result};

/// First seed of the held-out Mackey-Glass evaluation series.
pub const HELD_OUT_SEED: u64 = 1_000_000;

#[derive(Debug, Parser)]
#[command(name = "spectral-rnn", version, about = "Spectral recurrent forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a Mackey-Glass series to CSV.
    Generate(GenerateArgs),
    /// Train a model and write a checkpoint and metrics CSV.
    Train(TrainArgs),
    /// Closed-loop forecast from a checkpoint.
    Predict(PredictArgs),
    /// Mean forecast MSE of a checkpoint on held-out data.
    Eval(EvalArgs),
    /// Time the per-sample, windowed and STFT pipelines.
    Bench(BenchArgs),
    /// Parameter counts of model variants.
    Info(InfoArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 512.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML file with `[model]` and `[train]` tables; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelOptions,
    #[command(flatten)]
    pub train: TrainOptions,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub context: PathBuf,
    #[arg(long)]
    pub horizon: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Refuse checkpoints holding a different cell.
    #[arg(long, value_enum)]
    pub cell: Option<CellArg>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `mackey` for fresh simulations split in half, or a CSV path.
    #[arg(long, default_value = "mackey")]
    pub data: String,
    /// Number of Mackey-Glass series.
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    /// Seed of the first Mackey-Glass series.
    #[arg(long, default_value_t = HELD_OUT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub context: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub offset: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Per-pair MSE CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 2048)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 64)]
    pub window: usize,
    #[arg(long, default_value_t = 64)]
    pub step: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    /// List every reference variant instead of the one selected by flags.
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Describe a saved model.
    #[arg(long, conflicts_with = "all")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub n_features: usize,
    #[command(flatten)]
    pub model: ModelOptions,
}

struct WallClock(Instant);

impl Clock for WallClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

fn out_err(e: std::io::Error) -> CliError {
    CliError::io("stdout", e)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(&a, out),
        Command::Train(a) => train(a, out),
        Command::Predict(a) => predict(&a, out),
        Command::Eval(a) => eval(&a, out),
        Command::Bench(a) => bench(&a, out),
        Command::Info(a) => info(a, out),
    }
}

pub fn generate(a: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = MackeyConfig {
        seed: a.seed,
        t_end: a.t_end,
        dt: a.dt,
        ..MackeyConfig::default()
    };
    cfg.delay_steps().map_err(|e| CliError::usage(e.to_string()))?;
    let x = mackey_glass(&cfg)?;
    save_csv(&a.out, &x, None)?;
    writeln!(out, "wrote {} samples to {}", x.len(), a.out.display()).map_err(out_err)
}

/// Pairs cut from a CSV series; the default is one context/target split in half.
fn csv_pairs(
    x: &RealSeries,
    context: Option<usize>,
    horizon: Option<usize>,
    offset: Option<usize>,
    stride: Option<usize>,
) -> Result<Vec<(RealSeries, RealSeries)>> {
    let offset = offset.unwrap_or(0);
    let context = context.unwrap_or(x.len() / 2 + x.len() % 2);
    let horizon = horizon.unwrap_or(x.len().saturating_sub(context + offset));
    let task = ForecastTask::new(context, horizon, offset).map_err(|e| CliError::usage(e.to_string()))?;
    let stride = stride.unwrap_or(horizon.max(1));
    make_windows(x, task, stride).map_err(|e| CliError::data(e.to_string()))
}

enum TrainData {
    Mackey(MackeyDataset),
    Pairs(PairDataset),
}

impl TrainData {
    fn dataset(&mut self) -> &mut dyn Dataset {
        match self {
            TrainData::Mackey(d) => d,
            TrainData::Pairs(d) => d,
        }
    }

    /// Standardization fitted to the first pair the dataset will yield.
    fn fit_normalization(&self) -> Result<Normalization> {
        let (c, t) = match self {
            TrainData::Mackey(d) => d.clone().next_pair()?,
            TrainData::Pairs(d) => d.clone().next_pair()?,
        };
        Ok(Normalization::fit(&c.concat(&t)?)?)
    }
}

/// Everything `train` needs, resolved from flags and config file.
pub struct TrainPlan {
    pub config: TrainConfig,
    pub data_name: String,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    data: TrainData,
}

impl TrainPlan {
    pub fn resolve(model: &ModelOptions, opts: &TrainOptions) -> Result<Self> {
        let data_name = opts.data.clone().unwrap_or_else(|| "mackey".into());
        let seed = opts.seed.unwrap_or(0);
        let (data, n_features) = if data_name == "mackey" {
            if opts.context.is_some() || opts.horizon.is_some() || opts.offset.is_some() || opts.stride.is_some() {
                return Err(CliError::usage(
                    "--context/--horizon/--offset/--stride apply to CSV data; Mackey-Glass series are split in half",
                ));
            }
            let ds = MackeyDataset::new(MackeyConfig {
                seed,
                ..MackeyConfig::default()
            })?;
            (TrainData::Mackey(ds), 1)
        } else {
            let x = load_csv(Path::new(&data_name))?;
            let pairs = csv_pairs(&x, opts.context, opts.horizon, opts.offset, opts.stride)?;
            (TrainData::Pairs(PairDataset::new(pairs, seed)?), x.n_features())
        };
        let spec = model.spec(n_features)?;
        let mut config = TrainConfig::new(spec);
        config.seed = seed;
        if let Some(v) = opts.lr {
            config.lr0 = v;
        }
        if let Some(v) = opts.decay {
            config.decay = v;
        }
        if let Some(v) = opts.decay_every {
            config.decay_every = v;
        }
        if let Some(v) = opts.iterations {
            config.iterations = v;
        }
        if let Some(v) = opts.loss {
            config.loss_domain = v.into();
        }
        config.clip_norm = opts.clip_norm;
        if config.loss_domain == spectral_rnn_core::model::LossDomain::Frequency && config.model.codec().is_none() {
            return Err(CliError::usage("--loss freq needs --domain stft"));
        }
        config.validate().map_err(|e| CliError::usage(e.to_string()))?;
        if !opts.no_normalize {
            config.normalization = Some(data.fit_normalization()?);
        }
        let checkpoint = opts.checkpoint.clone().unwrap_or_else(|| PathBuf::from("model.sprn"));
        let metrics = opts
            .metrics
            .clone()
            .unwrap_or_else(|| checkpoint.with_extension("metrics.csv"));
        Ok(TrainPlan {
            config,
            data_name,
            checkpoint,
            metrics,
            data,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.config.model
    }

    /// Trains, streaming metrics to `on_row`.
    pub fn run(&mut self, mut on_row: impl FnMut(&MetricsRow)) -> Result<Model> {
        let cfg = &self.config;
        let mut model = Model::init(cfg.model.clone(), &mut Rng::new(cfg.seed))?;
        if let Some(n) = &cfg.normalization {
            model = model.with_normalization(n.clone())?;
        }
        let clock = WallClock(Instant::now());
        Ok(train_from(model, cfg, self.data.dataset(), &clock, &mut on_row)?)
    }

    pub fn checkpoint_of(&self, model: &Model) -> Checkpoint {
        let c = &self.config;
        let loss = match c.loss_domain {
            spectral_rnn_core::model::LossDomain::Time => "time",
            spectral_rnn_core::model::LossDomain::Frequency => "freq",
        };
        let mut extra = vec![
            ("data".to_string(), self.data_name.clone()),
            ("loss".to_string(), loss.to_string()),
            ("lr0".to_string(), c.lr0.to_string()),
            ("decay".to_string(), c.decay.to_string()),
            ("decay_every".to_string(), c.decay_every.to_string()),
            ("iterations".to_string(), c.iterations.to_string()),
            ("seed".to_string(), c.seed.to_string()),
        ];
        if let Some(v) = c.clip_norm {
            extra.push(("clip_norm".to_string(), v.to_string()));
        }
        Checkpoint::from_model(model, &extra)
    }
}

pub fn train(mut a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(path) = &a.config {
        let file = ConfigFile::load(path)?;
        a.model.merge(&file.model);
        a.train.merge(&file.train);
    }
    let mut plan = TrainPlan::resolve(&a.model, &a.train)?;
    let mut metrics = MetricsWriter::create(&plan.metrics)?;
    let mut write_err = None;
    let mut last = None;
    let model = plan.run(|row| {
        last = Some(*row);
        if write_err.is_none() {
            write_err = metrics.write(row).err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    metrics.finish()?;
    plan.checkpoint_of(&model).save(&plan.checkpoint)?;
    let last = last.expect("at least one iteration");
    writeln!(
        out,
        "{} ({} weights): {} iterations, final loss {}, time mse {}",
        variant_name(plan.spec()),
        model.param_count(),
        last.iteration,
        fmt_f64(last.loss),
        fmt_f64(last.time_mse)
    )
    .map_err(out_err)?;
    writeln!(out, "checkpoint {}, metrics {}", plan.checkpoint.display(), plan.metrics.display()).map_err(out_err)
}

pub fn load_model(path: &Path, cell: Option<CellArg>) -> Result<Model> {
    let ckpt = Checkpoint::load(path)?;
    if let Some(want) = cell {
        let found = ckpt.cell_kind()?;
        let want = want.into();
        if found != want {
            return Err(CliError::data(format!(
                "{} holds a {found} model, but --cell {want} was requested",
                path.display()
            )));
        }
    }
    ckpt.to_model()
}

pub fn predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.checkpoint, a.cell)?;
    let context = load_csv(&a.context)?;
    let y = model.forecast(&context, a.horizon)?;
    save_csv(&a.out, &y, None)?;
    writeln!(out, "wrote {} forecast samples to {}", y.len(), a.out.display()).map_err(out_err)
}

/// Held-out Mackey-Glass pairs with seeds `seed, seed + 1, …`.
pub fn mackey_pairs(seed: u64, count: usize) -> Result<Vec<(RealSeries, RealSeries)>> {
    (0..count as u64)
        .map(|i| {
            let cfg = MackeyConfig {
                seed: seed + i,
                ..MackeyConfig::default()
            };
            Ok(split_half(&mackey_glass(&cfg)?)?)
        })
        .collect()
}

pub fn eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.checkpoint, None)?;
    let pairs = if a.data == "mackey" {
        if a.count == 0 {
            return Err(CliError::usage("--count must be at least 1"));
        }
        mackey_pairs(a.seed, a.count)?
    } else {
        let x = load_csv(Path::new(&a.data))?;
        csv_pairs(&x, a.context, a.horizon, a.offset, a.stride)?
    };
    if let Some(path) = &a.out {
        let rows = pairs
            .iter()
            .map(|(c, t)| mse_time(&model.forecast(c, t.len())?, t))
            .collect::<Result<Vec<f64>, _>>()?;
        let x = RealSeries::new(rows.len(), 1, rows)?;
        save_csv(path, &x, Some(&["mse".to_string()]))?;
    }
    let mse = evaluate(&model, &pairs)?;
    writeln!(out, "pairs {}\nmse {}", pairs.len(), fmt_f64(mse)).map_err(out_err)
}

pub fn bench(a: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let rows = run_bench(&BenchConfig {
        seq_len: a.seq_len,
        window: a.window,
        step: a.step,
        hidden: a.hidden,
        repeats: a.repeats,
    })?;
    let mut text = String::from("pipeline,cell_steps,ms_per_iter,speedup\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{:.3},{:.2}\n",
            r.pipeline, r.cell_steps, r.ms_per_iter, r.speedup
        ));
    }
    if let Some(path) = &a.out {
        std::fs::write(path, &text).map_err(|e| CliError::io(path, e))?;
    }
    out.write_all(text.as_bytes()).map_err(out_err)
}

fn info_line(spec: &ModelSpec) -> Result<String> {
    let cell = spec.cell_config()?;
    Ok(format!(
        "{},{},{},{},{},{},{}",
        variant_name(spec),
        spec.cell,
        spec.hidden,
        cell.input_dim,
        cell.output_dim,
        cell.param_count(),
        spec.param_count()?
    ))
}

pub fn info(mut a: InfoArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(path) = &a.config {
        a.model.merge(&ConfigFile::load(path)?.model);
    }
    let specs = if a.all {
        crate::config::reference_variants()
            .iter()
            .map(|o| o.spec(a.n_features))
            .collect::<Result<Vec<_>>>()?
    } else if let Some(path) = &a.checkpoint {
        vec![Checkpoint::load(path)?.spec()?]
    } else {
        vec![a.model.spec(a.n_features)?]
    };
    let mut text = String::from("variant,cell,hidden,n_in,n_out,weights,trainable\n");
    for s in &specs {
        text.push_str(&info_line(s)?);
        text.push('\n');
    }
    out.write_all(text.as_bytes()).map_err(out_err)
}
