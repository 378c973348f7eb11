//! Wall-clock comparison of per-sample, windowed and STFT pipelines at equal
//! hidden size. Each timed iteration is one teacher-forced forward and
//! backward pass over the whole series.

use std::time::Instant;

use spectral_rnn_core::cells::CellKind;
use spectral_rnn_core::data::{mackey_glass, MackeyConfig};
use spectral_rnn_core::model::{Frontend, Model, ModelSpec};
use spectral_rnn_core::spectral::WindowSpec;
use spectral_rnn_core::{RealSeries, Rng};

use crate::config::{variant_name, DEFAULT_SIGMA};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub seq_len: usize,
    pub window: usize,
    pub step: usize,
    pub hidden: usize,
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            seq_len: 2048,
            window: 64,
            step: 64,
            hidden: 64,
            repeats: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub pipeline: String,
    pub cell_steps: usize,
    /// Median over the repeats.
    pub ms_per_iter: f64,
    /// Per-sample pipeline time divided by this one.
    pub speedup: f64,
}

fn series(len: usize) -> Result<RealSeries> {
    let base = MackeyConfig::default();
    let cfg = MackeyConfig {
        t_end: (len.max(base.n_samples()?) as f64) * base.dt,
        ..base
    };
    Ok(mackey_glass(&cfg)?.slice(0, len)?)
}

fn time_pass(model: &Model, x: &RealSeries, repeats: usize) -> Result<(usize, f64)> {
    let steps = model.sequence_pass(x)?.cell_steps;
    let mut times: Vec<f64> = (0..repeats)
        .map(|_| {
            let t0 = Instant::now();
            model.sequence_pass(x).map(|_| t0.elapsed().as_secs_f64() * 1e3)
        })
        .collect::<Result<_, _>>()?;
    times.sort_by(f64::total_cmp);
    Ok((steps, times[times.len() / 2]))
}

pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.repeats == 0 || cfg.hidden == 0 {
        return Err(CliError::usage("repeats and hidden must be at least 1"));
    }
    let window = WindowSpec::new(cfg.window, cfg.step, DEFAULT_SIGMA).map_err(|e| CliError::usage(e.to_string()))?;
    if cfg.seq_len < 2 * cfg.window {
        return Err(CliError::usage("seq-len must cover at least two windows"));
    }
    let frontends = [
        Frontend::Windowed { size: 1, factor: 1 },
        Frontend::Windowed {
            size: cfg.window,
            factor: 1,
        },
        Frontend::Spectral { window, keep: None },
    ];
    let x = series(cfg.seq_len)?;
    let mut rows = Vec::new();
    for frontend in frontends {
        let spec = ModelSpec {
            cell: CellKind::Gru,
            hidden: cfg.hidden,
            n_features: 1,
            frontend,
        };
        let model = Model::init(spec, &mut Rng::new(0))?;
        let (cell_steps, ms) = time_pass(&model, &x, cfg.repeats)?;
        rows.push(BenchRow {
            pipeline: variant_name(&model.spec),
            cell_steps,
            ms_per_iter: ms,
            speedup: 1.0,
        });
    }
    let base = rows[0].ms_per_iter;
    for r in &mut rows {
        r.speedup = base / r.ms_per_iter;
    }
    Ok(rows)
}
