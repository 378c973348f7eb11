//! Mackey-Glass simulation, context/target splitting and forecast windows.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{uniform, Rng};
use crate::series::RealSeries;

/// `dx/dt = β·x_τ / (1 + x_τⁿ) − γ·x`, integrated with forward Euler.
#[derive(Debug, Clone, PartialEq)]
pub struct MackeyConfig {
    pub beta: f64,
    pub gamma: f64,
    pub power_n: f64,
    pub tau_delay: f64,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
}

impl Default for MackeyConfig {
    fn default() -> Self {
        MackeyConfig {
            beta: 0.2,
            gamma: 0.1,
            power_n: 10.0,
            tau_delay: 17.0,
            dt: 0.1,
            t_end: 512.0,
            seed: 0,
        }
    }
}

fn integer_ratio(num: f64, den: f64, what: &str) -> Result<usize> {
    let r = num / den;
    let k = math::floor(r + 0.5);
    if !r.is_finite() || k < 1.0 || (r - k).abs() > 1e-9 * r.abs().max(1.0) {
        return Err(Error::invalid(alloc::format!(
            "{what} / dt = {r} must be a positive integer"
        )));
    }
    Ok(k as usize)
}

impl MackeyConfig {
    /// Delay in steps, `tau_delay / dt`.
    pub fn delay_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        integer_ratio(self.tau_delay, self.dt, "tau_delay")
    }

    /// Output length, `t_end / dt` rounded to the nearest integer.
    pub fn n_samples(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.t_end >= 0.0) {
            return Err(Error::invalid("dt must be positive and t_end non-negative"));
        }
        Ok(math::floor(self.t_end / self.dt + 0.5) as usize)
    }
}

/// Simulates with warm-up values drawn from `1 + U[−0.1, 0.1]`.
pub fn mackey_glass(cfg: &MackeyConfig) -> Result<RealSeries> {
    let d = cfg.delay_steps()?;
    let mut rng = Rng::new(cfg.seed);
    let history: Vec<f64> = uniform(&mut rng, -0.1, 0.1, d)?.into_iter().map(|u| 1.0 + u).collect();
    mackey_glass_with_history(cfg, &history)
}

/// Simulates from an explicit pre-history `x_{−d} … x_{−1}`. The first
/// output is `x_0`, the first integrated sample.
pub fn mackey_glass_with_history(cfg: &MackeyConfig, history: &[f64]) -> Result<RealSeries> {
    let d = cfg.delay_steps()?;
    let n = cfg.n_samples()?;
    if history.len() != d {
        return Err(Error::shape("mackey_glass history", d, history.len()));
    }
    if history.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mackey_glass history"));
    }
    // window [x_{k−d}, …, x_k]; the value before the oldest draw repeats it
    let mut window: VecDeque<f64> = VecDeque::with_capacity(d + 1);
    window.push_back(history[0]);
    window.extend(history.iter().copied());
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let delayed = window[0];
        let current = window[d];
        let next = current
            + cfg.dt * (cfg.beta * delayed / (1.0 + math::powf(delayed, cfg.power_n)) - cfg.gamma * current);
        window.pop_front();
        window.push_back(next);
        out.push(next);
    }
    Ok(RealSeries::univariate(out))
}

/// First half as context, second as target; an odd sample goes to the
/// context.
pub fn split_half(x: &RealSeries) -> Result<(RealSeries, RealSeries)> {
    let mid = x.len().div_ceil(2);
    Ok((x.slice(0, mid)?, x.slice(mid, x.len())?))
}

/// Context length, gap and horizon of a forecasting task, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForecastTask {
    pub context_len: usize,
    pub horizon: usize,
    /// Samples between the end of the context and the first target.
    pub offset: usize,
}

impl ForecastTask {
    pub fn new(context_len: usize, horizon: usize, offset: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        Ok(ForecastTask {
            context_len,
            horizon,
            offset,
        })
    }

    pub fn span(&self) -> usize {
        self.context_len + self.offset + self.horizon
    }
}

/// Sliding `(context, target)` pairs with the given stride.
pub fn make_windows(x: &RealSeries, task: ForecastTask, stride: usize) -> Result<Vec<(RealSeries, RealSeries)>> {
    if stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    if task.horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let span = task.span();
    if x.len() < span {
        return Err(Error::TooShort {
            len: x.len(),
            required: span,
        });
    }
    let count = (x.len() - span) / stride + 1;
    (0..count)
        .map(|i| {
            let s = i * stride;
            let t = s + task.context_len + task.offset;
            Ok((x.slice(s, s + task.context_len)?, x.slice(t, t + task.horizon)?))
        })
        .collect()
}

/// Source of training pairs.
pub trait Dataset {
    fn next_pair(&mut self) -> Result<(RealSeries, RealSeries)>;
}

/// A fresh simulation per pair, split in half. Seeds come from one stream,
/// so the sequence of pairs is fixed by `base.seed`.
#[derive(Debug, Clone)]
pub struct MackeyDataset {
    base: MackeyConfig,
    seeds: Rng,
}

impl MackeyDataset {
    pub fn new(base: MackeyConfig) -> Result<Self> {
        base.delay_steps()?;
        let seeds = Rng::new(base.seed);
        Ok(MackeyDataset { base, seeds })
    }

    pub fn config(&self) -> &MackeyConfig {
        &self.base
    }
}

impl Dataset for MackeyDataset {
    fn next_pair(&mut self) -> Result<(RealSeries, RealSeries)> {
        let cfg = MackeyConfig {
            seed: self.seeds.next_u64(),
            ..self.base.clone()
        };
        split_half(&mackey_glass(&cfg)?)
    }
}

/// Cycles through a fixed list of pairs, reshuffling on every pass.
#[derive(Debug, Clone)]
pub struct PairDataset {
    pairs: Vec<(RealSeries, RealSeries)>,
    order: Vec<usize>,
    cursor: usize,
    rng: Rng,
}

impl PairDataset {
    pub fn new(pairs: Vec<(RealSeries, RealSeries)>, seed: u64) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("dataset holds no pairs"));
        }
        let order = (0..pairs.len()).collect();
        let mut ds = PairDataset {
            pairs,
            order,
            cursor: 0,
            rng: Rng::new(seed),
        };
        ds.rng.shuffle(&mut ds.order);
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(RealSeries, RealSeries)] {
        &self.pairs
    }
}

impl Dataset for PairDataset {
    fn next_pair(&mut self) -> Result<(RealSeries, RealSeries)> {
        if self.cursor == self.order.len() {
            self.rng.shuffle(&mut self.order);
            self.cursor = 0;
        }
        let pair = self.pairs[self.order[self.cursor]].clone();
        self.cursor += 1;
        Ok(pair)
    }
}
