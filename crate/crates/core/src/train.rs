//! Losses, the RMSProp optimizer with stair-wise decay, and the training loop.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math;
use crate::model::{LossDomain, Model, ModelSpec, Normalization};
use crate::rng::Rng;
use crate::series::RealSeries;
use crate::spectral::SpectralFrames;
use crate::tape::Gradients;

/// Mean of `(y − y_gt)²` over all samples and features.
pub fn mse_time(y: &RealSeries, y_gt: &RealSeries) -> Result<f64> {
    if y.len() != y_gt.len() || y.n_features() != y_gt.n_features() {
        return Err(Error::shape("mse_time", y_gt.data().len(), y.data().len()));
    }
    if y.is_empty() {
        return Ok(0.0);
    }
    let n = y.data().len() as f64;
    Ok(y.data().iter().zip(y_gt.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

/// `∂ mse_time / ∂y = 2(y − y_gt)/n`.
pub fn mse_time_grad(y: &RealSeries, y_gt: &RealSeries) -> Result<RealSeries> {
    if y.len() != y_gt.len() || y.n_features() != y_gt.n_features() {
        return Err(Error::shape("mse_time_grad", y_gt.data().len(), y.data().len()));
    }
    let k = 2.0 / y.data().len().max(1) as f64;
    let g = y.data().iter().zip(y_gt.data()).map(|(a, b)| k * (a - b)).collect();
    RealSeries::new(y.len(), y.n_features(), g)
}

/// Mean of `|Y − Y_gt|²` over all frames, bins and features.
pub fn mse_freq(y: &SpectralFrames, y_gt: &SpectralFrames) -> Result<f64> {
    if (y.n_frames, y.n_freq, y.n_features) != (y_gt.n_frames, y_gt.n_freq, y_gt.n_features) {
        return Err(Error::shape("mse_freq", y_gt.data.len(), y.data.len()));
    }
    if y.data.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = y.data.iter().zip(&y_gt.data).map(|(a, b)| (*a - *b).norm_sqr()).sum();
    Ok(sum / y.data.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay: f64,
    pub decay_every: usize,
    pub iterations: usize,
    pub seed: u64,
    pub loss_domain: LossDomain,
    pub clip_norm: Option<f64>,
    pub model: ModelSpec,
    /// Installed on the fresh model by [`train`]; identity when unset.
    pub normalization: Option<Normalization>,
}

impl TrainConfig {
    /// Learning-rate schedule defaults around `model`.
    pub fn new(model: ModelSpec) -> Self {
        TrainConfig {
            lr0: 1e-3,
            decay: 0.9,
            decay_every: 1000,
            iterations: 30_000,
            seed: 0,
            loss_domain: LossDomain::Time,
            clip_norm: None,
            model,
            normalization: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(Error::invalid("lr0 must be positive"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::invalid("decay must lie in (0, 1]"));
        }
        if self.decay_every == 0 {
            return Err(Error::invalid("decay_every must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::invalid("clip_norm must be positive"));
            }
        }
        self.model.cell_config()?;
        Ok(())
    }
}

/// `lr0 · decay^⌊step / decay_every⌋`.
pub fn lr_at(cfg: &TrainConfig, step: usize) -> f64 {
    cfg.lr0 * math::powf(cfg.decay, (step / cfg.decay_every) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub decay: f64,
    pub eps: f64,
    mean_square: Vec<f64>,
}

impl RmsProp {
    pub fn new(n_params: usize) -> Self {
        RmsProp {
            decay: 0.9,
            eps: 1e-8,
            mean_square: vec![0.0; n_params],
        }
    }

    /// In-place update `p ← p − lr·g/(√v + ε)` with
    /// `v ← decay·v + (1 − decay)·g²`.
    pub fn apply(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.mean_square.len() || grads.len() != params.len() {
            return Err(Error::shape("RmsProp::apply", self.mean_square.len(), grads.len()));
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(self.mean_square.iter_mut()) {
            *v = self.decay * *v + (1.0 - self.decay) * g * g;
            *p -= lr * g / (math::sqrt(*v) + self.eps);
        }
        Ok(())
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) {
    let norm = math::sqrt(grads.iter().map(|g| g * g).sum());
    if norm > max_norm {
        let k = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= k);
    }
}

/// One optimizer step on `model`; σ is clamped by the window afterwards.
pub fn step_optimizer(
    model: &mut Model,
    grads: &Gradients,
    opt: &mut RmsProp,
    cfg: &TrainConfig,
    step: usize,
) -> Result<()> {
    let mut g = model.flat_gradient(grads);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    if let Some(c) = cfg.clip_norm {
        clip_global_norm(&mut g, c);
    }
    let mut p = model.flat_params();
    opt.apply(&mut p, &g, lr_at(cfg, step))?;
    model.set_flat_params(&p)
}

/// Milliseconds since an arbitrary origin.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// A clock that never advances.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub lr: f64,
    pub loss: f64,
    pub time_mse: f64,
    pub wall_ms: f64,
}

/// Trains a freshly initialized model (seeded by `cfg.seed`).
pub fn train(cfg: &TrainConfig, data: &mut dyn Dataset, clock: &dyn Clock) -> Result<(Model, Vec<MetricsRow>)> {
    cfg.validate()?;
    let mut model = Model::init(cfg.model.clone(), &mut Rng::new(cfg.seed))?;
    if let Some(norm) = &cfg.normalization {
        model = model.with_normalization(norm.clone())?;
    }
    let mut log = Vec::with_capacity(cfg.iterations);
    let model = train_from(model, cfg, data, clock, |row| log.push(*row))?;
    Ok((model, log))
}

/// Runs `cfg.iterations` steps from `model`, reporting each row to
/// `on_row` as it is produced.
pub fn train_from(
    mut model: Model,
    cfg: &TrainConfig,
    data: &mut dyn Dataset,
    clock: &dyn Clock,
    mut on_row: impl FnMut(&MetricsRow),
) -> Result<Model> {
    cfg.validate()?;
    let mut opt = RmsProp::new(model.param_count());
    let start = clock.now_ms();
    for step in 0..cfg.iterations {
        let (context, target) = data.next_pair()?;
        let (loss, time_mse, grads) = model.loss_and_gradients(&context, &target, cfg.loss_domain)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        let lr = lr_at(cfg, step);
        step_optimizer(&mut model, &grads, &mut opt, cfg, step)?;
        on_row(&MetricsRow {
            iteration: step + 1,
            lr,
            loss,
            time_mse,
            wall_ms: clock.now_ms() - start,
        });
    }
    Ok(model)
}

/// Mean closed-loop time-domain MSE over `pairs`.
pub fn evaluate(model: &Model, pairs: &[(RealSeries, RealSeries)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("no evaluation pairs"));
    }
    let mut total = 0.0;
    for (context, target) in pairs {
        let y = model.forecast(context, target.len())?;
        total += mse_time(&y, target)?;
    }
    Ok(total / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::CellKind;
    use crate::complex::Complex;
    use crate::data::{MackeyConfig, MackeyDataset};
    use crate::model::Frontend;
    use crate::spectral::{stft, WindowSpec};

    fn spec() -> ModelSpec {
        ModelSpec {
            cell: CellKind::Gru,
            hidden: 6,
            n_features: 1,
            frontend: Frontend::Spectral {
                window: WindowSpec::new(16, 8, 0.5).unwrap(),
                keep: Some(4),
            },
        }
    }

    #[test]
    fn time_mse_values() {
        let y = RealSeries::univariate(vec![1.0, 2.0]);
        let z = RealSeries::univariate(vec![0.0, 0.0]);
        assert_eq!(mse_time(&y, &y).unwrap(), 0.0);
        assert_eq!(mse_time(&y, &z).unwrap(), 2.5);
        assert!(mse_time(&y, &RealSeries::univariate(vec![0.0])).is_err());
    }

    #[test]
    fn time_mse_gradient_matches_differences() {
        let mut rng = Rng::new(1);
        let y = RealSeries::univariate((0..20).map(|_| rng.next_f64()).collect());
        let t = RealSeries::univariate((0..20).map(|_| rng.next_f64()).collect());
        let g = mse_time_grad(&y, &t).unwrap();
        let h = 1e-6;
        for i in 0..20 {
            let mut up = y.clone();
            let mut down = y.clone();
            up.data_mut()[i] += h;
            down.data_mut()[i] -= h;
            let fd = (mse_time(&up, &t).unwrap() - mse_time(&down, &t).unwrap()) / (2.0 * h);
            assert!((fd - g.data()[i]).abs() <= 1e-8 * fd.abs().max(1e-3));
        }
    }

    #[test]
    fn freq_mse_values() {
        let ws = WindowSpec::new(8, 8, 1.0).unwrap();
        let x = RealSeries::univariate((0..8).map(|i| i as f64).collect());
        let a = stft(&x, &ws).unwrap();
        assert_eq!(mse_freq(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.data[2] += Complex::new(3.0, 4.0);
        assert_eq!(mse_freq(&a, &b).unwrap(), 25.0 / a.data.len() as f64);
    }

    #[test]
    fn freq_mse_agrees_with_parseval() {
        // one full-spectrum frame with a nearly flat window: Σ|X|² over the
        // half spectrum, with interior bins doubled, is N·Σ|x|²
        let ws = WindowSpec::new(16, 16, 10.0).unwrap();
        let mut rng = Rng::new(2);
        let x = RealSeries::univariate((0..16).map(|_| rng.next_f64() - 0.5).collect());
        let y = RealSeries::univariate((0..16).map(|_| rng.next_f64() - 0.5).collect());
        let (fx, fy) = (stft(&x, &ws).unwrap(), stft(&y, &ws).unwrap());
        let w = crate::spectral::gaussian_window(&ws);
        let weighted: f64 = (0..16).map(|n| (w[n] * (x.data()[n] - y.data()[n])).powi(2)).sum();
        let half: f64 = (0..9)
            .map(|k| {
                let e = (fx.get(0, k, 0) - fy.get(0, k, 0)).norm_sqr();
                if k == 0 || k == 8 { e } else { 2.0 * e }
            })
            .sum();
        assert!((half / 16.0 - weighted).abs() <= 1e-12 * weighted);
        let time = mse_time(&x, &y).unwrap() * 16.0;
        assert!((weighted - time).abs() <= 0.01 * time);
    }

    #[test]
    fn learning_rate_schedule() {
        let cfg = TrainConfig::new(spec());
        assert_eq!(lr_at(&cfg, 0), 0.001);
        assert_eq!(lr_at(&cfg, 999), 0.001);
        assert!((lr_at(&cfg, 1000) - 0.0009).abs() < 1e-18);
        assert!((lr_at(&cfg, 2500) - 0.00081).abs() < 1e-18);
        let mut prev = f64::INFINITY;
        for s in 0..5000 {
            let lr = lr_at(&cfg, s);
            assert!(lr <= prev);
            if s % 1000 != 0 {
                assert_eq!(lr, prev);
            }
            prev = lr;
        }
    }

    #[test]
    fn rmsprop_first_step_and_zero_gradient() {
        let mut opt = RmsProp::new(1);
        let mut p = [0.5];
        opt.apply(&mut p, &[0.0], 0.001).unwrap();
        assert_eq!(p, [0.5]);
        let g = 0.7;
        opt.apply(&mut p, &[g], 0.001).unwrap();
        let expected = 0.5 - 0.001 * g / (libm::sqrt(0.1 * g * g) + 1e-8);
        assert_eq!(p[0], expected);
        assert!((0.5 - p[0] - 0.001 * 3.162).abs() < 1e-6);
    }

    #[test]
    fn sigma_is_clamped_after_a_step() {
        let cfg = TrainConfig::new(spec());
        let mut model = Model::init(spec(), &mut Rng::new(0)).unwrap();
        let mut grads = Gradients {
            cell: crate::cells::CellParams::zeros(&spec().cell_config().unwrap()),
            sigma_analysis: 1e6,
            sigma_synthesis: 0.0,
        };
        let mut opt = RmsProp::new(model.param_count());
        let cfg = TrainConfig { lr0: 10.0, ..cfg };
        step_optimizer(&mut model, &grads, &mut opt, &cfg, 0).unwrap();
        assert_eq!(model.sigma(), Some(crate::spectral::SIGMA_MIN));
        grads.sigma_analysis = f64::NAN;
        assert!(matches!(
            step_optimizer(&mut model, &grads, &mut opt, &cfg, 1),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn one_iteration_logs_one_row_and_is_reproducible() {
        let data_cfg = MackeyConfig {
            t_end: 12.8,
            ..MackeyConfig::default()
        };
        let cfg = TrainConfig {
            iterations: 1,
            ..TrainConfig::new(spec())
        };
        let run = || {
            let mut data = MackeyDataset::new(data_cfg.clone()).unwrap();
            train(&cfg, &mut data, &NoClock).unwrap()
        };
        let (m1, log1) = run();
        assert_eq!(log1.len(), 1);
        let (m2, log2) = run();
        assert_eq!((m1, log1), (m2, log2));

        let cfg = TrainConfig {
            iterations: 5,
            loss_domain: LossDomain::Frequency,
            ..cfg
        };
        let mut data = MackeyDataset::new(data_cfg).unwrap();
        let (_, log) = train(&cfg, &mut data, &NoClock).unwrap();
        assert_eq!(log.len(), 5);
        assert!(log.iter().all(|r| r.time_mse.is_finite() && r.loss.is_finite()));
    }
}
