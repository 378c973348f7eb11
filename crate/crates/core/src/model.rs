//! Forecasting pipelines: an analysis frontend, a recurrent cell and a
//! synthesis backend, recorded on a [`Tape`] so that every pass can be
//! differentiated.
//!
//! Two frontends exist. [`Frontend::Spectral`] runs the cell over (optionally
//! low-passed) STFT frames and overlap-adds the predicted frames back into a
//! signal. [`Frontend::Windowed`] feeds raw, optionally downsampled, windows
//! of samples; a window of one sample is the plain per-step recurrence.

use alloc::vec;
use alloc::vec::Vec;

use crate::cells::{init_params, unroll, CellConfig, CellKind, CellParams, StateVec};
use crate::complex::Complex;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::series::RealSeries;
use crate::spectral::{downsample, istft, lowpass, stft, upsample, SpectralFrames, WindowSpec};
use crate::tape::{Gradients, Loss, Op, Synthesis, Tape, ValueId};

/// What the training loss compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossDomain {
    /// MSE of the synthesized forecast against the target samples.
    #[default]
    Time,
    /// MSE of predicted against analysed target frames; nothing flows
    /// through the synthesis transform.
    Frequency,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frontend {
    /// STFT frames, keeping the lowest `keep` bins when set.
    Spectral { window: WindowSpec, keep: Option<usize> },
    /// Non-overlapping windows of `size` samples, keeping every `factor`-th.
    Windowed { size: usize, factor: usize },
}

impl Frontend {
    pub fn window(&self) -> Option<&WindowSpec> {
        match self {
            Frontend::Spectral { window, .. } => Some(window),
            Frontend::Windowed { .. } => None,
        }
    }

    /// Samples advanced per cell step.
    pub fn hop(&self) -> usize {
        match self {
            Frontend::Spectral { window, .. } => window.hop(),
            Frontend::Windowed { size, .. } => *size,
        }
    }
}

/// Maps spectral frames to cell vectors and back.
///
/// Real cells see per-feature blocks `[re₀ … re_{k−1} ‖ im₀ … im_{k−1}]`,
/// complex cells per-feature blocks of `k` bins. Values are multiplied by
/// `scale` on the way in and divided by it on the way out.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCodec {
    pub keep: usize,
    pub n_features: usize,
    pub real: bool,
    pub scale: f64,
}

impl FrameCodec {
    pub fn width(&self) -> usize {
        let per_feature = if self.real { 2 * self.keep } else { self.keep };
        per_feature * self.n_features
    }

    fn pack(&self, frames: &SpectralFrames, tau: usize, k: f64) -> StateVec {
        let (keep, feats) = (self.keep, self.n_features);
        if self.real {
            let mut v = vec![0.0; 2 * keep * feats];
            for d in 0..feats {
                for b in 0..keep {
                    let c = frames.get(tau, b, d);
                    v[d * 2 * keep + b] = k * c.re;
                    v[d * 2 * keep + keep + b] = k * c.im;
                }
            }
            StateVec::Real(v)
        } else {
            let mut v = vec![Complex::ZERO; keep * feats];
            for d in 0..feats {
                for b in 0..keep {
                    v[d * keep + b] = frames.get(tau, b, d).scale(k);
                }
            }
            StateVec::Complex(v)
        }
    }

    fn unpack(&self, v: &StateVec, frames: &mut SpectralFrames, tau: usize, k: f64) -> Result<()> {
        let (keep, feats) = (self.keep, self.n_features);
        if v.len() != self.width() {
            return Err(Error::shape("frame vector", self.width(), v.len()));
        }
        for d in 0..feats {
            for b in 0..keep {
                let c = match v {
                    StateVec::Real(v) => Complex::new(v[d * 2 * keep + b], v[d * 2 * keep + keep + b]),
                    StateVec::Complex(v) => v[d * keep + b],
                };
                let i = frames.index(tau, b, d);
                frames.data[i] = c.scale(k);
            }
        }
        Ok(())
    }

    pub fn encode(&self, frames: &SpectralFrames, tau: usize) -> StateVec {
        self.pack(frames, tau, self.scale)
    }

    pub fn decode_into(&self, v: &StateVec, frames: &mut SpectralFrames, tau: usize) -> Result<()> {
        self.unpack(v, frames, tau, 1.0 / self.scale)
    }

    pub(crate) fn encode_adjoint(&self, g: &StateVec, gframes: &mut SpectralFrames, tau: usize) -> Result<()> {
        self.unpack(g, gframes, tau, self.scale)
    }

    pub(crate) fn decode_adjoint(&self, gframes: &SpectralFrames, tau: usize) -> StateVec {
        self.pack(gframes, tau, 1.0 / self.scale)
    }
}

/// Architecture of a forecasting model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub cell: CellKind,
    pub hidden: usize,
    pub n_features: usize,
    pub frontend: Frontend,
}

impl ModelSpec {
    /// Checks the combination and returns the matching cell sizes.
    pub fn cell_config(&self) -> Result<CellConfig> {
        if self.n_features == 0 {
            return Err(Error::invalid("a series needs at least one feature"));
        }
        let dim = match &self.frontend {
            Frontend::Spectral { window, keep } => {
                let keep = keep.unwrap_or(window.n_freq());
                if keep == 0 || keep > window.n_freq() {
                    return Err(Error::invalid(alloc::format!(
                        "lowpass keep {keep} outside 1..={}",
                        window.n_freq()
                    )));
                }
                self.codec().map(|c| c.width()).unwrap_or(keep)
            }
            Frontend::Windowed { size, factor } => {
                if *size == 0 || *factor == 0 || factor > size {
                    return Err(Error::invalid("window size and factor must satisfy 1 <= factor <= size"));
                }
                if self.cell.is_complex() {
                    return Err(Error::invalid("complex cells need the spectral frontend"));
                }
                size.div_ceil(*factor) * self.n_features
            }
        };
        CellConfig::new(self.cell, self.hidden, dim, dim)
    }

    pub fn codec(&self) -> Option<FrameCodec> {
        match &self.frontend {
            Frontend::Spectral { window, keep } => Some(FrameCodec {
                keep: keep.unwrap_or(window.n_freq()),
                n_features: self.n_features,
                real: !self.cell.is_complex(),
                scale: 2.0 / window.window_len() as f64,
            }),
            Frontend::Windowed { .. } => None,
        }
    }

    /// Trainable scalars: the cell plus σ for spectral models.
    pub fn param_count(&self) -> Result<usize> {
        let sigma = usize::from(matches!(self.frontend, Frontend::Spectral { .. }));
        Ok(self.cell_config()?.param_count() + sigma)
    }
}

/// Per-feature affine map `x̃ = (x − shift) / scale` applied to every series
/// before it reaches the frontend and undone on the forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(n_features: usize) -> Self {
        Normalization {
            shift: vec![0.0; n_features],
            scale: vec![1.0; n_features],
        }
    }

    /// Per-feature mean and standard deviation of `x`; a constant feature
    /// keeps unit scale.
    pub fn fit(x: &RealSeries) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("cannot fit a normalization to an empty series"));
        }
        let n = x.len() as f64;
        let mut shift = Vec::with_capacity(x.n_features());
        let mut scale = Vec::with_capacity(x.n_features());
        for d in 0..x.n_features() {
            let col = x.column(d);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = crate::math::sqrt(var);
            shift.push(mean);
            scale.push(if std > 1e-12 { std } else { 1.0 });
        }
        let norm = Normalization { shift, scale };
        norm.validate()?;
        Ok(norm)
    }

    pub fn n_features(&self) -> usize {
        self.shift.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.shift.len() != self.scale.len() {
            return Err(Error::shape("normalization", self.shift.len(), self.scale.len()));
        }
        if self.shift.iter().any(|v| !v.is_finite()) || self.scale.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("normalization needs finite shifts and positive finite scales"));
        }
        Ok(())
    }

    fn map(&self, x: &RealSeries, f: impl Fn(f64, f64, f64) -> f64) -> RealSeries {
        let feats = self.n_features();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let d = i % feats;
            *v = f(*v, self.shift[d], self.scale[d]);
        }
        out
    }

    pub fn apply(&self, x: &RealSeries) -> RealSeries {
        self.map(x, |v, m, s| (v - m) / s)
    }

    pub fn invert(&self, x: &RealSeries) -> RealSeries {
        self.map(x, |v, m, s| v * s + m)
    }
}

/// Result of one recorded pass with a loss attached.
#[derive(Debug)]
pub struct LossPass {
    /// In normalized units.
    pub loss: f64,
    /// Time-domain MSE of the forecast, whatever the loss domain.
    pub time_mse: f64,
    pub prediction: RealSeries,
    pub tape: Tape,
}

/// Result of [`Model::sequence_pass`].
#[derive(Debug)]
pub struct SequencePass {
    pub loss: f64,
    pub gradients: Gradients,
    pub cell_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub cell: CellParams,
    pub normalization: Normalization,
}

struct Forward {
    out: ValueId,
    prediction: RealSeries,
    predicted: Vec<ValueId>,
    targets: Vec<ValueId>,
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

impl Model {
    pub fn new(spec: ModelSpec, cell: CellParams) -> Result<Self> {
        let cfg = spec.cell_config()?;
        if cell.config() != cfg {
            return Err(Error::invalid("cell parameters do not match the model specification"));
        }
        cell.validate()?;
        let normalization = Normalization::identity(spec.n_features);
        Ok(Model {
            spec,
            cell,
            normalization,
        })
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Result<Self> {
        normalization.validate()?;
        if normalization.n_features() != self.spec.n_features {
            return Err(Error::shape("normalization", self.spec.n_features, normalization.n_features()));
        }
        self.normalization = normalization;
        Ok(self)
    }

    /// Glorot-initialized cell from `rng`.
    pub fn init(spec: ModelSpec, rng: &mut Rng) -> Result<Self> {
        let cell = init_params(rng, &spec.cell_config()?)?;
        Model::new(spec, cell)
    }

    pub fn sigma(&self) -> Option<f64> {
        self.spec.frontend.window().map(WindowSpec::sigma)
    }

    pub fn set_sigma(&mut self, sigma: f64) {
        if let Frontend::Spectral { window, .. } = &mut self.spec.frontend {
            window.set_sigma(sigma);
        }
    }

    pub fn param_count(&self) -> usize {
        self.cell.param_count() + usize::from(self.sigma().is_some())
    }

    /// Cell scalars followed by σ when present.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut flat = self.cell.to_flat();
        flat.extend(self.sigma());
        flat
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.cell.param_count();
        if flat.len() != self.param_count() {
            return Err(Error::shape("Model::set_flat_params", self.param_count(), flat.len()));
        }
        self.cell.set_flat(&flat[..n])?;
        if let Some(&sigma) = flat.get(n) {
            self.set_sigma(sigma);
        }
        Ok(())
    }

    /// Gradients laid out like [`Model::flat_params`].
    pub fn flat_gradient(&self, g: &Gradients) -> Vec<f64> {
        let mut flat = g.cell.to_flat();
        if self.sigma().is_some() {
            flat.push(g.sigma());
        }
        flat
    }

    fn check_series(&self, x: &RealSeries, what: &'static str) -> Result<()> {
        if x.n_features() != self.spec.n_features {
            return Err(Error::shape(what, self.spec.n_features, x.n_features()));
        }
        Ok(())
    }

    /// Closed-loop forecast of `horizon` samples following `context`.
    pub fn forecast(&self, context: &RealSeries, horizon: usize) -> Result<RealSeries> {
        self.check_series(context, "forecast context")?;
        if horizon == 0 {
            return Ok(RealSeries::zeros(0, self.spec.n_features));
        }
        let mut tape = Tape::new();
        let context = self.normalization.apply(context);
        let y = self.record(&context, horizon, None, &mut tape)?.prediction;
        Ok(self.normalization.invert(&y))
    }

    /// Records a forecast of `target.len()` samples and its loss.
    pub fn loss_pass(&self, context: &RealSeries, target: &RealSeries, domain: LossDomain) -> Result<LossPass> {
        self.check_series(context, "context")?;
        self.check_series(target, "target")?;
        if target.is_empty() {
            return Err(Error::invalid("target must hold at least one sample"));
        }
        let mut tape = Tape::new();
        let raw_target = target;
        let context = &self.normalization.apply(context);
        let target = &self.normalization.apply(target);
        let analysed_target = match domain {
            LossDomain::Time => None,
            LossDomain::Frequency => {
                if !matches!(self.spec.frontend, Frontend::Spectral { .. }) {
                    return Err(Error::invalid("the frequency loss needs the spectral frontend"));
                }
                Some(target)
            }
        };
        let fwd = self.record(context, target.len(), analysed_target, &mut tape)?;
        let prediction = self.normalization.invert(&fwd.prediction);
        let time_mse = mse(prediction.data(), raw_target.data());
        let loss = match domain {
            LossDomain::Time => {
                tape.push(Op::Loss(Loss::Time {
                    pred: fwd.out,
                    target: target.data().to_vec(),
                }));
                mse(fwd.prediction.data(), target.data())
            }
            LossDomain::Frequency => {
                let codec = self.spec.codec().expect("spectral frontend");
                let complex_count = fwd.predicted.len() * codec.keep * codec.n_features;
                let mut sum = 0.0;
                for (&p, &t) in fwd.predicted.iter().zip(&fwd.targets) {
                    let mut d = tape.value(p).clone();
                    let neg = match tape.value(t) {
                        StateVec::Real(v) => StateVec::Real(v.iter().map(|x| -x).collect()),
                        StateVec::Complex(v) => StateVec::Complex(v.iter().map(|x| -*x).collect()),
                    };
                    d.add_assign(&neg)?;
                    sum += d.dot(&d);
                }
                tape.push(Op::Loss(Loss::Freq {
                    pred: fwd.predicted,
                    target: fwd.targets,
                    complex_count,
                }));
                sum / complex_count as f64
            }
        };
        Ok(LossPass {
            loss,
            time_mse,
            prediction,
            tape,
        })
    }

    /// Loss, time-domain MSE and gradients for one (context, target) pair.
    pub fn loss_and_gradients(
        &self,
        context: &RealSeries,
        target: &RealSeries,
        domain: LossDomain,
    ) -> Result<(f64, f64, Gradients)> {
        let pass = self.loss_pass(context, target, domain)?;
        let g = pass.tape.backward(&self.cell, 1.0)?;
        Ok((pass.loss, pass.time_mse, g))
    }

    fn record(
        &self,
        context: &RealSeries,
        horizon: usize,
        analysed_target: Option<&RealSeries>,
        tape: &mut Tape,
    ) -> Result<Forward> {
        match &self.spec.frontend {
            Frontend::Spectral { window, keep } => {
                self.record_spectral(window, *keep, context, horizon, analysed_target, tape)
            }
            Frontend::Windowed { size, factor } => self.record_windowed(*size, *factor, context, horizon, tape),
        }
    }

    fn analyse(
        &self,
        window: &WindowSpec,
        keep: Option<usize>,
        signal: &RealSeries,
        n_frames: usize,
        tape: &mut Tape,
    ) -> Result<Vec<ValueId>> {
        let mut frames = stft(signal, window)?;
        if let Some(k) = keep {
            frames = lowpass(&frames, k)?;
        }
        let codec = self.spec.codec().expect("spectral frontend");
        let ids: Vec<ValueId> = (0..n_frames).map(|tau| tape.leaf(codec.encode(&frames, tau))).collect();
        tape.push(Op::Analysis {
            frames: ids.clone(),
            signal: signal.clone(),
            window: window.clone(),
            codec,
        });
        Ok(ids)
    }

    /// Overlap-adds `frames` and keeps `[offset, offset + len)`.
    fn synthesise(
        &self,
        window: &WindowSpec,
        frames: &[ValueId],
        offset: usize,
        len: usize,
        record: bool,
        tape: &mut Tape,
    ) -> Result<(ValueId, RealSeries)> {
        let codec = self.spec.codec().expect("spectral frontend");
        let feats = self.spec.n_features;
        let span = window.span(frames.len());
        let mut decoded = SpectralFrames::zeros(window, frames.len(), window.n_freq(), feats, span);
        for (tau, id) in frames.iter().enumerate() {
            codec.decode_into(tape.value(*id), &mut decoded, tau)?;
        }
        let full = istft(&decoded, window, offset + len)?;
        let prediction = full.slice(offset, offset + len)?;
        let out = tape.leaf(StateVec::Real(prediction.data().to_vec()));
        if record {
            tape.push(Op::Synthesis(Synthesis::Istft {
                frames: frames.to_vec(),
                decoded,
                window: window.clone(),
                codec,
                offset,
                out,
            }));
        }
        Ok((out, prediction))
    }

    fn record_spectral(
        &self,
        window: &WindowSpec,
        keep: Option<usize>,
        context: &RealSeries,
        horizon: usize,
        analysed_target: Option<&RealSeries>,
        tape: &mut Tape,
    ) -> Result<Forward> {
        let n_ctx = context.len();
        if n_ctx < window.window_len() {
            return Err(Error::TooShort {
                len: n_ctx,
                required: window.window_len(),
            });
        }
        let hop = window.hop();
        // frames lying entirely inside the context
        let f0 = window.full_frames(n_ctx);
        let last = (n_ctx + horizon - 1) / hop;
        let n_pred = last - f0 + 1;

        let (inputs, targets) = match analysed_target {
            None => (self.analyse(window, keep, context, f0, tape)?, Vec::new()),
            Some(target) => {
                let whole = context.concat(target)?;
                let mut ids = self.analyse(window, keep, &whole, f0 + n_pred, tape)?;
                let targets = ids.split_off(f0);
                (ids, targets)
            }
        };
        let un = unroll(&self.cell, &inputs, None, n_pred - 1, tape)?;
        let predicted = un.outputs[f0 - 1..].to_vec();
        let offset = n_ctx - hop * f0;
        let (out, prediction) = self.synthesise(window, &predicted, offset, horizon, analysed_target.is_none(), tape)?;
        Ok(Forward {
            out,
            prediction,
            predicted,
            targets,
        })
    }

    fn coarse_window(&self, x: &RealSeries, start: usize, size: usize, factor: usize) -> Result<StateVec> {
        let w = x.slice(start, start + size)?;
        Ok(StateVec::Real(downsample(&w, factor)?.into_data()))
    }

    /// Interpolates every predicted window back to `size` samples and keeps
    /// the first `len` samples of their concatenation.
    fn expand_windows(
        &self,
        windows: &[ValueId],
        size: usize,
        factor: usize,
        len: usize,
        tape: &mut Tape,
    ) -> Result<(ValueId, RealSeries)> {
        let feats = self.spec.n_features;
        let coarse_len = size.div_ceil(factor);
        let mut data = Vec::with_capacity(windows.len() * size * feats);
        for id in windows {
            let v = tape.value(*id).as_real().expect("windowed cells are real");
            let coarse = RealSeries::new(coarse_len, feats, v.to_vec())?;
            data.extend_from_slice(upsample(&coarse, factor, size)?.data());
        }
        data.truncate(len * feats);
        let prediction = RealSeries::new(len, feats, data)?;
        let out = tape.leaf(StateVec::Real(prediction.data().to_vec()));
        tape.push(Op::Synthesis(Synthesis::Upsample {
            windows: windows.to_vec(),
            factor,
            coarse_len,
            window_len: size,
            n_features: feats,
            out,
        }));
        Ok((out, prediction))
    }

    fn record_windowed(
        &self,
        size: usize,
        factor: usize,
        context: &RealSeries,
        horizon: usize,
        tape: &mut Tape,
    ) -> Result<Forward> {
        let n_ctx = context.len();
        let f0 = n_ctx / size;
        if f0 == 0 {
            return Err(Error::TooShort {
                len: n_ctx,
                required: size,
            });
        }
        // windows end exactly at the end of the context
        let origin = n_ctx % size;
        let inputs: Vec<ValueId> = (0..f0)
            .map(|i| Ok(tape.leaf(self.coarse_window(context, origin + i * size, size, factor)?)))
            .collect::<Result<_>>()?;
        let n_pred = horizon.div_ceil(size);
        let un = unroll(&self.cell, &inputs, None, n_pred - 1, tape)?;
        let predicted = un.outputs[f0 - 1..].to_vec();
        let (out, prediction) = self.expand_windows(&predicted, size, factor, horizon, tape)?;
        Ok(Forward {
            out,
            prediction,
            predicted,
            targets: Vec::new(),
        })
    }

    /// Teacher-forced one-step-ahead pass over a whole series: every frame
    /// (or window) is fed, and the outputs after frames `0..K−1` are scored
    /// against frames `1..K` in the time domain. Used for timing; the number
    /// of cell steps is `⌈N/S⌉` for spectral and `⌊N/W⌋` for windowed models.
    pub fn sequence_pass(&self, series: &RealSeries) -> Result<SequencePass> {
        self.check_series(series, "sequence")?;
        let series = &self.normalization.apply(series);
        let mut tape = Tape::new();
        let n = series.len();
        let (out, prediction, target) = match &self.spec.frontend {
            Frontend::Spectral { window, keep } => {
                if n < window.window_len() {
                    return Err(Error::TooShort {
                        len: n,
                        required: window.window_len(),
                    });
                }
                let k = window.n_frames(n);
                if k < 2 {
                    return Err(Error::invalid("sequence pass needs at least two frames"));
                }
                let ids = self.analyse(window, *keep, series, k, &mut tape)?;
                let un = unroll(&self.cell, &ids, None, 0, &mut tape)?;
                let hop = window.hop();
                let len = (n - hop).min(window.span(k - 1));
                let (out, prediction) = self.synthesise(window, &un.outputs[..k - 1], 0, len, true, &mut tape)?;
                (out, prediction, series.slice(hop, hop + len)?)
            }
            Frontend::Windowed { size, factor } => {
                let k = n / size;
                if k < 2 {
                    return Err(Error::invalid("sequence pass needs at least two windows"));
                }
                let ids: Vec<ValueId> = (0..k)
                    .map(|i| Ok(tape.leaf(self.coarse_window(series, i * size, *size, *factor)?)))
                    .collect::<Result<_>>()?;
                let un = unroll(&self.cell, &ids, None, 0, &mut tape)?;
                let len = (k - 1) * size;
                let (out, prediction) = self.expand_windows(&un.outputs[..k - 1], *size, *factor, len, &mut tape)?;
                (out, prediction, series.slice(*size, size + len)?)
            }
        };
        let loss = mse(prediction.data(), target.data());
        tape.push(Op::Loss(Loss::Time {
            pred: out,
            target: target.into_data(),
        }));
        let cell_steps = tape.step_count();
        let gradients = tape.backward(&self.cell, 1.0)?;
        Ok(SequencePass {
            loss,
            gradients,
            cell_steps,
        })
    }
}
