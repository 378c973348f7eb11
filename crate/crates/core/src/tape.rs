//! Reverse-mode record of one forward pass.
//!
//! Values (cell states, cell inputs and outputs, synthesized series) live in
//! an arena addressed by [`ValueId`]. Every operation appends an [`Op`] that
//! keeps what its backward pass needs. [`Tape::backward`] takes the tape by
//! value, so a tape can only ever be differentiated once.

use alloc::vec;
use alloc::vec::Vec;

use crate::cells::{CellParams, StateVec, StepCache};
use crate::error::{Error, Result};
use crate::model::FrameCodec;
use crate::series::RealSeries;
use crate::spectral::{istft_backward, stft_backward, upsample_backward, SpectralFrames, WindowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueId(usize);

impl ValueId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the time-domain forecast was assembled from projected outputs.
#[derive(Debug, Clone)]
pub(crate) enum Synthesis {
    /// Outputs decoded into spectral frames and overlap-added; the result is
    /// the slice `[offset, offset + len)` of the reconstruction.
    Istft {
        frames: Vec<ValueId>,
        decoded: SpectralFrames,
        window: WindowSpec,
        codec: FrameCodec,
        offset: usize,
        out: ValueId,
    },
    /// Every output is a coarse window of `coarse_len` samples, interpolated
    /// up to `window_len` samples and concatenated.
    Upsample {
        windows: Vec<ValueId>,
        factor: usize,
        coarse_len: usize,
        window_len: usize,
        n_features: usize,
        out: ValueId,
    },
}

#[derive(Debug, Clone)]
pub(crate) enum Loss {
    /// `mean((pred − target)²)` over a synthesized series.
    Time { pred: ValueId, target: Vec<f64> },
    /// Mean squared modulus of the difference of encoded frames. Both sides
    /// are tape values, so targets taken from the same analysis also carry
    /// gradient into σ.
    Freq {
        pred: Vec<ValueId>,
        target: Vec<ValueId>,
        complex_count: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Step {
        h_prev: ValueId,
        x: ValueId,
        h: ValueId,
        cache: StepCache,
    },
    Project {
        h: ValueId,
        y: ValueId,
    },
    /// Encoded STFT frames of `signal`; `frames[τ]` is frame `τ`.
    Analysis {
        frames: Vec<ValueId>,
        signal: RealSeries,
        window: WindowSpec,
        codec: FrameCodec,
    },
    Synthesis(Synthesis),
    Loss(Loss),
}

/// Cotangents of every trainable quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub cell: CellParams,
    /// Contribution reaching σ through the analysis transform.
    pub sigma_analysis: f64,
    /// Contribution reaching σ through the synthesis transform.
    pub sigma_synthesis: f64,
}

impl Gradients {
    pub fn sigma(&self) -> f64 {
        self.sigma_analysis + self.sigma_synthesis
    }

    pub fn is_finite(&self) -> bool {
        self.sigma().is_finite() && self.cell.to_flat().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<StateVec>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Stores a value that no recorded operation produced.
    pub fn leaf(&mut self, value: StateVec) -> ValueId {
        self.values.push(value);
        ValueId(self.values.len() - 1)
    }

    pub fn value(&self, id: ValueId) -> &StateVec {
        &self.values[id.0]
    }

    pub fn value_count(&self) -> usize {
        self.values.len()
    }

    pub fn op_count(&self) -> usize {
        self.ops.len()
    }

    /// Number of recorded recurrence steps.
    pub fn step_count(&self) -> usize {
        self.ops.iter().filter(|op| matches!(op, Op::Step { .. })).count()
    }

    pub(crate) fn push(&mut self, op: Op) {
        self.ops.push(op);
    }

    /// Walks the record backwards from the recorded losses, each scaled by
    /// `loss_grad`, accumulating cotangents for `params` and σ.
    pub fn backward(self, params: &CellParams, loss_grad: f64) -> Result<Gradients> {
        if !self.ops.iter().any(|op| matches!(op, Op::Loss(_))) {
            return Err(Error::invalid("tape records no loss"));
        }
        let Tape { values, ops } = self;
        let mut grad: Vec<Option<StateVec>> = vec![None; values.len()];
        let mut out = Gradients {
            cell: CellParams::zeros(&params.config()),
            sigma_analysis: 0.0,
            sigma_synthesis: 0.0,
        };

        fn slot<'a>(grad: &'a mut [Option<StateVec>], values: &[StateVec], id: ValueId) -> &'a mut StateVec {
            grad[id.0].get_or_insert_with(|| values[id.0].zeros_like())
        }

        for op in ops.into_iter().rev() {
            match op {
                Op::Loss(Loss::Time { pred, target }) => {
                    let StateVec::Real(y) = &values[pred.0] else {
                        return Err(Error::invalid("time loss expects a real series"));
                    };
                    let k = 2.0 * loss_grad / y.len().max(1) as f64;
                    let g: Vec<f64> = y.iter().zip(&target).map(|(a, b)| k * (a - b)).collect();
                    slot(&mut grad, &values, pred).add_assign(&StateVec::Real(g))?;
                }
                Op::Loss(Loss::Freq {
                    pred,
                    target,
                    complex_count,
                }) => {
                    let k = 2.0 * loss_grad / complex_count.max(1) as f64;
                    for (&p, &t) in pred.iter().zip(&target) {
                        let mut diff = values[p.0].clone();
                        let mut neg = values[t.0].clone();
                        scale(&mut neg, -1.0);
                        diff.add_assign(&neg)?;
                        scale(&mut diff, k);
                        slot(&mut grad, &values, p).add_assign(&diff)?;
                        scale(&mut diff, -1.0);
                        slot(&mut grad, &values, t).add_assign(&diff)?;
                    }
                }
                Op::Synthesis(Synthesis::Istft {
                    frames,
                    decoded,
                    window,
                    codec,
                    offset,
                    out: out_id,
                }) => {
                    let Some(StateVec::Real(g)) = grad[out_id.0].take() else { continue };
                    let feats = decoded.n_features;
                    let mut full = vec![0.0; offset * feats];
                    full.extend_from_slice(&g);
                    let full = RealSeries::new(full.len() / feats, feats, full)?;
                    let (gframes, gsigma) = istft_backward(&full, &decoded, &window)?;
                    out.sigma_synthesis += gsigma;
                    for (tau, id) in frames.iter().enumerate() {
                        let g = codec.decode_adjoint(&gframes, tau);
                        slot(&mut grad, &values, *id).add_assign(&g)?;
                    }
                }
                Op::Synthesis(Synthesis::Upsample {
                    windows,
                    factor,
                    coarse_len,
                    window_len,
                    n_features,
                    out: out_id,
                }) => {
                    let Some(StateVec::Real(g)) = grad[out_id.0].take() else { continue };
                    let total = g.len() / n_features;
                    for (i, id) in windows.iter().enumerate() {
                        let start = i * window_len;
                        if start >= total {
                            break;
                        }
                        let end = (start + window_len).min(total);
                        let slice = g[start * n_features..end * n_features].to_vec();
                        let gs = RealSeries::new(end - start, n_features, slice)?;
                        let gc = upsample_backward(&gs, factor, coarse_len)?;
                        slot(&mut grad, &values, *id).add_assign(&StateVec::Real(gc.into_data()))?;
                    }
                }
                Op::Project { h, y } => {
                    let Some(gy) = grad[y.0].take() else { continue };
                    let gh = slot(&mut grad, &values, h);
                    params.project_backward(&values[h.0], &gy, &mut out.cell, gh)?;
                }
                Op::Step { h_prev, x, h, cache } => {
                    let Some(gh) = grad[h.0].take() else { continue };
                    let mut g_prev = grad[h_prev.0].take().unwrap_or_else(|| values[h_prev.0].zeros_like());
                    let mut g_x = grad[x.0].take().unwrap_or_else(|| values[x.0].zeros_like());
                    params.step_backward(&cache, &gh, &mut out.cell, &mut g_prev, &mut g_x)?;
                    grad[h_prev.0] = Some(g_prev);
                    grad[x.0] = Some(g_x);
                }
                Op::Analysis {
                    frames,
                    signal,
                    window,
                    codec,
                } => {
                    let n_frames = window.n_frames(signal.len());
                    let mut gframes =
                        SpectralFrames::zeros(&window, n_frames, codec.keep, signal.n_features(), signal.len());
                    let mut any = false;
                    for (tau, id) in frames.iter().enumerate() {
                        if let Some(g) = grad[id.0].take() {
                            codec.encode_adjoint(&g, &mut gframes, tau)?;
                            any = true;
                        }
                    }
                    if any {
                        let (_, gsigma) = stft_backward(&gframes, &signal, &window)?;
                        out.sigma_analysis += gsigma;
                    }
                }
            }
        }
        Ok(out)
    }
}

fn scale(v: &mut StateVec, k: f64) {
    match v {
        StateVec::Real(v) => v.iter_mut().for_each(|x| *x *= k),
        StateVec::Complex(v) => v.iter_mut().for_each(|x| *x = x.scale(k)),
    }
}
