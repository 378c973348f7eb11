//! Gaussian-windowed STFT, guarded overlap-add inverse, spectral low-pass
//! and the time-domain resampling baselines, each with its backward pass.
//!
//! Frame `τ` covers samples `[S·τ, S·τ + T)`. A series of `N ≥ T` samples is
//! zero-padded on the right and cut into `⌈N/S⌉` frames, so the tail of the
//! signal is covered as densely as its interior. Each windowed frame is
//! zero-padded to `fft_len`, the next power of two `≥ T`.

use alloc::vec;
use alloc::vec::Vec;

use crate::complex::Complex;
use crate::error::{ensure_finite, Error, Result};
use crate::fft::{irfft, irfft_adjoint, rfft, rfft_adjoint, SpectrumVec};
use crate::math;
use crate::series::RealSeries;

pub const SIGMA_MIN: f64 = 0.01;
pub const SIGMA_MAX: f64 = 10.0;
/// Guard on the overlap-add normalizer: `Σ w² ` is never divided by anything
/// smaller than this.
pub const OLA_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PadPolicy {
    /// Samples past the end of the signal read as zero.
    #[default]
    ZeroPadRight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpec {
    window_len: usize,
    hop: usize,
    sigma: f64,
    fft_len: usize,
    pub pad_policy: PadPolicy,
}

impl WindowSpec {
    pub fn new(window_len: usize, hop: usize, sigma: f64) -> Result<Self> {
        if window_len < 2 {
            return Err(Error::invalid("window length must be at least 2"));
        }
        if hop == 0 || hop > window_len {
            return Err(Error::invalid("hop must satisfy 0 < hop <= window length"));
        }
        if !(SIGMA_MIN..=SIGMA_MAX).contains(&sigma) {
            return Err(Error::invalid("sigma must lie in [0.01, 10]"));
        }
        Ok(WindowSpec {
            window_len,
            hop,
            sigma,
            fft_len: window_len.next_power_of_two(),
            pad_policy: PadPolicy::ZeroPadRight,
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    /// Sets σ, clamped into `[SIGMA_MIN, SIGMA_MAX]`.
    pub fn set_sigma(&mut self, sigma: f64) {
        self.sigma = sigma.clamp(SIGMA_MIN, SIGMA_MAX);
    }

    pub fn n_freq(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Frames produced by [`stft`] for a series of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        len.div_ceil(self.hop)
    }

    /// Frames lying entirely inside a series of `len` samples.
    pub fn full_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }

    /// Length of the overlap-add output of `n_frames` frames.
    pub fn span(&self, n_frames: usize) -> usize {
        if n_frames == 0 {
            0
        } else {
            (n_frames - 1) * self.hop + self.window_len
        }
    }

    fn same_geometry(&self, other: &WindowSpec) -> bool {
        self.window_len == other.window_len && self.hop == other.hop
    }
}

/// `w[n] = exp(-½((n − T/2)/(σT/2))²)` for `n ∈ [0, T)`.
pub fn gaussian_window(ws: &WindowSpec) -> Vec<f64> {
    let half = ws.window_len as f64 / 2.0;
    let width = ws.sigma * half;
    (0..ws.window_len)
        .map(|n| {
            let z = (n as f64 - half) / width;
            math::exp(-0.5 * z * z)
        })
        .collect()
}

/// `∂w[n]/∂σ = w[n]·(n − T/2)²/(σ³·(T/2)²)`.
pub fn gaussian_window_dsigma(ws: &WindowSpec) -> Vec<f64> {
    let half = ws.window_len as f64 / 2.0;
    let s3 = ws.sigma * ws.sigma * ws.sigma;
    gaussian_window(ws)
        .into_iter()
        .enumerate()
        .map(|(n, w)| {
            let d = n as f64 - half;
            w * d * d / (s3 * half * half)
        })
        .collect()
}

/// Complex STFT coefficients, stored frame-major:
/// `data[(τ·n_freq + k)·n_features + d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrames {
    pub n_frames: usize,
    pub n_freq: usize,
    pub n_features: usize,
    pub data: Vec<Complex>,
    pub window: WindowSpec,
    pub origin_length: usize,
    /// Bin count before [`lowpass`]; `None` for a full half spectrum.
    pub lowpassed_from: Option<usize>,
}

impl SpectralFrames {
    pub fn zeros(
        window: &WindowSpec,
        n_frames: usize,
        n_freq: usize,
        n_features: usize,
        origin_length: usize,
    ) -> Self {
        SpectralFrames {
            n_frames,
            n_freq,
            n_features,
            data: vec![Complex::ZERO; n_frames * n_freq * n_features],
            window: window.clone(),
            origin_length,
            lowpassed_from: (n_freq != window.n_freq()).then(|| window.n_freq()),
        }
    }

    #[inline]
    pub fn index(&self, frame: usize, bin: usize, feature: usize) -> usize {
        (frame * self.n_freq + bin) * self.n_features + feature
    }

    #[inline]
    pub fn get(&self, frame: usize, bin: usize, feature: usize) -> Complex {
        self.data[self.index(frame, bin, feature)]
    }

    /// All bins and features of one frame.
    pub fn frame(&self, frame: usize) -> &[Complex] {
        let width = self.n_freq * self.n_features;
        &self.data[frame * width..(frame + 1) * width]
    }

    pub fn frame_mut(&mut self, frame: usize) -> &mut [Complex] {
        let width = self.n_freq * self.n_features;
        &mut self.data[frame * width..(frame + 1) * width]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Full-length half spectrum of one frame and feature, dropped bins zero.
    fn spectrum(&self, frame: usize, feature: usize, fft_len: usize) -> SpectrumVec {
        let mut spec = SpectrumVec::zeros(fft_len);
        for (k, v) in spec.values.iter_mut().enumerate().take(self.n_freq) {
            *v = self.get(frame, k, feature);
        }
        spec
    }
}

fn windowed_segment(x: &RealSeries, feature: usize, start: usize, w: &[f64], fft_len: usize) -> Vec<f64> {
    let mut seg = vec![0.0; fft_len];
    for (k, (s, &wk)) in seg.iter_mut().zip(w).enumerate() {
        let t = start + k;
        if t < x.len() {
            *s = wk * x.get(t, feature);
        }
    }
    seg
}

/// Frame `τ` is `rfft(pad(w ⊙ x[Sτ..Sτ+T]))`, per feature column.
pub fn stft(x: &RealSeries, ws: &WindowSpec) -> Result<SpectralFrames> {
    if x.len() < ws.window_len {
        return Err(Error::TooShort {
            len: x.len(),
            required: ws.window_len,
        });
    }
    ensure_finite(x.data(), "stft input")?;
    let w = gaussian_window(ws);
    let n_frames = ws.n_frames(x.len());
    let mut out = SpectralFrames::zeros(ws, n_frames, ws.n_freq(), x.n_features(), x.len());
    for tau in 0..n_frames {
        for d in 0..x.n_features() {
            let seg = windowed_segment(x, d, tau * ws.hop, &w, ws.fft_len);
            let spec = rfft(&seg)?;
            for (k, v) in spec.values.into_iter().enumerate() {
                let i = out.index(tau, k, d);
                out.data[i] = v;
            }
        }
    }
    Ok(out)
}

/// Windowed inverse segments plus overlap-add numerator and normalizer.
struct OverlapAdd {
    /// `segments[τ·D + d]`: the first `T` samples of the frame's inverse.
    segments: Vec<Vec<f64>>,
    /// Sample-major, `span × D`.
    numerator: Vec<f64>,
    /// `Σ_τ w²` per sample.
    normalizer: Vec<f64>,
}

fn check_frames(frames: &SpectralFrames, ws: &WindowSpec) -> Result<()> {
    if !frames.window.same_geometry(ws) {
        return Err(Error::invalid("frames were produced with a different window geometry"));
    }
    if frames.n_freq == 0 || frames.n_freq > ws.n_freq() {
        return Err(Error::shape("spectral frames bins", ws.n_freq(), frames.n_freq));
    }
    let expected = frames.n_frames * frames.n_freq * frames.n_features;
    if frames.data.len() != expected {
        return Err(Error::shape("spectral frames data", expected, frames.data.len()));
    }
    Ok(())
}

fn overlap_add(frames: &SpectralFrames, ws: &WindowSpec, w: &[f64]) -> Result<OverlapAdd> {
    let feats = frames.n_features;
    let span = ws.span(frames.n_frames);
    let mut numerator = vec![0.0; span * feats];
    let mut normalizer = vec![0.0; span];
    let mut segments = Vec::with_capacity(frames.n_frames * feats);
    for tau in 0..frames.n_frames {
        let start = tau * ws.hop;
        for (k, &wk) in w.iter().enumerate() {
            normalizer[start + k] += wk * wk;
        }
        for d in 0..feats {
            let mut seg = irfft(&frames.spectrum(tau, d, ws.fft_len))?;
            seg.truncate(ws.window_len);
            for (k, (&wk, &s)) in w.iter().zip(&seg).enumerate() {
                numerator[(start + k) * feats + d] += wk * s;
            }
            segments.push(seg);
        }
    }
    Ok(OverlapAdd {
        segments,
        numerator,
        normalizer,
    })
}

/// Overlap-add inverse:
/// `x̂[n] = Σ_τ w[n − Sτ]·x̂_τ[n − Sτ] / max(Σ_τ w²[n − Sτ], ε)`.
pub fn istft(frames: &SpectralFrames, ws: &WindowSpec, out_len: usize) -> Result<RealSeries> {
    check_frames(frames, ws)?;
    let span = ws.span(frames.n_frames);
    if out_len > span {
        return Err(Error::invalid("requested length exceeds the reconstructable range"));
    }
    let w = gaussian_window(ws);
    let ola = overlap_add(frames, ws, &w)?;
    let feats = frames.n_features;
    let mut out = Vec::with_capacity(out_len * feats);
    for n in 0..out_len {
        let den = ola.normalizer[n].max(OLA_EPSILON);
        for d in 0..feats {
            out.push(ola.numerator[n * feats + d] / den);
        }
    }
    RealSeries::new(out_len, feats, out)
}

/// Vector-Jacobian product of [`stft`] with respect to the signal and σ.
///
/// `grad` may carry fewer bins than a full half spectrum, which is how the
/// adjoint of [`lowpass`] is folded in.
pub fn stft_backward(
    grad: &SpectralFrames,
    x: &RealSeries,
    ws: &WindowSpec,
) -> Result<(RealSeries, f64)> {
    check_frames(grad, ws)?;
    let n_frames = ws.n_frames(x.len());
    if grad.n_frames != n_frames {
        return Err(Error::shape("stft_backward frames", n_frames, grad.n_frames));
    }
    if grad.n_features != x.n_features() {
        return Err(Error::shape("stft_backward features", x.n_features(), grad.n_features));
    }
    let w = gaussian_window(ws);
    let dw = gaussian_window_dsigma(ws);
    let feats = x.n_features();
    let mut gx = RealSeries::zeros(x.len(), feats);
    let mut gw = vec![0.0; ws.window_len];
    for tau in 0..n_frames {
        let start = tau * ws.hop;
        for d in 0..feats {
            let spec = grad.spectrum(tau, d, ws.fft_len);
            if spec.values.iter().all(|v| *v == Complex::ZERO) {
                continue;
            }
            let gseg = rfft_adjoint(&spec)?;
            for k in 0..ws.window_len {
                let t = start + k;
                if t >= x.len() {
                    break;
                }
                gx.data_mut()[t * feats + d] += w[k] * gseg[k];
                gw[k] += gseg[k] * x.get(t, d);
            }
        }
    }
    let gsigma = gw.iter().zip(&dw).map(|(a, b)| a * b).sum();
    Ok((gx, gsigma))
}

/// Vector-Jacobian product of [`istft`] with respect to the frames and σ.
/// σ enters both through the numerator window and the `Σ w²` normalizer.
pub fn istft_backward(
    grad: &RealSeries,
    frames: &SpectralFrames,
    ws: &WindowSpec,
) -> Result<(SpectralFrames, f64)> {
    check_frames(frames, ws)?;
    let feats = frames.n_features;
    if grad.n_features() != feats {
        return Err(Error::shape("istft_backward features", feats, grad.n_features()));
    }
    let span = ws.span(frames.n_frames);
    if grad.len() > span {
        return Err(Error::shape("istft_backward length", span, grad.len()));
    }
    let w = gaussian_window(ws);
    let dw = gaussian_window_dsigma(ws);
    let ola = overlap_add(frames, ws, &w)?;

    // cotangents of the numerator and the normalizer per output sample
    let mut g_num = vec![0.0; span * feats];
    let mut g_den = vec![0.0; span];
    for n in 0..grad.len() {
        let raw = ola.normalizer[n];
        let den = raw.max(OLA_EPSILON);
        for d in 0..feats {
            let g = grad.get(n, d);
            g_num[n * feats + d] = g / den;
            if raw > OLA_EPSILON {
                g_den[n] -= g * ola.numerator[n * feats + d] / (den * den);
            }
        }
    }

    let mut gframes = SpectralFrames::zeros(ws, frames.n_frames, frames.n_freq, feats, frames.origin_length);
    gframes.lowpassed_from = frames.lowpassed_from;
    let mut gw = vec![0.0; ws.window_len];
    for tau in 0..frames.n_frames {
        let start = tau * ws.hop;
        for (k, &wk) in w.iter().enumerate() {
            gw[k] += 2.0 * wk * g_den[start + k];
        }
        for d in 0..feats {
            let seg = &ola.segments[tau * feats + d];
            let mut gseg = vec![0.0; ws.fft_len];
            for k in 0..ws.window_len {
                let gn = g_num[(start + k) * feats + d];
                gseg[k] = w[k] * gn;
                gw[k] += gn * seg[k];
            }
            let spec = irfft_adjoint(&gseg)?;
            for k in 0..frames.n_freq {
                let i = gframes.index(tau, k, d);
                gframes.data[i] = spec.values[k];
            }
        }
    }
    let gsigma = gw.iter().zip(&dw).map(|(a, b)| a * b).sum();
    Ok((gframes, gsigma))
}

/// Keeps bins `[0, keep)`.
pub fn lowpass(frames: &SpectralFrames, keep: usize) -> Result<SpectralFrames> {
    if keep == 0 || keep > frames.n_freq {
        return Err(Error::invalid("lowpass keep must satisfy 1 <= keep <= n_freq"));
    }
    if keep == frames.n_freq {
        return Ok(frames.clone());
    }
    let feats = frames.n_features;
    let mut data = Vec::with_capacity(frames.n_frames * keep * feats);
    for tau in 0..frames.n_frames {
        let frame = frames.frame(tau);
        data.extend_from_slice(&frame[..keep * feats]);
    }
    Ok(SpectralFrames {
        n_frames: frames.n_frames,
        n_freq: keep,
        n_features: feats,
        data,
        window: frames.window.clone(),
        origin_length: frames.origin_length,
        lowpassed_from: Some(frames.lowpassed_from.unwrap_or(frames.n_freq)),
    })
}

/// Every `factor`-th sample, starting with the first.
pub fn downsample(x: &RealSeries, factor: usize) -> Result<RealSeries> {
    if factor == 0 {
        return Err(Error::invalid("downsampling factor must be at least 1"));
    }
    let feats = x.n_features();
    let kept: Vec<f64> = (0..x.len())
        .step_by(factor)
        .flat_map(|t| x.row(t).iter().copied())
        .collect();
    RealSeries::new(kept.len() / feats, feats, kept)
}

/// Interpolation weights for output sample `j`: `(i, t)` such that the value
/// is `(1 − t)·x[i] + t·x[i + 1]`. The last segment is extended linearly.
#[inline]
fn interp_weights(j: usize, factor: usize, n: usize) -> (usize, f64) {
    let i = (j / factor).min(n - 2);
    (i, (j as f64 - (i * factor) as f64) / factor as f64)
}

/// Linear interpolation back onto the original grid; sample `i` of `x` sits
/// at position `i·factor`.
pub fn upsample(x: &RealSeries, factor: usize, out_len: usize) -> Result<RealSeries> {
    if factor == 0 {
        return Err(Error::invalid("upsampling factor must be at least 1"));
    }
    if x.is_empty() {
        return Err(Error::invalid("cannot upsample an empty series"));
    }
    let feats = x.n_features();
    let mut out = Vec::with_capacity(out_len * feats);
    for j in 0..out_len {
        for d in 0..feats {
            out.push(upsample_value(x, d, j, factor));
        }
    }
    RealSeries::new(out_len, feats, out)
}

fn upsample_value(x: &RealSeries, d: usize, j: usize, factor: usize) -> f64 {
    let n = x.len();
    if n == 1 {
        return x.get(0, d);
    }
    let (i, t) = interp_weights(j, factor, n);
    (1.0 - t) * x.get(i, d) + t * x.get(i + 1, d)
}

/// Adjoint of [`upsample`]: scatters `grad` (length `out_len`) back onto the
/// `n` coarse samples.
pub fn upsample_backward(grad: &RealSeries, factor: usize, n: usize) -> Result<RealSeries> {
    if factor == 0 || n == 0 {
        return Err(Error::invalid("upsample_backward needs factor >= 1 and n >= 1"));
    }
    let feats = grad.n_features();
    let mut gx = RealSeries::zeros(n, feats);
    let data = gx.data_mut();
    for j in 0..grad.len() {
        for d in 0..feats {
            let g = grad.get(j, d);
            if n == 1 {
                data[d] += g;
                continue;
            }
            let (i, t) = interp_weights(j, factor, n);
            data[i * feats + d] += (1.0 - t) * g;
            data[(i + 1) * feats + d] += t * g;
        }
    }
    Ok(gx)
}
