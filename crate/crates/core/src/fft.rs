//! Radix-2 Cooley-Tukey transforms and their adjoints.
//!
//! Forward transforms are unnormalized, inverses carry the `1/N`. Real-input
//! transforms keep bins `0..=N/2`; their adjoints treat the half spectrum as
//! interleaved `(re, im)` real coordinates.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::complex::Complex;
use crate::error::{Error, Result};

/// Half spectrum of a real signal of `origin_length` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumVec {
    pub values: Vec<Complex>,
    pub origin_length: usize,
}

impl SpectrumVec {
    pub fn zeros(origin_length: usize) -> Self {
        SpectrumVec {
            values: vec![Complex::ZERO; origin_length / 2 + 1],
            origin_length,
        }
    }

    fn validate(&self) -> Result<()> {
        check_len(self.origin_length)?;
        if self.origin_length < 2 {
            return Err(Error::invalid("real transforms need at least two samples"));
        }
        let expected = self.origin_length / 2 + 1;
        if self.values.len() != expected {
            return Err(Error::shape("SpectrumVec", expected, self.values.len()));
        }
        Ok(())
    }
}

fn check_len(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        Err(Error::NotPowerOfTwo(n))
    } else {
        Ok(())
    }
}

fn bit_reverse(buf: &mut [Complex]) {
    let n = buf.len();
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
}

/// In-place unnormalized transform with kernel `e^{∓j2πkl/N}`.
fn transform(buf: &mut [Complex], inverse: bool) -> Result<()> {
    let n = buf.len();
    check_len(n)?;
    if n == 1 {
        return Ok(());
    }
    bit_reverse(buf);
    let sign = if inverse { 1.0 } else { -1.0 };
    // twiddles for the largest stage; smaller stages stride through them
    let twiddles: Vec<Complex> = (0..n / 2)
        .map(|k| Complex::expj(sign * 2.0 * PI * k as f64 / n as f64))
        .collect();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * stride];
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
    Ok(())
}

pub fn fft(x: &[Complex]) -> Result<Vec<Complex>> {
    let mut buf = x.to_vec();
    transform(&mut buf, false)?;
    Ok(buf)
}

pub fn ifft(x: &[Complex]) -> Result<Vec<Complex>> {
    let mut buf = x.to_vec();
    transform(&mut buf, true)?;
    let k = 1.0 / buf.len() as f64;
    for v in &mut buf {
        *v = v.scale(k);
    }
    Ok(buf)
}

pub fn rfft(x: &[f64]) -> Result<SpectrumVec> {
    let n = x.len();
    check_len(n)?;
    if n < 2 {
        return Err(Error::invalid("real transforms need at least two samples"));
    }
    let mut buf: Vec<Complex> = x.iter().map(|&v| Complex::from(v)).collect();
    transform(&mut buf, false)?;
    buf.truncate(n / 2 + 1);
    Ok(SpectrumVec {
        values: buf,
        origin_length: n,
    })
}

/// Inverse of [`rfft`]. The imaginary parts of the DC and Nyquist bins do not
/// belong to any real signal and are ignored.
pub fn irfft(spec: &SpectrumVec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = spec.origin_length;
    let half = n / 2;
    let mut full = vec![Complex::ZERO; n];
    full[0] = Complex::from(spec.values[0].re);
    full[half] = Complex::from(spec.values[half].re);
    for k in 1..half {
        full[k] = spec.values[k];
        full[n - k] = spec.values[k].conj();
    }
    transform(&mut full, true)?;
    let scale = 1.0 / n as f64;
    Ok(full.into_iter().map(|c| c.re * scale).collect())
}

/// Vector-Jacobian product of [`rfft`]: `out[l] = Re Σ_k g[k]·e^{j2πkl/N}`.
pub fn rfft_adjoint(g: &SpectrumVec) -> Result<Vec<f64>> {
    g.validate()?;
    let n = g.origin_length;
    let mut full = vec![Complex::ZERO; n];
    full[..g.values.len()].copy_from_slice(&g.values);
    transform(&mut full, true)?;
    Ok(full.into_iter().map(|c| c.re).collect())
}

/// Vector-Jacobian product of [`irfft`]. Interior bins appear twice in the
/// Hermitian extension and so carry weight 2; DC and Nyquist carry weight 1
/// and receive no imaginary cotangent.
pub fn irfft_adjoint(g: &[f64]) -> Result<SpectrumVec> {
    let n = g.len();
    let mut spec = rfft(g)?;
    let half = n / 2;
    let inv = 1.0 / n as f64;
    for (k, v) in spec.values.iter_mut().enumerate() {
        if k == 0 || k == half {
            *v = Complex::new(v.re * inv, 0.0);
        } else {
            *v = v.scale(2.0 * inv);
        }
    }
    Ok(spec)
}
