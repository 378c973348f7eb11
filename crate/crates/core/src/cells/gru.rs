use alloc::vec;
use alloc::vec::Vec;

use super::{ArrayMut, ArrayRef, CellConfig, CellKind};
use crate::complex::RealMatrix;
use crate::error::{Error, Result};
use crate::math::{sigmoid, tanh};

/// Real GRU. Gate kernels act on the stacked vector `[h; x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_r: RealMatrix,
    pub b_r: RealMatrix,
    pub w_u: RealMatrix,
    pub b_u: RealMatrix,
    pub w_h: RealMatrix,
    pub b_h: RealMatrix,
    pub w_p: RealMatrix,
    pub b_p: RealMatrix,
}

impl GruParams {
    pub fn zeros(cfg: &CellConfig) -> Self {
        let (h, i, o) = (cfg.hidden, cfg.input_dim, cfg.output_dim);
        GruParams {
            w_r: RealMatrix::zeros(h, h + i),
            b_r: RealMatrix::zeros(h, 1),
            w_u: RealMatrix::zeros(h, h + i),
            b_u: RealMatrix::zeros(h, 1),
            w_h: RealMatrix::zeros(h, h + i),
            b_h: RealMatrix::zeros(h, 1),
            w_p: RealMatrix::zeros(o, h),
            b_p: RealMatrix::zeros(o, 1),
        }
    }

    pub fn config(&self) -> CellConfig {
        let hidden = self.w_r.rows;
        CellConfig {
            kind: CellKind::Gru,
            hidden,
            input_dim: self.w_r.cols - hidden,
            output_dim: self.w_p.rows,
        }
    }

    pub(super) fn arrays(&self) -> Vec<(&'static str, ArrayRef<'_>)> {
        vec![
            ("w_r", ArrayRef::Real(&self.w_r)),
            ("b_r", ArrayRef::Real(&self.b_r)),
            ("w_u", ArrayRef::Real(&self.w_u)),
            ("b_u", ArrayRef::Real(&self.b_u)),
            ("w_h", ArrayRef::Real(&self.w_h)),
            ("b_h", ArrayRef::Real(&self.b_h)),
            ("w_p", ArrayRef::Real(&self.w_p)),
            ("b_p", ArrayRef::Real(&self.b_p)),
        ]
    }

    pub(super) fn arrays_mut(&mut self) -> Vec<(&'static str, ArrayMut<'_>)> {
        vec![
            ("w_r", ArrayMut::Real(&mut self.w_r)),
            ("b_r", ArrayMut::Real(&mut self.b_r)),
            ("w_u", ArrayMut::Real(&mut self.w_u)),
            ("b_u", ArrayMut::Real(&mut self.b_u)),
            ("w_h", ArrayMut::Real(&mut self.w_h)),
            ("b_h", ArrayMut::Real(&mut self.b_h)),
            ("w_p", ArrayMut::Real(&mut self.w_p)),
            ("b_p", ArrayMut::Real(&mut self.b_p)),
        ]
    }

    pub(super) fn project(&self, h: &[f64]) -> Vec<f64> {
        let mut y = self.w_p.mul_vec_unchecked(h);
        y.iter_mut().zip(&self.b_p.data).for_each(|(v, b)| *v += b);
        y
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Cache {
    /// `[h; x]`
    hx: Vec<f64>,
    /// `[r ⊙ h; x]`
    rhx: Vec<f64>,
    r: Vec<f64>,
    u: Vec<f64>,
    c: Vec<f64>,
}

fn affine(w: &RealMatrix, b: &RealMatrix, v: &[f64]) -> Vec<f64> {
    let mut a = w.mul_vec_unchecked(v);
    a.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
    a
}

pub(super) fn forward(p: &GruParams, h: &[f64], x: &[f64]) -> (Vec<f64>, Cache) {
    let n = h.len();
    let mut hx = Vec::with_capacity(n + x.len());
    hx.extend_from_slice(h);
    hx.extend_from_slice(x);
    let r: Vec<f64> = affine(&p.w_r, &p.b_r, &hx).into_iter().map(sigmoid).collect();
    let u: Vec<f64> = affine(&p.w_u, &p.b_u, &hx).into_iter().map(sigmoid).collect();
    let mut rhx = hx.clone();
    rhx[..n].iter_mut().zip(&r).for_each(|(v, g)| *v *= g);
    let c: Vec<f64> = affine(&p.w_h, &p.b_h, &rhx).into_iter().map(tanh).collect();
    let out = (0..n).map(|i| u[i] * h[i] + (1.0 - u[i]) * c[i]).collect();
    (out, Cache { hx, rhx, r, u, c })
}

pub(super) fn backward(
    p: &GruParams,
    cache: &Cache,
    g_out: &[f64],
    grads: &mut GruParams,
    g_h: &mut [f64],
    g_x: &mut [f64],
) {
    let n = g_out.len();
    let h = &cache.hx[..n];
    let mut g_hx = vec![0.0; cache.hx.len()];

    // h' = u ⊙ h + (1 − u) ⊙ c
    let mut ga_c = vec![0.0; n];
    let mut ga_u = vec![0.0; n];
    for i in 0..n {
        let (u, c) = (cache.u[i], cache.c[i]);
        g_h[i] += g_out[i] * u;
        ga_u[i] = g_out[i] * (h[i] - c) * u * (1.0 - u);
        ga_c[i] = g_out[i] * (1.0 - u) * (1.0 - c * c);
    }

    // candidate reads [r ⊙ h; x]
    grads.w_h.add_outer(&ga_c, &cache.rhx);
    grads.b_h.data.iter_mut().zip(&ga_c).for_each(|(b, g)| *b += g);
    let mut g_rhx = vec![0.0; cache.rhx.len()];
    p.w_h.add_mul_t_vec(&ga_c, &mut g_rhx);
    let mut ga_r = vec![0.0; n];
    for i in 0..n {
        let r = cache.r[i];
        g_h[i] += g_rhx[i] * r;
        ga_r[i] = g_rhx[i] * h[i] * r * (1.0 - r);
    }
    for (gx, g) in g_x.iter_mut().zip(&g_rhx[n..]) {
        *gx += g;
    }

    grads.w_u.add_outer(&ga_u, &cache.hx);
    grads.b_u.data.iter_mut().zip(&ga_u).for_each(|(b, g)| *b += g);
    p.w_u.add_mul_t_vec(&ga_u, &mut g_hx);

    grads.w_r.add_outer(&ga_r, &cache.hx);
    grads.b_r.data.iter_mut().zip(&ga_r).for_each(|(b, g)| *b += g);
    p.w_r.add_mul_t_vec(&ga_r, &mut g_hx);

    for (gh, g) in g_h.iter_mut().zip(&g_hx[..n]) {
        *gh += g;
    }
    for (gx, g) in g_x.iter_mut().zip(&g_hx[n..]) {
        *gx += g;
    }
}

/// `h' = u⊙h + (1−u)⊙tanh(W_h[r⊙h; x] + b_h)` with
/// `r = σ(W_r[h; x] + b_r)` and `u = σ(W_u[h; x] + b_u)`.
pub fn gru_step(p: &GruParams, h_prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let cfg = p.config();
    if h_prev.len() != cfg.hidden {
        return Err(Error::shape("gru_step state", cfg.hidden, h_prev.len()));
    }
    if x.len() != cfg.input_dim {
        return Err(Error::shape("gru_step input", cfg.input_dim, x.len()));
    }
    Ok(forward(p, h_prev, x).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::{init_params, CellParams};
    use crate::rng::Rng;

    fn cfg(h: usize, i: usize) -> CellConfig {
        CellConfig::new(CellKind::Gru, h, i, i).unwrap()
    }

    fn random_params(seed: u64, h: usize, i: usize) -> GruParams {
        let mut rng = Rng::new(seed);
        let mut p = match init_params(&mut rng, &cfg(h, i)).unwrap() {
            CellParams::Gru(p) => p,
            _ => unreachable!(),
        };
        for b in [&mut p.b_r, &mut p.b_u, &mut p.b_h, &mut p.b_p] {
            b.data.iter_mut().for_each(|v| *v = rng.next_f64() - 0.5);
        }
        p
    }

    #[test]
    fn zero_weights_halve_the_state() {
        let p = GruParams::zeros(&cfg(3, 2));
        let h = [0.8, -0.4, 0.1];
        let out = gru_step(&p, &h, &[5.0, -7.0]).unwrap();
        assert_eq!(out, vec![0.4, -0.2, 0.05]);
    }

    #[test]
    fn saturated_update_gate_carries_the_state() {
        let mut p = random_params(2, 4, 3);
        p.b_u.data.iter_mut().for_each(|v| *v = 50.0);
        let h = [0.3, -0.9, 0.5, 0.0];
        let out = gru_step(&p, &h, &[1.0, 2.0, -1.0]).unwrap();
        for (a, b) in out.iter().zip(&h) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn states_stay_bounded() {
        let p = random_params(3, 8, 6);
        let mut rng = Rng::new(4);
        let mut h: Vec<f64> = (0..8).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
        for _ in 0..200 {
            let x: Vec<f64> = (0..6).map(|_| 200.0 * (rng.next_f64() - 0.5)).collect();
            let (out, cache) = forward(&p, &h, &x);
            assert!(cache.r.iter().chain(&cache.u).all(|g| *g >= 0.0 && *g <= 1.0));
            assert!(out.iter().all(|v| v.abs() <= 1.0));
            h = out;
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let (nh, ni) = (8, 6);
        let p = random_params(9, nh, ni);
        let mut rng = Rng::new(10);
        let h: Vec<f64> = (0..nh).map(|_| rng.next_f64() - 0.5).collect();
        let x: Vec<f64> = (0..ni).map(|_| rng.next_f64() - 0.5).collect();
        let g: Vec<f64> = (0..nh).map(|_| rng.next_f64() - 0.5).collect();
        let loss = |p: &GruParams, h: &[f64], x: &[f64]| -> f64 {
            forward(p, h, x).0.iter().zip(&g).map(|(a, b)| a * b).sum()
        };

        let (_, cache) = forward(&p, &h, &x);
        let mut grads = GruParams::zeros(&cfg(nh, ni));
        let mut gh = vec![0.0; nh];
        let mut gx = vec![0.0; ni];
        backward(&p, &cache, &g, &mut grads, &mut gh, &mut gx);

        let step = 1e-6;
        let check = |analytic: f64, plus: f64, minus: f64| {
            let fd = (plus - minus) / (2.0 * step);
            let err = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-3);
            assert!(err <= 1e-5, "analytic {analytic} fd {fd}");
        };
        let base = CellParams::Gru(p.clone());
        let flat = base.to_flat();
        let gflat = CellParams::Gru(grads).to_flat();
        for i in 0..flat.len() {
            let mut up = base.clone();
            let mut down = base.clone();
            let mut f = flat.clone();
            f[i] += step;
            up.set_flat(&f).unwrap();
            f[i] -= 2.0 * step;
            down.set_flat(&f).unwrap();
            let (CellParams::Gru(u), CellParams::Gru(d)) = (&up, &down) else { unreachable!() };
            check(gflat[i], loss(u, &h, &x), loss(d, &h, &x));
        }
        for i in 0..nh {
            let (mut hu, mut hd) = (h.clone(), h.clone());
            hu[i] += step;
            hd[i] -= step;
            check(gh[i], loss(&p, &hu, &x), loss(&p, &hd, &x));
        }
        for i in 0..ni {
            let (mut xu, mut xd) = (x.clone(), x.clone());
            xu[i] += step;
            xd[i] -= step;
            check(gx[i], loss(&p, &h, &xu), loss(&p, &h, &xd));
        }
    }
}
