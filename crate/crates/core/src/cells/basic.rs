use alloc::vec;
use alloc::vec::Vec;

use super::{ArrayMut, ArrayRef, CellConfig, CellKind};
use crate::complex::{Complex, ComplexMatrix};
use crate::error::{Error, Result};

/// Ungated complex recurrence `h' = tanh_split(W h + V x + b)` with a
/// bias-free projection `y = W_p h`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicParams {
    pub w: ComplexMatrix,
    pub v: ComplexMatrix,
    pub b: ComplexMatrix,
    pub w_p: ComplexMatrix,
}

impl BasicParams {
    pub fn zeros(cfg: &CellConfig) -> Self {
        let (h, i, o) = (cfg.hidden, cfg.input_dim, cfg.output_dim);
        BasicParams {
            w: ComplexMatrix::zeros(h, h),
            v: ComplexMatrix::zeros(h, i),
            b: ComplexMatrix::zeros(h, 1),
            w_p: ComplexMatrix::zeros(o, h),
        }
    }

    pub fn config(&self) -> CellConfig {
        CellConfig {
            kind: CellKind::Basic,
            hidden: self.w.rows,
            input_dim: self.v.cols,
            output_dim: self.w_p.rows,
        }
    }

    pub(super) fn arrays(&self) -> Vec<(&'static str, ArrayRef<'_>)> {
        vec![
            ("w_c", ArrayRef::Complex(&self.w)),
            ("v_c", ArrayRef::Complex(&self.v)),
            ("b_c", ArrayRef::Complex(&self.b)),
            ("w_p", ArrayRef::Complex(&self.w_p)),
        ]
    }

    pub(super) fn arrays_mut(&mut self) -> Vec<(&'static str, ArrayMut<'_>)> {
        vec![
            ("w_c", ArrayMut::Complex(&mut self.w)),
            ("v_c", ArrayMut::Complex(&mut self.v)),
            ("b_c", ArrayMut::Complex(&mut self.b)),
            ("w_p", ArrayMut::Complex(&mut self.w_p)),
        ]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Cache {
    h_prev: Vec<Complex>,
    x: Vec<Complex>,
    out: Vec<Complex>,
}

pub(super) fn forward(p: &BasicParams, h: &[Complex], x: &[Complex]) -> (Vec<Complex>, Cache) {
    let wh = p.w.mul_vec_unchecked(h);
    let vx = p.v.mul_vec_unchecked(x);
    let out: Vec<Complex> = wh
        .iter()
        .zip(&vx)
        .zip(&p.b.data)
        .map(|((a, b), c)| (*a + *b + *c).split_tanh())
        .collect();
    let cache = Cache {
        h_prev: h.to_vec(),
        x: x.to_vec(),
        out: out.clone(),
    };
    (out, cache)
}

/// Cotangent of `z` through `h = tanh_split(z)`.
pub(super) fn split_tanh_backward(out: &[Complex], g: &[Complex]) -> Vec<Complex> {
    out.iter()
        .zip(g)
        .map(|(h, g)| Complex::new(g.re * (1.0 - h.re * h.re), g.im * (1.0 - h.im * h.im)))
        .collect()
}

pub(super) fn backward(
    p: &BasicParams,
    cache: &Cache,
    g_out: &[Complex],
    grads: &mut BasicParams,
    g_h: &mut [Complex],
    g_x: &mut [Complex],
) {
    let gz = split_tanh_backward(&cache.out, g_out);
    grads.w.add_outer_conj(&gz, &cache.h_prev);
    grads.v.add_outer_conj(&gz, &cache.x);
    grads.b.data.iter_mut().zip(&gz).for_each(|(b, g)| *b += *g);
    p.w.add_mul_h_vec(&gz, g_h);
    p.v.add_mul_h_vec(&gz, g_x);
}

/// `h' = tanh_split(W_c h + V_c x + b_c)`.
pub fn basic_step(p: &BasicParams, h_prev: &[Complex], x: &[Complex]) -> Result<Vec<Complex>> {
    let cfg = p.config();
    if h_prev.len() != cfg.hidden {
        return Err(Error::shape("basic_step state", cfg.hidden, h_prev.len()));
    }
    if x.len() != cfg.input_dim {
        return Err(Error::shape("basic_step input", cfg.input_dim, x.len()));
    }
    Ok(forward(p, h_prev, x).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::{init_params, CellParams};
    use crate::rng::Rng;

    fn random_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<Complex> {
        (0..n)
            .map(|_| Complex::new(scale * (rng.next_f64() - 0.5), scale * (rng.next_f64() - 0.5)))
            .collect()
    }

    #[test]
    fn zero_params_give_zero_state() {
        let cfg = CellConfig::new(CellKind::Basic, 3, 2, 2).unwrap();
        let p = BasicParams::zeros(&cfg);
        let out = basic_step(&p, &[Complex::ZERO; 3], &[Complex::new(1.0, 2.0); 2]).unwrap();
        assert_eq!(out, vec![Complex::ZERO; 3]);
    }

    #[test]
    fn identity_input_map_is_near_linear() {
        let cfg = CellConfig::new(CellKind::Basic, 4, 4, 4).unwrap();
        let mut p = BasicParams::zeros(&cfg);
        p.v = ComplexMatrix::identity(4);
        let x = random_vec(&mut Rng::new(1), 4, 2e-3);
        let h = basic_step(&p, &[Complex::new(0.5, 0.5); 4], &x).unwrap();
        for (a, b) in h.iter().zip(&x) {
            // tanh(v) = v - v³/3 + ...
            assert!((*a - *b).abs() <= 1e-8);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let (nh, ni) = (5, 4);
        let cfg = CellConfig::new(CellKind::Basic, nh, ni, ni).unwrap();
        let mut rng = Rng::new(2);
        let CellParams::Basic(mut p) = init_params(&mut rng, &cfg).unwrap() else { unreachable!() };
        p.b.data = random_vec(&mut rng, nh, 1.0);
        let h = random_vec(&mut rng, nh, 1.0);
        let x = random_vec(&mut rng, ni, 1.0);
        let g = random_vec(&mut rng, nh, 1.0);
        let loss = |p: &BasicParams, h: &[Complex], x: &[Complex]| -> f64 {
            forward(p, h, x).0.iter().zip(&g).map(|(a, b)| a.dot(*b)).sum()
        };
        let (_, cache) = forward(&p, &h, &x);
        let mut grads = BasicParams::zeros(&cfg);
        let mut gh = vec![Complex::ZERO; nh];
        let mut gx = vec![Complex::ZERO; ni];
        backward(&p, &cache, &g, &mut grads, &mut gh, &mut gx);

        let step = 1e-6;
        let check = |analytic: f64, plus: f64, minus: f64| {
            let fd = (plus - minus) / (2.0 * step);
            let err = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-3);
            assert!(err <= 1e-5, "analytic {analytic} fd {fd}");
        };
        let base = CellParams::Basic(p.clone());
        let flat = base.to_flat();
        let gflat = CellParams::Basic(grads).to_flat();
        for i in 0..flat.len() {
            let mut f = flat.clone();
            let mut up = base.clone();
            let mut down = base.clone();
            f[i] += step;
            up.set_flat(&f).unwrap();
            f[i] -= 2.0 * step;
            down.set_flat(&f).unwrap();
            let (CellParams::Basic(u), CellParams::Basic(d)) = (&up, &down) else { unreachable!() };
            check(gflat[i], loss(u, &h, &x), loss(d, &h, &x));
        }
        let parts = [Complex::new(step, 0.0), Complex::new(0.0, step)];
        for i in 0..nh {
            for (part, dv) in parts.iter().enumerate() {
                let (mut hu, mut hd) = (h.clone(), h.clone());
                hu[i] += *dv;
                hd[i] -= *dv;
                let analytic = if part == 0 { gh[i].re } else { gh[i].im };
                check(analytic, loss(&p, &hu, &x), loss(&p, &hd, &x));
            }
        }
        for i in 0..ni {
            for (part, dv) in parts.iter().enumerate() {
                let (mut xu, mut xd) = (x.clone(), x.clone());
                xu[i] += *dv;
                xd[i] -= *dv;
                let analytic = if part == 0 { gx[i].re } else { gx[i].im };
                check(analytic, loss(&p, &h, &xu), loss(&p, &h, &xd));
            }
        }
    }
}
