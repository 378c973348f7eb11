use alloc::vec;
use alloc::vec::Vec;

use super::basic::split_tanh_backward;
use super::{ArrayMut, ArrayRef, CellConfig, CellKind};
use crate::complex::{Complex, ComplexMatrix, RealMatrix};
use crate::error::{Error, Result};
use crate::math::sigmoid;

/// Gated complex recurrence.
///
/// ```text
/// r  = σ(|W_r h + V_r x + b_r| + bm_r)        real, in (0, 1)
/// u  = σ(|W_u h + V_u x + b_u| + bm_u)
/// c  = tanh_split(W_c (r ⊙ h) + V_c x + b_c)
/// h' = u ⊙ h + (1 − u) ⊙ c
/// y  = W_p h'
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGruParams {
    pub w_r: ComplexMatrix,
    pub v_r: ComplexMatrix,
    pub b_r: ComplexMatrix,
    pub bm_r: RealMatrix,
    pub w_u: ComplexMatrix,
    pub v_u: ComplexMatrix,
    pub b_u: ComplexMatrix,
    pub bm_u: RealMatrix,
    pub w_c: ComplexMatrix,
    pub v_c: ComplexMatrix,
    pub b_c: ComplexMatrix,
    pub w_p: ComplexMatrix,
}

impl ComplexGruParams {
    pub fn zeros(cfg: &CellConfig) -> Self {
        let (h, i, o) = (cfg.hidden, cfg.input_dim, cfg.output_dim);
        ComplexGruParams {
            w_r: ComplexMatrix::zeros(h, h),
            v_r: ComplexMatrix::zeros(h, i),
            b_r: ComplexMatrix::zeros(h, 1),
            bm_r: RealMatrix::zeros(h, 1),
            w_u: ComplexMatrix::zeros(h, h),
            v_u: ComplexMatrix::zeros(h, i),
            b_u: ComplexMatrix::zeros(h, 1),
            bm_u: RealMatrix::zeros(h, 1),
            w_c: ComplexMatrix::zeros(h, h),
            v_c: ComplexMatrix::zeros(h, i),
            b_c: ComplexMatrix::zeros(h, 1),
            w_p: ComplexMatrix::zeros(o, h),
        }
    }

    pub fn config(&self) -> CellConfig {
        CellConfig {
            kind: CellKind::ComplexGru,
            hidden: self.w_c.rows,
            input_dim: self.v_c.cols,
            output_dim: self.w_p.rows,
        }
    }

    pub(super) fn arrays(&self) -> Vec<(&'static str, ArrayRef<'_>)> {
        vec![
            ("w_r", ArrayRef::Complex(&self.w_r)),
            ("v_r", ArrayRef::Complex(&self.v_r)),
            ("b_r", ArrayRef::Complex(&self.b_r)),
            ("bm_r", ArrayRef::Real(&self.bm_r)),
            ("w_u", ArrayRef::Complex(&self.w_u)),
            ("v_u", ArrayRef::Complex(&self.v_u)),
            ("b_u", ArrayRef::Complex(&self.b_u)),
            ("bm_u", ArrayRef::Real(&self.bm_u)),
            ("w_c", ArrayRef::Complex(&self.w_c)),
            ("v_c", ArrayRef::Complex(&self.v_c)),
            ("b_c", ArrayRef::Complex(&self.b_c)),
            ("w_p", ArrayRef::Complex(&self.w_p)),
        ]
    }

    pub(super) fn arrays_mut(&mut self) -> Vec<(&'static str, ArrayMut<'_>)> {
        vec![
            ("w_r", ArrayMut::Complex(&mut self.w_r)),
            ("v_r", ArrayMut::Complex(&mut self.v_r)),
            ("b_r", ArrayMut::Complex(&mut self.b_r)),
            ("bm_r", ArrayMut::Real(&mut self.bm_r)),
            ("w_u", ArrayMut::Complex(&mut self.w_u)),
            ("v_u", ArrayMut::Complex(&mut self.v_u)),
            ("b_u", ArrayMut::Complex(&mut self.b_u)),
            ("bm_u", ArrayMut::Real(&mut self.bm_u)),
            ("w_c", ArrayMut::Complex(&mut self.w_c)),
            ("v_c", ArrayMut::Complex(&mut self.v_c)),
            ("b_c", ArrayMut::Complex(&mut self.b_c)),
            ("w_p", ArrayMut::Complex(&mut self.w_p)),
        ]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Cache {
    h_prev: Vec<Complex>,
    x: Vec<Complex>,
    z_r: Vec<Complex>,
    z_u: Vec<Complex>,
    r: Vec<f64>,
    u: Vec<f64>,
    rh: Vec<Complex>,
    c: Vec<Complex>,
}

fn pre_activation(
    w: &ComplexMatrix,
    v: &ComplexMatrix,
    b: &ComplexMatrix,
    h: &[Complex],
    x: &[Complex],
) -> Vec<Complex> {
    let mut z = w.mul_vec_unchecked(h);
    for ((zi, vx), bi) in z.iter_mut().zip(v.mul_vec_unchecked(x)).zip(&b.data) {
        *zi += vx + *bi;
    }
    z
}

fn modulus_gate(z: &[Complex], bias: &RealMatrix) -> Vec<f64> {
    z.iter()
        .zip(&bias.data)
        .map(|(z, b)| sigmoid(z.abs() + b))
        .collect()
}

pub(super) fn forward(p: &ComplexGruParams, h: &[Complex], x: &[Complex]) -> (Vec<Complex>, Cache) {
    let z_r = pre_activation(&p.w_r, &p.v_r, &p.b_r, h, x);
    let z_u = pre_activation(&p.w_u, &p.v_u, &p.b_u, h, x);
    let r = modulus_gate(&z_r, &p.bm_r);
    let u = modulus_gate(&z_u, &p.bm_u);
    let rh: Vec<Complex> = h.iter().zip(&r).map(|(h, r)| h.scale(*r)).collect();
    let c: Vec<Complex> = pre_activation(&p.w_c, &p.v_c, &p.b_c, &rh, x)
        .into_iter()
        .map(Complex::split_tanh)
        .collect();
    let out = (0..h.len())
        .map(|i| h[i].scale(u[i]) + c[i].scale(1.0 - u[i]))
        .collect();
    let cache = Cache {
        h_prev: h.to_vec(),
        x: x.to_vec(),
        z_r,
        z_u,
        r,
        u,
        rh,
        c,
    };
    (out, cache)
}

#[allow(clippy::too_many_arguments)]
fn gate_backward(
    w: &ComplexMatrix,
    v: &ComplexMatrix,
    z: &[Complex],
    gate: &[f64],
    g_gate: &[f64],
    (gw, gv, gb, gbm): (&mut ComplexMatrix, &mut ComplexMatrix, &mut ComplexMatrix, &mut RealMatrix),
    cache: &Cache,
    g_h: &mut [Complex],
    g_x: &mut [Complex],
) {
    let gz: Vec<Complex> = z
        .iter()
        .zip(gate)
        .zip(g_gate)
        .zip(gbm.data.iter_mut())
        .map(|(((z, s), g), gbm)| {
            let ga = g * s * (1.0 - s);
            *gbm += ga;
            let m = z.abs();
            // |z| has no derivative at the origin; take the zero subgradient
            if m > 0.0 {
                z.scale(ga / m)
            } else {
                Complex::ZERO
            }
        })
        .collect();
    gw.add_outer_conj(&gz, &cache.h_prev);
    gv.add_outer_conj(&gz, &cache.x);
    gb.data.iter_mut().zip(&gz).for_each(|(b, g)| *b += *g);
    w.add_mul_h_vec(&gz, g_h);
    v.add_mul_h_vec(&gz, g_x);
}

pub(super) fn backward(
    p: &ComplexGruParams,
    cache: &Cache,
    g_out: &[Complex],
    grads: &mut ComplexGruParams,
    g_h: &mut [Complex],
    g_x: &mut [Complex],
) {
    let n = g_out.len();
    let h = &cache.h_prev;
    let mut g_u = vec![0.0; n];
    let mut g_c = vec![Complex::ZERO; n];
    for i in 0..n {
        let u = cache.u[i];
        g_h[i] += g_out[i].scale(u);
        g_u[i] = g_out[i].dot(h[i] - cache.c[i]);
        g_c[i] = g_out[i].scale(1.0 - u);
    }

    let gz_c = split_tanh_backward(&cache.c, &g_c);
    grads.w_c.add_outer_conj(&gz_c, &cache.rh);
    grads.v_c.add_outer_conj(&gz_c, &cache.x);
    grads.b_c.data.iter_mut().zip(&gz_c).for_each(|(b, g)| *b += *g);
    let mut g_rh = vec![Complex::ZERO; n];
    p.w_c.add_mul_h_vec(&gz_c, &mut g_rh);
    p.v_c.add_mul_h_vec(&gz_c, g_x);
    let mut g_r = vec![0.0; n];
    for i in 0..n {
        g_r[i] = g_rh[i].dot(h[i]);
        g_h[i] += g_rh[i].scale(cache.r[i]);
    }

    gate_backward(
        &p.w_u,
        &p.v_u,
        &cache.z_u,
        &cache.u,
        &g_u,
        (&mut grads.w_u, &mut grads.v_u, &mut grads.b_u, &mut grads.bm_u),
        cache,
        g_h,
        g_x,
    );
    gate_backward(
        &p.w_r,
        &p.v_r,
        &cache.z_r,
        &cache.r,
        &g_r,
        (&mut grads.w_r, &mut grads.v_r, &mut grads.b_r, &mut grads.bm_r),
        cache,
        g_h,
        g_x,
    );
}

pub fn cgru_step(p: &ComplexGruParams, h_prev: &[Complex], x: &[Complex]) -> Result<Vec<Complex>> {
    let cfg = p.config();
    if h_prev.len() != cfg.hidden {
        return Err(Error::shape("cgru_step state", cfg.hidden, h_prev.len()));
    }
    if x.len() != cfg.input_dim {
        return Err(Error::shape("cgru_step input", cfg.input_dim, x.len()));
    }
    Ok(forward(p, h_prev, x).0)
}
