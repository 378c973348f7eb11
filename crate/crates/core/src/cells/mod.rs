//! Recurrent cells and their output projections.
//!
//! Three kinds are provided:
//!
//! * [`CellKind::Basic`]: the plain complex recurrence
//!   `h' = tanh_split(W h + V x + b)`.
//! * [`CellKind::Gru`]: a real GRU reading spectra as concatenated
//!   `(re ‖ im)` vectors, or raw time-domain windows.
//! * [`CellKind::ComplexGru`]: a gated complex recurrence whose real gates
//!   come from the modulus of a complex pre-activation.
//!
//! Every cell exposes a forward step that records a cache, and a backward
//! step that accumulates parameter cotangents from that cache.

mod basic;
mod cgru;
mod gru;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::complex::{Complex, ComplexMatrix, RealMatrix};
use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;
use crate::tape::{Op, Tape, ValueId};

pub use basic::{basic_step, BasicParams};
pub use cgru::{cgru_step, ComplexGruParams};
pub use gru::{gru_step, GruParams};

/// A hidden state, cell input or cell output.
#[derive(Debug, Clone, PartialEq)]
pub enum StateVec {
    Real(Vec<f64>),
    Complex(Vec<Complex>),
}

pub type HiddenState = StateVec;

impl StateVec {
    pub fn len(&self) -> usize {
        match self {
            StateVec::Real(v) => v.len(),
            StateVec::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zeros_like(&self) -> StateVec {
        match self {
            StateVec::Real(v) => StateVec::Real(vec![0.0; v.len()]),
            StateVec::Complex(v) => StateVec::Complex(vec![Complex::ZERO; v.len()]),
        }
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        match self {
            StateVec::Real(v) => Some(v),
            StateVec::Complex(_) => None,
        }
    }

    pub fn as_complex(&self) -> Option<&[Complex]> {
        match self {
            StateVec::Complex(v) => Some(v),
            StateVec::Real(_) => None,
        }
    }

    pub fn add_assign(&mut self, other: &StateVec) -> Result<()> {
        match (self, other) {
            (StateVec::Real(a), StateVec::Real(b)) if a.len() == b.len() => {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(())
            }
            (StateVec::Complex(a), StateVec::Complex(b)) if a.len() == b.len() => {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += *y);
                Ok(())
            }
            (a, b) => Err(Error::shape("StateVec::add_assign", a.len(), b.len())),
        }
    }

    /// Real inner product, treating complex entries as pairs in R².
    pub fn dot(&self, other: &StateVec) -> f64 {
        match (self, other) {
            (StateVec::Real(a), StateVec::Real(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            (StateVec::Complex(a), StateVec::Complex(b)) => {
                a.iter().zip(b).map(|(x, y)| x.dot(*y)).sum()
            }
            _ => 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            StateVec::Real(v) => v.iter().all(|x| x.is_finite()),
            StateVec::Complex(v) => v.iter().all(|x| x.is_finite()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    /// Complex recurrence without gates.
    Basic,
    /// Real GRU.
    Gru,
    /// Complex gated recurrence.
    ComplexGru,
}

impl CellKind {
    pub fn is_complex(self) -> bool {
        !matches!(self, CellKind::Gru)
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Basic => "basic",
            CellKind::Gru => "gru",
            CellKind::ComplexGru => "cgru",
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(CellKind::Basic),
            "gru" => Ok(CellKind::Gru),
            "cgru" => Ok(CellKind::ComplexGru),
            other => Err(Error::invalid(alloc::format!("unknown cell kind '{other}'"))),
        }
    }
}

/// Sizes of one cell. Dimensions count reals for [`CellKind::Gru`] and
/// complex numbers for the complex kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellConfig {
    pub kind: CellKind,
    pub hidden: usize,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl CellConfig {
    pub fn new(kind: CellKind, hidden: usize, input_dim: usize, output_dim: usize) -> Result<Self> {
        if hidden == 0 || input_dim == 0 || output_dim == 0 {
            return Err(Error::invalid("cell sizes must be positive"));
        }
        Ok(CellConfig {
            kind,
            hidden,
            input_dim,
            output_dim,
        })
    }

    /// Number of trainable reals; complex entries count twice.
    pub fn param_count(&self) -> usize {
        let (h, i, o) = (self.hidden, self.input_dim, self.output_dim);
        match self.kind {
            CellKind::Gru => 3 * (h * (h + i) + h) + h * o + o,
            CellKind::Basic => 2 * (h * h + h * i + h + o * h),
            CellKind::ComplexGru => 3 * 2 * (h * h + h * i + h) + 2 * h + 2 * o * h,
        }
    }

    pub fn zero_state(&self) -> StateVec {
        match self.kind {
            CellKind::Gru => StateVec::Real(vec![0.0; self.hidden]),
            _ => StateVec::Complex(vec![Complex::ZERO; self.hidden]),
        }
    }
}

pub enum ArrayRef<'a> {
    Real(&'a RealMatrix),
    Complex(&'a ComplexMatrix),
}

pub enum ArrayMut<'a> {
    Real(&'a mut RealMatrix),
    Complex(&'a mut ComplexMatrix),
}

impl ArrayRef<'_> {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            ArrayRef::Real(m) => (m.rows, m.cols),
            ArrayRef::Complex(m) => (m.rows, m.cols),
        }
    }

    pub fn scalar_count(&self) -> usize {
        match self {
            ArrayRef::Real(m) => m.data.len(),
            ArrayRef::Complex(m) => 2 * m.data.len(),
        }
    }
}

/// Weights of one cell including its output projection.
#[derive(Debug, Clone, PartialEq)]
pub enum CellParams {
    Gru(GruParams),
    Basic(BasicParams),
    ComplexGru(ComplexGruParams),
}

impl CellParams {
    pub fn zeros(cfg: &CellConfig) -> Self {
        match cfg.kind {
            CellKind::Gru => CellParams::Gru(GruParams::zeros(cfg)),
            CellKind::Basic => CellParams::Basic(BasicParams::zeros(cfg)),
            CellKind::ComplexGru => CellParams::ComplexGru(ComplexGruParams::zeros(cfg)),
        }
    }

    pub fn config(&self) -> CellConfig {
        match self {
            CellParams::Gru(p) => p.config(),
            CellParams::Basic(p) => p.config(),
            CellParams::ComplexGru(p) => p.config(),
        }
    }

    pub fn kind(&self) -> CellKind {
        self.config().kind
    }

    /// Named arrays in a fixed order.
    pub fn arrays(&self) -> Vec<(&'static str, ArrayRef<'_>)> {
        match self {
            CellParams::Gru(p) => p.arrays(),
            CellParams::Basic(p) => p.arrays(),
            CellParams::ComplexGru(p) => p.arrays(),
        }
    }

    pub fn arrays_mut(&mut self) -> Vec<(&'static str, ArrayMut<'_>)> {
        match self {
            CellParams::Gru(p) => p.arrays_mut(),
            CellParams::Basic(p) => p.arrays_mut(),
            CellParams::ComplexGru(p) => p.arrays_mut(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.arrays().iter().map(|(_, a)| a.scalar_count()).sum()
    }

    /// All scalars in array order, complex entries as `re, im`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (_, a) in self.arrays() {
            match a {
                ArrayRef::Real(m) => out.extend_from_slice(&m.data),
                ArrayRef::Complex(m) => out.extend(m.data.iter().flat_map(|c| [c.re, c.im])),
            }
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if flat.len() != expected {
            return Err(Error::shape("CellParams::set_flat", expected, flat.len()));
        }
        let mut i = 0;
        for (_, a) in self.arrays_mut() {
            match a {
                ArrayMut::Real(m) => {
                    let n = m.data.len();
                    m.data.copy_from_slice(&flat[i..i + n]);
                    i += n;
                }
                ArrayMut::Complex(m) => {
                    for c in m.data.iter_mut() {
                        *c = Complex::new(flat[i], flat[i + 1]);
                        i += 2;
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks array shapes against [`CellParams::config`] and finiteness.
    pub fn validate(&self) -> Result<()> {
        let reference = CellParams::zeros(&self.config());
        for ((name, a), (_, b)) in self.arrays().iter().zip(reference.arrays().iter()) {
            if a.dims() != b.dims() {
                return Err(Error::invalid(alloc::format!(
                    "array {name} has shape {:?}, expected {:?}",
                    a.dims(),
                    b.dims()
                )));
            }
        }
        if self.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cell parameters"));
        }
        Ok(())
    }

    pub fn zero_state(&self) -> StateVec {
        self.config().zero_state()
    }

    fn check_vec(&self, v: &StateVec, len: usize, context: &'static str) -> Result<()> {
        let kind_ok = matches!(
            (self.kind().is_complex(), v),
            (false, StateVec::Real(_)) | (true, StateVec::Complex(_))
        );
        if !kind_ok {
            return Err(Error::invalid(alloc::format!(
                "{context}: {} cell given a {} vector",
                self.kind(),
                if self.kind().is_complex() { "real" } else { "complex" }
            )));
        }
        if v.len() != len {
            return Err(Error::shape(context, len, v.len()));
        }
        Ok(())
    }

    /// One recurrence step with the cache its backward pass needs.
    pub(crate) fn step_cached(&self, h: &StateVec, x: &StateVec) -> Result<(StateVec, StepCache)> {
        let cfg = self.config();
        self.check_vec(h, cfg.hidden, "cell state")?;
        self.check_vec(x, cfg.input_dim, "cell input")?;
        Ok(match (self, h, x) {
            (CellParams::Gru(p), StateVec::Real(h), StateVec::Real(x)) => {
                let (out, cache) = gru::forward(p, h, x);
                (StateVec::Real(out), StepCache::Gru(cache))
            }
            (CellParams::Basic(p), StateVec::Complex(h), StateVec::Complex(x)) => {
                let (out, cache) = basic::forward(p, h, x);
                (StateVec::Complex(out), StepCache::Basic(cache))
            }
            (CellParams::ComplexGru(p), StateVec::Complex(h), StateVec::Complex(x)) => {
                let (out, cache) = cgru::forward(p, h, x);
                (StateVec::Complex(out), StepCache::ComplexGru(cache))
            }
            _ => unreachable!("vector kinds checked above"),
        })
    }

    pub fn step(&self, h: &StateVec, x: &StateVec) -> Result<StateVec> {
        self.step_cached(h, x).map(|(out, _)| out)
    }

    /// Output projection `W_p h` (plus `b_p` for the real cell).
    pub fn project(&self, h: &StateVec) -> Result<StateVec> {
        self.check_vec(h, self.config().hidden, "projection input")?;
        Ok(match (self, h) {
            (CellParams::Gru(p), StateVec::Real(h)) => StateVec::Real(p.project(h)),
            (CellParams::Basic(p), StateVec::Complex(h)) => {
                StateVec::Complex(p.w_p.mul_vec_unchecked(h))
            }
            (CellParams::ComplexGru(p), StateVec::Complex(h)) => {
                StateVec::Complex(p.w_p.mul_vec_unchecked(h))
            }
            _ => unreachable!("vector kinds checked above"),
        })
    }

    /// Accumulates the cotangents of one step into `grads`, `g_h` and `g_x`.
    pub(crate) fn step_backward(
        &self,
        cache: &StepCache,
        g_out: &StateVec,
        grads: &mut CellParams,
        g_h: &mut StateVec,
        g_x: &mut StateVec,
    ) -> Result<()> {
        match (self, cache, g_out, grads, g_h, g_x) {
            (
                CellParams::Gru(p),
                StepCache::Gru(c),
                StateVec::Real(g),
                CellParams::Gru(gp),
                StateVec::Real(gh),
                StateVec::Real(gx),
            ) => gru::backward(p, c, g, gp, gh, gx),
            (
                CellParams::Basic(p),
                StepCache::Basic(c),
                StateVec::Complex(g),
                CellParams::Basic(gp),
                StateVec::Complex(gh),
                StateVec::Complex(gx),
            ) => basic::backward(p, c, g, gp, gh, gx),
            (
                CellParams::ComplexGru(p),
                StepCache::ComplexGru(c),
                StateVec::Complex(g),
                CellParams::ComplexGru(gp),
                StateVec::Complex(gh),
                StateVec::Complex(gx),
            ) => cgru::backward(p, c, g, gp, gh, gx),
            _ => return Err(Error::invalid("step_backward: mismatched cell kinds")),
        }
        Ok(())
    }

    pub(crate) fn project_backward(
        &self,
        h: &StateVec,
        g_out: &StateVec,
        grads: &mut CellParams,
        g_h: &mut StateVec,
    ) -> Result<()> {
        match (self, h, g_out, grads, g_h) {
            (
                CellParams::Gru(p),
                StateVec::Real(h),
                StateVec::Real(g),
                CellParams::Gru(gp),
                StateVec::Real(gh),
            ) => {
                gp.w_p.add_outer(g, h);
                gp.b_p.data.iter_mut().zip(g).for_each(|(b, v)| *b += v);
                p.w_p.add_mul_t_vec(g, gh);
            }
            (
                CellParams::Basic(p),
                StateVec::Complex(h),
                StateVec::Complex(g),
                CellParams::Basic(gp),
                StateVec::Complex(gh),
            ) => {
                gp.w_p.add_outer_conj(g, h);
                p.w_p.add_mul_h_vec(g, gh);
            }
            (
                CellParams::ComplexGru(p),
                StateVec::Complex(h),
                StateVec::Complex(g),
                CellParams::ComplexGru(gp),
                StateVec::Complex(gh),
            ) => {
                gp.w_p.add_outer_conj(g, h);
                p.w_p.add_mul_h_vec(g, gh);
            }
            _ => return Err(Error::invalid("project_backward: mismatched cell kinds")),
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub(crate) enum StepCache {
    Gru(gru::Cache),
    Basic(basic::Cache),
    ComplexGru(cgru::Cache),
}

fn glorot_real(rng: &mut Rng, rows: usize, cols: usize) -> RealMatrix {
    let a = math::sqrt(6.0 / (rows + cols) as f64);
    RealMatrix {
        rows,
        cols,
        data: (0..rows * cols).map(|_| (2.0 * rng.next_f64() - 1.0) * a).collect(),
    }
}

fn glorot_complex(rng: &mut Rng, rows: usize, cols: usize) -> ComplexMatrix {
    let a = math::sqrt(6.0 / (rows + cols) as f64) / core::f64::consts::SQRT_2;
    ComplexMatrix {
        rows,
        cols,
        data: (0..rows * cols)
            .map(|_| {
                let re = (2.0 * rng.next_f64() - 1.0) * a;
                let im = (2.0 * rng.next_f64() - 1.0) * a;
                Complex::new(re, im)
            })
            .collect(),
    }
}

/// Glorot-uniform weights in `±√(6/(fan_in + fan_out))` (complex arrays use
/// that range over `√2` on each part); all biases start at zero.
pub fn init_params(rng: &mut Rng, cfg: &CellConfig) -> Result<CellParams> {
    let cfg = CellConfig::new(cfg.kind, cfg.hidden, cfg.input_dim, cfg.output_dim)?;
    let mut params = CellParams::zeros(&cfg);
    for (name, array) in params.arrays_mut() {
        // biases are column vectors named b_*
        if name.starts_with('b') {
            continue;
        }
        match array {
            ArrayMut::Real(m) => *m = glorot_real(rng, m.rows, m.cols),
            ArrayMut::Complex(m) => *m = glorot_complex(rng, m.rows, m.cols),
        }
    }
    Ok(params)
}

/// Value ids of an unrolled sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unrolled {
    pub states: Vec<ValueId>,
    pub outputs: Vec<ValueId>,
}

/// Runs the cell over `inputs` (teacher forcing), then for `horizon` more
/// steps feeds each projected output back in as the next input. One output
/// is projected per step, so `outputs.len() == inputs.len() + horizon`.
///
/// With no inputs the loop is seeded with the projection of `h0`.
pub fn unroll(
    params: &CellParams,
    inputs: &[ValueId],
    h0: Option<StateVec>,
    horizon: usize,
    tape: &mut Tape,
) -> Result<Unrolled> {
    let cfg = params.config();
    if inputs.is_empty() && horizon > 0 && h0.is_none() {
        return Err(Error::invalid("closed-loop unroll without inputs needs an initial state"));
    }
    if horizon > 0 && cfg.input_dim != cfg.output_dim {
        return Err(Error::invalid("closed-loop prediction needs output_dim == input_dim"));
    }
    let h0 = h0.unwrap_or_else(|| cfg.zero_state());
    let mut h = tape.leaf(h0);
    let mut states = Vec::with_capacity(inputs.len() + horizon);
    let mut outputs = Vec::with_capacity(inputs.len() + horizon);

    let mut advance = |x: ValueId, h: &mut ValueId, tape: &mut Tape| -> Result<ValueId> {
        let (next, cache) = params.step_cached(tape.value(*h), tape.value(x))?;
        let next_id = tape.leaf(next);
        tape.push(Op::Step {
            h_prev: *h,
            x,
            h: next_id,
            cache,
        });
        let y = params.project(tape.value(next_id))?;
        let y_id = tape.leaf(y);
        tape.push(Op::Project { h: next_id, y: y_id });
        states.push(next_id);
        outputs.push(y_id);
        *h = next_id;
        Ok(y_id)
    };

    let mut feedback = None;
    for &x in inputs {
        feedback = Some(advance(x, &mut h, tape)?);
    }
    if horizon > 0 {
        let mut x = match feedback {
            Some(y) => y,
            None => {
                let y = params.project(tape.value(h))?;
                let y_id = tape.leaf(y);
                tape.push(Op::Project { h, y: y_id });
                y_id
            }
        };
        for _ in 0..horizon {
            x = advance(x, &mut h, tape)?;
        }
    }
    Ok(Unrolled { states, outputs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_counts_match_reference_sizes() {
        let count = |kind, h, i| CellConfig::new(kind, h, i, i).unwrap().param_count();
        assert_eq!(count(CellKind::Gru, 64, 1), 12_737);
        assert_eq!(count(CellKind::Gru, 64, 130), 45_890);
        assert_eq!(count(CellKind::Gru, 64, 8), 14_536);
        assert_eq!(count(CellKind::ComplexGru, 32, 65), 23_040);
        assert_eq!(count(CellKind::ComplexGru, 54, 65), 46_008);
        assert_eq!(count(CellKind::ComplexGru, 64, 65), 58_368);
        for kind in [CellKind::Gru, CellKind::Basic, CellKind::ComplexGru] {
            let cfg = CellConfig::new(kind, 7, 5, 3).unwrap();
            assert_eq!(CellParams::zeros(&cfg).param_count(), cfg.param_count());
        }
    }

    #[test]
    fn init_is_deterministic_and_in_range() {
        let cfg = CellConfig::new(CellKind::ComplexGru, 6, 4, 4).unwrap();
        let a = init_params(&mut Rng::new(5), &cfg).unwrap();
        let b = init_params(&mut Rng::new(5), &cfg).unwrap();
        assert_eq!(a, b);
        for (name, arr) in a.arrays() {
            let (rows, cols) = arr.dims();
            let bound = math::sqrt(6.0 / (rows + cols) as f64);
            match arr {
                ArrayRef::Real(m) => {
                    assert!(m.data.iter().all(|v| v.abs() <= bound));
                    if name.starts_with('b') {
                        assert!(m.data.iter().all(|&v| v == 0.0));
                    }
                }
                ArrayRef::Complex(m) => {
                    let b = bound / core::f64::consts::SQRT_2;
                    assert!(m.data.iter().all(|c| c.re.abs() <= b && c.im.abs() <= b));
                }
            }
        }
    }

    #[test]
    fn glorot_variance() {
        let m = glorot_real(&mut Rng::new(77), 256, 256);
        let mean = m.data.iter().sum::<f64>() / m.data.len() as f64;
        let var = m.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m.data.len() as f64;
        let target = 2.0 / 512.0;
        assert!((var - target).abs() <= 0.1 * target, "var {var}");

        let c = glorot_complex(&mut Rng::new(78), 256, 256);
        let power = c.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / c.data.len() as f64;
        assert!((power - target).abs() <= 0.1 * target, "power {power}");
    }

    #[test]
    fn flat_round_trip() {
        let cfg = CellConfig::new(CellKind::Basic, 3, 2, 2).unwrap();
        let p = init_params(&mut Rng::new(1), &cfg).unwrap();
        let flat = p.to_flat();
        assert_eq!(flat.len(), cfg.param_count());
        let mut q = CellParams::zeros(&cfg);
        q.set_flat(&flat).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&flat[1..]).is_err());
    }

    #[test]
    fn step_rejects_wrong_vectors() {
        let cfg = CellConfig::new(CellKind::Gru, 4, 3, 3).unwrap();
        let p = CellParams::zeros(&cfg);
        let h = cfg.zero_state();
        assert!(p.step(&h, &StateVec::Real(vec![0.0; 2])).is_err());
        assert!(p.step(&h, &StateVec::Complex(vec![Complex::ZERO; 3])).is_err());
        assert!(p.project(&StateVec::Real(vec![0.0; 5])).is_err());
    }

    #[test]
    fn unroll_lengths_and_decay() {
        let cfg = CellConfig::new(CellKind::Gru, 3, 2, 2).unwrap();
        let p = CellParams::zeros(&cfg);
        let mut tape = Tape::new();
        let inputs: Vec<ValueId> = (0..5)
            .map(|i| tape.leaf(StateVec::Real(vec![i as f64, -1.0])))
            .collect();
        let h0 = StateVec::Real(vec![1.0, -0.5, 0.25]);
        let un = unroll(&p, &inputs, Some(h0.clone()), 0, &mut tape).unwrap();
        assert_eq!(un.outputs.len(), 5);
        for (tau, id) in un.states.iter().enumerate() {
            let k = 1.0 / (1u64 << (tau + 1)) as f64;
            let expected: Vec<f64> = h0.as_real().unwrap().iter().map(|v| v * k).collect();
            assert_eq!(tape.value(*id).as_real().unwrap(), &expected[..]);
        }

        let un = unroll(&p, &inputs, None, 4, &mut tape).unwrap();
        assert_eq!(un.outputs.len(), 9);
        assert!(unroll(&p, &[], None, 3, &mut tape).is_err());
        let un = unroll(&p, &[], Some(h0), 3, &mut tape).unwrap();
        assert_eq!(un.outputs.len(), 3);
    }
}
