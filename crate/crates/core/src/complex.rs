//! Complex scalars and the dense row-major matrices used by the cells.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };
    pub const ONE: Complex = Complex { re: 1.0, im: 0.0 };
    pub const I: Complex = Complex { re: 0.0, im: 1.0 };

    #[inline]
    pub const fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    /// `e^{jθ}`.
    #[inline]
    pub fn expj(theta: f64) -> Self {
        Complex::new(libm::cos(theta), libm::sin(theta))
    }

    #[inline]
    pub fn conj(self) -> Self {
        Complex::new(self.re, -self.im)
    }

    #[inline]
    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    #[inline]
    pub fn abs(self) -> f64 {
        libm::hypot(self.re, self.im)
    }

    #[inline]
    pub fn scale(self, k: f64) -> Self {
        Complex::new(self.re * k, self.im * k)
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    /// Real part of `conj(self) * other`, the real inner product of the
    /// two numbers viewed as vectors in R².
    #[inline]
    pub fn dot(self, other: Complex) -> f64 {
        self.re * other.re + self.im * other.im
    }

    /// tanh applied to the real and imaginary parts independently.
    #[inline]
    pub fn split_tanh(self) -> Self {
        Complex::new(math::tanh(self.re), math::tanh(self.im))
    }
}

impl Add for Complex {
    type Output = Complex;
    #[inline]
    fn add(self, rhs: Complex) -> Complex {
        Complex::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl Sub for Complex {
    type Output = Complex;
    #[inline]
    fn sub(self, rhs: Complex) -> Complex {
        Complex::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    #[inline]
    fn mul(self, rhs: Complex) -> Complex {
        Complex::new(
            self.re * rhs.re - self.im * rhs.im,
            self.re * rhs.im + self.im * rhs.re,
        )
    }
}

impl Mul<f64> for Complex {
    type Output = Complex;
    #[inline]
    fn mul(self, rhs: f64) -> Complex {
        self.scale(rhs)
    }
}

impl Neg for Complex {
    type Output = Complex;
    #[inline]
    fn neg(self) -> Complex {
        Complex::new(-self.re, -self.im)
    }
}

impl AddAssign for Complex {
    #[inline]
    fn add_assign(&mut self, rhs: Complex) {
        self.re += rhs.re;
        self.im += rhs.im;
    }
}

impl SubAssign for Complex {
    #[inline]
    fn sub_assign(&mut self, rhs: Complex) {
        self.re -= rhs.re;
        self.im -= rhs.im;
    }
}

impl MulAssign for Complex {
    #[inline]
    fn mul_assign(&mut self, rhs: Complex) {
        *self = *self * rhs;
    }
}

impl From<f64> for Complex {
    fn from(re: f64) -> Self {
        Complex::new(re, 0.0)
    }
}

/// Dense row-major real matrix. Bias vectors are stored with `cols == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("RealMatrix::from_vec", rows * cols, data.len()));
        }
        Ok(RealMatrix { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::shape("RealMatrix::mul_vec", self.cols, x.len()));
        }
        Ok(self.mul_vec_unchecked(x))
    }

    pub(crate) fn mul_vec_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `out += Aᵀ g`.
    pub(crate) fn add_mul_t_vec(&self, g: &[f64], out: &mut [f64]) {
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * gr;
            }
        }
    }

    /// `A += g xᵀ`.
    pub(crate) fn add_outer(&mut self, g: &[f64], x: &[f64]) {
        let cols = self.cols;
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            for (a, xv) in self.data[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                *a += gr * xv;
            }
        }
    }
}

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![Complex::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex::ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("ComplexMatrix::from_vec", rows * cols, data.len()));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[Complex] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub(crate) fn mul_vec_unchecked(&self, x: &[Complex]) -> Vec<Complex> {
        (0..self.rows)
            .map(|r| {
                let (mut re, mut im) = (0.0, 0.0);
                for (a, b) in self.row(r).iter().zip(x) {
                    re += a.re * b.re - a.im * b.im;
                    im += a.re * b.im + a.im * b.re;
                }
                Complex::new(re, im)
            })
            .collect()
    }

    /// `out += Aᴴ g`: the cotangent of `x` in `y = A x`.
    pub(crate) fn add_mul_h_vec(&self, g: &[Complex], out: &mut [Complex]) {
        for (r, &gr) in g.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                // conj(a) * gr
                o.re += a.re * gr.re + a.im * gr.im;
                o.im += a.re * gr.im - a.im * gr.re;
            }
        }
    }

    /// `A += g xᴴ`: the cotangent of `A` in `y = A x`.
    pub(crate) fn add_outer_conj(&mut self, g: &[Complex], x: &[Complex]) {
        let cols = self.cols;
        for (r, &gr) in g.iter().enumerate() {
            for (a, xv) in self.data[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                a.re += gr.re * xv.re + gr.im * xv.im;
                a.im += gr.im * xv.re - gr.re * xv.im;
            }
        }
    }
}

/// `y[i] = Σ_k A[i,k]·x[k]`.
pub fn cmul_mat_vec(a: &ComplexMatrix, x: &[Complex]) -> Result<Vec<Complex>> {
    if a.cols != x.len() {
        return Err(Error::shape("cmul_mat_vec", a.cols, x.len()));
    }
    if !a.data.iter().chain(x).all(|c| c.is_finite()) {
        return Err(Error::NonFinite("cmul_mat_vec"));
    }
    Ok(a.mul_vec_unchecked(x))
}
