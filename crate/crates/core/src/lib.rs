//! Spectral recurrent forecasting without the standard library.
//!
//! Signals are moved into the short-time Fourier domain with a learnable
//! truncated Gaussian window, advanced by a real or complex gated recurrent
//! cell one frame at a time, and brought back with a guarded overlap-add
//! inverse. Every stage has a hand-written backward pass, so gradients reach
//! the cell weights and the window width alike.
//!
//! The crate only needs `alloc`. File formats, timing and the command line
//! live in the `spectral-rnn` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cells;
pub mod complex;
pub mod data;
mod error;
pub mod fft;
pub mod gradcheck;
pub mod math;
pub mod model;
pub mod rng;
pub mod series;
pub mod spectral;
pub mod tape;
pub mod train;

pub use crate::complex::{cmul_mat_vec, Complex, ComplexMatrix, RealMatrix};
pub use crate::error::{Error, Result};
pub use crate::rng::Rng;
pub use crate::series::RealSeries;
