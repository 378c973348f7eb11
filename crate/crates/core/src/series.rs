use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `len` samples of `n_features` real values, stored sample-major
/// (`data[t * n_features + d]`), the same layout as a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSeries {
    len: usize,
    n_features: usize,
    data: Vec<f64>,
}

impl RealSeries {
    pub fn new(len: usize, n_features: usize, data: Vec<f64>) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::invalid("a series needs at least one feature"));
        }
        if data.len() != len * n_features {
            return Err(Error::shape("RealSeries", len * n_features, data.len()));
        }
        Ok(RealSeries {
            len,
            n_features,
            data,
        })
    }

    pub fn univariate(values: Vec<f64>) -> Self {
        RealSeries {
            len: values.len(),
            n_features: 1,
            data: values,
        }
    }

    pub fn zeros(len: usize, n_features: usize) -> Self {
        RealSeries {
            len,
            n_features,
            data: alloc::vec![0.0; len * n_features],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, t: usize, d: usize) -> f64 {
        self.data[t * self.n_features + d]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_features..(t + 1) * self.n_features]
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        (0..self.len).map(|t| self.get(t, d)).collect()
    }

    /// Samples `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<RealSeries> {
        if start > end || end > self.len {
            return Err(Error::invalid("series slice out of bounds"));
        }
        Ok(RealSeries {
            len: end - start,
            n_features: self.n_features,
            data: self.data[start * self.n_features..end * self.n_features].to_vec(),
        })
    }

    /// Appends `other` after `self`.
    pub fn concat(&self, other: &RealSeries) -> Result<RealSeries> {
        if other.n_features != self.n_features {
            return Err(Error::shape("RealSeries::concat", self.n_features, other.n_features));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(RealSeries {
            len: self.len + other.len,
            n_features: self.n_features,
            data,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
