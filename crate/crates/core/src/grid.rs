//! The periodic `N`-point grid carrying the weighted inner product.

use crate::c64;
use crate::weights::WeightModel;
use crate::{Error, Result};

/// `N` cells `[i/N, (i+1)/N)` with `w_i` the cell average of the weight, so
/// the discrete mass of any grid-aligned arc is its exact `w`-mass.
#[derive(Clone, Debug)]
pub struct WeightedGrid {
    n: usize,
    level: u32,
    h: f64,
    w: Vec<f64>,
    weight_id: String,
}

impl WeightedGrid {
    pub fn new(weight: &WeightModel, n: usize) -> Result<Self> {
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::InvalidParameter(format!("grid size {n} must be a power of two")));
        }
        let level = n.trailing_zeros();
        Self::from_samples(weight.cell_averages(level), weight.id())
    }

    /// Grid from explicit positive cell values.
    pub fn from_samples(w: Vec<f64>, weight_id: String) -> Result<Self> {
        let n = w.len();
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::InvalidParameter(format!("grid size {n} must be a power of two")));
        }
        if let Some(bad) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(format!("weight sample {bad} is not positive")));
        }
        Ok(WeightedGrid { n, level: n.trailing_zeros(), h: 1.0 / n as f64, w, weight_id })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// log₂ N: the dyadic level of a single cell.
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn weight_id(&self) -> &str {
        &self.weight_id
    }

    /// Cell centres (i + 1/2) h.
    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| (i as f64 + 0.5) * self.h).collect()
    }

    /// w([0, 1)) as seen by the grid.
    pub fn total_mass(&self) -> f64 {
        self.h * self.w.iter().sum::<f64>()
    }

    /// ⟨f, g⟩_w = h Σ f_i conj(g_i) w_i for scalar grid functions.
    pub fn inner_scalar(&self, f: &[c64], g: &[c64]) -> c64 {
        let mut s = c64::new(0.0, 0.0);
        for i in 0..self.n {
            s += f[i] * g[i].conj() * self.w[i];
        }
        s * self.h
    }

    /// Weighted inner product of two-component fields stored `[⊥, ∥]`.
    pub fn inner(&self, f: &[c64], g: &[c64]) -> c64 {
        let n = self.n;
        self.inner_scalar(&f[..n], &g[..n]) + self.inner_scalar(&f[n..], &g[n..])
    }

    pub fn norm(&self, f: &[c64]) -> f64 {
        let mut s = 0.0;
        for (k, v) in f.iter().enumerate() {
            s += v.norm_sqr() * self.w[k % self.n];
        }
        (s * self.h).sqrt()
    }

    /// Euclidean coordinates y = W^{1/2} x with W = diag(h w_i) on each block;
    /// the weighted norm of x is the Euclidean norm of y.
    pub fn to_euclid(&self, f: &[c64]) -> Vec<c64> {
        f.iter()
            .enumerate()
            .map(|(k, v)| v * (self.h * self.w[k % self.n]).sqrt())
            .collect()
    }

    pub fn from_euclid(&self, y: &[c64]) -> Vec<c64> {
        y.iter()
            .enumerate()
            .map(|(k, v)| v / (self.h * self.w[k % self.n]).sqrt())
            .collect()
    }
}
