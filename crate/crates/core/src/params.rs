use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of the Choquard problem: dimension `N`, Riesz order
/// `α` and exponent `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub dim: usize,
    pub alpha: f64,
    pub p: f64,
}

impl Params {
    /// Validated constructor: `α ∈ (0, N)` and `p` strictly inside the
    /// admissible window.
    pub fn new(dim: usize, alpha: f64, p: f64) -> Result<Self> {
        let params = Self { dim, alpha, p };
        params.validate()?;
        Ok(params)
    }

    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(self.dim, self.alpha, p)
    }

    /// `((N+α)/N, (N+α)/(N-2)₊)`; the upper end is infinite for `N ≤ 2`.
    pub fn admissible_window(dim: usize, alpha: f64) -> (f64, f64) {
        let n = dim as f64;
        let lower = (n + alpha) / n;
        let upper = if dim > 2 { (n + alpha) / (n - 2.0) } else { f64::INFINITY };
        (lower, upper)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidParams(format!("dimension {} not in 1..=3", self.dim)));
        }
        let n = self.dim as f64;
        if !(self.alpha > 0.0 && self.alpha < n) {
            return Err(Error::InvalidParams(format!(
                "alpha = {} must lie in (0, N) = (0, {})",
                self.alpha, self.dim
            )));
        }
        let (lo, hi) = Self::admissible_window(self.dim, self.alpha);
        if !(self.p > lo && self.p < hi) {
            return Err(Error::InvalidParams(format!(
                "p = {} outside the admissible window (N+α)/N < p < (N+α)/(N-2)₊, \
                 here ({lo}, {hi}) (open)",
                self.p
            )));
        }
        Ok(())
    }

    /// The quadratic problem additionally needs `α > (N-4)₊`.
    pub fn check_quadratic_regime(&self) -> Result<()> {
        let floor = (self.dim as f64 - 4.0).max(0.0);
        if self.alpha > floor {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "alpha = {} must exceed (N-4)₊ = {floor} for p = 2",
                self.alpha
            )))
        }
    }

    /// `1/2 - 1/(2p)`, the ratio between action and `H¹` norm on the Nehari manifold.
    pub fn nehari_factor(&self) -> f64 {
        0.5 - 0.5 / self.p
    }
}
