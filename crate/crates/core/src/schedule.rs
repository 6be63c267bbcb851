//! Geometric time grid for the backward sampler.
//!
//! `t_k = t1 * r^(k-1)`, `r = (T / t1)^(1 / (K - 1))`, so that the drift
//! scale `Δt_k / t_k` is the same at every step. Both endpoints are pinned
//! exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    t1: f64,
    t_final: f64,
    grid: Vec<f64>,
}

/// Per-step DDPM bookkeeping for the step `t_k -> t_{k+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepQuantities {
    /// `Δt_k = t_{k+1} - t_k`
    pub dt: f64,
    /// `β_k = 1 - e^{-Δt_k}`
    pub beta: f64,
    /// `α_k = e^{-Δt_k}`
    pub alpha: f64,
    /// `ᾱ_k = e^{-t_k}`
    pub alpha_bar: f64,
}

impl StepQuantities {
    /// Quantities for an increment `dt` starting at time `t_start`.
    pub fn from_increment(dt: f64, t_start: f64) -> Self {
        let beta = -(-dt).exp_m1();
        StepQuantities { dt, beta, alpha: 1.0 - beta, alpha_bar: (-t_start).exp() }
    }
}

pub fn build_exp_schedule(t1: f64, t_final: f64, k: usize) -> Result<Schedule> {
    if !(t1.is_finite() && t1 > 0.0) {
        return Err(Error::invalid(format!("t1 must be positive, got {t1}")));
    }
    if !(t_final.is_finite() && t_final > t1) {
        return Err(Error::invalid(format!("T must exceed t1 (t1 = {t1}, T = {t_final})")));
    }
    if k < 2 {
        return Err(Error::invalid(format!("K must be >= 2, got {k}")));
    }
    let log_ratio = (t_final / t1).ln() / (k - 1) as f64;
    let mut grid: Vec<f64> = (0..k).map(|i| t1 * (log_ratio * i as f64).exp()).collect();
    grid[0] = t1;
    grid[k - 1] = t_final;
    Ok(Schedule { t1, t_final, grid })
}

impl Schedule {
    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Number of grid points `K`.
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Time `t_k` with the 1-based index used throughout the docs.
    pub fn time(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.grid.len() {
            return Err(Error::IndexOutOfRange { index: k, len: self.grid.len() });
        }
        Ok(self.grid[k - 1])
    }

    pub fn ratio(&self) -> f64 {
        self.grid[1] / self.grid[0]
    }

    /// Quantities for step `k` (1-based, `1 <= k < K`).
    pub fn step_quantities(&self, k: usize) -> Result<StepQuantities> {
        if k == 0 || k >= self.grid.len() {
            return Err(Error::IndexOutOfRange { index: k, len: self.grid.len() });
        }
        let lo = self.grid[k - 1];
        let hi = self.grid[k];
        Ok(StepQuantities::from_increment(hi - lo, lo))
    }

    /// The `n` grid times visited last by the backward sampler (the
    /// smallest ones), in increasing order.
    pub fn last_times(&self, n: usize) -> &[f64] {
        &self.grid[..n.min(self.grid.len())]
    }
}

pub fn step_quantities(schedule: &Schedule, k: usize) -> Result<StepQuantities> {
    schedule.step_quantities(k)
}
