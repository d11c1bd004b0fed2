//! Control-volume geometry of the on and off temperature axes.
//!
//! Bins are numbered `1..=N` on each axis, `N = q + m`. The off axis is the
//! on axis shifted up by `m - 1` cells, so off bin `j` and on bin `j - (m-1)`
//! cover the same temperatures. Off bins `m+1..N-1` and on bins `2..q` tile the
//! deadband; off bin `N` sits just above it and on bin `1` just below.

use serde::{Deserialize, Serialize};

use crate::{Error, Mode, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub q: usize,
    pub m: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub delta_lambda: f64,
    /// `nodes_on[i - 1]` is the node of on bin `i`.
    pub nodes_on: Vec<f64>,
    /// `nodes_off[j - 1]` is the node of off bin `j`.
    pub nodes_off: Vec<f64>,
}

pub fn build_grid(lambda_min: f64, lambda_max: f64, q: usize, m: usize) -> Result<GridSpec> {
    if !(lambda_min.is_finite() && lambda_max.is_finite() && lambda_max > lambda_min) {
        return Err(Error::InvalidParameter(format!(
            "grid needs lambda_max > lambda_min, got [{lambda_min}, {lambda_max}]"
        )));
    }
    if q < 3 {
        return Err(Error::InvalidParameter(format!("grid needs q >= 3, got {q}")));
    }
    if m < 1 {
        return Err(Error::InvalidParameter("grid needs m >= 1".into()));
    }
    let n = q + m;
    let delta_lambda = (lambda_max - lambda_min) / (q - 1) as f64;
    let mut g = GridSpec {
        n,
        q,
        m,
        lambda_min,
        lambda_max,
        delta_lambda,
        nodes_on: Vec::with_capacity(n),
        nodes_off: Vec::with_capacity(n),
    };
    for j in 1..=n {
        g.nodes_off.push(g.off_axis_position(j as f64 - 0.5));
        g.nodes_on.push(g.off_axis_position((j + m - 1) as f64 - 0.5));
    }
    Ok(g)
}

/// Bin of `theta` on the axis of `mode` (1-based, clamped to `1..=N`).
pub fn bin_temperature(theta: f64, mode: Mode, grid: &GridSpec) -> usize {
    grid.bin(theta, mode)
}

impl GridSpec {
    /// Temperature at fractional off-axis position `s`, where off bin `j`
    /// spans `[s = j-1, s = j)`. Written so that the deadband edges
    /// (`s = m` and `s = N-1`) evaluate to `lambda_min`/`lambda_max` exactly.
    fn off_axis_position(&self, s: f64) -> f64 {
        let width = self.lambda_max - self.lambda_min;
        self.lambda_min + ((s - self.m as f64) / (self.q - 1) as f64) * width
    }

    /// Left edge of off bin `g + 1` (g may run past the grid).
    fn off_edge(&self, g: i64) -> f64 {
        self.off_axis_position(g as f64)
    }

    /// Zero-based off-axis cell index containing `theta`, unclamped.
    fn global_cell(&self, theta: f64) -> i64 {
        let guess = ((theta - self.lambda_min) / self.delta_lambda).floor() + self.m as f64;
        let mut g = guess.clamp(-2.0, self.n as f64 + 2.0) as i64;
        // Correct the division's rounding against the exact edge formula.
        while g > -2 && theta < self.off_edge(g) {
            g -= 1;
        }
        while g < self.n as i64 + 2 && theta >= self.off_edge(g + 1) {
            g += 1;
        }
        g
    }

    pub fn bin(&self, theta: f64, mode: Mode) -> usize {
        let g = self.global_cell(theta);
        let shift = match mode {
            Mode::Off => 0,
            Mode::On => self.m as i64 - 1,
        };
        (g + 1 - shift).clamp(1, self.n as i64) as usize
    }

    pub fn node(&self, mode: Mode, bin: usize) -> f64 {
        self.nodes(mode)[bin - 1]
    }

    pub fn nodes(&self, mode: Mode) -> &[f64] {
        match mode {
            Mode::Off => &self.nodes_off,
            Mode::On => &self.nodes_on,
        }
    }

    /// `[left, right)` edges of a bin.
    pub fn bin_edges(&self, mode: Mode, bin: usize) -> (f64, f64) {
        let g = match mode {
            Mode::Off => bin as i64 - 1,
            Mode::On => bin as i64 + self.m as i64 - 2,
        };
        (self.off_edge(g), self.off_edge(g + 1))
    }

    /// All `N + 1` cell edges of an axis, ascending.
    pub fn edges(&self, mode: Mode) -> Vec<f64> {
        let mut e: Vec<f64> = (1..=self.n).map(|b| self.bin_edges(mode, b).0).collect();
        e.push(self.bin_edges(mode, self.n).1);
        e
    }

    /// Off bins where the grid-support policy may switch on: `m+1..=N-1`.
    pub fn free_off_bins(&self) -> std::ops::RangeInclusive<usize> {
        self.m + 1..=self.n - 1
    }

    /// On bins where the grid-support policy may switch off: `2..=q-1`.
    pub fn free_on_bins(&self) -> std::ops::RangeInclusive<usize> {
        2..=self.q - 1
    }
}
