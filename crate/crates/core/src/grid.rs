//! Uniform time grids, piecewise-linear control signals and sampled trajectories.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::linalg::Vector;

/// Uniform grid on `[0, horizon]` with `num_nodes` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    num_nodes: usize,
    horizon: f64,
    step: f64,
}

impl GridSpec {
    pub fn new(horizon: f64, num_nodes: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Invalid(format!(
                "grid horizon must be positive, got {horizon}"
            )));
        }
        if num_nodes < 2 {
            return Err(Error::Invalid(format!(
                "grid needs at least 2 nodes, got {num_nodes}"
            )));
        }
        Ok(Self {
            num_nodes,
            horizon,
            step: horizon / (num_nodes - 1) as f64,
        })
    }

    /// Grid with the given step; `horizon / step` must be an integer to within 1e-9.
    pub fn with_step(horizon: f64, step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::Invalid(format!(
                "grid step must be positive, got {step}"
            )));
        }
        let intervals = horizon / step;
        let rounded = intervals.round();
        if rounded < 1.0 || (intervals - rounded).abs() > 1e-9 * rounded.max(1.0) {
            return Err(Error::Invalid(format!(
                "step {step} does not divide horizon {horizon} into whole intervals"
            )));
        }
        Self::new(horizon, rounded as usize + 1)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_intervals(&self) -> usize {
        self.num_nodes - 1
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Time of node `k`; the last node sits exactly on the horizon.
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        if k + 1 == self.num_nodes {
            self.horizon
        } else {
            k as f64 * self.step
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_nodes).map(|k| self.time(k))
    }

    /// Interval index `k` and local fraction in `[0, 1]` such that `t = t_k + frac * h`.
    #[inline]
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let s = (t / self.step).clamp(0.0, self.num_intervals() as f64);
        let k = (s.floor() as usize).min(self.num_intervals() - 1);
        (k, s - k as f64)
    }

    /// Trapezoid quadrature weight of node `k`.
    pub fn trapezoid_weight(&self, k: usize) -> f64 {
        if k == 0 || k + 1 == self.num_nodes {
            0.5 * self.step
        } else {
            self.step
        }
    }

    /// Trapezoid rule over nodal samples.
    pub fn trapezoid(&self, samples: impl IntoIterator<Item = f64>) -> f64 {
        samples
            .into_iter()
            .enumerate()
            .map(|(k, v)| v * self.trapezoid_weight(k))
            .sum()
    }

    pub fn matches(&self, other: &GridSpec) -> bool {
        self.num_nodes == other.num_nodes
            && (self.horizon - other.horizon).abs() <= 1e-12 * self.horizon.max(other.horizon)
    }

    pub(crate) fn ensure_matches(&self, other: &GridSpec, what: &str) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {} nodes on [0, {}] vs {} nodes on [0, {}]",
                self.num_nodes, self.horizon, other.num_nodes, other.horizon
            )))
        }
    }
}

/// Scalar control sampled on a grid; values between nodes are linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ControlSignal {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(Error::GridMismatch(format!(
                "control has {} values for {} grid nodes",
                values.len(),
                grid.num_nodes()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "control value at node {k} is not finite"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Builds a control clipped to `[-nu, nu]`; the flag reports whether any node was clipped.
    pub fn clamped(grid: GridSpec, mut values: Vec<f64>, nu: f64) -> Result<(Self, bool)> {
        let mut clipped = false;
        for v in values.iter_mut() {
            let c = v.clamp(-nu, nu);
            if c != *v {
                clipped = true;
                *v = c;
            }
        }
        Ok((Self::new(grid, values)?, clipped))
    }

    pub fn constant(grid: GridSpec, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.num_nodes()])
    }

    /// Node `t` takes the value of the first piece with `t0 <= t < t1`; a piece ending on
    /// the horizon also covers the final node.
    pub fn piecewise(grid: GridSpec, pieces: &[(f64, f64, f64)]) -> Result<Self> {
        let tol = 1e-12 * grid.horizon();
        let values = grid
            .times()
            .enumerate()
            .map(|(k, t)| {
                pieces
                    .iter()
                    .find(|(t0, t1, _)| {
                        t >= *t0 - tol
                            && (t < *t1 - tol || (k + 1 == grid.num_nodes() && t <= *t1 + tol))
                    })
                    .map(|p| p.2)
                    .ok_or_else(|| {
                        Error::Invalid(format!("no control piece covers node {k} (t = {t})"))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn value_at(&self, t: f64) -> f64 {
        let (k, frac) = self.grid.locate(t);
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_admissible(&self, nu: f64) -> bool {
        self.values.iter().all(|v| v.abs() <= nu)
    }

    /// Writes `t,u` rows with shortest round-trip numerals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,u")?;
        for (t, u) in self.grid.times().zip(&self.values) {
            writeln!(w, "{t},{u}")?;
        }
        Ok(())
    }
}

/// States sampled at every grid node; `states[k]` belongs to time `t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: GridSpec,
    dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn from_states(grid: GridSpec, states: Vec<Vector>) -> Result<Self> {
        if states.len() != grid.num_nodes() {
            return Err(Error::GridMismatch(format!(
                "trajectory has {} states for {} nodes",
                states.len(),
                grid.num_nodes()
            )));
        }
        let dim = states[0].dim();
        let mut data = Vec::with_capacity(dim * states.len());
        for (k, s) in states.iter().enumerate() {
            if s.dim() != dim {
                return Err(Error::Dimension(format!(
                    "state {k} has dim {}, expected {dim}",
                    s.dim()
                )));
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Self { grid, dim, data })
    }

    /// Flat node-major storage; caller guarantees the length.
    pub(crate) fn from_flat(grid: GridSpec, dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * grid.num_nodes());
        Self { grid, dim, data }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.num_nodes()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn state_slice(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn state(&self, k: usize) -> Vector {
        Vector::from_raw(self.state_slice(k).to_vec())
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn initial(&self) -> Vector {
        self.state(0)
    }

    pub fn terminal(&self) -> Vector {
        self.state(self.len() - 1)
    }

    /// Linear interpolation between nodes, written into `out`.
    #[inline]
    pub fn interpolate_into(&self, t: f64, out: &mut [f64]) {
        let (k, frac) = self.grid.locate(t);
        let a = self.state_slice(k);
        let b = self.state_slice(k + 1);
        for ((o, x0), x1) in out.iter_mut().zip(a).zip(b) {
            *o = x0 + frac * (x1 - x0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// CSV with header `t,<prefix>1,...,<prefix>n` and 12 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W, prefix: &str) -> io::Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|i| format!("{prefix}{i}")).collect();
        writeln!(w, "t,{}", header.join(","))?;
        for (k, state) in self.states().enumerate() {
            write!(w, "{}", fmt_sig(self.grid.time(k), 12))?;
            for v in state {
                write!(w, ",{}", fmt_sig(*v, 12))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
