//! Forward and dual trajectory integration, objective evaluation, reachability
//! bounds and the norm-invariant monitor.
//!
//! Both sweeps use classic fourth-order Runge-Kutta on the control grid. The
//! control is linear between nodes, so a step from `t_k` to `t_{k+1}` sees
//! `u_k`, the average of the two nodes at the half step, and `u_{k+1}`.

use crate::error::{Error, Result};
use crate::grid::{ControlSignal, Trajectory};
use crate::linalg::{frobenius_norm, Matrix, Vector};
use crate::problem::ProblemSpec;

/// Norm blow-up guard as a multiple of the reachability upper bound.
pub const BLOWUP_FACTOR: f64 = 10.0;

/// `(x(T), L x(T))`, `int u^2 dt` and their combination `terminal + beta * integral`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub terminal: f64,
    pub integral: f64,
    pub total: f64,
}

impl ObjectiveValue {
    pub fn new(terminal: f64, integral: f64, beta: f64) -> Self {
        let total = if beta == 0.0 {
            terminal
        } else {
            terminal + beta * integral
        };
        Self {
            terminal,
            integral,
            total,
        }
    }
}

/// Two-sided norm bound `|x0| e^{-gamma T} <= |x(t)| <= |x0| e^{gamma T}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachabilityBounds {
    pub gamma: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Scratch buffers for one RK4 step of dimension `n`.
#[derive(Debug, Clone)]
pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            stage: vec![0.0; n],
        }
    }

    /// Advances `x` by `h`. `rhs(frac, state, out)` is called with the stage
    /// position `frac` in `{0, 1/2, 1}` of the step.
    #[inline]
    pub(crate) fn step(
        &mut self,
        x: &mut [f64],
        h: f64,
        mut rhs: impl FnMut(f64, &[f64], &mut [f64]),
    ) {
        let n = x.len();
        rhs(0.0, x, &mut self.k1);
        for i in 0..n {
            self.stage[i] = x[i] + 0.5 * h * self.k1[i];
        }
        rhs(0.5, &self.stage, &mut self.k2);
        for i in 0..n {
            self.stage[i] = x[i] + 0.5 * h * self.k2[i];
        }
        rhs(0.5, &self.stage, &mut self.k3);
        for i in 0..n {
            self.stage[i] = x[i] + h * self.k3[i];
        }
        rhs(1.0, &self.stage, &mut self.k4);
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// `out = (A + u B) x`.
#[inline]
pub(crate) fn bilinear_rhs(a: &Matrix, b: &Matrix, u: f64, x: &[f64], out: &mut [f64]) {
    let n = x.len();
    let (ad, bd) = (a.as_slice(), b.as_slice());
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..n {
            acc += (ad[i * n + j] + u * bd[i * n + j]) * x[j];
        }
        *o = acc;
    }
}

pub fn reachability_bounds(p: &ProblemSpec) -> ReachabilityBounds {
    let gamma = frobenius_norm(&p.a) + p.nu * frobenius_norm(&p.b);
    let r0 = p.x0.norm();
    ReachabilityBounds {
        gamma,
        lower: r0 * (-gamma * p.horizon).exp(),
        upper: r0 * (gamma * p.horizon).exp(),
    }
}

fn check_control(p: &ProblemSpec, u: &ControlSignal) -> Result<()> {
    let grid = u.grid();
    if (grid.horizon() - p.horizon).abs() > 1e-12 * p.horizon {
        return Err(Error::GridMismatch(format!(
            "control grid spans [0, {}] but T = {}",
            grid.horizon(),
            p.horizon
        )));
    }
    if let Some(k) = u.values().iter().position(|v| v.abs() > p.nu) {
        return Err(Error::Invalid(format!(
            "control value {} at node {k} exceeds the bound {}",
            u.values()[k],
            p.nu
        )));
    }
    Ok(())
}

/// Integrates `y' = (M0 + u M1) y` across the whole grid, either forward from
/// node 0 or backward from the last node. Nodes are stored in time order.
fn sweep(
    m0: &Matrix,
    m1: &Matrix,
    u: &ControlSignal,
    start: &[f64],
    backward: bool,
    guard: f64,
) -> Result<Trajectory> {
    let grid = *u.grid();
    let n = start.len();
    let nodes = grid.num_nodes();
    let values = u.values();
    let mut data = vec![0.0; n * nodes];
    let mut rk = Rk4::new(n);
    let mut x = start.to_vec();
    let first = if backward { nodes - 1 } else { 0 };
    data[first * n..(first + 1) * n].copy_from_slice(&x);

    for s in 0..grid.num_intervals() {
        let (from, to) = if backward {
            (nodes - 1 - s, nodes - 2 - s)
        } else {
            (s, s + 1)
        };
        let h = grid.time(to) - grid.time(from);
        let (u_from, u_to) = (values[from], values[to]);
        rk.step(&mut x, h, |frac, y, out| {
            bilinear_rhs(m0, m1, u_from + frac * (u_to - u_from), y, out)
        });
        let norm = crate::linalg::norm_sq(&x).sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite { node: to });
        }
        if norm > guard {
            return Err(Error::BlowUp {
                node: to,
                norm,
                limit: guard,
            });
        }
        data[to * n..(to + 1) * n].copy_from_slice(&x);
    }
    Ok(Trajectory::from_flat(grid, n, data))
}

/// Solves `x' = (A + u B) x`, `x(0) = x0` with RK4 on the control grid.
pub fn integrate_forward(p: &ProblemSpec, u: &ControlSignal) -> Result<Trajectory> {
    check_control(p, u)?;
    let guard = BLOWUP_FACTOR * reachability_bounds(p).upper;
    sweep(&p.a, &p.b, u, p.x0.as_slice(), false, guard)
}

/// Solves the dual system `psi' = -(A^T + u B^T) psi` backward from `psi(T) = psi_t`.
pub fn integrate_dual(p: &ProblemSpec, u: &ControlSignal, psi_t: &Vector) -> Result<Trajectory> {
    check_control(p, u)?;
    if psi_t.dim() != p.dim() {
        return Err(Error::Dimension(format!(
            "terminal costate has dim {}, expected {}",
            psi_t.dim(),
            p.dim()
        )));
    }
    let gamma = reachability_bounds(p).gamma;
    let guard = BLOWUP_FACTOR * psi_t.norm().max(f64::MIN_POSITIVE) * (gamma * p.horizon).exp();
    let neg_at = p.a.transpose().scale(-1.0);
    let neg_bt = p.b.transpose().scale(-1.0);
    sweep(&neg_at, &neg_bt, u, psi_t.as_slice(), true, guard)
}

/// Terminal quadratic form plus the trapezoid integral of `u^2`.
pub fn objective(p: &ProblemSpec, x: &Trajectory, u: &ControlSignal) -> Result<ObjectiveValue> {
    x.grid().ensure_matches(u.grid(), "objective")?;
    if x.dim() != p.dim() {
        return Err(Error::Dimension(format!(
            "trajectory dim {} vs problem dim {}",
            x.dim(),
            p.dim()
        )));
    }
    let terminal = p.terminal_form(x.state_slice(x.len() - 1));
    let integral = control_energy(u);
    Ok(ObjectiveValue::new(terminal, integral, p.beta))
}

/// Trapezoid rule for `int u^2 dt` on the control grid.
pub fn control_energy(u: &ControlSignal) -> f64 {
    u.grid().trapezoid(u.values().iter().map(|v| v * v))
}

/// Integrates forward and evaluates the objective.
pub fn simulate(p: &ProblemSpec, u: &ControlSignal) -> Result<(Trajectory, ObjectiveValue)> {
    let x = integrate_forward(p, u)?;
    let value = objective(p, &x, u)?;
    Ok((x, value))
}

/// `max_k | |x_k|^2 - |x_0|^2 | / |x_0|^2`.
pub fn invariant_drift(x: &Trajectory) -> Result<f64> {
    let r0 = crate::linalg::norm_sq(x.state_slice(0));
    if r0 == 0.0 {
        return Err(Error::Invalid(
            "invariant drift is undefined for a zero initial state".into(),
        ));
    }
    Ok(x.states()
        .map(|s| (crate::linalg::norm_sq(s) - r0).abs() / r0)
        .fold(0.0, f64::max))
}
