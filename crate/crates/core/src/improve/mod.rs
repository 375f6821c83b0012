//! Iterative improvement of a control: Krotov's global method, a projected
//! adjoint-gradient method, and the outer solve loop.

mod certificate;
mod concave;
mod gradient;
mod krotov;
mod solve;
mod table;

pub use certificate::{improvement_certificate, Certificate};
pub use concave::ensure_concave_terminal;
pub use gradient::{adjoint_gradient, gradient_iteration};
pub use krotov::{krotov_iteration, krotov_iteration_bang_only};
pub use solve::solve;
pub use table::write_iterations_csv;

use crate::dynamics::ObjectiveValue;
use crate::error::{Error, Result};
use crate::grid::{ControlSignal, GridSpec, Trajectory};
use crate::pmp::PmpResidual;

/// Slack allowed when comparing successive objective values.
pub const MONOTONE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Global,
    GlobalRegularized,
    Gradient,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Global => "global",
            Method::GlobalRegularized => "global-regularized",
            Method::Gradient => "gradient",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Method::Global),
            "global-regularized" => Ok(Method::GlobalRegularized),
            "gradient" => Ok(Method::Gradient),
            other => Err(Error::Invalid(format!(
                "unknown method {other:?}; expected global, global-regularized or gradient"
            ))),
        }
    }
}

/// How the global method handles `K = 0` on the discontinuous right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularMode {
    /// Stage-wise Cauchy problems with located switches and explicit singular arcs.
    Staged,
    /// Sign feedback per step, with chattering windows collapsed to singular arcs.
    BangOnlyWithCollapse,
}

/// Chattering detection for [`SingularMode::BangOnlyWithCollapse`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChatterConfig {
    /// Sliding window length in nodes.
    pub window: usize,
    /// Sign changes inside the window that mark chattering.
    pub min_switches: usize,
    /// `K` counts as near zero when `|K|` is within this many steps' worth of its rate.
    pub reach_steps: f64,
}

impl Default for ChatterConfig {
    fn default() -> Self {
        Self {
            window: 50,
            min_switches: 5,
            reach_steps: 4.0,
        }
    }
}

/// Backtracking policy of the gradient method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientConfig {
    pub initial_step: f64,
    pub shrink: f64,
    pub max_trials: usize,
}

impl Default for GradientConfig {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            max_trials: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub max_iters: usize,
    pub grid: GridSpec,
    /// Weight of `int u^2` for the regularized global method.
    pub alpha_reg: f64,
    /// Stop once the objective decreases by less than this.
    pub stop_tol: f64,
    /// Stop once the maximum-principle residual falls below this.
    pub pmp_tol: f64,
    pub singular_mode: SingularMode,
    pub chatter: ChatterConfig,
    pub gradient: GradientConfig,
}

impl SolverConfig {
    pub const DEFAULT_ALPHA_REG: f64 = 0.05;
    pub const DEFAULT_STOP_TOL: f64 = 1e-9;
    pub const DEFAULT_PMP_TOL: f64 = 1e-6;
    pub const DEFAULT_MAX_ITERS: usize = 100;

    pub fn new(method: Method, grid: GridSpec) -> Self {
        Self {
            method,
            max_iters: Self::DEFAULT_MAX_ITERS,
            grid,
            alpha_reg: Self::DEFAULT_ALPHA_REG,
            stop_tol: Self::DEFAULT_STOP_TOL,
            pmp_tol: Self::DEFAULT_PMP_TOL,
            singular_mode: SingularMode::Staged,
            chatter: ChatterConfig::default(),
            gradient: GradientConfig::default(),
        }
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Invalid("max_iters must be at least 1".into()));
        }
        if !(self.stop_tol > 0.0 && self.pmp_tol > 0.0) {
            return Err(Error::Invalid(
                "stopping tolerances must be positive".into(),
            ));
        }
        if !(self.alpha_reg >= 0.0 && self.alpha_reg.is_finite()) {
            return Err(Error::Invalid("alpha_reg must be nonnegative".into()));
        }
        if self.method == Method::GlobalRegularized && self.alpha_reg == 0.0 {
            return Err(Error::Invalid(
                "global-regularized needs alpha_reg > 0".into(),
            ));
        }
        let g = &self.gradient;
        if !(g.initial_step > 0.0 && g.shrink > 0.0 && g.shrink < 1.0 && g.max_trials >= 1) {
            return Err(Error::Invalid(
                "invalid gradient backtracking settings".into(),
            ));
        }
        if self.chatter.window < 2 || self.chatter.min_switches < 1 {
            return Err(Error::Invalid("invalid chattering thresholds".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    BangPlus,
    BangMinus,
    Singular,
    Interior,
}

impl SegmentKind {
    pub fn label(self) -> &'static str {
        match self {
            SegmentKind::BangPlus => "bang+",
            SegmentKind::BangMinus => "bang-",
            SegmentKind::Singular => "singular",
            SegmentKind::Interior => "interior",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub kind: SegmentKind,
}

/// Ordered, contiguous segments covering `[0, T]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Segments(Vec<Segment>);

impl Segments {
    pub(crate) fn push(&mut self, kind: SegmentKind, t_start: f64, t_end: f64) {
        if t_end <= t_start {
            return;
        }
        if let Some(last) = self.0.last_mut() {
            if last.kind == kind {
                last.t_end = t_end;
                return;
            }
        }
        self.0.push(Segment {
            t_start,
            t_end,
            kind,
        });
    }

    /// Drops everything after `t`, truncating the segment that contains it.
    pub(crate) fn truncate_at(&mut self, t: f64) {
        self.0.retain(|s| s.t_start < t);
        if let Some(last) = self.0.last_mut() {
            last.t_end = last.t_end.min(t);
        }
    }

    /// Classifies nodal control values as bang or interior.
    pub(crate) fn from_nodes(u: &ControlSignal, nu: f64) -> Self {
        let grid = u.grid();
        let kind_of = |v: f64| {
            if v >= nu {
                SegmentKind::BangPlus
            } else if v <= -nu {
                SegmentKind::BangMinus
            } else {
                SegmentKind::Interior
            }
        };
        let mut segs = Self::default();
        for k in 0..grid.num_intervals() {
            segs.push(kind_of(u.values()[k]), grid.time(k), grid.time(k + 1));
        }
        segs
    }

    pub fn as_slice(&self) -> &[Segment] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Whether the segments tile `[0, horizon]` without gaps.
    pub fn covers(&self, horizon: f64) -> bool {
        let tol = 1e-12 * horizon;
        let Some(first) = self.0.first() else {
            return false;
        };
        let last = self.0.last().expect("non-empty");
        first.t_start.abs() <= tol
            && (last.t_end - horizon).abs() <= tol
            && self
                .0
                .windows(2)
                .all(|w| (w[0].t_end - w[1].t_start).abs() <= tol)
    }

    pub fn count(&self, kind: SegmentKind) -> usize {
        self.0.iter().filter(|s| s.kind == kind).count()
    }
}

/// Diagnostics raised while building one iterate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IterationFlags {
    /// Zero-`K` decisions where the singular formula was undefined and a bang was used instead.
    pub singular_fallbacks: usize,
    /// Singular-control evaluations that had to be clipped to the bound.
    pub singular_clamped: usize,
    /// A singular arc was still active at the horizon.
    pub singular_to_horizon: bool,
    /// Chattering windows replaced by singular arcs.
    pub collapse_windows: usize,
    /// Accepted gradient step size.
    pub step_size: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub index: usize,
    pub objective: ObjectiveValue,
    pub pmp_residual: PmpResidual,
    pub segments: Segments,
    /// Seconds spent producing this iterate.
    pub wall_time: f64,
    pub flags: IterationFlags,
}

/// One improvement step.
#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub control: ControlSignal,
    pub trajectory: Trajectory,
    pub record: IterationRecord,
    /// Costate of the incoming process that drove the step.
    pub costate: Trajectory,
    /// The objective failed to decrease by more than [`MONOTONE_SLACK`]
    /// (gradient method: no trial step decreased it).
    pub stalled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIters,
    Converged,
    Stalled,
}

impl Termination {
    pub fn label(self) -> &'static str {
        match self {
            Termination::MaxIters => "max-iters",
            Termination::Converged => "converged",
            Termination::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub config: SolverConfig,
    pub history: Vec<IterationRecord>,
    pub final_control: ControlSignal,
    pub final_trajectory: Trajectory,
    pub termination: Termination,
    /// Shift `alpha` applied to `L` to make the terminal form concave (0 if none).
    pub terminal_shift: f64,
}

impl SolverReport {
    pub fn final_objective(&self) -> ObjectiveValue {
        self.history
            .last()
            .expect("history is never empty")
            .objective
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.objective.total).collect()
    }
}
