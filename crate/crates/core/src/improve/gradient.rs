//! Projected adjoint-gradient descent with backtracking.

use std::time::Instant;

use crate::dynamics::{integrate_dual, objective, simulate};
use crate::error::Result;
use crate::grid::{ControlSignal, Trajectory};
use crate::pmp::{pmp_residual, switching_profile, transversality_costate};
use crate::problem::ProblemSpec;

use super::{GradientConfig, IterationFlags, IterationOutcome, IterationRecord, Segments};

/// Pointwise gradient `g(t) = -(K(t) - 2 beta u(t))` of the objective with
/// respect to `u`, plus the costate it was computed from.
pub fn adjoint_gradient(
    p: &ProblemSpec,
    u: &ControlSignal,
    x: &Trajectory,
) -> Result<(Vec<f64>, Trajectory)> {
    x.grid().ensure_matches(u.grid(), "adjoint gradient")?;
    let psi_t = transversality_costate(&p.l, &x.terminal())?;
    let psi = integrate_dual(p, u, &psi_t)?;
    let k = switching_profile(&p.b, &psi, x);
    let g = k
        .iter()
        .zip(u.values())
        .map(|(k, u)| -(k - 2.0 * p.beta * u))
        .collect();
    Ok((g, psi))
}

/// One step `u <- clip(u - sigma g)`, halving `sigma` until the objective
/// strictly decreases. If no trial decreases it the control is returned
/// unchanged and the outcome is marked stalled.
pub fn gradient_iteration(
    p: &ProblemSpec,
    u_s: &ControlSignal,
    x_s: &Trajectory,
    config: &GradientConfig,
) -> Result<IterationOutcome> {
    let started = Instant::now();
    let before = objective(p, x_s, u_s)?;
    let (g, psi) = adjoint_gradient(p, u_s, x_s)?;
    let grid = *u_s.grid();

    let mut sigma = config.initial_step;
    let mut accepted = None;
    for _ in 0..config.max_trials {
        let trial: Vec<f64> = u_s
            .values()
            .iter()
            .zip(&g)
            .map(|(u, g)| (u - sigma * g).clamp(-p.nu, p.nu))
            .collect();
        let control = ControlSignal::new(grid, trial)?;
        // A trial step may leave the reachable set numerically; treat it as a rejection.
        if let Ok((x, value)) = simulate(p, &control) {
            if value.total < before.total {
                accepted = Some((control, x, value));
                break;
            }
        }
        sigma *= config.shrink;
    }

    let stalled = accepted.is_none();
    let (control, trajectory, value) =
        accepted.unwrap_or_else(|| (u_s.clone(), x_s.clone(), before));
    let psi_next_t = transversality_costate(&p.l, &trajectory.terminal())?;
    let psi_next = integrate_dual(p, &control, &psi_next_t)?;
    let residual = pmp_residual(p, &trajectory, &psi_next, &control)?;
    let flags = IterationFlags {
        step_size: (!stalled).then_some(sigma),
        ..IterationFlags::default()
    };
    let record = IterationRecord {
        index: 0,
        objective: value,
        pmp_residual: residual,
        segments: Segments::from_nodes(&control, p.nu),
        wall_time: started.elapsed().as_secs_f64(),
        flags,
    };
    Ok(IterationOutcome {
        control,
        trajectory,
        record,
        costate: psi,
        stalled,
    })
}
