use crate::dynamics::{integrate_dual, integrate_forward, objective, ObjectiveValue};
use crate::error::{Error, Result};
use crate::grid::ControlSignal;
use crate::pmp::{pmp_residual, transversality_costate};
use crate::problem::ProblemSpec;

use super::concave::ensure_concave_terminal;
use super::gradient::gradient_iteration;
use super::krotov::krotov_step;
use super::{
    IterationFlags, IterationRecord, Method, Segments, SolverConfig, SolverReport, Termination,
};

/// Runs the configured method from `u0`.
///
/// The global methods work on a problem with concave terminal form; reported
/// objectives are shifted back by `alpha |x0|^2` so they refer to the original
/// `L`. For the regularized method `total` is the working objective
/// `terminal + alpha_reg int u^2` and `terminal` the pure terminal value.
pub fn solve(p: &ProblemSpec, u0: &ControlSignal, config: &SolverConfig) -> Result<SolverReport> {
    config.validate()?;
    config.grid.ensure_matches(u0.grid(), "initial control")?;
    if !u0.is_admissible(p.nu) {
        return Err(Error::Invalid(format!(
            "initial control exceeds the bound nu = {} (max |u| = {})",
            p.nu,
            u0.max_abs()
        )));
    }
    let working = match config.method {
        Method::GlobalRegularized => p.with_beta(config.alpha_reg),
        Method::Global | Method::Gradient => p.clone(),
    };
    let (working, shift) = match config.method {
        Method::Global | Method::GlobalRegularized => ensure_concave_terminal(&working)?,
        Method::Gradient => (working, 0.0),
    };
    let offset = shift * p.x0.norm_sq();
    let unshift = |v: ObjectiveValue| ObjectiveValue {
        terminal: v.terminal + offset,
        integral: v.integral,
        total: v.total + offset,
    };

    let started = std::time::Instant::now();
    let mut control = u0.clone();
    let mut trajectory = integrate_forward(&working, &control)?;
    let value = objective(&working, &trajectory, &control)?;
    let psi_t = transversality_costate(&working.l, &trajectory.terminal())?;
    let psi = integrate_dual(&working, &control, &psi_t)?;
    let residual = pmp_residual(&working, &trajectory, &psi, &control)?;
    let mut history = vec![IterationRecord {
        index: 0,
        objective: unshift(value),
        pmp_residual: residual,
        segments: Segments::from_nodes(&control, p.nu),
        wall_time: started.elapsed().as_secs_f64(),
        flags: IterationFlags::default(),
    }];
    let mut previous = value.total;
    let mut termination = Termination::MaxIters;

    for index in 1..=config.max_iters {
        let outcome = match config.method {
            Method::Gradient => {
                gradient_iteration(&working, &control, &trajectory, &config.gradient)?
            }
            Method::Global | Method::GlobalRegularized => krotov_step(
                &working,
                &control,
                &trajectory,
                config.singular_mode,
                &config.chatter,
            )?,
        };
        if outcome.stalled {
            termination = Termination::Stalled;
            break;
        }
        let mut record = outcome.record;
        let current = record.objective.total;
        record.index = index;
        record.objective = unshift(record.objective);
        let converged = previous - current < config.stop_tol
            || record.pmp_residual.max_violation < config.pmp_tol;
        history.push(record);
        control = outcome.control;
        trajectory = outcome.trajectory;
        previous = current;
        if converged {
            termination = Termination::Converged;
            break;
        }
    }

    Ok(SolverReport {
        config: config.clone(),
        history,
        final_control: control,
        final_trajectory: trajectory,
        termination,
        terminal_shift: shift,
    })
}
