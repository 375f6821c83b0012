//! Krotov's global improvement step with a linear auxiliary function
//! `phi_s(t, x) = (psi_s(t), x)`.
//!
//! The step solves the dual system backward along the current control, then
//! integrates the state forward under the feedback that maximizes
//! `R_s(t, x, u) = ... + u K(psi_s(t), x) - beta u^2`. For `beta = 0` the
//! feedback is discontinuous on `K = 0`, so the forward pass runs in stages:
//! bang arcs stop where `k(t) = K(psi_s(t), x(t))` crosses zero, and the next
//! stage is chosen from the sign of `dk/dt` under each bang. When neither bang
//! keeps `k` on its side, a singular arc holds `dk/dt = 0`.

use std::time::Instant;

use crate::dynamics::{bilinear_rhs, integrate_dual, objective, Rk4};
use crate::error::{Error, Result};
use crate::grid::{ControlSignal, Trajectory};
use crate::pmp::{pmp_residual, transversality_costate, SwitchingGeometry};
use crate::problem::ProblemSpec;

use super::{
    ChatterConfig, IterationFlags, IterationOutcome, IterationRecord, SegmentKind, Segments,
    SingularMode, MONOTONE_SLACK,
};

/// Cap on located switches inside a single grid interval.
const MAX_CROSSINGS_PER_STEP: usize = 64;

/// Improves `(x_s, u_s)` with the staged global method.
pub fn krotov_iteration(
    p: &ProblemSpec,
    u_s: &ControlSignal,
    x_s: &Trajectory,
) -> Result<IterationOutcome> {
    krotov_step(p, u_s, x_s, SingularMode::Staged, &ChatterConfig::default())
}

/// Global step with pure sign feedback; chattering windows are replaced by singular arcs.
pub fn krotov_iteration_bang_only(
    p: &ProblemSpec,
    u_s: &ControlSignal,
    x_s: &Trajectory,
) -> Result<IterationOutcome> {
    krotov_step(
        p,
        u_s,
        x_s,
        SingularMode::BangOnlyWithCollapse,
        &ChatterConfig::default(),
    )
}

pub(crate) fn krotov_step(
    p: &ProblemSpec,
    u_s: &ControlSignal,
    x_s: &Trajectory,
    mode: SingularMode,
    chatter: &ChatterConfig,
) -> Result<IterationOutcome> {
    let started = Instant::now();
    x_s.grid().ensure_matches(u_s.grid(), "krotov iteration")?;
    let lambda_max =
        *p.l.symmetric_eigenvalues()?
            .last()
            .expect("non-empty spectrum");
    if lambda_max > 1e-12 {
        return Err(Error::GlobalInapplicable(format!(
            "terminal matrix must be negative semidefinite (lambda_max = {lambda_max}); \
             apply ensure_concave_terminal first"
        )));
    }

    let psi_t = transversality_costate(&p.l, &x_s.terminal())?;
    let psi = integrate_dual(p, u_s, &psi_t)?;
    let ctx = Context::new(p, u_s, &psi)?;

    let pass = if p.beta > 0.0 {
        ctx.feedback_forward()?
    } else {
        match mode {
            SingularMode::Staged => ctx.staged_forward()?,
            SingularMode::BangOnlyWithCollapse => ctx.bang_only_forward(chatter)?,
        }
    };

    let grid = *u_s.grid();
    let control = ControlSignal::new(grid, pass.controls)?;
    let trajectory = Trajectory::from_flat(grid, p.dim(), pass.states);
    let before = objective(p, x_s, u_s)?;
    let after = objective(p, &trajectory, &control)?;

    let psi_next_t = transversality_costate(&p.l, &trajectory.terminal())?;
    let psi_next = integrate_dual(p, &control, &psi_next_t)?;
    let residual = pmp_residual(p, &trajectory, &psi_next, &control)?;

    let record = IterationRecord {
        index: 0,
        objective: after,
        pmp_residual: residual,
        segments: pass.segments,
        wall_time: started.elapsed().as_secs_f64(),
        flags: pass.flags,
    };
    Ok(IterationOutcome {
        control,
        trajectory,
        record,
        costate: psi,
        stalled: after.total > before.total + MONOTONE_SLACK,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Law {
    Plus,
    Minus,
    Singular,
    /// Clipped `K / (2 beta)`.
    Feedback,
}

impl Law {
    fn sign(self) -> Option<f64> {
        match self {
            Law::Plus => Some(1.0),
            Law::Minus => Some(-1.0),
            _ => None,
        }
    }

    fn kind(self) -> SegmentKind {
        match self {
            Law::Plus => SegmentKind::BangPlus,
            Law::Minus => SegmentKind::BangMinus,
            Law::Singular => SegmentKind::Singular,
            Law::Feedback => SegmentKind::Interior,
        }
    }
}

struct ForwardPass {
    controls: Vec<f64>,
    states: Vec<f64>,
    segments: Segments,
    flags: IterationFlags,
}

/// Quantities fixed during one forward pass.
struct Context<'a> {
    p: &'a ProblemSpec,
    geo: SwitchingGeometry,
    u_s: &'a ControlSignal,
    psi: &'a Trajectory,
    /// `psi'` at the nodes, from the dual system.
    psi_dot: Vec<f64>,
    nu: f64,
    step: f64,
    guard: f64,
}

/// Mutable per-pass scratch space.
struct Work {
    rk: Rk4,
    psi: Vec<f64>,
    stage_psi: Vec<f64>,
}

impl<'a> Context<'a> {
    fn new(p: &'a ProblemSpec, u_s: &'a ControlSignal, psi: &'a Trajectory) -> Result<Self> {
        let bounds = crate::dynamics::reachability_bounds(p);
        let n = p.dim();
        let at = p.a.transpose();
        let bt = p.b.transpose();
        let mut psi_dot = vec![0.0; n * psi.len()];
        let mut tmp = vec![0.0; n];
        for (k, (&w, out)) in u_s.values().iter().zip(psi_dot.chunks_mut(n)).enumerate() {
            at.mul_slice_into(psi.state_slice(k), out);
            bt.mul_slice_into(psi.state_slice(k), &mut tmp);
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o = -(*o + w * t);
            }
        }
        Ok(Self {
            p,
            geo: SwitchingGeometry::for_problem(p)?,
            u_s,
            psi,
            psi_dot,
            nu: p.nu,
            step: u_s.grid().step(),
            guard: crate::dynamics::BLOWUP_FACTOR * bounds.upper,
        })
    }

    fn work(&self) -> Work {
        let n = self.p.dim();
        Work {
            rk: Rk4::new(n),
            psi: vec![0.0; n],
            stage_psi: vec![0.0; n],
        }
    }

    /// Cubic Hermite interpolation of `psi_s` from nodal values and derivatives.
    fn psi_at(&self, t: f64, out: &mut [f64]) {
        let n = out.len();
        let (k, s) = self.u_s.grid().locate(t);
        let (p0, p1) = (self.psi.state_slice(k), self.psi.state_slice(k + 1));
        let d0 = &self.psi_dot[k * n..(k + 1) * n];
        let d1 = &self.psi_dot[(k + 1) * n..(k + 2) * n];
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = (s3 - 2.0 * s2 + s) * self.step;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = (s3 - s2) * self.step;
        for i in 0..n {
            out[i] = h00 * p0[i] + h10 * d0[i] + h01 * p1[i] + h11 * d1[i];
        }
    }

    fn k_at(&self, t: f64, x: &[f64], psi_buf: &mut [f64]) -> f64 {
        self.psi_at(t, psi_buf);
        self.geo.k(psi_buf, x)
    }

    /// Rates of `k` under `+nu` and `-nu`, given `psi` at time `t`.
    fn bang_rates(&self, t: f64, x: &[f64], psi: &[f64]) -> (f64, f64, f64) {
        let w = self.u_s.value_at(t);
        let (c, d) = self.geo.rate_terms(psi, x);
        (c + (self.nu - w) * d, c - (self.nu + w) * d, d)
    }

    /// Control applied by `law` at `(t, x)`; `psi_buf` is scratch.
    fn law_control(&self, law: Law, t: f64, x: &[f64], psi_buf: &mut [f64]) -> f64 {
        match law {
            Law::Plus => self.nu,
            Law::Minus => -self.nu,
            Law::Feedback => {
                let k = self.k_at(t, x, psi_buf);
                (k / (2.0 * self.p.beta)).clamp(-self.nu, self.nu)
            }
            Law::Singular => {
                self.psi_at(t, psi_buf);
                match self
                    .geo
                    .singular_control(psi_buf, x, self.u_s.value_at(t), self.nu)
                {
                    Ok(s) => s.value,
                    Err(_) => {
                        let (dp, dm, _) = self.bang_rates(t, x, psi_buf);
                        if dp.abs() >= dm.abs() {
                            self.nu
                        } else {
                            -self.nu
                        }
                    }
                }
            }
        }
    }

    /// Nodal control value; counts clipped singular values.
    fn node_control(
        &self,
        law: Law,
        t: f64,
        x: &[f64],
        work: &mut Work,
        flags: &mut IterationFlags,
    ) -> f64 {
        if law == Law::Singular {
            self.psi_at(t, &mut work.psi);
            if let Ok(s) = self
                .geo
                .singular_control(&work.psi, x, self.u_s.value_at(t), self.nu)
            {
                if s.clamped {
                    flags.singular_clamped += 1;
                }
                return s.value;
            }
        }
        self.law_control(law, t, x, &mut work.psi)
    }

    /// RK4 over `[t0, t0 + dt]` with the control supplied by `law` at each stage.
    fn advance(&self, work: &mut Work, law: Law, t0: f64, x: &mut [f64], dt: f64) {
        let Work { rk, stage_psi, .. } = work;
        rk.step(x, dt, |frac, y, out| {
            let u = self.law_control(law, t0 + frac * dt, y, stage_psi);
            bilinear_rhs(&self.p.a, &self.p.b, u, y, out);
        });
    }

    /// Feedback choice at `(t, x)`. With `at_zero` the sign of `k` is ignored and
    /// the choice rests on the rates of `k` under each bang.
    fn decide(
        &self,
        t: f64,
        x: &[f64],
        at_zero: bool,
        work: &mut Work,
        flags: &mut IterationFlags,
    ) -> Law {
        let k = self.k_at(t, x, &mut work.psi);
        let psi = &work.psi;
        if !at_zero {
            let tol = self.geo.switching_tol(psi, x);
            if k > tol {
                return Law::Plus;
            }
            if k < -tol {
                return Law::Minus;
            }
        }
        self.decide_at_zero(t, x, psi, flags)
    }

    fn decide_at_zero(&self, t: f64, x: &[f64], psi: &[f64], flags: &mut IterationFlags) -> Law {
        let (dp, dm, d) = self.bang_rates(t, x, psi);
        if dp > 0.0 {
            // +nu keeps k >= 0; chosen also when -nu would keep k <= 0.
            Law::Plus
        } else if dm < 0.0 {
            Law::Minus
        } else if d.abs() > self.geo.denominator_guard(psi, x) {
            Law::Singular
        } else {
            flags.singular_fallbacks += 1;
            if dp.abs() >= dm.abs() {
                Law::Plus
            } else {
                Law::Minus
            }
        }
    }

    fn check_state(&self, x: &[f64], node: usize) -> Result<()> {
        let norm = crate::linalg::norm_sq(x).sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite { node });
        }
        if norm > self.guard {
            return Err(Error::BlowUp {
                node,
                norm,
                limit: self.guard,
            });
        }
        Ok(())
    }

    /// Bisection for the zero of `sign * k` inside `(t0, t1]` along `law`,
    /// starting from `x0` at `t0`, down to a bracket of `1e-9 h`. Returns the
    /// bracket end with the smaller `|k|`.
    #[allow(clippy::too_many_arguments)]
    fn locate_crossing(
        &self,
        work: &mut Work,
        law: Law,
        sign: f64,
        t0: f64,
        x0: &[f64],
        t1: f64,
        x1: &[f64],
    ) -> (f64, Vec<f64>) {
        let floor = 1e-9 * self.step;
        let (mut lo, mut hi) = (t0, t1);
        let mut k_lo = sign * self.k_at(t0, x0, &mut work.psi);
        let mut k_hi = sign * self.k_at(t1, x1, &mut work.psi);
        let mut x_lo = x0.to_vec();
        let mut x_hi = x1.to_vec();
        let mut x_mid = x0.to_vec();
        while hi - lo > floor {
            let mid = 0.5 * (lo + hi);
            x_mid.copy_from_slice(x0);
            self.advance(work, law, t0, &mut x_mid, mid - t0);
            let k = sign * self.k_at(mid, &x_mid, &mut work.psi);
            if k == 0.0 {
                return (mid, x_mid);
            }
            if k > 0.0 {
                lo = mid;
                k_lo = k;
                x_lo.copy_from_slice(&x_mid);
            } else {
                hi = mid;
                k_hi = k;
                x_hi.copy_from_slice(&x_mid);
            }
        }
        if k_lo.abs() < k_hi.abs() && lo > t0 {
            (lo, x_lo)
        } else {
            (hi, x_hi)
        }
    }

    fn staged_forward(&self) -> Result<ForwardPass> {
        let grid = *self.u_s.grid();
        let n = self.p.dim();
        let nodes = grid.num_nodes();
        let mut work = self.work();
        let mut flags = IterationFlags::default();
        let mut segments = Segments::default();
        let mut controls = vec![0.0; nodes];
        let mut states = vec![0.0; n * nodes];

        let mut x = self.p.x0.as_slice().to_vec();
        let mut x_new = x.clone();
        let mut t = 0.0;
        let mut node = 0;
        states[..n].copy_from_slice(&x);
        let mut law = self.decide(0.0, &x, false, &mut work, &mut flags);
        controls[0] = self.node_control(law, 0.0, &x, &mut work, &mut flags);
        let mut seg_start = 0.0;
        let mut crossings = 0;

        while node + 1 < nodes {
            let t_next = grid.time(node + 1);
            x_new.copy_from_slice(&x);
            self.advance(&mut work, law, t, &mut x_new, t_next - t);

            if let Some(sign) = law.sign() {
                if crossings < MAX_CROSSINGS_PER_STEP {
                    let k0 = sign * self.k_at(t, &x, &mut work.psi);
                    let k1 = sign * self.k_at(t_next, &x_new, &mut work.psi);
                    if k0 >= 0.0 && k1 < 0.0 {
                        let (theta, x_theta) =
                            self.locate_crossing(&mut work, law, sign, t, &x, t_next, &x_new);
                        if theta < t_next {
                            crossings += 1;
                            segments.push(law.kind(), seg_start, theta);
                            seg_start = theta;
                            t = theta;
                            x = x_theta;
                            law = self.decide(t, &x, true, &mut work, &mut flags);
                            continue;
                        }
                    }
                }
            }

            node += 1;
            crossings = 0;
            self.check_state(&x_new, node)?;
            std::mem::swap(&mut x, &mut x_new);
            t = t_next;
            states[node * n..(node + 1) * n].copy_from_slice(&x);
            // A singular arc ends only through the exit inequalities, not through drift of k.
            let next = self.decide(t, &x, law == Law::Singular, &mut work, &mut flags);
            if next != law {
                segments.push(law.kind(), seg_start, t);
                seg_start = t;
                law = next;
            }
            controls[node] = self.node_control(law, t, &x, &mut work, &mut flags);
        }
        segments.push(law.kind(), seg_start, grid.horizon());
        flags.singular_to_horizon = law == Law::Singular;
        Ok(ForwardPass {
            controls,
            states,
            segments,
            flags,
        })
    }

    /// Sign feedback `u = nu` if `k >= 0`, else `-nu`, held over each step.
    fn bang_only_forward(&self, chatter: &ChatterConfig) -> Result<ForwardPass> {
        let grid = *self.u_s.grid();
        let n = self.p.dim();
        let nodes = grid.num_nodes();
        let h = grid.step();
        let mut work = self.work();
        let mut flags = IterationFlags::default();
        let mut segments = Segments::default();
        let mut controls = vec![0.0; nodes];
        let mut states = vec![0.0; n * nodes];
        let mut laws = vec![Law::Plus; nodes];
        // |k| and its near-zero band at each visited node.
        let mut near_zero = vec![false; nodes];
        let mut switches: Vec<usize> = Vec::new();

        let sign_law = |k: f64| if k >= 0.0 { Law::Plus } else { Law::Minus };
        let mut x = self.p.x0.as_slice().to_vec();
        states[..n].copy_from_slice(&x);
        let mut node = 0;
        let mut seg_start = 0.0;
        {
            let k = self.k_at(0.0, &x, &mut work.psi);
            laws[0] = sign_law(k);
            near_zero[0] = self.is_near_zero(0.0, &x, k, h, chatter, &work.psi);
            controls[0] = self.law_control(laws[0], 0.0, &x, &mut work.psi);
        }

        while node + 1 < nodes {
            let law = laws[node];
            let t = grid.time(node);
            let t_next = grid.time(node + 1);
            self.advance(&mut work, law, t, &mut x, t_next - t);
            node += 1;
            self.check_state(&x, node)?;
            states[node * n..(node + 1) * n].copy_from_slice(&x);
            let k = self.k_at(t_next, &x, &mut work.psi);
            near_zero[node] = self.is_near_zero(t_next, &x, k, h, chatter, &work.psi);
            let next = sign_law(k);
            if next != law {
                switches.push(node);
                segments.push(law.kind(), seg_start, t_next);
                seg_start = t_next;
            }
            laws[node] = next;
            controls[node] = self.law_control(next, t_next, &x, &mut work.psi);

            let window_start = node.saturating_sub(chatter.window - 1);
            let recent: Vec<usize> = switches
                .iter()
                .copied()
                .filter(|&s| s >= window_start.max(1))
                .collect();
            if recent.len() < chatter.min_switches
                || !near_zero[window_start..=node].iter().all(|z| *z)
            {
                continue;
            }

            // Collapse: restart from the first switch in the window on a singular arc.
            let j0 = recent[0];
            let t_a = grid.time(j0 - 1);
            let t_b = grid.time(j0);
            let bang = laws[j0 - 1];
            let x_a = states[(j0 - 1) * n..j0 * n].to_vec();
            segments.truncate_at(t_a);
            let mut x_b = x_a.clone();
            self.advance(&mut work, bang, t_a, &mut x_b, t_b - t_a);
            let sign = bang.sign().expect("sign feedback is a bang");
            let (theta, x_theta) =
                self.locate_crossing(&mut work, bang, sign, t_a, &x_a, t_b, &x_b);
            segments.push(bang.kind(), t_a, theta);

            x = x_theta;
            self.advance(&mut work, Law::Singular, theta, &mut x, t_b - theta);
            node = j0;
            self.check_state(&x, node)?;
            states[node * n..(node + 1) * n].copy_from_slice(&x);
            let exit = loop {
                let t_node = grid.time(node);
                self.psi_at(t_node, &mut work.psi);
                let psi_now = work.psi.clone();
                let choice = self.decide_at_zero(t_node, &x, &psi_now, &mut flags);
                if choice != Law::Singular || node + 1 == nodes {
                    break choice;
                }
                laws[node] = Law::Singular;
                controls[node] =
                    self.node_control(Law::Singular, t_node, &x, &mut work, &mut flags);
                self.advance(
                    &mut work,
                    Law::Singular,
                    t_node,
                    &mut x,
                    grid.time(node + 1) - t_node,
                );
                node += 1;
                self.check_state(&x, node)?;
                states[node * n..(node + 1) * n].copy_from_slice(&x);
            };
            let t_exit = grid.time(node);
            flags.collapse_windows += 1;
            if exit == Law::Singular {
                laws[node] = Law::Singular;
                controls[node] =
                    self.node_control(Law::Singular, t_exit, &x, &mut work, &mut flags);
                segments.push(SegmentKind::Singular, theta, t_exit);
                seg_start = t_exit;
                flags.singular_to_horizon = true;
            } else {
                segments.push(SegmentKind::Singular, theta, t_exit);
                seg_start = t_exit;
                laws[node] = exit;
                controls[node] = self.law_control(exit, t_exit, &x, &mut work.psi);
            }
            switches.clear();
            near_zero[node] = false;
        }
        let last = laws[nodes - 1];
        segments.push(last.kind(), seg_start, grid.horizon());
        Ok(ForwardPass {
            controls,
            states,
            segments,
            flags,
        })
    }

    fn is_near_zero(
        &self,
        t: f64,
        x: &[f64],
        k: f64,
        h: f64,
        chatter: &ChatterConfig,
        psi: &[f64],
    ) -> bool {
        let (dp, dm, _) = self.bang_rates(t, x, psi);
        k.abs() <= chatter.reach_steps * h * dp.abs().max(dm.abs())
    }

    fn feedback_forward(&self) -> Result<ForwardPass> {
        let grid = *self.u_s.grid();
        let n = self.p.dim();
        let nodes = grid.num_nodes();
        let mut work = self.work();
        let mut controls = vec![0.0; nodes];
        let mut states = vec![0.0; n * nodes];
        let mut x = self.p.x0.as_slice().to_vec();
        states[..n].copy_from_slice(&x);
        controls[0] = self.law_control(Law::Feedback, 0.0, &x, &mut work.psi);
        for node in 1..nodes {
            let t = grid.time(node - 1);
            let t_next = grid.time(node);
            self.advance(&mut work, Law::Feedback, t, &mut x, t_next - t);
            self.check_state(&x, node)?;
            states[node * n..(node + 1) * n].copy_from_slice(&x);
            controls[node] = self.law_control(Law::Feedback, t_next, &x, &mut work.psi);
        }
        let control = ControlSignal::new(grid, controls.clone())?;
        Ok(ForwardPass {
            controls,
            states,
            segments: Segments::from_nodes(&control, self.nu),
            flags: IterationFlags::default(),
        })
    }
}
