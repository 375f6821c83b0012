//! Exact decomposition of the objective decrease for one global step.

use crate::error::{Error, Result};
use crate::grid::{ControlSignal, Trajectory};
use crate::linalg::dot;
use crate::problem::ProblemSpec;

/// Parts of `I(x_s, u_s) - I(x', u')` for the linear auxiliary function
/// `phi_s(t, x) = (psi_s(t), x)`:
///
/// * `term_u = int [R_s(t, x', u') - R_s(t, x', u_s)] dt`
/// * `term_x = int [R_s(t, x', u_s) - R_s(t, x_s, u_s)] dt`
/// * `term_g = G_s(x_s(T)) - G_s(x'(T))`
///
/// with `R_s = d phi/dt + (psi_s, (A + u B) x) - beta u^2` and
/// `G_s(x) = (x, L x) + phi_s(T, x) - phi_s(0, x0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub term_u: f64,
    pub term_x: f64,
    pub term_g: f64,
    /// Decrease computed directly from both objectives.
    pub actual: f64,
}

impl Certificate {
    pub fn predicted(&self) -> f64 {
        self.term_u + self.term_x + self.term_g
    }

    /// `|predicted - actual| / max(1, |actual|)`.
    pub fn discrepancy(&self) -> f64 {
        (self.predicted() - self.actual).abs() / self.actual.abs().max(1.0)
    }
}

/// Evaluates the decomposition on the control grid. `psi_s` is the dual
/// solution along `(x_s, u_s)`; its time derivative is taken from the dual system.
pub fn improvement_certificate(
    p: &ProblemSpec,
    psi_s: &Trajectory,
    x_s: &Trajectory,
    u_s: &ControlSignal,
    x_next: &Trajectory,
    u_next: &ControlSignal,
) -> Result<Certificate> {
    let grid = *u_s.grid();
    for (what, g) in [
        ("certificate costate", psi_s.grid()),
        ("certificate state", x_s.grid()),
        ("certificate next state", x_next.grid()),
        ("certificate next control", u_next.grid()),
    ] {
        grid.ensure_matches(g, what)?;
    }
    if psi_s.dim() != p.dim() || x_s.dim() != p.dim() || x_next.dim() != p.dim() {
        return Err(Error::Dimension(
            "certificate trajectories must match the problem".into(),
        ));
    }

    let n = p.dim();
    let at = p.a.transpose();
    let bt = p.b.transpose();
    let mut psi_dot = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut ax = vec![0.0; n];
    let mut bx = vec![0.0; n];
    // R_s(t, x, u) at node k.
    let mut r = |k: usize, x: &[f64], u: f64| {
        let psi = psi_s.state_slice(k);
        let us = u_s.values()[k];
        at.mul_slice_into(psi, &mut psi_dot);
        bt.mul_slice_into(psi, &mut tmp);
        for (d, t) in psi_dot.iter_mut().zip(&tmp) {
            *d = -(*d + us * t);
        }
        p.a.mul_slice_into(x, &mut ax);
        p.b.mul_slice_into(x, &mut bx);
        dot(&psi_dot, x) + dot(psi, &ax) + u * dot(psi, &bx) - p.beta * u * u
    };

    let nodes = grid.num_nodes();
    let mut du = Vec::with_capacity(nodes);
    let mut dx = Vec::with_capacity(nodes);
    let mut k_next = Vec::with_capacity(nodes);
    let mut bxn = vec![0.0; n];
    for k in 0..nodes {
        let (xn, xs) = (x_next.state_slice(k), x_s.state_slice(k));
        let (un, us) = (u_next.values()[k], u_s.values()[k]);
        let r_next_us = r(k, xn, us);
        du.push(r(k, xn, un) - r_next_us);
        dx.push(r_next_us - r(k, xs, us));
        p.b.mul_slice_into(xn, &mut bxn);
        k_next.push(dot(psi_s.state_slice(k), &bxn));
    }

    // Where the new control leaves a bang that follows the sign of K, the
    // integrand (u' - u_s) K has a kink at the zero of K. The interval is split
    // there: across a bang-bang switch the zero comes from linear interpolation
    // of K, otherwise from the rate of K at the left node.
    let geo = crate::pmp::SwitchingGeometry::for_problem(p)?;
    let h = grid.step();
    let un = u_next.values();
    let us = u_s.values();
    let follows_sign = |k: usize| un[k].abs() == p.nu && un[k] * k_next[k] > 0.0;
    let mut term_u = 0.0;
    for k in 0..nodes - 1 {
        let mut split = None;
        if p.beta == 0.0 && follows_sign(k) && un[k + 1] != un[k] {
            let (k0, k1) = (k_next[k], k_next[k + 1]);
            if follows_sign(k + 1) {
                split = Some(k0 / (k0 - k1));
            } else {
                let rate =
                    geo.derivative(psi_s.state_slice(k), x_next.state_slice(k), un[k], us[k]);
                if rate * k0 < 0.0 {
                    split = Some((-k0 / (rate * h)).min(1.0));
                }
            }
        }
        term_u += match split {
            Some(s) => 0.5 * h * (s * du[k] + (1.0 - s) * du[k + 1]),
            None => 0.5 * h * (du[k] + du[k + 1]),
        };
    }

    let last = grid.num_nodes() - 1;
    let psi_t = psi_s.state_slice(last);
    let psi_0 = psi_s.state_slice(0);
    let g = |x_t: &[f64]| p.terminal_form(x_t) + dot(psi_t, x_t) - dot(psi_0, p.x0.as_slice());
    let term_g = g(x_s.state_slice(last)) - g(x_next.state_slice(last));

    let before = crate::dynamics::objective(p, x_s, u_s)?;
    let after = crate::dynamics::objective(p, x_next, u_next)?;
    Ok(Certificate {
        term_u,
        term_x: grid.trapezoid(dx),
        term_g,
        actual: before.total - after.total,
    })
}
