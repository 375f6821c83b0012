//! Maximum-principle toolkit: the switching function `K(psi, x) = (B x, psi)`,
//! extremal control laws, commutator chains for singular arcs, and the
//! optimality residual of a process.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{ControlSignal, Trajectory};
use crate::linalg::{commutator, dot, frobenius_norm, norm_sq, Matrix, Vector};
use crate::problem::ProblemSpec;

/// Scale factor of the zero test for `K`.
pub const SWITCHING_TOL: f64 = 1e-8;
/// Scale factor of the `(B^2 x, psi)` guard in the singular control formula.
pub const DENOMINATOR_TOL: f64 = 1e-10;
/// Distance from the extremal set above which a node counts as violating.
pub const RESIDUAL_NODE_TOL: f64 = 1e-6;
pub const DEFAULT_CHAIN_DEPTH: usize = 6;

/// `(B x, psi)`.
pub fn switching_value(psi: &Vector, x: &Vector, b: &Matrix) -> Result<f64> {
    if psi.dim() != x.dim() || b.rows() != psi.dim() || b.cols() != x.dim() {
        return Err(Error::Dimension(format!(
            "switching value: psi dim {}, x dim {}, B {}x{}",
            psi.dim(),
            x.dim(),
            b.rows(),
            b.cols()
        )));
    }
    b.mul_vec(x)?.dot(psi)
}

/// Maximizer set of `-beta u^2 + u K` over `[-nu, nu]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extremal {
    Value(f64),
    /// `beta = 0` and `K = 0`: every admissible value is extremal.
    SingularCandidate {
        lower: f64,
        upper: f64,
    },
}

impl Extremal {
    /// Distance from `u` to the extremal set.
    pub fn distance(&self, u: f64) -> f64 {
        match *self {
            Extremal::Value(v) => (u - v).abs(),
            Extremal::SingularCandidate { lower, upper } => {
                if u < lower {
                    lower - u
                } else if u > upper {
                    u - upper
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn extremal_control(k: f64, nu: f64, beta: f64) -> Extremal {
    if beta > 0.0 {
        Extremal::Value((k / (2.0 * beta)).clamp(-nu, nu))
    } else if k > 0.0 {
        Extremal::Value(nu)
    } else if k < 0.0 {
        Extremal::Value(-nu)
    } else {
        Extremal::SingularCandidate {
            lower: -nu,
            upper: nu,
        }
    }
}

/// `psi(T) = -2 L x(T)`.
pub fn transversality_costate(l: &Matrix, x_t: &Vector) -> Result<Vector> {
    Ok(l.mul_vec(x_t)?.scale(-2.0))
}

/// `K` at the terminal time expressed through `x(T)` alone: `-2 (L x, B x)`.
pub fn terminal_switching(l: &Matrix, b: &Matrix, x_t: &Vector) -> Result<f64> {
    let lx = l.mul_vec(x_t)?;
    let bx = b.mul_vec(x_t)?;
    Ok(-2.0 * lx.dot(&bx)?)
}

/// `C(s) = C(s-1) A - A C(s-1)`, `D(s) = C(s-1) B - B C(s-1)` from `C(0) = B`, `D(0) = 0`.
#[derive(Debug, Clone)]
pub struct CommutatorChain {
    pub depth: usize,
    pub c_seq: Vec<Matrix>,
    pub d_seq: Vec<Matrix>,
    pub first_nonzero_d: Option<usize>,
}

impl CommutatorChain {
    pub fn is_identically_zero(&self) -> bool {
        self.c_seq[1..]
            .iter()
            .chain(&self.d_seq)
            .all(Matrix::is_zero)
    }

    /// One line per order: `s`, `|C(s)|`, `|D(s)|`, followed by the first nonzero index.
    pub fn report(&self) -> String {
        let mut out = String::from("s,norm_C,norm_D\n");
        for (s, (c, d)) in self.c_seq.iter().zip(&self.d_seq).enumerate() {
            let _ = writeln!(out, "{s},{},{}", frobenius_norm(c), frobenius_norm(d));
        }
        match self.first_nonzero_d {
            Some(s) => {
                let _ = writeln!(out, "first nonzero D: {s}");
            }
            None => {
                let _ = writeln!(out, "first nonzero D: none");
            }
        }
        out
    }
}

/// Runs the chain until the first `D(s)` with norm above `1e-12 (1 + |C(s-1)| |B|)`
/// or until `max_depth`.
pub fn commutator_chain(a: &Matrix, b: &Matrix, max_depth: usize) -> Result<CommutatorChain> {
    if max_depth == 0 {
        return Err(Error::Invalid(
            "commutator chain depth must be at least 1".into(),
        ));
    }
    let n = b.rows();
    let mut c_seq = vec![b.clone()];
    let mut d_seq = vec![Matrix::zeros(n, n)];
    let mut first_nonzero_d = None;
    let b_norm = frobenius_norm(b);
    for s in 1..=max_depth {
        let prev = &c_seq[s - 1];
        let c = commutator(prev, a)?;
        let d = commutator(prev, b)?;
        let threshold = 1e-12 * (1.0 + frobenius_norm(prev) * b_norm);
        let nonzero = frobenius_norm(&d) > threshold;
        c_seq.push(c);
        d_seq.push(d);
        if nonzero {
            first_nonzero_d = Some(s);
            break;
        }
    }
    Ok(CommutatorChain {
        depth: c_seq.len() - 1,
        c_seq,
        d_seq,
        first_nonzero_d,
    })
}

/// Precomputed matrices for evaluating `K` and its time derivative.
///
/// Along `x' = (A + u B) x` and `psi' = -(A^T + w B^T) psi`,
/// `dK/dt = c + (u - w) d` with `c = ((BA - AB) x, psi)` and `d = (B^2 x, psi)`.
#[derive(Debug, Clone)]
pub struct SwitchingGeometry {
    pub b: Matrix,
    /// `BA - AB`.
    pub bracket: Matrix,
    pub b_squared: Matrix,
    b_norm: f64,
}

impl SwitchingGeometry {
    pub fn new(a: &Matrix, b: &Matrix) -> Result<Self> {
        Ok(Self {
            b: b.clone(),
            bracket: commutator(b, a)?,
            b_squared: b.matmul(b)?,
            b_norm: frobenius_norm(b),
        })
    }

    pub fn for_problem(p: &ProblemSpec) -> Result<Self> {
        Self::new(&p.a, &p.b)
    }

    #[inline]
    fn form(m: &Matrix, psi: &[f64], x: &[f64]) -> f64 {
        let n = x.len();
        let d = m.as_slice();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += d[i * n + j] * x[j];
            }
            acc += psi[i] * row;
        }
        acc
    }

    /// `K = (B x, psi)`.
    #[inline]
    pub fn k(&self, psi: &[f64], x: &[f64]) -> f64 {
        Self::form(&self.b, psi, x)
    }

    /// `(c, d)` of `dK/dt = c + (u - w) d`.
    #[inline]
    pub fn rate_terms(&self, psi: &[f64], x: &[f64]) -> (f64, f64) {
        (
            Self::form(&self.bracket, psi, x),
            Self::form(&self.b_squared, psi, x),
        )
    }

    /// `dK/dt` with `x` driven by `u` and `psi` by `w`.
    pub fn derivative(&self, psi: &[f64], x: &[f64], u: f64, w: f64) -> f64 {
        let (c, d) = self.rate_terms(psi, x);
        c + (u - w) * d
    }

    /// Zero test for `K`: `1e-8 (1 + |psi| |x| |B|)`.
    #[inline]
    pub fn switching_tol(&self, psi: &[f64], x: &[f64]) -> f64 {
        SWITCHING_TOL * (1.0 + (norm_sq(psi) * norm_sq(x)).sqrt() * self.b_norm)
    }

    /// Guard on `(B^2 x, psi)`: `1e-10 (1 + |psi| |x| |B|^2)`.
    #[inline]
    pub fn denominator_guard(&self, psi: &[f64], x: &[f64]) -> f64 {
        DENOMINATOR_TOL * (1.0 + (norm_sq(psi) * norm_sq(x)).sqrt() * self.b_norm * self.b_norm)
    }

    /// Control that keeps `dK/dt = 0`: `w + ((AB - BA) x, psi) / (B^2 x, psi)`, clipped to `[-nu, nu]`.
    #[inline]
    pub fn singular_control(
        &self,
        psi: &[f64],
        x: &[f64],
        w: f64,
        nu: f64,
    ) -> Result<SingularControl> {
        let (c, d) = self.rate_terms(psi, x);
        let guard = self.denominator_guard(psi, x);
        if d.abs() <= guard {
            return Err(Error::SingularUndefined {
                denominator: d,
                guard,
            });
        }
        let raw = w - c / d;
        let value = raw.clamp(-nu, nu);
        Ok(SingularControl {
            value,
            raw,
            clamped: value != raw,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularControl {
    pub value: f64,
    /// Unclipped formula value.
    pub raw: f64,
    pub clamped: bool,
}

pub fn singular_control_value(
    a: &Matrix,
    b: &Matrix,
    x: &Vector,
    psi: &Vector,
    u_prev: f64,
    nu: f64,
) -> Result<SingularControl> {
    if x.dim() != psi.dim() || x.dim() != a.rows() {
        return Err(Error::Dimension(
            "singular control: dimension mismatch".into(),
        ));
    }
    SwitchingGeometry::new(a, b)?.singular_control(psi.as_slice(), x.as_slice(), u_prev, nu)
}

/// Definiteness of the terminal switching form `x -> -2 (B^T L x, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    Positive,
    Negative,
    Inconclusive,
}

impl Definiteness {
    /// A definite form rules out singular controls.
    pub fn is_singular_free(self) -> bool {
        !matches!(self, Definiteness::Inconclusive)
    }
}

pub fn singular_free_certificate(l: &Matrix, b: &Matrix) -> Result<Definiteness> {
    let form = b.transpose().matmul(l)?.scale(-2.0);
    let eig = form.symmetric_eigenvalues()?;
    let scale = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * (1.0 + scale);
    Ok(if eig.iter().all(|v| *v > tol) {
        Definiteness::Positive
    } else if eig.iter().all(|v| *v < -tol) {
        Definiteness::Negative
    } else {
        Definiteness::Inconclusive
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PmpResidual {
    pub max_violation: f64,
    /// Fraction of nodes whose distance to the extremal set exceeds `RESIDUAL_NODE_TOL`.
    pub violation_measure: f64,
}

/// Distance of `u` from the maximum-principle control at every node; nodes
/// with `|K|` inside the switching tolerance count as singular candidates.
pub fn pmp_residual(
    p: &ProblemSpec,
    x: &Trajectory,
    psi: &Trajectory,
    u: &ControlSignal,
) -> Result<PmpResidual> {
    x.grid().ensure_matches(u.grid(), "pmp residual (x, u)")?;
    psi.grid()
        .ensure_matches(u.grid(), "pmp residual (psi, u)")?;
    let geo = SwitchingGeometry::for_problem(p)?;
    let mut max_violation: f64 = 0.0;
    let mut violating = 0usize;
    for (k, &uk) in u.values().iter().enumerate() {
        let (xs, ps) = (x.state_slice(k), psi.state_slice(k));
        let kv = geo.k(ps, xs);
        let ext = if p.beta == 0.0 && kv.abs() <= geo.switching_tol(ps, xs) {
            extremal_control(0.0, p.nu, 0.0)
        } else {
            extremal_control(kv, p.nu, p.beta)
        };
        let dist = ext.distance(uk);
        max_violation = max_violation.max(dist);
        if dist > RESIDUAL_NODE_TOL {
            violating += 1;
        }
    }
    Ok(PmpResidual {
        max_violation,
        violation_measure: violating as f64 / u.values().len() as f64,
    })
}

/// `K` at every node of a trajectory pair.
pub fn switching_profile(b: &Matrix, psi: &Trajectory, x: &Trajectory) -> Vec<f64> {
    psi.states()
        .zip(x.states())
        .map(|(p, s)| {
            let mut bx = vec![0.0; s.len()];
            b.mul_slice_into(s, &mut bx);
            dot(&bx, p)
        })
        .collect()
}
