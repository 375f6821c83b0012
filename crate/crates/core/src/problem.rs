//! Problem data `(A, B, L, x0, T, nu, beta)` and its JSON file form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{commutator, frobenius_norm, Matrix, Vector};
use crate::structure::{detect_block_structure, BlockHamiltonianStructure};

/// Relative tolerance for the symmetry of `L` and commutation of `(A, B)`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Minimize `(x(T), L x(T)) + beta * int u^2` subject to `x' = (A + u B) x`,
/// `x(0) = x0`, `|u| <= nu`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub a: Matrix,
    pub b: Matrix,
    pub l: Matrix,
    pub x0: Vector,
    pub horizon: f64,
    pub nu: f64,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub symmetry_defect: f64,
    pub block_structure: Option<BlockHamiltonianStructure>,
    pub commuting: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl ProblemSpec {
    /// Builds the problem and rejects it if any invariant is violated.
    pub fn new(
        a: Matrix,
        b: Matrix,
        l: Matrix,
        x0: Vector,
        horizon: f64,
        nu: f64,
        beta: f64,
    ) -> Result<Self> {
        let p = Self {
            a,
            b,
            l,
            x0,
            horizon,
            nu,
            beta,
        };
        let report = validate_problem(&p);
        if report.is_valid() {
            Ok(p)
        } else {
            Err(Error::Invalid(report.violations.join("; ")))
        }
    }

    pub fn dim(&self) -> usize {
        self.x0.dim()
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        Self {
            beta,
            ..self.clone()
        }
    }

    pub fn with_l(&self, l: Matrix) -> Self {
        Self { l, ..self.clone() }
    }

    /// `(x, L x)`.
    pub fn terminal_form(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut acc = 0.0;
        for i in 0..n {
            let row = self.l.row(i);
            acc += x[i] * row.iter().zip(x).map(|(l, v)| l * v).sum::<f64>();
        }
        acc
    }

    pub fn to_file(&self) -> ProblemFile {
        ProblemFile {
            a: self.a.to_rows(),
            b: self.b.to_rows(),
            l: self.l.to_rows(),
            x0: self.x0.as_slice().to_vec(),
            horizon: self.horizon,
            nu: self.nu,
            beta: self.beta,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile =
            serde_json::from_str(text).map_err(|e| Error::Invalid(format!("problem JSON: {e}")))?;
        file.into_problem()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("problem serializes")
    }
}

/// On-disk schema: `{"A": [[..]], "B": [[..]], "L": [[..]], "x0": [..], "T": .., "nu": .., "beta": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub nu: f64,
    #[serde(default)]
    pub beta: f64,
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<ProblemSpec> {
        let named = |name: &str, rows: &[Vec<f64>]| {
            Matrix::from_rows(rows).map_err(|e| Error::Invalid(format!("matrix {name}: {e}")))
        };
        ProblemSpec::new(
            named("A", &self.a)?,
            named("B", &self.b)?,
            named("L", &self.l)?,
            Vector::new(self.x0).map_err(|e| Error::Invalid(format!("x0: {e}")))?,
            self.horizon,
            self.nu,
            self.beta,
        )
    }
}

/// Checks every problem invariant and collects structural facts about `(A, B)`.
pub fn validate_problem(p: &ProblemSpec) -> ValidationReport {
    let mut violations = Vec::new();
    let n = p.x0.dim();
    for (name, m) in [("A", &p.a), ("B", &p.b), ("L", &p.l)] {
        if !m.is_square() || m.rows() != n {
            violations.push(format!(
                "{name} must be {n}x{n} to match x0, got {}x{}",
                m.rows(),
                m.cols()
            ));
        }
    }
    let symmetry_defect = p.l.symmetry_defect();
    if symmetry_defect > SYMMETRY_TOL * (1.0 + p.l.max_abs()) {
        violations.push(format!("L is not symmetric (defect {symmetry_defect:e})"));
    }
    if !(p.horizon.is_finite() && p.horizon > 0.0) {
        violations.push(format!("T must be positive, got {}", p.horizon));
    }
    if !(p.nu.is_finite() && p.nu > 0.0) {
        violations.push(format!("nu must be positive, got {}", p.nu));
    }
    if !(p.beta.is_finite() && p.beta >= 0.0) {
        violations.push(format!("beta must be nonnegative, got {}", p.beta));
    }
    if p.x0.norm() == 0.0 {
        violations.push("x0 must be nonzero".into());
    }

    let shapes_ok = p.a.is_square() && p.b.is_square() && p.a.rows() == p.b.rows();
    let block_structure = if shapes_ok {
        detect_block_structure(&p.a, &p.b)
    } else {
        None
    };
    let commuting = shapes_ok
        && commutator(&p.a, &p.b)
            .map(|c| {
                frobenius_norm(&c)
                    <= SYMMETRY_TOL * (1.0 + frobenius_norm(&p.a) * frobenius_norm(&p.b))
            })
            .unwrap_or(false);

    ValidationReport {
        violations,
        symmetry_defect,
        block_structure,
        commuting,
    }
}
