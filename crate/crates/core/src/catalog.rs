//! Built-in benchmark instances and their published iteration tables.
//!
//! Both instances share the block-Hamiltonian pair `(A, B)`, the terminal
//! matrix `L = diag(-1, -2, -3, -1)` and `x0 = (-1, 1, -1, 1)`; they differ in
//! horizon, control bound and initial control.

use crate::error::Result;
use crate::grid::{ControlSignal, GridSpec};
use crate::linalg::{Matrix, Vector};
use crate::problem::ProblemSpec;

/// Grid step used for every published run.
pub const PUBLISHED_STEP: f64 = 0.0005;

const A: [[f64; 4]; 4] = [
    [0.0, 0.0, 1.0, -2.0],
    [0.0, 0.0, -2.0, -1.0],
    [-1.0, 2.0, 0.0, 0.0],
    [2.0, 1.0, 0.0, 0.0],
];

const B: [[f64; 4]; 4] = [
    [0.0, 0.0, -1.0, 1.0],
    [0.0, 0.0, 1.0, 2.0],
    [1.0, -1.0, 0.0, 0.0],
    [-1.0, -2.0, 0.0, 0.0],
];

const L_DIAG: [f64; 4] = [-1.0, -2.0, -3.0, -1.0];
const X0: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];

/// Published objective values per iteration `0..=10`, columns
/// `[global, gradient, global with regularization]`.
pub const TABLE_ONE: [[f64; 3]; 11] = [
    [-5.7363, -5.7363, -5.7363],
    [-6.3037, -5.9802, -6.1123],
    [-6.6344, -6.1917, -6.2232],
    [-8.0515, -6.3612, -6.8746],
    [-9.1681, -6.4917, -8.3118],
    [-9.4845, -6.6005, -9.148],
    [-9.5743, -6.7307, -9.2799],
    [-9.6592, -6.9959, -9.3817],
    [-9.7570, -7.6729, -9.4776],
    [-9.8323, -8.8565, -9.5896],
    [-9.8908, -9.6505, -9.633],
];

pub const TABLE_TWO: [[f64; 3]; 11] = [
    [-4.7545, -4.7545, -4.7545],
    [-7.2566, -5.0698, -6.1123],
    [-9.1684, -5.4504, -8.4596],
    [-10.4411, -6.0221, -9.8425],
    [-11.7116, -6.8924, -11.173],
    [-11.9188, -8.3881, -11.455],
    [-11.9335, -10.187, -11.516],
    [-11.9784, -11.643, -11.525],
    [-11.9900, -11.826, -11.534],
    [-11.9931, -11.907, -11.505],
    [-11.9939, -11.942, -11.529],
];

fn shared(horizon: f64, nu: f64) -> ProblemSpec {
    ProblemSpec::new(
        Matrix::from_rows(&A).expect("static data"),
        Matrix::from_rows(&B).expect("static data"),
        Matrix::diagonal(&L_DIAG).expect("static data"),
        Vector::new(X0.to_vec()).expect("static data"),
        horizon,
        nu,
        0.0,
    )
    .expect("static data is valid")
}

/// `T = 1/2`, `nu = 3`.
pub fn example_one() -> ProblemSpec {
    shared(0.5, 3.0)
}

/// `T = 5`, `nu = 1`.
pub fn example_two() -> ProblemSpec {
    shared(5.0, 1.0)
}

/// `u0 = 0.3` everywhere.
pub fn initial_control_one(grid: GridSpec) -> Result<ControlSignal> {
    ControlSignal::constant(grid, 0.3)
}

/// `u0 = 1` on `[0, 1)`, `0` on `[1, 5]`.
pub fn initial_control_two(grid: GridSpec) -> Result<ControlSignal> {
    ControlSignal::piecewise(grid, &INITIAL_PIECES_TWO)
}

pub const INITIAL_PIECES_TWO: [(f64, f64, f64); 2] = [(0.0, 1.0, 1.0), (1.0, 5.0, 0.0)];

/// A bundled instance: problem, published grid and initial control.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: u8,
    pub problem: ProblemSpec,
    pub grid: GridSpec,
    pub initial_control: ControlSignal,
    pub table: &'static [[f64; 3]; 11],
}

pub fn example(id: u8) -> Option<Example> {
    example_with_step(id, PUBLISHED_STEP)
}

pub fn example_with_step(id: u8, step: f64) -> Option<Example> {
    let (problem, table) = match id {
        1 => (example_one(), &TABLE_ONE),
        2 => (example_two(), &TABLE_TWO),
        _ => return None,
    };
    let grid = GridSpec::with_step(problem.horizon, step).ok()?;
    let initial_control = match id {
        1 => initial_control_one(grid),
        _ => initial_control_two(grid),
    }
    .ok()?;
    Some(Example {
        id,
        problem,
        grid,
        initial_control,
        table,
    })
}
