//! Run manifests: which problem to load, how to solve it and where to write results.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;

use bilinctl::{catalog, ControlSignal, GridSpec, Method, ProblemSpec, SolverConfig};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub problem: PathBuf,
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_step")]
    pub h: f64,
    #[serde(default = "default_alpha_reg")]
    pub alpha_reg: f64,
    #[serde(default)]
    pub initial_control: InitialControl,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_method() -> String {
    Method::Global.name().to_string()
}

fn default_max_iters() -> usize {
    SolverConfig::DEFAULT_MAX_ITERS
}

fn default_step() -> f64 {
    catalog::PUBLISHED_STEP
}

fn default_alpha_reg() -> f64 {
    SolverConfig::DEFAULT_ALPHA_REG
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialControl {
    Constant(f64),
    Pieces(Vec<(f64, f64, f64)>),
    /// CSV with a `t,u` header and one row per grid node.
    File(PathBuf),
}

impl Default for InitialControl {
    fn default() -> Self {
        InitialControl::Constant(0.0)
    }
}

/// A manifest with every path resolved against the manifest's directory.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub problem: ProblemSpec,
    pub config: SolverConfig,
    pub initial_control: ControlSignal,
    pub output_dir: PathBuf,
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> anyhow::Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {what} {}", path.display()))
}

pub fn load_problem(path: &Path) -> anyhow::Result<ProblemSpec> {
    let file: bilinctl::ProblemFile = read_json(path, "problem")?;
    file.into_problem()
        .with_context(|| format!("invalid problem {}", path.display()))
}

pub fn load(path: &Path) -> anyhow::Result<RunManifest> {
    let file: ManifestFile = read_json(path, "manifest")?;
    let base = path.parent().unwrap_or(Path::new("."));
    let problem = load_problem(&base.join(&file.problem))?;
    let method = Method::parse(&file.method)?;
    let grid = GridSpec::with_step(problem.horizon, file.h)
        .with_context(|| format!("grid step h = {} for T = {}", file.h, problem.horizon))?;
    let mut config = SolverConfig::new(method, grid).with_max_iters(file.max_iters);
    config.alpha_reg = file.alpha_reg;
    config.validate()?;

    let initial_control = match &file.initial_control {
        InitialControl::Constant(v) => ControlSignal::constant(grid, *v)?,
        InitialControl::Pieces(pieces) => ControlSignal::piecewise(grid, pieces)?,
        InitialControl::File(p) => read_control_csv(&base.join(p), grid)?,
    };
    if !initial_control.is_admissible(problem.nu) {
        bail!(
            "initial control reaches |u| = {} but the bound is nu = {}",
            initial_control.max_abs(),
            problem.nu
        );
    }
    Ok(RunManifest {
        problem,
        config,
        initial_control,
        output_dir: base.join(&file.out),
    })
}

fn read_control_csv(path: &Path, grid: GridSpec) -> anyhow::Result<ControlSignal> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading control {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "t,u" => {}
        _ => bail!("{}: line 1: expected header \"t,u\"", path.display()),
    }
    let mut values = Vec::with_capacity(grid.num_nodes());
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let k = values.len();
        let parse = |s: Option<&str>| s.map(str::trim).and_then(|s| s.parse::<f64>().ok());
        let mut fields = line.split(',');
        let (Some(t), Some(u), None) = (parse(fields.next()), parse(fields.next()), fields.next())
        else {
            bail!("{}: line {}: expected two numbers", path.display(), i + 1);
        };
        if k >= grid.num_nodes() || (t - grid.time(k)).abs() > 1e-9 * grid.horizon().max(1.0) {
            bail!(
                "{}: line {}: time {t} is not grid node {k}",
                path.display(),
                i + 1
            );
        }
        values.push(u);
    }
    if values.len() != grid.num_nodes() {
        bail!(
            "{}: {} rows for a grid of {} nodes",
            path.display(),
            values.len(),
            grid.num_nodes()
        );
    }
    Ok(ControlSignal::new(grid, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_control_forms_parse() {
        let c: InitialControl = serde_json::from_str(r#"{"constant": 0.3}"#).unwrap();
        assert_eq!(c, InitialControl::Constant(0.3));
        let p: InitialControl =
            serde_json::from_str(r#"{"pieces": [[0, 1, 1], [1, 5, 0]]}"#).unwrap();
        assert_eq!(
            p,
            InitialControl::Pieces(vec![(0.0, 1.0, 1.0), (1.0, 5.0, 0.0)])
        );
        assert!(serde_json::from_str::<InitialControl>(r#"{"ramp": 1}"#).is_err());
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let m: ManifestFile = serde_json::from_str(r#"{"problem": "p.json"}"#).unwrap();
        assert_eq!(m.method, "global");
        assert_eq!(m.max_iters, 100);
        assert_eq!(m.h, 0.0005);
        assert_eq!(m.initial_control, InitialControl::Constant(0.0));
    }
}
