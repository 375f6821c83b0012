use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use serde_json::json;

use bilinctl::improve::write_iterations_csv;
use bilinctl::{
    catalog, commutator_chain, reachability_bounds, simulate as run_forward,
    singular_free_certificate, solve as run_solver, validate_problem, Method, ProblemSpec,
    SolverConfig, SolverReport, Termination,
};

use crate::manifest::{self, RunManifest};
use crate::{Failure, EXIT_STALL};

type Outcome = Result<ExitCode, Failure>;

const CHAIN_DEPTH: usize = 8;
const METHODS: [Method; 3] = [Method::Global, Method::Gradient, Method::GlobalRegularized];

fn input(e: anyhow::Error) -> Failure {
    Failure::Input(e)
}

fn classify(e: bilinctl::Error) -> Failure {
    use bilinctl::Error::*;
    match e {
        Dimension(_) | Invalid(_) | GridMismatch(_) | GlobalInapplicable(_) => {
            Failure::Input(e.into())
        }
        other => Failure::Solver(other.into()),
    }
}

/// Files collected in memory and written only once every result is available.
#[derive(Default)]
struct Outputs(Vec<(PathBuf, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.0.push((path, bytes));
    }

    fn csv(&mut self, path: PathBuf, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) {
        let mut buf = Vec::new();
        write(&mut buf).expect("writing to memory");
        self.add(path, buf);
    }

    fn commit(self) -> Result<(), Failure> {
        for (path, bytes) in self.0 {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))
                    .map_err(Failure::Solver)?;
            }
            fs::write(&path, bytes)
                .with_context(|| format!("writing {}", path.display()))
                .map_err(Failure::Solver)?;
        }
        Ok(())
    }
}

pub fn simulate(path: &Path) -> Outcome {
    let m = manifest::load(path).map_err(input)?;
    let (x, value) = run_forward(&m.problem, &m.initial_control).map_err(classify)?;
    let mut out = Outputs::default();
    out.csv(m.output_dir.join("trajectory.csv"), |w| x.write_csv(w, "x"));
    out.commit()?;
    println!("terminal {}", value.terminal);
    println!("integral {}", value.integral);
    println!("total {}", value.total);
    Ok(ExitCode::SUCCESS)
}

fn load_any_problem(path: &Path) -> anyhow::Result<ProblemSpec> {
    let value: serde_json::Value = manifest::read_json(path, "input")?;
    if value.get("problem").is_some() {
        Ok(manifest::load(path)?.problem)
    } else {
        manifest::load_problem(path)
    }
}

pub fn analyze(path: &Path) -> Outcome {
    let p = load_any_problem(path).map_err(input)?;
    print!("{}", analysis_report(&p).map_err(classify)?);
    Ok(ExitCode::SUCCESS)
}

fn analysis_report(p: &ProblemSpec) -> bilinctl::Result<String> {
    let mut s = String::new();
    let v = validate_problem(p);
    let bounds = reachability_bounds(p);
    let _ = writeln!(s, "dimension {}", p.dim());
    let _ = writeln!(s, "horizon {} nu {} beta {}", p.horizon, p.nu, p.beta);
    let _ = writeln!(s, "reachability gamma {}", bounds.gamma);
    let _ = writeln!(s, "state norm bounds [{}, {}]", bounds.lower, bounds.upper);
    match &v.block_structure {
        Some(b) => {
            let _ = writeln!(s, "block structure: yes (half dimension {})", b.half_dim);
        }
        None => s.push_str("block structure: no\n"),
    }
    let _ = writeln!(s, "commuting: {}", if v.commuting { "yes" } else { "no" });
    let chain = commutator_chain(&p.a, &p.b, CHAIN_DEPTH)?;
    s.push_str(&chain.report());
    if chain.is_identically_zero() {
        s.push_str("chain identically zero\n");
    }
    let definiteness = singular_free_certificate(&p.l, &p.b)?;
    let _ = writeln!(
        s,
        "singular-free certificate: {}",
        if definiteness.is_singular_free() {
            format!("{definiteness:?}").to_lowercase()
        } else {
            "inconclusive".into()
        }
    );
    Ok(s)
}

fn push_run(out: &mut Outputs, dir: &Path, report: &SolverReport) {
    out.csv(dir.join("iterations.csv"), |w| {
        write_iterations_csv(w, &report.history)
    });
    out.csv(dir.join("control.csv"), |w| {
        report.final_control.write_csv(w)
    });
    out.csv(dir.join("trajectory.csv"), |w| {
        report.final_trajectory.write_csv(w, "x")
    });
}

pub fn solve(path: &Path) -> Outcome {
    let RunManifest {
        problem,
        config,
        initial_control,
        output_dir,
    } = manifest::load(path).map_err(input)?;
    let report = run_solver(&problem, &initial_control, &config).map_err(classify)?;
    let mut out = Outputs::default();
    push_run(&mut out, &output_dir, &report);
    out.commit()?;
    let last = report.final_objective();
    println!("method {}", config.method.name());
    println!("iterations {}", report.history.len() - 1);
    println!("objective {}", last.total);
    println!("termination {}", report.termination.label());
    Ok(if report.termination == Termination::Stalled {
        ExitCode::from(EXIT_STALL)
    } else {
        ExitCode::SUCCESS
    })
}

fn example_or_input(id: u8, h: Option<f64>) -> Result<catalog::Example, Failure> {
    let step = h.unwrap_or(catalog::PUBLISHED_STEP);
    catalog::example_with_step(id, step).ok_or_else(|| {
        input(anyhow!(
            "unknown example {id} or invalid step {step}; examples are 1 and 2"
        ))
    })
}

pub fn reproduce(id: u8, out_dir: &Path, h: Option<f64>, iters: usize) -> Outcome {
    let ex = example_or_input(id, h)?;
    let configs: Vec<SolverConfig> = METHODS
        .iter()
        .map(|&m| {
            let c = SolverConfig::new(m, ex.grid).with_max_iters(iters);
            c.validate().map(|_| c)
        })
        .collect::<bilinctl::Result<_>>()
        .map_err(classify)?;

    let reports: Vec<bilinctl::Result<SolverReport>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| s.spawn(|| run_solver(&ex.problem, &ex.initial_control, c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread"))
            .collect()
    });
    let reports = reports
        .into_iter()
        .collect::<bilinctl::Result<Vec<_>>>()
        .map_err(classify)?;

    let mut out = Outputs::default();
    for report in &reports {
        push_run(&mut out, &out_dir.join(report.config.method.name()), report);
    }
    let table = comparison(&reports, ex.table);
    out.add(out_dir.join("comparison.csv"), table.clone().into_bytes());
    out.commit()?;

    print!("{}", table.replace(',', "\t"));
    let mut stalled = false;
    for r in &reports {
        println!(
            "{} termination {}",
            r.config.method.name(),
            r.termination.label()
        );
        stalled |= r.termination == Termination::Stalled;
    }
    Ok(if stalled {
        ExitCode::from(EXIT_STALL)
    } else {
        ExitCode::SUCCESS
    })
}

fn comparison(reports: &[SolverReport], table: &[[f64; 3]; 11]) -> String {
    let mut s = String::from("iter");
    for r in reports {
        let _ = write!(s, ",{0},{0}_published", r.config.method.name());
    }
    s.push('\n');
    let rows = reports.iter().map(|r| r.history.len()).max().unwrap_or(0);
    for i in 0..rows {
        let _ = write!(s, "{i}");
        for r in reports {
            let column = METHODS
                .iter()
                .position(|m| *m == r.config.method)
                .expect("known method");
            let value = r
                .history
                .get(i)
                .map(|h| h.objective.total.to_string())
                .unwrap_or_default();
            let published = table
                .get(i)
                .map(|row| row[column].to_string())
                .unwrap_or_default();
            let _ = write!(s, ",{value},{published}");
        }
        s.push('\n');
    }
    s
}

pub fn example(id: u8, out_dir: &Path) -> Outcome {
    let ex = example_or_input(id, None)?;
    let initial = match id {
        1 => json!({ "constant": ex.initial_control.values()[0] }),
        _ => json!({ "pieces": catalog::INITIAL_PIECES_TWO }),
    };
    let manifest = json!({
        "problem": "problem.json",
        "method": Method::Global.name(),
        "max_iters": 10,
        "h": catalog::PUBLISHED_STEP,
        "initial_control": initial,
        "out": "out",
    });
    let mut out = Outputs::default();
    out.add(
        out_dir.join("problem.json"),
        (ex.problem.to_json() + "\n").into_bytes(),
    );
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    out.add(out_dir.join("manifest.json"), text.into_bytes());
    out.commit()?;
    println!(
        "wrote {} and {}",
        out_dir.join("problem.json").display(),
        out_dir.join("manifest.json").display()
    );
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analysis_of_the_first_example() {
        let r = analysis_report(&catalog::example_one()).unwrap();
        assert!(r.contains("block structure: yes"));
        assert!(r.contains("commuting: no"));
        assert!(r.contains("first nonzero D"));
    }

    #[test]
    fn unknown_example_is_an_input_error() {
        assert!(matches!(example_or_input(3, None), Err(Failure::Input(_))));
    }
}
