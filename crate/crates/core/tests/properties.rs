use bilinctl::improve::{adjoint_gradient, GradientConfig, IterationOutcome};
use bilinctl::pmp::{switching_profile, SwitchingGeometry};
use bilinctl::structure::embed_block;
use bilinctl::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_piecewise(rng: &mut ChaCha8Rng, grid: GridSpec, nu: f64, pieces: usize) -> ControlSignal {
    let t = grid.horizon();
    let mut cuts: Vec<f64> = (0..pieces - 1).map(|_| rng.gen_range(0.0..t)).collect();
    cuts.sort_by(f64::total_cmp);
    let mut edges = vec![0.0];
    edges.extend(cuts);
    edges.push(t);
    let spec: Vec<(f64, f64, f64)> = edges
        .windows(2)
        .map(|w| (w[0], w[1], rng.gen_range(-nu..=nu)))
        .collect();
    ControlSignal::piecewise(grid, &spec).unwrap()
}

fn commuting_blocks(pa: [f64; 2], pb: [f64; 2], horizon: f64) -> ProblemSpec {
    let a = embed_block(&Matrix::diagonal(&pa).unwrap());
    let b = embed_block(&Matrix::diagonal(&pb).unwrap());
    ProblemSpec::new(
        a,
        b,
        Matrix::diagonal(&[-1.0, -2.0, -3.0, -1.0]).unwrap(),
        Vector::new(vec![-1.0, 1.0, -1.0, 1.0]).unwrap(),
        horizon,
        1.0,
        0.0,
    )
    .unwrap()
}

#[test]
fn norm_invariant_under_random_controls() {
    let ex = catalog::example(1).unwrap();
    let p = &ex.problem;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let u = random_piecewise(&mut rng, ex.grid, p.nu, 8);
        let x = integrate_forward(p, &u).unwrap();
        assert!(invariant_drift(&x).unwrap() <= 1e-8);
        let psi_t = transversality_costate(&p.l, &x.terminal()).unwrap();
        let psi = integrate_dual(p, &u, &psi_t).unwrap();
        assert!(invariant_drift(&psi).unwrap() <= 1e-8);
    }
}

#[test]
fn reachability_bounds_hold_for_random_controls() {
    let ex = catalog::example_with_step(1, 0.005).unwrap();
    let p = &ex.problem;
    let b = reachability_bounds(p);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let u = random_piecewise(&mut rng, ex.grid, p.nu, 5);
        let x = integrate_forward(p, &u).unwrap();
        for s in x.states() {
            let r = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(r >= b.lower - 1e-9 && r <= b.upper + 1e-9);
        }
    }
}

#[test]
fn rk4_error_shrinks_at_fourth_order() {
    let p = catalog::example_one();
    let errors: Vec<f64> = [0.01, 0.005, 0.0025]
        .iter()
        .map(|&h| {
            let g = GridSpec::with_step(p.horizon, h).unwrap();
            let fine = GridSpec::with_step(p.horizon, h / 16.0).unwrap();
            let coarse = integrate_forward(&p, &ControlSignal::constant(g, 1.5).unwrap()).unwrap();
            let exact =
                integrate_forward(&p, &ControlSignal::constant(fine, 1.5).unwrap()).unwrap();
            coarse.terminal().sub(&exact.terminal()).unwrap().norm()
        })
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 3.7 && order < 4.3, "observed order {order}");
    }
}

#[test]
fn every_method_is_monotone_on_example_one() {
    let ex = catalog::example_with_step(1, 0.001).unwrap();
    for method in [Method::Global, Method::GlobalRegularized, Method::Gradient] {
        let cfg = SolverConfig::new(method, ex.grid).with_max_iters(10);
        let report = solve(&ex.problem, &ex.initial_control, &cfg).unwrap();
        let obj = report.objectives();
        assert!(
            obj.windows(2).all(|w| w[1] <= w[0] + 1e-10),
            "{method:?}: {obj:?}"
        );
        assert!(report.final_control.is_admissible(ex.problem.nu));
        for r in &report.history {
            assert!(r.segments.covers(ex.problem.horizon));
        }
    }
}

#[test]
fn max_iters_one_gives_two_records() {
    let ex = catalog::example_with_step(1, 0.005).unwrap();
    let cfg = SolverConfig::new(Method::Global, ex.grid).with_max_iters(1);
    let report = solve(&ex.problem, &ex.initial_control, &cfg).unwrap();
    assert_eq!(report.history.len(), 2);
    let zero = SolverConfig::new(Method::Global, ex.grid).with_max_iters(0);
    assert!(solve(&ex.problem, &ex.initial_control, &zero).is_err());
}

fn finite_difference_error(p: &ProblemSpec, u: &ControlSignal, seed: u64) -> f64 {
    let grid = *u.grid();
    let x = integrate_forward(p, u).unwrap();
    let (g, _) = adjoint_gradient(p, u, &x).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = 1e-6;
    let (mut num, mut den) = (0.0, 0.0);
    for _ in 0..10 {
        let k = rng.gen_range(0..grid.num_nodes());
        let eval = |d: f64| {
            let mut v = u.values().to_vec();
            v[k] += d;
            simulate(p, &ControlSignal::new(grid, v).unwrap())
                .unwrap()
                .1
                .total
        };
        let fd = (eval(delta) - eval(-delta)) / (2.0 * delta);
        let adj = g[k] * grid.trapezoid_weight(k);
        num += (fd - adj).powi(2);
        den += fd * fd;
    }
    (num / den).sqrt()
}

#[test]
fn adjoint_gradient_matches_finite_differences() {
    let ex = catalog::example(1).unwrap();
    for beta in [0.0, 0.1] {
        let p = ex.problem.with_beta(beta);
        let err = finite_difference_error(&p, &ex.initial_control, 3);
        assert!(err <= 1e-4, "beta {beta}: relative error {err}");
    }
}

#[test]
fn gradient_step_with_zero_gradient_keeps_control() {
    // A = B = 0 and beta = 0 make K vanish identically.
    let p = ProblemSpec::new(
        Matrix::zeros(2, 2),
        Matrix::zeros(2, 2),
        Matrix::diagonal(&[-1.0, -1.0]).unwrap(),
        Vector::new(vec![1.0, 0.0]).unwrap(),
        1.0,
        1.0,
        0.0,
    )
    .unwrap();
    let g = GridSpec::new(1.0, 11).unwrap();
    let u = ControlSignal::constant(g, 0.4).unwrap();
    let x = integrate_forward(&p, &u).unwrap();
    let out = gradient_iteration(&p, &u, &x, &GradientConfig::default()).unwrap();
    assert!(out.stalled);
    assert_eq!(out.control.values(), u.values());
}

fn rotation_fixed_point() -> (ProblemSpec, ControlSignal) {
    // x' = u B x rotates x0 = (1, 0); K stays at -2 (L x(T), B x(T)) > 0 for u = 1.
    let p = ProblemSpec::new(
        Matrix::zeros(2, 2),
        embed_block(&Matrix::diagonal(&[1.0]).unwrap()),
        Matrix::diagonal(&[-1.0, -2.0]).unwrap(),
        Vector::new(vec![1.0, 0.0]).unwrap(),
        0.5,
        1.0,
        0.0,
    )
    .unwrap();
    let u = ControlSignal::constant(GridSpec::new(0.5, 501).unwrap(), 1.0).unwrap();
    (p, u)
}

#[test]
fn pmp_process_is_a_fixed_point() {
    let (p, u) = rotation_fixed_point();
    let x = integrate_forward(&p, &u).unwrap();
    let psi_t = transversality_costate(&p.l, &x.terminal()).unwrap();
    let psi = integrate_dual(&p, &u, &psi_t).unwrap();
    assert_eq!(pmp_residual(&p, &x, &psi, &u).unwrap().max_violation, 0.0);
    assert!(switching_profile(&p.b, &psi, &x).iter().all(|k| *k > 0.0));

    for out in [
        krotov_iteration(&p, &u, &x).unwrap(),
        krotov_iteration_bang_only(&p, &u, &x).unwrap(),
    ] {
        let diff = out
            .control
            .values()
            .iter()
            .zip(u.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-12);
        assert!(!out.stalled);
    }
}

#[test]
fn terminal_shift_is_transparent() {
    let ex = catalog::example_with_step(1, 0.001).unwrap();
    let p = ex
        .problem
        .with_l(Matrix::diagonal(&[1.0, -2.0, -3.0, -1.0]).unwrap());
    let (shifted, alpha) = ensure_concave_terminal(&p).unwrap();
    assert!(alpha > 1.0);
    let r0 = p.x0.norm_sq();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let u = random_piecewise(&mut rng, ex.grid, p.nu, 6);
        let x = integrate_forward(&p, &u).unwrap();
        let plain = objective(&p, &x, &u).unwrap().total;
        let moved = objective(&shifted, &x, &u).unwrap().total + alpha * r0;
        assert!((plain - moved).abs() <= 1e-8);
        let d = transversality_costate(&shifted.l, &x.terminal())
            .unwrap()
            .sub(&transversality_costate(&p.l, &x.terminal()).unwrap())
            .unwrap();
        let expect = x.terminal().scale(2.0 * alpha);
        assert!(d.sub(&expect).unwrap().norm() <= 1e-12 * (1.0 + expect.norm()));
    }

    let cfg = SolverConfig::new(Method::Global, ex.grid).with_max_iters(3);
    let report = solve(&p, &ex.initial_control, &cfg).unwrap();
    assert_eq!(report.terminal_shift, alpha);
    let (_, direct) = simulate(&p, &ex.initial_control).unwrap();
    assert!((report.history[0].objective.total - direct.total).abs() <= 1e-8);
}

#[test]
fn shift_needs_block_structure() {
    let mut p = catalog::example_one().with_l(Matrix::identity(4));
    p.a[(0, 1)] = 0.5;
    assert!(matches!(
        ensure_concave_terminal(&p),
        Err(Error::GlobalInapplicable(_))
    ));
    let g = GridSpec::with_step(p.horizon, 0.01).unwrap();
    let u = ControlSignal::constant(g, 0.0).unwrap();
    let cfg = SolverConfig::new(Method::Global, g);
    assert!(matches!(
        solve(&p, &u, &cfg),
        Err(Error::GlobalInapplicable(_))
    ));
}

fn singular_window_max_k(p: &ProblemSpec, out: &IterationOutcome) -> (f64, f64) {
    let geo = SwitchingGeometry::for_problem(p).unwrap();
    let grid = out.control.grid();
    let (mut worst, mut tol) = (0.0f64, f64::INFINITY);
    for seg in out
        .record
        .segments
        .as_slice()
        .iter()
        .filter(|s| s.kind == SegmentKind::Singular)
    {
        for k in 0..grid.num_nodes() {
            let t = grid.time(k);
            if t > seg.t_start + grid.step() && t <= seg.t_end {
                let (psi, x) = (out.costate.state_slice(k), out.trajectory.state_slice(k));
                worst = worst.max(geo.k(psi, x).abs());
                tol = tol.min(geo.switching_tol(psi, x));
            }
        }
    }
    (worst, tol)
}

#[test]
fn chattering_collapses_to_singular_arc() {
    let p = commuting_blocks([1.0, 2.0], [1.0, 0.5], 1.0);
    assert!(commutator(&p.a, &p.b).unwrap().is_zero());
    let grid = GridSpec::with_step(1.0, 0.001).unwrap();
    let u = ControlSignal::constant(grid, 0.0).unwrap();
    let x = integrate_forward(&p, &u).unwrap();
    let out = krotov_iteration_bang_only(&p, &u, &x).unwrap();
    assert!(out.record.flags.collapse_windows >= 1);
    assert!(out.record.segments.count(SegmentKind::Singular) >= 1);
    let (worst, tol) = singular_window_max_k(&p, &out);
    assert!(
        worst <= 10.0 * tol,
        "|K| = {worst} on the singular window, tol {tol}"
    );

    let staged = krotov_iteration(&p, &u, &x).unwrap();
    assert!((staged.record.objective.total - out.record.objective.total).abs() <= 1e-6);
}

#[test]
fn single_transversal_crossing_gives_one_switch() {
    let mut p = catalog::example_one();
    p.nu = 0.1;
    p.horizon = 1.0;
    let grid = GridSpec::with_step(1.0, 0.001).unwrap();
    let u = ControlSignal::constant(grid, 0.0).unwrap();
    let x = integrate_forward(&p, &u).unwrap();
    let out = krotov_iteration_bang_only(&p, &u, &x).unwrap();
    let staged = krotov_iteration(&p, &u, &x).unwrap();
    assert_eq!(out.record.flags.collapse_windows, 0);
    assert_eq!(out.record.segments.len(), 2);
    assert_eq!(staged.record.segments.len(), 2);
    assert_eq!(out.control.values(), staged.control.values());
}

#[test]
fn no_crossing_matches_staged_variant() {
    let (p, u) = rotation_fixed_point();
    let x = integrate_forward(&p, &u).unwrap();
    let a = krotov_iteration_bang_only(&p, &u, &x).unwrap();
    let b = krotov_iteration(&p, &u, &x).unwrap();
    assert_eq!(a.control.values(), b.control.values());
    assert_eq!(a.trajectory.terminal(), b.trajectory.terminal());
}

#[test]
fn certificate_matches_first_steps() {
    for id in [1, 2] {
        let ex = catalog::example(id).unwrap();
        let p = &ex.problem;
        let x = integrate_forward(p, &ex.initial_control).unwrap();
        let out = krotov_iteration(p, &ex.initial_control, &x).unwrap();
        let c = improvement_certificate(
            p,
            &out.costate,
            &x,
            &ex.initial_control,
            &out.trajectory,
            &out.control,
        )
        .unwrap();
        assert!(c.term_x.abs() <= 1e-8);
        assert!(c.term_u >= -1e-10 && c.term_g >= -1e-10, "{c:?}");
        assert!(c.discrepancy() <= 1e-6, "example {id}: {c:?}");

        let same = improvement_certificate(
            p,
            &out.costate,
            &x,
            &ex.initial_control,
            &x,
            &ex.initial_control,
        )
        .unwrap();
        assert_eq!((same.term_u, same.term_x, same.term_g), (0.0, 0.0, 0.0));
    }
}

#[test]
fn global_method_lands_in_published_ranges() {
    let one = catalog::example(1).unwrap();
    let x = integrate_forward(&one.problem, &one.initial_control).unwrap();
    let first = krotov_iteration(&one.problem, &one.initial_control, &x).unwrap();
    assert!((first.record.objective.total - one.table[1][0]).abs() <= 0.15);

    let two = catalog::example(2).unwrap();
    let cfg = SolverConfig::new(Method::Global, two.grid).with_max_iters(10);
    let report = solve(&two.problem, &two.initial_control, &cfg).unwrap();
    let last = report.final_objective().total;
    assert!((-12.0 - 1e-6..=-11.9).contains(&last), "{last}");
}

fn expm(m: &Matrix) -> Matrix {
    let squarings = frobenius_norm(m).log2().ceil().max(0.0) as i32 + 4;
    let a = m.scale(0.5f64.powi(squarings));
    let mut term = Matrix::identity(m.rows());
    let mut sum = term.clone();
    for k in 1..20 {
        term = term.matmul(&a).unwrap().scale(1.0 / k as f64);
        sum = sum.add(&term).unwrap();
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum).unwrap();
    }
    sum
}

#[test]
fn second_example_initial_objective_matches_exponential_oracle() {
    let ex = catalog::example(2).unwrap();
    let p = &ex.problem;
    let on = expm(&p.a.add(&p.b).unwrap());
    let off = expm(&p.a.scale(4.0));
    let x_t = off.mul_vec(&on.mul_vec(&p.x0).unwrap()).unwrap();
    let exact = p.terminal_form(x_t.as_slice());
    let (_, value) = simulate(p, &ex.initial_control).unwrap();
    // the grid control ramps from 1 to 0 over the last interval before t = 1
    assert!(
        (value.total - exact).abs() < 2e-3,
        "{} vs {exact}",
        value.total
    );
    assert!((exact - (-4.7919)).abs() < 1e-3, "{exact}");
}
