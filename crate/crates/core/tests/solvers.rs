use tspmp_core::integrate::forward;
use tspmp_core::pmp::{evaluate_report, hamiltonian, scattered_gradient, Tolerances};
use tspmp_core::problem::{ControlBox, DynamicsSpec, LinearQuadratic, TerminalSpec};
use tspmp_core::solver::{backward_sweep_consumption, direct_solve, DirectOptions, SolveResult};
use tspmp_core::{ControlProblem, DVector, SampledControl, TimeScale};

fn dv(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

fn continuous(period: f64) -> ControlProblem {
    ControlProblem::consumption(
        TimeScale::interval(0.0, 12.0).unwrap(),
        TimeScale::uniform(0.0, period, 12.0).unwrap(),
    )
    .unwrap()
}

fn discrete(period: f64) -> ControlProblem {
    ControlProblem::consumption(
        TimeScale::integers(0, 12).unwrap(),
        TimeScale::uniform(0.0, period, 12.0).unwrap(),
    )
    .unwrap()
}

fn sweep(p: &ControlProblem) -> SolveResult {
    backward_sweep_consumption(p, 0.012, &Tolerances::default()).unwrap()
}

#[test]
fn coarser_sampling_never_does_better() {
    for (t, t2) in [(1.0, 2.0), (2.0, 4.0), (3.0, 6.0), (6.0, 12.0)] {
        for make in [continuous as fn(f64) -> ControlProblem, discrete] {
            let fine = sweep(&make(t)).consumption_c;
            let coarse = sweep(&make(t2)).consumption_c;
            assert!(fine >= coarse - 1e-6, "period {t}: {fine} < {coarse}");
        }
    }
}

#[test]
fn continuous_periodic_optima_saturate_before_the_last_interval() {
    for period in [1.0, 2.0, 3.0, 4.0, 6.0, 9.0] {
        let res = sweep(&continuous(period));
        let values: Vec<(f64, f64)> = res.control.scattered_values().map(|(t, v)| (t, v[0])).collect();
        for &(t, v) in &values[..values.len() - 1] {
            assert_eq!(v, 1.0, "period {period}, t = {t}");
        }
    }
}

#[test]
fn certified_optima_have_monotone_state_and_adjoint() {
    for p in [continuous(3.0), continuous(12.0), discrete(4.0), discrete(6.0)] {
        let res = sweep(&p);
        assert!(res.report.pass());
        let q: Vec<f64> = res.trajectory.q.iter().map(|q| q[0]).collect();
        let adj: Vec<f64> = res.adjoint.p.iter().map(|p| p[0]).collect();
        assert!(q.windows(2).all(|w| w[1] >= w[0]) && q[0] > 0.0);
        assert!(adj.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(adj.iter().all(|&p| p >= -1e-12));
    }
}

/// Which sampled `y` would increase the objective, ignoring rounding noise.
fn ascent_directions(inner: &[f64]) -> Vec<bool> {
    let scale = inner.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    inner.iter().map(|&x| x > 1e-9 * (1.0 + scale)).collect()
}

#[test]
fn report_verdicts_are_positively_homogeneous() {
    for p in [continuous(3.0), discrete(4.0)] {
        let res = sweep(&p);
        let tol = Tolerances::default();
        for lambda in [0.5, 2.0] {
            let scaled = res.adjoint.scaled(lambda);
            let r = evaluate_report(&p, &res.control, &res.trajectory, &scaled, &tol).unwrap();
            let base = &res.report;
            assert!((r.adjoint_residual - lambda * base.adjoint_residual).abs() <= 1e-9 * (1.0 + base.adjoint_residual));
            assert!((r.transversality_residual - (lambda - 1.0).abs()).abs() <= 1e-12);
            for (a, b) in r.scattered_checks.iter().zip(&base.scattered_checks) {
                assert_eq!(ascent_directions(&a.inner), ascent_directions(&b.inner));
            }
            for (a, b) in r.dense_checks.iter().zip(&base.dense_checks) {
                assert_eq!(a.argmax, b.argmax);
            }
        }
    }
}

#[test]
fn dense_argmax_sets_survive_scaling() {
    let ts1 = TimeScale::interval(0.0, 12.0).unwrap();
    let p = ControlProblem::consumption(ts1.clone(), ts1).unwrap();
    let res = sweep(&p);
    assert!(!res.report.dense_checks.is_empty());
    for lambda in [0.5, 2.0] {
        let scaled = res.adjoint.scaled(lambda);
        let r = evaluate_report(&p, &res.control, &res.trajectory, &scaled, &Tolerances::default()).unwrap();
        for (a, b) in r.dense_checks.iter().zip(&res.report.dense_checks) {
            assert_eq!(a.argmax, b.argmax, "t = {}", a.t);
            assert!((a.gap - lambda * b.gap).abs() <= 1e-9 * (1.0 + b.gap));
        }
    }
}

#[test]
fn discrete_gradient_is_pointwise() {
    let n = TimeScale::integers(0, 12).unwrap();
    let p = ControlProblem::consumption(n.clone(), n).unwrap();
    let res = sweep(&p);
    for r in 0..12 {
        let r = r as f64;
        let g = scattered_gradient(&p, &res.control, &res.trajectory, &res.adjoint, r).unwrap();
        let k = r as usize;
        let u = res.control.value_at(r).unwrap();
        let (_, _, du) = hamiltonian(&p, r, &res.trajectory.q[k], &res.adjoint.p[k + 1], -1.0, u).unwrap();
        assert!((g[0] - du[0]).abs() <= 1e-10 * (1.0 + du[0].abs()), "r = {r}");
    }
    assert!((res.consumption_c - 2048.0).abs() < 1e-9);
}

/// Cost of the two-interval scalar LQ problem in closed form.
fn lq_cost(a: f64, b: f64, w: f64, rho: f64, target: f64, u: [f64; 2]) -> f64 {
    let mut q = 0.0;
    let mut cost = 0.0;
    for ui in u {
        let big_b = -b * ui / a;
        let big_a = q - big_b;
        let e1 = a.exp();
        let e2 = (2.0 * a).exp();
        let d = big_b - target;
        let sq = big_a * big_a * (e2 - 1.0) / (2.0 * a) + 2.0 * big_a * d * (e1 - 1.0) / a + d * d;
        cost += 0.5 * w * sq + 0.5 * rho * ui * ui;
        q = big_a * e1 + big_b;
    }
    cost
}

#[test]
fn direct_solver_matches_brute_force_on_lq() {
    let (a, b, w, rho, target) = (-0.5, 1.0, 1.0, 0.1, 1.0);
    let p = ControlProblem::new(
        TimeScale::interval(0.0, 2.0).unwrap(),
        TimeScale::points(&[0.0, 1.0]).unwrap(),
        DynamicsSpec::LinearQuadratic(LinearQuadratic {
            a: vec![vec![a]],
            b: vec![vec![b]],
            state_weight: vec![w],
            control_weight: vec![rho],
            state_target: vec![target],
        }),
        ControlBox::new(vec![-10.0], vec![10.0]).unwrap(),
        TerminalSpec::FixedInitialFreeFinal { q_a: vec![0.0] },
    )
    .unwrap();

    let (mut center, mut half) = ([0.0, 0.0], 10.0);
    let mut best = (f64::INFINITY, center);
    for _ in 0..10 {
        let step = 2.0 * half / 200.0;
        for i in 0..=200 {
            for j in 0..=200 {
                let u = [center[0] - half + i as f64 * step, center[1] - half + j as f64 * step];
                let c = lq_cost(a, b, w, rho, target, u);
                if c < best.0 {
                    best = (c, u);
                }
            }
        }
        center = best.1;
        half = 2.0 * step;
    }

    let mesh = p.mesh(0.01, &[]).unwrap();
    let init = SampledControl::constant(mesh, &p.omega, &dv(0.0));
    let res = direct_solve(&p, init, &DirectOptions::default(), &Tolerances::default()).unwrap();
    assert!(res.converged, "{:?}", res.diagnostics);
    assert!((res.cost - best.0).abs() <= 1e-6 * best.0.abs(), "{} vs {}", res.cost, best.0);
    let u: Vec<f64> = res.control.values().iter().map(|v| v[0]).collect();
    assert!((u[0] - best.1[0]).abs() < 1e-4 && (u[1] - best.1[1]).abs() < 1e-4, "{u:?} vs {:?}", best.1);
    let traj = forward(&p, &res.control, &dv(0.0)).unwrap();
    assert_eq!(traj.cost(), res.cost);
    let scale = 1.0 + res.cost.abs();
    let grad = res.report.scattered_checks.iter().map(|c| c.gradient[0].abs()).fold(0.0, f64::max);
    assert!(grad / scale <= 1e-8, "gradient {grad}");
    assert!(res.report.pass(), "{}", res.report.to_kv());
}
