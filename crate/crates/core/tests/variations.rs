mod common;

use common::{dv, exact_run, finite_difference, random_instance, random_request};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tspmp_core::integrate::{backward_adjoint, forward, variation_endpoint, variation_path};
use tspmp_core::pmp::scattered_gradient;
use tspmp_core::{ControlProblem, SampledControl, TimeScale, VariationRequest};

#[test]
fn variation_vectors_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut kinds = [0usize; 3];
    for _ in 0..50 {
        let (problem, ctrl) = random_instance(&mut rng);
        let req = random_request(&mut rng, &ctrl);
        kinds[match req {
            VariationRequest::Scattered { .. } => 0,
            VariationRequest::Dense { .. } => 1,
            VariationRequest::Initial { .. } => 2,
        }] += 1;
        let traj = forward(&problem, &ctrl, &dv(1.0)).unwrap();
        let (_, w0) = variation_endpoint(&problem, &ctrl, &traj, &req).unwrap();
        let fd = finite_difference(&problem, &ctrl, &req);
        assert!(
            (w0 - fd).abs() <= 3e-4 * fd.abs(),
            "{req:?}: variation {w0} vs finite difference {fd}"
        );
    }
    assert!(kinds.iter().all(|&k| k > 0), "{kinds:?}");
}

#[test]
fn pairing_with_adjoint_is_conserved() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let (problem, ctrl) = random_instance(&mut rng);
        let req = random_request(&mut rng, &ctrl);
        let traj = forward(&problem, &ctrl, &dv(1.0)).unwrap();
        let p_b = dv(rng.gen_range(-1.0..1.0));
        let p0 = -rng.gen_range(0.0..2.0);
        let adj = backward_adjoint(&problem, &ctrl, &traj, &p_b, p0).unwrap();
        let path = variation_path(&problem, &ctrl, &traj, &req).unwrap();
        let pair = |k: usize| {
            let w = path.at_node(k);
            adj.p[k][0] * w[0] + p0 * w[1]
        };
        let last = traj.q.len() - 1;
        let end = pair(last);
        for k in path.homogeneous_from..=last {
            assert!(
                (pair(k) - end).abs() <= 1e-6 * (1.0 + end.abs()),
                "{req:?} at node {k}: {} vs {end}",
                pair(k)
            );
        }
    }
}

#[test]
fn scattered_variation_is_the_adjoint_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (problem, ctrl) = random_instance(&mut rng);
        let traj = forward(&problem, &ctrl, &dv(1.0)).unwrap();
        let adj = backward_adjoint(&problem, &ctrl, &traj, &dv(0.0), -1.0).unwrap();
        for (r, u) in ctrl.scattered_values().map(|(r, u)| (r, u[0])).collect::<Vec<_>>() {
            let y = dv(rng.gen_range(0.0..1.0));
            let g = scattered_gradient(&problem, &ctrl, &traj, &adj, r).unwrap();
            let req = VariationRequest::Scattered { r, y: y.clone() };
            let (_, w0) = variation_endpoint(&problem, &ctrl, &traj, &req).unwrap();
            let predicted = -g[0] * (y[0] - u);
            assert!((w0 - predicted).abs() <= 1e-6 * (1.0 + w0.abs()), "{w0} vs {predicted}");
        }
    }
}

#[test]
fn discrete_forward_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let (problem, ctrl) = loop {
            let inst = random_instance(&mut rng);
            if inst.0.state_scale.is_discrete() {
                break inst;
            }
        };
        let traj = forward(&problem, &ctrl, &dv(1.0)).unwrap();
        let (q, cost) = exact_run(&ctrl, 1.0);
        assert!((traj.final_state()[0] - q).abs() <= 1e-12 * q);
        assert!((traj.cost() - cost).abs() <= 1e-12 * cost.abs());
    }
}

#[test]
fn halving_the_step_quarters_the_error() {
    let problem = ControlProblem::consumption(
        TimeScale::interval(0.0, 10.0).unwrap(),
        TimeScale::points(&[0.0]).unwrap(),
    )
    .unwrap();
    let error = |h: f64| {
        let ctrl = SampledControl::constant(problem.mesh(h, &[]).unwrap(), &problem.omega, &dv(1.0));
        let traj = forward(&problem, &ctrl, &dv(1.0)).unwrap();
        (traj.final_state()[0] - 10f64.exp()).abs()
    };
    for h in [0.5, 0.25, 0.125] {
        let ratio = error(h) / error(h / 2.0);
        assert!(ratio >= 4.0, "h = {h}: ratio {ratio}");
    }
}
