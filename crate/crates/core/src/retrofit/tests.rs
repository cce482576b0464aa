use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::validation::performance_bounds;
use super::*;
use crate::bench::random::{sample_plant, unit_ball};
use crate::hierarchy::{admissible_projection, expand_nonlinear, nhat_bounds, ProjectionMethod, Which};
use crate::numlin::{eigenvalues, spectrum_distance, Matrix, Vector};
use crate::sim::{integrate, FnSystem, IntegratorConfig};
use crate::sysmodel::{assemble_closed_loop, Controller, PreexistingSystem};

fn lqr_output_feedback(plant: &PreexistingSystem) -> RetrofitController {
    let sub = plant.sub();
    let (q, r) = Weights::new(1.0, 1.0).matrices(sub.n1(), sub.m1());
    let k = design_local_lqr(sub, &q, &r).unwrap().gain;
    RetrofitController::OutputFeedback(synthesize_output_feedback(sub, &k).unwrap())
}

fn observer(plant: &PreexistingSystem) -> RetrofitController {
    let sub = plant.sub();
    let (q, r) = Weights::new(1.0, 1.0).matrices(sub.n1(), sub.m1());
    let (qo, ro) = Weights::new(1.0, 1.0).matrices(sub.n1(), sub.p1());
    let (f1, h1) = design_local_observer(sub, &q, &r, &qo, &ro).unwrap();
    RetrofitController::Observer(synthesize_observer(sub, &f1, &h1).unwrap())
}

fn projected(plant: &PreexistingSystem, seed: u64) -> RetrofitController {
    let sub = plant.sub();
    let (lo, hi) = nhat_bounds(sub);
    let nhat = lo + (seed as usize) % (hi - lo + 1);
    let proj = admissible_projection(sub, nhat, ProjectionMethod::Random { seed }).unwrap();
    let khat = design_projected_lqr(sub, &proj, Weights::new(1.0, 1.0)).unwrap().gain;
    RetrofitController::StateFeedback(synthesize_state_feedback(sub, &proj, &khat, None).unwrap())
}

fn separation_gap(plant: &PreexistingSystem, ctrl: &RetrofitController) -> f64 {
    let cl = assemble_closed_loop(plant, vec![ctrl.bind(plant).unwrap()]).unwrap();
    let full = eigenvalues(cl.augmented().unwrap()).unwrap();
    let (local, _, _) = ctrl.local_loop(plant.sub().b1());
    let mut parts = eigenvalues(&local).unwrap();
    parts.extend(eigenvalues(plant.a().unwrap()).unwrap());
    spectrum_distance(&full, &parts).expect("sizes")
}

#[test]
fn spectrum_separates() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..10 {
        let plant = sample_plant(&mut rng, 5, 5, true).unwrap();
        let a = plant.a().unwrap().norm();
        for ctrl in [lqr_output_feedback(&plant), projected(&plant, seed)] {
            let gap = separation_gap(&plant, &ctrl);
            assert!(gap <= 1e-8 * (1.0 + a), "seed {seed}: gap {gap:e}");
        }
    }
}

#[test]
fn observer_form_separates_with_partial_measurement() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let plant = sample_plant(&mut rng, 5, 5, false).unwrap();
        let gap = separation_gap(&plant, &observer(&plant));
        assert!(gap <= 1e-8 * (1.0 + plant.a().unwrap().norm()), "gap {gap:e}");
    }
}

#[test]
fn zero_action_without_local_deflection() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..3 {
        let plant = sample_plant(&mut rng, 4, 5, true).unwrap();
        let ctrl = lqr_output_feedback(&plant);
        let cl = assemble_closed_loop(&plant, vec![ctrl.bind(&plant).unwrap()]).unwrap();
        let mut x0 = Vector::zeros(plant.n());
        x0.rows_mut(plant.n1(), plant.n2()).copy_from(&unit_ball(&mut rng, plant.n2()));
        let traj = integrate(&cl, &cl.initial_state(&x0).unwrap(), &IntegratorConfig::rk4(1e-2, 20.0), &[]).unwrap();
        assert!(traj.input_sup() <= 1e-9, "{:e}", traj.input_sup());
    }
}

#[test]
fn simulated_norms_respect_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for seed in 0..4 {
        let plant = sample_plant(&mut rng, 4, 4, true).unwrap();
        for ctrl in [lqr_output_feedback(&plant), projected(&plant, seed)] {
            let pb = performance_bounds(&plant, &ctrl).unwrap();
            let cl = assemble_closed_loop(&plant, vec![ctrl.bind(&plant).unwrap()]).unwrap();
            let delta0 = unit_ball(&mut rng, plant.n1());
            let mut x0 = Vector::zeros(plant.n());
            x0.rows_mut(0, plant.n1()).copy_from(&delta0);
            let horizon = 30.0;
            let traj = integrate(&cl, &cl.initial_state(&x0).unwrap(), &IntegratorConfig::rk4(2e-3, horizon), &[]).unwrap();
            let x1: Vec<usize> = (0..plant.n1()).collect();
            let x2: Vec<usize> = (plant.n1()..plant.n()).collect();
            let n1 = traj.l2_norm(&x1).unwrap().value;
            let n2 = traj.l2_norm(&x2).unwrap().value;
            assert!(n1 <= pb.bound(Which::One, &delta0).unwrap() + 1e-6);
            assert!(n2 <= pb.bound(Which::Two, &delta0).unwrap() + 1e-6);
        }
    }
}

/// Cascade plus controller, where the controller reads the recovered state.
fn co_simulation(plant: &PreexistingSystem, ctrl: &RetrofitController, x0: &Vector) -> (crate::sim::Trajectory, usize) {
    let cascade = expand_nonlinear(plant, ctrl.projection()).unwrap();
    let c: Arc<dyn Controller> = ctrl.as_controller();
    let binding = ctrl.bind(plant).unwrap();
    let (nc, k) = (cascade.dim(), c.state_dim());
    let field = {
        let cascade = cascade.clone();
        move |_t: f64, w: &Vector| {
            let v = w.rows(0, nc).clone_owned();
            let z = w.rows(nc, k).clone_owned();
            let x = cascade.recovered(&v);
            let y = &binding.measurement * &x;
            let g = match &binding.gamma {
                crate::sysmodel::GammaTap::Linear(g) => g * &x,
                _ => Vector::zeros(0),
            };
            let u = c.output(&z, &y, &g);
            let mut out = Vector::zeros(nc + k);
            out.rows_mut(0, nc).copy_from(&cascade.derivative(&v, &u));
            out.rows_mut(nc, k).copy_from(&c.derivative(&z, &y, &g));
            out
        }
    };
    let sys = FnSystem::new(nc + k, Arc::new(field));
    let mut w0 = Vector::zeros(nc + k);
    w0.rows_mut(0, nc).copy_from(&cascade.initial_state(x0, None).unwrap());
    let traj = integrate(&sys, &w0, &IntegratorConfig::rk4(1e-2, 10.0), &[]).unwrap();
    (traj, cascade.nhat())
}

#[test]
fn compensator_tracks_downstream_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for seed in 0..4 {
        let plant = sample_plant(&mut rng, 5, 4, true).unwrap();
        let x0 = unit_ball(&mut rng, plant.n());
        for ctrl in [lqr_output_feedback(&plant), projected(&plant, seed)] {
            let (traj, nhat) = co_simulation(&plant, &ctrl, &x0);
            let (n1, nc) = (plant.n1(), nhat + plant.n());
            let pd = ctrl.projection().map(|p| p.p1dag().clone()).unwrap_or_else(|| Matrix::identity(n1, n1));
            for k in 0..traj.len() {
                let w = Vector::from_column_slice(traj.state(k));
                let xi1 = w.rows(nhat, n1).clone_owned();
                let xh = w.rows(nc, pd.nrows()).clone_owned();
                assert!((&pd * xi1 - xh).norm() <= 1e-6);
            }
        }
    }
}

#[test]
fn identity_projection_matches_output_feedback() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let plant = sample_plant(&mut rng, 4, 4, true).unwrap();
    let sub = plant.sub();
    let (q, r) = Weights::new(1.0, 1.0).matrices(sub.n1(), sub.m1());
    let k = design_local_lqr(sub, &q, &r).unwrap().gain;
    let of = RetrofitController::OutputFeedback(synthesize_output_feedback(sub, &k).unwrap());
    let proj = crate::hierarchy::ProjectionPair::identity(sub.n1());
    let sf = RetrofitController::StateFeedback(synthesize_state_feedback(sub, &proj, &k, None).unwrap());
    let x0 = unit_ball(&mut rng, plant.n());
    let cfg = IntegratorConfig::rk4(1e-2, 10.0);
    let run = |c: &RetrofitController| {
        let cl = assemble_closed_loop(&plant, vec![c.bind(&plant).unwrap()]).unwrap();
        integrate(&cl, &cl.initial_state(&x0).unwrap(), &cfg, &[]).unwrap()
    };
    let (a, b) = (run(&of), run(&sf));
    for k in 0..a.len() {
        let d = Vector::from_column_slice(a.input(k)) - Vector::from_column_slice(b.input(k));
        assert!(d.norm() <= 1e-8);
    }
}

#[test]
fn controller_json_carries_form_tag() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let plant = sample_plant(&mut rng, 4, 3, true).unwrap();
    let ctrl = lqr_output_feedback(&plant);
    let js = serde_json::to_value(&ctrl).unwrap();
    assert_eq!(js["form"], "output_feedback");
    let back: RetrofitController = serde_json::from_value(js).unwrap();
    match (back, ctrl) {
        (RetrofitController::OutputFeedback(a), RetrofitController::OutputFeedback(b)) => assert_eq!(a, b),
        _ => panic!("form changed"),
    }
}

#[test]
fn nonlinear_plant_bounds_refused() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let plant = sample_plant(&mut rng, 3, 3, true).unwrap();
    let env = crate::sysmodel::NonlinearEnvironment::from_linear(plant.linear_env().unwrap());
    let nl = PreexistingSystem::nonlinear(plant.sub().clone(), env, None).unwrap();
    let ctrl = lqr_output_feedback(&plant);
    assert!(matches!(performance_bounds(&nl, &ctrl), Err(crate::Error::NonlinearEnvironment)));
}
