//! Performance-bound constants. These read the environment model and are for
//! validation only.

use serde::Serialize;

use super::RetrofitController;
use crate::error::{Error, Result};
use crate::hierarchy::{downstream_transfer, expand_parameterized, ProjectionPair, Which};
use crate::numlin::{hinf_norm_default, ic_response_l2, ic_response_l2_sup_on, Matrix, StateSpace, Vector};
use crate::sysmodel::PreexistingSystem;

#[derive(Clone, Debug, Serialize)]
pub struct PerformanceBound {
    pub alpha1: f64,
    pub alpha2: f64,
    pub eps1: f64,
    #[serde(skip)]
    beta: BetaEvaluator,
}

/// `beta_i(v) = ||E_i^T e^{A t} E1 v||_L2`, evaluated at `v = P1bar P1bardag delta0`.
#[derive(Clone, Debug)]
struct BetaEvaluator {
    a: Matrix,
    e1t: Matrix,
    e2t: Matrix,
    n1: usize,
    complement: Matrix,
}

impl PerformanceBound {
    pub fn beta(&self, which: Which, delta0: &Vector) -> Result<f64> {
        let b = &self.beta;
        if delta0.len() != b.n1 {
            return Err(Error::dim(format!("delta0 has length {}, n1 = {}", delta0.len(), b.n1)));
        }
        let mut x0 = Vector::zeros(b.a.nrows());
        x0.rows_mut(0, b.n1).copy_from(&(&b.complement * delta0));
        let c = match which {
            Which::One => &b.e1t,
            Which::Two => &b.e2t,
        };
        ic_response_l2(&b.a, c, &x0)
    }

    /// `alpha_i eps1 |delta0| + beta_i(P1bar P1bardag delta0)` for
    /// `x1(0) = delta0`, `x2(0) = 0`.
    pub fn bound(&self, which: Which, delta0: &Vector) -> Result<f64> {
        let alpha = match which {
            Which::One => self.alpha1,
            Which::Two => self.alpha2,
        };
        Ok(alpha * self.eps1 * delta0.norm() + self.beta(which, delta0)?)
    }
}

/// `alpha1 = ||(G1' + I) P1||_Hinf`, `alpha2 = ||G2' P1||_Hinf`, `eps1` from
/// the controller's local loop. Refused for nonlinear environments.
pub fn performance_bounds(plant: &PreexistingSystem, ctrl: &RetrofitController) -> Result<PerformanceBound> {
    if !plant.is_linear() {
        return Err(Error::NonlinearEnvironment);
    }
    let identity = ProjectionPair::identity(plant.n1());
    let proj = ctrl.projection().unwrap_or(&identity);
    let real = expand_parameterized(plant, proj)?;
    let p = proj.p1();
    let g1 = downstream_transfer(&real, Which::One)?;
    let g2 = downstream_transfer(&real, Which::Two)?;
    let alpha1 = hinf_norm_default(&StateSpace::new(g1.a.clone(), &g1.b * p, g1.c.clone(), p.clone())?)?;
    let alpha2 = hinf_norm_default(&StateSpace::strictly_proper(g2.a.clone(), &g2.b * p, g2.c.clone())?)?;
    let (loop_a, inject, select) = ctrl.local_loop(plant.sub().b1());
    let eps1 = ic_response_l2_sup_on(&loop_a, &select, &inject)?;
    let beta = BetaEvaluator {
        a: plant.a()?.clone(),
        e1t: plant.e1().transpose(),
        e2t: plant.e2().transpose(),
        n1: plant.n1(),
        complement: proj.complement_projector(),
    };
    Ok(PerformanceBound { alpha1, alpha2, eps1, beta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrofit::{design_local_lqr, synthesize_output_feedback};
    use crate::sysmodel::{assemble_preexisting, LinearEnvironment, LinearSubsystem};

    fn s(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn decoupled_constants() {
        let sub = LinearSubsystem::new(s(-1.0), s(1.0), s(1.0), s(1.0)).unwrap();
        let env = LinearEnvironment::new(s(-2.0), s(1.0), s(0.0), s(0.0)).unwrap();
        let plant = assemble_preexisting(sub.clone(), env).unwrap();
        let k = design_local_lqr(&sub, &s(1.0), &s(1.0)).unwrap().gain;
        let ctrl = RetrofitController::OutputFeedback(synthesize_output_feedback(&sub, &k).unwrap());
        let pb = performance_bounds(&plant, &ctrl).unwrap();
        assert!((pb.alpha1 - 1.0).abs() < 1e-6);
        assert!(pb.alpha2.abs() < 1e-9);
        let zero = Vector::zeros(1);
        assert_eq!(pb.beta(Which::One, &zero).unwrap(), 0.0);
        assert_eq!(pb.beta(Which::Two, &zero).unwrap(), 0.0);
    }
}
