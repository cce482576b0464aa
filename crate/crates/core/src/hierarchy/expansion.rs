use std::sync::Arc;

use super::ProjectionPair;
use crate::error::{Error, Result};
use crate::numlin::{Matrix, StateSpace, Vector};
use crate::sim::{FnSystem, Signal};
use crate::sysmodel::{Environment, PreexistingSystem};

/// Linear cascade realization: upstream `(P1dag A1 P1, P1dag B1)` feeding the
/// downstream copy of the plant through `drive = [P1bar P1bardag A1; L2 G1] P1`.
#[derive(Clone, Debug)]
pub struct HierarchicalRealization {
    /// Output matrix is `P1`, the upstream contribution to `x1`.
    pub upstream: StateSpace,
    /// `(A, drive, I, 0)`.
    pub downstream: StateSpace,
    pub projection: ProjectionPair,
    parent: PreexistingSystem,
}

/// Initial states of the cascade for a given plant initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialSplit {
    pub xihat: Vector,
    /// `[xi1; xi2]`
    pub xi: Vector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    One,
    Two,
}

pub fn expand(plant: &PreexistingSystem) -> Result<HierarchicalRealization> {
    expand_parameterized(plant, &ProjectionPair::identity(plant.n1()))
}

pub fn expand_parameterized(plant: &PreexistingSystem, proj: &ProjectionPair) -> Result<HierarchicalRealization> {
    let a = plant.a()?.clone();
    check_projection(plant, proj)?;
    let sub = plant.sub();
    let (p, pd) = (proj.p1(), proj.p1dag());
    let upstream = StateSpace::strictly_proper(pd * sub.a1() * p, pd * sub.b1(), p.clone())?;
    let drive = full_drive(plant, proj)? * p;
    let n = plant.n();
    let downstream = StateSpace::strictly_proper(a, drive, Matrix::identity(n, n))?;
    Ok(HierarchicalRealization { upstream, downstream, projection: proj.clone(), parent: plant.clone() })
}

fn check_projection(plant: &PreexistingSystem, proj: &ProjectionPair) -> Result<()> {
    let n1 = plant.n1();
    if proj.n1() != n1 {
        return Err(Error::dim(format!("projection acts on {} states, subsystem has {n1}", proj.n1())));
    }
    let b1 = plant.sub().b1();
    let miss = ((Matrix::identity(n1, n1) - proj.projector()) * b1).norm();
    if miss > 1e-8 * (1.0 + b1.norm()) {
        return Err(Error::ProjectionInadmissible(format!("im B1 is not contained in im P1 (residual {miss:e})")));
    }
    Ok(())
}

/// `[P1bar P1bardag A1; L2 G1]`, the `N x n1` input map of `G_i'`.
fn full_drive(plant: &PreexistingSystem, proj: &ProjectionPair) -> Result<Matrix> {
    let env = plant.linear_env()?;
    let n1 = plant.n1();
    let mut d = Matrix::zeros(plant.n(), n1);
    d.rows_mut(0, n1).copy_from(&(proj.complement_projector() * plant.sub().a1()));
    d.rows_mut(n1, plant.n2()).copy_from(&(env.l2() * env.gamma1()));
    Ok(d)
}

impl HierarchicalRealization {
    pub fn parent(&self) -> &PreexistingSystem {
        &self.parent
    }
    pub fn nhat(&self) -> usize {
        self.projection.nhat()
    }
    pub fn drive(&self) -> &Matrix {
        &self.downstream.b
    }

    /// Consistent initial states: `xihat = P1dag (delta0 - zeta0)`,
    /// `xi1 = P1bar P1bardag delta0 + P1 P1dag zeta0`, `xi2 = x2(0)`.
    pub fn initial_split(&self, x0: &Vector, zeta0: Option<&Vector>) -> Result<InitialSplit> {
        split(&self.parent, &self.projection, x0, zeta0)
    }

    pub fn cascade(&self) -> Cascade {
        Cascade::new(&self.parent, &self.projection)
    }
}

fn split(plant: &PreexistingSystem, proj: &ProjectionPair, x0: &Vector, zeta0: Option<&Vector>) -> Result<InitialSplit> {
    let n1 = plant.n1();
    if x0.len() != plant.n() {
        return Err(Error::dim(format!("x0 has length {}, plant has {} states", x0.len(), plant.n())));
    }
    let zero = Vector::zeros(n1);
    let zeta0 = zeta0.unwrap_or(&zero);
    if zeta0.len() != n1 {
        return Err(Error::dim("zeta0 must have n1 entries"));
    }
    let delta0 = x0.rows(0, n1).clone_owned();
    let xihat = proj.p1dag() * (&delta0 - zeta0);
    let mut xi = x0.clone();
    xi.rows_mut(0, n1).copy_from(&(proj.complement_projector() * &delta0 + proj.projector() * zeta0));
    Ok(InitialSplit { xihat, xi })
}

/// Transfer matrix `G_i'(s) = E_i^T (sI - A)^{-1} [P1bar P1bardag A1; L2 G1]`
/// (for the identity projection, `E_i^T (sI - A)^{-1} E2 L2 G1`).
pub fn downstream_transfer(real: &HierarchicalRealization, which: Which) -> Result<StateSpace> {
    let plant = &real.parent;
    let d = full_drive(plant, &real.projection)?;
    let c = match which {
        Which::One => plant.e1().transpose(),
        Which::Two => plant.e2().transpose(),
    };
    StateSpace::strictly_proper(real.downstream.a.clone(), d, c)
}

/// Simulatable cascade `[xihat; xi1; xi2]` for linear or nonlinear plants.
///
/// The downstream part evaluates the environment at the recovered state
/// `x1 = xi1 + P1 xihat`:
/// `xi1' = A1 xi1 + P1bar P1bardag A1 P1 xihat + L1 h2(xi2, x1) [+ f1(x1)]`,
/// `xi2' = f2(xi2, x1)`.
#[derive(Clone, Debug)]
pub struct Cascade {
    plant: PreexistingSystem,
    proj: ProjectionPair,
    ahat: Matrix,
    bhat: Matrix,
    cross: Matrix,
}

pub fn expand_nonlinear(plant: &PreexistingSystem, proj: Option<&ProjectionPair>) -> Result<Cascade> {
    let id = ProjectionPair::identity(plant.n1());
    let proj = proj.unwrap_or(&id);
    check_projection(plant, proj)?;
    Ok(Cascade::new(plant, proj))
}

impl Cascade {
    fn new(plant: &PreexistingSystem, proj: &ProjectionPair) -> Self {
        let sub = plant.sub();
        let (p, pd) = (proj.p1(), proj.p1dag());
        Self {
            plant: plant.clone(),
            proj: proj.clone(),
            ahat: pd * sub.a1() * p,
            bhat: pd * sub.b1(),
            cross: proj.complement_projector() * sub.a1() * p,
        }
    }

    pub fn dim(&self) -> usize {
        self.proj.nhat() + self.plant.n()
    }
    pub fn nhat(&self) -> usize {
        self.proj.nhat()
    }

    pub fn initial_state(&self, x0: &Vector, zeta0: Option<&Vector>) -> Result<Vector> {
        let s = split(&self.plant, &self.proj, x0, zeta0)?;
        let mut w = Vector::zeros(self.dim());
        w.rows_mut(0, self.nhat()).copy_from(&s.xihat);
        w.rows_mut(self.nhat(), self.plant.n()).copy_from(&s.xi);
        Ok(w)
    }

    /// `[xi1 + P1 xihat; xi2]`
    pub fn recovered(&self, w: &Vector) -> Vector {
        let (k, n1) = (self.nhat(), self.plant.n1());
        let mut x = w.rows(k, self.plant.n()).clone_owned();
        let mut top = x.rows_mut(0, n1);
        top += self.proj.p1() * w.rows(0, k);
        x
    }

    pub fn derivative(&self, w: &Vector, u: &Vector) -> Vector {
        let (k, n1, n2) = (self.nhat(), self.plant.n1(), self.plant.n2());
        let xihat = w.rows(0, k).clone_owned();
        let xi1 = w.rows(k, n1).clone_owned();
        let xi2 = w.rows(k + n1, n2).clone_owned();
        let x1 = &xi1 + self.proj.p1() * &xihat;
        let sub = self.plant.sub();
        let mut out = Vector::zeros(self.dim());
        out.rows_mut(0, k).copy_from(&(&self.ahat * &xihat + &self.bhat * u));
        let (gamma2, f2) = match self.plant.env() {
            Environment::Linear(e) => (e.gamma2() * &xi2, e.a2() * &xi2 + e.l2() * (e.gamma1() * &x1)),
            Environment::Nonlinear(e) => (e.output(&xi2, &x1), e.dynamics(&xi2, &x1)),
        };
        let mut d1 = sub.a1() * &xi1 + &self.cross * &xihat + sub.l1() * gamma2;
        if let Some(res) = self.plant.residual() {
            d1 += res.eval(&x1);
        }
        out.rows_mut(k, n1).copy_from(&d1);
        out.rows_mut(k + n1, n2).copy_from(&f2);
        out
    }

    /// The cascade driven by an open-loop input signal `u(t)`.
    pub fn with_input(&self, input: Signal) -> FnSystem {
        let me = self.clone();
        let u = input.clone();
        FnSystem::new(self.dim(), Arc::new(move |t, w: &Vector| me.derivative(w, &u(t))))
            .with_inputs(self.plant.sub().m1(), Arc::new(move |t, _w: &Vector| input(t)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{admissible_projection, ProjectionMethod};
    use crate::numlin::{eigenvalues, hinf_norm, spectrum_distance};
    use crate::sim::{integrate, IntegratorConfig};
    use crate::sysmodel::{assemble_preexisting, LinearEnvironment, LinearSubsystem, NonlinearEnvironment};

    fn s(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn scalar_plant() -> PreexistingSystem {
        let sub = LinearSubsystem::new(s(-1.0), s(1.0), s(1.0), s(1.0)).unwrap();
        let env = LinearEnvironment::new(s(-2.0), s(1.0), s(1.0), s(1.0)).unwrap();
        assemble_preexisting(sub, env).unwrap()
    }

    fn three_state() -> PreexistingSystem {
        let a1 = Matrix::from_row_slice(3, 3, &[-1.0, 0.5, 0.0, 0.2, -2.0, 0.3, 0.0, 0.4, -1.5]);
        let b1 = Matrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let l1 = Matrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        let sub = LinearSubsystem::new(a1, b1, Matrix::identity(3, 3), l1).unwrap();
        let env = LinearEnvironment::new(
            Matrix::from_row_slice(2, 2, &[-1.0, 0.3, -0.3, -2.0]),
            Matrix::from_row_slice(2, 1, &[1.0, 0.5]),
            Matrix::from_row_slice(1, 3, &[0.2, 0.4, 0.6]),
            Matrix::from_row_slice(1, 2, &[0.7, -0.2]),
        )
        .unwrap();
        assemble_preexisting(sub, env).unwrap()
    }

    fn recovery_error(plant: &PreexistingSystem, cascade: &Cascade, x0: &Vector) -> f64 {
        let u: Signal = Arc::new(|t: f64| Vector::from_element(1, t.sin()));
        let cfg = IntegratorConfig::rk4(1e-3, 10.0).with_stride(50);
        let p = plant.clone();
        let uu = u.clone();
        let direct = FnSystem::new(plant.n(), Arc::new(move |t, x: &Vector| p.derivative(x, &uu(t))));
        let tx = integrate(&direct, x0, &cfg, &[]).unwrap();
        let tc = integrate(&cascade.with_input(u), &cascade.initial_state(x0, None).unwrap(), &cfg, &[]).unwrap();
        (0..tx.len())
            .map(|k| (Vector::from_row_slice(tx.state(k)) - cascade.recovered(&Vector::from_row_slice(tc.state(k)))).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn plain_expansion_recovers_state() {
        let plant = scalar_plant();
        let real = expand(&plant).unwrap();
        assert_eq!(real.drive(), &Matrix::from_row_slice(2, 1, &[0.0, 1.0]));
        let err = recovery_error(&plant, &real.cascade(), &Vector::from_vec(vec![0.5, 0.0]));
        assert!(err <= 1e-6, "{err:e}");
    }

    #[test]
    fn identity_projection_coincides_with_plain() {
        let plant = three_state();
        let a = expand(&plant).unwrap();
        let b = expand_parameterized(&plant, &ProjectionPair::identity(3)).unwrap();
        assert_eq!(a.upstream, b.upstream);
        assert_eq!(a.downstream, b.downstream);
    }

    #[test]
    fn parameterized_expansion_recovers_state() {
        let plant = three_state();
        for method in [ProjectionMethod::Orthogonal, ProjectionMethod::Balanced, ProjectionMethod::Random { seed: 9 }] {
            let proj = admissible_projection(plant.sub(), 2, method).unwrap();
            let real = expand_parameterized(&plant, &proj).unwrap();
            let x0 = Vector::from_vec(vec![0.3, -0.2, 0.5, 0.1, -0.4]);
            let err = recovery_error(&plant, &real.cascade(), &x0);
            assert!(err <= 1e-6, "{method:?}: {err:e}");
        }
    }

    #[test]
    fn initial_split_reproduces_delta0() {
        let plant = three_state();
        let proj = admissible_projection(plant.sub(), 2, ProjectionMethod::Random { seed: 1 }).unwrap();
        let real = expand_parameterized(&plant, &proj).unwrap();
        let x0 = Vector::from_vec(vec![0.3, -0.2, 0.5, 0.0, 0.0]);
        let cas = real.cascade();
        let zeta = Vector::from_vec(vec![0.1, 0.2, 0.3]);
        for z in [None, Some(&zeta)] {
            let w = cas.initial_state(&x0, z).unwrap();
            assert!((cas.recovered(&w) - &x0).norm() < 1e-14);
        }
    }

    #[test]
    fn inadmissible_projection_rejected() {
        let plant = three_state();
        let p1 = Matrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let pair = ProjectionPair::new(p1.clone(), p1.transpose()).unwrap();
        assert!(matches!(expand_parameterized(&plant, &pair), Err(Error::ProjectionInadmissible(_))));
    }

    #[test]
    fn downstream_spectrum_and_transfer() {
        let plant = three_state();
        let real = expand(&plant).unwrap();
        let got = eigenvalues(&real.downstream.a).unwrap();
        let want = eigenvalues(plant.a().unwrap()).unwrap();
        assert!(spectrum_distance(&got, &want).unwrap() < 1e-10);

        let proj = ProjectionPair::identity(3);
        let pr = expand_parameterized(&plant, &proj).unwrap();
        let g = downstream_transfer(&real, Which::Two).unwrap();
        let gp = downstream_transfer(&pr, Which::Two).unwrap();
        assert!(hinf_norm(&g.difference(&gp).unwrap(), 1e-9).unwrap() <= 1e-8);

        // DC gain against a direct solve.
        let dc = g.dc_gain().unwrap();
        let drive = {
            let env = plant.linear_env().unwrap();
            let mut d = Matrix::zeros(5, 3);
            d.rows_mut(3, 2).copy_from(&(env.l2() * env.gamma1()));
            d
        };
        let direct = plant.e2().transpose() * (-plant.a().unwrap()).lu().solve(&drive).unwrap();
        assert!((dc - direct).norm() < 1e-9);
    }

    #[test]
    fn decoupled_transfer_vanishes() {
        let sub = LinearSubsystem::new(s(-1.0), s(1.0), s(1.0), s(1.0)).unwrap();
        let env = LinearEnvironment::new(s(-2.0), s(1.0), s(0.0), s(0.0)).unwrap();
        let plant = assemble_preexisting(sub, env).unwrap();
        let real = expand(&plant).unwrap();
        for w in [Which::One, Which::Two] {
            assert_eq!(hinf_norm(&downstream_transfer(&real, w).unwrap(), 1e-9).unwrap(), 0.0);
        }
    }

    #[test]
    fn nonlinear_expansion() {
        let sub = LinearSubsystem::new(s(-1.0), s(1.0), s(1.0), s(1.0)).unwrap();
        let env = NonlinearEnvironment::new(
            1,
            1,
            Arc::new(|x2: &Vector, x1: &Vector| -x2 + x1),
            Arc::new(|x2: &Vector, _x1: &Vector| x2.map(f64::tanh)),
        );
        let plant = PreexistingSystem::nonlinear(sub, env, None).unwrap();
        let cas = expand_nonlinear(&plant, None).unwrap();
        let err = recovery_error(&plant, &cas, &Vector::from_vec(vec![0.5, -0.3]));
        assert!(err <= 1e-6, "{err:e}");
    }

    #[test]
    fn wrapped_linear_matches_linear() {
        let plant = scalar_plant();
        let wrapped = PreexistingSystem::nonlinear(
            plant.sub().clone(),
            NonlinearEnvironment::from_linear(plant.linear_env().unwrap()),
            None,
        )
        .unwrap();
        let x0 = Vector::from_vec(vec![0.5, 0.2]);
        let u: Signal = Arc::new(|t: f64| Vector::from_element(1, (2.0 * t).cos()));
        let cfg = IntegratorConfig::rk4(1e-3, 5.0).with_stride(100);
        let run = |p: &PreexistingSystem| {
            let c = expand_nonlinear(p, None).unwrap();
            integrate(&c.with_input(u.clone()), &c.initial_state(&x0, None).unwrap(), &cfg, &[]).unwrap()
        };
        let (a, b) = (run(&plant), run(&wrapped));
        for k in 0..a.len() {
            for (x, y) in a.state(k).iter().zip(b.state(k)) {
                assert!((x - y).abs() <= 1e-8);
            }
        }
    }
}
