//! The interconnected plant: designable subsystem, environment (linear or
//! nonlinear), the assembled preexisting system and closed-loop composition.
//!
//! State ordering is always `[x1; x2]` with the designable subsystem first.

mod closed_loop;
mod document;
mod linearize;

pub use closed_loop::{
    assemble_closed_loop, Binding, ClosedLoop, Controller, ControllerRealization, GammaTap, Plant,
};
pub use document::{SubsystemDocument, SystemDocument};
pub use linearize::{jacobian, linearize, Linearization, DEFAULT_FD_STEP};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numlin::{ensure_finite, is_hurwitz, orthonormal_range, Matrix, Stability, Vector};

/// `(x2, x1) -> value`
pub type CoupledMap = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
/// `x1 -> value`
pub type LocalMap = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// Designable subsystem `x1' = a1 x1 + l1 gamma2 + b1 u1`, `y1 = c1 x1`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSubsystem {
    a1: Matrix,
    b1: Matrix,
    c1: Matrix,
    l1: Matrix,
}

impl LinearSubsystem {
    pub fn new(a1: Matrix, b1: Matrix, c1: Matrix, l1: Matrix) -> Result<Self> {
        let n1 = a1.nrows();
        if n1 == 0 || !a1.is_square() {
            return Err(Error::dim(format!("a1 must be square with n1 >= 1, got {}x{}", a1.nrows(), a1.ncols())));
        }
        if b1.nrows() != n1 || l1.nrows() != n1 || c1.ncols() != n1 {
            return Err(Error::dim(format!(
                "n1 = {n1} but b1 is {}x{}, c1 is {}x{}, l1 is {}x{}",
                b1.nrows(),
                b1.ncols(),
                c1.nrows(),
                c1.ncols(),
                l1.nrows(),
                l1.ncols()
            )));
        }
        for (name, m) in [("a1", &a1), ("b1", &b1), ("c1", &c1), ("l1", &l1)] {
            ensure_finite(name, m)?;
        }
        Ok(Self { a1, b1, c1, l1 })
    }

    pub fn a1(&self) -> &Matrix {
        &self.a1
    }
    pub fn b1(&self) -> &Matrix {
        &self.b1
    }
    pub fn c1(&self) -> &Matrix {
        &self.c1
    }
    pub fn l1(&self) -> &Matrix {
        &self.l1
    }
    pub fn n1(&self) -> usize {
        self.a1.nrows()
    }
    pub fn m1(&self) -> usize {
        self.b1.ncols()
    }
    pub fn p1(&self) -> usize {
        self.c1.nrows()
    }
    pub fn q1(&self) -> usize {
        self.l1.ncols()
    }

    /// True when `c1` is exactly the identity (full state measurement).
    pub fn measures_state(&self) -> bool {
        self.c1.is_square() && self.c1 == Matrix::identity(self.n1(), self.n1())
    }
}

/// Linear environment `x2' = a2 x2 + l2 gamma1 x1`, `gamma2 = gamma2 x2`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearEnvironment {
    a2: Matrix,
    l2: Matrix,
    gamma1: Matrix,
    gamma2: Matrix,
}

impl LinearEnvironment {
    pub fn new(a2: Matrix, l2: Matrix, gamma1: Matrix, gamma2: Matrix) -> Result<Self> {
        let n2 = a2.nrows();
        if !a2.is_square() {
            return Err(Error::dim(format!("a2 must be square, got {}x{}", a2.nrows(), a2.ncols())));
        }
        if l2.nrows() != n2 || gamma2.ncols() != n2 || l2.ncols() != gamma1.nrows() {
            return Err(Error::dim(format!(
                "n2 = {n2} but l2 is {}x{}, gamma1 is {}x{}, gamma2 is {}x{}",
                l2.nrows(),
                l2.ncols(),
                gamma1.nrows(),
                gamma1.ncols(),
                gamma2.nrows(),
                gamma2.ncols()
            )));
        }
        for (name, m) in [("a2", &a2), ("l2", &l2), ("gamma1", &gamma1), ("gamma2", &gamma2)] {
            ensure_finite(name, m)?;
        }
        Ok(Self { a2, l2, gamma1, gamma2 })
    }

    pub fn a2(&self) -> &Matrix {
        &self.a2
    }
    pub fn l2(&self) -> &Matrix {
        &self.l2
    }
    pub fn gamma1(&self) -> &Matrix {
        &self.gamma1
    }
    pub fn gamma2(&self) -> &Matrix {
        &self.gamma2
    }
    pub fn n2(&self) -> usize {
        self.a2.nrows()
    }
}

/// Environment given only as evaluable maps: `x2' = f2(x2, x1)`,
/// `gamma2 = h2(x2, x1)`.
#[derive(Clone)]
pub struct NonlinearEnvironment {
    n2: usize,
    q1: usize,
    dynamics: CoupledMap,
    output: CoupledMap,
}

impl NonlinearEnvironment {
    pub fn new(n2: usize, q1: usize, dynamics: CoupledMap, output: CoupledMap) -> Self {
        Self { n2, q1, dynamics, output }
    }

    /// Wraps a linear environment as opaque maps.
    pub fn from_linear(env: &LinearEnvironment) -> Self {
        let (a2, l2g1) = (env.a2.clone(), &env.l2 * &env.gamma1);
        let g2 = env.gamma2.clone();
        Self {
            n2: env.n2(),
            q1: env.gamma2.nrows(),
            dynamics: Arc::new(move |x2, x1| &a2 * x2 + &l2g1 * x1),
            output: Arc::new(move |x2, _x1| &g2 * x2),
        }
    }

    pub fn n2(&self) -> usize {
        self.n2
    }
    pub fn q1(&self) -> usize {
        self.q1
    }
    pub fn dynamics(&self, x2: &Vector, x1: &Vector) -> Vector {
        (self.dynamics)(x2, x1)
    }
    pub fn output(&self, x2: &Vector, x1: &Vector) -> Vector {
        (self.output)(x2, x1)
    }
}

impl fmt::Debug for NonlinearEnvironment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearEnvironment").field("n2", &self.n2).field("q1", &self.q1).finish_non_exhaustive()
    }
}

/// Measurable additive nonlinearity `f1(x1)` on the subsystem state, zero at
/// the operating point.
#[derive(Clone)]
pub struct NonlinearResidual {
    map: LocalMap,
}

impl NonlinearResidual {
    pub fn new(map: LocalMap) -> Self {
        Self { map }
    }
    pub fn eval(&self, x1: &Vector) -> Vector {
        (self.map)(x1)
    }
}

impl fmt::Debug for NonlinearResidual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("NonlinearResidual")
    }
}

#[derive(Clone, Debug)]
pub enum Environment {
    Linear(LinearEnvironment),
    Nonlinear(NonlinearEnvironment),
}

impl Environment {
    pub fn n2(&self) -> usize {
        match self {
            Environment::Linear(e) => e.n2(),
            Environment::Nonlinear(e) => e.n2(),
        }
    }
}

/// Options for [`PreexistingSystem`] construction.
#[derive(Clone, Copy, Debug, Default)]
pub struct AssemblyOptions {
    /// Accept a non-Hurwitz assembled matrix (negative tests only).
    pub allow_unstable: bool,
}

/// Interconnection of the designable subsystem and its environment.
#[derive(Clone, Debug)]
pub struct PreexistingSystem {
    sub: LinearSubsystem,
    env: Environment,
    residual: Option<NonlinearResidual>,
    a: Option<Matrix>,
    stability: Option<Stability>,
}

/// Builds the preexisting system and refuses it unless the assembled matrix
/// is Hurwitz.
pub fn assemble_preexisting(sub: LinearSubsystem, env: LinearEnvironment) -> Result<PreexistingSystem> {
    PreexistingSystem::linear(sub, env, AssemblyOptions::default())
}

impl PreexistingSystem {
    pub fn linear(sub: LinearSubsystem, env: LinearEnvironment, opts: AssemblyOptions) -> Result<Self> {
        if env.gamma1.ncols() != sub.n1() || env.gamma2.nrows() != sub.q1() {
            return Err(Error::dim(format!(
                "gamma1 is {}x{} and gamma2 is {}x{}, but n1 = {} and l1 has {} columns",
                env.gamma1.nrows(),
                env.gamma1.ncols(),
                env.gamma2.nrows(),
                env.gamma2.ncols(),
                sub.n1(),
                sub.q1()
            )));
        }
        let (n1, n2) = (sub.n1(), env.n2());
        let mut a = Matrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&sub.a1);
        a.view_mut((0, n1), (n1, n2)).copy_from(&(&sub.l1 * &env.gamma2));
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&env.l2 * &env.gamma1));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&env.a2);
        let stability = is_hurwitz(&a)?;
        if !stability.hurwitz && !opts.allow_unstable {
            return Err(Error::NotHurwitz { abscissa: stability.abscissa });
        }
        Ok(Self { sub, env: Environment::Linear(env), residual: None, a: Some(a), stability: Some(stability) })
    }

    /// Plant with an opaque environment; no stability check is possible here.
    pub fn nonlinear(sub: LinearSubsystem, env: NonlinearEnvironment, residual: Option<NonlinearResidual>) -> Result<Self> {
        if env.q1() != sub.q1() {
            return Err(Error::dim(format!("environment output has {} entries, l1 has {} columns", env.q1(), sub.q1())));
        }
        Ok(Self { sub, env: Environment::Nonlinear(env), residual, a: None, stability: None })
    }

    /// Splits a global linear system `x' = a x + b u` into the subsystem on
    /// `states` (driven by input columns `inputs`, measured through `c1`) and
    /// its environment. Coupling blocks are factored through orthonormal
    /// bases of their column spaces.
    pub fn from_partition(
        a: &Matrix,
        b: &Matrix,
        states: &[usize],
        inputs: &[usize],
        c1: Matrix,
        opts: AssemblyOptions,
    ) -> Result<(Self, Vec<usize>)> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n {
            return Err(Error::dim("global a must be square and b must match its rows"));
        }
        let mut seen = vec![false; n];
        for &s in states {
            if s >= n || seen[s] {
                return Err(Error::Binding(format!("state index {s} out of range or repeated")));
            }
            seen[s] = true;
        }
        if inputs.iter().any(|&i| i >= b.ncols()) {
            return Err(Error::Binding("input column out of range".into()));
        }
        let rest: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
        let pick = |rows: &[usize], cols: &[usize], m: &Matrix| Matrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])]);
        let a1 = pick(states, states, a);
        let b1 = pick(states, inputs, b);
        let a12 = pick(states, &rest, a);
        let a21 = pick(&rest, states, a);
        let a2 = pick(&rest, &rest, a);
        let l1 = orthonormal_range(&a12);
        let gamma2 = l1.transpose() * &a12;
        let l2 = orthonormal_range(&a21);
        let gamma1 = l2.transpose() * &a21;
        let sub = LinearSubsystem::new(a1, b1, c1, l1)?;
        let env = LinearEnvironment::new(a2, l2, gamma1, gamma2)?;
        let mut order = states.to_vec();
        order.extend(&rest);
        Ok((Self::linear(sub, env, opts)?, order))
    }

    pub fn sub(&self) -> &LinearSubsystem {
        &self.sub
    }
    pub fn env(&self) -> &Environment {
        &self.env
    }
    pub fn residual(&self) -> Option<&NonlinearResidual> {
        self.residual.as_ref()
    }
    pub fn linear_env(&self) -> Result<&LinearEnvironment> {
        match &self.env {
            Environment::Linear(e) => Ok(e),
            Environment::Nonlinear(_) => Err(Error::NonlinearEnvironment),
        }
    }
    pub fn is_linear(&self) -> bool {
        matches!(self.env, Environment::Linear(_)) && self.residual.is_none()
    }
    /// Assembled `[[A1, L1 G2], [L2 G1, A2]]` (linear environments only).
    pub fn a(&self) -> Result<&Matrix> {
        self.a.as_ref().ok_or(Error::NonlinearEnvironment)
    }
    pub fn stability(&self) -> Option<Stability> {
        self.stability
    }
    pub fn n1(&self) -> usize {
        self.sub.n1()
    }
    pub fn n2(&self) -> usize {
        self.env.n2()
    }
    pub fn n(&self) -> usize {
        self.n1() + self.n2()
    }

    /// Selector `E1 = [I; 0]`.
    pub fn e1(&self) -> Matrix {
        let mut e = Matrix::zeros(self.n(), self.n1());
        e.view_mut((0, 0), (self.n1(), self.n1())).fill_with_identity();
        e
    }

    /// Selector `E2 = [0; I]`.
    pub fn e2(&self) -> Matrix {
        let mut e = Matrix::zeros(self.n(), self.n2());
        e.view_mut((self.n1(), 0), (self.n2(), self.n2())).fill_with_identity();
        e
    }

    /// `[B1; 0]`.
    pub fn b_full(&self) -> Matrix {
        let mut b = Matrix::zeros(self.n(), self.sub.m1());
        b.rows_mut(0, self.n1()).copy_from(&self.sub.b1);
        b
    }

    /// Interconnection signal `gamma2` at the full state `[x1; x2]`.
    pub fn gamma2(&self, x: &Vector) -> Vector {
        let (x1, x2) = self.split(x);
        match &self.env {
            Environment::Linear(e) => &e.gamma2 * x2,
            Environment::Nonlinear(e) => e.output(&x2, &x1),
        }
    }

    pub fn split(&self, x: &Vector) -> (Vector, Vector) {
        let n1 = self.n1();
        (x.rows(0, n1).clone_owned(), x.rows(n1, self.n2()).clone_owned())
    }

    /// Plant derivative for state `[x1; x2]` and input `u1`.
    pub fn derivative(&self, x: &Vector, u1: &Vector) -> Vector {
        let n1 = self.n1();
        let (x1, x2) = self.split(x);
        let mut out = Vector::zeros(self.n());
        match &self.env {
            Environment::Linear(_) => {
                out.copy_from(&(self.a.as_ref().expect("assembled") * x));
            }
            Environment::Nonlinear(env) => {
                let gamma2 = env.output(&x2, &x1);
                out.rows_mut(0, n1).copy_from(&(&self.sub.a1 * &x1 + &self.sub.l1 * gamma2));
                out.rows_mut(n1, self.n2()).copy_from(&env.dynamics(&x2, &x1));
            }
        }
        let mut top = out.rows_mut(0, n1);
        top += &self.sub.b1 * u1;
        if let Some(res) = &self.residual {
            top += res.eval(&x1);
        }
        out
    }

    /// The plant as a generic vector field with input `u1`.
    pub fn to_plant(&self) -> Plant {
        if self.is_linear() {
            return Plant::linear(self.a.clone().expect("assembled"), self.b_full());
        }
        let me = self.clone();
        Plant::nonlinear(self.n(), self.sub.m1(), Arc::new(move |x: &Vector, u: &Vector| me.derivative(x, u)))
    }

    /// Binding for a controller attached to this plant's subsystem. The
    /// measurement is `c1 x1` for output-feedback forms and `x1` for state
    /// feedback; `gamma2` is tapped when `with_gamma` is set.
    pub fn binding(&self, controller: Arc<dyn Controller>, measurement: &Matrix, with_gamma: bool) -> Result<Binding> {
        if measurement.ncols() != self.n1() {
            return Err(Error::dim(format!("measurement has {} columns, n1 = {}", measurement.ncols(), self.n1())));
        }
        let mut meas = Matrix::zeros(measurement.nrows(), self.n());
        meas.columns_mut(0, self.n1()).copy_from(measurement);
        let gamma = if !with_gamma {
            GammaTap::None
        } else {
            match &self.env {
                Environment::Linear(e) => {
                    let mut g = Matrix::zeros(e.gamma2.nrows(), self.n());
                    g.columns_mut(self.n1(), self.n2()).copy_from(&e.gamma2);
                    GammaTap::Linear(g)
                }
                Environment::Nonlinear(e) => {
                    let me = self.clone();
                    GammaTap::Nonlinear { dim: e.q1(), map: Arc::new(move |x: &Vector| me.gamma2(x)) }
                }
            }
        };
        Ok(Binding { controller, inputs: (0..self.sub.m1()).collect(), measurement: meas, gamma })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::eigenvalues;

    fn s(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    pub(crate) fn scalar_plant() -> PreexistingSystem {
        let sub = LinearSubsystem::new(s(-1.0), s(1.0), s(1.0), s(1.0)).unwrap();
        let env = LinearEnvironment::new(s(-2.0), s(1.0), s(1.0), s(1.0)).unwrap();
        assemble_preexisting(sub, env).unwrap()
    }

    #[test]
    fn scalar_assembly() {
        let plant = scalar_plant();
        assert_eq!(plant.a().unwrap(), &Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -2.0]));
        let mut eig: Vec<f64> = eigenvalues(plant.a().unwrap()).unwrap().iter().map(|z| z.re).collect();
        eig.sort_by(f64::total_cmp);
        let r5 = 5f64.sqrt();
        assert!((eig[0] - (-1.5 - r5 / 2.0)).abs() < 1e-12);
        assert!((eig[1] - (-1.5 + r5 / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn decoupled_spectrum_is_union() {
        let a1 = Matrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let sub = LinearSubsystem::new(a1, Matrix::zeros(2, 1), Matrix::identity(2, 2), Matrix::zeros(2, 1)).unwrap();
        let env = LinearEnvironment::new(s(-0.5), s(0.0), Matrix::zeros(1, 2), s(0.0)).unwrap();
        let plant = assemble_preexisting(sub, env).unwrap();
        let got = eigenvalues(plant.a().unwrap()).unwrap();
        let want: Vec<_> = [-1.0, -3.0, -0.5].iter().map(|&v| num_complex::Complex64::new(v, 0.0)).collect();
        assert!(crate::numlin::spectrum_distance(&got, &want).unwrap() < 1e-10);
    }

    #[test]
    fn blocks_are_bit_exact() {
        let sub = LinearSubsystem::new(
            Matrix::from_row_slice(2, 2, &[-1.1, 0.3, 0.7, -2.9]),
            Matrix::from_row_slice(2, 1, &[1.0, 0.0]),
            Matrix::identity(2, 2),
            Matrix::from_row_slice(2, 1, &[0.0, 0.1]),
        )
        .unwrap();
        let env = LinearEnvironment::new(s(-1.3), s(0.2), Matrix::from_row_slice(1, 2, &[0.1, 0.3]), s(0.5)).unwrap();
        let plant = assemble_preexisting(sub.clone(), env.clone()).unwrap();
        let a = plant.a().unwrap();
        assert_eq!(a.view((0, 0), (2, 2)), sub.a1().view((0, 0), (2, 2)));
        assert_eq!(a[(2, 2)], -1.3);
        assert_eq!(a.view((0, 2), (2, 1)).clone_owned(), sub.l1() * env.gamma2());
        assert_eq!(a.view((2, 0), (1, 2)).clone_owned(), env.l2() * env.gamma1());
    }

    #[test]
    fn unstable_plant_needs_override() {
        let sub = LinearSubsystem::new(s(1.0), s(1.0), s(1.0), s(0.0)).unwrap();
        let env = LinearEnvironment::new(s(-1.0), s(0.0), s(0.0), s(0.0)).unwrap();
        assert!(matches!(assemble_preexisting(sub.clone(), env.clone()), Err(Error::NotHurwitz { .. })));
        let plant = PreexistingSystem::linear(sub, env, AssemblyOptions { allow_unstable: true }).unwrap();
        assert!(!plant.stability().unwrap().hurwitz);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(LinearSubsystem::new(s(-1.0), Matrix::zeros(2, 1), s(1.0), s(1.0)).is_err());
        let sub = LinearSubsystem::new(s(-1.0), s(1.0), s(1.0), Matrix::zeros(1, 2)).unwrap();
        let env = LinearEnvironment::new(s(-2.0), s(1.0), s(1.0), s(1.0)).unwrap();
        assert!(matches!(assemble_preexisting(sub, env), Err(Error::Dimension(_))));
    }

    #[test]
    fn partition_reassembles_global_matrix() {
        let a = Matrix::from_row_slice(3, 3, &[-2.0, 0.5, 0.1, 0.3, -1.0, 0.2, 0.0, 0.4, -3.0]);
        let b = Matrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let (plant, order) =
            PreexistingSystem::from_partition(&a, &b, &[0], &[0], s(1.0), AssemblyOptions::default()).unwrap();
        assert_eq!(order, vec![0, 1, 2]);
        assert!((plant.a().unwrap() - &a).norm() < 1e-14);
    }
}
