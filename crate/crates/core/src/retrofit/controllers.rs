use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hierarchy::ProjectionPair;
use crate::io::matrix_rows;
use crate::numlin::{Matrix, Vector};
use crate::sysmodel::{Binding, Controller, ControllerRealization, LinearSubsystem, NonlinearResidual, PreexistingSystem};

/// `x̂' = A1 x̂ + L1 gamma2`, `u1 = K1 (y1 - C1 x̂)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrofitOutputFeedback {
    #[serde(with = "matrix_rows")]
    pub comp_a: Matrix,
    #[serde(with = "matrix_rows")]
    pub comp_l: Matrix,
    #[serde(with = "matrix_rows")]
    pub c1: Matrix,
    #[serde(with = "matrix_rows")]
    pub k1: Matrix,
}

impl RetrofitOutputFeedback {
    pub(crate) fn new(sub: &LinearSubsystem, k1: Matrix) -> Self {
        Self { comp_a: sub.a1().clone(), comp_l: sub.l1().clone(), c1: sub.c1().clone(), k1 }
    }

    pub fn local_loop(&self, b1: &Matrix) -> Matrix {
        &self.comp_a + b1 * &self.k1 * &self.c1
    }
}

impl Controller for RetrofitOutputFeedback {
    fn state_dim(&self) -> usize {
        self.comp_a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.k1.nrows()
    }
    fn measurement_dim(&self) -> usize {
        self.c1.nrows()
    }
    fn gamma_dim(&self) -> usize {
        self.comp_l.ncols()
    }
    fn derivative(&self, z: &Vector, _y: &Vector, gamma: &Vector) -> Vector {
        &self.comp_a * z + &self.comp_l * gamma
    }
    fn output(&self, z: &Vector, y: &Vector, _gamma: &Vector) -> Vector {
        &self.k1 * (y - &self.c1 * z)
    }
    fn realization(&self) -> Option<ControllerRealization> {
        let (n, m, p) = (self.state_dim(), self.input_dim(), self.measurement_dim());
        Some(ControllerRealization {
            a: self.comp_a.clone(),
            b_y: Matrix::zeros(n, p),
            b_gamma: self.comp_l.clone(),
            c: -&self.k1 * &self.c1,
            d_y: self.k1.clone(),
            d_gamma: Matrix::zeros(m, self.gamma_dim()),
        })
    }
}

/// Compensator `x̂` as in the output-feedback form plus the observer
/// `zeta' = A1 zeta + B1 u1 + H1 (y1 - C1 x̂ - C1 zeta)`, `u1 = F1 zeta`.
/// State layout `[x̂; zeta]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrofitObserverBased {
    #[serde(with = "matrix_rows")]
    pub comp_a: Matrix,
    #[serde(with = "matrix_rows")]
    pub comp_l: Matrix,
    #[serde(with = "matrix_rows")]
    pub b1: Matrix,
    #[serde(with = "matrix_rows")]
    pub c1: Matrix,
    #[serde(with = "matrix_rows")]
    pub f1: Matrix,
    #[serde(with = "matrix_rows")]
    pub h1: Matrix,
}

impl RetrofitObserverBased {
    pub(crate) fn new(sub: &LinearSubsystem, f1: Matrix, h1: Matrix) -> Self {
        Self {
            comp_a: sub.a1().clone(),
            comp_l: sub.l1().clone(),
            b1: sub.b1().clone(),
            c1: sub.c1().clone(),
            f1,
            h1,
        }
    }

    /// Local loop on `(xi_hat, zeta)`.
    pub fn local_loop(&self) -> Matrix {
        let n = self.comp_a.nrows();
        let mut a = Matrix::zeros(2 * n, 2 * n);
        a.view_mut((0, 0), (n, n)).copy_from(&self.comp_a);
        a.view_mut((0, n), (n, n)).copy_from(&(&self.b1 * &self.f1));
        a.view_mut((n, 0), (n, n)).copy_from(&(&self.h1 * &self.c1));
        a.view_mut((n, n), (n, n)).copy_from(&self.observer_matrix());
        a
    }

    fn observer_matrix(&self) -> Matrix {
        &self.comp_a + &self.b1 * &self.f1 - &self.h1 * &self.c1
    }
}

impl Controller for RetrofitObserverBased {
    fn state_dim(&self) -> usize {
        2 * self.comp_a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.f1.nrows()
    }
    fn measurement_dim(&self) -> usize {
        self.c1.nrows()
    }
    fn gamma_dim(&self) -> usize {
        self.comp_l.ncols()
    }
    fn derivative(&self, z: &Vector, y: &Vector, gamma: &Vector) -> Vector {
        let n = self.comp_a.nrows();
        let (xh, zeta) = (z.rows(0, n), z.rows(n, n));
        let dx = &self.comp_a * xh + &self.comp_l * gamma;
        let innov = y - &self.c1 * (xh + zeta);
        let dz = &self.comp_a * zeta + &self.b1 * (&self.f1 * zeta) + &self.h1 * innov;
        let mut out = Vector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&dx);
        out.rows_mut(n, n).copy_from(&dz);
        out
    }
    fn output(&self, z: &Vector, _y: &Vector, _gamma: &Vector) -> Vector {
        let n = self.comp_a.nrows();
        &self.f1 * z.rows(n, n)
    }
    fn realization(&self) -> Option<ControllerRealization> {
        let (n, m, p, q) = (self.comp_a.nrows(), self.input_dim(), self.measurement_dim(), self.gamma_dim());
        let mut a = Matrix::zeros(2 * n, 2 * n);
        a.view_mut((0, 0), (n, n)).copy_from(&self.comp_a);
        a.view_mut((n, 0), (n, n)).copy_from(&(-&self.h1 * &self.c1));
        a.view_mut((n, n), (n, n)).copy_from(&self.observer_matrix());
        let mut b_y = Matrix::zeros(2 * n, p);
        b_y.view_mut((n, 0), (n, p)).copy_from(&self.h1);
        let mut b_gamma = Matrix::zeros(2 * n, q);
        b_gamma.view_mut((0, 0), (n, q)).copy_from(&self.comp_l);
        let mut c = Matrix::zeros(m, 2 * n);
        c.view_mut((0, n), (m, n)).copy_from(&self.f1);
        Some(ControllerRealization { a, b_y, b_gamma, c, d_y: Matrix::zeros(m, p), d_gamma: Matrix::zeros(m, q) })
    }
}

/// `x̂' = P1dag A1 P1 x̂ + P1dag A1 P1bar P1bardag x1 [+ P1dag f1(x1)]`,
/// `u1 = K̂1 (P1dag x1 - x̂)`. Measures the full local state. With the identity
/// projection the compensator also reads `gamma2` and reduces to the
/// output-feedback form with `C1 = I`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RetrofitStateFeedback {
    pub proj: ProjectionPair,
    #[serde(with = "matrix_rows")]
    pub khat: Matrix,
    #[serde(with = "matrix_rows")]
    comp_a: Matrix,
    #[serde(with = "matrix_rows")]
    comp_drive: Matrix,
    /// `P1dag L1`; empty unless the projection is the identity.
    #[serde(with = "matrix_rows")]
    comp_l: Matrix,
    #[serde(skip)]
    residual: Option<NonlinearResidual>,
}

impl RetrofitStateFeedback {
    pub(crate) fn new(sub: &LinearSubsystem, proj: ProjectionPair, khat: Matrix, residual: Option<NonlinearResidual>) -> Self {
        let comp_a = proj.p1dag() * sub.a1() * proj.p1();
        let comp_drive = proj.p1dag() * sub.a1() * proj.complement_projector();
        let comp_l = if proj.is_identity() { sub.l1().clone() } else { Matrix::zeros(proj.nhat(), 0) };
        Self { proj, khat, comp_a, comp_drive, comp_l, residual }
    }

    pub fn comp_a(&self) -> &Matrix {
        &self.comp_a
    }
    pub fn has_residual(&self) -> bool {
        self.residual.is_some()
    }

    pub fn local_loop(&self, b1: &Matrix) -> Matrix {
        &self.comp_a + self.proj.p1dag() * b1 * &self.khat
    }
}

impl Controller for RetrofitStateFeedback {
    fn state_dim(&self) -> usize {
        self.proj.nhat()
    }
    fn input_dim(&self) -> usize {
        self.khat.nrows()
    }
    fn measurement_dim(&self) -> usize {
        self.proj.n1()
    }
    fn gamma_dim(&self) -> usize {
        self.comp_l.ncols()
    }
    fn derivative(&self, z: &Vector, y: &Vector, gamma: &Vector) -> Vector {
        let mut dz = &self.comp_a * z + &self.comp_drive * y + &self.comp_l * gamma;
        if let Some(f) = &self.residual {
            dz += self.proj.p1dag() * f.eval(y);
        }
        dz
    }
    fn output(&self, z: &Vector, y: &Vector, _gamma: &Vector) -> Vector {
        &self.khat * (self.proj.p1dag() * y - z)
    }
    fn realization(&self) -> Option<ControllerRealization> {
        if self.residual.is_some() {
            return None;
        }
        Some(ControllerRealization {
            a: self.comp_a.clone(),
            b_y: self.comp_drive.clone(),
            b_gamma: self.comp_l.clone(),
            c: -&self.khat,
            d_y: &self.khat * self.proj.p1dag(),
            d_gamma: Matrix::zeros(self.input_dim(), self.gamma_dim()),
        })
    }
}

/// Tagged union used for JSON export and uniform binding.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum RetrofitController {
    OutputFeedback(RetrofitOutputFeedback),
    Observer(RetrofitObserverBased),
    StateFeedback(RetrofitStateFeedback),
}

impl RetrofitController {
    pub fn as_controller(&self) -> Arc<dyn Controller> {
        match self {
            RetrofitController::OutputFeedback(c) => Arc::new(c.clone()),
            RetrofitController::Observer(c) => Arc::new(c.clone()),
            RetrofitController::StateFeedback(c) => Arc::new(c.clone()),
        }
    }

    /// Attaches the controller to `plant`: output-feedback forms read
    /// `y1 = C1 x1` and `gamma2`, the state-feedback form reads `x1`.
    pub fn bind(&self, plant: &PreexistingSystem) -> Result<Binding> {
        let n1 = plant.n1();
        match self {
            RetrofitController::OutputFeedback(c) => plant.binding(self.as_controller(), &c.c1, true),
            RetrofitController::Observer(c) => plant.binding(self.as_controller(), &c.c1, true),
            RetrofitController::StateFeedback(c) => {
                plant.binding(self.as_controller(), &Matrix::identity(n1, n1), c.gamma_dim() > 0)
            }
        }
    }

    /// Local loop matrix, the injection map from `delta0` to its initial
    /// state, and the selector of the upstream signal fed to the downstream
    /// system.
    pub fn local_loop(&self, b1: &Matrix) -> (Matrix, Matrix, Matrix) {
        match self {
            RetrofitController::OutputFeedback(c) => {
                let n = c.comp_a.nrows();
                (c.local_loop(b1), Matrix::identity(n, n), Matrix::identity(n, n))
            }
            RetrofitController::Observer(c) => {
                let n = c.comp_a.nrows();
                let inject = Matrix::identity(2 * n, n);
                (c.local_loop(), inject, Matrix::identity(n, 2 * n))
            }
            RetrofitController::StateFeedback(c) => {
                let nh = c.proj.nhat();
                (c.local_loop(b1), c.proj.p1dag().clone(), Matrix::identity(nh, nh))
            }
        }
    }

    pub fn projection(&self) -> Option<&ProjectionPair> {
        match self {
            RetrofitController::StateFeedback(c) => Some(&c.proj),
            _ => None,
        }
    }
}

/// `u1 = K1 y1` with no compensator.
#[derive(Clone, Debug)]
pub struct NaiveStatic {
    pub k1: Matrix,
}

impl Controller for NaiveStatic {
    fn state_dim(&self) -> usize {
        0
    }
    fn input_dim(&self) -> usize {
        self.k1.nrows()
    }
    fn measurement_dim(&self) -> usize {
        self.k1.ncols()
    }
    fn gamma_dim(&self) -> usize {
        0
    }
    fn derivative(&self, _z: &Vector, _y: &Vector, _g: &Vector) -> Vector {
        Vector::zeros(0)
    }
    fn output(&self, _z: &Vector, y: &Vector, _g: &Vector) -> Vector {
        &self.k1 * y
    }
    fn realization(&self) -> Option<ControllerRealization> {
        let (m, p) = (self.input_dim(), self.measurement_dim());
        Some(ControllerRealization {
            a: Matrix::zeros(0, 0),
            b_y: Matrix::zeros(0, p),
            b_gamma: Matrix::zeros(0, 0),
            c: Matrix::zeros(m, 0),
            d_y: self.k1.clone(),
            d_gamma: Matrix::zeros(m, 0),
        })
    }
}

/// Observer-based law `zeta' = A1 zeta + B1 u1 + H1 (y1 - C1 zeta)`,
/// `u1 = F1 zeta`, designed on the isolated model but without the
/// localizing compensator.
#[derive(Clone, Debug)]
pub struct NaiveObserver {
    a: Matrix,
    b_y: Matrix,
    f1: Matrix,
}

impl NaiveObserver {
    pub fn new(sub: &LinearSubsystem, f1: &Matrix, h1: &Matrix) -> Self {
        Self { a: sub.a1() + sub.b1() * f1 - h1 * sub.c1(), b_y: h1.clone(), f1: f1.clone() }
    }
}

impl Controller for NaiveObserver {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.f1.nrows()
    }
    fn measurement_dim(&self) -> usize {
        self.b_y.ncols()
    }
    fn gamma_dim(&self) -> usize {
        0
    }
    fn derivative(&self, z: &Vector, y: &Vector, _g: &Vector) -> Vector {
        &self.a * z + &self.b_y * y
    }
    fn output(&self, z: &Vector, _y: &Vector, _g: &Vector) -> Vector {
        &self.f1 * z
    }
    fn realization(&self) -> Option<ControllerRealization> {
        let (n, m, p) = (self.state_dim(), self.input_dim(), self.measurement_dim());
        Some(ControllerRealization {
            a: self.a.clone(),
            b_y: self.b_y.clone(),
            b_gamma: Matrix::zeros(n, 0),
            c: self.f1.clone(),
            d_y: Matrix::zeros(m, p),
            d_gamma: Matrix::zeros(m, 0),
        })
    }
}

/// `u1 = K̂1 P1dag x1`: projected state feedback without the compensator.
#[derive(Clone, Debug)]
pub struct NaiveProjected {
    gain: Matrix,
}

impl NaiveProjected {
    pub fn new(proj: &ProjectionPair, khat: &Matrix) -> Self {
        Self { gain: khat * proj.p1dag() }
    }
}

impl Controller for NaiveProjected {
    fn state_dim(&self) -> usize {
        0
    }
    fn input_dim(&self) -> usize {
        self.gain.nrows()
    }
    fn measurement_dim(&self) -> usize {
        self.gain.ncols()
    }
    fn gamma_dim(&self) -> usize {
        0
    }
    fn derivative(&self, _z: &Vector, _y: &Vector, _g: &Vector) -> Vector {
        Vector::zeros(0)
    }
    fn output(&self, _z: &Vector, y: &Vector, _g: &Vector) -> Vector {
        &self.gain * y
    }
    fn realization(&self) -> Option<ControllerRealization> {
        NaiveStatic { k1: self.gain.clone() }.realization()
    }
}
