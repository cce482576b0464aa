use std::sync::Arc;

use super::closed_loop::PlantField;
use super::LocalMap;
use crate::error::{Error, Result};
use crate::numlin::{ensure_finite, Matrix, Vector};

/// Relative central-difference step; coordinate `i` uses `h (1 + |x_i|)`.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Central-difference Jacobian of `f` at `x`.
pub fn jacobian(f: &dyn Fn(&Vector) -> Vector, x: &Vector, step: f64) -> Result<Matrix> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let f0 = f(x);
    let mut jac = Matrix::zeros(f0.len(), x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let h = step * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        if fp.len() != f0.len() || fm.len() != f0.len() {
            return Err(Error::dim("map output length changed between evaluations"));
        }
        jac.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    ensure_finite("jacobian", &jac)?;
    Ok(jac)
}

/// Linear part of `x' = F(x, u)` about `(x_op, u_op)` plus the neglected
/// remainder.
#[derive(Clone)]
pub struct Linearization {
    pub a: Matrix,
    pub b: Matrix,
    /// `F(x_op, u_op)`; zero at an equilibrium.
    pub drift: Vector,
    /// `dx -> F(x_op + dx, u_op) - F(x_op, u_op) - a dx`, exactly zero at `dx = 0`.
    pub residual: LocalMap,
}

impl std::fmt::Debug for Linearization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Linearization").field("a", &self.a).field("b", &self.b).field("drift", &self.drift).finish()
    }
}

pub fn linearize(field: PlantField, x_op: &Vector, u_op: &Vector, step: f64) -> Result<Linearization> {
    let drift = field(x_op, u_op);
    if drift.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("vector field at the operating point".into()));
    }
    let a = jacobian(&|x: &Vector| field(x, u_op), x_op, step)?;
    let b = jacobian(&|u: &Vector| field(x_op, u), u_op, step)?;
    let (xo, uo, f0, a_res) = (x_op.clone(), u_op.clone(), drift.clone(), a.clone());
    let residual: LocalMap = Arc::new(move |dx: &Vector| field(&(&xo + dx), &uo) - &f0 - &a_res * dx);
    Ok(Linearization { a, b, drift, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_linear_map() {
        let a = Matrix::from_row_slice(2, 2, &[1.5, -2.0, 0.25, 3.0]);
        let b = Matrix::from_row_slice(2, 1, &[0.5, -1.0]);
        let (fa, fb) = (a.clone(), b.clone());
        let lin = linearize(
            Arc::new(move |x: &Vector, u: &Vector| &fa * x + &fb * u),
            &Vector::from_vec(vec![0.3, -0.7]),
            &Vector::zeros(1),
            DEFAULT_FD_STEP,
        )
        .unwrap();
        assert!((lin.a - a).norm() < 1e-8);
        assert!((lin.b - b).norm() < 1e-8);
    }

    #[test]
    fn tanh_slope_and_residual() {
        let lin = linearize(
            Arc::new(|x: &Vector, _u: &Vector| x.map(f64::tanh)),
            &Vector::zeros(1),
            &Vector::zeros(0),
            DEFAULT_FD_STEP,
        )
        .unwrap();
        assert!((lin.a[(0, 0)] - 1.0).abs() < 1e-8);
        assert_eq!((lin.residual)(&Vector::zeros(1))[0], 0.0);
        let r = (lin.residual)(&Vector::from_element(1, 0.5))[0];
        assert!((r - (0.5f64.tanh() - lin.a[(0, 0)] * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_rejected() {
        let err = linearize(
            Arc::new(|x: &Vector, _u: &Vector| x.map(|v| 1.0 / v)),
            &Vector::zeros(1),
            &Vector::zeros(0),
            DEFAULT_FD_STEP,
        );
        assert!(err.is_err());
    }
}
