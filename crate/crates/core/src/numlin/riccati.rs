use super::lyapunov::LyapunovFactor;
use super::{ensure_finite, ensure_square, is_hurwitz, symmetrize, Matrix};
use crate::error::{Error, Result};

const SIGN_MAX_ITER: usize = 100;
const NEWTON_MAX_ITER: usize = 30;

/// Stabilizing solution of `a^T P + P a - P b r^{-1} b^T P + q = 0`.
///
/// The stable invariant subspace of the Hamiltonian is extracted with the
/// scaled matrix-sign iteration, then polished by Newton-Kleinman steps, each
/// of which is a Lyapunov solve on the current closed loop.
pub fn solve_care(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    ensure_square("a", a)?;
    ensure_square("q", q)?;
    ensure_square("r", r)?;
    if b.nrows() != n || q.nrows() != n || r.nrows() != b.ncols() {
        return Err(Error::dim(format!(
            "a {n}x{n}, b {}x{}, q {}x{}, r {}x{}",
            b.nrows(),
            b.ncols(),
            q.nrows(),
            q.ncols(),
            r.nrows(),
            r.ncols()
        )));
    }
    for (name, m) in [("a", a), ("b", b), ("q", q), ("r", r)] {
        ensure_finite(name, m)?;
    }
    if (q - q.transpose()).norm() > 1e-10 * (1.0 + q.norm()) {
        return Err(Error::Synthesis("q is not symmetric".into()));
    }
    if (r - r.transpose()).norm() > 1e-10 * (1.0 + r.norm()) {
        return Err(Error::Synthesis("r is not symmetric".into()));
    }
    let r_chol = symmetrize(r)
        .cholesky()
        .ok_or_else(|| Error::Synthesis("r is not positive definite".into()))?;
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let q = symmetrize(q);
    let rinv_bt = r_chol.solve(&b.transpose());
    let g = b * &rinv_bt;

    let p0 = sign_function_solution(a, &g, &q).unwrap_or_else(|| Matrix::zeros(n, n));
    newton_kleinman(a, b, &q, r, &rinv_bt, p0)
}

/// State feedback `u = K x` with `K = -r^{-1} b^T P`, so `a + b K` is Hurwitz.
pub fn lqr_gain(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let p = solve_care(a, b, q, r)?;
    let rinv_bt = symmetrize(r)
        .cholesky()
        .ok_or_else(|| Error::Synthesis("r is not positive definite".into()))?
        .solve(&b.transpose());
    Ok(-(rinv_bt * p))
}

/// Frobenius norm of `A^T P + P A - P B R^-1 B^T P + Q`; infinite when `R` is
/// singular.
pub fn care_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> f64 {
    let Some(rinv) = r.clone().try_inverse() else {
        return f64::INFINITY;
    };
    (a.transpose() * p + p * a - p * b * rinv * b.transpose() * p + q).norm()
}

fn sign_function_solution(a: &Matrix, g: &Matrix, q: &Matrix) -> Option<Matrix> {
    let n = a.nrows();
    let mut z = Matrix::zeros(2 * n, 2 * n);
    z.view_mut((0, 0), (n, n)).copy_from(a);
    z.view_mut((0, n), (n, n)).copy_from(&(-g));
    z.view_mut((n, 0), (n, n)).copy_from(&(-q));
    z.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    for _ in 0..SIGN_MAX_ITER {
        let lu = z.clone().lu();
        let log_det: f64 = lu.u().diagonal().iter().map(|v| v.abs().ln()).sum();
        if !log_det.is_finite() {
            return None;
        }
        let zinv = lu.try_inverse()?;
        let c = (-log_det / (2 * n) as f64).exp();
        let next = (&z * c + zinv / c) * 0.5;
        let delta = (&next - &z).norm();
        let scale = next.norm();
        z = next;
        if !scale.is_finite() {
            return None;
        }
        if delta <= 1e-12 * scale {
            break;
        }
    }

    let w11 = z.view((0, 0), (n, n)).clone_owned();
    let w12 = z.view((0, n), (n, n)).clone_owned();
    let w21 = z.view((n, 0), (n, n)).clone_owned();
    let w22 = z.view((n, n), (n, n)).clone_owned();
    let id = Matrix::identity(n, n);
    let mut lhs = Matrix::zeros(2 * n, n);
    lhs.rows_mut(0, n).copy_from(&w12);
    lhs.rows_mut(n, n).copy_from(&(w22 + &id));
    let mut rhs = Matrix::zeros(2 * n, n);
    rhs.rows_mut(0, n).copy_from(&(-(w11 + &id)));
    rhs.rows_mut(n, n).copy_from(&(-w21));
    let p = super::svd(&lhs).solve(&rhs, 1e-13);
    p.iter().all(|v| v.is_finite()).then(|| symmetrize(&p))
}

fn newton_kleinman(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, rinv_bt: &Matrix, p0: Matrix) -> Result<Matrix> {
    let mut p = p0;
    // Best iterate so far; a rising residual means rounding has taken over.
    let mut best: Option<(f64, Matrix)> = None;
    for iter in 0..NEWTON_MAX_ITER {
        let k = rinv_bt * &p;
        let ac = a - b * &k;
        if !is_hurwitz(&ac)?.hurwitz {
            if let Some((_, pb)) = best {
                return Ok(pb);
            }
            return Err(Error::Synthesis(if iter == 0 {
                "no stabilizing Riccati solution (pair not stabilizable or Hamiltonian has imaginary-axis eigenvalues)".into()
            } else {
                "Newton refinement lost stability".into()
            }));
        }
        let factor = LyapunovFactor::new(&ac)?;
        let next = symmetrize(&factor.solve(&(q + k.transpose() * r * &k)));
        let change = (&next - &p).norm();
        p = next;
        let residual = care_residual(a, b, q, r, &p);
        let scale = 1.0 + q.norm() + p.norm();
        if best.as_ref().is_some_and(|(r0, _)| residual >= *r0) {
            break;
        }
        best = Some((residual, p.clone()));
        if change <= 1e-14 * (1.0 + p.norm()) || residual <= 1e-14 * scale {
            break;
        }
    }
    Ok(best.map_or(p, |(_, pb)| pb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn integrator() {
        let p = solve_care(&s(0.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 1.0, epsilon = 1e-12);
        let k = lqr_gain(&s(0.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert_abs_diff_eq!(k[(0, 0)], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn unstable_scalar() {
        let p = solve_care(&s(1.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 1.0 + 2f64.sqrt(), epsilon = 1e-12);
        let k = lqr_gain(&s(1.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert_abs_diff_eq!(k[(0, 0)], -(1.0 + 2f64.sqrt()), epsilon = 1e-12);
    }

    #[test]
    fn unstabilizable_rejected() {
        let err = solve_care(&s(1.0), &s(0.0), &s(1.0), &s(1.0)).unwrap_err();
        assert!(matches!(err, Error::Synthesis(_)));
    }

    #[test]
    fn indefinite_r_rejected() {
        let err = solve_care(&s(1.0), &s(1.0), &s(1.0), &s(-1.0)).unwrap_err();
        assert!(matches!(err, Error::Synthesis(_)));
    }

    #[test]
    fn random_six_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let n = 6;
            let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let b = Matrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
            let g = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let q = &g * g.transpose() + Matrix::identity(n, n) * 0.1;
            let r = Matrix::identity(2, 2);
            let p = solve_care(&a, &b, &q, &r).unwrap();
            let res = care_residual(&a, &b, &q, &r, &p);
            assert!(res <= 1e-8 * (1.0 + q.norm() + p.norm()), "residual {res:e}");
            let k = lqr_gain(&a, &b, &q, &r).unwrap();
            assert!(is_hurwitz(&(&a + &b * &k)).unwrap().hurwitz);
        }
    }
}
