use num_complex::Complex64;

use super::{ensure_finite, real_schur, ensure_square, symmetrize, to_complex, CMatrix, Matrix};
use crate::error::{Error, Result};

/// Complex Schur factorization `a = Q T Q^H` reused across right-hand sides.
pub(crate) struct LyapunovFactor {
    q: CMatrix,
    t: CMatrix,
}

impl LyapunovFactor {
    pub(crate) fn new(a: &Matrix) -> Result<Self> {
        ensure_square("a", a)?;
        ensure_finite("a", a)?;
        let n = a.nrows();
        let (q, t) = complex_schur(a)?;
        let abscissa = (0..n).map(|i| t[(i, i)].re).fold(f64::NEG_INFINITY, f64::max);
        if n > 0 && abscissa >= 0.0 {
            return Err(Error::NoUniqueSolution(format!(
                "Lyapunov operator needs a Hurwitz matrix (spectral abscissa {abscissa:e})"
            )));
        }
        Ok(Self { q, t })
    }

    /// Solves `a^T X + X a + rhs = 0` for a real right-hand side.
    pub(crate) fn solve(&self, rhs: &Matrix) -> Matrix {
        let n = self.t.nrows();
        let c = -(self.q.adjoint() * to_complex(rhs) * &self.q);
        let t = &self.t;
        let mut y = CMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                let mut acc = c[(i, j)];
                for k in 0..i {
                    acc -= t[(k, i)].conj() * y[(k, j)];
                }
                for k in 0..j {
                    acc -= y[(i, k)] * t[(k, j)];
                }
                y[(i, j)] = acc / (t[(i, i)].conj() + t[(j, j)]);
            }
        }
        let x: CMatrix = &self.q * y * self.q.adjoint();
        symmetrize(&x.map(|z: Complex64| z.re))
    }
}

/// Complex Schur form from the real one: each 2x2 diagonal block is
/// triangularized by a unitary rotation built from one of its eigenvectors.
fn complex_schur(a: &Matrix) -> Result<(CMatrix, CMatrix)> {
    let n = a.nrows();
    let (q, t) = real_schur(a)?;
    let mut q = to_complex(&q);
    let mut t = to_complex(&t);
    let mut i = 0;
    while i < n {
        if i + 1 == n || t[(i + 1, i)] == Complex64::new(0.0, 0.0) {
            i += 1;
            continue;
        }
        let (a11, a12, a21, a22) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
        let half = (a11 + a22) * 0.5;
        let disc = ((a11 - a22) * (a11 - a22) * 0.25 + a12 * a21).sqrt();
        let lambda = half + disc;
        // Eigenvector of the block for `lambda`; pick the better-conditioned form.
        let (v1, v2) = if (lambda - a11).norm() + a12.norm() >= (lambda - a22).norm() + a21.norm() {
            (a12, lambda - a11)
        } else {
            (lambda - a22, a21)
        };
        let nrm = (v1.norm_sqr() + v2.norm_sqr()).sqrt();
        let (c, s) = (v1 / nrm, v2 / nrm);
        // U = [[c, -conj(s)], [s, conj(c)]]; T <- U^H T U on rows/cols i, i+1.
        for k in 0..n {
            let (x, y) = (t[(i, k)], t[(i + 1, k)]);
            t[(i, k)] = c.conj() * x + s.conj() * y;
            t[(i + 1, k)] = -s * x + c * y;
        }
        for k in 0..n {
            let (x, y) = (t[(k, i)], t[(k, i + 1)]);
            t[(k, i)] = x * c + y * s;
            t[(k, i + 1)] = -x * s.conj() + y * c.conj();
        }
        for k in 0..n {
            let (x, y) = (q[(k, i)], q[(k, i + 1)]);
            q[(k, i)] = x * c + y * s;
            q[(k, i + 1)] = -x * s.conj() + y * c.conj();
        }
        t[(i + 1, i)] = Complex64::new(0.0, 0.0);
        i += 2;
    }
    Ok((q, t))
}

/// Solves `a^T X + X a + q = 0` for Hurwitz `a` and symmetric `q`.
///
/// Bartels-Stewart on the complex Schur form followed by one step of
/// residual correction.
pub fn solve_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    ensure_square("q", q)?;
    if q.nrows() != a.nrows() {
        return Err(Error::dim(format!("a is {}x{}, q is {}x{}", a.nrows(), a.ncols(), q.nrows(), q.ncols())));
    }
    ensure_finite("q", q)?;
    if a.nrows() == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let factor = LyapunovFactor::new(a)?;
    let q = symmetrize(q);
    let mut x = factor.solve(&q);
    let residual = a.transpose() * &x + &x * a + &q;
    x += factor.solve(&residual);
    Ok(x)
}

/// Frobenius norm of `A^T X + X A + Q`.
pub fn lyapunov_residual(a: &Matrix, q: &Matrix, x: &Matrix) -> f64 {
    (a.transpose() * x + x * a + q).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::Vector;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn complex_schur_is_triangular_and_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [2, 5, 12] {
            let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let (q, t) = complex_schur(&a).unwrap();
            for i in 0..n {
                for j in 0..i {
                    assert!(t[(i, j)].norm() < 1e-12);
                }
            }
            let eye = CMatrix::identity(n, n);
            assert!((q.adjoint() * &q - eye).norm() < 1e-12);
            assert!((&q * &t * q.adjoint() - to_complex(&a)).norm() < 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn scalar() {
        let x = solve_lyapunov(&Matrix::from_element(1, 1, -1.0), &Matrix::from_element(1, 1, 2.0)).unwrap();
        assert_abs_diff_eq!(x[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn negative_identity() {
        let a = -Matrix::identity(2, 2);
        let x = solve_lyapunov(&a, &Matrix::identity(2, 2)).unwrap();
        assert!((x - Matrix::identity(2, 2) * 0.5).norm() < 1e-14);
    }

    #[test]
    fn unstable_rejected() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, 0.5]));
        assert!(matches!(solve_lyapunov(&a, &Matrix::identity(2, 2)), Err(Error::NoUniqueSolution(_))));
    }

    #[test]
    fn random_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=10 {
            let mut a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let shift = crate::numlin::spectral_abscissa(&a).unwrap() + 0.1;
            a -= Matrix::identity(n, n) * shift.max(0.0);
            let g = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let q = &g * g.transpose();
            let x = solve_lyapunov(&a, &q).unwrap();
            let res = lyapunov_residual(&a, &q, &x);
            assert!(res <= 1e-8 * (1.0 + q.norm()), "n={n} residual {res:e}");
            assert!((&x - x.transpose()).norm() < 1e-12 * (1.0 + x.norm()));
        }
    }
}
