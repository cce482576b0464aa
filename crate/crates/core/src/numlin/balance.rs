use nalgebra::SymmetricEigen;

use super::{is_hurwitz, solve_lyapunov, svd, symmetrize, Matrix, StateSpace};
use crate::error::{Error, Result};

/// Controllability and observability gramians of a stable system.
#[derive(Clone, Debug)]
pub struct GramianPair {
    pub controllability: Matrix,
    pub observability: Matrix,
}

pub fn gramians(sys: &StateSpace) -> Result<GramianPair> {
    let st = is_hurwitz(&sys.a)?;
    if !st.hurwitz {
        return Err(Error::Reduction(format!("unstable system (spectral abscissa {:e})", st.abscissa)));
    }
    let controllability = solve_lyapunov(&sys.a.transpose(), &(&sys.b * sys.b.transpose()))?;
    let observability = solve_lyapunov(&sys.a, &(sys.c.transpose() * &sys.c))?;
    Ok(GramianPair { controllability, observability })
}

/// Symmetric PSD square-root factor `f` with `w = f f^T` (negative eigenvalues clipped).
fn psd_factor(w: &Matrix) -> Matrix {
    let eig = SymmetricEigen::new(symmetrize(w));
    let n = w.nrows();
    Matrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt())
}

struct BalancingSvd {
    r: Matrix,
    s: Matrix,
    u: Matrix,
    v: Matrix,
    sigma: Vec<f64>,
}

fn balancing_svd(sys: &StateSpace) -> Result<BalancingSvd> {
    let g = gramians(sys)?;
    let r = psd_factor(&g.controllability);
    let s = psd_factor(&g.observability);
    let d = svd(&(s.transpose() * &r));
    Ok(BalancingSvd { u: d.u, v: d.v, sigma: d.s, r, s })
}

/// Hankel singular values in descending order.
pub fn hankel_singular_values(sys: &StateSpace) -> Result<Vec<f64>> {
    if sys.order() == 0 {
        return Ok(Vec::new());
    }
    Ok(balancing_svd(sys)?.sigma)
}

/// Result of balanced truncation.
#[derive(Clone, Debug)]
pub struct BalancedReduction {
    /// `(left a right, left b, c right, d)`.
    pub reduced: StateSpace,
    /// `n x r` right projector.
    pub right: Matrix,
    /// `r x n` left projector with `left * right = I_r`.
    pub left: Matrix,
    /// All Hankel singular values, descending.
    pub hankel: Vec<f64>,
}

impl BalancedReduction {
    pub fn discarded_hankel_sum(&self) -> f64 {
        self.hankel[self.right.ncols()..].iter().sum()
    }
}

/// Square-root balanced truncation to order `r`.
pub fn balanced_truncation(sys: &StateSpace, r: usize) -> Result<BalancedReduction> {
    let n = sys.order();
    if r == 0 || r > n {
        return Err(Error::dim(format!("reduced order {r} must lie in 1..={n}")));
    }
    let bal = balancing_svd(sys)?;
    let top = bal.sigma[0];
    if !(top > 0.0) || bal.sigma[r - 1] <= 1e-13 * top {
        return Err(Error::Reduction(format!(
            "Hankel singular value {} is numerically zero; order {r} exceeds the minimal order",
            r
        )));
    }
    let inv_sqrt: Vec<f64> = bal.sigma[..r].iter().map(|s| 1.0 / s.sqrt()).collect();
    let right = Matrix::from_fn(n, r, |i, k| (&bal.r * bal.v.column(k))[i] * inv_sqrt[k]);
    let st_u = bal.s.clone() * bal.u.columns(0, r);
    let left = Matrix::from_fn(r, n, |k, j| st_u[(j, k)] * inv_sqrt[k]);
    let reduced = StateSpace::new(&left * &sys.a * &right, &left * &sys.b, &sys.c * &right, sys.d.clone())?;
    Ok(BalancedReduction { reduced, right, left, hankel: bal.sigma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::{hinf_norm, Vector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stable(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> StateSpace {
        let mut a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let shift = crate::numlin::spectral_abscissa(&a).unwrap() + 0.3;
        a -= Matrix::identity(n, n) * shift.max(0.0);
        let b = Matrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let c = Matrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
        StateSpace::strictly_proper(a, b, c).unwrap()
    }

    #[test]
    fn full_order_preserves_transfer_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = random_stable(&mut rng, 5, 2, 2);
        let red = balanced_truncation(&sys, 5).unwrap();
        assert!((&red.left * &red.right - Matrix::identity(5, 5)).norm() < 1e-8);
        let gap = hinf_norm(&sys.difference(&red.reduced).unwrap(), 1e-10).unwrap();
        assert!(gap <= 1e-8, "gap {gap:e}");
    }

    #[test]
    fn unreachable_state_truncated_exactly() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, -2.0, -3.0]));
        let b = Matrix::from_row_slice(3, 1, &[1.0, 1.0, 0.0]);
        let c = Matrix::from_row_slice(1, 3, &[1.0, 2.0, 1.0]);
        let sys = StateSpace::strictly_proper(a, b, c).unwrap();
        let red = balanced_truncation(&sys, 2).unwrap();
        assert!(red.hankel[2] < 1e-12);
        let gap = hinf_norm(&sys.difference(&red.reduced).unwrap(), 1e-10).unwrap();
        assert!(gap <= 1e-8, "gap {gap:e}");
    }

    #[test]
    fn order_out_of_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sys = random_stable(&mut rng, 3, 1, 1);
        assert!(matches!(balanced_truncation(&sys, 4), Err(Error::Dimension(_))));
        assert!(matches!(balanced_truncation(&sys, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn hankel_values_are_similarity_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sys = random_stable(&mut rng, 6, 2, 1);
        let h0 = hankel_singular_values(&sys).unwrap();
        for _ in 0..2 {
            let t = Matrix::from_fn(6, 6, |i, j| if i == j { 2.0 } else { 0.0 } + rng.random_range(-0.5..0.5));
            let h1 = hankel_singular_values(&sys.similarity(&t).unwrap()).unwrap();
            for (x, y) in h0.iter().zip(&h1) {
                assert!((x - y).abs() <= 1e-8 * (1.0 + x), "{x} vs {y}");
            }
        }
    }
}
