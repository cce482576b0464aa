//! One-sided Jacobi SVD.
//!
//! Used instead of `nalgebra::SVD`, whose Golub-Kahan implementation can
//! return inaccurate factors for rank-deficient inputs. Jacobi rotations give
//! small singular values with high relative accuracy at the sizes used here.

use super::{Matrix, Vector};

const MAX_SWEEPS: usize = 80;

/// Thin SVD `a = u diag(s) v^T` with `s` descending, `u` (m x k) and `v`
/// (n x k) orthonormal, `k = min(m, n)`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

pub fn svd(a: &Matrix) -> Svd {
    let (m, n) = (a.nrows(), a.ncols());
    if m < n {
        let t = svd(&a.transpose());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    if n == 0 {
        return Svd { u: Matrix::zeros(m, 0), s: Vec::new(), v: Matrix::zeros(0, 0) };
    }
    let mut g = a.clone();
    let mut v = Matrix::identity(n, n);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = g.column(p).norm_squared();
                let beta = g.column(q).norm_squared();
                let gamma = g.column(p).dot(&g.column(q));
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut g, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| g.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let top = s[0];
    let mut cols: Vec<Vector> = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        if s[k] > f64::MIN_POSITIVE && s[k] > 1e-300 * top.max(1.0) {
            cols.push(g.column(j) / s[k]);
        } else {
            cols.push(completion(&cols, m));
        }
    }
    let u = Matrix::from_columns(&cols);
    let v = Matrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    Svd { u, s, v }
}

fn rotate(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

/// A unit vector orthogonal to `cols`.
fn completion(cols: &[Vector], m: usize) -> Vector {
    let mut best = Vector::zeros(m);
    let mut best_norm = 0.0;
    for e in 0..m {
        let mut v = Vector::zeros(m);
        v[e] = 1.0;
        for _ in 0..2 {
            for c in cols {
                let d = c.dot(&v);
                v -= c * d;
            }
        }
        let nrm = v.norm();
        if nrm > best_norm {
            best_norm = nrm;
            best = v / nrm;
        }
        if best_norm > 0.5 {
            break;
        }
    }
    best
}

impl Svd {
    /// Minimum-norm least-squares solution, treating singular values below
    /// `rcond * s_max` as zero.
    pub fn solve(&self, rhs: &Matrix, rcond: f64) -> Matrix {
        let top = self.s.first().copied().unwrap_or(0.0);
        let mut out = Matrix::zeros(self.v.nrows(), rhs.ncols());
        for (k, &sk) in self.s.iter().enumerate() {
            if sk > rcond * top && sk > 0.0 {
                let coef = self.u.column(k).transpose() * rhs / sk;
                out += self.v.column(k) * coef;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check(a: &Matrix) {
        let d = svd(a);
        let k = a.nrows().min(a.ncols());
        assert_eq!(d.s.len(), k);
        let sigma = Matrix::from_diagonal(&Vector::from_vec(d.s.clone()));
        let rec = &d.u * sigma * d.v.transpose();
        assert!((rec - a).norm() <= 1e-13 * (1.0 + a.norm()));
        assert!((d.u.transpose() * &d.u - Matrix::identity(k, k)).norm() < 1e-12);
        assert!((d.v.transpose() * &d.v - Matrix::identity(k, k)).norm() < 1e-12);
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (m, n) in [(1, 1), (3, 3), (6, 2), (2, 6), (10, 10)] {
            check(&Matrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0)));
        }
    }

    #[test]
    fn rank_deficient_projector() {
        // I - H for an oblique projector H of rank 2 in R^4; the default
        // Golub-Kahan SVD returned factors off by 2e-2 on this matrix.
        let c = [
            0.019041383242856535, 0.008007437584703903, -0.13206054774960685, 0.11914822475273093,
            0.19309364748127159, 0.5944948731184807, -0.1981117736032279, -0.13058006068326117,
            -0.27242824591162923, -0.7085342223117399, 0.5689836933595875, -0.15541199106356357,
            -0.1581592993082031, -0.7593468839309644, -0.4433072040366263, 0.8174800502790752,
        ];
        let a = Matrix::from_column_slice(4, 4, &c);
        check(&a);
        check(&a.transpose());
        let d = svd(&a);
        assert!(d.s[2] < 1e-14 && d.s[3] < 1e-14);
    }

    #[test]
    fn zero_and_rank_one() {
        check(&Matrix::zeros(3, 2));
        let x = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        check(&(&x * x.transpose()));
    }

    #[test]
    fn least_squares() {
        let a = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = Matrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let x = svd(&a).solve(&b, 1e-13);
        assert!((x - Matrix::from_row_slice(2, 1, &[1.0, 2.0])).norm() < 1e-14);
    }
}
