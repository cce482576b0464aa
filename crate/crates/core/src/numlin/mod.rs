//! Dense real-matrix numerics: spectra, Lyapunov and Riccati solvers, system
//! norms, gramians and balanced truncation.
//!
//! Sign convention for state feedback is `u = K x` throughout, so a gain
//! returned by [`lqr_gain`] stabilizes `a + b K`.

mod balance;
mod lyapunov;
mod norms;
mod riccati;
mod svd;

pub use balance::{balanced_truncation, gramians, hankel_singular_values, BalancedReduction, GramianPair};
pub use lyapunov::{lyapunov_residual, solve_lyapunov};
pub use norms::{h2_norm, hinf_norm, hinf_norm_default, ic_response_l2, ic_response_l2_sup, ic_response_l2_sup_on, sigma_max_at, HINF_DEFAULT_TOL};
pub use riccati::{care_residual, lqr_gain, solve_care};
pub use svd::{svd, Svd};

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMatrix = DMatrix<Complex64>;

/// Relative threshold used for all rank decisions.
pub const RANK_TOL: f64 = 1e-9;

/// Stability verdict for a square matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stability {
    pub hurwitz: bool,
    /// Largest real part over the spectrum.
    pub abscissa: f64,
}

/// Continuous-time LTI system `x' = a x + b u`, `y = c x + d u`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
}

impl StateSpace {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dim(format!("a is {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n || c.ncols() != n {
            return Err(Error::dim(format!(
                "a is {n}x{n} but b is {}x{} and c is {}x{}",
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::dim(format!(
                "d is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        for (name, m) in [("a", &a), ("b", &b), ("c", &c), ("d", &d)] {
            ensure_finite(name, m)?;
        }
        Ok(Self { a, b, c, d })
    }

    /// Strictly proper system (`d = 0`).
    pub fn strictly_proper(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let d = Matrix::zeros(c.nrows(), b.ncols());
        Self::new(a, b, c, d)
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// State coordinates `x = t z`; the transfer function is unchanged.
    pub fn similarity(&self, t: &Matrix) -> Result<Self> {
        let tinv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NoUniqueSolution("singular similarity transform".into()))?;
        Self::new(&tinv * &self.a * t, &tinv * &self.b, &self.c * t, self.d.clone())
    }

    /// Realization of `self - other` (parallel connection with negated output).
    pub fn difference(&self, other: &StateSpace) -> Result<Self> {
        if self.inputs() != other.inputs() || self.outputs() != other.outputs() {
            return Err(Error::dim("difference of systems with different port counts"));
        }
        let (n1, n2) = (self.order(), other.order());
        let mut a = Matrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&other.a);
        let mut b = Matrix::zeros(n1 + n2, self.inputs());
        b.rows_mut(0, n1).copy_from(&self.b);
        b.rows_mut(n1, n2).copy_from(&other.b);
        let mut c = Matrix::zeros(self.outputs(), n1 + n2);
        c.columns_mut(0, n1).copy_from(&self.c);
        c.columns_mut(n1, n2).copy_from(&(-&other.c));
        Self::new(a, b, c, &self.d - &other.d)
    }

    /// Frequency response `c (s I - a)^{-1} b + d`.
    pub fn eval(&self, s: Complex64) -> Result<CMatrix> {
        let n = self.order();
        let d = to_complex(&self.d);
        if n == 0 {
            return Ok(d);
        }
        let mut m = to_complex(&self.a) * Complex64::new(-1.0, 0.0);
        for i in 0..n {
            m[(i, i)] += s;
        }
        let x = m
            .lu()
            .solve(&to_complex(&self.b))
            .ok_or_else(|| Error::NoUniqueSolution(format!("s = {s} is a pole")))?;
        Ok(to_complex(&self.c) * x + d)
    }

    /// Static gain `d - c a^{-1} b`.
    pub fn dc_gain(&self) -> Result<Matrix> {
        if self.order() == 0 {
            return Ok(self.d.clone());
        }
        let x = self
            .a
            .clone()
            .lu()
            .solve(&self.b)
            .ok_or_else(|| Error::NoUniqueSolution("a is singular".into()))?;
        Ok(&self.d - &self.c * x)
    }
}

pub(crate) fn to_complex(m: &Matrix) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn ensure_finite(name: &str, m: &Matrix) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("matrix {name} has non-finite entries")))
    }
}

pub(crate) fn ensure_square(name: &str, m: &Matrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::dim(format!("{name} must be square, got {}x{}", m.nrows(), m.ncols())))
    }
}

/// Real Schur decomposition `a = Q T Q^T`. The deflation tolerance is relaxed
/// step by step when the QR iteration stalls at machine precision; after that
/// the iteration is restarted on a few fixed orthogonal similarity transforms.
pub(crate) fn real_schur(a: &Matrix) -> Result<(Matrix, Matrix)> {
    let n = a.nrows();
    let iters = 1000 * n.max(10);
    let attempt = |m: &Matrix| {
        [f64::EPSILON, 16.0 * f64::EPSILON, 256.0 * f64::EPSILON, 1e-12]
            .into_iter()
            .find_map(|eps| Schur::try_new(m.clone(), eps, iters))
            .map(Schur::unpack)
    };
    if let Some(qt) = attempt(a) {
        return Ok(qt);
    }
    for k in 1..=4 {
        let r = Matrix::from_fn(n, n, |i, j| ((i * 7 + j * 13 + k * 31) as f64 * 0.618_034).sin());
        let q0 = r.qr().q();
        if let Some((q1, t)) = attempt(&(q0.transpose() * a * &q0)) {
            return Ok((q0 * q1, t));
        }
    }
    Err(Error::NoUniqueSolution("Schur iteration did not converge".into()))
}

/// Eigenvalues of a real quasi-upper-triangular matrix.
fn quasi_triangular_eigenvalues(t: &Matrix) -> Vec<Complex64> {
    let n = t.nrows();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 == n || t[(i + 1, i)] == 0.0 {
            out.push(Complex64::new(t[(i, i)], 0.0));
            i += 1;
            continue;
        }
        let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
        let half = 0.5 * (a + d);
        let disc = Complex64::new(0.25 * (a - d) * (a - d) + b * c, 0.0).sqrt();
        out.push(half + disc);
        out.push(half - disc);
        i += 2;
    }
    out
}

/// Eigenvalues of a real square matrix via the real Schur form.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex64>> {
    ensure_square("a", a)?;
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    ensure_finite("a", a)?;
    let (_, t) = real_schur(a)?;
    Ok(quasi_triangular_eigenvalues(&t))
}

pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Hurwitz test; also reports the spectral abscissa for diagnostics.
pub fn is_hurwitz(a: &Matrix) -> Result<Stability> {
    let abscissa = spectral_abscissa(a)?;
    Ok(Stability { hurwitz: abscissa < 0.0, abscissa })
}

pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    svd(m).s
}

pub fn sigma_max(m: &Matrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Numerical rank with threshold `RANK_TOL * sigma_max`.
pub fn rank(m: &Matrix) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > RANK_TOL * top).count(),
        _ => 0,
    }
}

/// Orthonormal basis of the column space of `m`, ordered by singular value.
pub fn orthonormal_range(m: &Matrix) -> Matrix {
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return Matrix::zeros(n, 0);
    }
    let d = svd(m);
    let top = d.s[0];
    let r = d.s.iter().filter(|&&v| top > 0.0 && v > RANK_TOL * top).count();
    d.u.columns(0, r).clone_owned()
}

/// Orthonormal basis of the orthogonal complement of the column space of `m`.
pub fn orthonormal_complement(m: &Matrix) -> Matrix {
    let n = m.nrows();
    let q = orthonormal_range(m);
    if q.ncols() == n {
        return Matrix::zeros(n, 0);
    }
    let proj = Matrix::identity(n, n) - &q * q.transpose();
    let d = svd(&proj);
    let r = d.s.iter().filter(|&&v| v > 0.5).count();
    d.u.columns(0, r).clone_owned()
}

pub(crate) fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Largest distance between matched eigenvalues of two spectra.
///
/// Eigenvalues are paired greedily by closest distance; returns `None` when the
/// multisets have different sizes.
pub fn spectrum_distance(lhs: &[Complex64], rhs: &[Complex64]) -> Option<f64> {
    if lhs.len() != rhs.len() {
        return None;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(lhs.len() * rhs.len());
    for (i, a) in lhs.iter().enumerate() {
        for (j, b) in rhs.iter().enumerate() {
            pairs.push(((a - b).norm(), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut used_l = vec![false; lhs.len()];
    let mut used_r = vec![false; rhs.len()];
    let mut worst: f64 = 0.0;
    let mut matched = 0;
    for (d, i, j) in pairs {
        if used_l[i] || used_r[j] {
            continue;
        }
        used_l[i] = true;
        used_r[j] = true;
        worst = worst.max(d);
        matched += 1;
        if matched == lhs.len() {
            break;
        }
    }
    Some(worst)
}

/// Block-diagonal stacking of square or rectangular blocks.
pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Dense `e^{a t}` by scaling and squaring with a Taylor core.
///
/// Intended for small matrices in tests and oracles.
pub fn expm(a: &Matrix, t: f64) -> Matrix {
    let n = a.nrows();
    let m = a * t;
    let norm = m.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64;
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = &m / 2f64.powi(squarings);
    let mut term = Matrix::identity(n, n);
    let mut sum = Matrix::identity(n, n);
    for k in 1..=20 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hurwitz_diagonal() {
        let st = is_hurwitz(&Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, -2.0]))).unwrap();
        assert!(st.hurwitz);
        assert_abs_diff_eq!(st.abscissa, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn nilpotent_is_not_hurwitz() {
        let st = is_hurwitz(&Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap();
        assert!(!st.hurwitz);
        assert_abs_diff_eq!(st.abscissa, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn non_square_rejected() {
        assert!(matches!(is_hurwitz(&Matrix::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn complement_is_orthogonal() {
        let m = Matrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 2.0, 0.0, 0.0]);
        let c = orthonormal_complement(&m);
        assert_eq!(c.ncols(), 2);
        assert!((c.transpose() * &m).norm() < 1e-12);
        assert!((c.transpose() * &c - Matrix::identity(2, 2)).norm() < 1e-12);
        assert_eq!(rank(&m), 2);
    }

    #[test]
    fn spectrum_matching() {
        let a = [Complex64::new(-1.0, 1.0), Complex64::new(-1.0, -1.0), Complex64::new(-3.0, 0.0)];
        let b = [Complex64::new(-3.0, 1e-12), Complex64::new(-1.0, -1.0), Complex64::new(-1.0, 1.0)];
        assert!(spectrum_distance(&a, &b).unwrap() < 1e-11);
        assert!(spectrum_distance(&a, &b[..2]).is_none());
    }

    #[test]
    fn expm_rotation() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let e = expm(&a, 1.0);
        assert_abs_diff_eq!(e[(0, 0)], 1f64.cos(), epsilon = 1e-13);
        assert_abs_diff_eq!(e[(0, 1)], 1f64.sin(), epsilon = 1e-13);
    }
}
