use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use super::balance::hankel_singular_values;
use super::{eigenvalues, ensure_square, is_hurwitz, sigma_max, solve_lyapunov, Matrix, StateSpace, Vector};
use crate::error::{Error, Result};

pub const HINF_DEFAULT_TOL: f64 = 1e-6;
const HINF_MAX_ITER: usize = 200;

fn require_stable(sys: &StateSpace) -> Result<()> {
    if sys.order() == 0 {
        return Ok(());
    }
    let st = is_hurwitz(&sys.a)?;
    if st.hurwitz {
        Ok(())
    } else {
        Err(Error::NormUndefined(format!("unstable system (spectral abscissa {:e})", st.abscissa)))
    }
}

/// H2 norm `sqrt(trace(c Wc c^T))` of a stable, strictly proper system.
pub fn h2_norm(sys: &StateSpace) -> Result<f64> {
    if sys.d.iter().any(|&v| v != 0.0) {
        return Err(Error::NormUndefined("H2 norm requires d = 0".into()));
    }
    require_stable(sys)?;
    if sys.order() == 0 {
        return Ok(0.0);
    }
    let wc = solve_lyapunov(&sys.a.transpose(), &(&sys.b * sys.b.transpose()))?;
    Ok((&sys.c * wc * sys.c.transpose()).trace().max(0.0).sqrt())
}

/// Largest singular value of the frequency response at `s = j omega`.
pub fn sigma_max_at(sys: &StateSpace, omega: f64) -> Result<f64> {
    let g = sys.eval(Complex64::new(0.0, omega))?;
    if g.nrows() == 0 || g.ncols() == 0 {
        return Ok(0.0);
    }
    // Real embedding [[Re, -Im], [Im, Re]] has each singular value twice.
    let (p, m) = (g.nrows(), g.ncols());
    let emb = Matrix::from_fn(2 * p, 2 * m, |i, j| {
        let z = g[(i % p, j % m)];
        match (i < p, j < m) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    Ok(sigma_max(&emb))
}

pub fn hinf_norm_default(sys: &StateSpace) -> Result<f64> {
    hinf_norm(sys, HINF_DEFAULT_TOL)
}

/// H-infinity norm by bisection on the imaginary-axis eigenvalues of the
/// associated Hamiltonian matrix.
///
/// Lower bounds are always certified by evaluating the frequency response at
/// the crossing frequencies (and at their midpoints); upper bounds come from
/// levels whose Hamiltonian has no verified imaginary-axis eigenvalue. The
/// initial upper bound is `sigma_max(d) + 2 * sum(Hankel singular values)`.
pub fn hinf_norm(sys: &StateSpace, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    require_stable(sys)?;
    let dmax = sigma_max(&sys.d);
    if sys.order() == 0 || sys.b.norm() == 0.0 || sys.c.norm() == 0.0 {
        return Ok(dmax);
    }

    let mut lb = dmax.max(sigma_max_at(sys, 0.0)?);
    for z in eigenvalues(&sys.a)? {
        lb = lb.max(sigma_max_at(sys, z.im.abs())?).max(sigma_max_at(sys, z.norm())?);
    }
    let hankel_sum: f64 = hankel_singular_values(sys)?.iter().sum();
    let mut ub = dmax + 2.0 * hankel_sum;
    if ub <= lb {
        return Ok(lb);
    }

    for _ in 0..HINF_MAX_ITER {
        if ub - lb <= tol {
            break;
        }
        let gamma = 0.5 * (lb + ub);
        let crossings = imaginary_crossings(sys, gamma)?;
        let mut verified = false;
        for &w in &crossings {
            let s = sigma_max_at(sys, w)?;
            lb = lb.max(s);
            if s >= gamma * (1.0 - 1e-6) {
                verified = true;
            }
        }
        for pair in crossings.windows(2) {
            lb = lb.max(sigma_max_at(sys, 0.5 * (pair[0] + pair[1]))?);
        }
        if verified {
            lb = lb.max(gamma);
        } else {
            ub = gamma;
        }
        if lb >= ub {
            return Ok(lb);
        }
    }
    Ok(0.5 * (lb + ub))
}

/// Non-negative frequencies where the level-`gamma` Hamiltonian has
/// (numerically) imaginary eigenvalues, sorted ascending.
fn imaginary_crossings(sys: &StateSpace, gamma: f64) -> Result<Vec<f64>> {
    let n = sys.order();
    let m = sys.inputs();
    let (a, b, c, d) = (&sys.a, &sys.b, &sys.c, &sys.d);
    let r = Matrix::identity(m, m) * (gamma * gamma) - d.transpose() * d;
    let rinv = r
        .cholesky()
        .ok_or_else(|| Error::NormUndefined("level below sigma_max(d)".into()))?
        .inverse();
    let ak = a + b * &rinv * d.transpose() * c;
    let p = sys.outputs();
    let cc = c.transpose() * (Matrix::identity(p, p) + d * &rinv * d.transpose()) * c;
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&ak);
    h.view_mut((0, n), (n, n)).copy_from(&(b * &rinv * b.transpose()));
    h.view_mut((n, 0), (n, n)).copy_from(&(-cc));
    h.view_mut((n, n), (n, n)).copy_from(&(-ak.transpose()));

    let mut out: Vec<f64> = eigenvalues(&h)?
        .into_iter()
        .filter(|z| z.re.abs() <= 1e-6 * (1.0 + z.norm()) && z.im >= 0.0)
        .map(|z| z.im)
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (1.0 + y.abs()));
    Ok(out)
}

fn observability_gramian(a: &Matrix, c: &Matrix) -> Result<Matrix> {
    ensure_square("a", a)?;
    if c.ncols() != a.nrows() {
        return Err(Error::dim(format!("c has {} columns, a is {}x{}", c.ncols(), a.nrows(), a.ncols())));
    }
    solve_lyapunov(a, &(c.transpose() * c))
}

/// `||c e^{a t} x0||_L2` computed from the observability gramian.
pub fn ic_response_l2(a: &Matrix, c: &Matrix, x0: &Vector) -> Result<f64> {
    if x0.len() != a.nrows() {
        return Err(Error::dim(format!("x0 has length {}, a is {}x{}", x0.len(), a.nrows(), a.ncols())));
    }
    let x = observability_gramian(a, c)?;
    Ok(x0.dot(&(&x * x0)).max(0.0).sqrt())
}

/// Worst case of [`ic_response_l2`] over unit-norm initial states.
pub fn ic_response_l2_sup(a: &Matrix, c: &Matrix) -> Result<f64> {
    ic_response_l2_sup_on(a, c, &Matrix::identity(a.nrows(), a.nrows()))
}

/// Worst case over initial states `x0 = m v` with `||v|| <= 1`.
pub fn ic_response_l2_sup_on(a: &Matrix, c: &Matrix, m: &Matrix) -> Result<f64> {
    if m.nrows() != a.nrows() {
        return Err(Error::dim(format!("injection has {} rows, a is {}x{}", m.nrows(), a.nrows(), a.ncols())));
    }
    let x = observability_gramian(a, c)?;
    let reduced = m.transpose() * x * m;
    if reduced.nrows() == 0 {
        return Ok(0.0);
    }
    let eig = SymmetricEigen::new(super::symmetrize(&reduced));
    Ok(eig.eigenvalues.max().max(0.0).sqrt())
}
