use serde::{Deserialize, Serialize};

use super::controllers::{RetrofitObserverBased, RetrofitOutputFeedback, RetrofitStateFeedback};
use crate::error::{Error, Result};
use crate::hierarchy::{check_lemma_conditions, ProjectionPair};
use crate::numlin::{ic_response_l2_sup, is_hurwitz, lqr_gain, Matrix};
use crate::sysmodel::{LinearSubsystem, NonlinearResidual};

/// Diagonal LQR weights `q = q_scale I`, `r = r_scale I`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub q: f64,
    pub r: f64,
}

impl Weights {
    pub fn new(q: f64, r: f64) -> Self {
        Self { q, r }
    }
    pub fn matrices(&self, n: usize, m: usize) -> (Matrix, Matrix) {
        (Matrix::identity(n, n) * self.q, Matrix::identity(m, m) * self.r)
    }
}

/// Local state-feedback gain with its closed loop and `eps1`.
#[derive(Clone, Debug)]
pub struct LocalDesign {
    pub gain: Matrix,
    pub loop_a: Matrix,
    pub eps1: f64,
}

/// LQR on the isolated model `(A1, B1)`; `eps1` is the worst-case `L2` norm of
/// the local loop over unit initial states.
pub fn design_local_lqr(sub: &LinearSubsystem, q: &Matrix, r: &Matrix) -> Result<LocalDesign> {
    let gain = lqr_gain(sub.a1(), sub.b1(), q, r)?;
    let loop_a = sub.a1() + sub.b1() * &gain;
    let n1 = sub.n1();
    let eps1 = ic_response_l2_sup(&loop_a, &Matrix::identity(n1, n1))?;
    Ok(LocalDesign { gain, loop_a, eps1 })
}

/// State-feedback gain `F1` and observer gain `H1` (with `A1 - H1 C1`
/// Hurwitz, obtained from the dual regulator problem).
pub fn design_local_observer(
    sub: &LinearSubsystem,
    q: &Matrix,
    r: &Matrix,
    qo: &Matrix,
    ro: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let f1 = lqr_gain(sub.a1(), sub.b1(), q, r)?;
    let dual = lqr_gain(&sub.a1().transpose(), &sub.c1().transpose(), qo, ro)
        .map_err(|e| Error::Synthesis(format!("(A1, C1) not detectable: {e}")))?;
    Ok((f1, -dual.transpose()))
}

/// LQR on the projected model `(P1dag A1 P1, P1dag B1)`.
pub fn design_projected_lqr(sub: &LinearSubsystem, proj: &ProjectionPair, w: Weights) -> Result<LocalDesign> {
    let (q, r) = w.matrices(proj.nhat(), sub.m1());
    projected_lqr(sub, proj, &q, &r)
}

/// As [`design_projected_lqr`] with a state weight `q1` on the original
/// coordinates, pulled back as `P1^T q1 P1`.
pub fn design_projected_lqr_weighted(
    sub: &LinearSubsystem,
    proj: &ProjectionPair,
    q1: &Matrix,
    r: &Matrix,
) -> Result<LocalDesign> {
    if q1.nrows() != sub.n1() || q1.ncols() != sub.n1() {
        return Err(Error::dim(format!("q1 is {}x{}, n1 = {}", q1.nrows(), q1.ncols(), sub.n1())));
    }
    let q = proj.p1().transpose() * q1 * proj.p1();
    projected_lqr(sub, proj, &q, r)
}

fn projected_lqr(sub: &LinearSubsystem, proj: &ProjectionPair, q: &Matrix, r: &Matrix) -> Result<LocalDesign> {
    let ahat = proj.p1dag() * sub.a1() * proj.p1();
    let bhat = proj.p1dag() * sub.b1();
    let gain = lqr_gain(&ahat, &bhat, q, r)?;
    let loop_a = &ahat + &bhat * &gain;
    let eps1 = crate::numlin::ic_response_l2_sup_on(&loop_a, &Matrix::identity(ahat.nrows(), ahat.nrows()), proj.p1dag())?;
    Ok(LocalDesign { gain, loop_a, eps1 })
}

fn require_stable(a: &Matrix, what: &str) -> Result<()> {
    let st = is_hurwitz(a)?;
    if st.hurwitz {
        Ok(())
    } else {
        Err(Error::Synthesis(format!("{what} is not Hurwitz (spectral abscissa {:e})", st.abscissa)))
    }
}

/// `x̂' = A1 x̂ + L1 gamma2`, `u1 = K1 (y1 - C1 x̂)`, `x̂(0) = 0`.
pub fn synthesize_output_feedback(sub: &LinearSubsystem, k1: &Matrix) -> Result<RetrofitOutputFeedback> {
    if k1.nrows() != sub.m1() || k1.ncols() != sub.p1() {
        return Err(Error::dim(format!("k1 is {}x{}, expected {}x{}", k1.nrows(), k1.ncols(), sub.m1(), sub.p1())));
    }
    require_stable(&(sub.a1() + sub.b1() * k1 * sub.c1()), "A1 + B1 K1 C1")?;
    Ok(RetrofitOutputFeedback::new(sub, k1.clone()))
}

/// Observer-based form with gains `F1` (`A1 + B1 F1` Hurwitz) and `H1`
/// (`A1 - H1 C1` Hurwitz).
pub fn synthesize_observer(sub: &LinearSubsystem, f1: &Matrix, h1: &Matrix) -> Result<RetrofitObserverBased> {
    if f1.nrows() != sub.m1() || f1.ncols() != sub.n1() || h1.nrows() != sub.n1() || h1.ncols() != sub.p1() {
        return Err(Error::dim("observer gains do not match the subsystem"));
    }
    require_stable(&(sub.a1() + sub.b1() * f1), "A1 + B1 F1")?;
    require_stable(&(sub.a1() - h1 * sub.c1()), "A1 - H1 C1")?;
    Ok(RetrofitObserverBased::new(sub, f1.clone(), h1.clone()))
}

/// `x̂' = P1dag A1 P1 x̂ + P1dag A1 P1bar P1bardag x1 [+ P1dag f1(x1)]`,
/// `u1 = K̂1 (P1dag x1 - x̂)`. The identity projection is accepted without the
/// kernel condition; the compensator then keeps the `L1 gamma2` term.
pub fn synthesize_state_feedback(
    sub: &LinearSubsystem,
    proj: &ProjectionPair,
    khat: &Matrix,
    residual: Option<NonlinearResidual>,
) -> Result<RetrofitStateFeedback> {
    if !sub.measures_state() {
        return Err(Error::Synthesis("state-feedback retrofit requires C1 = I".into()));
    }
    if proj.n1() != sub.n1() {
        return Err(Error::dim("projection does not match the subsystem"));
    }
    if khat.nrows() != sub.m1() || khat.ncols() != proj.nhat() {
        return Err(Error::dim(format!("khat is {}x{}, expected {}x{}", khat.nrows(), khat.ncols(), sub.m1(), proj.nhat())));
    }
    let (img, ker) = check_lemma_conditions(sub, proj);
    let scale = 1.0 + sub.b1().norm() + sub.l1().norm();
    if img > 1e-8 * scale || (ker > 1e-8 * scale && !proj.is_identity()) {
        return Err(Error::ProjectionInadmissible(format!("image residual {img:e}, kernel residual {ker:e}")));
    }
    let loop_a = proj.p1dag() * sub.a1() * proj.p1() + proj.p1dag() * sub.b1() * khat;
    require_stable(&loop_a, "P1dag A1 P1 + P1dag B1 K̂1")?;
    Ok(RetrofitStateFeedback::new(sub, proj.clone(), khat.clone(), residual))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_lqr_design() {
        let sub = LinearSubsystem::new(s(0.0), s(1.0), s(1.0), s(1.0)).unwrap();
        let d = design_local_lqr(&sub, &s(1.0), &s(1.0)).unwrap();
        assert!((d.gain[(0, 0)] + 1.0).abs() < 1e-12);
        assert!((d.eps1 - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn scalar_observer_design() {
        let sub = LinearSubsystem::new(s(0.0), s(1.0), s(1.0), s(1.0)).unwrap();
        let (f1, h1) = design_local_observer(&sub, &s(1.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert!((f1[(0, 0)] + 1.0).abs() < 1e-12);
        assert!((h1[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn higher_weight_lowers_eps1() {
        let a1 = Matrix::from_row_slice(3, 3, &[0.1, 1.0, 0.0, -0.5, 0.2, 0.3, 0.0, -1.0, -0.4]);
        let b1 = Matrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        let sub = LinearSubsystem::new(a1, b1, Matrix::identity(3, 3), Matrix::zeros(3, 1)).unwrap();
        let (q1, r) = Weights::new(1.0, 1.0).matrices(3, 1);
        let (q100, _) = Weights::new(100.0, 1.0).matrices(3, 1);
        let lo = design_local_lqr(&sub, &q1, &r).unwrap();
        let hi = design_local_lqr(&sub, &q100, &r).unwrap();
        assert!(hi.eps1 < lo.eps1, "{} vs {}", hi.eps1, lo.eps1);
    }

    #[test]
    fn weighted_projected_design() {
        let a1 = Matrix::from_row_slice(3, 3, &[0.1, 1.0, 0.0, -0.5, 0.2, 0.3, 0.0, -1.0, -0.4]);
        let b1 = Matrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        let sub = LinearSubsystem::new(a1, b1, Matrix::identity(3, 3), Matrix::zeros(3, 1)).unwrap();
        let q1 = Matrix::from_diagonal(&crate::Vector::from_vec(vec![4.0, 1.0, 0.25]));
        let r = s(1.0);
        let full = design_local_lqr(&sub, &q1, &r).unwrap();
        let id = design_projected_lqr_weighted(&sub, &ProjectionPair::identity(3), &q1, &r).unwrap();
        assert!((full.gain - id.gain).norm() < 1e-9);
        assert!((full.eps1 - id.eps1).abs() < 1e-9);
        assert!(matches!(design_projected_lqr_weighted(&sub, &ProjectionPair::identity(3), &s(1.0), &r), Err(Error::Dimension(_))));
    }

    #[test]
    fn destabilizing_gain_rejected() {
        let sub = LinearSubsystem::new(s(-1.0), s(1.0), s(1.0), s(1.0)).unwrap();
        assert!(matches!(synthesize_output_feedback(&sub, &s(2.0)), Err(Error::Synthesis(_))));
        assert!(synthesize_output_feedback(&sub, &s(0.0)).is_ok());
    }

    #[test]
    fn state_feedback_requires_full_measurement() {
        let sub = LinearSubsystem::new(s(-1.0), s(1.0), s(2.0), s(0.0)).unwrap();
        let err = synthesize_state_feedback(&sub, &ProjectionPair::identity(1), &s(-1.0), None).unwrap_err();
        assert!(matches!(err, Error::Synthesis(_)));
    }
}
