use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::matrix_rows;
use crate::numlin::{balanced_truncation, orthonormal_complement, orthonormal_range, rank, singular_values, Matrix, StateSpace};
use crate::sysmodel::LinearSubsystem;

/// Tolerance for the pair identities asserted on every constructed pair.
pub const PAIR_TOL: f64 = 1e-10;
const MAX_CONDITION: f64 = 1e12;

/// Left-invertible `p1` with left inverse `p1dag`, and the complementary pair
/// so that `p1 p1dag + p1bar p1bardag = I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPair {
    #[serde(with = "matrix_rows")]
    p1: Matrix,
    #[serde(with = "matrix_rows")]
    p1dag: Matrix,
    #[serde(with = "matrix_rows")]
    p1bar: Matrix,
    #[serde(with = "matrix_rows")]
    p1bardag: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProjectionResiduals {
    /// `|p1dag p1 - I|`
    pub left_inverse: f64,
    /// `|p1 p1dag + p1bar p1bardag - I|`
    pub resolution: f64,
    /// `|(p1 p1dag)^2 - p1 p1dag|`
    pub idempotence: f64,
}

impl ProjectionResiduals {
    pub fn max(&self) -> f64 {
        self.left_inverse.max(self.resolution).max(self.idempotence)
    }
}

impl ProjectionPair {
    /// `P1 = P1dag = I`, empty complement.
    pub fn identity(n1: usize) -> Self {
        Self {
            p1: Matrix::identity(n1, n1),
            p1dag: Matrix::identity(n1, n1),
            p1bar: Matrix::zeros(n1, 0),
            p1bardag: Matrix::zeros(0, n1),
        }
    }

    /// Completes `(p1, p1dag)` with `p1bar` an orthonormal basis of
    /// `im(I - p1 p1dag)` and `p1bardag = p1bar^T (I - p1 p1dag)`.
    pub fn new(p1: Matrix, p1dag: Matrix) -> Result<Self> {
        let (n1, nhat) = (p1.nrows(), p1.ncols());
        if p1dag.nrows() != nhat || p1dag.ncols() != n1 || nhat > n1 {
            return Err(Error::dim(format!(
                "p1 is {n1}x{nhat} and p1dag is {}x{}",
                p1dag.nrows(),
                p1dag.ncols()
            )));
        }
        let li = (&p1dag * &p1 - Matrix::identity(nhat, nhat)).norm();
        if li > 1e-8 {
            return Err(Error::ProjectionInadmissible(format!("p1dag is not a left inverse of p1 (residual {li:e})")));
        }
        let comp = Matrix::identity(n1, n1) - &p1 * &p1dag;
        let p1bar = if nhat == n1 { Matrix::zeros(n1, 0) } else { orthonormal_range(&comp) };
        if p1bar.ncols() != n1 - nhat {
            return Err(Error::Complementarity(format!(
                "complement has dimension {}, expected {}",
                p1bar.ncols(),
                n1 - nhat
            )));
        }
        let p1bardag = p1bar.transpose() * &comp;
        Ok(Self { p1, p1dag, p1bar, p1bardag })
    }

    pub fn p1(&self) -> &Matrix {
        &self.p1
    }
    pub fn p1dag(&self) -> &Matrix {
        &self.p1dag
    }
    pub fn p1bar(&self) -> &Matrix {
        &self.p1bar
    }
    pub fn p1bardag(&self) -> &Matrix {
        &self.p1bardag
    }
    pub fn n1(&self) -> usize {
        self.p1.nrows()
    }
    pub fn nhat(&self) -> usize {
        self.p1.ncols()
    }
    pub fn is_identity(&self) -> bool {
        self.nhat() == self.n1() && self.p1 == Matrix::identity(self.n1(), self.n1()) && self.p1dag == self.p1
    }
    /// `P1 P1dag`
    pub fn projector(&self) -> Matrix {
        &self.p1 * &self.p1dag
    }
    /// `P1bar P1bardag`
    pub fn complement_projector(&self) -> Matrix {
        &self.p1bar * &self.p1bardag
    }

    pub fn residuals(&self) -> ProjectionResiduals {
        let n1 = self.n1();
        let h = self.projector();
        ProjectionResiduals {
            left_inverse: (&self.p1dag * &self.p1 - Matrix::identity(self.nhat(), self.nhat())).norm(),
            resolution: (&h + self.complement_projector() - Matrix::identity(n1, n1)).norm(),
            idempotence: (&h * &h - &h).norm(),
        }
    }
}

/// Oblique projector `v1 (v2^T v1)^{-1} v2^T` onto `im v1` along `ker v2^T`.
pub fn oblique_projector(v1: &Matrix, v2: &Matrix) -> Result<Matrix> {
    if v1.nrows() != v2.nrows() || v1.ncols() != v2.ncols() {
        return Err(Error::dim(format!(
            "v1 is {}x{}, v2 is {}x{}",
            v1.nrows(),
            v1.ncols(),
            v2.nrows(),
            v2.ncols()
        )));
    }
    let inner = v2.transpose() * v1;
    Ok(v1 * checked_inverse(&inner)? * v2.transpose())
}

fn checked_inverse(m: &Matrix) -> Result<Matrix> {
    if m.nrows() == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let s = singular_values(m);
    let (top, bottom) = (s[0], *s.last().expect("nonempty"));
    if !(bottom > 0.0) || top / bottom > MAX_CONDITION {
        return Err(Error::Complementarity(format!("v2^T v1 has condition number {:e}", top / bottom)));
    }
    m.clone().try_inverse().ok_or_else(|| Error::Complementarity("v2^T v1 is singular".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum ProjectionMethod {
    /// Deterministic: `im B1` completed by orthonormal directions of
    /// `(im L1)^perp` orthogonal to `im B1`.
    Orthogonal,
    /// Dominant balanced directions of the isolated subsystem, corrected to
    /// satisfy the kernel condition.
    Balanced,
    /// As `Orthogonal`, with the added directions tilted along `im L1` by
    /// the quasi-steady-state value of the `im L1` coordinates. Keeps the
    /// projected model stabilizable when `nhat = n1 - rank L1` would
    /// otherwise strand integrator states.
    Residualized,
    /// Random admissible subspace and random coordinates.
    Random { seed: u64 },
}

/// `(rank B1, n1 - rank L1)`, the admissible range for `nhat`.
pub fn nhat_bounds(sub: &LinearSubsystem) -> (usize, usize) {
    (rank(sub.b1()), sub.n1() - rank(sub.l1()))
}

/// Checks `im B1 ∩ im L1 = {0}` through `rank [B1 L1] = rank B1 + rank L1`.
fn check_overlap(sub: &LinearSubsystem) -> Result<()> {
    let (b1, l1) = (sub.b1(), sub.l1());
    let mut joint = Matrix::zeros(sub.n1(), b1.ncols() + l1.ncols());
    joint.columns_mut(0, b1.ncols()).copy_from(b1);
    joint.columns_mut(b1.ncols(), l1.ncols()).copy_from(l1);
    let (j, s) = (rank(&joint), rank(b1) + rank(l1));
    if j < s {
        return Err(Error::ImageOverlap { joint: j, sum: s });
    }
    Ok(())
}

/// `|(I - P1 P1dag) B1|` and `|P1dag L1|`, the two admissibility conditions.
pub fn check_lemma_conditions(sub: &LinearSubsystem, proj: &ProjectionPair) -> (f64, f64) {
    let n1 = sub.n1();
    let image = ((Matrix::identity(n1, n1) - proj.projector()) * sub.b1()).norm();
    let kernel = (proj.p1dag() * sub.l1()).norm();
    (image, kernel)
}

/// Constructs a projection pair with `im B1 ⊆ im P1` and `im L1 ⊆ ker P1dag`.
pub fn admissible_projection(sub: &LinearSubsystem, nhat: usize, method: ProjectionMethod) -> Result<ProjectionPair> {
    check_overlap(sub)?;
    let (lo, hi) = nhat_bounds(sub);
    if nhat < lo || nhat > hi || nhat == 0 {
        return Err(Error::dim(format!("nhat = {nhat} outside the admissible range [{}, {hi}]", lo.max(1))));
    }
    let n1 = sub.n1();
    let qb = orthonormal_range(sub.b1());
    let kernel_basis = orthonormal_complement(&orthonormal_range(sub.l1()));
    // im N ∩ (im B1)^perp
    let free = &kernel_basis * orthonormal_complement(&(qb.transpose() * &kernel_basis).transpose());
    let extra = nhat - qb.ncols();
    if free.ncols() < extra {
        return Err(Error::dim(format!("only {} free directions for {extra} requested", free.ncols())));
    }

    let (picked, mix) = match method {
        ProjectionMethod::Orthogonal => (free.columns(0, extra).clone_owned(), None),
        ProjectionMethod::Residualized => (residualized(sub, &free.columns(0, extra).clone_owned())?, None),
        ProjectionMethod::Balanced => (balanced_directions(sub, &free, extra)?, None),
        ProjectionMethod::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = Matrix::from_fn(free.ncols(), extra, |_, _| rng.random_range(-1.0..1.0));
            let mix = Matrix::from_fn(nhat, nhat, |i, j| if i == j { 1.5 } else { 0.0 } + rng.random_range(-0.5..0.5));
            (orthonormal_range(&(&free * w)), Some(mix))
        }
    };
    if picked.ncols() != extra {
        return Err(Error::Complementarity("could not complete the image basis".into()));
    }
    let mut v1 = Matrix::zeros(n1, nhat);
    v1.columns_mut(0, qb.ncols()).copy_from(&qb);
    v1.columns_mut(qb.ncols(), extra).copy_from(&picked);
    if let Some(m) = mix {
        v1 *= m;
    }
    let v2 = &kernel_basis * (kernel_basis.transpose() * &v1);
    let p1 = &v1 * checked_inverse(&(v2.transpose() * &v1))?;
    let pair = ProjectionPair::new(p1, v2.transpose())?;
    let (img, ker) = check_lemma_conditions(sub, &pair);
    let scale = 1.0 + sub.b1().norm() + sub.l1().norm();
    if img > 1e-9 * scale || ker > 1e-9 * scale {
        return Err(Error::ProjectionInadmissible(format!("constructed pair misses the conditions ({img:e}, {ker:e})")));
    }
    Ok(pair)
}

/// `v - L (L^T A1 L)^{-1} L^T A1 v` with `L` an orthonormal basis of `im L1`.
fn residualized(sub: &LinearSubsystem, v: &Matrix) -> Result<Matrix> {
    let l = orthonormal_range(sub.l1());
    if l.ncols() == 0 {
        return Ok(v.clone());
    }
    let inner = l.transpose() * sub.a1() * &l;
    let g = inner
        .try_inverse()
        .ok_or_else(|| Error::Complementarity("A1 restricted to im L1 is singular".into()))?;
    Ok(v - &l * g * l.transpose() * sub.a1() * v)
}

/// The `extra` most controllable balanced directions of the isolated
/// subsystem `(A1, B1, I)`, restricted to the free subspace.
fn balanced_directions(sub: &LinearSubsystem, free: &Matrix, extra: usize) -> Result<Matrix> {
    if extra == 0 {
        return Ok(Matrix::zeros(sub.n1(), 0));
    }
    let n1 = sub.n1();
    let sys = StateSpace::strictly_proper(sub.a1().clone(), sub.b1().clone(), Matrix::identity(n1, n1))?;
    let mut order = n1;
    let right = loop {
        match balanced_truncation(&sys, order) {
            Ok(red) => break red.right,
            Err(Error::Reduction(_)) if order > 1 => order -= 1,
            Err(e) => return Err(e),
        }
    };
    // Greedy Gram-Schmidt over the restricted dominant directions, then the
    // remaining free directions if the controllable part is too small.
    let restricted = free * (free.transpose() * &right);
    let mut basis: Vec<crate::Vector> = Vec::with_capacity(extra);
    let candidates = (0..restricted.ncols()).map(|k| restricted.column(k).clone_owned()).chain((0..free.ncols()).map(|k| free.column(k).clone_owned()));
    for mut v in candidates {
        if basis.len() == extra {
            break;
        }
        let norm0 = v.norm();
        for q in &basis {
            let c = q.dot(&v);
            v -= q * c;
        }
        let norm = v.norm();
        if norm0 > 0.0 && norm > 1e-6 * norm0 {
            basis.push(v / norm);
        }
    }
    Ok(Matrix::from_columns(&basis))
}
