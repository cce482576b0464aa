//! Random stable plants for the property suites.

use rand::Rng;

use crate::error::Result;
use crate::numlin::{spectral_abscissa, Matrix, Vector};
use crate::sysmodel::{assemble_preexisting, LinearEnvironment, LinearSubsystem, PreexistingSystem};

/// Shape of a random plant. `c1 = None` means `C1 = I`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlantShape {
    pub n1: usize,
    pub n2: usize,
    pub m1: usize,
    pub q1: usize,
    pub r1: usize,
    pub p1: Option<usize>,
}

impl PlantShape {
    /// `n1 in 2..=n1_max`, `n2 in 1..=n2_max`, `m1 + q1 <= n1`.
    pub fn sample<R: Rng>(rng: &mut R, n1_max: usize, n2_max: usize, full_measurement: bool) -> Self {
        let n1 = rng.random_range(2..=n1_max.max(2));
        let n2 = rng.random_range(1..=n2_max.max(1));
        let m1 = rng.random_range(1..=((n1 - 1).min(2)));
        let q1 = rng.random_range(1..=((n1 - m1).min(2)));
        let r1 = rng.random_range(1..=n1.min(3));
        let p1 = if full_measurement { None } else { Some(rng.random_range(1..=n1)) };
        Self { n1, n2, m1, q1, r1, p1 }
    }
}

fn uniform<R: Rng>(rng: &mut R, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Random plant with Hurwitz `A` (abscissa at most `-0.1`). Diagonal blocks
/// are shifted together so the coupling is untouched.
pub fn random_plant<R: Rng>(rng: &mut R, shape: PlantShape) -> Result<PreexistingSystem> {
    let PlantShape { n1, n2, m1, q1, r1, p1 } = shape;
    let mut a1 = uniform(rng, n1, n1);
    let mut a2 = uniform(rng, n2, n2);
    let b1 = uniform(rng, n1, m1);
    let c1 = match p1 {
        None => Matrix::identity(n1, n1),
        Some(p) => uniform(rng, p, n1),
    };
    let l1 = uniform(rng, n1, q1);
    let l2 = uniform(rng, n2, r1);
    let gamma1 = uniform(rng, r1, n1) * 0.5;
    let gamma2 = uniform(rng, q1, n2) * 0.5;
    let probe = assemble(&a1, &a2, &l1, &l2, &gamma1, &gamma2);
    let margin = rng.random_range(0.1..1.0);
    let shift = (spectral_abscissa(&probe)? + margin).max(0.0);
    a1 -= Matrix::identity(n1, n1) * shift;
    a2 -= Matrix::identity(n2, n2) * shift;
    let sub = LinearSubsystem::new(a1, b1, c1, l1)?;
    let env = LinearEnvironment::new(a2, l2, gamma1, gamma2)?;
    assemble_preexisting(sub, env)
}

/// Samples a shape and then a plant with that shape.
pub fn sample_plant<R: Rng>(rng: &mut R, n1_max: usize, n2_max: usize, full_measurement: bool) -> Result<PreexistingSystem> {
    let shape = PlantShape::sample(rng, n1_max, n2_max, full_measurement);
    random_plant(rng, shape)
}

fn assemble(a1: &Matrix, a2: &Matrix, l1: &Matrix, l2: &Matrix, g1: &Matrix, g2: &Matrix) -> Matrix {
    let (n1, n2) = (a1.nrows(), a2.nrows());
    let mut a = Matrix::zeros(n1 + n2, n1 + n2);
    a.view_mut((0, 0), (n1, n1)).copy_from(a1);
    a.view_mut((0, n1), (n1, n2)).copy_from(&(l1 * g2));
    a.view_mut((n1, 0), (n2, n1)).copy_from(&(l2 * g1));
    a.view_mut((n1, n1), (n2, n2)).copy_from(a2);
    a
}

/// Uniform sample from the unit ball in `R^n`.
pub fn unit_ball<R: Rng>(rng: &mut R, n: usize) -> Vector {
    loop {
        let v = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let r = v.norm();
        if r > 1e-3 && r <= 1.0 {
            return v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn plants_are_stable_and_shaped() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let shape = PlantShape::sample(&mut rng, 6, 8, false);
            let plant = random_plant(&mut rng, shape).unwrap();
            assert_eq!(plant.n(), shape.n1 + shape.n2);
            assert!(spectral_abscissa(plant.a().unwrap()).unwrap() <= -0.1 + 1e-9);
        }
    }
}
