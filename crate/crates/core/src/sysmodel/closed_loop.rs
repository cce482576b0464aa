use std::fmt;
use std::sync::Arc;

use super::PreexistingSystem;
use crate::error::{Error, Result};
use crate::numlin::{Matrix, Vector};

/// `(x, u) -> x'`
pub type PlantField = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
/// `x -> gamma`
pub type StateMap = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// Global plant `x' = F(x, u)` with `n` states and `m` inputs. Linear plants
/// keep their matrices so closed loops can be assembled into one realization.
#[derive(Clone)]
pub struct Plant {
    n: usize,
    m: usize,
    linear: Option<(Matrix, Matrix)>,
    field: PlantField,
}

impl Plant {
    pub fn linear(a: Matrix, b: Matrix) -> Self {
        let (n, m) = (a.nrows(), b.ncols());
        let (fa, fb) = (a.clone(), b.clone());
        Self { n, m, linear: Some((a, b)), field: Arc::new(move |x: &Vector, u: &Vector| &fa * x + &fb * u) }
    }

    pub fn nonlinear(n: usize, m: usize, field: PlantField) -> Self {
        Self { n, m, linear: None, field }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn matrices(&self) -> Option<&(Matrix, Matrix)> {
        self.linear.as_ref()
    }
    pub fn derivative(&self, x: &Vector, u: &Vector) -> Vector {
        (self.field)(x, u)
    }
}

impl fmt::Debug for Plant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Plant").field("n", &self.n).field("m", &self.m).field("linear", &self.linear.is_some()).finish()
    }
}

/// Linear controller `z' = a z + b_y y + b_gamma gamma`,
/// `u = c z + d_y y + d_gamma gamma`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerRealization {
    pub a: Matrix,
    pub b_y: Matrix,
    pub b_gamma: Matrix,
    pub c: Matrix,
    pub d_y: Matrix,
    pub d_gamma: Matrix,
}

/// A dynamic output-feedback law attached to a plant through a [`Binding`].
pub trait Controller: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn measurement_dim(&self) -> usize;
    fn gamma_dim(&self) -> usize;
    fn derivative(&self, z: &Vector, y: &Vector, gamma: &Vector) -> Vector;
    fn output(&self, z: &Vector, y: &Vector, gamma: &Vector) -> Vector;
    /// Linear realization, if the law is linear.
    fn realization(&self) -> Option<ControllerRealization>;
    fn initial_state(&self) -> Vector {
        Vector::zeros(self.state_dim())
    }
}

/// How a controller reads the interconnection signal.
#[derive(Clone)]
pub enum GammaTap {
    None,
    /// `gamma = g x` on the global plant state.
    Linear(Matrix),
    Nonlinear { dim: usize, map: StateMap },
}

impl GammaTap {
    pub fn dim(&self) -> usize {
        match self {
            GammaTap::None => 0,
            GammaTap::Linear(g) => g.nrows(),
            GammaTap::Nonlinear { dim, .. } => *dim,
        }
    }

    fn eval(&self, x: &Vector) -> Vector {
        match self {
            GammaTap::None => Vector::zeros(0),
            GammaTap::Linear(g) => g * x,
            GammaTap::Nonlinear { map, .. } => map(x),
        }
    }
}

impl fmt::Debug for GammaTap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaTap::None => f.write_str("None"),
            GammaTap::Linear(g) => write!(f, "Linear({}x{})", g.nrows(), g.ncols()),
            GammaTap::Nonlinear { dim, .. } => write!(f, "Nonlinear({dim})"),
        }
    }
}

/// Attaches a controller to plant input ports, a measurement `y = measurement x`
/// and an optional interconnection tap.
#[derive(Clone, Debug)]
pub struct Binding {
    pub controller: Arc<dyn Controller>,
    pub inputs: Vec<usize>,
    pub measurement: Matrix,
    pub gamma: GammaTap,
}

#[derive(Clone, Debug)]
pub struct ClosedLoop {
    plant: Plant,
    bindings: Vec<Binding>,
    offsets: Vec<usize>,
    augmented: Option<Matrix>,
    labels: Option<Vec<String>>,
}

pub fn assemble_closed_loop(plant: &PreexistingSystem, bindings: Vec<Binding>) -> Result<ClosedLoop> {
    ClosedLoop::new(plant.to_plant(), bindings)
}

impl ClosedLoop {
    pub fn new(plant: Plant, bindings: Vec<Binding>) -> Result<Self> {
        let mut used = vec![false; plant.m];
        let mut offsets = Vec::with_capacity(bindings.len());
        let mut dim = plant.n;
        for (k, bnd) in bindings.iter().enumerate() {
            let ctl = &bnd.controller;
            if bnd.inputs.len() != ctl.input_dim() {
                return Err(Error::Binding(format!(
                    "controller {k} drives {} inputs but is bound to {} ports",
                    ctl.input_dim(),
                    bnd.inputs.len()
                )));
            }
            for &i in &bnd.inputs {
                if i >= plant.m {
                    return Err(Error::Binding(format!("controller {k} binds input {i}, plant has {}", plant.m)));
                }
                if used[i] {
                    return Err(Error::Binding(format!("input port {i} bound twice")));
                }
                used[i] = true;
            }
            if bnd.measurement.ncols() != plant.n || bnd.measurement.nrows() != ctl.measurement_dim() {
                return Err(Error::dim(format!(
                    "controller {k} measurement is {}x{}, expected {}x{}",
                    bnd.measurement.nrows(),
                    bnd.measurement.ncols(),
                    ctl.measurement_dim(),
                    plant.n
                )));
            }
            if bnd.gamma.dim() != ctl.gamma_dim() {
                return Err(Error::dim(format!(
                    "controller {k} expects {} interconnection signals, tap provides {}",
                    ctl.gamma_dim(),
                    bnd.gamma.dim()
                )));
            }
            if let GammaTap::Linear(g) = &bnd.gamma {
                if g.ncols() != plant.n {
                    return Err(Error::dim(format!("controller {k} gamma tap has {} columns", g.ncols())));
                }
            }
            offsets.push(dim);
            dim += ctl.state_dim();
        }
        let mut cl = Self { plant, bindings, offsets, augmented: None, labels: None };
        cl.augmented = cl.build_augmented();
        Ok(cl)
    }

    fn build_augmented(&self) -> Option<Matrix> {
        let (a, b) = self.plant.linear.as_ref()?;
        let n = self.plant.n;
        let mut big = Matrix::zeros(self.dim(), self.dim());
        big.view_mut((0, 0), (n, n)).copy_from(a);
        for (bnd, &off) in self.bindings.iter().zip(&self.offsets) {
            let r = bnd.controller.realization()?;
            let g = match &bnd.gamma {
                GammaTap::None => Matrix::zeros(0, n),
                GammaTap::Linear(g) => g.clone(),
                GammaTap::Nonlinear { .. } => return None,
            };
            let k = r.a.nrows();
            let bk = Matrix::from_fn(n, bnd.inputs.len(), |i, j| b[(i, bnd.inputs[j])]);
            // u = c z + (d_y M + d_g G) x
            let dx = &r.d_y * &bnd.measurement + &r.d_gamma * &g;
            let mut top = big.view_mut((0, 0), (n, n));
            top += &bk * &dx;
            big.view_mut((0, off), (n, k)).copy_from(&(&bk * &r.c));
            big.view_mut((off, 0), (k, n)).copy_from(&(&r.b_y * &bnd.measurement + &r.b_gamma * &g));
            big.view_mut((off, off), (k, k)).copy_from(&r.a);
        }
        Some(big)
    }

    /// Names the plant coordinates; controller states are labelled `z{k}_{i}`.
    pub fn with_plant_labels(mut self, plant: Vec<String>) -> Result<Self> {
        if plant.len() != self.plant.n {
            return Err(Error::dim(format!("{} labels for {} plant states", plant.len(), self.plant.n)));
        }
        let mut labels = plant;
        for (k, b) in self.bindings.iter().enumerate() {
            labels.extend((0..b.controller.state_dim()).map(|i| format!("z{k}_{i}")));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.plant.n + self.bindings.iter().map(|b| b.controller.state_dim()).sum::<usize>()
    }
    pub fn plant(&self) -> &Plant {
        &self.plant
    }
    pub fn bindings(&self) -> &[Binding] {
        &self.bindings
    }
    /// Offset of controller `k`'s state in the augmented vector.
    pub fn controller_offset(&self, k: usize) -> usize {
        self.offsets[k]
    }
    /// Single realization when plant and all controllers are linear.
    pub fn augmented(&self) -> Option<&Matrix> {
        self.augmented.as_ref()
    }

    /// Plant state followed by each controller's initial state.
    pub fn initial_state(&self, x0: &Vector) -> Result<Vector> {
        if x0.len() != self.plant.n {
            return Err(Error::dim(format!("x0 has length {}, plant has {} states", x0.len(), self.plant.n)));
        }
        let mut out = Vector::zeros(self.dim());
        out.rows_mut(0, self.plant.n).copy_from(x0);
        for (bnd, &off) in self.bindings.iter().zip(&self.offsets) {
            let z0 = bnd.controller.initial_state();
            out.rows_mut(off, z0.len()).copy_from(&z0);
        }
        Ok(out)
    }

    /// Plant input vector at the augmented state `w`.
    pub fn inputs(&self, w: &Vector) -> Vector {
        let x = w.rows(0, self.plant.n).clone_owned();
        let mut u = Vector::zeros(self.plant.m);
        for (bnd, &off) in self.bindings.iter().zip(&self.offsets) {
            let z = w.rows(off, bnd.controller.state_dim()).clone_owned();
            let uk = bnd.controller.output(&z, &(&bnd.measurement * &x), &bnd.gamma.eval(&x));
            for (j, &port) in bnd.inputs.iter().enumerate() {
                u[port] = uk[j];
            }
        }
        u
    }

    pub fn derivative(&self, w: &Vector) -> Vector {
        let n = self.plant.n;
        let x = w.rows(0, n).clone_owned();
        let mut out = Vector::zeros(self.dim());
        let mut u = Vector::zeros(self.plant.m);
        for (bnd, &off) in self.bindings.iter().zip(&self.offsets) {
            let k = bnd.controller.state_dim();
            let z = w.rows(off, k).clone_owned();
            let y = &bnd.measurement * &x;
            let gamma = bnd.gamma.eval(&x);
            let uk = bnd.controller.output(&z, &y, &gamma);
            for (j, &port) in bnd.inputs.iter().enumerate() {
                u[port] = uk[j];
            }
            out.rows_mut(off, k).copy_from(&bnd.controller.derivative(&z, &y, &gamma));
        }
        out.rows_mut(0, n).copy_from(&self.plant.derivative(&x, &u));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `z' = -z + y`, `u = -z - y`; linear with a realization.
    #[derive(Debug)]
    struct Lag;

    impl Controller for Lag {
        fn state_dim(&self) -> usize {
            1
        }
        fn input_dim(&self) -> usize {
            1
        }
        fn measurement_dim(&self) -> usize {
            1
        }
        fn gamma_dim(&self) -> usize {
            0
        }
        fn derivative(&self, z: &Vector, y: &Vector, _g: &Vector) -> Vector {
            -z + y
        }
        fn output(&self, z: &Vector, y: &Vector, _g: &Vector) -> Vector {
            -z - y
        }
        fn realization(&self) -> Option<ControllerRealization> {
            let s = |v| Matrix::from_element(1, 1, v);
            Some(ControllerRealization {
                a: s(-1.0),
                b_y: s(1.0),
                b_gamma: Matrix::zeros(1, 0),
                c: s(-1.0),
                d_y: s(-1.0),
                d_gamma: Matrix::zeros(1, 0),
            })
        }
    }

    fn plant2() -> Plant {
        Plant::linear(Matrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.2, -2.0]), Matrix::identity(2, 2))
    }

    fn lag_on(port: usize, row: usize) -> Binding {
        let mut m = Matrix::zeros(1, 2);
        m[(0, row)] = 1.0;
        Binding { controller: Arc::new(Lag), inputs: vec![port], measurement: m, gamma: GammaTap::None }
    }

    #[test]
    fn no_controllers_is_the_plant() {
        let cl = ClosedLoop::new(plant2(), vec![]).unwrap();
        assert_eq!(cl.augmented().unwrap(), &plant2().matrices().unwrap().0);
    }

    #[test]
    fn augmented_matches_component_field() {
        let cl = ClosedLoop::new(plant2(), vec![lag_on(0, 0), lag_on(1, 1)]).unwrap();
        assert_eq!(cl.dim(), 4);
        let w = Vector::from_vec(vec![0.3, -1.2, 0.7, 0.1]);
        let direct = cl.augmented().unwrap() * &w;
        assert!((direct - cl.derivative(&w)).norm() < 1e-14);
    }

    #[test]
    fn overlapping_ports_rejected() {
        let err = ClosedLoop::new(plant2(), vec![lag_on(0, 0), lag_on(0, 1)]).unwrap_err();
        assert!(matches!(err, Error::Binding(_)));
    }

    #[test]
    fn wrong_measurement_shape_rejected() {
        let mut b = lag_on(0, 0);
        b.measurement = Matrix::zeros(2, 2);
        assert!(matches!(ClosedLoop::new(plant2(), vec![b]), Err(Error::Dimension(_))));
    }
}
