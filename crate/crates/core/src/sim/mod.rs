//! Deterministic integration of closed loops with time-triggered resets, and
//! trajectory metrics.

mod integrate;
mod trajectory;

pub use integrate::{default_horizon, integrate, EventSpec, IntegratorConfig, Method, Reset, DIVERGENCE_LIMIT};
pub use trajectory::{min_pairwise_gap, min_pairwise_gap_offset, L2Norm, Trajectory};

use std::sync::Arc;

use crate::numlin::{Matrix, Vector};
use crate::sysmodel::ClosedLoop;

/// Anything that can be integrated: `x' = f(t, x)` plus a recorded input signal.
pub trait OdeSystem: Sync {
    fn dim(&self) -> usize;
    fn derivative(&self, t: f64, x: &Vector) -> Vector;
    fn input_dim(&self) -> usize {
        0
    }
    fn inputs(&self, _t: f64, _x: &Vector) -> Vector {
        Vector::zeros(0)
    }
    fn labels(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("x{i}")).collect()
    }
    fn input_labels(&self) -> Vec<String> {
        (0..self.input_dim()).map(|i| format!("u{i}")).collect()
    }
}

impl OdeSystem for ClosedLoop {
    fn dim(&self) -> usize {
        ClosedLoop::dim(self)
    }
    fn derivative(&self, _t: f64, x: &Vector) -> Vector {
        ClosedLoop::derivative(self, x)
    }
    fn input_dim(&self) -> usize {
        self.plant().m()
    }
    fn inputs(&self, _t: f64, x: &Vector) -> Vector {
        ClosedLoop::inputs(self, x)
    }
    fn labels(&self) -> Vec<String> {
        match ClosedLoop::labels(self) {
            Some(l) => l.to_vec(),
            None => (0..ClosedLoop::dim(self)).map(|i| format!("x{i}")).collect(),
        }
    }
}

/// `x' = a x`.
#[derive(Clone, Debug)]
pub struct LinearOde(pub Matrix);

impl OdeSystem for LinearOde {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn derivative(&self, _t: f64, x: &Vector) -> Vector {
        &self.0 * x
    }
}

pub type TimeField = Arc<dyn Fn(f64, &Vector) -> Vector + Send + Sync>;
/// Open-loop signal `t -> u(t)`.
pub type Signal = Arc<dyn Fn(f64) -> Vector + Send + Sync>;

/// Closure-backed system with optional input recording and labels.
#[derive(Clone)]
pub struct FnSystem {
    dim: usize,
    field: TimeField,
    input: Option<(usize, TimeField)>,
    labels: Option<Vec<String>>,
    input_labels: Option<Vec<String>>,
}

impl FnSystem {
    pub fn new(dim: usize, field: TimeField) -> Self {
        Self { dim, field, input: None, labels: None, input_labels: None }
    }
    pub fn with_inputs(mut self, dim: usize, map: TimeField) -> Self {
        self.input = Some((dim, map));
        self
    }
    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = Some(labels);
        self
    }
    pub fn with_input_labels(mut self, labels: Vec<String>) -> Self {
        self.input_labels = Some(labels);
        self
    }
}

impl OdeSystem for FnSystem {
    fn dim(&self) -> usize {
        self.dim
    }
    fn derivative(&self, t: f64, x: &Vector) -> Vector {
        (self.field)(t, x)
    }
    fn input_dim(&self) -> usize {
        self.input.as_ref().map_or(0, |(d, _)| *d)
    }
    fn inputs(&self, t: f64, x: &Vector) -> Vector {
        self.input.as_ref().map_or_else(|| Vector::zeros(0), |(_, f)| f(t, x))
    }
    fn labels(&self) -> Vec<String> {
        self.labels.clone().unwrap_or_else(|| (0..self.dim).map(|i| format!("x{i}")).collect())
    }
    fn input_labels(&self) -> Vec<String> {
        self.input_labels.clone().unwrap_or_else(|| (0..self.input_dim()).map(|i| format!("u{i}")).collect())
    }
}
