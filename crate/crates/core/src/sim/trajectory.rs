use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_csv;

/// Sampled solution: strictly increasing times, row-major state and input
/// samples, coordinate labels and the times at which resets fired.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<f64>,
    inputs: Vec<f64>,
    labels: Vec<String>,
    input_labels: Vec<String>,
    events: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2Norm {
    pub value: f64,
    /// The tail did not decay below `1e-3` of the peak; the finite-horizon
    /// value may underestimate the infinite-horizon norm.
    pub truncated: bool,
}

impl Trajectory {
    pub(crate) fn new(labels: Vec<String>, input_labels: Vec<String>) -> Self {
        Self { labels, input_labels, ..Self::default() }
    }

    pub(crate) fn push(&mut self, t: f64, x: &crate::Vector, u: &crate::Vector) {
        self.times.push(t);
        self.states.extend(x.iter());
        self.inputs.extend(u.iter());
    }

    pub(crate) fn replace_last(&mut self, t: f64, x: &crate::Vector, u: &crate::Vector) {
        let (n, m) = (self.dim(), self.input_dim());
        self.times.pop();
        self.states.truncate(self.states.len() - n);
        self.inputs.truncate(self.inputs.len() - m);
        self.push(t, x, u);
    }

    pub(crate) fn mark_event(&mut self, t: f64) {
        self.events.push(t);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.labels.len()
    }
    pub fn input_dim(&self) -> usize {
        self.input_labels.len()
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn labels(&self) -> &[String] {
        &self.labels
    }
    pub fn input_labels(&self) -> &[String] {
        &self.input_labels
    }
    pub fn events(&self) -> &[f64] {
        &self.events
    }
    pub fn state(&self, k: usize) -> &[f64] {
        let n = self.dim();
        &self.states[k * n..(k + 1) * n]
    }
    pub fn input(&self, k: usize) -> &[f64] {
        let m = self.input_dim();
        &self.inputs[k * m..(k + 1) * m]
    }
    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }
    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.state(k)[i]).collect()
    }

    /// `max_t |u(t)|_inf`.
    pub fn input_sup(&self) -> f64 {
        self.inputs.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max_t |x_i(t)|` over the selected coordinates.
    pub fn state_sup(&self, selector: &[usize]) -> f64 {
        (0..self.len()).flat_map(|k| selector.iter().map(move |&i| self.state(k)[i].abs())).fold(0.0, f64::max)
    }

    /// Trapezoid quadrature of `|x_sel(t)|^2`, square-rooted.
    pub fn l2_norm(&self, selector: &[usize]) -> Result<L2Norm> {
        if selector.is_empty() {
            return Err(Error::Config("empty coordinate selector".into()));
        }
        if let Some(&bad) = selector.iter().find(|&&i| i >= self.dim()) {
            return Err(Error::dim(format!("selector index {bad} out of {} coordinates", self.dim())));
        }
        let sq: Vec<f64> = (0..self.len()).map(|k| selector.iter().map(|&i| self.state(k)[i].powi(2)).sum()).collect();
        let mut acc = 0.0;
        for k in 1..self.len() {
            acc += 0.5 * (sq[k] + sq[k - 1]) * (self.times[k] - self.times[k - 1]);
        }
        let peak = sq.iter().fold(0.0f64, |m, &v| m.max(v)).sqrt();
        let tail = (self.len() / 20).max(1);
        let tail_rms = (sq[self.len() - tail..].iter().sum::<f64>() / tail as f64).sqrt();
        Ok(L2Norm { value: acc.sqrt(), truncated: tail_rms >= 1e-3 * peak && peak > 0.0 })
    }

    /// CSV with a `t` column, the state labels and the input labels.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(self.labels.iter().cloned());
        header.extend(self.input_labels.iter().cloned());
        write_csv(
            path,
            &header,
            (0..self.len()).map(|k| {
                let mut row = vec![self.times[k]];
                row.extend_from_slice(self.state(k));
                row.extend_from_slice(self.input(k));
                row
            }),
        )
    }
}

/// Smallest `x[coords[i+1]] - x[coords[i]]` over all samples; non-positive
/// values signal a collision.
pub fn min_pairwise_gap(traj: &Trajectory, coords: &[usize]) -> f64 {
    min_pairwise_gap_offset(traj, coords, &vec![0.0; coords.len()])
}

/// As [`min_pairwise_gap`] with positions `base[i] + x[coords[i]]`, for
/// trajectories stored as deviations from a reference.
pub fn min_pairwise_gap_offset(traj: &Trajectory, coords: &[usize], base: &[f64]) -> f64 {
    assert!(coords.len() >= 2 && base.len() == coords.len(), "need at least two positions");
    let mut gap = f64::INFINITY;
    for k in 0..traj.len() {
        let s = traj.state(k);
        for i in 0..coords.len() - 1 {
            gap = gap.min((base[i + 1] + s[coords[i + 1]]) - (base[i] + s[coords[i]]));
        }
    }
    gap
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::{ic_response_l2, Matrix};
    use crate::sim::{integrate, IntegratorConfig, LinearOde};
    use crate::Vector;

    fn from_rows(times: &[f64], rows: &[&[f64]]) -> Trajectory {
        let n = rows[0].len();
        let mut tr = Trajectory::new((0..n).map(|i| format!("x{i}")).collect(), vec![]);
        for (t, r) in times.iter().zip(rows) {
            tr.push(*t, &Vector::from_row_slice(r), &Vector::zeros(0));
        }
        tr
    }

    #[test]
    fn zero_trajectory() {
        let tr = from_rows(&[0.0, 1.0], &[&[0.0], &[0.0]]);
        let n = tr.l2_norm(&[0]).unwrap();
        assert_eq!(n.value, 0.0);
        assert!(!n.truncated);
        assert!(tr.l2_norm(&[]).is_err());
    }

    #[test]
    fn exponential_l2() {
        let tr = integrate(
            &LinearOde(Matrix::from_element(1, 1, -1.0)),
            &Vector::from_element(1, 1.0),
            &IntegratorConfig::rk4(1e-3, 20.0),
            &[],
        )
        .unwrap();
        let n = tr.l2_norm(&[0]).unwrap();
        assert!((n.value - 0.5f64.sqrt()).abs() < 1e-4);
        assert!(!n.truncated);
    }

    #[test]
    fn truncation_flagged() {
        let tr = from_rows(&[0.0, 1.0, 2.0], &[&[1.0], &[1.0], &[1.0]]);
        assert!(tr.l2_norm(&[0]).unwrap().truncated);
    }

    #[test]
    fn matches_gramian() {
        let a = Matrix::from_row_slice(3, 3, &[-1.0, 0.4, 0.0, -0.3, -2.0, 1.0, 0.2, 0.0, -0.7]);
        let x0 = Vector::from_vec(vec![0.5, -1.0, 0.3]);
        let tr = integrate(&LinearOde(a.clone()), &x0, &IntegratorConfig::rk4(1e-3, 40.0), &[]).unwrap();
        let c = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let want = ic_response_l2(&a, &c, &x0).unwrap();
        let got = tr.l2_norm(&[0, 2]).unwrap().value;
        assert!((got - want).abs() <= 1e-3 * want);
    }

    #[test]
    fn gaps() {
        let tr = from_rows(&[0.0, 1.0], &[&[0.0, 2.7, 5.4], &[0.0, 2.7, 5.4]]);
        assert!((min_pairwise_gap(&tr, &[0, 1, 2]) - 2.7).abs() < 1e-15);
        let crossing = from_rows(&[0.0, 1.0], &[&[0.0, 1.0], &[2.0, 1.0]]);
        assert!(min_pairwise_gap(&crossing, &[0, 1]) < 0.0);
        let offset = from_rows(&[0.0], &[&[0.0, 0.0]]);
        assert_eq!(min_pairwise_gap_offset(&offset, &[0, 1], &[2.7, 5.4]), 2.7);
    }

    #[test]
    fn csv_export() {
        let dir = tempfile::tempdir().unwrap();
        let tr = from_rows(&[0.0, 0.5], &[&[1.0], &[0.25]]);
        let path = dir.path().join("t.csv");
        tr.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "t,x0\n0.0000000000000000e0,1.0000000000000000e0\n5.0000000000000000e-1,2.5000000000000000e-1\n");
    }
}
