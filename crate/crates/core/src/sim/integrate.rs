use serde::{Deserialize, Serialize};

use super::{OdeSystem, Trajectory};
use crate::error::{Error, Result};
use crate::numlin::{spectral_abscissa, Matrix, Vector};

/// States beyond this magnitude abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Rk4 { dt: f64 },
    Rk45 { rtol: f64, atol: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    #[serde(flatten)]
    pub method: Method,
    pub horizon: f64,
    /// Keep every `stride`-th step (segment ends are always kept).
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

impl IntegratorConfig {
    pub fn rk4(dt: f64, horizon: f64) -> Self {
        Self { method: Method::Rk4 { dt }, horizon, stride: 1 }
    }
    pub fn rk45(rtol: f64, atol: f64, horizon: f64) -> Self {
        Self { method: Method::Rk45 { rtol, atol }, horizon, stride: 1 }
    }
    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::Rk4 { dt } => dt > 0.0 && dt.is_finite(),
            Method::Rk45 { rtol, atol } => rtol > 0.0 && atol > 0.0,
        };
        if !ok || !(self.horizon > 0.0) || !self.horizon.is_finite() || self.stride == 0 {
            return Err(Error::Config(format!("invalid integrator settings {self:?}")));
        }
        Ok(())
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self::rk4(1e-3, 10.0)
    }
}

/// Horizon `10 / |abscissa|` for a stable linear loop.
pub fn default_horizon(a: &Matrix) -> Result<f64> {
    let s = spectral_abscissa(a)?;
    if !(s < 0.0) {
        return Err(Error::NotHurwitz { abscissa: s });
    }
    Ok(10.0 / s.abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reset {
    /// `x[i] = value`
    Set { coords: Vec<(usize, f64)> },
    /// `x[i] = scale * x[i] + offset`
    Affine { coords: Vec<(usize, f64, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub time: f64,
    pub action: Reset,
}

impl EventSpec {
    pub fn set(time: f64, coords: Vec<(usize, f64)>) -> Self {
        Self { time, action: Reset::Set { coords } }
    }

    fn apply(&self, x: &mut Vector) -> Result<()> {
        let n = x.len();
        let check = |i: usize| {
            if i < n {
                Ok(())
            } else {
                Err(Error::dim(format!("event at t = {} resets coordinate {i} of {n}", self.time)))
            }
        };
        match &self.action {
            Reset::Set { coords } => {
                for &(i, v) in coords {
                    check(i)?;
                    x[i] = v;
                }
            }
            Reset::Affine { coords } => {
                for &(i, s, o) in coords {
                    check(i)?;
                    x[i] = s * x[i] + o;
                }
            }
        }
        Ok(())
    }
}

/// Integrates `sys` from `x0` over `[0, cfg.horizon]`. Integration stops
/// exactly at each event time, applies the reset and restarts; the sample at
/// an event time holds the post-reset state.
pub fn integrate(sys: &dyn OdeSystem, x0: &Vector, cfg: &IntegratorConfig, events: &[EventSpec]) -> Result<Trajectory> {
    cfg.validate()?;
    if x0.len() != sys.dim() {
        return Err(Error::dim(format!("x0 has length {}, system has {} states", x0.len(), sys.dim())));
    }
    let mut last = 0.0;
    for ev in events {
        if !(ev.time >= last) || ev.time > cfg.horizon {
            return Err(Error::Config(format!("event times must be sorted and within [0, {}]", cfg.horizon)));
        }
        last = ev.time;
    }

    let mut traj = Trajectory::new(sys.labels(), sys.input_labels());
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut pending = events.iter().peekable();
    while let Some(ev) = pending.next_if(|e| e.time == 0.0) {
        ev.apply(&mut x)?;
        traj.mark_event(0.0);
    }
    check_state(&traj, 0.0, &x)?;
    traj.push(0.0, &x, &sys.inputs(0.0, &x));

    let mut counter = 0usize;
    loop {
        let t_end = pending.peek().map_or(cfg.horizon, |e| e.time);
        if t_end > t {
            match cfg.method {
                Method::Rk4 { dt } => rk4_segment(sys, &mut x, t, t_end, dt, cfg.stride, &mut counter, &mut traj)?,
                Method::Rk45 { rtol, atol } => {
                    rk45_segment(sys, &mut x, t, t_end, rtol, atol, cfg.stride, &mut counter, &mut traj)?
                }
            }
            t = t_end;
        }
        let mut fired = false;
        while let Some(ev) = pending.next_if(|e| e.time == t_end) {
            ev.apply(&mut x)?;
            fired = true;
        }
        if fired {
            traj.mark_event(t);
            traj.replace_last(t, &x, &sys.inputs(t, &x));
        }
        if pending.peek().is_none() && t >= cfg.horizon {
            break;
        }
    }
    Ok(traj)
}

fn check_state(traj: &Trajectory, t: f64, x: &Vector) -> Result<()> {
    if x.iter().all(|v| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT) {
        Ok(())
    } else {
        Err(Error::Divergence { time: t, partial: Box::new(traj.clone()) })
    }
}

#[allow(clippy::too_many_arguments)]
fn rk4_segment(
    sys: &dyn OdeSystem,
    x: &mut Vector,
    t0: f64,
    t1: f64,
    dt: f64,
    stride: usize,
    counter: &mut usize,
    traj: &mut Trajectory,
) -> Result<()> {
    let steps = (((t1 - t0) / dt) - 1e-9).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let k1 = sys.derivative(t, x);
        let k2 = sys.derivative(t + 0.5 * h, &(&*x + &k1 * (0.5 * h)));
        let k3 = sys.derivative(t + 0.5 * h, &(&*x + &k2 * (0.5 * h)));
        let k4 = sys.derivative(t + h, &(&*x + &k3 * h));
        *x += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        let tn = if k + 1 == steps { t1 } else { t0 + (k + 1) as f64 * h };
        check_state(traj, tn, x)?;
        *counter += 1;
        if counter.is_multiple_of(stride) || k + 1 == steps {
            traj.push(tn, x, &sys.inputs(tn, x));
        }
    }
    Ok(())
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

#[allow(clippy::too_many_arguments)]
fn rk45_segment(
    sys: &dyn OdeSystem,
    x: &mut Vector,
    t0: f64,
    t1: f64,
    rtol: f64,
    atol: f64,
    stride: usize,
    counter: &mut usize,
    traj: &mut Trajectory,
) -> Result<()> {
    let mut t = t0;
    let mut h = ((t1 - t0) * 1e-3).max(1e-6).min(t1 - t0);
    let min_h = 1e-12 * (1.0 + t1.abs());
    while t < t1 {
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        let mut k: Vec<Vector> = Vec::with_capacity(7);
        for s in 0..7 {
            let mut xs = x.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[s][j] != 0.0 {
                    xs += kj * (A[s][j] * h);
                }
            }
            k.push(sys.derivative(t + C[s] * h, &xs));
        }
        let mut x5 = x.clone();
        let mut err = Vector::zeros(x.len());
        for s in 0..7 {
            x5 += &k[s] * (B5[s] * h);
            err += &k[s] * ((B5[s] - B4[s]) * h);
        }
        let norm = if x.is_empty() {
            0.0
        } else {
            (err.iter()
                .zip(x.iter().zip(x5.iter()))
                .map(|(e, (a, b))| (e / (atol + rtol * a.abs().max(b.abs()))).powi(2))
                .sum::<f64>()
                / x.len() as f64)
                .sqrt()
        };
        if !norm.is_finite() {
            return Err(Error::Divergence { time: t, partial: Box::new(traj.clone()) });
        }
        if norm <= 1.0 {
            t = if last { t1 } else { t + h };
            *x = x5;
            check_state(traj, t, x)?;
            *counter += 1;
            if counter.is_multiple_of(stride) || last {
                traj.push(t, x, &sys.inputs(t, x));
            }
        }
        let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < min_h {
            return Err(Error::Divergence { time: t, partial: Box::new(traj.clone()) });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::expm;
    use crate::sim::{FnSystem, LinearOde};
    use std::sync::Arc;

    fn decay() -> LinearOde {
        LinearOde(Matrix::from_element(1, 1, -1.0))
    }

    #[test]
    fn rk4_exponential() {
        let tr = integrate(&decay(), &Vector::from_element(1, 1.0), &IntegratorConfig::rk4(1e-3, 1.0), &[]).unwrap();
        assert_eq!(*tr.times().last().unwrap(), 1.0);
        assert!((tr.final_state()[0] - (-1f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn rk4_fourth_order() {
        let err = |dt: f64| {
            let tr = integrate(&decay(), &Vector::from_element(1, 1.0), &IntegratorConfig::rk4(dt, 1.0), &[]).unwrap();
            (tr.final_state()[0] - (-1f64).exp()).abs()
        };
        let (e1, e2, e3) = (err(1e-2), err(5e-3), err(2.5e-3));
        for ratio in [e1 / e2, e2 / e3] {
            assert!((ratio / 16.0 - 1.0).abs() < 0.1, "ratio {ratio}");
        }
    }

    #[test]
    fn matches_matrix_exponential() {
        let a = Matrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, -2.0, -1.0, 0.5, 0.0, 0.3, -0.4]);
        let x0 = Vector::from_vec(vec![1.0, -0.5, 2.0]);
        let tr = integrate(&LinearOde(a.clone()), &x0, &IntegratorConfig::rk4(1e-3, 3.0).with_stride(500), &[]).unwrap();
        for (k, &t) in tr.times().iter().enumerate() {
            let want = expm(&a, t) * &x0;
            let got = Vector::from_row_slice(tr.state(k));
            assert!((got - want).norm() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn rk45_matches_rk4() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -0.2]);
        let x0 = Vector::from_vec(vec![1.0, 0.0]);
        let tr = integrate(&LinearOde(a.clone()), &x0, &IntegratorConfig::rk45(1e-10, 1e-12, 5.0), &[]).unwrap();
        let want = expm(&a, 5.0) * &x0;
        assert!((Vector::from_row_slice(tr.final_state()) - want).norm() < 1e-7);
    }

    #[test]
    fn event_reset_is_exact() {
        let sys = LinearOde(-Matrix::identity(2, 2));
        let ev = EventSpec::set(10.0, vec![(1, 0.0)]);
        let tr = integrate(&sys, &Vector::from_vec(vec![1.0, 1.0]), &IntegratorConfig::rk4(1e-3, 12.0).with_stride(100), &[ev]).unwrap();
        let k = tr.times().iter().position(|&t| t == 10.0).unwrap();
        assert_eq!(tr.state(k)[1], 0.0);
        assert!(tr.state(k)[0] > 0.0);
        assert_eq!(tr.events(), &[10.0]);
        assert!(tr.times().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn divergence_carries_partial_trajectory() {
        let sys = LinearOde(Matrix::from_element(1, 1, 5.0));
        let err = integrate(&sys, &Vector::from_element(1, 1.0), &IntegratorConfig::rk4(1e-2, 100.0), &[]).unwrap_err();
        match err {
            Error::Divergence { time, partial } => {
                assert!(time > 5.0 && time < 6.0);
                assert!(partial.len() > 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let sys = FnSystem::new(2, Arc::new(|t: f64, x: &Vector| Vector::from_vec(vec![x[1], -x[0].sin() + t.cos()])));
        let run = || integrate(&sys, &Vector::from_vec(vec![0.1, 0.0]), &IntegratorConfig::rk45(1e-8, 1e-10, 7.0), &[]).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.times(), b.times());
        assert_eq!(a.final_state(), b.final_state());
    }

    #[test]
    fn unsorted_events_rejected() {
        let evs = [EventSpec::set(2.0, vec![]), EventSpec::set(1.0, vec![])];
        assert!(integrate(&decay(), &Vector::from_element(1, 1.0), &IntegratorConfig::rk4(1e-2, 3.0), &evs).is_err());
    }
}
