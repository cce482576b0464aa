//! Vehicle platoon with a car-following driver model, in deviation
//! coordinates from the steady trajectory `p_i = i dp + vbar t`, `v_i = vbar`.
//!
//! ```text
//! p_i' = v_i
//! v_i' = kappa (f(p_{i+1} - p_i) g(p_i - p_{i-1}) - v_i) + w_i
//! f(x) = tanh(x - 2) + tanh(2)
//! g(x) = 1 + 5 (1 - tanh(3x - 2.1))
//! ```
//!
//! Vehicle `N` leads. Phantoms `p_{N+1} = p_N + dp` and `p_0 = p_1 - dp`
//! close the chain. Vehicles are numbered from 1.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numlin::{eigenvalues, rank, Matrix, Vector};
use crate::sim::{EventSpec, Reset};
use crate::sysmodel::{LinearSubsystem, NonlinearEnvironment, NonlinearResidual, PreexistingSystem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlatoonConfig {
    pub vehicles: usize,
    pub kappa: f64,
    pub spacing: f64,
    pub controlled: usize,
    /// First and last vehicle of the measured window.
    pub window: [usize; 2],
}

impl Default for PlatoonConfig {
    fn default() -> Self {
        Self { vehicles: 12, kappa: 0.06, spacing: 2.7, controlled: 10, window: [5, 11] }
    }
}

pub fn headway_f(x: f64) -> f64 {
    (x - 2.0).tanh() + 2f64.tanh()
}

pub fn headway_g(x: f64) -> f64 {
    1.0 + 5.0 * (1.0 - (3.0 * x - 2.1).tanh())
}

fn sech2(x: f64) -> f64 {
    1.0 - x.tanh().powi(2)
}

/// Deviation dynamics of the whole platoon. State layout is
/// `[dp_1, dv_1, ..., dp_N, dv_N]`.
#[derive(Clone, Debug)]
pub struct PlatoonModel {
    n: usize,
    kappa: f64,
    spacing: f64,
    vbar: f64,
}

impl PlatoonModel {
    pub fn new(vehicles: usize, kappa: f64, spacing: f64) -> Self {
        let vbar = headway_f(spacing) * headway_g(spacing);
        Self { n: vehicles, kappa, spacing, vbar }
    }
    pub fn vehicles(&self) -> usize {
        self.n
    }
    pub fn vbar(&self) -> f64 {
        self.vbar
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn p(i: usize) -> usize {
        2 * (i - 1)
    }
    pub fn v(i: usize) -> usize {
        2 * (i - 1) + 1
    }

    fn dp(&self, x: &Vector, i: usize) -> f64 {
        if i == 0 {
            x[Self::p(1)]
        } else if i > self.n {
            x[Self::p(self.n)]
        } else {
            x[Self::p(i)]
        }
    }

    /// Acceleration of vehicle `i` given the positions it sees.
    fn accel(&self, ahead: f64, own: f64, behind: f64, dv: f64) -> f64 {
        let d = self.spacing;
        self.kappa * (headway_f(d + ahead - own) * headway_g(d + own - behind) - self.vbar - dv)
    }

    pub fn field(&self, x: &Vector, w: &Vector) -> Vector {
        let mut out = Vector::zeros(2 * self.n);
        for i in 1..=self.n {
            out[Self::p(i)] = x[Self::v(i)];
            out[Self::v(i)] = self.accel(self.dp(x, i + 1), self.dp(x, i), self.dp(x, i - 1), x[Self::v(i)]) + w[i - 1];
        }
        out
    }

    /// Jacobian at the equilibrium, with input matrix `e_{v_i}` columns.
    pub fn linearization(&self) -> Matrix {
        let d = self.spacing;
        let (a, b) = (sech2(d - 2.0) * headway_g(d), headway_f(d) * -15.0 * sech2(3.0 * d - 2.1));
        let k = self.kappa;
        let mut m = Matrix::zeros(2 * self.n, 2 * self.n);
        for i in 1..=self.n {
            let (pi, vi) = (Self::p(i), Self::v(i));
            m[(pi, vi)] = 1.0;
            m[(vi, vi)] = -k;
            // phantoms fold back onto the end vehicles
            let ahead = Self::p(if i == self.n { i } else { i + 1 });
            let behind = Self::p(if i == 1 { i } else { i - 1 });
            m[(vi, ahead)] += k * a;
            m[(vi, pi)] += k * (b - a);
            m[(vi, behind)] -= k * b;
        }
        m
    }

    /// Spectral abscissa with the common-translation eigenvalue removed.
    pub fn stability_margin(&self) -> Result<f64> {
        let mut eig = eigenvalues(&self.linearization())?;
        let zero = (0..eig.len())
            .min_by(|&i, &j| eig[i].norm().total_cmp(&eig[j].norm()))
            .ok_or_else(|| Error::Config("empty platoon".into()))?;
        eig.remove(zero);
        Ok(eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Platoon split into the measured window (linearized, with residual) and
/// the remaining vehicles.
#[derive(Clone, Debug)]
pub struct Platoon {
    pub config: PlatoonConfig,
    pub model: PlatoonModel,
    pub plant: PreexistingSystem,
    /// Vehicle-ordered index of each plant coordinate.
    pub order: Vec<usize>,
    /// Plant coordinate of `dp_i`, indexed by vehicle (entry 0 unused).
    pub position: Vec<usize>,
    pub velocity: Vec<usize>,
    pub labels: Vec<String>,
}

impl Platoon {
    /// Reset that scales vehicle `i`'s velocity by `keep` (0 for a full stop).
    pub fn brake(&self, time: f64, vehicle: usize, keep: f64) -> Result<EventSpec> {
        if vehicle == 0 || vehicle > self.config.vehicles {
            return Err(Error::Config(format!("vehicle {vehicle} out of range")));
        }
        // v = keep * v  <=>  dv = keep * dv - (1 - keep) vbar
        let offset = -(1.0 - keep) * self.model.vbar();
        Ok(EventSpec { time, action: Reset::Affine { coords: vec![(self.velocity[vehicle], keep, offset)] } })
    }

    /// Plant coordinates of all positions, ordered by vehicle.
    pub fn position_coords(&self) -> Vec<usize> {
        self.position[1..].to_vec()
    }

    /// Steady-state spacing offsets matching [`Self::position_coords`].
    pub fn position_base(&self) -> Vec<f64> {
        (1..=self.config.vehicles).map(|i| i as f64 * self.config.spacing).collect()
    }
}

pub fn build_platoon(cfg: &PlatoonConfig) -> Result<Platoon> {
    let n = cfg.vehicles;
    let [lo, hi] = cfg.window;
    if n == 0 || lo == 0 || lo > hi || hi > n {
        return Err(Error::Config(format!("window {lo}..={hi} does not fit {n} vehicles")));
    }
    if cfg.controlled < lo || cfg.controlled > hi {
        return Err(Error::Config("controlled vehicle must lie in the measured window".into()));
    }
    if !(cfg.kappa > 0.0) || !(cfg.spacing > 0.0) {
        return Err(Error::Config("kappa and spacing must be positive".into()));
    }
    let model = PlatoonModel::new(n, cfg.kappa, cfg.spacing);
    let margin = model.stability_margin()?;
    if !(margin < 0.0) {
        return Err(Error::NotHurwitz { abscissa: margin });
    }

    let inside: Vec<usize> = (lo..=hi).collect();
    let outside: Vec<usize> = (1..=n).filter(|i| *i < lo || *i > hi).collect();
    let mut order = Vec::with_capacity(2 * n);
    for &i in inside.iter().chain(&outside) {
        order.push(PlatoonModel::p(i));
        order.push(PlatoonModel::v(i));
    }
    let mut position = vec![usize::MAX; n + 1];
    let mut velocity = vec![usize::MAX; n + 1];
    for (k, &g) in order.iter().enumerate() {
        let i = g / 2 + 1;
        if g % 2 == 0 {
            position[i] = k;
        } else {
            velocity[i] = k;
        }
    }
    let n1 = 2 * inside.len();
    let n2 = 2 * outside.len();

    // Window-local model: outside vehicles frozen at equilibrium.
    let full_lin = model.linearization();
    let a1 = Matrix::from_fn(n1, n1, |r, c| full_lin[(order[r], order[c])]);
    let mut b1 = Matrix::zeros(n1, 1);
    b1[(velocity[cfg.controlled], 0)] = 1.0;
    // Ports: window vehicles whose neighbour lies outside.
    let ports: Vec<usize> = inside.iter().copied().filter(|&i| (i == lo && lo > 1) || (i == hi && hi < n)).collect();
    let mut l1 = Matrix::zeros(n1, ports.len());
    for (k, &i) in ports.iter().enumerate() {
        l1[(velocity[i], k)] = 1.0;
    }
    if rank(&l1) != ports.len() {
        return Err(Error::Config("interconnection ports are not independent".into()));
    }
    let sub = LinearSubsystem::new(a1.clone(), b1, Matrix::identity(n1, n1), l1)?;

    let to_global = {
        let order = order.clone();
        move |x1: &Vector, x2: &Vector| {
            let mut g = Vector::zeros(order.len());
            for (k, &o) in order.iter().enumerate() {
                g[o] = if k < x1.len() { x1[k] } else { x2[k - x1.len()] };
            }
            g
        }
    };
    let zero_w = Vector::zeros(n);
    let zero_x2 = Vector::zeros(n2);

    let residual = {
        let (model, to_global, order, a1, zero_x2, zero_w) =
            (model.clone(), to_global.clone(), order.clone(), a1.clone(), zero_x2.clone(), zero_w.clone());
        NonlinearResidual::new(Arc::new(move |x1: &Vector| {
            let f = model.field(&to_global(x1, &zero_x2), &zero_w);
            Vector::from_fn(x1.len(), |r, _| f[order[r]]) - &a1 * x1
        }))
    };
    let dynamics = {
        let (model, to_global, order, zero_w) = (model.clone(), to_global.clone(), order.clone(), zero_w.clone());
        Arc::new(move |x2: &Vector, x1: &Vector| {
            let f = model.field(&to_global(x1, x2), &zero_w);
            Vector::from_fn(x2.len(), |r, _| f[order[n1 + r]])
        })
    };
    let output = {
        let (model, to_global, zero_x2, zero_w) = (model.clone(), to_global.clone(), zero_x2.clone(), zero_w.clone());
        let port_rows: Vec<usize> = ports.iter().map(|&i| PlatoonModel::v(i)).collect();
        Arc::new(move |x2: &Vector, x1: &Vector| {
            let actual = model.field(&to_global(x1, x2), &zero_w);
            let frozen = model.field(&to_global(x1, &zero_x2), &zero_w);
            Vector::from_fn(port_rows.len(), |k, _| actual[port_rows[k]] - frozen[port_rows[k]])
        })
    };
    let env = NonlinearEnvironment::new(n2, ports.len(), dynamics, output);
    let plant = PreexistingSystem::nonlinear(sub, env, Some(residual))?;
    let labels = order
        .iter()
        .map(|&g| format!("{}{}", if g % 2 == 0 { "dp" } else { "dv" }, g / 2 + 1))
        .collect();
    Ok(Platoon { config: cfg.clone(), model, plant, order, position, velocity, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{integrate, IntegratorConfig};
    use crate::sysmodel::{jacobian, ClosedLoop};

    #[test]
    fn steady_speed() {
        let m = PlatoonModel::new(12, 0.06, 2.7);
        assert!((m.vbar() - 1.5685).abs() < 1e-4, "{}", m.vbar());
    }

    #[test]
    fn jacobian_matches_linearization() {
        let m = PlatoonModel::new(6, 0.06, 2.7);
        let w = Vector::zeros(6);
        let f = |x: &Vector| m.field(x, &w);
        let j = jacobian(&f, &Vector::zeros(12), 1e-6).unwrap();
        assert!((j - m.linearization()).norm() < 1e-8);
    }

    #[test]
    fn window_ports_and_bounds() {
        let p = build_platoon(&PlatoonConfig::default()).unwrap();
        let sub = p.plant.sub();
        assert_eq!((sub.n1(), p.plant.n2()), (14, 10));
        assert_eq!(rank(sub.l1()), 2);
        assert_eq!(crate::hierarchy::nhat_bounds(sub), (1, 12));
        assert!(p.model.stability_margin().unwrap() < 0.0);
    }

    #[test]
    fn split_field_is_exact() {
        let p = build_platoon(&PlatoonConfig::default()).unwrap();
        let x: Vector = Vector::from_fn(24, |i, _| 0.05 * ((i * 7 % 11) as f64 - 5.0));
        let u = Vector::zeros(1);
        let split = p.plant.derivative(&x, &u);
        let mut global = Vector::zeros(24);
        for (k, &o) in p.order.iter().enumerate() {
            global[o] = x[k];
        }
        let f = p.model.field(&global, &Vector::zeros(12));
        for (k, &o) in p.order.iter().enumerate() {
            assert!((split[k] - f[o]).abs() < 1e-12);
        }
    }

    #[test]
    fn equilibrium_stays_put() {
        let p = build_platoon(&PlatoonConfig::default()).unwrap();
        let sys = ClosedLoop::new(p.plant.to_plant(), vec![]).unwrap();
        let traj = integrate(&sys, &Vector::zeros(24), &IntegratorConfig::rk4(1e-2, 40.0), &[]).unwrap();
        assert!(traj.state_sup(&(0..24).collect::<Vec<_>>()) <= 1e-9);
    }
}
