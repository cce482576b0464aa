//! Gain sweeps on the power network: local performance `J1` against global
//! performance `J_all`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::power::{build_power_network, PowerNetwork, PowerNetworkConfig};
use super::scenario::{build_controller, j1, j_all, ControllerRecipe, Gains};
use super::svg::{Chart, Series};
use crate::error::{Error, Result};
use crate::io::{write_csv, write_json};
use crate::numlin::is_hurwitz;
use crate::par::{map_slice, Execution};
use crate::sysmodel::ClosedLoop;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepForm {
    #[default]
    Observer,
    /// Only defined when `C1 = I`; the power network measures angle and
    /// frequency only, so expect synthesis errors there.
    OutputFeedback,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub name: String,
    #[serde(default)]
    pub model: PowerNetworkConfig,
    /// Network instance when `model.seed` is absent.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub form: SweepForm,
    /// Regulator (and observer) weight scales; `0` is the zero-gain point.
    pub q: Vec<f64>,
    #[serde(default = "unit")]
    pub r: f64,
}

fn unit() -> f64 {
    1.0
}

impl SweepConfig {
    pub fn config_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_string(self)?.as_bytes())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub q: f64,
    pub r: f64,
    pub local_hurwitz: bool,
    pub closed_hurwitz: bool,
    pub j1: Option<f64>,
    pub j_all: Option<f64>,
    /// Set when the point could not be evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepPoint {
    /// Non-Hurwitz loops and synthesis failures are flagged.
    pub fn flagged(&self) -> bool {
        !(self.local_hurwitz && self.closed_hurwitz) || self.error.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub open_loop_j_all: f64,
    pub points: Vec<SweepPoint>,
}

fn evaluate(net: &PowerNetwork, form: SweepForm, q: f64, r: f64) -> Result<SweepPoint> {
    let gains = Gains::scalar(q, r);
    let recipe = match form {
        SweepForm::Observer => ControllerRecipe::Observer { gains },
        SweepForm::OutputFeedback => ControllerRecipe::OutputFeedback { gains },
    };
    let ctrl = build_controller(&net.plant, &recipe)?;
    let rc = ctrl.retrofit.as_ref().ok_or_else(|| Error::Config("sweep needs a retrofit form".into()))?;
    let (loop_a, _, _) = rc.local_loop(net.plant.sub().b1());
    let local_hurwitz = is_hurwitz(&loop_a)?.hurwitz;
    let cl = ClosedLoop::new(net.plant.to_plant(), ctrl.binding.into_iter().collect())?;
    let closed_hurwitz = is_hurwitz(cl.augmented().ok_or(Error::NonlinearEnvironment)?)?.hurwitz;
    Ok(SweepPoint {
        q,
        r,
        local_hurwitz,
        closed_hurwitz,
        j1: if local_hurwitz { j1(net, rc)? } else { None },
        j_all: if closed_hurwitz { Some(j_all(net, &cl)?) } else { None },
        error: None,
    })
}

/// Evaluates every grid point; failures are recorded on the point.
pub fn sweep_performance(cfg: &SweepConfig, exec: Execution) -> Result<SweepReport> {
    if cfg.q.iter().any(|q| !(q.is_finite() && *q >= 0.0)) || !(cfg.r > 0.0) {
        return Err(Error::Config("sweep weights must be finite, q >= 0 and r > 0".into()));
    }
    let net = build_power_network(&cfg.model, cfg.seed)?;
    let open = ClosedLoop::new(net.plant.to_plant(), Vec::new())?;
    let open_loop_j_all = j_all(&net, &open)?;
    let points = map_slice(exec, &cfg.q, |&q| {
        evaluate(&net, cfg.form, q, cfg.r).unwrap_or_else(|e| SweepPoint {
            q,
            r: cfg.r,
            local_hurwitz: false,
            closed_hurwitz: false,
            j1: None,
            j_all: None,
            error: Some(e.to_string()),
        })
    });
    Ok(SweepReport {
        name: cfg.name.clone(),
        config_hash: cfg.config_hash()?,
        seed: cfg.model.seed.unwrap_or(cfg.seed),
        open_loop_j_all,
        points,
    })
}

/// Writes `sweep.csv`, `sweep.json` and `sweep.svg` into `out`.
pub fn write_sweep(report: &SweepReport, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let header: Vec<String> = ["q", "r", "j1", "j_all", "local_hurwitz", "closed_hurwitz"].map(String::from).into();
    let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    write_csv(
        &out.join("sweep.csv"),
        &header,
        report.points.iter().map(|p| vec![p.q, p.r, opt(p.j1), opt(p.j_all), flag(p.local_hurwitz), flag(p.closed_hurwitz)]),
    )?;
    write_json(&out.join("sweep.json"), report)?;

    let mut chart = Chart::new(format!("{}: global vs local performance", report.name), "J1", "J_all");
    let (good, bad): (Vec<&SweepPoint>, Vec<&SweepPoint>) = report.points.iter().partition(|p| !p.flagged());
    let xy = |pts: &[&SweepPoint]| -> (Vec<f64>, Vec<f64>) {
        pts.iter().filter_map(|p| Some((p.j1?, p.j_all?))).unzip()
    };
    let (xs, ys) = xy(&good);
    chart.push(Series::points("retrofit", xs, ys).color(0));
    let (xs, ys) = xy(&bad);
    if !xs.is_empty() {
        chart.push(Series::points("flagged", xs, ys).color(1));
    }
    chart.write(&out.join("sweep.svg"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::{ic_response_l2_sup_on, lqr_gain, Matrix};

    fn small(form: SweepForm, q: Vec<f64>) -> SweepConfig {
        SweepConfig {
            name: "t".into(),
            model: PowerNetworkConfig { generators: 3, loads: 3, extra_edges: 2, ground: vec![2], sigma1: vec![0, 3], ..PowerNetworkConfig::default() },
            seed: 1,
            form,
            q,
            r: 1.0,
        }
    }

    #[test]
    fn zero_gain_point_is_open_loop() {
        let rep = sweep_performance(&small(SweepForm::Observer, vec![0.0, 1.0]), Execution::Sequential).unwrap();
        let zero = &rep.points[0];
        let j = zero.j_all.unwrap();
        assert!((j - rep.open_loop_j_all).abs() <= 1e-8 * j, "{j} vs {}", rep.open_loop_j_all);
    }

    #[test]
    fn j1_matches_local_loop_norm() {
        let cfg = small(SweepForm::Observer, vec![2.0]);
        let rep = sweep_performance(&cfg, Execution::Sequential).unwrap();
        let net = build_power_network(&cfg.model, cfg.seed).unwrap();
        let sub = net.plant.sub();
        let (n, m, p) = (sub.n1(), sub.m1(), sub.p1());
        let f = lqr_gain(sub.a1(), sub.b1(), &(Matrix::identity(n, n) * 2.0), &Matrix::identity(m, m)).unwrap();
        let l = lqr_gain(&sub.a1().transpose(), &sub.c1().transpose(), &(Matrix::identity(n, n) * 2.0), &Matrix::identity(p, p))
            .unwrap()
            .transpose();
        // [x1; zeta] with x1' = A1 x1 + B1 F zeta, zeta' = (A1 + B1 F + L C1) zeta - L C1 x1.
        let mut a = Matrix::zeros(2 * n, 2 * n);
        a.view_mut((0, 0), (n, n)).copy_from(sub.a1());
        a.view_mut((0, n), (n, n)).copy_from(&(sub.b1() * &f));
        a.view_mut((n, 0), (n, n)).copy_from(&(-&l * sub.c1()));
        a.view_mut((n, n), (n, n)).copy_from(&(sub.a1() + sub.b1() * &f + &l * sub.c1()));
        let sel = Matrix::from_fn(net.omega1.len(), 2 * n, |r, c| if net.omega1[r] == c { 1.0 } else { 0.0 });
        let want = ic_response_l2_sup_on(&a, &sel, &Matrix::identity(2 * n, n)).unwrap();
        let got = rep.points[0].j1.unwrap();
        assert!((got - want).abs() <= 1e-8 * want, "{got} vs {want}");
    }

    #[test]
    fn bad_points_are_flagged_not_fatal() {
        let rep = sweep_performance(&small(SweepForm::Observer, vec![1.0, 1e300]), Execution::Sequential).unwrap();
        assert_eq!(rep.points.len(), 2);
        assert!(!rep.points[0].flagged());
    }

    #[test]
    fn artifacts_and_parallel_agree() {
        let cfg = small(SweepForm::Observer, vec![0.1, 1.0, 10.0]);
        let a = sweep_performance(&cfg, Execution::Sequential).unwrap();
        let b = sweep_performance(&cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        write_sweep(&a, dir.path()).unwrap();
        for f in ["sweep.csv", "sweep.json", "sweep.svg"] {
            assert!(dir.path().join(f).exists());
        }
    }
}
