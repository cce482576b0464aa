//! Scenario documents: model, controller recipe, initial state, events and
//! integrator, run into a [`RunReport`] plus CSV/SVG artifacts.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::platoon::{build_platoon, Platoon, PlatoonConfig};
use super::power::{build_power_network, PowerNetwork, PowerNetworkConfig};
use super::report::{BoundLine, BoundSection, RunReport};
use super::svg::{Chart, Series};
use crate::error::{Error, Result};
use crate::hierarchy::{admissible_projection, nhat_bounds, ProjectionMethod, Which};
use crate::io::write_json;
use crate::numlin::{ic_response_l2_sup_on, is_hurwitz, lqr_gain, Matrix, Vector};
use crate::retrofit::validation::performance_bounds;
use crate::retrofit::{
    design_projected_lqr, design_projected_lqr_weighted, synthesize_observer, synthesize_output_feedback,
    synthesize_state_feedback, NaiveObserver, NaiveProjected, NaiveStatic, RetrofitController, Weights,
};
use crate::sim::{integrate, min_pairwise_gap_offset, EventSpec, IntegratorConfig, Trajectory};
use crate::sysmodel::{Binding, ClosedLoop, LinearSubsystem, PreexistingSystem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    PowerNetwork(PowerNetworkConfig),
    Platoon(PlatoonConfig),
}

/// LQR weights `Q = q diag(state_weights)` (or `q I`), `R = r I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub q: f64,
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_weights: Option<Vec<f64>>,
    /// Observer weights (dual problem); the regulator weights when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<Weights>,
}

impl Default for Gains {
    fn default() -> Self {
        Self { q: 1.0, r: 1.0, state_weights: None, observer: None }
    }
}

impl Gains {
    pub fn scalar(q: f64, r: f64) -> Self {
        Self { q, r, ..Self::default() }
    }

    fn state_weight(&self, n: usize) -> Result<Matrix> {
        match &self.state_weights {
            None => Ok(Matrix::identity(n, n) * self.q),
            Some(w) if w.len() == n && w.iter().all(|v| *v >= 0.0) => {
                Ok(Matrix::from_diagonal(&Vector::from_column_slice(w)) * self.q)
            }
            Some(w) => Err(Error::Config(format!("state_weights has {} entries for {n} states", w.len()))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ControllerRecipe {
    None,
    /// Static gain from LQR on `(A1, B1)`; needs `C1 = I`.
    OutputFeedback {
        #[serde(default)]
        gains: Gains,
    },
    Observer {
        #[serde(default)]
        gains: Gains,
    },
    StateFeedback {
        #[serde(default)]
        nhat: Option<usize>,
        #[serde(default = "default_projection")]
        projection: ProjectionMethod,
        #[serde(default)]
        gains: Gains,
    },
    /// The output-feedback gain applied without the compensator.
    NaiveStatic {
        #[serde(default)]
        gains: Gains,
    },
    /// The observer-based law without the compensator.
    NaiveObserver {
        #[serde(default)]
        gains: Gains,
    },
    /// `u1 = K̂1 P1dag x1`.
    NaiveProjected {
        #[serde(default)]
        nhat: Option<usize>,
        #[serde(default = "default_projection")]
        projection: ProjectionMethod,
        #[serde(default)]
        gains: Gains,
    },
}

fn default_projection() -> ProjectionMethod {
    ProjectionMethod::Residualized
}

impl ControllerRecipe {
    pub fn form(&self) -> &'static str {
        match self {
            ControllerRecipe::None => "none",
            ControllerRecipe::OutputFeedback { .. } => "output_feedback",
            ControllerRecipe::Observer { .. } => "observer",
            ControllerRecipe::StateFeedback { .. } => "state_feedback",
            ControllerRecipe::NaiveStatic { .. } => "naive_static",
            ControllerRecipe::NaiveObserver { .. } => "naive_observer",
            ControllerRecipe::NaiveProjected { .. } => "naive_projected",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordSet {
    /// Frequencies of the `sigma1` appliances (power network only).
    #[default]
    Sigma1Frequency,
    Sigma1,
    Indices(Vec<usize>),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    #[default]
    Zero,
    /// Independent uniform draws on the selected plant coordinates.
    Uniform {
        low: f64,
        high: f64,
        #[serde(default)]
        coords: CoordSet,
    },
    Explicit {
        values: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventRecipe {
    /// Platoon only: the vehicle's speed is multiplied by `keep`.
    Brake { time: f64, vehicle: usize, keep: f64 },
    Reset(EventSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub model: ModelSpec,
    pub controller: ControllerRecipe,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub events: Vec<EventRecipe>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub plot: bool,
}

fn yes() -> bool {
    true
}

impl ScenarioSpec {
    /// SHA-256 of the canonical JSON encoding.
    pub fn config_hash(&self) -> Result<String> {
        let text = serde_json::to_string(self)?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }
}

#[derive(Clone, Debug)]
pub enum BuiltModel {
    Power(PowerNetwork),
    Platoon(Platoon),
}

impl BuiltModel {
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        Ok(match spec {
            ModelSpec::PowerNetwork(cfg) => BuiltModel::Power(build_power_network(cfg, seed)?),
            ModelSpec::Platoon(cfg) => BuiltModel::Platoon(build_platoon(cfg)?),
        })
    }
    pub fn plant(&self) -> &PreexistingSystem {
        match self {
            BuiltModel::Power(p) => &p.plant,
            BuiltModel::Platoon(p) => &p.plant,
        }
    }
    pub fn labels(&self) -> &[String] {
        match self {
            BuiltModel::Power(p) => &p.labels,
            BuiltModel::Platoon(p) => &p.labels,
        }
    }
    /// Coordinates watched for decay/divergence: frequencies or velocities.
    pub fn monitored(&self) -> Vec<usize> {
        match self {
            BuiltModel::Power(p) => p.omega.clone(),
            BuiltModel::Platoon(p) => p.velocity[1..].to_vec(),
        }
    }
    fn kind(&self) -> &'static str {
        match self {
            BuiltModel::Power(_) => "power_network",
            BuiltModel::Platoon(_) => "platoon",
        }
    }
}

/// A controller instantiated for a plant. Retrofit forms keep their
/// structured description for bound and `J1` evaluation.
#[derive(Clone, Debug)]
pub struct BuiltController {
    pub retrofit: Option<RetrofitController>,
    pub binding: Option<Binding>,
}

/// `q = 0` yields the zero gain rather than the minimum-energy stabilizer.
fn lqr_or_zero(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    if q.iter().all(|v| *v == 0.0) {
        return Ok(Matrix::zeros(b.ncols(), a.nrows()));
    }
    lqr_gain(a, b, q, r)
}

fn observer_gains(sub: &LinearSubsystem, g: &Gains) -> Result<(Matrix, Matrix)> {
    let (n, m, p) = (sub.n1(), sub.m1(), sub.p1());
    let f1 = lqr_or_zero(sub.a1(), sub.b1(), &g.state_weight(n)?, &(Matrix::identity(m, m) * g.r))?;
    let ow = g.observer.unwrap_or(Weights::new(g.q, g.r));
    let dual = lqr_or_zero(
        &sub.a1().transpose(),
        &sub.c1().transpose(),
        &(Matrix::identity(n, n) * ow.q),
        &(Matrix::identity(p, p) * ow.r),
    )
    .map_err(|e| Error::Synthesis(format!("observer design: {e}")))?;
    Ok((f1, -dual.transpose()))
}

fn projected_gain(
    sub: &LinearSubsystem,
    nhat: Option<usize>,
    method: ProjectionMethod,
    g: &Gains,
) -> Result<(crate::hierarchy::ProjectionPair, Matrix)> {
    let nhat = nhat.unwrap_or(nhat_bounds(sub).1);
    let proj = admissible_projection(sub, nhat, method)?;
    let design = match &g.state_weights {
        None => design_projected_lqr(sub, &proj, Weights::new(g.q, g.r))?,
        Some(_) => design_projected_lqr_weighted(
            sub,
            &proj,
            &g.state_weight(sub.n1())?,
            &(Matrix::identity(sub.m1(), sub.m1()) * g.r),
        )?,
    };
    Ok((proj, design.gain))
}

pub fn build_controller(plant: &PreexistingSystem, recipe: &ControllerRecipe) -> Result<BuiltController> {
    let sub = plant.sub();
    let n1 = sub.n1();
    let full_gain = |g: &Gains| -> Result<Matrix> {
        if !sub.measures_state() {
            return Err(Error::Config("static output feedback recipes need C1 = I".into()));
        }
        lqr_or_zero(sub.a1(), sub.b1(), &g.state_weight(n1)?, &(Matrix::identity(sub.m1(), sub.m1()) * g.r))
    };
    let retrofit = |rc: RetrofitController| -> Result<BuiltController> {
        let binding = rc.bind(plant)?;
        Ok(BuiltController { retrofit: Some(rc), binding: Some(binding) })
    };
    let naive = |c: Arc<dyn crate::sysmodel::Controller>, meas: &Matrix| -> Result<BuiltController> {
        Ok(BuiltController { retrofit: None, binding: Some(plant.binding(c, meas, false)?) })
    };
    match recipe {
        ControllerRecipe::None => Ok(BuiltController { retrofit: None, binding: None }),
        ControllerRecipe::OutputFeedback { gains } => {
            retrofit(RetrofitController::OutputFeedback(synthesize_output_feedback(sub, &full_gain(gains)?)?))
        }
        ControllerRecipe::Observer { gains } => {
            let (f1, h1) = observer_gains(sub, gains)?;
            retrofit(RetrofitController::Observer(synthesize_observer(sub, &f1, &h1)?))
        }
        ControllerRecipe::StateFeedback { nhat, projection, gains } => {
            let (proj, khat) = projected_gain(sub, *nhat, *projection, gains)?;
            let sf = synthesize_state_feedback(sub, &proj, &khat, plant.residual().cloned())?;
            retrofit(RetrofitController::StateFeedback(sf))
        }
        ControllerRecipe::NaiveStatic { gains } => {
            naive(Arc::new(NaiveStatic { k1: full_gain(gains)? }), &Matrix::identity(n1, n1))
        }
        ControllerRecipe::NaiveObserver { gains } => {
            let (f1, h1) = observer_gains(sub, gains)?;
            naive(Arc::new(NaiveObserver::new(sub, &f1, &h1)), sub.c1())
        }
        ControllerRecipe::NaiveProjected { nhat, projection, gains } => {
            if !sub.measures_state() {
                return Err(Error::Config("projected state feedback needs C1 = I".into()));
            }
            let (proj, khat) = projected_gain(sub, *nhat, *projection, gains)?;
            naive(Arc::new(NaiveProjected::new(&proj, &khat)), &Matrix::identity(n1, n1))
        }
    }
}

fn selector(idx: &[usize], n: usize) -> Matrix {
    Matrix::from_fn(idx.len(), n, |r, c| if idx[r] == c { 1.0 } else { 0.0 })
}

/// `J_all`: worst-case `L2` norm of every frequency over unit `x1(0)` with
/// `x2(0) = 0` and a zero compensator state.
pub fn j_all(net: &PowerNetwork, cl: &ClosedLoop) -> Result<f64> {
    let aug = cl.augmented().ok_or(Error::NonlinearEnvironment)?;
    let n1 = net.plant.n1();
    let nc = aug.nrows();
    let inject = selector(&(0..n1).collect::<Vec<_>>(), nc).transpose();
    ic_response_l2_sup_on(aug, &selector(&net.omega, nc), &inject)
}

/// `J1`: the same measure on the isolated local loop, restricted to the
/// `sigma1` frequencies. `None` when the loop's upstream signal is not `x1`.
pub fn j1(net: &PowerNetwork, rc: &RetrofitController) -> Result<Option<f64>> {
    let (loop_a, inject, select) = rc.local_loop(net.plant.sub().b1());
    if select.nrows() != net.plant.n1() {
        return Ok(None);
    }
    let out = selector(&net.omega1, net.plant.n1()) * select;
    ic_response_l2_sup_on(&loop_a, &out, &inject).map(Some)
}

fn initial_state(spec: &InitialSpec, model: &BuiltModel, rng: &mut ChaCha8Rng) -> Result<Vector> {
    let plant = model.plant();
    let n = plant.n();
    match spec {
        InitialSpec::Zero => Ok(Vector::zeros(n)),
        InitialSpec::Explicit { values } => {
            if values.len() != n {
                return Err(Error::Config(format!("explicit initial state has {} entries, plant has {n}", values.len())));
            }
            Ok(Vector::from_column_slice(values))
        }
        InitialSpec::Uniform { low, high, coords } => {
            if !(low <= high) || !low.is_finite() || !high.is_finite() {
                return Err(Error::Config(format!("invalid uniform range [{low}, {high}]")));
            }
            let idx: Vec<usize> = match (coords, model) {
                (CoordSet::Sigma1Frequency, BuiltModel::Power(p)) => p.omega1.clone(),
                (CoordSet::Sigma1Frequency, _) => {
                    return Err(Error::Config("sigma1_frequency applies to power networks only".into()))
                }
                (CoordSet::Sigma1, _) => (0..plant.n1()).collect(),
                (CoordSet::Indices(v), _) => v.clone(),
            };
            let mut x = Vector::zeros(n);
            for i in idx {
                if i >= n {
                    return Err(Error::Config(format!("initial coordinate {i} out of {n}")));
                }
                x[i] = if low == high { *low } else { rng.random_range(*low..*high) };
            }
            Ok(x)
        }
    }
}

fn events(recipes: &[EventRecipe], model: &BuiltModel) -> Result<Vec<EventSpec>> {
    recipes
        .iter()
        .map(|e| match (e, model) {
            (EventRecipe::Brake { time, vehicle, keep }, BuiltModel::Platoon(p)) => p.brake(*time, *vehicle, *keep),
            (EventRecipe::Brake { .. }, _) => Err(Error::Config("brake events apply to platoons only".into())),
            (EventRecipe::Reset(ev), _) => Ok(ev.clone()),
        })
        .collect()
}

/// Peak of `|x_i|` over the first and the last tenth of the run after the
/// last reset event.
fn window_peaks(traj: &Trajectory, coords: &[usize]) -> (f64, f64) {
    let len = traj.len();
    let start = traj.events().last().map_or(0, |&te| traj.times().partition_point(|&t| t < te)).min(len);
    let w = ((len - start) / 10).max(1);
    let peak = |a: usize, b: usize| {
        (a..b).flat_map(|k| coords.iter().map(move |&i| traj.state(k)[i].abs())).fold(0.0, f64::max)
    };
    (peak(start, (start + w).min(len)), peak(len.saturating_sub(w).max(start), len))
}

/// Final peak above this multiple of the initial peak counts as divergence
/// even without a spectral verdict (nonlinear plants).
pub const GROWTH_LIMIT: f64 = 10.0;

/// Result of one scenario: report, trajectory (possibly truncated at
/// divergence) and the built objects.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: RunReport,
    pub trajectory: Trajectory,
    pub model: BuiltModel,
}

/// Builds and integrates a scenario without touching the filesystem.
pub fn simulate(spec: &ScenarioSpec) -> Result<Outcome> {
    let started = Instant::now();
    let model = BuiltModel::build(&spec.model, spec.seed)?;
    let plant = model.plant();
    let ctrl = build_controller(plant, &spec.controller)?;
    let cl = ClosedLoop::new(plant.to_plant(), ctrl.binding.iter().cloned().collect())?
        .with_plant_labels(model.labels().to_vec())?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x0 = initial_state(&spec.initial, &model, &mut rng)?;
    let evs = events(&spec.events, &model)?;
    let w0 = cl.initial_state(&x0)?;

    let (trajectory, divergence_time) = match integrate(&cl, &w0, &spec.integrator, &evs) {
        Ok(t) => (t, None),
        Err(Error::Divergence { time, partial }) => (*partial, Some(time)),
        Err(e) => return Err(e),
    };

    let mut report = RunReport::new(&spec.name, model.kind(), spec.controller.form(), spec.seed, spec.config_hash()?);
    report.n = plant.n();
    report.n1 = plant.n1();
    report.controller_states = cl.dim() - plant.n();
    report.samples = trajectory.len();
    report.horizon = trajectory.times().last().copied().unwrap_or(0.0);

    if let Some(aug) = cl.augmented() {
        let st = is_hurwitz(aug)?;
        report.stable = Some(st.hurwitz);
        report.spectral_abscissa = Some(st.abscissa);
    }
    let monitored = model.monitored();
    let (first, last) = window_peaks(&trajectory, &monitored);
    let growth = if first > 0.0 { last / first } else if last > 0.0 { f64::INFINITY } else { 0.0 };
    // Unstable spectrum confirmed by growth in the simulation, or runaway growth.
    let unstable = report.stable == Some(false) && growth > 1.0;
    report.diverged = divergence_time.is_some() || growth > GROWTH_LIMIT || unstable;
    report.divergence_time = divergence_time;
    report.decaying = !report.diverged && report.stable != Some(false) && last < first;
    report.peak_ratio = growth;

    let (n1, n) = (plant.n1(), plant.n());
    report.l2_x1 = Some(trajectory.l2_norm(&(0..n1).collect::<Vec<_>>())?);
    if n > n1 {
        report.l2_x2 = Some(trajectory.l2_norm(&(n1..n).collect::<Vec<_>>())?);
    }
    report.l2_monitored = Some(trajectory.l2_norm(&monitored)?);
    report.input_sup = trajectory.input_sup();

    let local_stable = match &ctrl.retrofit {
        Some(rc) => {
            let (loop_a, inject, select) = rc.local_loop(plant.sub().b1());
            let ok = is_hurwitz(&loop_a)?.hurwitz;
            if ok {
                report.eps1 = Some(ic_response_l2_sup_on(&loop_a, &select, &inject)?);
            }
            ok
        }
        None => false,
    };

    // Norms exist only for Hurwitz loops.
    match &model {
        BuiltModel::Power(net) => {
            if report.stable == Some(true) {
                report.j_all = Some(j_all(net, &cl)?);
            }
            if let (Some(rc), true) = (&ctrl.retrofit, local_stable) {
                report.j1 = j1(net, rc)?;
            }
        }
        BuiltModel::Platoon(p) => {
            report.min_gap = Some(min_pairwise_gap_offset(&trajectory, &p.position_coords(), &p.position_base()));
        }
    }

    // Bounds hold for x1(0) = delta0, x2(0) = 0 and no resets.
    if let (Some(rc), true) = (&ctrl.retrofit, plant.is_linear() && local_stable) {
        let pb = performance_bounds(plant, rc)?;
        let mut section = BoundSection { eps1: pb.eps1, alpha1: pb.alpha1, alpha2: pb.alpha2, lines: Vec::new() };
        let x2_zero = x0.rows(n1, n - n1).iter().all(|v| *v == 0.0);
        if x2_zero && evs.is_empty() && divergence_time.is_none() {
            let delta0 = x0.rows(0, n1).clone_owned();
            for (name, which, l2) in [("x1", Which::One, &report.l2_x1), ("x2", Which::Two, &report.l2_x2)] {
                if let Some(l2) = l2 {
                    let bound = pb.bound(which, &delta0)?;
                    section.lines.push(BoundLine { signal: name.into(), measured: l2.value, bound, slack: bound - l2.value });
                }
            }
        }
        report.bounds = Some(section);
    }
    report.wall_time_s = Some(started.elapsed().as_secs_f64());
    Ok(Outcome { report, trajectory, model })
}

/// Gain levels used for the power-network reproduction.
pub const POWER_GAINS: [(&str, f64); 3] = [("low", 1e-2), ("medium", 1.0), ("high", 1e2)];

/// Power network from the default configuration, `delta0` uniform on
/// `[0, 0.2]` over the `sigma1` frequencies, rk4 with `dt = 1e-3` for 30 s.
pub fn power_preset(name: &str, network_seed: u64, controller: ControllerRecipe) -> ScenarioSpec {
    ScenarioSpec {
        name: name.into(),
        model: ModelSpec::PowerNetwork(PowerNetworkConfig { seed: Some(network_seed), ..PowerNetworkConfig::default() }),
        controller,
        initial: InitialSpec::Uniform { low: 0.0, high: 0.2, coords: CoordSet::Sigma1Frequency },
        events: Vec::new(),
        integrator: IntegratorConfig::rk4(1e-3, 30.0).with_stride(10),
        seed: 0,
        plot: true,
    }
}

/// Weights on the first three window vehicles (5, 6, 7) with a small floor
/// elsewhere, scaled by `q`.
pub fn platoon_gains(q: f64) -> Gains {
    let mut w = vec![1e-6; 14];
    w[..6].fill(1.0);
    Gains { q, r: 1.0, state_weights: Some(w), observer: None }
}

/// Projected state feedback on the default platoon: `nhat = 12` uses the
/// residualized projection, smaller orders the balanced one.
pub fn platoon_recipe(nhat: usize, naive: bool) -> ControllerRecipe {
    let projection = if nhat >= 12 { ProjectionMethod::Residualized } else { ProjectionMethod::Balanced };
    let (nhat, gains) = (Some(nhat), platoon_gains(1.0));
    if naive {
        ControllerRecipe::NaiveProjected { nhat, projection, gains }
    } else {
        ControllerRecipe::StateFeedback { nhat, projection, gains }
    }
}

/// Default platoon at equilibrium with one braking event at `t = 10`;
/// rk4 with `dt = 1e-2` for 80 s.
pub fn platoon_preset(name: &str, controller: ControllerRecipe, vehicle: usize, keep: f64) -> ScenarioSpec {
    ScenarioSpec {
        name: name.into(),
        model: ModelSpec::Platoon(PlatoonConfig::default()),
        controller,
        initial: InitialSpec::Zero,
        events: vec![EventRecipe::Brake { time: 10.0, vehicle, keep }],
        integrator: IntegratorConfig::rk4(1e-2, 80.0).with_stride(10),
        seed: 0,
        plot: true,
    }
}

fn plot(outcome: &Outcome, name: &str) -> Chart {
    let traj = &outcome.trajectory;
    let t = traj.times().to_vec();
    match &outcome.model {
        BuiltModel::Power(net) => {
            let mut c = Chart::new(format!("{name}: sigma1 frequency deviations"), "t", "omega");
            c.legend = false;
            for &i in &net.omega1 {
                c.push(Series::line(&traj.labels()[i], t.clone(), traj.column(i)).color(0));
            }
            c
        }
        BuiltModel::Platoon(p) => {
            let mut c = Chart::new(format!("{name}: position relative to the steady trajectory"), "t", "p_i - vbar t");
            c.legend = false;
            let [lo, hi] = p.config.window;
            for i in 1..=p.config.vehicles {
                let base = i as f64 * p.config.spacing;
                let ys = traj.column(p.position[i]).into_iter().map(|v| v + base).collect();
                let s = Series::line(format!("vehicle {i}"), t.clone(), ys);
                c.push(if (lo..=hi).contains(&i) { s.color(0) } else { s.color(1).dashed() });
            }
            c
        }
    }
}

/// Runs a scenario and writes `trajectories.csv`, `report.json` and (when
/// enabled) `plot.svg` into `out`.
pub fn run_scenario(spec: &ScenarioSpec, out: &Path) -> Result<RunReport> {
    let outcome = simulate(spec)?;
    std::fs::create_dir_all(out)?;
    outcome.trajectory.write_csv(&out.join("trajectories.csv"))?;
    write_json(&out.join("report.json"), &outcome.report)?;
    if spec.plot {
        plot(&outcome, &spec.name).write(&out.join("plot.svg"))?;
    }
    Ok(outcome.report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power(controller: ControllerRecipe) -> ScenarioSpec {
        ScenarioSpec {
            name: "t".into(),
            model: ModelSpec::PowerNetwork(PowerNetworkConfig { generators: 3, loads: 3, extra_edges: 2, ground: vec![2], sigma1: vec![0, 3], ..PowerNetworkConfig::default() }),
            controller,
            initial: InitialSpec::Uniform { low: 0.0, high: 0.2, coords: CoordSet::Sigma1Frequency },
            events: vec![],
            integrator: IntegratorConfig::rk4(1e-3, 2.0).with_stride(10),
            seed: 3,
            plot: true,
        }
    }

    #[test]
    fn spec_json_round_trip_and_hash() {
        let spec = power(ControllerRecipe::Observer { gains: Gains::scalar(10.0, 1.0) });
        let text = serde_json::to_string_pretty(&spec).unwrap();
        let back: ScenarioSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.config_hash().unwrap(), spec.config_hash().unwrap());
        let mut other = spec.clone();
        other.seed = 4;
        assert_ne!(other.config_hash().unwrap(), spec.config_hash().unwrap());
    }

    #[test]
    fn zero_gain_observer_matches_open_loop_j_all() {
        let open = simulate(&power(ControllerRecipe::None)).unwrap().report;
        let zero = simulate(&power(ControllerRecipe::Observer { gains: Gains::scalar(0.0, 1.0) })).unwrap().report;
        let (a, b) = (open.j_all.unwrap(), zero.j_all.unwrap());
        assert!((a - b).abs() <= 1e-8 * a, "{a} vs {b}");
    }

    #[test]
    fn retrofit_report_has_bounds_with_slack() {
        let rep = simulate(&power(ControllerRecipe::Observer { gains: Gains::scalar(10.0, 1.0) })).unwrap().report;
        assert_eq!(rep.stable, Some(true));
        let b = rep.bounds.unwrap();
        assert_eq!(b.lines.len(), 2);
        assert!(b.lines.iter().all(|l| l.slack >= -1e-6), "{:?}", b.lines);
    }

    #[test]
    fn writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let rep = run_scenario(&power(ControllerRecipe::None), dir.path()).unwrap();
        assert!(rep.j1.is_none());
        for f in ["trajectories.csv", "report.json", "plot.svg"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn brake_needs_platoon() {
        let mut spec = power(ControllerRecipe::None);
        spec.events.push(EventRecipe::Brake { time: 1.0, vehicle: 2, keep: 0.5 });
        assert!(matches!(simulate(&spec), Err(Error::Config(_))));
    }
}
