//! Power network of generators and loads with second-order governors.
//!
//! Node `i` is a generator for `i < generators` and a load otherwise.
//! Generators carry `(theta, omega, f, p)`, loads `(theta, omega)`:
//!
//! ```text
//! theta' = omega
//! m omega' = -d omega - f - e          (f = 0 for loads)
//! tau f' = -f + p
//! tau' p' = -kappa p + omega + v
//! e_i = sum_j Y_ij (theta_i - theta_j) + g_i theta_i
//! ```
//!
//! `g_i` grounds the configured slack nodes so that `A` is Hurwitz.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numlin::{is_hurwitz, Matrix};
use crate::sysmodel::{AssemblyOptions, PreexistingSystem};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub admittance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerNetworkConfig {
    pub generators: usize,
    pub loads: usize,
    /// Explicit topology; generated from the seed when absent.
    pub edges: Option<Vec<Edge>>,
    /// Edges added on top of the random spanning tree.
    pub extra_edges: usize,
    pub inertia: [f64; 2],
    pub damping: [f64; 2],
    pub admittance: [f64; 2],
    pub tau: f64,
    pub tau_prime: f64,
    pub kappa: f64,
    /// Nodes tied to the reference angle; admittances drawn from `admittance`.
    pub ground: Vec<usize>,
    pub sigma1: Vec<usize>,
    /// Overrides the scenario seed when set.
    pub seed: Option<u64>,
    pub max_retries: usize,
}

impl Default for PowerNetworkConfig {
    fn default() -> Self {
        Self {
            generators: 14,
            loads: 16,
            edges: None,
            extra_edges: 12,
            inertia: [1.0, 10.0],
            damping: [0.001, 0.01],
            admittance: [1.0, 30.0],
            tau: 0.002,
            tau_prime: 1.0,
            kappa: 0.1,
            ground: vec![13],
            sigma1: vec![0, 1, 2, 3, 14, 15, 16, 17],
            seed: None,
            max_retries: 20,
        }
    }
}

/// Drawn parameters of one instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerParameters {
    pub edges: Vec<Edge>,
    pub inertia: Vec<f64>,
    pub damping: Vec<f64>,
    pub grounding: Vec<(usize, f64)>,
    pub attempts: usize,
}

#[derive(Clone, Debug)]
pub struct PowerNetwork {
    pub plant: PreexistingSystem,
    pub params: PowerParameters,
    /// Label of each plant coordinate (`x = [x1; x2]`).
    pub labels: Vec<String>,
    /// Plant coordinates of every `omega`.
    pub omega: Vec<usize>,
    /// Positions of the `omega` coordinates inside `x1`.
    pub omega1: Vec<usize>,
    /// Generators in `sigma1`, in input order.
    pub sigma1_generators: Vec<usize>,
}

impl PowerNetworkConfig {
    fn nodes(&self) -> usize {
        self.generators + self.loads
    }

    fn is_generator(&self, i: usize) -> bool {
        i < self.generators
    }

    fn validate(&self) -> Result<()> {
        let n = self.nodes();
        if n == 0 {
            return Err(Error::Config("network has no nodes".into()));
        }
        let mut in1 = vec![false; n];
        for &i in &self.sigma1 {
            if i >= n || in1[i] {
                return Err(Error::Config(format!("sigma1 node {i} out of range or repeated")));
            }
            in1[i] = true;
        }
        if self.sigma1.is_empty() || (self.sigma1.len() == n && n > 1) {
            return Err(Error::Config("sigma1 must be a nonempty proper node set".into()));
        }
        if self.ground.iter().any(|&g| g >= n) {
            return Err(Error::Config("ground node out of range".into()));
        }
        for (name, r) in [("inertia", self.inertia), ("damping", self.damping), ("admittance", self.admittance)] {
            if !(r[0] > 0.0 && r[0] <= r[1]) {
                return Err(Error::Config(format!("{name} range must be positive and ordered")));
            }
        }
        if self.tau <= 0.0 || self.tau_prime <= 0.0 || self.kappa <= 0.0 {
            return Err(Error::Config("governor constants must be positive".into()));
        }
        Ok(())
    }

    /// Random spanning tree grown from `sigma1` outward, so `sigma1` is
    /// connected, plus `extra_edges` random chords.
    fn random_edges(&self, rng: &mut ChaCha8Rng) -> Vec<Edge> {
        let n = self.nodes();
        let mut order = self.sigma1.clone();
        order.extend((0..n).filter(|i| !self.sigma1.contains(i)));
        let mut adj = vec![vec![false; n]; n];
        let mut edges = Vec::new();
        let range = self.admittance;
        let add = |a: usize, b: usize, rng: &mut ChaCha8Rng, adj: &mut Vec<Vec<bool>>, edges: &mut Vec<Edge>| {
            adj[a][b] = true;
            adj[b][a] = true;
            let y = rng.random_range(range[0]..=range[1]);
            edges.push(Edge { from: a.min(b), to: a.max(b), admittance: y });
        };
        for k in 1..n {
            let j = rng.random_range(0..k);
            add(order[k], order[j], rng, &mut adj, &mut edges);
        }
        let max_edges = n * (n - 1) / 2;
        let mut extra = self.extra_edges.min(max_edges.saturating_sub(edges.len()));
        while extra > 0 {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b && !adj[a][b] {
                add(a, b, rng, &mut adj, &mut edges);
                extra -= 1;
            }
        }
        edges
    }
}

fn connected(n: usize, edges: &[Edge]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for e in edges {
        let (a, b) = (find(&mut parent, e.from), find(&mut parent, e.to));
        parent[a] = b;
    }
    let root = find(&mut parent, 0);
    (0..n).all(|i| find(&mut parent, i) == root)
}

/// State offset of each node in the node-ordered global vector.
fn offsets(cfg: &PowerNetworkConfig) -> Vec<usize> {
    let mut off = Vec::with_capacity(cfg.nodes() + 1);
    let mut k = 0;
    for i in 0..cfg.nodes() {
        off.push(k);
        k += if cfg.is_generator(i) { 4 } else { 2 };
    }
    off.push(k);
    off
}

fn global_matrices(cfg: &PowerNetworkConfig, p: &PowerParameters) -> (Matrix, Matrix) {
    let off = offsets(cfg);
    let n = off[cfg.nodes()];
    let mut a = Matrix::zeros(n, n);
    let mut b = Matrix::zeros(n, cfg.generators);
    let mut lap = Matrix::zeros(cfg.nodes(), cfg.nodes());
    for e in &p.edges {
        lap[(e.from, e.from)] += e.admittance;
        lap[(e.to, e.to)] += e.admittance;
        lap[(e.from, e.to)] -= e.admittance;
        lap[(e.to, e.from)] -= e.admittance;
    }
    for &(g, y) in &p.grounding {
        lap[(g, g)] += y;
    }
    for i in 0..cfg.nodes() {
        let (th, om) = (off[i], off[i] + 1);
        let m = p.inertia[i];
        a[(th, om)] = 1.0;
        a[(om, om)] = -p.damping[i] / m;
        for j in 0..cfg.nodes() {
            if lap[(i, j)] != 0.0 {
                a[(om, off[j])] = -lap[(i, j)] / m;
            }
        }
        if cfg.is_generator(i) {
            let (f, pv) = (off[i] + 2, off[i] + 3);
            a[(om, f)] = -1.0 / m;
            a[(f, f)] = -1.0 / cfg.tau;
            a[(f, pv)] = 1.0 / cfg.tau;
            a[(pv, pv)] = -cfg.kappa / cfg.tau_prime;
            a[(pv, om)] = 1.0 / cfg.tau_prime;
            b[(pv, i)] = 1.0 / cfg.tau_prime;
        }
    }
    (a, b)
}

/// Builds the network, redrawing inertia and damping until `A` is Hurwitz.
/// `seed` is used unless the config carries its own.
pub fn build_power_network(cfg: &PowerNetworkConfig, seed: u64) -> Result<PowerNetwork> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or(seed));
    let n_nodes = cfg.nodes();
    let edges = match &cfg.edges {
        Some(e) => {
            if e.iter().any(|e| e.from >= n_nodes || e.to >= n_nodes || e.from == e.to || !(e.admittance > 0.0)) {
                return Err(Error::Config("edges must join distinct nodes with positive admittance".into()));
            }
            e.clone()
        }
        None => cfg.random_edges(&mut rng),
    };
    if n_nodes > 1 && !connected(n_nodes, &edges) {
        return Err(Error::Config("network graph is disconnected".into()));
    }
    let grounding: Vec<(usize, f64)> =
        cfg.ground.iter().map(|&g| (g, rng.random_range(cfg.admittance[0]..=cfg.admittance[1]))).collect();
    for attempt in 1..=cfg.max_retries.max(1) {
        let inertia: Vec<f64> = (0..n_nodes).map(|_| rng.random_range(cfg.inertia[0]..=cfg.inertia[1])).collect();
        let damping: Vec<f64> = (0..n_nodes).map(|_| rng.random_range(cfg.damping[0]..=cfg.damping[1])).collect();
        let params = PowerParameters { edges: edges.clone(), inertia, damping, grounding: grounding.clone(), attempts: attempt };
        let (a, b) = global_matrices(cfg, &params);
        if is_hurwitz(&a)?.hurwitz {
            return assemble(cfg, params, &a, &b);
        }
    }
    Err(Error::Config(format!("no Hurwitz draw in {} attempts", cfg.max_retries.max(1))))
}

fn assemble(cfg: &PowerNetworkConfig, params: PowerParameters, a: &Matrix, b: &Matrix) -> Result<PowerNetwork> {
    let off = offsets(cfg);
    let mut states = Vec::new();
    let mut sigma1_generators = Vec::new();
    let mut c1_rows: Vec<(usize, usize)> = Vec::new();
    for &i in &cfg.sigma1 {
        let base = states.len();
        states.extend(off[i]..off[i + 1]);
        if cfg.is_generator(i) {
            sigma1_generators.push(i);
            c1_rows.push((c1_rows.len(), base));
            c1_rows.push((c1_rows.len(), base + 1));
        }
    }
    let n1 = states.len();
    let c1 = if c1_rows.is_empty() {
        Matrix::zeros(0, n1)
    } else {
        Matrix::from_fn(c1_rows.len(), n1, |r, c| if c1_rows[r].1 == c { 1.0 } else { 0.0 })
    };
    let (plant, order) = PreexistingSystem::from_partition(a, b, &states, &sigma1_generators, c1, AssemblyOptions::default())?;
    let mut node_of = vec![(0usize, 0usize); off[cfg.nodes()]];
    for i in 0..cfg.nodes() {
        for (k, s) in (off[i]..off[i + 1]).enumerate() {
            node_of[s] = (i, k);
        }
    }
    let names = ["theta", "omega", "f", "p"];
    let labels: Vec<String> = order.iter().map(|&s| format!("{}_{}", names[node_of[s].1], node_of[s].0)).collect();
    let omega: Vec<usize> = (0..order.len()).filter(|&k| node_of[order[k]].1 == 1).collect();
    let omega1: Vec<usize> = omega.iter().copied().filter(|&k| k < n1).collect();
    Ok(PowerNetwork { plant, params, labels, omega, omega1, sigma1_generators })
}
