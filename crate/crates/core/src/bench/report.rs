//! Report documents written next to simulation artifacts.

use serde::{Deserialize, Serialize};

use crate::sim::L2Norm;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundLine {
    pub signal: String,
    pub measured: f64,
    pub bound: f64,
    pub slack: f64,
}

/// Bound constants of a retrofit controller on a linear plant; `lines` is
/// filled only when the run starts from `x2(0) = 0` without resets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSection {
    pub eps1: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub lines: Vec<BoundLine>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub model: String,
    pub controller: String,
    pub seed: u64,
    pub config_hash: String,
    pub n: usize,
    pub n1: usize,
    pub controller_states: usize,
    pub samples: usize,
    /// Last recorded time (short of the horizon after divergence).
    pub horizon: f64,
    /// Spectrum of the augmented matrix; absent for nonlinear plants.
    pub stable: Option<bool>,
    pub spectral_abscissa: Option<f64>,
    /// Integration aborted, runaway growth, or an unstable linear loop whose
    /// simulated late peak exceeds the early one.
    pub diverged: bool,
    pub divergence_time: Option<f64>,
    pub decaying: bool,
    /// Peak of the monitored coordinates over the last tenth of the run
    /// divided by the peak over the first tenth.
    pub peak_ratio: f64,
    pub l2_x1: Option<L2Norm>,
    pub l2_x2: Option<L2Norm>,
    pub l2_monitored: Option<L2Norm>,
    pub input_sup: f64,
    pub min_gap: Option<f64>,
    pub eps1: Option<f64>,
    pub j1: Option<f64>,
    pub j_all: Option<f64>,
    pub bounds: Option<BoundSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl RunReport {
    pub fn new(name: &str, model: &str, controller: &str, seed: u64, config_hash: String) -> Self {
        Self {
            name: name.into(),
            model: model.into(),
            controller: controller.into(),
            seed,
            config_hash,
            n: 0,
            n1: 0,
            controller_states: 0,
            samples: 0,
            horizon: 0.0,
            stable: None,
            spectral_abscissa: None,
            diverged: false,
            divergence_time: None,
            decaying: false,
            peak_ratio: 0.0,
            l2_x1: None,
            l2_x2: None,
            l2_monitored: None,
            input_sup: 0.0,
            min_gap: None,
            eps1: None,
            j1: None,
            j_all: None,
            bounds: None,
            wall_time_s: None,
        }
    }
}
