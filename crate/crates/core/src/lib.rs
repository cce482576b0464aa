//! Retrofit controller synthesis and simulation.
//!
//! A retrofit controller improves the transient response of one subsystem of
//! an already stable network while using only that subsystem's model for
//! design. The crate is organised bottom-up:
//!
//! * [`numlin`]: dense matrix kernels (spectra, Lyapunov and Riccati solvers,
//!   system norms, balanced truncation).
//! * [`sysmodel`]: the interconnected plant and closed-loop composition.
//! * [`sim`]: fixed-step and adaptive integration with time-triggered events.
//! * [`hierarchy`]: cascade (hierarchical) realizations and oblique projections.
//! * [`retrofit`]: the three controller forms and their performance bounds.
//! * [`bench`]: power-network and vehicle-platoon experiments, scenario
//!   runner, sweeps and the validation suites used by the CLI.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod hierarchy;
pub mod io;
pub mod numlin;
pub mod par;
pub mod retrofit;
pub mod sim;
pub mod sysmodel;

pub use error::{Error, Result};
pub use numlin::{Matrix, StateSpace, Vector};
