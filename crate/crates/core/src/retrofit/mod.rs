//! Retrofit controller synthesis.
//!
//! Design functions read only the subsystem model. Performance bounds need the
//! whole plant and live in [`validation`], which the design path never calls.

mod controllers;
mod design;
pub mod validation;

pub use controllers::{
    NaiveObserver, NaiveProjected, NaiveStatic, RetrofitController, RetrofitObserverBased, RetrofitOutputFeedback,
    RetrofitStateFeedback,
};
pub use design::{
    design_local_lqr, design_local_observer, design_projected_lqr, design_projected_lqr_weighted, synthesize_observer, synthesize_output_feedback,
    synthesize_state_feedback, LocalDesign, Weights,
};

#[cfg(test)]
mod tests;
