//! Hierarchical (cascade) realizations of the preexisting system and the
//! projection pairs that parameterize them.

mod expansion;
mod projection;

pub use expansion::{
    downstream_transfer, expand, expand_nonlinear, expand_parameterized, Cascade, HierarchicalRealization,
    InitialSplit, Which,
};
pub use projection::{
    admissible_projection, check_lemma_conditions, nhat_bounds, oblique_projector, ProjectionMethod, ProjectionPair,
    ProjectionResiduals, PAIR_TOL,
};
