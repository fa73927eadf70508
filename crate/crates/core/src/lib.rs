//! Adaptive reduced-order collocation for time-dependent parametric PDEs.
//!
//! The offline greedy in [`greedy`] grows a reduced basis together with
//! per-segment collocation points, enriching them when the error indicator
//! stalls and splitting the time axis when enrichment is not enough. The
//! resulting [`rom::ReducedModel`] is solved online by least squares on the
//! sampled residual rows of a [`fom::FullOrderProblem`].
//!
//! See the book under `book/` for a walkthrough; its examples run as
//! doc-tests.

pub mod fom;
pub mod greedy;
pub mod harness;
pub mod numerics;
pub mod rom;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/full-order-models.md")]
    mod full_order_models {}
    #[doc = include_str!("../../../book/src/reduced-model.md")]
    mod reduced_model {}
    #[doc = include_str!("../../../book/src/collocation.md")]
    mod collocation {}
    #[doc = include_str!("../../../book/src/adaptive-greedy.md")]
    mod adaptive_greedy {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
