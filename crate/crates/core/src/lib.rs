//! Bakry-Émery Γ-calculus on finite reversible Markov generators and
//! discretized 1D weighted diffusions, together with checks of the gradient
//! estimates and Wasserstein contraction that curvature bounds imply.

// `!(x > 0.0)` is used deliberately so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod gamma;
pub mod linalg;
pub mod model;
pub mod poly;
pub mod report;
pub mod semigroup;
pub mod simplex;
pub mod space;
pub mod transport;

pub use gamma::{
    curvature_at, curvature_global, gamma, gamma2, gamma2_weak, h_operator, Curvature, GammaError,
};
pub use poly::{MultivariatePoly, PolyError, UnivariatePoly};
pub use report::{CheckReport, Location};
pub use space::{
    build_chain, build_weighted_grid, Field, Measure, ReversibleGenerator, SpaceError, StateSpace,
};
