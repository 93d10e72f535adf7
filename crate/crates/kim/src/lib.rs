//! Numerical laboratory for discrete dynamics on spaces of Kähler metrics
//! over one-complex-dimensional model geometries.
//!
//! Every metric is stored relative to one fixed [`grid::BackgroundGeometry`]
//! as a potential; a single spectral operator `L0` turns all curvature
//! computations into pointwise algebra, Poisson solves, and semilinear
//! Newton solves. On top of that sit the Ricci operators and their
//! inverses ([`metric`]), the per-step Monge-Ampère engines ([`solver`]),
//! the energy functionals and inequality auditors ([`energy`]), and the
//! discrete-time dynamical systems ([`dynamics`]). File formats and the
//! command-line front end live in [`statefile`], [`report`], and [`cli`].

// Guards of the form `!(x > 0.0)` are deliberate: they treat NaN as
// invalid input, which `x <= 0.0` would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod grid;
pub mod metric;
pub mod report;
pub mod rng;
pub mod solver;
pub mod statefile;

pub use error::{KimError, Result};
pub use grid::{
    dilation_pullback_potential, random_potential, BackgroundGeometry, BackgroundKind, F0Mode,
    F0Spec, Potential, Symmetry,
};
pub use metric::{MetricState, RicciData, RicciIndex, TwistedFieldSpec};
pub use solver::{SolverConfig, StepSolution};
