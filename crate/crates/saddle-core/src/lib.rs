//! Solvers and runtime convergence certificates for smooth convex-concave
//! saddle-point problems with bilinear coupling,
//! `min_x max_y f(x) + y'Ax - g(y)`.
//!
//! The crate provides:
//!
//! * an accelerated primal-dual gradient method ([`apdg`]) whose parameter
//!   schedule adapts to which strong-convexity and coupling moduli are
//!   positive, achieving linear convergence even when neither function is
//!   strongly convex (full-rank coupling);
//! * an extrapolated gradient descent-ascent method ([`gdae`]) for general
//!   smooth saddle-point problems accessed through partial gradients;
//! * classical baselines ([`baselines`]) for comparison runs;
//! * synthetic instance generators ([`problems`]) with exact constants and
//!   reference solutions;
//! * Lyapunov-based runtime certificates and rate diagnostics
//!   ([`diagnostics`]).
//!
//! Accuracy is measured in squared distances throughout:
//! `max{|x - x*|^2, |y - y*|^2} <= eps` defines an `eps`-accurate pair.

pub mod apdg;
pub mod baselines;
pub mod diagnostics;
pub mod error;
pub mod gdae;
pub mod problem;
pub mod problems;
pub mod run;
pub mod spectral;

pub use error::{Result, SaddleError};
pub use problem::{
    bregman_divergence, check_epsilon_accurate, optimality_residual, BilinearSaddleProblem,
    GeneralSaddleProblem, GradOracle, IteratePair, Matrix, PairGradOracle, Regime, RegimeChoice,
    SmoothnessSpec, ValueOracle, Vector,
};
pub use diagnostics::{
    duality_gap, fit_linear_rate, theoretical_complexity, ComplexityReport, RateFit, RunRecord,
    RunStatus, SolverKind,
};
pub use run::{RunOptions, StoppingRule, DIVERGENCE_FACTOR};
