//! Reference methods for the benchmark harness: simultaneous and alternating
//! gradient descent-ascent, the extragradient method, and the exact
//! forward-backward iteration.
//!
//! These exist for comparison runs. Stepsize helpers implement standard safe
//! choices; everything is overridable from the harness.

use nalgebra::Cholesky;

use crate::diagnostics::{RunRecord, RunStatus};
use crate::error::{Result, SaddleError};
use crate::problem::{
    BilinearSaddleProblem, GeneralSaddleProblem, IteratePair, Matrix, SmoothnessSpec,
};
use crate::run::{self, RunOptions, TraceBuilder, DIVERGENCE_FACTOR};

/// Simultaneous update: both blocks step from the old iterate.
/// Diverges on purely bilinear objectives for any positive stepsize.
pub fn sim_gda_step(
    problem: &GeneralSaddleProblem,
    eta_x: f64,
    eta_y: f64,
    p: &IteratePair,
) -> IteratePair {
    let gx = problem.grad_x(&p.x, &p.y);
    let gy = problem.grad_y(&p.x, &p.y);
    IteratePair::new(&p.x - eta_x * gx, &p.y + eta_y * gy)
}

/// Alternating update: the ascent step sees the fresh `x`.
/// Coincides with the extrapolated descent-ascent method at `theta = 0`.
pub fn alt_gda_step(
    problem: &GeneralSaddleProblem,
    eta_x: f64,
    eta_y: f64,
    p: &IteratePair,
) -> IteratePair {
    let x_next = &p.x - eta_x * problem.grad_x(&p.x, &p.y);
    let y_next = &p.y + eta_y * problem.grad_y(&x_next, &p.y);
    IteratePair::new(x_next, y_next)
}

/// Extragradient: a half step to a midpoint, then a full step using the
/// midpoint gradients. Two gradient evaluations per block per iteration.
pub fn extragradient_step(
    problem: &GeneralSaddleProblem,
    eta: f64,
    p: &IteratePair,
) -> IteratePair {
    let x_mid = &p.x - eta * problem.grad_x(&p.x, &p.y);
    let y_mid = &p.y + eta * problem.grad_y(&p.x, &p.y);
    IteratePair::new(
        &p.x - eta * problem.grad_x(&x_mid, &y_mid),
        &p.y + eta * problem.grad_y(&x_mid, &y_mid),
    )
}

/// Exact forward-backward iteration for bilinearly coupled problems:
///
/// ```text
/// x+ = x - eta_x grad f(x) - eta_x A' y+
/// y+ = y - eta_y grad g(y) + eta_y A x+
/// ```
///
/// solved exactly through the normal matrix `I + eta_x eta_y A'A`, which is
/// factorized once and reused. This is the linear solve the extrapolating
/// methods avoid paying per iteration.
pub struct ForwardBackward {
    factor: Cholesky<f64, nalgebra::Dyn>,
    eta_x: f64,
    eta_y: f64,
}

impl ForwardBackward {
    pub fn new(problem: &BilinearSaddleProblem, eta_x: f64, eta_y: f64) -> Result<Self> {
        if eta_x <= 0.0 || eta_y <= 0.0 {
            return Err(SaddleError::InvalidParams(
                "forward-backward stepsizes must be positive".into(),
            ));
        }
        let a = problem.coupling();
        let normal = Matrix::identity(problem.dim_x(), problem.dim_x())
            + eta_x * eta_y * a.transpose() * a;
        // Identity plus a PSD term: always positive definite.
        let factor = Cholesky::new(normal).ok_or_else(|| {
            SaddleError::InvalidParams("forward-backward normal matrix lost definiteness".into())
        })?;
        Ok(Self {
            factor,
            eta_x,
            eta_y,
        })
    }

    pub fn step(&self, problem: &BilinearSaddleProblem, p: &IteratePair) -> IteratePair {
        let a = problem.coupling();
        let u = &p.x - self.eta_x * problem.grad_f(&p.x);
        let v = &p.y - self.eta_y * problem.grad_g(&p.y);
        let rhs = &u - self.eta_x * (a.transpose() * &v);
        let x_next = self.factor.solve(&rhs);
        let y_next = &v + self.eta_y * (a * &x_next);
        IteratePair::new(x_next, y_next)
    }
}

/// Safe extragradient stepsize `1 / (4 L)` with `L = max{l_x, l_y, l_xy}`.
pub fn default_extragradient_stepsize(spec: &SmoothnessSpec) -> f64 {
    0.25 / spec.l_x.max(spec.l_y).max(spec.l_xy)
}

/// Safe descent-ascent stepsizes, `mu / L^2`-scaled when both blocks are
/// strongly curved; otherwise falls back to `1 / (4 L)` (on purely bilinear
/// objectives the simultaneous variant diverges for every positive choice,
/// which is the behavior the harness contrasts against).
pub fn default_gda_stepsizes(spec: &SmoothnessSpec) -> (f64, f64) {
    let l = spec.l_x.max(spec.l_y).max(spec.l_xy);
    let mu = spec.mu_x.min(spec.mu_y);
    let eta = if mu > 0.0 { mu / (l * l) } else { 0.25 / l };
    (eta, eta)
}

/// A baseline method together with its stepsizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Baseline {
    SimGda { eta_x: f64, eta_y: f64 },
    AltGda { eta_x: f64, eta_y: f64 },
    Extragradient { eta: f64 },
}

impl Baseline {
    /// Declared gradient budget per step, `(grad_x, grad_y)`.
    pub fn budget(&self) -> (u64, u64) {
        match self {
            Baseline::SimGda { .. } | Baseline::AltGda { .. } => (1, 1),
            Baseline::Extragradient { .. } => (2, 2),
        }
    }
}

/// Runs a baseline on a general problem under the shared stopping rules.
pub fn run_baseline(
    problem: &GeneralSaddleProblem,
    method: Baseline,
    start: &IteratePair,
    opts: &RunOptions,
) -> Result<RunRecord> {
    problem.check_pair(start)?;
    let (bx, by) = method.budget();
    let norm_cap = DIVERGENCE_FACTOR * (1.0 + start.norm());
    let mut trace = TraceBuilder::new();
    let mut pair = start.clone();
    let mut k: u64 = 0;
    let status = loop {
        let residual = problem.residual(&pair);
        let (dx, dy) = run::distance_columns(&pair, opts.reference.as_ref());
        trace.push(residual, dx, dy, f64::NAN, bx * k, by * k, 0);

        if !pair.norm().is_finite() || pair.norm() > norm_cap {
            break RunStatus::Diverged;
        }
        if let Some(tol) = opts.stop.residual_tolerance {
            if residual <= tol {
                break RunStatus::Converged;
            }
        }
        if run::epsilon_stop(&pair, opts) {
            break RunStatus::Converged;
        }
        if k as usize >= opts.stop.max_iterations {
            break RunStatus::MaxIter;
        }
        pair = match method {
            Baseline::SimGda { eta_x, eta_y } => sim_gda_step(problem, eta_x, eta_y, &pair),
            Baseline::AltGda { eta_x, eta_y } => alt_gda_step(problem, eta_x, eta_y, &pair),
            Baseline::Extragradient { eta } => extragradient_step(problem, eta, &pair),
        };
        k += 1;
    };
    Ok(trace.finish(status))
}

/// Runs the exact forward-backward iteration on a bilinearly coupled problem.
/// Counts one gradient of each function and two coupling products per step
/// (the inner solve is charged to the factorization, not the oracles).
pub fn run_forward_backward(
    problem: &BilinearSaddleProblem,
    eta_x: f64,
    eta_y: f64,
    start: &IteratePair,
    opts: &RunOptions,
) -> Result<RunRecord> {
    problem.check_pair(start)?;
    let fb = ForwardBackward::new(problem, eta_x, eta_y)?;
    let norm_cap = DIVERGENCE_FACTOR * (1.0 + start.norm());
    let mut trace = TraceBuilder::new();
    let mut pair = start.clone();
    let mut k: u64 = 0;
    let status = loop {
        let residual = crate::problem::optimality_residual(problem, &pair)?;
        let (dx, dy) = run::distance_columns(&pair, opts.reference.as_ref());
        trace.push(residual, dx, dy, f64::NAN, k, k, 2 * k);

        if !pair.norm().is_finite() || pair.norm() > norm_cap {
            break RunStatus::Diverged;
        }
        if let Some(tol) = opts.stop.residual_tolerance {
            if residual <= tol {
                break RunStatus::Converged;
            }
        }
        if run::epsilon_stop(&pair, opts) {
            break RunStatus::Converged;
        }
        if k as usize >= opts.stop.max_iterations {
            break RunStatus::MaxIter;
        }
        pair = fb.step(problem, &pair);
        k += 1;
    };
    Ok(trace.finish(status))
}
