//! Shared plumbing for solver runs: stopping rules, run options, and the
//! per-iteration trace builder.

use std::time::Instant;

use crate::diagnostics::{RunRecord, RunStatus};
use crate::problem::IteratePair;

/// Iterates whose norm exceeds `DIVERGENCE_FACTOR * (1 + |start|)` abort the
/// run with a diverged status.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

/// When to stop iterating. All enabled conditions are checked at every
/// iterate; the first one that fires wins.
#[derive(Debug, Clone)]
pub struct StoppingRule {
    /// Hard cap on the number of steps.
    pub max_iterations: usize,
    /// Stop once the first-order optimality residual drops to this level.
    /// Reference-free; this is the production stopping criterion.
    pub residual_tolerance: Option<f64>,
    /// Stop once `max{|x - x*|^2, |y - y*|^2} <= eps` against the run's
    /// reference solution. Squared distances; diagnostics only, since
    /// solutions are unknown in general.
    pub epsilon_accuracy: Option<f64>,
}

impl StoppingRule {
    pub fn max_iterations(max_iterations: usize) -> Self {
        Self {
            max_iterations,
            residual_tolerance: None,
            epsilon_accuracy: None,
        }
    }

    pub fn residual(max_iterations: usize, tol: f64) -> Self {
        Self {
            max_iterations,
            residual_tolerance: Some(tol),
            epsilon_accuracy: None,
        }
    }
}

/// Options controlling a solver run beyond the bare stopping rule.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub stop: StoppingRule,
    /// Project the start point onto `range A' x range A` before iterating.
    /// On by default; the escape hatch exists for experiments probing
    /// robustness to unprojected starts. Ignored by solvers whose iterates
    /// are unconstrained.
    pub project_start: bool,
    /// Record the Lyapunov certificate value at every iterate. Requires a
    /// reference solution (and, for the primal-dual solver, value oracles).
    pub track_lyapunov: bool,
    /// Known solution used for distance columns, epsilon-accuracy stopping,
    /// and Lyapunov tracking.
    pub reference: Option<IteratePair>,
}

impl RunOptions {
    pub fn new(stop: StoppingRule) -> Self {
        Self {
            stop,
            project_start: true,
            track_lyapunov: false,
            reference: None,
        }
    }

    pub fn with_reference(mut self, reference: IteratePair) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn with_lyapunov(mut self, reference: IteratePair) -> Self {
        self.reference = Some(reference);
        self.track_lyapunov = true;
        self
    }
}

impl Default for RunOptions {
    fn default() -> Self {
        Self::new(StoppingRule::residual(1000, 1e-9))
    }
}

/// Accumulates one trace row per iterate and finalizes into a `RunRecord`.
pub(crate) struct TraceBuilder {
    started: Instant,
    record: RunRecord,
}

impl TraceBuilder {
    pub fn new() -> Self {
        Self {
            started: Instant::now(),
            record: RunRecord::empty(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        residual: f64,
        dist_x_sq: f64,
        dist_y_sq: f64,
        lyapunov: f64,
        grad_f_calls: u64,
        grad_g_calls: u64,
        matvec_calls: u64,
    ) {
        let r = &mut self.record;
        r.residuals.push(residual);
        r.dist_x_sq.push(dist_x_sq);
        r.dist_y_sq.push(dist_y_sq);
        r.lyapunov.push(lyapunov);
        r.grad_f_calls.push(grad_f_calls);
        r.grad_g_calls.push(grad_g_calls);
        r.matvec_calls.push(matvec_calls);
        r.elapsed_seconds.push(self.started.elapsed().as_secs_f64());
    }

    pub fn finish(mut self, status: RunStatus) -> RunRecord {
        self.record.status = status;
        self.record
    }
}

/// Squared distances of `p` to the reference, `(|x - x*|^2, |y - y*|^2)`;
/// NaN placeholders when no reference is known.
pub(crate) fn distance_columns(p: &IteratePair, reference: Option<&IteratePair>) -> (f64, f64) {
    match reference {
        Some(r) => (
            (&p.x - &r.x).norm_squared(),
            (&p.y - &r.y).norm_squared(),
        ),
        None => (f64::NAN, f64::NAN),
    }
}

/// True when the epsilon-accuracy stop fires at `p`.
pub(crate) fn epsilon_stop(p: &IteratePair, opts: &RunOptions) -> bool {
    match (opts.stop.epsilon_accuracy, opts.reference.as_ref()) {
        (Some(eps), Some(r)) => {
            let dx = (&p.x - &r.x).norm_squared();
            let dy = (&p.y - &r.y).norm_squared();
            dx.max(dy) <= eps
        }
        _ => false,
    }
}
