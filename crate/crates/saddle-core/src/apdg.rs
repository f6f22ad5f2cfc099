//! Accelerated primal-dual gradient method.
//!
//! One iteration, given stepsizes `eta`, momentum couplings `tau/sigma`,
//! proximal weights `alpha`, coupling-correction weights `beta` and the dual
//! extrapolation factor `theta`:
//!
//! ```text
//! y_m  = y + theta (y - y_prev)
//! x_g  = tau_x x + (1 - tau_x) x_f
//! y_g  = tau_y y + (1 - tau_y) y_f
//! x+   = x + eta_x alpha_x (x_g - x) - eta_x beta_x A'(A x - grad g(y_g))
//!          - eta_x (grad f(x_g) + A' y_m)
//! y+   = y + eta_y alpha_y (y_g - y) - eta_y beta_y A (A' y + grad f(x_g))
//!          - eta_y (grad g(y_g) - A x+)
//! x_f+ = x_g + sigma_x (x+ - x)
//! y_f+ = y_g + sigma_y (y+ - y)
//! ```
//!
//! The `y+` update uses the freshly computed `x+`; the extrapolation `y_m`
//! stands in for the implicit resolvent step, so no linear system is solved.
//! With the scheduled parameters the Lyapunov function
//!
//! ```text
//! Psi = |x - x*|^2 / eta_x + |y - y*|^2 / eta_y
//!     + 2 B_f(x_f, x*) / sigma_x + 2 B_g(y_f, y*) / sigma_y
//!     + |y - y_prev|^2 / (4 eta_y) - 2 <y - y_prev, A (x - x*)>
//! ```
//!
//! contracts by `theta` every step, which doubles as a runtime certificate.
//!
//! Per step the method performs exactly one gradient evaluation of each of
//! `f` and `g` and two products with each of `A` and `A'`: the products
//! `A x` and `A' y` are carried over from the previous iteration, and
//! `A' y_m` is formed from cached dual images by linearity.

use crate::error::{Result, SaddleError};
use crate::problem::{
    optimality_residual, BilinearSaddleProblem, IteratePair, Regime, RegimeChoice, SmoothnessSpec,
    Vector,
};
use crate::run::{self, RunOptions, TraceBuilder, DIVERGENCE_FACTOR};
use crate::diagnostics::{RunRecord, RunStatus};
use crate::spectral::{self, RangeSide};

/// Full parameter tuple of the accelerated primal-dual method.
#[derive(Debug, Clone, PartialEq)]
pub struct ApdgParams {
    pub eta_x: f64,
    pub eta_y: f64,
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub beta_x: f64,
    pub beta_y: f64,
    pub tau_x: f64,
    pub tau_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub theta: f64,
    pub delta: f64,
    pub regime: Regime,
}

impl ApdgParams {
    /// Validates ranges: positive stepsizes, `tau, sigma` in `(0, 1]`,
    /// `theta` strictly inside `(0, 1)` (the scheduled value always is, and
    /// an extrapolation factor of one would void the contraction argument).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        eta_x: f64,
        eta_y: f64,
        alpha_x: f64,
        alpha_y: f64,
        beta_x: f64,
        beta_y: f64,
        tau_x: f64,
        tau_y: f64,
        sigma_x: f64,
        sigma_y: f64,
        theta: f64,
        delta: f64,
        regime: Regime,
    ) -> Result<Self> {
        let p = Self {
            eta_x,
            eta_y,
            alpha_x,
            alpha_y,
            beta_x,
            beta_y,
            tau_x,
            tau_y,
            sigma_x,
            sigma_y,
            theta,
            delta,
            regime,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SaddleError::InvalidParams(format!("{name} = {v} must be positive")))
            }
        };
        let nonneg = |v: f64, name: &str| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(SaddleError::InvalidParams(format!(
                    "{name} = {v} must be nonnegative"
                )))
            }
        };
        let unit = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(SaddleError::InvalidParams(format!(
                    "{name} = {v} must lie in (0, 1]"
                )))
            }
        };
        pos(self.eta_x, "eta_x")?;
        pos(self.eta_y, "eta_y")?;
        pos(self.delta, "delta")?;
        nonneg(self.alpha_x, "alpha_x")?;
        nonneg(self.alpha_y, "alpha_y")?;
        nonneg(self.beta_x, "beta_x")?;
        nonneg(self.beta_y, "beta_y")?;
        unit(self.tau_x, "tau_x")?;
        unit(self.tau_y, "tau_y")?;
        unit(self.sigma_x, "sigma_x")?;
        unit(self.sigma_y, "sigma_y")?;
        if !(self.theta.is_finite() && self.theta > 0.0 && self.theta < 1.0) {
            return Err(SaddleError::InvalidParams(format!(
                "theta = {} must lie strictly inside (0, 1)",
                self.theta
            )));
        }
        Ok(())
    }
}

/// Choice of `sigma_y` in the strongly-convex-strongly-concave schedule.
///
/// `Symmetric` (the default) sets `sigma_y = sqrt(mu_y / 2 l_y)`, treating
/// the two blocks evenly. `MirrorX` sets `sigma_y = sqrt(mu_x / 2 l_x)`
/// from the x-block constants instead; both choices satisfy the same rate
/// bound, and the variant is kept for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaYRule {
    #[default]
    Symmetric,
    MirrorX,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

fn rho_from_terms(terms: &[f64]) -> f64 {
    let worst = terms.iter().copied().fold(0.0_f64, f64::max);
    if worst.is_finite() && worst > 0.0 {
        1.0 / worst
    } else {
        0.0
    }
}

/// Per-regime contraction deficits `rho_r(delta, sigma_x, sigma_y)`; zero
/// when a required modulus vanishes (the regime then drops out of the max).
fn rho_values(spec: &SmoothnessSpec, delta: f64, sigma_x: f64, sigma_y: f64) -> [f64; 4] {
    let s = spec;
    let x_smooth = 4.0 * (s.mu_x + s.l_x * sigma_x);
    let y_smooth = 4.0 * (s.mu_y + s.l_y * sigma_y);
    let mxy2 = s.mu_xy * s.mu_xy;
    let myx2 = s.mu_yx * s.mu_yx;
    let lxy2 = s.l_xy * s.l_xy;
    let rho_a = rho_from_terms(&[
        ratio(x_smooth, s.mu_x),
        ratio(2.0, sigma_x),
        ratio(y_smooth, s.mu_y),
        ratio(2.0, sigma_y),
        ratio(4.0 * s.l_xy, s.mu_x * delta),
        ratio(4.0 * s.l_xy * delta, s.mu_y),
    ]);
    let rho_b = rho_from_terms(&[
        ratio(x_smooth, s.mu_x),
        ratio(2.0, sigma_x),
        ratio(2.0 * s.l_x * y_smooth, mxy2),
        ratio(2.0, sigma_y),
        ratio(2.0 * lxy2, mxy2),
        ratio(8.0 * s.l_x * s.l_xy * delta, mxy2),
        ratio(4.0 * s.l_xy, s.mu_x * delta),
    ]);
    let rho_c = rho_from_terms(&[
        ratio(y_smooth, s.mu_y),
        ratio(2.0, sigma_y),
        ratio(2.0 * s.l_y * x_smooth, myx2),
        ratio(2.0, sigma_x),
        ratio(2.0 * lxy2, myx2),
        ratio(8.0 * s.l_y * s.l_xy, myx2 * delta),
        ratio(4.0 * s.l_xy * delta, s.mu_y),
    ]);
    let rho_d = rho_from_terms(&[
        ratio(2.0 * s.l_y * x_smooth, myx2),
        ratio(2.0, sigma_x),
        ratio(2.0 * s.l_x * y_smooth, mxy2),
        ratio(2.0, sigma_y),
        ratio(8.0 * s.l_y * s.l_xy, delta * myx2),
        ratio(8.0 * s.l_x * s.l_xy * delta, mxy2),
        ratio(2.0 * lxy2, myx2),
        ratio(2.0 * lxy2, mxy2),
    ]);
    [rho_a, rho_b, rho_c, rho_d]
}

fn regime_applicable(spec: &SmoothnessSpec, regime: Regime) -> bool {
    match regime {
        Regime::A => spec.mu_x > 0.0 && spec.mu_y > 0.0,
        Regime::B => spec.mu_x > 0.0 && spec.mu_xy > 0.0,
        Regime::C => spec.mu_y > 0.0 && spec.mu_yx > 0.0,
        Regime::D => spec.mu_xy > 0.0 && spec.mu_yx > 0.0,
    }
}

/// Proved upper bounds on `1/rho_r` at each regime's optimized parameters;
/// auto-selection compares these (infinity for inapplicable regimes).
pub(crate) fn apdg_regime_bounds(spec: &SmoothnessSpec) -> [f64; 4] {
    let s = spec;
    let mut out = [f64::INFINITY; 4];
    if regime_applicable(s, Regime::A) {
        out[0] = 4.0
            + 4.0
                * (s.l_x / s.mu_x)
                    .sqrt()
                    .max((s.l_y / s.mu_y).sqrt())
                    .max(s.l_xy / (s.mu_x * s.mu_y).sqrt());
    }
    if regime_applicable(s, Regime::B) {
        out[1] = 4.0
            + 8.0
                * ((s.l_x * s.l_y).sqrt() / s.mu_xy)
                    .max(s.l_xy / s.mu_xy * (s.l_x / s.mu_x).sqrt())
                    .max((s.l_xy / s.mu_xy).powi(2));
    }
    if regime_applicable(s, Regime::C) {
        out[2] = 4.0
            + 8.0
                * ((s.l_x * s.l_y).sqrt() / s.mu_yx)
                    .max(s.l_xy / s.mu_yx * (s.l_y / s.mu_y).sqrt())
                    .max((s.l_xy / s.mu_yx).powi(2));
    }
    if regime_applicable(s, Regime::D) {
        out[3] = 2.0
            + 8.0
                * ((s.l_x * s.l_y).sqrt() * s.l_xy / (s.mu_xy * s.mu_yx))
                    .max((s.l_xy / s.mu_yx).powi(2))
                    .max((s.l_xy / s.mu_xy).powi(2));
    }
    out
}

pub(crate) fn pick_regime(bounds: &[f64; 4], spec: &SmoothnessSpec) -> Result<Regime> {
    let mut best = f64::INFINITY;
    let mut chosen = None;
    for (regime, bound) in Regime::ALL.into_iter().zip(bounds) {
        if *bound < best {
            best = *bound;
            chosen = Some(regime);
        }
    }
    chosen.ok_or_else(|| {
        SaddleError::NoApplicableRegime(format!(
            "no regime applies: mu_x = {}, mu_y = {}, mu_xy = {}, mu_yx = {}",
            spec.mu_x, spec.mu_y, spec.mu_xy, spec.mu_yx
        ))
    })
}

/// Square root of `l_y / l_x` with the degenerate curvatures handled: both
/// zero reads as one (the stepsizes then balance), a single zero is bridged
/// through `l_xy`. Any positive value keeps the certificate valid; the
/// choice only tunes the stepsize split.
fn curvature_ratio_sqrt(l_x: f64, l_y: f64, l_xy: f64) -> f64 {
    match (l_x > 0.0, l_y > 0.0) {
        (true, true) => (l_y / l_x).sqrt(),
        (false, false) => 1.0,
        (false, true) => (l_y / l_xy).sqrt(),
        (true, false) => (l_xy / l_x).sqrt(),
    }
}

/// Schedules the full parameter tuple for the given constants, using the
/// symmetric `sigma_y` rule.
///
/// With `RegimeChoice::Auto` the regime with the smallest proved iteration
/// bound wins; ties break in the order a, b, c, d. A fixed regime whose
/// required moduli vanish is rejected.
pub fn schedule_params(spec: &SmoothnessSpec, choice: RegimeChoice) -> Result<ApdgParams> {
    schedule_params_with(spec, choice, SigmaYRule::Symmetric)
}

/// [`schedule_params`] with an explicit `sigma_y` rule.
pub fn schedule_params_with(
    spec: &SmoothnessSpec,
    choice: RegimeChoice,
    sigma_rule: SigmaYRule,
) -> Result<ApdgParams> {
    let regime = match choice {
        RegimeChoice::Auto => pick_regime(&apdg_regime_bounds(spec), spec)?,
        RegimeChoice::Fixed(r) => {
            if !regime_applicable(spec, r) {
                return Err(SaddleError::NoApplicableRegime(format!(
                    "regime {r} requires {} > 0, got mu_x = {}, mu_y = {}, mu_xy = {}, mu_yx = {}",
                    match r {
                        Regime::A => "mu_x and mu_y",
                        Regime::B => "mu_x and mu_xy",
                        Regime::C => "mu_y and mu_yx",
                        Regime::D => "mu_xy and mu_yx",
                    },
                    spec.mu_x,
                    spec.mu_y,
                    spec.mu_xy,
                    spec.mu_yx
                )));
            }
            r
        }
    };
    let s = spec;
    let (delta, sigma_x, sigma_y) = match regime {
        Regime::A => {
            let sx = (s.mu_x / (2.0 * s.l_x)).sqrt();
            let sy = match sigma_rule {
                SigmaYRule::Symmetric => (s.mu_y / (2.0 * s.l_y)).sqrt(),
                SigmaYRule::MirrorX => sx,
            };
            ((s.mu_y / s.mu_x).sqrt(), sx, sy)
        }
        Regime::B => (
            (ratio(s.mu_xy * s.mu_xy, 2.0 * s.mu_x * s.l_x)).sqrt(),
            (s.mu_x / (2.0 * s.l_x)).sqrt(),
            ratio(s.mu_xy * s.mu_xy, 4.0 * s.l_x * s.l_y).sqrt().min(1.0),
        ),
        Regime::C => (
            (ratio(2.0 * s.mu_y * s.l_y, s.mu_yx * s.mu_yx)).sqrt(),
            ratio(s.mu_yx * s.mu_yx, 4.0 * s.l_x * s.l_y).sqrt().min(1.0),
            (s.mu_y / (2.0 * s.l_y)).sqrt(),
        ),
        Regime::D => (
            s.mu_xy / s.mu_yx * curvature_ratio_sqrt(s.l_x, s.l_y, s.l_xy),
            ratio(s.mu_yx * s.mu_yx, 4.0 * s.l_x * s.l_y).sqrt().min(1.0),
            ratio(s.mu_xy * s.mu_xy, 4.0 * s.l_x * s.l_y).sqrt().min(1.0),
        ),
    };

    let eta_x = ratio(1.0, 4.0 * (s.mu_x + s.l_x * sigma_x)).min(delta / (4.0 * s.l_xy));
    let eta_y = ratio(1.0, 4.0 * (s.mu_y + s.l_y * sigma_y)).min(1.0 / (4.0 * s.l_xy * delta));
    let beta_x = ratio(1.0, 2.0 * s.l_y).min(1.0 / (2.0 * eta_x * s.l_xy * s.l_xy));
    let beta_y = ratio(1.0, 2.0 * s.l_x).min(1.0 / (2.0 * eta_y * s.l_xy * s.l_xy));
    let tau_x = 1.0 / (1.0 / sigma_x + 0.5);
    let tau_y = 1.0 / (1.0 / sigma_y + 0.5);
    let theta = 1.0
        - rho_values(s, delta, sigma_x, sigma_y)
            .into_iter()
            .fold(0.0_f64, f64::max);

    ApdgParams::new(
        eta_x, eta_y, s.mu_x, s.mu_y, beta_x, beta_y, tau_x, tau_y, sigma_x, sigma_y, theta,
        delta, regime,
    )
}

/// Solver state: the running iterate, the momentum iterates, the previous
/// dual point, and the carried-over coupling products.
#[derive(Debug, Clone)]
pub struct ApdgState {
    pub x: Vector,
    pub y: Vector,
    pub x_f: Vector,
    pub y_f: Vector,
    pub y_prev: Vector,
    pub k: usize,
    ax: Vector,
    at_y: Vector,
    at_y_prev: Vector,
}

impl ApdgState {
    /// Initializes the state at `start` (momentum iterates collapsed onto the
    /// start point, `y_prev = y`). Costs one product with each of `A`, `A'`.
    pub fn new(problem: &BilinearSaddleProblem, start: &IteratePair) -> Result<Self> {
        problem.check_pair(start)?;
        let a = problem.coupling();
        let ax = a * &start.x;
        let at_y = a.transpose() * &start.y;
        Ok(Self {
            x: start.x.clone(),
            y: start.y.clone(),
            x_f: start.x.clone(),
            y_f: start.y.clone(),
            y_prev: start.y.clone(),
            k: 0,
            ax,
            at_y: at_y.clone(),
            at_y_prev: at_y,
        })
    }

    pub fn pair(&self) -> IteratePair {
        IteratePair::new(self.x.clone(), self.y.clone())
    }
}

/// One iteration. Exactly one `grad f`, one `grad g`, two products with `A`
/// and two with `A'`.
pub fn apdg_step(
    problem: &BilinearSaddleProblem,
    params: &ApdgParams,
    state: &ApdgState,
) -> ApdgState {
    let a = problem.coupling();
    let p = params;

    // A' y_m by linearity of the cached dual images.
    let at_y_m = &state.at_y + p.theta * (&state.at_y - &state.at_y_prev);
    let x_g = p.tau_x * &state.x + (1.0 - p.tau_x) * &state.x_f;
    let y_g = p.tau_y * &state.y + (1.0 - p.tau_y) * &state.y_f;
    let grad_f_xg = problem.grad_f(&x_g);
    let grad_g_yg = problem.grad_g(&y_g);

    let x_correction = a.transpose() * (&state.ax - &grad_g_yg);
    let x_next = &state.x + p.eta_x * p.alpha_x * (&x_g - &state.x)
        - p.eta_x * p.beta_x * x_correction
        - p.eta_x * (&grad_f_xg + &at_y_m);

    let y_correction = a * (&state.at_y + &grad_f_xg);
    let ax_next = a * &x_next;
    let y_next = &state.y + p.eta_y * p.alpha_y * (&y_g - &state.y)
        - p.eta_y * p.beta_y * y_correction
        - p.eta_y * (&grad_g_yg - &ax_next);

    let x_f_next = &x_g + p.sigma_x * (&x_next - &state.x);
    let y_f_next = &y_g + p.sigma_y * (&y_next - &state.y);
    let at_y_next = a.transpose() * &y_next;

    ApdgState {
        x: x_next,
        y: y_next,
        x_f: x_f_next,
        y_f: y_f_next,
        y_prev: state.y.clone(),
        k: state.k + 1,
        ax: ax_next,
        at_y: at_y_next,
        at_y_prev: state.at_y.clone(),
    }
}

/// Lyapunov certificate value at the given state against a known solution.
///
/// Requires value oracles for the Bregman terms. The caller is responsible
/// for `reference` actually being a solution (runs validate this once at
/// setup).
pub fn apdg_lyapunov(
    problem: &BilinearSaddleProblem,
    params: &ApdgParams,
    state: &ApdgState,
    reference: &IteratePair,
) -> Result<f64> {
    problem.check_pair(reference)?;
    let bf = problem.value_f(&state.x_f)?
        - problem.value_f(&reference.x)?
        - problem
            .grad_f(&reference.x)
            .dot(&(&state.x_f - &reference.x));
    let bg = problem.value_g(&state.y_f)?
        - problem.value_g(&reference.y)?
        - problem
            .grad_g(&reference.y)
            .dot(&(&state.y_f - &reference.y));
    let dx = &state.x - &reference.x;
    let dy = &state.y - &reference.y;
    let y_diff = &state.y - &state.y_prev;
    let cross = y_diff.dot(&(problem.coupling() * &dx));
    Ok(dx.norm_squared() / params.eta_x
        + dy.norm_squared() / params.eta_y
        + 2.0 * bf / params.sigma_x
        + 2.0 * bg / params.sigma_y
        + y_diff.norm_squared() / (4.0 * params.eta_y)
        - 2.0 * cross)
}

/// Runs the method until a stopping condition fires.
///
/// The start point is projected onto `range A' x range A` unless
/// `opts.project_start` is off. Divergence (iterate norm beyond
/// `1e12 * (1 + |start|)`) stops the run with a diverged status; that is an
/// experiment outcome, not an error. Oracle counters follow the declared
/// budget: `k` gradients of each function and `4k + 2` coupling products
/// after `k` steps.
pub fn run_apdg(
    problem: &BilinearSaddleProblem,
    params: &ApdgParams,
    start: &IteratePair,
    opts: &RunOptions,
) -> Result<RunRecord> {
    problem.check_pair(start)?;
    let start = if opts.project_start {
        let a = problem.coupling();
        IteratePair::new(
            spectral::project_onto_range(a, &start.x, RangeSide::RangeATranspose)?,
            spectral::project_onto_range(a, &start.y, RangeSide::RangeA)?,
        )
    } else {
        start.clone()
    };

    if opts.track_lyapunov {
        let reference = opts.reference.as_ref().ok_or_else(|| {
            SaddleError::Diagnostics("certificate tracking needs a reference solution".into())
        })?;
        let r = optimality_residual(problem, reference)?;
        let s = problem.spec();
        let scale = (1.0 + s.l_x + s.l_y + s.l_xy) * (1.0 + reference.norm());
        if r > 1e-8 * scale {
            return Err(SaddleError::Diagnostics(format!(
                "reference residual {r:.3e} is too large for certificate tracking"
            )));
        }
        problem.value_f(&reference.x)?;
        problem.value_g(&reference.y)?;
    }

    let mut state = ApdgState::new(problem, &start)?;
    let norm_cap = DIVERGENCE_FACTOR * (1.0 + start.norm());
    let mut trace = TraceBuilder::new();
    let status = loop {
        let pair = state.pair();
        let residual = optimality_residual(problem, &pair)?;
        let (dx, dy) = run::distance_columns(&pair, opts.reference.as_ref());
        let lyap = if opts.track_lyapunov {
            apdg_lyapunov(problem, params, &state, opts.reference.as_ref().unwrap())?
        } else {
            f64::NAN
        };
        let k = state.k as u64;
        trace.push(residual, dx, dy, lyap, k, k, 4 * k + 2);

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
        if state.k >= opts.stop.max_iterations {
            break RunStatus::MaxIter;
        }
        state = apdg_step(problem, params, &state);
    };
    Ok(trace.finish(status))
}
