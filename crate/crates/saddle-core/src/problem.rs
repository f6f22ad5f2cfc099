//! Problem abstractions and oracle contracts.
//!
//! The central object is the bilinearly coupled saddle-point problem
//!
//! ```text
//! min_x max_y  f(x) + y' A x - g(y)
//! ```
//!
//! with smooth convex `f`, `g` and a dense coupling matrix `A`. Solvers only
//! touch the problem through gradient oracles and matrix-vector products;
//! function-value oracles are optional and enable value-based diagnostics
//! (Bregman divergences, Lyapunov certificates).
//!
//! Distances and accuracy targets are measured in *squared* Euclidean norm
//! throughout: a pair is `eps`-accurate when
//! `min over solutions of max{ |x - x*|^2, |y - y*|^2 } <= eps`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SaddleError};

/// Dense column vector used everywhere in this crate.
pub type Vector = DVector<f64>;
/// Dense matrix used everywhere in this crate.
pub type Matrix = DMatrix<f64>;

/// Gradient oracle of a function of one vector block.
pub type GradOracle = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
/// Value oracle of a function of one vector block.
pub type ValueOracle = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
/// Partial-gradient oracle of a function of two vector blocks.
pub type PairGradOracle = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;

/// The seven constants governing smoothness, strong convexity and coupling.
///
/// `l_x >= mu_x >= 0` and `l_y >= mu_y >= 0` bound the curvature of `f` and
/// `g`. `l_xy` bounds the largest singular value of the coupling matrix from
/// above, while `mu_xy` / `mu_yx` bound its smallest (positive) singular value
/// from below; which of the two spectral branches applies is recorded by the
/// range flags.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessSpec {
    pub l_x: f64,
    pub mu_x: f64,
    pub l_y: f64,
    pub mu_y: f64,
    pub l_xy: f64,
    pub mu_xy: f64,
    pub mu_yx: f64,
    /// Whether `grad g(y)` lies in `range A` for every `y`. When true, `mu_xy`
    /// may be backed by the smallest *positive* eigenvalue of `A A'`.
    pub range_g_in_range_a: bool,
    /// Whether `grad f(x)` lies in `range A'` for every `x`. When true,
    /// `mu_yx` may be backed by the smallest *positive* eigenvalue of `A' A`.
    pub range_f_in_range_at: bool,
}

impl SmoothnessSpec {
    /// Validates the ordering constraints on the constants.
    ///
    /// `l_xy` must be strictly positive; the coupling lower moduli may equal
    /// `l_xy` (tight spectral values of a matrix with a flat spectrum).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        l_x: f64,
        mu_x: f64,
        l_y: f64,
        mu_y: f64,
        l_xy: f64,
        mu_xy: f64,
        mu_yx: f64,
        range_g_in_range_a: bool,
        range_f_in_range_at: bool,
    ) -> Result<Self> {
        let spec = Self {
            l_x,
            mu_x,
            l_y,
            mu_y,
            l_xy,
            mu_xy,
            mu_yx,
            range_g_in_range_a,
            range_f_in_range_at,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.l_x, self.mu_x, self.l_y, self.mu_y, self.l_xy, self.mu_xy, self.mu_yx,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SaddleError::InvalidSpec(
                "all constants must be finite and nonnegative".into(),
            ));
        }
        if self.l_x < self.mu_x {
            return Err(SaddleError::InvalidSpec(format!(
                "l_x = {} < mu_x = {}",
                self.l_x, self.mu_x
            )));
        }
        if self.l_y < self.mu_y {
            return Err(SaddleError::InvalidSpec(format!(
                "l_y = {} < mu_y = {}",
                self.l_y, self.mu_y
            )));
        }
        if self.l_xy <= 0.0 {
            return Err(SaddleError::InvalidSpec(
                "l_xy must be strictly positive".into(),
            ));
        }
        if self.l_xy < self.mu_xy || self.l_xy < self.mu_yx {
            return Err(SaddleError::InvalidSpec(format!(
                "l_xy = {} must dominate mu_xy = {} and mu_yx = {}",
                self.l_xy, self.mu_xy, self.mu_yx
            )));
        }
        Ok(())
    }

    /// The coupling condition `min{max{mu_x, mu_yx}, max{mu_y, mu_xy}} > 0`
    /// under which the solution set is nonempty and the solvers converge
    /// linearly.
    pub fn coupling_condition_holds(&self) -> bool {
        self.mu_x.max(self.mu_yx) > 0.0 && self.mu_y.max(self.mu_xy) > 0.0
    }

    /// Errors with the failing constants when the coupling condition is violated.
    pub fn require_coupling_condition(&self) -> Result<()> {
        if self.coupling_condition_holds() {
            Ok(())
        } else {
            Err(SaddleError::NoApplicableRegime(format!(
                "min{{max{{mu_x={}, mu_yx={}}}, max{{mu_y={}, mu_xy={}}}}} = 0",
                self.mu_x, self.mu_yx, self.mu_y, self.mu_xy
            )))
        }
    }
}

/// Parameter regimes, named after which subset of the lower moduli
/// `{mu_x, mu_y, mu_xy, mu_yx}` backs the linear rate.
///
/// * `A`: `mu_x, mu_y > 0` (strongly-convex-strongly-concave),
/// * `B`: `mu_x, mu_xy > 0` (strongly convex in x, coupling covers y),
/// * `C`: `mu_y, mu_yx > 0` (mirror of B),
/// * `D`: `mu_xy, mu_yx > 0` (coupling covers both blocks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    A,
    B,
    C,
    D,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::A, Regime::B, Regime::C, Regime::D];

    pub fn letter(self) -> char {
        match self {
            Regime::A => 'a',
            Regime::B => 'b',
            Regime::C => 'c',
            Regime::D => 'd',
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// A regime request: pin one of the four schedules or let the scheduler pick
/// the regime whose proved iteration bound is smallest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeChoice {
    Auto,
    Fixed(Regime),
}

/// A primal-dual iterate `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IteratePair {
    pub x: Vector,
    pub y: Vector,
}

impl IteratePair {
    pub fn new(x: Vector, y: Vector) -> Self {
        Self { x, y }
    }

    pub fn zeros(dim_x: usize, dim_y: usize) -> Self {
        Self {
            x: Vector::zeros(dim_x),
            y: Vector::zeros(dim_y),
        }
    }

    /// Euclidean norm of the stacked pair.
    pub fn norm(&self) -> f64 {
        (self.x.norm_squared() + self.y.norm_squared()).sqrt()
    }
}

/// A bilinearly coupled saddle-point problem `min_x max_y f(x) + y'Ax - g(y)`.
///
/// Oracles must be pure functions: the solvers cache gradient evaluations and
/// matrix-vector products across iterations, which is only sound when equal
/// inputs produce equal outputs. All fields are immutable after construction,
/// so a problem can be shared freely across threads.
#[derive(Clone)]
pub struct BilinearSaddleProblem {
    dim_x: usize,
    dim_y: usize,
    grad_f: GradOracle,
    grad_g: GradOracle,
    value_f: Option<ValueOracle>,
    value_g: Option<ValueOracle>,
    coupling: Matrix,
    spec: SmoothnessSpec,
}

impl BilinearSaddleProblem {
    /// Builds a problem and probes the oracles once (at the origin) to check
    /// that their output dimensions match the declared ones.
    pub fn new(
        grad_f: GradOracle,
        grad_g: GradOracle,
        value_f: Option<ValueOracle>,
        value_g: Option<ValueOracle>,
        coupling: Matrix,
        spec: SmoothnessSpec,
    ) -> Result<Self> {
        let dim_x = coupling.ncols();
        let dim_y = coupling.nrows();
        if dim_x == 0 || dim_y == 0 {
            return Err(SaddleError::DimensionMismatch(
                "coupling matrix must be nonempty".into(),
            ));
        }
        let gf = grad_f(&Vector::zeros(dim_x));
        if gf.len() != dim_x {
            return Err(SaddleError::DimensionMismatch(format!(
                "grad_f returned length {} for dim_x = {}",
                gf.len(),
                dim_x
            )));
        }
        let gg = grad_g(&Vector::zeros(dim_y));
        if gg.len() != dim_y {
            return Err(SaddleError::DimensionMismatch(format!(
                "grad_g returned length {} for dim_y = {}",
                gg.len(),
                dim_y
            )));
        }
        Ok(Self {
            dim_x,
            dim_y,
            grad_f,
            grad_g,
            value_f,
            value_g,
            coupling,
            spec,
        })
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    pub fn coupling(&self) -> &Matrix {
        &self.coupling
    }

    pub fn spec(&self) -> &SmoothnessSpec {
        &self.spec
    }

    pub fn grad_f(&self, x: &Vector) -> Vector {
        debug_assert_eq!(x.len(), self.dim_x);
        (self.grad_f)(x)
    }

    pub fn grad_g(&self, y: &Vector) -> Vector {
        debug_assert_eq!(y.len(), self.dim_y);
        (self.grad_g)(y)
    }

    pub fn has_values(&self) -> bool {
        self.value_f.is_some() && self.value_g.is_some()
    }

    pub fn value_f(&self, x: &Vector) -> Result<f64> {
        self.value_f
            .as_ref()
            .map(|v| v(x))
            .ok_or(SaddleError::MissingValueOracle("f"))
    }

    pub fn value_g(&self, y: &Vector) -> Result<f64> {
        self.value_g
            .as_ref()
            .map(|v| v(y))
            .ok_or(SaddleError::MissingValueOracle("g"))
    }

    pub fn value_f_oracle(&self) -> Option<&ValueOracle> {
        self.value_f.as_ref()
    }

    pub fn value_g_oracle(&self) -> Option<&ValueOracle> {
        self.value_g.as_ref()
    }

    pub fn grad_f_oracle(&self) -> &GradOracle {
        &self.grad_f
    }

    pub fn grad_g_oracle(&self) -> &GradOracle {
        &self.grad_g
    }

    /// Checks that `p` has this problem's dimensions.
    pub fn check_pair(&self, p: &IteratePair) -> Result<()> {
        if p.x.len() != self.dim_x || p.y.len() != self.dim_y {
            return Err(SaddleError::DimensionMismatch(format!(
                "iterate is ({}, {}), problem is ({}, {})",
                p.x.len(),
                p.y.len(),
                self.dim_x,
                self.dim_y
            )));
        }
        Ok(())
    }

    /// Views this problem as a general saddle-point problem through its
    /// partial gradients `grad_x F = grad f(x) + A'y`, `grad_y F = Ax - grad g(y)`.
    ///
    /// The coupling lower moduli are recomputed from the *smallest* (not
    /// smallest positive) eigenvalues of the Gram matrices: the generalized
    /// coupling bounds quantify over all of `R^{d_y}` and `R^{d_x}`, so the
    /// range-restricted branch is not available to the general-problem solver.
    pub fn to_general(&self) -> GeneralSaddleProblem {
        let report = crate::spectral::analyze_coupling(
            &self.coupling,
            crate::spectral::DEFAULT_RANK_TOLERANCE,
        )
        .expect("coupling matrix already validated as nonzero");
        let (mu_xy, mu_yx) = crate::spectral::derive_mu_constants(&report, false, false);
        let spec = SmoothnessSpec {
            mu_xy,
            mu_yx,
            range_g_in_range_a: false,
            range_f_in_range_at: false,
            ..self.spec.clone()
        };
        let a = Arc::new(self.coupling.clone());
        let at = Arc::new(self.coupling.transpose());
        let grad_f = Arc::clone(&self.grad_f);
        let grad_g = Arc::clone(&self.grad_g);
        let grad_x: PairGradOracle = {
            let at = Arc::clone(&at);
            Arc::new(move |x: &Vector, y: &Vector| grad_f(x) + &*at * y)
        };
        let grad_y: PairGradOracle = Arc::new(move |x: &Vector, y: &Vector| &*a * x - grad_g(y));
        GeneralSaddleProblem::new(self.dim_x, self.dim_y, grad_x, grad_y, spec)
            .expect("dimensions already validated")
    }
}

/// A general smooth convex-concave saddle-point problem `min_x max_y F(x, y)`,
/// accessed through its partial gradients.
#[derive(Clone)]
pub struct GeneralSaddleProblem {
    dim_x: usize,
    dim_y: usize,
    grad_x: PairGradOracle,
    grad_y: PairGradOracle,
    spec: SmoothnessSpec,
}

impl GeneralSaddleProblem {
    pub fn new(
        dim_x: usize,
        dim_y: usize,
        grad_x: PairGradOracle,
        grad_y: PairGradOracle,
        spec: SmoothnessSpec,
    ) -> Result<Self> {
        if dim_x == 0 || dim_y == 0 {
            return Err(SaddleError::DimensionMismatch(
                "dimensions must be positive".into(),
            ));
        }
        let zx = Vector::zeros(dim_x);
        let zy = Vector::zeros(dim_y);
        let gx = grad_x(&zx, &zy);
        let gy = grad_y(&zx, &zy);
        if gx.len() != dim_x || gy.len() != dim_y {
            return Err(SaddleError::DimensionMismatch(format!(
                "partial gradients returned ({}, {}) for dims ({}, {})",
                gx.len(),
                gy.len(),
                dim_x,
                dim_y
            )));
        }
        Ok(Self {
            dim_x,
            dim_y,
            grad_x,
            grad_y,
            spec,
        })
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    pub fn spec(&self) -> &SmoothnessSpec {
        &self.spec
    }

    pub fn grad_x(&self, x: &Vector, y: &Vector) -> Vector {
        debug_assert_eq!(x.len(), self.dim_x);
        debug_assert_eq!(y.len(), self.dim_y);
        (self.grad_x)(x, y)
    }

    pub fn grad_y(&self, x: &Vector, y: &Vector) -> Vector {
        (self.grad_y)(x, y)
    }

    pub fn check_pair(&self, p: &IteratePair) -> Result<()> {
        if p.x.len() != self.dim_x || p.y.len() != self.dim_y {
            return Err(SaddleError::DimensionMismatch(format!(
                "iterate is ({}, {}), problem is ({}, {})",
                p.x.len(),
                p.y.len(),
                self.dim_x,
                self.dim_y
            )));
        }
        Ok(())
    }

    /// Stationarity residual `max{ |grad_x F|, |grad_y F| }` at `p`.
    pub fn residual(&self, p: &IteratePair) -> f64 {
        self.grad_x(&p.x, &p.y)
            .norm()
            .max(self.grad_y(&p.x, &p.y).norm())
    }
}

/// Bregman divergence `B_h(z1, z2) = h(z1) - h(z2) - <grad h(z2), z1 - z2>`.
///
/// Nonnegative for convex `h` (up to roundoff).
pub fn bregman_divergence(
    value_h: &dyn Fn(&Vector) -> f64,
    grad_h: &dyn Fn(&Vector) -> Vector,
    z1: &Vector,
    z2: &Vector,
) -> Result<f64> {
    if z1.len() != z2.len() {
        return Err(SaddleError::DimensionMismatch(format!(
            "z1 has length {}, z2 has length {}",
            z1.len(),
            z2.len()
        )));
    }
    let g2 = grad_h(z2);
    if g2.len() != z2.len() {
        return Err(SaddleError::DimensionMismatch(format!(
            "grad_h returned length {} for input of length {}",
            g2.len(),
            z2.len()
        )));
    }
    Ok(value_h(z1) - value_h(z2) - g2.dot(&(z1 - z2)))
}

/// First-order optimality residual
/// `max{ |grad f(x) + A'y|, |grad g(y) - Ax| }`.
///
/// Zero exactly at the solutions of the problem (in exact arithmetic).
pub fn optimality_residual(problem: &BilinearSaddleProblem, p: &IteratePair) -> Result<f64> {
    problem.check_pair(p)?;
    let a = problem.coupling();
    let rx = (problem.grad_f(&p.x) + a.transpose() * &p.y).norm();
    let ry = (problem.grad_g(&p.y) - a * &p.x).norm();
    Ok(rx.max(ry))
}

/// Whether `p` is within squared distance `eps` of the sampled solution set:
/// `min over reference of max{ |x - x*|^2, |y - y*|^2 } <= eps`.
///
/// When the solution set is a continuum, a finite sample makes this an upper
/// bound on the true minimum, so `true` is conclusive and `false` is not.
pub fn check_epsilon_accurate(
    p: &IteratePair,
    reference: &[IteratePair],
    eps: f64,
) -> Result<bool> {
    if reference.is_empty() {
        return Err(SaddleError::EmptyReference);
    }
    let best = reference
        .iter()
        .map(|r| {
            let dx = (&p.x - &r.x).norm_squared();
            let dy = (&p.y - &r.y).norm_squared();
            dx.max(dy)
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best <= eps)
}

/// Worst relative deviation between `grad` and a central finite difference of
/// `value` (step `h`) over the coordinates of `at`.
pub fn gradient_finite_difference_error(
    value: &dyn Fn(&Vector) -> f64,
    grad: &dyn Fn(&Vector) -> Vector,
    at: &Vector,
    h: f64,
) -> f64 {
    let g = grad(at);
    let scale = 1.0 + g.norm();
    let mut worst = 0.0_f64;
    for i in 0..at.len() {
        let mut zp = at.clone();
        let mut zm = at.clone();
        zp[i] += h;
        zm[i] -= h;
        let fd = (value(&zp) - value(&zm)) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / scale);
    }
    worst
}
