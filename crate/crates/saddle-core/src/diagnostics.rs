//! Convergence measurement: run traces, geometric-rate fitting, theoretical
//! iteration bounds, and duality gaps.

use crate::error::{Result, SaddleError};
use crate::problem::{IteratePair, Regime, SmoothnessSpec};
use crate::problems::QuadraticSaddleInstance;

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    /// A stopping criterion (residual tolerance or epsilon accuracy) fired.
    Converged,
    /// The iteration cap was reached first.
    MaxIter,
    /// The iterate norm blew past the divergence guard.
    Diverged,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIter => "max_iter",
            RunStatus::Diverged => "diverged",
        };
        write!(f, "{s}")
    }
}

/// Per-iteration trace of a solver run. Row `k` describes the iterate after
/// `k` steps; row 0 is the start point. All arrays share one length.
///
/// Distance and Lyapunov columns hold NaN when the run had no reference
/// solution or certificate tracking was off. Oracle counters follow the
/// solver's declared per-step budget (diagnostic evaluations such as the
/// residual column are not charged against the solver).
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub residuals: Vec<f64>,
    pub dist_x_sq: Vec<f64>,
    pub dist_y_sq: Vec<f64>,
    pub lyapunov: Vec<f64>,
    pub grad_f_calls: Vec<u64>,
    pub grad_g_calls: Vec<u64>,
    pub matvec_calls: Vec<u64>,
    pub elapsed_seconds: Vec<f64>,
    pub status: RunStatus,
}

impl RunRecord {
    pub(crate) fn empty() -> Self {
        Self {
            residuals: Vec::new(),
            dist_x_sq: Vec::new(),
            dist_y_sq: Vec::new(),
            lyapunov: Vec::new(),
            grad_f_calls: Vec::new(),
            grad_g_calls: Vec::new(),
            matvec_calls: Vec::new(),
            elapsed_seconds: Vec::new(),
            status: RunStatus::MaxIter,
        }
    }

    /// Number of steps taken (rows minus the initial iterate).
    pub fn iterations(&self) -> usize {
        self.residuals.len().saturating_sub(1)
    }

    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::NAN)
    }
}

/// Iterations skipped by default before fitting a geometric rate, so the
/// transient phase does not pollute the fit.
pub const DEFAULT_BURN_IN: usize = 10;

/// Result of fitting a geometric decay to a residual series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Per-iteration contraction factor, `exp(slope of log residual vs k)`.
    pub rate: f64,
    /// Coefficient of determination of the log-linear fit.
    pub r_squared: f64,
}

impl RateFit {
    /// A fitted rate at or above one means the series is not decaying.
    pub fn converging(&self) -> bool {
        self.rate < 1.0
    }
}

/// Fits `log(residual_k) ~ a + k log(rate)` by least squares, skipping the
/// first `burn_in` iterations (transient before the geometric phase).
///
/// The series is truncated at the first exact zero. Requires at least 20
/// positive post-burn-in points.
pub fn fit_linear_rate(record: &RunRecord, burn_in: usize) -> Result<RateFit> {
    fit_rate_from_series(&record.residuals, burn_in)
}

/// Same as [`fit_linear_rate`] but on a bare residual series.
pub fn fit_rate_from_series(residuals: &[f64], burn_in: usize) -> Result<RateFit> {
    let tail: &[f64] = residuals.get(burn_in..).unwrap_or(&[]);
    let cut = tail.iter().position(|r| *r == 0.0).unwrap_or(tail.len());
    let series = &tail[..cut];
    if series.len() < 20 {
        return Err(SaddleError::Diagnostics(format!(
            "need at least 20 positive residuals after burn-in, got {}",
            series.len()
        )));
    }
    if series.iter().any(|r| *r < 0.0 || !r.is_finite()) {
        return Err(SaddleError::Diagnostics(
            "residual series must be positive and finite".into(),
        ));
    }
    let n = series.len() as f64;
    let mean_k = (series.len() - 1) as f64 / 2.0;
    let logs: Vec<f64> = series.iter().map(|r| r.ln()).collect();
    let mean_log = logs.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (k, lr) in logs.iter().enumerate() {
        let dk = k as f64 - mean_k;
        sxx += dk * dk;
        sxy += dk * (lr - mean_log);
    }
    let slope = sxy / sxx;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (k, lr) in logs.iter().enumerate() {
        let fitted = mean_log + slope * (k as f64 - mean_k);
        ss_res += (lr - fitted).powi(2);
        ss_tot += (lr - mean_log).powi(2);
    }
    // A constant series is fit perfectly by its mean.
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(RateFit {
        rate: slope.exp(),
        r_squared,
    })
}

/// Which solver's iteration bounds to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Apdg,
    Gdae,
}

/// The four per-regime iteration bounds (up to the log factor) and the regime
/// that minimizes them.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub t_a: f64,
    pub t_b: f64,
    pub t_c: f64,
    pub t_d: f64,
    pub best_regime: Regime,
}

impl ComplexityReport {
    pub fn value(&self, regime: Regime) -> f64 {
        match regime {
            Regime::A => self.t_a,
            Regime::B => self.t_b,
            Regime::C => self.t_c,
            Regime::D => self.t_d,
        }
    }

    pub fn best_value(&self) -> f64 {
        self.value(self.best_regime)
    }
}

fn guarded_div(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// Evaluates the per-regime iteration bounds for the given solver family.
/// Regimes whose required lower moduli vanish map to infinity.
pub fn theoretical_complexity(spec: &SmoothnessSpec, kind: SolverKind) -> Result<ComplexityReport> {
    let (lx, mx, ly, my) = (spec.l_x, spec.mu_x, spec.l_y, spec.mu_y);
    let (lxy, mxy, myx) = (spec.l_xy, spec.mu_xy, spec.mu_yx);
    let (t_a, t_b, t_c, t_d) = match kind {
        SolverKind::Apdg => (
            guarded_div(lx, mx)
                .sqrt()
                .max(guarded_div(ly, my).sqrt())
                .max(guarded_div(lxy, (mx * my).sqrt())),
            guarded_div((lx * ly).sqrt(), mxy)
                .max(guarded_div(lxy, mxy) * guarded_div(lx, mx).sqrt())
                .max(guarded_div(lxy * lxy, mxy * mxy)),
            guarded_div((lx * ly).sqrt(), myx)
                .max(guarded_div(lxy, myx) * guarded_div(ly, my).sqrt())
                .max(guarded_div(lxy * lxy, myx * myx)),
            guarded_div((lx * ly).sqrt() * lxy, mxy * myx)
                .max(guarded_div(lxy * lxy, myx * myx))
                .max(guarded_div(lxy * lxy, mxy * mxy)),
        ),
        SolverKind::Gdae => (
            guarded_div(lx, mx)
                .max(guarded_div(ly, my))
                .max(guarded_div(lxy, (mx * my).sqrt())),
            guarded_div(lx, mx)
                .max(guarded_div(lx * ly, mxy * mxy))
                .max(guarded_div(lxy * lxy, mxy * mxy)),
            guarded_div(ly, my)
                .max(guarded_div(lx * ly, myx * myx))
                .max(guarded_div(lxy * lxy, myx * myx)),
            guarded_div(lx * ly, mxy * mxy)
                .max(guarded_div(lx * ly, myx * myx))
                .max(guarded_div(lxy * lxy, mxy * mxy))
                .max(guarded_div(lxy * lxy, myx * myx)),
        ),
    };
    // Regime applicability also gates the bounds: a max of finite terms can
    // hide a vanishing required modulus (e.g. l_x = 0 with mu_x = 0 makes
    // l_x/mu_x read as infinity/0 -> guarded to infinity already; but
    // mu_x = 0 with l_x = 0 must still disqualify regimes a and b).
    let t_a = if mx > 0.0 && my > 0.0 { t_a } else { f64::INFINITY };
    let t_b = if mx > 0.0 && mxy > 0.0 { t_b } else { f64::INFINITY };
    let t_c = if my > 0.0 && myx > 0.0 { t_c } else { f64::INFINITY };
    let t_d = if mxy > 0.0 && myx > 0.0 { t_d } else { f64::INFINITY };

    let values = [t_a, t_b, t_c, t_d];
    if values.iter().all(|v| v.is_infinite()) {
        return Err(SaddleError::NoApplicableRegime(format!(
            "coupling condition violated: mu_x = {mx}, mu_y = {my}, mu_xy = {mxy}, mu_yx = {myx}"
        )));
    }
    let mut best_regime = Regime::A;
    let mut best = f64::INFINITY;
    for (regime, value) in Regime::ALL.into_iter().zip(values) {
        if value < best {
            best = value;
            best_regime = regime;
        }
    }
    Ok(ComplexityReport {
        t_a,
        t_b,
        t_c,
        t_d,
        best_regime,
    })
}

/// Duality gap `P(x) - D(y)` of a quadratic instance, where the primal and
/// dual objectives are evaluated through the closed-form conjugates.
///
/// Nonnegative everywhere (up to roundoff), zero at the saddle point.
/// Returns `+inf` where a conjugate is infinite (the query point leaves the
/// effective domain); that is a legitimate value, not an error.
pub fn duality_gap(instance: &QuadraticSaddleInstance, p: &IteratePair) -> f64 {
    let primal = instance.primal_value(&p.x);
    let dual = instance.dual_value(&p.y);
    if primal == f64::INFINITY || dual == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    primal - dual
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_geometric_series_recovers_its_rate() {
        let series: Vec<f64> = (0..200).map(|k| 0.9_f64.powi(k)).collect();
        let fit = fit_rate_from_series(&series, 0).unwrap();
        assert_relative_eq!(fit.rate, 0.9, epsilon = 1e-6);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        assert!(fit.converging());
    }

    #[test]
    fn constant_series_is_flagged_non_convergent() {
        let series = vec![0.5; 60];
        let fit = fit_rate_from_series(&series, 10).unwrap();
        assert_relative_eq!(fit.rate, 1.0, epsilon = 1e-12);
        assert!(!fit.converging());
    }

    #[test]
    fn series_truncates_at_first_exact_zero() {
        let mut series: Vec<f64> = (0..50).map(|k| 0.8_f64.powi(k)).collect();
        series.push(0.0);
        series.push(0.0);
        let fit = fit_rate_from_series(&series, 0).unwrap();
        assert_relative_eq!(fit.rate, 0.8, epsilon = 1e-6);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let series = vec![1.0; 25];
        assert!(fit_rate_from_series(&series, 10).is_err());
    }

    fn kappa_spec(kappa: f64) -> SmoothnessSpec {
        SmoothnessSpec::new(
            kappa,
            1.0,
            kappa,
            1.0,
            kappa.sqrt(),
            0.0,
            0.0,
            false,
            false,
        )
        .unwrap()
    }

    #[test]
    fn scsc_bounds_scale_as_sqrt_kappa_vs_kappa() {
        for kappa in [16.0, 64.0, 256.0] {
            let spec = kappa_spec(kappa);
            let apdg = theoretical_complexity(&spec, SolverKind::Apdg).unwrap();
            assert_relative_eq!(apdg.t_a, kappa.sqrt(), max_relative = 1e-12);
            assert_eq!(apdg.best_regime, Regime::A);
            assert!(apdg.t_b.is_infinite() && apdg.t_c.is_infinite() && apdg.t_d.is_infinite());

            let gdae = theoretical_complexity(&spec, SolverKind::Gdae).unwrap();
            assert_relative_eq!(gdae.t_a, kappa, max_relative = 1e-12);
        }
    }

    #[test]
    fn fitted_rate_stays_below_the_scheduled_contraction() {
        use crate::apdg::{run_apdg, schedule_params};
        use crate::problem::{IteratePair, RegimeChoice, Vector};
        use crate::problems::make_quadratic_saddle;
        use crate::run::{RunOptions, StoppingRule};

        let target =
            SmoothnessSpec::new(4.0, 1.0, 4.0, 1.0, 2.0, 1.0, 1.0, true, true).unwrap();
        let inst = make_quadratic_saddle(4, 4, &target, 808).unwrap();
        let problem = inst.problem();
        let params = schedule_params(problem.spec(), RegimeChoice::Fixed(Regime::A)).unwrap();
        let start = IteratePair::new(
            Vector::from_element(4, 1.0),
            Vector::from_element(4, -1.0),
        );
        let opts = RunOptions::new(StoppingRule::residual(2000, 1e-11));
        let record = run_apdg(&problem, &params, &start, &opts).unwrap();
        let fit = fit_linear_rate(&record, 10).unwrap();
        // The residual decays at least as fast as the certified factor; the
        // Lyapunov contraction caps the fitted rate up to fit noise.
        assert!(
            fit.rate <= params.theta + 0.02,
            "fitted rate {} exceeds theta {} + 0.02",
            fit.rate,
            params.theta
        );
        assert!(fit.r_squared >= 0.98, "r^2 = {}", fit.r_squared);
    }

    #[test]
    fn bilinear_spec_selects_regime_d() {
        let spec = SmoothnessSpec::new(0.0, 0.0, 0.0, 0.0, 2.0, 1.0, 1.0, true, true).unwrap();
        let apdg = theoretical_complexity(&spec, SolverKind::Apdg).unwrap();
        assert_eq!(apdg.best_regime, Regime::D);
        assert_relative_eq!(apdg.t_d, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn all_regimes_infeasible_is_an_error() {
        let spec = SmoothnessSpec::new(1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, false, false).unwrap();
        assert!(theoretical_complexity(&spec, SolverKind::Apdg).is_err());
    }

    #[test]
    fn bounds_are_monotone_in_the_constants() {
        let base = SmoothnessSpec::new(4.0, 1.0, 5.0, 2.0, 3.0, 1.0, 1.5, true, true).unwrap();
        let report = theoretical_complexity(&base, SolverKind::Apdg).unwrap();
        let worse_specs = [
            SmoothnessSpec::new(8.0, 1.0, 5.0, 2.0, 3.0, 1.0, 1.5, true, true).unwrap(),
            SmoothnessSpec::new(4.0, 0.5, 5.0, 2.0, 3.0, 1.0, 1.5, true, true).unwrap(),
            SmoothnessSpec::new(4.0, 1.0, 5.0, 2.0, 3.0, 0.5, 1.5, true, true).unwrap(),
        ];
        for worse in &worse_specs {
            for kind in [SolverKind::Apdg, SolverKind::Gdae] {
                let r0 = theoretical_complexity(&base, kind).unwrap();
                let r1 = theoretical_complexity(worse, kind).unwrap();
                for regime in Regime::ALL {
                    let (a, b) = (r0.value(regime), r1.value(regime));
                    if a.is_finite() && b.is_finite() {
                        assert!(b >= a - 1e-12, "regime {regime}: {b} < {a}");
                    }
                }
            }
            let _ = report;
        }
    }
}
