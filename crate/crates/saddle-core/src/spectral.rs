//! Spectral analysis of the coupling matrix.
//!
//! The coupling constants are tied to the extreme eigenvalues of the Gram
//! matrices `A A'` and `A' A`: the largest eigenvalue bounds `l_xy^2`, while
//! the smallest (or smallest positive, when the relevant range condition
//! holds) eigenvalue backs `mu_xy^2` / `mu_yx^2`. Everything here uses full
//! symmetric eigendecompositions; problems are desk scale and iterative
//! estimation is out of scope.

use nalgebra::SymmetricEigen;

use crate::error::{Result, SaddleError};
use crate::problem::{Matrix, Vector};

/// Relative cutoff separating "numerically zero" eigenvalues from positive
/// ones, measured against the largest eigenvalue.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;

/// Eigenvalue summary of the Gram matrices of a coupling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    /// Largest singular value of `A`.
    pub sigma_max: f64,
    /// Smallest eigenvalue of `A A'` exceeding the rank cutoff.
    pub lambda_min_plus_aat: f64,
    /// Smallest eigenvalue of `A' A` exceeding the rank cutoff.
    pub lambda_min_plus_ata: f64,
    /// Smallest eigenvalue of `A A'` (clamped at zero).
    pub lambda_min_aat: f64,
    /// Smallest eigenvalue of `A' A` (clamped at zero).
    pub lambda_min_ata: f64,
    /// Number of eigenvalues above the cutoff, i.e. the numerical rank of `A`.
    pub numerical_rank: usize,
    /// The relative cutoff used, against `lambda_max`.
    pub rank_tolerance: f64,
}

fn sorted_gram_eigenvalues(gram: &Matrix) -> Vec<f64> {
    let mut vals: Vec<f64> = SymmetricEigen::new(gram.clone())
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

/// Computes the eigenvalue summary of `A A'` and `A' A`.
///
/// Eigenvalues at or below `rank_tolerance * lambda_max` count as zero. An
/// all-zero matrix is rejected: a positive largest singular value is a
/// standing assumption.
pub fn analyze_coupling(a: &Matrix, rank_tolerance: f64) -> Result<SpectralReport> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(SaddleError::DimensionMismatch(
            "coupling matrix must be nonempty".into(),
        ));
    }
    if rank_tolerance <= 0.0 || rank_tolerance.is_nan() {
        return Err(SaddleError::InvalidSpec(
            "rank tolerance must be positive".into(),
        ));
    }
    let aat = a * a.transpose();
    let ata = a.transpose() * a;
    let ev_aat = sorted_gram_eigenvalues(&aat);
    let ev_ata = sorted_gram_eigenvalues(&ata);

    let lambda_max = ev_aat
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(ev_ata.last().copied().unwrap_or(0.0));
    if lambda_max <= 0.0 {
        return Err(SaddleError::ZeroCoupling);
    }
    let cutoff = rank_tolerance * lambda_max;

    let min_plus = |vals: &[f64]| {
        vals.iter()
            .copied()
            .find(|v| *v > cutoff)
            .unwrap_or(lambda_max)
    };
    // The nonzero spectra of the two Gram matrices coincide; count the rank on
    // the smaller one.
    let smaller = if ev_aat.len() <= ev_ata.len() {
        &ev_aat
    } else {
        &ev_ata
    };
    let numerical_rank = smaller.iter().filter(|v| **v > cutoff).count();

    Ok(SpectralReport {
        sigma_max: lambda_max.sqrt(),
        lambda_min_plus_aat: min_plus(&ev_aat),
        lambda_min_plus_ata: min_plus(&ev_ata),
        lambda_min_aat: ev_aat[0],
        lambda_min_ata: ev_ata[0],
        numerical_rank,
        rank_tolerance,
    })
}

/// Derives the coupling lower moduli `(mu_xy, mu_yx)` from a spectral report.
///
/// Each range flag selects between the smallest-positive and the plain
/// smallest eigenvalue of the corresponding Gram matrix. The flags are
/// declared by whoever built the problem: whether `grad g` maps into
/// `range A` (and `grad f` into `range A'`) for *all* inputs is a structural
/// property that cannot be decided by sampling oracle calls.
pub fn derive_mu_constants(
    report: &SpectralReport,
    range_g_in_range_a: bool,
    range_f_in_range_at: bool,
) -> (f64, f64) {
    let mu_xy_sq = if range_g_in_range_a {
        report.lambda_min_plus_aat
    } else {
        report.lambda_min_aat
    };
    let mu_yx_sq = if range_f_in_range_at {
        report.lambda_min_plus_ata
    } else {
        report.lambda_min_ata
    };
    (mu_xy_sq.sqrt(), mu_yx_sq.sqrt())
}

/// Which fundamental subspace to project onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeSide {
    /// `range A`, a subspace of the dual (y) space.
    RangeA,
    /// `range A'`, a subspace of the primal (x) space.
    RangeATranspose,
}

/// Orthogonal projection of `v` onto `range A` or `range A'`, via the thin SVD.
///
/// Singular values at or below `DEFAULT_RANK_TOLERANCE * sigma_max` are
/// treated as zero.
pub fn project_onto_range(a: &Matrix, v: &Vector, side: RangeSide) -> Result<Vector> {
    let expected = match side {
        RangeSide::RangeA => a.nrows(),
        RangeSide::RangeATranspose => a.ncols(),
    };
    if v.len() != expected {
        return Err(SaddleError::DimensionMismatch(format!(
            "vector has length {}, expected {}",
            v.len(),
            expected
        )));
    }
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    if sigma_max <= 0.0 {
        // Zero matrix: both ranges are {0}.
        return Ok(Vector::zeros(expected));
    }
    let cutoff = DEFAULT_RANK_TOLERANCE * sigma_max;
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");

    let mut out = Vector::zeros(expected);
    for (i, sv) in svd.singular_values.iter().enumerate() {
        if *sv <= cutoff {
            continue;
        }
        match side {
            RangeSide::RangeA => {
                let col = u.column(i);
                out += col * col.dot(v);
            }
            RangeSide::RangeATranspose => {
                let row = v_t.row(i).transpose();
                out += &row * row.dot(v);
            }
        }
    }
    Ok(out)
}
