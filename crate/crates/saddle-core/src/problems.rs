//! Synthetic instance generators with known smoothness constants and
//! computable reference solutions.
//!
//! Every generator produces a [`QuadraticSaddleInstance`]: quadratic `f` and
//! `g` with controlled extreme curvature, a coupling matrix with controlled
//! extreme singular values, range flags that are correct by construction, and
//! a reference saddle point obtained from the linear optimality system
//!
//! ```text
//! [ B   A' ] [x*]   [-a]
//! [ A  -C  ] [y*] = [ b]
//! ```
//!
//! All randomness flows through one seeded generator per call, so instances
//! are bit-reproducible. Closed-form convex conjugates of the quadratic
//! pieces are kept alongside the instance; they power primal/dual objective
//! evaluations and duality-gap diagnostics.

use std::sync::Arc;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SaddleError};
use crate::problem::{
    BilinearSaddleProblem, GeneralSaddleProblem, IteratePair, Matrix, SmoothnessSpec, Vector,
};
use crate::spectral::{self, RangeSide, DEFAULT_RANK_TOLERANCE};

/// Closed-form conjugate of a convex quadratic `h(z) = z'Qz/2 + q'z`,
/// evaluated through the eigendecomposition of `Q`.
#[derive(Debug, Clone)]
struct QuadConjugate {
    eigvecs: Matrix,
    eigvals: Vector,
    lambda_max: f64,
    lin: Vector,
}

impl QuadConjugate {
    fn new(q_mat: &Matrix, lin: &Vector) -> Self {
        let eig = SymmetricEigen::new(q_mat.clone());
        let eigvals = eig.eigenvalues.map(|v| v.max(0.0));
        let lambda_max = eigvals.max();
        Self {
            eigvecs: eig.eigenvectors,
            eigvals,
            lambda_max,
            lin: lin.clone(),
        }
    }

    /// `h*(w) = sup_z <w, z> - h(z)`; `+inf` outside `q + range Q`.
    fn value(&self, w: &Vector) -> f64 {
        let shifted = w - &self.lin;
        let coords = self.eigvecs.transpose() * &shifted;
        let zero_tol = 1e-7 * (1.0 + shifted.norm());
        let rank_cut = DEFAULT_RANK_TOLERANCE * self.lambda_max;
        let mut out = 0.0;
        for (i, lam) in self.eigvals.iter().enumerate() {
            if *lam > rank_cut {
                out += 0.5 * coords[i] * coords[i] / lam;
            } else if coords[i].abs() > zero_tol {
                return f64::INFINITY;
            }
        }
        out
    }
}

/// A quadratic saddle-point instance
/// `min_x max_y x'Bx/2 + a'x + y'Ax - y'Cy/2 - b'y`
/// with its derived smoothness constants and reference solution.
#[derive(Debug, Clone)]
pub struct QuadraticSaddleInstance {
    hess_f: Matrix,
    lin_f: Vector,
    hess_g: Matrix,
    lin_g: Vector,
    coupling: Matrix,
    spec: SmoothnessSpec,
    reference: IteratePair,
    conj_f: QuadConjugate,
    conj_g: QuadConjugate,
}

fn symmetric_extremes(m: &Matrix, name: &str) -> Result<(f64, f64)> {
    let asym = (m - m.transpose()).norm();
    if asym > 1e-10 * (1.0 + m.norm()) {
        return Err(SaddleError::Generation(format!("{name} is not symmetric")));
    }
    if m.ncols() == 0 {
        return Err(SaddleError::Generation(format!("{name} is empty")));
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if min < -1e-9 * (1.0 + max.abs()) {
        return Err(SaddleError::Generation(format!(
            "{name} is not positive semidefinite (lambda_min = {min})"
        )));
    }
    Ok((min.max(0.0), max.max(0.0)))
}

fn range_residual(a: &Matrix, m: &Matrix, lin: &Vector, side: RangeSide) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for j in 0..m.ncols() {
        let col = Vector::from(m.column(j));
        if col.norm() == 0.0 {
            continue;
        }
        let proj = spectral::project_onto_range(a, &col, side)?;
        worst = worst.max((&col - proj).norm() / col.norm());
    }
    if lin.norm() > 0.0 {
        let proj = spectral::project_onto_range(a, lin, side)?;
        worst = worst.max((lin - proj).norm() / lin.norm());
    }
    Ok(worst)
}

impl QuadraticSaddleInstance {
    /// Builds an instance from its matrices, deriving the smoothness
    /// constants from the spectra and the reference from the optimality
    /// system.
    ///
    /// The range flags are verified against the data: a flag may only be set
    /// when the corresponding gradient provably maps into the claimed range
    /// (for quadratics this reduces to column-space inclusions). An
    /// inconsistent optimality system (e.g. a rank-deficient coupling with a
    /// linear term outside its row space) is rejected, since no saddle point
    /// exists.
    pub fn new(
        hess_f: Matrix,
        lin_f: Vector,
        hess_g: Matrix,
        lin_g: Vector,
        coupling: Matrix,
        range_g_in_range_a: bool,
        range_f_in_range_at: bool,
    ) -> Result<Self> {
        let dim_x = coupling.ncols();
        let dim_y = coupling.nrows();
        if hess_f.nrows() != dim_x
            || hess_f.ncols() != dim_x
            || hess_g.nrows() != dim_y
            || hess_g.ncols() != dim_y
            || lin_f.len() != dim_x
            || lin_g.len() != dim_y
        {
            return Err(SaddleError::DimensionMismatch(
                "instance blocks disagree with the coupling matrix shape".into(),
            ));
        }
        let (mu_x, l_x) = symmetric_extremes(&hess_f, "hess_f")?;
        let (mu_y, l_y) = symmetric_extremes(&hess_g, "hess_g")?;
        let report = spectral::analyze_coupling(&coupling, DEFAULT_RANK_TOLERANCE)?;

        if range_g_in_range_a {
            let r = range_residual(&coupling, &hess_g, &lin_g, RangeSide::RangeA)?;
            if r > 1e-8 {
                return Err(SaddleError::Generation(format!(
                    "range_g_in_range_a declared but grad g leaves range A (residual {r:.3e})"
                )));
            }
        }
        if range_f_in_range_at {
            let r = range_residual(&coupling, &hess_f, &lin_f, RangeSide::RangeATranspose)?;
            if r > 1e-8 {
                return Err(SaddleError::Generation(format!(
                    "range_f_in_range_at declared but grad f leaves range A' (residual {r:.3e})"
                )));
            }
        }
        let (mu_xy, mu_yx) =
            spectral::derive_mu_constants(&report, range_g_in_range_a, range_f_in_range_at);
        let spec = SmoothnessSpec::new(
            l_x,
            mu_x,
            l_y,
            mu_y,
            report.sigma_max,
            mu_xy,
            mu_yx,
            range_g_in_range_a,
            range_f_in_range_at,
        )?;

        // Optimality system; the minimum-norm solve keeps the dual reference
        // inside range A when the system is degenerate.
        let n = dim_x + dim_y;
        let mut kkt = Matrix::zeros(n, n);
        kkt.view_mut((0, 0), (dim_x, dim_x)).copy_from(&hess_f);
        kkt.view_mut((0, dim_x), (dim_x, dim_y))
            .copy_from(&coupling.transpose());
        kkt.view_mut((dim_x, 0), (dim_y, dim_x)).copy_from(&coupling);
        kkt.view_mut((dim_x, dim_x), (dim_y, dim_y))
            .copy_from(&(-&hess_g));
        let mut rhs = Vector::zeros(n);
        rhs.rows_mut(0, dim_x).copy_from(&(-&lin_f));
        rhs.rows_mut(dim_x, dim_y).copy_from(&lin_g);

        let svd = kkt.clone().svd(true, true);
        let eps = DEFAULT_RANK_TOLERANCE * svd.singular_values.max().max(1.0);
        let sol = svd
            .solve(&rhs, eps)
            .map_err(|e| SaddleError::Generation(format!("optimality solve failed: {e}")))?;
        let residual = (&kkt * &sol - &rhs).norm();
        let scale = 1.0 + kkt.norm() * (1.0 + sol.norm()) + rhs.norm();
        if residual > 1e-10 * scale {
            return Err(SaddleError::Generation(format!(
                "optimality system is inconsistent (residual {residual:.3e}); \
                 the instance has no saddle point"
            )));
        }
        let reference = IteratePair::new(
            Vector::from(sol.rows(0, dim_x)),
            Vector::from(sol.rows(dim_x, dim_y)),
        );

        let conj_f = QuadConjugate::new(&hess_f, &lin_f);
        let conj_g = QuadConjugate::new(&hess_g, &lin_g);
        Ok(Self {
            hess_f,
            lin_f,
            hess_g,
            lin_g,
            coupling,
            spec,
            reference,
            conj_f,
            conj_g,
        })
    }

    pub fn dim_x(&self) -> usize {
        self.coupling.ncols()
    }

    pub fn dim_y(&self) -> usize {
        self.coupling.nrows()
    }

    pub fn spec(&self) -> &SmoothnessSpec {
        &self.spec
    }

    pub fn reference(&self) -> &IteratePair {
        &self.reference
    }

    pub fn coupling(&self) -> &Matrix {
        &self.coupling
    }

    pub fn hess_f(&self) -> &Matrix {
        &self.hess_f
    }

    pub fn hess_g(&self) -> &Matrix {
        &self.hess_g
    }

    pub fn value_f(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.hess_f * x)) + self.lin_f.dot(x)
    }

    pub fn value_g(&self, y: &Vector) -> f64 {
        0.5 * y.dot(&(&self.hess_g * y)) + self.lin_g.dot(y)
    }

    /// Primal objective `P(x) = f(x) + g*(Ax)`; `+inf` outside the domain of
    /// the conjugate.
    pub fn primal_value(&self, x: &Vector) -> f64 {
        self.value_f(x) + self.conj_g.value(&(&self.coupling * x))
    }

    /// Dual objective `D(y) = -g(y) - f*(-A'y)`; `-inf` outside the domain.
    pub fn dual_value(&self, y: &Vector) -> f64 {
        let fstar = self.conj_f.value(&(-(self.coupling.transpose() * y)));
        if fstar == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        -self.value_g(y) - fstar
    }

    /// Oracle view of the instance, with value oracles attached.
    pub fn problem(&self) -> BilinearSaddleProblem {
        let bf = Arc::new(self.hess_f.clone());
        let af = Arc::new(self.lin_f.clone());
        let cg = Arc::new(self.hess_g.clone());
        let bg = Arc::new(self.lin_g.clone());
        let grad_f = {
            let (bf, af) = (Arc::clone(&bf), Arc::clone(&af));
            Arc::new(move |x: &Vector| &*bf * x + &*af)
        };
        let grad_g = {
            let (cg, bg) = (Arc::clone(&cg), Arc::clone(&bg));
            Arc::new(move |y: &Vector| &*cg * y + &*bg)
        };
        let value_f = Arc::new(move |x: &Vector| 0.5 * x.dot(&(&*bf * x)) + af.dot(x));
        let value_g = Arc::new(move |y: &Vector| 0.5 * y.dot(&(&*cg * y)) + bg.dot(y));
        BilinearSaddleProblem::new(
            grad_f,
            grad_g,
            Some(value_f),
            Some(value_g),
            self.coupling.clone(),
            self.spec.clone(),
        )
        .expect("instance dimensions are consistent by construction")
    }

    /// General-problem view (partial gradients of the full objective).
    pub fn general_problem(&self) -> GeneralSaddleProblem {
        self.problem().to_general()
    }

    /// Plain-data form for serialization.
    pub fn to_data(&self) -> QuadraticInstanceData {
        QuadraticInstanceData {
            dim_x: self.dim_x(),
            dim_y: self.dim_y(),
            hess_f: self.hess_f.transpose().as_slice().to_vec(),
            lin_f: self.lin_f.as_slice().to_vec(),
            hess_g: self.hess_g.transpose().as_slice().to_vec(),
            lin_g: self.lin_g.as_slice().to_vec(),
            coupling: self.coupling.transpose().as_slice().to_vec(),
            range_g_in_range_a: self.spec.range_g_in_range_a,
            range_f_in_range_at: self.spec.range_f_in_range_at,
        }
    }

    /// Rebuilds an instance from its plain-data form, re-deriving the
    /// constants and the reference.
    pub fn from_data(data: &QuadraticInstanceData) -> Result<Self> {
        let (dx, dy) = (data.dim_x, data.dim_y);
        if data.hess_f.len() != dx * dx
            || data.hess_g.len() != dy * dy
            || data.coupling.len() != dy * dx
            || data.lin_f.len() != dx
            || data.lin_g.len() != dy
        {
            return Err(SaddleError::DimensionMismatch(
                "serialized instance has inconsistent lengths".into(),
            ));
        }
        Self::new(
            Matrix::from_row_slice(dx, dx, &data.hess_f),
            Vector::from_column_slice(&data.lin_f),
            Matrix::from_row_slice(dy, dy, &data.hess_g),
            Vector::from_column_slice(&data.lin_g),
            Matrix::from_row_slice(dy, dx, &data.coupling),
            data.range_g_in_range_a,
            data.range_f_in_range_at,
        )
    }
}

/// Serializable plain-data form of a quadratic instance. Matrices are stored
/// row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticInstanceData {
    pub dim_x: usize,
    pub dim_y: usize,
    pub hess_f: Vec<f64>,
    pub lin_f: Vec<f64>,
    pub hess_g: Vec<f64>,
    pub lin_g: Vec<f64>,
    pub coupling: Vec<f64>,
    pub range_g_in_range_a: bool,
    pub range_f_in_range_at: bool,
}

fn standard_normal_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let gauss = Matrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = gauss.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Fix column signs so the factorization is unique.
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Symmetric PSD matrix with eigenvalues spread linearly over `[mu, l]`,
/// conjugated by a random orthogonal matrix.
fn psd_with_extremes(dim: usize, mu: f64, l: f64, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    if mu > l || mu < 0.0 {
        return Err(SaddleError::Generation(format!(
            "infeasible curvature range [{mu}, {l}]"
        )));
    }
    if l == 0.0 {
        return Ok(Matrix::zeros(dim, dim));
    }
    if dim == 1 {
        if (l - mu).abs() > 1e-12 * l.max(1.0) {
            return Err(SaddleError::Generation(format!(
                "a 1x1 block cannot realize distinct extremes [{mu}, {l}]"
            )));
        }
        return Ok(Matrix::from_element(1, 1, l));
    }
    let q = random_orthogonal(dim, rng);
    let d = Matrix::from_diagonal(&Vector::from_vec(linspace(mu, l, dim)));
    Ok(&q * d * q.transpose())
}

/// Rectangular matrix with the given singular values (padded by zeros),
/// conjugated by random orthogonal factors on both sides.
fn matrix_with_singular_values(
    rows: usize,
    cols: usize,
    svals: &[f64],
    rng: &mut ChaCha8Rng,
) -> Matrix {
    let u = random_orthogonal(rows, rng);
    let v = random_orthogonal(cols, rng);
    let mut sigma = Matrix::zeros(rows, cols);
    for (i, s) in svals.iter().enumerate().take(rows.min(cols)) {
        sigma[(i, i)] = *s;
    }
    u * sigma * v.transpose()
}

/// Quadratic instance with prescribed curvature and coupling extremes.
///
/// `B` and `C` realize `[mu_x, l_x]` and `[mu_y, l_y]` exactly; the coupling
/// matrix realizes singular values spread over `[sigma_min, l_xy]`, where
/// `sigma_min` is taken from the target's coupling lower moduli. For a square
/// coupling the two moduli must agree (a square matrix has a single smallest
/// singular value); for rectangular couplings the modulus of the short side
/// applies and the long side's is realized as zero. Range flags are set to
/// the trivially-true cases (full row / column rank).
pub fn make_quadratic_saddle(
    dim_x: usize,
    dim_y: usize,
    target: &SmoothnessSpec,
    rng_seed: u64,
) -> Result<QuadraticSaddleInstance> {
    if dim_x == 0 || dim_y == 0 {
        return Err(SaddleError::Generation("dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let hess_f = psd_with_extremes(dim_x, target.mu_x, target.l_x, &mut rng)?;
    let hess_g = psd_with_extremes(dim_y, target.mu_y, target.l_y, &mut rng)?;

    let r = dim_x.min(dim_y);
    let sigma_min = if dim_x == dim_y {
        if (target.mu_xy - target.mu_yx).abs() > 1e-12 * target.l_xy {
            return Err(SaddleError::Generation(format!(
                "square coupling cannot realize mu_xy = {} != mu_yx = {}",
                target.mu_xy, target.mu_yx
            )));
        }
        target.mu_xy
    } else if dim_y < dim_x {
        target.mu_xy
    } else {
        target.mu_yx
    };
    if sigma_min > target.l_xy {
        return Err(SaddleError::Generation(format!(
            "infeasible coupling range [{sigma_min}, {}]",
            target.l_xy
        )));
    }
    if r == 1 && (target.l_xy - sigma_min).abs() > 1e-12 * target.l_xy {
        return Err(SaddleError::Generation(
            "a rank-1 coupling cannot realize distinct singular extremes".into(),
        ));
    }
    let svals = linspace(sigma_min, target.l_xy, r);
    let coupling = matrix_with_singular_values(dim_y, dim_x, &svals, &mut rng);

    let lin_f = standard_normal_vector(dim_x, &mut rng);
    let lin_g = standard_normal_vector(dim_y, &mut rng);

    let rank = svals.iter().filter(|s| **s > 0.0).count();
    let range_g = rank == dim_y;
    let range_f = rank == dim_x;
    QuadraticSaddleInstance::new(hess_f, lin_f, hess_g, lin_g, coupling, range_g, range_f)
}

/// Purely bilinear instance `min_x max_y a'x + y'Ax - b'y` with a square
/// full-rank coupling (singular values in [1, 2]).
///
/// Both curvatures vanish; the coupling moduli carry the whole rate. The
/// reference solves `Ax* = b`, `A'y* = -a`.
pub fn make_bilinear(d: usize, rng_seed: u64) -> Result<QuadraticSaddleInstance> {
    make_bilinear_with_rank(d, d, rng_seed)
}

/// Bilinear instance with a deliberately rank-deficient square coupling. The
/// linear terms are projected onto the row/column spaces so a saddle point
/// exists; the range flags then hold by construction.
pub fn make_bilinear_with_rank(
    d: usize,
    rank: usize,
    rng_seed: u64,
) -> Result<QuadraticSaddleInstance> {
    if d == 0 || rank == 0 || rank > d {
        return Err(SaddleError::Generation(format!(
            "invalid bilinear shape d = {d}, rank = {rank}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut svals = linspace(1.0, 2.0, rank);
    svals.resize(d, 0.0);
    let coupling = matrix_with_singular_values(d, d, &svals, &mut rng);
    let raw_a = standard_normal_vector(d, &mut rng);
    let raw_b = standard_normal_vector(d, &mut rng);
    let lin_f = spectral::project_onto_range(&coupling, &raw_a, RangeSide::RangeATranspose)?;
    let lin_g = spectral::project_onto_range(&coupling, &raw_b, RangeSide::RangeA)?;
    QuadraticSaddleInstance::new(
        Matrix::zeros(d, d),
        lin_f,
        Matrix::zeros(d, d),
        lin_g,
        coupling,
        true,
        true,
    )
}

/// Affinely constrained minimization `min {f(x) : Ax = c}` in saddle form:
/// `g(y) = c'y` is linear, `f` is a strongly convex quadratic with curvature
/// in `[mu_x, l_x]`, and `c` lies in `range A` by construction.
pub fn make_affine_constrained(
    dim_x: usize,
    n_constraints: usize,
    mu_x: f64,
    l_x: f64,
    rng_seed: u64,
) -> Result<QuadraticSaddleInstance> {
    let rank = dim_x.min(n_constraints);
    make_affine_constrained_with_rank(dim_x, n_constraints, rank, mu_x, l_x, rng_seed)
}

/// Affinely constrained instance with an explicitly rank-deficient constraint
/// matrix (redundant constraints). Exercises the smallest-*positive*
/// eigenvalue branch of the coupling analysis.
pub fn make_affine_constrained_with_rank(
    dim_x: usize,
    n_constraints: usize,
    rank: usize,
    mu_x: f64,
    l_x: f64,
    rng_seed: u64,
) -> Result<QuadraticSaddleInstance> {
    if rank == 0 || rank > dim_x.min(n_constraints) {
        return Err(SaddleError::Generation(format!(
            "invalid constraint rank {rank} for {n_constraints} x {dim_x}"
        )));
    }
    if mu_x <= 0.0 {
        return Err(SaddleError::Generation(
            "affinely constrained instances need strongly convex f".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let hess_f = psd_with_extremes(dim_x, mu_x, l_x, &mut rng)?;
    let lin_f = standard_normal_vector(dim_x, &mut rng);
    let mut svals = linspace(1.0, 2.0, rank);
    svals.resize(dim_x.min(n_constraints), 0.0);
    let coupling = matrix_with_singular_values(n_constraints, dim_x, &svals, &mut rng);
    // c = A w keeps the constraint consistent.
    let w = standard_normal_vector(dim_x, &mut rng);
    let lin_g = &coupling * w;
    let range_f = rank == dim_x;
    QuadraticSaddleInstance::new(
        hess_f,
        lin_f,
        Matrix::zeros(n_constraints, n_constraints),
        lin_g,
        coupling,
        true,
        range_f,
    )
}

/// Policy-evaluation instance: the saddle reformulation of the mean squared
/// projected Bellman error `min_x |Bx - b|^2_{C^{-1}}` over a synthetic
/// feature trajectory.
///
/// The objective `min_x max_y -2y'Bx - y'Cy + 2b'y` maps onto the standard
/// form with `f = 0`, coupling `-2B` and `g(y) = y'Cy - 2b'y`, so `g` is
/// `2 lambda_min(C)`-strongly convex and no matrix inversion is needed.
/// Since `f = 0`, its gradient trivially satisfies the row-space condition;
/// positive `mu_yx` additionally needs `B` to have full column rank, which
/// the generator enforces (regenerating up to 10 times).
pub fn make_mspbe_instance(
    n_states: usize,
    d_features: usize,
    gamma: f64,
    rng_seed: u64,
) -> Result<QuadraticSaddleInstance> {
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(SaddleError::Generation(format!(
            "discount factor must lie in (0, 1), got {gamma}"
        )));
    }
    if n_states < d_features {
        return Err(SaddleError::Generation(
            "need at least as many samples as features for positive definite C".into(),
        ));
    }
    for attempt in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed.wrapping_add(attempt));
        // Feature trajectory phi_1 .. phi_{n+1}; sample t pairs (phi_t, phi_{t+1}).
        let feats: Vec<Vector> = (0..=n_states)
            .map(|_| standard_normal_vector(d_features, &mut rng))
            .collect();
        let rewards: Vec<f64> = (0..n_states)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut c = Matrix::zeros(d_features, d_features);
        let mut cross = Matrix::zeros(d_features, d_features);
        let mut b = Vector::zeros(d_features);
        for t in 0..n_states {
            c += &feats[t] * feats[t].transpose();
            cross += &feats[t] * feats[t + 1].transpose();
            b += rewards[t] * &feats[t];
        }
        let b_mat = &c - gamma * cross;

        let c_eig = SymmetricEigen::new(c.clone());
        let c_ok = c_eig.eigenvalues.min() > 1e-8 * c_eig.eigenvalues.max().max(1.0);
        let b_svd = b_mat.clone().svd(false, false);
        let b_ok = b_svd.singular_values.min() > 1e-8 * b_svd.singular_values.max().max(1.0);
        if !c_ok || !b_ok {
            continue;
        }

        let instance = QuadraticSaddleInstance::new(
            Matrix::zeros(d_features, d_features),
            Vector::zeros(d_features),
            2.0 * &c,
            -2.0 * &b,
            -2.0 * &b_mat,
            false,
            true,
        )?;
        // Cross-check the reference against the direct weighted least-squares
        // solution of the original objective.
        let c_chol = c
            .clone()
            .cholesky()
            .ok_or_else(|| SaddleError::Generation("C lost definiteness".into()))?;
        let cinv_b_mat = c_chol.solve(&b_mat);
        let cinv_b = c_chol.solve(&b);
        let normal = b_mat.transpose() * cinv_b_mat;
        let rhs = b_mat.transpose() * cinv_b;
        let direct = normal
            .lu()
            .solve(&rhs)
            .ok_or_else(|| SaddleError::Generation("normal equations are singular".into()))?;
        let dev = (&direct - &instance.reference().x).norm();
        if dev > 1e-6 * (1.0 + direct.norm()) {
            return Err(SaddleError::Generation(format!(
                "saddle reference disagrees with the direct solve by {dev:.3e}"
            )));
        }
        return Ok(instance);
    }
    Err(SaddleError::Generation(
        "could not generate a well-posed policy-evaluation instance in 10 attempts".into(),
    ))
}

/// Ridge-regression instance in saddle form: squared loss conjugate
/// `g(y) = |y|^2/2 + t'y` against a random data matrix, with
/// `f(x) = reg |x|^2 / 2`.
///
/// The reference equals the ridge closed form
/// `x* = (A'A + reg I)^{-1} A't`, `y* = Ax* - t`.
pub fn make_ridge_erm(
    n_samples: usize,
    d: usize,
    reg: f64,
    rng_seed: u64,
) -> Result<QuadraticSaddleInstance> {
    if reg <= 0.0 {
        return Err(SaddleError::Generation("regularizer must be positive".into()));
    }
    if n_samples == 0 || d == 0 {
        return Err(SaddleError::Generation("dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let data = Matrix::from_fn(n_samples, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let targets = standard_normal_vector(n_samples, &mut rng);

    let report = spectral::analyze_coupling(&data, DEFAULT_RANK_TOLERANCE)?;
    let range_g = report.numerical_rank == n_samples;
    let range_f = report.numerical_rank == d;
    let instance = QuadraticSaddleInstance::new(
        reg * Matrix::identity(d, d),
        Vector::zeros(d),
        Matrix::identity(n_samples, n_samples),
        targets.clone(),
        data.clone(),
        range_g,
        range_f,
    )?;
    let gram = data.transpose() * &data + reg * Matrix::identity(d, d);
    let closed_form = gram
        .cholesky()
        .ok_or_else(|| SaddleError::Generation("ridge system lost definiteness".into()))?
        .solve(&(data.transpose() * &targets));
    let dev = (&closed_form - &instance.reference().x).norm();
    if dev > 1e-8 * (1.0 + closed_form.norm()) {
        return Err(SaddleError::Generation(format!(
            "saddle reference disagrees with the ridge closed form by {dev:.3e}"
        )));
    }
    Ok(instance)
}

/// Communication graph shapes for the consensus generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Path,
    Ring,
    Complete,
}

/// Graph Laplacian of the named topology on `n` nodes.
pub fn graph_laplacian(n: usize, topology: Topology) -> Result<Matrix> {
    if n < 2 {
        return Err(SaddleError::Generation(
            "consensus needs at least two nodes".into(),
        ));
    }
    let mut w = Matrix::zeros(n, n);
    let add_edge = |i: usize, j: usize, w: &mut Matrix| {
        w[(i, i)] += 1.0;
        w[(j, j)] += 1.0;
        w[(i, j)] -= 1.0;
        w[(j, i)] -= 1.0;
    };
    match topology {
        Topology::Path => {
            for i in 0..n - 1 {
                add_edge(i, i + 1, &mut w);
            }
        }
        Topology::Ring => {
            if n < 3 {
                return Err(SaddleError::Generation("a ring needs at least 3 nodes".into()));
            }
            for i in 0..n {
                add_edge(i, (i + 1) % n, &mut w);
            }
        }
        Topology::Complete => {
            for i in 0..n {
                for j in i + 1..n {
                    add_edge(i, j, &mut w);
                }
            }
        }
    }
    Ok(w)
}

fn matrix_sqrt_psd(m: &Matrix) -> Matrix {
    let eig = SymmetricEigen::new(m.clone());
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// Consensus-constrained instance: stacked local strongly convex quadratics
/// under the constraint `sqrt(W) (x_1, ..., x_n)' = 0`, where `W` is the
/// graph Laplacian.
///
/// This is a synthetic matrix instance of the affinely constrained family;
/// no message passing is simulated. Local curvatures are spread over [1, 3].
/// The dual block `g` vanishes, so its gradient trivially stays in `range A`
/// and the coupling lower modulus is the square root of the algebraic
/// connectivity of the graph.
pub fn make_decentralized_consensus(
    n_nodes: usize,
    local_dim: usize,
    topology: Topology,
    rng_seed: u64,
) -> Result<QuadraticSaddleInstance> {
    if local_dim == 0 {
        return Err(SaddleError::Generation("local dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let w = graph_laplacian(n_nodes, topology)?;
    let coupling = matrix_sqrt_psd(&w).kronecker(&Matrix::identity(local_dim, local_dim));
    let d = n_nodes * local_dim;
    let mut hess_f = Matrix::zeros(d, d);
    for i in 0..n_nodes {
        let block = if local_dim == 1 {
            Matrix::from_element(1, 1, rng.gen_range(1.0..3.0))
        } else {
            psd_with_extremes(local_dim, 1.0, 3.0, &mut rng)?
        };
        hess_f
            .view_mut((i * local_dim, i * local_dim), (local_dim, local_dim))
            .copy_from(&block);
    }
    let lin_f = standard_normal_vector(d, &mut rng);
    QuadraticSaddleInstance::new(
        hess_f,
        lin_f,
        Matrix::zeros(d, d),
        Vector::zeros(d),
        coupling,
        true,
        false,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::optimality_residual;
    use approx::assert_relative_eq;

    fn residual_scale(inst: &QuadraticSaddleInstance) -> f64 {
        let s = inst.spec();
        (1.0 + s.l_x + s.l_y + s.l_xy) * (1.0 + inst.reference().norm())
    }

    #[test]
    fn scalar_identity_instance() {
        let target = SmoothnessSpec::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, true, true).unwrap();
        let inst = make_quadratic_saddle(1, 1, &target, 7).unwrap();
        assert_relative_eq!(inst.hess_f()[(0, 0)], 1.0, max_relative = 1e-12);
        assert_relative_eq!(inst.spec().l_xy, 1.0, max_relative = 1e-12);
        let r = optimality_residual(&inst.problem(), inst.reference()).unwrap();
        assert!(r <= 1e-10);
    }

    #[test]
    fn two_dim_diagonal_spectra() {
        let target = SmoothnessSpec::new(4.0, 1.0, 4.0, 1.0, 1.0, 1.0, 1.0, true, true).unwrap();
        let inst = make_quadratic_saddle(2, 2, &target, 11).unwrap();
        let s = inst.spec();
        assert_relative_eq!(s.l_x, 4.0, max_relative = 1e-9);
        assert_relative_eq!(s.mu_x, 1.0, max_relative = 1e-9);
        assert_relative_eq!(s.l_xy, 1.0, max_relative = 1e-9);
        assert_relative_eq!(s.mu_xy, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn generators_are_deterministic() {
        let target = SmoothnessSpec::new(5.0, 1.0, 3.0, 0.5, 2.0, 1.0, 1.0, true, true).unwrap();
        let a = make_quadratic_saddle(4, 4, &target, 99).unwrap();
        let b = make_quadratic_saddle(4, 4, &target, 99).unwrap();
        assert_eq!(a.coupling(), b.coupling());
        assert_eq!(a.reference().x, b.reference().x);
    }

    #[test]
    fn bilinear_scalar_reference_by_hand() {
        // A = [2], a = 2, b = 4 -> x* = 2, y* = -1.
        let inst = QuadraticSaddleInstance::new(
            Matrix::zeros(1, 1),
            Vector::from_column_slice(&[2.0]),
            Matrix::zeros(1, 1),
            Vector::from_column_slice(&[4.0]),
            Matrix::from_element(1, 1, 2.0),
            true,
            true,
        )
        .unwrap();
        assert_relative_eq!(inst.reference().x[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(inst.reference().y[0], -1.0, max_relative = 1e-12);
    }

    #[test]
    fn bilinear_spec_is_purely_coupled() {
        let inst = make_bilinear(5, 3).unwrap();
        let s = inst.spec();
        assert_eq!((s.l_x, s.mu_x, s.l_y, s.mu_y), (0.0, 0.0, 0.0, 0.0));
        assert_relative_eq!(s.mu_xy, 1.0, max_relative = 1e-9);
        assert_relative_eq!(s.mu_yx, 1.0, max_relative = 1e-9);
        assert_relative_eq!(s.l_xy, 2.0, max_relative = 1e-9);
        let r = optimality_residual(&inst.problem(), inst.reference()).unwrap();
        assert!(r <= 1e-8 * residual_scale(&inst));
    }

    #[test]
    fn zero_linear_terms_give_origin_reference() {
        let inst = QuadraticSaddleInstance::new(
            Matrix::zeros(2, 2),
            Vector::zeros(2),
            Matrix::zeros(2, 2),
            Vector::zeros(2),
            Matrix::identity(2, 2),
            true,
            true,
        )
        .unwrap();
        assert_eq!(inst.reference().x, Vector::zeros(2));
        assert_eq!(inst.reference().y, Vector::zeros(2));
    }

    #[test]
    fn rank_deficient_bilinear_with_consistent_terms_is_accepted() {
        let inst = make_bilinear_with_rank(4, 2, 17).unwrap();
        let s = inst.spec();
        assert!(s.mu_xy > 0.9 && s.mu_xy < 1.1);
        let r = optimality_residual(&inst.problem(), inst.reference()).unwrap();
        assert!(r <= 1e-8 * residual_scale(&inst));
    }

    #[test]
    fn rank_deficient_bilinear_with_leaking_terms_is_rejected() {
        // Build the same rank-deficient coupling but keep a raw (unprojected)
        // linear term: the claimed row-space condition fails, and without the
        // flag the optimality system is inconsistent.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut svals = linspace(1.0, 2.0, 2);
        svals.resize(4, 0.0);
        let coupling = matrix_with_singular_values(4, 4, &svals, &mut rng);
        let raw = Vector::from_column_slice(&[1.0, -2.0, 0.5, 3.0]);
        let in_range = spectral::project_onto_range(&coupling, &raw, RangeSide::RangeATranspose)
            .unwrap();
        let leaking = 2.0 * &raw - &in_range;

        let flagged = QuadraticSaddleInstance::new(
            Matrix::zeros(4, 4),
            leaking.clone(),
            Matrix::zeros(4, 4),
            Vector::zeros(4),
            coupling.clone(),
            true,
            true,
        );
        assert!(flagged.is_err());

        let unflagged = QuadraticSaddleInstance::new(
            Matrix::zeros(4, 4),
            leaking,
            Matrix::zeros(4, 4),
            Vector::zeros(4),
            coupling,
            true,
            false,
        );
        assert!(unflagged.is_err());
    }

    #[test]
    fn affine_constrained_hand_example() {
        // min |x|^2/2 s.t. x1 + x2 = 2 -> x* = (1, 1), y* = -1.
        let inst = QuadraticSaddleInstance::new(
            Matrix::identity(2, 2),
            Vector::zeros(2),
            Matrix::zeros(1, 1),
            Vector::from_column_slice(&[2.0]),
            Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            true,
            false,
        )
        .unwrap();
        assert_relative_eq!(inst.reference().x[0], 1.0, max_relative = 1e-10);
        assert_relative_eq!(inst.reference().x[1], 1.0, max_relative = 1e-10);
        assert_relative_eq!(inst.reference().y[0], -1.0, max_relative = 1e-10);
    }

    #[test]
    fn affine_generator_regime_constants() {
        let inst = make_affine_constrained(6, 3, 1.0, 10.0, 21).unwrap();
        let s = inst.spec();
        assert!(s.mu_x > 0.0);
        assert!(s.mu_xy > 0.0);
        assert_eq!((s.l_y, s.mu_y), (0.0, 0.0));
        let r = optimality_residual(&inst.problem(), inst.reference()).unwrap();
        assert!(r <= 1e-8 * residual_scale(&inst));
    }

    #[test]
    fn redundant_constraints_use_the_positive_spectrum() {
        let inst = make_affine_constrained_with_rank(4, 6, 3, 1.0, 5.0, 23).unwrap();
        let s = inst.spec();
        // lambda_min(AA') = 0 but the declared flag licenses lambda_min^+.
        assert!(s.mu_xy >= 0.9);
        assert!(s.range_g_in_range_a);
    }

    #[test]
    fn mspbe_scalar_example() {
        // One state, feature 1, reward 1, gamma = 0.5, next feature 1:
        // C = 1, b = 1, B = 0.5 -> x* = 2, y* = 0.
        let inst = QuadraticSaddleInstance::new(
            Matrix::zeros(1, 1),
            Vector::zeros(1),
            Matrix::from_element(1, 1, 2.0),
            Vector::from_column_slice(&[-2.0]),
            Matrix::from_element(1, 1, -1.0),
            false,
            true,
        )
        .unwrap();
        assert_relative_eq!(inst.reference().x[0], 2.0, max_relative = 1e-10);
        assert!(inst.reference().y[0].abs() < 1e-10);

        // Zero rewards zero out the linear term and the solution.
        let zero_rewards = QuadraticSaddleInstance::new(
            Matrix::zeros(1, 1),
            Vector::zeros(1),
            Matrix::from_element(1, 1, 2.0),
            Vector::zeros(1),
            Matrix::from_element(1, 1, -1.0),
            false,
            true,
        )
        .unwrap();
        assert_eq!(zero_rewards.reference().x[0], 0.0);
        assert_eq!(zero_rewards.reference().y[0], 0.0);
    }

    #[test]
    fn mspbe_generator_shape_and_zero_rewards() {
        let inst = make_mspbe_instance(30, 4, 0.9, 5).unwrap();
        let s = inst.spec();
        assert_eq!((s.l_x, s.mu_x), (0.0, 0.0));
        assert!(s.mu_y > 0.0);
        assert!(s.mu_yx > 0.0);
        assert!(s.range_f_in_range_at);
        let r = optimality_residual(&inst.problem(), inst.reference()).unwrap();
        assert!(r <= 1e-8 * residual_scale(&inst));
    }

    #[test]
    fn ridge_scalar_example() {
        let inst = QuadraticSaddleInstance::new(
            Matrix::identity(1, 1),
            Vector::zeros(1),
            Matrix::identity(1, 1),
            Vector::from_column_slice(&[1.0]),
            Matrix::identity(1, 1),
            true,
            true,
        )
        .unwrap();
        assert_relative_eq!(inst.reference().x[0], 0.5, max_relative = 1e-12);
        assert_relative_eq!(inst.reference().y[0], -0.5, max_relative = 1e-12);
    }

    #[test]
    fn ridge_generator_constants() {
        let inst = make_ridge_erm(5, 3, 0.7, 31).unwrap();
        let s = inst.spec();
        assert_relative_eq!(s.mu_x, 0.7, max_relative = 1e-9);
        assert_relative_eq!(s.l_x, 0.7, max_relative = 1e-9);
        assert_relative_eq!(s.mu_y, 1.0, max_relative = 1e-9);
        assert_relative_eq!(s.l_y, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn consensus_two_node_path_connectivity() {
        let inst = make_decentralized_consensus(2, 1, Topology::Path, 41).unwrap();
        // Path Laplacian eigenvalues {0, 2}: coupling modulus sqrt(2).
        assert_relative_eq!(inst.spec().mu_xy, 2.0_f64.sqrt(), max_relative = 1e-9);
        let r = optimality_residual(&inst.problem(), inst.reference()).unwrap();
        assert!(r <= 1e-8 * residual_scale(&inst));
    }

    #[test]
    fn complete_graph_connectivity_is_n() {
        let w = graph_laplacian(3, Topology::Complete).unwrap();
        let report = spectral::analyze_coupling(&w, DEFAULT_RANK_TOLERANCE).unwrap();
        assert_relative_eq!(report.lambda_min_plus_aat, 9.0, max_relative = 1e-9);
        // Eigenvalues of K_3's Laplacian are {0, 3, 3}; the Gram matrix of W
        // squares them.
    }

    #[test]
    fn identical_local_functions_meet_at_the_common_minimizer() {
        let block = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let lin = Vector::from_column_slice(&[1.0, -0.5]);
        let n = 3;
        let d = n * 2;
        let mut hess_f = Matrix::zeros(d, d);
        let mut lin_f = Vector::zeros(d);
        for i in 0..n {
            hess_f.view_mut((2 * i, 2 * i), (2, 2)).copy_from(&block);
            lin_f.rows_mut(2 * i, 2).copy_from(&lin);
        }
        let w = graph_laplacian(n, Topology::Ring).unwrap();
        let coupling = matrix_sqrt_psd(&w).kronecker(&Matrix::identity(2, 2));
        let inst = QuadraticSaddleInstance::new(
            hess_f,
            lin_f,
            Matrix::zeros(d, d),
            Vector::zeros(d),
            coupling,
            true,
            false,
        )
        .unwrap();
        let common = -block.lu().solve(&lin).unwrap();
        for i in 0..n {
            let xi = inst.reference().x.rows(2 * i, 2);
            assert!((xi - &common).norm() < 1e-9);
        }
        assert!(inst.reference().y.norm() < 1e-9);
    }

    #[test]
    fn duality_values_on_the_ridge_example() {
        let inst = QuadraticSaddleInstance::new(
            Matrix::identity(1, 1),
            Vector::zeros(1),
            Matrix::identity(1, 1),
            Vector::from_column_slice(&[1.0]),
            Matrix::identity(1, 1),
            true,
            true,
        )
        .unwrap();
        let at_ref = IteratePair::new(
            Vector::from_column_slice(&[0.5]),
            Vector::from_column_slice(&[-0.5]),
        );
        let p = inst.primal_value(&at_ref.x);
        let d = inst.dual_value(&at_ref.y);
        assert_relative_eq!(p, 0.25, max_relative = 1e-12);
        assert_relative_eq!(d, 0.25, max_relative = 1e-12);
        // At the origin: P(0) = (0 - 1)^2 / 2, D(0) = 0.
        assert_relative_eq!(inst.primal_value(&Vector::zeros(1)), 0.5, max_relative = 1e-12);
        assert_relative_eq!(inst.dual_value(&Vector::zeros(1)), 0.0, max_relative = 1e-12);
    }

    #[test]
    fn conjugate_is_infinite_outside_the_domain() {
        // Affine g: the primal is finite only on the constraint set.
        let inst = QuadraticSaddleInstance::new(
            Matrix::identity(2, 2),
            Vector::zeros(2),
            Matrix::zeros(1, 1),
            Vector::from_column_slice(&[2.0]),
            Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            true,
            false,
        )
        .unwrap();
        let feasible = Vector::from_column_slice(&[1.0, 1.0]);
        assert!(inst.primal_value(&feasible).is_finite());
        let infeasible = Vector::from_column_slice(&[1.0, 0.0]);
        assert_eq!(inst.primal_value(&infeasible), f64::INFINITY);
    }

    #[test]
    fn serialization_round_trip_reproduces_the_instance() {
        let inst = make_ridge_erm(4, 3, 0.5, 77).unwrap();
        let data = inst.to_data();
        let back = QuadraticSaddleInstance::from_data(&data).unwrap();
        assert_eq!(inst.coupling(), back.coupling());
        assert!((inst.reference().x.clone() - &back.reference().x).norm() < 1e-12);
        assert_eq!(inst.spec(), back.spec());
    }

    #[test]
    fn gradients_match_finite_differences() {
        use crate::problem::gradient_finite_difference_error;
        let inst = make_quadratic_saddle(
            3,
            4,
            &SmoothnessSpec::new(6.0, 1.0, 2.0, 0.5, 2.0, 0.0, 1.0, false, false).unwrap(),
            13,
        )
        .unwrap();
        let problem = inst.problem();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let x = standard_normal_vector(3, &mut rng);
            let err = gradient_finite_difference_error(
                &|z| problem.value_f(z).unwrap(),
                &|z| problem.grad_f(z),
                &x,
                1e-5,
            );
            assert!(err < 1e-6, "gradient deviates from finite differences: {err}");
        }
    }
}
