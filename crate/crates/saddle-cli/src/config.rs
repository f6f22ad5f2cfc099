//! Experiment configuration: TOML with one `[[instance]]` block per problem,
//! one `[[solver]]` block per method, and a shared `[run]` section. Every
//! instance is paired with every solver.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use saddle_core::problem::{Regime, RegimeChoice};
use saddle_core::problems::{
    make_affine_constrained, make_affine_constrained_with_rank, make_bilinear,
    make_bilinear_with_rank, make_decentralized_consensus, make_mspbe_instance,
    make_quadratic_saddle, make_ridge_erm, QuadraticSaddleInstance, Topology,
};
use saddle_core::SmoothnessSpec;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, rename = "instance")]
    pub instances: Vec<InstanceSpec>,
    #[serde(default, rename = "solver")]
    pub solvers: Vec<SolverSpec>,
    #[serde(default)]
    pub run: RunSettings,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Iterations used by certificate verification (stopping rules do not
    /// apply there; every iteration is checked).
    #[serde(default = "default_certificate_iterations")]
    pub certificate_iterations: usize,
}

fn default_tolerance() -> f64 {
    1e-9
}
fn default_max_iterations() -> usize {
    5000
}
fn default_certificate_iterations() -> usize {
    500
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            certificate_iterations: default_certificate_iterations(),
        }
    }
}

// No `deny_unknown_fields` here: the generator enum is flattened into the
// instance table, and serde buffers the remaining keys to dispatch on the
// `generator` tag.
#[derive(Debug, Deserialize)]
pub struct InstanceSpec {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub generator: Generator,
}

/// Instance generators, selected by the `generator` key.
#[derive(Debug, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum Generator {
    /// Quadratic saddle with prescribed curvature and coupling extremes.
    Quadratic {
        dim_x: usize,
        dim_y: usize,
        l_x: f64,
        mu_x: f64,
        l_y: f64,
        mu_y: f64,
        l_xy: f64,
        /// Smallest coupling singular value to realize.
        sigma_min: f64,
    },
    /// Purely bilinear objective with a square coupling.
    Bilinear { dim: usize, rank: Option<usize> },
    /// Affinely constrained minimization in saddle form.
    AffineConstrained {
        dim_x: usize,
        n_constraints: usize,
        rank: Option<usize>,
        mu_x: f64,
        l_x: f64,
    },
    /// Projected-Bellman-error policy evaluation over a synthetic trajectory.
    Mspbe {
        n_states: usize,
        d_features: usize,
        gamma: f64,
    },
    /// Ridge regression in saddle form.
    RidgeErm {
        n_samples: usize,
        dim: usize,
        reg: f64,
    },
    /// Consensus-constrained sum of local quadratics over a graph.
    Consensus {
        n_nodes: usize,
        local_dim: usize,
        topology: Topology,
    },
}

impl InstanceSpec {
    pub fn build(&self) -> saddle_core::Result<QuadraticSaddleInstance> {
        match &self.generator {
            Generator::Quadratic {
                dim_x,
                dim_y,
                l_x,
                mu_x,
                l_y,
                mu_y,
                l_xy,
                sigma_min,
            } => {
                let target = SmoothnessSpec::new(
                    *l_x, *mu_x, *l_y, *mu_y, *l_xy, *sigma_min, *sigma_min, true, true,
                )?;
                make_quadratic_saddle(*dim_x, *dim_y, &target, self.seed)
            }
            Generator::Bilinear { dim, rank } => match rank {
                Some(r) => make_bilinear_with_rank(*dim, *r, self.seed),
                None => make_bilinear(*dim, self.seed),
            },
            Generator::AffineConstrained {
                dim_x,
                n_constraints,
                rank,
                mu_x,
                l_x,
            } => match rank {
                Some(r) => make_affine_constrained_with_rank(
                    *dim_x,
                    *n_constraints,
                    *r,
                    *mu_x,
                    *l_x,
                    self.seed,
                ),
                None => make_affine_constrained(*dim_x, *n_constraints, *mu_x, *l_x, self.seed),
            },
            Generator::Mspbe {
                n_states,
                d_features,
                gamma,
            } => make_mspbe_instance(*n_states, *d_features, *gamma, self.seed),
            Generator::RidgeErm {
                n_samples,
                dim,
                reg,
            } => make_ridge_erm(*n_samples, *dim, *reg, self.seed),
            Generator::Consensus {
                n_nodes,
                local_dim,
                topology,
            } => make_decentralized_consensus(*n_nodes, *local_dim, *topology, self.seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverName {
    Apdg,
    Gdae,
    SimGda,
    AltGda,
    Extragradient,
    ForwardBackward,
}

impl SolverName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverName::Apdg => "apdg",
            SolverName::Gdae => "gdae",
            SolverName::SimGda => "sim-gda",
            SolverName::AltGda => "alt-gda",
            SolverName::Extragradient => "extragradient",
            SolverName::ForwardBackward => "forward-backward",
        }
    }

    pub fn is_scheduled(&self) -> bool {
        matches!(self, SolverName::Apdg | SolverName::Gdae)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub name: SolverName,
    /// `auto` or one of `a`, `b`, `c`, `d`; scheduled solvers only.
    #[serde(default = "default_regime")]
    pub regime: String,
    /// Baseline stepsizes; fall back to the safe defaults when absent.
    pub eta_x: Option<f64>,
    pub eta_y: Option<f64>,
    pub eta: Option<f64>,
    /// Post-scheduling perturbations, for certificate falsification
    /// experiments (e.g. verify that a tenfold stepsize breaks the
    /// contraction certificate).
    pub eta_x_scale: Option<f64>,
    pub eta_y_scale: Option<f64>,
    pub theta_scale: Option<f64>,
}

fn default_regime() -> String {
    "auto".to_string()
}

impl SolverSpec {
    pub fn regime_choice(&self) -> Result<RegimeChoice, String> {
        match self.regime.as_str() {
            "auto" => Ok(RegimeChoice::Auto),
            "a" => Ok(RegimeChoice::Fixed(Regime::A)),
            "b" => Ok(RegimeChoice::Fixed(Regime::B)),
            "c" => Ok(RegimeChoice::Fixed(Regime::C)),
            "d" => Ok(RegimeChoice::Fixed(Regime::D)),
            other => Err(format!(
                "unknown regime '{other}' (expected auto, a, b, c or d)"
            )),
        }
    }

    /// File-name fragment identifying this solver block.
    pub fn label(&self) -> String {
        if self.name.is_scheduled() {
            format!("{}-{}", self.name.as_str(), self.regime)
        } else {
            self.name.as_str().to_string()
        }
    }
}
