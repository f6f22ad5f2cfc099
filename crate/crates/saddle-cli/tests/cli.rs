//! End-to-end tests of the harness entry points: exit codes, trace files,
//! summary contents, determinism, and certificate verification.

use std::fs;
use std::path::Path;

use saddle_cli::{run_experiment, verify_certificates};

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

fn scsc_block(name: &str, seed: u64) -> String {
    format!(
        r#"
[[instance]]
name = "{name}"
generator = "quadratic"
seed = {seed}
dim_x = 4
dim_y = 4
l_x = 4.0
mu_x = 1.0
l_y = 4.0
mu_y = 1.0
l_xy = 2.0
sigma_min = 1.0
"#
    )
}

#[test]
fn run_writes_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &format!(
            r#"
output_dir = "{}"
[run]
tolerance = 1e-9
max_iterations = 5000
{}
[[solver]]
name = "apdg"
[[solver]]
name = "gdae"
[[solver]]
name = "extragradient"
"#,
            out.display(),
            scsc_block("scsc", 7)
        ),
    );
    assert_eq!(run_experiment(&config), 0);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let runs = summary.as_array().unwrap();
    assert_eq!(runs.len(), 3);
    for run in runs {
        assert_eq!(run["status"], "converged");
        let trace = out.join(run["trace"].as_str().unwrap());
        let body = fs::read_to_string(&trace).unwrap();
        let mut lines = body.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,residual,dist_x_sq,dist_y_sq,lyapunov,grad_f_calls,grad_g_calls,matvec_calls"
        );
        let rows = lines.count();
        assert_eq!(rows as u64, run["iterations"].as_u64().unwrap() + 1);
    }
    // Counter accounting follows each solver's declared budget.
    let by_solver = |name: &str| {
        runs.iter()
            .find(|r| r["solver"] == name)
            .unwrap_or_else(|| panic!("missing {name}"))
            .clone()
    };
    let apdg = by_solver("apdg-auto");
    let iters = apdg["iterations"].as_u64().unwrap();
    assert_eq!(apdg["grad_f_calls"].as_u64().unwrap(), iters);
    assert_eq!(apdg["grad_g_calls"].as_u64().unwrap(), iters);
    assert_eq!(apdg["matvec_calls"].as_u64().unwrap(), 4 * iters + 2);
    let gdae = by_solver("gdae-auto");
    let giters = gdae["iterations"].as_u64().unwrap();
    assert_eq!(gdae["grad_f_calls"].as_u64().unwrap(), 2 * giters + 1);
    assert_eq!(gdae["grad_g_calls"].as_u64().unwrap(), giters);
    let eg = by_solver("extragradient");
    let eiters = eg["iterations"].as_u64().unwrap();
    assert_eq!(eg["grad_f_calls"].as_u64().unwrap(), 2 * eiters);

    // The instance is serialized alongside the traces for reproduction.
    assert!(out.join("scsc.instance.toml").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let body = |out: &Path| {
        format!(
            r#"
output_dir = "{}"
{}
[[solver]]
name = "apdg"
[[solver]]
name = "sim-gda"
"#,
            out.display(),
            scsc_block("det", 99)
        )
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let cfg_a = dir.path().join("a.toml");
    let cfg_b = dir.path().join("b.toml");
    fs::write(&cfg_a, body(&out_a)).unwrap();
    fs::write(&cfg_b, body(&out_b)).unwrap();
    assert_eq!(run_experiment(&cfg_a), 0);
    assert_eq!(run_experiment(&cfg_b), 0);
    for name in ["det__apdg-auto.csv", "det__sim-gda.csv", "summary.json"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn inapplicable_regime_is_an_outcome_not_a_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &format!(
            r#"
output_dir = "{}"
[[instance]]
name = "bl"
generator = "bilinear"
seed = 3
dim = 2
[[solver]]
name = "apdg"
regime = "a"
"#,
            out.display()
        ),
    );
    assert_eq!(run_experiment(&config), 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary[0]["status"], "inapplicable");
    assert!(summary[0]["trace"].is_null());
}

#[test]
fn divergence_is_recorded_with_zero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &format!(
            r#"
output_dir = "{}"
[run]
max_iterations = 2000
[[instance]]
name = "bl"
generator = "bilinear"
seed = 3
dim = 2
[[solver]]
name = "sim-gda"
eta = 0.1
"#,
            out.display()
        ),
    );
    assert_eq!(run_experiment(&config), 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary[0]["status"], "diverged");
}

#[test]
fn regime_sweep_converges_on_matching_instances() {
    // One instance per regime, each solved with that regime pinned.
    let pairs = [
        ("a", scsc_block("qa", 21)),
        (
            "b",
            r#"
[[instance]]
name = "qb"
generator = "affine-constrained"
seed = 22
dim_x = 6
n_constraints = 3
mu_x = 1.0
l_x = 10.0
"#
            .to_string(),
        ),
        (
            "c",
            r#"
[[instance]]
name = "qc"
generator = "mspbe"
seed = 23
n_states = 20
d_features = 4
gamma = 0.9
"#
            .to_string(),
        ),
        (
            "d",
            r#"
[[instance]]
name = "qd"
generator = "bilinear"
seed = 24
dim = 6
"#
            .to_string(),
        ),
    ];
    for (regime, instance_block) in pairs {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let config = write_config(
            dir.path(),
            &format!(
                "output_dir = \"{}\"\n[run]\ntolerance = 1e-9\nmax_iterations = 20000\n{}\n[[solver]]\nname = \"apdg\"\nregime = \"{}\"\n",
                out.display(),
                instance_block,
                regime
            ),
        );
        assert_eq!(run_experiment(&config), 0);
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap())
                .unwrap();
        assert_eq!(summary[0]["status"], "converged", "regime {regime}");
        assert_eq!(summary[0]["regime"], regime);
    }
}

#[test]
fn invalid_configs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // Unparseable TOML.
    let bad = write_config(dir.path(), "this is not toml [");
    assert_eq!(run_experiment(&bad), 1);
    // Parseable but empty: nothing to run.
    let empty = dir.path().join("empty.toml");
    fs::write(&empty, format!("output_dir = \"{}\"\n", out.display())).unwrap();
    assert_eq!(run_experiment(&empty), 1);
    assert_eq!(verify_certificates(&empty), 1);
    // Missing file.
    assert_eq!(run_experiment(&dir.path().join("absent.toml")), 1);
    // Unknown solver regime: rejected before any output is written.
    let bad_regime = dir.path().join("regime.toml");
    fs::write(
        &bad_regime,
        format!(
            "output_dir = \"{}\"\n{}\n[[solver]]\nname = \"apdg\"\nregime = \"z\"\n",
            out.display(),
            scsc_block("s", 1)
        ),
    )
    .unwrap();
    assert_eq!(run_experiment(&bad_regime), 1);
    assert!(!out.exists(), "config errors must not create output");
}

#[test]
fn verify_certifies_a_clean_suite() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &format!(
            r#"
output_dir = "{}"
[run]
certificate_iterations = 300
{}
[[instance]]
name = "bl"
generator = "bilinear"
seed = 11
dim = 4
[[solver]]
name = "apdg"
[[solver]]
name = "gdae"
"#,
            dir.path().join("out").display(),
            scsc_block("scsc", 42)
        ),
    );
    assert_eq!(verify_certificates(&config), 0);
}

#[test]
fn verify_reports_corrupted_stepsizes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &format!(
            r#"
output_dir = "{}"
[run]
certificate_iterations = 200
{}
[[solver]]
name = "apdg"
regime = "a"
eta_x_scale = 10.0
"#,
            dir.path().join("out").display(),
            scsc_block("scsc", 101)
        ),
    );
    assert_eq!(verify_certificates(&config), 2);
}

#[test]
fn verify_rejects_unscheduled_solvers() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &format!(
            "output_dir = \"{}\"\n{}\n[[solver]]\nname = \"sim-gda\"\n",
            dir.path().join("out").display(),
            scsc_block("s", 5)
        ),
    );
    assert_eq!(verify_certificates(&config), 1);
}

#[test]
fn serialized_instances_reproduce() {
    use saddle_core::problems::{QuadraticInstanceData, QuadraticSaddleInstance};
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &format!(
            "output_dir = \"{}\"\n{}\n[[solver]]\nname = \"apdg\"\n",
            out.display(),
            scsc_block("round", 77)
        ),
    );
    assert_eq!(run_experiment(&config), 0);
    let text = fs::read_to_string(out.join("round.instance.toml")).unwrap();
    let data: QuadraticInstanceData = toml::from_str(&text).unwrap();
    let rebuilt = QuadraticSaddleInstance::from_data(&data).unwrap();
    assert_eq!(rebuilt.dim_x(), 4);
    assert!(rebuilt.spec().mu_x > 0.9);
}
