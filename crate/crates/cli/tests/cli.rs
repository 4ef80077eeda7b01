use std::path::{Path, PathBuf};
use std::process::Command;

use geomeasure::examples::{example1, Example1Params};
use geomeasure::mixed::{solve, MixedProblem, SolverConfig};
use geomeasure::random;
use geomeasure::states::{DensityMatrix, PureState, SpaceShape, C64};
use geomeasure_cli::format::{parse_document, to_json, Document, MixedResultDoc, StateFile};
use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run_with(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_geomeasure"));
    cmd.args(args).env_remove("GEOMEASURE_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn run(args: &[&str]) -> Run {
    run_with(args, &[])
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn write_density(dir: &TempDir, name: &str, rho: &DensityMatrix) -> PathBuf {
    write(dir, name, &to_json(&StateFile::from_density(rho)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ex1(alpha: f64) -> DensityMatrix {
    example1(Example1Params::new(alpha).unwrap()).unwrap()
}

fn mixed_doc(text: &str) -> MixedResultDoc {
    match parse_document(text).unwrap() {
        Document::MixedResult(d) => d,
        other => panic!("unexpected document {other:?}"),
    }
}

#[test]
fn structured_output_round_trips() {
    let dir = TempDir::new().unwrap();
    let rho = ex1(0.3);
    let state = write_density(&dir, "rho.json", &rho);
    let r = run(&[
        "mixed",
        s(&state),
        "--format",
        "structured",
        "--starts",
        "4",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let doc = mixed_doc(&r.stdout);

    let config = SolverConfig {
        starts: 4,
        ..SolverConfig::default()
    };
    let direct = solve(&MixedProblem::from_config(rho, &config).unwrap(), &config).unwrap();
    assert!((doc.chi - direct.chi).abs() <= 1e-12);
    assert!((doc.half_e_sq - 0.08).abs() <= 1e-6);
    let raw = doc.ensemble.to_raw().unwrap();
    let again = raw.normalized().unwrap();
    for (a, b) in again.weights().iter().zip(direct.ensemble.weights()) {
        assert!((a - b).abs() <= 1e-12);
    }
    assert!((doc.multipliers.lambda - direct.multipliers.lambda).abs() <= 1e-12);

    // the written result is accepted by kkt-check with its own multipliers
    let result = write(&dir, "result.json", &r.stdout);
    let k = run(&["kkt-check", s(&state), s(&result)]);
    assert_eq!(k.code, 0, "{}{}", k.stdout, k.stderr);
    assert!(k.stdout.contains("passed"));
}

#[test]
fn output_is_deterministic_and_seed_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let state = write_density(&dir, "rho.json", &ex1(0.3));
    let args = [
        "mixed",
        s(&state),
        "--format",
        "structured",
        "--starts",
        "4",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.code, 0);
    assert_eq!(a.stdout, b.stdout);

    let mut seeded = args.to_vec();
    seeded.extend(["--seed", "9"]);
    let flag = run(&seeded);
    let env = run_with(&args, &[("GEOMEASURE_SEED", "9")]);
    assert_eq!(flag.stdout, env.stdout);
    assert_ne!(flag.stdout, a.stdout, "the seed reaches the random starts");
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let state = write_density(&dir, "rho.json", &ex1(0.3));
    let config = write(&dir, "solver.json", r#"{"starts": 3, "seed": 2}"#);
    let from_file = mixed_doc(
        &run(&[
            "mixed",
            s(&state),
            "--format",
            "structured",
            "--config",
            s(&config),
        ])
        .stdout,
    );
    assert_eq!(from_file.runs.len(), 3);
    let overridden = mixed_doc(
        &run(&[
            "mixed",
            s(&state),
            "--format",
            "structured",
            "--config",
            s(&config),
            "--starts",
            "5",
        ])
        .stdout,
    );
    assert_eq!(overridden.runs.len(), 5);

    let bad = write(&dir, "bad.json", r#"{"starts": 3, "colour": "red"}"#);
    assert_eq!(run(&["mixed", s(&state), "--config", s(&bad)]).code, 3);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let state = write_density(&dir, "rho.json", &ex1(0.3));

    assert_eq!(run(&["mixed", "/nonexistent/rho.json"]).code, 1);
    assert_eq!(run(&["mixed", s(&state), "--bogus"]).code, 2);
    assert_eq!(run(&["mixed", s(&state), "--starts", "0"]).code, 2);
    // a density file where a pure state is required
    assert_eq!(run(&["pure", s(&state)]).code, 3);
    let product = write(
        &dir,
        "product.json",
        r#"{"kind": "pure", "dims": [2, 2], "data": [[1, 0], [0, 0], [0, 0], [0, 0]]}"#,
    );
    assert_eq!(run(&["pure", s(&product)]).code, 0);
    assert_eq!(run(&["pure", s(&product), "--format", "csv"]).code, 2);

    let broken = write(
        &dir,
        "broken.json",
        "{\"kind\": \"density\", \"dims\": [2,2]",
    );
    assert_eq!(run(&["mixed", s(&broken)]).code, 3);
    let short = write(
        &dir,
        "short.json",
        r#"{"kind": "pure", "dims": [2, 2], "data": [[1, 0], [0, 0]]}"#,
    );
    let r = run(&["pure", s(&short)]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("dims mismatch"), "{}", r.stderr);

    // a tolerance below rounding level cannot be certified
    let strict = run(&["mixed", s(&state), "--stat-tol", "1e-30", "--starts", "1"]);
    assert_eq!(strict.code, 5, "{}", strict.stderr);
    assert!(strict.stdout.contains("converged"));
}

#[test]
fn kkt_check_names_the_violated_block() {
    let dir = TempDir::new().unwrap();
    let state = write_density(&dir, "rho.json", &ex1(0.3));
    let r = run(&[
        "mixed",
        s(&state),
        "--format",
        "structured",
        "--starts",
        "4",
    ]);
    let doc = mixed_doc(&r.stdout);

    // wrong multipliers on an optimal ensemble: stationarity fails
    let mut m = doc.multipliers.clone();
    m.lambda += 0.1;
    let mult = write(&dir, "mult.json", &to_json(&Document::Multipliers(m)));
    let ens = write(
        &dir,
        "ens.json",
        &to_json(&Document::Ensemble(doc.ensemble.clone())),
    );
    let k = run(&["kkt-check", s(&state), s(&ens), "--multipliers", s(&mult)]);
    assert_eq!(k.code, 6, "{}", k.stdout);
    assert!(k.stderr.contains("violated block"), "{}", k.stderr);

    // moving a weight breaks the norm constraint
    let mut bad = doc.ensemble.clone();
    let j = (0..bad.weights.len())
        .max_by(|&a, &b| bad.weights[a].total_cmp(&bad.weights[b]))
        .unwrap();
    bad.weights[j] -= 0.05;
    let next = (j + 1) % bad.weights.len();
    bad.weights[next] += 0.05;
    let ens = write(&dir, "bad.json", &to_json(&Document::Ensemble(bad)));
    let k = run(&["kkt-check", s(&state), s(&ens), "--format", "structured"]);
    assert_eq!(k.code, 4, "{}", k.stdout);
    match parse_document(&k.stdout).unwrap() {
        Document::KktReport(rep) => {
            assert_eq!(rep.violated.as_deref(), Some("feasibility"));
            assert!(!rep.passed);
        }
        other => panic!("unexpected document {other:?}"),
    }
}

#[test]
fn table_ensemble_is_nearly_feasible() {
    let dir = TempDir::new().unwrap();
    let state = write_density(&dir, "rho.json", &ex1(0.5));
    let table = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/table1.txt");
    let k = run(&["kkt-check", s(&state), table, "--format", "structured"]);
    match parse_document(&k.stdout).unwrap() {
        Document::KktReport(rep) => assert!(rep.feasibility <= 5e-3, "{}", rep.feasibility),
        other => panic!("unexpected document {other:?}"),
    }
}

#[test]
fn pure_states() {
    let dir = TempDir::new().unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    let bell = PureState::new(
        SpaceShape::qubits(2).unwrap(),
        vec![C64::new(h, 0.0), z, z, C64::new(h, 0.0)],
    )
    .unwrap();
    let p = write(&dir, "bell.json", &to_json(&StateFile::from_pure(&bell)));
    let r = run(&["pure", s(&p)]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("0.707106781"), "{}", r.stdout);

    let phi = random::product_state(
        &mut random::start_rng(3, 0),
        &SpaceShape::new(vec![2, 3]).unwrap(),
    );
    let psi = PureState::new(phi.shape().clone(), phi.to_vector()).unwrap();
    let p = write(&dir, "product.json", &to_json(&StateFile::from_pure(&psi)));
    let r = run(&["pure", s(&p), "--format", "structured"]);
    match parse_document(&r.stdout).unwrap() {
        Document::PureResult(d) => assert!(d.measure.abs() < 1e-10),
        other => panic!("unexpected document {other:?}"),
    }
}

#[test]
fn separable_mixed_state_has_zero_measure() {
    let dir = TempDir::new().unwrap();
    let shape = SpaceShape::qubits(2).unwrap();
    let e = random::ensemble(&mut random::start_rng(4, 0), &shape, 3);
    let state = write_density(
        &dir,
        "sep.json",
        &geomeasure::states::ensemble_to_density(&e),
    );
    let doc = mixed_doc(&run(&["mixed", s(&state), "--format", "structured"]).stdout);
    assert!(doc.half_e_sq <= 1e-8 && doc.converged);
}

#[test]
fn sweep_writes_csv() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sweep.csv");
    let r = run(&["sweep", "--family", "example1", "--out", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "alpha,chi,half_E_sq,kkt_residual,converged");
    assert_eq!(lines.len(), 22);
    for line in &lines[1..] {
        let f: Vec<f64> = line
            .split(',')
            .take(3)
            .map(|x| x.parse().unwrap())
            .collect();
        assert!((f[2] - 2.0 * (f[0] - 0.5).powi(2)).abs() < 1e-6, "{line}");
    }

    let r = run(&[
        "sweep", "--family", "example2", "--gamma", "1,0,1", "--grid", "0:1:0.5",
    ]);
    assert_eq!(r.code, 2);
}
