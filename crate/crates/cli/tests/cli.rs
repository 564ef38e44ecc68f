use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn phdae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phdae"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

fn reported_order(out: &Output) -> f64 {
    stdout(out)
        .lines()
        .find_map(|l| l.strip_prefix("order: "))
        .expect("order line")
        .trim()
        .parse()
        .unwrap()
}

const NON_SKEW: &str = "\
dims 2 2 1
E
1 0
0 1
J
0 1
1 0
B
1
0
Z
1 0
0 1
Q
1 0
0 1
";

#[test]
fn validate_builtin_circuit_passes() {
    let out = phdae(&[
        "validate",
        "--model",
        "circuit",
        "--samples",
        "50",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("result: PASS"));
}

#[test]
fn validate_non_skew_file_fails_structure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    fs::write(&path, NON_SKEW).unwrap();
    let out = phdae(&["validate", "--model", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("result: FAIL"));
}

#[test]
fn validate_missing_file_is_an_io_error() {
    let out = phdae(&["validate", "--model", "/nonexistent/model.txt"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn malformed_model_file_names_line_and_block() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.txt");
    fs::write(&path, "dims 2 2 1\nJ\n0 1\n").unwrap();
    let out = phdae(&["validate", "--model", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line") && err.contains("J"), "{err}");
}

#[test]
fn uncontrolled_energy_never_increases() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    let out = phdae(&[
        "simulate",
        "--scenario",
        "circuit-uncontrolled",
        "--t-final",
        "20",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let (header, rows) = read_csv(&path);
    assert_eq!(
        header.join(","),
        "t,I,V1,V2,IG,IR,u,y,H,Htilde,diss_sum,port_sum,pbe_residual"
    );
    assert_eq!(rows.len(), 2001);
    let (h, res) = (column(&header, "H"), column(&header, "pbe_residual"));
    // Algebraic round-off from t = 0 is not damped by Gauss methods, which puts
    // a floor of about machine precision times H(0) under the decay.
    let floor = 1e-15 * rows[0][h];
    assert!(rows.windows(2).all(|w| w[1][h] <= w[0][h] + floor));
    assert!(rows.last().unwrap()[h] < floor);
    assert!(rows.iter().all(|r| r[res].abs() <= 1e-10 * (1.0 + r[h])));
}

#[test]
fn controlled_run_reaches_the_target() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    let out = phdae(&[
        "simulate",
        "--scenario",
        "circuit-controlled",
        "--power",
        "10",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let (header, rows) = read_csv(&path);
    // x* = √(P/R_R)(1, −R_R−R_L, −R_R, 1, −1) with the default parameters.
    let a = (10.0f64 / 3.0).sqrt();
    let x_star = [a, -3.1 * a, -3.0 * a, a, -a];
    let last = rows.last().unwrap();
    let ix = column(&header, "I");
    for (k, target) in x_star.iter().enumerate() {
        assert!(
            (last[ix + k] - target).abs() <= 1e-2 * target.abs(),
            "component {k}: {}",
            last[ix + k]
        );
    }
    let ht = column(&header, "Htilde");
    let peak = rows.iter().map(|r| r[ht]).fold(0.0, f64::max);
    assert!(last[ht] < 1e-6 * peak);
}

#[test]
fn single_step_gives_two_rows() {
    let out = phdae(&[
        "simulate",
        "--scenario",
        "circuit-uncontrolled",
        "--h",
        "0.05",
        "--t-final",
        "0.05",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().count(), 3);
}

#[test]
fn output_is_deterministic() {
    let args = [
        "simulate",
        "--scenario",
        "two-circuits",
        "--stages",
        "2",
        "--t-final",
        "0.3",
    ];
    let a = phdae(&args);
    let b = phdae(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("t,x0,x1,"));
}

#[test]
fn config_file_sets_parameters_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# short run\nscenario = circuit-feedback\nP = 5\nalpha = 2\nh = 0.02\nt_final = 0.1\n",
    )
    .unwrap();
    let out = phdae(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--t-final",
        "0.04",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let last_t: f64 = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((last_t - 0.04).abs() < 1e-12);
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "L = 2\nresistance = 4\n").unwrap();
    let out = phdae(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("resistance"));
}

#[test]
fn failed_integration_flushes_partial_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    let out = phdae(&[
        "simulate",
        "--scenario",
        "circuit-uncontrolled",
        "--newton-max-iter",
        "0",
        "--t-final",
        "0.5",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    assert!(!out.stderr.is_empty());
    let (header, rows) = read_csv(&path);
    assert_eq!(header.len(), 13);
    assert_eq!(rows.len(), 1);
}

#[test]
fn convergence_default_is_second_order() {
    let out = phdae(&[
        "convergence",
        "--scenario",
        "circuit-uncontrolled",
        "--stages",
        "1",
    ]);
    assert_eq!(code(&out), 0);
    let order = reported_order(&out);
    assert!((1.8..=2.2).contains(&order), "{order}");
}

#[test]
fn convergence_on_decay_matches_the_exact_solution() {
    let out = phdae(&["convergence", "--scenario", "decay"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("exact solution"));
    let order = reported_order(&out);
    assert!((1.9..=2.1).contains(&order), "{order}");
}

#[test]
fn two_step_sizes_are_a_usage_error() {
    let out = phdae(&["convergence", "--scenario", "decay", "--h-list", "0.1,0.05"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn bad_flags_exit_with_one() {
    assert_eq!(code(&phdae(&["simulate", "--stages", "9"])), 1);
    assert_eq!(code(&phdae(&["simulate", "--scenario", "pendulum"])), 1);
    assert_eq!(code(&phdae(&["simulate", "--h", "abc"])), 1);
    assert_eq!(code(&phdae(&["frobnicate"])), 1);
}

#[test]
fn bundled_files_run() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let model = data.join("oscillator.lti");
    let out = phdae(&["validate", "--model", model.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));

    let cfg = data.join("controlled.cfg");
    let out = phdae(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--t-final",
        "1",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().count(), 102);
}
