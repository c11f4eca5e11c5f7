use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zenocert"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_example1_writes_certificate_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cert.json");
    let o = run(&["verify", path_str(&example("example1")), "--degree", "6", "--out", path_str(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("verdict: certified\n"));

    let cert: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for key in [
        "alpha", "attempts", "constants", "degrees", "formulation", "gamma", "lyapunov", "manifest", "multipliers",
        "r", "sampling", "scale", "sdp", "strict_decrease", "variables",
    ] {
        assert!(cert.get(key).is_some(), "certificate lacks `{key}`");
    }
    assert_eq!(cert["manifest"], "cert.json.manifest.json");
    assert_eq!(cert["constants"]["c2"], 0.8);
    assert!(cert["multipliers"]["max_identity_residual"].as_f64().unwrap() <= 1e-6);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cert.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "verify");
    assert_eq!(manifest["outcome"], "certified");
    assert_eq!(manifest["config"]["synthesis"]["degree"], 6);
    let hash = manifest["input_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn verify_amplifying_reset_is_not_certified() {
    let o = run(&["verify", path_str(&example("example1")), "--degree", "6", "--set", "c2=1.5"]);
    assert!(matches!(code(&o), 2 | 3), "exit {}", code(&o));
    assert!(String::from_utf8_lossy(&o.stderr).contains("attempts:"));
}

#[test]
fn usage_and_io_errors_exit_1() {
    assert_eq!(code(&run(&["verify", "/no/such/system.json"])), 1);
    assert_eq!(code(&run(&["no-such-command"])), 1);
    assert_eq!(code(&run(&["verify", path_str(&example("ball")), "--degree", "3"])), 1);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn simulate_ball_reports_zeno_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = run(&["simulate", path_str(&example("ball")), "--init", "1", "1,0", "--out", path_str(&out)]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,mode,x1,x2"));
    assert_eq!(lines.next(), Some("0,1,1,0"));
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("# verdict=zeno-detected "), "{last}");
    assert!(last.ends_with("manifest=traj.csv.manifest.json"));
    let t: f64 = last
        .split_whitespace()
        .find_map(|f| f.strip_prefix("zeno_time="))
        .unwrap()
        .parse()
        .unwrap();
    let expect = 3.0 * 2f64.sqrt();
    assert!((t - expect).abs() < 0.01 * expect, "{t}");
    assert!(dir.path().join("traj.csv.manifest.json").exists());
}

#[test]
fn simulate_limit_cycle_reaches_horizon() {
    let o = run(&["simulate", path_str(&example("example5")), "--init", "1", "1,0", "--params", "p=0.4"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).lines().last().unwrap().starts_with("# verdict=horizon-reached"));
}

#[test]
fn simulate_rejects_initial_state_outside_domain() {
    let o = run(&["simulate", path_str(&example("ball")), "--init", "1", "-1,0"]);
    assert_eq!(code(&o), 1);
    let o = run(&["simulate", path_str(&example("ball")), "--init", "7", "1,0"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn sweep_single_monte_carlo_row() {
    let o = run(&["sweep", path_str(&example("ball")), "--mc", "1", "--range", "c=0.2:0.8"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "c,verdict,solve_time_seconds,sdp_iterations");
    assert!(lines[1].contains(",certified,"));
}

#[test]
fn sweep_of_refuted_points_still_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = run(&["sweep", path_str(&example("ball")), "--grid", "c=1.2,1.5", "--out", path_str(&out)]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<_> = text.lines().skip(1).filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("no-certificate")), "{rows:?}");
    assert_eq!(text.lines().last(), Some("# manifest=sweep.csv.manifest.json"));
}

#[test]
fn sweep_is_deterministic() {
    let ball = example("ball");
    let args = ["sweep", path_str(&ball), "--mc", "3", "--range", "c=0.2:1.4", "--seed", "5"];
    let strip = |o: Output| -> Vec<String> {
        stdout(&o)
            .lines()
            .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
            .collect()
    };
    assert_eq!(strip(run(&args)), strip(run(&args)));
}

#[test]
fn bisect_restitution_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bisect.json");
    let o = run(&[
        "bisect",
        path_str(&example("example4")),
        "--param",
        "C",
        "--bracket",
        "0.5",
        "1.5",
        "--direction",
        "max",
        "--degree",
        "4",
        "--tol",
        "0.02",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let res: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let bound = res["bound"].as_f64().unwrap();
    assert!((0.95..=1.0).contains(&bound), "{bound}");
    assert_eq!(res["direction"], "maximize");
    assert_eq!(res["manifest"], "bisect.json.manifest.json");
    assert!(res["probes"].as_array().unwrap().len() >= 2);
}

#[test]
fn bisect_inverted_bracket_exits_1() {
    let o = run(&[
        "bisect",
        path_str(&example("example4")),
        "--param",
        "C",
        "--bracket",
        "1.5",
        "0.5",
        "--direction",
        "max",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn check_sos_verdicts() {
    let o = run(&["check-sos", "x1^2 - 2*x1*x2 + x2^2", "--vars", "x1,x2", "--gram"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.starts_with("sos\nbasis: [1, x1, x2]\n"), "{text}");
    assert_eq!(code(&run(&["check-sos", "x1^2 + 1", "--vars", "x1"])), 0);
    let motzkin = run(&["check-sos", "x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", "--vars", "x1,x2"]);
    assert_eq!(code(&motzkin), 2);
    assert_eq!(stdout(&motzkin), "not-sos\n");
    assert_eq!(code(&run(&["check-sos", "x1^3", "--vars", "x1"])), 2);
    assert_eq!(code(&run(&["check-sos", "x1^ + 1", "--vars", "x1"])), 1);
    assert_eq!(code(&run(&["check-sos", "y^2", "--vars", "x1"])), 1);
}
