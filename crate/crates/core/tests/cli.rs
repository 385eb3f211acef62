//! End-to-end tests of the `crl` binary: exit codes, determinism, and the
//! reference-value harness.

use std::io::Write;
use std::process::{Command, Output};

fn crl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn query_prints_exact_rational() {
    let out = crl(&["query", "offline-cbn", "P(SC=1 | CG=1, do(SH=1))"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "1/4\n");
    let out = crl(&["query", "offline-cbn", "P(SC=1 | CG=1, do(SH=1))", "--decimal", "3"]);
    assert_eq!(stdout(&out), "1/4 (0.250)\n");
}

#[test]
fn query_exit_codes() {
    // Zero-probability evidence.
    let out = crl(&["query", "offline-cbn", "P(SC=1 | CG=0, SH=1)"]);
    assert_eq!(code(&out), 3);
    // Counterfactual on a plain network needs explicit consent.
    let out = crl(&["query", "offline-cbn", "P(SC[SH=1]=1 | CG=1, SH=0)"]);
    assert_eq!(code(&out), 4);
    let out = crl(&[
        "query",
        "offline-cbn",
        "P(SC[SH=1]=1 | CG=1, SH=0)",
        "--canonical-scm",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "0\n");
    // Native structural model needs no consent.
    let out = crl(&["query", "offline-confounded-scm", "P(SC[SH=1]=1 | CG=1, SH=0)"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "0\n");
}

#[test]
fn parse_errors_exit_2_with_position() {
    let mut f = tempfile_path("bad.crl");
    writeln!(f.1, "model cbn \"x\"\nvar X {{0,1 role=state").unwrap();
    drop(f.1);
    let out = crl(&["check", f.0.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("line 2"), "{err}");
    // Bad query text is also a positioned parse error.
    let out = crl(&["query", "online-cbn", "P(SC=1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn check_reports_sufficiency() {
    let out = crl(&["check", "online-cbn"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("action-sufficient (cbn): true"));
    let out = crl(&["check", "offline-cbn"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(
        text.contains("action-sufficient (cbn): false (latent parent PH of SH)"),
        "{text}"
    );
    let out = crl(&["check", "sports-ddn"]);
    assert!(stdout(&out).contains("policy behavioral: executable: false"));
    assert!(stdout(&out).contains("policy marginal: executable: true"));
}

#[test]
fn eval_reproduces_reference_values() {
    let out = crl(&["eval", "sports-ddn", "--policy", "marginal", "--mode", "conditional"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("V = 1/3"), "{text}");
    let out = crl(&["eval", "sports-ddn", "--policy", "marginal", "--mode", "interventional"]);
    assert!(stdout(&out).contains("V = 1/6"));
    let out = crl(&[
        "eval",
        "sports-ddn",
        "--policy",
        "behavioral",
        "--mode",
        "hindsight",
        "--observe",
        "SC=1",
    ]);
    let text = stdout(&out);
    assert!(text.contains("Q[0] = 1/2"), "{text}");
}

#[test]
fn eval_unsolvable_exits_5() {
    // Discount 1 with recurrent positive reward has no finite value.
    let text = "model ddn \"loop\"\n\
                var X {0,1} role=state\n\
                var A {0,1} role=action\n\
                var R {0,1} role=reward\n\
                var X' {0,1} role=state slice=next\n\
                edge X -> X'\n\
                prior X : 0 1\n\
                cpt A | :\n  : 1 0\n\
                cpt R | :\n  : 0 1\n\
                eqn X' = X\n\
                policy always0 | X :\n  * : 1 0\n\
                discount 1\n";
    let f = write_temp("loop.crl", text);
    let out = crl(&["eval", f.to_str().unwrap(), "--policy", "always0"]);
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let args = ["simulate", "sports-ddn", "--policy", "marginal", "--steps", "25", "--seed", "9"];
    let a = crl(&args);
    let b = crl(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(stdout(&a).lines().count(), 25);
    let other = crl(&[
        "simulate", "sports-ddn", "--policy", "marginal", "--steps", "25", "--seed", "10",
    ]);
    assert_ne!(stdout(&a), stdout(&other));
}

#[test]
fn simulate_zero_steps_is_empty() {
    let out = crl(&["simulate", "sports-ddn", "--policy", "marginal", "--steps", "0"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "");
}

#[test]
fn simulate_non_executable_exits_6() {
    let out = crl(&["simulate", "sports-ddn", "--policy", "behavioral"]);
    assert_eq!(code(&out), 6);
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("PH"), "{err}");
}

#[test]
fn reproduce_exits_0_and_is_json_capable() {
    let out = crl(&["reproduce"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("25/25 exact matches"));
    let out = crl(&["reproduce", "--json"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["failures"], 0);
    assert_eq!(v["pass"], true);
}

// ---------------------------------------------------------------------------

fn tempfile_path(name: &str) -> (std::path::PathBuf, std::fs::File) {
    let dir = std::env::temp_dir().join(format!("crl-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    let file = std::fs::File::create(&path).unwrap();
    (path, file)
}

fn write_temp(name: &str, text: &str) -> std::path::PathBuf {
    let (path, mut file) = tempfile_path(name);
    file.write_all(text.as_bytes()).unwrap();
    path
}
