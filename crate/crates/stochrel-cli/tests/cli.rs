//! End-to-end checks of the command-line surface: exit codes, report
//! bytes, and agreement with the library's independent oracles.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stochrel::coupling::subset_oracle;
use stochrel::io;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stochrel"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    let mut cmd = bin();
    for a in args {
        cmd.arg(a);
    }
    cmd.output().expect("binary runs")
}

fn relate_args(rel: &str, mu: &str, nu: &str) -> Vec<String> {
    vec![
        "relate".into(),
        "--relation".into(),
        fixture(rel).display().to_string(),
        "--mu".into(),
        fixture(mu).display().to_string(),
        "--nu".into(),
        fixture(nu).display().to_string(),
    ]
}

#[test]
fn relate_matches_the_golden_report_and_the_oracle() {
    let args = relate_args("eps_relation.json", "eps_mu.json", "eps_nu.json");
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run(&args);
    assert_eq!(out.status.code(), Some(1), "the fixture pair is unrelated");
    let golden = std::fs::read(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/relate_eps.json"),
    )
    .expect("golden file present");
    assert_eq!(out.stdout, golden, "report bytes must match the checked-in golden");

    // the golden's verdict agrees with the independent subset oracle
    let rel = io::relation_from_json(
        &serde_json::from_slice(&std::fs::read(fixture("eps_relation.json")).unwrap()).unwrap(),
    )
    .unwrap();
    let mu = io::dist_from_json(
        &serde_json::from_slice(&std::fs::read(fixture("eps_mu.json")).unwrap()).unwrap(),
    )
    .unwrap();
    let nu = io::dist_from_json(
        &serde_json::from_slice(&std::fs::read(fixture("eps_nu.json")).unwrap()).unwrap(),
    )
    .unwrap();
    assert!(!subset_oracle(&rel, &mu, &nu).unwrap());
}

#[test]
fn reports_are_byte_for_byte_deterministic() {
    let args = relate_args("eps_relation.json", "eps_mu.json", "eps_nu.json");
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let first = run(&args);
    let second = run(&args);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn relate_exit_codes_cover_the_three_outcomes() {
    // related: identical distributions under the epsilon relation
    let args = relate_args("eps_relation.json", "eps_mu.json", "eps_mu.json");
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(run(&args).status.code(), Some(0));

    // input error: float literal in exact mode
    let args = relate_args("eps_relation.json", "bad_float.json", "eps_nu.json");
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run(&args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("float literal"));

    // usage error: tolerance without float mode
    let mut args = relate_args("eps_relation.json", "eps_mu.json", "eps_nu.json");
    args.push("--tolerance".into());
    args.push("1e-9".into());
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(run(&args).status.code(), Some(2));
}

#[test]
fn oracle_flag_agrees_with_the_flow_decision() {
    let mut args = relate_args("eps_relation.json", "eps_mu.json", "eps_nu.json");
    args.push("--oracle".into());
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run(&args);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["method"], "subset_oracle");
    assert_eq!(v["related"], false);
}

#[test]
fn float_mode_relate_accepts_float_masses() {
    let rel = fixture("leq_relation.json");
    let mass = fixture("bad_float.json");
    let out = run(&[
        "relate",
        "--mode",
        "float",
        "--relation",
        rel.to_str().unwrap(),
        "--mu",
        mass.to_str().unwrap(),
        "--nu",
        mass.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["approximate"], true);
    assert_eq!(v["related"], true);
}

#[test]
fn preserving_fixture_gives_a_single_step_trace() {
    let (rel, p1, p2) = (
        fixture("leq_relation.json"),
        fixture("lazy_chain_p1.json"),
        fixture("lazy_chain_p2.json"),
    );
    let out = run(&[
        "subrelation",
        "--relation",
        rel.to_str().unwrap(),
        "--p1",
        p1.to_str().unwrap(),
        "--p2",
        p2.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["converged"], true);
    assert_eq!(v["rounds"], 0);
    assert_eq!(v["steps"].as_array().unwrap().len(), 1);
}

#[test]
fn preserve_command_agrees_with_its_oracle_flag() {
    let (rel, p1, p2) = (
        fixture("leq_relation.json"),
        fixture("lazy_chain_p1.json"),
        fixture("lazy_chain_p2.json"),
    );
    let base = [
        "preserve",
        "--relation",
        rel.to_str().unwrap(),
        "--p1",
        p1.to_str().unwrap(),
        "--p2",
        p2.to_str().unwrap(),
    ];
    let flow = run(&base);
    assert_eq!(flow.status.code(), Some(0));
    let mut with_oracle = base.to_vec();
    with_oracle.push("--oracle");
    let oracle = run(&with_oracle);
    assert_eq!(oracle.status.code(), Some(0));
}

#[test]
fn reproduce_queueing_small_run_matches() {
    let out = run(&[
        "reproduce-queueing",
        "--lambda1",
        "2/5",
        "--lambda2",
        "3/10",
        "--cap",
        "8",
        "--iters",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for row in v["iterates"].as_array().unwrap() {
        assert_eq!(row["match"], true);
    }
}

#[test]
fn stationary_compare_is_inconclusive_for_truncated_queueing_models() {
    // boundary truncation erodes the preserved subrelation of the
    // total-count order to nothing, so the method makes no claim here
    let dir = std::env::temp_dir().join("stochrel-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let lb = dir.join("lb.json");
    let ind = dir.join("ind.json");
    let rel = dir.join("rsum.json");
    std::fs::write(
        &lb,
        serde_json::to_string_pretty(&serde_json::json!({
            "m": 2,
            "box": [[0, 5], [0, 5]],
            "rates": {
                "0,1": "7/10*ind(x[1]<x[2]) + 2/5*ind(x[1]==x[2])",
                "0,2": "7/10*ind(x[1]>x[2]) + 3/10*ind(x[1]==x[2])",
                "1,0": "ind(x[1]>0)",
                "2,0": "ind(x[2]>0)",
            },
        }))
        .unwrap(),
    )
    .unwrap();
    std::fs::write(
        &ind,
        serde_json::to_string_pretty(&serde_json::json!({
            "m": 2,
            "box": [[0, 5], [0, 5]],
            "rates": {
                "0,1": "2/5",
                "0,2": "3/10",
                "1,0": "ind(x[1]>0)",
                "2,0": "ind(x[2]>0)",
            },
        }))
        .unwrap(),
    )
    .unwrap();
    let labels: Vec<serde_json::Value> = {
        let mut v = Vec::new();
        for a in 0..=5 {
            for b in 0..=5 {
                v.push(serde_json::json!([a, b]));
            }
        }
        v
    };
    std::fs::write(
        &rel,
        serde_json::to_string_pretty(&serde_json::json!({
            "left": labels,
            "right": labels,
            "kind": "sum_leq",
        }))
        .unwrap(),
    )
    .unwrap();
    let out = run(&[
        "stationary-compare",
        "--relation",
        rel.to_str().unwrap(),
        "--model1",
        lb.to_str().unwrap(),
        "--model2",
        ind.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["conclusive"], false);
    assert_eq!(v["subrelation"]["nonempty"], false);
}

#[test]
fn stationary_compare_concludes_on_truncated_birth_death_chains() {
    // one colony, dominated arrivals, unit service: ≤ is preserved even
    // after truncation, so the comparison concludes positively
    let dir = std::env::temp_dir().join("stochrel-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let slow = dir.join("slow.json");
    let fast = dir.join("fast.json");
    let rel = dir.join("leq1d.json");
    std::fs::write(
        &slow,
        serde_json::to_string_pretty(&serde_json::json!({
            "m": 1,
            "box": [[0, 9]],
            "rates": { "0,1": "1/3", "1,0": "ind(x[1]>0)" },
        }))
        .unwrap(),
    )
    .unwrap();
    std::fs::write(
        &fast,
        serde_json::to_string_pretty(&serde_json::json!({
            "m": 1,
            "box": [[0, 9]],
            "rates": { "0,1": "1/2", "1,0": "ind(x[1]>0)" },
        }))
        .unwrap(),
    )
    .unwrap();
    let labels: Vec<serde_json::Value> = (0..=9).map(|k| serde_json::json!(k)).collect();
    std::fs::write(
        &rel,
        serde_json::to_string_pretty(&serde_json::json!({
            "left": labels,
            "right": labels,
            "kind": "coordinatewise_leq",
        }))
        .unwrap(),
    )
    .unwrap();
    let out = run(&[
        "stationary-compare",
        "--relation",
        rel.to_str().unwrap(),
        "--model1",
        slow.to_str().unwrap(),
        "--model2",
        fast.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["conclusive"], true);
    assert_eq!(v["related"], true);
    assert_eq!(v["related_under_subrelation"], true);
    assert_eq!(v["subrelation"]["rounds"], 0);
}

#[test]
fn output_flag_writes_the_report_file() {
    let dir = std::env::temp_dir().join("stochrel-cli-out");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("report.json");
    let mut args = relate_args("eps_relation.json", "eps_mu.json", "eps_nu.json");
    args.push("--output".into());
    args.push(path.display().to_string());
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run(&args);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let golden = std::fs::read(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/relate_eps.json"),
    )
    .unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), golden);
}
