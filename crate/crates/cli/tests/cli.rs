use assert_cmd::Command;
use predicates::prelude::*;
use std::path::PathBuf;

fn bin() -> Command {
    Command::cargo_bin("projfam").unwrap()
}

fn model(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "models", name].iter().collect();
    path.to_str().unwrap().to_string()
}

fn temp_model(name: &str, text: &str) -> String {
    let path = std::env::temp_dir().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn infer_reports_exact_value_and_lifted_path() {
    bin()
        .args(["infer", &model("sbm.plp"), "--query", "edge(a,b), a != b"])
        .assert()
        .success()
        .stdout(predicate::str::contains("value: 163/256"))
        .stdout(predicate::str::contains("path: lifted"));
}

#[test]
fn infer_emits_json_with_float_value() {
    bin()
        .args(["infer", &model("sbm.plp"), "--query", "edge(a,b)", "--float", "--format", "json"])
        .assert()
        .success()
        .stdout(predicate::str::contains("\"value\": 0.63671875"))
        .stdout(predicate::str::contains("\"path\": \"lifted\""));
}

#[test]
fn infer_conditions_on_a_database_file() {
    bin()
        .args([
            "infer",
            &model("community_sbm.plp"),
            "--query",
            "edge(a,b)",
            "--db",
            &model("communities.db"),
        ])
        .assert()
        .success()
        .stdout(predicate::str::contains("value: 7/8"));
}

#[test]
fn infer_falls_back_to_the_grounded_path() {
    let path = temp_model(
        "projected_body.plp",
        "0.5 :: u(X,Y).\n0.5 :: r(X,Y).\ns(X) :- r(X,Y), u(X,Y).\n",
    );
    bin()
        .args(["infer", &path, "--query", "s(a)"])
        .assert()
        .success()
        .stdout(predicate::str::contains("value: 1/4"))
        .stdout(predicate::str::contains("path: grounded"));
}

#[test]
fn infer_rejects_open_queries() {
    bin()
        .args(["infer", &model("sbm.plp"), "--query", "edge(X,b)"])
        .assert()
        .code(2)
        .stderr(predicate::str::contains("ground"));
}

#[test]
fn infer_rejects_malformed_queries() {
    bin()
        .args(["infer", &model("sbm.plp"), "--query", "edge(a,"])
        .assert()
        .code(2)
        .stderr(predicate::str::contains("cannot parse query"));
}

#[test]
fn check_certifies_a_projective_model() {
    bin()
        .args(["check", &model("sbm.plp")])
        .assert()
        .success()
        .stdout(predicate::str::contains("exchangeable: holds"))
        .stdout(predicate::str::contains("projective: holds"));
}

#[test]
fn check_reports_a_violation_with_a_witness() {
    let path = temp_model("split_vars.mln", "1.0\tr(X) & q(Y)\n");
    bin()
        .args(["check", &path])
        .assert()
        .code(1)
        .stdout(predicate::str::contains("projective: violated"))
        .stdout(predicate::str::contains("p_small"));
}

#[test]
fn check_sigma_covers_conditional_families() {
    bin()
        .args(["check", &model("pair_block.mln"), "--sigma", "--max-size", "2", "--format", "json"])
        .assert()
        .success()
        .stdout(predicate::str::contains("\"property\": \"sigma-projective\""))
        .stdout(predicate::str::contains("\"verdict\": \"holds\""));
}

#[test]
fn check_works_on_all_model_formats() {
    for name in ["sbm.ahk.json", "hidden_attr.rbn.json"] {
        bin().args(["check", &model(name), "--max-size", "2"]).assert().success();
    }
}

#[test]
fn enumerate_prints_the_world_table() {
    bin()
        .args(["enumerate", &model("sbm.plp"), "--size", "2"])
        .assert()
        .success()
        .stdout(predicate::str::contains("81/256"));
}

#[test]
fn sample_is_deterministic_in_the_seed() {
    let run = || {
        let out = bin()
            .args(["sample", &model("sbm.ahk.json"), "--size", "3", "--seed", "9", "--count", "2"])
            .assert()
            .success();
        String::from_utf8(out.get_output().stdout.clone()).unwrap()
    };
    let first = run();
    assert!(!first.trim().is_empty());
    assert_eq!(first, run());
}

#[test]
fn stream_answers_prefix_queries() {
    bin()
        .args(["stream", &model("sbm.ahk.json")])
        .write_stdin("add a\nadd b\nquery edge(a,b)\nworld\n")
        .assert()
        .success()
        .stdout(predicate::str::contains("163/256"));
}

#[test]
fn stream_rejects_intensional_facts() {
    bin()
        .args(["stream", &model("sbm.ahk.json")])
        .write_stdin("add a\nadd b edge(a,b)\n")
        .assert()
        .code(2)
        .stderr(predicate::str::contains("edge"));
}

#[test]
fn bench_compares_the_two_paths() {
    bin()
        .args(["bench", &model("sbm.plp"), "--max-size", "3", "--format", "json"])
        .assert()
        .success()
        .stdout(predicate::str::contains("\"timings\""))
        .stdout(predicate::str::contains("\"grounded\""));
}

#[test]
fn unknown_extension_is_a_usage_error() {
    let path = temp_model("model.toml", "");
    bin()
        .args(["check", &path])
        .assert()
        .code(2)
        .stderr(predicate::str::contains("model format"));
}

#[test]
fn missing_file_is_a_usage_error() {
    bin().args(["check", "/nonexistent.plp"]).assert().code(2);
}
