use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn case_text(perm: &str, wells: &str) -> String {
    format!(
        r#"
initial_pressure = 6000.0

[grid]
nx = 8
ny = 8
nz = 1
dx = 60.0
dy = 60.0
dz = 50.0

[rock]
perm_x = {perm}
porosity = {{ uniform = 0.25 }}
compressibility = 1e-9

[fluid]
mu_o = 3.0
mu_w = 1.0

{wells}

[economics]
oil_price = 60.0
water_prod_cost = 5.0
water_inj_cost = 5.0
well_cost = 1e5
discount_rate = 0.0

[schedule]
horizon = 730.0
n_control_periods = 1
"#
    )
}

const TWO_WELLS: &str = r#"
[[wells]]
name = "P1"
kind = "producer"
i = 6
j = 6
bhp_limit = 500.0

[[wells]]
name = "I1"
kind = "injector"
i = 1
j = 1
bhp_limit = 12000.0
"#;

const THREE_WELLS: &str = r#"
[[wells]]
name = "P1"
kind = "producer"
i = 6
j = 6
bhp_limit = 500.0

[[wells]]
name = "P2"
kind = "producer"
i = 6
j = 1
bhp_limit = 500.0

[[wells]]
name = "I1"
kind = "injector"
i = 1
j = 3
bhp_limit = 12000.0
"#;

fn write_case(dir: &Path, wells: &str) -> PathBuf {
    let path = dir.join("case.toml");
    std::fs::write(&path, case_text("{ uniform = 100.0 }", wells)).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surroflood"))
        .args(args)
        .env_remove("SURROFLOOD_WORKERS")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn summary(dir: &Path) -> toml::Table {
    let text = std::fs::read_to_string(dir.join("summary.txt")).unwrap();
    let mut doc: toml::Table = text.parse().unwrap();
    assert!(doc.contains_key("timing"));
    doc.remove("result").unwrap().as_table().unwrap().clone()
}

fn floats(v: &toml::Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_float().unwrap()).collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn two_well_st_gives_unit_ratios() {
    let tmp = tempfile::tempdir().unwrap();
    let case = write_case(tmp.path(), TWO_WELLS);
    let out = tmp.path().join("st");
    ok(&["run-st", "--case", s(&case), "--out", s(&out), "--pvi-points", "5"]);
    let r = summary(&out);
    assert_eq!(floats(&r["f_star"]), vec![1.0, 1.0]);
    assert_eq!(r["full_evaluations"].as_integer(), Some(5));
    assert_eq!(r["pss_solves"].as_integer(), Some(2));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(out.join("manifest.toml").exists());
}

#[test]
fn base_cases_report_each_pvi_and_best_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let case = write_case(tmp.path(), THREE_WELLS);
    let out = tmp.path().join("base");
    ok(&["base-cases", "--case", s(&case), "--out", s(&out), "--pvi", "0.25,0.75,1.25"]);
    let r = summary(&out);
    let cases = r["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 3);
    let npvs: Vec<f64> = cases.iter().map(|c| c["npv"].as_float().unwrap()).collect();
    let best = npvs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(r["best_npv"].as_float(), Some(best));
    assert!(r["best_q"].as_float().unwrap() > 0.0);
    assert_eq!(std::fs::read_to_string(out.join("base_cases.csv")).unwrap().lines().count(), 4);
}

#[test]
fn mads_restarts_summarize_spread() {
    let tmp = tempfile::tempdir().unwrap();
    let case = write_case(tmp.path(), THREE_WELLS);
    let out = tmp.path().join("mads");
    ok(&[
        "run-mads", "--case", s(&case), "--out", s(&out), "--restarts", "3", "--max-iter", "3", "--seed", "4",
    ]);
    let r = summary(&out);
    let (lo, med, hi) = (
        r["min_npv"].as_float().unwrap(),
        r["median_npv"].as_float().unwrap(),
        r["max_npv"].as_float().unwrap(),
    );
    assert!(lo <= med && med <= hi);
    assert_eq!(r["runs"].as_array().unwrap().len(), 3);
    for k in 0..3 {
        assert!(out.join(format!("history_{k}.csv")).exists());
    }
}

#[test]
fn chained_run_starts_from_two_step_result() {
    let tmp = tempfile::tempdir().unwrap();
    let case = write_case(tmp.path(), THREE_WELLS);
    let out = tmp.path().join("chain");
    ok(&[
        "run-st-mads", "--case", s(&case), "--out", s(&out), "--periods", "2", "--max-iter", "2", "--pvi-points",
        "5",
    ]);
    let r = summary(&out);
    let st = r["st"]["npv_star"].as_float().unwrap();
    assert!(r["refined_npv"].as_float().unwrap() >= st);
    assert_eq!(r["controls"].as_array().unwrap().len(), 2);
}

#[test]
fn simulate_reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let case = write_case(tmp.path(), THREE_WELLS);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        ok(&[
            "simulate", "--case", s(&case), "--out", s(out), "--ratios", "0.7,0.3,1.0", "--snapshots", "100",
        ]);
    }
    assert_eq!(summary(&a), summary(&b));
    assert_eq!(
        std::fs::read(a.join("steps.csv")).unwrap(),
        std::fs::read(b.join("steps.csv")).unwrap()
    );
    assert!(a.join("snapshot_100.csv").exists());
    let r = summary(&a);
    assert!(r["max_material_balance_error"].as_float().unwrap() < 1e-8);
}

#[test]
fn response_cache_is_reused() {
    let tmp = tempfile::tempdir().unwrap();
    let case = write_case(tmp.path(), THREE_WELLS);
    let out = tmp.path().join("resp");
    ok(&["build-response", "--case", s(&case), "--out", s(&out), "--columns"]);
    assert_eq!(summary(&out)["loaded_from_cache"].as_bool(), Some(false));
    assert!(out.join("velocity_P2.csv").exists());
    ok(&["build-response", "--case", s(&case), "--out", s(&out)]);
    assert_eq!(summary(&out)["loaded_from_cache"].as_bool(), Some(true));
}

#[test]
fn gen_perm_is_deterministic_and_loadable() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        ok(&["gen-perm", "--out", s(out), "--nx", "8", "--ny", "8", "--channels", "2", "--seed", "9"]);
    }
    let bytes = std::fs::read(a.join("perm.bin")).unwrap();
    assert_eq!(bytes, std::fs::read(b.join("perm.bin")).unwrap());
    assert_eq!(bytes.len(), 64 * 8);

    let case = tmp.path().join("case.toml");
    std::fs::write(&case, case_text(r#"{ file = "a/perm.bin" }"#, THREE_WELLS)).unwrap();
    let out = tmp.path().join("sim");
    ok(&["simulate", "--case", s(&case), "--out", s(&out)]);
    let manifest: toml::Table = std::fs::read_to_string(out.join("manifest.toml")).unwrap().parse().unwrap();
    let inputs = manifest["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 2);
    assert!(inputs[1]["path"].as_str().unwrap().ends_with("perm.bin"));
}

#[test]
fn failures_exit_nonzero_with_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    let out = run(&["run-st", "--case", s(&missing), "--out", s(&tmp.path().join("x"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("case:"));

    let case = write_case(tmp.path(), THREE_WELLS);
    let out = run(&[
        "run-st", "--case", s(&case), "--out", s(&tmp.path().join("y")), "--pvi-lo", "2", "--pvi-hi", "1",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("st:"));

    let out = run(&["gen-perm", "--out", s(&tmp.path().join("z")), "--nx", "0", "--ny", "4"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gen-perm:"));
}
