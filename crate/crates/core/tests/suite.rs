//! Small end-to-end suite runs.

use std::path::Path;

use expertforge::runner::{read_results, report, run_suite_config, write_suite_outputs, SuiteConfig};

const SUITE: &str = r#"
seeds = [0, 1]

[[datasets]]
name = "small"
preset = "two-regime"
num_nodes = 300

[[datasets]]
name = "small-dir"
preset = "digraph-coupled"
num_nodes = 300

[[strategies]]
name = "single"
category = "REINIT"
datasets = ["small"]
base = { depth = 1, hidden_dim = 8, epochs = 20 }
perturbation = { kind = "seeds", count = 1 }

[[strategies]]
name = "width"
category = "HPARAM"
base = { depth = 1, hidden_dim = 8, epochs = 20 }
perturbation = { kind = "hidden-dim", values = [4, 8, 16] }

[[strategies]]
name = "dir"
category = "DIRECT"
datasets = ["small-dir"]
base = { depth = 1, hidden_dim = 8, epochs = 20, filter = "rw" }
perturbation = { kind = "direction", undirected = "sym" }
"#;

fn run_to(dir: &Path) -> Vec<u8> {
    let cfg = SuiteConfig::from_toml(SUITE).unwrap();
    let records = run_suite_config(&cfg, Path::new("."), Some(2)).unwrap();
    write_suite_outputs(&records, dir).unwrap();
    std::fs::read(dir.join("results.csv")).unwrap()
}

#[test]
fn suite_is_replayable_and_filtered() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_to(&tmp.path().join("a"));
    let b = run_to(&tmp.path().join("b"));
    assert_eq!(a, b);

    let (rows, _, _) = read_results(&tmp.path().join("a/results.csv")).unwrap();
    // single: 1 dataset, width: 2, dir: 1; two seeds each
    assert_eq!(rows.len(), 8);
    let keys: Vec<_> = rows.iter().map(|r| (r.dataset.as_str(), r.strategy.as_str(), r.seed)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);

    for r in rows.iter().filter(|r| r.strategy == "single") {
        assert_eq!(r.num_experts, 1);
        assert_eq!(r.set_ei, None);
        assert_eq!(r.oracle, r.max_expert_acc);
        assert_eq!(r.cg, 0.0);
    }
    assert!(rows.iter().all(|r| r.strategy != "dir" || r.dataset == "small-dir"));

    let s = report(&tmp.path().join("a/results.csv"), &tmp.path().join("rep")).unwrap();
    assert_eq!(s.rows_used, 8);
    for f in ["scatter.svg", "ei_boxplot.svg", "tables.md", "report.json"] {
        assert!(tmp.path().join("rep").join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("a/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["num_runs"], 8);
}

#[test]
fn adding_a_strategy_keeps_existing_rows() {
    let extra = format!(
        "{SUITE}\n[[strategies]]\nname = \"aaa\"\ncategory = \"REINIT\"\ndatasets = [\"small\"]\nbase = {{ depth = 0, filter = \"identity\", hidden_dim = 8, epochs = 5 }}\nperturbation = {{ kind = \"seeds\", count = 2 }}\n"
    );
    let base = SuiteConfig::from_toml(SUITE).unwrap();
    let more = SuiteConfig::from_toml(&extra).unwrap();
    let r1 = run_suite_config(&base, Path::new("."), None).unwrap();
    let r2 = run_suite_config(&more, Path::new("."), None).unwrap();
    let kept: Vec<_> = r2.iter().filter(|r| r.strategy != "aaa").collect();
    assert_eq!(kept.len(), r1.len());
    for (a, b) in r1.iter().zip(kept) {
        assert_eq!(a.run_seed, b.run_seed);
        assert_eq!(a.report.expert_accuracies, b.report.expert_accuracies);
        assert_eq!(a.report.set_ei, b.report.set_ei);
    }
}

#[test]
fn bad_suites_are_config_errors() {
    let unknown = SUITE.replace("datasets = [\"small-dir\"]", "datasets = [\"nope\"]");
    let e = SuiteConfig::from_toml(&unknown).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("unknown dataset nope"));

    let undirected = SUITE.replace("datasets = [\"small-dir\"]", "datasets = [\"small\"]");
    let cfg = SuiteConfig::from_toml(&undirected).unwrap();
    let e = run_suite_config(&cfg, Path::new("."), None).unwrap_err();
    assert_eq!(e.exit_code(), 2);

    let e = SuiteConfig::from_toml("seeds = [0]\n[[datasets]]\nname = \"x\"\npreset = \"two-regime\"\nbogus = 1\n").unwrap_err();
    assert_eq!(e.exit_code(), 2);
}
