//! Behavior of the `hcap` binary as seen from a shell: exit codes, error
//! messages, manifests and the small commands the acceptance run skips.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcap"))
        .args(args)
        .env_remove("HCAP_LOG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, count: &str) -> std::path::PathBuf {
    let corpus = dir.join("corpus");
    let o = hcap(&[
        "synth",
        "--seed",
        "3",
        "--count",
        count,
        "--out",
        p(&corpus),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    corpus
}

#[test]
fn help_lists_every_subcommand() {
    let o = hcap(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for cmd in [
        "synth",
        "validate",
        "stats",
        "train",
        "infer",
        "eval",
        "gradcheck",
    ] {
        assert!(text.contains(cmd), "--help does not mention {cmd}:\n{text}");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = hcap(&["synth", "--sed", "3", "--out", "/tmp/never"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--sed"), "{}", stderr(&o));
    assert!(!Path::new("/tmp/never").exists());
}

#[test]
fn missing_input_fails_with_the_path() {
    let o = hcap(&["validate", "--annotations", "/nonexistent/annotations"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.starts_with("error: ") && err.contains("/nonexistent/annotations"),
        "{err}"
    );
}

#[test]
fn synth_refuses_a_corpus_too_small_to_split() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus");
    let o = hcap(&["synth", "--count", "2", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("empty subset"), "{}", stderr(&o));
    let o = hcap(&[
        "synth",
        "--count",
        "3",
        "--ratios",
        "0.34",
        "0.33",
        "0.33",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for subset in ["train", "val", "test"] {
        let ids = std::fs::read_to_string(out.join(format!("{subset}.txt"))).unwrap();
        assert_eq!(ids.lines().count(), 1, "{subset}: {ids}");
    }
}

#[test]
fn synth_writes_a_manifest_with_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), "6");
    let m: Value =
        serde_json::from_str(&std::fs::read_to_string(corpus.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["command"], "synth");
    assert_eq!(m["seed"], 3);
    let artifacts = m["artifacts"].as_object().unwrap();
    // Six videos with an annotation and two feature files each, plus
    // three split lists.
    assert_eq!(artifacts.len(), 6 * 3 + 3, "{artifacts:?}");
    assert!(artifacts
        .values()
        .all(|h| h.as_str().is_some_and(|h| h.len() == 64)));
    assert!(!artifacts.keys().any(|k| k.ends_with("manifest.json")));
}

#[test]
fn validate_flags_a_bad_file_and_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), "6");
    let ann = corpus.join("annotations");
    let o = hcap(&["validate", "--annotations", p(&ann)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    let first = std::fs::read_dir(&ann)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|f| f.extension().is_some_and(|e| e == "json"))
        .unwrap();
    let text = std::fs::read_to_string(&first).unwrap();
    std::fs::write(
        &first,
        text.replacen("\"frame_width\": ", "\"frame_width\": -", 1),
    )
    .unwrap();
    let o = hcap(&["validate", "--annotations", p(&ann)]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("error: frame_width: "), "{out}");
    assert!(out.contains("checked 6 files: 1 invalid"), "{out}");
}

#[test]
fn manifest_flag_redirects_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), "6");
    let target = dir.path().join("stats.manifest.json");
    let o = hcap(&[
        "--manifest",
        p(&target),
        "stats",
        "--json",
        "--annotations",
        p(&corpus.join("annotations")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stats: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(stats["videos"], 6);
    assert!(stats["captions"].as_u64().unwrap() >= 24);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(m["command"], "stats");
    assert_eq!(m["config"]["videos"], "6");
}

#[test]
fn train_rejects_an_unknown_config_key() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), "6");
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "preset = tiny\nlearning_rte = 1e-3\n").unwrap();
    let out = dir.path().join("m.hcpt");
    let o = hcap(&[
        "train",
        "--corpus",
        p(&corpus),
        "--config",
        p(&cfg),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.contains("learning_rte") && err.contains("bad.cfg"),
        "{err}"
    );
    assert!(!out.exists());
}

#[test]
fn eval_counts_a_missing_prediction_file_as_empty() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), "6");
    let preds = dir.path().join("predictions");
    std::fs::create_dir_all(&preds).unwrap();
    let json = dir.path().join("report.json");
    let o = hcap(&[
        "eval",
        "--predictions",
        p(&preds),
        "--annotations",
        p(&corpus.join("annotations")),
        "--json",
        p(&json),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["predictions"], 0);
    assert_eq!(report["soda_c"], 0.0);
    assert_eq!(report["matched"], serde_json::json!([0, 0, 0, 0]));
    let diagnostics = report["diagnostics"].as_array().unwrap();
    assert!(
        diagnostics.iter().any(|d| d
            .as_str()
            .unwrap()
            .starts_with("6 videos have no prediction file")),
        "{diagnostics:?}"
    );
    assert!(dir.path().join("report.json.manifest.json").exists());
}

#[test]
fn gradcheck_prints_one_row_per_kernel() {
    let o = hcap(&["gradcheck", "--trials", "2", "--seed", "1"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.lines().next().unwrap().starts_with("kernel"));
    assert!(out.contains("set_loss"));
    assert!(out.trim_end().ends_with("0 failed"), "{out}");
}
