use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "n_folds = 2\nseeds2 = [1, 2]\n\
[synth]\nn_participants = 2\ndays_per_participant = 3\nagitation_day_fraction = 0.5\ntarget_prevalence = 0.03\n\
[grid]\nn_trees_options = [5, 10]\nn_predictors_options = [4]\n";

fn agitation(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agitation")).args(args).current_dir(cwd).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    std::fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_is_byte_deterministic_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    for out in ["a", "b"] {
        let o = agitation(&["synth", "--config", &cfg, "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["instances.csv", "annotations.csv", "manifest.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    let prevalence = manifest["realized_prevalence"].as_f64().unwrap();
    assert!(prevalence > 0.0 && prevalence < 0.1);
    let text = std::fs::read_to_string(dir.path().join("a/instances.csv")).unwrap();
    assert!(text.starts_with(&format!("# config_hash={}", manifest["config_hash"].as_str().unwrap())));
}

#[test]
fn invalid_config_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.toml", "[synth]\nn_participants = 0\n");
    let o = agitation(&["synth", "--config", &bad], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(!stderr(&o).is_empty());
    let typo = write_config(dir.path(), "typo.toml", "n_fold = 2\n");
    let o = agitation(&["run", "--config", &typo], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_fold"), "{}", stderr(&o));
}

#[test]
fn unknown_strategy_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = agitation(&["run", "--strategy", "smote"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("smote"));
}

#[test]
fn missing_dataset_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "data.toml",
        "[data]\ninstances = \"nope.csv\"\nannotations = \"nope_ann.csv\"\n",
    );
    let o = agitation(&["run", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

fn write_scores(path: &Path, rows: &[(&str, u32, f64, u8)]) {
    let mut text = String::from("participant_id,date,minute_index,score,label\n");
    for (p, m, s, l) in rows {
        text += &format!("{p},2024-01-01,{m},{s},{l}\n");
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn single_threshold_sweep_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    write_scores(
        &dir.path().join("scores.csv"),
        &[("p1", 0, 0.2, 0), ("p1", 1, 0.7, 1), ("p1", 2, 0.6, 1), ("p1", 3, 0.1, 0)],
    );
    let o = agitation(&["sweep", "--scores", "scores.csv", "--threshold", "0.5", "--out", "s"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 2);
    assert!(data[1].starts_with("0.5,"));
}

#[test]
fn perfect_scores_peak_at_one_with_empty_range() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = Vec::new();
    let days = ["p1", "p2", "p3", "p4"];
    for (d, p) in days.iter().enumerate() {
        for m in 0..5 {
            let agitated = d % 2 == 0 && m >= 2;
            rows.push((*p, m, if agitated { 0.9 } else { 0.1 }, agitated as u8));
        }
    }
    write_scores(&dir.path().join("scores.csv"), &rows);
    let o = agitation(&["sweep", "--scores", "scores.csv", "--out", "s"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("s/sweep.json")).unwrap()).unwrap();
    assert_eq!(summary["best_original"]["original"]["f1"].as_f64(), Some(1.0));
    assert_eq!(summary["best_ccr"]["ccr"]["f1"].as_f64(), Some(1.0));
    assert!(summary["effective_range"]["range"].is_null());
}

#[test]
fn run_rerun_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", &format!(
            "strategy = \"rus\"\nproportions = [0.5, 1.0]\n{}",
            TINY.replace("n_participants = 2\ndays_per_participant = 3", "n_participants = 3\ndays_per_participant = 4")
        ));
    let o = agitation(&["run", "--config", &cfg, "--out", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let first = std::fs::read_to_string(out.join("report_rus_p0.5.json")).unwrap();
    let index = std::fs::read_to_string(out.join("run_index.csv")).unwrap();
    assert_eq!(index.lines().count(), 3);
    let o = agitation(&["--threads", "2", "run", "--config", &cfg, "--out", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_to_string(out.join("report_rus_p0.5.json")).unwrap() == first);
    assert!(std::fs::read_to_string(out.join("run_index.csv")).unwrap() == index);
    let o = agitation(&["run", "--config", &cfg, "--out", "out", "--proportion", "0.5"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(out.join("run_index.csv")).unwrap().lines().count(), 4);

    let o = agitation(&["report", "--dir", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.lines().nth(1).unwrap().starts_with("rus_p0.5,rus,0.5,"));
    assert!(out.join("timing_summary.csv").exists());
}

#[test]
fn features_from_frames_match_synth_labels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let o = agitation(&["synth", "--config", &cfg, "--out", "syn", "--frames"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = agitation(
        &["features", "--frames", "syn/frames", "--annotations", "syn/annotations.csv", "--out", "feat.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let labels = |p: &str| -> Vec<String> {
        std::fs::read_to_string(dir.path().join(p))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split(',').take(4).collect::<Vec<_>>().join(","))
            .collect()
    };
    assert_eq!(labels("feat.csv"), labels("syn/instances.csv"));
    assert!(dir.path().join("feat_annotations.csv").exists());
}
