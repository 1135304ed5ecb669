use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
  "vocab": {"n_subjects": 20, "n_relations": 2, "n_answers": 8},
  "train": {"pretrain_steps": 2000, "ft_epochs": 20, "ft_eval_every": 5},
  "seeds": [0]
}"#;

fn factlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_factlab")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn malformed_config_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"train": {"lrr": 0.1}}"#, "train.lrr"),
        (r#"{"split": {"fraction": "half"}}"#, "split.fraction"),
        (r#"{"zipf_alpha": -1}"#, "zipf_alpha"),
        (r#"{"seeds": [1,"#, "<document>"),
    ];
    for (i, (text, key)) in cases.iter().enumerate() {
        let cfg = dir.path().join(format!("bad{i}.json"));
        fs::write(&cfg, text).unwrap();
        let out = factlab(&["--config", path(&cfg), "--out", path(dir.path()), "sweep", "--experiment", "E1"]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(stderr(&out).contains(key), "{text}: {}", stderr(&out));
    }
    let missing = factlab(&["--config", "/nonexistent/cfg.json", "pretrain"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn verify_on_defaults_exits_0_with_verdict_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = factlab(&["--out", path(dir.path()), "verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<serde_json::Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines.len() > 20);
    for v in &lines {
        for key in ["name", "hypothesis_met", "conclusion_holds", "witness"] {
            assert!(v.get(key).is_some(), "{key} missing in {v}");
        }
    }
    assert_eq!(fs::read_to_string(dir.path().join("verify_verdicts.jsonl")).unwrap(), stdout);
}

#[test]
fn sweep_e1_with_seed_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = factlab(&["sweep", "--experiment", "E1", "--seed", "7", "--out", path(d.path())]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let mut csvs = 0;
    for entry in fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        let left = fs::read(a.path().join(&name)).unwrap();
        let right = fs::read(b.path().join(&name)).unwrap();
        assert_eq!(left, right, "{name:?} differs");
        csvs += usize::from(name.to_string_lossy().ends_with(".csv"));
    }
    assert_eq!(csvs, 4);
    assert!(a.path().join("e1_percentiles.svg").exists());
}

#[test]
fn gen_pretrain_finetune_eval_plot_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.json");
    fs::write(&cfg, TINY).unwrap();
    let out_dir = path(dir.path());
    let run = |args: &[&str]| {
        let mut full = vec!["--config", path(&cfg), "--out", out_dir];
        full.extend_from_slice(args);
        let o = factlab(&full);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
        String::from_utf8(o.stdout).unwrap()
    };

    run(&["gen"]);
    let facts = fs::read_to_string(dir.path().join("seed0_facts.tsv")).unwrap();
    assert_eq!(facts.lines().filter(|l| !l.starts_with('#')).count(), 40);
    assert!(dir.path().join("seed0_ft-bottom_ft.tsv").exists());

    assert!(run(&["pretrain"]).contains("pretrain accuracy"));
    let model = dir.path().join("seed0_pretrain.params");
    run(&["finetune", "--model", path(&model), "--strategy", "bottom"]);
    assert!(dir.path().join("seed0_ft-bottom.params").exists());

    let eval = run(&["eval", "--model", path(&dir.path().join("seed0_ft-bottom.params"))]);
    assert!(eval.contains("held-out downstream accuracy"));
    let csv = fs::read_to_string(dir.path().join("eval_percentiles.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);

    run(&["plot", path(&dir.path().join("eval_percentiles.csv"))]);
    assert!(dir.path().join("eval_percentiles.svg").exists());
    run(&["plot", path(&dir.path().join("seed0_ft-bottom_traces.csv"))]);
    for panel in ["accuracy", "subject_attention", "relation_attention"] {
        assert!(dir.path().join(format!("seed0_ft-bottom_traces_{panel}.svg")).exists());
    }
}

#[test]
fn plot_rejects_unknown_tables_and_run_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("x.csv");
    fs::write(&bad, "a,b\n1,2\n").unwrap();
    assert_eq!(factlab(&["--out", path(dir.path()), "plot", path(&bad)]).status.code(), Some(1));
    let missing = factlab(&["--out", path(dir.path()), "eval", "--model", "/nonexistent.params"]);
    assert_eq!(missing.status.code(), Some(1));
}
