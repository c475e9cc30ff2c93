use std::path::Path;
use std::process::{Command, Output};

fn raddet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raddet")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn gradcheck_passes_with_exit_zero() {
    let out = raddet(&["gradcheck", "--seeds", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    for name in ["affine", "softmax_xent", "asp", "mfa", "radmfa", "just_difference", "baseline"] {
        assert!(text.lines().any(|l| l.starts_with(name) && l.ends_with("PASS")), "{name}:\n{text}");
    }
    assert!(!text.contains("FAIL"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&raddet(&["frobnicate"])), 2);
    assert_eq!(code(&raddet(&["gradcheck", "--bogus"])), 2);
    assert_eq!(code(&raddet(&["synth", "--set", "tau=0"])), 2);
    assert_eq!(code(&raddet(&["synth", "--set", "no_such_key=1"])), 2);
}

#[test]
fn runtime_failures_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing.ckpt");
    let out = raddet(&["eval", "-w", tmp.path().to_str().unwrap(), "--checkpoint", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}

fn small(workdir: &Path) -> Vec<String> {
    let mut v = vec!["-w".to_string(), workdir.display().to_string()];
    for kv in [
        "n_speakers=4",
        "n_train=48",
        "n_dev=16",
        "n_eval=24",
        "n_extra=8",
        "layers=3",
        "dim=8",
        "epochs=1",
        "batch=16",
        "seeds=1",
        "taus=5,10",
    ] {
        v.push("--set".into());
        v.push(kv.into());
    }
    v
}

fn run_in(sub: &str, workdir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub.to_string()];
    args.extend(small(workdir));
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = raddet(&refs);
    assert_eq!(code(&out), 0, "{sub}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn stage_by_stage_run() {
    let tmp = tempfile::tempdir().unwrap();
    let w = tmp.path();
    run_in("synth", w, &[]);
    assert!(w.join("corpus/manifest.tsv").exists());
    run_in("extract", w, &[]);
    run_in("build-db", w, &[]);
    let summary = stdout(&run_in("retrieve", w, &["--queries", "5"]));
    assert!(summary.starts_with("layer\tmedian_same_speaker"));
    assert_eq!(std::fs::read_to_string(w.join("retrieve/hits.tsv")).unwrap().lines().count(), 1 + 5 * 3 * 10);

    // a train without a store is a configuration problem
    let mut args = vec!["train".to_string()];
    args.extend(small(w));
    args.extend(["--kind", "radmfa", "--store", "/nonexistent/store"].map(String::from));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(code(&raddet(&refs)), 2);

    run_in("train", w, &["--kind", "radmfa"]);
    let ckpt = w.join("train/radmfa-seed1/model.ckpt");
    assert!(ckpt.exists());
    let manifest = std::fs::read_to_string(w.join("train/radmfa-seed1/run_manifest.txt")).unwrap();
    assert!(manifest.contains("config_hash"));
    let out = run_in("eval", w, &["--checkpoint", ckpt.to_str().unwrap()]);
    assert!(stdout(&out).contains("24 scores"));
    let scores = std::fs::read_to_string(w.join("train/radmfa-seed1/eval-eval/scores.tsv")).unwrap();
    assert_eq!(scores.lines().count(), 24);
}

#[test]
fn ablation_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let w = tmp.path().join(run);
        let out = run_in("ablate", &w, &[]);
        let csv = std::fs::read_to_string(w.join("ablate/ablation.csv")).unwrap();
        assert_eq!(stdout(&out), csv);
        csvs.push(csv);
    }
    assert_eq!(csvs[0], csvs[1]);
    let variants: Vec<&str> = csvs[0].lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        variants,
        ["no_rad", "full", "no_extra_db", "just_difference", "tau_sweep", "tau_sweep"]
    );
}
