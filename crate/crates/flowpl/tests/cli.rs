use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use flowpl::cli::EvalReport;
use flowpl::dataset;
use flowpl::sslrun::RunState;
use flowpl_core::flow::LabeledPair;
use flowpl_core::ssl::SslPhase;
use flowpl_core::synth::SplitRole;
use flowpl_core::train::{evaluate, Sequential};
use tempfile::TempDir;

const SMALL_DATA: [&str; 9] =
    ["gen-data", "--source", "4", "--target-train", "6", "--target-unlabeled", "3", "--target-test", "3"];
const SMALL_SSL: [&str; 8] = ["--unlabeled-steps", "4", "--folds", "2", "--eval-interval", "2", "--finetune-cap", "4"];

fn flowpl(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowpl"))
        .args(args)
        .env("FLOWPL_RUN_ROOT", root)
        .output()
        .expect("spawn flowpl")
}

#[track_caller]
fn ok(out: Output) -> Output {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small dataset and pretrained checkpoints shared by the slower tests.
fn fixture() -> &'static Path {
    static ROOT: OnceLock<TempDir> = OnceLock::new();
    ROOT.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        ok(flowpl(dir.path(), &SMALL_DATA));
        ok(flowpl(dir.path(), &["pretrain", "--steps", "4"]));
        dir
    })
    .path()
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_data_is_byte_identical_across_runs() {
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    let b = root.path().join("b");
    for out in [&a, &b] {
        let mut args = SMALL_DATA.to_vec();
        args.extend(["--out", s(out)]);
        ok(flowpl(root.path(), &args));
    }
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.len() > 10);
    assert!(ta == tb);
}

#[test]
fn flags_override_file_override_defaults() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("run.toml");
    std::fs::write(&cfg, "[data.sizes]\nsource = 3\ntarget_test = 2\n").unwrap();
    let sized = |extra: &[&str], name: &str| {
        let out = root.path().join(name);
        let mut args = vec!["gen-data", "--config", s(&cfg), "--out", s(&out)];
        args.extend(extra);
        ok(flowpl(root.path(), &args));
        dataset::read_manifest(&out).unwrap().config.sizes
    };
    let from_file = sized(&[], "file");
    assert_eq!((from_file.source, from_file.target_test), (3, 2));
    assert_eq!(from_file.target_train, 50);
    let flagged = sized(&["--source", "5"], "flag");
    assert_eq!((flagged.source, flagged.target_test), (5, 2));
}

#[test]
fn run_root_flag_beats_environment() {
    let env_root = tempfile::tempdir().unwrap();
    let flag_root = tempfile::tempdir().unwrap();
    let mut args = SMALL_DATA.to_vec();
    args.extend(["--run-root", s(flag_root.path())]);
    ok(flowpl(env_root.path(), &args));
    assert!(flag_root.path().join("data/manifest.json").exists());
    assert!(!env_root.path().join("data").exists());
}

#[test]
fn existing_output_needs_force() {
    let root = tempfile::tempdir().unwrap();
    ok(flowpl(root.path(), &SMALL_DATA));
    let refused = flowpl(root.path(), &SMALL_DATA);
    assert_eq!(code(&refused), 1);
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--force"));
    let mut args = SMALL_DATA.to_vec();
    args.push("--force");
    ok(flowpl(root.path(), &args));
}

#[test]
fn exit_codes_by_failure_kind() {
    let root = tempfile::tempdir().unwrap();
    let r = root.path();
    assert_eq!(code(&flowpl(r, &["gen-data", "--bogus"])), 1);
    assert_eq!(code(&flowpl(r, &["--threads", "0", "gen-data"])), 1);
    let cfg = r.join("bad.toml");
    std::fs::write(&cfg, "[model]\nno_such_key = 1\n").unwrap();
    assert_eq!(code(&flowpl(r, &["gen-data", "--config", s(&cfg)])), 1);
    assert_eq!(code(&flowpl(r, &["pretrain", "--data", s(&r.join("missing"))])), 2);
    assert_eq!(code(&flowpl(r, &["eval", "--checkpoint", s(&r.join("none.ckpt"))])), 2);
    assert_eq!(code(&flowpl(r, &["--help"])), 0);
}

#[test]
fn diverging_training_exits_with_three() {
    let f = fixture();
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().join("p");
    let o = flowpl(f, &["pretrain", "--steps", "20", "--lr", "1e30", "--variants", "baseline", "--out", s(&dir)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.exists());
}

#[test]
fn eval_json_matches_the_library() {
    let f = fixture();
    let ckpt = f.join("pretrain/baseline.ckpt");
    let out = ok(flowpl(f, &["eval", "--checkpoint", s(&ckpt), "--json"]));
    let report: EvalReport = serde_json::from_slice(&out.stdout).unwrap();
    let pairs = dataset::read_labeled(&f.join("data"), SplitRole::TargetTest, 3).unwrap();
    let refs: Vec<&LabeledPair> = pairs.iter().collect();
    let c = flowpl::io::read_checkpoint(&ckpt).unwrap();
    let e = evaluate(&Sequential, &c.meta.model, &c.params, &refs).unwrap();
    let row = &report.checkpoints[0];
    assert_eq!(row.epe, e.stats.epe().unwrap());
    assert_eq!(row.f1_all, e.stats.f1_all().unwrap());
    assert_eq!(row.pairs.len(), 3);
    for (r, p) in row.pairs.iter().zip(&e.per_pair) {
        assert_eq!(r.epe, p.epe().unwrap());
    }
}

#[test]
fn iteration_flag_bounds_the_loop() {
    let f = fixture();
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().join("one");
    let mut args = vec!["ssl-run", "--iterations", "1", "--out", s(&dir)];
    args.extend(SMALL_SSL);
    ok(flowpl(f, &args));
    let state = RunState::load(&dir).unwrap();
    assert_eq!(state.history.len(), 1);
    assert!(state.finished);
    assert!(dir.join("iter_1/ckpt_final.ckpt").exists());
    assert!(!dir.join("iter_2").exists());
    assert!(dir.join("config.toml").exists());
}

/// End of the log line recording the completion of `iteration`.
fn log_end_of(log: &[u8], iteration: usize) -> u64 {
    let mut end = 0;
    for line in log.split_inclusive(|&b| b == b'\n') {
        end += line.len();
        let v: serde_json::Value = serde_json::from_slice(line).unwrap();
        if v["event"] == "iteration" && v["iteration"] == iteration {
            return end as u64;
        }
    }
    panic!("no completion record for iteration {iteration}");
}

#[test]
fn resume_after_interruption_matches_uninterrupted_run() {
    let f = fixture();
    let out = tempfile::tempdir().unwrap();
    let full = out.path().join("full");
    let resumed = out.path().join("resumed");
    let mut args = vec!["ssl-run", "--iterations", "2", "--out", s(&full)];
    args.extend(SMALL_SSL);
    ok(flowpl(f, &args));
    let complete = RunState::load(&full).unwrap();
    assert_eq!(complete.history.len(), 2, "stopping rule fired early; pick another seed");

    // Leave a staging dir as if the process died during the second iteration.
    let staging = out.path().join("resumed.tmp");
    for (rel, bytes) in tree(&full) {
        let p = staging.join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, bytes).unwrap();
    }
    std::fs::remove_file(staging.join("iter_2/ckpt_final.ckpt")).unwrap();
    let mut state = complete.clone();
    state.history.truncate(1);
    state.current = Some((2, vec![SslPhase::PseudoLabels, SslPhase::Unlabeled]));
    state.stopped = false;
    state.finished = false;
    state.log_len = log_end_of(&std::fs::read(full.join("log.jsonl")).unwrap(), 1);
    state.save(&staging).unwrap();

    let mut args = vec!["ssl-run", "--iterations", "2", "--resume", "--out", s(&resumed)];
    args.extend(SMALL_SSL);
    ok(flowpl(f, &args));
    assert!(!staging.exists());
    assert_eq!(RunState::load(&resumed).unwrap(), complete);
    assert!(tree(&full) == tree(&resumed));
}

#[test]
fn resume_refuses_a_different_config() {
    let f = fixture();
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().join("run");
    let mut args = vec!["ssl-run", "--iterations", "1", "--out", s(&dir)];
    args.extend(SMALL_SSL);
    ok(flowpl(f, &args));
    std::fs::rename(&dir, out.path().join("run.tmp")).unwrap();
    let mut args = vec!["ssl-run", "--iterations", "1", "--resume", "--out", s(&dir), "--seed", "9"];
    args.extend(SMALL_SSL);
    assert_eq!(code(&flowpl(f, &args)), 1);
}
