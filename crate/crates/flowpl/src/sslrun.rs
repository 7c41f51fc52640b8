//! Run directory of the pseudo-labeling loop:
//!
//! ```text
//! config.toml  state.json  log.jsonl
//! iter_<i>/pseudo_labels/NNNNNN_{flow.bin,mask.png}
//! iter_<i>/ckpt_unlabeled/step_NNNNNN.ckpt
//! iter_<i>/cv/fold_<j>/{log.jsonl}  iter_<i>/cv/report.json
//! iter_<i>/ckpt_final.ckpt  iter_<i>/report.jsonl
//! ```
//!
//! `state.json` is rewritten at every phase boundary. Resuming restarts the
//! first incomplete iteration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use flowpl_core::flow::LabeledPair;
use flowpl_core::model::Checkpoint;
use flowpl_core::ssl::{CvReport, IterationReport, SslHooks, SslPhase, SslState};
use flowpl_core::train::StepMetrics;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io;
use crate::log::JsonLines;

pub const STATE_FILE: &str = "state.json";
pub const LOG_FILE: &str = "log.jsonl";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunState {
    pub teacher: String,
    pub student: String,
    /// Reports of completed iterations.
    pub history: Vec<IterationReport>,
    /// Iteration in progress and its completed phases.
    pub current: Option<(usize, Vec<SslPhase>)>,
    pub stopped: bool,
    pub finished: bool,
    /// Length of the log at the end of the last completed iteration.
    pub log_len: u64,
    /// SHA-256 of every checkpoint written, by relative path.
    pub checkpoints: BTreeMap<String, String>,
}

impl RunState {
    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join(STATE_FILE);
        serde_json::from_slice(&io::read_bytes(&p)?).map_err(|e| Error::data(&p, e))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("state serializes");
        crate::workdir::write_file(&dir.join(STATE_FILE), text.as_bytes(), true)
    }

    pub fn final_checkpoint(&self) -> Option<PathBuf> {
        self.history.last().map(|r| iter_dir(Path::new(""), r.iteration).join("ckpt_final.ckpt"))
    }
}

pub fn iter_dir(root: &Path, i: usize) -> PathBuf {
    root.join(format!("iter_{i}"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct StepRecord<'a> {
    iteration: usize,
    #[serde(flatten)]
    metrics: &'a StepMetrics,
}

#[derive(Serialize)]
struct EventRecord<'a, T: Serialize> {
    iteration: usize,
    event: &'a str,
    #[serde(flatten)]
    data: T,
}

/// Completion record; the report already carries the iteration.
#[derive(Serialize)]
struct Completed<'a> {
    event: &'a str,
    #[serde(flatten)]
    report: &'a IterationReport,
}

#[derive(Serialize)]
struct CvSummary {
    best_step: usize,
    val_f1: f64,
}

#[derive(Serialize)]
struct PseudoSummary {
    pairs: usize,
    valid_fraction: f64,
}

pub struct DirHooks {
    root: PathBuf,
    log: JsonLines,
    folds: BTreeMap<String, JsonLines>,
    pub state: RunState,
}

impl DirHooks {
    pub fn new(root: &Path, state: RunState) -> Result<Self> {
        Ok(Self { root: root.to_path_buf(), log: JsonLines::append(&root.join(LOG_FILE))?, folds: BTreeMap::new(), state })
    }

    fn write_ckpt(&mut self, rel: PathBuf, ckpt: &Checkpoint) -> Result<()> {
        let bytes = ckpt.encode()?;
        io::write_bytes(&self.root.join(&rel), &bytes)?;
        self.state.checkpoints.insert(rel.to_string_lossy().replace('\\', "/"), sha256_hex(&bytes));
        Ok(())
    }

    fn fold_log(&mut self, phase: &str) -> Result<Option<&mut JsonLines>> {
        // phases look like "iter1/cv/fold3"
        let Some((head, fold)) = phase.rsplit_once("/fold") else { return Ok(None) };
        let Some(i) = head.strip_prefix("iter").and_then(|h| h.strip_suffix("/cv")) else { return Ok(None) };
        if !self.folds.contains_key(phase) {
            let dir = self.root.join(format!("iter_{i}")).join("cv").join(format!("fold_{fold}"));
            io::create_dir(&dir)?;
            self.folds.insert(phase.to_string(), JsonLines::append(&dir.join(LOG_FILE))?);
        }
        Ok(self.folds.get_mut(phase))
    }
}

impl SslHooks for DirHooks {
    fn on_phase(&mut self, i: usize, phase: SslPhase) -> Result<(), flowpl_core::Error> {
        let res = (|| -> Result<()> {
            if phase == SslPhase::PseudoLabels {
                let dir = iter_dir(&self.root, i);
                if dir.exists() {
                    fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                }
                for sub in ["pseudo_labels", "ckpt_unlabeled", "cv"] {
                    io::create_dir(&dir.join(sub))?;
                }
                self.state.current = Some((i, Vec::new()));
            } else if let Some((_, done)) = &mut self.state.current {
                let prev = match phase {
                    SslPhase::Unlabeled => SslPhase::PseudoLabels,
                    SslPhase::CrossValidation => SslPhase::Unlabeled,
                    SslPhase::Finetune => SslPhase::CrossValidation,
                    _ => SslPhase::Finetune,
                };
                done.push(prev);
            }
            self.state.save(&self.root)
        })();
        res.map_err(store)
    }

    fn on_pseudo_labels(&mut self, i: usize, labels: &[LabeledPair]) -> Result<(), flowpl_core::Error> {
        let res = (|| -> Result<()> {
            let dir = iter_dir(&self.root, i).join("pseudo_labels");
            for (k, p) in labels.iter().enumerate() {
                io::write_raw_flow(&crate::dataset::entry(&dir, k, "flow.bin"), &p.flow)?;
                io::write_mask(&crate::dataset::entry(&dir, k, "mask.png"), &p.mask)?;
            }
            let kept: usize = labels.iter().map(|p| p.mask.count()).sum();
            let total: usize = labels.iter().map(|p| p.width() * p.height()).sum();
            let summary = PseudoSummary { pairs: labels.len(), valid_fraction: kept as f64 / total.max(1) as f64 };
            self.log.write(&EventRecord { iteration: i, event: "pseudo-labels", data: summary })
        })();
        res.map_err(store)
    }

    fn on_step(&mut self, i: usize, m: &StepMetrics) -> Result<(), flowpl_core::Error> {
        let rec = StepRecord { iteration: i, metrics: m };
        let res = (|| -> Result<()> {
            self.log.write(&rec)?;
            if let Some(f) = self.fold_log(&m.phase)? {
                f.write(m)?;
            }
            Ok(())
        })();
        res.map_err(store)
    }

    fn on_unlabeled_checkpoint(&mut self, i: usize, ckpt: &Checkpoint) -> Result<(), flowpl_core::Error> {
        let rel = PathBuf::from(format!("iter_{i}")).join("ckpt_unlabeled").join(format!("step_{:06}.ckpt", ckpt.meta.step));
        self.write_ckpt(rel, ckpt).map_err(store)
    }

    fn on_cv(&mut self, i: usize, report: &CvReport) -> Result<(), flowpl_core::Error> {
        let res = (|| -> Result<()> {
            self.folds.clear();
            let text = serde_json::to_string_pretty(report).expect("report serializes");
            io::write_bytes(&iter_dir(&self.root, i).join("cv").join("report.json"), text.as_bytes())?;
            let summary = CvSummary { best_step: report.best_step, val_f1: report.best_mean() };
            self.log.write(&EventRecord { iteration: i, event: "cv", data: summary })
        })();
        res.map_err(store)
    }

    fn on_iteration(&mut self, s: &SslState) -> Result<(), flowpl_core::Error> {
        let res = (|| -> Result<()> {
            let i = s.iteration;
            let student = s.student.as_ref().expect("completed iteration has a student");
            self.write_ckpt(PathBuf::from(format!("iter_{i}")).join("ckpt_final.ckpt"), student)?;
            let report = s.history.last().expect("completed iteration has a report");
            let line = serde_json::to_string(report).expect("report serializes") + "\n";
            io::write_bytes(&iter_dir(&self.root, i).join("report.jsonl"), line.as_bytes())?;
            self.log.write(&Completed { event: "iteration", report })?;
            self.state.history = s.history.clone();
            self.state.current = None;
            self.state.stopped = s.stopped;
            self.state.log_len = fs::metadata(self.root.join(LOG_FILE)).map_err(|e| Error::io(&self.root, e))?.len();
            self.state.save(&self.root)
        })();
        res.map_err(store)
    }
}

fn store(e: Error) -> flowpl_core::Error {
    match e {
        Error::Core(c) => c,
        other => flowpl_core::Error::Store(other.to_string()),
    }
}

/// Rebuilds the loop state from the last completed iteration and drops the
/// log lines and directories of anything after it.
pub fn prepare_resume(root: &Path, state: &mut RunState, student_init: &Checkpoint) -> Result<Option<SslState>> {
    let log = root.join(LOG_FILE);
    if log.exists() {
        let f = fs::OpenOptions::new().write(true).open(&log).map_err(|e| Error::io(&log, e))?;
        f.set_len(state.log_len).map_err(|e| Error::io(&log, e))?;
    }
    let done = state.history.len();
    if let Some((i, _)) = state.current.take() {
        let dir = iter_dir(root, i);
        if i > done && dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
    }
    state.checkpoints.retain(|k, _| {
        k.strip_prefix("iter_").and_then(|r| r.split('/').next()).and_then(|n| n.parse::<usize>().ok()).map_or(false, |n| n <= done)
    });
    if done == 0 {
        return Ok(None);
    }
    let last = io::read_checkpoint(&iter_dir(root, done).join("ckpt_final.ckpt"))?;
    Ok(Some(SslState {
        iteration: done,
        master: last.clone(),
        student_init: student_init.clone(),
        student: Some(last),
        finetune_steps: state.history.last().map(|r| r.finetune_steps),
        history: state.history.clone(),
        stopped: state.stopped,
    }))
}
