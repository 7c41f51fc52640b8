use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::flow::{FlowField, LabelKind};
use crate::losses::LossConfig;
use crate::model::{init_params, predict, Checkpoint, CheckpointMeta, ModelConfig};
use crate::synth::{build_splits, DatasetSplits, SceneParams, SplitConfig, SplitSizes};
use crate::train::{NoObserver, Sequential, StepMetrics, TrainConfig, TrainObserver};

#[test]
fn folds_partition_the_labeled_set() {
    let folds = fold_partition(50, 5).unwrap();
    assert!(folds.iter().all(|f| f.held_out.len() == 10 && f.train.len() == 40));
    let folds = fold_partition(53, 5).unwrap();
    assert_eq!(folds[4].held_out.len(), 13);
    let mut seen = vec![0usize; 53];
    for f in &folds {
        for &i in &f.held_out {
            seen[i] += 1;
            assert!(!f.train.contains(&i));
        }
        assert_eq!(f.train.len() + f.held_out.len(), 53);
    }
    assert!(seen.iter().all(|&c| c == 1));
    assert!(fold_partition(4, 5).is_err());
    assert!(fold_partition(10, 1).is_err());
}

#[test]
fn evaluation_grid() {
    let s = eval_steps(50, 500);
    assert_eq!(s.len(), 11);
    assert_eq!((s[0], s[10]), (0, 500));
    assert_eq!(eval_steps(50, 120), vec![0, 50, 100]);
    assert_eq!(eval_steps(50, 0), vec![0]);
}

fn bowl(step: usize, fold: usize) -> f64 {
    let d = step as f64 - 150.0;
    5.0 + fold as f64 * 0.3 + d * d * 1e-4 * (1.0 + fold as f64 * 0.1)
}

#[test]
fn injected_curves_select_their_common_minimum() {
    let (report, _) = kfold_cv_with(&Sequential, 50, 5, 50, 500, |fold, steps| {
        assert_eq!(fold.held_out.len(), 10);
        Ok(FoldCurve { f1: steps.iter().map(|&s| bowl(s, fold.index)).collect(), log: Vec::new() })
    })
    .unwrap();
    assert_eq!(report.best_step, 150);
    assert_eq!(report.curves.len(), 5);
    let mean3: f64 = (0..5).map(|j| bowl(150, j)).sum::<f64>() / 5.0;
    assert_eq!(report.best_mean(), mean3);
    let mut all: Vec<usize> = report.folds.iter().flat_map(|f| f.held_out.clone()).collect();
    all.sort_unstable();
    assert_eq!(all, (0..50).collect::<Vec<_>>());
}

#[test]
fn ties_prefer_the_earliest_step() {
    let folds = fold_partition(4, 2).unwrap();
    let r = CvReport::from_curves(vec![0, 10, 20, 30], folds, vec![vec![3.0, 1.0, 2.0, 1.0], vec![3.0, 2.0, 1.0, 2.0]])
        .unwrap();
    assert_eq!(r.mean, vec![3.0, 1.5, 1.5, 1.5]);
    assert_eq!(r.best_step, 10);
    let folds = fold_partition(4, 2).unwrap();
    assert!(CvReport::from_curves(vec![0, 10], folds, vec![vec![1.0], vec![1.0, 2.0]]).is_err());
}

#[test]
fn in_frame_and_consistency_masks() {
    let mut f = FlowField::zeros(4, 1);
    f.set(0, 0, -0.5, 0.0);
    f.set(1, 0, 2.0, 0.0);
    f.set(2, 0, 1.0, 0.0);
    f.set(3, 0, 0.0, 0.0);
    assert_eq!(in_frame_mask(&f).data, vec![false, true, true, true]);

    let fwd = FlowField::constant(6, 6, 1.0, 0.0);
    let back = FlowField::constant(6, 6, -1.0, 0.0);
    let m = consistency_mask(&fwd, &back);
    assert!((0..6).all(|y| m.get(4, y) && !m.get(5, y)));
    let far = FlowField::constant(6, 6, 3.0, 0.0);
    let m = consistency_mask(&far, &FlowField::zeros(6, 6));
    assert_eq!(m.count(), 0);
}

fn tiny_splits() -> DatasetSplits {
    let scene = SceneParams { width: 16, height: 16, background_translation: 2.0, object_translation: 3.0, ..SceneParams::default() };
    let cfg = SplitConfig {
        root_seed: 11,
        sizes: SplitSizes { source: 4, target_train: 6, target_unlabeled: 3, target_test: 2 },
        scene,
        ..SplitConfig::default()
    };
    build_splits(&cfg).unwrap()
}

fn tiny_ckpt(seed: u64, coord: bool, weight: f32) -> Checkpoint {
    let model = ModelConfig { coord_encoding: coord, detach_flow: true, ..ModelConfig::tiny() };
    Checkpoint {
        meta: CheckpointMeta { model, contrastive_weight: weight, step: 0, tag: "init".into() },
        params: init_params(&model, seed),
    }
}

fn tiny_config() -> SslConfig {
    let t = TrainConfig { batch_size: 1, total_steps: 0, ..TrainConfig::default() };
    SslConfig {
        iterations: 2,
        unlabeled_steps: 4,
        folds: 3,
        eval_interval: 2,
        finetune_cap: 4,
        unlabeled: t,
        finetune: TrainConfig { learning_rate: 1e-4, ..t },
        ..SslConfig::default()
    }
}

#[test]
fn pseudo_labels_are_the_master_prediction() {
    let splits = tiny_splits();
    let master = tiny_ckpt(3, false, 0.0);
    let labels = generate_pseudo_labels(&Sequential, &master, &splits.target_unlabeled, false).unwrap();
    assert_eq!(labels.len(), splits.target_unlabeled.len());
    for (l, p) in labels.iter().zip(&splits.target_unlabeled) {
        let f = predict(&master.meta.model, &master.params, &p.image1, &p.image2).unwrap();
        assert_eq!(l.flow, f);
        assert_eq!(l.mask, in_frame_mask(&f));
        assert_eq!(l.label, LabelKind::Pseudo);
    }
    let again = generate_pseudo_labels(&Sequential, &master, &splits.target_unlabeled, false).unwrap();
    assert_eq!(labels, again);
}

struct Count(usize, usize);

impl TrainObserver for Count {
    fn on_step(&mut self, _: &StepMetrics) -> Result<(), crate::Error> {
        self.0 += 1;
        Ok(())
    }

    fn on_checkpoint(&mut self, _: usize, _: &crate::model::Params<f32>) -> Result<(), crate::Error> {
        self.1 += 1;
        Ok(())
    }
}

#[test]
fn phase_step_contracts() {
    let splits = tiny_splits();
    let init = tiny_ckpt(5, true, 0.1);
    let pseudo = generate_pseudo_labels(&Sequential, &tiny_ckpt(3, false, 0.0), &splits.target_unlabeled, false).unwrap();
    let cfg = TrainConfig { batch_size: 1, ..TrainConfig::default() };
    let loss = LossConfig::default();
    let same = train_unlabeled(&Sequential, &init, &pseudo, 0, 2, &cfg, &loss, "u", &mut NoObserver).unwrap();
    assert_eq!(same, init.params);
    let mut c = Count(0, 0);
    let moved = train_unlabeled(&Sequential, &init, &pseudo, 7, 2, &cfg, &loss, "u", &mut c).unwrap();
    assert_ne!(moved, init.params);
    assert_eq!((c.0, c.1), (7, 3));
    let same = finetune(&Sequential, &init, &splits.target_train, 0, &cfg, &loss, "f", &mut NoObserver).unwrap();
    assert_eq!(same, init.params);
    let mut c = Count(0, 0);
    finetune(&Sequential, &init, &splits.target_train, 5, &cfg, &loss, "f", &mut c).unwrap();
    assert_eq!(c.0, 5);
}

#[derive(Default)]
struct Record {
    masters: Vec<Checkpoint>,
    pseudo_runs: usize,
    held_out: Vec<Vec<usize>>,
    iterations: Vec<SslState>,
    steps: usize,
}

impl SslHooks for Record {
    fn on_pseudo_labels(&mut self, _: usize, _: &[crate::flow::LabeledPair]) -> Result<(), crate::Error> {
        self.pseudo_runs += 1;
        Ok(())
    }

    fn on_step(&mut self, _: usize, _: &StepMetrics) -> Result<(), crate::Error> {
        self.steps += 1;
        Ok(())
    }

    fn on_cv(&mut self, _: usize, r: &CvReport) -> Result<(), crate::Error> {
        self.held_out.extend(r.folds.iter().map(|f| f.held_out.clone()));
        Ok(())
    }

    fn on_iteration(&mut self, s: &SslState) -> Result<(), crate::Error> {
        self.masters.push(s.master.clone());
        self.iterations.push(s.clone());
        Ok(())
    }
}

fn tiny_run(cfg: &SslConfig, rec: &mut Record, resume: Option<SslState>) -> SslState {
    let splits = tiny_splits();
    let (bs, ours) = (tiny_ckpt(3, false, 0.0), tiny_ckpt(5, true, 0.1));
    let inputs = SslInputs {
        baseline: &bs,
        student_init: &ours,
        unlabeled: &splits.target_unlabeled,
        labeled: &splits.target_train,
        test: &splits.target_test,
    };
    run(&Sequential, &inputs, cfg, &LossConfig::default(), rec, resume).unwrap()
}

#[test]
fn one_iteration_uses_the_baseline_as_master() {
    let mut rec = Record::default();
    let state = tiny_run(&SslConfig { iterations: 1, ..tiny_config() }, &mut rec, None);
    assert_eq!(rec.pseudo_runs, 1);
    assert_eq!(state.iteration, 1);
    assert_eq!(state.history.len(), 1);
    let r = &state.history[0];
    assert!(r.finetune_steps <= 4 && r.finetune_steps % 2 == 0);
    // unlabeled steps + 3 folds x cap + chosen finetune steps
    assert_eq!(rec.steps, 4 + 3 * 4 + r.finetune_steps);
    assert_eq!(rec.held_out.len(), 3);
}

#[test]
fn iterations_chain_masters_and_resume() {
    let mut rec = Record::default();
    let cfg = SslConfig { ..tiny_config() };
    let state = tiny_run(&cfg, &mut rec, None);
    assert_eq!(state.iteration, 2);
    assert_eq!(rec.pseudo_runs, 2);
    assert_eq!(state.master, rec.masters[1]);
    assert_eq!(state.student.as_ref(), Some(&rec.masters[1]));

    // resuming after iteration 1 reproduces iteration 2 exactly
    let mut again = Record::default();
    let resumed = tiny_run(&cfg, &mut again, Some(rec.iterations[0].clone()));
    assert_eq!(again.pseudo_runs, 1);
    assert_eq!(resumed, state);
}

#[test]
fn stopping_rule_needs_a_gain() {
    let mut rec = Record::default();
    let cfg = SslConfig { iterations: 4, stop_epsilon: f64::INFINITY, ..tiny_config() };
    let state = tiny_run(&cfg, &mut rec, None);
    assert_eq!(state.iteration, 2);
    assert!(state.stopped);
    assert!(!state.history[0].stop && state.history[1].stop);
}
