use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use flowpl_core::audit::grad_audit;
use flowpl_core::flow::{flow_to_color, Image, LabeledPair};
use flowpl_core::losses::LossConfig;
use flowpl_core::model::{init_params, predict};
use flowpl_core::seed::sub_seed;
use flowpl_core::ssl::{self, kfold_cv, SslInputs};
use flowpl_core::synth::{build_splits, SplitRole};
use flowpl_core::train::{evaluate, pretrain_variant, probe_loss, StepMetrics, TrainObserver, Variant};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, CONFIG_FILE};
use crate::dataset;
use crate::error::{Error, Result, EXIT_OK, EXIT_USAGE};
use crate::exec::Pool;
use crate::io;
use crate::log::JsonLines;
use crate::sslrun::{prepare_resume, DirHooks, RunState, LOG_FILE};
use crate::workdir::{write_file, Staging};

#[derive(Debug, Parser)]
#[command(name = "flowpl", version, about = "Optical flow with iterative pseudo labeling")]
pub struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Parent of default inputs and outputs.
    #[arg(long, global = true, env = crate::config::RUN_ROOT_ENV)]
    pub run_root: Option<PathBuf>,
    /// Worker threads; 1 runs everything on the main thread.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Replace complete outputs.
    #[arg(long, global = true)]
    pub force: bool,
    /// Root seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the source and target splits.
    GenData(GenData),
    /// Train the baseline and contrastive models on source plus labeled target pairs.
    Pretrain(Pretrain),
    /// Run the pseudo-labeling loop.
    SslRun(SslRun),
    /// Cross-validate the finetuning length of a checkpoint.
    Cv(Cv),
    /// Score checkpoints on a split or summarize pseudo-labeling runs.
    Eval(Eval),
    /// Write flow-color and error images.
    Viz(Viz),
    /// Finite-difference check of every differentiable operation.
    GradAudit,
}

#[derive(Debug, Args)]
pub struct GenData {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub source: Option<usize>,
    #[arg(long)]
    pub target_train: Option<usize>,
    #[arg(long)]
    pub target_unlabeled: Option<usize>,
    #[arg(long)]
    pub target_test: Option<usize>,
    /// Square frame side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Pretrain {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Comma-separated: baseline, coord, coord-contrastive.
    #[arg(long, value_delimiter = ',', default_value = "baseline,coord-contrastive")]
    pub variants: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SslRun {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory of `pretrain`.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    /// Variant labeling the first iteration.
    #[arg(long, default_value = "baseline")]
    pub teacher: String,
    /// Variant every student restarts from.
    #[arg(long, default_value = "coord-contrastive")]
    pub student: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub unlabeled_steps: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long)]
    pub finetune_cap: Option<usize>,
    /// Continue a partial run from its last completed iteration.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct Cv {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long)]
    pub finetune_cap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Eval {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long, default_value = "target-test")]
    pub split: String,
    /// Pseudo-labeling run directories to summarize.
    #[arg(long)]
    pub ssl_run: Vec<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Viz {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "target-test")]
    pub split: String,
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = &cli.run_root {
        cfg.paths.run_root = r.clone();
    }
    Ok(cfg)
}

fn finish_config(mut cfg: RunConfig) -> Result<RunConfig> {
    cfg.resolve_seeds();
    cfg.validate()?;
    Ok(cfg)
}

fn write_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    io::write_bytes(&dir.join(CONFIG_FILE), cfg.to_toml().as_bytes())
}

pub fn parse_variant(name: &str) -> Result<Variant> {
    Variant::ALL
        .into_iter()
        .find(|v| v.name() == name)
        .ok_or_else(|| Error::Usage(format!("unknown variant `{name}`")))
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = base_config(&cli)?;
    let pool = Pool::new(cli.threads)?;
    match &cli.command {
        Command::GenData(a) => gen_data(&cli, cfg, a),
        Command::Pretrain(a) => pretrain(&cli, &pool, cfg, a),
        Command::SslRun(a) => ssl_run(&cli, &pool, cfg, a),
        Command::Cv(a) => cv(&cli, &pool, cfg, a),
        Command::Eval(a) => eval(&cli, &pool, cfg, a),
        Command::Viz(a) => viz(&cli, cfg, a),
        Command::GradAudit => audit(cfg),
    }
}

fn gen_data(cli: &Cli, mut cfg: RunConfig, a: &GenData) -> Result<()> {
    let sizes = &mut cfg.data.sizes;
    for (dst, src) in [
        (&mut sizes.source, a.source),
        (&mut sizes.target_train, a.target_train),
        (&mut sizes.target_unlabeled, a.target_unlabeled),
        (&mut sizes.target_test, a.target_test),
    ] {
        if let Some(n) = src {
            *dst = n;
        }
    }
    if let Some(s) = a.size {
        cfg.data.scene.width = s;
        cfg.data.scene.height = s;
    }
    let cfg = finish_config(cfg)?;
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.data_dir());
    let stage = Staging::begin(&out, cli.force, false)?;
    write_config(stage.dir(), &cfg)?;
    let splits = build_splits(&cfg.data)?;
    dataset::write_dataset(stage.dir(), &splits)?;
    let out = stage.commit()?;
    eprintln!("wrote {} pairs to {}", splits.source.len() + splits.target_train.len() + splits.target_unlabeled.len() + splits.target_test.len(), out.display());
    Ok(())
}

fn data_dir(cfg: &RunConfig, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone().unwrap_or_else(|| cfg.paths.data_dir())
}

fn check_frames(cfg: &RunConfig, data: &flowpl_core::synth::DatasetSplits) -> Result<()> {
    let s = &data.config.scene;
    cfg.model.check_input(s.width, s.height)?;
    Ok(())
}

struct LogObserver<'a> {
    log: &'a mut JsonLines,
    started: Instant,
    every: usize,
}

impl TrainObserver for LogObserver<'_> {
    fn on_step(&mut self, m: &StepMetrics) -> Result<(), flowpl_core::Error> {
        if self.every > 0 && m.step % self.every == 0 {
            eprintln!("{} step {} loss {:.4} ({:.0?})", m.phase, m.step, m.loss, self.started.elapsed());
        }
        self.log.write(m).map_err(|e| flowpl_core::Error::Store(e.to_string()))
    }
}

/// Per-variant outcome written to `summary.json` by `pretrain`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub variant: String,
    /// Mean loss on the first training pairs before and after training.
    pub probe_loss_initial: f64,
    pub probe_loss_final: f64,
    pub test_epe: f64,
    pub test_f1_all: f64,
}

const PROBE_PAIRS: usize = 4;

fn pretrain(cli: &Cli, pool: &Pool, mut cfg: RunConfig, a: &Pretrain) -> Result<()> {
    if let Some(s) = a.steps {
        cfg.pretrain.total_steps = s;
    }
    if let Some(lr) = a.lr {
        cfg.pretrain.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        cfg.pretrain.batch_size = b;
    }
    let cfg = finish_config(cfg)?;
    let variants = a.variants.iter().map(|v| parse_variant(v)).collect::<Result<Vec<_>>>()?;
    let data_root = data_dir(&cfg, &a.data);
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.resolve(Path::new("pretrain")));
    let stage = Staging::begin(&out, cli.force, false)?;
    write_config(stage.dir(), &cfg)?;

    let data = dataset::read_dataset(&data_root)?;
    check_frames(&cfg, &data)?;
    let train: Vec<&LabeledPair> = data.source.iter().chain(&data.target_train).collect();
    let probe = &train[..PROBE_PAIRS.min(train.len())];
    let test: Vec<&LabeledPair> = data.target_test.iter().collect();
    let mut log = JsonLines::append(&stage.dir().join(LOG_FILE))?;
    let mut summaries = Vec::new();
    for v in variants {
        let started = Instant::now();
        let model = v.model(&cfg.model);
        let loss = v.loss(&cfg.loss);
        let init = init_params(&model, cfg.init_seed());
        let initial = probe_loss(pool, &model, &init, probe, &loss)?;
        let mut obs = LogObserver { log: &mut log, started, every: 100 };
        let ckpt = pretrain_variant(pool, v, &cfg.model, &cfg.loss, &train, &cfg.pretrain, cfg.init_seed(), &mut obs)?;
        io::write_checkpoint(&stage.dir().join(format!("{}.ckpt", v.name())), &ckpt)?;
        let eval = evaluate(pool, &model, &ckpt.params, &test)?;
        summaries.push(PretrainSummary {
            variant: v.name().into(),
            probe_loss_initial: initial,
            probe_loss_final: probe_loss(pool, &model, &ckpt.params, probe, &loss)?,
            test_epe: eval.stats.epe()?,
            test_f1_all: eval.stats.f1_all()?,
        });
        eprintln!("{}: test EPE {:.3}, F1-all {:.2}% ({:.0?})", v.name(), eval.epe(), eval.f1_all(), started.elapsed());
    }
    let text = serde_json::to_string_pretty(&summaries).expect("summary serializes");
    io::write_bytes(&stage.dir().join("summary.json"), text.as_bytes())?;
    stage.commit()?;
    Ok(())
}

fn ssl_run(cli: &Cli, pool: &Pool, mut cfg: RunConfig, a: &SslRun) -> Result<()> {
    let s = &mut cfg.ssl;
    for (dst, src) in [
        (&mut s.iterations, a.iterations),
        (&mut s.unlabeled_steps, a.unlabeled_steps),
        (&mut s.folds, a.folds),
        (&mut s.eval_interval, a.eval_interval),
        (&mut s.finetune_cap, a.finetune_cap),
    ] {
        if let Some(n) = src {
            *dst = n;
        }
    }
    let cfg = finish_config(cfg)?;
    let (teacher, student) = (parse_variant(&a.teacher)?, parse_variant(&a.student)?);
    let data_root = data_dir(&cfg, &a.data);
    let pre = a.pretrained.clone().unwrap_or_else(|| cfg.paths.resolve(Path::new("pretrain")));
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.resolve(Path::new(&format!("ssl-{}", student.name()))));
    let baseline = io::read_checkpoint(&pre.join(format!("{}.ckpt", teacher.name())))?;
    let student_init = io::read_checkpoint(&pre.join(format!("{}.ckpt", student.name())))?;

    let stage = Staging::begin(&out, cli.force, a.resume)?;
    let dir = stage.dir().to_path_buf();
    let text = cfg.to_toml();
    let mut state = RunState { teacher: teacher.name().into(), student: student.name().into(), ..RunState::default() };
    let mut resume = None;
    if stage.resumed() && dir.join(crate::sslrun::STATE_FILE).exists() {
        let saved = std::fs::read_to_string(dir.join(CONFIG_FILE)).map_err(|e| Error::io(&dir, e))?;
        if saved != text {
            return Err(Error::Usage(format!("{} was started with a different configuration", out.display())));
        }
        state = RunState::load(&dir)?;
        if (state.teacher.as_str(), state.student.as_str()) != (teacher.name(), student.name()) {
            return Err(Error::Usage(format!("{} was started with other variants", out.display())));
        }
        resume = prepare_resume(&dir, &mut state, &student_init)?;
    } else {
        write_config(&dir, &cfg)?;
        state.save(&dir)?;
    }

    let data = dataset::read_dataset(&data_root)?;
    check_frames(&cfg, &data)?;
    let inputs = SslInputs {
        baseline: &baseline,
        student_init: &student_init,
        unlabeled: &data.target_unlabeled,
        labeled: &data.target_train,
        test: &data.target_test,
    };
    let started = Instant::now();
    let mut hooks = DirHooks::new(&dir, state)?;
    let result = ssl::run(pool, &inputs, &cfg.ssl, &cfg.loss, &mut hooks, resume)?;
    for r in &result.history {
        eprintln!(
            "iteration {}: finetune steps {} val F1 {:.2}% test EPE {:.3} F1 {:.2}%",
            r.iteration, r.finetune_steps, r.val_f1, r.test_epe, r.test_f1
        );
    }
    eprintln!("done in {:.0?}", started.elapsed());
    hooks.state.finished = true;
    hooks.state.save(&dir)?;
    drop(hooks);
    stage.commit()?;
    Ok(())
}

fn cv(cli: &Cli, pool: &Pool, mut cfg: RunConfig, a: &Cv) -> Result<()> {
    let s = &mut cfg.ssl;
    for (dst, src) in [(&mut s.folds, a.folds), (&mut s.eval_interval, a.eval_interval), (&mut s.finetune_cap, a.finetune_cap)] {
        if let Some(n) = src {
            *dst = n;
        }
    }
    let cfg = finish_config(cfg)?;
    let ckpt = io::read_checkpoint(&a.checkpoint)?;
    let stage = Staging::begin(&a.out, cli.force, false)?;
    write_config(stage.dir(), &cfg)?;
    let data = dataset::read_dataset(&data_dir(&cfg, &a.data))?;
    let weight = if cfg.ssl.contrastive_finetune { ckpt.meta.contrastive_weight as f64 } else { 0.0 };
    let loss = LossConfig { contrastive_weight: weight, ..cfg.loss };
    let (report, curves) = kfold_cv(
        pool,
        &ckpt.meta.model,
        &ckpt.params,
        &data.target_train,
        &loss,
        &cfg.ssl.finetune,
        cfg.ssl.folds,
        cfg.ssl.eval_interval,
        cfg.ssl.finetune_cap,
        "cv",
        &|j| sub_seed(cfg.ssl.seed, &format!("cv/fold{j}")),
    )?;
    for (j, c) in curves.iter().enumerate() {
        let dir = stage.dir().join(format!("fold_{j}"));
        io::create_dir(&dir)?;
        let mut log = JsonLines::append(&dir.join(LOG_FILE))?;
        for m in &c.log {
            log.write(m)?;
        }
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    io::write_bytes(&stage.dir().join("report.json"), text.as_bytes())?;
    println!("finetune steps {} (mean held-out F1-all {:.3}%)", report.best_step, report.best_mean());
    stage.commit()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub index: usize,
    pub epe: f64,
    pub f1_all: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointReport {
    pub checkpoint: String,
    pub tag: String,
    pub split: String,
    pub pairs: Vec<PairRow>,
    /// Mean of per-pair EPE.
    pub epe: f64,
    /// Outlier percentage pooled over all valid pixels.
    pub f1_all: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: String,
    pub teacher: String,
    pub student: String,
    pub iterations: Vec<flowpl_core::ssl::IterationReport>,
    pub final_val_f1: f64,
    pub final_test_epe: f64,
    pub final_test_f1: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoints: Vec<CheckpointReport>,
    pub runs: Vec<RunReport>,
}

fn eval(cli: &Cli, pool: &Pool, cfg: RunConfig, a: &Eval) -> Result<()> {
    if a.checkpoint.is_empty() && a.ssl_run.is_empty() {
        return Err(Error::Usage("eval needs --checkpoint or --ssl-run".into()));
    }
    let mut report = EvalReport::default();
    if !a.checkpoint.is_empty() {
        let role = dataset::parse_role(&a.split)?;
        if role == SplitRole::TargetUnlabeled {
            return Err(Error::Usage("the unlabeled split has no labels to score against".into()));
        }
        let root = data_dir(&cfg, &a.data);
        let m = dataset::read_manifest(&root)?;
        let pairs = dataset::read_labeled(&root, role, m.config.sizes.get(role))?;
        let refs: Vec<&LabeledPair> = pairs.iter().collect();
        for path in &a.checkpoint {
            let ckpt = io::read_checkpoint(path)?;
            let e = evaluate(pool, &ckpt.meta.model, &ckpt.params, &refs)?;
            let rows = e
                .per_pair
                .iter()
                .enumerate()
                .map(|(i, p)| Ok(PairRow { index: i, epe: p.epe()?, f1_all: p.f1_all()? }))
                .collect::<Result<Vec<_>, flowpl_core::FlowError>>()?;
            report.checkpoints.push(CheckpointReport {
                checkpoint: path.display().to_string(),
                tag: ckpt.meta.tag.clone(),
                split: role.name().into(),
                pairs: rows,
                epe: e.stats.epe()?,
                f1_all: e.stats.f1_all()?,
            });
        }
    }
    for dir in &a.ssl_run {
        let state = RunState::load(dir)?;
        let last = state.history.last().ok_or_else(|| Error::data(dir, "no completed iteration"))?;
        report.runs.push(RunReport {
            run: dir.display().to_string(),
            teacher: state.teacher.clone(),
            student: state.student.clone(),
            final_val_f1: last.val_f1,
            final_test_epe: last.test_epe,
            final_test_f1: last.test_f1,
            iterations: state.history.clone(),
        });
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if a.json {
        println!("{json}");
    } else {
        print_tables(&report);
    }
    if let Some(out) = &a.out {
        write_file(out, json.as_bytes(), cli.force)?;
    }
    Ok(())
}

fn print_tables(r: &EvalReport) {
    for c in &r.checkpoints {
        println!("{} ({}) on {}", c.checkpoint, c.tag, c.split);
        println!("{:>6} {:>10} {:>10}", "pair", "EPE", "F1-all%");
        for p in &c.pairs {
            println!("{:>6} {:>10.4} {:>10.2}", p.index, p.epe, p.f1_all);
        }
        println!("{:>6} {:>10.4} {:>10.2}", "mean", c.epe, c.f1_all);
    }
    if !r.runs.is_empty() {
        println!("{:<40} {:>5} {:>7} {:>10} {:>10} {:>10}", "run", "iter", "steps", "val F1%", "test EPE", "test F1%");
        for run in &r.runs {
            for it in &run.iterations {
                println!(
                    "{:<40} {:>5} {:>7} {:>10.3} {:>10.4} {:>10.3}",
                    run.run, it.iteration, it.finetune_steps, it.val_f1, it.test_epe, it.test_f1
                );
            }
        }
    }
}

/// Per-pixel end-point error as gray levels, saturating at `max` pixels;
/// invalid pixels are black.
pub fn error_image(pred: &flowpl_core::flow::FlowField, p: &LabeledPair, max: f32) -> Image {
    let mut img = Image::new(p.width(), p.height(), 3);
    for y in 0..p.height() {
        for x in 0..p.width() {
            let v = if p.mask.get(x, y) {
                let ((pu, pv), (gu, gv)) = (pred.get(x, y), p.flow.get(x, y));
                ((pu - gu).hypot(pv - gv) / max).min(1.0)
            } else {
                0.0
            };
            for c in 0..3 {
                img.set(c, x, y, v);
            }
        }
    }
    img
}

fn viz(cli: &Cli, cfg: RunConfig, a: &Viz) -> Result<()> {
    let role = dataset::parse_role(&a.split)?;
    if role == SplitRole::TargetUnlabeled {
        return Err(Error::Usage("viz needs a labeled split".into()));
    }
    let ckpt = io::read_checkpoint(&a.checkpoint)?;
    let root = data_dir(&cfg, &a.data);
    let m = dataset::read_manifest(&root)?;
    let pairs = dataset::read_labeled(&root, role, m.config.sizes.get(role).min(a.count))?;
    let stage = Staging::begin(&a.out, cli.force, false)?;
    for (i, p) in pairs.iter().enumerate() {
        let pred = predict(&ckpt.meta.model, &ckpt.params, &p.image1, &p.image2)?;
        let max = (0..p.height())
            .flat_map(|y| (0..p.width()).map(move |x| (x, y)))
            .map(|(x, y)| {
                let (u, v) = p.flow.get(x, y);
                u.hypot(v)
            })
            .fold(1e-6f32, f32::max);
        let dir = stage.dir();
        io::write_rgb8(&dataset::entry(dir, i, "pred.png"), &flow_to_color(&pred, Some(max)))?;
        io::write_rgb8(&dataset::entry(dir, i, "gt.png"), &flow_to_color(&p.flow, Some(max)))?;
        io::write_rgb8(&dataset::entry(dir, i, "error.png"), &error_image(&pred, p, 2.0 * flowpl_core::flow::OUTLIER_ABS_PX as f32))?;
        io::write_rgb8(&dataset::entry(dir, i, "img1.png"), &p.image1)?;
    }
    stage.commit()?;
    Ok(())
}

fn audit(cfg: RunConfig) -> Result<()> {
    let started = Instant::now();
    let report = grad_audit(cfg.seed)?;
    for e in &report.entries {
        let status = if e.max_rel_error < report.tolerance { "ok" } else { "FAIL" };
        println!("{:<34} {:>10.3e} {:>7} {status}", e.name, e.max_rel_error, e.checked);
    }
    println!("{} checks in {:.1?}", report.entries.len(), started.elapsed());
    if report.passed() {
        Ok(())
    } else {
        let w = report.worst().expect("failed report has entries");
        Err(Error::Audit(format!("{} has relative error {:.3e}", w.name, w.max_rel_error)))
    }
}
