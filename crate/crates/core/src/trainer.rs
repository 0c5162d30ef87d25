//! The continual training protocol and the method matrix.
//!
//! A method is a training regime plus an inference mode. Methods that share
//! a regime (for example `LwF`, `LwF-AW` and `LwF-HW`) train identical
//! models, so [`run_methods`] trains each regime once and evaluates every
//! requested inference mode on the same snapshots.

use std::cell::RefCell;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{QualitySample, TaskDataset};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_row, MetricsRecord, SrccMatrix};
use crate::model::{ContinualModel, Gradients, TrunkConfig};
use crate::objectives::{
    estimate_importance, feature_matrix, lwf_pseudo_labels, minibatch_loss_and_grad,
    ImportanceState, LossConfig, Objective, PseudoLabelSet, Regularizer,
};
use crate::optim::Adam;
use crate::summarizer::{kmeans_summarize, WeightingConfig, WeightingMode, DEFAULT_K, DEFAULT_TAU};
use crate::thurstone::{build_pairs, PairConfig, RankedPair};

macro_rules! methods {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Every baseline and proposed configuration.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum Method {
            $(#[serde(rename = $name)] $variant,)*
        }

        impl Method {
            pub const ALL: &'static [Method] = &[$(Method::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Method::$variant => $name,)*
                }
            }
        }
    };
}

methods! {
    Sl => "SL",
    Jl => "JL",
    ShCl => "SH-CL",
    MhCl => "MH-CL",
    MhClAw => "MH-CL-AW",
    MhClO => "MH-CL-O",
    Lwf => "LwF",
    LwfO => "LwF-O",
    LwfSw => "LwF-SW",
    LwfHw => "LwF-HW",
    LwfAw => "LwF-AW",
    Ewc => "EWC",
    EwcAw => "EWC-AW",
    Si => "SI",
    SiAw => "SI-AW",
    Mas => "MAS",
    MasAw => "MAS-AW",
}

/// How a method trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// A fresh single-head model per task.
    Separate,
    /// One single-head model trained once on every task's pairs.
    Joint,
    /// One head fine-tuned from task to task.
    SingleHead,
    /// A new head per task, with an optional regularizer.
    MultiHead(Regularizer),
}

impl Regime {
    pub fn regularizer(self) -> Regularizer {
        match self {
            Regime::MultiHead(r) => r,
            _ => Regularizer::None,
        }
    }
}

impl Method {
    pub fn regime(self) -> Regime {
        use Method::*;
        match self {
            Sl => Regime::Separate,
            Jl => Regime::Joint,
            ShCl => Regime::SingleHead,
            MhCl | MhClAw | MhClO => Regime::MultiHead(Regularizer::None),
            Lwf | LwfO | LwfSw | LwfHw | LwfAw => Regime::MultiHead(Regularizer::Lwf),
            Ewc | EwcAw => Regime::MultiHead(Regularizer::Ewc),
            Si | SiAw => Regime::MultiHead(Regularizer::Si),
            Mas | MasAw => Regime::MultiHead(Regularizer::Mas),
        }
    }

    /// Head weighting at test time. Single-head methods ignore it.
    pub fn inference(self, tau: f64) -> WeightingConfig {
        use Method::*;
        let mode = match self {
            MhClAw | LwfAw | EwcAw | SiAw | MasAw => WeightingMode::Adaptive,
            LwfSw => WeightingMode::Uniform,
            LwfHw => WeightingMode::Hard,
            MhClO | LwfO => WeightingMode::Oracle,
            _ => WeightingMode::Latest,
        };
        WeightingConfig { tau, mode }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

fn default_summary_k() -> usize {
    DEFAULT_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub lr: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub batch_warmup: usize,
    pub batch_main: usize,
    /// Regularization strength; `None` uses the regularizer's default.
    #[serde(default)]
    pub lambda: Option<f64>,
    pub seed: u64,
    #[serde(default = "default_summary_k")]
    pub summary_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::LwfAw,
            epochs: 9,
            warmup_epochs: 3,
            lr: 3e-4,
            lr_decay_factor: 10.0,
            lr_decay_every: 3,
            batch_warmup: 128,
            batch_main: 32,
            lambda: None,
            seed: 0,
            summary_k: DEFAULT_K,
        }
    }
}

impl TrainConfig {
    /// Schedule used on the synthetic benchmark. The trunk starts from random
    /// weights rather than a pretrained backbone and only trains after
    /// warm-up, at a tenth of the base rate and below, so the base rate is
    /// raised to let it move at all.
    pub fn synthetic(method: Method, seed: u64) -> Self {
        TrainConfig {
            method,
            lr: 0.02,
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0
            || self.lr_decay_every == 0
            || self.batch_warmup == 0
            || self.batch_main == 0
        {
            return Err(Error::invalid(
                "epochs, decay period and batch sizes must be positive",
            ));
        }
        if self.warmup_epochs > self.epochs {
            return Err(Error::invalid(format!(
                "warm-up epochs {} exceed total epochs {}",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.lr_decay_factor >= 1.0) {
            return Err(Error::invalid(
                "learning-rate decay factor must be at least 1",
            ));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::invalid(format!(
                    "lambda must be non-negative, got {l}"
                )));
            }
        }
        if self.summary_k == 0 {
            return Err(Error::invalid("summary size must be positive"));
        }
        Ok(())
    }

    /// Learning rate for a 0-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr
            / self
                .lr_decay_factor
                .powi((epoch / self.lr_decay_every) as i32)
    }

    pub fn loss_config(&self) -> Result<LossConfig> {
        let r = self.method.regime().regularizer();
        if r == Regularizer::None {
            return Ok(LossConfig::plain());
        }
        LossConfig::new(r, self.lambda.unwrap_or_else(|| r.default_lambda()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    Main,
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based position of the task in the stream.
    pub task: usize,
    /// 1-based epoch within the task.
    pub epoch: usize,
    pub phase: Phase,
    pub mean_loss: f64,
    pub lr: f64,
}

fn check_task_input(
    model: &ContinualModel,
    dataset: &TaskDataset,
    pairs: &[RankedPair],
) -> Result<()> {
    if dataset.dim != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            actual: dataset.dim,
        });
    }
    if pairs.is_empty() {
        return Err(Error::invalid(format!(
            "task {} has no training pairs",
            dataset.name
        )));
    }
    let n = dataset.train.len();
    if let Some(p) = pairs.iter().find(|p| p.first >= n || p.second >= n) {
        return Err(Error::invalid(format!(
            "pair ({}, {}) points outside the {n} training samples of {}",
            p.first, p.second, dataset.name
        )));
    }
    Ok(())
}

fn apply_step(
    model: &mut ContinualModel,
    adam: &mut Adam,
    lr: f64,
    grads: &Gradients,
    train_trunk: bool,
) -> Result<()> {
    let (trunk, heads) = model.trainable_mut();
    let mut updates: Vec<(usize, &mut [f64], &[f64])> = Vec::with_capacity(heads.len() + 1);
    if train_trunk {
        updates.push((0, trunk, &grads.trunk));
    }
    for (i, (h, g)) in heads.iter_mut().zip(&grads.heads).enumerate() {
        updates.push((i + 1, h.as_mut_slice(), g.as_slice()));
    }
    adam.step(lr, &mut updates)
}

/// Learns one task: adds (or reuses) its head, runs warm-up and main epochs,
/// updates importance state for quadratic regularizers, and stores the
/// task summary. `task_position` (0-based) seeds the mini-batch shuffle.
pub fn train_task(
    model: &mut ContinualModel,
    dataset: &TaskDataset,
    pairs: &[RankedPair],
    config: &TrainConfig,
    task_position: usize,
) -> Result<Vec<EpochRecord>> {
    config.validate()?;
    check_task_input(model, dataset, pairs)?;
    let regime = config.method.regime();
    let loss_config = config.loss_config()?;
    let regularizer = loss_config.regularizer;

    let head = if regime == Regime::SingleHead && model.learned_tasks() > 0 {
        0
    } else {
        model.add_head()
    };

    let pseudo: Vec<PseudoLabelSet> = if regularizer == Regularizer::Lwf {
        lwf_pseudo_labels(model, &dataset.train, pairs, head)?
    } else {
        Vec::new()
    };

    let mut importance = if regularizer.is_quadratic() {
        let mut state = match model.importance() {
            Some(s) => s.clone(),
            None => ImportanceState::new(regularizer, model)?,
        };
        state.begin_task(model)?;
        Some(state)
    } else {
        None
    };

    let d = model.output_dim();
    let mut sizes = vec![model.plastic_len()];
    sizes.extend(std::iter::repeat_n(d, model.learned_tasks()));
    let mut adam = Adam::new(&sizes);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(task_position as u64);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let warm = epoch < config.warmup_epochs;
        let lr = config.lr_at(epoch);
        let batch = if warm {
            config.batch_warmup
        } else {
            config.batch_main
        };
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let objective = Objective {
                head,
                config: loss_config,
                pseudo_labels: &pseudo,
                importance: importance.as_ref(),
            };
            let eval =
                minibatch_loss_and_grad(model, &dataset.train, pairs, chunk, &objective, !warm)?;
            total += eval.loss * chunk.len() as f64;
            let grads = eval.total();
            let track_si = !warm && regularizer == Regularizer::Si;
            let before = track_si.then(|| model.plastic_params().to_vec());
            apply_step(model, &mut adam, lr, &grads, !warm)?;
            if let (Some(before), Some(state)) = (before, importance.as_mut()) {
                let delta: Vec<f64> = model
                    .plastic_params()
                    .iter()
                    .zip(&before)
                    .map(|(a, b)| a - b)
                    .collect();
                state.record_step(&eval.data.trunk, &delta);
            }
        }
        let mean_loss = total / pairs.len() as f64;
        log::debug!(
            "task {} epoch {} loss {mean_loss:.6} lr {lr:e}",
            task_position + 1,
            epoch + 1
        );
        log.push(EpochRecord {
            task: task_position + 1,
            epoch: epoch + 1,
            phase: if warm { Phase::Warmup } else { Phase::Main },
            mean_loss,
            lr,
        });
    }

    if let Some(mut state) = importance {
        let beta = estimate_importance(
            regularizer,
            model,
            head,
            &dataset.train,
            pairs,
            Some(&state),
        )?;
        state.consolidate(&beta, model)?;
        model.set_importance(Some(state));
    }

    let x = feature_matrix(&dataset.train, 0..dataset.train.len());
    let stable = model.stable_features_batch(x.view())?;
    let k = config.summary_k.min(dataset.train.len());
    let summary = kmeans_summarize(
        stable.view(),
        k,
        config.seed.wrapping_add(task_position as u64),
        head,
    )?;
    model.set_summary(head, summary)?;
    Ok(log)
}

/// Everything `run_sequence` needs besides the tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceConfig {
    pub trunk: TrunkConfig,
    pub pairs: PairConfig,
    pub train: TrainConfig,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

impl SequenceConfig {
    /// Synthetic-benchmark defaults for a method, input dimension and seed.
    pub fn synthetic(method: Method, input_dim: usize, seed: u64) -> Self {
        let mut trunk = TrunkConfig::new(input_dim);
        trunk.seed = seed;
        SequenceConfig {
            trunk,
            pairs: PairConfig {
                seed,
                ..PairConfig::default()
            },
            train: TrainConfig::synthetic(method, seed),
            tau: DEFAULT_TAU,
        }
    }

    fn pairs_for(&self, position: usize) -> PairConfig {
        PairConfig {
            pairs_per_task: self.pairs.pairs_per_task,
            seed: self.pairs.seed.wrapping_add(position as u64),
        }
    }
}

/// When a dataset was handed out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Access {
    /// Read by the training loop of the task at this 0-based position.
    Training(usize),
    /// Read by joint training, which sees every task at once.
    JointTraining,
    /// Test split read by evaluation after the task at this position.
    Evaluation(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadEvent {
    pub access: Access,
    pub dataset: usize,
}

/// Hands out datasets and records every read.
pub struct TaskStream<'a> {
    tasks: &'a [TaskDataset],
    reads: RefCell<Vec<ReadEvent>>,
}

impl<'a> TaskStream<'a> {
    pub fn new(tasks: &'a [TaskDataset]) -> Self {
        TaskStream {
            tasks,
            reads: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// The dataset the training loop for task `position` may read: only its own.
    pub fn current(&self, position: usize) -> &'a TaskDataset {
        self.record(Access::Training(position), position);
        &self.tasks[position]
    }

    /// Every dataset, for joint training.
    pub fn all_for_joint(&self) -> &'a [TaskDataset] {
        for i in 0..self.tasks.len() {
            self.record(Access::JointTraining, i);
        }
        self.tasks
    }

    /// Test splits `0..=position` for evaluation.
    pub fn test_splits(&self, position: usize) -> Vec<&'a [QualitySample]> {
        (0..=position)
            .map(|k| {
                self.record(Access::Evaluation(position), k);
                self.tasks[k].test.as_slice()
            })
            .collect()
    }

    fn record(&self, access: Access, dataset: usize) {
        self.reads.borrow_mut().push(ReadEvent { access, dataset });
    }

    pub fn reads(&self) -> Vec<ReadEvent> {
        self.reads.borrow().clone()
    }
}

/// Reads in which a training loop touched a dataset other than its own task.
pub fn old_task_reads(reads: &[ReadEvent]) -> usize {
    reads
        .iter()
        .filter(|r| matches!(r.access, Access::Training(t) if r.dataset != t))
        .count()
}

/// Result of training one regime over a stream.
#[derive(Debug, Clone)]
pub struct TrainedStream {
    pub regime: Regime,
    /// Snapshot `t` is the model used for evaluation after task `t`.
    pub snapshots: Vec<ContinualModel>,
    pub log: Vec<EpochRecord>,
    pub reads: Vec<ReadEvent>,
}

/// Result of one method on one stream.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub method: Method,
    pub metrics: MetricsRecord,
    pub snapshots: Vec<ContinualModel>,
    pub log: Vec<EpochRecord>,
    pub reads: Vec<ReadEvent>,
}

fn check_stream(tasks: &[TaskDataset], config: &SequenceConfig) -> Result<()> {
    if tasks.is_empty() {
        return Err(Error::invalid("a run needs at least one task"));
    }
    config.train.validate()?;
    config.trunk.validate()?;
    for t in tasks {
        t.validate()?;
        if t.dim != config.trunk.input_dim {
            return Err(Error::DimensionMismatch {
                expected: config.trunk.input_dim,
                actual: t.dim,
            });
        }
    }
    Ok(())
}

/// Trains `config.train.method`'s regime over the stream.
pub fn train_stream(tasks: &[TaskDataset], config: &SequenceConfig) -> Result<TrainedStream> {
    check_stream(tasks, config)?;
    let regime = config.train.method.regime();
    let stream = TaskStream::new(tasks);
    let mut log = Vec::new();
    let snapshots = match regime {
        Regime::Separate => {
            let mut out = Vec::with_capacity(tasks.len());
            for t in 0..stream.len() {
                let ds = stream.current(t);
                let pairs = build_pairs(ds, &config.pairs_for(t))?;
                let mut model = ContinualModel::new(config.trunk.clone())?;
                log.extend(train_task(&mut model, ds, &pairs, &config.train, t)?);
                out.push(model);
            }
            out
        }
        Regime::Joint => {
            let all = stream.all_for_joint();
            let (joint, pairs) = joint_dataset(all, config)?;
            let mut model = ContinualModel::new(config.trunk.clone())?;
            log.extend(train_task(&mut model, &joint, &pairs, &config.train, 0)?);
            vec![model; tasks.len()]
        }
        Regime::SingleHead | Regime::MultiHead(_) => {
            let mut model = ContinualModel::new(config.trunk.clone())?;
            let mut out = Vec::with_capacity(tasks.len());
            for t in 0..stream.len() {
                let ds = stream.current(t);
                let pairs = build_pairs(ds, &config.pairs_for(t))?;
                log.extend(train_task(&mut model, ds, &pairs, &config.train, t)?);
                out.push(model.clone());
            }
            out
        }
    };
    Ok(TrainedStream {
        regime,
        snapshots,
        log,
        reads: stream.reads(),
    })
}

/// Concatenates every task's training samples and pair sets.
fn joint_dataset(
    tasks: &[TaskDataset],
    config: &SequenceConfig,
) -> Result<(TaskDataset, Vec<RankedPair>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut pairs = Vec::new();
    for (t, ds) in tasks.iter().enumerate() {
        let offset = train.len();
        pairs.extend(
            build_pairs(ds, &config.pairs_for(t))?
                .into_iter()
                .map(|p| RankedPair {
                    first: p.first + offset,
                    second: p.second + offset,
                    p: p.p,
                }),
        );
        train.extend(ds.train.iter().cloned());
        test.extend(ds.test.iter().cloned());
    }
    Ok((TaskDataset::new("joint", train, test)?, pairs))
}

/// Fills the SRCC matrix for one inference mode from trained snapshots.
pub fn evaluate_trained(
    trained: &TrainedStream,
    tasks: &[TaskDataset],
    weighting: &WeightingConfig,
) -> Result<(MetricsRecord, Vec<ReadEvent>)> {
    if trained.snapshots.len() != tasks.len() {
        return Err(Error::invalid(format!(
            "{} snapshots for {} tasks",
            trained.snapshots.len(),
            tasks.len()
        )));
    }
    let stream = TaskStream::new(tasks);
    let mut matrix = SrccMatrix::new();
    let mut flags = Vec::new();
    for (t, model) in trained.snapshots.iter().enumerate() {
        let (row, f) = evaluate_row(model, &stream.test_splits(t), weighting)?;
        matrix.push_row(row)?;
        flags.extend(f);
    }
    let sizes = tasks.iter().map(|t| t.test.len()).collect();
    Ok((
        MetricsRecord::from_matrix(matrix, sizes, flags)?,
        stream.reads(),
    ))
}

/// Trains and evaluates `config.train.method` over the stream.
pub fn run_sequence(tasks: &[TaskDataset], config: &SequenceConfig) -> Result<RunOutput> {
    Ok(run_methods(tasks, config, &[config.train.method])?.remove(0))
}

/// Runs several methods, training each distinct regime once. Outputs follow
/// the order of `methods`.
pub fn run_methods(
    tasks: &[TaskDataset],
    config: &SequenceConfig,
    methods: &[Method],
) -> Result<Vec<RunOutput>> {
    if methods.is_empty() {
        return Err(Error::invalid("no methods requested"));
    }
    let mut trained: Vec<TrainedStream> = Vec::new();
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let regime = method.regime();
        let idx = match trained.iter().position(|t| t.regime == regime) {
            Some(i) => i,
            None => {
                let mut cfg = config.clone();
                cfg.train.method = method;
                log::info!("training regime {regime:?} for {method}");
                trained.push(train_stream(tasks, &cfg)?);
                trained.len() - 1
            }
        };
        let run = &trained[idx];
        let (metrics, eval_reads) = evaluate_trained(run, tasks, &method.inference(config.tau))?;
        let mut reads = run.reads.clone();
        reads.extend(eval_reads);
        out.push(RunOutput {
            method,
            metrics,
            snapshots: run.snapshots.clone(),
            log: run.log.clone(),
            reads,
        });
    }
    Ok(out)
}

/// Writes the run log as one JSON object per line.
pub fn write_run_log<W: Write>(mut out: W, records: &[EpochRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")
            .map_err(|e| Error::io(Path::new("<run log>"), e))?;
    }
    Ok(())
}

/// Parses a run log written by [`write_run_log`].
pub fn read_run_log(text: &str) -> Result<Vec<EpochRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthbench::{generate_sequence, BenchmarkShape, SequenceSpec};

    fn tiny_tasks(seed: u64, tasks: usize) -> Vec<TaskDataset> {
        let shape = BenchmarkShape {
            tasks,
            feature_dim: 8,
            n_train: 40,
            n_test: 20,
            latent_hidden: 8,
            ..BenchmarkShape::default()
        };
        generate_sequence(&SequenceSpec::with_shape(&shape, seed).unwrap()).unwrap()
    }

    fn tiny_config(method: Method) -> SequenceConfig {
        let mut c = SequenceConfig::synthetic(method, 8, 7);
        c.trunk.layer_widths = vec![12, 6];
        c.pairs.pairs_per_task = 60;
        c.train.epochs = 4;
        c.train.warmup_epochs = 1;
        c.train.lr_decay_every = 2;
        c.train.batch_warmup = 32;
        c.train.batch_main = 16;
        c.train.summary_k = 4;
        c
    }

    #[test]
    fn method_names_round_trip() {
        assert_eq!(Method::ALL.len(), 17);
        for &m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!("LwF-XX".parse::<Method>().is_err());
    }

    #[test]
    fn schedule_steps_down() {
        let c = TrainConfig::default();
        let lrs: Vec<f64> = (0..9).map(|e| c.lr_at(e)).collect();
        assert_eq!(&lrs[..3], &[3e-4; 3]);
        assert!(lrs[3..6].iter().all(|&l| (l - 3e-5).abs() < 1e-18));
        assert!(lrs[6..].iter().all(|&l| (l - 3e-6).abs() < 1e-18));
    }

    #[test]
    fn config_validation() {
        for c in [
            TrainConfig {
                warmup_epochs: 10,
                ..TrainConfig::default()
            },
            TrainConfig {
                lr_decay_factor: 0.5,
                ..TrainConfig::default()
            },
            TrainConfig {
                lambda: Some(-1.0),
                ..TrainConfig::default()
            },
        ] {
            assert!(c.validate().is_err());
        }
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn warmup_leaves_trunk_untouched() {
        let tasks = tiny_tasks(1, 2);
        let mut cfg = tiny_config(Method::Lwf);
        cfg.train.epochs = 1;
        cfg.train.warmup_epochs = 1;
        let mut model = ContinualModel::new(cfg.trunk.clone()).unwrap();
        let before = model.plastic_params().to_vec();
        let pairs = build_pairs(&tasks[0], &cfg.pairs).unwrap();
        train_task(&mut model, &tasks[0], &pairs, &cfg.train, 0).unwrap();
        assert_eq!(model.plastic_params(), &before[..]);
        assert_eq!(model.learned_tasks(), 1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let tasks = tiny_tasks(1, 2);
        let cfg = tiny_config(Method::MhCl);
        let mut trunk = cfg.trunk.clone();
        trunk.input_dim = 5;
        let mut model = ContinualModel::new(trunk).unwrap();
        let pairs = build_pairs(&tasks[0], &cfg.pairs).unwrap();
        assert!(matches!(
            train_task(&mut model, &tasks[0], &pairs, &cfg.train, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn head_growth() {
        let tasks = tiny_tasks(2, 3);
        for (m, heads) in [
            (Method::MhCl, 3),
            (Method::ShCl, 1),
            (Method::Sl, 1),
            (Method::Jl, 1),
            (Method::Mas, 3),
        ] {
            let run = run_sequence(&tasks, &tiny_config(m)).unwrap();
            let last = run.snapshots.last().unwrap();
            assert_eq!(last.learned_tasks(), heads, "{m}");
            assert_eq!(last.summaries().len(), heads, "{m}");
        }
    }

    #[test]
    fn separate_matches_multi_head_on_first_task() {
        let tasks = tiny_tasks(3, 2);
        let sl = train_stream(&tasks, &tiny_config(Method::Sl)).unwrap();
        let mh = train_stream(&tasks, &tiny_config(Method::MhCl)).unwrap();
        assert_eq!(sl.snapshots[0], mh.snapshots[0]);
    }

    #[test]
    fn zero_lambda_matches_plain_multi_head() {
        let tasks = tiny_tasks(4, 3);
        let base = train_stream(&tasks, &tiny_config(Method::MhCl)).unwrap();
        for m in [Method::Lwf, Method::Ewc, Method::Si, Method::Mas] {
            let mut cfg = tiny_config(m);
            cfg.train.lambda = Some(0.0);
            let run = train_stream(&tasks, &cfg).unwrap();
            let (a, b) = (&base.snapshots[2], &run.snapshots[2]);
            assert_eq!(a.plastic_params(), b.plastic_params(), "{m}");
            assert_eq!(a.heads(), b.heads(), "{m}");
        }
    }

    #[test]
    fn single_task_identical_across_methods() {
        let mut tasks = tiny_tasks(5, 2);
        tasks.truncate(1);
        let reference = run_sequence(&tasks, &tiny_config(Method::Sl))
            .unwrap()
            .metrics;
        for m in [Method::ShCl, Method::MhCl, Method::Lwf, Method::LwfAw] {
            assert_eq!(
                run_sequence(&tasks, &tiny_config(m)).unwrap().metrics,
                reference,
                "{m}"
            );
        }
    }

    #[test]
    fn continual_methods_never_read_old_tasks() {
        let tasks = tiny_tasks(6, 3);
        let methods: Vec<Method> = Method::ALL
            .iter()
            .copied()
            .filter(|m| *m != Method::Jl)
            .collect();
        for run in run_methods(&tasks, &tiny_config(Method::MhCl), &methods).unwrap() {
            assert_eq!(old_task_reads(&run.reads), 0, "{}", run.method);
            assert!(run.reads.iter().all(|r| r.access != Access::JointTraining));
        }
        let jl = run_sequence(&tasks, &tiny_config(Method::Jl)).unwrap();
        assert_eq!(
            jl.reads
                .iter()
                .filter(|r| r.access == Access::JointTraining)
                .count(),
            3
        );
    }

    #[test]
    fn shared_training_matches_individual_runs() {
        let tasks = tiny_tasks(7, 2);
        let both = run_methods(
            &tasks,
            &tiny_config(Method::Lwf),
            &[Method::Lwf, Method::LwfHw],
        )
        .unwrap();
        let alone = run_sequence(&tasks, &tiny_config(Method::LwfHw)).unwrap();
        assert_eq!(both[1].metrics, alone.metrics);
        assert_eq!(both[1].snapshots, alone.snapshots);
    }

    #[test]
    fn deterministic_runs() {
        let tasks = tiny_tasks(8, 2);
        let a = run_sequence(&tasks, &tiny_config(Method::SiAw)).unwrap();
        let b = run_sequence(&tasks, &tiny_config(Method::SiAw)).unwrap();
        assert_eq!(a.metrics.to_json().unwrap(), b.metrics.to_json().unwrap());
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn run_log_round_trip() {
        let tasks = tiny_tasks(9, 2);
        let run = run_sequence(&tasks, &tiny_config(Method::Ewc)).unwrap();
        assert_eq!(run.log.len(), 8);
        let mut buf = Vec::new();
        write_run_log(&mut buf, &run.log).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 8);
        assert_eq!(read_run_log(&text).unwrap(), run.log);
    }

    #[test]
    fn empty_stream_rejected() {
        assert!(run_sequence(&[], &tiny_config(Method::Lwf)).is_err());
        assert!(run_methods(&tiny_tasks(1, 2), &tiny_config(Method::Lwf), &[]).is_err());
    }
}
