//! Experiment driver: builds runtimes for every holon, moves messages
//! between them and records per-round metrics of the terminals.
//!
//! Two schedulers:
//!
//! * deterministic: one thread visits holons in declaration order, draining
//!   each mailbox (FIFO) and stepping the holon while it makes progress.
//!   Output depends only on the configuration.
//! * concurrent: one thread per holon, connected by channels; the calling
//!   thread collects metrics and shuts everyone down once no message is in
//!   flight.
//!
//! Both count every emitted and delivered message, and both stop with an
//! error if the total amount of work exceeds the watchdog bound.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, Sender};
use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{linear_profile, load_idx, partition, synthetic_dataset, DataError, Dataset, PartitionScheme, SyntheticSpec};
use crate::holarchy::{HolarchyError, HolarchySpec, HolonId};
use crate::learner::{evaluate, init_params, loss, param_count, LearnerError, ModelKind, ModelSpec, TrainingConfig};
use crate::param::ParamVector;
use crate::presets::{PresetError, PresetName};
use crate::protocol::{HolonRuntime, LocalTrainer, Message, Outgoing, ProtocolConfig, ProtocolError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid holarchy: {}", join(.0))]
    InvalidHolarchy(Vec<String>),
    #[error("expected {expected} shards (one per distinct dataset), got {got}")]
    ShardCount { expected: usize, got: usize },
    #[error("initial model has {got} parameters, the model needs {expected}")]
    InitialModel { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("watchdog: no termination after {0} units of work")]
    Watchdog(u64),
    #[error("simulation stalled; holons still running: {}", join(.0))]
    Stalled(Vec<HolonId>),
    #[error("holon thread panicked")]
    ThreadPanic,
    #[error("malformed metrics file: {0}")]
    Metrics(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Holarchy(#[from] HolarchyError),
    #[error(transparent)]
    Preset(#[from] PresetError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionMode {
    #[default]
    Deterministic,
    Concurrent,
}

impl FromStr for ExecutionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "det" | "deterministic" => Ok(Self::Deterministic),
            "conc" | "concurrent" => Ok(Self::Concurrent),
            _ => Err(format!("unknown mode {s:?} (det|conc)")),
        }
    }
}

/// One terminal's state after local training in one round.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub holon: HolonId,
    pub round: u64,
    /// Loss of the trained model on the holon's own shard.
    pub train_loss: f64,
    /// Accuracy on the shared test set; absent for regression.
    pub test_accuracy: Option<f64>,
    /// Seconds since the run started; always 0 in deterministic mode.
    pub wall_time_s: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MessageStats {
    pub emitted: u64,
    pub delivered: u64,
    /// Messages emitted by a holon that had already stopped.
    pub emitted_after_stop: u64,
    /// Deliveries plus steps, as counted by the watchdog.
    pub work: u64,
}

#[derive(Clone, Debug)]
pub struct RunReport<S> {
    /// Sorted by holon, then round.
    pub records: Vec<MetricsRecord>,
    /// Every aggregated model of every holon, in order.
    pub histories: BTreeMap<HolonId, Vec<ParamVector<S>>>,
    pub final_models: BTreeMap<HolonId, ParamVector<S>>,
    pub stats: MessageStats,
}

/// Dataset index of every terminal, in declaration order.
///
/// Distinct `dataset` names are numbered in natural order, so
/// `shard-1, shard-2, .., shard-10` map to `0..10`. Terminals naming the
/// same dataset share it.
pub fn shard_assignment(spec: &HolarchySpec) -> Vec<(HolonId, usize)> {
    fn key(name: &str) -> (Option<u64>, &str) {
        (name.strip_prefix("shard-").and_then(|k| k.parse().ok()), name)
    }
    let names: BTreeSet<_> = spec
        .terminals()
        .map(|t| t.dataset_ref.as_deref().unwrap_or_default())
        .map(key)
        .collect();
    let ordinal: HashMap<&str, usize> = names.iter().enumerate().map(|(i, k)| (k.1, i)).collect();
    spec.terminals()
        .map(|t| (t.id, ordinal[t.dataset_ref.as_deref().unwrap_or_default()]))
        .collect()
}

/// Number of distinct datasets referenced by the terminals.
pub fn shard_count(spec: &HolarchySpec) -> usize {
    shard_assignment(spec).iter().map(|&(_, s)| s + 1).max().unwrap_or(0)
}

/// A fully prepared run: holarchy, shards, model, initial parameters.
#[derive(Clone, Debug)]
pub struct Simulation<S> {
    spec: HolarchySpec,
    model: Arc<ModelSpec>,
    shards: Vec<Arc<Dataset<S>>>,
    test: Option<Arc<Dataset<S>>>,
    theta0: ParamVector<S>,
    training: TrainingConfig,
    protocol: ProtocolConfig,
    max_work: Option<u64>,
}

impl<S: Scalar> Simulation<S> {
    /// `shards[k]` is the dataset of every terminal assigned index `k` by
    /// [`shard_assignment`].
    pub fn new(
        spec: HolarchySpec,
        model: ModelSpec,
        shards: Vec<Dataset<S>>,
        theta0: ParamVector<S>,
        training: TrainingConfig,
        protocol: ProtocolConfig,
    ) -> Result<Self, SimError> {
        let violations = spec.validate();
        if !violations.is_empty() {
            return Err(SimError::InvalidHolarchy(violations.iter().map(ToString::to_string).collect()));
        }
        let expected = shard_count(&spec);
        if shards.len() != expected {
            return Err(SimError::ShardCount { expected, got: shards.len() });
        }
        model.validate()?;
        training.validate()?;
        if theta0.dim() != param_count(&model) {
            return Err(SimError::InitialModel { expected: param_count(&model), got: theta0.dim() });
        }
        if protocol.terminal_budget == 0 || protocol.local_budget == 0 {
            return Err(SimError::Config("budgets must be at least 1".into()));
        }
        Ok(Self {
            spec,
            model: Arc::new(model),
            shards: shards.into_iter().map(Arc::new).collect(),
            test: None,
            theta0,
            training,
            protocol,
            max_work: None,
        })
    }

    /// Shared held-out set for test accuracy (classification only).
    pub fn with_test_set(mut self, test: Dataset<S>) -> Self {
        self.test = Some(Arc::new(test));
        self
    }

    /// Overrides the watchdog bound on deliveries plus steps.
    pub fn with_max_work(mut self, max_work: u64) -> Self {
        self.max_work = Some(max_work);
        self
    }

    pub fn spec(&self) -> &HolarchySpec {
        &self.spec
    }

    pub fn theta0(&self) -> &ParamVector<S> {
        &self.theta0
    }

    fn work_limit(&self) -> u64 {
        self.max_work.unwrap_or_else(|| {
            let n = self.spec.records.len() as u64;
            (self.protocol.terminal_budget + 2) * n * n * 8 + 1024
        })
    }

    fn runtimes(&self) -> Result<Vec<HolonRuntime<S>>, SimError> {
        let assignment = shard_assignment(&self.spec);
        let sizes: HashMap<HolonId, usize> =
            assignment.iter().map(|&(id, s)| (id, self.shards[s].len())).collect();
        let shard_of: HashMap<HolonId, usize> = assignment.into_iter().collect();
        let order = Arc::new(self.spec.declaration_order());
        self.spec
            .records
            .keys()
            .map(|&id| {
                let weight = S::from_count(self.spec.aggregate_data_size(id, &sizes)?);
                let trainer = shard_of.get(&id).map(|&s| LocalTrainer {
                    model: Arc::clone(&self.model),
                    data: Arc::clone(&self.shards[s]),
                    training: self.training.clone(),
                    stream: s as u64,
                });
                Ok(HolonRuntime::new(
                    &self.spec,
                    id,
                    self.protocol.clone(),
                    self.theta0.clone(),
                    weight,
                    trainer,
                    Arc::clone(&order),
                )?)
            })
            .collect()
    }

    pub fn run(&self, mode: ExecutionMode) -> Result<RunReport<S>, SimError> {
        match mode {
            ExecutionMode::Deterministic => self.run_deterministic(),
            ExecutionMode::Concurrent => self.run_concurrent(),
        }
    }

    pub fn run_deterministic(&self) -> Result<RunReport<S>, SimError> {
        let mut runtimes = self.runtimes()?;
        let index: HashMap<HolonId, usize> = runtimes.iter().enumerate().map(|(i, r)| (r.id(), i)).collect();
        let mut mailboxes: Vec<VecDeque<Message<S>>> = vec![VecDeque::new(); runtimes.len()];
        let mut stats = MessageStats::default();
        let mut records = Vec::new();
        let limit = self.work_limit();

        let post = |out: Vec<Outgoing<S>>, stopped: bool, mailboxes: &mut Vec<VecDeque<Message<S>>>, stats: &mut MessageStats| {
            for o in out {
                stats.emitted += 1;
                if stopped {
                    stats.emitted_after_stop += 1;
                }
                mailboxes[index[&o.target]].push_back(o.message);
            }
        };

        let root = index[&self.spec.root];
        let initial = runtimes[root].start();
        post(initial, false, &mut mailboxes, &mut stats);

        loop {
            let mut progress = false;
            for i in 0..runtimes.len() {
                let rt = &mut runtimes[i];
                while let Some(msg) = mailboxes[i].pop_front() {
                    stats.delivered += 1;
                    stats.work += 1;
                    let stopped = rt.stopping();
                    let out = rt.handle_message(msg)?;
                    post(out, stopped, &mut mailboxes, &mut stats);
                    progress = true;
                }
                while !rt.stopping() {
                    let outcome = rt.step()?;
                    if !outcome.progressed {
                        break;
                    }
                    stats.work += 1;
                    progress = true;
                    if let Some(round) = outcome.trained_round {
                        records.push(self.measure(rt, round, 0.0)?);
                    }
                    post(outcome.outgoing, false, &mut mailboxes, &mut stats);
                }
                if rt.try_drain()? {
                    progress = true;
                }
                if stats.work > limit {
                    return Err(SimError::Watchdog(stats.work));
                }
            }
            if !progress {
                break;
            }
        }

        let stuck: Vec<HolonId> = runtimes.iter().filter(|r| !r.is_quiescent()).map(|r| r.id()).collect();
        if !stuck.is_empty() {
            return Err(SimError::Stalled(stuck));
        }
        Ok(self.report(runtimes, records, stats))
    }

    fn measure(&self, rt: &HolonRuntime<S>, round: u64, wall_time_s: f64) -> Result<MetricsRecord, SimError> {
        let trainer = rt.trainer().expect("only terminals train");
        let train_loss = loss(&self.model, rt.theta(), &trainer.data)?.to_f64_lossy();
        let test_accuracy = match &self.test {
            Some(test) if self.model.is_classifier() => Some(evaluate(&self.model, rt.theta(), test)?),
            _ => None,
        };
        Ok(MetricsRecord { holon: rt.id(), round, train_loss, test_accuracy, wall_time_s })
    }

    fn report(&self, runtimes: Vec<HolonRuntime<S>>, mut records: Vec<MetricsRecord>, stats: MessageStats) -> RunReport<S> {
        records.sort_by_key(|r| (r.holon, r.round));
        let mut histories = BTreeMap::new();
        let mut final_models = BTreeMap::new();
        for rt in runtimes {
            histories.insert(rt.id(), rt.history().to_vec());
            final_models.insert(rt.id(), rt.theta().clone());
        }
        RunReport { records, histories, final_models, stats }
    }

    pub fn run_concurrent(&self) -> Result<RunReport<S>, SimError> {
        let mut runtimes = self.runtimes()?;
        let n = runtimes.len();
        let ids: Vec<HolonId> = runtimes.iter().map(|r| r.id()).collect();
        let (senders, receivers): (Vec<_>, Vec<_>) = (0..n).map(|_| unbounded::<Envelope<S>>()).unzip();
        let routes: Arc<HashMap<HolonId, Sender<Envelope<S>>>> =
            Arc::new(ids.iter().copied().zip(senders.iter().cloned()).collect());
        let (metrics_tx, metrics_rx) = unbounded::<Result<MetricsRecord, SimError>>();
        let shared = Arc::new(Shared {
            in_flight: AtomicI64::new(0),
            emitted: AtomicU64::new(0),
            delivered: AtomicU64::new(0),
            after_stop: AtomicU64::new(0),
            work: AtomicU64::new(0),
            failed: AtomicBool::new(false),
            quiescent: (0..n).map(|_| AtomicBool::new(false)).collect(),
        });
        let started = Instant::now();

        let root = ids.iter().position(|&id| id == self.spec.root).expect("root runtime");
        let initial = runtimes[root].start();
        shared.send(&routes, initial, false);

        let limit = self.work_limit();
        let result = std::thread::scope(|scope| {
            let handles: Vec<_> = runtimes
                .drain(..)
                .zip(receivers)
                .enumerate()
                .map(|(slot, (mut rt, rx))| {
                    let routes = Arc::clone(&routes);
                    let shared = Arc::clone(&shared);
                    let metrics_tx = metrics_tx.clone();
                    scope.spawn(move || {
                        let outcome = self.holon_loop(&mut rt, slot, &rx, &routes, &shared, &metrics_tx, started);
                        if let Err(e) = outcome {
                            shared.failed.store(true, Ordering::SeqCst);
                            let _ = metrics_tx.send(Err(e));
                        }
                        rt
                    })
                })
                .collect();
            drop(metrics_tx);

            let mut records = Vec::new();
            let mut failure = None;
            loop {
                match metrics_rx.recv_timeout(Duration::from_millis(2)) {
                    Ok(Ok(rec)) => records.push(rec),
                    Ok(Err(e)) => {
                        failure.get_or_insert(e);
                    }
                    Err(_) => {}
                }
                if failure.is_some() || shared.failed.load(Ordering::SeqCst) {
                    break;
                }
                if shared.work.load(Ordering::SeqCst) > limit {
                    failure = Some(SimError::Watchdog(shared.work.load(Ordering::SeqCst)));
                    break;
                }
                if shared.in_flight.load(Ordering::SeqCst) == 0 {
                    break;
                }
            }
            for tx in routes.values() {
                let _ = tx.send(Envelope::Shutdown);
            }
            let mut finished = Vec::with_capacity(n);
            for h in handles {
                finished.push(h.join().map_err(|_| SimError::ThreadPanic)?);
            }
            while let Ok(msg) = metrics_rx.try_recv() {
                match msg {
                    Ok(rec) => records.push(rec),
                    Err(e) => {
                        failure.get_or_insert(e);
                    }
                }
            }
            match failure {
                Some(e) => Err(e),
                None => Ok((finished, records)),
            }
        });
        let (finished, records) = result?;

        let stuck: Vec<HolonId> = finished.iter().filter(|r| !r.is_quiescent()).map(|r| r.id()).collect();
        if !stuck.is_empty() {
            return Err(SimError::Stalled(stuck));
        }
        let stats = MessageStats {
            emitted: shared.emitted.load(Ordering::SeqCst),
            delivered: shared.delivered.load(Ordering::SeqCst),
            emitted_after_stop: shared.after_stop.load(Ordering::SeqCst),
            work: shared.work.load(Ordering::SeqCst),
        };
        debug!("concurrent run finished in {:?}", started.elapsed());
        Ok(self.report(finished, records, stats))
    }

    #[allow(clippy::too_many_arguments)]
    fn holon_loop(
        &self,
        rt: &mut HolonRuntime<S>,
        slot: usize,
        rx: &Receiver<Envelope<S>>,
        routes: &HashMap<HolonId, Sender<Envelope<S>>>,
        shared: &Shared,
        metrics: &Sender<Result<MetricsRecord, SimError>>,
        started: Instant,
    ) -> Result<(), SimError> {
        while let Ok(Envelope::Deliver(msg)) = rx.recv() {
            shared.delivered.fetch_add(1, Ordering::SeqCst);
            shared.work.fetch_add(1, Ordering::SeqCst);
            let stopped = rt.stopping();
            let handled = (|| -> Result<(), SimError> {
                let out = rt.handle_message(msg)?;
                shared.send(routes, out, stopped);
                while !rt.stopping() {
                    let outcome = rt.step()?;
                    if !outcome.progressed {
                        break;
                    }
                    shared.work.fetch_add(1, Ordering::SeqCst);
                    if let Some(round) = outcome.trained_round {
                        let _ = metrics.send(self.measure(rt, round, started.elapsed().as_secs_f64()));
                    }
                    shared.send(routes, outcome.outgoing, false);
                }
                rt.try_drain()?;
                Ok(())
            })();
            shared.quiescent[slot].store(rt.is_quiescent(), Ordering::SeqCst);
            shared.in_flight.fetch_sub(1, Ordering::SeqCst);
            handled?;
        }
        Ok(())
    }
}

enum Envelope<S> {
    Deliver(Message<S>),
    Shutdown,
}

struct Shared {
    in_flight: AtomicI64,
    emitted: AtomicU64,
    delivered: AtomicU64,
    after_stop: AtomicU64,
    work: AtomicU64,
    failed: AtomicBool,
    quiescent: Vec<AtomicBool>,
}

impl Shared {
    fn send<S>(&self, routes: &HashMap<HolonId, Sender<Envelope<S>>>, out: Vec<Outgoing<S>>, stopped: bool) {
        for o in out {
            self.in_flight.fetch_add(1, Ordering::SeqCst);
            self.emitted.fetch_add(1, Ordering::SeqCst);
            if stopped {
                self.after_stop.fetch_add(1, Ordering::SeqCst);
            }
            if routes[&o.target].send(Envelope::Deliver(o.message)).is_err() {
                self.in_flight.fetch_sub(1, Ordering::SeqCst);
            }
        }
    }
}

/// Mean train loss and test accuracy over terminals for one round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundSummary {
    pub round: u64,
    pub terminals: usize,
    pub mean_train_loss: f64,
    pub mean_test_accuracy: Option<f64>,
}

pub fn summarize(records: &[MetricsRecord]) -> Result<Vec<RoundSummary>, SimError> {
    if records.is_empty() {
        return Err(SimError::Metrics("no records to summarize".into()));
    }
    let mut by_round: BTreeMap<u64, Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        by_round.entry(r.round).or_default().push(r);
    }
    Ok(by_round
        .into_iter()
        .map(|(round, rs)| {
            let n = rs.len() as f64;
            let accuracies: Vec<f64> = rs.iter().filter_map(|r| r.test_accuracy).collect();
            RoundSummary {
                round,
                terminals: rs.len(),
                mean_train_loss: rs.iter().map(|r| r.train_loss).sum::<f64>() / n,
                mean_test_accuracy: (!accuracies.is_empty())
                    .then(|| accuracies.iter().sum::<f64>() / accuracies.len() as f64),
            }
        })
        .collect())
}

const HEADER: [&str; 6] = ["holon_level", "holon_index", "round", "train_loss", "test_accuracy", "wall_time_s"];

/// Writes records as CSV, sorted by holon then round.
pub fn write_metrics<W: io::Write>(records: &[MetricsRecord], out: W) -> Result<(), SimError> {
    let mut sorted: Vec<&MetricsRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.holon, r.round));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in sorted {
        w.write_record([
            r.holon.level.to_string(),
            r.holon.index.to_string(),
            r.round.to_string(),
            r.train_loss.to_string(),
            r.test_accuracy.map(|a| a.to_string()).unwrap_or_default(),
            r.wall_time_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_metrics(records: &[MetricsRecord], path: impl AsRef<Path>) -> Result<(), SimError> {
    let file = std::fs::File::create(path)?;
    write_metrics(records, io::BufWriter::new(file))
}

pub fn read_metrics<R: io::Read>(input: R) -> Result<Vec<MetricsRecord>, SimError> {
    let mut rdr = csv::Reader::from_reader(input);
    if rdr.headers()?.iter().ne(HEADER) {
        return Err(SimError::Metrics("unexpected header".into()));
    }
    let bad = |what: &str, line: usize| SimError::Metrics(format!("line {line}: bad {what}"));
    rdr.records()
        .enumerate()
        .map(|(i, row)| {
            let row = row?;
            let line = i + 2;
            let field = |k: usize| row.get(k).unwrap_or_default();
            Ok(MetricsRecord {
                holon: HolonId::new(
                    field(0).parse().map_err(|_| bad("level", line))?,
                    field(1).parse().map_err(|_| bad("index", line))?,
                ),
                round: field(2).parse().map_err(|_| bad("round", line))?,
                train_loss: field(3).parse().map_err(|_| bad("train_loss", line))?,
                test_accuracy: match field(4) {
                    "" => None,
                    s => Some(s.parse().map_err(|_| bad("test_accuracy", line))?),
                },
                wall_time_s: field(5).parse().map_err(|_| bad("wall_time_s", line))?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Topology {
    Preset(PresetName),
    Config(PathBuf),
}

impl Topology {
    pub fn load(&self) -> Result<HolarchySpec, SimError> {
        match self {
            Topology::Preset(p) => Ok(p.build()?),
            Topology::Config(path) => Ok(HolarchySpec::parse(&std::fs::read_to_string(path)?)?),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Idx { images: PathBuf, labels: PathBuf },
}

/// Everything needed for one run from the command line.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub topology: Topology,
    /// Input and output sizes come from the data.
    pub model: ModelKind,
    pub data: DataSource,
    /// Optional cap on the number of samples used, taken after shuffling.
    pub max_samples: Option<usize>,
    /// Fraction of samples held out as the shared test set.
    pub test_fraction: f64,
    /// An unequal split with no sizes uses the linear profile.
    pub partition: PartitionScheme,
    pub training: TrainingConfig,
    pub protocol: ProtocolConfig,
    pub seed: u64,
    pub mode: ExecutionMode,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(topology: Topology, model: ModelKind, data: DataSource) -> Self {
        Self {
            topology,
            model,
            data,
            max_samples: None,
            test_fraction: 0.2,
            partition: PartitionScheme::Iid,
            training: TrainingConfig::default(),
            protocol: ProtocolConfig::default(),
            seed: 0,
            mode: ExecutionMode::Deterministic,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if let DataSource::Idx { images, labels } = &self.data {
            for p in [images, labels] {
                if !p.is_file() {
                    return Err(SimError::Config(format!("no such file: {}", p.display())));
                }
            }
        }
        if let Topology::Config(p) = &self.topology {
            if !p.is_file() {
                return Err(SimError::Config(format!("no such file: {}", p.display())));
            }
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(SimError::Config("test fraction must be in [0, 1)".into()));
        }
        if self.protocol.terminal_budget == 0 || self.protocol.local_budget == 0 {
            return Err(SimError::Config("budgets must be at least 1".into()));
        }
        self.training.validate()?;
        Ok(())
    }
}

// Independent random streams derived from the experiment seed.
const STREAM_DATA: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_PARTITION: u64 = 3;
const STREAM_INIT: u64 = 4;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Loads data, holds out the test set, partitions the rest and draws the
/// initial model.
pub fn prepare<S: Scalar>(cfg: &ExperimentConfig) -> Result<Simulation<S>, SimError> {
    cfg.validate()?;
    let spec = cfg.topology.load()?;
    let mut data: Dataset<S> = match &cfg.data {
        DataSource::Synthetic(s) => synthetic_dataset(s, &mut rng(cfg.seed, STREAM_DATA))?.0,
        DataSource::Idx { images, labels } => load_idx(images, labels)?,
    };
    let mut split_rng = rng(cfg.seed, STREAM_SPLIT);
    if let Some(cap) = cfg.max_samples.filter(|&c| c < data.len()) {
        data = data.split(data.len() - cap, &mut split_rng)?.0;
    }
    let test_len = (data.len() as f64 * cfg.test_fraction).round() as usize;
    let (train, test) = data.split(test_len, &mut split_rng)?;

    let model = match &cfg.model {
        ModelKind::LinearRegression => ModelSpec::linear(train.dim()),
        ModelKind::LogisticRegression => ModelSpec::logistic(train.dim(), classes(&train)?),
        ModelKind::Mlp { hidden, activation } => {
            ModelSpec::mlp(train.dim(), hidden.clone(), classes(&train)?, *activation)
        }
    };
    let n = shard_count(&spec);
    let scheme = match &cfg.partition {
        PartitionScheme::UeqNiid { sizes } if sizes.is_empty() => {
            PartitionScheme::UeqNiid { sizes: linear_profile(train.len(), n) }
        }
        other => other.clone(),
    };
    let shards = partition(&train, &scheme, n, &mut rng(cfg.seed, STREAM_PARTITION))?;
    let theta0 = init_params(&model, &mut rng(cfg.seed, STREAM_INIT));
    let training = TrainingConfig { seed: cfg.seed, ..cfg.training.clone() };
    info!(
        "{} holons, {} shards, {} training / {} test samples, {} parameters",
        spec.records.len(),
        shards.len(),
        train.len(),
        test.len(),
        theta0.dim()
    );
    let sim = Simulation::new(spec, model, shards, theta0, training, cfg.protocol.clone())?;
    Ok(if test.is_empty() { sim } else { sim.with_test_set(test) })
}

fn classes<S: Scalar>(d: &Dataset<S>) -> Result<usize, SimError> {
    d.num_classes()
        .ok_or_else(|| SimError::Config("classification model needs labelled data".into()))
}

/// Prepares and runs `cfg`, writing the metrics CSV if an output is set.
pub fn run<S: Scalar>(cfg: &ExperimentConfig) -> Result<RunReport<S>, SimError> {
    let report = prepare::<S>(cfg)?.run(cfg.mode)?;
    if let Some(path) = &cfg.output {
        emit_metrics(&report.records, path)?;
    }
    Ok(report)
}
