//! Per-holon runtime: message handling, readiness, aggregation, local
//! training, routing and stopping.
//!
//! Every holon owns one [`HolonRuntime`]. A driver delivers [`Message`]s via
//! [`HolonRuntime::handle_message`] and calls [`HolonRuntime::step`] until
//! it reports no progress. All state changes happen inside those two calls.
//!
//! Round structure:
//!
//! * Messages tagged `0` carry the common initial model. The first one a
//!   holon sees initializes it and is passed on to its neighbors and
//!   subordinates; later copies are absorbed.
//! * Terminal round `t` aggregates its own model, the round `t-1` models of
//!   its neighbors and (from round 2 on, when the superior aggregates) the
//!   superior's latest model. It then trains, shares the result and moves to
//!   round `t+1`. The holon stops after round `budget`; the last neighbor
//!   models it receives are folded in by [`HolonRuntime::try_drain`].
//! * A non-terminal waits for every unfinished subordinate, aggregates, and
//!   then either answers its subordinates (local budget left, or no
//!   superior) or reports to its superior and waits for the reply, which
//!   resets the local budget. Once every subordinate has finished it sends a
//!   final report upward and stops.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{
    AggregationError, Aggregator, AssembledContribution, Block, ContributionState, WeightedAverage,
};
use crate::data::Dataset;
use crate::holarchy::{HolarchyError, HolarchySpec, HolonId};
use crate::learner::{round_seed, train_local, LearnerError, ModelSpec, TrainingConfig};
use crate::param::ParamVector;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("{receiver} got a {kind:?} message from {sender}, which is not such a peer")]
    InconsistentKind { receiver: HolonId, sender: HolonId, kind: MessageKind },
    #[error("{receiver} got a message from {sender} after it stopped")]
    MessageAfterStop { receiver: HolonId, sender: HolonId },
    #[error("step called on stopped holon {0}")]
    StepAfterStop(HolonId),
    #[error("terminal {0} has no local trainer")]
    MissingTrainer(HolonId),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Holarchy(#[from] HolarchyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MessageKind {
    FromSubordinate,
    FromNeighbor,
    FromSuperior,
}

/// A parameter update in flight.
#[derive(Clone, Debug, PartialEq)]
pub struct Message<S> {
    pub payload: ParamVector<S>,
    pub weight: S,
    pub sender: HolonId,
    pub kind: MessageKind,
    /// Sender's round when emitted; `0` is the initial model.
    pub round_tag: u64,
    /// Set on a neighbor message that relays the shared superior's model.
    pub relayed_from: Option<HolonId>,
    /// Sender's final message.
    pub last: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outgoing<S> {
    pub target: HolonId,
    pub message: Message<S>,
}

/// How a holon folds in a model received from its superior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuperiorMode {
    /// The superior's model takes the place of the holon's own model.
    #[default]
    Replace,
    /// The superior's model is one more column, weighted by the superior's
    /// aggregate data size.
    Weighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetClass {
    Subordinates,
    Neighbors,
    Superiors,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub enum RoutingPolicy {
    /// Terminals share with neighbors and an aggregating superior every
    /// round; non-terminals answer subordinates while their local budget
    /// lasts, then report to their superior.
    #[default]
    HoalDefault,
    Custom {
        terminal: Vec<TargetClass>,
        within_budget: Vec<TargetClass>,
        exhausted: Vec<TargetClass>,
    },
}

impl RoutingPolicy {
    fn terminal_shares_with_neighbors(&self) -> bool {
        match self {
            RoutingPolicy::HoalDefault => true,
            RoutingPolicy::Custom { terminal, .. } => terminal.contains(&TargetClass::Neighbors),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    /// Relay superior models to neighbors on receipt.
    pub sync_mode: bool,
    pub superior_mode: SuperiorMode,
    /// Rounds each terminal runs before stopping.
    pub terminal_budget: u64,
    /// Aggregations a non-terminal performs between reports to its superior.
    pub local_budget: u64,
    pub policy: RoutingPolicy,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            sync_mode: true,
            superior_mode: SuperiorMode::Replace,
            terminal_budget: 200,
            local_budget: 2,
            policy: RoutingPolicy::HoalDefault,
        }
    }
}

/// What a terminal needs to train locally.
#[derive(Clone, Debug)]
pub struct LocalTrainer<S> {
    pub model: Arc<ModelSpec>,
    pub data: Arc<Dataset<S>>,
    pub training: TrainingConfig,
    /// Per-holon random stream, mixed into every round's seed.
    pub stream: u64,
}

#[derive(Clone, Debug)]
enum Role<S> {
    Terminal(LocalTrainer<S>),
    NonTerminal { inert: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Collecting,
    AwaitingSuperior,
    Done,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepOutcome<S> {
    pub progressed: bool,
    /// Round whose local training just finished (terminals only).
    pub trained_round: Option<u64>,
    pub outgoing: Vec<Outgoing<S>>,
}

#[derive(Clone, Debug)]
pub struct HolonRuntime<S> {
    id: HolonId,
    role: Role<S>,
    superior: Option<HolonId>,
    superior_active: bool,
    subordinates: Vec<HolonId>,
    neighbors: Vec<HolonId>,
    cfg: ProtocolConfig,
    round: u64,
    local_count: u64,
    theta: ParamVector<S>,
    weight: S,
    contributions: ContributionState<S>,
    initialized: bool,
    phase: Phase,
    fresh: BTreeSet<HolonId>,
    finished_subs: BTreeSet<HolonId>,
    last_superior_tag: u64,
    deferred: Vec<Message<S>>,
    drained: bool,
    history: Vec<ParamVector<S>>,
}

impl<S: Scalar> HolonRuntime<S> {
    /// Builds the runtime of holon `id`. `weight` is the holon's aggregate
    /// data size; `trainer` is required for terminals and ignored otherwise.
    pub fn new(
        spec: &HolarchySpec,
        id: HolonId,
        cfg: ProtocolConfig,
        theta0: ParamVector<S>,
        weight: S,
        trainer: Option<LocalTrainer<S>>,
        order: Arc<HashMap<HolonId, usize>>,
    ) -> Result<Self, ProtocolError> {
        let record = spec.record(id)?;
        let role = if record.is_terminal() {
            Role::Terminal(trainer.ok_or(ProtocolError::MissingTrainer(id))?)
        } else {
            Role::NonTerminal { inert: record.inert }
        };
        let superior_active = match record.parent {
            Some(p) => !spec.record(p)?.inert,
            None => false,
        };
        let neighbors = if record.parent.is_some() { spec.neighbors(id)? } else { Vec::new() };
        let mut contributions = ContributionState::with_order(theta0.dim(), order);
        if record.is_terminal() {
            contributions.record_update(Block::Base, id, theta0.clone(), weight, 0)?;
        }
        Ok(Self {
            id,
            role,
            superior: record.parent,
            superior_active,
            subordinates: record.children.clone(),
            neighbors,
            cfg,
            round: if record.is_terminal() { 1 } else { 0 },
            local_count: 0,
            theta: theta0,
            weight,
            contributions,
            initialized: false,
            phase: Phase::Collecting,
            fresh: BTreeSet::new(),
            finished_subs: BTreeSet::new(),
            last_superior_tag: 0,
            deferred: Vec::new(),
            drained: false,
            history: Vec::new(),
        })
    }

    pub fn id(&self) -> HolonId {
        self.id
    }

    pub fn theta(&self) -> &ParamVector<S> {
        &self.theta
    }

    pub fn weight(&self) -> S {
        self.weight
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.role, Role::Terminal(_))
    }

    pub fn trainer(&self) -> Option<&LocalTrainer<S>> {
        match &self.role {
            Role::Terminal(t) => Some(t),
            Role::NonTerminal { .. } => None,
        }
    }

    pub fn contributions(&self) -> &ContributionState<S> {
        &self.contributions
    }

    pub fn neighbors(&self) -> &[HolonId] {
        &self.neighbors
    }

    /// Every aggregated model, in order.
    pub fn history(&self) -> &[ParamVector<S>] {
        &self.history
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    fn is_inert(&self) -> bool {
        matches!(self.role, Role::NonTerminal { inert: true })
    }

    fn expects_neighbors(&self) -> bool {
        self.is_terminal() && self.cfg.policy.terminal_shares_with_neighbors() && !self.neighbors.is_empty()
    }

    /// Terminal: `round > budget`. Non-terminal: every subordinate has
    /// finished and the final report went out.
    pub fn stopping(&self) -> bool {
        match self.role {
            Role::Terminal(_) => self.round > self.cfg.terminal_budget,
            Role::NonTerminal { .. } => self.phase == Phase::Done,
        }
    }

    /// Stopped, with no further deliveries to wait for.
    pub fn is_quiescent(&self) -> bool {
        self.stopping() && (!self.is_terminal() || self.drained || !self.expects_neighbors())
    }

    /// Peers whose update the holon needs before its next aggregation.
    pub fn expected_senders(&self) -> BTreeSet<HolonId> {
        match self.role {
            Role::Terminal(_) => {
                let mut out = BTreeSet::new();
                if self.round >= 2 && self.expects_neighbors() {
                    out.extend(self.neighbors.iter().copied());
                }
                if self.round >= 2 && !self.stopping() && self.superior_active {
                    out.extend(self.superior);
                }
                out
            }
            Role::NonTerminal { .. } => match self.phase {
                Phase::Collecting => self
                    .subordinates
                    .iter()
                    .copied()
                    .filter(|s| !self.finished_subs.contains(s))
                    .collect(),
                Phase::AwaitingSuperior => self.superior.into_iter().collect(),
                Phase::Done => BTreeSet::new(),
            },
        }
    }

    fn has_update_from(&self, peer: HolonId) -> bool {
        if Some(peer) == self.superior {
            !self.contributions.block(Block::Superior).is_empty()
        } else if self.neighbors.contains(&peer) {
            self.contributions.get(Block::Neighbor, peer).is_some()
        } else {
            self.fresh.contains(&peer)
        }
    }

    /// True when every expected sender has a current update.
    pub fn ready_to_aggregate(&self) -> bool {
        if !self.initialized || self.stopping() {
            return false;
        }
        if let Role::NonTerminal { inert } = self.role {
            if self.phase == Phase::Collecting {
                let all_finished = self.subordinates.iter().all(|s| self.finished_subs.contains(s));
                if inert {
                    return all_finished;
                }
                if self.fresh.is_empty() {
                    return false;
                }
            }
        }
        self.expected_senders().into_iter().all(|p| self.has_update_from(p))
    }

    fn kind_is_consistent(&self, msg: &Message<S>) -> bool {
        match msg.kind {
            MessageKind::FromSubordinate => self.subordinates.contains(&msg.sender),
            MessageKind::FromSuperior => self.superior == Some(msg.sender),
            MessageKind::FromNeighbor => {
                self.neighbors.contains(&msg.sender)
                    && msg.relayed_from.is_none_or(|r| Some(r) == self.superior)
            }
        }
    }

    fn relay(&self, msg: &Message<S>, from: HolonId) -> Message<S> {
        Message {
            payload: msg.payload.clone(),
            weight: msg.weight,
            sender: self.id,
            kind: MessageKind::FromNeighbor,
            round_tag: msg.round_tag,
            relayed_from: Some(from),
            last: false,
        }
    }

    /// Initiates learning: the root sends the initial model to all of its
    /// subordinates, or to its first one when inert.
    pub fn start(&mut self) -> Vec<Outgoing<S>> {
        if self.superior.is_some() || self.initialized {
            return Vec::new();
        }
        self.initialized = true;
        let targets: Vec<HolonId> = if self.is_inert() {
            self.subordinates.iter().take(1).copied().collect()
        } else {
            self.subordinates.clone()
        };
        targets
            .into_iter()
            .map(|target| Outgoing {
                target,
                message: Message {
                    payload: self.theta.clone(),
                    weight: self.weight,
                    sender: self.id,
                    kind: MessageKind::FromSuperior,
                    round_tag: 0,
                    relayed_from: None,
                    last: false,
                },
            })
            .collect()
    }

    /// Records an incoming update in the block matching its kind. A superior
    /// model received in sync mode is relayed unchanged to every neighbor.
    pub fn handle_message(&mut self, msg: Message<S>) -> Result<Vec<Outgoing<S>>, ProtocolError> {
        if !self.kind_is_consistent(&msg) {
            return Err(ProtocolError::InconsistentKind { receiver: self.id, sender: msg.sender, kind: msg.kind });
        }
        if msg.payload.dim() != self.theta.dim() {
            return Err(AggregationError::DimensionMismatch { expected: self.theta.dim(), got: msg.payload.dim() }.into());
        }
        let from_superior = msg.kind == MessageKind::FromSuperior || msg.relayed_from.is_some();

        if msg.round_tag == 0 && msg.kind != MessageKind::FromSubordinate {
            return Ok(self.handle_initial(msg));
        }

        if from_superior && msg.round_tag <= self.last_superior_tag {
            debug!("{}: dropping stale superior model (tag {})", self.id, msg.round_tag);
            return Ok(Vec::new());
        }

        if self.stopping() {
            let drain_input = self.is_terminal()
                && !self.drained
                && msg.kind == MessageKind::FromNeighbor
                && msg.relayed_from.is_none()
                && msg.round_tag == self.cfg.terminal_budget;
            if !drain_input {
                return Err(ProtocolError::MessageAfterStop { receiver: self.id, sender: msg.sender });
            }
            self.contributions.record_update(Block::Neighbor, msg.sender, msg.payload, msg.weight, msg.round_tag)?;
            return Ok(Vec::new());
        }

        let mut out = Vec::new();
        match msg.kind {
            MessageKind::FromSubordinate => {
                self.contributions.record_update(Block::Base, msg.sender, msg.payload, msg.weight, msg.round_tag)?;
                self.fresh.insert(msg.sender);
                if msg.last {
                    self.finished_subs.insert(msg.sender);
                }
            }
            _ if from_superior => {
                let superior = self.superior.expect("consistent superior message");
                if msg.kind == MessageKind::FromSuperior && self.cfg.sync_mode {
                    out.extend(self.neighbors.iter().map(|&n| Outgoing { target: n, message: self.relay(&msg, superior) }));
                }
                self.contributions.record_update(Block::Superior, superior, msg.payload, msg.weight, msg.round_tag)?;
            }
            _ => {
                if self.is_terminal() {
                    let wanted = self.round - 1;
                    if msg.round_tag > wanted {
                        self.deferred.push(msg);
                        return Ok(out);
                    }
                    if msg.round_tag < wanted {
                        warn!("{}: dropping late model from {} (tag {}, round {})", self.id, msg.sender, msg.round_tag, self.round);
                        return Ok(out);
                    }
                }
                self.contributions.record_update(Block::Neighbor, msg.sender, msg.payload, msg.weight, msg.round_tag)?;
            }
        }
        Ok(out)
    }

    fn handle_initial(&mut self, msg: Message<S>) -> Vec<Outgoing<S>> {
        if self.initialized {
            return Vec::new();
        }
        self.initialized = true;
        self.theta = msg.payload.clone();
        if self.is_terminal() {
            self.contributions.clear(Block::Base);
            self.contributions
                .record_update(Block::Base, self.id, self.theta.clone(), self.weight, 0)
                .expect("initial model matches dimension");
        }
        let origin = match msg.kind {
            MessageKind::FromSuperior => msg.sender,
            _ => msg.relayed_from.unwrap_or(msg.sender),
        };
        let mut out: Vec<Outgoing<S>> = self
            .neighbors
            .iter()
            .filter(|&&n| n != msg.sender)
            .map(|&n| Outgoing { target: n, message: self.relay(&msg, origin) })
            .collect();
        out.extend(self.subordinates.iter().map(|&c| Outgoing {
            target: c,
            message: Message {
                payload: self.theta.clone(),
                weight: self.weight,
                sender: self.id,
                kind: MessageKind::FromSuperior,
                round_tag: 0,
                relayed_from: None,
                last: false,
            },
        }));
        out
    }

    /// Peers to share with after the current aggregation.
    pub fn routing_targets(&self) -> Vec<HolonId> {
        let classes: Vec<TargetClass> = match (&self.cfg.policy, &self.role) {
            (RoutingPolicy::HoalDefault, Role::Terminal(_)) => {
                let mut c = vec![TargetClass::Neighbors];
                if self.superior_active {
                    c.push(TargetClass::Superiors);
                }
                c
            }
            (RoutingPolicy::HoalDefault, Role::NonTerminal { inert: true }) => Vec::new(),
            (RoutingPolicy::HoalDefault, Role::NonTerminal { .. }) => {
                if self.superior.is_none() || self.local_count < self.cfg.local_budget {
                    vec![TargetClass::Subordinates]
                } else {
                    vec![TargetClass::Superiors]
                }
            }
            (RoutingPolicy::Custom { terminal, .. }, Role::Terminal(_)) => terminal.clone(),
            (RoutingPolicy::Custom { within_budget, exhausted, .. }, Role::NonTerminal { .. }) => {
                if self.superior.is_none() || self.local_count < self.cfg.local_budget {
                    within_budget.clone()
                } else {
                    exhausted.clone()
                }
            }
        };
        let mut out: Vec<HolonId> = Vec::new();
        for class in classes {
            let peers: &[HolonId] = match class {
                TargetClass::Subordinates => &self.subordinates,
                TargetClass::Neighbors => &self.neighbors,
                TargetClass::Superiors => self.superior.as_slice(),
            };
            for &p in peers {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        out
    }

    fn message_to(&self, target: HolonId, last: bool) -> Outgoing<S> {
        let kind = if Some(target) == self.superior {
            MessageKind::FromSubordinate
        } else if self.neighbors.contains(&target) {
            MessageKind::FromNeighbor
        } else {
            MessageKind::FromSuperior
        };
        Outgoing {
            target,
            message: Message {
                payload: self.theta.clone(),
                weight: self.weight,
                sender: self.id,
                kind,
                round_tag: self.round,
                relayed_from: None,
                last,
            },
        }
    }

    fn aggregate_current(&mut self) -> Result<ParamVector<S>, ProtocolError> {
        let ac = self.contributions.assemble()?;
        Ok(WeightedAverage.aggregate(&ac)?)
    }

    /// One pass of the main loop: aggregate if ready, train (terminals),
    /// share, advance. Not ready means no change and no messages.
    pub fn step(&mut self) -> Result<StepOutcome<S>, ProtocolError> {
        if self.stopping() {
            return Err(ProtocolError::StepAfterStop(self.id));
        }
        if !self.ready_to_aggregate() {
            return Ok(StepOutcome::default());
        }
        match self.role {
            Role::Terminal(_) => self.step_terminal(),
            Role::NonTerminal { inert: true } => {
                self.phase = Phase::Done;
                Ok(StepOutcome { progressed: true, ..Default::default() })
            }
            Role::NonTerminal { .. } if self.phase == Phase::AwaitingSuperior => self.adopt_superior(),
            Role::NonTerminal { .. } => self.step_collecting(),
        }
    }

    fn step_terminal(&mut self) -> Result<StepOutcome<S>, ProtocolError> {
        if let Some(sup) = self.contributions.take(Block::Superior).into_iter().next() {
            self.last_superior_tag = sup.round_tag;
            match self.cfg.superior_mode {
                SuperiorMode::Replace => {
                    self.contributions.record_update(Block::Base, self.id, sup.theta, self.weight, sup.round_tag)?;
                }
                SuperiorMode::Weighted => {
                    self.contributions.record_update(Block::Superior, sup.sender, sup.theta, sup.weight, sup.round_tag)?;
                }
            }
        }
        let aggregated = self.aggregate_current()?;
        self.history.push(aggregated.clone());
        self.contributions.clear(Block::Neighbor);
        self.contributions.clear(Block::Superior);

        let Role::Terminal(trainer) = &self.role else { unreachable!() };
        let seed = round_seed(trainer.training.seed, trainer.stream, self.round);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.theta = train_local(&trainer.model, &aggregated, &trainer.data, &trainer.training, &mut rng)?;
        self.contributions.clear(Block::Base);
        self.contributions.record_update(Block::Base, self.id, self.theta.clone(), self.weight, self.round)?;

        let last = self.round == self.cfg.terminal_budget;
        let mut targets = self.routing_targets();
        if last {
            if let Some(sup) = self.superior.filter(|s| !targets.contains(s)) {
                targets.push(sup);
            }
        }
        let mut outgoing: Vec<Outgoing<S>> = targets.into_iter().map(|t| self.message_to(t, last)).collect();
        let trained_round = Some(self.round);
        self.round += 1;
        outgoing.extend(self.replay_deferred()?);
        Ok(StepOutcome { progressed: true, trained_round, outgoing })
    }

    fn replay_deferred(&mut self) -> Result<Vec<Outgoing<S>>, ProtocolError> {
        let mut out = Vec::new();
        for msg in std::mem::take(&mut self.deferred) {
            out.extend(self.handle_message(msg)?);
        }
        Ok(out)
    }

    fn step_collecting(&mut self) -> Result<StepOutcome<S>, ProtocolError> {
        self.theta = self.aggregate_current()?;
        self.weight = self
            .contributions
            .block(Block::Base)
            .iter()
            .fold(S::zero(), |acc, c| acc + c.weight);
        self.history.push(self.theta.clone());
        self.contributions.clear(Block::Neighbor);
        self.fresh.clear();
        self.local_count += 1;
        self.round += 1;

        let all_finished = self.subordinates.iter().all(|s| self.finished_subs.contains(s));
        let outgoing = if all_finished {
            self.phase = Phase::Done;
            self.superior.into_iter().map(|s| self.message_to(s, true)).collect()
        } else {
            let targets = self.routing_targets();
            if self.superior.is_some_and(|s| targets.contains(&s)) {
                self.phase = Phase::AwaitingSuperior;
            }
            targets.into_iter().map(|t| self.message_to(t, false)).collect()
        };
        Ok(StepOutcome { progressed: true, trained_round: None, outgoing })
    }

    fn adopt_superior(&mut self) -> Result<StepOutcome<S>, ProtocolError> {
        let sup = self
            .contributions
            .take(Block::Superior)
            .into_iter()
            .next()
            .expect("ready implies a superior update");
        self.last_superior_tag = sup.round_tag;
        self.theta = match self.cfg.superior_mode {
            SuperiorMode::Replace => sup.theta,
            SuperiorMode::Weighted => WeightedAverage.aggregate(&AssembledContribution::from_columns(
                vec![self.theta.clone(), sup.theta],
                vec![self.weight, sup.weight],
            ))?,
        };
        self.local_count = 0;
        self.round += 1;
        self.phase = Phase::Collecting;
        let outgoing = self.routing_targets().into_iter().map(|t| self.message_to(t, false)).collect();
        Ok(StepOutcome { progressed: true, trained_round: None, outgoing })
    }

    /// After a terminal stops, folds in its neighbors' final models once all
    /// of them have arrived. Returns true when that aggregation happened.
    pub fn try_drain(&mut self) -> Result<bool, ProtocolError> {
        if !self.is_terminal() || !self.stopping() || self.drained {
            return Ok(false);
        }
        if !self.expects_neighbors() {
            self.drained = true;
            return Ok(false);
        }
        if !self.neighbors.iter().all(|&n| self.contributions.get(Block::Neighbor, n).is_some()) {
            return Ok(false);
        }
        self.contributions.clear(Block::Superior);
        let aggregated = self.aggregate_current()?;
        self.history.push(aggregated.clone());
        self.theta = aggregated;
        self.contributions.clear(Block::Neighbor);
        self.drained = true;
        Ok(true)
    }
}
