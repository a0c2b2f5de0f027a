//! Canonical holarchies and sequential reference trajectories.
//!
//! Builders:
//!
//! * `fedavg-N`: one aggregating root over `N` terminals, no peer edges.
//! * `p2p-ring-N`, `p2p-complete-N`: an inert root that only seeds the
//!   initial model, over `N` terminals wired by the given graph.
//! * `hfl-MxK`: root, `M` edge heads, `K` terminals per head, no peer edges.
//! * `hoal1p` .. `hoal4l`: the four experiment structures over the same ten
//!   terminals. The terminals form three groups, A = t1..t4, B = t5..t7 and
//!   C = t8..t10, with fixed intra-group edges (A: 1-2, 2-3, 3-4, 1-3;
//!   B and C: triangles).
//!   - `hoal1p`: inert root over all ten terminals; the group edges plus
//!     4-5, 7-8 and 10-1 close a ring with chords.
//!   - `hoal2l`: root over heads A, B, C, which form a triangle.
//!   - `hoal3l`: root over X and Y (edge X-Y); X over A; Y over B and C
//!     (edge B-C).
//!   - `hoal4l`: root over P and Q (edge P-Q); P over X over A; Q over Y over
//!     B and C (edge B-C).
//!
//! Terminal `tk` always carries dataset `shard-k`.
//!
//! The oracles recompute FedAvg, two-tier FedAvg and synchronous gossip
//! directly, without holons or messages, using the same per-client training
//! seeds as the simulator.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::Dataset;
use crate::holarchy::{CommunicationGraph, HolarchySpec, HolonId, HolonKind, HolonRecord};
use crate::learner::{round_seed, train_local, LearnerError, ModelSpec, TrainingConfig};
use crate::param::ParamVector;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum PresetError {
    #[error("a preset needs at least one terminal (and one edge head)")]
    Empty,
    #[error("edge {0}-{1} is out of range or a self-loop")]
    BadEdge(usize, usize),
    #[error("peer-to-peer graph is not connected")]
    Disconnected,
    #[error("unknown preset {0:?}")]
    UnknownName(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PresetName {
    FedAvg(usize),
    P2pRing(usize),
    P2pComplete(usize),
    Hfl { edges: usize, clients: usize },
    HoAL1P,
    HoAL2L,
    HoAL3L,
    HoAL4L,
}

impl PresetName {
    pub const EXPERIMENTS: [PresetName; 4] =
        [PresetName::HoAL1P, PresetName::HoAL2L, PresetName::HoAL3L, PresetName::HoAL4L];

    pub fn build(self) -> Result<HolarchySpec, PresetError> {
        match self {
            PresetName::FedAvg(n) => build_fedavg(n),
            PresetName::P2pRing(n) => build_p2p(n, &ring_edges(n)),
            PresetName::P2pComplete(n) => build_p2p(n, &complete_edges(n)),
            PresetName::Hfl { edges, clients } => build_hfl(edges, clients),
            other => Ok(build_experiment(other).expect("experiment preset")),
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PresetName::FedAvg(n) => write!(f, "fedavg-{n}"),
            PresetName::P2pRing(n) => write!(f, "p2p-ring-{n}"),
            PresetName::P2pComplete(n) => write!(f, "p2p-complete-{n}"),
            PresetName::Hfl { edges, clients } => write!(f, "hfl-{edges}x{clients}"),
            PresetName::HoAL1P => f.write_str("hoal1p"),
            PresetName::HoAL2L => f.write_str("hoal2l"),
            PresetName::HoAL3L => f.write_str("hoal3l"),
            PresetName::HoAL4L => f.write_str("hoal4l"),
        }
    }
}

impl FromStr for PresetName {
    type Err = PresetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || PresetError::UnknownName(s.to_string());
        let lower = s.to_ascii_lowercase();
        let count = |rest: &str| rest.parse::<usize>().map_err(|_| unknown());
        Ok(match lower.as_str() {
            "hoal1p" => PresetName::HoAL1P,
            "hoal2l" => PresetName::HoAL2L,
            "hoal3l" => PresetName::HoAL3L,
            "hoal4l" => PresetName::HoAL4L,
            _ => {
                if let Some(rest) = lower.strip_prefix("fedavg-") {
                    PresetName::FedAvg(count(rest)?)
                } else if let Some(rest) = lower.strip_prefix("p2p-ring-") {
                    PresetName::P2pRing(count(rest)?)
                } else if let Some(rest) = lower.strip_prefix("p2p-complete-") {
                    PresetName::P2pComplete(count(rest)?)
                } else if let Some(rest) = lower.strip_prefix("hfl-") {
                    let (m, k) = rest.split_once('x').ok_or_else(unknown)?;
                    PresetName::Hfl { edges: count(m)?, clients: count(k)? }
                } else {
                    return Err(unknown());
                }
            }
        })
    }
}

/// Accumulates records in declaration order, numbering each level from 1.
struct Builder {
    records: IndexMap<HolonId, HolonRecord>,
    graphs: Vec<CommunicationGraph>,
    next_index: Vec<u32>,
    terminals: usize,
}

impl Builder {
    fn new(inert_root: bool) -> (Self, HolonId) {
        let mut b = Builder { records: IndexMap::new(), graphs: Vec::new(), next_index: Vec::new(), terminals: 0 };
        let root = b.add(None, HolonKind::NonTerminal);
        b.records[&root].inert = inert_root;
        (b, root)
    }

    fn add(&mut self, parent: Option<HolonId>, kind: HolonKind) -> HolonId {
        let level = parent.map_or(0, |p| p.level + 1);
        if self.next_index.len() <= level as usize {
            self.next_index.resize(level as usize + 1, 1);
        }
        let id = HolonId::new(level, self.next_index[level as usize]);
        self.next_index[level as usize] += 1;
        let dataset_ref = (kind == HolonKind::Terminal).then(|| {
            self.terminals += 1;
            format!("shard-{}", self.terminals)
        });
        if let Some(p) = parent {
            self.records[&p].children.push(id);
        }
        self.records
            .insert(id, HolonRecord { id, kind, parent, children: Vec::new(), dataset_ref, inert: false });
        id
    }

    fn head(&mut self, parent: HolonId) -> HolonId {
        self.add(Some(parent), HolonKind::NonTerminal)
    }

    fn terminals(&mut self, parent: HolonId, n: usize) -> Vec<HolonId> {
        (0..n).map(|_| self.add(Some(parent), HolonKind::Terminal)).collect()
    }

    /// `edges` index into `members`, starting at 1.
    fn graph(&mut self, owner: HolonId, members: &[HolonId], edges: &[(usize, usize)]) {
        let edges = edges.iter().map(|&(a, b)| (members[a - 1], members[b - 1])).collect();
        self.graphs.push(CommunicationGraph { owner, edges });
    }

    fn finish(self) -> HolarchySpec {
        let root = *self.records.keys().next().expect("root");
        let mut graphs: std::collections::BTreeMap<_, _> = self
            .records
            .values()
            .filter(|r| !r.is_terminal())
            .map(|r| (r.id, CommunicationGraph::empty(r.id)))
            .collect();
        for g in self.graphs {
            graphs.insert(g.owner, g);
        }
        HolarchySpec { records: self.records, graphs, root }
    }
}

pub fn ring_edges(n: usize) -> Vec<(usize, usize)> {
    match n {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
    }
}

pub fn complete_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

pub fn build_fedavg(n: usize) -> Result<HolarchySpec, PresetError> {
    if n == 0 {
        return Err(PresetError::Empty);
    }
    let (mut b, root) = Builder::new(false);
    b.terminals(root, n);
    Ok(b.finish())
}

/// Inert root over `n` terminals; `edges` are 0-based terminal pairs and
/// must connect all of them.
pub fn build_p2p(n: usize, edges: &[(usize, usize)]) -> Result<HolarchySpec, PresetError> {
    if n == 0 {
        return Err(PresetError::Empty);
    }
    if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= n || b >= n || a == b) {
        return Err(PresetError::BadEdge(a, b));
    }
    let (mut b, root) = Builder::new(true);
    let members = b.terminals(root, n);
    let one_based: Vec<_> = edges.iter().map(|&(x, y)| (x + 1, y + 1)).collect();
    b.graph(root, &members, &one_based);
    let spec = b.finish();
    if !spec.graphs[&root].connects(&members) {
        return Err(PresetError::Disconnected);
    }
    Ok(spec)
}

pub fn build_hfl(m: usize, k: usize) -> Result<HolarchySpec, PresetError> {
    if m == 0 || k == 0 {
        return Err(PresetError::Empty);
    }
    let (mut b, root) = Builder::new(false);
    let edges: Vec<_> = (0..m).map(|_| b.head(root)).collect();
    for e in edges {
        b.terminals(e, k);
    }
    Ok(b.finish())
}

const GROUP_A: [(usize, usize); 4] = [(1, 2), (2, 3), (3, 4), (1, 3)];
const TRIANGLE: [(usize, usize); 3] = [(1, 2), (2, 3), (1, 3)];

/// One of the four ten-terminal experiment structures.
pub fn build_experiment(name: PresetName) -> Result<HolarchySpec, PresetError> {
    let spec = match name {
        PresetName::HoAL1P => {
            let (mut b, root) = Builder::new(true);
            let t = b.terminals(root, 10);
            let mut edges: Vec<(usize, usize)> = GROUP_A.to_vec();
            edges.extend(TRIANGLE.iter().map(|&(x, y)| (x + 4, y + 4)));
            edges.extend(TRIANGLE.iter().map(|&(x, y)| (x + 7, y + 7)));
            edges.extend([(4, 5), (7, 8), (10, 1)]);
            b.graph(root, &t, &edges);
            b.finish()
        }
        PresetName::HoAL2L => {
            let (mut b, root) = Builder::new(false);
            let heads = [b.head(root), b.head(root), b.head(root)];
            b.graph(root, &heads, &TRIANGLE);
            groups(&mut b, heads);
            b.finish()
        }
        PresetName::HoAL3L => {
            let (mut b, root) = Builder::new(false);
            let (x, y) = (b.head(root), b.head(root));
            b.graph(root, &[x, y], &[(1, 2)]);
            let a = b.head(x);
            let (hb, hc) = (b.head(y), b.head(y));
            b.graph(y, &[hb, hc], &[(1, 2)]);
            groups(&mut b, [a, hb, hc]);
            b.finish()
        }
        PresetName::HoAL4L => {
            let (mut b, root) = Builder::new(false);
            let (p, q) = (b.head(root), b.head(root));
            b.graph(root, &[p, q], &[(1, 2)]);
            let (x, y) = (b.head(p), b.head(q));
            let a = b.head(x);
            let (hb, hc) = (b.head(y), b.head(y));
            b.graph(y, &[hb, hc], &[(1, 2)]);
            groups(&mut b, [a, hb, hc]);
            b.finish()
        }
        other => return Err(PresetError::UnknownName(other.to_string())),
    };
    Ok(spec)
}

fn groups(b: &mut Builder, [a, hb, hc]: [HolonId; 3]) {
    let ta = b.terminals(a, 4);
    b.graph(a, &ta, &GROUP_A);
    let tb = b.terminals(hb, 3);
    b.graph(hb, &tb, &TRIANGLE);
    let tc = b.terminals(hc, 3);
    b.graph(hc, &tc, &TRIANGLE);
}

fn weighted_mean<S: Scalar>(models: &[&ParamVector<S>], weights: &[S]) -> ParamVector<S> {
    let dim = models[0].dim();
    let total = weights.iter().fold(S::zero(), |a, &w| a + w);
    let mut out = vec![S::zero(); dim];
    for (m, &w) in models.iter().zip(weights) {
        for (o, &v) in out.iter_mut().zip(m.iter()) {
            *o = *o + w * v;
        }
    }
    for o in &mut out {
        *o = *o / total;
    }
    ParamVector::new(out)
}

fn size<S: Scalar>(d: &Dataset<S>) -> S {
    S::from_count(d.len())
}

fn local_sgd<S: Scalar>(
    model: &ModelSpec,
    start: &ParamVector<S>,
    shard: &Dataset<S>,
    training: &TrainingConfig,
    client: usize,
    round: u64,
) -> Result<ParamVector<S>, LearnerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(round_seed(training.seed, client as u64, round));
    train_local(model, start, shard, training, &mut rng)
}

/// Textbook FedAvg: every round each client trains from the global model
/// and the server takes the size-weighted mean. Returns `[θ₀, θ₁, .., θ_R]`.
pub fn fedavg_oracle<S: Scalar>(
    model: &ModelSpec,
    shards: &[Dataset<S>],
    theta0: &ParamVector<S>,
    training: &TrainingConfig,
    rounds: u64,
) -> Result<Vec<ParamVector<S>>, LearnerError> {
    let weights: Vec<S> = shards.iter().map(size).collect();
    let mut out = vec![theta0.clone()];
    for t in 1..=rounds {
        let global = out.last().expect("non-empty");
        let trained = shards
            .iter()
            .enumerate()
            .map(|(i, shard)| local_sgd(model, global, shard, training, i, t))
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<_> = trained.iter().collect();
        out.push(weighted_mean(&refs, &weights));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HflTrace<S> {
    /// `θ₀` followed by every cloud model, one per synchronization.
    pub cloud: Vec<ParamVector<S>>,
    /// `edges[e][t-1]`: edge `e`'s aggregate in round `t`.
    pub edges: Vec<Vec<ParamVector<S>>>,
}

/// Two-tier FedAvg. `shards[e * k + j]` is client `j` of edge `e`. Edges
/// average their clients every round; the cloud averages the edges every
/// `edge_period` rounds and after the last round, and pushes its model back.
#[allow(clippy::too_many_arguments)]
pub fn hfl_oracle<S: Scalar>(
    model: &ModelSpec,
    m: usize,
    k: usize,
    shards: &[Dataset<S>],
    theta0: &ParamVector<S>,
    training: &TrainingConfig,
    rounds: u64,
    edge_period: u64,
) -> Result<HflTrace<S>, LearnerError> {
    assert_eq!(shards.len(), m * k, "one shard per client");
    assert!(edge_period >= 1);
    let mut edge_models = vec![theta0.clone(); m];
    let edge_weights: Vec<S> = (0..m)
        .map(|e| shards[e * k..(e + 1) * k].iter().fold(S::zero(), |a, d| a + size(d)))
        .collect();
    let mut trace = HflTrace { cloud: vec![theta0.clone()], edges: vec![Vec::new(); m] };
    for t in 1..=rounds {
        for e in 0..m {
            let clients = &shards[e * k..(e + 1) * k];
            let trained = clients
                .iter()
                .enumerate()
                .map(|(j, shard)| local_sgd(model, &edge_models[e], shard, training, e * k + j, t))
                .collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<_> = trained.iter().collect();
            let w: Vec<S> = clients.iter().map(size).collect();
            edge_models[e] = weighted_mean(&refs, &w);
            trace.edges[e].push(edge_models[e].clone());
        }
        if t % edge_period == 0 || t == rounds {
            let refs: Vec<_> = edge_models.iter().collect();
            let cloud = weighted_mean(&refs, &edge_weights);
            edge_models.iter_mut().for_each(|em| *em = cloud.clone());
            trace.cloud.push(cloud);
        }
    }
    Ok(trace)
}

/// Synchronous gossip over 0-based `edges`: every node trains from its
/// current model, then averages its own and its neighbors' trained models
/// by data size. Returns `x[i][t]` for `t = 0..=rounds`, starting from
/// `initial[i]`.
pub fn gossip_oracle<S: Scalar>(
    model: &ModelSpec,
    edges: &[(usize, usize)],
    shards: &[Dataset<S>],
    initial: &[ParamVector<S>],
    training: &TrainingConfig,
    rounds: u64,
) -> Result<Vec<Vec<ParamVector<S>>>, LearnerError> {
    let n = shards.len();
    assert_eq!(initial.len(), n, "one initial model per node");
    let mut adjacency = vec![Vec::new(); n];
    for &(a, b) in edges {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let mut x: Vec<Vec<ParamVector<S>>> = initial.iter().map(|t| vec![t.clone()]).collect();
    for t in 1..=rounds {
        let trained = (0..n)
            .map(|i| local_sgd(model, x[i].last().expect("non-empty"), &shards[i], training, i, t))
            .collect::<Result<Vec<_>, _>>()?;
        for i in 0..n {
            let mut refs = vec![&trained[i]];
            let mut w = vec![size(&shards[i])];
            for &j in &adjacency[i] {
                refs.push(&trained[j]);
                w.push(size(&shards[j]));
            }
            x[i].push(weighted_mean(&refs, &w));
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn h(l: u32, i: u32) -> HolonId {
        HolonId::new(l, i)
    }

    fn all_presets() -> Vec<PresetName> {
        let mut v = vec![
            PresetName::FedAvg(4),
            PresetName::FedAvg(10),
            PresetName::P2pRing(4),
            PresetName::P2pRing(10),
            PresetName::P2pComplete(4),
            PresetName::Hfl { edges: 2, clients: 3 },
        ];
        v.extend(PresetName::EXPERIMENTS);
        v
    }

    #[test]
    fn every_preset_validates() {
        for p in all_presets() {
            let spec = p.build().unwrap();
            assert_eq!(spec.validate(), vec![], "{p}");
            assert_eq!(p.to_string().parse::<PresetName>().unwrap(), p);
        }
    }

    #[test]
    fn fedavg_shape() {
        let spec = build_fedavg(4).unwrap();
        assert_eq!(spec.records.len(), 5);
        assert!(spec.graphs.values().all(|g| g.edges.is_empty()));
        assert_eq!(spec.subordinates(spec.root).unwrap().len(), 4);
        assert_eq!(spec.superiors(h(1, 3)).unwrap(), vec![h(0, 1)]);
        assert_eq!(spec.neighbors(h(1, 3)).unwrap(), vec![]);
        assert_eq!(build_fedavg(0), Err(PresetError::Empty));
    }

    #[test]
    fn p2p_shapes() {
        let spec = PresetName::P2pComplete(4).build().unwrap();
        assert!(spec.records[&spec.root].inert);
        assert_eq!(spec.neighbors(h(1, 2)).unwrap(), vec![h(1, 1), h(1, 3), h(1, 4)]);
        let ring = PresetName::P2pRing(10).build().unwrap();
        for t in ring.terminals() {
            assert_eq!(ring.neighbors(t.id).unwrap().len(), 2);
        }
        assert_eq!(build_p2p(4, &[(0, 1), (2, 3)]), Err(PresetError::Disconnected));
        assert_eq!(build_p2p(3, &[(0, 3)]), Err(PresetError::BadEdge(0, 3)));
    }

    #[test]
    fn hfl_shape() {
        let spec = build_hfl(2, 3).unwrap();
        assert_eq!(spec.records.len(), 9);
        assert_eq!(spec.depth(), 2);
        assert!(spec.graphs.values().all(|g| g.edges.is_empty()));
    }

    #[test]
    fn experiment_shapes() {
        let two = build_experiment(PresetName::HoAL2L).unwrap();
        assert_eq!(two.records.len(), 14);
        assert_eq!(two.depth(), 2);
        assert_eq!(two.subordinates(two.root).unwrap(), &[h(1, 1), h(1, 2), h(1, 3)]);
        assert_eq!(two.superiors(h(1, 2)).unwrap(), vec![h(0, 1)]);
        assert_eq!(build_experiment(PresetName::HoAL3L).unwrap().depth(), 3);
        assert_eq!(build_experiment(PresetName::HoAL4L).unwrap().depth(), 4);

        let one = build_experiment(PresetName::HoAL1P).unwrap();
        assert!(one.records[&one.root].inert);
        assert_eq!(one.neighbors(h(1, 2)).unwrap().len(), 2);
        assert!(one.graphs[&one.root].connects(one.subordinates(one.root).unwrap()));
    }

    /// Terminal-level edges, as dataset pairs, present in a spec.
    fn terminal_edges(spec: &HolarchySpec) -> Vec<(String, String)> {
        let mut out: Vec<_> = spec
            .graphs
            .values()
            .flat_map(|g| g.edges.iter())
            .filter(|(a, _)| spec.is_terminal(*a).unwrap())
            .map(|(a, b)| {
                let name = |x: &HolonId| spec.records[x].dataset_ref.clone().unwrap();
                let (x, y) = (name(a), name(b));
                if x < y { (x, y) } else { (y, x) }
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn experiments_share_terminal_groups() {
        let reference = terminal_edges(&build_experiment(PresetName::HoAL2L).unwrap());
        assert_eq!(reference.len(), 10);
        for p in [PresetName::HoAL3L, PresetName::HoAL4L] {
            assert_eq!(terminal_edges(&build_experiment(p).unwrap()), reference);
        }
        let one = terminal_edges(&build_experiment(PresetName::HoAL1P).unwrap());
        assert!(reference.iter().all(|e| one.contains(e)));
        assert_eq!(one.len(), 13);
        for p in PresetName::EXPERIMENTS {
            let spec = p.build().unwrap();
            let shards: Vec<_> = spec.terminals().map(|t| t.dataset_ref.clone().unwrap()).collect();
            assert_eq!(shards, (1..=10).map(|k| format!("shard-{k}")).collect::<Vec<_>>());
        }
    }

    #[test]
    fn golden_files_match_builders() {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("presets");
        for p in all_presets() {
            let path = dir.join(format!("{p}.toml"));
            let spec = p.build().unwrap();
            if std::env::var_os("HOLONIC_BLESS").is_some() {
                std::fs::write(&path, spec.to_config_text()).unwrap();
                continue;
            }
            let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(spec.to_config_text(), text, "{p}");
            assert_eq!(HolarchySpec::parse(&text).unwrap(), spec, "{p}");
        }
    }

    fn tiny_shards(n: usize) -> Vec<Dataset<f64>> {
        (0..n)
            .map(|i| {
                let x: Vec<f64> = (0..6).map(|j| (i * 6 + j) as f64 / 10.0).collect();
                let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
                Dataset::regression(x, 1, y).unwrap()
            })
            .collect()
    }

    fn cfg(lr: f64) -> TrainingConfig {
        TrainingConfig { batch_size: 4, learning_rate: lr, epochs_per_round: 2, seed: 9 }
    }

    #[test]
    fn fedavg_oracle_degenerate_cases() {
        let model = ModelSpec::linear(1);
        let theta0 = ParamVector::new(vec![0.3, -0.2]);
        let shards = tiny_shards(1);
        assert_eq!(fedavg_oracle(&model, &shards, &theta0, &cfg(0.1), 0).unwrap(), vec![theta0.clone()]);
        let traj = fedavg_oracle(&model, &shards, &theta0, &cfg(0.1), 3).unwrap();
        let mut theta = theta0.clone();
        for (t, expected) in traj.iter().enumerate().skip(1) {
            theta = local_sgd(&model, &theta, &shards[0], &cfg(0.1), 0, t as u64).unwrap();
            assert!(theta.max_abs_diff(expected) <= 1e-15);
        }
    }

    #[test]
    fn hfl_oracle_single_edge_is_fedavg() {
        let model = ModelSpec::linear(1);
        let theta0 = ParamVector::new(vec![0.1, 0.4]);
        let shards = tiny_shards(3);
        let fed = fedavg_oracle(&model, &shards, &theta0, &cfg(0.05), 4).unwrap();
        let hfl = hfl_oracle(&model, 1, 3, &shards, &theta0, &cfg(0.05), 4, 1).unwrap();
        assert_eq!(hfl.cloud.len(), 5);
        for (a, b) in fed.iter().zip(&hfl.cloud) {
            assert!(a.max_abs_diff(b) <= 1e-12);
        }
    }

    #[test]
    fn hfl_oracle_single_client_edges() {
        let model = ModelSpec::linear(1);
        let theta0 = ParamVector::new(vec![0.0, 0.0]);
        let shards = tiny_shards(2);
        let hfl = hfl_oracle(&model, 2, 1, &shards, &theta0, &cfg(0.05), 1, 2).unwrap();
        for e in 0..2 {
            let own = local_sgd(&model, &theta0, &shards[e], &cfg(0.05), e, 1).unwrap();
            assert!(hfl.edges[e][0].max_abs_diff(&own) <= 1e-15);
        }
    }

    #[test]
    fn gossip_oracle_consensus_and_isolation() {
        let model = ModelSpec::linear(1);
        let shards = tiny_shards(4);
        let initial: Vec<_> = (0..4).map(|i| ParamVector::new(vec![i as f64, -(i as f64)])).collect();
        let x = gossip_oracle(&model, &complete_edges(4), &shards, &initial, &cfg(0.0), 1).unwrap();
        for xi in &x {
            assert!(xi[1].max_abs_diff(&ParamVector::new(vec![1.5, -1.5])) <= 1e-12);
        }
        let x = gossip_oracle(&model, &[], &shards, &initial, &cfg(0.0), 3).unwrap();
        for (xi, init) in x.iter().zip(&initial) {
            assert!(xi.iter().all(|v| v == init));
        }
    }
}
