//! Static holarchy: holon records, membership and per-super-holon
//! communication graphs.
//!
//! A holarchy is written as TOML. Holon ids are `"<level>.<index>"` strings,
//! the root is the only holon without a `parent`, and children are ordered by
//! declaration:
//!
//! ```toml
//! [[holon]]
//! id = "0.1"
//! kind = "non-terminal"
//!
//! [[holon]]
//! id = "1.1"
//! kind = "terminal"
//! parent = "0.1"
//! dataset = "shard-1"
//!
//! [[graph]]
//! owner = "0.1"
//! edges = [["1.1", "1.2"]]
//! ```
//!
//! `inert = true` marks a root that only initiates learning and never
//! aggregates. Non-terminals without a `[[graph]]` entry get an empty graph.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HolonId {
    pub level: u32,
    pub index: u32,
}

impl HolonId {
    pub const fn new(level: u32, index: u32) -> Self {
        Self { level, index }
    }
}

impl fmt::Display for HolonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.level, self.index)
    }
}

impl FromStr for HolonId {
    type Err = HolarchyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HolarchyError::BadId(s.to_string());
        let (level, index) = s.trim().split_once('.').ok_or_else(bad)?;
        let level = level.parse().map_err(|_| bad())?;
        let index: u32 = index.parse().map_err(|_| bad())?;
        if index == 0 {
            return Err(bad());
        }
        Ok(Self { level, index })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HolonKind {
    Terminal,
    NonTerminal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HolonRecord {
    pub id: HolonId,
    pub kind: HolonKind,
    pub parent: Option<HolonId>,
    pub children: Vec<HolonId>,
    pub dataset_ref: Option<String>,
    /// Initiator-only root: it seeds the initial model but never aggregates.
    pub inert: bool,
}

impl HolonRecord {
    pub fn is_terminal(&self) -> bool {
        self.kind == HolonKind::Terminal
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommunicationGraph {
    pub owner: HolonId,
    pub edges: Vec<(HolonId, HolonId)>,
}

impl CommunicationGraph {
    pub fn empty(owner: HolonId) -> Self {
        Self { owner, edges: Vec::new() }
    }

    pub fn adjacent(&self, id: HolonId) -> impl Iterator<Item = HolonId> + '_ {
        self.edges.iter().filter_map(move |&(a, b)| {
            if a == id {
                Some(b)
            } else if b == id {
                Some(a)
            } else {
                None
            }
        })
    }

    /// True if every holon in `nodes` is reachable from the first one.
    pub fn connects(&self, nodes: &[HolonId]) -> bool {
        let Some(&start) = nodes.first() else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(cur) = queue.pop_front() {
            for next in self.adjacent(cur) {
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        nodes.iter().all(|n| seen.contains(n))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HolarchySpec {
    pub records: IndexMap<HolonId, HolonRecord>,
    pub graphs: BTreeMap<HolonId, CommunicationGraph>,
    pub root: HolonId,
}

#[derive(Debug, Error, PartialEq)]
pub enum HolarchyError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("malformed holon id {0:?}, expected \"<level>.<index>\" with index >= 1")]
    BadId(String),
    #[error("holon {0} declared more than once")]
    DuplicateHolon(HolonId),
    #[error("holon {child} references unknown parent {parent}")]
    DanglingParent { child: HolonId, parent: HolonId },
    #[error("graph references unknown holon {0}")]
    DanglingGraphRef(HolonId),
    #[error("graph for {0} declared more than once")]
    DuplicateGraph(HolonId),
    #[error("no root holon (a holon without parent)")]
    NoRoot,
    #[error("unknown holon {0}")]
    UnknownHolon(HolonId),
    #[error("the root {0} has no enclosing communication graph")]
    RootHasNoNeighbors(HolonId),
    #[error("no training-set size given for terminal {0}")]
    MissingTerminalSize(HolonId),
}

/// One broken invariant found by [`HolarchySpec::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    RootMissing(HolonId),
    RootNotAtLevelZero(HolonId),
    RootHasParent(HolonId),
    ExtraRoot(HolonId),
    IdMismatch { key: HolonId, record: HolonId },
    MissingParent(HolonId),
    DanglingReference { from: HolonId, to: HolonId },
    LevelMismatch { child: HolonId, parent: HolonId },
    MultipleParents { holon: HolonId, parents: Vec<HolonId> },
    MembershipMismatch { child: HolonId, parent: HolonId },
    DuplicateChild { parent: HolonId, child: HolonId },
    TerminalWithChildren(HolonId),
    NonTerminalWithoutChildren(HolonId),
    TerminalWithoutDataset(HolonId),
    NonTerminalWithDataset(HolonId),
    InertNonRoot(HolonId),
    MissingGraph(HolonId),
    GraphOwnerInvalid(HolonId),
    GraphKeyMismatch { key: HolonId, owner: HolonId },
    SelfLoop { owner: HolonId, holon: HolonId },
    CrossHolonEdge { owner: HolonId, a: HolonId, b: HolonId },
    DuplicateEdge { owner: HolonId, a: HolonId, b: HolonId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            RootMissing(r) => write!(f, "root {r} has no record"),
            RootNotAtLevelZero(r) => write!(f, "root {r} is not at level 0"),
            RootHasParent(r) => write!(f, "root {r} has a parent"),
            ExtraRoot(h) => write!(f, "{h} is a second level-0 holon"),
            IdMismatch { key, record } => write!(f, "record {record} stored under key {key}"),
            MissingParent(h) => write!(f, "{h} has no parent"),
            DanglingReference { from, to } => write!(f, "{from} references unknown holon {to}"),
            LevelMismatch { child, parent } => {
                write!(f, "{child} is not one level below its parent {parent}")
            }
            MultipleParents { holon, parents } => {
                write!(f, "{holon} is a member of several super-holons: {parents:?}")
            }
            MembershipMismatch { child, parent } => {
                write!(f, "{child} and {parent} disagree about membership")
            }
            DuplicateChild { parent, child } => write!(f, "{parent} lists {child} twice"),
            TerminalWithChildren(h) => write!(f, "terminal {h} has children"),
            NonTerminalWithoutChildren(h) => write!(f, "non-terminal {h} has no children"),
            TerminalWithoutDataset(h) => write!(f, "terminal {h} has no dataset"),
            NonTerminalWithDataset(h) => write!(f, "non-terminal {h} carries a dataset"),
            InertNonRoot(h) => write!(f, "{h} is inert but not a non-terminal root"),
            MissingGraph(h) => write!(f, "non-terminal {h} has no communication graph"),
            GraphOwnerInvalid(h) => write!(f, "graph owner {h} is not a non-terminal holon"),
            GraphKeyMismatch { key, owner } => write!(f, "graph of {owner} stored under {key}"),
            SelfLoop { owner, holon } => write!(f, "graph of {owner} has a self-loop at {holon}"),
            CrossHolonEdge { owner, a, b } => {
                write!(f, "graph of {owner} joins {a}-{b}, which are not both its members")
            }
            DuplicateEdge { owner, a, b } => write!(f, "graph of {owner} repeats edge {a}-{b}"),
        }
    }
}

fn normalized(a: HolonId, b: HolonId) -> (HolonId, HolonId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl HolarchySpec {
    pub fn record(&self, id: HolonId) -> Result<&HolonRecord, HolarchyError> {
        self.records.get(&id).ok_or(HolarchyError::UnknownHolon(id))
    }

    pub fn contains(&self, id: HolonId) -> bool {
        self.records.contains_key(&id)
    }

    pub fn is_terminal(&self, id: HolonId) -> Result<bool, HolarchyError> {
        Ok(self.record(id)?.is_terminal())
    }

    /// Superiors of `id`: its parent, or nothing for the root.
    pub fn superiors(&self, id: HolonId) -> Result<Vec<HolonId>, HolarchyError> {
        Ok(self.record(id)?.parent.into_iter().collect())
    }

    pub fn subordinates(&self, id: HolonId) -> Result<&[HolonId], HolarchyError> {
        Ok(&self.record(id)?.children)
    }

    /// Siblings adjacent to `id` in its parent's graph, in declaration order.
    pub fn neighbors(&self, id: HolonId) -> Result<Vec<HolonId>, HolarchyError> {
        let record = self.record(id)?;
        let parent = record.parent.ok_or(HolarchyError::RootHasNoNeighbors(id))?;
        let Some(graph) = self.graphs.get(&parent) else {
            return Ok(Vec::new());
        };
        let adjacent: BTreeSet<HolonId> = graph.adjacent(id).collect();
        Ok(self
            .record(parent)?
            .children
            .iter()
            .copied()
            .filter(|c| adjacent.contains(c))
            .collect())
    }

    /// Recursive training-set size: own sample count for terminals, sum over
    /// subordinates otherwise.
    pub fn aggregate_data_size(
        &self,
        id: HolonId,
        terminal_sizes: &HashMap<HolonId, usize>,
    ) -> Result<usize, HolarchyError> {
        let record = self.record(id)?;
        if record.is_terminal() {
            return terminal_sizes
                .get(&id)
                .copied()
                .ok_or(HolarchyError::MissingTerminalSize(id));
        }
        record
            .children
            .iter()
            .map(|&c| self.aggregate_data_size(c, terminal_sizes))
            .sum()
    }

    /// Terminal holons in declaration order.
    pub fn terminals(&self) -> impl Iterator<Item = &HolonRecord> {
        self.records.values().filter(|r| r.is_terminal())
    }

    /// Number of levels below the root.
    pub fn depth(&self) -> u32 {
        self.records.keys().map(|id| id.level).max().unwrap_or(0)
    }

    /// Declaration rank of every holon; used to order contribution columns.
    pub fn declaration_order(&self) -> HashMap<HolonId, usize> {
        self.records.keys().enumerate().map(|(i, &id)| (id, i)).collect()
    }

    /// Checks every structural invariant. Violations are data: an empty
    /// report means the holarchy is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();

        match self.records.get(&self.root) {
            None => out.push(Violation::RootMissing(self.root)),
            Some(r) => {
                if r.id.level != 0 {
                    out.push(Violation::RootNotAtLevelZero(r.id));
                }
                if r.parent.is_some() {
                    out.push(Violation::RootHasParent(r.id));
                }
            }
        }

        // Which parents list each holon as a child.
        let mut listed_by: HashMap<HolonId, Vec<HolonId>> = HashMap::new();
        for (key, rec) in &self.records {
            if *key != rec.id {
                out.push(Violation::IdMismatch { key: *key, record: rec.id });
            }
            let mut seen = BTreeSet::new();
            for &c in &rec.children {
                if !seen.insert(c) {
                    out.push(Violation::DuplicateChild { parent: rec.id, child: c });
                    continue;
                }
                if !self.records.contains_key(&c) {
                    out.push(Violation::DanglingReference { from: rec.id, to: c });
                    continue;
                }
                listed_by.entry(c).or_default().push(rec.id);
            }
        }
        let multi: BTreeSet<HolonId> = listed_by
            .iter()
            .filter(|(_, ps)| ps.len() > 1)
            .map(|(&h, _)| h)
            .collect();
        for &h in &multi {
            out.push(Violation::MultipleParents { holon: h, parents: listed_by[&h].clone() });
        }

        for rec in self.records.values() {
            let id = rec.id;
            if id != self.root {
                match rec.parent {
                    None if id.level == 0 => out.push(Violation::ExtraRoot(id)),
                    None => out.push(Violation::MissingParent(id)),
                    Some(p) => match self.records.get(&p) {
                        None => out.push(Violation::DanglingReference { from: id, to: p }),
                        Some(parent) => {
                            if id.level != p.level + 1 {
                                out.push(Violation::LevelMismatch { child: id, parent: p });
                            }
                            if !multi.contains(&id) && !parent.children.contains(&id) {
                                out.push(Violation::MembershipMismatch { child: id, parent: p });
                            }
                        }
                    },
                }
            }
            for &c in rec.children.iter().filter(|c| !multi.contains(c)) {
                if let Some(child) = self.records.get(&c) {
                    if child.parent.is_some_and(|p| p != id) {
                        out.push(Violation::MembershipMismatch { child: c, parent: id });
                    }
                }
            }
            match rec.kind {
                HolonKind::Terminal => {
                    if !rec.children.is_empty() {
                        out.push(Violation::TerminalWithChildren(id));
                    }
                    if rec.dataset_ref.is_none() {
                        out.push(Violation::TerminalWithoutDataset(id));
                    }
                    if rec.inert {
                        out.push(Violation::InertNonRoot(id));
                    }
                }
                HolonKind::NonTerminal => {
                    if rec.children.is_empty() {
                        out.push(Violation::NonTerminalWithoutChildren(id));
                    }
                    if rec.dataset_ref.is_some() {
                        out.push(Violation::NonTerminalWithDataset(id));
                    }
                    if rec.inert && id != self.root {
                        out.push(Violation::InertNonRoot(id));
                    }
                    if !self.graphs.contains_key(&id) {
                        out.push(Violation::MissingGraph(id));
                    }
                }
            }
        }

        for (key, graph) in &self.graphs {
            let owner = graph.owner;
            if *key != owner {
                out.push(Violation::GraphKeyMismatch { key: *key, owner });
            }
            let Some(owner_rec) = self.records.get(&owner).filter(|r| !r.is_terminal()) else {
                out.push(Violation::GraphOwnerInvalid(owner));
                continue;
            };
            let mut seen = BTreeSet::new();
            for &(a, b) in &graph.edges {
                if a == b {
                    out.push(Violation::SelfLoop { owner, holon: a });
                    continue;
                }
                if !owner_rec.children.contains(&a) || !owner_rec.children.contains(&b) {
                    out.push(Violation::CrossHolonEdge { owner, a, b });
                    continue;
                }
                if !seen.insert(normalized(a, b)) {
                    out.push(Violation::DuplicateEdge { owner, a, b });
                }
            }
        }
        out
    }

    /// Parses the TOML holarchy format described in the module docs.
    pub fn parse(text: &str) -> Result<Self, HolarchyError> {
        let doc: ConfigDoc = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_col(text, s.start))
                .unwrap_or((0, 0));
            HolarchyError::Syntax { line, column, message: e.message().to_string() }
        })?;

        let mut records: IndexMap<HolonId, HolonRecord> = IndexMap::new();
        for h in &doc.holon {
            let id: HolonId = h.id.parse()?;
            let parent = h.parent.as_deref().map(str::parse).transpose()?;
            let rec = HolonRecord {
                id,
                kind: h.kind,
                parent,
                children: Vec::new(),
                dataset_ref: h.dataset.clone(),
                inert: h.inert,
            };
            if records.insert(id, rec).is_some() {
                return Err(HolarchyError::DuplicateHolon(id));
            }
        }
        let links: Vec<(HolonId, HolonId)> = records
            .values()
            .filter_map(|r| r.parent.map(|p| (r.id, p)))
            .collect();
        for (child, parent) in links {
            records
                .get_mut(&parent)
                .ok_or(HolarchyError::DanglingParent { child, parent })?
                .children
                .push(child);
        }
        let root = records
            .values()
            .find(|r| r.parent.is_none())
            .map(|r| r.id)
            .ok_or(HolarchyError::NoRoot)?;

        let mut graphs = BTreeMap::new();
        for g in &doc.graph {
            let owner: HolonId = g.owner.parse()?;
            if !records.contains_key(&owner) {
                return Err(HolarchyError::DanglingGraphRef(owner));
            }
            let mut edges = Vec::with_capacity(g.edges.len());
            for [a, b] in &g.edges {
                let (a, b): (HolonId, HolonId) = (a.parse()?, b.parse()?);
                for end in [a, b] {
                    if !records.contains_key(&end) {
                        return Err(HolarchyError::DanglingGraphRef(end));
                    }
                }
                edges.push((a, b));
            }
            if graphs.insert(owner, CommunicationGraph { owner, edges }).is_some() {
                return Err(HolarchyError::DuplicateGraph(owner));
            }
        }
        for r in records.values().filter(|r| !r.is_terminal()) {
            graphs.entry(r.id).or_insert_with(|| CommunicationGraph::empty(r.id));
        }
        Ok(Self { records, graphs, root })
    }

    /// Emits the canonical TOML form accepted by [`HolarchySpec::parse`].
    pub fn to_config_text(&self) -> String {
        let doc = ConfigDoc {
            holon: self
                .records
                .values()
                .map(|r| HolonEntry {
                    id: r.id.to_string(),
                    kind: r.kind,
                    parent: r.parent.map(|p| p.to_string()),
                    dataset: r.dataset_ref.clone(),
                    inert: r.inert,
                })
                .collect(),
            graph: self
                .records
                .values()
                .filter_map(|r| self.graphs.get(&r.id))
                .map(|g| GraphEntry {
                    owner: g.owner.to_string(),
                    edges: g.edges.iter().map(|(a, b)| [a.to_string(), b.to_string()]).collect(),
                })
                .collect(),
        };
        toml::to_string(&doc).expect("holarchy config serializes")
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    #[serde(default)]
    holon: Vec<HolonEntry>,
    #[serde(default)]
    graph: Vec<GraphEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HolonEntry {
    id: String,
    kind: HolonKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dataset: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    inert: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphEntry {
    owner: String,
    #[serde(default)]
    edges: Vec<[String; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_FL: &str = r#"
[[holon]]
id = "0.1"
kind = "non-terminal"

[[holon]]
id = "1.1"
kind = "terminal"
parent = "0.1"
dataset = "a"

[[holon]]
id = "1.2"
kind = "terminal"
parent = "0.1"
dataset = "b"

[[holon]]
id = "1.3"
kind = "terminal"
parent = "0.1"
dataset = "c"

[[holon]]
id = "1.4"
kind = "terminal"
parent = "0.1"
dataset = "d"
"#;

    fn h(level: u32, index: u32) -> HolonId {
        HolonId::new(level, index)
    }

    #[test]
    fn parses_minimal_fl_shape() {
        let spec = HolarchySpec::parse(MINIMAL_FL).unwrap();
        assert_eq!(spec.records.len(), 5);
        assert_eq!(spec.root, h(0, 1));
        assert!(!spec.is_terminal(spec.root).unwrap());
        assert_eq!(spec.subordinates(h(0, 1)).unwrap(), &[h(1, 1), h(1, 2), h(1, 3), h(1, 4)]);
        assert!(spec.graphs[&h(0, 1)].edges.is_empty());
        assert!(spec.validate().is_empty());
    }

    #[test]
    fn dangling_parent_is_rejected() {
        let text = MINIMAL_FL.replace("parent = \"0.1\"\ndataset = \"d\"", "parent = \"0.9\"\ndataset = \"d\"");
        assert_eq!(
            HolarchySpec::parse(&text),
            Err(HolarchyError::DanglingParent { child: h(1, 4), parent: h(0, 9) })
        );
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let text = format!("{MINIMAL_FL}\n[[holon]]\nid = \"1.2\"\nkind = \"terminal\"\nparent = \"0.1\"\ndataset = \"x\"\n");
        assert_eq!(HolarchySpec::parse(&text), Err(HolarchyError::DuplicateHolon(h(1, 2))));
    }

    #[test]
    fn syntax_error_reports_position() {
        let text = "[[holon]]\nid = \"0.1\"\nkind = = \"terminal\"\n";
        match HolarchySpec::parse(text) {
            Err(HolarchyError::Syntax { line, column, .. }) => {
                assert_eq!(line, 3);
                assert!(column >= 1);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn bad_ids_are_rejected() {
        assert!("1".parse::<HolonId>().is_err());
        assert!("1.0".parse::<HolonId>().is_err());
        assert!("a.b".parse::<HolonId>().is_err());
        assert_eq!("2.7".parse::<HolonId>().unwrap(), h(2, 7));
    }

    #[test]
    fn terminal_listed_under_two_parents_is_one_violation() {
        let mut spec = HolarchySpec::parse(
            r#"
[[holon]]
id = "0.1"
kind = "non-terminal"
[[holon]]
id = "1.1"
kind = "non-terminal"
parent = "0.1"
[[holon]]
id = "1.2"
kind = "non-terminal"
parent = "0.1"
[[holon]]
id = "2.1"
kind = "terminal"
parent = "1.1"
dataset = "a"
[[holon]]
id = "2.2"
kind = "terminal"
parent = "1.2"
dataset = "b"
"#,
        )
        .unwrap();
        assert!(spec.validate().is_empty());
        spec.records.get_mut(&h(1, 2)).unwrap().children.push(h(2, 1));
        let report = spec.validate();
        assert_eq!(
            report,
            vec![Violation::MultipleParents { holon: h(2, 1), parents: vec![h(1, 1), h(1, 2)] }]
        );
    }

    #[test]
    fn cross_holon_edge_is_one_violation() {
        let mut spec = HolarchySpec::parse(
            r#"
[[holon]]
id = "0.1"
kind = "non-terminal"
[[holon]]
id = "1.1"
kind = "non-terminal"
parent = "0.1"
[[holon]]
id = "1.2"
kind = "non-terminal"
parent = "0.1"
[[holon]]
id = "2.1"
kind = "terminal"
parent = "1.1"
dataset = "a"
[[holon]]
id = "2.2"
kind = "terminal"
parent = "1.2"
dataset = "b"
"#,
        )
        .unwrap();
        spec.graphs.get_mut(&h(1, 1)).unwrap().edges.push((h(2, 1), h(2, 2)));
        assert_eq!(
            spec.validate(),
            vec![Violation::CrossHolonEdge { owner: h(1, 1), a: h(2, 1), b: h(2, 2) }]
        );
    }

    #[test]
    fn structural_violations_are_detected() {
        let mut spec = HolarchySpec::parse(MINIMAL_FL).unwrap();
        let g = spec.graphs.get_mut(&h(0, 1)).unwrap();
        g.edges.push((h(1, 1), h(1, 1)));
        g.edges.push((h(1, 1), h(1, 2)));
        g.edges.push((h(1, 2), h(1, 1)));
        spec.records.get_mut(&h(1, 3)).unwrap().dataset_ref = None;
        let report = spec.validate();
        assert!(report.contains(&Violation::SelfLoop { owner: h(0, 1), holon: h(1, 1) }));
        assert!(report.contains(&Violation::DuplicateEdge { owner: h(0, 1), a: h(1, 2), b: h(1, 1) }));
        assert!(report.contains(&Violation::TerminalWithoutDataset(h(1, 3))));
        assert_eq!(report.len(), 3);
    }

    #[test]
    fn level_mismatch_is_detected() {
        let text = MINIMAL_FL.replace("id = \"1.4\"", "id = \"2.4\"");
        let spec = HolarchySpec::parse(&text).unwrap();
        assert_eq!(spec.validate(), vec![Violation::LevelMismatch { child: h(2, 4), parent: h(0, 1) }]);
    }

    #[test]
    fn queries_on_minimal_fl() {
        let spec = HolarchySpec::parse(MINIMAL_FL).unwrap();
        assert!(spec.superiors(h(0, 1)).unwrap().is_empty());
        assert_eq!(spec.superiors(h(1, 2)).unwrap(), vec![h(0, 1)]);
        assert!(spec.subordinates(h(1, 2)).unwrap().is_empty());
        assert!(spec.neighbors(h(1, 2)).unwrap().is_empty());
        assert_eq!(spec.neighbors(h(0, 1)), Err(HolarchyError::RootHasNoNeighbors(h(0, 1))));
        assert_eq!(spec.superiors(h(5, 5)), Err(HolarchyError::UnknownHolon(h(5, 5))));
    }

    #[test]
    fn data_size_sums_over_subordinates() {
        let spec = HolarchySpec::parse(MINIMAL_FL).unwrap();
        let sizes: HashMap<_, _> = [(h(1, 1), 500), (h(1, 2), 500), (h(1, 3), 1), (h(1, 4), 2)].into();
        assert_eq!(spec.aggregate_data_size(h(1, 1), &sizes).unwrap(), 500);
        assert_eq!(spec.aggregate_data_size(h(0, 1), &sizes).unwrap(), 1003);
        let partial: HashMap<_, _> = [(h(1, 1), 500)].into();
        assert_eq!(
            spec.aggregate_data_size(h(0, 1), &partial),
            Err(HolarchyError::MissingTerminalSize(h(1, 2)))
        );
    }

    #[test]
    fn config_text_round_trips() {
        let spec = HolarchySpec::parse(MINIMAL_FL).unwrap();
        let text = spec.to_config_text();
        assert_eq!(HolarchySpec::parse(&text).unwrap(), spec);
    }
}
