//! Relay network graphs: validation, level structure and the JSON file format.
//!
//! Node `0` is the source and node `M = node_count - 1` the destination.
//! Gains are written to files as decimal strings and parsed to `f64` once;
//! saving uses the shortest representation that parses back to the same
//! `f64`, so load/save round trips are bit-stable.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{self, ChannelError, ComplexGain, LinkGain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntennaMode {
    Scalar,
    #[serde(rename = "mimo2x2")]
    Mimo2x2,
}

impl AntennaMode {
    pub fn antennas(&self) -> usize {
        match self {
            AntennaMode::Scalar => 1,
            AntennaMode::Mimo2x2 => 2,
        }
    }
}

impl fmt::Display for AntennaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AntennaMode::Scalar => "scalar",
            AntennaMode::Mimo2x2 => "mimo2x2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub gain: LinkGain,
}

impl Edge {
    pub fn scalar(from: usize, to: usize, re: f64, im: f64) -> Self {
        Edge { from, to, gain: LinkGain::Scalar(ComplexGain::new(re, im)) }
    }
}

/// A violated network invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    TooFewNodes(usize),
    NodeOutOfRange { from: usize, to: usize },
    SelfLoop(usize),
    DuplicateEdge { from: usize, to: usize },
    AntennaMismatch { from: usize, to: usize },
    NonFiniteGain { from: usize, to: usize },
    NoPathToDestination,
    SourceNotHeard,
}

impl Violation {
    /// Violations detectable from a single edge list, without graph search.
    fn is_structural(&self) -> bool {
        !matches!(self, Violation::NoPathToDestination | Violation::SourceNotHeard)
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewNodes(n) => write!(f, "network needs at least 2 nodes, has {n}"),
            Violation::NodeOutOfRange { from, to } => {
                write!(f, "edge {from}->{to} references a node outside the network")
            }
            Violation::SelfLoop(node) => write!(f, "self-loop at node {node}"),
            Violation::DuplicateEdge { from, to } => write!(f, "duplicate edge {from}->{to}"),
            Violation::AntennaMismatch { from, to } => {
                write!(f, "edge {from}->{to} gain shape does not match the antenna mode")
            }
            Violation::NonFiniteGain { from, to } => write!(f, "edge {from}->{to} has a non-finite gain"),
            Violation::NoPathToDestination => f.write_str("no directed path from source to destination"),
            Violation::SourceNotHeard => f.write_str("source not heard by node 1"),
        }
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid network: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

fn join_violations(violations: &[Violation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Directed relay network with one source (node 0) and one destination (node M).
#[derive(Debug, Clone, PartialEq)]
pub struct RelayNetwork {
    node_count: usize,
    antenna_mode: AntennaMode,
    edges: Vec<Edge>,
}

impl RelayNetwork {
    /// Builds a network without checking it; see [`RelayNetwork::validate`].
    pub fn new(node_count: usize, antenna_mode: AntennaMode, edges: Vec<Edge>) -> Self {
        RelayNetwork { node_count, antenna_mode, edges }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// `M`, the number of non-source nodes.
    pub fn m(&self) -> usize {
        self.node_count.saturating_sub(1)
    }

    pub fn source(&self) -> usize {
        0
    }

    pub fn destination(&self) -> usize {
        self.m()
    }

    pub fn antenna_mode(&self) -> AntennaMode {
        self.antenna_mode
    }

    pub fn antennas(&self) -> usize {
        self.antenna_mode.antennas()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Incoming edges of `node`, ordered by transmitter.
    pub fn incoming(&self, node: usize) -> Vec<&Edge> {
        let mut edges: Vec<&Edge> = self.edges.iter().filter(|e| e.to == node).collect();
        edges.sort_by_key(|e| e.from);
        edges
    }

    /// Edge from `from` to `to`, if any.
    pub fn edge(&self, from: usize, to: usize) -> Option<&Edge> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    /// Every gain component on every edge, for the bit-depth rule.
    pub fn gain_components(&self) -> Vec<ComplexGain> {
        self.edges.iter().flat_map(|e| e.gain.components()).collect()
    }

    /// Bit depth of the superposition alphabet for this network.
    pub fn bit_depth(&self) -> Result<u32, ChannelError> {
        channel::compute_bit_depth(&self.gain_components())
    }

    /// Copy with edges sorted by `(from, to)`.
    pub fn canonicalize(&self) -> RelayNetwork {
        let mut edges = self.edges.clone();
        edges.sort_by_key(|e| (e.from, e.to));
        RelayNetwork { edges, ..self.clone() }
    }

    /// All invariant violations; empty when the network is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        if self.node_count < 2 {
            violations.push(Violation::TooFewNodes(self.node_count));
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            let (from, to) = (e.from, e.to);
            if from >= self.node_count || to >= self.node_count {
                violations.push(Violation::NodeOutOfRange { from, to });
            }
            if from == to {
                violations.push(Violation::SelfLoop(from));
            }
            if !seen.insert((from, to)) {
                violations.push(Violation::DuplicateEdge { from, to });
            }
            if e.gain.antennas() != self.antennas() {
                violations.push(Violation::AntennaMismatch { from, to });
            }
            if !e.gain.is_finite() {
                violations.push(Violation::NonFiniteGain { from, to });
            }
        }
        if self.node_count >= 2 {
            if !self.reachable_from_source()[self.destination()] {
                violations.push(Violation::NoPathToDestination);
            }
            if self.edge(0, 1).is_none() {
                violations.push(Violation::SourceNotHeard);
            }
        }
        violations
    }

    pub fn ensure_valid(&self) -> Result<(), TopologyError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(TopologyError::Invalid(violations))
        }
    }

    fn bfs_depths(&self) -> Vec<Option<usize>> {
        let mut depth = vec![None; self.node_count];
        if self.node_count == 0 {
            return depth;
        }
        depth[0] = Some(0);
        let mut queue = VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            let d = depth[u].unwrap_or(0);
            for e in self.edges.iter().filter(|e| e.from == u && e.to < self.node_count) {
                if depth[e.to].is_none() {
                    depth[e.to] = Some(d + 1);
                    queue.push_back(e.to);
                }
            }
        }
        depth
    }

    fn reachable_from_source(&self) -> Vec<bool> {
        self.bfs_depths().iter().map(Option::is_some).collect()
    }
}

/// Ordered partition of the nodes into levels; every edge joins consecutive levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelDecomposition {
    levels: Vec<Vec<usize>>,
    level_of: Vec<usize>,
}

impl LevelDecomposition {
    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    pub fn level_of(&self, node: usize) -> usize {
        self.level_of[node]
    }
}

/// Breadth-first level structure of the network, or `None` when some edge
/// does not join consecutive levels, some node is unreachable from the
/// source, or the destination is not in the last level. Non-layered networks
/// are run with the interleaved schedule.
pub fn layer_decomposition(net: &RelayNetwork) -> Option<LevelDecomposition> {
    let depths: Option<Vec<usize>> = net.bfs_depths().into_iter().collect();
    let level_of = depths?;
    for e in net.edges() {
        if level_of.get(e.to)? != &(level_of.get(e.from)? + 1) {
            return None;
        }
    }
    let level_count = level_of.iter().max().map_or(0, |d| d + 1);
    let mut levels = vec![Vec::new(); level_count];
    for (node, &level) in level_of.iter().enumerate() {
        levels[level].push(node);
    }
    if level_of[net.destination()] + 1 != level_count {
        return None;
    }
    Some(LevelDecomposition { levels, level_of })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    nodes: usize,
    antenna_mode: AntennaMode,
    edges: Vec<EdgeDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    from: usize,
    to: usize,
    gain: GainDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GainDoc {
    Scalar(ComplexDoc),
    Mimo([[ComplexDoc; 2]; 2]),
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComplexDoc {
    re: String,
    im: String,
}

impl ComplexDoc {
    fn from_gain(h: ComplexGain) -> Self {
        ComplexDoc { re: format_decimal(h.re), im: format_decimal(h.im) }
    }

    fn to_gain(&self, from: usize, to: usize) -> Result<ComplexGain, TopologyError> {
        Ok(ComplexGain::new(parse_decimal(&self.re, from, to)?, parse_decimal(&self.im, from, to)?))
    }
}

fn format_decimal(x: f64) -> String {
    format!("{x}")
}

fn parse_decimal(text: &str, from: usize, to: usize) -> Result<f64, TopologyError> {
    let trimmed = text.trim();
    let is_decimal = !trimmed.is_empty()
        && trimmed.chars().all(|c| c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E'));
    match trimmed.parse::<f64>() {
        Ok(x) if is_decimal && x.is_finite() => Ok(x),
        _ => Err(TopologyError::Schema(format!(
            "edge {from}->{to}: gain component {text:?} is not a finite decimal"
        ))),
    }
}

/// Parses a network document.
pub fn load_network(text: &str) -> Result<RelayNetwork, TopologyError> {
    let doc: NetworkDoc = serde_json::from_str(text).map_err(|e| TopologyError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut edges = Vec::with_capacity(doc.edges.len());
    for e in &doc.edges {
        let gain = match &e.gain {
            GainDoc::Scalar(h) => LinkGain::Scalar(h.to_gain(e.from, e.to)?),
            GainDoc::Mimo(m) => {
                let mut out = [[ComplexGain::ZERO; 2]; 2];
                for k in 0..2 {
                    for l in 0..2 {
                        out[k][l] = m[k][l].to_gain(e.from, e.to)?;
                    }
                }
                LinkGain::Mimo(out)
            }
        };
        edges.push(Edge { from: e.from, to: e.to, gain });
    }
    let net = RelayNetwork::new(doc.nodes, doc.antenna_mode, edges);
    let structural: Vec<String> = net
        .validate()
        .into_iter()
        .filter(Violation::is_structural)
        .map(|v| v.to_string())
        .collect();
    if !structural.is_empty() {
        return Err(TopologyError::Schema(structural.join("; ")));
    }
    Ok(net)
}

/// Serializes a network to its JSON document, edges in stored order.
pub fn save_network(net: &RelayNetwork) -> String {
    let doc = NetworkDoc {
        nodes: net.node_count,
        antenna_mode: net.antenna_mode,
        edges: net
            .edges
            .iter()
            .map(|e| EdgeDoc {
                from: e.from,
                to: e.to,
                gain: match e.gain {
                    LinkGain::Scalar(h) => GainDoc::Scalar(ComplexDoc::from_gain(h)),
                    LinkGain::Mimo(m) => GainDoc::Mimo(m.map(|row| row.map(ComplexDoc::from_gain))),
                },
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("network document serializes");
    text.push('\n');
    text
}
