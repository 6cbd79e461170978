//! Transport network: weighted digraph, boundary marginals, nodal capacities
//! and the prescribed admissible paths.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{Measure, TimeGrid};

/// Balance tolerance between total supply and total demand.
pub const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub tail: String,
    pub head: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeRole {
    Source,
    Interior,
    Sink,
}

impl NodeRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeRole::Source => "source",
            NodeRole::Interior => "interior",
            NodeRole::Sink => "sink",
        }
    }
}

/// Per-bin mass caps (`density · dt`); `+∞` marks an unconstrained bin.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityProfile {
    grid: TimeGrid,
    cap: Vec<f64>,
}

impl CapacityProfile {
    pub fn unbounded(grid: TimeGrid) -> Self {
        CapacityProfile {
            grid,
            cap: vec![f64::INFINITY; grid.n_t()],
        }
    }

    /// Constant flow-rate bound `r`, i.e. per-bin cap `r·dt`.
    pub fn from_density(grid: TimeGrid, r: f64) -> Result<Self> {
        Self::from_density_profile(grid, &vec![r; grid.n_t()])
    }

    /// Time-varying flow-rate bound given per bin as a density.
    pub fn from_density_profile(grid: TimeGrid, r: &[f64]) -> Result<Self> {
        let dt = grid.dt();
        Self::from_bin_caps(grid, r.iter().map(|x| x * dt).collect())
    }

    pub fn from_bin_caps(grid: TimeGrid, cap: Vec<f64>) -> Result<Self> {
        if cap.len() != grid.n_t() {
            return Err(Error::InvalidNetwork(format!(
                "capacity profile has {} bins, grid has {}",
                cap.len(),
                grid.n_t()
            )));
        }
        if cap.iter().any(|c| c.is_nan() || *c < 0.0) {
            return Err(Error::InvalidNetwork("negative or NaN capacity".into()));
        }
        Ok(CapacityProfile { grid, cap })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn per_bin(&self) -> &[f64] {
        &self.cap
    }

    pub fn is_unbounded(&self) -> bool {
        self.cap.iter().all(|c| c.is_infinite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportNetwork {
    grid: TimeGrid,
    nodes: Vec<String>,
    edges: Vec<Edge>,
    sources: Vec<(String, Measure)>,
    sinks: Vec<(String, Measure)>,
    capacities: BTreeMap<String, CapacityProfile>,
}

impl TransportNetwork {
    pub fn new(
        grid: TimeGrid,
        nodes: Vec<String>,
        edges: Vec<Edge>,
        sources: Vec<(String, Measure)>,
        sinks: Vec<(String, Measure)>,
        capacities: BTreeMap<String, CapacityProfile>,
    ) -> Result<Self> {
        let known: BTreeSet<&str> = nodes.iter().map(String::as_str).collect();
        if known.len() != nodes.len() {
            return Err(Error::InvalidNetwork("duplicate node id".into()));
        }
        let mut seen_edges = BTreeSet::new();
        for e in &edges {
            if !known.contains(e.tail.as_str()) || !known.contains(e.head.as_str()) {
                return Err(Error::InvalidNetwork(format!(
                    "edge {}->{} references an unknown node",
                    e.tail, e.head
                )));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "edge {}->{} has non-positive weight {}",
                    e.tail, e.head, e.weight
                )));
            }
            if e.tail == e.head {
                return Err(Error::InvalidNetwork(format!("self-loop at {}", e.tail)));
            }
            if !seen_edges.insert((e.tail.as_str(), e.head.as_str())) {
                return Err(Error::InvalidNetwork(format!(
                    "duplicate edge {}->{}",
                    e.tail, e.head
                )));
            }
        }
        let mut boundary = BTreeSet::new();
        for (name, m) in sources.iter().chain(&sinks) {
            if !known.contains(name.as_str()) {
                return Err(Error::InvalidNetwork(format!("unknown boundary node {name}")));
            }
            if !boundary.insert(name.as_str()) {
                return Err(Error::InvalidNetwork(format!(
                    "node {name} listed twice among sources/sinks"
                )));
            }
            if m.grid() != grid {
                return Err(Error::GridMismatch);
            }
        }
        if sources.is_empty() || sinks.is_empty() {
            return Err(Error::InvalidNetwork("need at least one source and one sink".into()));
        }
        let supply: f64 = sources.iter().map(|(_, m)| m.total()).sum();
        let demand: f64 = sinks.iter().map(|(_, m)| m.total()).sum();
        if (supply - demand).abs() > BALANCE_TOL {
            return Err(Error::InvalidNetwork(format!(
                "total supply {supply} does not match total demand {demand}"
            )));
        }
        for (name, cap) in &capacities {
            if !known.contains(name.as_str()) {
                return Err(Error::InvalidNetwork(format!("capacity on unknown node {name}")));
            }
            if cap.grid() != grid {
                return Err(Error::GridMismatch);
            }
        }
        Ok(TransportNetwork {
            grid,
            nodes,
            edges,
            sources,
            sinks,
            capacities,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn sources(&self) -> &[(String, Measure)] {
        &self.sources
    }

    pub fn sinks(&self) -> &[(String, Measure)] {
        &self.sinks
    }

    pub fn capacities(&self) -> &BTreeMap<String, CapacityProfile> {
        &self.capacities
    }

    pub fn role(&self, node: &str) -> Option<NodeRole> {
        if self.sources.iter().any(|(n, _)| n == node) {
            Some(NodeRole::Source)
        } else if self.sinks.iter().any(|(n, _)| n == node) {
            Some(NodeRole::Sink)
        } else if self.nodes.iter().any(|n| n == node) {
            Some(NodeRole::Interior)
        } else {
            None
        }
    }

    /// Capacity at `node`; nodes without a declared profile are unconstrained.
    pub fn capacity(&self, node: &str) -> CapacityProfile {
        self.capacities
            .get(node)
            .cloned()
            .unwrap_or_else(|| CapacityProfile::unbounded(self.grid))
    }

    pub fn edge_weight(&self, tail: &str, head: &str) -> Option<f64> {
        self.edges
            .iter()
            .find(|e| e.tail == tail && e.head == head)
            .map(|e| e.weight)
    }

    pub fn source_marginal(&self, node: &str) -> Option<&Measure> {
        self.sources.iter().find(|(n, _)| n == node).map(|(_, m)| m)
    }

    pub fn sink_marginal(&self, node: &str) -> Option<&Measure> {
        self.sinks.iter().find(|(n, _)| n == node).map(|(_, m)| m)
    }
}

/// Ordered node list from a source to a sink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    nodes: Vec<String>,
}

impl Path {
    pub fn new<S: Into<String>>(nodes: impl IntoIterator<Item = S>) -> Result<Self> {
        let nodes: Vec<String> = nodes.into_iter().map(Into::into).collect();
        if nodes.len() < 2 {
            return Err(Error::InvalidPaths(vec![PathError::TooShort]));
        }
        let distinct: BTreeSet<&String> = nodes.iter().collect();
        if distinct.len() != nodes.len() {
            return Err(Error::InvalidPaths(vec![PathError::RepeatedNode {
                path: None,
            }]));
        }
        Ok(Path { nodes })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn source(&self) -> &str {
        &self.nodes[0]
    }

    pub fn sink(&self) -> &str {
        &self.nodes[self.nodes.len() - 1]
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.nodes.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathError {
    TooShort,
    RepeatedNode { path: Option<usize> },
    UnknownNode { path: usize, node: String },
    BrokenPath { path: usize, tail: String, head: String },
    BadEndpoint { path: usize, node: String, expected: NodeRole },
    InteriorBoundary { path: usize, node: String },
}

impl fmt::Display for PathError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathError::TooShort => write!(f, "path needs at least two nodes"),
            PathError::RepeatedNode { path: Some(p) } => write!(f, "path {p} repeats a node"),
            PathError::RepeatedNode { path: None } => write!(f, "path repeats a node"),
            PathError::UnknownNode { path, node } => {
                write!(f, "path {path}: unknown node {node}")
            }
            PathError::BrokenPath { path, tail, head } => {
                write!(f, "BROKEN_PATH: path {path} uses missing edge {tail}->{head}")
            }
            PathError::BadEndpoint {
                path,
                node,
                expected,
            } => write!(
                f,
                "BAD_ENDPOINT: path {path} endpoint {node} is not a {}",
                expected.as_str()
            ),
            PathError::InteriorBoundary { path, node } => write!(
                f,
                "BAD_ENDPOINT: path {path} passes through boundary node {node}"
            ),
        }
    }
}

/// Node → indices of the paths visiting it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PathIncidence {
    by_node: BTreeMap<String, Vec<usize>>,
}

impl PathIncidence {
    pub fn paths_through(&self, node: &str) -> &[usize] {
        self.by_node.get(node).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<usize>)> {
        self.by_node.iter()
    }

    pub fn total_incidences(&self) -> usize {
        self.by_node.values().map(Vec::len).sum()
    }
}

/// Checks that every path follows existing edges from a source to a sink and
/// returns the node → path incidence sets.
pub fn validate_paths(net: &TransportNetwork, paths: &[Path]) -> Result<PathIncidence> {
    let mut errors = Vec::new();
    let mut inc = PathIncidence::default();
    if paths.is_empty() {
        return Err(Error::InvalidPaths(vec![PathError::TooShort]));
    }
    for (pi, path) in paths.iter().enumerate() {
        let nodes = path.nodes();
        let distinct: BTreeSet<&String> = nodes.iter().collect();
        if distinct.len() != nodes.len() {
            errors.push(PathError::RepeatedNode { path: Some(pi) });
        }
        for n in nodes {
            if net.role(n).is_none() {
                errors.push(PathError::UnknownNode {
                    path: pi,
                    node: n.clone(),
                });
            }
        }
        if net.role(path.source()) != Some(NodeRole::Source) {
            errors.push(PathError::BadEndpoint {
                path: pi,
                node: path.source().to_string(),
                expected: NodeRole::Source,
            });
        }
        if net.role(path.sink()) != Some(NodeRole::Sink) {
            errors.push(PathError::BadEndpoint {
                path: pi,
                node: path.sink().to_string(),
                expected: NodeRole::Sink,
            });
        }
        for n in &nodes[1..nodes.len() - 1] {
            if matches!(net.role(n), Some(NodeRole::Source | NodeRole::Sink)) {
                errors.push(PathError::InteriorBoundary {
                    path: pi,
                    node: n.clone(),
                });
            }
        }
        for w in nodes.windows(2) {
            if net.edge_weight(&w[0], &w[1]).is_none() {
                errors.push(PathError::BrokenPath {
                    path: pi,
                    tail: w[0].clone(),
                    head: w[1].clone(),
                });
            }
        }
        for n in nodes {
            inc.by_node.entry(n.clone()).or_default().push(pi);
        }
    }
    if errors.is_empty() {
        Ok(inc)
    } else {
        Err(Error::InvalidPaths(errors))
    }
}

/// Edge weights `w(v_{ℓ-1}, v_ℓ)` along the path, in order.
pub fn path_cost_terms(net: &TransportNetwork, path: &Path) -> Result<Vec<f64>> {
    path.nodes()
        .windows(2)
        .map(|w| {
            net.edge_weight(&w[0], &w[1]).ok_or_else(|| {
                Error::InvalidPaths(vec![PathError::BrokenPath {
                    path: 0,
                    tail: w[0].clone(),
                    head: w[1].clone(),
                }])
            })
        })
        .collect()
}
