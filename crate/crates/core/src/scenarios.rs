//! Replayable scenario files and the generators for the reference experiments.
//!
//! A [`ScenarioSpec`] is plain data that round-trips through JSON. Calling
//! [`ScenarioSpec::instance`] validates it and produces the network, paths,
//! mode and solver configuration that the engine consumes.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::{check_da_feasibility_bins, FeasibilityVerdict};
use crate::grid::{gaussian_mixture_windowed, JointMeasure, Measure, MixtureComponent, TimeGrid};
use crate::network::{validate_paths, CapacityProfile, Edge, NodeRole, Path, TransportNetwork};
use crate::sinkhorn::{
    ConvergenceReport, JointTarget, Mode, PlanCell, PlanQuery, Series, Solver, SolverConfig,
};

/// Largest capacity excess accepted by [`ExpectedProperty::CapacitySatisfied`].
pub const CAPACITY_TOL: f64 = 1e-8;
/// Largest deviation of total delivered mass from total supply.
pub const MASS_TOL: f64 = 1e-8;
/// Minimum `R²` of the log-error fit for [`ExpectedProperty::LinearConvergence`].
pub const FIT_R2_MIN: f64 = 0.95;
/// Iteration window (1-based, inclusive) of the log-error fit.
pub const FIT_WINDOW: (usize, usize) = (200, 1500);
/// Number of heaviest plan cells inspected by the strand check.
pub const STRAND_TOP_K: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_f: f64,
    pub n_t: usize,
}

/// Boundary marginal: explicit bin masses or a Gaussian mixture evaluated at
/// bin centers, optionally restricted to a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MarginalSpec {
    Bins(Vec<f64>),
    Mixture {
        mixture: Vec<MixtureComponent>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub node: String,
    pub marginal: MarginalSpec,
}

/// Flow-rate bound: a constant density or one density per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CapacitySpec {
    Density(f64),
    Profile(Vec<f64>),
}

/// Correlated Gaussian law of `(t₀, t_T)`, evaluated at bin centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BivariateGaussian {
    pub mean: (f64, f64),
    pub stddev: (f64, f64),
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JointLawSpec {
    /// Row-major `(t₀, t_T)` masses.
    Bins { mass: Vec<f64> },
    /// Cells that no chain of the pair's shortest path can realize are zeroed
    /// before normalization.
    Gaussian { gaussian: BivariateGaussian },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub source: String,
    pub sink: String,
    pub law: JointLawSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioMode {
    #[default]
    Independent,
    Coupled,
}

/// Machine-checkable assertions attached to a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedProperty {
    Converged,
    CapacitySatisfied,
    BoundaryPreserved,
    MonotoneStrand,
    MassBalance,
    LinearConvergence,
    JointPreserved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub grid: GridSpec,
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String, f64)>,
    pub sources: Vec<BoundarySpec>,
    pub sinks: Vec<BoundarySpec>,
    #[serde(default)]
    pub capacities: BTreeMap<String, CapacitySpec>,
    pub paths: Vec<Vec<String>>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mode: ScenarioMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub joint: Vec<JointSpec>,
    /// Minimum travel time used by the feasibility check, on top of the one
    /// bin per edge forced by strict time ordering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default)]
    pub expected: Vec<ExpectedProperty>,
}

/// Validated, solver-ready form of a [`ScenarioSpec`].
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub network: TransportNetwork,
    pub paths: Vec<Path>,
    pub mode: Mode,
    pub config: SolverConfig,
    pub delta: Option<f64>,
    pub expected: Vec<ExpectedProperty>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidScenario(msg.into())
}

impl MarginalSpec {
    pub fn to_measure(&self, grid: TimeGrid) -> Result<Measure> {
        match self {
            MarginalSpec::Bins(m) => Measure::new(grid, m.clone()),
            MarginalSpec::Mixture { mixture, window } => {
                gaussian_mixture_windowed(grid, mixture, *window)
            }
        }
    }
}

impl CapacitySpec {
    pub fn to_profile(&self, grid: TimeGrid) -> Result<CapacityProfile> {
        match self {
            CapacitySpec::Density(r) => CapacityProfile::from_density(grid, *r),
            CapacitySpec::Profile(r) => CapacityProfile::from_density_profile(grid, r),
        }
    }
}

impl JointLawSpec {
    /// `min_gap` is the smallest bin offset `t_T − t₀` any chain can realize.
    pub fn to_joint(&self, grid: TimeGrid, min_gap: usize) -> Result<JointMeasure> {
        match self {
            JointLawSpec::Bins { mass } => JointMeasure::new(grid, mass.clone()),
            JointLawSpec::Gaussian { gaussian: g } => {
                let (m0, mt) = g.mean;
                let (s0, st) = g.stddev;
                let rho = g.correlation;
                if !(s0 > 0.0 && st > 0.0 && rho.abs() < 1.0) {
                    return Err(invalid("bivariate gaussian needs positive stddevs and |correlation| < 1"));
                }
                let n = grid.n_t();
                let mut logd = vec![f64::NEG_INFINITY; n * n];
                for i in 0..n {
                    for j in (i + min_gap)..n {
                        let a = (grid.center(i) - m0) / s0;
                        let b = (grid.center(j) - mt) / st;
                        logd[i * n + j] = -(a * a - 2.0 * rho * a * b + b * b) / (2.0 * (1.0 - rho * rho));
                    }
                }
                let peak = logd.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if peak == f64::NEG_INFINITY {
                    return Err(invalid("joint law has no admissible cell"));
                }
                let raw: Vec<f64> = logd.iter().map(|l| (l - peak).exp()).collect();
                let total: f64 = raw.iter().sum();
                JointMeasure::new(grid, raw.into_iter().map(|x| x / total).collect())
            }
        }
    }
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario specs always serialize")
    }

    pub fn instance(&self) -> Result<Instance> {
        let grid = TimeGrid::new(self.grid.t_f, self.grid.n_t)?;
        let edges = self
            .edges
            .iter()
            .map(|(tail, head, weight)| Edge {
                tail: tail.clone(),
                head: head.clone(),
                weight: *weight,
            })
            .collect();
        let boundary = |list: &[BoundarySpec]| -> Result<Vec<(String, Measure)>> {
            list.iter()
                .map(|b| Ok((b.node.clone(), b.marginal.to_measure(grid)?)))
                .collect()
        };
        let caps = self
            .capacities
            .iter()
            .map(|(k, c)| Ok((k.clone(), c.to_profile(grid)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let network = TransportNetwork::new(
            grid,
            self.nodes.clone(),
            edges,
            boundary(&self.sources)?,
            boundary(&self.sinks)?,
            caps,
        )?;
        let paths = self
            .paths
            .iter()
            .map(|p| Path::new(p.iter().cloned()))
            .collect::<Result<Vec<_>>>()?;
        validate_paths(&network, &paths)?;
        self.solver.validate()?;
        if let Some(d) = self.delta {
            if !(d.is_finite() && d >= 0.0) {
                return Err(invalid(format!("delta must be nonnegative, got {d}")));
            }
        }

        let mode = match self.mode {
            ScenarioMode::Independent => {
                if !self.joint.is_empty() {
                    return Err(invalid("joint laws given for an independent scenario"));
                }
                Mode::Independent
            }
            ScenarioMode::Coupled => {
                let mut targets = Vec::with_capacity(self.joint.len());
                for j in &self.joint {
                    let min_gap = paths
                        .iter()
                        .filter(|p| p.source() == j.source && p.sink() == j.sink)
                        .map(Path::edge_count)
                        .min()
                        .ok_or_else(|| invalid(format!("no path joins {} and {}", j.source, j.sink)))?;
                    targets.push(JointTarget {
                        source: j.source.clone(),
                        sink: j.sink.clone(),
                        joint: j.law.to_joint(grid, min_gap)?,
                    });
                }
                Mode::Coupled(targets)
            }
        };

        Ok(Instance {
            name: self.name.clone(),
            network,
            paths,
            mode,
            config: self.solver.clone(),
            delta: self.delta,
            expected: self.expected.clone(),
        })
    }
}

impl Instance {
    /// Departure/arrival dominance test on the aggregate supply and demand,
    /// shifted by the larger of `delta` and the fewest edges on any path.
    pub fn feasibility(&self) -> Result<FeasibilityVerdict> {
        let grid = self.network.grid();
        let aggregate = |list: &[(String, Measure)]| -> Result<Measure> {
            let mut m = vec![0.0; grid.n_t()];
            for (_, mu) in list {
                for (a, b) in m.iter_mut().zip(mu.mass()) {
                    *a += b;
                }
            }
            Measure::new(grid, m)?.normalized()
        };
        let mu0 = aggregate(self.network.sources())?;
        let mu_t = aggregate(self.network.sinks())?;
        let hops = self.paths.iter().map(Path::edge_count).min().unwrap_or(0);
        let shift = hops.max(self.delta.map_or(0, |d| grid.bins_for(d)));
        check_da_feasibility_bins(&mu0, &mu_t, shift)
    }

    pub fn solver(&self) -> Result<Solver> {
        Solver::new(&self.network, &self.paths, self.mode.clone(), self.config.clone())
    }
}

/// Outcome of one expected-property check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub property: ExpectedProperty,
    pub passed: bool,
    pub detail: String,
}

/// Largest per-bin excess of any capacitated node's marginal over its cap.
pub fn max_capacity_excess(solver: &mut Solver, network: &TransportNetwork) -> f64 {
    let mut worst: f64 = 0.0;
    for (node, cap) in network.capacities() {
        if let Some(m) = solver.node_marginal(node) {
            for (x, c) in m.iter().zip(cap.per_bin()) {
                worst = worst.max(x - c);
            }
        }
    }
    worst
}

/// Number of cell pairs whose coordinates `a` and `b` are strictly
/// oppositely ordered.
pub fn order_reversals(cells: &[PlanCell], a: usize, b: usize) -> usize {
    let mut count = 0;
    for (i, x) in cells.iter().enumerate() {
        for y in &cells[i + 1..] {
            let da = x.bins[a] as i64 - y.bins[a] as i64;
            let db = x.bins[b] as i64 - y.bins[b] as i64;
            if da * db < 0 {
                count += 1;
            }
        }
    }
    count
}

/// Evaluate each property against a finished solve.
pub fn check_properties(
    instance: &Instance,
    solver: &mut Solver,
    report: &ConvergenceReport,
    properties: &[ExpectedProperty],
) -> Result<Vec<PropertyCheck>> {
    let tol = instance.config.tol;
    let mut out = Vec::with_capacity(properties.len());
    for &property in properties {
        let (passed, detail) = match property {
            ExpectedProperty::Converged => (
                report.converged,
                format!("{} iterations, final total {:e}", report.iterations, report.final_diagnostics.total()),
            ),
            ExpectedProperty::CapacitySatisfied => {
                let excess = max_capacity_excess(solver, &instance.network);
                (excess <= CAPACITY_TOL, format!("max excess {excess:e}"))
            }
            ExpectedProperty::BoundaryPreserved => {
                let d = solver.diagnostics();
                (d.e0 <= tol && d.et <= tol, format!("E0 {:e}, ET {:e}", d.e0, d.et))
            }
            ExpectedProperty::MassBalance => {
                let supply: f64 = instance.network.sources().iter().map(|(_, m)| m.total()).sum();
                let delivered: f64 = solver.path_masses().iter().sum();
                let mut arrived = 0.0;
                for (node, _) in instance.network.sinks() {
                    arrived += solver.node_marginal(node).map_or(0.0, |m| m.iter().sum());
                }
                let err = (delivered - supply).abs().max((arrived - supply).abs());
                (err <= MASS_TOL, format!("delivered {delivered}, arrived {arrived}, supply {supply}"))
            }
            ExpectedProperty::MonotoneStrand => {
                let query = PlanQuery {
                    top_k: Some(STRAND_TOP_K),
                    ..PlanQuery::default()
                };
                let mut reversals = 0;
                for p in 0..solver.path_count() {
                    let cells = solver.extract_plan(p, &query)?;
                    let len = instance.paths[p].len();
                    for pos in 0..len - 1 {
                        reversals += order_reversals(&cells, pos, pos + 1);
                    }
                }
                (reversals == 0, format!("{reversals} reversed pairs among the top {STRAND_TOP_K} cells"))
            }
            ExpectedProperty::LinearConvergence => {
                let (from, to) = FIT_WINDOW;
                let fits = [Series::E0, Series::ET].map(|s| report.log10_fit(s, from, to));
                let passed = fits
                    .iter()
                    .all(|f| f.is_some_and(|f| f.slope < 0.0 && f.r_squared >= FIT_R2_MIN));
                let detail = fits
                    .iter()
                    .zip(["E0", "ET"])
                    .map(|(f, n)| match f {
                        Some(f) => format!("{n}: slope {:.4e}, R² {:.4}", f.slope, f.r_squared),
                        None => format!("{n}: no fit"),
                    })
                    .collect::<Vec<_>>()
                    .join("; ");
                (passed, detail)
            }
            ExpectedProperty::JointPreserved => match &instance.mode {
                Mode::Independent => (false, "scenario is not coupled".to_string()),
                Mode::Coupled(targets) => {
                    let mut worst: f64 = 0.0;
                    for t in targets {
                        let model = solver
                            .joint_marginal(&t.source, &t.sink)
                            .ok_or_else(|| invalid(format!("no joint {}->{}", t.source, t.sink)))?;
                        let l1: f64 = model.iter().zip(t.joint.mass()).map(|(a, b)| (a - b).abs()).sum();
                        worst = worst.max(l1);
                    }
                    (worst <= tol, format!("joint L1 error {worst:e}"))
                }
            },
        };
        out.push(PropertyCheck { property, passed, detail });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Generators

/// Unimodal departure law centered at 0.2·t_f and arrival law at 0.8·t_f,
/// each with standard deviation 0.05·t_f and restricted to its half of the
/// horizon.
pub fn default_departure(t_f: f64) -> MarginalSpec {
    MarginalSpec::Mixture {
        mixture: vec![MixtureComponent::new(1.0, 0.2 * t_f, 0.05 * t_f)],
        window: Some((0.0, 0.5 * t_f)),
    }
}

pub fn default_arrival(t_f: f64) -> MarginalSpec {
    MarginalSpec::Mixture {
        mixture: vec![MixtureComponent::new(1.0, 0.8 * t_f, 0.05 * t_f)],
        window: Some((0.5 * t_f, t_f)),
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn line_edges(nodes: &[String]) -> Vec<(String, String, f64)> {
    nodes.windows(2).map(|w| (w[0].clone(), w[1].clone(), 1.0)).collect()
}

#[allow(clippy::too_many_arguments)]
fn single_od(
    name: &str,
    grid: GridSpec,
    nodes: Vec<String>,
    edges: Vec<(String, String, f64)>,
    paths: Vec<Vec<String>>,
    capacities: BTreeMap<String, CapacitySpec>,
    solver: SolverConfig,
    expected: Vec<ExpectedProperty>,
) -> ScenarioSpec {
    ScenarioSpec {
        name: name.to_string(),
        grid,
        sources: vec![BoundarySpec {
            node: nodes[0].clone(),
            marginal: default_departure(grid.t_f),
        }],
        sinks: vec![BoundarySpec {
            node: nodes[nodes.len() - 1].clone(),
            marginal: default_arrival(grid.t_f),
        }],
        nodes,
        edges,
        capacities,
        paths,
        solver,
        mode: ScenarioMode::Independent,
        joint: Vec::new(),
        delta: None,
        expected,
    }
}

/// One interior node with flow-rate bound 2 on a 100-bin unit horizon.
pub fn scenario_61() -> ScenarioSpec {
    let nodes = names(&["v0", "v1", "vT"]);
    let caps = BTreeMap::from([("v1".to_string(), CapacitySpec::Density(2.0))]);
    let solver = SolverConfig {
        epsilon: 0.02,
        max_iter: 20_000,
        tol: 1e-8,
        ..SolverConfig::default()
    };
    single_od(
        "scenario_61",
        GridSpec { t_f: 1.0, n_t: 100 },
        nodes.clone(),
        line_edges(&nodes),
        vec![nodes],
        caps,
        solver,
        vec![
            ExpectedProperty::Converged,
            ExpectedProperty::CapacitySatisfied,
            ExpectedProperty::BoundaryPreserved,
            ExpectedProperty::MonotoneStrand,
        ],
    )
}

/// Seven-node line `v0 → v1 → … → v5 → vT` with phase-shifted sinusoidal
/// flow-rate bounds at the five interior nodes, on a horizon of length 2.
pub fn scenario_62_line() -> ScenarioSpec {
    let grid = GridSpec { t_f: 2.0, n_t: 100 };
    let nodes = names(&["v0", "v1", "v2", "v3", "v4", "v5", "vT"]);
    let tg = TimeGrid::new(grid.t_f, grid.n_t).expect("valid grid");
    let caps = (1..=5)
        .map(|k| {
            let r = tg
                .centers()
                .into_iter()
                .map(|t| 2.0 + 0.6 * (2.0 * PI * t / grid.t_f + k as f64 * PI / 3.0).sin())
                .collect();
            (format!("v{k}"), CapacitySpec::Profile(r))
        })
        .collect();
    let solver = SolverConfig {
        epsilon: 0.1,
        max_iter: 20_000,
        tol: 1e-8,
        ..SolverConfig::default()
    };
    single_od(
        "scenario_62_line",
        grid,
        nodes.clone(),
        line_edges(&nodes),
        vec![nodes],
        caps,
        solver,
        vec![
            ExpectedProperty::Converged,
            ExpectedProperty::CapacitySatisfied,
            ExpectedProperty::BoundaryPreserved,
        ],
    )
}

type Topology = (Vec<String>, Vec<(String, String, f64)>, Vec<Vec<String>>);

fn three_route_topology() -> Topology {
    let nodes = names(&["v0", "v1", "v2", "v3", "v4", "v5", "v6", "vT"]);
    let paths = vec![
        names(&["v0", "v2", "v3", "v4", "v6", "vT"]),
        names(&["v0", "v1", "v3", "v4", "v5", "vT"]),
        names(&["v0", "v2", "v3", "v4", "v5", "vT"]),
    ];
    let mut edges: Vec<(String, String, f64)> = Vec::new();
    for p in &paths {
        for e in line_edges(p) {
            if !edges.iter().any(|x| x.0 == e.0 && x.1 == e.1) {
                edges.push(e);
            }
        }
    }
    (nodes, edges, paths)
}

fn uniform_caps(nodes: &[String], density: f64) -> BTreeMap<String, CapacitySpec> {
    nodes[1..nodes.len() - 1]
        .iter()
        .map(|v| (v.clone(), CapacitySpec::Density(density)))
        .collect()
}

/// Three routes sharing `v3` and `v4`, flow-rate bound 1.4 at every interior
/// node. A unit horizon would leave the shared nodes almost no slack (each
/// must stay busy for 1/1.4 of it), so the horizon has length 2.
pub fn scenario_63_network() -> ScenarioSpec {
    let (nodes, edges, paths) = three_route_topology();
    let caps = uniform_caps(&nodes, 1.4);
    let solver = SolverConfig {
        epsilon: 0.2,
        max_iter: 20_000,
        tol: 1e-8,
        ..SolverConfig::default()
    };
    single_od(
        "scenario_63",
        GridSpec { t_f: 2.0, n_t: 100 },
        nodes,
        edges,
        paths,
        caps,
        solver,
        vec![
            ExpectedProperty::Converged,
            ExpectedProperty::CapacitySatisfied,
            ExpectedProperty::BoundaryPreserved,
            ExpectedProperty::MassBalance,
        ],
    )
}

/// The three-route network run for exactly 1500 sweeps to record the error decay.
pub fn scenario_64_convergence() -> ScenarioSpec {
    let mut spec = scenario_63_network();
    spec.name = "scenario_64".to_string();
    spec.solver = SolverConfig {
        epsilon: 0.2,
        max_iter: 1500,
        min_iter: 1500,
        tol: 0.0,
        ..SolverConfig::default()
    };
    spec.expected = vec![ExpectedProperty::LinearConvergence];
    spec
}

/// One capacitated interior node with an anti-correlated joint
/// departure/arrival law: early departures want late arrivals.
pub fn scenario_62_coupled() -> ScenarioSpec {
    let grid = GridSpec { t_f: 1.0, n_t: 40 };
    let nodes = names(&["v0", "v1", "vT"]);
    let caps = BTreeMap::from([("v1".to_string(), CapacitySpec::Density(2.0))]);
    let solver = SolverConfig {
        epsilon: 0.02,
        max_iter: 20_000,
        ..SolverConfig::default()
    };
    let mut spec = single_od(
        "scenario_62_coupled",
        grid,
        nodes.clone(),
        line_edges(&nodes),
        vec![nodes],
        caps,
        solver,
        vec![
            ExpectedProperty::Converged,
            ExpectedProperty::CapacitySatisfied,
            ExpectedProperty::JointPreserved,
        ],
    );
    spec.mode = ScenarioMode::Coupled;
    spec.joint = vec![JointSpec {
        source: "v0".into(),
        sink: "vT".into(),
        law: JointLawSpec::Gaussian {
            gaussian: BivariateGaussian {
                mean: (0.2, 0.8),
                stddev: (0.05, 0.05),
                correlation: -0.8,
            },
        },
    }];
    // The boundary marginals are the joint law's own marginals.
    let inst_grid = TimeGrid::new(grid.t_f, grid.n_t).expect("valid grid");
    let joint = spec.joint[0].law.to_joint(inst_grid, 2).expect("valid joint law");
    spec.sources[0].marginal = MarginalSpec::Bins(joint.first_marginal().mass().to_vec());
    spec.sinks[0].marginal = MarginalSpec::Bins(joint.second_marginal().mass().to_vec());
    spec
}

/// Names accepted by [`by_name`], in presentation order.
pub const SCENARIO_NAMES: [&str; 5] = [
    "scenario_61",
    "scenario_62_line",
    "scenario_62_coupled",
    "scenario_63",
    "scenario_64",
];

/// Look a generator up by its full name or its short suffix (`"61"`, `"62_line"`, …).
pub fn by_name(name: &str) -> Option<ScenarioSpec> {
    let key = name.strip_prefix("scenario_").unwrap_or(name);
    match key {
        "61" => Some(scenario_61()),
        "62_line" | "62" => Some(scenario_62_line()),
        "62_coupled" => Some(scenario_62_coupled()),
        "63" => Some(scenario_63_network()),
        "64" => Some(scenario_64_convergence()),
        _ => None,
    }
}

/// Role of every node, in declaration order.
pub fn node_roles(network: &TransportNetwork) -> Vec<(String, NodeRole)> {
    network
        .nodes()
        .iter()
        .map(|n| (n.clone(), network.role(n).unwrap_or(NodeRole::Interior)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> Vec<ScenarioSpec> {
        SCENARIO_NAMES.iter().map(|n| by_name(n).unwrap()).collect()
    }

    #[test]
    fn every_generator_validates_and_is_feasible() {
        for spec in all() {
            let inst = spec.instance().unwrap_or_else(|e| panic!("{}: {e}", spec.name));
            let verdict = inst.feasibility().unwrap();
            assert!(verdict.feasible, "{}: margin {}", spec.name, verdict.margin);
        }
    }

    #[test]
    fn json_round_trip_is_lossless() {
        for spec in all() {
            let text = spec.to_json();
            let back = ScenarioSpec::from_json(&text).unwrap();
            assert_eq!(back, spec, "{}", spec.name);
            assert_eq!(back.to_json(), text);
        }
    }

    #[test]
    fn scenario_61_shape() {
        let inst = scenario_61().instance().unwrap();
        let net = &inst.network;
        assert_eq!(net.grid().n_t(), 100);
        let cap = net.capacity("v1");
        assert!(cap.per_bin().iter().all(|c| (c - 0.02).abs() < 1e-15));
        assert!(net.capacity("v0").is_unbounded() && net.capacity("vT").is_unbounded());
        for (_, m) in net.sources().iter().chain(net.sinks()) {
            assert!((m.total() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scenario_62_line_shape() {
        let inst = scenario_62_line().instance().unwrap();
        assert_eq!(inst.network.nodes().len(), 7);
        assert_eq!(inst.paths.len(), 1);
        assert_eq!(inst.paths[0].len() - 2, 5);
        let caps = inst.network.capacities();
        assert_eq!(caps.len(), 5);
        // phase shifts make the profiles pairwise different
        let profiles: Vec<&[f64]> = caps.values().map(|c| c.per_bin()).collect();
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(profiles[i], profiles[j]);
            }
        }
        // with six edges the earliest possible arrival is six bins after departure
        assert_eq!(inst.feasibility().unwrap().shift_bins, 6);
    }

    #[test]
    fn scenario_63_routes_share_v3_and_v4() {
        let inst = scenario_63_network().instance().unwrap();
        let inc = validate_paths(&inst.network, &inst.paths).unwrap();
        assert_eq!(inc.paths_through("v3"), &[0, 1, 2]);
        assert_eq!(inc.paths_through("v4"), &[0, 1, 2]);
        assert_eq!(inc.paths_through("v1"), &[1]);
        for v in ["v1", "v2", "v3", "v4", "v5", "v6"] {
            let c = inst.network.capacity(v);
            assert!(c.per_bin().iter().all(|x| (x - 1.4 * 0.02).abs() < 1e-15), "{v}");
        }
        assert_eq!(inst.network.edges().len(), 9);
    }

    #[test]
    fn scenario_64_forces_1500_sweeps() {
        let spec = scenario_64_convergence();
        assert_eq!(spec.solver.max_iter, 1500);
        assert_eq!(spec.solver.min_iter, 1500);
        assert_eq!(spec.paths, scenario_63_network().paths);
    }

    #[test]
    fn coupled_joint_is_anti_correlated_and_admissible() {
        let inst = scenario_62_coupled().instance().unwrap();
        let Mode::Coupled(targets) = &inst.mode else { panic!("not coupled") };
        let j = &targets[0].joint;
        let n = j.grid().n_t();
        let c = j.grid().centers();
        let (mut m0, mut mt) = (0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                m0 += j.get(i, k) * c[i];
                mt += j.get(i, k) * c[k];
                if k < i + 2 {
                    assert_eq!(j.get(i, k), 0.0);
                }
            }
        }
        let mut cov = 0.0;
        for i in 0..n {
            for k in 0..n {
                cov += j.get(i, k) * (c[i] - m0) * (c[k] - mt);
            }
        }
        assert!(cov < 0.0);
        let src = inst.network.source_marginal("v0").unwrap();
        for (a, b) in src.mass().iter().zip(j.first_marginal().mass()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = scenario_61();
        spec.sinks[0].marginal = MarginalSpec::Bins(vec![0.5 / 100.0; 100]);
        assert!(matches!(spec.instance(), Err(Error::NonProbability { .. }) | Err(Error::InvalidNetwork(_))));

        let mut spec = scenario_61();
        spec.paths = vec![names(&["v0", "vT"])];
        assert!(matches!(spec.instance(), Err(Error::InvalidPaths(_))));

        assert!(ScenarioSpec::from_json("{\"name\": 3}").is_err());
        let text = scenario_61().to_json().replace("\"grid\"", "\"grid\": {\"t_f\": 1.0, \"n_t\": 4}, \"extra\"");
        assert!(matches!(ScenarioSpec::from_json(&text), Err(Error::InvalidScenario(_))));
    }

    #[test]
    fn lookup_accepts_short_names() {
        assert_eq!(by_name("61").unwrap().name, "scenario_61");
        assert_eq!(by_name("scenario_63").unwrap().name, "scenario_63");
        assert!(by_name("65").is_none());
    }

    #[test]
    fn order_reversal_count() {
        let cell = |b: [usize; 3]| PlanCell { bins: b.to_vec(), mass: 1.0 };
        let cells = vec![cell([1, 5, 9]), cell([2, 4, 9]), cell([3, 6, 9])];
        assert_eq!(order_reversals(&cells, 0, 1), 1);
        assert_eq!(order_reversals(&cells, 1, 2), 0);
    }
}
