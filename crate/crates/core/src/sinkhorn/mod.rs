//! Path-wise entropic Sinkhorn with shared nodal capacity multipliers.
//!
//! Every admissible path carries its own multi-marginal plan
//! `π^p = K^p · u(t₀) · Π w_v(t_v) · v(t_T)`, and nodes shared between paths
//! share their scaling. The solver never materialises a plan: node marginals
//! are contracted with forward/backward chain messages and each constraint
//! block is updated in closed form. All scalings are kept as logarithms so
//! zero-target bins (`log u = −∞`) need no special casing.
//!
//! In coupled mode the per-node source and sink scalings are replaced by one
//! boundary ratio `Λ(t₀, t_T)` per (source, sink) pair, shared by every path
//! connecting that pair.

mod domain;
mod messages;
mod plan;
mod report;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use domain::{lse_pairs, log_add_exp, Domain};
pub use messages::ChainMessages;
pub use plan::{PlanCell, PlanQuery};
pub use report::{linear_fit, ConvergenceReport, Diagnostics, IterationRecord, LinearFit, Series};

use crate::error::{Error, Result};
use crate::grid::{JointMeasure, TimeGrid};
use crate::kernels::{kernel_needs_log_domain, min_path_cost};
use crate::network::{validate_paths, NodeRole, Path, TransportNetwork};
use domain::EdgeKernel;
use messages::{ChainView, CoupledMessages};

/// Log-domain messages are also used when the cheapest route of some path
/// costs more than this many multiples of ε.
pub const LOG_DOMAIN_EXPONENT: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// Messages refreshed between blocks; the dual objective never decreases.
    #[default]
    GaussSeidel,
    /// Every block's closed-form update is computed from the same state and
    /// then applied with step `1/ω` in log space, `ω` being the largest number
    /// of blocks met by a single path. The step keeps the dual nondecreasing.
    Jacobi,
}

/// Geometric ε schedule: multiply by `factor` every `every` sweeps until
/// `epsilon_min`. Potentials `ε·log u` are held fixed across a change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annealing {
    pub factor: f64,
    pub every: usize,
    pub epsilon_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub max_iter: usize,
    /// Sweeps always run before the stopping test is consulted.
    pub min_iter: usize,
    pub tol: f64,
    pub sweep: SweepMode,
    /// `None` picks the domain from the kernel scale.
    pub log_domain: Option<bool>,
    pub annealing: Option<Annealing>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 0.05,
            max_iter: 5000,
            min_iter: 0,
            tol: 1e-6,
            sweep: SweepMode::GaussSeidel,
            log_domain: None,
            annealing: None,
        }
    }
}

impl SolverConfig {
    pub fn new(epsilon: f64) -> Self {
        SolverConfig {
            epsilon,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::BadParam(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::BadParam(format!("tol must be nonnegative, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::BadParam("max_iter must be at least 1".into()));
        }
        if let Some(a) = &self.annealing {
            if !(a.factor > 0.0 && a.factor < 1.0) || a.every == 0 {
                return Err(Error::BadParam("annealing needs 0 < factor < 1 and every ≥ 1".into()));
            }
            if !(a.epsilon_min > 0.0 && a.epsilon_min <= self.epsilon) {
                return Err(Error::BadParam("annealing needs 0 < epsilon_min ≤ epsilon".into()));
            }
        }
        Ok(())
    }

    fn final_epsilon(&self) -> f64 {
        self.annealing.map_or(self.epsilon, |a| a.epsilon_min)
    }
}

/// Prescribed joint law of departure at `source` and arrival at `sink`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTarget {
    pub source: String,
    pub sink: String,
    pub joint: JointMeasure,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Mode {
    #[default]
    Independent,
    Coupled(Vec<JointTarget>),
}

/// Snapshot of the log scalings.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornState {
    pub epsilon: f64,
    pub iteration: usize,
    pub domain: Domain,
    pub log_u: BTreeMap<String, Vec<f64>>,
    pub log_v: BTreeMap<String, Vec<f64>>,
    pub log_w: BTreeMap<String, Vec<f64>>,
    /// Row-major `(t₀, t_T)`, keyed by `(source, sink)`.
    pub log_lambda: BTreeMap<(String, String), Vec<f64>>,
}

fn exp_all(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.exp()).collect()
}

impl SinkhornState {
    pub fn u(&self, node: &str) -> Option<Vec<f64>> {
        self.log_u.get(node).map(|v| exp_all(v))
    }

    pub fn v(&self, node: &str) -> Option<Vec<f64>> {
        self.log_v.get(node).map(|v| exp_all(v))
    }

    pub fn w(&self, node: &str) -> Option<Vec<f64>> {
        self.log_w.get(node).map(|v| exp_all(v))
    }

    pub fn lambda(&self, source: &str, sink: &str) -> Option<Vec<f64>> {
        self.log_lambda
            .get(&(source.to_string(), sink.to_string()))
            .map(|v| exp_all(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Boundary(usize),
    Capacity(usize),
    Joint(usize),
}

#[derive(Debug, Clone)]
struct NodeSlot {
    name: String,
    role: NodeRole,
    target: Option<Vec<f64>>,
    cap: Option<Vec<f64>>,
    /// `(chain, position)` pairs where this node occurs.
    occ: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
struct Chain {
    nodes: Vec<usize>,
    kernels: Vec<usize>,
    weights: Vec<f64>,
    pair: Option<usize>,
}

#[derive(Debug, Clone)]
struct Pair {
    source: usize,
    sink: usize,
    target: Vec<f64>,
    log_lambda: Vec<f64>,
    chains: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Msgs {
    Independent(Vec<ChainMessages>),
    Coupled(Vec<CoupledMessages>),
}

#[derive(Debug, Clone, Copy, Default)]
struct Violation {
    e0: f64,
    et: f64,
    v: f64,
}

impl Violation {
    fn add(&mut self, o: Violation) {
        self.e0 += o.e0;
        self.et += o.et;
        self.v += o.v;
    }
}

/// Solver state plus everything needed to run sweeps on one instance.
#[derive(Debug, Clone)]
pub struct Solver {
    grid: TimeGrid,
    config: SolverConfig,
    epsilon: f64,
    domain: Domain,
    nodes: Vec<NodeSlot>,
    node_index: BTreeMap<String, usize>,
    chains: Vec<Chain>,
    edge_weights: Vec<f64>,
    edge_kernels: Vec<EdgeKernel>,
    log_scale: Vec<Vec<f64>>,
    pairs: Vec<Pair>,
    msgs: Msgs,
    blocks: Vec<Block>,
    sweeps: usize,
}

/// Converged (or exhausted) solver together with its trace.
#[derive(Debug, Clone)]
pub struct Solution {
    pub solver: Solver,
    pub report: ConvergenceReport,
}

impl Solution {
    pub fn state(&self) -> SinkhornState {
        self.solver.state()
    }
}

/// Build a solver and run it to convergence or `max_iter`.
pub fn solve(net: &TransportNetwork, paths: &[Path], mode: Mode, config: SolverConfig) -> Result<Solution> {
    let mut solver = Solver::new(net, paths, mode, config)?;
    let report = solver.run()?;
    Ok(Solution { solver, report })
}

impl Solver {
    pub fn new(net: &TransportNetwork, paths: &[Path], mode: Mode, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        validate_paths(net, paths)?;
        let grid = net.grid();
        let n = grid.n_t();
        let coupled = matches!(mode, Mode::Coupled(_));

        // Nodes in network order, restricted to boundary nodes and path members.
        let on_path: std::collections::BTreeSet<&str> =
            paths.iter().flat_map(|p| p.nodes().iter().map(String::as_str)).collect();
        let mut nodes = Vec::new();
        let mut node_index = BTreeMap::new();
        for name in net.nodes() {
            let role = net.role(name).expect("network node has a role");
            if role == NodeRole::Interior && !on_path.contains(name.as_str()) {
                continue;
            }
            let target = match (role, coupled) {
                (NodeRole::Source, false) => net.source_marginal(name).map(|m| m.mass().to_vec()),
                (NodeRole::Sink, false) => net.sink_marginal(name).map(|m| m.mass().to_vec()),
                _ => None,
            };
            let cap = (role == NodeRole::Interior)
                .then(|| net.capacity(name))
                .filter(|c| !c.is_unbounded())
                .map(|c| c.per_bin().to_vec());
            node_index.insert(name.clone(), nodes.len());
            nodes.push(NodeSlot {
                name: name.clone(),
                role,
                target,
                cap,
                occ: Vec::new(),
            });
        }

        let mut edge_ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut edge_weights = Vec::new();
        let mut chains = Vec::new();
        for (c, p) in paths.iter().enumerate() {
            let ids: Vec<usize> = p.nodes().iter().map(|s| node_index[s]).collect();
            let mut kernels = Vec::new();
            let mut weights = Vec::new();
            for pair in ids.windows(2) {
                let w = net
                    .edge_weight(&nodes[pair[0]].name, &nodes[pair[1]].name)
                    .expect("validated path edge");
                let id = *edge_ids.entry((pair[0], pair[1])).or_insert_with(|| {
                    edge_weights.push(w);
                    edge_weights.len() - 1
                });
                kernels.push(id);
                weights.push(w);
            }
            for (pos, &v) in ids.iter().enumerate() {
                nodes[v].occ.push((c, pos));
            }
            chains.push(Chain {
                nodes: ids,
                kernels,
                weights,
                pair: None,
            });
        }

        let mut pairs = Vec::new();
        if let Mode::Coupled(targets) = &mode {
            for jt in targets {
                let lookup = |name: &str, role: NodeRole| -> Result<usize> {
                    match node_index.get(name) {
                        Some(&i) if nodes[i].role == role => Ok(i),
                        _ => Err(Error::BadParam(format!(
                            "joint target endpoint {name} is not a {} node",
                            role.as_str()
                        ))),
                    }
                };
                let s = lookup(&jt.source, NodeRole::Source)?;
                let t = lookup(&jt.sink, NodeRole::Sink)?;
                if jt.joint.grid() != grid {
                    return Err(Error::GridMismatch);
                }
                if pairs.iter().any(|p: &Pair| p.source == s && p.sink == t) {
                    return Err(Error::BadParam(format!(
                        "duplicate joint target {}->{}",
                        jt.source, jt.sink
                    )));
                }
                pairs.push(Pair {
                    source: s,
                    sink: t,
                    target: jt.joint.mass().to_vec(),
                    log_lambda: vec![0.0; n * n],
                    chains: Vec::new(),
                });
            }
            for (c, chain) in chains.iter_mut().enumerate() {
                let (s, t) = (chain.nodes[0], *chain.nodes.last().unwrap());
                let k = pairs
                    .iter()
                    .position(|p| p.source == s && p.sink == t)
                    .ok_or_else(|| {
                        Error::BadParam(format!(
                            "path {c} ({} -> {}) has no joint target",
                            nodes[s].name, nodes[t].name
                        ))
                    })?;
                chain.pair = Some(k);
                pairs[k].chains.push(c);
            }
        }

        let eps_final = config.final_epsilon();
        let domain = match config.log_domain {
            Some(true) => Domain::Log,
            Some(false) => Domain::Linear,
            None => {
                let w_max = edge_weights.iter().cloned().fold(0.0, f64::max);
                let worst = chains
                    .iter()
                    .map(|c| min_path_cost(&c.weights, grid.t_f()))
                    .fold(0.0, f64::max);
                if kernel_needs_log_domain(eps_final, w_max, grid.t_f())
                    || worst / eps_final > LOG_DOMAIN_EXPONENT
                {
                    Domain::Log
                } else {
                    Domain::Linear
                }
            }
        };

        let msgs = if coupled {
            Msgs::Coupled(chains.iter().map(|c| CoupledMessages::new(c.nodes.len(), n, domain)).collect())
        } else {
            Msgs::Independent(chains.iter().map(|c| ChainMessages::new(c.nodes.len(), n, domain)).collect())
        };

        let blocks = Self::block_order(&nodes, &chains, pairs.len(), coupled);
        let log_scale = vec![vec![0.0; n]; nodes.len()];
        let mut solver = Solver {
            grid,
            epsilon: config.epsilon,
            config,
            domain,
            nodes,
            node_index,
            chains,
            edge_weights,
            edge_kernels: Vec::new(),
            log_scale,
            pairs,
            msgs,
            blocks,
            sweeps: 0,
        };
        solver.rebuild_kernels();
        Ok(solver)
    }

    fn block_order(nodes: &[NodeSlot], chains: &[Chain], n_pairs: usize, coupled: bool) -> Vec<Block> {
        let mut blocks = Vec::new();
        if coupled {
            blocks.extend((0..n_pairs).map(Block::Joint));
        } else {
            blocks.extend(
                (0..nodes.len())
                    .filter(|&v| nodes[v].role == NodeRole::Source)
                    .map(Block::Boundary),
            );
        }
        blocks.extend(
            interior_topological_order(nodes, chains)
                .into_iter()
                .filter(|&v| nodes[v].cap.is_some())
                .map(Block::Capacity),
        );
        if !coupled {
            blocks.extend(
                (0..nodes.len())
                    .filter(|&v| nodes[v].role == NodeRole::Sink)
                    .map(Block::Boundary),
            );
        }
        blocks
    }

    fn rebuild_kernels(&mut self) {
        let n = self.grid.n_t();
        let dt = self.grid.dt();
        let eps = self.epsilon;
        let domain = self.domain;
        self.edge_kernels = self
            .edge_weights
            .iter()
            .map(|&w| EdgeKernel::new(n, |s, t| -w / (eps * (t - s) as f64 * dt), domain))
            .collect();
        self.invalidate_all();
    }

    fn invalidate_all(&mut self) {
        match &mut self.msgs {
            Msgs::Independent(m) => m.iter_mut().for_each(ChainMessages::invalidate_all),
            Msgs::Coupled(m) => m.iter_mut().for_each(CoupledMessages::invalidate_all),
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn is_coupled(&self) -> bool {
        matches!(self.msgs, Msgs::Coupled(_))
    }

    pub fn path_count(&self) -> usize {
        self.chains.len()
    }

    pub fn path_nodes(&self, path: usize) -> Option<Vec<String>> {
        self.chains
            .get(path)
            .map(|c| c.nodes.iter().map(|&v| self.nodes[v].name.clone()).collect())
    }

    /// Names of all nodes the solver tracks, in network order.
    pub fn node_names(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.name.clone()).collect()
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_label(&self, i: usize) -> Option<String> {
        self.blocks.get(i).map(|b| match *b {
            Block::Boundary(v) => format!("{}:{}", self.nodes[v].role.as_str(), self.nodes[v].name),
            Block::Capacity(v) => format!("capacity:{}", self.nodes[v].name),
            Block::Joint(p) => format!(
                "joint:{}->{}",
                self.nodes[self.pairs[p].source].name, self.nodes[self.pairs[p].sink].name
            ),
        })
    }

    /// Flux of chain `c` at position `pos`, in the solver's domain.
    fn chain_flux(&mut self, c: usize, pos: usize) -> Vec<f64> {
        let chain = &self.chains[c];
        let view = ChainView {
            domain: self.domain,
            nodes: &chain.nodes,
            kernels: &chain.kernels,
            edge_kernels: &self.edge_kernels,
            log_scale: &self.log_scale,
        };
        match &mut self.msgs {
            Msgs::Independent(m) => m[c].flux(&view, pos),
            Msgs::Coupled(m) => {
                let lam = &self.pairs[chain.pair.expect("coupled chain has a pair")].log_lambda;
                m[c].flux(&view, pos, lam)
            }
        }
    }

    fn chain_matrix(&mut self, c: usize) -> Vec<f64> {
        let chain = &self.chains[c];
        let view = ChainView {
            domain: self.domain,
            nodes: &chain.nodes,
            kernels: &chain.kernels,
            edge_kernels: &self.edge_kernels,
            log_scale: &self.log_scale,
        };
        match &mut self.msgs {
            Msgs::Coupled(m) => m[c].chain_matrix(&view).to_vec(),
            Msgs::Independent(_) => unreachable!("chain matrices exist only in coupled mode"),
        }
    }

    fn node_flux(&mut self, v: usize) -> Vec<f64> {
        let d = self.domain;
        let mut acc = vec![d.zero(); self.grid.n_t()];
        for k in 0..self.nodes[v].occ.len() {
            let (c, pos) = self.nodes[v].occ[k];
            let f = self.chain_flux(c, pos);
            for (a, x) in acc.iter_mut().zip(f) {
                *a = d.add(*a, x);
            }
        }
        acc
    }

    fn pair_matrix(&mut self, p: usize) -> Vec<f64> {
        let d = self.domain;
        let n = self.grid.n_t();
        let mut acc = vec![d.zero(); n * n];
        for k in 0..self.pairs[p].chains.len() {
            let c = self.pairs[p].chains[k];
            let m = self.chain_matrix(c);
            for (a, x) in acc.iter_mut().zip(m) {
                *a = d.add(*a, x);
            }
        }
        acc
    }

    fn block_flux(&mut self, b: Block) -> Vec<f64> {
        match b {
            Block::Boundary(v) | Block::Capacity(v) => self.node_flux(v),
            Block::Joint(p) => self.pair_matrix(p),
        }
    }

    /// Largest number of blocks any single path depends on.
    fn jacobi_width(&self) -> usize {
        self.chains
            .iter()
            .map(|c| {
                let caps = c.nodes.iter().filter(|&&v| self.nodes[v].cap.is_some()).count();
                caps + if c.pair.is_some() { 1 } else { 2 }
            })
            .max()
            .unwrap_or(1)
    }

    fn apply_block(&mut self, b: Block, flux: &[f64], step: f64) -> Result<Violation> {
        let d = self.domain;
        let mut viol = Violation::default();
        match b {
            Block::Boundary(v) => {
                let slot = &self.nodes[v];
                let target = slot.target.as_ref().expect("boundary node has a target");
                let ls = &self.log_scale[v];
                let mut new = vec![0.0; ls.len()];
                let mut err = 0.0;
                for t in 0..ls.len() {
                    let la = d.to_log(flux[t]);
                    err += (log_product_exp(ls[t], la) - target[t]).abs();
                    new[t] = if target[t] == 0.0 {
                        f64::NEG_INFINITY
                    } else if la == f64::NEG_INFINITY {
                        return Err(Error::UnreachableMass {
                            node: slot.name.clone(),
                            bin: t,
                            mass: target[t],
                        });
                    } else {
                        target[t].ln() - la
                    };
                }
                if slot.role == NodeRole::Source {
                    viol.e0 = err;
                } else {
                    viol.et = err;
                }
                relax(&mut self.log_scale[v], new, step);
                self.invalidate_node(v);
            }
            Block::Capacity(v) => {
                let cap = self.nodes[v].cap.as_ref().expect("capacity block has caps");
                let ls = &self.log_scale[v];
                let mut new = vec![0.0; ls.len()];
                for t in 0..ls.len() {
                    let la = d.to_log(flux[t]);
                    viol.v += (log_product_exp(ls[t], la) - cap[t]).max(0.0);
                    new[t] = if cap[t].is_infinite() || la == f64::NEG_INFINITY {
                        0.0
                    } else {
                        (cap[t].ln() - la).min(0.0)
                    };
                }
                relax(&mut self.log_scale[v], new, step);
                self.invalidate_node(v);
            }
            Block::Joint(p) => {
                let n = self.grid.n_t();
                let pair = &self.pairs[p];
                let mut new = vec![0.0; n * n];
                let mut col_model = vec![0.0; n];
                let mut col_target = vec![0.0; n];
                for i in 0..n {
                    for j in 0..n {
                        let k = i * n + j;
                        let la = d.to_log(flux[k]);
                        let model = log_product_exp(pair.log_lambda[k], la);
                        let mu = pair.target[k];
                        viol.e0 += (model - mu).abs();
                        col_model[j] += model;
                        col_target[j] += mu;
                        new[k] = if mu == 0.0 {
                            f64::NEG_INFINITY
                        } else if la == f64::NEG_INFINITY {
                            return Err(Error::UnreachableJointMass {
                                origin: self.nodes[pair.source].name.clone(),
                                destination: self.nodes[pair.sink].name.clone(),
                                t0_bin: i,
                                tt_bin: j,
                                mass: mu,
                            });
                        } else {
                            mu.ln() - la
                        };
                    }
                }
                viol.et = col_model.iter().zip(&col_target).map(|(a, b)| (a - b).abs()).sum();
                relax(&mut self.pairs[p].log_lambda, new, step);
            }
        }
        Ok(viol)
    }

    fn invalidate_node(&mut self, v: usize) {
        for &(c, pos) in &self.nodes[v].occ {
            match &mut self.msgs {
                Msgs::Independent(m) => m[c].invalidate(pos),
                Msgs::Coupled(m) => m[c].invalidate(pos),
            }
        }
    }

    /// Apply one block update (Gauss–Seidel step). Returns that block's
    /// constraint violation measured just before the update.
    pub fn update_block(&mut self, i: usize) -> Result<f64> {
        let b = *self
            .blocks
            .get(i)
            .ok_or_else(|| Error::BadParam(format!("no block {i}")))?;
        let flux = self.block_flux(b);
        let v = self.apply_block(b, &flux, 1.0)?;
        Ok(v.e0 + v.et + v.v)
    }

    /// One full sweep over every block. The returned diagnostics hold each
    /// block's violation as seen right before its own update, and the dual
    /// objective after the sweep.
    pub fn sweep(&mut self) -> Result<Diagnostics> {
        let mut total = Violation::default();
        match self.config.sweep {
            SweepMode::GaussSeidel => {
                for i in 0..self.blocks.len() {
                    let b = self.blocks[i];
                    let flux = self.block_flux(b);
                    total.add(self.apply_block(b, &flux, 1.0)?);
                }
            }
            SweepMode::Jacobi => {
                let blocks = self.blocks.clone();
                let step = 1.0 / self.jacobi_width() as f64;
                let fluxes: Vec<Vec<f64>> = blocks.iter().map(|&b| self.block_flux(b)).collect();
                for (b, f) in blocks.iter().zip(&fluxes) {
                    total.add(self.apply_block(*b, f, step)?);
                }
            }
        }
        self.sweeps += 1;
        Ok(Diagnostics {
            e0: total.e0,
            et: total.et,
            v: total.v,
            objective: self.dual_objective(),
        })
    }

    /// Run sweeps until `E0 + ET + V ≤ tol` (after `min_iter`) or `max_iter`.
    pub fn run(&mut self) -> Result<ConvergenceReport> {
        let start = Instant::now();
        let mut records = Vec::new();
        let mut converged_early = false;
        for it in 1..=self.config.max_iter {
            let d = self.sweep()?;
            records.push(IterationRecord {
                iter: it,
                e0: d.e0,
                et: d.et,
                v: d.v,
                objective: d.objective,
                epsilon: self.epsilon,
                elapsed_s: start.elapsed().as_secs_f64(),
            });
            let annealing_left = self.anneal_step(it);
            if !annealing_left && it >= self.config.min_iter && d.e0 + d.et + d.v <= self.config.tol {
                let fin = self.diagnostics();
                if fin.total() <= self.config.tol {
                    converged_early = true;
                    break;
                }
            }
        }
        let final_diagnostics = self.diagnostics();
        let converged = final_diagnostics.total() <= self.config.tol;
        debug_assert!(!converged_early || converged);
        Ok(ConvergenceReport {
            iterations: records.len(),
            records,
            converged,
            final_diagnostics,
            domain: self.domain,
            epsilon: self.epsilon,
            annealed: self.config.annealing.is_some(),
            wall_time_s: start.elapsed().as_secs_f64(),
        })
    }

    /// Applies the ε schedule after sweep `it`; true while ε is above its floor.
    fn anneal_step(&mut self, it: usize) -> bool {
        let Some(a) = self.config.annealing else {
            return false;
        };
        if self.epsilon > a.epsilon_min && it.is_multiple_of(a.every) {
            let next = (self.epsilon * a.factor).max(a.epsilon_min);
            let ratio = self.epsilon / next;
            for ls in self.log_scale.iter_mut().chain(self.pairs.iter_mut().map(|p| &mut p.log_lambda)) {
                for x in ls.iter_mut() {
                    if x.is_finite() {
                        *x *= ratio;
                    }
                }
            }
            self.epsilon = next;
            self.rebuild_kernels();
        }
        self.epsilon > a.epsilon_min
    }

    /// Entropic dual `ε[Σ⟨log u, μ⁰⟩ + Σ⟨log v, μᵀ⟩ + Σ⟨log w, r⟩ + Σ⟨log Λ, μ⁰ᵀ⟩] − ε·(total plan mass)`.
    pub fn dual_objective(&mut self) -> f64 {
        let mut g = 0.0;
        for (v, slot) in self.nodes.iter().enumerate() {
            if let Some(target) = &slot.target {
                g += inner(&self.log_scale[v], target);
            }
            if let Some(cap) = &slot.cap {
                g += inner(&self.log_scale[v], cap);
            }
        }
        for p in &self.pairs {
            g += inner(&p.log_lambda, &p.target);
        }
        let mass: f64 = self.path_masses().iter().sum();
        self.epsilon * (g - mass)
    }

    /// Total unnormalised mass of every path plan.
    pub fn path_masses(&mut self) -> Vec<f64> {
        (0..self.chains.len()).map(|c| self.chain_mass(c)).collect()
    }

    fn chain_mass(&mut self, c: usize) -> f64 {
        let d = self.domain;
        match self.chains[c].pair {
            None => {
                let last = self.chains[c].nodes.len() - 1;
                let v = self.chains[c].nodes[last];
                let f = self.chain_flux(c, last);
                f.iter()
                    .zip(&self.log_scale[v])
                    .map(|(x, l)| log_product_exp(*l, d.to_log(*x)))
                    .sum()
            }
            Some(p) => {
                let m = self.chain_matrix(c);
                m.iter()
                    .zip(&self.pairs[p].log_lambda)
                    .map(|(x, l)| log_product_exp(*l, d.to_log(*x)))
                    .sum()
            }
        }
    }

    fn marginal_of(&mut self, v: usize) -> Vec<f64> {
        let d = self.domain;
        let flux = self.node_flux(v);
        flux.iter()
            .zip(&self.log_scale[v])
            .map(|(x, l)| log_product_exp(*l, d.to_log(*x)))
            .collect()
    }

    /// Model marginal `m_v = s_v ⊙ Σ_p A_v^p` at one node.
    pub fn node_marginal(&mut self, node: &str) -> Option<Vec<f64>> {
        let v = *self.node_index.get(node)?;
        Some(self.marginal_of(v))
    }

    pub fn node_marginals(&mut self) -> BTreeMap<String, Vec<f64>> {
        (0..self.nodes.len())
            .map(|v| (self.nodes[v].name.clone(), self.marginal_of(v)))
            .collect()
    }

    /// Model joint law of departure and arrival for a coupled pair,
    /// row-major `(t₀, t_T)`.
    pub fn joint_marginal(&mut self, source: &str, sink: &str) -> Option<Vec<f64>> {
        let s = *self.node_index.get(source)?;
        let t = *self.node_index.get(sink)?;
        let p = self.pairs.iter().position(|p| p.source == s && p.sink == t)?;
        let d = self.domain;
        let m = self.pair_matrix(p);
        Some(
            m.iter()
                .zip(&self.pairs[p].log_lambda)
                .map(|(x, l)| log_product_exp(*l, d.to_log(*x)))
                .collect(),
        )
    }

    /// Flux profile `A_v^p` (linear scale, node's own scaling excluded).
    pub fn flux_profile(&mut self, path: usize, node: &str) -> Result<Vec<f64>> {
        let v = *self
            .node_index
            .get(node)
            .ok_or_else(|| Error::BadParam(format!("unknown node {node}")))?;
        let chain = self
            .chains
            .get(path)
            .ok_or_else(|| Error::BadParam(format!("no path {path}")))?;
        let pos = chain
            .nodes
            .iter()
            .position(|&x| x == v)
            .ok_or_else(|| Error::BadParam(format!("node {node} is not on path {path}")))?;
        let d = self.domain;
        Ok(self.chain_flux(path, pos).into_iter().map(|x| d.to_linear(x)).collect())
    }

    /// Fully refreshed messages of one path (independent mode only).
    pub fn messages(&mut self, path: usize) -> Option<&ChainMessages> {
        let chain = self.chains.get(path)?;
        let view = ChainView {
            domain: self.domain,
            nodes: &chain.nodes,
            kernels: &chain.kernels,
            edge_kernels: &self.edge_kernels,
            log_scale: &self.log_scale,
        };
        let Msgs::Independent(m) = &mut self.msgs else {
            return None;
        };
        m[path].ensure(&view, 0);
        m[path].ensure(&view, chain.nodes.len() - 1);
        Some(&m[path])
    }

    /// Fresh E0, ET, V and dual objective for the current state.
    pub fn diagnostics(&mut self) -> Diagnostics {
        let n = self.grid.n_t();
        let mut e0 = 0.0;
        let mut et = 0.0;
        let mut v = 0.0;
        for k in 0..self.nodes.len() {
            let has_target = self.nodes[k].target.is_some();
            let has_cap = self.nodes[k].cap.is_some();
            if !has_target && !has_cap {
                continue;
            }
            let m = self.marginal_of(k);
            let slot = &self.nodes[k];
            if let Some(target) = &slot.target {
                let err: f64 = m.iter().zip(target).map(|(a, b)| (a - b).abs()).sum();
                if slot.role == NodeRole::Source {
                    e0 += err;
                } else {
                    et += err;
                }
            }
            if let Some(cap) = &slot.cap {
                v += m.iter().zip(cap).map(|(a, c)| (a - c).max(0.0)).sum::<f64>();
            }
        }
        let mut sink_cols: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for p in 0..self.pairs.len() {
            let (s, t) = (self.pairs[p].source, self.pairs[p].sink);
            let model = self
                .joint_marginal(&self.nodes[s].name.clone(), &self.nodes[t].name.clone())
                .expect("pair exists");
            let target = &self.pairs[p].target;
            e0 += model.iter().zip(target).map(|(a, b)| (a - b).abs()).sum::<f64>();
            let cols = sink_cols.entry(t).or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            for i in 0..n {
                for j in 0..n {
                    cols.0[j] += model[i * n + j];
                    cols.1[j] += target[i * n + j];
                }
            }
        }
        for (m, t) in sink_cols.values() {
            et += m.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
        Diagnostics {
            e0,
            et,
            v,
            objective: self.dual_objective(),
        }
    }

    pub fn state(&self) -> SinkhornState {
        let mut st = SinkhornState {
            epsilon: self.epsilon,
            iteration: self.sweeps,
            domain: self.domain,
            log_u: BTreeMap::new(),
            log_v: BTreeMap::new(),
            log_w: BTreeMap::new(),
            log_lambda: BTreeMap::new(),
        };
        let coupled = self.is_coupled();
        for (v, slot) in self.nodes.iter().enumerate() {
            let ls = self.log_scale[v].clone();
            match slot.role {
                NodeRole::Source if !coupled => {
                    st.log_u.insert(slot.name.clone(), ls);
                }
                NodeRole::Sink if !coupled => {
                    st.log_v.insert(slot.name.clone(), ls);
                }
                NodeRole::Interior if slot.cap.is_some() => {
                    st.log_w.insert(slot.name.clone(), ls);
                }
                _ => {}
            }
        }
        for p in &self.pairs {
            st.log_lambda.insert(
                (self.nodes[p.source].name.clone(), self.nodes[p.sink].name.clone()),
                p.log_lambda.clone(),
            );
        }
        st
    }
}

/// `old ← old + step·(new − old)`, where `−∞` on either side wins.
fn relax(old: &mut [f64], new: Vec<f64>, step: f64) {
    if step == 1.0 {
        old.copy_from_slice(&new);
        return;
    }
    for (o, n) in old.iter_mut().zip(new) {
        *o = if n == f64::NEG_INFINITY || *o == f64::NEG_INFINITY {
            n
        } else {
            *o + step * (n - *o)
        };
    }
}

/// `exp(a + b)` with `−∞` absorbing.
#[inline]
fn log_product_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        0.0
    } else {
        (a + b).exp()
    }
}

/// `⟨log s, μ⟩` with `0·(±∞) = 0` and infinite caps contributing nothing.
fn inner(log_s: &[f64], weights: &[f64]) -> f64 {
    log_s
        .iter()
        .zip(weights)
        .map(|(l, m)| if *m == 0.0 || *l == 0.0 { 0.0 } else { l * m })
        .sum()
}

/// Interior nodes ordered along the paths (Kahn's algorithm, ties broken by
/// first appearance). Nodes on a cycle of the path-induced order are appended
/// in first-appearance order.
fn interior_topological_order(nodes: &[NodeSlot], chains: &[Chain]) -> Vec<usize> {
    let mut first = vec![usize::MAX; nodes.len()];
    let mut seen = 0;
    for c in chains {
        for &v in &c.nodes {
            if nodes[v].role == NodeRole::Interior && first[v] == usize::MAX {
                first[v] = seen;
                seen += 1;
            }
        }
    }
    let interior: Vec<usize> = (0..nodes.len()).filter(|&v| first[v] != usize::MAX).collect();
    let mut succ: BTreeMap<usize, std::collections::BTreeSet<usize>> = BTreeMap::new();
    let mut indeg = vec![0usize; nodes.len()];
    for c in chains {
        let inner: Vec<usize> = c.nodes.iter().cloned().filter(|&v| first[v] != usize::MAX).collect();
        for w in inner.windows(2) {
            if succ.entry(w[0]).or_default().insert(w[1]) {
                indeg[w[1]] += 1;
            }
        }
    }
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = interior
        .iter()
        .filter(|&&v| indeg[v] == 0)
        .map(|&v| Reverse((first[v], v)))
        .collect();
    let mut order = Vec::new();
    let mut placed = vec![false; nodes.len()];
    while let Some(Reverse((_, v))) = heap.pop() {
        order.push(v);
        placed[v] = true;
        if let Some(next) = succ.get(&v) {
            for &w in next {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    heap.push(Reverse((first[w], w)));
                }
            }
        }
    }
    let mut rest: Vec<usize> = interior.into_iter().filter(|&v| !placed[v]).collect();
    rest.sort_by_key(|&v| first[v]);
    order.extend(rest);
    order
}
