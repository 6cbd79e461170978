use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use daot_core::io::{format_float, parse_float};
use daot_core::kernels::{build_pair_kernel, kernel_needs_log_domain};
use daot_core::oracle::{chain_cost, dense_sinkhorn, MarginalTarget};
use daot_core::scenarios::{self, node_roles, Instance, ScenarioSpec, SCENARIO_NAMES};
use daot_core::{Error, Mode, PlanQuery, SolverConfig, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::{exit, Cli, Command, GlobalOpts};

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

type CmdResult = Result<u8, Failure>;

trait OrExit<T> {
    fn or_exit(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn solver_failure(e: Error) -> Failure {
    let code = match e {
        Error::UnreachableMass { .. } | Error::UnreachableJointMass { .. } => exit::UNREACHABLE_MASS,
        _ => exit::INTERNAL,
    };
    Failure { code, error: e.into() }
}

pub fn dispatch(cli: &Cli) -> CmdResult {
    let g = &cli.global;
    match &cli.command {
        Command::Scenario { name, emit, list } => cmd_scenario(name.as_deref(), emit.as_deref().or(g.output.as_deref()), *list),
        Command::Feasibility { scenario } => cmd_feasibility(scenario, g),
        Command::Solve { scenario } => cmd_solve(scenario, g),
        Command::ExtractPlan { scenario, path, top_k, max_cells, mass_floor } => {
            let query = PlanQuery { max_cells: *max_cells, mass_floor: *mass_floor, top_k: *top_k };
            cmd_extract_plan(scenario, *path, &query, g)
        }
        Command::Plotdata { run_dir } => cmd_plotdata(run_dir, g.output.as_deref()),
        Command::Oracle { scenario } => cmd_oracle(scenario, g),
        Command::InspectKernel { weight, n_t, t_f } => cmd_inspect_kernel(*weight, *n_t, *t_f, g),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display())).or_exit(exit::INVALID)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display())).or_exit(exit::INVALID)
}

fn cmd_scenario(name: Option<&str>, out: Option<&Path>, list: bool) -> CmdResult {
    if list {
        for n in SCENARIO_NAMES {
            println!("{n}");
        }
        return Ok(exit::OK);
    }
    let name = name.ok_or_else(|| anyhow!("a scenario name is required (see --list)")).or_exit(exit::INVALID)?;
    let spec = scenarios::by_name(name)
        .ok_or_else(|| anyhow!("unknown scenario '{name}', known: {}", SCENARIO_NAMES.join(", ")))
        .or_exit(exit::INVALID)?;
    let text = spec.to_json() + "\n";
    match out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(exit::OK)
}

/// Read a scenario file and apply command-line solver overrides.
fn load(path: &Path, g: &GlobalOpts) -> Result<(ScenarioSpec, Instance), Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .or_exit(exit::INVALID)?;
    let mut spec = ScenarioSpec::from_json(&text).or_exit(exit::INVALID)?;
    apply_overrides(&mut spec.solver, g);
    let inst = spec.instance().with_context(|| format!("loading {}", path.display())).or_exit(exit::INVALID)?;
    Ok((spec, inst))
}

fn apply_overrides(c: &mut SolverConfig, g: &GlobalOpts) {
    if let Some(t) = g.tol {
        c.tol = t;
    }
    if let Some(e) = g.epsilon {
        c.epsilon = e;
        if let Some(a) = &mut c.annealing {
            a.epsilon_min = a.epsilon_min.min(e);
        }
    }
    if let Some(m) = g.max_iter {
        c.max_iter = m;
        c.min_iter = c.min_iter.min(m);
    }
    if let Some(s) = g.sweep {
        c.sweep = s;
    }
    if let Some(l) = g.log_domain {
        c.log_domain = Some(l);
    }
}

fn cmd_feasibility(path: &Path, g: &GlobalOpts) -> CmdResult {
    let (_, inst) = load(path, g)?;
    let v = inst.feasibility().or_exit(exit::INVALID)?;
    if v.feasible {
        println!("feasible margin={} shift_bins={}", format_float(v.margin), v.shift_bins);
        Ok(exit::OK)
    } else {
        let at = v.violation_time.map_or("none".to_string(), format_float);
        println!(
            "infeasible margin={} shift_bins={} first_violation={at}",
            format_float(v.margin),
            v.shift_bins
        );
        Ok(exit::INVALID)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NodeEntry {
    pub name: String,
    pub role: String,
    pub file: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub config: SolverConfig,
    pub domain: String,
    pub t_f: f64,
    pub n_t: usize,
    pub e0: f64,
    pub et: f64,
    pub v: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub path_masses: Vec<f64>,
    pub nodes: Vec<NodeEntry>,
    pub files: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Timing {
    wall_time_s: f64,
    iterations: usize,
}

const RESERVED: [&str; 4] = ["trace", "summary", "timing", "plotdata"];

fn node_file(name: &str) -> Result<String, Failure> {
    let safe = !name.is_empty()
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c))
        && !name.starts_with('.')
        && !RESERVED.contains(&name)
        && !name.starts_with("plan_");
    if !safe {
        return Err(Failure {
            code: exit::INVALID,
            error: anyhow!("node name '{name}' cannot be used as an output file name"),
        });
    }
    Ok(format!("{name}.csv"))
}

fn marginal_csv(centers: &[f64], mass: &[f64], cap: &[f64]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin_center", "mass", "cap"])?;
    for ((t, m), c) in centers.iter().zip(mass).zip(cap) {
        w.write_record([format_float(*t), format_float(*m), format_float(*c)])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn cmd_solve(path: &Path, g: &GlobalOpts) -> CmdResult {
    let (spec, inst) = load(path, g)?;
    let out_dir = g.output.clone().unwrap_or_else(|| PathBuf::from("out"));
    let roles = node_roles(&inst.network);
    let files: Vec<String> = roles.iter().map(|(n, _)| node_file(n)).collect::<Result<_, _>>()?;

    let mut solver = inst.solver().map_err(solver_failure)?;
    let report = solver.run().map_err(solver_failure)?;
    let grid = inst.network.grid();
    let centers = grid.centers();
    let marginals = solver.node_marginals();

    let mut manifest = Vec::new();
    let mut nodes = Vec::new();
    for ((name, role), file) in roles.iter().zip(files) {
        let zeros = vec![0.0; grid.n_t()];
        let mass = marginals.get(name).unwrap_or(&zeros);
        let cap = inst.network.capacity(name);
        let text = marginal_csv(&centers, mass, cap.per_bin()).or_exit(exit::INTERNAL)?;
        write_file(&out_dir.join(&file), &text)?;
        nodes.push(NodeEntry { name: name.clone(), role: role.as_str().to_string(), file: file.clone() });
        manifest.push(file);
    }
    write_file(&out_dir.join("trace.csv"), &report.trace_csv())?;
    manifest.push("trace.csv".into());
    manifest.push("summary.json".into());
    manifest.push("timing.json".into());

    let d = &report.final_diagnostics;
    let summary = RunSummary {
        scenario: spec.name.clone(),
        config: inst.config.clone(),
        domain: format!("{:?}", report.domain).to_lowercase(),
        t_f: grid.t_f(),
        n_t: grid.n_t(),
        e0: d.e0,
        et: d.et,
        v: d.v,
        objective: d.objective,
        iterations: report.iterations,
        converged: report.converged,
        path_masses: solver.path_masses(),
        nodes,
        files: manifest,
    };
    let json = serde_json::to_string_pretty(&summary).or_exit(exit::INTERNAL)? + "\n";
    write_file(&out_dir.join("summary.json"), &json)?;
    let timing = Timing { wall_time_s: report.wall_time_s, iterations: report.iterations };
    write_file(&out_dir.join("timing.json"), &(serde_json::to_string_pretty(&timing).or_exit(exit::INTERNAL)? + "\n"))?;

    println!(
        "{}: {} after {} iterations (E0 {}, ET {}, V {}), wrote {}",
        spec.name,
        if report.converged { "converged" } else { "NOT converged" },
        report.iterations,
        format_float(d.e0),
        format_float(d.et),
        format_float(d.v),
        out_dir.display()
    );
    Ok(if report.converged { exit::OK } else { exit::NOT_CONVERGED })
}

fn cmd_extract_plan(path: &Path, index: usize, query: &PlanQuery, g: &GlobalOpts) -> CmdResult {
    let (spec, inst) = load(path, g)?;
    if index >= inst.paths.len() {
        return Err(Failure {
            code: exit::INVALID,
            error: anyhow!("path {index} out of range, scenario has {}", inst.paths.len()),
        });
    }
    let mut solver = inst.solver().map_err(solver_failure)?;
    let report = solver.run().map_err(solver_failure)?;
    let cells = solver.extract_plan(index, query).or_exit(exit::INVALID)?;
    let grid = inst.network.grid();
    let len = inst.paths[index].len();

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..len - 1).map(|l| format!("t{l}")).collect();
    header.push("tT".into());
    header.push("mass".into());
    w.write_record(&header).or_exit(exit::INTERNAL)?;
    for c in &cells {
        let mut row: Vec<String> = c.bins.iter().map(|b| format_float(grid.center(*b))).collect();
        row.push(format_float(c.mass));
        w.write_record(&row).or_exit(exit::INTERNAL)?;
    }
    let text = String::from_utf8(w.into_inner().or_exit(exit::INTERNAL)?).or_exit(exit::INTERNAL)?;
    let out_dir = g.output.clone().unwrap_or_else(|| PathBuf::from("out"));
    let file = out_dir.join(format!("plan_{index}.csv"));
    write_file(&file, &text)?;
    println!("{}: {} cells of path {index} written to {}", spec.name, cells.len(), file.display());
    Ok(if report.converged { exit::OK } else { exit::NOT_CONVERGED })
}

fn read_marginal_csv(path: &Path) -> anyhow::Result<Vec<[f64; 3]>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["bin_center", "mass", "cap"] {
        bail!("{}: expected header bin_center,mass,cap", path.display());
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut row = [0.0; 3];
        for (k, slot) in row.iter_mut().enumerate() {
            let field = rec.get(k).ok_or_else(|| anyhow!("{}: short row {}", path.display(), i + 2))?;
            *slot = parse_float(field)
                .ok_or_else(|| anyhow!("{}: bad number '{field}' on row {}", path.display(), i + 2))?;
        }
        rows.push(row);
    }
    Ok(rows)
}

fn cmd_plotdata(run_dir: &Path, out: Option<&Path>) -> CmdResult {
    let summary_path = run_dir.join("summary.json");
    let text = fs::read_to_string(&summary_path)
        .with_context(|| format!("reading {}", summary_path.display()))
        .or_exit(exit::INVALID)?;
    let summary: RunSummary = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", summary_path.display()))
        .or_exit(exit::INVALID)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["node", "bin_center", "mass", "cap", "role"]).or_exit(exit::INTERNAL)?;
    let mut rows = 0;
    for node in &summary.nodes {
        let data = read_marginal_csv(&run_dir.join(&node.file)).or_exit(exit::INVALID)?;
        if data.len() != summary.n_t {
            return Err(Failure {
                code: exit::INVALID,
                error: anyhow!("{} has {} rows, expected {}", node.file, data.len(), summary.n_t),
            });
        }
        for [t, m, c] in data {
            w.write_record([node.name.clone(), format_float(t), format_float(m), format_float(c), node.role.clone()])
                .or_exit(exit::INTERNAL)?;
            rows += 1;
        }
    }
    let text = String::from_utf8(w.into_inner().or_exit(exit::INTERNAL)?).or_exit(exit::INTERNAL)?;
    let dest = out.map(Path::to_path_buf).unwrap_or_else(|| run_dir.join("plotdata.csv"));
    write_file(&dest, &text)?;
    println!("{rows} rows written to {}", dest.display());
    Ok(exit::OK)
}

fn cmd_oracle(path: &Path, g: &GlobalOpts) -> CmdResult {
    let (_, inst) = load(path, g)?;
    let unsupported = |msg: &str| Failure { code: exit::INVALID, error: anyhow!("oracle: {msg}") };
    if inst.paths.len() != 1 || !matches!(inst.mode, Mode::Independent) {
        return Err(unsupported("only single-path independent scenarios are supported"));
    }
    let net = &inst.network;
    let p = &inst.paths[0];
    let grid: TimeGrid = net.grid();
    let weights: Vec<f64> = p
        .nodes()
        .windows(2)
        .map(|w| net.edge_weight(&w[0], &w[1]).expect("validated path"))
        .collect();
    let cost = chain_cost(grid, &weights).or_exit(exit::INVALID)?;
    let mut targets = vec![MarginalTarget::equality(0, net.source_marginal(p.source()).expect("source").mass().to_vec())];
    for (pos, v) in p.nodes().iter().enumerate().take(p.len() - 1).skip(1) {
        targets.push(MarginalTarget::upper_bound(pos, net.capacity(v).per_bin().to_vec()));
    }
    targets.push(MarginalTarget::equality(p.len() - 1, net.sink_marginal(p.sink()).expect("sink").mass().to_vec()));

    let iters = inst.config.max_iter;
    let config = SolverConfig { max_iter: iters, min_iter: iters, tol: 0.0, annealing: None, ..inst.config.clone() };
    let mut solver = daot_core::Solver::new(net, &inst.paths, Mode::Independent, config).map_err(solver_failure)?;
    solver.run().map_err(solver_failure)?;
    let dense = dense_sinkhorn(&cost, &targets, inst.config.epsilon, iters).or_exit(exit::INVALID)?;

    let mut worst: f64 = 0.0;
    let mut per_node = BTreeMap::new();
    for (pos, v) in p.nodes().iter().enumerate() {
        let ours = solver.node_marginal(v).expect("node on path");
        let theirs = dense.marginal(&[pos]);
        let peak = theirs.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let err = ours.iter().zip(&theirs).map(|(a, b)| (a - b).abs() / peak).fold(0.0, f64::max);
        worst = worst.max(err);
        per_node.insert(v.clone(), err);
    }
    for (v, e) in &per_node {
        println!("{v}: max relative error {}", format_float(*e));
    }
    println!("worst {} after {iters} sweeps", format_float(worst));
    Ok(exit::OK)
}

fn cmd_inspect_kernel(weight: f64, n_t: usize, t_f: f64, g: &GlobalOpts) -> CmdResult {
    let eps = g.epsilon.unwrap_or(SolverConfig::default().epsilon);
    let grid = TimeGrid::new(t_f, n_t).or_exit(exit::INVALID)?;
    let k = build_pair_kernel(grid, weight, eps).or_exit(exit::INVALID)?.with_log();
    eprintln!(
        "weight {weight}, epsilon {eps}, log domain {}",
        if kernel_needs_log_domain(eps, weight, t_f) { "recommended" } else { "not needed" }
    );
    match &g.output {
        Some(p) => write_file(p, &k.to_csv())?,
        None => print!("{}", k.to_csv()),
    }
    Ok(exit::OK)
}
