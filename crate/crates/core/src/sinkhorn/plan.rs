//! Sparse read-out of one path's plan `π^p(t₀, …, t_T)`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{Msgs, Solver};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanQuery {
    /// Upper bound on the number of strictly increasing time tuples visited.
    pub max_cells: u128,
    /// Cells below this mass are dropped.
    pub mass_floor: f64,
    /// Keep only the heaviest cells.
    pub top_k: Option<usize>,
}

impl Default for PlanQuery {
    fn default() -> Self {
        PlanQuery {
            max_cells: 1_000_000,
            mass_floor: 0.0,
            top_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCell {
    pub bins: Vec<usize>,
    pub mass: f64,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(x) => x / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn by_mass_then_bins(a: &PlanCell, b: &PlanCell) -> Ordering {
    b.mass
        .partial_cmp(&a.mass)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.bins.cmp(&b.bins))
}

struct PathLogs {
    n: usize,
    /// Per position, the log scaling over bins.
    scale: Vec<Vec<f64>>,
    /// Per edge, `−w/(ε·dt)`; the log kernel is this divided by the bin gap.
    rate: Vec<f64>,
    /// Row-major `(t₀, t_T)` log boundary ratio in coupled mode.
    lambda: Option<Vec<f64>>,
}

impl PathLogs {
    #[inline]
    fn log_k(&self, edge: usize, s: usize, t: usize) -> f64 {
        if t > s {
            self.rate[edge] / (t - s) as f64
        } else {
            f64::NEG_INFINITY
        }
    }
}

impl Solver {
    fn path_logs(&self, path: usize) -> Result<PathLogs> {
        let chain = self
            .chains
            .get(path)
            .ok_or_else(|| Error::BadParam(format!("no path {path}")))?;
        let coef = -1.0 / (self.epsilon * self.grid.dt());
        Ok(PathLogs {
            n: self.grid.n_t(),
            scale: chain.nodes.iter().map(|&v| self.log_scale[v].clone()).collect(),
            rate: chain.weights.iter().map(|w| w * coef).collect(),
            lambda: chain.pair.map(|p| self.pairs[p].log_lambda.clone()),
        })
    }

    /// Enumerate the cells of path `path`'s plan.
    ///
    /// Full enumeration is used when the number of strictly increasing time
    /// tuples fits in `max_cells`; otherwise, in independent mode with
    /// `top_k` set, the heaviest cells are found by a k-best dynamic program.
    /// Cells are sorted by decreasing mass, ties broken by bin tuple.
    pub fn extract_plan(&self, path: usize, query: &PlanQuery) -> Result<Vec<PlanCell>> {
        let logs = self.path_logs(path)?;
        let len = logs.scale.len();
        let cells = binomial(logs.n, len);
        let mut out = if cells <= query.max_cells {
            enumerate_all(&logs, query.mass_floor)
        } else {
            match (query.top_k, &self.msgs) {
                (Some(k), Msgs::Independent(_)) => k_best(&logs, k)
                    .into_iter()
                    .filter(|c| c.mass >= query.mass_floor && c.mass > 0.0)
                    .collect(),
                _ => {
                    return Err(Error::TooLarge {
                        cells,
                        limit: query.max_cells,
                    })
                }
            }
        };
        out.sort_by(by_mass_then_bins);
        if let Some(k) = query.top_k {
            out.truncate(k);
        }
        Ok(out)
    }
}

fn enumerate_all(logs: &PathLogs, floor: f64) -> Vec<PlanCell> {
    let len = logs.scale.len();
    let mut out = Vec::new();
    let mut bins = Vec::with_capacity(len);
    fn rec(logs: &PathLogs, floor: f64, bins: &mut Vec<usize>, acc: f64, out: &mut Vec<PlanCell>) {
        let len = logs.scale.len();
        let pos = bins.len();
        if pos == len {
            let mut lp = acc;
            if let Some(lam) = &logs.lambda {
                lp += lam[bins[0] * logs.n + bins[len - 1]];
            }
            let mass = if lp == f64::NEG_INFINITY { 0.0 } else { lp.exp() };
            if mass > 0.0 && mass >= floor {
                out.push(PlanCell { bins: bins.clone(), mass });
            }
            return;
        }
        let lo = bins.last().map_or(0, |b| b + 1);
        // Leave room for the remaining positions.
        let hi = logs.n - (len - pos - 1);
        for t in lo..hi {
            let mut next = acc + logs.scale[pos][t];
            if pos > 0 {
                next += logs.log_k(pos - 1, bins[pos - 1], t);
            }
            if next == f64::NEG_INFINITY {
                continue;
            }
            bins.push(t);
            rec(logs, floor, bins, next, out);
            bins.pop();
        }
    }
    rec(logs, floor, &mut bins, 0.0, &mut out);
    out
}

/// k heaviest chains by dynamic programming over positions, keeping the `k`
/// best partial chains ending at every bin.
fn k_best(logs: &PathLogs, k: usize) -> Vec<PlanCell> {
    #[derive(Clone, Copy)]
    struct Entry {
        score: f64,
        prev: usize,
        rank: usize,
    }
    let n = logs.n;
    let len = logs.scale.len();
    if k == 0 {
        return Vec::new();
    }
    let mut table: Vec<Vec<Vec<Entry>>> = Vec::with_capacity(len);
    table.push(
        (0..n)
            .map(|t| {
                let s = logs.scale[0][t];
                if s == f64::NEG_INFINITY {
                    vec![]
                } else {
                    vec![Entry { score: s, prev: usize::MAX, rank: 0 }]
                }
            })
            .collect(),
    );
    let desc = |a: &Entry, b: &Entry| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal);
    for pos in 1..len {
        let prev = &table[pos - 1];
        let mut layer = Vec::with_capacity(n);
        for t in 0..n {
            let own = logs.scale[pos][t];
            let mut cand = Vec::new();
            if own != f64::NEG_INFINITY {
                for (s, entries) in prev.iter().enumerate().take(t) {
                    let lk = logs.log_k(pos - 1, s, t);
                    for (r, e) in entries.iter().enumerate() {
                        cand.push(Entry { score: e.score + lk + own, prev: s, rank: r });
                    }
                }
            }
            cand.sort_by(desc);
            cand.truncate(k);
            layer.push(cand);
        }
        table.push(layer);
    }
    let mut finals: Vec<(f64, usize, usize)> = table[len - 1]
        .iter()
        .enumerate()
        .flat_map(|(t, es)| es.iter().enumerate().map(move |(r, e)| (e.score, t, r)))
        .collect();
    finals.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    finals.truncate(k);
    finals
        .into_iter()
        .map(|(score, t, r)| {
            let mut bins = vec![0; len];
            let (mut t, mut r) = (t, r);
            for pos in (0..len).rev() {
                bins[pos] = t;
                let e = table[pos][t][r];
                t = e.prev;
                r = e.rank;
            }
            PlanCell { bins, mass: score.exp() }
        })
        .collect()
}
