//! Independent reference solvers shared by the integration tests. Nothing
//! here calls into the crate under test.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::VecDeque;

/// Integer max-flow by Edmonds–Karp (BFS augmenting paths).
pub struct MaxFlow {
    n: usize,
    cap: Vec<Vec<i64>>,
}

impl MaxFlow {
    pub fn new(n: usize) -> Self {
        MaxFlow { n, cap: vec![vec![0; n]; n] }
    }

    pub fn add_edge(&mut self, a: usize, b: usize, c: i64) {
        self.cap[a][b] += c;
    }

    pub fn run(&mut self, s: usize, t: usize) -> i64 {
        let mut flow = 0;
        loop {
            let mut prev = vec![usize::MAX; self.n];
            prev[s] = s;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for v in 0..self.n {
                    if prev[v] == usize::MAX && self.cap[u][v] > 0 {
                        prev[v] = u;
                        q.push_back(v);
                    }
                }
            }
            if prev[t] == usize::MAX {
                return flow;
            }
            let mut push = i64::MAX;
            let mut v = t;
            while v != s {
                push = push.min(self.cap[prev[v]][v]);
                v = prev[v];
            }
            let mut v = t;
            while v != s {
                let u = prev[v];
                self.cap[u][v] -= push;
                self.cap[v][u] += push;
                v = u;
            }
            flow += push;
        }
    }
}

/// Whether integer departure counts `a` can be matched to arrival counts `b`
/// (equal totals) with every unit arriving at least `shift` bins after it departs.
pub fn bipartite_feasible(a: &[i64], b: &[i64], shift: usize) -> bool {
    let n = a.len();
    let (s, t) = (2 * n, 2 * n + 1);
    let mut g = MaxFlow::new(2 * n + 2);
    let total: i64 = a.iter().sum();
    for i in 0..n {
        g.add_edge(s, i, a[i]);
        g.add_edge(n + i, t, b[i]);
        for j in (i + shift)..n {
            g.add_edge(i, n + j, total);
        }
    }
    g.run(s, t) == total
}

/// Min-cost flow by successive shortest paths (Bellman–Ford), integer capacities
/// and real costs. Returns `(flow, cost)`.
pub struct MinCostFlow {
    n: usize,
    edges: Vec<(usize, usize, i64, f64)>,
    adj: Vec<Vec<usize>>,
}

impl MinCostFlow {
    pub fn new(n: usize) -> Self {
        MinCostFlow { n, edges: Vec::new(), adj: vec![Vec::new(); n] }
    }

    pub fn add_edge(&mut self, a: usize, b: usize, cap: i64, cost: f64) {
        self.adj[a].push(self.edges.len());
        self.edges.push((a, b, cap, cost));
        self.adj[b].push(self.edges.len());
        self.edges.push((b, a, 0, -cost));
    }

    pub fn run(&mut self, s: usize, t: usize, want: i64) -> (i64, f64) {
        let (mut flow, mut cost) = (0, 0.0);
        while flow < want {
            let mut dist = vec![f64::INFINITY; self.n];
            let mut via = vec![usize::MAX; self.n];
            dist[s] = 0.0;
            for _ in 0..self.n {
                let mut changed = false;
                for (id, &(a, b, cap, c)) in self.edges.iter().enumerate() {
                    if cap > 0 && dist[a] + c < dist[b] - 1e-12 {
                        dist[b] = dist[a] + c;
                        via[b] = id;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            if dist[t].is_infinite() {
                break;
            }
            let mut push = want - flow;
            let mut v = t;
            while v != s {
                let e = self.edges[via[v]];
                push = push.min(e.2);
                v = e.0;
            }
            let mut v = t;
            while v != s {
                let id = via[v];
                self.edges[id].2 -= push;
                self.edges[id ^ 1].2 += push;
                v = self.edges[id].0;
            }
            flow += push;
            cost += push as f64 * dist[t];
        }
        (flow, cost)
    }
}

/// Unregularized optimum of transport along the line `v0 → v1 → … → vT` with
/// integer masses: `mu0` and `mu_t` sum to the same total, `caps[ℓ]` bounds the
/// per-bin count at interior node `ℓ + 1`. Edge `ℓ` costs `w[ℓ]/(t_j − t_i)`
/// for bins `i < j` on a grid of spacing `dt`. Returns the cost per unit mass,
/// or `None` when not all mass can be routed.
pub fn line_lp_cost(mu0: &[i64], mu_t: &[i64], caps: &[Vec<i64>], w: &[f64], dt: f64) -> Option<f64> {
    let n = mu0.len();
    let layers = caps.len() + 2;
    // Node layout: layer 0 bins, interior layers split into in/out, last layer bins.
    let idx_in = |l: usize, k: usize| -> usize {
        if l == 0 {
            k
        } else {
            n + (l - 1) * 2 * n + k
        }
    };
    let idx_out = |l: usize, k: usize| -> usize {
        if l == 0 || l == layers - 1 {
            idx_in(l, k)
        } else {
            idx_in(l, k) + n
        }
    };
    let total: i64 = mu0.iter().sum();
    let count = idx_in(layers - 1, 0) + n + 2;
    let (s, t) = (count - 2, count - 1);
    let mut g = MinCostFlow::new(count);
    for k in 0..n {
        g.add_edge(s, idx_in(0, k), mu0[k], 0.0);
        g.add_edge(idx_in(layers - 1, k), t, mu_t[k], 0.0);
        for (l, cap) in caps.iter().enumerate() {
            g.add_edge(idx_in(l + 1, k), idx_out(l + 1, k), cap[k], 0.0);
        }
    }
    for l in 0..layers - 1 {
        for i in 0..n {
            for j in i + 1..n {
                g.add_edge(idx_out(l, i), idx_in(l + 1, j), total, w[l] / ((j - i) as f64 * dt));
            }
        }
    }
    let (flow, cost) = g.run(s, t, total);
    (flow == total).then(|| cost / total as f64)
}

/// Relative gap of `a` against `b`, scaled by the largest entry of `b`.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let peak = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / peak).fold(0.0, f64::max)
}
