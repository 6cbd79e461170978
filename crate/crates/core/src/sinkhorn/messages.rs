//! Forward/backward messages along one path, recomputed lazily.
//!
//! Position `ℓ` of a path carries a forward message (all ordered prefixes
//! ending at node `ℓ`, scalings of nodes `0..ℓ` included) and a backward
//! message (all suffixes starting after node `ℓ`). Changing node `ℓ`'s scaling
//! only invalidates forward messages after `ℓ` and backward messages before it.

use super::domain::{Domain, EdgeKernel};

/// Read-only view of one path's kernels and node scalings.
pub(crate) struct ChainView<'a> {
    pub domain: Domain,
    pub nodes: &'a [usize],
    pub kernels: &'a [usize],
    pub edge_kernels: &'a [EdgeKernel],
    pub log_scale: &'a [Vec<f64>],
}

impl ChainView<'_> {
    fn scaled(&self, pos: usize, msg: &[f64]) -> Vec<f64> {
        let ls = &self.log_scale[self.nodes[pos]];
        msg.iter()
            .zip(ls)
            .map(|(m, l)| self.domain.mul(*m, self.domain.from_log(*l)))
            .collect()
    }

    fn kernel(&self, edge: usize) -> &EdgeKernel {
        &self.edge_kernels[self.kernels[edge]]
    }
}

/// Vector messages for independent departure/arrival marginals.
#[derive(Debug, Clone)]
pub struct ChainMessages {
    domain: Domain,
    fwd: Vec<Vec<f64>>,
    bwd: Vec<Vec<f64>>,
    fwd_valid: usize,
    bwd_valid: usize,
}

impl ChainMessages {
    pub(crate) fn new(len: usize, n: usize, domain: Domain) -> Self {
        let mut fwd = vec![vec![domain.zero(); n]; len];
        let mut bwd = vec![vec![domain.zero(); n]; len];
        fwd[0] = vec![domain.one(); n];
        bwd[len - 1] = vec![domain.one(); n];
        ChainMessages {
            domain,
            fwd,
            bwd,
            fwd_valid: 1,
            bwd_valid: len - 1,
        }
    }

    pub fn len(&self) -> usize {
        self.fwd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fwd.is_empty()
    }

    /// Node at `pos` changed its scaling.
    pub(crate) fn invalidate(&mut self, pos: usize) {
        self.fwd_valid = self.fwd_valid.min(pos + 1);
        self.bwd_valid = self.bwd_valid.max(pos);
    }

    pub(crate) fn invalidate_all(&mut self) {
        self.fwd_valid = 1;
        self.bwd_valid = self.len() - 1;
    }

    pub(crate) fn ensure(&mut self, view: &ChainView<'_>, pos: usize) {
        while self.fwd_valid <= pos {
            let l = self.fwd_valid - 1;
            let a = view.scaled(l, &self.fwd[l]);
            view.kernel(l).forward(self.domain, &a, &mut self.fwd[l + 1]);
            self.fwd_valid += 1;
        }
        while self.bwd_valid > pos {
            let l = self.bwd_valid;
            let b = view.scaled(l, &self.bwd[l]);
            view.kernel(l - 1).backward(self.domain, &b, &mut self.bwd[l - 1]);
            self.bwd_valid -= 1;
        }
    }

    /// Flux at `pos` in the solver's domain, excluding the node's own scaling.
    pub(crate) fn flux(&mut self, view: &ChainView<'_>, pos: usize) -> Vec<f64> {
        self.ensure(view, pos);
        self.fwd[pos]
            .iter()
            .zip(&self.bwd[pos])
            .map(|(f, b)| self.domain.mul(*f, *b))
            .collect()
    }

    /// Linear-scale forward message, if currently up to date.
    pub fn forward(&self, pos: usize) -> Option<Vec<f64>> {
        (pos < self.fwd_valid).then(|| self.fwd[pos].iter().map(|x| self.domain.to_linear(*x)).collect())
    }

    /// Linear-scale backward message, if currently up to date.
    pub fn backward(&self, pos: usize) -> Option<Vec<f64>> {
        (pos >= self.bwd_valid).then(|| self.bwd[pos].iter().map(|x| self.domain.to_linear(*x)).collect())
    }
}

/// Matrix messages for a prescribed joint departure/arrival law.
///
/// `fwd[ℓ][t0·n + t]` sums chains from departure bin `t0` to node `ℓ` at `t`;
/// `bwd_t[ℓ][tT·n + t]` sums chains from node `ℓ` at `t` to arrival bin `tT`.
#[derive(Debug, Clone)]
pub(crate) struct CoupledMessages {
    domain: Domain,
    n: usize,
    fwd: Vec<Vec<f64>>,
    bwd_t: Vec<Vec<f64>>,
    fwd_valid: usize,
    bwd_valid: usize,
}

impl CoupledMessages {
    pub(crate) fn new(len: usize, n: usize, domain: Domain) -> Self {
        let mut eye = vec![domain.zero(); n * n];
        for i in 0..n {
            eye[i * n + i] = domain.one();
        }
        let mut fwd = vec![Vec::new(); len];
        let mut bwd_t = vec![Vec::new(); len];
        fwd[0] = eye.clone();
        bwd_t[len - 1] = eye;
        CoupledMessages {
            domain,
            n,
            fwd,
            bwd_t,
            fwd_valid: 1,
            bwd_valid: len - 1,
        }
    }

    fn len(&self) -> usize {
        self.fwd.len()
    }

    pub(crate) fn invalidate(&mut self, pos: usize) {
        self.fwd_valid = self.fwd_valid.min(pos + 1);
        self.bwd_valid = self.bwd_valid.max(pos);
    }

    pub(crate) fn invalidate_all(&mut self) {
        self.fwd_valid = 1;
        self.bwd_valid = self.len() - 1;
    }

    fn ensure_fwd(&mut self, view: &ChainView<'_>, pos: usize) {
        let n = self.n;
        while self.fwd_valid <= pos {
            let l = self.fwd_valid - 1;
            let mut next = vec![self.domain.zero(); n * n];
            for t0 in 0..n {
                let a = view.scaled(l, &self.fwd[l][t0 * n..(t0 + 1) * n]);
                view.kernel(l).forward(self.domain, &a, &mut next[t0 * n..(t0 + 1) * n]);
            }
            self.fwd[l + 1] = next;
            self.fwd_valid += 1;
        }
    }

    fn ensure_bwd(&mut self, view: &ChainView<'_>, pos: usize) {
        let n = self.n;
        while self.bwd_valid > pos {
            let l = self.bwd_valid;
            let mut prev = vec![self.domain.zero(); n * n];
            for tt in 0..n {
                let b = view.scaled(l, &self.bwd_t[l][tt * n..(tt + 1) * n]);
                view.kernel(l - 1).backward(self.domain, &b, &mut prev[tt * n..(tt + 1) * n]);
            }
            self.bwd_t[l - 1] = prev;
            self.bwd_valid -= 1;
        }
    }

    /// Interior chain matrix `M[t0·n + tT]` (boundary nodes carry no scaling).
    pub(crate) fn chain_matrix(&mut self, view: &ChainView<'_>) -> &[f64] {
        let last = self.len() - 1;
        self.ensure_fwd(view, last);
        &self.fwd[last]
    }

    /// Flux at interior position `pos` given the pair's log boundary ratio.
    pub(crate) fn flux(&mut self, view: &ChainView<'_>, pos: usize, lambda: &[f64]) -> Vec<f64> {
        let n = self.n;
        let d = self.domain;
        self.ensure_fwd(view, pos);
        self.ensure_bwd(view, pos);
        let lam: Vec<f64> = lambda.iter().map(|l| d.from_log(*l)).collect();
        // b[t·n + tT]
        let bt = &self.bwd_t[pos];
        let mut b = vec![d.zero(); n * n];
        for tt in 0..n {
            for t in 0..n {
                b[t * n + tt] = bt[tt * n + t];
            }
        }
        let f = &self.fwd[pos];
        let mut out = vec![d.zero(); n];
        let mut col = vec![d.zero(); n];
        for (t, o) in out.iter_mut().enumerate() {
            for t0 in 0..n {
                let g = d.dot(&lam[t0 * n..(t0 + 1) * n], &b[t * n..(t + 1) * n]);
                col[t0] = d.mul(f[t0 * n + t], g);
            }
            *o = d.sum(&col);
        }
        out
    }
}
