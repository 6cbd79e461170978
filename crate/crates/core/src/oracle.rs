//! Dense-tensor multi-marginal entropic Sinkhorn for small instances.
//!
//! Stores the full plan over every time tuple and rescales it slice by slice.
//! It is deliberately naive and shares nothing with [`crate::sinkhorn`], so
//! agreement between the two is meaningful.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

pub const MAX_MARGINALS: usize = 4;
pub const MAX_BINS: usize = 16;
pub const MAX_CELLS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_MARGINALS {
        return Err(Error::SizeCap(format!(
            "{} marginals (allowed 1..={MAX_MARGINALS})",
            shape.len()
        )));
    }
    if let Some(&d) = shape.iter().find(|&&d| d == 0 || d > MAX_BINS) {
        return Err(Error::SizeCap(format!("axis length {d} (allowed 1..={MAX_BINS})")));
    }
    let cells: usize = shape.iter().product();
    if cells > MAX_CELLS {
        return Err(Error::SizeCap(format!("{cells} cells (allowed {MAX_CELLS})")));
    }
    Ok(cells)
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let cells = check_shape(&shape)?;
        if values.len() != cells {
            return Err(Error::BadParam(format!("{} values for {cells} cells", values.len())));
        }
        Ok(DenseTensor { shape, values })
    }

    pub fn from_fn(shape: Vec<usize>, f: impl Fn(&[usize]) -> f64) -> Result<Self> {
        let cells = check_shape(&shape)?;
        let mut idx = vec![0; shape.len()];
        let mut values = Vec::with_capacity(cells);
        for flat in 0..cells {
            unflatten(&shape, flat, &mut idx);
            values.push(f(&idx));
        }
        Ok(DenseTensor { shape, values })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        let mut flat = 0;
        for (i, d) in idx.iter().zip(&self.shape) {
            flat = flat * d + i;
        }
        self.values[flat]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Sum over every axis except those listed; result is row-major over `axes`.
    pub fn marginal(&self, axes: &[usize]) -> Vec<f64> {
        let out_len: usize = axes.iter().map(|&a| self.shape[a]).product();
        let mut out = vec![0.0; out_len];
        let mut idx = vec![0; self.shape.len()];
        for (flat, v) in self.values.iter().enumerate() {
            unflatten(&self.shape, flat, &mut idx);
            out[project(&self.shape, &idx, axes)] += v;
        }
        out
    }

    /// `Σ c·π`, skipping cells where the plan vanishes.
    pub fn inner(&self, other: &DenseTensor) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| **a != 0.0 && **b != 0.0)
            .map(|(a, b)| a * b)
            .sum()
    }
}

fn unflatten(shape: &[usize], mut flat: usize, idx: &mut [usize]) {
    for k in (0..shape.len()).rev() {
        idx[k] = flat % shape[k];
        flat /= shape[k];
    }
}

fn project(shape: &[usize], idx: &[usize], axes: &[usize]) -> usize {
    axes.iter().fold(0, |acc, &a| acc * shape[a] + idx[a])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Equality,
    UpperBound,
}

/// Constraint on the marginal over one axis, or the joint marginal over
/// several axes (row-major in the listed order).
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTarget {
    pub axes: Vec<usize>,
    pub target: Vec<f64>,
    pub kind: ConstraintKind,
}

impl MarginalTarget {
    pub fn equality(axis: usize, target: Vec<f64>) -> Self {
        MarginalTarget { axes: vec![axis], target, kind: ConstraintKind::Equality }
    }

    pub fn upper_bound(axis: usize, cap: Vec<f64>) -> Self {
        MarginalTarget { axes: vec![axis], target: cap, kind: ConstraintKind::UpperBound }
    }

    pub fn joint(axes: Vec<usize>, target: Vec<f64>) -> Self {
        MarginalTarget { axes, target, kind: ConstraintKind::Equality }
    }
}

/// Cost `Σ_ℓ w_ℓ/(t_{ℓ+1} − t_ℓ)` at bin centres; `+∞` off the ordered cone.
pub fn chain_cost(grid: TimeGrid, weights: &[f64]) -> Result<DenseTensor> {
    let centers = grid.centers();
    let shape = vec![grid.n_t(); weights.len() + 1];
    DenseTensor::from_fn(shape, |idx| {
        let mut c = 0.0;
        for (l, w) in weights.iter().enumerate() {
            if idx[l + 1] <= idx[l] {
                return f64::INFINITY;
            }
            c += w / (centers[idx[l + 1]] - centers[idx[l]]);
        }
        c
    })
}

/// Multi-marginal Sinkhorn on the dense plan `exp(−(c − min c)/ε) ⊙ Π_k s_k`,
/// one scaling `s_k` per target, updated in order `iters` times.
///
/// Each update recomputes its scaling from the marginal of the plan with that
/// scaling left out: `s = μ/P` for equalities (exact afterwards) and
/// `s = min(cap/P, 1)` for upper bounds.
pub fn dense_sinkhorn(
    cost: &DenseTensor,
    targets: &[MarginalTarget],
    epsilon: f64,
    iters: usize,
) -> Result<DenseTensor> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::BadParam(format!("epsilon must be positive, got {epsilon}")));
    }
    for t in targets {
        let len: usize = t.axes.iter().map(|&a| cost.shape.get(a).copied().unwrap_or(0)).product();
        if t.axes.is_empty() || len == 0 || t.target.len() != len {
            return Err(Error::BadParam(format!("target over axes {:?} has wrong length", t.axes)));
        }
    }
    let c_min = cost
        .values
        .iter()
        .cloned()
        .filter(|c| c.is_finite())
        .fold(f64::INFINITY, f64::min);
    let c_min = if c_min.is_finite() { c_min } else { 0.0 };
    let kernel: Vec<f64> = cost
        .values
        .iter()
        .map(|c| if c.is_finite() { (-(c - c_min) / epsilon).exp() } else { 0.0 })
        .collect();
    let shape = &cost.shape;
    // Precomputed projection of every cell onto every target's axes.
    let mut idx = vec![0; shape.len()];
    let proj: Vec<Vec<usize>> = (0..kernel.len())
        .map(|flat| {
            unflatten(shape, flat, &mut idx);
            targets.iter().map(|t| project(shape, &idx, &t.axes)).collect()
        })
        .collect();
    let mut scales: Vec<Vec<f64>> = targets.iter().map(|t| vec![1.0; t.target.len()]).collect();

    for _ in 0..iters {
        for (k, t) in targets.iter().enumerate() {
            let mut p = vec![0.0; t.target.len()];
            for (flat, kv) in kernel.iter().enumerate() {
                if *kv == 0.0 {
                    continue;
                }
                let mut val = *kv;
                for (j, s) in scales.iter().enumerate() {
                    if j != k {
                        val *= s[proj[flat][j]];
                    }
                }
                p[proj[flat][k]] += val;
            }
            for (e, s) in scales[k].iter_mut().enumerate() {
                *s = match t.kind {
                    ConstraintKind::Equality if t.target[e] == 0.0 => 0.0,
                    ConstraintKind::Equality if p[e] == 0.0 => {
                        return Err(Error::InfeasiblePrecondition(format!(
                            "target over axes {:?} has mass at entry {e} the plan cannot reach",
                            t.axes
                        )))
                    }
                    ConstraintKind::Equality => t.target[e] / p[e],
                    ConstraintKind::UpperBound if p[e] == 0.0 || t.target[e].is_infinite() => 1.0,
                    ConstraintKind::UpperBound => (t.target[e] / p[e]).min(1.0),
                };
            }
        }
    }
    let values = kernel
        .iter()
        .enumerate()
        .map(|(flat, kv)| {
            scales
                .iter()
                .enumerate()
                .fold(*kv, |acc, (j, s)| acc * s[proj[flat][j]])
        })
        .collect();
    Ok(DenseTensor { shape: shape.clone(), values })
}

/// `D(π) = −Σ π(log π − 1)` with `0·log 0 = 0`.
pub fn entropy(plan: &DenseTensor) -> f64 {
    -plan
        .values
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * (p.ln() - 1.0))
        .sum::<f64>()
}

/// Primal entropic objective `⟨c, π⟩ − ε·D(π)`.
pub fn objective(cost: &DenseTensor, plan: &DenseTensor, epsilon: f64) -> f64 {
    cost.inner(plan) - epsilon * entropy(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(shape: Vec<usize>, values: Vec<f64>) -> DenseTensor {
        DenseTensor::new(shape, values).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let n = 10;
        let u = tensor(vec![n], vec![1.0 / n as f64; n]);
        assert!((entropy(&u) - ((n as f64).ln() + 1.0)).abs() < 1e-14);
        let d = tensor(vec![3], vec![0.0, 1.0, 0.0]);
        assert!((entropy(&d) - 1.0).abs() < 1e-15);
        let two = tensor(vec![2], vec![0.5, 0.5]);
        assert!((entropy(&two) - (2f64.ln() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_cost_gives_product_coupling() {
        let mu = vec![0.1, 0.2, 0.3, 0.4];
        let nu = vec![0.25, 0.05, 0.3, 0.4];
        let cost = tensor(vec![4, 4], vec![0.0; 16]);
        for eps in [0.01, 1.0, 100.0] {
            let plan = dense_sinkhorn(
                &cost,
                &[MarginalTarget::equality(0, mu.clone()), MarginalTarget::equality(1, nu.clone())],
                eps,
                3,
            )
            .unwrap();
            for (i, m) in mu.iter().enumerate() {
                for (j, n) in nu.iter().enumerate() {
                    assert!((plan.get(&[i, j]) - m * n).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn inactive_cap_changes_nothing() {
        let g = TimeGrid::new(1.0, 6).unwrap();
        let cost = chain_cost(g, &[0.1, 0.1]).unwrap();
        let mu0 = vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0];
        let mut mut_ = vec![0.0; 6];
        mut_[4] = 0.5;
        mut_[5] = 0.5;
        let base = vec![MarginalTarget::equality(0, mu0.clone()), MarginalTarget::equality(2, mut_.clone())];
        let mut capped = base.clone();
        capped.insert(1, MarginalTarget::upper_bound(1, vec![10.0; 6]));
        let a = dense_sinkhorn(&cost, &base, 0.2, 20).unwrap();
        let b = dense_sinkhorn(&cost, &capped, 0.2, 20).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn equality_marginal_exact_after_its_update() {
        let g = TimeGrid::new(1.0, 5).unwrap();
        let cost = chain_cost(g, &[0.2]).unwrap();
        let mu = vec![0.4, 0.3, 0.2, 0.1, 0.0];
        let nu = vec![0.0, 0.1, 0.2, 0.3, 0.4];
        let plan = dense_sinkhorn(
            &cost,
            &[MarginalTarget::equality(0, mu), MarginalTarget::equality(1, nu.clone())],
            0.5,
            4,
        )
        .unwrap();
        for (a, b) in plan.marginal(&[1]).iter().zip(&nu) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(plan.get(&[2, 1]), 0.0);
    }

    fn kl(p: &DenseTensor, q: &DenseTensor) -> f64 {
        p.values()
            .iter()
            .zip(q.values())
            .map(|(a, b)| if *a == 0.0 { *b } else { a * (a / b).ln() - a + b })
            .sum()
    }

    #[test]
    fn iterates_approach_optimum_monotonically() {
        // Each sweep is a pair of Bregman projections, so the objective
        // climbs towards its optimum and the divergence to the limit shrinks.
        let g = TimeGrid::new(1.0, 6).unwrap();
        let cost = chain_cost(g, &[0.3, 0.2]).unwrap();
        let mu0 = vec![0.3, 0.3, 0.2, 0.2, 0.0, 0.0];
        let mut_ = vec![0.0, 0.0, 0.1, 0.2, 0.3, 0.4];
        let targets = [MarginalTarget::equality(0, mu0), MarginalTarget::equality(2, mut_)];
        let eps = 0.3;
        let limit = dense_sinkhorn(&cost, &targets, eps, 2000).unwrap();
        let (mut prev_obj, mut prev_kl) = (f64::NEG_INFINITY, f64::INFINITY);
        for it in 1..10 {
            let plan = dense_sinkhorn(&cost, &targets, eps, it).unwrap();
            let obj = objective(&cost, &plan, eps);
            let d = kl(&limit, &plan);
            assert!(obj >= prev_obj - 1e-12, "sweep {it}: {obj} < {prev_obj}");
            assert!(d <= prev_kl + 1e-12, "sweep {it}: {d} > {prev_kl}");
            (prev_obj, prev_kl) = (obj, d);
        }
        assert!(prev_obj <= objective(&cost, &limit, eps) + 1e-12);
    }

    #[test]
    fn size_caps() {
        assert!(matches!(DenseTensor::new(vec![2; 5], vec![0.0; 32]), Err(Error::SizeCap(_))));
        assert!(matches!(DenseTensor::new(vec![17], vec![0.0; 17]), Err(Error::SizeCap(_))));
        assert!(DenseTensor::new(vec![16; 4], vec![0.0; 65536]).is_ok());
        let g = TimeGrid::new(1.0, 20).unwrap();
        assert!(matches!(chain_cost(g, &[1.0]), Err(Error::SizeCap(_))));
    }

    #[test]
    fn joint_marginal_layout() {
        let t = DenseTensor::from_fn(vec![2, 3, 2], |i| (i[0] * 100 + i[1] * 10 + i[2]) as f64).unwrap();
        let m = t.marginal(&[0, 2]);
        // (0,0): 0+10+20, (0,1): 1+11+21, (1,0): 300+30, (1,1): 303+30
        assert_eq!(m, vec![30.0, 33.0, 330.0, 333.0]);
        assert_eq!(t.marginal(&[1]), vec![202.0, 242.0, 282.0]);
    }
}
