//! Reciprocal-gap transit costs, their Gibbs kernels, and numeric checks of
//! the structural cost conditions (cross-difference sign, x-twist,
//! non-degeneracy).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// `K[s,t] = exp(−w / (ε·(t_t − t_s)))` for `t > s`, zero otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct PairKernel {
    grid: TimeGrid,
    weight: f64,
    epsilon: f64,
    k: Vec<f64>,
    log_k: Option<Vec<f64>>,
}

pub fn build_pair_kernel(grid: TimeGrid, weight: f64, epsilon: f64) -> Result<PairKernel> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::BadParam(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(weight.is_finite() && weight >= 0.0) {
        return Err(Error::BadParam(format!("weight must be nonnegative, got {weight}")));
    }
    let k = log_entries(grid, weight, epsilon)
        .into_iter()
        .map(f64::exp)
        .collect();
    Ok(PairKernel {
        grid,
        weight,
        epsilon,
        k,
        log_k: None,
    })
}

fn log_entries(grid: TimeGrid, weight: f64, epsilon: f64) -> Vec<f64> {
    let n = grid.n_t();
    let dt = grid.dt();
    let mut out = vec![f64::NEG_INFINITY; n * n];
    for s in 0..n {
        for t in (s + 1)..n {
            out[s * n + t] = -weight / (epsilon * (t - s) as f64 * dt);
        }
    }
    out
}

impl PairKernel {
    /// Attach the log-domain representation.
    pub fn with_log(mut self) -> Self {
        if self.log_k.is_none() {
            self.log_k = Some(log_entries(self.grid, self.weight, self.epsilon));
        }
        self
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n(&self) -> usize {
        self.grid.n_t()
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.k[s * self.n() + t]
    }

    pub fn log_get(&self, s: usize, t: usize) -> f64 {
        match &self.log_k {
            Some(l) => l[s * self.n() + t],
            None => self.get(s, t).ln(),
        }
    }

    /// Row-major linear entries.
    pub fn linear(&self) -> &[f64] {
        &self.k
    }

    pub fn log(&self) -> Option<&[f64]> {
        self.log_k.as_deref()
    }

    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut out = String::from("s,t,k,log_k\n");
        for s in 0..n {
            for t in 0..n {
                out.push_str(&format!("{s},{t},{},{}\n", self.get(s, t), self.log_get(s, t)));
            }
        }
        out
    }
}

/// Whether kernels should be used in log-sum-exp form: `ε < 0.05·w_max·t_f`.
pub fn kernel_needs_log_domain(epsilon: f64, max_weight: f64, t_f: f64) -> bool {
    epsilon < 0.05 * max_weight * t_f
}

/// `Σ_ℓ w_ℓ / (t_ℓ − t_{ℓ−1})`.
pub fn path_cost(weights: &[f64], times: &[f64]) -> Result<f64> {
    if times.len() != weights.len() + 1 {
        return Err(Error::BadParam(format!(
            "{} weights need {} times, got {}",
            weights.len(),
            weights.len() + 1,
            times.len()
        )));
    }
    let mut total = 0.0;
    for (w, pair) in weights.iter().zip(times.windows(2)) {
        let gap = pair[1] - pair[0];
        if gap <= 0.0 || gap.is_nan() {
            return Err(Error::NonIncreasingTimes);
        }
        total += w / gap;
    }
    Ok(total)
}

/// Smallest reachable cost of a path with these weights on `[0, t_f]`,
/// attained with gaps proportional to `√w_ℓ`.
pub fn min_path_cost(weights: &[f64], t_f: f64) -> f64 {
    let s: f64 = weights.iter().map(|w| w.sqrt()).sum();
    s * s / t_f
}

/// Ordered quadruple `t < t′`, `s < s′` for a cross-difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadruple {
    pub t: f64,
    pub t_prime: f64,
    pub s: f64,
    pub s_prime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MongeReport {
    pub evaluated: usize,
    pub skipped: usize,
    pub negative: usize,
    pub positive: usize,
    pub zero: usize,
    pub min: f64,
    pub max: f64,
}

impl MongeReport {
    /// All evaluated cross-differences share one (weak) sign.
    pub fn single_sign(&self) -> bool {
        self.negative == 0 || self.positive == 0
    }
}

/// Cross-differences `c(t,s) + c(t′,s′) − c(t,s′) − c(t′,s)`; the cost returns
/// `None` outside its domain and such quadruples are skipped.
pub fn check_generalized_monge<F>(cost: F, samples: &[Quadruple]) -> MongeReport
where
    F: Fn(f64, f64) -> Option<f64>,
{
    let mut rep = MongeReport {
        evaluated: 0,
        skipped: 0,
        negative: 0,
        positive: 0,
        zero: 0,
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
    };
    for q in samples {
        let terms = (
            cost(q.t, q.s),
            cost(q.t_prime, q.s_prime),
            cost(q.t, q.s_prime),
            cost(q.t_prime, q.s),
        );
        let (Some(a), Some(b), Some(c), Some(d)) = terms else {
            rep.skipped += 1;
            continue;
        };
        let diff = a + b - c - d;
        rep.evaluated += 1;
        rep.min = rep.min.min(diff);
        rep.max = rep.max.max(diff);
        if diff < 0.0 {
            rep.negative += 1;
        } else if diff > 0.0 {
            rep.positive += 1;
        } else {
            rep.zero += 1;
        }
    }
    rep
}

/// Reciprocal-gap cost `w/(s − t)`, defined for `s > t`.
pub fn reciprocal_gap_cost(weight: f64) -> impl Fn(f64, f64) -> Option<f64> {
    move |t, s| (s > t).then(|| weight / (s - t))
}

/// Seeded quadruples with `0 < t < t′ < s < s′ < t_f`, the region where every
/// pairing in the cross-difference is time-ordered.
pub fn sample_ordered_quadruples(t_f: f64, count: usize, seed: u64) -> Vec<Quadruple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v = [0.0f64; 4];
            loop {
                for x in v.iter_mut() {
                    *x = rng.gen_range(0.0..t_f);
                }
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if v.windows(2).all(|w| w[1] > w[0]) && v[0] > 0.0 {
                    break;
                }
            }
            Quadruple {
                t: v[0],
                t_prime: v[1],
                s: v[2],
                s_prime: v[3],
            }
        })
        .collect()
}

/// One evaluation of the x-twist check for `c(t₀,t₁,t₂) = w₀₁/(t₁−t₀) + w₁₂/(t₂−t₁)`
/// with `x = (t₀, t₂)` and `y = t₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XTwistQuery {
    pub t0: f64,
    pub t2: f64,
    pub t1: f64,
    pub t1_prime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XTwistReport {
    pub grad: [f64; 2],
    pub grad_prime: [f64; 2],
    pub difference: [f64; 2],
    /// Difference is nonzero whenever `t₁ ≠ t₁′`.
    pub injective: bool,
    /// Largest relative error between analytic and central-difference gradients.
    pub fd_rel_error: f64,
}

fn three_time_cost(w: [f64; 2], t0: f64, t1: f64, t2: f64) -> f64 {
    w[0] / (t1 - t0) + w[1] / (t2 - t1)
}

/// `∇_{(t₀,t₂)} c = (w₀₁(t₁−t₀)⁻², −w₁₂(t₂−t₁)⁻²)`.
pub fn da_gradient(w: [f64; 2], t0: f64, t1: f64, t2: f64) -> [f64; 2] {
    [w[0] / (t1 - t0).powi(2), -w[1] / (t2 - t1).powi(2)]
}

/// `∇²_{(t₀,t₂), t₁} c = (−2w₀₁(t₁−t₀)⁻³, −2w₁₂(t₂−t₁)⁻³)`.
pub fn mixed_second_derivative(w: [f64; 2], t0: f64, t1: f64, t2: f64) -> [f64; 2] {
    [-2.0 * w[0] / (t1 - t0).powi(3), -2.0 * w[1] / (t2 - t1).powi(3)]
}

pub fn check_xtwist(weights: [f64; 2], queries: &[XTwistQuery], fd_step: f64) -> Result<Vec<XTwistReport>> {
    queries
        .iter()
        .map(|q| {
            for t1 in [q.t1, q.t1_prime] {
                if !(q.t0 < t1 && t1 < q.t2) {
                    return Err(Error::NonIncreasingTimes);
                }
            }
            let grad = da_gradient(weights, q.t0, q.t1, q.t2);
            let grad_prime = da_gradient(weights, q.t0, q.t1_prime, q.t2);
            let difference = [grad[0] - grad_prime[0], grad[1] - grad_prime[1]];
            let injective = if q.t1 == q.t1_prime {
                true
            } else {
                difference[0] != 0.0 && difference[1] != 0.0
            };
            let mut fd_rel_error: f64 = 0.0;
            for (t1, g) in [(q.t1, grad), (q.t1_prime, grad_prime)] {
                let h = fd_step;
                let d0 = (three_time_cost(weights, q.t0 + h, t1, q.t2)
                    - three_time_cost(weights, q.t0 - h, t1, q.t2))
                    / (2.0 * h);
                let d2 = (three_time_cost(weights, q.t0, t1, q.t2 + h)
                    - three_time_cost(weights, q.t0, t1, q.t2 - h))
                    / (2.0 * h);
                for (fd, an) in [(d0, g[0]), (d2, g[1])] {
                    let scale = an.abs().max(f64::MIN_POSITIVE);
                    fd_rel_error = fd_rel_error.max((fd - an).abs() / scale);
                }
            }
            Ok(XTwistReport {
                grad,
                grad_prime,
                difference,
                injective,
                fd_rel_error,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonDegeneracyReport {
    pub mixed: [f64; 2],
    /// Rank of the 2×1 mixed-derivative matrix.
    pub rank: usize,
    pub fd_rel_error: f64,
}

/// Rank of `∇²_{(t₀,t₂),t₁} c`, cross-checked by differencing the analytic gradient.
pub fn check_nondegeneracy(weights: [f64; 2], t0: f64, t1: f64, t2: f64, fd_step: f64) -> Result<NonDegeneracyReport> {
    if !(t0 < t1 && t1 < t2) {
        return Err(Error::NonIncreasingTimes);
    }
    let mixed = mixed_second_derivative(weights, t0, t1, t2);
    let gp = da_gradient(weights, t0, t1 + fd_step, t2);
    let gm = da_gradient(weights, t0, t1 - fd_step, t2);
    let mut fd_rel_error: f64 = 0.0;
    for i in 0..2 {
        let fd = (gp[i] - gm[i]) / (2.0 * fd_step);
        fd_rel_error = fd_rel_error.max((fd - mixed[i]).abs() / mixed[i].abs().max(f64::MIN_POSITIVE));
    }
    let rank = usize::from(mixed.iter().any(|m| *m != 0.0));
    Ok(NonDegeneracyReport {
        mixed,
        rank,
        fd_rel_error,
    })
}
