//! Arithmetic for chain messages, either plain products/sums or log-sum-exp.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Linear,
    Log,
}

impl Domain {
    #[inline]
    pub fn one(self) -> f64 {
        match self {
            Domain::Linear => 1.0,
            Domain::Log => 0.0,
        }
    }

    #[inline]
    pub fn zero(self) -> f64 {
        match self {
            Domain::Linear => 0.0,
            Domain::Log => f64::NEG_INFINITY,
        }
    }

    #[inline]
    pub fn mul(self, a: f64, b: f64) -> f64 {
        match self {
            Domain::Linear => a * b,
            Domain::Log => a + b,
        }
    }

    #[inline]
    pub fn add(self, a: f64, b: f64) -> f64 {
        match self {
            Domain::Linear => a + b,
            Domain::Log => log_add_exp(a, b),
        }
    }

    #[inline]
    pub fn to_log(self, x: f64) -> f64 {
        match self {
            Domain::Linear => x.ln(),
            Domain::Log => x,
        }
    }

    #[inline]
    pub fn from_log(self, l: f64) -> f64 {
        match self {
            Domain::Linear => l.exp(),
            Domain::Log => l,
        }
    }

    /// Converts a stored kernel/message value to linear scale.
    #[inline]
    pub fn to_linear(self, x: f64) -> f64 {
        match self {
            Domain::Linear => x,
            Domain::Log => x.exp(),
        }
    }

    /// `Σ_i a_i·b_i` in this domain.
    #[inline]
    pub fn dot(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Domain::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Domain::Log => lse_pairs(a, b),
        }
    }

    pub fn sum(self, a: &[f64]) -> f64 {
        match self {
            Domain::Linear => a.iter().sum(),
            Domain::Log => {
                let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if m == f64::NEG_INFINITY {
                    return m;
                }
                m + a.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
            }
        }
    }
}

#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log Σ_i exp(a_i + b_i)`.
#[inline]
pub fn lse_pairs(a: &[f64], b: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for (x, y) in a.iter().zip(b) {
        let v = x + y;
        if v > m {
            m = v;
        }
    }
    if m == f64::NEG_INFINITY {
        return m;
    }
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += (x + y - m).exp();
    }
    m + s.ln()
}

/// Kernel of one edge, stored in the solver's domain in both orientations.
#[derive(Debug, Clone)]
pub(crate) struct EdgeKernel {
    n: usize,
    /// `[s * n + t]`
    rows: Vec<f64>,
    /// `[t * n + s]`
    cols: Vec<f64>,
}

impl EdgeKernel {
    pub(crate) fn new(n: usize, log_entries: impl Fn(usize, usize) -> f64, domain: Domain) -> Self {
        let mut rows = vec![domain.zero(); n * n];
        let mut cols = vec![domain.zero(); n * n];
        for s in 0..n {
            for t in (s + 1)..n {
                let v = domain.from_log(log_entries(s, t));
                rows[s * n + t] = v;
                cols[t * n + s] = v;
            }
        }
        EdgeKernel { n, rows, cols }
    }

    /// `out[t] = Σ_{s<t} a[s]·K[s,t]`.
    pub(crate) fn forward(&self, domain: Domain, a: &[f64], out: &mut [f64]) {
        let n = self.n;
        for t in 0..n {
            out[t] = if t == 0 {
                domain.zero()
            } else {
                domain.dot(&a[..t], &self.cols[t * n..t * n + t])
            };
        }
    }

    /// `out[s] = Σ_{t>s} K[s,t]·b[t]`.
    pub(crate) fn backward(&self, domain: Domain, b: &[f64], out: &mut [f64]) {
        let n = self.n;
        for s in 0..n {
            out[s] = if s + 1 == n {
                domain.zero()
            } else {
                domain.dot(&b[s + 1..], &self.rows[s * n + s + 1..(s + 1) * n])
            };
        }
    }
}
