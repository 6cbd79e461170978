use serde::{Deserialize, Serialize};

use super::domain::Domain;
use crate::io::format_float;

/// Marginal and capacity violations plus the dual objective at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub e0: f64,
    pub et: f64,
    pub v: f64,
    pub objective: f64,
}

impl Diagnostics {
    pub fn total(&self) -> f64 {
        self.e0 + self.et + self.v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub e0: f64,
    pub et: f64,
    pub v: f64,
    pub objective: f64,
    pub epsilon: f64,
    pub elapsed_s: f64,
}

/// Which diagnostic series to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    E0,
    ET,
    V,
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub records: Vec<IterationRecord>,
    pub iterations: usize,
    pub converged: bool,
    pub final_diagnostics: Diagnostics,
    pub domain: Domain,
    pub epsilon: f64,
    /// True when ε annealing was active (not part of the base algorithm).
    pub annealed: bool,
    pub wall_time_s: f64,
}

impl ConvergenceReport {
    /// `iter,E0,ET,V,objective` with one row per sweep.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,E0,ET,V,objective\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iter,
                format_float(r.e0),
                format_float(r.et),
                format_float(r.v),
                format_float(r.objective)
            ));
        }
        out
    }

    pub fn series(&self, which: Series) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| match which {
                Series::E0 => r.e0,
                Series::ET => r.et,
                Series::V => r.v,
                Series::Total => r.e0 + r.et + r.v,
            })
            .collect()
    }

    /// Least-squares fit of `log10(series)` against the iteration index over
    /// `from..=to` (1-based iteration numbers). Non-positive values are skipped.
    pub fn log10_fit(&self, which: Series, from: usize, to: usize) -> Option<LinearFit> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .records
            .iter()
            .zip(self.series(which))
            .filter(|(r, y)| r.iter >= from && r.iter <= to && *y > 0.0 && y.is_finite())
            .map(|(r, y)| (r.iter as f64, y.log10()))
            .unzip();
        linear_fit(&xs, &ys)
    }
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}
