//! Feasibility of departure–arrival pairs and constructive witnesses.
//!
//! A pair `(μ⁰, μᵀ)` admits a coupling with travel time at least `Δ` exactly
//! when the departure CDF dominates the Δ-shifted arrival CDF. On the grid the
//! shift is a whole number of bins, rounded up.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::{JointMeasure, Measure, TimeGrid};

/// Slack on CDF comparisons; exactly tight pairs count as feasible.
pub const CDF_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    /// First grid time where `F₀(t) < F_T(t + Δ)`; `0` when mass must arrive
    /// before any departure could reach it.
    pub violation_time: Option<f64>,
    /// `min_t F₀(t) − F_T(t + Δ)`.
    pub margin: f64,
    /// Shift actually applied, in bins.
    pub shift_bins: usize,
}

pub fn check_da_feasibility(mu0: &Measure, mu_t: &Measure, delta: f64) -> Result<FeasibilityVerdict> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::BadParam(format!("delta must be nonnegative, got {delta}")));
    }
    check_da_feasibility_bins(mu0, mu_t, mu0.grid().bins_for(delta))
}

/// Dominance test with the shift given directly as a bin offset.
pub fn check_da_feasibility_bins(
    mu0: &Measure,
    mu_t: &Measure,
    shift_bins: usize,
) -> Result<FeasibilityVerdict> {
    if mu0.grid() != mu_t.grid() {
        return Err(Error::GridMismatch);
    }
    mu0.require_probability()?;
    mu_t.require_probability()?;
    let grid = mu0.grid();
    let n = grid.n_t();
    let f0 = mu0.cdf();
    let ft = mu_t.cdf();
    let ft_total = ft[n - 1];

    // Arrivals in the first `shift_bins` bins have no admissible departure.
    let mut margin = if shift_bins == 0 {
        f64::INFINITY
    } else {
        -ft[(shift_bins - 1).min(n - 1)]
    };
    let mut violation_time = (margin < -CDF_SLACK).then_some(0.0);
    for (i, f) in f0.iter().enumerate() {
        let shifted = if i + shift_bins < n {
            ft[i + shift_bins]
        } else {
            ft_total
        };
        let gap = f - shifted;
        if gap < -CDF_SLACK && violation_time.is_none() {
            violation_time = Some(grid.center(i));
        }
        margin = margin.min(gap);
    }
    Ok(FeasibilityVerdict {
        feasible: margin >= -CDF_SLACK,
        violation_time,
        margin,
        shift_bins,
    })
}

/// Discrete law over `(t₀, t₁, t_T)` bin triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletLaw {
    grid: TimeGrid,
    cells: BTreeMap<(usize, usize, usize), f64>,
}

impl TripletLaw {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn cells(&self) -> impl Iterator<Item = ((usize, usize, usize), f64)> + '_ {
        self.cells.iter().map(|(k, v)| (*k, *v))
    }

    /// Marginal along coordinate `axis` (0 = departure, 1 = crossing, 2 = arrival).
    pub fn marginal(&self, axis: usize) -> Measure {
        let mut mass = vec![0.0; self.grid.n_t()];
        for (&(a, b, c), m) in &self.cells {
            let k = [a, b, c][axis];
            mass[k] += m;
        }
        Measure::new(self.grid, mass).expect("nonnegative by construction")
    }
}

/// Quantile-coupling witness of a feasible schedule through one capacitated
/// node: `t₀ = F₀⁻¹(u)`, `t_T = F_T⁻¹(u)`, `t₁ = t₀ + gap + s` with
/// `s ∈ (0, 1/r)`. Both `u` and `s` are sampled at stratum midpoints with
/// `n_samples` strata each, so the result is deterministic.
pub fn quantile_coupling_witness(
    mu0: &Measure,
    mu_t: &Measure,
    delta: f64,
    epsilon_gap: f64,
    r: f64,
    n_samples: usize,
) -> Result<TripletLaw> {
    if n_samples == 0 {
        return Err(Error::BadParam("n_samples must be positive".into()));
    }
    if !(r.is_finite() && r > 0.0) || !(epsilon_gap.is_finite() && epsilon_gap >= 0.0) {
        return Err(Error::BadParam(format!("rate {r} / gap {epsilon_gap}")));
    }
    if epsilon_gap + 1.0 / r >= delta {
        return Err(Error::InfeasiblePrecondition(format!(
            "gap {epsilon_gap} + 1/r {} must be below delta {delta}",
            1.0 / r
        )));
    }
    let verdict = check_da_feasibility(mu0, mu_t, delta)?;
    if !verdict.feasible {
        return Err(Error::InfeasiblePrecondition(format!(
            "departure law not dominated by the delta-shifted arrival law (margin {})",
            verdict.margin
        )));
    }

    let grid = mu0.grid();
    let weight = 1.0 / (n_samples as f64 * n_samples as f64);
    let mut cells = BTreeMap::new();
    for a in 0..n_samples {
        let u = (a as f64 + 0.5) / n_samples as f64;
        let i0 = mu0.quantile_bin(u)?;
        let it = mu_t.quantile_bin(u)?;
        let t0 = grid.center(i0);
        for b in 0..n_samples {
            let s = (b as f64 + 0.5) / (n_samples as f64 * r);
            let t1 = t0 + epsilon_gap + s;
            let i1 = grid.bin_of(t1).ok_or_else(|| {
                Error::InfeasiblePrecondition(format!("crossing time {t1} leaves the horizon"))
            })?;
            *cells.entry((i0, i1, it)).or_insert(0.0) += weight;
        }
    }
    Ok(TripletLaw { grid, cells })
}

/// Co-monotone (north-west corner) coupling of two measures with equal mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Rearrangement {
    grid: TimeGrid,
    cells: Vec<(usize, usize, f64)>,
}

impl Rearrangement {
    pub fn cells(&self) -> &[(usize, usize, f64)] {
        &self.cells
    }

    pub fn to_joint(&self) -> JointMeasure {
        let n = self.grid.n_t();
        let mut mass = vec![0.0; n * n];
        for &(i, j, m) in &self.cells {
            mass[i * n + j] += m;
        }
        JointMeasure::new(self.grid, mass).expect("nonnegative by construction")
    }

    /// `(a'−a)(b'−b) ≥ 0` for every pair of support points.
    pub fn is_comonotone(&self) -> bool {
        self.cells.iter().all(|&(a, b, _)| {
            self.cells.iter().all(|&(a2, b2, _)| {
                (a2 as i64 - a as i64) * (b2 as i64 - b as i64) >= 0
            })
        })
    }

    /// Image bin of each source bin with mass, as the mass-weighted mean of
    /// its targets' centers.
    pub fn barycentric_map(&self) -> Vec<Option<f64>> {
        let n = self.grid.n_t();
        let mut num = vec![0.0; n];
        let mut den = vec![0.0; n];
        for &(i, j, m) in &self.cells {
            num[i] += m * self.grid.center(j);
            den[i] += m;
        }
        num.iter()
            .zip(&den)
            .map(|(a, d)| if *d > 0.0 { Some(a / d) } else { None })
            .collect()
    }
}

pub fn monotone_rearrangement(src: &Measure, dst: &Measure) -> Result<Rearrangement> {
    if src.grid() != dst.grid() {
        return Err(Error::GridMismatch);
    }
    let (ta, tb) = (src.total(), dst.total());
    if (ta - tb).abs() > 1e-9 * ta.max(tb).max(1.0) {
        return Err(Error::MassMismatch { left: ta, right: tb });
    }
    let a = src.mass();
    let b = dst.mass();
    let n = a.len();
    let mut cells = Vec::new();
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0], b[0]);
    loop {
        while i < n && ra <= 0.0 {
            i += 1;
            ra = if i < n { a[i] } else { 0.0 };
        }
        while j < n && rb <= 0.0 {
            j += 1;
            rb = if j < n { b[j] } else { 0.0 };
        }
        if i == n || j == n {
            break;
        }
        let m = ra.min(rb);
        cells.push((i, j, m));
        // one of the two remainders hits exactly zero
        if ra <= rb {
            rb -= m;
            ra = 0.0;
        } else {
            ra -= m;
            rb = 0.0;
        }
    }
    Ok(Rearrangement {
        grid: src.grid(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    fn dirac_at(g: TimeGrid, t: f64) -> Measure {
        Measure::dirac(g, g.bin_of(t).unwrap()).unwrap()
    }

    #[test]
    fn dirac_pair_with_ample_gap_is_feasible() {
        let g = grid(20);
        let v = check_da_feasibility(&dirac_at(g, 0.1), &dirac_at(g, 0.5), 0.3).unwrap();
        assert!(v.feasible);
        assert!(v.violation_time.is_none());
    }

    #[test]
    fn dirac_pair_too_close_is_infeasible() {
        let g = grid(20);
        let v = check_da_feasibility(&dirac_at(g, 0.4), &dirac_at(g, 0.5), 0.3).unwrap();
        assert!(!v.feasible);
        // first bin whose Δ-shift reaches the arrival atom at 0.525
        let t = v.violation_time.unwrap();
        assert!((t - 0.225).abs() < 1e-12, "violation at {t}");
        assert!((v.margin + 1.0).abs() < 1e-12);
    }

    #[test]
    fn arrival_before_first_reachable_bin_is_infeasible() {
        let g = grid(10);
        let mut early = vec![0.0; 10];
        early[0] = 0.5;
        early[9] = 0.5;
        let mu_t = Measure::new(g, early).unwrap();
        let mu0 = Measure::dirac(g, 0).unwrap();
        assert!(check_da_feasibility_bins(&mu0, &mu_t, 0).unwrap().feasible);
        let v = check_da_feasibility_bins(&mu0, &mu_t, 1).unwrap();
        assert!(!v.feasible);
        assert_eq!(v.violation_time, Some(0.0));
        assert!((v.margin + 0.5).abs() < 1e-12);
    }

    #[test]
    fn tight_pair_is_feasible() {
        let g = grid(10);
        let m = Measure::uniform(g);
        let v = check_da_feasibility(&m, &m, 0.0).unwrap();
        assert!(v.feasible);
        assert_eq!(v.margin, 0.0);
    }

    #[test]
    fn grid_mismatch() {
        let a = Measure::uniform(grid(10));
        let b = Measure::uniform(grid(11));
        assert_eq!(check_da_feasibility(&a, &b, 0.0), Err(Error::GridMismatch));
    }

    #[test]
    fn self_shift_feasible_and_monotone_in_delta() {
        let g = grid(40);
        let mut mass = vec![0.0; 40];
        for (k, m) in mass.iter_mut().enumerate().take(25) {
            *m = 1.0 + (k as f64 * 0.7).sin().abs();
        }
        let m = Measure::new(g, mass).unwrap().normalized().unwrap();
        for k in 0..=15 {
            let shifted = m.shifted(k);
            let v = check_da_feasibility_bins(&m, &shifted, k).unwrap();
            assert!(v.feasible, "self shift by {k}");
            for smaller in 0..=k {
                assert!(check_da_feasibility_bins(&m, &shifted, smaller).unwrap().feasible);
            }
        }
    }

    #[test]
    fn witness_for_diracs_spreads_crossing() {
        let g = grid(100);
        let mu0 = dirac_at(g, 0.1);
        let mu_t = dirac_at(g, 0.9);
        let r = 5.0;
        let w = quantile_coupling_witness(&mu0, &mu_t, 0.6, 0.05, r, 50).unwrap();
        let pairs: std::collections::BTreeSet<(usize, usize)> =
            w.cells().map(|((a, _, c), _)| (a, c)).collect();
        assert_eq!(pairs.len(), 1);
        let cross = w.marginal(1);
        let support: Vec<usize> = (0..100).filter(|k| cross.mass()[*k] > 0.0).collect();
        let width = g.center(*support.last().unwrap()) - g.center(support[0]);
        assert!(width <= 1.0 / r + g.dt() + 1e-12);
        assert!(width >= 1.0 / r - 2.0 * g.dt());
        assert!((w.marginal(0).mass()[g.bin_of(0.1).unwrap()] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn witness_respects_capacity_up_to_one_stratum() {
        let g = grid(100);
        let mut mass = vec![0.0; 100];
        for m in mass.iter_mut().take(40) {
            *m = 1.0 / 40.0;
        }
        let mu0 = Measure::new(g, mass).unwrap();
        let shift = 30;
        let mu_t = mu0.shifted(shift);
        let delta = shift as f64 * g.dt();
        let r = 8.0;
        let n = 200;
        let w = quantile_coupling_witness(&mu0, &mu_t, delta, 0.05, r, n).unwrap();
        let cross = w.marginal(1);
        let slack = 1.0 / n as f64;
        for m in cross.mass() {
            assert!(*m <= r * g.dt() + slack + 1e-12, "bin mass {m}");
        }
        // boundary marginals reproduce the inputs up to u-stratification error
        let e0: f64 = w.marginal(0).mass().iter().zip(mu0.mass()).map(|(a, b)| (a - b).abs()).sum();
        let et: f64 = w.marginal(2).mass().iter().zip(mu_t.mass()).map(|(a, b)| (a - b).abs()).sum();
        assert!(e0 <= 2.0 * 40.0 / n as f64);
        assert!(et <= 2.0 * 40.0 / n as f64);
    }

    #[test]
    fn witness_guard() {
        let g = grid(20);
        let mu0 = dirac_at(g, 0.1);
        let mu_t = dirac_at(g, 0.9);
        assert!(matches!(
            quantile_coupling_witness(&mu0, &mu_t, 0.3, 0.1, 5.0, 10),
            Err(Error::InfeasiblePrecondition(_))
        ));
    }

    #[test]
    fn rearrangement_of_identical_is_identity() {
        let g = grid(12);
        let m = Measure::new(g, (1..=12).map(|k| k as f64 / 78.0).collect()).unwrap();
        let r = monotone_rearrangement(&m, &m).unwrap();
        assert!(r.cells().iter().all(|(i, j, _)| i == j));
    }

    #[test]
    fn rearrangement_of_shift_is_shifted_diagonal() {
        let g = grid(12);
        let mut mass = vec![0.0; 12];
        for m in mass.iter_mut().take(8) {
            *m = 1.0 / 8.0;
        }
        let m = Measure::new(g, mass).unwrap();
        let r = monotone_rearrangement(&m, &m.shifted(3)).unwrap();
        assert!(r.cells().iter().all(|(i, j, _)| *j == i + 3));
        assert!(r.is_comonotone());
    }

    #[test]
    fn rearrangement_marginals_exact() {
        let g = grid(12);
        let a = Measure::new(g, (0..12).map(|k| (k * 7 % 5) as f64 + 0.5).collect())
            .unwrap()
            .normalized()
            .unwrap();
        let b = Measure::new(g, (0..12).map(|k| (k * 3 % 4) as f64 + 0.1).collect())
            .unwrap()
            .normalized()
            .unwrap();
        let j = monotone_rearrangement(&a, &b).unwrap().to_joint();
        for (x, y) in j.first_marginal().mass().iter().zip(a.mass()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in j.second_marginal().mass().iter().zip(b.mass()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rearrangement_mass_mismatch() {
        let g = grid(4);
        let a = Measure::uniform(g);
        let b = Measure::new(g, vec![0.5, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            monotone_rearrangement(&a, &b),
            Err(Error::MassMismatch { .. })
        ));
    }
}
