//! Uniform time grid and the discrete measures that live on it.
//!
//! All temporal quantities are stored as mass per bin, never as densities.
//! Bin `k` covers `[k·dt, (k+1)·dt)` and is represented by its center
//! `(k + 1/2)·dt`. A density bound `r` becomes the per-bin cap `r·dt`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{format_float, parse_float};

/// Probability-measure tolerance for `total == 1`.
pub const PROBABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct TimeGrid {
    t_f: f64,
    n_t: usize,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    t_f: f64,
    n_t: usize,
}

impl TryFrom<RawGrid> for TimeGrid {
    type Error = Error;
    fn try_from(raw: RawGrid) -> Result<Self> {
        TimeGrid::new(raw.t_f, raw.n_t)
    }
}

impl From<TimeGrid> for RawGrid {
    fn from(g: TimeGrid) -> Self {
        RawGrid {
            t_f: g.t_f,
            n_t: g.n_t,
        }
    }
}

impl TimeGrid {
    pub fn new(t_f: f64, n_t: usize) -> Result<Self> {
        if !(t_f.is_finite() && t_f > 0.0) {
            return Err(Error::BadGrid(format!("horizon must be positive, got {t_f}")));
        }
        if n_t < 2 {
            return Err(Error::BadGrid(format!("need at least 2 bins, got {n_t}")));
        }
        Ok(TimeGrid { t_f, n_t })
    }

    pub fn t_f(&self) -> f64 {
        self.t_f
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn dt(&self) -> f64 {
        self.t_f / self.n_t as f64
    }

    /// Center of bin `k`, computed as `(2k+1)·t_f / (2·n_t)` so that centers
    /// like 0.475 come out correctly rounded.
    pub fn center(&self, k: usize) -> f64 {
        (2 * k + 1) as f64 * self.t_f / (2 * self.n_t) as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_t).map(|k| self.center(k)).collect()
    }

    /// Bin containing `t`; `t_f` itself maps to the last bin. `None` outside `[0, t_f]`.
    pub fn bin_of(&self, t: f64) -> Option<usize> {
        if !(0.0..=self.t_f).contains(&t) {
            return None;
        }
        Some(((t / self.dt()).floor() as usize).min(self.n_t - 1))
    }

    /// Number of whole bins needed to cover a time span, rounding up.
    pub fn bins_for(&self, span: f64) -> usize {
        if span <= 0.0 {
            return 0;
        }
        // absorb rounding noise so that exact multiples of dt stay exact
        (span / self.dt() - 1e-9).ceil().max(0.0) as usize
    }
}

/// Nonnegative mass per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    grid: TimeGrid,
    mass: Vec<f64>,
}

impl Measure {
    pub fn new(grid: TimeGrid, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.n_t() {
            return Err(Error::InvalidMeasure(format!(
                "expected {} bins, got {}",
                grid.n_t(),
                mass.len()
            )));
        }
        if let Some((k, m)) = mass
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m >= 0.0))
        {
            return Err(Error::InvalidMeasure(format!("bin {k} has mass {m}")));
        }
        Ok(Measure { grid, mass })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Measure {
            grid,
            mass: vec![0.0; grid.n_t()],
        }
    }

    pub fn dirac(grid: TimeGrid, bin: usize) -> Result<Self> {
        if bin >= grid.n_t() {
            return Err(Error::InvalidMeasure(format!("bin {bin} outside grid")));
        }
        let mut mass = vec![0.0; grid.n_t()];
        mass[bin] = 1.0;
        Ok(Measure { grid, mass })
    }

    pub fn uniform(grid: TimeGrid) -> Self {
        let n = grid.n_t();
        Measure {
            grid,
            mass: vec![1.0 / n as f64; n],
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn is_probability(&self) -> bool {
        (self.total() - 1.0).abs() <= PROBABILITY_TOL
    }

    pub fn require_probability(&self) -> Result<()> {
        if self.is_probability() {
            Ok(())
        } else {
            Err(Error::NonProbability {
                total: self.total(),
            })
        }
    }

    /// Cumulative masses `F(t_k) = Σ_{j ≤ k} mass_j`.
    pub fn cdf(&self) -> Vec<f64> {
        self.mass
            .iter()
            .scan(0.0, |acc, m| {
                *acc += m;
                Some(*acc)
            })
            .collect()
    }

    /// Index of the smallest bin whose cumulative mass reaches `u`.
    pub fn quantile_bin(&self, u: f64) -> Result<usize> {
        self.require_probability()?;
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::BadParam(format!("quantile level {u} outside (0, 1]")));
        }
        let cdf = self.cdf();
        // the last bin with mass absorbs u values lost to rounding
        let last = self
            .mass
            .iter()
            .rposition(|m| *m > 0.0)
            .unwrap_or(self.mass.len() - 1);
        Ok(cdf.iter().position(|f| *f >= u).unwrap_or(last).min(last))
    }

    /// Left-continuous generalized inverse of the CDF, returned as a bin center.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        Ok(self.grid.center(self.quantile_bin(u)?))
    }

    /// Translate mass `bins` bins later; mass pushed past the horizon is dropped.
    pub fn shifted(&self, bins: usize) -> Measure {
        let n = self.mass.len();
        let mut mass = vec![0.0; n];
        let keep = n.saturating_sub(bins);
        mass[n - keep..].copy_from_slice(&self.mass[..keep]);
        Measure {
            grid: self.grid,
            mass,
        }
    }

    pub fn normalized(&self) -> Result<Measure> {
        let total = self.total();
        if total <= 0.0 {
            return Err(Error::InvalidMeasure("zero total mass".into()));
        }
        Ok(Measure {
            grid: self.grid,
            mass: self.mass.iter().map(|m| m / total).collect(),
        })
    }

    /// `(bin_center, mass)` rows with a header.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(vec![]);
        w.write_record(["bin_center", "mass"])
            .map_err(|e| Error::Csv(e.to_string()))?;
        for (k, m) in self.mass.iter().enumerate() {
            w.write_record([format_float(self.grid.center(k)), format_float(*m)])
                .map_err(|e| Error::Csv(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Csv(e.to_string()))
    }

    pub fn from_csv(grid: TimeGrid, text: &str) -> Result<Measure> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut mass = Vec::with_capacity(grid.n_t());
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
            let m = rec
                .get(1)
                .ok_or_else(|| Error::Csv("missing mass column".into()))?
                .trim();
            let m = parse_float(m).ok_or_else(|| Error::Csv(format!("bad mass value {m:?}")))?;
            mass.push(m);
        }
        Measure::new(grid, mass)
    }
}

/// Nonnegative mass over bin pairs, row-major `(first, second)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMeasure {
    grid: TimeGrid,
    mass: Vec<f64>,
}

impl JointMeasure {
    pub fn new(grid: TimeGrid, mass: Vec<f64>) -> Result<Self> {
        let n = grid.n_t();
        if mass.len() != n * n {
            return Err(Error::InvalidMeasure(format!(
                "joint measure needs {} cells, got {}",
                n * n,
                mass.len()
            )));
        }
        if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidMeasure(
                "joint measure has a negative or non-finite cell".into(),
            ));
        }
        Ok(JointMeasure { grid, mass })
    }

    pub fn from_rows(grid: TimeGrid, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != grid.n_t() || rows.iter().any(|r| r.len() != grid.n_t()) {
            return Err(Error::InvalidMeasure("joint matrix shape mismatch".into()));
        }
        JointMeasure::new(grid, rows.concat())
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.grid.n_t() + j]
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.mass
            .chunks(self.grid.n_t())
            .map(|c| c.to_vec())
            .collect()
    }

    /// Marginal over the first coordinate.
    pub fn first_marginal(&self) -> Measure {
        let n = self.grid.n_t();
        let mass = (0..n)
            .map(|i| self.mass[i * n..(i + 1) * n].iter().sum())
            .collect();
        Measure {
            grid: self.grid,
            mass,
        }
    }

    /// Marginal over the second coordinate.
    pub fn second_marginal(&self) -> Measure {
        let n = self.grid.n_t();
        let mut mass = vec![0.0; n];
        for row in self.mass.chunks(n) {
            for (acc, m) in mass.iter_mut().zip(row) {
                *acc += m;
            }
        }
        Measure {
            grid: self.grid,
            mass,
        }
    }
}

/// One Gaussian component `(weight, mean, stddev)` in time units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub stddev: f64,
}

impl MixtureComponent {
    pub fn new(weight: f64, mean: f64, stddev: f64) -> Self {
        MixtureComponent {
            weight,
            mean,
            stddev,
        }
    }
}

/// Gaussian mixture evaluated at bin centers and renormalized to total mass 1.
pub fn gaussian_mixture(grid: TimeGrid, components: &[MixtureComponent]) -> Result<Measure> {
    gaussian_mixture_windowed(grid, components, None)
}

/// As [`gaussian_mixture`], with bins whose center falls outside `window` zeroed
/// before renormalization.
pub fn gaussian_mixture_windowed(
    grid: TimeGrid,
    components: &[MixtureComponent],
    window: Option<(f64, f64)>,
) -> Result<Measure> {
    if components.is_empty() {
        return Err(Error::BadMixture("no components".into()));
    }
    for c in components {
        if !(c.weight.is_finite() && c.weight >= 0.0) {
            return Err(Error::BadMixture(format!("weight {}", c.weight)));
        }
        if !(c.stddev.is_finite() && c.stddev > 0.0) {
            return Err(Error::BadMixture(format!("stddev {}", c.stddev)));
        }
        if !c.mean.is_finite() {
            return Err(Error::BadMixture(format!("mean {}", c.mean)));
        }
    }
    let wsum: f64 = components.iter().map(|c| c.weight).sum();
    if (wsum - 1.0).abs() > PROBABILITY_TOL {
        return Err(Error::BadMixture(format!("weights sum to {wsum}")));
    }

    let inside = |t: f64| window.is_none_or(|(lo, hi)| t >= lo && t <= hi);
    // log densities, normalized against their maximum so narrow components survive
    let logd: Vec<f64> = grid
        .centers()
        .into_iter()
        .map(|t| {
            if !inside(t) {
                return f64::NEG_INFINITY;
            }
            log_sum_exp(components.iter().filter(|c| c.weight > 0.0).map(|c| {
                let z = (t - c.mean) / c.stddev;
                c.weight.ln() - c.stddev.ln() - 0.5 * z * z
            }))
        })
        .collect();
    let peak = logd.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Err(Error::BadMixture("window excludes every bin".into()));
    }
    let raw: Vec<f64> = logd.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = raw.iter().sum();
    Measure::new(grid, raw.into_iter().map(|m| m / total).collect())
}

fn log_sum_exp(vals: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = vals.collect();
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn grid_rejects_degenerate() {
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(f64::NAN, 10).is_err());
    }

    #[test]
    fn centers_are_midpoints() {
        let g = TimeGrid::new(2.0, 4).unwrap();
        assert_eq!(g.centers(), vec![0.25, 0.75, 1.25, 1.75]);
        assert_eq!(g.bin_of(0.0), Some(0));
        assert_eq!(g.bin_of(2.0), Some(3));
        assert_eq!(g.bin_of(2.1), None);
        assert_eq!(g.bins_for(0.5), 1);
        assert_eq!(g.bins_for(0.3 * 2.0 / 4.0 * 10.0 / 3.0), 1);
        assert_eq!(g.bins_for(0.0), 0);
    }

    #[test]
    fn cdf_dirac_at_start() {
        let m = Measure::dirac(grid(5), 0).unwrap();
        assert_eq!(m.cdf(), vec![1.0; 5]);
    }

    #[test]
    fn cdf_uniform() {
        let m = Measure::uniform(grid(10));
        for (k, f) in m.cdf().iter().enumerate() {
            assert!((f - (k + 1) as f64 / 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cdf_two_bin_mixture() {
        let mut mass = vec![0.0; 8];
        mass[2] = 0.3;
        mass[5] = 0.7;
        let m = Measure::new(grid(8), mass).unwrap();
        let expect = [0.0, 0.0, 0.3, 0.3, 0.3, 1.0, 1.0, 1.0];
        for (f, e) in m.cdf().iter().zip(expect) {
            assert!((f - e).abs() < 1e-15);
        }
    }

    #[test]
    fn quantile_examples() {
        let g = grid(10);
        let u = Measure::uniform(g);
        assert_eq!(u.quantile(0.05).unwrap(), g.center(0));

        let d = Measure::dirac(g, 4).unwrap();
        for level in [1e-9, 0.3, 1.0] {
            assert_eq!(d.quantile(level).unwrap(), g.center(4));
        }

        let g8 = grid(8);
        let mut mass = vec![0.0; 8];
        mass[2] = 0.3;
        mass[5] = 0.7;
        let m = Measure::new(g8, mass).unwrap();
        // hand enumeration: F = 0,0,.3,.3,.3,1,1,1; first F >= .31 is bin 5
        assert_eq!(m.quantile(0.31).unwrap(), g8.center(5));
        assert_eq!(m.quantile(0.3).unwrap(), g8.center(2));
    }

    #[test]
    fn quantile_rejects_non_probability() {
        let m = Measure::new(grid(4), vec![0.1, 0.1, 0.1, 0.1]).unwrap();
        assert!(matches!(m.quantile(0.5), Err(Error::NonProbability { .. })));
    }

    #[test]
    fn mixture_flat_limit() {
        let g = grid(50);
        let m = gaussian_mixture(g, &[MixtureComponent::new(1.0, 0.5, 1e3)]).unwrap();
        assert!((m.total() - 1.0).abs() < 1e-12);
        for x in m.mass() {
            assert!((x - 0.02).abs() < 1e-6);
        }
    }

    #[test]
    fn mixture_dirac_limit() {
        let g = grid(50);
        let mean = 0.437;
        let m = gaussian_mixture(g, &[MixtureComponent::new(1.0, mean, 1e-9)]).unwrap();
        assert!((m.total() - 1.0).abs() < 1e-12);
        let k = g.bin_of(mean).unwrap();
        assert!((m.mass()[k] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixture_bimodal_matches_direct_evaluation() {
        let g = grid(100);
        let comps = [
            MixtureComponent::new(0.5, 0.2, 0.05),
            MixtureComponent::new(0.5, 0.8, 0.05),
        ];
        let m = gaussian_mixture(g, &comps).unwrap();

        // independent evaluation of the density formula at centers
        let pdf = |t: f64| {
            comps
                .iter()
                .map(|c| {
                    c.weight / (c.stddev * (2.0 * std::f64::consts::PI).sqrt())
                        * (-(t - c.mean).powi(2) / (2.0 * c.stddev * c.stddev)).exp()
                })
                .sum::<f64>()
        };
        let raw: Vec<f64> = g.centers().into_iter().map(pdf).collect();
        let z: f64 = raw.iter().sum();
        for (a, b) in m.mass().iter().zip(&raw) {
            assert!((a - b / z).abs() <= 1e-14);
        }

        let mass = m.mass();
        let argmax_in = |lo: usize, hi: usize| {
            (lo..hi)
                .max_by(|a, b| mass[*a].partial_cmp(&mass[*b]).unwrap())
                .unwrap()
        };
        assert!([19, 20].contains(&argmax_in(0, 50)));
        assert!([79, 80].contains(&argmax_in(50, 100)));
        assert!((mass[19] - mass[20]).abs() < 1e-15);
        for k in 0..100 {
            assert!((mass[k] - mass[99 - k]).abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_rejects_bad_components() {
        let g = grid(10);
        assert!(matches!(
            gaussian_mixture(g, &[MixtureComponent::new(-0.5, 0.5, 0.1), MixtureComponent::new(1.5, 0.5, 0.1)]),
            Err(Error::BadMixture(_))
        ));
        assert!(matches!(
            gaussian_mixture(g, &[MixtureComponent::new(1.0, 0.5, 0.0)]),
            Err(Error::BadMixture(_))
        ));
    }

    #[test]
    fn window_truncates() {
        let g = grid(20);
        let m = gaussian_mixture_windowed(g, &[MixtureComponent::new(1.0, 0.5, 0.3)], Some((0.0, 0.5)))
            .unwrap();
        assert!(m.mass()[10..].iter().all(|x| *x == 0.0));
        assert!((m.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_marginals() {
        let g = grid(3);
        let j = JointMeasure::new(g, vec![0.1, 0.2, 0.0, 0.0, 0.3, 0.1, 0.0, 0.0, 0.3]).unwrap();
        let a = j.first_marginal();
        let b = j.second_marginal();
        let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (p - q).abs() < 1e-15);
        assert!(close(a.mass(), &[0.3, 0.4, 0.3]));
        assert!(close(b.mass(), &[0.1, 0.5, 0.4]));
    }

    #[test]
    fn csv_round_trip() {
        let g = grid(4);
        let m = Measure::new(g, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let text = m.to_csv().unwrap();
        assert!(text.starts_with("bin_center,mass\n0.125,0.1\n"));
        assert_eq!(Measure::from_csv(g, &text).unwrap(), m);
    }

    fn measure_strategy() -> impl Strategy<Value = Measure> {
        (2usize..40)
            .prop_flat_map(|n| proptest::collection::vec(0.0f64..1.0, n))
            .prop_filter("nonzero", |v| v.iter().sum::<f64>() > 1e-6)
            .prop_map(|v| {
                Measure::new(grid(v.len()), v)
                    .unwrap()
                    .normalized()
                    .unwrap()
            })
    }

    proptest! {
        #[test]
        fn cdf_is_nondecreasing(m in measure_strategy()) {
            let f = m.cdf();
            for w in f.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            prop_assert!((f[f.len() - 1] - m.total()).abs() < 1e-12);
        }

        #[test]
        fn quantile_inverts_cdf(m in measure_strategy(), u in 1e-6f64..1.0) {
            let k = m.quantile_bin(u).unwrap();
            let f = m.cdf();
            prop_assert!(f[k] >= u - 1e-12);
            if k > 0 {
                prop_assert!(f[k - 1] < u);
            }
        }

        #[test]
        fn mixture_is_normalized(
            a in 0.05f64..0.95,
            m1 in -0.2f64..1.2,
            m2 in -0.2f64..1.2,
            s1 in 1e-3f64..2.0,
            s2 in 1e-3f64..2.0,
        ) {
            let comps = [MixtureComponent::new(a, m1, s1), MixtureComponent::new(1.0 - a, m2, s2)];
            let m = gaussian_mixture(grid(64), &comps).unwrap();
            prop_assert!((m.total() - 1.0).abs() <= 1e-12);
        }
    }
}
