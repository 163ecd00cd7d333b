//! Streaming moments, covariance grids with jackknife errors, comparison
//! reports and the two-sample Kolmogorov–Smirnov statistic.

use std::fmt;

use crate::asymptotics::CovarianceModel;
use crate::error::{invalid, Error, Result};
use crate::evolve::{sweep_blocks, Model, SimConfig, SweepStats};

/// Welford mean and centered second moment; merges with Chan's update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentAccumulator {
    count: u64,
    mean: f64,
    m2: f64,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut acc = Self::new();
        xs.iter().for_each(|&x| acc.push(x));
        acc
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let (na, nb) = (self.count as f64, other.count as f64);
        let d = other.mean - self.mean;
        self.mean += d * nb / n;
        self.m2 += other.m2 + d * d * na * nb / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Unbiased sample variance; zero below two observations.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    /// Standard error of the sample variance, from the fourth moment under
    /// a normal approximation: `var * sqrt(2 / (count - 1))`.
    pub fn variance_se_normal(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.variance() * (2.0 / (self.count - 1) as f64).sqrt()
        }
    }
}

/// Joint first and second moments of a fixed-length vector stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceAccumulator {
    count: u64,
    means: Vec<f64>,
    // full row-major co-moment matrix
    comoments: Vec<f64>,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            means: vec![0.0; dim],
            comoments: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, xs: &[f64]) {
        let d = self.dim();
        assert_eq!(xs.len(), d, "vector length does not match accumulator");
        if d == 0 {
            self.count += 1;
            return;
        }
        self.count += 1;
        let n = self.count as f64;
        let before: Vec<f64> = xs.iter().zip(&self.means).map(|(x, m)| x - m).collect();
        for (m, dx) in self.means.iter_mut().zip(&before) {
            *m += dx / n;
        }
        for i in 0..d {
            let after_i = xs[i] - self.means[i];
            for j in 0..d {
                self.comoments[i * d + j] += after_i * before[j];
            }
        }
    }

    pub fn merge(&mut self, other: &CovarianceAccumulator) {
        assert_eq!(self.dim(), other.dim());
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let d = self.dim();
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta: Vec<f64> = other.means.iter().zip(&self.means).map(|(b, a)| b - a).collect();
        for i in 0..d {
            for j in 0..d {
                self.comoments[i * d + j] += other.comoments[i * d + j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for (m, dm) in self.means.iter_mut().zip(&delta) {
            *m += dm * nb / n;
        }
        self.count += other.count;
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.means[i]
    }

    /// Unbiased sample covariance of coordinates `i` and `j`.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.comoments[i * self.dim() + j] / (self.count - 1) as f64
        }
    }
}

/// Where a reference value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceSource {
    Exact,
    Limit,
    Published,
}

impl fmt::Display for ReferenceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceSource::Exact => "exact",
            ReferenceSource::Limit => "limit",
            ReferenceSource::Published => "published",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub quantity: String,
    pub empirical: f64,
    pub se: f64,
    pub reference: f64,
    pub source: ReferenceSource,
    pub z: f64,
    /// Allowed absolute deviation.
    pub band: f64,
    pub pass: bool,
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {:.6} (se {:.2e}) vs {} {:.6}, |diff| {:.3e} {} band {:.3e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.quantity,
            self.empirical,
            self.se,
            self.source,
            self.reference,
            (self.empirical - self.reference).abs(),
            if self.pass { "<=" } else { ">" },
            self.band
        )
    }
}

/// `max(k * se, floor)`.
pub fn se_band(se: f64, k: f64, floor: f64) -> f64 {
    (k * se).max(floor)
}

/// Passes iff `|empirical - reference| <= band`.
pub fn compare(
    quantity: impl Into<String>,
    empirical: f64,
    se: f64,
    reference: f64,
    source: ReferenceSource,
    band: f64,
) -> ComparisonReport {
    let diff = empirical - reference;
    let z = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    ComparisonReport {
        quantity: quantity.into(),
        empirical,
        se,
        reference,
        source,
        z,
        band,
        pass: diff.abs() <= band,
    }
}

/// Default SE multiple and absolute floor for covariance grid checks.
pub const GRID_SE_MULTIPLE: f64 = 3.0;
pub const GRID_FLOOR: f64 = 0.01;

/// `n^{-1} Cov` of a process sampled on a time grid, with jackknife errors.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceGrid {
    pub grid: Vec<f64>,
    pub n: usize,
    pub reps: u64,
    /// Row-major, `grid.len()` squared.
    pub values: Vec<f64>,
    pub se: Vec<f64>,
}

impl CovarianceGrid {
    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim() + j]
    }

    pub fn se_at(&self, i: usize, j: usize) -> f64 {
        self.se[i * self.dim() + j]
    }

    /// Entrywise comparison against a closed-form covariance.
    pub fn compare_to(&self, model: &CovarianceModel, k: f64, floor: f64) -> Vec<ComparisonReport> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let (s, t) = (self.grid[i], self.grid[j]);
                out.push(compare(
                    format!("{}({s},{t})", model.name),
                    self.value(i, j),
                    self.se_at(i, j),
                    model.eval(s, t),
                    ReferenceSource::Limit,
                    se_band(self.se_at(i, j), k, floor),
                ));
            }
        }
        out
    }

    pub fn matches(&self, model: &CovarianceModel, k: f64, floor: f64) -> bool {
        self.compare_to(model, k, floor).iter().all(|r| r.pass)
    }
}

/// Largest `|a_ij - a_ji|` relative to the largest entry.
fn relative_asymmetry(values: &[f64], d: usize) -> f64 {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..i {
            worst = worst.max((values[i * d + j] - values[j * d + i]).abs());
        }
    }
    worst / scale
}

/// Tolerated relative asymmetry of an accumulated covariance matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;

fn scaled_cov(acc: &CovarianceAccumulator, n: usize) -> Vec<f64> {
    let d = acc.dim();
    (0..d * d).map(|k| acc.covariance(k / d, k % d) / n as f64).collect()
}

/// Builds the grid from per-block sweep statistics, using each block as a
/// jackknife group.
pub fn covariance_grid_from_blocks(blocks: &[SweepStats], grid: &[f64], n: usize) -> Result<CovarianceGrid> {
    let d = grid.len();
    let g = blocks.len();
    let mut full = CovarianceAccumulator::new(d);
    blocks.iter().for_each(|b| full.merge(&b.grid));
    let raw = scaled_cov(&full, n);
    let asym = relative_asymmetry(&raw, d);
    if asym > SYMMETRY_TOL {
        return Err(Error::AsymmetricGrid(asym));
    }
    let symmetrize = |v: &[f64]| -> Vec<f64> { (0..d * d).map(|k| 0.5 * (v[k] + v[(k % d) * d + k / d])).collect() };
    let values = symmetrize(&raw);

    let mut se = vec![0.0; d * d];
    if g >= 2 {
        // leave-one-group-out estimates from prefix and suffix merges
        let mut prefix = vec![CovarianceAccumulator::new(d)];
        for b in blocks {
            let mut next = prefix.last().unwrap().clone();
            next.merge(&b.grid);
            prefix.push(next);
        }
        let mut suffix = vec![CovarianceAccumulator::new(d); g + 1];
        for i in (0..g).rev() {
            let mut next = suffix[i + 1].clone();
            next.merge(&blocks[i].grid);
            suffix[i] = next;
        }
        let loo: Vec<Vec<f64>> = (0..g)
            .map(|i| {
                let mut acc = prefix[i].clone();
                acc.merge(&suffix[i + 1]);
                symmetrize(&scaled_cov(&acc, n))
            })
            .collect();
        let gf = g as f64;
        for k in 0..d * d {
            let mean = loo.iter().map(|v| v[k]).sum::<f64>() / gf;
            let ss: f64 = loo.iter().map(|v| (v[k] - mean).powi(2)).sum();
            se[k] = ((gf - 1.0) / gf * ss).sqrt();
        }
    }
    Ok(CovarianceGrid {
        grid: grid.to_vec(),
        n,
        reps: full.count(),
        values,
        se,
    })
}

/// Empirical `n^{-1} Cov(X(s), X(t))` across `reps` trajectories.
pub fn empirical_covariance_grid(
    model: &Model,
    n: usize,
    reps: u64,
    grid: &[f64],
    seed: u64,
    jobs: Option<usize>,
) -> Result<CovarianceGrid> {
    if grid.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(invalid("covariance grid points must lie in (0, 1)"));
    }
    let config = SimConfig::new(model.clone(), n, reps, seed)
        .with_grid(grid.to_vec())
        .with_jobs(jobs);
    let blocks = sweep_blocks(&config)?;
    covariance_grid_from_blocks(&blocks, grid, n)
}

/// Outcome of checking two empirical grids against their own references and
/// against each other's.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwapSensitivity {
    pub discrete_matches_own: bool,
    pub time_matches_own: bool,
    pub discrete_matches_swapped: bool,
    pub time_matches_swapped: bool,
}

impl SwapSensitivity {
    /// Both grids match their own reference and both swapped pairings fail.
    pub fn discriminates(&self) -> bool {
        self.discrete_matches_own
            && self.time_matches_own
            && !self.discrete_matches_swapped
            && !self.time_matches_swapped
    }
}

pub fn swap_sensitivity(
    discrete: &CovarianceGrid,
    discrete_model: &CovarianceModel,
    time: &CovarianceGrid,
    time_model: &CovarianceModel,
    k: f64,
    floor: f64,
) -> SwapSensitivity {
    SwapSensitivity {
        discrete_matches_own: discrete.matches(discrete_model, k, floor),
        time_matches_own: time.matches(time_model, k, floor),
        discrete_matches_swapped: discrete.matches(time_model, k, floor),
        time_matches_swapped: time.matches(discrete_model, k, floor),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub n1: usize,
    pub n2: usize,
}

impl KsResult {
    /// Asymptotic critical value at level `alpha`.
    pub fn critical_value(&self, alpha: f64) -> f64 {
        let (a, b) = (self.n1 as f64, self.n2 as f64);
        (-(alpha / 2.0).ln() / 2.0).sqrt() * ((a + b) / (a * b)).sqrt()
    }

    pub fn passes(&self, alpha: f64) -> bool {
        self.statistic < self.critical_value(alpha)
    }
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F1 - F2|`; ties are
/// handled by stepping over each distinct value at once.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("both samples must be nonempty"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(invalid("samples contain NaN"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult {
        statistic: d,
        n1: a.len(),
        n2: b.len(),
    })
}
