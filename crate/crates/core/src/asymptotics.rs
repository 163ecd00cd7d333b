//! Limit predictions for the maxima, the Monte Carlo sampler for
//! `V = max_t (B(t) - t^2/2)`, and the closed-form limit covariances.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::pattern::{summarize, AsymptoticSummary, PatternFunctional};
use crate::rng::CounterRng;
use crate::stats::MomentAccumulator;

/// `E V` for two-sided Brownian motion with drift `-t^2/2`.
pub const E_V: f64 = 0.996193;

/// Upper bound on `-ln U` for `U = uniform_open0()`, which is at least 2^-53.
const MAX_EXP_DRAW: f64 = 37.0;

#[derive(Debug, Clone, PartialEq)]
pub struct VSamplerConfig {
    pub step: f64,
    /// Each side covers `[0, horizon]`.
    pub horizon: f64,
    pub paths: u64,
    pub seed: u64,
    /// Add the exact Brownian-bridge maximum between grid points. Without
    /// it the estimator is the grid maximum, biased low by about `0.58 sqrt(h)`
    /// per side near the peak.
    pub bridge: bool,
    pub jobs: Option<usize>,
}

impl VSamplerConfig {
    pub fn new(step: f64, horizon: f64, paths: u64, seed: u64) -> Self {
        Self {
            step,
            horizon,
            paths,
            seed,
            bridge: true,
            jobs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step <= 0.01) {
            return Err(invalid(format!("step must lie in (0, 0.01], got {}", self.step)));
        }
        if !(self.horizon >= 3.0) || !self.horizon.is_finite() {
            return Err(invalid(format!("horizon must be at least 3, got {}", self.horizon)));
        }
        if self.paths == 0 {
            return Err(invalid("paths must be at least 1"));
        }
        Ok(())
    }

    fn steps(&self) -> u64 {
        (self.horizon / self.step - 1e-9).ceil() as u64
    }
}

/// Running maximum of `B(t) - t^2/2` over one side at one resolution.
struct SideMax {
    h: f64,
    bridge: bool,
    uniforms: CounterRng,
    prev: f64,
    best: f64,
}

impl SideMax {
    fn new(h: f64, bridge: bool, uniforms: CounterRng) -> Self {
        Self {
            h,
            bridge,
            uniforms,
            prev: 0.0,
            best: 0.0,
        }
    }

    /// Observes the value at the end of grid step `k` (1-based).
    #[inline]
    fn step(&mut self, k: u64, value: f64) {
        if self.bridge {
            let (a, b) = (self.prev, value);
            let sum = a + b;
            let gap2 = (b - a) * (b - a);
            // the bridge maximum cannot beat `best`: skip the draw
            if 0.5 * (sum + (gap2 + 2.0 * self.h * MAX_EXP_DRAW).sqrt()) > self.best {
                self.uniforms.seek(k);
                let e = -self.uniforms.uniform_open0().ln();
                let m = 0.5 * (sum + (gap2 + 2.0 * self.h * e).sqrt());
                self.best = self.best.max(m);
            }
        }
        self.best = self.best.max(value);
        self.prev = value;
    }
}

/// Maxima of one side at step `h` and, from the same increments, at `h/2`.
fn side_pair(config: &VSamplerConfig, path: u64, side: u64, with_fine: bool) -> (f64, f64) {
    let h = config.step;
    let mut inc = CounterRng::derive(config.seed, &[path, side, 0]);
    let mut coarse = SideMax::new(h, config.bridge, CounterRng::derive(config.seed, &[path, side, 1]));
    let mut fine = SideMax::new(h / 2.0, config.bridge, CounterRng::derive(config.seed, &[path, side, 2]));
    let steps = config.steps();
    let mut b = 0.0;
    if with_fine {
        let sd = (h / 2.0).sqrt();
        for k in 1..=steps {
            for half in 0..2u64 {
                let z: f64 = inc.sample(StandardNormal);
                b += sd * z;
                let t = (2 * k - 1 + half) as f64 * h / 2.0;
                fine.step(2 * k - 1 + half, b - 0.5 * t * t);
            }
            let t = k as f64 * h;
            coarse.step(k, b - 0.5 * t * t);
        }
    } else {
        let sd = h.sqrt();
        for k in 1..=steps {
            let z: f64 = inc.sample(StandardNormal);
            b += sd * z;
            let t = k as f64 * h;
            coarse.step(k, b - 0.5 * t * t);
        }
    }
    (coarse.best, fine.best)
}

/// One draw of `V` (path index `path`).
pub fn sample_v_path(config: &VSamplerConfig, path: u64) -> f64 {
    side_pair(config, path, 0, false).0.max(side_pair(config, path, 1, false).0)
}

/// Draws of `V` at steps `h` and `h/2` driven by common Brownian increments.
pub fn sample_v_path_pair(config: &VSamplerConfig, path: u64) -> (f64, f64) {
    let (c0, f0) = side_pair(config, path, 0, true);
    let (c1, f1) = side_pair(config, path, 1, true);
    (c0.max(c1), f0.max(f1))
}

fn in_pool<T: Send>(jobs: Option<usize>, work: impl FnOnce() -> T + Send) -> T {
    match jobs.map(|j| rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build()) {
        Some(Ok(pool)) => pool.install(work),
        _ => work(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VEstimate {
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub paths: u64,
}

impl VEstimate {
    fn from_acc(acc: &MomentAccumulator) -> Self {
        Self {
            mean: acc.mean(),
            sd: acc.sd(),
            se: acc.se(),
            paths: acc.count(),
        }
    }

    /// Half-width of the normal-approximation 95% confidence interval.
    pub fn half_width(&self) -> f64 {
        1.96 * self.se
    }

    pub fn ci(&self) -> (f64, f64) {
        (self.mean - self.half_width(), self.mean + self.half_width())
    }
}

/// Every draw, in path order.
pub fn sample_v_values(config: &VSamplerConfig) -> Result<Vec<f64>> {
    config.validate()?;
    Ok(in_pool(config.jobs, || {
        (0..config.paths).into_par_iter().map(|p| sample_v_path(config, p)).collect()
    }))
}

pub fn sample_v(config: &VSamplerConfig) -> Result<VEstimate> {
    let values = sample_v_values(config)?;
    Ok(VEstimate::from_acc(&MomentAccumulator::from_slice(&values)))
}

/// Estimates at `h` and `h/2` on common noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementCheck {
    pub coarse: VEstimate,
    pub fine: VEstimate,
}

impl RefinementCheck {
    pub fn shift(&self) -> f64 {
        self.fine.mean - self.coarse.mean
    }

    /// Halving the step moves the estimate by less than the CI half-width.
    pub fn passes(&self) -> bool {
        self.shift().abs() < self.coarse.half_width()
    }
}

pub fn refinement_check(config: &VSamplerConfig) -> Result<RefinementCheck> {
    config.validate()?;
    let pairs: Vec<(f64, f64)> = in_pool(config.jobs, || {
        (0..config.paths).into_par_iter().map(|p| sample_v_path_pair(config, p)).collect()
    });
    let mut coarse = MomentAccumulator::new();
    let mut fine = MomentAccumulator::new();
    for (c, f) in pairs {
        coarse.push(c);
        fine.push(f);
    }
    Ok(RefinementCheck {
        coarse: VEstimate::from_acc(&coarse),
        fine: VEstimate::from_acc(&fine),
    })
}

/// A model whose maximum has a first-order Gaussian limit around `g0(t0) n`
/// and an `n^{1/3}` correction `beta E V`.
#[derive(Debug, Clone, PartialEq)]
pub enum LimitModel {
    Runs,
    PriorityQueue,
    Pattern(Box<AsymptoticSummary>),
}

impl LimitModel {
    /// `runs`, `pq` / `priority-queue`, or `run-length-<d>`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "runs" => Ok(LimitModel::Runs),
            "pq" | "priority-queue" => Ok(LimitModel::PriorityQueue),
            other => match other.strip_prefix("run-length-").map(str::parse::<usize>) {
                Some(Ok(d)) => Self::pattern(&PatternFunctional::run_length(d)?),
                _ => Err(Error::UnknownModel(other.to_string())),
            },
        }
    }

    pub fn pattern(psi: &PatternFunctional) -> Result<Self> {
        Ok(LimitModel::Pattern(Box::new(summarize(psi)?)))
    }

    /// `g0(t0)`: the first-order growth rate of the maximum.
    pub fn peak_rate(&self) -> f64 {
        match self {
            LimitModel::Runs => 0.25,
            LimitModel::PriorityQueue => 0.5,
            LimitModel::Pattern(s) => s.g0_at_t0,
        }
    }

    /// Limit variance of `n^{-1/2} (max - g0(t0) n)`.
    pub fn sigma2(&self) -> f64 {
        match self {
            LimitModel::Runs => 1.0 / 16.0,
            LimitModel::PriorityQueue => 0.25,
            LimitModel::Pattern(s) => s.sigma2,
        }
    }

    pub fn beta(&self) -> f64 {
        match self {
            LimitModel::Runs => 0.5,
            LimitModel::PriorityQueue => 1.0,
            LimitModel::Pattern(s) => s.beta,
        }
    }

    /// `(sigma*, c)` such that the rescaled process near `t0` converges to
    /// `sigma* B(x) - c x^2`.
    pub fn local_drift(&self) -> (f64, f64) {
        match self {
            LimitModel::Runs => (0.5f64.sqrt(), 1.0),
            LimitModel::PriorityQueue => (2.0f64.sqrt(), 2.0),
            LimitModel::Pattern(s) => (s.sigma_star2.sqrt(), 0.5 * s.g0_second_derivative.abs()),
        }
    }

    pub fn predict_max_mean(&self, n: u64) -> Result<f64> {
        check_n(n)?;
        let n = n as f64;
        Ok(self.peak_rate() * n + self.beta() * E_V * n.cbrt())
    }

    pub fn predict_max_var(&self, n: u64) -> Result<f64> {
        check_n(n)?;
        Ok(self.sigma2() * n as f64)
    }
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        Err(invalid("n must be at least 1"))
    } else {
        Ok(())
    }
}

/// `beta` from the local limit `sigma* B(x) - c x^2`: the maximum of that
/// process is `(sigma*^4 / (2c))^{1/3}` times `V`.
pub fn beta_from_drift(sigma_star: f64, c: f64) -> f64 {
    (sigma_star.powi(4) / (2.0 * c)).cbrt()
}

pub fn local_drift_model(name: &str) -> Result<(f64, f64)> {
    Ok(LimitModel::from_name(name)?.local_drift())
}

pub fn predict_max_mean(name: &str, n: u64) -> Result<f64> {
    LimitModel::from_name(name)?.predict_max_mean(n)
}

pub fn predict_max_var(name: &str, n: u64) -> Result<f64> {
    LimitModel::from_name(name)?.predict_max_var(n)
}

/// A closed-form limit covariance `sigma(s, t)`, given for `s <= t` and
/// extended symmetrically.
#[derive(Debug, Clone, Copy)]
pub struct CovarianceModel {
    pub name: &'static str,
    pub formula: &'static str,
    upper: fn(f64, f64) -> f64,
}

impl CovarianceModel {
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        (self.upper)(s.min(t), s.max(t))
    }

    pub fn matrix(&self, grid: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(grid.len(), grid.len(), |i, j| self.eval(grid[i], grid[j]))
    }

    /// Smallest eigenvalue of the covariance matrix on `grid`.
    pub fn min_eigenvalue(&self, grid: &[f64]) -> f64 {
        SymmetricEigen::new(self.matrix(grid))
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

impl PartialEq for CovarianceModel {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

const COVARIANCES: &[CovarianceModel] = &[
    CovarianceModel {
        name: "bridge",
        formula: "s(1-t)",
        upper: |s, t| s * (1.0 - t),
    },
    CovarianceModel {
        name: "runs-discrete",
        formula: "s^2(1-t)^2",
        upper: |s, t| (s * (1.0 - t)).powi(2),
    },
    CovarianceModel {
        name: "runs-time",
        formula: "s(1-t)(1-s-2t+3st)",
        upper: |s, t| s * (1.0 - t) * (1.0 - s - 2.0 * t + 3.0 * s * t),
    },
    CovarianceModel {
        name: "cubic",
        formula: "s^3(1-t)^3",
        upper: |s, t| (s * (1.0 - t)).powi(3),
    },
    CovarianceModel {
        name: "pq-discrete",
        formula: "4s^2(1-t)^2",
        upper: |s, t| 4.0 * (s * (1.0 - t)).powi(2),
    },
    CovarianceModel {
        name: "pq-time",
        formula: "2s(1-t)-4s(1-s)t(1-t)",
        upper: |s, t| 2.0 * s * (1.0 - t) - 4.0 * s * (1.0 - s) * t * (1.0 - t),
    },
];

pub fn covariance_names() -> impl Iterator<Item = &'static str> {
    COVARIANCES.iter().map(|c| c.name)
}

pub fn limit_covariance(name: &str) -> Result<CovarianceModel> {
    COVARIANCES
        .iter()
        .find(|c| c.name == name)
        .copied()
        .ok_or_else(|| Error::UnknownModel(name.to_string()))
}

/// Tolerance for the positive semidefiniteness check.
pub const PSD_TOL: f64 = -1e-9;

#[cfg(test)]
mod tests {
    use super::*;

    fn grid9() -> Vec<f64> {
        (1..=9).map(|i| i as f64 / 10.0).collect()
    }

    #[test]
    fn covariance_values() {
        let d = limit_covariance("runs-discrete").unwrap();
        assert!((d.eval(0.5, 0.5) - 1.0 / 16.0).abs() < 1e-15);
        let t = limit_covariance("runs-time").unwrap();
        assert!((t.eval(0.5, 0.5) - 1.0 / 16.0).abs() < 1e-15);
        assert!((t.eval(0.3, 0.7) - 0.3 * 0.3 * (1.0 - 0.3 - 1.4 + 0.63)).abs() < 1e-15);
        assert!(limit_covariance("z9").is_err());
        for name in covariance_names() {
            let c = limit_covariance(name).unwrap();
            for &x in &grid9() {
                assert_eq!(c.eval(0.0, x), 0.0, "{name}");
                assert!(c.eval(x, 1.0).abs() < 1e-15, "{name}");
                for &y in &grid9() {
                    assert_eq!(c.eval(x, y), c.eval(y, x));
                }
            }
        }
    }

    #[test]
    fn covariances_are_psd() {
        for name in covariance_names() {
            let c = limit_covariance(name).unwrap();
            assert!(c.min_eigenvalue(&grid9()) >= PSD_TOL, "{name}");
        }
    }

    #[test]
    fn pattern_covariance_matches_runs_time() {
        let decomp = crate::pattern::alpha_decompose(&PatternFunctional::runs());
        let c = limit_covariance("runs-time").unwrap();
        for &s in &grid9() {
            for &t in &grid9() {
                assert!((decomp.covariance(s, t) - c.eval(s, t)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn predictions() {
        let m13 = predict_max_mean("runs", 13).unwrap();
        assert!((m13 - (13.0 / 4.0 + 0.5 * E_V * 13f64.cbrt())).abs() < 1e-12);
        assert!((m13 - 4.42).abs() < 0.01);
        let q = predict_max_mean("pq", 10_000).unwrap();
        assert!((q - 5021.46).abs() < 0.1, "{q}");
        assert_eq!(predict_max_var("runs", 16).unwrap(), 1.0);
        assert!(predict_max_mean("runs", 0).is_err());
        assert!(matches!(predict_max_mean("heap", 5), Err(Error::UnknownModel(_))));
        let big = predict_max_mean("runs", 1 << 40).unwrap() / (1u64 << 40) as f64;
        assert!((big - 0.25).abs() < 1e-4);
    }

    #[test]
    fn drift_models() {
        let (s, c) = local_drift_model("runs").unwrap();
        assert_eq!((s, c), (0.5f64.sqrt(), 1.0));
        let (s, c) = local_drift_model("run-length-1").unwrap();
        assert!((s - (80.0f64 / 81.0).sqrt()).abs() < 1e-12);
        assert!((c - 1.0).abs() < 1e-12);
        assert_eq!(local_drift_model("priority-queue").unwrap(), (2.0f64.sqrt(), 2.0));
        assert!(local_drift_model("run-length-x").is_err());
    }

    #[test]
    fn beta_consistency() {
        let mut models = vec![LimitModel::Runs, LimitModel::PriorityQueue];
        for d in 1..=6 {
            models.push(LimitModel::from_name(&format!("run-length-{d}")).unwrap());
        }
        for m in &models {
            let (s, c) = m.local_drift();
            assert!((beta_from_drift(s, c) - m.beta()).abs() < 1e-12, "{m:?}");
        }
    }

    #[test]
    fn v_sampler_validation() {
        assert!(sample_v(&VSamplerConfig::new(0.02, 4.0, 10, 1)).is_err());
        assert!(sample_v(&VSamplerConfig::new(0.01, 2.0, 10, 1)).is_err());
        assert!(sample_v(&VSamplerConfig::new(0.01, 4.0, 0, 1)).is_err());
    }

    #[test]
    fn v_samples_nonnegative_and_monotone_in_horizon() {
        let short = VSamplerConfig::new(0.01, 3.0, 300, 5);
        let long = VSamplerConfig { horizon: 5.0, ..short.clone() };
        for p in 0..300 {
            let a = sample_v_path(&short, p);
            let b = sample_v_path(&long, p);
            assert!(a >= 0.0);
            assert!(b >= a, "path {p}: {b} < {a}");
        }
    }

    #[test]
    fn bridge_dominates_grid_max() {
        let bridged = VSamplerConfig::new(0.01, 3.0, 200, 9);
        let grid = VSamplerConfig { bridge: false, ..bridged.clone() };
        for p in 0..200 {
            assert!(sample_v_path(&bridged, p) >= sample_v_path(&grid, p));
        }
    }

    #[test]
    fn fine_pair_shares_noise() {
        // the coarse member of a pair uses h-increments built from two
        // h/2-increments; its grid maximum never exceeds the fine one
        let config = VSamplerConfig { bridge: false, ..VSamplerConfig::new(0.01, 3.0, 100, 2) };
        for p in 0..100 {
            let (c, f) = sample_v_path_pair(&config, p);
            assert!(f >= c);
        }
    }

    #[test]
    fn v_mean_rough() {
        let est = sample_v(&VSamplerConfig::new(0.005, 4.0, 20_000, 11)).unwrap();
        assert!((est.mean - E_V).abs() < 4.0 * est.se + 0.01, "{est:?}");
        let jobs = VSamplerConfig { jobs: Some(2), ..VSamplerConfig::new(0.01, 3.0, 500, 3) };
        let all = VSamplerConfig { jobs: None, ..jobs.clone() };
        assert_eq!(sample_v(&jobs).unwrap(), sample_v(&all).unwrap());
    }
}
