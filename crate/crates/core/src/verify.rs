//! The acceptance suite: nine criteria, each a set of comparisons run at
//! either a quick smoke scale or the full reference scale.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use num::{BigInt, BigRational, One, ToPrimitive, Zero};

use crate::asymptotics::{
    limit_covariance, refinement_check, sample_v, LimitModel, VSamplerConfig, E_V,
};
use crate::combinatorics::{
    binomial, brute_force_max_pmf, mean_runs_discrete, run_count_pmf, var_runs_discrete,
};
use crate::error::{invalid, Error, Result};
use crate::evolve::{collect_maxima, run_sweep, runs_path, Boundary, Model, SimConfig};
use crate::pattern::{
    alpha_decompose, compute_g0, derivative_identity_holds, run_length_constants, summarize,
    PatternFunctional,
};
use crate::rng::{mix64, CounterRng};
use crate::stats::{
    compare, ks_two_sample, swap_sensitivity, ComparisonReport, ReferenceSource,
    GRID_FLOOR, GRID_SE_MULTIPLE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Exact identities plus reduced Monte Carlo; large-n moment checks are
    /// skipped.
    Quick,
    /// Every criterion at its reference size.
    Full,
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Scale::Quick),
            "full" => Ok(Scale::Full),
            other => Err(invalid(format!("unknown scale `{other}` (quick | full)"))),
        }
    }
}

/// Replacement constants, to confirm that the suite notices wrong ones.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub runs_sigma2: Option<f64>,
    pub runs_beta: Option<f64>,
    pub e_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub scale: Scale,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub overrides: Overrides,
}

impl VerifyOptions {
    pub fn new(scale: Scale, seed: u64) -> Self {
        Self {
            scale,
            seed,
            jobs: None,
            overrides: Overrides::default(),
        }
    }

    fn full(&self) -> bool {
        self.scale == Scale::Full
    }

    fn seed_for(&self, criterion: u8, part: u64) -> u64 {
        mix64(mix64(self.seed ^ (criterion as u64) << 56) ^ part)
    }

    fn e_v(&self) -> f64 {
        self.overrides.e_v.unwrap_or(E_V)
    }
}

/// One comparison with the run that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub model: String,
    pub n: u64,
    pub reps: u64,
    pub seed: u64,
    pub report: ComparisonReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub checks: Vec<Check>,
    pub skipped: Vec<String>,
    pub elapsed: Duration,
}

impl CriterionResult {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.report.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.report.pass)
    }
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {}: {} {} ({} checks, {:.1}s)",
            self.id,
            if self.pass() { "PASS" } else { "FAIL" },
            self.title,
            self.checks.len(),
            self.elapsed.as_secs_f64()
        )?;
        if !self.skipped.is_empty() {
            write!(f, " [skipped at this scale: {}]", self.skipped.join("; "))?;
        }
        Ok(())
    }
}

pub const TITLES: [&str; 9] = [
    "exact run-count identities",
    "small-n maxima",
    "reference simulation values",
    "first- and second-order maximum at n = 10^6",
    "E V oracle",
    "covariance grids",
    "queues",
    "pattern constants",
    "dual-route identities",
];

struct Builder {
    id: u8,
    checks: Vec<Check>,
    skipped: Vec<String>,
    start: Instant,
}

impl Builder {
    fn new(id: u8) -> Self {
        Self {
            id,
            checks: Vec::new(),
            skipped: Vec::new(),
            start: Instant::now(),
        }
    }

    fn push(&mut self, model: &str, n: u64, reps: u64, seed: u64, report: ComparisonReport) {
        self.checks.push(Check {
            model: model.to_string(),
            n,
            reps,
            seed,
            report,
        });
    }

    /// A yes/no check, recorded as `1` against reference `1` with zero band.
    fn flag(&mut self, model: &str, n: u64, quantity: impl Into<String>, ok: bool) {
        let report = compare(quantity, ok as u8 as f64, 0.0, 1.0, ReferenceSource::Exact, 0.0);
        self.push(model, n, 0, 0, report);
    }

    fn within_seconds(&mut self, limit: f64) {
        let secs = self.start.elapsed().as_secs_f64();
        let report = compare("runtime_s", secs, 0.0, 0.0, ReferenceSource::Exact, limit);
        self.push("suite", 0, 0, 0, report);
    }

    fn skip(&mut self, what: &str) {
        self.skipped.push(what.to_string());
    }

    fn finish(self) -> CriterionResult {
        CriterionResult {
            id: self.id,
            title: TITLES[self.id as usize - 1],
            checks: self.checks,
            skipped: self.skipped,
            elapsed: self.start.elapsed(),
        }
    }
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn int(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn pow(x: &BigRational, e: u64) -> BigRational {
    (0..e).fold(BigRational::one(), |acc, _| acc * x)
}

/// Run count of the low `n` bits: number of 1's whose left neighbour is 0.
fn runs_in_bits(x: u64) -> u64 {
    (x & !(x << 1)).count_ones() as u64
}

fn criterion_1() -> Result<CriterionResult> {
    let mut b = Builder::new(1);
    let mut pmf_ok = true;
    let mut mean_ok = true;
    let mut var_ok = true;
    for n in 1..=8u64 {
        // histogram of run counts per number of ones over all 2^n strings
        let mut counts: BTreeMap<(u64, u64), u64> = BTreeMap::new();
        for x in 0u64..1 << n {
            *counts.entry((x.count_ones() as u64, runs_in_bits(x))).or_default() += 1;
        }
        for m in 0..=n {
            let pmf = run_count_pmf(n, m)?;
            let total = binomial(n, m);
            for k in 0..=n {
                let c = counts.get(&(m, k)).copied().unwrap_or(0);
                pmf_ok &= pmf.prob(k) == BigRational::new(BigInt::from(c), total.clone());
            }
            let moments = pmf.moments();
            mean_ok &= moments.mean == mean_runs_discrete(n, m)?;
            if n >= 2 {
                var_ok &= moments.variance == var_runs_discrete(n, m)?;
            }
        }
    }
    b.flag("runs", 8, "pmf_equals_enumeration_n<=8", pmf_ok);
    b.flag("runs", 8, "mean_closed_form_equals_pmf_mean", mean_ok);
    b.flag("runs", 8, "variance_closed_form_equals_pmf_variance", var_ok);

    // randomized time: binomial mixture of the discrete pmfs against the
    // closed forms, in exact arithmetic
    let mut time_mean_ok = true;
    let mut time_var_ok = true;
    let times = [rat(0, 1), rat(1, 3), rat(1, 2), rat(3, 4), rat(2, 7), rat(1, 1)];
    for n in 2..=8u64 {
        for t in &times {
            let u = BigRational::one() - t;
            let (mut first, mut second) = (BigRational::zero(), BigRational::zero());
            for m in 0..=n {
                let w = BigRational::from_integer(binomial(n, m)) * pow(t, m) * pow(&u, n - m);
                let mo = run_count_pmf(n, m)?.moments();
                second += &w * (&mo.variance + &mo.mean * &mo.mean);
                first += w * mo.mean;
            }
            let var = second - &first * &first;
            let nr = int(n);
            let mean_cf = &nr * t * &u + t * t;
            let var_cf = &nr * t * &u * (BigRational::one() - int(3) * t + int(3) * t * t)
                + t * t * &u * (int(3) - int(5) * t);
            time_mean_ok &= first == mean_cf;
            time_var_ok &= var == var_cf;
        }
    }
    b.flag("runs-time", 8, "time_mean_closed_form_equals_mixture", time_mean_ok);
    b.flag("runs-time", 8, "time_variance_closed_form_equals_mixture", time_var_ok);
    b.within_seconds(10.0);
    Ok(b.finish())
}

fn next_permutation(p: &mut [u32]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn mean_of(pmf: &BTreeMap<u32, BigRational>) -> BigRational {
    pmf.iter()
        .fold(BigRational::zero(), |acc, (&k, p)| acc + BigRational::from_integer(k.into()) * p)
}

fn criterion_2(opts: &VerifyOptions) -> Result<CriterionResult> {
    let mut b = Builder::new(2);
    let mut exact_means = BTreeMap::new();
    for n in 1..=9usize {
        let pmf = brute_force_max_pmf(n)?;
        // independent oracle: lexicographic permutations driven through the
        // incremental run counter
        let mut hist: BTreeMap<u32, u64> = BTreeMap::new();
        let mut perm: Vec<u32> = (0..n as u32).collect();
        let mut total = 0u64;
        loop {
            let max = *runs_path(&perm, Boundary::Linear).iter().max().unwrap();
            *hist.entry(max as u32).or_default() += 1;
            total += 1;
            if !next_permutation(&mut perm) {
                break;
            }
        }
        let oracle: BTreeMap<u32, BigRational> = hist
            .into_iter()
            .map(|(k, c)| (k, BigRational::new(c.into(), total.into())))
            .collect();
        b.flag("runs", n as u64, format!("max_pmf_equals_permutation_scan_n={n}"), pmf == oracle);
        exact_means.insert(n, mean_of(&pmf));
    }
    b.flag("runs", 3, "E_max_3_equals_4/3", exact_means[&3] == rat(4, 3));

    let reps = if opts.full() { 1_000_000 } else { 100_000 };
    for n in 3..=9usize {
        let seed = opts.seed_for(2, n as u64);
        let config = SimConfig::new(Model::Runs(Boundary::Linear), n, reps, seed).with_jobs(opts.jobs);
        let s = run_sweep(&config)?;
        let exact = exact_means[&n].to_f64().unwrap();
        let se = s.max.se();
        let report = compare(
            format!("mean_max_n={n}"),
            s.max.mean(),
            se,
            exact,
            ReferenceSource::Exact,
            4.0 * se,
        );
        b.push("runs", n as u64, reps, seed, report);
    }
    Ok(b.finish())
}

fn criterion_3(opts: &VerifyOptions) -> Result<CriterionResult> {
    let mut b = Builder::new(3);
    let reps = if opts.full() { 1_000_000 } else { 100_000 };
    for (n, reference, band) in [(13usize, 4.22, 0.03), (52, 14.66, 0.08)] {
        let seed = opts.seed_for(3, n as u64);
        let config = SimConfig::new(Model::Runs(Boundary::Linear), n, reps, seed).with_jobs(opts.jobs);
        let s = run_sweep(&config)?;
        let report = compare(
            format!("mean_max_n={n}"),
            s.max.mean(),
            s.max.se(),
            reference,
            ReferenceSource::Published,
            band,
        );
        b.push("runs", n as u64, reps, seed, report);
    }
    b.within_seconds(300.0);
    Ok(b.finish())
}

/// Mean within 15% of the `n^{1/3}` correction, variance within 5%.
fn max_moment_checks(
    b: &mut Builder,
    model_name: &str,
    limit: &LimitModel,
    overrides: (Option<f64>, Option<f64>),
    config: &SimConfig,
    e_v: f64,
) -> Result<()> {
    let s = run_sweep(config)?;
    let n = config.n as f64;
    let beta = overrides.1.unwrap_or(limit.beta());
    let sigma2 = overrides.0.unwrap_or(limit.sigma2());
    let correction = beta * e_v * n.cbrt();
    let mean_ref = limit.peak_rate() * n + correction;
    let mean = compare(
        "mean_max",
        s.max.mean(),
        s.max.se(),
        mean_ref,
        ReferenceSource::Limit,
        0.15 * correction,
    );
    b.push(model_name, config.n as u64, config.reps, config.base_seed, mean);
    let var_ref = sigma2 * n;
    let var = compare(
        "var_max",
        s.max.variance(),
        s.max.variance_se_normal(),
        var_ref,
        ReferenceSource::Limit,
        0.05 * var_ref,
    );
    b.push(model_name, config.n as u64, config.reps, config.base_seed, var);
    Ok(())
}

fn criterion_4(opts: &VerifyOptions) -> Result<CriterionResult> {
    let mut b = Builder::new(4);
    if opts.full() {
        let seed = opts.seed_for(4, 0);
        let config = SimConfig::new(Model::Runs(Boundary::Linear), 1_000_000, 10_000, seed).with_jobs(opts.jobs);
        let overrides = (opts.overrides.runs_sigma2, opts.overrides.runs_beta);
        max_moment_checks(&mut b, "runs", &LimitModel::Runs, overrides, &config, opts.e_v())?;
        b.within_seconds(1800.0);
    } else {
        b.skip("n = 10^6 moments");
    }
    Ok(b.finish())
}

fn criterion_5(opts: &VerifyOptions) -> Result<CriterionResult> {
    let mut b = Builder::new(5);
    let paths = if opts.full() { 100_000 } else { 10_000 };
    let seed = opts.seed_for(5, 0);
    let config = VSamplerConfig {
        jobs: opts.jobs,
        ..VSamplerConfig::new(1e-3, 4.0, paths, seed)
    };
    let est = sample_v(&config)?;
    let report = compare("E_V", est.mean, est.se, opts.e_v(), ReferenceSource::Published, 0.02);
    b.push("brownian-parabola", 0, paths, seed, report);
    let refine = refinement_check(&VSamplerConfig {
        seed: opts.seed_for(5, 1),
        ..config
    })?;
    let report = compare(
        "E_V_shift_h_to_h/2",
        refine.shift(),
        0.0,
        0.0,
        ReferenceSource::Exact,
        refine.coarse.half_width(),
    );
    b.push("brownian-parabola", 0, paths, opts.seed_for(5, 1), report);
    Ok(b.finish())
}

fn criterion_6(opts: &VerifyOptions) -> Result<CriterionResult> {
    let mut b = Builder::new(6);
    let (n, reps) = if opts.full() { (10_000, 10_000) } else { (2_000, 2_000) };
    let grid: Vec<f64> = (2..=8).map(|i| i as f64 / 10.0).collect();
    let discrete_model = limit_covariance("runs-discrete")?;
    let time_model = limit_covariance("runs-time")?;
    let seeds = (opts.seed_for(6, 0), opts.seed_for(6, 1));
    let discrete = crate::stats::empirical_covariance_grid(
        &Model::Runs(Boundary::Linear),
        n,
        reps,
        &grid,
        seeds.0,
        opts.jobs,
    )?;
    let time = crate::stats::empirical_covariance_grid(&Model::RunsTime, n, reps, &grid, seeds.1, opts.jobs)?;
    for r in discrete.compare_to(&discrete_model, GRID_SE_MULTIPLE, GRID_FLOOR) {
        b.push("runs-discrete", n as u64, reps, seeds.0, r);
    }
    for r in time.compare_to(&time_model, GRID_SE_MULTIPLE, GRID_FLOOR) {
        b.push("runs-time", n as u64, reps, seeds.1, r);
    }
    let sens = swap_sensitivity(&discrete, &discrete_model, &time, &time_model, GRID_SE_MULTIPLE, GRID_FLOOR);
    b.flag("runs", n as u64, "discrete_grid_rejects_time_reference", !sens.discrete_matches_swapped);
    b.flag("runs", n as u64, "time_grid_rejects_discrete_reference", !sens.time_matches_swapped);
    Ok(b.finish())
}

fn criterion_7(opts: &VerifyOptions) -> Result<CriterionResult> {
    let mut b = Builder::new(7);
    if opts.full() {
        let seed = opts.seed_for(7, 0);
        let config = SimConfig::new(Model::PriorityQueue, 10_000, 10_000, seed).with_jobs(opts.jobs);
        max_moment_checks(&mut b, "priority-queue", &LimitModel::PriorityQueue, (None, None), &config, opts.e_v())?;
    } else {
        b.skip("n = 10^4 queue moments");
    }
    let reps = if opts.full() { 100_000 } else { 10_000 };
    let (s1, s2) = (opts.seed_for(7, 1), opts.seed_for(7, 2));
    let pq = collect_maxima(&SimConfig::new(Model::PriorityQueue, 100, reps, s1).with_jobs(opts.jobs))?;
    let lh = collect_maxima(&SimConfig::new(Model::LazyHash, 100, reps, s2).with_jobs(opts.jobs))?;
    let ks = ks_two_sample(&pq, &lh)?;
    let crit = ks.critical_value(0.01);
    let report = compare("ks_pq_vs_lazy_hash", ks.statistic, 0.0, 0.0, ReferenceSource::Exact, crit);
    // strict inequality against the critical value
    let report = ComparisonReport {
        pass: ks.passes(0.01),
        ..report
    };
    b.push("priority-queue|lazy-hash", 100, reps, s1, report);
    Ok(b.finish())
}

fn criterion_8(opts: &VerifyOptions) -> Result<CriterionResult> {
    let mut b = Builder::new(8);
    let psi1 = PatternFunctional::run_length(1)?;
    let s = summarize(&psi1)?;
    let beta_cf = 2f64.powf(7.0 / 3.0) * 3f64.powf(-8.0 / 3.0) * 5f64.powf(2.0 / 3.0);
    for (name, got, want) in [
        ("sigma2_run_length_1", s.sigma2, 76.0 / 729.0),
        ("sigma2_route_b_run_length_1", s.sigma2_routes.route_b, 76.0 / 729.0),
        ("sigma_star2_run_length_1", s.sigma_star2, 80.0 / 81.0),
        ("sigma_star2_route_b_run_length_1", s.sigma_star2_routes.route_b, 80.0 / 81.0),
        ("beta_run_length_1", s.beta, beta_cf),
    ] {
        b.push("run-length-1", 0, 0, 0, compare(name, got, 0.0, want, ReferenceSource::Exact, 1e-12));
    }

    for d in 1..=6u32 {
        let cf = run_length_constants(d);
        let s = summarize(&PatternFunctional::run_length(d as usize)?)?;
        let model = format!("run-length-{d}");
        for (name, got, want) in [
            ("t0", s.t0, cf.t0),
            ("g0_t0", s.g0_at_t0, cf.g0_at_t0),
            ("g0pp_t0", s.g0_second_derivative, cf.g0_second_derivative),
            ("sigma2_route_a", s.sigma2_routes.route_a, cf.sigma2),
            ("sigma2_route_b", s.sigma2_routes.route_b, cf.sigma2),
            ("sigma_star2_route_a", s.sigma_star2_routes.route_a, cf.sigma_star2),
            ("sigma_star2_route_b", s.sigma_star2_routes.route_b, cf.sigma_star2),
            ("beta", s.beta, cf.beta),
        ] {
            b.push(&model, 0, 0, 0, compare(name, got, 0.0, want, ReferenceSource::Exact, 1e-10));
        }
    }

    // the runs model's constants, as used in the limit predictions, against
    // the pattern machinery applied to the runs functional
    let runs = summarize(&PatternFunctional::runs())?;
    let model = LimitModel::Runs;
    let sigma2 = opts.overrides.runs_sigma2.unwrap_or(model.sigma2());
    let beta = opts.overrides.runs_beta.unwrap_or(model.beta());
    for (name, used, derived) in [
        ("runs_peak_rate", model.peak_rate(), runs.g0_at_t0),
        ("runs_sigma2", sigma2, runs.sigma2),
        ("runs_beta", beta, runs.beta),
    ] {
        b.push("runs", 0, 0, 0, compare(name, used, 0.0, derived, ReferenceSource::Exact, 1e-12));
    }

    if opts.full() {
        let seed = opts.seed_for(8, 0);
        let n = 100_000usize;
        let reps = 10_000;
        let config = SimConfig::new(
            Model::Pattern {
                psi: psi1,
                boundary: Boundary::Cyclic,
            },
            n,
            reps,
            seed,
        )
        .with_jobs(opts.jobs);
        let st = run_sweep(&config)?;
        let nf = n as f64;
        let correction = s.beta * opts.e_v() * nf.cbrt();
        let report = compare(
            "mean_max",
            st.max.mean(),
            st.max.se(),
            4.0 * nf / 27.0 + correction,
            ReferenceSource::Limit,
            0.15 * correction,
        );
        b.push("run-length-1", n as u64, reps, seed, report);
    } else {
        b.skip("n = 10^5 pattern maximum");
    }
    Ok(b.finish())
}

/// Random pattern functional with window length 1..=4 and values uniform
/// on `[-1, 1)`.
pub fn random_pattern(rng: &mut CounterRng) -> PatternFunctional {
    let len = 1 + rng.below(4) as usize;
    let values = (0..1 << len).map(|_| 2.0 * rng.uniform() - 1.0).collect();
    PatternFunctional::new(len, values).expect("window length within cap")
}

fn criterion_9(opts: &VerifyOptions) -> Result<CriterionResult> {
    let mut b = Builder::new(9);
    let mut rng = CounterRng::derive(opts.seed_for(9, 0), &[]);
    let mut admissible = 0;
    let mut tried = 0;
    let mut worst_sigma2 = 0.0f64;
    let mut worst_sigma_star2 = 0.0f64;
    let mut derivative_ok = true;
    while admissible < 100 {
        tried += 1;
        if tried > 1_000_000 {
            return Err(invalid("could not draw 100 admissible pattern functionals"));
        }
        let psi = random_pattern(&mut rng);
        let Ok(s) = summarize(&psi) else {
            continue;
        };
        admissible += 1;
        let decomp = alpha_decompose(&psi);
        derivative_ok &= derivative_identity_holds(&decomp) && decomp.g0 == compute_g0(&psi);
        worst_sigma2 = worst_sigma2.max(s.sigma2_routes.discrepancy());
        worst_sigma_star2 = worst_sigma_star2.max(s.sigma_star2_routes.discrepancy());
    }
    let tag = format!("random-pattern({tried} drawn)");
    b.push(
        &tag,
        0,
        100,
        0,
        compare("max_sigma2_route_gap", worst_sigma2, 0.0, 0.0, ReferenceSource::Exact, 1e-10),
    );
    b.push(
        &tag,
        0,
        100,
        0,
        compare("max_sigma_star2_route_gap", worst_sigma_star2, 0.0, 0.0, ReferenceSource::Exact, 1e-10),
    );
    b.flag(&tag, 0, "g1_equals_g0_derivative_exactly", derivative_ok);
    Ok(b.finish())
}

pub fn run_criterion(id: u8, opts: &VerifyOptions) -> Result<CriterionResult> {
    match id {
        1 => criterion_1(),
        2 => criterion_2(opts),
        3 => criterion_3(opts),
        4 => criterion_4(opts),
        5 => criterion_5(opts),
        6 => criterion_6(opts),
        7 => criterion_7(opts),
        8 => criterion_8(opts),
        9 => criterion_9(opts),
        other => Err(invalid(format!("no criterion {other}"))),
    }
}

pub fn run_all(opts: &VerifyOptions) -> Result<Vec<CriterionResult>> {
    (1..=9).map(|id| run_criterion(id, opts)).collect()
}
