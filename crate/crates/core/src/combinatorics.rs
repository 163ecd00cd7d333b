//! Exact finite-`n` results for the run count of a random 0/1 string, plus
//! exhaustive enumeration oracles.
//!
//! `X(n, m)` is the number of runs of 1's in a uniformly random string with
//! `m` ones and `n - m` zeros. Its distribution, mean and variance have closed
//! forms; the maximum over an evolving insertion order does not, so that one is
//! only available by enumerating all `n!` orders.

use std::collections::BTreeMap;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::evolve::Boundary;
use crate::pattern::PatternFunctional;

/// Largest `n` for which [`brute_force_max_pmf`] enumerates all `n!` orders.
pub const MAX_PERMUTATION_N: usize = 10;
/// Largest `n` for which [`brute_force_pattern_moments`] enumerates all
/// `C(n, m)` strings.
pub const MAX_SUBSET_N: usize = 22;

/// Exact distribution of `X(n, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCountPmf {
    pub n: u64,
    pub m: u64,
    /// Only the support is stored; absent `k` have probability zero.
    pub probs: BTreeMap<u64, BigRational>,
}

impl RunCountPmf {
    pub fn prob(&self, k: u64) -> BigRational {
        self.probs.get(&k).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn total(&self) -> BigRational {
        self.probs.values().fold(BigRational::zero(), |acc, p| acc + p)
    }

    pub fn moments(&self) -> ExactMoments {
        moments_of(self.probs.iter().map(|(&k, p)| (BigRational::from_integer(k.into()), p)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactMoments {
    pub mean: BigRational,
    pub variance: BigRational,
}

fn moments_of<'a>(pairs: impl Iterator<Item = (BigRational, &'a BigRational)> + Clone) -> ExactMoments {
    let mean = pairs
        .clone()
        .fold(BigRational::zero(), |acc, (x, p)| acc + x * p);
    let variance = pairs.fold(BigRational::zero(), |acc, (x, p)| {
        let d = x - &mean;
        acc + &d * &d * p
    });
    ExactMoments { mean, variance }
}

pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    num::integer::binomial(BigInt::from(n), BigInt::from(k.min(n - k)))
}

fn ratio(num: BigInt, den: BigInt) -> BigRational {
    BigRational::new(num, den)
}

/// Exact pmf of the number of runs of 1's among `n` cells with `m` ones.
///
/// `P(X = k) = C(m-1, k-1) C(n-m+1, k) / C(n, m)` for `m >= 1`, and the point
/// mass at 0 when `m = 0`.
pub fn run_count_pmf(n: u64, m: u64) -> Result<RunCountPmf> {
    if n < 1 {
        return Err(invalid("n must be at least 1"));
    }
    if m > n {
        return Err(invalid(format!("m = {m} exceeds n = {n}")));
    }
    let mut probs = BTreeMap::new();
    if m == 0 {
        probs.insert(0, BigRational::one());
        return Ok(RunCountPmf { n, m, probs });
    }
    let total = binomial(n, m);
    for k in 1..=m.min(n - m + 1) {
        let count = binomial(m - 1, k - 1) * binomial(n - m + 1, k);
        if !count.is_zero() {
            probs.insert(k, ratio(count, total.clone()));
        }
    }
    Ok(RunCountPmf { n, m, probs })
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Floating-point `P(X(n, m) = k)` through log-gamma, for `n` where the exact
/// binomials get expensive.
pub fn run_count_prob_f64(n: u64, m: u64, k: u64) -> Result<f64> {
    if n < 1 || m > n {
        return Err(invalid(format!("need 1 <= n and m <= n, got n = {n}, m = {m}")));
    }
    if m == 0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if k == 0 || k > m || k > n - m + 1 {
        return Ok(0.0);
    }
    let ln = ln_binomial(m - 1, k - 1) + ln_binomial(n - m + 1, k) - ln_binomial(n, m);
    Ok(ln.exp())
}

/// `E X(n, m) = m (n - m + 1) / n`.
pub fn mean_runs_discrete(n: u64, m: u64) -> Result<BigRational> {
    if n < 1 {
        return Err(invalid("n must be at least 1"));
    }
    if m > n {
        return Err(invalid(format!("m = {m} exceeds n = {n}")));
    }
    let num = BigInt::from(m) * BigInt::from(n - m + 1);
    Ok(ratio(num, BigInt::from(n)))
}

/// `Var X(n, m) = m (m-1) (n-m) (n-m+1) / (n^2 (n-1))`.
pub fn var_runs_discrete(n: u64, m: u64) -> Result<BigRational> {
    if n < 2 {
        return Err(invalid("variance formula needs n >= 2"));
    }
    if m > n {
        return Err(invalid(format!("m = {m} exceeds n = {n}")));
    }
    let num = BigInt::from(m)
        * BigInt::from(m.saturating_sub(1))
        * BigInt::from(n - m)
        * BigInt::from(n - m + 1);
    let den = BigInt::from(n) * BigInt::from(n) * BigInt::from(n - 1);
    Ok(ratio(num, den))
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::TimeOutOfRange(t))
    }
}

/// Mean number of runs at time `t` when the `n` insertion times are iid
/// uniform: `n t (1-t) + t^2`.
pub fn mean_runs_time(n: u64, t: f64) -> Result<f64> {
    check_time(t)?;
    let n = n as f64;
    Ok(n * t * (1.0 - t) + t * t)
}

/// Variance of the run count at time `t` under iid uniform insertion times.
/// The closed form holds for `n >= 2`.
pub fn var_runs_time(n: u64, t: f64) -> Result<f64> {
    check_time(t)?;
    if n < 2 {
        return Err(invalid("variance formula needs n >= 2"));
    }
    let n = n as f64;
    let u = 1.0 - t;
    Ok(n * t * u * (1.0 - 3.0 * t + 3.0 * t * t) + t * t * u * (3.0 - 5.0 * t))
}

/// Exact distribution of the maximum run count over all `n!` insertion orders.
pub fn brute_force_max_pmf(n: usize) -> Result<BTreeMap<u32, BigRational>> {
    if n < 1 {
        return Err(invalid("n must be at least 1"));
    }
    if n > MAX_PERMUTATION_N {
        return Err(Error::EnumerationCap {
            what: "insertion orders",
            size: n as u64,
            cap: MAX_PERMUTATION_N as u64,
        });
    }
    let mut hist = vec![0u64; n + 1];
    max_dfs(n, 0, 0, 0, &mut hist);
    let total: BigInt = (1..=n as u64).map(BigInt::from).product();
    Ok(hist
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .map(|(h, c)| (h as u32, ratio(BigInt::from(c), total.clone())))
        .collect())
}

// Depth-first walk over every insertion order, sharing common prefixes.
fn max_dfs(n: usize, occupied: u32, runs: i32, best: i32, hist: &mut [u64]) {
    if occupied.count_ones() as usize == n {
        hist[best as usize] += 1;
        return;
    }
    for k in 0..n {
        let bit = 1u32 << k;
        if occupied & bit != 0 {
            continue;
        }
        let left = k > 0 && occupied & (bit >> 1) != 0;
        let right = k + 1 < n && occupied & (bit << 1) != 0;
        let next = runs + 1 - left as i32 - right as i32;
        max_dfs(n, occupied | bit, next, best.max(next), hist);
    }
}

/// Exact mean and variance of `sum_k psi(window at k)` over all strings with
/// `m` ones among `n` cells, each equally likely.
pub fn brute_force_pattern_moments(
    psi: &PatternFunctional,
    n: usize,
    m: usize,
    boundary: Boundary,
) -> Result<ExactMoments> {
    let len = psi.window_len();
    if m > n {
        return Err(invalid(format!("m = {m} exceeds n = {n}")));
    }
    if n > MAX_SUBSET_N {
        return Err(Error::EnumerationCap {
            what: "indicator strings",
            size: n as u64,
            cap: MAX_SUBSET_N as u64,
        });
    }
    if n < len {
        return Err(invalid(format!("n = {n} is shorter than the window {len}")));
    }

    let exact: Vec<BigRational> = psi
        .values()
        .iter()
        .map(|&v| BigRational::from_f64(v).expect("pattern values are finite"))
        .collect();
    let denom = exact
        .iter()
        .fold(BigInt::one(), |acc, q| num::integer::lcm(acc, q.denom().clone()));
    let scaled: Vec<BigInt> = exact
        .iter()
        .map(|q| (q * BigRational::from_integer(denom.clone())).to_integer())
        .collect();

    let positions = match boundary {
        Boundary::Cyclic => n,
        Boundary::Linear => n + 1 - len,
    };
    let window_mask = (1u64 << len) - 1;
    let window = |set: u64, k: usize| -> usize {
        let ext = set | (set << n);
        ((ext >> k) & window_mask) as usize
    };

    let limit = BigInt::from(1i64 << 40);
    let small: Option<Vec<i64>> = scaled
        .iter()
        .map(|v| if v.abs() < limit { v.to_i64() } else { None })
        .collect();

    let mut count = 0u64;
    let (s1, s2) = if let Some(small) = small {
        let (mut s1, mut s2) = (0i128, 0i128);
        for set in subsets(n, m) {
            let v: i128 = (0..positions).map(|k| small[window(set, k)] as i128).sum();
            s1 += v;
            s2 += v * v;
            count += 1;
        }
        (BigInt::from(s1), BigInt::from(s2))
    } else {
        let (mut s1, mut s2) = (BigInt::zero(), BigInt::zero());
        for set in subsets(n, m) {
            let mut v = BigInt::zero();
            for k in 0..positions {
                v += &scaled[window(set, k)];
            }
            s2 += &v * &v;
            s1 += v;
            count += 1;
        }
        (s1, s2)
    };

    let count = BigInt::from(count);
    let mean_scaled = ratio(s1, count.clone());
    let second_scaled = ratio(s2, count);
    let d = BigRational::from_integer(denom);
    let mean = &mean_scaled / &d;
    let variance = (second_scaled - &mean_scaled * &mean_scaled) / (&d * &d);
    Ok(ExactMoments { mean, variance })
}

/// All `m`-subsets of `0..n` as bitmasks, in increasing numeric order.
pub(crate) fn subsets(n: usize, m: usize) -> impl Iterator<Item = u64> {
    let end = 1u64 << n;
    let first = if m == 0 { 0 } else { (1u64 << m) - 1 };
    let mut next = Some(first);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 {
            None
        } else {
            // Gosper's hack
            let c = cur & cur.wrapping_neg();
            let r = cur + c;
            let succ = (((r ^ cur) >> 2) / c) | r;
            (succ < end).then_some(succ)
        };
        Some(cur)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    // Independent oracle: scan the string.
    fn runs_of(set: u64, n: usize) -> u64 {
        let mut runs = 0;
        let mut prev = false;
        for k in 0..n {
            let cur = set >> k & 1 == 1;
            if cur && !prev {
                runs += 1;
            }
            prev = cur;
        }
        runs
    }

    fn zero_runs_of(set: u64, n: usize) -> u64 {
        runs_of(!set & ((1u64 << n) - 1), n)
    }

    #[test]
    fn pmf_n4_m2() {
        let pmf = run_count_pmf(4, 2).unwrap();
        assert_eq!(binomial(1, 1) * binomial(3, 2), BigInt::from(3));
        assert_eq!(pmf.prob(1), q(1, 2));
        assert_eq!(pmf.prob(2), q(1, 2));
        assert_eq!(pmf.total(), BigRational::one());
    }

    #[test]
    fn pmf_degenerate_cases() {
        let empty = run_count_pmf(5, 0).unwrap();
        assert_eq!(empty.probs.len(), 1);
        assert_eq!(empty.prob(0), BigRational::one());
        let full = run_count_pmf(5, 5).unwrap();
        assert_eq!(full.probs.len(), 1);
        assert_eq!(full.prob(1), BigRational::one());
    }

    #[test]
    fn pmf_rejects_bad_ranges() {
        assert!(run_count_pmf(4, 5).is_err());
        assert!(run_count_pmf(0, 0).is_err());
        assert!(mean_runs_discrete(3, 4).is_err());
        assert!(var_runs_discrete(1, 1).is_err());
    }

    #[test]
    fn pmf_matches_enumeration_up_to_eight() {
        for n in 1..=8usize {
            for m in 0..=n {
                let mut hist: BTreeMap<u64, u64> = BTreeMap::new();
                let mut total = 0u64;
                for set in 0u64..1 << n {
                    if set.count_ones() as usize == m {
                        *hist.entry(runs_of(set, n)).or_default() += 1;
                        total += 1;
                    }
                }
                let expected: BTreeMap<u64, BigRational> = hist
                    .into_iter()
                    .map(|(k, c)| (k, q(c as i64, total as i64)))
                    .collect();
                let pmf = run_count_pmf(n as u64, m as u64).unwrap();
                assert_eq!(pmf.probs, expected, "n={n} m={m}");
            }
        }
    }

    #[test]
    fn closed_form_moments_match_pmf() {
        for n in 2..=30u64 {
            for m in 0..=n {
                let mom = run_count_pmf(n, m).unwrap().moments();
                assert_eq!(mom.mean, mean_runs_discrete(n, m).unwrap(), "n={n} m={m}");
                assert_eq!(mom.variance, var_runs_discrete(n, m).unwrap(), "n={n} m={m}");
            }
        }
    }

    #[test]
    fn discrete_moment_examples() {
        assert_eq!(mean_runs_discrete(4, 2).unwrap(), q(3, 2));
        assert_eq!(var_runs_discrete(4, 2).unwrap(), q(1, 4));
        for n in 2..10 {
            assert!(mean_runs_discrete(n, 0).unwrap().is_zero());
            assert_eq!(mean_runs_discrete(n, n).unwrap(), BigRational::one());
            assert!(var_runs_discrete(n, 0).unwrap().is_zero());
            assert!(var_runs_discrete(n, n).unwrap().is_zero());
        }
    }

    #[test]
    fn time_moment_examples() {
        assert_eq!(mean_runs_time(4, 0.5).unwrap(), 1.25);
        assert_eq!(mean_runs_time(9, 0.0).unwrap(), 0.0);
        assert_eq!(var_runs_time(9, 0.0).unwrap(), 0.0);
        for n in [2u64, 7, 100] {
            let v = var_runs_time(n, 0.5).unwrap();
            assert!((v - (n as f64 / 16.0 + 1.0 / 16.0)).abs() < 1e-12);
        }
        assert_eq!(mean_runs_time(3, 1.5), Err(Error::TimeOutOfRange(1.5)));
        assert!(var_runs_time(3, -0.1).is_err());
    }

    #[test]
    fn time_mean_is_binomial_mixture_of_discrete_means() {
        for n in 1..=12u64 {
            for i in 0..=20 {
                let t = i as f64 / 20.0;
                let mixture: f64 = (0..=n)
                    .map(|m| {
                        let w = binomial(n, m).to_f64().unwrap()
                            * t.powi(m as i32)
                            * (1.0 - t).powi((n - m) as i32);
                        w * mean_runs_discrete(n, m).unwrap().to_f64().unwrap()
                    })
                    .sum();
                assert!((mixture - mean_runs_time(n, t).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn time_variance_matches_independent_enumeration() {
        // iid Bernoulli(t) cells, enumerate all 2^n strings
        assert!(var_runs_time(1, 0.5).is_err());
        for n in 2..=10usize {
            for t in [0.1f64, 0.3, 0.5, 0.77] {
                let (mut s1, mut s2) = (0.0, 0.0);
                for set in 0u64..1 << n {
                    let ones = set.count_ones() as i32;
                    let p = t.powi(ones) * (1.0 - t).powi(n as i32 - ones);
                    let r = runs_of(set, n) as f64;
                    s1 += p * r;
                    s2 += p * r * r;
                }
                let var = s2 - s1 * s1;
                assert!((s1 - mean_runs_time(n as u64, t).unwrap()).abs() < 1e-12);
                assert!((var - var_runs_time(n as u64, t).unwrap()).abs() < 1e-12, "n={n} t={t}");
            }
        }
    }

    #[test]
    fn float_pmf_agrees_with_exact() {
        for (n, m) in [(10u64, 4u64), (30, 15), (57, 20)] {
            let pmf = run_count_pmf(n, m).unwrap();
            for k in 0..=m + 1 {
                let exact = pmf.prob(k).to_f64().unwrap();
                let approx = run_count_prob_f64(n, m, k).unwrap();
                assert!((exact - approx).abs() <= 1e-10 * exact.max(1e-300) + 1e-15);
            }
        }
        let big: f64 = (0..=5001).map(|k| run_count_prob_f64(10_000, 5_000, k).unwrap()).sum();
        assert!((big - 1.0).abs() < 1e-9);
    }

    #[test]
    fn max_pmf_small_cases() {
        let one = brute_force_max_pmf(1).unwrap();
        assert_eq!(one, BTreeMap::from([(1, BigRational::one())]));
        let two = brute_force_max_pmf(2).unwrap();
        assert_eq!(two, BTreeMap::from([(1, BigRational::one())]));
        let three = brute_force_max_pmf(3).unwrap();
        assert_eq!(three, BTreeMap::from([(1, q(2, 3)), (2, q(1, 3))]));
        let mean = three
            .iter()
            .fold(BigRational::zero(), |acc, (&h, p)| acc + BigRational::from_integer(h.into()) * p);
        assert_eq!(mean, q(4, 3));
    }

    #[test]
    fn max_pmf_support_and_total() {
        for n in 1..=9usize {
            let pmf = brute_force_max_pmf(n).unwrap();
            let total = pmf.values().fold(BigRational::zero(), |acc, p| acc + p);
            assert_eq!(total, BigRational::one());
            let hi = n.div_ceil(2) as u32;
            assert!(pmf.keys().all(|&h| (1..=hi).contains(&h)), "n={n}: {pmf:?}");
            assert!(pmf.contains_key(&hi));
        }
    }

    #[test]
    fn max_pmf_matches_naive_permutation_scan() {
        // Heap's algorithm, full rescan per prefix
        let n = 6;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut hist = [0u64; 7];
        let mut visit = |perm: &[usize]| {
            let mut best = 0;
            let mut set = 0u64;
            for &k in perm {
                set |= 1 << k;
                best = best.max(runs_of(set, n));
            }
            hist[best as usize] += 1;
        };
        let mut c = vec![0usize; n];
        visit(&perm);
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                visit(&perm);
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        let pmf = brute_force_max_pmf(n).unwrap();
        for (h, &count) in hist.iter().enumerate() {
            let p = pmf.get(&(h as u32)).cloned().unwrap_or_else(BigRational::zero);
            assert_eq!(p, q(count as i64, 720));
        }
    }

    #[test]
    fn max_pmf_cap() {
        assert!(matches!(
            brute_force_max_pmf(MAX_PERMUTATION_N + 1),
            Err(Error::EnumerationCap { .. })
        ));
    }

    #[test]
    fn subsets_enumerates_binomial_many() {
        for n in 0..=10usize {
            for m in 0..=n {
                let all: Vec<u64> = subsets(n, m).collect();
                assert_eq!(all.len() as u64, binomial(n as u64, m as u64).to_u64().unwrap());
                assert!(all.iter().all(|s| s.count_ones() as usize == m && *s < 1 << n));
                assert!(all.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn pattern_moments_runs_window() {
        let runs = PatternFunctional::runs();
        let cyc = brute_force_pattern_moments(&runs, 4, 2, Boundary::Cyclic).unwrap();
        // cyclic: 1100,0110,0011,1001 -> 1 run, 1010,0101 -> 2 runs
        assert_eq!(cyc.mean, q(4, 3));
        let lin = mean_runs_discrete(4, 2).unwrap();
        assert!((&cyc.mean - &lin).abs() <= BigRational::one());
        for n in 2..=12usize {
            for m in 0..=n {
                let m_c = brute_force_pattern_moments(&runs, n, m, Boundary::Cyclic).unwrap();
                let d = &m_c.mean - mean_runs_discrete(n as u64, m as u64).unwrap();
                assert!(d.abs() <= BigRational::one());
            }
        }
    }

    #[test]
    fn pattern_moments_constant_functionals() {
        let zero = PatternFunctional::constant(3, 0.0).unwrap();
        let z = brute_force_pattern_moments(&zero, 9, 4, Boundary::Cyclic).unwrap();
        assert!(z.mean.is_zero() && z.variance.is_zero());
        let one = PatternFunctional::constant(3, 1.0).unwrap();
        let o = brute_force_pattern_moments(&one, 9, 4, Boundary::Cyclic).unwrap();
        assert_eq!(o.mean, q(9, 1));
        assert!(o.variance.is_zero());
    }

    #[test]
    fn pattern_moments_big_and_small_paths_agree() {
        // value with a huge dyadic exponent forces the BigInt path
        let mut values = vec![0.0; 4];
        values[1] = 0.75;
        values[2] = -1.25;
        let small = PatternFunctional::new(2, values.clone()).unwrap();
        values.iter_mut().for_each(|v| *v *= 2f64.powi(60));
        let big = PatternFunctional::new(2, values).unwrap();
        let a = brute_force_pattern_moments(&small, 10, 4, Boundary::Linear).unwrap();
        let b = brute_force_pattern_moments(&big, 10, 4, Boundary::Linear).unwrap();
        let s = BigRational::from_integer(BigInt::from(2).pow(60u32));
        assert_eq!(&a.mean * &s, b.mean);
        assert_eq!(&a.variance * &s * &s, b.variance);
    }

    #[test]
    fn pattern_moments_cap() {
        let runs = PatternFunctional::runs();
        assert!(brute_force_pattern_moments(&runs, MAX_SUBSET_N + 1, 3, Boundary::Cyclic).is_err());
        assert!(brute_force_pattern_moments(&runs, 4, 5, Boundary::Cyclic).is_err());
    }

    #[test]
    fn time_reversal_by_complement() {
        // The occupied set after n-m steps of the reversed order is the
        // complement of the set after m forward steps, so runs of 1's at m
        // are runs of 0's at n-m; runs of 0's differ from runs of 1's by
        // the boundary terms 1 - i(1) - i(n).
        for n in 1..=8usize {
            let full = (1u64 << n) - 1;
            for m in 0..=n {
                let mut ones_hist: BTreeMap<u64, u64> = BTreeMap::new();
                let mut zeros_hist: BTreeMap<u64, u64> = BTreeMap::new();
                for set in subsets(n, m) {
                    *ones_hist.entry(runs_of(set, n)).or_default() += 1;
                    assert_eq!(runs_of(set, n), zero_runs_of(!set & full, n));
                    let first = set & 1;
                    let last = set >> (n - 1) & 1;
                    let shifted = runs_of(set, n) as i64 + 1 - first as i64 - last as i64;
                    assert_eq!(zero_runs_of(set, n) as i64, shifted);
                }
                for set in subsets(n, n - m) {
                    *zeros_hist.entry(zero_runs_of(set, n)).or_default() += 1;
                }
                assert_eq!(ones_hist, zeros_hist, "n={n} m={m}");
            }
        }
    }
}
