//! Pattern functionals `psi: {0,1}^l -> R` summed over all windows of an
//! evolving 0/1 string, and the constants that govern the maximum of the
//! resulting process.
//!
//! Every constant is computed twice. Route A goes through the expansion of
//! the windowed sum into centred product processes with polynomial
//! coefficients `g_alpha(t)`; route B works directly with window arithmetic
//! under iid Bernoulli cells (lag covariances for `sigma^2`, the variance of
//! the single-site jump for `sigma_*^2`).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num::rational::BigRational;
use num::traits::{FromPrimitive, One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::poly::{Poly, RealRoot};

/// Largest supported window length.
pub const MAX_WINDOW: usize = 16;
/// Required gap between the maximum of `g0` and any other critical or
/// boundary value.
pub const T0_MARGIN: f64 = 1e-9;

/// A real function of a binary window of length `l`.
///
/// The table is indexed with the first cell of the window as bit 0, so
/// `values[i]` is `psi(i_1, ..., i_l)` with `i_j = (i >> (j-1)) & 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternFunctional {
    len: usize,
    values: Vec<f64>,
}

impl PatternFunctional {
    pub fn new(len: usize, values: Vec<f64>) -> Result<Self> {
        if len == 0 || len > MAX_WINDOW {
            return Err(Error::WindowLength { len, cap: MAX_WINDOW });
        }
        if values.len() != 1 << len {
            return Err(Error::InvalidParams(format!(
                "window length {len} needs {} values, got {}",
                1usize << len,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite pattern value {bad}")));
        }
        Ok(Self { len, values })
    }

    pub fn constant(len: usize, c: f64) -> Result<Self> {
        Self::new(len, vec![c; 1usize.checked_shl(len as u32).unwrap_or(0)])
    }

    /// Counts runs of 1's: `psi(i1, i2) = (1 - i1) i2`.
    pub fn runs() -> Self {
        let mut values = vec![0.0; 4];
        values[0b10] = 1.0;
        Self { len: 2, values }
    }

    /// Counts runs of exactly `d` ones: the indicator of the window `0 1^d 0`.
    pub fn run_length(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParams("run length must be at least 1".into()));
        }
        let len = d + 2;
        if len > MAX_WINDOW {
            return Err(Error::WindowLength { len, cap: MAX_WINDOW });
        }
        let mut values = vec![0.0; 1 << len];
        values[((1usize << d) - 1) << 1] = 1.0;
        Ok(Self { len, values })
    }

    pub fn window_len(&self) -> usize {
        self.len
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, window: usize) -> f64 {
        self.values[window]
    }

    /// `psi` evaluated on an explicit window, first cell first.
    pub fn eval_bits(&self, bits: &[bool]) -> f64 {
        assert_eq!(bits.len(), self.len);
        let idx = bits
            .iter()
            .enumerate()
            .fold(0usize, |acc, (j, &b)| acc | (b as usize) << j);
        self.values[idx]
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            len: self.len,
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }

    fn exact_values(&self) -> Vec<BigRational> {
        self.values
            .iter()
            .map(|&v| BigRational::from_f64(v).expect("finite"))
            .collect()
    }

    fn window_fn(&self, start: i64) -> CellFn {
        CellFn {
            start,
            len: self.len,
            table: self.values.clone(),
        }
    }
}

fn window_string(idx: usize, len: usize) -> String {
    (0..len)
        .map(|j| if idx >> j & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Text form: the window length on the first line, then one
/// `bitstring value` line per window in lexicographic order of the bitstring.
impl fmt::Display for PatternFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.len)?;
        for lex in 0..1usize << self.len {
            let idx = lex_to_index(lex, self.len);
            writeln!(f, "{} {}", window_string(idx, self.len), self.values[idx])?;
        }
        Ok(())
    }
}

// The k-th line in lexicographic order has the first cell as its most
// significant character.
fn lex_to_index(lex: usize, len: usize) -> usize {
    (0..len).fold(0, |acc, j| acc | ((lex >> (len - 1 - j)) & 1) << j)
}

impl FromStr for PatternFunctional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let parse_err = |line: usize, msg: String| Error::PatternParse { line, msg };
        let (first, head) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty pattern file".into()))?;
        let len: usize = head
            .parse()
            .map_err(|_| parse_err(first, format!("expected window length, got `{head}`")))?;
        if len == 0 || len > MAX_WINDOW {
            return Err(Error::WindowLength { len, cap: MAX_WINDOW });
        }
        let mut values = vec![0.0; 1 << len];
        for lex in 0..1usize << len {
            let idx = lex_to_index(lex, len);
            let want = window_string(idx, len);
            let (lineno, line) = lines
                .next()
                .ok_or_else(|| parse_err(first, format!("missing entry for window {want}")))?;
            let mut parts = line.split_whitespace();
            let bits = parts.next().unwrap_or_default();
            if bits != want {
                return Err(parse_err(lineno, format!("expected window {want}, got `{bits}`")));
            }
            let raw = parts
                .next()
                .ok_or_else(|| parse_err(lineno, "missing value".into()))?;
            values[idx] = raw
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad value `{raw}`")))?;
            if parts.next().is_some() {
                return Err(parse_err(lineno, "trailing fields".into()));
            }
        }
        if let Some((lineno, _)) = lines.next() {
            return Err(parse_err(lineno, "more entries than 2^l".into()));
        }
        PatternFunctional::new(len, values)
    }
}

/// A 0/1 string that begins and ends with 1, indexing one centred product
/// process. Bit 0 is the first character.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AlphaPattern {
    len: u8,
    bits: u32,
}

impl AlphaPattern {
    /// Trims a nonempty support set (bit `j` = position `j`) to an alpha.
    pub fn from_support(support: u32) -> Self {
        assert!(support != 0, "empty support has no alpha pattern");
        let bits = support >> support.trailing_zeros();
        Self {
            len: (32 - bits.leading_zeros()) as u8,
            bits,
        }
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of 1's.
    pub fn nu(&self) -> u32 {
        self.bits.count_ones()
    }
}

impl FromStr for AlphaPattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParams(format!("`{s}` is not a 0/1 string starting and ending with 1"));
        if s.is_empty() || s.len() > 32 || !s.starts_with('1') || !s.ends_with('1') {
            return Err(bad());
        }
        let mut bits = 0u32;
        for (j, c) in s.chars().enumerate() {
            match c {
                '1' => bits |= 1 << j,
                '0' => {}
                _ => return Err(bad()),
            }
        }
        Ok(Self::from_support(bits))
    }
}

impl fmt::Display for AlphaPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.len {
            write!(f, "{}", self.bits >> j & 1)?;
        }
        Ok(())
    }
}

/// `sum_k Psi_k(t) = g0(t) n + sum_alpha g_alpha(t) S_alpha(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaDecomposition {
    pub g0: Poly,
    /// Only nonzero coefficients are kept.
    pub terms: BTreeMap<AlphaPattern, Poly>,
}

impl AlphaDecomposition {
    pub fn g(&self, alpha: &AlphaPattern) -> Poly {
        self.terms.get(alpha).cloned().unwrap_or_default()
    }

    pub fn g1(&self) -> Poly {
        self.g(&AlphaPattern::from_support(1))
    }

    /// Limit covariance `sum_alpha g(s) g(t) (s ^ t)^nu (1 - s v t)^nu`.
    pub fn covariance(&self, s: f64, t: f64) -> f64 {
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        let base = lo * (1.0 - hi);
        self.terms
            .iter()
            .map(|(a, g)| g.eval_f64(s) * g.eval_f64(t) * base.powi(a.nu() as i32))
            .sum()
    }

    /// Squared local diffusion coefficient `sum_alpha g(t)^2 nu (t(1-t))^(nu-1)`.
    pub fn local_diffusion(&self, t: f64) -> f64 {
        let base = t * (1.0 - t);
        self.terms
            .iter()
            .map(|(a, g)| {
                let v = g.eval_f64(t);
                v * v * a.nu() as f64 * base.powi(a.nu() as i32 - 1)
            })
            .sum()
    }
}

/// `g0(t) = E psi(window)` for iid Bernoulli(t) cells, as an exact polynomial.
pub fn compute_g0(psi: &PatternFunctional) -> Poly {
    let len = psi.window_len();
    let t = Poly::t();
    let u = Poly::one_minus_t();
    let mut t_pows = vec![Poly::one()];
    let mut u_pows = vec![Poly::one()];
    for k in 1..=len {
        t_pows.push(&t_pows[k - 1] * &t);
        u_pows.push(&u_pows[k - 1] * &u);
    }
    let mut by_weight: Vec<BigRational> = vec![BigRational::zero(); len + 1];
    for (w, v) in psi.exact_values().into_iter().enumerate() {
        by_weight[w.count_ones() as usize] += v;
    }
    by_weight
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .fold(Poly::zero(), |acc, (k, c)| {
            &acc + &(&t_pows[k] * &u_pows[len - k]).scale(c)
        })
}

/// Expands `psi` in the centred variables `I - t`.
///
/// Coordinatewise, `[i = 1] = t + x` and `[i = 0] = (1 - t) - x`; the tensor
/// transform below collects, for every support set `S` of centred variables,
/// its polynomial coefficient, and then sums those over shifts of `S`.
pub fn alpha_decompose(psi: &PatternFunctional) -> AlphaDecomposition {
    let len = psi.window_len();
    let t = Poly::t();
    let u = Poly::one_minus_t();
    let mut table: Vec<Poly> = psi.exact_values().into_iter().map(Poly::constant).collect();
    for j in 0..len {
        let bit = 1usize << j;
        for idx in 0..table.len() {
            if idx & bit != 0 {
                continue;
            }
            let off = std::mem::take(&mut table[idx]);
            let on = std::mem::take(&mut table[idx | bit]);
            table[idx] = &(&u * &off) + &(&t * &on);
            table[idx | bit] = &on - &off;
        }
    }
    let mut terms: BTreeMap<AlphaPattern, Poly> = BTreeMap::new();
    let mut entries = table.into_iter();
    let g0 = entries.next().unwrap_or_default();
    for (support, h) in entries.enumerate().map(|(i, h)| (i + 1, h)) {
        if h.is_zero() {
            continue;
        }
        let alpha = AlphaPattern::from_support(support as u32);
        let slot = terms.entry(alpha).or_default();
        *slot = &*slot + &h;
    }
    terms.retain(|_, g| !g.is_zero());
    AlphaDecomposition { g0, terms }
}

/// Location of the interior maximum of `g0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Maximizer {
    pub t0: f64,
    /// Set when `t0` is rational and was hit exactly.
    pub exact: Option<BigRational>,
    pub value: f64,
    pub second_derivative: f64,
}

/// Finds the unique interior maximizer of `g0` on `[0, 1]`.
pub fn locate_maximum(g0: &Poly) -> Result<Maximizer> {
    if g0.is_constant() {
        return Err(Error::NoAdmissibleT0("g0 is constant".into()));
    }
    let dg = g0.derivative();
    let d2g = dg.derivative();
    let critical = dg.roots_in_unit_interval();
    if critical.is_empty() {
        return Err(Error::NoAdmissibleT0(
            "g0 has no interior critical point; its maximum is on the boundary".into(),
        ));
    }
    let value_at = |r: &RealRoot| match r.exact() {
        Some(x) => g0.eval(x).to_f64().unwrap(),
        None => g0.eval_f64(r.approx()),
    };
    let values: Vec<f64> = critical.iter().map(value_at).collect();
    let (best, &best_value) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let boundary = [
        g0.eval(&BigRational::zero()).to_f64().unwrap(),
        g0.eval(&BigRational::one()).to_f64().unwrap(),
    ];
    if boundary.iter().any(|&b| b >= best_value - T0_MARGIN) {
        return Err(Error::NoAdmissibleT0(format!(
            "maximum of g0 is attained at the boundary (interior best {best_value}, ends {boundary:?})"
        )));
    }
    if values
        .iter()
        .enumerate()
        .any(|(i, &v)| i != best && v >= best_value - T0_MARGIN)
    {
        return Err(Error::NoAdmissibleT0("g0 has multiple global maxima".into()));
    }
    let root = &critical[best];
    let second_derivative = match root.exact() {
        Some(x) => d2g.eval(x).to_f64().unwrap(),
        None => d2g.eval_f64(root.approx()),
    };
    Ok(Maximizer {
        t0: root.approx(),
        exact: root.exact().cloned(),
        value: best_value,
        second_derivative,
    })
}

pub fn find_t0(psi: &PatternFunctional) -> Result<f64> {
    locate_maximum(&compute_g0(psi)).map(|m| m.t0)
}

/// A quantity computed by two independent routes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualRoute {
    /// Through the alpha decomposition.
    pub route_a: f64,
    /// Through direct window arithmetic.
    pub route_b: f64,
}

impl DualRoute {
    pub fn discrepancy(&self) -> f64 {
        (self.route_a - self.route_b).abs()
    }

    pub fn agrees(&self, tol: f64) -> bool {
        self.discrepancy() <= tol
    }
}

/// `sigma^2 = sigma(t0, t0)`, the limiting variance of the maximum over `n`.
pub fn sigma2(psi: &PatternFunctional) -> Result<DualRoute> {
    let t0 = find_t0(psi)?;
    let decomp = alpha_decompose(psi);
    Ok(DualRoute {
        route_a: decomp.covariance(t0, t0),
        route_b: lag_covariance(psi, t0, t0),
    })
}

/// Squared diffusion coefficient of the local Brownian fluctuation of the
/// process around `t0`.
pub fn sigma_star2(psi: &PatternFunctional) -> Result<DualRoute> {
    let t0 = find_t0(psi)?;
    let decomp = alpha_decompose(psi);
    Ok(DualRoute {
        route_a: decomp.local_diffusion(t0),
        route_b: jump_variance(psi, t0),
    })
}

/// `beta = (sigma_*^4 / |g0''(t0)|)^(1/3)`, the scale of the `n^(1/3)`
/// correction to the mean maximum.
pub fn beta(psi: &PatternFunctional) -> Result<f64> {
    Ok(summarize(psi)?.beta)
}

pub(crate) fn beta_from(sigma_star2: f64, curvature: f64) -> Result<f64> {
    if !(curvature < 0.0) || curvature.abs() < 1e-12 {
        return Err(Error::DegenerateCurvature(curvature));
    }
    Ok((sigma_star2 * sigma_star2 / curvature.abs()).cbrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticSummary {
    pub g0: Poly,
    pub t0: f64,
    pub g0_at_t0: f64,
    pub g0_second_derivative: f64,
    pub sigma2: f64,
    pub sigma_star2: f64,
    pub beta: f64,
    pub sigma2_routes: DualRoute,
    pub sigma_star2_routes: DualRoute,
}

pub fn summarize(psi: &PatternFunctional) -> Result<AsymptoticSummary> {
    let g0 = compute_g0(psi);
    let max = locate_maximum(&g0)?;
    let decomp = alpha_decompose(psi);
    let t0 = max.t0;
    let sigma2_routes = DualRoute {
        route_a: decomp.covariance(t0, t0),
        route_b: lag_covariance(psi, t0, t0),
    };
    let sigma_star2_routes = DualRoute {
        route_a: decomp.local_diffusion(t0),
        route_b: jump_variance(psi, t0),
    };
    let beta = beta_from(sigma_star2_routes.route_a, max.second_derivative)?;
    Ok(AsymptoticSummary {
        g0,
        t0,
        g0_at_t0: max.value,
        g0_second_derivative: max.second_derivative,
        sigma2: sigma2_routes.route_a,
        sigma_star2: sigma_star2_routes.route_a,
        beta,
        sigma2_routes,
        sigma_star2_routes,
    })
}

/// Closed forms for runs of exactly `d` ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunLengthConstants {
    pub t0: f64,
    pub g0_at_t0: f64,
    pub g0_second_derivative: f64,
    pub sigma2: f64,
    pub sigma_star2: f64,
    pub beta: f64,
}

pub fn run_length_constants(d: u32) -> RunLengthConstants {
    let df = d as f64;
    let t0 = df / (df + 2.0);
    let a = df.powi(d as i32) / (df + 2.0).powi(d as i32 + 2);
    let b = df.powi(d as i32) / (df + 2.0).powi(d as i32 + 1);
    let sigma2 = 4.0 * a * (1.0 - (df + 1.0) * 4.0 * a);
    let sigma_star2 = 8.0 * b * (1.0 + b);
    let c = df.powi(d as i32 + 1) / (df + 2.0).powi(d as i32 + 3);
    let beta = (32.0 * c * (1.0 + b) * (1.0 + b)).cbrt();
    RunLengthConstants {
        t0,
        g0_at_t0: t0.powi(d as i32) * (1.0 - t0).powi(2),
        g0_second_derivative: -2.0 * df.powi(d as i32 - 1) / (df + 2.0).powi(d as i32 - 1),
        sigma2,
        sigma_star2,
        beta,
    }
}

/// `sum_{|j| < l} Cov(Psi_0(s), Psi_j(t))` with the cells coupled in time:
/// a cell occupied at `s` is occupied at every later time.
pub fn lag_covariance(psi: &PatternFunctional, s: f64, t: f64) -> f64 {
    let len = psi.window_len() as i64;
    let base = psi.window_fn(0);
    let mean_s = base.expect(s);
    let mean_t = base.expect(t);
    (-(len - 1)..len)
        .map(|j| {
            let shifted = psi.window_fn(j);
            coupled_expectation(&base, s, &shifted, t) - mean_s * mean_t
        })
        .sum()
}

/// `Var` of the jump in the windowed sum when a single empty cell fills,
/// under iid Bernoulli(t) neighbours.
pub fn jump_variance(psi: &PatternFunctional, t: f64) -> f64 {
    let len = psi.window_len();
    // The window starting `p` cells before the flipped cell sees it at bit p.
    let pieces: Vec<CellFn> = (0..len)
        .map(|p| {
            let bit = 1usize << p;
            let table = (0..1usize << len)
                .map(|w| psi.value(w | bit) - psi.value(w & !bit))
                .collect();
            CellFn {
                start: -(p as i64),
                len,
                table,
            }
        })
        .collect();
    let mean: f64 = pieces.iter().map(|f| f.expect(t)).sum();
    let second: f64 = pieces
        .iter()
        .flat_map(|f| pieces.iter().map(move |g| coupled_expectation(f, t, g, t)))
        .sum();
    second - mean * mean
}

/// A real function of the cells `start .. start + len`; bit `j` of the
/// table index is cell `start + j`.
#[derive(Debug, Clone, PartialEq)]
struct CellFn {
    start: i64,
    len: usize,
    table: Vec<f64>,
}

impl CellFn {
    fn end(&self) -> i64 {
        self.start + self.len as i64
    }

    /// Averages out every cell outside `lo..hi` under Bernoulli(p).
    fn restrict(&self, lo: i64, hi: i64, p: f64) -> CellFn {
        let mut table = self.table.clone();
        let mut start = self.start;
        let mut len = self.len;
        while start < lo && len > 0 {
            table = (0..table.len() / 2)
                .map(|i| (1.0 - p) * table[2 * i] + p * table[2 * i + 1])
                .collect();
            start += 1;
            len -= 1;
        }
        while start + len as i64 > hi && len > 0 {
            let half = table.len() / 2;
            table = (0..half)
                .map(|i| (1.0 - p) * table[i] + p * table[i + half])
                .collect();
            len -= 1;
        }
        CellFn { start, len, table }
    }

    fn expect(&self, p: f64) -> f64 {
        self.restrict(self.start, self.start, p).table[0]
    }
}

fn bernoulli_weight(idx: usize, len: usize, p: f64) -> f64 {
    let ones = idx.count_ones() as i32;
    p.powi(ones) * (1.0 - p).powi(len as i32 - ones)
}

/// `E[f(I(s)) g(I(t))]` where each cell is occupied from an independent
/// uniform time on, so `I(s) <= I(t)` cellwise for `s <= t`.
fn coupled_expectation(f: &CellFn, s: f64, g: &CellFn, t: f64) -> f64 {
    if s > t {
        return coupled_expectation(g, t, f, s);
    }
    let lo = f.start.max(g.start);
    let hi = f.end().min(g.end());
    if lo >= hi {
        return f.expect(s) * g.expect(t);
    }
    let fa = f.restrict(lo, hi, s);
    let mut gb = g.restrict(lo, hi, t);
    if t > s {
        // P(occupied at t | empty at s)
        let q = if s < 1.0 { (t - s) / (1.0 - s) } else { 0.0 };
        for j in 0..gb.len {
            let bit = 1usize << j;
            for idx in 0..gb.table.len() {
                if idx & bit == 0 {
                    gb.table[idx] = (1.0 - q) * gb.table[idx] + q * gb.table[idx | bit];
                }
            }
        }
    }
    fa.table
        .iter()
        .zip(&gb.table)
        .enumerate()
        .map(|(idx, (a, b))| bernoulli_weight(idx, fa.len, s) * a * b)
        .sum()
}

/// Admissibility check helper: exact `g1 == g0'`.
pub fn derivative_identity_holds(decomp: &AlphaDecomposition) -> bool {
    decomp.g1() == decomp.g0.derivative()
}
