//! Univariate polynomials in `t` with exact rational coefficients, and real
//! root isolation on the open unit interval by Sturm sequences.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{One, Signed, ToPrimitive, Zero};

/// Coefficients in ascending order of degree, trailing zeros trimmed.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Poly {
    coeffs: Vec<BigRational>,
}

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

impl Poly {
    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self::constant(BigRational::one())
    }

    pub fn constant(c: BigRational) -> Self {
        Self::from_coeffs(vec![c])
    }

    /// The polynomial `t`.
    pub fn t() -> Self {
        Self::from_coeffs(vec![BigRational::zero(), BigRational::one()])
    }

    /// The polynomial `1 - t`.
    pub fn one_minus_t() -> Self {
        Self::from_coeffs(vec![BigRational::one(), -BigRational::one()])
    }

    pub fn from_coeffs(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn from_ints(coeffs: &[i64]) -> Self {
        Self::from_coeffs(coeffs.iter().map(|&c| rat(c)).collect())
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn coeff(&self, deg: usize) -> BigRational {
        self.coeffs.get(deg).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.len() <= 1
    }

    pub fn derivative(&self) -> Self {
        Self::from_coeffs(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * rat(k as i64))
                .collect(),
        )
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        Self::from_coeffs(self.coeffs.iter().map(|x| x * c).collect())
    }

    pub fn eval(&self, t: &BigRational) -> BigRational {
        self.coeffs
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, c| acc * t + c)
    }

    pub fn eval_f64(&self, t: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * t + c.to_f64().unwrap_or(f64::NAN))
    }

    fn leading(&self) -> Option<&BigRational> {
        self.coeffs.last()
    }

    fn monic(&self) -> Self {
        match self.leading() {
            Some(lead) => {
                let inv = lead.recip();
                self.scale(&inv)
            }
            None => Self::zero(),
        }
    }

    /// Euclidean division; panics on a zero divisor.
    pub fn div_rem(&self, divisor: &Poly) -> (Poly, Poly) {
        let d_deg = divisor.degree().expect("division by zero polynomial");
        let lead = divisor.leading().unwrap();
        let mut rem = self.coeffs.clone();
        let mut quot = vec![BigRational::zero(); self.coeffs.len().saturating_sub(d_deg)];
        while rem.len() > d_deg && !rem.is_empty() {
            let shift = rem.len() - 1 - d_deg;
            let factor = rem.last().unwrap() / lead;
            for (i, c) in divisor.coeffs.iter().enumerate() {
                rem[shift + i] -= &factor * c;
            }
            quot[shift] = factor;
            rem.pop();
            while rem.last().is_some_and(Zero::is_zero) {
                rem.pop();
            }
        }
        (Poly::from_coeffs(quot), Poly::from_coeffs(rem))
    }

    /// Monic greatest common divisor.
    pub fn gcd(&self, other: &Poly) -> Poly {
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b);
            a = b;
            b = r;
        }
        a.monic()
    }

    fn square_free(&self) -> Poly {
        let g = self.gcd(&self.derivative());
        if g.is_constant() {
            self.monic()
        } else {
            self.div_rem(&g).0.monic()
        }
    }

    /// Distinct real roots in the open interval `(0, 1)`, in increasing
    /// order. Irrational roots are bracketed to width below `2^-60`.
    pub fn roots_in_unit_interval(&self) -> Vec<RealRoot> {
        if self.is_constant() {
            return Vec::new();
        }
        let mut p = self.square_free();
        let mut exact = Vec::new();
        let zero = BigRational::zero();
        let one = BigRational::one();
        // Strip endpoint roots so every evaluation point below is a non-root
        // or an exact interior hit.
        for end in [&zero, &one] {
            if p.eval(end).is_zero() {
                let factor = Poly::from_coeffs(vec![-end.clone(), BigRational::one()]);
                p = p.div_rem(&factor).0;
            }
        }
        let roots = loop {
            match isolate_all(&p) {
                Ok(found) => break found,
                Err(hit) => {
                    let factor = Poly::from_coeffs(vec![-hit.clone(), BigRational::one()]);
                    p = p.div_rem(&factor).0;
                    exact.push(RealRoot::Exact(hit));
                }
            }
        };
        // a rational root has a small-denominator witness inside its bracket
        let roots = roots.into_iter().map(|r| match r {
            RealRoot::Bracket(lo, hi) => {
                let q = simplest_between(&lo, &hi);
                if self.eval(&q).is_zero() {
                    RealRoot::Exact(q)
                } else {
                    RealRoot::Bracket(lo, hi)
                }
            }
            exact => exact,
        });
        let mut all: Vec<RealRoot> = exact.into_iter().chain(roots).collect();
        all.sort_by(|a, b| a.approx().total_cmp(&b.approx()));
        all
    }
}

/// A real root: either hit exactly, or bracketed by an interval `(lo, hi)`
/// on which the polynomial changes sign.
#[derive(Clone, Debug, PartialEq)]
pub enum RealRoot {
    Exact(BigRational),
    Bracket(BigRational, BigRational),
}

impl RealRoot {
    pub fn approx(&self) -> f64 {
        match self {
            RealRoot::Exact(r) => r.to_f64().unwrap(),
            RealRoot::Bracket(lo, hi) => ((lo + hi) / rat(2)).to_f64().unwrap(),
        }
    }

    pub fn exact(&self) -> Option<&BigRational> {
        match self {
            RealRoot::Exact(r) => Some(r),
            RealRoot::Bracket(..) => None,
        }
    }
}

/// The rational with the smallest denominator in `[lo, hi]`, for `0 <= lo < hi`.
fn simplest_between(lo: &BigRational, hi: &BigRational) -> BigRational {
    let fl = lo.floor();
    if lo.is_integer() {
        return lo.clone();
    }
    let next = &fl + BigRational::one();
    if &next <= hi {
        return next;
    }
    // lo and hi share the integer part: recurse on the reciprocals
    let inner = simplest_between(&(hi - &fl).recip(), &(lo - &fl).recip());
    fl + inner.recip()
}

fn sturm_chain(p: &Poly) -> Vec<Poly> {
    let mut chain = vec![p.clone(), p.derivative()];
    loop {
        let n = chain.len();
        if chain[n - 1].is_zero() {
            chain.pop();
            break;
        }
        let (_, r) = chain[n - 2].div_rem(&chain[n - 1]);
        if r.is_zero() {
            break;
        }
        chain.push(-r);
    }
    chain
}

fn sign_changes(chain: &[Poly], x: &BigRational) -> usize {
    let mut changes = 0;
    let mut last = 0i8;
    for p in chain {
        let v = p.eval(x);
        let s = if v.is_positive() {
            1
        } else if v.is_negative() {
            -1
        } else {
            0
        };
        if s != 0 {
            if last != 0 && s != last {
                changes += 1;
            }
            last = s;
        }
    }
    changes
}

// Err carries an exact rational root met during bisection.
fn isolate_all(p: &Poly) -> Result<Vec<RealRoot>, BigRational> {
    if p.is_constant() {
        return Ok(Vec::new());
    }
    let chain = sturm_chain(p);
    let mut out = Vec::new();
    let mut stack = vec![(BigRational::zero(), BigRational::one())];
    while let Some((a, b)) = stack.pop() {
        let count = sign_changes(&chain, &a) - sign_changes(&chain, &b);
        match count {
            0 => {}
            1 => out.push(refine(p, a, b)?),
            _ => {
                let mid = (&a + &b) / rat(2);
                if p.eval(&mid).is_zero() {
                    return Err(mid);
                }
                stack.push((mid.clone(), b));
                stack.push((a, mid));
            }
        }
    }
    Ok(out)
}

fn refine(p: &Poly, mut a: BigRational, mut b: BigRational) -> Result<RealRoot, BigRational> {
    let width = BigRational::new(BigInt::one(), BigInt::one() << 60);
    let mut sa = p.eval(&a).is_positive();
    while &b - &a > width {
        let mid = (&a + &b) / rat(2);
        let v = p.eval(&mid);
        if v.is_zero() {
            return Err(mid);
        }
        if v.is_positive() == sa {
            a = mid;
            sa = v.is_positive();
        } else {
            b = mid;
        }
    }
    Ok(RealRoot::Bracket(a, b))
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::from_coeffs((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::from_coeffs((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![BigRational::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::from_coeffs(out)
    }
}

impl Neg for Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly::from_coeffs(self.coeffs.into_iter().map(|c| -c).collect())
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(self, rhs: Poly) -> Poly {
        &self + &rhs
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        &self - &rhs
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        &self * &rhs
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let neg = c.is_negative();
            let mag = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            }
            first = false;
            let unit = mag.is_one();
            match k {
                0 => write!(f, "{mag}")?,
                _ => {
                    if !unit {
                        write!(f, "{mag}*")?;
                    }
                    if k == 1 {
                        write!(f, "t")?;
                    } else {
                        write!(f, "t^{k}")?;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn arithmetic_and_derivative() {
        let t = Poly::t();
        let u = Poly::one_minus_t();
        let g = &t * &u; // t - t^2
        assert_eq!(g, Poly::from_ints(&[0, 1, -1]));
        assert_eq!(g.derivative(), Poly::from_ints(&[1, -2]));
        assert_eq!(&g - &g, Poly::zero());
        assert_eq!(g.degree(), Some(2));
        assert_eq!(Poly::zero().degree(), None);
        assert_eq!(g.eval(&q(1, 2)), q(1, 4));
        assert!((g.eval_f64(0.3) - 0.21).abs() < 1e-15);
        assert_eq!(g.to_string(), "t - t^2");
        assert_eq!(Poly::from_ints(&[-1, 0, 3]).to_string(), "-1 + 3*t^2");
    }

    #[test]
    fn division_identity() {
        let a = Poly::from_ints(&[3, -2, 0, 5, 1]);
        let b = Poly::from_ints(&[1, 1, 2]);
        let (quot, rem) = a.div_rem(&b);
        assert_eq!(&(&quot * &b) + &rem, a);
        assert!(rem.degree().unwrap_or(0) < 2);
    }

    #[test]
    fn gcd_finds_common_factor() {
        let f = Poly::from_ints(&[-1, 3]); // 3t - 1
        let a = &f * &Poly::from_ints(&[2, 0, 1]);
        let b = &f * &Poly::from_ints(&[-5, 1]);
        assert_eq!(a.gcd(&b), Poly::from_coeffs(vec![q(-1, 3), q(1, 1)]));
    }

    #[test]
    fn exact_rational_roots() {
        // derivative of t(1-t)^2: (1-t)(1-3t)
        let g = Poly::from_ints(&[0, 1, -2, 1]);
        let roots = g.derivative().roots_in_unit_interval();
        assert_eq!(roots.len(), 1);
        assert!((roots[0].approx() - 1.0 / 3.0).abs() < 1e-15);
        let half = Poly::from_ints(&[1, -2]).roots_in_unit_interval();
        assert_eq!(half, vec![RealRoot::Exact(q(1, 2))]);
    }

    #[test]
    fn irrational_and_repeated_roots() {
        // (t^2 - 1/2)^2 (t - 1/4): roots sqrt(1/2) (double) and 1/4
        let a = Poly::from_coeffs(vec![q(-1, 2), q(0, 1), q(1, 1)]);
        let p = &(&a * &a) * &Poly::from_coeffs(vec![q(-1, 4), q(1, 1)]);
        let roots = p.roots_in_unit_interval();
        assert_eq!(roots.len(), 2);
        assert!((roots[0].approx() - 0.25).abs() < 1e-15);
        assert!((roots[1].approx() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn endpoint_and_out_of_range_roots_excluded() {
        // t (t - 1) (t - 2) (t + 1)
        let p = Poly::from_ints(&[0, 1]).mul(Poly::from_ints(&[-1, 1]))
            * Poly::from_ints(&[-2, 1])
            * Poly::from_ints(&[1, 1]);
        assert!(p.roots_in_unit_interval().is_empty());
        assert!(Poly::from_ints(&[4]).roots_in_unit_interval().is_empty());
    }

    #[test]
    fn rational_roots_reported_exactly() {
        // (3t - 1)(t^2 - 1/2) has the rational root 1/3 and irrational 1/sqrt 2
        let p = &Poly::from_ints(&[-1, 3]) * &Poly::from_coeffs(vec![q(-1, 2), q(0, 1), q(1, 1)]);
        let roots = p.roots_in_unit_interval();
        assert_eq!(roots.len(), 2);
        assert_eq!(roots[0], RealRoot::Exact(q(1, 3)));
        assert!(roots[1].exact().is_none());
        assert!((roots[1].approx() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(simplest_between(&q(3, 10), &q(4, 10)), q(1, 3));
        assert_eq!(simplest_between(&q(1, 7), &q(1, 7)), q(1, 7));
    }

    #[test]
    fn many_close_roots() {
        let mut p = Poly::one();
        for k in 1..=8 {
            p = &p * &Poly::from_coeffs(vec![q(-k, 9) - q(1, 1000), q(1, 1)]);
        }
        let roots = p.roots_in_unit_interval();
        assert_eq!(roots.len(), 8);
        for (k, r) in roots.iter().enumerate() {
            let want = (k as f64 + 1.0) / 9.0 + 0.001;
            assert!((r.approx() - want).abs() < 1e-14, "{k}: {r:?} vs {want}");
        }
    }
}
