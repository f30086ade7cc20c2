//! Truncated multivariate formal Laurent series over exact rationals.
//!
//! The coefficient ring for the whole crate.  Three kinds of variables live
//! in one exponent key:
//!
//! * `x`, a square root of the quantization parameter (`x^2 = q`), with
//!   integer exponents of either sign and a finite lower bound per series;
//! * `Q`, a nonnegative grading variable;
//! * up to [`MAX_TIME_VARS`] named time variables, truncated as a ring
//!   quotient by total degree.
//!
//! Precision is tracked per series for `x` and `Q`: `x_prec = Some(p)` means
//! every coefficient of `x^e` with `e < p` is exactly known and nothing is
//! claimed at or above `p`; `None` means the series is exact in that
//! variable.  Operations propagate precision so that a reported equality is
//! always a statement about an explicitly known window.  Time variables need
//! no precision: no operation loses information below the degree cap, so the
//! quotient is exact.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

/// Number of time-variable slots in an exponent key.
pub const MAX_TIME_VARS: usize = 8;

/// Exact rational coefficient type.
pub type Coeff = BigRational;

/// Errors surfaced by series arithmetic.
#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("exponential does not truncate: term {term} has no positive tracked grading")]
    NonTruncatingExp { term: String },
    #[error("precision underflow in {context}: need window up to exponent {needed}, have {have}")]
    PrecisionUnderflow {
        context: String,
        needed: i64,
        have: i64,
    },
    #[error("geometric expansion needs k >= 1, got {0}")]
    BadQfracIndex(i64),
    #[error("dropped state components block operator {op}: their coefficients grow without bound")]
    TailUnsafe { op: String },
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
}

/// Configuration shared by all series in one computation: truncation orders
/// and variable names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarSystem {
    /// Largest exponent of `x` retained when an operation must truncate.
    pub x_order: i64,
    /// Render even powers of `x` as powers of `q` in displays.
    pub x_is_sqrt_q: bool,
    /// Largest exponent of `Q` retained when an operation must truncate.
    pub big_q_order: i64,
    /// Names of the active time variables.
    pub time_names: Vec<String>,
    /// Hard cap on total degree in the time variables.
    pub time_degree: i64,
}

impl VarSystem {
    pub fn new(
        x_order: i64,
        big_q_order: i64,
        time_names: Vec<String>,
        time_degree: i64,
    ) -> Arc<Self> {
        assert!(x_order >= 0 && big_q_order >= 0 && time_degree >= 0);
        assert!(time_names.len() <= MAX_TIME_VARS);
        assert!(time_degree <= u8::MAX as i64);
        let mut seen = time_names.clone();
        seen.sort();
        seen.dedup();
        assert!(seen.len() == time_names.len(), "duplicate time variable");
        Arc::new(VarSystem {
            x_order,
            x_is_sqrt_q: true,
            big_q_order,
            time_names,
            time_degree,
        })
    }

    /// System sized in orders of `q`: tracks `x` up to `x^{2n}`.
    pub fn from_q_order(
        q_order: i64,
        big_q_order: i64,
        time_names: Vec<String>,
        time_degree: i64,
    ) -> Arc<Self> {
        Self::new(2 * q_order, big_q_order, time_names, time_degree)
    }

    /// No time variables at all.
    pub fn plain(q_order: i64, big_q_order: i64) -> Arc<Self> {
        Self::from_q_order(q_order, big_q_order, Vec::new(), 0)
    }

    /// Exponent bound (exclusive) for `x` truncation.
    pub fn x_prec(&self) -> i64 {
        self.x_order + 1
    }

    /// Exponent bound (exclusive) for `Q` truncation.
    pub fn bq_prec(&self) -> i64 {
        self.big_q_order + 1
    }

    pub fn time_count(&self) -> usize {
        self.time_names.len()
    }
}

/// Exponent vector of a single term, ordered lexicographically as
/// `(x, Q, t_1, ..)`, which is also the serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExpKey {
    pub x: i32,
    pub big_q: i32,
    pub t: [u8; MAX_TIME_VARS],
}

impl ExpKey {
    pub const fn unit() -> Self {
        ExpKey {
            x: 0,
            big_q: 0,
            t: [0; MAX_TIME_VARS],
        }
    }

    pub fn of_x(e: i64) -> Self {
        ExpKey {
            x: e as i32,
            ..Self::unit()
        }
    }

    pub fn of_big_q(e: i64) -> Self {
        assert!(e >= 0, "Q exponents are nonnegative");
        ExpKey {
            big_q: e as i32,
            ..Self::unit()
        }
    }

    pub fn of_time(i: usize, d: u8) -> Self {
        let mut t = [0; MAX_TIME_VARS];
        t[i] = d;
        ExpKey {
            x: 0,
            big_q: 0,
            t,
        }
    }

    pub fn with_x(self, e: i64) -> Self {
        ExpKey {
            x: e as i32,
            ..self
        }
    }

    pub fn time_degree(&self) -> i64 {
        self.t.iter().map(|&d| d as i64).sum()
    }

    /// Exponent sum for a product of terms; `None` when the time quotient
    /// kills it.
    fn mul(&self, rhs: &ExpKey, time_cap: i64) -> Option<ExpKey> {
        let mut t = [0u8; MAX_TIME_VARS];
        let mut deg: i64 = 0;
        for i in 0..MAX_TIME_VARS {
            let d = self.t[i] as i64 + rhs.t[i] as i64;
            deg += d;
            if deg > time_cap {
                return None;
            }
            t[i] = d as u8;
        }
        Some(ExpKey {
            x: self.x + rhs.x,
            big_q: self.big_q + rhs.big_q,
            t,
        })
    }
}

/// `min` where `None` plays the role of `+infinity`.
pub fn opt_min(a: Option<i64>, b: Option<i64>) -> Option<i64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (Some(x), None) | (None, Some(x)) => Some(x),
        (None, None) => None,
    }
}

/// `a + b` where `None` on either side means `+infinity`.
fn opt_add(a: Option<i64>, b: Option<i64>) -> Option<i64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x + y),
        _ => None,
    }
}

fn below(e: i64, prec: Option<i64>) -> bool {
    match prec {
        Some(p) => e < p,
        None => true,
    }
}

/// A truncated Laurent series: finitely many exact rational terms plus a
/// precision window per tracked variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaurentSeries {
    sys: Arc<VarSystem>,
    terms: BTreeMap<ExpKey, Coeff>,
    /// Coefficients of `x^e` are exact for `e < x_prec`; `None` = exact.
    x_prec: Option<i64>,
    /// Coefficients of `Q^e` are exact for `e < bq_prec`; `None` = exact.
    bq_prec: Option<i64>,
}

impl LaurentSeries {
    pub fn zero(sys: &Arc<VarSystem>) -> Self {
        LaurentSeries {
            sys: sys.clone(),
            terms: BTreeMap::new(),
            x_prec: None,
            bq_prec: None,
        }
    }

    pub fn one(sys: &Arc<VarSystem>) -> Self {
        Self::monomial(sys, ExpKey::unit(), Coeff::one())
    }

    pub fn monomial(sys: &Arc<VarSystem>, key: ExpKey, coeff: Coeff) -> Self {
        assert!(key.big_q >= 0, "Q exponents are nonnegative");
        assert!(key.time_degree() <= sys.time_degree);
        let mut terms = BTreeMap::new();
        if !coeff.is_zero() {
            terms.insert(key, coeff);
        }
        LaurentSeries {
            sys: sys.clone(),
            terms,
            x_prec: None,
            bq_prec: None,
        }
    }

    pub fn from_int(sys: &Arc<VarSystem>, n: i64) -> Self {
        Self::monomial(sys, ExpKey::unit(), Coeff::from_integer(BigInt::from(n)))
    }

    /// Pure power of `x`.
    pub fn x_power(sys: &Arc<VarSystem>, e: i64) -> Self {
        Self::monomial(sys, ExpKey::of_x(e), Coeff::one())
    }

    /// Pure power of `Q`.
    pub fn big_q_power(sys: &Arc<VarSystem>, e: i64) -> Self {
        Self::monomial(sys, ExpKey::of_big_q(e), Coeff::one())
    }

    pub fn sys(&self) -> &Arc<VarSystem> {
        &self.sys
    }

    pub fn terms(&self) -> impl Iterator<Item = (&ExpKey, &Coeff)> {
        self.terms.iter()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// No known nonzero term (the series is zero on its precision window).
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Zero with nothing unknown anywhere.
    pub fn is_exactly_zero(&self) -> bool {
        self.terms.is_empty() && self.x_prec.is_none() && self.bq_prec.is_none()
    }

    pub fn x_prec(&self) -> Option<i64> {
        self.x_prec
    }

    pub fn bq_prec(&self) -> Option<i64> {
        self.bq_prec
    }

    /// Smallest `x` exponent in the support.
    pub fn x_val(&self) -> Option<i64> {
        self.terms.keys().map(|k| k.x as i64).min()
    }

    /// Smallest `Q` exponent in the support.
    pub fn bq_val(&self) -> Option<i64> {
        self.terms.keys().map(|k| k.big_q as i64).min()
    }

    /// Smallest total time-variable degree in the support.
    pub fn min_time_degree(&self) -> Option<i64> {
        self.terms.keys().map(|k| k.time_degree()).min()
    }

    /// Coefficient of `key` if it lies inside the known window.
    pub fn known_coeff(&self, key: &ExpKey) -> Option<Coeff> {
        if below(key.x as i64, self.x_prec) && below(key.big_q as i64, self.bq_prec) {
            Some(self.terms.get(key).cloned().unwrap_or_else(Coeff::zero))
        } else {
            None
        }
    }

    /// Coefficient of `q^n` (so `x^{2n}`) with no `Q` or time part.
    pub fn coeff_q(&self, n: i64) -> Option<Coeff> {
        self.known_coeff(&ExpKey::of_x(2 * n))
    }

    fn assert_same_sys(&self, rhs: &LaurentSeries) {
        assert!(
            self.sys == rhs.sys || Arc::ptr_eq(&self.sys, &rhs.sys),
            "mixed variable systems"
        );
    }

    fn normalized(mut self) -> Self {
        self.terms.retain(|k, c| {
            !c.is_zero() && below(k.x as i64, self.x_prec) && below(k.big_q as i64, self.bq_prec)
        });
        self
    }

    /// Intersect the precision window with the given bounds.
    pub fn truncated(mut self, x_prec: Option<i64>, bq_prec: Option<i64>) -> Self {
        self.x_prec = opt_min(self.x_prec, x_prec);
        self.bq_prec = opt_min(self.bq_prec, bq_prec);
        self.normalized()
    }

    /// Fails unless coefficients of `x^e` are known for all `e <= needed`.
    pub fn require_x_order(&self, needed: i64, context: &str) -> Result<(), SeriesError> {
        match self.x_prec {
            Some(p) if p <= needed => Err(SeriesError::PrecisionUnderflow {
                context: context.to_string(),
                needed,
                have: p - 1,
            }),
            _ => Ok(()),
        }
    }

    pub fn add(&self, rhs: &LaurentSeries) -> LaurentSeries {
        self.assert_same_sys(rhs);
        let mut terms = self.terms.clone();
        for (k, c) in &rhs.terms {
            let entry = terms.entry(*k).or_insert_with(Coeff::zero);
            *entry += c;
        }
        LaurentSeries {
            sys: self.sys.clone(),
            terms,
            x_prec: opt_min(self.x_prec, rhs.x_prec),
            bq_prec: opt_min(self.bq_prec, rhs.bq_prec),
        }
        .normalized()
    }

    pub fn neg(&self) -> LaurentSeries {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -c.clone();
        }
        out
    }

    pub fn sub(&self, rhs: &LaurentSeries) -> LaurentSeries {
        self.add(&rhs.neg())
    }

    pub fn scale(&self, factor: &Coeff) -> LaurentSeries {
        if factor.is_zero() {
            return LaurentSeries::zero(&self.sys);
        }
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c *= factor;
        }
        out
    }

    pub fn scale_int(&self, n: i64) -> LaurentSeries {
        self.scale(&Coeff::from_integer(BigInt::from(n)))
    }

    /// Convolution product with sound precision propagation: the result is
    /// exact below `min(P_a + val_b, P_b + val_a)` in each tracked variable.
    pub fn mul(&self, rhs: &LaurentSeries) -> LaurentSeries {
        self.assert_same_sys(rhs);
        // An empty factor has valuation +infinity, which opt_add encodes as
        // None, so the corresponding candidate window is unbounded.
        let x_prec = opt_min(
            opt_add(self.x_prec, rhs.x_val()),
            opt_add(rhs.x_prec, self.x_val()),
        );
        let bq_prec = opt_min(
            opt_add(self.bq_prec, rhs.bq_val()),
            opt_add(rhs.bq_prec, self.bq_val()),
        );
        let cap = self.sys.time_degree;
        let mut terms: BTreeMap<ExpKey, Coeff> = BTreeMap::new();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &rhs.terms {
                let Some(k) = ka.mul(kb, cap) else { continue };
                if below(k.x as i64, x_prec) && below(k.big_q as i64, bq_prec) {
                    let entry = terms.entry(k).or_insert_with(Coeff::zero);
                    *entry += ca * cb;
                }
            }
        }
        LaurentSeries {
            sys: self.sys.clone(),
            terms,
            x_prec,
            bq_prec,
        }
        .normalized()
    }

    pub fn pow(&self, n: u32) -> LaurentSeries {
        let mut out = LaurentSeries::one(&self.sys);
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    /// `exp` of a series whose every term carries a strictly positive tracked
    /// grading, so that the power series terminates under truncation.
    pub fn exp(&self) -> Result<LaurentSeries, SeriesError> {
        for (k, _) in &self.terms {
            let positive = k.time_degree() >= 1 || k.big_q >= 1 || k.x >= 1;
            if !positive {
                return Err(SeriesError::NonTruncatingExp {
                    term: format!("{:?}", k),
                });
            }
        }
        // A truncation bound is forced only for gradings in which powers can
        // run away: x when some term grows in x alone, Q when some term has
        // no time part to stop it.
        let need_xb = self
            .terms
            .keys()
            .any(|k| k.x >= 1 && k.big_q == 0 && k.time_degree() == 0);
        let need_qb = self.terms.keys().any(|k| k.big_q >= 1 && k.time_degree() == 0);
        let xb = if need_xb {
            opt_min(self.x_prec, Some(self.sys.x_prec()))
        } else {
            self.x_prec
        };
        let qb = if need_qb {
            opt_min(self.bq_prec, Some(self.sys.bq_prec()))
        } else {
            self.bq_prec
        };
        let mut result = LaurentSeries::one(&self.sys);
        let mut power = LaurentSeries::one(&self.sys);
        let mut n: i64 = 1;
        loop {
            power = power.mul(self).truncated(xb, qb);
            power = power.scale(&Coeff::new(BigInt::one(), BigInt::from(n)));
            if power.is_zero() {
                break;
            }
            result = result.add(&power);
            n += 1;
            assert!(n < 100_000, "exp expansion failed to terminate");
        }
        Ok(result.truncated(xb, qb))
    }

    /// Geometric expansion `1/(1-q^k) = sum_{j>=0} q^{jk}` to the system
    /// order.
    pub fn expand_geom(sys: &Arc<VarSystem>, k: i64) -> Result<LaurentSeries, SeriesError> {
        if k < 1 {
            return Err(SeriesError::BadQfracIndex(k));
        }
        let prec = sys.x_prec();
        let mut terms = BTreeMap::new();
        let mut e = 0;
        while e < prec {
            terms.insert(ExpKey::of_x(e), Coeff::one());
            e += 2 * k;
        }
        Ok(LaurentSeries {
            sys: sys.clone(),
            terms,
            x_prec: Some(prec),
            bq_prec: None,
        })
    }

    /// `q^{sign*k}/(1 - q^{sign*k})` expanded to the system order:
    /// `q^k + q^{2k} + ..` for `sign = +1` and `-(1 + q^k + q^{2k} + ..)`
    /// for `sign = -1`.
    pub fn expand_qfrac(sys: &Arc<VarSystem>, k: i64, sign: i64) -> Result<LaurentSeries, SeriesError> {
        assert!(sign == 1 || sign == -1);
        if k < 1 {
            return Err(SeriesError::BadQfracIndex(k));
        }
        let prec = sys.x_prec();
        let mut terms = BTreeMap::new();
        let mut e = if sign == 1 { 2 * k } else { 0 };
        while e < prec {
            terms.insert(ExpKey::of_x(e), Coeff::from_integer(BigInt::from(sign)));
            e += 2 * k;
        }
        Ok(LaurentSeries {
            sys: sys.clone(),
            terms,
            x_prec: Some(prec),
            bq_prec: None,
        })
    }

    /// Partial derivative with respect to time variable `i`.
    pub fn derivative_time(&self, i: usize) -> LaurentSeries {
        assert!(i < self.sys.time_count());
        let mut terms = BTreeMap::new();
        for (k, c) in &self.terms {
            if k.t[i] == 0 {
                continue;
            }
            let mut k2 = *k;
            k2.t[i] -= 1;
            terms.insert(k2, c * Coeff::from_integer(BigInt::from(k.t[i] as i64)));
        }
        LaurentSeries {
            sys: self.sys.clone(),
            terms,
            x_prec: self.x_prec,
            bq_prec: self.bq_prec,
        }
        .normalized()
    }

    /// Multiply the coefficient of each term by `factor_i^(degree in t_i)`.
    pub fn scale_time_vars(&self, factors: &[Coeff]) -> LaurentSeries {
        assert!(factors.len() == self.sys.time_count());
        let mut terms = BTreeMap::new();
        for (k, c) in &self.terms {
            let mut c = c.clone();
            for (i, f) in factors.iter().enumerate() {
                for _ in 0..k.t[i] {
                    c *= f;
                }
            }
            if !c.is_zero() {
                terms.insert(*k, c);
            }
        }
        LaurentSeries {
            sys: self.sys.clone(),
            terms,
            x_prec: self.x_prec,
            bq_prec: self.bq_prec,
        }
    }

    /// Substitute `t_i -> c1*t_{i1} + c2*t_{i2}` (binomial expansion; total
    /// degree is preserved so the quotient is respected).
    pub fn substitute_time_pair(
        &self,
        i: usize,
        (c1, i1): (&Coeff, usize),
        (c2, i2): (&Coeff, usize),
    ) -> LaurentSeries {
        assert!(i < self.sys.time_count() && i1 < self.sys.time_count() && i2 < self.sys.time_count());
        assert!(i1 != i2);
        let mut out = LaurentSeries::zero(&self.sys);
        for (k, c) in &self.terms {
            let a = k.t[i] as i64;
            if a == 0 {
                out = out.add(&LaurentSeries {
                    sys: self.sys.clone(),
                    terms: BTreeMap::from([(*k, c.clone())]),
                    x_prec: self.x_prec,
                    bq_prec: self.bq_prec,
                });
                continue;
            }
            let mut base = *k;
            base.t[i] = 0;
            for j in 0..=a {
                let binom = num::integer::binomial(BigInt::from(a), BigInt::from(j));
                let mut coeff = c * Coeff::from_integer(binom);
                for _ in 0..(a - j) {
                    coeff *= c1;
                }
                for _ in 0..j {
                    coeff *= c2;
                }
                if coeff.is_zero() {
                    continue;
                }
                let mut k2 = base;
                k2.t[i1] += (a - j) as u8;
                k2.t[i2] += j as u8;
                out = out.add(&LaurentSeries {
                    sys: self.sys.clone(),
                    terms: BTreeMap::from([(k2, coeff)]),
                    x_prec: self.x_prec,
                    bq_prec: self.bq_prec,
                });
            }
        }
        out.x_prec = self.x_prec;
        out.bq_prec = self.bq_prec;
        out
    }

    /// Substitute `t_i -> c * t_j` for `i != j` (used to move a value from
    /// one time block to another).
    pub fn substitute_time_single(&self, i: usize, c: &Coeff, j: usize) -> LaurentSeries {
        assert!(i != j && i < self.sys.time_count() && j < self.sys.time_count());
        let mut terms = BTreeMap::new();
        for (k, coeff) in &self.terms {
            let a = k.t[i];
            let mut k2 = *k;
            k2.t[i] = 0;
            k2.t[j] += a;
            let mut c2 = coeff.clone();
            for _ in 0..a {
                c2 *= c;
            }
            if !c2.is_zero() {
                let entry = terms.entry(k2).or_insert_with(Coeff::zero);
                *entry += c2;
            }
        }
        LaurentSeries {
            sys: self.sys.clone(),
            terms,
            x_prec: self.x_prec,
            bq_prec: self.bq_prec,
        }
        .normalized()
    }

    /// Substitute `Q -> 1`.  The caller asserts that every term (known and
    /// unknown) satisfies `x-exponent >= xval_per_q * Q-exponent`; this is
    /// checked on the known support and used to convert the `Q` window into
    /// an honest `x` window.
    pub fn substitute_big_q_one(&self, xval_per_q: i64) -> LaurentSeries {
        assert!(xval_per_q >= 1);
        let mut terms: BTreeMap<ExpKey, Coeff> = BTreeMap::new();
        for (k, c) in &self.terms {
            assert!(
                (k.x as i64) >= xval_per_q * (k.big_q as i64),
                "claimed x-valuation bound violated at {:?}",
                k
            );
            let mut k2 = *k;
            k2.big_q = 0;
            let entry = terms.entry(k2).or_insert_with(Coeff::zero);
            *entry += c;
        }
        let x_prec = opt_min(self.x_prec, self.bq_prec.map(|p| xval_per_q * p));
        LaurentSeries {
            sys: self.sys.clone(),
            terms,
            x_prec,
            bq_prec: None,
        }
        .normalized()
    }

    /// Compare against `rhs` on the intersection of the known windows.
    pub fn compare(&self, rhs: &LaurentSeries) -> SeriesMatch {
        let diff = self.sub(rhs);
        let first_mismatch = diff
            .terms
            .iter()
            .next()
            .map(|(k, c)| (*k, c.clone()));
        // The meaningful width of the checked x window is measured from the
        // lowest exponent either side actually uses.
        let val = opt_min(self.x_val(), rhs.x_val());
        let span = match (diff.x_prec, val) {
            (Some(p), Some(v)) => Some(p - v),
            (Some(p), None) => Some(p.max(0)),
            (None, _) => None,
        };
        SeriesMatch {
            equal: diff.is_zero(),
            x_checked_prec: diff.x_prec,
            x_checked_span: span,
            bq_checked_prec: diff.bq_prec,
            first_mismatch,
        }
    }

    /// Serializable form with deterministic term order.
    pub fn to_json(&self) -> SeriesJson {
        let sys = &self.sys;
        let mut vars = vec!["x".to_string(), "Q".to_string()];
        vars.extend(sys.time_names.iter().cloned());
        let x_order = opt_min(self.x_prec, Some(sys.x_prec())).unwrap() - 1;
        let bq_order = opt_min(self.bq_prec, Some(sys.bq_prec())).unwrap() - 1;
        let terms = self
            .terms
            .iter()
            .map(|(k, c)| {
                let mut exp = vec![k.x as i64, k.big_q as i64];
                exp.extend(k.t[..sys.time_count()].iter().map(|&d| d as i64));
                TermJson {
                    exp,
                    num: c.numer().to_string(),
                    den: c.denom().to_string(),
                }
            })
            .collect();
        SeriesJson {
            vars,
            precision: PrecisionJson {
                x: x_order,
                big_q: bq_order,
                tdeg: sys.time_degree,
            },
            terms,
        }
    }
}

/// Outcome of comparing two series on their common window.
#[derive(Debug, Clone)]
pub struct SeriesMatch {
    pub equal: bool,
    /// Exclusive upper end of the compared x window (`None` = exact).
    pub x_checked_prec: Option<i64>,
    /// Width of the compared x window above the lower of the two valuations.
    pub x_checked_span: Option<i64>,
    pub bq_checked_prec: Option<i64>,
    pub first_mismatch: Option<(ExpKey, Coeff)>,
}

impl SeriesMatch {
    /// Equality with at least `span` known x-exponents and `bq_order`+1 known
    /// Q-exponents actually compared.
    pub fn equal_with(&self, span: i64, bq_order: i64) -> bool {
        self.equal
            && self.x_checked_span.map_or(true, |s| s >= span)
            && self.bq_checked_prec.map_or(true, |p| p > bq_order)
    }
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct SeriesJson {
    pub vars: Vec<String>,
    pub precision: PrecisionJson,
    pub terms: Vec<TermJson>,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct PrecisionJson {
    pub x: i64,
    #[serde(rename = "Q")]
    pub big_q: i64,
    pub tdeg: i64,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct TermJson {
    pub exp: Vec<i64>,
    pub num: String,
    pub den: String,
}

impl fmt::Display for LaurentSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            write!(f, "0")?;
        }
        for (n, (k, c)) in self.terms.iter().enumerate() {
            let mut parts: Vec<String> = Vec::new();
            if k.x != 0 {
                if self.sys.x_is_sqrt_q && k.x % 2 == 0 {
                    parts.push(if k.x == 2 {
                        "q".to_string()
                    } else {
                        format!("q^{}", k.x / 2)
                    });
                } else {
                    parts.push(format!("x^{}", k.x));
                }
            }
            if k.big_q != 0 {
                parts.push(if k.big_q == 1 {
                    "Q".to_string()
                } else {
                    format!("Q^{}", k.big_q)
                });
            }
            for (i, name) in self.sys.time_names.iter().enumerate() {
                if k.t[i] > 0 {
                    parts.push(if k.t[i] == 1 {
                        name.clone()
                    } else {
                        format!("{}^{}", name, k.t[i])
                    });
                }
            }
            let mono = parts.join("*");
            let lead = if n == 0 { "" } else { " + " };
            if mono.is_empty() {
                write!(f, "{}{}", lead, c)?;
            } else if c.is_one() {
                write!(f, "{}{}", lead, mono)?;
            } else {
                write!(f, "{}{}*{}", lead, c, mono)?;
            }
        }
        if let Some(p) = self.x_prec {
            write!(f, " + O(x^{})", p)?;
        }
        if let Some(p) = self.bq_prec {
            write!(f, " + O(Q^{})", p)?;
        }
        Ok(())
    }
}
