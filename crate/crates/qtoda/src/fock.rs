//! Charged free-fermion Fock space on the charged-partition basis.
//!
//! A basis vector is labeled by a charge `s` and a partition `lambda`; its
//! Maya diagram (set of occupied fermion modes) is `m_k = (k-1) - s -
//! lambda_k` for `k = 1, 2, ..`, which deviates from the ground-state set
//! `{-s, -s+1, ..}` in finitely many places.  The wedge ordering is by
//! increasing mode index, and inserting or removing a mode `m` picks up the
//! sign `(-1)^(number of occupied modes below m)`.  This convention
//! reproduces the standard vacuum conditions: `psi_i` kills `|0>` for
//! `i >= 0` and `psi*_i` kills `|0>` for `i >= 1` (`psi*_j` removes mode
//! `-j`).
//!
//! States are finite linear combinations with [`LaurentSeries`]
//! coefficients.  When an operation provably pushes basis vectors beyond a
//! truncation window, the dropped part is recorded in a tail window rather
//! than silently discarded, so inner products and comparisons stay honest.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num::BigInt;

use crate::qlaurent::{opt_min, Coeff, LaurentSeries, VarSystem};

/// Charge plus partition: the label of one Fock basis vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChargedPartition {
    s: i64,
    lambda: Vec<u32>,
    weight: i64,
}

impl ChargedPartition {
    pub fn new(s: i64, lambda: Vec<u32>) -> Self {
        assert!(
            lambda.windows(2).all(|w| w[0] >= w[1]),
            "partition must be weakly decreasing"
        );
        assert!(lambda.iter().all(|&p| p >= 1), "partition parts are positive");
        let weight = lambda.iter().map(|&p| p as i64).sum();
        ChargedPartition { s, lambda, weight }
    }

    /// Ground state of the charge-`s` sector.
    pub fn ground(s: i64) -> Self {
        Self::new(s, Vec::new())
    }

    pub fn charge(&self) -> i64 {
        self.s
    }

    pub fn parts(&self) -> &[u32] {
        &self.lambda
    }

    pub fn weight(&self) -> i64 {
        self.weight
    }

    /// `k`-th occupied mode (1-based), increasing in `k`.
    pub fn occupied_mode(&self, k: usize) -> i64 {
        let part = self.lambda.get(k - 1).copied().unwrap_or(0) as i64;
        (k as i64 - 1) - self.s - part
    }

    /// Occupied modes that are negative, and unoccupied modes that are
    /// nonnegative: the finite deviation data of the Maya diagram.
    pub fn deviations(&self) -> (Vec<i64>, Vec<i64>) {
        let win = MayaWindow::covering(self, 0, 0);
        let negs = (win.lo..0).filter(|&m| win.occupied(m)).collect();
        let holes = (0.max(win.lo)..win.hi).filter(|&m| !win.occupied(m)).collect();
        (negs, holes)
    }
}

impl Ord for ChargedPartition {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.s, self.weight, &self.lambda).cmp(&(other.s, other.weight, &other.lambda))
    }
}

impl PartialOrd for ChargedPartition {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ChargedPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(s={}, lambda={:?})", self.s, self.lambda)
    }
}

/// Finite window of a Maya diagram: modes below `lo` are unoccupied, modes
/// at or above `hi` are occupied, occupancy in between is explicit.
#[derive(Debug, Clone)]
pub struct MayaWindow {
    lo: i64,
    hi: i64,
    occ: Vec<bool>,
}

impl MayaWindow {
    /// Window for `p` that additionally covers `[lo_min, hi_min)`.
    pub fn covering(p: &ChargedPartition, lo_min: i64, hi_min: i64) -> Self {
        let lam1 = p.lambda.first().copied().unwrap_or(0) as i64;
        let ell = p.lambda.len() as i64;
        let lo = (-p.s - lam1).min(lo_min);
        let hi = (ell - p.s).max(hi_min).max(lo);
        let mut occ = vec![false; (hi - lo) as usize];
        let mut k = 1usize;
        loop {
            let m = p.occupied_mode(k);
            if m >= hi {
                break;
            }
            if m >= lo {
                occ[(m - lo) as usize] = true;
            }
            k += 1;
        }
        MayaWindow { lo, hi, occ }
    }

    pub fn occupied(&self, m: i64) -> bool {
        if m < self.lo {
            false
        } else if m >= self.hi {
            true
        } else {
            self.occ[(m - self.lo) as usize]
        }
    }

    pub fn set(&mut self, m: i64, value: bool) {
        assert!(m >= self.lo && m < self.hi, "mode outside window");
        self.occ[(m - self.lo) as usize] = value;
    }

    /// Number of occupied modes strictly below `m` (finite by construction).
    pub fn occupied_below(&self, m: i64) -> i64 {
        (self.lo..m.min(self.hi)).filter(|&j| self.occupied(j)).count() as i64
            + (m - self.hi).max(0)
    }

    /// Back to the canonical label.  Panics if the window does not really
    /// describe a charged partition (it always does for states produced
    /// here).
    pub fn to_partition(&self) -> ChargedPartition {
        // Modes in [hi, 0) are occupied negatives by convention; modes in
        // [0, lo) are unoccupied nonnegatives.
        let negs = (-self.hi).max(0)
            + (self.lo..0.min(self.hi)).filter(|&m| self.occupied(m)).count() as i64;
        let holes = self.lo.max(0)
            + (0.max(self.lo)..self.hi).filter(|&m| !self.occupied(m)).count() as i64;
        let s = negs - holes;
        let mut lambda = Vec::new();
        let mut k: i64 = 0;
        for m in self.lo..self.hi {
            if self.occupied(m) {
                k += 1;
                let part = (k - 1) - s - m;
                assert!(part >= 0, "inconsistent Maya window");
                lambda.push(part as u32);
            }
        }
        while lambda.last() == Some(&0) {
            lambda.pop();
        }
        ChargedPartition::new(s, lambda)
    }
}

/// How far the unstored part of a state is pushed beyond the truncation
/// windows: everything dropped lies in `{x-exponent >= x}` or
/// `{Q-exponent >= bq}`.  `None` per variable means nothing was dropped
/// past that axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TailPrec {
    pub x: Option<i64>,
    pub bq: Option<i64>,
}

impl TailPrec {
    pub fn complete() -> Self {
        TailPrec { x: None, bq: None }
    }

    pub fn is_complete(&self) -> bool {
        self.x.is_none() && self.bq.is_none()
    }

    pub fn merge(&mut self, other: TailPrec) {
        self.x = opt_min(self.x, other.x);
        self.bq = opt_min(self.bq, other.bq);
    }

    /// Truncation bounds `(x, Q)` for contributions that leak out of the
    /// tail through an operation raising x-valuations by at least `gamma`.
    /// Hidden content lies in `{x >= X} or {Q >= B}`, so each finite branch
    /// caps its own axis; a branch that is `None` hides nothing.
    pub fn crossing_caps(&self, gamma: i64) -> (Option<i64>, Option<i64>) {
        (self.x.map(|t| t + gamma), self.bq)
    }
}

/// Finite linear combination of charged-partition basis vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FockState {
    sys: Arc<VarSystem>,
    terms: BTreeMap<ChargedPartition, LaurentSeries>,
    tail: TailPrec,
}

impl FockState {
    pub fn zero(sys: &Arc<VarSystem>) -> Self {
        FockState {
            sys: sys.clone(),
            terms: BTreeMap::new(),
            tail: TailPrec::complete(),
        }
    }

    /// The basis vector `|p>` with coefficient 1.
    pub fn basis(sys: &Arc<VarSystem>, p: ChargedPartition) -> Self {
        let mut st = Self::zero(sys);
        st.add_term(p, LaurentSeries::one(sys));
        st
    }

    /// Ground state `|s>`.
    pub fn vacuum(sys: &Arc<VarSystem>, s: i64) -> Self {
        Self::basis(sys, ChargedPartition::ground(s))
    }

    pub fn sys(&self) -> &Arc<VarSystem> {
        &self.sys
    }

    pub fn terms(&self) -> impl Iterator<Item = (&ChargedPartition, &LaurentSeries)> {
        self.terms.iter()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn tail(&self) -> TailPrec {
        self.tail
    }

    /// True when nothing has ever been truncated away.
    pub fn is_pure(&self) -> bool {
        self.tail.is_complete()
    }

    pub fn merge_tail(&mut self, tail: TailPrec) {
        self.tail.merge(tail);
    }

    /// Add `series * |p>`.  A coefficient that is zero on its window but has
    /// unknown territory folds into the tail window instead of being stored.
    pub fn add_term(&mut self, p: ChargedPartition, series: LaurentSeries) {
        if series.is_exactly_zero() {
            return;
        }
        let entry = self
            .terms
            .remove(&p)
            .map(|c| c.add(&series))
            .unwrap_or(series);
        if entry.is_zero() {
            self.tail.merge(TailPrec {
                x: entry.x_prec(),
                bq: entry.bq_prec(),
            });
        } else {
            self.terms.insert(p, entry);
        }
    }

    pub fn add(&self, rhs: &FockState) -> FockState {
        let mut out = self.clone();
        out.tail.merge(rhs.tail);
        for (p, c) in &rhs.terms {
            out.add_term(p.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> FockState {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = c.neg();
        }
        out
    }

    pub fn sub(&self, rhs: &FockState) -> FockState {
        self.add(&rhs.neg())
    }

    pub fn scale(&self, factor: &LaurentSeries) -> FockState {
        let mut out = FockState::zero(&self.sys);
        out.tail = self.tail;
        for (p, c) in &self.terms {
            out.add_term(p.clone(), c.mul(factor));
        }
        out
    }

    pub fn scale_coeff(&self, factor: &Coeff) -> FockState {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = c.scale(factor);
        }
        out.terms.retain(|_, c| !c.is_zero());
        out
    }

    pub fn scale_int(&self, n: i64) -> FockState {
        if n == 0 {
            let mut out = FockState::zero(&self.sys);
            out.tail = self.tail;
            return out;
        }
        self.scale_coeff(&Coeff::from_integer(BigInt::from(n)))
    }

    pub fn coeff(&self, p: &ChargedPartition) -> Option<&LaurentSeries> {
        self.terms.get(p)
    }

    pub fn max_weight(&self) -> Option<i64> {
        self.terms.keys().map(|p| p.weight()).max()
    }

    pub fn min_weight(&self) -> Option<i64> {
        self.terms.keys().map(|p| p.weight()).min()
    }

    /// Smallest x-valuation over stored coefficients.
    pub fn min_x_val(&self) -> Option<i64> {
        self.terms.values().filter_map(|c| c.x_val()).min()
    }

    /// Truncate every stored coefficient to the given windows; coefficients
    /// that become empty fold into the tail window.
    pub fn capped(&self, x: Option<i64>, bq: Option<i64>) -> FockState {
        let mut out = FockState::zero(&self.sys);
        out.tail = self.tail;
        for (p, c) in &self.terms {
            out.add_term(p.clone(), c.clone().truncated(x, bq));
        }
        out
    }

    /// Coefficient of `|p>`, or an empty series at the tail window if `p`
    /// is not stored.
    pub fn coeff_or_tail(&self, p: &ChargedPartition) -> LaurentSeries {
        match self.terms.get(p) {
            Some(c) => c.clone(),
            None => LaurentSeries::zero(&self.sys).truncated(self.tail.x, self.tail.bq),
        }
    }

    /// One line per term: `s=<s> lambda=[..] coeff=<series JSON>`, sorted by
    /// (charge, weight, lexicographic partition).
    pub fn dump_lines(&self) -> Vec<String> {
        self.terms
            .iter()
            .map(|(p, c)| {
                format!(
                    "s={} lambda={:?} coeff={}",
                    p.charge(),
                    p.parts(),
                    serde_json::to_string(&c.to_json()).expect("series serializes")
                )
            })
            .collect()
    }
}

/// Apply `psi_i` (or `psi*_i` when `dual`) to every term.  `psi_i` inserts
/// mode `i` and raises the charge; `psi*_i` removes mode `-i` and lowers it.
/// Annihilation of an absent mode yields zero.  Tail windows survive: the
/// image of a dropped basis vector keeps its coefficient size.
pub fn apply_psi(i: i64, st: &FockState, dual: bool) -> FockState {
    let target = if dual { -i } else { i };
    let mut out = FockState::zero(st.sys());
    out.merge_tail(st.tail());
    for (p, c) in st.terms() {
        let mut win = MayaWindow::covering(p, target - 1, target + 2);
        if win.occupied(target) != dual {
            continue;
        }
        let sign = if win.occupied_below(target) % 2 == 0 {
            1
        } else {
            -1
        };
        win.set(target, !dual);
        out.add_term(win.to_partition(), c.scale_int(sign));
    }
    out
}

/// Apply the normal-ordered bilinear `:psi_{-i} psi*_j:`, i.e.
/// `psi_{-i} psi*_j - delta_{ij}[i <= 0]`.  The subtraction constant is the
/// vacuum expectation value forced by the vacuum conditions.
pub fn apply_bilinear(i: i64, j: i64, st: &FockState) -> FockState {
    let mut out = apply_psi(-i, &apply_psi(j, st, true), false);
    if i == j && i <= 0 {
        out = out.sub(st);
    }
    out
}

/// Pairing with the orthonormality `<(s,lambda) | (s',mu)> =
/// delta_{ss'} delta_{lambda,mu}`.  Bra states are represented on the same
/// basis.  At most one side may carry a tail window; its pairing against the
/// other side's stored terms is bounded and folded into the result
/// precision.
pub fn inner_product(bra: &FockState, ket: &FockState) -> LaurentSeries {
    assert!(
        bra.is_pure() || ket.is_pure(),
        "inner product of two truncated states is unbounded"
    );
    let mut out = LaurentSeries::zero(bra.sys());
    for (p, bc) in bra.terms() {
        if let Some(kc) = ket.coeff(p) {
            out = out.add(&bc.mul(kc));
        }
    }
    // Terms stored on one side but hidden in the other side's tail window.
    for (floored, plain) in [(bra, ket), (ket, bra)] {
        if floored.is_pure() {
            continue;
        }
        let tail = floored.tail();
        for (p, c) in plain.terms() {
            if floored.coeff(p).is_none() {
                let (bx, bq) = tail.crossing_caps(c.x_val().unwrap_or(0));
                out = out.truncated(bx, bq);
            }
        }
    }
    out
}

/// All partitions of weight at most `wmax`, sorted by (weight, lex).
pub fn partitions_up_to(wmax: i64) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for w in 0..=wmax.max(0) {
        out.extend(partitions_of(w));
    }
    out
}

/// All partitions of exactly `w`, lexicographically sorted.
pub fn partitions_of(w: i64) -> Vec<Vec<u32>> {
    fn rec(remaining: u32, maxpart: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if remaining == 0 {
            out.push(prefix.clone());
            return;
        }
        for part in (1..=remaining.min(maxpart)).rev() {
            prefix.push(part);
            rec(remaining - part, part, prefix, out);
            prefix.pop();
        }
    }
    assert!(w >= 0);
    let mut out = Vec::new();
    rec(w as u32, w.max(0) as u32, &mut Vec::new(), &mut out);
    out.sort();
    out
}
