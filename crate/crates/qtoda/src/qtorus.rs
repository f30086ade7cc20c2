//! Banded Z x Z matrices restricted to a finite index window, realizing the
//! quantum torus algebra.
//!
//! The generator `v^(k)_m` is the single-band matrix with entry
//! `(i, i+m) = x^(k(2i+m))` where `x^2 = q`; `v^(0)_1` is the shift matrix
//! and `v^(1)_0` the diagonal `q^i`.  Products of finite windows of infinite
//! matrices are corrupted near the boundary, so every matrix carries a
//! margin and equality is only asserted on the trusted interior.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::qlaurent::{Coeff, ExpKey, LaurentSeries, VarSystem};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QtorusError {
    #[error("interior sub-window of [{lo}, {hi}] is empty after shrinking by {margin}")]
    EmptyInterior { lo: i64, hi: i64, margin: i64 },
}

/// A finitely windowed banded matrix with series entries.
#[derive(Debug, Clone)]
pub struct WindowMatrix {
    sys: Arc<VarSystem>,
    lo: i64,
    hi: i64,
    entries: BTreeMap<(i64, i64), LaurentSeries>,
    band_width: i64,
    /// Rows and columns within `margin` of the window boundary carry
    /// truncation artifacts from earlier products and are not compared.
    margin: i64,
}

impl WindowMatrix {
    pub fn zeros(sys: &Arc<VarSystem>, lo: i64, hi: i64) -> Self {
        assert!(lo <= hi, "window nonempty");
        WindowMatrix {
            sys: sys.clone(),
            lo,
            hi,
            entries: BTreeMap::new(),
            band_width: 0,
            margin: 0,
        }
    }

    /// The quantum torus generator `v^(k)_m` on `[lo, hi]`.
    pub fn vkm(sys: &Arc<VarSystem>, k: i64, m: i64, lo: i64, hi: i64) -> Self {
        let mut out = Self::zeros(sys, lo, hi);
        out.band_width = m.abs();
        for i in lo..=hi {
            let j = i + m;
            if j < lo || j > hi {
                continue;
            }
            let exponent = k * (2 * i + m);
            out.entries.insert(
                (i, j),
                LaurentSeries::monomial(sys, ExpKey::of_x(exponent), Coeff::from_integer(1.into())),
            );
        }
        out
    }

    /// The diagonal matrix `delta = diag(i)`.
    pub fn delta(sys: &Arc<VarSystem>, lo: i64, hi: i64) -> Self {
        let mut out = Self::zeros(sys, lo, hi);
        for i in lo..=hi {
            if i != 0 {
                out.entries.insert((i, i), LaurentSeries::from_int(sys, i));
            }
        }
        out
    }

    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn band_width(&self) -> i64 {
        self.band_width
    }

    pub fn margin(&self) -> i64 {
        self.margin
    }

    /// Trusted interior `[lo + margin, hi - margin]`, if nonempty.
    pub fn interior(&self) -> Result<(i64, i64), QtorusError> {
        let (a, b) = (self.lo + self.margin, self.hi - self.margin);
        if a > b {
            return Err(QtorusError::EmptyInterior {
                lo: self.lo,
                hi: self.hi,
                margin: self.margin,
            });
        }
        Ok((a, b))
    }

    pub fn entry(&self, i: i64, j: i64) -> LaurentSeries {
        self.entries
            .get(&(i, j))
            .cloned()
            .unwrap_or_else(|| LaurentSeries::zero(&self.sys))
    }

    fn assert_shared_window(&self, rhs: &WindowMatrix) {
        assert!(
            self.lo == rhs.lo && self.hi == rhs.hi,
            "matrices live on different windows"
        );
    }

    pub fn add(&self, rhs: &WindowMatrix) -> WindowMatrix {
        self.assert_shared_window(rhs);
        let mut out = self.clone();
        out.band_width = self.band_width.max(rhs.band_width);
        out.margin = self.margin.max(rhs.margin);
        for (key, series) in &rhs.entries {
            let merged = match out.entries.remove(key) {
                Some(existing) => existing.add(series),
                None => series.clone(),
            };
            if merged.is_exactly_zero() {
                continue;
            }
            out.entries.insert(*key, merged);
        }
        out
    }

    pub fn neg(&self) -> WindowMatrix {
        let mut out = self.clone();
        for series in out.entries.values_mut() {
            *series = series.neg();
        }
        out
    }

    pub fn sub(&self, rhs: &WindowMatrix) -> WindowMatrix {
        self.add(&rhs.neg())
    }

    pub fn scale(&self, factor: &LaurentSeries) -> WindowMatrix {
        let mut out = self.clone();
        out.entries = self
            .entries
            .iter()
            .map(|(key, series)| (*key, series.mul(factor)))
            .filter(|(_, s)| !s.is_exactly_zero())
            .collect();
        out
    }

    /// Matrix product.  Summation indices that fall outside the window are
    /// simply missing, so the margin grows by both band widths.
    pub fn mul(&self, rhs: &WindowMatrix) -> WindowMatrix {
        self.assert_shared_window(rhs);
        let mut out = Self::zeros(&self.sys, self.lo, self.hi);
        out.band_width = self.band_width + rhs.band_width;
        out.margin = self.margin + rhs.margin + self.band_width + rhs.band_width;
        for ((i, k), a) in &self.entries {
            for j in (self.lo.max(k - rhs.band_width))..=(self.hi.min(k + rhs.band_width)) {
                let Some(b) = rhs.entries.get(&(*k, j)) else {
                    continue;
                };
                let product = a.mul(b);
                let merged = match out.entries.remove(&(*i, j)) {
                    Some(existing) => existing.add(&product),
                    None => product,
                };
                if !merged.is_exactly_zero() {
                    out.entries.insert((*i, j), merged);
                }
            }
        }
        out
    }

    pub fn commutator(&self, rhs: &WindowMatrix) -> Result<WindowMatrix, QtorusError> {
        let out = self.mul(rhs).sub(&rhs.mul(self));
        out.interior()?;
        Ok(out)
    }

    /// Entry-wise equality on the common trusted interior (rows and columns
    /// both restricted).  Returns the first mismatching index pair.
    pub fn eq_on_interior(&self, rhs: &WindowMatrix) -> Result<InteriorMatch, QtorusError> {
        self.assert_shared_window(rhs);
        let margin = self.margin.max(rhs.margin);
        let lo = self.lo + margin;
        let hi = self.hi - margin;
        if lo > hi {
            return Err(QtorusError::EmptyInterior {
                lo: self.lo,
                hi: self.hi,
                margin,
            });
        }
        for i in lo..=hi {
            for j in lo..=hi {
                let cmp = self.entry(i, j).compare(&rhs.entry(i, j));
                if !cmp.equal {
                    return Ok(InteriorMatch {
                        equal: false,
                        interior: (lo, hi),
                        first_mismatch: Some((i, j)),
                    });
                }
            }
        }
        Ok(InteriorMatch {
            equal: true,
            interior: (lo, hi),
            first_mismatch: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteriorMatch {
    pub equal: bool,
    pub interior: (i64, i64),
    pub first_mismatch: Option<(i64, i64)>,
}

/// Outcome of one structure-constant check `[v^(k)_m, v^(l)_n] =
/// (x^(lm-kn) - x^(kn-lm)) v^(k+l)_{m+n}` on a window `[-w, w]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationCheck {
    pub k: i64,
    pub l: i64,
    pub m: i64,
    pub n: i64,
    pub pass: bool,
    pub interior: (i64, i64),
    pub first_mismatch: Option<(i64, i64)>,
}

/// Structure-constant coefficient `x^(lm-kn) - x^(kn-lm)`; exactly zero when
/// `lm = kn`.
pub fn structure_coefficient(sys: &Arc<VarSystem>, k: i64, l: i64, m: i64, n: i64) -> LaurentSeries {
    let e = l * m - k * n;
    let plus = LaurentSeries::monomial(sys, ExpKey::of_x(e), Coeff::from_integer(1.into()));
    let minus = LaurentSeries::monomial(sys, ExpKey::of_x(-e), Coeff::from_integer(1.into()));
    plus.sub(&minus)
}

pub fn check_qtorus_relation(
    sys: &Arc<VarSystem>,
    k: i64,
    l: i64,
    m: i64,
    n: i64,
    window: i64,
) -> Result<RelationCheck, QtorusError> {
    assert!(window >= 0);
    let a = WindowMatrix::vkm(sys, k, m, -window, window);
    let b = WindowMatrix::vkm(sys, l, n, -window, window);
    let lhs = a.commutator(&b)?;
    let rhs = WindowMatrix::vkm(sys, k + l, m + n, -window, window)
        .scale(&structure_coefficient(sys, k, l, m, n));
    let matched = lhs.eq_on_interior(&rhs)?;
    Ok(RelationCheck {
        k,
        l,
        m,
        n,
        pass: matched.equal,
        interior: matched.interior,
        first_mismatch: matched.first_mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys() -> Arc<VarSystem> {
        VarSystem::plain(4, 0)
    }

    #[test]
    fn vkm_entries_match_the_band_formula() {
        let sys = sys();
        let lam = WindowMatrix::vkm(&sys, 0, 1, -3, 3);
        for i in -3..=2 {
            assert_eq!(lam.entry(i, i + 1), LaurentSeries::one(&sys));
        }
        assert!(lam.entry(0, 0).is_exactly_zero());

        let diag = WindowMatrix::vkm(&sys, 1, 0, -3, 3);
        for i in -3..=3 {
            assert_eq!(
                diag.entry(i, i),
                LaurentSeries::monomial(&sys, ExpKey::of_x(2 * i), Coeff::from_integer(1.into()))
            );
        }

        let v11 = WindowMatrix::vkm(&sys, 1, 1, -3, 3);
        assert_eq!(
            v11.entry(0, 1),
            LaurentSeries::monomial(&sys, ExpKey::of_x(1), Coeff::from_integer(1.into()))
        );
    }

    #[test]
    fn shift_and_diagonal_commutator_is_the_shift() {
        // [Lambda, Delta] = Lambda on the interior of a 5x5 window.
        let sys = sys();
        let lam = WindowMatrix::vkm(&sys, 0, 1, -2, 2);
        let delta = WindowMatrix::delta(&sys, -2, 2);
        let c = lam.commutator(&delta).unwrap();
        let matched = c.eq_on_interior(&lam).unwrap();
        assert!(matched.equal, "mismatch at {:?}", matched.first_mismatch);
        assert_eq!(matched.interior, (-1, 1));
    }

    #[test]
    fn shift_powers_commute() {
        let sys = sys();
        for (m, n) in [(1, 2), (2, -1), (-2, -3)] {
            let report = check_qtorus_relation(&sys, 0, 0, m, n, 8).unwrap();
            assert!(report.pass);
        }
    }

    #[test]
    fn opposite_charge_generators_close_onto_the_diagonal() {
        // [v^(1)_1, v^(1)_{-1}] = (q - q^{-1}) v^(2)_0.
        let sys = sys();
        let a = WindowMatrix::vkm(&sys, 1, 1, -6, 6);
        let b = WindowMatrix::vkm(&sys, 1, -1, -6, 6);
        let lhs = a.commutator(&b).unwrap();
        let rhs = WindowMatrix::vkm(&sys, 2, 0, -6, 6).scale(&structure_coefficient(&sys, 1, 1, 1, -1));
        let matched = lhs.eq_on_interior(&rhs).unwrap();
        assert!(matched.equal);
        // The coefficient really is q - 1/q in x-units.
        let coeff = structure_coefficient(&sys, 1, 1, 1, -1);
        assert_eq!(coeff.known_coeff(&ExpKey::of_x(2)), Some(Coeff::from_integer(1.into())));
        assert_eq!(
            coeff.known_coeff(&ExpKey::of_x(-2)),
            Some(Coeff::from_integer((-1).into()))
        );
    }

    #[test]
    fn relation_examples_pass() {
        let sys = sys();
        for (k, l, m, n) in [(1, -1, 1, -1), (2, 1, -1, 3)] {
            let report = check_qtorus_relation(&sys, k, l, m, n, 12).unwrap();
            assert!(report.pass, "relation failed for {:?}", (k, l, m, n));
        }
    }

    #[test]
    fn commutator_is_antisymmetric() {
        let sys = sys();
        let a = WindowMatrix::vkm(&sys, 2, 1, -8, 8);
        let b = WindowMatrix::vkm(&sys, 1, -2, -8, 8);
        let ab = a.commutator(&b).unwrap();
        let ba = b.commutator(&a).unwrap();
        let matched = ab.eq_on_interior(&ba.neg()).unwrap();
        assert!(matched.equal);
    }

    #[test]
    fn jacobi_identity_on_a_sampled_triple() {
        let sys = sys();
        let w = 12;
        let a = WindowMatrix::vkm(&sys, 1, 1, -w, w);
        let b = WindowMatrix::vkm(&sys, -1, 2, -w, w);
        let c = WindowMatrix::vkm(&sys, 2, -1, -w, w);
        let t1 = a.commutator(&b.commutator(&c).unwrap()).unwrap();
        let t2 = b.commutator(&c.commutator(&a).unwrap()).unwrap();
        let t3 = c.commutator(&a.commutator(&b).unwrap()).unwrap();
        let total = t1.add(&t2).add(&t3);
        let zero = WindowMatrix::zeros(&sys, -w, w);
        let matched = total.eq_on_interior(&zero).unwrap();
        assert!(matched.equal, "Jacobi fails at {:?}", matched.first_mismatch);
    }

    #[test]
    fn empty_interior_is_an_error() {
        let sys = sys();
        let a = WindowMatrix::vkm(&sys, 1, 2, -2, 2);
        let b = WindowMatrix::vkm(&sys, 1, -2, -2, 2);
        // Bands 2 + 2 eat the whole 5-wide window.
        assert!(matches!(
            a.commutator(&b),
            Err(QtorusError::EmptyInterior { .. })
        ));
    }
}
