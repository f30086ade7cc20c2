//! Independent oracles for the melting-crystal ensemble: direct
//! plane-partition enumeration by diagonal slices, hook-length evaluation
//! of the transfer-matrix columns, the explicit statistical sum, and the
//! infinite-product form, cross-checked against the operator pipeline.

use std::sync::Arc;

use num::integer::binomial;
use num::BigInt;

use crate::fock::{partitions_up_to, ChargedPartition};
use crate::operators::{eigenvalue_hk, eigenvalue_l0, merge_span, GCache, GridReport};
use crate::qlaurent::{Coeff, ExpKey, LaurentSeries, SeriesError, VarSystem};
use crate::tau::melting_z;

/// `inner` fits under `outer` as a horizontal strip:
/// `outer_i >= inner_i >= outer_(i+1)` for all rows.
pub fn horizontal_strip(outer: &[u32], inner: &[u32]) -> bool {
    for i in 0..outer.len() {
        let above = outer[i];
        let held = inner.get(i).copied().unwrap_or(0);
        let below = outer.get(i + 1).copied().unwrap_or(0);
        if !(above >= held && held >= below) {
            return false;
        }
    }
    inner.len() <= outer.len()
}

/// Exact plane-partition counts per volume `0..=vmax`, by enumerating
/// diagonal-slice sequences: a center partition with an ascending and a
/// descending tail of horizontal-strip interlacings.
pub fn enumerate_plane_partitions(vmax: i64) -> Result<Vec<u64>, SeriesError> {
    if vmax < 0 {
        return Err(SeriesError::OutOfRange(format!(
            "volume bound must be nonnegative, got {}",
            vmax
        )));
    }
    let shapes = partitions_up_to(vmax);
    let weight = |p: &[u32]| p.iter().map(|&x| x as i64).sum::<i64>();
    // Nonempty predecessors of each shape under the strip order.
    let preds: Vec<Vec<usize>> = shapes
        .iter()
        .map(|outer| {
            shapes
                .iter()
                .enumerate()
                .filter(|(_, inner)| !inner.is_empty() && horizontal_strip(outer, inner))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    // tails[i][w]: tails of total weight w hanging below shapes[i].  A tail
    // either stops right away (allowed only when the empty partition is a
    // strip of the center, i.e. the center is a single row) or continues
    // through a nonempty neighbor.
    let mut tails: Vec<Vec<u64>> = Vec::with_capacity(shapes.len());
    for outer in &shapes {
        let stop = u64::from(horizontal_strip(outer, &[]));
        let mut row = vec![0u64; (vmax + 1) as usize];
        row[0] = stop;
        tails.push(row);
    }
    for w in 1..=vmax {
        for i in 0..shapes.len() {
            let mut total = 0u64;
            for &j in &preds[i] {
                let wj = weight(&shapes[j]);
                if wj <= w {
                    total += tails[j][(w - wj) as usize];
                }
            }
            tails[i][w as usize] = total;
        }
    }
    let mut counts = vec![0u64; (vmax + 1) as usize];
    for (i, shape) in shapes.iter().enumerate() {
        let wc = weight(shape);
        for w1 in 0..=(vmax - wc) {
            for w2 in 0..=(vmax - wc - w1) {
                counts[(wc + w1 + w2) as usize] += tails[i][w1 as usize] * tails[i][w2 as usize];
            }
        }
    }
    Ok(counts)
}

/// Transfer-matrix column head by the hook-length formula:
/// `<empty| G+ |lambda> = q^(n(lambda) + |lambda|/2) / prod_cells (1 - q^hook)`,
/// an independent route to the coefficients the operator exponential builds.
pub fn schur_rho(sys: &Arc<VarSystem>, parts: &[u32]) -> LaurentSeries {
    let weight: i64 = parts.iter().map(|&p| p as i64).sum();
    let n_stat: i64 = parts
        .iter()
        .enumerate()
        .map(|(i, &p)| i as i64 * p as i64)
        .sum();
    let cols = parts.first().copied().unwrap_or(0) as usize;
    let transpose: Vec<i64> = (1..=cols)
        .map(|j| parts.iter().filter(|&&p| p as usize >= j).count() as i64)
        .collect();
    let mut out = LaurentSeries::x_power(sys, weight + 2 * n_stat);
    for (i, &p) in parts.iter().enumerate() {
        for j in 1..=p as i64 {
            let hook = p as i64 - j + transpose[j as usize - 1] - i as i64;
            out = out.mul(&LaurentSeries::expand_geom(sys, hook).expect("hook >= 1"));
        }
    }
    out
}

/// The statistical sum `Z(s,t)` as an explicit weighted sum over partitions
/// with hook-length column coefficients:
/// `sum_lambda c_lambda^2 exp(sum_k t_k h_k(lambda,s)) Q^(L0(lambda,s))`.
pub fn crystal_z_direct(
    sys: &Arc<VarSystem>,
    s: i64,
    t_coeffs: &[LaurentSeries],
) -> Result<LaurentSeries, SeriesError> {
    let off = eigenvalue_l0(&ChargedPartition::ground(s));
    let wcap = sys.bq_prec() - 1 - off;
    let mut out = LaurentSeries::zero(sys);
    if wcap >= 0 {
        for lambda in partitions_up_to(wcap) {
            let p = ChargedPartition::new(s, lambda.clone());
            let c = schur_rho(sys, &lambda);
            let mut arg = LaurentSeries::zero(sys);
            for (i, t) in t_coeffs.iter().enumerate() {
                arg = arg.add(&t.mul(&eigenvalue_hk(sys, i as i64 + 1, &p)));
            }
            let term = c
                .mul(&c)
                .mul(&arg.exp()?)
                .mul(&LaurentSeries::big_q_power(sys, eigenvalue_l0(&p)));
            out = out.add(&term);
        }
    }
    Ok(out.truncated(None, Some(sys.bq_prec())))
}

/// The product form of the undeformed charge-0 sum:
/// `Z(0, 0) = prod_(n>=1) (1 - Q q^n)^(-n)`.
pub fn product_formula(sys: &Arc<VarSystem>) -> LaurentSeries {
    let mut out = LaurentSeries::one(sys);
    let mut n = 1i64;
    while 2 * n < sys.x_prec() {
        let jmax = (sys.bq_prec() - 1).min((sys.x_prec() - 1) / (2 * n));
        let mut factor = LaurentSeries::zero(sys);
        for j in 0..=jmax {
            let binom = binomial(BigInt::from(n + j - 1), BigInt::from(j));
            let mut key = ExpKey::of_big_q(j);
            key.x = (2 * n * j) as i32;
            factor = factor.add(&LaurentSeries::monomial(
                sys,
                key,
                Coeff::from_integer(binom),
            ));
        }
        out = out.mul(&factor);
        n += 1;
    }
    out.truncated(Some(sys.x_prec()), Some(sys.bq_prec()))
}

/// Cross-check the melting-crystal ensemble along every route available in
/// the sector: operator pipeline vs. the hook-length sum (any sector, with
/// the system's left time family driving the `H_k` couplings), and in the
/// charge-0 sector also the product form and, at `Q = 1`, the diagonal-slice
/// plane-partition counts.
pub fn check_crystal_consistency(
    cache: &GCache,
    s: i64,
    min_span: i64,
) -> Result<GridReport, SeriesError> {
    let sys = cache.sys();
    let label = format!("melting crystal consistency, sector {}", s);
    let mut report = GridReport {
        label,
        pass: true,
        degenerate: false,
        pairs_checked: 0,
        min_x_span: None,
        first_failure: None,
    };
    let fail = |report: &mut GridReport, what: &str| {
        if report.pass {
            report.pass = false;
            report.first_failure = Some(format!("{}: {}", report.label, what));
        }
    };
    let active = sys.time_count().min(4);
    let t: Vec<LaurentSeries> = (0..active)
        .map(|i| LaurentSeries::monomial(sys, ExpKey::of_time(i, 1), num::one()))
        .collect();
    let z_op = melting_z(cache, s, &t)?;
    let z_direct = crystal_z_direct(sys, s, &t)?;
    let cmp = z_op.compare(&z_direct);
    report.pairs_checked += 1;
    merge_span(&mut report.min_x_span, cmp.x_checked_span);
    if !cmp.equal_with(min_span, sys.big_q_order) {
        fail(
            &mut report,
            if cmp.equal {
                "operator vs direct sum: window too narrow"
            } else {
                "operator vs direct sum mismatch"
            },
        );
    }
    if s == 0 {
        let z0 = crystal_z_direct(sys, 0, &[])?;
        let cmp = z0.compare(&product_formula(sys));
        report.pairs_checked += 1;
        merge_span(&mut report.min_x_span, cmp.x_checked_span);
        if !cmp.equal_with(min_span, sys.big_q_order) {
            fail(
                &mut report,
                if cmp.equal {
                    "direct sum vs product form: window too narrow"
                } else {
                    "direct sum vs product form mismatch"
                },
            );
        }
        // Every box costs at least Q q, so setting Q = 1 is exact on the
        // window min(x-order, 2 Q-order) and must reproduce the counts.
        let weighted = z0.substitute_big_q_one(2);
        let vmax = (sys.bq_prec() - 1).min((sys.x_prec() - 1) / 2);
        let counts = enumerate_plane_partitions(vmax)?;
        let mut expected = LaurentSeries::zero(sys);
        for (v, &nv) in counts.iter().enumerate() {
            expected = expected.add(&LaurentSeries::monomial(
                sys,
                ExpKey::of_x(2 * v as i64),
                Coeff::from_integer(BigInt::from(nv)),
            ));
        }
        let expected = expected.truncated(Some(2 * vmax + 1), None);
        let cmp = weighted.compare(&expected);
        report.pairs_checked += 1;
        merge_span(&mut report.min_x_span, cmp.x_checked_span);
        if !cmp.equal_with(min_span, 0) {
            fail(
                &mut report,
                if cmp.equal {
                    "weighted counts: window too narrow"
                } else {
                    "weighted counts mismatch"
                },
            );
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlaurent::SeriesError;

    #[test]
    fn plane_partition_counts_by_volume() {
        assert_eq!(enumerate_plane_partitions(0).unwrap(), vec![1]);
        assert_eq!(
            enumerate_plane_partitions(8).unwrap(),
            vec![1, 1, 3, 6, 13, 24, 48, 86, 160]
        );
        assert!(matches!(
            enumerate_plane_partitions(-1),
            Err(SeriesError::OutOfRange(_))
        ));
    }

    #[test]
    fn horizontal_strip_edge_cases() {
        assert!(horizontal_strip(&[2], &[]));
        assert!(!horizontal_strip(&[1, 1], &[]));
        assert!(horizontal_strip(&[2, 1], &[1]));
        assert!(!horizontal_strip(&[2, 2], &[1]));
        assert!(horizontal_strip(&[3, 1], &[2]));
        assert!(horizontal_strip(&[2, 1], &[2, 1]));
        assert!(!horizontal_strip(&[1], &[1, 1]));
    }

    #[test]
    fn hook_formula_matches_transfer_matrix_columns() {
        let sys = VarSystem::plain(8, 0);
        let cache = GCache::new(&sys);
        // One-box column: x/(1 - x^2).
        let c1 = schur_rho(&sys, &[1]);
        for e in [1, 3, 5, 7] {
            assert_eq!(c1.known_coeff(&ExpKey::of_x(e)), Some(num::one()));
            assert_eq!(c1.known_coeff(&ExpKey::of_x(e + 1)), Some(num::zero()));
        }
        for lambda in partitions_up_to(5) {
            let col = cache.lowered(&lambda);
            let entry = col.coeffs.get(&Vec::new()).cloned();
            let present = entry.is_some();
            let from_op = entry.unwrap_or_else(|| {
                LaurentSeries::zero(&sys).truncated(col.tail.x, col.tail.bq)
            });
            let cmp = schur_rho(&sys, &lambda).compare(&from_op);
            assert!(cmp.equal, "{:?}: {:?}", lambda, cmp.first_mismatch);
            if present {
                assert!(cmp.x_checked_span.map_or(true, |w| w >= 1), "{:?}", lambda);
            }
        }
    }

    #[test]
    fn direct_sum_matches_operator_pipeline_in_charged_sectors() {
        let sys = VarSystem::from_q_order(6, 3, vec!["t1".into(), "t2".into()], 1);
        let cache = GCache::new(&sys);
        for s in [-1, 0, 1, 2] {
            let r = check_crystal_consistency(&cache, s, 1).unwrap();
            assert!(r.pass, "sector {}: {:?}", s, r.first_failure);
            assert_eq!(r.pairs_checked, if s == 0 { 3 } else { 1 });
        }
    }

    #[test]
    fn product_form_agrees_and_needs_the_squared_column() {
        let sys = VarSystem::plain(8, 4);
        let z0 = crystal_z_direct(&sys, 0, &[]).unwrap();
        let prod = product_formula(&sys);
        assert!(z0.compare(&prod).equal_with(1, sys.big_q_order));
        // Level one: a single box in every position, q/(1-q)^2.
        for (e, c) in [(2, 1i64), (4, 2), (6, 3), (8, 4)] {
            let mut key = ExpKey::of_big_q(1);
            key.x = e;
            assert_eq!(
                prod.known_coeff(&key),
                Some(Coeff::from_integer(BigInt::from(c)))
            );
        }
        // Dropping the square of the column coefficient must break it.
        let mut unsquared = LaurentSeries::zero(&sys);
        for lambda in partitions_up_to(sys.bq_prec() - 1) {
            let p = ChargedPartition::new(0, lambda.clone());
            unsquared = unsquared.add(
                &schur_rho(&sys, &lambda)
                    .mul(&LaurentSeries::big_q_power(&sys, eigenvalue_l0(&p))),
            );
        }
        let unsquared = unsquared.truncated(None, Some(sys.bq_prec()));
        assert!(!unsquared.compare(&prod).equal);
    }

    #[test]
    fn undeformed_coefficients_are_positive_counts() {
        let sys = VarSystem::plain(8, 4);
        let z0 = crystal_z_direct(&sys, 0, &[]).unwrap();
        assert!(z0.terms().all(|(_, c)| *c > num::zero()));
        let weighted = z0.substitute_big_q_one(2);
        let counts = enumerate_plane_partitions(4).unwrap();
        for (v, &nv) in counts.iter().enumerate() {
            assert_eq!(
                weighted.known_coeff(&ExpKey::of_x(2 * v as i64)),
                Some(Coeff::from_integer(BigInt::from(nv))),
                "volume {}",
                v
            );
        }
    }
}
