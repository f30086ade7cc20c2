//! Double Hurwitz numbers two ways: an exhaustive monodromy count in the
//! symmetric group, and coefficient extraction from the tau function of the
//! diagonal element `q^(W0) Q^(L0)`, related by a small calibrated set of
//! normalization conventions.

use std::collections::BTreeMap;
use std::sync::Arc;

use num::{BigInt, One, Zero};
use serde::{Deserialize, Serialize};

use crate::fock::{inner_product, partitions_up_to, ChargedPartition, FockState};
use crate::operators::{apply_jm, eigenvalue_w0};
use crate::qlaurent::{Coeff, ExpKey, SeriesError, VarSystem};

/// Hard enumeration bounds: `S_d` is walked explicitly.
pub const MAX_DEGREE: u32 = 5;
pub const MAX_BRANCH: u32 = 6;

/// A double Hurwitz counting problem: covers of the sphere of degree `d`
/// with ramification profiles `mu`, `nu` over two fixed points and `b`
/// simple branch points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HurwitzQuery {
    pub d: u32,
    pub mu: Vec<u32>,
    pub nu: Vec<u32>,
    pub b: u32,
}

impl HurwitzQuery {
    pub fn new(d: u32, mu: Vec<u32>, nu: Vec<u32>, b: u32) -> Result<Self, SeriesError> {
        let total = |p: &[u32]| p.iter().map(|&x| x as u64).sum::<u64>();
        if d == 0 || total(&mu) != d as u64 || total(&nu) != d as u64 {
            return Err(SeriesError::OutOfRange(format!(
                "profiles must be partitions of the degree {}: {:?}, {:?}",
                d, mu, nu
            )));
        }
        if mu.iter().any(|&x| x == 0) || nu.iter().any(|&x| x == 0) {
            return Err(SeriesError::OutOfRange("zero parts not allowed".into()));
        }
        let mut mu = mu;
        let mut nu = nu;
        mu.sort_unstable_by(|a, b| b.cmp(a));
        nu.sort_unstable_by(|a, b| b.cmp(a));
        Ok(Self { d, mu, nu, b })
    }

    fn check_limits(&self) -> Result<(), SeriesError> {
        if self.d > MAX_DEGREE || self.b > MAX_BRANCH {
            return Err(SeriesError::OutOfRange(format!(
                "enumeration supports degree <= {} and branch count <= {}, got d={}, b={}",
                MAX_DEGREE, MAX_BRANCH, self.d, self.b
            )));
        }
        Ok(())
    }
}

fn factorial(n: u64) -> BigInt {
    (1..=n).map(BigInt::from).product()
}

fn permutations(d: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        let mut next = Vec::new();
        for p in &out {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, p.len() as u8);
                next.push(q);
            }
        }
        out = next;
    }
    out.sort();
    out
}

fn cycle_type(p: &[u8]) -> Vec<u32> {
    let mut seen = vec![false; p.len()];
    let mut cycles = Vec::new();
    for start in 0..p.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0u32;
        let mut at = start;
        while !seen[at] {
            seen[at] = true;
            at = p[at] as usize;
            len += 1;
        }
        cycles.push(len);
    }
    cycles.sort_unstable_by(|a, b| b.cmp(a));
    cycles
}

/// `(1/d!) # { (sigma, tau_1..tau_b, rho) : sigma in C_mu, rho in C_nu,
/// tau_i transpositions, tau_b ... tau_1 sigma = rho }`, counting possibly
/// disconnected covers, by explicit walk over `S_d`.
pub fn hurwitz_bruteforce(q: &HurwitzQuery) -> Result<Coeff, SeriesError> {
    q.check_limits()?;
    let d = q.d as usize;
    let perms = permutations(d);
    let index: BTreeMap<&[u8], usize> = perms
        .iter()
        .enumerate()
        .map(|(i, p)| (p.as_slice(), i))
        .collect();
    let compose = |a: &[u8], b: &[u8]| -> Vec<u8> { b.iter().map(|&i| a[i as usize]).collect() };
    let transpositions: Vec<&Vec<u8>> = perms
        .iter()
        .filter(|p| cycle_type(p).first() == Some(&2) && cycle_type(p).get(1) != Some(&2))
        .collect();
    let mut walks = vec![BigInt::zero(); perms.len()];
    for (i, p) in perms.iter().enumerate() {
        if cycle_type(p) == q.mu {
            walks[i] = BigInt::one();
        }
    }
    for _ in 0..q.b {
        let mut next = vec![BigInt::zero(); perms.len()];
        for (i, p) in perms.iter().enumerate() {
            if walks[i].is_zero() {
                continue;
            }
            for t in &transpositions {
                let j = index[compose(t, p).as_slice()];
                next[j] += &walks[i];
            }
        }
        walks = next;
    }
    let mut total = BigInt::zero();
    for (i, p) in perms.iter().enumerate() {
        if cycle_type(p) == q.nu {
            total += &walks[i];
        }
    }
    Ok(Coeff::new(total, factorial(d as u64)))
}

/// `<0| J_(parts_1) ... J_(parts_l) |lambda>`: the flow-monomial overlap,
/// computed through the band-move action of the current modes.
fn j_overlap(sys: &Arc<VarSystem>, parts: &[u32], lambda: &[u32]) -> Coeff {
    let mut st = FockState::basis(sys, ChargedPartition::new(0, lambda.to_vec()));
    for &k in parts {
        st = apply_jm(k as i64, &st);
    }
    inner_product(&FockState::vacuum(sys, 0), &st)
        .known_coeff(&ExpKey::unit())
        .expect("exact overlap")
}

/// The convention constants relating raw tau-series coefficients to Hurwitz
/// numbers.  All are small integers pinned by fitting against the monodromy
/// count in low degree, never assumed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calibration {
    /// Exponent on `prod_i i^(m_i(mu)) * prod_j j^(m_j(nu))` (cycle-length
    /// part of the centralizer orders).
    pub cycle_norm: i64,
    /// Exponent on `prod_i m_i(mu)! * prod_j m_j(nu)!` (automorphism part).
    pub aut_norm: i64,
    /// Sign raised to the number of rows of `mu`.
    pub sign_left: i64,
    /// Sign raised to the number of rows of `nu`.
    pub sign_right: i64,
    /// Sign raised to the branch count `b`.
    pub branch_sign: i64,
    /// 1 to multiply by `b!`, 0 to leave the exponential's division in place.
    pub branch_factorial: i64,
    /// The branching eigenvalue is `(w(lambda) - eigen_shift * d) / eigen_scale`
    /// where `w` is the `W0` eigenvalue in the charge-0 sector.
    pub eigen_shift: i64,
    pub eigen_scale: i64,
}

/// A calibration together with the log of the fit that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub calibration: Calibration,
    pub fit_log: Vec<String>,
}

/// The committed calibration record, produced once by
/// [`calibrate_conventions`] and frozen.
pub fn frozen_calibration() -> Calibration {
    let report: CalibrationReport =
        serde_json::from_str(include_str!("../data/hurwitz_calibration.json"))
            .expect("committed calibration parses");
    report.calibration
}

fn multiplicity_data(parts: &[u32]) -> (BigInt, BigInt) {
    let mut mult: BTreeMap<u32, u64> = BTreeMap::new();
    for &p in parts {
        *mult.entry(p).or_insert(0) += 1;
    }
    let cycle = mult
        .iter()
        .map(|(&i, &m)| BigInt::from(i).pow(m as u32))
        .product();
    let aut = mult.values().map(|&m| factorial(m)).product();
    (cycle, aut)
}

fn int_pow(base: &Coeff, e: i64) -> Coeff {
    let mut p = Coeff::one();
    for _ in 0..e.unsigned_abs() {
        p = p * base.clone();
    }
    if e < 0 {
        p.recip()
    } else {
        p
    }
}

/// Coefficient of `prod_i T_(mu_i) prod_j Tb_(nu_j) beta^b Q^d` in the
/// charge-0 tau function of `q^(W0) Q^(L0)` under `q = e^(-beta)`,
/// evaluated in closed diagonal form over partitions of `d` with the
/// branching eigenvalue shifted and scaled per the calibration, then
/// normalized by the calibrated convention constants.
pub fn hurwitz_from_tau(q: &HurwitzQuery, cal: &Calibration) -> Result<Coeff, SeriesError> {
    q.check_limits()?;
    let sys = VarSystem::plain(1, 0);
    let d = q.d as i64;
    let mut raw = Coeff::zero();
    for lambda in partitions_up_to(d) {
        if lambda.iter().map(|&x| x as i64).sum::<i64>() != d {
            continue;
        }
        let a_left = j_overlap(&sys, &q.mu, &lambda);
        let a_right = j_overlap(&sys, &q.nu, &lambda);
        if a_left.is_zero() || a_right.is_zero() {
            continue;
        }
        let w = eigenvalue_w0(&ChargedPartition::new(0, lambda));
        let eigen = Coeff::new(
            BigInt::from(w - cal.eigen_shift * d),
            BigInt::from(cal.eigen_scale),
        );
        // beta^b coefficient of e^(-beta * eigen), as polynomial data.
        let branch = int_pow(&-eigen, q.b as i64) / Coeff::from_integer(factorial(q.b as u64));
        raw += a_left * a_right * branch;
    }
    let (cycle_mu, aut_mu) = multiplicity_data(&q.mu);
    let (cycle_nu, aut_nu) = multiplicity_data(&q.nu);
    // The literal series coefficient divides by the automorphism factorials
    // (from the exponentials) and carries a sign per row of nu (from the
    // minus in the right flow); calibration is applied on top of that.
    let mut value = raw / Coeff::from_integer(&aut_mu * &aut_nu);
    if q.nu.len() % 2 == 1 {
        value = -value;
    }
    value = value * int_pow(&Coeff::from_integer(cycle_mu * cycle_nu), cal.cycle_norm);
    value = value * int_pow(&Coeff::from_integer(aut_mu * aut_nu), cal.aut_norm);
    if cal.sign_left < 0 && q.mu.len() % 2 == 1 {
        value = -value;
    }
    if cal.sign_right < 0 && q.nu.len() % 2 == 1 {
        value = -value;
    }
    if cal.branch_sign < 0 && q.b % 2 == 1 {
        value = -value;
    }
    if cal.branch_factorial == 1 {
        value = value * Coeff::from_integer(factorial(q.b as u64));
    }
    Ok(value)
}

fn exact_partitions(d: i64) -> Vec<Vec<u32>> {
    partitions_up_to(d)
        .into_iter()
        .filter(|p| p.iter().map(|&x| x as i64).sum::<i64>() == d)
        .collect()
}

/// Fit the convention constants against the monodromy count on all queries
/// with `d <= dmax` and `b <= 4`, scanning a bounded integer grid in a fixed
/// default-first order and freezing the first exact fit.  Errors when no
/// grid point reproduces every count, which would indicate an upstream bug.
pub fn calibrate_conventions(dmax: u32) -> Result<CalibrationReport, SeriesError> {
    let dmax = dmax.min(MAX_DEGREE);
    let mut grid = Vec::new();
    for d in 1..=dmax {
        let shapes = exact_partitions(d as i64);
        for mu in &shapes {
            for nu in &shapes {
                for b in 0..=4u32 {
                    let query = HurwitzQuery::new(d, mu.clone(), nu.clone(), b)?;
                    let target = hurwitz_bruteforce(&query)?;
                    grid.push((query, target));
                }
            }
        }
    }
    let mut fits = Vec::new();
    for &cycle_norm in &[0, 1, -1] {
        for &aut_norm in &[0, 1, -1] {
            for &sign_left in &[1, -1] {
                for &sign_right in &[1, -1] {
                    for &branch_sign in &[1, -1] {
                        for &branch_factorial in &[0, 1] {
                            for &eigen_shift in &[0, 1, -1] {
                                for &eigen_scale in &[1, 2] {
                                    let cal = Calibration {
                                        cycle_norm,
                                        aut_norm,
                                        sign_left,
                                        sign_right,
                                        branch_sign,
                                        branch_factorial,
                                        eigen_shift,
                                        eigen_scale,
                                    };
                                    let ok = grid.iter().all(|(query, target)| {
                                        hurwitz_from_tau(query, &cal)
                                            .map(|v| v == *target)
                                            .unwrap_or(false)
                                    });
                                    if ok {
                                        fits.push(cal);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let chosen = fits.first().cloned().ok_or_else(|| {
        SeriesError::OutOfRange(format!(
            "no convention grid point reproduces all {} monodromy counts",
            grid.len()
        ))
    })?;
    let fit_log = vec![
        format!("fit over {} queries with d <= {}, b <= 4", grid.len(), dmax),
        format!("864 candidate records scanned, {} exact fits", fits.len()),
        format!("froze the first fit in default-first order: {:?}", chosen),
    ];
    Ok(CalibrationReport {
        calibration: chosen,
        fit_log,
    })
}
