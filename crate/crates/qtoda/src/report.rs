//! Serializable outcomes: one line per identity checked, grouped into a run
//! report, plus the canonical JSON form of a series.  Output is fully
//! deterministic: term order is lexicographic on exponent vectors and no
//! timestamps or environment data are recorded.

use serde::Serialize;

use crate::operators::GridReport;
use crate::qlaurent::LaurentSeries;
use crate::qtorus::RelationCheck;

/// One term of a series: exponent vector `[x, Q, t...]` and an exact
/// rational coefficient as decimal strings.
#[derive(Debug, Clone, Serialize)]
pub struct TermJson {
    pub exp: Vec<i64>,
    pub num: String,
    pub den: String,
}

/// A series with its variable names and the precision window it is known
/// on.  `null` precision on an axis means the series is exact there.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesJson {
    pub vars: Vec<String>,
    pub precision: PrecisionJson,
    pub terms: Vec<TermJson>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrecisionJson {
    pub x: Option<i64>,
    #[serde(rename = "Q")]
    pub big_q: Option<i64>,
    pub tdeg: i64,
}

pub fn series_json(series: &LaurentSeries) -> SeriesJson {
    let sys = series.sys();
    let mut vars = vec!["x".to_string(), "Q".to_string()];
    vars.extend(sys.time_names.iter().cloned());
    let terms = series
        .terms()
        .map(|(key, coeff)| {
            let mut exp = vec![key.x as i64, key.big_q as i64];
            exp.extend((0..sys.time_count()).map(|i| key.t[i] as i64));
            TermJson {
                exp,
                num: coeff.numer().to_string(),
                den: coeff.denom().to_string(),
            }
        })
        .collect();
    SeriesJson {
        vars,
        precision: PrecisionJson {
            x: series.x_prec(),
            big_q: series.bq_prec(),
            tdeg: sys.time_degree,
        },
        terms,
    }
}

/// One checked identity: its label, verdict, and enough numbers to judge
/// how much of the window the comparison actually covered.
#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub degenerate: bool,
    pub pairs_checked: usize,
    pub min_x_span: Option<i64>,
    pub first_failure: Option<String>,
}

impl From<&GridReport> for CheckLine {
    fn from(r: &GridReport) -> Self {
        CheckLine {
            name: r.label.clone(),
            pass: r.pass,
            degenerate: r.degenerate,
            pairs_checked: r.pairs_checked,
            min_x_span: r.min_x_span,
            first_failure: r.first_failure.clone(),
        }
    }
}

impl From<&RelationCheck> for CheckLine {
    fn from(r: &RelationCheck) -> Self {
        CheckLine {
            name: format!(
                "torus commutator [v^({})_({}), v^({})_({})]",
                r.k, r.m, r.l, r.n
            ),
            pass: r.pass,
            degenerate: r.interior.0 > r.interior.1,
            pairs_checked: 1,
            min_x_span: Some(r.interior.1 - r.interior.0 + 1),
            first_failure: r
                .first_mismatch
                .map(|(i, j)| format!("matrix entry ({}, {})", i, j)),
        }
    }
}

/// A full run: the subcommand that produced it, every check line in a fixed
/// order, and the combined verdict.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub checks: Vec<CheckLine>,
    pub all_pass: bool,
}

impl RunReport {
    pub fn new(command: impl Into<String>) -> Self {
        RunReport {
            command: command.into(),
            checks: Vec::new(),
            all_pass: true,
        }
    }

    pub fn push(&mut self, line: CheckLine) {
        self.all_pass &= line.pass;
        self.checks.push(line);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlaurent::{Coeff, ExpKey, VarSystem};
    use num::BigInt;

    #[test]
    fn series_json_is_deterministic_and_ordered() {
        let sys = VarSystem::from_q_order(2, 1, vec!["t1".into()], 2);
        let a = LaurentSeries::monomial(&sys, ExpKey::of_x(-1), Coeff::from_integer(BigInt::from(3)));
        let b = LaurentSeries::monomial(
            &sys,
            ExpKey::of_time(0, 1),
            Coeff::new(BigInt::from(-1), BigInt::from(2)),
        );
        let j = series_json(&a.add(&b));
        assert_eq!(j.vars, vec!["x", "Q", "t1"]);
        assert_eq!(j.terms.len(), 2);
        assert_eq!(j.terms[0].exp, vec![-1, 0, 0]);
        assert_eq!(j.terms[0].num, "3");
        assert_eq!(j.terms[1].exp, vec![0, 0, 1]);
        assert_eq!(j.terms[1].num, "-1");
        assert_eq!(j.terms[1].den, "2");
        let one = series_json(&LaurentSeries::one(&sys));
        assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&one).unwrap());
    }

    #[test]
    fn run_report_combines_verdicts() {
        let mut r = RunReport::new("demo");
        r.push(CheckLine {
            name: "a".into(),
            pass: true,
            degenerate: false,
            pairs_checked: 1,
            min_x_span: Some(5),
            first_failure: None,
        });
        assert!(r.all_pass);
        r.push(CheckLine {
            name: "b".into(),
            pass: false,
            degenerate: false,
            pairs_checked: 1,
            min_x_span: None,
            first_failure: Some("mismatch".into()),
        });
        assert!(!r.all_pass);
        assert!(r.to_json().contains("\"all_pass\": false"));
    }
}
