//! Command-line driver: every identity check and evaluator behind one
//! binary, emitting deterministic JSON to stdout.
//!
//! Exit codes: 0 all checks passed, 1 at least one identity failed,
//! 2 usage or configuration error, 3 precision underflow (a truncation
//! window too small to decide the comparison, with the offending stage
//! named).  The only environment variable honored is `QTODA_THREADS`
//! (worker count for independent checks in `check-all`, default 1).

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Serialize;

use qtoda::crystal::{check_crystal_consistency, enumerate_plane_partitions};
use qtoda::hurwitz::{
    calibrate_conventions, frozen_calibration, hurwitz_bruteforce, hurwitz_from_tau, HurwitzQuery,
};
use qtoda::operators::{
    check_bilinear_commutators, check_shift1, check_shift2, GCache, GridReport,
};
use qtoda::qlaurent::{SeriesError, VarSystem};
use qtoda::qtorus::{check_qtorus_relation, QtorusError};
use qtoda::report::{series_json, CheckLine, RunReport};
use qtoda::tau::{check_constraint, check_intertwining_j, check_intertwining_v,
    check_main_identity, tau_system, tau_toda, GModel, TauSpec};

/// Minimum jointly known `x`-window span for a comparison to count.
const MIN_SPAN: i64 = 1;

#[derive(Parser)]
#[command(
    name = "qtoda",
    about = "Exact checks of quantum torus operator identities on fermion Fock space, \
             with Toda tau function evaluation",
    version
)]
struct Cli {
    /// Also write the JSON output to this file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Structure constants of the shift-and-multiply matrices on a finite
    /// index window, one line per commutator tuple.
    CheckQtorus {
        /// Bound on the first index of each generator.
        #[arg(long, default_value_t = 2)]
        kmax: u32,
        /// Bound on the second index of each generator.
        #[arg(long, default_value_t = 2)]
        mmax: u32,
        /// Matrix indices run over [-window, window].
        #[arg(long, default_value_t = 12)]
        window: u32,
        /// Powers of q retained (x is tracked to twice this order).
        #[arg(long, default_value_t = 16)]
        qorder: u32,
    },
    /// Commutators of the fermion bilinears on every basis state of a
    /// sector, central terms included.
    CheckBilinear {
        #[arg(long, default_value_t = 2)]
        kmax: u32,
        #[arg(long, default_value_t = 2)]
        mmax: u32,
        /// Fermion charge of the sector.
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        charge: i64,
        /// Largest partition weight in the basis grid.
        #[arg(long, default_value_t = 4)]
        wmax: u32,
        #[arg(long, default_value_t = 16)]
        qorder: u32,
    },
    /// Conjugation of the torus bilinears by the full transfer-matrix pair,
    /// expected to shift the second index.
    CheckShift1 {
        #[arg(long, default_value_t = 2)]
        kmax: u32,
        #[arg(long, default_value_t = 2)]
        mmax: u32,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        charge: i64,
        #[arg(long, default_value_t = 4)]
        wmax: u32,
        #[arg(long, default_value_t = 16)]
        qorder: u32,
    },
    /// Conjugation by a single transfer matrix, expected to shift the first
    /// index up along rays.
    CheckShift2 {
        #[arg(long, default_value_t = 2)]
        kmax: u32,
        #[arg(long, default_value_t = 2)]
        mmax: u32,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        charge: i64,
        #[arg(long, default_value_t = 4)]
        wmax: u32,
        #[arg(long, default_value_t = 16)]
        qorder: u32,
    },
    /// The melting-crystal partition function against the prefactored tau
    /// function of the crystal element, both time orderings.
    CheckMainIdentity {
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        charge: i64,
        #[arg(long, default_value_t = 12)]
        qorder: u32,
        #[arg(long = "Qorder", default_value_t = 4)]
        qq_order: u32,
        /// Total degree retained in the time variables.
        #[arg(long, default_value_t = 2)]
        tdegree: u32,
        /// Number of time variables per family.
        #[arg(long, default_value_t = 2)]
        kmax: u32,
    },
    /// Intertwining of the current modes and torus bilinears with the
    /// crystal element, matrix element by matrix element.
    CheckIntertwining {
        #[arg(long, default_value_t = 2)]
        kmax: u32,
        #[arg(long, default_value_t = 2)]
        mmax: u32,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        charge: i64,
        #[arg(long, default_value_t = 4)]
        wmax: u32,
        #[arg(long, default_value_t = 12)]
        qorder: u32,
        #[arg(long = "Qorder", default_value_t = 4)]
        qq_order: u32,
    },
    /// The lowest Toda-flow constraint on the tau function: paired time
    /// derivatives must cancel for the crystal element.
    CheckConstraint {
        /// One of crystal, vertex, hurwitz; all three when omitted.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        charge: i64,
        #[arg(long, default_value_t = 10)]
        qorder: u32,
        #[arg(long = "Qorder", default_value_t = 2)]
        qq_order: u32,
        #[arg(long, default_value_t = 2)]
        tdegree: u32,
        #[arg(long, default_value_t = 2)]
        kmax: u32,
    },
    /// Evaluate a two-family Toda tau function and print the series.
    Tau {
        /// One of crystal, vertex, hurwitz.
        #[arg(long, default_value = "crystal")]
        model: String,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        charge: i64,
        #[arg(long, default_value_t = 8)]
        qorder: u32,
        #[arg(long = "Qorder", default_value_t = 2)]
        qq_order: u32,
        #[arg(long, default_value_t = 2)]
        tdegree: u32,
        #[arg(long, default_value_t = 2)]
        kmax: u32,
    },
    /// Melting-crystal ensemble cross-checks, or the plane-partition
    /// counting oracle on its own.
    Crystal {
        #[arg(long, default_value_t = 8)]
        qorder: u32,
        #[arg(long = "Qorder", default_value_t = 4)]
        qq_order: u32,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        charge: i64,
        #[arg(long, default_value_t = 1)]
        tdegree: u32,
        /// `plane-partitions` to print exact counts instead of checking.
        #[arg(long)]
        oracle: Option<String>,
        /// Largest volume enumerated with --oracle.
        #[arg(long, default_value_t = 8)]
        vmax: u32,
    },
    /// A double Hurwitz number from the tau-function side, optionally
    /// compared against the symmetric-group count.
    Hurwitz {
        #[command(subcommand)]
        action: Option<HurwitzAction>,
        /// Covering degree.
        #[arg(long, default_value_t = 2)]
        d: u32,
        /// Ramification profile over zero, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "2")]
        mu: Vec<u32>,
        /// Ramification profile over infinity, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "2")]
        nu: Vec<u32>,
        /// Number of simple branch points.
        #[arg(long, default_value_t = 0)]
        b: u32,
        /// Also run the monodromy count and compare.
        #[arg(long)]
        oracle: bool,
    },
    /// Every check family in sequence with moderate settings.
    CheckAll {
        #[arg(long, default_value_t = 12)]
        qorder: u32,
        #[arg(long = "Qorder", default_value_t = 4)]
        qq_order: u32,
        #[arg(long, default_value_t = 2)]
        tdegree: u32,
        #[arg(long, default_value_t = 2)]
        kmax: u32,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        charge: i64,
    },
}

#[derive(Subcommand)]
enum HurwitzAction {
    /// Fit the convention constants against the monodromy count and print
    /// the record with its fitting log.
    Calibrate {
        #[arg(long, default_value_t = 2)]
        dmax: u32,
    },
}

enum Failure {
    Usage(String),
    Precision(String),
}

impl From<SeriesError> for Failure {
    fn from(e: SeriesError) -> Self {
        match e {
            SeriesError::OutOfRange(_) | SeriesError::BadQfracIndex(_) => {
                Failure::Usage(e.to_string())
            }
            SeriesError::NonTruncatingExp { .. }
            | SeriesError::PrecisionUnderflow { .. }
            | SeriesError::TailUnsafe { .. } => Failure::Precision(e.to_string()),
        }
    }
}

impl From<QtorusError> for Failure {
    fn from(e: QtorusError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out.clone();
    match run(cli.cmd) {
        Ok((text, pass)) => {
            print!("{}", text);
            if let Some(path) = out {
                if let Err(e) = std::fs::write(&path, &text) {
                    eprintln!("error: cannot write {}: {}", path.display(), e);
                    return ExitCode::from(2);
                }
            }
            ExitCode::from(if pass { 0 } else { 1 })
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {}", m);
            ExitCode::from(2)
        }
        Err(Failure::Precision(m)) => {
            eprintln!("error: {}", m);
            ExitCode::from(3)
        }
    }
}

fn signed_range(bound: u32) -> impl Iterator<Item = i64> + Clone {
    -(bound as i64)..=bound as i64
}

/// Fold a family of grid reports into a single summary line.
fn aggregate(name: &str, reports: &[GridReport]) -> CheckLine {
    let mut line = CheckLine {
        name: name.to_string(),
        pass: true,
        degenerate: false,
        pairs_checked: 0,
        min_x_span: None,
        first_failure: None,
    };
    for r in reports {
        line.pass &= r.pass;
        line.degenerate |= r.degenerate;
        line.pairs_checked += r.pairs_checked;
        if let Some(sp) = r.min_x_span {
            line.min_x_span = Some(line.min_x_span.map_or(sp, |m| m.min(sp)));
        }
        if line.first_failure.is_none() {
            line.first_failure = r.first_failure.clone();
        }
    }
    line
}

fn parse_model(name: &str) -> Result<GModel, Failure> {
    GModel::parse(name)
        .filter(|m| *m != GModel::Identity)
        .ok_or_else(|| Failure::Usage(format!("unknown model '{}'", name)))
}

fn time_system(qorder: u32, qq_order: u32, tdegree: u32) -> Arc<VarSystem> {
    let names = if tdegree > 0 {
        vec!["t1".to_string(), "t2".to_string()]
    } else {
        Vec::new()
    };
    VarSystem::from_q_order(qorder as i64, qq_order as i64, names, tdegree as i64)
}

fn run(cmd: Cmd) -> Result<(String, bool), Failure> {
    match cmd {
        Cmd::CheckQtorus {
            kmax,
            mmax,
            window,
            qorder,
        } => {
            let sys = VarSystem::plain(qorder as i64, 0);
            let mut report = RunReport::new("check-qtorus");
            for k in signed_range(kmax) {
                for l in signed_range(kmax) {
                    for m in signed_range(mmax) {
                        for n in signed_range(mmax) {
                            let r =
                                check_qtorus_relation(&sys, k, l, m, n, window as i64)?;
                            report.push(CheckLine::from(&r));
                        }
                    }
                }
            }
            Ok((report.to_json(), report.all_pass))
        }
        Cmd::CheckBilinear {
            kmax,
            mmax,
            charge,
            wmax,
            qorder,
        } => {
            let sys = VarSystem::plain(qorder as i64, 0);
            let mut report = RunReport::new("check-bilinear");
            for k in signed_range(kmax) {
                for l in signed_range(kmax) {
                    for m in signed_range(mmax) {
                        for n in signed_range(mmax) {
                            let r = check_bilinear_commutators(
                                &sys, k, l, m, n, charge, wmax as i64, MIN_SPAN,
                            )?;
                            report.push(CheckLine::from(&r));
                        }
                    }
                }
            }
            Ok((report.to_json(), report.all_pass))
        }
        Cmd::CheckShift1 {
            kmax,
            mmax,
            charge,
            wmax,
            qorder,
        } => {
            let sys = VarSystem::plain(qorder as i64, 0);
            let cache = GCache::new(&sys);
            let mut report = RunReport::new("check-shift1");
            for k in signed_range(kmax) {
                for m in signed_range(mmax) {
                    let r = check_shift1(&cache, k, m, charge, wmax as i64, MIN_SPAN)?;
                    report.push(CheckLine::from(&r));
                }
            }
            Ok((report.to_json(), report.all_pass))
        }
        Cmd::CheckShift2 {
            kmax,
            mmax,
            charge,
            wmax,
            qorder,
        } => {
            let sys = VarSystem::plain(qorder as i64, 0);
            let cache = GCache::new(&sys);
            let mut report = RunReport::new("check-shift2");
            for k in signed_range(kmax) {
                for m in signed_range(mmax) {
                    let r = check_shift2(&sys, k, m, charge, wmax as i64, MIN_SPAN)?;
                    report.push(CheckLine::from(&r));
                }
            }
            let _ = cache;
            Ok((report.to_json(), report.all_pass))
        }
        Cmd::CheckMainIdentity {
            charge,
            qorder,
            qq_order,
            tdegree,
            kmax,
        } => {
            let sys = tau_system(qorder as i64, qq_order as i64, kmax as usize, tdegree as i64);
            let cache = GCache::new(&sys);
            let mut report = RunReport::new("check-main-identity");
            let r = check_main_identity(&cache, charge, MIN_SPAN)?;
            report.push(CheckLine::from(&r));
            Ok((report.to_json(), report.all_pass))
        }
        Cmd::CheckIntertwining {
            kmax,
            mmax,
            charge,
            wmax,
            qorder,
            qq_order,
        } => {
            let sys = time_system(qorder, qq_order, 0);
            let cache = GCache::new(&sys);
            let mut report = RunReport::new("check-intertwining");
            for k in 1..=kmax as i64 {
                let r = check_intertwining_j(&cache, k, charge, wmax as i64, MIN_SPAN)?;
                report.push(CheckLine::from(&r));
            }
            for k in 1..=kmax as i64 {
                for m in signed_range(mmax) {
                    let r =
                        check_intertwining_v(&cache, k, m, charge, wmax as i64, MIN_SPAN)?;
                    report.push(CheckLine::from(&r));
                }
            }
            Ok((report.to_json(), report.all_pass))
        }
        Cmd::CheckConstraint {
            model,
            charge,
            qorder,
            qq_order,
            tdegree,
            kmax,
        } => {
            let models = match model {
                Some(name) => vec![parse_model(&name)?],
                None => vec![GModel::Crystal, GModel::Vertex, GModel::Hurwitz],
            };
            let sys = tau_system(qorder as i64, qq_order as i64, kmax as usize, tdegree as i64);
            let cache = GCache::new(&sys);
            let mut report = RunReport::new("check-constraint");
            for m in models {
                let spec = TauSpec::model(charge, m, kmax as usize);
                let r = check_constraint(&cache, &spec, m.name(), MIN_SPAN)?;
                report.push(CheckLine::from(&r));
            }
            Ok((report.to_json(), report.all_pass))
        }
        Cmd::Tau {
            model,
            charge,
            qorder,
            qq_order,
            tdegree,
            kmax,
        } => {
            let m = parse_model(&model)?;
            let sys = tau_system(qorder as i64, qq_order as i64, kmax as usize, tdegree as i64);
            let cache = GCache::new(&sys);
            let spec = TauSpec::model(charge, m, kmax as usize);
            let tau = tau_toda(&cache, &spec)?;
            let mut text =
                serde_json::to_string_pretty(&series_json(&tau)).expect("series serializes");
            text.push('\n');
            Ok((text, true))
        }
        Cmd::Crystal {
            qorder,
            qq_order,
            charge,
            tdegree,
            oracle,
            vmax,
        } => {
            if let Some(which) = oracle {
                if which != "plane-partitions" {
                    return Err(Failure::Usage(format!("unknown oracle '{}'", which)));
                }
                #[derive(Serialize)]
                struct Counts {
                    oracle: &'static str,
                    vmax: u32,
                    counts: Vec<u64>,
                }
                let counts = enumerate_plane_partitions(vmax as i64)?;
                let mut text = serde_json::to_string_pretty(&Counts {
                    oracle: "plane-partitions",
                    vmax,
                    counts,
                })
                .expect("counts serialize");
                text.push('\n');
                return Ok((text, true));
            }
            let sys = time_system(qorder, qq_order, tdegree);
            let cache = GCache::new(&sys);
            let mut report = RunReport::new("crystal");
            let r = check_crystal_consistency(&cache, charge, MIN_SPAN)?;
            report.push(CheckLine::from(&r));
            Ok((report.to_json(), report.all_pass))
        }
        Cmd::Hurwitz {
            action: Some(HurwitzAction::Calibrate { dmax }),
            ..
        } => {
            let record = calibrate_conventions(dmax)?;
            let mut text =
                serde_json::to_string_pretty(&record).expect("calibration serializes");
            text.push('\n');
            Ok((text, true))
        }
        Cmd::Hurwitz {
            action: None,
            d,
            mu,
            nu,
            b,
            oracle,
        } => {
            let query = HurwitzQuery::new(d, mu, nu, b)?;
            let value = hurwitz_from_tau(&query, &frozen_calibration())?;
            #[derive(Serialize)]
            struct HurwitzJson {
                d: u32,
                mu: Vec<u32>,
                nu: Vec<u32>,
                b: u32,
                num: String,
                den: String,
                oracle: Option<OracleJson>,
            }
            #[derive(Serialize)]
            struct OracleJson {
                num: String,
                den: String,
                agree: bool,
            }
            let mut pass = true;
            let oracle = if oracle {
                let counted = hurwitz_bruteforce(&query)?;
                let agree = counted == value;
                pass = agree;
                Some(OracleJson {
                    num: counted.numer().to_string(),
                    den: counted.denom().to_string(),
                    agree,
                })
            } else {
                None
            };
            let payload = HurwitzJson {
                d: query.d,
                mu: query.mu.clone(),
                nu: query.nu.clone(),
                b: query.b,
                num: value.numer().to_string(),
                den: value.denom().to_string(),
                oracle,
            };
            let mut text = serde_json::to_string_pretty(&payload).expect("value serializes");
            text.push('\n');
            Ok((text, pass))
        }
        Cmd::CheckAll {
            qorder,
            qq_order,
            tdegree,
            kmax,
            charge,
        } => check_all(qorder, qq_order, tdegree, kmax, charge),
    }
}

fn thread_count() -> Result<usize, Failure> {
    match std::env::var("QTODA_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| (1..=64).contains(&n))
            .ok_or_else(|| {
                Failure::Usage(format!("QTODA_THREADS must be an integer in 1..=64, got '{}'", v))
            }),
    }
}

type Job = Box<dyn FnOnce() -> Result<CheckLine, Failure> + Send>;

/// Run independent jobs on a fixed number of workers, returning results in
/// job order regardless of scheduling.
fn run_jobs(jobs: Vec<Job>, workers: usize) -> Vec<Result<CheckLine, Failure>> {
    if workers <= 1 {
        return jobs.into_iter().map(|j| j()).collect();
    }
    let mut slots: Vec<Option<Result<CheckLine, Failure>>> =
        jobs.iter().map(|_| None).collect();
    let queue = std::sync::Mutex::new(jobs.into_iter().enumerate().collect::<Vec<_>>());
    let done = std::sync::Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let next = queue.lock().expect("queue lock").pop();
                match next {
                    Some((i, job)) => {
                        let r = job();
                        done.lock().expect("done lock").push((i, r));
                    }
                    None => break,
                }
            });
        }
    });
    for (i, r) in done.into_inner().expect("done lock") {
        slots[i] = Some(r);
    }
    slots.into_iter().map(|s| s.expect("job ran")).collect()
}

fn check_all(
    qorder: u32,
    qq_order: u32,
    tdegree: u32,
    kmax: u32,
    charge: i64,
) -> Result<(String, bool), Failure> {
    let workers = thread_count()?;
    let plain = VarSystem::plain(qorder.max(16) as i64, 0);
    let tau_sys = tau_system(qorder as i64, qq_order as i64, kmax as usize, tdegree as i64);
    let wmax = 4i64;
    let mut jobs: Vec<Job> = Vec::new();
    {
        let sys = plain.clone();
        jobs.push(Box::new(move || {
            let mut all = CheckLine {
                name: "torus structure constants, indices <= 2, window 12".into(),
                pass: true,
                degenerate: false,
                pairs_checked: 0,
                min_x_span: None,
                first_failure: None,
            };
            for k in signed_range(2) {
                for l in signed_range(2) {
                    for m in signed_range(2) {
                        for n in signed_range(2) {
                            let r = check_qtorus_relation(&sys, k, l, m, n, 12)?;
                            let line = CheckLine::from(&r);
                            all.pass &= line.pass;
                            all.pairs_checked += 1;
                            if all.first_failure.is_none() && !line.pass {
                                all.first_failure =
                                    Some(format!("{}: {:?}", line.name, r.first_mismatch));
                            }
                        }
                    }
                }
            }
            Ok(all)
        }));
    }
    {
        let sys = plain.clone();
        jobs.push(Box::new(move || {
            let mut reports = Vec::new();
            for k in signed_range(2) {
                for l in signed_range(2) {
                    for m in signed_range(2) {
                        for n in signed_range(2) {
                            reports.push(check_bilinear_commutators(
                                &sys, k, l, m, n, charge, wmax, MIN_SPAN,
                            )?);
                        }
                    }
                }
            }
            Ok(aggregate(
                &format!("bilinear commutators, indices <= 2, sector {}", charge),
                &reports,
            ))
        }));
    }
    {
        let sys = plain.clone();
        jobs.push(Box::new(move || {
            let cache = GCache::new(&sys);
            let mut reports = Vec::new();
            for k in signed_range(2) {
                for m in signed_range(2) {
                    reports.push(check_shift1(&cache, k, m, charge, wmax, MIN_SPAN)?);
                }
            }
            Ok(aggregate(
                &format!("first shift symmetry, |k|,|m| <= 2, sector {}", charge),
                &reports,
            ))
        }));
    }
    {
        let sys = plain.clone();
        jobs.push(Box::new(move || {
            let mut reports = Vec::new();
            for k in signed_range(2) {
                for m in signed_range(2) {
                    reports.push(check_shift2(&sys, k, m, charge, wmax, MIN_SPAN)?);
                }
            }
            Ok(aggregate(
                &format!("second shift symmetry, |k|,|m| <= 2, sector {}", charge),
                &reports,
            ))
        }));
    }
    for s in [-1, 0, 1, 2] {
        let sys = tau_sys.clone();
        jobs.push(Box::new(move || {
            let cache = GCache::new(&sys);
            Ok(CheckLine::from(&check_main_identity(&cache, s, MIN_SPAN)?))
        }));
    }
    {
        let sys = time_system(qorder, qq_order, 0);
        jobs.push(Box::new(move || {
            let cache = GCache::new(&sys);
            let mut reports = Vec::new();
            for k in 1..=2 {
                reports.push(check_intertwining_j(&cache, k, charge, wmax, MIN_SPAN)?);
            }
            for k in 1..=2 {
                for m in signed_range(2) {
                    reports.push(check_intertwining_v(&cache, k, m, charge, wmax, MIN_SPAN)?);
                }
            }
            Ok(aggregate(
                &format!("crystal-element intertwining, k <= 2, |m| <= 2, sector {}", charge),
                &reports,
            ))
        }));
    }
    for model in [GModel::Crystal, GModel::Vertex, GModel::Hurwitz] {
        let sys = tau_sys.clone();
        jobs.push(Box::new(move || {
            let cache = GCache::new(&sys);
            let spec = TauSpec::model(charge, model, kmax as usize);
            Ok(CheckLine::from(&check_constraint(
                &cache,
                &spec,
                model.name(),
                MIN_SPAN,
            )?))
        }));
    }
    for s in [-1, 0, 1] {
        let sys = time_system(qorder.min(8), qq_order, 1);
        jobs.push(Box::new(move || {
            let cache = GCache::new(&sys);
            Ok(CheckLine::from(&check_crystal_consistency(
                &cache, s, MIN_SPAN,
            )?))
        }));
    }
    jobs.push(Box::new(move || {
        let cal = frozen_calibration();
        let mut line = CheckLine {
            name: "double Hurwitz numbers vs monodromy count, d <= 3, b <= 4".into(),
            pass: true,
            degenerate: false,
            pairs_checked: 0,
            min_x_span: None,
            first_failure: None,
        };
        for d in 1..=3u32 {
            let shapes: Vec<Vec<u32>> = qtoda::fock::partitions_up_to(d as i64)
                .into_iter()
                .filter(|p| p.iter().map(|&x| x as u64).sum::<u64>() == d as u64)
                .collect();
            for mu in &shapes {
                for nu in &shapes {
                    for b in 0..=4u32 {
                        let q = HurwitzQuery::new(d, mu.clone(), nu.clone(), b)?;
                        let lhs = hurwitz_from_tau(&q, &cal)?;
                        let rhs = hurwitz_bruteforce(&q)?;
                        line.pairs_checked += 1;
                        if lhs != rhs && line.pass {
                            line.pass = false;
                            line.first_failure = Some(format!(
                                "d={} mu={:?} nu={:?} b={}: {} != {}",
                                d, mu, nu, b, lhs, rhs
                            ));
                        }
                    }
                }
            }
        }
        Ok(line)
    }));
    let mut report = RunReport::new("check-all");
    for outcome in run_jobs(jobs, workers) {
        report.push(outcome?);
    }
    Ok((report.to_json(), report.all_pass))
}
