//! One function per experiment kind. Each returns the report checks and the
//! CSV tables it produced; nothing here touches the filesystem.

use hyperlab::dynkin::{verify_h22_general_g, verify_h22_two_point, verify_hn, Budgets, GSpec, IsomorphismCase, Model};
use hyperlab::grassmann::{h22_expectation_exact, Form};
use hyperlab::merminwagner::{check_bound, estimate_spectrum, h_scan, ScanTable};
use hyperlab::oracle::OracleSpec;
use hyperlab::report::{CheckRecord, Criterion, ExperimentReport};
use hyperlab::rng::{module, Lane};
use hyperlab::sigma_h22::{exact_expectation_h22, sample_h22, ward_check, yy};
use hyperlab::sigma_hn::{exact_expectation_hn, sample_hn};
use hyperlab::stats::{batch_means, mixing_issue, DEFAULT_BATCHES};
use hyperlab::susy::{run_battery, SusyBattery};
use hyperlab::vrjp::{estimate_discounted_functional, Functional, LocalTimes, Strategy};
use hyperlab::Result;

use crate::config::{Config, GraphKind, Kind, ModelKind};

const Z_MAX: f64 = 4.0;
/// Tolerance of identities evaluated by deterministic quadrature.
const QUADRATURE_TOL: f64 = 1e-8;

/// A CSV file: header plus rows of already formatted fields.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: &str, header: &[&str]) -> Self {
        Self { file: file.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub struct Outcome {
    pub report: ExperimentReport,
    pub tables: Vec<Table>,
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Every report's checks as a table.
pub fn checks_table(report: &ExperimentReport) -> Table {
    let mut t = Table::new("checks.csv", &["name", "lhs", "lhs_se", "rhs", "rhs_se", "z", "verdict"]);
    for c in &report.checks {
        t.push(vec![c.name.clone(), num(c.lhs), num(c.lhs_se), num(c.rhs), num(c.rhs_se), opt(c.z), c.verdict.to_string()]);
    }
    t
}

pub fn run(kind: Kind, cfg: &Config, seed: u64) -> Result<Outcome> {
    let mut report = ExperimentReport::new(kind.as_str(), seed);
    let tables = match kind {
        Kind::SimulateVrjp => simulate_vrjp(cfg, seed, &mut report)?,
        Kind::SampleHn => sample_hn_kind(cfg, seed, &mut report)?,
        Kind::SampleH22 => sample_h22_kind(cfg, seed, &mut report)?,
        Kind::VerifySusy => verify_susy(cfg, &mut report)?,
        Kind::VerifyDynkin => verify_dynkin(cfg, seed, &mut report)?,
        Kind::VerifyMw => verify_mw(cfg, seed, &mut report)?,
        Kind::ScanH => scan_h(cfg, seed, &mut report)?,
    };
    let mut all = vec![checks_table(&report)];
    all.extend(tables);
    Ok(Outcome { report, tables: all })
}

/// Discounted two-point function `int E_a[1{X_t = b}] e^{-ht} dt` for every
/// `b`. All targets reuse one lane, so the per-walk sum over `b` is the full
/// discount integral and the sum rule holds walk by walk.
fn simulate_vrjp(cfg: &Config, seed: u64, rep: &mut ExperimentReport) -> Result<Vec<Table>> {
    let g = cfg.weighted_graph()?;
    let nv = g.n_vertices();
    let lane = Lane::new(seed, module::VRJP, 0);
    rep.lane("vrjp", &lane);
    let mut table = Table::new("vrjp_two_point.csv", &["a", "b", "estimate", "stderr", "oracle"]);
    let mut total = 0.0;
    for b in 0..nv {
        let f = Functional::indicator(b, nv);
        let est = estimate_discounted_functional(&g, cfg.a, &LocalTimes::zeros(nv), cfg.h, &f, cfg.vrjp_samples, Strategy::interval(), &lane)?;
        let (v, se) = (est.estimate.value, if est.estimate.stderr.is_finite() { est.estimate.stderr } else { 0.0 });
        total += v;
        let oracle = if nv <= 2 {
            let o = h22_expectation_exact(&g, Form::Y(cfg.a) * Form::Y(b), None)?;
            rep.push(CheckRecord::new(format!("two_point.b{b}.vrjp_vs_oracle"), v, se.max(est.tail_bound), o.value, o.error, Criterion::ZScore { max: Z_MAX }));
            Some(o.value)
        } else {
            None
        };
        table.push(vec![cfg.a.to_string(), b.to_string(), num(v), num(se), opt(oracle)]);
    }
    rep.push(CheckRecord::new("sum_rule", total, 0.0, 1.0 / cfg.h, 0.0, Criterion::Relative { tol: 1e-9 }));
    Ok(vec![table])
}

fn sample_hn_kind(cfg: &Config, seed: u64, rep: &mut ExperimentReport) -> Result<Vec<Table>> {
    let g = cfg.weighted_graph()?;
    let nv = g.n_vertices();
    let lane = Lane::new(seed, module::SIGMA_HN, 0);
    rep.lane("hn_chain", &lane);
    let chain = sample_hn(&g, cfg.n, &cfg.mcmc(), &mut lane.stream(0))?;
    let a = cfg.a;
    let mut table = Table::new("hn_two_point.csv", &["a", "b", "mean", "stderr", "oracle"]);
    for b in 0..nv {
        let series = chain.series(|s| s[a].y[0] * s[b].y[0]);
        let bm = batch_means(&series, DEFAULT_BATCHES)?;
        let oracle = if nv <= 2 && cfg.n == 2 {
            let o = exact_expectation_hn(&g, 2, &|s| s[a].y[0] * s[b].y[0], &OracleSpec::default())?;
            rep.push(
                CheckRecord::new(format!("two_point.b{b}.chain_vs_oracle"), bm.mean, bm.stderr, o.value, o.error, Criterion::ZScore { max: Z_MAX })
                    .inconclusive_if(mixing_issue(&series, DEFAULT_BATCHES)),
            );
            Some(o.value)
        } else {
            None
        };
        table.push(vec![a.to_string(), b.to_string(), num(bm.mean), num(bm.stderr), opt(oracle)]);
    }
    // sum_b y_a y_b - z_a / h has mean zero.
    let h = cfg.h;
    let series = chain.series(|s| s[a].y[0] * s.iter().map(|u| u.y[0]).sum::<f64>() - s[a].z / h);
    let bm = batch_means(&series, DEFAULT_BATCHES)?;
    rep.push(
        CheckRecord::new("sum_rule", bm.mean, bm.stderr, 0.0, 0.0, Criterion::ZScore { max: Z_MAX })
            .inconclusive_if(mixing_issue(&series, DEFAULT_BATCHES)),
    );
    Ok(vec![table])
}

fn sample_h22_kind(cfg: &Config, seed: u64, rep: &mut ExperimentReport) -> Result<Vec<Table>> {
    let g = cfg.weighted_graph()?;
    let nv = g.n_vertices();
    let lane = Lane::new(seed, module::SIGMA_H22, 0);
    rep.lane("h22_chain", &lane);
    let chain = sample_h22(&g, &cfg.mcmc(), false, &mut lane.stream(0))?;
    let t0: Vec<f64> = chain.t_samples.iter().map(|t| t[0]).collect();
    let mixing = mixing_issue(&t0, DEFAULT_BATCHES);
    let ward = ward_check(&chain)?;
    let mut table = Table::new("ward.csv", &["identity", "j", "l", "residual", "stderr", "z"]);
    for e in &ward.entries {
        rep.push(
            CheckRecord::new(format!("ward.mcmc.{}.{}.{}", e.identity, e.j, e.l), e.residual, e.stderr, 0.0, 0.0, Criterion::ZScore { max: Z_MAX })
                .inconclusive_if(mixing.clone()),
        );
        table.push(vec![e.identity.clone(), e.j.to_string(), e.l.to_string(), num(e.residual), num(e.stderr), num(e.z)]);
    }
    if nv <= 2 {
        let spec = OracleSpec::default();
        let tol = Criterion::Absolute { tol: QUADRATURE_TOL };
        for j in 0..nv {
            let e = exact_expectation_h22(&g, &|t, _| t[j].exp(), &spec)?;
            rep.push(CheckRecord::new(format!("ward.quadrature.exp_t.{j}"), e.value, e.error, 1.0, 0.0, tol));
            for l in j..nv {
                let lhs = exact_expectation_h22(&g, &|t, _| (t[j] + t[l]).exp(), &spec)?;
                let rhs = exact_expectation_h22(&g, &yy(j, l), &spec)?;
                rep.push(CheckRecord::new(format!("ward.quadrature.exp_tt.{j}.{l}"), lhs.value, lhs.error, 1.0 + rhs.value, rhs.error, tol));
            }
        }
    }
    Ok(vec![table])
}

fn verify_susy(cfg: &Config, rep: &mut ExperimentReport) -> Result<Vec<Table>> {
    let battery = SusyBattery { beta: cfg.beta, h: cfg.h, points: cfg.points, two_vertex: cfg.graph == GraphKind::TwoVertex };
    rep.absorb(run_battery(&battery)?);
    Ok(Vec::new())
}

fn verify_dynkin(cfg: &Config, seed: u64, rep: &mut ExperimentReport) -> Result<Vec<Table>> {
    let model = match cfg.model {
        ModelKind::H22 => Model::H22,
        ModelKind::Hn => Model::Hn(cfg.n),
    };
    let mut case = IsomorphismCase::new("dynkin", 0, seed, cfg.weighted_graph()?, model);
    case.a = cfg.a;
    case.b = cfg.b;
    case.budgets = Budgets { vrjp_samples: cfg.vrjp_samples, mcmc: cfg.mcmc(), inner_replicas: cfg.inner_replicas, oracle: true };
    case.g = if cfg.decay.is_empty() { GSpec::One } else { GSpec::ExpLocalTime { b0: cfg.b, decay: cfg.decay.clone() } };
    let sub = match (model, cfg.decay.is_empty()) {
        (Model::H22, true) => verify_h22_two_point(&case)?,
        (Model::H22, false) => verify_h22_general_g(&case)?,
        (Model::Hn(_), _) => verify_hn(&case)?,
    };
    rep.absorb(sub);
    Ok(Vec::new())
}

fn verify_mw(cfg: &Config, seed: u64, rep: &mut ExperimentReport) -> Result<Vec<Table>> {
    let lane = Lane::new(seed, module::MERMIN_WAGNER, 0);
    rep.lane("spectrum", &lane);
    let est = estimate_spectrum(&cfg.torus(), cfg.spin_model(), &cfg.budget(), &lane)?;
    let bound = check_bound(&est);
    for c in est.checks("mw").into_iter().chain(bound.checks("mw")) {
        rep.push(c);
    }
    if let Some(m) = &est.mixing {
        rep.note(format!("mixing: {m}"));
    }
    Ok(vec![Table { file: "mw_bound.csv".into(), header: bound.csv_header(), rows: bound.csv_records() }])
}

fn scan_h(cfg: &Config, seed: u64, rep: &mut ExperimentReport) -> Result<Vec<Table>> {
    let spec = cfg.scan_spec()?;
    let lane = Lane::new(seed, module::MERMIN_WAGNER, 1);
    rep.lane("scan", &lane);
    let scan = h_scan(&spec, &lane)?;
    for c in scan.checks("scan", cfg.growth_sigmas) {
        rep.push(c);
    }
    if let [hi, lo] = cfg.contrast[..] {
        rep.push(scan.contrast_check("scan", hi, lo, cfg.contrast_tol)?);
    }
    if let Some(fit) = &scan.fit {
        rep.note(format!(
            "trend: G(0) ~ {:.4} + {:.4} sqrt(log(1/h)); power-law exponent {:.4}",
            fit.sqrt_log_intercept, fit.sqrt_log_slope, fit.power_exponent
        ));
    }
    let table = Table { file: "scan.csv".into(), header: ScanTable::csv_header(), rows: scan.csv_records() };
    let mut plot = Table::new("scan_plot.csv", &["h", "g0", "g0_se"]);
    for (x, y, e) in scan.plot_data() {
        plot.push(vec![num(x), num(y), num(e)]);
    }
    Ok(vec![table, plot])
}
