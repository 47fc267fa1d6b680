//! Hyperbolic Dynkin isomorphism checks. Each side of
//!
//! ```text
//! sum_b <y_a y_b g(b, z - 1)>_{H^{2|2}} = int_0^inf E_{a,0}[g(X_t, L_t)] e^{-ht} dt
//! sum_b <y_a y_b g(b, z - 1)>_{H^n}   = < z_a int_0^inf E_{a,z-1}[g(X_t, L_t)] e^{-ht} dt >_{H^n}
//! ```
//!
//! is estimated from its own seed lane: sigma-model chains for the left,
//! VRJP trajectories (nested inside an independent chain for `H^n`) for the
//! right. Graphs with at most two vertices also get exact oracle values.
//!
//! In `H^{2|2}`, `g(b, z - 1)` is a function of the full even form `z`. With
//! `g = 1{b = b0} e^{-<c, z - 1>}` its Grassmann part modifies the fermion
//! determinant as well as the Gaussian `s` integral: writing
//! `E = diag(c_i e^{t_i})`, the left side per `t` sample is
//!
//! ```text
//! e^{t_a + t_b0} (D + E)^{-1}_{a b0} sqrt(det(D + E) / det D) e^{-sum_i c_i (cosh t_i - 1)}.
//! ```
//!
//! Keeping only the body `cosh t + s^2 e^t / 2` of `z` gives the reciprocal
//! determinant ratio instead, which is not the same expectation
//! ([`GWeight::EvenBody`], kept for comparison).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::{h22_expectation_exact, Form};
use crate::graph::WeightedGraph;
use crate::oracle::OracleSpec;
use crate::report::{CheckRecord, Criterion, ExperimentReport};
use crate::rng::{module, Lane};
use crate::sigma_h22::{assemble_d, exact_expectation_h22, sample_h22, yy, McmcParams, PrecisionOperator};
use crate::sigma_hn::{exact_expectation_hn, sample_hn, AmbientSpin};
use crate::stats::{batch_means, mixing_issue, Running, DEFAULT_BATCHES};
use crate::vrjp::{estimate_discounted_functional, sample_discounted, Functional, LocalTimes, Strategy};

/// Pass threshold on `|z|` for statistical comparisons.
pub const Z_MAX: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    H22,
    Hn(usize),
}

/// `g(b, l)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GSpec {
    /// `g = 1`.
    One,
    /// `g(b, l) = 1{b = b0} exp(-<decay, l>)`.
    ExpLocalTime { b0: usize, decay: Vec<f64> },
}

impl GSpec {
    fn validate(&self, n: usize) -> Result<()> {
        match self {
            GSpec::One => Ok(()),
            GSpec::ExpLocalTime { b0, decay } => {
                if *b0 >= n || decay.len() != n {
                    return Err(Error::InvalidArgument(format!("g: b0 = {b0} / decay length {} do not fit {n} vertices", decay.len())));
                }
                if decay.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
                    return Err(Error::InvalidArgument("g: decay entries must be finite and >= 0".into()));
                }
                Ok(())
            }
        }
    }

    /// `sum_b y_a y_b g(b, z - 1)` for one configuration.
    fn lhs_value(&self, a: usize, y: &[f64], z: &[f64]) -> f64 {
        match self {
            GSpec::One => y[a] * y.iter().sum::<f64>(),
            GSpec::ExpLocalTime { b0, decay } => {
                let w: f64 = decay.iter().zip(z).map(|(c, z)| c * (z - 1.0)).sum();
                y[a] * y[*b0] * (-w).exp()
            }
        }
    }

    fn form(&self, a: usize, n: usize) -> Form {
        match self {
            GSpec::One => (0..n).fold(Form::c(0.0), |acc, b| acc + Form::Y(a) * Form::Y(b)),
            GSpec::ExpLocalTime { b0, decay } => {
                let mut w = Form::c(0.0);
                for (i, c) in decay.iter().enumerate() {
                    if *c != 0.0 {
                        w = w + (Form::Z(i) - 1.0).scale(*c);
                    }
                }
                Form::Y(a) * Form::Y(*b0) * (-w).exp()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    pub vrjp_samples: u64,
    pub mcmc: McmcParams,
    /// Inner VRJP replicas per outer sample in the nested `H^n` estimator.
    pub inner_replicas: usize,
    /// Use exact oracles on graphs with at most two vertices.
    pub oracle: bool,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { vrjp_samples: 200_000, mcmc: McmcParams::default(), inner_replicas: 8, oracle: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsomorphismCase {
    pub id: String,
    /// Seed-lane case number.
    pub case: u64,
    pub seed: u64,
    pub graph: WeightedGraph,
    pub model: Model,
    pub a: usize,
    /// Target vertex of the two-point check.
    pub b: usize,
    pub g: GSpec,
    pub budgets: Budgets,
    /// Debug mode: both sides draw from one lane (flagged in reports).
    #[serde(default)]
    pub shared_seed: bool,
}

impl IsomorphismCase {
    pub fn new(id: impl Into<String>, case: u64, seed: u64, graph: WeightedGraph, model: Model) -> Self {
        Self { id: id.into(), case, seed, graph, model, a: 0, b: 0, g: GSpec::One, budgets: Budgets::default(), shared_seed: false }
    }

    /// Killing rate of the VRJP side: the smallest pinning field.
    pub fn h(&self) -> f64 {
        self.graph.h_values().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.n_vertices();
        if self.a >= n || self.b >= n {
            return Err(Error::InvalidArgument(format!("vertices a = {}, b = {} out of range for {n}", self.a, self.b)));
        }
        if !(self.h() > 0.0) {
            return Err(Error::InvalidArgument("isomorphism checks need h_i > 0 at every vertex".into()));
        }
        if let Model::Hn(k) = self.model {
            if k < 2 {
                return Err(Error::InvalidArgument(format!("H^n needs n >= 2, got {k}")));
            }
            if self.graph.h_values().iter().any(|h| *h != self.h()) {
                return Err(Error::InvalidArgument("the H^n check takes a uniform field".into()));
            }
        }
        self.g.validate(n)?;
        self.budgets.mcmc.validate()
    }

    fn lanes(&self) -> (Lane, Lane) {
        let base = Lane::new(self.seed, module::DYNKIN, self.case);
        let lhs = base.child(1);
        (lhs, if self.shared_seed { lhs } else { base.child(2) })
    }

    fn report(&self, kind: &str) -> (ExperimentReport, Lane, Lane) {
        let (l, r) = self.lanes();
        let mut rep = ExperimentReport::new(kind, self.seed);
        rep.lane(format!("{}.sigma", self.id), &l);
        rep.lane(format!("{}.vrjp", self.id), &r);
        if self.shared_seed {
            rep.shared_seed = true;
            rep.note(format!("{}: both sides share one seed lane (debug mode)", self.id));
        }
        (rep, l, r)
    }

    fn small(&self) -> bool {
        self.budgets.oracle && self.graph.n_vertices() <= 2
    }

    /// Extra local-time decay `h_i - min h` that turns a non-uniform field
    /// into uniform killing at rate `min h` (valid for `ell0 = 0`).
    fn field_excess(&self) -> Vec<f64> {
        let h = self.h();
        self.graph.h_values().iter().map(|hi| hi - h).collect()
    }
}

/// The VRJP functional for `g` with non-uniform fields folded into the decay.
fn vrjp_functional(g: &GSpec, excess: &[f64]) -> Functional {
    let uniform = excess.iter().all(|e| *e == 0.0);
    match g {
        GSpec::One if uniform => Functional::Constant(1.0),
        GSpec::One => {
            let e = excess.to_vec();
            Functional::Custom { g: std::sync::Arc::new(move |_, l| (-e.iter().zip(l).map(|(c, l)| c * l).sum::<f64>()).exp()), sup_norm: 1.0 }
        }
        GSpec::ExpLocalTime { b0, decay } => {
            Functional::ExpLocalTime { target: *b0, decay: decay.iter().zip(excess).map(|(c, e)| c + e).collect() }
        }
    }
}

fn strategy_for(f: &Functional) -> Strategy {
    if matches!(f, Functional::Custom { .. }) {
        Strategy::KillingTime
    } else {
        Strategy::interval()
    }
}

fn vrjp_side(case: &IsomorphismCase, g: &GSpec, lane: &Lane) -> Result<(f64, f64)> {
    let f = vrjp_functional(g, &case.field_excess());
    let n = case.graph.n_vertices();
    let est = estimate_discounted_functional(&case.graph, case.a, &LocalTimes::zeros(n), case.h(), &f, case.budgets.vrjp_samples, strategy_for(&f), lane)?;
    let se = if est.estimate.stderr.is_finite() { est.estimate.stderr } else { 0.0 };
    Ok((est.estimate.value, se.max(est.tail_bound)))
}

/// Left-side weighting of `g = 1{b = b0} e^{-<c, l>}` in `H^{2|2}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GWeight {
    /// Includes the Grassmann part of `z` (the correct expectation).
    Full,
    /// Body of `z` only.
    EvenBody,
}

fn with_field_shift(graph: &WeightedGraph, shift: &[f64]) -> Result<WeightedGraph> {
    let edges: Vec<(usize, usize, f64)> = graph.edges().collect();
    let h = graph.h_values().iter().zip(shift).map(|(h, c)| h + c).collect();
    WeightedGraph::new(graph.n_vertices(), &edges, h)
}

/// Per-sample Rao-Blackwellized `sum_b <y_a y_b g(b, z - 1)>` from stored
/// `t` samples of an `H^{2|2}` chain.
pub fn h22_lhs_series(graph: &WeightedGraph, t_samples: &[Vec<f64>], a: usize, g: &GSpec, weight: GWeight) -> Result<Vec<f64>> {
    g.validate(graph.n_vertices())?;
    let n = graph.n_vertices();
    let mut d = assemble_d(graph, &vec![0.0; n])?;
    match g {
        GSpec::One => t_samples
            .iter()
            .map(|t| {
                d.set_all(t)?;
                let col = d.covariance_column(a);
                Ok(t[a].exp() * col.iter().zip(t).map(|(c, tb)| c * tb.exp()).sum::<f64>())
            })
            .collect(),
        GSpec::ExpLocalTime { b0, decay } => {
            let shifted = with_field_shift(graph, decay)?;
            let mut de = PrecisionOperator::with_symbolic(&shifted, d.symbolic().clone(), &vec![0.0; n])?;
            t_samples
                .iter()
                .map(|t| {
                    d.set_all(t)?;
                    de.set_all(t)?;
                    let half = 0.5 * (de.log_det() - d.log_det());
                    let ratio = match weight {
                        GWeight::Full => half,
                        GWeight::EvenBody => -half,
                    };
                    let body: f64 = decay.iter().zip(t).map(|(c, ti)| c * (ti.cosh() - 1.0)).sum();
                    Ok((t[a] + t[*b0]).exp() * de.covariance_column(*b0)[a] * (ratio - body).exp())
                })
                .collect()
        }
    }
}

fn sigma_h22_side<R: Rng>(case: &IsomorphismCase, g: &GSpec, rng: &mut R) -> Result<(f64, f64, Option<String>)> {
    let chain = sample_h22(&case.graph, &case.budgets.mcmc, false, rng)?;
    let series = h22_lhs_series(&case.graph, &chain.t_samples, case.a, g, GWeight::Full)?;
    let bm = batch_means(&series, DEFAULT_BATCHES)?;
    Ok((bm.mean, bm.stderr, mixing_issue(&series, DEFAULT_BATCHES)))
}

fn add_comparisons(
    rep: &mut ExperimentReport,
    prefix: &str,
    sigma: (f64, f64, Option<String>),
    vrjp: (f64, f64),
    oracle: Option<(f64, f64)>,
) {
    let z = Criterion::ZScore { max: Z_MAX };
    rep.push(CheckRecord::new(format!("{prefix}.sigma_vs_vrjp"), sigma.0, sigma.1, vrjp.0, vrjp.1, z).inconclusive_if(sigma.2.clone()));
    if let Some((o, oe)) = oracle {
        rep.push(CheckRecord::new(format!("{prefix}.oracle_vs_vrjp"), o, oe, vrjp.0, vrjp.1, z));
        rep.push(CheckRecord::new(format!("{prefix}.oracle_vs_sigma"), o, oe, sigma.0, sigma.1, z).inconclusive_if(sigma.2));
    }
}

/// `<y_a y_b>_{H^{2|2}}` against the VRJP two-point function.
pub fn verify_h22_two_point(case: &IsomorphismCase) -> Result<ExperimentReport> {
    case.validate()?;
    if case.model != Model::H22 {
        return Err(Error::InvalidArgument("verify_h22_two_point needs the H22 model".into()));
    }
    let (mut rep, l_lane, r_lane) = case.report("verify-dynkin");
    let g = GSpec::ExpLocalTime { b0: case.b, decay: vec![0.0; case.graph.n_vertices()] };
    let sigma = {
        let mut rng = l_lane.stream(0);
        let chain = sample_h22(&case.graph, &case.budgets.mcmc, false, &mut rng)?;
        let series = chain.two_point_series(case.a, case.b, crate::sigma_h22::TwoPointEstimator::RaoBlackwell)?;
        let bm = batch_means(&series, DEFAULT_BATCHES)?;
        (bm.mean, bm.stderr, mixing_issue(&series, DEFAULT_BATCHES))
    };
    let vrjp = vrjp_side(case, &g, &r_lane)?;
    let oracle = if case.small() {
        let r = h22_expectation_exact(&case.graph, Form::Y(case.a) * Form::Y(case.b), None)?;
        let q = exact_expectation_h22(&case.graph, &yy(case.a, case.b), &OracleSpec::default())?;
        rep.push(
            CheckRecord::new(format!("{}.two_point.oracle_vs_quadrature", case.id), r.value, r.error, q.value, q.error, Criterion::Absolute { tol: 1e-6 }),
        );
        Some((r.value, r.error))
    } else {
        None
    };
    add_comparisons(&mut rep, &format!("{}.two_point", case.id), sigma, vrjp, oracle);
    Ok(rep)
}

/// `sum_b <y_a y_b g(b, z - 1)>_{H^{2|2}}` against the discounted VRJP functional.
pub fn verify_h22_general_g(case: &IsomorphismCase) -> Result<ExperimentReport> {
    case.validate()?;
    if case.model != Model::H22 {
        return Err(Error::InvalidArgument("verify_h22_general_g needs the H22 model".into()));
    }
    let (mut rep, l_lane, r_lane) = case.report("verify-dynkin");
    let sigma = sigma_h22_side(case, &case.g, &mut l_lane.stream(0))?;
    let vrjp = vrjp_side(case, &case.g, &r_lane)?;
    let oracle = if case.small() {
        let r = h22_expectation_exact(&case.graph, case.g.form(case.a, case.graph.n_vertices()), None)?;
        Some((r.value, r.error))
    } else {
        None
    };
    add_comparisons(&mut rep, &format!("{}.general_g", case.id), sigma, vrjp, oracle);
    Ok(rep)
}

fn spins_y0_z(spins: &[AmbientSpin]) -> (Vec<f64>, Vec<f64>) {
    (spins.iter().map(|s| s.y[0]).collect(), spins.iter().map(|s| s.z).collect())
}

/// Nested estimator output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestedEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Share of the outer-value variance due to inner VRJP noise.
    pub inner_share: f64,
    pub outer_samples: usize,
    pub inner_replicas: usize,
    pub mixing: Option<String>,
}

/// `< z_a int E_{a, z-1}[g] e^{-ht} dt >_{H^n}` with `k` inner replicas per
/// chain sample. Replica `(i, k)` uses stream `i * K + k` of `inner`.
pub fn nested_hn_rhs(
    graph: &WeightedGraph,
    n: usize,
    a: usize,
    g: &GSpec,
    params: &McmcParams,
    k: usize,
    outer: &Lane,
    inner: &Lane,
) -> Result<NestedEstimate> {
    if k == 0 {
        return Err(Error::InvalidArgument("inner_replicas must be positive".into()));
    }
    let h = graph.h(a);
    let chain = sample_hn(graph, n, params, &mut outer.stream(0))?;
    let f = vrjp_functional(g, &vec![0.0; graph.n_vertices()]);
    let strategy = strategy_for(&f);
    let zs: Vec<Vec<f64>> = chain.series_vec(|spins| spins.iter().map(|s| s.z).collect());
    let per_outer: Vec<Result<(f64, f64)>> = zs
        .par_iter()
        .enumerate()
        .map(|(i, z)| {
            let ell0: Vec<f64> = z.iter().map(|z| (z - 1.0).max(0.0)).collect();
            let mut buf = Vec::with_capacity(ell0.len());
            let mut acc = Running::new();
            for r in 0..k {
                let mut rng = inner.stream((i * k + r) as u64);
                acc.push(sample_discounted(graph, a, &ell0, h, &f, strategy, &mut rng, &mut buf)?);
            }
            let var = if k > 1 { acc.variance() } else { 0.0 };
            Ok((z[a] * acc.mean, z[a] * z[a] * var / k as f64))
        })
        .collect();
    let mut values = Vec::with_capacity(zs.len());
    let mut inner_var = 0.0;
    for p in per_outer {
        let (v, iv) = p?;
        values.push(v);
        inner_var += iv;
    }
    inner_var /= values.len() as f64;
    let total: Running = values.iter().copied().collect();
    let bm = batch_means(&values, DEFAULT_BATCHES)?;
    let inner_share = if total.variance() > 0.0 { (inner_var / total.variance()).min(1.0) } else { 0.0 };
    Ok(NestedEstimate {
        mean: bm.mean,
        stderr: bm.stderr,
        inner_share,
        outer_samples: values.len(),
        inner_replicas: k,
        mixing: mixing_issue(&values, DEFAULT_BATCHES),
    })
}

/// Inner noise share above which the nested estimator is flagged.
pub const INNER_SHARE_WARNING: f64 = 0.5;

/// The `H^n` isomorphism with the nested right side.
pub fn verify_hn(case: &IsomorphismCase) -> Result<ExperimentReport> {
    case.validate()?;
    let n = match case.model {
        Model::Hn(n) => n,
        Model::H22 => return Err(Error::InvalidArgument("verify_hn needs an H^n model".into())),
    };
    let (mut rep, l_lane, r_lane) = case.report("verify-dynkin");
    let a = case.a;
    let g = case.g.clone();
    let lhs_f = |spins: &[AmbientSpin]| {
        let (y, z) = spins_y0_z(spins);
        g.lhs_value(a, &y, &z)
    };
    let chain = sample_hn(&case.graph, n, &case.budgets.mcmc, &mut l_lane.stream(0))?;
    let series = chain.series(lhs_f);
    let bm = batch_means(&series, DEFAULT_BATCHES)?;
    let sigma = (bm.mean, bm.stderr, mixing_issue(&series, DEFAULT_BATCHES));
    let nested = nested_hn_rhs(&case.graph, n, a, &case.g, &case.budgets.mcmc, case.budgets.inner_replicas, &r_lane, &r_lane.child(7))?;
    let prefix = format!("{}.hn{n}", case.id);
    let mut note = format!("inner replicas {}, inner variance share {:.3}", nested.inner_replicas, nested.inner_share);
    if nested.inner_share > INNER_SHARE_WARNING {
        note.push_str("; inner noise dominates, raise inner_replicas");
        rep.note(format!("{prefix}: inner VRJP noise dominates the nested estimator ({:.2})", nested.inner_share));
    }
    rep.push(
        CheckRecord::new(format!("{prefix}.sigma_vs_nested"), sigma.0, sigma.1, nested.mean, nested.stderr, Criterion::ZScore { max: Z_MAX })
            .inconclusive_if(sigma.2.clone().or(nested.mixing.clone()))
            .with_note(note),
    );
    if case.small() && n == 2 {
        let spec = OracleSpec::default();
        let o = exact_expectation_hn(&case.graph, 2, &lhs_f, &spec)?;
        let z = Criterion::ZScore { max: Z_MAX };
        rep.push(CheckRecord::new(format!("{prefix}.oracle_vs_sigma"), o.value, o.error, sigma.0, sigma.1, z).inconclusive_if(sigma.2));
        rep.push(CheckRecord::new(format!("{prefix}.oracle_vs_nested"), o.value, o.error, nested.mean, nested.stderr, z).inconclusive_if(nested.mixing));
        if g == GSpec::One {
            // Inner integral of g = 1 is exactly 1/h, so the right side is <z_a>/h.
            let za = exact_expectation_hn(&case.graph, 2, &|s: &[AmbientSpin]| s[a].z, &spec)?;
            let h = case.h();
            rep.push(CheckRecord::new(format!("{prefix}.sum_rule_oracle"), o.value, o.error, za.value / h, za.error / h, Criterion::Relative { tol: 1e-6 }));
        }
    }
    Ok(rep)
}
