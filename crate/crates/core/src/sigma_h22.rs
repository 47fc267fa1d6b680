//! The `H^{2|2}` model as a probability measure on real horospherical
//! coordinates `(s, t)`, with density `e^{-H~(s, t)}` where
//!
//! ```text
//! H~ = sum_{ij} beta_ij (cosh(t_i - t_j) - 1 + (s_i - s_j)^2 e^{t_i + t_j} / 2)
//!    + sum_i h_i (cosh t_i - 1 + s_i^2 e^{t_i} / 2)
//!    + sum_i (t_i + log 2 pi) - log det D(t).
//! ```
//!
//! The fermions have been integrated out into `det D(t)`. Given `t`, `s` is
//! exactly `N(0, D(t)^{-1})`; integrating it out gives the t-marginal
//!
//! ```text
//! -log p(t) = B(t) + sum_i t_i - log det D(t) / 2 + (N / 2) log 2 pi,
//! ```
//!
//! which is what the chain samples. `y_i = e^{t_i} s_i`, so the two-point
//! function has the Rao-Blackwellized form
//! `<y_a y_b> = <e^{t_a + t_b} (D(t)^{-1})_{ab}>`.
//!
//! # Exact sampling
//!
//! Write `D(t) = e^{t} H e^{t}` (diagonal `e^{t}`). Then `H` has off-diagonal
//! entries `-beta_ij`, `H e^{t} = h`, and `y | t ~ N(0, H^{-1})`. Under the
//! t-marginal the diagonal of `H` is a random potential whose law keeps its
//! form when a vertex is eliminated: the Schur complement on the remaining
//! vertices is again such an operator, with weights and field updated by the
//! elimination. The pivot of a single vertex with total outgoing weight plus
//! field `eta_hat` is `eta_hat / X` with `X ~ IG(1, eta_hat)`. So a sparse
//! Cholesky factorization that draws each pivot in turn yields an exact,
//! independent sample of `H`, hence of `t = log(H^{-1} h)` and of `y`
//! ([`ExactH22Sampler`]).

use std::f64::consts::TAU;

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, InverseGaussian};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::{NumericCholesky, SymbolicCholesky};
use crate::rng::normal;
use crate::oracle::{OracleSpec, OracleValue, Point, Problem};
use crate::stats::{batch_means, BatchMeans, DEFAULT_BATCHES};
pub use crate::tchain::{ChainSummary, McmcParams, PrecisionOperator, SweepDiag, T_GUARD};
use crate::tchain::{TChain, TTarget};

/// A point `(t, s)` of the real `H^{2|2}` measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H22Config {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
}

impl H22Config {
    pub fn validate(&self, n: usize) -> Result<()> {
        for v in [&self.t, &self.s] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: v.len() });
            }
        }
        if let Some((i, &x)) = self.t.iter().enumerate().find(|(_, x)| !(x.abs() <= 700.0)) {
            return Err(Error::Overflow { vertex: i, value: x, limit: 700.0 });
        }
        if self.s.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("s must be finite".into()));
        }
        Ok(())
    }

    pub fn y(&self) -> Vec<f64> {
        self.t.iter().zip(&self.s).map(|(t, s)| t.exp() * s).collect()
    }
}

/// Assemble and factor `D_{beta,h}(t)`.
pub fn assemble_d(graph: &WeightedGraph, t: &[f64]) -> Result<PrecisionOperator> {
    graph.require_pinning()?;
    PrecisionOperator::assemble(graph, t)
}

/// `H~(s, t)`.
pub fn horo_action(graph: &WeightedGraph, config: &H22Config) -> Result<f64> {
    config.validate(graph.n_vertices())?;
    let op = assemble_d(graph, &config.t)?;
    let (t, s) = (&config.t, &config.s);
    let mut a = 0.0;
    for (i, j, b) in graph.edges() {
        let ds = s[i] - s[j];
        a += b * ((t[i] - t[j]).cosh() - 1.0 + 0.5 * ds * ds * (t[i] + t[j]).exp());
    }
    for i in 0..t.len() {
        a += graph.h(i) * (t[i].cosh() - 1.0 + 0.5 * s[i] * s[i] * t[i].exp());
        a += t[i] + TAU.ln();
    }
    Ok(a - op.log_det())
}

/// Normalized `-log p(t)` of the t-marginal.
pub fn t_marginal_neg_log_density(graph: &WeightedGraph, t: &[f64]) -> Result<f64> {
    let op = assemble_d(graph, t)?;
    Ok(TTarget::h22().neg_log_density(&op) + 0.5 * t.len() as f64 * TAU.ln())
}

/// Stored output of [`sample_h22`].
#[derive(Clone, Debug)]
pub struct H22Chain {
    pub graph: WeightedGraph,
    pub params: McmcParams,
    pub t_samples: Vec<Vec<f64>>,
    /// Exact Gaussian `s` draws given each stored `t`, when requested.
    pub s_samples: Option<Vec<Vec<f64>>>,
    pub diagnostics: Vec<SweepDiag>,
    pub summary: ChainSummary,
}

/// Run the t-marginal chain, storing every retained `t` and optionally an
/// exact `s | t` draw.
pub fn sample_h22<R: Rng + ?Sized>(graph: &WeightedGraph, params: &McmcParams, draw_s: bool, rng: &mut R) -> Result<H22Chain> {
    let mut chain = TChain::new(graph, TTarget::h22(), params)?;
    let mut t_samples = Vec::with_capacity(params.samples);
    let mut s_samples = Vec::new();
    let mut diagnostics = Vec::with_capacity(params.samples);
    let summary = chain.run(params, rng, |c, d, rng| {
        t_samples.push(c.t().to_vec());
        if draw_s {
            s_samples.push(c.op().sample_gaussian(rng));
        }
        diagnostics.push(*d);
        Ok(())
    })?;
    Ok(H22Chain {
        graph: graph.clone(),
        params: params.clone(),
        t_samples,
        s_samples: draw_s.then_some(s_samples),
        diagnostics,
        summary,
    })
}

/// Independent exact draws of the t-marginal (see the module docs).
#[derive(Clone, Debug)]
pub struct ExactH22Sampler {
    sym: Arc<SymbolicCholesky>,
    off: Vec<f64>,
    h: Vec<f64>,
}

/// One exact draw: `t` and the factor of `H = e^{-t} D(t) e^{-t}`.
#[derive(Clone, Debug)]
pub struct ExactH22Draw {
    pub t: Vec<f64>,
    pub h_factor: NumericCholesky,
}

impl ExactH22Sampler {
    pub fn new(graph: &WeightedGraph) -> Result<Self> {
        graph.require_pinning()?;
        let edges: Vec<(usize, usize, f64)> = graph.edges().collect();
        let pattern: Vec<(usize, usize)> = edges.iter().map(|&(i, j, _)| (i, j)).collect();
        let sym = SymbolicCholesky::analyse(graph.n_vertices(), &pattern)?;
        Ok(Self { sym, off: edges.iter().map(|e| -e.2).collect(), h: graph.h_values().to_vec() })
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ExactH22Draw> {
        let (h_factor, _) = NumericCholesky::factor_drawing_pivots(self.sym.clone(), &self.off, &self.h, |eta_hat| {
            let ig = InverseGaussian::new(1.0, eta_hat)
                .map_err(|e| Error::InvalidArgument(format!("pivot field {eta_hat}: {e}")))?;
            Ok(eta_hat / ig.sample(rng))
        })?;
        let psi = h_factor.solve(&self.h);
        if let Some((i, &p)) = psi.iter().enumerate().find(|(_, p)| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::Overflow { vertex: i, value: p, limit: f64::MAX });
        }
        Ok(ExactH22Draw { t: psi.iter().map(|p| p.ln()).collect(), h_factor })
    }
}

impl ExactH22Draw {
    /// `y ~ N(0, H^{-1})` given this `t`.
    pub fn sample_y<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.t.len()).map(|_| normal(rng)).collect();
        self.h_factor.gaussian_from_standard(&z)
    }

    /// `s = e^{-t} y`, distributed as `N(0, D(t)^{-1})`.
    pub fn sample_s<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_y(rng).iter().zip(&self.t).map(|(y, t)| y * (-t).exp()).collect()
    }

    /// `<y_a y_b | t> = (H^{-1})_{ab}`.
    pub fn covariance(&self, a: usize, b: usize) -> f64 {
        self.h_factor.inverse_column(b)[a]
    }
}

/// Two-point estimators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TwoPointEstimator {
    /// `e^{t_a + t_b} (D(t)^{-1})_{ab}` per stored `t`.
    RaoBlackwell,
    /// `e^{t_a + t_b} s_a s_b` per stored `(t, s)`.
    Plain,
}

impl H22Chain {
    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.graph.n_vertices() {
            Err(Error::InvalidArgument(format!("vertex {v} out of range")))
        } else {
            Ok(())
        }
    }

    /// Apply `f(t, D(t))` to every stored sample.
    pub fn map_operator<T>(&self, mut f: impl FnMut(&[f64], &PrecisionOperator) -> T) -> Result<Vec<T>> {
        let mut op = assemble_d(&self.graph, &vec![0.0; self.graph.n_vertices()])?;
        self.t_samples
            .iter()
            .map(|t| {
                op.set_all(t)?;
                Ok(f(t, &op))
            })
            .collect()
    }

    /// Per-sample values of the chosen two-point estimator.
    pub fn two_point_series(&self, a: usize, b: usize, estimator: TwoPointEstimator) -> Result<Vec<f64>> {
        self.check_vertex(a)?;
        self.check_vertex(b)?;
        match estimator {
            TwoPointEstimator::RaoBlackwell => {
                self.map_operator(|t, op| (t[a] + t[b]).exp() * op.covariance_column(b)[a])
            }
            TwoPointEstimator::Plain => {
                let s = self
                    .s_samples
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("chain was sampled without s draws".into()))?;
                Ok(self.t_samples.iter().zip(s).map(|(t, s)| (t[a] + t[b]).exp() * s[a] * s[b]).collect())
            }
        }
    }
}

/// `<y_a y_b>` with batch-means error over [`DEFAULT_BATCHES`] batches.
pub fn estimate_two_point(chain: &H22Chain, a: usize, b: usize, estimator: TwoPointEstimator) -> Result<BatchMeans> {
    let series = chain.two_point_series(a, b, estimator)?;
    batch_means(&series, DEFAULT_BATCHES)
}

/// One Ward-identity comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WardEntry {
    /// `"exp_t"` for `<e^{t_j}> = 1`, `"exp_tt"` for `<e^{t_j+t_l}> = 1 + <y_j y_l>`.
    pub identity: String,
    pub j: usize,
    pub l: usize,
    /// Batch mean of (left side - right side) and its standard error.
    pub residual: f64,
    pub stderr: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WardReport {
    pub entries: Vec<WardEntry>,
    pub max_abs_z: f64,
    pub pass: bool,
}

/// Number of pairs checked on graphs with more than 16 vertices.
pub const WARD_PAIR_SAMPLE: usize = 64;

/// Check `<e^{t_j}> = 1` at every vertex and
/// `<e^{t_j + t_l}> = 1 + <y_j y_l>` for all pairs (a deterministic
/// subsample of pairs above 16 vertices). The second identity is tested as
/// `<e^{t_j + t_l} (1 - (D^{-1})_{jl})> = 1`. Pass when every `|z| < 4`.
pub fn ward_check(chain: &H22Chain) -> Result<WardReport> {
    let n = chain.graph.n_vertices();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    if n <= 16 {
        for j in 0..n {
            for l in j..n {
                pairs.push((j, l));
            }
        }
    } else {
        let total = n * (n + 1) / 2;
        let stride = (total / WARD_PAIR_SAMPLE).max(1);
        let mut k = 0;
        for j in 0..n {
            for l in j..n {
                if k % stride == 0 && pairs.len() < WARD_PAIR_SAMPLE {
                    pairs.push((j, l));
                }
                k += 1;
            }
        }
    }
    let per_sample: Vec<(Vec<f64>, Vec<f64>)> = chain.map_operator(|t, op| {
        let exp_t: Vec<f64> = t.iter().map(|x| x.exp() - 1.0).collect();
        let mut cov_cols: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut tt = Vec::with_capacity(pairs.len());
        for &(j, l) in &pairs {
            let col = cov_cols[l].get_or_insert_with(|| op.covariance_column(l));
            tt.push((t[j] + t[l]).exp() * (1.0 - col[j]) - 1.0);
        }
        (exp_t, tt)
    })?;
    let mut entries = Vec::new();
    let mut push = |identity: &str, j, l, series: Vec<f64>| -> Result<()> {
        let bm = batch_means(&series, DEFAULT_BATCHES)?;
        let z = if bm.stderr > 0.0 { bm.mean / bm.stderr } else if bm.mean == 0.0 { 0.0 } else { f64::INFINITY };
        entries.push(WardEntry { identity: identity.into(), j, l, residual: bm.mean, stderr: bm.stderr, z });
        Ok(())
    };
    for j in 0..n {
        push("exp_t", j, j, per_sample.iter().map(|p| p.0[j]).collect())?;
    }
    for (k, &(j, l)) in pairs.iter().enumerate() {
        push("exp_tt", j, l, per_sample.iter().map(|p| p.1[k]).collect())?;
    }
    let max_abs_z = entries.iter().map(|e| e.z.abs()).fold(0.0, f64::max);
    Ok(WardReport { entries, max_abs_z, pass: max_abs_z < 4.0 })
}

/// `int F(t, s) e^{-H~} dt ds` by deterministic quadrature on graphs with at
/// most two vertices. Not normalized: `F = 1` returns the total mass, which
/// is 1. Observables must grow more slowly than the Gaussian confinement in
/// `s` (at most polynomial times `e^{a z}` with `a < h_min`); mass found at
/// the edge of the `t` box is reported as [`Error::Envelope`].
pub fn exact_expectation_h22(graph: &WeightedGraph, f: &dyn Fn(&[f64], &[f64]) -> f64, spec: &OracleSpec) -> Result<OracleValue> {
    let n = graph.n_vertices();
    if n > 2 {
        return Err(Error::InvalidArgument(format!("quadrature oracle supports at most 2 vertices, got {n}")));
    }
    graph.require_pinning()?;
    let problem = Problem { graph, target: TTarget::h22(), components: 1 };
    let prefactor = TAU.powf(-0.5 * n as f64);
    problem.integrate(spec, &|p: &Point| f(p.t, p.s), false, prefactor)
}

/// `y_a y_b` as an observable of `(t, s)`.
pub fn yy(a: usize, b: usize) -> impl Fn(&[f64], &[f64]) -> f64 {
    move |t, s| (t[a] + t[b]).exp() * s[a] * s[b]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{gauss_hermite, trapezoid};
    use crate::rng::{module, Lane};

    #[test]
    fn assemble_examples() {
        let g = WeightedGraph::single_vertex(2.0).unwrap();
        assert_eq!(assemble_d(&g, &[0.0]).unwrap().dense(), vec![2.0]);
        let g0 = WeightedGraph::path(2, 1.0, 0.0).unwrap();
        assert!(assemble_d(&g0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn action_at_origin() {
        let g = WeightedGraph::single_vertex(1.0).unwrap();
        let a = horo_action(&g, &H22Config { t: vec![0.0], s: vec![0.0] }).unwrap();
        assert!((a - TAU.ln()).abs() < 1e-15);
    }

    #[test]
    fn action_under_constant_shift() {
        // Shifting t by c at s = 0 only changes the cosh terms, sum t and log det.
        let g = WeightedGraph::two_vertex(0.7, 0.4).unwrap();
        let t = vec![0.3, -0.8];
        let c = 0.9;
        let base = horo_action(&g, &H22Config { t: t.clone(), s: vec![0.0; 2] }).unwrap();
        let shifted_t: Vec<f64> = t.iter().map(|x| x + c).collect();
        let shifted = horo_action(&g, &H22Config { t: shifted_t.clone(), s: vec![0.0; 2] }).unwrap();
        let ld = |t: &[f64]| assemble_d(&g, t).unwrap().log_det();
        let expected = 0.4 * ((shifted_t[0].cosh() + shifted_t[1].cosh()) - (t[0].cosh() + t[1].cosh())) + 2.0 * c
            - (ld(&shifted_t) - ld(&t));
        assert!((shifted - base - expected).abs() < 1e-12);
    }

    #[test]
    fn marginal_is_the_s_integral_of_the_action() {
        // Direct 2-D quadrature of e^{-H~} against the 1-D marginal, single vertex.
        let g = WeightedGraph::single_vertex(1.0).unwrap();
        let tr = trapezoid(-7.0, 7.0, 700);
        let gh = gauss_hermite(10);
        let mut total = 0.0;
        for (&t, &wt) in tr.nodes.iter().zip(&tr.weights) {
            let marginal = (-t_marginal_neg_log_density(&g, &[t]).unwrap()).exp();
            // s ~ N(0, 1/(h e^t)): int e^{-H~} ds = marginal.
            let sd = (-t).exp().sqrt();
            let via_s = gh.integrate(|z| {
                let s = sd * z;
                let jac = sd * TAU.sqrt() * (0.5 * z * z).exp();
                (-horo_action(&g, &H22Config { t: vec![t], s: vec![s] }).unwrap()).exp() * jac
            });
            assert!((via_s - marginal).abs() < 1e-12 * marginal.max(1e-300));
            total += wt * marginal;
        }
        assert!((total - 1.0).abs() < 1e-10, "{total}");
    }

    #[test]
    fn marginal_factorizes_without_coupling() {
        let g2 = WeightedGraph::two_vertex(0.0, 0.6).unwrap();
        let g1 = WeightedGraph::single_vertex(0.6).unwrap();
        let t = [0.4, -1.1];
        let joint = t_marginal_neg_log_density(&g2, &t).unwrap();
        let prod = t_marginal_neg_log_density(&g1, &t[..1]).unwrap() + t_marginal_neg_log_density(&g1, &t[1..]).unwrap();
        assert!((joint - prod).abs() < 1e-10);
    }

    #[test]
    fn oracle_normalization_and_ward() {
        let g = WeightedGraph::two_vertex(1.0, 1.0).unwrap();
        let spec = OracleSpec::default();
        let one = exact_expectation_h22(&g, &|_, _| 1.0, &spec).unwrap();
        assert!((one.value - 1.0).abs() < 1e-8, "{one:?}");
        let et = exact_expectation_h22(&g, &|t, _| t[0].exp(), &spec).unwrap();
        assert!((et.value - 1.0).abs() < 1e-8, "{et:?}");
    }

    #[test]
    fn oracle_single_vertex_two_point() {
        let g = WeightedGraph::single_vertex(0.5).unwrap();
        let v = exact_expectation_h22(&g, &yy(0, 0), &OracleSpec::default()).unwrap();
        assert!((v.value - 2.0).abs() < 1e-8, "{v:?}");
    }

    #[test]
    fn oracle_sum_rule_two_vertices() {
        let g = WeightedGraph::two_vertex(1.0, 1.0).unwrap();
        let spec = OracleSpec::default();
        let aa = exact_expectation_h22(&g, &yy(0, 0), &spec).unwrap();
        let ab = exact_expectation_h22(&g, &yy(0, 1), &spec).unwrap();
        eprintln!("yy00 = {:.12} yy01 = {:.12} levels {}", aa.value, ab.value, ab.levels);
        assert!((aa.value + ab.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn oracle_rejects_runaway_observable() {
        let g = WeightedGraph::single_vertex(1.0).unwrap();
        let r = exact_expectation_h22(&g, &|t, _| (3.0 * t[0].cosh()).exp(), &OracleSpec::default());
        assert!(r.is_err());
    }

    #[test]
    fn rb_and_plain_agree_single_vertex() {
        let g = WeightedGraph::single_vertex(1.0).unwrap();
        let params = McmcParams { burn_in_sweeps: 500, samples: 20_000, thin: 2, ..McmcParams::default() };
        let mut rng = Lane::new(5, module::TEST, 0).stream(0);
        let chain = sample_h22(&g, &params, true, &mut rng).unwrap();
        let rb = estimate_two_point(&chain, 0, 0, TwoPointEstimator::RaoBlackwell).unwrap();
        let plain = estimate_two_point(&chain, 0, 0, TwoPointEstimator::Plain).unwrap();
        assert!((rb.mean - 1.0).abs() < 4.0 * rb.stderr, "{rb:?}");
        assert!((plain.mean - 1.0).abs() < 4.0 * plain.stderr);
        assert!(rb.stderr < plain.stderr);
    }
}
