//! The t-field Markov chain shared by the `H^n` and `H^{2|2}` samplers.
//!
//! In horospherical coordinates both models are Gaussian in `s` given `t`,
//! with precision `D(t)`:
//!
//! ```text
//! (v, D(t) v) = sum_{ij} beta_ij e^{t_i + t_j} (v_i - v_j)^2 + sum_i h_i e^{t_i} v_i^2
//! ```
//!
//! Integrating out `s` leaves a density on `t` of the form
//!
//! ```text
//! exp(-B(t) + tilt * sum_i t_i + det_power * log det D(t)),
//! B(t) = sum_{ij} beta_ij (cosh(t_i - t_j) - 1) + sum_i h_i (cosh t_i - 1).
//! ```
//!
//! For `H^{2|2}` the weight `e^{-sum t} det D` of the full action combines with
//! the Gaussian normalization `det D^{-1/2}` to give `tilt = -1`,
//! `det_power = 1/2`. For `H^n` the Jacobian `e^{(n-1) sum t}` and `n - 1`
//! Gaussian components give `tilt = n - 1`, `det_power = -(n - 1)/2`.
//!
//! The chain alternates single-site Gaussian Metropolis moves with a global
//! shift `t -> t + delta` along the soft zero mode. Each site move refactors
//! only the elimination-tree paths touched by the site.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::{NumericCholesky, SymbolicCholesky, UpdateUndo};
use crate::rng::{normal, uniform};

/// Largest `|t_i|` accepted anywhere; keeps `e^{t_i + t_j}` finite.
pub const T_GUARD: f64 = 300.0;

/// `D_{beta,h}(t)` with its sparse Cholesky factor.
#[derive(Clone, Debug)]
pub struct PrecisionOperator {
    /// `(i, j, beta)` with `i < j`; index = edge index of the factor pattern.
    edges: Vec<(usize, usize, f64)>,
    /// Per vertex: `(neighbour, edge index, beta)` in adjacency order.
    incident: Vec<Vec<(usize, usize, f64)>>,
    h: Vec<f64>,
    t: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
    factor: NumericCholesky,
}

/// Saved state for rejecting a single-site move.
#[derive(Debug)]
pub struct SiteUndo {
    site: usize,
    old_t: f64,
    old_diag: Vec<(usize, f64)>,
    old_off: Vec<(usize, f64)>,
    factor: UpdateUndo,
}

impl PrecisionOperator {
    /// Assemble and factor `D(t)`.
    pub fn assemble(graph: &WeightedGraph, t: &[f64]) -> Result<Self> {
        let edges: Vec<(usize, usize, f64)> = graph.edges().collect();
        let pattern: Vec<(usize, usize)> = edges.iter().map(|&(i, j, _)| (i, j)).collect();
        let sym = SymbolicCholesky::analyse(graph.n_vertices(), &pattern)?;
        Self::with_symbolic(graph, sym, t)
    }

    /// Assemble against a previously analysed pattern (from the same graph).
    pub fn with_symbolic(graph: &WeightedGraph, sym: Arc<SymbolicCholesky>, t: &[f64]) -> Result<Self> {
        let n = graph.n_vertices();
        if t.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: t.len() });
        }
        check_t(t)?;
        let edges: Vec<(usize, usize, f64)> = graph.edges().collect();
        let mut incident = vec![Vec::new(); n];
        for (e, &(i, j, b)) in edges.iter().enumerate() {
            incident[i].push((j, e, b));
            incident[j].push((i, e, b));
        }
        for list in &mut incident {
            list.sort_by_key(|x| x.0);
        }
        let mut op = Self {
            edges,
            incident,
            h: graph.h_values().to_vec(),
            t: t.to_vec(),
            diag: vec![0.0; n],
            off: Vec::new(),
            factor: NumericCholesky::factor(sym.clone(), &vec![1.0; n], &vec![0.0; graph.edges().count()])?,
        };
        op.off = vec![0.0; op.edges.len()];
        op.fill();
        op.factor = NumericCholesky::factor(sym, &op.diag, &op.off).map_err(|e| op.attach_t(e))?;
        Ok(op)
    }

    fn attach_t(&self, e: Error) -> Error {
        match e {
            Error::NotPositiveDefinite { pivot, value, .. } => Error::NotPositiveDefinite { pivot, value, t: self.t.clone() },
            other => other,
        }
    }

    fn diag_value(&self, i: usize) -> f64 {
        let ti = self.t[i];
        let mut d = self.h[i] * ti.exp();
        for &(j, _, b) in &self.incident[i] {
            d += b * (ti + self.t[j]).exp();
        }
        d
    }

    fn off_value(&self, e: usize) -> f64 {
        let (i, j, b) = self.edges[e];
        -b * (self.t[i] + self.t[j]).exp()
    }

    fn fill(&mut self) {
        for i in 0..self.t.len() {
            self.diag[i] = self.diag_value(i);
        }
        for e in 0..self.edges.len() {
            self.off[e] = self.off_value(e);
        }
    }

    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn log_det(&self) -> f64 {
        self.factor.log_det()
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        self.factor.symbolic()
    }

    /// Matrix entry `D_ij`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.incident[i].iter().find(|x| x.0 == j).map_or(0.0, |&(_, e, _)| self.off[e])
    }

    /// Dense row-major copy of `D`.
    pub fn dense(&self) -> Vec<f64> {
        let n = self.n();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = self.diag[i];
        }
        for (e, &(i, j, _)) in self.edges.iter().enumerate() {
            m[i * n + j] = self.off[e];
            m[j * n + i] = self.off[e];
        }
        m
    }

    /// `(v, D v)` from the stored entries.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let mut q: f64 = self.diag.iter().zip(v).map(|(d, x)| d * x * x).sum();
        for (e, &(i, j, _)) in self.edges.iter().enumerate() {
            q += 2.0 * self.off[e] * v[i] * v[j];
        }
        q
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.factor.solve(b)
    }

    /// Column `b` of `D^{-1}`.
    pub fn covariance_column(&self, b: usize) -> Vec<f64> {
        self.factor.inverse_column(b)
    }

    /// Dense row-major `D^{-1}`.
    pub fn covariance_dense(&self) -> Vec<f64> {
        self.factor.inverse_dense()
    }

    /// Exact draw from `N(0, D^{-1})`.
    pub fn sample_gaussian<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.n()).map(|_| normal(rng)).collect();
        self.factor.gaussian_from_standard(&z)
    }

    /// Map standard normals to `N(0, D^{-1})`.
    pub fn gaussian_from_standard(&self, z: &[f64]) -> Vec<f64> {
        self.factor.gaussian_from_standard(z)
    }

    /// Move `t_site` to `value`, refactoring only what changed. On error the
    /// operator is unchanged.
    pub fn set_site(&mut self, site: usize, value: f64) -> Result<SiteUndo> {
        if !(value.abs() <= T_GUARD) {
            return Err(Error::Overflow { vertex: site, value, limit: T_GUARD });
        }
        let old_t = self.t[site];
        self.t[site] = value;
        let mut old_diag = vec![(site, self.diag[site])];
        let mut old_off = Vec::with_capacity(self.incident[site].len());
        let mut changed = vec![site];
        for k in 0..self.incident[site].len() {
            let (j, e, _) = self.incident[site][k];
            old_diag.push((j, self.diag[j]));
            old_off.push((e, self.off[e]));
            changed.push(j);
        }
        for &(v, _) in &old_diag {
            self.diag[v] = self.diag_value(v);
        }
        for &(e, _) in &old_off {
            self.off[e] = self.off_value(e);
        }
        match self.factor.update(&self.diag, &self.off, &changed) {
            Ok(factor) => Ok(SiteUndo { site, old_t, old_diag, old_off, factor }),
            Err(err) => {
                let err = self.attach_t(err);
                self.t[site] = old_t;
                for &(v, d) in &old_diag {
                    self.diag[v] = d;
                }
                for &(e, o) in &old_off {
                    self.off[e] = o;
                }
                Err(err)
            }
        }
    }

    /// Undo a [`set_site`](Self::set_site).
    pub fn revert(&mut self, undo: SiteUndo) {
        self.t[undo.site] = undo.old_t;
        for &(v, d) in &undo.old_diag {
            self.diag[v] = d;
        }
        for &(e, o) in &undo.old_off {
            self.off[e] = o;
        }
        self.factor.rollback(undo.factor);
    }

    /// Replace all of `t` and refactor. On error the operator is unchanged.
    pub fn set_all(&mut self, t: &[f64]) -> Result<()> {
        if t.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: t.len() });
        }
        check_t(t)?;
        let saved = (self.t.clone(), self.diag.clone(), self.off.clone());
        self.t.copy_from_slice(t);
        self.fill();
        match NumericCholesky::factor(self.symbolic().clone(), &self.diag, &self.off) {
            Ok(f) => {
                self.factor = f;
                Ok(())
            }
            Err(e) => {
                let e = self.attach_t(e);
                (self.t, self.diag, self.off) = saved;
                Err(e)
            }
        }
    }

    /// `B_i(t_i)`: the part of `B(t)` involving site `i`, as a function of `value`.
    fn local_b(&self, i: usize, value: f64) -> f64 {
        let mut b = self.h[i] * (value.cosh() - 1.0);
        for &(j, _, beta) in &self.incident[i] {
            b += beta * ((value - self.t[j]).cosh() - 1.0);
        }
        b
    }

    /// `B(t) = sum beta (cosh(t_i - t_j) - 1) + sum h (cosh t_i - 1)`.
    pub fn b_value(&self) -> f64 {
        let mut b: f64 = self.h.iter().zip(&self.t).map(|(h, t)| h * (t.cosh() - 1.0)).sum();
        for &(i, j, beta) in &self.edges {
            b += beta * ((self.t[i] - self.t[j]).cosh() - 1.0);
        }
        b
    }
}

fn check_t(t: &[f64]) -> Result<()> {
    match t.iter().position(|x| !(x.abs() <= T_GUARD)) {
        Some(i) => Err(Error::Overflow { vertex: i, value: t[i], limit: T_GUARD }),
        None => Ok(()),
    }
}

/// The family of t-marginals `exp(-B + tilt sum t + det_power log det D)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTarget {
    pub tilt: f64,
    pub det_power: f64,
}

impl TTarget {
    pub fn h22() -> Self {
        Self { tilt: -1.0, det_power: 0.5 }
    }

    pub fn hn(n: usize) -> Self {
        let m = n as f64 - 1.0;
        Self { tilt: m, det_power: -0.5 * m }
    }

    /// Negative log density (up to the target's normalizing constant).
    pub fn neg_log_density(&self, op: &PrecisionOperator) -> f64 {
        op.b_value() - self.tilt * op.t().iter().sum::<f64>() - self.det_power * op.log_det()
    }
}

/// Sampler settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcParams {
    pub burn_in_sweeps: usize,
    pub samples: usize,
    pub thin: usize,
    pub target_acceptance: f64,
    pub initial_step: f64,
    pub adapt_interval: usize,
    pub global_shift: bool,
}

impl Default for McmcParams {
    fn default() -> Self {
        Self {
            burn_in_sweeps: 10_000,
            samples: 10_000,
            thin: 10,
            target_acceptance: 0.4,
            initial_step: 0.5,
            adapt_interval: 25,
            global_shift: true,
        }
    }
}

impl McmcParams {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.samples == 0 || self.adapt_interval == 0 {
            return Err(Error::InvalidArgument("samples, thin and adapt_interval must be positive".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) || !(self.initial_step > 0.0) {
            return Err(Error::InvalidArgument("target_acceptance in (0,1) and initial_step > 0 required".into()));
        }
        Ok(())
    }
}

/// One row of chain diagnostics, taken at every retained sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepDiag {
    pub sweep: u64,
    pub neg_log_density: f64,
    /// Acceptance fraction of the site moves since the previous retained sample.
    pub acceptance: f64,
    pub t_min: f64,
    pub t_max: f64,
}

/// Post-run summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub sweeps: u64,
    pub site_acceptance: f64,
    pub shift_acceptance: f64,
    pub mean_step: f64,
    pub shift_step: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Counter {
    accepted: u64,
    proposed: u64,
}

impl Counter {
    fn record(&mut self, ok: bool) {
        self.proposed += 1;
        self.accepted += ok as u64;
    }

    fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Metropolis chain on `t` for a [`TTarget`].
#[derive(Clone, Debug)]
pub struct TChain {
    target: TTarget,
    op: PrecisionOperator,
    steps: Vec<f64>,
    shift_step: f64,
    site_window: Vec<Counter>,
    shift_window: Counter,
    site_total: Counter,
    shift_total: Counter,
    frozen: bool,
    sweeps: u64,
    global_shift: bool,
}

impl TChain {
    /// Start at `t = 0`.
    pub fn new(graph: &WeightedGraph, target: TTarget, params: &McmcParams) -> Result<Self> {
        graph.require_pinning()?;
        params.validate()?;
        let n = graph.n_vertices();
        let op = PrecisionOperator::assemble(graph, &vec![0.0; n])?;
        Ok(Self {
            target,
            op,
            steps: vec![params.initial_step; n],
            shift_step: params.initial_step / (n as f64).sqrt().max(1.0),
            site_window: vec![Counter::default(); n],
            shift_window: Counter::default(),
            site_total: Counter::default(),
            shift_total: Counter::default(),
            frozen: false,
            sweeps: 0,
            global_shift: params.global_shift,
        })
    }

    pub fn op(&self) -> &PrecisionOperator {
        &self.op
    }

    pub fn t(&self) -> &[f64] {
        self.op.t()
    }

    pub fn target(&self) -> TTarget {
        self.target
    }

    pub fn neg_log_density(&self) -> f64 {
        self.target.neg_log_density(&self.op)
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    fn site_move<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) -> Result<bool> {
        let old = self.op.t[i];
        let new = old + self.steps[i] * normal(rng);
        let log_u = uniform(rng).ln();
        if !(new.abs() <= T_GUARD) {
            return Ok(false);
        }
        let b_old = self.op.local_b(i, old);
        let b_new = self.op.local_b(i, new);
        let ld_old = self.op.log_det();
        let undo = self.op.set_site(i, new)?;
        let delta = (b_new - b_old) - self.target.tilt * (new - old) - self.target.det_power * (self.op.log_det() - ld_old);
        if log_u < -delta {
            Ok(true)
        } else {
            self.op.revert(undo);
            Ok(false)
        }
    }

    fn shift_move<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<bool> {
        let delta_t = self.shift_step * normal(rng);
        let log_u = uniform(rng).ln();
        let proposal: Vec<f64> = self.op.t.iter().map(|t| t + delta_t).collect();
        if proposal.iter().any(|t| !(t.abs() <= T_GUARD)) {
            return Ok(false);
        }
        let before = self.neg_log_density();
        let saved = self.op.clone();
        self.op.set_all(&proposal)?;
        let after = self.neg_log_density();
        if log_u < before - after {
            Ok(true)
        } else {
            self.op = saved;
            Ok(false)
        }
    }

    /// One sweep: every site in order, then the global shift.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for i in 0..self.op.n() {
            let ok = self.site_move(i, rng)?;
            self.site_window[i].record(ok);
            self.site_total.record(ok);
        }
        if self.global_shift {
            let ok = self.shift_move(rng)?;
            self.shift_window.record(ok);
            self.shift_total.record(ok);
        }
        self.sweeps += 1;
        let nld = self.neg_log_density();
        if !nld.is_finite() {
            let (vertex, value) = self
                .op
                .t
                .iter()
                .copied()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap_or((0, f64::NAN));
            return Err(Error::Overflow { vertex, value, limit: T_GUARD });
        }
        Ok(())
    }

    fn adapt(&mut self, target: f64) {
        for (step, w) in self.steps.iter_mut().zip(&mut self.site_window) {
            *step = (*step * (1.5 * (w.rate() - target)).exp()).clamp(1e-3, 20.0);
            *w = Counter::default();
        }
        if self.global_shift {
            self.shift_step = (self.shift_step * (1.5 * (self.shift_window.rate() - target)).exp()).clamp(1e-4, 20.0);
            self.shift_window = Counter::default();
        }
    }

    /// Burn-in with step-size adaptation; steps are frozen afterwards.
    pub fn burn_in<R: Rng + ?Sized>(&mut self, params: &McmcParams, rng: &mut R) -> Result<()> {
        for k in 1..=params.burn_in_sweeps {
            self.sweep(rng)?;
            if !self.frozen && k % params.adapt_interval == 0 {
                self.adapt(params.target_acceptance);
            }
        }
        self.frozen = true;
        self.site_total = Counter::default();
        self.shift_total = Counter::default();
        Ok(())
    }

    /// Burn in, then call `visit` on every `thin`-th sweep until
    /// `params.samples` states have been visited.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        params: &McmcParams,
        rng: &mut R,
        mut visit: impl FnMut(&TChain, &SweepDiag, &mut R) -> Result<()>,
    ) -> Result<ChainSummary> {
        self.burn_in(params, rng)?;
        for _ in 0..params.samples {
            let before = self.site_total;
            for _ in 0..params.thin {
                self.sweep(rng)?;
            }
            let window = Counter {
                accepted: self.site_total.accepted - before.accepted,
                proposed: self.site_total.proposed - before.proposed,
            };
            let t = self.op.t();
            let diag = SweepDiag {
                sweep: self.sweeps,
                neg_log_density: self.neg_log_density(),
                acceptance: window.rate(),
                t_min: t.iter().copied().fold(f64::INFINITY, f64::min),
                t_max: t.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            };
            visit(self, &diag, rng)?;
        }
        Ok(self.summary())
    }

    pub fn summary(&self) -> ChainSummary {
        ChainSummary {
            sweeps: self.sweeps,
            site_acceptance: self.site_total.rate(),
            shift_acceptance: self.shift_total.rate(),
            mean_step: self.steps.iter().sum::<f64>() / self.steps.len() as f64,
            shift_step: self.shift_step,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{module, Lane};

    fn ring(n: usize, beta: f64, h: f64) -> WeightedGraph {
        let edges: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, (i + 1) % n, beta)).collect();
        WeightedGraph::new(n, &edges, vec![h; n]).unwrap()
    }

    #[test]
    fn assemble_two_vertex() {
        let g = WeightedGraph::two_vertex(1.0, 1.0).unwrap();
        let op = PrecisionOperator::assemble(&g, &[0.0, 0.0]).unwrap();
        assert_eq!(op.dense(), vec![2.0, -1.0, -1.0, 2.0]);
        assert!((op.log_det() - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn site_updates_match_full_assembly_bitwise() {
        let g = ring(7, 0.8, 0.3);
        let mut op = PrecisionOperator::assemble(&g, &[0.0; 7]).unwrap();
        let mut rng = Lane::new(1, module::TEST, 0).stream(0);
        for k in 0..60 {
            let i = k % 7;
            let v = op.t()[i] + normal(&mut rng);
            let undo = op.set_site(i, v).unwrap();
            if k % 3 == 0 {
                op.revert(undo);
            }
            let fresh = PrecisionOperator::assemble(&g, op.t()).unwrap();
            assert_eq!(fresh.log_det().to_bits(), op.log_det().to_bits());
            assert_eq!(fresh.dense(), op.dense());
        }
    }

    #[test]
    fn guard_rejects_huge_t() {
        let g = WeightedGraph::single_vertex(1.0).unwrap();
        assert!(matches!(PrecisionOperator::assemble(&g, &[1e3]), Err(Error::Overflow { .. })));
        let mut op = PrecisionOperator::assemble(&g, &[0.0]).unwrap();
        assert!(op.set_site(0, f64::NAN).is_err());
        assert_eq!(op.t(), &[0.0]);
    }

    #[test]
    fn chain_requires_pinning() {
        let g = WeightedGraph::path(3, 1.0, 0.0).unwrap();
        assert!(TChain::new(&g, TTarget::h22(), &McmcParams::default()).is_err());
    }

    #[test]
    fn single_site_h22_marginal_mean_of_exp_t() {
        // Single vertex H22 marginal: p(t) ~ exp(-h(cosh t - 1) - t/2) sqrt(h); E[e^t] = 1.
        let g = WeightedGraph::single_vertex(1.0).unwrap();
        let params = McmcParams { burn_in_sweeps: 500, samples: 40_000, thin: 2, ..McmcParams::default() };
        let mut chain = TChain::new(&g, TTarget::h22(), &params).unwrap();
        let mut rng = Lane::new(2, module::TEST, 0).stream(0);
        let mut series = Vec::new();
        chain
            .run(&params, &mut rng, |c, _, _| {
                series.push(c.t()[0].exp());
                Ok(())
            })
            .unwrap();
        let bm = crate::stats::batch_means(&series, 100).unwrap();
        assert!((bm.mean - 1.0).abs() < 4.0 * bm.stderr, "{} +- {}", bm.mean, bm.stderr);
        let s = chain.summary();
        assert!(s.site_acceptance > 0.25 && s.site_acceptance < 0.55, "{s:?}");
    }
}
