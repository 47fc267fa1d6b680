//! Exact event-driven simulation of the vertex-reinforced jump process and
//! estimators of discounted functionals `int_0^inf E[g(X_t, L_t)] e^{-ht} dt`.
//!
//! While the walk sits at `i` only `L^i` grows, and no jump rate out of `i`
//! depends on `L^i` (there are no self-loops). The total exit rate
//! `R = sum_j beta_ij (1 + L^j)` is therefore constant over a holding
//! interval, so holding times are exactly exponential and the destination is
//! drawn with probabilities `beta_ij (1 + L^j) / R`. There is no thinning
//! and no time discretisation.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::rng::{exp1, uniform, Lane};
use crate::stats::{Estimate, Running};

/// Per-vertex local times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTimes(pub Vec<f64>);

impl LocalTimes {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.0.len() });
        }
        if let Some(v) = self.0.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("initial local time {v} must be finite and >= 0")));
        }
        Ok(())
    }
}

/// A realised path on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub jump_times: Vec<f64>,
    /// `states[k]` is occupied on `[jump_times[k-1], jump_times[k])`.
    pub states: Vec<usize>,
    pub initial_local_times: LocalTimes,
    pub final_local_times: LocalTimes,
    pub horizon: f64,
}

impl Trajectory {
    /// Holding intervals `(vertex, start, end)` covering `[0, horizon]`.
    pub fn holding_intervals(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.states.iter().enumerate().map(move |(k, &v)| {
            let start = if k == 0 { 0.0 } else { self.jump_times[k - 1] };
            let end = self.jump_times.get(k).copied().unwrap_or(self.horizon);
            (v, start, end)
        })
    }

    /// Check the structural invariants against the graph that produced it.
    pub fn check(&self, graph: &WeightedGraph) -> Result<()> {
        if self.states.len() != self.jump_times.len() + 1 {
            return Err(Error::InvalidArgument("states must be one longer than jump_times".into()));
        }
        let mut prev = 0.0;
        for &t in &self.jump_times {
            if !(t > prev) || t > self.horizon {
                return Err(Error::InvalidArgument(format!("jump times not strictly increasing at {t}")));
            }
            prev = t;
        }
        for w in self.states.windows(2) {
            if w[0] == w[1] || graph.beta(w[0], w[1]) <= 0.0 {
                return Err(Error::InvalidArgument(format!("illegal jump {} -> {}", w[0], w[1])));
            }
        }
        let gained = self.final_local_times.total() - self.initial_local_times.total();
        if (gained - self.horizon).abs() > 1e-12 * self.horizon.max(1.0) {
            return Err(Error::InvalidArgument(format!("time not conserved: {gained} vs {}", self.horizon)));
        }
        Ok(())
    }
}

/// Run the walk from `start` with local times `ell` (updated in place) up to
/// `horizon`, reporting every holding interval `(vertex, t0, t1, ell at t0)`.
/// Returns the final vertex.
fn run_walk<R: Rng + ?Sized>(
    graph: &WeightedGraph,
    start: usize,
    ell: &mut [f64],
    horizon: f64,
    rng: &mut R,
    mut visit: impl FnMut(usize, f64, f64, &[f64]),
) -> usize {
    let mut t = 0.0;
    let mut at = start;
    loop {
        let nbrs = graph.neighbors(at);
        let rate: f64 = nbrs.iter().map(|&(j, b)| b * (1.0 + ell[j])).sum();
        let hold = if rate > 0.0 { exp1(rng) / rate } else { f64::INFINITY };
        let t_next = t + hold;
        if t_next >= horizon {
            visit(at, t, horizon, ell);
            ell[at] += horizon - t;
            return at;
        }
        debug_assert!(t_next > t, "jump times must be strictly increasing");
        visit(at, t, t_next, ell);
        ell[at] += hold;
        t = t_next;
        let target = uniform(rng) * rate;
        let mut acc = 0.0;
        let mut next = nbrs[nbrs.len() - 1].0;
        for &(j, b) in nbrs {
            acc += b * (1.0 + ell[j]);
            if target < acc {
                next = j;
                break;
            }
        }
        at = next;
    }
}

fn check_start(graph: &WeightedGraph, start: usize, ell0: &LocalTimes) -> Result<()> {
    if start >= graph.n_vertices() {
        return Err(Error::InvalidArgument(format!("start vertex {start} out of range")));
    }
    ell0.validate(graph.n_vertices())
}

/// Exact sample of `(X_t, L_t)` on `[0, horizon]`.
pub fn simulate<R: Rng + ?Sized>(graph: &WeightedGraph, start: usize, ell0: &LocalTimes, horizon: f64, rng: &mut R) -> Result<Trajectory> {
    check_start(graph, start, ell0)?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be finite and positive")));
    }
    let mut ell = ell0.0.clone();
    let mut jump_times = Vec::new();
    let mut states = vec![start];
    run_walk(graph, start, &mut ell, horizon, rng, |v, t0, _t1, _| {
        if t0 > 0.0 {
            jump_times.push(t0);
            states.push(v);
        }
    });
    Ok(Trajectory { jump_times, states, initial_local_times: ell0.clone(), final_local_times: LocalTimes(ell), horizon })
}

/// `int 1{X_t = b} e^{-ht} dt` over the trajectory's span, in closed form per
/// holding interval.
pub fn discounted_occupation(traj: &Trajectory, b: usize, h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("h = {h} must be positive")));
    }
    Ok(traj
        .holding_intervals()
        .filter(|&(v, _, _)| v == b)
        .map(|(_, t0, t1)| discount_integral(h, t0, t1))
        .sum())
}

/// `int_{t0}^{t1} e^{-ht} dt`, accurate for short intervals; `t1 = inf` allowed.
fn discount_integral(h: f64, t0: f64, t1: f64) -> f64 {
    (-h * t0).exp() * -(-(h * (t1 - t0))).exp_m1() / h
}

/// Functionals `g(b, l)` of position and local times.
#[derive(Clone)]
pub enum Functional {
    /// `g = c`.
    Constant(f64),
    /// `g(b, l) = w_b`.
    VertexWeights(Vec<f64>),
    /// `g(b, l) = 1{b = target} exp(-<decay, l>)` with `decay >= 0`.
    ExpLocalTime { target: usize, decay: Vec<f64> },
    /// Arbitrary bounded functional; only the killing-time estimator applies.
    Custom { g: Arc<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>, sup_norm: f64 },
}

impl std::fmt::Debug for Functional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::VertexWeights(w) => write!(f, "VertexWeights({w:?})"),
            Self::ExpLocalTime { target, decay } => write!(f, "ExpLocalTime {{ target: {target}, decay: {decay:?} }}"),
            Self::Custom { sup_norm, .. } => write!(f, "Custom {{ sup_norm: {sup_norm} }}"),
        }
    }
}

impl Functional {
    pub fn indicator(target: usize, n: usize) -> Self {
        let mut w = vec![0.0; n];
        w[target] = 1.0;
        Self::VertexWeights(w)
    }

    pub fn eval(&self, b: usize, ell: &[f64]) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::VertexWeights(w) => w[b],
            Self::ExpLocalTime { target, decay } => {
                if b == *target {
                    (-decay.iter().zip(ell).map(|(c, l)| c * l).sum::<f64>()).exp()
                } else {
                    0.0
                }
            }
            Self::Custom { g, .. } => g(b, ell),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            Self::Constant(c) => c.abs(),
            Self::VertexWeights(w) => w.iter().fold(0.0, |m, x| m.max(x.abs())),
            Self::ExpLocalTime { .. } => 1.0,
            Self::Custom { sup_norm, .. } => *sup_norm,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Self::VertexWeights(w) if w.len() != n => Err(Error::DimensionMismatch { expected: n, got: w.len() }),
            Self::ExpLocalTime { target, decay } => {
                if *target >= n || decay.len() != n {
                    Err(Error::InvalidArgument("ExpLocalTime target/decay do not match graph".into()))
                } else if decay.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
                    Err(Error::InvalidArgument("ExpLocalTime decay must be finite and >= 0".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// `int_{t0}^{t1} g(b, l(t)) e^{-ht} dt` while sitting at `b`, with `l`
    /// the local times at `t0` (only `l_b` grows, at unit rate).
    fn interval_integral(&self, b: usize, t0: f64, t1: f64, ell: &[f64], h: f64) -> Option<f64> {
        Some(match self {
            Self::Constant(c) => c * discount_integral(h, t0, t1),
            Self::VertexWeights(w) => {
                if w[b] == 0.0 {
                    0.0
                } else {
                    w[b] * discount_integral(h, t0, t1)
                }
            }
            Self::ExpLocalTime { target, decay } => {
                if b != *target {
                    0.0
                } else {
                    let rate = decay[b] + h;
                    let weight = (-decay.iter().zip(ell).map(|(c, l)| c * l).sum::<f64>() - h * t0).exp();
                    weight * -(-(rate * (t1 - t0))).exp_m1() / rate
                }
            }
            Self::Custom { .. } => return None,
        })
    }
}

/// How discounted functionals are estimated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Strategy {
    /// Draw `tau ~ Exp(h)` and return `g(X_tau, L_tau) / h`. Unbiased.
    KillingTime,
    /// Integrate `g` in closed form over holding intervals up to
    /// `T* = ln(1 / (h eps_tail)) / h`; the final holding interval is
    /// continued to infinity. Bias at most `2 |g|_inf e^{-h T*} / h`.
    Interval { eps_tail: f64 },
}

impl Strategy {
    pub const DEFAULT_EPS_TAIL: f64 = 1e-10;

    pub fn interval() -> Self {
        Self::Interval { eps_tail: Self::DEFAULT_EPS_TAIL }
    }
}

/// Truncation time `T* = ln(1 / (h eps)) / h`.
pub fn truncation_time(h: f64, eps_tail: f64) -> f64 {
    ((1.0 / (h * eps_tail)).ln() / h).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscountedEstimate {
    pub estimate: Estimate,
    pub n_samples: u64,
    pub strategy: Strategy,
    pub truncation_time: Option<f64>,
    /// Bound on the deterministic truncation bias.
    pub tail_bound: f64,
}

/// One unbiased (killing time) or tail-closed (interval) sample.
pub fn sample_discounted<R: Rng + ?Sized>(
    graph: &WeightedGraph,
    start: usize,
    ell0: &[f64],
    h: f64,
    g: &Functional,
    strategy: Strategy,
    rng: &mut R,
    ell_buf: &mut Vec<f64>,
) -> Result<f64> {
    ell_buf.clear();
    ell_buf.extend_from_slice(ell0);
    match strategy {
        Strategy::KillingTime => {
            let tau = exp1(rng) / h;
            let end = run_walk(graph, start, ell_buf, tau, rng, |_, _, _, _| {});
            Ok(g.eval(end, ell_buf) / h)
        }
        Strategy::Interval { eps_tail } => {
            if matches!(g, Functional::Custom { .. }) {
                return Err(Error::InvalidArgument("interval estimator needs a closed-form functional".into()));
            }
            let horizon = truncation_time(h, eps_tail);
            let mut acc = 0.0;
            let mut last: Option<(usize, f64, Vec<f64>)> = None;
            let final_vertex = run_walk(graph, start, ell_buf, horizon, rng, |v, t0, t1, ell| {
                if t1 < horizon {
                    acc += g.interval_integral(v, t0, t1, ell, h).unwrap_or(0.0);
                } else {
                    last = Some((v, t0, ell.to_vec()));
                }
            });
            let (v, t0, ell) = last.expect("walk always ends with a final interval");
            debug_assert_eq!(v, final_vertex);
            acc += g.interval_integral(v, t0, f64::INFINITY, &ell, h).unwrap_or(0.0);
            Ok(acc)
        }
    }
}

const CHUNK: u64 = 4096;

/// Estimate `int_0^inf E_{start, ell0}[g(X_t, L_t)] e^{-ht} dt` from
/// `n_samples` independent replicas. Replica `r` uses stream `r` of `lane`,
/// and chunks are merged in index order, so the result does not depend on
/// the number of threads.
pub fn estimate_discounted_functional(
    graph: &WeightedGraph,
    start: usize,
    ell0: &LocalTimes,
    h: f64,
    g: &Functional,
    n_samples: u64,
    strategy: Strategy,
    lane: &Lane,
) -> Result<DiscountedEstimate> {
    check_start(graph, start, ell0)?;
    g.validate(graph.n_vertices())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("h = {h} must be positive")));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be positive".into()));
    }
    if let Strategy::Interval { eps_tail } = strategy {
        if !(eps_tail > 0.0 && eps_tail < 1.0) {
            return Err(Error::InvalidArgument(format!("eps_tail = {eps_tail} must lie in (0, 1)")));
        }
    }
    let n_chunks = n_samples.div_ceil(CHUNK);
    let partials: Vec<Result<Running>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Running::new();
            let mut buf = Vec::with_capacity(graph.n_vertices());
            for r in c * CHUNK..((c + 1) * CHUNK).min(n_samples) {
                let mut rng = lane.stream(r);
                acc.push(sample_discounted(graph, start, &ell0.0, h, g, strategy, &mut rng, &mut buf)?);
            }
            Ok(acc)
        })
        .collect();
    let mut total = Running::new();
    for p in partials {
        total.merge(&p?);
    }
    let (truncation, tail_bound) = match strategy {
        Strategy::KillingTime => (None, 0.0),
        Strategy::Interval { eps_tail } => {
            let t = truncation_time(h, eps_tail);
            (Some(t), 2.0 * g.sup_norm() * (-h * t).exp() / h)
        }
    };
    let mut estimate = total.estimate();
    if n_samples == 1 {
        estimate.stderr = f64::NAN;
    }
    Ok(DiscountedEstimate { estimate, n_samples, strategy, truncation_time: truncation, tail_bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::module;

    fn lane(case: u64) -> Lane {
        Lane::new(2024, module::TEST, case)
    }

    #[test]
    fn isolated_vertex_never_jumps() {
        let g = WeightedGraph::single_vertex(1.0).unwrap();
        let mut rng = lane(0).stream(0);
        let tr = simulate(&g, 0, &LocalTimes::zeros(1), 3.5, &mut rng).unwrap();
        assert!(tr.jump_times.is_empty());
        assert_eq!(tr.final_local_times.0, vec![3.5]);
        tr.check(&g).unwrap();
    }

    #[test]
    fn rejects_bad_arguments() {
        let g = WeightedGraph::single_vertex(1.0).unwrap();
        let mut rng = lane(0).stream(0);
        assert!(simulate(&g, 0, &LocalTimes::zeros(1), f64::INFINITY, &mut rng).is_err());
        assert!(simulate(&g, 0, &LocalTimes(vec![f64::NAN]), 1.0, &mut rng).is_err());
        assert!(simulate(&g, 1, &LocalTimes::zeros(1), 1.0, &mut rng).is_err());
        let f = Functional::Constant(1.0);
        assert!(estimate_discounted_functional(&g, 0, &LocalTimes::zeros(1), 0.0, &f, 10, Strategy::KillingTime, &lane(0)).is_err());
        assert!(estimate_discounted_functional(&g, 0, &LocalTimes::zeros(1), 1.0, &f, 0, Strategy::KillingTime, &lane(0)).is_err());
    }

    #[test]
    fn trajectories_conserve_time() {
        let g = WeightedGraph::path(5, 0.7, 0.0).unwrap();
        for r in 0..50 {
            let mut rng = lane(1).stream(r);
            let ell0 = LocalTimes(vec![0.1, 0.0, 2.0, 0.5, 0.0]);
            let tr = simulate(&g, 2, &ell0, 7.0, &mut rng).unwrap();
            tr.check(&g).unwrap();
        }
    }

    #[test]
    fn occupation_single_vertex() {
        let g = WeightedGraph::single_vertex(1.0).unwrap();
        let mut rng = lane(2).stream(0);
        let h = 0.5;
        let horizon = truncation_time(h, 1e-12);
        let tr = simulate(&g, 0, &LocalTimes::zeros(1), horizon, &mut rng).unwrap();
        assert!((discounted_occupation(&tr, 0, h).unwrap() - 2.0).abs() < 1e-10);
        let g2 = WeightedGraph::two_vertex(0.0, 1.0).unwrap();
        let tr = simulate(&g2, 0, &LocalTimes::zeros(2), 5.0, &mut rng).unwrap();
        assert_eq!(discounted_occupation(&tr, 1, h).unwrap(), 0.0);
    }

    #[test]
    fn constant_functional_is_exact_per_trajectory() {
        let g = WeightedGraph::path(3, 1.0, 0.0).unwrap();
        let est = estimate_discounted_functional(
            &g,
            0,
            &LocalTimes::zeros(3),
            0.25,
            &Functional::Constant(1.0),
            64,
            Strategy::interval(),
            &lane(3),
        )
        .unwrap();
        assert!((est.estimate.value - 4.0).abs() < 1e-12);
        assert!(est.estimate.stderr < 1e-12);
    }

    #[test]
    fn interval_estimator_sum_rule() {
        // Sum over b of the indicator estimators equals 1/h on every path.
        let g = WeightedGraph::path(4, 0.8, 0.0).unwrap();
        let h = 0.7;
        let mut buf = Vec::new();
        for r in 0..20 {
            let mut total = 0.0;
            for b in 0..4 {
                let mut rng = lane(4).stream(r);
                total += sample_discounted(&g, 1, &[0.0; 4], h, &Functional::indicator(b, 4), Strategy::interval(), &mut rng, &mut buf)
                    .unwrap();
            }
            assert!((total - 1.0 / h).abs() < 1e-12, "{total}");
        }
    }

    #[test]
    fn exp_local_time_isolated_vertex_closed_form() {
        // int e^{-ht} e^{-t} dt = 1 / (1 + h)
        let g = WeightedGraph::single_vertex(1.0).unwrap();
        let f = Functional::ExpLocalTime { target: 0, decay: vec![1.0] };
        let est = estimate_discounted_functional(&g, 0, &LocalTimes::zeros(1), 1.0, &f, 8, Strategy::interval(), &lane(5)).unwrap();
        assert!((est.estimate.value - 0.5).abs() < 1e-12);
        // Killing-time version is unbiased: E[e^{-tau}] / h with tau ~ Exp(h).
        let est = estimate_discounted_functional(&g, 0, &LocalTimes::zeros(1), 1.0, &f, 40_000, Strategy::KillingTime, &lane(6)).unwrap();
        assert!(est.estimate.z_against(&Estimate::exact(0.5)).abs() < 4.0);
    }

    #[test]
    fn estimates_independent_of_thread_count() {
        let g = WeightedGraph::path(3, 1.0, 0.0).unwrap();
        let f = Functional::indicator(2, 3);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                estimate_discounted_functional(&g, 0, &LocalTimes::zeros(3), 1.0, &f, 10_000, Strategy::interval(), &lane(7)).unwrap()
            })
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a.estimate.value.to_bits(), b.estimate.value.to_bits());
        assert_eq!(a.estimate.stderr.to_bits(), b.estimate.stderr.to_bits());
    }
}
