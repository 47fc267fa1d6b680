//! Mermin–Wagner experiments on the torus `(Z / L Z)^d`.
//!
//! Per retained sample the `y`-field is Fourier transformed,
//! `S(p) = N^{-1/2} sum_j e^{i p.j} y_j`, and `G^(p) = <|S(p)|^2>`. Because
//! `y` is real, `|S(p)|^2 = |S(-p)|^2` sample by sample; the estimator is
//! still averaged over `p` and `-p` so the symmetry is exact in floating
//! point. Parseval gives `N^{-1} sum_p |S(p)|^2 = N^{-1} sum_j y_j^2` per
//! sample, hence per batch, which is audited.
//!
//! The lower bound compared against is
//! `G^(p) >= 1 / ((1 + kappa G(0)) lambda(p) + h)`, `kappa = n + 1` for `H^n`
//! and `1` for `H^{2|2}`, with the estimated `G(0)` plugged in. Its error is
//! propagated to first order per batch, so the covariance between `G^(p)` and
//! `G(0)` is included.
//!
//! Summing the bound over `p` with the Parseval normalisation `N^{-1}` gives
//! the self-consistency inequality checked by [`h_scan`]. The variant with
//! `(2 pi L)^{-d}` is reported alongside; it is weaker by `(2 pi)^d`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_torus, dual_lattice, lambda_at, Momentum, TorusSpec, WeightedGraph};
use crate::report::{CheckRecord, Criterion};
use crate::rng::Lane;
use crate::sigma_h22::ExactH22Sampler;
use crate::stats::{mixing_issue, Running};
use crate::tchain::{McmcParams, TChain, TTarget};

/// Largest side length used by default in each dimension.
pub fn default_max_side(dim: usize) -> usize {
    match dim {
        1 => 128,
        2 => 32,
        _ => 8,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinModel {
    H22,
    Hn(usize),
}

impl SpinModel {
    pub fn kappa(self) -> f64 {
        match self {
            SpinModel::H22 => 1.0,
            SpinModel::Hn(n) => (n + 1) as f64,
        }
    }

    pub fn label(self) -> String {
        match self {
            SpinModel::H22 => "h22".into(),
            SpinModel::Hn(n) => format!("hn{n}"),
        }
    }

    /// Number of equivalent `y` components.
    fn components(self) -> usize {
        match self {
            SpinModel::H22 => 1,
            SpinModel::Hn(n) => n - 1,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            SpinModel::Hn(n) if n < 2 => Err(Error::InvalidArgument(format!("H^n needs n >= 2, got {n}"))),
            _ => Ok(()),
        }
    }
}

/// How `t` configurations are produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    /// Independent exact draws (`H^{2|2}` only).
    Exact,
    /// The t-marginal Metropolis chain; `params.samples` is overridden by the
    /// per-replica sample count.
    Chain { params: McmcParams },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralBudget {
    pub sampler: Sampler,
    /// Total retained `t` samples over all replicas.
    pub samples: usize,
    /// Conditional `y` draws per retained `t`.
    pub y_draws: usize,
    /// Independent replicas; the result does not depend on the thread count.
    pub replicas: usize,
    pub batches_per_replica: usize,
}

impl Default for SpectralBudget {
    fn default() -> Self {
        Self { sampler: Sampler::Exact, samples: 4000, y_draws: 1, replicas: 4, batches_per_replica: 25 }
    }
}

impl SpectralBudget {
    pub fn chain(params: McmcParams, samples: usize) -> Self {
        Self { sampler: Sampler::Chain { params }, samples, ..Self::default() }
    }

    fn per_replica(&self) -> usize {
        self.samples / self.replicas.max(1)
    }

    pub fn validate(&self, model: SpinModel) -> Result<()> {
        if self.replicas == 0 || self.y_draws == 0 || self.batches_per_replica < 2 {
            return Err(Error::InvalidArgument("replicas, y_draws >= 1 and batches_per_replica >= 2 required".into()));
        }
        if self.per_replica() < self.batches_per_replica {
            return Err(Error::InvalidArgument(format!(
                "{} samples over {} replicas leave fewer than {} per replica",
                self.samples, self.replicas, self.batches_per_replica
            )));
        }
        match (&self.sampler, model) {
            (Sampler::Exact, SpinModel::Hn(_)) => {
                Err(Error::InvalidArgument("the exact sampler exists only for H^{2|2}; use a chain for H^n".into()))
            }
            (Sampler::Chain { params }, _) => params.validate(),
            _ => Ok(()),
        }
    }
}

/// `N^{-1} |FFT(y)|^2` on a torus, in [`dual_lattice`] order.
struct TorusFft {
    dim: usize,
    side: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    line: Vec<Complex<f64>>,
}

impl TorusFft {
    fn new(dim: usize, side: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(side);
        let n = side.pow(dim as u32);
        Self { dim, side, fft, buf: vec![Complex::default(); n], line: vec![Complex::default(); side] }
    }

    /// Adds `weight * |S(p)|^2` into `out`.
    fn accumulate_power(&mut self, y: &[f64], weight: f64, out: &mut [f64]) {
        let n = self.buf.len();
        for (b, &v) in self.buf.iter_mut().zip(y) {
            *b = Complex::new(v, 0.0);
        }
        let mut stride = 1;
        for _ in 0..self.dim {
            // Lines along this axis start at indices whose axis coordinate is 0.
            for start in (0..n).filter(|i| (i / stride) % self.side == 0) {
                for m in 0..self.side {
                    self.line[m] = self.buf[start + m * stride];
                }
                self.fft.process(&mut self.line);
                for m in 0..self.side {
                    self.buf[start + m * stride] = self.line[m];
                }
            }
            stride *= self.side;
        }
        let scale = weight / n as f64;
        for (o, b) in out.iter_mut().zip(&self.buf) {
            *o += scale * b.norm_sqr();
        }
    }
}

/// Batch sums of one replica.
struct ReplicaResult {
    ghat: Vec<Vec<f64>>,
    g0: Vec<f64>,
    mixing: Option<String>,
}

struct Accumulator {
    fft: TorusFft,
    n: usize,
    batch: usize,
    skip: usize,
    seen: usize,
    ghat: Vec<Vec<f64>>,
    g0: Vec<f64>,
    g0_series: Vec<f64>,
    tbar_series: Vec<f64>,
    work: Vec<f64>,
}

impl Accumulator {
    fn new(spec: &TorusSpec, samples: usize, batches: usize) -> Self {
        let n = spec.n_sites();
        let batch = samples / batches;
        Self {
            fft: TorusFft::new(spec.dim, spec.side),
            n,
            batch,
            skip: samples - batch * batches,
            seen: 0,
            ghat: vec![vec![0.0; n]; batches],
            g0: vec![0.0; batches],
            g0_series: Vec::with_capacity(samples),
            tbar_series: Vec::with_capacity(samples),
            work: vec![0.0; n],
        }
    }

    /// One retained sample: `t` and its conditional `y` draws.
    fn push(&mut self, t: &[f64], ys: &[Vec<f64>]) {
        let w = 1.0 / ys.len() as f64;
        self.work.iter_mut().for_each(|x| *x = 0.0);
        let mut g0 = 0.0;
        for y in ys {
            self.fft.accumulate_power(y, w, &mut self.work);
            g0 += w * y.iter().map(|v| v * v).sum::<f64>() / self.n as f64;
        }
        self.g0_series.push(g0);
        self.tbar_series.push(t.iter().sum::<f64>() / self.n as f64);
        if self.seen >= self.skip {
            let b = (self.seen - self.skip) / self.batch;
            let inv = 1.0 / self.batch as f64;
            for (acc, v) in self.ghat[b].iter_mut().zip(&self.work) {
                *acc += inv * v;
            }
            self.g0[b] += inv * g0;
        }
        self.seen += 1;
    }

    fn finish(self, chain: bool) -> ReplicaResult {
        let batches = self.g0.len();
        let mixing = if chain {
            mixing_issue(&self.g0_series, batches).or_else(|| mixing_issue(&self.tbar_series, batches))
        } else {
            None
        };
        ReplicaResult { ghat: self.ghat, g0: self.g0, mixing }
    }
}

fn run_replica(
    spec: &TorusSpec,
    graph: &WeightedGraph,
    exact: Option<&ExactH22Sampler>,
    model: SpinModel,
    budget: &SpectralBudget,
    lane: &Lane,
    replica: u64,
) -> Result<ReplicaResult> {
    let samples = budget.per_replica();
    let mut acc = Accumulator::new(spec, samples, budget.batches_per_replica);
    let mut rng = lane.stream(replica);
    match &budget.sampler {
        Sampler::Exact => {
            let sampler = exact.expect("exact sampler prepared");
            for _ in 0..samples {
                let d = sampler.draw(&mut rng)?;
                let ys: Vec<Vec<f64>> = (0..budget.y_draws).map(|_| d.sample_y(&mut rng)).collect();
                acc.push(&d.t, &ys);
            }
            Ok(acc.finish(false))
        }
        Sampler::Chain { params } => {
            let params = McmcParams { samples, ..params.clone() };
            let target = match model {
                SpinModel::H22 => TTarget::h22(),
                SpinModel::Hn(n) => TTarget::hn(n),
            };
            let mut chain = TChain::new(graph, target, &params)?;
            let draws = budget.y_draws * model.components();
            chain.run(&params, &mut rng, |c, _, rng| {
                let et: Vec<f64> = c.t().iter().map(|t| t.exp()).collect();
                let ys: Vec<Vec<f64>> = (0..draws)
                    .map(|_| c.op().sample_gaussian(rng).iter().zip(&et).map(|(s, e)| s * e).collect())
                    .collect();
                acc.push(c.t(), &ys);
                Ok(())
            })?;
            Ok(acc.finish(true))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub torus: TorusSpec,
    pub model: SpinModel,
    pub h: f64,
    pub momenta: Vec<Momentum>,
    pub lambda: Vec<f64>,
    pub ghat: Vec<f64>,
    pub ghat_se: Vec<f64>,
    pub g0: f64,
    pub g0_se: f64,
    /// Symmetrized per-batch `G^(p)`, all replicas in replica order.
    pub batch_ghat: Vec<Vec<f64>>,
    pub batch_g0: Vec<f64>,
    /// Largest per-batch `|N^{-1} sum_p G^_b(p) - G0_b| / max(1, G0_b)`.
    pub parseval_residual: f64,
    pub samples: usize,
    /// Why the errors may be unreliable (chain samplers only).
    pub mixing: Option<String>,
}

/// Estimate `G^(p)` for all dual momenta and `G(0)`; `h` is `torus.h`.
pub fn estimate_spectrum(torus: &TorusSpec, model: SpinModel, budget: &SpectralBudget, lane: &Lane) -> Result<SpectralEstimate> {
    model.validate()?;
    budget.validate(model)?;
    let graph = build_torus(torus)?;
    let exact = match budget.sampler {
        Sampler::Exact => Some(ExactH22Sampler::new(&graph)?),
        Sampler::Chain { .. } => None,
    };
    let results: Vec<ReplicaResult> = (0..budget.replicas as u64)
        .into_par_iter()
        .map(|r| run_replica(torus, &graph, exact.as_ref(), model, budget, lane, r))
        .collect::<Result<_>>()?;

    let momenta = dual_lattice(torus);
    let neg: Vec<usize> = momenta.iter().map(|p| torus.index_of(&p.negated(torus.side).k)).collect();
    let mut mixing = None;
    let mut batch_ghat = Vec::new();
    let mut batch_g0 = Vec::new();
    for r in results {
        mixing = mixing.or(r.mixing);
        for b in r.ghat {
            batch_ghat.push((0..b.len()).map(|i| 0.5 * (b[i] + b[neg[i]])).collect::<Vec<f64>>());
        }
        batch_g0.extend(r.g0);
    }
    let n = torus.n_sites();
    let per_p: Vec<Running> = (0..n).map(|i| batch_ghat.iter().map(|b| b[i]).collect()).collect();
    let g0: Running = batch_g0.iter().copied().collect();
    let parseval_residual = batch_ghat
        .iter()
        .zip(&batch_g0)
        .map(|(b, &g)| (b.iter().sum::<f64>() / n as f64 - g).abs() / g.abs().max(1.0))
        .fold(0.0, f64::max);
    Ok(SpectralEstimate {
        torus: torus.clone(),
        model,
        h: torus.h,
        lambda: momenta.iter().map(|p| lambda_at(torus, p)).collect(),
        momenta,
        ghat: per_p.iter().map(|r| r.mean).collect(),
        ghat_se: per_p.iter().map(|r| r.stderr()).collect(),
        g0: g0.mean,
        g0_se: g0.stderr(),
        batch_ghat,
        batch_g0,
        parseval_residual,
        samples: budget.per_replica() * budget.replicas,
        mixing,
    })
}

impl SpectralEstimate {
    pub fn n_sites(&self) -> usize {
        self.momenta.len()
    }

    /// `max_p |G^(p) - G^(-p)|`.
    pub fn asymmetry(&self) -> f64 {
        self.momenta
            .iter()
            .enumerate()
            .map(|(i, p)| (self.ghat[i] - self.ghat[self.torus.index_of(&p.negated(self.torus.side).k)]).abs())
            .fold(0.0, f64::max)
    }

    /// `max_{p != 0} lambda(p) / |p|^2` over centred representatives.
    pub fn lambda_ratio(&self) -> f64 {
        self.momenta
            .iter()
            .zip(&self.lambda)
            .filter_map(|(p, &l)| {
                let p2: f64 = p.centered(self.torus.side).iter().map(|x| x * x).sum();
                (p2 > 0.0).then_some(l / p2)
            })
            .fold(0.0, f64::max)
    }

    /// Exact audits and, for `H^{2|2}`, the `p = 0` sum rule.
    pub fn checks(&self, prefix: &str) -> Vec<CheckRecord> {
        let mut out = Vec::new();
        if self.model == SpinModel::H22 {
            out.push(
                CheckRecord::new(format!("{prefix}.sum_rule"), self.h * self.ghat[0], self.h * self.ghat_se[0], 1.0, 0.0, Criterion::ZScore { max: 3.0 })
                    .inconclusive_if(self.mixing.clone()),
            );
        }
        out.push(CheckRecord::new(format!("{prefix}.parseval"), self.parseval_residual, 0.0, 0.0, 0.0, Criterion::Absolute { tol: 1e-10 }));
        out.push(CheckRecord::new(format!("{prefix}.symmetry"), self.asymmetry(), 0.0, 0.0, 0.0, Criterion::Absolute { tol: 0.0 }));
        out.push(CheckRecord::new(
            format!("{prefix}.lambda_quadratic"),
            self.lambda_ratio(),
            0.0,
            self.torus.quadratic_constant(),
            0.0,
            Criterion::AtMost { sigmas: 0.0 },
        ));
        let min = self.ghat.iter().copied().fold(f64::INFINITY, f64::min);
        out.push(CheckRecord::new(format!("{prefix}.nonnegative"), min, 0.0, 0.0, 0.0, Criterion::AtLeast { sigmas: 0.0 }));
        out
    }

    /// `N^{-1} sum_p 1 / ((1 + kappa G0) lambda(p) + h)` and its derivative in `G0`.
    fn bound_sum(&self, kappa: f64) -> (f64, f64) {
        let n = self.n_sites() as f64;
        let mut s = 0.0;
        let mut ds = 0.0;
        for &l in &self.lambda {
            let den = (1.0 + kappa * self.g0) * l + self.h;
            s += 1.0 / den;
            ds -= kappa * l / (den * den);
        }
        (s / n, ds / n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub k: Vec<usize>,
    pub ghat: f64,
    pub ghat_se: f64,
    pub lambda: f64,
    pub bound: f64,
    pub margin: f64,
    /// First-order error of the margin, including the `G(0)` plug-in.
    pub margin_se: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub dim: usize,
    pub side: usize,
    pub h: f64,
    pub model: SpinModel,
    pub kappa: f64,
    pub rows: Vec<MarginRow>,
    pub mixing: Option<String>,
}

/// Margins of the lower bound at every momentum.
pub fn check_bound(est: &SpectralEstimate) -> BoundReport {
    let kappa = est.model.kappa();
    let g0 = est.g0;
    let rows = est
        .momenta
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let l = est.lambda[i];
            let den = (1.0 + kappa * g0) * l + est.h;
            let bound = 1.0 / den;
            let slope = -kappa * l / (den * den);
            let linear: Running =
                est.batch_ghat.iter().zip(&est.batch_g0).map(|(b, &g)| b[i] - bound - slope * (g - g0)).collect();
            let margin = est.ghat[i] - bound;
            let margin_se = linear.stderr();
            MarginRow {
                k: p.k.clone(),
                ghat: est.ghat[i],
                ghat_se: est.ghat_se[i],
                lambda: l,
                bound,
                margin,
                margin_se,
                z: if margin_se > 0.0 { margin / margin_se } else { f64::NAN },
            }
        })
        .collect();
    BoundReport { dim: est.torus.dim, side: est.torus.side, h: est.h, model: est.model, kappa, rows, mixing: est.mixing.clone() }
}

impl BoundReport {
    /// One check per momentum: `margin > -4 se`.
    pub fn checks(&self, prefix: &str) -> Vec<CheckRecord> {
        self.rows
            .iter()
            .map(|r| {
                let k: Vec<String> = r.k.iter().map(|k| k.to_string()).collect();
                CheckRecord::new(format!("{prefix}.bound.k{}", k.join("_")), r.ghat, r.margin_se, r.bound, 0.0, Criterion::AtLeast { sigmas: 4.0 })
                    .inconclusive_if(self.mixing.clone())
            })
            .collect()
    }

    pub fn min_z(&self) -> f64 {
        self.rows.iter().filter(|r| r.z.is_finite()).map(|r| r.z).fold(f64::INFINITY, f64::min)
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["d", "L", "h", "model"].iter().map(|s| s.to_string()).collect();
        h.extend((1..=self.dim).map(|a| format!("p_index{a}")));
        h.extend(["Ghat", "Ghat_se", "lambda", "bound", "margin", "z"].iter().map(|s| s.to_string()));
        h
    }

    pub fn csv_records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut rec = vec![self.dim.to_string(), self.side.to_string(), self.h.to_string(), self.model.label()];
                rec.extend(r.k.iter().map(|k| k.to_string()));
                rec.extend([r.ghat, r.ghat_se, r.lambda, r.bound, r.margin, r.z].iter().map(|v| v.to_string()));
                rec
            })
            .collect()
    }
}

/// A family of nearest-neighbour tori scanned over `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub dim: usize,
    pub beta: f64,
    pub model: SpinModel,
    /// Strictly decreasing fields.
    pub hs: Vec<f64>,
    /// Strictly increasing side lengths tried in turn.
    pub sides: Vec<usize>,
    pub budget: SpectralBudget,
    /// Successive sides agreeing within this many sigma count as a plateau.
    pub plateau_sigmas: f64,
    /// Overrides [`default_max_side`].
    pub max_side: Option<usize>,
}

impl ScanSpec {
    pub fn new(dim: usize, beta: f64, model: SpinModel, hs: Vec<f64>, sides: Vec<usize>, budget: SpectralBudget) -> Self {
        Self { dim, beta, model, hs, sides, budget, plateau_sigmas: 2.0, max_side: None }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.budget.validate(self.model)?;
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidArgument(format!("scan dimension {} not in 1..=3", self.dim)));
        }
        if self.hs.is_empty() || self.hs.iter().any(|h| !(h.is_finite() && *h > 0.0)) || self.hs.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument(format!("h list {:?} must be positive and strictly decreasing", self.hs)));
        }
        let cap = self.max_side.unwrap_or_else(|| default_max_side(self.dim));
        if self.sides.is_empty() || self.sides.windows(2).any(|w| w[1] <= w[0]) || self.sides.iter().any(|&l| l < 3 || l > cap) {
            return Err(Error::InvalidArgument(format!("sides {:?} must increase within 3..={cap}", self.sides)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidArgument(format!("beta = {} must be positive", self.beta)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub side: usize,
    pub h: f64,
    pub g0: f64,
    pub g0_se: f64,
    pub ghat0: f64,
    pub ghat0_se: f64,
    /// `N^{-1} sum_p 1 / ((1 + kappa G0) lambda(p) + h)`.
    pub bound_sum: f64,
    pub bound_sum_se: f64,
    /// The same sum normalised by `(2 pi L)^{-d}`.
    pub bound_sum_2pi: f64,
    pub mixing: Option<String>,
}

impl ScanCell {
    fn from_estimate(est: &SpectralEstimate) -> Self {
        let (s, ds) = est.bound_sum(est.model.kappa());
        let two_pi = (2.0 * PI).powi(est.torus.dim as i32);
        Self {
            side: est.torus.side,
            h: est.h,
            g0: est.g0,
            g0_se: est.g0_se,
            ghat0: est.ghat[0],
            ghat0_se: est.ghat_se[0],
            bound_sum: s,
            bound_sum_se: ds.abs() * est.g0_se,
            bound_sum_2pi: s / two_pi,
            mixing: est.mixing.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub h: f64,
    pub cells: Vec<ScanCell>,
    /// Side at which `G(0)` first agreed with the previous side.
    pub plateau_side: Option<usize>,
}

impl ScanRow {
    /// The plateau cell, or the largest side if none was found.
    pub fn stabilized(&self) -> &ScanCell {
        match self.plateau_side {
            Some(l) => self.cells.iter().find(|c| c.side == l).expect("plateau cell"),
            None => self.cells.last().expect("at least one cell"),
        }
    }
}

/// Least-squares trend lines of the stabilized `G(0)` (descriptive only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    /// `G(0) ~ a + b sqrt(log(1/h))`.
    pub sqrt_log_intercept: f64,
    pub sqrt_log_slope: f64,
    /// `G(0) ~ c h^{-alpha}`.
    pub power_exponent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub dim: usize,
    pub beta: f64,
    pub model: SpinModel,
    pub rows: Vec<ScanRow>,
    pub fit: Option<TrendFit>,
}

fn cell_lane(lane: &Lane, row: usize, side: usize) -> Lane {
    lane.child(((row as u64) << 32) | side as u64)
}

/// For each `h`, increase `L` through `spec.sides` until `G(0)` plateaus.
pub fn h_scan(spec: &ScanSpec, lane: &Lane) -> Result<ScanTable> {
    spec.validate()?;
    let rows: Vec<ScanRow> = spec
        .hs
        .par_iter()
        .enumerate()
        .map(|(ri, &h)| {
            let mut cells: Vec<ScanCell> = Vec::new();
            let mut plateau_side = None;
            for &side in &spec.sides {
                let torus = TorusSpec::nearest_neighbour(spec.dim, side, spec.beta, h);
                let est = estimate_spectrum(&torus, spec.model, &spec.budget, &cell_lane(lane, ri, side))?;
                let cell = ScanCell::from_estimate(&est);
                if let Some(prev) = cells.last() {
                    let se = prev.g0_se.hypot(cell.g0_se);
                    if (cell.g0 - prev.g0).abs() <= spec.plateau_sigmas * se {
                        plateau_side = Some(side);
                    }
                }
                cells.push(cell);
                if plateau_side.is_some() {
                    break;
                }
            }
            Ok(ScanRow { h, cells, plateau_side })
        })
        .collect::<Result<_>>()?;
    let fit = fit_trend(&rows);
    Ok(ScanTable { dim: spec.dim, beta: spec.beta, model: spec.model, rows, fit })
}

fn fit_trend(rows: &[ScanRow]) -> Option<TrendFit> {
    if rows.len() < 2 {
        return None;
    }
    let line = |xs: &[f64], ys: &[f64]| {
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let b = sxy / sxx;
        (my - b * mx, b)
    };
    let g: Vec<f64> = rows.iter().map(|r| r.stabilized().g0).collect();
    let sl: Vec<f64> = rows.iter().map(|r| (1.0 / r.h).ln().max(0.0).sqrt()).collect();
    let (a, b) = line(&sl, &g);
    let lh: Vec<f64> = rows.iter().map(|r| -r.h.ln()).collect();
    let lg: Vec<f64> = g.iter().map(|v| v.ln()).collect();
    let (_, alpha) = line(&lh, &lg);
    Some(TrendFit { sqrt_log_intercept: a, sqrt_log_slope: b, power_exponent: alpha })
}

impl ScanTable {
    pub fn row(&self, h: f64) -> Option<&ScanRow> {
        self.rows.iter().find(|r| r.h == h)
    }

    /// Plateau, sum-rule and self-consistency checks per `h`; for `d <= 2`,
    /// growth of the stabilized `G(0)` beyond `growth_sigmas` at each step.
    pub fn checks(&self, prefix: &str, growth_sigmas: f64) -> Vec<CheckRecord> {
        let mut out = Vec::new();
        for row in &self.rows {
            let h = row.h;
            let no_plateau = row.plateau_side.is_none().then(|| {
                let sides: Vec<usize> = row.cells.iter().map(|c| c.side).collect();
                format!("no finite-size plateau across sides {sides:?}")
            });
            let n = row.cells.len();
            let (prev, last) = if n >= 2 { (&row.cells[n - 2], &row.cells[n - 1]) } else { (&row.cells[0], &row.cells[0]) };
            out.push(
                CheckRecord::new(format!("{prefix}.h{h}.plateau"), last.g0, last.g0_se, prev.g0, prev.g0_se, Criterion::ZScore { max: 2.0 })
                    .with_note(format!("L = {} vs {}", last.side, prev.side))
                    .inconclusive_if(no_plateau.clone()),
            );
            if self.model == SpinModel::H22 {
                for c in &row.cells {
                    out.push(
                        CheckRecord::new(format!("{prefix}.L{}.h{h}.sum_rule", c.side), h * c.ghat0, h * c.ghat0_se, 1.0, 0.0, Criterion::ZScore { max: 3.0 })
                            .inconclusive_if(c.mixing.clone()),
                    );
                }
            }
            let c = row.stabilized();
            out.push(
                CheckRecord::new(format!("{prefix}.h{h}.self_consistency"), c.g0, c.g0_se, c.bound_sum, c.bound_sum_se, Criterion::AtLeast { sigmas: 4.0 })
                    .with_note(format!("L = {}, normalisation L^-d", c.side))
                    .inconclusive_if(c.mixing.clone()),
            );
            out.push(
                CheckRecord::new(
                    format!("{prefix}.h{h}.self_consistency_2pi"),
                    c.g0,
                    c.g0_se,
                    c.bound_sum_2pi,
                    c.bound_sum_se / (2.0 * PI).powi(self.dim as i32),
                    Criterion::AtLeast { sigmas: 4.0 },
                )
                .with_note(format!("L = {}, normalisation (2 pi L)^-d", c.side))
                .inconclusive_if(c.mixing.clone()),
            );
        }
        if self.dim <= 2 {
            for w in self.rows.windows(2) {
                let (a, b) = (w[0].stabilized(), w[1].stabilized());
                let reason = match (w[0].plateau_side, w[1].plateau_side) {
                    (Some(_), Some(_)) => a.mixing.clone().or_else(|| b.mixing.clone()),
                    _ => Some("an endpoint has no finite-size plateau".to_string()),
                };
                out.push(
                    CheckRecord::new(format!("{prefix}.growth.h{}_to_h{}", w[0].h, w[1].h), b.g0, b.g0_se, a.g0, a.g0_se, Criterion::Exceeds { sigmas: growth_sigmas })
                        .with_note(format!("L = {} vs {}", b.side, a.side))
                        .inconclusive_if(reason),
                );
            }
        }
        out
    }

    /// Relative change of `G(0)` between two fields at the largest common side.
    pub fn contrast_check(&self, prefix: &str, h_hi: f64, h_lo: f64, tol: f64) -> Result<CheckRecord> {
        let hi = self.row(h_hi).ok_or_else(|| Error::InvalidArgument(format!("h = {h_hi} not scanned")))?;
        let lo = self.row(h_lo).ok_or_else(|| Error::InvalidArgument(format!("h = {h_lo} not scanned")))?;
        let side = hi
            .cells
            .iter()
            .map(|c| c.side)
            .filter(|s| lo.cells.iter().any(|c| c.side == *s))
            .max()
            .ok_or_else(|| Error::InvalidArgument("no common side".into()))?;
        let a = hi.cells.iter().find(|c| c.side == side).expect("common side");
        let b = lo.cells.iter().find(|c| c.side == side).expect("common side");
        Ok(CheckRecord::new(format!("{prefix}.contrast.h{h_hi}_to_h{h_lo}"), b.g0, b.g0_se, a.g0, a.g0_se, Criterion::RatioWithin { tol })
            .with_note(format!("L = {side}"))
            .inconclusive_if(a.mixing.clone().or_else(|| b.mixing.clone())))
    }

    pub fn csv_header() -> Vec<String> {
        ["d", "L", "h", "model", "G0", "G0_se", "Ghat0", "Ghat0_se", "bound_sum", "bound_sum_2pi", "plateau"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    pub fn csv_records(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        for row in &self.rows {
            for c in &row.cells {
                out.push(vec![
                    self.dim.to_string(),
                    c.side.to_string(),
                    c.h.to_string(),
                    self.model.label(),
                    c.g0.to_string(),
                    c.g0_se.to_string(),
                    c.ghat0.to_string(),
                    c.ghat0_se.to_string(),
                    c.bound_sum.to_string(),
                    c.bound_sum_2pi.to_string(),
                    (row.plateau_side == Some(c.side)).to_string(),
                ]);
            }
        }
        out
    }

    /// `(h, G(0), se)` of the stabilized cells.
    pub fn plot_data(&self) -> Vec<(f64, f64, f64)> {
        self.rows.iter().map(|r| (r.h, r.stabilized().g0, r.stabilized().g0_se)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_matches_direct_sum() {
        let spec = TorusSpec::nearest_neighbour(2, 5, 1.0, 1.0);
        let y: Vec<f64> = (0..25).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.3).collect();
        let mut f = TorusFft::new(2, 5);
        let mut out = vec![0.0; 25];
        f.accumulate_power(&y, 1.0, &mut out);
        for (i, p) in dual_lattice(&spec).iter().enumerate() {
            let pr = p.to_real(5);
            let mut s = Complex::new(0.0, 0.0);
            for j in 0..25 {
                let c = spec.coords_of(j);
                let phase = pr[0] * c[0] as f64 + pr[1] * c[1] as f64;
                s += Complex::from_polar(y[j], phase);
            }
            assert!((s.norm_sqr() / 25.0 - out[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn budget_validation() {
        let b = SpectralBudget::default();
        assert!(b.validate(SpinModel::H22).is_ok());
        assert!(b.validate(SpinModel::Hn(2)).is_err());
        assert!(SpectralBudget { samples: 10, ..b.clone() }.validate(SpinModel::H22).is_err());
        assert!(SpinModel::Hn(1).validate().is_err());
        assert_eq!(SpinModel::Hn(2).kappa(), 3.0);
    }

    #[test]
    fn scan_spec_validation() {
        let b = SpectralBudget::default();
        let ok = ScanSpec::new(1, 1.0, SpinModel::H22, vec![1.0, 0.3], vec![8, 16], b.clone());
        assert!(ok.validate().is_ok());
        assert!(ScanSpec { hs: vec![0.3, 1.0], ..ok.clone() }.validate().is_err());
        assert!(ScanSpec { sides: vec![16, 8], ..ok.clone() }.validate().is_err());
        assert!(ScanSpec { dim: 3, sides: vec![12], ..ok.clone() }.validate().is_err());
        assert!(ScanSpec { dim: 3, sides: vec![12], max_side: Some(12), ..ok }.validate().is_ok());
    }
}
