//! Deterministic quadrature of horospherical expectations on graphs with at
//! most two vertices.
//!
//! For both sigma models the `s`-sector is Gaussian given `t`, so
//!
//! ```text
//! int F e^{-H} dt ds = int dt w(t) E_{s ~ N(0, D(t)^{-1})}[F(t, s)],
//! w(t) = exp(-B(t) + tilt sum t + det_power log det D(t)).
//! ```
//!
//! The `t` integral is a trapezoid rule on the box `|t_i| <= T` with
//! `h_min (cosh T - 1) = 80`; the Gaussian expectation uses a tensor
//! Gauss-Hermite rule in whitened coordinates. Both resolutions are increased
//! together until successive levels agree. `D(t)` is factored densely here,
//! independently of the sparse path used by the samplers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::quad::{gauss_hermite, trapezoid};
use crate::tchain::TTarget;

/// Resolution schedule for the oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    /// Relative tolerance between successive levels.
    pub tol: f64,
    pub max_level: usize,
    /// Trapezoid intervals per `t` direction at level 0 (doubled per level).
    pub base_t_intervals: usize,
    /// Gauss-Hermite order at level 0 (plus `gh_increment` per level).
    pub base_gh_order: usize,
    pub gh_increment: usize,
    /// `h_min (cosh T - 1)` at the edge of the `t` box.
    pub box_energy: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { tol: 1e-8, max_level: 5, base_t_intervals: 32, base_gh_order: 8, gh_increment: 6, box_energy: 80.0 }
    }
}

/// A converged quadrature value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    /// Difference between the last two levels.
    pub error: f64,
    /// Estimated mass outside the `t` box, relative to the observable scale.
    pub tail_bound: f64,
    pub t_half_width: f64,
    pub levels: usize,
}

/// Raw integrals at one resolution.
struct Level {
    /// `int w E[F]`
    weighted: f64,
    /// `int w E[|F|]`
    scale: f64,
    /// `int w`
    norm: f64,
    /// Largest `w E[|F|]` on the box boundary.
    boundary: f64,
}

/// Point handed to observables: `s[i * components + r]` is component `r` at vertex `i`.
pub struct Point<'a> {
    pub t: &'a [f64],
    pub s: &'a [f64],
}

pub(crate) struct Problem<'a> {
    pub graph: &'a WeightedGraph,
    pub target: TTarget,
    pub components: usize,
}

fn dense_d(graph: &WeightedGraph, t: &[f64]) -> DMatrix<f64> {
    let n = graph.n_vertices();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        d[(i, i)] += graph.h(i) * t[i].exp();
    }
    for (i, j, b) in graph.edges() {
        let w = b * (t[i] + t[j]).exp();
        d[(i, j)] -= w;
        d[(j, i)] -= w;
        d[(i, i)] += w;
        d[(j, j)] += w;
    }
    d
}

fn b_value(graph: &WeightedGraph, t: &[f64]) -> f64 {
    let mut b: f64 = (0..t.len()).map(|i| graph.h(i) * (t[i].cosh() - 1.0)).sum();
    for (i, j, beta) in graph.edges() {
        b += beta * ((t[i] - t[j]).cosh() - 1.0);
    }
    b
}

impl Problem<'_> {
    pub fn half_width(&self, spec: &OracleSpec) -> Result<f64> {
        let h_min = self.graph.h_values().iter().copied().fold(f64::INFINITY, f64::min);
        if !(h_min > 0.0) {
            return Err(Error::InvalidArgument("quadrature oracle needs h_i > 0 at every vertex".into()));
        }
        Ok((1.0 + spec.box_energy / h_min).acosh())
    }

    fn level(&self, spec: &OracleSpec, k: usize, f: &dyn Fn(&Point) -> f64) -> Result<Level> {
        let n = self.graph.n_vertices();
        let m = self.components;
        let dims = n * m;
        if dims > 4 {
            return Err(Error::InvalidArgument(format!("oracle limited to 4 Gaussian dimensions, got {dims}")));
        }
        let half = self.half_width(spec)?;
        let intervals = spec.base_t_intervals << k;
        let rule = trapezoid(-half, half, intervals);
        let gh = gauss_hermite(spec.base_gh_order + spec.gh_increment * k);
        let n_t = rule.len();
        let n_gh = gh.len();
        let mut out = Level { weighted: 0.0, scale: 0.0, norm: 0.0, boundary: 0.0 };
        let mut t = vec![0.0; n];
        let mut s = vec![0.0; dims];
        let mut z = DVector::zeros(n);
        for flat in 0..n_t.pow(n as u32) {
            let mut rem = flat;
            let mut wt = 1.0;
            let mut on_boundary = false;
            for ti in t.iter_mut() {
                let idx = rem % n_t;
                rem /= n_t;
                *ti = rule.nodes[idx];
                wt *= rule.weights[idx];
                on_boundary |= idx == 0 || idx == n_t - 1;
            }
            let d = dense_d(self.graph, &t);
            let chol = d.cholesky().ok_or_else(|| Error::NotPositiveDefinite { pivot: 0, value: f64::NAN, t: t.clone() })?;
            let log_det = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
            let log_w = -b_value(self.graph, &t) + self.target.tilt * t.iter().sum::<f64>() + self.target.det_power * log_det;
            let w = log_w.exp();
            let lt = chol.l().transpose();
            let mut ef = 0.0;
            let mut eabs = 0.0;
            for g in 0..n_gh.pow(dims as u32) {
                let mut rem = g;
                let mut wg = 1.0;
                let mut nodes = [0.0; 4];
                for node in nodes.iter_mut().take(dims) {
                    let idx = rem % n_gh;
                    rem /= n_gh;
                    *node = gh.nodes[idx];
                    wg *= gh.weights[idx];
                }
                for r in 0..m {
                    for i in 0..n {
                        z[i] = nodes[i * m + r];
                    }
                    let x = lt.solve_upper_triangular(&z).expect("cholesky factor is non-singular");
                    for i in 0..n {
                        s[i * m + r] = x[i];
                    }
                }
                let v = f(&Point { t: &t, s: &s });
                if !v.is_finite() {
                    return Err(Error::Envelope(format!("observable not finite at t = {t:?}")));
                }
                ef += wg * v;
                eabs += wg * v.abs();
            }
            out.weighted += wt * w * ef;
            out.scale += wt * w * eabs;
            out.norm += wt * w;
            if on_boundary {
                out.boundary = out.boundary.max(w * eabs);
            }
        }
        Ok(out)
    }

    /// Refine until both `int w E[F]` and (if `normalize`) the ratio with
    /// `int w` are stable. Returns `int w E[F]` times `prefactor`, or the
    /// normalized expectation.
    pub fn integrate(&self, spec: &OracleSpec, f: &dyn Fn(&Point) -> f64, normalize: bool, prefactor: f64) -> Result<OracleValue> {
        let half = self.half_width(spec)?;
        let value_of = |l: &Level| if normalize { l.weighted / l.norm } else { prefactor * l.weighted };
        let scale_of = |l: &Level| if normalize { l.scale / l.norm } else { prefactor * l.scale };
        let mut prev = self.level(spec, 0, f)?;
        for k in 1..=spec.max_level {
            let cur = self.level(spec, k, f)?;
            let (v0, v1) = (value_of(&prev), value_of(&cur));
            let scale = scale_of(&cur).max(v1.abs());
            let diff = (v1 - v0).abs();
            if diff <= spec.tol * scale.max(f64::MIN_POSITIVE) {
                // Beyond the box the integrand decays at least like e^{-h (cosh|t| - 1)}.
                let n = self.graph.n_vertices() as i32;
                let tail = cur.boundary * (2.0 * half).powi(n - 1) / cur.scale.max(f64::MIN_POSITIVE);
                if tail > spec.tol {
                    return Err(Error::Envelope(format!(
                        "observable mass at the edge of the t box (|t| = {half:.3}) is {tail:e} of the total"
                    )));
                }
                return Ok(OracleValue { value: v1, error: diff, tail_bound: tail, t_half_width: half, levels: k + 1 });
            }
            prev = cur;
        }
        Err(Error::Quadrature(format!("oracle did not reach tolerance {:e} in {} levels", spec.tol, spec.max_level)))
    }
}
