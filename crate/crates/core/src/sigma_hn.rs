//! The `H^n` sigma model (`n >= 2`) in horospherical coordinates.
//!
//! A spin `u = (x, y^1..y^{n-1}, z)` on the hyperboloid `x^2 + |y|^2 - z^2 = -1`,
//! `z > 0`, is parametrised by `t` and `s~ = (s^1..s^{n-1})` through
//!
//! ```text
//! x = sinh t - |s~|^2 e^t / 2,   y = e^t s~,   z = cosh t + |s~|^2 e^t / 2.
//! ```
//!
//! The Gibbs measure becomes `e^{-H(t, s~)} prod_i e^{(n-1) t_i} dt ds~` with
//!
//! ```text
//! H = sum_{ij} beta_ij (cosh(t_i - t_j) - 1 + |s~_i - s~_j|^2 e^{t_i + t_j} / 2)
//!   + sum_i h_i (cosh t_i - 1 + |s~_i|^2 e^{t_i} / 2).
//! ```
//!
//! Each component of `s~` is independently `N(0, D(t)^{-1})` given `t`.
//! Integrating them out multiplies the `t` density by
//! `(2 pi)^{N(n-1)/2} det D(t)^{-(n-1)/2}`, so `t` has density proportional to
//! `exp(-B(t) + (n-1) sum t) det D(t)^{-(n-1)/2}`. The block sampler runs the
//! shared t-chain on that marginal and draws `s~` exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::oracle::{OracleSpec, OracleValue, Point, Problem};
use crate::rng::{normal, uniform};
use crate::tchain::{ChainSummary, McmcParams, TChain, TTarget};

/// Largest `|t|` accepted by [`ambient_from_horo`].
pub const T_LIMIT: f64 = 700.0;

/// Horospherical configuration; `s[i]` has `n - 1` components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HnConfig {
    pub n: usize,
    pub t: Vec<f64>,
    pub s: Vec<Vec<f64>>,
}

impl HnConfig {
    pub fn origin(n: usize, vertices: usize) -> Self {
        Self { n, t: vec![0.0; vertices], s: vec![vec![0.0; n - 1]; vertices] }
    }

    pub fn n_vertices(&self) -> usize {
        self.t.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("H^n needs n >= 2, got {}", self.n)));
        }
        if self.s.len() != self.t.len() {
            return Err(Error::DimensionMismatch { expected: self.t.len(), got: self.s.len() });
        }
        for (i, (t, s)) in self.t.iter().zip(&self.s).enumerate() {
            if s.len() != self.n - 1 {
                return Err(Error::DimensionMismatch { expected: self.n - 1, got: s.len() });
            }
            if !(t.abs() <= T_LIMIT) {
                return Err(Error::Overflow { vertex: i, value: *t, limit: T_LIMIT });
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite s at vertex {i}")));
            }
        }
        Ok(())
    }
}

/// A point of `H^n` in ambient coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbientSpin {
    pub x: f64,
    pub y: Vec<f64>,
    pub z: f64,
}

impl AmbientSpin {
    /// Minkowski product `x x' + y.y' - z z'`.
    pub fn dot(&self, other: &AmbientSpin) -> f64 {
        self.x * other.x + self.y.iter().zip(&other.y).map(|(a, b)| a * b).sum::<f64>() - self.z * other.z
    }
}

fn spin(t: f64, s: &[f64]) -> AmbientSpin {
    let et = t.exp();
    let r2: f64 = s.iter().map(|v| v * v).sum();
    AmbientSpin { x: t.sinh() - 0.5 * r2 * et, y: s.iter().map(|v| et * v).collect(), z: t.cosh() + 0.5 * r2 * et }
}

pub fn ambient_from_horo(config: &HnConfig) -> Result<Vec<AmbientSpin>> {
    config.validate()?;
    Ok(config.t.iter().zip(&config.s).map(|(&t, s)| spin(t, s)).collect())
}

fn check_graph(graph: &WeightedGraph, config: &HnConfig) -> Result<()> {
    if graph.n_vertices() != config.n_vertices() {
        return Err(Error::DimensionMismatch { expected: graph.n_vertices(), got: config.n_vertices() });
    }
    config.validate()
}

fn horo_energy_unchecked(graph: &WeightedGraph, t: &[f64], s: &[Vec<f64>]) -> f64 {
    let mut e = 0.0;
    for (i, j, b) in graph.edges() {
        let d2: f64 = s[i].iter().zip(&s[j]).map(|(a, c)| (a - c) * (a - c)).sum();
        e += b * ((t[i] - t[j]).cosh() - 1.0 + 0.5 * d2 * (t[i] + t[j]).exp());
    }
    for i in 0..t.len() {
        let r2: f64 = s[i].iter().map(|v| v * v).sum();
        e += graph.h(i) * (t[i].cosh() - 1.0 + 0.5 * r2 * t[i].exp());
    }
    e
}

/// `H(t, s~)` in horospherical form.
pub fn energy_horo(graph: &WeightedGraph, config: &HnConfig) -> Result<f64> {
    check_graph(graph, config)?;
    Ok(horo_energy_unchecked(graph, &config.t, &config.s))
}

/// `-sum beta_ij (u_i . u_j + 1) + sum h_i (z_i - 1)`.
pub fn energy_ambient(graph: &WeightedGraph, spins: &[AmbientSpin]) -> Result<f64> {
    if spins.len() != graph.n_vertices() {
        return Err(Error::DimensionMismatch { expected: graph.n_vertices(), got: spins.len() });
    }
    let mut e = 0.0;
    for (i, j, b) in graph.edges() {
        e -= b * (spins[i].dot(&spins[j]) + 1.0);
    }
    for (i, u) in spins.iter().enumerate() {
        e += graph.h(i) * (u.z - 1.0);
    }
    Ok(e)
}

/// Diagnostics row at a retained sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HnDiag {
    pub sweep: u64,
    pub energy: f64,
    pub acceptance_rate: f64,
    pub t_0: f64,
    pub y_0: f64,
}

/// Retained samples of an `H^n` chain.
#[derive(Clone, Debug)]
pub struct HnChain {
    pub n: usize,
    pub samples: Vec<HnConfig>,
    pub diagnostics: Vec<HnDiag>,
    pub summary: ChainSummary,
}

impl HnChain {
    /// Per-sample values of an observable of the ambient spins.
    pub fn series(&self, f: impl Fn(&[AmbientSpin]) -> f64) -> Vec<f64> {
        self.series_vec(f)
    }

    /// Per-sample values of any function of the ambient spins.
    pub fn series_vec<T>(&self, f: impl Fn(&[AmbientSpin]) -> T) -> Vec<T> {
        self.samples
            .iter()
            .map(|c| {
                let spins: Vec<AmbientSpin> = c.t.iter().zip(&c.s).map(|(&t, s)| spin(t, s)).collect();
                f(&spins)
            })
            .collect()
    }
}

fn diag_row(graph: &WeightedGraph, c: &HnConfig, sweep: u64, acceptance_rate: f64) -> HnDiag {
    HnDiag {
        sweep,
        energy: horo_energy_unchecked(graph, &c.t, &c.s),
        acceptance_rate,
        t_0: c.t[0],
        y_0: c.t[0].exp() * c.s[0][0],
    }
}

/// Block sampler: t-marginal Metropolis, then exact Gaussian `s~ | t`.
pub fn sample_hn<R: Rng + ?Sized>(graph: &WeightedGraph, n: usize, params: &McmcParams, rng: &mut R) -> Result<HnChain> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("H^n needs n >= 2, got {n}")));
    }
    let mut chain = TChain::new(graph, TTarget::hn(n), params)?;
    let nv = graph.n_vertices();
    let mut samples = Vec::with_capacity(params.samples);
    let mut diagnostics = Vec::with_capacity(params.samples);
    let summary = chain.run(params, rng, |c, d, rng| {
        let mut s = vec![vec![0.0; n - 1]; nv];
        for r in 0..n - 1 {
            let comp = c.op().sample_gaussian(rng);
            for i in 0..nv {
                s[i][r] = comp[i];
            }
        }
        let config = HnConfig { n, t: c.t().to_vec(), s };
        diagnostics.push(diag_row(graph, &config, d.sweep, d.acceptance));
        samples.push(config);
        Ok(())
    })?;
    Ok(HnChain { n, samples, diagnostics, summary })
}

/// Reference sampler: single-site Metropolis on `(t_i, s~_i)` against the
/// full density `e^{-H} prod e^{(n-1) t_i}`, with no marginalization.
pub fn sample_hn_joint<R: Rng + ?Sized>(graph: &WeightedGraph, n: usize, params: &McmcParams, rng: &mut R) -> Result<HnChain> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("H^n needs n >= 2, got {n}")));
    }
    graph.require_pinning()?;
    params.validate()?;
    let nv = graph.n_vertices();
    let mut cfg = HnConfig::origin(n, nv);
    // Local part of -log density at site i.
    let local = |cfg: &HnConfig, i: usize, t: f64, s: &[f64]| -> f64 {
        let mut e = graph.h(i) * (t.cosh() - 1.0 + 0.5 * s.iter().map(|v| v * v).sum::<f64>() * t.exp());
        for &(j, b) in graph.neighbors(i) {
            let d2: f64 = s.iter().zip(&cfg.s[j]).map(|(a, c)| (a - c) * (a - c)).sum();
            e += b * ((t - cfg.t[j]).cosh() - 1.0 + 0.5 * d2 * (t + cfg.t[j]).exp());
        }
        e - (n as f64 - 1.0) * t
    };
    let mut step_t = vec![params.initial_step; nv];
    let mut step_s = vec![params.initial_step; nv];
    let mut win = vec![[0u64; 4]; nv];
    let mut total = [0u64; 2];
    let sweep = |cfg: &mut HnConfig, step_t: &[f64], step_s: &[f64], win: &mut [[u64; 4]], total: &mut [u64; 2], rng: &mut R| {
        for i in 0..nv {
            let old_e = local(cfg, i, cfg.t[i], &cfg.s[i]);
            let new_t = cfg.t[i] + step_t[i] * normal(rng);
            let ok = new_t.abs() <= crate::tchain::T_GUARD && uniform(rng).ln() < old_e - local(cfg, i, new_t, &cfg.s[i]);
            if ok {
                cfg.t[i] = new_t;
            }
            win[i][0] += ok as u64;
            win[i][1] += 1;
            total[0] += ok as u64;
            total[1] += 1;

            let old_e = local(cfg, i, cfg.t[i], &cfg.s[i]);
            let new_s: Vec<f64> = cfg.s[i].iter().map(|v| v + step_s[i] * normal(rng)).collect();
            let ok = uniform(rng).ln() < old_e - local(cfg, i, cfg.t[i], &new_s);
            if ok {
                cfg.s[i] = new_s;
            }
            win[i][2] += ok as u64;
            win[i][3] += 1;
        }
    };
    let rate = |a: u64, p: u64| if p == 0 { 0.0 } else { a as f64 / p as f64 };
    for k in 1..=params.burn_in_sweeps {
        sweep(&mut cfg, &step_t, &step_s, &mut win, &mut total, rng);
        if k % params.adapt_interval == 0 {
            for i in 0..nv {
                step_t[i] = (step_t[i] * (1.5 * (rate(win[i][0], win[i][1]) - params.target_acceptance)).exp()).clamp(1e-3, 20.0);
                step_s[i] = (step_s[i] * (1.5 * (rate(win[i][2], win[i][3]) - params.target_acceptance)).exp()).clamp(1e-3, 20.0);
                win[i] = [0; 4];
            }
        }
    }
    total = [0; 2];
    let mut samples = Vec::with_capacity(params.samples);
    let mut diagnostics = Vec::with_capacity(params.samples);
    let mut sweeps = params.burn_in_sweeps as u64;
    for _ in 0..params.samples {
        let before = total;
        for _ in 0..params.thin {
            sweep(&mut cfg, &step_t, &step_s, &mut win, &mut total, rng);
            sweeps += 1;
        }
        diagnostics.push(diag_row(graph, &cfg, sweeps, rate(total[0] - before[0], total[1] - before[1])));
        samples.push(cfg.clone());
    }
    let summary = ChainSummary {
        sweeps,
        site_acceptance: rate(total[0], total[1]),
        shift_acceptance: 0.0,
        mean_step: step_t.iter().sum::<f64>() / nv as f64,
        shift_step: 0.0,
    };
    Ok(HnChain { n, samples, diagnostics, summary })
}

/// Normalized `<F>` for `n = 2` on graphs with at most two vertices, by
/// deterministic quadrature. Admissible observables grow at most like a
/// polynomial times `e^{a z}` with `a < h_min`; mass found at the edge of the
/// `t` box is reported as [`Error::Envelope`].
pub fn exact_expectation_hn(graph: &WeightedGraph, n: usize, f: &dyn Fn(&[AmbientSpin]) -> f64, spec: &OracleSpec) -> Result<OracleValue> {
    if n != 2 {
        return Err(Error::InvalidArgument(format!("quadrature oracle implemented for n = 2 only, got {n}")));
    }
    let nv = graph.n_vertices();
    if nv > 2 {
        return Err(Error::InvalidArgument(format!("quadrature oracle supports at most 2 vertices, got {nv}")));
    }
    graph.require_pinning()?;
    let problem = Problem { graph, target: TTarget::hn(n), components: n - 1 };
    let m = n - 1;
    let obs = |p: &Point| {
        let spins: Vec<AmbientSpin> = (0..nv).map(|i| spin(p.t[i], &p.s[i * m..(i + 1) * m])).collect();
        f(&spins)
    };
    problem.integrate(spec, &obs, true, 1.0)
}

/// One closed-form versus finite-difference comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub numeric: f64,
    pub closed_form: f64,
    pub abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub checks: Vec<IdentityCheck>,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityReport {
    fn new(checks: Vec<IdentityCheck>, tolerance: f64) -> Self {
        let max_error = checks.iter().map(|c| c.abs_error).fold(0.0, f64::max);
        Self { checks, max_error, tolerance, pass: max_error <= tolerance }
    }
}

/// Finite-difference step for first derivatives.
pub const FD_STEP: f64 = 1e-5;
/// Step for second differences. Every second-derivative identity involves a
/// function quadratic in `s`, so central second differences have no
/// truncation error and a larger step only reduces cancellation.
pub const FD_STEP_SECOND: f64 = 1e-3;

/// Check the first and second `s`-derivative relations of the horospherical
/// map at `point`, for each component `r` in `directions`, by central
/// differences ([`FD_STEP`], [`FD_STEP_SECOND`]):
///
/// * `dz_i/ds_i = y_i`, `dy_i/ds_i = x_i + z_i`,
///   `d(u_i . u_j)/ds_i = y_j (x_i + z_i) - y_i (x_j + z_j)`;
/// * `d^2 z_j/ds_j^2 = x_j + z_j`;
/// * `d^2 (-1 - u_j . u_l)/ds_i ds_l` is `-(x_j+z_j)(x_l+z_l)` for `i = j`,
///   `+(x_j+z_j)(x_l+z_l)` for `i = l`, and 0 otherwise (`j != l`).
pub fn verify_coordinate_identities(point: &HnConfig, directions: &[usize]) -> Result<IdentityReport> {
    point.validate()?;
    let nv = point.n_vertices();
    let h = FD_STEP;
    let h2 = FD_STEP_SECOND;
    let mut checks = Vec::new();
    let spins = ambient_from_horo(point)?;
    let shifted = |moves: &[(usize, usize, f64)]| -> Vec<AmbientSpin> {
        let mut c = point.clone();
        for &(i, r, d) in moves {
            c.s[i][r] += d;
        }
        c.t.iter().zip(&c.s).map(|(&t, s)| spin(t, s)).collect()
    };
    let mut push = |name: String, numeric: f64, closed: f64| {
        checks.push(IdentityCheck { name, numeric, closed_form: closed, abs_error: (numeric - closed).abs() });
    };
    for &r in directions {
        if r + 1 >= point.n {
            return Err(Error::InvalidArgument(format!("direction {r} out of range for n = {}", point.n)));
        }
        for i in 0..nv {
            let (p, m) = (shifted(&[(i, r, h)]), shifted(&[(i, r, -h)]));
            let u = &spins[i];
            push(format!("dz/ds[{i},{r}]"), (p[i].z - m[i].z) / (2.0 * h), u.y[r]);
            push(format!("dy/ds[{i},{r}]"), (p[i].y[r] - m[i].y[r]) / (2.0 * h), u.x + u.z);
            let (p2, m2) = (shifted(&[(i, r, h2)]), shifted(&[(i, r, -h2)]));
            push(format!("d2z/ds2[{i},{r}]"), (p2[i].z - 2.0 * u.z + m2[i].z) / (h2 * h2), u.x + u.z);
            for j in 0..nv {
                if j == i {
                    continue;
                }
                let v = &spins[j];
                push(
                    format!("d(u.u)/ds[{i},{j},{r}]"),
                    (p[i].dot(&p[j]) - m[i].dot(&m[j])) / (2.0 * h),
                    v.y[r] * (u.x + u.z) - u.y[r] * (v.x + v.z),
                );
            }
        }
        for j in 0..nv {
            for l in 0..nv {
                if j == l {
                    continue;
                }
                let e = (spins[j].x + spins[j].z) * (spins[l].x + spins[l].z);
                for i in 0..nv {
                    let f = |d1: f64, d2: f64| {
                        let s = shifted(&[(i, r, d1), (l, r, d2)]);
                        -1.0 - s[j].dot(&s[l])
                    };
                    let numeric = (f(h2, h2) - f(h2, -h2) - f(-h2, h2) + f(-h2, -h2)) / (4.0 * h2 * h2);
                    let closed = if i == j {
                        -e
                    } else if i == l {
                        e
                    } else {
                        0.0
                    };
                    push(format!("d2(-1-u.u)/ds ds[{i};{j},{l},{r}]"), numeric, closed);
                }
            }
        }
    }
    Ok(IdentityReport::new(checks, 1e-6 * scale_of(&spins)))
}

/// Finite-difference errors scale with the size of the coordinates.
fn scale_of(spins: &[AmbientSpin]) -> f64 {
    spins.iter().map(|u| u.z * u.z).fold(1.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    pub numeric: f64,
    pub closed_form: f64,
    pub rel_error: f64,
    pub pass: bool,
}

/// Determinant of the Jacobian of `(t, s~) -> (x, y~)` at one site, by
/// central differences, against `e^{(n-1) t} z`.
pub fn verify_jacobian_hn(n: usize, t: f64, s: &[f64]) -> Result<JacobianReport> {
    if !(n == 2 || n == 3) {
        return Err(Error::InvalidArgument(format!("jacobian check implemented for n = 2, 3; got {n}")));
    }
    HnConfig { n, t: vec![t], s: vec![s.to_vec()] }.validate()?;
    let map = |v: &[f64]| -> Vec<f64> {
        let u = spin(v[0], &v[1..]);
        let mut out = vec![u.x];
        out.extend(u.y);
        out
    };
    let mut point = vec![t];
    point.extend_from_slice(s);
    let h = FD_STEP;
    let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
    for c in 0..n {
        let mut p = point.clone();
        p[c] += h;
        let fp = map(&p);
        p[c] -= 2.0 * h;
        let fm = map(&p);
        for r in 0..n {
            jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    let numeric = jac.determinant();
    let closed_form = ((n as f64 - 1.0) * t).exp() * spin(t, s).z;
    let rel_error = ((numeric - closed_form) / closed_form).abs();
    Ok(JacobianReport { numeric, closed_form, rel_error, pass: rel_error < 1e-6 })
}
