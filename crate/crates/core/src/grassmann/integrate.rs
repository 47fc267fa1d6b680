//! Superintegration: `int F = int F_top(x, y) prod_i dx_i dy_i / (2 pi)`,
//! with `F_top` the coefficient of `eta_1 xi_1 ... eta_m xi_m`.
//!
//! Each plane `(x_i, y_i)` is written in polar form with `r = sinh u`,
//! `u in [0, U]` (Gauss-Legendre) and a periodic trapezoid rule in the angle.
//! With two vertices the angles are `theta_1 = g` and `theta_2 = g + phi`;
//! integrands built from rotation-invariant actions depend smoothly and
//! weakly on `g`, so fewer global-angle nodes are used than relative ones.
//! The relative angle limits accuracy (the coupling `e^{beta r_1 r_2 cos phi}`
//! is peaked); it doubles per level while the other resolutions grow slowly.

use serde::{Deserialize, Serialize};

use super::algebra::Supernumber;
use super::form::{eval_at, apply_q, h22_action, Form, FormContext};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::quad::{gauss_legendre, periodic, Rule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperQuadSpec {
    pub tol: f64,
    /// Radial cut-off `U` in `r = sinh u`.
    pub radial_max: f64,
    pub max_level: usize,
    pub base_radial: usize,
    pub base_angle: usize,
    pub base_global: usize,
}

impl Default for SuperQuadSpec {
    fn default() -> Self {
        Self { tol: 1e-8, radial_max: 4.0, max_level: 3, base_radial: 24, base_angle: 48, base_global: 4 }
    }
}

impl SuperQuadSpec {
    /// Radial cut-off where `h (z - 1) >= 60` for every vertex.
    pub fn for_field(h_min: f64) -> Self {
        Self { radial_max: (1.0 + 60.0 / h_min).acosh(), ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperQuadResult {
    pub value: f64,
    pub error: f64,
    /// Estimated contribution beyond the radial cut-off.
    pub tail: f64,
    pub levels: usize,
    pub evaluations: usize,
}

struct LevelOut {
    value: f64,
    scale: f64,
    tail: f64,
    evaluations: usize,
}

fn radial_rule(n: usize, u_max: f64) -> (Rule, Vec<f64>) {
    let rule = gauss_legendre(n, 0.0, u_max);
    // r dr = sinh u cosh u du
    let jac = rule.nodes.iter().map(|u| u.sinh() * u.cosh()).collect();
    (rule, jac)
}

fn top_at(form: &Form, point: &[f64]) -> Result<f64> {
    let v = eval_at(form, point)?.top();
    if !v.is_finite() {
        return Err(Error::Quadrature(format!("top coefficient not finite at {point:?}")));
    }
    Ok(v)
}

fn level_one(form: &Form, spec: &SuperQuadSpec, k: usize) -> Result<LevelOut> {
    // One plane: the radial direction carries the structure, so it doubles.
    let (ru, jac) = radial_rule(spec.base_radial << k, spec.radial_max);
    let ang = periodic(spec.base_angle + 16 * k);
    let mut value = 0.0;
    let mut scale = 0.0;
    for (a, (&u, &w)) in ru.nodes.iter().zip(&ru.weights).enumerate() {
        let r = u.sinh();
        for (&th, &wt) in ang.nodes.iter().zip(&ang.weights) {
            let t = top_at(form, &[r * th.cos(), r * th.sin()])?;
            let wgt = w * jac[a] * wt / std::f64::consts::TAU;
            value += wgt * t;
            scale += wgt * t.abs();
        }
    }
    let r = spec.radial_max.sinh();
    let jb = r * spec.radial_max.cosh();
    let mut tail: f64 = 0.0;
    for &th in &ang.nodes {
        tail = tail.max(top_at(form, &[r * th.cos(), r * th.sin()])?.abs() * jb);
    }
    Ok(LevelOut { value, scale, tail, evaluations: ru.len() * ang.len() })
}

fn level_two(form: &Form, spec: &SuperQuadSpec, k: usize) -> Result<LevelOut> {
    grid_two(form, spec.radial_max, spec.base_radial + 8 * k, spec.base_angle << k, spec.base_global + 2 * k)
}

fn grid_two(form: &Form, radial_max: f64, n_u: usize, n_phi: usize, n_g: usize) -> Result<LevelOut> {
    let (ru, jac) = radial_rule(n_u, radial_max);
    let rel = periodic(n_phi);
    let glob = periodic(n_g);
    let norm = 1.0 / (std::f64::consts::TAU * std::f64::consts::TAU);
    let mut value = 0.0;
    let mut scale = 0.0;
    let mut evaluations = 0;
    for (a, (&u1, &w1)) in ru.nodes.iter().zip(&ru.weights).enumerate() {
        let r1 = u1.sinh();
        for (b, (&u2, &w2)) in ru.nodes.iter().zip(&ru.weights).enumerate() {
            let r2 = u2.sinh();
            let wr = w1 * jac[a] * w2 * jac[b] * norm;
            for (&g, &wg) in glob.nodes.iter().zip(&glob.weights) {
                for (&phi, &wp) in rel.nodes.iter().zip(&rel.weights) {
                    let point = [r1 * g.cos(), r1 * g.sin(), r2 * (g + phi).cos(), r2 * (g + phi).sin()];
                    let t = top_at(form, &point)?;
                    value += wr * wg * wp * t;
                    scale += wr * wg * wp * t.abs();
                    evaluations += 1;
                }
            }
        }
    }
    // Boundary face r_1 = sinh U (and symmetrically r_2), integrated over the rest.
    let rb = radial_max.sinh();
    let jb = rb * radial_max.cosh();
    let mut tail = 0.0;
    for first in [true, false] {
        let mut face: f64 = 0.0;
        for (b, (&u2, &w2)) in ru.nodes.iter().zip(&ru.weights).enumerate() {
            let r2 = u2.sinh();
            for (&phi, &wp) in rel.nodes.iter().zip(&rel.weights) {
                let (ra, rb2) = if first { (rb, r2) } else { (r2, rb) };
                let p = [ra, 0.0, rb2 * phi.cos(), rb2 * phi.sin()];
                face += top_at(form, &p)?.abs() * jb * w2 * jac[b] * wp / std::f64::consts::TAU;
            }
        }
        tail += face;
    }
    Ok(LevelOut { value, scale, tail, evaluations })
}

/// `int F` over `(R^{2|2})^m` for `m <= 2`, to relative tolerance `spec.tol`.
pub fn superintegrate(form: &Form, m: usize, spec: &SuperQuadSpec) -> Result<SuperQuadResult> {
    if form.pairs_used() > m {
        return Err(Error::Grassmann(format!("form uses {} vertices, algebra has {m}", form.pairs_used())));
    }
    let level = |k: usize| match m {
        1 => level_one(form, spec, k),
        2 => level_two(form, spec, k),
        _ => Err(Error::InvalidArgument(format!("superintegration implemented for m = 1, 2; got {m}"))),
    };
    let mut prev = level(0)?;
    let mut evaluations = prev.evaluations;
    for k in 1..=spec.max_level {
        let cur = level(k)?;
        evaluations += cur.evaluations;
        let scale = cur.scale.max(cur.value.abs()).max(f64::MIN_POSITIVE);
        let diff = (cur.value - prev.value).abs();
        if diff <= spec.tol * scale {
            if cur.tail > spec.tol * scale {
                return Err(Error::Quadrature(format!(
                    "integrand does not decay: boundary contribution {:e} at radial cut-off {} (scale {scale:e})",
                    cur.tail, spec.radial_max
                )));
            }
            return Ok(SuperQuadResult { value: cur.value, error: diff, tail: cur.tail, levels: k + 1, evaluations });
        }
        prev = cur;
    }
    Err(Error::Quadrature(format!("superintegral did not reach tolerance {:e} in {} levels", spec.tol, spec.max_level)))
}

/// The `H^{2|2}` integrand `F e^{-H} prod_i 1/z_i`.
pub fn h22_integrand(graph: &WeightedGraph, f: Form) -> Form {
    let mut integrand = f * (-h22_action(graph)).exp();
    for i in 0..graph.n_vertices() {
        integrand = integrand * Form::Z(i).recip();
    }
    integrand
}

/// `<F>_{H^{2|2}} = int F e^{-H} prod 1/z_i` on graphs with one or two vertices.
pub fn h22_expectation_exact(graph: &WeightedGraph, f: Form, spec: Option<&SuperQuadSpec>) -> Result<SuperQuadResult> {
    let m = graph.n_vertices();
    if m > 2 {
        return Err(Error::InvalidArgument(format!("exact super-expectation supports at most 2 vertices, got {m}")));
    }
    let default;
    let spec = match spec {
        Some(s) => s,
        None => {
            let h_min = graph.h_values().iter().copied().fold(f64::INFINITY, f64::min);
            default = if h_min > 0.0 { SuperQuadSpec::for_field(h_min) } else { SuperQuadSpec::default() };
            &default
        }
    };
    superintegrate(&h22_integrand(graph, f), m, spec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalisationReport {
    pub q_residual: f64,
    pub integral: SuperQuadResult,
    pub body_at_origin: f64,
    pub difference: f64,
    pub pass: bool,
}

/// Deterministic base points in `[-2, 2]^{2m}` for supersymmetry pre-checks.
pub fn probe_points(m: usize, count: usize) -> Vec<Vec<f64>> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    (0..count)
        .map(|_| {
            (0..2 * m)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((state >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
                })
                .collect()
        })
        .collect()
}

/// Largest `|QF|` coefficient over [`probe_points`], relative to `|F|`.
pub fn supersymmetry_residual(form: &Form, m: usize, count: usize) -> Result<(f64, Vec<f64>)> {
    let mut worst = (0.0, vec![0.0; 2 * m]);
    for p in probe_points(m, count) {
        let scale = eval_at(form, &p)?.coeffs().iter().fold(1.0f64, |a, c| a.max(c.abs()));
        let q = apply_q(form, &p)?;
        let r = q.coeffs().iter().fold(0.0f64, |a, c| a.max(c.abs())) / scale;
        if r > worst.0 {
            worst = (r, p);
        }
    }
    Ok(worst)
}

/// Check `int F = F_{empty,empty}(0)` for a supersymmetric form; refuses
/// forms with `QF != 0` at a probe point.
pub fn localisation_check(form: &Form, m: usize, spec: &SuperQuadSpec) -> Result<LocalisationReport> {
    let (residual, point) = supersymmetry_residual(form, m, 32)?;
    if residual > 1e-10 {
        return Err(Error::NotSupersymmetric { residual, point });
    }
    let integral = superintegrate(form, m, spec)?;
    let origin = vec![0.0; 2 * m];
    let (x, y) = super::form::split_point(&origin)?;
    let body_at_origin = form.eval(&FormContext::ambient(&x, &y)?)?.body();
    let difference = (integral.value - body_at_origin).abs();
    Ok(LocalisationReport { q_residual: residual, pass: difference < 1e-7, integral, body_at_origin, difference })
}

/// Helper for callers that want the whole supernumber at a point.
pub fn evaluate(form: &Form, point: &[f64]) -> Result<Supernumber<f64>> {
    eval_at(form, point)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_against_top_form() {
        // e^{-(x^2+y^2)/2} eta xi integrates to 1.
        let f = (-(Form::X(0) * Form::X(0) + Form::Y(0) * Form::Y(0)).scale(0.5)).exp() * Form::Eta(0) * Form::Xi(0);
        let r = superintegrate(&f, 1, &SuperQuadSpec::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9, "{r:?}");
        let zero_top = (-(Form::X(0) * Form::X(0))).exp();
        assert!(superintegrate(&zero_top, 1, &SuperQuadSpec::default()).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn exp_minus_tau_localises() {
        let f = (-Form::Tau(0, 0)).exp();
        let r = localisation_check(&f, 1, &SuperQuadSpec::default()).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn non_supersymmetric_form_refused() {
        let f = (-Form::Tau(0, 0)).exp() * Form::X(0);
        assert!(matches!(localisation_check(&f, 1, &SuperQuadSpec::default()), Err(Error::NotSupersymmetric { .. })));
    }

    #[test]
    fn single_vertex_expectations() {
        let g = WeightedGraph::single_vertex(0.5).unwrap();
        let one = h22_expectation_exact(&g, Form::c(1.0), None).unwrap();
        assert!((one.value - 1.0).abs() < 1e-8, "{one:?}");
        let z = h22_expectation_exact(&g, Form::Z(0), None).unwrap();
        assert!((z.value - 1.0).abs() < 1e-8, "{z:?}");
        let yy = h22_expectation_exact(&g, Form::Y(0) * Form::Y(0), None).unwrap();
        assert!((yy.value - 2.0).abs() < 1e-8, "{yy:?}");
    }

    #[test]
    fn slow_decay_detected() {
        let f = (-(Form::X(0) * Form::X(0) + Form::Y(0) * Form::Y(0)).scale(1e-4)).exp() * Form::Eta(0) * Form::Xi(0);
        let spec = SuperQuadSpec { radial_max: 2.0, ..SuperQuadSpec::default() };
        assert!(superintegrate(&f, 1, &spec).is_err());
    }
}
