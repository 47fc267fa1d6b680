//! Supersymmetric horospherical coordinates
//!
//! ```text
//! x = sinh t - e^t (s^2/2 + psibar psi),  y = e^t s,
//! z = cosh t + e^t (s^2/2 + psibar psi),  xi = e^t psibar,  eta = e^t psi,
//! ```
//!
//! with `psibar_i` in the `xi_i` generator slot and `psi_i` in the `eta_i` slot,
//! so `xi_i eta_i = e^{2 t_i} psibar_i psi_i` and `z^2 = 1 + x^2 + y^2 + 2 xi eta`.

use serde::{Deserialize, Serialize};

use super::algebra::{Gen, Supernumber};
use super::form::{Form, FormContext};
use super::integrate::SuperQuadResult;
use super::scalar::{Dual, HyperDual, Scalar};
use crate::error::{Error, Result};
use crate::quad::gauss_legendre;

/// Image of `(t, s, psibar, psi)` for every vertex.
#[derive(Clone, Debug)]
pub struct HoroSusyPoint<S: Scalar> {
    pub x: Vec<Supernumber<S>>,
    pub y: Vec<Supernumber<S>>,
    pub z: Vec<Supernumber<S>>,
    pub xi: Vec<Supernumber<S>>,
    pub eta: Vec<Supernumber<S>>,
}

impl<S: Scalar> HoroSusyPoint<S> {
    pub fn m(&self) -> usize {
        self.x.len()
    }

    /// Context for evaluating ambient forms at the image point.
    pub fn context(&self) -> Result<FormContext<S>> {
        FormContext::new(self.x.clone(), self.y.clone(), self.xi.clone(), self.eta.clone())
    }

    /// `u_i . u_j = x_i x_j + y_i y_j - z_i z_j + xi_i eta_j - eta_i xi_j`.
    pub fn inner(&self, i: usize, j: usize) -> Supernumber<S> {
        &self.x[i] * &self.x[j] + &self.y[i] * &self.y[j] - &self.z[i] * &self.z[j] + &self.xi[i] * &self.eta[j]
            - &self.eta[i] * &self.xi[j]
    }
}

/// The map on `m = t.len()` vertices; `psibar_i, psi_i` are the generators
/// `Xi(i), Eta(i)` of the `m`-pair algebra.
pub fn horo_susy_map<S: Scalar>(t: &[S], s: &[S]) -> Result<HoroSusyPoint<S>> {
    let m = t.len();
    if s.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: s.len() });
    }
    if m == 0 || m > super::algebra::MAX_PAIRS {
        return Err(Error::Grassmann(format!("need 1..={} vertices, got {m}", super::algebra::MAX_PAIRS)));
    }
    let mut out = HoroSusyPoint { x: vec![], y: vec![], z: vec![], xi: vec![], eta: vec![] };
    for i in 0..m {
        let (ti, si) = (t[i], s[i]);
        let tv = ti.value();
        if !tv.is_finite() || !si.value().is_finite() || tv.abs() > 700.0 {
            return Err(Error::Overflow { vertex: i, value: tv, limit: 700.0 });
        }
        let et = ti.chain(&[tv.exp(); 3]);
        let ch = ti.chain(&[tv.cosh(), tv.sinh(), tv.cosh()]);
        let sh = ti.chain(&[tv.sinh(), tv.cosh(), tv.sinh()]);
        let psibar = Supernumber::<S>::xi(m, i);
        let psi = Supernumber::<S>::eta(m, i);
        let w = Supernumber::scalar(m, si * si * S::from_f64(0.5)) + &psibar * &psi;
        let ew = w.scale_by(et);
        out.x.push(Supernumber::scalar(m, sh) - &ew);
        out.y.push(Supernumber::scalar(m, et * si));
        out.z.push(Supernumber::scalar(m, ch) + &ew);
        out.xi.push(psibar.scale_by(et));
        out.eta.push(psi.scale_by(et));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperIdentityCheck {
    pub name: String,
    pub point: usize,
    pub max_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperIdentityReport {
    pub checks: Vec<SuperIdentityCheck>,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl SuperIdentityReport {
    fn from_checks(checks: Vec<SuperIdentityCheck>, tolerance: f64) -> Self {
        let max_error = checks.iter().map(|c| c.max_error).fold(0.0, f64::max);
        Self { pass: max_error <= tolerance && checks.iter().all(|c| c.max_error.is_finite()), checks, max_error, tolerance }
    }
}

fn rel(a: &Supernumber<f64>, b: &Supernumber<f64>) -> f64 {
    let scale = b.coeffs().iter().fold(1.0f64, |acc, c| acc.max(c.abs()));
    a.max_abs_diff(b) / scale
}

/// Coefficient-exact checks of the closed forms for `z`, `-u_i . u_j` and the
/// `s`-derivatives at each `(t, s)` point (relative tolerance `1e-12`).
pub fn verify_susy_horo_identities(points: &[(Vec<f64>, Vec<f64>)]) -> Result<SuperIdentityReport> {
    let mut checks = Vec::new();
    for (p, (t, s)) in points.iter().enumerate() {
        let m = t.len();
        let img = horo_susy_map(t, s)?;
        let mut push = |name: String, err: f64| checks.push(SuperIdentityCheck { name, point: p, max_error: err });
        for i in 0..m {
            let ctx = img.context()?;
            push(format!("z{} = sqrt(1+x^2+y^2+2 xi eta)", i + 1), rel(&img.z[i], &ctx.z(i)?));
            push(format!("u{0}.u{0} = -1", i + 1), rel(&img.inner(i, i), &Supernumber::constant(m, -1.0)));
        }
        for i in 0..m {
            for j in i + 1..m {
                let e = (t[i] + t[j]).exp();
                let dpb = Supernumber::<f64>::xi(m, i) - Supernumber::xi(m, j);
                let dp = Supernumber::<f64>::eta(m, i) - Supernumber::eta(m, j);
                let closed = Supernumber::constant(m, (t[i] - t[j]).cosh() + 0.5 * (s[i] - s[j]).powi(2) * e)
                    + (dpb * dp).scale(e);
                push(format!("-u{}.u{} closed form", i + 1, j + 1), rel(&(-img.inner(i, j)), &closed));
            }
        }
        // s-derivatives: seed s_i in both hyperdual directions.
        for i in 0..m {
            let th: Vec<HyperDual> = t.iter().map(|v| HyperDual::from_f64(*v)).collect();
            let sh: Vec<HyperDual> =
                s.iter().enumerate().map(|(k, v)| if k == i { HyperDual::new(*v, 1.0, 1.0) } else { HyperDual::from_f64(*v) }).collect();
            let d = horo_susy_map(&th, &sh)?;
            let first = |a: &Supernumber<HyperDual>| a.map(|c| c.a);
            let second = |a: &Supernumber<HyperDual>| a.map(|c| c.ab);
            let v = |a: &Supernumber<HyperDual>| a.values();
            let l = i + 1;
            push(format!("dz{l}/ds{l} = y{l}"), rel(&first(&d.z[i]), &v(&d.y[i])));
            push(format!("dy{l}/ds{l} = x{l}+z{l}"), rel(&first(&d.y[i]), &(v(&d.x[i]) + v(&d.z[i]))));
            push(format!("d2z{l}/ds{l}2 = x{l}+z{l}"), rel(&second(&d.z[i]), &(v(&d.x[i]) + v(&d.z[i]))));
            for j in 0..m {
                if j == i {
                    continue;
                }
                let lhs = first(&d.inner(i, j));
                let rhs = v(&d.y[j]) * (v(&d.x[i]) + v(&d.z[i])) - v(&d.y[i]) * (v(&d.x[j]) + v(&d.z[j]));
                push(format!("d(u{l}.u{})/ds{l}", j + 1), rel(&lhs, &rhs));
            }
        }
    }
    Ok(SuperIdentityReport::from_checks(checks, 1e-12))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerezinianPoint {
    pub t: f64,
    pub s: f64,
    /// Coefficients of `sdet M / z` by generator bitmask.
    pub ratio: Vec<f64>,
    pub max_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerezinianReport {
    pub points: Vec<BerezinianPoint>,
    pub max_error: f64,
    pub pass: bool,
}

type Sn = Supernumber<f64>;

fn det2(a: &[[Sn; 2]; 2]) -> Sn {
    &a[0][0] * &a[1][1] - &a[0][1] * &a[1][0]
}

/// Superdeterminant of the single-vertex map's supermatrix. Rows are the
/// source coordinates `(t, s | psi, psibar)`, columns the targets
/// `(x, y | eta, xi)`, entries `d(column)/d(row)` with left odd derivatives.
pub fn berezinian(t: f64, s: f64) -> Result<Sn> {
    let img = horo_susy_map(&[Dual::variable(t, 0)], &[Dual::variable(s, 1)])?;
    let cols = [&img.x[0], &img.y[0], &img.eta[0], &img.xi[0]];
    let even_d = |f: &Supernumber<Dual>, dir: usize| f.map(|c| c.d[dir]);
    let odd_d = |f: &Supernumber<Dual>, g: Gen| f.values().left_derivative(g);
    let odd_rows = [Gen::Eta(0), Gen::Xi(0)];
    let a = [[even_d(cols[0], 0), even_d(cols[1], 0)], [even_d(cols[0], 1), even_d(cols[1], 1)]];
    let b = [[even_d(cols[2], 0), even_d(cols[3], 0)], [even_d(cols[2], 1), even_d(cols[3], 1)]];
    let c = [[odd_d(cols[0], odd_rows[0]), odd_d(cols[1], odd_rows[0])], [odd_d(cols[0], odd_rows[1]), odd_d(cols[1], odd_rows[1])]];
    let d = [[odd_d(cols[2], odd_rows[0]), odd_d(cols[3], odd_rows[0])], [odd_d(cols[2], odd_rows[1]), odd_d(cols[3], odd_rows[1])]];
    let det_d = det2(&d);
    if det_d.body().abs() < 1e-300 {
        return Err(Error::Grassmann(format!("odd block of the supermatrix is singular at t = {t}, s = {s}")));
    }
    let inv_det = det_d.recip()?;
    let d_inv = [[&d[1][1] * &inv_det, -(&d[0][1] * &inv_det)], [-(&d[1][0] * &inv_det), &d[0][0] * &inv_det]];
    let mut schur: [[Sn; 2]; 2] = a.clone();
    for r in 0..2 {
        for col in 0..2 {
            let mut acc = Sn::zero(1);
            for k in 0..2 {
                for l in 0..2 {
                    acc = acc + &b[r][k] * &d_inv[k][l] * &c[l][col];
                }
            }
            schur[r][col] = &a[r][col] - &acc;
        }
    }
    Ok(det2(&schur) * inv_det)
}

/// `sdet M / z = e^{-t}` in every coefficient, relative tolerance `1e-12`.
pub fn verify_berezinian(points: &[(f64, f64)]) -> Result<BerezinianReport> {
    let mut out = Vec::new();
    for &(t, s) in points {
        let sdet = berezinian(t, s)?;
        let z = horo_susy_map(&[t], &[s])?.z[0].clone();
        let ratio = sdet * z.recip()?;
        let expect = Sn::constant(1, (-t).exp());
        let max_error = ratio.max_abs_diff(&expect) / (-t).exp();
        out.push(BerezinianPoint { t, s, ratio: ratio.coeffs().to_vec(), max_error });
    }
    let max_error = out.iter().map(|p| p.max_error).fold(0.0, f64::max);
    Ok(BerezinianReport { pass: max_error <= 1e-12, points: out, max_error })
}

/// Single-vertex superintegral in horospherical coordinates,
/// `int (F~ z e^{-t})_top dt ds / (2 pi)`, with `F~` the pulled-back form.
/// Quadrature runs over `(t, y = e^t s)` on `[-T, T]^2` (`T = box_half_width`).
pub fn horo_superintegral(form: &Form, box_half_width: f64, tol: f64) -> Result<SuperQuadResult> {
    if form.pairs_used() > 1 {
        return Err(Error::Grassmann("horospherical superintegral is single-vertex".into()));
    }
    let level = |n: usize| -> Result<f64> {
        let rule = gauss_legendre(n, -box_half_width, box_half_width);
        let mut acc = 0.0;
        for (&t, &wt) in rule.nodes.iter().zip(&rule.weights) {
            for (&y, &wy) in rule.nodes.iter().zip(&rule.weights) {
                let s = y * (-t).exp();
                let img = horo_susy_map(&[t], &[s])?;
                let f = form.eval(&img.context()?)?;
                let integrand = f * &img.z[0] * Sn::constant(1, (-t).exp());
                // ds = e^{-t} dy
                acc += wt * wy * integrand.top() * (-t).exp();
            }
        }
        Ok(acc / std::f64::consts::TAU)
    };
    let mut n = 48;
    let mut prev = level(n)?;
    let mut evaluations = n * n;
    for k in 1..=4 {
        n *= 2;
        let cur = level(n)?;
        evaluations += n * n;
        let diff = (cur - prev).abs();
        if diff <= tol * cur.abs().max(1.0) {
            return Ok(SuperQuadResult { value: cur, error: diff, tail: 0.0, levels: k + 1, evaluations });
        }
        prev = cur;
    }
    Err(Error::Quadrature(format!("horospherical superintegral did not converge to {tol:e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::integrate::{superintegrate, SuperQuadSpec};

    #[test]
    fn origin_values() {
        let img = horo_susy_map(&[0.0], &[0.0]).unwrap();
        let pp = Sn::xi(1, 0) * Sn::eta(1, 0);
        assert_eq!(img.x[0], -pp.clone());
        assert_eq!(img.z[0], Sn::one(1) + pp);
        assert_eq!(img.inner(0, 0), Sn::constant(1, -1.0));
    }

    #[test]
    fn identities_at_random_points() {
        let pts = vec![
            (vec![0.3, -1.1], vec![0.7, 0.2]),
            (vec![-0.4, 0.9], vec![-1.3, 2.1]),
            (vec![1.5], vec![-0.6]),
        ];
        let r = verify_susy_horo_identities(&pts).unwrap();
        assert!(r.pass, "{:#?}", r.checks.iter().filter(|c| c.max_error > 1e-12).collect::<Vec<_>>());
    }

    #[test]
    fn berezinian_ratio() {
        let r = verify_berezinian(&[(0.0, 0.0), (1.0, 0.0), (-0.7, 1.3), (2.0, -0.5)]).unwrap();
        assert!(r.pass, "{r:#?}");
        let sdet = berezinian(0.0, 0.0).unwrap();
        assert_eq!(sdet, Sn::one(1) + Sn::xi(1, 0) * Sn::eta(1, 0));
    }

    #[test]
    fn ambient_and_horospherical_agree() {
        let gauss = (-(Form::X(0) * Form::X(0) + Form::Y(0) * Form::Y(0)).scale(0.5)).exp();
        let f = gauss.clone() * (Form::c(1.0) + Form::X(0).scale(0.3) + Form::Eta(0) * Form::Xi(0));
        let ambient = superintegrate(&f, 1, &SuperQuadSpec::default()).unwrap().value;
        let horo = horo_superintegral(&f, 6.0, 1e-10).unwrap().value;
        assert!((ambient - horo).abs() < 1e-7, "{ambient} vs {horo}");
    }
}
