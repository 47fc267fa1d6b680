//! Deterministic quadrature rules.
//!
//! * Gauss-Hermite rules for Gaussian-weighted integrals (probabilists'
//!   convention, weights summing to one), computed by Golub-Welsch.
//! * Trapezoid rules on truncated intervals. For integrands that are analytic
//!   in a strip and decay fast (everything built from `exp(-h cosh t)`), the
//!   trapezoid error decays exponentially in the number of nodes.
//! * An exp-sinh mapped trapezoid rule for `[0, inf)`.
//! * Adaptive Gauss-Kronrod (7/15) for one-dimensional integrals.
//! * [`refine`], which doubles resolution until successive levels agree.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A one-dimensional rule: `sum_k w_k f(x_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Gauss-Hermite rule for `E[f(Z)]`, `Z ~ N(0, 1)`.
pub fn gauss_hermite(order: usize) -> Rule {
    assert!(order >= 1);
    if order == 1 {
        return Rule { nodes: vec![0.0], weights: vec![1.0] };
    }
    // Jacobi matrix of the probabilists' Hermite recurrence.
    let mut jac = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let b = (k as f64).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize to remove eigen-solver asymmetry.
    let n = pairs.len();
    for i in 0..n / 2 {
        let x = 0.5 * (pairs[n - 1 - i].0 - pairs[i].0);
        let w = 0.5 * (pairs[n - 1 - i].1 + pairs[i].1);
        pairs[i] = (-x, w);
        pairs[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
    }
}

/// Gauss-Legendre rule on `[a, b]`, by Golub-Welsch.
pub fn gauss_legendre(order: usize, a: f64, b: f64) -> Rule {
    assert!(order >= 1 && b > a);
    let mut jac = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let kf = k as f64;
        let off = kf / (4.0 * kf * kf - 1.0).sqrt();
        jac[(k, k - 1)] = off;
        jac[(k - 1, k)] = off;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], 2.0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let n = pairs.len();
    for i in 0..n / 2 {
        let x = 0.5 * (pairs[n - 1 - i].0 - pairs[i].0);
        let w = 0.5 * (pairs[n - 1 - i].1 + pairs[i].1);
        pairs[i] = (-x, w);
        pairs[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    Rule {
        nodes: pairs.iter().map(|p| mid + half * p.0).collect(),
        weights: pairs.iter().map(|p| half * 2.0 * p.1 / total).collect(),
    }
}

/// Trapezoid rule on `[a, b]` with `intervals` equal steps.
pub fn trapezoid(a: f64, b: f64, intervals: usize) -> Rule {
    assert!(intervals >= 1 && b > a);
    let step = (b - a) / intervals as f64;
    let nodes: Vec<f64> = (0..=intervals).map(|k| a + step * k as f64).collect();
    let mut weights = vec![step; intervals + 1];
    weights[0] *= 0.5;
    weights[intervals] *= 0.5;
    Rule { nodes, weights }
}

/// Periodic trapezoid rule on `[0, 2 pi)`.
pub fn periodic(points: usize) -> Rule {
    let step = std::f64::consts::TAU / points as f64;
    Rule { nodes: (0..points).map(|k| step * k as f64).collect(), weights: vec![step; points] }
}

/// Exp-sinh rule for `int_0^inf f(r) dr`: `r = exp(pi/2 sinh u)`, trapezoid in
/// `u` with step `step` on `[-u_max, u_max]`.
pub fn exp_sinh(step: f64, u_max: f64) -> Rule {
    let half = std::f64::consts::FRAC_PI_2;
    let k_max = (u_max / step).ceil() as i64;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for k in -k_max..=k_max {
        let u = k as f64 * step;
        let r = (half * u.sinh()).exp();
        let dr = r * half * u.cosh();
        if r.is_finite() && dr.is_finite() && r > 0.0 {
            nodes.push(r);
            weights.push(step * dr);
        }
    }
    Rule { nodes, weights }
}

/// Outcome of a quadrature with its error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Evaluate `level(k)` for `k = 0, 1, ...` until two successive levels agree
/// to `tol * max(1, |value|)`; the error estimate is the last difference.
pub fn refine(mut level: impl FnMut(usize) -> Result<f64>, tol: f64, max_level: usize) -> Result<QuadResult> {
    let mut prev = level(0)?;
    for k in 1..=max_level {
        let cur = level(k)?;
        let diff = (cur - prev).abs();
        if diff <= tol * cur.abs().max(1.0) {
            return Ok(QuadResult { value: cur, error: diff, evaluations: k + 1 });
        }
        prev = cur;
    }
    Err(Error::Quadrature(format!("no convergence to {tol:e} after {max_level} refinements (last {prev})")))
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = GK_WEIGHTS[7] * fc;
    let mut gauss = G7_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = hw * GK_NODES[i];
        let s = f(c - dx) + f(c + dx);
        kron += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += G7_WEIGHTS[i / 2] * s;
        }
    }
    (kron * hw, ((kron - gauss) * hw).abs())
}

/// Adaptive Gauss-Kronrod 7/15 on a finite interval, bisecting the interval
/// with the largest error estimate until the total error is below
/// `max(abs_tol, rel_tol * |value|)`.
pub fn adaptive_gk(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64, max_intervals: usize) -> Result<QuadResult> {
    let (v, e) = gk15(&mut f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    let mut evals = 15;
    loop {
        let value: f64 = intervals.iter().map(|iv| iv.2).sum();
        let error: f64 = intervals.iter().map(|iv| iv.3).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(QuadResult { value, error, evaluations: evals });
        }
        if intervals.len() >= max_intervals {
            return Err(Error::Quadrature(format!(
                "adaptive GK: error {error:e} above tolerance after {max_intervals} intervals"
            )));
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        evals += 30;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        let r = gauss_hermite(12);
        assert!((r.integrate(|_| 1.0) - 1.0).abs() < 1e-14);
        assert!(r.integrate(|x| x).abs() < 1e-14);
        assert!((r.integrate(|x| x * x) - 1.0).abs() < 1e-13);
        assert!((r.integrate(|x| x.powi(4)) - 3.0).abs() < 1e-12);
        assert!((r.integrate(|x| x.powi(10)) - 945.0).abs() < 1e-8);
        // E[exp(-Z^2/2)] = 1/sqrt(2)
        let r = gauss_hermite(40);
        assert!((r.integrate(|x| (-0.5 * x * x).exp()) - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let r = gauss_legendre(10, -1.0, 3.0);
        let exact = (3f64.powi(20) - 1.0) / 20.0;
        assert!((r.integrate(|x| x.powi(19)) - exact).abs() < 1e-12 * exact);
        let r = gauss_legendre(40, 0.0, 1.0);
        assert!((r.integrate(|x| x.exp()) - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_is_spectral_for_gaussians() {
        let r = trapezoid(-10.0, 10.0, 80);
        let v = r.integrate(|x| (-0.5 * x * x).exp());
        assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn exp_sinh_half_line() {
        let r = exp_sinh(0.05, 4.0);
        assert!((r.integrate(|x| (-x).exp()) - 1.0).abs() < 1e-12);
        assert!((r.integrate(|x| x * (-2.0 * x).exp()) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn adaptive_gk_polynomial_and_peak() {
        let q = adaptive_gk(|x| x.powi(5), 0.0, 2.0, 1e-12, 1e-12, 10).unwrap();
        assert!((q.value - 64.0 / 6.0).abs() < 1e-12);
        let q = adaptive_gk(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10, 1e-12, 500).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((q.value - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn refine_reports_failure() {
        assert!(refine(|k| Ok(k as f64), 1e-8, 3).is_err());
        let q = refine(|k| Ok(1.0 + 0.1f64.powi(k as i32 + 3)), 1e-6, 10).unwrap();
        assert!((q.value - 1.0).abs() < 1e-6);
    }
}
