//! Smooth functions of even supernumbers, by Taylor expansion about the body:
//! `f(b + n) = sum_k f^{(k)}(b) n^k / k!`, finite because `n^{m+1} = 0`.

use std::sync::Arc;

use super::algebra::Supernumber;
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Scalar functions with derivatives of every order at a point.
#[derive(Clone)]
pub enum Analytic {
    Exp,
    /// `x^p`; non-integer `p` needs `x > 0`.
    Power(f64),
    Cosh,
    Sinh,
    Ln,
    /// `exp(-1 / (1 - q^2))` for `|q| < 1`, `q = (x - center) / width`, else 0.
    Bump { center: f64, width: f64 },
    /// `derivs(x, k)` returns `f(x), f'(x), ..., f^{(k)}(x)`.
    Custom { name: String, derivs: Arc<dyn Fn(f64, usize) -> Result<Vec<f64>> + Send + Sync> },
}

impl std::fmt::Debug for Analytic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Exp => write!(f, "exp"),
            Self::Power(p) => write!(f, "pow({p})"),
            Self::Cosh => write!(f, "cosh"),
            Self::Sinh => write!(f, "sinh"),
            Self::Ln => write!(f, "ln"),
            Self::Bump { center, width } => write!(f, "bump({center}, {width})"),
            Self::Custom { name, .. } => write!(f, "{name}"),
        }
    }
}

impl Analytic {
    pub fn sqrt() -> Self {
        Self::Power(0.5)
    }

    pub fn recip() -> Self {
        Self::Power(-1.0)
    }

    /// `f(x), f'(x), ..., f^{(order)}(x)`.
    pub fn derivatives(&self, x: f64, order: usize) -> Result<Vec<f64>> {
        let domain = |what: &str| Err(Error::Grassmann(format!("{what} at body {x} is outside the domain of {self:?}")));
        let out = match self {
            Self::Exp => vec![x.exp(); order + 1],
            Self::Cosh | Self::Sinh => {
                let (c, s) = (x.cosh(), x.sinh());
                let first_even = matches!(self, Self::Cosh);
                (0..=order).map(|k| if (k % 2 == 0) == first_even { c } else { s }).collect()
            }
            Self::Power(p) => {
                let integer = p.fract() == 0.0;
                if (!integer && x <= 0.0) || (integer && *p < 0.0 && x == 0.0) {
                    return domain("evaluation");
                }
                let mut coef = 1.0;
                (0..=order)
                    .map(|k| {
                        let v = if coef == 0.0 { 0.0 } else { coef * x.powf(p - k as f64) };
                        coef *= p - k as f64;
                        v
                    })
                    .collect()
            }
            Self::Ln => {
                if x <= 0.0 {
                    return domain("evaluation");
                }
                let mut out = vec![x.ln()];
                let mut fact = 1.0;
                for k in 1..=order {
                    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                    out.push(sign * fact * x.powi(-(k as i32)));
                    fact *= k as f64;
                }
                out
            }
            Self::Bump { center, width } => bump_derivatives(x, *center, *width, order),
            Self::Custom { derivs, .. } => {
                let d = derivs(x, order)?;
                if d.len() <= order {
                    return Err(Error::Grassmann(format!("{self:?} returned {} derivatives, need {}", d.len(), order + 1)));
                }
                d
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return domain("non-finite derivative");
        }
        Ok(out)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.derivatives(x, 0)?[0])
    }
}

/// Truncated Taylor series `sum_k c_k e^k`, `e^{N} = 0`.
#[derive(Clone, Copy, Debug)]
struct Jet<const N: usize>([f64; N]);

impl<const N: usize> Jet<N> {
    fn var(x: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = x;
        if N > 1 {
            c[1] = 1.0;
        }
        Self(c)
    }

    fn mul(&self, o: &Self) -> Self {
        let mut c = [0.0; N];
        for i in 0..N {
            for j in 0..N - i {
                c[i + j] += self.0[i] * o.0[j];
            }
        }
        Self(c)
    }

    fn recip(&self) -> Self {
        let mut c = [0.0; N];
        c[0] = 1.0 / self.0[0];
        for k in 1..N {
            let s: f64 = (1..=k).map(|j| self.0[j] * c[k - j]).sum();
            c[k] = -s / self.0[0];
        }
        Self(c)
    }

    fn exp(&self) -> Self {
        // c' = a' c
        let mut c = [0.0; N];
        c[0] = self.0[0].exp();
        for k in 1..N {
            let s: f64 = (1..=k).map(|j| j as f64 * self.0[j] * c[k - j]).sum();
            c[k] = s / k as f64;
        }
        Self(c)
    }
}

const BUMP_JET: usize = 12;

fn bump_derivatives(x: f64, center: f64, width: f64, order: usize) -> Vec<f64> {
    assert!(order < BUMP_JET, "bump derivatives limited to order {}", BUMP_JET - 1);
    let q0 = (x - center) / width;
    if q0.abs() >= 1.0 {
        return vec![0.0; order + 1];
    }
    let mut q = Jet::<BUMP_JET>::var(x);
    q.0[0] -= center;
    for v in q.0.iter_mut() {
        *v /= width;
    }
    let mut one_minus = q.mul(&q);
    for v in one_minus.0.iter_mut() {
        *v = -*v;
    }
    one_minus.0[0] += 1.0;
    let mut inner = one_minus.recip();
    for v in inner.0.iter_mut() {
        *v = -*v;
    }
    let phi = inner.exp();
    let mut fact = 1.0;
    (0..=order)
        .map(|k| {
            if k > 0 {
                fact *= k as f64;
            }
            phi.0[k] * fact
        })
        .collect()
}

/// `f(arg)` for even `arg`.
pub fn apply_analytic<S: Scalar>(f: &Analytic, arg: &Supernumber<S>) -> Result<Supernumber<S>> {
    if !arg.is_even() {
        return Err(Error::Grassmann(format!("{f:?} applied to a non-even supernumber")));
    }
    let m = arg.pairs();
    let body = arg.body();
    let derivs = f.derivatives(body.value(), m + S::ORDER)?;
    let soul = arg.soul();
    let mut out = Supernumber::scalar(m, body.chain(&derivs[0..=S::ORDER]));
    let mut power = Supernumber::one(m);
    let mut fact = 1.0;
    for k in 1..=m {
        power = &power * &soul;
        if power.coeffs().iter().all(|c| c.is_zero()) {
            break;
        }
        fact *= k as f64;
        let coef = body.chain(&derivs[k..=k + S::ORDER]).scale(1.0 / fact);
        out = out + power.scale_by(coef);
    }
    Ok(out)
}

impl<S: Scalar> Supernumber<S> {
    pub fn apply(&self, f: &Analytic) -> Result<Self> {
        apply_analytic(f, self)
    }

    pub fn exp(&self) -> Result<Self> {
        apply_analytic(&Analytic::Exp, self)
    }

    pub fn sqrt(&self) -> Result<Self> {
        apply_analytic(&Analytic::sqrt(), self)
    }

    pub fn recip(&self) -> Result<Self> {
        apply_analytic(&Analytic::recip(), self)
    }

    pub fn cosh(&self) -> Result<Self> {
        apply_analytic(&Analytic::Cosh, self)
    }

    pub fn sinh(&self) -> Result<Self> {
        apply_analytic(&Analytic::Sinh, self)
    }

    pub fn ln(&self) -> Result<Self> {
        apply_analytic(&Analytic::Ln, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Sn = Supernumber<f64>;

    fn xe(m: usize, i: usize) -> Sn {
        Sn::xi(m, i) * Sn::eta(m, i)
    }

    #[test]
    fn sqrt_exp_recip_examples() {
        let one = Sn::one(1);
        let a = (&one + &xe(1, 0).scale(2.0)).sqrt().unwrap();
        assert_eq!(a, &one + &xe(1, 0));
        assert_eq!(xe(1, 0).exp().unwrap(), &one + &xe(1, 0));
        let b = &one + &xe(1, 0);
        assert_eq!(b.recip().unwrap() * b, one);
    }

    #[test]
    fn odd_argument_rejected() {
        assert!(Sn::xi(1, 0).exp().is_err());
        assert!(Sn::constant(1, -1.0).sqrt().is_err());
    }

    #[test]
    fn exp_of_sum_is_product_in_two_pairs() {
        let m = 2;
        let a = Sn::constant(m, 0.3) + xe(m, 0).scale(1.7) + (Sn::xi(m, 0) * Sn::eta(m, 1)).scale(-0.4);
        let b = Sn::constant(m, -0.1) + xe(m, 1).scale(0.9);
        let lhs = (&a + &b).exp().unwrap();
        let rhs = a.exp().unwrap() * b.exp().unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-14);
        let back = a.exp().unwrap().ln().unwrap();
        assert!(back.max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let f = Analytic::Bump { center: 0.5, width: 0.4 };
        let x = 0.62;
        let d = f.derivatives(x, 2).unwrap();
        let h = 1e-5;
        let fd1 = (f.eval(x + h).unwrap() - f.eval(x - h).unwrap()) / (2.0 * h);
        assert!((d[1] - fd1).abs() < 1e-8);
        let fd2 = (f.eval(x + h).unwrap() - 2.0 * d[0] + f.eval(x - h).unwrap()) / (h * h);
        assert!((d[2] - fd2).abs() < 1e-4);
        assert_eq!(f.eval(0.0).unwrap(), 0.0);
    }
}
