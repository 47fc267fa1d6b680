//! Coefficient types for supernumbers: plain reals and forward-mode dual
//! numbers carrying derivatives in the real coordinates.

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

/// Number of tangent directions carried by [`Dual`]; enough for the `2m`
/// real coordinates at `m <= 4`.
pub const DUAL_DIRS: usize = 8;

/// A commutative coefficient ring with the chain rule for scalar functions.
pub trait Scalar:
    Copy + Debug + PartialEq + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    /// Highest derivative order carried (0 for plain reals).
    const ORDER: usize;

    fn from_f64(v: f64) -> Self;

    fn value(&self) -> f64;

    fn scale(&self, k: f64) -> Self;

    /// `g(self)` from `derivs[k] = g^{(k)}(self.value())`, `k <= ORDER`.
    fn chain(&self, derivs: &[f64]) -> Self;

    fn is_zero(&self) -> bool;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }
}

impl Scalar for f64 {
    const ORDER: usize = 0;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn value(&self) -> f64 {
        *self
    }

    fn scale(&self, k: f64) -> Self {
        self * k
    }

    fn chain(&self, derivs: &[f64]) -> Self {
        derivs[0]
    }

    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

/// `v + sum_k d_k e_k` with `e_k e_l = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; DUAL_DIRS],
}

impl Dual {
    /// The coordinate function seeded in direction `dir`.
    pub fn variable(v: f64, dir: usize) -> Self {
        let mut d = [0.0; DUAL_DIRS];
        d[dir] = 1.0;
        Self { v, d }
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d) {
            *a += b;
        }
        Self { v: self.v + o.v, d }
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d) {
            *a -= b;
        }
        Self { v: self.v - o.v, d }
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; DUAL_DIRS];
        for k in 0..DUAL_DIRS {
            d[k] = self.v * o.d[k] + self.d[k] * o.v;
        }
        Self { v: self.v * o.v, d }
    }
}

impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        Self { v: -self.v, d: self.d.map(|x| -x) }
    }
}

impl Scalar for Dual {
    const ORDER: usize = 1;

    fn from_f64(v: f64) -> Self {
        Self { v, d: [0.0; DUAL_DIRS] }
    }

    fn value(&self) -> f64 {
        self.v
    }

    fn scale(&self, k: f64) -> Self {
        Self { v: self.v * k, d: self.d.map(|x| x * k) }
    }

    fn chain(&self, derivs: &[f64]) -> Self {
        Self { v: derivs[0], d: self.d.map(|x| x * derivs[1]) }
    }

    fn is_zero(&self) -> bool {
        self.v == 0.0 && self.d.iter().all(|x| *x == 0.0)
    }
}

/// `v + a e1 + b e2 + ab e1 e2` with `e1^2 = e2^2 = 0`; carries one mixed
/// (or, seeding both directions alike, one pure) second derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperDual {
    pub v: f64,
    pub a: f64,
    pub b: f64,
    pub ab: f64,
}

impl HyperDual {
    pub fn new(v: f64, a: f64, b: f64) -> Self {
        Self { v, a, b, ab: 0.0 }
    }
}

impl Add for HyperDual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { v: self.v + o.v, a: self.a + o.a, b: self.b + o.b, ab: self.ab + o.ab }
    }
}

impl Sub for HyperDual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { v: self.v - o.v, a: self.a - o.a, b: self.b - o.b, ab: self.ab - o.ab }
    }
}

impl Mul for HyperDual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self {
            v: self.v * o.v,
            a: self.v * o.a + self.a * o.v,
            b: self.v * o.b + self.b * o.v,
            ab: self.v * o.ab + self.a * o.b + self.b * o.a + self.ab * o.v,
        }
    }
}

impl Neg for HyperDual {
    type Output = Self;
    fn neg(self) -> Self {
        Self { v: -self.v, a: -self.a, b: -self.b, ab: -self.ab }
    }
}

impl Scalar for HyperDual {
    const ORDER: usize = 2;

    fn from_f64(v: f64) -> Self {
        Self { v, a: 0.0, b: 0.0, ab: 0.0 }
    }

    fn value(&self) -> f64 {
        self.v
    }

    fn scale(&self, k: f64) -> Self {
        Self { v: self.v * k, a: self.a * k, b: self.b * k, ab: self.ab * k }
    }

    fn chain(&self, d: &[f64]) -> Self {
        Self { v: d[0], a: d[1] * self.a, b: d[1] * self.b, ab: d[1] * self.ab + d[2] * self.a * self.b }
    }

    fn is_zero(&self) -> bool {
        self.v == 0.0 && self.a == 0.0 && self.b == 0.0 && self.ab == 0.0
    }
}
