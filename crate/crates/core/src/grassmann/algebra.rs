//! Supernumbers: elements of the Grassmann algebra on `2m` generators with
//! coefficients in a [`Scalar`] ring.
//!
//! Generator `eta_i` is bit `2i` and `xi_i` is bit `2i + 1` (vertices
//! numbered from 0). A bitmask stands for the product of its generators in
//! increasing bit order, so the top monomial is `eta_1 xi_1 ... eta_m xi_m`.
//! Multiplying two monomials sorts the concatenated word; the sign is the
//! parity of the number of inversions, counted with popcounts.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Largest supported number of generator pairs.
pub const MAX_PAIRS: usize = 4;

/// An odd generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gen {
    Eta(usize),
    Xi(usize),
}

impl Gen {
    pub fn bit(self) -> u32 {
        match self {
            Gen::Eta(i) => 2 * i as u32,
            Gen::Xi(i) => 2 * i as u32 + 1,
        }
    }
}

/// `true` when `e_a e_b = -e_{a|b}` (masks assumed disjoint).
#[inline]
pub fn product_is_negative(a: u32, b: u32) -> bool {
    let mut count = 0;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        count += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    count & 1 == 1
}

/// `product_is_negative(a, b)` at index `a << 2 MAX_PAIRS | b`.
fn sign_table() -> &'static [bool] {
    static TABLE: std::sync::OnceLock<Vec<bool>> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let n = 1u32 << (2 * MAX_PAIRS);
        (0..n).flat_map(|a| (0..n).map(move |b| a & b == 0 && product_is_negative(a, b))).collect()
    })
}

#[derive(Clone, PartialEq)]
pub struct Supernumber<S: Scalar> {
    m: usize,
    c: Vec<S>,
}

impl<S: Scalar> Supernumber<S> {
    pub fn zero(m: usize) -> Self {
        assert!(m <= MAX_PAIRS, "at most {MAX_PAIRS} generator pairs are supported");
        Self { m, c: vec![S::zero(); 1 << (2 * m)] }
    }

    pub fn try_zero(m: usize) -> Result<Self> {
        if m > MAX_PAIRS {
            return Err(Error::Grassmann(format!("m = {m} exceeds the supported maximum {MAX_PAIRS}")));
        }
        Ok(Self::zero(m))
    }

    pub fn scalar(m: usize, v: S) -> Self {
        let mut z = Self::zero(m);
        z.c[0] = v;
        z
    }

    pub fn constant(m: usize, v: f64) -> Self {
        Self::scalar(m, S::from_f64(v))
    }

    pub fn one(m: usize) -> Self {
        Self::constant(m, 1.0)
    }

    pub fn generator(m: usize, g: Gen) -> Self {
        let mut z = Self::zero(m);
        let idx = match g {
            Gen::Eta(i) | Gen::Xi(i) => i,
        };
        assert!(idx < m, "generator index {idx} out of range for m = {m}");
        z.c[1 << g.bit()] = S::one();
        z
    }

    pub fn eta(m: usize, i: usize) -> Self {
        Self::generator(m, Gen::Eta(i))
    }

    pub fn xi(m: usize, i: usize) -> Self {
        Self::generator(m, Gen::Xi(i))
    }

    /// Monomial `mask` with coefficient `v`.
    pub fn monomial(m: usize, mask: u32, v: S) -> Self {
        let mut z = Self::zero(m);
        z.c[mask as usize] = v;
        z
    }

    pub fn pairs(&self) -> usize {
        self.m
    }

    pub fn coeffs(&self) -> &[S] {
        &self.c
    }

    pub fn coeff(&self, mask: u32) -> S {
        self.c[mask as usize]
    }

    pub fn set_coeff(&mut self, mask: u32, v: S) {
        self.c[mask as usize] = v;
    }

    pub fn top_mask(&self) -> u32 {
        (1u32 << (2 * self.m)) - 1
    }

    pub fn body(&self) -> S {
        self.c[0]
    }

    /// Coefficient of `eta_1 xi_1 ... eta_m xi_m`.
    pub fn top(&self) -> S {
        self.c[self.top_mask() as usize]
    }

    /// `self - body`.
    pub fn soul(&self) -> Self {
        let mut s = self.clone();
        s.c[0] = S::zero();
        s
    }

    pub fn is_even(&self) -> bool {
        self.c.iter().enumerate().all(|(k, v)| (k as u32).count_ones() % 2 == 0 || v.is_zero())
    }

    pub fn is_odd(&self) -> bool {
        self.c.iter().enumerate().all(|(k, v)| (k as u32).count_ones() % 2 == 1 || v.is_zero())
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Supernumber<T> {
        Supernumber { m: self.m, c: self.c.iter().map(f).collect() }
    }

    pub fn scale(&self, k: f64) -> Self {
        Self { m: self.m, c: self.c.iter().map(|v| v.scale(k)).collect() }
    }

    pub fn scale_by(&self, k: S) -> Self {
        Self { m: self.m, c: self.c.iter().map(|v| *v * k).collect() }
    }

    fn check_pairs(&self, other: &Self) -> Result<()> {
        if self.m != other.m {
            Err(Error::Grassmann(format!("mismatched algebras: m = {} vs m = {}", self.m, other.m)))
        } else {
            Ok(())
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_pairs(other)?;
        Ok(Self { m: self.m, c: self.c.iter().zip(&other.c).map(|(a, b)| *a + *b).collect() })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_pairs(other)?;
        Ok(Self { m: self.m, c: self.c.iter().zip(&other.c).map(|(a, b)| *a - *b).collect() })
    }

    /// Graded product.
    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_pairs(other)?;
        let mut out = Self::zero(self.m);
        let rhs: Vec<(usize, S)> = other.c.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(|(b, v)| (b, *v)).collect();
        let table = sign_table();
        for (a, ca) in self.c.iter().enumerate() {
            if ca.is_zero() {
                continue;
            }
            let row = &table[a << (2 * MAX_PAIRS)..];
            for &(b, cb) in &rhs {
                if a & b != 0 {
                    continue;
                }
                let p = *ca * cb;
                let slot = &mut out.c[a | b];
                *slot = if row[b] { *slot - p } else { *slot + p };
            }
        }
        Ok(out)
    }

    /// Left derivative: `d_g (g F) = F` for `F` free of `g`.
    pub fn left_derivative(&self, g: Gen) -> Self {
        let bit = g.bit();
        let mut out = Self::zero(self.m);
        for (mask, v) in self.c.iter().enumerate() {
            let mask = mask as u32;
            if mask & (1 << bit) == 0 || v.is_zero() {
                continue;
            }
            let before = (mask & ((1 << bit) - 1)).count_ones();
            let rest = (mask & !(1 << bit)) as usize;
            out.c[rest] = if before % 2 == 1 { -*v } else { *v };
        }
        out
    }

    /// `self^k` for `k >= 0`.
    pub fn powi(&self, k: usize) -> Self {
        let mut out = Self::one(self.m);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Largest coefficient-wise absolute difference of the values.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.m, other.m);
        self.c.iter().zip(&other.c).map(|(a, b)| (a.value() - b.value()).abs()).fold(0.0, f64::max)
    }

    /// Values of all coefficients.
    pub fn values(&self) -> Supernumber<f64> {
        self.map(|v| v.value())
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $try:ident) => {
        impl<S: Scalar> $trait<&Supernumber<S>> for &Supernumber<S> {
            type Output = Supernumber<S>;
            fn $method(self, rhs: &Supernumber<S>) -> Supernumber<S> {
                self.$try(rhs).expect("operands from the same algebra")
            }
        }
        impl<S: Scalar> $trait<Supernumber<S>> for Supernumber<S> {
            type Output = Supernumber<S>;
            fn $method(self, rhs: Supernumber<S>) -> Supernumber<S> {
                (&self).$method(&rhs)
            }
        }
        impl<S: Scalar> $trait<&Supernumber<S>> for Supernumber<S> {
            type Output = Supernumber<S>;
            fn $method(self, rhs: &Supernumber<S>) -> Supernumber<S> {
                (&self).$method(rhs)
            }
        }
        impl<S: Scalar> $trait<Supernumber<S>> for &Supernumber<S> {
            type Output = Supernumber<S>;
            fn $method(self, rhs: Supernumber<S>) -> Supernumber<S> {
                self.$method(&rhs)
            }
        }
    };
}

binop!(Add, add, try_add);
binop!(Sub, sub, try_sub);
binop!(Mul, mul, try_mul);

impl<S: Scalar> Neg for Supernumber<S> {
    type Output = Supernumber<S>;
    fn neg(self) -> Self {
        Self { m: self.m, c: self.c.into_iter().map(|v| -v).collect() }
    }
}

impl<S: Scalar> Neg for &Supernumber<S> {
    type Output = Supernumber<S>;
    fn neg(self) -> Supernumber<S> {
        -self.clone()
    }
}

fn monomial_name(mask: u32) -> String {
    let mut s = String::new();
    for bit in 0..32 {
        if mask & (1 << bit) != 0 {
            let i = bit / 2 + 1;
            s.push_str(&if bit % 2 == 0 { format!("η{i}") } else { format!("ξ{i}") });
        }
    }
    s
}

/// Monomials listed by degree, then by mask; zero coefficients omitted.
impl fmt::Display for Supernumber<f64> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut masks: Vec<u32> = (0..self.c.len() as u32).filter(|&k| self.c[k as usize] != 0.0).collect();
        masks.sort_by_key(|k| (k.count_ones(), *k));
        if masks.is_empty() {
            return write!(f, "0");
        }
        for (n, &k) in masks.iter().enumerate() {
            let v = self.c[k as usize];
            let sign = if v < 0.0 { "-" } else { "+" };
            if n == 0 {
                if v < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if k == 0 {
                write!(f, "{}", v.abs())?;
            } else if v.abs() == 1.0 {
                write!(f, "{}", monomial_name(k))?;
            } else {
                write!(f, "{} {}", v.abs(), monomial_name(k))?;
            }
        }
        Ok(())
    }
}

impl<S: Scalar> fmt::Debug for Supernumber<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Supernumber(m={}, {})", self.m, self.values())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Sn = Supernumber<f64>;

    #[test]
    fn anticommutation_and_nilpotency() {
        let (x, e) = (Sn::xi(1, 0), Sn::eta(1, 0));
        assert_eq!(&x * &e, -(&e * &x));
        assert_eq!(&x * &x, Sn::zero(1));
    }

    #[test]
    fn nilpotent_inverse() {
        let xe = &Sn::xi(1, 0) * &Sn::eta(1, 0);
        let one = Sn::one(1);
        assert_eq!((&one + &xe) * (&one - &xe), one);
    }

    #[test]
    fn top_monomial_ordering() {
        let m = 2;
        let top = Sn::eta(m, 0) * Sn::xi(m, 0) * Sn::eta(m, 1) * Sn::xi(m, 1);
        assert_eq!(top.top(), 1.0);
        let swapped = Sn::xi(m, 0) * Sn::eta(m, 0) * Sn::eta(m, 1) * Sn::xi(m, 1);
        assert_eq!(swapped.top(), -1.0);
    }

    #[test]
    fn left_derivative_signs() {
        let m = 1;
        let (x, e) = (Sn::xi(m, 0), Sn::eta(m, 0));
        // d_eta (eta xi) = xi, d_xi (eta xi) = -eta
        assert_eq!((&e * &x).left_derivative(Gen::Eta(0)), x);
        assert_eq!((&e * &x).left_derivative(Gen::Xi(0)), -e.clone());
        assert_eq!(x.left_derivative(Gen::Eta(0)), Sn::zero(m));
    }

    #[test]
    fn grading_and_printing() {
        let m = 2;
        let a = Sn::constant(m, 1.5) + Sn::eta(m, 0) * Sn::xi(m, 0).scale(2.0) - Sn::xi(m, 1).scale(0.5);
        assert!(!a.is_even() && !a.is_odd());
        assert_eq!(a.to_string(), "1.5 - 0.5 ξ2 + 2 η1ξ1");
        assert!((Sn::eta(m, 0) * Sn::xi(m, 1)).is_even());
    }

    #[test]
    fn mismatched_algebras_error() {
        assert!(Sn::one(1).try_mul(&Sn::one(2)).is_err());
        assert!(Sn::try_zero(5).is_err());
    }
}
