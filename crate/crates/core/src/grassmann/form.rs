//! Forms: expressions in `x_i, y_i, xi_i, eta_i` evaluated to supernumbers
//! at a base point, and the supersymmetry generator
//!
//! ```text
//! Q = sum_i xi_i d/dx_i + eta_i d/dy_i + x_i d/deta_i - y_i d/dxi_i.
//! ```
//!
//! The odd derivatives are left derivatives; real derivatives come from
//! evaluating with [`Dual`] coefficients seeded in `x_i` (direction `2i`) and
//! `y_i` (direction `2i + 1`).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use super::algebra::{Gen, Supernumber, MAX_PAIRS};
use super::analytic::Analytic;
use super::scalar::{Dual, Scalar};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

/// An expression built from the coordinates of `(R^{2|2})^m`.
#[derive(Clone, Debug)]
pub enum Form {
    Const(f64),
    X(usize),
    Y(usize),
    Xi(usize),
    Eta(usize),
    /// `sqrt(1 + x_i^2 + y_i^2 + 2 xi_i eta_i)`.
    Z(usize),
    /// `x_i x_j + y_i y_j + xi_i eta_j - eta_i xi_j`.
    Tau(usize, usize),
    /// `u_i . u_j = tau_ij - z_i z_j`.
    Inner(usize, usize),
    Add(Box<Form>, Box<Form>),
    Sub(Box<Form>, Box<Form>),
    Mul(Box<Form>, Box<Form>),
    Neg(Box<Form>),
    Apply(Analytic, Box<Form>),
}

impl Form {
    pub fn c(v: f64) -> Self {
        Form::Const(v)
    }

    pub fn apply(self, f: Analytic) -> Self {
        Form::Apply(f, Box::new(self))
    }

    pub fn exp(self) -> Self {
        self.apply(Analytic::Exp)
    }

    pub fn sqrt(self) -> Self {
        self.apply(Analytic::sqrt())
    }

    pub fn recip(self) -> Self {
        self.apply(Analytic::recip())
    }

    pub fn scale(self, k: f64) -> Self {
        Form::Const(k) * self
    }

    /// Largest vertex index used, plus one.
    pub fn pairs_used(&self) -> usize {
        match self {
            Form::Const(_) => 0,
            Form::X(i) | Form::Y(i) | Form::Xi(i) | Form::Eta(i) | Form::Z(i) => i + 1,
            Form::Tau(i, j) | Form::Inner(i, j) => i.max(j) + 1,
            Form::Add(a, b) | Form::Sub(a, b) | Form::Mul(a, b) => a.pairs_used().max(b.pairs_used()),
            Form::Neg(a) | Form::Apply(_, a) => a.pairs_used(),
        }
    }

    pub fn eval<S: Scalar>(&self, ctx: &FormContext<S>) -> Result<Supernumber<S>> {
        let need = self.pairs_used();
        if need > ctx.m {
            return Err(Error::Grassmann(format!("form uses vertex {} but the algebra has m = {}", need - 1, ctx.m)));
        }
        self.eval_unchecked(ctx)
    }

    fn eval_unchecked<S: Scalar>(&self, ctx: &FormContext<S>) -> Result<Supernumber<S>> {
        Ok(match self {
            Form::Const(v) => Supernumber::constant(ctx.m, *v),
            Form::X(i) => ctx.x[*i].clone(),
            Form::Y(i) => ctx.y[*i].clone(),
            Form::Xi(i) => ctx.xi[*i].clone(),
            Form::Eta(i) => ctx.eta[*i].clone(),
            Form::Z(i) => ctx.z(*i)?,
            Form::Tau(i, j) => ctx.tau(*i, *j),
            Form::Inner(i, j) => ctx.inner(*i, *j)?,
            Form::Add(a, b) => a.eval_unchecked(ctx)? + b.eval_unchecked(ctx)?,
            Form::Sub(a, b) => a.eval_unchecked(ctx)? - b.eval_unchecked(ctx)?,
            Form::Mul(a, b) => a.eval_unchecked(ctx)? * b.eval_unchecked(ctx)?,
            Form::Neg(a) => -a.eval_unchecked(ctx)?,
            Form::Apply(f, a) => a.eval_unchecked(ctx)?.apply(f)?,
        })
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Form::Const(v) => write!(f, "{v}"),
            Form::X(i) => write!(f, "x{}", i + 1),
            Form::Y(i) => write!(f, "y{}", i + 1),
            Form::Xi(i) => write!(f, "ξ{}", i + 1),
            Form::Eta(i) => write!(f, "η{}", i + 1),
            Form::Z(i) => write!(f, "z{}", i + 1),
            Form::Tau(i, j) => write!(f, "τ{}{}", i + 1, j + 1),
            Form::Inner(i, j) => write!(f, "(u{}·u{})", i + 1, j + 1),
            Form::Add(a, b) => write!(f, "({a} + {b})"),
            Form::Sub(a, b) => write!(f, "({a} - {b})"),
            Form::Mul(a, b) => write!(f, "{a}·{b}"),
            Form::Neg(a) => write!(f, "-{a}"),
            Form::Apply(g, a) => write!(f, "{g:?}({a})"),
        }
    }
}

macro_rules! form_op {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl $trait for Form {
            type Output = Form;
            fn $method(self, rhs: Form) -> Form {
                Form::$variant(Box::new(self), Box::new(rhs))
            }
        }
        impl $trait<f64> for Form {
            type Output = Form;
            fn $method(self, rhs: f64) -> Form {
                Form::$variant(Box::new(self), Box::new(Form::Const(rhs)))
            }
        }
    };
}

form_op!(Add, add, Add);
form_op!(Sub, sub, Sub);
form_op!(Mul, mul, Mul);

impl Neg for Form {
    type Output = Form;
    fn neg(self) -> Form {
        Form::Neg(Box::new(self))
    }
}

/// `H = sum_{ij} beta_ij (-u_i . u_j - 1) + sum_i h_i (z_i - 1)`.
pub fn h22_action(graph: &WeightedGraph) -> Form {
    let mut h = Form::c(0.0);
    for (i, j, b) in graph.edges() {
        h = h + (-Form::Inner(i, j) - 1.0).scale(b);
    }
    for i in 0..graph.n_vertices() {
        if graph.h(i) != 0.0 {
            h = h + (Form::Z(i) - 1.0).scale(graph.h(i));
        }
    }
    h
}

/// Values of the coordinate forms at one base point.
#[derive(Clone, Debug)]
pub struct FormContext<S: Scalar> {
    pub m: usize,
    pub x: Vec<Supernumber<S>>,
    pub y: Vec<Supernumber<S>>,
    pub xi: Vec<Supernumber<S>>,
    pub eta: Vec<Supernumber<S>>,
    /// `z_i`, computed once per context.
    zs: Vec<Supernumber<S>>,
}

impl<S: Scalar> FormContext<S> {
    /// Ambient coordinates: `x_i, y_i` are the given scalars and
    /// `xi_i, eta_i` the generators.
    pub fn ambient(x: &[S], y: &[S]) -> Result<Self> {
        let m = x.len();
        if y.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: y.len() });
        }
        if m == 0 || m > MAX_PAIRS {
            return Err(Error::Grassmann(format!("need 1..={MAX_PAIRS} vertices, got {m}")));
        }
        Self::new(
            x.iter().map(|v| Supernumber::scalar(m, *v)).collect(),
            y.iter().map(|v| Supernumber::scalar(m, *v)).collect(),
            (0..m).map(|i| Supernumber::xi(m, i)).collect(),
            (0..m).map(|i| Supernumber::eta(m, i)).collect(),
        )
    }

    /// Arbitrary even `x, y` and odd `xi, eta` (e.g. images of a coordinate change).
    pub fn new(
        x: Vec<Supernumber<S>>,
        y: Vec<Supernumber<S>>,
        xi: Vec<Supernumber<S>>,
        eta: Vec<Supernumber<S>>,
    ) -> Result<Self> {
        let m = x.len();
        for v in [&y, &xi, &eta] {
            if v.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: v.len() });
            }
        }
        if let Some(bad) = x.iter().chain(&y).chain(&xi).chain(&eta).find(|v| v.pairs() != m) {
            return Err(Error::Grassmann(format!("coordinate in an algebra with m = {}, expected {m}", bad.pairs())));
        }
        let zs = (0..m)
            .map(|i| {
                let arg = Supernumber::one(m) + &x[i] * &x[i] + &y[i] * &y[i] + (&xi[i] * &eta[i]).scale(2.0);
                arg.sqrt()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { m, x, y, xi, eta, zs })
    }

    /// `sqrt(1 + x_i^2 + y_i^2 + 2 xi_i eta_i)`.
    pub fn z(&self, i: usize) -> Result<Supernumber<S>> {
        Ok(self.zs[i].clone())
    }

    pub fn tau(&self, i: usize, j: usize) -> Supernumber<S> {
        &self.x[i] * &self.x[j] + &self.y[i] * &self.y[j] + &self.xi[i] * &self.eta[j] - &self.eta[i] * &self.xi[j]
    }

    pub fn inner(&self, i: usize, j: usize) -> Result<Supernumber<S>> {
        Ok(self.tau(i, j) - self.z(i)? * self.z(j)?)
    }
}

/// Point layout shared by [`apply_q`] and the integrators: `(x_1, y_1, ..., x_m, y_m)`.
pub fn split_point(point: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if point.len() % 2 != 0 {
        return Err(Error::InvalidArgument("base point needs an even number of coordinates".into()));
    }
    Ok((point.iter().step_by(2).copied().collect(), point.iter().skip(1).step_by(2).copied().collect()))
}

/// `Q F` for a supernumber evaluated with dual coefficients seeded in the
/// coordinates of `point`.
pub fn q_of_dual(f: &Supernumber<Dual>, point: &[f64]) -> Result<Supernumber<f64>> {
    let (x, y) = split_point(point)?;
    let m = x.len();
    if f.pairs() != m {
        return Err(Error::Grassmann("point and supernumber disagree on m".into()));
    }
    let body = f.values();
    let mut q = Supernumber::<f64>::zero(m);
    for i in 0..m {
        let dx = f.map(|d| d.d[2 * i]);
        let dy = f.map(|d| d.d[2 * i + 1]);
        q = q + Supernumber::xi(m, i) * dx + Supernumber::eta(m, i) * dy;
        q = q + body.left_derivative(Gen::Eta(i)).scale(x[i]) - body.left_derivative(Gen::Xi(i)).scale(y[i]);
    }
    Ok(q)
}

/// Evaluate `form` at `point` with tangent information attached.
pub fn eval_dual(form: &Form, point: &[f64]) -> Result<Supernumber<Dual>> {
    let (x, y) = split_point(point)?;
    let xd: Vec<Dual> = x.iter().enumerate().map(|(i, v)| Dual::variable(*v, 2 * i)).collect();
    let yd: Vec<Dual> = y.iter().enumerate().map(|(i, v)| Dual::variable(*v, 2 * i + 1)).collect();
    form.eval(&FormContext::ambient(&xd, &yd)?)
}

/// `(Q F)` at `point`.
pub fn apply_q(form: &Form, point: &[f64]) -> Result<Supernumber<f64>> {
    q_of_dual(&eval_dual(form, point)?, point)
}

/// Plain evaluation at `point`.
pub fn eval_at(form: &Form, point: &[f64]) -> Result<Supernumber<f64>> {
    let (x, y) = split_point(point)?;
    form.eval(&FormContext::ambient(&x, &y)?)
}
