//! Weighted graphs, translation-invariant finite-range tori and lattice
//! Fourier utilities.
//!
//! Momenta on the dual torus are carried as integer index vectors `k`, with
//! `p = 2 pi k / L`; real momenta only appear inside trigonometric
//! evaluations.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite graph with symmetric non-negative edge weights `beta` and a
/// non-negative per-vertex pinning field `h`.
///
/// Adjacency is stored as per-vertex neighbour lists sorted by vertex index.
/// Immutable after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    adj: Vec<Vec<(usize, f64)>>,
    h: Vec<f64>,
}

impl WeightedGraph {
    /// Build from an undirected edge list. Parallel edges are merged by
    /// summing their weights; zero-weight edges are dropped.
    pub fn new(n_vertices: usize, edges: &[(usize, usize, f64)], h: Vec<f64>) -> Result<Self> {
        if n_vertices == 0 {
            return Err(Error::InvalidGraph("graph must have at least one vertex".into()));
        }
        if h.len() != n_vertices {
            return Err(Error::DimensionMismatch { expected: n_vertices, got: h.len() });
        }
        if let Some((i, v)) = h.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidGraph(format!("h[{i}] = {v} must be finite and >= 0")));
        }
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_vertices];
        for &(i, j, w) in edges {
            if i >= n_vertices || j >= n_vertices {
                return Err(Error::InvalidGraph(format!("edge ({i},{j}) out of range")));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at {i}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidGraph(format!("edge ({i},{j}) weight {w} must be finite and >= 0")));
            }
            if w == 0.0 {
                continue;
            }
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for list in &mut adj {
            list.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(list.len());
            for &(j, w) in list.iter() {
                match merged.last_mut() {
                    Some((k, acc)) if *k == j => *acc += w,
                    _ => merged.push((j, w)),
                }
            }
            *list = merged;
        }
        Ok(Self { adj, h })
    }

    /// Build from a dense symmetric weight matrix (row-major, `n * n`).
    pub fn from_dense(n: usize, beta: &[f64], h: Vec<f64>) -> Result<Self> {
        if beta.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: beta.len() });
        }
        let mut edges = Vec::new();
        for i in 0..n {
            if beta[i * n + i] != 0.0 {
                return Err(Error::InvalidGraph(format!("beta[{i}][{i}] must be 0")));
            }
            for j in i + 1..n {
                if beta[i * n + j] != beta[j * n + i] {
                    return Err(Error::InvalidGraph(format!("beta not symmetric at ({i},{j})")));
                }
                edges.push((i, j, beta[i * n + j]));
            }
        }
        Self::new(n, &edges, h)
    }

    pub fn single_vertex(h: f64) -> Result<Self> {
        Self::new(1, &[], vec![h])
    }

    pub fn two_vertex(beta: f64, h: f64) -> Result<Self> {
        Self::new(2, &[(0, 1, beta)], vec![h, h])
    }

    /// Path `0 - 1 - ... - (n-1)` with uniform weights.
    pub fn path(n: usize, beta: f64, h: f64) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i, beta)).collect();
        Self::new(n, &edges, vec![h; n])
    }

    /// Same graph with every pinning value replaced.
    pub fn with_uniform_h(&self, h: f64) -> Result<Self> {
        if !(h.is_finite() && h >= 0.0) {
            return Err(Error::InvalidGraph(format!("h = {h} must be finite and >= 0")));
        }
        Ok(Self { adj: self.adj.clone(), h: vec![h; self.adj.len()] })
    }

    pub fn n_vertices(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    pub fn beta(&self, i: usize, j: usize) -> f64 {
        match self.adj[i].binary_search_by_key(&j, |&(k, _)| k) {
            Ok(pos) => self.adj[i][pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn h(&self, i: usize) -> f64 {
        self.h[i]
    }

    pub fn h_values(&self) -> &[f64] {
        &self.h
    }

    /// Each undirected edge once, as `(i, j, beta)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |(j, _)| *j > i).map(move |&(j, w)| (i, j, w)))
    }

    pub fn degree_weight(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|(_, w)| w).sum()
    }

    /// At least one positive pinning value, needed for sigma-model normalizability.
    pub fn has_pinning(&self) -> bool {
        self.h.iter().any(|&v| v > 0.0)
    }

    pub fn require_pinning(&self) -> Result<()> {
        if self.has_pinning() {
            Ok(())
        } else {
            Err(Error::InvalidGraph("sigma models need some h_i > 0 (h = 0 is not normalizable)".into()))
        }
    }

    /// Check the structural invariants (symmetry, zero diagonal, signs).
    pub fn check_invariants(&self) -> Result<()> {
        for (i, list) in self.adj.iter().enumerate() {
            for &(j, w) in list {
                if i == j {
                    return Err(Error::InvalidGraph(format!("self-loop at {i}")));
                }
                if !(w >= 0.0) || self.beta(j, i) != w {
                    return Err(Error::InvalidGraph(format!("asymmetric or negative weight at ({i},{j})")));
                }
            }
        }
        if self.h.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidGraph("negative h".into()));
        }
        Ok(())
    }
}

/// Translation-invariant finite-range weights on the discrete torus
/// `(Z / L Z)^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusSpec {
    pub dim: usize,
    pub side: usize,
    /// Displacement vectors with their weights; must be closed under negation.
    pub range_weights: Vec<(Vec<i64>, f64)>,
    pub h: f64,
}

/// A dual-lattice momentum `p = 2 pi k / L`, stored by its index vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Momentum {
    pub k: Vec<usize>,
}

impl Momentum {
    pub fn to_real(&self, side: usize) -> Vec<f64> {
        self.k.iter().map(|&k| 2.0 * PI * k as f64 / side as f64).collect()
    }

    /// Representative of `p` in `(-pi, pi]^d`.
    pub fn centered(&self, side: usize) -> Vec<f64> {
        self.k
            .iter()
            .map(|&k| {
                let k = k as i64;
                let l = side as i64;
                let c = if 2 * k > l { k - l } else { k };
                2.0 * PI * c as f64 / side as f64
            })
            .collect()
    }

    pub fn negated(&self, side: usize) -> Momentum {
        Momentum { k: self.k.iter().map(|&k| (side - k) % side).collect() }
    }
}

impl TorusSpec {
    /// Nearest-neighbour weights `beta` on the `2 d` unit displacements.
    pub fn nearest_neighbour(dim: usize, side: usize, beta: f64, h: f64) -> Self {
        let mut range_weights = Vec::with_capacity(2 * dim);
        for a in 0..dim {
            for sign in [1i64, -1] {
                let mut e = vec![0i64; dim];
                e[a] = sign;
                range_weights.push((e, beta));
            }
        }
        Self { dim, side, range_weights, h }
    }

    pub fn n_sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidTorus(format!("dimension {} not in {{1,2,3}}", self.dim)));
        }
        if self.side == 0 {
            return Err(Error::InvalidTorus("side length must be positive".into()));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::InvalidTorus(format!("h = {} must be positive", self.h)));
        }
        let mut max_norm = 0i64;
        for (disp, w) in &self.range_weights {
            if disp.len() != self.dim {
                return Err(Error::InvalidTorus(format!("displacement {disp:?} has wrong dimension")));
            }
            if disp.iter().all(|&c| c == 0) {
                return Err(Error::InvalidTorus("zero displacement".into()));
            }
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::InvalidTorus(format!("weight {w} for {disp:?} must be positive")));
            }
            let neg: Vec<i64> = disp.iter().map(|c| -c).collect();
            match self.range_weights.iter().find(|(d, _)| *d == neg) {
                Some((_, wn)) if wn == w => {}
                _ => return Err(Error::InvalidTorus(format!("weights not symmetric under negation at {disp:?}"))),
            }
            if self.range_weights.iter().filter(|(d, _)| d == disp).count() > 1 {
                return Err(Error::InvalidTorus(format!("duplicate displacement {disp:?}")));
            }
            max_norm = max_norm.max(disp.iter().map(|c| c.abs()).max().unwrap_or(0));
        }
        if 2 * max_norm >= self.side as i64 {
            return Err(Error::InvalidTorus(format!(
                "side {} too small for range {max_norm}: torus edges would collide",
                self.side
            )));
        }
        Ok(())
    }

    /// Vertex index of a coordinate vector; the first coordinate varies fastest.
    pub fn index_of(&self, coords: &[usize]) -> usize {
        coords.iter().rev().fold(0, |acc, &c| acc * self.side + c)
    }

    pub fn coords_of(&self, mut index: usize) -> Vec<usize> {
        let mut c = Vec::with_capacity(self.dim);
        for _ in 0..self.dim {
            c.push(index % self.side);
            index /= self.side;
        }
        c
    }

    /// `C(beta) = 1/2 sum_j beta_0j |j|^2`, the constant in `lambda(p) <= C |p|^2`.
    pub fn quadratic_constant(&self) -> f64 {
        0.5 * self
            .range_weights
            .iter()
            .map(|(d, w)| w * d.iter().map(|c| (c * c) as f64).sum::<f64>())
            .sum::<f64>()
    }
}

pub fn build_torus(spec: &TorusSpec) -> Result<WeightedGraph> {
    spec.validate()?;
    let n = spec.n_sites();
    let l = spec.side as i64;
    let mut edges = Vec::with_capacity(n * spec.range_weights.len() / 2);
    for v in 0..n {
        let c = spec.coords_of(v);
        for (disp, w) in &spec.range_weights {
            let target: Vec<usize> =
                c.iter().zip(disp).map(|(&ci, &di)| (ci as i64 + di).rem_euclid(l) as usize).collect();
            let u = spec.index_of(&target);
            // Each edge appears once from each endpoint; keep one copy.
            if v < u {
                edges.push((v, u, *w));
            }
        }
    }
    WeightedGraph::new(n, &edges, vec![spec.h; n])
}

/// All dual momenta, in the same order as the torus vertices (first index fastest).
pub fn dual_lattice(spec: &TorusSpec) -> Vec<Momentum> {
    (0..spec.n_sites()).map(|i| Momentum { k: spec.coords_of(i) }).collect()
}

/// `lambda(p) = sum_j beta_0j (1 - cos(p . j))` for a dual-lattice momentum.
pub fn lambda_at(spec: &TorusSpec, p: &Momentum) -> f64 {
    let l = spec.side as f64;
    spec.range_weights
        .iter()
        .map(|(disp, w)| {
            let phase: f64 = p.k.iter().zip(disp).map(|(&k, &d)| 2.0 * PI * k as f64 * d as f64 / l).sum();
            w * (1.0 - phase.cos())
        })
        .sum()
}

/// [`lambda_at`] for a real momentum vector; rejects points off the dual lattice.
pub fn lambda_of(spec: &TorusSpec, p: &[f64]) -> Result<f64> {
    Ok(lambda_at(spec, &momentum_from_real(spec, p)?))
}

pub fn momentum_from_real(spec: &TorusSpec, p: &[f64]) -> Result<Momentum> {
    if p.len() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: p.len() });
    }
    let l = spec.side as f64;
    let mut k = Vec::with_capacity(p.len());
    for &pi in p {
        let x = pi * l / (2.0 * PI);
        let r = x.round();
        if !x.is_finite() || (x - r).abs() > 1e-9 * x.abs().max(1.0) {
            return Err(Error::NotDualMomentum(p.to_vec()));
        }
        k.push((r as i64).rem_euclid(spec.side as i64) as usize);
    }
    Ok(Momentum { k })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_cycle() {
        let spec = TorusSpec::nearest_neighbour(1, 4, 1.0, 1.0);
        let g = build_torus(&spec).unwrap();
        assert_eq!(g.n_vertices(), 4);
        for i in 0..4 {
            assert_eq!(g.neighbors(i).len(), 2);
            assert_eq!(g.beta(i, (i + 1) % 4), 1.0);
            assert_eq!(g.beta(i, (i + 2) % 4), 0.0);
            assert_eq!(g.h(i), 1.0);
        }
    }

    #[test]
    fn square_torus_degree() {
        let spec = TorusSpec::nearest_neighbour(2, 8, 0.7, 1.0);
        let g = build_torus(&spec).unwrap();
        assert_eq!(g.n_vertices(), 64);
        for i in 0..64 {
            assert_eq!(g.neighbors(i).len(), 4);
            assert!(g.neighbors(i).iter().all(|&(_, w)| w == 0.7));
        }
        g.check_invariants().unwrap();
    }

    #[test]
    fn edge_collision_rejected() {
        let spec = TorusSpec::nearest_neighbour(1, 2, 1.0, 1.0);
        assert!(matches!(build_torus(&spec), Err(Error::InvalidTorus(_))));
        let spec = TorusSpec::nearest_neighbour(4, 4, 1.0, 1.0);
        assert!(matches!(build_torus(&spec), Err(Error::InvalidTorus(_))));
    }

    #[test]
    fn asymmetric_range_rejected() {
        let spec = TorusSpec { dim: 1, side: 5, range_weights: vec![(vec![1], 1.0)], h: 1.0 };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn lambda_values() {
        let beta = 0.8;
        let s1 = TorusSpec::nearest_neighbour(1, 8, beta, 1.0);
        assert_eq!(lambda_of(&s1, &[0.0]).unwrap(), 0.0);
        assert!((lambda_of(&s1, &[PI]).unwrap() - 4.0 * beta).abs() < 1e-12);
        let s2 = TorusSpec::nearest_neighbour(2, 8, beta, 1.0);
        assert!((lambda_of(&s2, &[PI, PI]).unwrap() - 8.0 * beta).abs() < 1e-12);
        assert!(matches!(lambda_of(&s1, &[0.3]), Err(Error::NotDualMomentum(_))));
    }

    #[test]
    fn dual_lattice_order() {
        let s = TorusSpec::nearest_neighbour(1, 2, 1.0, 1.0);
        let p: Vec<f64> = dual_lattice(&s).iter().map(|m| m.to_real(2)[0]).collect();
        assert_eq!(p, vec![0.0, PI]);
        let s = TorusSpec::nearest_neighbour(1, 4, 1.0, 1.0);
        let p: Vec<f64> = dual_lattice(&s).iter().map(|m| m.to_real(4)[0]).collect();
        assert_eq!(p, vec![0.0, PI / 2.0, PI, 3.0 * PI / 2.0]);
        let s = TorusSpec::nearest_neighbour(2, 2, 1.0, 1.0);
        assert_eq!(dual_lattice(&s).len(), 4);
    }

    #[test]
    fn graph_rejects_bad_input() {
        assert!(WeightedGraph::new(2, &[(0, 0, 1.0)], vec![1.0, 1.0]).is_err());
        assert!(WeightedGraph::new(2, &[(0, 1, -1.0)], vec![1.0, 1.0]).is_err());
        assert!(WeightedGraph::new(2, &[(0, 1, 1.0)], vec![1.0, -1.0]).is_err());
        assert!(WeightedGraph::new(2, &[(0, 2, 1.0)], vec![1.0, 1.0]).is_err());
        let g = WeightedGraph::new(2, &[(0, 1, 1.0), (1, 0, 0.5)], vec![0.0, 0.0]).unwrap();
        assert_eq!(g.beta(0, 1), 1.5);
        assert!(!g.has_pinning());
    }
}
