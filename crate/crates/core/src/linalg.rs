//! Sparse Cholesky factorization for symmetric positive-definite matrices
//! whose off-diagonal pattern is the edge set of a graph.
//!
//! The symbolic phase (fill-reducing minimum-degree ordering, column patterns
//! of the factor, elimination tree) runs once per graph. The numeric phase is
//! a left-looking column factorization. When only a few rows and columns
//! change, [`NumericCholesky::update`] recomputes just the columns on the
//! elimination-tree paths above the changed ones; because every column is
//! produced by exactly the same arithmetic as a full factorization, the
//! result is bit-identical to refactorizing from scratch.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Structure shared by every matrix with a given off-diagonal pattern.
#[derive(Debug)]
pub struct SymbolicCholesky {
    n: usize,
    n_edges: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `iperm[old] = new`
    iperm: Vec<usize>,
    /// Strictly-lower column patterns of the factor (CSC, rows sorted).
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    parent: Vec<Option<usize>>,
    /// For each row `j`, the columns `k < j` with `L[j,k] != 0` and the
    /// storage position of that entry.
    row_lists: Vec<Vec<(usize, usize)>>,
    /// For each column `j`, the strictly-lower entries of the matrix: `(row, edge index)`.
    a_lower: Vec<Vec<(usize, usize)>>,
}

impl SymbolicCholesky {
    /// Analyse the pattern given by `edges` (pairs of distinct vertices in `0..n`).
    pub fn analyse(n: usize, edges: &[(usize, usize)]) -> Result<Arc<Self>> {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n || u == v {
                return Err(Error::InvalidArgument(format!("bad pattern edge ({u},{v})")));
            }
            adj[u].insert(v);
            adj[v].insert(u);
        }

        // Minimum-degree elimination on the explicit elimination graph. The
        // neighbourhood at elimination time is exactly the column pattern.
        let mut eliminated = vec![false; n];
        let mut perm = Vec::with_capacity(n);
        let mut patterns_old: Vec<Vec<usize>> = Vec::with_capacity(n);
        for _ in 0..n {
            let v = (0..n)
                .filter(|&v| !eliminated[v])
                .min_by_key(|&v| (adj[v].len(), v))
                .expect("vertices remain");
            let nbrs: Vec<usize> = adj[v].iter().copied().collect();
            for (a, &x) in nbrs.iter().enumerate() {
                adj[x].remove(&v);
                for &y in &nbrs[a + 1..] {
                    adj[x].insert(y);
                    adj[y].insert(x);
                }
            }
            adj[v].clear();
            eliminated[v] = true;
            perm.push(v);
            patterns_old.push(nbrs);
        }
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut parent = vec![None; n];
        col_ptr.push(0);
        for (j, pat) in patterns_old.iter().enumerate() {
            let mut rows: Vec<usize> = pat.iter().map(|&o| iperm[o]).collect();
            rows.sort_unstable();
            debug_assert!(rows.iter().all(|&r| r > j));
            parent[j] = rows.first().copied();
            row_idx.extend_from_slice(&rows);
            col_ptr.push(row_idx.len());
        }

        let mut row_lists = vec![Vec::new(); n];
        for k in 0..n {
            for pos in col_ptr[k]..col_ptr[k + 1] {
                row_lists[row_idx[pos]].push((k, pos));
            }
        }

        let mut a_lower = vec![Vec::new(); n];
        for (e, &(u, v)) in edges.iter().enumerate() {
            let (a, b) = (iperm[u], iperm[v]);
            let (col, row) = if a < b { (a, b) } else { (b, a) };
            a_lower[col].push((row, e));
        }

        Ok(Arc::new(Self { n, n_edges: edges.len(), perm, iperm, col_ptr, row_idx, parent, row_lists, a_lower }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of strictly-lower nonzeros in the factor.
    pub fn factor_nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Columns (new indexing, ascending) whose values depend on the given
    /// vertices' rows and columns: the union of their elimination-tree paths.
    fn affected_columns(&self, changed_old: &[usize]) -> Vec<usize> {
        let mut mark = vec![false; self.n];
        for &o in changed_old {
            let mut j = Some(self.iperm[o]);
            while let Some(c) = j {
                if mark[c] {
                    break;
                }
                mark[c] = true;
                j = self.parent[c];
            }
        }
        (0..self.n).filter(|&j| mark[j]).collect()
    }
}

/// Numeric factor `P A P^T = L L^T`.
#[derive(Clone, Debug)]
pub struct NumericCholesky {
    sym: Arc<SymbolicCholesky>,
    lvals: Vec<f64>,
    ldiag: Vec<f64>,
    log_diag: Vec<f64>,
    log_det: f64,
    work: Vec<f64>,
}

/// Saved columns allowing an in-place update to be rolled back.
#[derive(Debug, Default)]
pub struct UpdateUndo {
    cols: Vec<usize>,
    lvals: Vec<f64>,
    ldiag: Vec<f64>,
    log_diag: Vec<f64>,
    log_det: f64,
}

impl NumericCholesky {
    /// Factor the matrix with diagonal `diag` (original vertex order) and
    /// off-diagonal entries `off[e]` on the pattern edges.
    pub fn factor(sym: Arc<SymbolicCholesky>, diag: &[f64], off: &[f64]) -> Result<Self> {
        let n = sym.n;
        check_len(diag.len(), n)?;
        check_len(off.len(), sym.n_edges)?;
        let nnz = sym.row_idx.len();
        let mut f = Self {
            sym,
            lvals: vec![0.0; nnz],
            ldiag: vec![0.0; n],
            log_diag: vec![0.0; n],
            log_det: 0.0,
            work: vec![0.0; n],
        };
        for j in 0..n {
            f.compute_column(j, diag, off)?;
        }
        f.log_det = f.sum_log_diag();
        Ok(f)
    }

    /// Factor a matrix whose off-diagonal entries are known but whose
    /// diagonal is random and generated during elimination.
    ///
    /// Column `j` is eliminated in pivot order. Before its pivot is fixed,
    /// `draw(eta_hat)` receives `eta_hat = eta'_j - sum_{r > j} S_rj`, where `S`
    /// is the Schur complement of the already-eliminated block and `eta'` is
    /// `eta` forward-substituted through it, and returns the pivot `S_jj`.
    /// Returns the factor and the implied diagonal (original order).
    pub fn factor_drawing_pivots(
        sym: Arc<SymbolicCholesky>,
        off: &[f64],
        eta: &[f64],
        mut draw: impl FnMut(f64) -> Result<f64>,
    ) -> Result<(Self, Vec<f64>)> {
        let n = sym.n;
        check_len(off.len(), sym.n_edges)?;
        check_len(eta.len(), n)?;
        let nnz = sym.row_idx.len();
        let mut f = Self {
            sym: sym.clone(),
            lvals: vec![0.0; nnz],
            ldiag: vec![0.0; n],
            log_diag: vec![0.0; n],
            log_det: 0.0,
            work: vec![0.0; n],
        };
        let mut diag = vec![0.0; n];
        let mut eta_p: Vec<f64> = (0..n).map(|j| eta[sym.perm[j]]).collect();
        for j in 0..n {
            // x[j] accumulates -sum_k L_jk^2; the original diagonal is unknown.
            f.compute_column_with(j, 0.0, off);
            let x = &mut f.work;
            let below: f64 = (sym.col_ptr[j]..sym.col_ptr[j + 1]).map(|pos| x[sym.row_idx[pos]]).sum();
            let eta_hat = eta_p[j] - below;
            let d = draw(eta_hat)?;
            if !(d > 0.0 && d.is_finite()) {
                for pos in sym.col_ptr[j]..sym.col_ptr[j + 1] {
                    x[sym.row_idx[pos]] = 0.0;
                }
                x[j] = 0.0;
                return Err(Error::NotPositiveDefinite { pivot: sym.perm[j], value: d, t: Vec::new() });
            }
            diag[sym.perm[j]] = d - x[j];
            x[j] = 0.0;
            let ljj = d.sqrt();
            f.ldiag[j] = ljj;
            f.log_diag[j] = ljj.ln();
            let w = eta_p[j] / ljj;
            for pos in sym.col_ptr[j]..sym.col_ptr[j + 1] {
                let r = sym.row_idx[pos];
                let l = x[r] / ljj;
                f.lvals[pos] = l;
                eta_p[r] -= l * w;
                x[r] = 0.0;
            }
        }
        f.log_det = f.sum_log_diag();
        Ok((f, diag))
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.sym
    }

    fn sum_log_diag(&self) -> f64 {
        2.0 * self.log_diag.iter().sum::<f64>()
    }

    /// Scatter column `j` of the Schur complement into `work`, with `a_jj`
    /// as the original diagonal entry.
    fn compute_column_with(&mut self, j: usize, a_jj: f64, off: &[f64]) {
        let sym = &*self.sym;
        let x = &mut self.work;
        x[j] = a_jj;
        for &(row, e) in &sym.a_lower[j] {
            x[row] += off[e];
        }
        for &(k, pos_jk) in &sym.row_lists[j] {
            let ljk = self.lvals[pos_jk];
            x[j] -= ljk * ljk;
            for pos in pos_jk + 1..sym.col_ptr[k + 1] {
                x[sym.row_idx[pos]] -= self.lvals[pos] * ljk;
            }
        }
    }

    fn compute_column(&mut self, j: usize, diag: &[f64], off: &[f64]) -> Result<()> {
        let sym = &*self.sym;
        self.compute_column_with(j, diag[sym.perm[j]], off);
        let sym = &*self.sym;
        let x = &mut self.work;
        let d = x[j];
        x[j] = 0.0;
        if !(d > 0.0) || !d.is_finite() {
            for pos in sym.col_ptr[j]..sym.col_ptr[j + 1] {
                x[sym.row_idx[pos]] = 0.0;
            }
            return Err(Error::NotPositiveDefinite { pivot: sym.perm[j], value: d, t: Vec::new() });
        }
        let ljj = d.sqrt();
        self.ldiag[j] = ljj;
        self.log_diag[j] = ljj.ln();
        for pos in sym.col_ptr[j]..sym.col_ptr[j + 1] {
            let r = sym.row_idx[pos];
            self.lvals[pos] = x[r] / ljj;
            x[r] = 0.0;
        }
        Ok(())
    }

    /// Refactor in place after the rows/columns of `changed` vertices (and
    /// entries on edges touching them) changed. On error the factor is left
    /// in its previous state.
    pub fn update(&mut self, diag: &[f64], off: &[f64], changed: &[usize]) -> Result<UpdateUndo> {
        let cols = self.sym.affected_columns(changed);
        let mut undo = UpdateUndo { cols: Vec::new(), lvals: Vec::new(), ldiag: Vec::new(), log_diag: Vec::new(), log_det: self.log_det };
        for &j in &cols {
            undo.ldiag.push(self.ldiag[j]);
            undo.log_diag.push(self.log_diag[j]);
            let (a, b) = (self.sym.col_ptr[j], self.sym.col_ptr[j + 1]);
            undo.lvals.extend_from_slice(&self.lvals[a..b]);
        }
        undo.cols = cols;
        for idx in 0..undo.cols.len() {
            let j = undo.cols[idx];
            if let Err(e) = self.compute_column(j, diag, off) {
                self.rollback(undo);
                return Err(e);
            }
        }
        self.log_det = self.sum_log_diag();
        Ok(undo)
    }

    pub fn rollback(&mut self, undo: UpdateUndo) {
        let mut off = 0;
        for (i, &j) in undo.cols.iter().enumerate() {
            self.ldiag[j] = undo.ldiag[i];
            self.log_diag[j] = undo.log_diag[i];
            let (a, b) = (self.sym.col_ptr[j], self.sym.col_ptr[j + 1]);
            self.lvals[a..b].copy_from_slice(&undo.lvals[off..off + (b - a)]);
            off += b - a;
        }
        self.log_det = undo.log_det;
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Solve `A x = b` (original vertex order).
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let sym = &*self.sym;
        let n = sym.n;
        let mut y: Vec<f64> = (0..n).map(|j| b[sym.perm[j]]).collect();
        // L y = Pb
        for j in 0..n {
            y[j] /= self.ldiag[j];
            let yj = y[j];
            for pos in sym.col_ptr[j]..sym.col_ptr[j + 1] {
                y[sym.row_idx[pos]] -= self.lvals[pos] * yj;
            }
        }
        self.back_substitute(&mut y);
        let mut x = vec![0.0; n];
        for j in 0..n {
            x[sym.perm[j]] = y[j];
        }
        x
    }

    /// In-place `L^T y = c` on permuted vectors.
    fn back_substitute(&self, y: &mut [f64]) {
        let sym = &*self.sym;
        for j in (0..sym.n).rev() {
            let mut acc = y[j];
            for pos in sym.col_ptr[j]..sym.col_ptr[j + 1] {
                acc -= self.lvals[pos] * y[sym.row_idx[pos]];
            }
            y[j] = acc / self.ldiag[j];
        }
    }

    /// Map standard normals `z` to a draw from `N(0, A^{-1})` (original order).
    pub fn gaussian_from_standard(&self, z: &[f64]) -> Vec<f64> {
        let sym = &*self.sym;
        let mut y = z.to_vec();
        self.back_substitute(&mut y);
        let mut x = vec![0.0; sym.n];
        for j in 0..sym.n {
            x[sym.perm[j]] = y[j];
        }
        x
    }

    /// Column `b` of the inverse.
    pub fn inverse_column(&self, b: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.sym.n];
        e[b] = 1.0;
        self.solve(&e)
    }

    /// Dense inverse, row-major.
    pub fn inverse_dense(&self) -> Vec<f64> {
        let n = self.sym.n;
        let mut inv = vec![0.0; n * n];
        for b in 0..n {
            let col = self.inverse_column(b);
            for a in 0..n {
                inv[a * n + b] = col[a];
            }
        }
        inv
    }
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        Err(Error::DimensionMismatch { expected, got })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn ring_with_chords(n: usize) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        e.push((0, n / 2));
        e.push((1, n / 3));
        e
    }

    fn matrix(n: usize, edges: &[(usize, usize)], seed: u64) -> (Vec<f64>, Vec<f64>, DMatrix<f64>) {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let off: Vec<f64> = edges.iter().map(|_| -(0.1 + next())).collect();
        let mut diag = vec![0.0; n];
        for (&(u, v), &w) in edges.iter().zip(&off) {
            diag[u] -= w;
            diag[v] -= w;
        }
        for d in diag.iter_mut() {
            *d += 0.05 + next();
        }
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = diag[i];
        }
        for (&(u, v), &w) in edges.iter().zip(&off) {
            m[(u, v)] += w;
            m[(v, u)] += w;
        }
        (diag, off, m)
    }

    #[test]
    fn log_det_and_solve_match_dense() {
        let n = 23;
        let edges = ring_with_chords(n);
        let sym = SymbolicCholesky::analyse(n, &edges).unwrap();
        let (diag, off, m) = matrix(n, &edges, 3);
        let f = NumericCholesky::factor(sym, &diag, &off).unwrap();
        let dense = m.clone().cholesky().unwrap();
        let ld: f64 = 2.0 * dense.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        assert!((f.log_det() - ld).abs() < 1e-10 * ld.abs().max(1.0));
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = f.solve(&b);
        let r = &m * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(b);
        assert!(r.norm() < 1e-10);
    }

    #[test]
    fn partial_update_is_bit_identical() {
        let n = 30;
        let edges = ring_with_chords(n);
        let sym = SymbolicCholesky::analyse(n, &edges).unwrap();
        let (mut diag, mut off, _) = matrix(n, &edges, 5);
        let mut f = NumericCholesky::factor(sym.clone(), &diag, &off).unwrap();
        // Perturb vertex 7 and its incident edges.
        let v = 7;
        diag[v] += 0.3;
        for (e, &(a, b)) in edges.iter().enumerate() {
            if a == v || b == v {
                off[e] *= 1.1;
                diag[a] += 0.01;
                diag[b] += 0.01;
            }
        }
        let mut changed = vec![v];
        for &(a, b) in &edges {
            if a == v {
                changed.push(b);
            }
            if b == v {
                changed.push(a);
            }
        }
        let undo = f.update(&diag, &off, &changed).unwrap();
        let full = NumericCholesky::factor(sym, &diag, &off).unwrap();
        assert_eq!(f.log_det().to_bits(), full.log_det().to_bits());
        assert_eq!(f.lvals, full.lvals);
        let before = f.log_det();
        f.rollback(undo);
        assert_ne!(f.log_det(), before);
    }

    #[test]
    fn indefinite_matrix_reports_failure() {
        let edges = vec![(0, 1)];
        let sym = SymbolicCholesky::analyse(2, &edges).unwrap();
        let err = NumericCholesky::factor(sym, &[1.0, 1.0], &[-2.0]).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn gaussian_draw_has_inverse_covariance() {
        // x = P^T L^{-T} z  =>  Cov(x) = A^{-1}; check via x^T A x = |z|^2.
        let n = 12;
        let edges = ring_with_chords(n);
        let sym = SymbolicCholesky::analyse(n, &edges).unwrap();
        let (diag, off, m) = matrix(n, &edges, 9);
        let f = NumericCholesky::factor(sym, &diag, &off).unwrap();
        let z: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let x = nalgebra::DVector::from_vec(f.gaussian_from_standard(&z));
        let q = (x.transpose() * &m * &x)[(0, 0)];
        let zz: f64 = z.iter().map(|v| v * v).sum();
        assert!((q - zz).abs() < 1e-10 * zz);
    }

    #[test]
    fn drawn_pivots_see_the_schur_complement() {
        let n = 17;
        let edges = ring_with_chords(n);
        let sym = SymbolicCholesky::analyse(n, &edges).unwrap();
        let (_, off, _) = matrix(n, &edges, 11);
        let eta: Vec<f64> = (0..n).map(|i| 0.2 + 0.05 * i as f64).collect();
        let mut seen = Vec::new();
        let (f, diag) = NumericCholesky::factor_drawing_pivots(sym.clone(), &off, &eta, |e| {
            seen.push(e);
            Ok(0.5 * e + 0.3)
        })
        .unwrap();
        // The implied diagonal refactors to the same factor.
        let g = NumericCholesky::factor(sym.clone(), &diag, &off).unwrap();
        assert!((f.log_det() - g.log_det()).abs() < 1e-12 * g.log_det().abs().max(1.0));

        // Dense check of eta_hat in pivot order.
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = diag[i];
        }
        for (&(u, v), &w) in edges.iter().zip(&off) {
            m[(u, v)] = w;
            m[(v, u)] = w;
        }
        for (j, &got) in seen.iter().enumerate() {
            let done: Vec<usize> = sym.perm[..j].to_vec();
            let rest: Vec<usize> = sym.perm[j..].to_vec();
            let v = sym.perm[j];
            let (schur_row, eta_j) = if done.is_empty() {
                let row: Vec<f64> = rest.iter().map(|&r| m[(v, r)]).collect();
                (row, eta[v])
            } else {
                let a = m.select_rows(&done).select_columns(&done);
                let ainv = a.try_inverse().unwrap();
                let b = m.select_rows(&rest).select_columns(&done);
                let schur = m.select_rows(&rest).select_columns(&rest) - &b * &ainv * b.transpose();
                let eta_done = nalgebra::DVector::from_iterator(done.len(), done.iter().map(|&d| eta[d]));
                let eta_rest = nalgebra::DVector::from_iterator(rest.len(), rest.iter().map(|&r| eta[r]));
                let eta_s = eta_rest - &b * (&ainv * eta_done);
                (schur.row(0).iter().copied().collect(), eta_s[0])
            };
            let expected = eta_j - schur_row[1..].iter().sum::<f64>();
            assert!((got - expected).abs() < 1e-10 * expected.abs().max(1.0), "pivot {j}: {got} vs {expected}");
        }
    }
}
