//! Sparse and dense linear algebra: CSR storage, reverse Cuthill-McKee
//! ordering, skyline Cholesky and the bordered (saddle point) solves.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Compressed sparse row matrix with a fixed pattern and sorted columns.
#[derive(Clone, Debug)]
pub struct CsrMatrix<T> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Square matrix with the given row patterns (deduplicated and sorted here).
    pub fn from_pattern(mut rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let values = vec![T::zero(); col_idx.len()];
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = T::zero());
    }

    /// Storage position of entry (i, j), if present in the pattern.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    /// Adds to entry (i, j); the entry must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let p = self.position(i, j).unwrap_or_else(|| panic!("entry ({i}, {j}) outside the sparsity pattern"));
        self.values[p] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.position(i, j).map_or(T::zero(), |p| self.values[p])
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (self.col_idx[p], self.values[p]))
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn is_structurally_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, _)| self.position(j, i).is_some()))
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> T {
        let mut max = T::zero();
        let mut diff = T::zero();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                max = max.max(v.abs());
                diff = diff.max((v - self.get(j, i)).abs());
            }
        }
        if max > T::zero() {
            diff / max
        } else {
            T::zero()
        }
    }
}

/// Reverse Cuthill-McKee ordering of a graph given by adjacency lists.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_ordering(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(adj, seed, &degree);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> Vec<usize> {
    let mut level = vec![usize::MAX; adj.len()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                queue.push_back(w);
            }
        }
    }
    level
}

fn pseudo_peripheral(adj: &[Vec<usize>], seed: usize, degree: &[usize]) -> usize {
    let mut v = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let level = bfs_levels(adj, v);
        let far = level.iter().filter(|&&l| l != usize::MAX).max().copied().unwrap_or(0);
        if far <= ecc && ecc > 0 {
            break;
        }
        ecc = far;
        let cand = (0..adj.len())
            .filter(|&w| level[w] == far)
            .min_by_key(|&w| (degree[w], w))
            .unwrap_or(v);
        if cand == v {
            break;
        }
        v = cand;
    }
    v
}

/// Profile of a bandwidth-reduced symmetric matrix.
fn profile_size(first: &[usize]) -> usize {
    first.iter().enumerate().map(|(i, &f)| i - f + 1).sum()
}

/// Skyline (variable band) Cholesky factorization of a symmetric positive
/// definite submatrix of a CSR matrix, in reverse Cuthill-McKee order.
#[derive(Clone, Debug)]
pub struct SkylineCholesky<T> {
    /// Global indices of the submatrix rows, in factor order.
    pub perm: Vec<usize>,
    /// Global index to factor position (`usize::MAX` outside the subset).
    pos: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> SkylineCholesky<T> {
    /// Symbolic analysis for the submatrix of `a` restricted to `subset`.
    pub fn analyze(a: &CsrMatrix<T>, subset: &[usize]) -> Self {
        let mut local = vec![usize::MAX; a.n];
        for (k, &g) in subset.iter().enumerate() {
            local[g] = k;
        }
        let adj: Vec<Vec<usize>> = subset
            .iter()
            .map(|&g| {
                a.row(g)
                    .map(|(j, _)| local[j])
                    .filter(|&l| l != usize::MAX && l != local[g])
                    .collect()
            })
            .collect();
        let order = rcm_ordering(&adj);
        let perm: Vec<usize> = order.iter().map(|&k| subset[k]).collect();
        let mut pos = vec![usize::MAX; a.n];
        for (k, &g) in perm.iter().enumerate() {
            pos[g] = k;
        }
        let mut first: Vec<usize> = (0..perm.len()).collect();
        for (k, &g) in perm.iter().enumerate() {
            for (j, _) in a.row(g) {
                let pj = pos[j];
                if pj != usize::MAX && pj < first[k] {
                    first[k] = pj;
                }
            }
        }
        // symmetric pattern: also account for entries stored only above the diagonal
        for (k, &g) in perm.iter().enumerate() {
            for (j, _) in a.row(g) {
                let pj = pos[j];
                if pj != usize::MAX && pj > k && k < first[pj] {
                    first[pj] = k;
                }
            }
        }
        let mut offset = Vec::with_capacity(perm.len() + 1);
        let mut acc = 0;
        for (i, &f) in first.iter().enumerate() {
            offset.push(acc);
            acc += i - f + 1;
        }
        offset.push(acc);
        debug_assert_eq!(acc, profile_size(&first));
        SkylineCholesky { perm, pos, first, offset, data: vec![T::zero(); acc] }
    }

    pub fn size(&self) -> usize {
        self.perm.len()
    }

    pub fn profile(&self) -> usize {
        self.data.len()
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        self.offset[i] + j - self.first[i]
    }

    /// Numeric factorization from the current values of `a` (lower triangle
    /// of the subset, read from the symmetric pattern).
    pub fn factor(&mut self, a: &CsrMatrix<T>) -> Result<()> {
        self.data.iter_mut().for_each(|v| *v = T::zero());
        for (i, &g) in self.perm.iter().enumerate() {
            for (j, v) in a.row(g) {
                let pj = self.pos[j];
                if pj != usize::MAX && pj <= i {
                    let k = self.idx(i, pj);
                    self.data[k] = v;
                }
            }
        }
        let n = self.size();
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offset[i];
            for j in fi..i {
                let fj = self.first[j];
                let oj = self.offset[j];
                let k0 = fi.max(fj);
                let mut s = self.data[oi + j - fi];
                let ri = &self.data[oi + k0 - fi..oi + j - fi];
                let rj = &self.data[oj + k0 - fj..oj + j - fj];
                for (x, y) in ri.iter().zip(rj) {
                    s -= *x * *y;
                }
                let djj = self.data[oj + j - fj];
                self.data[oi + j - fi] = s / djj;
            }
            let mut d = self.data[oi + i - fi];
            for x in &self.data[oi..oi + i - fi] {
                d -= *x * *x;
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::SingularMatrix { pivot: i, size: n });
            }
            self.data[oi + i - fi] = d.sqrt();
        }
        Ok(())
    }

    /// Solves for a right-hand side indexed by global DoF; entries outside the
    /// subset are ignored and returned as zero.
    pub fn solve_global(&self, b: &[T]) -> Vec<T> {
        let mut y: Vec<T> = self.perm.iter().map(|&g| b[g]).collect();
        self.solve_in_place(&mut y);
        let mut x = vec![T::zero(); b.len()];
        for (k, &g) in self.perm.iter().enumerate() {
            x[g] = y[k];
        }
        x
    }

    fn solve_in_place(&self, y: &mut [T]) {
        let n = self.size();
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offset[i];
            let mut s = y[i];
            for (k, x) in (fi..i).zip(&self.data[oi..oi + i - fi]) {
                s -= *x * y[k];
            }
            y[i] = s / self.data[oi + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let oi = self.offset[i];
            y[i] /= self.data[oi + i - fi];
            let yi = y[i];
            for (k, x) in (fi..i).zip(&self.data[oi..oi + i - fi]) {
                y[k] -= *x * yi;
            }
        }
    }
}

/// Dense LU solve with partial pivoting.
pub fn dense_solve<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(c);
        if !(a[p][c].abs() > T::epsilon() * scale) {
            return Err(Error::SingularMatrix { pivot: c, size: n });
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != T::zero() {
                for k in c..n {
                    let v = a[c][k];
                    a[r][k] -= f * v;
                }
                let v = b[c];
                b[r] -= f * v;
            }
        }
    }
    for c in (0..n).rev() {
        let mut s = b[c];
        for k in c + 1..n {
            s -= a[c][k] * b[k];
        }
        b[c] = s / a[c][c];
    }
    Ok(b)
}

/// Eigenvalues of a small symmetric matrix (cyclic Jacobi rotations).
pub fn symmetric_eigenvalues<T: Real>(m: &[Vec<T>]) -> Vec<T> {
    let n = m.len();
    let mut a: Vec<Vec<T>> = m.to_vec();
    for _ in 0..100 {
        let off: T = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off <= T::epsilon() * T::epsilon() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (T::lit(2.0) * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Solves the bordered system `[A Bᵀ; B C] [x; y] = [f; g]` where the first
/// `n_h` unknowns form the SPD block `A` (factored in `chol`) and the
/// trailing unknowns the small border, via the Schur complement.
pub fn schur_bordered_solve<T: Real>(
    jac: &CsrMatrix<T>,
    chol: &SkylineCholesky<T>,
    n_h: usize,
    rhs: &[T],
) -> Result<Vec<T>> {
    let n = jac.n;
    let nv = n - n_h;
    let xf = chol.solve_global(&pad(&rhs[..n_h], n));
    if nv == 0 {
        return Ok(xf[..n].to_vec());
    }
    // columns of A⁻¹ Bᵀ
    let mut cols = Vec::with_capacity(nv);
    for k in 0..nv {
        let mut bt = vec![T::zero(); n];
        for (j, v) in jac.row(n_h + k) {
            if j < n_h {
                bt[j] = v;
            }
        }
        cols.push(chol.solve_global(&bt));
    }
    let b_dot = |k: usize, x: &[T]| -> T { jac.row(n_h + k).filter(|&(j, _)| j < n_h).map(|(j, v)| v * x[j]).sum() };
    let mut s = vec![vec![T::zero(); nv]; nv];
    let mut g = vec![T::zero(); nv];
    for k in 0..nv {
        for l in 0..nv {
            s[k][l] = b_dot(k, &cols[l]) - jac.get(n_h + k, n_h + l);
        }
        g[k] = b_dot(k, &xf) - rhs[n_h + k];
    }
    let y = dense_solve(s, g)?;
    let mut x = xf;
    for (l, col) in cols.iter().enumerate() {
        for i in 0..n_h {
            x[i] -= y[l] * col[i];
        }
    }
    for k in 0..nv {
        x[n_h + k] = y[k];
    }
    Ok(x)
}

/// Solves the system with the DoFs in `fixed` given the prescribed
/// `increments`: the free block is factored in `chol`, and the trailing
/// border unknowns are recovered from the reaction rows of the fixed DoFs.
pub fn reaction_solve<T: Real>(
    jac: &CsrMatrix<T>,
    chol: &SkylineCholesky<T>,
    n_h: usize,
    fixed: &[usize],
    increments: &[T],
    rhs: &[T],
) -> Result<Vec<T>> {
    let n = jac.n;
    let nv = n - n_h;
    if fixed.len() != nv || increments.len() != nv {
        return Err(Error::Argument(format!("{} fixed DoFs for {} border unknowns", fixed.len(), nv)));
    }
    let mut is_fixed = vec![false; n];
    fixed.iter().for_each(|&d| is_fixed[d] = true);
    let mut b = vec![T::zero(); n];
    for i in 0..n_h {
        if !is_fixed[i] {
            b[i] = rhs[i];
        }
    }
    // move the prescribed columns to the right-hand side (the matrix is symmetric)
    for (&d, &inc) in fixed.iter().zip(increments) {
        for (j, v) in jac.row(d) {
            if j < n_h && !is_fixed[j] {
                b[j] -= v * inc;
            }
        }
    }
    let mut x = chol.solve_global(&b);
    for (&d, &inc) in fixed.iter().zip(increments) {
        x[d] = inc;
    }
    let mut m = vec![vec![T::zero(); nv]; nv];
    let mut g = vec![T::zero(); nv];
    for (r, &d) in fixed.iter().enumerate() {
        let mut s = rhs[d];
        for (j, v) in jac.row(d) {
            if j >= n_h {
                m[r][j - n_h] = v;
            } else {
                s -= v * x[j];
            }
        }
        g[r] = s;
    }
    let y = dense_solve(m, g)?;
    for k in 0..nv {
        x[n_h + k] = y[k];
    }
    Ok(x)
}

fn pad<T: Real>(v: &[T], n: usize) -> Vec<T> {
    let mut out = v.to_vec();
    out.resize(n, T::zero());
    out
}
