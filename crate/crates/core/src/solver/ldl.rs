//! Sparse LDLᵀ factorization of quasi-definite matrices.
//!
//! The factorization is split into a symbolic phase (fill-reducing ordering,
//! elimination tree, column counts) and a numeric phase that can be repeated
//! whenever only the values change. Quasi-definite matrices admit an LDLᵀ
//! factorization for any symmetric permutation, so no pivoting is done.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::sparse::CscMatrix;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LdlError {
    #[error("matrix is not upper triangular (entry at row {row}, column {col})")]
    NotUpperTriangular { row: usize, col: usize },
    #[error("zero pivot encountered at permuted column {0}")]
    ZeroPivot(usize),
}

/// Ordering and elimination structure for a fixed sparsity pattern.
#[derive(Debug, Clone)]
pub struct SymbolicLdl {
    n: usize,
    /// `perm[k]` is the original index placed at position `k`.
    perm: Vec<usize>,
    /// Permuted upper-triangular pattern.
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// Position in the permuted value array for each input value.
    value_map: Vec<usize>,
    etree: Vec<usize>,
    l_col_ptr: Vec<usize>,
}

/// Numeric factor `P A Pᵀ = L D Lᵀ`.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    symbolic: SymbolicLdl,
    l_row_idx: Vec<usize>,
    l_values: Vec<f64>,
    d: Vec<f64>,
    d_inv: Vec<f64>,
    work: Vec<f64>,
}

impl SymbolicLdl {
    /// Analyzes the pattern of an upper-triangular symmetric matrix.
    pub fn analyze(upper: &CscMatrix) -> Result<Self, LdlError> {
        let n = upper.ncols;
        assert_eq!(upper.nrows, n, "LDL requires a square matrix");
        for (r, c, _) in upper.triplets() {
            if r > c {
                return Err(LdlError::NotUpperTriangular { row: r, col: c });
            }
        }

        let perm = minimum_degree(upper);
        let mut iperm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }

        // Permute the pattern, keeping it upper triangular.
        let mut counts = vec![0usize; n + 1];
        for (r, c, _) in upper.triplets() {
            let (pr, pc) = (iperm[r], iperm[c]);
            counts[pr.max(pc) + 1] += 1;
        }
        for c in 0..n {
            counts[c + 1] += counts[c];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut row_idx = vec![0; upper.nnz()];
        let mut value_map = vec![0; upper.nnz()];
        for (k, (r, c, _)) in upper.triplets().enumerate() {
            let (pr, pc) = (iperm[r], iperm[c]);
            let (row, col) = (pr.min(pc), pr.max(pc));
            let slot = next[col];
            row_idx[slot] = row;
            value_map[k] = slot;
            next[col] += 1;
        }

        // Elimination tree and column counts of L.
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut flag = vec![NONE; n];
        for j in 0..n {
            flag[j] = j;
            for p in col_ptr[j]..col_ptr[j + 1] {
                let mut i = row_idx[p];
                while i != j && flag[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    flag[i] = j;
                    i = etree[i];
                    if i == NONE {
                        break;
                    }
                }
            }
        }
        let mut l_col_ptr = vec![0usize; n + 1];
        for i in 0..n {
            l_col_ptr[i + 1] = l_col_ptr[i] + lnz[i];
        }

        Ok(Self {
            n,
            perm,
            col_ptr,
            row_idx,
            value_map,
            etree,
            l_col_ptr,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of strictly-lower nonzeros in `L`.
    pub fn factor_nnz(&self) -> usize {
        self.l_col_ptr[self.n]
    }

    /// Numerically factors a matrix whose values are given in the storage
    /// order of the pattern passed to [`SymbolicLdl::analyze`].
    pub fn factor(&self, values: &[f64]) -> Result<LdlFactor, LdlError> {
        let mut f = LdlFactor {
            symbolic: self.clone(),
            l_row_idx: vec![0; self.factor_nnz()],
            l_values: vec![0.0; self.factor_nnz()],
            d: vec![0.0; self.n],
            d_inv: vec![0.0; self.n],
            work: vec![0.0; self.n],
        };
        f.refactor(values)?;
        Ok(f)
    }
}

impl LdlFactor {
    /// Recomputes the numeric factor for new values on the same pattern.
    pub fn refactor(&mut self, values: &[f64]) -> Result<(), LdlError> {
        let s = &self.symbolic;
        let n = s.n;
        let mut ax = vec![0.0; s.row_idx.len()];
        for (k, &slot) in s.value_map.iter().enumerate() {
            ax[slot] += values[k];
        }

        let mut y_vals = vec![0.0; n];
        let mut y_used = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = s.l_col_ptr[..n].to_vec();

        for k in 0..n {
            let mut nnz_y = 0;
            self.d[k] = 0.0;
            for p in s.col_ptr[k]..s.col_ptr[k + 1] {
                let b = s.row_idx[p];
                if b == k {
                    self.d[k] += ax[p];
                    continue;
                }
                y_vals[b] += ax[p];
                if !y_used[b] {
                    y_used[b] = true;
                    elim[0] = b;
                    let mut nnz_e = 1;
                    let mut next = s.etree[b];
                    while next != NONE && next < k {
                        if y_used[next] {
                            break;
                        }
                        y_used[next] = true;
                        elim[nnz_e] = next;
                        nnz_e += 1;
                        next = s.etree[next];
                    }
                    while nnz_e > 0 {
                        nnz_e -= 1;
                        y_idx[nnz_y] = elim[nnz_e];
                        nnz_y += 1;
                    }
                }
            }

            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let tmp = next_space[c];
                let yc = y_vals[c];
                for j in s.l_col_ptr[c]..tmp {
                    y_vals[self.l_row_idx[j]] -= self.l_values[j] * yc;
                }
                self.l_row_idx[tmp] = k;
                self.l_values[tmp] = yc * self.d_inv[c];
                self.d[k] -= yc * self.l_values[tmp];
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }

            if self.d[k] == 0.0 || !self.d[k].is_finite() {
                return Err(LdlError::ZeroPivot(k));
            }
            self.d_inv[k] = 1.0 / self.d[k];
        }
        Ok(())
    }

    /// Number of negative pivots (the inertia count).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&d| d < 0.0).count()
    }

    /// Solves `A x = b` in place.
    pub fn solve(&mut self, b: &mut [f64]) {
        let s = &self.symbolic;
        let n = s.n;
        let x = &mut self.work;
        for k in 0..n {
            x[k] = b[s.perm[k]];
        }
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for j in s.l_col_ptr[i]..s.l_col_ptr[i + 1] {
                    x[self.l_row_idx[j]] -= self.l_values[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.d_inv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in s.l_col_ptr[i]..s.l_col_ptr[i + 1] {
                acc -= self.l_values[j] * x[self.l_row_idx[j]];
            }
            x[i] = acc;
        }
        for k in 0..n {
            b[s.perm[k]] = x[k];
        }
    }
}

/// Exact minimum-degree ordering on the symmetric graph of `upper`.
///
/// Ties are broken by lowest index, so the ordering is deterministic.
fn minimum_degree(upper: &CscMatrix) -> Vec<usize> {
    let n = upper.ncols;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, c, _) in upper.triplets() {
        if r != c {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }

    let mut eliminated = vec![false; n];
    let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).map(|i| Reverse((degree[i], i))).collect();
    let mut mark = vec![usize::MAX; n];
    let mut perm = Vec::with_capacity(n);
    let mut stamp = 0usize;
    let mut merged = Vec::new();

    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != degree[v] {
            continue;
        }
        eliminated[v] = true;
        perm.push(v);
        let nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !eliminated[u]).collect();
        for &u in &nbrs {
            stamp += 1;
            merged.clear();
            for &w in adj[u].iter().chain(nbrs.iter()) {
                if w != u && !eliminated[w] && mark[w] != stamp {
                    mark[w] = stamp;
                    merged.push(w);
                }
            }
            adj[u].clear();
            adj[u].extend_from_slice(&merged);
            if degree[u] != merged.len() {
                degree[u] = merged.len();
                heap.push(Reverse((degree[u], u)));
            }
        }
        adj[v].clear();
    }
    perm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    #[test]
    fn solves_quasi_definite_system() {
        // [[4, 1, 1], [1, 3, 0], [1, 0, -2]]
        let full = vec![
            vec![4.0, 1.0, 1.0],
            vec![1.0, 3.0, 0.0],
            vec![1.0, 0.0, -2.0],
        ];
        let upper = CscMatrix::from_dense(&full).upper_triangle();
        let sym = SymbolicLdl::analyze(&upper).unwrap();
        let mut f = sym.factor(&upper.values).unwrap();
        assert_eq!(f.negative_pivots(), 1);
        let x_true = [0.5, -1.0, 2.0];
        let mut b = dense_mul(&full, &x_true);
        f.solve(&mut b);
        for (a, b) in b.iter().zip(x_true) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn refactor_reuses_pattern() {
        let full = vec![vec![2.0, 1.0], vec![1.0, -1.0]];
        let upper = CscMatrix::from_dense(&full).upper_triangle();
        let sym = SymbolicLdl::analyze(&upper).unwrap();
        let mut f = sym.factor(&upper.values).unwrap();
        let mut vals = upper.values.clone();
        let last = vals.len() - 1;
        vals[last] = -4.0;
        f.refactor(&vals).unwrap();
        let mut b = vec![3.0, -3.0];
        f.solve(&mut b);
        // [[2,1],[1,-4]] x = [3,-3] -> x = [1, 1]
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_lower_entries() {
        let m = CscMatrix::from_dense(&[vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert!(matches!(
            SymbolicLdl::analyze(&m),
            Err(LdlError::NotUpperTriangular { .. })
        ));
    }

    #[test]
    fn random_banded_systems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.random_range(5..40);
            let split = n / 2;
            let mut full = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i..n.min(i + 4) {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    full[i][j] = v;
                    full[j][i] = v;
                }
            }
            for i in 0..n {
                let row_sum: f64 = full[i].iter().map(|v| v.abs()).sum();
                full[i][i] = if i < split { row_sum + 1.0 } else { -(row_sum + 1.0) };
            }
            let upper = CscMatrix::from_dense(&full).upper_triangle();
            let mut f = SymbolicLdl::analyze(&upper).unwrap().factor(&upper.values).unwrap();
            let x: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
            let mut b = dense_mul(&full, &x);
            f.solve(&mut b);
            for (a, e) in b.iter().zip(&x) {
                assert!((a - e).abs() < 1e-9, "{a} vs {e}");
            }
        }
    }
}
