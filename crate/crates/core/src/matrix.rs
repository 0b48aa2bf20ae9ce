//! Sparse lower-triangular matrices in CSR form, symmetric permutations and
//! the serial forward-substitution reference solve.

use crate::error::{Error, Result};

/// A square lower-triangular matrix in compressed sparse row form.
///
/// Every row stores its entries in strictly increasing column order, all
/// columns are `<= row`, and the last entry of each row is a non-zero
/// diagonal. Explicitly stored zeros below the diagonal are kept as
/// structural non-zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrLowerTriangular {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrLowerTriangular {
    /// Builds a matrix from raw CSR arrays, checking every structural invariant.
    pub fn from_csr(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = Self {
            n,
            row_ptr,
            col_idx,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds a matrix from `(row, col, value)` triplets (0-based).
    ///
    /// Entries above the diagonal are rejected, duplicates are summed and each
    /// row is sorted by column.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n + 1];
        for &(r, c, _) in triplets {
            if r >= n || c >= n {
                return Err(Error::IndexOutOfBounds { row: r, col: c, n });
            }
            if c > r {
                return Err(Error::NotLowerTriangular { row: r, col: c });
            }
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0f64; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..n {
            scratch.clear();
            scratch.extend(
                cols[counts[i]..counts[i + 1]]
                    .iter()
                    .copied()
                    .zip(vals[counts[i]..counts[i + 1]].iter().copied()),
            );
            // stable sort keeps file order for duplicates, so sums are reproducible
            scratch.sort_by_key(|&(c, _)| c);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::from_csr(n, row_ptr, col_idx, values)
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Checks all structural invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if self.row_ptr.len() != n + 1 {
            return Err(Error::InvalidStructure(format!(
                "row_ptr has length {}, expected {}",
                self.row_ptr.len(),
                n + 1
            )));
        }
        if self.row_ptr[0] != 0 || self.row_ptr[n] != self.col_idx.len() {
            return Err(Error::InvalidStructure(
                "row_ptr must start at 0 and end at nnz".into(),
            ));
        }
        if self.col_idx.len() != self.values.len() {
            return Err(Error::LengthMismatch {
                expected: self.col_idx.len(),
                got: self.values.len(),
            });
        }
        for i in 0..n {
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            if hi < lo {
                return Err(Error::InvalidStructure(format!(
                    "row_ptr decreases at row {i}"
                )));
            }
            let cols = &self.col_idx[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidStructure(format!(
                    "columns of row {i} are not strictly increasing"
                )));
            }
            match cols.last() {
                Some(&c) if c > i => return Err(Error::NotLowerTriangular { row: i, col: c }),
                Some(&c) if c == i && self.values[hi - 1] != 0.0 => {}
                _ => return Err(Error::SingularDiagonal(i)),
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices of row `i`, diagonal last.
    pub fn row_cols(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_values(&self, i: usize) -> &[f64] {
        &self.values[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// Number of floating point operations of one solve: `2 * nnz - n`.
    pub fn flops(&self) -> usize {
        2 * self.nnz() - self.n
    }

    /// Iterates over `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.row_cols(i)
                .iter()
                .zip(self.row_values(i))
                .map(move |(&c, &v)| (i, c, v))
        })
    }

    /// Computes one unknown of the forward substitution.
    ///
    /// The dot product is accumulated in ascending column order; every solver
    /// in this crate goes through this routine so results are bitwise
    /// reproducible across schedules.
    #[inline(always)]
    pub(crate) fn solve_row(&self, i: usize, b_i: f64, x: impl Fn(usize) -> f64) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1] - 1;
        let mut acc = b_i;
        for k in lo..hi {
            acc -= self.values[k] * x(self.col_idx[k]);
        }
        acc / self.values[hi]
    }
}

/// A bijection on `0..n`, stored as `forward[old] = new`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    forward: Vec<usize>,
}

impl Permutation {
    pub fn new(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        let mut seen = vec![false; n];
        for &p in &forward {
            if p >= n {
                return Err(Error::InvalidPermutation(format!(
                    "{p} out of range 0..{n}"
                )));
            }
            if std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidPermutation(format!("{p} appears twice")));
            }
        }
        Ok(Self { forward })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            forward: (0..n).collect(),
        }
    }

    /// Builds the permutation that moves `order[k]` to position `k`.
    pub fn from_order(order: &[usize]) -> Result<Self> {
        let n = order.len();
        let mut forward = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            if old >= n || forward[old] != usize::MAX {
                return Err(Error::InvalidPermutation(format!(
                    "order entry {old} is out of range or repeated"
                )));
            }
            forward[old] = new;
        }
        Ok(Self { forward })
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.forward.iter().enumerate().all(|(i, &p)| i == p)
    }

    /// New index of old index `i`.
    pub fn apply(&self, i: usize) -> usize {
        self.forward[i]
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.forward.len()];
        for (old, &new) in self.forward.iter().enumerate() {
            inv[new] = old;
        }
        Permutation { forward: inv }
    }
}

/// Returns `A'` with `A'[p(i), p(j)] = A[i, j]`.
///
/// Fails with [`Error::NotLowerTriangular`] when `p` is not a topological
/// order of the row-dependency graph.
pub fn symmetric_permute(a: &CsrLowerTriangular, p: &Permutation) -> Result<CsrLowerTriangular> {
    let n = a.n();
    if p.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: p.len(),
        });
    }
    let inv = p.inverse();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(a.nnz());
    let mut values = Vec::with_capacity(a.nnz());
    row_ptr.push(0);
    let mut scratch: Vec<(usize, f64)> = Vec::new();
    for new_row in 0..n {
        let old_row = inv.apply(new_row);
        scratch.clear();
        for (&c, &v) in a.row_cols(old_row).iter().zip(a.row_values(old_row)) {
            let nc = p.apply(c);
            if nc > new_row {
                return Err(Error::NotLowerTriangular {
                    row: new_row,
                    col: nc,
                });
            }
            scratch.push((nc, v));
        }
        scratch.sort_unstable_by_key(|&(c, _)| c);
        for &(c, v) in &scratch {
            col_idx.push(c);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
    }
    CsrLowerTriangular::from_csr(n, row_ptr, col_idx, values)
}

/// `out[p(i)] = v[i]`.
pub fn permute_vector(v: &[f64], p: &Permutation) -> Result<Vec<f64>> {
    if v.len() != p.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            got: v.len(),
        });
    }
    let mut out = vec![0.0; v.len()];
    for (i, &x) in v.iter().enumerate() {
        out[p.apply(i)] = x;
    }
    Ok(out)
}

/// `out[i] = v[p(i)]`, the inverse of [`permute_vector`].
pub fn inverse_permute_vector(v: &[f64], p: &Permutation) -> Result<Vec<f64>> {
    if v.len() != p.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            got: v.len(),
        });
    }
    Ok((0..v.len()).map(|i| v[p.apply(i)]).collect())
}

/// Serial forward substitution, the reference for every parallel solve.
pub fn serial_sptrsv(a: &CsrLowerTriangular, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.n() {
        return Err(Error::LengthMismatch {
            expected: a.n(),
            got: b.len(),
        });
    }
    let mut x = vec![0.0; a.n()];
    for i in 0..a.n() {
        if a.values[a.row_ptr[i + 1] - 1] == 0.0 {
            return Err(Error::SingularDiagonal(i));
        }
        let xi = a.solve_row(i, b[i], |j| x[j]);
        x[i] = xi;
    }
    Ok(x)
}

/// Max-norm relative residual `||Ax - b||_inf / ||b||_inf`.
pub fn relative_residual(a: &CsrLowerTriangular, x: &[f64], b: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (i, bi) in b.iter().enumerate().take(a.n()) {
        let ax: f64 = a
            .row_cols(i)
            .iter()
            .zip(a.row_values(i))
            .map(|(&c, &v)| v * x[c])
            .sum();
        worst = worst.max((ax - bi).abs());
    }
    let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if bnorm == 0.0 {
        worst
    } else {
        worst / bnorm
    }
}
