use crate::linalg::{DenseMatrix, FlopCounter, Real};

/// `M = M_Jacobi · M_SPAI` for the `x2` block.
///
/// `M_SPAI` copies `R22` on the pose-coupling set
/// `S = {(pos_i + k, pos_j + k) : poses i, j; k = 0..5}`, has 1 on the rest
/// of the diagonal and 0 elsewhere. Because `R22` is upper triangular only the
/// pairs with `pos_i ≤ pos_j` can be nonzero. `M_Jacobi` holds the column
/// norms of `R22 · M_SPAI⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner<T> {
    pub n: usize,
    /// Strictly upper part of `S` as `(row, col)`, sorted by column then row.
    pub pairs: Vec<(usize, usize)>,
    /// `M_SPAI` values on `pairs`.
    pub spai_values: Vec<T>,
    /// Diagonal of `M_SPAI`.
    pub spai_diag: Vec<T>,
    pub jacobi_diag: Vec<T>,
    /// Indices whose Jacobi entry (or SPAI pivot) had to be pinned to 1.
    pub degenerate: Vec<usize>,
    /// For each column, the range of `pairs` ending in that column.
    col_start: Vec<usize>,
    /// For each row, the `(col, value index)` entries of that row.
    row_entries: Vec<Vec<(usize, usize)>>,
}

/// Sparsity set restricted to `i ≤ j` for pose error blocks starting at
/// `pose_offsets` (in `x2` coordinates).
pub fn sparsity_set(pose_offsets: &[usize]) -> (Vec<(usize, usize)>, Vec<usize>) {
    let mut pairs = Vec::new();
    let mut diag = Vec::new();
    for (a, &pi) in pose_offsets.iter().enumerate() {
        for k in 0..6 {
            diag.push(pi + k);
        }
        for &pj in &pose_offsets[a + 1..] {
            let (lo, hi) = if pi < pj { (pi, pj) } else { (pj, pi) };
            for k in 0..6 {
                pairs.push((lo + k, hi + k));
            }
        }
    }
    pairs.sort_by_key(|&(i, j)| (j, i));
    diag.sort_unstable();
    (pairs, diag)
}

impl<T: Real> Preconditioner<T> {
    pub fn identity(n: usize) -> Self {
        Self::from_parts(n, Vec::new(), Vec::new(), vec![T::one(); n], vec![T::one(); n], Vec::new())
    }

    fn from_parts(
        n: usize,
        pairs: Vec<(usize, usize)>,
        spai_values: Vec<T>,
        spai_diag: Vec<T>,
        jacobi_diag: Vec<T>,
        degenerate: Vec<usize>,
    ) -> Self {
        let mut col_start = vec![0usize; n + 1];
        for &(_, j) in &pairs {
            col_start[j + 1] += 1;
        }
        for j in 0..n {
            col_start[j + 1] += col_start[j];
        }
        let mut row_entries = vec![Vec::new(); n];
        for (v, &(i, j)) in pairs.iter().enumerate() {
            row_entries[i].push((j, v));
        }
        Self {
            n,
            pairs,
            spai_values,
            spai_diag,
            jacobi_diag,
            degenerate,
            col_start,
            row_entries,
        }
    }

    /// Dense `M_SPAI`.
    pub fn spai_dense(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::from_diagonal(&self.spai_diag);
        for (&(i, j), &v) in self.pairs.iter().zip(&self.spai_values) {
            m[(i, j)] = v;
        }
        m
    }

    /// Dense `M = M_Jacobi · M_SPAI`.
    pub fn dense(&self) -> DenseMatrix<T> {
        let mut m = self.spai_dense();
        for i in 0..self.n {
            let d = self.jacobi_diag[i];
            for v in m.row_mut(i) {
                *v *= d;
            }
        }
        m
    }

    pub fn cast<U: Real>(&self) -> Preconditioner<U> {
        let c = |v: &Vec<T>| v.iter().map(|&x| U::from_f64(x.to_f64())).collect::<Vec<U>>();
        Preconditioner::from_parts(
            self.n,
            self.pairs.clone(),
            c(&self.spai_values),
            c(&self.spai_diag),
            c(&self.jacobi_diag),
            self.degenerate.clone(),
        )
    }

    /// Row-wise `y ← y · M_SPAI⁻¹` by sparse forward substitution over
    /// columns.
    fn spai_solve_row(&self, y: &mut [T], inv_diag: &[T]) {
        for j in 0..self.n {
            let mut s = y[j];
            for v in self.col_start[j]..self.col_start[j + 1] {
                let (i, _) = self.pairs[v];
                s -= y[i] * self.spai_values[v];
            }
            y[j] = s * inv_diag[j];
        }
    }

    /// `M⁻¹ v` for a column vector: `M_SPAI⁻¹ (M_Jacobi⁻¹ v)` by sparse back
    /// substitution.
    pub fn solve_left(&self, v: &[T], flops: &mut FlopCounter) -> Vec<T> {
        let mut z: Vec<T> = v.iter().zip(&self.jacobi_diag).map(|(&a, &d)| a / d).collect();
        for i in (0..self.n).rev() {
            let mut s = z[i];
            for &(j, k) in &self.row_entries[i] {
                s -= self.spai_values[k] * z[j];
            }
            z[i] = s / self.spai_diag[i];
        }
        flops.div(2 * self.n);
        flops.madd(self.pairs.len());
        z
    }

    /// `U · M` for an upper-triangular `U`; the result is upper triangular.
    pub fn right_multiply(&self, u: &DenseMatrix<T>, flops: &mut FlopCounter) -> DenseMatrix<T> {
        let n = self.n;
        let mut out = DenseMatrix::zeros(n, n);
        for r in 0..n {
            let src = u.row(r);
            let dst = out.row_mut(r);
            // (U · M_Jacobi)[r, k] = U[r, k] · d_k, then times M_SPAI.
            for j in r..n {
                dst[j] = src[j] * self.jacobi_diag[j] * self.spai_diag[j];
            }
            for (&(k, j), &m) in self.pairs.iter().zip(&self.spai_values) {
                if k >= r {
                    dst[j] += src[k] * self.jacobi_diag[k] * m;
                }
            }
        }
        flops.mul(n * (n + 1));
        flops.madd(self.pairs.len() * n);
        out
    }
}

/// Builds `M` from the prior `R22`. `pose_offsets` are the pose block offsets
/// inside the `x2` block.
pub fn build_preconditioner<T: Real>(
    r22: &DenseMatrix<T>,
    pose_offsets: &[usize],
    flops: &mut FlopCounter,
) -> Preconditioner<T> {
    let n = r22.rows();
    let (pairs, diag_idx) = sparsity_set(pose_offsets);
    let mut degenerate = Vec::new();
    let spai_values: Vec<T> = pairs.iter().map(|&(i, j)| r22[(i, j)]).collect();
    let mut spai_diag = vec![T::one(); n];
    for &i in &diag_idx {
        let d = r22[(i, i)];
        if d == T::zero() || !d.is_finite() {
            degenerate.push(i);
        } else {
            spai_diag[i] = d;
        }
    }
    let staged = Preconditioner::from_parts(n, pairs, spai_values, spai_diag, vec![T::one(); n], Vec::new());
    // Column norms of R22 · M_SPAI⁻¹.
    let inv_diag: Vec<T> = staged.spai_diag.iter().map(|&d| T::one() / d).collect();
    flops.div(n);
    let mut sq = vec![T::zero(); n];
    let mut row = vec![T::zero(); n];
    for r in 0..n {
        row.copy_from_slice(r22.row(r));
        staged.spai_solve_row(&mut row, &inv_diag);
        for (s, &v) in sq.iter_mut().zip(&row) {
            *s += v * v;
        }
    }
    flops.madd(n * staged.pairs.len() + n * n);
    flops.mul(n * n);
    let jacobi_diag = sq
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let v = s.sqrt();
            if v > T::zero() && v.is_finite() {
                v
            } else {
                degenerate.push(i);
                T::one()
            }
        })
        .collect();
    flops.sqrt(n);
    degenerate.sort_unstable();
    degenerate.dedup();
    let Preconditioner {
        pairs,
        spai_values,
        spai_diag,
        ..
    } = staged;
    Preconditioner::from_parts(n, pairs, spai_values, spai_diag, jacobi_diag, degenerate)
}

/// `A · M⁻¹ = A · M_SPAI⁻¹ · M_Jacobi⁻¹`, by sparse substitution per row and
/// column scaling, without forming `M⁻¹`.
pub fn apply_preconditioner_inverse<T: Real>(
    m: &Preconditioner<T>,
    a: &DenseMatrix<T>,
    flops: &mut FlopCounter,
) -> DenseMatrix<T> {
    assert_eq!(a.cols(), m.n, "preconditioner dimension mismatch");
    let n = m.n;
    // Fold both diagonals into one reciprocal: column j is divided by
    // spai_diag[j] inside the substitution and by jacobi[j] afterwards.
    let inv_spai: Vec<T> = m.spai_diag.iter().map(|&d| T::one() / d).collect();
    let inv_jac: Vec<T> = m.jacobi_diag.iter().map(|&d| T::one() / d).collect();
    flops.div(2 * n);
    let mut out = a.clone();
    for r in 0..a.rows() {
        let row = out.row_mut(r);
        m.spai_solve_row(row, &inv_spai);
        for (v, &s) in row.iter_mut().zip(&inv_jac) {
            *v *= s;
        }
    }
    flops.madd(a.rows() * m.pairs.len());
    flops.mul(a.rows() * 2 * n);
    out
}
