use super::{DenseMatrix, FlopCounter, Real};

/// Adds the upper triangle of `aᵀa` into `acc`.
///
/// Only the `n(n+1)/2` upper entries are computed, so a dense `m × n` input
/// costs `m·n(n+1)/2` multiply-adds. When `a_is_upper` is set the input is
/// treated as upper triangular and row `k` only contributes to entries
/// `(i, j)` with `i, j ≥ k`.
pub fn gram_accumulate_upper<T: Real>(
    acc: &mut DenseMatrix<T>,
    a: &DenseMatrix<T>,
    a_is_upper: bool,
    flops: &mut FlopCounter,
) {
    let n = a.cols();
    assert_eq!(acc.shape(), (n, n), "gram accumulator shape mismatch");
    let mut count = 0usize;
    for k in 0..a.rows() {
        let row = a.row(k);
        let start = if a_is_upper { k.min(n) } else { 0 };
        for i in start..n {
            let ai = row[i];
            if ai == T::zero() {
                continue;
            }
            let out = &mut acc.row_mut(i)[i..];
            for (o, &aj) in out.iter_mut().zip(&row[i..]) {
                *o += ai * aj;
            }
        }
        let len = n - start;
        count += len * (len + 1) / 2;
    }
    flops.madd(count);
}

/// Symmetric `aᵀa`, upper triangle computed and mirrored.
pub fn gram_upper<T: Real>(a: &DenseMatrix<T>, flops: &mut FlopCounter) -> DenseMatrix<T> {
    let mut g = DenseMatrix::zeros(a.cols(), a.cols());
    gram_accumulate_upper(&mut g, a, false, flops);
    g.mirror_upper();
    g
}
