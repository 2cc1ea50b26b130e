use super::{DenseMatrix, FlopCounter, LinalgError, Real};

/// Result of a QR factorization with the orthogonal factor applied to a
/// right-hand side: `A = Q [R; 0]` and `rhs ← Qᵀ rhs`.
#[derive(Debug, Clone)]
pub struct QrOutput<T> {
    /// `n × n` upper-triangular factor with nonnegative diagonal.
    pub r: DenseMatrix<T>,
    /// `Qᵀ · rhs`, all `m` rows. The top `n` rows pair with `r`; the rest is
    /// the residual part.
    pub rhs: DenseMatrix<T>,
}

/// Householder QR of `a` (`m × n`, `m ≥ n`) without forming `Q`.
///
/// Reflectors are applied to `rhs` in the same pass. Rank deficiency is not an
/// error: it shows up as zero diagonal entries of `r`.
pub fn householder_qr<T: Real>(
    a: &DenseMatrix<T>,
    rhs: &DenseMatrix<T>,
    flops: &mut FlopCounter,
) -> Result<QrOutput<T>, LinalgError> {
    let (m, n) = a.shape();
    if m < n {
        return Err(LinalgError::DimensionMismatch(format!(
            "householder_qr needs rows >= cols, got {m}x{n}"
        )));
    }
    if rhs.rows() != m {
        return Err(LinalgError::DimensionMismatch(format!(
            "rhs has {} rows, matrix has {m}",
            rhs.rows()
        )));
    }
    let mut w = a.clone();
    let mut b = rhs.clone();
    let rows: Vec<usize> = (0..m).collect();
    for k in 0..n {
        reflect_column(&mut w, &mut b, k, &rows[k..], flops);
    }
    let mut r = w.submatrix(0, 0, n, n);
    for i in 0..n {
        for j in 0..i {
            r[(i, j)] = T::zero();
        }
    }
    r.normalize_row_signs(Some(&mut b));
    Ok(QrOutput { r, rhs: b })
}

/// QR of the stacked system `[upper; lower]` where `upper` is `n × n` upper
/// triangular, exploiting that structure: the reflector for column `k` only
/// touches row `k` of `upper` and the rows of `lower`.
///
/// `rhs_upper` / `rhs_lower` are the matching right-hand-side blocks. The
/// returned `rhs` stacks the transformed blocks (`n + m` rows).
pub fn householder_qr_stacked<T: Real>(
    upper: &DenseMatrix<T>,
    lower: &DenseMatrix<T>,
    rhs_upper: &DenseMatrix<T>,
    rhs_lower: &DenseMatrix<T>,
    flops: &mut FlopCounter,
) -> Result<QrOutput<T>, LinalgError> {
    let n = upper.rows();
    if !upper.is_square() || lower.cols() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "stacked QR needs square upper block and conformal lower block, got {:?} over {:?}",
            upper.shape(),
            lower.shape()
        )));
    }
    if rhs_upper.rows() != n || rhs_lower.rows() != lower.rows() || rhs_upper.cols() != rhs_lower.cols()
    {
        return Err(LinalgError::DimensionMismatch(
            "stacked QR right-hand side blocks are not conformal".into(),
        ));
    }
    let m = lower.rows();
    let mut w = upper.vstack(lower);
    let mut b = rhs_upper.vstack(rhs_lower);
    let mut active: Vec<usize> = Vec::with_capacity(m + 1);
    for k in 0..n {
        active.clear();
        active.push(k);
        active.extend(n..n + m);
        reflect_column(&mut w, &mut b, k, &active, flops);
    }
    let mut r = w.submatrix(0, 0, n, n);
    for i in 0..n {
        for j in 0..i {
            r[(i, j)] = T::zero();
        }
    }
    r.normalize_row_signs(Some(&mut b));
    Ok(QrOutput { r, rhs: b })
}

/// Applies the Householder reflector that zeroes column `k` over `rows`
/// (first entry of `rows` is the pivot row) to columns `k..` of `w` and to all
/// columns of `b`.
fn reflect_column<T: Real>(
    w: &mut DenseMatrix<T>,
    b: &mut DenseMatrix<T>,
    k: usize,
    rows: &[usize],
    flops: &mut FlopCounter,
) {
    let n = w.cols();
    let nb = b.cols();
    let len = rows.len();
    let mut v: Vec<T> = rows.iter().map(|&i| w[(i, k)]).collect();
    let mut sq = T::zero();
    for &x in &v[1..] {
        sq += x * x;
    }
    flops.madd(len - 1);
    if sq == T::zero() {
        // Column is already reduced below the pivot.
        return;
    }
    let x0 = v[0];
    let alpha = (x0 * x0 + sq).sqrt();
    flops.madd(1);
    flops.sqrt(1);
    let diag = if x0 >= T::zero() { -alpha } else { alpha };
    v[0] = x0 - diag;
    // vᵀv = (x0 − diag)² + sq
    let vtv = v[0] * v[0] + sq;
    let beta = T::from_f64(2.0) / vtv;
    flops.add(2);
    flops.mul(1);
    flops.div(1);

    let trailing = n - k - 1;
    if trailing > 0 {
        let mut acc = vec![T::zero(); trailing];
        for (&i, &vi) in rows.iter().zip(&v) {
            if vi == T::zero() {
                continue;
            }
            for (a, &x) in acc.iter_mut().zip(&w.row(i)[k + 1..]) {
                *a += vi * x;
            }
        }
        for a in acc.iter_mut() {
            *a *= beta;
        }
        for (&i, &vi) in rows.iter().zip(&v) {
            if vi == T::zero() {
                continue;
            }
            for (x, &a) in w.row_mut(i)[k + 1..].iter_mut().zip(&acc) {
                *x -= vi * a;
            }
        }
        flops.madd(2 * len * trailing);
        flops.mul(trailing);
    }
    if nb > 0 {
        let mut acc = vec![T::zero(); nb];
        for (&i, &vi) in rows.iter().zip(&v) {
            for (a, &x) in acc.iter_mut().zip(b.row(i)) {
                *a += vi * x;
            }
        }
        for a in acc.iter_mut() {
            *a *= beta;
        }
        for (&i, &vi) in rows.iter().zip(&v) {
            for (x, &a) in b.row_mut(i).iter_mut().zip(&acc) {
                *x -= vi * a;
            }
        }
        flops.madd(2 * len * nb);
        flops.mul(nb);
    }
    w[(rows[0], k)] = diag;
    for &i in &rows[1..] {
        w[(i, k)] = T::zero();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_input() {
        let mut f = FlopCounter::new();
        let a = DenseMatrix::<f64>::identity(4);
        let rhs = DenseMatrix::column_vector(&[1.0, -2.0, 3.0, 0.5]);
        let out = householder_qr(&a, &rhs, &mut f).unwrap();
        assert_eq!(out.r, DenseMatrix::identity(4));
        for i in 0..4 {
            assert!((out.rhs[(i, 0)].abs() - rhs[(i, 0)].abs()).abs() < 1e-15);
        }
    }

    #[test]
    fn two_vector() {
        let mut f = FlopCounter::new();
        let a = DenseMatrix::from_row_slice(2, 1, &[3.0_f64, 4.0]);
        let rhs = DenseMatrix::column_vector(&[1.0, 0.0]);
        let out = householder_qr(&a, &rhs, &mut f).unwrap();
        assert!((out.r[(0, 0)] - 5.0).abs() < 1e-14);
        let nrm = (out.rhs[(0, 0)].powi(2) + out.rhs[(1, 0)].powi(2)).sqrt();
        assert!((nrm - 1.0).abs() < 1e-14);
        // Qᵀ rhs top entry = (3·1 + 4·0)/5.
        assert!((out.rhs[(0, 0)] - 0.6).abs() < 1e-14);
    }

    #[test]
    fn wide_input_is_rejected() {
        let mut f = FlopCounter::new();
        let a = DenseMatrix::<f64>::zeros(2, 3);
        let rhs = DenseMatrix::<f64>::zeros(2, 1);
        assert!(householder_qr(&a, &rhs, &mut f).is_err());
    }

    #[test]
    fn zero_column_gives_zero_diagonal() {
        let mut f = FlopCounter::new();
        let a = DenseMatrix::from_row_slice(3, 2, &[0.0_f64, 1.0, 0.0, 2.0, 0.0, 3.0]);
        let out = householder_qr(&a, &DenseMatrix::zeros(3, 0), &mut f).unwrap();
        assert_eq!(out.r[(0, 0)], 0.0);
    }
}
