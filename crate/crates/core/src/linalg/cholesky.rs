use super::{DenseMatrix, FlopCounter, LinalgError, Real};

/// Upper Cholesky factor `U` with `UᵀU = s`, reading only the upper triangle
/// of `s`.
///
/// Fails with [`LinalgError::NotPositiveDefinite`] at the first pivot that is
/// not strictly positive (or not finite); the reported pivot is 1-based.
pub fn cholesky_upper<T: Real>(
    s: &DenseMatrix<T>,
    flops: &mut FlopCounter,
) -> Result<DenseMatrix<T>, LinalgError> {
    if !s.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {:?}",
            s.shape()
        )));
    }
    let n = s.rows();
    let mut u = DenseMatrix::zeros(n, n);
    for i in 0..n {
        u.row_mut(i)[i..].copy_from_slice(&s.row(i)[i..]);
    }
    for i in 0..n {
        let d = u[(i, i)];
        if !(d > T::zero()) || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite {
                pivot: i + 1,
                value: d.to_f64(),
            });
        }
        let piv = d.sqrt();
        let inv = T::one() / piv;
        flops.sqrt(1);
        flops.div(1);
        {
            let row = u.row_mut(i);
            row[i] = piv;
            for x in &mut row[i + 1..] {
                *x *= inv;
            }
        }
        flops.mul(n - i - 1);
        // Trailing rank-1 update of the upper triangle.
        for k in i + 1..n {
            let (ri, rk) = u.two_rows_mut(i, k);
            let f = ri[k];
            if f == T::zero() {
                continue;
            }
            for (x, &y) in rk[k..].iter_mut().zip(&ri[k..]) {
                *x -= f * y;
            }
        }
        let t = n - i - 1;
        flops.madd(t * (t + 1) / 2);
    }
    Ok(u)
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn spd_inverse<T: Real>(
    s: &DenseMatrix<T>,
    flops: &mut FlopCounter,
) -> Result<DenseMatrix<T>, LinalgError> {
    let u = cholesky_upper(s, flops)?;
    let uinv = super::invert_upper(&u, flops)?;
    // s⁻¹ = U⁻¹ U⁻ᵀ
    let mut out = uinv.matmul_transposed(&uinv, flops);
    out.mirror_upper();
    Ok(out)
}
