use super::{DenseMatrix, FlopCounter, LinalgError, Real};

fn check_square(u: &DenseMatrix<impl Real>, len: usize) -> Result<(), LinalgError> {
    if !u.is_square() || u.rows() != len {
        return Err(LinalgError::DimensionMismatch(format!(
            "triangular solve: matrix {:?}, rhs length {len}",
            u.shape()
        )));
    }
    Ok(())
}

/// Solves `U x = b` by back substitution.
pub fn solve_upper<T: Real>(
    u: &DenseMatrix<T>,
    b: &[T],
    flops: &mut FlopCounter,
) -> Result<Vec<T>, LinalgError> {
    check_square(u, b.len())?;
    let n = b.len();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let row = u.row(i);
        let mut s = x[i];
        for j in i + 1..n {
            s -= row[j] * x[j];
        }
        let d = row[i];
        if d == T::zero() {
            return Err(LinalgError::SingularTriangular { index: i });
        }
        x[i] = s / d;
    }
    flops.madd(n * n.saturating_sub(1) / 2);
    flops.div(n);
    Ok(x)
}

/// Solves `Uᵀ x = b` by forward substitution.
pub fn solve_upper_transposed<T: Real>(
    u: &DenseMatrix<T>,
    b: &[T],
    flops: &mut FlopCounter,
) -> Result<Vec<T>, LinalgError> {
    check_square(u, b.len())?;
    let n = b.len();
    let mut x = b.to_vec();
    for i in 0..n {
        let d = u[(i, i)];
        if d == T::zero() {
            return Err(LinalgError::SingularTriangular { index: i });
        }
        let xi = x[i] / d;
        x[i] = xi;
        let row = u.row(i);
        for j in i + 1..n {
            x[j] -= row[j] * xi;
        }
    }
    flops.madd(n * n.saturating_sub(1) / 2);
    flops.div(n);
    Ok(x)
}

/// Inverse of an upper-triangular matrix (itself upper triangular).
pub fn invert_upper<T: Real>(
    u: &DenseMatrix<T>,
    flops: &mut FlopCounter,
) -> Result<DenseMatrix<T>, LinalgError> {
    let n = u.rows();
    check_square(u, n)?;
    let mut inv = DenseMatrix::zeros(n, n);
    // Column j of U⁻¹ solves U x = e_j and has support 0..=j.
    for j in 0..n {
        for i in (0..=j).rev() {
            let row = u.row(i);
            let mut s = if i == j { T::one() } else { T::zero() };
            for k in i + 1..=j {
                s -= row[k] * inv[(k, j)];
            }
            let d = row[i];
            if d == T::zero() {
                return Err(LinalgError::SingularTriangular { index: i });
            }
            inv[(i, j)] = s / d;
        }
    }
    flops.madd(n * n * n / 6);
    flops.div(n * (n + 1) / 2);
    Ok(inv)
}
