use super::srif::{check_sorted, old_to_new, split_reparam};
use super::{Augmentation, FilterError};
use crate::linalg::{cholesky_upper, householder_qr, solve_upper, solve_upper_transposed, DenseMatrix, FlopCounter, Real};
use crate::models::LinearizedMeasurement;

fn symmetrize<T: Real>(p: &mut DenseMatrix<T>) {
    let n = p.rows();
    let half = T::from_f64(0.5);
    for i in 0..n {
        for j in i + 1..n {
            let v = (p[(i, j)] + p[(j, i)]) * half;
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

/// `P_ξξ = ΦPΦᵀ + Q`, `P_ξx = ΦP`, with the new states placed at
/// `aug.new_positions`.
pub fn kf_augment<T: Real>(
    p: &DenseMatrix<T>,
    aug: &Augmentation,
    flops: &mut FlopCounter,
) -> Result<DenseMatrix<T>, FilterError> {
    let n_old = p.rows();
    aug.validate(n_old)?;
    let k = aug.dim();
    let map = old_to_new(n_old, &aug.new_positions);
    let phi: DenseMatrix<T> = aug.phi.cast();
    let phi_p = phi.matmul(p, flops);
    let mut pxx = phi_p.matmul_transposed(&phi, flops);
    for i in 0..k {
        for j in 0..k {
            pxx[(i, j)] += T::from_f64(aug.noise_cov[(i, j)]);
        }
    }
    let mut out = DenseMatrix::zeros(n_old + k, n_old + k);
    for i in 0..n_old {
        for j in 0..n_old {
            out[(map[i], map[j])] = p[(i, j)];
        }
    }
    for (a, &pa) in aug.new_positions.iter().enumerate() {
        for j in 0..n_old {
            out[(pa, map[j])] = phi_p[(a, j)];
            out[(map[j], pa)] = phi_p[(a, j)];
        }
        for (b, &pb) in aug.new_positions.iter().enumerate() {
            out[(pa, pb)] = pxx[(a, b)];
        }
    }
    symmetrize(&mut out);
    Ok(out)
}

/// Drops the listed (ascending) states from `P`.
pub fn kf_marginalize_indices<T: Real>(p: &DenseMatrix<T>, indices: &[usize]) -> Result<DenseMatrix<T>, FilterError> {
    let n = p.rows();
    check_sorted(indices, n)?;
    let keep: Vec<usize> = (0..n).filter(|i| indices.binary_search(i).is_err()).collect();
    Ok(p.select(&keep, &keep))
}

/// `P' = J P Jᵀ` for a change of variables that rewrites the block starting
/// at `offset` (`rows` holds those rows of `J`).
pub fn kf_reparameterize<T: Real>(
    p: &DenseMatrix<T>,
    offset: usize,
    rows: &DenseMatrix<f64>,
    flops: &mut FlopCounter,
) -> Result<DenseMatrix<T>, FilterError> {
    let n = p.rows();
    let d = rows.rows();
    split_reparam(rows, offset, n)?;
    let j: DenseMatrix<T> = rows.cast();
    let jp = j.matmul(p, flops);
    let jpj = jp.matmul_transposed(&j, flops);
    let mut out = p.clone();
    for a in 0..d {
        for c in 0..n {
            out[(offset + a, c)] = jp[(a, c)];
            out[(c, offset + a)] = jp[(a, c)];
        }
    }
    for a in 0..d {
        for b in 0..d {
            out[(offset + a, offset + b)] = jpj[(a, b)];
        }
    }
    symmetrize(&mut out);
    Ok(out)
}

/// EKF update with whitened (unit-noise) rows and the Joseph-form covariance.
///
/// When there are more rows than `x2` states the measurement is first
/// compressed by a QR of `[H2 | r]`.
pub fn kf_update<T: Real>(
    p: &DenseMatrix<T>,
    meas: &LinearizedMeasurement<T>,
    flops: &mut FlopCounter,
) -> Result<(Vec<T>, DenseMatrix<T>), FilterError> {
    let n = p.rows();
    if meas.n() != n || meas.h2.rows() != meas.rows() {
        return Err(FilterError::DimensionMismatch(format!(
            "measurement over {} states vs covariance {:?}",
            meas.n(),
            p.shape()
        )));
    }
    if meas.rows() == 0 {
        return Ok((vec![T::zero(); n], p.clone()));
    }
    let n1 = meas.n1;
    let n2 = n - n1;
    let (h2, r) = if meas.rows() > n2 {
        let qr = householder_qr(&meas.h2, &DenseMatrix::column_vector(&meas.residual), flops)?;
        (qr.r, qr.rhs.column(0)[..n2].to_vec())
    } else {
        (meas.h2.clone(), meas.residual.clone())
    };
    let m = h2.rows();
    // P Hᵀ only touches the x2 columns of P.
    let p_x2 = p.submatrix(0, n1, n, n2);
    let pht = p_x2.matmul_transposed(&h2, flops);
    let mut s = h2.matmul(&pht.submatrix(n1, 0, n2, m), flops);
    for i in 0..m {
        s[(i, i)] += T::one();
    }
    symmetrize(&mut s);
    let u = cholesky_upper(&s, flops).map_err(|_| FilterError::InnovationNotPositiveDefinite)?;
    // K = P Hᵀ S⁻¹, one row at a time: S Kᵢᵀ = (P Hᵀ)ᵢᵀ.
    let mut k = DenseMatrix::zeros(n, m);
    for i in 0..n {
        let y = solve_upper_transposed(&u, pht.row(i), flops)?;
        let x = solve_upper(&u, &y, flops)?;
        k.row_mut(i).copy_from_slice(&x);
    }
    let dx = k.mul_vec(&r, flops);
    // A = I − K H, with H = [0 | H2].
    let kh2 = k.matmul(&h2, flops);
    let mut a = DenseMatrix::identity(n);
    for i in 0..n {
        for j in 0..n2 {
            a[(i, n1 + j)] -= kh2[(i, j)];
        }
    }
    let ap = a.matmul(p, flops);
    let mut p_post = ap.matmul_transposed(&a, flops);
    let kkt = k.matmul_transposed(&k, flops);
    p_post = p_post.add(&kkt);
    symmetrize(&mut p_post);
    if dx.iter().any(|v| !v.is_finite()) || !p_post.is_finite() {
        return Err(FilterError::NonFinite("covariance update".into()));
    }
    Ok((dx, p_post))
}
