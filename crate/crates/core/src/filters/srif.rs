use super::{Augmentation, FilterError, UpdateResult};
use crate::linalg::{
    givens_from_pair, householder_qr, householder_qr_stacked, rotate_slices, solve_upper, DenseMatrix,
    FlopCounter, LinalgError, Real,
};
use crate::models::LinearizedMeasurement;

fn check_square_upper<T: Real>(r: &DenseMatrix<T>) -> Result<(), FilterError> {
    if !r.is_square() {
        return Err(FilterError::DimensionMismatch(format!(
            "square-root information factor must be square, got {:?}",
            r.shape()
        )));
    }
    Ok(())
}

/// Rotates rows `i` and `j` of `w` so that `w[(j, col)]` becomes zero, acting
/// on columns `col..`.
fn zero_with_pivot<T: Real>(w: &mut DenseMatrix<T>, i: usize, j: usize, col: usize, flops: &mut FlopCounter) {
    let (g, r) = givens_from_pair(w[(i, col)], w[(j, col)], i, j, flops);
    let (ri, rj) = w.two_rows_mut(i, j);
    rotate_slices(&mut ri[col + 1..], &mut rj[col + 1..], g.c, g.s, flops);
    ri[col] = r;
    rj[col] = T::zero();
}

/// Re-triangularizes a square matrix whose rows are already placed at their
/// target diagonal positions, zeroing sub-diagonal entries column by column
/// with Givens rotations against the pivot row.
fn givens_sweep<T: Real>(w: &mut DenseMatrix<T>, flops: &mut FlopCounter) {
    let n = w.rows();
    for c in 0..n {
        for r in c + 1..n {
            if w[(r, c)] != T::zero() {
                zero_with_pivot(w, c, r, c, flops);
            }
        }
    }
}

/// Marginalizes scalar state `p` (0-based) out of the upper-triangular factor
/// `r` with the O(n·p) Givens scheme: cyclically shift column `p` to the
/// front, chase its entries up with rotations on adjacent rows, then drop the
/// first row and column.
pub fn srif_marginalize<T: Real>(
    r: &DenseMatrix<T>,
    p: usize,
    flops: &mut FlopCounter,
) -> Result<DenseMatrix<T>, FilterError> {
    check_square_upper(r)?;
    let n = r.rows();
    if p >= n {
        return Err(FilterError::Linalg(LinalgError::IndexOutOfRange { index: p, bound: n }));
    }
    let mut w = r.clone();
    if p > 0 {
        for i in 0..=p {
            w.row_mut(i)[..=p].rotate_right(1);
        }
        for j in (1..=p).rev() {
            let (g, rr) = givens_from_pair(w[(j - 1, 0)], w[(j, 0)], j - 1, j, flops);
            let (ra, rb) = w.two_rows_mut(j - 1, j);
            rotate_slices(&mut ra[j..], &mut rb[j..], g.c, g.s, flops);
            ra[0] = rr;
            rb[0] = T::zero();
        }
    }
    let mut out = w.remove_row_col(0, 0);
    out.normalize_row_signs(None);
    Ok(out)
}

/// Same contract as [`srif_marginalize`] through a dense Householder QR of
/// the permuted leading `p + 1` rows, O(n·p²).
pub fn marginalize_oracle_householder<T: Real>(
    r: &DenseMatrix<T>,
    p: usize,
    flops: &mut FlopCounter,
) -> Result<DenseMatrix<T>, FilterError> {
    check_square_upper(r)?;
    let n = r.rows();
    if p >= n {
        return Err(FilterError::Linalg(LinalgError::IndexOutOfRange { index: p, bound: n }));
    }
    let mut w = r.clone();
    for i in 0..=p {
        w.row_mut(i)[..=p].rotate_right(1);
    }
    let k = p + 1;
    let lead = w.submatrix(0, 0, k, k);
    let rest = w.submatrix(0, k, k, n - k);
    let qr = householder_qr(&lead, &rest, flops)?;
    w.set_block(0, 0, &qr.r);
    w.set_block(0, k, &qr.rhs);
    let mut out = w.remove_row_col(0, 0);
    out.normalize_row_signs(None);
    Ok(out)
}

/// Marginalizes several scalar states given by ascending indices, applying
/// the Givens scheme to each in turn.
pub fn srif_marginalize_indices<T: Real>(
    r: &DenseMatrix<T>,
    indices: &[usize],
    flops: &mut FlopCounter,
) -> Result<DenseMatrix<T>, FilterError> {
    check_sorted(indices, r.rows())?;
    let mut out = r.clone();
    for (removed, &i) in indices.iter().enumerate() {
        out = srif_marginalize(&out, i - removed, flops)?;
    }
    Ok(out)
}

pub(crate) fn check_sorted(indices: &[usize], n: usize) -> Result<(), FilterError> {
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FilterError::DimensionMismatch(
            "marginalization indices must be strictly ascending".into(),
        ));
    }
    if let Some(&last) = indices.last() {
        if last >= n {
            return Err(FilterError::Linalg(LinalgError::IndexOutOfRange { index: last, bound: n }));
        }
    }
    Ok(())
}

/// Index map from the pre-augmentation state into the augmented one.
pub(crate) fn old_to_new(n_old: usize, new_positions: &[usize]) -> Vec<usize> {
    let total = n_old + new_positions.len();
    let mut map = Vec::with_capacity(n_old);
    let mut k = 0;
    for pos in 0..total {
        if k < new_positions.len() && new_positions[k] == pos {
            k += 1;
        } else {
            map.push(pos);
        }
    }
    map
}

/// Appends new states tied to the current ones by `δξ = Φ·δx + w` and
/// restores triangularity with Givens sweeps.
///
/// The factor rows `[−AΦ | A]` of the process model are placed at the rows
/// of the new states, so only entries below the diagonal created by `Φ` need
/// rotations.
pub fn srif_augment<T: Real>(
    r: &DenseMatrix<T>,
    aug: &Augmentation,
    flops: &mut FlopCounter,
) -> Result<DenseMatrix<T>, FilterError> {
    check_square_upper(r)?;
    let n_old = r.rows();
    aug.validate(n_old)?;
    let k = aug.dim();
    let total = n_old + k;
    let map = old_to_new(n_old, &aug.new_positions);
    let mut w = DenseMatrix::zeros(total, total);
    for i in 0..n_old {
        let src = r.row(i);
        let dst = w.row_mut(map[i]);
        for j in i..n_old {
            dst[map[j]] = src[j];
        }
    }
    let a: DenseMatrix<T> = aug.sqrt_info.cast();
    let phi: DenseMatrix<T> = aug.phi.cast();
    let a_phi = a.matmul(&phi, flops);
    for (ai, &row_pos) in aug.new_positions.iter().enumerate() {
        let dst = w.row_mut(row_pos);
        for j in 0..n_old {
            dst[map[j]] = -a_phi[(ai, j)];
        }
        for (aj, &col_pos) in aug.new_positions.iter().enumerate() {
            dst[col_pos] = a[(ai, aj)];
        }
    }
    givens_sweep(&mut w, flops);
    w.normalize_row_signs(None);
    Ok(w)
}

/// Applies the linear change of variables `δx' = T·δx` that only rewrites
/// the block at `offset` (`rows` holds those rows of `T`, full width), then
/// re-triangularizes the block rows. Every column of `rows` outside the block
/// must lie to its right.
pub fn srif_reparameterize<T: Real>(
    r: &DenseMatrix<T>,
    offset: usize,
    rows: &DenseMatrix<f64>,
    flops: &mut FlopCounter,
) -> Result<DenseMatrix<T>, FilterError> {
    check_square_upper(r)?;
    let n = r.rows();
    let d = rows.rows();
    let (jf, others) = split_reparam(rows, offset, n)?;
    if others.iter().any(|&(c, _)| c < offset) {
        return Err(FilterError::DimensionMismatch(
            "reparameterization may only couple to states after the block".into(),
        ));
    }
    let jf_inv = jf
        .try_inverse()
        .ok_or_else(|| FilterError::DimensionMismatch("reparameterization block is singular".into()))?;
    let end = offset + d;
    // B = R[:, block] · J_f⁻¹ over the rows that can be nonzero.
    let mut b = DenseMatrix::<T>::zeros(end, d);
    for i in 0..end {
        for c in 0..d {
            let mut s = T::zero();
            for k in 0..d {
                s += r[(i, offset + k)] * T::from_f64(jf_inv[(k, c)]);
            }
            b[(i, c)] = s;
        }
    }
    flops.madd(end * d * d);
    let mut w = r.clone();
    for i in 0..end {
        for c in 0..d {
            w[(i, offset + c)] = b[(i, c)];
        }
    }
    for &(col, ref jcol) in &others {
        for i in 0..end {
            let mut s = T::zero();
            for c in 0..d {
                s += b[(i, c)] * T::from_f64(jcol[c]);
            }
            w[(i, col)] -= s;
        }
        flops.madd(end * d);
    }
    for c in offset..end {
        for rr in c + 1..end {
            if w[(rr, c)] != T::zero() {
                zero_with_pivot(&mut w, c, rr, c, flops);
            }
        }
    }
    w.normalize_row_signs(None);
    Ok(w)
}

/// Splits reparameterization rows into the square block `J_f` and the
/// nonzero outside columns.
pub(crate) fn split_reparam(
    rows: &DenseMatrix<f64>,
    offset: usize,
    n: usize,
) -> Result<(nalgebra::DMatrix<f64>, Vec<(usize, Vec<f64>)>), FilterError> {
    let d = rows.rows();
    if rows.cols() != n || offset + d > n {
        return Err(FilterError::DimensionMismatch(format!(
            "reparameterization rows {:?} at offset {offset} for state of size {n}",
            rows.shape()
        )));
    }
    let jf = nalgebra::DMatrix::from_fn(d, d, |i, j| rows[(i, offset + j)]);
    let others = (0..n)
        .filter(|&c| c < offset || c >= offset + d)
        .filter_map(|c| {
            let col = rows.column(c);
            col.iter().any(|&v| v != 0.0).then_some((c, col))
        })
        .collect();
    Ok((jf, others))
}

/// `δx1 = −R11⁻¹ R12 δx2`.
pub fn recover_dx1<T: Real>(
    r: &DenseMatrix<T>,
    n1: usize,
    dx2: &[T],
    flops: &mut FlopCounter,
) -> Result<Vec<T>, FilterError> {
    let n = r.rows();
    let mut rhs = vec![T::zero(); n1];
    for i in 0..n1 {
        let row = &r.row(i)[n1..n];
        let mut s = T::zero();
        for (a, &x) in row.iter().zip(dx2) {
            s += *a * x;
        }
        rhs[i] = -s;
    }
    flops.madd(n1 * (n - n1));
    let r11 = r.submatrix(0, 0, n1, n1);
    Ok(solve_upper(&r11, &rhs, flops)?)
}

pub(crate) fn check_measurement<T: Real>(
    r: &DenseMatrix<T>,
    meas: &LinearizedMeasurement<T>,
) -> Result<(), FilterError> {
    check_square_upper(r)?;
    if meas.n() != r.rows() || meas.h2.rows() != meas.rows() {
        return Err(FilterError::DimensionMismatch(format!(
            "measurement over {} states ({} rows) vs factor {:?}",
            meas.n(),
            meas.rows(),
            r.shape()
        )));
    }
    Ok(())
}

pub(crate) fn assemble<T: Real>(
    r: &DenseMatrix<T>,
    n1: usize,
    r22_post: &DenseMatrix<T>,
    dx2: Vec<T>,
    flops: &mut FlopCounter,
) -> Result<UpdateResult<T>, FilterError> {
    let dx1 = recover_dx1(r, n1, &dx2, flops)?;
    let mut r_post = r.clone();
    r_post.set_block(n1, n1, r22_post);
    let mut delta_x = dx1;
    delta_x.extend(dx2);
    if delta_x.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::NonFinite("state correction".into()));
    }
    Ok(UpdateResult { delta_x, r_post })
}

/// Partitioned QR update: QR of `[R22; H2]` with right-hand side `[0; r]`,
/// `δx2 = R22⊕⁻¹ r2⊕`, `δx1 = −R11⁻¹ R12 δx2`; `R11` and `R12` are kept.
pub fn srif_update_partitioned<T: Real>(
    r: &DenseMatrix<T>,
    meas: &LinearizedMeasurement<T>,
    flops: &mut FlopCounter,
) -> Result<UpdateResult<T>, FilterError> {
    check_measurement(r, meas)?;
    let n1 = meas.n1;
    let n2 = r.rows() - n1;
    if meas.rows() == 0 {
        return Ok(UpdateResult {
            delta_x: vec![T::zero(); r.rows()],
            r_post: r.clone(),
        });
    }
    let r22 = r.submatrix(n1, n1, n2, n2);
    let qr = householder_qr_stacked(
        &r22,
        &meas.h2,
        &DenseMatrix::zeros(n2, 1),
        &DenseMatrix::column_vector(&meas.residual),
        flops,
    )?;
    let r2 = qr.rhs.column(0)[..n2].to_vec();
    let dx2 = solve_upper(&qr.r, &r2, flops)?;
    assemble(r, n1, &qr.r, dx2, flops)
}
