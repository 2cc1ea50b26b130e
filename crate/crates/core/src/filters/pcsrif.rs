use super::precond::{apply_preconditioner_inverse, build_preconditioner, Preconditioner};
use super::srif::{assemble, check_measurement};
use super::{FilterError, UpdateResult};
use crate::linalg::{
    cholesky_upper, gram_accumulate_upper, solve_upper, solve_upper_transposed, DenseMatrix, FlopCounter,
    Real,
};
use crate::models::LinearizedMeasurement;

/// FLOPs of one preconditioned update split by stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PcSrifFlops {
    pub preconditioner: FlopCounter,
    pub normal_equation: FlopCounter,
    pub cholesky: FlopCounter,
    pub solve: FlopCounter,
}

impl PcSrifFlops {
    pub fn total(&self) -> FlopCounter {
        self.preconditioner + self.normal_equation + self.cholesky + self.solve
    }
}

/// Preconditioned Cholesky update.
///
/// `R22p = R22 M⁻¹` and `H2p = H2 M⁻¹` are formed first, then
/// `R22pᵀR22p + H2pᵀH2p` (upper half only) is factored as `UᵀU`. The posterior
/// block is `R22⊕ = U·M` and `δx2 = M⁻¹ U⁻¹ U⁻ᵀ H2pᵀ r`. `M` comes from the
/// prior `R22`.
pub fn pcsrif_update<T: Real>(
    r: &DenseMatrix<T>,
    meas: &LinearizedMeasurement<T>,
    pose_offsets_x2: &[usize],
    flops: &mut FlopCounter,
) -> Result<(UpdateResult<T>, Preconditioner<T>), FilterError> {
    let mut parts = PcSrifFlops::default();
    let out = pcsrif_update_detailed(r, meas, pose_offsets_x2, &mut parts)?;
    *flops += parts.total();
    Ok(out)
}

/// [`pcsrif_update`] with the FLOP count split by stage.
pub fn pcsrif_update_detailed<T: Real>(
    r: &DenseMatrix<T>,
    meas: &LinearizedMeasurement<T>,
    pose_offsets_x2: &[usize],
    parts: &mut PcSrifFlops,
) -> Result<(UpdateResult<T>, Preconditioner<T>), FilterError> {
    check_measurement(r, meas)?;
    let n1 = meas.n1;
    let n2 = r.rows() - n1;
    let r22 = r.submatrix(n1, n1, n2, n2);
    let m = build_preconditioner(&r22, pose_offsets_x2, &mut parts.preconditioner);
    if meas.rows() == 0 {
        return Ok((
            UpdateResult {
                delta_x: vec![T::zero(); r.rows()],
                r_post: r.clone(),
            },
            m,
        ));
    }
    let r22p = apply_preconditioner_inverse(&m, &r22, &mut parts.preconditioner);
    let h2p = apply_preconditioner_inverse(&m, &meas.h2, &mut parts.preconditioner);

    let mut normal = DenseMatrix::zeros(n2, n2);
    gram_accumulate_upper(&mut normal, &r22p, true, &mut parts.normal_equation);
    gram_accumulate_upper(&mut normal, &h2p, false, &mut parts.normal_equation);
    let b = h2p.tr_mul_vec(&meas.residual, &mut parts.normal_equation);

    let u = cholesky_upper(&normal, &mut parts.cholesky)?;

    let y = solve_upper_transposed(&u, &b, &mut parts.solve)?;
    let z = solve_upper(&u, &y, &mut parts.solve)?;
    let dx2 = m.solve_left(&z, &mut parts.solve);
    let r22_post = m.right_multiply(&u, &mut parts.solve);
    let res = assemble(r, n1, &r22_post, dx2, &mut parts.solve)?;
    Ok((res, m))
}

/// Unpreconditioned information-form update: Cholesky of
/// `R22ᵀR22 + H2ᵀH2` at the working precision.
pub fn if_update_oracle<T: Real>(
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
    let mut normal = DenseMatrix::zeros(n2, n2);
    gram_accumulate_upper(&mut normal, &r22, true, flops);
    gram_accumulate_upper(&mut normal, &meas.h2, false, flops);
    let b = meas.h2.tr_mul_vec(&meas.residual, flops);
    let u = cholesky_upper(&normal, flops)?;
    let y = solve_upper_transposed(&u, &b, flops)?;
    let dx2 = solve_upper(&u, &y, flops)?;
    assemble(r, n1, &u, dx2, flops)
}
