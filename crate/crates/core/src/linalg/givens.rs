use std::ops::Range;

use super::{DenseMatrix, FlopCounter, LinalgError, Real};

/// Plane rotation acting on rows `i` and `j`.
///
/// Applied as `row_i ← c·row_i + s·row_j`, `row_j ← −s·row_i + c·row_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GivensRotation<T> {
    pub c: T,
    pub s: T,
    pub i: usize,
    pub j: usize,
}

impl<T: Real> GivensRotation<T> {
    pub fn identity(i: usize, j: usize) -> Self {
        Self {
            c: T::one(),
            s: T::zero(),
            i,
            j,
        }
    }

    /// Rotates the pair `(a, b)` where `a` sits in row `i` and `b` in row `j`.
    #[inline]
    pub fn rotate(&self, a: T, b: T) -> (T, T) {
        (self.c * a + self.s * b, self.c * b - self.s * a)
    }
}

/// Rotation that maps `(a, b)` to `(r, 0)` with `r = √(a² + b²) ≥ 0`.
///
/// `a = b = 0` yields the identity rotation and `r = 0`.
pub fn givens_from_pair<T: Real>(
    a: T,
    b: T,
    i: usize,
    j: usize,
    flops: &mut FlopCounter,
) -> (GivensRotation<T>, T) {
    if b == T::zero() {
        if a >= T::zero() {
            return (GivensRotation::identity(i, j), a);
        }
        // Rotation by π flips the sign of both rows.
        return (
            GivensRotation {
                c: -T::one(),
                s: T::zero(),
                i,
                j,
            },
            -a,
        );
    }
    let r = a.hypot(b);
    flops.mul(2);
    flops.add(1);
    flops.sqrt(1);
    flops.div(2);
    (
        GivensRotation {
            c: a / r,
            s: b / r,
            i,
            j,
        },
        r,
    )
}

/// Applies `g` to rows `g.i` and `g.j` of `m`, restricted to `cols`.
pub fn apply_givens_rows<T: Real>(
    m: &mut DenseMatrix<T>,
    g: &GivensRotation<T>,
    cols: Range<usize>,
    flops: &mut FlopCounter,
) -> Result<(), LinalgError> {
    if g.i >= m.rows() || g.j >= m.rows() || g.i == g.j {
        return Err(LinalgError::IndexOutOfRange {
            index: g.i.max(g.j),
            bound: m.rows(),
        });
    }
    if cols.start > cols.end || cols.end > m.cols() {
        return Err(LinalgError::IndexOutOfRange {
            index: cols.end,
            bound: m.cols(),
        });
    }
    let (ri, rj) = m.two_rows_mut(g.i, g.j);
    rotate_slices(&mut ri[cols.clone()], &mut rj[cols], g.c, g.s, flops);
    Ok(())
}

/// Rotates two equally long slices in place.
#[inline]
pub(crate) fn rotate_slices<T: Real>(x: &mut [T], y: &mut [T], c: T, s: T, flops: &mut FlopCounter) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let xa = *a;
        let yb = *b;
        *a = c * xa + s * yb;
        *b = c * yb - s * xa;
    }
    flops.mul(4 * x.len());
    flops.add(2 * x.len());
}
