use super::{DenseMatrix, Real};

/// Spectral conditioning of a matrix.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SpectralCondition {
    pub kappa: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
}

impl SpectralCondition {
    pub fn kappa_squared(&self) -> f64 {
        self.kappa * self.kappa
    }
}

/// `κ(A) = σ_max / σ_min` from a full SVD at binary64, whatever the input
/// precision. A zero smallest singular value reports `κ = +∞`.
pub fn cond_spectral<T: Real>(a: &DenseMatrix<T>) -> SpectralCondition {
    let m = a.to_nalgebra();
    let sv = m.singular_values();
    let sigma_max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let sigma_min = if a.rows() < a.cols() {
        // Wide input: the missing singular values are zero.
        0.0
    } else {
        sv.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let kappa = if sigma_min == 0.0 {
        f64::INFINITY
    } else {
        sigma_max / sigma_min
    };
    SpectralCondition {
        kappa,
        sigma_max,
        sigma_min,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_perfectly_conditioned() {
        let c = cond_spectral(&DenseMatrix::<f64>::identity(6));
        assert!((c.kappa - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_ratio() {
        let c = cond_spectral(&DenseMatrix::from_diagonal(&[10.0_f32, 1.0]));
        assert!((c.kappa - 10.0).abs() < 1e-12);
        assert!((c.sigma_max - 10.0).abs() < 1e-12);
        assert!((c.sigma_min - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_is_infinite() {
        let c = cond_spectral(&DenseMatrix::from_row_slice(2, 2, &[1.0_f64, 2.0, 2.0, 4.0]));
        assert!(c.kappa > 1e15);
        let z = cond_spectral(&DenseMatrix::from_diagonal(&[1.0_f64, 0.0]));
        assert!(z.kappa.is_infinite());
    }
}
