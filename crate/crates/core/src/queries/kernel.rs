//! Smoothing kernels for conditioning on continuous values.

use crate::error::{Error, Result};
use crate::soi::KernelKind;

/// Weight of a residual vector `diff` at bandwidth `h`.
///
/// Gaussian: `exp(-|diff|^2 / (2 h^2))`. Epsilon: 1 when `max |diff_i| <= h`
/// (boundary included), else 0. An empty `diff` has weight 1.
pub fn kernel_weight(kind: KernelKind, diff: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Param(format!(
            "kernel bandwidth must be positive, got {h}"
        )));
    }
    Ok(match kind {
        KernelKind::Gaussian => {
            let sq: f64 = diff.iter().map(|d| d * d).sum();
            (-sq / (2.0 * h * h)).exp()
        }
        KernelKind::Epsilon => {
            if diff.iter().all(|d| d.abs() <= h) {
                1.0
            } else {
                0.0
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(
            kernel_weight(KernelKind::Gaussian, &[0.0, 0.0], 0.1).unwrap(),
            1.0
        );
        assert_eq!(
            kernel_weight(KernelKind::Epsilon, &[0.1, -0.05], 0.1).unwrap(),
            1.0
        );
        assert_eq!(
            kernel_weight(KernelKind::Epsilon, &[0.1000001], 0.1).unwrap(),
            0.0
        );
        let w = kernel_weight(KernelKind::Gaussian, &[0.3], 0.3).unwrap();
        assert!((w - (-0.5f64).exp()).abs() < 1e-15);
        assert!((w - 0.6065).abs() < 1e-4);
        assert!(matches!(
            kernel_weight(KernelKind::Gaussian, &[1.0], 0.0),
            Err(Error::Param(_))
        ));
    }
}
