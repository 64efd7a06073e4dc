//! Weighted mean-square loss: each residual is scaled by a per-sample
//! weight before squaring, then averaged.

use super::Scalar;
use crate::error::{Error, Result};

fn check_lengths<T: Scalar>(pred: &[T], target: &[T], weights: &[T]) -> Result<usize> {
    let n = pred.len();
    if n == 0 {
        return Err(Error::validation("weighted MSE needs at least one sample"));
    }
    if target.len() != n {
        return Err(Error::ShapeMismatch {
            what: "wmse target",
            expected: n,
            actual: target.len(),
        });
    }
    if weights.len() != n {
        return Err(Error::ShapeMismatch {
            what: "wmse weights",
            expected: n,
            actual: weights.len(),
        });
    }
    Ok(n)
}

/// `(1/N) * sum_i ((pred_i - target_i) * w_i)^2`
pub fn wmse_loss<T: Scalar>(pred: &[T], target: &[T], weights: &[T]) -> Result<T> {
    let n = check_lengths(pred, target, weights)?;
    let mut sum = T::ZERO;
    for i in 0..n {
        let r = (pred[i] - target[i]) * weights[i];
        sum += r * r;
    }
    Ok(sum / T::from_f64(n as f64))
}

/// One entry of the WMSE gradient: `(2/N) * w^2 * (pred - target)`.
#[inline]
pub(crate) fn wmse_gradient_entry<T: Scalar>(pred: T, target: T, weight: T, n: usize) -> T {
    T::from_f64(2.0 / n as f64) * weight * weight * (pred - target)
}

/// Analytic derivative of [`wmse_loss`] w.r.t. each prediction:
/// `(2/N) * w_i^2 * (pred_i - target_i)`.
pub fn wmse_gradient<T: Scalar>(pred: &[T], target: &[T], weights: &[T]) -> Result<Vec<T>> {
    let n = check_lengths(pred, target, weights)?;
    Ok((0..n)
        .map(|i| wmse_gradient_entry(pred[i], target[i], weights[i], n))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_residual_gives_zero_loss() {
        let p = [1.0_f64, -2.5, 3.0];
        let w = [0.5, 7.0, 2.0];
        assert_eq!(wmse_loss(&p, &p, &w).unwrap(), 0.0);
    }

    #[test]
    fn matches_direct_arithmetic() {
        // ((1-0)*1)^2 + ((2-0)*2)^2 = 1 + 16, over N = 2.
        let loss = wmse_loss(&[1.0_f64, 2.0], &[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert!((loss - 8.5).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_annihilate_residuals() {
        let loss = wmse_loss(&[5.0_f64, -3.0], &[0.0, 100.0], &[0.0, 0.0]).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn gradient_zero_at_fit() {
        let p = [0.3_f64, -0.4];
        let g = wmse_gradient(&p, &p, &[2.0, 3.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_matches_symbolic_derivative() {
        // (2/2) * w^2 * (p - t): [1*1*1, 4*2] = [1, 8]
        let g = wmse_gradient(&[1.0_f64, 2.0], &[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-15);
        assert!((g[1] - 8.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.gen_range(1..8usize);
            let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let target: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
            let grad = wmse_gradient(&pred, &target, &w).unwrap();
            let h = 1e-6;
            for i in 0..n {
                let mut plus = pred.clone();
                plus[i] += h;
                let mut minus = pred.clone();
                minus[i] -= h;
                let numeric = (wmse_loss(&plus, &target, &w).unwrap()
                    - wmse_loss(&minus, &target, &w).unwrap())
                    / (2.0 * h);
                let diff = (grad[i] - numeric).abs();
                let denom = grad[i].abs().max(numeric.abs());
                assert!(
                    diff < 1e-9 || diff / denom < 1e-6,
                    "analytic {} vs numeric {}",
                    grad[i],
                    numeric
                );
            }
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(wmse_loss(&[1.0_f64], &[1.0, 2.0], &[1.0]).is_err());
        assert!(wmse_gradient(&[1.0_f64, 2.0], &[1.0, 2.0], &[1.0]).is_err());
        assert!(wmse_loss::<f64>(&[], &[], &[]).is_err());
    }

    #[test]
    fn reduces_to_plain_mse_with_unit_weights() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(1..16usize);
            let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let target: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let ones = vec![1.0; n];
            let weighted = wmse_loss(&pred, &target, &ones).unwrap();
            let plain: f64 = pred
                .iter()
                .zip(&target)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / n as f64;
            assert!((weighted - plain).abs() <= 1e-12);
        }
    }
}
