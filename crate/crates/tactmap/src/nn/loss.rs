//! Loss functions, each returning the scalar loss together with its input
//! gradient.

use ndarray::Array4;

use super::Real;

/// Numerically stable binary cross-entropy on logits against a constant
/// target (1 for real, 0 for fake), averaged over all elements.
///
/// loss = mean( max(z, 0) - z*t + ln(1 + exp(-|z|)) )
pub fn bce_with_logits<F: Real>(logits: &Array4<F>, target: f64) -> (F, Array4<F>) {
    let t = F::of(target);
    let count = F::of(logits.len() as f64);
    let mut loss = F::zero();
    for &z in logits.iter() {
        let pos = if z > F::zero() { z } else { F::zero() };
        loss = loss + pos - z * t + (F::one() + (-z.abs()).exp()).ln();
    }
    loss = loss / count;
    let grad = logits.mapv(|z| (sigmoid(z) - t) / count);
    (loss, grad)
}

fn sigmoid<F: Real>(z: F) -> F {
    // Split on sign to avoid overflowing exp.
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

/// Mean absolute error and its gradient with respect to the first argument.
/// The subgradient at exact ties is 0.
pub fn l1_loss<F: Real>(a: &Array4<F>, b: &Array4<F>) -> (F, Array4<F>) {
    assert_eq!(a.dim(), b.dim(), "l1 operands must match");
    let count = F::of(a.len() as f64);
    let mut loss = F::zero();
    let mut grad = Array4::zeros(a.dim());
    ndarray::Zip::from(&mut grad)
        .and(a)
        .and(b)
        .for_each(|g, &av, &bv| {
            let diff = av - bv;
            loss = loss + diff.abs();
            *g = if diff > F::zero() {
                F::one() / count
            } else if diff < F::zero() {
                -F::one() / count
            } else {
                F::zero()
            };
        });
    (loss / count, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random4(shape: (usize, usize, usize, usize), rng: &mut ChaCha8Rng) -> Array4<f64> {
        Array4::from_shape_simple_fn(shape, || rng.random_range(-2.0..2.0))
    }

    #[test]
    fn bce_matches_reference_values() {
        // Single logit 0 against target 1: loss = ln 2.
        let z = Array4::from_elem((1, 1, 1, 1), 0.0);
        let (loss, grad) = bce_with_logits(&z, 1.0);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        // grad = sigmoid(0) - 1 = -0.5
        assert!((grad[[0, 0, 0, 0]] + 0.5).abs() < 1e-12);

        // Large positive logit against target 1: near-zero loss.
        let z = Array4::from_elem((1, 1, 1, 1), 30.0_f64);
        let (loss, _) = bce_with_logits(&z, 1.0);
        assert!(loss < 1e-12);
        // Against target 0: loss ~ z.
        let (loss, _) = bce_with_logits(&z, 0.0);
        assert!((loss - 30.0).abs() < 1e-9);
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let z = random4((2, 1, 3, 3), &mut r);
        for target in [0.0, 1.0] {
            let (_, grad) = bce_with_logits(&z, target);
            let h = 1e-6;
            for idx in 0..z.len() {
                let mut up = z.clone();
                up.as_slice_mut().unwrap()[idx] += h;
                let mut down = z.clone();
                down.as_slice_mut().unwrap()[idx] -= h;
                let numeric =
                    (bce_with_logits(&up, target).0 - bce_with_logits(&down, target).0) / (2.0 * h);
                let analytic = grad.as_slice().unwrap()[idx];
                assert!(
                    (analytic - numeric).abs() < 1e-6,
                    "{analytic} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn l1_loss_and_gradient() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let a = random4((1, 2, 2, 2), &mut r);
        let b = random4((1, 2, 2, 2), &mut r);
        let (loss, grad) = l1_loss(&a, &b);
        let expected: f64 =
            a.iter().zip(b.iter()).map(|(&x, &y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
        assert!((loss - expected).abs() < 1e-12);

        // Gradient sign matches the difference sign.
        for ((&av, &bv), &g) in a.iter().zip(b.iter()).zip(grad.iter()) {
            let sign = (av - bv).signum() / a.len() as f64;
            assert!((g - sign).abs() < 1e-12);
        }

        // Identical tensors: zero loss and zero gradient.
        let (loss, grad) = l1_loss(&a, &a);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }
}
