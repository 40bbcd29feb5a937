use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Tensor, TensorError};
use crate::scalar::Scalar;

/// He (Kaiming) normal initialization: `N(0, sqrt(2 / fan_in))`.
pub fn he_init<T: Scalar, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    rng: &mut R,
) -> Result<Tensor<T>, TensorError> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(TensorError::ZeroSize(shape.to_vec()));
    }
    if fan_in == 0 {
        return Err(TensorError::InvalidArgument("he_init: fan_in must be positive".into()));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64_lossy(normal.sample(rng))).collect();
    Tensor::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sample_std_matches_fan_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t: Tensor<f64> = he_init(&[1000, 1000], 200, &mut rng).unwrap();
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((var.sqrt() - 0.1).abs() < 0.1 * 0.02, "std {}", var.sqrt());
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a: Tensor<f32> = he_init(&[4, 3, 3, 3], 27, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b: Tensor<f32> = he_init(&[4, 3, 3, 3], 27, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_sized_shape_is_rejected() {
        let r: Result<Tensor<f32>, _> = he_init(&[4, 0], 4, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(r, Err(TensorError::ZeroSize(vec![4, 0])));
    }
}
