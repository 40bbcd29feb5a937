use super::{Tensor, TensorError};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for an ordered list of parameters.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[&Tensor<T>]) -> Self {
        Self {
            config,
            step: 0,
            first: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            second: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update using each parameter's accumulated gradient.
    ///
    /// Parameters without a gradient buffer are left untouched. The parameter
    /// order must match the one given to `new`.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>]) -> Result<(), TensorError> {
        if params.len() > self.first.len() {
            return Err(TensorError::MissingState(self.first.len()));
        }
        for (i, p) in params.iter().enumerate() {
            if p.len() != self.first[i].len() {
                return Err(TensorError::MissingState(i));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let corr1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
        let corr2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
        let lr = T::from_f64_lossy(c.learning_rate);
        let eps = T::from_f64_lossy(c.epsilon);
        for (i, p) in params.iter_mut().enumerate() {
            // parameters that received no gradient are skipped
            let Some(grad) = p.grad.take() else {
                continue;
            };
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (j, (x, &gj)) in p.data.iter_mut().zip(&grad).enumerate() {
                m[j] = b1 * m[j] + (T::one() - b1) * gj;
                v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
                *x -= lr * (m[j] / corr1) / ((v[j] / corr2).sqrt() + eps);
            }
            p.grad = Some(grad);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = Tensor::<f64>::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap().with_grad();
        p.accumulate_grad(&[0.0; 3]).unwrap();
        let before = p.data().to_vec();
        let mut state = AdamState::new(AdamConfig::default(), &[&p]);
        for _ in 0..5 {
            state.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.data(), &before[..]);
    }

    #[test]
    fn single_step_matches_hand_computation() {
        let g = 0.3f64;
        let mut p = Tensor::<f64>::scalar(2.0).with_grad();
        p.accumulate_grad(&[g]).unwrap();
        let cfg = AdamConfig::default();
        let mut state = AdamState::new(cfg, &[&p]);
        state.step(&mut [&mut p]).unwrap();
        let m = (1.0 - 0.9) * g;
        let v = (1.0 - 0.999) * g * g;
        let m_hat = m / (1.0 - 0.9);
        let v_hat = v / (1.0 - 0.999);
        let want = 2.0 - 5e-4 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p.data()[0] - want).abs() < 1e-15, "{} vs {want}", p.data()[0]);
    }

    #[test]
    fn quadratic_descends_monotonically_after_warmup() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        };
        let mut x = Tensor::<f64>::scalar(1.0).with_grad();
        let mut state = AdamState::new(cfg, &[&x]);
        let mut trace = Vec::new();
        for _ in 0..100 {
            x.zero_grad();
            let v = x.data()[0];
            x.accumulate_grad(&[2.0 * v]).unwrap();
            state.step(&mut [&mut x]).unwrap();
            trace.push(x.data()[0].abs());
        }
        for w in trace[5..].windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(trace[99] < 0.5);
    }

    #[test]
    fn mismatched_parameter_list_is_rejected() {
        let a = Tensor::<f32>::zeros(&[2]);
        let mut b = Tensor::<f32>::zeros(&[3]);
        let mut state = AdamState::new(AdamConfig::default(), &[&a]);
        assert_eq!(state.step(&mut [&mut b]), Err(TensorError::MissingState(0)));
    }
}
