use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::params::ParamSet;

/// Adam with optional clipping of the global gradient norm.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradients are rescaled to this global norm when larger; `None` disables.
    pub clip_norm: Option<f64>,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let zeros = |t: &Tensor| Tensor::from_shape(t.shape().clone(), vec![0.0; t.numel()]).expect("shape");
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
            first: params.tensors().iter().map(zeros).collect(),
            second: params.tensors().iter().map(zeros).collect(),
            t: 0,
        }
    }

    pub fn with_clip(mut self, clip_norm: Option<f64>) -> Self {
        self.clip_norm = clip_norm;
        self
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first, &self.second)
    }

    /// Applies one update and returns the gradient norm before clipping.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<f64> {
        if grads.len() != self.first.len() {
            return Err(Error::InvalidConfig(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.first.len()
            )));
        }
        for (g, m) in grads.iter().zip(&self.first) {
            if g.shape() != m.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    lhs: g.shape().clone(),
                    rhs: m.shape().clone(),
                });
            }
        }
        let norm = grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt();
        let scale = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, g) in grads.iter().enumerate() {
            let p = params.tensors_mut()[i].data_mut();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j] * scale;
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ParamSet {
        let mut p = ParamSet::new();
        p.add("w", Tensor::new(vec![2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap());
        p.add("b", Tensor::vector(vec![0.25]));
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = params();
        let before = p.clone();
        let mut adam = Adam::new(&p, 1e-3);
        let zeros = vec![Tensor::zeros(vec![2, 2]).unwrap(), Tensor::zeros(vec![1]).unwrap()];
        for _ in 0..10 {
            adam.step(&mut p, &zeros).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = params();
        let mut adam = Adam::new(&p, 0.1);
        let grads = vec![
            Tensor::new(vec![2, 2], vec![3.0, -1.0, 0.0, 2.0]).unwrap(),
            Tensor::vector(vec![-5.0]),
        ];
        adam.step(&mut p, &grads).unwrap();
        let w = p.tensors()[0].data();
        assert!((w[0] - 0.9).abs() < 1e-8);
        assert!((w[1] + 1.9).abs() < 1e-8);
        assert_eq!(w[2], 0.5);
        assert!((p.tensors()[1].data()[0] - 0.35).abs() < 1e-8);
    }

    #[test]
    fn clipping_rescales_moments() {
        let mut p = params();
        let mut adam = Adam::new(&p, 0.1).with_clip(Some(1.0));
        let grads = vec![
            Tensor::new(vec![2, 2], vec![30.0, 0.0, 0.0, 40.0]).unwrap(),
            Tensor::vector(vec![0.0]),
        ];
        let norm = adam.step(&mut p, &grads).unwrap();
        assert_eq!(norm, 50.0);
        let m = adam.moments().0[0].data();
        assert!((m[0] - 0.1 * 0.6).abs() < 1e-15);
        assert!((m[3] - 0.1 * 0.8).abs() < 1e-15);
    }

    #[test]
    fn accumulators_mirror_parameters() {
        let p = params();
        let adam = Adam::new(&p, 1e-3);
        for (m, t) in adam.moments().0.iter().zip(p.tensors()) {
            assert_eq!(m.shape(), t.shape());
        }
        let mut q = p.clone();
        let bad = vec![Tensor::zeros(vec![2, 2]).unwrap()];
        assert!(Adam::new(&p, 1e-3).step(&mut q, &bad).is_err());
    }
}
