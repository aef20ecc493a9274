use std::collections::BTreeMap;

use rand::Rng;

use super::{AutodiffError, Result, Tensor};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// One named parameter with its gradient accumulator and Adam state.
#[derive(Debug, Clone)]
struct Param {
    value: Tensor,
    grad: Tensor,
    grad_set: bool,
    m: Tensor,
    v: Tensor,
    step: u64,
}

/// Named parameter map. Iteration order is the lexicographic name order,
/// so updates are run-to-run deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, value: Tensor) {
        let shape = value.shape().to_vec();
        self.params.insert(
            name.to_string(),
            Param {
                value,
                grad: Tensor::zeros(shape.clone()),
                grad_set: false,
                m: Tensor::zeros(shape.clone()),
                v: Tensor::zeros(shape),
                step: 0,
            },
        );
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| AutodiffError::UnknownParameter(name.into()))
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| AutodiffError::UnknownParameter(name.into()))
    }

    /// Add `grad` into the accumulator of `name`.
    pub fn accumulate_grad(&mut self, name: &str, grad: &Tensor) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| AutodiffError::UnknownParameter(name.into()))?;
        p.grad.add_assign(grad)?;
        p.grad_set = true;
        Ok(())
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.grad)
            .ok_or_else(|| AutodiffError::UnknownParameter(name.into()))
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(0.0);
            p.grad_set = false;
        }
    }

    /// Standard Adam step with bias correction. L2 regularization is
    /// coupled into the gradient (`g += weight_decay * value`) before the
    /// moment updates. Gradients are zeroed afterwards.
    pub fn adam_step(&mut self, lr: f64, weight_decay: f64) -> Result<()> {
        for (name, p) in &mut self.params {
            if !p.grad_set {
                return Err(AutodiffError::MissingGradient(name.clone()));
            }
        }
        for p in self.params.values_mut() {
            p.step += 1;
            let t = p.step as i32;
            let bc1 = 1.0 - BETA1.powi(t);
            let bc2 = 1.0 - BETA2.powi(t);
            for i in 0..p.value.numel() {
                let g = p.grad.data()[i] + weight_decay * p.value.data()[i];
                let m = BETA1 * p.m.data()[i] + (1.0 - BETA1) * g;
                let v = BETA2 * p.v.data()[i] + (1.0 - BETA2) * g * g;
                p.m.data_mut()[i] = m;
                p.v.data_mut()[i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                p.value.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
            }
            p.grad.fill(0.0);
            p.grad_set = false;
        }
        Ok(())
    }

    /// Plain SGD step with the same gradient-coupled L2 term.
    pub fn sgd_step(&mut self, lr: f64, weight_decay: f64) -> Result<()> {
        for (name, p) in &mut self.params {
            if !p.grad_set {
                return Err(AutodiffError::MissingGradient(name.clone()));
            }
        }
        for p in self.params.values_mut() {
            p.step += 1;
            for i in 0..p.value.numel() {
                let g = p.grad.data()[i] + weight_decay * p.value.data()[i];
                p.value.data_mut()[i] -= lr * g;
            }
            p.grad.fill(0.0);
            p.grad_set = false;
        }
        Ok(())
    }

    /// Clone of all parameter values, for checkpointing.
    pub fn snapshot(&self) -> BTreeMap<String, Tensor> {
        self.params
            .iter()
            .map(|(k, p)| (k.clone(), p.value.clone()))
            .collect()
    }

    /// Restore values from a snapshot; names must match exactly.
    pub fn restore(&mut self, snap: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, value) in snap {
            let p = self
                .params
                .get_mut(name)
                .ok_or_else(|| AutodiffError::UnknownParameter(name.clone()))?;
            p.value = value.clone();
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(|p| p.value.is_finite())
    }
}

/// Glorot/uniform init: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data: Vec<f64> = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-a..a))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar reference implementation of the Adam recurrences.
    fn adam_scalar(theta0: f64, grads: &[f64], lr: f64, wd: f64) -> f64 {
        let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
        for (i, &g0) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            let g = g0 + wd * theta;
            m = BETA1 * m + (1.0 - BETA1) * g;
            v = BETA2 * v + (1.0 - BETA2) * g * g;
            theta -= lr * (m / (1.0 - BETA1.powi(t))) / ((v / (1.0 - BETA2.powi(t))).sqrt() + EPS);
        }
        theta
    }

    fn scalar_store(theta: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.register("theta", Tensor::vector(vec![theta]));
        s
    }

    #[test]
    fn adam_first_step_unit_gradient() {
        let mut s = scalar_store(1.0);
        s.accumulate_grad("theta", &Tensor::vector(vec![1.0])).unwrap();
        s.adam_step(0.01, 0.0).unwrap();
        let expect = adam_scalar(1.0, &[1.0], 0.01, 0.0);
        let got = s.value("theta").unwrap().data()[0];
        assert_eq!(got, expect);
        // bias-corrected ratio at t=1 is 1/(1+eps), so theta ~ 0.99
        assert!((got - 0.99).abs() < 1e-6, "{got}");
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut s = scalar_store(1.0);
        s.accumulate_grad("theta", &Tensor::vector(vec![0.0])).unwrap();
        s.adam_step(0.01, 0.0).unwrap();
        assert_eq!(s.value("theta").unwrap().data()[0], 1.0);
    }

    #[test]
    fn adam_weight_decay_matches_scalar_oracle() {
        let mut s = scalar_store(1.0);
        s.accumulate_grad("theta", &Tensor::vector(vec![0.0])).unwrap();
        s.adam_step(0.01, 0.001).unwrap();
        let expect = adam_scalar(1.0, &[0.0], 0.01, 0.001);
        assert_eq!(s.value("theta").unwrap().data()[0], expect);
    }

    #[test]
    fn adam_multi_step_matches_scalar_oracle() {
        let grads = [0.4, -1.3, 0.02, 2.5, -0.7];
        let mut s = scalar_store(0.3);
        for &g in &grads {
            s.accumulate_grad("theta", &Tensor::vector(vec![g])).unwrap();
            s.adam_step(0.05, 0.01).unwrap();
        }
        let expect = adam_scalar(0.3, &grads, 0.05, 0.01);
        let got = s.value("theta").unwrap().data()[0];
        assert!((got - expect).abs() < 1e-15, "{got} vs {expect}");
    }

    #[test]
    fn adam_requires_gradients() {
        let mut s = scalar_store(1.0);
        assert!(matches!(
            s.adam_step(0.01, 0.0),
            Err(AutodiffError::MissingGradient(_))
        ));
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
        use rand::SeedableRng;
        let w = glorot_uniform(30, 10, &mut rng);
        let a = (6.0 / 40.0f64).sqrt();
        assert!(w.data().iter().all(|&v| v.abs() < a));
    }
}
