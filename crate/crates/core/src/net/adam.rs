//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::net::tensor::Tensor;

pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed moments shaped like `params`.
    pub fn new(params: &[Tensor], learning_rate: f64) -> Self {
        AdamState {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    /// One update of `params` in place.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.numel() != self.first[i].len() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {i}: param {:?}, grad {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::gradcheck::random_tensor;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let lr = 1e-3;
        let p0 = random_tensor(&[50], 1);
        let g = random_tensor(&[50], 2);
        let mut p = vec![p0.clone()];
        let mut adam = AdamState::new(&p, lr);
        adam.step(&mut p, std::slice::from_ref(&g)).unwrap();
        for ((a, b), gv) in p[0].data().iter().zip(p0.data()).zip(g.data()) {
            if gv.abs() >= 1e-3 {
                assert!(((a - b) + lr * gv.signum()).abs() < lr * 1e-4);
            }
        }
    }

    #[test]
    fn zero_rate_and_zero_gradient_are_identity() {
        let p0 = random_tensor(&[3, 4], 5);
        let mut p = vec![p0.clone()];
        let mut adam = AdamState::new(&p, 0.0);
        for s in 0..5 {
            adam.step(&mut p, &[random_tensor(&[3, 4], s)]).unwrap();
        }
        assert_eq!(p[0], p0);
        let mut adam = AdamState::new(&p, 0.1);
        for _ in 0..5 {
            adam.step(&mut p, &[Tensor::zeros(&[3, 4])]).unwrap();
        }
        assert_eq!(p[0], p0);
        assert_eq!(adam.step, 5);
    }

    #[test]
    fn shape_checked() {
        let mut p = vec![Tensor::zeros(&[2])];
        let mut adam = AdamState::new(&p, 0.1);
        assert!(adam.step(&mut p, &[Tensor::zeros(&[3])]).is_err());
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn quadratic_bowl() {
        let c = random_tensor(&[20], 7);
        let mut p = vec![random_tensor(&[20], 8)];
        let dist = |p: &Tensor| {
            p.data()
                .iter()
                .zip(c.data())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let start = dist(&p[0]);
        let mut adam = AdamState::new(&p, 0.05);
        for _ in 0..200 {
            let g: Vec<f64> = p[0].data().iter().zip(c.data()).map(|(a, b)| 2.0 * (a - b)).collect();
            adam.step(&mut p, &[Tensor::new(vec![20], g).unwrap()]).unwrap();
        }
        assert!(dist(&p[0]) <= 0.01 * start, "{} vs {start}", dist(&p[0]));
    }
}
