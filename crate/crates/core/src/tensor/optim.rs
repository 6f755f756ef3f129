use super::Matrix;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Adam with decoupled, per-parameter multiplicative weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(lr: f64, params: &[Matrix]) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {lr} must be positive")));
        }
        let zeros = || params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Ok(Self { lr, step: 0, first: zeros(), second: zeros() })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. `grads[p] == None` leaves parameter `p` and its moments
    /// untouched (frozen or unused); otherwise `p *= 1 - lr * decay[p]`
    /// precedes the Adam step.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Option<Matrix>], decay: &[f64]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() || decay.len() != params.len() {
            return Err(Error::Shape {
                op: "adam_step",
                detail: format!(
                    "{} params, {} grads, {} decay values, {} moments",
                    params.len(),
                    grads.len(),
                    decay.len(),
                    self.first.len()
                ),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (p, param) in params.iter_mut().enumerate() {
            let Some(g) = &grads[p] else { continue };
            if g.shape() != param.shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    detail: format!("grad {:?} for param {:?}", g.shape(), param.shape()),
                });
            }
            let shrink = 1.0 - self.lr * decay[p];
            let m = self.first[p].data_mut();
            let v = self.second[p].data_mut();
            for (idx, (x, &gv)) in param.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[idx] = BETA1 * m[idx] + (1.0 - BETA1) * gv;
                v[idx] = BETA2 * v[idx] + (1.0 - BETA2) * gv * gv;
                let m_hat = m[idx] / c1;
                let v_hat = v[idx] / c2;
                *x = *x * shrink - self.lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_sign_step() {
        let mut p = vec![Matrix::scalar(1.0)];
        let mut adam = Adam::new(0.01, &p).unwrap();
        adam.step(&mut p, &[Some(Matrix::scalar(3.0))], &[0.0]).unwrap();
        assert!((p[0].get(0, 0) - (1.0 - 0.01)).abs() < 1e-9);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn zero_grad_no_decay_is_noop() {
        let mut p = vec![Matrix::filled(2, 2, 0.7)];
        let mut adam = Adam::new(0.01, &p).unwrap();
        adam.step(&mut p, &[Some(Matrix::zeros(2, 2))], &[0.0]).unwrap();
        assert_eq!(p[0], Matrix::filled(2, 2, 0.7));
    }

    #[test]
    fn decay_is_per_group() {
        let mut p = vec![Matrix::scalar(2.0), Matrix::scalar(2.0)];
        let mut adam = Adam::new(0.1, &p).unwrap();
        let z = Some(Matrix::scalar(0.0));
        adam.step(&mut p, &[z.clone(), z], &[0.0, 0.5]).unwrap();
        assert_eq!(p[0].get(0, 0), 2.0);
        assert_eq!(p[1].get(0, 0), 2.0 * (1.0 - 0.1 * 0.5));
    }
}
