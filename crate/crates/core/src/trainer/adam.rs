use crate::nn::{Matrix, ParamId, ParamStore};

/// Bias-corrected Adam. Moments are allocated lazily per parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    moments: Vec<Option<(Matrix, Matrix)>>,
}

impl Adam {
    pub fn new(lr: f64, betas: [f64; 2], eps: f64) -> Self {
        Self {
            lr,
            beta1: betas[0],
            beta2: betas[1],
            eps,
            t: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of every parameter that has a gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Matrix)]) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (id, g) in grads {
            let i = id.index();
            if self.moments.len() <= i {
                self.moments.resize_with(i + 1, || None);
            }
            let (m, v) = self.moments[i]
                .get_or_insert_with(|| (Matrix::zeros(g.rows(), g.cols()), Matrix::zeros(g.rows(), g.cols())));
            let w = store.get_mut(*id);
            for (((w, m), v), &g) in w
                .as_mut_slice()
                .iter_mut()
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
                .zip(g.as_slice())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(values: Vec<f64>) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.vector("w", values);
        (store, id)
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let (mut store, id) = single(vec![1.0, -2.0, 0.5]);
        let mut adam = Adam::new(1e-3, [0.9, 0.999], 1e-8);
        let g = Matrix::row_vector(&[0.3, -7.0, 1e-3]);
        adam.step(&mut store, &[(id, g)]);
        let w = store.get(id).as_slice();
        assert!((w[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((w[1] - (-2.0 + 1e-3)).abs() < 1e-9);
        assert!((w[2] - (0.5 - 1e-3)).abs() < 1e-7);
    }

    #[test]
    fn hand_computed_two_steps() {
        let (mut store, id) = single(vec![0.4]);
        let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
        let mut adam = Adam::new(lr, [b1, b2], eps);
        let (g1, g2) = (0.5, -0.2);
        adam.step(&mut store, &[(id, Matrix::scalar(g1))]);
        adam.step(&mut store, &[(id, Matrix::scalar(g2))]);
        let m1 = (1.0 - b1) * g1;
        let v1 = (1.0 - b2) * g1 * g1;
        let w1 = 0.4 - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + (1.0 - b1) * g2;
        let v2 = b2 * v1 + (1.0 - b2) * g2 * g2;
        let w2 = w1 - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);
        assert!((store.get(id).as_slice()[0] - w2).abs() < 1e-12);
        assert_eq!(adam.steps(), 2);
    }

    #[test]
    fn zero_gradients_leave_parameters_alone() {
        let (mut store, id) = single(vec![1.5, -0.25]);
        let mut adam = Adam::new(1e-3, [0.9, 0.999], 1e-8);
        for _ in 0..100 {
            adam.step(&mut store, &[(id, Matrix::row_vector(&[0.0, 0.0]))]);
        }
        assert_eq!(store.get(id).as_slice(), [1.5, -0.25]);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let (mut store, id) = single(vec![3.0, -2.0]);
        let mut adam = Adam::new(1e-2, [0.9, 0.999], 1e-8);
        for _ in 0..2000 {
            let g = store.get(id).scale(2.0);
            adam.step(&mut store, &[(id, g)]);
        }
        assert!(store.get(id).frobenius_norm() < 1e-3);
    }
}
