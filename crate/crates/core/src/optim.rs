//! Adam over parameters stored as fixed-width blocks, updating only the
//! blocks that received a gradient in the current step.

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub(crate) struct LazyAdam {
    lr: f64,
    width: usize,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl LazyAdam {
    pub(crate) fn new(lr: f64, len: usize, width: usize) -> Self {
        Self { lr, width, step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    /// Starts a new optimisation step; call once per batch before the
    /// block updates.
    pub(crate) fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Updates block `block` of `params` with its gradient.
    pub(crate) fn update(&mut self, params: &mut [f64], block: usize, grad: &[f64]) {
        debug_assert_eq!(grad.len(), self.width);
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let start = block * self.width;
        for (k, &g) in grad.iter().enumerate() {
            let i = start + k;
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + EPS);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first update is lr * g / (|g| + eps).
        let mut p = vec![1.0, 1.0, 5.0];
        let mut adam = LazyAdam::new(0.1, 3, 1);
        adam.begin_step();
        adam.update(&mut p, 0, &[2.0]);
        adam.update(&mut p, 2, &[-3.0]);
        assert!((p[0] - 0.9).abs() < 1e-9);
        assert_eq!(p[1], 1.0);
        assert!((p[2] - 5.1).abs() < 1e-9);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut adam = LazyAdam::new(0.05, 2, 2);
        for _ in 0..2000 {
            adam.begin_step();
            let g = vec![2.0 * p[0], 2.0 * p[1]];
            adam.update(&mut p, 0, &g);
        }
        assert!(p[0].abs() < 1e-2 && p[1].abs() < 1e-2);
    }
}
