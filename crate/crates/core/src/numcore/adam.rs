//! Adam optimizer state for one flat parameter vector.

use super::NumError;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(param_len: usize, lr: f64) -> Self {
        AdamState::with_hyper(param_len, lr, 0.9, 0.999, 1e-8)
            .expect("default Adam hyperparameters are valid")
    }

    pub fn with_hyper(
        param_len: usize,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Result<Self, NumError> {
        if !(0.0..1.0).contains(&beta1)
            || beta1 <= 0.0
            || !(0.0..1.0).contains(&beta2)
            || beta2 <= 0.0
            || eps <= 0.0
            || lr <= 0.0
        {
            return Err(NumError::Contract {
                what: format!(
                    "invalid Adam hyperparameters lr={lr} beta1={beta1} beta2={beta2} eps={eps}"
                ),
            });
        }
        Ok(AdamState {
            step: 0,
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
        })
    }

    /// Bias-corrected Adam update in place; increments the step count.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NumError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NumError::Contract {
                what: format!(
                    "Adam state holds {} parameters, got params={} grads={}",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_are_a_fixed_point() {
        let mut state = AdamState::new(4, 0.01);
        let mut params = vec![1.0, -2.0, 0.5, 3.0];
        let before = params.clone();
        state.step(&mut params, &[0.0; 4]).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // bias correction makes m̂/(√v̂+ε) ≈ sign(g) on step one
        let mut state = AdamState::new(3, 0.01);
        let mut params = vec![0.0; 3];
        state.step(&mut params, &[2.5, -0.3, 1e-3]).unwrap();
        for (p, g) in params.iter().zip([2.5f64, -0.3, 1e-3]) {
            assert!(
                (p + 0.01 * g.signum()).abs() < 1e-5,
                "param {p} for grad {g}"
            );
        }
    }

    #[test]
    fn converges_on_quadratic() {
        // minimize ‖x − 3‖² from x = 0
        let mut state = AdamState::new(2, 0.05);
        let mut x = vec![0.0, 0.0];
        for _ in 0..1000 {
            let g: Vec<f64> = x.iter().map(|xi| 2.0 * (xi - 3.0)).collect();
            state.step(&mut x, &g).unwrap();
        }
        for xi in &x {
            assert!((xi - 3.0).abs() < 1e-3, "x = {x:?}");
        }
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let mut state = AdamState::new(3, 0.01);
        let mut params = vec![0.0; 2];
        assert!(state.step(&mut params, &[0.0; 2]).is_err());
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        assert!(AdamState::with_hyper(1, 0.0, 0.9, 0.999, 1e-8).is_err());
        assert!(AdamState::with_hyper(1, 0.1, 1.0, 0.999, 1e-8).is_err());
        assert!(AdamState::with_hyper(1, 0.1, 0.9, 0.999, 0.0).is_err());
    }
}
