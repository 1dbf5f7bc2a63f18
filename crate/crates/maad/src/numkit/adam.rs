use crate::error::{Error, Result};

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl AdamState {
    /// Defaults β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        AdamState::with_hyper(n_params, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(
        n_params: usize,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        assert!((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2));
        assert!(epsilon > 0.0 && epsilon <= 1e-4);
        AdamState {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step_count: 0,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// One in-place update of `params`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::contract(format!(
                "adam step shapes: state {} params {} grads {}",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::numeric("non-finite gradient in adam step"));
        }
        self.step_count += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for i in 0..params.len() {
            let g = grads[i];
            let m = &mut self.first_moment[i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            let v = &mut self.second_moment[i];
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Scales `grads` in place so its global L2 norm never exceeds `max_norm`;
/// returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}
