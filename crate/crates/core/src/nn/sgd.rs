//! SGD with momentum and weight decay.

use super::param::ParamSet;

/// v = mu * v + (g + wd * p); p -= lr * v
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: Vec<f32>,
}

impl SgdMomentum {
    pub fn new(momentum: f32, weight_decay: f32) -> Self {
        Self { momentum, weight_decay, velocity: Vec::new() }
    }

    pub fn step(&mut self, params: &mut ParamSet, lr: f32) {
        if self.velocity.len() != params.scalar_count() {
            self.velocity = vec![0.0; params.scalar_count()];
        }
        let grads: Vec<f32> = params.grad_data().to_vec();
        let data = params.data_mut();
        for i in 0..data.len() {
            let g = grads[i] + self.weight_decay * data[i];
            self.velocity[i] = self.momentum * self.velocity[i] + g;
            data[i] -= lr * self.velocity[i];
        }
    }

    pub fn velocity(&self) -> &[f32] {
        &self.velocity
    }

    pub fn load_velocity(&mut self, velocity: Vec<f32>) {
        self.velocity = velocity;
    }
}
