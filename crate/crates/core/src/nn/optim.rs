use super::param::{Module, Param};

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update using the accumulated gradients scaled by `grad_scale`, then clears them.
    pub fn step(&mut self, model: &mut dyn Module, grad_scale: f32) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let lr = self.lr;
        let step_size = (lr / bc1) as f32;
        let wd = (lr * self.weight_decay) as f32;
        let eps = self.eps as f32;
        let inv_bc2_sqrt = (1.0 / bc2.sqrt()) as f32;
        let mut idx = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        model.visit_params(&mut |p: &mut Param| {
            if ms.len() <= idx {
                ms.push(vec![0.0; p.value.len()]);
                vs.push(vec![0.0; p.value.len()]);
            }
            let (m, v) = (&mut ms[idx], &mut vs[idx]);
            for k in 0..p.value.len() {
                let g = p.grad[k] * grad_scale;
                m[k] = b1 * m[k] + (1.0 - b1) * g;
                v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                if !p.no_decay {
                    p.value[k] -= wd * p.value[k];
                }
                p.value[k] -= step_size * m[k] / ((v[k]).sqrt() * inv_bc2_sqrt + eps);
                p.grad[k] = 0.0;
            }
            idx += 1;
        });
    }
}
