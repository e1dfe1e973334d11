use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A trainable array and its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Param {
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
    /// Excluded from weight decay (biases, norm affine terms).
    pub no_decay: bool,
}

impl Param {
    pub fn zeros(len: usize) -> Self {
        Self {
            value: vec![0.0; len],
            grad: vec![0.0; len],
            no_decay: true,
        }
    }

    pub fn filled(len: usize, v: f32) -> Self {
        Self {
            value: vec![v; len],
            ..Self::zeros(len)
        }
    }

    /// He-normal initialisation for a layer with `fan_in` inputs.
    pub fn he_normal(len: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Self {
        let std = (2.0 / fan_in as f64).sqrt();
        let value = (0..len).map(|_| (normal(rng) * std) as f32).collect();
        Self {
            value,
            grad: vec![0.0; len],
            no_decay: false,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Anything holding parameters and non-trainable state buffers.
pub trait Module {
    /// Visits trainable parameters in a fixed order.
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param));

    /// Visits non-trainable state (running statistics) in a fixed order.
    fn visit_buffers(&mut self, _f: &mut dyn FnMut(&mut Vec<f32>)) {}

    fn zero_grad(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }

    fn num_params(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.value.len());
        n
    }

    /// Flattens every parameter and buffer into one vector.
    fn state_vec(&mut self) -> Vec<f32> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.extend_from_slice(&p.value));
        self.visit_buffers(&mut |b| out.extend_from_slice(b));
        out
    }

    /// Restores from [`state_vec`](Module::state_vec) output; returns false on a size mismatch.
    fn load_state_vec(&mut self, state: &[f32]) -> bool {
        let mut expected = 0;
        self.visit_params(&mut |p| expected += p.value.len());
        self.visit_buffers(&mut |b| expected += b.len());
        if expected != state.len() {
            return false;
        }
        let mut off = 0;
        self.visit_params(&mut |p| {
            let n = p.value.len();
            p.value.copy_from_slice(&state[off..off + n]);
            off += n;
        });
        self.visit_buffers(&mut |b| {
            let n = b.len();
            b.copy_from_slice(&state[off..off + n]);
            off += n;
        });
        true
    }
}
