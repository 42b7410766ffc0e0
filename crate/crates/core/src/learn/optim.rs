use crate::model::AgentParams;

/// Adam with the AMSGrad correction: the second-moment estimate used in the
/// denominator never decreases.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: AgentParams,
    v: AgentParams,
    v_max: AgentParams,
}

impl Adam {
    pub fn new(params: &AgentParams) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
            v_max: params.zeros_like(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut AgentParams, grads: &AgentParams, lr: f64) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2_sqrt = (1.0 - b2.powi(self.step as i32)).sqrt();
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(self.v_max.tensors_mut());
        for ((((p, g), m), v), vm) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                vm[i] = vm[i].max(v[i]);
                let denom = vm[i].sqrt() / bc2_sqrt + eps;
                p[i] -= lr / bc1 * m[i] / denom;
            }
        }
    }
}
