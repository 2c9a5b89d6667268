use crate::grad::GradientBundle;
use crate::unfolded::Model;

/// Which parameter groups an update may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LearnMask {
    pub phi: bool,
    pub delta: bool,
    pub tau: bool,
}

impl LearnMask {
    pub const ALL: LearnMask = LearnMask {
        phi: true,
        delta: true,
        tau: true,
    };
    pub const PHI_ONLY: LearnMask = LearnMask {
        phi: true,
        delta: false,
        tau: false,
    };
    pub const TAU_ONLY: LearnMask = LearnMask {
        phi: false,
        delta: false,
        tau: true,
    };
}

/// Adam moments, shaped like the model's learnable set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: GradientBundle,
    pub v: GradientBundle,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(model: &Model) -> Self {
        Self {
            m: GradientBundle::zeros_like(model),
            v: GradientBundle::zeros_like(model),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

struct Coeffs {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    bc1: f64,
    bc2: f64,
}

fn update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], k: &Coeffs) {
    for (((p, &g), mi), vi) in params.iter_mut().zip(grads).zip(m).zip(v) {
        *mi = k.beta1 * *mi + (1.0 - k.beta1) * g;
        *vi = k.beta2 * *vi + (1.0 - k.beta2) * g * g;
        let m_hat = *mi / k.bc1;
        let v_hat = *vi / k.bc2;
        *p -= k.lr * m_hat / (v_hat.sqrt() + k.epsilon);
    }
}

/// One bias-corrected Adam update on the groups selected by `mask`.
/// The step counter always advances; masked-off parameters and their moments are left alone.
pub fn adam_step(
    model: &mut Model,
    grads: &GradientBundle,
    state: &mut AdamState,
    lr: f64,
    mask: LearnMask,
) {
    state.step += 1;
    let t = state.step as i32;
    let k = Coeffs {
        lr,
        beta1: state.beta1,
        beta2: state.beta2,
        epsilon: state.epsilon,
        bc1: 1.0 - state.beta1.powi(t),
        bc2: 1.0 - state.beta2.powi(t),
    };
    if mask.phi {
        update(
            model.phi.as_mut_slice(),
            grads.d_phi.as_slice(),
            state.m.d_phi.as_mut_slice(),
            state.v.d_phi.as_mut_slice(),
            &k,
        );
    }
    if mask.delta {
        update(
            &mut model.params.deltas,
            &grads.d_deltas,
            &mut state.m.d_deltas,
            &mut state.v.d_deltas,
            &k,
        );
    }
    if mask.tau {
        for i in 0..model.layers() {
            update(
                &mut model.params.taus[i],
                &grads.d_taus[i],
                &mut state.m.d_taus[i],
                &mut state.v.d_taus[i],
                &k,
            );
        }
    }
}
