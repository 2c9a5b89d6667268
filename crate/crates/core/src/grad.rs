//! Reverse-mode gradients of the training loss
//!
//! ```text
//! G(x) = Σᵢ wᵢ ‖x − x̂ᵢ‖² + λ Σᵢ ReLU(−δᵢ) + λ Σᵢₖ ReLU(−τᵢₖ)
//! ```
//!
//! where `x̂ᵢ` is the output of decoder layer `i` in the smooth training mode.
//! The sweep runs layers in reverse, then the `Φᵀr` initializer, then the
//! `tanh(c·Φx)` encoder, so `∂G/∂Φ` collects both the decoder and encoder paths.
//! Kinks (`|·|` at 0, ReLU at 0) take derivative 0.

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, matvec, matvec_t, relu, Matrix};
use crate::rfpi::DEGENERATE_EPS;
use crate::unfolded::{autoencode_full, Autoencoded, LayerCache, Mode, Model};

/// Partial derivatives shaped like a [`Model`]'s learnable set.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub d_phi: Matrix,
    pub d_deltas: Vec<f64>,
    pub d_taus: Vec<Vec<f64>>,
}

impl GradientBundle {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            d_phi: Matrix::zeros(model.m(), model.n()),
            d_deltas: vec![0.0; model.layers()],
            d_taus: vec![vec![0.0; model.n()]; model.layers()],
        }
    }

    pub fn add_assign(&mut self, other: &GradientBundle) {
        self.d_phi.add_assign(&other.d_phi);
        for (a, b) in self.d_deltas.iter_mut().zip(&other.d_deltas) {
            *a += b;
        }
        for (ta, tb) in self.d_taus.iter_mut().zip(&other.d_taus) {
            for (a, b) in ta.iter_mut().zip(tb) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.d_phi.scale(s);
        self.d_deltas.iter_mut().for_each(|a| *a *= s);
        self.d_taus.iter_mut().flatten().for_each(|a| *a *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.d_phi.is_finite()
            && self
                .d_deltas
                .iter()
                .chain(self.d_taus.iter().flatten())
                .all(|a| a.is_finite())
    }

    /// Flattened view: Φ row-major, then all δ, then τ layer by layer.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.d_phi.as_slice().to_vec();
        out.extend_from_slice(&self.d_deltas);
        out.extend(self.d_taus.iter().flatten());
        out
    }

    pub fn flat_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.d_phi
            .as_mut_slice()
            .iter_mut()
            .chain(self.d_deltas.iter_mut())
            .chain(self.d_taus.iter_mut().flatten())
    }
}

/// Gradients of one layer's output, chained with `grad_out`.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub grad_z: Vec<f64>,
    pub d_delta: f64,
    pub d_tau: Vec<f64>,
    pub d_phi: Matrix,
    pub d_rcode: Vec<f64>,
}

/// Adjoint of one decoder layer.
pub fn layer_backward(
    cache: &LayerCache,
    grad_out: &[f64],
    phi: &Matrix,
    rcode: &[f64],
) -> Result<LayerGrads> {
    let mut d_phi = Matrix::zeros(phi.rows(), phi.cols());
    let mut d_rcode = vec![0.0; phi.rows()];
    let (grad_z, d_delta, d_tau) =
        layer_backward_into(cache, grad_out, phi, rcode, &mut d_phi, &mut d_rcode)?;
    Ok(LayerGrads {
        grad_z,
        d_delta,
        d_tau,
        d_phi,
        d_rcode,
    })
}

/// Like [`layer_backward`] but accumulates `∂/∂Φ` and `∂/∂r` into the given buffers.
/// Returns `(∂/∂z, ∂/∂δ, ∂/∂τ)`.
pub fn layer_backward_into(
    cache: &LayerCache,
    grad_out: &[f64],
    phi: &Matrix,
    rcode: &[f64],
    d_phi: &mut Matrix,
    d_rcode: &mut [f64],
) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let n = cache.z_in.len();
    check_len("layer_backward: grad_out", n, grad_out.len())?;
    check_len("layer_backward: code", phi.rows(), rcode.len())?;
    if cache.degenerate {
        return Ok((grad_out.to_vec(), 0.0, vec![0.0; n]));
    }
    let z = &cache.z_in;
    let delta = cache.delta;

    let g_v = normalize_backward(&cache.out, cache.norm_v, grad_out);

    // v = σ(t) ⊙ ReLU(|t| − τ)
    let mut g_t = vec![0.0; n];
    let mut d_tau = vec![0.0; n];
    for k in 0..n {
        let u = cache.abs_t_minus_tau[k];
        let tk = cache.t[k];
        g_t[k] = g_v[k] * relu(u) * cache.shrink_sign.derivative(tk);
        if u > 0.0 {
            let g_h = g_v[k] * cache.sign_t[k];
            d_tau[k] = -g_h;
            g_t[k] += g_h * abs_derivative(tk);
        }
    }

    // t = a z − δ d,  a = 1 + δ s,  s = dᵀz
    let scale = 1.0 + delta * cache.d_dot_z;
    let g_a = dot(&g_t, z);
    let g_s = g_a * delta;
    let d_delta = g_a * cache.d_dot_z - dot(&g_t, &cache.d);
    let mut grad_z: Vec<f64> = g_t
        .iter()
        .zip(&cache.d)
        .map(|(gt, dk)| scale * gt + g_s * dk)
        .collect();
    let g_d: Vec<f64> = g_t
        .iter()
        .zip(z)
        .map(|(gt, zk)| -delta * gt + g_s * zk)
        .collect();

    // d = −Φᵀ q,  q = r ⊙ ρ(y)
    let q: Vec<f64> = rcode.iter().zip(&cache.rho_y).map(|(r, p)| r * p).collect();
    d_phi.add_outer(-1.0, &q, &g_d);
    let phi_gd = matvec(phi, &g_d)?;

    // ρ(y) = max(−y, 0),  y = r ⊙ Φz
    let mut g_w = vec![0.0; phi.rows()];
    for k in 0..phi.rows() {
        let g_q = -phi_gd[k];
        d_rcode[k] += cache.rho_y[k] * g_q;
        if cache.y[k] < 0.0 {
            let g_y = -rcode[k] * g_q;
            d_rcode[k] += cache.phi_z[k] * g_y;
            g_w[k] = rcode[k] * g_y;
        }
    }
    d_phi.add_outer(1.0, &g_w, z);
    for (gz, a) in grad_z.iter_mut().zip(matvec_t(phi, &g_w)?) {
        *gz += a;
    }
    Ok((grad_z, d_delta, d_tau))
}

/// Adjoint of `out = v/‖v‖`: `(I − out outᵀ) grad_out / ‖v‖`, orthogonal to `out`.
pub fn normalize_backward(out: &[f64], norm_v: f64, grad_out: &[f64]) -> Vec<f64> {
    let proj = dot(out, grad_out);
    grad_out
        .iter()
        .zip(out)
        .map(|(g, o)| (g - o * proj) / norm_v)
        .collect()
}

/// Subgradient of `|t|` with value 0 at the origin.
fn abs_derivative(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Result of a training-mode forward pass with the loss decomposed.
#[derive(Debug, Clone)]
pub struct LossForward {
    pub loss: f64,
    /// `‖x − x̂ᵢ‖²` per layer (unweighted).
    pub layer_errors: Vec<f64>,
    pub regularizer: f64,
    pub pass: Autoencoded,
}

/// `λ Σ ReLU(−δᵢ) + λ Σ ReLU(−τᵢₖ)`.
pub fn positivity_penalty(model: &Model, lambda: f64) -> f64 {
    let p = &model.params;
    lambda
        * (p.deltas.iter().map(|d| relu(-d)).sum::<f64>()
            + p.taus.iter().flatten().map(|t| relu(-t)).sum::<f64>())
}

fn check_weights(model: &Model, weights: &[f64]) -> Result<()> {
    check_len("loss: weights", model.layers(), weights.len())
}

/// Forward pass in `mode` with the accumulated loss. Only [`Mode::TrainSmooth`]
/// is differentiable; other modes are rejected.
pub fn loss_forward(
    x: &[f64],
    model: &Model,
    weights: &[f64],
    lambda: f64,
    mode: Mode,
) -> Result<LossForward> {
    if mode != Mode::TrainSmooth {
        return Err(Error::NonDifferentiable);
    }
    check_weights(model, weights)?;
    check_len("loss: signal", model.n(), x.len())?;
    let pass = autoencode_full(x, model, mode)?;
    let layer_errors: Vec<f64> = pass
        .trajectory
        .outputs()
        .iter()
        .map(|xh| x.iter().zip(xh).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    let regularizer = positivity_penalty(model, lambda);
    let loss = layer_errors
        .iter()
        .zip(weights)
        .map(|(e, w)| w * e)
        .sum::<f64>()
        + regularizer;
    Ok(LossForward {
        loss,
        layer_errors,
        regularizer,
        pass,
    })
}

/// Exact gradient of [`loss_forward`].
pub fn loss_backward(
    x: &[f64],
    model: &Model,
    weights: &[f64],
    lambda: f64,
    fwd: &LossForward,
) -> Result<GradientBundle> {
    loss_backward_seeded(x, model, weights, lambda, fwd, 1.0)
}

/// Gradient of `seed · G`; the whole adjoint is linear in `seed`.
pub fn loss_backward_seeded(
    x: &[f64],
    model: &Model,
    weights: &[f64],
    lambda: f64,
    fwd: &LossForward,
    seed: f64,
) -> Result<GradientBundle> {
    check_weights(model, weights)?;
    let pass = &fwd.pass;
    let layers = pass.caches.len();
    let n = model.n();
    let mut grads = GradientBundle::zeros_like(model);
    let mut d_rcode = vec![0.0; model.m()];
    let mut carry = vec![0.0; n];
    let outputs = pass.trajectory.outputs();

    for i in (0..layers).rev() {
        let w2 = 2.0 * seed * weights[i];
        for ((g, o), xk) in carry.iter_mut().zip(&outputs[i]).zip(x) {
            *g += w2 * (o - xk);
        }
        let (grad_z, d_delta, d_tau) = layer_backward_into(
            &pass.caches[i],
            &carry,
            &model.phi,
            &pass.code,
            &mut grads.d_phi,
            &mut d_rcode,
        )?;
        grads.d_deltas[i] += d_delta;
        for (a, b) in grads.d_taus[i].iter_mut().zip(&d_tau) {
            *a += b;
        }
        carry = grad_z;
    }

    // x₀ = b/‖b‖, b = Φᵀr; the e₁ fallback is locally constant
    let x0 = &pass.trajectory.iterates[0];
    let nb = crate::linalg::norm2(&pass.init_raw);
    if nb >= DEGENERATE_EPS {
        let proj = dot(x0, &carry);
        let g_b: Vec<f64> = carry
            .iter()
            .zip(x0)
            .map(|(g, o)| (g - o * proj) / nb)
            .collect();
        grads.d_phi.add_outer(1.0, &pass.code, &g_b);
        for (a, b) in d_rcode.iter_mut().zip(matvec(&model.phi, &g_b)?) {
            *a += b;
        }
    }

    // r = tanh(c·Φx)
    let c = model.c;
    let g_pre: Vec<f64> = d_rcode
        .iter()
        .zip(&pass.code)
        .map(|(g, r)| g * c * (1.0 - r * r))
        .collect();
    grads.d_phi.add_outer(1.0, &g_pre, x);

    let reg = seed * lambda;
    for (g, d) in grads.d_deltas.iter_mut().zip(&model.params.deltas) {
        if *d < 0.0 {
            *g -= reg;
        }
    }
    for (gt, tt) in grads.d_taus.iter_mut().zip(&model.params.taus) {
        for (g, t) in gt.iter_mut().zip(tt) {
            if *t < 0.0 {
                *g -= reg;
            }
        }
    }
    Ok(grads)
}

/// Loss and gradient for one signal.
pub fn loss_and_grad(
    x: &[f64],
    model: &Model,
    weights: &[f64],
    lambda: f64,
) -> Result<(f64, GradientBundle)> {
    let fwd = loss_forward(x, model, weights, lambda, Mode::TrainSmooth)?;
    let g = loss_backward(x, model, weights, lambda, &fwd)?;
    Ok((fwd.loss, g))
}

/// Central difference `(f(θ+h) − f(θ−h)) / 2h`.
pub fn central_difference(f: impl Fn(f64) -> f64, theta: f64, h: f64) -> f64 {
    (f(theta + h) - f(theta - h)) / (2.0 * h)
}

/// Mutable access to learnable scalar `index` in [`GradientBundle::flat`] order.
pub fn param_mut(model: &mut Model, index: usize) -> &mut f64 {
    let phi_len = model.m() * model.n();
    let layers = model.layers();
    if index < phi_len {
        &mut model.phi.as_mut_slice()[index]
    } else if index < phi_len + layers {
        &mut model.params.deltas[index - phi_len]
    } else {
        let j = index - phi_len - layers;
        let n = model.n();
        &mut model.params.taus[j / n][j % n]
    }
}

pub fn num_params(model: &Model) -> usize {
    model.m() * model.n() + model.params.num_scalars()
}

/// Central finite-difference gradient of the training loss, one scalar at a time.
pub fn fd_gradient(
    x: &[f64],
    model: &Model,
    weights: &[f64],
    lambda: f64,
    h: f64,
) -> Result<GradientBundle> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step h must be > 0, got {h}"
        )));
    }
    let mut work = model.clone();
    let mut out = GradientBundle::zeros_like(model);
    let total = num_params(model);
    let mut values = Vec::with_capacity(total);
    for idx in 0..total {
        let base = *param_mut(&mut work, idx);
        *param_mut(&mut work, idx) = base + h;
        let plus = loss_forward(x, &work, weights, lambda, Mode::TrainSmooth)?.loss;
        *param_mut(&mut work, idx) = base - h;
        let minus = loss_forward(x, &work, weights, lambda, Mode::TrainSmooth)?.loss;
        *param_mut(&mut work, idx) = base;
        values.push((plus - minus) / (2.0 * h));
    }
    for (slot, v) in out.flat_mut().zip(values) {
        *slot = v;
    }
    Ok(out)
}
