//! The learnable decoder: `L` renormalized fixed-point layers with per-layer
//! step-size `δᵢ` and threshold vector `τᵢ ∈ ℝⁿ`.
//!
//! Layer `i` maps a unit-norm `z` to
//!
//! ```text
//! d = −(RΦ)ᵀ ρ(RΦz)
//! t = (1 + δᵢ dᵀz) z − δᵢ d
//! v = σ(t) ⊙ max(|t| − τᵢ, 0)
//! out = v / ‖v‖₂
//! ```
//!
//! where `σ` is the smooth sign during training and the hard sign at
//! evaluation. Every forward pass records a [`LayerCache`] for the backward
//! sweep in [`crate::grad`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode_with, SignKind};
use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, matvec, matvec_t, norm2, relu, Matrix};
use crate::rfpi::{init_x0, Trajectory, DEGENERATE_EPS};
use crate::signals::gen_random_phi;

/// Per-layer step-sizes and thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub deltas: Vec<f64>,
    pub taus: Vec<Vec<f64>>,
}

impl DecoderParams {
    /// All layers tied to `(δ, τ·1)`.
    pub fn tied(n: usize, layers: usize, delta: f64, tau: f64) -> Self {
        Self {
            deltas: vec![delta; layers],
            taus: vec![vec![tau; n]; layers],
        }
    }

    pub fn layers(&self) -> usize {
        self.deltas.len()
    }

    /// Learnable decoder scalars: `L·(n+1)`.
    pub fn num_scalars(&self) -> usize {
        self.deltas.len() + self.taus.iter().map(Vec::len).sum::<usize>()
    }

    pub fn min_value(&self) -> f64 {
        self.deltas
            .iter()
            .chain(self.taus.iter().flatten())
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// How `Φ` is drawn when a model is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PhiInit {
    /// i.i.d. N(0, 1/m).
    #[default]
    Scaled,
    /// i.i.d. N(0, 1).
    Standard,
}

impl PhiInit {
    pub fn draw<R: Rng + ?Sized>(self, m: usize, n: usize, rng: &mut R) -> Matrix {
        let mut phi = gen_random_phi(m, n, rng);
        if self == PhiInit::Scaled {
            phi.scale(1.0 / (m as f64).sqrt());
        }
        phi
    }
}

/// Sensing matrix plus decoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub phi: Matrix,
    pub params: DecoderParams,
    /// Smooth-sign sharpness shared by the encoder and the shrinkage sign.
    pub c: f64,
}

impl Model {
    pub fn new(phi: Matrix, params: DecoderParams, c: f64) -> Result<Self> {
        let model = Self { phi, params, c };
        model.validate()?;
        Ok(model)
    }

    /// Tied-baseline initialization: fresh `Φ`, `δᵢ = δ`, `τᵢ = (δ/α)·1`.
    pub fn init<R: Rng + ?Sized>(
        n: usize,
        m: usize,
        layers: usize,
        c: f64,
        delta: f64,
        alpha: f64,
        phi_init: PhiInit,
        rng: &mut R,
    ) -> Result<Self> {
        let phi = phi_init.draw(m, n, rng);
        Self::new(phi, DecoderParams::tied(n, layers, delta, delta / alpha), c)
    }

    pub fn n(&self) -> usize {
        self.phi.cols()
    }

    pub fn m(&self) -> usize {
        self.phi.rows()
    }

    pub fn layers(&self) -> usize {
        self.params.layers()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 || self.m() == 0 {
            return Err(Error::InvalidArgument("empty sensing matrix".into()));
        }
        if self.layers() == 0 {
            return Err(Error::InvalidArgument(
                "decoder needs at least one layer".into(),
            ));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sharpness c must be > 0, got {}",
                self.c
            )));
        }
        check_len(
            "Model: taus",
            self.params.deltas.len(),
            self.params.taus.len(),
        )?;
        for tau in &self.params.taus {
            check_len("Model: tau length", n, tau.len())?;
        }
        Ok(())
    }
}

/// Sign choices for the measurement code and for the shrinkage step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// `tanh(c·)` in both places; the only differentiable mode.
    TrainSmooth,
    /// Hard sign in both places.
    EvalHard,
    /// Hard code, smooth shrinkage sign.
    EvalHardCode,
}

impl Mode {
    pub fn code_sign(self, c: f64) -> SignKind {
        match self {
            Mode::TrainSmooth => SignKind::Smooth(c),
            Mode::EvalHard | Mode::EvalHardCode => SignKind::Hard,
        }
    }

    pub fn shrink_sign(self, c: f64) -> SignKind {
        match self {
            Mode::TrainSmooth | Mode::EvalHardCode => SignKind::Smooth(c),
            Mode::EvalHard => SignKind::Hard,
        }
    }
}

/// Intermediates of one layer's forward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub layer_index: usize,
    pub z_in: Vec<f64>,
    /// `Φz`.
    pub phi_z: Vec<f64>,
    /// `y = r ⊙ Φz`.
    pub y: Vec<f64>,
    /// `ρ(y)`.
    pub rho_y: Vec<f64>,
    pub d: Vec<f64>,
    /// `dᵀz`.
    pub d_dot_z: f64,
    pub delta: f64,
    pub t: Vec<f64>,
    /// `|t| − τ`, before the ReLU.
    pub abs_t_minus_tau: Vec<f64>,
    /// `σ(t)`.
    pub sign_t: Vec<f64>,
    pub shrink_sign: SignKind,
    pub v: Vec<f64>,
    pub norm_v: f64,
    pub out: Vec<f64>,
    /// Shrinkage zeroed every coordinate; `out` is `z_in`.
    pub degenerate: bool,
}

impl LayerCache {
    /// Rebuilds the layer output from the cached `t`, `abs_t_minus_tau` and `sign_t`.
    pub fn recompute_output(&self) -> Vec<f64> {
        if self.degenerate {
            return self.z_in.clone();
        }
        let v: Vec<f64> = self
            .sign_t
            .iter()
            .zip(&self.abs_t_minus_tau)
            .map(|(s, u)| s * relu(*u))
            .collect();
        let nv = norm2(&v);
        v.into_iter().map(|a| a / nv).collect()
    }
}

/// One decoder layer.
pub fn layer_forward(
    z: &[f64],
    phi: &Matrix,
    rcode: &[f64],
    delta: f64,
    tau: &[f64],
    shrink_sign: SignKind,
) -> Result<(Vec<f64>, LayerCache)> {
    check_len("layer_forward: z", phi.cols(), z.len())?;
    check_len("layer_forward: code", phi.rows(), rcode.len())?;
    check_len("layer_forward: tau", z.len(), tau.len())?;
    debug_assert!(
        (norm2(z) - 1.0).abs() < 1e-6,
        "layer input must be unit-norm"
    );

    let phi_z = matvec(phi, z)?;
    let y: Vec<f64> = rcode.iter().zip(&phi_z).map(|(r, w)| r * w).collect();
    let rho_y: Vec<f64> = y.iter().map(|&a| relu(-a)).collect();
    let weighted: Vec<f64> = rcode.iter().zip(&rho_y).map(|(r, p)| r * p).collect();
    let d: Vec<f64> = matvec_t(phi, &weighted)?.into_iter().map(|a| -a).collect();
    let d_dot_z = dot(&d, z);
    let scale = 1.0 + delta * d_dot_z;
    let t: Vec<f64> = z
        .iter()
        .zip(&d)
        .map(|(&zk, &dk)| scale * zk - delta * dk)
        .collect();
    let abs_t_minus_tau: Vec<f64> = t.iter().zip(tau).map(|(tk, th)| tk.abs() - th).collect();
    let sign_t: Vec<f64> = t.iter().map(|&a| shrink_sign.apply(a)).collect();
    let v: Vec<f64> = sign_t
        .iter()
        .zip(&abs_t_minus_tau)
        .map(|(s, u)| s * relu(*u))
        .collect();
    let norm_v = norm2(&v);
    let degenerate = !(norm_v >= DEGENERATE_EPS);
    let out = if degenerate {
        z.to_vec()
    } else {
        v.iter().map(|a| a / norm_v).collect()
    };
    let cache = LayerCache {
        layer_index: 0,
        z_in: z.to_vec(),
        phi_z,
        y,
        rho_y,
        d,
        d_dot_z,
        delta,
        t,
        abs_t_minus_tau,
        sign_t,
        shrink_sign,
        v,
        norm_v,
        out: out.clone(),
        degenerate,
    };
    Ok((out, cache))
}

/// Runs the first `layers` decoder layers (all of them when `None`).
pub fn decoder_forward(
    rcode: &[f64],
    model: &Model,
    x0: &[f64],
    shrink_sign: SignKind,
    layers: Option<usize>,
) -> Result<(Trajectory, Vec<LayerCache>)> {
    let total = model.layers();
    let depth = layers.unwrap_or(total);
    if depth > total {
        return Err(Error::InvalidArgument(format!(
            "requested {depth} layers but the decoder has {total}"
        )));
    }
    let mut traj = Trajectory::start(x0.to_vec());
    let mut caches = Vec::with_capacity(depth);
    for i in 0..depth {
        let (out, mut cache) = layer_forward(
            traj.final_iterate(),
            &model.phi,
            rcode,
            model.params.deltas[i],
            &model.params.taus[i],
            shrink_sign,
        )?;
        cache.layer_index = i;
        if cache.degenerate {
            traj.degenerate.push(i);
        }
        traj.iterates.push(out);
        caches.push(cache);
    }
    Ok((traj, caches))
}

/// Everything produced by encoding a signal and decoding its code.
#[derive(Debug, Clone)]
pub struct Autoencoded {
    pub code: Vec<f64>,
    /// `Φᵀr` before normalization.
    pub init_raw: Vec<f64>,
    pub trajectory: Trajectory,
    pub caches: Vec<LayerCache>,
}

/// Encode `x` with `model.phi`, start from `init_x0` and run every layer.
pub fn autoencode_full(x: &[f64], model: &Model, mode: Mode) -> Result<Autoencoded> {
    let code = encode_with(&model.phi, x, mode.code_sign(model.c))?;
    let init_raw = matvec_t(&model.phi, &code)?;
    let x0 = init_x0(&model.phi, &code)?;
    let (trajectory, caches) = decoder_forward(&code, model, &x0, mode.shrink_sign(model.c), None)?;
    Ok(Autoencoded {
        code,
        init_raw,
        trajectory,
        caches,
    })
}

/// `x̂ = f_dec ∘ f_enc(x)`; returns the full trajectory.
pub fn autoencode(x: &[f64], model: &Model, mode: Mode) -> Result<Trajectory> {
    autoencode_full(x, model, mode).map(|a| a.trajectory)
}
