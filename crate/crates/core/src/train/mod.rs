//! Mini-batch training with Adam and the four-case evaluation protocol.
//!
//! Every epoch draws a fresh batch of K-sparse signals, averages the per-signal
//! loss gradients and takes one Adam step. Per-signal passes may fan out over
//! a thread pool; their results are always reduced in batch order, so a seed
//! reproduces the same model bit for bit at any thread count.

mod adam;
mod eval;

pub use adam::{adam_step, AdamState, LearnMask};
pub use eval::{compare, evaluate_case, Case, CaseSources, EvalConfig, MseCurve};

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{loss_and_grad, GradientBundle};
use crate::io::save_checkpoint;
use crate::signals::{derived_seed, gen_sparse_signal, rng_from_seed, SparseSignal};
use crate::unfolded::{Model, PhiInit};

/// Seed stream for model initialization.
pub const STREAM_INIT: u64 = 0;
/// Seed stream for training batches.
pub const STREAM_BATCHES: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n: usize,
    pub m: usize,
    /// Decoder depth L.
    pub layers: usize,
    /// Training sparsity K.
    pub k: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Positivity-penalty weight. Adam rescales steps per parameter, so a
    /// parameter pushed onto zero overshoots by about `lr·g/√v`; a large `λ`
    /// inflates `v` for exactly those parameters and pins them at ≥ 0.
    pub lambda: f64,
    /// Per-layer loss weights; `None` means all ones.
    pub weights: Option<Vec<f64>>,
    pub seed: u64,
    pub learn_phi: bool,
    pub learn_delta: bool,
    pub learn_tau: bool,
    /// Smooth-sign sharpness.
    pub c: f64,
    /// Initial (and baseline) step-size.
    pub delta_init: f64,
    /// Initial (and baseline) penalty factor; thresholds start at `delta_init / alpha_init`.
    pub alpha_init: f64,
    pub phi_init: PhiInit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Desk-scale run: n=32, m=128, L=10, K=4, batch 32, 1500 epochs.
    pub fn desk() -> Self {
        Self {
            n: 32,
            m: 128,
            layers: 10,
            k: 4,
            lr: 1e-3,
            batch_size: 32,
            epochs: 1500,
            lambda: 100.0,
            weights: None,
            seed: 7,
            learn_phi: true,
            learn_delta: true,
            learn_tau: true,
            c: 100.0,
            delta_init: 1.0,
            alpha_init: 20.0,
            phi_init: PhiInit::Scaled,
        }
    }

    /// Full-size run: n=128, m=512, L=30, K=16, batch 64, 8000 epochs.
    pub fn full_scale() -> Self {
        Self {
            n: 128,
            m: 512,
            layers: 30,
            k: 16,
            batch_size: 64,
            epochs: 8000,
            ..Self::desk()
        }
    }

    pub fn mask(&self) -> LearnMask {
        LearnMask {
            phi: self.learn_phi,
            delta: self.learn_delta,
            tau: self.learn_tau,
        }
    }

    pub fn with_mask(mut self, mask: LearnMask) -> Self {
        self.learn_phi = mask.phi;
        self.learn_delta = mask.delta;
        self.learn_tau = mask.tau;
        self
    }

    pub fn layer_weights(&self) -> Vec<f64> {
        self.weights
            .clone()
            .unwrap_or_else(|| vec![1.0; self.layers])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n == 0 || self.m == 0 || self.layers == 0 || self.batch_size == 0 {
            return bad("n, m, layers and batch_size must be positive".into());
        }
        if self.k == 0 || self.k > self.n {
            return bad(format!(
                "k must satisfy 1 <= k <= n (k = {}, n = {})",
                self.k, self.n
            ));
        }
        for (name, v) in [
            ("lr", self.lr),
            ("lambda", self.lambda),
            ("c", self.c),
            ("delta_init", self.delta_init),
            ("alpha_init", self.alpha_init),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.layers {
                return bad(format!(
                    "weights has {} entries, expected {}",
                    w.len(),
                    self.layers
                ));
            }
            if w.iter().any(|a| !a.is_finite() || *a < 0.0) {
                return bad("weights must be finite and non-negative".into());
            }
        }
        Ok(())
    }

    /// The tied-baseline model this configuration starts from.
    pub fn init_model(&self) -> Result<Model> {
        self.validate()?;
        let mut rng = rng_from_seed(derived_seed(self.seed, STREAM_INIT));
        Model::init(
            self.n,
            self.m,
            self.layers,
            self.c,
            self.delta_init,
            self.alpha_init,
            self.phi_init,
            &mut rng,
        )
    }
}

/// Execution and checkpointing knobs that do not change results.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Worker threads for per-signal passes; 0 or 1 runs inline.
    pub threads: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Write `checkpoint-<epoch>.txt` every this many epochs (0 disables).
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub adam: AdamState,
    /// Batch-mean loss per epoch, measured before that epoch's update.
    pub losses: Vec<f64>,
}

/// Mean loss and gradient over a batch, reduced in batch order.
pub fn batch_gradient(
    model: &Model,
    batch: &[SparseSignal],
    weights: &[f64],
    lambda: f64,
    pool: Option<&rayon::ThreadPool>,
) -> Result<(f64, GradientBundle)> {
    let one = |s: &SparseSignal| loss_and_grad(&s.x, model, weights, lambda);
    let per_signal: Vec<(f64, GradientBundle)> = match pool {
        Some(pool) => pool.install(|| batch.par_iter().map(one).collect::<Result<_>>())?,
        None => batch.iter().map(one).collect::<Result<_>>()?,
    };
    let mut total = GradientBundle::zeros_like(model);
    let mut loss = 0.0;
    for (l, g) in &per_signal {
        loss += l;
        total.add_assign(g);
    }
    let scale = 1.0 / batch.len() as f64;
    total.scale(scale);
    Ok((loss * scale, total))
}

fn build_pool(threads: usize) -> Result<Option<rayon::ThreadPool>> {
    if threads <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Trains from the configuration's tied-baseline initialization.
pub fn train(cfg: &TrainConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    train_with(cfg, opts, |_, _| {})
}

/// [`train`] with a per-epoch callback `(epoch, batch_loss)`.
pub fn train_with(
    cfg: &TrainConfig,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    let mut model = cfg.init_model()?;
    let mut adam = AdamState::new(&model);
    let weights = cfg.layer_weights();
    let mask = cfg.mask();
    let pool = build_pool(opts.threads)?;
    let mut rng = rng_from_seed(derived_seed(cfg.seed, STREAM_BATCHES));
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let batch = (0..cfg.batch_size)
            .map(|_| gen_sparse_signal(cfg.n, cfg.k, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let (loss, grads) = batch_gradient(&model, &batch, &weights, cfg.lambda, pool.as_ref())?;
        if !loss.is_finite() || !grads.is_finite() {
            if let Some(dir) = &opts.checkpoint_dir {
                save_checkpoint(&dir.join("checkpoint-nonfinite.txt"), &model, &adam)?;
            }
            return Err(Error::NonFiniteLoss { epoch });
        }
        adam_step(&mut model, &grads, &mut adam, cfg.lr, mask);
        losses.push(loss);
        on_epoch(epoch, loss);
        if let Some(dir) = &opts.checkpoint_dir {
            if opts.checkpoint_every > 0 && (epoch + 1) % opts.checkpoint_every == 0 {
                save_checkpoint(
                    &dir.join(format!("checkpoint-{}.txt", epoch + 1)),
                    &model,
                    &adam,
                )?;
            }
        }
    }
    Ok(TrainOutcome {
        model,
        adam,
        losses,
    })
}

/// Means of consecutive non-overlapping windows of `window` epochs.
pub fn window_means(losses: &[f64], window: usize) -> Vec<f64> {
    losses
        .chunks_exact(window.max(1))
        .map(|w| w.iter().sum::<f64>() / w.len() as f64)
        .collect()
}
