//! Certifies [`crate::grad`] against central finite differences.
//!
//! The default estimate is the five-point central stencil
//! `(−f(θ+2h) + 8f(θ+h) − 8f(θ−h) + f(θ−2h)) / 12h` at `h = 1e−4`; the
//! three-point stencil at `h = 1e−6` loses partials of order 1e−6 to roundoff.
//!
//! A parameter is skipped when any stencil perturbation changes which branch any
//! piecewise-linear stage takes (ReLU in the consistency penalty, the sign of
//! `t`, the shrinkage ReLU, the degenerate guard, the positivity penalty).

use rand::Rng;

use crate::error::{Error, Result};
use crate::grad::{loss_backward, loss_forward, num_params, param_mut, LossForward};
use crate::linalg::norm2;
use crate::rfpi::DEGENERATE_EPS;
use crate::signals::{gen_sparse_signal, rng_from_seed};
use crate::unfolded::{Mode, Model, PhiInit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(θ+h) − f(θ−h)) / 2h`
    ThreePoint,
    /// `(−f(θ+2h) + 8f(θ+h) − 8f(θ−h) + f(θ−2h)) / 12h`
    FivePoint,
}

impl Stencil {
    fn offsets(self) -> &'static [(f64, f64)] {
        match self {
            Stencil::ThreePoint => &[(1.0, 0.5), (-1.0, -0.5)],
            Stencil::FivePoint => &[
                (2.0, -1.0 / 12.0),
                (1.0, 8.0 / 12.0),
                (-1.0, -8.0 / 12.0),
                (-2.0, 1.0 / 12.0),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub h: f64,
    pub stencil: Stencil,
    pub rel_tol: f64,
    /// Absolute tolerance used when the analytic partial is below `near_zero`.
    pub abs_tol: f64,
    pub near_zero: f64,
    /// Largest tolerated fraction of kink-skipped parameters.
    pub max_skip_fraction: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-4,
            stencil: Stencil::FivePoint,
            rel_tol: 1e-5,
            abs_tol: 1e-8,
            near_zero: 1e-6,
            max_skip_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamError {
    pub index: usize,
    pub label: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    /// Largest relative error among partials whose analytic value is not near zero.
    pub worst: Option<ParamError>,
    pub failures: Vec<ParamError>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn skip_fraction(&self) -> f64 {
        let total = self.checked + self.skipped;
        if total == 0 {
            0.0
        } else {
            self.skipped as f64 / total as f64
        }
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.failures.extend(other.failures);
    }
}

/// Human-readable name of a flat parameter index.
pub fn param_label(model: &Model, index: usize) -> String {
    let (m, n, layers) = (model.m(), model.n(), model.layers());
    if index < m * n {
        format!("phi[{},{}]", index / n, index % n)
    } else if index < m * n + layers {
        format!("delta[{}]", index - m * n)
    } else {
        let j = index - m * n - layers;
        format!("tau[{}][{}]", j / n, j % n)
    }
}

/// Which branch every piecewise stage took.
fn branch_signature(model: &Model, fwd: &LossForward) -> Vec<i8> {
    let mut sig = Vec::new();
    sig.push((norm2(&fwd.pass.init_raw) < DEGENERATE_EPS) as i8);
    for cache in &fwd.pass.caches {
        sig.push(cache.degenerate as i8);
        sig.extend(cache.y.iter().map(|&y| (y < 0.0) as i8));
        sig.extend(
            cache
                .t
                .iter()
                .map(|&t| t.partial_cmp(&0.0).map_or(2, |o| o as i8)),
        );
        sig.extend(cache.abs_t_minus_tau.iter().map(|&u| (u > 0.0) as i8));
    }
    sig.extend(model.params.deltas.iter().map(|&d| (d < 0.0) as i8));
    sig.extend(model.params.taus.iter().flatten().map(|&t| (t < 0.0) as i8));
    sig
}

/// Compares the analytic gradient with central differences on one signal.
///
/// `mutate` adds `1e-3` to the analytic partial at that flat index, to prove
/// the checker trips.
pub fn check_gradients(
    x: &[f64],
    model: &Model,
    weights: &[f64],
    lambda: f64,
    cfg: &GradCheckConfig,
    mutate: Option<usize>,
) -> Result<GradCheckReport> {
    let fwd = loss_forward(x, model, weights, lambda, Mode::TrainSmooth)?;
    let mut analytic = loss_backward(x, model, weights, lambda, &fwd)?.flat();
    if let Some(i) = mutate {
        let slot = analytic
            .get_mut(i)
            .ok_or_else(|| Error::InvalidArgument(format!("mutation index {i} out of range")))?;
        *slot += 1e-3;
    }
    let base_sig = branch_signature(model, &fwd);

    let mut report = GradCheckReport::default();
    let mut work = model.clone();
    for idx in 0..num_params(model) {
        let base = *param_mut(&mut work, idx);
        let mut numeric = 0.0;
        let mut crosses_kink = false;
        for &(k, coef) in cfg.stencil.offsets() {
            *param_mut(&mut work, idx) = base + k * cfg.h;
            let probe = loss_forward(x, &work, weights, lambda, Mode::TrainSmooth)?;
            crosses_kink |= branch_signature(&work, &probe) != base_sig;
            numeric += coef * probe.loss;
        }
        *param_mut(&mut work, idx) = base;
        let numeric = numeric / cfg.h;

        if crosses_kink {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        let a = analytic[idx];
        let abs_error = (a - numeric).abs();
        let scale = a.abs().max(numeric.abs());
        let rel_error = if scale > 0.0 { abs_error / scale } else { 0.0 };
        let near_zero = a.abs() < cfg.near_zero;
        let ok = if near_zero {
            abs_error <= cfg.abs_tol || rel_error <= cfg.rel_tol
        } else {
            rel_error <= cfg.rel_tol
        };
        let entry = || ParamError {
            index: idx,
            label: param_label(model, idx),
            analytic: a,
            numeric,
            rel_error,
            abs_error,
        };
        if !near_zero && rel_error > report.max_rel_error {
            report.max_rel_error = rel_error;
            report.worst = Some(entry());
        }
        if !ok {
            report.failures.push(entry());
        }
    }
    Ok(report)
}

/// A random small model plus one target signal.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub model: Model,
    pub x: Vec<f64>,
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub seed: u64,
}

impl Fixture {
    /// Random `Φ ~ N(0, 1/m)`, `δᵢ ∈ [0.5, 1.5]`, `τᵢₖ ∈ [0, 0.1]`, a signal of
    /// sparsity `max(1, n/4)` and random layer weights in `[0.5, 1.5]`.
    pub fn random(seed: u64, n: usize, m: usize, layers: usize, c: f64) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let mut model = Model::init(n, m, layers, c, 1.0, 20.0, PhiInit::Scaled, &mut rng)?;
        for d in model.params.deltas.iter_mut() {
            *d = rng.gen_range(0.5..1.5);
        }
        for t in model.params.taus.iter_mut().flatten() {
            *t = rng.gen_range(0.0..0.1);
        }
        let x = gen_sparse_signal(n, (n / 4).max(1), &mut rng)?.x;
        let weights = (0..layers).map(|_| rng.gen_range(0.5..1.5)).collect();
        Ok(Self {
            model,
            x,
            weights,
            lambda: 1.0,
            seed,
        })
    }

    pub fn check(&self, cfg: &GradCheckConfig, mutate: Option<usize>) -> Result<GradCheckReport> {
        check_gradients(
            &self.x,
            &self.model,
            &self.weights,
            self.lambda,
            cfg,
            mutate,
        )
    }
}

/// Checks a fixture, re-seeding (up to 16 times) while too many parameters sit on kinks.
pub fn check_fixture(
    seed: u64,
    n: usize,
    m: usize,
    layers: usize,
    c: f64,
    cfg: &GradCheckConfig,
    mutate: Option<usize>,
) -> Result<(Fixture, GradCheckReport)> {
    let mut last = None;
    for attempt in 0..16u64 {
        let fixture = Fixture::random(seed.wrapping_add(attempt * 0x1_0000), n, m, layers, c)?;
        let report = fixture.check(cfg, mutate)?;
        if report.skip_fraction() < cfg.max_skip_fraction {
            return Ok((fixture, report));
        }
        last = Some((fixture, report));
    }
    Ok(last.expect("at least one attempt"))
}
