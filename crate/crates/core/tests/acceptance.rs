//! Acceptance suite. Each test prints one `PASS`/`FAIL` line; run with
//! `cargo test -p onebit-core --test acceptance -- --nocapture` to see them.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use onebit_core::encoder::{encode_hard, SignKind};
use onebit_core::grad::{loss_forward, normalize_backward, positivity_penalty};
use onebit_core::gradcheck::{check_fixture, GradCheckConfig, GradCheckReport};
use onebit_core::io::model_to_string;
use onebit_core::linalg::{dot, norm2, Matrix};
use onebit_core::rfpi::{init_x0, rfpi_solve, RfpiConfig};
use onebit_core::signals::{gen_sparse_signal, rng_from_seed};
use onebit_core::train::{
    compare, train, window_means, Case, CaseSources, EvalConfig, LearnMask, MseCurve, TrainConfig,
    TrainOptions, TrainOutcome,
};
use onebit_core::unfolded::{autoencode, layer_forward, DecoderParams, Mode, Model, PhiInit};
use rand::Rng;

fn report(name: &str, ok: bool, detail: &str) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

const EVAL_SEED: u64 = 20_240;

struct Desk {
    full: TrainOutcome,
    phi_only: TrainOutcome,
    tau_only: TrainOutcome,
    elapsed: Duration,
}

fn desk_config() -> TrainConfig {
    TrainConfig::desk()
}

fn sequential() -> TrainOptions {
    TrainOptions {
        threads: 1,
        ..Default::default()
    }
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let start = Instant::now();
        let cfg = desk_config();
        let full = train(&cfg, &sequential()).expect("full run");
        let phi_only =
            train(&cfg.clone().with_mask(LearnMask::PHI_ONLY), &sequential()).expect("phi run");
        let tau_only =
            train(&cfg.clone().with_mask(LearnMask::TAU_ONLY), &sequential()).expect("tau run");
        Desk {
            full,
            phi_only,
            tau_only,
            elapsed: start.elapsed(),
        }
    })
}

fn desk_curve(k: usize) -> MseCurve {
    let d = desk();
    let cfg = EvalConfig {
        baseline: RfpiConfig::new(1.0, 20.0, d.full.model.layers()).unwrap(),
        trials: 128,
        k,
        seed: EVAL_SEED,
        phi_init: PhiInit::Scaled,
        mode: Mode::EvalHard,
        threads: 1,
    };
    let sources = CaseSources {
        phi_source: &d.phi_only.model,
        tau_source: &d.tau_only.model,
        full: &d.full.model,
    };
    compare(sources, &cfg).expect("evaluation")
}

#[test]
fn gradient_certification() {
    let start = Instant::now();
    let cfg = GradCheckConfig::default();
    let mut total = GradCheckReport::default();
    let mut max_skip: f64 = 0.0;
    for f in 0..20u64 {
        let n = 4 + (f as usize % 5);
        let m = (2 * n).min(16);
        let layers = 1 + (f as usize % 3);
        let (_, r) = check_fixture(1000 + f, n, m, layers, 10.0, &cfg, None).unwrap();
        max_skip = max_skip.max(r.skip_fraction());
        total.merge(r);
    }
    let elapsed = start.elapsed();
    let ok = total.passed() && elapsed < Duration::from_secs(60);
    report(
        "gradient certification",
        ok,
        &format!(
            "20 fixtures, {} partials checked, {} kink-skipped (max {:.0}% per fixture), {} mismatches, max rel error {:.2e}, {:.2?}",
            total.checked,
            total.skipped,
            100.0 * max_skip,
            total.failures.len(),
            total.max_rel_error,
            elapsed
        ),
    );
    assert!(ok, "{:?}", total.failures);
}

#[test]
fn tied_parameter_equivalence() {
    let start = Instant::now();
    let (n, m, layers) = (16, 64, 10);
    let baseline = RfpiConfig::new(1.0, 20.0, layers).unwrap();
    let mut worst: f64 = 0.0;
    for inst in 0..100u64 {
        let mut rng = rng_from_seed(500 + inst);
        let phi = PhiInit::Scaled.draw(m, n, &mut rng);
        let x = gen_sparse_signal(n, 1 + (inst as usize % 4), &mut rng)
            .unwrap()
            .x;
        let params = DecoderParams::tied(n, layers, baseline.delta, baseline.tau());
        let model = Model::new(phi, params, 100.0).unwrap();
        let unfolded = autoencode(&x, &model, Mode::EvalHard).unwrap();
        let r = encode_hard(&model.phi, &x).unwrap();
        let reference =
            rfpi_solve(&r, &model.phi, &baseline, &init_x0(&model.phi, &r).unwrap()).unwrap();
        assert_eq!(unfolded.iterates.len(), reference.iterates.len());
        for (a, b) in unfolded.iterates.iter().zip(&reference.iterates) {
            for (p, q) in a.iter().zip(b) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-10 && elapsed < Duration::from_secs(10);
    report(
        "tied-parameter equivalence",
        ok,
        &format!("100 instances, max coordinate difference {worst:.2e}, {elapsed:.2?}"),
    );
    assert!(ok);
}

#[test]
fn shrinkage_and_normalization_invariants() {
    let start = Instant::now();
    let mut rng = rng_from_seed(77);
    let (mut worst_norm, mut worst_orth): (f64, f64) = (0.0, 0.0);
    let (mut shrink_errors, mut degenerate) = (0usize, 0usize);
    for _ in 0..10_000 {
        let n = rng.gen_range(2..=24);
        let m = rng.gen_range(n..=4 * n);
        let phi = PhiInit::Scaled.draw(m, n, &mut rng);
        let x = gen_sparse_signal(n, rng.gen_range(1..=n.min(4)), &mut rng)
            .unwrap()
            .x;
        let z = gen_sparse_signal(n, n, &mut rng).unwrap().x;
        let r = encode_hard(&phi, &x).unwrap();
        let delta = rng.gen_range(0.05..2.0);
        let tau: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.3)).collect();
        let (out, cache) = layer_forward(&z, &phi, &r, delta, &tau, SignKind::Hard).unwrap();

        for k in 0..n {
            let t = cache.t[k];
            let v = cache.v[k];
            let exact = if t.abs() <= tau[k] {
                v == 0.0
            } else {
                v == t.signum() * (t.abs() - tau[k]) && v.abs() <= t.abs()
            };
            shrink_errors += usize::from(!exact);
        }
        if cache.degenerate {
            degenerate += 1;
            assert_eq!(out, z);
            continue;
        }
        worst_norm = worst_norm.max((norm2(&out) - 1.0).abs());
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g_v = normalize_backward(&out, cache.norm_v, &g);
        worst_orth = worst_orth.max(dot(&g_v, &out).abs() / norm2(&g_v).max(1.0));
    }
    let elapsed = start.elapsed();
    let ok = worst_norm <= 1e-9
        && shrink_errors == 0
        && worst_orth <= 1e-10
        && degenerate < 100
        && elapsed < Duration::from_secs(60);
    report(
        "shrinkage/normalization invariants",
        ok,
        &format!(
            "10^4 layer inputs ({degenerate} all-zero), max |‖out‖−1| {worst_norm:.2e}, {shrink_errors} shrinkage mismatches, max normalized adjoint·out {worst_orth:.2e}, {elapsed:.2?}"
        ),
    );
    assert!(ok);
}

#[test]
fn desk_scale_learning_gain() {
    let d = desk();
    let curve = desk_curve(4);
    let [c1, c2, c3, c4] = Case::ALL.map(|c| curve.final_mse(c));
    let ok = c4 <= 0.5 * c1 && c2 < c1 && c3 < c1 && d.elapsed < Duration::from_secs(30 * 60);
    report(
        "desk-scale learning gain",
        ok,
        &format!(
            "K=4, 128 trials, final MSE case1 {c1:.4} case2 {c2:.4} case3 {c3:.4} case4 {c4:.4} (ratio {:.1}x), three trainings in {:.2?}",
            c1 / c4,
            d.elapsed
        ),
    );

    // Training loss should settle: no later window of the second half well above an earlier one.
    let windows = window_means(&d.full.losses, 100);
    let half = &windows[windows.len() / 2..];
    let worst_rise = half.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    let trend_ok = worst_rise <= 1.05 && windows.last() < windows.first();
    report(
        "desk-scale loss trend",
        trend_ok,
        &format!(
            "first 100-epoch mean {:.4}, last {:.4}, worst late window ratio {worst_rise:.3}",
            windows[0],
            windows[windows.len() - 1]
        ),
    );
    assert!(ok && trend_ok);
}

#[test]
fn generalization_to_denser_signals() {
    let curve = desk_curve(6);
    let (c1, c4) = (
        curve.final_mse(Case::RandomPhi),
        curve.final_mse(Case::Full),
    );
    let ok = c4 < c1;
    report(
        "generalization probe",
        ok,
        &format!("trained at K=4, evaluated at K=6: final MSE case1 {c1:.4} case4 {c4:.4}"),
    );
    assert!(ok);
}

#[test]
fn positivity_regularizer() {
    let d = desk();
    let learned = [&d.full.model, &d.phi_only.model, &d.tau_only.model];
    let min = learned
        .iter()
        .map(|m| m.params.min_value())
        .fold(f64::INFINITY, f64::min);

    // Frozen elsewhere: only the penalty sees δ₀ on a perfectly reconstructed instance.
    let phi = Matrix::from_rows(&[
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
        vec![1.0, 0.0, 0.0],
    ])
    .unwrap();
    let mut model = Model::new(phi, DecoderParams::tied(3, 2, 0.0, 0.0), 1e4).unwrap();
    let x = [1.0, 0.0, 0.0];
    let base = loss_forward(&x, &model, &[1.0, 1.0], 1.0, Mode::TrainSmooth)
        .unwrap()
        .loss;
    model.params.deltas[0] = -0.3;
    let bumped = loss_forward(&x, &model, &[1.0, 1.0], 1.0, Mode::TrainSmooth)
        .unwrap()
        .loss;

    // Same injection on the trained model, penalty term only.
    let mut trained = d.full.model.clone();
    let before = positivity_penalty(&trained, 1.0);
    trained.params.deltas[0] = -0.3;
    let after = positivity_penalty(&trained, 1.0);

    let ok = min >= -1e-6 && bumped - base == 0.3 && before == 0.0 && after == 0.3;
    report(
        "positivity regularizer",
        ok,
        &format!(
            "min learned δ/τ {min:.3e}; δ₀=−0.3 raises loss by {} (instance) and penalty by {} (trained model)",
            bumped - base,
            after - before
        ),
    );
    assert!(ok);
}

#[test]
fn sequential_training_is_deterministic() {
    let first = &desk().full.model;
    let start = Instant::now();
    let second = train(&desk_config(), &sequential()).unwrap().model;
    let (a, b) = (model_to_string(first), model_to_string(&second));
    let ok = a == b;
    report(
        "determinism",
        ok,
        &format!(
            "two sequential desk runs, model files {} ({} bytes), rerun {:.2?}",
            if ok { "identical" } else { "differ" },
            a.len(),
            start.elapsed()
        ),
    );
    assert!(ok);
}
