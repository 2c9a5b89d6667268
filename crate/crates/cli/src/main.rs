//! `onebit`: train and evaluate unfolded one-bit compressive-sensing autoencoders.

mod config;
mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use onebit_core::grad::{num_params, param_mut};
use onebit_core::gradcheck::{check_fixture, param_label, GradCheckConfig, GradCheckReport};
use onebit_core::io::{load_model, save_model, write_csv};
use onebit_core::rfpi::RfpiConfig;
use onebit_core::signals::{gen_sparse_signal, rng_from_seed, write_signals};

use onebit_core::train::{compare, CaseSources, EvalConfig, LearnMask};
use onebit_core::train::{train_with, TrainConfig, TrainOptions};
use onebit_core::unfolded::{Mode, Model};

use config::{ensure_dir, load_config, preset, ConfigOverrides, PhiInitArg, Preset, OUT_DIR_ENV};
use manifest::RunManifest;

/// Errors mapped onto exit codes: usage/config problems exit 2, everything else 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl From<onebit_core::Error> for CliError {
    fn from(e: onebit_core::Error) -> Self {
        use onebit_core::Error as E;
        match e {
            E::DimensionMismatch { .. } | E::InvalidArgument(_) | E::Parse { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Failure(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "onebit",
    version,
    about = "Unfolded one-bit compressive-sensing autoencoder",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write random unit-norm K-sparse signals as CSV, one per line.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long = "k", short = 'K')]
        k: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train models and write them with a loss log and run manifest.
    Train {
        /// TOML config file (or a previous run's manifest.toml).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Built-in configuration used when no config file is given.
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        #[command(flatten)]
        overrides: ConfigOverrides,
        /// Which runs to perform.
        #[arg(long, value_enum, default_value = "all")]
        cases: TrainCases,
        #[arg(long, env = OUT_DIR_ENV, default_value = "runs")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Save a checkpoint every this many epochs (0 disables).
        #[arg(long, default_value_t = 0)]
        checkpoint_every: usize,
        /// Print the loss every this many epochs (0 disables).
        #[arg(long, default_value_t = 100)]
        log_every: usize,
    },
    /// Per-iteration MSE of the four comparison cases, as CSV.
    Compare {
        /// Directory written by `train --cases all`.
        #[arg(long, conflicts_with_all = ["model", "phi_model", "tau_model"])]
        run_dir: Option<PathBuf>,
        /// Fully trained model (Case 4, and Case 1 dimensions).
        #[arg(long, required_unless_present = "run_dir")]
        model: Option<PathBuf>,
        /// Model whose Φ is used in Case 2.
        #[arg(long, requires = "model")]
        phi_model: Option<PathBuf>,
        /// Model whose thresholds are used in Case 3.
        #[arg(long, requires = "model")]
        tau_model: Option<PathBuf>,
        /// Take Φ and thresholds for Cases 2 and 3 from the full model when no separate model is given.
        #[arg(long)]
        slice_from_full: bool,
        /// Baseline step-size.
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        /// Baseline penalty factor.
        #[arg(long, default_value_t = 20.0)]
        alpha: f64,
        #[arg(long, default_value_t = 128)]
        trials: usize,
        #[arg(long = "k", short = 'K', default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "scaled")]
        phi_init: PhiInitArg,
        #[arg(long, value_enum, default_value = "hard")]
        mode: EvalMode,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients on random fixtures.
    Gradcheck {
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value_t = 12)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        layers: usize,
        #[arg(long, default_value_t = 10.0)]
        c: f64,
        #[arg(long, default_value_t = 20)]
        fixtures: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturb one analytic partial; the check must then fail.
        #[arg(long)]
        break_analytic: bool,
    },
    /// Print a readable summary of a model file.
    Export {
        #[arg(long)]
        model: PathBuf,
        /// Also print every parameter.
        #[arg(long)]
        full: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TrainCases {
    /// Only the configured run.
    Full,
    /// Learn Φ only.
    Phi,
    /// Learn thresholds only.
    Tau,
    /// The configured run plus the Φ-only and threshold-only runs.
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EvalMode {
    /// Hard sign in the encoder and in shrinkage.
    Hard,
    /// Hard sign in the encoder only.
    HardCode,
}

const GRADCHECK_LIMIT: usize = 10_000;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen {
            n,
            k,
            count,
            seed,
            out,
        } => cmd_gen(n, k, count, seed, out.as_deref()),
        Command::Train {
            config,
            preset: p,
            overrides,
            cases,
            out_dir,
            threads,
            checkpoint_every,
            log_every,
        } => {
            let base = match &config {
                Some(path) => load_config(path),
                None => Ok(preset(p)),
            };
            base.and_then(|mut cfg| {
                overrides.apply(&mut cfg);
                cmd_train(cfg, cases, &out_dir, threads, checkpoint_every, log_every)
            })
        }
        Command::Compare {
            run_dir,
            model,
            phi_model,
            tau_model,
            slice_from_full,
            delta,
            alpha,
            trials,
            k,
            seed,
            phi_init,
            mode,
            threads,
            out,
        } => {
            let (full, phi, tau) = match run_dir {
                Some(dir) => (
                    dir.join("model.txt"),
                    Some(dir.join("model-phi.txt")),
                    Some(dir.join("model-tau.txt")),
                ),
                None => (model.expect("required by clap"), phi_model, tau_model),
            };
            let mode = match mode {
                EvalMode::Hard => Mode::EvalHard,
                EvalMode::HardCode => Mode::EvalHardCode,
            };
            cmd_compare(
                &full,
                phi.as_deref(),
                tau.as_deref(),
                slice_from_full,
                EvalArgs {
                    delta,
                    alpha,
                    trials,
                    k,
                    seed,
                    phi_init,
                    mode,
                    threads,
                },
                out.as_deref(),
            )
        }
        Command::Gradcheck {
            n,
            m,
            layers,
            c,
            fixtures,
            seed,
            break_analytic,
        } => cmd_gradcheck(n, m, layers, c, fixtures, seed, break_analytic),
        Command::Export { model, full } => cmd_export(&model, full),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Failure(format!("{}: {e}", path.display()))
}

fn with_output(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> CliResult) -> CliResult {
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| io_err(path, e))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(|e| io_err(path, e))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)
        }
    }
}

fn cmd_gen(n: usize, k: usize, count: usize, seed: u64, out: Option<&Path>) -> CliResult {
    let mut rng = rng_from_seed(seed);
    let signals = (0..count)
        .map(|_| gen_sparse_signal(n, k, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    with_output(out, |w| Ok(write_signals(w, &signals)?))
}

fn cmd_train(
    cfg: TrainConfig,
    cases: TrainCases,
    out_dir: &Path,
    threads: usize,
    checkpoint_every: usize,
    log_every: usize,
) -> CliResult {
    cfg.validate()?;
    let dir = ensure_dir(out_dir)?;
    let runs: Vec<(&str, TrainConfig)> = match cases {
        TrainCases::Full => vec![("", cfg.clone())],
        TrainCases::Phi => vec![("-phi", cfg.clone().with_mask(LearnMask::PHI_ONLY))],
        TrainCases::Tau => vec![("-tau", cfg.clone().with_mask(LearnMask::TAU_ONLY))],
        TrainCases::All => vec![
            ("", cfg.clone()),
            ("-phi", cfg.clone().with_mask(LearnMask::PHI_ONLY)),
            ("-tau", cfg.clone().with_mask(LearnMask::TAU_ONLY)),
        ],
    };
    let labels = runs
        .iter()
        .map(|(s, _)| match *s {
            "" => "full".to_string(),
            s => s.trim_start_matches('-').to_string(),
        })
        .collect();
    let mut manifest = RunManifest::new(cfg, labels, threads, &dir);
    for (suffix, _) in &runs {
        let model = dir.join(format!("model{suffix}.txt"));
        let loss = dir.join(format!("loss{suffix}.csv"));
        manifest.outputs.models.push(model.display().to_string());
        manifest.outputs.loss_logs.push(loss.display().to_string());
    }
    let manifest_path = dir.join("manifest.toml");
    manifest.write(&manifest_path)?;

    let total = Instant::now();
    for (i, (suffix, run_cfg)) in runs.iter().enumerate() {
        let opts = TrainOptions {
            threads,
            checkpoint_dir: Some(dir.clone()),
            checkpoint_every,
        };
        let started = Instant::now();
        let name = manifest.cases[i].clone();
        let outcome = train_with(run_cfg, &opts, |epoch, loss| {
            if log_every > 0 && (epoch + 1) % log_every == 0 {
                eprintln!("[{name}] epoch {:>6}  loss {loss:.6e}", epoch + 1);
            }
        });
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => {
                manifest.status = "failed".into();
                manifest.write(&manifest_path)?;
                return Err(e.into());
            }
        };
        manifest
            .timings
            .train_seconds
            .push(started.elapsed().as_secs_f64());
        let model_path = dir.join(format!("model{suffix}.txt"));
        save_model(&model_path, &outcome.model)?;
        let loss_path = dir.join(format!("loss{suffix}.csv"));
        let rows: Vec<Vec<f64>> = outcome.losses.iter().map(|&l| vec![l]).collect();
        let file = File::create(&loss_path).map_err(|e| io_err(&loss_path, e))?;
        let mut w = BufWriter::new(file);
        write_csv(&mut w, &["epoch", "loss"], &rows, true)?;
        w.flush().map_err(|e| io_err(&loss_path, e))?;
        eprintln!("[{name}] wrote {}", model_path.display());
    }
    manifest.timings.total_seconds = total.elapsed().as_secs_f64();
    manifest.status = "complete".into();
    manifest.write(&manifest_path)
}

struct EvalArgs {
    delta: f64,
    alpha: f64,
    trials: usize,
    k: usize,
    seed: u64,
    phi_init: PhiInitArg,
    mode: Mode,
    threads: usize,
}

fn load(path: &Path) -> CliResult<Model> {
    load_model(path)
        .map_err(|e| CliError::Usage(format!("cannot load model {}: {e}", path.display())))
}

fn cmd_compare(
    full: &Path,
    phi: Option<&Path>,
    tau: Option<&Path>,
    slice_from_full: bool,
    args: EvalArgs,
    out: Option<&Path>,
) -> CliResult {
    if (phi.is_none() || tau.is_none()) && !slice_from_full {
        return Err(CliError::Usage(
            "Cases 2 and 3 need --phi-model and --tau-model (or --run-dir); pass --slice-from-full to reuse the full model".into(),
        ));
    }
    let full_model = load(full)?;
    let phi_model = phi.map(load).transpose()?;
    let tau_model = tau.map(load).transpose()?;
    let sources = CaseSources {
        phi_source: phi_model.as_ref().unwrap_or(&full_model),
        tau_source: tau_model.as_ref().unwrap_or(&full_model),
        full: &full_model,
    };
    let cfg = EvalConfig {
        baseline: RfpiConfig::new(args.delta, args.alpha, full_model.layers())?,
        trials: args.trials,
        k: args.k,
        seed: args.seed,
        phi_init: args.phi_init.into(),
        mode: args.mode,
        threads: args.threads,
    };
    let curve = compare(sources, &cfg)?;
    with_output(out, |w| Ok(curve.write_csv(w)?))
}

fn cmd_gradcheck(
    n: usize,
    m: usize,
    layers: usize,
    c: f64,
    fixtures: usize,
    seed: u64,
    break_analytic: bool,
) -> CliResult {
    let size = n.saturating_mul(m).saturating_mul(layers);
    if size > GRADCHECK_LIMIT {
        return Err(CliError::Usage(format!(
            "n*m*L = {size} exceeds the finite-difference limit of {GRADCHECK_LIMIT}"
        )));
    }
    if n == 0 || m == 0 || layers == 0 || fixtures == 0 {
        return Err(CliError::Usage(
            "n, m, layers and fixtures must be positive".into(),
        ));
    }
    let cfg = GradCheckConfig::default();
    let mut total = GradCheckReport::default();
    let mut worst_label = None;
    for f in 0..fixtures {
        let fseed = seed.wrapping_add(f as u64);
        // Break a step-size partial; those are rarely kink-skipped.
        let mutate = break_analytic.then(|| m * n + f % layers);
        let (fixture, report) = check_fixture(fseed, n, m, layers, c, &cfg, mutate)?;
        if let Some(first) = report.failures.first() {
            if worst_label.is_none() {
                worst_label = Some(format!("fixture seed {}: {}", fixture.seed, first.label));
            }
        }
        total.merge(report);
    }
    println!(
        "checked {} partials, skipped {} ({:.1}%), max relative error {:.3e}",
        total.checked,
        total.skipped,
        100.0 * total.skip_fraction(),
        total.max_rel_error
    );
    if let Some(w) = &total.worst {
        println!(
            "worst: {} analytic {:.6e} numeric {:.6e}",
            w.label, w.analytic, w.numeric
        );
    }
    if total.passed() {
        println!("PASS");
        Ok(())
    } else {
        let worst = total
            .failures
            .iter()
            .max_by(|a, b| a.abs_error.total_cmp(&b.abs_error))
            .expect("non-empty");
        println!("FAIL: {} mismatching partials", total.failures.len());
        Err(CliError::Failure(format!(
            "gradient mismatch at {} (analytic {:.6e}, numeric {:.6e}); first failure in {}",
            worst.label,
            worst.analytic,
            worst.numeric,
            worst_label.unwrap_or_default()
        )))
    }
}

fn stats(v: impl IntoIterator<Item = f64>) -> (f64, f64, f64, f64) {
    let (mut min, mut max, mut sum, mut sq, mut count) =
        (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0.0, 0usize);
    for x in v {
        min = min.min(x);
        max = max.max(x);
        sum += x;
        sq += x * x;
        count += 1;
    }
    let mean = sum / count as f64;
    let var = (sq / count as f64 - mean * mean).max(0.0);
    (min, mean, max, var.sqrt())
}

fn cmd_export(path: &Path, full: bool) -> CliResult {
    let model = load(path)?;
    let (n, m, layers) = (model.n(), model.m(), model.layers());
    println!("model       {}", path.display());
    println!("dimensions  n = {n}, m = {m}, layers = {layers}");
    println!("sharpness   c = {}", model.c);
    println!("parameters  {}", num_params(&model));
    let (min, mean, max, std) = stats(model.phi.as_slice().iter().copied());
    let fro = model
        .phi
        .as_slice()
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    println!("phi         min {min:.4e}  mean {mean:.4e}  max {max:.4e}  std {std:.4e}  frobenius {fro:.4e}");
    println!("layer  delta         tau.min       tau.mean      tau.max");
    for (i, (d, t)) in model
        .params
        .deltas
        .iter()
        .zip(&model.params.taus)
        .enumerate()
    {
        let (tmin, tmean, tmax, _) = stats(t.iter().copied());
        println!("{i:>5}  {d:<12.6e}  {tmin:<12.6e}  {tmean:<12.6e}  {tmax:<12.6e}");
    }
    if full {
        let mut scratch = model.clone();
        for i in 0..num_params(&model) {
            println!(
                "{} = {:.16e}",
                param_label(&model, i),
                *param_mut(&mut scratch, i)
            );
        }
    }
    Ok(())
}
