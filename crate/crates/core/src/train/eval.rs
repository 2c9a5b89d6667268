use rayon::prelude::*;

use crate::encoder::encode_hard;
use crate::error::{check_len, Error, Result};
use crate::io::{read_csv, write_csv};
use crate::rfpi::{init_x0, rfpi_solve, rfpi_solve_schedule, RfpiConfig, Trajectory};
use crate::signals::{derived_seed, gen_sparse_signal, mse, rng_from_seed};
use crate::unfolded::{autoencode, Mode, Model, PhiInit};

/// The four comparison scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// Fixed-(δ, α) iterations with a fresh random `Φ`.
    RandomPhi = 1,
    /// Fixed-(δ, α) iterations with the learned `Φ`.
    LearnedPhi = 2,
    /// Fresh random `Φ`, learned `τᵢ`, fixed `δ`.
    LearnedTau = 3,
    /// The trained autoencoder.
    Full = 4,
}

impl Case {
    pub const ALL: [Case; 4] = [
        Case::RandomPhi,
        Case::LearnedPhi,
        Case::LearnedTau,
        Case::Full,
    ];

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Case::RandomPhi),
            2 => Ok(Case::LearnedPhi),
            3 => Ok(Case::LearnedTau),
            4 => Ok(Case::Full),
            _ => Err(Error::InvalidArgument(format!(
                "case must be 1..=4, got {id}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Fixed (δ, α) shared by Cases 1–3; `iters` must equal the decoder depth.
    pub baseline: RfpiConfig,
    pub trials: usize,
    /// Evaluation sparsity.
    pub k: usize,
    pub seed: u64,
    /// Distribution of the fresh matrices in Cases 1 and 3.
    pub phi_init: PhiInit,
    /// Decoder mode for Case 4.
    pub mode: Mode,
    pub threads: usize,
}

/// Mean squared error per iteration for each case; index `i` is the output of iteration `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MseCurve {
    pub cases: [Vec<f64>; 4],
}

impl MseCurve {
    pub fn len(&self) -> usize {
        self.cases[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn case(&self, case: Case) -> &[f64] {
        &self.cases[case as usize - 1]
    }

    pub fn final_mse(&self, case: Case) -> f64 {
        *self.case(case).last().expect("non-empty curve")
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| self.cases.iter().map(|c| c[i]).collect())
            .collect()
    }

    pub const HEADER: [&'static str; 5] = ["iter", "case1", "case2", "case3", "case4"];

    pub fn write_csv<W: std::io::Write + ?Sized>(&self, out: &mut W) -> Result<()> {
        write_csv(out, &Self::HEADER, &self.rows(), true)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (header, rows) = read_csv(text)?;
        if header != Self::HEADER {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected header {header:?}"),
            });
        }
        let mut cases: [Vec<f64>; 4] = Default::default();
        for (i, row) in rows.iter().enumerate() {
            if row[0] != i as f64 {
                return Err(Error::Parse {
                    line: i + 2,
                    msg: format!("iteration index {} out of order", row[0]),
                });
            }
            for (c, v) in cases.iter_mut().zip(&row[1..]) {
                c.push(*v);
            }
        }
        Ok(Self { cases })
    }
}

/// Models supplying the learned quantities: Case 2 reads `phi_source.phi`,
/// Case 3 reads `tau_source.params.taus`, Case 4 runs `full` as is.
#[derive(Debug, Clone, Copy)]
pub struct CaseSources<'a> {
    pub phi_source: &'a Model,
    pub tau_source: &'a Model,
    pub full: &'a Model,
}

impl<'a> CaseSources<'a> {
    /// Every case reads from one model.
    pub fn single(model: &'a Model) -> Self {
        Self {
            phi_source: model,
            tau_source: model,
            full: model,
        }
    }
}

fn per_trial_errors(traj: &Trajectory, x: &[f64]) -> Result<Vec<f64>> {
    traj.outputs().iter().map(|xh| mse(x, xh)).collect()
}

fn run_trial(case: Case, source: &Model, cfg: &EvalConfig, trial: usize) -> Result<Vec<f64>> {
    let (n, m) = (source.n(), source.m());
    let mut rng = rng_from_seed(derived_seed(cfg.seed, trial as u64));
    let x = gen_sparse_signal(n, cfg.k, &mut rng)?.x;
    let fresh_phi = cfg.phi_init.draw(m, n, &mut rng);
    let traj = match case {
        Case::RandomPhi => {
            let r = encode_hard(&fresh_phi, &x)?;
            rfpi_solve(&r, &fresh_phi, &cfg.baseline, &init_x0(&fresh_phi, &r)?)?
        }
        Case::LearnedPhi => {
            let r = encode_hard(&source.phi, &x)?;
            rfpi_solve(&r, &source.phi, &cfg.baseline, &init_x0(&source.phi, &r)?)?
        }
        Case::LearnedTau => {
            let r = encode_hard(&fresh_phi, &x)?;
            let deltas = vec![cfg.baseline.delta; source.layers()];
            rfpi_solve_schedule(
                &r,
                &fresh_phi,
                &deltas,
                &source.params.taus,
                &init_x0(&fresh_phi, &r)?,
            )?
        }
        Case::Full => autoencode(&x, source, cfg.mode)?,
    };
    per_trial_errors(&traj, &x)
}

/// Mean `‖x − x̂ᵢ‖²` over `cfg.trials` fresh signals at every iteration `i`.
///
/// Trial `t` draws its signal and fresh matrix from `derived_seed(cfg.seed, t)`,
/// so all cases see the same signals and Cases 1 and 3 the same matrices.
pub fn evaluate_case(case: Case, source: &Model, cfg: &EvalConfig) -> Result<Vec<f64>> {
    source.validate()?;
    check_len(
        "evaluate_case: baseline iterations",
        source.layers(),
        cfg.baseline.iters,
    )?;
    if cfg.k == 0 || cfg.k > source.n() {
        return Err(Error::InvalidArgument(format!(
            "evaluation sparsity must satisfy 1 <= K <= n (K = {}, n = {})",
            cfg.k,
            source.n()
        )));
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let run = |t: usize| run_trial(case, source, cfg, t);
    let per_trial: Vec<Vec<f64>> = if cfg.threads > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| {
                (0..cfg.trials)
                    .into_par_iter()
                    .map(run)
                    .collect::<Result<_>>()
            })?
    } else {
        (0..cfg.trials).map(run).collect::<Result<_>>()?
    };
    let mut mean = vec![0.0; source.layers()];
    for errs in &per_trial {
        for (a, e) in mean.iter_mut().zip(errs) {
            *a += e;
        }
    }
    let inv = 1.0 / cfg.trials as f64;
    mean.iter_mut().for_each(|a| *a *= inv);
    Ok(mean)
}

/// All four curves.
pub fn compare(sources: CaseSources<'_>, cfg: &EvalConfig) -> Result<MseCurve> {
    let layers = sources.full.layers();
    for m in [sources.phi_source, sources.tau_source] {
        check_len("compare: decoder depth", layers, m.layers())?;
        check_len("compare: n", sources.full.n(), m.n())?;
        check_len("compare: m", sources.full.m(), m.m())?;
    }
    Ok(MseCurve {
        cases: [
            evaluate_case(Case::RandomPhi, sources.full, cfg)?,
            evaluate_case(Case::LearnedPhi, sources.phi_source, cfg)?,
            evaluate_case(Case::LearnedTau, sources.tau_source, cfg)?,
            evaluate_case(Case::Full, sources.full, cfg)?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::rng_from_seed;

    fn eval_cfg(iters: usize) -> EvalConfig {
        EvalConfig {
            baseline: RfpiConfig::new(1.0, 20.0, iters).unwrap(),
            trials: 16,
            k: 2,
            seed: 5,
            phi_init: PhiInit::Scaled,
            mode: Mode::EvalHard,
            threads: 1,
        }
    }

    fn model(layers: usize) -> Model {
        Model::init(
            16,
            64,
            layers,
            100.0,
            1.0,
            20.0,
            PhiInit::Scaled,
            &mut rng_from_seed(3),
        )
        .unwrap()
    }

    #[test]
    fn untrained_model_reproduces_baseline_cases() {
        // tied parameters: Case 4 is RFPI on the model's Φ, i.e. Case 2
        let m = model(6);
        let curve = compare(CaseSources::single(&m), &eval_cfg(6)).unwrap();
        assert_eq!(curve.len(), 6);
        for (a, b) in curve
            .case(Case::Full)
            .iter()
            .zip(curve.case(Case::LearnedPhi))
        {
            assert!((a - b).abs() < 1e-10);
        }
        // tied τ = δ/α: Case 3 is Case 1
        assert_eq!(curve.case(Case::LearnedTau), curve.case(Case::RandomPhi));
        for c in &curve.cases {
            assert!(c.iter().all(|v| (0.0..=4.0).contains(v)));
        }
    }

    #[test]
    fn depth_mismatch_is_rejected() {
        let m = model(4);
        assert!(evaluate_case(Case::Full, &m, &eval_cfg(5)).is_err());
        let cfg = EvalConfig {
            k: 17,
            ..eval_cfg(4)
        };
        assert!(evaluate_case(Case::Full, &m, &cfg).is_err());
    }

    #[test]
    fn parallel_evaluation_matches_sequential() {
        let m = model(3);
        let seq = evaluate_case(Case::RandomPhi, &m, &eval_cfg(3)).unwrap();
        let par = evaluate_case(
            Case::RandomPhi,
            &m,
            &EvalConfig {
                threads: 4,
                ..eval_cfg(3)
            },
        )
        .unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn curve_csv_round_trips() {
        let m = model(3);
        let curve = compare(CaseSources::single(&m), &eval_cfg(3)).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,case1,case2,case3,case4\n"));
        assert_eq!(text.lines().count(), 4);
        assert_eq!(MseCurve::from_csv(&text).unwrap(), curve);
    }

    #[test]
    fn case_ids() {
        assert_eq!(Case::from_id(3).unwrap(), Case::LearnedTau);
        assert!(Case::from_id(0).is_err());
    }
}
