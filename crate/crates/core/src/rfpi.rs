//! Renormalized fixed-point iteration for sign measurements.
//!
//! One iteration from a unit-norm `x`:
//!
//! ```text
//! d = −(RΦ)ᵀ ρ(RΦx),   ρ(y) = max(−y, 0)
//! t = (1 + δ dᵀx) x − δ d
//! v = sign(t) ⊙ max(|t| − τ, 0)
//! x⁺ = v / ‖v‖₂
//! ```
//!
//! with `R = Diag(r)` and the scalar threshold `τ = δ/α`.

use crate::encoder::{apply_diag, sign};
use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, matvec, matvec_t, norm2, normalized, relu, Matrix};

/// Norm below which the shrunk vector is treated as zero.
pub const DEGENERATE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfpiConfig {
    /// Gradient step-size δ.
    pub delta: f64,
    /// Penalty factor α.
    pub alpha: f64,
    /// Number of iterations L.
    pub iters: usize,
}

impl RfpiConfig {
    pub fn new(delta: f64, alpha: f64, iters: usize) -> Result<Self> {
        if !(delta > 0.0 && alpha > 0.0 && iters >= 1) {
            return Err(Error::InvalidArgument(format!(
                "need delta > 0, alpha > 0, iters >= 1 (got {delta}, {alpha}, {iters})"
            )));
        }
        Ok(Self {
            delta,
            alpha,
            iters,
        })
    }

    /// Shrinkage threshold `τ = δ/α`.
    pub fn tau(&self) -> f64 {
        self.delta / self.alpha
    }
}

/// Iterates `x₀ … x_L` of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub iterates: Vec<Vec<f64>>,
    /// Zero-based iteration (layer) indices where shrinkage zeroed every
    /// coordinate; the previous iterate was carried forward there.
    pub degenerate: Vec<usize>,
}

impl Trajectory {
    pub fn start(x0: Vec<f64>) -> Self {
        Self {
            iterates: vec![x0],
            degenerate: Vec::new(),
        }
    }

    pub fn final_iterate(&self) -> &[f64] {
        self.iterates.last().expect("trajectory holds x0")
    }

    /// Number of iterations performed (excludes `x₀`).
    pub fn steps(&self) -> usize {
        self.iterates.len() - 1
    }

    /// Outputs of iterations `0..steps()`, i.e. `x₁ … x_L`.
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.iterates[1..]
    }
}

/// One iteration. `tau` holds one threshold per coordinate.
pub fn rfpi_step(
    x_prev: &[f64],
    phi: &Matrix,
    r: &[f64],
    delta: f64,
    tau: &[f64],
) -> Result<Vec<f64>> {
    check_len("rfpi_step: x", phi.cols(), x_prev.len())?;
    check_len("rfpi_step: r", phi.rows(), r.len())?;
    check_len("rfpi_step: tau", x_prev.len(), tau.len())?;

    let y = apply_diag(r, &matvec(phi, x_prev)?);
    let penalty: Vec<f64> = y.iter().map(|&a| relu(-a)).collect();
    // (RΦ)ᵀp = Φᵀ(r ⊙ p)
    let d: Vec<f64> = matvec_t(phi, &apply_diag(r, &penalty))?
        .into_iter()
        .map(|a| -a)
        .collect();
    let scale = 1.0 + delta * dot(&d, x_prev);
    let v: Vec<f64> = x_prev
        .iter()
        .zip(&d)
        .zip(tau)
        .map(|((&x, &dk), &th)| {
            let t = scale * x - delta * dk;
            sign(t) * relu(t.abs() - th)
        })
        .collect();
    let nv = norm2(&v);
    if nv < DEGENERATE_EPS {
        return Err(Error::DegenerateShrinkage);
    }
    Ok(v.into_iter().map(|a| a / nv).collect())
}

/// Runs `deltas.len()` iterations with a per-iteration step-size and threshold vector.
pub fn rfpi_solve_schedule(
    r: &[f64],
    phi: &Matrix,
    deltas: &[f64],
    taus: &[Vec<f64>],
    x0: &[f64],
) -> Result<Trajectory> {
    check_len("rfpi_solve: taus", deltas.len(), taus.len())?;
    check_len("rfpi_solve: x0", phi.cols(), x0.len())?;
    let mut traj = Trajectory::start(x0.to_vec());
    for (i, (&delta, tau)) in deltas.iter().zip(taus).enumerate() {
        let next = match rfpi_step(traj.final_iterate(), phi, r, delta, tau) {
            Ok(x) => x,
            Err(Error::DegenerateShrinkage) => {
                traj.degenerate.push(i);
                traj.final_iterate().to_vec()
            }
            Err(e) => return Err(e),
        };
        traj.iterates.push(next);
    }
    Ok(traj)
}

/// Fixed-(δ, α) solve of `cfg.iters` iterations from `x0`.
pub fn rfpi_solve(r: &[f64], phi: &Matrix, cfg: &RfpiConfig, x0: &[f64]) -> Result<Trajectory> {
    solve_fixed(r, phi, cfg.delta, cfg.tau(), cfg.iters, x0)
}

pub(crate) fn solve_fixed(
    r: &[f64],
    phi: &Matrix,
    delta: f64,
    tau: f64,
    iters: usize,
    x0: &[f64],
) -> Result<Trajectory> {
    let n = phi.cols();
    rfpi_solve_schedule(r, phi, &vec![delta; iters], &vec![vec![tau; n]; iters], x0)
}

/// Starting point `Φᵀr / ‖Φᵀr‖`, falling back to `e₁` when `Φᵀr` vanishes.
pub fn init_x0(phi: &Matrix, r: &[f64]) -> Result<Vec<f64>> {
    let b = matvec_t(phi, r)?;
    Ok(normalized(&b, DEGENERATE_EPS).unwrap_or_else(|| basis(phi.cols(), 0)))
}

fn basis(n: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    if j < n {
        e[j] = 1.0;
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::encode_hard;
    use crate::signals::{gen_random_phi, gen_sparse_signal, mse, rng_from_seed};

    #[test]
    fn config_validation() {
        assert!(RfpiConfig::new(1.0, 20.0, 30).is_ok());
        assert!(RfpiConfig::new(0.0, 20.0, 30).is_err());
        assert!(RfpiConfig::new(1.0, -1.0, 30).is_err());
        assert!(RfpiConfig::new(1.0, 20.0, 0).is_err());
        assert_eq!(RfpiConfig::new(1.0, 20.0, 3).unwrap().tau(), 0.05);
    }

    #[test]
    fn consistent_point_is_fixed() {
        let mut rng = rng_from_seed(4);
        let phi = gen_random_phi(20, 6, &mut rng);
        let x = gen_sparse_signal(6, 6, &mut rng).unwrap().x;
        let r = encode_hard(&phi, &x).unwrap();
        let out = rfpi_step(&x, &phi, &r, 0.7, &[0.0; 6]).unwrap();
        for (a, b) in out.iter().zip(&x) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn oversized_threshold_is_degenerate() {
        let mut rng = rng_from_seed(5);
        let phi = gen_random_phi(8, 4, &mut rng);
        let x = gen_sparse_signal(4, 2, &mut rng).unwrap().x;
        let r = encode_hard(&phi, &x).unwrap();
        let x0 = init_x0(&phi, &r).unwrap();
        let err = rfpi_step(&x0, &phi, &r, 1.0, &[1e6; 4]).unwrap_err();
        assert!(matches!(err, Error::DegenerateShrinkage));

        let traj = rfpi_solve_schedule(&r, &phi, &[1.0; 3], &vec![vec![1e6; 4]; 3], &x0).unwrap();
        assert_eq!(traj.degenerate, vec![0, 1, 2]);
        assert_eq!(traj.final_iterate(), x0.as_slice());
    }

    #[test]
    fn zero_iterations_returns_start() {
        let phi = Matrix::identity(2);
        let x0 = vec![1.0, 0.0];
        let traj = solve_fixed(&[1.0, 1.0], &phi, 1.0, 0.05, 0, &x0).unwrap();
        assert_eq!(traj.iterates, vec![x0]);
    }

    #[test]
    fn init_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let x0 = init_x0(&Matrix::identity(2), &[1.0, -1.0]).unwrap();
        assert!((x0[0] - h).abs() < 1e-15 && (x0[1] + h).abs() < 1e-15);
        let phi = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(init_x0(&phi, &[1.0, -1.0]).unwrap(), vec![1.0, 0.0]);
        let mut rng = rng_from_seed(8);
        for _ in 0..20 {
            let phi = gen_random_phi(12, 5, &mut rng);
            let r = encode_hard(&phi, &gen_sparse_signal(5, 2, &mut rng).unwrap().x).unwrap();
            assert!((norm2(&init_x0(&phi, &r).unwrap()) - 1.0).abs() < 1e-12);
        }
    }

    /// Golden value for n=4, m=8, seed 2718, δ=1, τ=0.05, one step from init_x0.
    /// Frozen from an independent numpy transcription of the update (x₀ included).
    #[test]
    fn golden_single_step() {
        let mut rng = rng_from_seed(2718);
        let phi = gen_random_phi(8, 4, &mut rng);
        let x = gen_sparse_signal(4, 2, &mut rng).unwrap().x;
        let r = encode_hard(&phi, &x).unwrap();
        let x0 = init_x0(&phi, &r).unwrap();
        let out = rfpi_step(&x0, &phi, &r, 1.0, &[0.05; 4]).unwrap();
        let expected = [
            0.34951275258741304,
            0.340864939335594,
            -0.8298833178820755,
            -0.2700844453343245,
        ];
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-10, "{out:?}");
        }
    }

    #[test]
    fn tuned_baseline_reduces_error() {
        let mut rng = rng_from_seed(31337);
        let cfg = RfpiConfig::new(1.0, 20.0, 10).unwrap();
        let mut improved = 0;
        for _ in 0..100 {
            let mut phi = gen_random_phi(64, 16, &mut rng);
            phi.scale(1.0 / 8.0);
            let x = gen_sparse_signal(16, 2, &mut rng).unwrap().x;
            let r = encode_hard(&phi, &x).unwrap();
            let x0 = init_x0(&phi, &r).unwrap();
            let traj = rfpi_solve(&r, &phi, &cfg, &x0).unwrap();
            let e0 = mse(&x, &x0).unwrap();
            let el = mse(&x, traj.final_iterate()).unwrap();
            if el < e0 {
                improved += 1;
            }
            for it in &traj.iterates {
                assert!((norm2(it) - 1.0).abs() < 1e-9);
            }
        }
        assert!(improved >= 90, "improved on {improved}/100");
        // frozen regression value for this seed
        assert_eq!(improved, 99);
    }
}
