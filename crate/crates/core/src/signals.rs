//! K-sparse unit-norm targets, Gaussian sensing matrices and the squared-error metric.
//!
//! All generators draw from [`ChaCha8Rng`]; amplitudes and matrix entries use
//! `rand_distr::StandardNormal`. Seeding goes through [`rng_from_seed`] so a
//! `u64` seed replays a run exactly.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::linalg::{norm2, Matrix};

pub type SignalRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SignalRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a sub-task (worker, evaluation trial set, ...).
pub fn derived_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A unit-norm vector with exactly `support.len()` nonzeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    pub x: Vec<f64>,
    /// Sorted support indices.
    pub support: Vec<usize>,
}

impl SparseSignal {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }
}

/// Draws a uniformly random support of size `k` and standard-normal amplitudes,
/// then scales to unit ℓ₂ norm.
pub fn gen_sparse_signal<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<SparseSignal> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "sparsity must satisfy 1 <= K <= n (K = {k}, n = {n})"
        )));
    }
    let mut support = index::sample(rng, n, k).into_vec();
    support.sort_unstable();
    let mut x = vec![0.0; n];
    loop {
        for &j in &support {
            // a Gaussian draw is exactly zero with probability 0, but keep the invariant exact
            let mut a: f64 = rng.sample(StandardNormal);
            while a == 0.0 {
                a = rng.sample(StandardNormal);
            }
            x[j] = a;
        }
        let nrm = norm2(&x);
        if nrm > 0.0 && nrm.is_finite() {
            x.iter_mut().for_each(|a| *a /= nrm);
            break;
        }
    }
    Ok(SparseSignal { x, support })
}

/// `m × n` matrix with i.i.d. N(0, 1) entries.
pub fn gen_random_phi<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Matrix {
    let data = (0..m * n).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(m, n, data).expect("shape matches by construction")
}

/// Squared ℓ₂ distance `‖x − x̂‖²` (not divided by n).
pub fn mse(x: &[f64], xhat: &[f64]) -> Result<f64> {
    check_len("mse", x.len(), xhat.len())?;
    Ok(x.iter().zip(xhat).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// One signal per line, comma-separated, shortest round-trip decimals.
pub fn write_signals<W: std::io::Write + ?Sized>(
    out: &mut W,
    signals: &[SparseSignal],
) -> Result<()> {
    for s in signals {
        let line: Vec<String> = s.x.iter().map(|a| format!("{a:e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_signals(text: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: i + 1,
                        msg: e.to_string(),
                    })
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn full_scale_signal() {
        let mut rng = rng_from_seed(1);
        let s = gen_sparse_signal(128, 16, &mut rng).unwrap();
        assert_eq!(s.x.iter().filter(|a| **a != 0.0).count(), 16);
        assert!((norm2(&s.x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_support_equal_draws_normalize_to_half() {
        // the normalization step itself: four equal amplitudes become 1/2 each
        let raw = [0.7f64; 4];
        let nrm = norm2(&raw);
        let x: Vec<f64> = raw.iter().map(|a| a / nrm).collect();
        assert!(x.iter().all(|a| (a - 0.5).abs() < 1e-15));
        let s = gen_sparse_signal(4, 4, &mut rng_from_seed(3)).unwrap();
        assert_eq!(s.support, vec![0, 1, 2, 3]);
    }

    #[test]
    fn single_nonzero_is_signed_basis_vector() {
        let s = gen_sparse_signal(8, 1, &mut rng_from_seed(9)).unwrap();
        let j = s.support[0];
        assert_eq!(s.x[j].abs(), 1.0);
        assert_eq!(s.x.iter().filter(|a| **a != 0.0).count(), 1);
    }

    #[test]
    fn bad_sparsity_rejected() {
        let mut rng = rng_from_seed(0);
        assert!(gen_sparse_signal(4, 0, &mut rng).is_err());
        assert!(gen_sparse_signal(4, 5, &mut rng).is_err());
    }

    #[test]
    fn phi_shape_and_determinism() {
        let a = gen_random_phi(512, 128, &mut rng_from_seed(11));
        assert_eq!((a.rows(), a.cols()), (512, 128));
        let b = gen_random_phi(512, 128, &mut rng_from_seed(11));
        assert_eq!(a, b);
    }

    #[test]
    fn phi_entries_have_zero_mean() {
        let a = gen_random_phi(64, 64, &mut rng_from_seed(5));
        let mean = a.as_slice().iter().sum::<f64>() / 4096.0;
        assert!(mean.abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[0.3, -0.2], &[0.3, -0.2]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(mse(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 4.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn same_seed_same_stream_different_seed_differs() {
        let draw = |seed| {
            let mut rng = rng_from_seed(seed);
            (0..5)
                .map(|_| gen_sparse_signal(32, 4, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn signal_dump_round_trips() {
        let mut rng = rng_from_seed(2);
        let sigs: Vec<_> = (0..3)
            .map(|_| gen_sparse_signal(10, 3, &mut rng).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_signals(&mut buf, &sigs).unwrap();
        let back = read_signals(std::str::from_utf8(&buf).unwrap()).unwrap();
        for (s, b) in sigs.iter().zip(&back) {
            assert_eq!(&s.x, b);
        }
    }

    #[test]
    fn sparse_signal_invariants_over_many_draws() {
        let mut rng = rng_from_seed(2024);
        for _ in 0..1000 {
            let n = rng.gen_range(8..=128);
            let k = rng.gen_range(1..=n);
            let s = gen_sparse_signal(n, k, &mut rng).unwrap();
            let nz: Vec<usize> = (0..n).filter(|&j| s.x[j] != 0.0).collect();
            assert_eq!(nz, s.support);
            assert_eq!(s.sparsity(), k);
            assert!((norm2(&s.x) - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn mse_is_symmetric(
            pair in (1usize..20).prop_flat_map(|n| (
                prop::collection::vec(-3.0..3.0f64, n),
                prop::collection::vec(-3.0..3.0f64, n),
            ))
        ) {
            let (x, y) = pair;
            prop_assert_eq!(mse(&x, &y).unwrap(), mse(&y, &x).unwrap());
            prop_assert_eq!(mse(&x, &x).unwrap(), 0.0);
        }
    }
}
