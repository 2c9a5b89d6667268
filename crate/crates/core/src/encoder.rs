//! One-bit acquisition: hard sign for evaluation, `tanh(c·)` for training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matvec, Matrix};

/// Sign with the convention `sign(0) = +1`.
pub fn sign(a: f64) -> f64 {
    if a >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Which sign function a stage uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SignKind {
    Hard,
    /// `tanh(c·s)` with sharpness `c`.
    Smooth(f64),
}

impl SignKind {
    pub fn apply(self, a: f64) -> f64 {
        match self {
            SignKind::Hard => sign(a),
            SignKind::Smooth(c) => (c * a).tanh(),
        }
    }

    /// Derivative w.r.t. the argument; zero for the hard sign.
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            SignKind::Hard => 0.0,
            SignKind::Smooth(c) => {
                let th = (c * a).tanh();
                c * (1.0 - th * th)
            }
        }
    }

    pub fn is_smooth(self) -> bool {
        matches!(self, SignKind::Smooth(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub c: f64,
    pub use_smooth: bool,
}

impl EncoderConfig {
    pub fn new(c: f64, use_smooth: bool) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sharpness c must be > 0, got {c}"
            )));
        }
        Ok(Self { c, use_smooth })
    }

    pub fn sign_kind(&self) -> SignKind {
        if self.use_smooth {
            SignKind::Smooth(self.c)
        } else {
            SignKind::Hard
        }
    }

    pub fn encode(&self, phi: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
        encode_with(phi, x, self.sign_kind())
    }
}

pub fn encode_with(phi: &Matrix, x: &[f64], kind: SignKind) -> Result<Vec<f64>> {
    let mut r = matvec(phi, x)?;
    r.iter_mut().for_each(|a| *a = kind.apply(*a));
    Ok(r)
}

/// `r = sign(Φx)`, entries in {−1, +1}.
pub fn encode_hard(phi: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    encode_with(phi, x, SignKind::Hard)
}

/// `r = tanh(c·Φx)`.
pub fn encode_smooth(phi: &Matrix, x: &[f64], c: f64) -> Result<Vec<f64>> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sharpness c must be > 0, got {c}"
        )));
    }
    encode_with(phi, x, SignKind::Smooth(c))
}

/// Explicit `Diag(r)`. The decoder never materializes it; see [`apply_diag`].
pub fn diag_from(r: &[f64]) -> Matrix {
    let n = r.len();
    let mut d = Matrix::zeros(n, n);
    for (i, &ri) in r.iter().enumerate() {
        d.set(i, i, ri);
    }
    d
}

/// `Diag(r)·y = r ⊙ y`.
pub fn apply_diag(r: &[f64], y: &[f64]) -> Vec<f64> {
    debug_assert_eq!(r.len(), y.len());
    r.iter().zip(y).map(|(a, b)| a * b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matvec;
    use crate::signals::{gen_random_phi, gen_sparse_signal, rng_from_seed};
    use rand::Rng;

    fn neg_identity(n: usize) -> Matrix {
        let mut m = Matrix::identity(n);
        m.scale(-1.0);
        m
    }

    #[test]
    fn hard_examples() {
        assert_eq!(
            encode_hard(&Matrix::identity(3), &[2.0, -0.5, 0.0]).unwrap(),
            vec![1.0, -1.0, 1.0]
        );
        assert_eq!(
            encode_hard(&neg_identity(2), &[1.0, 1.0]).unwrap(),
            vec![-1.0, -1.0]
        );
        let phi = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        assert_eq!(encode_hard(&phi, &[0.6, 0.8]).unwrap(), vec![1.0, -1.0]);
        assert!(encode_hard(&phi, &[1.0]).is_err());
    }

    #[test]
    fn smooth_examples() {
        assert_eq!(
            encode_smooth(&Matrix::identity(1), &[0.0], 7.0).unwrap(),
            vec![0.0]
        );
        let r = encode_smooth(&Matrix::identity(2), &[1.0, -1.0], 100.0).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-10 && (r[1] + 1.0).abs() < 1e-10);
        let r = encode_smooth(&Matrix::identity(1), &[0.5], 1.0).unwrap();
        assert!((r[0] - 0.46211715726).abs() < 1e-11);
        assert!(encode_smooth(&Matrix::identity(1), &[0.5], 0.0).is_err());
        assert!(EncoderConfig::new(-1.0, true).is_err());
    }

    #[test]
    fn diag_examples() {
        assert_eq!(apply_diag(&[1.0, -1.0], &[2.0, 3.0]), vec![2.0, -3.0]);
        assert_eq!(apply_diag(&[1.0], &[4.5]), vec![4.5]);
        assert_eq!(
            apply_diag(&[-1.0; 3], &[1.0, 2.0, 3.0]),
            vec![-1.0, -2.0, -3.0]
        );
        let r = [1.0, -2.0, 0.5];
        let y = [3.0, 1.0, -4.0];
        assert_eq!(matvec(&diag_from(&r), &y).unwrap(), apply_diag(&r, &y));
    }

    #[test]
    fn smooth_saturates_to_hard_away_from_zero() {
        let mut rng = rng_from_seed(17);
        for _ in 0..50 {
            let phi = gen_random_phi(40, 16, &mut rng);
            let x = gen_sparse_signal(16, 3, &mut rng).unwrap().x;
            let w = matvec(&phi, &x).unwrap();
            let hard = encode_hard(&phi, &x).unwrap();
            let smooth = encode_smooth(&phi, &x, 100.0).unwrap();
            for k in 0..40 {
                assert_eq!(hard[k].abs(), 1.0);
                assert!(hard[k] * w[k] >= 0.0);
                if w[k].abs() >= 0.1 {
                    assert!((hard[k] - smooth[k]).abs() <= 1e-8);
                }
                assert!(smooth[k].abs() < 1.0 || w[k].abs() > 0.1);
            }
        }
    }

    #[test]
    fn smooth_sign_derivative_matches_central_differences() {
        let mut rng = rng_from_seed(99);
        let kind = SignKind::Smooth(10.0);
        for _ in 0..20 {
            let s: f64 = rng.gen_range(-0.5..0.5);
            let h = 1e-6;
            let fd = (kind.apply(s + h) - kind.apply(s - h)) / (2.0 * h);
            let an = kind.derivative(s);
            assert!(
                (fd - an).abs() <= 1e-6 * an.abs().max(1e-3),
                "s={s} fd={fd} an={an}"
            );
        }
    }
}
