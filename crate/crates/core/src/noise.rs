//! Seeded symmetric noise and Gaussian-mechanism calibration.
//!
//! Every sampler owns a fresh `ChaCha8Rng` seeded from the spec, so output is
//! a pure function of `(n, spec)`. Trial streams are split with
//! [`derive_seed`].

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::matcore::SymMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("noise scale must be finite and >= 0, got {0}")]
    BadScale(f64),
    #[error("epsilon must be > 0, got {0}")]
    BadEpsilon(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("sensitivity must be > 0, got {0}")]
    BadSensitivity(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    WignerGaussian,
    Rademacher,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::WignerGaussian => "gaussian",
            NoiseKind::Rademacher => "rademacher",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" | "wigner" | "wigner_gaussian" | "goe" => Ok(NoiseKind::WignerGaussian),
            "rademacher" => Ok(NoiseKind::Rademacher),
            other => Err(format!("unknown noise kind {other:?} (expected gaussian or rademacher)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub scale: f64,
    pub seed: u64,
    /// Use diagonal variance 2 instead of 1 for Gaussian noise.
    pub goe_diagonal: bool,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, scale: f64, seed: u64) -> Result<Self, NoiseError> {
        if !scale.is_finite() || scale < 0.0 {
            return Err(NoiseError::BadScale(scale));
        }
        Ok(NoiseSpec { kind, scale, seed, goe_diagonal: false })
    }

    pub fn with_goe_diagonal(mut self, on: bool) -> Self {
        self.goe_diagonal = on;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream splitting: folds the level and trial indices into the base seed.
pub fn derive_seed(seed: u64, level: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(level)) ^ splitmix64(trial.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

fn fill_upper(n: usize, scale: f64, mut draw: impl FnMut(bool) -> f64) -> SymMatrix {
    if scale == 0.0 {
        return SymMatrix::zeros(n);
    }
    SymMatrix::from_upper_fn(n, |i, j| scale * draw(i == j))
}

/// Wigner matrix with i.i.d. standard normal upper triangle.
pub fn sample_wigner(n: usize, spec: &NoiseSpec) -> SymMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let diag_sd = if spec.goe_diagonal { std::f64::consts::SQRT_2 } else { 1.0 };
    fill_upper(n, spec.scale, |diag| {
        let z: f64 = rng.sample(StandardNormal);
        if diag {
            diag_sd * z
        } else {
            z
        }
    })
}

/// Symmetric matrix with i.i.d. `±1` upper triangle.
pub fn sample_rademacher(n: usize, spec: &NoiseSpec) -> SymMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    fill_upper(n, spec.scale, |_| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

pub fn sample(n: usize, spec: &NoiseSpec) -> SymMatrix {
    match spec.kind {
        NoiseKind::WignerGaussian => sample_wigner(n, spec),
        NoiseKind::Rademacher => sample_rademacher(n, spec),
    }
}

/// Classical Gaussian-mechanism noise scale `Δ √(2 ln(1.25/δ)) / ε`.
pub fn gaussian_mechanism_sigma(epsilon: f64, delta: f64, sensitivity: f64) -> Result<f64, NoiseError> {
    if !(epsilon > 0.0) {
        return Err(NoiseError::BadEpsilon(epsilon));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(NoiseError::BadDelta(delta));
    }
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(NoiseError::BadSensitivity(sensitivity));
    }
    Ok(sensitivity * (2.0 * (1.25 / delta).ln()).sqrt() / epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::spectral_norm;

    fn spec(kind: NoiseKind, scale: f64, seed: u64) -> NoiseSpec {
        NoiseSpec::new(kind, scale, seed).unwrap()
    }

    #[test]
    fn zero_scale_gives_zero_matrix() {
        for kind in [NoiseKind::WignerGaussian, NoiseKind::Rademacher] {
            assert_eq!(sample(7, &spec(kind, 0.0, 3)), SymMatrix::zeros(7));
        }
    }

    #[test]
    fn same_seed_same_matrix() {
        for kind in [NoiseKind::WignerGaussian, NoiseKind::Rademacher] {
            let a = sample(30, &spec(kind, 1.0, 42));
            let b = sample(30, &spec(kind, 1.0, 42));
            assert_eq!(a, b);
            assert!(a.is_exactly_symmetric());
            assert_ne!(a, sample(30, &spec(kind, 1.0, 43)));
        }
    }

    #[test]
    fn rademacher_support() {
        let m = sample_rademacher(20, &spec(NoiseKind::Rademacher, 0.3, 9));
        assert!(m.as_slice().iter().all(|&v| v == 0.3 || v == -0.3));
    }

    #[test]
    fn norm_law_at_n100() {
        for kind in [NoiseKind::WignerGaussian, NoiseKind::Rademacher] {
            let m = sample(100, &spec(kind, 1.0, 2024));
            let r = spectral_norm(&m) / 10.0;
            assert!((1.6..=2.4).contains(&r), "{kind}: {r}");
        }
    }

    #[test]
    fn entry_moments_at_n200() {
        for (kind, seed) in [(NoiseKind::WignerGaussian, 17), (NoiseKind::Rademacher, 18)] {
            let m = sample(200, &spec(kind, 1.0, seed));
            let upper: Vec<f64> = (0..200).flat_map(|i| (i..200).map(move |j| (i, j))).map(|(i, j)| m.get(i, j)).collect();
            let len = upper.len() as f64;
            let mean = upper.iter().sum::<f64>() / len;
            let var = upper.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len;
            assert!(mean.abs() <= 0.05, "{kind} mean {mean}");
            assert!((var - 1.0).abs() <= 0.1, "{kind} var {var}");
        }
    }

    #[test]
    fn goe_flag_doubles_diagonal_variance() {
        let base = spec(NoiseKind::WignerGaussian, 1.0, 5);
        let plain = sample_wigner(300, &base);
        let goe = sample_wigner(300, &base.with_goe_diagonal(true));
        let var = |m: &SymMatrix| m.diagonal().iter().map(|v| v * v).sum::<f64>() / 300.0;
        assert!(var(&goe) > 1.5 && var(&plain) < 1.5);
    }

    #[test]
    fn gaussian_mechanism_examples() {
        let s = gaussian_mechanism_sigma(1.0, 1e-5, 1.0).unwrap();
        let oracle = (2.0 * (125_000.0f64).ln()).sqrt();
        assert_eq!(s, oracle);
        assert!((s - 4.845).abs() < 5e-4);
        assert_eq!(gaussian_mechanism_sigma(2.0, 1e-5, 1.0).unwrap(), s / 2.0);
        assert_eq!(gaussian_mechanism_sigma(1.0, 1e-5, 3.0).unwrap(), 3.0 * s);
    }

    #[test]
    fn gaussian_mechanism_rejects_bad_arguments() {
        assert!(matches!(gaussian_mechanism_sigma(0.0, 0.1, 1.0), Err(NoiseError::BadEpsilon(_))));
        assert!(matches!(gaussian_mechanism_sigma(1.0, 1.0, 1.0), Err(NoiseError::BadDelta(_))));
        assert!(matches!(gaussian_mechanism_sigma(1.0, 0.0, 1.0), Err(NoiseError::BadDelta(_))));
        assert!(matches!(gaussian_mechanism_sigma(1.0, 0.1, -1.0), Err(NoiseError::BadSensitivity(_))));
        assert!(NoiseSpec::new(NoiseKind::Rademacher, -1.0, 0).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, 0, 0);
        assert_ne!(a, derive_seed(1, 0, 1));
        assert_ne!(a, derive_seed(1, 1, 0));
        assert_ne!(derive_seed(1, 0, 1), derive_seed(1, 1, 0));
        assert_eq!(a, derive_seed(1, 0, 0));
    }
}
