//! Seeded random test instances with controlled spectral gaps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::gap_profile;
use crate::matcore::{eig_sym, spectral_norm, LinalgError, Spectrum, SymMatrix};
use crate::noise::{derive_seed, sample, NoiseKind, NoiseSpec};

use super::HarnessError;

/// `(A, E, p)` with the spectrum of `A` precomputed.
#[derive(Debug, Clone)]
pub struct Instance {
    pub a: SymMatrix,
    pub e: SymMatrix,
    pub p: usize,
    pub spectrum: Spectrum,
}

/// Haar-like orthogonal basis: eigenvectors of a Wigner sample.
fn random_basis(n: usize, seed: u64) -> Result<Spectrum, LinalgError> {
    let w = sample(n, &NoiseSpec { kind: NoiseKind::WignerGaussian, scale: 1.0, seed, goe_diagonal: true });
    eig_sym(&w)
}

/// `U diag(λ) U^T` for a random `U`.
pub fn rotate_diag(values: &[f64], seed: u64) -> Result<SymMatrix, LinalgError> {
    let u = random_basis(values.len(), seed)?;
    Ok(u.partial_sum(0..values.len(), |i| values[i]))
}

/// PSD eigenvalues, descending: `λ_1 ∈ [1, 5]`, the top `p` in
/// `[λ_1/2, λ_1]`, and a gap `δ_p ≥ 0.05 λ_1` below them.
pub fn psd_eigenvalues(n: usize, p: usize, rng: &mut impl Rng) -> Vec<f64> {
    let l1 = rng.random_range(1.0..=5.0);
    let mut top: Vec<f64> = (1..p).map(|_| rng.random_range(0.5 * l1..l1)).collect();
    top.push(l1);
    top.sort_by(|a, b| b.total_cmp(a));
    let lp = top[p - 1];
    let gap = rng.random_range(0.05..0.35) * l1;
    let ceiling = lp - gap;
    let mut rest: Vec<f64> = (p..n).map(|_| rng.random_range(0.0..ceiling)).collect();
    rest.sort_by(|a, b| b.total_cmp(a));
    top.extend(rest);
    top
}

/// Eigenvalues of either sign with magnitudes laid out as in
/// [`psd_eigenvalues`], so the `|λ|`-ordered top `p` is well separated.
pub fn signed_eigenvalues(n: usize, p: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut v: Vec<f64> = psd_eigenvalues(n, p, rng).into_iter().map(|x| if rng.random::<bool>() { x } else { -x }).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Noise of the given kind rescaled to spectral norm exactly `target`.
pub fn noise_with_norm(n: usize, kind: NoiseKind, target: f64, seed: u64) -> SymMatrix {
    let unit = sample(n, &NoiseSpec { kind, scale: 1.0, seed, goe_diagonal: false });
    let norm = spectral_norm(&unit);
    if target == 0.0 || norm == 0.0 {
        return SymMatrix::zeros(n);
    }
    unit.scaled(target / norm)
}

/// Instance `i` of a PSD family in dimensions `3..=max_n` with
/// `||E|| = u δ_p/4`, `u ∈ [0.1, 0.95]`. Every tenth instance has `E = 0`.
pub fn psd_instance(seed: u64, i: u64, max_n: usize) -> Result<Instance, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xB0075, i));
    let n = rng.random_range(3..=max_n.max(3));
    let p = rng.random_range(1..n);
    let values = psd_eigenvalues(n, p, &mut rng);
    let a = rotate_diag(&values, rng.random())?;
    let spectrum = eig_sym(&a)?;
    let delta_p = spectrum.eigengap(p);
    let target = if i % 10 == 9 { 0.0 } else { rng.random_range(0.1..0.95) * delta_p / 4.0 };
    let e = noise_with_norm(n, NoiseKind::WignerGaussian, target, rng.random());
    Ok(Instance { a, e, p, spectrum })
}

/// Instance `i` of the mixed family used for the theorem suite: PSD or
/// indefinite with equal probability, `n ∈ [3, max_n]`, Gaussian or
/// Rademacher noise sized to satisfy the relevant gap conditions most of the
/// time.
pub fn mixed_instance(seed: u64, i: u64, max_n: usize) -> Result<Instance, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x7E57, i));
    let n = rng.random_range(3..=max_n.max(3));
    let p = rng.random_range(1..n);
    let psd = rng.random::<bool>();
    let values = if psd { psd_eigenvalues(n, p, &mut rng) } else { signed_eigenvalues(n, p, &mut rng) };
    let a = rotate_diag(&values, rng.random())?;
    let spectrum = eig_sym(&a)?;
    let zero = SymMatrix::zeros(n);
    let g = gap_profile(&spectrum, &zero, p)?;
    let room = [g.delta_k, g.delta_bottom]
        .into_iter()
        .flatten()
        .chain(g.psd.then_some(g.delta_p))
        .fold(g.sigma_gap * 2.0, f64::min)
        / 4.0;
    let kind = if rng.random::<bool>() { NoiseKind::WignerGaussian } else { NoiseKind::Rademacher };
    let target = rng.random_range(0.05..1.1) * room;
    let e = noise_with_norm(n, kind, target, rng.random());
    Ok(Instance { a, e, p, spectrum })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_instances_meet_the_gap_condition() {
        for i in 0..20 {
            let inst = psd_instance(1, i, 8).unwrap();
            let s = &inst.spectrum;
            assert!(s.is_psd());
            let e = spectral_norm(&inst.e);
            assert!(4.0 * e <= s.eigengap(inst.p) * (1.0 + 1e-12));
            assert!(s.eigengap(inst.p) >= 0.05 * s.lambda(1) * (1.0 - 1e-9));
            if i % 10 == 9 {
                assert_eq!(e, 0.0);
            }
        }
    }

    #[test]
    fn instances_are_deterministic() {
        let a = mixed_instance(3, 5, 20).unwrap();
        let b = mixed_instance(3, 5, 20).unwrap();
        assert_eq!(a.a, b.a);
        assert_eq!(a.e, b.e);
        assert_eq!(a.p, b.p);
    }

    #[test]
    fn rotation_preserves_spectrum() {
        let a = rotate_diag(&[3.0, 1.0, -2.0, 0.5], 11).unwrap();
        let s = eig_sym(&a).unwrap();
        for (x, y) in s.values().iter().zip([3.0, 1.0, 0.5, -2.0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
