//! Closed-form perturbation bounds and the spectral quantities they use.
//!
//! Indices in this module follow the 1-based convention of the rank
//! parameter: `λ_p` is `s.lambda(p)`, `δ_p = λ_p - λ_{p+1}`. Logarithms are
//! natural.

use serde::Serialize;
use thiserror::Error;

use crate::contour::{max_modulus_on_rect, RectContour};
use crate::matcore::{dot, spectral_norm, EntireFn, LinalgError, Spectrum, SymMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("rank p = {p} leaves no (p+1)-st eigenvalue in dimension {n}")]
    NoNextEigenvalue { p: usize, n: usize },
    #[error("{name} is zero; the bound divides by it")]
    ZeroGap { name: &'static str },
    #[error("bound requires a PSD spectrum, smallest eigenvalue is {0}")]
    NotPsd(f64),
    #[error("bound requires a positive top eigenvalue, got {0}")]
    NonPositiveTop(f64),
    #[error("spectra have different dimensions {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Structural quantities of a rank-`p` truncation under noise `E`.
///
/// `*_k` fields describe the cluster of positive selected eigenvalues and
/// are absent when `k = 0`; `*_bottom` and `r2`/`x2` describe the negative
/// cluster and are absent when `k = p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapProfile {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub psd: bool,
    pub e_norm: f64,
    pub lambda_p: f64,
    pub delta_p: f64,
    pub sigma_1: f64,
    pub sigma_p1: f64,
    /// `σ_p - σ_{p+1}`.
    pub sigma_gap: f64,
    pub lambda_k: Option<f64>,
    pub delta_k: Option<f64>,
    /// `λ_{n-(p-k)+1}`, the selected eigenvalue closest to zero from below.
    pub lambda_bottom: Option<f64>,
    /// `δ_{n-(p-k)} = λ_{n-(p-k)} - λ_{n-(p-k)+1}`.
    pub delta_bottom: Option<f64>,
    pub r: usize,
    pub x: f64,
    pub r1: Option<usize>,
    pub x1: Option<f64>,
    pub r2: Option<usize>,
    pub x2: Option<f64>,
    /// `max(r1, r2)` over the clusters present.
    pub r_sym: usize,
    pub x_bar: f64,
}

impl GapProfile {
    pub fn k_is_zero(&self) -> bool {
        self.k == 0
    }

    /// `λ_p ≥ 0`-style PSD gap condition `4||E|| ≤ δ_p`.
    pub fn gap_ok_psd(&self) -> bool {
        self.psd && 4.0 * self.e_norm <= self.delta_p
    }

    /// `4||E|| ≤ min(δ_k, δ_{n-(p-k)})` over the clusters present.
    pub fn gap_ok_sym(&self) -> bool {
        let m = self.delta_k.into_iter().chain(self.delta_bottom).fold(f64::INFINITY, f64::min);
        4.0 * self.e_norm <= m
    }

    /// `2||E|| < σ_p - σ_{p+1}`.
    pub fn sv_gap_ok(&self) -> bool {
        2.0 * self.e_norm < self.sigma_gap
    }
}

/// Smallest `r ≥ 1` with `λ_{r+1} ≤ level`, or `n` when there is none.
fn halving_from_top(values: &[f64], level: f64) -> usize {
    let n = values.len();
    (1..n).find(|&r| values[r] <= level).unwrap_or(n)
}

/// Largest `|u_i^T E u_j|` over the eigenvector indices in `idx`.
fn interaction(s: &Spectrum, e: &SymMatrix, idx: &[usize]) -> f64 {
    let eu: Vec<Vec<f64>> = idx.iter().map(|&j| e.matvec(s.vector(j))).collect();
    let mut x = 0.0f64;
    for (a, &i) in idx.iter().enumerate() {
        for ej in &eu[a..] {
            x = x.max(dot(s.vector(i), ej).abs());
        }
    }
    x
}

pub fn gap_profile(s: &Spectrum, e: &SymMatrix, p: usize) -> Result<GapProfile, BoundError> {
    let n = s.n();
    if e.n() != n {
        return Err(BoundError::DimensionMismatch(n, e.n()));
    }
    if p >= n {
        if p == 0 || p > n {
            return Err(LinalgError::RankOutOfRange { p, n, max: n.saturating_sub(1) }.into());
        }
        return Err(BoundError::NoNextEigenvalue { p, n });
    }
    let sel = s.select(p)?;
    let k = sel.k;
    let vals = s.values();
    let sv = s.singular_values();

    let lambda_p = s.lambda(p);
    let r = halving_from_top(vals, lambda_p / 2.0);
    let x = interaction(s, e, &(0..r).collect::<Vec<_>>());

    let (lambda_k, delta_k, r1, x1) = if k >= 1 {
        let lk = s.lambda(k);
        let r1 = halving_from_top(vals, lk / 2.0);
        (Some(lk), Some(s.eigengap(k)), Some(r1), Some(interaction(s, e, &(0..r1).collect::<Vec<_>>())))
    } else {
        (None, None, None, None)
    };

    let (lambda_bottom, delta_bottom, r2, x2) = match sel.bottom_start(n) {
        Some(b) => {
            let lb = s.lambda(b);
            let r2 = (1..=n).find(|&r2| s.lambda(n - r2 + 1) - lb >= lb.abs() / 2.0).unwrap_or(n);
            let x2 = interaction(s, e, &(n - r2..n).collect::<Vec<_>>());
            (Some(lb), Some(s.eigengap(b - 1)), Some(r2), Some(x2))
        }
        None => (None, None, None, None),
    };

    Ok(GapProfile {
        n,
        p,
        k,
        psd: s.is_psd(),
        e_norm: spectral_norm(e),
        lambda_p,
        delta_p: s.eigengap(p),
        sigma_1: sv[0],
        sigma_p1: sv[p],
        sigma_gap: sv[p - 1] - sv[p],
        lambda_k,
        delta_k,
        lambda_bottom,
        delta_bottom,
        r,
        x,
        r1,
        x1,
        r2,
        x2,
        r_sym: r1.into_iter().chain(r2).max().unwrap_or(0),
        x_bar: x1.into_iter().chain(x2).fold(0.0, f64::max),
    })
}

fn nonzero(v: f64, name: &'static str) -> Result<f64, BoundError> {
    if v == 0.0 {
        Err(BoundError::ZeroGap { name })
    } else {
        Ok(v)
    }
}

fn require_psd(s: &Spectrum) -> Result<(), BoundError> {
    if s.is_psd() {
        Ok(())
    } else {
        Err(BoundError::NotPsd(s.lambda(s.n())))
    }
}

fn require_next(s: &Spectrum, p: usize) -> Result<(), BoundError> {
    let n = s.n();
    if p == 0 {
        return Err(LinalgError::RankOutOfRange { p, n, max: n - 1 }.into());
    }
    if p >= n {
        return Err(BoundError::NoNextEigenvalue { p, n });
    }
    Ok(())
}

/// Eckart–Young–Mirsky baseline `2(σ_{p+1} + ||E||)`.
pub fn eym_bound(s: &Spectrum, e_norm: f64, p: usize) -> Result<f64, BoundError> {
    require_next(s, p)?;
    Ok(2.0 * (s.sigma(p + 1) + e_norm))
}

/// `7 ||E|| λ_p / δ_p` for PSD `A`.
pub fn thm1_bound(s: &Spectrum, e_norm: f64, p: usize) -> Result<f64, BoundError> {
    require_next(s, p)?;
    require_psd(s)?;
    let delta_p = nonzero(s.eigengap(p), "delta_p")?;
    Ok(7.0 * e_norm * s.lambda(p) / delta_p)
}

/// `12 (||E|| L + r²x λ_p/δ_p + r²x L)` with `L = ln(10 σ_1 / δ_p)`.
pub fn thm2_formula(e_norm: f64, r: usize, x: f64, lambda_p: f64, delta_p: f64, sigma_1: f64) -> f64 {
    let l = (10.0 * sigma_1 / delta_p).ln();
    let r2x = (r * r) as f64 * x;
    12.0 * (e_norm * l + r2x * lambda_p / delta_p + r2x * l)
}

pub fn thm2_bound(profile: &GapProfile, s: &Spectrum, e_norm: f64) -> Result<f64, BoundError> {
    require_psd(s)?;
    let delta_p = nonzero(profile.delta_p, "delta_p")?;
    let sigma_1 = s.sigma(1);
    if !(sigma_1 > 0.0) {
        return Err(BoundError::NonPositiveTop(sigma_1));
    }
    Ok(thm2_formula(e_norm, profile.r, profile.x, s.lambda(profile.p), delta_p, sigma_1))
}

/// One cluster's `(|λ|, δ)` pair; `None` when the cluster is empty.
type Cluster = Option<(f64, f64)>;

fn clusters(profile: &GapProfile) -> Result<(Cluster, Cluster), BoundError> {
    let top = match (profile.lambda_k, profile.delta_k) {
        (Some(l), Some(d)) => Some((l, nonzero(d, "delta_k")?)),
        _ => None,
    };
    let bottom = match (profile.lambda_bottom, profile.delta_bottom) {
        (Some(l), Some(d)) => Some((l.abs(), nonzero(d, "delta_bottom")?)),
        _ => None,
    };
    Ok((top, bottom))
}

/// `6 ||E|| Σ_clusters (ln(6σ_1/δ) + |λ|/δ)`.
pub fn main2_formula(e_norm: f64, sigma_1: f64, top: Cluster, bottom: Cluster) -> f64 {
    let sum: f64 = top.into_iter().chain(bottom).map(|(l, d)| (6.0 * sigma_1 / d).ln() + l / d).sum();
    6.0 * e_norm * sum
}

pub fn main2_bound(profile: &GapProfile, s: &Spectrum, e_norm: f64) -> Result<f64, BoundError> {
    let (top, bottom) = clusters(profile)?;
    Ok(main2_formula(e_norm, s.sigma(1), top, bottom))
}

/// `12 (||E|| + r²x̄) Σ ln(6σ_1/δ) + 30 r²x̄ Σ |λ|/δ` over the clusters present.
pub fn main2_1_formula(e_norm: f64, r: usize, x_bar: f64, sigma_1: f64, top: Cluster, bottom: Cluster) -> f64 {
    let r2x = (r * r) as f64 * x_bar;
    let (logs, ratios) = top
        .into_iter()
        .chain(bottom)
        .fold((0.0, 0.0), |(lg, rt), (l, d)| (lg + (6.0 * sigma_1 / d).ln(), rt + l / d));
    12.0 * (e_norm + r2x) * logs + 30.0 * r2x * ratios
}

pub fn main2_1_bound(profile: &GapProfile, s: &Spectrum, e_norm: f64) -> Result<f64, BoundError> {
    let (top, bottom) = clusters(profile)?;
    Ok(main2_1_formula(e_norm, profile.r_sym, profile.x_bar, s.sigma(1), top, bottom))
}

/// `4 max_{z ∈ Γ} |f(z)| ||E|| / δ_p` where `Γ` is the rectangle with
/// `x0 = λ_p - δ_p/2` and `x1 = T = 2λ_1`.
pub fn thm3_bound(s: &Spectrum, e_norm: f64, p: usize, f: &EntireFn) -> Result<f64, BoundError> {
    require_next(s, p)?;
    let delta_p = nonzero(s.eigengap(p), "delta_p")?;
    let l1 = s.lambda(1);
    if !(l1 > 0.0) {
        return Err(BoundError::NonPositiveTop(l1));
    }
    let gamma = RectContour { x0: s.lambda(p) - delta_p / 2.0, x1: 2.0 * l1, t: 2.0 * l1 };
    Ok(4.0 * max_modulus_on_rect(f, &gamma) * e_norm / delta_p)
}

/// Weyl's inequalities for eigenvalues and singular values, with slack
/// `1e-10 · max(1, ||A||, ||Ã||)`.
pub fn weyl_check(s: &Spectrum, st: &Spectrum, e_norm: f64) -> Result<bool, BoundError> {
    if s.n() != st.n() {
        return Err(BoundError::DimensionMismatch(s.n(), st.n()));
    }
    let slack = 1e-10 * s.source_norm().max(st.source_norm()).max(1.0);
    let eig_ok = s.values().iter().zip(st.values()).all(|(a, b)| (a - b).abs() <= e_norm + slack);
    let sv_ok = s.singular_values().iter().zip(st.singular_values()).all(|(a, b)| (a - b).abs() <= e_norm + slack);
    Ok(eig_ok && sv_ok)
}

/// Every bound for one `(A, E, p)` instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub actual_error: Option<f64>,
    pub eym: f64,
    /// PSD-only bounds are absent for indefinite spectra.
    pub thm1: Option<f64>,
    pub thm2: Option<f64>,
    pub main2: f64,
    pub main2_1: f64,
    /// `(function name, bound)` pairs.
    pub thm3: Vec<(String, f64)>,
    pub gap_ok_psd: bool,
    pub gap_ok_sym: bool,
    pub sv_gap_ok: bool,
    pub k_zero: bool,
    pub profile: GapProfile,
}

pub fn bound_report(
    s: &Spectrum,
    e: &SymMatrix,
    p: usize,
    actual_error: Option<f64>,
    fs: &[EntireFn],
) -> Result<BoundReport, BoundError> {
    let profile = gap_profile(s, e, p)?;
    let e_norm = profile.e_norm;
    let psd = profile.psd;
    let thm1 = if psd { Some(thm1_bound(s, e_norm, p)?) } else { None };
    let thm2 = if psd { Some(thm2_bound(&profile, s, e_norm)?) } else { None };
    let thm3 = fs.iter().map(|f| Ok((f.to_string(), thm3_bound(s, e_norm, p, f)?))).collect::<Result<_, BoundError>>()?;
    Ok(BoundReport {
        actual_error,
        eym: eym_bound(s, e_norm, p)?,
        thm1,
        thm2,
        main2: main2_bound(&profile, s, e_norm)?,
        main2_1: main2_1_bound(&profile, s, e_norm)?,
        thm3,
        gap_ok_psd: profile.gap_ok_psd(),
        gap_ok_sym: profile.gap_ok_sym(),
        sv_gap_ok: profile.sv_gap_ok(),
        k_zero: profile.k_is_zero(),
        profile,
    })
}
