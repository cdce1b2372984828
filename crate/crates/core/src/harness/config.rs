use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::HarnessError;
use crate::ingest::{covariance, covariance_normalized, load_csv, select_rank, RankSelection};
use crate::matcore::{eig_sym, Spectrum, SymMatrix};
use crate::noise::NoiseKind;

/// Built-in diagonal test spectra.
#[derive(Debug, Clone, PartialEq)]
pub enum Synthetic {
    /// `λ_i = base^i`, `i = 1..=n`.
    Decay { base: f64, n: usize },
    /// `{10n, 9n, ..., n, n/2, 1, ..., 1}` of total length `n`.
    Steps { n: usize },
    /// 69 eigenvalues with `p = 10`, `δ_p = 1433.99` and `λ_p/δ_p ≈ 1.5`.
    Census,
    /// 100 eigenvalues with `p = 9`, `λ_p = 46.29` and `δ_p/λ_p ≈ 0.132`.
    Colon,
    Diag(Vec<f64>),
}

impl Synthetic {
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self {
            Synthetic::Decay { base, n } => (1..=*n).map(|i| base.powi(i as i32)).collect(),
            Synthetic::Steps { n } => {
                let nf = *n as f64;
                let mut v: Vec<f64> = (1..=10).rev().map(|k| k as f64 * nf).collect();
                v.push(nf / 2.0);
                v.resize(*n, 1.0);
                v
            }
            Synthetic::Census => {
                let mut v: Vec<f64> = (1..=10).map(|i| 2150.0 * 1.1f64.powi(10 - i)).collect();
                v.extend((0..59).map(|j| 716.01 * 0.7f64.powi(j)));
                v
            }
            Synthetic::Colon => {
                let lp = 46.29;
                let below = lp * (1.0 - 0.125 / 0.95);
                let mut v: Vec<f64> = (1..=9).map(|i| lp * 1.05f64.powi(9 - i)).collect();
                v.extend((0..91).map(|j| below * 0.6f64.powi(j)));
                v
            }
            Synthetic::Diag(v) => v.clone(),
        }
    }

    pub fn matrix(&self) -> SymMatrix {
        SymMatrix::from_diag(&self.eigenvalues())
    }

    pub fn default_rank(&self) -> Option<RankSpec> {
        match self {
            Synthetic::Census => Some(RankSpec::Explicit(10)),
            Synthetic::Colon => Some(RankSpec::Explicit(9)),
            _ => None,
        }
    }
}

impl fmt::Display for Synthetic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Synthetic::Decay { base, n } => write!(f, "decay:base={base},n={n}"),
            Synthetic::Steps { n } => write!(f, "steps:n={n}"),
            Synthetic::Census => write!(f, "census"),
            Synthetic::Colon => write!(f, "colon"),
            Synthetic::Diag(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "diag:{}", parts.join(","))
            }
        }
    }
}

fn key_values(body: &str) -> Result<Vec<(&str, &str)>, String> {
    body.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| kv.split_once('=').map(|(k, v)| (k.trim(), v.trim())).ok_or_else(|| format!("expected key=value, got {kv:?}")))
        .collect()
}

impl FromStr for Synthetic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, body) = s.split_once(':').unwrap_or((s, ""));
        match kind.trim() {
            "decay" => {
                let (mut base, mut n) = (0.8, 50usize);
                for (k, v) in key_values(body)? {
                    match k {
                        "base" => base = v.parse().map_err(|_| format!("bad base {v:?}"))?,
                        "n" => n = v.parse().map_err(|_| format!("bad n {v:?}"))?,
                        _ => return Err(format!("unknown decay key {k:?}")),
                    }
                }
                if !(base > 0.0 && base < 1.0) || n < 2 {
                    return Err("decay needs 0 < base < 1 and n >= 2".into());
                }
                Ok(Synthetic::Decay { base, n })
            }
            "steps" => {
                let mut n = 100usize;
                for (k, v) in key_values(body)? {
                    match k {
                        "n" => n = v.parse().map_err(|_| format!("bad n {v:?}"))?,
                        _ => return Err(format!("unknown steps key {k:?}")),
                    }
                }
                if n < 12 {
                    return Err("steps needs n >= 12".into());
                }
                Ok(Synthetic::Steps { n })
            }
            "census" if body.is_empty() => Ok(Synthetic::Census),
            "colon" if body.is_empty() => Ok(Synthetic::Colon),
            "diag" => {
                let v: Result<Vec<f64>, _> = body.split(',').map(|t| t.trim().parse::<f64>()).collect();
                match v {
                    Ok(v) if v.len() >= 2 && v.iter().all(|x| x.is_finite()) => Ok(Synthetic::Diag(v)),
                    _ => Err(format!("diag needs at least two finite values, got {body:?}")),
                }
            }
            _ => Err(format!("unknown synthetic spectrum {s:?} (expected decay, steps, census, colon or diag)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSpec {
    Csv { path: String, delimiter: char, header: bool, normalize_rows: bool },
    Synthetic { spec: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RankSpec {
    Explicit(usize),
    Energy(f64),
}

/// `count` evenly spaced levels `k/count`, `k = 1..=count`, optionally
/// preceded by 0.
pub fn default_levels(count: usize, include_zero: bool) -> Vec<f64> {
    let mut v = Vec::with_capacity(count + 1);
    if include_zero {
        v.push(0.0);
    }
    v.extend((1..=count).map(|k| k as f64 / count as f64));
    v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub input: InputSpec,
    pub rank: Option<RankSpec>,
    pub noise: NoiseKind,
    pub goe_diagonal: bool,
    pub levels: Vec<f64>,
    pub include_zero: bool,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn synthetic(spec: &str) -> Self {
        ExperimentConfig {
            input: InputSpec::Synthetic { spec: spec.to_string() },
            rank: None,
            noise: NoiseKind::WignerGaussian,
            goe_diagonal: false,
            levels: default_levels(20, false),
            include_zero: false,
            trials: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be >= 1".into()));
        }
        if self.levels.is_empty() {
            return Err(HarnessError::Config("need at least one noise level".into()));
        }
        if self.levels.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(HarnessError::Config("noise levels must be finite and >= 0".into()));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Config("noise levels must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// A resolved input matrix with its spectrum.
#[derive(Debug, Clone)]
pub struct LoadedInput {
    pub matrix: SymMatrix,
    pub spectrum: Spectrum,
    pub label: String,
    pub default_rank: Option<RankSpec>,
}

pub fn load_input(input: &InputSpec) -> Result<LoadedInput, HarnessError> {
    let (matrix, label, default_rank) = match input {
        InputSpec::Synthetic { spec } => {
            let syn: Synthetic = spec.parse().map_err(HarnessError::Config)?;
            (syn.matrix(), syn.to_string(), syn.default_rank())
        }
        InputSpec::Csv { path, delimiter, header, normalize_rows } => {
            if !delimiter.is_ascii() {
                return Err(HarnessError::Config(format!("delimiter {delimiter:?} must be ASCII")));
            }
            let d = load_csv(path, *delimiter as u8, *header)?;
            let m = if *normalize_rows { covariance_normalized(&d) } else { covariance(&d) };
            (m, path.clone(), None)
        }
    };
    let spectrum = eig_sym(&matrix)?;
    Ok(LoadedInput { matrix, spectrum, label, default_rank })
}

/// Resolves the rank; an explicit `p` must leave a `(p+1)`-st eigenvalue.
pub fn resolve_rank(rank: Option<RankSpec>, input: &LoadedInput) -> Result<(usize, Option<RankSelection>), HarnessError> {
    let n = input.spectrum.n();
    let rank = rank.or(input.default_rank).unwrap_or(RankSpec::Energy(0.99));
    let (p, sel) = match rank {
        RankSpec::Explicit(p) => (p, None),
        RankSpec::Energy(f) => {
            let sel = select_rank(&input.spectrum, f)?;
            (sel.p, Some(sel))
        }
    };
    if p == 0 || p >= n {
        return Err(HarnessError::Config(format!("rank p = {p} must satisfy 1 <= p < n = {n}")));
    }
    Ok((p, sel))
}
