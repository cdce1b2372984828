//! CSV data matrices to covariance matrices.
//!
//! Preprocessing runs in a fixed order: unparseable tokens become 0, short
//! rows are zero-padded, each nonzero row is scaled to unit norm, then each
//! column is centred. Centring generally breaks the unit row norms, so the
//! norms are recorded just before that step.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::matcore::{Spectrum, SymMatrix};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed CSV in {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{0} contains no data rows")]
    Empty(String),
    #[error("{0} has zero columns")]
    NoColumns(String),
    #[error("energy fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
}

/// Preprocessed data matrix `M` (`rows x cols`, row-major).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    /// Row norms after normalisation and before centring (1 or 0).
    pub row_norms_before_centering: Vec<f64>,
}

impl DataMatrix {
    /// Wraps already-processed rows without touching them.
    pub fn from_processed(rows: &[Vec<f64>]) -> Self {
        let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r);
            data.extend(std::iter::repeat_n(0.0, cols - r.len()));
        }
        let row_norms_before_centering = rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        DataMatrix { rows: rows.len(), cols, data, row_norms_before_centering }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (m, v) in means.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        means.iter().map(|m| m / self.rows as f64).collect()
    }
}

/// Strict numeric token: finite decimal or scientific notation, else 0.
pub fn parse_token(tok: &str) -> f64 {
    let t = tok.trim();
    let looks_numeric = !t.is_empty() && t.chars().all(|c| c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E'));
    match t.parse::<f64>() {
        Ok(v) if looks_numeric && v.is_finite() => v,
        _ => 0.0,
    }
}

/// Pads, row-normalises and column-centres raw rows.
pub fn preprocess(raw: Vec<Vec<f64>>) -> DataMatrix {
    let rows = raw.len();
    let cols = raw.iter().map(Vec::len).max().unwrap_or(0);
    let mut data = Vec::with_capacity(rows * cols);
    let mut norms = Vec::with_capacity(rows);
    for mut r in raw {
        r.resize(cols, 0.0);
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            r.iter_mut().for_each(|v| *v /= norm);
            norms.push(1.0);
        } else {
            norms.push(0.0);
        }
        data.extend(r);
    }
    let mut d = DataMatrix { rows, cols, data, row_norms_before_centering: norms };
    let means = d.column_means();
    for i in 0..rows {
        for (v, m) in d.data[i * cols..(i + 1) * cols].iter_mut().zip(&means) {
            *v -= m;
        }
    }
    d
}

/// Reads a delimited text file and preprocesses it. Rows may have different
/// lengths.
pub fn load_csv(path: impl AsRef<Path>, delimiter: u8, has_header: bool) -> Result<DataMatrix, IngestError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| IngestError::Io { path: name.clone(), source })?;
    parse_csv(&text, delimiter, has_header, &name)
}

/// As [`load_csv`] on in-memory text; `name` is used in error messages.
pub fn parse_csv(text: &str, delimiter: u8, has_header: bool, name: &str) -> Result<DataMatrix, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(has_header)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut raw = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|source| IngestError::Csv { path: name.to_string(), source })?;
        raw.push(rec.iter().map(parse_token).collect::<Vec<f64>>());
    }
    if raw.is_empty() {
        return Err(IngestError::Empty(name.to_string()));
    }
    if raw.iter().all(Vec::is_empty) {
        return Err(IngestError::NoColumns(name.to_string()));
    }
    Ok(preprocess(raw))
}

/// Gram matrix `M^T M`.
pub fn covariance(d: &DataMatrix) -> SymMatrix {
    let n = d.cols;
    let mut a = SymMatrix::zeros(n.max(1));
    for i in 0..d.rows {
        a.add_outer(1.0, d.row(i));
    }
    a
}

/// `M^T M / m`, for callers who want the row-count normalisation.
pub fn covariance_normalized(d: &DataMatrix) -> SymMatrix {
    covariance(d).scaled(1.0 / d.rows.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankSelection {
    pub p: usize,
    pub energy_fraction: f64,
    pub achieved_fraction: f64,
}

/// Smallest `p` whose `|λ|`-ordered truncation keeps at least
/// `energy_fraction` of the Frobenius norm.
pub fn select_rank(s: &Spectrum, energy_fraction: f64) -> Result<RankSelection, IngestError> {
    if !(energy_fraction > 0.0 && energy_fraction <= 1.0) {
        return Err(IngestError::BadFraction(energy_fraction));
    }
    let sq: Vec<f64> = s.singular_values().iter().map(|v| v * v).collect();
    let total: f64 = sq.iter().sum();
    let target = energy_fraction * energy_fraction * total;
    let n = sq.len();
    let mut acc = 0.0;
    let mut p = n;
    for (i, v) in sq.iter().enumerate() {
        acc += v;
        if acc >= target {
            p = i + 1;
            break;
        }
    }
    let kept: f64 = sq[..p].iter().sum();
    let achieved_fraction = if total > 0.0 && p < n {
        // kept >= target holds exactly; keep sqrt rounding from dipping below
        (kept / total).sqrt().max(energy_fraction)
    } else {
        1.0
    };
    Ok(RankSelection { p, energy_fraction, achieved_fraction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::eig_sym;

    fn approx(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn token_rules() {
        assert_eq!(parse_token("1.5e2"), 150.0);
        assert_eq!(parse_token(" -3 "), -3.0);
        assert_eq!(parse_token("x"), 0.0);
        assert_eq!(parse_token(""), 0.0);
        assert_eq!(parse_token("nan"), 0.0);
        assert_eq!(parse_token("inf"), 0.0);
        assert_eq!(parse_token("1,5"), 0.0);
    }

    #[test]
    fn replace_pad_normalize_center() {
        let d = parse_csv("1,x,0\n0,1\n", b',', false, "mem").unwrap();
        assert_eq!((d.rows, d.cols), (2, 3));
        // padded and normalised rows are e1 and e2; centring subtracts 0.5
        assert!(approx(d.row(0), &[0.5, -0.5, 0.0], 1e-15));
        assert!(approx(d.row(1), &[-0.5, 0.5, 0.0], 1e-15));
        assert_eq!(d.row_norms_before_centering, vec![1.0, 1.0]);
    }

    #[test]
    fn single_row_hand_computation() {
        let raw = preprocess(vec![vec![3.0, 4.0]]);
        assert!(approx(raw.row(0), &[0.0, 0.0], 1e-15));
        // the intermediate state was [0.6, 0.8]
        assert_eq!(raw.row_norms_before_centering, vec![1.0]);
        let cov = covariance(&raw);
        assert_eq!(cov, SymMatrix::zeros(2));
    }

    #[test]
    fn zero_file_gives_zero_matrix() {
        let d = parse_csv("0,0\n0,0\n", b',', false, "mem").unwrap();
        assert!(d.data.iter().all(|&v| v == 0.0));
        assert_eq!(d.row_norms_before_centering, vec![0.0, 0.0]);
    }

    #[test]
    fn header_and_delimiter() {
        let d = parse_csv("a;b\n3;4\n4;3\n", b';', true, "mem").unwrap();
        assert_eq!(d.rows, 2);
        assert!(d.column_means().iter().all(|m| m.abs() < 1e-15));
    }

    #[test]
    fn empty_inputs_error() {
        assert!(matches!(parse_csv("", b',', false, "mem"), Err(IngestError::Empty(_))));
        assert!(matches!(parse_csv("h\n", b',', true, "mem"), Err(IngestError::Empty(_))));
        assert!(matches!(load_csv("/nonexistent/file.csv", b',', false), Err(IngestError::Io { .. })));
    }

    #[test]
    fn identity_gram() {
        let d = DataMatrix::from_processed(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(covariance(&d), SymMatrix::identity(2));
        assert_eq!(covariance_normalized(&d), SymMatrix::identity(2).scaled(0.5));
    }

    #[test]
    fn covariance_is_psd() {
        let text = "1,2,3\n4,x,6\n7,8\n0,0,1\n2,2,2\n";
        let d = parse_csv(text, b',', false, "mem").unwrap();
        let a = covariance(&d);
        assert!(a.is_exactly_symmetric());
        let s = eig_sym(&a).unwrap();
        assert!(s.values()[2] >= -1e-10 * a.trace());
        assert!(d.column_means().iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn select_rank_examples() {
        let s = eig_sym(&SymMatrix::from_diag(&[1.0, 0.0, 0.0])).unwrap();
        for f in [0.1, 0.5, 1.0] {
            assert_eq!(select_rank(&s, f).unwrap().p, 1);
        }
        let s = eig_sym(&SymMatrix::from_diag(&[3.0, -4.0, 0.0])).unwrap();
        // 16/25 of the energy in the first |λ|
        assert_eq!(select_rank(&s, 0.79).unwrap().p, 1);
        assert_eq!(select_rank(&s, 0.81).unwrap().p, 2);
        assert!(select_rank(&s, 0.0).is_err());
        assert!(select_rank(&s, 1.5).is_err());
    }

    #[test]
    fn select_rank_is_monotone() {
        let s = eig_sym(&SymMatrix::from_diag(&[5.0, 3.0, 2.0, 1.0, 0.5])).unwrap();
        let mut last = 0;
        for i in 1..=100 {
            let sel = select_rank(&s, i as f64 / 100.0).unwrap();
            assert!(sel.p >= last);
            assert!(sel.achieved_fraction >= sel.energy_fraction);
            last = sel.p;
        }
    }
}
